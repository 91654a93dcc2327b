//! Sampled trajectories, their phase log, and the on-disk formats.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{ExportError, ModelError};
use crate::integrator::SolverConfig;
use crate::model::{DerivedObservables, MeanFieldState, StateVector};
use crate::params::PhysicalParameters;
use crate::protocol::{Phase, ScheduleConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub kappa: f64,
    pub state: MeanFieldState,
    pub obs: DerivedObservables,
}

impl Sample {
    pub fn new(t: f64, kappa: f64, y: &StateVector, params: &PhysicalParameters) -> Result<Self, ModelError> {
        let state = MeanFieldState::from_vector(y);
        Ok(Self { t, kappa, state, obs: DerivedObservables::compute(&state, kappa, params)? })
    }
}

/// One phase transition. `sample_index` points at the first sample that
/// belongs to the new phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseLogEntry {
    #[serde(rename = "t_s")]
    pub t: f64,
    pub phase: Phase,
    pub cycle_index: usize,
    #[serde(rename = "kappa_rad_s")]
    pub kappa: f64,
    pub sample_index: usize,
}

/// Everything needed to repeat a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub method: String,
    pub params: PhysicalParameters,
    pub schedule: ScheduleConfig,
    pub solver: SolverConfig,
    /// Charging interval actually used, s.
    pub t_charge_s: f64,
    pub initial_state: MeanFieldState,
    pub conventions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub phase_log: Vec<PhaseLogEntry>,
    pub manifest: Manifest,
}

pub const CSV_COLUMNS: [&str; 14] = [
    "t_s",
    "kappa_rad_s",
    "p1",
    "p2",
    "p3",
    "p4",
    "p5",
    "n_ph",
    "coh_re",
    "coh_im",
    "corr",
    "energy_j",
    "p_ins_w",
    "p_out_w",
];

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn n_ph(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.state.n_ph).collect()
    }

    pub fn p_out(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.obs.p_out).collect()
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory always holds its initial sample")
    }

    /// Largest |Σp − 1| over all samples.
    pub fn max_trace_drift(&self) -> f64 {
        self.samples.iter().map(|s| (s.state.trace() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Writes the time series. Floats use Rust's shortest round-trip
    /// formatting, so reading back is exact.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ExportError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_COLUMNS)?;
        for s in &self.samples {
            let st = &s.state;
            let row = [
                s.t,
                s.kappa,
                st.p[0],
                st.p[1],
                st.p[2],
                st.p[3],
                st.p[4],
                st.n_ph,
                st.coh.re,
                st.coh.im,
                st.corr,
                s.obs.energy,
                s.obs.p_ins,
                s.obs.p_out,
            ];
            out.write_record(row.iter().map(|v| v.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads samples written by [`Trajectory::write_csv`]. `k_c` is not
    /// stored and is recomputed from κ and `kappa_0`.
    pub fn read_csv<R: Read>(r: R, kappa_0: f64) -> Result<Vec<Sample>, ExportError> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.iter().ne(CSV_COLUMNS.iter().copied()) {
            return Err(ExportError::Format { line: 1, message: format!("unexpected header {headers:?}") });
        }
        let mut samples = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let mut v = [0.0; CSV_COLUMNS.len()];
            for (slot, field) in v.iter_mut().zip(rec.iter()) {
                *slot = field.parse().map_err(|e| ExportError::Format {
                    line: i + 2,
                    message: format!("`{field}`: {e}"),
                })?;
            }
            let y: StateVector = [v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10]];
            samples.push(Sample {
                t: v[0],
                kappa: v[1],
                state: MeanFieldState::from_vector(&y),
                obs: DerivedObservables {
                    energy: v[11],
                    p_ins: v[12],
                    kappa: v[1],
                    k_c: if v[1] == kappa_0 { 0.0 } else { v[1] / kappa_0 - 1.0 },
                    p_out: v[13],
                },
            });
        }
        Ok(samples)
    }

    /// Phase log as JSON lines.
    pub fn write_phase_log<W: Write>(&self, mut w: W) -> Result<(), ExportError> {
        for e in &self.phase_log {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_phase_log<R: BufRead>(r: R) -> Result<Vec<PhaseLogEntry>, ExportError> {
        let mut out = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| ExportError::Format {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Ok(out)
    }
}
