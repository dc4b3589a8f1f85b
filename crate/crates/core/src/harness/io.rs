//! Sequence JSON and trace CSV.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scenario::complex_entries;
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::mm::SolveTrace;
use crate::model::Sequence;

/// `{"N": .., "Nt": .., "entries": [[re, im], ..]}` with entries row-major
/// (sample-major, antenna-minor). Designs also carry their solve summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceDocument {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "Nt")]
    pub nt: usize,
    pub entries: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub criterion: String,
    pub mode: String,
    pub accelerated: bool,
    pub seed: u64,
    pub tol: f64,
    pub objective: f64,
    pub initial_objective: f64,
    pub termination: String,
    pub iterations: usize,
    pub update_evals: usize,
    pub objective_evals: usize,
}

impl SequenceDocument {
    pub fn from_sequence(u: &Sequence) -> Self {
        let m = u.matrix();
        let entries = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| [m[(i, j)].re, m[(i, j)].im])
            .collect();
        Self { n: m.nrows(), nt: m.ncols(), entries, design: None }
    }

    pub fn sequence(&self) -> Result<Sequence> {
        if self.entries.len() != self.n * self.nt {
            return Err(Error::invalid(format!(
                "sequence document has {} entries, expected N*Nt = {}",
                self.entries.len(),
                self.n * self.nt
            )));
        }
        Sequence::new(CMatrix::from_row_slice(self.n, self.nt, &complex_entries(&self.entries)))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        Ok(())
    }
}

/// One row per recorded iterate: `iteration,objective,step_norm,update_evals`.
/// Row 0 is the initial point.
pub fn write_trace_csv<W: Write>(trace: &SolveTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "objective", "step_norm", "update_evals"])?;
    for (i, obj) in trace.objectives.iter().enumerate() {
        let (step, evals) = if i == 0 {
            (String::new(), "0".to_string())
        } else {
            (trace.step_norms[i - 1].to_string(), trace.update_counts[i - 1].to_string())
        };
        w.write_record([i.to_string(), obj.to_string(), step, evals])?;
    }
    w.flush()?;
    Ok(())
}
