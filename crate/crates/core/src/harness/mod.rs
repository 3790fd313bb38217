//! Monte Carlo studies: normalized-MSE sweeps, empirical optimal scales and
//! selector performance, with CSV output.

mod config;
mod output;
mod study;

use std::path::PathBuf;

pub use config::{
    HjConfig, NpiConfig, OracleConfig, OutputConfig, RegionConfig, SelectorConfig, Study, StudyConfig,
    MIN_REPLICATES,
};
pub use output::{emit_csv, read_csv, to_csv_string, CsvTable, ScalingTable};
pub use study::{
    mean_and_se, mse_study, optimal_scaling_study, phi_study, with_threads, MseRow, MseTable, PhiRow,
    PhiTable, ScalingRow,
};

use crate::error::Result;

/// Runs whatever the study's outputs ask for and writes them. On failure
/// every file written so far is removed.
pub fn run_study(study: &Study) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let result = run_inner(study, &mut written);
    if result.is_err() {
        for p in &written {
            let _ = std::fs::remove_file(p);
        }
    }
    result.map(|_| written)
}

fn run_inner(study: &Study, written: &mut Vec<PathBuf>) -> Result<()> {
    let out = &study.outputs;
    let needs_sweep = out.mse_csv.is_some()
        || out.scaling_csv.is_some()
        || (out.phi_csv.is_some() && !study.grid.is_empty());
    let optima = if needs_sweep {
        let (table, optima) = optimal_scaling_study(study)?;
        if let Some(p) = &out.mse_csv {
            emit_csv(&table, p)?;
            written.push(p.clone());
        }
        if let Some(p) = &out.scaling_csv {
            emit_csv(&ScalingTable { rows: optima.clone() }, p)?;
            written.push(p.clone());
        }
        optima
    } else {
        Vec::new()
    };
    if let Some(p) = &out.phi_csv {
        let table = phi_study(study, &optima)?;
        emit_csv(&table, p)?;
        written.push(p.clone());
    }
    Ok(())
}
