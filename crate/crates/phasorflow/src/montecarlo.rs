//! Parallel driver for the Monte Carlo accuracy study.

use phasorflow_core::experiments::{monte_carlo_cell, ErrorRecord, MonteCarloConfig};
use phasorflow_core::Network;
use rayon::prelude::*;

use crate::error::{Context, Error, Result};

/// Parses `lo:hi:step` into the inclusive list `lo, lo + step, ..., hi`.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("grid '{s}' must be lo:hi:step with 0 <= lo <= hi and step > 0"));
    let parts: Vec<f64> = s
        .split(':')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad())?;
    let [lo, hi, step] = parts[..] else { return Err(bad()) };
    if !(lo >= 0.0 && hi >= lo && step > 0.0 && hi.is_finite()) {
        return Err(bad());
    }
    // tolerate accumulated rounding in hi / step
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + i as f64 * step).collect())
}

/// Runs every cell on a pool of `workers` threads (all cores when `None`).
/// Records come back in cell order whatever the completion order.
pub fn run_parallel(base: &Network, cfg: &MonteCarloConfig, workers: Option<usize>) -> Result<Vec<ErrorRecord>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::Config("--workers must be at least 1".into()));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let cells: Vec<Vec<ErrorRecord>> = pool.install(|| {
        (0..cfg.n_cells())
            .into_par_iter()
            .map(|cell| monte_carlo_cell(base, cfg, cell).context(|| format!("Monte Carlo cell {cell}")))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(cells.into_iter().flatten().collect())
}

pub fn records_csv(records: &[ErrorRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "dr_max",
        "di_max",
        "cell",
        "scenario",
        "converged",
        "eps_mag",
        "eps_angle_deg",
        "eps_power",
        "substation_power",
    ])?;
    for r in records {
        w.write_record([
            r.dr_max.to_string(),
            r.di_max.to_string(),
            r.cell.to_string(),
            r.scenario.to_string(),
            r.converged.to_string(),
            r.eps_mag.to_string(),
            r.eps_angle_deg.to_string(),
            r.eps_power.to_string(),
            r.substation_power.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))
}
