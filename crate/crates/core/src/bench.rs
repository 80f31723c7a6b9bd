//! DTWA against exact evolution on identical small lattices.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::config::{Engine, RunConfig};
use crate::error::{Error, Result};
use crate::lattice::DecayExponent;
use crate::phase::{cells, run_cell, CellSpec};
use crate::series::{fmt_num, fmt_opt, MomentSeries};
use crate::squeezing::{coherent_s2, to_db, SqueezingSummary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCase {
    pub spec: CellSpec,
    pub n_spins: usize,
    pub dtwa: SqueezingSummary,
    pub exact: SqueezingSummary,
    pub dtwa_series: MomentSeries,
    pub exact_series: MomentSeries,
}

impl BenchCase {
    /// DTWA minus exact, in dB of squeezing.
    pub fn d_xi2_opt_db(&self) -> f64 {
        to_db(self.dtwa.xi2_opt) - to_db(self.exact.xi2_opt)
    }

    pub fn d_s2_min_norm(&self) -> f64 {
        self.dtwa.s2_min_norm - self.exact.s2_min_norm
    }

    /// Statistical error of the DTWA optimum in dB.
    pub fn xi2_opt_db_err(&self) -> f64 {
        10.0 / std::f64::consts::LN_10 * self.dtwa.xi2_opt_err / self.dtwa.xi2_opt
    }
}

/// Run both engines on every cell of `config`. The DTWA side uses the
/// configured tolerance, the exact side its own default.
pub fn run_bench(config: &RunConfig) -> Result<Vec<BenchCase>> {
    let dtwa_cfg = RunConfig {
        engine: Engine::Dtwa,
        ..config.clone()
    };
    let exact_cfg = RunConfig {
        engine: Engine::Exact,
        tol: None,
        ..config.clone()
    };
    exact_cfg.validate()?;
    dtwa_cfg.validate()?;
    cells(config)
        .par_iter()
        .map(|cell| {
            let (exact_series, exact, _) = run_cell(&exact_cfg, cell)?;
            let (dtwa_series, dtwa, _) = run_cell(&dtwa_cfg, cell)?;
            Ok(BenchCase {
                spec: *cell,
                n_spins: exact.n_spins,
                dtwa,
                exact,
                dtwa_series,
                exact_series,
            })
        })
        .collect()
}

pub const BENCH_SUMMARY_COLUMNS: [&str; 14] = [
    "alpha",
    "jz_over_jperp",
    "N",
    "xi2_opt_dB_dtwa",
    "xi2_opt_dB_exact",
    "d_xi2_opt_dB",
    "err_xi2_opt_dB_dtwa",
    "S2_min_norm_dtwa",
    "S2_min_norm_exact",
    "d_S2_min_norm",
    "err_S2_min_norm_dtwa",
    "tau_opt_dtwa",
    "tau_opt_exact",
    "n_traj",
];

pub const BENCH_SERIES_COLUMNS: [&str; 10] = [
    "t",
    "tau",
    "xi2_dtwa",
    "err_xi2_dtwa",
    "xi2_exact",
    "d_xi2_dB",
    "S2_norm_dtwa",
    "err_S2_norm_dtwa",
    "S2_norm_exact",
    "d_S2_norm",
];

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?)
}

pub fn write_bench_summary(path: &Path, cases: &[BenchCase]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(BENCH_SUMMARY_COLUMNS)?;
    for c in cases {
        w.write_record([
            c.spec.alpha.to_string(),
            fmt_num(c.spec.jz_over_jperp),
            c.n_spins.to_string(),
            fmt_num(c.dtwa.xi2_opt_db()),
            fmt_num(c.exact.xi2_opt_db()),
            fmt_num(c.d_xi2_opt_db()),
            fmt_num(c.xi2_opt_db_err()),
            fmt_num(c.dtwa.s2_min_norm),
            fmt_num(c.exact.s2_min_norm),
            fmt_num(c.d_s2_min_norm()),
            fmt_num(c.dtwa.s2_min_norm_err),
            fmt_opt(c.dtwa.tau_opt),
            fmt_opt(c.exact.tau_opt),
            c.dtwa_series.trajectories.map(|t| t.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bench_series(path: &Path, case: &BenchCase) -> Result<()> {
    let (d, e) = (&case.dtwa_series, &case.exact_series);
    if d.len() != e.len() {
        return Err(Error::DimensionMismatch {
            expected: e.len(),
            actual: d.len(),
        });
    }
    let s0 = coherent_s2(case.n_spins);
    let mut w = writer(path)?;
    w.write_record(BENCH_SERIES_COLUMNS)?;
    for (i, (p, q)) in d.points.iter().zip(&e.points).enumerate() {
        let d_db = match (p.xi2, q.xi2) {
            (Some(a), Some(b)) => Some(to_db(a) - to_db(b)),
            _ => None,
        };
        w.write_record([
            fmt_num(d.times[i]),
            fmt_opt(d.tau(i)),
            fmt_opt(p.xi2),
            fmt_opt(p.err.and_then(|e| e.xi2)),
            fmt_opt(q.xi2),
            fmt_opt(d_db),
            fmt_num(p.s2 / s0),
            fmt_opt(p.err.map(|e| e.s2 / s0)),
            fmt_num(q.s2 / s0),
            fmt_num((p.s2 - q.s2) / s0),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn bench_file_name(alpha: DecayExponent, jz_over_jperp: f64) -> String {
    format!("bench_alpha{alpha}_jz{}.csv", fmt_num(jz_over_jperp))
}
