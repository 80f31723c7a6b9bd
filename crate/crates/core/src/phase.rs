//! Parameter sweeps, dynamical phase boundaries and size scaling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::config::{Engine, RunConfig};
use crate::dtwa::{default_trajectories, run_dtwa, Axis, DtwaSettings};
use crate::error::{Error, Result};
use crate::exact::{evolve_exact, initial_product_state};
use crate::fit::{fit_log_divergence, fit_power_law, FitResult};
use crate::lattice::{mean_coupling, CouplingModel, DecayExponent, Lattice};
use crate::oracles::{ising_series_for, oat_series};
use crate::rng::derive_seed;
use crate::series::{fmt_num, fmt_opt, MomentSeries};
use crate::squeezing::{summarize, to_db, SqueezingSummary, SummaryFlags};

const DILUTION_LABEL: u64 = 0x6469_6c75_7465;

/// One point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub alpha: DecayExponent,
    pub jz_over_jperp: f64,
    pub size: usize,
    pub filling: f64,
}

impl CellSpec {
    /// Sampling seed. It does not depend on `J_z/J_perp`, so every cell of
    /// a slice shares its initial samples.
    pub fn seed(&self, master: u64) -> u64 {
        derive_seed(master, &[self.alpha.value().to_bits(), self.size as u64, self.filling.to_bits()])
    }

    pub fn dilution_seed(&self, master: u64) -> u64 {
        derive_seed(master, &[DILUTION_LABEL, self.size as u64, self.filling.to_bits()])
    }
}

pub fn cells(config: &RunConfig) -> Vec<CellSpec> {
    let mut out = Vec::new();
    for &alpha in &config.alphas {
        for &size in &config.sizes {
            for &filling in &config.fillings {
                for &jz in &config.jz_over_jperp {
                    out.push(CellSpec {
                        alpha,
                        jz_over_jperp: jz,
                        size,
                        filling,
                    });
                }
            }
        }
    }
    out
}

pub fn cell_lattice(config: &RunConfig, cell: &CellSpec) -> Result<Lattice> {
    let full = Lattice::cubic(config.dims, cell.size, config.boundary)?;
    full.dilute(cell.filling, cell.dilution_seed(config.seed))
}

/// Model of a cell. The Ising engine drops the transverse coupling and keeps
/// `J_z = (J_z/J_perp) * J_perp`.
pub fn cell_model(config: &RunConfig, cell: &CellSpec, lattice: &Lattice) -> CouplingModel {
    let jz = cell.jz_over_jperp * config.j_perp;
    let jp = if config.engine == Engine::Ising { 0.0 } else { config.j_perp };
    CouplingModel::on_lattice(lattice, cell.alpha, jp, jz)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub spec: CellSpec,
    pub n_spins: usize,
    pub engine: Engine,
    pub seed: u64,
    pub trajectories: Option<usize>,
    pub summary: Option<SqueezingSummary>,
    pub error: Option<String>,
}

impl CellResult {
    pub fn is_ok(&self) -> bool {
        self.error.is_none() && self.summary.is_some()
    }
}

/// Evaluate one cell and return its full time series as well.
pub fn run_cell(config: &RunConfig, cell: &CellSpec) -> Result<(MomentSeries, SqueezingSummary, Option<usize>)> {
    let lattice = cell_lattice(config, cell)?;
    let model = cell_model(config, cell, &lattice);
    let grid = config.time_grid(&model)?;
    let n = lattice.len();
    let (series, traj) = match config.engine {
        Engine::Dtwa => {
            let traj = config.trajectories.unwrap_or_else(|| default_trajectories(n));
            let settings = DtwaSettings {
                trajectories: traj,
                master_seed: cell.seed(config.seed),
                tol: config.tolerance(),
                axis: Axis::X,
            };
            (run_dtwa(&model, &settings, &grid)?, Some(traj))
        }
        Engine::Exact => {
            let state = initial_product_state(n, Axis::X)?;
            (evolve_exact(&model, &state, &grid, config.tolerance())?, None)
        }
        Engine::Oat => {
            let chi = (model.j_z - model.j_perp) * mean_coupling(model.weights())?;
            let mut s = oat_series(n, chi, &grid)?;
            s.anisotropy = model.anisotropy();
            (s, None)
        }
        Engine::Ising => (ising_series_for(&lattice, &model, &grid)?, None),
    };
    let summary = summarize(&series)?;
    Ok((series, summary, traj))
}

fn evaluate(config: &RunConfig, cell: &CellSpec) -> CellResult {
    let n_spins = cell_lattice(config, cell).map(|l| l.len()).unwrap_or(0);
    let (summary, traj, error) = match run_cell(config, cell) {
        Ok((_, s, t)) => (Some(s), t, None),
        Err(e) => (None, None, Some(format!("{}: {e}", e.kind()))),
    };
    CellResult {
        spec: *cell,
        n_spins,
        engine: config.engine,
        seed: cell.seed(config.seed),
        trajectories: traj,
        summary,
        error,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<CellResult>,
}

impl SweepResult {
    /// Cells sharing `(alpha, size, filling)`, in the configured J_z order.
    pub fn slices(&self) -> Vec<Vec<&CellResult>> {
        let mut keys: Vec<(u64, usize, u64)> = Vec::new();
        let mut groups: BTreeMap<(u64, usize, u64), Vec<&CellResult>> = BTreeMap::new();
        for c in &self.cells {
            let key = (c.spec.alpha.value().to_bits(), c.spec.size, c.spec.filling.to_bits());
            if !groups.contains_key(&key) {
                keys.push(key);
            }
            groups.entry(key).or_default().push(c);
        }
        keys.into_iter().map(|k| groups.remove(&k).unwrap()).collect()
    }
}

/// Evaluate every cell. Failures are recorded per cell.
pub fn run_sweep(config: &RunConfig) -> Result<SweepResult> {
    config.validate()?;
    let specs = cells(config);
    let cells = specs.par_iter().map(|c| evaluate(config, c)).collect();
    Ok(SweepResult { cells })
}

pub const SUMMARY_COLUMNS: [&str; 21] = [
    "alpha",
    "jz_over_jperp",
    "N",
    "t_opt",
    "tau_opt",
    "xi2_opt",
    "xi2_opt_dB",
    "S2_min_norm",
    "flags",
    "t_opt_err",
    "xi2_opt_err",
    "S2_min_norm_err",
    "S2_min",
    "L",
    "filling",
    "engine",
    "seed",
    "n_traj",
    "status",
    "error",
    "schema",
];

pub const SCHEMA_VERSION: u32 = 1;

pub fn summary_row(c: &CellResult) -> Vec<String> {
    let s = c.summary.as_ref();
    let f = |get: fn(&SqueezingSummary) -> f64| s.map(|s| fmt_num(get(s))).unwrap_or_default();
    vec![
        c.spec.alpha.to_string(),
        fmt_num(c.spec.jz_over_jperp),
        c.n_spins.to_string(),
        f(|s| s.t_opt),
        s.map(|s| fmt_opt(s.tau_opt)).unwrap_or_default(),
        f(|s| s.xi2_opt),
        f(|s| to_db(s.xi2_opt)),
        f(|s| s.s2_min_norm),
        s.map(|s| s.flags.label()).unwrap_or_default(),
        f(|s| s.t_opt_err),
        f(|s| s.xi2_opt_err),
        f(|s| s.s2_min_norm_err),
        f(|s| s.s2_min),
        c.spec.size.to_string(),
        fmt_num(c.spec.filling),
        c.engine.to_string(),
        c.seed.to_string(),
        c.trajectories.map(|t| t.to_string()).unwrap_or_default(),
        if c.is_ok() { "ok" } else { "failed" }.to_string(),
        c.error.clone().unwrap_or_default(),
        SCHEMA_VERSION.to_string(),
    ]
}

fn parse_row(headers: &csv::StringRecord, rec: &csv::StringRecord) -> Result<CellResult> {
    let get = |name: &str| -> Result<&str> {
        headers
            .iter()
            .position(|h| h == name)
            .and_then(|i| rec.get(i))
            .ok_or_else(|| Error::Parse(format!("missing column `{name}`")))
    };
    let num = |name: &str| -> Result<f64> {
        get(name)?
            .parse::<f64>()
            .map_err(|_| Error::Parse(format!("bad value in column `{name}`")))
    };
    let opt = |name: &str| -> Result<Option<f64>> {
        let v = get(name)?;
        if v.is_empty() {
            Ok(None)
        } else {
            num(name).map(Some)
        }
    };
    let int = |name: &str| -> Result<u64> {
        get(name)?
            .parse::<u64>()
            .map_err(|_| Error::Parse(format!("bad value in column `{name}`")))
    };
    let ok = get("status")? == "ok";
    let n_spins = int("N")? as usize;
    let summary = if ok {
        Some(SqueezingSummary {
            n_spins,
            t_opt: num("t_opt")?,
            tau_opt: opt("tau_opt")?,
            xi2_opt: num("xi2_opt")?,
            s2_min: num("S2_min")?,
            s2_min_norm: num("S2_min_norm")?,
            t_opt_err: num("t_opt_err")?,
            xi2_opt_err: num("xi2_opt_err")?,
            s2_min_norm_err: num("S2_min_norm_err")?,
            flags: SummaryFlags::parse(get("flags")?),
        })
    } else {
        None
    };
    let error = get("error")?;
    Ok(CellResult {
        spec: CellSpec {
            alpha: get("alpha")?.parse()?,
            jz_over_jperp: num("jz_over_jperp")?,
            size: int("L")? as usize,
            filling: num("filling")?,
        },
        n_spins,
        engine: get("engine")?.parse()?,
        seed: int("seed")?,
        trajectories: opt("n_traj")?.map(|v| v as usize),
        summary,
        error: (!error.is_empty() || !ok).then(|| error.to_string()),
    })
}

pub fn write_summary_csv(path: &Path, rows: &[&CellResult]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(SUMMARY_COLUMNS)?;
    for c in rows {
        w.write_record(summary_row(c))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<CellResult>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    r.records().map(|rec| parse_row(&headers, &rec?)).collect()
}

pub fn slice_file_name(alpha: DecayExponent, n_spins: usize) -> String {
    format!("slice_alpha{alpha}_N{n_spins}.csv")
}

/// Run a sweep into `dir`, reusing successful cells already present in
/// slice files there. Cell results do not depend on evaluation order, so a
/// resumed sweep writes the same bytes as an uninterrupted one.
pub fn run_sweep_to_dir(config: &RunConfig, dir: &Path) -> Result<(SweepResult, Vec<String>)> {
    config.validate()?;
    fs::create_dir_all(dir)?;
    let mut done: BTreeMap<String, CellResult> = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        if name.starts_with("slice_") && name.ends_with(".csv") {
            for c in read_summary_csv(&path)? {
                if c.is_ok() && c.engine == config.engine {
                    done.insert(cell_key(&c.spec), c);
                }
            }
        }
    }
    let specs = cells(config);
    let results: Vec<CellResult> = specs
        .par_iter()
        .map(|c| match done.get(&cell_key(c)) {
            Some(prev) if prev.seed == c.seed(config.seed) => prev.clone(),
            _ => evaluate(config, c),
        })
        .collect();
    let sweep = SweepResult { cells: results };
    let mut files = Vec::new();
    for slice in sweep.slices() {
        let first = slice[0];
        let name = slice_file_name(first.spec.alpha, first.n_spins);
        write_summary_csv(&dir.join(&name), &slice)?;
        files.push(name);
    }
    Ok((sweep, files))
}

fn cell_key(c: &CellSpec) -> String {
    format!("{}|{}|{}|{}", c.alpha, fmt_num(c.jz_over_jperp), c.size, fmt_num(c.filling))
}

/// One point of a J_z slice used by boundary detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub jz_over_jperp: f64,
    pub s2_min_norm: f64,
    /// Optimal time, in `tau` units when available.
    pub t_opt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryEstimate {
    /// Location of the interior local minimum of the normalized `S2_min`.
    pub jz_crit: f64,
    /// Collective-side end of the largest jump in the optimal time.
    pub jz_crit_jump: Option<f64>,
    /// Both estimates within one grid step of each other.
    pub agree: bool,
    /// Grid spacing at the estimate.
    pub resolution: f64,
}

pub const MIN_BOUNDARY_POINTS: usize = 5;

/// Boundary between collective and Ising-limited squeezing on a slice at
/// fixed alpha and N. Only points with `J_z/J_perp < 1` are considered.
pub fn detect_boundary(points: &[BoundaryPoint]) -> Result<BoundaryEstimate> {
    let mut pts: Vec<BoundaryPoint> = points
        .iter()
        .copied()
        .filter(|p| p.jz_over_jperp < 1.0 && p.s2_min_norm.is_finite())
        .collect();
    pts.sort_by(|a, b| a.jz_over_jperp.total_cmp(&b.jz_over_jperp));
    if pts.len() < MIN_BOUNDARY_POINTS {
        return Err(Error::invalid(format!(
            "boundary detection needs at least {MIN_BOUNDARY_POINTS} points below the isotropic point"
        )));
    }
    let s: Vec<f64> = pts.iter().map(|p| p.s2_min_norm).collect();
    let mut best: Option<usize> = None;
    for i in 1..pts.len() - 1 {
        if s[i] < s[i - 1] && s[i] < s[i + 1] && best.is_none_or(|b| s[i] < s[b]) {
            best = Some(i);
        }
    }
    let i = best.ok_or_else(|| Error::BoundaryNotFound("S2_min has no interior local minimum".into()))?;
    let jz_crit = pts[i].jz_over_jperp;
    let resolution = 0.5 * (pts[i + 1].jz_over_jperp - pts[i - 1].jz_over_jperp);

    let mut jump: Option<(usize, f64)> = None;
    for k in 0..pts.len() - 1 {
        let d = (pts[k + 1].t_opt - pts[k].t_opt).abs();
        if d.is_finite() && jump.is_none_or(|(_, b)| d > b) {
            jump = Some((k, d));
        }
    }
    let jz_crit_jump = jump.map(|(k, _)| {
        if pts[k + 1].t_opt >= pts[k].t_opt {
            pts[k + 1].jz_over_jperp
        } else {
            pts[k].jz_over_jperp
        }
    });
    let agree = jz_crit_jump.is_some_and(|j| (j - jz_crit).abs() <= resolution * (1.0 + 1e-9));
    Ok(BoundaryEstimate {
        jz_crit,
        jz_crit_jump,
        agree,
        resolution,
    })
}

pub fn boundary_points(slice: &[&CellResult]) -> Vec<BoundaryPoint> {
    slice
        .iter()
        .filter_map(|c| {
            c.summary.as_ref().map(|s| BoundaryPoint {
                jz_over_jperp: c.spec.jz_over_jperp,
                s2_min_norm: s.s2_min_norm,
                t_opt: s.tau_opt.unwrap_or(s.t_opt),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceBoundary {
    pub alpha: DecayExponent,
    pub size: usize,
    pub filling: f64,
    pub n_spins: usize,
    pub estimate: Option<BoundaryEstimate>,
    pub error: Option<String>,
}

pub fn sweep_boundaries(sweep: &SweepResult) -> Vec<SliceBoundary> {
    sweep
        .slices()
        .into_iter()
        .map(|slice| {
            let first = slice[0];
            let (estimate, error) = match detect_boundary(&boundary_points(&slice)) {
                Ok(e) => (Some(e), None),
                Err(e) => (None, Some(format!("{}: {e}", e.kind()))),
            };
            SliceBoundary {
                alpha: first.spec.alpha,
                size: first.spec.size,
                filling: first.spec.filling,
                n_spins: first.n_spins,
                estimate,
                error,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledFit {
    pub alpha: DecayExponent,
    pub jz_over_jperp: Option<f64>,
    pub filling: f64,
    pub sizes: Vec<usize>,
    pub fit: FitResult,
}

/// Log-divergence fit of the boundary against N for every alpha with at
/// least three located boundaries.
pub fn boundary_fits(boundaries: &[SliceBoundary]) -> Vec<LabeledFit> {
    let mut out = Vec::new();
    let mut keys: Vec<(u64, u64)> = Vec::new();
    for b in boundaries {
        let k = (b.alpha.value().to_bits(), b.filling.to_bits());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    for (ak, fk) in keys {
        let group: Vec<&SliceBoundary> = boundaries
            .iter()
            .filter(|b| b.alpha.value().to_bits() == ak && b.filling.to_bits() == fk && b.estimate.is_some())
            .collect();
        if group.len() < 3 {
            continue;
        }
        let n: Vec<f64> = group.iter().map(|b| b.n_spins as f64).collect();
        let j: Vec<f64> = group.iter().map(|b| b.estimate.unwrap().jz_crit).collect();
        if let Ok(fit) = fit_log_divergence(&n, &j, None) {
            out.push(LabeledFit {
                alpha: group[0].alpha,
                jz_over_jperp: None,
                filling: group[0].filling,
                sizes: group.iter().map(|b| b.size).collect(),
                fit,
            });
        }
    }
    out
}

/// Power-law fit of `xi2_opt` against N for every `(alpha, J_z, filling)`
/// with at least three successful sizes.
pub fn scaling_fits(sweep: &SweepResult, weighted: bool) -> Vec<LabeledFit> {
    let mut groups: Vec<((u64, u64, u64), Vec<&CellResult>)> = Vec::new();
    for c in sweep.cells.iter().filter(|c| c.is_ok()) {
        let key = (
            c.spec.alpha.value().to_bits(),
            c.spec.jz_over_jperp.to_bits(),
            c.spec.filling.to_bits(),
        );
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(c),
            None => groups.push((key, vec![c])),
        }
    }
    groups
        .into_iter()
        .filter(|(_, v)| v.len() >= 3)
        .filter_map(|(_, v)| {
            let n: Vec<f64> = v.iter().map(|c| c.n_spins as f64).collect();
            let y: Vec<f64> = v.iter().map(|c| c.summary.as_ref().unwrap().xi2_opt).collect();
            let e: Vec<f64> = v.iter().map(|c| c.summary.as_ref().unwrap().xi2_opt_err).collect();
            let use_w = weighted && e.iter().all(|x| *x > 0.0);
            fit_power_law(&n, &y, use_w.then_some(e.as_slice()))
                .ok()
                .map(|fit| LabeledFit {
                    alpha: v[0].spec.alpha,
                    jz_over_jperp: Some(v[0].spec.jz_over_jperp),
                    filling: v[0].spec.filling,
                    sizes: v.iter().map(|c| c.spec.size).collect(),
                    fit,
                })
        })
        .collect()
}

pub const BOUNDARY_COLUMNS: [&str; 9] = [
    "alpha",
    "L",
    "N",
    "filling",
    "jz_crit",
    "jz_crit_jump",
    "agree",
    "resolution",
    "status",
];

pub fn write_boundaries_csv(path: &Path, rows: &[SliceBoundary]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(BOUNDARY_COLUMNS)?;
    for b in rows {
        let e = b.estimate.as_ref();
        w.write_record([
            b.alpha.to_string(),
            b.size.to_string(),
            b.n_spins.to_string(),
            fmt_num(b.filling),
            e.map(|e| fmt_num(e.jz_crit)).unwrap_or_default(),
            e.and_then(|e| e.jz_crit_jump).map(fmt_num).unwrap_or_default(),
            e.map(|e| e.agree.to_string()).unwrap_or_default(),
            e.map(|e| fmt_num(e.resolution)).unwrap_or_default(),
            b.error.clone().unwrap_or_else(|| "ok".into()),
        ])?;
    }
    w.flush()?;
    Ok(())
}
