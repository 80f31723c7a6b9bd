//! Discrete truncated Wigner approximation.
//!
//! Each trajectory starts from a discrete phase-space sample of the
//! polarized product state: the component along the polarization axis is
//! `+1/2` and each transverse component is `+-1/2` with equal probability.
//! The classical spins then precess in their mean fields,
//! `ds_i/dt = B_i x s_i`, and collective moments are averaged over
//! trajectories.
//!
//! Every sampled spin has `s_x^2 + s_y^2 + s_z^2 = 3/4`, which is the quantum
//! value of `s.s` for spin 1/2, so the trajectory average of `|S|^2` is an
//! estimator of `<S^2>` with no correction term:
//! `S^2 = sum_{i != j} s_i.s_j + 3N/4` holds as an operator identity and
//! sample by sample.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::lattice::CouplingModel;
use crate::ode::{Dopri5, IntegrationStats, OdeSystem};
use crate::rng::stream_rng;
use crate::series::{MomentPoint, MomentSeries, PointErrors};
use crate::squeezing::squeezing_param;

/// Initial polarization axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    #[default]
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn unit(self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self.index()] = 1.0;
        v
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(Error::invalid(format!("unknown axis `{other}`"))),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(["x", "y", "z"][self.index()])
    }
}

/// Classical spin vectors of one trajectory, stored component-major:
/// all x components, then all y, then all z.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState {
    n: usize,
    data: Vec<f64>,
}

impl TrajectoryState {
    pub fn from_spins(spins: &[[f64; 3]]) -> Self {
        let n = spins.len();
        let mut data = vec![0.0; 3 * n];
        for (i, s) in spins.iter().enumerate() {
            for a in 0..3 {
                data[a * n + i] = s[a];
            }
        }
        TrajectoryState { n, data }
    }

    #[cfg(test)]
    pub(crate) fn from_raw(n: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), 3 * n);
        TrajectoryState { n, data }
    }

    /// Every spin exactly along `axis` with length 1/2 (no sampling noise).
    pub fn polarized(n: usize, axis: Axis) -> Self {
        let mut s = [0.0; 3];
        s[axis.index()] = 0.5;
        Self::from_spins(&vec![s; n])
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn spin(&self, i: usize) -> [f64; 3] {
        [self.data[i], self.data[self.n + i], self.data[2 * self.n + i]]
    }

    pub fn total(&self) -> [f64; 3] {
        total_spin(self.n, &self.data)
    }

    pub fn norms(&self) -> Vec<f64> {
        spin_norms(self.n, &self.data)
    }
}

fn total_spin(n: usize, data: &[f64]) -> [f64; 3] {
    [
        data[..n].iter().sum(),
        data[n..2 * n].iter().sum(),
        data[2 * n..].iter().sum(),
    ]
}

fn spin_norms(n: usize, data: &[f64]) -> Vec<f64> {
    (0..n)
        .map(|i| (data[i].powi(2) + data[n + i].powi(2) + data[2 * n + i].powi(2)).sqrt())
        .collect()
}

/// Discrete Wigner sample of the state polarized along `+axis`.
pub fn sample_initial_trajectory<R: Rng + ?Sized>(n: usize, axis: Axis, rng: &mut R) -> TrajectoryState {
    let along = axis.index();
    let mut data = vec![0.0; 3 * n];
    for i in 0..n {
        for a in 0..3 {
            data[a * n + i] = if a == along {
                0.5
            } else if rng.random_bool(0.5) {
                0.5
            } else {
                -0.5
            };
        }
    }
    TrajectoryState { n, data }
}

/// `B_i = 2 sum_{j != i} w_ij (J_perp s_x,j, J_perp s_y,j, J_z s_z,j)` written
/// into component-major `fields`. The factor 2 is the ordered pair sum.
fn fields_into(model: &CouplingModel, n: usize, spins: &[f64], fields: &mut [f64]) {
    let w = model.weights();
    let (sx, rest) = spins.split_at(n);
    let (sy, sz) = rest.split_at(n);
    let (bx, rest) = fields.split_at_mut(n);
    let (by, bz) = rest.split_at_mut(n);
    bx.fill(0.0);
    by.fill(0.0);
    bz.fill(0.0);
    let transverse = model.j_perp != 0.0;
    // w is symmetric, so row j doubles as column j and the update is an axpy
    for j in 0..n {
        let row = w.row(j);
        let (xj, yj, zj) = (sx[j], sy[j], sz[j]);
        if transverse {
            for (((x, y), z), &wij) in bx.iter_mut().zip(by.iter_mut()).zip(bz.iter_mut()).zip(row) {
                *x += wij * xj;
                *y += wij * yj;
                *z += wij * zj;
            }
        } else {
            for (z, &wij) in bz.iter_mut().zip(row) {
                *z += wij * zj;
            }
        }
    }
    let fp = 2.0 * model.j_perp;
    let fz = 2.0 * model.j_z;
    bx.iter_mut().chain(by.iter_mut()).for_each(|b| *b *= fp);
    bz.iter_mut().for_each(|b| *b *= fz);
}

fn check_size(state: &TrajectoryState, model: &CouplingModel) -> Result<()> {
    if state.n != model.n_sites() {
        return Err(Error::DimensionMismatch {
            expected: model.n_sites(),
            actual: state.n,
        });
    }
    Ok(())
}

pub fn effective_fields(state: &TrajectoryState, model: &CouplingModel) -> Result<Vec<[f64; 3]>> {
    check_size(state, model)?;
    let n = state.n;
    let mut b = vec![0.0; 3 * n];
    fields_into(model, n, &state.data, &mut b);
    Ok((0..n).map(|i| [b[i], b[n + i], b[2 * n + i]]).collect())
}

fn energy_of(model: &CouplingModel, n: usize, spins: &[f64], scratch: &mut [f64]) -> f64 {
    fields_into(model, n, spins, scratch);
    0.5 * spins.iter().zip(scratch.iter()).map(|(s, b)| s * b).sum::<f64>()
}

/// Classical energy `sum_{i != j} w_ij [J_perp (x_i x_j + y_i y_j) + J_z z_i z_j]`.
pub fn classical_energy(state: &TrajectoryState, model: &CouplingModel) -> Result<f64> {
    check_size(state, model)?;
    let mut scratch = vec![0.0; 3 * state.n];
    Ok(energy_of(model, state.n, &state.data, &mut scratch))
}

/// Energy scale used to express energy drift in relative terms when the
/// initial energy itself is close to zero.
pub fn energy_scale(model: &CouplingModel) -> f64 {
    0.25 * model.weights().ordered_sum() * model.j_perp.abs().max(model.j_z.abs())
}

struct Precession<'a> {
    model: &'a CouplingModel,
    n: usize,
    fields: std::cell::RefCell<Vec<f64>>,
}

impl OdeSystem for Precession<'_> {
    fn dim(&self) -> usize {
        3 * self.n
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.n;
        let mut b = self.fields.borrow_mut();
        fields_into(self.model, n, y, &mut b);
        let (sx, rest) = y.split_at(n);
        let (sy, sz) = rest.split_at(n);
        let (bx, rest) = b.split_at(n);
        let (by, bz) = rest.split_at(n);
        let (dx, rest) = dy.split_at_mut(n);
        let (dyy, dz) = rest.split_at_mut(n);
        for i in 0..n {
            dx[i] = by[i] * sz[i] - bz[i] * sy[i];
            dyy[i] = bz[i] * sx[i] - bx[i] * sz[i];
            dz[i] = bx[i] * sy[i] - by[i] * sx[i];
        }
    }
}

/// Integrate one trajectory, handing the component-major state at each grid
/// time to `observe`.
pub fn evolve_with<F>(
    state: &TrajectoryState,
    model: &CouplingModel,
    t_grid: &[f64],
    tol: f64,
    observe: F,
) -> Result<IntegrationStats>
where
    F: FnMut(usize, f64, &[f64]),
{
    check_size(state, model)?;
    validate_grid(t_grid)?;
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let system = Precession {
        model,
        n: state.n,
        fields: std::cell::RefCell::new(vec![0.0; 3 * state.n]),
    };
    Dopri5::new(tol * STEP_TOL_FACTOR).integrate(&system, &state.data, t_grid, observe)
}

pub(crate) fn validate_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::invalid("time grid is empty"));
    }
    if t_grid[0] != 0.0 {
        return Err(Error::invalid("time grid must start at 0"));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("time grid must be strictly increasing"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub total: [f64; 3],
    pub total_sq: f64,
    pub norms: Vec<f64>,
    pub energy: f64,
}

/// Full per-time record of one trajectory.
pub fn evolve_trajectory(
    state: &TrajectoryState,
    model: &CouplingModel,
    t_grid: &[f64],
    tol: f64,
) -> Result<Vec<Snapshot>> {
    let n = state.n;
    let mut scratch = vec![0.0; 3 * n];
    let mut out = Vec::with_capacity(t_grid.len());
    evolve_with(state, model, t_grid, tol, |_, t, y| {
        let total = total_spin(n, y);
        out.push(Snapshot {
            t,
            total,
            total_sq: total.iter().map(|v| v * v).sum(),
            norms: spin_norms(n, y),
            energy: energy_of(model, n, y, &mut scratch),
        });
    })?;
    Ok(out)
}

/// `round(500 * 64^2 / N)`, at least 2.
pub fn default_trajectories(n_spins: usize) -> usize {
    ((500.0 * 4096.0 / n_spins.max(1) as f64).round() as usize).max(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtwaSettings {
    pub trajectories: usize,
    pub master_seed: u64,
    pub tol: f64,
    pub axis: Axis,
}

impl DtwaSettings {
    pub fn new(trajectories: usize, master_seed: u64) -> Self {
        DtwaSettings {
            trajectories,
            master_seed,
            tol: DEFAULT_TOL,
            axis: Axis::X,
        }
    }
}

pub const DEFAULT_TOL: f64 = 1e-8;

// Local error target per step relative to the requested drift tolerance.
pub const STEP_TOL_FACTOR: f64 = 0.01;

/// Upper bound on jackknife groups; with fewer trajectories every trajectory
/// is its own group.
pub const MAX_JACKKNIFE_GROUPS: usize = 100;

// Per time point: S_x, S_y, S_z, six products, |S|^2.
const STATS: usize = 10;
const PRODUCTS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

struct GroupSums {
    count: usize,
    sums: Vec<[f64; STATS]>,
}

fn run_group(
    model: &CouplingModel,
    settings: &DtwaSettings,
    t_grid: &[f64],
    range: std::ops::Range<usize>,
) -> Result<GroupSums> {
    let n = model.n_sites();
    let mut sums = vec![[0.0; STATS]; t_grid.len()];
    for index in range.clone() {
        let mut rng = stream_rng(settings.master_seed, index as u64);
        let state = sample_initial_trajectory(n, settings.axis, &mut rng);
        evolve_with(&state, model, t_grid, settings.tol, |k, _, y| {
            let s = total_spin(n, y);
            let acc = &mut sums[k];
            acc[0] += s[0];
            acc[1] += s[1];
            acc[2] += s[2];
            for (p, &(a, b)) in PRODUCTS.iter().enumerate() {
                acc[3 + p] += s[a] * s[b];
            }
            acc[9] += s[0] * s[0] + s[1] * s[1] + s[2] * s[2];
        })
        .map_err(|e| Error::Trajectory {
            index,
            source: Box::new(e),
        })?;
    }
    Ok(GroupSums {
        count: range.len(),
        sums,
    })
}

fn unpack(n_spins: usize, v: &[f64; STATS]) -> ([f64; 3], [[f64; 3]; 3], f64, Option<f64>) {
    let mean = [v[0], v[1], v[2]];
    let mut second = [[0.0; 3]; 3];
    for (p, &(a, b)) in PRODUCTS.iter().enumerate() {
        second[a][b] = v[3 + p];
        second[b][a] = v[3 + p];
    }
    let xi2 = squeezing_param(n_spins, mean, &second).ok();
    (mean, second, v[9], xi2)
}

/// Trajectory-averaged collective moments with jackknife errors.
///
/// Trajectory `k` draws from stream `k` of `master_seed`, and partial sums
/// are merged in trajectory order, so the result does not depend on the
/// number of worker threads.
pub fn run_dtwa(model: &CouplingModel, settings: &DtwaSettings, t_grid: &[f64]) -> Result<MomentSeries> {
    let n = model.n_sites();
    let n_traj = settings.trajectories;
    if n_traj < 2 {
        return Err(Error::invalid("at least two trajectories are required"));
    }
    validate_grid(t_grid)?;
    let groups = n_traj.min(MAX_JACKKNIFE_GROUPS);
    let bounds: Vec<usize> = (0..=groups).map(|g| g * n_traj / groups).collect();
    let results: Vec<Result<GroupSums>> = (0..groups)
        .into_par_iter()
        .map(|g| run_group(model, settings, t_grid, bounds[g]..bounds[g + 1]))
        .collect();
    let groups_sums = results.into_iter().collect::<Result<Vec<_>>>()?;

    let n_times = t_grid.len();
    let mut total = vec![[0.0; STATS]; n_times];
    for g in &groups_sums {
        for (acc, s) in total.iter_mut().zip(&g.sums) {
            for q in 0..STATS {
                acc[q] += s[q];
            }
        }
    }

    let nf = n_traj as f64;
    let gf = groups as f64;
    let mut points = Vec::with_capacity(n_times);
    for k in 0..n_times {
        let full: [f64; STATS] = std::array::from_fn(|q| total[k][q] / nf);
        let (mean, second, s2, xi2) = unpack(n, &full);

        // delete-one-group jackknife
        let mut reps = Vec::with_capacity(groups);
        let mut xi_reps = Vec::with_capacity(groups);
        for g in &groups_sums {
            let left = (n_traj - g.count) as f64;
            let rep: [f64; STATS] = std::array::from_fn(|q| (total[k][q] - g.sums[k][q]) / left);
            xi_reps.push(unpack(n, &rep).3);
            reps.push(rep);
        }
        let spread = |vals: &mut dyn Iterator<Item = f64>| -> f64 {
            let v: Vec<f64> = vals.collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            ((gf - 1.0) / gf * v.iter().map(|x| (x - m).powi(2)).sum::<f64>()).sqrt()
        };
        let errs: [f64; STATS] = std::array::from_fn(|q| spread(&mut reps.iter().map(|r| r[q])));
        let xi_err = if xi_reps.iter().all(|x| x.is_some()) && xi2.is_some() {
            Some(spread(&mut xi_reps.iter().map(|x| x.unwrap())))
        } else {
            None
        };
        let (err_mean, err_second, err_s2, _) = unpack(n, &errs);
        points.push(MomentPoint {
            mean,
            second,
            s2,
            xi2,
            err: Some(PointErrors {
                mean: err_mean,
                second: err_second,
                s2: err_s2,
                xi2: xi_err,
            }),
        });
    }

    Ok(MomentSeries {
        n_spins: n,
        times: t_grid.to_vec(),
        anisotropy: model.anisotropy(),
        trajectories: Some(n_traj),
        points,
    })
}
