//! Squeezing parameter, optimal squeezing time and minimal squared
//! magnetization.
//!
//! The squeezing parameter is `N * min_phi Var(S_phi) / |<S>|^2` where `S_phi`
//! ranges over spin components perpendicular to the mean spin. The minimum
//! over `phi` is the smaller eigenvalue of the 2x2 transverse covariance, so no
//! angular search is needed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::MomentSeries;

/// Mean-spin length below `DEFAULT_DEGENERACY * N` makes the squeezing
/// parameter undefined.
pub const DEFAULT_DEGENERACY: f64 = 1e-6;

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalized(a: [f64; 3]) -> [f64; 3] {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Orthonormal pair spanning the plane perpendicular to `direction`.
pub fn transverse_basis(direction: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let d = normalized(direction);
    // Cartesian axis least aligned with d.
    let k = (0..3)
        .min_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs()))
        .unwrap();
    let mut helper = [0.0; 3];
    helper[k] = 1.0;
    let e1 = normalized(cross(d, helper));
    let e2 = cross(d, e1);
    (e1, e2)
}

/// Covariance `<(AB+BA)/2> - <A><B>` projected on `(e1, e2)`.
pub fn transverse_covariance(mean: [f64; 3], second: &[[f64; 3]; 3], e1: [f64; 3], e2: [f64; 3]) -> [[f64; 2]; 2] {
    let basis = [e1, e2];
    let mut c = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            let mut acc = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    acc += basis[a][i] * second[i][j] * basis[b][j];
                }
            }
            c[a][b] = acc - dot(basis[a], mean) * dot(basis[b], mean);
        }
    }
    let off = 0.5 * (c[0][1] + c[1][0]);
    c[0][1] = off;
    c[1][0] = off;
    c
}

/// Smaller eigenvalue of a symmetric 2x2 matrix, i.e. the minimum over
/// angles of the variance along `cos(phi) e1 + sin(phi) e2`.
pub fn min_variance(c: [[f64; 2]; 2]) -> f64 {
    let mid = 0.5 * (c[0][0] + c[1][1]);
    let half_diff = 0.5 * (c[0][0] - c[1][1]);
    mid - half_diff.hypot(c[0][1])
}

pub fn squeezing_param(n_spins: usize, mean: [f64; 3], second: &[[f64; 3]; 3]) -> Result<f64> {
    squeezing_param_with_threshold(n_spins, mean, second, DEFAULT_DEGENERACY)
}

pub fn squeezing_param_with_threshold(
    n_spins: usize,
    mean: [f64; 3],
    second: &[[f64; 3]; 3],
    threshold_per_spin: f64,
) -> Result<f64> {
    let length2 = dot(mean, mean);
    let threshold = threshold_per_spin * n_spins as f64;
    if !(length2.sqrt() > threshold) {
        return Err(Error::DegenerateMeanSpin {
            length: length2.sqrt(),
            threshold,
        });
    }
    let (e1, e2) = transverse_basis(mean);
    let c = transverse_covariance(mean, second, e1, e2);
    Ok(n_spins as f64 * min_variance(c) / length2)
}

/// `-10 log10(xi2)`: positive values mean squeezing.
pub fn to_db(xi2: f64) -> f64 {
    // adding 0.0 turns -0.0 into 0.0
    -10.0 * xi2.log10() + 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SummaryFlags {
    /// Minimum sits on the first or last grid point.
    pub boundary: bool,
    /// Squeezing parameter constant over the window.
    pub flat: bool,
    /// Some points had an undefined squeezing parameter.
    pub undefined_points: bool,
}

impl SummaryFlags {
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.boundary {
            parts.push("boundary");
        }
        if self.flat {
            parts.push("flat");
        }
        if self.undefined_points {
            parts.push("undefined-points");
        }
        parts.join(";")
    }

    pub fn parse(label: &str) -> Self {
        let mut f = SummaryFlags::default();
        for p in label.split(';') {
            match p {
                "boundary" => f.boundary = true,
                "flat" => f.flat = true,
                "undefined-points" => f.undefined_points = true,
                _ => {}
            }
        }
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalSqueezing {
    /// Grid index of the discrete minimum.
    pub index: usize,
    pub t_opt: f64,
    pub xi2_opt: f64,
    pub t_err: f64,
    pub xi2_err: f64,
    pub flags: SummaryFlags,
}

/// Relative spread below which a series counts as flat.
const FLAT_TOLERANCE: f64 = 1e-9;

/// Vertex of the parabola through three points, with abscissae relative to
/// the middle one. Returns `None` unless the parabola opens upward.
fn parabola_vertex(t: [f64; 3], y: [f64; 3]) -> Option<(f64, f64)> {
    let u0 = t[0] - t[1];
    let u2 = t[2] - t[1];
    let s0 = (y[0] - y[1]) / u0;
    let s2 = (y[2] - y[1]) / u2;
    let a = (s2 - s0) / (u2 - u0);
    if !(a > 0.0) {
        return None;
    }
    let b = s2 - a * u2;
    let u = (-b / (2.0 * a)).clamp(u0, u2);
    Some((t[1] + u, y[1] + b * u + a * u * u))
}

/// Global minimum of the squeezing parameter over the series, refined by a
/// three-point parabola in `log xi2`. Ties go to the earliest time.
pub fn optimal_squeezing(series: &MomentSeries) -> Result<OptimalSqueezing> {
    let xi: Vec<Option<f64>> = series.points.iter().map(|p| p.xi2).collect();
    let mut flags = SummaryFlags {
        undefined_points: xi.iter().any(|v| v.is_none()),
        ..Default::default()
    };
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in xi.iter().enumerate() {
        if let Some(v) = *v {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((i, v));
            }
        }
    }
    let (index, discrete) = best.ok_or_else(|| Error::invalid("squeezing parameter undefined at every time"))?;

    let defined: Vec<f64> = xi.iter().flatten().copied().collect();
    let hi = defined.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = defined.iter().copied().fold(f64::INFINITY, f64::min);
    if hi - lo <= FLAT_TOLERANCE * hi.abs().max(1.0) {
        flags.flat = true;
    }

    let times = &series.times;
    let stat_err = series.points[index].err.as_ref().and_then(|e| e.xi2).unwrap_or(0.0);
    let spacing = |i: usize| -> f64 {
        let left = if i > 0 { times[i] - times[i - 1] } else { f64::NAN };
        let right = if i + 1 < times.len() { times[i + 1] - times[i] } else { f64::NAN };
        match (left.is_nan(), right.is_nan()) {
            (false, false) => 0.5 * (left + right),
            (false, true) => left,
            (true, false) => right,
            (true, true) => 0.0,
        }
    };

    let interior = index > 0 && index + 1 < xi.len();
    let neighbours = if interior {
        match (xi[index - 1], xi[index + 1]) {
            (Some(a), Some(b)) => Some((a, b)),
            _ => None,
        }
    } else {
        None
    };
    if !interior {
        flags.boundary = true;
    }

    let (t_opt, xi2_opt) = match neighbours {
        Some((left, right)) if !flags.flat => {
            let t = [times[index - 1], times[index], times[index + 1]];
            let y = [left.ln(), discrete.ln(), right.ln()];
            match parabola_vertex(t, y) {
                Some((tv, yv)) => (tv, yv.exp().min(discrete)),
                None => (times[index], discrete),
            }
        }
        _ => (times[index], discrete),
    };
    let t_err = (0.5 * spacing(index)).max((t_opt - times[index]).abs());
    let xi2_err = stat_err.hypot(discrete - xi2_opt);
    Ok(OptimalSqueezing {
        index,
        t_opt,
        xi2_opt,
        t_err,
        xi2_err,
        flags,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquaredMagnetizationMin {
    pub index: usize,
    pub value: f64,
    /// Value divided by the coherent-state `(N/2)(N/2+1)`.
    pub normalized: f64,
    pub err: f64,
}

/// Minimum of `<S^2>` over grid times up to and including `t_opt`.
pub fn min_squared_magnetization(series: &MomentSeries, t_opt: f64) -> Result<SquaredMagnetizationMin> {
    let times = &series.times;
    let (first, last) = match (times.first(), times.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::invalid("empty series")),
    };
    let slack = 1e-12 * last.abs().max(1.0);
    if t_opt < first - slack || t_opt > last + slack {
        return Err(Error::invalid(format!("t_opt = {t_opt} outside the series window")));
    }
    let mut best = 0;
    for (i, (&t, p)) in times.iter().zip(&series.points).enumerate() {
        if t > t_opt + slack {
            break;
        }
        if p.s2 < series.points[best].s2 {
            best = i;
        }
    }
    let mut value = series.points[best].s2;
    let mut err = series.points[best].err.as_ref().map_or(0.0, |e| e.s2);
    // include the value at t_opt itself when it falls between grid points
    if let Some(i) = times.windows(2).position(|w| w[0] < t_opt && t_opt < w[1]) {
        let f = (t_opt - times[i]) / (times[i + 1] - times[i]);
        let (a, b) = (&series.points[i], &series.points[i + 1]);
        let between = a.s2 + f * (b.s2 - a.s2);
        if between < value {
            value = between;
            let ea = a.err.as_ref().map_or(0.0, |e| e.s2);
            let eb = b.err.as_ref().map_or(0.0, |e| e.s2);
            err = ea + f * (eb - ea);
        }
    }
    let initial = coherent_s2(series.n_spins);
    Ok(SquaredMagnetizationMin {
        index: best,
        value,
        normalized: value / initial,
        err: err / initial,
    })
}

/// `(N/2)(N/2 + 1)`.
pub fn coherent_s2(n_spins: usize) -> f64 {
    let s = 0.5 * n_spins as f64;
    s * (s + 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqueezingSummary {
    pub n_spins: usize,
    pub t_opt: f64,
    pub tau_opt: Option<f64>,
    pub xi2_opt: f64,
    pub s2_min: f64,
    pub s2_min_norm: f64,
    pub t_opt_err: f64,
    pub xi2_opt_err: f64,
    pub s2_min_norm_err: f64,
    pub flags: SummaryFlags,
}

impl SqueezingSummary {
    pub fn xi2_opt_db(&self) -> f64 {
        to_db(self.xi2_opt)
    }
}

pub fn summarize(series: &MomentSeries) -> Result<SqueezingSummary> {
    let opt = optimal_squeezing(series)?;
    let s2 = min_squared_magnetization(series, opt.t_opt)?;
    Ok(SqueezingSummary {
        n_spins: series.n_spins,
        t_opt: opt.t_opt,
        tau_opt: series.anisotropy.map(|a| a * opt.t_opt),
        xi2_opt: opt.xi2_opt,
        s2_min: s2.value,
        s2_min_norm: s2.normalized,
        t_opt_err: opt.t_err,
        xi2_opt_err: opt.xi2_err,
        s2_min_norm_err: s2.err,
        flags: opt.flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{MomentPoint, MomentSeries};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn coherent(n: usize) -> ([f64; 3], [[f64; 3]; 3]) {
        let nf = n as f64;
        let mean = [nf / 2.0, 0.0, 0.0];
        let second = [[nf * nf / 4.0, 0.0, 0.0], [0.0, nf / 4.0, 0.0], [0.0, 0.0, nf / 4.0]];
        (mean, second)
    }

    #[test]
    fn coherent_state_is_unity() {
        for n in [1, 2, 17, 4096] {
            let (m, s) = coherent(n);
            assert!((squeezing_param(n, m, &s).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_squeezed() {
        let n = 40.0;
        let mean = [n / 2.0, 0.0, 0.0];
        let second = [[n * n / 4.0, 0.0, 0.0], [0.0, n / 8.0, 0.0], [0.0, 0.0, n / 2.0]];
        assert!((squeezing_param(40, mean, &second).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_mean_spin() {
        let second = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(matches!(
            squeezing_param(10, [1e-9, 0.0, 0.0], &second),
            Err(Error::DegenerateMeanSpin { .. })
        ));
    }

    fn random_psd(rng: &mut ChaCha8Rng) -> ([f64; 3], [[f64; 3]; 3]) {
        let mean: [f64; 3] = std::array::from_fn(|_| rng.random_range(-3.0..3.0));
        let a: [[f64; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
        let mut second = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                second[i][j] = (0..3).map(|k| a[i][k] * a[j][k]).sum::<f64>() + mean[i] * mean[j];
            }
        }
        (mean, second)
    }

    #[test]
    fn closed_form_matches_angle_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (mean, second) = random_psd(&mut rng);
            let (e1, e2) = transverse_basis(mean);
            let mut scan = f64::INFINITY;
            let steps = 100_000;
            for k in 0..steps {
                let phi = std::f64::consts::PI * k as f64 / steps as f64;
                let axis: [f64; 3] = std::array::from_fn(|i| phi.cos() * e1[i] + phi.sin() * e2[i]);
                let mut var = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        var += axis[i] * (second[i][j] - mean[i] * mean[j]) * axis[j];
                    }
                }
                scan = scan.min(var);
            }
            let c = transverse_covariance(mean, &second, e1, e2);
            let closed = min_variance(c);
            assert!(closed <= scan + 1e-12);
            assert!((closed - scan).abs() < 1e-9, "closed {closed} scan {scan}");
        }
    }

    #[test]
    fn invariant_under_rotation_about_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (mean, second) = random_psd(&mut rng);
        let base = squeezing_param(10, mean, &second).unwrap();
        // Rodrigues rotation about the mean direction
        let k = normalized(mean);
        let th: f64 = 0.7;
        let kx = [[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]];
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let kk: f64 = (0..3).map(|m| kx[i][m] * kx[m][j]).sum();
                r[i][j] = if i == j { 1.0 } else { 0.0 } + th.sin() * kx[i][j] + (1.0 - th.cos()) * kk;
            }
        }
        let mut rotated = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for a in 0..3 {
                    for b in 0..3 {
                        rotated[i][j] += r[i][a] * second[a][b] * r[j][b];
                    }
                }
            }
        }
        let rmean: [f64; 3] = std::array::from_fn(|i| (0..3).map(|a| r[i][a] * mean[a]).sum());
        let after = squeezing_param(10, rmean, &rotated).unwrap();
        assert!((base - after).abs() < 1e-10);
        // swapping the transverse axes leaves the eigenvalue unchanged
        let c = transverse_covariance(mean, &second, transverse_basis(mean).0, transverse_basis(mean).1);
        let swapped = [[c[1][1], c[1][0]], [c[0][1], c[0][0]]];
        assert_eq!(min_variance(c), min_variance(swapped));
    }

    fn series_from_xi2(times: Vec<f64>, xi2: Vec<f64>, s2: Vec<f64>, n: usize) -> MomentSeries {
        let points = xi2
            .iter()
            .zip(&s2)
            .map(|(&x, &s)| MomentPoint {
                mean: [0.0; 3],
                second: [[0.0; 3]; 3],
                s2: s,
                xi2: Some(x),
                err: None,
            })
            .collect();
        MomentSeries {
            n_spins: n,
            times,
            anisotropy: Some(2.0),
            trajectories: None,
            points,
        }
    }

    #[test]
    fn parabola_refinement_recovers_vertex() {
        // log xi2 = -1 + 3 (t - 0.537)^2
        let times: Vec<f64> = (0..21).map(|i| i as f64 * 0.05).collect();
        let xi2: Vec<f64> = times.iter().map(|t| (-1.0 + 3.0 * (t - 0.537f64).powi(2)).exp()).collect();
        let s = series_from_xi2(times.clone(), xi2, vec![1.0; 21], 4);
        let opt = optimal_squeezing(&s).unwrap();
        assert!((opt.t_opt - 0.537).abs() < 1e-6);
        assert!((opt.xi2_opt - (-1.0f64).exp()).abs() < 1e-6);
        assert!(!opt.flags.boundary && !opt.flags.flat);
    }

    #[test]
    fn boundary_flat_and_ties() {
        let times = vec![0.0, 1.0, 2.0, 3.0];
        let s = series_from_xi2(times.clone(), vec![1.0, 0.9, 0.8, 0.7], vec![1.0; 4], 4);
        let opt = optimal_squeezing(&s).unwrap();
        assert!(opt.flags.boundary);
        assert_eq!(opt.t_opt, 3.0);
        let flat = series_from_xi2(times.clone(), vec![1.0; 4], vec![1.0; 4], 4);
        let opt = optimal_squeezing(&flat).unwrap();
        assert!(opt.flags.flat);
        assert_eq!(opt.index, 0);
        let tie = series_from_xi2(times, vec![1.0, 0.5, 0.9, 0.5], vec![1.0; 4], 4);
        assert_eq!(optimal_squeezing(&tie).unwrap().index, 1);
    }

    #[test]
    fn s2_min_window() {
        let times = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let n = 4;
        let s0 = coherent_s2(n);
        let s = series_from_xi2(times, vec![1.0; 5], vec![s0, 0.9 * s0, 0.8 * s0, 0.5 * s0, 0.95 * s0], n);
        assert_eq!(min_squared_magnetization(&s, 0.0).unwrap().value, s0);
        assert!((min_squared_magnetization(&s, 2.0).unwrap().normalized - 0.8).abs() < 1e-15);
        assert!((min_squared_magnetization(&s, 4.0).unwrap().normalized - 0.5).abs() < 1e-15);
        assert!(min_squared_magnetization(&s, 9.0).is_err());
        // between grid points the value at t_opt is interpolated
        assert!((min_squared_magnetization(&s, 2.5).unwrap().normalized - 0.65).abs() < 1e-15);
        assert!((min_squared_magnetization(&s, 0.5).unwrap().normalized - 0.95).abs() < 1e-15);
    }

    #[test]
    fn db_convention() {
        assert_eq!(to_db(1.0), 0.0);
        assert!((to_db(0.1) - 10.0).abs() < 1e-12);
    }
}
