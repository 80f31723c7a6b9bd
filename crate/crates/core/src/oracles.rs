//! Closed-form dynamics of the one-axis twisting and Ising limits, starting
//! from the x-polarized product state.

use crate::error::{Error, Result};
use crate::lattice::{Boundary, CouplingModel, Lattice, WeightMatrix};
use crate::series::{MomentPoint, MomentSeries};

fn series(n: usize, t_grid: &[f64], rate: f64, points: Vec<MomentPoint>) -> MomentSeries {
    MomentSeries {
        n_spins: n,
        times: t_grid.to_vec(),
        anisotropy: (rate != 0.0).then_some(rate.abs()),
        trajectories: None,
        points,
    }
}

/// Moments under `H = chi S_z^2`.
pub fn oat_point(n: usize, chi: f64, t: f64) -> MomentPoint {
    let nf = n as f64;
    let pairs = nf * (nf - 1.0);
    let c1 = (chi * t).cos();
    let c2 = (2.0 * chi * t).cos();
    let pow = |c: f64, k: usize| if k == 0 { 1.0 } else { c.powi(k as i32) };
    let sx = 0.5 * nf * pow(c1, n - 1);
    let twist = if n >= 2 { pow(c2, n - 2) } else { 0.0 };
    let cross = if n >= 2 { pow(c1, n - 2) } else { 0.0 };
    let sxx = nf / 4.0 + pairs / 8.0 * (1.0 + twist);
    let syy = nf / 4.0 + pairs / 8.0 * (1.0 - twist);
    let szz = nf / 4.0;
    let syz = pairs / 4.0 * (chi * t).sin() * cross;
    let second = [[sxx, 0.0, 0.0], [0.0, syy, syz], [0.0, syz, szz]];
    MomentPoint::new(n, [sx, 0.0, 0.0], second, sxx + syy + szz)
}

pub fn oat_series(n: usize, chi: f64, t_grid: &[f64]) -> Result<MomentSeries> {
    if n < 2 {
        return Err(Error::invalid("one-axis twisting needs at least two spins"));
    }
    let points = t_grid.iter().map(|&t| oat_point(n, chi, t)).collect();
    Ok(series(n, t_grid, chi, points))
}

/// Pair sums needed by the Ising moments, accumulated over ordered pairs.
#[derive(Default)]
struct PairSums {
    sum: f64,
    diff: f64,
    yz: f64,
}

impl PairSums {
    /// Contributions of the ordered pair `(k, l)` given the cosine table
    /// `c[m] = cos(K_km t / 2)` of `k` and `d[m]` of `l`.
    fn add(&mut self, k: usize, l: usize, half_k: &[f64], half_l: &[f64]) {
        let mut psum = 1.0;
        let mut pdiff = 1.0;
        let mut pk = 1.0;
        for m in 0..half_k.len() {
            if m == k || m == l {
                continue;
            }
            psum *= (half_k[m] + half_l[m]).cos();
            pdiff *= (half_k[m] - half_l[m]).cos();
            pk *= half_k[m].cos();
        }
        self.sum += psum;
        self.diff += pdiff;
        self.yz += half_k[l].sin() * pk;
    }
}

fn ising_point(n: usize, single: f64, pairs: &PairSums, scale: f64) -> MomentPoint {
    let nf = n as f64;
    let sx = 0.5 * single * scale;
    let (sum, diff, yz) = (pairs.sum * scale, pairs.diff * scale, pairs.yz * scale);
    let sxx = nf / 4.0 + (sum + diff) / 8.0;
    let syy = nf / 4.0 + (diff - sum) / 8.0;
    let szz = nf / 4.0;
    let syz = yz / 4.0;
    let second = [[sxx, 0.0, 0.0], [0.0, syy, syz], [0.0, syz, szz]];
    MomentPoint::new(n, [sx, 0.0, 0.0], second, sxx + syy + szz)
}

/// Row `k` of the half phases `K_km t / 2` with `K = 2 w J_z`.
fn half_phases(w: &WeightMatrix, jz: f64, k: usize, t: f64) -> Vec<f64> {
    w.row(k).iter().map(|&wkm| wkm * jz * t).collect()
}

/// Moments under `H = J_z sum_{i != j} w_ij s_z,i s_z,j` for arbitrary
/// symmetric weights. Cost is cubic in the number of spins per time.
pub fn ising_series(weights: &WeightMatrix, jz: f64, t_grid: &[f64]) -> Result<MomentSeries> {
    let n = weights.len();
    if n < 2 {
        return Err(Error::invalid("the Ising oracle needs at least two spins"));
    }
    let points = t_grid
        .iter()
        .map(|&t| {
            let rows: Vec<Vec<f64>> = (0..n).map(|k| half_phases(weights, jz, k, t)).collect();
            let single: f64 = (0..n)
                .map(|k| (0..n).filter(|&m| m != k).map(|m| rows[k][m].cos()).product::<f64>())
                .sum();
            let mut acc = PairSums::default();
            for k in 0..n {
                for l in 0..n {
                    if k != l {
                        acc.add(k, l, &rows[k], &rows[l]);
                    }
                }
            }
            ising_point(n, single, &acc, 1.0)
        })
        .collect();
    Ok(series(n, t_grid, jz, points))
}

/// Same moments on a fully occupied periodic lattice, using translation
/// invariance to sum over pairs that contain site 0 only.
pub fn ising_series_periodic(lattice: &Lattice, weights: &WeightMatrix, jz: f64, t_grid: &[f64]) -> Result<MomentSeries> {
    if lattice.boundary() != Boundary::Periodic || !lattice.is_fully_occupied() {
        return Err(Error::invalid("translation-invariant path needs a full periodic lattice"));
    }
    let n = weights.len();
    if n != lattice.len() {
        return Err(Error::DimensionMismatch {
            expected: lattice.len(),
            actual: n,
        });
    }
    if n < 2 {
        return Err(Error::invalid("the Ising oracle needs at least two spins"));
    }
    let points = t_grid
        .iter()
        .map(|&t| {
            let row0 = half_phases(weights, jz, 0, t);
            let single: f64 = row0[1..].iter().map(|h| h.cos()).product();
            let mut acc = PairSums::default();
            for l in 1..n {
                acc.add(0, l, &row0, &half_phases(weights, jz, l, t));
            }
            ising_point(n, single, &acc, n as f64)
        })
        .collect();
    Ok(series(n, t_grid, jz, points))
}

/// Picks the translation-invariant path when it applies.
pub fn ising_series_for(lattice: &Lattice, model: &CouplingModel, t_grid: &[f64]) -> Result<MomentSeries> {
    if model.j_perp != 0.0 {
        return Err(Error::invalid("the Ising oracle requires J_perp = 0"));
    }
    if lattice.boundary() == Boundary::Periodic && lattice.is_fully_occupied() {
        ising_series_periodic(lattice, model.weights(), model.j_z, t_grid)
    } else {
        ising_series(model.weights(), model.j_z, t_grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtwa::Axis;
    use crate::exact::{evolve_exact, initial_product_state};
    use crate::lattice::DecayExponent;
    use crate::rng::stream_rng;
    use crate::series::uniform_grid;
    use rand::Rng;

    fn assert_close(a: &MomentSeries, b: &MomentSeries, tol: f64) {
        assert_eq!(a.len(), b.len());
        for (k, (p, q)) in a.points.iter().zip(&b.points).enumerate() {
            for i in 0..3 {
                assert!((p.mean[i] - q.mean[i]).abs() < tol, "t[{k}] mean {i}: {} vs {}", p.mean[i], q.mean[i]);
                for j in 0..3 {
                    assert!(
                        (p.second[i][j] - q.second[i][j]).abs() < tol,
                        "t[{k}] second {i}{j}: {} vs {}",
                        p.second[i][j],
                        q.second[i][j]
                    );
                }
            }
            assert!((p.s2 - q.s2).abs() < tol);
            // the ratio is ill-conditioned where the mean spin nearly vanishes
            let resolved = p.mean.iter().map(|v| v * v).sum::<f64>().sqrt() > 0.005 * a.n_spins as f64;
            if let (Some(x), Some(y), true) = (p.xi2, q.xi2, resolved) {
                assert!((x - y).abs() < tol * x.max(1.0), "t[{k}] xi2 {x} vs {y}");
            }
        }
    }

    #[test]
    fn oat_initial_values() {
        let p = oat_point(10, 0.7, 0.0);
        assert_eq!(p.mean[0], 5.0);
        assert!((p.xi2.unwrap() - 1.0).abs() < 1e-14);
        assert!((p.s2 - 30.0).abs() < 1e-12);
        assert!(oat_series(1, 1.0, &[0.0]).is_err());
    }

    #[test]
    fn oat_matches_exact() {
        for (n, jz) in [(6, -0.4), (9, 0.5)] {
            let w = WeightMatrix::uniform(n);
            let model = CouplingModel::new(w, 1.0, jz, DecayExponent::Finite(0.0));
            let grid = uniform_grid(4.0, 21);
            let exact = evolve_exact(&model, &initial_product_state(n, Axis::X).unwrap(), &grid, 1e-12).unwrap();
            let oracle = oat_series(n, jz - 1.0, &grid).unwrap();
            assert_close(&oracle, &exact, 1e-9);
        }
    }

    #[test]
    fn oat_conserves_total_spin() {
        let s = oat_series(50, 0.3, &uniform_grid(10.0, 101)).unwrap();
        for p in &s.points {
            assert!((p.s2 - 25.0 * 26.0).abs() < 1e-9);
        }
    }

    #[test]
    fn ising_matches_exact_random_weights() {
        let n = 7;
        let mut rng = stream_rng(12, 0);
        let vals: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.05..1.0)).collect();
        let w = WeightMatrix::from_fn(n, |i, j| vals[i.min(j) * n + i.max(j)]);
        let jz = -0.8;
        let grid = uniform_grid(5.0, 20);
        let model = CouplingModel::new(w.clone(), 0.0, jz, DecayExponent::Finite(1.0));
        let exact = evolve_exact(&model, &initial_product_state(n, Axis::X).unwrap(), &grid, 1e-12).unwrap();
        assert_close(&ising_series(&w, jz, &grid).unwrap(), &exact, 1e-9);
    }

    #[test]
    fn ising_uniform_is_oat() {
        let n = 11;
        let grid = uniform_grid(3.0, 31);
        let a = ising_series(&WeightMatrix::uniform(n), 0.6, &grid).unwrap();
        let b = oat_series(n, 0.6, &grid).unwrap();
        assert_close(&a, &b, 1e-11);
    }

    #[test]
    fn periodic_fast_path_agrees() {
        let l = Lattice::build(&[4, 3], Boundary::Periodic).unwrap();
        let m = CouplingModel::on_lattice(&l, DecayExponent::Finite(2.5), 0.0, 1.3);
        let grid = uniform_grid(4.0, 17);
        let fast = ising_series_for(&l, &m, &grid).unwrap();
        let slow = ising_series(m.weights(), m.j_z, &grid).unwrap();
        assert_close(&fast, &slow, 1e-10);
        let open = Lattice::build(&[4, 3], Boundary::Open).unwrap();
        assert!(ising_series_periodic(&open, m.weights(), 1.0, &grid).is_err());
        let xxz = CouplingModel::on_lattice(&l, DecayExponent::Finite(2.5), 1.0, 1.3);
        assert!(ising_series_for(&l, &xxz, &grid).is_err());
    }
}
