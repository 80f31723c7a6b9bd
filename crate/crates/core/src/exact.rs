//! Exact state-vector dynamics for small lattices.
//!
//! Basis state `x` is a bitmask over sites: bit `i` clear means spin `i` is
//! up (`s_z = +1/2`), so index 0 is the fully up state.

use num_complex::Complex64 as C;
use std::f64::consts::PI;

use crate::dtwa::{validate_grid, Axis};
use crate::error::{Error, Result};
use crate::krylov::{propagate, KrylovStats, DEFAULT_KRYLOV_DIM};
use crate::lattice::CouplingModel;
use crate::series::{fmt_num, MomentPoint, MomentSeries};

pub const MAX_EXACT_SPINS: usize = 16;
pub const DEFAULT_EXACT_TOL: f64 = 1e-10;

fn check_capacity(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("at least one spin is required"));
    }
    if n > MAX_EXACT_SPINS {
        return Err(Error::Capacity {
            requested: n,
            limit: MAX_EXACT_SPINS,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    n: usize,
    amps: Vec<C>,
}

impl QuantumState {
    pub fn from_amplitudes(n: usize, amps: Vec<C>) -> Result<Self> {
        check_capacity(n)?;
        if amps.len() != 1 << n {
            return Err(Error::DimensionMismatch {
                expected: 1 << n,
                actual: amps.len(),
            });
        }
        Ok(QuantumState { n, amps })
    }

    pub fn n_spins(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[C] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &QuantumState) -> C {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }
}

/// Single-spin `+1/2` eigenvector along the unit vector `(theta, phi)`.
fn spinor(theta: f64, phi: f64) -> [C; 2] {
    [
        C::new((theta / 2.0).cos(), 0.0),
        C::from_polar((theta / 2.0).sin(), phi),
    ]
}

fn angles(direction: [f64; 3]) -> Result<(f64, f64)> {
    let r = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid("direction must be a nonzero finite vector"));
    }
    let theta = (direction[2] / r).clamp(-1.0, 1.0).acos();
    let phi = direction[1].atan2(direction[0]);
    Ok((theta, phi))
}

fn product_state(n: usize, u: [C; 2]) -> Vec<C> {
    (0..1usize << n)
        .map(|x| (0..n).fold(C::new(1.0, 0.0), |acc, i| acc * u[(x >> i) & 1]))
        .collect()
}

/// Spin-coherent product state with every spin along `direction`.
pub fn coherent_state(n: usize, direction: [f64; 3]) -> Result<QuantumState> {
    check_capacity(n)?;
    let (theta, phi) = angles(direction)?;
    Ok(QuantumState {
        n,
        amps: product_state(n, spinor(theta, phi)),
    })
}

pub fn initial_product_state(n: usize, axis: Axis) -> Result<QuantumState> {
    coherent_state(n, axis.unit())
}

/// Matrix-free `H = sum_{i != j} w_ij [J_perp s_i.s_j + (J_z - J_perp) s_z,i s_z,j]`.
#[derive(Debug, Clone)]
pub struct ExactHamiltonian {
    n: usize,
    diag: Vec<f64>,
    /// `(mask, amplitude)` of every pair with a nonzero flip-flop term.
    hops: Vec<(usize, f64)>,
}

impl ExactHamiltonian {
    pub fn new(model: &CouplingModel) -> Result<Self> {
        let n = model.n_sites();
        check_capacity(n)?;
        let w = model.weights();
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                pairs.push((i, j, w.get(i, j)));
            }
        }
        let diag = (0..1usize << n)
            .map(|x| {
                pairs
                    .iter()
                    .map(|&(i, j, wij)| {
                        let aligned = ((x >> i) & 1) == ((x >> j) & 1);
                        let zz = if aligned { 0.25 } else { -0.25 };
                        2.0 * wij * model.j_z * zz
                    })
                    .sum()
            })
            .collect();
        let hops = pairs
            .iter()
            .filter(|p| p.2 * model.j_perp != 0.0)
            .map(|&(i, j, wij)| ((1usize << i) | (1usize << j), wij * model.j_perp))
            .collect();
        Ok(ExactHamiltonian { n, diag, hops })
    }

    pub fn n_spins(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, psi: &[C], out: &mut [C]) {
        for ((o, p), d) in out.iter_mut().zip(psi).zip(&self.diag) {
            *o = p * d;
        }
        for &(mask, amp) in &self.hops {
            for x in 0..psi.len() {
                let y = x ^ mask;
                // exactly one of the two bits set: the pair is antiparallel
                if (x & mask) != 0 && (x & mask) != mask {
                    out[x] += psi[y] * amp;
                }
            }
        }
    }

    pub fn energy(&self, state: &QuantumState) -> Result<f64> {
        self.check(state)?;
        let mut h = vec![C::new(0.0, 0.0); state.amps.len()];
        self.apply(&state.amps, &mut h);
        Ok(state.amps.iter().zip(&h).map(|(a, b)| (a.conj() * b).re).sum())
    }

    fn check(&self, state: &QuantumState) -> Result<()> {
        if state.n != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: state.n,
            });
        }
        Ok(())
    }
}

pub fn apply_hamiltonian(model: &CouplingModel, state: &QuantumState) -> Result<QuantumState> {
    let h = ExactHamiltonian::new(model)?;
    h.check(state)?;
    let mut out = vec![C::new(0.0, 0.0); state.amps.len()];
    h.apply(&state.amps, &mut out);
    Ok(QuantumState { n: state.n, amps: out })
}

/// `S_x psi`, `S_y psi`, `S_z psi`.
fn collective_images(n: usize, psi: &[C]) -> [Vec<C>; 3] {
    let dim = psi.len();
    let mut sx = vec![C::new(0.0, 0.0); dim];
    let mut sy = vec![C::new(0.0, 0.0); dim];
    let mut sz = vec![C::new(0.0, 0.0); dim];
    for x in 0..dim {
        let mut ax = C::new(0.0, 0.0);
        let mut ay = C::new(0.0, 0.0);
        for i in 0..n {
            let p = psi[x ^ (1 << i)];
            ax += p;
            // s_y = (s+ - s-)/2i; bit clear means x was reached by raising
            if (x >> i) & 1 == 0 {
                ay += C::new(0.0, -1.0) * p;
            } else {
                ay += C::new(0.0, 1.0) * p;
            }
        }
        sx[x] = ax * 0.5;
        sy[x] = ay * 0.5;
        sz[x] = psi[x] * (n as f64 / 2.0 - x.count_ones() as f64);
    }
    [sx, sy, sz]
}

/// Collective moments with symmetrized second moments.
pub fn collective_moments(state: &QuantumState) -> MomentPoint {
    moments_of(state.n, &state.amps)
}

fn moments_of(n: usize, psi: &[C]) -> MomentPoint {
    let phi = collective_images(n, psi);
    let inner = |a: &[C], b: &[C]| -> C { a.iter().zip(b).map(|(x, y)| x.conj() * y).sum() };
    let mean: [f64; 3] = std::array::from_fn(|a| inner(psi, &phi[a]).re);
    let second: [[f64; 3]; 3] = std::array::from_fn(|a| std::array::from_fn(|b| inner(&phi[a], &phi[b]).re));
    let s2 = second[0][0] + second[1][1] + second[2][2];
    MomentPoint::new(n, mean, second, s2)
}

/// Evolve `state` and hand the state at each grid time to `observe`.
pub fn evolve_states<F>(
    model: &CouplingModel,
    state: &QuantumState,
    t_grid: &[f64],
    tol: f64,
    mut observe: F,
) -> Result<KrylovStats>
where
    F: FnMut(usize, f64, &QuantumState),
{
    let h = ExactHamiltonian::new(model)?;
    h.check(state)?;
    validate_grid(t_grid)?;
    let n = state.n;
    propagate(
        |x: &[C], y: &mut [C]| h.apply(x, y),
        &state.amps,
        t_grid,
        tol,
        DEFAULT_KRYLOV_DIM,
        |k, t, psi| {
            let s = QuantumState { n, amps: psi.to_vec() };
            observe(k, t, &s)
        },
    )
}

pub fn evolve_exact(model: &CouplingModel, state: &QuantumState, t_grid: &[f64], tol: f64) -> Result<MomentSeries> {
    let mut points = Vec::with_capacity(t_grid.len());
    evolve_states(model, state, t_grid, tol, |_, _, s| points.push(collective_moments(s)))?;
    Ok(MomentSeries {
        n_spins: state.n,
        times: t_grid.to_vec(),
        anisotropy: model.anisotropy(),
        trajectories: None,
        points,
    })
}

/// `|<n|psi>|^2` for the spin-coherent product state along each direction.
pub fn husimi_q(state: &QuantumState, directions: &[[f64; 3]]) -> Result<Vec<f64>> {
    directions
        .iter()
        .map(|&d| {
            let (theta, phi) = angles(d)?;
            let u = spinor(theta, phi);
            let (c0, c1) = (u[0].conj(), u[1].conj());
            // contract the lowest site at each pass
            let mut v = state.amps.clone();
            while v.len() > 1 {
                v = v.chunks_exact(2).map(|p| c0 * p[0] + c1 * p[1]).collect();
            }
            Ok(v[0].norm_sqr())
        })
        .collect()
}

/// `(theta, phi)` cell centres of an equal-angle sphere grid.
pub fn sphere_grid(n_theta: usize, n_phi: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n_theta * n_phi);
    for a in 0..n_theta {
        let theta = PI * (a as f64 + 0.5) / n_theta as f64;
        for b in 0..n_phi {
            out.push((theta, 2.0 * PI * b as f64 / n_phi as f64));
        }
    }
    out
}

/// Husimi distribution on a sphere grid as `theta,phi,Q` CSV.
pub fn husimi_csv(state: &QuantumState, n_theta: usize, n_phi: usize) -> Result<String> {
    let grid = sphere_grid(n_theta, n_phi);
    let dirs: Vec<[f64; 3]> = grid
        .iter()
        .map(|&(t, p)| [t.sin() * p.cos(), t.sin() * p.sin(), t.cos()])
        .collect();
    let q = husimi_q(state, &dirs)?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["theta", "phi", "Q"])?;
    for ((t, p), q) in grid.iter().zip(q) {
        w.write_record([fmt_num(*t), fmt_num(*p), fmt_num(q)])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}


#[cfg(test)]
mod tests {
    use super::dense;
    use super::*;
    use crate::lattice::{Boundary, DecayExponent, Lattice, WeightMatrix};
    use crate::rng::stream_rng;
    use crate::series::uniform_grid;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;

    fn random_model(n: usize, seed: u64, jp: f64, jz: f64) -> CouplingModel {
        let mut rng = stream_rng(seed, 0);
        let vals: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.1..1.0)).collect();
        let w = WeightMatrix::from_fn(n, |i, j| vals[i.min(j) * n + i.max(j)]);
        CouplingModel::new(w, jp, jz, DecayExponent::Finite(1.0))
    }

    fn random_state(n: usize, seed: u64) -> QuantumState {
        let mut rng = stream_rng(seed, 1);
        let amps: Vec<C> = (0..1 << n)
            .map(|_| C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let nrm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        QuantumState::from_amplitudes(n, amps.iter().map(|a| a / nrm).collect()).unwrap()
    }

    #[test]
    fn product_state_examples() {
        let s = initial_product_state(1, Axis::Z).unwrap();
        assert_eq!(s.amplitudes(), &[C::new(1.0, 0.0), C::new(0.0, 0.0)]);
        let s = initial_product_state(2, Axis::X).unwrap();
        for a in s.amplitudes() {
            assert!((a - C::new(0.5, 0.0)).norm() < 1e-15);
        }
        assert!(matches!(
            initial_product_state(17, Axis::X),
            Err(Error::Capacity { requested: 17, limit: 16 })
        ));
        assert!(initial_product_state(0, Axis::X).is_err());
    }

    #[test]
    fn coherent_identities() {
        for n in 1..=10 {
            let p = collective_moments(&initial_product_state(n, Axis::X).unwrap());
            let half = n as f64 / 2.0;
            assert!((p.mean[0] - half).abs() < 1e-12);
            assert!((p.s2 - half * (half + 1.0)).abs() < 1e-10);
            assert!((p.xi2.unwrap() - 1.0).abs() < 1e-12);
        }
        let p = collective_moments(&initial_product_state(3, Axis::Y).unwrap());
        assert!((p.mean[1] - 1.5).abs() < 1e-12 && p.mean[0].abs() < 1e-12);
    }

    #[test]
    fn two_spin_spectrum() {
        let m = CouplingModel::new(WeightMatrix::uniform(2), 1.0, 1.0, DecayExponent::Finite(0.0));
        let h = ExactHamiltonian::new(&m).unwrap();
        let mut mat = DMatrix::<f64>::zeros(4, 4);
        for col in 0..4 {
            let mut e = vec![C::new(0.0, 0.0); 4];
            e[col] = C::new(1.0, 0.0);
            let mut out = vec![C::new(0.0, 0.0); 4];
            h.apply(&e, &mut out);
            for row in 0..4 {
                mat[(row, col)] = out[row].re;
            }
        }
        let mut ev: Vec<f64> = mat.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let expect = [-1.5, 0.5, 0.5, 0.5];
        for (a, b) in ev.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn dense_matches_matrix_free() {
        for n in [2, 3, 5, 8] {
            let m = random_model(n, n as u64, 0.7, -1.3);
            let dense = dense::hamiltonian(&m);
            let h = ExactHamiltonian::new(&m).unwrap();
            let states = if n == 8 { 100 } else { 10 };
            for k in 0..states {
                let s = random_state(n, 1000 + k);
                let mut out = vec![C::new(0.0, 0.0); 1 << n];
                h.apply(s.amplitudes(), &mut out);
                let reference = &dense * DVector::from_column_slice(s.amplitudes());
                for x in 0..1 << n {
                    assert!((out[x] - reference[x]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn all_up_eigenvalue() {
        let m = random_model(6, 3, 0.4, 1.7);
        let up = initial_product_state(6, Axis::Z).unwrap();
        let hs = apply_hamiltonian(&m, &up).unwrap();
        let expect = 0.25 * m.j_z * m.weights().ordered_sum();
        assert!((hs.amplitudes()[0].re - expect).abs() < 1e-12);
        assert!(hs.amplitudes()[1..].iter().all(|a| a.norm() == 0.0));
    }

    #[test]
    fn hamiltonian_preserves_magnetization() {
        let m = random_model(5, 9, 1.0, 0.3);
        let h = ExactHamiltonian::new(&m).unwrap();
        for x in 0..32usize {
            let mut e = vec![C::new(0.0, 0.0); 32];
            e[x] = C::new(1.0, 0.0);
            let mut out = vec![C::new(0.0, 0.0); 32];
            h.apply(&e, &mut out);
            for (y, a) in out.iter().enumerate() {
                if a.norm() > 0.0 {
                    assert_eq!(y.count_ones(), x.count_ones());
                }
            }
        }
    }

    #[test]
    fn collective_moments_match_dense() {
        let n = 4;
        let s = random_state(n, 77);
        let p = collective_moments(&s);
        let v = DVector::from_column_slice(s.amplitudes());
        let total = |op: char| (0..n).fold(DMatrix::<C>::zeros(16, 16), |acc, i| acc + dense::site_op(n, i, op));
        let ops = [total('x'), total('y'), total('z')];
        for a in 0..3 {
            let m = (v.adjoint() * &ops[a] * &v)[(0, 0)];
            assert!((m.re - p.mean[a]).abs() < 1e-12);
            for b in 0..3 {
                let prod = &ops[a] * &ops[b] + &ops[b] * &ops[a];
                let m = (v.adjoint() * prod * &v)[(0, 0)].re / 2.0;
                assert!((m - p.second[a][b]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn evolution_matches_dense_exponential() {
        let n = 5;
        let m = random_model(n, 21, 0.9, -0.6);
        let dense = dense::hamiltonian(&m);
        let eig = nalgebra::linalg::SymmetricEigen::new(dense.map(|c| c.re));
        let s0 = initial_product_state(n, Axis::X).unwrap();
        let v0 = DVector::from_column_slice(s0.amplitudes()).map(|c| c);
        let q = eig.eigenvectors.map(|r| C::new(r, 0.0));
        let coeff = q.adjoint() * &v0;
        let grid = uniform_grid(3.0, 13);
        evolve_states(&m, &s0, &grid, 1e-12, |_, t, s| {
            let phased = DVector::from_fn(coeff.len(), |k, _| coeff[k] * C::from_polar(1.0, -eig.eigenvalues[k] * t));
            let reference = &q * phased;
            for x in 0..1 << n {
                assert!((s.amplitudes()[x] - reference[x]).norm() < 1e-10, "t={t}");
            }
        })
        .unwrap();
    }

    #[test]
    fn norm_energy_and_magnetization_conserved() {
        let l = Lattice::cubic(2, 3, Boundary::Periodic).unwrap();
        let m = CouplingModel::on_lattice(&l, DecayExponent::Finite(3.0), 1.0, -0.5);
        let h = ExactHamiltonian::new(&m).unwrap();
        let s0 = coherent_state(9, [1.0, 0.3, 0.4]).unwrap();
        let e0 = h.energy(&s0).unwrap();
        let sz0 = collective_moments(&s0).mean[2];
        evolve_states(&m, &s0, &uniform_grid(8.0, 41), DEFAULT_EXACT_TOL, |_, _, s| {
            assert!((s.norm() - 1.0).abs() < 1e-10);
            assert!((h.energy(s).unwrap() - e0).abs() < 1e-8);
            assert!((collective_moments(s).mean[2] - sz0).abs() < 1e-10);
        })
        .unwrap();
    }

    #[test]
    fn isotropic_stays_coherent() {
        let l = Lattice::cubic(2, 3, Boundary::Periodic).unwrap();
        let m = CouplingModel::on_lattice(&l, DecayExponent::Finite(3.0), 1.0, 1.0);
        let s = evolve_exact(&m, &initial_product_state(9, Axis::X).unwrap(), &uniform_grid(5.0, 11), 1e-10).unwrap();
        assert!(s.anisotropy.is_none());
        for p in &s.points {
            assert!((p.xi2.unwrap() - 1.0).abs() < 1e-9);
            assert!((p.s2 - 4.5 * 5.5).abs() < 1e-9);
        }
    }

    #[test]
    fn husimi_examples() {
        let n = 5;
        let s = initial_product_state(n, Axis::X).unwrap();
        let q = husimi_q(&s, &[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]]).unwrap();
        assert!((q[0] - 1.0).abs() < 1e-14);
        assert!(q[1].abs() < 1e-14);
        assert!((q[2] - 0.5f64.powi(n as i32)).abs() < 1e-14);
        assert!((q[3] - 0.5f64.powi(n as i32)).abs() < 1e-14);
        assert!(husimi_q(&s, &[[0.0; 3]]).is_err());
    }

    #[test]
    fn husimi_csv_normalization() {
        // for a symmetric state the integral of Q over the sphere is 4 pi / (N + 1)
        let n = 3;
        let s = coherent_state(n, [0.2, -0.5, 0.7]).unwrap();
        let (nt, np) = (200, 200);
        let text = husimi_csv(&s, nt, np).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("theta,phi,Q"));
        let mut integral = 0.0;
        for line in lines {
            let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
            integral += f[2] * f[0].sin() * (PI / nt as f64) * (2.0 * PI / np as f64);
        }
        assert!((integral - 4.0 * PI / (n as f64 + 1.0)).abs() < 1e-3, "{integral}");
    }
}
