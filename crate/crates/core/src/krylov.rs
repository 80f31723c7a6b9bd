//! Short-iterate Lanczos propagation of `exp(-i H t)` for Hermitian `H`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C;

use crate::error::{Error, Result};

pub const DEFAULT_KRYLOV_DIM: usize = 30;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KrylovStats {
    pub steps: usize,
    pub rejected: usize,
    pub applications: usize,
}

fn dot(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

struct Basis {
    vectors: Vec<Vec<C>>,
    /// Eigenvalues and eigenvectors of the projected tridiagonal matrix.
    values: Vec<f64>,
    vecs: DMatrix<f64>,
    /// Norm of the residual direction; zero on an invariant subspace.
    beta_last: f64,
    scale: f64,
}

impl Basis {
    fn dim(&self) -> usize {
        self.values.len()
    }

    /// Coefficients of `exp(-i T s) e_1` in the Lanczos basis.
    fn coefficients(&self, s: f64) -> Vec<C> {
        let m = self.dim();
        let phases: Vec<C> = (0..m)
            .map(|l| C::from_polar(self.vecs[(0, l)], -self.values[l] * s))
            .collect();
        (0..m)
            .map(|k| (0..m).map(|l| phases[l] * self.vecs[(k, l)]).sum())
            .collect()
    }

    fn error(&self, s: f64) -> f64 {
        if self.beta_last == 0.0 {
            return 0.0;
        }
        let c = self.coefficients(s);
        self.scale * self.beta_last * c[self.dim() - 1].norm()
    }

    fn assemble(&self, s: f64, out: &mut [C]) {
        let c = self.coefficients(s);
        out.fill(C::new(0.0, 0.0));
        for (v, &ck) in self.vectors.iter().zip(&c) {
            let ck = ck * self.scale;
            for (o, x) in out.iter_mut().zip(v) {
                *o += ck * x;
            }
        }
    }
}

fn lanczos<A>(apply: &A, psi: &[C], max_dim: usize, stats: &mut KrylovStats) -> Basis
where
    A: Fn(&[C], &mut [C]),
{
    let n = psi.len();
    let scale = norm(psi);
    let mut vectors = vec![psi.iter().map(|x| x / scale).collect::<Vec<C>>()];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![C::new(0.0, 0.0); n];
    let mut beta_last = 0.0;
    let max_dim = max_dim.min(n).max(1);
    for j in 0..max_dim {
        apply(&vectors[j], &mut w);
        stats.applications += 1;
        let a = dot(&vectors[j], &w).re;
        alpha.push(a);
        // two passes of classical Gram-Schmidt against the whole basis
        for _ in 0..2 {
            for v in &vectors {
                let p = dot(v, &w);
                for (x, y) in w.iter_mut().zip(v) {
                    *x -= p * y;
                }
            }
        }
        let b = norm(&w);
        let h_scale = a.abs().max(beta.last().copied().unwrap_or(0.0)).max(1e-300);
        if b <= 1e-13 * h_scale || j + 1 == max_dim {
            beta_last = if b <= 1e-13 * h_scale { 0.0 } else { b };
            break;
        }
        beta.push(b);
        vectors.push(w.iter().map(|x| x / b).collect());
    }
    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |i, k| {
        if i == k {
            alpha[i]
        } else if i + 1 == k {
            beta[i]
        } else if k + 1 == i {
            beta[k]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    Basis {
        vectors,
        values: eig.eigenvalues.iter().copied().collect(),
        vecs: eig.eigenvectors,
        beta_last,
        scale,
    }
}

/// Propagate `psi0` under `apply` (which must be Hermitian) and report the
/// state at every time in `t_out` (strictly increasing). The accumulated
/// error estimate over the whole span stays below `tol`.
pub fn propagate<A, F>(
    apply: A,
    psi0: &[C],
    t_out: &[f64],
    tol: f64,
    max_dim: usize,
    mut observe: F,
) -> Result<KrylovStats>
where
    A: Fn(&[C], &mut [C]),
    F: FnMut(usize, f64, &[C]),
{
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    if t_out.windows(2).any(|w| !(w[1] > w[0])) || !t_out.iter().all(|t| t.is_finite()) {
        return Err(Error::invalid("output times must be finite and strictly increasing"));
    }
    let mut stats = KrylovStats::default();
    let Some(&t0) = t_out.first() else {
        return Ok(stats);
    };
    let mut psi = psi0.to_vec();
    observe(0, t0, &psi);
    let t_end = *t_out.last().unwrap();
    let span = t_end - t0;
    let mut t = t0;
    let mut tau_try = span;
    let mut next = 1;
    let mut out = vec![C::new(0.0, 0.0); psi.len()];
    while next < t_out.len() {
        if norm(&psi) == 0.0 {
            return Err(Error::invalid("cannot propagate the zero vector"));
        }
        let basis = lanczos(&apply, &psi, max_dim, &mut stats);
        let remaining = t_end - t;
        let mut tau = tau_try.min(remaining);
        let allowed = |s: f64| (tol * s / span).max(1e-15 * basis.scale);
        let mut halved = false;
        while basis.error(tau) > allowed(tau) {
            tau *= 0.5;
            halved = true;
            stats.rejected += 1;
            if tau < 1e-13 * t.abs().max(1.0) {
                return Err(Error::IntegrationFailure {
                    t_reached: t,
                    reason: "Krylov step size underflow".into(),
                });
            }
        }
        let t_new = if tau == remaining { t_end } else { t + tau };
        while next < t_out.len() && t_out[next] <= t_new {
            basis.assemble(t_out[next] - t, &mut out);
            observe(next, t_out[next], &out);
            next += 1;
        }
        basis.assemble(t_new - t, &mut psi);
        t = t_new;
        stats.steps += 1;
        tau_try = if halved { tau } else { 2.0 * tau };
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_apply(d: Vec<f64>) -> impl Fn(&[C], &mut [C]) {
        move |x: &[C], y: &mut [C]| {
            for i in 0..x.len() {
                y[i] = x[i] * d[i];
            }
        }
    }

    #[test]
    fn diagonal_phases() {
        let d: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin() * 5.0).collect();
        let psi: Vec<C> = (0..40).map(|i| C::new(1.0 + i as f64, -(i as f64) * 0.5)).collect();
        let grid: Vec<f64> = (0..11).map(|k| k as f64 * 0.7).collect();
        let mut worst: f64 = 0.0;
        propagate(diag_apply(d.clone()), &psi, &grid, 1e-11, 12, |_, t, y| {
            for i in 0..40 {
                let expect = psi[i] * C::from_polar(1.0, -d[i] * t);
                worst = worst.max((y[i] - expect).norm());
            }
        })
        .unwrap();
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn two_level_rabi() {
        // H = sigma_x: |0> -> cos t |0> - i sin t |1>
        let apply = |x: &[C], y: &mut [C]| {
            y[0] = x[1];
            y[1] = x[0];
        };
        let psi = [C::new(1.0, 0.0), C::new(0.0, 0.0)];
        let stats = propagate(apply, &psi, &[0.0, 1.0, 2.5, 40.0], 1e-12, 30, |_, t, y| {
            assert!((y[0] - C::new(t.cos(), 0.0)).norm() < 1e-12);
            assert!((y[1] - C::new(0.0, -t.sin())).norm() < 1e-12);
        })
        .unwrap();
        // invariant subspace of dimension 2: one step covers everything
        assert_eq!(stats.steps, 1);
    }

    #[test]
    fn rejects_bad_grid() {
        let psi = [C::new(1.0, 0.0)];
        assert!(propagate(diag_apply(vec![1.0]), &psi, &[0.0, 0.0], 1e-10, 4, |_, _, _| {}).is_err());
        assert!(propagate(diag_apply(vec![1.0]), &psi, &[0.0, 1.0], 0.0, 4, |_, _, _| {}).is_err());
    }
}
