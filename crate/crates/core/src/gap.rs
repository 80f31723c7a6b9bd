//! Spin-wave energies and the spectral gap of the power-law XY model.
//!
//! Lattice offsets run over the symmetric window `(-L/2, L/2]` per axis,
//! which coincides with the minimum-image convention for every `L`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fit::{fit_linear, FitResult};
use crate::lattice::DecayExponent;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapSpec {
    pub size: usize,
    pub dims: usize,
    pub exponent: DecayExponent,
    pub j_perp: f64,
}

impl GapSpec {
    pub fn new(size: usize, dims: usize, exponent: DecayExponent, j_perp: f64) -> Result<Self> {
        if size < 2 {
            return Err(Error::invalid("gap needs L >= 2"));
        }
        if !(1..=3).contains(&dims) {
            return Err(Error::invalid("dimension must be 1, 2 or 3"));
        }
        Ok(GapSpec {
            size,
            dims,
            exponent,
            j_perp,
        })
    }

    pub fn epsilon(&self) -> f64 {
        2.0 / self.size as f64
    }

    pub fn n_sites(&self) -> usize {
        self.size.pow(self.dims as u32)
    }

    fn offsets(&self) -> Vec<i64> {
        let l = self.size as i64;
        (-(l - 1) / 2..=l / 2).collect()
    }
}

/// `E_k = -J_perp sum_{n != 0} (1 - cos k.n) / |n|^alpha` with `k = 2 pi m / L`.
pub fn spin_wave_energy(spec: &GapSpec, mode: &[i64]) -> Result<f64> {
    if mode.len() != spec.dims {
        return Err(Error::DimensionMismatch {
            expected: spec.dims,
            actual: mode.len(),
        });
    }
    let k: Vec<f64> = mode.iter().map(|&m| 2.0 * PI * m as f64 / spec.size as f64).collect();
    let window = spec.offsets();
    let mut total = 0.0;
    let mut idx = vec![0usize; spec.dims];
    loop {
        let n: Vec<i64> = idx.iter().map(|&i| window[i]).collect();
        let d2: i64 = n.iter().map(|v| v * v).sum();
        if d2 != 0 {
            let phase: f64 = k.iter().zip(&n).map(|(k, n)| k * *n as f64).sum();
            total += (1.0 - phase.cos()) * spec.exponent.weight(d2 as f64);
        }
        let mut axis = 0;
        loop {
            if axis == spec.dims {
                return Ok(-spec.j_perp * total);
            }
            idx[axis] += 1;
            if idx[axis] < window.len() {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

/// `|E_k|` at the softest nonzero mode `k = (2 pi / L, 0, ...)`.
pub fn gap(spec: &GapSpec) -> Result<f64> {
    let mut mode = vec![0; spec.dims];
    mode[0] = 1;
    Ok(spin_wave_energy(spec, &mode)?.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub size: usize,
    pub epsilon: f64,
    pub energy: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapScaling {
    pub dims: usize,
    pub exponent: DecayExponent,
    pub j_perp: f64,
    pub rows: Vec<GapRow>,
    /// Fit of `ln gap` against `ln epsilon`.
    pub fit: Option<FitResult>,
    /// `-d ln I / d ln epsilon` with `I = gap / (|J_perp| epsilon^(alpha - D))`.
    pub gamma: Option<f64>,
}

impl GapScaling {
    pub fn slope(&self) -> Option<f64> {
        self.fit.as_ref().map(|f| f.params[1])
    }
}

pub fn gap_scaling(sizes: &[usize], dims: usize, exponent: DecayExponent, j_perp: f64) -> Result<GapScaling> {
    if sizes.is_empty() {
        return Err(Error::invalid("no sizes given"));
    }
    let rows = sizes
        .iter()
        .map(|&l| {
            let spec = GapSpec::new(l, dims, exponent, j_perp)?;
            let mut mode = vec![0; dims];
            mode[0] = 1;
            let energy = spin_wave_energy(&spec, &mode)?;
            Ok(GapRow {
                size: l,
                epsilon: spec.epsilon(),
                energy,
                gap: energy.abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let usable = rows.len() >= 3 && rows.iter().all(|r| r.gap > 0.0);
    let fit = if usable {
        let x: Vec<f64> = rows.iter().map(|r| r.epsilon.ln()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.gap.ln()).collect();
        Some(fit_linear(&x, &y, None)?)
    } else {
        None
    };
    let gamma = match (exponent, &fit) {
        (DecayExponent::Finite(alpha), Some(f)) => Some(alpha - dims as f64 - f.params[1]),
        _ => None,
    };
    Ok(GapScaling {
        dims,
        exponent,
        j_perp,
        rows,
        fit,
        gamma,
    })
}

pub const GAP_COLUMNS: [&str; 8] = ["L", "epsilon", "alpha", "D", "E_min", "gap", "slope", "gamma"];
