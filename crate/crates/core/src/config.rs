//! Declarative run configuration shared by every command.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::dtwa;
use crate::error::{Error, Result};
use crate::exact::{DEFAULT_EXACT_TOL, MAX_EXACT_SPINS};
use crate::lattice::{Boundary, CouplingModel, DecayExponent};
use crate::series::uniform_grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    #[default]
    Dtwa,
    Exact,
    Oat,
    Ising,
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dtwa" => Ok(Engine::Dtwa),
            "exact" => Ok(Engine::Exact),
            "oat" => Ok(Engine::Oat),
            "ising" => Ok(Engine::Ising),
            other => Err(Error::invalid(format!("unknown engine `{other}`"))),
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Dtwa => "dtwa",
            Engine::Exact => "exact",
            Engine::Oat => "oat",
            Engine::Ising => "ising",
        })
    }
}

pub const DEFAULT_TAU_MAX: f64 = 10.0;
pub const DEFAULT_POINTS: usize = 201;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub engine: Engine,
    pub dims: usize,
    /// Linear lattice sizes.
    pub sizes: Vec<usize>,
    pub boundary: Boundary,
    pub alphas: Vec<DecayExponent>,
    pub jz_over_jperp: Vec<f64>,
    pub j_perp: f64,
    /// Fixed time window; takes precedence over `tau_max`.
    pub t_max: Option<f64>,
    /// Window in units of `1/|J_z - J_perp|`.
    pub tau_max: Option<f64>,
    pub points: usize,
    pub trajectories: Option<usize>,
    pub seed: u64,
    pub tol: Option<f64>,
    pub fillings: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            engine: Engine::Dtwa,
            dims: 2,
            sizes: Vec::new(),
            boundary: Boundary::Periodic,
            alphas: Vec::new(),
            jz_over_jperp: Vec::new(),
            j_perp: 1.0,
            t_max: None,
            tau_max: None,
            points: DEFAULT_POINTS,
            trajectories: None,
            seed: 0,
            tol: None,
            fillings: vec![1.0],
        }
    }
}

impl RunConfig {
    /// Checks shared by every command that evolves spins.
    pub fn validate(&self) -> Result<()> {
        self.validate_geometry()?;
        if self.alphas.is_empty() {
            return Err(Error::invalid("no alpha values given"));
        }
        if self.jz_over_jperp.is_empty() {
            return Err(Error::invalid("no J_z/J_perp values given"));
        }
        if !self.jz_over_jperp.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("J_z/J_perp values must be finite"));
        }
        if !(self.j_perp.is_finite() && self.j_perp != 0.0) {
            return Err(Error::invalid("J_perp must be finite and nonzero"));
        }
        if self.points < 2 {
            return Err(Error::invalid("time grid needs at least two points"));
        }
        for w in [self.t_max, self.tau_max].into_iter().flatten() {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::invalid("time window must be positive"));
            }
        }
        if self.trajectories.is_some_and(|n| n < 2) {
            return Err(Error::invalid("at least two trajectories are required"));
        }
        if self.tol.is_some_and(|t| !(t > 0.0 && t < 1.0)) {
            return Err(Error::invalid("tolerance must lie in (0, 1)"));
        }
        if self.fillings.is_empty() || !self.fillings.iter().all(|f| *f > 0.0 && *f <= 1.0) {
            return Err(Error::invalid("fillings must lie in (0, 1]"));
        }
        if self.engine == Engine::Exact {
            let largest = self
                .sizes
                .iter()
                .flat_map(|&l| self.fillings.iter().map(move |&f| expected_sites(l.pow(self.dims as u32), f)))
                .max()
                .unwrap_or(0);
            if largest > MAX_EXACT_SPINS {
                return Err(Error::Capacity {
                    requested: largest,
                    limit: MAX_EXACT_SPINS,
                });
            }
        }
        Ok(())
    }

    pub fn validate_geometry(&self) -> Result<()> {
        if !(1..=3).contains(&self.dims) {
            return Err(Error::invalid("dims must be 1, 2 or 3"));
        }
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(Error::invalid("sizes must be a nonempty list of positive integers"));
        }
        Ok(())
    }

    pub fn tolerance(&self) -> f64 {
        self.tol.unwrap_or(match self.engine {
            Engine::Exact => DEFAULT_EXACT_TOL,
            _ => dtwa::DEFAULT_TOL,
        })
    }

    /// Output grid for one model.
    pub fn time_grid(&self, model: &CouplingModel) -> Result<Vec<f64>> {
        let t_max = match (self.t_max, model.anisotropy()) {
            (Some(t), _) => t,
            (None, Some(rate)) => self.tau_max.unwrap_or(DEFAULT_TAU_MAX) / rate,
            (None, None) => {
                // isotropic point: fall back to units of the largest coupling
                let scale = model.j_perp.abs().max(model.j_z.abs());
                if scale == 0.0 {
                    return Err(Error::invalid("all couplings vanish; give t_max"));
                }
                self.tau_max.unwrap_or(DEFAULT_TAU_MAX) / scale
            }
        };
        Ok(uniform_grid(t_max, self.points))
    }
}

/// Number of sites kept by dilution.
pub fn expected_sites(capacity: usize, filling: f64) -> usize {
    if filling >= 1.0 {
        capacity
    } else {
        (filling * capacity as f64).round() as usize
    }
}

/// Grid values are rounded to this many decimals to absorb step arithmetic.
const GRID_DECIMALS: f64 = 1e12;

fn round_grid(v: f64) -> f64 {
    let r = (v * GRID_DECIMALS).round() / GRID_DECIMALS;
    r + 0.0
}

/// `start:stop:step` (inclusive within half a step) or a comma list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let text = text.trim();
    if text.is_empty() {
        return Err(Error::Parse("empty grid".into()));
    }
    let num = |s: &str| -> Result<f64> {
        let v: f64 = s.trim().parse().map_err(|_| Error::Parse(format!("`{s}` is not a number")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Parse(format!("`{s}` is not finite")))
        }
    };
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!("grid `{text}` must be start:stop:step")));
        }
        let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if step == 0.0 || (stop - start) * step < 0.0 {
            return Err(Error::Parse(format!("grid `{text}` never reaches its end")));
        }
        let count = ((stop - start) / step + 0.5).floor() as usize + 1;
        if count > 1_000_000 {
            return Err(Error::Parse(format!("grid `{text}` is too large")));
        }
        return Ok((0..count).map(|k| round_grid(start + k as f64 * step)).collect());
    }
    text.split(',').map(|s| num(s).map(round_grid)).collect()
}

pub fn parse_alphas(text: &str) -> Result<Vec<DecayExponent>> {
    if text.contains(':') {
        return parse_grid(text)?.into_iter().map(DecayExponent::new).collect();
    }
    text.split(',')
        .map(|s| s.trim().parse::<DecayExponent>().map_err(|e| Error::Parse(e.to_string())))
        .collect()
}

pub fn parse_sizes(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("`{s}` is not a positive integer")))
        })
        .collect()
}
