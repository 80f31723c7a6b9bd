//! Hypercubic lattices, power-law coupling weights and the coupling model.
//!
//! Sites sit on an integer grid with unit spacing. Under periodic boundaries
//! pair distances use the minimum-image convention independently on each axis.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Periodic,
    Open,
}

impl FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "periodic" | "pbc" => Ok(Boundary::Periodic),
            "open" | "obc" => Ok(Boundary::Open),
            other => Err(Error::invalid(format!("unknown boundary condition `{other}`"))),
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Periodic => f.write_str("periodic"),
            Boundary::Open => f.write_str("open"),
        }
    }
}

/// Power-law decay exponent of the couplings, `1/r^exponent`.
///
/// `Infinite` is the nearest-neighbour limit and is kept exact rather than
/// approximated by a large finite exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ExponentRepr", into = "ExponentRepr")]
pub enum DecayExponent {
    Finite(f64),
    Infinite,
}

impl DecayExponent {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value < 0.0 {
            return Err(Error::invalid(format!("decay exponent must be >= 0, got {value}")));
        }
        if value.is_infinite() {
            Ok(DecayExponent::Infinite)
        } else {
            Ok(DecayExponent::Finite(value))
        }
    }

    pub fn value(self) -> f64 {
        match self {
            DecayExponent::Finite(a) => a,
            DecayExponent::Infinite => f64::INFINITY,
        }
    }

    /// Coupling weight for a squared distance `d2 >= 1`.
    pub fn weight(self, d2: f64) -> f64 {
        match self {
            DecayExponent::Finite(a) if a == 0.0 => 1.0,
            DecayExponent::Finite(a) => d2.powf(-0.5 * a),
            DecayExponent::Infinite => {
                if d2 == 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl FromStr for DecayExponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        match t.to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" | "nn" => Ok(DecayExponent::Infinite),
            _ => {
                let v: f64 = t
                    .parse()
                    .map_err(|_| Error::Parse(format!("invalid decay exponent `{t}`")))?;
                DecayExponent::new(v)
            }
        }
    }
}

impl fmt::Display for DecayExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecayExponent::Finite(a) => write!(f, "{a}"),
            DecayExponent::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ExponentRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<ExponentRepr> for DecayExponent {
    type Error = Error;

    fn try_from(r: ExponentRepr) -> Result<Self> {
        match r {
            ExponentRepr::Number(v) => DecayExponent::new(v),
            ExponentRepr::Text(s) => s.parse(),
        }
    }
}

impl From<DecayExponent> for ExponentRepr {
    fn from(e: DecayExponent) -> Self {
        match e {
            DecayExponent::Finite(a) => ExponentRepr::Number(a),
            DecayExponent::Infinite => ExponentRepr::Text("inf".into()),
        }
    }
}

/// An occupied lattice site: its row-major index in the full grid and its
/// integer coordinates (unused axes are zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Site {
    pub index: usize,
    pub coords: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    lengths: Vec<usize>,
    boundary: Boundary,
    sites: Vec<Site>,
}

impl Lattice {
    /// Fully occupied hypercubic lattice with sites enumerated row-major
    /// (last axis fastest).
    pub fn build(lengths: &[usize], boundary: Boundary) -> Result<Self> {
        let dims = lengths.len();
        if !(1..=3).contains(&dims) {
            return Err(Error::invalid(format!("lattice dimension must be 1, 2 or 3, got {dims}")));
        }
        if let Some(&l) = lengths.iter().find(|&&l| l == 0) {
            return Err(Error::invalid(format!("lattice lengths must be positive, got {l}")));
        }
        let total: usize = lengths.iter().product();
        let sites = (0..total)
            .map(|index| {
                let mut coords = [0usize; 3];
                let mut rest = index;
                for axis in (0..dims).rev() {
                    coords[axis] = rest % lengths[axis];
                    rest /= lengths[axis];
                }
                Site { index, coords }
            })
            .collect();
        Ok(Lattice {
            lengths: lengths.to_vec(),
            boundary,
            sites,
        })
    }

    /// Hypercube of side `size` in `dims` dimensions.
    pub fn cubic(dims: usize, size: usize, boundary: Boundary) -> Result<Self> {
        Self::build(&vec![size; dims], boundary)
    }

    pub fn dims(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    /// Number of occupied sites.
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.lengths.iter().product()
    }

    pub fn is_fully_occupied(&self) -> bool {
        self.len() == self.capacity()
    }

    /// Per-axis separation, folded to the minimum image under periodic
    /// boundaries.
    pub fn separation(&self, a: &Site, b: &Site) -> [usize; 3] {
        let mut sep = [0usize; 3];
        for (axis, &len) in self.lengths.iter().enumerate() {
            let d = a.coords[axis].abs_diff(b.coords[axis]);
            sep[axis] = match self.boundary {
                Boundary::Periodic => d.min(len - d),
                Boundary::Open => d,
            };
        }
        sep
    }

    pub fn squared_distance(&self, a: &Site, b: &Site) -> usize {
        self.separation(a, b).iter().map(|d| d * d).sum()
    }

    /// Keep `round(filling * N)` sites chosen uniformly without replacement.
    /// Positions are not rescaled. `filling == 1` returns the lattice unchanged.
    pub fn dilute(&self, filling: f64, seed: u64) -> Result<Self> {
        if !(filling > 0.0 && filling <= 1.0) {
            return Err(Error::invalid(format!("filling fraction must lie in (0, 1], got {filling}")));
        }
        if filling == 1.0 {
            return Ok(self.clone());
        }
        let keep = (filling * self.len() as f64).round() as usize;
        if keep < 2 {
            return Err(Error::invalid(format!(
                "filling {filling} leaves {keep} occupied site(s); at least 2 are required"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chosen = index::sample(&mut rng, self.len(), keep).into_vec();
        chosen.sort_unstable();
        Ok(Lattice {
            lengths: self.lengths.clone(),
            boundary: self.boundary,
            sites: chosen.into_iter().map(|i| self.sites[i]).collect(),
        })
    }
}

/// Dense symmetric pair-weight matrix with zero diagonal, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    data: Vec<f64>,
}

impl WeightMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let w = f(i, j);
                data[i * n + j] = w;
                data[j * n + i] = w;
            }
        }
        WeightMatrix { n, data }
    }

    pub fn uniform(n: usize) -> Self {
        Self::from_fn(n, |_, _| 1.0)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Sum over ordered pairs `i != j`.
    pub fn ordered_sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// `w_ij = 1/d_ij^exponent` over the occupied sites.
pub fn coupling_weights(lattice: &Lattice, exponent: DecayExponent) -> WeightMatrix {
    let sites = lattice.sites();
    WeightMatrix::from_fn(sites.len(), |i, j| {
        exponent.weight(lattice.squared_distance(&sites[i], &sites[j]) as f64)
    })
}

/// Average weight over ordered pairs `i != j`.
pub fn mean_coupling(weights: &WeightMatrix) -> Result<f64> {
    let n = weights.len();
    if n < 2 {
        return Err(Error::invalid("mean coupling needs at least two sites"));
    }
    Ok(weights.ordered_sum() / (n * (n - 1)) as f64)
}

/// The XXZ model
/// `H = sum_{i != j} w_ij [J_perp s_i.s_j + (J_z - J_perp) s_z,i s_z,j]`.
///
/// The sum runs over ordered pairs, so each unordered pair appears twice.
#[derive(Debug, Clone)]
pub struct CouplingModel {
    weights: Arc<WeightMatrix>,
    pub j_perp: f64,
    pub j_z: f64,
    pub exponent: DecayExponent,
}

impl CouplingModel {
    pub fn new(weights: WeightMatrix, j_perp: f64, j_z: f64, exponent: DecayExponent) -> Self {
        CouplingModel {
            weights: Arc::new(weights),
            j_perp,
            j_z,
            exponent,
        }
    }

    pub fn on_lattice(lattice: &Lattice, exponent: DecayExponent, j_perp: f64, j_z: f64) -> Self {
        Self::new(coupling_weights(lattice, exponent), j_perp, j_z, exponent)
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    pub fn n_sites(&self) -> usize {
        self.weights.len()
    }

    /// `|J_z - J_perp|`, the rate that converts time to the dimensionless
    /// `tau`. `None` at the isotropic point.
    pub fn anisotropy(&self) -> Option<f64> {
        let d = (self.j_z - self.j_perp).abs();
        (d > 0.0).then_some(d)
    }
}

/// XX model generated by a strong transverse drive on an Ising system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveMapping {
    pub j_perp: f64,
    pub j_z: f64,
    /// Drive strength scale the drive must greatly exceed.
    pub min_drive: f64,
}

/// Rotating-frame mapping of a driven Ising model, `(J_perp, J_z) -> (J_z/2, 0)`.
pub fn xx_from_drive(j_z: f64, n_sites: usize, mean_coupling: f64) -> DriveMapping {
    DriveMapping {
        j_perp: j_z / 2.0,
        j_z: 0.0,
        min_drive: 0.5 * n_sites as f64 * mean_coupling * j_z.abs(),
    }
}
