//! Time series of collective spin moments and their CSV form.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::squeezing::{squeezing_param, to_db};

/// Statistical standard errors of one time point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PointErrors {
    pub mean: [f64; 3],
    pub second: [[f64; 3]; 3],
    pub s2: f64,
    pub xi2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPoint {
    /// `<S_a>`.
    pub mean: [f64; 3],
    /// Symmetrized `<(S_a S_b + S_b S_a)/2>`.
    pub second: [[f64; 3]; 3],
    /// `<S^2>`.
    pub s2: f64,
    /// Squeezing parameter; `None` where the mean spin vanishes.
    pub xi2: Option<f64>,
    pub err: Option<PointErrors>,
}

impl MomentPoint {
    pub fn new(n_spins: usize, mean: [f64; 3], second: [[f64; 3]; 3], s2: f64) -> Self {
        MomentPoint {
            mean,
            second,
            s2,
            xi2: squeezing_param(n_spins, mean, &second).ok(),
            err: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSeries {
    pub n_spins: usize,
    pub times: Vec<f64>,
    /// `|J_z - J_perp|`; `tau = t * anisotropy`. `None` at the isotropic point.
    pub anisotropy: Option<f64>,
    /// Trajectory count for sampled series.
    pub trajectories: Option<usize>,
    pub points: Vec<MomentPoint>,
}

const PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

pub const SERIES_COLUMNS: [&str; 25] = [
    "t", "tau", "Sx", "Sy", "Sz", "Sxx", "Sxy", "Sxz", "Syy", "Syz", "Szz", "S2", "xi2", "xi2_dB", "err_Sx", "err_Sy",
    "err_Sz", "err_Sxx", "err_Sxy", "err_Sxz", "err_Syy", "err_Syz", "err_Szz", "err_S2", "err_xi2",
];

/// Shortest round-trip decimal; blank for missing or non-finite values.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

impl MomentSeries {
    pub fn tau(&self, index: usize) -> Option<f64> {
        self.anisotropy.map(|a| a * self.times[index])
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(SERIES_COLUMNS)?;
        for (i, p) in self.points.iter().enumerate() {
            let mut row = Vec::with_capacity(SERIES_COLUMNS.len());
            row.push(fmt_num(self.times[i]));
            row.push(fmt_opt(self.tau(i)));
            row.extend(p.mean.iter().map(|&v| fmt_num(v)));
            row.extend(PAIRS.iter().map(|&(a, b)| fmt_num(p.second[a][b])));
            row.push(fmt_num(p.s2));
            row.push(fmt_opt(p.xi2));
            row.push(fmt_opt(p.xi2.map(to_db)));
            let e = p.err.unwrap_or(PointErrors {
                xi2: p.xi2.map(|_| 0.0),
                ..Default::default()
            });
            row.extend(e.mean.iter().map(|&v| fmt_num(v)));
            row.extend(PAIRS.iter().map(|&(a, b)| fmt_num(e.second[a][b])));
            row.push(fmt_num(e.s2));
            row.push(fmt_opt(e.xi2));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Uniform grid of `points` times from 0 to `t_max` inclusive.
pub fn uniform_grid(t_max: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..points).map(|i| t_max * i as f64 / (points - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let p = MomentPoint::new(
            2,
            [1.0, 0.0, 0.0],
            [[1.0, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 0.5]],
            2.0,
        );
        let s = MomentSeries {
            n_spins: 2,
            times: vec![0.0],
            anisotropy: None,
            trajectories: None,
            points: vec![p],
        };
        let text = s.to_csv_string().unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), SERIES_COLUMNS.join(","));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), SERIES_COLUMNS.len());
        assert_eq!(row[1], "");
        assert_eq!(row[12], "1");
        assert_eq!(row[13], "0");
        assert!(!text.contains('\r'));
    }

    #[test]
    fn grid_endpoints() {
        let g = uniform_grid(2.0, 5);
        assert_eq!(g, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(uniform_grid(3.0, 1), vec![0.0]);
    }
}
