//! Neumann traces on Σ*, time derivatives by second-order differences, and
//! conjugate extension of time series from [0, T] to (−T, T).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{SubBoundary, WaveguideGrid};

/// One component sampled on γ* × axial nodes × time nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySeries {
    /// Cross-section node indices of γ*.
    pub nodes: Vec<usize>,
    pub times: Vec<f64>,
    /// `values[node][time][axial]`.
    pub values: Vec<Vec<Vec<Complex64>>>,
}

impl BoundarySeries {
    pub fn empty(nodes: &[usize]) -> Self {
        BoundarySeries {
            nodes: nodes.to_vec(),
            times: vec![],
            values: vec![vec![]; nodes.len()],
        }
    }

    /// True once the series covers a symmetric window (−T, T).
    pub fn is_extended(&self) -> bool {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => *a < 0.0 && (a + b).abs() <= 1e-12 * b.abs().max(1.0),
            _ => false,
        }
    }

    pub fn map_series(&self, f: impl Fn(&[Vec<Complex64>]) -> Result<Vec<Vec<Complex64>>>, times: Vec<f64>) -> Result<Self> {
        let values = self.values.iter().map(|s| f(s)).collect::<Result<Vec<_>>>()?;
        Ok(BoundarySeries {
            nodes: self.nodes.clone(),
            times,
            values,
        })
    }

    pub fn difference(&self, other: &Self) -> Result<Self> {
        if self.nodes != other.nodes || self.times.len() != other.times.len() {
            return Err(Error::Contract("boundary series have different layouts".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x - y).collect())
                    .collect()
            })
            .collect();
        Ok(BoundarySeries {
            nodes: self.nodes.clone(),
            times: self.times.clone(),
            values,
        })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for node in out.values.iter_mut() {
            for row in node.iter_mut() {
                row.iter_mut().for_each(|v| *v *= factor);
            }
        }
        out
    }

    /// Squared L² norm over γ* × (−X, X) × time window, trapezoidal in x_n and t.
    /// γ* is a finite point set for n = 2 and carries counting measure.
    pub fn l2_norm_sq(&self, grid: &WaveguideGrid) -> f64 {
        let nt = self.times.len();
        if nt < 2 {
            return 0.0;
        }
        let dt = self.times[1] - self.times[0];
        let mut total = 0.0;
        for node in &self.values {
            for (m, row) in node.iter().enumerate() {
                let wt = crate::grid::trapezoid_weight(m, nt, dt);
                let s: f64 = row.iter().enumerate().map(|(j, v)| grid.axial_weight(j) * v.norm_sqr()).sum();
                total += wt * s;
            }
        }
        total
    }
}

/// ∂_ν u± on Σ* (second-order one-sided normal differences).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeumannTrace {
    pub plus: BoundarySeries,
    pub minus: BoundarySeries,
    pub stencil_order: usize,
}

impl NeumannTrace {
    pub fn new(gamma_star: &SubBoundary) -> Self {
        NeumannTrace {
            plus: BoundarySeries::empty(gamma_star.nodes()),
            minus: BoundarySeries::empty(gamma_star.nodes()),
            stencil_order: 2,
        }
    }

    pub fn components(&self) -> [&BoundarySeries; 2] {
        [&self.plus, &self.minus]
    }

    /// Appends the trace of one snapshot at time `t`.
    pub fn record(&mut self, grid: &WaveguideGrid, t: f64, u_plus: &[Complex64], u_minus: &[Complex64]) {
        for (series, u) in [(&mut self.plus, u_plus), (&mut self.minus, u_minus)] {
            series.times.push(t);
            for (n, &node) in series.nodes.iter().enumerate() {
                series.values[n].push(normal_derivative_line(grid, node, u));
            }
        }
    }

    pub fn difference(&self, other: &Self) -> Result<Self> {
        Ok(NeumannTrace {
            plus: self.plus.difference(&other.plus)?,
            minus: self.minus.difference(&other.minus)?,
            stencil_order: self.stencil_order,
        })
    }

    pub fn time_derivative(&self) -> Result<Self> {
        Ok(NeumannTrace {
            plus: series_time_derivative(&self.plus)?,
            minus: series_time_derivative(&self.minus)?,
            stencil_order: self.stencil_order,
        })
    }

    pub fn conjugate_extend(&self, parity: Parity, tol: f64) -> Result<Self> {
        Ok(NeumannTrace {
            plus: series_conjugate_extend(&self.plus, parity, tol)?,
            minus: series_conjugate_extend(&self.minus, parity, tol)?,
            stencil_order: self.stencil_order,
        })
    }
}

/// Outward normal derivative at cross-section boundary node `node`, for every axial node.
pub fn normal_derivative_line(grid: &WaveguideGrid, node: usize, u: &[Complex64]) -> Vec<Complex64> {
    let n1 = grid.n1();
    let h = grid.h1();
    (0..grid.nn())
        .map(|j| {
            let row = &u[j * n1..(j + 1) * n1];
            if node == 0 {
                // ν = −1: −(−3u₀ + 4u₁ − u₂)/(2h)
                (row[0] * 3.0 - row[1] * 4.0 + row[2]) / (2.0 * h)
            } else {
                (row[n1 - 1] * 3.0 - row[n1 - 2] * 4.0 + row[n1 - 3]) / (2.0 * h)
            }
        })
        .collect()
}

/// Checks γ* against the grid's lateral boundary.
pub fn check_sub_boundary(grid: &WaveguideGrid, gamma_star: &SubBoundary) -> Result<()> {
    for &n in gamma_star.nodes() {
        if grid.cross_section.boundary_node(n).is_none() {
            return Err(Error::Contract(format!("γ* node {n} is not on the grid boundary")));
        }
    }
    Ok(())
}

/// Second-order time derivative of uniformly spaced samples: centered inside,
/// one-sided (−3f⁰ + 4f¹ − f²)/(2Δt) and its mirror at the ends.
pub fn time_derivative_samples(samples: &[Vec<Complex64>], dt: f64) -> Result<Vec<Vec<Complex64>>> {
    let n = samples.len();
    if n < 3 {
        return Err(Error::TooFewSnapshots { needed: 3, got: n });
    }
    let width = samples[0].len();
    let mut out = vec![vec![Complex64::new(0.0, 0.0); width]; n];
    let inv = 1.0 / (2.0 * dt);
    for m in 1..n - 1 {
        for k in 0..width {
            out[m][k] = (samples[m + 1][k] - samples[m - 1][k]) * inv;
        }
    }
    for k in 0..width {
        out[0][k] = (samples[0][k] * -3.0 + samples[1][k] * 4.0 - samples[2][k]) * inv;
        out[n - 1][k] = (samples[n - 1][k] * 3.0 - samples[n - 2][k] * 4.0 + samples[n - 3][k]) * inv;
    }
    Ok(out)
}

fn series_time_derivative(s: &BoundarySeries) -> Result<BoundarySeries> {
    if s.times.len() < 3 {
        return Err(Error::TooFewSnapshots {
            needed: 3,
            got: s.times.len(),
        });
    }
    let dt = s.times[1] - s.times[0];
    s.map_series(|x| time_derivative_samples(x, dt), s.times.clone())
}

/// Symmetry used to extend a series from [0, T] to (−T, T).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parity {
    /// f(−t) = conj f(t).
    State,
    /// f(−t) = −conj f(t).
    Derivative,
}

/// Extends samples at t = 0, Δt, …, T to t = −T, …, T (2M + 1 samples).
///
/// Derivative parity forces Re f(·, 0) = 0; a real part larger than
/// `tol · max |f|` is rejected.
pub fn conjugate_extend_samples(samples: &[Vec<Complex64>], parity: Parity, tol: f64) -> Result<Vec<Vec<Complex64>>> {
    if samples.is_empty() {
        return Err(Error::TooFewSnapshots { needed: 1, got: 0 });
    }
    if parity == Parity::Derivative {
        let scale = samples
            .iter()
            .flat_map(|s| s.iter().map(|v| v.norm()))
            .fold(0.0_f64, f64::max);
        let max_real = samples[0].iter().fold(0.0_f64, |m, v| m.max(v.re.abs()));
        if max_real > tol * scale {
            return Err(Error::ParityViolation { max_real });
        }
    }
    let sign = match parity {
        Parity::State => 1.0,
        Parity::Derivative => -1.0,
    };
    let mut out = Vec::with_capacity(2 * samples.len() - 1);
    for s in samples[1..].iter().rev() {
        out.push(s.iter().map(|v| v.conj() * sign).collect());
    }
    out.extend(samples.iter().cloned());
    Ok(out)
}

fn mirrored_times(times: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = times[1..].iter().rev().map(|t| -t).collect();
    out.extend_from_slice(times);
    out
}

fn series_conjugate_extend(s: &BoundarySeries, parity: Parity, tol: f64) -> Result<BoundarySeries> {
    if s.times.first() != Some(&0.0) {
        return Err(Error::Contract("conjugate extension expects samples starting at t = 0".into()));
    }
    // The parity check is over all γ* nodes jointly.
    if parity == Parity::Derivative {
        let scale = s
            .values
            .iter()
            .flat_map(|n| n.iter().flat_map(|r| r.iter().map(|v| v.norm())))
            .fold(0.0_f64, f64::max);
        let max_real = s
            .values
            .iter()
            .flat_map(|n| n[0].iter().map(|v| v.re.abs()))
            .fold(0.0_f64, f64::max);
        if max_real > tol * scale {
            return Err(Error::ParityViolation { max_real });
        }
    }
    s.map_series(|x| conjugate_extend_samples(x, parity, f64::INFINITY), mirrored_times(&s.times))
}
