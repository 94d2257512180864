//! Carleman weight functions on the truncated waveguide: the pseudoconvexity
//! checker for α, the weights β, φ, η, η₀, and the weighted norms.
//!
//! With K = r‖α‖_∞ the factor e^{2K} makes e^{−sη} underflow f64 for any
//! practical s, so weighted squared norms are accumulated and returned as
//! natural logarithms ([`LogNorm`]).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CrossSection, SubBoundary, WaveguideGrid};
use crate::solver::trace::BoundarySeries;

/// α(x') = |x' − x'₀|² for an exterior center x'₀.
pub fn quadratic_alpha(cs: &CrossSection, x0: f64) -> Result<Vec<f64>> {
    if cs.contains_closure(x0) {
        return Err(Error::InvalidCenter {
            center: x0,
            lo: 0.0,
            hi: cs.extent,
        });
    }
    Ok(cs.coords().iter().map(|x| (x - x0) * (x - x0)).collect())
}

/// First derivative on the cross-section; second-order one-sided at the ends.
pub fn gradient_1d(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    for k in 1..n - 1 {
        out[k] = (f[k + 1] - f[k - 1]) / (2.0 * h);
    }
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    out[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
    out
}

/// Second derivative; second-order one-sided at the ends when four nodes exist.
pub fn second_derivative_1d(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let h2 = h * h;
    let mut out = vec![0.0; n];
    for k in 1..n - 1 {
        out[k] = (f[k + 1] - 2.0 * f[k] + f[k - 1]) / h2;
    }
    if n >= 4 {
        out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h2;
        out[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) / h2;
    } else {
        out[0] = out[1];
        out[n - 1] = out[n - 2];
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCondition {
    pub passed: bool,
    /// c in |∇'α| ≥ c.
    pub lower_bound: f64,
    pub witness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySignCondition {
    pub passed: bool,
    /// max of ∂_ν α over γ ∖ γ*; `None` when γ* is all of γ.
    pub worst: Option<f64>,
    pub witness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityCondition {
    pub passed: bool,
    /// λ₀ above which the bound holds uniformly.
    pub lambda0: f64,
    /// λ supplied by the caller; the condition requires λ₀ ≤ λ.
    pub lambda: f64,
    /// c in λ|∇'α·ζ|² + D²α(ζ, ζ) ≥ c|ζ|², valid for every λ ≥ λ₀.
    pub lower_bound: f64,
    pub witness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub gradient: GradientCondition,
    pub boundary_sign: BoundarySignCondition,
    pub convexity: ConvexityCondition,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.gradient.passed && self.boundary_sign.passed && self.convexity.passed
    }
}

/// Checks conditions (i)–(iii) for α sampled on an interval cross-section.
///
/// Minima are taken over all nodes of ω̄ (the infimum over ω equals the
/// minimum over the closure for continuous α); boundary nodes use one-sided
/// second-order stencils.
pub fn check_pseudoconvexity(cs: &CrossSection, alpha: &[f64], gamma_star: &SubBoundary, lambda: f64) -> Result<AssumptionReport> {
    if alpha.len() != cs.nodes {
        return Err(Error::ShapeMismatch {
            expected: cs.nodes,
            got: alpha.len(),
        });
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            message: format!("must be positive, got {lambda}"),
        });
    }
    let h = cs.spacing();
    let grad = gradient_1d(alpha, h);
    let hess = second_derivative_1d(alpha, h);
    let xs = cs.coords();

    let (gi, gmin) = argmin(grad.iter().map(|g| g.abs()));
    let gscale = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
    let gradient = GradientCondition {
        passed: gmin > 1e-8 * gscale.max(1e-300),
        lower_bound: gmin,
        witness: xs[gi],
    };

    let mut worst: Option<(f64, f64)> = None;
    for b in &cs.boundary {
        if gamma_star.contains(b.index) {
            continue;
        }
        let dnu = grad[b.index] * b.normal;
        if worst.is_none_or(|(w, _)| dnu > w) {
            worst = Some((dnu, xs[b.index]));
        }
    }
    let boundary_sign = BoundarySignCondition {
        passed: worst.is_none_or(|(w, _)| w < 0.0),
        worst: worst.map(|w| w.0),
        witness: worst.map(|w| w.1),
    };

    // n = 2: the quadratic form is (λα'² + α'')ζ². The smallest admissible λ₀ is
    // max(0, max −α''/α'²); if that is positive, λ₀ is doubled so the bound is strict.
    let threshold = grad
        .iter()
        .zip(&hess)
        .map(|(g, d)| if g.abs() > 0.0 { -d / (g * g) } else if *d > 0.0 { f64::NEG_INFINITY } else { f64::INFINITY })
        .fold(0.0_f64, f64::max);
    let lambda0 = if threshold > 0.0 { 2.0 * threshold } else { 0.0 };
    let (ci, cmin) = argmin(grad.iter().zip(&hess).map(|(g, d)| lambda0 * g * g + d));
    let convexity = ConvexityCondition {
        passed: lambda0.is_finite() && lambda0 <= lambda && cmin > 0.0,
        lambda0,
        lambda,
        lower_bound: cmin,
        witness: xs[ci],
    };

    Ok(AssumptionReport {
        gradient,
        boundary_sign,
        convexity,
    })
}

fn argmin(values: impl Iterator<Item = f64>) -> (usize, f64) {
    values
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, v)| if v < bv { (i, v) } else { (bi, bv) })
}

/// Weight functions β = α + K, φ = e^{2β}/((T+t)(T−t)), η = (e^{2K} − e^β)/((T+t)(T−t)).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightBundle {
    pub alpha: Vec<f64>,
    pub r: f64,
    pub k: f64,
    pub beta: Vec<f64>,
    pub horizon: f64,
    pub s: f64,
    /// ∂_ν β = ∂_ν α at each cross-section node (zero away from γ).
    pub normal_derivative: Vec<f64>,
}

impl WeightBundle {
    pub fn build(cs: &CrossSection, alpha: Vec<f64>, r: f64, horizon: f64, s: f64) -> Result<Self> {
        if !(r > 1.0) {
            return Err(Error::InvalidParameter {
                name: "r",
                message: format!("must exceed 1 so that η > 0, got {r}"),
            });
        }
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::InvalidParameter {
                name: "s",
                message: format!("must be non-negative, got {s}"),
            });
        }
        if !(horizon > 0.0) {
            return Err(Error::InvalidParameter {
                name: "horizon",
                message: format!("must be positive, got {horizon}"),
            });
        }
        if alpha.len() != cs.nodes {
            return Err(Error::ShapeMismatch {
                expected: cs.nodes,
                got: alpha.len(),
            });
        }
        let sup = alpha.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
        let k = r * sup;
        let beta = alpha.iter().map(|a| a + k).collect();
        let grad = gradient_1d(&alpha, cs.spacing());
        let mut normal_derivative = vec![0.0; cs.nodes];
        for b in &cs.boundary {
            normal_derivative[b.index] = grad[b.index] * b.normal;
        }
        Ok(WeightBundle {
            alpha,
            r,
            k,
            beta,
            horizon,
            s,
            normal_derivative,
        })
    }

    pub fn with_s(&self, s: f64) -> Self {
        WeightBundle { s, ..self.clone() }
    }

    fn time_factor(&self, t: f64) -> f64 {
        (self.horizon + t) * (self.horizon - t)
    }

    pub fn phi(&self, i: usize, t: f64) -> f64 {
        (2.0 * self.beta[i]).exp() / self.time_factor(t)
    }

    pub fn eta(&self, i: usize, t: f64) -> f64 {
        ((2.0 * self.k).exp() - self.beta[i].exp()) / self.time_factor(t)
    }

    /// η₀(x) = η(x, 0).
    pub fn eta0(&self, i: usize) -> f64 {
        self.eta(i, 0.0)
    }
}

/// Pointwise sanity of the weights over cross-section nodes × sampled times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSanity {
    pub eta_positive: bool,
    pub eta_above_eta0: bool,
    pub eta0_bounded: bool,
    pub min_eta: f64,
    pub max_eta0: f64,
    /// e^{2K}/T².
    pub eta0_bound: f64,
}

impl WeightSanity {
    pub fn passed(&self) -> bool {
        self.eta_positive && self.eta_above_eta0 && self.eta0_bounded
    }
}

/// Checks η > 0, η ≥ η₀ and η₀ ≤ e^{2K}/T² at every node and every sample
/// time in the open interval (−T, T).
pub fn check_weights(w: &WeightBundle, times: &[f64]) -> WeightSanity {
    let bound = (2.0 * w.k).exp() / (w.horizon * w.horizon);
    let mut out = WeightSanity {
        eta_positive: true,
        eta_above_eta0: true,
        eta0_bounded: true,
        min_eta: f64::INFINITY,
        max_eta0: f64::NEG_INFINITY,
        eta0_bound: bound,
    };
    for i in 0..w.alpha.len() {
        let e0 = w.eta0(i);
        out.max_eta0 = out.max_eta0.max(e0);
        out.eta0_bounded &= e0 <= bound;
        for &t in times.iter().filter(|t| t.abs() < w.horizon) {
            let e = w.eta(i, t);
            out.min_eta = out.min_eta.min(e);
            out.eta_positive &= e > 0.0;
            out.eta_above_eta0 &= e >= e0;
        }
    }
    out
}

/// Natural logarithm of a weighted squared L² norm. `-inf` encodes zero.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LogNorm(pub f64);

impl LogNorm {
    pub const ZERO: LogNorm = LogNorm(f64::NEG_INFINITY);

    pub fn value(self) -> f64 {
        self.0.exp()
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    pub fn add(self, other: LogNorm) -> LogNorm {
        let mut acc = LogSumExp::default();
        acc.push(self.0);
        acc.push(other.0);
        acc.finish()
    }

    /// log of `factor · value`.
    pub fn scale(self, factor: f64) -> LogNorm {
        LogNorm(self.0 + factor.ln())
    }
}

/// Streaming log-sum-exp in a fixed order.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }
}

impl LogSumExp {
    pub fn push(&mut self, log_term: f64) {
        if log_term == f64::NEG_INFINITY {
            return;
        }
        if log_term > self.max {
            self.sum = self.sum * (self.max - log_term).exp() + 1.0;
            self.max = log_term;
        } else {
            self.sum += (log_term - self.max).exp();
        }
    }

    pub fn finish(self) -> LogNorm {
        if self.max == f64::NEG_INFINITY {
            LogNorm::ZERO
        } else {
            LogNorm(self.max + self.sum.ln())
        }
    }
}

/// Field handed to [`weighted_norm`], tagged by the domain it lives on.
#[derive(Debug, Clone, Copy)]
pub enum WeightedField<'a> {
    /// Snapshots on Ω × (−T, T) at the given times (endpoints may be included).
    Interior { times: &'a [f64], snapshots: &'a [Vec<Complex64>] },
    /// Field on Ω, weighted by e^{−sη₀}.
    Initial(&'a [Complex64]),
    /// Trace on Γ* × (−T, T), weighted by e^{−sη₀} φ^{1/2} |∂_νβ|^{1/2}.
    Boundary(&'a BoundarySeries),
}

/// Weighted squared L² norm, in log form.
///
/// Interior: ‖e^{−sη} f‖². The weight at t = ±T is its limit (0 for s > 0,
/// 1 for s = 0). Boundary: φ is singular at ±T, so only open-interval time
/// nodes contribute (trapezoid with the integrand extended by zero).
pub fn weighted_norm(field: WeightedField<'_>, w: &WeightBundle, grid: &WaveguideGrid) -> Result<LogNorm> {
    let s = w.s;
    let mut acc = LogSumExp::default();
    match field {
        WeightedField::Initial(f) => {
            check_len(f.len(), grid.len())?;
            for (k, v) in f.iter().enumerate() {
                let (i, j) = grid.split(k);
                push_term(&mut acc, grid.weight(i, j).ln() - 2.0 * s * w.eta0(i), *v);
            }
        }
        WeightedField::Interior { times, snapshots } => {
            if times.len() != snapshots.len() || times.len() < 2 {
                return Err(Error::Contract("interior field needs matching times and at least two snapshots".into()));
            }
            let tw = time_weights(times, w.horizon, false)?;
            for ((t, snap), wt) in times.iter().zip(snapshots).zip(&tw) {
                check_len(snap.len(), grid.len())?;
                if *wt == 0.0 {
                    continue;
                }
                let at_end = (t.abs() - w.horizon).abs() <= 1e-12 * w.horizon;
                if at_end && s > 0.0 {
                    continue;
                }
                for (k, v) in snap.iter().enumerate() {
                    let (i, j) = grid.split(k);
                    let eta = if at_end { 0.0 } else { w.eta(i, *t) };
                    push_term(&mut acc, (grid.weight(i, j) * wt).ln() - 2.0 * s * eta, *v);
                }
            }
        }
        WeightedField::Boundary(series) => {
            if !series.is_extended() {
                return Err(Error::Contract(
                    "boundary weighted norm needs a trace extended to (−T, T)".into(),
                ));
            }
            let tw = time_weights(&series.times, w.horizon, true)?;
            for (n, &node) in series.nodes.iter().enumerate() {
                let dnu = w.normal_derivative[node].abs();
                if dnu == 0.0 {
                    continue;
                }
                for (m, (t, wt)) in series.times.iter().zip(&tw).enumerate() {
                    if *wt == 0.0 {
                        continue;
                    }
                    let log_phi = 2.0 * w.beta[node] - w.time_factor(*t).ln();
                    let base = wt.ln() - 2.0 * s * w.eta0(node) + log_phi + dnu.ln();
                    for (j, v) in series.values[n][m].iter().enumerate() {
                        push_term(&mut acc, base + grid.axial_weight(j).ln(), *v);
                    }
                }
            }
        }
    }
    Ok(acc.finish())
}

fn push_term(acc: &mut LogSumExp, log_weight: f64, v: Complex64) {
    let mag2 = v.norm_sqr();
    if mag2 > 0.0 {
        acc.push(log_weight + mag2.ln());
    }
}

fn check_len(got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::ShapeMismatch { expected, got });
    }
    Ok(())
}

/// Trapezoid weights on a uniform time grid; with `open`, nodes at ±T get weight 0
/// and their neighbors the full spacing.
fn time_weights(times: &[f64], horizon: f64, open: bool) -> Result<Vec<f64>> {
    let n = times.len();
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(Error::Contract("time samples must be increasing".into()));
    }
    let mut out = vec![dt; n];
    let is_end = |t: f64| (t.abs() - horizon).abs() <= 1e-12 * horizon;
    for (k, t) in times.iter().enumerate() {
        if open && is_end(*t) {
            out[k] = 0.0;
        } else if k == 0 || k + 1 == n {
            out[k] = 0.5 * dt;
        }
    }
    Ok(out)
}
