//! Both sides of the Hölder stability estimate over perturbation sweeps, the
//! weighted boundary functionals μ, the tail budget and fitted exponents.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::carleman::{weighted_norm, LogNorm, WeightBundle, WeightedField};
use crate::coefficients::{
    japanese_bracket, make_perturbation, theta_norm, AdmissibleClassParams, CoefficientSet, PerturbationFamily,
    PerturbationSupport, Region,
};
use crate::error::{Error, Result};
use crate::grid::{SubBoundary, WaveguideGrid};
use crate::inversion::exact_initial_v;
use crate::probes::ProbeSet;
use crate::solver::{forward_trace, BoundarySeries, NeumannTrace, Parity, SolverOptions};

pub fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta < 0.5) {
        return Err(Error::config("harness.theta", format!("must lie in (0, 1/2), got {theta}")));
    }
    Ok(())
}

/// μ = ‖e^{−sη₀} φ^{1/2} |∂_νβ|^{1/2} ∂_ν v‖² over Γ* × (−T, T), in log form.
pub fn mu_functional(trace: &BoundarySeries, w: &WeightBundle, grid: &WaveguideGrid) -> Result<LogNorm> {
    weighted_norm(WeightedField::Boundary(trace), w, grid)
}

/// Neumann traces of every probe's evolution under `c`, one solve per probe.
pub fn probe_traces(
    c: &CoefficientSet,
    probes: &ProbeSet,
    gamma_star: &SubBoundary,
    grid: &WaveguideGrid,
    options: SolverOptions,
) -> Result<Vec<NeumannTrace>> {
    probes
        .probes
        .par_iter()
        .map(|p| {
            if p.boundary_data(probes.mode) != crate::solver::BoundaryData::Homogeneous {
                return Err(Error::Contract("the stability harness runs cutoff probes with g = 0".into()));
            }
            forward_trace(&p.u0, c, grid, gamma_star, options).map(|(t, _)| t)
        })
        .collect()
}

/// ∂_ν∂ₜ(u₁ − u₂) on Σ* for every probe.
pub fn trace_derivative_differences(t1: &[NeumannTrace], t2: &[NeumannTrace]) -> Result<Vec<NeumannTrace>> {
    t1.iter().zip(t2).map(|(a, b)| a.difference(b)?.time_derivative()).collect()
}

/// L²(Σ*) norms [‖·⁺‖, ‖·⁻‖] per probe.
pub fn trace_norms(d: &[NeumannTrace], grid: &WaveguideGrid) -> Vec<[f64; 2]> {
    d.iter()
        .map(|t| [t.plus.l2_norm_sq(grid).sqrt(), t.minus.l2_norm_sq(grid).sqrt()])
        .collect()
}

/// Σ_k (‖·^{−,k}‖^θ + ‖·^{+,k}‖^θ).
pub fn holder_sum(norms: &[[f64; 2]], theta: f64) -> f64 {
    norms.iter().map(|[p, m]| m.powf(theta) + p.powf(theta)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeSides {
    pub lhs: f64,
    pub rhs_raw: f64,
    pub trace_norms: Vec<[f64; 2]>,
}

/// lhs = Θ_Ω(c₁, c₂); rhs_raw = θ-power sum of the Neumann differences of ∂ₜu.
pub fn se_sides(
    c1: &CoefficientSet,
    c2: &CoefficientSet,
    probes: &ProbeSet,
    gamma_star: &SubBoundary,
    grid: &WaveguideGrid,
    theta: f64,
    options: SolverOptions,
) -> Result<SeSides> {
    check_theta(theta)?;
    let lhs = theta_norm(c1, c2, grid, Region::Full)?;
    let t1 = probe_traces(c1, probes, gamma_star, grid, options)?;
    let t2 = probe_traces(c2, probes, gamma_star, grid, options)?;
    let d = trace_derivative_differences(&t1, &t2)?;
    let norms = trace_norms(&d, grid);
    Ok(SeSides {
        lhs,
        rhs_raw: holder_sum(&norms, theta),
        trace_norms: norms,
    })
}

/// 4(𝔞² + 𝔭² + 2𝔮²)|ω| ∫_{|x_n|>y} e^{−2κ⟨x_n⟩^ϱ} dx_n.
pub fn decay_budget(params: &AdmissibleClassParams, y: f64) -> f64 {
    let pref = 4.0
        * (params.envelope_a.powi(2) + params.envelope_p.powi(2) + 2.0 * params.envelope_q.powi(2))
        * params.section_measure;
    pref * 2.0 * tail_integral(params.kappa, params.rho, y.max(0.0))
}

/// ∫_y^∞ e^{−2κ⟨x⟩^ϱ} dx by adaptive Simpson on a truncated interval.
pub fn tail_integral(kappa: f64, rho: f64, y: f64) -> f64 {
    let f = |x: f64| (-2.0 * kappa * japanese_bracket(x).powf(rho)).exp();
    let f0 = f(y);
    if f0 == 0.0 {
        return 0.0;
    }
    let mut len = 1.0;
    while f(y + len) > 1e-17 * f0 {
        len *= 2.0;
    }
    adaptive_simpson(&f, y, y + len, 1e-14 * f0 * len.max(1.0), 50)
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: usize) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Everything the sweep needs besides the amplitude list.
#[derive(Debug, Clone)]
pub struct StabilitySetup {
    pub grid: WaveguideGrid,
    pub params: AdmissibleClassParams,
    pub support: PerturbationSupport,
    pub probes: ProbeSet,
    pub gamma_star: SubBoundary,
    /// Weights at s = 0; the s grid is applied per evaluation.
    pub weights: WeightBundle,
    pub theta: f64,
    pub amplitudes: Vec<f64>,
    pub seeds: Vec<u64>,
    pub families: Vec<PerturbationFamily>,
    pub s_grid: Vec<f64>,
    pub y_list: Vec<f64>,
    pub options: SolverOptions,
    /// Relative tolerance of the Re ∂_νv(·,0) = 0 check before extension.
    pub parity_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub family: PerturbationFamily,
    pub seed: u64,
    pub amplitude: f64,
    pub lhs: f64,
    pub rhs_raw: f64,
    /// [‖δ∂_ν∂ₜu^{+,k}‖, ‖δ∂_ν∂ₜu^{−,k}‖] over Σ*.
    pub trace_norms: Vec<[f64; 2]>,
    /// Σ_k of both trace norms; the quantity whose slope is fitted.
    pub trace_norm_total: f64,
    /// ln μ^{±,k} per s: `log_mu[s][k] = [ln μ⁺, ln μ⁻]`.
    pub log_mu: Vec<Vec<[f64; 2]>>,
    /// ln ξ per s.
    pub log_xi: Vec<f64>,
    pub theta_inner: Vec<f64>,
    pub theta_outer: Vec<f64>,
    pub budget: Vec<f64>,
    /// ln of Θ_{Ω_y} / (Θ_{Ω∖Ω_y} + ⟨y⟩^{2(5+ε)/3} ξ), indexed [y][s].
    pub log_split_ratio: Vec<Vec<f64>>,
    /// ln of the weighted coefficient norm per s: entry 0 over Ω, entry 1 + i over Ω_{y_i}.
    pub log_weighted_coefficients: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFit {
    pub family: PerturbationFamily,
    pub seed: u64,
    pub lhs_slope: f64,
    pub trace_slope: f64,
    pub rhs_slope: f64,
    /// Slope of ln lhs against ln rhs_raw.
    pub holder_slope: f64,
    pub max_ratio: f64,
    pub max_ratio_at_largest: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub theta: f64,
    pub s_grid: Vec<f64>,
    pub y_list: Vec<f64>,
    pub rows: Vec<StabilityRow>,
    pub fits: Vec<GroupFit>,
    pub c_hat: f64,
    pub holder_holds: bool,
    pub budget_holds: bool,
}

/// Least-squares slope of ln y against ln x over positive pairs.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn mu_table(d: &[NeumannTrace], setup: &StabilitySetup) -> Result<Vec<Vec<[f64; 2]>>> {
    let extended: Vec<NeumannTrace> = d
        .iter()
        .map(|t| t.conjugate_extend(Parity::Derivative, setup.parity_tolerance))
        .collect::<Result<_>>()?;
    setup
        .s_grid
        .iter()
        .map(|&s| {
            let w = setup.weights.with_s(s);
            extended
                .iter()
                .map(|t| {
                    Ok([
                        mu_functional(&t.plus, &w, &setup.grid)?.0,
                        mu_functional(&t.minus, &w, &setup.grid)?.0,
                    ])
                })
                .collect()
        })
        .collect()
}

fn log_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = crate::carleman::LogSumExp::default();
    for v in values {
        acc.push(v);
    }
    acc.finish().0
}

/// Diagnostics for one pair (c₁ perturbed, c₂ background) given both trace sets.
pub fn pair_row(
    c1: &CoefficientSet,
    c2: &CoefficientSet,
    t1: &[NeumannTrace],
    t2: &[NeumannTrace],
    setup: &StabilitySetup,
    label: (PerturbationFamily, u64, f64),
) -> Result<StabilityRow> {
    let grid = &setup.grid;
    let lhs = theta_norm(c1, c2, grid, Region::Full)?;
    let d = trace_derivative_differences(t1, t2)?;
    let norms = trace_norms(&d, grid);
    let log_mu = mu_table(&d, setup)?;
    let log_xi: Vec<f64> = log_mu.iter().map(|per| log_sum(per.iter().flat_map(|m| *m))).collect();
    let mut theta_inner = vec![];
    let mut theta_outer = vec![];
    let mut budget = vec![];
    let mut log_split_ratio = vec![];
    let delta = c1.difference(c2);
    let restricted: Vec<CoefficientSet> = setup.y_list.iter().map(|&y| restrict_axial(&delta, grid, y)).collect();
    let log_weighted_coefficients = setup
        .s_grid
        .iter()
        .map(|&s| {
            let w = setup.weights.with_s(s);
            std::iter::once(&delta)
                .chain(&restricted)
                .map(|d| weighted_coefficient_norm(d, &w, grid).map(|n| n.0))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let power = 2.0 * (5.0 + setup.probes.epsilon) / 3.0;
    for &y in &setup.y_list {
        let inner = theta_norm(c1, c2, grid, Region::Inner(y))?;
        let outer = theta_norm(c1, c2, grid, Region::Outer(y))?;
        let row: Vec<f64> = log_xi
            .iter()
            .map(|lx| inner.ln() - log_sum([outer.ln(), power * japanese_bracket(y).ln() + lx]))
            .collect();
        theta_inner.push(inner);
        theta_outer.push(outer);
        budget.push(decay_budget(&setup.params, y));
        log_split_ratio.push(row);
    }
    Ok(StabilityRow {
        family: label.0,
        seed: label.1,
        amplitude: label.2,
        lhs,
        rhs_raw: holder_sum(&norms, setup.theta),
        trace_norm_total: norms.iter().map(|[a, b]| a + b).sum(),
        trace_norms: norms,
        log_mu,
        log_xi,
        theta_inner,
        theta_outer,
        budget,
        log_split_ratio,
        log_weighted_coefficients,
    })
}

/// Copy of `delta` with every field zeroed outside Ω_y.
fn restrict_axial(delta: &CoefficientSet, grid: &WaveguideGrid, y: f64) -> CoefficientSet {
    let mut out = delta.clone();
    for f in out.fields_mut() {
        for (k, v) in f.iter_mut().enumerate() {
            if grid.xn(grid.split(k).1).abs() >= y {
                *v = 0.0;
            }
        }
    }
    out
}

pub fn run_stability_experiment(setup: &StabilitySetup) -> Result<StabilityReport> {
    run_stability_experiment_with(setup, |_| {})
}

/// As [`run_stability_experiment`], handing every finished row to `on_row`
/// so callers can persist partial results.
pub fn run_stability_experiment_with(setup: &StabilitySetup, mut on_row: impl FnMut(&StabilityRow)) -> Result<StabilityReport> {
    check_theta(setup.theta)?;
    setup.params.validate()?;
    let grid = &setup.grid;
    let background = &setup.params.background;
    let base = probe_traces(background, &setup.probes, &setup.gamma_star, grid, setup.options)?;

    let mut jobs = vec![];
    for &family in &setup.families {
        for &seed in &setup.seeds {
            for &amp in &setup.amplitudes {
                jobs.push((family, seed, amp));
            }
        }
    }
    let mut rows = Vec::with_capacity(jobs.len());
    for chunk in jobs.chunks(rayon::current_num_threads().max(1)) {
        let done: Vec<Result<StabilityRow>> = chunk
            .par_iter()
            .map(|&(family, seed, amp)| {
                let c1 = make_perturbation(&setup.params, grid, setup.support, family, amp, seed)?;
                let t1 = probe_traces(&c1, &setup.probes, &setup.gamma_star, grid, setup.options)?;
                pair_row(&c1, background, &t1, &base, setup, (family, seed, amp))
            })
            .collect();
        for r in done {
            let r = r?;
            on_row(&r);
            rows.push(r);
        }
    }
    Ok(summarize(setup, rows))
}

/// Fits and the finite-sweep Hölder check over finished rows.
pub fn summarize(setup: &StabilitySetup, rows: Vec<StabilityRow>) -> StabilityReport {
    let mut fits = vec![];
    let mut c_hat = 0.0_f64;
    for &family in &setup.families {
        for &seed in &setup.seeds {
            let group: Vec<&StabilityRow> = rows
                .iter()
                .filter(|r| r.family == family && r.seed == seed && r.amplitude > 0.0)
                .collect();
            if group.is_empty() {
                continue;
            }
            let pts = |f: &dyn Fn(&StabilityRow) -> f64| -> Vec<(f64, f64)> { group.iter().map(|r| (r.amplitude, f(r))).collect() };
            let ratios: Vec<(f64, f64)> = group
                .iter()
                .filter(|r| r.rhs_raw > 0.0)
                .map(|r| (r.amplitude, r.lhs / r.rhs_raw))
                .collect();
            let (mut best_amp, mut best) = (0.0, 0.0_f64);
            for &(a, q) in &ratios {
                if q > best {
                    best = q;
                    best_amp = a;
                }
            }
            let largest = group.iter().map(|r| r.amplitude).fold(0.0, f64::max);
            c_hat = c_hat.max(best);
            let holder_pts: Vec<(f64, f64)> = group.iter().map(|r| (r.rhs_raw, r.lhs)).collect();
            fits.push(GroupFit {
                family,
                seed,
                lhs_slope: log_log_slope(&pts(&|r| r.lhs)).unwrap_or(f64::NAN),
                trace_slope: log_log_slope(&pts(&|r| r.trace_norm_total)).unwrap_or(f64::NAN),
                rhs_slope: log_log_slope(&pts(&|r| r.rhs_raw)).unwrap_or(f64::NAN),
                holder_slope: log_log_slope(&holder_pts).unwrap_or(f64::NAN),
                max_ratio: best,
                max_ratio_at_largest: best_amp == largest,
            });
        }
    }
    let holder_holds = rows.iter().all(|r| r.lhs <= c_hat * r.rhs_raw * (1.0 + 1e-12) || r.lhs == 0.0);
    let budget_holds = rows
        .iter()
        .all(|r| r.theta_outer.iter().zip(&r.budget).all(|(t, b)| t <= b));
    StabilityReport {
        theta: setup.theta,
        s_grid: setup.s_grid.clone(),
        y_list: setup.y_list.clone(),
        rows,
        fits,
        c_hat,
        holder_holds,
        budget_holds,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct B2Row {
    pub s: f64,
    pub probe: usize,
    pub log_lhs: f64,
    pub log_rhs: f64,
    /// ln(LHS / (s^{−3/2} RHS)); `None` when both sides vanish.
    pub log_ratio: Option<f64>,
}

fn weighted_real(f: &[f64], w: &WeightBundle, grid: &WaveguideGrid) -> Result<LogNorm> {
    let z: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    weighted_norm(WeightedField::Initial(&z), w, grid)
}

/// Weighted coefficient part ‖e^{−sη₀}δA‖² + ‖e^{−sη₀}δp‖² + ‖e^{−sη₀}δq⁺‖² + ‖e^{−sη₀}δq⁻‖².
pub fn weighted_coefficient_norm(delta: &CoefficientSet, w: &WeightBundle, grid: &WaveguideGrid) -> Result<LogNorm> {
    let mut total = LogNorm::ZERO;
    for f in delta.fields() {
        total = total.add(weighted_real(f, w, grid)?);
    }
    Ok(total)
}

/// Ratio table for the weighted t = 0 inequality: LHS(s) = Σ± ‖e^{−sη₀} v^{±,k}(·,0)‖²
/// against s^{−3/2}(weighted coefficient norms + s(μ^{+,k} + μ^{−,k})).
/// `log_mu[s][k]` as in [`StabilityRow::log_mu`].
pub fn inequality_b2_diagnostic(
    delta: &CoefficientSet,
    probes: &ProbeSet,
    weights: &WeightBundle,
    s_grid: &[f64],
    log_mu: &[Vec<[f64; 2]>],
    grid: &WaveguideGrid,
) -> Result<Vec<B2Row>> {
    if log_mu.len() != s_grid.len() {
        return Err(Error::ShapeMismatch {
            expected: s_grid.len(),
            got: log_mu.len(),
        });
    }
    let v = exact_initial_v(delta, probes, grid)?;
    let mut rows = vec![];
    for (si, &s) in s_grid.iter().enumerate() {
        if !(s > 0.0) {
            return Err(Error::InvalidParameter {
                name: "s",
                message: format!("the diagnostic needs s > 0, got {s}"),
            });
        }
        let w = weights.with_s(s);
        let coeff = weighted_coefficient_norm(delta, &w, grid)?;
        for (k, vk) in v.v.iter().enumerate() {
            let lhs = weighted_norm(WeightedField::Initial(&vk.u_plus), &w, grid)?
                .add(weighted_norm(WeightedField::Initial(&vk.u_minus), &w, grid)?);
            let mu = log_sum(log_mu[si][k]);
            let rhs = coeff.add(LogNorm(mu + s.ln()));
            let log_ratio = (!(lhs.is_zero() && rhs.is_zero())).then(|| lhs.0 - (rhs.0 - 1.5 * s.ln()));
            rows.push(B2Row {
                s,
                probe: k,
                log_lhs: lhs.0,
                log_rhs: rhs.0,
                log_ratio,
            });
        }
    }
    Ok(rows)
}
