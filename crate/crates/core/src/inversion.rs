//! Linearized t = 0 relations and their pointwise inversion.
//!
//! With real coefficients and real probes, v(·,0) = ∂ₜ(u₁ − u₂)(·,0) satisfies
//!
//! ```text
//! i v⁺ =  δA·∇u₀⁻ + δq⁺ u₀⁺ + δp u₀⁻
//! i v⁻ = −δA·∇u₀⁺ + δq⁻ u₀⁻ + δp u₀⁺
//! ```
//!
//! so i·v is real and the coefficient differences follow algebraically.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::grid::WaveguideGrid;
use crate::probes::{axial_profile, ProbeSet};
use crate::solver::{trace::time_derivative_samples, Propagator, SolverOptions, TwoStateField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Oracle,
    Simulated,
}

/// v^{±,k}(·,0) for every probe k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizedInitialData {
    pub provenance: Provenance,
    pub v: Vec<TwoStateField>,
}

impl LinearizedInitialData {
    /// max |Re v| / max |v|; zero when v is purely imaginary.
    pub fn real_fraction(&self) -> f64 {
        let (mut re, mut all) = (0.0_f64, 0.0_f64);
        for f in &self.v {
            for z in f.u_plus.iter().chain(&f.u_minus) {
                re = re.max(z.re.abs());
                all = all.max(z.norm());
            }
        }
        if all > 0.0 {
            re / all
        } else {
            0.0
        }
    }
}

/// Direct evaluation of the t = 0 relations with (A, p, q±) := δc.
pub fn exact_initial_v(delta: &CoefficientSet, probes: &ProbeSet, grid: &WaveguideGrid) -> Result<LinearizedInitialData> {
    delta.check_shape(grid)?;
    let mi = Complex64::new(0.0, -1.0);
    let mut v = Vec::with_capacity(probes.probes.len());
    for (k, probe) in probes.probes.iter().enumerate() {
        probe.u0.check(grid)?;
        let gp = probes.gradient(k, 0, grid);
        let gm = probes.gradient(k, 1, grid);
        let mut out = TwoStateField::zeros(grid);
        for idx in 0..grid.len() {
            let up = probe.u0.u_plus[idx].re;
            let um = probe.u0.u_minus[idx].re;
            let (a1, an) = (delta.a[0][idx], delta.a[1][idx]);
            let a_grad_m = a1 * gm[0][idx] + an * gm[1][idx];
            let a_grad_p = a1 * gp[0][idx] + an * gp[1][idx];
            out.u_plus[idx] = mi * (a_grad_m + delta.q_plus[idx] * up + delta.p[idx] * um);
            out.u_minus[idx] = mi * (-a_grad_p + delta.q_minus[idx] * um + delta.p[idx] * up);
        }
        v.push(out);
    }
    Ok(LinearizedInitialData {
        provenance: Provenance::Oracle,
        v,
    })
}

/// First two Crank–Nicolson steps from u₀ under `c`; that is all v(·,0) needs.
fn first_steps(c: &CoefficientSet, grid: &WaveguideGrid, probes: &ProbeSet, k: usize, options: SolverOptions) -> Result<Vec<TwoStateField>> {
    let probe = &probes.probes[k];
    let mut prop = Propagator::new(c, grid, grid.dt(), &probe.boundary_data(probes.mode), options)?;
    let mut snaps = Vec::with_capacity(3);
    prop.run(&probe.u0, 2, None, |_, _, s| {
        snaps.push(s.clone());
        Ok(())
    })?;
    Ok(snaps)
}

/// v(·,0) from the solution difference u₁ − u₂ under `c1` and `c2`, with the
/// one-sided second-order stencil at t = 0. Later time steps do not enter, so
/// only two steps are taken per solve.
pub fn simulated_initial_v(
    c1: &CoefficientSet,
    c2: &CoefficientSet,
    probes: &ProbeSet,
    grid: &WaveguideGrid,
    options: SolverOptions,
) -> Result<LinearizedInitialData> {
    let jobs: Vec<(usize, usize)> = (0..probes.probes.len()).flat_map(|k| [(k, 0), (k, 1)]).collect();
    let runs: Vec<Result<Vec<TwoStateField>>> = jobs
        .par_iter()
        .map(|&(k, which)| first_steps(if which == 0 { c1 } else { c2 }, grid, probes, k, options))
        .collect();
    let mut runs = runs.into_iter().collect::<Result<Vec<_>>>()?.into_iter();
    let mut v = Vec::with_capacity(probes.probes.len());
    for _ in 0..probes.probes.len() {
        let (a, b) = (runs.next().unwrap(), runs.next().unwrap());
        let diff: Vec<TwoStateField> = a.iter().zip(&b).map(|(x, y)| x.difference(y)).collect();
        let plus: Vec<Vec<Complex64>> = diff.iter().map(|d| d.u_plus.clone()).collect();
        let minus: Vec<Vec<Complex64>> = diff.iter().map(|d| d.u_minus.clone()).collect();
        let dp = time_derivative_samples(&plus, grid.dt())?;
        let dm = time_derivative_samples(&minus, grid.dt())?;
        v.push(TwoStateField {
            u_plus: dp[0].clone(),
            u_minus: dm[0].clone(),
        });
    }
    Ok(LinearizedInitialData {
        provenance: Provenance::Simulated,
        v,
    })
}

/// Where each reconstructed component is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionMasks {
    pub plateau: Vec<bool>,
    /// {y* ≤ |x_n| ≤ X_far} ∩ plateau.
    pub annulus: Vec<bool>,
    pub y_star: f64,
    pub x_far: f64,
}

/// Largest |x_n| at which |w′| is still ≥ `fraction` · max |w′|.
pub fn default_x_far(epsilon: f64, fraction: f64) -> Result<f64> {
    let e = 0.5 * (1.0 + epsilon);
    // |w′| = e x (1+x²)^{−e−1} peaks at x² = 1/(1 + 2e).
    let xpk = (1.0 / (1.0 + 2.0 * e)).sqrt();
    let peak = axial_profile(xpk, epsilon)?.1.abs();
    let target = fraction * peak;
    let (mut lo, mut hi) = (xpk, xpk * 2.0);
    while axial_profile(hi, epsilon)?.1.abs() > target {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if axial_profile(mid, epsilon)?.1.abs() > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

impl ReconstructionMasks {
    pub fn new(probes: &ProbeSet, grid: &WaveguideGrid, y_star: f64, x_far: f64) -> Result<Self> {
        if !(y_star > 0.0) || !(x_far > y_star) {
            return Err(Error::InvalidParameter {
                name: "annulus",
                message: format!("need 0 < y* < X_far, got y* = {y_star}, X_far = {x_far}"),
            });
        }
        let plateau = probes.plateau_mask(grid);
        let annulus = plateau
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                let xn = grid.xn(grid.split(k).1).abs();
                p && xn >= y_star && xn <= x_far
            })
            .collect();
        Ok(ReconstructionMasks {
            plateau,
            annulus,
            y_star,
            x_far,
        })
    }
}

/// Relative L² errors on the component masks; `None` when the truth vanishes there.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComponentErrors {
    pub a1: Option<f64>,
    pub an: Option<f64>,
    pub p: Option<f64>,
    pub q_plus: Option<f64>,
    pub q_minus: Option<f64>,
}

impl ComponentErrors {
    pub fn worst(&self) -> f64 {
        [self.a1, self.an, self.p, self.q_plus, self.q_minus]
            .into_iter()
            .flatten()
            .fold(0.0, f64::max)
    }

    pub fn entries(&self) -> [(&'static str, Option<f64>); 5] {
        [
            ("a1", self.a1),
            ("an", self.an),
            ("p", self.p),
            ("q_plus", self.q_plus),
            ("q_minus", self.q_minus),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    /// Estimated (δA, δp, δq⁺, δq⁻); zero outside the masks.
    pub estimate: CoefficientSet,
    pub masks: ReconstructionMasks,
    /// Imaginary mass of the estimates before truncation, relative to their real mass.
    pub imaginary_residue: f64,
    pub errors: Option<ComponentErrors>,
    /// Least-squares path only: condition number per node (∞ where flagged).
    pub condition: Option<Vec<f64>>,
    pub flagged: Vec<usize>,
}

impl ReconstructionResult {
    pub fn with_truth(mut self, truth: &CoefficientSet, grid: &WaveguideGrid) -> Self {
        self.errors = Some(component_errors(&self.estimate, truth, &self.masks, grid));
        self
    }
}

fn masked_relative(est: &[f64], truth: &[f64], mask: &[bool], grid: &WaveguideGrid) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..grid.len() {
        if mask[k] {
            let (i, j) = grid.split(k);
            let w = grid.weight(i, j);
            num += w * (est[k] - truth[k]).powi(2);
            den += w * truth[k].powi(2);
        }
    }
    (den > 0.0).then(|| (num / den).sqrt())
}

pub fn component_errors(est: &CoefficientSet, truth: &CoefficientSet, masks: &ReconstructionMasks, grid: &WaveguideGrid) -> ComponentErrors {
    ComponentErrors {
        a1: masked_relative(&est.a[0], &truth.a[0], &masks.plateau, grid),
        an: masked_relative(&est.a[1], &truth.a[1], &masks.annulus, grid),
        p: masked_relative(&est.p, &truth.p, &masks.plateau, grid),
        q_plus: masked_relative(&est.q_plus, &truth.q_plus, &masks.plateau, grid),
        q_minus: masked_relative(&est.q_minus, &truth.q_minus, &masks.plateau, grid),
    }
}

/// Below this |w| or |w′| a division inside a mask is refused.
pub const DIVISION_GUARD: f64 = 1e-8;

struct Residue {
    imag: f64,
    real: f64,
}

impl Residue {
    fn take(&mut self, z: Complex64) -> f64 {
        self.imag += z.im * z.im;
        self.real += z.re * z.re;
        z.re
    }
}

/// Closed-form inversion on the plateau (δp, δq±, δa₁) and the annulus (δa_n).
pub fn reconstruct_pointwise(
    data: &LinearizedInitialData,
    probes: &ProbeSet,
    grid: &WaveguideGrid,
    masks: &ReconstructionMasks,
) -> Result<ReconstructionResult> {
    if data.v.len() != 3 || probes.probes.len() != 3 {
        return Err(Error::Contract("pointwise inversion expects the three n = 2 probes".into()));
    }
    for f in &data.v {
        f.check(grid)?;
    }
    let i = Complex64::new(0.0, 1.0);
    let mut est = CoefficientSet::zeros(grid);
    let mut res = Residue { imag: 0.0, real: 0.0 };
    let (v1, v2, v3) = (&data.v[0], &data.v[1], &data.v[2]);
    for k in 0..grid.len() {
        if !masks.plateau[k] {
            continue;
        }
        let (ii, j) = grid.split(k);
        let (x1, xn) = (grid.x1(ii), grid.xn(j));
        let (w, wp) = axial_profile(xn, probes.epsilon)?;
        if w.abs() < DIVISION_GUARD {
            return Err(Error::MaskViolation(format!("|w| below guard at x_n = {xn}")));
        }
        est.q_minus[k] = res.take(i * v1.u_minus[k] / w);
        est.q_plus[k] = res.take(i * v2.u_plus[k] / w);
        est.p[k] = res.take(i * (v1.u_plus[k] + v2.u_minus[k]) / (2.0 * w));
        let an = if masks.annulus[k] {
            if wp.abs() < DIVISION_GUARD {
                return Err(Error::MaskViolation(format!("|w′| below guard at x_n = {xn} inside the annulus")));
            }
            res.take(i * (v1.u_plus[k] - v2.u_minus[k]) / (2.0 * wp))
        } else {
            0.0
        };
        est.a[1][k] = an;
        let from_plus = i * v3.u_plus[k] - an * x1 * wp - (est.q_plus[k] + est.p[k]) * x1 * w;
        let from_minus = -i * v3.u_minus[k] - an * x1 * wp + (est.q_minus[k] + est.p[k]) * x1 * w;
        est.a[0][k] = res.take((from_plus + from_minus) / (2.0 * w));
    }
    Ok(ReconstructionResult {
        estimate: est,
        masks: masks.clone(),
        imaginary_residue: if res.real > 0.0 { (res.imag / res.real).sqrt() } else { 0.0 },
        errors: None,
        condition: None,
        flagged: vec![],
    })
}

/// Ratio σ_min/σ_max below which a node is flagged as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Per-node least-squares solve of all six real relations for the five unknowns
/// (δa₁, δa_n, δp, δq⁺, δq⁻). Rank-deficient nodes (x_n = 0, where w′ = 0)
/// are flagged and left at zero.
pub fn reconstruct_least_squares(
    data: &LinearizedInitialData,
    probes: &ProbeSet,
    grid: &WaveguideGrid,
    masks: &ReconstructionMasks,
) -> Result<ReconstructionResult> {
    if data.v.len() != probes.probes.len() {
        return Err(Error::Contract("one data field per probe is required".into()));
    }
    let nprobe = probes.probes.len();
    if 2 * nprobe < 5 {
        return Err(Error::Contract(format!("{} equations cannot determine 5 unknowns", 2 * nprobe)));
    }
    let grads: Vec<[[Vec<f64>; 2]; 2]> = (0..nprobe)
        .map(|k| [probes.gradient(k, 0, grid), probes.gradient(k, 1, grid)])
        .collect();
    let i = Complex64::new(0.0, 1.0);
    let mut est = CoefficientSet::zeros(grid);
    let mut condition = vec![f64::INFINITY; grid.len()];
    let mut flagged = vec![];
    let mut res = Residue { imag: 0.0, real: 0.0 };
    for k in 0..grid.len() {
        if !masks.plateau[k] {
            continue;
        }
        let mut m = DMatrix::<f64>::zeros(2 * nprobe, 5);
        let mut rhs = DVector::<f64>::zeros(2 * nprobe);
        for (p, probe) in probes.probes.iter().enumerate() {
            let (up, um) = (probe.u0.u_plus[k].re, probe.u0.u_minus[k].re);
            let [gp, gm] = &grads[p];
            // i v⁺ = a₁∂₁u₀⁻ + a_n∂_nu₀⁻ + p u₀⁻ + q⁺u₀⁺
            let row = 2 * p;
            m[(row, 0)] = gm[0][k];
            m[(row, 1)] = gm[1][k];
            m[(row, 2)] = um;
            m[(row, 3)] = up;
            rhs[row] = res.take(i * data.v[p].u_plus[k]);
            // i v⁻ = −a₁∂₁u₀⁺ − a_n∂_nu₀⁺ + p u₀⁺ + q⁻u₀⁻
            m[(row + 1, 0)] = -gp[0][k];
            m[(row + 1, 1)] = -gp[1][k];
            m[(row + 1, 2)] = up;
            m[(row + 1, 4)] = um;
            rhs[row + 1] = res.take(i * data.v[p].u_minus[k]);
        }
        let svd = m.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smax > 0.0) || smin < RANK_TOLERANCE * smax {
            flagged.push(k);
            continue;
        }
        condition[k] = smax / smin;
        let x = svd
            .solve(&rhs, RANK_TOLERANCE * smax)
            .map_err(|e| Error::Contract(format!("least-squares solve failed: {e}")))?;
        est.a[0][k] = x[0];
        est.a[1][k] = if masks.annulus[k] { x[1] } else { 0.0 };
        est.p[k] = x[2];
        est.q_plus[k] = x[3];
        est.q_minus[k] = x[4];
    }
    Ok(ReconstructionResult {
        estimate: est,
        masks: masks.clone(),
        imaginary_residue: if res.real > 0.0 { (res.imag / res.real).sqrt() } else { 0.0 },
        errors: None,
        condition: Some(condition),
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::stream_function_field;
    use crate::grid::CrossSection;
    use crate::probes::{make_probe_set, CutoffSpec, ProbeMode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> WaveguideGrid {
        WaveguideGrid::new(CrossSection::interval(1.0, 33).unwrap(), 8.0, 129, 1.0, 16).unwrap()
    }

    fn cutoff() -> CutoffSpec {
        CutoffSpec {
            lateral_collar: 0.07,
            lateral_transition: 0.13,
            ..CutoffSpec::default()
        }
    }

    fn random_delta(g: &WaveguideGrid, seed: u64) -> CoefficientSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = CoefficientSet::zeros(g);
        let (a, b, d, e) = (
            rng.random_range(0.5..1.0),
            rng.random_range(0.5..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        c.p = g.sample(|x1, xn| a * (x1 * 3.0).sin() * (-xn * xn / 8.0).exp());
        c.q_plus = g.sample(|x1, xn| b * x1 * (-xn * xn / 6.0).exp());
        c.q_minus = g.sample(|x1, xn| d * (1.0 - x1) * (-xn * xn / 5.0).exp());
        let psi = g.sample(|x1, xn| e * (std::f64::consts::PI * x1).sin().powi(2) * (-(xn.abs() - 3.0).powi(2)).exp());
        c.a = stream_function_field(&psi, g);
        // Hypothesis: δa_n = 0 on |x_n| < y* = 1.
        for k in 0..g.len() {
            if g.xn(g.split(k).1).abs() < 1.0 {
                c.a[1][k] = 0.0;
            }
        }
        c
    }

    #[test]
    fn zero_difference_gives_zero_data() {
        let g = grid();
        let set = make_probe_set(&g, 0.5, cutoff(), ProbeMode::HomogeneousCutoff).unwrap();
        let d = exact_initial_v(&CoefficientSet::zeros(&g), &set, &g).unwrap();
        assert!(d.v.iter().all(|f| f.max_abs() == 0.0));
        let masks = ReconstructionMasks::new(&set, &g, 1.0, 6.0).unwrap();
        let r = reconstruct_pointwise(&d, &set, &g, &masks).unwrap();
        assert!(r.estimate.fields().all(|f| f.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn probe_one_isolates_q_minus() {
        let g = grid();
        let set = make_probe_set(&g, 0.5, cutoff(), ProbeMode::HomogeneousCutoff).unwrap();
        let mut delta = CoefficientSet::zeros(&g);
        delta.q_minus = g.sample(|x1, _| 1.0 + x1);
        let d = exact_initial_v(&delta, &set, &g).unwrap();
        for k in 0..g.len() {
            assert_eq!(d.v[0].u_plus[k], Complex64::new(0.0, 0.0));
            let expect = -delta.q_minus[k] * set.probes[0].u0.u_minus[k].re;
            assert!((d.v[0].u_minus[k] - Complex64::new(0.0, expect)).norm() < 1e-15);
        }
    }

    #[test]
    fn swap_symmetry() {
        let g = grid();
        let set = make_probe_set(&g, 0.5, cutoff(), ProbeMode::HomogeneousCutoff).unwrap();
        let delta = random_delta(&g, 3);
        let mut swapped = delta.clone();
        std::mem::swap(&mut swapped.q_plus, &mut swapped.q_minus);
        swapped.a.iter_mut().for_each(|c| c.iter_mut().for_each(|v| *v = -*v));
        let d = exact_initial_v(&delta, &set, &g).unwrap();
        let s = exact_initial_v(&swapped, &set, &g).unwrap();
        // Probe 2 is probe 1 with components exchanged.
        for k in 0..g.len() {
            assert!((d.v[0].u_plus[k] - s.v[1].u_minus[k]).norm() < 1e-14);
            assert!((d.v[0].u_minus[k] - s.v[1].u_plus[k]).norm() < 1e-14);
        }
    }

    #[test]
    fn oracle_round_trip_is_exact() {
        let g = grid();
        let set = make_probe_set(&g, 0.5, cutoff(), ProbeMode::HomogeneousCutoff).unwrap();
        let delta = random_delta(&g, 11);
        let d = exact_initial_v(&delta, &set, &g).unwrap();
        assert_eq!(d.real_fraction(), 0.0);
        let masks = ReconstructionMasks::new(&set, &g, 1.0, default_x_far(0.5, 1e-3).unwrap()).unwrap();
        let r = reconstruct_pointwise(&d, &set, &g, &masks).unwrap().with_truth(&delta, &g);
        let e = r.errors.unwrap();
        assert!(e.worst() < 1e-10, "{e:?}");
        assert!(e.an.is_some() && e.a1.is_some());
        assert!(r.imaginary_residue < 1e-8);
        let ls = reconstruct_least_squares(&d, &set, &g, &masks).unwrap();
        for (a, b) in ls.estimate.fields().zip(r.estimate.fields()) {
            for k in 0..g.len() {
                if masks.annulus[k] {
                    assert!((a[k] - b[k]).abs() < 1e-10);
                }
            }
        }
        // x_n = 0 is rank deficient for δa_n.
        let center = g.idx(g.n1() / 2, g.axial_center());
        assert!(ls.flagged.contains(&center));
    }

    #[test]
    fn coupling_only_difference_decouples() {
        let g = grid();
        let set = make_probe_set(&g, 0.5, cutoff(), ProbeMode::HomogeneousCutoff).unwrap();
        let mut delta = CoefficientSet::zeros(&g);
        delta.p = random_delta(&g, 5).p;
        let d = exact_initial_v(&delta, &set, &g).unwrap();
        let masks = ReconstructionMasks::new(&set, &g, 1.0, 6.0).unwrap();
        let r = reconstruct_pointwise(&d, &set, &g, &masks).unwrap();
        let scale = delta.p.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for f in [&r.estimate.q_plus, &r.estimate.q_minus, &r.estimate.a[0], &r.estimate.a[1]] {
            assert!(f.iter().all(|v| v.abs() <= 1e-14 * scale));
        }
    }

    #[test]
    fn x_far_matches_its_definition() {
        let xf = default_x_far(0.5, 1e-3).unwrap();
        let peak = axial_profile((1.0f64 / 2.5).sqrt(), 0.5).unwrap().1.abs();
        assert!((axial_profile(xf, 0.5).unwrap().1.abs() / peak - 1e-3).abs() < 1e-9);
    }
}
