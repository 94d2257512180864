//! Probe initial states: the axial profile ⟨x_n⟩^{−(1+ε)/2}, its component
//! swap and the x₁-weighted variant, multiplied by a smooth cutoff so that
//! homogeneous Dirichlet data are compatible to every order.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coefficients::{japanese_bracket, CoefficientSet};
use crate::error::{Error, Result};
use crate::grid::WaveguideGrid;
use crate::solver::{apply_full, BoundaryData, TwoStateField};

/// w = ⟨x_n⟩^{−(1+ε)/2} and w′ = −((1+ε)/2) x_n ⟨x_n⟩^{−(5+ε)/2}.
pub fn axial_profile(xn: f64, epsilon: f64) -> Result<(f64, f64)> {
    check_epsilon(epsilon)?;
    Ok(profile_unchecked(xn, epsilon))
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::config("probe.epsilon", format!("must lie in (0, 1), got {epsilon}")));
    }
    Ok(())
}

#[inline]
fn profile_unchecked(xn: f64, epsilon: f64) -> (f64, f64) {
    let b = japanese_bracket(xn);
    let e = 0.5 * (1.0 + epsilon);
    (b.powf(-e), -e * xn * b.powf(-e - 2.0))
}

/// C³ smoothstep 35t⁴ − 84t⁵ + 70t⁶ − 20t⁷ on [0, 1] and its derivative.
pub fn smoothstep(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        (0.0, 0.0)
    } else if t >= 1.0 {
        (1.0, 0.0)
    } else {
        let t4 = t.powi(4);
        let v = t4 * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t.powi(3));
        let d = 140.0 * t.powi(3) * (1.0 - t).powi(3);
        (v, d)
    }
}

/// Cutoff χ = χ₁(x₁) χ₂(x_n): zero on a lateral collar, rising over a
/// transition layer, one on the plateau; axially one for |x_n| ≤ plateau and
/// zero beyond plateau + transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CutoffSpec {
    pub lateral_collar: f64,
    pub lateral_transition: f64,
    pub axial_plateau: f64,
    pub axial_transition: f64,
}

impl Default for CutoffSpec {
    fn default() -> Self {
        CutoffSpec {
            lateral_collar: 0.035,
            lateral_transition: 0.095,
            axial_plateau: 5.0,
            axial_transition: 2.0,
        }
    }
}

impl CutoffSpec {
    fn lateral(&self, x1: f64, extent: f64) -> (f64, f64) {
        let d = x1.min(extent - x1);
        let sign = if x1 <= extent - x1 { 1.0 } else { -1.0 };
        let (v, dv) = smoothstep((d - self.lateral_collar) / self.lateral_transition);
        (v, sign * dv / self.lateral_transition)
    }

    fn axial(&self, xn: f64) -> (f64, f64) {
        let (v, dv) = smoothstep((self.axial_plateau + self.axial_transition - xn.abs()) / self.axial_transition);
        (v, -xn.signum() * dv / self.axial_transition)
    }

    /// (χ, ∂₁χ, ∂_nχ).
    pub fn eval(&self, x1: f64, xn: f64, extent: f64, lateral: bool) -> (f64, f64, f64) {
        let (c1, d1) = if lateral { self.lateral(x1, extent) } else { (1.0, 0.0) };
        let (c2, d2) = self.axial(xn);
        (c1 * c2, d1 * c2, c1 * d2)
    }

    pub fn plateau_x1(&self, extent: f64) -> (f64, f64) {
        let inset = self.lateral_collar + self.lateral_transition;
        (inset, extent - inset)
    }

    pub fn on_plateau(&self, x1: f64, xn: f64, extent: f64) -> bool {
        let (lo, hi) = self.plateau_x1(extent);
        x1 >= lo && x1 <= hi && xn.abs() <= self.axial_plateau
    }

    fn validate(&self, grid: &WaveguideGrid) -> Result<()> {
        let h1 = grid.h1();
        let hn = grid.hn();
        let checks = [
            ("probe.cutoff.lateral_collar", self.lateral_collar, 2.0 * h1, "at least 2 transverse nodes"),
            ("probe.cutoff.lateral_transition", self.lateral_transition, 4.0 * h1, "at least 4 transverse nodes"),
            ("probe.cutoff.axial_transition", self.axial_transition, 4.0 * hn, "at least 4 axial nodes"),
        ];
        for (field, v, min, what) in checks {
            if !(v >= min * (1.0 - 1e-12)) {
                return Err(Error::config(field, format!("{v} is narrower than {what} ({min})")));
            }
        }
        let collar_axial = grid.half_length - self.axial_plateau - self.axial_transition;
        if collar_axial < 2.0 * hn * (1.0 - 1e-12) {
            return Err(Error::config(
                "probe.cutoff.axial_plateau",
                format!("cutoff must vanish at least 2 axial nodes before ±X, leaves {collar_axial}"),
            ));
        }
        let extent = grid.cross_section.extent;
        let (lo, hi) = self.plateau_x1(extent);
        let has_node = (0..grid.n1()).any(|i| (lo..=hi).contains(&grid.x1(i)));
        if !(hi > lo) || !has_node || self.axial_plateau <= 0.0 {
            return Err(Error::config("probe.cutoff", "plateau is empty after discretization"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeMode {
    /// u₀ vanishes near γ and ±X, g ≡ 0.
    HomogeneousCutoff,
    /// No lateral cutoff; g is the lateral trace of u₀ (held fixed in time).
    AnalyticTrace,
}

/// Scalar profile carried by a probe component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProbeShape {
    Zero,
    /// χ w
    Profile,
    /// x₁ χ w
    WeightedProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub label: String,
    pub shapes: [ProbeShape; 2],
    pub u0: TwoStateField,
}

impl Probe {
    pub fn boundary_data(&self, mode: ProbeMode) -> BoundaryData {
        match mode {
            ProbeMode::HomogeneousCutoff => BoundaryData::Homogeneous,
            ProbeMode::AnalyticTrace => BoundaryData::Stationary(self.u0.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSet {
    pub epsilon: f64,
    pub cutoff: CutoffSpec,
    pub mode: ProbeMode,
    pub extent: f64,
    pub probes: Vec<Probe>,
}

impl ProbeSet {
    /// Value and gradient (∂₁, ∂_n) of a probe shape at (x₁, x_n).
    pub fn shape_value(&self, shape: ProbeShape, x1: f64, xn: f64) -> (f64, [f64; 2]) {
        let lateral = self.mode == ProbeMode::HomogeneousCutoff;
        let (chi, c1, cn) = self.cutoff.eval(x1, xn, self.extent, lateral);
        let (w, wp) = profile_unchecked(xn, self.epsilon);
        let base = (chi * w, [c1 * w, cn * w + chi * wp]);
        match shape {
            ProbeShape::Zero => (0.0, [0.0, 0.0]),
            ProbeShape::Profile => base,
            ProbeShape::WeightedProfile => (x1 * base.0, [base.0 + x1 * base.1[0], x1 * base.1[1]]),
        }
    }

    /// Analytic gradient field of component `comp` of probe `k` on the grid.
    pub fn gradient(&self, k: usize, comp: usize, grid: &WaveguideGrid) -> [Vec<f64>; 2] {
        let shape = self.probes[k].shapes[comp];
        let mut g = [vec![0.0; grid.len()], vec![0.0; grid.len()]];
        for kk in 0..grid.len() {
            let (i, j) = grid.split(kk);
            let (_, d) = self.shape_value(shape, grid.x1(i), grid.xn(j));
            g[0][kk] = d[0];
            g[1][kk] = d[1];
        }
        g
    }

    pub fn plateau_mask(&self, grid: &WaveguideGrid) -> Vec<bool> {
        (0..grid.len())
            .map(|k| {
                let (i, j) = grid.split(k);
                self.cutoff.on_plateau(grid.x1(i), grid.xn(j), self.extent)
            })
            .collect()
    }

    /// Fraction of ‖u₀‖² beyond the axial plateau, worst over probes.
    pub fn tail_fraction(&self, grid: &WaveguideGrid) -> f64 {
        self.probes
            .iter()
            .map(|p| {
                let (mut tail, mut total) = (0.0, 0.0);
                for k in 0..grid.len() {
                    let (i, j) = grid.split(k);
                    let m = grid.weight(i, j) * (p.u0.u_plus[k].norm_sqr() + p.u0.u_minus[k].norm_sqr());
                    total += m;
                    if grid.xn(j).abs() > self.cutoff.axial_plateau {
                        tail += m;
                    }
                }
                if total > 0.0 {
                    tail / total
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }
}

pub fn make_probe_set(grid: &WaveguideGrid, epsilon: f64, cutoff: CutoffSpec, mode: ProbeMode) -> Result<ProbeSet> {
    check_epsilon(epsilon)?;
    if grid.cross_section.dimension != 1 {
        return Err(Error::Contract("probes are built for n = 2".into()));
    }
    cutoff.validate(grid)?;
    let mut set = ProbeSet {
        epsilon,
        cutoff,
        mode,
        extent: grid.cross_section.extent,
        probes: vec![],
    };
    use ProbeShape::*;
    let layouts = [
        ("minus-profile", [Zero, Profile]),
        ("plus-profile", [Profile, Zero]),
        ("weighted-x1", [WeightedProfile, WeightedProfile]),
    ];
    for (label, shapes) in layouts {
        let mut comps = [vec![0.0; grid.len()], vec![0.0; grid.len()]];
        for (comp, shape) in shapes.iter().enumerate() {
            for k in 0..grid.len() {
                let (i, j) = grid.split(k);
                comps[comp][k] = set.shape_value(*shape, grid.x1(i), grid.xn(j)).0;
            }
        }
        set.probes.push(Probe {
            label: label.to_string(),
            shapes,
            u0: TwoStateField::from_real(&comps[0], &comps[1]),
        });
    }
    Ok(set)
}

/// Number of node layers, counted from the lateral boundary inwards, on which
/// every component of `u0` vanishes exactly.
pub fn zero_collar(u0: &TwoStateField, grid: &WaveguideGrid) -> usize {
    let n1 = grid.n1();
    let mut layers = 0;
    while layers < n1 / 2 {
        let (a, b) = (layers, n1 - 1 - layers);
        let zero = (0..grid.nn()).all(|j| {
            [a, b].iter().all(|&i| {
                let k = grid.idx(i, j);
                u0.u_plus[k] == Complex64::new(0.0, 0.0) && u0.u_minus[k] == Complex64::new(0.0, 0.0)
            })
        });
        if !zero {
            break;
        }
        layers += 1;
    }
    layers
}

/// max over γ × axial nodes of |(H₀ᵈ)^ℓ u₀|, the discrete compatibility defect of order ℓ.
///
/// In cutoff mode the stencil of (H₀ᵈ)^ℓ at γ must stay inside the zero collar;
/// otherwise the result would not certify compatibility and a stencil-reach
/// error is returned. Analytic-trace probes are evaluated without that guard.
pub fn compatibility_residual(
    probe: &Probe,
    mode: ProbeMode,
    background: &CoefficientSet,
    grid: &WaveguideGrid,
    order: usize,
) -> Result<f64> {
    if order > 2 {
        return Err(Error::InvalidParameter {
            name: "order",
            message: format!("compatibility orders 0, 1, 2 are supported, got {order}"),
        });
    }
    background.check_shape(grid)?;
    if mode == ProbeMode::HomogeneousCutoff {
        let collar = zero_collar(&probe.u0, grid);
        if order >= collar {
            return Err(Error::StencilReach { order, collar });
        }
    }
    let mut u = [probe.u0.u_plus.clone(), probe.u0.u_minus.clone()];
    for _ in 0..order {
        u = apply_full(background, grid, [&u[0], &u[1]]);
    }
    let mut worst = 0.0_f64;
    for j in 0..grid.nn() {
        for i in [0, grid.n1() - 1] {
            let k = grid.idx(i, j);
            worst = worst.max(u[0][k].norm()).max(u[1][k].norm());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CrossSection;

    fn grid() -> WaveguideGrid {
        WaveguideGrid::new(CrossSection::interval(1.0, 65).unwrap(), 8.0, 129, 1.0, 16).unwrap()
    }

    #[test]
    fn profile_values() {
        assert_eq!(axial_profile(0.0, 0.5).unwrap(), (1.0, 0.0));
        let x = 3f64.sqrt();
        let (w, wp) = axial_profile(x, 0.5).unwrap();
        assert!((w - 2f64.powf(-0.75)).abs() < 1e-14);
        assert!((wp + 0.75 * x * 2f64.powf(-2.75)).abs() < 1e-14);
        let d = 1e-5;
        let fd = (axial_profile(x + d, 0.5).unwrap().0 - axial_profile(x - d, 0.5).unwrap().0) / (2.0 * d);
        assert!((fd - wp).abs() < 1e-9);
        assert!(axial_profile(1.0, 1.0).is_err());
        assert!(axial_profile(1.0, 0.0).is_err());
    }

    #[test]
    fn smoothstep_is_c3_at_the_ends() {
        let (v0, d0) = smoothstep(0.0);
        let (v1, d1) = smoothstep(1.0);
        assert_eq!((v0, d0, v1, d1), (0.0, 0.0, 1.0, 0.0));
        let e = 1e-3;
        // Value and derivative are o(t³) near both ends.
        assert!(smoothstep(e).0 < 40.0 * e.powi(4));
        assert!(smoothstep(e).1 < 150.0 * e.powi(3));
        assert!(1.0 - smoothstep(1.0 - e).0 < 40.0 * e.powi(4));
        let fd = (smoothstep(0.3 + 1e-6).0 - smoothstep(0.3 - 1e-6).0) / 2e-6;
        assert!((fd - smoothstep(0.3).1).abs() < 1e-6);
    }

    #[test]
    fn three_probes_with_expected_plateau_values() {
        let g = grid();
        let set = make_probe_set(&g, 0.5, CutoffSpec::default(), ProbeMode::HomogeneousCutoff).unwrap();
        assert_eq!(set.probes.len(), 3);
        let mask = set.plateau_mask(&g);
        assert!(mask.iter().any(|m| *m));
        for k in 0..g.len() {
            let (i, j) = g.split(k);
            let (w, _) = axial_profile(g.xn(j), 0.5).unwrap();
            assert_eq!(set.probes[1].u0.u_plus[k], set.probes[0].u0.u_minus[k]);
            assert_eq!(set.probes[1].u0.u_minus[k], set.probes[0].u0.u_plus[k]);
            if mask[k] {
                assert_eq!(set.probes[0].u0.u_plus[k].re, 0.0);
                assert!((set.probes[0].u0.u_minus[k].re - w).abs() < 1e-15);
                assert!((set.probes[2].u0.u_plus[k].re - g.x1(i) * w).abs() < 1e-15);
            }
        }
        for p in &set.probes {
            assert!(p.u0.u_plus.iter().chain(&p.u0.u_minus).all(|v| v.im == 0.0));
        }
        assert!(zero_collar(&set.probes[0].u0, &g) >= 3);
        assert!(set.tail_fraction(&g) < 0.1);
    }

    #[test]
    fn analytic_gradient_matches_differences() {
        let g = grid();
        let set = make_probe_set(&g, 0.5, CutoffSpec::default(), ProbeMode::HomogeneousCutoff).unwrap();
        for (x1, xn) in [(0.12, 0.3), (0.5, 5.8), (0.9, -6.2), (0.4, 2.0)] {
            for shape in [ProbeShape::Profile, ProbeShape::WeightedProfile] {
                let (_, d) = set.shape_value(shape, x1, xn);
                let e = 1e-6;
                let f = |a: f64, b: f64| set.shape_value(shape, a, b).0;
                let fd1 = (f(x1 + e, xn) - f(x1 - e, xn)) / (2.0 * e);
                let fdn = (f(x1, xn + e) - f(x1, xn - e)) / (2.0 * e);
                assert!((d[0] - fd1).abs() < 1e-6, "{x1} {xn}");
                assert!((d[1] - fdn).abs() < 1e-6, "{x1} {xn}");
            }
        }
    }

    #[test]
    fn cutoff_probes_are_compatible() {
        let g = grid();
        let set = make_probe_set(&g, 0.5, CutoffSpec::default(), ProbeMode::HomogeneousCutoff).unwrap();
        let mut c0 = CoefficientSet::zeros(&g);
        c0.q_plus.iter_mut().for_each(|v| *v = 0.5);
        c0.p = g.sample(|_, xn| 0.25 * (-xn * xn / 4.0).exp());
        for p in &set.probes {
            for order in 0..=2 {
                assert!(compatibility_residual(p, set.mode, &c0, &g, order).unwrap() <= 1e-12);
            }
        }
        let trace_set = make_probe_set(&g, 0.5, CutoffSpec::default(), ProbeMode::AnalyticTrace).unwrap();
        assert!(compatibility_residual(&trace_set.probes[1], trace_set.mode, &c0, &g, 1).unwrap() > 1e-3);
    }

    #[test]
    fn narrow_collar_is_rejected() {
        let g = WaveguideGrid::new(CrossSection::interval(1.0, 17).unwrap(), 8.0, 129, 1.0, 16).unwrap();
        assert!(matches!(
            make_probe_set(&g, 0.5, CutoffSpec::default(), ProbeMode::HomogeneousCutoff),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn residual_order_beyond_collar_is_a_stencil_error() {
        let g = grid();
        let set = make_probe_set(&g, 0.5, CutoffSpec::default(), ProbeMode::HomogeneousCutoff).unwrap();
        let mut p = set.probes[0].clone();
        // Fill the first interior layer so the collar shrinks to one node.
        for j in 0..g.nn() {
            p.u0.u_minus[g.idx(1, j)] = Complex64::new(1.0, 0.0);
        }
        let c0 = CoefficientSet::zeros(&g);
        assert!(matches!(
            compatibility_residual(&p, set.mode, &c0, &g, 1),
            Err(Error::StencilReach { .. })
        ));
        assert_eq!(compatibility_residual(&p, set.mode, &c0, &g, 0).unwrap(), 0.0);
    }
}
