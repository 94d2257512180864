//! Coefficient quadruples (A, p, q⁺, q⁻), the admissible decaying classes
//! around a known background, and seeded in-class perturbation generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::WaveguideGrid;

/// ⟨x⟩ = (1 + x²)^{1/2}. Every decay envelope and probe profile goes through here.
#[inline]
pub fn japanese_bracket(x: f64) -> f64 {
    x.hypot(1.0)
}

/// Coupling vector A (n components, transverse first, axial last), coupling
/// term p and potentials q± sampled on the full space grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub n1: usize,
    pub nn: usize,
    pub a: Vec<Vec<f64>>,
    pub p: Vec<f64>,
    pub q_plus: Vec<f64>,
    pub q_minus: Vec<f64>,
}

impl CoefficientSet {
    pub fn zeros(grid: &WaveguideGrid) -> Self {
        let len = grid.len();
        let dim = grid.cross_section.dimension + 1;
        CoefficientSet {
            n1: grid.n1(),
            nn: grid.nn(),
            a: vec![vec![0.0; len]; dim],
            p: vec![0.0; len],
            q_plus: vec![0.0; len],
            q_minus: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.n1 * self.nn
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Spatial dimension n (number of components of A).
    pub fn dimension(&self) -> usize {
        self.a.len()
    }

    /// Axial component a_n.
    pub fn a_axial(&self) -> &[f64] {
        &self.a[self.a.len() - 1]
    }

    pub fn check_shape(&self, grid: &WaveguideGrid) -> Result<()> {
        let expected = grid.len();
        if self.n1 != grid.n1() || self.nn != grid.nn() {
            return Err(Error::ShapeMismatch {
                expected,
                got: self.len(),
            });
        }
        for field in self.fields() {
            if field.len() != expected {
                return Err(Error::ShapeMismatch {
                    expected,
                    got: field.len(),
                });
            }
            if field.iter().any(|v| !v.is_finite()) {
                return Err(Error::Contract("coefficient field has non-finite entries".into()));
            }
        }
        Ok(())
    }

    /// All scalar fields in storage order a₁ … a_n, p, q⁺, q⁻.
    pub fn fields(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.a.iter().chain([&self.p, &self.q_plus, &self.q_minus])
    }

    pub fn fields_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.a
            .iter_mut()
            .chain([&mut self.p, &mut self.q_plus, &mut self.q_minus])
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = self.clone();
        for (dst, src) in out.fields_mut().zip(other.fields()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = f(*d, *s);
            }
        }
        out
    }

    pub fn difference(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn sum(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for field in out.fields_mut() {
            field.iter_mut().for_each(|v| *v *= factor);
        }
        out
    }

    /// |A| at node k.
    pub fn a_norm_at(&self, k: usize) -> f64 {
        self.a.iter().map(|c| c[k] * c[k]).sum::<f64>().sqrt()
    }
}

/// Parameters of the admissible classes 𝒜_𝔞(A₀), 𝒫_𝔭(p₀), 𝒫_𝔮(q₀±).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleClassParams {
    pub sup_budget: f64,
    pub kappa: f64,
    pub rho: f64,
    pub envelope_a: f64,
    pub envelope_p: f64,
    pub envelope_q: f64,
    pub y_star: f64,
    /// Order N of boundary agreement; metadata only.
    pub boundary_order: usize,
    /// |ω|, used by the tail budget.
    pub section_measure: f64,
    pub background: CoefficientSet,
}

impl AdmissibleClassParams {
    /// Envelope profile e^{−κ⟨x_n⟩^ϱ}.
    pub fn decay(&self, xn: f64) -> f64 {
        (-self.kappa * japanese_bracket(xn).powf(self.rho)).exp()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("class.sup_budget", self.sup_budget),
            ("class.kappa", self.kappa),
            ("class.rho", self.rho),
            ("class.envelope_a", self.envelope_a),
            ("class.envelope_p", self.envelope_p),
            ("class.envelope_q", self.envelope_q),
            ("class.y_star", self.y_star),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Region of the truncated waveguide used by [`theta_norm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    Full,
    /// Ω_y = ω × (−y, y).
    Inner(f64),
    /// Ω ∖ Ω_y.
    Outer(f64),
}

impl Region {
    fn contains(self, xn: f64) -> bool {
        match self {
            Region::Full => true,
            Region::Inner(y) => xn.abs() < y,
            Region::Outer(y) => xn.abs() >= y,
        }
    }
}

/// Θ = ‖A₁−A₂‖² + ‖p₁−p₂‖² + ‖q₁⁺−q₂⁺‖² + ‖q₁⁻−q₂⁻‖² over `region`, by trapezoidal quadrature.
pub fn theta_norm(c1: &CoefficientSet, c2: &CoefficientSet, grid: &WaveguideGrid, region: Region) -> Result<f64> {
    c1.check_shape(grid)?;
    c2.check_shape(grid)?;
    let rows: Vec<usize> = (0..grid.nn()).filter(|&j| region.contains(grid.xn(j))).collect();
    if rows.is_empty() {
        return Err(Error::Contract(format!("region {region:?} contains no grid nodes")));
    }
    let mut total = 0.0;
    for j in rows {
        for i in 0..grid.n1() {
            let k = grid.idx(i, j);
            let local: f64 = c1
                .fields()
                .zip(c2.fields())
                .map(|(f1, f2)| {
                    let d = f1[k] - f2[k];
                    d * d
                })
                .sum();
            total += grid.weight(i, j) * local;
        }
    }
    Ok(total)
}

/// Centered second-order derivative along the transverse axis, one-sided at the ends.
pub fn diff_transverse(f: &[f64], grid: &WaveguideGrid) -> Vec<f64> {
    let (n1, h) = (grid.n1(), grid.h1());
    let mut out = vec![0.0; f.len()];
    for j in 0..grid.nn() {
        let row = &f[j * n1..(j + 1) * n1];
        let dst = &mut out[j * n1..(j + 1) * n1];
        diff_line(row, h, dst);
    }
    out
}

/// Centered second-order derivative along the axis, one-sided at the ends.
pub fn diff_axial(f: &[f64], grid: &WaveguideGrid) -> Vec<f64> {
    let (n1, nn, h) = (grid.n1(), grid.nn(), grid.hn());
    let mut out = vec![0.0; f.len()];
    let mut line = vec![0.0; nn];
    let mut d = vec![0.0; nn];
    for i in 0..n1 {
        for j in 0..nn {
            line[j] = f[j * n1 + i];
        }
        diff_line(&line, h, &mut d);
        for j in 0..nn {
            out[j * n1 + i] = d[j];
        }
    }
    out
}

fn diff_line(f: &[f64], h: f64, out: &mut [f64]) {
    let n = f.len();
    for k in 1..n - 1 {
        out[k] = (f[k + 1] - f[k - 1]) / (2.0 * h);
    }
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    out[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
}

/// Discrete ∇·A (n = 2): ∂₁a₁ + ∂_n a_n with the stencils of [`diff_transverse`] / [`diff_axial`].
pub fn divergence(a: &[Vec<f64>], grid: &WaveguideGrid) -> Result<Vec<f64>> {
    if a.len() != 2 {
        return Err(Error::Contract(format!(
            "divergence is implemented for n = 2, got {} components",
            a.len()
        )));
    }
    for c in a {
        if c.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                got: c.len(),
            });
        }
    }
    let d1 = diff_transverse(&a[0], grid);
    let dn = diff_axial(&a[1], grid);
    Ok(d1.iter().zip(&dn).map(|(x, y)| x + y).collect())
}

/// Divergence-free field (∂_nψ, −∂₁ψ) from a stream function, built with the
/// same centered stencils so the discrete divergence cancels exactly.
pub fn stream_function_field(psi: &[f64], grid: &WaveguideGrid) -> Vec<Vec<f64>> {
    let a1 = diff_axial(psi, grid);
    let an: Vec<f64> = diff_transverse(psi, grid).into_iter().map(|v| -v).collect();
    vec![a1, an]
}

/// Box where perturbations may live: strictly inside the probe plateau.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSupport {
    pub x1_lo: f64,
    pub x1_hi: f64,
    pub axial_half: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationFamily {
    /// Only p is perturbed.
    CouplingOnly,
    /// A, p, q⁺, q⁻ are all perturbed.
    Mixed,
}

impl PerturbationFamily {
    pub fn name(self) -> &'static str {
        match self {
            PerturbationFamily::CouplingOnly => "p-only",
            PerturbationFamily::Mixed => "mixed",
        }
    }
}

/// Compact polynomial bump (1 − r²)³ on |r| < 1, C² and gentle in its
/// derivatives, which keeps time-stepping consistency errors small.
pub fn poly_bump(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - r * r).powi(BUMP_POWER)
    }
}

const BUMP_POWER: i32 = 3;

/// Background plus a seeded perturbation of size `amplitude`.
///
/// Each perturbed component is `amplitude · c · shape` with `|c| ∈ [0.5, 1]` and the
/// shape normalized so that `max |shape| / e^{−κ⟨x_n⟩^ϱ} = 1`. δA comes from a
/// stream function supported in `{|x_n| > y*}`, so δA is discretely
/// divergence-free and δa_n vanishes on `|x_n| ≤ y*`.
pub fn make_perturbation(
    params: &AdmissibleClassParams,
    grid: &WaveguideGrid,
    support: PerturbationSupport,
    family: PerturbationFamily,
    amplitude: f64,
    seed: u64,
) -> Result<CoefficientSet> {
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(Error::InvalidParameter {
            name: "amplitude",
            message: format!("must be non-negative, got {amplitude}"),
        });
    }
    params.background.check_shape(grid)?;
    if amplitude == 0.0 {
        return Ok(params.background.clone());
    }
    if support.axial_half <= params.y_star && family == PerturbationFamily::Mixed {
        return Err(Error::config(
            "harness.support",
            "perturbation support does not reach beyond y*; δA would be empty",
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut delta = CoefficientSet::zeros(grid);

    let mid1 = 0.5 * (support.x1_lo + support.x1_hi);
    let half1 = 0.5 * (support.x1_hi - support.x1_lo);
    let draw_coeff = |rng: &mut ChaCha8Rng| {
        let mag = rng.random_range(0.5..=1.0);
        if rng.random_bool(0.5) {
            mag
        } else {
            -mag
        }
    };

    let scalar_shape = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let w1 = half1 * rng.random_range(0.9..=1.0);
        let c1 = mid1 + rng.random_range(-1.0..=1.0) * (half1 - w1);
        let wn = support.axial_half * rng.random_range(0.5..=0.8);
        let cn = rng.random_range(-1.0..=1.0) * (support.axial_half - wn);
        let raw = grid.sample(|x1, xn| poly_bump((x1 - c1) / w1) * poly_bump((xn - cn) / wn) * params.decay(xn));
        normalize_to_envelope(raw, grid, params)
    };

    let budget_check = |name: &str, c: f64, env: f64| -> Result<()> {
        if amplitude * c.abs() > env * (1.0 + 1e-12) {
            return Err(Error::ClassViolation(format!(
                "amplitude {amplitude} × |{c:.3}| exceeds the {name} envelope {env}"
            )));
        }
        Ok(())
    };

    let cp = draw_coeff(&mut rng);
    budget_check("p", cp, params.envelope_p)?;
    let shape_p = scalar_shape(&mut rng);
    delta.p = shape_p.iter().map(|s| amplitude * cp * s).collect();

    if family == PerturbationFamily::Mixed {
        for target in 0..2 {
            let c = draw_coeff(&mut rng);
            budget_check("q", c, params.envelope_q)?;
            let shape = scalar_shape(&mut rng);
            let field: Vec<f64> = shape.iter().map(|s| amplitude * c * s).collect();
            if target == 0 {
                delta.q_plus = field;
            } else {
                delta.q_minus = field;
            }
        }

        let ca = draw_coeff(&mut rng);
        budget_check("A", ca, params.envelope_a)?;
        let psi = annular_stream_function(&mut rng, grid, params, support, mid1, half1);
        let mut a = stream_function_field(&psi, grid);
        let peak = (0..grid.len())
            .map(|k| {
                let (_, j) = grid.split(k);
                a.iter().map(|c| c[k] * c[k]).sum::<f64>().sqrt() / params.decay(grid.xn(j))
            })
            .fold(0.0_f64, f64::max);
        for comp in a.iter_mut() {
            comp.iter_mut().for_each(|v| *v *= amplitude * ca / peak);
        }
        delta.a = a;
    }

    let out = params.background.sum(&delta);
    for (name, field) in [("p", &out.p), ("q+", &out.q_plus), ("q-", &out.q_minus)] {
        let sup = field.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if sup > params.sup_budget {
            return Err(Error::ClassViolation(format!("sup |{name}| = {sup} exceeds M = {}", params.sup_budget)));
        }
    }
    let sup_a = (0..out.len()).map(|k| out.a_norm_at(k)).fold(0.0_f64, f64::max);
    if sup_a > params.sup_budget {
        return Err(Error::ClassViolation(format!("sup |A| = {sup_a} exceeds M = {}", params.sup_budget)));
    }
    Ok(out)
}

fn normalize_to_envelope(mut raw: Vec<f64>, grid: &WaveguideGrid, params: &AdmissibleClassParams) -> Vec<f64> {
    let peak = raw
        .iter()
        .enumerate()
        .map(|(k, v)| v.abs() / params.decay(grid.xn(grid.split(k).1)))
        .fold(0.0_f64, f64::max);
    if peak > 0.0 {
        raw.iter_mut().for_each(|v| *v /= peak);
    }
    raw
}

/// Stream function supported in the transverse bump × {y* < |x_n| < axial_half}.
fn annular_stream_function(
    rng: &mut ChaCha8Rng,
    grid: &WaveguideGrid,
    params: &AdmissibleClassParams,
    support: PerturbationSupport,
    mid1: f64,
    half1: f64,
) -> Vec<f64> {
    let w1 = half1 * rng.random_range(0.9..=1.0);
    let c1 = mid1 + rng.random_range(-1.0..=1.0) * (half1 - w1);
    // Axial bump centered in the annulus, one lobe on each side with independent weights.
    let inner = params.y_star;
    let outer = support.axial_half;
    let center = 0.5 * (inner + outer);
    let width = 0.5 * (outer - inner);
    let left = rng.random_range(0.5..=1.0);
    let right = if rng.random_bool(0.5) { 1.0 } else { -1.0 } * rng.random_range(0.5..=1.0);
    grid.sample(|x1, xn| {
        let lobe = if xn > 0.0 { right } else { left };
        lobe * poly_bump((x1 - c1) / w1) * poly_bump((xn.abs() - center) / width) * params.decay(xn)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckOutcome>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Runs the membership checks: sup budget, decay envelope, boundary agreement,
/// divergence, and agreement of a_n on |x_n| < y*.
pub fn validate_admissible(
    c: &CoefficientSet,
    params: &AdmissibleClassParams,
    grid: &WaveguideGrid,
    divergence_tol: f64,
) -> Result<ValidationReport> {
    c.check_shape(grid)?;
    params.background.check_shape(grid)?;
    let bg = &params.background;
    let delta = c.difference(bg);
    let len = grid.len();

    let sup_scalar = [&c.p, &c.q_plus, &c.q_minus]
        .iter()
        .flat_map(|f| f.iter().map(|v| v.abs()))
        .fold(0.0_f64, f64::max);
    let sup_a = (0..len).map(|k| c.a_norm_at(k)).fold(0.0_f64, f64::max);
    let sup = sup_scalar.max(sup_a);

    // Ratio of each component's deviation to its envelope; ≤ 1 passes.
    let mut envelope_ratio = 0.0_f64;
    for k in 0..len {
        let decay = params.decay(grid.xn(grid.split(k).1));
        let ratios = [
            delta.a_norm_at(k) / (params.envelope_a * decay),
            delta.p[k].abs() / (params.envelope_p * decay),
            delta.q_plus[k].abs() / (params.envelope_q * decay),
            delta.q_minus[k].abs() / (params.envelope_q * decay),
        ];
        envelope_ratio = ratios.iter().fold(envelope_ratio, |m, r| m.max(*r));
    }

    let mut boundary_dev = 0.0_f64;
    for j in 0..grid.nn() {
        for i in 0..grid.n1() {
            if grid.is_boundary(i, j) {
                let k = grid.idx(i, j);
                for f in delta.fields() {
                    boundary_dev = boundary_dev.max(f[k].abs());
                }
            }
        }
    }

    let div = divergence(&c.a, grid)?;
    let div_max = div.iter().fold(0.0_f64, |m, v| m.max(v.abs()));

    let an = c.a_axial();
    let bg_an = bg.a_axial();
    let mut an_dev = 0.0_f64;
    for j in 0..grid.nn() {
        if grid.xn(j).abs() < params.y_star {
            for i in 0..grid.n1() {
                let k = grid.idx(i, j);
                an_dev = an_dev.max((an[k] - bg_an[k]).abs());
            }
        }
    }

    Ok(ValidationReport {
        checks: vec![
            CheckOutcome {
                name: "sup-budget",
                passed: sup <= params.sup_budget,
                worst: sup,
            },
            CheckOutcome {
                name: "decay-envelope",
                passed: envelope_ratio <= 1.0 + 1e-12,
                worst: envelope_ratio,
            },
            CheckOutcome {
                name: "boundary-agreement",
                passed: boundary_dev == 0.0,
                worst: boundary_dev,
            },
            CheckOutcome {
                name: "divergence-free",
                passed: div_max <= divergence_tol,
                worst: div_max,
            },
            CheckOutcome {
                name: "axial-agreement",
                passed: an_dev == 0.0,
                worst: an_dev,
            },
        ],
    })
}
