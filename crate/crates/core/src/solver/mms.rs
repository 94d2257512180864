//! Manufactured solutions for solver verification.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{apply_full, BoundaryData, Propagator, SolverOptions, TwoStateField};
use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::grid::{trapezoid_weight, WaveguideGrid};

/// A closed-form candidate u(x, t) = (u⁺, u⁻).
pub trait ManufacturedSolution {
    fn value(&self, x1: f64, xn: f64, t: f64) -> [Complex64; 2];
    fn time_derivative(&self, x1: f64, xn: f64, t: f64) -> [Complex64; 2];
    /// Continuous (H u)(x, t) for the coefficients in use, when known in closed form.
    fn hamiltonian_value(&self, _x1: f64, _xn: f64, _t: f64) -> Option<[Complex64; 2]> {
        None
    }
}

/// How H u enters the source f = −i∂ₜu + H u.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceMode {
    /// Closed-form H u: the error measures both space and time discretization.
    Analytic,
    /// Discrete H_h applied to the sampled candidate: only the time error remains.
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmsReport {
    pub mode: SourceMode,
    pub l2_error: f64,
    pub relative_l2_error: f64,
    pub max_error: f64,
    pub h1: f64,
    pub hn: f64,
    pub dt: f64,
}

fn sample(candidate: &dyn ManufacturedSolution, grid: &WaveguideGrid, t: f64) -> TwoStateField {
    let mut f = TwoStateField::zeros(grid);
    for k in 0..grid.len() {
        let (i, j) = grid.split(k);
        let [a, b] = candidate.value(grid.x1(i), grid.xn(j), t);
        f.u_plus[k] = a;
        f.u_minus[k] = b;
    }
    f
}

pub fn mms_source(
    candidate: &dyn ManufacturedSolution,
    mode: SourceMode,
    c: &CoefficientSet,
    grid: &WaveguideGrid,
    t: f64,
) -> Result<TwoStateField> {
    let i = Complex64::new(0.0, 1.0);
    let mut f = TwoStateField::zeros(grid);
    let discrete = match mode {
        SourceMode::Discrete => {
            let u = sample(candidate, grid, t);
            Some(apply_full(c, grid, [&u.u_plus, &u.u_minus]))
        }
        SourceMode::Analytic => None,
    };
    for k in 0..grid.len() {
        let (ii, jj) = grid.split(k);
        let (x1, xn) = (grid.x1(ii), grid.xn(jj));
        let dt = candidate.time_derivative(x1, xn, t);
        let hu = match &discrete {
            Some(h) => [h[0][k], h[1][k]],
            None => candidate.hamiltonian_value(x1, xn, t).ok_or_else(|| {
                Error::Contract("analytic source mode needs a closed-form H u".into())
            })?,
        };
        f.u_plus[k] = -i * dt[0] + hu[0];
        f.u_minus[k] = -i * dt[1] + hu[1];
    }
    Ok(f)
}

/// Solves with the manufactured source and compares with the candidate in L²(Q).
pub fn mms_residual(
    candidate: &dyn ManufacturedSolution,
    mode: SourceMode,
    c: &CoefficientSet,
    grid: &WaveguideGrid,
    options: SolverOptions,
) -> Result<MmsReport> {
    // The candidate must satisfy the homogeneous Dirichlet closure at all times.
    for m in [0, grid.steps / 2, grid.steps] {
        let t = grid.time(m);
        let s = sample(candidate, grid, t);
        let scale = s.max_abs().max(1e-300);
        for k in 0..grid.len() {
            let (i, j) = grid.split(k);
            if grid.is_boundary(i, j) && (s.u_plus[k].norm() > 1e-12 * scale || s.u_minus[k].norm() > 1e-12 * scale) {
                return Err(Error::BoundaryCondition(format!(
                    "candidate does not vanish on the boundary at x = ({:.4}, {:.4}), t = {t:.4}",
                    grid.x1(i),
                    grid.xn(j)
                )));
            }
        }
    }
    let mut prop = Propagator::new(c, grid, grid.dt(), &BoundaryData::Homogeneous, options)?;
    let u0 = sample(candidate, grid, 0.0);
    let mut source_err = None;
    let mut source = |t: f64| match mms_source(candidate, mode, c, grid, t) {
        Ok(f) => f,
        Err(e) => {
            source_err = Some(e);
            TwoStateField::zeros(grid)
        }
    };
    let (mut err_sq, mut ref_sq, mut max_err) = (0.0, 0.0, 0.0_f64);
    let nt = grid.steps + 1;
    prop.run(&u0, grid.steps, Some(&mut source), |m, _, s| {
        let exact = sample(candidate, grid, grid.time(m));
        let wt = trapezoid_weight(m, nt, grid.dt());
        let diff = s.difference(&exact);
        err_sq += wt * diff.l2_norm_sq(grid);
        ref_sq += wt * exact.l2_norm_sq(grid);
        max_err = max_err.max(diff.max_abs());
        Ok(())
    })?;
    if let Some(e) = source_err {
        return Err(e);
    }
    Ok(MmsReport {
        mode,
        l2_error: err_sq.sqrt(),
        relative_l2_error: (err_sq / ref_sq.max(1e-300)).sqrt(),
        max_error: max_err,
        h1: grid.h1(),
        hn: grid.hn(),
        dt: grid.dt(),
    })
}

/// u⁺ = e^{iωt} sin(πx₁/ℓ) sin(π(xₙ+X)/(2X)), u⁻ = ½ e^{−iωt} sin(2πx₁/ℓ) sin(π(xₙ+X)/X).
/// Vanishes on the whole boundary of the truncated box. `hamiltonian_value`
/// is exact for constant A, p and q±.
#[derive(Debug, Clone, Copy)]
pub struct SineModeCandidate {
    pub extent: f64,
    pub half_length: f64,
    pub omega: f64,
    /// Constant coupling vector (a₁, a_n); divergence-free by construction.
    pub a: [f64; 2],
    pub p: f64,
    pub q_plus: f64,
    pub q_minus: f64,
}

struct Modes {
    phi: [f64; 2],
    grad: [[f64; 2]; 2],
    lam: [f64; 2],
}

impl SineModeCandidate {
    fn modes(&self, x1: f64, xn: f64) -> Modes {
        use std::f64::consts::PI;
        let (l, x) = (self.extent, self.half_length);
        let (k1p, knp) = (PI / l, PI / (2.0 * x));
        let (k1m, knm) = (2.0 * PI / l, PI / x);
        let (s1p, c1p) = (k1p * x1).sin_cos();
        let (snp, cnp) = (knp * (xn + x)).sin_cos();
        let (s1m, c1m) = (k1m * x1).sin_cos();
        let (snm, cnm) = (knm * (xn + x)).sin_cos();
        Modes {
            phi: [s1p * snp, 0.5 * s1m * snm],
            grad: [[k1p * c1p * snp, knp * s1p * cnp], [0.5 * k1m * c1m * snm, 0.5 * knm * s1m * cnm]],
            lam: [k1p * k1p + knp * knp, k1m * k1m + knm * knm],
        }
    }

    fn phases(&self, t: f64) -> [Complex64; 2] {
        [
            Complex64::new(0.0, self.omega * t).exp(),
            Complex64::new(0.0, -self.omega * t).exp(),
        ]
    }
}

impl ManufacturedSolution for SineModeCandidate {
    fn value(&self, x1: f64, xn: f64, t: f64) -> [Complex64; 2] {
        let m = self.modes(x1, xn);
        let e = self.phases(t);
        [e[0] * m.phi[0], e[1] * m.phi[1]]
    }

    fn time_derivative(&self, x1: f64, xn: f64, t: f64) -> [Complex64; 2] {
        let [a, b] = self.value(x1, xn, t);
        let i = Complex64::new(0.0, 1.0);
        [i * self.omega * a, -i * self.omega * b]
    }

    fn hamiltonian_value(&self, x1: f64, xn: f64, t: f64) -> Option<[Complex64; 2]> {
        let m = self.modes(x1, xn);
        let e = self.phases(t);
        let (up, um) = (e[0] * m.phi[0], e[1] * m.phi[1]);
        let a_grad = |g: [f64; 2]| self.a[0] * g[0] + self.a[1] * g[1];
        let (dp, dm) = (e[0] * a_grad(m.grad[0]), e[1] * a_grad(m.grad[1]));
        Some([
            up * (m.lam[0] + self.q_plus) + um * self.p + dm,
            um * (m.lam[1] + self.q_minus) + up * self.p - dp,
        ])
    }
}

/// Which discretization error a ladder isolates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MmsStudy {
    /// Δt halves on a fixed space grid; the source uses the discrete H.
    Time,
    /// h halves on a stationary candidate; the source uses the continuous H.
    Space,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderReport {
    pub study: MmsStudy,
    pub levels: Vec<MmsReport>,
    /// log₂ of successive error ratios.
    pub orders: Vec<f64>,
}

impl LadderReport {
    pub fn observed_order(&self) -> f64 {
        *self.orders.last().unwrap_or(&f64::NAN)
    }
}

/// Constant-coefficient set matching a candidate.
pub fn candidate_coefficients(cand: &SineModeCandidate, grid: &WaveguideGrid) -> CoefficientSet {
    let mut c = CoefficientSet::zeros(grid);
    for (field, v) in c.a.iter_mut().zip(cand.a) {
        field.iter_mut().for_each(|x| *x = v);
    }
    c.p.iter_mut().for_each(|v| *v = cand.p);
    c.q_plus.iter_mut().for_each(|v| *v = cand.q_plus);
    c.q_minus.iter_mut().for_each(|v| *v = cand.q_minus);
    c
}

/// Refinement ladder from `base`: each level halves Δt (time) or both
/// spacings (space, with the node counts going n → 2n − 1).
pub fn mms_ladder(
    cand: &SineModeCandidate,
    study: MmsStudy,
    base: &WaveguideGrid,
    levels: usize,
    options: SolverOptions,
) -> Result<LadderReport> {
    if levels < 2 {
        return Err(Error::InvalidParameter {
            name: "levels",
            message: format!("need at least two levels, got {levels}"),
        });
    }
    let mut reports = Vec::with_capacity(levels);
    let mut grid = base.clone();
    for level in 0..levels {
        if level > 0 {
            grid = match study {
                MmsStudy::Time => grid.with_time(grid.horizon, 2 * grid.steps)?,
                MmsStudy::Space => WaveguideGrid::new(
                    crate::grid::CrossSection::interval(grid.cross_section.extent, 2 * grid.n1() - 1)?,
                    grid.half_length,
                    2 * grid.nn() - 1,
                    grid.horizon,
                    grid.steps,
                )?,
            };
        }
        let c = candidate_coefficients(cand, &grid);
        let mode = match study {
            MmsStudy::Time => SourceMode::Discrete,
            MmsStudy::Space => SourceMode::Analytic,
        };
        reports.push(mms_residual(cand, mode, &c, &grid, options)?);
    }
    let orders = reports.windows(2).map(|w| (w[0].l2_error / w[1].l2_error).log2()).collect();
    Ok(LadderReport {
        study,
        levels: reports,
        orders,
    })
}
