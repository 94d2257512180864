//! Crank–Nicolson propagation of −i∂ₜu + Hu = f on the truncated waveguide.

pub mod dst;
pub mod gmres;
pub mod hamiltonian;
pub mod mms;
pub mod trace;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::grid::WaveguideGrid;

pub use dst::DirichletPreconditioner;
pub use hamiltonian::{apply_full, assemble_hamiltonian, CsrMatrix, Hamiltonian, InteriorLayout};
pub use trace::{BoundarySeries, NeumannTrace, Parity};

/// u = (u⁺, u⁻) on the full space grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStateField {
    pub u_plus: Vec<Complex64>,
    pub u_minus: Vec<Complex64>,
}

impl TwoStateField {
    pub fn zeros(grid: &WaveguideGrid) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); grid.len()];
        TwoStateField {
            u_plus: z.clone(),
            u_minus: z,
        }
    }

    pub fn from_real(plus: &[f64], minus: &[f64]) -> Self {
        TwoStateField {
            u_plus: plus.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            u_minus: minus.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn component(&self, comp: usize) -> &[Complex64] {
        if comp == 0 {
            &self.u_plus
        } else {
            &self.u_minus
        }
    }

    pub fn check(&self, grid: &WaveguideGrid) -> Result<()> {
        for comp in [&self.u_plus, &self.u_minus] {
            if comp.len() != grid.len() {
                return Err(Error::ShapeMismatch {
                    expected: grid.len(),
                    got: comp.len(),
                });
            }
            if comp.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::Contract("field has non-finite entries".into()));
            }
        }
        Ok(())
    }

    /// Squared L²(Ω) norm of both components, trapezoidal.
    pub fn l2_norm_sq(&self, grid: &WaveguideGrid) -> f64 {
        let mut total = 0.0;
        for comp in [&self.u_plus, &self.u_minus] {
            for (k, v) in comp.iter().enumerate() {
                let (i, j) = grid.split(k);
                total += grid.weight(i, j) * v.norm_sqr();
            }
        }
        total
    }

    pub fn max_abs(&self) -> f64 {
        self.u_plus
            .iter()
            .chain(&self.u_minus)
            .fold(0.0_f64, |m, v| m.max(v.norm()))
    }

    pub fn difference(&self, other: &Self) -> Self {
        TwoStateField {
            u_plus: self.u_plus.iter().zip(&other.u_plus).map(|(a, b)| a - b).collect(),
            u_minus: self.u_minus.iter().zip(&other.u_minus).map(|(a, b)| a - b).collect(),
        }
    }

    fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        TwoStateField {
            u_plus: self.u_plus.iter().map(|&v| f(v)).collect(),
            u_minus: self.u_minus.iter().map(|&v| f(v)).collect(),
        }
    }

    fn to_interior(&self, grid: &WaveguideGrid, layout: &InteriorLayout) -> Vec<Complex64> {
        let mut x = vec![Complex64::new(0.0, 0.0); layout.dim()];
        for comp in 0..2 {
            let f = self.component(comp);
            for j in 1..grid.nn() - 1 {
                for i in 1..grid.n1() - 1 {
                    x[layout.index(comp, i, j)] = f[grid.idx(i, j)];
                }
            }
        }
        x
    }

    /// Interior values from `x`, boundary values from `frame`.
    fn from_interior(x: &[Complex64], frame: &TwoStateField, grid: &WaveguideGrid, layout: &InteriorLayout) -> Self {
        let mut out = frame.clone();
        for comp in 0..2 {
            let f = if comp == 0 { &mut out.u_plus } else { &mut out.u_minus };
            for j in 1..grid.nn() - 1 {
                for i in 1..grid.n1() - 1 {
                    f[grid.idx(i, j)] += x[layout.index(comp, i, j)];
                }
            }
        }
        out
    }
}

/// Snapshots at `times` (t = 0, Δt, …, T unless extended).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub grid: WaveguideGrid,
    pub coefficients: CoefficientSet,
    pub times: Vec<f64>,
    pub snapshots: Vec<TwoStateField>,
}

impl Trajectory {
    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn difference(&self, other: &Self) -> Result<Self> {
        if self.times.len() != other.times.len() || self.grid != other.grid {
            return Err(Error::Contract("trajectories have different layouts".into()));
        }
        Ok(Trajectory {
            grid: self.grid.clone(),
            coefficients: self.coefficients.difference(&other.coefficients),
            times: self.times.clone(),
            snapshots: self
                .snapshots
                .iter()
                .zip(&other.snapshots)
                .map(|(a, b)| a.difference(b))
                .collect(),
        })
    }

    fn map_components(&self, f: impl Fn(&[Vec<Complex64>]) -> Result<Vec<Vec<Complex64>>>, times: Vec<f64>) -> Result<Self> {
        let plus: Vec<Vec<Complex64>> = self.snapshots.iter().map(|s| s.u_plus.clone()).collect();
        let minus: Vec<Vec<Complex64>> = self.snapshots.iter().map(|s| s.u_minus.clone()).collect();
        let (plus, minus) = (f(&plus)?, f(&minus)?);
        Ok(Trajectory {
            grid: self.grid.clone(),
            coefficients: self.coefficients.clone(),
            times,
            snapshots: plus
                .into_iter()
                .zip(minus)
                .map(|(u_plus, u_minus)| TwoStateField { u_plus, u_minus })
                .collect(),
        })
    }

    /// v = ∂ₜu by second-order differences.
    pub fn time_derivative(&self) -> Result<Self> {
        if self.snapshots.len() < 3 {
            return Err(Error::TooFewSnapshots {
                needed: 3,
                got: self.snapshots.len(),
            });
        }
        let dt = self.dt();
        self.map_components(|s| trace::time_derivative_samples(s, dt), self.times.clone())
    }

    pub fn conjugate_extend(&self, parity: Parity, tol: f64) -> Result<Self> {
        if self.times.first() != Some(&0.0) {
            return Err(Error::Contract("conjugate extension expects samples starting at t = 0".into()));
        }
        if parity == Parity::Derivative {
            let scale = self.snapshots.iter().map(|s| s.max_abs()).fold(0.0, f64::max);
            let s0 = &self.snapshots[0];
            let max_real = s0.u_plus.iter().chain(&s0.u_minus).fold(0.0_f64, |m, v| m.max(v.re.abs()));
            if max_real > tol * scale {
                return Err(Error::ParityViolation { max_real });
            }
        }
        let mut times: Vec<f64> = self.times[1..].iter().rev().map(|t| -t).collect();
        times.extend_from_slice(&self.times);
        self.map_components(|s| trace::conjugate_extend_samples(s, parity, f64::INFINITY), times)
    }

    pub fn neumann_trace(&self, gamma_star: &crate::grid::SubBoundary) -> Result<NeumannTrace> {
        trace::check_sub_boundary(&self.grid, gamma_star)?;
        let mut tr = NeumannTrace::new(gamma_star);
        for (t, s) in self.times.iter().zip(&self.snapshots) {
            tr.record(&self.grid, *t, &s.u_plus, &s.u_minus);
        }
        Ok(tr)
    }
}

/// Dirichlet data on the lateral boundary and at ±X.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum BoundaryData {
    #[default]
    Homogeneous,
    /// Time-independent data g, read from the boundary nodes of the field.
    Stationary(TwoStateField),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative residual target per step.
    pub tolerance: f64,
    pub restart: usize,
    pub max_iterations: usize,
    /// Warn when Δt times the Gershgorin bound on ‖H‖ exceeds this.
    pub stiffness_warning: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-12,
            restart: 40,
            max_iterations: 400,
            stiffness_warning: 1e4,
        }
    }
}

/// Contract bound on the per-step relative residual.
pub const RESIDUAL_CONTRACT: f64 = 1e-10;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub steps: usize,
    pub total_iterations: usize,
    pub max_iterations: usize,
    pub max_residual: f64,
    pub dt_norm_product: f64,
    pub warnings: Vec<String>,
}

/// One Crank–Nicolson step operator for a fixed coefficient set and (signed) Δt.
pub struct Propagator {
    grid: WaveguideGrid,
    layout: InteriorLayout,
    hamiltonian: Hamiltonian,
    preconditioner: DirichletPreconditioner,
    tau: f64,
    dt: f64,
    options: SolverOptions,
    /// Boundary frame G (zero inside) and its source −(H G)|interior.
    lift: Option<(TwoStateField, Vec<Complex64>)>,
    work: Vec<Complex64>,
}

impl Propagator {
    pub fn new(
        c: &CoefficientSet,
        grid: &WaveguideGrid,
        dt: f64,
        boundary: &BoundaryData,
        options: SolverOptions,
    ) -> Result<Self> {
        if !dt.is_finite() || dt == 0.0 {
            return Err(Error::InvalidParameter {
                name: "dt",
                message: format!("must be finite and nonzero, got {dt}"),
            });
        }
        let hamiltonian = assemble_hamiltonian(c, grid)?;
        let layout = hamiltonian.layout;
        let len = grid.len();
        let shift = c.q_plus.iter().chain(&c.q_minus).sum::<f64>() / (2 * len) as f64;
        let tau = dt / 2.0;
        let preconditioner = DirichletPreconditioner::new(layout, grid.h1(), grid.hn(), tau, shift);
        let lift = match boundary {
            BoundaryData::Homogeneous => None,
            BoundaryData::Stationary(g) => {
                g.check(grid)?;
                let mut frame = TwoStateField::zeros(grid);
                for k in 0..len {
                    let (i, j) = grid.split(k);
                    if grid.is_boundary(i, j) {
                        frame.u_plus[k] = g.u_plus[k];
                        frame.u_minus[k] = g.u_minus[k];
                    }
                }
                let hg = apply_full(c, grid, [&frame.u_plus, &frame.u_minus]);
                let hg = TwoStateField {
                    u_plus: hg[0].clone(),
                    u_minus: hg[1].clone(),
                };
                let source = hg.to_interior(grid, &layout).into_iter().map(|v| -v).collect();
                Some((frame, source))
            }
        };
        Ok(Propagator {
            grid: grid.clone(),
            layout,
            hamiltonian,
            preconditioner,
            tau,
            dt,
            options,
            lift,
            work: vec![Complex64::new(0.0, 0.0); layout.dim()],
        })
    }

    pub fn hamiltonian(&self) -> &Hamiltonian {
        &self.hamiltonian
    }

    pub fn layout(&self) -> InteriorLayout {
        self.layout
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// (I + iτH)x^{m+1} = (I − iτH)x^m + iτ(f^{m+1} + f^m), in place.
    /// `sources` holds the interior source vectors at t^m and t^{m+1}.
    pub fn step(&mut self, x: &mut [Complex64], sources: Option<(&[Complex64], &[Complex64])>, step: usize) -> Result<gmres::GmresOutcome> {
        let itau = Complex64::new(0.0, self.tau);
        let matrix = &self.hamiltonian.matrix;
        matrix.matvec(x, &mut self.work);
        let mut rhs: Vec<Complex64> = x.iter().zip(&self.work).map(|(u, hu)| u - itau * hu).collect();
        if let Some((f0, f1)) = sources {
            for ((r, a), b) in rhs.iter_mut().zip(f0).zip(f1) {
                *r += itau * (a + b);
            }
        }
        if let Some((_, lift)) = &self.lift {
            for (r, g) in rhs.iter_mut().zip(lift) {
                *r += itau * 2.0 * g;
            }
        }
        let pre = &self.preconditioner;
        let outcome = gmres::gmres(
            |v, y| {
                matrix.matvec(v, y);
                for (yy, vv) in y.iter_mut().zip(v) {
                    *yy = vv + itau * *yy;
                }
            },
            |v| pre.solve_in_place(v),
            &rhs,
            x,
            self.options.tolerance,
            self.options.restart,
            self.options.max_iterations,
        );
        if !outcome.converged && outcome.relative_residual > RESIDUAL_CONTRACT {
            return Err(Error::LinearSolve {
                step,
                residual: outcome.relative_residual,
                iterations: outcome.iterations,
            });
        }
        Ok(outcome)
    }

    fn check_initial(&self, u0: &TwoStateField) -> Result<()> {
        u0.check(&self.grid)?;
        let frame = self.lift.as_ref().map(|(f, _)| f);
        let scale = u0.max_abs().max(frame.map_or(0.0, |f| f.max_abs())).max(1e-300);
        let mut worst = 0.0_f64;
        for k in 0..self.grid.len() {
            let (i, j) = self.grid.split(k);
            if !self.grid.is_boundary(i, j) {
                continue;
            }
            for comp in 0..2 {
                let g = frame.map_or(Complex64::new(0.0, 0.0), |f| f.component(comp)[k]);
                worst = worst.max((u0.component(comp)[k] - g).norm());
            }
        }
        if worst > 1e-12 * scale {
            return Err(Error::BoundaryCondition(format!(
                "initial state differs from the Dirichlet data by {worst:.3e} on the boundary"
            )));
        }
        Ok(())
    }

    /// Runs `steps` steps from `u0`, handing every snapshot (including u0) to
    /// `observer`. `source(t)` gives an optional full-grid source f at time t.
    pub fn run(
        &mut self,
        u0: &TwoStateField,
        steps: usize,
        mut source: Option<&mut dyn FnMut(f64) -> TwoStateField>,
        mut observer: impl FnMut(usize, f64, &TwoStateField) -> Result<()>,
    ) -> Result<SolveStats> {
        self.check_initial(u0)?;
        let mut stats = SolveStats {
            dt_norm_product: self.dt.abs() * self.hamiltonian.matrix.gershgorin_radius(),
            ..Default::default()
        };
        if stats.dt_norm_product > self.options.stiffness_warning {
            stats.warnings.push(format!(
                "dt * ||H|| = {:.3e} exceeds {:.1e}; high modes are strongly phase-damped",
                stats.dt_norm_product, self.options.stiffness_warning
            ));
        }
        let frame = match &self.lift {
            Some((f, _)) => f.clone(),
            None => TwoStateField::zeros(&self.grid),
        };
        let grid = self.grid.clone();
        let layout = self.layout;
        let mut x = u0.to_interior(&grid, &layout);
        observer(0, 0.0, u0)?;
        let mut f_prev = source.as_mut().map(|s| s(0.0).to_interior(&grid, &layout));
        for m in 1..=steps {
            let t = m as f64 * self.dt;
            let f_next = source.as_mut().map(|s| s(t).to_interior(&grid, &layout));
            let pair = match (&f_prev, &f_next) {
                (Some(a), Some(b)) => Some((a.as_slice(), b.as_slice())),
                _ => None,
            };
            let outcome = self.step(&mut x, pair, m)?;
            stats.steps += 1;
            stats.total_iterations += outcome.iterations;
            stats.max_iterations = stats.max_iterations.max(outcome.iterations);
            stats.max_residual = stats.max_residual.max(outcome.relative_residual);
            f_prev = f_next;
            let snap = TwoStateField::from_interior(&x, &frame, &grid, &layout);
            observer(m, t, &snap)?;
        }
        Ok(stats)
    }
}

/// Streams the homogeneous evolution from `u0` over the grid's time window.
pub fn propagate(
    u0: &TwoStateField,
    boundary: &BoundaryData,
    c: &CoefficientSet,
    grid: &WaveguideGrid,
    options: SolverOptions,
    observer: impl FnMut(usize, f64, &TwoStateField) -> Result<()>,
) -> Result<SolveStats> {
    let mut prop = Propagator::new(c, grid, grid.dt(), boundary, options)?;
    prop.run(u0, grid.steps, None, observer)
}

pub fn solve_forward(
    u0: &TwoStateField,
    boundary: &BoundaryData,
    c: &CoefficientSet,
    grid: &WaveguideGrid,
) -> Result<Trajectory> {
    solve_forward_with(u0, boundary, c, grid, SolverOptions::default()).map(|(t, _)| t)
}

pub fn solve_forward_with(
    u0: &TwoStateField,
    boundary: &BoundaryData,
    c: &CoefficientSet,
    grid: &WaveguideGrid,
    options: SolverOptions,
) -> Result<(Trajectory, SolveStats)> {
    let mut times = Vec::with_capacity(grid.steps + 1);
    let mut snapshots = Vec::with_capacity(grid.steps + 1);
    let stats = propagate(u0, boundary, c, grid, options, |m, _, s| {
        times.push(grid.time(m));
        snapshots.push(s.clone());
        Ok(())
    })?;
    Ok((
        Trajectory {
            grid: grid.clone(),
            coefficients: c.clone(),
            times,
            snapshots,
        },
        stats,
    ))
}

/// Neumann trace of the streamed solution, without keeping snapshots.
pub fn forward_trace(
    u0: &TwoStateField,
    c: &CoefficientSet,
    grid: &WaveguideGrid,
    gamma_star: &crate::grid::SubBoundary,
    options: SolverOptions,
) -> Result<(NeumannTrace, SolveStats)> {
    trace::check_sub_boundary(grid, gamma_star)?;
    let mut tr = NeumannTrace::new(gamma_star);
    let stats = propagate(u0, &BoundaryData::Homogeneous, c, grid, options, |m, _, s| {
        tr.record(grid, grid.time(m), &s.u_plus, &s.u_minus);
        Ok(())
    })?;
    Ok((tr, stats))
}

/// Conjugate of every entry; maps a solution for t ≥ 0 to one backward in time.
pub fn conjugate(field: &TwoStateField) -> TwoStateField {
    field.map(|v| v.conj())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CrossSection;

    fn small_grid() -> WaveguideGrid {
        WaveguideGrid::new(CrossSection::interval(1.0, 17).unwrap(), 2.0, 33, 0.5, 50).unwrap()
    }

    fn coupled(grid: &WaveguideGrid) -> CoefficientSet {
        let mut c = CoefficientSet::zeros(grid);
        let psi = grid.sample(|x1, xn| 0.05 * (std::f64::consts::PI * x1).sin().powi(2) * (-xn * xn).exp());
        c.a = crate::coefficients::stream_function_field(&psi, grid);
        c.p = grid.sample(|_, xn| 0.3 * (-xn * xn / 2.0).exp());
        c.q_plus = grid.sample(|x1, _| 0.5 + 0.2 * x1);
        c.q_minus = grid.sample(|_, xn| -0.5 + 0.1 * xn.cos());
        c
    }

    fn bump(grid: &WaveguideGrid) -> TwoStateField {
        let plus = grid.sample(|x1, xn| (std::f64::consts::PI * x1).sin() * (-2.0 * xn * xn).exp());
        let minus = grid.sample(|x1, xn| (2.0 * std::f64::consts::PI * x1).sin() * (-(xn - 0.3).powi(2) * 3.0).exp() * 0.5);
        let mut f = TwoStateField::from_real(&plus, &minus);
        for k in 0..grid.len() {
            let (i, j) = grid.split(k);
            if grid.is_boundary(i, j) {
                f.u_plus[k] = Complex64::new(0.0, 0.0);
                f.u_minus[k] = Complex64::new(0.0, 0.0);
            }
        }
        f
    }

    #[test]
    fn zero_data_gives_zero_trajectory() {
        let g = small_grid();
        let traj = solve_forward(&TwoStateField::zeros(&g), &BoundaryData::Homogeneous, &coupled(&g), &g).unwrap();
        assert_eq!(traj.snapshots.len(), g.steps + 1);
        assert!(traj.snapshots.iter().all(|s| s.max_abs() == 0.0));
    }

    #[test]
    fn decoupled_blocks_stay_decoupled() {
        let g = small_grid();
        let mut c = coupled(&g);
        c.a.iter_mut().for_each(|f| f.iter_mut().for_each(|v| *v = 0.0));
        c.p.iter_mut().for_each(|v| *v = 0.0);
        let mut u0 = bump(&g);
        u0.u_minus.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        let traj = solve_forward(&u0, &BoundaryData::Homogeneous, &c, &g).unwrap();
        assert!(traj.snapshots.iter().all(|s| s.u_minus.iter().all(|v| *v == Complex64::new(0.0, 0.0))));
        assert!(traj.snapshots.last().unwrap().u_plus.iter().any(|v| v.norm() > 1e-3));
    }

    #[test]
    fn norm_is_conserved() {
        let g = small_grid();
        let c = coupled(&g);
        let u0 = bump(&g);
        let n0 = u0.l2_norm_sq(&g);
        let (traj, stats) = solve_forward_with(&u0, &BoundaryData::Homogeneous, &c, &g, SolverOptions::default()).unwrap();
        assert!(stats.max_residual <= RESIDUAL_CONTRACT);
        for s in &traj.snapshots {
            let drift = (s.l2_norm_sq(&g) / n0).sqrt() - 1.0;
            assert!(drift.abs() < 1e-8, "drift {drift}");
        }
    }

    #[test]
    fn backward_steps_undo_forward_steps() {
        let g = small_grid();
        let c = coupled(&g);
        let u0 = bump(&g);
        let mut fwd = Propagator::new(&c, &g, g.dt(), &BoundaryData::Homogeneous, SolverOptions::default()).unwrap();
        let mut last = u0.clone();
        fwd.run(&u0, 20, None, |_, _, s| {
            last = s.clone();
            Ok(())
        })
        .unwrap();
        let mut back = Propagator::new(&c, &g, -g.dt(), &BoundaryData::Homogeneous, SolverOptions::default()).unwrap();
        let mut ret = last.clone();
        back.run(&last, 20, None, |_, _, s| {
            ret = s.clone();
            Ok(())
        })
        .unwrap();
        let err = ret.difference(&u0).max_abs();
        assert!(err < 1e-9, "err {err}");
    }

    #[test]
    fn stationary_data_is_held_on_the_boundary() {
        let g = small_grid();
        let c = coupled(&g);
        let mut gdata = TwoStateField::zeros(&g);
        for k in 0..g.len() {
            let (i, j) = g.split(k);
            if i == g.n1() - 1 {
                gdata.u_plus[k] = Complex64::new((-g.xn(j).powi(2)).exp(), 0.0);
            }
        }
        // u0 = g on the boundary and the bump inside.
        let mut u0 = bump(&g);
        for k in 0..g.len() {
            let (i, j) = g.split(k);
            if g.is_boundary(i, j) {
                u0.u_plus[k] = gdata.u_plus[k];
            }
        }
        let traj = solve_forward(&u0, &BoundaryData::Stationary(gdata.clone()), &c, &g).unwrap();
        for s in &traj.snapshots {
            for k in 0..g.len() {
                let (i, j) = g.split(k);
                if g.is_boundary(i, j) {
                    assert_eq!(s.u_plus[k], gdata.u_plus[k]);
                }
            }
        }
        // Homogeneous mode rejects the same initial state.
        assert!(matches!(
            solve_forward(&u0, &BoundaryData::Homogeneous, &c, &g),
            Err(Error::BoundaryCondition(_))
        ));
    }

    #[test]
    fn derivative_of_real_start_difference_passes_parity() {
        let g = small_grid();
        // Re v(·,0) is a consistency error of order Δt²; keep Δt·‖H u₀‖ small.
        let g = g.with_time(0.05, 50).unwrap();
        let c1 = coupled(&g);
        let mut c2 = c1.clone();
        c2.p.iter_mut().for_each(|v| *v *= 1.2);
        let u0 = bump(&g);
        let t1 = solve_forward(&u0, &BoundaryData::Homogeneous, &c1, &g).unwrap();
        let t2 = solve_forward(&u0, &BoundaryData::Homogeneous, &c2, &g).unwrap();
        let v = t1.difference(&t2).unwrap().time_derivative().unwrap();
        let ext = v.conjugate_extend(Parity::Derivative, 1e-2).unwrap();
        // A state-like object fails the derivative-parity check.
        assert!(matches!(
            t1.conjugate_extend(Parity::Derivative, 1e-2),
            Err(Error::ParityViolation { .. })
        ));
        assert_eq!(ext.snapshots.len(), 2 * g.steps + 1);
        let gs = crate::grid::SubBoundary::new(&g.cross_section, vec![g.n1() - 1]).unwrap();
        let tr = ext.neumann_trace(&gs).unwrap();
        assert!(tr.plus.is_extended());
    }
}
