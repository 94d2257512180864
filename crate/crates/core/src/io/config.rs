//! TOML experiment configuration. Every block has defaults; loading fills them
//! in and re-validates the cross-field constraints of the owning modules.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::carleman::{quadratic_alpha, WeightBundle};
use crate::coefficients::{AdmissibleClassParams, CoefficientSet, PerturbationFamily, PerturbationSupport};
use crate::error::{Error, Result};
use crate::grid::{select_observation_boundary, CrossSection, SubBoundary, WaveguideGrid};
use crate::probes::{make_probe_set, CutoffSpec, ProbeMode, ProbeSet};
use crate::solver::mms::{MmsStudy, SineModeCandidate};
use crate::solver::SolverOptions;
use crate::stability::{check_theta, StabilitySetup};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub extent: f64,
    pub nodes: usize,
    pub half_length: f64,
    pub axis_nodes: usize,
    pub horizon: f64,
    pub steps: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            extent: 1.0,
            nodes: 129,
            half_length: 8.0,
            axis_nodes: 257,
            horizon: 1.0,
            steps: 512,
        }
    }
}

impl GridConfig {
    /// The 65 × 129 grid used for quick sweeps.
    pub fn fast() -> Self {
        GridConfig {
            nodes: 65,
            axis_nodes: 129,
            ..GridConfig::default()
        }
    }

    pub fn build(&self) -> Result<WaveguideGrid> {
        WaveguideGrid::new(
            CrossSection::interval(self.extent, self.nodes)?,
            self.half_length,
            self.axis_nodes,
            self.horizon,
            self.steps,
        )
    }
}

/// Background (A₀, p₀, q₀±): A₀ = 0, p₀ = p_peak e^{−(x_n/p_width)²}, constant q₀±.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackgroundConfig {
    pub p_peak: f64,
    pub p_width: f64,
    pub q_plus: f64,
    pub q_minus: f64,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        BackgroundConfig {
            p_peak: 0.25,
            p_width: 2.0,
            q_plus: 0.5,
            q_minus: -0.5,
        }
    }
}

impl BackgroundConfig {
    pub fn build(&self, grid: &WaveguideGrid) -> CoefficientSet {
        let mut c = CoefficientSet::zeros(grid);
        c.p = grid.sample(|_, xn| self.p_peak * (-(xn / self.p_width).powi(2)).exp());
        c.q_plus.iter_mut().for_each(|v| *v = self.q_plus);
        c.q_minus.iter_mut().for_each(|v| *v = self.q_minus);
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassConfig {
    pub sup_budget: f64,
    pub kappa: f64,
    pub rho: f64,
    pub envelope_a: f64,
    pub envelope_p: f64,
    pub envelope_q: f64,
    pub y_star: f64,
    pub boundary_order: usize,
    pub background: BackgroundConfig,
}

impl Default for ClassConfig {
    fn default() -> Self {
        ClassConfig {
            sup_budget: 1.0,
            kappa: 1.0,
            rho: 1.0,
            envelope_a: 0.1,
            envelope_p: 0.1,
            envelope_q: 0.1,
            y_star: 1.0,
            boundary_order: 2,
            background: BackgroundConfig::default(),
        }
    }
}

impl ClassConfig {
    pub fn build(&self, grid: &WaveguideGrid) -> Result<AdmissibleClassParams> {
        let params = AdmissibleClassParams {
            sup_budget: self.sup_budget,
            kappa: self.kappa,
            rho: self.rho,
            envelope_a: self.envelope_a,
            envelope_p: self.envelope_p,
            envelope_q: self.envelope_q,
            y_star: self.y_star,
            boundary_order: self.boundary_order,
            section_measure: grid.cross_section.measure(),
            background: self.background.build(grid),
        };
        params.validate()?;
        let bg = &params.background;
        let sup = bg.fields().flat_map(|f| f.iter()).fold(0.0_f64, |m, v| m.max(v.abs()));
        if sup > self.sup_budget {
            return Err(Error::config("class.background", format!("sup of the background {sup} exceeds M = {}", self.sup_budget)));
        }
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub epsilon: f64,
    pub mode: ProbeMode,
    pub cutoff: CutoffSpec,
    /// X_far is where |w′| drops below this fraction of its maximum.
    pub x_far_fraction: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            epsilon: 0.5,
            mode: ProbeMode::HomogeneousCutoff,
            cutoff: CutoffSpec::default(),
            x_far_fraction: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarlemanConfig {
    pub x0: f64,
    pub r: f64,
    pub lambda: f64,
    pub s_grid: Vec<f64>,
}

impl Default for CarlemanConfig {
    fn default() -> Self {
        CarlemanConfig {
            x0: -1.0,
            r: 1.5,
            lambda: 1.0,
            s_grid: (0..=8).map(|k| f64::from(1u32 << k)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    /// First entry is the primary θ; the rest are reported as a sweep.
    pub thetas: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub seeds: Vec<u64>,
    pub families: Vec<PerturbationFamily>,
    pub y_list: Vec<f64>,
    pub support: PerturbationSupport,
    pub parity_tolerance: f64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            thetas: vec![0.49, 0.25, 0.1],
            amplitudes: vec![1e-3, 1e-2, 1e-1],
            seeds: vec![1, 2, 3],
            families: vec![PerturbationFamily::CouplingOnly, PerturbationFamily::Mixed],
            y_list: vec![1.0, 2.0, 4.0],
            support: PerturbationSupport {
                x1_lo: 0.15,
                x1_hi: 0.85,
                axial_half: 4.5,
            },
            parity_tolerance: 1e-2,
        }
    }
}

/// Pair used by `forward` and `invert`: background plus one perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairConfig {
    pub family: PerturbationFamily,
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for PairConfig {
    fn default() -> Self {
        PairConfig {
            family: PerturbationFamily::Mixed,
            amplitude: 0.1,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialState {
    Zero,
    Probe1,
    Probe2,
    Probe3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForwardConfig {
    pub initial: InitialState,
    /// Solve under the perturbed coefficients of `[pair]` instead of the background.
    pub perturbed: bool,
    /// Every `snapshot_stride`-th snapshot goes into the trajectory dump.
    pub snapshot_stride: usize,
    pub write_trajectory: bool,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        ForwardConfig {
            initial: InitialState::Probe1,
            perturbed: false,
            snapshot_stride: 16,
            write_trajectory: true,
        }
    }
}

/// Manufactured-solution ladders. The time ladder halves Δt from
/// `time_steps`; the space ladder refines n → 2n − 1 from the space base grid
/// with a stationary candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MmsConfig {
    pub levels: usize,
    pub extent: f64,
    pub half_length: f64,
    pub omega: f64,
    pub a: [f64; 2],
    pub p: f64,
    pub q_plus: f64,
    pub q_minus: f64,
    pub time_nodes: usize,
    pub time_axis_nodes: usize,
    pub time_horizon: f64,
    pub time_steps: usize,
    pub space_nodes: usize,
    pub space_axis_nodes: usize,
    pub space_horizon: f64,
    pub space_steps: usize,
}

impl Default for MmsConfig {
    fn default() -> Self {
        MmsConfig {
            levels: 3,
            extent: 1.0,
            half_length: 1.0,
            omega: 3.0,
            a: [0.3, -0.2],
            p: 0.4,
            q_plus: 0.5,
            q_minus: -0.5,
            time_nodes: 17,
            time_axis_nodes: 33,
            time_horizon: 1.0,
            time_steps: 10,
            space_nodes: 9,
            space_axis_nodes: 9,
            space_horizon: 0.2,
            space_steps: 10,
        }
    }
}

impl MmsConfig {
    pub fn candidate(&self, stationary: bool) -> SineModeCandidate {
        SineModeCandidate {
            extent: self.extent,
            half_length: self.half_length,
            omega: if stationary { 0.0 } else { self.omega },
            a: self.a,
            p: self.p,
            q_plus: self.q_plus,
            q_minus: self.q_minus,
        }
    }

    pub fn base_grid(&self, study: MmsStudy) -> Result<WaveguideGrid> {
        let (n1, nn, t, steps) = match study {
            MmsStudy::Time => (self.time_nodes, self.time_axis_nodes, self.time_horizon, self.time_steps),
            MmsStudy::Space => (self.space_nodes, self.space_axis_nodes, self.space_horizon, self.space_steps),
        };
        WaveguideGrid::new(CrossSection::interval(self.extent, n1)?, self.half_length, nn, t, steps)
            .map_err(|e| match e {
                Error::Config { field, message } => Error::config(field.replace("grid.", "mms."), message),
                other => other,
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub restart: usize,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolverOptions::default();
        SolverConfig {
            tolerance: o.tolerance,
            restart: o.restart,
            max_iterations: o.max_iterations,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            tolerance: self.tolerance,
            restart: self.restart,
            max_iterations: self.max_iterations,
            ..SolverOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub grid: GridConfig,
    pub class: ClassConfig,
    pub probe: ProbeConfig,
    pub carleman: CarlemanConfig,
    pub harness: HarnessConfig,
    pub pair: PairConfig,
    pub forward: ForwardConfig,
    pub mms: MmsConfig,
    pub solver: SolverConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            output_dir: PathBuf::from("out"),
            grid: GridConfig::default(),
            class: ClassConfig::default(),
            probe: ProbeConfig::default(),
            carleman: CarlemanConfig::default(),
            harness: HarnessConfig::default(),
            pair: PairConfig::default(),
            forward: ForwardConfig::default(),
            mms: MmsConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn grid(&self) -> Result<WaveguideGrid> {
        self.grid.build()
    }

    pub fn class_params(&self, grid: &WaveguideGrid) -> Result<AdmissibleClassParams> {
        self.class.build(grid)
    }

    pub fn probes(&self, grid: &WaveguideGrid) -> Result<ProbeSet> {
        make_probe_set(grid, self.probe.epsilon, self.probe.cutoff, self.probe.mode)
    }

    pub fn observation_boundary(&self, grid: &WaveguideGrid) -> Result<SubBoundary> {
        select_observation_boundary(&grid.cross_section, self.carleman.x0)
    }

    pub fn weights(&self, grid: &WaveguideGrid) -> Result<WeightBundle> {
        let alpha = quadratic_alpha(&grid.cross_section, self.carleman.x0)?;
        WeightBundle::build(&grid.cross_section, alpha, self.carleman.r, grid.horizon, 0.0)
    }

    pub fn theta(&self) -> f64 {
        self.harness.thetas[0]
    }

    pub fn stability_setup(&self) -> Result<StabilitySetup> {
        let grid = self.grid()?;
        Ok(StabilitySetup {
            params: self.class_params(&grid)?,
            support: self.harness.support,
            probes: self.probes(&grid)?,
            gamma_star: self.observation_boundary(&grid)?,
            weights: self.weights(&grid)?,
            theta: self.theta(),
            amplitudes: self.harness.amplitudes.clone(),
            seeds: self.harness.seeds.clone(),
            families: self.harness.families.clone(),
            s_grid: self.carleman.s_grid.clone(),
            y_list: self.harness.y_list.clone(),
            options: self.solver.options(),
            parity_tolerance: self.harness.parity_tolerance,
            grid,
        })
    }

    /// `--seed` override: the pair uses `seed`, the harness `seed, seed + 1, …`
    /// with as many seeds as configured.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.pair.seed = seed;
        let n = self.harness.seeds.len().max(1) as u64;
        self.harness.seeds = (0..n).map(|k| seed + k).collect();
        self
    }

    /// Re-validates every block against its module's constraints.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        self.class_params(&grid)?;
        self.probes(&grid)?;
        if self.harness.thetas.is_empty() {
            return Err(Error::config("harness.thetas", "at least one θ is required"));
        }
        for &t in &self.harness.thetas {
            check_theta(t).map_err(|_| Error::config("harness.thetas", format!("θ = {t} is outside (0, 1/2)")))?;
        }
        if self.harness.amplitudes.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::config("harness.amplitudes", "amplitudes must be finite and non-negative"));
        }
        if self.harness.y_list.iter().any(|y| *y < self.class.y_star) {
            return Err(Error::config("harness.y_list", format!("every y must be at least y* = {}", self.class.y_star)));
        }
        let s = &self.harness.support;
        let (lo, hi) = self.probe.cutoff.plateau_x1(self.grid.extent);
        if !(s.x1_lo >= lo && s.x1_hi <= hi && s.x1_lo < s.x1_hi && s.axial_half <= self.probe.cutoff.axial_plateau) {
            return Err(Error::config("harness.support", "perturbation support must lie inside the probe plateau"));
        }
        if !(self.probe.x_far_fraction > 0.0 && self.probe.x_far_fraction < 1.0) {
            return Err(Error::config("probe.x_far_fraction", "must lie in (0, 1)"));
        }
        if self.carleman.s_grid.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::config("carleman.s_grid", "every s must be positive"));
        }
        if self.forward.snapshot_stride == 0 {
            return Err(Error::config("forward.snapshot_stride", "must be at least 1"));
        }
        if self.mms.levels < 2 {
            return Err(Error::config("mms.levels", "need at least two refinement levels"));
        }
        self.mms.base_grid(MmsStudy::Time)?;
        self.mms.base_grid(MmsStudy::Space)?;
        if self.solver.tolerance > crate::solver::RESIDUAL_CONTRACT {
            return Err(Error::config(
                "solver.tolerance",
                format!("must not exceed the per-step contract {}", crate::solver::RESIDUAL_CONTRACT),
            ));
        }
        self.weights(&grid)?;
        self.observation_boundary(&grid)?;
        Ok(())
    }

    /// Canonical TOML echo with every default filled in.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::config("<parse>", e.to_string().trim_end().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_echoes_every_block() {
        let cfg = parse_config("[grid]\nnodes = 65\naxis_nodes = 129\n").unwrap();
        assert_eq!(cfg.grid.nodes, 65);
        assert_eq!(cfg.harness.thetas[0], 0.49);
        let echo = cfg.echo();
        for block in ["[grid]", "[class]", "[probe.cutoff]", "[harness]", "[solver]", "[mms]"] {
            assert!(echo.contains(block), "{block} missing from\n{echo}");
        }
        assert_eq!(parse_config(&echo).unwrap(), cfg);
    }

    #[test]
    fn even_axis_nodes_name_the_field() {
        match parse_config("[grid]\naxis_nodes = 128\n") {
            Err(Error::Config { field, .. }) => assert_eq!(field, "grid.axis_nodes"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn theta_out_of_range() {
        match parse_config("[harness]\nthetas = [0.6]\n") {
            Err(Error::Config { field, message }) => {
                assert_eq!(field, "harness.thetas");
                assert!(message.contains("(0, 1/2)"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_position() {
        match parse_config("[grid\nnodes = 3") {
            Err(Error::Config { field, message }) => {
                assert_eq!(field, "<parse>");
                assert!(message.contains("line"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_config("[grid]\nbogus = 1\n"), Err(Error::Config { .. })));
    }
}
