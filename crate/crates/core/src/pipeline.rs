//! Subcommand pipelines: run one module chain from a config, write its
//! outputs and a manifest into the output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::carleman::{check_pseudoconvexity, check_weights, quadratic_alpha, AssumptionReport, WeightSanity};
use crate::coefficients::{make_perturbation, CoefficientSet};
use crate::error::{Error, Result};
use crate::grid::WaveguideGrid;
use crate::inversion::{
    default_x_far, exact_initial_v, reconstruct_least_squares, reconstruct_pointwise, simulated_initial_v, ComponentErrors,
    ReconstructionMasks, ReconstructionResult,
};
use crate::io::config::{ExperimentConfig, InitialState};
use crate::io::formats::{write_neumann_csv, FieldFile, TrajectoryWriter};
use crate::io::manifest::RunManifest;
use crate::probes::{compatibility_residual, ProbeMode};
use crate::solver::mms::{mms_ladder, LadderReport, MmsStudy};
use crate::solver::trace::NeumannTrace;
use crate::solver::{propagate, BoundaryData, SolveStats, TwoStateField};
use crate::stability::{
    holder_sum, inequality_b2_diagnostic, run_stability_experiment_with, summarize, B2Row, GroupFit, StabilityReport,
    StabilityRow,
};

pub const SUBCOMMANDS: [&str; 6] = ["carleman-check", "forward", "probes", "invert", "stability", "mms"];

/// Output directory plus the manifest being built for it.
pub struct Outputs {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Outputs {
    fn create(dir: &Path, manifest: RunManifest) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Checksums a file that was written directly into the directory.
    pub fn register(&mut self, name: &str) -> Result<()> {
        self.manifest.add_file(&self.dir, name)
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.path(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        self.register(name)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let body = serde_json::to_string_pretty(value).map_err(|e| Error::Contract(format!("serializing {name}: {e}")))?;
        self.text(name, &(body + "\n"))
    }
}

/// Runs `name` and always writes the manifest, marking failures in it. Files
/// written before a failure stay in place and are listed.
pub fn run_subcommand(name: &str, config: &ExperimentConfig, out_dir: &Path, threads: usize) -> (RunManifest, Result<()>) {
    let echo = config.echo();
    let manifest = RunManifest::start(name, &echo, threads);
    let mut out = match Outputs::create(out_dir, manifest.clone()) {
        Ok(o) => o,
        Err(e) => {
            let mut m = manifest;
            m.fail(&e);
            return (m, Err(e));
        }
    };
    let result = out.text("config.toml", &echo).and_then(|_| dispatch(name, config, &mut out));
    match &result {
        Ok(()) => out.manifest.succeed(),
        Err(e) => out.manifest.fail(e),
    }
    let written = out.manifest.write(&out.dir);
    let result = result.and(written);
    (out.manifest, result)
}

fn dispatch(name: &str, config: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    match name {
        "carleman-check" => carleman_check(config, out),
        "forward" => forward(config, out),
        "probes" => probes(config, out),
        "invert" => invert(config, out),
        "stability" => stability(config, out),
        "mms" => mms(config, out),
        other => Err(Error::config(
            "subcommand",
            format!("unknown subcommand `{other}`; expected one of {}", SUBCOMMANDS.join(", ")),
        )),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CarlemanOutput {
    pub x0: f64,
    pub r: f64,
    pub lambda: f64,
    pub k: f64,
    pub gamma_star: Vec<usize>,
    pub assumptions: AssumptionReport,
    pub c_i: f64,
    pub c_iii: f64,
    /// 2·dist(x′₀, ω̄) for the quadratic α.
    pub c_i_expected: f64,
    pub weights: WeightSanity,
    pub passed: bool,
}

pub fn carleman_report(config: &ExperimentConfig) -> Result<CarlemanOutput> {
    let grid = config.grid()?;
    let cs = &grid.cross_section;
    let alpha = quadratic_alpha(cs, config.carleman.x0)?;
    let gamma = config.observation_boundary(&grid)?;
    let report = check_pseudoconvexity(cs, &alpha, &gamma, config.carleman.lambda)?;
    let weights = config.weights(&grid)?;
    let times: Vec<f64> = (1 - grid.steps as isize..grid.steps as isize).map(|m| m as f64 * grid.dt()).collect();
    let sanity = check_weights(&weights, &times);
    let x0 = config.carleman.x0;
    let dist = if x0 < 0.0 { -x0 } else { (x0 - cs.extent).max(0.0) };
    Ok(CarlemanOutput {
        x0,
        r: config.carleman.r,
        lambda: config.carleman.lambda,
        k: weights.k,
        gamma_star: gamma.nodes().to_vec(),
        c_i: report.gradient.lower_bound,
        c_iii: report.convexity.lower_bound,
        c_i_expected: 2.0 * dist,
        passed: report.passed() && sanity.passed(),
        assumptions: report,
        weights: sanity,
    })
}

fn carleman_check(config: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let report = carleman_report(config)?;
    out.json("carleman.json", &report)?;
    if !report.passed {
        return Err(Error::Contract("pseudoconvexity or weight checks failed; see carleman.json".into()));
    }
    Ok(())
}

/// Coefficients for `[pair]`: (perturbed c₁, background c₂).
pub fn pair_coefficients(config: &ExperimentConfig, grid: &WaveguideGrid) -> Result<(CoefficientSet, CoefficientSet)> {
    let params = config.class_params(grid)?;
    let c1 = make_perturbation(&params, grid, config.harness.support, config.pair.family, config.pair.amplitude, config.pair.seed)?;
    Ok((c1, params.background))
}

#[derive(Debug, Clone, Serialize)]
pub struct ForwardOutput {
    pub initial: InitialState,
    pub perturbed: bool,
    pub steps: usize,
    pub dt: f64,
    pub initial_norm: f64,
    pub final_norm: f64,
    /// max_m |‖u^m‖ − ‖u⁰‖| / ‖u⁰‖ (0 for zero data).
    pub max_relative_drift: f64,
    pub snapshots_written: u64,
    pub stats: SolveStats,
}

fn forward(config: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let grid = config.grid()?;
    let (c1, c2) = pair_coefficients(config, &grid)?;
    let c = if config.forward.perturbed { c1 } else { c2 };
    let gamma = config.observation_boundary(&grid)?;
    let (u0, boundary) = match config.forward.initial {
        InitialState::Zero => (TwoStateField::zeros(&grid), BoundaryData::Homogeneous),
        probe => {
            let set = config.probes(&grid)?;
            let k = match probe {
                InitialState::Probe1 => 0,
                InitialState::Probe2 => 1,
                _ => 2,
            };
            (set.probes[k].u0.clone(), set.probes[k].boundary_data(set.mode))
        }
    };
    let stride = config.forward.snapshot_stride;
    let mut writer = if config.forward.write_trajectory {
        Some(TrajectoryWriter::create(&out.path("trajectory.bin"), &grid, grid.dt())?)
    } else {
        None
    };
    let mut trace = NeumannTrace::new(&gamma);
    let n0 = u0.l2_norm_sq(&grid).sqrt();
    let (mut drift, mut last) = (0.0_f64, n0);
    let stats = propagate(&u0, &boundary, &c, &grid, config.solver.options(), |m, t, s| {
        trace.record(&grid, t, &s.u_plus, &s.u_minus);
        let n = s.l2_norm_sq(&grid).sqrt();
        if n0 > 0.0 {
            drift = drift.max((n - n0).abs() / n0);
        }
        last = n;
        if let Some(w) = writer.as_mut() {
            if m % stride == 0 || m == grid.steps {
                w.push(t, s)?;
            }
        }
        Ok(())
    });
    let written = match writer {
        Some(w) => {
            let n = w.finish()?;
            out.register("trajectory.bin")?;
            n
        }
        None => 0,
    };
    let stats = stats?;
    write_neumann_csv(&out.path("neumann.csv"), &trace, &grid)?;
    out.register("neumann.csv")?;
    out.json(
        "forward.json",
        &ForwardOutput {
            initial: config.forward.initial,
            perturbed: config.forward.perturbed,
            steps: grid.steps,
            dt: grid.dt(),
            initial_norm: n0,
            final_norm: last,
            max_relative_drift: drift,
            snapshots_written: written,
            stats,
        },
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeSummary {
    pub label: String,
    pub norm: f64,
    /// Compatibility residuals for ℓ = 0, 1, 2 (`None` where the stencil reach is exceeded).
    pub compatibility: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbesOutput {
    pub epsilon: f64,
    pub mode: ProbeMode,
    pub tail_fraction: f64,
    pub plateau_nodes: usize,
    pub probes: Vec<ProbeSummary>,
}

fn probes(config: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let grid = config.grid()?;
    let params = config.class_params(&grid)?;
    let set = config.probes(&grid)?;
    let mut summaries = vec![];
    for (k, probe) in set.probes.iter().enumerate() {
        let name = format!("probe_{}.bin", k + 1);
        FieldFile::from_state(&probe.u0, &grid)?.write(&out.path(&name))?;
        out.register(&name)?;
        let compatibility = (0..=2)
            .map(|order| match compatibility_residual(probe, set.mode, &params.background, &grid, order) {
                Ok(r) => Ok(Some(r)),
                Err(Error::StencilReach { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<Vec<_>>>()?;
        summaries.push(ProbeSummary {
            label: probe.label.clone(),
            norm: probe.u0.l2_norm_sq(&grid).sqrt(),
            compatibility,
        });
    }
    out.json(
        "probes.json",
        &ProbesOutput {
            epsilon: set.epsilon,
            mode: set.mode,
            tail_fraction: set.tail_fraction(&grid),
            plateau_nodes: set.plateau_mask(&grid).iter().filter(|&&p| p).count(),
            probes: summaries,
        },
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct InversionSummary {
    pub source: String,
    pub method: String,
    pub errors: ComponentErrors,
    pub worst: f64,
    pub imaginary_residue: f64,
    pub flagged_nodes: usize,
    pub max_condition: Option<f64>,
}

impl InversionSummary {
    fn new(source: &str, method: &str, r: &ReconstructionResult) -> Self {
        let errors = r.errors.clone().unwrap_or_default();
        let max_condition = r
            .condition
            .as_ref()
            .and_then(|c| c.iter().copied().filter(|v| v.is_finite()).reduce(f64::max));
        InversionSummary {
            source: source.into(),
            method: method.into(),
            worst: errors.worst(),
            errors,
            imaginary_residue: r.imaginary_residue,
            flagged_nodes: r.flagged.len(),
            max_condition,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InvertOutput {
    pub y_star: f64,
    pub x_far: f64,
    pub plateau_nodes: usize,
    pub annulus_nodes: usize,
    pub results: Vec<InversionSummary>,
}

fn invert(config: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let grid = config.grid()?;
    let set = config.probes(&grid)?;
    let (c1, c2) = pair_coefficients(config, &grid)?;
    let delta = c1.difference(&c2);
    let x_far = default_x_far(set.epsilon, config.probe.x_far_fraction)?;
    let masks = ReconstructionMasks::new(&set, &grid, config.class.y_star, x_far)?;
    FieldFile::from_coefficients(&delta, &grid)?.write(&out.path("truth.bin"))?;
    out.register("truth.bin")?;

    let oracle = exact_initial_v(&delta, &set, &grid)?;
    let simulated = simulated_initial_v(&c1, &c2, &set, &grid, config.solver.options())?;
    let mut results = vec![];
    let mut estimate = None;
    for (source, data) in [("oracle", &oracle), ("simulated", &simulated)] {
        let pw = reconstruct_pointwise(data, &set, &grid, &masks)?.with_truth(&delta, &grid);
        let ls = reconstruct_least_squares(data, &set, &grid, &masks)?.with_truth(&delta, &grid);
        results.push(InversionSummary::new(source, "pointwise", &pw));
        results.push(InversionSummary::new(source, "least-squares", &ls));
        if source == "simulated" {
            estimate = Some(pw.estimate);
        }
    }
    if let Some(est) = estimate {
        FieldFile::from_coefficients(&est, &grid)?.write(&out.path("estimate.bin"))?;
        out.register("estimate.bin")?;
    }
    out.json(
        "invert.json",
        &InvertOutput {
            y_star: masks.y_star,
            x_far,
            plateau_nodes: masks.plateau.iter().filter(|&&m| m).count(),
            annulus_nodes: masks.annulus.iter().filter(|&&m| m).count(),
            results,
        },
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct ThetaSummary {
    pub theta: f64,
    pub c_hat: f64,
    pub holder_holds: bool,
    pub fits: Vec<GroupFit>,
}

#[derive(Debug, Clone, Serialize)]
pub struct B2Table {
    pub family: String,
    pub seed: u64,
    pub amplitude: f64,
    pub rows: Vec<B2Row>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityOutput {
    pub report: StabilityReport,
    pub theta_sweep: Vec<ThetaSummary>,
    pub b2: Vec<B2Table>,
}

const ROW_HEADER: &str = "family,seed,amplitude,lhs,rhs_raw,trace_norm_total";

fn row_csv(rows: &[StabilityRow], y_list: &[f64]) -> String {
    let mut s = String::from(ROW_HEADER);
    for y in y_list {
        let _ = write!(s, ",theta_inner_y{y},theta_outer_y{y},budget_y{y}");
    }
    s.push('\n');
    for r in rows {
        let _ = write!(s, "{},{},{},{},{},{}", r.family.name(), r.seed, r.amplitude, r.lhs, r.rhs_raw, r.trace_norm_total);
        for i in 0..y_list.len() {
            let _ = write!(s, ",{},{},{}", r.theta_inner[i], r.theta_outer[i], r.budget[i]);
        }
        s.push('\n');
    }
    s
}

fn mu_csv(rows: &[StabilityRow], s_grid: &[f64]) -> String {
    let mut s = String::from("family,seed,amplitude,s,probe,log_mu_plus,log_mu_minus,log_xi\n");
    for r in rows {
        for (si, &sv) in s_grid.iter().enumerate() {
            for (k, m) in r.log_mu[si].iter().enumerate() {
                let _ = writeln!(s, "{},{},{},{sv},{},{},{},{}", r.family.name(), r.seed, r.amplitude, k + 1, m[0], m[1], r.log_xi[si]);
            }
        }
    }
    s
}

fn fits_csv(sweep: &[ThetaSummary]) -> String {
    let mut s = String::from("theta,family,seed,lhs_slope,trace_slope,rhs_slope,holder_slope,max_ratio,max_ratio_at_largest\n");
    for t in sweep {
        for f in &t.fits {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                t.theta,
                f.family.name(),
                f.seed,
                f.lhs_slope,
                f.trace_slope,
                f.rhs_slope,
                f.holder_slope,
                f.max_ratio,
                f.max_ratio_at_largest
            );
        }
    }
    s
}

fn stability(config: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let setup = config.stability_setup()?;
    let partial = "stability_rows.partial.csv";
    let mut done: Vec<StabilityRow> = vec![];
    let mut persist_err = None;
    let result = run_stability_experiment_with(&setup, |row| {
        done.push(row.clone());
        if persist_err.is_none() {
            persist_err = out.text(partial, &row_csv(&done, &setup.y_list)).err();
        }
    });
    if let Some(e) = persist_err {
        return Err(e);
    }
    let report = result?;
    // The final tables supersede the partial file.
    let _ = std::fs::remove_file(out.path(partial));
    out.manifest.files.retain(|f| f.path != partial);

    let mut sweep = vec![];
    for &theta in &config.harness.thetas {
        let mut s = setup.clone();
        s.theta = theta;
        let rows: Vec<StabilityRow> = report
            .rows
            .iter()
            .map(|r| StabilityRow {
                rhs_raw: holder_sum(&r.trace_norms, theta),
                ..r.clone()
            })
            .collect();
        let rep = summarize(&s, rows);
        sweep.push(ThetaSummary {
            theta,
            c_hat: rep.c_hat,
            holder_holds: rep.holder_holds,
            fits: rep.fits,
        });
    }

    // The weighted t = 0 diagnostic for the largest amplitude of each group.
    let mut b2 = vec![];
    let largest = setup.amplitudes.iter().copied().fold(0.0, f64::max);
    for r in report.rows.iter().filter(|r| r.amplitude == largest && largest > 0.0) {
        let c1 = make_perturbation(&setup.params, &setup.grid, setup.support, r.family, r.amplitude, r.seed)?;
        let delta = c1.difference(&setup.params.background);
        let s_pos: Vec<usize> = (0..setup.s_grid.len()).filter(|&i| setup.s_grid[i] > 0.0).collect();
        let s_grid: Vec<f64> = s_pos.iter().map(|&i| setup.s_grid[i]).collect();
        let log_mu: Vec<_> = s_pos.iter().map(|&i| r.log_mu[i].clone()).collect();
        b2.push(B2Table {
            family: r.family.name().into(),
            seed: r.seed,
            amplitude: r.amplitude,
            rows: inequality_b2_diagnostic(&delta, &setup.probes, &setup.weights, &s_grid, &log_mu, &setup.grid)?,
        });
    }

    out.text("stability_rows.csv", &row_csv(&report.rows, &setup.y_list))?;
    out.text("stability_mu.csv", &mu_csv(&report.rows, &setup.s_grid))?;
    out.text("stability_fits.csv", &fits_csv(&sweep))?;
    out.json(
        "stability.json",
        &StabilityOutput {
            report,
            theta_sweep: sweep,
            b2,
        },
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct MmsOutput {
    pub time: LadderReport,
    pub space: LadderReport,
}

pub fn mms_ladders(config: &ExperimentConfig) -> Result<MmsOutput> {
    let m = &config.mms;
    let opts = config.solver.options();
    let time = mms_ladder(&m.candidate(false), MmsStudy::Time, &m.base_grid(MmsStudy::Time)?, m.levels, opts)?;
    let space = mms_ladder(&m.candidate(true), MmsStudy::Space, &m.base_grid(MmsStudy::Space)?, m.levels, opts)?;
    Ok(MmsOutput { time, space })
}

fn mms(config: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let report = mms_ladders(config)?;
    let mut csv = String::from("study,level,h1,hn,dt,l2_error,relative_l2_error,max_error,order\n");
    for (name, ladder) in [("time", &report.time), ("space", &report.space)] {
        for (l, r) in ladder.levels.iter().enumerate() {
            let order = if l == 0 { String::new() } else { ladder.orders[l - 1].to_string() };
            let _ = writeln!(
                csv,
                "{name},{l},{},{},{},{},{},{},{order}",
                r.h1, r.hn, r.dt, r.l2_error, r.relative_l2_error, r.max_error
            );
        }
    }
    out.text("mms.csv", &csv)?;
    out.json("mms.json", &report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::config::GridConfig;

    fn tiny() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.grid = GridConfig {
            nodes: 33,
            axis_nodes: 65,
            steps: 16,
            ..GridConfig::default()
        };
        c.probe.cutoff.lateral_collar = 0.07;
        c.probe.cutoff.lateral_transition = 0.13;
        c.harness.support.x1_lo = 0.25;
        c.harness.support.x1_hi = 0.75;
        c
    }

    #[test]
    fn carleman_default_passes() {
        let r = carleman_report(&tiny()).unwrap();
        assert!(r.passed);
        assert!((r.c_i - 2.0).abs() < 0.02 && (r.c_iii - 2.0).abs() < 0.02);
        assert_eq!(r.gamma_star, vec![32]);
    }

    #[test]
    fn unknown_subcommand_is_a_config_error_with_marker() {
        let dir = tempfile::tempdir().unwrap();
        let (m, res) = run_subcommand("bogus", &tiny(), dir.path(), 1);
        assert_eq!(res.unwrap_err().class().exit_code(), 2);
        assert_eq!(m.status, "failed");
        let back = RunManifest::read(dir.path()).unwrap();
        assert_eq!(back.failure.unwrap().exit_code, 2);
        assert_eq!(back.files.len(), 1);
    }

    #[test]
    fn zero_forward_run_lists_checksummed_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny();
        cfg.forward.initial = InitialState::Zero;
        let (m, res) = run_subcommand("forward", &cfg, dir.path(), 1);
        res.unwrap();
        let names: Vec<&str> = m.files.iter().map(|f| f.path.as_str()).collect();
        assert_eq!(names, ["config.toml", "trajectory.bin", "neumann.csv", "forward.json"]);
        for f in &m.files {
            let (sum, bytes) = crate::io::manifest::sha256_file(&dir.path().join(&f.path)).unwrap();
            assert_eq!((sum.as_str(), bytes), (f.sha256.as_str(), f.bytes));
        }
        let traj = crate::io::formats::read_trajectory(&dir.path().join("trajectory.bin")).unwrap();
        assert_eq!(traj.snapshots.len(), 2);
        assert!(traj.snapshots.iter().all(|s| s.max_abs() == 0.0));
    }
}
