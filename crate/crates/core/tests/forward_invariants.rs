use proptest::prelude::*;
use twostate_core::io::config::{ExperimentConfig, GridConfig};
use twostate_core::solver::propagate;
use twostate_core::{make_perturbation, validate_admissible, BoundaryData, PerturbationFamily, PerturbationSupport};

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.grid = GridConfig {
        nodes: 33,
        axis_nodes: 65,
        steps: 32,
        ..GridConfig::default()
    };
    cfg.probe.cutoff.lateral_collar = 0.07;
    cfg.probe.cutoff.lateral_transition = 0.13;
    cfg
}

fn support() -> PerturbationSupport {
    PerturbationSupport {
        x1_lo: 0.25,
        x1_hi: 0.75,
        axial_half: 4.5,
    }
}

fn family() -> impl Strategy<Value = PerturbationFamily> {
    prop_oneof![Just(PerturbationFamily::CouplingOnly), Just(PerturbationFamily::Mixed)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn perturbations_stay_admissible(seed in 0u64..10_000, amplitude in 1e-4f64..0.1, family in family()) {
        let cfg = small_config();
        let grid = cfg.grid().unwrap();
        let params = cfg.class_params(&grid).unwrap();
        let c = make_perturbation(&params, &grid, support(), family, amplitude, seed).unwrap();
        let report = validate_admissible(&c, &params, &grid, 1e-10).unwrap();
        prop_assert!(report.all_passed(), "{:?}", report);
    }

    #[test]
    fn homogeneous_evolution_conserves_the_norm(seed in 0u64..10_000, probe in 0usize..3) {
        let cfg = small_config();
        let grid = cfg.grid().unwrap();
        let params = cfg.class_params(&grid).unwrap();
        let c = make_perturbation(&params, &grid, support(), PerturbationFamily::Mixed, 0.1, seed).unwrap();
        let u0 = cfg.probes(&grid).unwrap().probes[probe].u0.clone();
        let n0 = u0.l2_norm_sq(&grid).sqrt();
        let mut drift = 0.0_f64;
        propagate(&u0, &BoundaryData::Homogeneous, &c, &grid, cfg.solver.options(), |_, _, s| {
            drift = drift.max((s.l2_norm_sq(&grid).sqrt() - n0).abs() / n0);
            Ok(())
        })
        .unwrap();
        prop_assert!(drift < 1e-9, "drift {drift:e}");
    }
}
