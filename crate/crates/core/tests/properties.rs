use proptest::prelude::*;

use accelmom::config::Settings;
use accelmom::equivalence::{
    compare_trajectories, map_schedule_free, problem_oracle, reconstruct_sf_average, run_optimizer,
    test_quadratic,
};
use accelmom::harness::{parse_csv, read_manifest, run, sweep, SweepSpec};
use accelmom::optimizers::{Algorithm, OptimizerConfig};
use accelmom::schedules::schedule_free_c_sequence;

fn settings(lines: &[&str]) -> Settings {
    let mut s = Settings::new();
    for l in lines {
        s.apply_override(l).unwrap();
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn schedule_free_mapping_holds_for_any_weighting(
        beta in 0.0..0.99f64,
        gamma in 0.05..1.0f64,
        r in 0.0..3.0f64,
        seed in 0u64..1000,
    ) {
        let steps = 300;
        let problem = test_quadratic(6, seed, 0.2).unwrap();
        let w0 = vec![0.0; 6];
        let cfg = OptimizerConfig { r, ..OptimizerConfig::new(Algorithm::ScheduleFreeSgd).with_lr(gamma).with_beta1(beta) };
        let (y, x) = run_optimizer(cfg, &w0, steps, problem_oracle(&problem, seed)).unwrap();
        let c = schedule_free_c_sequence(r, steps + 1);
        let mapped = map_schedule_free(beta, gamma, &c).unwrap().simulate(&w0, problem_oracle(&problem, seed)).unwrap();
        prop_assert!(compare_trajectories(&y, &mapped, 1e-9).unwrap().within(1e-9));
        let x_rec = reconstruct_sf_average(&mapped, beta, &c).unwrap();
        prop_assert!(compare_trajectories(&x, &x_rec, 1e-9).unwrap().within(1e-9));
    }

    #[test]
    fn accel_sgd_without_alpha_is_heavy_ball(beta in 0.0..0.99f64, lr in 0.01..0.5f64, seed in 0u64..1000) {
        let problem = test_quadratic(5, seed, 0.1).unwrap();
        let w0 = vec![0.5; 5];
        let accel = OptimizerConfig::new(Algorithm::AccelSgd).with_lr(lr).with_beta1(beta).with_alpha(0.0);
        let heavy = OptimizerConfig::new(Algorithm::SgdMomentum).with_lr(lr).with_beta1(beta);
        let (a, _) = run_optimizer(accel, &w0, 200, problem_oracle(&problem, seed)).unwrap();
        let (b, _) = run_optimizer(heavy, &w0, 200, problem_oracle(&problem, seed)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn run_csv_round_trips(seed in 0u64..1000, lr in 0.01..0.3f64) {
        let s = settings(&["problem.dim=6", "problem.samples=40", "run.steps=120", &format!("run.seed={seed}"), &format!("optimizer.lr={lr}")]);
        let rec = run(&s.run_spec().unwrap()).unwrap();
        let (rows, abort) = parse_csv(&rec.to_csv()).unwrap();
        prop_assert_eq!(rows, rec.rows);
        prop_assert!(abort.is_none());
    }
}

#[test]
fn spec_hash_names_the_run_files() {
    let dir = tempfile::tempdir().unwrap();
    let s = settings(&["problem.dim=4", "run.steps=50"]);
    let spec = s.run_spec().unwrap();
    let rec = run(&spec).unwrap();
    let path = rec.write(dir.path()).unwrap();
    assert_eq!(
        path.file_name().unwrap().to_str().unwrap(),
        format!("{}.csv", spec.hash())
    );
    assert!(dir
        .path()
        .join(format!("{}.spec.json", spec.hash()))
        .is_file());
}

#[test]
fn divergent_run_is_recorded_not_raised() {
    let s = settings(&[
        "problem.kind=\"quadratic\"",
        "problem.noise=\"none\"",
        "problem.dim=3",
        "optimizer.lr=10",
        "run.steps=500",
    ]);
    let rec = run(&s.run_spec().unwrap()).unwrap();
    assert!(rec.aborted());
    let (_, note) = parse_csv(&rec.to_csv()).unwrap();
    assert!(note.unwrap().starts_with("aborted at step"));
}

#[test]
fn sweep_manifest_round_trips_and_is_deterministic() {
    let s = settings(&[
        "problem.dim=5",
        "problem.samples=50",
        "run.steps=200",
        "sweep.grid.optimizer.lr=[0.01, 0.1]",
        "sweep.grid.optimizer.beta1=[0.0, 0.9]",
        "sweep.repeats=2",
    ]);
    let spec = SweepSpec::from_settings(&s).unwrap();
    assert_eq!(spec.cell_count(), 4);
    let a = sweep(&spec).unwrap();
    let b = sweep(&spec).unwrap();
    assert_eq!(a.manifest(), b.manifest());

    let dir = tempfile::tempdir().unwrap();
    a.write(dir.path()).unwrap();
    let (cells, best) = read_manifest(&dir.path().join("manifest.txt")).unwrap();
    assert_eq!(cells.len(), 4);
    assert_eq!(best, a.best);
    let best = a.best_cell().unwrap();
    assert!(a.cells.iter().all(|c| c.aborted || c.mean >= best.mean));
}
