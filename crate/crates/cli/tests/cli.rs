use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn accelmom(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_accelmom"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("ACCELMOM_OUT")
        .output()
        .expect("spawn accelmom")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_lists_config_keys_and_presets() {
    let dir = tempfile::tempdir().unwrap();
    let o = accelmom(dir.path(), &["--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for key in [
        "problem.kind",
        "optimizer.beta3",
        "run.seed",
        "sweep.preset",
        "equiv.tolerance",
        "plot.mode",
    ] {
        assert!(text.contains(key), "help is missing {key}");
    }
    assert!(text.contains("sgd-momentum-desk"));
}

#[test]
fn ademamix_without_beta3_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let o = accelmom(
        dir.path(),
        &["run", "--set", "optimizer.algorithm=ademamix"],
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains("optimizer.beta3"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = accelmom(dir.path(), &["run", "--set", "optimizer.momentum=0.9"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("optimizer.momentum"));
}

#[test]
fn schedule_free_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = accelmom(
        dir.path(),
        &["equiv-check", "schedule-free", "--set", "equiv.horizon=300"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("PASS schedule-free"));
}

#[test]
fn singular_mass_mapping_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = accelmom(
        dir.path(),
        &[
            "equiv-check",
            "mass",
            "--set",
            "equiv.eta1=0.2",
            "--set",
            "equiv.gamma=0.5",
            "--set",
            "equiv.eta2=0.1",
        ],
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains("singular"), "{}", stderr(&o));
}

#[test]
fn mars_rewrite_with_zero_gamma_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = accelmom(
        dir.path(),
        &["equiv-check", "mars-rewrite", "--set", "equiv.gamma=0"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("PASS"));
}

#[test]
fn tight_tolerance_flag_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let o = accelmom(dir.path(), &["equiv-check", "agnes", "--tolerance", "-1"]);
    assert!(!o.status.success());
}

#[test]
fn runs_are_deterministic_and_plots_regenerate() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "run",
        "--seed",
        "7",
        "--set",
        "problem.dim=8",
        "--set",
        "run.steps=300",
    ];
    let oa = accelmom(a.path(), &args);
    let ob = accelmom(b.path(), &args);
    assert!(
        oa.status.success() && ob.status.success(),
        "{}",
        stderr(&oa)
    );

    let csv = |d: &Path| {
        let name = fs::read_dir(d)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .find(|n| n.ends_with(".csv") && n.len() == 20)
            .expect("run csv");
        (name.clone(), fs::read(d.join(name)).unwrap())
    };
    let (na, ca) = csv(a.path());
    let (nb, cb) = csv(b.path());
    assert_eq!(na, nb);
    assert_eq!(ca, cb);

    let p = accelmom(a.path(), &["plot", a.path().to_str().unwrap()]);
    assert!(p.status.success(), "{}", stderr(&p));
    let svg = fs::read(a.path().join("plot.svg")).unwrap();
    let data = a.path().join("plot.csv");

    // Re-rendering from the emitted data file gives the same picture.
    let re = tempfile::tempdir().unwrap();
    let p2 = accelmom(re.path(), &["plot", data.to_str().unwrap()]);
    assert!(p2.status.success(), "{}", stderr(&p2));
    assert_eq!(fs::read(re.path().join("plot.svg")).unwrap(), svg);
}

#[test]
fn sweep_writes_manifest_and_reports_best() {
    let dir = tempfile::tempdir().unwrap();
    let o = accelmom(
        dir.path(),
        &[
            "sweep",
            "--set",
            "problem.dim=5",
            "--set",
            "run.steps=100",
            "--set",
            "sweep.grid.optimizer.lr=0.01,0.05",
            "--set",
            "sweep.repeats=2",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("best cell"));
    assert!(dir.path().join("manifest.txt").is_file());
}
