//! Seeded runs, sweeps and the batch-size study.
//!
//! A run's gradient noise at step `t` comes from `NoiseKey::gradient(seed, t)`,
//! so a [`RunSpec`] fully determines its metric rows.

mod presets;
mod study;
mod sweep;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use presets::{preset, Preset, PRESETS};
pub use study::{batch_size_study, StudyCell, StudyGap, StudySpec, StudyTable};
pub use sweep::{read_manifest, select_best, sweep, CellSummary, SweepResult, SweepSpec};

use crate::error::{Error, Result};
use crate::optimizers::{Optimizer, OptimizerConfig};
use crate::problems::{Problem, ProblemSpec};
use crate::rng::NoiseKey;
use crate::vector::ParamVector;

pub const CSV_HEADER: &str = "step,train_loss,full_loss,update_norm,lr,momentum";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub problem: ProblemSpec,
    pub optimizer: OptimizerConfig,
    pub steps: u64,
    pub seed: u64,
    pub eval_every: u64,
    pub snapshot_every: Option<u64>,
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::config("run.steps", "must be > 0"));
        }
        if self.eval_every == 0 || self.eval_every > self.steps {
            return Err(Error::config(
                "run.eval_every",
                format!("must lie in 1..={} (got {})", self.steps, self.eval_every),
            ));
        }
        if let Some(s) = self.snapshot_every {
            if s == 0 || !self.eval_every.is_multiple_of(s) {
                return Err(Error::config(
                    "run.snapshot_every",
                    format!("must divide run.eval_every = {} (got {s})", self.eval_every),
                ));
            }
        }
        self.optimizer.validate()
    }

    /// First 16 hex digits of the SHA-256 of the JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("run spec serialises");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: u64,
    /// Loss at the evaluation point on the batch that produced the step's gradient.
    pub train_loss: f64,
    pub full_loss: f64,
    pub update_norm: f64,
    pub lr: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Abort {
    pub step: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub spec: RunSpec,
    pub spec_hash: String,
    pub rows: Vec<MetricRow>,
    pub final_params: ParamVector,
    pub snapshots: Vec<(u64, ParamVector)>,
    pub wall_time: f64,
    pub abort: Option<Abort>,
}

impl RunRecord {
    pub fn final_full_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.full_loss)
    }

    pub fn aborted(&self) -> bool {
        self.abort.is_some()
    }

    /// The metric CSV; identical for identical specs.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 2));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.step,
                num(r.train_loss),
                num(r.full_loss),
                num(r.update_norm),
                num(r.lr),
                num(r.momentum)
            );
        }
        if let Some(a) = &self.abort {
            let _ = writeln!(
                out,
                "# aborted at step {}: {}",
                a.step,
                a.message.replace('\n', " ")
            );
        }
        out
    }

    /// Writes `<hash>.csv`, `<hash>.spec.json` and `<hash>.params.csv` into
    /// `dir`; returns the metric CSV path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{}.csv", self.spec_hash));
        fs::write(&csv, self.to_csv())?;
        let spec = serde_json::to_string_pretty(&self.spec).expect("run spec serialises");
        fs::write(
            dir.join(format!("{}.spec.json", self.spec_hash)),
            spec + "\n",
        )?;
        let mut params = String::new();
        let rows = self
            .snapshots
            .iter()
            .map(|(s, p)| (s.to_string(), p))
            .chain(std::iter::once(("final".to_string(), &self.final_params)));
        for (label, p) in rows {
            params.push_str(&label);
            for x in p.iter() {
                params.push(',');
                params.push_str(&num(*x));
            }
            params.push('\n');
        }
        fs::write(dir.join(format!("{}.params.csv", self.spec_hash)), params)?;
        Ok(csv)
    }
}

/// Shortest round-trip decimal, switching to exponent form for very large or
/// small magnitudes.
pub(crate) fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Metric rows and abort note parsed from a run CSV.
pub fn read_csv(path: &Path) -> Result<(Vec<MetricRow>, Option<String>)> {
    let text = fs::read_to_string(path)?;
    parse_csv(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn parse_csv(text: &str) -> std::result::Result<(Vec<MetricRow>, Option<String>), String> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(format!("expected header `{CSV_HEADER}`"));
    }
    let mut rows = Vec::new();
    let mut abort = None;
    for (i, line) in lines.enumerate() {
        if let Some(note) = line.strip_prefix("# ") {
            abort = Some(note.to_string());
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(format!("line {}: expected 6 fields", i + 2));
        }
        let p = |s: &str| s.parse::<f64>().map_err(|e| format!("line {}: {e}", i + 2));
        rows.push(MetricRow {
            step: f[0].parse().map_err(|e| format!("line {}: {e}", i + 2))?,
            train_loss: p(f[1])?,
            full_loss: p(f[2])?,
            update_norm: p(f[3])?,
            lr: p(f[4])?,
            momentum: p(f[5])?,
        });
    }
    Ok((rows, abort))
}

/// Builds `spec.problem` and runs it.
pub fn run(spec: &RunSpec) -> Result<RunRecord> {
    spec.validate()?;
    let problem = spec.problem.build(spec.seed)?;
    run_on(spec, &problem)
}

/// Runs `spec` against an already built problem. Numerical failures end the
/// run early and are recorded in [`RunRecord::abort`]; configuration errors
/// are returned.
pub fn run_on(spec: &RunSpec, problem: &Problem) -> Result<RunRecord> {
    spec.validate()?;
    let started = Instant::now();
    let w0 = problem.initial_point(spec.seed);
    let mut opt = Optimizer::new(spec.optimizer.clone(), w0)?;
    let mut rows = Vec::new();
    let mut snapshots = Vec::new();
    let mut abort = None;
    for t in 1..=spec.steps {
        match step_once(spec, problem, &mut opt, t) {
            Ok(Some(row)) => rows.push(row),
            Ok(None) => {}
            Err(e @ Error::NonFinite { .. }) => {
                abort = Some(Abort {
                    step: t,
                    message: e.to_string(),
                });
                break;
            }
            Err(e) => return Err(e),
        }
        if let Some(every) = spec.snapshot_every {
            if t % every == 0 {
                snapshots.push((t, opt.eval_point().clone()));
            }
        }
    }
    Ok(RunRecord {
        spec_hash: spec.hash(),
        spec: spec.clone(),
        rows,
        final_params: opt.eval_point().clone(),
        snapshots,
        wall_time: started.elapsed().as_secs_f64(),
        abort,
    })
}

fn step_once(
    spec: &RunSpec,
    problem: &Problem,
    opt: &mut Optimizer,
    t: u64,
) -> Result<Option<MetricRow>> {
    let sample = problem.sample_gradient(opt.query_point(), NoiseKey::gradient(spec.seed, t))?;
    let report = opt.step(&sample.gradient)?;
    if !t.is_multiple_of(spec.eval_every) && t != spec.steps {
        return Ok(None);
    }
    let eval = opt.eval_point();
    let full_loss = problem.full_loss(eval)?;
    let train_loss = if sample.batch.is_empty() {
        full_loss
    } else {
        problem.batch_loss(eval, &sample.batch)?
    };
    for (what, v) in [("full loss", full_loss), ("train loss", train_loss)] {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                what,
                step: t,
                index: 0,
            });
        }
    }
    Ok(Some(MetricRow {
        step: t,
        train_loss,
        full_loss,
        update_norm: report.update_norm,
        lr: report.lr,
        momentum: report.momentum,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::Algorithm;
    use crate::problems::{Family, NoiseModel};

    fn quad_spec(alg: Algorithm, lr: f64) -> RunSpec {
        RunSpec {
            problem: ProblemSpec {
                family: Family::Quadratic {
                    hessian: vec![1.0, 0.5, 0.1],
                    center: vec![1.0, -2.0, 3.0],
                },
                noise: NoiseModel::None,
                data_seed: None,
            },
            optimizer: OptimizerConfig::new(alg).with_lr(lr).with_beta1(0.0),
            steps: 50,
            seed: 0,
            eval_every: 1,
            snapshot_every: None,
        }
    }

    #[test]
    fn zero_steps_rejected() {
        let mut spec = quad_spec(Algorithm::SgdMomentum, 0.1);
        spec.steps = 0;
        assert!(run(&spec).is_err());
    }

    #[test]
    fn gradient_descent_decreases_loss() {
        let rec = run(&quad_spec(Algorithm::SgdMomentum, 1.5)).unwrap();
        assert_eq!(rec.rows.len(), 50);
        for pair in rec.rows.windows(2) {
            assert!(pair[1].full_loss < pair[0].full_loss);
        }
    }

    #[test]
    fn csv_round_trips() {
        let rec = run(&quad_spec(Algorithm::Adamw, 0.01)).unwrap();
        let (rows, abort) = parse_csv(&rec.to_csv()).unwrap();
        assert_eq!(rows, rec.rows);
        assert!(abort.is_none());
    }

    #[test]
    fn divergence_is_recorded() {
        let mut spec = quad_spec(Algorithm::SgdMomentum, 1e200);
        spec.eval_every = 10;
        let rec = run(&spec).unwrap();
        assert!(rec.aborted());
        assert!(rec.to_csv().contains("# aborted at step"));
    }

    #[test]
    fn snapshot_cadence_must_divide_eval() {
        let mut spec = quad_spec(Algorithm::SgdMomentum, 0.1);
        spec.eval_every = 10;
        spec.snapshot_every = Some(3);
        assert!(spec.validate().is_err());
        spec.snapshot_every = Some(5);
        assert_eq!(run(&spec).unwrap().snapshots.len(), 10);
    }

    #[test]
    fn hash_depends_on_spec() {
        let a = quad_spec(Algorithm::SgdMomentum, 0.1);
        let mut b = a.clone();
        b.seed = 1;
        assert_eq!(a.hash(), a.clone().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
