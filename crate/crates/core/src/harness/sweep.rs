use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::presets::{preset, Preset};
use super::{num, run, RunRecord, RunSpec};
use crate::config::{Settings, Value};
use crate::error::{Error, Result};
use crate::problems::NoiseModel;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Settings shared by every cell (preset values already applied).
    pub base: Settings,
    /// Axes in expansion order; the last axis varies fastest.
    pub grid: Vec<(String, Vec<Value>)>,
    pub preset: Option<String>,
    pub repeats: usize,
    pub budget: usize,
}

impl SweepSpec {
    /// Resolves `sweep.*` keys. Preset values fill keys the user left unset;
    /// user grid axes replace preset axes of the same key.
    pub fn from_settings(settings: &Settings) -> Result<Self> {
        let mut base = settings.clone();
        let preset_name = settings.opt_str("sweep.preset")?;
        let mut grid: Vec<(String, Vec<Value>)> = Vec::new();
        if let Some(name) = &preset_name {
            let p = preset(name)
                .ok_or_else(|| Error::config("sweep.preset", format!("unknown preset `{name}`")))?;
            apply_preset(&mut base, p)?;
            let scale = if p.curvature_scaled.is_empty() {
                1.0
            } else {
                curvature_scale(&base)?
            };
            for (key, values) in p.grid {
                let factor = if p.curvature_scaled.contains(key) {
                    scale
                } else {
                    1.0
                };
                grid.push((
                    key.to_string(),
                    values.iter().map(|v| Value::Float(v * factor)).collect(),
                ));
            }
        }
        for (key, values) in settings.grid() {
            match grid.iter_mut().find(|(k, _)| *k == key) {
                Some(axis) => axis.1 = values,
                None => grid.push((key, values)),
            }
        }
        Ok(Self {
            base,
            grid,
            preset: preset_name,
            repeats: settings.u64("sweep.repeats")? as usize,
            budget: settings.u64("sweep.budget")? as usize,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.grid.iter().map(|(_, v)| v.len()).product()
    }

    /// Grid assignments in odometer order.
    pub fn cells(&self) -> Vec<Vec<(String, Value)>> {
        let mut out = vec![Vec::new()];
        for (key, values) in &self.grid {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut next = prefix.clone();
                        next.push((key.clone(), v.clone()));
                        next
                    })
                })
                .collect();
        }
        out
    }

    fn cell_specs(&self, assignments: &[(String, Value)]) -> Result<Vec<RunSpec>> {
        let mut s = self.base.clone();
        for (k, v) in assignments {
            s.set(k, v.clone())?;
        }
        let seed0 = s.u64("run.seed")?;
        (0..self.repeats as u64)
            .map(|i| {
                s.set("run.seed", Value::Int((seed0 + i) as i64))?;
                s.run_spec()
            })
            .collect()
    }
}

fn apply_preset(base: &mut Settings, p: &Preset) -> Result<()> {
    for (key, literal) in p.fixed {
        if !base.is_set(key) {
            base.set(key, Value::parse_literal(key, literal)?)?;
        }
    }
    if let Some(frac) = p.warmup_fraction {
        if !base.is_set("optimizer.warmup") {
            let steps = base.u64("run.steps")? as f64;
            base.set(
                "optimizer.warmup",
                Value::Int((frac * steps).round() as i64),
            )?;
        }
    }
    Ok(())
}

/// `1 / trace` of the Hessian when gradients come from proper minibatches,
/// `1 / lambda_max` otherwise.
fn curvature_scale(base: &Settings) -> Result<f64> {
    let spec = base.problem_spec()?;
    let problem = spec.build(base.u64("run.seed")?)?;
    let (trace, lambda_max) = problem.curvature()?;
    Ok(match (problem.noise(), problem.samples()) {
        (NoiseModel::Minibatch { batch_size }, Some(n)) if batch_size < n => 1.0 / trace,
        _ => 1.0 / lambda_max,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub index: usize,
    pub assignments: Vec<(String, Value)>,
    /// Peak learning rate, used for tie-breaking.
    pub lr: f64,
    pub seeds: Vec<u64>,
    pub run_hashes: Vec<String>,
    pub final_losses: Vec<f64>,
    /// Mean and sample standard deviation of the final full loss; NaN when aborted.
    pub mean: f64,
    pub std: f64,
    pub aborted: bool,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub preset: Option<String>,
    pub cells: Vec<CellSummary>,
    /// Records per cell, in seed order.
    pub records: Vec<Vec<RunRecord>>,
    pub best: Option<usize>,
}

impl SweepResult {
    pub fn best_cell(&self) -> Option<&CellSummary> {
        self.best.map(|i| &self.cells[i])
    }

    /// Writes every run's files and `manifest.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for rec in self.records.iter().flatten() {
            rec.write(dir)?;
        }
        fs::write(dir.join("manifest.txt"), self.manifest())?;
        Ok(())
    }

    /// Key-value manifest: one `key = value` per line, `#` comments.
    pub fn manifest(&self) -> String {
        let mut out = String::from("# accelmom sweep manifest\n");
        let _ = writeln!(out, "preset = {}", self.preset.as_deref().unwrap_or(""));
        let _ = writeln!(out, "cells = {}", self.cells.len());
        for c in &self.cells {
            let p = format!("cell.{}", c.index);
            let _ = writeln!(out, "{p}.assign = {}", encode_assignments(&c.assignments));
            let _ = writeln!(out, "{p}.lr = {}", num(c.lr));
            let _ = writeln!(
                out,
                "{p}.seeds = {}",
                join(c.seeds.iter().map(|s| s.to_string()))
            );
            let _ = writeln!(out, "{p}.runs = {}", c.run_hashes.join(","));
            let _ = writeln!(
                out,
                "{p}.final_full_loss = {}",
                join(c.final_losses.iter().map(|x| num(*x)))
            );
            let _ = writeln!(out, "{p}.mean = {}", num(c.mean));
            let _ = writeln!(out, "{p}.std = {}", num(c.std));
            let _ = writeln!(
                out,
                "{p}.status = {}",
                if c.aborted { "aborted" } else { "ok" }
            );
        }
        match self.best_cell() {
            Some(b) => {
                let _ = writeln!(out, "best.cell = {}", b.index);
                let _ = writeln!(out, "best.assign = {}", encode_assignments(&b.assignments));
                let _ = writeln!(out, "best.mean = {}", num(b.mean));
            }
            None => out.push_str("best.cell = none\n"),
        }
        out
    }
}

fn join(items: impl Iterator<Item = String>) -> String {
    items.collect::<Vec<_>>().join(",")
}

fn encode_assignments(a: &[(String, Value)]) -> String {
    a.iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Cell summaries and the recorded best cell from a manifest file.
pub fn read_manifest(path: &Path) -> Result<(Vec<CellSummary>, Option<usize>)> {
    let text = fs::read_to_string(path)?;
    let bad = |line: &str| Error::Parse(format!("{}: malformed line `{line}`", path.display()));
    let mut cells: Vec<CellSummary> = Vec::new();
    let mut best = None;
    for line in text.lines() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once(" = ")
            .map(|(k, v)| (k, v.trim()))
            .or_else(|| line.strip_suffix(" =").map(|k| (k, "")))
            .ok_or_else(|| bad(line))?;
        if key == "best.cell" {
            best = value.parse().ok();
            continue;
        }
        let Some(rest) = key.strip_prefix("cell.") else {
            continue;
        };
        let (idx, field) = rest.split_once('.').ok_or_else(|| bad(line))?;
        let idx: usize = idx.parse().map_err(|_| bad(line))?;
        if idx == cells.len() {
            cells.push(CellSummary {
                index: idx,
                assignments: Vec::new(),
                lr: f64::NAN,
                seeds: Vec::new(),
                run_hashes: Vec::new(),
                final_losses: Vec::new(),
                mean: f64::NAN,
                std: f64::NAN,
                aborted: false,
            });
        }
        let cell = cells.get_mut(idx).ok_or_else(|| bad(line))?;
        let floats = |v: &str| -> Result<Vec<f64>> {
            v.split(',')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|_| bad(line)))
                .collect()
        };
        match field {
            "assign" => {
                for part in value.split("; ").filter(|s| !s.is_empty()) {
                    let (k, v) = part.split_once('=').ok_or_else(|| bad(line))?;
                    cell.assignments
                        .push((k.to_string(), Value::parse_literal(k, v)?));
                }
            }
            "lr" => cell.lr = value.parse().map_err(|_| bad(line))?,
            "seeds" => {
                cell.seeds = value
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().map_err(|_| bad(line)))
                    .collect::<Result<_>>()?
            }
            "runs" => {
                cell.run_hashes = value
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            "final_full_loss" => cell.final_losses = floats(value)?,
            "mean" => cell.mean = value.parse().map_err(|_| bad(line))?,
            "std" => cell.std = value.parse().map_err(|_| bad(line))?,
            "status" => cell.aborted = value == "aborted",
            _ => return Err(bad(line)),
        }
    }
    Ok((cells, best))
}

fn compare_values(a: &Value, b: &Value) -> Ordering {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        _ => a.to_string().cmp(&b.to_string()),
    }
}

/// Lowest mean final full loss among non-aborted cells; ties go to the lower
/// learning rate, then to the lexicographically smaller assignment list.
pub fn select_best(cells: &[CellSummary]) -> Option<usize> {
    cells
        .iter()
        .filter(|c| !c.aborted && c.mean.is_finite())
        .min_by(|a, b| {
            a.mean
                .total_cmp(&b.mean)
                .then(a.lr.total_cmp(&b.lr))
                .then_with(|| {
                    a.assignments
                        .iter()
                        .zip(&b.assignments)
                        .map(|((ka, va), (kb, vb))| ka.cmp(kb).then(compare_values(va, vb)))
                        .find(|o| o.is_ne())
                        .unwrap_or(a.assignments.len().cmp(&b.assignments.len()))
                })
        })
        .map(|c| c.index)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every cell for every seed. Cells run in parallel; a cell's seeds run
/// in order. All specs are validated before anything runs.
pub fn sweep(spec: &SweepSpec) -> Result<SweepResult> {
    if spec.repeats == 0 {
        return Err(Error::config("sweep.repeats", "must be > 0"));
    }
    let total = spec.cell_count() * spec.repeats;
    if total > spec.budget {
        return Err(Error::config(
            "sweep.budget",
            format!(
                "{} cells x {} repeats = {total} runs exceeds the budget of {}",
                spec.cell_count(),
                spec.repeats,
                spec.budget
            ),
        ));
    }
    let cells = spec.cells();
    let specs = cells
        .iter()
        .map(|a| spec.cell_specs(a))
        .collect::<Result<Vec<_>>>()?;
    let records = specs
        .par_iter()
        .map(|runs| runs.iter().map(run).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let summaries: Vec<CellSummary> = cells
        .into_iter()
        .zip(&records)
        .enumerate()
        .map(|(index, (assignments, recs))| {
            let aborted = recs.iter().any(RunRecord::aborted);
            let final_losses: Vec<f64> = recs
                .iter()
                .map(|r| r.final_full_loss().unwrap_or(f64::NAN))
                .collect();
            let (mean, std) = if aborted {
                (f64::NAN, f64::NAN)
            } else {
                mean_std(&final_losses)
            };
            CellSummary {
                index,
                assignments,
                lr: recs[0].spec.optimizer.lr.peak(),
                seeds: recs.iter().map(|r| r.spec.seed).collect(),
                run_hashes: recs.iter().map(|r| r.spec_hash.clone()).collect(),
                final_losses,
                mean,
                std,
                aborted,
            }
        })
        .collect();
    let best = select_best(&summaries);
    Ok(SweepResult {
        preset: spec.preset.clone(),
        cells: summaries,
        records,
        best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_settings() -> Settings {
        let mut s = Settings::from_toml_str(
            "[problem]\nkind = \"quadratic\"\ndim = 4\nnoise = \"gaussian\"\nsigma = 0.1\n[run]\nsteps = 200\n",
        )
        .unwrap();
        s.apply_override("optimizer.lr=0.1").unwrap();
        s
    }

    fn summary(index: usize, mean: f64, lr: f64, tag: f64, aborted: bool) -> CellSummary {
        CellSummary {
            index,
            assignments: vec![("optimizer.beta1".into(), Value::Float(tag))],
            lr,
            seeds: vec![0],
            run_hashes: vec![],
            final_losses: vec![mean],
            mean,
            std: 0.0,
            aborted,
        }
    }

    #[test]
    fn selection_rules() {
        let cells = vec![
            summary(0, 1.0, 0.1, 0.5, false),
            summary(1, 0.5, 0.1, 0.5, true),
            summary(2, 1.0, 0.01, 0.9, false),
            summary(3, 1.0, 0.01, 0.5, false),
        ];
        assert_eq!(select_best(&cells), Some(3));
        assert_eq!(select_best(&cells[1..2]), None);
    }

    #[test]
    fn single_cell_matches_run() {
        let s = quad_settings();
        let spec = SweepSpec::from_settings(&s).unwrap();
        let res = sweep(&SweepSpec { repeats: 1, ..spec }).unwrap();
        let direct = run(&s.run_spec().unwrap()).unwrap();
        assert_eq!(res.records[0][0].to_csv(), direct.to_csv());
        assert_eq!(res.best, Some(0));
    }

    #[test]
    fn preset_expands_and_user_axes_override() {
        let mut s = quad_settings();
        s.apply_override("sweep.preset=adamw-large-batch").unwrap();
        s.apply_override("sweep.grid.optimizer.beta2=[0.5]")
            .unwrap();
        let spec = SweepSpec::from_settings(&s).unwrap();
        assert_eq!(spec.cell_count(), 3 * 2);
        assert_eq!(spec.base.str("optimizer.algorithm").unwrap(), "adamw");
        assert!(spec.cells().iter().all(|c| c
            .iter()
            .any(|(k, v)| k == "optimizer.beta2" && *v == Value::Float(0.5))));
    }

    #[test]
    fn budget_is_enforced() {
        let mut s = quad_settings();
        s.apply_override("sweep.preset=mars-small-batch").unwrap();
        s.apply_override("sweep.budget=10").unwrap();
        let err = sweep(&SweepSpec::from_settings(&s).unwrap())
            .unwrap_err()
            .to_string();
        assert!(err.contains("sweep.budget"), "{err}");
    }

    #[test]
    fn manifest_round_trips_selection() {
        let mut s = quad_settings();
        s.apply_override("sweep.grid.optimizer.lr=[0.01, 0.1, 1e9]")
            .unwrap();
        s.apply_override("sweep.repeats=2").unwrap();
        let res = sweep(&SweepSpec::from_settings(&s).unwrap()).unwrap();
        assert!(res.cells[2].aborted);
        let dir = tempfile::tempdir().unwrap();
        res.write(dir.path()).unwrap();
        let (cells, best) = read_manifest(&dir.path().join("manifest.txt")).unwrap();
        assert_eq!(best, res.best);
        assert_eq!(select_best(&cells), res.best);
        assert_eq!(cells[1].assignments, res.cells[1].assignments);
    }

    #[test]
    fn desk_preset_scales_by_curvature() {
        let mut s = quad_settings();
        s.apply_override("problem.hessian=[2.0, 1.0, 0.5, 0.5]")
            .unwrap();
        s.apply_override("sweep.preset=sgd-momentum-desk").unwrap();
        let spec = SweepSpec::from_settings(&s).unwrap();
        // Gaussian noise has no minibatch, so the scale is 1 / lambda_max.
        let lr = &spec
            .grid
            .iter()
            .find(|(k, _)| k == "optimizer.lr")
            .unwrap()
            .1;
        assert_eq!(lr[4], Value::Float(0.5));
    }
}
