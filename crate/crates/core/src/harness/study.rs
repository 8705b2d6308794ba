use std::fmt;
use std::fmt::Write as _;

use serde::Serialize;

use super::num;
use super::sweep::{sweep, SweepSpec};
use crate::config::{Settings, Value};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StudySpec {
    pub base: Settings,
    /// One sweep preset per compared optimizer; the first is the reference.
    pub presets: Vec<String>,
    pub batch_sizes: Vec<u64>,
    pub seeds: usize,
}

impl StudySpec {
    pub fn from_settings(settings: &Settings) -> Result<Self> {
        let presets = settings.str_list("study.presets")?;
        if presets.is_empty() {
            return Err(Error::config("study.presets", "need at least one preset"));
        }
        let batch_sizes = settings.u64_list("study.batch_sizes")?;
        if batch_sizes.is_empty() {
            return Err(Error::config(
                "study.batch_sizes",
                "need at least one batch size",
            ));
        }
        Ok(Self {
            base: settings.clone(),
            presets,
            batch_sizes,
            seeds: settings.u64("study.seeds")? as usize,
        })
    }
}

/// Best cell of one preset at one batch size.
#[derive(Debug, Clone, Serialize)]
pub struct StudyCell {
    pub batch_size: u64,
    pub preset: String,
    pub algorithm: String,
    pub assignments: Vec<(String, Value)>,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl StudyCell {
    pub fn standard_error(&self) -> f64 {
        self.std / (self.n as f64).sqrt()
    }
}

/// `reference.mean - other.mean` with the standard error of that difference.
#[derive(Debug, Clone, Serialize)]
pub struct StudyGap {
    pub batch_size: u64,
    pub reference: String,
    pub other: String,
    pub gap: f64,
    pub pooled_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyTable {
    pub cells: Vec<StudyCell>,
    pub gaps: Vec<StudyGap>,
}

impl StudyTable {
    pub fn cell(&self, batch_size: u64, preset: &str) -> Option<&StudyCell> {
        self.cells
            .iter()
            .find(|c| c.batch_size == batch_size && c.preset == preset)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("batch_size,preset,algorithm,mean_final_loss,std,n,best_cell\n");
        for c in &self.cells {
            let assign: Vec<String> = c
                .assignments
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},\"{}\"",
                c.batch_size,
                c.preset,
                c.algorithm,
                num(c.mean),
                num(c.std),
                c.n,
                assign.join("; ").replace('"', "'")
            );
        }
        out
    }
}

impl fmt::Display for StudyTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>10}  {:<24} {:>14} {:>12} {:>4}",
            "batch", "preset", "mean", "std", "n"
        )?;
        for c in &self.cells {
            writeln!(
                f,
                "{:>10}  {:<24} {:>14.6e} {:>12.3e} {:>4}",
                c.batch_size, c.preset, c.mean, c.std, c.n
            )?;
        }
        for g in &self.gaps {
            let verdict = if g.gap > g.pooled_se {
                "exceeds"
            } else if g.gap.abs() <= g.pooled_se {
                "within"
            } else {
                "below"
            };
            writeln!(
                f,
                "batch {}: {} - {} = {:.6e} (pooled SE {:.3e}, {verdict} one SE)",
                g.batch_size, g.reference, g.other, g.gap, g.pooled_se
            )?;
        }
        Ok(())
    }
}

/// Tunes every preset at every batch size and tabulates the best cells.
pub fn batch_size_study(spec: &StudySpec) -> Result<StudyTable> {
    let mut cells = Vec::new();
    let mut gaps = Vec::new();
    for &b in &spec.batch_sizes {
        let mut base = spec.base.clone();
        base.set("problem.noise", Value::Str("minibatch".into()))?;
        base.set("problem.batch_size", Value::Int(b as i64))?;
        base.set("sweep.repeats", Value::Int(spec.seeds as i64))?;
        let mut row = Vec::new();
        for name in &spec.presets {
            let mut s = base.clone();
            s.set("sweep.preset", Value::Str(name.clone()))?;
            let sw = SweepSpec::from_settings(&s)?;
            let algorithm = sw.base.str("optimizer.algorithm")?;
            let result = sweep(&sw)?;
            let cell = match result.best_cell() {
                Some(best) => StudyCell {
                    batch_size: b,
                    preset: name.clone(),
                    algorithm,
                    assignments: best.assignments.clone(),
                    mean: best.mean,
                    std: best.std,
                    n: best.final_losses.len(),
                },
                None => StudyCell {
                    batch_size: b,
                    preset: name.clone(),
                    algorithm,
                    assignments: Vec::new(),
                    mean: f64::NAN,
                    std: f64::NAN,
                    n: 0,
                },
            };
            row.push(cell);
        }
        let reference = &row[0];
        for other in &row[1..] {
            gaps.push(StudyGap {
                batch_size: b,
                reference: reference.preset.clone(),
                other: other.preset.clone(),
                gap: reference.mean - other.mean,
                pooled_se: (reference.standard_error().powi(2) + other.standard_error().powi(2))
                    .sqrt(),
            });
        }
        cells.extend(row);
    }
    Ok(StudyTable { cells, gaps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_optimizer_gives_identical_cells() {
        let mut s = Settings::from_toml_str(
            "[problem]\ndim = 5\nsamples = 50\n[run]\nsteps = 300\n[study]\npresets = [\"sgd-momentum-desk\", \"sgd-momentum-desk\"]\nbatch_sizes = [1]\nseeds = 2\n",
        )
        .unwrap();
        s.apply_override("problem.spectrum_decay=1").unwrap();
        let table = batch_size_study(&StudySpec::from_settings(&s).unwrap()).unwrap();
        assert_eq!(table.cells.len(), 2);
        assert_eq!(table.cells[0].mean, table.cells[1].mean);
        assert_eq!(table.cells[0].assignments, table.cells[1].assignments);
        assert_eq!(table.gaps[0].gap, 0.0);
    }
}
