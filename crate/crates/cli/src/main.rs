use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use accelmom::config::{key_reference, Settings, Value};
use accelmom::equivalence::run_check;
use accelmom::harness::{batch_size_study, run, sweep, StudySpec, SweepSpec, PRESETS};
use accelmom::plot::{
    emit_plot, load_runs, parse_data_csv, select_series, PlotMode, PlotStyle, DATA_HEADER,
};
use accelmom::Result;

#[derive(Parser)]
#[command(
    name = "accelmom",
    version,
    about = "Momentum-optimizer lab: runs, sweeps, equivalence checks and plots"
)]
#[command(after_help = help_footer())]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(
        long,
        global = true,
        env = "ACCELMOM_OUT",
        default_value = "accelmom-out"
    )]
    out: PathBuf,
    /// Override a config key (repeatable), e.g. --set optimizer.lr=0.01.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Shorthand for --set run.seed=N.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Shorthand for --set equiv.tolerance=X.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write `<spec-hash>.csv`.
    Run,
    /// Run a hyperparameter grid (sweep.preset and/or sweep.grid.*).
    Sweep,
    /// Compare a method against its general accelerated-SGD form.
    EquivCheck {
        /// Mapping name; overrides equiv.mapping.
        mapping: Option<String>,
    },
    /// Compare tuned presets across batch sizes.
    BatchStudy,
    /// Draw loss curves from run CSVs, directories of them, or a plot data file.
    Plot {
        /// Inputs; overrides plot.inputs.
        inputs: Vec<PathBuf>,
    },
}

fn help_footer() -> String {
    let mut s = key_reference();
    s.push_str("\nSweep presets:\n");
    for p in PRESETS {
        s.push_str(&format!("  {:<36} {}\n", p.name, p.description));
    }
    s
}

fn settings(common: &Common) -> Result<Settings> {
    let mut s = match &common.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::new(),
    };
    for o in &common.overrides {
        s.apply_override(o)?;
    }
    if let Some(seed) = common.seed {
        s.set("run.seed", Value::Int(seed as i64))?;
    }
    if let Some(tol) = common.tolerance {
        s.set("equiv.tolerance", Value::Float(tol))?;
    }
    Ok(s)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: &Cli) -> Result<bool> {
    let mut s = settings(&cli.common)?;
    let out = &cli.common.out;
    match &cli.command {
        Command::Run => cmd_run(&s, out),
        Command::Sweep => cmd_sweep(&s, out),
        Command::EquivCheck { mapping } => {
            if let Some(m) = mapping {
                s.set("equiv.mapping", Value::Str(m.clone()))?;
            }
            let (check, setup, tolerance) = s.equiv_request()?;
            let report = run_check(&check, &setup, tolerance)?;
            print!("{report}");
            Ok(report.passed())
        }
        Command::BatchStudy => {
            let table = batch_size_study(&StudySpec::from_settings(&s)?)?;
            print!("{table}");
            fs::create_dir_all(out)?;
            fs::write(out.join("study.csv"), table.to_csv())?;
            Ok(true)
        }
        Command::Plot { inputs } => cmd_plot(&s, inputs, out),
    }
}

fn cmd_run(s: &Settings, out: &Path) -> Result<bool> {
    let spec = s.run_spec()?;
    let rec = run(&spec)?;
    let path = rec.write(out)?;
    println!("wrote {}", path.display());
    if let Some(last) = rec.rows.last() {
        println!("final step {} full_loss {:e}", last.step, last.full_loss);
    }
    if let Some(a) = &rec.abort {
        eprintln!("run aborted at step {}: {}", a.step, a.message);
        return Ok(false);
    }
    Ok(true)
}

fn cmd_sweep(s: &Settings, out: &Path) -> Result<bool> {
    let spec = SweepSpec::from_settings(s)?;
    let result = sweep(&spec)?;
    fs::create_dir_all(out)?;
    result.write(out)?;
    for c in &result.cells {
        let assign: Vec<String> = c
            .assignments
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        let status = if c.aborted { "aborted" } else { "ok" };
        println!(
            "cell {:>3} {:<8} mean {:>12.6e} std {:>10.3e}  {}",
            c.index,
            status,
            c.mean,
            c.std,
            assign.join(" ")
        );
    }
    println!("manifest {}", out.join("manifest.txt").display());
    match result.best_cell() {
        Some(b) => {
            println!("best cell {} mean final full_loss {:e}", b.index, b.mean);
            Ok(true)
        }
        None => {
            eprintln!("every cell aborted");
            Ok(false)
        }
    }
}

fn cmd_plot(s: &Settings, inputs: &[PathBuf], out: &Path) -> Result<bool> {
    let inputs: Vec<PathBuf> = if inputs.is_empty() {
        s.str_list("plot.inputs")?
            .into_iter()
            .map(PathBuf::from)
            .collect()
    } else {
        inputs.to_vec()
    };
    if inputs.is_empty() {
        return Err(accelmom::Error::Config {
            key: "plot.inputs".into(),
            message: "no inputs given".into(),
        });
    }
    let style = PlotStyle {
        log_y: s.bool("plot.log_y")?.unwrap_or(true),
        title: s.str("plot.title")?,
    };
    let mode = match s.str("plot.mode")?.as_str() {
        "best-per-optimizer" => PlotMode::BestPerOptimizer,
        _ => PlotMode::All,
    };
    // A single plot data file is re-rendered as is.
    let series = match inputs.as_slice() {
        [one] if one.is_file() && fs::read_to_string(one)?.starts_with(DATA_HEADER) => {
            parse_data_csv(&fs::read_to_string(one)?)?
        }
        _ => select_series(&load_runs(&inputs)?, mode),
    };
    let (svg, csv) = emit_plot(&series, &style, out, "plot")?;
    println!("wrote {} and {}", svg.display(), csv.display());
    Ok(true)
}
