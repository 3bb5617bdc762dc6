use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use stream_sla::engine::{trace, EstimationMode};
use stream_sla::scenario::{
    load_config, plot_script, preset, preset_names, run_scenario, write_csv, LoadError, Overrides,
    ScenarioResults, Validated,
};

#[derive(Parser)]
#[command(name = "stream-sla", version, about = "Simulate admission and allocation policies for SLA-bound job streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a scenario file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run one of the bundled experiments.
    Preset {
        #[arg(value_parser = preset_names().collect::<Vec<_>>())]
        name: String,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Check a scenario file without running it.
    Validate { config: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Estimation {
    Oracle,
    Measured,
}

#[derive(Args)]
struct RunOpts {
    /// Base seed shared by every run of the sweep.
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated time per run.
    #[arg(long)]
    horizon: Option<f64>,
    /// Number of batch-means batches.
    #[arg(long)]
    batches: Option<usize>,
    /// Directory receiving the CSV, plot script and traces.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Write a per-run event dump.
    #[arg(long)]
    trace: bool,
    /// Where policies get arrival and service parameters from.
    #[arg(long, value_enum)]
    estimation: Option<Estimation>,
    /// Preempt jobs on reassigned servers instead of letting them finish.
    #[arg(long)]
    preemptive: bool,
    /// Also write a gnuplot script.
    #[arg(long)]
    plot: bool,
}

impl RunOpts {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            horizon: self.horizon,
            batches: self.batches,
            estimation: self.estimation.map(|e| match e {
                Estimation::Oracle => EstimationMode::Oracle,
                Estimation::Measured => EstimationMode::Measured,
            }),
            preemptive: self.preemptive,
            trace: self.trace,
        }
    }
}

enum Failure {
    Invalid(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self::Runtime(e)
    }
}

fn load(text: &str) -> Result<Validated, Failure> {
    load_config(text).map_err(|e| match e {
        LoadError::Parse(_) | LoadError::Invalid(_) => Failure::Invalid(e.to_string()),
    })
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Runtime)
}

fn print_warnings(v: &Validated) {
    for w in &v.warnings {
        eprintln!("warning: {w}");
    }
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

fn write_outputs(results: &ScenarioResults, out: &Path, plot: bool) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let stem = sanitize(&results.name);
    let csv = out.join(format!("{stem}.csv"));
    fs::write(&csv, write_csv(results)).with_context(|| format!("writing {}", csv.display()))?;
    println!("wrote {}", csv.display());
    if plot {
        let gp = out.join(format!("{stem}.gp"));
        fs::write(&gp, plot_script(results, &format!("{stem}.png")))
            .with_context(|| format!("writing {}", gp.display()))?;
        println!("wrote {}", gp.display());
    }
    let traced: Vec<_> = results.runs.iter().filter(|r| !r.report.trace.is_empty()).collect();
    if !traced.is_empty() {
        let dir = out.join(format!("{stem}-trace"));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for (i, run) in traced.iter().enumerate() {
            let name = format!("{i:03}-{}-{}.txt", sanitize(&results.label(run)), run.report.policy);
            fs::write(dir.join(&name), trace::render(&run.report.trace))
                .with_context(|| format!("writing trace {name}"))?;
        }
        println!("wrote {} traces to {}", traced.len(), dir.display());
    }
    Ok(())
}

fn print_summary(results: &ScenarioResults) {
    println!("{:<28} {:<24} {:>12} {:>12} {:>10}", "series", "policy", results.parameter, "revenue", "+/-");
    for run in &results.runs {
        let point = run.point.map_or_else(|| "-".to_string(), |p| p.to_string());
        println!(
            "{:<28} {:<24} {:>12} {:>12.4} {:>10.4}",
            results.label(run),
            run.report.policy,
            point,
            run.report.revenue.mean,
            run.report.revenue.half_width
        );
    }
}

fn execute(text: &str, opts: &RunOpts) -> Result<(), Failure> {
    let validated = load(text)?;
    print_warnings(&validated);
    let mut scenario = validated.scenario;
    scenario.apply(&opts.overrides());
    let results = run_scenario(&scenario).map_err(|e| Failure::Invalid(e.to_string()))?;
    print_summary(&results);
    write_outputs(&results, &opts.out, opts.plot)?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, opts } => execute(&read(&config)?, &opts),
        Command::Preset { name, opts } => {
            let text = preset(&name).ok_or_else(|| Failure::Invalid(format!("unknown preset {name}")))?;
            execute(text, &opts)
        }
        Command::Validate { config } => {
            let v = load(&read(&config)?)?;
            print_warnings(&v);
            println!("{}: ok, {} runs", config.display(), v.scenario.runs().len());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
