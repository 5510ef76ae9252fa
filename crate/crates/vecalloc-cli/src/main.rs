//! Command-line front end: thin argument parsing over the library crate.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use vecalloc::nalgebra::DVector;
use vecalloc::{run_scenario, solve_kb, tracking_metrics, write_csv, KbProblem};

use vecalloc_cli::config::{build_map, load_config, AllocatorDoc};
use vecalloc_cli::figures::{reproduce, Figure};
use vecalloc_cli::kbdoc::KbDocument;
use vecalloc_cli::report::run_allocation;
use vecalloc_cli::CliError;

#[derive(Parser)]
#[command(
    name = "vecalloc",
    about = "Control allocation for rigid bodies with vectorized thrusters",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Allocate a single wrench and print the actuator commands.
    Allocate {
        /// Configuration file (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Requested wrench, comma-separated, one entry per controlled axis.
        #[arg(long)]
        wrench: String,
        /// Allocation method.
        #[arg(long, value_enum)]
        method: Method,
        /// Rest-direction document produced by `solve-kb`; solved from the
        /// config when omitted.
        #[arg(long)]
        kb: Option<PathBuf>,
        /// Emit the report as JSON instead of aligned text.
        #[arg(long)]
        json: bool,
    },
    /// Solve for the thrust-preserving rest direction and write it as JSON.
    SolveKb {
        /// Configuration file (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Extra typical wrench (comma-separated); repeatable, appended to
        /// the config's `kb.typical_wrenches`.
        #[arg(long)]
        typical: Vec<String>,
        /// Override the number of random restarts.
        #[arg(long)]
        seeds: Option<usize>,
        /// Override the restart RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a closed-loop scenario and write the time series as CSV.
    Simulate {
        /// Configuration file with a `scenario` section.
        #[arg(long)]
        scenario: PathBuf,
        /// CSV output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print run statistics (RMS tracking error, slack, angle steps,
        /// energy) after the run.
        #[arg(long)]
        summary: bool,
    },
    /// Regenerate the CSV data behind a named case-study figure.
    Reproduce {
        /// Figure name; pass an unknown name to see the list.
        #[arg(long)]
        figure: String,
        /// Directory for the CSV files.
        #[arg(long, default_value = "figures")]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Pinv,
    Smooth,
    Convex,
    Classic,
}

impl From<Method> for AllocatorDoc {
    fn from(m: Method) -> Self {
        match m {
            Method::Pinv => AllocatorDoc::Pinv,
            Method::Smooth => AllocatorDoc::Smooth,
            Method::Convex => AllocatorDoc::Convex,
            Method::Classic => AllocatorDoc::Classic,
        }
    }
}

fn parse_wrench(text: &str, expect: usize, what: &str) -> Result<DVector<f64>, CliError> {
    let mut values = Vec::new();
    for part in text.split(',') {
        let v: f64 = part
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{what}: {part:?} is not a number")))?;
        values.push(v);
    }
    if values.len() != expect {
        return Err(CliError::Config(format!(
            "{what}: expected {expect} comma-separated entries, got {}",
            values.len()
        )));
    }
    Ok(DVector::from_vec(values))
}

fn write_text(path: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text)?;
            Ok(())
        }
        None => {
            print!("{text}");
            std::io::stdout().flush()?;
            Ok(())
        }
    }
}

fn cmd_allocate(
    config: &Path,
    wrench: &str,
    method: Method,
    kb: Option<&PathBuf>,
    json: bool,
) -> Result<i32, CliError> {
    let doc = load_config(config)?;
    let map = build_map(&doc)?;
    let tau = parse_wrench(wrench, map.wrench_dim(), "--wrench")?;
    let kb_document = kb.map(|p| KbDocument::load(p)).transpose()?;
    let report = run_allocation(&doc, &map, method.into(), &tau, kb_document.as_ref())?;

    if json {
        println!("{}", report.to_json());
    } else {
        let labels: Vec<&str> = map
            .body()
            .controlled_axes
            .iter()
            .map(|a| a.label())
            .collect();
        let blocks: Vec<_> = (0..map.actuator_count()).map(|i| map.block(i)).collect();
        print!("{}", report.to_text(&labels, &blocks));
    }
    Ok(if report.status.as_deref() == Some("max_iters") {
        2
    } else {
        0
    })
}

fn cmd_solve_kb(
    config: &Path,
    typical: &[String],
    seeds: Option<usize>,
    seed: Option<u64>,
    out: Option<&PathBuf>,
) -> Result<i32, CliError> {
    let doc = load_config(config)?;
    let map = build_map(&doc)?;
    let section = doc.kb.clone().unwrap_or_default();

    let mut problem = KbProblem::new(&map);
    problem.min_block_norm = section.min_block_norm;
    for (i, w) in section.typical_wrenches.iter().enumerate() {
        if w.len() != map.wrench_dim() {
            return Err(CliError::Config(format!(
                "kb.typical_wrenches[{i}]: expected {} entries, got {}",
                map.wrench_dim(),
                w.len()
            )));
        }
        problem.typical_wrenches.push(DVector::from_vec(w.clone()));
    }
    for text in typical {
        problem
            .typical_wrenches
            .push(parse_wrench(text, map.wrench_dim(), "--typical")?);
    }

    let solution = solve_kb(
        &problem,
        seeds.unwrap_or(section.seeds),
        seed.unwrap_or(section.seed),
    )?;
    let document = KbDocument::from_solution(&map, &solution);
    write_text(out, &format!("{}\n", document.to_json()))?;
    Ok(0)
}

fn cmd_simulate(scenario: &Path, out: Option<&PathBuf>, summary: bool) -> Result<i32, CliError> {
    let doc = load_config(scenario)?;
    let map = build_map(&doc)?;
    let sc = doc.scenario(&map)?;
    let ts = run_scenario(&sc)?;

    let mut csv = Vec::new();
    write_csv(&ts, &mut csv)?;
    let csv = String::from_utf8(csv).expect("CSV output is ASCII");
    write_text(out, &csv)?;

    if summary {
        let metrics = tracking_metrics(&ts);
        let mut text = String::new();
        use std::fmt::Write as _;
        writeln!(text, "steps: {}", ts.steps.len()).unwrap();
        for (label, rms) in ts.axis_labels.iter().zip(metrics.rms_error.iter()) {
            writeln!(text, "rms_error_{label}: {rms:.6e}").unwrap();
        }
        writeln!(text, "max_slack: {:.6e}", metrics.max_slack).unwrap();
        writeln!(
            text,
            "max_angle_step_deg: {:.6}",
            metrics.max_angle_step.to_degrees()
        )
        .unwrap();
        writeln!(
            text,
            "max_ref_angle_step_deg: {:.6}",
            metrics.max_ref_angle_step.to_degrees()
        )
        .unwrap();
        writeln!(text, "power_integral_s: {:.6e}", metrics.power_integral).unwrap();
        // The summary shares stdout with the CSV when no --out is given;
        // route it to stderr in that case so the CSV stays parseable.
        match out {
            Some(_) => print!("{text}"),
            None => eprint!("{text}"),
        }
    }
    Ok(0)
}

fn cmd_reproduce(figure: &str, out_dir: &Path) -> Result<i32, CliError> {
    let figure = Figure::from_name(figure)?;
    let written = reproduce(figure, out_dir)?;
    for path in written {
        println!("{}", path.display());
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Allocate {
            config,
            wrench,
            method,
            kb,
            json,
        } => cmd_allocate(config, wrench, *method, kb.as_ref(), *json),
        Command::SolveKb {
            config,
            typical,
            seeds,
            seed,
            out,
        } => cmd_solve_kb(config, typical, *seeds, *seed, out.as_ref()),
        Command::Simulate {
            scenario,
            out,
            summary,
        } => cmd_simulate(scenario, out.as_ref(), *summary),
        Command::Reproduce { figure, out_dir } => cmd_reproduce(figure, out_dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
