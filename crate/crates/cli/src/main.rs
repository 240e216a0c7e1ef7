use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use bubblesheet_core::barriers::{solve_shrinker, ShrinkerProfile};
use bubblesheet_core::harness::{
    self, bowl_report, emit_phase_portrait, run_experiment, run_modes, shrinker_report, write_json, Expectation,
    Tolerances,
};
use bubblesheet_core::modes::{fixed_points, separatrix_check, PhaseBox};
use bubblesheet_core::ScenarioConfig;
use clap::{Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "bubblesheet", version, about = "Renormalized mean curvature flow experiments near the bubble-sheet")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a PDE scenario and write history.csv and report.json.
    Simulate {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate the quadratic-mode ODE of a scenario and classify the limit matrix.
    Modes {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample the phase-plane vector field on a box `x0,x1,y0,y1`.
    Phase {
        #[arg(allow_hyphen_values = true)]
        bx: String,
        #[arg(long, default_value_t = 8)]
        density: usize,
        /// Reverse attempts for the one-way connection check.
        #[arg(long, default_value_t = 100)]
        attempts: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Solve the shrinker with boundary at `a` and write profile_a<a>.csv.
    Shrinker {
        #[arg(long)]
        a: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Solve the translating bowl with the given speed.
    Bowl {
        #[arg(long)]
        speed: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Recompute the checks of a history file.
    Validate {
        history: PathBuf,
        /// Scenario config whose expectations and tolerances apply; inferred from the data otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Where to write the report; printed to stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_box(text: &str) -> anyhow::Result<PhaseBox> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad box coordinate {s:?}")))
        .collect::<anyhow::Result<_>>()?;
    let [x0, x1, y0, y1] = v[..] else { bail!("box must be x0,x1,y0,y1") };
    Ok(PhaseBox { x: [x0, x1], y: [y0, y1] })
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn print_checks(checks: &[harness::Check]) {
    for c in checks {
        let status = match c.status {
            harness::CheckStatus::Pass => "pass",
            harness::CheckStatus::Fail => "FAIL",
            harness::CheckStatus::Skipped => "skip",
        };
        println!("{status:4}  {:<20} {:>12.4e}  (tol {:.1e})", c.name, c.value, c.tolerance);
    }
}

#[derive(Serialize)]
struct PhaseReport {
    bx: PhaseBox,
    density: usize,
    rows: usize,
    fixed_points: Vec<[f64; 2]>,
    max_rate_at_fixed_points: f64,
    separatrix: bubblesheet_core::modes::SeparatrixReport,
    passed: bool,
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = ScenarioConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            let exp = run_experiment(&cfg)?;
            harness::write_outputs(&exp, &dir)?;
            print_checks(&exp.report.checks);
            if exp.report.partial {
                println!("run stopped early: {}", exp.report.failure.as_deref().unwrap_or("unknown"));
            }
            println!("wrote {}", dir.join("history.csv").display());
            Ok(exp.report.passed)
        }
        Command::Modes { config, out } => {
            let cfg = ScenarioConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            create_dir(&dir)?;
            let run = run_modes(&cfg)?;
            harness::write_modes(fs::File::create(dir.join("modes.csv"))?, &run.samples)?;
            write_json(&dir.join("modes_report.json"), &run)?;
            print_checks(&run.checks);
            Ok(run.passed)
        }
        Command::Phase { bx, density, attempts, out } => {
            let bx = parse_box(&bx)?;
            create_dir(&out)?;
            let rows = emit_phase_portrait(&bx, density)?;
            harness::write_phase(fs::File::create(out.join("phase.csv"))?, &rows)?;
            let zeros = fixed_points(&bx);
            let max_rate = zeros
                .iter()
                .map(|p| {
                    let v = bubblesheet_core::modes::phase_vector_field(p[0], p[1]);
                    v[0].abs().max(v[1].abs())
                })
                .fold(0.0, f64::max);
            let sep = separatrix_check(attempts)?;
            let passed = max_rate == 0.0 && sep.connector_reached && sep.reverse_successes == 0;
            println!(
                "{} rows, fixed points {:?}, connector reached: {}, reverse successes: {}/{}",
                rows.len(),
                zeros,
                sep.connector_reached,
                sep.reverse_successes,
                sep.reverse_attempts
            );
            let report = PhaseReport {
                bx,
                density,
                rows: rows.len(),
                fixed_points: zeros,
                max_rate_at_fixed_points: max_rate,
                separatrix: sep,
                passed,
            };
            write_json(&out.join("phase_report.json"), &report)?;
            Ok(passed)
        }
        Command::Shrinker { a, out } => {
            let profile: ShrinkerProfile = solve_shrinker(a)?;
            create_dir(&out)?;
            let path = out.join(format!("profile_a{a}.csv"));
            harness::write_profile(fs::File::create(&path)?, &profile)?;
            let rep = shrinker_report(&profile);
            write_json(&out.join(format!("profile_a{a}.json")), &rep)?;
            print_checks(&rep.checks);
            println!("u_a(0) = {:.10}, wrote {}", rep.axis_radius, path.display());
            Ok(rep.passed)
        }
        Command::Bowl { speed, out } => {
            let (bowl, rep) = bowl_report(speed)?;
            create_dir(&out)?;
            let path = out.join(format!("bowl_c{speed}.csv"));
            harness::write_bowl(fs::File::create(&path)?, &bowl)?;
            write_json(&out.join(format!("bowl_c{speed}.json")), &rep)?;
            print_checks(&rep.checks);
            println!("h(r_max)/(c r_max^2/2) = {:.6}, wrote {}", rep.far_ratio, path.display());
            Ok(rep.passed)
        }
        Command::Validate { history, config, out } => {
            let rows = harness::load_history(&history).with_context(|| format!("reading {}", history.display()))?;
            let (expect, tol): (Expectation, Tolerances) = match &config {
                Some(p) => {
                    let cfg = ScenarioConfig::load(p)?;
                    (cfg.expectation(), cfg.tolerances)
                }
                None => (Expectation::infer(&rows), Tolerances::default()),
            };
            let rep = harness::validate_history(&rows, &expect, &tol);
            let text = serde_json::to_string_pretty(&rep)?;
            match out {
                Some(p) => {
                    fs::write(&p, text + "\n")?;
                    print_checks(&rep.checks);
                }
                None => println!("{text}"),
            }
            Ok(rep.passed)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
