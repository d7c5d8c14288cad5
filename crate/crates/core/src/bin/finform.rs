use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use finform::cli::{self, config, config::Settings};
use finform::{Error, Result};

/// Run adaptive-control scenarios, sweeps and assumption preflights.
#[derive(Debug, Parser)]
#[command(name = "finform", version)]
struct Args {
    /// Scenario name: spring, sine, abs or linear.
    #[arg(long)]
    scenario: Option<String>,
    /// INI-style configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override `key=value` or `section.key=value` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory for trace.csv and summary.txt (or sweep.txt).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// `axis=v1,v2,...` or a preset name such as `abs-fixed-slip`.
    #[arg(long)]
    sweep: Option<String>,
    /// Integration step (s).
    #[arg(long)]
    h: Option<f64>,
    /// Horizon (s).
    #[arg(long)]
    tf: Option<f64>,
}

fn settings(args: &Args, scenario_flag: Option<&str>) -> Result<(Settings, String)> {
    let mut s = match &args.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    let name = s.scenario_name(scenario_flag)?;
    for set in &args.sets {
        s.apply_override(set, &name)?;
    }
    if let Some(h) = args.h {
        s.apply_override(&format!("run.h={h}"), &name)?;
    }
    if let Some(tf) = args.tf {
        s.apply_override(&format!("run.tf={tf}"), &name)?;
    }
    Ok((s, name))
}

fn run(args: &Args) -> Result<()> {
    if let Some(sweep) = &args.sweep {
        let (scenario, axis, values) = match (sweep.split_once('='), cli::preset(sweep)) {
            (_, Some((scenario, axis, values))) => (Some(scenario), axis.to_string(), values),
            (Some((axis, list)), None) => {
                let values = list.split(',').map(str::trim).filter(|v| !v.is_empty()).map(str::to_string).collect();
                (None, axis.trim().to_string(), values)
            }
            (None, None) => {
                return Err(Error::Config {
                    line: 0,
                    key: "--sweep".into(),
                    message: format!("`{sweep}` is neither axis=values nor a preset"),
                })
            }
        };
        let flag = args.scenario.as_deref().or(scenario);
        let (s, name) = settings(args, flag)?;
        config::build(&s, Some(&name))?;
        let rows = cli::sweep(&s, &name, &axis, &values)?;
        let table = cli::sweep_table(&name, &axis, &rows);
        std::fs::create_dir_all(&args.out)?;
        std::fs::write(args.out.join("sweep.txt"), &table)?;
        print!("{table}");
        return Ok(());
    }
    let (s, name) = settings(args, args.scenario.as_deref())?;
    let spec = config::build(&s, Some(&name))?;
    let outcome = cli::run_scenario(&spec, &args.out)?;
    print!("{}", cli::summary(&outcome));
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = run(&args);
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    ExitCode::from(cli::exit_code(&result) as u8)
}
