use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use curvemvg::scene::{export_samples, parse_int_range, run, Command, RunOptions, SceneConfig, SceneError};
use log::{error, info};

/// Space curves in multi-view geometry: simulation, Kruppa checks,
/// reconstruction and trajectory classification.
#[derive(Debug, Parser)]
#[command(name = "curvemvg", version)]
struct Cli {
    /// simulate | kruppa-check | kruppa-dim | reconstruct-points | reconstruct-dual |
    /// reconstruct-chow | classify-motion | consistency-tables
    command: String,
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config image noise sigma.
    #[arg(long)]
    noise: Option<f64>,
    /// Report path; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for samples.csv.
    #[arg(long)]
    export_csv: Option<PathBuf>,
    #[arg(long)]
    parallel: bool,
    /// Degree range for consistency-tables, e.g. 2..4.
    #[arg(long, default_value = "2..4")]
    d: String,
    /// Class range for consistency-tables, e.g. 2..8.
    #[arg(long, default_value = "2..8")]
    m: String,
}

fn execute(cli: &Cli) -> Result<i32, SceneError> {
    let command: Command = cli.command.parse()?;
    let cfg = SceneConfig::from_path(&cli.config)?;
    let opts = RunOptions {
        seed: cli.seed,
        noise: cli.noise,
        d_range: parse_int_range(&cli.d)?,
        m_range: parse_int_range(&cli.m)?,
        parallel: cli.parallel,
    };
    let report = run(command, &cfg, &opts)?;
    match &cli.out {
        Some(path) => {
            report.write(path)?;
            info!("report written to {}", path.display());
        }
        None => {
            let mut out = std::io::stdout().lock();
            if let Err(source) = writeln!(out, "{}", report.to_json()) {
                if source.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(SceneError::Io {
                        path: PathBuf::from("<stdout>"),
                        source,
                    });
                }
            }
        }
    }
    if let Some(dir) = &cli.export_csv {
        let path = export_samples(&report, dir)?;
        info!("{} samples written to {}", report.samples.len(), path.display());
    }
    for (key, v) in &report.verdicts {
        if *v == curvemvg::scene::Verdict::Fail {
            error!("verdict failed: {key}");
        }
    }
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
