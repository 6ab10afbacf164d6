use clap::{Parser, ValueEnum};
use specdim::runner::{self, Command, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sub {
    GaugeCompare,
    SetDim,
    MeasureDim,
    BorelScan,
    Boole,
    Lyapunov,
    Subordinacy,
    SparseBarrier,
    RankOne,
    Sule,
    Dynamics,
}

impl Sub {
    fn command(self) -> Command {
        match self {
            Sub::GaugeCompare => Command::GaugeCompare,
            Sub::SetDim => Command::SetDim,
            Sub::MeasureDim => Command::MeasureDim,
            Sub::BorelScan => Command::BorelScan,
            Sub::Boole => Command::Boole,
            Sub::Lyapunov => Command::Lyapunov,
            Sub::Subordinacy => Command::Subordinacy,
            Sub::SparseBarrier => Command::SparseBarrier,
            Sub::RankOne => Command::RankOne,
            Sub::Sule => Command::Sule,
            Sub::Dynamics => Command::Dynamics,
        }
    }
}

/// Spectral dimension toolkit. The config file holds either a full run
/// configuration `{"command", "params", "seed"}` or just the params object.
#[derive(Debug, Parser)]
#[command(name = "specdim", version)]
struct Cli {
    #[arg(value_enum)]
    command: Sub,
    /// JSON config file; omitted means default params
    #[arg(long)]
    config: Option<PathBuf>,
    /// inline JSON params, merged over the config file's params
    #[arg(long)]
    params: Option<String>,
    /// output directory; tables go to stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// overrides the config's seed
    #[arg(long)]
    seed: Option<u64>,
}

fn load(cli: &Cli) -> Result<RunConfig, String> {
    let command = cli.command.command();
    let mut cfg = match &cli.config {
        None => RunConfig::new(command, serde_json::json!({}), 0),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("cli: io: {}: {e}", path.display()))?;
            let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| format!("cli: invalid config: {e}"))?;
            if v.get("command").is_some() {
                let cfg = RunConfig::from_value(v).map_err(|e| e.to_string())?;
                if cfg.command != command {
                    return Err(format!("cli: invalid config field `command`: file says {}, invoked as {}", cfg.command.name(), command.name()));
                }
                cfg
            } else {
                RunConfig::new(command, v, 0)
            }
        }
    };
    if let Some(p) = &cli.params {
        let extra: serde_json::Value = serde_json::from_str(p).map_err(|e| format!("cli: invalid --params: {e}"))?;
        match (cfg.params.as_object_mut(), extra) {
            (Some(base), serde_json::Value::Object(m)) => base.extend(m),
            _ => return Err("cli: invalid config field `params`: must be an object".into()),
        }
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.workers = cli.workers;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load(&cli).and_then(|cfg| runner::run(&cfg).map_err(|e| e.to_string()));
    let out = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match &cli.out {
        None => print!("{}", out.csv),
        Some(dir) => {
            let write = std::fs::create_dir_all(dir)
                .and_then(|_| std::fs::write(dir.join(out.csv_name()), &out.csv))
                .and_then(|_| std::fs::write(dir.join(out.json_name()), &out.json));
            if let Err(e) = write {
                eprintln!("error: cli: io: {e}");
                return ExitCode::from(1);
            }
        }
    }
    ExitCode::SUCCESS
}
