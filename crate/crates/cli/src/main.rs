use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use wavesel::config::ExperimentConfig;
use wavesel::harness::{arm_losses, rd_dump, run_to_dir};

#[derive(Debug, Parser)]
#[command(name = "wavesel", version, about = "Cognitive FMCW radar waveform-selection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the configured policies and write curves.csv / summary.json.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeat an experiment over values of one config key.
    ///
    /// `policy.*` keys become one policy per value inside a single
    /// experiment; any other key runs one experiment per value in
    /// `<out>/<key>=<value>/`.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write one simulated range-Doppler frame as magnitude-dB CSV.
    RdDump {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        waveform: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the mean loss of every catalog entry on one run's scene.
    Arms {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        run: usize,
        #[arg(long, default_value_t = 50)]
        frames: u64,
    },
}

fn read_config_text(path: Option<&Path>) -> wavesel::Result<String> {
    match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| wavesel::Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => Ok(String::new()),
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let raw = raw.trim();
    if let Ok(i) = raw.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        return toml::Value::Float(f);
    }
    match raw {
        "true" => toml::Value::Boolean(true),
        "false" => toml::Value::Boolean(false),
        _ => toml::Value::String(raw.to_string()),
    }
}

/// Integer values are floats for keys that only accept floats (e.g. `policy.d = 0`).
fn override_value(text: &str, key: &str, raw: &str) -> wavesel::Result<ExperimentConfig> {
    let value = parse_value(raw);
    match ExperimentConfig::from_toml_with_override(text, key, value.clone()) {
        Ok(cfg) => Ok(cfg),
        Err(e) => match value {
            toml::Value::Integer(i) => {
                ExperimentConfig::from_toml_with_override(text, key, toml::Value::Float(i as f64))
            }
            _ => Err(e),
        },
    }
}

fn execute(cli: Cli) -> wavesel::Result<()> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::from_toml_str(&read_config_text(config.as_deref())?)?;
            let started = Instant::now();
            let summary = run_to_dir(&cfg, &cfg.policies()?, &out)?;
            let h = cfg.experiment.horizon;
            for p in &summary.policies {
                println!(
                    "{:<16} runs={} mean={:.4} final_window={:.4}",
                    p.policy,
                    p.runs,
                    p.mean_over(1, h),
                    p.moving_avg[h - 1]
                );
            }
            eprintln!("wrote {} in {:.1}s", out.display(), started.elapsed().as_secs_f64());
        }
        Command::Sweep {
            config,
            param,
            values,
            out,
        } => {
            let text = read_config_text(config.as_deref())?;
            if param.starts_with("policy.") {
                let mut base = ExperimentConfig::from_toml_str(&text)?;
                let policies = values
                    .iter()
                    .map(|v| Ok(override_value(&text, &param, v)?.policy))
                    .collect::<wavesel::Result<Vec<_>>>()?;
                base.experiment.policies = Vec::new();
                let summary = run_to_dir(&base, &policies, &out)?;
                for p in &summary.policies {
                    println!("{:<16} mean={:.4}", p.policy, p.mean_over(1, base.experiment.horizon));
                }
            } else {
                for v in &values {
                    let cfg = override_value(&text, &param, v)?;
                    let dir = out.join(format!("{param}={v}"));
                    let summary = run_to_dir(&cfg, &cfg.policies()?, &dir)?;
                    for p in &summary.policies {
                        println!(
                            "{param}={v:<10} {:<16} mean={:.4}",
                            p.policy,
                            p.mean_over(1, cfg.experiment.horizon)
                        );
                    }
                }
            }
        }
        Command::RdDump {
            config,
            waveform,
            seed,
            out,
        } => {
            let cfg = ExperimentConfig::from_toml_str(&read_config_text(config.as_deref())?)?;
            let map = rd_dump(&cfg, waveform, seed, &out)?;
            eprintln!(
                "wrote {}x{} map to {}",
                map.n_range(),
                map.n_doppler(),
                out.display()
            );
        }
        Command::Arms { config, run, frames } => {
            let cfg = ExperimentConfig::from_toml_str(&read_config_text(config.as_deref())?)?;
            let catalog = cfg.catalog()?;
            let losses = arm_losses(&cfg, run, frames)?;
            println!("index,bandwidth_hz,code_id,mean_loss");
            for (wf, loss) in catalog.entries().iter().zip(losses) {
                println!("{},{},{},{:.4}", wf.index, wf.bandwidth_hz, wf.code.id(), loss);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
