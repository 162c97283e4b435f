use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use proactive_core::provider::ScriptedProvider;
use proactive_core::tasks::TaskRegistry;
use proactive_core::telemetry::metrics::{compute_metrics, render_csv, render_table, MetricsOptions, Weighting};
use proactive_core::telemetry::read_log;
use proactive_core::telemetry::replay::{replay_session, select_session, ReplaySource};
use proactive_core::telemetry::schedule::assign_condition;
use proactive_gateway::config::{GatewayConfig, ProviderConfig};

#[derive(Parser)]
#[command(name = "proactive", version, about = "Proactive programming assistant gateway and log tools")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the HTTP gateway.
    Serve {
        /// TOML config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `server.bind`.
        #[arg(long)]
        bind: Option<String>,
        /// Keep raw provider request/response bodies in telemetry.
        #[arg(long)]
        log_provider_io: bool,
    },
    /// Interaction metrics from telemetry logs.
    Analyze {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(long)]
        by_condition: bool,
        #[arg(long)]
        by_category: bool,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[arg(long, value_enum, default_value_t = WeightingArg::Participant)]
        weighting: WeightingArg,
    },
    /// Re-run a logged session and compare the logs.
    Replay {
        log: PathBuf,
        /// `recorded` reuses logged model replies; `scripted:<dir>` asks a
        /// scripted provider instead.
        #[arg(long, default_value = "recorded")]
        provider: String,
        /// Needed when the log holds more than one session.
        #[arg(long)]
        session: Option<String>,
        /// Write the replayed log here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Condition order and task assignment for a participant seed.
    Schedule {
        #[arg(long)]
        seed: u64,
        /// Print this many consecutive seeds.
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightingArg {
    Participant,
    Task,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Cmd::Serve {
            config,
            bind,
            log_provider_io,
        } => {
            let mut cfg = match config {
                Some(p) => GatewayConfig::load(p)?,
                None => GatewayConfig::default(),
            };
            if let Some(b) = bind {
                cfg.server.bind = b;
            }
            if let ProviderConfig::Http(http) = &mut cfg.provider {
                http.log_io |= log_provider_io;
            }
            tokio::runtime::Runtime::new()?.block_on(proactive_gateway::serve(cfg))?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Analyze {
            logs,
            by_condition,
            by_category,
            format,
            weighting,
        } => {
            let weighting = match weighting {
                WeightingArg::Participant => Weighting::Participant,
                WeightingArg::Task => Weighting::Task,
            };
            let m = compute_metrics(&logs, MetricsOptions { by_condition, weighting })?;
            if m.malformed_lines > 0 {
                eprintln!("warning: skipped {} malformed lines", m.malformed_lines);
            }
            match format {
                Format::Table => print!("{}", render_table(&m, by_category)),
                Format::Csv => print!("{}", render_csv(&m, by_category)),
                Format::Json => println!("{}", serde_json::to_string_pretty(&m)?),
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Replay {
            log,
            provider,
            session,
            out,
        } => {
            let source = if provider == "recorded" {
                ReplaySource::Recorded
            } else if let Some(dir) = provider.strip_prefix("scripted:") {
                ReplaySource::Provider(Arc::new(ScriptedProvider::from_dir(dir)?))
            } else {
                bail!("unknown provider `{provider}`; use `recorded` or `scripted:<dir>`");
            };
            let contents = read_log(&log).with_context(|| log.display().to_string())?;
            let events = select_session(&contents, session.as_deref())?;
            let report = replay_session(&events, source)?;
            if let Some(out) = out {
                let mut text = proactive_core::telemetry::header_line();
                text.push('\n');
                for line in &report.replayed {
                    text.push_str(line);
                    text.push('\n');
                }
                std::fs::write(&out, text).with_context(|| out.display().to_string())?;
            }
            match report.first_divergence() {
                None => {
                    println!("{}: {} events replayed identically", report.session_id, report.original.len());
                    Ok(ExitCode::SUCCESS)
                }
                Some(i) => {
                    println!("{}: logs diverge at event {i}", report.session_id);
                    println!("- {}", report.original.get(i).map_or("<end of log>", String::as_str));
                    println!("+ {}", report.replayed.get(i).map_or("<end of log>", String::as_str));
                    Ok(ExitCode::FAILURE)
                }
            }
        }
        Cmd::Schedule { seed, count, format } => {
            let registry = TaskRegistry::with_builtins();
            if let Format::Csv = format {
                println!("seed,variant,block,condition,first_task,second_task");
            }
            for s in seed..seed.saturating_add(count) {
                let sch = assign_condition(s, &registry)?;
                match format {
                    Format::Json => println!("{}", serde_json::to_string(&sch)?),
                    Format::Csv => {
                        for (i, b) in sch.blocks.iter().enumerate() {
                            println!("{s},{},{},{},{},{}", sch.proactive_variant, i + 1, b.condition, b.tasks[0], b.tasks[1]);
                        }
                    }
                    Format::Table => {
                        println!("seed {s} (variant {})", sch.proactive_variant);
                        for (i, b) in sch.blocks.iter().enumerate() {
                            println!("  {}. {:<20} {} -> {}", i + 1, b.condition, b.tasks[0], b.tasks[1]);
                        }
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
