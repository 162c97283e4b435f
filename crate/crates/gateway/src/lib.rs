//! HTTP gateway for proactive assistant sessions, plus the command-line
//! tools around the telemetry logs.

pub mod api;
pub mod config;
pub mod error;
pub mod hub;
pub mod logs;
pub mod runner;

use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;

use proactive_core::clock::{Clock, SystemClock};
use proactive_core::condition::ConditionRegistry;
use proactive_core::provider::{EchoProvider, HttpProvider, Provider, ScriptedProvider};
use proactive_core::runner::CodeRunner;
use proactive_core::tasks::TaskRegistry;

use crate::config::{GatewayConfig, ProviderConfig};
use crate::hub::Hub;
use crate::logs::LogStore;
use crate::runner::CommandRunner;

pub fn build_provider(cfg: &ProviderConfig) -> anyhow::Result<Arc<dyn Provider>> {
    Ok(match cfg {
        ProviderConfig::Echo => Arc::new(EchoProvider),
        ProviderConfig::Scripted { dir } => Arc::new(
            ScriptedProvider::from_dir(dir).with_context(|| format!("scripted provider {}", dir.display()))?,
        ),
        ProviderConfig::Http(http) => Arc::new(HttpProvider::new(http.clone())),
    })
}

pub fn build_hub(cfg: &GatewayConfig, clock: Arc<dyn Clock>) -> anyhow::Result<Hub> {
    let mut conditions = ConditionRegistry::with_builtins();
    if let Some(path) = &cfg.conditions.registry_path {
        conditions.load_file(path)?;
    }
    let runner: Option<Arc<dyn CodeRunner>> = match &cfg.runner {
        Some(r) => Some(Arc::new(CommandRunner::new(r)?)),
        None => None,
    };
    std::fs::create_dir_all(&cfg.telemetry.dir)
        .with_context(|| format!("telemetry dir {}", cfg.telemetry.dir.display()))?;
    Ok(Hub::new(
        conditions,
        TaskRegistry::with_builtins(),
        build_provider(&cfg.provider)?,
        runner,
        LogStore::new(&cfg.telemetry),
        clock,
        Duration::from_millis(cfg.server.tick_interval_ms.max(1)),
    ))
}

/// Serve until Ctrl-C.
pub async fn serve(cfg: GatewayConfig) -> anyhow::Result<()> {
    let hub = Arc::new(build_hub(&cfg, Arc::new(SystemClock))?);
    let listener = tokio::net::TcpListener::bind(&cfg.server.bind)
        .await
        .with_context(|| format!("bind {}", cfg.server.bind))?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, api::router(hub))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
