use std::path::PathBuf;

use anyhow::{bail, Context};

use dentkg_service::{router, AppState, Engine, ServiceConfig};

fn config_path() -> anyhow::Result<Option<PathBuf>> {
    let mut args = std::env::args().skip(1);
    let mut path = std::env::var_os("DENTKG_CONFIG").map(PathBuf::from);
    while let Some(a) = args.next() {
        match a.as_str() {
            "--config" => path = Some(args.next().context("--config needs a path")?.into()),
            "-h" | "--help" => {
                println!("usage: dentkg-serve [--config PATH]\n\nSettings may also come from DENTKG_* environment variables.");
                std::process::exit(0);
            }
            other => bail!("unexpected argument `{other}`"),
        }
    }
    Ok(path)
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let config = ServiceConfig::load(config_path()?.as_deref())?;
    let state = AppState::loading(config.clone())?;
    let listener = tokio::net::TcpListener::bind(&config.bind)
        .await
        .with_context(|| format!("binding {}", config.bind))?;
    eprintln!("listening on {}", listener.local_addr()?);

    let loader = state.clone();
    tokio::task::spawn_blocking(move || match Engine::load(loader.config()) {
        Ok(engine) => {
            loader.install(engine);
            eprintln!("graph and classifier loaded");
        }
        Err(e) => {
            eprintln!("startup failed: {e}");
            std::process::exit(1);
        }
    });

    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
