//! The `cfx` command-line tool and HTTP service.

pub mod args;
pub mod commands;
pub mod server;

use std::sync::Arc;

use anyhow::{Context, Result};
use cfx_core::{load_and_clean, CfModel};
use log::info;

use args::{Command, ServeArgs};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Train(a) => commands::train(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Generate(a) => commands::generate(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Embed(a) => commands::embed(&a),
        Command::Serve(a) => serve(&a),
    }
}

pub fn app_state(args: &ServeArgs) -> Result<server::AppState> {
    let model = CfModel::load(&args.model)?;
    let train = match &args.data {
        Some(path) => {
            let table = load_and_clean(path, &model.schema)?;
            Some(model.splits(&table)?.train)
        }
        None => None,
    };
    Ok(server::AppState { model, train })
}

fn serve(args: &ServeArgs) -> Result<()> {
    let state = Arc::new(app_state(args)?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let addr = format!("{}:{}", args.host, args.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        info!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, server::router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
