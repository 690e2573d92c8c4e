//! Run the HTTP session API with the demo engine and talk to it.
//!
//! ```text
//! cargo run --example serve            # one scripted dialogue, then exit
//! cargo run --example serve -- --wait  # keep serving on 127.0.0.1:8080
//! ```

use kgclarify::demo;
use kgclarify::service::{self, AppState, ServiceConfig};
use serde_json::{json, Value};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let wait = std::env::args().any(|a| a == "--wait");
    let cfg = ServiceConfig::default();
    let bind = if wait { cfg.bind } else { "127.0.0.1:0".parse()? };
    let state = AppState::new(demo::demo_engine(), cfg);

    let runtime = tokio::runtime::Runtime::new()?;
    let listener = runtime.block_on(tokio::net::TcpListener::bind(bind))?;
    let base = format!("http://{}", listener.local_addr()?);
    println!("listening on {base}");
    if wait {
        return Ok(runtime.block_on(service::serve(listener, state))?);
    }
    runtime.spawn(service::serve(listener, state));

    let http = reqwest::blocking::Client::new();
    let created: Value = http
        .post(format!("{base}/v1/sessions"))
        .json(&json!({ "query": demo::DEMO_QUERY, "variant": "full" }))
        .send()?
        .json()?;
    println!("POST /v1/sessions\n{created:#}");
    let id = created["session_id"].as_str().unwrap_or_default().to_string();

    for (i, answer) in demo::DEMO_ANSWERS.iter().enumerate() {
        let stop = i + 1 == demo::DEMO_ANSWERS.len();
        let resp: Value = http
            .post(format!("{base}/v1/sessions/{id}/answers"))
            .json(&json!({ "answer": answer, "stop": stop }))
            .send()?
            .json()?;
        println!("POST /v1/sessions/{id}/answers\n{resp:#}");
    }

    let resp = http.delete(format!("{base}/v1/sessions/{id}")).send()?;
    println!("DELETE /v1/sessions/{id} -> {}", resp.status());
    Ok(())
}
