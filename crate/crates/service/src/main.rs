use balance_kit_service::{app, ServiceConfig};

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let port: u16 = std::env::var("PORT").ok().and_then(|p| p.parse().ok()).unwrap_or(8080);
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    eprintln!("balance-kit-serve listening on {}", listener.local_addr()?);
    axum::serve(listener, app(ServiceConfig::from_env())).await
}
