//! Serve a report bundle over HTTP on localhost.
//!
//! ```text
//! cargo run --example serve_bundle -- report.json [port]
//! curl 'http://127.0.0.1:8080/api/transitions?horizon=12'
//! ```

use std::net::{Ipv4Addr, SocketAddr};

use cthmm::io::read_bundle_file;

fn main() -> cthmm::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "report.json".into());
    let port: u16 = args.next().and_then(|p| p.parse().ok()).unwrap_or(8080);
    let bundle = read_bundle_file(&path)?;
    println!("serving {path} on http://127.0.0.1:{port}/");
    tokio::runtime::Runtime::new()?.block_on(cthmm::serve::serve(bundle, SocketAddr::from((Ipv4Addr::LOCALHOST, port))))
}
