//! Read-only HTTP access to one tileset.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use anyhow::{Context, Result};
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;

use cartogan_core::dataset::{parse_tile_path, DatasetManifest, MANIFEST_FILE};
use cartogan_core::geo::TileCoord;
use cartogan_core::imageio::TileFormat;

/// `/tiles/<z>/<x>/<y>.<ext>` to its coordinate and format.
pub fn parse_tile_request(path: &str) -> Option<(TileCoord, TileFormat)> {
    parse_tile_path(path.strip_prefix("/tiles/")?)
}

struct Tileset {
    manifest: Bytes,
    tiles: HashMap<(TileCoord, &'static str), Bytes>,
}

/// Every listed file is read (and hash-checked) once up front; the files
/// are immutable for the server's lifetime.
fn load(root: &Path) -> Result<Tileset> {
    let m = DatasetManifest::load(root)?;
    let manifest = std::fs::read(root.join(MANIFEST_FILE)).context("reading manifest")?;
    let mut tiles = HashMap::new();
    for e in &m.entries {
        let Some((t, fmt)) = e.tile.and_then(|_| parse_tile_path(&e.path)) else {
            continue;
        };
        let bytes = std::fs::read(root.join(&e.path)).with_context(|| format!("reading {}", e.path))?;
        tiles.insert((t, fmt.extension()), Bytes::from(bytes));
    }
    Ok(Tileset { manifest: Bytes::from(manifest), tiles })
}

async fn manifest(State(ts): State<Arc<Tileset>>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], ts.manifest.clone()).into_response()
}

async fn tile(State(ts): State<Arc<Tileset>>, UrlPath(rest): UrlPath<String>) -> Response {
    let found = parse_tile_path(&rest).and_then(|(t, fmt)| Some((fmt, ts.tiles.get(&(t, fmt.extension()))?.clone())));
    match found {
        Some((fmt, body)) => ([(header::CONTENT_TYPE, fmt.content_type())], body).into_response(),
        None => (StatusCode::NOT_FOUND, "tile not found\n").into_response(),
    }
}

pub fn router(root: &Path) -> Result<Router> {
    let ts = Arc::new(load(root)?);
    Ok(Router::new()
        .route("/manifest.json", get(manifest))
        .route("/tiles/{*rest}", get(tile))
        .with_state(ts))
}

/// Bind 127.0.0.1:`port` (0 picks a free port), announce the address on
/// `out` and serve until the process ends.
pub fn serve_blocking(root: &Path, port: u16, threads: usize, out: &mut dyn Write) -> Result<()> {
    let app = router(root)?;
    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(threads).enable_io().build()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(("127.0.0.1", port))
            .await
            .with_context(|| format!("cannot bind 127.0.0.1:{port}"))?;
        writeln!(out, "listening on http://{}", listener.local_addr()?)?;
        out.flush()?;
        axum::serve(listener, app).await.context("server failed")
    })
}
