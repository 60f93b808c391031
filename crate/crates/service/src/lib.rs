//! HTTP endpoints over an immutable light field slab and its focus map.
//!
//! | route | body |
//! |---|---|
//! | `GET /meta` | JSON: dimensions, `u` range, per-label depth and slope |
//! | `GET /view/{u}` | PNG of the view at aperture position `u` (404 outside the range) |
//! | `GET /refocus?x=&y=` | PNG refocused on the layer under `(x, y)`; header `X-Chosen-Depth-M` |
//! | `GET /depth.png` | 16-bit depth in millimetres |
//! | `GET /focus.png` | 8-bit focus labels |
//! | `GET /extended.png` | all-in-focus image |
//! | `GET /`, `GET /{file}` | static viewer files, when a viewer directory is configured |
//!
//! Every response carries `Cache-Control: immutable` and a permissive CORS origin.

use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, OnceLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use lumistack_core::codec::{encode_depth_map, encode_focus_map, encode_png, read_image};
use lumistack_core::render::{refocus_label, view_at};
use lumistack_core::slab_file::read_slab;
use lumistack_core::tomography::LightFieldSlab;
use lumistack_core::{DepthMap, FocusMap, Image};
use serde::{Deserialize, Serialize};

pub const CACHE_CONTROL: &str = "public, max-age=31536000, immutable";
pub const DEPTH_HEADER: &str = "x-chosen-depth-m";

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Core(#[from] lumistack_core::Error),
    #[error("{0}")]
    Mismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LabelInfo {
    pub label: u16,
    pub depth_m: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Meta {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub u_samples: usize,
    pub u_min: i32,
    pub u_max: i32,
    pub num_labels: usize,
    pub reference_label: u16,
    pub focal_length_m: f64,
    pub aperture_scale: f64,
    pub labels: Vec<LabelInfo>,
}

/// Loaded products plus the render memos. Views are cached per `u`, refocused
/// images per label.
pub struct Scene {
    slab: LightFieldSlab,
    focus: FocusMap,
    depth: DepthMap,
    extended: Option<Image>,
    viewer_dir: Option<PathBuf>,
    meta: Meta,
    views: Vec<OnceLock<Bytes>>,
    refocused: Vec<OnceLock<(Bytes, f64)>>,
    focus_png: OnceLock<Bytes>,
    depth_png: OnceLock<Bytes>,
    extended_png: OnceLock<Bytes>,
}

impl Scene {
    /// `extended` defaults to the `u = 0` view, which is the same image.
    pub fn new(slab: LightFieldSlab, focus: FocusMap, extended: Option<Image>) -> Result<Self, ServiceError> {
        if focus.width() != slab.width() || focus.height() != slab.height() {
            return Err(ServiceError::Mismatch(format!(
                "focus map is {}x{}, slab is {}x{}",
                focus.width(),
                focus.height(),
                slab.width(),
                slab.height()
            )));
        }
        if let Some(img) = &extended {
            if img.width() != slab.width() || img.height() != slab.height() {
                return Err(ServiceError::Mismatch("extended image and slab differ in size".into()));
            }
        }
        let sm = slab.meta();
        let k = focus.num_labels();
        let mut label_depths = Vec::with_capacity(k);
        for label in 1..=k as u16 {
            let layer = sm
                .layer(label)
                .ok_or_else(|| ServiceError::Mismatch(format!("slab has no layer for label {label}")))?;
            label_depths.push(layer.depth_m);
        }
        let depth = DepthMap::from_labels(&focus, label_depths)?;
        let half = slab.half_range();
        let meta = Meta {
            width: slab.width(),
            height: slab.height(),
            channels: slab.channels(),
            u_samples: slab.u_samples(),
            u_min: -half,
            u_max: half,
            num_labels: k,
            reference_label: sm.reference_label,
            focal_length_m: sm.focal_length_m,
            aperture_scale: sm.aperture_scale,
            labels: sm
                .layers
                .iter()
                .map(|l| LabelInfo { label: l.label, depth_m: l.depth_m, slope: l.slope })
                .collect(),
        };
        Ok(Self {
            views: (0..slab.u_samples()).map(|_| OnceLock::new()).collect(),
            refocused: (0..k).map(|_| OnceLock::new()).collect(),
            slab,
            focus,
            depth,
            extended,
            viewer_dir: None,
            meta,
            focus_png: OnceLock::new(),
            depth_png: OnceLock::new(),
            extended_png: OnceLock::new(),
        })
    }

    /// Reads a slab file, a focus-map PNG and optionally an extended-focus PNG.
    pub fn load(slab: &Path, focus: &Path, extended: Option<&Path>) -> Result<Self, ServiceError> {
        let slab = read_slab(std::io::BufReader::new(std::fs::File::open(slab)?))?;
        let k = slab.meta().layers.len();
        let focus = lumistack_core::codec::decode_focus_map(&std::fs::read(focus)?, k)?;
        let extended = extended.map(read_image).transpose()?;
        Self::new(slab, focus, extended)
    }

    pub fn with_viewer_dir(mut self, dir: Option<PathBuf>) -> Self {
        self.viewer_dir = dir;
        self
    }

    pub fn meta(&self) -> &Meta {
        &self.meta
    }

    pub fn slab(&self) -> &LightFieldSlab {
        &self.slab
    }

    /// PNG of the view at `u`, `None` outside the range.
    pub fn view_png(&self, u: i32) -> Option<Bytes> {
        let half = self.slab.half_range();
        if u.abs() > half {
            return None;
        }
        let slot = &self.views[(u + half) as usize];
        Some(
            slot.get_or_init(|| {
                let img = view_at(&self.slab, u).expect("u checked against the range");
                Bytes::from(encode_png(&img).expect("in-memory PNG encoding"))
            })
            .clone(),
        )
    }

    /// PNG refocused on the label under `(x, y)` and the depth used, `None` off the image.
    pub fn refocus_png(&self, x: usize, y: usize) -> Option<(Bytes, f64)> {
        if x >= self.focus.width() || y >= self.focus.height() {
            return None;
        }
        let label = self.focus.get(x, y);
        let slot = &self.refocused[label as usize - 1];
        Some(
            slot.get_or_init(|| {
                let (img, depth, _) = refocus_label(&self.slab, label).expect("labels validated at load");
                (Bytes::from(encode_png(&img).expect("in-memory PNG encoding")), depth)
            })
            .clone(),
        )
    }

    pub fn focus_png(&self) -> Bytes {
        self.focus_png
            .get_or_init(|| Bytes::from(encode_focus_map(&self.focus).expect("label count checked at load")))
            .clone()
    }

    pub fn depth_png(&self) -> Bytes {
        self.depth_png
            .get_or_init(|| Bytes::from(encode_depth_map(&self.depth).expect("in-memory PNG encoding")))
            .clone()
    }

    pub fn extended_png(&self) -> Bytes {
        self.extended_png
            .get_or_init(|| match &self.extended {
                Some(img) => Bytes::from(encode_png(img).expect("in-memory PNG encoding")),
                None => self.view_png(0).expect("u = 0 is always in range"),
            })
            .clone()
    }
}

pub fn router(scene: Arc<Scene>) -> Router {
    Router::new()
        .route("/meta", get(meta))
        .route("/view/{u}", get(view))
        .route("/refocus", get(refocus))
        .route("/depth.png", get(depth))
        .route("/focus.png", get(focus))
        .route("/extended.png", get(extended))
        .route("/", get(index))
        .route("/{file}", get(static_file))
        .fallback(|| async { not_found() })
        .layer(axum::middleware::map_response(add_headers))
        .with_state(scene)
}

async fn add_headers(mut res: Response) -> Response {
    let h = res.headers_mut();
    h.insert(header::CACHE_CONTROL, HeaderValue::from_static(CACHE_CONTROL));
    h.insert(header::ACCESS_CONTROL_ALLOW_ORIGIN, HeaderValue::from_static("*"));
    h.insert(header::ACCESS_CONTROL_EXPOSE_HEADERS, HeaderValue::from_static(DEPTH_HEADER));
    res
}

fn png(body: Bytes) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], body).into_response()
}

fn not_found() -> Response {
    (StatusCode::NOT_FOUND, "not found").into_response()
}

/// Runs CPU-bound rendering off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    tokio::task::spawn_blocking(f).await.expect("render task panicked")
}

async fn meta(State(scene): State<Arc<Scene>>) -> Response {
    axum::Json(scene.meta.clone()).into_response()
}

async fn view(State(scene): State<Arc<Scene>>, UrlPath(u): UrlPath<String>) -> Response {
    let Ok(u) = u.parse::<i32>() else {
        return (StatusCode::BAD_REQUEST, "view index must be an integer").into_response();
    };
    match blocking(move || scene.view_png(u)).await {
        Some(body) => png(body),
        None => not_found(),
    }
}

#[derive(Deserialize)]
struct Click {
    x: Option<String>,
    y: Option<String>,
}

async fn refocus(State(scene): State<Arc<Scene>>, Query(click): Query<Click>) -> Response {
    let parse = |v: Option<String>| v.and_then(|s| s.parse::<usize>().ok());
    let (Some(x), Some(y)) = (parse(click.x), parse(click.y)) else {
        return (StatusCode::BAD_REQUEST, "x and y must be non-negative integers").into_response();
    };
    match blocking(move || scene.refocus_png(x, y)).await {
        Some(out) => {
            let depth = HeaderValue::from_str(&out.1.to_string()).expect("a float formats as a header value");
            let mut res = png(out.0);
            res.headers_mut().insert(DEPTH_HEADER, depth);
            res
        }
        None => (StatusCode::BAD_REQUEST, "click outside the image").into_response(),
    }
}

async fn depth(State(scene): State<Arc<Scene>>) -> Response {
    png(blocking(move || scene.depth_png()).await)
}

async fn focus(State(scene): State<Arc<Scene>>) -> Response {
    png(blocking(move || scene.focus_png()).await)
}

async fn extended(State(scene): State<Arc<Scene>>) -> Response {
    png(blocking(move || scene.extended_png()).await)
}

async fn index(State(scene): State<Arc<Scene>>) -> Response {
    serve_static(&scene, "index.html").await
}

async fn static_file(State(scene): State<Arc<Scene>>, UrlPath(file): UrlPath<String>) -> Response {
    serve_static(&scene, &file).await
}

async fn serve_static(scene: &Scene, file: &str) -> Response {
    let Some(dir) = &scene.viewer_dir else {
        return not_found();
    };
    let rel = Path::new(file);
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return not_found();
    }
    match tokio::fs::read(dir.join(rel)).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(rel))], bytes).into_response(),
        Err(_) => not_found(),
    }
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") | Some("mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("png") => "image/png",
        Some("svg") => "image/svg+xml",
        _ => "application/octet-stream",
    }
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(scene: Arc<Scene>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("serving on http://{}", listener.local_addr()?);
    axum::serve(listener, router(scene))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
