use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use lumistack_core::codec::{decode_focus_map, encode_depth_map, encode_focus_map, encode_png};
use lumistack_core::focusmap::{estimate_focus_map, FocusEstimate, FocusParams};
use lumistack_core::optics::{
    fit_focus_curve, label_depths, CalibrationModel, CalibrationTable, FitWeighting,
};
use lumistack_core::render::{extended_focus, perspective_sweep, refocus as refocus_slab, refocus_at_point};
use lumistack_core::sharpness::ScoreConfig;
use lumistack_core::slab_file::{encode_slab, read_slab};
use lumistack_core::synth::{synthesize_stack, three_layer_scene};
use lumistack_core::tomography::{aperture_scale_for_parallax, reconstruct_slab, LightFieldSlab};
use lumistack_core::{DepthMap, FocalStack, FocusMap};
use serde::{Deserialize, Serialize};

use crate::manifest::{ImageEntry, Manifest, Params};
use crate::output::Outputs;
use crate::{Internal, Tuning, Weighting};

pub const DEFAULT_U_SAMPLES: usize = 33;
pub const DEFAULT_MAX_PARALLAX: f64 = 8.0;

fn commit(out: Outputs) -> anyhow::Result<()> {
    out.commit().map_err(|e| Internal(format!("{e:#}")).into())
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("plain data serializes");
    s.push(b'\n');
    s
}

/// Calibration model as written by `calibrate`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub param_min: f64,
    pub param_max: f64,
    pub weighting: String,
    pub rows: Vec<RowFit>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RowFit {
    pub focus_param: f64,
    pub midpoint_m: f64,
    pub fitted_m: f64,
    pub residual_m: f64,
}

impl ModelFile {
    fn model(&self) -> CalibrationModel {
        CalibrationModel {
            slope: self.slope,
            intercept: self.intercept,
            r_squared: self.r_squared,
            param_min: self.param_min,
            param_max: self.param_max,
        }
    }
}

pub fn calibrate(table: &Path, out: &Path, weighting: Weighting) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(table).with_context(|| format!("reading {}", table.display()))?;
    let table = CalibrationTable::parse(&text)?;
    let (w, name) = match weighting {
        Weighting::Interval => (FitWeighting::InverseIntervalVariance, "inverse-interval-variance"),
        Weighting::Uniform => (FitWeighting::Uniform, "uniform"),
        Weighting::LastRow => (FitWeighting::LastRowScaled(0.25), "last-row-0.25"),
    };
    let model = fit_focus_curve(&table, w)?;
    let residuals = model.residuals(&table)?;
    let rows: Vec<RowFit> = table
        .rows()
        .iter()
        .zip(&residuals)
        .map(|(r, &res)| RowFit {
            focus_param: r.focus_param,
            midpoint_m: r.midpoint(),
            fitted_m: r.midpoint() + res,
            residual_m: res,
        })
        .collect();
    println!("1/D = {:e} * F + {}   (R^2 = {:.5})", model.slope, model.intercept, model.r_squared);
    println!("{:>12} {:>10} {:>10} {:>10}", "focus_param", "mid_m", "fit_m", "resid_m");
    for r in &rows {
        println!("{:>12} {:>10.4} {:>10.4} {:>10.4}", r.focus_param, r.midpoint_m, r.fitted_m, r.residual_m);
    }
    let file = ModelFile {
        slope: model.slope,
        intercept: model.intercept,
        r_squared: model.r_squared,
        param_min: model.param_min,
        param_max: model.param_max,
        weighting: name.into(),
        rows,
    };
    let mut outputs = Outputs::new();
    outputs.add(out, json(&file));
    commit(outputs)
}

fn focus_params(params: &Params, tuning: &Tuning) -> anyhow::Result<FocusParams> {
    let defaults = FocusParams::default();
    let scores = match params.score_steps {
        Some(m) => ScoreConfig::uniform(m)?,
        None => defaults.scores,
    };
    let lambda = tuning.lambda.or(params.lambda).unwrap_or(defaults.lambda);
    if !(lambda.is_finite() && lambda >= 0.0) {
        bail!("lambda must be non-negative, got {lambda}");
    }
    let median_radius = tuning.median_radius.or(params.median_radius).unwrap_or(defaults.median_radius);
    Ok(FocusParams { scores, lambda, median_radius })
}

fn read_focus_map(path: &Path, stack: &FocalStack) -> anyhow::Result<FocusMap> {
    let bytes = std::fs::read(path).with_context(|| format!("reading focus map {}", path.display()))?;
    let fm = decode_focus_map(&bytes, stack.len()).with_context(|| format!("decoding {}", path.display()))?;
    if fm.width() != stack.width() || fm.height() != stack.height() {
        bail!("focus map is {}x{}, stack is {}x{}", fm.width(), fm.height(), stack.width(), stack.height());
    }
    Ok(fm)
}

fn focus_map_for(
    m: &Manifest,
    stack: &FocalStack,
    given: Option<&Path>,
    tuning: &Tuning,
) -> anyhow::Result<(FocusMap, Option<FocusEstimate>)> {
    match given {
        Some(p) => Ok((read_focus_map(p, stack)?, None)),
        None => {
            let est = estimate_focus_map(stack, &focus_params(&m.params, tuning)?)?;
            Ok((est.map.clone(), Some(est)))
        }
    }
}

fn resolve_depths(m: &Manifest, stack: &FocalStack, model: Option<&Path>) -> anyhow::Result<Vec<f64>> {
    let model = match model {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading model {}", p.display()))?;
            let file: ModelFile = serde_json::from_str(&text).with_context(|| format!("parsing model {}", p.display()))?;
            Some(file.model())
        }
        None => m.calibration_model()?,
    };
    Ok(label_depths(stack.meta(), model.as_ref())?)
}

#[derive(Serialize)]
struct FocusSidecar {
    num_labels: usize,
    score_steps: usize,
    lambda: f64,
    median_radius: usize,
    deltas: Vec<f64>,
    textureless: Vec<bool>,
    initial_energy: f64,
    energy: f64,
}

pub fn focusmap(manifest: &Path, out: &Path, tuning: &Tuning) -> anyhow::Result<()> {
    let m = Manifest::load(manifest)?;
    let stack = m.load_stack()?;
    let params = focus_params(&m.params, tuning)?;
    let est = estimate_focus_map(&stack, &params)?;
    let sidecar = FocusSidecar {
        num_labels: stack.len(),
        score_steps: params.scores.steps(),
        lambda: params.lambda,
        median_radius: params.median_radius,
        deltas: est.deltas.clone(),
        textureless: est.textureless.clone(),
        initial_energy: est.initial_energy,
        energy: est.energy,
    };
    let mut outputs = Outputs::new();
    outputs.add(out.join("focus.png"), encode_focus_map(&est.map)?);
    outputs.add(out.join("focus.json"), json(&sidecar));
    commit(outputs)
}

#[derive(Serialize)]
struct DepthSidecar {
    png_units: &'static str,
    png_max_mm: u16,
    label_depths_m: Vec<f64>,
}

pub fn depthmap(
    manifest: &Path,
    out: &Path,
    model: Option<&Path>,
    focus_map: Option<&Path>,
    tuning: &Tuning,
) -> anyhow::Result<()> {
    let m = Manifest::load(manifest)?;
    let stack = m.load_stack()?;
    let depths = resolve_depths(&m, &stack, model)?;
    let (fm, _) = focus_map_for(&m, &stack, focus_map, tuning)?;
    let dm = DepthMap::from_labels(&fm, depths.clone())?;
    let sidecar = DepthSidecar { png_units: "millimetres", png_max_mm: u16::MAX, label_depths_m: depths };
    let mut outputs = Outputs::new();
    outputs.add(out.join("depth.png"), encode_depth_map(&dm)?);
    outputs.add(out.join("depth.json"), json(&sidecar));
    commit(outputs)
}

pub fn extended(manifest: &Path, out: &Path, focus_map: Option<&Path>, tuning: &Tuning) -> anyhow::Result<()> {
    let m = Manifest::load(manifest)?;
    let stack = m.load_stack()?;
    let (fm, _) = focus_map_for(&m, &stack, focus_map, tuning)?;
    let mut outputs = Outputs::new();
    outputs.add(out, encode_png(&extended_focus(&stack, &fm)?)?);
    commit(outputs)
}

pub struct ReconstructOptions {
    pub model: Option<PathBuf>,
    pub focus_map: Option<PathBuf>,
    pub u_samples: Option<usize>,
    pub max_parallax: Option<f64>,
    pub tuning: Tuning,
}

pub fn reconstruct(manifest: &Path, out: &Path, opts: ReconstructOptions) -> anyhow::Result<()> {
    let m = Manifest::load(manifest)?;
    let stack = m.load_stack()?;
    let u = opts.u_samples.or(m.params.u_samples).unwrap_or(DEFAULT_U_SAMPLES);
    if u == 0 || u.is_multiple_of(2) {
        bail!("u sample count must be odd, got {u}");
    }
    let depths = resolve_depths(&m, &stack, opts.model.as_deref())?;
    let f = m.focal_length_m();
    let a = match (opts.max_parallax, m.params.aperture_scale) {
        (None, Some(a)) => a,
        (p, _) => {
            let p = p.or(m.params.max_parallax).unwrap_or(DEFAULT_MAX_PARALLAX);
            aperture_scale_for_parallax(&depths, f, p, u)?
        }
    };
    let (fm, _) = focus_map_for(&m, &stack, opts.focus_map.as_deref(), &opts.tuning)?;
    let dm = DepthMap::from_labels(&fm, depths)?;
    let slab = reconstruct_slab(&stack, &fm, &dm, f, a, u)?;
    let mut outputs = Outputs::new();
    outputs.add(out, encode_slab(&slab));
    commit(outputs)
}

fn load_slab(path: &Path) -> anyhow::Result<LightFieldSlab> {
    let file = std::fs::File::open(path).with_context(|| format!("opening slab {}", path.display()))?;
    read_slab(std::io::BufReader::new(file)).with_context(|| format!("reading slab {}", path.display()))
}

pub fn sweep(slab: &Path, out: &Path, u_min: i32, u_max: i32, frames: usize) -> anyhow::Result<()> {
    let slab = load_slab(slab)?;
    let views = perspective_sweep(&slab, u_min, u_max, frames)?;
    let mut outputs = Outputs::new();
    for (i, (u, img)) in views.iter().enumerate() {
        outputs.add(out.join(format!("frame_{i:04}.png")), encode_png(img)?);
        println!("frame_{i:04}.png u={u}");
    }
    commit(outputs)
}

fn parse_click(s: &str) -> anyhow::Result<(usize, usize)> {
    let (x, y) = s.split_once(',').with_context(|| format!("click `{s}` is not `x,y`"))?;
    let x = x.trim().parse().with_context(|| format!("bad click x `{x}`"))?;
    let y = y.trim().parse().with_context(|| format!("bad click y `{y}`"))?;
    Ok((x, y))
}

pub fn refocus(
    slab: &Path,
    out: &Path,
    depth: Option<f64>,
    click: Option<&str>,
    focus_map: Option<&Path>,
) -> anyhow::Result<()> {
    let slab = load_slab(slab)?;
    let (img, depth_m) = match (depth, click) {
        (Some(d), None) => {
            let slope = slab.meta().slope_for_depth(d)?;
            (refocus_slab(&slab, slope), d)
        }
        (None, Some(c)) => {
            let (x, y) = parse_click(c)?;
            let path = focus_map.context("--click needs --focus-map")?;
            let bytes = std::fs::read(path).with_context(|| format!("reading focus map {}", path.display()))?;
            let fm = decode_focus_map(&bytes, slab.meta().layers.len())?;
            let r = refocus_at_point(&slab, &fm, x, y)?;
            (r.image, r.depth_m)
        }
        _ => bail!("give exactly one of --depth or --click"),
    };
    let mut outputs = Outputs::new();
    outputs.add(out, encode_png(&img)?);
    commit(outputs)?;
    println!("depth_m={depth_m}");
    Ok(())
}

pub fn serve(
    slab: &Path,
    focus_map: &Path,
    extended: Option<&Path>,
    viewer: Option<PathBuf>,
    host: IpAddr,
    port: u16,
) -> anyhow::Result<()> {
    let scene = lumistack_service::Scene::load(slab, focus_map, extended)?.with_viewer_dir(viewer);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Internal(format!("async runtime: {e}")))?;
    runtime
        .block_on(lumistack_service::serve(Arc::new(scene), SocketAddr::new(host, port)))
        .with_context(|| format!("serving on {host}:{port}"))
}

pub fn synth(out: &Path, width: usize, height: usize, u_samples: usize) -> anyhow::Result<()> {
    if width < 16 || height < 16 {
        bail!("synthetic scenes need at least 16x16 pixels");
    }
    let scene = three_layer_scene(width, height);
    let s = synthesize_stack(&scene, u_samples)?;
    let mut outputs = Outputs::new();
    let mut images = Vec::new();
    for (k, (img, layer)) in s.stack.images().iter().zip(&scene.layers).enumerate() {
        let name = format!("image_{}.png", k + 1);
        outputs.add(out.join(&name), encode_png(img)?);
        images.push(ImageEntry { path: name.into(), focus_param: None, focus_distance_m: Some(layer.depth_m) });
    }
    let manifest = Manifest::new(
        scene.focal_length_m * 1000.0,
        Params { u_samples: Some(u_samples), aperture_scale: Some(scene.aperture_scale), ..Params::default() },
        images,
    );
    let text = toml::to_string(&manifest).map_err(|e| Internal(format!("manifest: {e}")))?;
    outputs.add(out.join("manifest.toml"), text.into_bytes());
    outputs.add(out.join("true_focus.png"), encode_focus_map(&s.true_focus)?);
    outputs.add(out.join("ground_truth.lfslab"), encode_slab(&s.ground_truth));
    for p in outputs.paths() {
        println!("{}", p.display());
    }
    commit(outputs)
}
