//! Masked back-projection of `(x, u)` epipolar images.
//!
//! Each focal-stack image is a projection of the epipolar image along the slope of
//! its focus depth. Reconstruction paints the farthest image entirely along vertical
//! lines, then overwrites with the in-focus pixels of nearer images along their
//! slopes, in order of decreasing depth. The forward model integrates the epipolar
//! image along a slope and is used both for refocusing and for synthesizing stacks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::LensGeometry;
use crate::types::{DepthMap, FocalStack, FocusMap};

/// One depth layer of the paint order. Labels at the same depth share an entry.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerEntry {
    pub labels: Vec<u16>,
    pub depth_m: f64,
    /// Pixels of x-shift per unit of `u`.
    pub slope: f64,
}

/// Paint order, farthest first; the first entry is the background at slope 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerPlan {
    entries: Vec<LayerEntry>,
    geometry: LensGeometry,
    aperture_scale: f64,
}

impl LayerPlan {
    pub fn entries(&self) -> &[LayerEntry] {
        &self.entries
    }

    pub fn background(&self) -> &LayerEntry {
        &self.entries[0]
    }

    pub fn geometry(&self) -> &LensGeometry {
        &self.geometry
    }

    pub fn aperture_scale(&self) -> f64 {
        self.aperture_scale
    }

    pub fn slope_for_depth(&self, depth_m: f64) -> Result<f64> {
        Ok(self.aperture_scale * self.geometry.parallax(depth_m)?)
    }

    pub fn label_slope(&self, label: u16) -> Option<f64> {
        self.entries.iter().find(|e| e.labels.contains(&label)).map(|e| e.slope)
    }
}

/// Plans the back-projection: the farthest label depth becomes the reference plane and
/// every label gets slope `A · tan θ`.
pub fn slopes_from_depths(label_depths: &[f64], focal_length_m: f64, aperture_scale: f64) -> Result<LayerPlan> {
    if label_depths.is_empty() {
        return Err(Error::invalid("no label depths"));
    }
    if !(aperture_scale.is_finite() && aperture_scale > 0.0) {
        return Err(Error::invalid(format!("aperture scale {aperture_scale} must be positive")));
    }
    if let Some(bad) = label_depths.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
        return Err(Error::invalid(format!("depth {bad} m must be positive and finite")));
    }
    let reference = label_depths.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let geometry = LensGeometry::new(focal_length_m, reference)?;

    let mut order: Vec<usize> = (0..label_depths.len()).collect();
    order.sort_by(|&a, &b| label_depths[b].total_cmp(&label_depths[a]).then(a.cmp(&b)));

    let mut entries: Vec<LayerEntry> = Vec::new();
    for i in order {
        let depth = label_depths[i];
        let label = i as u16 + 1;
        match entries.last_mut() {
            Some(last) if same_depth(last.depth_m, depth) => last.labels.push(label),
            _ => {
                let slope = if depth == reference { 0.0 } else { aperture_scale * geometry.parallax(depth)? };
                entries.push(LayerEntry { labels: vec![label], depth_m: depth, slope });
            }
        }
    }
    Ok(LayerPlan { entries, geometry, aperture_scale })
}

fn same_depth(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Aperture scale giving the nearest depth a total parallax of `max_parallax_px`
/// across `u_samples` views. Falls back to 1 when there is no parallax to scale.
pub fn aperture_scale_for_parallax(
    label_depths: &[f64],
    focal_length_m: f64,
    max_parallax_px: f64,
    u_samples: usize,
) -> Result<f64> {
    if !(max_parallax_px.is_finite() && max_parallax_px > 0.0) {
        return Err(Error::invalid(format!("max parallax {max_parallax_px} must be positive")));
    }
    let reference = label_depths.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let geometry = LensGeometry::new(focal_length_m, reference)?;
    let mut steepest: f64 = 0.0;
    for &d in label_depths {
        steepest = steepest.max(geometry.parallax(d)?.abs());
    }
    if steepest == 0.0 || u_samples < 2 {
        return Ok(1.0);
    }
    Ok(max_parallax_px / (steepest * (u_samples - 1) as f64))
}

fn check_u_samples(u_samples: usize) -> Result<()> {
    if u_samples == 0 || u_samples.is_multiple_of(2) {
        return Err(Error::invalid(format!("u sample count {u_samples} must be odd")));
    }
    Ok(())
}

/// An `(x, u)` slice of the light field at one scanline, `u ∈ [-(U-1)/2, (U-1)/2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpipolarImage {
    width: usize,
    u_samples: usize,
    channels: usize,
    /// `[u][x][c]`
    data: Vec<f32>,
    /// 1-based index of the plan entry that last painted each cell; 0 if never painted.
    owner: Vec<u16>,
}

impl EpipolarImage {
    pub fn new(width: usize, u_samples: usize, channels: usize) -> Result<Self> {
        check_u_samples(u_samples)?;
        Ok(Self {
            width,
            u_samples,
            channels,
            data: vec![0.0; width * u_samples * channels],
            owner: vec![0; width * u_samples],
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn u_samples(&self) -> usize {
        self.u_samples
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn half_range(&self) -> i32 {
        (self.u_samples / 2) as i32
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, x: usize, u: i32, c: usize) -> f32 {
        let row = (u + self.half_range()) as usize;
        self.data[(row * self.width + x) * self.channels + c]
    }

    pub fn is_written(&self, x: usize, u: i32) -> bool {
        self.owner(x, u) != 0
    }

    /// Plan entry (1-based) that painted the cell last.
    pub fn owner(&self, x: usize, u: i32) -> u16 {
        self.owner[(u + self.half_range()) as usize * self.width + x]
    }

    pub fn fully_written(&self) -> bool {
        self.owner.iter().all(|&o| o != 0)
    }
}

/// One splat of the back-projection, recorded in paint order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaintEvent {
    pub x: usize,
    pub u: i32,
    /// 0-based plan entry.
    pub entry: usize,
}

/// Reconstructs the epipolar image of one scanline.
///
/// `rows[k - 1]` is scanline of image `k` (interleaved channels) and `labels` the focus
/// labels along the scanline; the label partition gives the in-focus masks.
pub fn backproject_row(
    rows: &[&[f32]],
    labels: &[u16],
    plan: &LayerPlan,
    u_samples: usize,
    channels: usize,
) -> Result<EpipolarImage> {
    backproject_row_logged(rows, labels, plan, u_samples, channels, None)
}

pub fn backproject_row_logged(
    rows: &[&[f32]],
    labels: &[u16],
    plan: &LayerPlan,
    u_samples: usize,
    channels: usize,
    log: Option<&mut Vec<PaintEvent>>,
) -> Result<EpipolarImage> {
    let width = labels.len();
    let mut epi = EpipolarImage::new(width, u_samples, channels)?;
    check_rows(rows, labels, plan, channels)?;
    paint(rows, labels, plan, u_samples, channels, &mut epi.data, Some(&mut epi.owner), log);
    Ok(epi)
}

fn check_rows(rows: &[&[f32]], labels: &[u16], plan: &LayerPlan, channels: usize) -> Result<()> {
    let width = labels.len();
    if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != width * channels) {
        return Err(Error::invalid(format!(
            "row of image {} has {} samples, mask has {width} pixels",
            i + 1,
            rows[i].len()
        )));
    }
    let max_label = plan.entries.iter().flat_map(|e| e.labels.iter()).copied().max().unwrap_or(0);
    if rows.len() < max_label as usize {
        return Err(Error::invalid(format!("{} rows for {max_label} planned labels", rows.len())));
    }
    if let Some(bad) = labels.iter().find(|&&l| l == 0 || l > max_label) {
        return Err(Error::invalid(format!("label {bad} outside the plan")));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn paint(
    rows: &[&[f32]],
    labels: &[u16],
    plan: &LayerPlan,
    u_samples: usize,
    channels: usize,
    data: &mut [f32],
    mut owner: Option<&mut [u16]>,
    mut log: Option<&mut Vec<PaintEvent>>,
) {
    let width = labels.len();
    let half = (u_samples / 2) as i32;
    for (e, entry) in plan.entries.iter().enumerate() {
        for (j, &label) in entry.labels.iter().enumerate() {
            let full = e == 0 && j == 0;
            let row = rows[label as usize - 1];
            for x0 in 0..width {
                if !full && labels[x0] != label {
                    continue;
                }
                let value = &row[x0 * channels..(x0 + 1) * channels];
                for u in -half..=half {
                    let x = (x0 as f64 + entry.slope * u as f64).round();
                    if x < 0.0 || x >= width as f64 {
                        continue;
                    }
                    let x = x as usize;
                    let cell = (u + half) as usize * width + x;
                    data[cell * channels..(cell + 1) * channels].copy_from_slice(value);
                    if let Some(owner) = owner.as_deref_mut() {
                        owner[cell] = e as u16 + 1;
                    }
                    if let Some(log) = log.as_deref_mut() {
                        log.push(PaintEvent { x, u, entry: e });
                    }
                }
            }
        }
    }
}

/// Per-label depth and slope stored with a reconstructed slab.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelLayer {
    pub label: u16,
    pub depth_m: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabMeta {
    pub focal_length_m: f64,
    pub aperture_scale: f64,
    pub reference_depth_m: f64,
    pub reference_label: u16,
    /// One entry per label, ascending.
    pub layers: Vec<LabelLayer>,
}

impl SlabMeta {
    pub fn from_plan(plan: &LayerPlan) -> Self {
        let mut layers: Vec<LabelLayer> = plan
            .entries
            .iter()
            .flat_map(|e| e.labels.iter().map(|&label| LabelLayer { label, depth_m: e.depth_m, slope: e.slope }))
            .collect();
        layers.sort_by_key(|l| l.label);
        Self {
            focal_length_m: plan.geometry.focal_length_m(),
            aperture_scale: plan.aperture_scale,
            reference_depth_m: plan.geometry.reference_m(),
            reference_label: plan.background().labels[0],
            layers,
        }
    }

    pub fn layer(&self, label: u16) -> Option<&LabelLayer> {
        self.layers.iter().find(|l| l.label == label)
    }

    /// Slope of a point at an arbitrary depth under the slab's geometry.
    pub fn slope_for_depth(&self, depth_m: f64) -> Result<f64> {
        let geometry = LensGeometry::new(self.focal_length_m, self.reference_depth_m)?;
        Ok(self.aperture_scale * geometry.parallax(depth_m)?)
    }
}

/// The `LF(x, y, u, 0)` subset: one epipolar image per scanline.
#[derive(Debug, Clone, PartialEq)]
pub struct LightFieldSlab {
    width: usize,
    height: usize,
    u_samples: usize,
    channels: usize,
    /// `[y][u][x][c]`
    data: Vec<f32>,
    meta: SlabMeta,
}

impl LightFieldSlab {
    pub fn new(
        width: usize,
        height: usize,
        u_samples: usize,
        channels: usize,
        data: Vec<f32>,
        meta: SlabMeta,
    ) -> Result<Self> {
        check_u_samples(u_samples)?;
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("slab needs 1 or 3 channels, got {channels}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("slab dimensions must be non-zero"));
        }
        if data.len() != width * height * u_samples * channels {
            return Err(Error::invalid("slab data length does not match its dimensions"));
        }
        Ok(Self { width, height, u_samples, channels, data, meta })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn u_samples(&self) -> usize {
        self.u_samples
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn half_range(&self) -> i32 {
        (self.u_samples / 2) as i32
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn meta(&self) -> &SlabMeta {
        &self.meta
    }

    pub fn get(&self, x: usize, y: usize, u: i32, c: usize) -> f32 {
        let row = (u + self.half_range()) as usize;
        self.data[((y * self.u_samples + row) * self.width + x) * self.channels + c]
    }

    /// Samples of scanline `y`, laid out `[u][x][c]`.
    pub fn row_data(&self, y: usize) -> &[f32] {
        let stride = self.u_samples * self.width * self.channels;
        &self.data[y * stride..(y + 1) * stride]
    }

    pub fn epipolar(&self, y: usize) -> EpipolarImage {
        EpipolarImage {
            width: self.width,
            u_samples: self.u_samples,
            channels: self.channels,
            data: self.row_data(y).to_vec(),
            owner: vec![1; self.width * self.u_samples],
        }
    }
}

/// Masked back-projection of every scanline, rows distributed over the rayon pool.
pub fn reconstruct_slab(
    stack: &FocalStack,
    fm: &FocusMap,
    dm: &DepthMap,
    focal_length_m: f64,
    aperture_scale: f64,
    u_samples: usize,
) -> Result<LightFieldSlab> {
    check_u_samples(u_samples)?;
    let (w, h, c) = (stack.width(), stack.height(), stack.channels());
    if fm.width() != w || fm.height() != h || dm.width() != w || dm.height() != h {
        return Err(Error::invalid("focus map, depth map and stack differ in size"));
    }
    if fm.num_labels() != stack.len() || dm.label_depths().len() != stack.len() {
        return Err(Error::invalid("label count does not match the stack size"));
    }
    let plan = slopes_from_depths(dm.label_depths(), focal_length_m, aperture_scale)?;
    let stride = u_samples * w * c;
    let mut data = vec![0.0f32; h * stride];
    data.par_chunks_mut(stride).enumerate().for_each(|(y, out)| {
        let rows: Vec<&[f32]> = stack.images().iter().map(|img| img.row(y)).collect();
        paint(&rows, fm.row(y), &plan, u_samples, c, out, None, None);
    });
    LightFieldSlab::new(w, h, u_samples, c, data, SlabMeta::from_plan(&plan))
}

/// Integrates the epipolar image along lines of the given slope.
pub fn forward_project(epi: &EpipolarImage, slope: f64) -> Vec<f32> {
    project_samples(&epi.data, epi.width, epi.u_samples, epi.channels, slope)
}

/// `row(x) = mean_u E(x + s·u, u)`, linearly interpolated along x. Samples falling
/// outside `[0, X-1]` are dropped; if a line leaves the image entirely its samples
/// are clamped to the border instead.
pub(crate) fn project_samples(data: &[f32], width: usize, u_samples: usize, channels: usize, slope: f64) -> Vec<f32> {
    let half = (u_samples / 2) as i32;
    let last = (width - 1) as f64;
    let mut out = Vec::with_capacity(width * channels);
    let mut acc = vec![0.0f64; channels];
    let sample = |acc: &mut [f64], pos: f64, u: i32| {
        let base = (u + half) as usize * width;
        let i0 = pos.floor();
        let frac = pos - i0;
        let i0 = i0 as usize;
        for (c, a) in acc.iter_mut().enumerate() {
            let v0 = data[(base + i0) * channels + c] as f64;
            *a += if frac == 0.0 {
                v0
            } else {
                let v1 = data[(base + i0 + 1) * channels + c] as f64;
                v0 + frac * (v1 - v0)
            };
        }
    };
    for x in 0..width {
        acc.iter_mut().for_each(|a| *a = 0.0);
        let mut count = 0usize;
        for u in -half..=half {
            let pos = snap(x as f64 + slope * u as f64);
            if (0.0..=last).contains(&pos) {
                sample(&mut acc, pos, u);
                count += 1;
            }
        }
        if count == 0 {
            for u in -half..=half {
                sample(&mut acc, snap(x as f64 + slope * u as f64).clamp(0.0, last), u);
            }
            count = u_samples;
        }
        out.extend(acc.iter().map(|a| (a / count as f64) as f32));
    }
    out
}

/// Rounds positions within float noise of an integer.
fn snap(pos: f64) -> f64 {
    let r = pos.round();
    if (pos - r).abs() < 1e-9 {
        r
    } else {
        pos
    }
}
