//! Image products: extended focus, perspective views, digital refocusing.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tomography::{project_samples, LightFieldSlab};
use crate::types::{FocalStack, FocusMap, Image};

/// Every pixel taken from the stack image its focus label selects.
pub fn extended_focus(stack: &FocalStack, fm: &FocusMap) -> Result<Image> {
    let (w, h, c) = (stack.width(), stack.height(), stack.channels());
    if fm.width() != w || fm.height() != h {
        return Err(Error::invalid("focus map and stack differ in size"));
    }
    if fm.num_labels() != stack.len() {
        return Err(Error::invalid("focus map label count does not match the stack"));
    }
    let mut data = Vec::with_capacity(w * h * c);
    for (p, &label) in fm.labels().iter().enumerate() {
        let img = stack.image(label);
        data.extend_from_slice(&img.data()[p * c..(p + 1) * c]);
    }
    Image::new(w, h, c, data)
}

/// All-in-focus view through aperture position `u`.
pub fn view_at(slab: &LightFieldSlab, u: i32) -> Result<Image> {
    let half = slab.half_range();
    if u.abs() > half {
        return Err(Error::invalid(format!("view u = {u} outside [-{half}, {half}]")));
    }
    let (w, c) = (slab.width(), slab.channels());
    let offset = (u + half) as usize * w * c;
    let mut data = Vec::with_capacity(w * slab.height() * c);
    for y in 0..slab.height() {
        data.extend_from_slice(&slab.row_data(y)[offset..offset + w * c]);
    }
    to_image(w, slab.height(), c, data)
}

/// Integration of every epipolar image along `slope`.
pub fn refocus(slab: &LightFieldSlab, slope: f64) -> Image {
    let (w, c, u) = (slab.width(), slab.channels(), slab.u_samples());
    let data: Vec<f32> = (0..slab.height())
        .into_par_iter()
        .flat_map_iter(|y| project_samples(slab.row_data(y), w, u, c, slope))
        .collect();
    to_image(w, slab.height(), c, data).expect("projection of valid samples is a valid image")
}

#[derive(Debug, Clone)]
pub struct PointRefocus {
    pub image: Image,
    pub label: u16,
    pub depth_m: f64,
    pub slope: f64,
}

/// Refocus on the depth layer under pixel `(x, y)` of the focus map.
pub fn refocus_at_point(slab: &LightFieldSlab, fm: &FocusMap, x: usize, y: usize) -> Result<PointRefocus> {
    if fm.width() != slab.width() || fm.height() != slab.height() {
        return Err(Error::invalid("focus map and slab differ in size"));
    }
    if x >= fm.width() || y >= fm.height() {
        return Err(Error::invalid(format!("click ({x}, {y}) outside {}x{}", fm.width(), fm.height())));
    }
    let label = fm.get(x, y);
    let (image, depth_m, slope) = refocus_label(slab, label)?;
    Ok(PointRefocus { image, label, depth_m, slope })
}

/// Refocus on the stored depth of `label`; returns the image, depth and slope used.
pub fn refocus_label(slab: &LightFieldSlab, label: u16) -> Result<(Image, f64, f64)> {
    let layer = slab
        .meta()
        .layer(label)
        .ok_or_else(|| Error::invalid(format!("slab has no layer for label {label}")))?;
    Ok((refocus(slab, layer.slope), layer.depth_m, layer.slope))
}

/// Views at `frames` evenly spaced integer `u` in `[u_min, u_max]`, duplicates dropped.
pub fn perspective_sweep(slab: &LightFieldSlab, u_min: i32, u_max: i32, frames: usize) -> Result<Vec<(i32, Image)>> {
    sweep_positions(u_min, u_max, frames)?
        .into_iter()
        .map(|u| Ok((u, view_at(slab, u)?)))
        .collect()
}

pub fn sweep_positions(u_min: i32, u_max: i32, frames: usize) -> Result<Vec<i32>> {
    if frames == 0 {
        return Err(Error::invalid("a sweep needs at least one frame"));
    }
    if u_min > u_max {
        return Err(Error::invalid(format!("sweep range [{u_min}, {u_max}] is empty")));
    }
    let mut out: Vec<i32> = Vec::with_capacity(frames);
    for i in 0..frames {
        let t = if frames == 1 { 0.0 } else { i as f64 / (frames - 1) as f64 };
        let u = (u_min as f64 + t * (u_max - u_min) as f64).round() as i32;
        if !out.contains(&u) {
            out.push(u);
        }
    }
    Ok(out)
}

fn to_image(w: usize, h: usize, c: usize, mut data: Vec<f32>) -> Result<Image> {
    data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Image::new(w, h, c, data)
}
