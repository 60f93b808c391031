//! Synthetic layered scenes with a known light field.
//!
//! A scene is a set of fronto-parallel textured layers. The ground-truth epipolar
//! images are painted farthest layer first (every point of a layer traced along its
//! slope, nearer layers overwriting), and focal-stack image `k` is the integration of
//! those epipolar images along the slope of layer `k`.

use crate::error::{Error, Result};
use crate::tomography::{project_samples, slopes_from_depths, LayerPlan, LightFieldSlab, SlabMeta};
use crate::types::{CaptureMeta, FocalStack, FocusMap, Image};

#[derive(Debug, Clone)]
pub struct SceneLayer {
    pub depth_m: f64,
    /// Appearance in the reference view `u = 0`.
    pub texture: Image,
    /// Pixels (reference view) covered by the layer.
    pub support: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub layers: Vec<SceneLayer>,
    pub focal_length_m: f64,
    pub aperture_scale: f64,
}

#[derive(Debug, Clone)]
pub struct SynthesizedStack {
    pub stack: FocalStack,
    pub plan: LayerPlan,
    pub ground_truth: LightFieldSlab,
    /// Label of the layer visible in the reference view.
    pub true_focus: FocusMap,
    /// Per slab cell `[y][u][x]`: the scene point shown there is also visible at `u = 0`.
    pub seen_in_reference: Vec<bool>,
}

impl SyntheticScene {
    fn validate(&self) -> Result<(usize, usize, usize)> {
        let first = self.layers.first().ok_or_else(|| Error::invalid("scene has no layers"))?;
        let (w, h, c) = (first.texture.width(), first.texture.height(), first.texture.channels());
        for (i, layer) in self.layers.iter().enumerate() {
            if !layer.texture.same_shape(&first.texture) {
                return Err(Error::invalid(format!("layer {} texture differs in shape", i + 1)));
            }
            if layer.support.len() != w * h {
                return Err(Error::invalid(format!("layer {} support has the wrong size", i + 1)));
            }
        }
        Ok((w, h, c))
    }

    pub fn depths(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.depth_m).collect()
    }

    pub fn plan(&self) -> Result<LayerPlan> {
        slopes_from_depths(&self.depths(), self.focal_length_m, self.aperture_scale)
    }
}

/// Painter-model light field of the scene. The farthest layer is painted everywhere.
pub fn paint_ground_truth(scene: &SyntheticScene, u_samples: usize) -> Result<LightFieldSlab> {
    Ok(paint_with_sources(scene, u_samples)?.0)
}

/// Ground truth plus, per cell, the `(label, x0)` of the scene point painted there.
fn paint_with_sources(scene: &SyntheticScene, u_samples: usize) -> Result<(LightFieldSlab, Vec<(u16, u32)>)> {
    let (w, h, c) = scene.validate()?;
    let plan = scene.plan()?;
    if u_samples.is_multiple_of(2) {
        return Err(Error::invalid(format!("u sample count {u_samples} must be odd")));
    }
    let half = (u_samples / 2) as i32;
    let stride = u_samples * w * c;
    let mut data = vec![0.0f32; h * stride];
    let mut sources = vec![(0u16, 0u32); h * u_samples * w];
    for (e, entry) in plan.entries().iter().enumerate() {
        for (j, &label) in entry.labels.iter().enumerate() {
            let layer = &scene.layers[label as usize - 1];
            let everywhere = e == 0 && j == 0;
            for y in 0..h {
                let out = &mut data[y * stride..(y + 1) * stride];
                for x0 in 0..w {
                    if !everywhere && !layer.support[y * w + x0] {
                        continue;
                    }
                    for u in -half..=half {
                        let x = (x0 as f64 + entry.slope * u as f64).round();
                        if x < 0.0 || x >= w as f64 {
                            continue;
                        }
                        let cell = ((u + half) as usize * w + x as usize) * c;
                        sources[(y * u_samples + (u + half) as usize) * w + x as usize] = (label, x0 as u32);
                        for ch in 0..c {
                            out[cell + ch] = layer.texture.get(x0, y, ch);
                        }
                    }
                }
            }
        }
    }
    Ok((LightFieldSlab::new(w, h, u_samples, c, data, SlabMeta::from_plan(&plan))?, sources))
}

/// Focal stack (one image per layer, focused on it) integrated from the ground truth.
pub fn synthesize_stack(scene: &SyntheticScene, u_samples: usize) -> Result<SynthesizedStack> {
    let (w, h, c) = scene.validate()?;
    let plan = scene.plan()?;
    let (ground_truth, sources) = paint_with_sources(scene, u_samples)?;
    let mut images = Vec::with_capacity(scene.layers.len());
    for layer in 1..=scene.layers.len() as u16 {
        let slope = plan.label_slope(layer).expect("every layer is planned");
        let mut data = Vec::with_capacity(w * h * c);
        for y in 0..h {
            data.extend(project_samples(ground_truth.row_data(y), w, u_samples, c, slope));
        }
        data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        images.push(Image::new(w, h, c, data)?);
    }
    let meta = scene
        .layers
        .iter()
        .map(|l| CaptureMeta::with_distance(l.depth_m, scene.focal_length_m))
        .collect();
    let stack = FocalStack::new(images, meta)?;

    // nearest covering layer in the reference view
    let mut by_depth: Vec<usize> = (0..scene.layers.len()).collect();
    by_depth.sort_by(|&a, &b| scene.layers[a].depth_m.total_cmp(&scene.layers[b].depth_m));
    let background = *by_depth.last().expect("scene has layers");
    let labels = (0..w * h)
        .map(|p| {
            let i = by_depth
                .iter()
                .copied()
                .find(|&i| scene.layers[i].support[p])
                .unwrap_or(background);
            i as u16 + 1
        })
        .collect();
    let true_focus = FocusMap::new(w, h, scene.layers.len(), labels)?;
    let seen_in_reference = sources
        .iter()
        .enumerate()
        .map(|(i, &(label, x0))| {
            let y = i / (u_samples * w);
            true_focus.get(x0 as usize, y) == label
        })
        .collect();
    Ok(SynthesizedStack { stack, plan, ground_truth, true_focus, seen_in_reference })
}

/// Deterministic value in `[0, 1)` for integer coordinates.
pub fn hash_noise(x: u64, y: u64, seed: u64) -> f32 {
    let mut z = x
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(y.wrapping_mul(0xC2B2_AE3D_27D4_EB4F))
        .wrapping_add(seed.wrapping_mul(0x1656_67B1_9E37_79F9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 40) as f32 / (1u64 << 24) as f32
}

/// Noise texture around a base colour, `amplitude` peak-to-peak.
pub fn noise_texture(width: usize, height: usize, base: [f32; 3], amplitude: f32, seed: u64) -> Image {
    Image::from_fn(width, height, 3, |x, y, c| {
        base[c] + amplitude * (hash_noise(x as u64, y as u64, seed) - 0.5)
    })
    .expect("texture dimensions are non-zero")
}

fn rect_support(width: usize, height: usize, x: (usize, usize), y: (usize, usize)) -> Vec<bool> {
    (0..width * height)
        .map(|p| {
            let (px, py) = (p % width, p / width);
            (x.0..x.1).contains(&px) && (y.0..y.1).contains(&py)
        })
        .collect()
}

/// Three-layer test scene: textured background at 1 m, a mid plane at 0.5 m and a
/// near plane at 1/3 m, with a 50 mm lens. The aperture scale gives slopes 0, -1
/// and -2 pixels per unit `u`.
pub fn three_layer_scene(width: usize, height: usize) -> SyntheticScene {
    let focal_length_m = 0.05;
    let reference = 1.0;
    let (w, h) = (width, height);
    let frac = |v: usize, num: usize, den: usize| v * num / den;
    let layers = vec![
        SceneLayer {
            depth_m: reference,
            texture: noise_texture(w, h, [0.35, 0.45, 0.55], 0.5, 1),
            support: vec![true; w * h],
        },
        SceneLayer {
            depth_m: 0.5,
            texture: noise_texture(w, h, [0.6, 0.45, 0.3], 0.5, 2),
            support: rect_support(w, h, (frac(w, 1, 8), frac(w, 9, 16)), (frac(h, 1, 6), frac(h, 2, 3))),
        },
        SceneLayer {
            depth_m: 1.0 / 3.0,
            texture: noise_texture(w, h, [0.45, 0.6, 0.4], 0.5, 3),
            support: rect_support(w, h, (frac(w, 1, 2), frac(w, 13, 16)), (frac(h, 5, 12), frac(h, 5, 6))),
        },
    ];
    SyntheticScene { layers, focal_length_m, aperture_scale: 1.0 / focal_length_m - 1.0 / reference }
}
