//! Focus-map estimation: sharpness layers → data costs → graph cut → median cleanup.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graphcut::{alpha_expansion, energy, pointwise_argmin, EnergyProblem};
use crate::sharpness::{auto_threshold, gradient_magnitude, sharpness_scores, ScoreConfig, SharpnessLayer};
use crate::types::{FocalStack, FocusMap};

#[derive(Debug, Clone)]
pub struct FocusParams {
    pub scores: ScoreConfig,
    /// Weight of the smoothness sum.
    pub lambda: f64,
    pub median_radius: usize,
}

impl Default for FocusParams {
    fn default() -> Self {
        Self { scores: ScoreConfig::default(), lambda: 1.0, median_radius: 2 }
    }
}

/// Graph-cut result before median filtering, with per-image diagnostics.
#[derive(Debug, Clone)]
pub struct FocusEstimate {
    pub map: FocusMap,
    /// Gradient threshold of each image.
    pub deltas: Vec<f64>,
    /// Images whose gradient field was constant; they score zero everywhere.
    pub textureless: Vec<bool>,
    pub initial_energy: f64,
    pub energy: f64,
}

/// Data cost `D(X, k) = Σ α_m − F_k(X)`, laid out pixel-major for [`EnergyProblem`].
pub fn build_data_costs(layers: &[SharpnessLayer], cfg: &ScoreConfig) -> Result<Vec<f64>> {
    let first = layers.first().ok_or_else(|| Error::invalid("no sharpness layers"))?;
    if layers.iter().any(|l| l.width != first.width || l.height != first.height) {
        return Err(Error::invalid("sharpness layers differ in size"));
    }
    let k = layers.len();
    let total = cfg.max_score();
    let mut data = vec![0.0; first.width * first.height * k];
    for (label, layer) in layers.iter().enumerate() {
        for (p, &score) in layer.scores.iter().enumerate() {
            data[p * k + label] = (total - score).max(0.0);
        }
    }
    Ok(data)
}

/// Sharpness layer of every stack image, computed concurrently.
pub fn score_stack(stack: &FocalStack, cfg: &ScoreConfig) -> Result<Vec<(SharpnessLayer, f64, bool)>> {
    stack
        .images()
        .par_iter()
        .map(|img| {
            let grad = gradient_magnitude(&img.to_luma())?;
            let t = auto_threshold(&grad)?;
            let mut layer = sharpness_scores(&grad, t.delta, cfg)?;
            if t.textureless {
                layer.scores.iter_mut().for_each(|s| *s = 0.0);
            }
            Ok((layer, t.delta, t.textureless))
        })
        .collect()
}

/// Graph-cut focus map, initialised from the pointwise argmin of the data cost.
pub fn compute_focus_map(stack: &FocalStack, cfg: &ScoreConfig, lambda: f64) -> Result<FocusEstimate> {
    let (w, h, k) = (stack.width(), stack.height(), stack.len());
    let scored = score_stack(stack, cfg)?;
    let deltas = scored.iter().map(|s| s.1).collect();
    let textureless = scored.iter().map(|s| s.2).collect();
    if k == 1 {
        return Ok(FocusEstimate {
            map: FocusMap::constant(w, h, 1, 1)?,
            deltas,
            textureless,
            initial_energy: 0.0,
            energy: 0.0,
        });
    }
    let layers: Vec<SharpnessLayer> = scored.into_iter().map(|s| s.0).collect();
    let prob = EnergyProblem::new(w, h, k, build_data_costs(&layers, cfg)?, lambda)?;
    let init = pointwise_argmin(&prob);
    let initial_energy = energy(&prob, &init)?;
    let result = alpha_expansion(&prob, &init)?;
    Ok(FocusEstimate {
        map: FocusMap::new(w, h, k, result.labels)?,
        deltas,
        textureless,
        initial_energy,
        energy: result.energy,
    })
}

/// Graph cut followed by the median cleanup.
pub fn estimate_focus_map(stack: &FocalStack, params: &FocusParams) -> Result<FocusEstimate> {
    let mut est = compute_focus_map(stack, &params.scores, params.lambda)?;
    est.map = median_filter_labels(&est.map, params.median_radius);
    Ok(est)
}

/// Median of the `(2r+1)²` window with replicated borders.
pub fn median_filter_labels(fm: &FocusMap, radius: usize) -> FocusMap {
    if radius == 0 {
        return fm.clone();
    }
    let (w, h, k) = (fm.width(), fm.height(), fm.num_labels());
    let r = radius as isize;
    let window = (2 * radius + 1) * (2 * radius + 1);
    // lower middle when the count is even
    let rank = (window - 1) / 2;
    let labels: Vec<u16> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            let mut counts = vec![0usize; k + 1];
            (0..w)
                .map(|x| {
                    counts.iter_mut().for_each(|c| *c = 0);
                    for dy in -r..=r {
                        let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                        for dx in -r..=r {
                            let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                            counts[fm.get(xx, yy) as usize] += 1;
                        }
                    }
                    let mut seen = 0;
                    for (label, &c) in counts.iter().enumerate() {
                        seen += c;
                        if seen > rank {
                            return label as u16;
                        }
                    }
                    unreachable!("window holds {window} labels")
                })
                .collect::<Vec<_>>()
        })
        .collect();
    FocusMap::new(w, h, k, labels).expect("median of valid labels is a valid label")
}

/// Pixels whose focus label is `label`.
pub fn in_focus_mask(fm: &FocusMap, label: u16) -> Result<Vec<bool>> {
    if label == 0 || label as usize > fm.num_labels() {
        return Err(Error::invalid(format!("label {label} outside [1, {}]", fm.num_labels())));
    }
    Ok(fm.labels().iter().map(|&l| l == label).collect())
}
