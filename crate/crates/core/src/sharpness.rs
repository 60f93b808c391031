//! Sharpness scoring from thresholded gradient magnitudes.
//!
//! Each image of the stack gets a layer of scores `F(x, y) = Σ_m α_m · [‖∇I‖ ≥ m·δ]`
//! where `δ` is an automatic (Otsu) threshold on that image's gradient magnitudes.

use crate::error::{Error, Result};
use crate::types::{Image, ScalarField};

const HISTOGRAM_BINS: usize = 256;

/// Threshold-step weights `α_1..α_M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreConfig {
    weights: Vec<f64>,
}

impl ScoreConfig {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("score config needs at least one threshold step"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("threshold weights must be finite and positive"));
        }
        Ok(Self { weights })
    }

    /// `steps` thresholds, all weighted 1.
    pub fn uniform(steps: usize) -> Result<Self> {
        Self::new(vec![1.0; steps])
    }

    pub fn steps(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Largest attainable score, `Σ α_m`.
    pub fn max_score(&self) -> f64 {
        self.weights.iter().sum()
    }
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self { weights: vec![1.0; 5] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharpnessLayer {
    pub width: usize,
    pub height: usize,
    pub scores: Vec<f64>,
}

impl SharpnessLayer {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.scores[y * self.width + x]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub delta: f64,
    /// Set when the gradient field carries no variation at all.
    pub textureless: bool,
}

/// Sobel gradient magnitude with replicated borders.
pub fn gradient_magnitude(img: &Image) -> Result<ScalarField> {
    if img.channels() != 1 {
        return Err(Error::invalid("gradient needs a single-channel image"));
    }
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(Error::invalid(format!("image {w}x{h} is smaller than 3x3")));
    }
    let px = |x: isize, y: isize| -> f32 {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        img.get(xc, yc, 0)
    };
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2.0 * px(x - 1, y) + px(x - 1, y + 1));
            let gy = (px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2.0 * px(x, y - 1) + px(x + 1, y - 1));
            data.push((gx * gx + gy * gy).sqrt());
        }
    }
    ScalarField::new(w, h, data)
}

/// Otsu threshold over a 256-bin histogram spanning `[min, max]` of the field.
///
/// The returned `delta` is the upper edge of the last bin of the lower class. When
/// several splits tie for the maximal between-class variance the middle one is taken.
pub fn auto_threshold(field: &ScalarField) -> Result<Threshold> {
    if field.data.is_empty() {
        return Err(Error::invalid("cannot threshold an empty field"));
    }
    let (lo, hi) = field
        .data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v as f64), hi.max(v as f64)));
    if hi <= lo {
        return Ok(Threshold { delta: f64::MIN_POSITIVE, textureless: true });
    }
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let mut hist = [0u64; HISTOGRAM_BINS];
    for &v in &field.data {
        let bin = (((v as f64 - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
        hist[bin] += 1;
    }

    let total = field.data.len() as f64;
    let center = |i: usize| lo + (i as f64 + 0.5) * width;
    let grand_sum: f64 = hist.iter().enumerate().map(|(i, &n)| n as f64 * center(i)).sum();

    let mut variances = [f64::NEG_INFINITY; HISTOGRAM_BINS - 1];
    let (mut n0, mut sum0) = (0.0, 0.0);
    for t in 0..HISTOGRAM_BINS - 1 {
        n0 += hist[t] as f64;
        sum0 += hist[t] as f64 * center(t);
        let n1 = total - n0;
        if n0 == 0.0 || n1 == 0.0 {
            continue;
        }
        let mean0 = sum0 / n0;
        let mean1 = (grand_sum - sum0) / n1;
        variances[t] = n0 * n1 * (mean0 - mean1) * (mean0 - mean1);
    }
    let best = variances.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tol = best.abs() * 1e-12;
    let first = variances.iter().position(|&v| v >= best - tol).unwrap_or(0);
    let last = variances.iter().rposition(|&v| v >= best - tol).unwrap_or(first);
    let t = (first + last) / 2;
    Ok(Threshold { delta: lo + (t + 1) as f64 * width, textureless: false })
}

/// Number (weighted) of thresholds `m·δ`, `m = 1..M`, reached by each gradient magnitude.
pub fn sharpness_scores(grad: &ScalarField, delta: f64, cfg: &ScoreConfig) -> Result<SharpnessLayer> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::invalid(format!("threshold {delta} must be positive")));
    }
    let scores = grad
        .data
        .iter()
        .map(|&g| {
            let g = g as f64;
            cfg.weights
                .iter()
                .enumerate()
                .take_while(|(m, _)| g >= (*m as f64 + 1.0) * delta)
                .map(|(_, w)| w)
                .sum()
        })
        .collect();
    Ok(SharpnessLayer { width: grad.width, height: grad.height, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn luma(w: usize, h: usize, f: impl Fn(usize, usize) -> f32) -> Image {
        Image::from_fn(w, h, 1, |x, y, _| f(x, y)).unwrap()
    }

    fn field(values: Vec<f32>) -> ScalarField {
        ScalarField::new(values.len(), 1, values).unwrap()
    }

    #[test]
    fn constant_image_has_zero_gradient() {
        let g = gradient_magnitude(&luma(5, 4, |_, _| 0.3)).unwrap();
        assert!(g.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn step_edge_responds_on_both_edge_columns() {
        // step between columns 3 and 4
        let g = gradient_magnitude(&luma(8, 5, |x, _| if x >= 4 { 1.0 } else { 0.0 })).unwrap();
        for y in 0..5 {
            for x in 0..8 {
                let expect = if x == 3 || x == 4 { 4.0 } else { 0.0 };
                assert_eq!(g.get(x, y), expect, "({x},{y})");
            }
        }
    }

    #[test]
    fn ramp_interior_is_eight_times_slope() {
        let a = 0.05;
        let g = gradient_magnitude(&luma(10, 5, |x, _| a * x as f32)).unwrap();
        for y in 0..5 {
            for x in 1..9 {
                assert!((g.get(x, y) - 8.0 * a).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn tiny_or_colour_images_are_rejected() {
        assert!(gradient_magnitude(&luma(2, 5, |_, _| 0.0)).is_err());
        let rgb = Image::new(3, 3, 3, vec![0.0; 27]).unwrap();
        assert!(gradient_magnitude(&rgb).is_err());
    }

    /// Between-class variance evaluated from the raw samples, split at `edge`.
    fn raw_between_class(values: &[f32], edge: f64) -> f64 {
        let (lower, upper): (Vec<f64>, Vec<f64>) =
            values.iter().map(|&v| v as f64).partition(|&v| v < edge);
        if lower.is_empty() || upper.is_empty() {
            return 0.0;
        }
        let m0 = lower.iter().sum::<f64>() / lower.len() as f64;
        let m1 = upper.iter().sum::<f64>() / upper.len() as f64;
        lower.len() as f64 * upper.len() as f64 * (m0 - m1).powi(2)
    }

    fn otsu_oracle_accepts(values: &[f32], delta: f64) {
        let lo = values.iter().cloned().fold(f32::INFINITY, f32::min) as f64;
        let hi = values.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
        let w = (hi - lo) / 256.0;
        let best = (1..256)
            .map(|t| raw_between_class(values, lo + t as f64 * w))
            .fold(0.0, f64::max);
        assert!(raw_between_class(values, delta) >= best * (1.0 - 1e-9));
    }

    #[test]
    fn otsu_two_valued_field() {
        let values: Vec<f32> = (0..100).map(|i| if i % 2 == 0 { 0.1 } else { 0.9 }).collect();
        let t = auto_threshold(&field(values.clone())).unwrap();
        assert!(!t.textureless);
        assert!(t.delta > 0.1 && t.delta <= 0.9, "{}", t.delta);
        otsu_oracle_accepts(&values, t.delta);
    }

    #[test]
    fn otsu_skewed_field() {
        let values: Vec<f32> = (0..100).map(|i| if i < 90 { 0.0 } else { 1.0 }).collect();
        let t = auto_threshold(&field(values.clone())).unwrap();
        assert!(t.delta > 0.0 && t.delta <= 1.0);
        otsu_oracle_accepts(&values, t.delta);
    }

    #[test]
    fn otsu_three_clusters_matches_oracle() {
        let values: Vec<f32> = (0..300)
            .map(|i| match i % 10 {
                0..=5 => 0.05 + 0.001 * (i % 7) as f32,
                6..=8 => 0.4 + 0.002 * (i % 5) as f32,
                _ => 0.95,
            })
            .collect();
        let t = auto_threshold(&field(values.clone())).unwrap();
        otsu_oracle_accepts(&values, t.delta);
    }

    #[test]
    fn constant_field_is_textureless() {
        let t = auto_threshold(&field(vec![0.4; 10])).unwrap();
        assert!(t.textureless);
        assert!(t.delta > 0.0);
        assert!(auto_threshold(&field(vec![])).is_err());
    }

    #[test]
    fn score_examples() {
        let cfg = ScoreConfig::default();
        let d = 0.2;
        let s = sharpness_scores(&field(vec![0.1, 1.0, 2.0, 0.5]), d, &cfg).unwrap();
        assert_eq!(s.scores, vec![0.0, 5.0, 5.0, 2.0]);
        // u(0) = 1: a gradient exactly on a threshold counts.
        let s = sharpness_scores(&field(vec![0.25]), 0.125, &cfg).unwrap();
        assert_eq!(s.scores, vec![2.0]);
        assert!(sharpness_scores(&field(vec![0.1]), 0.0, &cfg).is_err());
    }

    #[test]
    fn weighted_scores() {
        let cfg = ScoreConfig::new(vec![0.5, 2.0, 1.0]).unwrap();
        let s = sharpness_scores(&field(vec![0.0, 1.0, 2.0, 9.0]), 1.0, &cfg).unwrap();
        assert_eq!(s.scores, vec![0.0, 0.5, 2.5, 3.5]);
        assert!(ScoreConfig::new(vec![]).is_err());
        assert!(ScoreConfig::new(vec![1.0, -1.0]).is_err());
    }

    proptest! {
        #[test]
        fn scores_monotone_and_bounded(a in 0.0f32..10.0, b in 0.0f32..10.0, delta in 0.01f64..3.0) {
            let cfg = ScoreConfig::new(vec![1.0, 0.5, 2.0, 1.0, 0.25]).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let s = sharpness_scores(&field(vec![lo, hi]), delta, &cfg).unwrap();
            prop_assert!(s.scores[0] <= s.scores[1]);
            prop_assert!(s.scores.iter().all(|&v| v >= 0.0 && v <= cfg.max_score()));
        }

        #[test]
        fn scores_scale_covariant(values in proptest::collection::vec(0.0f32..4.0, 1..40),
                                  delta in 0.01f64..2.0, exp in -4i32..5) {
            let cfg = ScoreConfig::default();
            let c = 2f32.powi(exp);
            let scaled = field(values.iter().map(|v| v * c).collect());
            let a = sharpness_scores(&field(values), delta, &cfg).unwrap();
            let b = sharpness_scores(&scaled, delta * c as f64, &cfg).unwrap();
            prop_assert_eq!(a.scores, b.scores);
        }
    }
}
