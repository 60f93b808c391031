//! Camera calibration and thin-lens geometry.
//!
//! All distances are positive magnitudes in meters.

use log::warn;

use crate::error::{Error, Result};
use crate::types::{CaptureMeta, DepthMap, FocusMap};

/// One measured row: focus parameter and the distance interval seen in focus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationRow {
    pub focus_param: f64,
    pub near_m: f64,
    pub far_m: f64,
}

impl CalibrationRow {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.near_m + self.far_m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTable {
    rows: Vec<CalibrationRow>,
}

impl CalibrationTable {
    pub fn new(rows: Vec<CalibrationRow>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            if !(r.focus_param.is_finite() && r.near_m.is_finite() && r.far_m.is_finite()) {
                return Err(Error::Calibration(format!("row {}: non-finite value", i + 1)));
            }
            if !(r.near_m > 0.0 && r.near_m < r.far_m) {
                return Err(Error::Calibration(format!(
                    "row {}: focused interval {}-{} m must satisfy 0 < near < far",
                    i + 1,
                    r.near_m,
                    r.far_m
                )));
            }
        }
        let increasing = rows.windows(2).all(|w| w[1].focus_param > w[0].focus_param);
        let decreasing = rows.windows(2).all(|w| w[1].focus_param < w[0].focus_param);
        if !(increasing || decreasing) {
            return Err(Error::Calibration("focus parameters must be strictly monotone across rows".into()));
        }
        Ok(Self { rows })
    }

    /// Parses `focus_param,near_m,far_m` lines. A non-numeric first line is a header;
    /// blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
            match parsed {
                Ok(v) if v.len() == 3 => rows.push(CalibrationRow { focus_param: v[0], near_m: v[1], far_m: v[2] }),
                Err(_) if rows.is_empty() && i == first_content_line(text) => continue,
                _ => {
                    return Err(Error::Calibration(format!(
                        "line {}: expected `focus_param,near_m,far_m`, got `{line}`",
                        i + 1
                    )))
                }
            }
        }
        Self::new(rows)
    }

    pub fn rows(&self) -> &[CalibrationRow] {
        &self.rows
    }
}

fn first_content_line(text: &str) -> usize {
    text.lines()
        .position(|l| {
            let l = l.trim();
            !l.is_empty() && !l.starts_with('#')
        })
        .unwrap_or(0)
}

/// Least-squares weighting of the calibration rows.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum FitWeighting {
    Uniform,
    /// Weight each row by the inverse squared width of its interval on the `1/D` axis.
    #[default]
    InverseIntervalVariance,
    /// Uniform weights with the last row scaled by the given factor.
    LastRowScaled(f64),
}

/// Fitted map `1/D = slope · F + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationModel {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination of the fit on the `1/D` axis (unweighted).
    pub r_squared: f64,
    pub param_min: f64,
    pub param_max: f64,
}

impl CalibrationModel {
    fn inverse_depth(&self, focus_param: f64) -> f64 {
        self.slope * focus_param + self.intercept
    }

    /// Distance in focus at `focus_param`; clamped to the fitted range with a warning.
    pub fn depth_at(&self, focus_param: f64) -> Result<f64> {
        let clamped = focus_param.clamp(self.param_min, self.param_max);
        if clamped != focus_param {
            warn!(
                "focus parameter {focus_param} outside the calibrated range [{}, {}], clamped",
                self.param_min, self.param_max
            );
        }
        let inv = self.inverse_depth(clamped);
        if !(inv.is_finite() && inv > 0.0) {
            return Err(Error::Calibration(format!(
                "model gives non-positive inverse distance {inv} at focus parameter {clamped}"
            )));
        }
        Ok(1.0 / inv)
    }

    /// Residual `D_fit − midpoint` for each row, meters.
    pub fn residuals(&self, table: &CalibrationTable) -> Result<Vec<f64>> {
        table.rows().iter().map(|r| Ok(self.depth_at(r.focus_param)? - r.midpoint())).collect()
    }
}

/// Weighted least-squares line through `(F, 1/midpoint)`.
pub fn fit_focus_curve(table: &CalibrationTable, weighting: FitWeighting) -> Result<CalibrationModel> {
    let rows = table.rows();
    if rows.len() < 2 {
        return Err(Error::Calibration(format!("need at least 2 rows, got {}", rows.len())));
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.focus_param).collect();
    let ys: Vec<f64> = rows.iter().map(|r| 1.0 / r.midpoint()).collect();
    let weights: Vec<f64> = match weighting {
        FitWeighting::Uniform => vec![1.0; rows.len()],
        FitWeighting::InverseIntervalVariance => rows
            .iter()
            .map(|r| {
                let width = 1.0 / r.near_m - 1.0 / r.far_m;
                1.0 / (width * width).max(1e-18)
            })
            .collect(),
        FitWeighting::LastRowScaled(factor) => {
            if !(factor.is_finite() && factor > 0.0) {
                return Err(Error::Calibration(format!("last-row weight {factor} must be positive")));
            }
            let mut w = vec![1.0; rows.len()];
            *w.last_mut().expect("at least two rows") = factor;
            w
        }
    };

    let sw: f64 = weights.iter().sum();
    let mx = weights.iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>() / sw;
    let my = weights.iter().zip(&ys).map(|(w, y)| w * y).sum::<f64>() / sw;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for ((w, x), y) in weights.iter().zip(&xs).zip(&ys) {
        sxx += w * (x - mx) * (x - mx);
        sxy += w * (x - mx) * (y - my);
    }
    if sxx <= 0.0 {
        return Err(Error::Calibration("focus parameters do not vary".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;

    let mean_y = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_tot: f64 = ys.iter().map(|y| (y - mean_y).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - (slope * x + intercept)).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };

    let param_min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let param_max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let model = CalibrationModel { slope, intercept, r_squared, param_min, param_max };
    // a line is monotone; it only has to stay positive over the range
    for end in [param_min, param_max] {
        let inv = model.inverse_depth(end);
        if !(inv > 0.0) {
            return Err(Error::Calibration(format!(
                "fitted curve is not a valid distance at focus parameter {end} (1/D = {inv})"
            )));
        }
    }
    if slope == 0.0 {
        return Err(Error::Calibration("fitted curve is flat; focus parameter does not determine distance".into()));
    }
    Ok(model)
}

/// Sensor distance conjugate to an object at `object_m`.
pub fn thin_lens_image_distance(focal_length_m: f64, object_m: f64) -> Result<f64> {
    if !(focal_length_m > 0.0) {
        return Err(Error::invalid(format!("focal length {focal_length_m} m must be positive")));
    }
    if object_m.is_infinite() && object_m > 0.0 {
        return Ok(focal_length_m);
    }
    if !(object_m > focal_length_m) {
        return Err(Error::NoRealImage { object_m, focal_m: focal_length_m });
    }
    Ok(object_m * focal_length_m / (object_m - focal_length_m))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LensGeometry {
    focal_length_m: f64,
    reference_m: f64,
}

impl LensGeometry {
    pub fn new(focal_length_m: f64, reference_m: f64) -> Result<Self> {
        if !(focal_length_m.is_finite() && focal_length_m > 0.0) {
            return Err(Error::invalid(format!("focal length {focal_length_m} m must be positive")));
        }
        if !(reference_m.is_finite() && reference_m > focal_length_m) {
            return Err(Error::invalid(format!(
                "reference distance {reference_m} m must exceed the focal length {focal_length_m} m"
            )));
        }
        Ok(Self { focal_length_m, reference_m })
    }

    pub fn focal_length_m(&self) -> f64 {
        self.focal_length_m
    }

    pub fn reference_m(&self) -> f64 {
        self.reference_m
    }

    /// `tan θ`, the x-shift per unit of aperture coordinate for a point at `depth_m`.
    pub fn parallax(&self, depth_m: f64) -> Result<f64> {
        if !(depth_m > self.focal_length_m) {
            return Err(Error::NoRealImage { object_m: depth_m, focal_m: self.focal_length_m });
        }
        let denom = 1.0 / self.focal_length_m - 1.0 / self.reference_m;
        if !(denom > 0.0) {
            return Err(Error::invalid("reference distance coincides with the focal length"));
        }
        Ok((1.0 / self.reference_m - 1.0 / depth_m) / denom)
    }
}

/// Back-projection angle (radians) of a point at `depth_m`; zero on the reference plane,
/// positive beyond it.
pub fn projection_angle(depth_m: f64, geom: &LensGeometry) -> Result<f64> {
    if depth_m == geom.reference_m {
        return Ok(0.0);
    }
    Ok(geom.parallax(depth_m)?.atan())
}

/// Spatial resolution of a photograph refocused with parameter `alpha` from a
/// plenoptic capture of `x_res` spatial and `theta_res` angular samples.
pub fn refocus_resolution(x_res: f64, theta_res: f64, alpha: f64) -> Result<f64> {
    if !(x_res > 0.0 && theta_res > 0.0) {
        return Err(Error::invalid("resolutions must be positive"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("refocus parameter {alpha} outside (0, 1]")));
    }
    let boundary = x_res / (x_res + theta_res);
    Ok(if alpha >= boundary {
        let r = (1.0 - alpha) / alpha;
        x_res * (1.0 + r * r).sqrt()
    } else {
        let r = alpha / (1.0 - alpha);
        theta_res * (1.0 + r * r).sqrt()
    })
}

/// Distance in focus for every stack image (index `label - 1`).
pub fn label_depths(meta: &[CaptureMeta], model: Option<&CalibrationModel>) -> Result<Vec<f64>> {
    meta.iter()
        .enumerate()
        .map(|(i, m)| match (m.focus_distance_m, m.focus_param, model) {
            (Some(d), _, _) => Ok(d),
            (None, Some(p), Some(model)) => model
                .depth_at(p)
                .map_err(|e| Error::Calibration(format!("image {}: {e}", i + 1))),
            _ => Err(Error::Calibration(format!(
                "image {} has no focus distance and no calibration model to convert its focus parameter",
                i + 1
            ))),
        })
        .collect()
}

pub fn focus_map_to_depth_map(
    fm: &FocusMap,
    meta: &[CaptureMeta],
    model: Option<&CalibrationModel>,
) -> Result<DepthMap> {
    if meta.len() != fm.num_labels() {
        return Err(Error::invalid(format!("{} metadata entries for {} labels", meta.len(), fm.num_labels())));
    }
    DepthMap::from_labels(fm, label_depths(meta, model)?)
}

/// Focus parameter against focused interval, as measured for a DX 18-105 mm zoom.
pub fn reference_table() -> CalibrationTable {
    const ROWS: [(f64, f64, f64); 11] = [
        (0.0, 0.24, 0.25),
        (-500.0, 0.27, 0.28),
        (-1000.0, 0.30, 0.32),
        (-1500.0, 0.35, 0.37),
        (-2000.0, 0.41, 0.43),
        (-2500.0, 0.49, 0.51),
        (-3000.0, 0.60, 0.63),
        (-3500.0, 0.79, 0.82),
        (-4000.0, 1.20, 1.27),
        (-4500.0, 2.0, 2.7),
        (-5000.0, 15.0, 25.0),
    ];
    CalibrationTable::new(
        ROWS.iter()
            .map(|&(focus_param, near_m, far_m)| CalibrationRow { focus_param, near_m, far_m })
            .collect(),
    )
    .expect("reference table is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_rows() -> CalibrationTable {
        CalibrationTable::new(vec![
            CalibrationRow { focus_param: 0.0, near_m: 0.24, far_m: 0.26 },
            CalibrationRow { focus_param: -1000.0, near_m: 0.9, far_m: 1.1 },
        ])
        .unwrap()
    }

    #[test]
    fn two_rows_interpolate_exactly() {
        let table = two_rows();
        for weighting in [FitWeighting::Uniform, FitWeighting::InverseIntervalVariance, FitWeighting::LastRowScaled(0.25)] {
            let model = fit_focus_curve(&table, weighting).unwrap();
            for r in model.residuals(&table).unwrap() {
                assert!(r.abs() < 1e-12);
            }
            assert!((model.depth_at(0.0).unwrap() - 0.25).abs() < 1e-12);
            assert!((model.depth_at(-1000.0).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reference_table_fit() {
        let table = reference_table();
        let model = fit_focus_curve(&table, FitWeighting::default()).unwrap();
        assert!(model.r_squared >= 0.99, "{}", model.r_squared);
        let d = model.depth_at(-2500.0).unwrap();
        assert!((d - 0.50).abs() / 0.50 <= 0.15, "{d}");
        let d0 = model.depth_at(0.0).unwrap();
        assert!((d0 - 0.245).abs() / 0.245 <= 0.15, "{d0}");
        // more negative parameter focuses farther
        assert!(model.depth_at(-3000.0).unwrap() > model.depth_at(-2000.0).unwrap());
    }

    #[test]
    fn out_of_range_parameters_are_clamped() {
        let model = fit_focus_curve(&reference_table(), FitWeighting::default()).unwrap();
        assert_eq!(model.depth_at(500.0).unwrap(), model.depth_at(0.0).unwrap());
    }

    #[test]
    fn table_validation() {
        let row = |p: f64, n: f64, f: f64| CalibrationRow { focus_param: p, near_m: n, far_m: f };
        assert!(CalibrationTable::new(vec![row(0.0, 0.3, 0.2)]).is_err());
        assert!(CalibrationTable::new(vec![row(0.0, 0.2, 0.3), row(-1.0, 0.3, 0.4), row(-0.5, 0.5, 0.6)]).is_err());
        let one = CalibrationTable::new(vec![row(0.0, 0.2, 0.3)]).unwrap();
        assert!(fit_focus_curve(&one, FitWeighting::Uniform).is_err());
    }

    #[test]
    fn non_positive_fit_is_rejected() {
        let row = |p: f64, n: f64, f: f64| CalibrationRow { focus_param: p, near_m: n, far_m: f };
        // steep line whose far end goes below 1/D = 0
        let t = CalibrationTable::new(vec![row(0.0, 0.1, 0.1 + 1e-3), row(1.0, 1.0, 1.01), row(2.0, 1000.0, 1001.0), row(3.0, 1000.0, 1001.0)])
            .unwrap();
        assert!(fit_focus_curve(&t, FitWeighting::Uniform).is_err());
    }

    #[test]
    fn parse_csv_with_header_and_comments() {
        let t = CalibrationTable::parse("focus_param,near_m,far_m\n# measured\n0,0.24,0.25\n\n-500, 0.27, 0.28\n").unwrap();
        assert_eq!(t.rows().len(), 2);
        let err = CalibrationTable::parse("0,0.24,0.25\n-500,abc,0.28\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(CalibrationTable::parse("0,0.24\n").is_err());
    }

    #[test]
    fn thin_lens_examples() {
        assert!((thin_lens_image_distance(0.05, 0.1).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(thin_lens_image_distance(0.05, f64::INFINITY).unwrap(), 0.05);
        assert!((thin_lens_image_distance(0.05, 1e12).unwrap() - 0.05).abs() < 1e-12);
        assert!((thin_lens_image_distance(0.05, 1.0).unwrap() - 0.05 / 0.95).abs() < 1e-15);
        assert!(matches!(thin_lens_image_distance(0.05, 0.05), Err(Error::NoRealImage { .. })));
    }

    #[test]
    fn projection_angle_examples() {
        let geom = LensGeometry::new(0.05, 0.5).unwrap();
        assert_eq!(projection_angle(0.5, &geom).unwrap(), 0.0);
        let theta = projection_angle(1.0, &geom).unwrap();
        assert!((theta - (1.0f64 / 18.0).atan()).abs() < 1e-15);
        assert!((theta - 0.05549).abs() < 1e-5);
        assert!(projection_angle(0.3, &geom).unwrap() < 0.0);
        let limit = (2.0f64 / 18.0).atan();
        let far = projection_angle(1e15, &geom).unwrap();
        assert!(far < limit && (far - limit).abs() < 1e-12);
        assert!(LensGeometry::new(0.05, 0.05).is_err());
        assert!(projection_angle(0.04, &geom).is_err());
    }

    #[test]
    fn refocus_resolution_examples() {
        assert_eq!(refocus_resolution(325.0, 10.0, 1.0).unwrap(), 325.0);
        let n = refocus_resolution(325.0, 10.0, 0.5).unwrap();
        // below the branch boundary 325/335, so the angular term governs
        assert!((n - 10.0 * 2f64.sqrt()).abs() < 1e-9);
        let star = 325.0 / 335.0;
        let at = refocus_resolution(325.0, 10.0, star).unwrap();
        assert!((at - (325.0f64.powi(2) + 100.0).sqrt()).abs() < 1e-9);
        assert!(refocus_resolution(325.0, 10.0, 0.0).is_err());
        assert!(refocus_resolution(325.0, 10.0, 1.5).is_err());
    }

    #[test]
    fn depth_map_from_meta() {
        let fm = FocusMap::new(2, 1, 2, vec![1, 2]).unwrap();
        let meta = [CaptureMeta::with_distance(0.5, 0.05), CaptureMeta::with_distance(2.0, 0.05)];
        let dm = focus_map_to_depth_map(&fm, &meta, None).unwrap();
        assert_eq!(dm.depths(), &[0.5, 2.0]);

        let params = [CaptureMeta::with_param(0.0, 0.05), CaptureMeta::with_param(-2500.0, 0.05)];
        let err = focus_map_to_depth_map(&fm, &params, None).unwrap_err();
        assert!(err.to_string().contains("image 1"), "{err}");
        let model = fit_focus_curve(&reference_table(), FitWeighting::default()).unwrap();
        let dm = focus_map_to_depth_map(&fm, &params, Some(&model)).unwrap();
        assert!((dm.depths()[1] - 0.5).abs() / 0.5 < 0.15);
    }
}
