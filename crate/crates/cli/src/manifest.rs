//! Stack manifest: a TOML file listing the images and capture parameters.
//!
//! ```toml
//! focal_length_mm = 50.0
//! calibration = "focus_table.csv"     # optional, relative to this file
//!
//! [params]                            # all optional
//! score_steps = 5
//! lambda = 1.0
//! median_radius = 2
//! u_samples = 33
//! max_parallax = 8.0
//! aperture_scale = 19.0               # overrides max_parallax
//!
//! [[image]]
//! path = "near.png"
//! focus_distance_m = 0.5              # or focus_param = -2500.0
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use lumistack_core::codec::read_image;
use lumistack_core::optics::{fit_focus_curve, CalibrationModel, CalibrationTable, FitWeighting};
use lumistack_core::{CaptureMeta, FocalStack};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub score_steps: Option<usize>,
    pub lambda: Option<f64>,
    pub median_radius: Option<usize>,
    pub u_samples: Option<usize>,
    pub max_parallax: Option<f64>,
    pub aperture_scale: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageEntry {
    pub path: PathBuf,
    pub focus_param: Option<f64>,
    pub focus_distance_m: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub focal_length_mm: f64,
    pub calibration: Option<PathBuf>,
    #[serde(default)]
    pub params: Params,
    #[serde(rename = "image")]
    pub images: Vec<ImageEntry>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl Manifest {
    pub fn new(focal_length_mm: f64, params: Params, images: Vec<ImageEntry>) -> Self {
        Self { focal_length_mm, calibration: None, params, images, base_dir: PathBuf::new() }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let mut m: Manifest = toml::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if !(m.focal_length_mm.is_finite() && m.focal_length_mm > 0.0) {
            bail!("focal_length_mm must be positive, got {}", m.focal_length_mm);
        }
        if m.images.is_empty() {
            bail!("manifest lists no images");
        }
        if m.images.len() > 255 {
            bail!("{} images exceed the 255 labels an 8-bit focus map can hold", m.images.len());
        }
        Ok(m)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn focal_length_m(&self) -> f64 {
        self.focal_length_mm / 1000.0
    }

    pub fn capture_meta(&self) -> Vec<CaptureMeta> {
        self.images
            .iter()
            .map(|e| CaptureMeta {
                focus_param: e.focus_param,
                focus_distance_m: e.focus_distance_m,
                focal_length_m: self.focal_length_m(),
            })
            .collect()
    }

    pub fn load_stack(&self) -> anyhow::Result<FocalStack> {
        let images = self
            .images
            .iter()
            .map(|e| {
                let p = self.resolve(&e.path);
                read_image(&p).with_context(|| format!("reading image {}", p.display()))
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        Ok(FocalStack::new(images, self.capture_meta())?)
    }

    /// Fit of the manifest's calibration table, if it names one.
    pub fn calibration_model(&self) -> anyhow::Result<Option<CalibrationModel>> {
        let Some(path) = &self.calibration else {
            return Ok(None);
        };
        let p = self.resolve(path);
        let text = std::fs::read_to_string(&p).with_context(|| format!("reading calibration table {}", p.display()))?;
        let table = CalibrationTable::parse(&text)?;
        Ok(Some(fit_focus_curve(&table, FitWeighting::default())?))
    }
}
