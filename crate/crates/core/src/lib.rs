//! Partial light field reconstruction from a focal stack taken with a fixed camera.
//!
//! The pipeline stages are:
//!
//! 1. **Sharpness** – thresholded Sobel gradients give per-image sharpness scores.
//! 2. **Focus map** – a multi-label graph cut (alpha-expansion) diffuses the sharpest
//!    image index into weakly textured regions, followed by a median cleanup.
//! 3. **Optics** – the focus map becomes a depth map through the capture metadata or a
//!    fitted focus-parameter calibration; depths become epipolar slopes via the thin lens.
//! 4. **Tomography** – masked back-projection paints every `(x, u)` epipolar image,
//!    farthest layer first, nearer in-focus layers overwriting.
//! 5. **Render** – extended focus, perspective views and digital refocusing from the slab.

pub mod codec;
pub mod error;
pub mod focusmap;
pub mod graphcut;
#[allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons also reject NaN
pub mod optics;
pub mod render;
pub mod sharpness;
pub mod slab_file;
pub mod synth;
pub mod tomography;
pub mod types;

pub use error::{Error, Result};
pub use types::{CaptureMeta, DepthMap, FocalStack, FocusMap, Image, ScalarField};
