//! PNG encoding of images, focus maps and depth maps.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, ImageFormat, Luma, RgbImage};

use crate::error::{Error, Result};
use crate::types::{DepthMap, FocusMap, Image};

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn png_bytes(img: DynamicImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

fn to_dynamic(img: &Image) -> DynamicImage {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    if img.channels() == 1 {
        DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, bytes).expect("buffer matches dimensions"))
    } else {
        DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, bytes).expect("buffer matches dimensions"))
    }
}

/// 8-bit PNG, grayscale or RGB following the image.
pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    png_bytes(to_dynamic(img))
}

/// Decodes any supported raster. Gray stays single-channel; everything else becomes RGB.
pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    from_dynamic(image::load_from_memory(bytes)?)
}

pub fn read_image(path: &Path) -> Result<Image> {
    from_dynamic(image::open(path)?)
}

fn from_dynamic(img: DynamicImage) -> Result<Image> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = matches!(
        img,
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_)
    );
    if gray {
        let data = img.to_luma32f().into_raw();
        Image::new(w, h, 1, data)
    } else {
        let data = img.to_rgb32f().into_raw().into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Image::new(w, h, 3, data)
    }
}

/// Labels as 8-bit gray values; 0 never occurs.
pub fn encode_focus_map(fm: &FocusMap) -> Result<Vec<u8>> {
    if fm.num_labels() > 255 {
        return Err(Error::invalid(format!("{} labels do not fit an 8-bit map", fm.num_labels())));
    }
    let bytes = fm.labels().iter().map(|&l| l as u8).collect();
    let img = GrayImage::from_raw(fm.width() as u32, fm.height() as u32, bytes).expect("buffer matches dimensions");
    png_bytes(DynamicImage::ImageLuma8(img))
}

/// Inverse of [`encode_focus_map`]; the label count must be supplied.
pub fn decode_focus_map(bytes: &[u8], num_labels: usize) -> Result<FocusMap> {
    let img = image::load_from_memory(bytes)?;
    let gray = match img {
        DynamicImage::ImageLuma8(g) => g,
        _ => return Err(Error::invalid("focus map must be an 8-bit grayscale PNG")),
    };
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let labels = gray.into_raw().into_iter().map(u16::from).collect();
    FocusMap::new(w, h, num_labels, labels)
}

/// Depth in millimetres as 16-bit gray, saturating at 65535.
pub fn encode_depth_map(dm: &DepthMap) -> Result<Vec<u8>> {
    let mm: Vec<u16> = dm.depths().iter().map(|&d| (d * 1000.0).round().clamp(0.0, 65535.0) as u16).collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(dm.width() as u32, dm.height() as u32, mm).expect("buffer matches dimensions");
    png_bytes(DynamicImage::ImageLuma16(img))
}

/// Millimetre values of a 16-bit depth PNG.
pub fn decode_depth_mm(bytes: &[u8]) -> Result<(usize, usize, Vec<u16>)> {
    match image::load_from_memory(bytes)? {
        DynamicImage::ImageLuma16(g) => Ok((g.width() as usize, g.height() as usize, g.into_raw())),
        _ => Err(Error::invalid("depth map must be a 16-bit grayscale PNG")),
    }
}
