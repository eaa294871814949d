//! Loading, validation and analysis-scale resampling of chart screenshots.
//!
//! Uploaded screenshots must be PNG or JPEG with both dimensions in
//! `100..=2000` pixels. Any alpha channel is composited over white before the
//! pixels are stored, so every [`ChartImage`] is opaque RGB.

use std::fmt;
use std::io::Cursor;
use std::str::FromStr;

use image::{DynamicImage, ImageEncoder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_DIMENSION: u32 = 100;
pub const MAX_DIMENSION: u32 = 2000;

/// Default longest side of the image the filters run on.
pub const DEFAULT_ANALYSIS_MAX_DIM: u32 = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFormat {
    Png,
    Jpeg,
}

impl SourceFormat {
    pub fn extension(self) -> &'static str {
        match self {
            SourceFormat::Png => "png",
            SourceFormat::Jpeg => "jpg",
        }
    }

    fn as_image_format(self) -> image::ImageFormat {
        match self {
            SourceFormat::Png => image::ImageFormat::Png,
            SourceFormat::Jpeg => image::ImageFormat::Jpeg,
        }
    }
}

impl FromStr for SourceFormat {
    type Err = IngestError;

    /// Accepts extensions (`png`, `jpg`, `jpeg`, optionally dotted) and the
    /// matching MIME types.
    fn from_str(tag: &str) -> Result<Self, Self::Err> {
        let t = tag.trim().trim_start_matches('.').to_ascii_lowercase();
        match t.as_str() {
            "png" | "image/png" => Ok(SourceFormat::Png),
            "jpg" | "jpeg" | "image/jpeg" | "image/jpg" => Ok(SourceFormat::Jpeg),
            _ => Err(IngestError::Format(tag.to_string())),
        }
    }
}

impl fmt::Display for SourceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceFormat::Png => "png",
            SourceFormat::Jpeg => "jpeg",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IngestError {
    #[error("image could not be decoded as {format}: {message}")]
    Decode { format: SourceFormat, message: String },
    #[error("image is {width}x{height} px; both dimensions must be between {MIN_DIMENSION} and {MAX_DIMENSION} px")]
    Size { width: u32, height: u32 },
    #[error("unsupported image format `{0}`; only png and jpeg are accepted")]
    Format(String),
    #[error("pixel buffer has {actual} entries, expected {expected}")]
    PixelCount { expected: usize, actual: usize },
}

/// An opaque RGB raster, row-major, 8 bits per channel.
///
/// Bounds on the dimensions are enforced by [`load_chart_image`]; images built
/// directly with [`ChartImage::new`] (fixtures, resampled copies) only need a
/// consistent pixel count.
#[derive(Clone, PartialEq, Eq)]
pub struct ChartImage {
    width: u32,
    height: u32,
    pixels: Vec<[u8; 3]>,
    source_format: SourceFormat,
}

impl fmt::Debug for ChartImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChartImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("source_format", &self.source_format)
            .finish_non_exhaustive()
    }
}

impl ChartImage {
    pub fn new(
        width: u32,
        height: u32,
        pixels: Vec<[u8; 3]>,
        source_format: SourceFormat,
    ) -> Result<Self, IngestError> {
        let expected = width as usize * height as usize;
        if pixels.len() != expected || expected == 0 {
            return Err(IngestError::PixelCount {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
            source_format,
        })
    }

    /// Solid image, mostly useful for fixtures.
    pub fn filled(width: u32, height: u32, color: [u8; 3]) -> Self {
        Self {
            width,
            height,
            pixels: vec![color; width as usize * height as usize],
            source_format: SourceFormat::Png,
        }
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
            source_format: SourceFormat::Png,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn source_format(&self) -> SourceFormat {
        self.source_format
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    /// Returns a copy with every pixel mapped through `f`.
    pub fn map_pixels(&self, f: impl Fn([u8; 3]) -> [u8; 3]) -> ChartImage {
        ChartImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&p| f(p)).collect(),
            source_format: self.source_format,
        }
    }

    /// Encodes the image as an 8-bit RGB PNG.
    pub fn to_png_bytes(&self) -> Vec<u8> {
        let raw: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        let mut out = Vec::new();
        image::codecs::png::PngEncoder::new(&mut out)
            .write_image(&raw, self.width, self.height, image::ExtendedColorType::Rgb8)
            .expect("encoding an in-memory RGB8 buffer cannot fail");
        out
    }

    /// SHA-256 over dimensions and pixels, hex encoded. Used to key fixture
    /// backends and caches.
    pub fn content_digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.width.to_le_bytes());
        h.update(self.height.to_le_bytes());
        for p in &self.pixels {
            h.update(p);
        }
        hex::encode(h.finalize())
    }
}

/// Decodes, validates and flattens an uploaded screenshot.
pub fn load_chart_image(bytes: &[u8], declared_format: &str) -> Result<ChartImage, IngestError> {
    let format: SourceFormat = declared_format.parse()?;
    let decode_err = |e: image::ImageError| IngestError::Decode {
        format,
        message: e.to_string(),
    };
    // Bounds come from the header so oversized images are never decoded.
    let (width, height) = image::ImageReader::with_format(Cursor::new(bytes), format.as_image_format())
        .into_dimensions()
        .map_err(decode_err)?;
    if !(MIN_DIMENSION..=MAX_DIMENSION).contains(&width) || !(MIN_DIMENSION..=MAX_DIMENSION).contains(&height) {
        return Err(IngestError::Size { width, height });
    }
    let decoded = image::load_from_memory_with_format(bytes, format.as_image_format()).map_err(decode_err)?;
    let pixels = flatten_over_white(&decoded);
    ChartImage::new(width, height, pixels, format)
}

fn flatten_over_white(img: &DynamicImage) -> Vec<[u8; 3]> {
    if !img.color().has_alpha() {
        return img.to_rgb8().pixels().map(|p| p.0).collect();
    }
    img.to_rgba8()
        .pixels()
        .map(|p| {
            let [r, g, b, a] = p.0;
            let a = a as u32;
            let blend = |c: u8| ((c as u32 * a + 255 * (255 - a) + 127) / 255) as u8;
            [blend(r), blend(g), blend(b)]
        })
        .collect()
}

/// Target size when scaling `(width, height)` so the longer side equals
/// `max_dim`. The shorter side is rounded half-up and never drops below 1.
pub fn scaled_dimensions(width: u32, height: u32, max_dim: u32) -> (u32, u32) {
    let longest = width.max(height);
    if longest <= max_dim {
        return (width, height);
    }
    let scale_minor = |minor: u32| -> u32 {
        let num = 2 * minor as u64 * max_dim as u64 + longest as u64;
        ((num / (2 * longest as u64)) as u32).max(1)
    };
    if width >= height {
        (max_dim, scale_minor(height))
    } else {
        (scale_minor(width), max_dim)
    }
}

/// Shrinks `img` so its longer side is at most `max_dim`, using exact
/// area-average resampling. Images already within bounds are returned as is.
pub fn downsample_for_analysis(img: &ChartImage, max_dim: u32) -> ChartImage {
    let max_dim = max_dim.max(MIN_DIMENSION);
    let (tw, th) = scaled_dimensions(img.width, img.height, max_dim);
    if (tw, th) == (img.width, img.height) {
        return img.clone();
    }

    let xs = coverage_spans(img.width, tw);
    let ys = coverage_spans(img.height, th);
    let mut pixels = Vec::with_capacity(tw as usize * th as usize);
    for ycov in &ys {
        for xcov in &xs {
            let mut acc = [0f64; 3];
            let mut total = 0f64;
            for &(sy, wy) in ycov {
                for &(sx, wx) in xcov {
                    let w = wx * wy;
                    let p = img.get(sx, sy);
                    for c in 0..3 {
                        acc[c] += p[c] as f64 * w;
                    }
                    total += w;
                }
            }
            pixels.push(acc.map(|v| (v / total).round().clamp(0.0, 255.0) as u8));
        }
    }
    ChartImage {
        width: tw,
        height: th,
        pixels,
        source_format: img.source_format,
    }
}

/// For each destination index, the source indices it overlaps and the
/// overlap length in source-pixel units.
pub(crate) fn coverage_spans(src: u32, dst: u32) -> Vec<Vec<(u32, f64)>> {
    let ratio = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let start = d as f64 * ratio;
            let end = ((d + 1) as f64 * ratio).min(src as f64);
            let mut spans = Vec::new();
            let mut s = start.floor() as u32;
            while (s as f64) < end && s < src {
                let lo = start.max(s as f64);
                let hi = end.min((s + 1) as f64);
                if hi > lo {
                    spans.push((s, hi - lo));
                }
                s += 1;
            }
            spans
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn png_of(width: u32, height: u32) -> Vec<u8> {
        ChartImage::filled(width, height, [10, 20, 30]).to_png_bytes()
    }

    #[test]
    fn accepts_lower_bound() {
        let img = load_chart_image(&png_of(100, 100), "png").unwrap();
        assert_eq!((img.width(), img.height()), (100, 100));
    }

    #[test]
    fn rejects_below_lower_bound() {
        let err = load_chart_image(&png_of(99, 99), "png").unwrap_err();
        assert_eq!(err, IngestError::Size { width: 99, height: 99 });
    }

    #[test]
    fn bounds_apply_per_dimension() {
        assert!(matches!(
            load_chart_image(&png_of(150, 99), "png"),
            Err(IngestError::Size { .. })
        ));
        assert!(matches!(
            load_chart_image(&png_of(2001, 150), "png"),
            Err(IngestError::Size { .. })
        ));
    }

    #[test]
    fn random_bytes_are_a_decode_error() {
        let junk: Vec<u8> = (0..512u32).map(|i| (i * 37 % 251) as u8).collect();
        assert!(matches!(
            load_chart_image(&junk, "png"),
            Err(IngestError::Decode { .. })
        ));
        assert!(matches!(
            load_chart_image(&junk, "jpeg"),
            Err(IngestError::Decode { .. })
        ));
        assert!(matches!(load_chart_image(&[], "png"), Err(IngestError::Decode { .. })));
    }

    #[test]
    fn other_formats_are_rejected() {
        for tag in ["gif", "bmp", "svg", "webp", ""] {
            assert!(matches!(
                load_chart_image(&png_of(120, 120), tag),
                Err(IngestError::Format(_))
            ));
        }
    }

    #[test]
    fn format_tags() {
        assert_eq!("PNG".parse::<SourceFormat>().unwrap(), SourceFormat::Png);
        assert_eq!(".jpg".parse::<SourceFormat>().unwrap(), SourceFormat::Jpeg);
        assert_eq!("image/jpeg".parse::<SourceFormat>().unwrap(), SourceFormat::Jpeg);
    }

    #[test]
    fn jpeg_loads() {
        let img = ChartImage::filled(120, 110, [200, 100, 50]);
        let raw: Vec<u8> = img.pixels().iter().flatten().copied().collect();
        let mut jpg = Vec::new();
        image::codecs::jpeg::JpegEncoder::new_with_quality(&mut jpg, 95)
            .write_image(&raw, 120, 110, image::ExtendedColorType::Rgb8)
            .unwrap();
        let loaded = load_chart_image(&jpg, "jpg").unwrap();
        assert_eq!(loaded.source_format(), SourceFormat::Jpeg);
        let p = loaded.get(60, 55);
        assert!(p.iter().zip([200u8, 100, 50]).all(|(a, b)| a.abs_diff(b) <= 3));
    }

    #[test]
    fn alpha_is_composited_over_white() {
        let mut rgba = image::RgbaImage::new(100, 100);
        for (x, _, p) in rgba.enumerate_pixels_mut() {
            *p = if x < 50 {
                image::Rgba([0, 0, 0, 0])
            } else {
                image::Rgba([0, 0, 0, 128])
            };
        }
        let mut bytes = Vec::new();
        DynamicImage::ImageRgba8(rgba)
            .write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)
            .unwrap();
        let img = load_chart_image(&bytes, "png").unwrap();
        assert_eq!(img.get(10, 10), [255, 255, 255]);
        // 255 * 127 / 255 = 127
        assert_eq!(img.get(90, 10), [127, 127, 127]);
    }

    #[test]
    fn downsample_examples() {
        assert_eq!(scaled_dimensions(1024, 400, 512), (512, 200));
        assert_eq!(scaled_dimensions(300, 300, 512), (300, 300));
        assert_eq!(scaled_dimensions(2000, 1000, 512), (512, 256));
        assert_eq!(scaled_dimensions(400, 1024, 512), (200, 512));
        // 333 * 512 / 1000 = 170.496 -> 170; 335 -> 171.52 -> 172
        assert_eq!(scaled_dimensions(1000, 333, 512), (512, 170));
        assert_eq!(scaled_dimensions(1000, 335, 512), (512, 172));

        let img = ChartImage::filled(1024, 400, [1, 2, 3]);
        let small = downsample_for_analysis(&img, 512);
        assert_eq!((small.width(), small.height()), (512, 200));
        assert!(small.pixels().iter().all(|&p| p == [1, 2, 3]));

        let same = ChartImage::filled(300, 300, [9, 9, 9]);
        assert_eq!(downsample_for_analysis(&same, 512), same);
    }

    #[test]
    fn area_average_of_checkerboard_is_mean() {
        let img = ChartImage::from_fn(
            200,
            200,
            |x, y| {
                if (x + y) % 2 == 0 {
                    [0, 0, 0]
                } else {
                    [200, 200, 200]
                }
            },
        );
        let small = downsample_for_analysis(&img, 100);
        assert_eq!((small.width(), small.height()), (100, 100));
        assert!(small.pixels().iter().all(|&p| p == [100, 100, 100]));
    }

    #[test]
    fn png_round_trip_preserves_pixels() {
        let img = ChartImage::from_fn(130, 101, |x, y| [(x * 7) as u8, (y * 3) as u8, (x ^ y) as u8]);
        let again = load_chart_image(&img.to_png_bytes(), "png").unwrap();
        assert_eq!(again.pixels(), img.pixels());
    }

    #[test]
    fn new_checks_pixel_count() {
        assert!(ChartImage::new(2, 2, vec![[0; 3]; 3], SourceFormat::Png).is_err());
    }
}
