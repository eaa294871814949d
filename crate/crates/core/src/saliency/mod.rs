//! Saliency maps and the four salience heuristics built on them.
//!
//! A [`SaliencyBackend`] predicts where attention lands during an overview
//! reading of a chart. The default backend is spectral-residual saliency
//! ([`SpectralResidual`]); a neural predictor can be plugged in over HTTP via
//! [`HttpSaliencyBackend`]. Whatever the source, maps are stored
//! max-normalized so the peak is `1.0`.

mod heatmap;
mod metrics;
mod reference;
mod spectral;

use std::time::Duration;

pub use heatmap::{colormap, render_heatmap_overlay, HEATMAP_ALPHA};
pub use metrics::{
    center_rect, center_saliency_fraction, text_saliency_ratio, transition_pixels, transition_zone,
    transition_zone_coverage, SaliencyMetrics, TransitionParams,
};
pub use reference::{
    percentile_flag, Direction, PercentileError, ReferenceDistribution, ReferenceParseError, ReferenceSet,
    BUNDLED_REFERENCES,
};
pub use spectral::{residual_saliency, SpectralResidual};

use crate::backend::{BackendError, HttpEndpoint};
use crate::ingest::ChartImage;

/// Per-pixel attention estimate, row-major, max-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
    backend_id: String,
}

impl SaliencyMap {
    /// Normalizes raw backend output so the maximum is 1.0. An all-zero map
    /// stays all zero. Negative or non-finite values make the map malformed.
    pub fn from_raw(
        width: u32,
        height: u32,
        raw: Vec<f64>,
        backend_id: impl Into<String>,
    ) -> Result<Self, BackendError> {
        let backend_id = backend_id.into();
        if raw.len() != width as usize * height as usize {
            return Err(BackendError::new(
                backend_id,
                format!("map has {} values for a {width}x{height} image", raw.len()),
            ));
        }
        if let Some(bad) = raw.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(BackendError::new(
                backend_id,
                format!("map contains invalid value {bad}"),
            ));
        }
        let max = raw.iter().copied().fold(0.0f64, f64::max);
        let values = if max > 0.0 {
            raw.into_iter().map(|v| v / max).collect()
        } else {
            raw
        };
        Ok(Self {
            width,
            height,
            values,
            backend_id,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn backend_id(&self) -> &str {
        &self.backend_id
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Pixel coordinates of the first maximum in row-major order.
    pub fn argmax(&self) -> (u32, u32) {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        let w = self.width as usize;
        ((best % w) as u32, (best / w) as u32)
    }

    /// Grayscale rendering, `round(255 * v)` per pixel.
    pub fn to_gray_png(&self) -> Vec<u8> {
        let raw: Vec<u8> = self.values.iter().map(|v| (v * 255.0).round() as u8).collect();
        let img = image::GrayImage::from_raw(self.width, self.height, raw).expect("buffer length matches dimensions");
        let mut out = Vec::new();
        img.write_to(&mut std::io::Cursor::new(&mut out), image::ImageFormat::Png)
            .expect("in-memory png encoding");
        out
    }
}

/// Anything that can produce a saliency map for a chart image.
///
/// Implementations must be deterministic for a given image and safe to call
/// from several threads at once.
pub trait SaliencyBackend: Send + Sync {
    fn id(&self) -> &str;
    fn compute(&self, img: &ChartImage) -> Result<SaliencyMap, BackendError>;
}

/// Runs `backend` and checks the result has the image's dimensions.
pub fn compute_saliency(img: &ChartImage, backend: &dyn SaliencyBackend) -> Result<SaliencyMap, BackendError> {
    let map = backend.compute(img)?;
    if (map.width(), map.height()) != (img.width(), img.height()) {
        return Err(BackendError::new(
            backend.id(),
            format!(
                "map is {}x{}, image is {}x{}",
                map.width(),
                map.height(),
                img.width(),
                img.height()
            ),
        ));
    }
    Ok(map)
}

/// Returns a map of ones. Used in tests and as a no-op backend.
#[derive(Debug, Default, Clone, Copy)]
pub struct UniformSaliency;

impl SaliencyBackend for UniformSaliency {
    fn id(&self) -> &str {
        "uniform-stub"
    }

    fn compute(&self, img: &ChartImage) -> Result<SaliencyMap, BackendError> {
        SaliencyMap::from_raw(img.width(), img.height(), vec![1.0; img.pixel_count()], self.id())
    }
}

/// External saliency predictor: PNG in, grayscale PNG of the same size out.
#[derive(Debug, Clone)]
pub struct HttpSaliencyBackend {
    endpoint: HttpEndpoint,
    id: String,
}

impl HttpSaliencyBackend {
    pub fn new(url: &str, timeout: Duration) -> Self {
        Self {
            endpoint: HttpEndpoint::new(url, timeout),
            id: format!("http-saliency:{url}"),
        }
    }
}

impl SaliencyBackend for HttpSaliencyBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn compute(&self, img: &ChartImage) -> Result<SaliencyMap, BackendError> {
        let body = self.endpoint.post(&self.id, "image/png", &img.to_png_bytes())?;
        decode_gray_map(&body, img.width(), img.height(), &self.id)
    }
}

/// Parses a grayscale PNG response into a map, rescaling 8- or 16-bit
/// samples to `[0, 1]`.
pub fn decode_gray_map(png: &[u8], width: u32, height: u32, backend_id: &str) -> Result<SaliencyMap, BackendError> {
    let decoded = image::load_from_memory_with_format(png, image::ImageFormat::Png)
        .map_err(|e| BackendError::new(backend_id, format!("malformed saliency png: {e}")))?;
    if (decoded.width(), decoded.height()) != (width, height) {
        return Err(BackendError::new(
            backend_id,
            format!(
                "saliency png is {}x{}, expected {width}x{height}",
                decoded.width(),
                decoded.height()
            ),
        ));
    }
    let raw = decoded
        .to_luma16()
        .pixels()
        .map(|p| p.0[0] as f64 / u16::MAX as f64)
        .collect();
    SaliencyMap::from_raw(width, height, raw, backend_id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_stub_is_all_ones() {
        let img = ChartImage::filled(120, 100, [3, 4, 5]);
        let map = compute_saliency(&img, &UniformSaliency).unwrap();
        assert_eq!((map.width(), map.height()), (120, 100));
        assert!(map.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn raw_values_are_max_normalized() {
        let map = SaliencyMap::from_raw(2, 2, vec![0.0, 2.0, 4.0, 1.0], "t").unwrap();
        assert_eq!(map.values(), &[0.0, 0.5, 1.0, 0.25]);
        let zero = SaliencyMap::from_raw(2, 1, vec![0.0, 0.0], "t").unwrap();
        assert!(zero.is_zero());
    }

    #[test]
    fn malformed_maps_are_rejected() {
        assert!(SaliencyMap::from_raw(2, 2, vec![0.0; 3], "t").is_err());
        assert!(SaliencyMap::from_raw(1, 1, vec![-1.0], "t").is_err());
        assert!(SaliencyMap::from_raw(1, 1, vec![f64::NAN], "t").is_err());
    }

    #[test]
    fn gray_png_round_trip() {
        let raw: Vec<f64> = (0..120 * 100).map(|i| (i % 256) as f64).collect();
        let map = SaliencyMap::from_raw(120, 100, raw, "t").unwrap();
        let back = decode_gray_map(&map.to_gray_png(), 120, 100, "t").unwrap();
        for (a, b) in map.values().iter().zip(back.values()) {
            assert!((a - b).abs() < 1.0 / 255.0);
        }
        assert!(decode_gray_map(&map.to_gray_png(), 100, 100, "t").is_err());
        assert!(decode_gray_map(b"not a png", 120, 100, "t").is_err());
    }

    struct WrongSize;
    impl SaliencyBackend for WrongSize {
        fn id(&self) -> &str {
            "wrong"
        }
        fn compute(&self, _: &ChartImage) -> Result<SaliencyMap, BackendError> {
            SaliencyMap::from_raw(1, 1, vec![1.0], "wrong")
        }
    }

    #[test]
    fn dimension_mismatch_is_a_backend_error() {
        let img = ChartImage::filled(100, 100, [0; 3]);
        assert!(compute_saliency(&img, &WrongSize).is_err());
    }
}
