use serde::{Deserialize, Serialize};

use super::SaliencyMap;
use crate::ingest::ChartImage;
use crate::text::TextBox;

/// Parameters of the focus-on-visual-attention heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransitionParams {
    /// RGB Euclidean distance above which two 4-neighbors form a transition.
    pub threshold: f64,
    /// Radius of the disc used to grow transition pixels into zones.
    pub radius: u32,
    /// Map value (on the max-normalized map) counted as high saliency.
    pub high_saliency_cutoff: f64,
}

impl Default for TransitionParams {
    fn default() -> Self {
        Self {
            threshold: 30.0,
            radius: 5,
            high_saliency_cutoff: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMetrics {
    pub text_ratio: Option<f64>,
    pub center_fraction: f64,
    pub transition_coverage: Option<f64>,
}

impl SaliencyMetrics {
    pub fn compute(img: &ChartImage, map: &SaliencyMap, boxes: &[TextBox], params: &TransitionParams) -> Self {
        Self {
            text_ratio: text_saliency_ratio(map, boxes),
            center_fraction: center_saliency_fraction(map),
            transition_coverage: transition_zone_coverage(img, map, params),
        }
    }
}

/// The centered `floor(w/3) x floor(h/3)` rectangle as `[x, y, w, h]`.
pub fn center_rect(width: u32, height: u32) -> [u32; 4] {
    let (cw, ch) = (width / 3, height / 3);
    [(width - cw) / 2, (height - ch) / 2, cw, ch]
}

/// Share of the total saliency mass inside the center rectangle.
pub fn center_saliency_fraction(map: &SaliencyMap) -> f64 {
    let total = map.total_mass();
    if total <= 0.0 {
        return 0.0;
    }
    let [x0, y0, cw, ch] = center_rect(map.width(), map.height());
    let mut inside = 0.0;
    for y in y0..y0 + ch {
        for x in x0..x0 + cw {
            inside += map.get(x, y);
        }
    }
    (inside / total).clamp(0.0, 1.0)
}

/// Saliency mass share in the union of text boxes divided by the area share
/// of that union. `None` without boxes or without any saliency.
pub fn text_saliency_ratio(map: &SaliencyMap, boxes: &[TextBox]) -> Option<f64> {
    let (w, h) = (map.width() as usize, map.height() as usize);
    let mut mask = vec![false; w * h];
    for b in boxes {
        let x1 = (b.x + b.w).min(map.width()) as usize;
        let y1 = (b.y + b.h).min(map.height()) as usize;
        for y in b.y as usize..y1 {
            mask[y * w + b.x as usize..y * w + x1].fill(true);
        }
    }
    let area = mask.iter().filter(|&&m| m).count();
    let total = map.total_mass();
    if area == 0 || total <= 0.0 {
        return None;
    }
    let inside: f64 = map.values().iter().zip(&mask).filter(|(_, &m)| m).map(|(v, _)| v).sum();
    Some((inside / total) / (area as f64 / (w * h) as f64))
}

/// Pixels whose RGB distance to at least one 4-neighbor exceeds `threshold`.
pub fn transition_pixels(img: &ChartImage, threshold: f64) -> Vec<bool> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let px = img.pixels();
    let limit = threshold * threshold;
    let dist2 = |a: [u8; 3], b: [u8; 3]| -> f64 { (0..3).map(|c| (a[c] as f64 - b[c] as f64).powi(2)).sum() };
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w && dist2(px[i], px[i + 1]) > limit {
                out[i] = true;
                out[i + 1] = true;
            }
            if y + 1 < h && dist2(px[i], px[i + w]) > limit {
                out[i] = true;
                out[i + w] = true;
            }
        }
    }
    out
}

/// Dilates the transition pixels with a Euclidean disc of `radius`.
pub fn transition_zone(img: &ChartImage, threshold: f64, radius: u32) -> Vec<bool> {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let seeds = transition_pixels(img, threshold);
    let r = radius as i64;
    let offsets: Vec<(i64, i64)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
        .collect();
    let mut zone = vec![false; seeds.len()];
    for (i, _) in seeds.iter().enumerate().filter(|(_, &s)| s) {
        let (x, y) = (i as i64 % w, i as i64 / w);
        for &(dx, dy) in &offsets {
            let (nx, ny) = (x + dx, y + dy);
            if nx >= 0 && ny >= 0 && nx < w && ny < h {
                zone[(ny * w + nx) as usize] = true;
            }
        }
    }
    zone
}

/// Fraction of transition-zone pixels whose saliency reaches the
/// high-saliency cutoff. `None` when the image has no transitions.
pub fn transition_zone_coverage(img: &ChartImage, map: &SaliencyMap, params: &TransitionParams) -> Option<f64> {
    assert_eq!(
        (img.width(), img.height()),
        (map.width(), map.height()),
        "image and saliency map sizes differ"
    );
    let zone = transition_zone(img, params.threshold, params.radius);
    let size = zone.iter().filter(|&&z| z).count();
    if size == 0 {
        return None;
    }
    let covered = zone
        .iter()
        .zip(map.values())
        .filter(|(&z, &v)| z && v >= params.high_saliency_cutoff)
        .count();
    Some(covered as f64 / size as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(w: u32, h: u32) -> SaliencyMap {
        SaliencyMap::from_raw(w, h, vec![1.0; (w * h) as usize], "t").unwrap()
    }

    fn point_mass(w: u32, h: u32, x: u32, y: u32) -> SaliencyMap {
        let mut v = vec![0.0; (w * h) as usize];
        v[(y * w + x) as usize] = 1.0;
        SaliencyMap::from_raw(w, h, v, "t").unwrap()
    }

    fn tb(x: u32, y: u32, w: u32, h: u32) -> TextBox {
        TextBox {
            x,
            y,
            w,
            h,
            content: "A".into(),
            confidence: 1.0,
        }
    }

    #[test]
    fn center_fraction_examples() {
        let f = center_saliency_fraction(&uniform(300, 300));
        assert!((f - 10000.0 / 90000.0).abs() < 1e-12);
        assert_eq!(center_saliency_fraction(&point_mass(300, 300, 150, 150)), 1.0);
        assert_eq!(center_saliency_fraction(&point_mass(300, 300, 0, 0)), 0.0);
        let zero = SaliencyMap::from_raw(10, 10, vec![0.0; 100], "t").unwrap();
        assert_eq!(center_saliency_fraction(&zero), 0.0);
    }

    #[test]
    fn center_rect_is_centered() {
        assert_eq!(center_rect(300, 300), [100, 100, 100, 100]);
        assert_eq!(center_rect(101, 100), [34, 33, 33, 33]);
    }

    #[test]
    fn text_ratio_examples() {
        let r = text_saliency_ratio(&uniform(100, 100), &[tb(0, 0, 10, 10), tb(50, 50, 30, 5)]).unwrap();
        assert!((r - 1.0).abs() < 1e-12);

        // All mass in the left half, boxes cover the left half.
        let mut v = vec![0.0; 100 * 100];
        for y in 0..100 {
            for x in 0..50 {
                v[y * 100 + x] = 0.7;
            }
        }
        let map = SaliencyMap::from_raw(100, 100, v, "t").unwrap();
        let r = text_saliency_ratio(&map, &[tb(0, 0, 50, 100)]).unwrap();
        assert!((r - 2.0).abs() < 1e-12);

        assert_eq!(text_saliency_ratio(&uniform(100, 100), &[]), None);
    }

    #[test]
    fn overlapping_boxes_are_unioned() {
        let map = point_mass(100, 100, 5, 5);
        // union area = 100 + 100 - 25 = 175
        let r = text_saliency_ratio(&map, &[tb(0, 0, 10, 10), tb(5, 5, 10, 10)]).unwrap();
        assert!((r - 10000.0 / 175.0).abs() < 1e-9);
    }

    fn half_half(a: [u8; 3], b: [u8; 3]) -> ChartImage {
        ChartImage::from_fn(100, 100, |x, _| if x < 50 { a } else { b })
    }

    #[test]
    fn transition_examples() {
        let img = half_half([255, 0, 0], [0, 0, 255]);
        let p = TransitionParams::default();
        assert_eq!(transition_zone_coverage(&img, &uniform(100, 100), &p), Some(1.0));
        let zero = SaliencyMap::from_raw(100, 100, vec![0.0; 10000], "t").unwrap();
        assert_eq!(transition_zone_coverage(&img, &zero, &p), Some(0.0));
        let solid = ChartImage::filled(100, 100, [12, 200, 40]);
        assert_eq!(transition_zone_coverage(&solid, &uniform(100, 100), &p), None);
    }

    #[test]
    fn zone_is_a_disc_dilation() {
        let img = half_half([0, 0, 0], [255, 255, 255]);
        let zone = transition_zone(&img, 30.0, 5);
        // Transition columns 49 and 50; the disc reaches 5 columns either side.
        for x in 0..100usize {
            let expected = (44..=55).contains(&x);
            assert_eq!(zone[20 * 100 + x], expected, "column {x}");
        }
    }

    #[test]
    fn small_steps_are_not_transitions() {
        let img = half_half([100, 100, 100], [110, 110, 110]);
        assert!(transition_pixels(&img, 30.0).iter().all(|t| !t));
    }
}
