use super::SaliencyMap;
use crate::ingest::ChartImage;

/// Opacity of the colormap layer.
pub const HEATMAP_ALPHA: f64 = 0.5;

/// Colormap stops: dark blue at 0, red at 0.5, yellow at 1.
const STOPS: [(f64, [f64; 3]); 3] = [
    (0.0, [0.0, 0.0, 96.0]),
    (0.5, [255.0, 0.0, 0.0]),
    (1.0, [255.0, 255.0, 0.0]),
];

/// Maps a saliency value in `[0, 1]` to an RGB color.
pub fn colormap(v: f64) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    let seg = if v <= STOPS[1].0 { 0 } else { 1 };
    let (t0, c0) = STOPS[seg];
    let (t1, c1) = STOPS[seg + 1];
    let t = (v - t0) / (t1 - t0);
    [0, 1, 2].map(|c| (c0[c] + (c1[c] - c0[c]) * t).round() as u8)
}

/// Blends the colormapped saliency over the chart at [`HEATMAP_ALPHA`].
pub fn render_heatmap_overlay(img: &ChartImage, map: &SaliencyMap) -> ChartImage {
    assert_eq!(
        (img.width(), img.height()),
        (map.width(), map.height()),
        "image and saliency map sizes differ"
    );
    let mut i = 0;
    ChartImage::from_fn(img.width(), img.height(), |x, y| {
        let src = img.get(x, y);
        let heat = colormap(map.values()[i]);
        i += 1;
        [0, 1, 2].map(|c| (src[c] as f64 * (1.0 - HEATMAP_ALPHA) + heat[c] as f64 * HEATMAP_ALPHA).round() as u8)
    })
}
