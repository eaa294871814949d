//! Color perception and accessibility filters.

mod cvd;
mod grouping;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use cvd::{
    cvd_information_loss, linear_to_srgb, relative_loss, simulate_cvd, simulate_pixel, srgb_to_linear, CvdResult,
    Deficiency, DEFAULT_CVD_LOSS_THRESHOLD,
};
pub use grouping::{distance2, group_colors, ColorGroup, DEFAULT_GROUPING_THRESHOLD};

use crate::ingest::ChartImage;

pub const DEFAULT_MAX_PALETTE_ENTRIES: usize = 4096;
/// Share of pixels above which the most frequent color counts as background.
pub const BACKGROUND_COVERAGE: f64 = 0.4;

/// Recommended CVD-safe palettes, one `name: #rrggbb ...` line each.
pub const CVD_SAFE_PALETTES: &str = include_str!("../../content/cvd_palettes.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaletteEntry {
    pub color: [u8; 3],
    pub frequency: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Palette {
    entries: Vec<PaletteEntry>,
    background_excluded: bool,
}

impl Palette {
    /// Normalizes arbitrary entries: merges duplicate colors, drops zero
    /// frequencies, sorts by descending frequency then color.
    pub fn from_entries(entries: Vec<PaletteEntry>, background_excluded: bool) -> Self {
        let mut merged: HashMap<[u8; 3], u64> = HashMap::new();
        for e in entries {
            *merged.entry(e.color).or_default() += e.frequency;
        }
        let mut entries: Vec<PaletteEntry> = merged
            .into_iter()
            .filter(|&(_, f)| f > 0)
            .map(|(color, frequency)| PaletteEntry { color, frequency })
            .collect();
        entries.sort_by(|a, b| b.frequency.cmp(&a.frequency).then(a.color.cmp(&b.color)));
        Self {
            entries,
            background_excluded,
        }
    }

    pub fn entries(&self) -> &[PaletteEntry] {
        &self.entries
    }

    pub fn background_excluded(&self) -> bool {
        self.background_excluded
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Exact color histogram, most frequent first. With `exclude_background`
/// the dominant color is dropped when it covers more than 40% of the image;
/// the remainder is capped at `max_entries`.
pub fn quantize_palette(img: &ChartImage, max_entries: usize, exclude_background: bool) -> Palette {
    let mut counts: HashMap<[u8; 3], u64> = HashMap::new();
    for &px in img.pixels() {
        *counts.entry(px).or_default() += 1;
    }
    let all = Palette::from_entries(
        counts
            .into_iter()
            .map(|(color, frequency)| PaletteEntry { color, frequency })
            .collect(),
        false,
    );
    let mut entries = all.entries;
    let mut background_excluded = false;
    if exclude_background {
        if let Some(top) = entries.first() {
            if top.frequency as f64 > BACKGROUND_COVERAGE * img.pixel_count() as f64 {
                entries.remove(0);
                background_excluded = true;
            }
        }
    }
    entries.truncate(max_entries);
    Palette {
        entries,
        background_excluded,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorVariability {
    pub distinct_count: usize,
    pub multiple_colors: bool,
}

/// `multiple_colors` once there are at least `flag_min` groups (default 3,
/// i.e. more than two distinct colors).
pub fn color_variability(groups: &[ColorGroup], flag_min: usize) -> ColorVariability {
    ColorVariability {
        distinct_count: groups.len(),
        multiple_colors: groups.len() >= flag_min,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorSimilarity {
    pub similar_group_count: usize,
    pub similar_colors: bool,
}

/// Counts groups holding two or more near-identical colors.
pub fn color_similarity(groups: &[ColorGroup], flag_min: usize) -> ColorSimilarity {
    let similar_group_count = groups.iter().filter(|g| g.members.len() >= 2).count();
    ColorSimilarity {
        similar_group_count,
        similar_colors: similar_group_count >= flag_min,
    }
}

/// Shannon entropy in bits of the 512-bin histogram formed by the top three
/// bits of each channel.
pub fn image_entropy(img: &ChartImage) -> f64 {
    let mut bins = [0u64; 512];
    for px in img.pixels() {
        let idx = ((px[0] >> 5) as usize) << 6 | ((px[1] >> 5) as usize) << 3 | (px[2] >> 5) as usize;
        bins[idx] += 1;
    }
    let n = img.pixel_count() as f64;
    -bins
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.log2()
        })
        .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedPalette {
    pub name: String,
    pub colors: Vec<[u8; 3]>,
}

pub fn parse_palettes(text: &str) -> Result<Vec<NamedPalette>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, colors) = line
            .split_once(':')
            .ok_or_else(|| format!("line {}: expected `name: #rrggbb ...`", n + 1))?;
        let colors = colors
            .split_whitespace()
            .map(|c| parse_hex_color(c).ok_or_else(|| format!("line {}: bad color `{c}`", n + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(NamedPalette {
            name: name.trim().to_string(),
            colors,
        });
    }
    Ok(out)
}

pub fn parse_hex_color(s: &str) -> Option<[u8; 3]> {
    let hex = s.strip_prefix('#')?;
    if hex.len() != 6 {
        return None;
    }
    let v = u32::from_str_radix(hex, 16).ok()?;
    Some([(v >> 16) as u8, (v >> 8) as u8, v as u8])
}

pub fn format_hex_color(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

pub fn cvd_safe_palettes() -> Vec<NamedPalette> {
    parse_palettes(CVD_SAFE_PALETTES).expect("bundled palette file is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn halves(a: [u8; 3], b: [u8; 3]) -> ChartImage {
        ChartImage::from_fn(100, 100, |x, _| if x < 50 { a } else { b })
    }

    #[test]
    fn palette_examples() {
        let white = quantize_palette(&ChartImage::filled(100, 100, [255; 3]), 4096, true);
        assert!(white.is_empty());
        assert!(white.background_excluded());

        let p = quantize_palette(&halves([255, 0, 0], [0, 0, 255]), 4096, false);
        assert_eq!(p.len(), 2);
        assert_eq!(p.entries()[0].frequency, p.entries()[1].frequency);
        assert_eq!(p.entries()[0].color, [0, 0, 255]);
        assert_eq!(p.entries()[1].color, [255, 0, 0]);

        // half/half: top color covers exactly 50% > 40%, dropped.
        let p = quantize_palette(&halves([255, 0, 0], [0, 0, 255]), 4096, true);
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn palette_keeps_the_most_frequent() {
        // Color k covers k+1 columns of a 55-wide strip.
        let mut col_color = Vec::new();
        for k in 0..10u8 {
            col_color.extend(std::iter::repeat_n([k * 20, 0, 0], k as usize + 1));
        }
        let img = ChartImage::from_fn(col_color.len() as u32 * 2, 100, |x, _| col_color[x as usize / 2]);
        let p = quantize_palette(&img, 4, false);
        let got: Vec<_> = p.entries().iter().map(|e| e.color[0]).collect();
        assert_eq!(got, vec![180, 160, 140, 120]);
    }

    fn group(n: usize) -> ColorGroup {
        ColorGroup {
            members: (0..n as u8).map(|i| [i, 0, 0]).collect(),
            centroid: [0; 3],
            total_frequency: 1,
        }
    }

    #[test]
    fn variability_and_similarity() {
        let three: Vec<_> = (0..3).map(|_| group(1)).collect();
        assert!(color_variability(&three, 3).multiple_colors);
        assert!(!color_variability(&three[..2], 3).multiple_colors);
        assert!(!color_variability(&[], 3).multiple_colors);

        let g: Vec<_> = [3, 2, 2, 1].into_iter().map(group).collect();
        assert_eq!(
            color_similarity(&g, 3),
            ColorSimilarity {
                similar_group_count: 3,
                similar_colors: true
            }
        );
        let singles: Vec<_> = (0..4).map(|_| group(1)).collect();
        assert_eq!(color_similarity(&singles, 3).similar_group_count, 0);
        assert!(!color_similarity(&[group(2), group(2)], 3).similar_colors);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(image_entropy(&ChartImage::filled(100, 100, [9, 9, 9])), 0.0);
        assert!((image_entropy(&halves([0, 0, 0], [255, 255, 255])) - 1.0).abs() < 1e-12);
        let quarters = ChartImage::from_fn(100, 100, |x, y| match (x < 50, y < 50) {
            (true, true) => [0, 0, 0],
            (true, false) => [255, 0, 0],
            (false, true) => [0, 255, 0],
            (false, false) => [0, 0, 255],
        });
        assert!((image_entropy(&quarters) - 2.0).abs() < 1e-12);
        // Same bin: top three bits agree.
        assert_eq!(image_entropy(&halves([0, 0, 0], [31, 31, 31])), 0.0);
    }

    #[test]
    fn red_green_deuteranopia_loss() {
        // Oracle: red -> (147,147,0) bin (4,4,0); green -> (219,219,41) bin (6,6,1).
        // Both sides keep two equally filled bins, so nothing is lost.
        let r = cvd_information_loss(&halves([255, 0, 0], [0, 255, 0]), Deficiency::Deuteranopia, 0.1);
        assert!((r.entropy_original - 1.0).abs() < 1e-12);
        assert!((r.entropy_simulated - 1.0).abs() < 1e-12);
        assert!(r.relative_loss.abs() < 1e-12);
    }

    #[test]
    fn hex_colors() {
        assert_eq!(parse_hex_color("#e69f00"), Some([230, 159, 0]));
        assert_eq!(format_hex_color([230, 159, 0]), "#e69f00");
        assert_eq!(parse_hex_color("e69f00"), None);
        assert!(cvd_safe_palettes().len() >= 2);
        assert!(cvd_safe_palettes().iter().all(|p| p.colors.len() >= 5));
    }
}
