//! Dichromacy simulation as a projection in linear RGB.
//!
//! The matrices project every color onto the plane of colors a dichromat
//! can distinguish, so applying a simulation twice changes nothing beyond
//! 8-bit rounding and gray stays gray.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::image_entropy;
use crate::ingest::ChartImage;

pub const DEFAULT_CVD_LOSS_THRESHOLD: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Deficiency {
    Deuteranopia,
    Protanopia,
    Tritanopia,
}

impl Deficiency {
    pub const ALL: [Deficiency; 3] = [Deficiency::Deuteranopia, Deficiency::Protanopia, Deficiency::Tritanopia];

    pub fn as_str(self) -> &'static str {
        match self {
            Deficiency::Deuteranopia => "deuteranopia",
            Deficiency::Protanopia => "protanopia",
            Deficiency::Tritanopia => "tritanopia",
        }
    }

    pub fn matrix(self) -> [[f64; 3]; 3] {
        match self {
            Deficiency::Protanopia => [
                [0.11238, 0.88762, 0.0],
                [0.11238, 0.88762, 0.0],
                [0.00401, -0.00401, 1.0],
            ],
            Deficiency::Deuteranopia => [
                [0.29275, 0.70725, 0.0],
                [0.29275, 0.70725, 0.0],
                [-0.02234, 0.02234, 1.0],
            ],
            Deficiency::Tritanopia => [
                [1.0, 0.14461, -0.14461],
                [0.0, 0.85924, 0.14076],
                [0.0, 0.85924, 0.14076],
            ],
        }
    }

    /// Artifact file name for the simulated image.
    pub fn artifact_name(self) -> String {
        format!("cvd_{}.png", self.as_str())
    }
}

impl fmt::Display for Deficiency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Deficiency {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Deficiency::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| format!("unknown deficiency `{s}`"))
    }
}

fn decode_table() -> &'static [f64; 256] {
    static TABLE: OnceLock<[f64; 256]> = OnceLock::new();
    TABLE.get_or_init(|| std::array::from_fn(|i| srgb_to_linear(i as u8)))
}

pub fn srgb_to_linear(v: u8) -> f64 {
    let c = v as f64 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

pub fn linear_to_srgb(l: f64) -> u8 {
    let l = l.clamp(0.0, 1.0);
    let s = if l <= 0.0031308 {
        12.92 * l
    } else {
        1.055 * l.powf(1.0 / 2.4) - 0.055
    };
    (s * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn simulate_pixel(px: [u8; 3], deficiency: Deficiency) -> [u8; 3] {
    let table = decode_table();
    let lin = px.map(|v| table[v as usize]);
    let m = deficiency.matrix();
    [0, 1, 2].map(|r| linear_to_srgb(m[r][0] * lin[0] + m[r][1] * lin[1] + m[r][2] * lin[2]))
}

pub fn simulate_cvd(img: &ChartImage, deficiency: Deficiency) -> ChartImage {
    img.map_pixels(|px| simulate_pixel(px, deficiency))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvdResult {
    pub deficiency: Deficiency,
    #[serde(skip)]
    pub simulated: Option<ChartImage>,
    pub entropy_original: f64,
    pub entropy_simulated: f64,
    pub relative_loss: f64,
    pub significantly_affected: bool,
}

pub fn relative_loss(entropy_original: f64, entropy_simulated: f64) -> f64 {
    if entropy_original > 0.0 {
        (entropy_original - entropy_simulated) / entropy_original
    } else {
        0.0
    }
}

pub fn cvd_information_loss(img: &ChartImage, deficiency: Deficiency, loss_threshold: f64) -> CvdResult {
    let simulated = simulate_cvd(img, deficiency);
    let entropy_original = image_entropy(img);
    let entropy_simulated = image_entropy(&simulated);
    let loss = relative_loss(entropy_original, entropy_simulated);
    CvdResult {
        deficiency,
        simulated: Some(simulated),
        entropy_original,
        entropy_simulated,
        relative_loss: loss,
        significantly_affected: loss > loss_threshold,
    }
}
