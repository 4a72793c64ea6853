//! Synthetic phase objects used in place of recorded radiographs.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::Image2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phantom {
    /// Sum of overlapping Gaussian bumps.
    Blob,
    /// Terraced plateaus with softened edges.
    Steps,
    /// Block lettering, softened.
    TextMask,
}

impl Phantom {
    pub const ALL: [Phantom; 3] = [Phantom::Blob, Phantom::Steps, Phantom::TextMask];

    pub fn name(&self) -> &'static str {
        match self {
            Phantom::Blob => "blob",
            Phantom::Steps => "steps",
            Phantom::TextMask => "text-mask",
        }
    }
}

impl FromStr for Phantom {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blob" => Ok(Phantom::Blob),
            "steps" => Ok(Phantom::Steps),
            "text-mask" | "text" => Ok(Phantom::TextMask),
            _ => Err(Error::Usage(format!("unknown phantom '{s}' (expected blob, steps, text-mask or file)"))),
        }
    }
}

/// Phase map in `[0, amplitude]` radians.
pub fn generate(kind: Phantom, rows: usize, cols: usize, amplitude: f64) -> Result<Image2D> {
    if rows < 4 || cols < 4 {
        return Err(Error::Dimension(format!("phantom needs at least 4x4 pixels, got {rows}x{cols}")));
    }
    let raw = match kind {
        Phantom::Blob => blob(rows, cols),
        Phantom::Steps => gaussian_blur(&steps(rows, cols), rows.min(cols) as f64 / 64.0),
        Phantom::TextMask => gaussian_blur(&text_mask(rows, cols), rows.min(cols) as f64 / 80.0),
    };
    let (lo, hi) = (raw.min(), raw.max());
    Ok(raw.map(|v| if hi > lo { amplitude * (v - lo) / (hi - lo) } else { 0.0 }))
}

fn blob(rows: usize, cols: usize) -> Image2D {
    let bumps = [(0.5, 0.5, 0.18, 1.0), (0.3, 0.35, 0.08, 0.6), (0.68, 0.7, 0.1, 0.8), (0.7, 0.3, 0.06, -0.4)];
    Image2D::from_fn(rows, cols, |r, c| {
        let (y, x) = ((r as f64 + 0.5) / rows as f64, (c as f64 + 0.5) / cols as f64);
        bumps.iter().map(|(cy, cx, s, a)| a * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * s * s)).exp()).sum()
    })
}

fn steps(rows: usize, cols: usize) -> Image2D {
    Image2D::from_fn(rows, cols, |r, c| {
        let (y, x) = ((r as f64 + 0.5) / rows as f64, (c as f64 + 0.5) / cols as f64);
        let d = ((x - 0.5).powi(2) + (y - 0.5).powi(2)).sqrt();
        let ring = if d < 0.12 { 3.0 } else if d < 0.25 { 2.0 } else if d < 0.38 { 1.0 } else { 0.0 };
        let bar = if (0.15..0.3).contains(&x) && (0.6..0.85).contains(&y) { 1.5 } else { 0.0 };
        ring + bar
    })
}

const GLYPHS: [(char, [u8; 7]); 5] = [
    ('P', [0b11110, 0b10001, 0b10001, 0b11110, 0b10000, 0b10000, 0b10000]),
    ('H', [0b10001, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001]),
    ('A', [0b01110, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001]),
    ('S', [0b01111, 0b10000, 0b10000, 0b01110, 0b00001, 0b00001, 0b11110]),
    ('E', [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b11111]),
];

/// "PHASE" in a 5x7 font, scaled to span most of the width.
fn text_mask(rows: usize, cols: usize) -> Image2D {
    let word = "PHASE";
    let cells_w = word.len() * 6 - 1;
    let scale = ((cols as f64 * 0.85) / cells_w as f64).min(rows as f64 * 0.6 / 7.0).max(0.5);
    let (w, h) = (cells_w as f64 * scale, 7.0 * scale);
    let (x0, y0) = ((cols as f64 - w) / 2.0, (rows as f64 - h) / 2.0);
    Image2D::from_fn(rows, cols, |r, c| {
        let (gx, gy) = (((c as f64 + 0.5 - x0) / scale).floor(), ((r as f64 + 0.5 - y0) / scale).floor());
        if gx < 0.0 || !(0.0..7.0).contains(&gy) || gx >= cells_w as f64 {
            return 0.0;
        }
        let (gx, gy) = (gx as usize, gy as usize);
        let (letter, col) = (gx / 6, gx % 6);
        if col == 5 {
            return 0.0;
        }
        let ch = word.as_bytes()[letter] as char;
        let rowbits = GLYPHS.iter().find(|(g, _)| *g == ch).expect("glyph").1[gy];
        f64::from((rowbits >> (4 - col)) & 1)
    })
}

/// Occluding random grey disks with radii drawn from a `r^-3` law, lightly
/// blurred. Scale-invariant texture with natural-image-like local statistics.
pub fn dead_leaves(rows: usize, cols: usize, seed: u64) -> Image2D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rmin, rmax) = (3.0, rows.max(cols) as f64 / 2.0);
    let mut img = Image2D::filled(rows, cols, rng.gen_range(0.0..1.0));
    let mut covered = vec![false; rows * cols];
    let mut remaining = rows * cols;
    // leaves are painted front to back, so each pixel keeps the first disk that covers it
    for _ in 0..20_000 {
        if remaining == 0 {
            break;
        }
        let u: f64 = rng.gen_range(0.0..1.0);
        // inverse CDF of p(r) ~ r^-3 on [rmin, rmax]
        let r = 1.0 / (1.0 / (rmin * rmin) - u * (1.0 / (rmin * rmin) - 1.0 / (rmax * rmax))).sqrt();
        let (cy, cx) = (rng.gen_range(-r..rows as f64 + r), rng.gen_range(-r..cols as f64 + r));
        let grey = rng.gen_range(0.0..1.0);
        let (r0, r1) = ((cy - r).floor().max(0.0) as usize, ((cy + r).ceil().max(0.0) as usize).min(rows));
        let (c0, c1) = ((cx - r).floor().max(0.0) as usize, ((cx + r).ceil().max(0.0) as usize).min(cols));
        for y in r0..r1 {
            for x in c0..c1 {
                let k = y * cols + x;
                if !covered[k] && (y as f64 + 0.5 - cy).powi(2) + (x as f64 + 0.5 - cx).powi(2) <= r * r {
                    covered[k] = true;
                    remaining -= 1;
                    img.data_mut()[k] = grey;
                }
            }
        }
    }
    gaussian_blur(&img, 1.0)
}

/// Separable Gaussian blur with zero-flux (clamped) borders.
pub fn gaussian_blur(img: &Image2D, sigma: f64) -> Image2D {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = kernel.iter().sum();
    let (rows, cols) = img.shape();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let tmp = Image2D::from_fn(rows, cols, |r, c| {
        kernel.iter().enumerate().map(|(k, w)| w * img.get(r, clamp(c as isize + k as isize - radius, cols))).sum::<f64>() / norm
    });
    Image2D::from_fn(rows, cols, |r, c| {
        kernel.iter().enumerate().map(|(k, w)| w * tmp.get(clamp(r as isize + k as isize - radius, rows), c)).sum::<f64>() / norm
    })
}

/// Adds i.i.d. Gaussian noise of standard deviation `sigma`, clamping at zero.
pub fn add_noise(img: &Image2D, sigma: f64, seed: u64) -> Image2D {
    if sigma <= 0.0 {
        return img.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr::Normal::new(0.0, sigma).expect("positive sigma");
    let mut out = img.clone();
    out.data_mut().iter_mut().for_each(|v| *v = (*v + rng.sample(normal)).max(0.0));
    out
}
