//! Training-time image augmentation.
//!
//! The five transforms are applied in a fixed order with independently drawn
//! parameters: horizontal flip, shift/scale/rotate, gamma adjustment, RGB
//! shift, and color jitter. All draws come from the caller's seeded rng, so
//! the output is a pure function of `(image, config, seed)`.

use image::{Rgb, RgbImage};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationConfig {
    pub enabled: bool,
    pub hflip_probability: f64,
    /// One knob for the affine transform: shift up to this fraction of the
    /// image side, scale within `1 ± limit`, rotate within `± 45°·limit`.
    pub shift_scale_rotate_limit: f64,
    /// Gamma sampled uniformly in `[low, high] / 100` (e.g. `(80, 180)`).
    pub gamma_range: (u32, u32),
    /// Per-channel additive shift drawn from `[-limit, limit]`.
    pub rgb_shift_limit: i32,
    /// Brightness/contrast/saturation factors within `1 ± limit`, hue
    /// rotation within `± limit` of the full circle.
    pub color_jitter_limit: f64,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            hflip_probability: 0.5,
            shift_scale_rotate_limit: 0.1,
            gamma_range: (80, 180),
            rgb_shift_limit: 20,
            color_jitter_limit: 0.1,
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    /// All transforms drawn but mathematically the identity.
    pub fn identity() -> Self {
        Self {
            enabled: true,
            hflip_probability: 0.0,
            shift_scale_rotate_limit: 0.0,
            gamma_range: (100, 100),
            rgb_shift_limit: 0,
            color_jitter_limit: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.hflip_probability) {
            return Err(Error::Config(
                "hflip_probability must be in [0, 1]".into(),
            ));
        }
        if self.shift_scale_rotate_limit < 0.0 {
            return Err(Error::Config(
                "shift_scale_rotate_limit must be >= 0".into(),
            ));
        }
        // Equal bounds pin gamma to one value (the identity config needs
        // exactly 1.0); an inverted range is rejected.
        if self.gamma_range.0 > self.gamma_range.1 {
            return Err(Error::Config(
                "gamma_range.low must be <= gamma_range.high".into(),
            ));
        }
        if self.rgb_shift_limit < 0 {
            return Err(Error::Config("rgb_shift_limit must be >= 0".into()));
        }
        if self.color_jitter_limit < 0.0 {
            return Err(Error::Config("color_jitter_limit must be >= 0".into()));
        }
        Ok(())
    }
}

/// Parameters for one augmentation application, all drawn up front in a
/// fixed order so the rng stream layout never depends on the values.
struct Draw {
    flip: bool,
    shift_x: f64,
    shift_y: f64,
    scale: f64,
    angle_deg: f64,
    gamma: f64,
    rgb_shift: [i32; 3],
    brightness: f64,
    contrast: f64,
    saturation: f64,
    hue: f64,
}

fn draw_params(cfg: &AugmentationConfig, rng: &mut ChaCha8Rng) -> Draw {
    let sym = |rng: &mut ChaCha8Rng, l: f64| {
        if l > 0.0 {
            rng.random_range(-l..=l)
        } else {
            0.0
        }
    };
    let factor = |rng: &mut ChaCha8Rng, l: f64| 1.0 + sym(rng, l);
    let flip = rng.random::<f64>() < cfg.hflip_probability;
    let l = cfg.shift_scale_rotate_limit;
    let shift_x = sym(rng, l);
    let shift_y = sym(rng, l);
    let scale = factor(rng, l);
    let angle_deg = sym(rng, 45.0 * l);
    let gamma = rng.random_range(cfg.gamma_range.0 as f64..=cfg.gamma_range.1 as f64) / 100.0;
    let s = cfg.rgb_shift_limit;
    let mut rgb_shift = [0i32; 3];
    for c in rgb_shift.iter_mut() {
        *c = if s > 0 { rng.random_range(-s..=s) } else { 0 };
    }
    Draw {
        flip,
        shift_x,
        shift_y,
        scale,
        angle_deg,
        gamma,
        rgb_shift,
        brightness: factor(rng, cfg.color_jitter_limit),
        contrast: factor(rng, cfg.color_jitter_limit),
        saturation: factor(rng, cfg.color_jitter_limit),
        hue: sym(rng, cfg.color_jitter_limit),
    }
}

/// Applies the configured augmentation. Deterministic given the rng state; a
/// disabled config returns the input unchanged.
pub fn augment(image: &RgbImage, cfg: &AugmentationConfig, rng: &mut ChaCha8Rng) -> RgbImage {
    if !cfg.enabled {
        return image.clone();
    }
    let p = draw_params(cfg, rng);
    let mut out = image.clone();
    if p.flip {
        out = image::imageops::flip_horizontal(&out);
    }
    if p.shift_x != 0.0 || p.shift_y != 0.0 || p.scale != 1.0 || p.angle_deg != 0.0 {
        out = affine_bilinear(&out, p.shift_x, p.shift_y, p.scale, p.angle_deg);
    }
    if p.gamma != 1.0 {
        apply_gamma(&mut out, p.gamma);
    }
    if p.rgb_shift != [0, 0, 0] {
        apply_rgb_shift(&mut out, p.rgb_shift);
    }
    if p.brightness != 1.0 || p.contrast != 1.0 || p.saturation != 1.0 || p.hue != 0.0 {
        apply_color_jitter(&mut out, p.brightness, p.contrast, p.saturation, p.hue);
    }
    out
}

/// Reflect-101 border handling (mirror about the edge pixel).
fn reflect(i: i64, n: i64) -> i64 {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut j = i % period;
    if j < 0 {
        j += period;
    }
    if j >= n {
        period - j
    } else {
        j
    }
}

/// Shift (fraction of side), uniform scale and rotation about the center,
/// sampled with bilinear interpolation.
fn affine_bilinear(img: &RgbImage, shift_x: f64, shift_y: f64, scale: f64, angle_deg: f64) -> RgbImage {
    let (w, h) = img.dimensions();
    let (wf, hf) = (w as f64, h as f64);
    let cx = (wf - 1.0) / 2.0;
    let cy = (hf - 1.0) / 2.0;
    let theta = angle_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let inv_scale = 1.0 / scale;
    let tx = shift_x * wf;
    let ty = shift_y * hf;

    let mut out = RgbImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            // Invert: output → remove shift → un-rotate/un-scale about center.
            let dx = x as f64 - tx - cx;
            let dy = y as f64 - ty - cy;
            let sx = (cos * dx + sin * dy) * inv_scale + cx;
            let sy = (-sin * dx + cos * dy) * inv_scale + cy;
            out.put_pixel(x, y, sample_bilinear(img, sx, sy));
        }
    }
    out
}

fn sample_bilinear(img: &RgbImage, x: f64, y: f64) -> Rgb<u8> {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x0 = x.floor() as i64;
    let y0 = y.floor() as i64;
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let px = |xi: i64, yi: i64| -> [f64; 3] {
        let p = img.get_pixel(reflect(xi, w) as u32, reflect(yi, h) as u32);
        [p[0] as f64, p[1] as f64, p[2] as f64]
    };
    let p00 = px(x0, y0);
    let p10 = px(x0 + 1, y0);
    let p01 = px(x0, y0 + 1);
    let p11 = px(x0 + 1, y0 + 1);
    let mut out = [0u8; 3];
    for c in 0..3 {
        let top = p00[c] * (1.0 - fx) + p10[c] * fx;
        let bottom = p01[c] * (1.0 - fx) + p11[c] * fx;
        out[c] = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
    }
    Rgb(out)
}

fn apply_gamma(img: &mut RgbImage, gamma: f64) {
    let mut lut = [0u8; 256];
    for (i, v) in lut.iter_mut().enumerate() {
        *v = ((i as f64 / 255.0).powf(gamma) * 255.0).round().clamp(0.0, 255.0) as u8;
    }
    for p in img.pixels_mut() {
        for c in 0..3 {
            p[c] = lut[p[c] as usize];
        }
    }
}

fn apply_rgb_shift(img: &mut RgbImage, shift: [i32; 3]) {
    for p in img.pixels_mut() {
        for c in 0..3 {
            p[c] = (p[c] as i32 + shift[c]).clamp(0, 255) as u8;
        }
    }
}

fn luma(p: [f64; 3]) -> f64 {
    0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
}

fn apply_color_jitter(img: &mut RgbImage, brightness: f64, contrast: f64, saturation: f64, hue: f64) {
    // Contrast pivots on the mean luminance of the image.
    let mut mean = 0.0;
    for p in img.pixels() {
        mean += luma([p[0] as f64, p[1] as f64, p[2] as f64]);
    }
    mean /= (img.width() * img.height()) as f64;

    for p in img.pixels_mut() {
        let mut v = [p[0] as f64, p[1] as f64, p[2] as f64];
        for c in v.iter_mut() {
            *c *= brightness;
        }
        for c in v.iter_mut() {
            *c = mean + (*c - mean) * contrast;
        }
        let l = luma(v);
        for c in v.iter_mut() {
            *c = l + (*c - l) * saturation;
        }
        if hue != 0.0 {
            v = rotate_hue(v, hue * 360.0);
        }
        *p = Rgb([
            v[0].round().clamp(0.0, 255.0) as u8,
            v[1].round().clamp(0.0, 255.0) as u8,
            v[2].round().clamp(0.0, 255.0) as u8,
        ]);
    }
}

/// Hue rotation in HSV space by `degrees`.
fn rotate_hue(rgb: [f64; 3], degrees: f64) -> [f64; 3] {
    let (r, g, b) = (rgb[0] / 255.0, rgb[1] / 255.0, rgb[2] / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let mut h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * (((g - b) / delta) % 6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    let v = max;

    h = (h + degrees).rem_euclid(360.0);

    let c = v * s;
    let xcomp = c * (1.0 - ((h / 60.0) % 2.0 - 1.0).abs());
    let m = v - c;
    let (r1, g1, b1) = match (h / 60.0) as u32 {
        0 => (c, xcomp, 0.0),
        1 => (xcomp, c, 0.0),
        2 => (0.0, c, xcomp),
        3 => (0.0, xcomp, c),
        4 => (xcomp, 0.0, c),
        _ => (c, 0.0, xcomp),
    };
    [(r1 + m) * 255.0, (g1 + m) * 255.0, (b1 + m) * 255.0]
}
