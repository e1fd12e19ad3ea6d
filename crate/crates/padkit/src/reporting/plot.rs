//! Deterministic raster plotting (no font or windowing dependencies).
//!
//! Output is plain PNG via the `image` crate; nothing time- or
//! environment-dependent is embedded, so byte-identical inputs produce
//! byte-identical files.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
const GRID: Rgb<u8> = Rgb([220, 220, 220]);

/// Curve/class palette.
pub const PALETTE: [Rgb<u8>; 10] = [
    Rgb([31, 119, 180]),
    Rgb([255, 127, 14]),
    Rgb([44, 160, 44]),
    Rgb([214, 39, 40]),
    Rgb([148, 103, 189]),
    Rgb([140, 86, 75]),
    Rgb([227, 119, 194]),
    Rgb([127, 127, 127]),
    Rgb([188, 189, 34]),
    Rgb([23, 190, 207]),
];

// 5x7 column-major glyphs (bit 0 = top row).
fn glyph(c: char) -> [u8; 5] {
    match c.to_ascii_uppercase() {
        'A' => [0x7E, 0x11, 0x11, 0x11, 0x7E],
        'B' => [0x7F, 0x49, 0x49, 0x49, 0x36],
        'C' => [0x3E, 0x41, 0x41, 0x41, 0x22],
        'D' => [0x7F, 0x41, 0x41, 0x22, 0x1C],
        'E' => [0x7F, 0x49, 0x49, 0x49, 0x41],
        'F' => [0x7F, 0x09, 0x09, 0x09, 0x01],
        'G' => [0x3E, 0x41, 0x49, 0x49, 0x7A],
        'H' => [0x7F, 0x08, 0x08, 0x08, 0x7F],
        'I' => [0x00, 0x41, 0x7F, 0x41, 0x00],
        'J' => [0x20, 0x40, 0x41, 0x3F, 0x01],
        'K' => [0x7F, 0x08, 0x14, 0x22, 0x41],
        'L' => [0x7F, 0x40, 0x40, 0x40, 0x40],
        'M' => [0x7F, 0x02, 0x0C, 0x02, 0x7F],
        'N' => [0x7F, 0x04, 0x08, 0x10, 0x7F],
        'O' => [0x3E, 0x41, 0x41, 0x41, 0x3E],
        'P' => [0x7F, 0x09, 0x09, 0x09, 0x06],
        'Q' => [0x3E, 0x41, 0x51, 0x21, 0x5E],
        'R' => [0x7F, 0x09, 0x19, 0x29, 0x46],
        'S' => [0x46, 0x49, 0x49, 0x49, 0x31],
        'T' => [0x01, 0x01, 0x7F, 0x01, 0x01],
        'U' => [0x3F, 0x40, 0x40, 0x40, 0x3F],
        'V' => [0x1F, 0x20, 0x40, 0x20, 0x1F],
        'W' => [0x3F, 0x40, 0x38, 0x40, 0x3F],
        'X' => [0x63, 0x14, 0x08, 0x14, 0x63],
        'Y' => [0x07, 0x08, 0x70, 0x08, 0x07],
        'Z' => [0x61, 0x51, 0x49, 0x45, 0x43],
        '0' => [0x3E, 0x51, 0x49, 0x45, 0x3E],
        '1' => [0x00, 0x42, 0x7F, 0x40, 0x00],
        '2' => [0x42, 0x61, 0x51, 0x49, 0x46],
        '3' => [0x21, 0x41, 0x45, 0x4B, 0x31],
        '4' => [0x18, 0x14, 0x12, 0x7F, 0x10],
        '5' => [0x27, 0x45, 0x45, 0x45, 0x39],
        '6' => [0x3C, 0x4A, 0x49, 0x49, 0x30],
        '7' => [0x01, 0x71, 0x09, 0x05, 0x03],
        '8' => [0x36, 0x49, 0x49, 0x49, 0x36],
        '9' => [0x06, 0x49, 0x49, 0x29, 0x1E],
        '-' => [0x08, 0x08, 0x08, 0x08, 0x08],
        '.' => [0x00, 0x60, 0x60, 0x00, 0x00],
        ',' => [0x00, 0x50, 0x30, 0x00, 0x00],
        '%' => [0x23, 0x13, 0x08, 0x64, 0x62],
        '<' => [0x08, 0x14, 0x22, 0x41, 0x00],
        '>' => [0x00, 0x41, 0x22, 0x14, 0x08],
        ':' => [0x00, 0x36, 0x36, 0x00, 0x00],
        '(' => [0x00, 0x1C, 0x22, 0x41, 0x00],
        ')' => [0x00, 0x41, 0x22, 0x1C, 0x00],
        '=' => [0x14, 0x14, 0x14, 0x14, 0x14],
        '+' => [0x08, 0x08, 0x3E, 0x08, 0x08],
        '/' => [0x20, 0x10, 0x08, 0x04, 0x02],
        '_' => [0x40, 0x40, 0x40, 0x40, 0x40],
        ' ' => [0x00; 5],
        _ => [0x7F, 0x41, 0x41, 0x41, 0x7F], // unknown: box
    }
}

pub struct Canvas {
    pub img: RgbImage,
}

impl Canvas {
    pub fn new(width: u32, height: u32) -> Self {
        let mut img = RgbImage::new(width, height);
        for p in img.pixels_mut() {
            *p = WHITE;
        }
        Self { img }
    }

    pub fn put(&mut self, x: i32, y: i32, color: Rgb<u8>) {
        if x >= 0 && y >= 0 && (x as u32) < self.img.width() && (y as u32) < self.img.height() {
            self.img.put_pixel(x as u32, y as u32, color);
        }
    }

    pub fn line(&mut self, x0: i32, y0: i32, x1: i32, y1: i32, color: Rgb<u8>) {
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let sx = if x0 < x1 { 1 } else { -1 };
        let sy = if y0 < y1 { 1 } else { -1 };
        let mut err = dx + dy;
        let (mut x, mut y) = (x0, y0);
        loop {
            self.put(x, y, color);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    /// Two-pixel-thick line (used for curves so they read over the grid).
    pub fn thick_line(&mut self, x0: i32, y0: i32, x1: i32, y1: i32, color: Rgb<u8>) {
        self.line(x0, y0, x1, y1, color);
        self.line(x0 + 1, y0, x1 + 1, y1, color);
        self.line(x0, y0 + 1, x1, y1 + 1, color);
    }

    pub fn text(&mut self, x: i32, y: i32, s: &str, color: Rgb<u8>) {
        let mut cx = x;
        for c in s.chars() {
            let g = glyph(c);
            for (col, bits) in g.iter().enumerate() {
                for row in 0..7 {
                    if bits & (1 << row) != 0 {
                        self.put(cx + col as i32, y + row, color);
                    }
                }
            }
            cx += 6;
        }
    }

    /// Vertical text: one character per row, for the y-axis label.
    pub fn text_vertical(&mut self, x: i32, y: i32, s: &str, color: Rgb<u8>) {
        for (i, c) in s.chars().enumerate() {
            self.text(x, y + (i as i32) * 9, &c.to_string(), color);
        }
    }

    pub fn filled_circle(&mut self, cx: i32, cy: i32, r: i32, color: Rgb<u8>) {
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy <= r * r {
                    self.put(cx + dx, cy + dy, color);
                }
            }
        }
    }

    pub fn filled_square(&mut self, cx: i32, cy: i32, r: i32, color: Rgb<u8>) {
        for dy in -r..=r {
            for dx in -r..=r {
                self.put(cx + dx, cy + dy, color);
            }
        }
    }

    pub fn cross(&mut self, cx: i32, cy: i32, r: i32, color: Rgb<u8>) {
        self.line(cx - r, cy - r, cx + r, cy + r, color);
        self.line(cx - r, cy + r, cx + r, cy - r, color);
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        self.img
            .save(path)
            .map_err(|e| Error::Reporting(format!("cannot write {}: {e}", path.display())))
    }
}

struct Axes {
    x0: i32,
    y0: i32, // bottom-left corner in pixels
    width: i32,
    height: i32,
}

impl Axes {
    fn map(&self, x: f64, y: f64) -> (i32, i32) {
        let px = self.x0 + (x.clamp(0.0, 1.0) * self.width as f64).round() as i32;
        let py = self.y0 - (y.clamp(0.0, 1.0) * self.height as f64).round() as i32;
        (px, py)
    }
}

/// Renders one panel with all ROC curves: x axis APCER, y axis 1−BPCER,
/// unit square, gridlines every 0.2, legend by curve name.
pub fn plot_roc(curves: &[(String, Vec<(f64, f64)>)], output: impl AsRef<Path>) -> Result<()> {
    if curves.is_empty() {
        return Err(Error::Reporting("no ROC curves to plot".into()));
    }
    for (name, points) in curves {
        if points.is_empty() {
            return Err(Error::Reporting(format!("curve '{name}' has no points")));
        }
    }
    let (w, h) = (720u32, 540u32);
    let mut canvas = Canvas::new(w, h);
    let axes = Axes {
        x0: 80,
        y0: h as i32 - 60,
        width: w as i32 - 110,
        height: h as i32 - 90,
    };

    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let (gx, _) = axes.map(v, 0.0);
        let (_, gy) = axes.map(0.0, v);
        canvas.line(gx, axes.y0, gx, axes.y0 - axes.height, GRID);
        canvas.line(axes.x0, gy, axes.x0 + axes.width, gy, GRID);
        canvas.text(gx - 8, axes.y0 + 8, &format!("{v:.1}"), BLACK);
        canvas.text(axes.x0 - 28, gy - 3, &format!("{v:.1}"), BLACK);
    }
    // axes box
    canvas.line(axes.x0, axes.y0, axes.x0 + axes.width, axes.y0, BLACK);
    canvas.line(axes.x0, axes.y0, axes.x0, axes.y0 - axes.height, BLACK);
    canvas.line(
        axes.x0 + axes.width,
        axes.y0,
        axes.x0 + axes.width,
        axes.y0 - axes.height,
        BLACK,
    );
    canvas.line(
        axes.x0,
        axes.y0 - axes.height,
        axes.x0 + axes.width,
        axes.y0 - axes.height,
        BLACK,
    );
    canvas.text(
        axes.x0 + axes.width / 2 - 15,
        h as i32 - 25,
        "APCER",
        BLACK,
    );
    canvas.text_vertical(18, axes.y0 - axes.height / 2 - 32, "1-BPCER", BLACK);

    for (ci, (_, points)) in curves.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        for pair in points.windows(2) {
            let (x0, y0) = axes.map(pair[0].0, pair[0].1);
            let (x1, y1) = axes.map(pair[1].0, pair[1].1);
            canvas.thick_line(x0, y0, x1, y1, color);
        }
    }

    // legend, bottom-right inside the axes
    let legend_x = axes.x0 + axes.width - 170;
    let mut legend_y = axes.y0 - 14 * curves.len() as i32 - 8;
    for (ci, (name, _)) in curves.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        canvas.thick_line(legend_x, legend_y + 3, legend_x + 22, legend_y + 3, color);
        canvas.text(legend_x + 28, legend_y, name, BLACK);
        legend_y += 14;
    }

    canvas.save(output.as_ref())
}

/// One embedded point with its legend classes.
#[derive(Debug, Clone)]
pub struct ScatterPoint {
    pub x: f64,
    pub y: f64,
    /// Color class (e.g. label, attack type, or dataset id).
    pub color_class: String,
    /// Marker class (dataset origin group).
    pub marker_class: String,
}

/// Scatter plot of a 2-D embedding; colors per color class, marker shape per
/// origin group.
pub fn plot_embedding(points: &[ScatterPoint], output: impl AsRef<Path>) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Reporting("no points to plot".into()));
    }
    let (w, h) = (720u32, 600u32);
    let mut canvas = Canvas::new(w, h);

    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        min_x = min_x.min(p.x);
        max_x = max_x.max(p.x);
        min_y = min_y.min(p.y);
        max_y = max_y.max(p.y);
    }
    let pad_x = ((max_x - min_x) * 0.05).max(1e-9);
    let pad_y = ((max_y - min_y) * 0.05).max(1e-9);
    min_x -= pad_x;
    max_x += pad_x;
    min_y -= pad_y;
    max_y += pad_y;

    let mut color_classes: Vec<String> = points.iter().map(|p| p.color_class.clone()).collect();
    color_classes.sort();
    color_classes.dedup();
    let mut marker_classes: Vec<String> = points.iter().map(|p| p.marker_class.clone()).collect();
    marker_classes.sort();
    marker_classes.dedup();

    let plot_w = w as i32 - 40;
    let plot_h = h as i32 - 120;
    let to_px = |x: f64, y: f64| {
        let px = 20 + ((x - min_x) / (max_x - min_x) * plot_w as f64).round() as i32;
        let py = 20 + ((max_y - y) / (max_y - min_y) * plot_h as f64).round() as i32;
        (px, py)
    };

    for p in points {
        let (px, py) = to_px(p.x, p.y);
        let ci = color_classes.iter().position(|c| c == &p.color_class).unwrap();
        let mi = marker_classes.iter().position(|m| m == &p.marker_class).unwrap();
        let color = PALETTE[ci % PALETTE.len()];
        match mi % 3 {
            0 => canvas.filled_square(px, py, 2, color),
            1 => canvas.cross(px, py, 3, color),
            _ => canvas.filled_circle(px, py, 2, color),
        }
    }

    // legend rows under the plot
    let mut ly = h as i32 - 90;
    for (ci, class) in color_classes.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        canvas.filled_square(26, ly + 3, 3, color);
        canvas.text(36, ly, class, BLACK);
        ly += 12;
    }
    let mut my = h as i32 - 90;
    for (mi, class) in marker_classes.iter().enumerate() {
        let x = w as i32 / 2;
        match mi % 3 {
            0 => canvas.filled_square(x, my + 3, 3, BLACK),
            1 => canvas.cross(x, my + 3, 3, BLACK),
            _ => canvas.filled_circle(x, my + 3, 3, BLACK),
        }
        canvas.text(x + 10, my, class, BLACK);
        my += 12;
    }

    canvas.save(output.as_ref())
}
