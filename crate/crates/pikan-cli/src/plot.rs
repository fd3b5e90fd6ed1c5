//! Minimal PNG line plots plus the plain two-column data files that keep
//! downstream checks renderer-independent.

use image::{Rgb, RgbImage};
use std::path::Path;

use pikan_core::{Error, Result};

const WIDTH: u32 = 900;
const HEIGHT: u32 = 620;
const MARGIN_L: u32 = 80;
const MARGIN_R: u32 = 30;
const MARGIN_T: u32 = 30;
const MARGIN_B: u32 = 50;

pub const SERIES_COLORS: [[u8; 3]; 6] = [
    [31, 119, 180],
    [214, 39, 40],
    [44, 160, 44],
    [255, 127, 14],
    [148, 103, 189],
    [23, 190, 207],
];

/// 5x7 bitmap glyphs for tick labels: digits, sign, dot, and `e`.
fn glyph(c: char) -> Option<[u8; 7]> {
    // Each row is the low 5 bits, MSB left.
    let rows = match c {
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        '-' => [0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00],
        '+' => [0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        'e' => [0x00, 0x00, 0x0E, 0x11, 0x1F, 0x10, 0x0E],
        _ => return None,
    };
    Some(rows)
}

fn draw_text(img: &mut RgbImage, x: i64, y: i64, text: &str) {
    let mut cx = x;
    for c in text.chars() {
        if let Some(rows) = glyph(c) {
            for (ry, row) in rows.iter().enumerate() {
                for rx in 0..5 {
                    if row & (1 << (4 - rx)) != 0 {
                        let px = cx + rx as i64;
                        let py = y + ry as i64;
                        if px >= 0 && py >= 0 && (px as u32) < WIDTH && (py as u32) < HEIGHT {
                            img.put_pixel(px as u32, py as u32, Rgb([40, 40, 40]));
                        }
                    }
                }
            }
        }
        cx += 6;
    }
}

fn draw_line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), color: Rgb<u8>) {
    let steps = (a.0 - b.0).abs().max((a.1 - b.1).abs()).ceil().max(1.0) as usize;
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let x = a.0 + t * (b.0 - a.0);
        let y = a.1 + t * (b.1 - a.1);
        if x >= 0.0 && y >= 0.0 && (x as u32) < WIDTH && (y as u32) < HEIGHT {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

/// Renders line series into a PNG, colored in [`SERIES_COLORS`] order.
/// With `log_y`, positive values are drawn on a log10 axis (non-positive
/// points are dropped).
pub fn render_line_plot(path: &Path, series: &[&[(f64, f64)]], log_y: bool) -> Result<()> {
    let transform = |y: f64| -> Option<f64> {
        if log_y {
            (y > 0.0).then(|| y.log10())
        } else {
            Some(y)
        }
    };
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for &(x, y) in s.iter() {
            if let Some(ty) = transform(y) {
                xs.push(x);
                ys.push(ty);
            }
        }
    }
    if xs.is_empty() {
        return Err(Error::InvalidArgument("nothing to plot".into()));
    }
    let (x0, x1) = (
        xs.iter().copied().fold(f64::INFINITY, f64::min),
        xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let (y0, y1) = (
        ys.iter().copied().fold(f64::INFINITY, f64::min),
        ys.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let xspan = (x1 - x0).max(1e-12);
    let yspan = (y1 - y0).max(1e-12);
    let plot_w = (WIDTH - MARGIN_L - MARGIN_R) as f64;
    let plot_h = (HEIGHT - MARGIN_T - MARGIN_B) as f64;
    let to_px = |x: f64, ty: f64| -> (f64, f64) {
        (
            MARGIN_L as f64 + (x - x0) / xspan * plot_w,
            MARGIN_T as f64 + (1.0 - (ty - y0) / yspan) * plot_h,
        )
    };

    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
    let frame = Rgb([90, 90, 90]);
    let (fl, fr) = (MARGIN_L as f64, (WIDTH - MARGIN_R) as f64);
    let (ft, fb) = (MARGIN_T as f64, (HEIGHT - MARGIN_B) as f64);
    draw_line(&mut img, (fl, ft), (fr, ft), frame);
    draw_line(&mut img, (fl, fb), (fr, fb), frame);
    draw_line(&mut img, (fl, ft), (fl, fb), frame);
    draw_line(&mut img, (fr, ft), (fr, fb), frame);

    // Ticks.
    for i in 0..=5 {
        let tx = x0 + xspan * i as f64 / 5.0;
        let (px, _) = to_px(tx, y0);
        draw_line(&mut img, (px, fb), (px, fb + 5.0), frame);
        let label = tick_label(tx);
        draw_text(
            &mut img,
            px as i64 - 3 * label.len() as i64,
            fb as i64 + 9,
            &label,
        );
    }
    for i in 0..=5 {
        let ty = y0 + yspan * i as f64 / 5.0;
        let (_, py) = to_px(x0, ty);
        draw_line(&mut img, (fl - 5.0, py), (fl, py), frame);
        let shown = if log_y { 10f64.powf(ty) } else { ty };
        let label = tick_label(shown);
        draw_text(
            &mut img,
            fl as i64 - 8 - 6 * label.len() as i64,
            py as i64 - 3,
            &label,
        );
    }

    for (si, s) in series.iter().enumerate() {
        let color = Rgb(SERIES_COLORS[si % SERIES_COLORS.len()]);
        let px: Vec<(f64, f64)> = s
            .iter()
            .filter_map(|&(x, y)| transform(y).map(|ty| to_px(x, ty)))
            .collect();
        for w in px.windows(2) {
            draw_line(&mut img, w[0], w[1], color);
        }
    }

    img.save(path)
        .map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Writes the plain two-column (or labeled multi-column) data behind a
/// plot.
pub fn write_plot_data(path: &Path, header: &str, rows: &[(f64, f64)]) -> Result<()> {
    let mut out = String::new();
    out.push_str("# ");
    out.push_str(header);
    out.push('\n');
    for &(a, b) in rows {
        out.push_str(&format!("{a} {b}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}
