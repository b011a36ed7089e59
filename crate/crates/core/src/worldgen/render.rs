use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::worldgen::shapes::{Color, ObjectSpec, Shape, CANVAS};

/// Rasterised object: the set of covered pixels, row-major sorted.
///
/// Everything else on the canvas is background `(0, 0, 0)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectMask {
    pub color: Color,
    pub pixels: Vec<(u8, u8)>,
}

fn inside(spec: &ObjectSpec, dx: f64, dy: f64) -> bool {
    let r = spec.size as f64 / 2.0;
    match spec.shape {
        Shape::Circle => dx * dx + dy * dy <= r * r,
        Shape::Ellipse => (dx / r).powi(2) + (dy / (r / 2.0)).powi(2) <= 1.0,
        Shape::Square => dx.abs() <= r && dy.abs() <= r,
        Shape::Rectangle => dx.abs() <= r && dy.abs() <= r / 2.0,
        Shape::Semicircle => {
            let dy = dy - r / 2.0;
            dy <= 0.0 && dx * dx + dy * dy <= r * r
        }
        Shape::Triangle => dy >= -r && dy <= r && dx.abs() <= r * (dy + r) / (2.0 * r),
        Shape::Cross => {
            let arm = r / 3.0;
            (dx.abs() <= r && dy.abs() <= arm) || (dy.abs() <= r && dx.abs() <= arm)
        }
        Shape::Pentagon => {
            // convex polygon, vertex pointing up, image y axis pointing down
            let verts: Vec<(f64, f64)> = (0..5)
                .map(|k| {
                    let a = -PI / 2.0 + 2.0 * PI * k as f64 / 5.0;
                    (r * a.cos(), r * a.sin())
                })
                .collect();
            (0..5).all(|k| {
                let (x0, y0) = verts[k];
                let (x1, y1) = verts[(k + 1) % 5];
                (x1 - x0) * (dy - y0) - (y1 - y0) * (dx - x0) >= 0.0
            })
        }
    }
}

/// Rasterises one object by sampling pixel centres.
pub fn render_scene(spec: &ObjectSpec) -> Result<ObjectMask> {
    if !spec.fits_canvas() {
        return Err(Error::OutOfCanvas);
    }
    let (hw, hh) = spec.half_extents();
    let (cx, cy) = (spec.x as f64, spec.y as f64);
    let x0 = (cx - hw).floor().max(0.0) as u32;
    let x1 = ((cx + hw).ceil() as u32).min(CANVAS);
    let y0 = (cy - hh).floor().max(0.0) as u32;
    let y1 = ((cy + hh).ceil() as u32).min(CANVAS);
    let mut pixels = Vec::new();
    for py in y0..y1 {
        for px in x0..x1 {
            if inside(spec, px as f64 + 0.5 - cx, py as f64 + 0.5 - cy) {
                pixels.push((px as u8, py as u8));
            }
        }
    }
    if pixels.is_empty() {
        return Err(Error::Generation(format!("{spec:?} rasterised to no pixels")));
    }
    pixels.sort_unstable_by_key(|&(x, y)| (y, x));
    Ok(ObjectMask {
        color: spec.color,
        pixels,
    })
}

impl ObjectMask {
    /// Full `128 × 128 × 3` RGB image.
    pub fn to_rgb(&self) -> Vec<u8> {
        self.to_rgb_filtered(|_, _| true)
    }

    pub fn to_rgb_filtered(&self, keep: impl Fn(u8, u8) -> bool) -> Vec<u8> {
        let mut img = vec![0u8; (CANVAS * CANVAS * 3) as usize];
        let rgb = self.color.rgb();
        for &(x, y) in &self.pixels {
            if keep(x, y) {
                let o = (y as usize * CANVAS as usize + x as usize) * 3;
                img[o..o + 3].copy_from_slice(&rgb);
            }
        }
        img
    }

    pub fn centroid(&self) -> (f64, f64) {
        let n = self.pixels.len() as f64;
        let (sx, sy) = self
            .pixels
            .iter()
            .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x as f64 + 0.5, b + y as f64 + 0.5));
        (sx / n, sy / n)
    }
}

/// Writes an RGB buffer of the canvas size as PNG.
pub fn write_png<W: std::io::Write>(out: W, rgb: &[u8]) -> Result<()> {
    let mut enc = png::Encoder::new(out, CANVAS, CANVAS);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc
        .write_header()
        .map_err(|e| Error::Format(format!("png header: {e}")))?;
    writer
        .write_image_data(rgb)
        .map_err(|e| Error::Format(format!("png data: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(shape: Shape, color: Color, size: u32, x: u32, y: u32) -> ObjectSpec {
        ObjectSpec { shape, color, size, x, y }
    }

    #[test]
    fn every_shape_renders_its_color() {
        for shape in Shape::ALL {
            for color in Color::ALL {
                let s = spec(shape, color, 20, 64, 64);
                let img = render_scene(&s).unwrap().to_rgb();
                let found = img.chunks_exact(3).any(|p| p == color.rgb());
                assert!(found, "{shape} {color}");
            }
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let s = spec(Shape::Pentagon, Color::Cyan, 31, 40, 90);
        assert_eq!(render_scene(&s).unwrap().to_rgb(), render_scene(&s).unwrap().to_rgb());
    }

    #[test]
    fn red_square_centroid_matches_position() {
        // scan the raw image rather than the mask
        let s = spec(Shape::Square, Color::Red, 24, 37, 81);
        let img = render_scene(&s).unwrap().to_rgb();
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
        for (i, p) in img.chunks_exact(3).enumerate() {
            if p == [255, 0, 0] {
                sx += (i % 128) as f64 + 0.5;
                sy += (i / 128) as f64 + 0.5;
                n += 1.0;
            }
        }
        assert!((sx / n - 37.0).abs() <= 2.0 && (sy / n - 81.0).abs() <= 2.0);
    }

    #[test]
    fn out_of_canvas_is_rejected() {
        let s = spec(Shape::Circle, Color::Red, 30, 5, 64);
        assert!(matches!(render_scene(&s), Err(Error::OutOfCanvas)));
    }

    #[test]
    fn shapes_are_distinguishable() {
        let masks: Vec<_> = Shape::ALL
            .iter()
            .map(|&sh| render_scene(&spec(sh, Color::Red, 30, 64, 64)).unwrap().pixels)
            .collect();
        for i in 0..masks.len() {
            for j in i + 1..masks.len() {
                assert_ne!(masks[i], masks[j]);
            }
        }
    }

    #[test]
    fn png_export_writes_signature() {
        let img = render_scene(&spec(Shape::Cross, Color::Yellow, 20, 64, 64)).unwrap().to_rgb();
        let mut buf = Vec::new();
        write_png(&mut buf, &img).unwrap();
        assert_eq!(&buf[1..4], b"PNG");
    }
}
