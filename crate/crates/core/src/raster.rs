//! Low-level 8-bit RGB raster operations: resize and blit.
//!
//! Resampling conventions are pinned here rather than delegated to an image
//! library so collage composition is byte-reproducible: pixel-center sampling
//! (`src = (dst + 0.5) * scale - 0.5`), edge clamping, and round-half-up
//! quantization back to u8.

use crate::domain::ViewImage;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Bilinear,
    Nearest,
}

/// Resize to `(dst_w, dst_h)`. A same-size resize is an exact copy under
/// either interpolation mode.
pub fn resize(src: &ViewImage, dst_w: u32, dst_h: u32, interp: Interpolation) -> ViewImage {
    assert!(dst_w > 0 && dst_h > 0);
    if src.width() == dst_w && src.height() == dst_h {
        return src.clone();
    }
    match interp {
        Interpolation::Bilinear => resize_bilinear(src, dst_w, dst_h),
        Interpolation::Nearest => resize_nearest(src, dst_w, dst_h),
    }
}

fn resize_nearest(src: &ViewImage, dst_w: u32, dst_h: u32) -> ViewImage {
    let (sw, sh) = (src.width() as f64, src.height() as f64);
    let scale_x = sw / dst_w as f64;
    let scale_y = sh / dst_h as f64;
    let mut out = ViewImage::filled(dst_w, dst_h, [0, 0, 0]);
    for dy in 0..dst_h {
        let sy = (((dy as f64 + 0.5) * scale_y).floor() as i64).clamp(0, src.height() as i64 - 1);
        for dx in 0..dst_w {
            let sx = (((dx as f64 + 0.5) * scale_x).floor() as i64).clamp(0, src.width() as i64 - 1);
            out.set_pixel(dx, dy, src.pixel(sx as u32, sy as u32));
        }
    }
    out
}

fn resize_bilinear(src: &ViewImage, dst_w: u32, dst_h: u32) -> ViewImage {
    let scale_x = src.width() as f64 / dst_w as f64;
    let scale_y = src.height() as f64 / dst_h as f64;
    let max_x = src.width() as i64 - 1;
    let max_y = src.height() as i64 - 1;
    let mut out = ViewImage::filled(dst_w, dst_h, [0, 0, 0]);
    for dy in 0..dst_h {
        let sy = (dy as f64 + 0.5) * scale_y - 0.5;
        let y0 = sy.floor();
        let fy = sy - y0;
        let y0i = (y0 as i64).clamp(0, max_y) as u32;
        let y1i = (y0 as i64 + 1).clamp(0, max_y) as u32;
        for dx in 0..dst_w {
            let sx = (dx as f64 + 0.5) * scale_x - 0.5;
            let x0 = sx.floor();
            let fx = sx - x0;
            let x0i = (x0 as i64).clamp(0, max_x) as u32;
            let x1i = (x0 as i64 + 1).clamp(0, max_x) as u32;

            let p00 = src.pixel(x0i, y0i);
            let p10 = src.pixel(x1i, y0i);
            let p01 = src.pixel(x0i, y1i);
            let p11 = src.pixel(x1i, y1i);
            let mut rgb = [0u8; 3];
            for c in 0..3 {
                let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
                let bot = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
                let v = top * (1.0 - fy) + bot * fy;
                rgb[c] = (v + 0.5).floor().clamp(0.0, 255.0) as u8;
            }
            out.set_pixel(dx, dy, rgb);
        }
    }
    out
}

/// Copy `src` into `dst` with its top-left corner at `(x, y)`.
/// The source must fit entirely inside the destination.
pub fn blit(dst: &mut ViewImage, src: &ViewImage, x: u32, y: u32) {
    assert!(x + src.width() <= dst.width() && y + src.height() <= dst.height());
    let row_bytes = (src.width() * 3) as usize;
    for sy in 0..src.height() {
        let src_off = (sy * src.width() * 3) as usize;
        let dst_off = (((y + sy) * dst.width() + x) * 3) as usize;
        dst.pixels_mut()[dst_off..dst_off + row_bytes]
            .copy_from_slice(&src.pixels()[src_off..src_off + row_bytes]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_image_is_invariant_under_resize() {
        let img = ViewImage::filled(17, 9, [128, 64, 200]);
        for interp in [Interpolation::Bilinear, Interpolation::Nearest] {
            let out = resize(&img, 31, 13, interp);
            for y in 0..out.height() {
                for x in 0..out.width() {
                    assert_eq!(out.pixel(x, y), [128, 64, 200]);
                }
            }
        }
    }

    #[test]
    fn same_size_resize_is_identity() {
        let mut img = ViewImage::filled(5, 4, [0, 0, 0]);
        for y in 0..4 {
            for x in 0..5 {
                img.set_pixel(x, y, [x as u8 * 10, y as u8 * 20, 7]);
            }
        }
        assert_eq!(resize(&img, 5, 4, Interpolation::Bilinear), img);
        assert_eq!(resize(&img, 5, 4, Interpolation::Nearest), img);
    }

    #[test]
    fn nearest_upscale_replicates_pixels() {
        let mut img = ViewImage::filled(2, 1, [0, 0, 0]);
        img.set_pixel(0, 0, [10, 0, 0]);
        img.set_pixel(1, 0, [20, 0, 0]);
        let out = resize(&img, 4, 1, Interpolation::Nearest);
        assert_eq!(out.pixel(0, 0), [10, 0, 0]);
        assert_eq!(out.pixel(1, 0), [10, 0, 0]);
        assert_eq!(out.pixel(2, 0), [20, 0, 0]);
        assert_eq!(out.pixel(3, 0), [20, 0, 0]);
    }

    #[test]
    fn bilinear_downscale_averages_2x2_blocks() {
        // A 2x2 block downscaled to 1x1 samples the exact block center.
        let mut img = ViewImage::filled(2, 2, [0, 0, 0]);
        img.set_pixel(0, 0, [0, 0, 0]);
        img.set_pixel(1, 0, [100, 0, 0]);
        img.set_pixel(0, 1, [100, 0, 0]);
        img.set_pixel(1, 1, [200, 0, 0]);
        let out = resize(&img, 1, 1, Interpolation::Bilinear);
        assert_eq!(out.pixel(0, 0), [100, 0, 0]);
    }

    #[test]
    fn blit_places_tile_at_offset() {
        let mut canvas = ViewImage::filled(4, 3, [1, 1, 1]);
        let tile = ViewImage::filled(2, 2, [9, 9, 9]);
        blit(&mut canvas, &tile, 2, 1);
        assert_eq!(canvas.pixel(1, 1), [1, 1, 1]);
        assert_eq!(canvas.pixel(2, 1), [9, 9, 9]);
        assert_eq!(canvas.pixel(3, 2), [9, 9, 9]);
        assert_eq!(canvas.pixel(0, 0), [1, 1, 1]);
    }
}
