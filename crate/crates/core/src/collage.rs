//! Compose a sample's views into the single image the classifier consumes,
//! plus the single-view ablation helper.

use crate::domain::{Collage, OrangeSample, ViewImage};
use crate::raster::{blit, resize, Interpolation};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CollageError {
    #[error("view index {index} out of range: sample has {available} views")]
    ViewIndexOutOfRange { index: usize, available: usize },
}

/// Geometry of the composed image.
///
/// Defaults follow the production pipeline: one row of 300x300 tiles,
/// assembled then resized to 2500x300. `pad_to_final` switches the assembly
/// rule from resize-after-concatenation to pad-without-stretching whenever the
/// mosaic fits inside the final canvas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollageLayout {
    pub rows: u32,
    pub tile_size: u32,
    pub final_width: u32,
    pub final_height: u32,
    pub pad_color: [u8; 3],
    pub interpolation: Interpolation,
    pub pad_to_final: bool,
}

impl Default for CollageLayout {
    fn default() -> Self {
        CollageLayout {
            rows: 1,
            tile_size: 300,
            final_width: 2500,
            final_height: 300,
            pad_color: [0, 0, 0],
            interpolation: Interpolation::Bilinear,
            pad_to_final: false,
        }
    }
}

impl CollageLayout {
    /// Reduced geometry for CPU-friendly experiments: square tiles of
    /// `tile` pixels, one row, final canvas `8*tile x tile`.
    pub fn reduced(tile: u32) -> Self {
        CollageLayout {
            tile_size: tile,
            final_width: 8 * tile,
            final_height: tile,
            ..CollageLayout::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.rows == 0 || self.tile_size == 0 || self.final_width == 0 || self.final_height == 0
        {
            return Err("collage layout dimensions must be positive".to_string());
        }
        Ok(())
    }
}

/// Compose every view of `sample` into one RGB image.
///
/// Views are resized to square tiles and placed left-to-right, top-to-bottom
/// in acquisition order into `rows` x ceil(n/rows) grid cells; unused cells
/// take the pad color; the assembled mosaic is then brought to the final
/// dimensions (stretch by default, pad when `pad_to_final` is set and the
/// mosaic fits).
pub fn compose_collage(sample: &OrangeSample, layout: &CollageLayout) -> Collage {
    let n = sample.view_count() as u32;
    let rows = layout.rows.min(n).max(1);
    let cols = n.div_ceil(rows);
    let tile = layout.tile_size;

    let mut mosaic = ViewImage::filled(cols * tile, rows * tile, layout.pad_color);
    for (i, view) in sample.views().iter().enumerate() {
        let scaled = resize(view, tile, tile, layout.interpolation);
        let r = i as u32 / cols;
        let c = i as u32 % cols;
        blit(&mut mosaic, &scaled, c * tile, r * tile);
    }

    let image = if layout.pad_to_final
        && mosaic.width() <= layout.final_width
        && mosaic.height() <= layout.final_height
    {
        let mut canvas =
            ViewImage::filled(layout.final_width, layout.final_height, layout.pad_color);
        blit(&mut canvas, &mosaic, 0, 0);
        canvas
    } else {
        resize(&mosaic, layout.final_width, layout.final_height, layout.interpolation)
    };

    Collage { image, source_id: sample.id.clone(), view_count: n as usize }
}

/// Keep exactly one view of the sample, discarding the rest. Identity, label,
/// and the retained view's pixels are unchanged.
pub fn select_single_view(
    sample: &OrangeSample,
    index: usize,
) -> Result<OrangeSample, CollageError> {
    let available = sample.view_count();
    if index >= available {
        return Err(CollageError::ViewIndexOutOfRange { index, available });
    }
    let view = sample.views()[index].clone();
    Ok(OrangeSample::new(sample.id.clone(), vec![view], sample.label)
        .expect("one view is non-empty"))
}
