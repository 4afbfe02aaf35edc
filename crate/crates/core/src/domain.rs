//! Core value types shared by the whole pipeline. No I/O happens here.
//!
//! Everything in this module is an immutable value after construction and can
//! be shared freely between worker threads.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DomainError {
    #[error("unknown grade label {0:?}")]
    UnknownLabel(String),
    #[error("sample {0:?} has no views")]
    EmptyViews(String),
    #[error("duplicate sample id {0:?}")]
    DuplicateSampleId(String),
    #[error("image buffer length {got} does not match {width}x{height}x3")]
    BadImageGeometry { width: u32, height: u32, got: usize },
}

/// One of the three quality grades.
///
/// Class order is fixed everywhere (confusion matrices, report columns, model
/// output index): 0 = Good, 1 = Bad, 2 = Undefined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradeLabel {
    Good,
    Bad,
    Undefined,
}

impl GradeLabel {
    pub const ALL: [GradeLabel; 3] = [GradeLabel::Good, GradeLabel::Bad, GradeLabel::Undefined];

    pub fn index(self) -> usize {
        match self {
            GradeLabel::Good => 0,
            GradeLabel::Bad => 1,
            GradeLabel::Undefined => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<GradeLabel> {
        GradeLabel::ALL.get(index).copied()
    }

    /// Canonical English lowercase name; this is the only serialized form.
    pub fn canonical_name(self) -> &'static str {
        match self {
            GradeLabel::Good => "good",
            GradeLabel::Bad => "bad",
            GradeLabel::Undefined => "undefined",
        }
    }

    /// Spanish names, used as report column headers.
    pub fn spanish_name(self) -> &'static str {
        match self {
            GradeLabel::Good => "Bueno",
            GradeLabel::Bad => "Malo",
            GradeLabel::Undefined => "Indefinido",
        }
    }
}

impl fmt::Display for GradeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical_name())
    }
}

impl FromStr for GradeLabel {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_grade(s)
    }
}

/// Parse a grade name, accepting English and Spanish spellings in any letter
/// case. Surrounding whitespace is ignored.
pub fn parse_grade(text: &str) -> Result<GradeLabel, DomainError> {
    match text.trim().to_ascii_lowercase().as_str() {
        "good" | "bueno" => Ok(GradeLabel::Good),
        "bad" | "malo" => Ok(GradeLabel::Bad),
        "undefined" | "indefinido" => Ok(GradeLabel::Undefined),
        _ => Err(DomainError::UnknownLabel(text.to_string())),
    }
}

/// An 8-bit RGB raster. Exactly three channels, no alpha.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl ViewImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, DomainError> {
        if width == 0 || height == 0 || pixels.len() != (width * height * 3) as usize {
            return Err(DomainError::BadImageGeometry { width, height, got: pixels.len() });
        }
        Ok(ViewImage { width, height, pixels })
    }

    pub fn filled(width: u32, height: u32, color: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0);
        let mut pixels = Vec::with_capacity((width * height * 3) as usize);
        for _ in 0..width * height {
            pixels.extend_from_slice(&color);
        }
        ViewImage { width, height, pixels }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Interleaved RGB bytes, row-major.
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        debug_assert!(x < self.width && y < self.height);
        let i = ((y * self.width + x) * 3) as usize;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        debug_assert!(x < self.width && y < self.height);
        let i = ((y * self.width + x) * 3) as usize;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }
}

/// An identified fruit: an ordered, non-empty list of views plus its grade.
///
/// View order is the acquisition order and is preserved by every operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrangeSample {
    pub id: String,
    views: Vec<ViewImage>,
    pub label: GradeLabel,
}

impl OrangeSample {
    pub fn new(
        id: impl Into<String>,
        views: Vec<ViewImage>,
        label: GradeLabel,
    ) -> Result<Self, DomainError> {
        let id = id.into();
        if views.is_empty() {
            return Err(DomainError::EmptyViews(id));
        }
        Ok(OrangeSample { id, views, label })
    }

    pub fn views(&self) -> &[ViewImage] {
        &self.views
    }

    pub fn view_count(&self) -> usize {
        self.views.len()
    }
}

/// Per-class sample counts, indexed in the fixed class order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassCounts([usize; 3]);

impl ClassCounts {
    pub fn get(&self, label: GradeLabel) -> usize {
        self.0[label.index()]
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn as_array(&self) -> [usize; 3] {
        self.0
    }
}

/// A list of samples with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    samples: Vec<OrangeSample>,
}

impl Dataset {
    pub fn new(samples: Vec<OrangeSample>) -> Result<Self, DomainError> {
        let mut seen = std::collections::HashSet::new();
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(DomainError::DuplicateSampleId(s.id.clone()));
            }
        }
        Ok(Dataset { samples })
    }

    pub fn empty() -> Self {
        Dataset { samples: Vec::new() }
    }

    pub fn samples(&self) -> &[OrangeSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> ClassCounts {
        class_counts(self)
    }
}

/// Count samples per grade. Counts always sum to the dataset size.
pub fn class_counts(dataset: &Dataset) -> ClassCounts {
    let mut counts = [0usize; 3];
    for s in dataset.samples() {
        counts[s.label.index()] += 1;
    }
    ClassCounts(counts)
}

/// The single composed RGB image the classifier consumes.
///
/// Dimensions are fixed by the layout that produced it (2500x300 by default)
/// regardless of how many views went in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Collage {
    pub image: ViewImage,
    pub source_id: String,
    pub view_count: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_all_six_names_case_insensitively() {
        for (text, want) in [
            ("good", GradeLabel::Good),
            ("bueno", GradeLabel::Good),
            ("malo", GradeLabel::Bad),
            ("bad", GradeLabel::Bad),
            ("undefined", GradeLabel::Undefined),
            ("indefinido", GradeLabel::Undefined),
            ("GOOD", GradeLabel::Good),
            ("MaLo", GradeLabel::Bad),
            ("  Indefinido ", GradeLabel::Undefined),
        ] {
            assert_eq!(parse_grade(text).unwrap(), want, "input {text:?}");
        }
    }

    #[test]
    fn rejects_unknown_labels() {
        for text in ["ripe", "", "goodness", "buen"] {
            assert!(matches!(parse_grade(text), Err(DomainError::UnknownLabel(_))));
        }
    }

    #[test]
    fn render_parse_round_trip_is_identity() {
        for label in GradeLabel::ALL {
            assert_eq!(parse_grade(label.canonical_name()).unwrap(), label);
            assert_eq!(parse_grade(label.spanish_name()).unwrap(), label);
        }
    }

    #[test]
    fn canonicalization_is_idempotent() {
        for label in GradeLabel::ALL {
            let rendered = label.to_string();
            let reparsed = parse_grade(&rendered).unwrap();
            assert_eq!(reparsed.to_string(), rendered);
        }
    }

    #[test]
    fn exactly_three_variants_in_fixed_order() {
        assert_eq!(GradeLabel::ALL.len(), 3);
        for (i, label) in GradeLabel::ALL.iter().enumerate() {
            assert_eq!(label.index(), i);
            assert_eq!(GradeLabel::from_index(i), Some(*label));
        }
        assert_eq!(GradeLabel::from_index(3), None);
    }

    #[test]
    fn counts_of_small_hand_built_set() {
        let v = ViewImage::filled(2, 2, [1, 2, 3]);
        let samples = vec![
            OrangeSample::new("a", vec![v.clone()], GradeLabel::Good).unwrap(),
            OrangeSample::new("b", vec![v.clone()], GradeLabel::Good).unwrap(),
            OrangeSample::new("c", vec![v.clone()], GradeLabel::Bad).unwrap(),
        ];
        let ds = Dataset::new(samples).unwrap();
        let counts = ds.class_counts();
        assert_eq!(counts.get(GradeLabel::Good), 2);
        assert_eq!(counts.get(GradeLabel::Bad), 1);
        assert_eq!(counts.get(GradeLabel::Undefined), 0);
        assert_eq!(counts.total(), 3);
    }

    #[test]
    fn empty_dataset_counts_are_zero() {
        let counts = Dataset::empty().class_counts();
        assert_eq!(counts.as_array(), [0, 0, 0]);
        assert_eq!(counts.total(), 0);
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let v = ViewImage::filled(1, 1, [0, 0, 0]);
        let samples = vec![
            OrangeSample::new("x", vec![v.clone()], GradeLabel::Good).unwrap(),
            OrangeSample::new("x", vec![v], GradeLabel::Bad).unwrap(),
        ];
        assert!(matches!(Dataset::new(samples), Err(DomainError::DuplicateSampleId(_))));
    }

    #[test]
    fn sample_requires_views() {
        assert!(matches!(
            OrangeSample::new("s", vec![], GradeLabel::Good),
            Err(DomainError::EmptyViews(_))
        ));
    }

    #[test]
    fn view_image_validates_geometry() {
        assert!(ViewImage::new(2, 2, vec![0; 12]).is_ok());
        assert!(ViewImage::new(2, 2, vec![0; 11]).is_err());
        assert!(ViewImage::new(0, 2, vec![]).is_err());
    }

    proptest! {
        #[test]
        fn class_counts_total_equals_len(labels in proptest::collection::vec(0usize..3, 0..64)) {
            let v = ViewImage::filled(1, 1, [9, 9, 9]);
            let samples: Vec<OrangeSample> = labels
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    OrangeSample::new(
                        format!("s{i}"),
                        vec![v.clone()],
                        GradeLabel::from_index(c).unwrap(),
                    )
                    .unwrap()
                })
                .collect();
            let ds = Dataset::new(samples).unwrap();
            prop_assert_eq!(ds.class_counts().total(), ds.len());
        }
    }
}
