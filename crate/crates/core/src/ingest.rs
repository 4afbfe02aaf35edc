//! On-disk dataset layout: `root/manifest.csv` plus one directory per sample
//! holding `view_00.png .. view_NN.png` (8-bit RGB, no alpha).
//!
//! The manifest is deliberately rigid: exact header, three unquoted fields,
//! ids restricted to `[A-Za-z0-9_-]`. Loading is the exact inverse of
//! writing, pixel for pixel, and dataset order is manifest order.

use crate::domain::{parse_grade, Dataset, DomainError, OrangeSample, ViewImage};
use image::ImageReader;
use rayon::prelude::*;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const MANIFEST_HEADER: &str = "sample_id,label,num_views";
pub const MAX_VIEWS: usize = 100;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("manifest not found: {0}")]
    MissingFile(PathBuf),
    #[error("malformed manifest header (expected {MANIFEST_HEADER:?})")]
    MalformedHeader,
    #[error("malformed manifest row at line {0}")]
    MalformedRow(usize),
    #[error("duplicate sample id {0:?}")]
    DuplicateSampleId(String),
    #[error("missing view file for sample {sample_id:?}, view index {index}")]
    MissingViewFile { sample_id: String, index: usize },
    #[error("sample {sample_id:?}: unknown grade label {text:?}")]
    UnknownLabel { sample_id: String, text: String },
    #[error("failed to decode image {0}: {1}")]
    DecodeError(PathBuf, String),
    #[error("i/o error at {0}: {1}")]
    IoError(PathBuf, #[source] std::io::Error),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// One manifest line: a sample id, its raw label text, and how many views the
/// sample directory holds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub sample_id: String,
    pub label_text: String,
    pub view_count: usize,
}

fn valid_sample_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Parse `manifest.csv`. Row order is preserved; ids must be unique.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>, IngestError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(IngestError::MissingFile(path.to_path_buf()))
        }
        Err(e) => return Err(IngestError::IoError(path.to_path_buf(), e)),
    };

    let mut lines = text.lines().map(|l| l.strip_suffix('\r').unwrap_or(l));
    match lines.next() {
        Some(h) if h == MANIFEST_HEADER => {}
        _ => return Err(IngestError::MalformedHeader),
    }

    let mut rows = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2; // header is line 1
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(IngestError::MalformedRow(line_no));
        }
        let sample_id = fields[0].to_string();
        let view_count: usize =
            fields[2].parse().map_err(|_| IngestError::MalformedRow(line_no))?;
        if !valid_sample_id(&sample_id) || view_count == 0 || view_count > MAX_VIEWS {
            return Err(IngestError::MalformedRow(line_no));
        }
        if !seen.insert(sample_id.clone()) {
            return Err(IngestError::DuplicateSampleId(sample_id));
        }
        rows.push(ManifestRow { sample_id, label_text: fields[1].to_string(), view_count });
    }
    Ok(rows)
}

fn view_file_name(index: usize) -> String {
    format!("view_{index:02}.png")
}

fn decode_view(path: &Path) -> Result<ViewImage, IngestError> {
    let reader = ImageReader::open(path)
        .map_err(|e| IngestError::IoError(path.to_path_buf(), e))?;
    let img = reader
        .decode()
        .map_err(|e| IngestError::DecodeError(path.to_path_buf(), e.to_string()))?;
    match img {
        image::DynamicImage::ImageRgb8(rgb) => {
            let (w, h) = (rgb.width(), rgb.height());
            ViewImage::new(w, h, rgb.into_raw()).map_err(IngestError::from)
        }
        other => Err(IngestError::DecodeError(
            path.to_path_buf(),
            format!("expected 8-bit RGB without alpha, got {:?}", other.color()),
        )),
    }
}

fn load_sample(root: &Path, row: &ManifestRow) -> Result<OrangeSample, IngestError> {
    let label = parse_grade(&row.label_text).map_err(|_| IngestError::UnknownLabel {
        sample_id: row.sample_id.clone(),
        text: row.label_text.clone(),
    })?;
    let dir = root.join(&row.sample_id);
    let mut views = Vec::with_capacity(row.view_count);
    for index in 0..row.view_count {
        let path = dir.join(view_file_name(index));
        if !path.is_file() {
            return Err(IngestError::MissingViewFile { sample_id: row.sample_id.clone(), index });
        }
        views.push(decode_view(&path)?);
    }
    Ok(OrangeSample::new(row.sample_id.clone(), views, label)?)
}

/// Load a dataset from its root directory. Sample order equals manifest
/// order; views are ordered by file index. Decoding runs on parallel workers.
pub fn load_dataset(root: &Path) -> Result<Dataset, IngestError> {
    let rows = read_manifest(&root.join("manifest.csv"))?;
    load_dataset_rows(root, &rows)
}

/// Load the subset of `root` described by an explicit manifest file, e.g. a
/// split manifest produced by the split command.
pub fn load_dataset_with_manifest(root: &Path, manifest: &Path) -> Result<Dataset, IngestError> {
    let rows = read_manifest(manifest)?;
    load_dataset_rows(root, &rows)
}

fn load_dataset_rows(root: &Path, rows: &[ManifestRow]) -> Result<Dataset, IngestError> {
    let samples: Vec<OrangeSample> = rows
        .par_iter()
        .map(|row| load_sample(root, row))
        .collect::<Result<_, _>>()?;
    Ok(Dataset::new(samples)?)
}

/// Serialize manifest rows in the exact on-disk format (LF line endings).
pub fn write_manifest(rows: &[ManifestRow], path: &Path) -> Result<(), IngestError> {
    let mut out = String::from(MANIFEST_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&format!("{},{},{}\n", row.sample_id, row.label_text, row.view_count));
    }
    let mut file =
        fs::File::create(path).map_err(|e| IngestError::IoError(path.to_path_buf(), e))?;
    file.write_all(out.as_bytes()).map_err(|e| IngestError::IoError(path.to_path_buf(), e))
}

pub fn manifest_rows_for(dataset: &Dataset) -> Vec<ManifestRow> {
    dataset
        .samples()
        .iter()
        .map(|s| ManifestRow {
            sample_id: s.id.clone(),
            label_text: s.label.canonical_name().to_string(),
            view_count: s.view_count(),
        })
        .collect()
}

/// Write `dataset` under `root` in the exact layout `load_dataset` reads.
/// Round-tripping reproduces the dataset pixel for pixel.
pub fn write_dataset(dataset: &Dataset, root: &Path) -> Result<(), IngestError> {
    fs::create_dir_all(root).map_err(|e| IngestError::IoError(root.to_path_buf(), e))?;
    write_manifest(&manifest_rows_for(dataset), &root.join("manifest.csv"))?;
    dataset.samples().par_iter().try_for_each(|sample| {
        let dir = root.join(&sample.id);
        fs::create_dir_all(&dir).map_err(|e| IngestError::IoError(dir.clone(), e))?;
        for (index, view) in sample.views().iter().enumerate() {
            let path = dir.join(view_file_name(index));
            let buf: image::RgbImage = image::RgbImage::from_raw(
                view.width(),
                view.height(),
                view.pixels().to_vec(),
            )
            .expect("view buffer matches dimensions");
            buf.save_with_format(&path, image::ImageFormat::Png)
                .map_err(|e| IngestError::DecodeError(path.clone(), e.to_string()))?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::GradeLabel;
    use crate::rng::seed_rng;
    use rand_chacha::rand_core::RngCore;
    use tempfile::TempDir;

    fn noise_view(w: u32, h: u32, seed: u64) -> ViewImage {
        let mut rng = seed_rng(seed, "ingest_test", 0);
        let mut img = ViewImage::filled(w, h, [0, 0, 0]);
        for y in 0..h {
            for x in 0..w {
                let v = rng.next_u64();
                img.set_pixel(x, y, [v as u8, (v >> 8) as u8, (v >> 16) as u8]);
            }
        }
        img
    }

    fn tiny_dataset() -> Dataset {
        let samples = vec![
            OrangeSample::new("o001", vec![noise_view(8, 6, 1), noise_view(8, 6, 2)], GradeLabel::Bad)
                .unwrap(),
            OrangeSample::new("o002", vec![noise_view(5, 5, 3), noise_view(5, 5, 4)], GradeLabel::Good)
                .unwrap(),
            OrangeSample::new(
                "o003",
                vec![noise_view(7, 4, 5), noise_view(7, 4, 6)],
                GradeLabel::Undefined,
            )
            .unwrap(),
        ];
        Dataset::new(samples).unwrap()
    }

    #[test]
    fn parses_single_row_manifest() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("manifest.csv");
        fs::write(&path, "sample_id,label,num_views\no001,malo,8\n").unwrap();
        let rows = read_manifest(&path).unwrap();
        assert_eq!(
            rows,
            vec![ManifestRow {
                sample_id: "o001".into(),
                label_text: "malo".into(),
                view_count: 8
            }]
        );
    }

    #[test]
    fn header_only_manifest_is_empty() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("manifest.csv");
        fs::write(&path, "sample_id,label,num_views\n").unwrap();
        assert!(read_manifest(&path).unwrap().is_empty());
    }

    #[test]
    fn accepts_crlf_line_endings() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("manifest.csv");
        fs::write(&path, "sample_id,label,num_views\r\no001,bueno,2\r\n").unwrap();
        let rows = read_manifest(&path).unwrap();
        assert_eq!(rows[0].sample_id, "o001");
        assert_eq!(rows[0].view_count, 2);
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("manifest.csv");
        fs::write(&path, "sample_id,label,num_views\no001,malo,8\no001,bueno,8\n").unwrap();
        match read_manifest(&path) {
            Err(IngestError::DuplicateSampleId(id)) => assert_eq!(id, "o001"),
            other => panic!("expected DuplicateSampleId, got {other:?}"),
        }
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("manifest.csv");
        for (body, bad_line) in [
            ("o001,malo\n", 2),                 // wrong field count
            ("o001,malo,x\n", 2),               // non-integer views
            ("o001,malo,0\n", 2),               // zero views
            ("o001,malo,101\n", 2),             // more views than the naming scheme allows
            ("ok1,malo,1\na/b,malo,1\n", 3),    // path separator in id
        ] {
            fs::write(&path, format!("sample_id,label,num_views\n{body}")).unwrap();
            match read_manifest(&path) {
                Err(IngestError::MalformedRow(line)) => assert_eq!(line, bad_line, "{body:?}"),
                other => panic!("expected MalformedRow for {body:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn wrong_header_is_rejected() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("manifest.csv");
        fs::write(&path, "id,label,views\n").unwrap();
        assert!(matches!(read_manifest(&path), Err(IngestError::MalformedHeader)));
    }

    #[test]
    fn missing_manifest_is_reported() {
        assert!(matches!(
            read_manifest(Path::new("/nonexistent/manifest.csv")),
            Err(IngestError::MissingFile(_))
        ));
    }

    #[test]
    fn write_then_load_round_trips_exactly() {
        let dir = TempDir::new().unwrap();
        let ds = tiny_dataset();
        write_dataset(&ds, dir.path()).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(loaded, ds);
    }

    #[test]
    fn empty_dataset_writes_header_only() {
        let dir = TempDir::new().unwrap();
        write_dataset(&Dataset::empty(), dir.path()).unwrap();
        let manifest = fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
        assert_eq!(manifest, "sample_id,label,num_views\n");
        assert_eq!(load_dataset(dir.path()).unwrap(), Dataset::empty());
    }

    #[test]
    fn single_sample_single_view_layout() {
        let dir = TempDir::new().unwrap();
        let ds = Dataset::new(vec![OrangeSample::new(
            "only",
            vec![noise_view(4, 4, 9)],
            GradeLabel::Good,
        )
        .unwrap()])
        .unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        assert!(dir.path().join("only").join("view_00.png").is_file());
        assert!(!dir.path().join("only").join("view_01.png").exists());
    }

    #[test]
    fn missing_view_file_is_detected() {
        let dir = TempDir::new().unwrap();
        let ds = tiny_dataset();
        write_dataset(&ds, dir.path()).unwrap();
        // claim 3 views while the directory has 2
        fs::write(
            dir.path().join("manifest.csv"),
            "sample_id,label,num_views\no001,malo,3\n",
        )
        .unwrap();
        match load_dataset(dir.path()) {
            Err(IngestError::MissingViewFile { sample_id, index }) => {
                assert_eq!(sample_id, "o001");
                assert_eq!(index, 2);
            }
            other => panic!("expected MissingViewFile, got {other:?}"),
        }
    }

    #[test]
    fn unknown_label_carries_sample_context() {
        let dir = TempDir::new().unwrap();
        write_dataset(&tiny_dataset(), dir.path()).unwrap();
        fs::write(
            dir.path().join("manifest.csv"),
            "sample_id,label,num_views\no001,ripe,2\n",
        )
        .unwrap();
        match load_dataset(dir.path()) {
            Err(IngestError::UnknownLabel { sample_id, text }) => {
                assert_eq!(sample_id, "o001");
                assert_eq!(text, "ripe");
            }
            other => panic!("expected UnknownLabel, got {other:?}"),
        }
    }

    #[test]
    fn alpha_views_are_rejected_not_flattened() {
        let dir = TempDir::new().unwrap();
        write_dataset(&tiny_dataset(), dir.path()).unwrap();
        let rgba = image::RgbaImage::from_pixel(4, 4, image::Rgba([1, 2, 3, 4]));
        rgba.save_with_format(dir.path().join("o001").join("view_00.png"), image::ImageFormat::Png)
            .unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(IngestError::DecodeError(_, _))));
    }

    #[test]
    fn loading_is_deterministic() {
        let dir = TempDir::new().unwrap();
        write_dataset(&tiny_dataset(), dir.path()).unwrap();
        let a = load_dataset(dir.path()).unwrap();
        let b = load_dataset(dir.path()).unwrap();
        assert_eq!(a, b);
        let ids: Vec<&str> = a.samples().iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["o001", "o002", "o003"]);
    }
}
