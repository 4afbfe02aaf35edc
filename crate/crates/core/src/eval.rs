//! Confusion matrix and the three accuracy metrics, plus table rendering.
//!
//! "Accuracy per class" is per-class recall: diagonal count over row support.
//! Average accuracy is the unweighted mean of the three per-class figures;
//! overall accuracy pools all test samples. Counts are carried as exact
//! integers and only turned into percentages at the reporting boundary.

use crate::collage::{compose_collage, select_single_view, CollageError, CollageLayout};
use crate::domain::{Dataset, GradeLabel};
use crate::model::{ArchitectureKind, ModelHandle};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("test set has no samples of class {0}")]
    EmptyClassInTestSet(GradeLabel),
    #[error("confusion matrix row for class {0} has zero support")]
    ZeroSupportRow(GradeLabel),
    #[error(transparent)]
    Collage(#[from] CollageError),
}

/// Multiview or single retained view (by acquisition index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Multiview,
    SingleView(usize),
}

impl std::fmt::Display for EvalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EvalMode::Multiview => write!(f, "multiview"),
            EvalMode::SingleView(i) => write!(f, "single_view({i})"),
        }
    }
}

/// counts[true][pred] in the fixed class order Good/Bad/Undefined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: [[u64; 3]; 3]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn record(&mut self, truth: GradeLabel, predicted: GradeLabel) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn get(&self, truth: GradeLabel, predicted: GradeLabel) -> u64 {
        self.counts[truth.index()][predicted.index()]
    }

    pub fn counts(&self) -> &[[u64; 3]; 3] {
        &self.counts
    }

    pub fn row_sum(&self, truth: GradeLabel) -> u64 {
        self.counts[truth.index()].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }
}

/// The three metric groups, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub per_class: [f64; 3],
    pub average: f64,
    pub overall: f64,
}

/// Pure arithmetic over a confusion matrix. Errors if any class has zero
/// support, since the average accuracy is undefined there.
pub fn metrics_from_confusion(confusion: &ConfusionMatrix) -> Result<MetricValues, EvalError> {
    let mut per_class = [0.0f64; 3];
    for class in GradeLabel::ALL {
        let support = confusion.row_sum(class);
        if support == 0 {
            return Err(EvalError::ZeroSupportRow(class));
        }
        per_class[class.index()] = 100.0 * confusion.get(class, class) as f64 / support as f64;
    }
    let average = per_class.iter().sum::<f64>() / 3.0;
    let overall = 100.0 * confusion.trace() as f64 / confusion.total() as f64;
    Ok(MetricValues { per_class, average, overall })
}

/// One evaluated experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model_kind: ArchitectureKind,
    pub mode: EvalMode,
    pub pretrained: bool,
    pub confusion: ConfusionMatrix,
    pub per_class: [f64; 3],
    pub average: f64,
    pub overall: f64,
}

impl MetricsReport {
    pub fn from_confusion(
        confusion: ConfusionMatrix,
        model_kind: ArchitectureKind,
        mode: EvalMode,
        pretrained: bool,
    ) -> Result<Self, EvalError> {
        let m = metrics_from_confusion(&confusion)?;
        Ok(MetricsReport {
            model_kind,
            mode,
            pretrained,
            confusion,
            per_class: m.per_class,
            average: m.average,
            overall: m.overall,
        })
    }
}

/// Predict every test sample through its collage and aggregate the metrics.
pub fn evaluate(
    model: &ModelHandle,
    test_set: &Dataset,
    layout: &CollageLayout,
    mode: EvalMode,
) -> Result<MetricsReport, EvalError> {
    let counts = test_set.class_counts();
    for class in GradeLabel::ALL {
        if counts.get(class) == 0 {
            return Err(EvalError::EmptyClassInTestSet(class));
        }
    }
    let mut confusion = ConfusionMatrix::new();
    for sample in test_set.samples() {
        let collage = match mode {
            EvalMode::Multiview => compose_collage(sample, layout),
            EvalMode::SingleView(index) => {
                compose_collage(&select_single_view(sample, index)?, layout)
            }
        };
        let (predicted, _probs) = model.predict(&collage);
        confusion.record(sample.label, predicted);
    }
    MetricsReport::from_confusion(confusion, model.kind(), mode, model.is_pretrained())
}

/// Render reports as a text table with one row per report, columns
/// Bueno/Malo/Indefinido/Avg./Overall, percentages to two decimals.
pub fn render_report(reports: &[MetricsReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:>8} {:>8} {:>12} {:>8} {:>8}\n",
        "Model", "Bueno", "Malo", "Indefinido", "Avg.", "Overall"
    ));
    for r in reports {
        out.push_str(&format!(
            "{:<12} {:>8.2} {:>8.2} {:>12.2} {:>8.2} {:>8.2}\n",
            r.model_kind.display_name(),
            r.per_class[0],
            r.per_class[1],
            r.per_class[2],
            r.average,
            r.overall
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::{BigRational, FromPrimitive, Zero};
    use proptest::prelude::*;

    /// Build a confusion matrix with the given diagonal and row supports,
    /// dumping each row's errors into some fixed off-diagonal column.
    fn confusion_with_diagonal(diag: [u64; 3], supports: [u64; 3]) -> ConfusionMatrix {
        let mut counts = [[0u64; 3]; 3];
        for c in 0..3 {
            assert!(diag[c] <= supports[c]);
            counts[c][c] = diag[c];
            let spill = if c == 1 { 0 } else { 1 };
            counts[c][spill] += supports[c] - diag[c];
        }
        ConfusionMatrix::from_counts(counts)
    }

    fn assert_row(
        diag: [u64; 3],
        supports: [u64; 3],
        printed: [f64; 5], // Bueno, Malo, Indefinido, Avg., Overall
    ) {
        let m = metrics_from_confusion(&confusion_with_diagonal(diag, supports)).unwrap();
        let got = [m.per_class[0], m.per_class[1], m.per_class[2], m.average, m.overall];
        for (g, p) in got.iter().zip(printed.iter()) {
            assert!(
                (g - p).abs() <= 0.05 + 1e-12,
                "metric {g:.4} differs from printed {p} by more than 0.05 (diag {diag:?})"
            );
        }
    }

    // The six reference rows, reconstructed as correct_c = round(acc_c * support_c)
    // with test supports (33, 88, 14).

    #[test]
    fn multiview_pretrained_resnet_row() {
        assert_row([19, 77, 3], [33, 88, 14], [57.60, 87.50, 21.40, 55.50, 73.30]);
    }

    #[test]
    fn multiview_pretrained_squeezenet_row() {
        assert_row([24, 71, 3], [33, 88, 14], [72.70, 80.70, 21.40, 58.30, 72.60]);
    }

    #[test]
    fn single_view_resnet_row() {
        assert_row([13, 78, 1], [33, 88, 14], [39.40, 88.60, 7.10, 45.10, 68.10]);
    }

    #[test]
    fn single_view_squeezenet_row() {
        assert_row([14, 83, 0], [33, 88, 14], [42.40, 94.30, 0.00, 45.60, 71.90]);
    }

    #[test]
    fn scratch_resnet_row() {
        assert_row([19, 80, 0], [33, 88, 14], [57.60, 90.90, 0.00, 49.50, 73.30]);
    }

    #[test]
    fn scratch_squeezenet_row() {
        assert_row([0, 88, 0], [33, 88, 14], [0.00, 100.00, 0.00, 33.30, 65.20]);
    }

    #[test]
    fn exact_two_decimal_values_of_first_row() {
        let m = metrics_from_confusion(&confusion_with_diagonal([19, 77, 3], [33, 88, 14])).unwrap();
        assert_eq!(format!("{:.2}", m.per_class[0]), "57.58");
        assert_eq!(format!("{:.2}", m.per_class[1]), "87.50");
        assert_eq!(format!("{:.2}", m.per_class[2]), "21.43");
        assert_eq!(format!("{:.2}", m.average), "55.50");
        assert_eq!(format!("{:.2}", m.overall), "73.33");
    }

    #[test]
    fn perfect_predictor_scores_100_everywhere() {
        let confusion = confusion_with_diagonal([33, 88, 14], [33, 88, 14]);
        let m = metrics_from_confusion(&confusion).unwrap();
        assert_eq!(m.per_class, [100.0, 100.0, 100.0]);
        assert_eq!(m.average, 100.0);
        assert_eq!(m.overall, 100.0);
    }

    #[test]
    fn always_bad_predictor_matches_reference_degenerate_row() {
        let mut counts = [[0u64; 3]; 3];
        counts[0][1] = 33;
        counts[1][1] = 88;
        counts[2][1] = 14;
        let m = metrics_from_confusion(&ConfusionMatrix::from_counts(counts)).unwrap();
        assert_eq!(m.per_class, [0.0, 100.0, 0.0]);
        assert!((m.average - 100.0 / 3.0).abs() < 1e-12);
        assert!((m.overall - 100.0 * 88.0 / 135.0).abs() < 1e-12);
        // printed: 0.00 / 100.00 / 0.00 / 33.30 / 65.20
        assert!((m.average - 33.30).abs() <= 0.05);
        assert!((m.overall - 65.20).abs() <= 0.05);
    }

    #[test]
    fn minimal_perfect_case() {
        let m = metrics_from_confusion(&confusion_with_diagonal([1, 1, 1], [1, 1, 1])).unwrap();
        assert_eq!((m.per_class, m.average, m.overall), ([100.0; 3], 100.0, 100.0));
    }

    #[test]
    fn zero_support_row_is_an_error() {
        let confusion = confusion_with_diagonal([1, 1, 0], [1, 1, 0]);
        assert_eq!(
            metrics_from_confusion(&confusion),
            Err(EvalError::ZeroSupportRow(GradeLabel::Undefined))
        );
    }

    #[test]
    fn table_rendering_shapes() {
        let r1 = MetricsReport::from_confusion(
            confusion_with_diagonal([19, 77, 3], [33, 88, 14]),
            ArchitectureKind::ResNet18,
            EvalMode::Multiview,
            true,
        )
        .unwrap();
        let r2 = MetricsReport::from_confusion(
            confusion_with_diagonal([24, 71, 3], [33, 88, 14]),
            ArchitectureKind::SqueezeNet,
            EvalMode::Multiview,
            true,
        )
        .unwrap();

        let empty = render_report(&[]);
        assert_eq!(empty.lines().count(), 1);
        assert!(empty.contains("Bueno") && empty.contains("Overall"));

        let one = render_report(&[r1.clone()]);
        assert_eq!(one.lines().count(), 2);

        let two = render_report(&[r1, r2]);
        assert_eq!(two.lines().count(), 3);
        let lines: Vec<&str> = two.lines().collect();
        assert!(lines[1].starts_with("ResNet-18"));
        assert!(lines[1].contains("57.58") && lines[1].contains("73.33"));
        assert!(lines[2].starts_with("SqueezeNet"));
        assert!(lines[2].contains("72.73") && lines[2].contains("72.59"));
    }

    /// Exact-rational recomputation of the support-weighted identity.
    fn rational_identity_holds(confusion: &ConfusionMatrix) -> bool {
        let ratio = |n: u64, d: u64| BigRational::new(n.into(), d.into());
        let mut weighted = BigRational::zero();
        let mut total_support = BigRational::zero();
        for class in GradeLabel::ALL {
            let support = confusion.row_sum(class);
            let per_class = ratio(100 * confusion.get(class, class), support);
            weighted += BigRational::from_u64(support).unwrap() * per_class;
            total_support += BigRational::from_u64(support).unwrap();
        }
        let overall = ratio(100 * confusion.trace(), confusion.total());
        weighted / total_support == overall
    }

    proptest! {
        #[test]
        fn overall_is_support_weighted_mean_of_per_class(
            counts in proptest::array::uniform3(proptest::array::uniform3(0u64..200)),
        ) {
            let mut counts = counts;
            for c in 0..3 {
                if counts[c].iter().sum::<u64>() == 0 {
                    counts[c][c] = 1;
                }
            }
            let confusion = ConfusionMatrix::from_counts(counts);
            let m = metrics_from_confusion(&confusion).unwrap();

            // floating-point identity within 1e-9
            let supports: Vec<f64> =
                GradeLabel::ALL.iter().map(|&c| confusion.row_sum(c) as f64).collect();
            let weighted: f64 = supports
                .iter()
                .zip(m.per_class.iter())
                .map(|(s, p)| s * p)
                .sum::<f64>()
                / supports.iter().sum::<f64>();
            prop_assert!((weighted - m.overall).abs() < 1e-9);

            // exact identity over the rationals
            prop_assert!(rational_identity_holds(&confusion));

            // average is exactly the unweighted mean
            prop_assert_eq!(m.average, m.per_class.iter().sum::<f64>() / 3.0);
        }
    }
}
