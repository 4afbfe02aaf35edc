//! Calibration probe for the multiview-vs-single-view experiment: trains
//! ResNet-18 from scratch in both modes and prints test accuracy after every
//! epoch, so the epoch budget can be pinned empirically.

use mvgrade_core::collage::CollageLayout;
use mvgrade_core::eval::{evaluate, EvalMode};
use mvgrade_core::model::{build_model, ArchitectureKind};
use mvgrade_core::nn::{Optimizer, OptimizerKind};
use mvgrade_core::split::{stratified_split, SplitSpec};
use mvgrade_core::synth::{generate, SynthConfig};
use mvgrade_core::train::{cross_entropy_with_grad, prepare_inputs};
use mvgrade_core::rng::{fisher_yates, seed_rng};
use ndarray::Array4;
use std::time::Instant;

fn main() {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(8);
    let t0 = Instant::now();
    let dataset = generate(&SynthConfig {
        num_samples: 300,
        views_per_sample: 8,
        view_size: 96,
        blemish_radius_range: [4.0, 12.0],
        single_view_concentration: 1.0,
        seed: 20240901,
        ..SynthConfig::default()
    });
    println!("generated 300 samples in {:.1}s", t0.elapsed().as_secs_f64());
    let split = stratified_split(
        &dataset,
        &SplitSpec { train_fraction: "0.7".parse().unwrap(), seed: 20240901 },
    )
    .unwrap();
    println!(
        "train {:?} test {:?}",
        split.train.class_counts().as_array(),
        split.test.class_counts().as_array()
    );

    let layout = CollageLayout::reduced(96);
    for mode in [EvalMode::Multiview, EvalMode::SingleView(0)] {
        println!("=== mode {mode}");
        let mut model = build_model(ArchitectureKind::ResNet18, 3, false, None, 77).unwrap();
        let single = match mode {
            EvalMode::Multiview => None,
            EvalMode::SingleView(i) => Some(i),
        };
        let (inputs, targets) = prepare_inputs(&split.train, &layout, single, &model).unwrap();
        let mut opt = Optimizer::new(OptimizerKind::adam(), 1e-3, 1e-4);
        let n = inputs.len();
        for epoch in 1..=epochs {
            let te = Instant::now();
            let mut order: Vec<usize> = (0..n).collect();
            fisher_yates(&mut order, &mut seed_rng(77, "epoch_shuffle", epoch as u64));
            let mut loss_sum = 0.0;
            let mut correct = 0usize;
            for chunk in order.chunks(8) {
                let (c, h, w) = inputs[0].dim();
                let mut batch = Array4::zeros((chunk.len(), c, h, w));
                for (slot, &i) in chunk.iter().enumerate() {
                    batch.index_axis_mut(ndarray::Axis(0), slot).assign(&inputs[i]);
                }
                let bt: Vec<usize> = chunk.iter().map(|&i| targets[i]).collect();
                let logits = model.forward_train(batch).unwrap();
                let (loss, dl) = cross_entropy_with_grad(&logits, &bt, None);
                loss_sum += loss * chunk.len() as f64;
                for (i, &t) in bt.iter().enumerate() {
                    let mut best = 0;
                    for j in 1..3 {
                        if logits[(i, j)] > logits[(i, best)] {
                            best = j;
                        }
                    }
                    if best == t {
                        correct += 1;
                    }
                }
                model.zero_grad();
                model.backward(&dl);
                opt.begin_step();
                model.visit_tensors(&mut |_, mut t| opt.apply(&mut t));
            }
            let report = evaluate(&model, &split.test, &layout, mode).unwrap();
            println!(
                "epoch {epoch}: train_loss {:.4} train_acc {:.3} | test overall {:.2} avg {:.2} per_class {:.1}/{:.1}/{:.1} ({:.0}s)",
                loss_sum / n as f64,
                correct as f64 / n as f64,
                report.overall,
                report.average,
                report.per_class[0],
                report.per_class[1],
                report.per_class[2],
                te.elapsed().as_secs_f64()
            );
        }
    }
    println!("total {:.0}s", t0.elapsed().as_secs_f64());
}
