//! Rough training-throughput probe used to budget the experiment configs.
//! Run with --release.

use mvgrade_core::collage::CollageLayout;
use mvgrade_core::model::{build_model, ArchitectureKind};
use mvgrade_core::synth::{generate, SynthConfig};
use mvgrade_core::train::{train, TrainConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let samples: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(24);
    let tile: u32 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(96);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1);
    let arch = match args.get(4).map(|s| s.as_str()) {
        Some("squeezenet") => ArchitectureKind::SqueezeNet,
        _ => ArchitectureKind::ResNet18,
    };

    let t0 = Instant::now();
    let dataset = generate(&SynthConfig {
        num_samples: samples,
        views_per_sample: 8,
        view_size: tile,
        blemish_radius_range: [4.0, 12.0],
        seed: 5,
        ..SynthConfig::default()
    });
    println!("generate {samples} samples @ {tile}px: {:.1}s", t0.elapsed().as_secs_f64());

    let layout = CollageLayout::reduced(tile);
    let model = build_model(arch, 3, false, None, 7).unwrap();
    let config = TrainConfig { epochs, batch_size: 8, seed: 3, ..TrainConfig::default() };

    let t1 = Instant::now();
    let (_, record) = train(model, &dataset, &layout, &config).unwrap();
    let dt = t1.elapsed().as_secs_f64();
    println!(
        "{arch:?} {epochs} epochs x {samples} samples @ {}x{}: {:.1}s total, {:.2}s/epoch, {:.0}ms/sample-step",
        layout.final_width,
        layout.final_height,
        dt,
        dt / epochs as f64,
        1e3 * dt / (epochs * samples) as f64
    );
    for e in record.epochs {
        println!("  {}", e.log_line());
    }
}
