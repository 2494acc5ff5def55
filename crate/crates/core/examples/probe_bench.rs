//! Linear probes on both variants, swept over contrast, brightness and
//! translation.
//!
//! cargo run --release --example probe_bench

use prelayernorm::cli::{bench_run, default_factors, translation_protocol, BenchPlan, ModelArgs};
use prelayernorm::corruptions::CorruptionKind;
use prelayernorm::embedding::Variant;
use prelayernorm::image::Mode;
use prelayernorm::probe::ProbeConfig;
use prelayernorm::synth::{generate, Dataset, SynthSpec};
use prelayernorm::tensor::RngSeed;

fn main() -> prelayernorm::Result<()> {
    let spec = SynthSpec::default();
    let (images, manifest) = generate(&spec)?;
    let dataset = Dataset { images, manifest };
    let model = ModelArgs::default();
    let protocol = translation_protocol(spec.image_size);
    let plan = BenchPlan {
        variants: Variant::BOTH.to_vec(),
        mode: Mode::PilExact,
        sweeps: [CorruptionKind::Contrast, CorruptionKind::Brightness, CorruptionKind::Translation]
            .into_iter()
            .map(|k| (k, default_factors(k, protocol)))
            .collect(),
        model,
        probe: ProbeConfig { seed: RngSeed(model.seed), ..ProbeConfig::default() },
    };
    let report = bench_run(&dataset, &plan)?;
    for v in &report.variants {
        println!("{} (train {:.3}, val {:.3})", v.variant, v.train_accuracy, v.val_accuracy);
        for s in &v.sweeps {
            let drops: Vec<String> = s.factors.iter().map(|&f| format!("{f}: {:+.3}", s.accuracy_at(f).unwrap() - s.baseline())).collect();
            println!("  {:<11} baseline {:.3}  {}", s.corruption.name(), s.baseline(), drops.join("  "));
        }
    }
    Ok(())
}
