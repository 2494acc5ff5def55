//! ECPE of both variants on the synthetic dataset as contrast grows.
//!
//! cargo run --release --example ecpe_curve

use prelayernorm::cli::{ecpe_run, ModelArgs};
use prelayernorm::embedding::Variant;
use prelayernorm::image::Mode;
use prelayernorm::svg::{LinePlot, Series};
use prelayernorm::synth::{generate, Dataset, SynthSpec};

fn main() -> prelayernorm::Result<()> {
    let (images, manifest) = generate(&SynthSpec::default())?;
    let dataset = Dataset { images, manifest };
    let factors = [1.0, 2.0, 3.0, 4.0, 5.0, 8.0, 16.0];
    let run = ecpe_run(&dataset, &Variant::BOTH, Mode::Idealized, &factors, &ModelArgs::default())?;
    let mut plot = LinePlot::new("ECPE vs contrast", "factor", "ECPE");
    for c in &run.curves {
        println!("{:<5} spread {:.2e} decreasing {}", c.variant, c.relative_spread, c.strictly_decreasing);
        for (f, v) in c.factors.iter().zip(&c.values) {
            println!("      factor {f:>4}: {v:.3}");
        }
        plot = plot.with_series(Series::new(c.variant.name(), c.factors.iter().copied().zip(c.values.iter().copied()).collect()));
    }
    let path = std::env::temp_dir().join("ecpe_curve.svg");
    std::fs::write(&path, plot.render()).map_err(|e| prelayernorm::Error::Io { path: path.clone(), source: e })?;
    println!("plot: {}", path.display());
    Ok(())
}
