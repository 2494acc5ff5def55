//! Generates the synthetic shape dataset and loads it back.
//!
//! cargo run --release --example synth_dataset [out-dir]

use prelayernorm::synth::{generate, load_dataset, write_dataset, Shape, SynthSpec};

fn main() -> prelayernorm::Result<()> {
    let dir = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("synth_dataset"));
    let spec = SynthSpec::default();
    let (images, manifest) = generate(&spec)?;
    write_dataset(&dir, &images, &manifest)?;
    let loaded = load_dataset(&dir)?;
    let mut counts = vec![0; spec.num_classes];
    for l in loaded.labels() {
        counts[l] += 1;
    }
    println!("{} images in {}", loaded.images.len(), dir.display());
    println!("checksum {}", loaded.checksum());
    for (label, n) in counts.iter().enumerate() {
        println!("class {label} ({:?}, color bin {}): {n}", Shape::for_label(label), label / 3);
    }
    Ok(())
}
