//! Every corruption on one synthetic image, written as PPM files.
//!
//! cargo run --release --example corrupt_image [out-dir]

use prelayernorm::corruptions::{apply, CorruptionKind, CorruptionSpec, TranslationProtocol};
use prelayernorm::image::Mode;
use prelayernorm::synth::{render, SynthSpec};
use prelayernorm::tensor::RngSeed;

fn main() -> prelayernorm::Result<()> {
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("corrupt_image"));
    std::fs::create_dir_all(&out).map_err(|e| prelayernorm::Error::Io { path: out.clone(), source: e })?;
    let spec = SynthSpec::default();
    let img = render(&spec, 4, RngSeed(5));
    img.write_ppm(out.join("original.ppm"))?;
    let protocol = TranslationProtocol { short_side: 128, crop: 96 };
    let severities = [
        (CorruptionKind::Contrast, vec![0.5, 2.0, 3.0]),
        (CorruptionKind::Brightness, vec![0.5, 2.0, 5.0]),
        (CorruptionKind::Gamma, vec![0.5, 2.0]),
        (CorruptionKind::Translation, vec![0.0, 8.0, 16.0]),
        (CorruptionKind::Rotation, vec![15.0, 90.0]),
    ];
    for (kind, factors) in severities {
        for f in factors {
            let c = apply(&img, CorruptionSpec::new(kind, f, Mode::PilExact), protocol)?;
            let name = format!("{kind}_{f}.ppm");
            c.write_ppm(out.join(&name))?;
            println!("{name}: {}x{}", c.width(), c.height());
        }
    }
    println!("written to {}", out.display());
    Ok(())
}
