//! Scale/shift invariance of LayerNorm, and where the positional embedding
//! breaks it.
//!
//! cargo run --release --example invariance

use prelayernorm::embedding::{consistency_gap, ln_normalize, EarlyStageConfig, EarlyStageInit, ScaleBias, Variant};
use prelayernorm::tensor::{Matrix, RngSeed};

fn main() -> prelayernorm::Result<()> {
    let x = Matrix::random_uniform(36, 64, -200.0, 200.0, RngSeed(1))?;
    let base = ln_normalize(&x, 1e-5)?;
    for (a, b) in [(0.5, -1.0), (2.0, 0.0), (5.0, 3.0)] {
        let moved = ln_normalize(&x.affine(a, b), 1e-5)?;
        println!("N({a}X + {b}) vs N(X): max diff {:.2e}", moved.max_abs_diff(&base)?);
    }

    // unit-scale patches: the SwinStyle residual is the epsilon term, O(eps / var)
    let small = Matrix::random_uniform(36, 64, -1.0, 1.0, RngSeed(2))?;
    let sb = ScaleBias::new(2.0, 0.5);
    for variant in Variant::BOTH {
        let cfg = EarlyStageConfig::random(variant, 16, (6, 6), 64, &EarlyStageInit::default(), RngSeed(3))?;
        println!("{variant}: consistency gap under 2X + 0.5 = {:.3e}", consistency_gap(&small, &sb, &cfg)?);
    }
    Ok(())
}
