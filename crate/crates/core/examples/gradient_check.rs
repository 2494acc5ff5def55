//! Analytic gradient of the early-stage output with respect to the
//! positional embedding, checked against central differences.
//!
//! cargo run --release --example gradient_check

use prelayernorm::ecpe::{grad_check, grad_epos_analytic};
use prelayernorm::embedding::{EarlyStageConfig, EarlyStageInit, Variant};
use prelayernorm::tensor::{Matrix, RngSeed};

fn main() -> prelayernorm::Result<()> {
    for variant in Variant::BOTH {
        let cfg = EarlyStageConfig::random(variant, 4, (6, 6), 64, &EarlyStageInit::default(), RngSeed(11))?;
        let x = Matrix::random_uniform(36, 64, -1.0, 1.0, RngSeed(12))?;
        let grad = grad_epos_analytic(&x, &cfg)?;
        let check = grad_check(&x, &cfg, 1e-5, 1e-8)?;
        println!(
            "{variant}: |grad|_F = {:.4}, {} entries checked, max relative error {:.2e}",
            grad.frobenius_norm(),
            check.checked,
            check.max_rel_error
        );
        // scaling the patches leaves the SwinStyle gradient unchanged
        let scaled = grad_epos_analytic(&x.affine(3.0, -2.0), &cfg)?;
        println!("{variant}: gradient change under 3X - 2: {:.2e}", scaled.max_abs_diff(&grad)?);
    }
    Ok(())
}
