//! Experiments on the default synthetic dataset with the default pipeline.

use prelayernorm::cli::{model_config, ModelArgs};
use prelayernorm::corruptions::{CorruptionKind, TranslationProtocol};
use prelayernorm::ecpe::{ecpe_accumulate, image_ecpe};
use prelayernorm::embedding::{patchify, EarlyStageConfig, Variant};
use prelayernorm::image::{Image, Mode};
use prelayernorm::probe::{extract_all, run_sweep, split_indices, train_probe, FeatureReduction, ProbeConfig, SweepSetup};
use prelayernorm::synth::{generate, SynthSpec};
use prelayernorm::tensor::RngSeed;

const BINS: usize = 4;

/// Per-channel histograms of the foreground, as fractions of the pixel
/// count. Shapes never reach the corners, so the corner pixel is background.
fn histogram(img: &Image) -> Vec<f64> {
    let mut h = [0.0; 3 * BINS];
    let background = img.pixel(0, 0);
    for p in img.as_slice().chunks_exact(3).filter(|p| **p != background) {
        for c in 0..3 {
            h[c * BINS + (p[c] as usize * BINS / 256)] += 1.0;
        }
    }
    let n = (img.width() * img.height()) as f64;
    h.iter().map(|v| v / n).collect()
}

#[test]
fn nearest_class_mean_histogram_classifier_beats_80_percent() {
    let spec = SynthSpec::default();
    let (train, manifest) = generate(&spec).unwrap();
    let fresh_spec = SynthSpec {
        num_images: 450,
        seed: RngSeed(99),
        ..spec
    };
    let (test, test_manifest) = generate(&fresh_spec).unwrap();

    let mut means = vec![vec![0.0; 3 * BINS]; spec.num_classes];
    let mut counts = vec![0.0; spec.num_classes];
    for (img, label) in train.iter().zip(manifest.labels()) {
        for (m, v) in means[label].iter_mut().zip(histogram(img)) {
            *m += v;
        }
        counts[label] += 1.0;
    }
    for (m, c) in means.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|v| *v /= c);
    }
    let correct = test
        .iter()
        .zip(test_manifest.labels())
        .filter(|(img, label)| {
            let h = histogram(img);
            let dist = |m: &Vec<f64>| m.iter().zip(&h).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            let best = (0..means.len()).min_by(|&a, &b| dist(&means[a]).total_cmp(&dist(&means[b]))).unwrap();
            best == *label
        })
        .count();
    let acc = correct as f64 / test.len() as f64;
    eprintln!("histogram oracle accuracy {acc}");
    assert!(acc > 0.8, "accuracy {acc}");
}

fn default_stage(images: &[Image], variant: Variant) -> EarlyStageConfig {
    model_config(variant, &ModelArgs::default(), &images[0]).unwrap()
}

#[test]
fn ecpe_reports_on_the_default_dataset() {
    let (images, _) = generate(&SynthSpec::default()).unwrap();
    let seed = RngSeed(ModelArgs::default().seed);
    let vit = default_stage(&images, Variant::VitStyle);

    // factor 1 in PilExact mode is the uncorrupted ECPE, bit for bit
    let report = ecpe_accumulate(&images, 1.0, &vit, Mode::PilExact, seed).unwrap();
    for (img, &v) in images.iter().zip(&report.per_image_values) {
        assert_eq!(image_ecpe(&patchify(img, &vit).unwrap(), &vit).unwrap().to_bits(), v.to_bits());
    }
    let total: f64 = report.per_image_values.iter().sum();
    assert!((report.ecpe_value - total).abs() <= 1e-9 * total);
    assert!(report.per_image_values.iter().all(|&v| v >= 0.0));

    // large contrast factors wash out the positional embedding in ViT style
    let one = ecpe_accumulate(&images, 1.0, &vit, Mode::Idealized, seed).unwrap().ecpe_value;
    let sixteen = ecpe_accumulate(&images, 16.0, &vit, Mode::Idealized, seed).unwrap().ecpe_value;
    assert!(sixteen < 0.9 * one, "factor 16: {sixteen}, factor 1: {one}");
}

#[test]
fn probe_contrast_ordering_and_baseline_consistency() {
    let (images, manifest) = generate(&SynthSpec::default()).unwrap();
    let labels = manifest.labels();
    let seed = RngSeed(ModelArgs::default().seed);
    let (train, _, test) = split_indices(images.len(), seed);
    let pick = |idx: &[usize]| -> (Vec<Image>, Vec<usize>) {
        (idx.iter().map(|&i| images[i].clone()).collect(), idx.iter().map(|&i| labels[i]).collect())
    };
    let (train_img, train_lab) = pick(&train);
    let (test_img, test_lab) = pick(&test);
    let mut mean_drop = Vec::new();
    for variant in Variant::BOTH {
        let cfg = default_stage(&images, variant);
        let feats = extract_all(&train_img, &cfg, FeatureReduction::MeanPoolRows).unwrap();
        let probe_cfg = ProbeConfig { seed, ..ProbeConfig::default() };
        let probe = train_probe(&feats, &train_lab, 9, FeatureReduction::MeanPoolRows, &probe_cfg).unwrap();
        let setup = SweepSetup {
            probe: &probe,
            cfg: &cfg,
            kind: CorruptionKind::Contrast,
            mode: Mode::PilExact,
            protocol: TranslationProtocol::STANDARD,
            seed,
        };
        let sweep = run_sweep(&test_img, &test_lab, &setup, &[1.0, 2.0, 3.0]).unwrap();
        let clean = extract_all(&test_img, &cfg, FeatureReduction::MeanPoolRows).unwrap();
        assert_eq!(sweep.baseline().to_bits(), probe.accuracy(&clean, &test_lab).to_bits());
        assert!(sweep.baseline() > 2.0 / 9.0, "{variant} baseline {}", sweep.baseline());
        mean_drop.push((sweep.drop_at(2.0).unwrap() + sweep.drop_at(3.0).unwrap()) / 2.0);
    }
    assert!(mean_drop[0] > mean_drop[1], "mean drops vit {} swin {}", mean_drop[0], mean_drop[1]);
}
