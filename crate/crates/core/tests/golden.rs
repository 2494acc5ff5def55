use std::path::PathBuf;

use prelayernorm::corruptions::{enhance, gamma, CorruptionKind, CorruptionSpec};
use prelayernorm::image::{Image, Mode};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn read(name: &str) -> (Vec<u8>, Image) {
    let bytes = std::fs::read(fixture(name)).unwrap();
    let img = Image::decode_ppm(&bytes).unwrap();
    (bytes, img)
}

#[test]
fn enhancement_goldens_match_byte_for_byte() {
    let (_, input) = read("input.ppm");
    for kind in [CorruptionKind::Contrast, CorruptionKind::Brightness] {
        for f in [0.0, 0.5, 1.0, 2.0, 5.0] {
            let (want, _) = read(&format!("{kind}_{f}.ppm"));
            let got = enhance(&input, CorruptionSpec::new(kind, f, Mode::PilExact)).unwrap();
            assert_eq!(got.encode_ppm().unwrap(), want, "{kind} {f}");
        }
    }
}

#[test]
fn gamma_goldens_match_byte_for_byte() {
    let (_, input) = read("input.ppm");
    for g in [0.5, 1.0, 2.0, 5.0] {
        let (want, _) = read(&format!("gamma_{g}.ppm"));
        let got = gamma(&input, g, Mode::PilExact).unwrap();
        assert_eq!(got.encode_ppm().unwrap(), want, "gamma {g}");
    }
}

#[test]
fn factor_one_is_byte_identical_to_input() {
    let (bytes, input) = read("input.ppm");
    for kind in [CorruptionKind::Contrast, CorruptionKind::Brightness] {
        let out = enhance(&input, CorruptionSpec::new(kind, 1.0, Mode::PilExact)).unwrap();
        assert_eq!(out.encode_ppm().unwrap(), bytes);
    }
}

#[test]
fn brightness_five_saturates_from_52() {
    let strip = Image::from_fn(256, 1, |x, _| [x as f64; 3]);
    let out = enhance(&strip, CorruptionSpec::new(CorruptionKind::Brightness, 5.0, Mode::PilExact)).unwrap();
    assert_eq!(out.pixel(51, 0), [255.0; 3]);
    assert_eq!(out.pixel(50, 0), [250.0; 3]);
    for x in 52..256 {
        assert_eq!(out.pixel(x, 0), [255.0; 3]);
    }
    // 51 * 5 = 255 lands exactly on the ceiling; 52 is the first clipped input
    let ideal = enhance(&strip, CorruptionSpec::new(CorruptionKind::Brightness, 5.0, Mode::Idealized)).unwrap();
    assert_eq!(ideal.pixel(51, 0), [255.0; 3]);
    assert_eq!(ideal.pixel(52, 0), [260.0; 3]);
}
