use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_prelayernorm");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn small_dataset(dir: &Path) {
    let out = run(&[
        "generate",
        "--out",
        dir.to_str().unwrap(),
        "--num-images",
        "60",
        "--image-size",
        "64",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn invariance_exit_codes() {
    let swin = run(&["invariance", "--variant", "swin", "--seed", "7", "--trials", "100"]);
    assert_eq!(code(&swin), 0);
    assert!(String::from_utf8_lossy(&swin.stdout).contains("PASS affine_invariance"));
    let vit = run(&["invariance", "--variant", "vit", "--seed", "7", "--trials", "100"]);
    assert_eq!(code(&vit), 0);
    assert!(String::from_utf8_lossy(&vit.stdout).contains("affine_inconsistency_fraction"));
    let missing = run(&["invariance"]);
    assert_eq!(code(&missing), 2);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("Usage"));
    assert_eq!(code(&run(&["invariance", "--variant", "swin", "--embed-dim", "1"])), 2);
}

#[test]
fn ecpe_usage_and_io_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nothing");
    let out = run(&["ecpe", "--data", missing.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest.json"));

    let data = tmp.path().join("data");
    small_dataset(&data);
    let out = run(&["ecpe", "--data", data.to_str().unwrap(), "--factors", "2,3"]);
    assert_eq!(code(&out), 2);
    let out = run(&["ecpe", "--data", data.to_str().unwrap(), "--patch-size", "24"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn ecpe_and_bench_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_dataset(&data);
    let d = data.to_str().unwrap();
    let mut outputs = Vec::new();
    for run_id in 0..2 {
        let out_dir = tmp.path().join(format!("out{run_id}"));
        let o = out_dir.to_str().unwrap();
        assert_eq!(code(&run(&["ecpe", "--data", d, "--out", o, "--seed", "3"])), 0);
        let bench = run(&[
            "bench",
            "--data",
            d,
            "--out",
            o,
            "--seed",
            "3",
            "--epochs",
            "50",
            "--corruptions",
            "contrast,translation",
        ]);
        assert_eq!(code(&bench), 0, "{}", String::from_utf8_lossy(&bench.stderr));
        let read = |f: &str| std::fs::read(out_dir.join(f)).unwrap();
        outputs.push([read("ecpe.json"), read("bench.json"), read("bench.csv")]);
        assert!(out_dir.join("ecpe.svg").exists());
        assert!(out_dir.join("bench_contrast.svg").exists());
    }
    assert_eq!(outputs[0], outputs[1]);
    let csv = String::from_utf8(outputs[0][2].clone()).unwrap();
    assert!(csv.starts_with("variant,corruption,mode,factor,accuracy,num_test,seed\n"));
    // 2 variants x (3 contrast + 4 translation factors)
    assert_eq!(csv.lines().count(), 1 + 2 * 7);
}

#[test]
fn bench_generates_missing_data_and_checks_baselines() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("fresh");
    let out = run(&[
        "bench",
        "--data",
        data.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
        "--factors",
        "2,3",
    ]);
    assert_eq!(code(&out), 2);
    assert!(!data.join("manifest.json").exists());
}

#[test]
fn corrupt_writes_expected_files() {
    let tmp = tempfile::tempdir().unwrap();
    let input = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/input.ppm");
    let o = tmp.path().join("c");
    let out = run(&[
        "corrupt",
        "--data",
        input.to_str().unwrap(),
        "--corruption",
        "contrast",
        "--factors",
        "1,2",
        "--out",
        o.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read(o.join("input_contrast_1.ppm")).unwrap(), std::fs::read(&input).unwrap());
    let golden = input.with_file_name("contrast_2.ppm");
    assert_eq!(std::fs::read(o.join("input_contrast_2.ppm")).unwrap(), std::fs::read(golden).unwrap());

    let out = run(&["corrupt", "--data", tmp.path().join("absent.ppm").to_str().unwrap(), "--out", o.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    let out = run(&["corrupt", "--data", input.to_str().unwrap(), "--corruption", "blur"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn corrupt_translation_stays_inside_the_template() {
    let tmp = tempfile::tempdir().unwrap();
    let input = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/input.ppm");
    let o = tmp.path().join("t");
    let args = |factors: &'static str| {
        vec![
            "corrupt".to_string(),
            "--data".into(),
            input.to_str().unwrap().into(),
            "--corruption".into(),
            "translation".into(),
            "--short-side".into(),
            "16".into(),
            "--crop".into(),
            "12".into(),
            "--factors".into(),
            factors.into(),
            "--out".into(),
            o.to_str().unwrap().into(),
        ]
    };
    let ok = Command::new(BIN).args(args("0,2")).output().unwrap();
    assert_eq!(code(&ok), 0);
    let far = Command::new(BIN).args(args("3")).output().unwrap();
    assert_eq!(code(&far), 2);
    assert!(String::from_utf8_lossy(&far.stderr).contains("out of range"));
}
