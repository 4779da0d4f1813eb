use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fsid::calibration::NoiseProfile;
use fsid::noise::{inject_with_scale, ClampPolicy};
use fsid::rawio::{self, RawLevels};
use fsid::{BayerImage, CfaPattern, Rng};

fn fsidgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsidgen"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = fsidgen(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_small_generator_config(path: &Path) {
    fs::write(
        path,
        r#"{"width": 48, "height": 32, "samples_per_pixel": 1, "object_count": [2, 4]}"#,
    )
    .unwrap();
}

#[test]
fn generate_analyze_unprocess_inject() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gen.json");
    write_small_generator_config(&cfg);
    let scenes = dir.path().join("scenes");
    ok(&["generate", "--seed", "3", "--count", "3", "--config", p(&cfg), "--out", p(&scenes)]);
    for ext in ["json", "fsrgb", "png"] {
        assert!(scenes.join(format!("scene_000002.{ext}")).exists(), "{ext}");
    }
    let spec = fs::read_to_string(scenes.join("scene_000000.json")).unwrap();
    assert!(spec.contains("\"schema_version\": 1"));

    // the same seed reproduces the same frames
    let again = dir.path().join("again");
    ok(&["generate", "--seed", "3", "--count", "3", "--config", p(&cfg), "--out", p(&again), "--no-preview"]);
    assert_eq!(
        fs::read(scenes.join("scene_000001.fsrgb")).unwrap(),
        fs::read(again.join("scene_000001.fsrgb")).unwrap()
    );

    let report = dir.path().join("report.json");
    let out = fsidgen(&["analyze", "--in", p(&scenes), "--band", "0.0:1.0", "--report", p(&report)]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["edge_ratios"].as_array().unwrap().len(), 3);
    assert_eq!(json["accepted"], true);

    // an impossible band rejects the batch with exit code 1
    let out = fsidgen(&["analyze", "--in", p(&scenes), "--band", "0.99:1.0"]);
    assert_eq!(out.status.code(), Some(1));

    let raw = dir.path().join("raw");
    ok(&["unprocess", "--in", p(&scenes), "--pattern", "GBRG", "--out", p(&raw)]);
    let (clean, header) = rawio::read_bayer(&raw.join("scene_000000.fsraw")).unwrap();
    assert_eq!(header.pattern, Some(CfaPattern::Gbrg));
    assert_eq!((clean.width(), clean.height()), (48, 32));

    let profile = dir.path().join("profile.json");
    fs::write(&profile, NoiseProfile::uniform("test", "iso100", 0.02, 0.001).to_json().unwrap()).unwrap();
    let noisy = dir.path().join("noisy");
    ok(&["inject", "--in", p(&raw), "--profile", p(&profile), "--gain-range", "1:1", "--seed", "42", "--out", p(&noisy)]);
    let (n, _) = rawio::read_bayer(&noisy.join("scene_000000.fsraw")).unwrap();
    assert_ne!(n.data(), clean.data());
    let log = fs::read_to_string(noisy.join("inject.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3);
    assert!(log.contains("\"gain_scale\":1.0"));
}

#[test]
fn calibrate_recovers_profile_from_burst() {
    let dir = tempfile::tempdir().unwrap();
    let burst = dir.path().join("burst");
    fs::create_dir_all(&burst).unwrap();
    let truth = NoiseProfile::uniform("synthetic", "x", 0.01, 0.0004);
    // horizontal ramp kept clear of the clipping rails
    let (w, h) = (256, 128);
    let clean = BayerImage::from_fn(w, h, CfaPattern::Rggb, |_, c| 0.2 + 0.6 * c as f32 / (w - 1) as f32).unwrap();
    let root = Rng::new(5, 0);
    for f in 0..100u64 {
        let frame = inject_with_scale(&clean, &truth, 1.0, ClampPolicy::Clamp, &root.derive_index(f)).unwrap();
        rawio::write_bayer(&burst.join(format!("f{f:04}.fsraw")), &frame, RawLevels::default()).unwrap();
    }
    let out = dir.path().join("fitted.json");
    ok(&["calibrate", "--burst", p(&burst), "--camera", "sim", "--gain", "iso800", "--out", p(&out)]);
    let fitted = NoiseProfile::from_json(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(fitted.label(), NoiseProfile::uniform("sim", "iso800", 0.0, 0.0).label());
    for ch in [fitted.channels.r, fitted.channels.g, fitted.channels.b] {
        assert!((ch.k - 0.01).abs() < 0.001, "{ch:?}");
        assert!((ch.sigma2 - 0.0004).abs() < 0.0002, "{ch:?}");
    }
}

#[test]
fn build_verify_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("build.json");
    fs::write(
        &cfg,
        r#"{"count": 4, "seed": 9, "scene": {"width": 32, "height": 32, "samples_per_pixel": 1}}"#,
    )
    .unwrap();
    let ds = dir.path().join("ds");
    let stdout = ok(&["build-dataset", "--config", p(&cfg), "--out", p(&ds), "--workers", "2"]);
    assert!(stdout.contains("4 pairs"), "{stdout}");
    let stdout = ok(&["verify", p(&ds.join("manifest.jsonl"))]);
    assert!(stdout.contains("PASS"));

    let pairs = dir.path().join("pairs.jsonl");
    let mut lines = String::new();
    for (i, lux) in [0.5, 0.5, 2.0, 5.0].iter().enumerate() {
        lines.push_str(&format!(
            "{{\"pair_id\":\"{i}\",\"output\":\"ds/shard_0000/pair_{i:06}_noisy.fsraw\",\"ground_truth\":\"ds/shard_0000/pair_{i:06}_clean.fsraw\",\"label\":\"{}\",\"lux\":{lux}}}\n",
            if i % 2 == 0 { "chart" } else { "text" }
        ));
    }
    fs::write(&pairs, lines).unwrap();
    let table = dir.path().join("table.csv");
    ok(&["evaluate", "--pairs", p(&pairs), "--out", p(&table)]);
    let csv = fs::read_to_string(&table).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert!(rows[0].starts_with("label,0.5 lux PSNR,0.5 lux SSIM,1 lux PSNR"));
    assert_eq!(rows.len(), 4, "{csv}");
    assert!(rows[1].starts_with("all,"));

    // tamper and expect a nonzero exit with the pair named
    let victim = ds.join("shard_0000/pair_000002_clean.fsraw");
    let mut bytes = fs::read(&victim).unwrap();
    bytes[40] ^= 0xff;
    fs::write(&victim, bytes).unwrap();
    let out = fsidgen(&["verify", p(&ds)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("pair 000002"));
}

#[test]
fn bad_arguments_fail_cleanly() {
    let out = fsidgen(&["analyze", "--in", ".", "--band", "0.5:0.1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("exceeds"));
    let out = fsidgen(&["verify", "/nonexistent/manifest.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
}
