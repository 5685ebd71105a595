mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

use common::*;
use uwsim::cli_report::{EXIT_CONFIG, EXIT_DATA, EXIT_USAGE};
use uwsim::dataset_pipeline::DatasetManifest;
use uwsim::depth_eval::DatasetSummary;
use uwsim::imageio;

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_usage_errors() {
    let o = uwsim(["--help"]);
    assert_eq!(o.status.code(), Some(0));
    for flag in ["manifest", "simulate", "grid", "eval", "table", "--config"] {
        assert!(stdout(&o).contains(flag), "{flag} missing from help");
    }
    let o = uwsim(["simulate", "--help"]);
    for flag in ["--seed", "--water-classes", "--color-space", "--depth-kind", "--intrinsics", "--workers"] {
        assert!(stdout(&o).contains(flag), "{flag} missing from simulate help");
    }
    let o = uwsim(["eval", "--help"]);
    for flag in ["--unit-scale", "--max-depth", "--median-align", "--pooling"] {
        assert!(stdout(&o).contains(flag), "{flag} missing from eval help");
    }
    assert_eq!(uwsim(["bogus"]).status.code(), Some(EXIT_USAGE));
    assert_eq!(uwsim(["simulate", "--color-space", "xyz"]).status.code(), Some(EXIT_USAGE));
    assert_eq!(uwsim(["table", "--format", "html", "x.json"]).status.code(), Some(EXIT_USAGE));
}

#[test]
fn manifest_lists_sorted_records() {
    let tmp = tempfile::tempdir().unwrap();
    let (rgb, depth) = write_fixture_dataset(tmp.path(), 5, 8, 6, 1);
    let out = tmp.path().join("m.jsonl");
    let o = uwsim(["manifest", "--rgb", s(&rgb), "--depth", s(&depth), "--seed", "4", "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = DatasetManifest::read(&out).unwrap();
    assert_eq!(m.records.len(), 5);
    assert_eq!(m.global_seed, 4);
    let paths: Vec<_> = m.records.iter().map(|r| r.rgb_path.clone()).collect();
    let mut sorted = paths.clone();
    sorted.sort();
    assert_eq!(paths, sorted);
    assert!(m.records.iter().all(|r| r.assigned_class.is_some() && r.augmentation.is_some()));

    let single = uwsim(["manifest", "--rgb", s(&rgb), "--depth", s(&depth), "--water-classes", "7C"]);
    let m = DatasetManifest::from_jsonl(&stdout(&single)).unwrap();
    assert!(m.records.iter().all(|r| r.assigned_class.as_ref().unwrap().as_str() == "7C"));
}

#[test]
fn data_and_config_errors_have_distinct_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let (rgb, depth) = write_fixture_dataset(tmp.path(), 3, 8, 6, 2);
    fs::remove_file(depth.join("img_001.pfm")).unwrap();
    let o = uwsim(["manifest", "--rgb", s(&rgb), "--depth", s(&depth)]);
    assert_eq!(o.status.code(), Some(EXIT_DATA));
    assert!(stderr(&o).contains("img_001.png"));

    let o = uwsim(["manifest", "--rgb", s(&rgb), "--depth", s(&depth), "--water-classes", "XZ"]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));

    let bad_cfg = tmp.path().join("bad.toml");
    fs::write(&bad_cfg, "[simulate]\nunknown_key = 1\n").unwrap();
    let o = uwsim(["--config", s(&bad_cfg), "manifest", "--rgb", s(&rgb), "--depth", s(&depth)]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));

    let o = uwsim(["manifest", "--rgb", s(&rgb), "--depth", s(&depth), "--depth-kind", "planar"]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn config_file_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let (rgb, depth) = write_fixture_dataset(tmp.path(), 2, 8, 6, 3);
    let cfg = tmp.path().join("uwsim.toml");
    fs::write(&cfg, "[simulate]\nseed = 99\nwater_classes = [\"II\"]\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_uwsim"))
        .args(["manifest", "--rgb", s(&rgb), "--depth", s(&depth)])
        .env("UWSIM_CONFIG", &cfg)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = DatasetManifest::from_jsonl(&stdout(&o)).unwrap();
    assert_eq!(m.global_seed, 99);
    assert!(m.records.iter().all(|r| r.assigned_class.as_ref().unwrap().as_str() == "II"));

    // Flags override the file.
    let o = Command::new(env!("CARGO_BIN_EXE_uwsim"))
        .args(["manifest", "--rgb", s(&rgb), "--depth", s(&depth), "--seed", "5"])
        .env("UWSIM_CONFIG", &cfg)
        .output()
        .unwrap();
    assert_eq!(DatasetManifest::from_jsonl(&stdout(&o)).unwrap().global_seed, 5);
}

#[test]
fn simulate_all_classes_and_planar_depth() {
    let tmp = tempfile::tempdir().unwrap();
    let (rgb, depth) = write_fixture_dataset(tmp.path(), 2, 8, 6, 4);
    let out = tmp.path().join("out");
    let o = uwsim([
        "simulate",
        "--rgb",
        s(&rgb),
        "--depth",
        s(&depth),
        "--output",
        s(&out),
        "--all-classes",
        "--water-classes",
        "I,9C",
        "--depth-kind",
        "planar",
        "--intrinsics",
        "6,6,4,3",
        "--color-space",
        "srgb",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for p in ["rgb/I/img_000.png", "rgb/9C/img_000.png", "rgb/I/img_001.png", "depth/img_000.pfm"] {
        assert!(out.join(p).exists(), "{p}");
    }
    let m = DatasetManifest::read(&out.join("manifest.jsonl")).unwrap();
    assert_eq!(m.records.len(), 4);
    assert!(m.records.iter().all(|r| r.intrinsics.is_some()));
    assert_ne!(
        fs::read(out.join("rgb/I/img_000.png")).unwrap(),
        fs::read(out.join("rgb/9C/img_000.png")).unwrap()
    );
}

fn eval(pred: &Path, gt: &Path, out: &Path, extra: &[&str]) -> std::process::Output {
    let mut args = vec!["eval", "--pred", s(pred), "--gt", s(gt), "--output", s(out)];
    args.extend_from_slice(extra);
    uwsim(args)
}

#[test]
fn eval_identical_trees_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, depth) = write_fixture_dataset(tmp.path(), 4, 10, 8, 5);
    let out = tmp.path().join("eval");
    let o = eval(&depth, &depth, &out, &["--model", "oracle", "--dataset", "fixture"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: DatasetSummary = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.abs_rel, 0.0);
    assert_eq!(summary.delta1(), Some(1.0));
    assert_eq!(summary.silog, 0.0);
    assert_eq!(summary.image_count, 4);
    assert_eq!(summary.model.as_deref(), Some("oracle"));
    let per_image = fs::read_to_string(out.join("per_image.jsonl")).unwrap();
    assert_eq!(per_image.lines().count(), 4);
}

#[test]
fn eval_scaled_predictions_and_pooling() {
    let tmp = tempfile::tempdir().unwrap();
    let gt_dir = tmp.path().join("gt");
    let pred_dir = tmp.path().join("pred");
    // Predictions in millimeters, 16-bit PNG; ground truth in meters, PFM.
    let gt = uwsim::DepthMap::new(4, 1, vec![1.0, 2.0, 4.0, 8.0]).unwrap();
    let gt_small = uwsim::DepthMap::new(2, 1, vec![1.0, 2.0]).unwrap();
    imageio::write_pfm(&gt_dir.join("a.pfm"), &gt).unwrap();
    imageio::write_pfm(&gt_dir.join("b.pfm"), &gt_small).unwrap();
    let pred_a = uwsim::DepthMap::new(4, 1, vec![1.0, 2.0, 4.0, 8.0]).unwrap();
    let pred_b = uwsim::DepthMap::new(2, 1, vec![2.0, 4.0]).unwrap();
    imageio::write_png_depth16(&pred_dir.join("a.png"), &pred_a, 0.001).unwrap();
    imageio::write_png_depth16(&pred_dir.join("b.png"), &pred_b, 0.001).unwrap();

    // Per-image: (0 + 1) / 2; per-pixel: 2 / 6.
    let out = tmp.path().join("e1");
    let o = eval(&pred_dir, &gt_dir, &out, &["--unit-scale", "0.001", "--depth-scale", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s1: DatasetSummary = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert!((s1.abs_rel - 0.5).abs() < 1e-12);
    assert_eq!(s1.delta1(), Some(0.5));

    let out = tmp.path().join("e2");
    let o = eval(
        &pred_dir,
        &gt_dir,
        &out,
        &["--unit-scale", "0.001", "--depth-scale", "1", "--pooling", "per-pixel"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s2: DatasetSummary = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert!((s2.abs_rel - 2.0 / 6.0).abs() < 1e-12);
    assert!((s2.delta1().unwrap() - 4.0 / 6.0).abs() < 1e-12);

    // Median alignment removes the global scale error of image b.
    let out = tmp.path().join("e3");
    let o = eval(
        &pred_dir,
        &gt_dir,
        &out,
        &["--unit-scale", "0.001", "--depth-scale", "1", "--median-align"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s3: DatasetSummary = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert!(s3.abs_rel < 1e-12);
}

#[test]
fn eval_reports_missing_predictions_and_excluded_images() {
    let tmp = tempfile::tempdir().unwrap();
    let gt_dir = tmp.path().join("gt");
    let pred_dir = tmp.path().join("pred");
    imageio::write_pfm(&gt_dir.join("a.pfm"), &uwsim::DepthMap::filled(2, 2, 3.0).unwrap()).unwrap();
    imageio::write_pfm(&gt_dir.join("z.pfm"), &uwsim::DepthMap::filled(2, 2, 0.0).unwrap()).unwrap();
    imageio::write_pfm(&pred_dir.join("a.pfm"), &uwsim::DepthMap::filled(2, 2, 3.0).unwrap()).unwrap();
    let o = eval(&pred_dir, &gt_dir, &tmp.path().join("e"), &[]);
    assert_eq!(o.status.code(), Some(EXIT_DATA));
    assert!(stderr(&o).contains("z.pfm"));

    imageio::write_pfm(&pred_dir.join("z.pfm"), &uwsim::DepthMap::filled(2, 2, 3.0).unwrap()).unwrap();
    let out = tmp.path().join("e");
    let o = eval(&pred_dir, &gt_dir, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: DatasetSummary = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!((summary.image_count, summary.excluded_images), (1, 1));

    let o = eval(&pred_dir, &gt_dir, &out, &["--unit-scale=-1"]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn table_command_renders_summaries() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, depth) = write_fixture_dataset(tmp.path(), 2, 6, 4, 6);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(eval(&depth, &depth, &a, &["--model", "Same", "--dataset", "SQUID"]).status.code(), Some(0));
    assert_eq!(
        eval(&depth, &depth, &b, &["--model", "Same", "--dataset", "FLSea-Canyon"]).status.code(),
        Some(0)
    );
    let o = uwsim(["table", s(&a.join("summary.json")), s(&b.join("summary.json"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        stdout(&o),
        "| Model | FLSea-Canyon AbsRel ↓ | FLSea-Canyon δ1 ↑ | SQUID AbsRel ↓ | SQUID δ1 ↑ |\n\
         |:---|---:|---:|---:|---:|\n\
         | Same | **0.0000** | **1.0000** | **0.0000** | **1.0000** |\n"
    );
    let o = uwsim(["table", "--format", "csv", s(&a.join("summary.json"))]);
    assert_eq!(stdout(&o), "model,SQUID AbsRel,SQUID delta1\nSame,0.0000,1.0000\n");
    let o = uwsim(["table", s(&tmp.path().join("missing.json"))]);
    assert_eq!(o.status.code(), Some(EXIT_DATA));
}

#[test]
fn grid_with_class_subset() {
    let tmp = tempfile::tempdir().unwrap();
    let (rgb, depth) = write_fixture_dataset(tmp.path(), 1, 6, 4, 7);
    let out = tmp.path().join("g.png");
    let o = uwsim([
        "grid",
        "--rgb",
        s(&rgb.join("img_000.png")),
        "--depth",
        s(&depth.join("img_000.pfm")),
        "--output",
        s(&out),
        "--water-classes",
        "3C",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let img = imageio::read_rgb8(&out).unwrap();
    assert_eq!((img.width, img.height), (18, 4));
}
