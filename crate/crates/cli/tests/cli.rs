//! End-to-end behaviour of every subcommand.

mod common;

use common::{bin, fixture, run, small_board, small_config, stdout_json};
use pcbdefect::dataset::{dataset_stats, DatasetManifest};
use pcbdefect::defect::{read_jsonl, DefectClass, DetectionRecord};
use pcbdefect::metrics::{coco_thresholds, mean_ap, pr_at_best_f1, ApMethod};
use pcbdefect::Tensor;

fn s(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["stats"]).status.code(), Some(2));
}

#[test]
fn every_subcommand_has_help() {
    for sub in ["conditions", "prompt", "diffuse", "blocks-check", "eval-det", "eval-gen", "stats", "augment"] {
        let out = run(&[sub, "--help"]);
        assert!(out.status.success(), "{sub}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"), "{sub}");
    }
}

#[test]
fn validation_failures_exit_one() {
    let out = run(&["stats", "--manifest", "/no/such/file.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = run(&["blocks-check", "--case", "not-a-block"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn stats_passes_library_counts_through() {
    let m = fixture("toy_manifest.jsonl");
    let v = stdout_json(&run(&["stats", "--manifest", s(&m)]));
    assert_eq!(v, serde_json::to_value(dataset_stats(&DatasetManifest::read(&m).unwrap())).unwrap());
}

#[test]
fn blocks_check_table_and_json() {
    let out = run(&["blocks-check"]);
    assert!(out.status.success());
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.lines().last().unwrap().starts_with("24/24"));
    let v = stdout_json(&run(&["blocks-check", "--case", "clcf", "--json"]));
    assert_eq!(v["failed"], 0);
    assert!(v["results"].as_array().unwrap().iter().all(|r| r["block"] == "clcf"));
}

#[test]
fn eval_det_equals_library_report() {
    let (p, g) = (fixture("toy_pred.jsonl"), fixture("toy_gt.jsonl"));
    let v = stdout_json(&run(&["eval-det", "--pred", s(&p), "--gt", s(&g), "--iou", "0.5:0.95"]));
    let preds: Vec<DetectionRecord> = read_jsonl(&p).unwrap();
    let gts: Vec<DetectionRecord> = read_jsonl(&g).unwrap();
    let lib = mean_ap(&preds, &gts, &DefectClass::ALL, &coco_thresholds(), ApMethod::Interp101).unwrap();
    let pr = pr_at_best_f1(&preds, &gts, 0.5).unwrap();
    assert_eq!(v["map50"].as_f64().unwrap(), lib.map50);
    assert_eq!(v["map5095"].as_f64().unwrap(), lib.map5095);
    assert_eq!(v["precision"].as_f64().unwrap(), pr.precision);
    assert_eq!(v["recall"].as_f64().unwrap(), pr.recall);
    assert_eq!(v["prOperatingPoint"], "max_f1");
    let per_class = v["perClass"].as_array().unwrap();
    assert_eq!(per_class.len(), lib.per_class.len());
    for (got, want) in per_class.iter().zip(&lib.per_class) {
        assert_eq!(got["ap50"].as_f64().unwrap(), want.ap50);
        assert_eq!(got["apRange"].as_f64().unwrap(), want.ap_range);
    }
}

#[test]
fn eval_gen_reports_all_four_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let real = dir.path().join("real.csv");
    let gen = dir.path().join("gen.csv");
    std::fs::write(&real, "dim: 2\n0,0\n1,0\n0,1\n1,1\n").unwrap();
    std::fs::write(&gen, "dim: 2\n2,0\n3,0\n2,1\n3,1\n").unwrap();
    let pairs = dir.path().join("pairs");
    for sub in ["real", "gen"] {
        std::fs::create_dir_all(pairs.join(sub)).unwrap();
    }
    for i in 0..3u8 {
        let r = pcbdefect::image::GrayImage::from_fn(16, 16, |x, y| (x * 9 + y * 4) as u8 + i);
        let g = pcbdefect::image::GrayImage::from_fn(16, 16, |x, y| (x * 9 + y * 4) as u8 + i + 1);
        r.write_png(pairs.join("real").join(format!("{i}.png"))).unwrap();
        g.write_png(pairs.join("gen").join(format!("{i}.png"))).unwrap();
    }
    let v = stdout_json(&run(&["eval-gen", "--real-feats", s(&real), "--gen-feats", s(&gen), "--pairs", s(&pairs)]));
    // equal covariances, means two apart along one axis
    assert!((v["fid"].as_f64().unwrap() - 4.0).abs() < 1e-9);
    assert!((v["psnr"].as_f64().unwrap() - 20.0 * 255f64.log10()).abs() < 1e-9);
    assert!(v["ssim"].as_f64().unwrap() > 0.99);
    assert!(v["lpipsForm"].as_f64().unwrap() > 0.0);
    assert_eq!(v["pairs"], 3);

    std::fs::remove_file(pairs.join("gen").join("2.png")).unwrap();
    assert_eq!(run(&["eval-gen", "--pairs", s(&pairs)]).status.code(), Some(1));
}

#[test]
fn conditions_writes_the_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cond");
    let v = stdout_json(&run(&[
        "conditions",
        "--image",
        s(&fixture("golden/board.pgm")),
        "--instances",
        s(&fixture("golden/board.jsonl")),
        "--out-dir",
        s(&out),
    ]));
    assert_eq!(v["defects"], 2);
    for f in ["edge.pgm", "depth.txt", "condition_map.txt", "prompt.txt", "embedding.txt"] {
        assert_eq!(std::fs::read(out.join(f)).unwrap(), std::fs::read(fixture("golden/expected").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn prompt_matches_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("i.jsonl");
    std::fs::write(&inst, "{\"image_id\":\"a\",\"class\":\"short\",\"bbox\":[27,27,10,10]}\n").unwrap();
    let text = dir.path().join("p.txt");
    let v = stdout_json(&run(&["prompt", "--instances", s(&inst), "--width", "64", "--height", "64", "--out", s(&text)]));
    assert_eq!(v["prompt"], "a PCB image with 1 small short defect at the center");
    assert_eq!(std::fs::read_to_string(text).unwrap(), "a PCB image with 1 small short defect at the center\n");
}

#[test]
fn diffuse_writes_latent_png_and_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("z.txt");
    let csv = dir.path().join("sched.csv");
    let v = stdout_json(&run(&["--config", s(&cfg), "diffuse", "--steps", "4", "--out", s(&out), "--schedule-csv", s(&csv)]));
    assert_eq!(v["shape"], serde_json::json!([1, 4, 16, 16]));
    assert_eq!(v["timesteps"], serde_json::json!([50, 38, 25, 13, 0]));
    assert_eq!(v["seed"], 5);
    assert!(Tensor::read_text(&out).unwrap().is_finite());
    let png = pcbdefect::image::GrayImage::load(dir.path().join("z.png")).unwrap();
    assert_eq!((png.width(), png.height()), (64, 16));
    assert_eq!(std::fs::read_to_string(csv).unwrap().lines().count(), 51);
}

#[test]
fn conditioned_diffusion_differs_from_unconditioned_only_through_text() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let board = small_board(dir.path());
    let prompt = dir.path().join("p.txt");
    std::fs::write(&prompt, "a PCB image with 1 small short defect at the center\n").unwrap();
    let go = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["--config", s(&cfg), "diffuse", "--steps", "3", "--out", s(&out)];
        args.extend_from_slice(extra);
        stdout_json(&run(&args));
        Tensor::read_text(out).unwrap()
    };
    let plain = go("plain.txt", &[]);
    // fresh zero convolutions hide the condition map entirely
    let cond = go("cond.txt", &["--cond-image", s(&board)]);
    assert!(cond.bitwise_eq(&plain));
    let text = go("text.txt", &["--cond-image", s(&board), "--prompt-file", s(&prompt)]);
    assert!(text.max_abs_diff(&plain) > 0.0);
}

#[test]
fn augment_extends_renders_and_merges() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture("toy_manifest.jsonl");
    let manifest = DatasetManifest::read(&m).unwrap();
    let src = dir.path().join("src");
    std::fs::create_dir_all(src.join("images")).unwrap();
    for e in manifest.entries() {
        pcbdefect::image::GrayImage::filled(e.width, e.height, 77).write_png(src.join(&e.image)).unwrap();
    }
    let synthetic = dir.path().join("syn.jsonl");
    std::fs::write(
        &synthetic,
        "{\"image\":\"gen/0.png\",\"width\":64,\"height\":64,\"split\":\"train\",\"instances\":[{\"class\":\"open\",\"bbox\":[1,1,4,4]}],\"provenance\":{\"origin\":\"synthetic\",\"generator\":\"toy\"}}\n",
    )
    .unwrap();
    let out = dir.path().join("out.jsonl");
    let dst = dir.path().join("dst");
    let v = stdout_json(&run(&[
        "augment",
        "--manifest",
        s(&m),
        "--targets",
        "short=+5,hole_breakout=6",
        "--seed",
        "3",
        "--out",
        s(&out),
        "--merge",
        s(&synthetic),
        "--images",
        s(&src),
        "--render-to",
        s(&dst),
    ]));
    assert_eq!(v["merged"], 1);
    assert_eq!(v["after"]["images"]["short"].as_u64().unwrap(), v["before"]["images"]["short"].as_u64().unwrap() + 5);
    assert!(v["after"]["images"]["hole_breakout"].as_u64().unwrap() >= 6);
    let added = v["added"].as_u64().unwrap() as usize;
    assert_eq!(v["rendered"].as_u64().unwrap() as usize, added);
    let result = DatasetManifest::read(&out).unwrap();
    assert_eq!(result.len(), manifest.len() + added + 1);
    assert_eq!(&result.entries()[..manifest.len()], manifest.entries());

    let bad = run(&["augment", "--manifest", s(&m), "--targets", "short=1", "--out", s(&out)]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn config_flag_and_environment_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    std::fs::write(&cfg, "eval.iou = 0.5\n").unwrap();
    let (p, g) = (fixture("toy_pred.jsonl"), fixture("toy_gt.jsonl"));
    let via_flag = stdout_json(&run(&["--config", s(&cfg), "eval-det", "--pred", s(&p), "--gt", s(&g)]));
    assert_eq!(via_flag["iouThresholds"], serde_json::json!([0.5]));
    let via_env = bin().env("PCBDEFECT_CONFIG", &cfg).args(["eval-det", "--pred", s(&p), "--gt", s(&g)]).output().unwrap();
    assert_eq!(stdout_json(&via_env), via_flag);

    std::fs::write(&cfg, "eval.typo = 1\n").unwrap();
    assert_eq!(run(&["--config", s(&cfg), "stats", "--manifest", s(&fixture("toy_manifest.jsonl"))]).status.code(), Some(1));
}
