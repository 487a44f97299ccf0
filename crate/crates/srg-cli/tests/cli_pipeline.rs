//! End-to-end command tests on a miniature configuration: the full pipeline
//! runs, outputs are reproducible byte for byte, and error paths name what
//! is missing.

use std::fs;
use std::path::{Path, PathBuf};

use srg_cli::commands::{
    cmd_ablate, cmd_eval, cmd_propose, cmd_synth, cmd_train_tien, cmd_train_tign, Split,
};
use srg_cli::config::RunConfig;

const MINI_OVERRIDES: &str = "\
num_videos = 6
num_val_videos = 3
ls_min = 24
ls_max = 40
instances_min = 1
instances_max = 2
dur_min = 3
dur_max = 8
classes = 3
d_a = 8
d_m = 8
n_nbr = 8
trunk_channels = 8
fuse_channels = 12
attn_reduction = 4
attn_kernel = 3
head_kernel = 9
tign_pn_levels = 3:1,5:3
tien_pn_levels = 1:2,3:2
l_c = 3
l_fix = 12
tign_epochs = 2
tign_lr = 1e-3
tien_steps = 30
tien_batch = 8
tien_lr = 1e-3
max_proposals = 40
an_values = 10,20
auc_an_lo = 1
auc_an_hi = 20
ablate_blocks = pn+pn,cm+cm,pn+cm,cm+pn
ablate_boost = off
ablate_train_videos = 4
ablate_val_videos = 2
ablate_tign_epochs = 1
ablate_tien_steps = 10
";

fn mini_config(dir: &Path, seed: u64) -> RunConfig {
    let path = dir.join("mini.cfg");
    fs::write(&path, MINI_OVERRIDES).unwrap();
    RunConfig::load("tiny", Some(&path), Some(seed)).unwrap()
}

struct PipelineOut {
    data: PathBuf,
    proposals: PathBuf,
    metrics: PathBuf,
}

fn run_pipeline(root: &Path, config: &RunConfig, tag: &str) -> PipelineOut {
    let data = root.join(format!("data-{tag}"));
    let tign = root.join(format!("tign-{tag}.srgw"));
    let tien = root.join(format!("tien-{tag}.srgw"));
    let proposals = root.join(format!("proposals-{tag}.tsv"));
    let metrics = root.join(format!("metrics-{tag}.csv"));
    cmd_synth(config, &data).unwrap();
    cmd_train_tign(config, &data, &tign).unwrap();
    cmd_train_tien(config, &data, &tign, None, None, &tien).unwrap();
    cmd_propose(
        config,
        &data,
        Split::Val,
        &tign,
        &tien,
        None,
        None,
        &proposals,
    )
    .unwrap();
    cmd_eval(config, &data, Split::Val, &proposals, &metrics).unwrap();
    PipelineOut {
        data,
        proposals,
        metrics,
    }
}

#[test]
fn full_pipeline_completes_and_emits_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let config = mini_config(dir.path(), 11);
    let out = run_pipeline(dir.path(), &config, "a");
    let metrics = fs::read_to_string(&out.metrics).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next().unwrap(), "metric,an,tiou,value");
    let mut saw_ar = false;
    let mut saw_auc = false;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 4, "{line}");
        let value: f64 = fields[3].parse().unwrap();
        match fields[0] {
            "recall" | "ar" => {
                assert!((0.0..=1.0).contains(&value), "{line}");
                saw_ar |= fields[0] == "ar";
            }
            "auc" => {
                assert!((0.0..=100.0).contains(&value), "{line}");
                saw_auc = true;
            }
            other => panic!("unexpected metric {other}"),
        }
    }
    assert!(saw_ar && saw_auc);

    let proposals = fs::read_to_string(&out.proposals).unwrap();
    assert!(proposals.lines().filter(|l| !l.starts_with('#')).count() > 0);

    // sidecar logs exist and keep timestamps out of the main outputs
    assert!(out.proposals.with_extension("tsv.log").exists());
    assert!(!proposals.contains("unix "));
}

#[test]
fn identical_seeds_reproduce_outputs_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let config = mini_config(dir.path(), 21);
    let a = run_pipeline(dir.path(), &config, "x");
    let b = run_pipeline(dir.path(), &config, "y");
    assert_eq!(
        fs::read(&a.proposals).unwrap(),
        fs::read(&b.proposals).unwrap(),
        "proposal files must match"
    );
    assert_eq!(
        fs::read(&a.metrics).unwrap(),
        fs::read(&b.metrics).unwrap(),
        "metrics files must match"
    );
    // and the synthesized data itself
    let read_annotations = |p: &Path| fs::read(p.join("val").join("annotations.tsv")).unwrap();
    assert_eq!(read_annotations(&a.data), read_annotations(&b.data));
}

#[test]
fn eval_on_ground_truth_proposals_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let config = mini_config(dir.path(), 31);
    let data = dir.path().join("data");
    cmd_synth(&config, &data).unwrap();
    // fabricate proposals identical to the annotations
    let annotations =
        srg_core::data::load_annotations(&data.join("val").join("annotations.tsv")).unwrap();
    let mut lines = String::from("# video_id\trefined_start\trefined_end\tconfidence\n");
    for (video, instances) in &annotations {
        for inst in instances {
            lines.push_str(&format!(
                "{video}\t{}.0000\t{}.0000\t0.900000\n",
                inst.start, inst.end
            ));
        }
    }
    let proposals_path = dir.path().join("gt-proposals.tsv");
    fs::write(&proposals_path, lines).unwrap();
    let metrics_path = dir.path().join("gt-metrics.csv");
    cmd_eval(&config, &data, Split::Val, &proposals_path, &metrics_path).unwrap();
    let metrics = fs::read_to_string(&metrics_path).unwrap();
    for line in metrics.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let value: f64 = fields[3].parse().unwrap();
        match fields[0] {
            "recall" | "ar" => assert_eq!(value, 1.0, "{line}"),
            "auc" => assert!(value > 0.0),
            _ => {}
        }
    }
}

#[test]
fn ablate_emits_one_block_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    let config = mini_config(dir.path(), 41);
    let data = dir.path().join("data");
    cmd_synth(&config, &data).unwrap();
    let out = dir.path().join("ablation.csv");
    cmd_ablate(&config, &data, &out).unwrap();
    let body = fs::read_to_string(&out).unwrap();
    for variant in [
        "# variant=tign_pn+tien_pn",
        "# variant=tign_cm+tien_cm",
        "# variant=tign_pn+tien_cm",
        "# variant=tign_cm+tien_pn",
    ] {
        assert!(body.contains(variant), "missing {variant} in:\n{body}");
    }
    assert_eq!(body.matches("metric,an,tiou,value").count(), 4);
}

#[test]
fn missing_artifacts_produce_actionable_errors() {
    let dir = tempfile::tempdir().unwrap();
    let config = mini_config(dir.path(), 51);
    let data = dir.path().join("data");
    cmd_synth(&config, &data).unwrap();
    let missing = dir.path().join("nope.srgw");
    let err = cmd_propose(
        &config,
        &data,
        Split::Val,
        &missing,
        &missing,
        None,
        None,
        &dir.path().join("out.tsv"),
    )
    .unwrap_err();
    let msg = format!("{err:#}");
    assert!(msg.contains("checkpoint"), "{msg}");
    assert!(msg.contains("nope.srgw"), "{msg}");
    // no partial output left behind
    assert!(!dir.path().join("out.tsv").exists());

    let err = cmd_train_tign(&config, &dir.path().join("absent"), &dir.path().join("t.srgw"))
        .unwrap_err();
    assert!(format!("{err:#}").contains("dataset split"));
}

#[test]
fn binary_exits_zero_on_success_and_nonzero_on_error() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("mini.cfg");
    fs::write(&config_path, MINI_OVERRIDES).unwrap();
    let bin = env!("CARGO_BIN_EXE_srg");
    let data = dir.path().join("data");

    let ok = std::process::Command::new(bin)
        .args(["synth", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(&data)
        .output()
        .unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));

    // missing checkpoint → nonzero exit, error on stderr, no output file
    let out_file = dir.path().join("p.tsv");
    let bad = std::process::Command::new(bin)
        .args(["propose", "--config"])
        .arg(&config_path)
        .arg("--data")
        .arg(&data)
        .args(["--tign", "missing.srgw", "--tien", "missing.srgw", "--out"])
        .arg(&out_file)
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("error:"));
    assert!(!out_file.exists());

    // unknown profile → nonzero
    let bad_profile = std::process::Command::new(bin)
        .args(["synth", "--profile", "gigantic", "--out"])
        .arg(dir.path().join("d2"))
        .output()
        .unwrap();
    assert!(!bad_profile.status.success());
}

#[test]
fn interval_dump_feeds_tien_training() {
    let dir = tempfile::tempdir().unwrap();
    let config = mini_config(dir.path(), 61);
    let data = dir.path().join("data");
    let tign = dir.path().join("tign.srgw");
    cmd_synth(&config, &data).unwrap();
    cmd_train_tign(&config, &data, &tign).unwrap();
    let dump = dir.path().join("intervals.tsv");
    let tien_a = dir.path().join("tien-a.srgw");
    cmd_train_tien(&config, &data, &tign, None, Some(&dump), &tien_a).unwrap();
    assert!(dump.exists());
    // retrain from the dump alone; same pool, same seed, same result
    let tien_b = dir.path().join("tien-b.srgw");
    cmd_train_tien(&config, &data, &tign, Some(&dump), None, &tien_b).unwrap();
    assert_eq!(fs::read(&tien_a).unwrap(), fs::read(&tien_b).unwrap());
}
