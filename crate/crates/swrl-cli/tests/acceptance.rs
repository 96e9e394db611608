//! CLI acceptance: determinism of train/eval outputs (criterion 9) plus the
//! documented exit codes, driven through the real binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use swrl_cli::commands::{cmd_collect_offline, cmd_eval, cmd_train, EvalAlgo, TrainAlgo};
use swrl_core::config::ScenarioConfig;

fn tiny_cfg() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::planar_valve_desk();
    cfg.mdp.episode_duration = 0.4;
    cfg.learner.episodes = 3;
    cfg.learner.warmup_steps = 20;
    cfg.learner.batch_size = 8;
    cfg.learner.update_every = 10;
    cfg.learner.updates_per_round = 1;
    cfg.learner.feature_dim = 16;
    cfg.learner.hidden_dim = 12;
    cfg.learner.bc_epochs = 3;
    cfg.eval.cases = 3;
    cfg.seed = 9;
    cfg
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("swrl_cli_{}_{}", std::process::id(), name));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn criterion_9_determinism() {
    let cfg = tiny_cfg();

    // Train twice with one worker: byte-identical curves and checkpoint.
    let out_a = scratch("train_a");
    let out_b = scratch("train_b");
    cmd_train(&cfg, TrainAlgo::Swrl, &out_a).unwrap();
    cmd_train(&cfg, TrainAlgo::Swrl, &out_b).unwrap();
    assert_eq!(
        read(&out_a.join("curves.csv")),
        read(&out_b.join("curves.csv")),
        "train curves must be byte-identical"
    );
    assert_eq!(
        read(&out_a.join("checkpoint.params.bin")),
        read(&out_b.join("checkpoint.params.bin")),
        "checkpoint blobs must be byte-identical"
    );
    assert_eq!(
        read(&out_a.join("config.json")),
        read(&out_b.join("config.json"))
    );

    // Evaluate twice with one worker: byte-identical report CSV.
    let eval_a = scratch("eval_a");
    let eval_b = scratch("eval_b");
    cmd_eval(&cfg, EvalAlgo::Manual, None, &eval_a, false, 1).unwrap();
    cmd_eval(&cfg, EvalAlgo::Manual, None, &eval_b, false, 1).unwrap();
    assert_eq!(
        read(&eval_a.join("report.csv")),
        read(&eval_b.join("report.csv")),
        "eval reports must be byte-identical"
    );

    // Collect-offline twice: identical datasets (checksummed format).
    let ds_a = scratch("ds_a").join("offline.swrl1");
    let ds_b = scratch("ds_b").join("offline.swrl1");
    cmd_collect_offline(&cfg, 2, &ds_a).unwrap();
    cmd_collect_offline(&cfg, 2, &ds_b).unwrap();
    assert_eq!(read(&ds_a), read(&ds_b), "datasets must be byte-identical");

    for dir in [out_a, out_b, eval_a, eval_b] {
        fs::remove_dir_all(dir).ok();
    }
    println!("ACCEPTANCE 9 (determinism): PASS");
}

fn swrl_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_swrl"))
}

#[test]
fn exit_code_2_on_unknown_algorithm() {
    let out = scratch("badalgo");
    let status = swrl_bin()
        .args(["train", "--algo", "nonsense", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
    fs::remove_dir_all(out).ok();
}

#[test]
fn exit_code_2_on_invalid_config() {
    let dir = scratch("badcfg");
    let cfg_path = dir.join("bad.json");
    fs::write(&cfg_path, "{\"not\": \"a config\"}").unwrap();
    let out = dir.join("out");
    let result = swrl_bin()
        .args(["train", "--algo", "swrl", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(result.status.code(), Some(2));

    // Field-level diagnostics for semantic errors.
    let mut cfg = tiny_cfg();
    cfg.learner.batch_size = 0;
    fs::write(&cfg_path, cfg.to_json_pretty().unwrap()).unwrap();
    let result = swrl_bin()
        .args(["train", "--algo", "swrl", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(
        stderr.contains("learner.batch_size"),
        "diagnostics must name the field: {stderr}"
    );
    fs::remove_dir_all(dir).ok();
}

#[test]
fn exit_code_2_on_bc_without_dataset() {
    let dir = scratch("bc_nodata");
    let cfg = tiny_cfg();
    let cfg_path = dir.join("cfg.json");
    fs::write(&cfg_path, cfg.to_json_pretty().unwrap()).unwrap();
    let out = dir.join("out");
    let result = swrl_bin()
        .args(["train", "--algo", "bc", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(
        stderr.contains("learner.offline_dataset"),
        "message must name the missing field: {stderr}"
    );
    fs::remove_dir_all(dir).ok();
}

#[test]
fn exit_code_3_on_checkpoint_shape_mismatch() {
    let dir = scratch("shape_mismatch");
    let cfg = tiny_cfg();
    let out = dir.join("train");
    cmd_train(&cfg, TrainAlgo::Swrl, &out).unwrap();

    // Same checkpoint, evaluated under an incompatible model config.
    let mut other = cfg.clone();
    other.learner.feature_dim = 24;
    let cfg_path = dir.join("other.json");
    fs::write(&cfg_path, other.to_json_pretty().unwrap()).unwrap();
    let eval_out = dir.join("eval");
    let result = swrl_bin()
        .args(["eval", "--algo", "swrl", "--config"])
        .arg(&cfg_path)
        .arg("--checkpoint")
        .arg(out.join("checkpoint"))
        .arg("--out")
        .arg(&eval_out)
        .output()
        .unwrap();
    assert_eq!(
        result.status.code(),
        Some(3),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    fs::remove_dir_all(dir).ok();
}

#[test]
fn eval_manual_needs_no_checkpoint_and_writes_rows() {
    let dir = scratch("manual_eval");
    let cfg = tiny_cfg();
    cmd_eval(&cfg, EvalAlgo::Manual, None, &dir, true, 2).unwrap();
    let csv = String::from_utf8(read(&dir.join("report.csv"))).unwrap();
    let rows = csv.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows - 1, cfg.eval.cases, "one row per case");
    // --plot emits one manipulability SVG per case.
    for seed in 0..cfg.eval.cases as u64 {
        assert!(dir.join(format!("case_{}.svg", cfg.eval.seed_base + seed)).exists());
    }
    fs::remove_dir_all(dir).ok();
}

#[test]
fn collect_offline_roundtrip_and_reward_replay() {
    use swrl_core::learn::dataset::read_dataset;
    let dir = scratch("collect");
    let cfg = tiny_cfg();
    let path = dir.join("data.swrl1");
    cmd_collect_offline(&cfg, 2, &path).unwrap();
    let (meta, transitions, checksum) = read_dataset(&path).unwrap();
    assert_eq!(meta.count, transitions.len());
    assert!(meta.count > 0);

    // Round-trip: identical count and checksum.
    let (meta2, transitions2, checksum2) = read_dataset(&path).unwrap();
    assert_eq!(meta.count, meta2.count);
    assert_eq!(checksum, checksum2);
    assert_eq!(transitions, transitions2);

    // Zero episodes: valid empty dataset.
    let empty = dir.join("empty.swrl1");
    cmd_collect_offline(&cfg, 0, &empty).unwrap();
    let (meta, transitions, _) = read_dataset(&empty).unwrap();
    assert_eq!(meta.count, 0);
    assert!(transitions.is_empty());
    fs::remove_dir_all(dir).ok();
}

#[test]
fn bc_pipeline_trains_from_collected_dataset() {
    let dir = scratch("bc_pipe");
    let mut cfg = tiny_cfg();
    let data = dir.join("data.swrl1");
    cmd_collect_offline(&cfg, 3, &data).unwrap();
    cfg.learner.offline_dataset = Some(data.to_string_lossy().into_owned());
    let out = dir.join("out");
    cmd_train(&cfg, TrainAlgo::Bc, &out).unwrap();
    assert!(out.join("checkpoint.params.bin").exists());
    assert!(out.join("bc_report.json").exists());

    let eval_out = dir.join("eval");
    cmd_eval(
        &cfg,
        EvalAlgo::Bc,
        Some(&out.join("checkpoint")),
        &eval_out,
        false,
        1,
    )
    .unwrap();
    assert!(eval_out.join("report.json").exists());
    fs::remove_dir_all(dir).ok();
}

#[test]
fn plot_command_renders_curves() {
    use swrl_cli::commands::cmd_plot;
    let dir = scratch("plot");
    let curves = dir.join("curves.csv");
    fs::write(
        &curves,
        "# config_hash=00 seed=0\nepisode,return_k,return_r,length,band_occupancy,cause\n0,-10,5,30,0.1,timeout\n1,2,8,40,0.2,timeout\n",
    )
    .unwrap();
    cmd_plot(Some(&curves), None, &dir).unwrap();
    let svg = String::from_utf8(read(&dir.join("curves.svg"))).unwrap();
    assert!(svg.contains("return_k"));
    assert!(svg.contains("polyline"));
    fs::remove_dir_all(dir).ok();
}
