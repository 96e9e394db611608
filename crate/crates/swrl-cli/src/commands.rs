//! Command implementations behind the CLI entry points. Kept as library
//! functions so integration tests can drive them directly.

use std::fs;
use std::path::{Path, PathBuf};

use swrl_core::baselines::ManualPolicy;
use swrl_core::config::ScenarioConfig;
use swrl_core::env::{ManipEnv, ObservationFrame};
use swrl_core::error::Error;
use swrl_core::learn::bc::{train_bc, BcExample, BcPolicy, BcReport};
use swrl_core::learn::checkpoint::{load_checkpoint, restore_net, save_checkpoint};
use swrl_core::learn::dataset::{read_dataset, write_dataset, DatasetMeta};
use swrl_core::learn::dqn::DiscreteQLearner;
use swrl_core::learn::driver::{
    collect_manual_transitions, curves_to_csv, derive_seed, train_swrl, train_vanilla,
};
use swrl_core::learn::policy::{
    BcActor, SwrlActor, SwrlForceOnlyActor, SwrlMotionOnlyActor, VanillaActor,
};
use swrl_core::learn::replay::Transition;
use swrl_core::learn::sac::ContinuousActorCritic;
use swrl_core::learn::vanilla::HybridSingleLearner;
use swrl_core::learn::ObsScaler;
use swrl_core::metrics::{eval_seeds, evaluate, EvalReport};
use swrl_core::Result;

use crate::plot::{line_chart, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TrainAlgo {
    Swrl,
    Vanilla,
    Bc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EvalAlgo {
    Swrl,
    SwrlSk,
    SwrlSr,
    Vanilla,
    Bc,
    Manual,
}

/// Exit codes: 0 ok, 2 config error, 3 artifact mismatch, 4 runtime fault.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::Serde(_) | Error::DegenerateGeometry(_) => 2,
        Error::ArtifactMismatch(_) => 3,
        _ => 4,
    }
}

/// Resolve the configuration from a file or a named preset, applying CLI
/// overrides.
pub fn load_config(
    config: Option<&Path>,
    preset: Option<&str>,
    seed: Option<u64>,
    episodes: Option<usize>,
) -> Result<ScenarioConfig> {
    let mut cfg = match (config, preset) {
        (Some(path), _) => ScenarioConfig::from_json(&fs::read_to_string(path)?)?,
        (None, Some(name)) => ScenarioConfig::preset(name)?,
        (None, None) => ScenarioConfig::planar_valve_desk(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(episodes) = episodes {
        cfg.learner.episodes = episodes;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Worker-count resolution: `SWRL_WORKERS` overrides the flag.
pub fn resolve_workers(flag: Option<usize>) -> usize {
    std::env::var("SWRL_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .or(flag)
        .unwrap_or(1)
        .max(1)
}

fn meta_line(cfg: &ScenarioConfig) -> String {
    format!("config_hash={} seed={}", cfg.hash_hex(), cfg.seed)
}

fn load_offline_for(cfg: &ScenarioConfig) -> Result<Option<Vec<Transition>>> {
    match &cfg.learner.offline_dataset {
        None => Ok(None),
        Some(path) => {
            let (meta, transitions, _) = read_dataset(Path::new(path))?;
            let expected =
                ObservationFrame::dim(cfg.robot.dof()) * cfg.mdp.window_len;
            if meta.window_elems != expected {
                return Err(Error::ArtifactMismatch(format!(
                    "dataset windows hold {} elements, config expects {expected}",
                    meta.window_elems
                )));
            }
            Ok(Some(transitions))
        }
    }
}

/// `train`: deterministic run; writes curves CSV, checkpoint, and the
/// resolved config snapshot.
pub fn cmd_train(cfg: &ScenarioConfig, algo: TrainAlgo, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("config.json"), cfg.to_json_pretty()?)?;
    let meta = meta_line(cfg);
    let stem = out.join("checkpoint");
    match algo {
        TrainAlgo::Swrl => {
            let offline = load_offline_for(cfg)?;
            let trained = train_swrl(cfg, offline)?;
            fs::write(out.join("curves.csv"), curves_to_csv(&trained.curves, &meta))?;
            let (q1t, q2t) = trained.policy_r.target_params();
            save_checkpoint(
                &stem,
                "swrl",
                &cfg.hash_hex(),
                cfg.seed,
                &[
                    ("k_online", &trained.policy_k.online.params),
                    ("k_target", &trained.policy_k.target.params),
                    ("r_actor", &trained.policy_r.actor.params),
                    ("r_q1", &trained.policy_r.q1.params),
                    ("r_q2", &trained.policy_r.q2.params),
                    ("r_q1_target", q1t),
                    ("r_q2_target", q2t),
                ],
            )?;
        }
        TrainAlgo::Vanilla => {
            let offline = load_offline_for(cfg)?;
            let trained = train_vanilla(cfg, offline)?;
            fs::write(out.join("curves.csv"), curves_to_csv(&trained.curves, &meta))?;
            let (q1t, q2t) = trained.policy.target_params();
            save_checkpoint(
                &stem,
                "vanilla",
                &cfg.hash_hex(),
                cfg.seed,
                &[
                    ("actor", &trained.policy.actor.params),
                    ("q1", &trained.policy.q1.params),
                    ("q2", &trained.policy.q2.params),
                    ("q1_target", q1t),
                    ("q2_target", q2t),
                ],
            )?;
        }
        TrainAlgo::Bc => {
            let (mut policy, report) = run_bc_training(cfg)?;
            let mut csv = format!("# {meta}\nepoch,loss\n");
            for (i, loss) in report.epoch_losses.iter().enumerate() {
                csv.push_str(&format!("{i},{loss}\n"));
            }
            fs::write(out.join("curves.csv"), csv)?;
            fs::write(
                out.join("bc_report.json"),
                serde_json::to_string_pretty(&serde_json::json!({
                    "holdout_accuracy": report.holdout_accuracy,
                    "holdout_mse": report.holdout_mse,
                    "epochs": report.epoch_losses.len(),
                    "config_hash": cfg.hash_hex(),
                    "seed": cfg.seed,
                }))
                .expect("json"),
            )?;
            save_checkpoint(
                &stem,
                "bc",
                &cfg.hash_hex(),
                cfg.seed,
                &[("actor", &policy.net.params)],
            )?;
            policy.net.params.clear();
        }
    }
    Ok(())
}

fn run_bc_training(cfg: &ScenarioConfig) -> Result<(BcPolicy, BcReport)> {
    let dataset_path = cfg.learner.offline_dataset.as_ref().ok_or_else(|| {
        Error::config(
            "learner.offline_dataset",
            "behavior cloning requires an offline dataset path",
        )
    })?;
    let (meta, transitions, _) = read_dataset(Path::new(dataset_path))?;
    let frame_dim = ObservationFrame::dim(cfg.robot.dof());
    if meta.window_elems != frame_dim * cfg.mdp.window_len {
        return Err(Error::ArtifactMismatch(format!(
            "dataset windows hold {} elements, config expects {}",
            meta.window_elems,
            frame_dim * cfg.mdp.window_len
        )));
    }
    let scaler = ObsScaler::new(&cfg.robot, cfg.velocity_band().1);
    let examples: Vec<BcExample> = transitions
        .iter()
        .map(|t| BcExample {
            window: scaler.apply(&t.window),
            force_idx: t.force_idx as usize,
            accel: t.accel_r.clone(),
        })
        .collect();
    let mut policy = BcPolicy::new(
        frame_dim,
        cfg.mdp.window_len,
        cfg.mdp.delta_f_set.len(),
        meta.redundant_dim,
        cfg.mdp.a_max,
        &cfg.learner,
        derive_seed(cfg.seed, "init_bc", 0),
    );
    let report = train_bc(&mut policy, &examples, &cfg.learner, derive_seed(cfg.seed, "bc", 0))?;
    Ok((policy, report))
}

fn redundant_dim_of(cfg: &ScenarioConfig) -> Result<usize> {
    let probe = ManipEnv::from_config(cfg, cfg.eval.seed_base)?;
    Ok(probe.redundant_dim())
}

fn build_swrl(cfg: &ScenarioConfig, stem: &Path) -> Result<(DiscreteQLearner, ContinuousActorCritic)> {
    let (manifest, nets) = load_checkpoint(stem)?;
    if manifest.algo != "swrl" {
        return Err(Error::ArtifactMismatch(format!(
            "checkpoint algo `{}` is not `swrl`",
            manifest.algo
        )));
    }
    let frame_dim = ObservationFrame::dim(cfg.robot.dof());
    let n = redundant_dim_of(cfg)?;
    let mut k = DiscreteQLearner::new(
        frame_dim,
        cfg.mdp.window_len,
        cfg.mdp.delta_f_set.len(),
        &cfg.learner,
        derive_seed(cfg.seed, "init_k", 0),
    );
    let mut r = ContinuousActorCritic::new(
        frame_dim,
        cfg.mdp.window_len,
        n,
        cfg.mdp.a_max,
        &cfg.learner,
        derive_seed(cfg.seed, "init_r", 0),
    );
    if nets.len() != 7 {
        return Err(Error::ArtifactMismatch(format!(
            "swrl checkpoint holds {} nets, expected 7",
            nets.len()
        )));
    }
    restore_net(&mut k.online.params, "k_online", &nets[0])?;
    restore_net(&mut k.target.params, "k_target", &nets[1])?;
    restore_net(&mut r.actor.params, "r_actor", &nets[2])?;
    restore_net(&mut r.q1.params, "r_q1", &nets[3])?;
    restore_net(&mut r.q2.params, "r_q2", &nets[4])?;
    let (mut q1t, mut q2t) = (nets[5].clone(), nets[6].clone());
    if q1t.len() != r.q1.params.len() || q2t.len() != r.q2.params.len() {
        return Err(Error::ArtifactMismatch(
            "target critic shapes do not match the configured model".into(),
        ));
    }
    q1t.shrink_to_fit();
    q2t.shrink_to_fit();
    r.set_target_params(&q1t, &q2t);
    Ok((k, r))
}

fn build_vanilla(cfg: &ScenarioConfig, stem: &Path) -> Result<HybridSingleLearner> {
    let (manifest, nets) = load_checkpoint(stem)?;
    if manifest.algo != "vanilla" {
        return Err(Error::ArtifactMismatch(format!(
            "checkpoint algo `{}` is not `vanilla`",
            manifest.algo
        )));
    }
    let frame_dim = ObservationFrame::dim(cfg.robot.dof());
    let n = redundant_dim_of(cfg)?;
    let mut v = HybridSingleLearner::new(
        frame_dim,
        cfg.mdp.window_len,
        cfg.mdp.delta_f_set.len(),
        n,
        cfg.mdp.a_max,
        &cfg.learner,
        derive_seed(cfg.seed, "init_v", 0),
    );
    if nets.len() != 5 {
        return Err(Error::ArtifactMismatch(format!(
            "vanilla checkpoint holds {} nets, expected 5",
            nets.len()
        )));
    }
    restore_net(&mut v.actor.params, "actor", &nets[0])?;
    restore_net(&mut v.q1.params, "q1", &nets[1])?;
    restore_net(&mut v.q2.params, "q2", &nets[2])?;
    if nets[3].len() != v.q1.params.len() || nets[4].len() != v.q2.params.len() {
        return Err(Error::ArtifactMismatch(
            "target critic shapes do not match the configured model".into(),
        ));
    }
    v.set_target_params(&nets[3], &nets[4]);
    Ok(v)
}

fn build_bc(cfg: &ScenarioConfig, stem: &Path) -> Result<BcPolicy> {
    let (manifest, nets) = load_checkpoint(stem)?;
    if manifest.algo != "bc" {
        return Err(Error::ArtifactMismatch(format!(
            "checkpoint algo `{}` is not `bc`",
            manifest.algo
        )));
    }
    let frame_dim = ObservationFrame::dim(cfg.robot.dof());
    let n = redundant_dim_of(cfg)?;
    let mut policy = BcPolicy::new(
        frame_dim,
        cfg.mdp.window_len,
        cfg.mdp.delta_f_set.len(),
        n,
        cfg.mdp.a_max,
        &cfg.learner,
        derive_seed(cfg.seed, "init_bc", 0),
    );
    restore_net(&mut policy.net.params, "actor", &nets[0])?;
    Ok(policy)
}

/// `eval`: run the paired protocol and write report CSV/JSON plus optional
/// per-case manipulability SVGs.
pub fn cmd_eval(
    cfg: &ScenarioConfig,
    algo: EvalAlgo,
    checkpoint: Option<&Path>,
    out: &Path,
    plot: bool,
    workers: usize,
) -> Result<()> {
    fs::create_dir_all(out)?;
    let seeds = eval_seeds(cfg);
    let scaler = ObsScaler::new(&cfg.robot, cfg.velocity_band().1);
    let need_ck = || {
        checkpoint.ok_or_else(|| {
            Error::config("checkpoint", "this method requires a trained checkpoint")
        })
    };

    let report = match algo {
        EvalAlgo::Manual => {
            let probe = ManipEnv::from_config(cfg, seeds[0])?;
            let manual = ManualPolicy::from_env(&cfg.manual, &cfg.mdp, &probe, false);
            drop(probe);
            evaluate(cfg, &manual, &seeds, workers)?
        }
        EvalAlgo::Swrl => {
            let (k, r) = build_swrl(cfg, need_ck()?)?;
            let actor = SwrlActor {
                policy_k: k,
                policy_r: r,
                scaler,
            };
            evaluate(cfg, &actor, &seeds, workers)?
        }
        EvalAlgo::SwrlSk => {
            let (k, _) = build_swrl(cfg, need_ck()?)?;
            let n = redundant_dim_of(cfg)?;
            let actor = SwrlForceOnlyActor {
                policy_k: k,
                scaler,
                redundant_dim: n,
            };
            evaluate(cfg, &actor, &seeds, workers)?
        }
        EvalAlgo::SwrlSr => {
            let (_, r) = build_swrl(cfg, need_ck()?)?;
            let probe = ManipEnv::from_config(cfg, seeds[0])?;
            let manual = ManualPolicy::from_env(&cfg.manual, &cfg.mdp, &probe, true);
            drop(probe);
            let actor = SwrlMotionOnlyActor {
                policy_r: r,
                scaler,
                manual,
            };
            evaluate(cfg, &actor, &seeds, workers)?
        }
        EvalAlgo::Vanilla => {
            let policy = build_vanilla(cfg, need_ck()?)?;
            let actor = VanillaActor { policy, scaler };
            evaluate(cfg, &actor, &seeds, workers)?
        }
        EvalAlgo::Bc => {
            let policy = build_bc(cfg, need_ck()?)?;
            let actor = BcActor { policy, scaler };
            evaluate(cfg, &actor, &seeds, workers)?
        }
    };

    let meta = meta_line(cfg);
    fs::write(out.join("report.csv"), report.to_csv(&meta))?;
    fs::write(
        out.join("report.json"),
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&report.summary_json()).expect("summary serializes"),
    )?;
    if plot {
        write_case_plots(&report, out)?;
    }
    Ok(())
}

fn write_case_plots(report: &EvalReport, out: &Path) -> Result<()> {
    for case in &report.cases {
        let svg = line_chart(
            &format!("manipulability vs articulation, seed {}", case.seed),
            "object joint position",
            "manipulability",
            &[
                Series {
                    name: &report.method,
                    color: "#1f77b4",
                    points: case.trace.clone(),
                },
                Series {
                    name: "manual",
                    color: "#d62728",
                    points: case.manual_trace.clone(),
                },
            ],
        );
        fs::write(out.join(format!("case_{}.svg", case.seed)), svg)?;
    }
    Ok(())
}

/// `collect-offline`: manual-baseline transitions into a binary dataset.
pub fn cmd_collect_offline(cfg: &ScenarioConfig, episodes: usize, out: &Path) -> Result<()> {
    let (transitions, _) = if episodes == 0 {
        (Vec::new(), Vec::new())
    } else {
        collect_manual_transitions(cfg, episodes)?
    };
    let n = redundant_dim_of(cfg)?;
    let meta = DatasetMeta {
        config_hash: cfg.hash_hex(),
        seed: cfg.seed,
        window_elems: ObservationFrame::dim(cfg.robot.dof()) * cfg.mdp.window_len,
        redundant_dim: n,
        count: transitions.len(),
    };
    write_dataset(out, &meta, &transitions)?;
    Ok(())
}

/// `plot`: render a learning-curve CSV or an evaluation report into SVGs.
pub fn cmd_plot(curves: Option<&Path>, report: Option<&Path>, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    if let Some(path) = curves {
        let text = fs::read_to_string(path)?;
        let svg = plot_curves_csv(&text)?;
        fs::write(out.join("curves.svg"), svg)?;
    }
    if let Some(path) = report {
        let report: EvalReport = serde_json::from_str(&fs::read_to_string(path)?)?;
        write_case_plots(&report, out)?;
    }
    if curves.is_none() && report.is_none() {
        return Err(Error::config(
            "plot",
            "nothing to plot: pass --curves and/or --report",
        ));
    }
    Ok(())
}

fn plot_curves_csv(text: &str) -> Result<String> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| Error::config("curves", "empty curves file"))?;
    let columns: Vec<&str> = header.split(',').collect();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|v| v.parse::<f64>().unwrap_or(f64::NAN))
            .collect();
        rows.push(row);
    }
    let take = |name: &str| -> Option<Vec<(f64, f64)>> {
        let idx = columns.iter().position(|c| *c == name)?;
        Some(
            rows.iter()
                .enumerate()
                .filter(|(_, r)| r.len() > idx && r[idx].is_finite())
                .map(|(i, r)| (r.first().copied().unwrap_or(i as f64), r[idx]))
                .collect(),
        )
    };
    let mut series = Vec::new();
    if let Some(points) = take("return_k") {
        series.push(Series {
            name: "return_k",
            color: "#1f77b4",
            points,
        });
    }
    if let Some(points) = take("return_r") {
        series.push(Series {
            name: "return_r",
            color: "#2ca02c",
            points,
        });
    }
    if let Some(points) = take("loss") {
        series.push(Series {
            name: "loss",
            color: "#d62728",
            points,
        });
    }
    if series.is_empty() {
        return Err(Error::config(
            "curves",
            "no plottable columns (return_k, return_r, or loss)",
        ));
    }
    Ok(line_chart(
        "training curves",
        columns.first().copied().unwrap_or("episode"),
        "return",
        &series,
    ))
}

/// Convenience for tests: train stem path of an output directory.
pub fn checkpoint_stem(out: &Path) -> PathBuf {
    out.join("checkpoint")
}
