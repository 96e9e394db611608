//! Training loops: the two-policy learner, the single-policy baseline, and
//! manual-trajectory collection for the offline replay partition.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::{EnvAction, ManualPolicy};
use crate::config::{fnv1a64, ScenarioConfig};
use crate::env::{ActionPair, EpisodeLog, ManipEnv, ObservationFrame};
use crate::error::{Error, Result};

use super::dqn::{DiscreteBatchItem, DiscreteQLearner};
use super::features::ObsScaler;
use super::replay::{ReplayBuffer, Transition};
use super::sac::{ContinuousActorCritic, ContinuousBatchItem};
use super::vanilla::{HybridBatchItem, HybridSingleLearner};

/// Derive a stream-specific seed from the master seed.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let mut bytes = Vec::with_capacity(tag.len() + 16);
    bytes.extend_from_slice(&master.to_le_bytes());
    bytes.extend_from_slice(tag.as_bytes());
    bytes.extend_from_slice(&index.to_le_bytes());
    fnv1a64(&bytes)
}

/// Per-episode training curve entry.
#[derive(Debug, Clone)]
pub struct CurvePoint {
    pub episode: usize,
    pub return_k: f64,
    pub return_r: f64,
    pub length: usize,
    pub band_occupancy: f64,
    pub cause: String,
}

/// Curves CSV: `episode,return_k,return_r,length,band_occupancy,cause` under
/// a `#`-prefixed metadata line.
pub fn curves_to_csv(points: &[CurvePoint], meta: &str) -> String {
    let mut out = format!("# {meta}\n");
    out.push_str("episode,return_k,return_r,length,band_occupancy,cause\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.episode, p.return_k, p.return_r, p.length, p.band_occupancy, p.cause
        ));
    }
    out
}

fn cause_name(log: &EpisodeLog) -> String {
    log.cause.map(|c| c.as_str()).unwrap_or("running").to_string()
}

fn band_occupancy(log: &EpisodeLog) -> f64 {
    if log.steps.is_empty() {
        return 0.0;
    }
    let hits = log.steps.iter().filter(|s| s.r_k >= 1.0).count();
    hits as f64 / log.steps.len() as f64
}

/// Run one episode under a step-wise action source, optionally collecting
/// transitions (the action source must then emit `EnvAction::Pair`).
pub fn rollout_episode(
    env: &mut ManipEnv,
    mut act: impl FnMut(&ManipEnv) -> EnvAction,
    collect: bool,
) -> Result<Vec<Transition>> {
    let mut transitions = Vec::new();
    while !env.done() {
        let window_before = env.window().flat();
        let action = act(env);
        let out = match &action {
            EnvAction::Pair(pair) => env.step(pair)?,
            EnvAction::Raw { delta_f, accel_r } => {
                if collect {
                    return Err(Error::Usage(
                        "transition collection requires actions from the discrete set".into(),
                    ));
                }
                env.step_raw(*delta_f, accel_r, 1)?
            }
        };
        if collect {
            let pair = match action {
                EnvAction::Pair(p) => p,
                EnvAction::Raw { .. } => unreachable!(),
            };
            transitions.push(Transition {
                window: window_before.into_boxed_slice(),
                next_window: out.window.flat().into_boxed_slice(),
                force_idx: pair.force_idx as u8,
                accel_r: pair.accel_r,
                prev_accel_r: out.info.prev_accel_r.clone(),
                r_k: out.r_k,
                r_r: out.r_r,
                done: out.done,
                cause: out.info.cause,
                velocity_estimate: out.info.velocity_estimate,
                contact_forces: out.info.contact_forces.clone(),
            });
        }
    }
    Ok(transitions)
}

/// Collect manual-baseline transitions over the scenario distribution (the
/// offline dataset of the replay-mixing scheme).
pub fn collect_manual_transitions(
    cfg: &ScenarioConfig,
    episodes: usize,
) -> Result<(Vec<Transition>, Vec<EpisodeLog>)> {
    let mut transitions = Vec::new();
    let mut logs = Vec::new();
    for ep in 0..episodes {
        let seed = derive_seed(cfg.seed, "offline", ep as u64);
        let mut env = ManipEnv::from_config(cfg, seed)?;
        let manual = ManualPolicy::from_env(&cfg.manual, &cfg.mdp, &env, true);
        let mut batch = rollout_episode(&mut env, |e| manual.decide(e.window()), true)?;
        transitions.append(&mut batch);
        logs.push(env.into_log());
    }
    Ok((transitions, logs))
}

fn epsilon_schedule(cfg: &ScenarioConfig, episode: usize) -> f64 {
    let l = &cfg.learner;
    let horizon = (l.episodes as f64 * l.epsilon_decay_fraction).max(1.0);
    let t = (episode as f64 / horizon).min(1.0);
    l.epsilon_start + (l.epsilon_end - l.epsilon_start) * t
}

fn discrete_batch(
    buffer: &ReplayBuffer,
    refs: &[super::replay::SampleRef],
    scaler: &ObsScaler,
) -> Vec<DiscreteBatchItem> {
    refs.iter()
        .map(|r| {
            let t = buffer.get(*r);
            DiscreteBatchItem {
                window: scaler.apply(&t.window),
                next_window: scaler.apply(&t.next_window),
                action: t.force_idx as usize,
                reward: t.r_k,
                mask: t.bootstrap_mask(),
            }
        })
        .collect()
}

fn continuous_batch(
    buffer: &ReplayBuffer,
    refs: &[super::replay::SampleRef],
    scaler: &ObsScaler,
) -> Vec<ContinuousBatchItem> {
    refs.iter()
        .map(|r| {
            let t = buffer.get(*r);
            ContinuousBatchItem {
                window: scaler.apply(&t.window),
                next_window: scaler.apply(&t.next_window),
                action: t.accel_r.clone(),
                reward: t.r_r,
                mask: t.bootstrap_mask(),
            }
        })
        .collect()
}

fn hybrid_batch(
    buffer: &ReplayBuffer,
    refs: &[super::replay::SampleRef],
    scaler: &ObsScaler,
) -> Vec<HybridBatchItem> {
    refs.iter()
        .map(|r| {
            let t = buffer.get(*r);
            HybridBatchItem {
                window: scaler.apply(&t.window),
                next_window: scaler.apply(&t.next_window),
                force_idx: t.force_idx as usize,
                accel: t.accel_r.clone(),
                reward: t.r_k + t.r_r,
                mask: t.bootstrap_mask(),
            }
        })
        .collect()
}

/// The trained two-policy bundle.
pub struct TrainedSwrl {
    pub policy_k: DiscreteQLearner,
    pub policy_r: ContinuousActorCritic,
    pub scaler: ObsScaler,
    pub curves: Vec<CurvePoint>,
}

/// Train the kinematic-force and redundant-motion policies in parallel from
/// a shared transition stream, each against its own reward channel.
pub fn train_swrl(cfg: &ScenarioConfig, offline: Option<Vec<Transition>>) -> Result<TrainedSwrl> {
    cfg.validate()?;
    let dof = cfg.robot.dof();
    let frame_dim = ObservationFrame::dim(dof);
    let window_len = cfg.mdp.window_len;
    let scaler = ObsScaler::new(&cfg.robot, cfg.velocity_band().1);

    // Decomposition (and thus the action dimension) is fixed per task class.
    let probe = ManipEnv::from_config(cfg, derive_seed(cfg.seed, "scenario", 0))?;
    let n_redundant = probe.redundant_dim();
    drop(probe);

    let l = &cfg.learner;
    let mut policy_k = DiscreteQLearner::new(
        frame_dim,
        window_len,
        cfg.mdp.delta_f_set.len(),
        l,
        derive_seed(cfg.seed, "init_k", 0),
    );
    let mut policy_r = ContinuousActorCritic::new(
        frame_dim,
        window_len,
        n_redundant,
        cfg.mdp.a_max,
        l,
        derive_seed(cfg.seed, "init_r", 0),
    );
    let mut buffer = ReplayBuffer::new(l.replay_capacity, l.offline_mixing);
    if let Some(off) = offline {
        buffer.load_offline(off);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "explore", 0));
    let mut update_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "update", 0));

    let mut curves = Vec::with_capacity(l.episodes);
    let mut total_steps = 0usize;
    for episode in 0..l.episodes {
        let scenario_seed = derive_seed(cfg.seed, "scenario", episode as u64);
        let mut env = ManipEnv::from_config(cfg, scenario_seed)?;
        let epsilon = epsilon_schedule(cfg, episode);
        while !env.done() {
            let window_before = env.window().flat();
            let input = scaler.apply(&window_before);
            let force_idx = if total_steps < l.warmup_steps {
                rng.gen_range(0..cfg.mdp.delta_f_set.len())
            } else {
                policy_k.act_epsilon(&input, epsilon, &mut rng)
            };
            let accel_r = if total_steps < l.warmup_steps {
                (0..n_redundant)
                    .map(|_| rng.gen_range(-cfg.mdp.a_max..cfg.mdp.a_max))
                    .collect()
            } else {
                policy_r.sample_action(&input, &mut rng)
            };
            let out = env.step(&ActionPair {
                force_idx,
                accel_r: accel_r.clone(),
            })?;
            buffer.push(Transition {
                window: window_before.into_boxed_slice(),
                next_window: out.window.flat().into_boxed_slice(),
                force_idx: force_idx as u8,
                accel_r,
                prev_accel_r: out.info.prev_accel_r.clone(),
                r_k: out.r_k,
                r_r: out.r_r,
                done: out.done,
                cause: out.info.cause,
                velocity_estimate: out.info.velocity_estimate,
                contact_forces: out.info.contact_forces.clone(),
            });
            total_steps += 1;

            if total_steps >= l.warmup_steps
                && total_steps % l.update_every == 0
                && buffer.online_len() >= l.batch_size
            {
                for _ in 0..l.updates_per_round {
                    let refs = buffer.sample(l.batch_size, &mut update_rng);
                    policy_k.update(&discrete_batch(&buffer, &refs, &scaler))?;
                    policy_r.update(&continuous_batch(&buffer, &refs, &scaler), &mut update_rng)?;
                }
            }
        }
        let log = env.into_log();
        curves.push(CurvePoint {
            episode,
            return_k: log.return_k,
            return_r: log.return_r,
            length: log.steps.len(),
            band_occupancy: band_occupancy(&log),
            cause: cause_name(&log),
        });
    }
    Ok(TrainedSwrl {
        policy_k,
        policy_r,
        scaler,
        curves,
    })
}

/// The trained single-policy baseline bundle.
pub struct TrainedVanilla {
    pub policy: HybridSingleLearner,
    pub scaler: ObsScaler,
    pub curves: Vec<CurvePoint>,
}

/// Train the single-policy baseline: concatenated action space, summed
/// reward, both channels logged separately.
pub fn train_vanilla(
    cfg: &ScenarioConfig,
    offline: Option<Vec<Transition>>,
) -> Result<TrainedVanilla> {
    cfg.validate()?;
    let dof = cfg.robot.dof();
    let frame_dim = ObservationFrame::dim(dof);
    let window_len = cfg.mdp.window_len;
    let scaler = ObsScaler::new(&cfg.robot, cfg.velocity_band().1);
    let probe = ManipEnv::from_config(cfg, derive_seed(cfg.seed, "scenario", 0))?;
    let n_redundant = probe.redundant_dim();
    drop(probe);

    let l = &cfg.learner;
    let mut policy = HybridSingleLearner::new(
        frame_dim,
        window_len,
        cfg.mdp.delta_f_set.len(),
        n_redundant,
        cfg.mdp.a_max,
        l,
        derive_seed(cfg.seed, "init_v", 0),
    );
    let mut buffer = ReplayBuffer::new(l.replay_capacity, l.offline_mixing);
    if let Some(off) = offline {
        buffer.load_offline(off);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "explore_v", 0));
    let mut update_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "update_v", 0));

    let mut curves = Vec::with_capacity(l.episodes);
    let mut total_steps = 0usize;
    for episode in 0..l.episodes {
        let scenario_seed = derive_seed(cfg.seed, "scenario", episode as u64);
        let mut env = ManipEnv::from_config(cfg, scenario_seed)?;
        while !env.done() {
            let window_before = env.window().flat();
            let input = scaler.apply(&window_before);
            let (force_idx, accel_r) = if total_steps < l.warmup_steps {
                (
                    rng.gen_range(0..cfg.mdp.delta_f_set.len()),
                    (0..n_redundant)
                        .map(|_| rng.gen_range(-cfg.mdp.a_max..cfg.mdp.a_max))
                        .collect(),
                )
            } else {
                policy.sample_action(&input, &mut rng)
            };
            let out = env.step(&ActionPair {
                force_idx,
                accel_r: accel_r.clone(),
            })?;
            buffer.push(Transition {
                window: window_before.into_boxed_slice(),
                next_window: out.window.flat().into_boxed_slice(),
                force_idx: force_idx as u8,
                accel_r,
                prev_accel_r: out.info.prev_accel_r.clone(),
                r_k: out.r_k,
                r_r: out.r_r,
                done: out.done,
                cause: out.info.cause,
                velocity_estimate: out.info.velocity_estimate,
                contact_forces: out.info.contact_forces.clone(),
            });
            total_steps += 1;

            if total_steps >= l.warmup_steps
                && total_steps % l.update_every == 0
                && buffer.online_len() >= l.batch_size
            {
                for _ in 0..l.updates_per_round {
                    let refs = buffer.sample(l.batch_size, &mut update_rng);
                    policy.update(&hybrid_batch(&buffer, &refs, &scaler), &mut update_rng)?;
                }
            }
        }
        let log = env.into_log();
        curves.push(CurvePoint {
            episode,
            return_k: log.return_k,
            return_r: log.return_r,
            length: log.steps.len(),
            band_occupancy: band_occupancy(&log),
            cause: cause_name(&log),
        });
    }
    Ok(TrainedVanilla {
        policy,
        scaler,
        curves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::planar_valve_desk();
        cfg.mdp.episode_duration = 0.3;
        cfg.learner.episodes = 2;
        cfg.learner.warmup_steps = 10;
        cfg.learner.batch_size = 8;
        cfg.learner.update_every = 10;
        cfg.learner.updates_per_round = 1;
        cfg.learner.feature_dim = 16;
        cfg.learner.hidden_dim = 12;
        cfg
    }

    #[test]
    fn derive_seed_distinct_streams() {
        let a = derive_seed(7, "scenario", 0);
        let b = derive_seed(7, "scenario", 1);
        let c = derive_seed(7, "offline", 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(7, "scenario", 0));
    }

    #[test]
    fn manual_collection_produces_valid_transitions() {
        let cfg = tiny_cfg();
        let (transitions, logs) = collect_manual_transitions(&cfg, 2).unwrap();
        assert_eq!(logs.len(), 2);
        assert!(!transitions.is_empty());
        for t in &transitions {
            assert!((t.force_idx as usize) < 4);
            assert!(t.accel_r.iter().all(|a| *a == 0.0), "manual freezes S_R");
            assert!(t.r_r <= 1.0 + 1e-12);
        }
        // Ends of episodes carry the done flag exactly once each.
        let dones = transitions.iter().filter(|t| t.done).count();
        assert_eq!(dones, 2);
    }

    #[test]
    fn swrl_training_runs_and_is_deterministic() {
        let cfg = tiny_cfg();
        let a = train_swrl(&cfg, None).unwrap();
        let b = train_swrl(&cfg, None).unwrap();
        assert_eq!(a.curves.len(), 2);
        assert_eq!(a.policy_k.online.params, b.policy_k.online.params);
        assert_eq!(a.policy_r.actor.params, b.policy_r.actor.params);
        for (x, y) in a.curves.iter().zip(b.curves.iter()) {
            assert_eq!(x.return_k.to_bits(), y.return_k.to_bits());
            assert_eq!(x.return_r.to_bits(), y.return_r.to_bits());
        }
    }

    #[test]
    fn vanilla_training_runs() {
        let cfg = tiny_cfg();
        let out = train_vanilla(&cfg, None).unwrap();
        assert_eq!(out.curves.len(), 2);
        assert!(out.curves.iter().all(|c| c.length > 0));
    }

    #[test]
    fn curves_csv_shape() {
        let points = vec![CurvePoint {
            episode: 0,
            return_k: 1.5,
            return_r: 20.0,
            length: 30,
            band_occupancy: 0.05,
            cause: "timeout".into(),
        }];
        let csv = curves_to_csv(&points, "config_hash=abc seed=1");
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# config_hash=abc seed=1");
        assert_eq!(lines[1], "episode,return_k,return_r,length,band_occupancy,cause");
        assert_eq!(lines[2], "0,1.5,20,30,0.05,timeout");
    }
}
