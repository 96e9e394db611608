//! Evaluation protocol and metrics: terminal articulation, the relative
//! percentage improvement over the manual baseline (clipped), and
//! manipulability traces along the articulation.

use serde::{Deserialize, Serialize};

use crate::baselines::{EnvAction, EvalActor, ManualPolicy};
use crate::config::ScenarioConfig;
use crate::env::{EpisodeLog, ManipEnv};
use crate::error::{Error, Result};

/// Relative percentage improvement over the manual outcome, clipped.
///
/// Undefined (`None`) when the manual articulation is zero; reported as
/// missing rather than infinite.
pub fn rmp(theta_method: f64, theta_manual: f64, clip: f64) -> Option<f64> {
    if theta_manual == 0.0 {
        return None;
    }
    Some((100.0 * (theta_method - theta_manual) / theta_manual).clamp(-clip, clip))
}

/// Pair per-seed articulations and compute per-case RMPs. The two runs must
/// cover exactly the same seeds in the same order.
pub fn paired_rmp(
    method: &[(u64, f64)],
    manual: &[(u64, f64)],
    clip: f64,
) -> Result<Vec<Option<f64>>> {
    if method.len() != manual.len() {
        return Err(Error::Usage(format!(
            "paired RMP needs matching runs: {} vs {} cases",
            method.len(),
            manual.len()
        )));
    }
    method
        .iter()
        .zip(manual.iter())
        .map(|((sa, ta), (sb, tb))| {
            if sa != sb {
                Err(Error::Usage(format!(
                    "paired RMP seed mismatch: {sa} vs {sb}"
                )))
            } else {
                Ok(rmp(*ta, *tb, clip))
            }
        })
        .collect()
}

/// Downsampled (articulation, manipulability) series from an episode log.
pub fn manipulability_trace(log: &EpisodeLog, max_points: usize) -> Vec<(f64, f64)> {
    if log.steps.is_empty() {
        return Vec::new();
    }
    let stride = (log.steps.len() / max_points.max(1)).max(1);
    log.steps
        .iter()
        .step_by(stride)
        .map(|s| (s.theta, s.w))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseResult {
    pub seed: u64,
    pub terminal_theta: f64,
    pub manual_theta: f64,
    pub rmp: Option<f64>,
    pub mean_w: f64,
    pub manual_mean_w: f64,
    pub cause: String,
    pub manual_cause: String,
    pub trace: Vec<(f64, f64)>,
    pub manual_trace: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub config_hash: String,
    pub cases: Vec<CaseResult>,
    /// Arithmetic mean of per-case terminal articulation.
    pub mean_theta: f64,
    pub manual_mean_theta: f64,
    /// Average of per-case RMPs (the headline-style figure).
    pub mean_rmp_per_case: Option<f64>,
    /// RMP recomputed from the aggregate means, for comparison.
    pub rmp_of_means: Option<f64>,
    pub mean_w: f64,
    pub manual_mean_w: f64,
}

impl EvalReport {
    /// Per-case CSV with a `#` metadata header.
    pub fn to_csv(&self, meta: &str) -> String {
        let mut out = format!("# {meta}\n");
        out.push_str("seed,terminal_theta,manual_theta,rmp,mean_w,manual_mean_w,cause,manual_cause\n");
        for c in &self.cases {
            let rmp = c.rmp.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                c.seed,
                c.terminal_theta,
                c.manual_theta,
                rmp,
                c.mean_w,
                c.manual_mean_w,
                c.cause,
                c.manual_cause
            ));
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "method": self.method,
            "config_hash": self.config_hash,
            "cases": self.cases.len(),
            "mean_theta": self.mean_theta,
            "manual_mean_theta": self.manual_mean_theta,
            "mean_rmp_per_case": self.mean_rmp_per_case,
            "rmp_of_means": self.rmp_of_means,
            "mean_w": self.mean_w,
            "manual_mean_w": self.manual_mean_w,
        })
    }
}

fn mean_w_of(log: &EpisodeLog) -> f64 {
    if log.steps.is_empty() {
        return 0.0;
    }
    log.steps.iter().map(|s| s.w).sum::<f64>() / log.steps.len() as f64
}

fn run_case(cfg: &ScenarioConfig, actor: &dyn EvalActor, seed: u64) -> Result<EpisodeLog> {
    let mut env = ManipEnv::from_config(cfg, seed)?;
    while !env.done() {
        match actor.act(&env) {
            EnvAction::Pair(pair) => env.step(&pair)?,
            EnvAction::Raw { delta_f, accel_r } => env.step_raw(delta_f, &accel_r, 1)?,
        };
    }
    Ok(env.into_log())
}

/// Run the paired evaluation protocol: for every seed, one manual run and one
/// method run on the identical randomized object, then per-case RMPs and the
/// manipulability traces.
pub fn evaluate(
    cfg: &ScenarioConfig,
    actor: &dyn EvalActor,
    seeds: &[u64],
    workers: usize,
) -> Result<EvalReport> {
    let manual_probe_env = ManipEnv::from_config(cfg, seeds.first().copied().unwrap_or(0))?;
    let manual = ManualPolicy::from_env(&cfg.manual, &cfg.mdp, &manual_probe_env, false);
    drop(manual_probe_env);

    let run_pair = |seed: u64| -> Result<CaseResult> {
        let method_log = run_case(cfg, actor, seed)?;
        let manual_log = run_case(cfg, &manual, seed)?;
        Ok(CaseResult {
            seed,
            terminal_theta: method_log.terminal_theta,
            manual_theta: manual_log.terminal_theta,
            rmp: rmp(
                method_log.terminal_theta,
                manual_log.terminal_theta,
                cfg.eval.rmp_clip,
            ),
            mean_w: mean_w_of(&method_log),
            manual_mean_w: mean_w_of(&manual_log),
            cause: method_log
                .cause
                .map(|c| c.as_str())
                .unwrap_or("running")
                .to_string(),
            manual_cause: manual_log
                .cause
                .map(|c| c.as_str())
                .unwrap_or("running")
                .to_string(),
            trace: manipulability_trace(&method_log, 200),
            manual_trace: manipulability_trace(&manual_log, 200),
        })
    };

    let workers = workers.max(1).min(seeds.len().max(1));
    let mut cases: Vec<Option<CaseResult>> = (0..seeds.len()).map(|_| None).collect();
    if workers <= 1 {
        for (i, seed) in seeds.iter().enumerate() {
            cases[i] = Some(run_pair(*seed)?);
        }
    } else {
        let errors = std::sync::Mutex::new(Vec::new());
        let slots: Vec<std::sync::Mutex<Option<CaseResult>>> =
            (0..seeds.len()).map(|_| std::sync::Mutex::new(None)).collect();
        let next = std::sync::atomic::AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if i >= seeds.len() {
                        break;
                    }
                    match run_pair(seeds[i]) {
                        Ok(case) => *slots[i].lock().unwrap() = Some(case),
                        Err(e) => errors.lock().unwrap().push(e.to_string()),
                    }
                });
            }
        });
        let errors = errors.into_inner().unwrap();
        if let Some(e) = errors.into_iter().next() {
            return Err(Error::Usage(e));
        }
        for (i, slot) in slots.into_iter().enumerate() {
            cases[i] = slot.into_inner().unwrap();
        }
    }
    let cases: Vec<CaseResult> = cases.into_iter().map(|c| c.expect("case filled")).collect();

    // Guard the pairing invariant explicitly.
    let method_pairs: Vec<(u64, f64)> = cases.iter().map(|c| (c.seed, c.terminal_theta)).collect();
    let manual_pairs: Vec<(u64, f64)> = cases.iter().map(|c| (c.seed, c.manual_theta)).collect();
    let rmps = paired_rmp(&method_pairs, &manual_pairs, cfg.eval.rmp_clip)?;

    let n = cases.len().max(1) as f64;
    let mean_theta = cases.iter().map(|c| c.terminal_theta).sum::<f64>() / n;
    let manual_mean_theta = cases.iter().map(|c| c.manual_theta).sum::<f64>() / n;
    let defined: Vec<f64> = rmps.iter().flatten().copied().collect();
    let mean_rmp_per_case = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    let rmp_of_means = rmp(mean_theta, manual_mean_theta, cfg.eval.rmp_clip);
    let mean_w = cases.iter().map(|c| c.mean_w).sum::<f64>() / n;
    let manual_mean_w = cases.iter().map(|c| c.manual_mean_w).sum::<f64>() / n;

    Ok(EvalReport {
        method: actor.name().to_string(),
        config_hash: cfg.hash_hex(),
        cases,
        mean_theta,
        manual_mean_theta,
        mean_rmp_per_case,
        rmp_of_means,
        mean_w,
        manual_mean_w,
    })
}

/// The seed list of the evaluation protocol.
pub fn eval_seeds(cfg: &ScenarioConfig) -> Vec<u64> {
    (0..cfg.eval.cases as u64)
        .map(|i| cfg.eval.seed_base + i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::StepRecord;

    #[test]
    fn rmp_formula_and_clip() {
        assert_eq!(rmp(1.0, 1.0, 100.0), Some(0.0));
        // Aggregate articulation example: (258.6 - 202.6) / 202.6.
        let v = rmp(258.6, 202.6, 100.0).unwrap();
        assert!((v - 27.64).abs() < 0.01, "got {v}");
        assert_eq!(rmp(3.0, 1.0, 100.0), Some(100.0));
        assert_eq!(rmp(0.0, 1.0, 100.0), Some(-100.0));
        assert_eq!(rmp(1.0, 0.0, 100.0), None);
    }

    #[test]
    fn paired_rmp_requires_matching_seeds() {
        let a = vec![(1_u64, 0.5), (2, 0.7)];
        let b = vec![(1_u64, 0.4), (3, 0.7)];
        assert!(paired_rmp(&a, &b, 100.0).is_err());
        let c = vec![(1_u64, 0.4), (2, 0.7)];
        let r = paired_rmp(&a, &c, 100.0).unwrap();
        assert_eq!(r.len(), 2);
        assert!((r[0].unwrap() - 25.0).abs() < 1e-12);
        assert_eq!(r[1], Some(0.0));
    }

    #[test]
    fn trace_follows_log() {
        let mut log = EpisodeLog::default();
        for i in 0..50 {
            log.steps.push(StepRecord {
                t: i as f64 * 0.01,
                q: vec![0.0],
                theta: i as f64 * 0.1,
                theta_dot: 0.0,
                force: 0.0,
                c_f_sum: 0.0,
                w: 1.0 / (1.0 + i as f64),
                r_k: 0.0,
                r_r: 1.0,
                force_idx: 1,
                accel_r: vec![],
            });
        }
        let trace = manipulability_trace(&log, 10);
        assert!(trace.len() >= 10 && trace.len() <= 11);
        assert!(trace.windows(2).all(|w| w[1].0 > w[0].0), "theta monotone");

        let empty = manipulability_trace(&EpisodeLog::default(), 10);
        assert!(empty.is_empty());
    }

    #[test]
    fn manual_against_itself_all_zero_rmp() {
        let mut cfg = ScenarioConfig::planar_valve_desk();
        cfg.mdp.episode_duration = 0.5;
        cfg.eval.cases = 3;
        let env = ManipEnv::from_config(&cfg, cfg.eval.seed_base).unwrap();
        let manual = ManualPolicy::from_env(&cfg.manual, &cfg.mdp, &env, false);
        drop(env);
        let seeds = eval_seeds(&cfg);
        let report = evaluate(&cfg, &manual, &seeds, 1).unwrap();
        assert_eq!(report.cases.len(), 3);
        for case in &report.cases {
            assert_eq!(case.terminal_theta, case.manual_theta);
            match case.rmp {
                Some(v) => assert_eq!(v, 0.0),
                None => assert_eq!(case.manual_theta, 0.0),
            }
        }
    }

    #[test]
    fn parallel_evaluation_matches_serial() {
        let mut cfg = ScenarioConfig::planar_valve_desk();
        cfg.mdp.episode_duration = 0.3;
        cfg.eval.cases = 4;
        let env = ManipEnv::from_config(&cfg, cfg.eval.seed_base).unwrap();
        let manual = ManualPolicy::from_env(&cfg.manual, &cfg.mdp, &env, false);
        drop(env);
        let seeds = eval_seeds(&cfg);
        let serial = evaluate(&cfg, &manual, &seeds, 1).unwrap();
        let parallel = evaluate(&cfg, &manual, &seeds, 3).unwrap();
        assert_eq!(serial.cases.len(), parallel.cases.len());
        for (a, b) in serial.cases.iter().zip(parallel.cases.iter()) {
            assert_eq!(a.seed, b.seed);
            assert_eq!(a.terminal_theta.to_bits(), b.terminal_theta.to_bits());
        }
    }
}
