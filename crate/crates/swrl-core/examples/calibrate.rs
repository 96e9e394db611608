// Scratch calibration probe for the desk-scale world. Not part of the API.

use std::time::Instant;

use swrl_core::baselines::{EnvAction, EvalActor, ManualPolicy};
use swrl_core::config::ScenarioConfig;
use swrl_core::env::ManipEnv;
use swrl_core::learn::driver::{collect_manual_transitions, train_swrl, train_vanilla};
use swrl_core::learn::policy::SwrlActor;
use swrl_core::metrics::{evaluate, eval_seeds};

fn main() {
    let cfg = ScenarioConfig::planar_valve_desk();

    let t0 = Instant::now();
    let (offline, logs) = collect_manual_transitions(&cfg, 16).unwrap();
    eprintln!("offline done {:.1}s", t0.elapsed().as_secs_f64());
    println!(
        "offline: {} transitions from {} episodes in {:.1}s; mean occ {:.3}",
        offline.len(),
        logs.len(),
        t0.elapsed().as_secs_f64(),
        logs.iter()
            .map(|l| l.steps.iter().filter(|s| s.r_k >= 1.0).count() as f64
                / l.steps.len().max(1) as f64)
            .sum::<f64>()
            / logs.len() as f64
    );

    let t1 = Instant::now();
    let swrl = train_swrl(&cfg, Some(offline.clone())).unwrap();
    println!("swrl training: {:.1}s", t1.elapsed().as_secs_f64());
    let n = swrl.curves.len();
    let tenth = (n / 10).max(1);
    let mean = |pts: &[swrl_core::learn::driver::CurvePoint]| {
        (
            pts.iter().map(|p| p.return_k).sum::<f64>() / pts.len() as f64,
            pts.iter().map(|p| p.return_r).sum::<f64>() / pts.len() as f64,
            pts.iter().map(|p| p.band_occupancy).sum::<f64>() / pts.len() as f64,
            pts.iter().map(|p| p.length).sum::<usize>() as f64 / pts.len() as f64,
        )
    };
    let first = mean(&swrl.curves[..tenth]);
    let last = mean(&swrl.curves[n - tenth..]);
    println!("swrl first10%: rk={:.1} rr={:.1} occ={:.3} len={:.0}", first.0, first.1, first.2, first.3);
    println!("swrl last10%:  rk={:.1} rr={:.1} occ={:.3} len={:.0}", last.0, last.1, last.2, last.3);
    for (i, c) in swrl.curves.iter().enumerate() {
        if i % 16 == 0 || i + 1 == n {
            println!(
                "  ep {:3} rk={:7.1} rr={:7.1} len={:3} occ={:.3} cause={}",
                c.episode, c.return_k, c.return_r, c.length, c.band_occupancy, c.cause
            );
        }
    }

    let t2 = Instant::now();
    let vanilla = train_vanilla(&cfg, Some(offline)).unwrap();
    println!("vanilla training: {:.1}s", t2.elapsed().as_secs_f64());
    let vf = mean(&vanilla.curves[..tenth]);
    let vl = mean(&vanilla.curves[n.min(vanilla.curves.len()) - tenth..]);
    println!("vanilla first10%: rk={:.1} occ={:.3}", vf.0, vf.2);
    println!("vanilla last10%:  rk={:.1} occ={:.3} len={:.0}", vl.0, vl.2, vl.3);

    // Criterion 7b probe: when does swrl's smoothed occupancy reach vanilla's
    // end-of-budget occupancy?
    let smooth = |pts: &[swrl_core::learn::driver::CurvePoint], w: usize| -> Vec<f64> {
        (0..pts.len())
            .map(|i| {
                let lo = i.saturating_sub(w - 1);
                pts[lo..=i].iter().map(|p| p.band_occupancy).sum::<f64>() / (i - lo + 1) as f64
            })
            .collect()
    };
    let v_end = *smooth(&vanilla.curves, 8).last().unwrap();
    let s_smooth = smooth(&swrl.curves, 8);
    let crossing = s_smooth.iter().position(|v| *v >= v_end);
    println!("vanilla end occupancy {:.3}; swrl crosses at episode {:?}", v_end, crossing);

    // Criterion 8 probe: paired eval on 20 seeds.
    let t3 = Instant::now();
    let actor = SwrlActor {
        policy_k: swrl.policy_k,
        policy_r: swrl.policy_r,
        scaler: swrl.scaler,
    };
    let seeds = eval_seeds(&cfg);
    let report = evaluate(&cfg, &actor, &seeds, 2).unwrap();
    println!("eval: {:.1}s", t3.elapsed().as_secs_f64());
    let mut theta_wins = 0;
    let mut w_wins = 0;
    for c in &report.cases {
        let tw = c.terminal_theta >= c.manual_theta;
        let ww = c.mean_w >= c.manual_mean_w;
        theta_wins += tw as usize;
        w_wins += ww as usize;
        println!(
            "  seed {} swrl theta={:6.3} manual theta={:6.3} {} | swrl w={:.4} manual w={:.4} {} | causes {}/{}",
            c.seed, c.terminal_theta, c.manual_theta, if tw { "WIN" } else { "----" },
            c.mean_w, c.manual_mean_w, if ww { "WIN" } else { "----" },
            c.cause, c.manual_cause,
        );
    }
    println!(
        "mean theta: swrl {:.3} vs manual {:.3}; mean w: {:.4} vs {:.4}; theta wins {}/{}, w wins {}/{}",
        report.mean_theta, report.manual_mean_theta, report.mean_w, report.manual_mean_w,
        theta_wins, report.cases.len(), w_wins, report.cases.len()
    );

    // Detailed trace of the trained policy on two seeds.
    for seed in [seeds[0], seeds[3]] {
        let mut env = ManipEnv::from_config(&cfg, seed).unwrap();
        println!("--- trained swrl trace, seed {seed} ---");
        let mut i = 0;
        while !env.done() {
            match actor.act(&env) {
                EnvAction::Pair(p) => env.step(&p).unwrap(),
                EnvAction::Raw { delta_f, accel_r } => {
                    env.step_raw(delta_f, &accel_r, 1).unwrap()
                }
            };
            i += 1;
            if i % 50 == 0 {
                let s = env.log().steps.last().unwrap().clone();
                println!(
                    "  t={:4.1} theta={:6.2} vel={:5.2} F={:5.2} q3={:5.2} aR={:5.2} rk={:4.1}",
                    s.t,
                    s.theta,
                    env.velocity_estimate(),
                    s.force,
                    env.state().q[2],
                    s.accel_r[0],
                    s.r_k,
                );
            }
        }
        let log = env.log();
        println!(
            "  end: theta={:.2} cause={:?} occ={:.3}",
            log.terminal_theta,
            log.cause,
            log.steps.iter().filter(|s| s.r_k >= 1.0).count() as f64 / log.steps.len() as f64
        );
    }

    // Manual eval-mode occupancy for context.
    let probe = ManipEnv::from_config(&cfg, seeds[0]).unwrap();
    let manual = ManualPolicy::from_env(&cfg.manual, &cfg.mdp, &probe, false);
    drop(probe);
    let mut env = ManipEnv::from_config(&cfg, seeds[0]).unwrap();
    while !env.done() {
        match manual.act(&env) {
            EnvAction::Pair(p) => env.step(&p).unwrap(),
            EnvAction::Raw { delta_f, accel_r } => env.step_raw(delta_f, &accel_r, 1).unwrap(),
        };
    }
    println!("sanity: manual raw run theta {:.3}", env.log().terminal_theta);
}
