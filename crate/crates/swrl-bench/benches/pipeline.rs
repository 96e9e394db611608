//! Criterion benchmarks over the hot paths: kinematic bundle evaluation,
//! one simulation tick, one environment step, and one learner update.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use swrl_core::config::ScenarioConfig;
use swrl_core::env::{ActionPair, ManipEnv};
use swrl_core::kinematics::{geometric_jacobian, RobotModel};
use swrl_core::learn::dqn::{DiscreteBatchItem, DiscreteQLearner};
use swrl_core::math::Transform;

fn bench_kinematics(c: &mut Criterion) {
    let model = RobotModel::reference_7dof();
    let q = model.nominal_q();
    c.bench_function("jacobian_bundle_7dof", |b| {
        b.iter(|| {
            let bundle =
                geometric_jacobian(&model, black_box(&q), &Transform::identity(), 1e-2).unwrap();
            black_box(bundle.w)
        })
    });
}

fn bench_env_step(c: &mut Criterion) {
    let cfg = ScenarioConfig::planar_valve_desk();
    c.bench_function("env_step_planar", |b| {
        let mut env = ManipEnv::from_config(&cfg, 1).unwrap();
        let action = ActionPair::zeros(env.redundant_dim());
        b.iter(|| {
            if env.done() {
                env = ManipEnv::from_config(&cfg, 1).unwrap();
            }
            black_box(env.step(&action).unwrap().r_r)
        })
    });
}

fn bench_learner_update(c: &mut Criterion) {
    let mut cfg = ScenarioConfig::planar_valve_desk();
    cfg.learner.feature_dim = 48;
    cfg.learner.hidden_dim = 32;
    let mut learner = DiscreteQLearner::new(19, 10, 4, &cfg.learner, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let batch: Vec<DiscreteBatchItem> = (0..48)
        .map(|i| {
            use rand::Rng;
            let window: Vec<f64> = (0..190).map(|_| rng.gen_range(-1.0..1.0)).collect();
            DiscreteBatchItem {
                next_window: window.clone(),
                window,
                action: i % 4,
                reward: (i % 2) as f64,
                mask: 1.0,
            }
        })
        .collect();
    c.bench_function("dqn_update_batch48", |b| {
        b.iter(|| black_box(learner.update(black_box(&batch)).unwrap()))
    });
}

fn bench_sim_step(c: &mut Criterion) {
    let cfg = ScenarioConfig::valve_7dof();
    c.bench_function("sim_tick_7dof", |b| {
        let mut env = ManipEnv::from_config(&cfg, 1).unwrap();
        let action = ActionPair::zeros(env.redundant_dim());
        b.iter(|| {
            if env.done() {
                env = ManipEnv::from_config(&cfg, 1).unwrap();
            }
            // One policy step = ten 1 kHz ticks.
            black_box(env.step(&action).unwrap().done)
        })
    });
    let model = RobotModel::reference_7dof();
    let q = model.nominal_q();
    c.bench_function("inertia_crba_7dof", |b| {
        b.iter(|| {
            black_box(
                swrl_core::kinematics::joint_space_inertia_at(&model, black_box(&q)).unwrap(),
            )
        })
    });
    let qd = DVector::from_element(7, 0.3);
    c.bench_function("bias_rnea_7dof", |b| {
        let fk = swrl_core::kinematics::forward_kinematics(&model, &q).unwrap();
        b.iter(|| {
            black_box(swrl_core::kinematics::bias_torques(
                &model,
                &fk,
                black_box(&qd),
                &nalgebra::Vector3::new(0.0, 0.0, -9.81),
            ))
        })
    });
}

criterion_group!(
    benches,
    bench_kinematics,
    bench_sim_step,
    bench_env_step,
    bench_learner_update
);
criterion_main!(benches);
