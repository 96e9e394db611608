//! Cross-module invariants that need the full stack: energy conservation of
//! the coupled system, reward recomputation from stored transitions, the
//! behavior-cloning closed loop, and manipulability trace recomputation.

use nalgebra::{DVector, Vector3};

use swrl_core::baselines::{EnvAction, ManualPolicy};
use swrl_core::config::ScenarioConfig;
use swrl_core::env::{reward_k, reward_r, ActionPair, ManipEnv, ObservationFrame};
use swrl_core::kinematics::{forward_kinematics, manipulability, point_jacobian_world, RobotModel};
use swrl_core::learn::bc::{train_bc, BcExample, BcPolicy};
use swrl_core::learn::driver::{collect_manual_transitions, derive_seed, rollout_episode};
use swrl_core::learn::ObsScaler;
use swrl_core::math::Transform;
use swrl_core::metrics::manipulability_trace;
use swrl_core::object::{ObjectClass, ObjectModel};
use swrl_core::sim::{SimParams, World, WorldState};
use swrl_core::subspace::build_object_frame;

/// With every dissipation channel zeroed and no input torque, the coupled
/// arm + object system drifts less than 2% in total energy over 5 s.
#[test]
fn coupled_system_energy_drift_bounded() {
    let mut object = ObjectModel::from_world_geometry(
        ObjectClass::PlanarValve,
        Vector3::new(0.5, 0.1, 0.0),
        Vector3::z(),
        Vector3::new(0.63, 0.1, 0.0),
        (-50.0, 50.0),
        0.0,
        0.0,
        0.06,
    )
    .unwrap();
    object.spring_k = 2.0;
    let frame = build_object_frame(&object).unwrap();
    let robot = RobotModel::planar_3dof([0.4, 0.35, 0.25]);

    let mut params = SimParams::default();
    params.gravity = Vector3::zeros();
    params.grasp_stiffness = 500.0;
    params.grasp_damping = 0.0;
    params.grasp_break_force = 1e9;
    params.grasp_break_distance = 1e9;

    let world = World::new(robot.clone(), object, frame, Vec::new(), params);

    // Seat the gripper on the handle, then nudge the system.
    let target = world.handle_world(0.0);
    let (q, residual) =
        swrl_core::kinematics::solve_reach(&robot, &robot.nominal_q(), &target, 400, 1e-8).unwrap();
    assert!(residual < 1e-6);
    let mut state = WorldState::new(q, 0.0);
    let fk = forward_kinematics(&robot, &state.q).unwrap();
    world.attach_grasp(&mut state, &fk);
    state.qd = DVector::from_column_slice(&[0.15, -0.1, 0.2]);
    state.theta_dot = 0.3;

    let e0 = world.total_energy(&state).unwrap();
    let torques = DVector::zeros(3);
    let mut worst: f64 = 0.0;
    for _ in 0..5_000 {
        world.step(&mut state, &torques).unwrap();
        let e = world.total_energy(&state).unwrap();
        worst = worst.max((e - e0).abs() / e0.abs());
    }
    assert!(worst < 0.02, "coupled energy drift {worst}");
}

/// Stored transitions must replay through the reward definitions exactly.
#[test]
fn transition_rewards_recompute_exactly() {
    let mut cfg = ScenarioConfig::planar_valve_desk();
    cfg.mdp.episode_duration = 1.5;
    let (transitions, _) = collect_manual_transitions(&cfg, 3).unwrap();
    assert!(!transitions.is_empty());
    let band = cfg.velocity_band();
    let sense = cfg.scenario.open_sense;
    for t in &transitions {
        let delta: f64 = t
            .accel_r
            .iter()
            .zip(t.prev_accel_r.iter())
            .map(|(a, b)| (a - b).abs())
            .sum();
        let mut r_r = reward_r(delta, &t.contact_forces, cfg.mdp.k1, cfg.mdp.k2);
        let mut r_k = reward_k(sense * t.velocity_estimate, band);
        if t.done {
            if let Some(cause) = t.cause {
                if cause.is_failure() {
                    r_k += cfg.mdp.terminal_penalty;
                    r_r += cfg.mdp.terminal_penalty;
                }
            }
        }
        assert_eq!(r_k.to_bits(), t.r_k.to_bits(), "r_K recompute");
        assert_eq!(r_r.to_bits(), t.r_r.to_bits(), "r_R recompute");
    }
}

/// A behavior-cloned policy replayed on its exact training scenario must
/// reproduce the manual terminal articulation within 10%.
#[test]
fn bc_reproduces_manual_on_training_scenario() {
    let mut cfg = ScenarioConfig::planar_valve_desk();
    cfg.mdp.episode_duration = 4.0;
    cfg.learner.feature_dim = 32;
    cfg.learner.hidden_dim = 24;
    cfg.learner.bc_epochs = 60;
    cfg.learner.bc_lr = 2e-3;
    let seed = 31_u64;

    // Collect several passes over the one scenario for a dense dataset.
    let mut transitions = Vec::new();
    let mut manual_theta = 0.0;
    for _ in 0..3 {
        let mut env = ManipEnv::from_config(&cfg, seed).unwrap();
        let manual = ManualPolicy::from_env(&cfg.manual, &cfg.mdp, &env, true);
        let mut batch = rollout_episode(&mut env, |e| manual.decide(e.window()), true).unwrap();
        transitions.append(&mut batch);
        manual_theta = env.log().terminal_theta;
    }
    assert!(manual_theta > 0.5, "manual must articulate the valve");

    let scaler = ObsScaler::new(&cfg.robot, cfg.velocity_band().1);
    let examples: Vec<BcExample> = transitions
        .iter()
        .map(|t| BcExample {
            window: scaler.apply(&t.window),
            force_idx: t.force_idx as usize,
            accel: t.accel_r.clone(),
        })
        .collect();
    let frame_dim = ObservationFrame::dim(cfg.robot.dof());
    let mut policy = BcPolicy::new(
        frame_dim,
        cfg.mdp.window_len,
        4,
        1,
        cfg.mdp.a_max,
        &cfg.learner,
        derive_seed(cfg.seed, "bc_test", 0),
    );
    let report = train_bc(&mut policy, &examples, &cfg.learner, 1).unwrap();
    assert!(report.holdout_accuracy > 0.8, "imitation accuracy {}", report.holdout_accuracy);

    let mut env = ManipEnv::from_config(&cfg, seed).unwrap();
    while !env.done() {
        let input = scaler.apply(&env.window().flat());
        let (force_idx, accel_r) = policy.act(&input);
        env.step(&ActionPair { force_idx, accel_r }).unwrap();
    }
    let bc_theta = env.log().terminal_theta;
    assert!(
        (bc_theta - manual_theta).abs() / manual_theta < 0.10,
        "closed-loop imitation: bc {bc_theta:.3} vs manual {manual_theta:.3}"
    );
}

/// Logged manipulability values must match an offline recomputation from the
/// logged joint angles.
#[test]
fn manipulability_trace_recomputation() {
    let cfg = ScenarioConfig::planar_valve_desk();
    let mut env = ManipEnv::from_config(&cfg, 12).unwrap();
    let manual = ManualPolicy::from_env(&cfg.manual, &cfg.mdp, &env, false);
    let mut steps = 0;
    while !env.done() && steps < 150 {
        match manual.decide(env.window()) {
            EnvAction::Pair(p) => env.step(&p).unwrap(),
            EnvAction::Raw { delta_f, accel_r } => env.step_raw(delta_f, &accel_r, 1).unwrap(),
        };
        steps += 1;
    }
    let frame = swrl_core::subspace::build_object_frame(env.object()).unwrap();
    let rows: Vec<usize> = cfg
        .mdp
        .manipulability_rows
        .as_ref()
        .unwrap()
        .iter()
        .map(|a| a.index())
        .collect();
    let log = env.log().clone();
    let trace = manipulability_trace(&log, 50);
    assert!(!trace.is_empty());
    for record in log.steps.iter().step_by(10) {
        let q = DVector::from_column_slice(&record.q);
        let fk = forward_kinematics(env.robot(), &q).unwrap();
        let j_world = point_jacobian_world(&fk, &fk.ee.translation);
        let j = swrl_core::kinematics::jacobian_in_frame(&j_world, &frame.pose.rotation);
        let block = j.select_rows(rows.iter());
        let w = manipulability(&block);
        assert!(
            (w - record.w).abs() < 1e-9,
            "logged w {} vs recomputed {w}",
            record.w
        );
    }

    // Frozen robot: the trace of a single-step log is a single point.
    let single = {
        let mut log = swrl_core::env::EpisodeLog::default();
        log.steps.push(log_step(0.0, 0.5));
        manipulability_trace(&log, 10)
    };
    assert_eq!(single.len(), 1);
}

fn log_step(theta: f64, w: f64) -> swrl_core::env::StepRecord {
    swrl_core::env::StepRecord {
        t: 0.0,
        q: vec![0.0; 3],
        theta,
        theta_dot: 0.0,
        force: 0.0,
        c_f_sum: 0.0,
        w,
        r_k: 0.0,
        r_r: 1.0,
        force_idx: 1,
        accel_r: vec![0.0],
    }
}

/// The force-only ablation actor freezes the redundant coordinates exactly.
#[test]
fn force_only_ablation_commands_zero_motion() {
    use swrl_core::learn::dqn::DiscreteQLearner;
    use swrl_core::learn::policy::SwrlForceOnlyActor;

    let mut cfg = ScenarioConfig::planar_valve_desk();
    cfg.learner.feature_dim = 16;
    cfg.learner.hidden_dim = 8;
    let env = ManipEnv::from_config(&cfg, 3).unwrap();
    let frame_dim = ObservationFrame::dim(cfg.robot.dof());
    let actor = SwrlForceOnlyActor {
        policy_k: DiscreteQLearner::new(frame_dim, cfg.mdp.window_len, 4, &cfg.learner, 1),
        scaler: ObsScaler::new(&cfg.robot, cfg.velocity_band().1),
        redundant_dim: env.redundant_dim(),
    };
    use swrl_core::baselines::EvalActor;
    for _ in 0..5 {
        match actor.act(&env) {
            EnvAction::Pair(p) => assert!(p.accel_r.iter().all(|a| *a == 0.0)),
            _ => panic!("ablation emits action pairs"),
        }
    }
}

/// Decomposition invariance and frame reconstruction across a randomized
/// scenario batch.
#[test]
fn randomized_scenarios_build_consistent_frames() {
    let cfg = ScenarioConfig::valve_7dof();
    for seed in 0..30 {
        let object = swrl_core::sim::randomize_scenario(&cfg.scenario, seed).unwrap();
        let frame = build_object_frame(&object).unwrap();
        let r = frame.pose.rotation;
        let defect = (r.transpose() * r - nalgebra::Matrix3::identity())
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(defect < 1e-9);
        // The handle must sit in the frame's x-z plane at construction.
        let handle_local = frame.to_frame(&world_handle(&object));
        assert!(handle_local.y.abs() < 1e-9);
    }
}

fn world_handle(object: &ObjectModel) -> Vector3<f64> {
    object
        .joint_origin
        .transform_point(&object.handle_in_frame(0.0))
}

/// Identity task frame: jacobian_in_frame must be a no-op.
#[test]
fn frame_identity_preserves_jacobian() {
    let robot = RobotModel::reference_7dof();
    let q = robot.nominal_q();
    let fk = forward_kinematics(&robot, &q).unwrap();
    let j = point_jacobian_world(&fk, &fk.ee.translation);
    let j2 = swrl_core::kinematics::jacobian_in_frame(&j, &Transform::identity().rotation);
    assert_eq!(j, j2);
}
