use augsearch::nnet::{
    encode_checkpoint, evaluate_error, init_model, rollout_policy, score_sequence, train_bc,
    train_regressor, Architecture, EvalSets, Model, TrainConfig,
};
use augsearch::scene::{
    make_dataset, rollout_controller, sample_reach_scene, scripted_expert, Demonstration,
    ExpertController,
};
use augsearch::test_support::random_frame;
use augsearch::{AugmentationSequence, Dataset, Domain, LabeledFrame, Rng};

fn small_cfg(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        seed,
        eval_epochs_window: epochs.min(3),
        ..TrainConfig::default()
    }
}

fn demos(n: usize, size: usize) -> Vec<Demonstration> {
    (0..n)
        .map(|i| {
            scripted_expert(&sample_reach_scene(&mut Rng::stream(21, i as u64)), size).unwrap()
        })
        .collect()
}

#[test]
fn zero_learning_rate_keeps_init() {
    let sim = make_dataset(4, 2, Domain::Sim, 24, 1);
    let cfg = TrainConfig {
        learning_rate: 0.0,
        ..small_cfg(1, 3)
    };
    let (model, _) = train_regressor(
        &sim,
        &AugmentationSequence::empty(),
        &cfg,
        EvalSets::default(),
    )
    .unwrap();
    let init = init_model(&Architecture::regressor(24), 3).unwrap();
    assert_eq!(model.theta(), init.theta());
}

#[test]
fn single_sample_overfits() {
    let sim = make_dataset(1, 1, Domain::Sim, 24, 8);
    let cfg = TrainConfig {
        batch_size: 1,
        ..small_cfg(300, 0)
    };
    let (_, history) = train_regressor(
        &sim,
        &AugmentationSequence::empty(),
        &cfg,
        EvalSets::default(),
    )
    .unwrap();
    let last = history.last().unwrap().train_loss;
    assert!(last < 1e-4, "final loss {last}");
}

#[test]
fn regressor_training_is_deterministic() {
    let sim = make_dataset(6, 2, Domain::Sim, 24, 2);
    let seq: AugmentationSequence = "Cutout(L,2/3)&WhiteNoise(H,1/3)".parse().unwrap();
    let run = || train_regressor(&sim, &seq, &small_cfg(2, 5), EvalSets::default()).unwrap();
    let (a, ha) = run();
    let (b, hb) = run();
    assert_eq!(
        encode_checkpoint(&a).unwrap(),
        encode_checkpoint(&b).unwrap()
    );
    assert_eq!(ha, hb);
}

#[test]
fn score_repeats_exactly() {
    let sim = make_dataset(6, 2, Domain::Sim, 24, 2);
    let real = make_dataset(4, 1, Domain::PseudoReal, 24, 3);
    let seq: AugmentationSequence = "SaltNoise(H,1)".parse().unwrap();
    let cfg = small_cfg(3, 1);
    let a = score_sequence(&seq, &sim, &real, &cfg).unwrap();
    let b = score_sequence(&seq, &sim, &real, &cfg).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn evaluation_error_is_mean_distance() {
    // An all-zero network predicts the origin.
    let arch = Architecture::regressor(16);
    let model = Model::from_parts(arch.clone(), vec![0.0; arch.param_count()]).unwrap();
    let item = |p: [f64; 3], seed| LabeledFrame {
        frame: random_frame(16, 16, seed),
        cube_position: p,
    };
    let ds = Dataset::new(
        vec![item([0.01, 0.0, 0.0], 1), item([0.0, -0.03, 0.0], 2)],
        Domain::Sim,
        0,
    )
    .unwrap();
    assert!((evaluate_error(&model, &ds).unwrap() - 0.02).abs() < 1e-12);
}

#[test]
fn training_lowers_loss_on_average() {
    let sim = make_dataset(16, 2, Domain::Sim, 32, 4);
    let bc_demos = demos(4, 32);
    let (mut reg, mut bc) = (0.0, 0.0);
    for seed in 0..5 {
        let cfg = small_cfg(4, seed);
        let (_, h) = train_regressor(
            &sim,
            &AugmentationSequence::empty(),
            &cfg,
            EvalSets::default(),
        )
        .unwrap();
        reg += h.last().unwrap().train_loss - h[0].train_loss;
        let (_, h) = train_bc(&bc_demos, &AugmentationSequence::empty(), &cfg).unwrap();
        bc += h.last().unwrap().train_loss - h[0].train_loss;
    }
    assert!(
        reg < 0.0 && bc < 0.0,
        "loss changes: regression {reg}, bc {bc}"
    );
}

#[test]
fn bc_training_is_deterministic() {
    let d = demos(3, 24);
    let seq: AugmentationSequence = "EraseObject(L,1)".parse().unwrap();
    let a = train_bc(&d, &seq, &small_cfg(2, 9)).unwrap().0;
    let b = train_bc(&d, &seq, &small_cfg(2, 9)).unwrap().0;
    assert_eq!(a, b);
    assert_eq!(a.arch(), &Architecture::policy(24));
}

#[test]
fn expert_succeeds_everywhere() {
    for domain in [Domain::Sim, Domain::PseudoReal] {
        assert_eq!(
            rollout_controller(&mut ExpertController, domain, 20, 32, 3),
            20
        );
    }
}

#[test]
fn untrained_policy_rarely_succeeds() {
    let model = init_model(&Architecture::policy(32), 0).unwrap();
    assert!(rollout_policy(&model, Domain::Sim, 20, 4) <= 2);
}

#[test]
fn rollouts_leave_model_untouched() {
    let model = init_model(&Architecture::policy(24), 1).unwrap();
    let before = model.clone();
    rollout_policy(&model, Domain::PseudoReal, 2, 0);
    assert_eq!(model, before);
}
