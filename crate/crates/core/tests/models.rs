use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use titan_core::ego::{
    ego_loss_on, ego_samples, train_ego, EgoConfig, EgoNetwork, EgoSample, EgoVariant, EGO_VARIANTS,
};
use titan_core::fol::{
    fol_loss_on, fol_samples, train_fol, ActionSource, FolAblation, FolConfig, FolNetwork, FolSample, FOL_ABLATIONS,
};
use titan_core::scene::{ActionVector, BBox, Clip, EgoState};
use titan_core::synth::{generate_clip, GeneratorConfig};
use titan_core::taxonomy::{CARDINALITIES, NUM_SETS};
use titan_core::training::Hyper;

fn clips(n: usize, seed: u64) -> Vec<Clip> {
    let config = GeneratorConfig {
        seed,
        clip_length: 40,
        ..Default::default()
    };
    (0..n).map(|i| generate_clip(&config, i)).collect()
}

fn random_action(rng: &mut impl Rng) -> ActionVector {
    let mut a = ActionVector::none();
    for set in 0..NUM_SETS {
        a.set(set, rng.random_range(0..CARDINALITIES[set]));
    }
    a
}

fn random_box(rng: &mut impl Rng) -> BBox {
    BBox::new(rng.random(), rng.random(), rng.random_range(0.01..0.3), rng.random_range(0.01..0.3))
}

/// Overwrites every input channel the ablation does not use.
fn scramble(s: &FolSample, ablation: FolAblation, rng: &mut impl Rng) -> FolSample {
    let mut s = s.clone();
    if !ablation.action {
        for a in &mut s.obs_actions {
            *a = random_action(rng);
        }
        for p in s.partners.iter_mut().flatten() {
            p.action = random_action(rng);
        }
    }
    if !ablation.ego {
        for e in &mut s.ego_obs {
            *e = EgoState {
                alpha: rng.random_range(-5.0..5.0),
                omega: rng.random_range(-1.0..1.0),
            };
        }
    }
    if !ablation.interaction {
        for p in s.partners.iter_mut().flatten() {
            p.bbox = random_box(rng);
            p.action = random_action(rng);
        }
    }
    s
}

fn fol_windows() -> Vec<FolSample> {
    let samples = fol_samples(&clips(4, 11), 5, ActionSource::GroundTruth);
    let with_partners: Vec<FolSample> = samples
        .into_iter()
        .filter(|s| s.partners.iter().any(|p| !p.is_empty()))
        .take(6)
        .collect();
    assert!(with_partners.len() >= 3, "fixture needs windows with partners");
    with_partners
}

#[test]
fn disabled_fol_inputs_are_ignored() {
    let windows = fol_windows();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for name in FOL_ABLATIONS {
        for residual in [false, true] {
            let ablation = FolAblation::parse(name).unwrap();
            let net = FolNetwork::new(
                FolConfig {
                    hidden: 12,
                    ablation,
                    residual,
                },
                2,
            );
            for s in &windows {
                let a = net.forecast(s).unwrap();
                let b = net.forecast(&scramble(s, ablation, &mut rng)).unwrap();
                assert_eq!(a, b, "{name} (residual {residual}) reads a disabled channel");
            }
        }
    }
}

#[test]
fn enabled_fol_inputs_are_read() {
    let windows = fol_windows();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let net = FolNetwork::new(
        FolConfig {
            hidden: 12,
            ablation: FolAblation::FULL,
            residual: false,
        },
        2,
    );
    let s = &windows[0];
    let base = net.forecast(s).unwrap();
    let mut partner_action = s.clone();
    let p = partner_action.partners.iter_mut().flatten().next().unwrap();
    p.action = ActionVector(std::array::from_fn(|k| ((p.action.get(k) + 1) % CARDINALITIES[k]) as u8));
    assert_ne!(net.forecast(&partner_action).unwrap(), base, "another agent's action must matter");
    let mut ego = s.clone();
    ego.ego_obs[3].alpha += 1.0;
    assert_ne!(net.forecast(&ego).unwrap(), base);
    let mut own = s.clone();
    own.obs_actions[9] = random_action(&mut rng);
    if own.obs_actions[9] != s.obs_actions[9] {
        assert_ne!(net.forecast(&own).unwrap(), base);
    }
}

#[test]
fn parameter_count_climbs_the_ladder() {
    let count = |name: &str| {
        FolNetwork::new(
            FolConfig {
                hidden: 32,
                ablation: FolAblation::parse(name).unwrap(),
                residual: false,
            },
            0,
        )
        .param_count()
    };
    let ladder: Vec<usize> = ["vanilla", "EP", "EP+IP", "EP+IP+AP"].iter().map(|n| count(n)).collect();
    assert!(ladder.windows(2).all(|w| w[0] < w[1]), "{ladder:?}");
    assert!(count("vanilla") < count("AP") && count("AP") < count("EP+AP"));
    assert!(count("IP") < count("EP+IP"));

    let ego = |name: &str| {
        EgoNetwork::new(
            EgoConfig {
                hidden: 16,
                variant: EgoVariant::parse(name).unwrap(),
            },
            0,
        )
        .param_count()
    };
    for chain in [["vanilla", "FP", "FP+AP", "AIM"], ["vanilla", "FP", "AIM_FP", "AIM"]] {
        let counts: Vec<usize> = chain.iter().map(|n| ego(n)).collect();
        assert!(counts.windows(2).all(|w| w[0] < w[1]), "{chain:?} {counts:?}");
    }
}

fn ego_windows() -> Vec<EgoSample> {
    let samples = ego_samples(&clips(4, 12), 5, ActionSource::GroundTruth);
    let busy: Vec<EgoSample> = samples.into_iter().filter(|s| s.agents.len() >= 2).take(5).collect();
    assert!(busy.len() >= 3);
    busy
}

#[test]
fn ego_variants_read_exactly_their_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for name in EGO_VARIANTS {
        let variant = EgoVariant::parse(name).unwrap();
        let net = EgoNetwork::new(EgoConfig { hidden: 10, variant }, 4);
        for s in ego_windows() {
            let base = net.predict(&s).unwrap().steps;
            let mut actions = s.clone();
            for a in &mut actions.agents {
                a.action = random_action(&mut rng);
            }
            let mut futures = s.clone();
            for a in &mut futures.agents {
                for b in a.boxes.iter_mut().flatten() {
                    *b = random_box(&mut rng);
                }
            }
            let reads_actions = name == "FP+AP" || name == "AIM";
            assert_eq!(net.predict(&actions).unwrap().steps == base, !reads_actions, "{name} actions");
            assert_eq!(net.predict(&futures).unwrap().steps == base, name == "vanilla", "{name} futures");
        }
    }
}

fn quick(epochs: usize) -> Hyper {
    Hyper {
        learning_rate: 3e-3,
        batch_size: 8,
        epochs,
        grad_clip: 1.0,
        keep_best: false,
        warmup_steps: 0,
        final_lr_fraction: 1.0,
    }
}

#[test]
fn fol_training_lowers_validation_nll() {
    let train = fol_samples(&clips(8, 21), 5, ActionSource::GroundTruth);
    let val = fol_samples(&clips(3, 22), 5, ActionSource::GroundTruth);
    let config = FolConfig {
        hidden: 16,
        ablation: FolAblation::FULL,
        residual: false,
    };
    let before = fol_loss_on(&FolNetwork::new(config.clone(), 1), &val).unwrap();
    let (net, log) = train_fol(&train, &val, config, &quick(3), 1, |_| {}).unwrap();
    let after = fol_loss_on(&net, &val).unwrap();
    assert!(after < before, "{before} -> {after}");
    assert_eq!(log.epochs.len(), 3);
}

#[test]
fn ego_training_lowers_validation_rmse() {
    let train = ego_samples(&clips(24, 31), 2, ActionSource::GroundTruth);
    let val = ego_samples(&clips(3, 32), 5, ActionSource::GroundTruth);
    let config = EgoConfig {
        hidden: 16,
        variant: EgoVariant::AIM,
    };
    let rmse = |net: &EgoNetwork| {
        let preds = net.predict_all(&val).unwrap();
        let mut sq = 0.0;
        let mut n = 0.0;
        for (p, s) in preds.iter().zip(&val) {
            for (a, e) in p.steps.iter().zip(&s.future) {
                sq += (a[0] - e.alpha).powi(2);
                n += 1.0;
            }
        }
        (sq / n).sqrt()
    };
    let init = EgoNetwork::new(config.clone(), 1);
    let before = (rmse(&init), ego_loss_on(&init, &val).unwrap());
    let (net, _) = train_ego(&train, &val, config, &quick(10), 1, |_| {}).unwrap();
    let after = (rmse(&net), ego_loss_on(&net, &val).unwrap());
    assert!(after.0 < before.0 && after.1 < before.1, "{before:?} -> {after:?}");
}

#[test]
fn checkpoints_roundtrip_predictions() {
    let fol = FolNetwork::new(
        FolConfig {
            hidden: 8,
            ablation: FolAblation::parse("EP+AP").unwrap(),
            residual: true,
        },
        3,
    );
    let back = FolNetwork::from_checkpoint(&fol.to_checkpoint()).unwrap();
    let s = &fol_windows()[0];
    assert_eq!(fol.forecast(s).unwrap(), back.forecast(s).unwrap());
    assert_eq!(back.to_checkpoint(), fol.to_checkpoint());

    let ego = EgoNetwork::new(
        EgoConfig {
            hidden: 8,
            variant: EgoVariant::parse("AIM_FP").unwrap(),
        },
        3,
    );
    let back = EgoNetwork::from_checkpoint(&ego.to_checkpoint()).unwrap();
    let s = &ego_windows()[0];
    assert_eq!(ego.predict(s).unwrap(), back.predict(s).unwrap());
    assert!(EgoNetwork::from_checkpoint(&fol.to_checkpoint()).is_err());
}
