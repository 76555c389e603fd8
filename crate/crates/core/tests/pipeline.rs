use titan_core::action::{action_samples, per_frame_map, predict_actions, train_action, ActionConfig};
use titan_core::baselines::EgoBaseline;
use titan_core::ego::ego_samples;
use titan_core::experiment::{run_experiment, ExperimentConfig};
use titan_core::fol::{fol_samples, ActionSource, FolSample};
use titan_core::metrics::{ego_rmse, evaluate, Report};
use titan_core::records::{BoxRecord, EgoRecord};
use titan_core::scene::{Clip, EgoState};
use titan_core::synth::{generate_clip, EgoProfile, GeneratorConfig};
use titan_core::taxonomy::{CARDINALITIES, SET_NAMES};
use titan_core::training::Hyper;

const STRIDE: usize = 5;

fn clips(n: usize, seed: u64, ego: EgoProfile) -> Vec<Clip> {
    let config = GeneratorConfig {
        seed,
        clip_length: 45,
        ego,
        ..Default::default()
    };
    (0..n).map(|i| generate_clip(&config, i)).collect()
}

fn truth_boxes(samples: &[FolSample], method: &str) -> Vec<BoxRecord> {
    samples
        .iter()
        .map(|s| BoxRecord {
            method: method.into(),
            clip_id: s.clip_id.clone(),
            t_start: s.t_start,
            track_id: s.track_id,
            boxes: s.future.iter().map(|b| b.to_array()).collect(),
            sigma: Vec::new(),
            rho: Vec::new(),
        })
        .collect()
}

fn truth_ego(clips: &[Clip]) -> Vec<EgoRecord> {
    ego_samples(clips, STRIDE, ActionSource::GroundTruth)
        .iter()
        .map(|s| EgoRecord {
            method: "oracle".into(),
            clip_id: s.clip_id.clone(),
            t_start: s.t_start,
            steps: s.future.iter().map(|e| [e.alpha, e.omega]).collect(),
            importance: Vec::new(),
        })
        .collect()
}

#[test]
fn oracle_predictor_scores_perfectly() {
    let test = clips(5, 2, EgoProfile::default());
    let samples = fol_samples(&test, STRIDE, ActionSource::GroundTruth);
    let boxes = truth_boxes(&samples, "oracle");
    let ego = truth_ego(&test);

    let targets: Vec<_> = samples.iter().map(|s| s.obs_actions[9]).collect();
    let types: Vec<_> = samples.iter().map(|s| s.agent_type).collect();
    let one_hot: Vec<Vec<Vec<f64>>> = targets
        .iter()
        .map(|a| {
            (0..SET_NAMES.len())
                .map(|h| (0..CARDINALITIES[h]).map(|c| f64::from(a.get(h) == c)).collect())
                .collect()
        })
        .collect();
    let map = per_frame_map(&one_hot, &targets, &types).unwrap();

    let report = evaluate(&test, STRIDE, &boxes, &ego, Some(&map)).unwrap();
    let row = &report.fol[0];
    assert_eq!(row.count, samples.len());
    assert_eq!((row.ade, row.fde, row.fiou), (Some(0.0), Some(0.0), Some(1.0)));
    assert!(row.missing.is_empty());
    for c in &row.per_class {
        assert_eq!((c.ade, c.fde, c.fiou), (0.0, 0.0, 1.0), "{c:?}");
    }
    assert_eq!((report.ego[0].acc_rmse, report.ego[0].yaw_rmse), (Some(0.0), Some(0.0)));
    let action = report.action.unwrap();
    assert_eq!(action.overall, 1.0);
    assert!(action.heads.iter().filter_map(|h| h.map).all(|m| m == 1.0));
}

fn noisy(records: &[BoxRecord], method: &str, k: f64) -> Vec<BoxRecord> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut r = r.clone();
            r.method = method.into();
            for (t, b) in r.boxes.iter_mut().enumerate() {
                b[0] += k * ((i * 7 + t) as f64).sin() * 0.01;
                b[1] += k * ((i * 3 + t) as f64).cos() * 0.01;
                b[2] *= 1.0 + 0.1 * k;
            }
            r
        })
        .collect()
}

#[test]
fn per_class_rows_reaggregate_to_overall() {
    let test = clips(6, 3, EgoProfile::default());
    let samples = fol_samples(&test, STRIDE, ActionSource::GroundTruth);
    let exact = truth_boxes(&samples, "x");
    let boxes: Vec<BoxRecord> = [noisy(&exact, "a", 1.0), noisy(&exact, "b", 2.5)].concat();
    let report = evaluate(&test, STRIDE, &boxes, &[], None).unwrap();
    assert_eq!(report.fol.len(), 2);
    for row in &report.fol {
        // Atomic covers every person and motion status every vehicle.
        let rows: Vec<_> = row
            .per_class
            .iter()
            .filter(|c| c.set == SET_NAMES[0] || c.set == SET_NAMES[5])
            .collect();
        let n: usize = rows.iter().map(|c| c.count).sum();
        assert_eq!(n, row.count);
        for (metric, overall) in [
            (rows.iter().map(|c| c.ade * c.count as f64).sum::<f64>(), row.ade.unwrap()),
            (rows.iter().map(|c| c.fde * c.count as f64).sum::<f64>(), row.fde.unwrap()),
            (rows.iter().map(|c| c.fiou * c.count as f64).sum::<f64>(), row.fiou.unwrap()),
        ] {
            assert!((metric / n as f64 - overall).abs() < 1e-9, "{} vs {overall}", metric / n as f64);
        }
    }
}

#[test]
fn window_order_does_not_matter() {
    let test = clips(4, 4, EgoProfile::default());
    let samples = fol_samples(&test, STRIDE, ActionSource::GroundTruth);
    let boxes = noisy(&truth_boxes(&samples, "x"), "a", 1.0);
    let mut reversed = boxes.clone();
    reversed.reverse();
    let a = evaluate(&test, STRIDE, &boxes, &[], None).unwrap();
    let b = evaluate(&test, STRIDE, &reversed, &[], None).unwrap();
    assert_eq!(a.fol, b.fol);
}

#[test]
fn missing_predictions_are_listed() {
    let test = clips(4, 5, EgoProfile::default());
    let samples = fol_samples(&test, STRIDE, ActionSource::GroundTruth);
    let mut boxes = truth_boxes(&samples, "x");
    let dropped = boxes.pop().unwrap();
    let mut ego = truth_ego(&test);
    ego.remove(0);
    let report = evaluate(&test, STRIDE, &boxes, &ego, None).unwrap();
    assert_eq!(report.fol[0].count, samples.len() - 1);
    assert_eq!(report.fol[0].missing.len(), 1);
    assert!(report.fol[0].missing[0].contains(&dropped.clip_id));
    assert_eq!(report.ego[0].missing.len(), 1);
}

#[test]
fn const_vel_ego_is_exact_on_constant_ego_clips() {
    let steady = EgoProfile {
        max_alpha: 0.0,
        max_omega: 0.0,
        brake_for_crossing: false,
        yield_decel: 0.0,
        ..Default::default()
    };
    let test = clips(5, 6, steady);
    let samples = ego_samples(&test, STRIDE, ActionSource::GroundTruth);
    assert!(!samples.is_empty());
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for s in &samples {
        pred.extend(EgoBaseline::ConstVel.predict(&s.ego_obs).unwrap());
        truth.extend(s.future.iter().copied());
    }
    let (acc, yaw) = ego_rmse(&pred, &truth).unwrap();
    assert!(acc < 1e-9 && yaw < 1e-9, "{acc} {yaw}");
    assert!(truth.iter().all(|e| *e == EgoState { alpha: 0.0, omega: 0.0 }));
}

#[test]
fn predicted_actions_feed_the_chain() {
    let train = clips(10, 7, EgoProfile::default());
    let test = clips(3, 8, EgoProfile::default());
    let hyper = Hyper {
        learning_rate: 3e-3,
        batch_size: 8,
        epochs: 3,
        grad_clip: 1.0,
        keep_best: false,
        warmup_steps: 0,
        final_lr_fraction: 1.0,
    };
    let config = ActionConfig {
        hidden: 16,
        layers: 1,
        ..Default::default()
    };
    let (model, _) = train_action(&action_samples(&train, STRIDE), &[], config, &hyper, 0, |_| {}).unwrap();
    let truth = fol_samples(&test, STRIDE, ActionSource::GroundTruth);
    let predicted = fol_samples(&test, STRIDE, ActionSource::Predicted(&model));
    assert_eq!(truth.len(), predicted.len());
    let mut differing = 0;
    for (t, p) in truth.iter().zip(&predicted) {
        assert_eq!(t.key(), p.key());
        assert_eq!(t.obs_boxes, p.obs_boxes);
        assert_eq!(t.future, p.future);
        let clip = test.iter().find(|c| c.clip_id == p.clip_id).unwrap();
        let series = predict_actions(&model, clip, p.track_id, p.t_start..p.t_start + 10);
        let last = series.iter().rev().flatten().next().unwrap();
        assert_eq!(p.obs_actions[9], *last);
        differing += usize::from(t.obs_actions != p.obs_actions);
    }
    assert!(differing > 0, "an undertrained classifier should disagree with the labels somewhere");
}

fn tiny_config(out: &std::path::Path) -> ExperimentConfig {
    let text = r#"
        seed = 1
        stride = 10
        [corpus]
        num_clips = 7
        clip_length = 40
        [action]
        hidden = 8
        layers = 1
        [action.train]
        epochs = 1
        [fol]
        hidden = 8
        ablations = ["vanilla", "EP+IP+AP"]
        [fol.train]
        epochs = 1
        [ego]
        hidden = 8
        variants = ["AIM"]
        stride = 10
        [ego.train]
        epochs = 1
        batch_size = 8
    "#;
    let mut c = ExperimentConfig::parse(text, out).unwrap();
    c.out_dir = out.to_path_buf();
    c
}

#[test]
fn pipeline_reruns_are_identical_and_isolated() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(&dir.path().join("run"));
    let first = run_experiment(&config, |_, _| {}).unwrap();
    assert_eq!(first.trained, ["action", "fol:vanilla", "fol:EP+IP+AP", "ego:AIM"]);
    let bytes = std::fs::read(config.out_dir.join("report.json")).unwrap();
    let parsed: Report = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(parsed, first.report);

    std::fs::remove_file(config.out_dir.join("checkpoints/fol_vanilla.json")).unwrap();
    let second = run_experiment(&config, |_, _| {}).unwrap();
    assert_eq!(second.trained, ["fol:vanilla"]);
    assert_eq!(bytes, std::fs::read(config.out_dir.join("report.json")).unwrap());

    // A changed stage config invalidates only that stage and the ones after it
    // that read it; ego does not depend on FOL training settings.
    let mut changed = config.clone();
    changed.fol.train.learning_rate = 2e-4;
    let third = run_experiment(&changed, |_, _| {}).unwrap();
    assert_eq!(third.trained, ["fol:vanilla", "fol:EP+IP+AP"]);

    let other = tiny_config(&dir.path().join("other"));
    run_experiment(&other, |_, _| {}).unwrap();
    assert_eq!(bytes, std::fs::read(other.out_dir.join("report.json")).unwrap());
}

#[test]
fn corrupted_checkpoint_is_retrained() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(&dir.path().join("run"));
    run_experiment(&config, |_, _| {}).unwrap();
    std::fs::write(config.out_dir.join("checkpoints/ego_AIM.json"), "{}").unwrap();
    let again = run_experiment(&config, |_, _| {}).unwrap();
    assert_eq!(again.trained, ["ego:AIM"]);
}
