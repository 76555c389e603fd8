//! Localization and ego-motion metrics and their aggregation into a report.

mod report;

pub use report::{render_markdown, render_trajectory_svg, render_importance_svg, write_report_dir};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::action::MapReport;
use crate::error::{Error, Result};
use crate::records::{BoxRecord, EgoRecord};
use crate::scene::{make_windows, BBox, Clip, EgoState, T_FUT, T_OBS};
use crate::taxonomy::{SETS, SET_NAMES};

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b || a == 0 {
        return Err(Error::Shape(format!("{a} predicted steps, {b} true steps")));
    }
    Ok(())
}

fn center_distance(p: BBox, t: BBox, dims: (f64, f64)) -> f64 {
    ((p.cu - t.cu) * dims.0).hypot((p.cv - t.cv) * dims.1)
}

/// Mean center distance in pixels over all steps.
pub fn ade(pred: &[BBox], truth: &[BBox], dims: (f64, f64)) -> Result<f64> {
    check_lengths(pred.len(), truth.len())?;
    let sum: f64 = pred.iter().zip(truth).map(|(p, t)| center_distance(*p, *t, dims)).sum();
    Ok(sum / pred.len() as f64)
}

/// Center distance in pixels at the last step.
pub fn fde(pred: &[BBox], truth: &[BBox], dims: (f64, f64)) -> Result<f64> {
    check_lengths(pred.len(), truth.len())?;
    Ok(center_distance(pred[pred.len() - 1], truth[truth.len() - 1], dims))
}

/// Intersection over union of two center-format boxes; 0 for an empty union.
pub fn fiou(a: BBox, b: BBox) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.corners();
    let (bx0, by0, bx1, by1) = b.corners();
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    let union = (ax1 - ax0).max(0.0) * (ay1 - ay0).max(0.0) + (bx1 - bx0).max(0.0) * (by1 - by0).max(0.0) - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// `(acceleration RMSE, yaw-rate RMSE)` over all steps.
pub fn ego_rmse(pred: &[EgoState], truth: &[EgoState]) -> Result<(f64, f64)> {
    check_lengths(pred.len(), truth.len())?;
    let (mut a, mut w) = (0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        a += (p.alpha - t.alpha).powi(2);
        w += (p.omega - t.omega).powi(2);
    }
    let n = pred.len() as f64;
    Ok(((a / n).sqrt(), (w / n).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub set: String,
    pub label: String,
    pub count: usize,
    pub ade: f64,
    pub fde: f64,
    pub fiou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FolRow {
    pub method: String,
    pub count: usize,
    pub ade: Option<f64>,
    pub fde: Option<f64>,
    pub fiou: Option<f64>,
    /// Rows keyed by the target's label at the last observed step, per action
    /// set the target's type uses.
    pub per_class: Vec<ClassRow>,
    /// `clip@t_start#track` keys with no prediction.
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoRow {
    pub method: String,
    pub count: usize,
    pub acc_rmse: Option<f64>,
    pub yaw_rmse: Option<f64>,
    /// `clip@t_start` keys with no prediction.
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadRow {
    pub set: String,
    pub map: Option<f64>,
    pub per_class: Vec<(String, Option<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSummary {
    pub overall: f64,
    pub heads: Vec<HeadRow>,
}

impl From<&MapReport> for ActionSummary {
    fn from(m: &MapReport) -> Self {
        ActionSummary {
            overall: m.overall,
            heads: (0..SETS.len())
                .map(|h| HeadRow {
                    set: SET_NAMES[h].to_string(),
                    map: m.per_head[h],
                    per_class: SETS[h].iter().map(|l| l.to_string()).zip(m.per_class[h].iter().copied()).collect(),
                })
                .collect(),
        }
    }
}

/// Observed and future centers of one target with each method's forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryExample {
    pub clip_id: String,
    pub t_start: usize,
    pub track_id: u32,
    pub observed: Vec<[f64; 4]>,
    pub truth: Vec<[f64; 4]>,
    pub predictions: Vec<(String, Vec<[f64; 4]>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentImportance {
    pub track_id: u32,
    /// Label of the agent at the last observed step.
    pub label: String,
    /// `|w|` per future step, `None` where the agent was absent.
    pub weights: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceExample {
    pub method: String,
    pub clip_id: String,
    pub t_start: usize,
    pub agents: Vec<AgentImportance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub image_width: u32,
    pub image_height: u32,
    pub fol: Vec<FolRow>,
    pub ego: Vec<EgoRow>,
    pub action: Option<ActionSummary>,
    pub trajectories: Vec<TrajectoryExample>,
    pub importance: Vec<ImportanceExample>,
}

/// Methods in order of first appearance.
fn methods<'a>(names: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    names.filter(|n| seen.insert(*n)).map(str::to_string).collect()
}

struct Target<'a> {
    clip: &'a Clip,
    t_start: usize,
    track_id: u32,
}

impl Target<'_> {
    fn key(&self) -> (String, usize, u32) {
        (self.clip.clip_id.clone(), self.t_start, self.track_id)
    }

    fn future(&self) -> Vec<BBox> {
        let track = self.clip.track(self.track_id).expect("target track");
        (self.t_start + T_OBS..self.t_start + T_OBS + T_FUT)
            .map(|t| track.box_at(t).expect("target present"))
            .collect()
    }
}

fn key_name(k: &(String, usize, u32)) -> String {
    format!("{}@{}#{}", k.0, k.1, k.2)
}

const TRAJECTORY_EXAMPLES: usize = 4;
const IMPORTANCE_EXAMPLES: usize = 3;

/// Scores every method's records against the truth windows of `clips`.
/// Metrics cover the predictions present; absent ones are listed per method.
pub fn evaluate(
    clips: &[Clip],
    stride: usize,
    boxes: &[BoxRecord],
    ego: &[EgoRecord],
    action: Option<&MapReport>,
) -> Result<Report> {
    let first = clips.first().ok_or_else(|| Error::invalid("no truth clips"))?;
    let dims = (first.image_width as f64, first.image_height as f64);
    let by_id: BTreeMap<&str, &Clip> = clips.iter().map(|c| (c.clip_id.as_str(), c)).collect();
    let mut targets = Vec::new();
    let mut windows = Vec::new();
    for clip in clips {
        for w in make_windows(clip, stride) {
            windows.push((clip, w.t_start));
            for &id in &w.agents {
                targets.push(Target {
                    clip,
                    t_start: w.t_start,
                    track_id: id,
                });
            }
        }
    }

    let mut box_index: BTreeMap<(String, (String, usize, u32)), &BoxRecord> = BTreeMap::new();
    for r in boxes {
        if r.boxes.len() != T_FUT {
            return Err(Error::Shape(format!("{} {}: {} steps, expected {T_FUT}", r.method, key_name(&r.key()), r.boxes.len())));
        }
        if box_index.insert((r.method.clone(), r.key()), r).is_some() {
            return Err(Error::invalid(format!("duplicate prediction {} {}", r.method, key_name(&r.key()))));
        }
    }
    let mut fol = Vec::new();
    for method in methods(boxes.iter().map(|r| r.method.as_str())) {
        let mut sums = (0.0, 0.0, 0.0);
        let mut count = 0usize;
        let mut classes: BTreeMap<(usize, usize), (usize, f64, f64, f64)> = BTreeMap::new();
        let mut missing = Vec::new();
        for t in &targets {
            let Some(r) = box_index.get(&(method.clone(), t.key())) else {
                missing.push(key_name(&t.key()));
                continue;
            };
            let truth = t.future();
            let pred = r.mean_boxes();
            let (a, f, iou) = (ade(&pred, &truth, dims)?, fde(&pred, &truth, dims)?, fiou(pred[T_FUT - 1], truth[T_FUT - 1]));
            sums = (sums.0 + a, sums.1 + f, sums.2 + iou);
            count += 1;
            let track = t.clip.track(t.track_id).expect("target track");
            let label = track.action_at(t.t_start + T_OBS - 1).expect("target observed");
            for set in track.agent_type.active_sets() {
                let e = classes.entry((set, label.get(set))).or_default();
                *e = (e.0 + 1, e.1 + a, e.2 + f, e.3 + iou);
            }
        }
        let avg = |s: f64| (count > 0).then(|| s / count as f64);
        fol.push(FolRow {
            method,
            count,
            ade: avg(sums.0),
            fde: avg(sums.1),
            fiou: avg(sums.2),
            per_class: classes
                .into_iter()
                .map(|((set, c), (n, a, f, iou))| ClassRow {
                    set: SET_NAMES[set].to_string(),
                    label: SETS[set][c].to_string(),
                    count: n,
                    ade: a / n as f64,
                    fde: f / n as f64,
                    fiou: iou / n as f64,
                })
                .collect(),
            missing,
        });
    }

    let mut ego_index: BTreeMap<(String, (String, usize)), &EgoRecord> = BTreeMap::new();
    for r in ego {
        if r.steps.len() != T_FUT {
            return Err(Error::Shape(format!("{} {}@{}: {} steps, expected {T_FUT}", r.method, r.clip_id, r.t_start, r.steps.len())));
        }
        if ego_index.insert((r.method.clone(), r.key()), r).is_some() {
            return Err(Error::invalid(format!("duplicate ego prediction {} {}@{}", r.method, r.clip_id, r.t_start)));
        }
    }
    let mut ego_rows = Vec::new();
    for method in methods(ego.iter().map(|r| r.method.as_str())) {
        let (mut pred, mut truth) = (Vec::new(), Vec::new());
        let mut missing = Vec::new();
        let mut count = 0;
        for (clip, t_start) in &windows {
            let Some(r) = ego_index.get(&(method.clone(), (clip.clip_id.clone(), *t_start))) else {
                missing.push(format!("{}@{}", clip.clip_id, t_start));
                continue;
            };
            count += 1;
            pred.extend(r.steps.iter().map(|s| EgoState { alpha: s[0], omega: s[1] }));
            truth.extend_from_slice(&clip.ego[t_start + T_OBS..t_start + T_OBS + T_FUT]);
        }
        let rmse = if count > 0 { Some(ego_rmse(&pred, &truth)?) } else { None };
        ego_rows.push(EgoRow {
            method,
            count,
            acc_rmse: rmse.map(|r| r.0),
            yaw_rmse: rmse.map(|r| r.1),
            missing,
        });
    }

    let box_methods: Vec<String> = fol.iter().map(|r| r.method.clone()).collect();
    let trajectories = targets
        .iter()
        .filter(|t| box_methods.iter().all(|m| box_index.contains_key(&(m.clone(), t.key()))))
        .take(if box_methods.is_empty() { 0 } else { TRAJECTORY_EXAMPLES })
        .map(|t| {
            let track = t.clip.track(t.track_id).expect("target track");
            TrajectoryExample {
                clip_id: t.clip.clip_id.clone(),
                t_start: t.t_start,
                track_id: t.track_id,
                observed: (t.t_start..t.t_start + T_OBS).map(|f| track.box_at(f).expect("observed").to_array()).collect(),
                truth: t.future().iter().map(|b| b.to_array()).collect(),
                predictions: box_methods.iter().map(|m| (m.clone(), box_index[&(m.clone(), t.key())].boxes.clone())).collect(),
            }
        })
        .collect();

    let importance = ego
        .iter()
        .filter(|r| r.importance.iter().any(|s| !s.is_empty()))
        .filter_map(|r| {
            let clip = by_id.get(r.clip_id.as_str())?;
            let t_last = r.t_start + T_OBS - 1;
            let ids: BTreeSet<u32> = r.importance.iter().flatten().map(|(id, _)| *id).collect();
            let agents = ids
                .into_iter()
                .map(|id| {
                    let label = clip
                        .track(id)
                        .and_then(|tr| {
                            let a = tr.action_at(t_last)?;
                            let set = if tr.agent_type.is_person() { 1 } else { 5 };
                            Some(a.label(set).to_string())
                        })
                        .unwrap_or_default();
                    AgentImportance {
                        track_id: id,
                        label,
                        weights: r
                            .importance
                            .iter()
                            .map(|s| s.iter().find(|(i, _)| *i == id).map(|(_, w)| w.abs()))
                            .collect(),
                    }
                })
                .collect();
            Some(ImportanceExample {
                method: r.method.clone(),
                clip_id: r.clip_id.clone(),
                t_start: r.t_start,
                agents,
            })
        })
        .take(IMPORTANCE_EXAMPLES)
        .collect();

    Ok(Report {
        image_width: first.image_width,
        image_height: first.image_height,
        fol,
        ego: ego_rows,
        action: action.map(ActionSummary::from),
        trajectories,
        importance,
    })
}
