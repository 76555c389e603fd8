use std::collections::BTreeMap;

use crate::action::{predict_actions, ActionModel};
use crate::error::{Error, Result};
use crate::interaction::Partner;
use crate::par;
use crate::scene::{make_windows, ActionVector, BBox, Clip, EgoState, T_FUT, T_OBS};
use crate::taxonomy::AgentType;

/// One prediction target in one window.
#[derive(Debug, Clone, PartialEq)]
pub struct FolSample {
    pub clip_id: String,
    pub track_id: u32,
    pub t_start: usize,
    pub agent_type: AgentType,
    pub obs_boxes: Vec<BBox>,
    pub obs_actions: Vec<ActionVector>,
    /// Every other agent present at each observation step.
    pub partners: Vec<Vec<Partner>>,
    pub ego_obs: Vec<EgoState>,
    pub future: Vec<BBox>,
}

impl FolSample {
    pub fn check(&self) -> Result<()> {
        let lens = [
            self.obs_boxes.len(),
            self.obs_actions.len(),
            self.partners.len(),
            self.ego_obs.len(),
        ];
        if lens.iter().any(|&l| l != T_OBS) {
            return Err(Error::Shape(format!(
                "{}:{} observation series lengths {lens:?}, expected {T_OBS}",
                self.clip_id, self.track_id
            )));
        }
        if !self.future.is_empty() && self.future.len() != T_FUT {
            return Err(Error::Shape(format!(
                "{}:{} has {} future boxes, expected {T_FUT}",
                self.clip_id,
                self.track_id,
                self.future.len()
            )));
        }
        Ok(())
    }

    /// Key shared with prediction records.
    pub fn key(&self) -> (String, usize, u32) {
        (self.clip_id.clone(), self.t_start, self.track_id)
    }
}

/// Where the per-step action vectors come from.
#[derive(Debug, Clone, Copy)]
pub enum ActionSource<'a> {
    GroundTruth,
    Predicted(&'a ActionModel),
}

/// Samples for every target of every window. With predicted actions, every
/// agent's labels over the observation steps come from the classifier, both for
/// the target and for its interaction partners.
pub fn fol_samples(clips: &[Clip], stride: usize, source: ActionSource) -> Vec<FolSample> {
    let per_clip = par::map(clips, |clip| {
        let mut out = Vec::new();
        for w in make_windows(clip, stride) {
            let obs = w.obs_frames();
            let mut actions: BTreeMap<u32, Vec<Option<ActionVector>>> = BTreeMap::new();
            for id in w.all_agents() {
                let series = match source {
                    ActionSource::GroundTruth => {
                        let track = clip.track(id).expect("window agent exists");
                        obs.clone().map(|t| track.action_at(t)).collect()
                    }
                    ActionSource::Predicted(model) => predict_actions(model, clip, id, obs.clone()),
                };
                actions.insert(id, series);
            }
            let partners_at = |k: usize, except: u32| -> Vec<Partner> {
                let t = w.t_start + k;
                actions
                    .iter()
                    .filter(|(id, _)| **id != except)
                    .filter_map(|(id, series)| {
                        let track = clip.track(*id)?;
                        Some(Partner {
                            track_id: *id,
                            bbox: track.box_at(t)?,
                            action: series[k]?,
                        })
                    })
                    .collect()
            };
            for &id in &w.agents {
                let track = clip.track(id).expect("window agent exists");
                let obs_actions: Option<Vec<ActionVector>> = actions[&id].iter().copied().collect();
                let obs_boxes: Option<Vec<BBox>> = obs.clone().map(|t| track.box_at(t)).collect();
                let future: Option<Vec<BBox>> = w.fut_frames().map(|t| track.box_at(t)).collect();
                let (Some(obs_actions), Some(obs_boxes), Some(future)) = (obs_actions, obs_boxes, future) else {
                    continue;
                };
                out.push(FolSample {
                    clip_id: clip.clip_id.clone(),
                    track_id: id,
                    t_start: w.t_start,
                    agent_type: track.agent_type,
                    obs_boxes,
                    obs_actions,
                    partners: (0..T_OBS).map(|k| partners_at(k, id)).collect(),
                    ego_obs: obs.clone().map(|t| clip.ego[t]).collect(),
                    future,
                });
            }
        }
        out
    });
    per_clip.into_iter().flatten().collect()
}
