use std::collections::BTreeMap;

use crate::action::{predict_actions, ActionModel};
use crate::error::{Error, Result};
use crate::fol::ActionSource;
use crate::par;
use crate::scene::{make_windows, ActionVector, BBox, Clip, EgoState, T_FUT, T_OBS};

/// One other agent as the ego decoder sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoAgent {
    pub track_id: u32,
    /// Action at the last observed step.
    pub action: ActionVector,
    /// Future box per prediction step; `None` where the agent is absent.
    pub boxes: Vec<Option<BBox>>,
}

/// One window of ego history with the agents around it.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoSample {
    pub clip_id: String,
    pub t_start: usize,
    pub ego_obs: Vec<EgoState>,
    pub agents: Vec<EgoAgent>,
    /// Empty when the truth is unknown.
    pub future: Vec<EgoState>,
}

impl EgoSample {
    pub fn check(&self) -> Result<()> {
        if self.ego_obs.len() != T_OBS {
            return Err(Error::Shape(format!(
                "{}@{}: {} ego history steps, expected {T_OBS}",
                self.clip_id,
                self.t_start,
                self.ego_obs.len()
            )));
        }
        if !self.future.is_empty() && self.future.len() != T_FUT {
            return Err(Error::Shape(format!(
                "{}@{}: {} ego future steps, expected {T_FUT}",
                self.clip_id,
                self.t_start,
                self.future.len()
            )));
        }
        if let Some(a) = self.agents.iter().find(|a| a.boxes.len() != T_FUT) {
            return Err(Error::Shape(format!(
                "{}@{}: agent {} has {} future boxes, expected {T_FUT}",
                self.clip_id,
                self.t_start,
                a.track_id,
                a.boxes.len()
            )));
        }
        Ok(())
    }

    pub fn key(&self) -> (String, usize) {
        (self.clip_id.clone(), self.t_start)
    }

    /// Replaces the agents' future boxes with forecasts keyed by track id.
    /// Agents without a forecast are dropped.
    pub fn with_agent_futures(&self, futures: &BTreeMap<u32, Vec<BBox>>) -> EgoSample {
        let agents = self
            .agents
            .iter()
            .filter_map(|a| {
                let f = futures.get(&a.track_id)?;
                Some(EgoAgent {
                    boxes: f.iter().copied().map(Some).collect(),
                    ..a.clone()
                })
            })
            .collect();
        EgoSample { agents, ..self.clone() }
    }
}

/// One sample per window. The agents are the window's prediction targets with
/// their ground-truth future boxes.
pub fn ego_samples(clips: &[Clip], stride: usize, source: ActionSource) -> Vec<EgoSample> {
    let per_clip = par::map(clips, |clip| {
        make_windows(clip, stride)
            .into_iter()
            .map(|w| {
                let t_last = w.t_last();
                let agents = w
                    .agents
                    .iter()
                    .filter_map(|&id| {
                        let track = clip.track(id)?;
                        let action = match source {
                            ActionSource::GroundTruth => track.action_at(t_last)?,
                            ActionSource::Predicted(model) => last_predicted(model, clip, id, &w)?,
                        };
                        Some(EgoAgent {
                            track_id: id,
                            action,
                            boxes: w.fut_frames().map(|t| track.box_at(t)).collect(),
                        })
                    })
                    .collect();
                EgoSample {
                    clip_id: clip.clip_id.clone(),
                    t_start: w.t_start,
                    ego_obs: w.obs_frames().map(|t| clip.ego[t]).collect(),
                    agents,
                    future: w.fut_frames().map(|t| clip.ego[t]).collect(),
                }
            })
            .collect::<Vec<_>>()
    });
    per_clip.into_iter().flatten().collect()
}

fn last_predicted(model: &ActionModel, clip: &Clip, id: u32, w: &crate::scene::Window) -> Option<ActionVector> {
    predict_actions(model, clip, id, w.obs_frames()).pop().flatten()
}
