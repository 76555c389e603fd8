use super::Clip;

/// Observation steps (1 s at 10 Hz).
pub const T_OBS: usize = 10;
/// Prediction steps (2 s at 10 Hz).
pub const T_FUT: usize = 20;
pub const WINDOW_LEN: usize = T_OBS + T_FUT;

/// A 10 + 20 frame slice of a clip.
#[derive(Debug, Clone)]
pub struct Window<'a> {
    pub clip: &'a Clip,
    pub t_start: usize,
    /// Prediction targets: visible on every observation frame and present on
    /// every future frame. Sorted by track id.
    pub agents: Vec<u32>,
    /// Tracks present during observation that are not targets (occluded on some
    /// frame or leaving early). They still act as interaction partners.
    pub context: Vec<u32>,
}

impl<'a> Window<'a> {
    pub fn obs_frames(&self) -> std::ops::Range<usize> {
        self.t_start..self.t_start + T_OBS
    }

    pub fn fut_frames(&self) -> std::ops::Range<usize> {
        self.t_start + T_OBS..self.t_start + WINDOW_LEN
    }

    /// Last observed frame.
    pub fn t_last(&self) -> usize {
        self.t_start + T_OBS - 1
    }

    /// Targets and context together, sorted by track id.
    pub fn all_agents(&self) -> Vec<u32> {
        let mut all: Vec<u32> = self.agents.iter().chain(&self.context).copied().collect();
        all.sort_unstable();
        all
    }
}

/// Number of windows for a clip of `len` frames at `stride`.
pub fn window_count(len: usize, stride: usize) -> usize {
    if len < WINDOW_LEN || stride == 0 {
        0
    } else {
        (len - WINDOW_LEN) / stride + 1
    }
}

/// Slides a 30-frame window over the clip. Clips shorter than 30 frames give
/// no windows.
pub fn make_windows(clip: &Clip, stride: usize) -> Vec<Window<'_>> {
    assert!(stride >= 1, "stride must be at least 1");
    let n = window_count(clip.num_frames(), stride);
    (0..n)
        .map(|k| {
            let t_start = k * stride;
            let obs = t_start..t_start + T_OBS;
            let end = t_start + WINDOW_LEN;
            let mut agents = Vec::new();
            let mut context = Vec::new();
            for a in &clip.agents {
                if !obs.clone().any(|t| a.present_at(t)) {
                    continue;
                }
                let full = obs.clone().all(|t| a.visible_at(t)) && a.end_frame() >= end;
                if full {
                    agents.push(a.track_id);
                } else {
                    context.push(a.track_id);
                }
            }
            agents.sort_unstable();
            context.sort_unstable();
            Window {
                clip,
                t_start,
                agents,
                context,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{ActionVector, AgentTrack, BBox, EgoState};
    use crate::taxonomy::AgentType;

    fn clip(len: usize) -> Clip {
        Clip {
            clip_id: "w".into(),
            fps: 10.0,
            image_width: 1920,
            image_height: 1200,
            agents: vec![],
            ego: vec![EgoState::default(); len],
        }
    }

    fn track(id: u32, first: usize, len: usize) -> AgentTrack {
        AgentTrack {
            track_id: id,
            agent_type: AgentType::Person,
            age_group: None,
            first_frame: first,
            boxes: vec![BBox::new(0.5, 0.5, 0.1, 0.1); len],
            actions: vec![ActionVector::none(); len],
            visible: vec![true; len],
        }
    }

    #[test]
    fn window_counts() {
        assert_eq!(make_windows(&clip(30), 1).len(), 1);
        let c = clip(40);
        let w = make_windows(&c, 10);
        assert_eq!(w.iter().map(|w| w.t_start).collect::<Vec<_>>(), vec![0, 10]);
        assert!(make_windows(&clip(29), 1).is_empty());
        for len in 0..80 {
            for stride in 1..12 {
                assert_eq!(make_windows(&clip(len), stride).len(), window_count(len, stride));
                let expected = if len >= 30 { (len - 30) / stride + 1 } else { 0 };
                assert_eq!(window_count(len, stride), expected);
            }
        }
    }

    #[test]
    fn occluded_and_short_tracks_become_context() {
        let mut c = clip(30);
        let mut occluded = track(2, 0, 30);
        occluded.visible[4] = false;
        c.agents = vec![track(3, 0, 30), occluded, track(1, 0, 20), track(4, 12, 18)];
        let w = &make_windows(&c, 1)[0];
        assert_eq!(w.agents, vec![3]);
        assert_eq!(w.context, vec![1, 2]);
        assert_eq!(w.all_agents(), vec![1, 2, 3]);
    }
}
