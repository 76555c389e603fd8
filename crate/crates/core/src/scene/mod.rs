//! Clip data model: boxes, action vectors, agent tracks and ego odometry.

mod io;
mod window;

pub use io::{format_clip, load_clip, parse_clip, save_clip};
pub use window::{make_windows, window_count, Window, T_FUT, T_OBS, WINDOW_LEN};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::{self, AgeGroup, AgentType, NUM_SETS};

pub const IMAGE_WIDTH: u32 = 1920;
pub const IMAGE_HEIGHT: u32 = 1200;

/// Bounding box in normalized image coordinates: center and size.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BBox {
    pub cu: f64,
    pub cv: f64,
    pub lu: f64,
    pub lv: f64,
}

impl BBox {
    pub const fn new(cu: f64, cv: f64, lu: f64, lv: f64) -> Self {
        BBox { cu, cv, lu, lv }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.cu, self.cv, self.lu, self.lv]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        BBox::new(v[0], v[1], v[2], v[3])
    }

    pub fn center(self) -> (f64, f64) {
        (self.cu, self.cv)
    }

    pub fn is_finite(self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// `(u_min, v_min, u_max, v_max)`.
    pub fn corners(self) -> (f64, f64, f64, f64) {
        (
            self.cu - self.lu / 2.0,
            self.cv - self.lv / 2.0,
            self.cu + self.lu / 2.0,
            self.cv + self.lv / 2.0,
        )
    }
}

/// Pixel-space box `(center_x, center_y, width, height)`.
pub type PixelBox = [f64; 4];

pub fn normalize_box(px: PixelBox, width: f64, height: f64) -> BBox {
    BBox::new(px[0] / width, px[1] / height, px[2] / width, px[3] / height)
}

pub fn denormalize_box(b: BBox, width: f64, height: f64) -> PixelBox {
    [b.cu * width, b.cv * height, b.lu * width, b.lv * height]
}

/// One class index per label set, in head order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionVector(pub [u8; NUM_SETS]);

impl ActionVector {
    /// All sets at `none`.
    pub fn none() -> Self {
        let mut labels = [0u8; NUM_SETS];
        for (set, l) in labels.iter_mut().enumerate() {
            *l = taxonomy::none_index(set) as u8;
        }
        ActionVector(labels)
    }

    pub fn get(&self, set: usize) -> usize {
        self.0[set] as usize
    }

    pub fn set(&mut self, set: usize, class: usize) {
        self.0[set] = class as u8;
    }

    pub fn with(mut self, set: usize, name: &str) -> Self {
        self.set(set, taxonomy::idx(set, name));
        self
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        for set in 0..NUM_SETS {
            let c = taxonomy::cardinality(set);
            if self.get(set) >= c {
                return Err(format!(
                    "action index {} out of range for set `{}` (cardinality {c})",
                    self.get(set),
                    taxonomy::SET_NAMES[set]
                ));
            }
        }
        Ok(())
    }

    /// Each index divided by `cardinality - 1`, giving 8 values in `[0, 1]`.
    pub fn normalized(&self) -> [f64; NUM_SETS] {
        let mut out = [0.0; NUM_SETS];
        for (set, o) in out.iter_mut().enumerate() {
            *o = self.get(set) as f64 / (taxonomy::cardinality(set) - 1) as f64;
        }
        out
    }

    pub fn label(&self, set: usize) -> &'static str {
        taxonomy::SETS[set][self.get(set)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrack {
    pub track_id: u32,
    pub agent_type: AgentType,
    pub age_group: Option<AgeGroup>,
    /// Frame index of the first entry in the per-frame vectors.
    pub first_frame: usize,
    pub boxes: Vec<BBox>,
    pub actions: Vec<ActionVector>,
    pub visible: Vec<bool>,
}

impl AgentTrack {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// One past the last frame.
    pub fn end_frame(&self) -> usize {
        self.first_frame + self.boxes.len()
    }

    pub fn present_at(&self, t: usize) -> bool {
        t >= self.first_frame && t < self.end_frame()
    }

    pub fn box_at(&self, t: usize) -> Option<BBox> {
        self.present_at(t).then(|| self.boxes[t - self.first_frame])
    }

    pub fn action_at(&self, t: usize) -> Option<ActionVector> {
        self.present_at(t).then(|| self.actions[t - self.first_frame])
    }

    pub fn visible_at(&self, t: usize) -> bool {
        self.present_at(t) && self.visible[t - self.first_frame]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EgoState {
    /// Longitudinal acceleration, m/s^2.
    pub alpha: f64,
    /// Yaw rate, rad/s.
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clip {
    pub clip_id: String,
    pub fps: f64,
    pub image_width: u32,
    pub image_height: u32,
    pub agents: Vec<AgentTrack>,
    pub ego: Vec<EgoState>,
}

impl Clip {
    pub fn num_frames(&self) -> usize {
        self.ego.len()
    }

    pub fn track(&self, track_id: u32) -> Option<&AgentTrack> {
        self.agents.iter().find(|a| a.track_id == track_id)
    }

    /// Checks every structural invariant of the clip.
    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::validation(None, None, format!("fps must be positive, got {}", self.fps)));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::validation(None, None, "image dimensions must be positive"));
        }
        let n = self.num_frames();
        for (t, e) in self.ego.iter().enumerate() {
            if !(e.alpha.is_finite() && e.omega.is_finite()) {
                return Err(Error::validation(None, Some(t), "non-finite ego state"));
            }
        }
        let mut ids = std::collections::BTreeSet::new();
        for a in &self.agents {
            let id = Some(a.track_id);
            if !ids.insert(a.track_id) {
                return Err(Error::validation(id, None, "duplicate track_id"));
            }
            if a.boxes.len() != a.actions.len() || a.boxes.len() != a.visible.len() {
                return Err(Error::validation(id, None, "boxes, actions and visibility differ in length"));
            }
            if a.end_frame() > n {
                return Err(Error::validation(
                    id,
                    Some(a.end_frame() - 1),
                    format!("track extends past clip length {n}"),
                ));
            }
            for (k, (b, act)) in a.boxes.iter().zip(&a.actions).enumerate() {
                let frame = Some(a.first_frame + k);
                if !b.is_finite() {
                    return Err(Error::validation(id, frame, "non-finite box"));
                }
                if b.lu < 0.0 || b.lv < 0.0 {
                    return Err(Error::validation(id, frame, "negative box dimension"));
                }
                act.validate().map_err(|m| Error::validation(id, frame, m))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_reference_box() {
        let b = normalize_box([960.0, 600.0, 192.0, 120.0], 1920.0, 1200.0);
        assert_eq!(b, BBox::new(0.5, 0.5, 0.1, 0.1));
        assert_eq!(normalize_box([0.0; 4], 1920.0, 1200.0), BBox::default());
    }

    #[test]
    fn none_vector_normalizes_to_one() {
        assert_eq!(ActionVector::none().normalized(), [1.0; NUM_SETS]);
        let a = ActionVector::none().with(0, "standing");
        assert_eq!(a.normalized()[0], 0.0);
        assert_eq!(a.label(0), "standing");
    }

    #[test]
    fn out_of_range_action_is_rejected() {
        let mut a = ActionVector::none();
        a.0[6] = 3;
        assert!(a.validate().is_err());
    }

    proptest! {
        #[test]
        fn box_normalization_roundtrip(
            cx in 0.0..1920.0f64, cy in 0.0..1200.0f64,
            w in 0.0..1920.0f64, h in 0.0..1200.0f64,
        ) {
            let px = [cx, cy, w, h];
            let back = denormalize_box(normalize_box(px, 1920.0, 1200.0), 1920.0, 1200.0);
            for k in 0..4 {
                prop_assert!((back[k] - px[k]).abs() < 1e-9);
            }
        }
    }
}
