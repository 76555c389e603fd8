use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::behavior::{BehaviorScript, LOOKAHEAD};
use super::{quantize, EgoProfile, GeneratorConfig};
use crate::scene::{AgentTrack, BBox};
use crate::taxonomy::AgentType;

/// Forward-facing pinhole camera mounted on the ego vehicle.
#[derive(Debug, Clone, Copy)]
pub struct Camera {
    pub focal_px: f64,
    pub width_px: f64,
    pub height_px: f64,
    /// Mounting height above ground, m.
    pub mount_height: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Camera {
            focal_px: 1440.0,
            width_px: 1920.0,
            height_px: 1200.0,
            mount_height: 1.4,
        }
    }
}

impl Camera {
    /// Projects an upright object standing at lateral offset `x` and depth `z`
    /// (ego frame, m) into a normalized box, if it is fully in view.
    pub fn project(&self, x: f64, z: f64, height: f64, width: f64) -> Option<BBox> {
        if z < 2.0 {
            return None;
        }
        let s = self.focal_px / z;
        let cu = 0.5 + s * x / self.width_px;
        let lu = s * width / self.width_px;
        let foot = 0.5 + s * self.mount_height / self.height_px;
        let lv = s * height / self.height_px;
        let cv = foot - lv / 2.0;
        if !(0.02..=0.98).contains(&cu) || foot > 1.0 || cv - lv / 2.0 < 0.0 {
            return None;
        }
        Some(BBox::new(cu, cv, lu, lv))
    }

    /// Smallest annotated box: 70x10 px for persons, 50x10 px for vehicles
    /// (height x width).
    pub fn large_enough(&self, b: &BBox, agent_type: AgentType) -> bool {
        let min_h = if agent_type.is_person() { 70.0 } else { 50.0 };
        b.lv * self.height_px >= min_h && b.lu * self.width_px >= 10.0
    }
}

#[derive(Debug, Clone)]
pub(crate) struct EgoTrajectory {
    /// `(x, y, heading)` per frame; heading 0 looks along +y, positive turns left.
    pub pose: Vec<(f64, f64, f64)>,
    pub speed: Vec<f64>,
    pub alpha: Vec<f64>,
    pub omega: Vec<f64>,
    pub braking: Vec<bool>,
}

/// World point in the ego frame at `pose`: `(lateral right, depth)`.
pub(crate) fn to_ego_frame(pose: (f64, f64, f64), p: [f64; 2]) -> (f64, f64) {
    let (ex, ey, th) = pose;
    let (dx, dy) = (p[0] - ex, p[1] - ey);
    let (s, c) = th.sin_cos();
    (dx * c + dy * s, -dx * s + dy * c)
}

fn crossing_in_corridor(profile: &EgoProfile, scripts: &[BehaviorScript], pose: (f64, f64, f64), t: usize) -> bool {
    scripts.iter().filter(|s| s.motion_model.is_crossing()).any(|s| {
        (t..=t + 10).filter_map(|f| s.world.get(f)).any(|p| {
            let (x, z) = to_ego_frame(pose, *p);
            x.abs() < profile.corridor_half_width && z > 0.0 && z < profile.corridor_depth
        })
    })
}

fn waiting_ahead(profile: &EgoProfile, scripts: &[BehaviorScript], pose: (f64, f64, f64), t: usize) -> bool {
    scripts.iter().any(|s| {
        let waiting = s.action_profile.get(t).is_some_and(|a| a.label(1) == "waiting to cross street");
        waiting
            && s.world.get(t).is_some_and(|p| {
                let (_, z) = to_ego_frame(pose, *p);
                z > 0.0 && z < profile.yield_depth
            })
    })
}

pub(crate) fn simulate_ego(
    profile: &EgoProfile,
    scripts: &[BehaviorScript],
    len: usize,
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> EgoTrajectory {
    let mut v = rng.random_range(profile.speed[0]..=profile.speed[1]);
    let mut pose = (0.0, 0.0, 0.0);
    let mut out = EgoTrajectory {
        pose: Vec::with_capacity(len),
        speed: Vec::with_capacity(len),
        alpha: Vec::with_capacity(len),
        omega: Vec::with_capacity(len),
        braking: Vec::with_capacity(len),
    };
    let mut seg_left = 0usize;
    let (mut cmd_alpha, mut cmd_omega) = (0.0, 0.0);
    for t in 0..len {
        if seg_left == 0 {
            seg_left = rng.random_range(profile.segment_frames[0]..=profile.segment_frames[1]);
            cmd_alpha = if profile.max_alpha > 0.0 {
                rng.random_range(-profile.max_alpha..=profile.max_alpha)
            } else {
                0.0
            };
            cmd_omega = if profile.max_omega > 0.0 && rng.random::<f64>() >= profile.straight_prob {
                let mag = rng.random_range(0.3..=1.0) * profile.max_omega;
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            } else {
                0.0
            };
        }
        seg_left -= 1;
        let brake = profile.brake_for_crossing && crossing_in_corridor(profile, scripts, pose, t);
        let alpha_cmd = if brake {
            -profile.brake_decel
        } else if profile.yield_decel > 0.0 && waiting_ahead(profile, scripts, pose, t) {
            cmd_alpha.min(-profile.yield_decel)
        } else {
            cmd_alpha
        };
        let v_next = (v + alpha_cmd * dt).clamp(0.0, profile.max_speed);
        let alpha = (v_next - v) / dt;
        out.pose.push(pose);
        out.speed.push(v);
        out.alpha.push(alpha);
        out.omega.push(cmd_omega);
        out.braking.push(brake);
        let th = pose.2 + cmd_omega * dt;
        pose = (pose.0 - v_next * dt * th.sin(), pose.1 + v_next * dt * th.cos(), th);
        v = v_next;
    }
    out
}

/// Projects a script through the ego trajectory. The track is the first
/// contiguous run of frames in which the agent is in view and large enough.
pub(crate) fn render_track(
    script: &BehaviorScript,
    ego: &EgoTrajectory,
    camera: &Camera,
    config: &GeneratorConfig,
    rng: &mut ChaCha8Rng,
) -> Option<AgentTrack> {
    let len = ego.pose.len();
    debug_assert!(script.world.len() >= len && script.world.len() <= len + LOOKAHEAD);
    let projected: Vec<Option<BBox>> = (0..len)
        .map(|t| {
            let (x, z) = to_ego_frame(ego.pose[t], script.world[t]);
            camera
                .project(x, z, script.size.0, script.size.1)
                .filter(|b| camera.large_enough(b, script.agent_type))
        })
        .collect();
    let first = projected.iter().position(|b| b.is_some())?;
    let run = projected[first..].iter().take_while(|b| b.is_some()).count();

    let noise = Normal::new(0.0, config.noise_sigma.max(0.0)).expect("finite sigma");
    let mut boxes: Vec<BBox> = projected[first..first + run]
        .iter()
        .map(|b| {
            let mut b = b.expect("inside run");
            if config.noise_sigma > 0.0 {
                b.cu = (b.cu + noise.sample(rng)).clamp(0.0, 1.0);
                b.cv = (b.cv + noise.sample(rng)).clamp(0.0, 1.0);
            }
            BBox::new(quantize(b.cu), quantize(b.cv), quantize(b.lu), quantize(b.lv))
        })
        .collect();
    let mut actions = script.action_profile[first..first + run].to_vec();
    let mut visible = vec![true; run];

    // The draw happens for every track so the stream stays aligned.
    let occlude = rng.random::<f64>() < config.occlusion_prob;
    let occ_start = rng.random_range(1..run.max(2));
    let occ_len = rng.random_range(1..=3usize);
    if occlude && run > 2 {
        for k in occ_start..(occ_start + occ_len).min(run) {
            visible[k] = false;
            boxes[k] = boxes[k - 1];
            actions[k] = actions[k - 1];
        }
    }

    Some(AgentTrack {
        track_id: script.track_id,
        agent_type: script.agent_type,
        age_group: script.age_group,
        first_frame: first,
        boxes,
        actions,
        visible,
    })
}
