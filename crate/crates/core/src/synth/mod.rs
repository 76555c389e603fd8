//! Procedural clips whose future motion follows their action labels.
//!
//! Agents move in a flat world frame; the ego vehicle drives through it under
//! piecewise-constant acceleration and yaw-rate commands and a pinhole camera
//! projects every agent into normalized image boxes. Labels are emitted from
//! the same script that drives the motion, so they never disagree with it.

mod behavior;
mod corpus;
mod features;
mod world;

pub use behavior::{BehaviorScript, MotionModel};
pub use corpus::{generate_corpus, split_sizes, CorpusManifest, Split};
pub use features::{action_features, ACTION_FEATURE_DIM};
pub use world::Camera;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{Clip, EgoState, IMAGE_HEIGHT, IMAGE_WIDTH, WINDOW_LEN};

/// Relative frequency of each behavior among spawned agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BehaviorMixture {
    pub stationary: f64,
    pub constant_velocity: f64,
    pub crossing: f64,
    pub wait_then_cross: f64,
    pub approach_vehicle: f64,
    pub curve: f64,
}

impl Default for BehaviorMixture {
    fn default() -> Self {
        BehaviorMixture {
            stationary: 0.2,
            constant_velocity: 0.2,
            crossing: 0.15,
            wait_then_cross: 0.2,
            approach_vehicle: 0.15,
            curve: 0.1,
        }
    }
}

impl BehaviorMixture {
    pub fn weights(&self) -> [f64; 6] {
        [
            self.stationary,
            self.constant_velocity,
            self.crossing,
            self.wait_then_cross,
            self.approach_vehicle,
            self.curve,
        ]
    }

    pub fn only(model: usize) -> Self {
        let mut w = [0.0; 6];
        w[model] = 1.0;
        BehaviorMixture {
            stationary: w[0],
            constant_velocity: w[1],
            crossing: w[2],
            wait_then_cross: w[3],
            approach_vehicle: w[4],
            curve: w[5],
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let w = self.weights();
        let total: f64 = w.iter().sum();
        let mut x = rng.random::<f64>() * total;
        for (k, wk) in w.iter().enumerate() {
            if x < *wk {
                return k;
            }
            x -= wk;
        }
        w.iter().rposition(|v| *v > 0.0).unwrap_or(0)
    }
}

/// Whether past kinematics alone can tell agents with different futures apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Standing and waiting-to-cross pedestrians share curbside positions, so
    /// only the labels separate their futures.
    ActionDetermined,
    /// Standing pedestrians keep to the building side, away from the curb.
    KinematicsDetermined,
}

/// Ego command profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EgoProfile {
    /// Initial speed range, m/s.
    pub speed: [f64; 2],
    pub max_speed: f64,
    /// Largest commanded |acceleration| per segment, m/s^2.
    pub max_alpha: f64,
    /// Largest commanded |yaw rate| per segment, rad/s.
    pub max_omega: f64,
    /// Probability that a segment drives straight (omega = 0).
    pub straight_prob: f64,
    /// Segment length range in frames.
    pub segment_frames: [usize; 2],
    pub brake_for_crossing: bool,
    /// Deceleration applied by the brake rule, m/s^2 (positive number).
    pub brake_decel: f64,
    /// Deceleration while a pedestrian waiting to cross stands less than
    /// `yield_depth` ahead, m/s^2. 0 disables yielding.
    pub yield_decel: f64,
    /// m.
    pub yield_depth: f64,
    /// Half-width of the ego path corridor, m.
    pub corridor_half_width: f64,
    /// Corridor depth, m.
    pub corridor_depth: f64,
}

impl Default for EgoProfile {
    fn default() -> Self {
        EgoProfile {
            speed: [2.0, 6.0],
            max_speed: 10.0,
            max_alpha: 1.0,
            max_omega: 0.15,
            straight_prob: 0.5,
            segment_frames: [15, 40],
            brake_for_crossing: true,
            brake_decel: 2.5,
            yield_decel: 2.5,
            yield_depth: 15.0,
            corridor_half_width: 1.5,
            corridor_depth: 25.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub num_clips: usize,
    /// Inclusive range of agents spawned per clip.
    pub agents_per_clip: [usize; 2],
    pub clip_length: usize,
    pub fps: f64,
    /// Standard deviation of center jitter, normalized image units.
    pub noise_sigma: f64,
    /// Probability that an agent has one short occlusion.
    pub occlusion_prob: f64,
    pub regime: Regime,
    pub mixture: BehaviorMixture,
    pub ego: EgoProfile,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            num_clips: 70,
            agents_per_clip: [3, 6],
            clip_length: 60,
            fps: 10.0,
            noise_sigma: 0.002,
            occlusion_prob: 0.05,
            regime: Regime::ActionDetermined,
            mixture: BehaviorMixture::default(),
            ego: EgoProfile::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let w = self.mixture.weights();
        if w.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            errs.push("mixture: weights must be non-negative".to_string());
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            errs.push(format!("mixture: weights must sum to 1, got {total}"));
        }
        if self.clip_length < WINDOW_LEN {
            errs.push(format!("clip_length: must be at least {WINDOW_LEN}, got {}", self.clip_length));
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            errs.push("noise_sigma: must be non-negative".into());
        }
        if self.agents_per_clip[0] > self.agents_per_clip[1] {
            errs.push("agents_per_clip: min exceeds max".into());
        }
        if !(self.fps > 0.0) {
            errs.push("fps: must be positive".into());
        }
        if self.ego.speed[0] > self.ego.speed[1] || self.ego.speed[0] < 0.0 {
            errs.push("ego.speed: invalid range".into());
        }
        if self.ego.segment_frames[0] == 0 || self.ego.segment_frames[0] > self.ego.segment_frames[1] {
            errs.push("ego.segment_frames: invalid range".into());
        }
        if !(0.0..=1.0).contains(&self.occlusion_prob) {
            errs.push("occlusion_prob: must lie in [0, 1]".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Parses a TOML generator config; unspecified keys take defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: GeneratorConfig = toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A generated clip together with the scripts that produced each track.
#[derive(Debug, Clone)]
pub struct Scene {
    pub clip: Clip,
    /// One script per emitted track, aligned with `clip.agents`.
    pub scripts: Vec<BehaviorScript>,
    /// Ego speed per frame, m/s.
    pub ego_speed: Vec<f64>,
    /// Frames on which the brake rule was active.
    pub braking: Vec<bool>,
}

fn clip_rng(seed: u64, index: usize) -> ChaCha8Rng {
    use rand::SeedableRng;
    // Distinct, well-mixed stream per (seed, index).
    let mut s = seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index as u64 + 1);
    s = (s ^ (s >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    s = (s ^ (s >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ChaCha8Rng::seed_from_u64(s ^ (s >> 31))
}

pub(crate) fn quantize(x: f64) -> f64 {
    let q = (x * 1e6).round() / 1e6;
    if q == 0.0 {
        0.0
    } else {
        q
    }
}

pub fn clip_id(index: usize) -> String {
    format!("clip_{index:05}")
}

/// Generates clip `index`; a pure function of `(config, index)`.
pub fn generate_clip(config: &GeneratorConfig, index: usize) -> Clip {
    generate_scene(config, index).clip
}

/// Like [`generate_clip`] but also returns the behavior scripts.
pub fn generate_scene(config: &GeneratorConfig, index: usize) -> Scene {
    let mut rng = clip_rng(config.seed, index);
    let len = config.clip_length;
    let dt = 1.0 / config.fps;
    let camera = Camera::default();

    let n_agents = rng.random_range(config.agents_per_clip[0]..=config.agents_per_clip[1]);
    let mut scripts = behavior::spawn_agents(config, n_agents, len, dt, &mut rng);

    let ego = world::simulate_ego(&config.ego, &scripts, len, dt, &mut rng);

    let mut agents = Vec::new();
    let mut kept = Vec::new();
    for script in scripts.drain(..) {
        if let Some(track) = world::render_track(&script, &ego, &camera, config, &mut rng) {
            agents.push(track);
            kept.push(script);
        }
    }
    let clip = Clip {
        clip_id: clip_id(index),
        fps: config.fps,
        image_width: IMAGE_WIDTH,
        image_height: IMAGE_HEIGHT,
        agents,
        ego: ego
            .alpha
            .iter()
            .zip(&ego.omega)
            .map(|(a, w)| EgoState {
                alpha: quantize(*a),
                omega: quantize(*w),
            })
            .collect(),
    };
    debug_assert!(clip.validate().is_ok());
    Scene {
        clip,
        scripts: kept,
        ego_speed: ego.speed,
        braking: ego.braking,
    }
}
