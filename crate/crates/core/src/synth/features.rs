use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::scene::Clip;
use crate::taxonomy::{CARDINALITIES, NUM_SETS};

const LABEL_CHANNELS: usize = 48;

/// Box (4) + box velocity (4) + noisy one-hot label evidence (48).
pub const ACTION_FEATURE_DIM: usize = 8 + LABEL_CHANNELS;

/// Standard deviation of the label-evidence noise.
pub const FEATURE_NOISE: f64 = 0.8;

fn frame_seed(clip_id: &str, track_id: u32, t: usize) -> u64 {
    // FNV-1a over the clip id, then mix in track and frame.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in clip_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^= (track_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    h = h.rotate_left(17).wrapping_mul(0x0100_0000_01b3);
    h ^= (t as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h
}

/// Per-frame feature vector standing in for an appearance backbone: box
/// kinematics plus behavior-correlated evidence channels. Deterministic in
/// `(clip_id, track_id, t)`. Returns `None` if the track is absent at `t`.
pub fn action_features(clip: &Clip, track_id: u32, t: usize) -> Option<Vec<f64>> {
    let track = clip.track(track_id)?;
    let b = track.box_at(t)?;
    let prev = if t > track.first_frame {
        track.box_at(t - 1).unwrap_or(b)
    } else {
        b
    };
    let action = track.action_at(t)?;
    let mut f = Vec::with_capacity(ACTION_FEATURE_DIM);
    f.extend(b.to_array());
    f.extend(
        b.to_array()
            .iter()
            .zip(prev.to_array())
            .map(|(now, before)| 10.0 * (now - before)),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(&clip.clip_id, track_id, t));
    let noise = Normal::new(0.0, FEATURE_NOISE).expect("finite sigma");
    for set in 0..NUM_SETS {
        for class in 0..CARDINALITIES[set] {
            let on = if action.get(set) == class { 1.0 } else { 0.0 };
            f.push(on + noise.sample(&mut rng));
        }
    }
    debug_assert_eq!(f.len(), ACTION_FEATURE_DIM);
    Some(f)
}
