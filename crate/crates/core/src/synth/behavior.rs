use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GeneratorConfig, Regime};
use crate::scene::ActionVector;
use crate::taxonomy::{AgeGroup, AgentType};

/// Frames simulated past the clip end, so the brake rule can look ahead.
pub(crate) const LOOKAHEAD: usize = 11;

/// Curb offset from the road center line, m.
const CURB: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MotionModel {
    Stationary,
    ConstantVelocity,
    /// Walks along the sidewalk, turns onto the road at `turn_frame`.
    Crossing { turn_frame: usize },
    /// Waits at the curb for `dwell` frames, then crosses.
    WaitThenCross { dwell: usize },
    /// Waits `dwell` frames, then walks to the paired vehicle and stops there.
    ApproachVehicle { dwell: usize },
    /// Drives straight, then turns at a constant rate from `start`.
    Curve { start: usize, turn_rate: f64 },
}

impl MotionModel {
    pub fn name(&self) -> &'static str {
        match self {
            MotionModel::Stationary => "stationary",
            MotionModel::ConstantVelocity => "constant_velocity",
            MotionModel::Crossing { .. } => "crossing",
            MotionModel::WaitThenCross { .. } => "wait_then_cross",
            MotionModel::ApproachVehicle { .. } => "approach_vehicle",
            MotionModel::Curve { .. } => "curve",
        }
    }

    /// Behaviors that take the agent across the ego path.
    pub fn is_crossing(&self) -> bool {
        matches!(self, MotionModel::Crossing { .. } | MotionModel::WaitThenCross { .. })
    }
}

/// The scripted behavior of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorScript {
    pub track_id: u32,
    pub agent_type: AgentType,
    pub age_group: Option<AgeGroup>,
    pub motion_model: MotionModel,
    pub noise_sigma: f64,
    pub pair_target: Option<u32>,
    /// Per-frame action labels (clip length plus lookahead).
    pub action_profile: Vec<ActionVector>,
    /// Per-frame world position `(x lateral, y forward)`, m.
    pub world: Vec<[f64; 2]>,
    /// Physical `(height, width)`, m.
    pub size: (f64, f64),
}

fn sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

fn person_base(rng: &mut ChaCha8Rng) -> (ActionVector, AgeGroup, (f64, f64)) {
    let u: f64 = rng.random();
    let (age, height) = if u < 0.1 {
        (AgeGroup::Child, 1.2)
    } else if u < 0.85 {
        (AgeGroup::Adult, 1.7)
    } else {
        (AgeGroup::Senior, 1.6)
    };
    let mut a = ActionVector::none();
    // Communicative and transportive labels do not influence motion.
    if rng.random::<f64>() < 0.3 {
        a.set(3, rng.random_range(0..3));
    }
    if rng.random::<f64>() < 0.2 {
        a.set(4, rng.random_range(0..3));
    }
    (a, age, (height, 0.55))
}

fn vehicle_base(agent_type: AgentType, motion: &str) -> (ActionVector, (f64, f64)) {
    let mut a = ActionVector::none().with(5, motion);
    if agent_type == AgentType::Vehicle4Wheel {
        a = a.with(6, "closed").with(7, "closed");
        (a, (1.5, 1.8))
    } else {
        (a, (1.5, 0.8))
    }
}

struct Builder<'a> {
    config: &'a GeneratorConfig,
    frames: usize,
    dt: f64,
    next_id: u32,
}

impl Builder<'_> {
    fn id(&mut self) -> u32 {
        self.next_id += 1;
        self.next_id
    }

    fn script(
        &mut self,
        agent_type: AgentType,
        age_group: Option<AgeGroup>,
        motion_model: MotionModel,
        world: Vec<[f64; 2]>,
        action_profile: Vec<ActionVector>,
        size: (f64, f64),
    ) -> BehaviorScript {
        BehaviorScript {
            track_id: self.id(),
            agent_type,
            age_group,
            motion_model,
            noise_sigma: self.config.noise_sigma,
            pair_target: None,
            action_profile,
            world,
            size,
        }
    }

    fn stationary(&mut self, rng: &mut ChaCha8Rng) -> BehaviorScript {
        let side = sign(rng);
        let y = rng.random_range(10.0..34.0);
        if rng.random::<f64>() < 0.3 {
            let (a, size) = vehicle_base(AgentType::Vehicle4Wheel, "parked");
            let world = vec![[side * 4.0, y]; self.frames];
            return self.script(AgentType::Vehicle4Wheel, None, MotionModel::Stationary, world, vec![a; self.frames], size);
        }
        let (base, age, size) = person_base(rng);
        let x = match self.config.regime {
            Regime::ActionDetermined => rng.random_range(CURB - 0.2..CURB + 0.4),
            Regime::KinematicsDetermined => rng.random_range(6.8..7.6),
        };
        let a = base.with(0, "standing");
        let world = vec![[side * x, y]; self.frames];
        self.script(AgentType::Person, Some(age), MotionModel::Stationary, world, vec![a; self.frames], size)
    }

    fn constant_velocity(&mut self, rng: &mut ChaCha8Rng) -> BehaviorScript {
        let y0 = rng.random_range(10.0..34.0);
        let u: f64 = rng.random();
        if u < 0.6 {
            let side = sign(rng);
            let x = side * rng.random_range(5.5..7.5);
            let vy = sign(rng) * rng.random_range(1.0..1.6);
            let (base, age, size) = person_base(rng);
            let a = base.with(0, "walking").with(1, "walking along the side of the road");
            let world = (0..self.frames).map(|f| [x, y0 + vy * self.dt * f as f64]).collect();
            self.script(AgentType::Person, Some(age), MotionModel::ConstantVelocity, world, vec![a; self.frames], size)
        } else {
            // Oncoming car or a motorbike keeping to the left edge.
            let (t, x, vy) = if u < 0.8 {
                (AgentType::Vehicle4Wheel, 3.5, -rng.random_range(2.0..5.0))
            } else {
                (AgentType::Vehicle2Wheel, -3.0, rng.random_range(1.0..3.0))
            };
            let (a, size) = vehicle_base(t, "moving");
            let world = (0..self.frames).map(|f| [x, y0 + vy * self.dt * f as f64]).collect();
            self.script(t, None, MotionModel::ConstantVelocity, world, vec![a; self.frames], size)
        }
    }

    /// Lateral crossing from the current curb to the far one.
    fn cross_from(
        &self,
        start: [f64; 2],
        side: f64,
        speed: f64,
        base: ActionVector,
        crossing_label: &str,
        from: usize,
        world: &mut [[f64; 2]],
        actions: &mut [ActionVector],
    ) {
        let mut p = start;
        let mut crossing = true;
        for f in from..self.frames {
            world[f] = p;
            actions[f] = if crossing {
                base.with(0, "walking").with(1, crossing_label)
            } else {
                base.with(0, "walking").with(1, "walking along the side of the road")
            };
            if crossing {
                p[0] -= side * speed * self.dt;
                if p[0] * side < -(CURB + 0.5) {
                    crossing = false;
                }
            } else {
                p[1] += speed * self.dt;
            }
        }
    }

    fn crossing(&mut self, rng: &mut ChaCha8Rng) -> BehaviorScript {
        let len = self.config.clip_length;
        let side = sign(rng);
        let x = side * rng.random_range(5.5..6.5);
        let y0 = rng.random_range(12.0..30.0);
        let vy = sign(rng) * rng.random_range(1.0..1.5);
        let speed = rng.random_range(1.2..1.6);
        let turn_frame = rng.random_range(5..len.saturating_sub(5).max(6));
        let (base, age, size) = person_base(rng);
        let label = if rng.random::<f64>() < 0.5 {
            "crossing at pedestrian crossing"
        } else {
            "jaywalking"
        };
        let mut world = vec![[0.0; 2]; self.frames];
        let mut actions = vec![base; self.frames];
        for f in 0..turn_frame.min(self.frames) {
            world[f] = [x, y0 + vy * self.dt * f as f64];
            actions[f] = base.with(0, "walking").with(1, "walking along the side of the road");
        }
        let start = [x, y0 + vy * self.dt * turn_frame as f64];
        self.cross_from(start, side, speed, base, label, turn_frame, &mut world, &mut actions);
        self.script(
            AgentType::Person,
            Some(age),
            MotionModel::Crossing { turn_frame },
            world,
            actions,
            size,
        )
    }

    fn wait_then_cross(&mut self, rng: &mut ChaCha8Rng) -> BehaviorScript {
        let len = self.config.clip_length;
        let side = sign(rng);
        let x = side * rng.random_range(CURB - 0.2..CURB + 0.4);
        let y = rng.random_range(10.0..30.0);
        let speed = rng.random_range(1.2..1.6);
        let dwell = rng.random_range(5..len.saturating_sub(5).clamp(6, 21));
        let (base, age, size) = person_base(rng);
        let mut world = vec![[x, y]; self.frames];
        let mut actions = vec![base.with(0, "standing").with(1, "waiting to cross street"); self.frames];
        self.cross_from([x, y], side, speed, base, "crossing at pedestrian crossing", dwell, &mut world, &mut actions);
        self.script(
            AgentType::Person,
            Some(age),
            MotionModel::WaitThenCross { dwell },
            world,
            actions,
            size,
        )
    }

    fn approach_vehicle(&mut self, rng: &mut ChaCha8Rng) -> [BehaviorScript; 2] {
        let len = self.config.clip_length;
        let side = sign(rng);
        let vy = rng.random_range(12.0..30.0);
        let (mut car_action, car_size) = vehicle_base(AgentType::Vehicle4Wheel, "parked");
        let door = [side * CURB, vy];
        let start = [side * rng.random_range(5.5..7.5), vy + sign(rng) * rng.random_range(3.0..7.0)];
        let speed = rng.random_range(1.1..1.5);
        let dwell = rng.random_range(3..len.saturating_sub(10).clamp(4, 16));
        let (base, age, size) = person_base(rng);

        let mut world = vec![start; self.frames];
        // The activity label covers the whole approach, including the dwell.
        let mut actions = vec![base.with(0, "standing").with(2, "getting in 4 wheel vehicle"); self.frames];
        let mut arrival = self.frames;
        let mut p = start;
        for f in dwell..self.frames {
            let d = [door[0] - p[0], door[1] - p[1]];
            let dist = (d[0] * d[0] + d[1] * d[1]).sqrt();
            world[f] = p;
            if dist < 1e-9 {
                arrival = arrival.min(f);
                actions[f] = base.with(0, "standing").with(2, "getting in 4 wheel vehicle");
                continue;
            }
            actions[f] = base.with(0, "walking").with(2, "getting in 4 wheel vehicle");
            let step = speed * self.dt;
            if step >= dist {
                p = door;
            } else {
                p = [p[0] + d[0] / dist * step, p[1] + d[1] / dist * step];
            }
        }
        let car_world = vec![[side * 4.0, vy]; self.frames];
        let mut car_actions = vec![car_action; self.frames];
        car_action = car_action.with(7, "open");
        for a in car_actions.iter_mut().skip(arrival) {
            *a = car_action;
        }
        let car = self.script(
            AgentType::Vehicle4Wheel,
            None,
            MotionModel::Stationary,
            car_world,
            car_actions,
            car_size,
        );
        let mut person = self.script(
            AgentType::Person,
            Some(age),
            MotionModel::ApproachVehicle { dwell },
            world,
            actions,
            size,
        );
        person.pair_target = Some(car.track_id);
        [car, person]
    }

    fn curve(&mut self, rng: &mut ChaCha8Rng) -> BehaviorScript {
        let len = self.config.clip_length;
        let t = if rng.random::<f64>() < 0.7 {
            AgentType::Vehicle4Wheel
        } else {
            AgentType::Vehicle2Wheel
        };
        let (a, size) = vehicle_base(t, "moving");
        let mut p = [rng.random_range(-0.5..0.5), rng.random_range(14.0..30.0)];
        let speed = rng.random_range(2.0..5.0);
        let start = rng.random_range(0..len.saturating_sub(10).max(1));
        let turn_rate = sign(rng) * rng.random_range(0.2..0.4);
        let mut heading: f64 = 0.0;
        let mut world = Vec::with_capacity(self.frames);
        for f in 0..self.frames {
            world.push(p);
            if f >= start {
                heading += turn_rate * self.dt;
            }
            p = [p[0] + speed * self.dt * heading.sin(), p[1] + speed * self.dt * heading.cos()];
        }
        self.script(t, None, MotionModel::Curve { start, turn_rate }, world, vec![a; self.frames], size)
    }
}

/// Spawns `n` agents (an approach-vehicle pair counts as two).
pub(crate) fn spawn_agents(
    config: &GeneratorConfig,
    n: usize,
    len: usize,
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<BehaviorScript> {
    let mut b = Builder {
        config,
        frames: len + LOOKAHEAD,
        dt,
        next_id: 0,
    };
    let mut out = Vec::new();
    while out.len() < n {
        match config.mixture.sample(rng) {
            0 => out.push(b.stationary(rng)),
            1 => out.push(b.constant_velocity(rng)),
            2 => out.push(b.crossing(rng)),
            3 => out.push(b.wait_then_cross(rng)),
            4 => out.extend(b.approach_vehicle(rng)),
            _ => out.push(b.curve(rng)),
        }
    }
    out
}
