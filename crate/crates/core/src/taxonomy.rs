//! The fixed hierarchical action taxonomy.
//!
//! Eight mutually exclusive label sets: five for persons and three for
//! vehicles. Every set ends with a `none` class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_SETS: usize = 8;
pub const PERSON_SETS: std::ops::Range<usize> = 0..5;
pub const VEHICLE_SETS: std::ops::Range<usize> = 5..8;

pub const ATOMIC: &[&str] = &[
    "standing",
    "running",
    "bending",
    "kneeling",
    "walking",
    "sitting",
    "squatting",
    "jumping",
    "laying down",
    "none",
];

pub const SIMPLE_CONTEXTUAL: &[&str] = &[
    "crossing at pedestrian crossing",
    "jaywalking",
    "waiting to cross street",
    "motorcycling",
    "biking",
    "walking along the side of the road",
    "walking on the road",
    "cleaning",
    "closing",
    "opening",
    "exiting a building",
    "entering a building",
    "none",
];

pub const COMPLEX_CONTEXTUAL: &[&str] = &[
    "unloading",
    "loading",
    "getting in 4 wheel vehicle",
    "getting out of 4 wheel vehicle",
    "getting on 2 wheel vehicle",
    "getting off 2 wheel vehicle",
    "none",
];

pub const COMMUNICATIVE: &[&str] = &["looking at phone", "talking on phone", "talking in group", "none"];

pub const TRANSPORTIVE: &[&str] = &["pushing", "carrying with both hands", "pulling", "none"];

pub const MOTION_STATUS: &[&str] = &["stopped", "moving", "parked", "none"];

pub const TRUNK_STATUS: &[&str] = &["open", "closed", "none"];

pub const DOOR_STATUS: &[&str] = &["open", "closed", "none"];

/// All label sets in canonical head order.
pub const SETS: [&[&str]; NUM_SETS] = [
    ATOMIC,
    SIMPLE_CONTEXTUAL,
    COMPLEX_CONTEXTUAL,
    COMMUNICATIVE,
    TRANSPORTIVE,
    MOTION_STATUS,
    TRUNK_STATUS,
    DOOR_STATUS,
];

pub const SET_NAMES: [&str; NUM_SETS] = [
    "atomic",
    "simple-contextual",
    "complex-contextual",
    "communicative",
    "transportive",
    "motion-status",
    "trunk-status",
    "door-status",
];

/// Head output widths, one per label set.
pub const CARDINALITIES: [usize; NUM_SETS] = [10, 13, 7, 4, 4, 4, 3, 3];

pub fn cardinality(set: usize) -> usize {
    SETS[set].len()
}

/// Index of the `none` class in a set.
pub fn none_index(set: usize) -> usize {
    SETS[set].len() - 1
}

pub fn label_index(set: usize, name: &str) -> Option<usize> {
    SETS[set].iter().position(|l| *l == name)
}

/// Label index lookup for names that are known at compile time.
pub(crate) fn idx(set: usize, name: &str) -> usize {
    label_index(set, name).unwrap_or_else(|| panic!("unknown label `{name}` in set {set}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentType {
    Person,
    #[serde(rename = "vehicle_2wheel")]
    Vehicle2Wheel,
    #[serde(rename = "vehicle_4wheel")]
    Vehicle4Wheel,
}

impl AgentType {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentType::Person => "person",
            AgentType::Vehicle2Wheel => "vehicle_2wheel",
            AgentType::Vehicle4Wheel => "vehicle_4wheel",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "person" => Ok(AgentType::Person),
            "vehicle_2wheel" => Ok(AgentType::Vehicle2Wheel),
            "vehicle_4wheel" => Ok(AgentType::Vehicle4Wheel),
            other => Err(Error::invalid(format!("unknown agent type `{other}`"))),
        }
    }

    pub fn is_person(self) -> bool {
        self == AgentType::Person
    }

    /// Label sets that carry information for this agent type.
    pub fn active_sets(self) -> std::ops::Range<usize> {
        if self.is_person() {
            PERSON_SETS
        } else {
            VEHICLE_SETS
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeGroup {
    Child,
    Adult,
    Senior,
}

impl AgeGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            AgeGroup::Child => "child",
            AgeGroup::Adult => "adult",
            AgeGroup::Senior => "senior",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "child" => Ok(AgeGroup::Child),
            "adult" => Ok(AgeGroup::Adult),
            "senior" => Ok(AgeGroup::Senior),
            other => Err(Error::invalid(format!("unknown age group `{other}`"))),
        }
    }
}
