//! Canonical JSONL clip format.
//!
//! Line 0 is the header `{clip_id, fps, image_width, image_height, num_frames}`.
//! Every frame then contributes one ego record `{t, alpha, omega}` followed by
//! one record per present track, ordered by `track_id`:
//! `{t, track_id, agent_type, age_group, box, actions, visible}`.
//! Floats are written with six decimals and keys in the order above, so
//! writing a loaded canonical file reproduces it byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde_json::{Map, Value};

use super::{ActionVector, AgentTrack, BBox, Clip, EgoState};
use crate::error::{Error, Result};
use crate::taxonomy::{AgeGroup, AgentType, NUM_SETS};

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

/// Serializes a clip to canonical JSONL text.
pub fn format_clip(clip: &Clip) -> String {
    let mut out = String::new();
    let id = serde_json::to_string(&clip.clip_id).expect("string serialization");
    let _ = writeln!(
        out,
        "{{\"clip_id\":{id},\"fps\":{},\"image_width\":{},\"image_height\":{},\"num_frames\":{}}}",
        f6(clip.fps),
        clip.image_width,
        clip.image_height,
        clip.num_frames()
    );
    let mut order: Vec<&AgentTrack> = clip.agents.iter().collect();
    order.sort_by_key(|a| a.track_id);
    for (t, e) in clip.ego.iter().enumerate() {
        let _ = writeln!(out, "{{\"t\":{t},\"alpha\":{},\"omega\":{}}}", f6(e.alpha), f6(e.omega));
        for a in order.iter().filter(|a| a.present_at(t)) {
            let k = t - a.first_frame;
            let b = a.boxes[k];
            let age = match a.age_group {
                Some(g) => format!("\"{}\"", g.as_str()),
                None => "null".to_string(),
            };
            let acts: Vec<String> = a.actions[k].0.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(
                out,
                "{{\"t\":{t},\"track_id\":{},\"agent_type\":\"{}\",\"age_group\":{age},\"box\":[{},{},{},{}],\"actions\":[{}],\"visible\":{}}}",
                a.track_id,
                a.agent_type.as_str(),
                f6(b.cu),
                f6(b.cv),
                f6(b.lu),
                f6(b.lv),
                acts.join(","),
                a.visible[k]
            );
        }
    }
    out
}

pub fn save_clip(clip: &Clip, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_clip(clip)).map_err(|e| Error::io(path, e))
}

pub fn load_clip(path: impl AsRef<Path>) -> Result<Clip> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_clip(&text)
}

struct Fields<'a> {
    line: usize,
    map: &'a Map<String, Value>,
}

impl<'a> Fields<'a> {
    fn err(&self, field: &str, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            field: field.to_string(),
            msg: msg.into(),
        }
    }

    fn get(&self, field: &str) -> Result<&'a Value> {
        self.map.get(field).ok_or_else(|| self.err(field, "missing"))
    }

    fn f64(&self, field: &str) -> Result<f64> {
        self.get(field)?.as_f64().ok_or_else(|| self.err(field, "expected number"))
    }

    fn u64(&self, field: &str) -> Result<u64> {
        self.get(field)?.as_u64().ok_or_else(|| self.err(field, "expected non-negative integer"))
    }

    fn str(&self, field: &str) -> Result<&'a str> {
        self.get(field)?.as_str().ok_or_else(|| self.err(field, "expected string"))
    }

    fn bool(&self, field: &str) -> Result<bool> {
        self.get(field)?.as_bool().ok_or_else(|| self.err(field, "expected boolean"))
    }

    fn only(&self, allowed: &[&str]) -> Result<()> {
        match self.map.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(self.err(k, "unknown field")),
            None => Ok(()),
        }
    }
}

struct TrackBuilder {
    agent_type: AgentType,
    age_group: Option<AgeGroup>,
    first_frame: usize,
    boxes: Vec<BBox>,
    actions: Vec<ActionVector>,
    visible: Vec<bool>,
}

const HEADER_KEYS: &[&str] = &["clip_id", "fps", "image_width", "image_height", "num_frames"];
const EGO_KEYS: &[&str] = &["t", "alpha", "omega"];
const TRACK_KEYS: &[&str] = &["t", "track_id", "agent_type", "age_group", "box", "actions", "visible"];

/// Parses and validates JSONL clip text.
pub fn parse_clip(text: &str) -> Result<Clip> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header_line) = lines.next().ok_or(Error::Parse {
        line: 1,
        field: "header".into(),
        msg: "empty file".into(),
    })?;
    let header_value: Value = serde_json::from_str(header_line).map_err(|e| Error::Parse {
        line: 1,
        field: "header".into(),
        msg: e.to_string(),
    })?;
    let header_map = header_value.as_object().ok_or(Error::Parse {
        line: 1,
        field: "header".into(),
        msg: "expected object".into(),
    })?;
    let h = Fields { line: 1, map: header_map };
    h.only(HEADER_KEYS)?;
    let clip_id = h.str("clip_id")?.to_string();
    let fps = h.f64("fps")?;
    let image_width = h.u64("image_width")? as u32;
    let image_height = h.u64("image_height")? as u32;
    let num_frames = h.u64("num_frames")? as usize;

    let mut ego: Vec<Option<EgoState>> = vec![None; num_frames];
    let mut tracks: BTreeMap<u32, TrackBuilder> = BTreeMap::new();

    for (idx, raw) in lines {
        let line = idx + 1;
        let value: Value = serde_json::from_str(raw).map_err(|e| Error::Parse {
            line,
            field: "record".into(),
            msg: e.to_string(),
        })?;
        let map = value.as_object().ok_or(Error::Parse {
            line,
            field: "record".into(),
            msg: "expected object".into(),
        })?;
        let r = Fields { line, map };
        let t = r.u64("t")? as usize;
        if t >= num_frames {
            return Err(r.err("t", format!("frame {t} beyond num_frames {num_frames}")));
        }
        if map.contains_key("track_id") {
            r.only(TRACK_KEYS)?;
            let track_id = r.u64("track_id")? as u32;
            let agent_type = AgentType::parse(r.str("agent_type")?).map_err(|e| r.err("agent_type", e.to_string()))?;
            let age_group = match r.get("age_group")? {
                Value::Null => None,
                Value::String(s) => Some(AgeGroup::parse(s).map_err(|e| r.err("age_group", e.to_string()))?),
                _ => return Err(r.err("age_group", "expected string or null")),
            };
            let bx = r.get("box")?.as_array().ok_or_else(|| r.err("box", "expected array"))?;
            if bx.len() != 4 {
                return Err(r.err("box", format!("expected 4 values, got {}", bx.len())));
            }
            let mut b = [0.0; 4];
            for (k, v) in bx.iter().enumerate() {
                b[k] = v.as_f64().ok_or_else(|| r.err("box", "expected number"))?;
            }
            let acts = r.get("actions")?.as_array().ok_or_else(|| r.err("actions", "expected array"))?;
            if acts.len() != NUM_SETS {
                return Err(r.err("actions", format!("expected {NUM_SETS} values, got {}", acts.len())));
            }
            let mut labels = [0u8; NUM_SETS];
            for (k, v) in acts.iter().enumerate() {
                let c = v
                    .as_u64()
                    .filter(|c| *c <= u8::MAX as u64)
                    .ok_or_else(|| r.err("actions", "expected small non-negative integer"))?;
                labels[k] = c as u8;
            }
            let visible = r.bool("visible")?;
            let entry = tracks.entry(track_id).or_insert_with(|| TrackBuilder {
                agent_type,
                age_group,
                first_frame: t,
                boxes: Vec::new(),
                actions: Vec::new(),
                visible: Vec::new(),
            });
            if entry.agent_type != agent_type || entry.age_group != age_group {
                return Err(r.err("agent_type", format!("track {track_id} changes type or age group")));
            }
            if t != entry.first_frame + entry.boxes.len() {
                return Err(r.err("t", format!("track {track_id} is not contiguous at frame {t}")));
            }
            entry.boxes.push(BBox::from_slice(&b));
            entry.actions.push(ActionVector(labels));
            entry.visible.push(visible);
        } else {
            r.only(EGO_KEYS)?;
            if ego[t].is_some() {
                return Err(r.err("t", format!("duplicate ego record for frame {t}")));
            }
            ego[t] = Some(EgoState {
                alpha: r.f64("alpha")?,
                omega: r.f64("omega")?,
            });
        }
    }

    let ego = ego
        .into_iter()
        .enumerate()
        .map(|(t, e)| e.ok_or_else(|| Error::validation(None, Some(t), "missing ego record")))
        .collect::<Result<Vec<_>>>()?;
    let agents = tracks
        .into_iter()
        .map(|(track_id, b)| AgentTrack {
            track_id,
            agent_type: b.agent_type,
            age_group: b.age_group,
            first_frame: b.first_frame,
            boxes: b.boxes,
            actions: b.actions,
            visible: b.visible,
        })
        .collect();
    let clip = Clip {
        clip_id,
        fps,
        image_width,
        image_height,
        agents,
        ego,
    };
    clip.validate()?;
    Ok(clip)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::AgentType;

    fn fixture(frames: usize, agents: usize) -> Clip {
        let agents = (0..agents)
            .map(|k| AgentTrack {
                track_id: k as u32 + 1,
                agent_type: AgentType::Person,
                age_group: Some(AgeGroup::Adult),
                first_frame: 0,
                boxes: (0..frames)
                    .map(|t| BBox::new(crate::synth::quantize(0.1 + 0.01 * t as f64), 0.5, 0.05, 0.125))
                    .collect(),
                actions: vec![ActionVector::none().with(0, "walking"); frames],
                visible: vec![true; frames],
            })
            .collect();
        Clip {
            clip_id: "fixture".into(),
            fps: 10.0,
            image_width: 1920,
            image_height: 1200,
            agents,
            ego: vec![EgoState { alpha: 0.5, omega: -0.01 }; frames],
        }
    }

    #[test]
    fn one_agent_thirty_frames_roundtrip() {
        let clip = fixture(30, 1);
        let text = format_clip(&clip);
        let back = parse_clip(&text).unwrap();
        assert_eq!(back.agents.len(), 1);
        assert_eq!(back.num_frames(), 30);
        assert_eq!(back, clip);
        assert_eq!(format_clip(&back), text);
    }

    #[test]
    fn empty_agents_writes_header_and_ego_only() {
        let clip = fixture(5, 0);
        let text = format_clip(&clip);
        assert_eq!(text.lines().count(), 1 + 5);
        assert!(text.lines().skip(1).all(|l| l.contains("\"alpha\"")));
    }

    #[test]
    fn two_agents_give_two_track_records_per_frame() {
        let clip = fixture(4, 2);
        let text = format_clip(&clip);
        let tracks = text.lines().filter(|l| l.contains("track_id")).count();
        assert_eq!(tracks, 8);
        assert_eq!(text.lines().count(), 1 + 4 + 8);
    }

    #[test]
    fn negative_dimension_is_a_validation_error() {
        let mut clip = fixture(3, 1);
        clip.agents[0].boxes[2].lu = -0.1;
        let err = parse_clip(&format_clip(&clip)).unwrap_err();
        match err {
            Error::Validation { track_id, frame, msg } => {
                assert_eq!(track_id, Some(1));
                assert_eq!(frame, Some(2));
                assert!(msg.contains("negative"), "{msg}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn parse_errors_name_line_and_field() {
        let text = "{\"clip_id\":\"x\",\"fps\":10.0,\"image_width\":1920,\"image_height\":1200,\"num_frames\":1}\n{\"t\":0,\"alpha\":\"fast\",\"omega\":0.0}\n";
        match parse_clip(text).unwrap_err() {
            Error::Parse { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "alpha");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn missing_ego_frame_is_rejected() {
        let text = "{\"clip_id\":\"x\",\"fps\":10.0,\"image_width\":1920,\"image_height\":1200,\"num_frames\":2}\n{\"t\":0,\"alpha\":0.0,\"omega\":0.0}\n";
        assert!(matches!(parse_clip(text), Err(Error::Validation { frame: Some(1), .. })));
    }

    #[test]
    fn action_out_of_range_is_rejected() {
        let mut clip = fixture(2, 1);
        clip.agents[0].actions[1].0[7] = 9;
        assert!(matches!(
            parse_clip(&format_clip(&clip)),
            Err(Error::Validation { track_id: Some(1), frame: Some(1), .. })
        ));
    }
}
