//! Future ego-motion prediction. A recurrent encoder summarizes past
//! `(alpha, omega)`; at every future step the other agents' future boxes and
//! actions are fused, weighted by the agent importance mechanism (AIM) and
//! summed into the decoder state.

mod data;
mod loss;
mod train;

pub use data::{ego_samples, EgoAgent, EgoSample};
pub use loss::{ego_loss, EgoLoss};
pub use train::{ego_loss_on, train_ego};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{rng, rows, GruCell, Linear, Mat, ParamId, ParamStore, Tape, Var};
use crate::par;
use crate::scene::{ActionVector, BBox, T_FUT, T_OBS};

/// Which agent inputs the decoder sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EgoVariant {
    /// FP: agents' future boxes.
    pub positions: bool,
    /// AP: agents' actions at the last observed step.
    pub actions: bool,
    /// Weight each agent by the importance mechanism before summing.
    pub aim: bool,
}

pub const EGO_VARIANTS: [&str; 5] = ["vanilla", "FP", "FP+AP", "AIM_FP", "AIM"];

impl EgoVariant {
    pub const VANILLA: EgoVariant = EgoVariant {
        positions: false,
        actions: false,
        aim: false,
    };
    pub const AIM: EgoVariant = EgoVariant {
        positions: true,
        actions: true,
        aim: true,
    };

    pub fn parse(name: &str) -> Result<Self> {
        let (positions, actions, aim) = match name {
            "vanilla" => (false, false, false),
            "FP" => (true, false, false),
            "FP+AP" => (true, true, false),
            "AIM_FP" => (true, false, true),
            "AIM" => (true, true, true),
            _ => {
                return Err(Error::invalid(format!(
                    "unknown ego variant '{name}' (expected one of {})",
                    EGO_VARIANTS.join(", ")
                )))
            }
        };
        Ok(EgoVariant { positions, actions, aim })
    }

    pub fn name(&self) -> &'static str {
        match (self.positions, self.actions, self.aim) {
            (false, _, _) => "vanilla",
            (true, false, false) => "FP",
            (true, true, false) => "FP+AP",
            (true, false, true) => "AIM_FP",
            (true, true, true) => "AIM",
        }
    }

    pub fn uses_agents(&self) -> bool {
        self.positions
    }
}

impl fmt::Display for EgoVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl TryFrom<String> for EgoVariant {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        EgoVariant::parse(&s)
    }
}

impl From<EgoVariant> for String {
    fn from(v: EgoVariant) -> String {
        v.name().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EgoConfig {
    pub hidden: usize,
    pub variant: EgoVariant,
}

impl Default for EgoConfig {
    fn default() -> Self {
        EgoConfig {
            hidden: 128,
            variant: EgoVariant::AIM,
        }
    }
}

/// Per future step, the importance weight of every agent considered.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTrace {
    pub steps: Vec<Vec<(u32, f64)>>,
}

impl ImportanceTrace {
    /// Mean `|w|` of one agent over the steps where it was present.
    pub fn mean_abs(&self, track_id: u32) -> Option<f64> {
        let v: Vec<f64> = self
            .steps
            .iter()
            .flatten()
            .filter(|(id, _)| *id == track_id)
            .map(|(_, w)| w.abs())
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoPrediction {
    /// `(alpha, omega)` per future step.
    pub steps: Vec<[f64; 2]>,
    pub importance: ImportanceTrace,
}

#[derive(Debug, Clone)]
struct AgentBranch {
    box_embed: Linear,
    action_embed: Option<Linear>,
    concat_to_hid2: Linear,
    aim: Option<Linear>,
    concat_to_hid: Linear,
}

#[derive(Debug, Clone)]
pub struct EgoNetwork {
    pub config: EgoConfig,
    pub store: ParamStore,
    ego_embed: Linear,
    encoder: GruCell,
    agents: Option<AgentBranch>,
    decoder: GruCell,
    hid_to_pred_input: Linear,
    hid_to_pred: Linear,
    log_vars: ParamId,
}

/// Agent rows gathered from a batch at one future step.
struct Gathered {
    boxes: Vec<[f64; 4]>,
    actions: Vec<[f64; 8]>,
    /// `(batch row, track id)` per gathered row.
    owners: Vec<(usize, u32)>,
}

fn gather(batch: &[&EgoSample], t: usize) -> Gathered {
    let mut g = Gathered {
        boxes: Vec::new(),
        actions: Vec::new(),
        owners: Vec::new(),
    };
    for (b, s) in batch.iter().enumerate() {
        for a in &s.agents {
            if let Some(Some(bx)) = a.boxes.get(t) {
                g.boxes.push(bx.to_array());
                g.actions.push(a.action.normalized());
                g.owners.push((b, a.track_id));
            }
        }
    }
    g
}

impl EgoNetwork {
    pub fn new(config: EgoConfig, seed: u64) -> Self {
        let mut r = rng(seed);
        let mut store = ParamStore::default();
        let h = config.hidden;
        let v = config.variant;
        let s = &mut store;
        let ego_embed = Linear::new(s, "ego_embed.Linear_0", 2, h, &mut r);
        let encoder = GruCell::new(s, "ego_encoder.GRUCell_enc", h, h, &mut r);
        let agents = v.uses_agents().then(|| {
            let box_embed = Linear::new(s, "pred.box_embed.Linear_0", 4, h, &mut r);
            let action_embed = v.actions.then(|| Linear::new(s, "pred.action_embed.Linear_0", 8, h, &mut r));
            let width = h * (1 + v.actions as usize);
            let concat_to_hid2 = Linear::new(s, "pred.concat_to_hid2.Linear_0", width, h, &mut r);
            let aim = v.aim.then(|| Linear::new(s, "pred.AIM_layer.Linear_0", h, 1, &mut r));
            let concat_to_hid = Linear::new(s, "pred.concat_to_hid.Linear_0", 2 * h, h, &mut r);
            AgentBranch {
                box_embed,
                action_embed,
                concat_to_hid2,
                aim,
                concat_to_hid,
            }
        });
        let decoder = GruCell::new(s, "pred.GRUCell_dec", h, h, &mut r);
        let hid_to_pred_input = Linear::new(s, "pred.hid_to_pred_input.Linear_0", h, h, &mut r);
        let hid_to_pred = Linear::new(s, "pred.Linear_hid_to_pred", h, 2, &mut r);
        let log_vars = s.add("ego_loss.log_var", Mat::zeros((1, 2)));
        EgoNetwork {
            config,
            store,
            ego_embed,
            encoder,
            agents,
            decoder,
            hid_to_pred_input,
            hid_to_pred,
            log_vars,
        }
    }

    pub fn variant(&self) -> EgoVariant {
        self.config.variant
    }

    pub fn param_count(&self) -> usize {
        self.store.count()
    }

    pub fn log_vars(&self) -> [f64; 2] {
        let v = self.store.value(self.log_vars);
        [v[[0, 0]], v[[0, 1]]]
    }

    pub(crate) fn log_vars_id(&self) -> ParamId {
        self.log_vars
    }

    pub fn layer_shapes(&self) -> Vec<(String, usize, usize)> {
        let lin = |n: &str, l: &Linear| (n.to_string(), l.input, l.output);
        let gru = |n: &str, c: &GruCell| (n.to_string(), c.input, c.hidden);
        let mut out = vec![
            lin("ego_embed.Linear_0", &self.ego_embed),
            gru("ego_encoder.GRUCell_enc", &self.encoder),
        ];
        if let Some(a) = &self.agents {
            out.push(lin("pred.box_embed.Linear_0", &a.box_embed));
            if let Some(l) = &a.action_embed {
                out.push(lin("pred.action_embed.Linear_0", l));
            }
            out.push(lin("pred.concat_to_hid2.Linear_0", &a.concat_to_hid2));
            if let Some(l) = &a.aim {
                out.push(lin("pred.AIM_layer.Linear_0", l));
            }
            out.push(lin("pred.concat_to_hid.Linear_0", &a.concat_to_hid));
        }
        out.push(gru("pred.GRUCell_dec", &self.decoder));
        out.push(lin("pred.hid_to_pred_input.Linear_0", &self.hid_to_pred_input));
        out.push(lin("pred.Linear_hid_to_pred", &self.hid_to_pred));
        out
    }

    fn encode(&self, tape: &mut Tape, batch: &[&EgoSample]) -> Var {
        let mut h = tape.zeros(batch.len(), self.config.hidden);
        for t in 0..T_OBS {
            let e: Vec<[f64; 2]> = batch.iter().map(|s| [s.ego_obs[t].alpha, s.ego_obs[t].omega]).collect();
            let x = tape.input(rows(&e));
            let x = self.ego_embed.forward_relu(tape, x);
            h = self.encoder.forward(tape, x, h);
        }
        h
    }

    /// Fused agent context `H^e_t` `[B, hidden]` plus the AIM weight vars.
    fn fuse(&self, tape: &mut Tape, branch: &AgentBranch, batch_len: usize, g: &Gathered) -> (Var, Option<Var>) {
        let hidden = self.config.hidden;
        if g.owners.is_empty() {
            return (tape.zeros(batch_len, hidden), None);
        }
        let x = tape.input(rows(&g.boxes));
        let mut parts = vec![branch.box_embed.forward_relu(tape, x)];
        if let Some(embed) = &branch.action_embed {
            let a = tape.input(rows(&g.actions));
            parts.push(embed.forward_relu(tape, a));
        }
        let cat = if parts.len() == 1 { parts[0] } else { tape.concat(&parts) };
        let fused = branch.concat_to_hid2.forward(tape, cat);
        let (weighted, w) = match &branch.aim {
            Some(aim) => {
                let raw = aim.forward(tape, fused);
                let w = tape.tanh(raw);
                let ones = tape.input(Mat::ones((1, hidden)));
                let wide = tape.matmul(w, ones);
                (tape.mul(wide, fused), Some(w))
            }
            None => (fused, None),
        };
        let mut select = Mat::zeros((batch_len, g.owners.len()));
        for (m, (b, _)) in g.owners.iter().enumerate() {
            select[[*b, m]] = 1.0;
        }
        let select = tape.input(select);
        (tape.matmul(select, weighted), w)
    }

    /// Per-step outputs `[B, 2]` and, for AIM variants, per-step weights.
    fn forward(&self, tape: &mut Tape, batch: &[&EgoSample]) -> (Vec<Var>, Vec<Option<(Var, Gathered)>>) {
        let mut h = self.encode(tape, batch);
        let mut input = self.hid_to_pred_input.forward_relu(tape, h);
        let mut out = Vec::with_capacity(T_FUT);
        let mut weights = Vec::with_capacity(T_FUT);
        for t in 0..T_FUT {
            let mut w_t = None;
            if let Some(branch) = &self.agents {
                let g = gather(batch, t);
                let (ctx, w) = self.fuse(tape, branch, batch.len(), &g);
                let cat = tape.concat(&[ctx, h]);
                h = branch.concat_to_hid.forward(tape, cat);
                w_t = w.map(|w| (w, g));
            }
            h = self.decoder.forward(tape, input, h);
            out.push(self.hid_to_pred.forward(tape, h));
            input = self.hid_to_pred_input.forward_relu(tape, h);
            weights.push(w_t);
        }
        (out, weights)
    }

    /// AIM weights `w^i` and the fused context `H^e` for one set of agents at
    /// one step. Without the importance mechanism every weight is 1; without
    /// agent inputs the set is ignored and the context is zero.
    pub fn aim_weights(&self, boxes: &[BBox], actions: &[ActionVector]) -> Result<(Vec<f64>, Vec<f64>)> {
        if boxes.len() != actions.len() {
            return Err(Error::Shape(format!("{} boxes but {} actions", boxes.len(), actions.len())));
        }
        let Some(branch) = &self.agents else {
            return Ok((Vec::new(), vec![0.0; self.config.hidden]));
        };
        let g = Gathered {
            boxes: boxes.iter().map(|b| b.to_array()).collect(),
            actions: actions.iter().map(|a| a.normalized()).collect(),
            owners: (0..boxes.len()).map(|i| (0, i as u32)).collect(),
        };
        let mut tape = Tape::new(&self.store);
        let (ctx, w) = self.fuse(&mut tape, branch, 1, &g);
        let weights = match w {
            Some(w) => tape.value(w).column(0).to_vec(),
            None => vec![1.0; boxes.len()],
        };
        Ok((weights, tape.value(ctx).row(0).to_vec()))
    }

    fn run(&self, batch: &[&EgoSample]) -> Vec<EgoPrediction> {
        let mut tape = Tape::new(&self.store);
        let (out, weights) = self.forward(&mut tape, batch);
        let mut preds: Vec<EgoPrediction> = (0..batch.len())
            .map(|b| EgoPrediction {
                steps: out.iter().map(|v| [tape.value(*v)[[b, 0]], tape.value(*v)[[b, 1]]]).collect(),
                importance: ImportanceTrace {
                    steps: vec![Vec::new(); T_FUT],
                },
            })
            .collect();
        for (t, w) in weights.iter().enumerate() {
            if let Some((w, g)) = w {
                let values = tape.value(*w);
                for (m, (b, id)) in g.owners.iter().enumerate() {
                    preds[*b].importance.steps[t].push((*id, values[[m, 0]]));
                }
            }
        }
        preds
    }

    pub fn predict(&self, sample: &EgoSample) -> Result<EgoPrediction> {
        sample.check()?;
        Ok(self.run(&[sample]).pop().expect("one prediction"))
    }

    pub fn predict_all(&self, samples: &[EgoSample]) -> Result<Vec<EgoPrediction>> {
        for s in samples {
            s.check()?;
        }
        let chunks: Vec<&[EgoSample]> = samples.chunks(64).collect();
        let out = par::map(&chunks, |c| self.run(&c.iter().collect::<Vec<_>>()));
        Ok(out.into_iter().flatten().collect())
    }

    pub fn to_checkpoint(&self) -> String {
        self.store
            .to_checkpoint("ego", serde_json::to_value(&self.config).expect("config serialization"))
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let (_, meta) = ParamStore::checkpoint_header(text)?;
        let config: EgoConfig =
            serde_json::from_value(meta).map_err(|e| Error::Checkpoint(format!("bad ego config: {e}")))?;
        let mut net = EgoNetwork::new(config, 0);
        net.store.load_checkpoint(text, "ego")?;
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::EgoState;

    fn sample(n_agents: usize) -> EgoSample {
        EgoSample {
            clip_id: "c".into(),
            t_start: 0,
            ego_obs: (0..T_OBS).map(|t| EgoState { alpha: 0.1 * t as f64, omega: 0.01 }).collect(),
            agents: (0..n_agents)
                .map(|i| EgoAgent {
                    track_id: i as u32 + 1,
                    action: ActionVector::none().with(0, "walking"),
                    boxes: (0..T_FUT).map(|t| Some(BBox::new(0.3 + 0.01 * t as f64 + 0.1 * i as f64, 0.5, 0.02, 0.1))).collect(),
                })
                .collect(),
            future: vec![EgoState { alpha: 0.0, omega: 0.0 }; T_FUT],
        }
    }

    #[test]
    fn variant_names_roundtrip() {
        for n in EGO_VARIANTS {
            assert_eq!(EgoVariant::parse(n).unwrap().name(), n);
        }
        assert!(EgoVariant::parse("AIM+XP").is_err());
    }

    #[test]
    fn zero_weights_give_constant_bias_output() {
        let mut net = EgoNetwork::new(EgoConfig { hidden: 8, variant: EgoVariant::AIM }, 1);
        net.store.fill(0.0);
        let bias = net.hid_to_pred.bias;
        net.store.value_mut(bias)[[0, 0]] = 0.3;
        net.store.value_mut(bias)[[0, 1]] = -0.02;
        let p = net.predict(&sample(2)).unwrap();
        assert_eq!(p.steps.len(), T_FUT);
        assert!(p.steps.iter().all(|s| *s == [0.3, -0.02]));
    }

    #[test]
    fn single_agent_context_is_weighted_fusion() {
        let net = EgoNetwork::new(EgoConfig { hidden: 8, variant: EgoVariant::AIM }, 2);
        let b = BBox::new(0.4, 0.5, 0.03, 0.1);
        let a = ActionVector::none().with(0, "walking");
        let (w, ctx) = net.aim_weights(&[b], &[a]).unwrap();
        assert_eq!(w.len(), 1);
        assert!(w[0].abs() < 1.0);
        // Recompute H^{e1} with the weight undone.
        let branch = net.agents.as_ref().unwrap();
        let mut tape = Tape::new(&net.store);
        let x = tape.input(rows(&[b.to_array()]));
        let xb = branch.box_embed.forward_relu(&mut tape, x);
        let ai = tape.input(rows(&[a.normalized()]));
        let xa = branch.action_embed.as_ref().unwrap().forward_relu(&mut tape, ai);
        let cat = tape.concat(&[xb, xa]);
        let fused = branch.concat_to_hid2.forward(&mut tape, cat);
        for (k, v) in ctx.iter().enumerate() {
            assert!((v - w[0] * tape.value(fused)[[0, k]]).abs() < 1e-12);
        }
        let (none_w, none_ctx) = net.aim_weights(&[], &[]).unwrap();
        assert!(none_w.is_empty() && none_ctx.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn batch_matches_single_and_traces_every_agent() {
        let net = EgoNetwork::new(EgoConfig { hidden: 8, variant: EgoVariant::AIM }, 3);
        let samples = vec![sample(0), sample(1), sample(3)];
        let all = net.predict_all(&samples).unwrap();
        for (s, p) in samples.iter().zip(&all) {
            let single = net.predict(s).unwrap();
            for (a, b) in single.steps.iter().zip(&p.steps) {
                assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
            }
            assert!(p.importance.steps.iter().all(|st| st.len() == s.agents.len()));
        }
    }

    #[test]
    fn vanilla_ignores_agents() {
        let net = EgoNetwork::new(EgoConfig { hidden: 8, variant: EgoVariant::VANILLA }, 4);
        assert_eq!(net.predict(&sample(0)).unwrap().steps, net.predict(&sample(3)).unwrap().steps);
    }
}
