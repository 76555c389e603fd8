//! Future object localization: a past-location encoder whose hidden state is
//! refreshed at every step with action, interaction and ego-motion context,
//! followed by a recurrent decoder that emits two bivariate Gaussians per
//! future step.

mod data;
mod gaussian;
mod train;

pub use data::{fol_samples, ActionSource, FolSample};
pub use gaussian::{
    bivariate_nll, RESIDUAL_SPAN, fol_nll_loss, fol_nll_with_grad, predict_mean, raw_grad, sample_future, Bivariate,
    GaussianBoxForecast, GaussianStep, RAW_WIDTH, RHO_MAX, SIGMA_MAX, SIGMA_MIN,
};
pub use train::{fol_loss_on, train_fol};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interaction::{canonical_pairs, InteractionEncoder};
use crate::nn::{rng, rows, GruCell, Linear, ParamStore, Tape, Var};
use crate::par;
use crate::scene::{T_FUT, T_OBS};

/// Which context streams are injected into the location encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FolAblation {
    /// AP: action embeddings (and actions inside interaction pairs).
    pub action: bool,
    /// EP: ego-encoder hidden states.
    pub ego: bool,
    /// IP: interaction features.
    pub interaction: bool,
}

/// The variants of the ablation ladder, from plain encoder-decoder to the
/// full model.
pub const FOL_ABLATIONS: [&str; 7] = ["vanilla", "AP", "EP", "IP", "EP+AP", "EP+IP", "EP+IP+AP"];

impl FolAblation {
    pub const VANILLA: FolAblation = FolAblation {
        action: false,
        ego: false,
        interaction: false,
    };
    pub const FULL: FolAblation = FolAblation {
        action: true,
        ego: true,
        interaction: true,
    };

    pub fn parse(name: &str) -> Result<Self> {
        let mut a = FolAblation::VANILLA;
        if name != "vanilla" {
            for part in name.split('+') {
                let flag = match part {
                    "AP" => &mut a.action,
                    "EP" => &mut a.ego,
                    "IP" => &mut a.interaction,
                    _ => return Err(unknown_ablation(name)),
                };
                if *flag {
                    return Err(unknown_ablation(name));
                }
                *flag = true;
            }
        }
        Ok(a)
    }

    pub fn name(&self) -> String {
        let parts: Vec<&str> = [(self.ego, "EP"), (self.interaction, "IP"), (self.action, "AP")]
            .into_iter()
            .filter_map(|(on, n)| on.then_some(n))
            .collect();
        if parts.is_empty() {
            "vanilla".into()
        } else {
            parts.join("+")
        }
    }

    pub fn enabled(&self) -> usize {
        self.action as usize + self.ego as usize + self.interaction as usize
    }
}

fn unknown_ablation(name: &str) -> Error {
    Error::invalid(format!(
        "unknown FOL ablation '{name}' (expected one of {})",
        FOL_ABLATIONS.join(", ")
    ))
}

impl fmt::Display for FolAblation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl TryFrom<String> for FolAblation {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        FolAblation::parse(&s)
    }
}

impl From<FolAblation> for String {
    fn from(a: FolAblation) -> String {
        a.name()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FolConfig {
    /// Embedding and hidden width.
    pub hidden: usize,
    pub ablation: FolAblation,
    /// Predict means as bounded offsets from the last observed box instead of
    /// absolute coordinates. The encoder then also sees boxes relative to that
    /// anchor, scaled by `ANCHORED_INPUT_SCALE`.
    pub residual: bool,
}

impl Default for FolConfig {
    fn default() -> Self {
        FolConfig {
            hidden: 512,
            ablation: FolAblation::FULL,
            residual: false,
        }
    }
}

/// Offsets from the anchor box are a few hundredths of the frame; this brings
/// them to unit scale.
pub const ANCHORED_INPUT_SCALE: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct FolNetwork {
    pub config: FolConfig,
    pub store: ParamStore,
    box_embed: Linear,
    action_embed: Option<Linear>,
    ego_embed: Option<Linear>,
    ego_encoder: Option<GruCell>,
    interaction: Option<InteractionEncoder>,
    concat_to_hidden: Option<Linear>,
    box_encoder: GruCell,
    decoder: GruCell,
    hidden_to_input: Linear,
    hidden_to_output: Linear,
}

impl FolNetwork {
    pub fn new(config: FolConfig, seed: u64) -> Self {
        let mut r = rng(seed);
        let mut store = ParamStore::default();
        let h = config.hidden;
        let ab = config.ablation;
        let s = &mut store;
        let box_embed = Linear::new(s, "ego_box_embed.Linear_0", 4, h, &mut r);
        let action_embed = ab.action.then(|| Linear::new(s, "ego_action_embed.Linear_0", 8, h, &mut r));
        let ego_embed = ab.ego.then(|| Linear::new(s, "ego_motion_embed.Linear_0", 2, h, &mut r));
        let box_encoder = GruCell::new(s, "box_encoder.GRUCell_enc", h, h, &mut r);
        let ego_encoder = ab.ego.then(|| GruCell::new(s, "motion_encoder.GRUCell_enc", h, h, &mut r));
        let interaction = ab
            .interaction
            .then(|| InteractionEncoder::new(s, "int_encoder", h, ab.action, &mut r));
        let concat_to_hidden =
            (ab.enabled() > 0).then(|| Linear::new(s, "concat_to_hidden.Linear_0", h * (1 + ab.enabled()), h, &mut r));
        if let Some(inject) = &concat_to_hidden {
            identity_on_state(s, inject, h);
        }
        let decoder = GruCell::new(s, "pred.GRUCell_dec", h, h, &mut r);
        let hidden_to_input = Linear::new(s, "pred.hidden_to_input.Linear_0", h, h, &mut r);
        let hidden_to_output = Linear::new(s, "pred.hidden_to_output.Linear_0", h, RAW_WIDTH, &mut r);
        FolNetwork {
            config,
            store,
            box_embed,
            action_embed,
            ego_embed,
            ego_encoder,
            interaction,
            concat_to_hidden,
            box_encoder,
            decoder,
            hidden_to_input,
            hidden_to_output,
        }
    }

    pub fn ablation(&self) -> FolAblation {
        self.config.ablation
    }

    pub fn param_count(&self) -> usize {
        self.store.count()
    }

    fn box_input(&self, s: &FolSample, t: usize) -> [f64; 4] {
        let x = s.obs_boxes[t].to_array();
        if self.config.residual {
            let a = s.obs_boxes[T_OBS - 1].to_array();
            std::array::from_fn(|i| (x[i] - a[i]) * ANCHORED_INPUT_SCALE)
        } else {
            x
        }
    }

    pub(crate) fn anchor(&self, sample: &FolSample) -> Option<[f64; 4]> {
        self.config.residual.then(|| sample.obs_boxes[T_OBS - 1].to_array())
    }

    /// `(layer, input width, output width)` in forward order.
    pub fn layer_shapes(&self) -> Vec<(String, usize, usize)> {
        let mut out = vec![lin("ego_box_embed.Linear_0", &self.box_embed)];
        if let Some(l) = &self.action_embed {
            out.push(lin("ego_action_embed.Linear_0", l));
        }
        if let Some(l) = &self.ego_embed {
            out.push(lin("ego_motion_embed.Linear_0", l));
        }
        out.push(gru("box_encoder.GRUCell_enc", &self.box_encoder));
        if let Some(c) = &self.ego_encoder {
            out.push(gru("motion_encoder.GRUCell_enc", c));
        }
        if let Some(i) = &self.interaction {
            out.push(lin("int_encoder.embed.Linear_0", &i.embed));
            out.push(gru("int_encoder.encode.GRUCell_enc", &i.cell));
        }
        if let Some(l) = &self.concat_to_hidden {
            out.push(lin("concat_to_hidden.Linear_0", l));
        }
        out.push(gru("pred.GRUCell_dec", &self.decoder));
        out.push(lin("pred.hidden_to_input.Linear_0", &self.hidden_to_input));
        out.push(lin("pred.hidden_to_output.Linear_0", &self.hidden_to_output));
        out
    }

    /// Runs the encoder over the observation steps of a batch and returns the
    /// final location-encoder hidden state `[B, hidden]`.
    pub(crate) fn encode(&self, tape: &mut Tape, batch: &[&FolSample]) -> Var {
        let b = batch.len();
        let hidden = self.config.hidden;
        let mut h = tape.zeros(b, hidden);
        let mut h_ego = tape.zeros(b, hidden);
        for t in 0..T_OBS {
            let boxes: Vec<[f64; 4]> = batch.iter().map(|s| self.box_input(s, t)).collect();
            let x = tape.input(rows(&boxes));
            let x_emb = self.box_embed.forward_relu(tape, x);
            if let (Some(embed), Some(cell)) = (&self.ego_embed, &self.ego_encoder) {
                let e: Vec<[f64; 2]> = batch.iter().map(|s| [s.ego_obs[t].alpha, s.ego_obs[t].omega]).collect();
                let e = tape.input(rows(&e));
                let e_emb = embed.forward_relu(tape, e);
                h_ego = cell.forward(tape, e_emb, h_ego);
            }
            let mut parts = Vec::with_capacity(4);
            if let Some(embed) = &self.action_embed {
                let a: Vec<[f64; 8]> = batch.iter().map(|s| s.obs_actions[t].normalized()).collect();
                let a = tape.input(rows(&a));
                parts.push(embed.forward_relu(tape, a));
            }
            if let Some(enc) = &self.interaction {
                let pairs: Vec<Vec<Vec<f64>>> = batch
                    .iter()
                    .map(|s| {
                        canonical_pairs(
                            s.track_id,
                            s.obs_boxes[t],
                            &s.obs_actions[t],
                            &s.partners[t],
                            enc.with_actions,
                        )
                    })
                    .collect();
                parts.push(enc.encode(tape, &pairs));
            }
            if self.ego_encoder.is_some() {
                parts.push(h_ego);
            }
            if let Some(inject) = &self.concat_to_hidden {
                parts.push(h);
                let cat = tape.concat(&parts);
                h = inject.forward(tape, cat);
            }
            h = self.box_encoder.forward(tape, x_emb, h);
        }
        h
    }

    /// Unrolls the decoder from `h` for `T_FUT` steps. The first input is the
    /// embedding of the last observed box; later inputs come from the
    /// decoder's own hidden state. Returns the raw sigmoid outputs per step.
    pub(crate) fn decode(&self, tape: &mut Tape, mut h: Var, last_boxes: &[[f64; 4]]) -> Vec<Var> {
        let x = tape.input(rows(last_boxes));
        let mut input = self.box_embed.forward_relu(tape, x);
        let mut out = Vec::with_capacity(T_FUT);
        for _ in 0..T_FUT {
            h = self.decoder.forward(tape, input, h);
            let y = self.hidden_to_output.forward(tape, h);
            out.push(tape.sigmoid(y));
            input = self.hidden_to_input.forward_relu(tape, h);
        }
        out
    }

    pub(crate) fn forward(&self, tape: &mut Tape, batch: &[&FolSample]) -> Vec<Var> {
        let h = self.encode(tape, batch);
        let last: Vec<[f64; 4]> = batch.iter().map(|s| self.box_input(s, T_OBS - 1)).collect();
        self.decode(tape, h, &last)
    }

    /// Final encoder hidden state for one sample.
    pub fn encode_past(&self, sample: &FolSample) -> Result<Vec<f64>> {
        sample.check()?;
        let mut tape = Tape::new(&self.store);
        let h = self.encode(&mut tape, &[sample]);
        Ok(tape.value(h).row(0).to_vec())
    }

    /// Decodes a forecast from an explicit initial hidden state, with
    /// `last_box` as the first decoder input.
    pub fn decode_future(&self, initial_hidden: &[f64], last_box: [f64; 4]) -> Result<GaussianBoxForecast> {
        if initial_hidden.len() != self.config.hidden {
            return Err(Error::Shape(format!(
                "hidden state has width {}, expected {}",
                initial_hidden.len(),
                self.config.hidden
            )));
        }
        let mut tape = Tape::new(&self.store);
        let h = tape.input(rows(&[initial_hidden]));
        let raw = self.decode(&mut tape, h, &[last_box]);
        let anchor = self.config.residual.then_some(last_box);
        Ok(to_forecasts(&tape, &raw, &[anchor]).pop().expect("one row"))
    }

    pub fn forecast(&self, sample: &FolSample) -> Result<GaussianBoxForecast> {
        sample.check()?;
        let mut tape = Tape::new(&self.store);
        let raw = self.forward(&mut tape, &[sample]);
        Ok(to_forecasts(&tape, &raw, &[self.anchor(sample)]).pop().expect("one row"))
    }

    /// Forecasts for many samples, in input order. Batches run in parallel.
    pub fn forecast_all(&self, samples: &[FolSample]) -> Result<Vec<GaussianBoxForecast>> {
        for s in samples {
            s.check()?;
        }
        let chunks: Vec<&[FolSample]> = samples.chunks(32).collect();
        let out = par::map(&chunks, |chunk| {
            let refs: Vec<&FolSample> = chunk.iter().collect();
            let mut tape = Tape::new(&self.store);
            let raw = self.forward(&mut tape, &refs);
            let anchors: Vec<Option<[f64; 4]>> = refs.iter().map(|s| self.anchor(s)).collect();
            to_forecasts(&tape, &raw, &anchors)
        });
        Ok(out.into_iter().flatten().collect())
    }

    pub fn to_checkpoint(&self) -> String {
        self.store
            .to_checkpoint("fol", serde_json::to_value(&self.config).expect("config serialization"))
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let (_, meta) = ParamStore::checkpoint_header(text)?;
        let config: FolConfig =
            serde_json::from_value(meta).map_err(|e| Error::Checkpoint(format!("bad FOL config: {e}")))?;
        let mut net = FolNetwork::new(config, 0);
        net.store.load_checkpoint(text, "fol")?;
        Ok(net)
    }
}

/// Starts the injection map as a near pass-through of the recurrent state:
/// the block reading `h` is the identity, context blocks are scaled down and
/// the bias is zero. Training then departs from the plain encoder.
fn identity_on_state(store: &mut ParamStore, inject: &Linear, hidden: usize) {
    let w = store.value_mut(inject.weight);
    let ctx_rows = inject.input - hidden;
    w.slice_mut(ndarray::s![..ctx_rows, ..]).mapv_inplace(|v| v * CONTEXT_INIT_SCALE);
    let mut state = w.slice_mut(ndarray::s![ctx_rows.., ..]);
    state.fill(0.0);
    state.diag_mut().fill(1.0);
    store.value_mut(inject.bias).fill(0.0);
}

const CONTEXT_INIT_SCALE: f64 = 0.1;

fn lin(name: &str, l: &Linear) -> (String, usize, usize) {
    (name.to_string(), l.input, l.output)
}

fn gru(name: &str, c: &GruCell) -> (String, usize, usize) {
    (name.to_string(), c.input, c.hidden)
}

fn to_forecasts(tape: &Tape, raw: &[Var], anchors: &[Option<[f64; 4]>]) -> Vec<GaussianBoxForecast> {
    anchors
        .iter()
        .enumerate()
        .map(|(b, anchor)| GaussianBoxForecast {
            steps: raw
                .iter()
                .map(|v| GaussianStep::from_raw_anchored(tape.value(*v).row(b).as_slice().expect("contiguous"), *anchor))
                .collect(),
        })
        .collect()
}
