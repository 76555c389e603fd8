//! Non-learned baselines and the ablation factory.

use crate::ego::{EgoConfig, EgoNetwork, EgoVariant, EGO_VARIANTS};
use crate::error::{Error, Result};
use crate::fol::{FolAblation, FolConfig, FolNetwork, FOL_ABLATIONS};
use crate::scene::{BBox, EgoState, T_FUT};

/// Extrapolates the last observed center displacement over `T_FUT` steps.
/// With `scale`, box dimensions follow their last displacement too (floored
/// at 0); otherwise they are held.
pub fn const_vel(obs: &[BBox], scale: bool) -> Result<Vec<BBox>> {
    let [.., prev, last] = obs else {
        return Err(Error::invalid(format!("const-vel needs 2 observed boxes, got {}", obs.len())));
    };
    let (dcu, dcv) = (last.cu - prev.cu, last.cv - prev.cv);
    let (dlu, dlv) = if scale {
        (last.lu - prev.lu, last.lv - prev.lv)
    } else {
        (0.0, 0.0)
    };
    Ok((1..=T_FUT)
        .map(|k| {
            let k = k as f64;
            BBox::new(
                last.cu + k * dcu,
                last.cv + k * dcv,
                (last.lu + k * dlu).max(0.0),
                (last.lv + k * dlv).max(0.0),
            )
        })
        .collect())
}

/// Holds the last ego state.
pub fn const_vel_ego(history: &[EgoState]) -> Result<Vec<EgoState>> {
    let Some(last) = history.last() else {
        return Err(Error::invalid("const-vel ego needs at least one step"));
    };
    Ok(vec![*last; T_FUT])
}

/// Extrapolates acceleration and yaw rate linearly from their last two values.
pub fn const_acc(history: &[EgoState]) -> Result<Vec<EgoState>> {
    let [.., prev, last] = history else {
        return Err(Error::invalid(format!("const-acc needs 2 ego steps, got {}", history.len())));
    };
    let (da, dw) = (last.alpha - prev.alpha, last.omega - prev.omega);
    Ok((1..=T_FUT)
        .map(|k| EgoState {
            alpha: last.alpha + k as f64 * da,
            omega: last.omega + k as f64 * dw,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxBaseline {
    ConstVel,
    ConstVelScaled,
}

impl BoxBaseline {
    pub const ALL: [BoxBaseline; 2] = [BoxBaseline::ConstVel, BoxBaseline::ConstVelScaled];

    pub fn name(self) -> &'static str {
        match self {
            BoxBaseline::ConstVel => "Const-Vel",
            BoxBaseline::ConstVelScaled => "Const-Vel (w/ scaling)",
        }
    }

    pub fn predict(self, obs: &[BBox]) -> Result<Vec<BBox>> {
        const_vel(obs, self == BoxBaseline::ConstVelScaled)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EgoBaseline {
    ConstVel,
    ConstAcc,
}

impl EgoBaseline {
    pub const ALL: [EgoBaseline; 2] = [EgoBaseline::ConstVel, EgoBaseline::ConstAcc];

    pub fn name(self) -> &'static str {
        match self {
            EgoBaseline::ConstVel => "Const-Vel",
            EgoBaseline::ConstAcc => "Const-Acc",
        }
    }

    pub fn predict(self, history: &[EgoState]) -> Result<Vec<EgoState>> {
        match self {
            EgoBaseline::ConstVel => const_vel_ego(history),
            EgoBaseline::ConstAcc => const_acc(history),
        }
    }
}

/// An untrained network for one named ablation.
#[derive(Debug, Clone)]
pub enum Forecaster {
    Fol(FolNetwork),
    Ego(EgoNetwork),
}

impl Forecaster {
    pub fn param_count(&self) -> usize {
        match self {
            Forecaster::Fol(n) => n.param_count(),
            Forecaster::Ego(n) => n.param_count(),
        }
    }
}

/// Builds the network for a FOL ablation (`vanilla`, `EP+IP`, ...) or an ego
/// variant (`FP`, `AIM`, ...). `vanilla` names the FOL model; use
/// `ego:vanilla` for the past-ego-only ego model.
pub fn ablation_factory(name: &str, fol: &FolConfig, ego: &EgoConfig, seed: u64) -> Result<Forecaster> {
    if let Some(v) = name.strip_prefix("ego:") {
        let variant = EgoVariant::parse(v)?;
        return Ok(Forecaster::Ego(EgoNetwork::new(EgoConfig { variant, ..ego.clone() }, seed)));
    }
    if name != "vanilla" && EGO_VARIANTS.contains(&name) {
        let variant = EgoVariant::parse(name)?;
        return Ok(Forecaster::Ego(EgoNetwork::new(EgoConfig { variant, ..ego.clone() }, seed)));
    }
    match FolAblation::parse(name) {
        Ok(ablation) => Ok(Forecaster::Fol(FolNetwork::new(FolConfig { ablation, ..fol.clone() }, seed))),
        Err(_) => Err(Error::invalid(format!(
            "unknown ablation '{name}' (FOL: {}; ego: {})",
            FOL_ABLATIONS.join(", "),
            EGO_VARIANTS.join(", ")
        ))),
    }
}

/// Parameter count of every FOL ablation at the given width, in ladder order.
pub fn param_audit(fol: &FolConfig) -> Vec<(String, usize)> {
    FOL_ABLATIONS
        .iter()
        .map(|n| {
            let config = FolConfig {
                ablation: FolAblation::parse(n).expect("listed ablation"),
                ..fol.clone()
            };
            (n.to_string(), FolNetwork::new(config, 0).param_count())
        })
        .collect()
}
