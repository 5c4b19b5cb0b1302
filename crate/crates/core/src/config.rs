//! Run configuration shared by trees, boosting and the ODE integrator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::Loss;

/// Parameters `(beta, K, d)` of the softmax regression tree together with the
/// boosting learning rate, step count and root seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    /// Softmax inverse temperature; `0` is uniform selection, infinity is
    /// argmax (Extra-Trees) selection. Serialized as a number or `"inf"`.
    #[serde(with = "beta_serde")]
    pub beta: f64,
    /// Number of candidate splits per internal node.
    pub k: usize,
    /// Tree depth `d`; trees are always grown to full depth.
    pub depth: usize,
    /// Learning rate `lambda`.
    pub lambda: f64,
    /// Number of boosting steps to run.
    pub steps: usize,
    /// Root seed for all random streams.
    pub seed: u64,
    pub loss: Loss,
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        if self.beta.is_nan() || self.beta < 0.0 {
            return Err(Error::InvalidInput("beta must be >= 0 (or inf)".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidInput("K must be >= 1".into()));
        }
        if self.depth == 0 {
            return Err(Error::InvalidInput("depth must be >= 1".into()));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidInput("lambda must be > 0".into()));
        }
        Ok(())
    }
}

impl Default for Config {
    fn default() -> Self {
        Config {
            beta: 1.0,
            k: 20,
            depth: 1,
            lambda: 0.01,
            steps: 1000,
            seed: 0,
            loss: Loss::SquaredError,
        }
    }
}

/// JSON has no infinity literal, so beta round-trips through `"inf"`.
mod beta_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(beta: &f64, s: S) -> Result<S::Ok, S::Error> {
        if beta.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*beta)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Str(s) if s == "inf" || s == "infinity" => Ok(f64::INFINITY),
            Repr::Str(s) => Err(de::Error::custom(format!("bad beta value {s:?}"))),
        }
    }
}
