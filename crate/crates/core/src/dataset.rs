//! Fixed design points in `[0,1]^p` with real responses.

use std::io::BufRead;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{tag, RngStream};

/// An immutable training sample: `n` points in `[0,1]^p` and `n` responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>, // row-major, n * p
    responses: Vec<f64>,
    n: usize,
    p: usize,
}

impl Dataset {
    /// Builds a dataset from row-major features. Every feature value must lie
    /// in `[0,1]` and both dimensions must be at least one.
    pub fn new(features: Vec<f64>, responses: Vec<f64>, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidInput("feature count p must be >= 1".into()));
        }
        if responses.is_empty() {
            return Err(Error::InvalidInput("sample count n must be >= 1".into()));
        }
        let n = responses.len();
        if features.len() != n * p {
            return Err(Error::InvalidInput(format!(
                "feature matrix has {} entries, expected {}x{}",
                features.len(),
                n,
                p
            )));
        }
        for (idx, &v) in features.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!(
                    "feature value {v} at row {} column {} outside [0,1]",
                    idx / p,
                    idx % p
                )));
            }
        }
        if responses.iter().any(|y| !y.is_finite()) {
            return Err(Error::InvalidInput("non-finite response".into()));
        }
        Ok(Dataset {
            features,
            responses,
            n,
            p,
        })
    }

    /// Parses headerless CSV with columns `x^1..x^p,y`.
    pub fn from_csv<R: BufRead>(reader: R, scale_features: bool) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::InvalidInput(format!("line {}: {e}", lineno + 1)))?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|tok| {
                    tok.trim().parse::<f64>().map_err(|_| {
                        Error::InvalidInput(format!("line {}: bad number {tok:?}", lineno + 1))
                    })
                })
                .collect::<Result<_>>()?;
            if vals.len() < 2 {
                return Err(Error::InvalidInput(format!(
                    "line {}: expected at least 2 columns",
                    lineno + 1
                )));
            }
            if let Some(prev) = rows.last() {
                if prev.len() != vals.len() {
                    return Err(Error::InvalidInput(format!(
                        "line {}: inconsistent column count",
                        lineno + 1
                    )));
                }
            }
            rows.push(vals);
        }
        if rows.is_empty() {
            return Err(Error::InvalidInput("empty CSV".into()));
        }
        let p = rows[0].len() - 1;
        let mut features = Vec::with_capacity(rows.len() * p);
        let mut responses = Vec::with_capacity(rows.len());
        for row in &rows {
            features.extend_from_slice(&row[..p]);
            responses.push(row[p]);
        }
        if scale_features {
            for j in 0..p {
                let col = || features.iter().skip(j).step_by(p);
                let lo = col().cloned().fold(f64::INFINITY, f64::min);
                let hi = col().cloned().fold(f64::NEG_INFINITY, f64::max);
                let span = if hi > lo { hi - lo } else { 1.0 };
                for i in 0..rows.len() {
                    features[i * p + j] = (features[i * p + j] - lo) / span;
                }
            }
        }
        Dataset::new(features, responses, p)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Feature vector of sample `i`.
    pub fn point(&self, i: usize) -> &[f64] {
        &self.features[i * self.p..(i + 1) * self.p]
    }

    pub fn feature(&self, i: usize, j: usize) -> f64 {
        self.features[i * self.p + j]
    }

    pub fn response(&self, i: usize) -> f64 {
        self.responses[i]
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    /// Replaces the responses, keeping the design points. Used to derive
    /// classification variants of a regression sample.
    pub fn with_responses(&self, responses: Vec<f64>) -> Result<Self> {
        if responses.len() != self.n {
            return Err(Error::InvalidInput("response length mismatch".into()));
        }
        Dataset::new(self.features.clone(), responses, self.p)
    }
}

/// The 1-d sine regression model: `X ~ Unif[0,1]`,
/// `Y = sin(pi/4 + 3pi/2 X) + eps` with `eps ~ N(0, sigma^2)`.
pub fn sine_mean(x: f64) -> f64 {
    (std::f64::consts::FRAC_PI_4 + 1.5 * std::f64::consts::PI * x).sin()
}

/// Draws `n` points from the sine model, deterministically in `seed`.
pub fn generate_sine_dataset(n: usize, sigma: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be >= 1".into()));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidInput("sigma must be >= 0".into()));
    }
    let mut rng = RngStream::new(seed).child(tag::DATA, 0).rng();
    let mut features = Vec::with_capacity(n);
    let mut responses = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.gen();
        let eps: f64 = rng.sample(StandardNormal);
        features.push(x);
        responses.push(sine_mean(x) + sigma * eps);
    }
    Dataset::new(features, responses, 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_features() {
        assert!(Dataset::new(vec![0.5, 1.2], vec![0.0, 0.0], 1).is_err());
    }

    #[test]
    fn noiseless_single_point_lies_on_the_curve() {
        let d = generate_sine_dataset(1, 0.0, 99).unwrap();
        assert_eq!(d.response(0), sine_mean(d.feature(0, 0)));
    }

    #[test]
    fn generation_is_bit_reproducible() {
        let a = generate_sine_dataset(100, 0.1, 7).unwrap();
        let b = generate_sine_dataset(100, 0.1, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noiseless_sample_has_zero_mse_against_mean_function() {
        let d = generate_sine_dataset(10_000, 0.0, 3).unwrap();
        let mse: f64 = (0..d.n())
            .map(|i| (d.response(i) - sine_mean(d.feature(i, 0))).powi(2))
            .sum::<f64>()
            / d.n() as f64;
        assert_eq!(mse, 0.0);
    }

    #[test]
    fn csv_roundtrip_and_scaling() {
        let csv = "0.1,0.2,3.5\n0.9,0.4,-1.0\n";
        let d = Dataset::from_csv(csv.as_bytes(), false).unwrap();
        assert_eq!(d.n(), 2);
        assert_eq!(d.p(), 2);
        assert_eq!(d.response(1), -1.0);

        let csv = "1.0,3.5\n3.0,-1.0\n5.0,0.0\n";
        let d = Dataset::from_csv(csv.as_bytes(), true).unwrap();
        assert_eq!(d.feature(0, 0), 0.0);
        assert_eq!(d.feature(1, 0), 0.5);
        assert_eq!(d.feature(2, 0), 1.0);
    }
}
