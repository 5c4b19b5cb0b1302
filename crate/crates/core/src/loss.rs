//! Loss functions with first and second derivatives in the prediction.
//!
//! All three losses have a strictly positive second derivative, so Newton
//! leaf values are always well defined on non-empty leaves.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Clamping bound for unbounded constant minimizers (pure-class inputs).
/// Well past the saturation point of the sigmoid in f64.
pub const Z_MAX: f64 = 36.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// `L(y,z) = (y-z)^2 / 2`.
    SquaredError,
    /// `L(y,z) = -y z + log(1+e^z)`, `y` in `{0,1}`.
    BinaryCrossEntropy,
    /// `L(y,z) = exp(-y z)`, `y` in `{-1,1}`.
    ExponentialMargin,
}

impl Loss {
    fn check_response(&self, y: f64) -> Result<()> {
        match self {
            Loss::SquaredError => Ok(()),
            Loss::BinaryCrossEntropy if y == 0.0 || y == 1.0 => Ok(()),
            Loss::BinaryCrossEntropy => Err(Error::Domain(format!(
                "binary cross entropy requires y in {{0,1}}, got {y}"
            ))),
            Loss::ExponentialMargin if y == -1.0 || y == 1.0 => Ok(()),
            Loss::ExponentialMargin => Err(Error::Domain(format!(
                "exponential margin requires y in {{-1,1}}, got {y}"
            ))),
        }
    }

    /// Returns `(L(y,z), dL/dz, d2L/dz2)`.
    pub fn eval(&self, y: f64, z: f64) -> Result<(f64, f64, f64)> {
        self.check_response(y)?;
        Ok(match self {
            Loss::SquaredError => {
                let r = y - z;
                (0.5 * r * r, -r, 1.0)
            }
            Loss::BinaryCrossEntropy => {
                // log(1+e^z) computed stably on both tails
                let value = if z > 0.0 {
                    -y * z + z + (-z).exp().ln_1p()
                } else {
                    -y * z + z.exp().ln_1p()
                };
                let p = sigmoid(z);
                (value, p - y, p * (1.0 - p))
            }
            Loss::ExponentialMargin => {
                let e = (-y * z).exp();
                (e, -y * e, e)
            }
        })
    }

    pub fn value(&self, y: f64, z: f64) -> Result<f64> {
        Ok(self.eval(y, z)?.0)
    }

    pub fn d1(&self, y: f64, z: f64) -> Result<f64> {
        Ok(self.eval(y, z)?.1)
    }

    pub fn d2(&self, y: f64, z: f64) -> Result<f64> {
        Ok(self.eval(y, z)?.2)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// The constant predictor minimizing the empirical loss, `argmin_z (1/n) sum L(y_i, z)`.
///
/// Closed form for squared error; safeguarded Newton otherwise. When the
/// minimizer is unbounded (e.g. all-ones binary cross entropy) the result is
/// clamped to `[-Z_MAX, Z_MAX]` and `clamped` is set.
pub fn init_constant(dataset: &Dataset, loss: Loss) -> Result<InitConstant> {
    let ys = dataset.responses();
    let n = ys.len() as f64;
    for &y in ys {
        loss.check_response(y)?;
    }
    if loss == Loss::SquaredError {
        return Ok(InitConstant {
            value: ys.iter().sum::<f64>() / n,
            clamped: false,
        });
    }
    // g(z) = sum_i d1(y_i, z) is strictly increasing since d2 > 0.
    let grad = |z: f64| -> f64 { ys.iter().map(|&y| loss.eval(y, z).unwrap().1).sum() };
    let (mut lo, mut hi) = (-Z_MAX, Z_MAX);
    let (glo, ghi) = (grad(lo), grad(hi));
    if glo >= 0.0 {
        return Ok(InitConstant {
            value: lo,
            clamped: glo > 0.0,
        });
    }
    if ghi <= 0.0 {
        return Ok(InitConstant {
            value: hi,
            clamped: ghi < 0.0,
        });
    }
    let tol = 1e-12 * n;
    let mut z = 0.0f64;
    for _ in 0..200 {
        let (g, h): (f64, f64) = ys
            .iter()
            .map(|&y| {
                let (_, d1, d2) = loss.eval(y, z).unwrap();
                (d1, d2)
            })
            .fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
        if g.abs() <= tol {
            return Ok(InitConstant {
                value: z,
                clamped: false,
            });
        }
        if g > 0.0 {
            hi = z;
        } else {
            lo = z;
        }
        let step = z - g / h;
        z = if step > lo && step < hi {
            step
        } else {
            0.5 * (lo + hi) // bisection fallback when Newton leaves the bracket
        };
    }
    Ok(InitConstant {
        value: z,
        clamped: false,
    })
}

/// Result of [`init_constant`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitConstant {
    pub value: f64,
    pub clamped: bool,
}
