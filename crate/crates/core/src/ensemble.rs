//! Additive tree models: a constant offset plus ordered `(coefficient, tree)`
//! terms. This is the runtime representation of the boosting iterate; the
//! measure view is computed on demand.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::FittedTree;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    p: usize,
    offset: f64,
    terms: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    pub tree: FittedTree,
}

impl Ensemble {
    pub fn constant(p: usize, offset: f64) -> Self {
        Ensemble {
            p,
            offset,
            terms: Vec::new(),
        }
    }

    pub fn push(&mut self, coeff: f64, tree: FittedTree) {
        debug_assert_eq!(tree.p(), self.p);
        self.terms.push(Term { coeff, tree });
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    /// Evaluation `offset + sum coeff * tree(x)`, accumulated in term order so
    /// re-evaluation reproduces incremental updates bit for bit.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let mut acc = self.offset;
        for term in &self.terms {
            acc += term.coeff * term.tree.predict(x)?;
        }
        Ok(acc)
    }

    /// Truncates to the first `n_terms` trees (used for trajectory snapshots).
    pub fn prefix(&self, n_terms: usize) -> Result<Ensemble> {
        if n_terms > self.terms.len() {
            return Err(Error::InvalidInput("prefix longer than ensemble".into()));
        }
        Ok(Ensemble {
            p: self.p,
            offset: self.offset,
            terms: self.terms[..n_terms].to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::rng::RngStream;
    use crate::tree::fit_regression_tree;

    #[test]
    fn constant_ensemble_predicts_offset() {
        let e = Ensemble::constant(2, 1.5);
        assert_eq!(e.predict(&[0.3, 0.7]).unwrap(), 1.5);
    }

    #[test]
    fn prediction_accumulates_in_order() {
        let data = crate::dataset::generate_sine_dataset(30, 0.0, 1).unwrap();
        let values = data.responses().to_vec();
        let config = Config::default();
        let mut e = Ensemble::constant(1, 0.25);
        for b in 0..3 {
            let tree = fit_regression_tree(&data, &values, &config, RngStream::new(b));
            e.push(0.1, tree);
        }
        let x = [0.5];
        let mut manual = 0.25;
        for term in e.terms() {
            manual += term.coeff * term.tree.predict(&x).unwrap();
        }
        assert_eq!(e.predict(&x).unwrap(), manual);
        assert_eq!(e.prefix(2).unwrap().n_terms(), 2);
    }
}
