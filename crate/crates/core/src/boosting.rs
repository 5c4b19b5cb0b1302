//! The finite-learning-rate gradient-boosting Markov chain.
//!
//! Each step fits one softmax gradient tree at the current fitted values and
//! appends it to the ensemble with coefficient `lambda`. Fitted values at the
//! sample points are maintained incrementally; a debug assertion re-evaluates
//! the ensemble at the end of a chain to bound drift.

use std::io::Write;

use crate::config::Config;
use crate::dataset::Dataset;
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::loss::init_constant;
use crate::rng::{tag, RngStream};
use crate::tree::fit_gradient_tree;

/// The boosting iterate: ensemble, fitted values at the sample points, and
/// the step counter.
#[derive(Debug, Clone)]
pub struct BoostState {
    pub ensemble: Ensemble,
    pub fitted_values: Vec<f64>,
    pub step: usize,
}

impl BoostState {
    /// Rebuilds a state from a serialized ensemble, re-evaluating fitted
    /// values in term order (bit-identical to the incremental updates).
    pub fn resume(ensemble: Ensemble, dataset: &Dataset, step: usize) -> Result<Self> {
        let fitted_values = (0..dataset.n())
            .map(|i| ensemble.predict(dataset.point(i)))
            .collect::<Result<_>>()?;
        Ok(BoostState {
            ensemble,
            fitted_values,
            step,
        })
    }
}

/// One per-step trajectory record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// Rescaled time `t = lambda * step`.
    pub t: f64,
    /// Training error `L_n(F) = sum_i L(y_i, F(x_i))`.
    pub train_error: f64,
    /// Mean residual `(1/n) sum_i -d1(y_i, F(x_i))`.
    pub mean_residual: f64,
    /// Sup norm of the tree added at this step (0 for the init record).
    pub tree_sup_norm: f64,
}

/// Trajectory of a chain: one record per executed step (plus the init
/// record) and optional ensemble snapshots at requested rescaled times.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<(f64, Ensemble)>,
}

impl TrajectoryRecord {
    /// Writes `step,t,train_error,mean_residual,tree_sup_norm` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "step,t,train_error,mean_residual,tree_sup_norm")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.step, r.t, r.train_error, r.mean_residual, r.tree_sup_norm
            )?;
        }
        Ok(())
    }
}

fn diagnostics(dataset: &Dataset, config: &Config, fitted: &[f64]) -> Result<(f64, f64)> {
    let mut train_error = 0.0;
    let mut residual_sum = 0.0;
    for i in 0..dataset.n() {
        let (value, d1, _) = config.loss.eval(dataset.response(i), fitted[i])?;
        train_error += value;
        residual_sum -= d1;
    }
    Ok((train_error, residual_sum / dataset.n() as f64))
}

/// Initializes the chain at the constant empirical-loss minimizer.
pub fn boost_init(dataset: &Dataset, config: &Config) -> Result<BoostState> {
    let init = init_constant(dataset, config.loss)?;
    boost_init_with_constant(dataset, init.value)
}

/// Initializes the chain at an arbitrary constant (used to study non-centered
/// starts; the standard init has centered residuals).
pub fn boost_init_with_constant(dataset: &Dataset, constant: f64) -> Result<BoostState> {
    Ok(BoostState {
        ensemble: Ensemble::constant(dataset.p(), constant),
        fitted_values: vec![constant; dataset.n()],
        step: 0,
    })
}

/// Executes one boosting step in place and returns its trajectory record.
/// `chain_stream` is the stream of the whole chain; the step's tree uses the
/// `(STEP, m) -> (TREE, 0)` coordinates.
pub fn boost_step(
    state: &mut BoostState,
    dataset: &Dataset,
    config: &Config,
    chain_stream: RngStream,
) -> Result<StepRecord> {
    let stream = chain_stream
        .child(tag::STEP, state.step as u64)
        .child(tag::TREE, 0);
    let tree = fit_gradient_tree(dataset, &state.fitted_values, config.loss, config, stream)?;

    // Newton leaf values are weighted means of d1/d2, so the added tree is
    // bounded by the largest per-sample ratio.
    #[cfg(debug_assertions)]
    {
        let bound = (0..dataset.n())
            .map(|i| {
                let (_, d1, d2) = config
                    .loss
                    .eval(dataset.response(i), state.fitted_values[i])
                    .unwrap();
                (d1 / d2).abs()
            })
            .fold(0.0f64, f64::max);
        debug_assert!(tree.sup_norm() <= bound * (1.0 + 1e-12) + 1e-300);
    }

    let sup = tree.sup_norm();
    for i in 0..dataset.n() {
        let leaf = tree.partition().leaf_index(dataset.point(i))?;
        state.fitted_values[i] += config.lambda * tree.leaf_values()[leaf];
        if !state.fitted_values[i].is_finite() {
            return Err(Error::NonFinite(format!(
                "fitted value at sample {i} after step {}",
                state.step
            )));
        }
    }
    state.ensemble.push(config.lambda, tree);
    state.step += 1;
    let (train_error, mean_residual) = diagnostics(dataset, config, &state.fitted_values)?;
    Ok(StepRecord {
        step: state.step,
        t: config.lambda * state.step as f64,
        train_error,
        mean_residual,
        tree_sup_norm: sup,
    })
}

/// Runs `config.steps` boosting steps from the standard init, recording the
/// trajectory and snapshots at the requested rescaled times `t` (each mapped
/// to the iterate `[t/lambda]`).
pub fn run_chain(
    dataset: &Dataset,
    config: &Config,
    snapshot_times: &[f64],
) -> Result<(BoostState, TrajectoryRecord)> {
    let mut state = boost_init(dataset, config)?;
    let chain_stream = RngStream::new(config.seed);
    let trajectory = run_chain_with(
        &mut state,
        dataset,
        config,
        chain_stream,
        config.steps,
        snapshot_times,
    )?;
    Ok((state, trajectory))
}

/// Continues a chain in place for `steps` further steps.
pub fn run_chain_with(
    state: &mut BoostState,
    dataset: &Dataset,
    config: &Config,
    chain_stream: RngStream,
    steps: usize,
    snapshot_times: &[f64],
) -> Result<TrajectoryRecord> {
    let snapshot_steps: Vec<usize> = snapshot_times
        .iter()
        .map(|&t| ((t / config.lambda) + 1e-9).floor() as usize)
        .collect();
    let mut records = Vec::with_capacity(steps + 1);
    let mut snapshots = Vec::new();
    let (train_error, mean_residual) = diagnostics(dataset, config, &state.fitted_values)?;
    records.push(StepRecord {
        step: state.step,
        t: config.lambda * state.step as f64,
        train_error,
        mean_residual,
        tree_sup_norm: 0.0,
    });
    let take_snapshots = |state: &BoostState, snapshots: &mut Vec<(f64, Ensemble)>| {
        for (k, &m) in snapshot_steps.iter().enumerate() {
            if m == state.step {
                snapshots.push((snapshot_times[k], state.ensemble.clone()));
            }
        }
    };
    take_snapshots(state, &mut snapshots);
    for _ in 0..steps {
        records.push(boost_step(state, dataset, config, chain_stream)?);
        take_snapshots(state, &mut snapshots);
    }
    #[cfg(debug_assertions)]
    for i in 0..dataset.n() {
        let direct = state.ensemble.predict(dataset.point(i)).unwrap();
        debug_assert!((direct - state.fitted_values[i]).abs() <= 1e-9);
    }
    Ok(TrajectoryRecord { records, snapshots })
}
