//! The vanishing-learning-rate limit: Monte-Carlo estimation of the
//! infinitesimal boosting operator (the expectation of the softmax gradient
//! tree at the current fit), an exact 1-d oracle for it, explicit Euler
//! integration of the limiting ODE, and the learning-rate sweep that fits
//! the convergence rate of the finite-rate chain to the ODE solution.

use rayon::prelude::*;

use crate::boosting::{boost_init, run_chain_with, BoostState};
use crate::config::Config;
use crate::dataset::Dataset;
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::measure::{l2_norm, l2x_distance_1d, SignedAtomMeasure, StepFunction1d, Weighting};
use crate::rng::{tag, RngStream};
use crate::tree::fit_gradient_tree;

/// Monte-Carlo estimate of the operator at one fit: the average of `b`
/// independent gradient trees, with per-sample-point standard errors.
#[derive(Debug, Clone)]
pub struct OperatorEstimate {
    /// `b` terms with coefficient `1/b`; evaluation is the tree average.
    pub mean_tree: Ensemble,
    pub b: usize,
    /// Average tree prediction at each sample point (the Euler drift there).
    pub mean_at_samples: Vec<f64>,
    /// Monte-Carlo standard error of `mean_at_samples` (0 when `b = 1`).
    pub standard_error_at_samples: Vec<f64>,
}

/// Fits `b` independent softmax gradient trees at the fit `f_values` and
/// averages them. Tree `i` uses the stream `rng.child(TREE, i)`, so with
/// `b = 1` the estimate consumes exactly the randomness of one boosting step.
pub fn estimate_operator(
    f_values: &[f64],
    dataset: &Dataset,
    config: &Config,
    b: usize,
    rng: RngStream,
) -> Result<OperatorEstimate> {
    assert!(b >= 1);
    let n = dataset.n();
    let fitted: Vec<(crate::tree::FittedTree, Vec<f64>)> = (0..b)
        .into_par_iter()
        .map(|i| {
            let tree = fit_gradient_tree(
                dataset,
                f_values,
                config.loss,
                config,
                rng.child(tag::TREE, i as u64),
            )?;
            let preds = (0..n)
                .map(|s| tree.predict(dataset.point(s)))
                .collect::<Result<Vec<f64>>>()?;
            Ok((tree, preds))
        })
        .collect::<Result<_>>()?;

    // compensated summation: with large b the plain running sum drifts by
    // ~b*eps, which dwarfs the MC standard error when the trees agree
    let mut mean_at_samples = vec![0.0; n];
    let mut carry = vec![0.0; n];
    for (_, preds) in &fitted {
        for s in 0..n {
            let y = preds[s] - carry[s];
            let t = mean_at_samples[s] + y;
            carry[s] = (t - mean_at_samples[s]) - y;
            mean_at_samples[s] = t;
        }
    }
    for v in &mut mean_at_samples {
        *v /= b as f64;
    }
    let mut standard_error_at_samples = vec![0.0; n];
    if b > 1 {
        for (_, preds) in &fitted {
            for s in 0..n {
                let d = preds[s] - mean_at_samples[s];
                standard_error_at_samples[s] += d * d;
            }
        }
        for v in &mut standard_error_at_samples {
            *v = (*v / (b - 1) as f64 / b as f64).sqrt();
        }
    }
    let mut mean_tree = Ensemble::constant(dataset.p(), 0.0);
    let coeff = 1.0 / b as f64;
    for (tree, _) in fitted {
        mean_tree.push(coeff, tree);
    }
    Ok(OperatorEstimate {
        mean_tree,
        b,
        mean_at_samples,
        standard_error_at_samples,
    })
}

/// Exact operator values at the sample points for `p = 1`, depth 1, beta 0
/// (any K: the uniform choice among i.i.d. uniform candidate thresholds is
/// itself a uniform threshold). Integrates over the threshold in closed form:
/// leaf memberships are constant between consecutive distinct abscissae, so
/// the expectation is a finite sum of gap lengths times Newton leaf values.
pub fn exact_operator_1d(f_values: &[f64], dataset: &Dataset, loss: Loss) -> Result<Vec<f64>> {
    if dataset.p() != 1 {
        return Err(Error::Unsupported(format!(
            "exact operator requires p = 1 (got p = {})",
            dataset.p()
        )));
    }
    let n = dataset.n();
    assert_eq!(f_values.len(), n);
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    for i in 0..n {
        let (_, g, h) = loss.eval(dataset.response(i), f_values[i])?;
        d1[i] = g;
        d2[i] = h;
    }
    let mut bounds: Vec<f64> = (0..n).map(|i| dataset.feature(i, 0)).collect();
    bounds.push(0.0);
    bounds.push(1.0);
    bounds.sort_by(f64::total_cmp);
    bounds.dedup();

    let mut out = vec![0.0; n];
    for w in bounds.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let len = hi - lo;
        if len <= 0.0 {
            continue;
        }
        let mid = 0.5 * (lo + hi);
        // threshold anywhere in (lo, hi): x < mid iff x goes to the left leaf
        let mut sums = [[0.0f64; 2]; 2];
        let mut counts = [0usize; 2];
        for i in 0..n {
            let side = usize::from(dataset.feature(i, 0) >= mid);
            sums[side][0] += d1[i];
            sums[side][1] += d2[i];
            counts[side] += 1;
        }
        let leaf_value = |side: usize| {
            if counts[side] > 0 {
                -sums[side][0] / sums[side][1]
            } else {
                0.0
            }
        };
        let values = [leaf_value(0), leaf_value(1)];
        for i in 0..n {
            out[i] += len * values[usize::from(dataset.feature(i, 0) >= mid)];
        }
    }
    Ok(out)
}

/// Per-grid-time diagnostics of an Euler trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeDiagnostics {
    pub t: f64,
    /// `L_n(F_t) = sum_i L(y_i, F_t(x_i))`.
    pub train_error: f64,
    pub mean_residual: f64,
    pub max_abs_residual: f64,
    /// Largest per-sample MC standard error of the step that produced this
    /// iterate (0 at t = 0).
    pub max_standard_error: f64,
}

/// Explicit-Euler trajectory of the limiting ODE. Iterates at the sample
/// points are kept for every grid time; full ensembles only at requested
/// snapshot times and (when asked for) at the end — a long run accumulates
/// `steps * b` trees, which dwarfs everything else.
#[derive(Debug, Clone)]
pub struct OdeTrajectory {
    pub diagnostics: Vec<OdeDiagnostics>,
    /// Fit at the sample points, one row per grid time.
    pub sample_values: Vec<Vec<f64>>,
    pub snapshots: Vec<(f64, Ensemble)>,
    /// Present only when snapshot times were requested at `t_end` or the
    /// integration ran with [`EnsembleTracking::Keep`].
    pub final_ensemble: Option<Ensemble>,
}

/// Whether the Euler loop accumulates the full cumulative ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleTracking {
    Keep,
    Discard,
}

impl OdeTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.diagnostics.iter().map(|d| d.t).collect()
    }

    /// Writes `step,t,train_error,mean_residual,max_abs_residual` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "step,t,train_error,mean_residual,max_abs_residual")?;
        for (k, d) in self.diagnostics.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{}",
                k, d.t, d.train_error, d.mean_residual, d.max_abs_residual
            )?;
        }
        Ok(())
    }
}

fn ode_diagnostics(dataset: &Dataset, loss: Loss, fitted: &[f64], t: f64, se: f64) -> Result<OdeDiagnostics> {
    let mut train_error = 0.0;
    let mut residual_sum = 0.0;
    let mut max_abs = 0.0f64;
    for i in 0..dataset.n() {
        let (value, d1, _) = loss.eval(dataset.response(i), fitted[i])?;
        train_error += value;
        residual_sum -= d1;
        max_abs = max_abs.max(d1.abs());
    }
    Ok(OdeDiagnostics {
        t,
        train_error,
        mean_residual: residual_sum / dataset.n() as f64,
        max_abs_residual: max_abs,
        max_standard_error: se,
    })
}

/// Euler integration `F_{k+1} = F_k + h * estimate_operator(F_k, ..., b)`
/// from the standard constant init, over `floor(t_end / h)` steps. With
/// `b = 1` and `h = lambda` the trajectory is bitwise identical to
/// `run_chain` under the shared stream contract.
pub fn euler_integrate(
    dataset: &Dataset,
    config: &Config,
    t_end: f64,
    h: f64,
    b: usize,
    rng: RngStream,
    snapshot_times: &[f64],
    tracking: EnsembleTracking,
) -> Result<OdeTrajectory> {
    let init = boost_init(dataset, config)?;
    euler_integrate_from(init, dataset, config, t_end, h, b, rng, snapshot_times, tracking)
}

/// As [`euler_integrate`] but from an arbitrary constant start (used to study
/// relaxation from non-centered initial conditions).
pub fn euler_integrate_from_constant(
    dataset: &Dataset,
    config: &Config,
    f0: f64,
    t_end: f64,
    h: f64,
    b: usize,
    rng: RngStream,
    snapshot_times: &[f64],
    tracking: EnsembleTracking,
) -> Result<OdeTrajectory> {
    let init = crate::boosting::boost_init_with_constant(dataset, f0)?;
    euler_integrate_from(init, dataset, config, t_end, h, b, rng, snapshot_times, tracking)
}

#[allow(clippy::too_many_arguments)]
fn euler_integrate_from(
    init: BoostState,
    dataset: &Dataset,
    config: &Config,
    t_end: f64,
    h: f64,
    b: usize,
    rng: RngStream,
    snapshot_times: &[f64],
    tracking: EnsembleTracking,
) -> Result<OdeTrajectory> {
    assert!(h > 0.0 && t_end >= 0.0 && b >= 1);
    let keep = tracking == EnsembleTracking::Keep || !snapshot_times.is_empty();
    let steps = (t_end / h + 1e-9).floor() as usize;
    let snapshot_steps: Vec<usize> = snapshot_times
        .iter()
        .map(|&t| ((t / h) + 1e-9).floor() as usize)
        .collect();
    let mut ensemble = init.ensemble;
    let mut fitted = init.fitted_values;
    let mut diagnostics = vec![ode_diagnostics(dataset, config.loss, &fitted, 0.0, 0.0)?];
    let mut sample_values = vec![fitted.clone()];
    let mut snapshots = Vec::new();
    let take_snapshots = |step: usize, ensemble: &Ensemble, snapshots: &mut Vec<(f64, Ensemble)>| {
        for (s, &m) in snapshot_steps.iter().enumerate() {
            if m == step {
                snapshots.push((snapshot_times[s], ensemble.clone()));
            }
        }
    };
    take_snapshots(0, &ensemble, &mut snapshots);
    for k in 0..steps {
        let est = estimate_operator(&fitted, dataset, config, b, rng.child(tag::STEP, k as u64))?;
        for i in 0..dataset.n() {
            fitted[i] += h * est.mean_at_samples[i];
            if !fitted[i].is_finite() {
                return Err(Error::NonFinite(format!(
                    "fit at sample {i} after Euler step {k}"
                )));
            }
        }
        if keep {
            for term in est.mean_tree.terms() {
                ensemble.push(h * term.coeff, term.tree.clone());
            }
        }
        let se = est
            .standard_error_at_samples
            .iter()
            .fold(0.0f64, |m, &v| m.max(v));
        diagnostics.push(ode_diagnostics(
            dataset,
            config.loss,
            &fitted,
            (k + 1) as f64 * h,
            se,
        )?);
        sample_values.push(fitted.clone());
        take_snapshots(k + 1, &ensemble, &mut snapshots);
    }
    Ok(OdeTrajectory {
        diagnostics,
        sample_values,
        snapshots,
        final_ensemble: keep.then_some(ensemble),
    })
}

/// Long-time summary of an Euler trajectory: residual and training-error
/// decay, plus any training-error increase between consecutive grid times
/// beyond the Monte-Carlo tolerance `5 * h * max standard error`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LongTimeReport {
    pub initial_max_abs_residual: f64,
    pub final_max_abs_residual: f64,
    pub initial_train_error: f64,
    pub final_train_error: f64,
    /// Grid indices `k` where `L_n` rose from `k-1` beyond tolerance.
    pub monotone_violations: Vec<usize>,
}

pub fn long_time_diagnostics(trajectory: &OdeTrajectory) -> LongTimeReport {
    let d = &trajectory.diagnostics;
    assert!(!d.is_empty());
    let h = if d.len() > 1 { d[1].t - d[0].t } else { 0.0 };
    let mut monotone_violations = Vec::new();
    for k in 1..d.len() {
        let tol = 5.0 * h * d[k].max_standard_error;
        if d[k].train_error > d[k - 1].train_error + tol {
            monotone_violations.push(k);
        }
    }
    LongTimeReport {
        initial_max_abs_residual: d[0].max_abs_residual,
        final_max_abs_residual: d[d.len() - 1].max_abs_residual,
        initial_train_error: d[0].train_error,
        final_train_error: d[d.len() - 1].train_error,
        monotone_violations,
    }
}

/// Tuning knobs of [`lambda_sweep`].
#[derive(Debug, Clone)]
pub struct SweepOptions {
    /// Reference Euler step; defaults to `min(lambdas) / 10`.
    pub h_ref: Option<f64>,
    /// Replication count of the reference drift estimates.
    pub b_ref: usize,
    /// Spacing of the rescaled snapshot times where the sup is taken.
    pub snapshot_spacing: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            h_ref: None,
            b_ref: 200,
            snapshot_spacing: 0.1,
        }
    }
}

/// Rate report of a learning-rate sweep.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SweepReport {
    pub lambdas: Vec<f64>,
    pub per_lambda_median_error: Vec<f64>,
    pub per_lambda_errors: Vec<Vec<f64>>,
    /// Least-squares slope of `log median error` vs `log lambda`
    /// (absent for a single lambda).
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub t_end: f64,
    pub replications: usize,
    pub h_ref: f64,
    pub b_ref: usize,
    pub snapshot_spacing: f64,
    pub config: Config,
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len();
    if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    }
}

/// Per-snapshot representation of one chain, supporting the two exact
/// distance paths (1-d prefix integrals, or overlay-grid integration).
enum ChainSnapshot {
    Fn1d(StepFunction1d),
    Measure(SignedAtomMeasure),
}

/// Sweeps descending learning rates against a common reference ODE solution
/// and fits the log-log convergence rate of
/// `E(lambda) = sup over snapshot times t of |F^lambda_[t/lambda] - F_t|`
/// in the exact `L2` metric mixing the face measure with the sample points.
///
/// Chains are replicated `replications` times per lambda on disjoint
/// streams; the reported errors are per-replication sups, summarized by
/// their median per lambda.
pub fn lambda_sweep(
    dataset: &Dataset,
    config: &Config,
    lambdas: &[f64],
    t_end: f64,
    replications: usize,
    options: &SweepOptions,
) -> Result<SweepReport> {
    if lambdas.is_empty() || replications == 0 {
        return Err(Error::InvalidInput(
            "need at least one lambda and one replication".into(),
        ));
    }
    if lambdas.windows(2).any(|w| w[0] <= w[1]) || *lambdas.last().unwrap() <= 0.0 {
        return Err(Error::InvalidInput(
            "lambdas must be positive and strictly descending".into(),
        ));
    }
    if dataset.p() > 3 {
        return Err(Error::Unsupported(
            "exact sweep metric is limited to p <= 3".into(),
        ));
    }
    let one_d = dataset.p() == 1;
    let lambda_min = *lambdas.last().unwrap();
    let h_ref = options.h_ref.unwrap_or(lambda_min / 10.0);
    let mut snapshot_times = Vec::new();
    let mut t = options.snapshot_spacing;
    while t <= t_end + 1e-9 {
        snapshot_times.push(t);
        t += options.snapshot_spacing;
    }
    let sample_xs: Vec<f64> = if one_d {
        (0..dataset.n()).map(|i| dataset.feature(i, 0)).collect()
    } else {
        Vec::new()
    };

    // all chains first, keeping only per-snapshot step functions / measures
    let root = RngStream::new(config.seed);
    let jobs: Vec<(usize, usize)> = (0..lambdas.len())
        .flat_map(|li| (0..replications).map(move |r| (li, r)))
        .collect();
    let chains: Vec<Vec<ChainSnapshot>> = jobs
        .par_iter()
        .map(|&(li, r)| {
            let lambda = lambdas[li];
            let chain_config = Config {
                lambda,
                steps: (t_end / lambda + 1e-9).floor() as usize,
                ..config.clone()
            };
            let stream = root.child(tag::LAMBDA, li as u64).child(tag::REPLICATION, r as u64);
            let mut state = boost_init(dataset, &chain_config)?;
            let trajectory = run_chain_with(
                &mut state,
                dataset,
                &chain_config,
                stream,
                chain_config.steps,
                &snapshot_times,
            )?;
            debug_assert_eq!(trajectory.snapshots.len(), snapshot_times.len());
            trajectory
                .snapshots
                .iter()
                .map(|(_, ensemble)| {
                    let m = SignedAtomMeasure::from_ensemble(ensemble);
                    Ok(if one_d {
                        ChainSnapshot::Fn1d(StepFunction1d::from_measure(&m)?)
                    } else {
                        ChainSnapshot::Measure(m)
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    // one reference pass; distances are taken as each snapshot time is reached
    let mut errors = vec![vec![0.0f64; replications]; lambdas.len()];
    let ref_stream = root.child(tag::REFERENCE, 0);
    let ref_steps = (t_end / h_ref + 1e-9).floor() as usize;
    let snapshot_steps: Vec<usize> = snapshot_times
        .iter()
        .map(|&t| ((t / h_ref) + 1e-9).floor() as usize)
        .collect();
    let init = boost_init(dataset, config)?;
    let mut fitted = init.fitted_values;
    let mut ref_measure = SignedAtomMeasure::from_ensemble(&init.ensemble);
    let mut next_snapshot = 0usize;
    for k in 0..=ref_steps {
        while next_snapshot < snapshot_steps.len() && snapshot_steps[next_snapshot] == k {
            let ref_fn = if one_d {
                Some(StepFunction1d::from_measure(&ref_measure)?)
            } else {
                None
            };
            for (job, snaps) in jobs.iter().zip(&chains) {
                let (li, r) = *job;
                let d = match (&snaps[next_snapshot], &ref_fn) {
                    (ChainSnapshot::Fn1d(chain_fn), Some(ref_fn)) => {
                        l2x_distance_1d(chain_fn, ref_fn, &sample_xs)
                    }
                    (ChainSnapshot::Measure(m), None) => {
                        l2_norm(&m.sub(&ref_measure), Weighting::NuX(dataset))?
                    }
                    _ => unreachable!(),
                };
                errors[li][r] = errors[li][r].max(d);
            }
            next_snapshot += 1;
        }
        if k == ref_steps {
            break;
        }
        let est = estimate_operator(
            &fitted,
            dataset,
            config,
            options.b_ref,
            ref_stream.child(tag::STEP, k as u64),
        )?;
        for i in 0..dataset.n() {
            fitted[i] += h_ref * est.mean_at_samples[i];
        }
        for term in est.mean_tree.terms() {
            ref_measure.add_tree(&term.tree, h_ref * term.coeff);
        }
    }

    let per_lambda_median_error: Vec<f64> = errors.iter().map(|e| median(e)).collect();
    let (slope, intercept) = if lambdas.len() >= 2 {
        let xs: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
        let ys: Vec<f64> = per_lambda_median_error.iter().map(|e| e.ln()).collect();
        let xbar = xs.iter().sum::<f64>() / xs.len() as f64;
        let ybar = ys.iter().sum::<f64>() / ys.len() as f64;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
        let slope = sxy / sxx;
        (Some(slope), Some(ybar - slope * xbar))
    } else {
        (None, None)
    };
    Ok(SweepReport {
        lambdas: lambdas.to_vec(),
        per_lambda_median_error,
        per_lambda_errors: errors,
        slope,
        intercept,
        t_end,
        replications,
        h_ref,
        b_ref: options.b_ref,
        snapshot_spacing: options.snapshot_spacing,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boosting::run_chain;
    use crate::dataset::generate_sine_dataset;

    fn base_config() -> Config {
        Config {
            beta: 0.0,
            k: 5,
            depth: 1,
            lambda: 0.05,
            steps: 0,
            seed: 13,
            loss: Loss::SquaredError,
        }
    }

    #[test]
    fn zero_residuals_give_the_exact_zero_function() {
        let data = Dataset::new(vec![0.1, 0.5, 0.9], vec![1.0, -2.0, 0.5], 1).unwrap();
        let f = data.responses().to_vec();
        let est = estimate_operator(&f, &data, &base_config(), 7, RngStream::new(2)).unwrap();
        assert_eq!(est.mean_at_samples, vec![0.0; 3]);
        assert_eq!(est.standard_error_at_samples, vec![0.0; 3]);
        assert_eq!(est.mean_tree.predict(&[0.3]).unwrap(), 0.0);
    }

    #[test]
    fn single_point_estimate_is_the_residual_exactly() {
        let data = Dataset::new(vec![0.4], vec![1.5], 1).unwrap();
        for (beta, depth, b) in [(0.0, 1, 1), (3.0, 2, 5), (f64::INFINITY, 3, 2)] {
            let config = Config {
                beta,
                depth,
                ..base_config()
            };
            let est = estimate_operator(&[0.25], &data, &config, b, RngStream::new(4)).unwrap();
            assert_eq!(est.mean_at_samples[0], 1.25);
        }
    }

    #[test]
    fn mean_tree_evaluation_averages_the_trees() {
        let data = generate_sine_dataset(15, 0.1, 6).unwrap();
        let f = vec![0.0; 15];
        let est = estimate_operator(&f, &data, &base_config(), 9, RngStream::new(6)).unwrap();
        for i in 0..data.n() {
            let v = est.mean_tree.predict(data.point(i)).unwrap();
            assert!((v - est.mean_at_samples[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn exact_operator_two_point_example() {
        let data = Dataset::new(vec![0.2, 0.8], vec![1.0, -1.0], 1).unwrap();
        let out = exact_operator_1d(&[0.0, 0.0], &data, Loss::SquaredError).unwrap();
        assert!((out[0] - 0.6).abs() <= 1e-15);
        assert!((out[1] + 0.6).abs() <= 1e-15);
    }

    #[test]
    fn exact_operator_single_point_and_constant_residuals() {
        let one = Dataset::new(vec![0.3], vec![2.0], 1).unwrap();
        let out = exact_operator_1d(&[0.5], &one, Loss::SquaredError).unwrap();
        assert!((out[0] - 1.5).abs() <= 1e-15);

        let data = Dataset::new(vec![0.1, 0.6, 0.9], vec![0.7, 0.7, 0.7], 1).unwrap();
        let out = exact_operator_1d(&[0.0; 3], &data, Loss::SquaredError).unwrap();
        for v in out {
            assert!((v - 0.7).abs() <= 1e-12);
        }
    }

    #[test]
    fn exact_operator_rejects_higher_dimensions() {
        let data = Dataset::new(vec![0.1, 0.2], vec![1.0], 2).unwrap();
        assert!(exact_operator_1d(&[0.0], &data, Loss::SquaredError).is_err());
    }

    #[test]
    fn mc_estimate_matches_the_oracle_within_standard_errors() {
        let data = Dataset::new(vec![0.2, 0.8], vec![1.0, -1.0], 1).unwrap();
        let f = vec![0.0; 2];
        let exact = exact_operator_1d(&f, &data, Loss::SquaredError).unwrap();
        let est = estimate_operator(&f, &data, &base_config(), 20_000, RngStream::new(8)).unwrap();
        for i in 0..2 {
            let z = (est.mean_at_samples[i] - exact[i]).abs() / est.standard_error_at_samples[i];
            assert!(z <= 5.0, "sample {i}: z = {z}");
        }
    }

    #[test]
    fn euler_with_b1_is_bitwise_the_boosting_chain() {
        let data = generate_sine_dataset(40, 0.1, 9).unwrap();
        let config = Config {
            beta: 1.0,
            k: 10,
            lambda: 0.05,
            steps: 20,
            ..base_config()
        };
        let (state, chain_traj) = run_chain(&data, &config, &[]).unwrap();
        let ode = euler_integrate(
            &data,
            &config,
            1.0,
            config.lambda,
            1,
            RngStream::new(config.seed),
            &[],
            EnsembleTracking::Keep,
        )
        .unwrap();
        assert_eq!(ode.sample_values.last().unwrap(), &state.fitted_values);
        assert_eq!(ode.final_ensemble.unwrap(), state.ensemble);
        for (d, r) in ode.diagnostics.iter().zip(&chain_traj.records) {
            assert_eq!(d.train_error, r.train_error);
            assert_eq!(d.mean_residual, r.mean_residual);
        }
    }

    #[test]
    fn zero_horizon_yields_the_init_only() {
        let data = generate_sine_dataset(10, 0.1, 3).unwrap();
        let ode = euler_integrate(
            &data,
            &base_config(),
            0.0,
            0.1,
            2,
            RngStream::new(1),
            &[0.0],
            EnsembleTracking::Discard,
        )
        .unwrap();
        assert_eq!(ode.diagnostics.len(), 1);
        assert_eq!(ode.snapshots.len(), 1);
        assert_eq!(ode.final_ensemble.unwrap().n_terms(), 0);
    }

    #[test]
    fn mean_residual_contracts_like_one_minus_h() {
        let data = generate_sine_dataset(25, 0.2, 12).unwrap();
        let h = 0.2;
        let ode = euler_integrate_from_constant(
            &data,
            &base_config(),
            0.5,
            2.0,
            h,
            3,
            RngStream::new(5),
            &[],
            EnsembleTracking::Discard,
        )
        .unwrap();
        let r0 = ode.diagnostics[0].mean_residual;
        for (k, d) in ode.diagnostics.iter().enumerate() {
            let expect = r0 * (1.0 - h).powi(k as i32);
            assert!((d.mean_residual - expect).abs() <= 1e-10);
        }
    }

    #[test]
    fn critical_start_long_time_report_is_zero() {
        let data = Dataset::new(vec![0.2, 0.7], vec![1.0, -1.0], 1).unwrap();
        let config = base_config();
        let mut traj = euler_integrate(
            &data,
            &config,
            0.0,
            0.1,
            1,
            RngStream::new(1),
            &[],
            EnsembleTracking::Discard,
        )
        .unwrap();
        // interpolating start: overwrite the init with the responses
        traj.diagnostics[0] =
            super::ode_diagnostics(&data, config.loss, data.responses(), 0.0, 0.0).unwrap();
        let report = long_time_diagnostics(&traj);
        assert_eq!(report.initial_max_abs_residual, 0.0);
        assert_eq!(report.final_train_error, 0.0);
        assert!(report.monotone_violations.is_empty());
    }

    #[test]
    fn single_lambda_sweep_has_no_slope() {
        let data = generate_sine_dataset(20, 0.1, 7).unwrap();
        let options = SweepOptions {
            b_ref: 5,
            ..SweepOptions::default()
        };
        let report =
            lambda_sweep(&data, &base_config(), &[0.1], 0.5, 1, &options).unwrap();
        assert!(report.slope.is_none());
        assert_eq!(report.per_lambda_errors[0].len(), 1);
        assert_eq!(
            report.per_lambda_median_error[0],
            report.per_lambda_errors[0][0]
        );
        assert!(report.per_lambda_median_error[0].is_finite());
        let json = serde_json::to_string(&report).unwrap();
        let back: SweepReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.lambdas, report.lambdas);
    }

    #[test]
    fn sweep_rejects_bad_lambda_lists() {
        let data = generate_sine_dataset(5, 0.1, 1).unwrap();
        let options = SweepOptions::default();
        assert!(lambda_sweep(&data, &base_config(), &[], 1.0, 1, &options).is_err());
        assert!(lambda_sweep(&data, &base_config(), &[0.1, 0.2], 1.0, 1, &options).is_err());
        assert!(lambda_sweep(&data, &base_config(), &[0.1, 0.1], 1.0, 1, &options).is_err());
    }
}
