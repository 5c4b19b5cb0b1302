//! The tree-function space: conversion of piecewise-constant trees and
//! ensembles to finite signed atomic measures on `[0,1)^p`, total-variation
//! and L2 norms, Jordan and face decompositions.
//!
//! A tree function satisfies `T(x) = mu([0,x])` for a unique signed atomic
//! measure `mu`. Each leaf indicator of a box `[a,b)` with value `c`
//! contributes `c * (-1)^|eps|` at the hypercube vertex `a + eps*(b-a)`,
//! for `eps` in `{0,1}^p`, vertices on the top faces (any coordinate equal
//! to 1) being dropped.

use std::collections::BTreeMap;
use std::io::Write;

use ordered_float::OrderedFloat;

use crate::dataset::Dataset;
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::tree::FittedTree;

type Point = Vec<OrderedFloat<f64>>;

/// Default cell budget for exact overlay computations.
pub const DEFAULT_CELL_BUDGET: usize = 10_000_000;

/// A finite map from points of `[0,1)^p` to nonzero signed masses.
///
/// Atoms are keyed by exact floating-point coordinates; coincident atoms
/// merge by addition and exact zeros are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedAtomMeasure {
    p: usize,
    atoms: BTreeMap<Point, f64>,
}

impl SignedAtomMeasure {
    pub fn zero(p: usize) -> Self {
        SignedAtomMeasure {
            p,
            atoms: BTreeMap::new(),
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Iterates atoms in lexicographic coordinate order.
    pub fn atoms(&self) -> impl Iterator<Item = (Vec<f64>, f64)> + '_ {
        self.atoms
            .iter()
            .map(|(k, &m)| (k.iter().map(|c| c.0).collect(), m))
    }

    pub fn mass_at(&self, point: &[f64]) -> f64 {
        let key: Point = point.iter().map(|&c| OrderedFloat(c)).collect();
        self.atoms.get(&key).copied().unwrap_or(0.0)
    }

    /// Adds `mass` at `point`, merging with any coincident atom and dropping
    /// exact zeros. Points on the top faces are rejected.
    pub fn deposit(&mut self, point: &[f64], mass: f64) {
        debug_assert_eq!(point.len(), self.p);
        debug_assert!(point.iter().all(|&c| (0.0..1.0).contains(&c)));
        if mass == 0.0 {
            return;
        }
        let key: Point = point.iter().map(|&c| OrderedFloat(c)).collect();
        let entry = self.atoms.entry(key.clone()).or_insert(0.0);
        *entry += mass;
        if *entry == 0.0 {
            self.atoms.remove(&key);
        }
    }

    /// The measure of a single tree, via inclusion-exclusion over each leaf box.
    pub fn from_tree(tree: &FittedTree) -> Self {
        let mut measure = SignedAtomMeasure::zero(tree.p());
        measure.add_tree(tree, 1.0);
        measure
    }

    /// The measure of an ensemble: an atom at the origin for the offset plus
    /// the coefficient-weighted tree measures.
    pub fn from_ensemble(ensemble: &Ensemble) -> Self {
        let mut measure = SignedAtomMeasure::zero(ensemble.p());
        measure.deposit(&vec![0.0; ensemble.p()], ensemble.offset());
        for term in ensemble.terms() {
            measure.add_tree(&term.tree, term.coeff);
        }
        measure
    }

    /// Adds `scale` times the measure of `tree`.
    pub fn add_tree(&mut self, tree: &FittedTree, scale: f64) {
        let p = tree.p();
        debug_assert_eq!(p, self.p);
        let mut vertex = vec![0.0; p];
        for leaf in 0..tree.partition().n_leaves() {
            let value = tree.leaf_values()[leaf] * scale;
            if value == 0.0 {
                continue;
            }
            let region = tree.partition().leaf_region(leaf);
            'corner: for eps in 0..(1usize << p) {
                for j in 0..p {
                    vertex[j] = if eps >> j & 1 == 0 {
                        region.lo()[j]
                    } else {
                        region.hi()[j]
                    };
                    if vertex[j] >= 1.0 {
                        continue 'corner;
                    }
                }
                let sign = if (eps.count_ones() & 1) == 0 { 1.0 } else { -1.0 };
                self.deposit(&vertex, sign * value);
            }
        }
    }

    /// `T(x) = sum over atoms a <= x of mass(a)`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.p);
        self.atoms
            .iter()
            .filter(|(a, _)| a.iter().zip(x).all(|(c, &xj)| c.0 <= xj))
            .map(|(_, &m)| m)
            .sum()
    }

    /// Total variation: the absolute-mass sum (atoms are distinct points).
    pub fn tv_norm(&self) -> f64 {
        self.atoms.values().map(|m| m.abs()).sum()
    }

    /// Jordan decomposition into disjoint-support non-negative measures with
    /// `self = positive - negative`.
    pub fn jordan_split(&self) -> (SignedAtomMeasure, SignedAtomMeasure) {
        let mut pos = SignedAtomMeasure::zero(self.p);
        let mut neg = SignedAtomMeasure::zero(self.p);
        for (k, &m) in &self.atoms {
            if m > 0.0 {
                pos.atoms.insert(k.clone(), m);
            } else {
                neg.atoms.insert(k.clone(), -m);
            }
        }
        (pos, neg)
    }

    /// Routes each atom to the component `J = {j : coordinate j > 0}`.
    /// Components sum to the input atom by atom.
    pub fn face_decompose(&self) -> BTreeMap<Vec<usize>, SignedAtomMeasure> {
        let mut parts: BTreeMap<Vec<usize>, SignedAtomMeasure> = BTreeMap::new();
        for (k, &m) in &self.atoms {
            let support: Vec<usize> = k
                .iter()
                .enumerate()
                .filter(|(_, c)| c.0 > 0.0)
                .map(|(j, _)| j)
                .collect();
            parts
                .entry(support)
                .or_insert_with(|| SignedAtomMeasure::zero(self.p))
                .atoms
                .insert(k.clone(), m);
        }
        parts
    }

    /// `self - other`, with exact cancellation of coincident atoms.
    pub fn sub(&self, other: &SignedAtomMeasure) -> SignedAtomMeasure {
        assert_eq!(self.p, other.p);
        let mut out = self.clone();
        for (k, &m) in &other.atoms {
            let entry = out.atoms.entry(k.clone()).or_insert(0.0);
            *entry -= m;
            if *entry == 0.0 {
                out.atoms.remove(k);
            }
        }
        out
    }

    /// Writes `x^1..x^p,mass` rows, one atom per row, lexicographically sorted.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = (1..=self.p).map(|j| format!("x{j}")).collect();
        writeln!(w, "{},mass", header.join(","))?;
        for (point, mass) in self.atoms() {
            let coords: Vec<String> = point.iter().map(|c| format!("{c}")).collect();
            writeln!(w, "{},{}", coords.join(","), mass)?;
        }
        Ok(())
    }
}

/// Weighting for [`l2_norm`]: the face-mixture probability measure `nu`, or
/// its half-and-half mixture `nu_x` with point masses at the sample points.
pub enum Weighting<'a> {
    Nu,
    NuX(&'a Dataset),
}

/// Overlay grid of a measure: per-coordinate breakpoints (always including 0)
/// and the cumulative function `T` tabulated on every cell.
struct CellGrid {
    breaks: Vec<Vec<f64>>,
    cum: Vec<f64>,
    strides: Vec<usize>,
}

impl CellGrid {
    fn build(measure: &SignedAtomMeasure, budget: usize) -> Result<CellGrid> {
        let p = measure.p;
        let mut breaks: Vec<Vec<f64>> = vec![vec![0.0]; p];
        for (point, _) in measure.atoms() {
            for j in 0..p {
                breaks[j].push(point[j]);
            }
        }
        for b in &mut breaks {
            b.sort_by(|a, c| a.total_cmp(c));
            b.dedup();
        }
        let mut cells = 1usize;
        for b in &breaks {
            cells = cells
                .checked_mul(b.len())
                .ok_or_else(|| Error::Unsupported("overlay grid overflows".into()))?;
            if cells > budget {
                return Err(Error::Unsupported(format!(
                    "overlay grid exceeds the {budget}-cell budget"
                )));
            }
        }
        let mut strides = vec![1usize; p];
        for j in (0..p.saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * breaks[j + 1].len();
        }
        let mut cum = vec![0.0f64; cells];
        for (point, mass) in measure.atoms() {
            let mut idx = 0usize;
            for j in 0..p {
                let k = breaks[j].partition_point(|&b| b <= point[j]) - 1;
                idx += strides[j] * k;
            }
            cum[idx] += mass;
        }
        // prefix sums along each axis turn atom masses into T on each cell
        for j in 0..p {
            let len = breaks[j].len();
            let stride = strides[j];
            let block = stride * len;
            for base in 0..cells / block {
                for rem in 0..stride {
                    let start = base * block + rem;
                    for k in 1..len {
                        cum[start + k * stride] += cum[start + (k - 1) * stride];
                    }
                }
            }
        }
        Ok(CellGrid {
            breaks,
            cum,
            strides,
        })
    }

    fn p(&self) -> usize {
        self.breaks.len()
    }

    fn value_at(&self, x: &[f64]) -> f64 {
        let mut idx = 0;
        for j in 0..self.p() {
            let k = self.breaks[j].partition_point(|&b| b <= x[j]) - 1;
            idx += self.strides[j] * k;
        }
        self.cum[idx]
    }

    fn sup(&self) -> f64 {
        self.cum.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Integral of `T^2` against `nu = 3^{-p} sum_{J,eps} Leb_{J,eps}`.
    fn nu_square_integral(&self) -> f64 {
        let p = self.p();
        let mut total = 0.0;
        // J as a bitmask of free coordinates, eps over the fixed ones
        for j_mask in 0..(1usize << p) {
            let fixed: Vec<usize> = (0..p).filter(|j| j_mask >> j & 1 == 0).collect();
            for eps_bits in 0..(1usize << fixed.len()) {
                total += self.face_square_integral(j_mask, &fixed, eps_bits);
            }
        }
        total / 3f64.powi(p as i32)
    }

    fn face_square_integral(&self, j_mask: usize, fixed: &[usize], eps_bits: usize) -> f64 {
        let p = self.p();
        let mut base = 0usize;
        for (fi, &j) in fixed.iter().enumerate() {
            let k = if eps_bits >> fi & 1 == 0 {
                0
            } else {
                self.breaks[j].len() - 1
            };
            base += self.strides[j] * k;
        }
        let free: Vec<usize> = (0..p).filter(|j| j_mask >> *j & 1 == 1).collect();
        if free.is_empty() {
            let v = self.cum[base];
            return v * v;
        }
        // odometer over the cells of the free coordinates
        let mut counters = vec![0usize; free.len()];
        let mut integral = 0.0;
        loop {
            let mut idx = base;
            let mut weight = 1.0;
            for (ci, &j) in free.iter().enumerate() {
                let k = counters[ci];
                idx += self.strides[j] * k;
                let hi = if k + 1 < self.breaks[j].len() {
                    self.breaks[j][k + 1]
                } else {
                    1.0
                };
                weight *= hi - self.breaks[j][k];
            }
            let v = self.cum[idx];
            integral += weight * v * v;
            let mut ci = 0;
            loop {
                counters[ci] += 1;
                if counters[ci] < self.breaks[free[ci]].len() {
                    break;
                }
                counters[ci] = 0;
                ci += 1;
                if ci == free.len() {
                    return integral;
                }
            }
        }
    }
}

/// Exact L2 norm of the tree function represented by `measure`, under `nu`
/// or `nu_x`. Exact face-by-face integration is limited to `p <= 3`; higher
/// dimensions are signalled as unsupported (use [`l2_norm_grid`] there).
pub fn l2_norm(measure: &SignedAtomMeasure, weighting: Weighting<'_>) -> Result<f64> {
    if measure.p > 3 {
        return Err(Error::Unsupported(format!(
            "exact L2 integration is limited to p <= 3 (got p = {})",
            measure.p
        )));
    }
    let grid = CellGrid::build(measure, DEFAULT_CELL_BUDGET)?;
    let nu_sq = grid.nu_square_integral();
    Ok(match weighting {
        Weighting::Nu => nu_sq.sqrt(),
        Weighting::NuX(dataset) => {
            let mut point_sq = 0.0;
            for i in 0..dataset.n() {
                let v = grid.value_at(dataset.point(i));
                point_sq += v * v;
            }
            (0.5 * nu_sq + point_sq / (2.0 * dataset.n() as f64)).sqrt()
        }
    })
}

/// Monte-Carlo style fallback for `p > 3`: averages `T^2` over a regular
/// lattice on each face. Documented approximation, not used by the exact path.
pub fn l2_norm_grid(measure: &SignedAtomMeasure, points_per_axis: usize) -> f64 {
    let p = measure.p;
    let mut total = 0.0;
    let mut faces = 0usize;
    for j_mask in 0..(1usize << p) {
        let fixed: Vec<usize> = (0..p).filter(|j| j_mask >> j & 1 == 0).collect();
        for eps_bits in 0..(1usize << fixed.len()) {
            faces += 1;
            let free: Vec<usize> = (0..p).filter(|j| j_mask >> *j & 1 == 1).collect();
            let mut x = vec![0.0; p];
            for (fi, &j) in fixed.iter().enumerate() {
                x[j] = if eps_bits >> fi & 1 == 0 { 0.0 } else { 1.0 };
            }
            if free.is_empty() {
                let v = measure.eval(&x);
                total += v * v;
                continue;
            }
            let mut counters = vec![0usize; free.len()];
            let mut acc = 0.0;
            let cells = points_per_axis.pow(free.len() as u32);
            for _ in 0..cells {
                for (ci, &j) in free.iter().enumerate() {
                    x[j] = (counters[ci] as f64 + 0.5) / points_per_axis as f64;
                }
                let v = measure.eval(&x);
                acc += v * v;
                let mut ci = 0;
                while ci < counters.len() {
                    counters[ci] += 1;
                    if counters[ci] < points_per_axis {
                        break;
                    }
                    counters[ci] = 0;
                    ci += 1;
                }
            }
            total += acc / cells as f64;
        }
    }
    (total / faces as f64).sqrt()
}

/// Exact sup norm of the tree function represented by `measure`, computed on
/// the overlay partition of its atoms. Fails when the overlay exceeds
/// `budget` cells.
pub fn sup_norm(measure: &SignedAtomMeasure, budget: usize) -> Result<f64> {
    if measure.is_zero() {
        return Ok(0.0);
    }
    Ok(CellGrid::build(measure, budget)?.sup())
}

/// A 1-d piecewise constant function with prefix integrals, built from the
/// sorted atoms of a `p = 1` measure. Supports fast exact `nu_x` distances
/// between a small step function and a very large one.
#[derive(Debug, Clone)]
pub struct StepFunction1d {
    xs: Vec<f64>,    // segment starts, xs[0] == 0
    vals: Vec<f64>,  // value on [xs[k], xs[k+1]) (last segment closed at 1)
    cum_int: Vec<f64>,    // integral of T over [0, xs[k]]
    cum_int_sq: Vec<f64>, // integral of T^2 over [0, xs[k]]
}

impl StepFunction1d {
    pub fn from_measure(measure: &SignedAtomMeasure) -> Result<Self> {
        if measure.p != 1 {
            return Err(Error::Unsupported("StepFunction1d requires p = 1".into()));
        }
        let mut xs = vec![0.0f64];
        let mut vals = vec![0.0f64];
        let mut acc = 0.0;
        for (point, mass) in measure.atoms() {
            acc += mass;
            if point[0] == 0.0 {
                vals[0] = acc;
            } else {
                xs.push(point[0]);
                vals.push(acc);
            }
        }
        let k = xs.len();
        let mut cum_int = vec![0.0; k];
        let mut cum_int_sq = vec![0.0; k];
        for i in 1..k {
            let w = xs[i] - xs[i - 1];
            cum_int[i] = cum_int[i - 1] + w * vals[i - 1];
            cum_int_sq[i] = cum_int_sq[i - 1] + w * vals[i - 1] * vals[i - 1];
        }
        Ok(StepFunction1d {
            xs,
            vals,
            cum_int,
            cum_int_sq,
        })
    }

    fn segment(&self, x: f64) -> usize {
        self.xs.partition_point(|&b| b <= x) - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.vals[self.segment(x)]
    }

    /// Integral of T over [0, x].
    fn integral_to(&self, x: f64) -> f64 {
        let k = self.segment(x);
        self.cum_int[k] + (x - self.xs[k]) * self.vals[k]
    }

    /// Integral of T^2 over [0, x].
    fn square_integral_to(&self, x: f64) -> f64 {
        let k = self.segment(x);
        self.cum_int_sq[k] + (x - self.xs[k]) * self.vals[k] * self.vals[k]
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.xs
    }
}

/// Exact `nu_x` distance between two 1-d step functions:
/// `|a - b|_{nu_x}^2 = 1/2 |a-b|_nu^2 + (1/2n) sum (a(x_i)-b(x_i))^2` with
/// `|D|_nu^2 = (D(0)^2 + D(1)^2 + int_0^1 D^2)/3`. Cost is
/// `O(|a| log |b|)`, so pass the smaller function first.
pub fn l2x_distance_1d(a: &StepFunction1d, b: &StepFunction1d, sample_xs: &[f64]) -> f64 {
    // int (a-b)^2 = int a^2 - 2 int a b + int b^2, walking a's segments
    let mut int_a2 = 0.0;
    let mut int_ab = 0.0;
    for k in 0..a.xs.len() {
        let lo = a.xs[k];
        let hi = if k + 1 < a.xs.len() { a.xs[k + 1] } else { 1.0 };
        let v = a.vals[k];
        int_a2 += (hi - lo) * v * v;
        int_ab += v * (b.integral_to(hi) - b.integral_to(lo));
    }
    let int_b2 = b.square_integral_to(1.0);
    let int_d2 = int_a2 - 2.0 * int_ab + int_b2;
    let d0 = a.eval(0.0) - b.eval(0.0);
    let d1 = a.eval(1.0) - b.eval(1.0);
    let nu_sq = (d0 * d0 + d1 * d1 + int_d2) / 3.0;
    let mut point_sq = 0.0;
    for &x in sample_xs {
        let d = a.eval(x) - b.eval(x);
        point_sq += d * d;
    }
    (0.5 * nu_sq + point_sq / (2.0 * sample_xs.len() as f64)).abs().sqrt()
}
