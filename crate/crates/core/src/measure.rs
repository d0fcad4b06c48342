//! Finite state spaces, measures, kernels and the elementary transforms
//! built on them: integration, kernel transport, composition, the
//! Boltzmann-Gibbs reweighting, total variation and the Dobrushin
//! contraction coefficient.
//!
//! Measures and kernels are dense. A measure is a weight vector indexed by
//! the states of its [`StateSpace`]; a kernel is a row-major matrix from a
//! source space into a target space. Dead targets are not represented: all
//! mass that leaves the state space is simply dropped.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for identities that hold exactly in real arithmetic.
pub const EXACT_TOL: f64 = 1e-12;

/// `|a - b| <= EXACT_TOL * max(1, |a|, |b|)`.
#[inline]
pub fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= EXACT_TOL * 1f64.max(a.abs()).max(b.abs())
}

/// Ordered set of distinct state labels.
#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct StateSpace {
    labels: Arc<[String]>,
}

impl StateSpace {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::InvalidSpace("state space must be non-empty".into()));
        }
        let mut sorted: Vec<&String> = labels.iter().collect();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidSpace(format!("duplicate label {:?}", w[0])));
        }
        Ok(Self {
            labels: labels.into(),
        })
    }

    /// States labelled `"0"`, `"1"`, ..., `"size-1"`.
    pub fn indexed(size: usize) -> Self {
        assert!(size >= 1, "state space must be non-empty");
        Self {
            labels: (0..size).map(|i| i.to_string()).collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    fn ensure_same(&self, other: &StateSpace, context: &'static str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::SpaceMismatch(context))
        }
    }
}

impl PartialEq for StateSpace {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.labels, &other.labels) || self.labels == other.labels
    }
}

impl Eq for StateSpace {}

impl fmt::Debug for StateSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.labels.iter()).finish()
    }
}

impl TryFrom<Vec<String>> for StateSpace {
    type Error = Error;
    fn try_from(labels: Vec<String>) -> Result<Self> {
        Self::new(labels)
    }
}

impl From<StateSpace> for Vec<String> {
    fn from(space: StateSpace) -> Self {
        space.labels.to_vec()
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::InvalidArgument(format!(
            "{what} has non-finite value at state {i}"
        ))),
        None => Ok(()),
    }
}

/// Real-valued function on a finite space (a test function).
#[derive(Clone, Debug, PartialEq)]
pub struct Function {
    space: StateSpace,
    values: Vec<f64>,
}

impl Function {
    pub fn new(space: &StateSpace, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.size() {
            return Err(Error::SpaceMismatch("function values"));
        }
        check_finite(&values, "function")?;
        Ok(Self {
            space: space.clone(),
            values,
        })
    }

    pub fn constant(space: &StateSpace, c: f64) -> Self {
        Self {
            space: space.clone(),
            values: vec![c; space.size()],
        }
    }

    pub fn indicator(space: &StateSpace, state: usize) -> Self {
        let mut values = vec![0.0; space.size()];
        values[state] = 1.0;
        Self {
            space: space.clone(),
            values,
        }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `sup |f(x) - f(y)|`.
    pub fn osc(&self) -> f64 {
        let (lo, hi) = min_max(&self.values);
        hi - lo
    }

    pub fn map(&self, op: impl Fn(f64) -> f64) -> Function {
        Function {
            space: self.space.clone(),
            values: self.values.iter().map(|&v| op(v)).collect(),
        }
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Function) -> Result<Function> {
        self.space.ensure_same(&other.space, "function product")?;
        Ok(Function {
            space: self.space.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }
}

pub(crate) fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// Strictly positive, bounded function: the multiplicative weight
/// `G = e * H` (survival probability times mean offspring count).
#[derive(Clone, Debug, PartialEq)]
pub struct Potential(Function);

impl Potential {
    pub fn new(space: &StateSpace, values: Vec<f64>) -> Result<Self> {
        let f = Function::new(space, values)?;
        if let Some((state, &value)) = f.values.iter().enumerate().find(|(_, &v)| v <= 0.0) {
            return Err(Error::InvalidPotential { state, value });
        }
        Ok(Self(f))
    }

    pub fn constant(space: &StateSpace, g: f64) -> Result<Self> {
        Self::new(space, vec![g; space.size()])
    }

    pub fn space(&self) -> &StateSpace {
        &self.0.space
    }

    pub fn values(&self) -> &[f64] {
        &self.0.values
    }

    pub fn as_function(&self) -> &Function {
        &self.0
    }

    /// `inf G`.
    pub fn lower(&self) -> f64 {
        min_max(&self.0.values).0
    }

    /// `sup G`.
    pub fn upper(&self) -> f64 {
        min_max(&self.0.values).1
    }

    pub fn is_constant(&self) -> bool {
        self.lower() == self.upper()
    }
}

/// Nonnegative finite measure.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    space: StateSpace,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(space: &StateSpace, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != space.size() {
            return Err(Error::SpaceMismatch("measure weights"));
        }
        check_finite(&weights, "measure")?;
        if let Some(i) = weights.iter().position(|&w| w < 0.0) {
            return Err(Error::InvalidMeasure(format!(
                "negative weight {} at state {i}",
                weights[i]
            )));
        }
        Ok(Self {
            space: space.clone(),
            weights,
        })
    }

    pub fn zero(space: &StateSpace) -> Self {
        Self {
            space: space.clone(),
            weights: vec![0.0; space.size()],
        }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Total mass `mu(1)`.
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, f: &Function) -> Result<f64> {
        integrate(self, f)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(&self.space, self.weights.iter().map(|w| w * c).collect())
    }

    pub fn plus(&self, other: &DiscreteMeasure) -> Result<Self> {
        self.space.ensure_same(&other.space, "measure sum")?;
        Ok(Self {
            space: self.space.clone(),
            weights: self
                .weights
                .iter()
                .zip(&other.weights)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// `mu / mu(1)`; fails on the zero measure.
    pub fn normalized(&self) -> Result<ProbabilityMeasure> {
        let mass = self.mass();
        if mass <= 0.0 {
            return Err(Error::InvalidMeasure("cannot normalize a zero measure".into()));
        }
        Ok(ProbabilityMeasure(Self {
            space: self.space.clone(),
            weights: self.weights.iter().map(|w| w / mass).collect(),
        }))
    }

    /// Largest absolute weight difference.
    pub fn max_abs_diff(&self, other: &DiscreteMeasure) -> Result<f64> {
        self.space.ensure_same(&other.space, "measure comparison")?;
        Ok(self
            .weights
            .iter()
            .zip(&other.weights)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Weightwise [`approx_eq`].
    pub fn approx_eq(&self, other: &DiscreteMeasure) -> bool {
        self.space == other.space
            && self
                .weights
                .iter()
                .zip(&other.weights)
                .all(|(&a, &b)| approx_eq(a, b))
    }
}

/// Measure with total mass one.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMeasure(DiscreteMeasure);

impl ProbabilityMeasure {
    pub fn new(space: &StateSpace, weights: Vec<f64>) -> Result<Self> {
        let m = DiscreteMeasure::new(space, weights)?;
        let mass = m.mass();
        if (mass - 1.0).abs() > EXACT_TOL {
            return Err(Error::InvalidMeasure(format!(
                "probability weights sum to {mass}"
            )));
        }
        Ok(Self(m))
    }

    pub fn uniform(space: &StateSpace) -> Self {
        let d = space.size();
        Self(DiscreteMeasure {
            space: space.clone(),
            weights: vec![1.0 / d as f64; d],
        })
    }

    pub fn dirac(space: &StateSpace, state: usize) -> Self {
        Self(DiscreteMeasure {
            space: space.clone(),
            weights: Function::indicator(space, state).values,
        })
    }

    /// Empirical measure of a sample of state indices.
    pub fn empirical(space: &StateSpace, sample: &[usize]) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::InvalidMeasure("empty sample".into()));
        }
        let mut weights = vec![0.0; space.size()];
        for &x in sample {
            *weights
                .get_mut(x)
                .ok_or(Error::SpaceMismatch("empirical measure"))? += 1.0;
        }
        let n = sample.len() as f64;
        weights.iter_mut().for_each(|w| *w /= n);
        Ok(Self(DiscreteMeasure {
            space: space.clone(),
            weights,
        }))
    }

    pub fn space(&self) -> &StateSpace {
        &self.0.space
    }

    pub fn weights(&self) -> &[f64] {
        &self.0.weights
    }

    pub fn as_measure(&self) -> &DiscreteMeasure {
        &self.0
    }

    pub fn into_measure(self) -> DiscreteMeasure {
        self.0
    }

    pub fn integrate(&self, f: &Function) -> Result<f64> {
        integrate(&self.0, f)
    }

    /// `eta((f - eta(f))^2)`.
    pub fn variance(&self, f: &Function) -> Result<f64> {
        let m = self.integrate(f)?;
        self.integrate(&f.map(|v| (v - m) * (v - m)))
    }

    /// Convex combination `w * self + (1 - w) * other`.
    pub fn mix(&self, w: f64, other: &ProbabilityMeasure) -> Result<ProbabilityMeasure> {
        self.space().ensure_same(other.space(), "mixture")?;
        Ok(Self(DiscreteMeasure {
            space: self.space().clone(),
            weights: self
                .weights()
                .iter()
                .zip(other.weights())
                .map(|(a, b)| w * a + (1.0 - w) * b)
                .collect(),
        }))
    }
}

/// `mu(f) = sum_x mu(x) f(x)`.
pub fn integrate(mu: &DiscreteMeasure, f: &Function) -> Result<f64> {
    mu.space.ensure_same(&f.space, "integrate")?;
    Ok(mu.weights.iter().zip(&f.values).map(|(w, v)| w * v).sum())
}

/// Nonnegative matrix from a source space into a target space.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedKernel {
    source: StateSpace,
    target: StateSpace,
    entries: Vec<f64>,
}

impl WeightedKernel {
    pub fn new(source: &StateSpace, target: &StateSpace, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != source.size() || rows.iter().any(|r| r.len() != target.size()) {
            return Err(Error::InvalidKernel(format!(
                "expected a {}x{} matrix",
                source.size(),
                target.size()
            )));
        }
        Self::from_flat(source, target, rows.into_iter().flatten().collect())
    }

    /// Row-major entries.
    pub fn from_flat(source: &StateSpace, target: &StateSpace, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != source.size() * target.size() {
            return Err(Error::InvalidKernel("wrong number of entries".into()));
        }
        check_finite(&entries, "kernel")?;
        if entries.iter().any(|&e| e < 0.0) {
            return Err(Error::InvalidKernel("negative entry".into()));
        }
        Ok(Self {
            source: source.clone(),
            target: target.clone(),
            entries,
        })
    }

    pub fn identity(space: &StateSpace) -> Self {
        let d = space.size();
        let mut entries = vec![0.0; d * d];
        for i in 0..d {
            entries[i * d + i] = 1.0;
        }
        Self {
            source: space.clone(),
            target: space.clone(),
            entries,
        }
    }

    pub fn source(&self) -> &StateSpace {
        &self.source
    }

    pub fn target(&self) -> &StateSpace {
        &self.target
    }

    #[inline]
    pub fn entry(&self, x: usize, y: usize) -> f64 {
        self.entries[x * self.target.size() + y]
    }

    #[inline]
    pub fn row(&self, x: usize) -> &[f64] {
        let d = self.target.size();
        &self.entries[x * d..(x + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks(self.target.size())
    }

    /// `K(1)(x)` for every source state.
    pub fn row_sums(&self) -> Vec<f64> {
        self.rows().map(|r| r.iter().sum()).collect()
    }

    /// The function `K(f)(x) = sum_y K(x, y) f(y)`.
    pub fn apply_fn(&self, f: &Function) -> Result<Function> {
        self.target.ensure_same(&f.space, "kernel action on function")?;
        Ok(Function {
            space: self.source.clone(),
            values: self
                .rows()
                .map(|r| r.iter().zip(&f.values).map(|(k, v)| k * v).sum())
                .collect(),
        })
    }

    /// `G(x) K(x, y)`.
    pub fn scale_rows(&self, g: &Function) -> Result<WeightedKernel> {
        self.source.ensure_same(&g.space, "row scaling")?;
        let d = self.target.size();
        let mut entries = self.entries.clone();
        for (x, row) in entries.chunks_mut(d).enumerate() {
            row.iter_mut().for_each(|e| *e *= g.values[x]);
        }
        Ok(Self {
            source: self.source.clone(),
            target: self.target.clone(),
            entries,
        })
    }

    /// Each row divided by its mass; fails if a row is null.
    pub fn normalize_rows(&self) -> Result<MarkovKernel> {
        let d = self.target.size();
        let mut entries = self.entries.clone();
        for (x, row) in entries.chunks_mut(d).enumerate() {
            let s: f64 = row.iter().sum();
            if s <= 0.0 {
                return Err(Error::InvalidKernel(format!("row {x} has zero mass")));
            }
            row.iter_mut().for_each(|e| *e /= s);
        }
        Ok(MarkovKernel(Self {
            source: self.source.clone(),
            target: self.target.clone(),
            entries,
        }))
    }
}

/// Row-stochastic kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovKernel(WeightedKernel);

impl MarkovKernel {
    pub fn new(source: &StateSpace, target: &StateSpace, rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_weighted(WeightedKernel::new(source, target, rows)?)
    }

    /// Square kernel on `space` with row-major entries.
    pub fn square(space: &StateSpace, rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(space, space, rows)
    }

    pub fn from_weighted(k: WeightedKernel) -> Result<Self> {
        for (row, sum) in k.row_sums().into_iter().enumerate() {
            if (sum - 1.0).abs() > EXACT_TOL {
                return Err(Error::NotStochastic { row, sum });
            }
        }
        Ok(Self(k))
    }

    pub fn identity(space: &StateSpace) -> Self {
        Self(WeightedKernel::identity(space))
    }

    /// Every row equal to `pi`.
    pub fn rank_one(source: &StateSpace, pi: &ProbabilityMeasure) -> Self {
        let entries = pi.weights().repeat(source.size());
        Self(WeightedKernel {
            source: source.clone(),
            target: pi.space().clone(),
            entries,
        })
    }

    pub fn as_weighted(&self) -> &WeightedKernel {
        &self.0
    }

    pub fn source(&self) -> &StateSpace {
        &self.0.source
    }

    pub fn target(&self) -> &StateSpace {
        &self.0.target
    }

    #[inline]
    pub fn entry(&self, x: usize, y: usize) -> f64 {
        self.0.entry(x, y)
    }

    #[inline]
    pub fn row(&self, x: usize) -> &[f64] {
        self.0.row(x)
    }

    pub fn row_measure(&self, x: usize) -> ProbabilityMeasure {
        ProbabilityMeasure(DiscreteMeasure {
            space: self.0.target.clone(),
            weights: self.row(x).to_vec(),
        })
    }

    pub fn apply_fn(&self, f: &Function) -> Result<Function> {
        self.0.apply_fn(f)
    }

    /// Composition of two Markov kernels.
    pub fn then(&self, next: &MarkovKernel) -> Result<MarkovKernel> {
        Ok(Self(compose(&self.0, &next.0)?))
    }

    /// `M^k` with `M^0 = Id`; requires a square kernel.
    pub fn power(&self, k: usize) -> Result<MarkovKernel> {
        self.source().ensure_same(self.target(), "kernel power")?;
        let mut acc = MarkovKernel::identity(self.source());
        for _ in 0..k {
            acc = acc.then(self)?;
        }
        Ok(acc)
    }

    /// Convex combination `w * self + (1 - w) * rank_one(pi)`.
    pub fn mix_with(&self, w: f64, pi: &ProbabilityMeasure) -> Result<MarkovKernel> {
        self.target().ensure_same(pi.space(), "kernel mixture")?;
        let d = self.target().size();
        let mut entries = self.0.entries.clone();
        for row in entries.chunks_mut(d) {
            for (e, p) in row.iter_mut().zip(pi.weights()) {
                *e = w * *e + (1.0 - w) * p;
            }
        }
        Ok(Self(WeightedKernel {
            source: self.0.source.clone(),
            target: self.0.target.clone(),
            entries,
        }))
    }
}

/// Anything that acts on measures as a matrix.
pub trait Kernel {
    fn matrix(&self) -> &WeightedKernel;
}

impl Kernel for WeightedKernel {
    fn matrix(&self) -> &WeightedKernel {
        self
    }
}

impl Kernel for MarkovKernel {
    fn matrix(&self) -> &WeightedKernel {
        &self.0
    }
}

/// `(mu K)(y) = sum_x mu(x) K(x, y)`.
pub fn apply_kernel<K: Kernel + ?Sized>(mu: &DiscreteMeasure, k: &K) -> Result<DiscreteMeasure> {
    let k = k.matrix();
    mu.space.ensure_same(&k.source, "apply_kernel")?;
    let mut out = vec![0.0; k.target.size()];
    for (w, row) in mu.weights.iter().zip(k.rows()) {
        if *w == 0.0 {
            continue;
        }
        for (o, e) in out.iter_mut().zip(row) {
            *o += w * e;
        }
    }
    Ok(DiscreteMeasure {
        space: k.target.clone(),
        weights: out,
    })
}

/// Transport of a probability measure by a Markov kernel.
pub fn transport(eta: &ProbabilityMeasure, m: &MarkovKernel) -> Result<ProbabilityMeasure> {
    Ok(ProbabilityMeasure(apply_kernel(&eta.0, m)?))
}

/// `(K1 K2)(x, z) = sum_y K1(x, y) K2(y, z)`.
pub fn compose<A: Kernel + ?Sized, B: Kernel + ?Sized>(k1: &A, k2: &B) -> Result<WeightedKernel> {
    let (a, b) = (k1.matrix(), k2.matrix());
    a.target.ensure_same(&b.source, "compose")?;
    let (n, m) = (a.source.size(), b.target.size());
    let mut entries = vec![0.0; n * m];
    for (x, out) in entries.chunks_mut(m).enumerate() {
        for (y, &w) in a.row(x).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, e) in out.iter_mut().zip(b.row(y)) {
                *o += w * e;
            }
        }
    }
    Ok(WeightedKernel {
        source: a.source.clone(),
        target: b.target.clone(),
        entries,
    })
}

/// `Psi_G(eta)(x) = G(x) eta(x) / eta(G)`.
pub fn boltzmann_gibbs(g: &Potential, eta: &ProbabilityMeasure) -> Result<ProbabilityMeasure> {
    reweight(g.as_function(), eta)
}

/// Boltzmann-Gibbs transform for a nonnegative weight function with
/// `eta(w) > 0`.
pub fn reweight(w: &Function, eta: &ProbabilityMeasure) -> Result<ProbabilityMeasure> {
    eta.space().ensure_same(&w.space, "boltzmann_gibbs")?;
    let weights: Vec<f64> = eta
        .weights()
        .iter()
        .zip(&w.values)
        .map(|(e, g)| e * g)
        .collect();
    let z: f64 = weights.iter().sum();
    if !(z > 0.0) {
        return Err(Error::InvalidMeasure(
            "reweighting by a function with zero integral".into(),
        ));
    }
    Ok(ProbabilityMeasure(DiscreteMeasure {
        space: eta.space().clone(),
        weights: weights.into_iter().map(|v| v / z).collect(),
    }))
}

/// `(1/2) sum_x |mu(x) - nu(x)|`, which on finite spaces equals the
/// supremum of `|mu(f) - nu(f)|` over functions with unit oscillation.
pub fn tv_distance(mu: &ProbabilityMeasure, nu: &ProbabilityMeasure) -> Result<f64> {
    mu.space().ensure_same(nu.space(), "tv_distance")?;
    Ok(half_l1(mu.weights(), nu.weights()))
}

#[inline]
fn half_l1(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Largest total variation distance between two rows.
pub fn dobrushin(m: &MarkovKernel) -> f64 {
    let d = m.source().size();
    let mut beta: f64 = 0.0;
    for x in 0..d {
        for y in (x + 1)..d {
            beta = beta.max(half_l1(m.row(x), m.row(y)));
        }
    }
    beta.min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two() -> StateSpace {
        StateSpace::indexed(2)
    }

    fn m_example() -> MarkovKernel {
        MarkovKernel::square(&two(), vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap()
    }

    fn mu_example() -> DiscreteMeasure {
        DiscreteMeasure::new(&two(), vec![0.3, 0.2]).unwrap()
    }

    #[test]
    fn integrate_examples() {
        let mu = mu_example();
        let s = two();
        assert!((integrate(&mu, &Function::constant(&s, 1.0)).unwrap() - 0.5).abs() < EXACT_TOL);
        assert_eq!(integrate(&mu, &Function::constant(&s, 0.0)).unwrap(), 0.0);
        let f = Function::new(&s, vec![2.0, -1.0]).unwrap();
        assert!((integrate(&mu, &f).unwrap() - 0.4).abs() < EXACT_TOL);
    }

    #[test]
    fn integrate_space_mismatch() {
        let f = Function::constant(&StateSpace::indexed(3), 1.0);
        assert_eq!(
            integrate(&mu_example(), &f),
            Err(Error::SpaceMismatch("integrate"))
        );
    }

    #[test]
    fn apply_kernel_examples() {
        let out = apply_kernel(&mu_example(), &m_example()).unwrap();
        assert!((out.weights()[0] - 0.29).abs() < EXACT_TOL);
        assert!((out.weights()[1] - 0.21).abs() < EXACT_TOL);

        let id = MarkovKernel::identity(&two());
        assert_eq!(apply_kernel(&mu_example(), &id).unwrap(), mu_example());

        let pi = ProbabilityMeasure::new(&two(), vec![0.25, 0.75]).unwrap();
        let r1 = MarkovKernel::rank_one(&two(), &pi);
        let dirac = ProbabilityMeasure::dirac(&two(), 0);
        assert_eq!(transport(&dirac, &r1).unwrap(), pi);
    }

    #[test]
    fn apply_kernel_rejects_wrong_source() {
        let k = MarkovKernel::identity(&StateSpace::indexed(3));
        assert!(apply_kernel(&mu_example(), &k).is_err());
    }

    #[test]
    fn compose_examples() {
        let m = m_example();
        let id = MarkovKernel::identity(&two());
        assert_eq!(compose(&m, &id).unwrap(), *m.as_weighted());

        let mm = m.then(&m).unwrap();
        for s in mm.as_weighted().row_sums() {
            assert!((s - 1.0).abs() < EXACT_TOL);
        }

        let half = Function::constant(&two(), 0.5);
        let q = m.as_weighted().scale_rows(&half).unwrap();
        for s in compose(&q, &q).unwrap().row_sums() {
            assert!((s - 0.25).abs() < EXACT_TOL);
        }
    }

    #[test]
    fn compose_space_mismatch() {
        let m = m_example();
        let three = MarkovKernel::identity(&StateSpace::indexed(3));
        assert!(compose(&m, &three).is_err());
    }

    #[test]
    fn boltzmann_gibbs_examples() {
        let s = two();
        let eta = ProbabilityMeasure::new(&s, vec![0.5, 0.5]).unwrap();
        let flat = Potential::constant(&s, 3.0).unwrap();
        assert!(boltzmann_gibbs(&flat, &eta).unwrap().as_measure().approx_eq(eta.as_measure()));

        let g = Potential::new(&s, vec![1.0, 3.0]).unwrap();
        let out = boltzmann_gibbs(&g, &eta).unwrap();
        assert!((out.weights()[0] - 0.25).abs() < EXACT_TOL);
        assert!((out.weights()[1] - 0.75).abs() < EXACT_TOL);

        let dirac = ProbabilityMeasure::dirac(&s, 0);
        assert_eq!(boltzmann_gibbs(&g, &dirac).unwrap(), dirac);
    }

    #[test]
    fn tv_examples() {
        let s = two();
        let a = ProbabilityMeasure::new(&s, vec![0.7, 0.3]).unwrap();
        let b = ProbabilityMeasure::new(&s, vec![0.4, 0.6]).unwrap();
        assert_eq!(tv_distance(&a, &a).unwrap(), 0.0);
        assert!((tv_distance(&a, &b).unwrap() - 0.3).abs() < EXACT_TOL);
        let d0 = ProbabilityMeasure::dirac(&s, 0);
        let d1 = ProbabilityMeasure::dirac(&s, 1);
        assert_eq!(tv_distance(&d0, &d1).unwrap(), 1.0);
    }

    #[test]
    fn dobrushin_examples() {
        assert_eq!(dobrushin(&MarkovKernel::identity(&StateSpace::indexed(3))), 1.0);
        let pi = ProbabilityMeasure::new(&two(), vec![0.1, 0.9]).unwrap();
        assert_eq!(dobrushin(&MarkovKernel::rank_one(&two(), &pi)), 0.0);
        assert!((dobrushin(&m_example()) - 0.3).abs() < EXACT_TOL);
    }

    #[test]
    fn invalid_constructions() {
        let s = two();
        assert!(StateSpace::new(Vec::<String>::new()).is_err());
        assert!(StateSpace::new(["a", "a"]).is_err());
        assert!(DiscreteMeasure::new(&s, vec![-0.1, 0.2]).is_err());
        assert!(ProbabilityMeasure::new(&s, vec![0.5, 0.4]).is_err());
        assert!(matches!(
            MarkovKernel::square(&s, vec![vec![0.5, 0.4], vec![0.5, 0.5]]),
            Err(Error::NotStochastic { row: 0, .. })
        ));
        assert!(Potential::new(&s, vec![1.0, 0.0]).is_err());
        assert!(Potential::new(&s, vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn state_space_serde_roundtrip() {
        let s = StateSpace::new(["low", "high"]).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"["low","high"]"#);
        let back: StateSpace = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<StateSpace>(r#"["a","a"]"#).is_err());
    }
}
