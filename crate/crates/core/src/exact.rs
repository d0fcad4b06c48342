//! Exact intensity flow on finite state spaces.
//!
//! Everything here is deterministic linear algebra and serves as the
//! ground truth for the simulators: the intensity recursion
//! `gamma_{n+1} = gamma_n Q_{n+1} + mu_{n+1}`, the equivalent pair
//! recursion on `(gamma_n(1), eta_n)`, the Feynman-Kac semigroups
//! `Q_{p,n}` / `P_{p,n}` with their contraction constants, the mass
//! envelope, the limiting measures of the three homogeneous regimes, the
//! mixing certificates and the error-bound constants.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{
    apply_kernel, boltzmann_gibbs, compose, dobrushin, transport, tv_distance, DiscreteMeasure,
    Function, MarkovKernel, ProbabilityMeasure, WeightedKernel, EXACT_TOL,
};
use crate::model::BranchingModel;

/// Stopping threshold for the fixed-point iteration (TV increment).
pub const FIXED_POINT_TOL: f64 = 1e-13;
/// Stopping threshold for the limiting series (geometric tail bound).
pub const SERIES_TAIL_TOL: f64 = 1e-14;
/// Hard cap on iterations of either procedure.
pub const MAX_ITERATIONS: usize = 1_000_000;

/// `Q_{n+1}`.
pub fn q_kernel(model: &BranchingModel, n: usize) -> Result<WeightedKernel> {
    model.q_kernel(n)
}

/// `gamma_{n+1} = gamma_n Q_{n+1} + mu_{n+1}`.
pub fn intensity_step(
    gamma: &DiscreteMeasure,
    model: &BranchingModel,
    n: usize,
) -> Result<DiscreteMeasure> {
    model.push(gamma, n)?.plus(model.immigration(n + 1)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowStep {
    pub gamma: DiscreteMeasure,
    pub mass: f64,
    /// `None` only when `gamma_n = 0`.
    pub eta: Option<ProbabilityMeasure>,
}

/// `gamma_n`, `gamma_n(1)` and `eta_n` for `n = 0..=n_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowTrajectory {
    pub steps: Vec<FlowStep>,
}

impl FlowTrajectory {
    pub fn from_intensities(gammas: Vec<DiscreteMeasure>) -> Result<Self> {
        let steps = gammas
            .into_iter()
            .map(|gamma| {
                let mass = gamma.mass();
                let eta = if mass > 0.0 {
                    Some(gamma.normalized()?)
                } else {
                    None
                };
                Ok(FlowStep { gamma, mass, eta })
            })
            .collect::<Result<_>>()?;
        Ok(Self { steps })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn mass(&self, n: usize) -> f64 {
        self.steps[n].mass
    }

    pub fn gamma(&self, n: usize) -> &DiscreteMeasure {
        &self.steps[n].gamma
    }

    /// Panics if `gamma_n = 0`.
    pub fn eta(&self, n: usize) -> &ProbabilityMeasure {
        self.steps[n]
            .eta
            .as_ref()
            .expect("eta_n is undefined for a zero intensity")
    }

    /// `eta_n`, or `None` when `gamma_n = 0`.
    pub fn try_eta(&self, n: usize) -> Option<&ProbabilityMeasure> {
        self.steps[n].eta.as_ref()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.mass).collect()
    }
}

/// Iterates the measure recursion from `gamma_0 = mu_0`.
pub fn run_flow(model: &BranchingModel, n_max: usize) -> Result<FlowTrajectory> {
    model.check_time(n_max)?;
    let mut gammas = Vec::with_capacity(n_max + 1);
    gammas.push(model.initial().clone());
    for n in 0..n_max {
        let next = intensity_step(&gammas[n], model, n)?;
        gammas.push(next);
    }
    FlowTrajectory::from_intensities(gammas)
}

/// The same flow computed through the pair recursion
/// `(gamma_{n+1}(1), eta_{n+1}) = Gamma_{n+1}(gamma_n(1), eta_n)`.
pub fn run_pair_flow(model: &BranchingModel, n_max: usize) -> Result<Vec<(f64, ProbabilityMeasure)>> {
    model.check_time(n_max)?;
    let mu0 = model.initial();
    let mut out = Vec::with_capacity(n_max + 1);
    out.push((mu0.mass(), mu0.normalized()?));
    for n in 0..n_max {
        let (m, eta) = &out[n];
        let next = model.gamma_step(n, *m, eta)?;
        out.push(next);
    }
    Ok(out)
}

/// `gamma_n(1) = sum_p mu_p(1) prod_{p <= q < n} eta_q(G_q)` from the
/// `eta_q` of a trajectory.
pub fn product_form_masses(model: &BranchingModel, flow: &FlowTrajectory) -> Result<Vec<f64>> {
    let factors = (0..flow.len().saturating_sub(1))
        .map(|q| flow.eta(q).integrate(model.potential(q)?.as_function()))
        .collect::<Result<Vec<f64>>>()?;
    let immigration = (0..flow.len())
        .map(|p| Ok(model.immigration(p)?.mass()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(product_form(&immigration, &factors))
}

/// `sum_{p <= n} b_p prod_{p <= q < n} a_q` for every `n`, with `a` one
/// shorter than `b`.
pub(crate) fn product_form(immigration: &[f64], factors: &[f64]) -> Vec<f64> {
    (0..immigration.len())
        .map(|n| {
            (0..=n)
                .map(|p| immigration[p] * factors[p..n].iter().product::<f64>())
                .sum()
        })
        .collect()
}

/// Largest relative disagreement between the measure recursion, the pair
/// recursion and the product formula, over all steps of the trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RouteAgreement {
    pub pair_mass: f64,
    pub pair_eta: f64,
    pub product_mass: f64,
    pub decomposition: f64,
}

impl RouteAgreement {
    pub fn max(&self) -> f64 {
        self.pair_mass
            .max(self.pair_eta)
            .max(self.product_mass)
            .max(self.decomposition)
    }
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// Runs every independent route to `(gamma_n)` and reports how far they
/// are from each other.
pub fn route_agreement(model: &BranchingModel, n_max: usize) -> Result<RouteAgreement> {
    let flow = run_flow(model, n_max)?;
    let pair = run_pair_flow(model, n_max)?;
    let product = product_form_masses(model, &flow)?;
    let semigroups = Semigroups::new(model);
    let mut out = RouteAgreement {
        pair_mass: 0.0,
        pair_eta: 0.0,
        product_mass: 0.0,
        decomposition: 0.0,
    };
    for n in 0..=n_max {
        out.pair_mass = out.pair_mass.max(rel_diff(flow.mass(n), pair[n].0));
        out.pair_eta = out
            .pair_eta
            .max(tv_distance(flow.eta(n), &pair[n].1)?);
        out.product_mass = out.product_mass.max(rel_diff(flow.mass(n), product[n]));
        out.decomposition = out
            .decomposition
            .max(semigroups.decomposition_residual(&flow, n)?);
    }
    Ok(out)
}

/// Memoized Feynman-Kac semigroups `Q_{p,n} = Q_{p+1} ... Q_n`.
///
/// Columns `{Q_{p,n} : p <= n}` are computed together by the backward
/// recursion `Q_{p,n} = Q_{p+1} Q_{p+1,n}` and cached behind a mutex, so a
/// shared `Semigroups` can be queried from several threads.
pub struct Semigroups<'m> {
    model: &'m BranchingModel,
    columns: Mutex<HashMap<usize, Arc<Vec<WeightedKernel>>>>,
}

impl<'m> Semigroups<'m> {
    pub fn new(model: &'m BranchingModel) -> Self {
        Self {
            model,
            columns: Mutex::new(HashMap::new()),
        }
    }

    pub fn model(&self) -> &BranchingModel {
        self.model
    }

    /// `[Q_{0,n}, Q_{1,n}, ..., Q_{n,n}]`.
    pub fn column(&self, n: usize) -> Result<Arc<Vec<WeightedKernel>>> {
        if let Some(col) = self.columns.lock().unwrap().get(&n) {
            return Ok(col.clone());
        }
        self.model.check_time(n)?;
        let mut col = vec![WeightedKernel::identity(self.model.space(n)?)];
        for p in (0..n).rev() {
            let next = compose(&self.model.q_kernel(p)?, col.last().unwrap())?;
            col.push(next);
        }
        col.reverse();
        let col = Arc::new(col);
        self.columns.lock().unwrap().insert(n, col.clone());
        Ok(col)
    }

    pub fn q(&self, p: usize, n: usize) -> Result<WeightedKernel> {
        check_order(p, n)?;
        Ok(self.column(n)?[p].clone())
    }

    /// `Q_{p,n}(1)`.
    pub fn q_one(&self, p: usize, n: usize) -> Result<Vec<f64>> {
        check_order(p, n)?;
        Ok(self.column(n)?[p].row_sums())
    }

    /// `c_{p,n} = mu_p Q_{p,n}(1)`.
    pub fn c(&self, p: usize, n: usize) -> Result<f64> {
        let mu = self.model.immigration(p)?;
        Ok(mu
            .weights()
            .iter()
            .zip(self.q_one(p, n)?)
            .map(|(m, q)| m * q)
            .sum())
    }

    /// `P_{p,n}(x, .) = Q_{p,n}(x, .) / Q_{p,n}(1)(x)`.
    pub fn p_kernel(&self, p: usize, n: usize) -> Result<MarkovKernel> {
        self.q(p, n)?.normalize_rows()
    }

    /// `q_{p,n} = sup_{x,y} Q_{p,n}(1)(x) / Q_{p,n}(1)(y)`.
    pub fn q_ratio(&self, p: usize, n: usize) -> Result<f64> {
        let (lo, hi) = crate::measure::min_max(&self.q_one(p, n)?);
        Ok(hi / lo)
    }

    pub fn beta(&self, p: usize, n: usize) -> Result<f64> {
        Ok(dobrushin(&self.p_kernel(p, n)?))
    }

    /// `Phi_{p,n}(eta) = eta Q_{p,n} / eta Q_{p,n}(1)`.
    pub fn phi(&self, p: usize, n: usize, eta: &ProbabilityMeasure) -> Result<ProbabilityMeasure> {
        apply_kernel(eta.as_measure(), &self.q(p, n)?)?.normalized()
    }

    /// Max relative residual of `gamma_n = gamma_p Q_{p,n} + sum_{p<q<=n} mu_q Q_{q,n}`
    /// over all `p <= n` (the case `p = 0` is `gamma_n = sum_q mu_q Q_{q,n}`).
    pub fn decomposition_residual(&self, flow: &FlowTrajectory, n: usize) -> Result<f64> {
        let col = self.column(n)?;
        let target = flow.gamma(n);
        let scale = 1f64.max(target.mass());
        // tail[p] = sum_{p<q<=n} mu_q Q_{q,n}
        let mut tail = DiscreteMeasure::zero(self.model.space(n)?);
        let mut worst: f64 = 0.0;
        for p in (0..=n).rev() {
            let head = apply_kernel(flow.gamma(p), &col[p])?;
            let total = head.plus(&tail)?;
            worst = worst.max(total.max_abs_diff(target)? / scale);
            tail = tail.plus(&apply_kernel(self.model.immigration(p)?, &col[p])?)?;
        }
        // after the loop tail = sum_{0<=q<=n} mu_q Q_{q,n}
        worst = worst.max(tail.max_abs_diff(target)? / scale);
        Ok(worst)
    }
}

fn check_order(p: usize, n: usize) -> Result<()> {
    if p > n {
        Err(Error::InvalidArgument(format!("need p <= n, got p = {p}, n = {n}")))
    } else {
        Ok(())
    }
}

/// Everything the error bounds need about the pair `(p, n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SemigroupStats {
    pub p: usize,
    pub n: usize,
    pub q_kernel: WeightedKernel,
    pub p_kernel: MarkovKernel,
    /// `q_{p,n}`.
    pub q_ratio: f64,
    /// `beta(P_{p,n})`.
    pub beta: f64,
    /// `c_{p,n} = mu_p Q_{p,n}(1)`.
    pub c: f64,
    /// `alpha*_{p,n}(m_+(p))`, i.e. `1 ∧ m_{p,n}`.
    pub alpha_star: f64,
    /// `b_{p,n}`.
    pub b: f64,
    /// Relative residual of the semigroup decomposition of `gamma_n`.
    pub decomposition_residual: f64,
}

pub fn semigroup_stats(model: &BranchingModel, p: usize, n: usize) -> Result<SemigroupStats> {
    check_order(p, n)?;
    let sg = Semigroups::new(model);
    let flow = run_flow(model, n)?;
    let b = b_constants_with(&sg, n)?;
    Ok(SemigroupStats {
        p,
        n,
        q_kernel: sg.q(p, n)?,
        p_kernel: sg.p_kernel(p, n)?,
        q_ratio: sg.q_ratio(p, n)?,
        beta: sg.beta(p, n)?,
        c: sg.c(p, n)?,
        alpha_star: b.alpha_star[p],
        b: b.terms[p],
        decomposition_residual: sg.decomposition_residual(&flow, n)?,
    })
}

/// Exact `alpha_{p,n}(m, eta)` against its uniform bound `alpha*_{p,n}(m)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaReport {
    pub exact: f64,
    pub bound: f64,
    /// Set when `m eta Q_{p,n}(1) + sum c_{q,n} = 0`; `exact` is then 0.
    pub degenerate: bool,
}

pub fn alpha_star(
    model: &BranchingModel,
    p: usize,
    n: usize,
    mass: f64,
    eta: &ProbabilityMeasure,
) -> Result<AlphaReport> {
    alpha_star_with(&Semigroups::new(model), p, n, mass, eta)
}

pub fn alpha_star_with(
    sg: &Semigroups<'_>,
    p: usize,
    n: usize,
    mass: f64,
    eta: &ProbabilityMeasure,
) -> Result<AlphaReport> {
    check_order(p, n)?;
    if mass < 0.0 {
        return Err(Error::InvalidArgument("negative mass".into()));
    }
    let q1 = sg.q_one(p, n)?;
    let eta_q1: f64 = eta.weights().iter().zip(&q1).map(|(e, q)| e * q).sum();
    let c_sum = c_tail(sg, p, n)?;
    let num = mass * eta_q1;
    let (exact, degenerate) = if num + c_sum > 0.0 {
        (num / (num + c_sum), false)
    } else {
        (0.0, true)
    };
    let sup_q1 = q1.iter().fold(0.0f64, |m, v| m.max(*v));
    let bound = if mass == 0.0 {
        0.0
    } else if c_sum == 0.0 {
        1.0
    } else {
        (mass * sup_q1 / c_sum).min(1.0)
    };
    Ok(AlphaReport {
        exact,
        bound,
        degenerate,
    })
}

/// `sum_{p<q<=n} c_{q,n}`.
fn c_tail(sg: &Semigroups<'_>, p: usize, n: usize) -> Result<f64> {
    ((p + 1)..=n).map(|q| sg.c(q, n)).sum()
}

/// `(m_-(n), m_+(n)) = sum_p mu_p(1) g_{-/+}(n)^{n-p}`.
pub fn mass_envelope(model: &BranchingModel, n: usize) -> Result<(f64, f64)> {
    let (lo, hi) = model.g_bounds(n)?;
    let mut m_minus = 0.0;
    let mut m_plus = 0.0;
    for p in 0..=n {
        let mu = model.immigration(p)?.mass();
        let e = (n - p) as i32;
        m_minus += mu * lo.powi(e);
        m_plus += mu * hi.powi(e);
    }
    Ok((m_minus, m_plus))
}

/// `gamma_inf = sum_{n >= 0} mu Q^n` and its normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct LimitingMeasures {
    pub gamma: DiscreteMeasure,
    pub eta: Option<ProbabilityMeasure>,
    pub terms: usize,
}

/// Limiting measures of a homogeneous subcritical model.
pub fn limiting_measures(model: &BranchingModel) -> Result<LimitingMeasures> {
    if !model.is_homogeneous() {
        return Err(Error::Regime("limiting measures need a homogeneous model".into()));
    }
    let g_plus = model.potential(0)?.upper();
    if g_plus >= 1.0 {
        return Err(Error::Regime(format!(
            "limiting measures need sup G < 1, found {g_plus}"
        )));
    }
    let mu = model.immigration(1)?;
    let q = model.q_kernel(0)?;
    let mut term = mu.clone();
    let mut gamma = mu.clone();
    let mut terms = 1;
    // tail after k terms: sum_{j >= k} mu Q^j (1) <= mu(1) g^k / (1 - g)
    while mu.mass() * g_plus.powi(terms as i32) / (1.0 - g_plus) >= SERIES_TAIL_TOL {
        if terms >= MAX_ITERATIONS {
            return Err(Error::NoConvergence { iterations: terms });
        }
        term = apply_kernel(&term, &q)?;
        gamma = gamma.plus(&term)?;
        terms += 1;
    }
    let eta = if gamma.mass() > 0.0 {
        Some(gamma.normalized()?)
    } else {
        None
    };
    Ok(LimitingMeasures { gamma, eta, terms })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPoint {
    pub eta: ProbabilityMeasure,
    /// `log eta_inf(G)`.
    pub lyapunov: f64,
    pub iterations: usize,
}

/// Fixed point of `eta -> Psi_G(eta) M` for a homogeneous model, started
/// from the uniform law.
pub fn fixed_point_eta(model: &BranchingModel) -> Result<FixedPoint> {
    if !model.is_homogeneous() {
        return Err(Error::Regime("fixed point needs a homogeneous model".into()));
    }
    let g = model.potential(0)?;
    let m = model.transition(0)?;
    let mut eta = ProbabilityMeasure::uniform(m.source());
    for it in 1..=MAX_ITERATIONS {
        let next = transport(&boltzmann_gibbs(g, &eta)?, m)?;
        let inc = tv_distance(&next, &eta)?;
        eta = next;
        if inc < FIXED_POINT_TOL {
            let lyapunov = eta.integrate(g.as_function())?.ln();
            return Ok(FixedPoint {
                eta,
                lyapunov,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
    })
}

/// Certificate for `M^k(x, .) >= epsilon M^k(y, .)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingCertificate {
    pub k: usize,
    pub epsilon: f64,
    /// Potential ratio bound over `k` steps: `(g_+/g_-)^k`.
    pub delta_k: f64,
    /// Same over `k - 1` steps.
    pub delta_k_minus_1: f64,
}

impl MixingCertificate {
    /// Bound on `q_{p,p+n}` for every `n`.
    pub fn q_bound(&self) -> f64 {
        self.delta_k / self.epsilon
    }

    /// Bound on `beta(P_{p,p+n})`.
    pub fn beta_bound(&self, n: usize) -> f64 {
        (1.0 - self.epsilon * self.epsilon / self.delta_k_minus_1).powi((n / self.k) as i32)
    }
}

/// Largest `epsilon` with `M^k(x, .) >= epsilon M^k(y, .)` for all pairs.
///
/// The potential ratio is bounded by `(g_+/g_-)^k`, the supremum over all
/// paths; it dominates the supremum over admissible paths, so every bound
/// derived from the certificate stays valid when `M` has zeros.
pub fn mixing_certificate(model: &BranchingModel, k: usize) -> Result<MixingCertificate> {
    if !model.is_homogeneous() {
        return Err(Error::InvalidArgument(
            "mixing certificates are computed for homogeneous models".into(),
        ));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("lag k must be >= 1".into()));
    }
    let mk = model.transition(0)?.power(k)?;
    let d = mk.source().size();
    let mut epsilon: f64 = 1.0;
    for x in 0..d {
        for y in 0..d {
            if x == y {
                continue;
            }
            for z in 0..d {
                let den = mk.entry(y, z);
                if den > 0.0 {
                    epsilon = epsilon.min(mk.entry(x, z) / den);
                }
            }
        }
    }
    if epsilon <= 0.0 {
        return Err(Error::CertificateAbsent { k });
    }
    let g = model.potential(0)?;
    let ratio = g.upper() / g.lower();
    Ok(MixingCertificate {
        k,
        epsilon,
        delta_k: ratio.powi(k as i32),
        delta_k_minus_1: ratio.powi(k as i32 - 1),
    })
}

/// Worst case of the exact semigroup constants against the certificate
/// bounds over `0 <= p <= n <= n_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dominance {
    pub pairs: usize,
    /// `max q_{p,n} / q_bound`.
    pub worst_q_ratio: f64,
    /// `max beta(P_{p,n}) - beta_bound(n - p)`.
    pub worst_beta_excess: f64,
}

impl Dominance {
    pub fn holds(&self) -> bool {
        self.worst_q_ratio <= 1.0 + EXACT_TOL && self.worst_beta_excess <= EXACT_TOL
    }
}

pub fn bound_dominance(
    model: &BranchingModel,
    cert: &MixingCertificate,
    n_max: usize,
) -> Result<Dominance> {
    let sg = Semigroups::new(model);
    let mut out = Dominance {
        pairs: 0,
        worst_q_ratio: 0.0,
        worst_beta_excess: f64::NEG_INFINITY,
    };
    for n in 0..=n_max {
        for p in 0..=n {
            out.pairs += 1;
            out.worst_q_ratio = out.worst_q_ratio.max(sg.q_ratio(p, n)? / cert.q_bound());
            out.worst_beta_excess = out
                .worst_beta_excess
                .max(sg.beta(p, n)? - cert.beta_bound(n - p));
        }
    }
    Ok(out)
}

/// The constants `b_{p,n}` of the `L_r` error bound and their sum `b_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BConstants {
    pub n: usize,
    pub terms: Vec<f64>,
    /// `1 ∧ m_{p,n}` for each `p`.
    pub alpha_star: Vec<f64>,
    pub total: f64,
}

pub fn b_constants(model: &BranchingModel, n: usize) -> Result<BConstants> {
    b_constants_with(&Semigroups::new(model), n)
}

/// `b_{p,n} = 2 (1 ∧ m_{p,n}) q_{p,n} [q_{p,n} beta(P_{p,n})
///   + sum_{p<q<=n} c_{q,n} / (sum_{p<r<=n} c_{r,n}) beta(P_{q,n})]`
/// with `m_{p,n} = m_+(p) ||Q_{p,n}(1)|| / sum_{p<q<=n} c_{q,n}`.
///
/// When the tail sum of `c` vanishes (no immigration after `p`, or `p = n`)
/// the mixture term is empty and `1 ∧ m_{p,n} = 1`, which gives the
/// immigration-free constant `2 q^2 beta`.
pub fn b_constants_with(sg: &Semigroups<'_>, n: usize) -> Result<BConstants> {
    let model = sg.model();
    let q: Vec<f64> = (0..=n).map(|p| sg.q_ratio(p, n)).collect::<Result<_>>()?;
    let beta: Vec<f64> = (0..=n).map(|p| sg.beta(p, n)).collect::<Result<_>>()?;
    let c: Vec<f64> = (0..=n).map(|p| sg.c(p, n)).collect::<Result<_>>()?;
    let mut terms = Vec::with_capacity(n + 1);
    let mut alpha_star = Vec::with_capacity(n + 1);
    for p in 0..=n {
        let c_sum: f64 = c[p + 1..].iter().sum();
        let sup_q1 = sg.q_one(p, n)?.into_iter().fold(0.0f64, f64::max);
        let m_plus_p = mass_envelope(model, p)?.1;
        let (a, mixture) = if c_sum > 0.0 {
            let mix: f64 = ((p + 1)..=n).map(|j| c[j] / c_sum * beta[j]).sum();
            ((m_plus_p * sup_q1 / c_sum).min(1.0), mix)
        } else {
            (1.0, 0.0)
        };
        alpha_star.push(a);
        terms.push(2.0 * a * q[p] * (q[p] * beta[p] + mixture));
    }
    let total = terms.iter().sum();
    Ok(BConstants {
        n,
        terms,
        alpha_star,
        total,
    })
}

/// `b_n` for `n = 0..=n_max`.
pub fn b_sequence(model: &BranchingModel, n_max: usize) -> Result<Vec<f64>> {
    let sg = Semigroups::new(model);
    (0..=n_max)
        .map(|n| Ok(b_constants_with(&sg, n)?.total))
        .collect()
}

/// `(n+1)/(N-1) (delta_k/eps)^2 (1 + (delta_k/eps)^2/(N-1))^(n-1)`: the
/// non-asymptotic bound on `E[(gamma_n^N(1)/gamma_n(1) - 1)^2]`.
pub fn variance_bound_rhs(cert: &MixingCertificate, n: usize, particles: usize) -> Result<f64> {
    if particles <= 1 {
        return Err(Error::InvalidArgument(format!(
            "variance bound needs N > 1, got {particles}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("variance bound needs n >= 1".into()));
    }
    let r = (cert.delta_k / cert.epsilon).powi(2);
    let nm1 = (particles - 1) as f64;
    Ok((n as f64 + 1.0) / nm1 * r * (1.0 + r / nm1).powi(n as i32 - 1))
}

/// `Gamma_{p,n}(m, eta)` through the semigroup decomposition:
/// mass `m eta Q_{p,n}(1) + sum_{p<q<=n} c_{q,n}` and law
/// `alpha Phi_{p,n}(eta) + (1 - alpha) sum_q (c_{q,n}/sum c) Phi_{q,n}(mu_bar_q)`.
pub fn gamma_semigroup(
    model: &BranchingModel,
    p: usize,
    n: usize,
    mass: f64,
    eta: &ProbabilityMeasure,
) -> Result<(f64, ProbabilityMeasure)> {
    gamma_semigroup_with(&Semigroups::new(model), p, n, mass, eta)
}

pub fn gamma_semigroup_with(
    sg: &Semigroups<'_>,
    p: usize,
    n: usize,
    mass: f64,
    eta: &ProbabilityMeasure,
) -> Result<(f64, ProbabilityMeasure)> {
    check_order(p, n)?;
    let model = sg.model();
    if eta.space() != model.space(p)? {
        return Err(Error::SpaceMismatch("gamma_semigroup"));
    }
    if p == n {
        return Ok((mass, eta.clone()));
    }
    let alpha = alpha_star_with(sg, p, n, mass, eta)?;
    if alpha.degenerate {
        return Err(Error::InvalidArgument(
            "Gamma_{p,n} undefined: zero mass and no immigration".into(),
        ));
    }
    let q1 = sg.q_one(p, n)?;
    let eta_q1: f64 = eta.weights().iter().zip(&q1).map(|(e, q)| e * q).sum();
    let c_sum = c_tail(sg, p, n)?;
    let out_mass = mass * eta_q1 + c_sum;

    let space_n = model.space(n)?;
    let mut weights = vec![0.0; space_n.size()];
    if alpha.exact > 0.0 {
        for (w, v) in weights.iter_mut().zip(sg.phi(p, n, eta)?.weights()) {
            *w += alpha.exact * v;
        }
    }
    if c_sum > 0.0 {
        for q in (p + 1)..=n {
            let c = sg.c(q, n)?;
            if c == 0.0 {
                continue;
            }
            let mu_bar = model.immigration_law(q)?.expect("c > 0 implies mu_q != 0");
            let phi = sg.phi(q, n, &mu_bar)?;
            let w = (1.0 - alpha.exact) * c / c_sum;
            for (acc, v) in weights.iter_mut().zip(phi.weights()) {
                *acc += w * v;
            }
        }
    }
    // renormalize away rounding in the convex combination
    let law = DiscreteMeasure::new(space_n, weights)?.normalized()?;
    Ok((out_mass, law))
}

/// `Gamma_{p,n}` by composing one-step maps.
pub fn gamma_iterated(
    model: &BranchingModel,
    p: usize,
    n: usize,
    mass: f64,
    eta: &ProbabilityMeasure,
) -> Result<(f64, ProbabilityMeasure)> {
    check_order(p, n)?;
    let mut state = (mass, eta.clone());
    for q in p..n {
        state = model.gamma_step(q, state.0, &state.1)?;
    }
    Ok(state)
}

/// `eta K ([f - K f]^2)` for a Markov kernel `K`: the conditional
/// variance of one draw from `K(x, .)`, averaged over `x ~ eta`.
pub fn kernel_variance(eta: &ProbabilityMeasure, k: &MarkovKernel, f: &Function) -> Result<f64> {
    let kf = k.apply_fn(f)?;
    let mut acc = 0.0;
    for (x, &w) in eta.weights().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let mean = kf.values()[x];
        let v: f64 = k
            .row(x)
            .iter()
            .zip(f.values())
            .map(|(p, fy)| p * (fy - mean) * (fy - mean))
            .sum();
        acc += w * v;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{Potential, StateSpace};
    use crate::scenarios;

    #[test]
    fn intensity_step_examples() {
        let m = scenarios::s_one();
        let g1 = intensity_step(m.initial(), &m, 0).unwrap();
        assert!((g1.weights()[0] - 0.59).abs() < EXACT_TOL);
        assert!((g1.weights()[1] - 0.41).abs() < EXACT_TOL);

        // gamma_n = 0 -> gamma_{n+1} = mu_{n+1}
        let zero = DiscreteMeasure::zero(m.space(0).unwrap());
        assert_eq!(&intensity_step(&zero, &m, 3).unwrap(), m.immigration(4).unwrap());
    }

    #[test]
    fn pure_transport_conserves_mass() {
        let s = StateSpace::indexed(2);
        let m = BranchingModel::homogeneous_with_initial(
            Potential::constant(&s, 1.0).unwrap(),
            MarkovKernel::square(&s, vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap(),
            DiscreteMeasure::zero(&s),
            DiscreteMeasure::new(&s, vec![0.9, 0.1]).unwrap(),
        )
        .unwrap();
        let flow = run_flow(&m, 10).unwrap();
        for n in 0..=10 {
            assert!((flow.mass(n) - 1.0).abs() < EXACT_TOL);
        }
    }

    #[test]
    fn closed_form_masses() {
        let one = run_flow(&scenarios::s_one(), 6).unwrap();
        assert!((one.mass(6) - 3.5).abs() < EXACT_TOL);
        let sub = run_flow(&scenarios::s_sub(), 2).unwrap();
        assert!((sub.mass(2) - 0.875).abs() < EXACT_TOL);
    }

    #[test]
    fn routes_agree() {
        for m in [scenarios::s_one(), scenarios::s_sub(), scenarios::s_sup(), scenarios::s_mix()] {
            let a = route_agreement(&m, 30).unwrap();
            assert!(a.max() < EXACT_TOL, "{a:?}");
        }
    }

    #[test]
    fn constant_potential_semigroup() {
        let m = scenarios::s_sub();
        let sg = Semigroups::new(&m);
        for (p, n) in [(0, 5), (2, 3), (4, 4)] {
            for v in sg.q_one(p, n).unwrap() {
                assert!((v - 0.5f64.powi((n - p) as i32)).abs() < EXACT_TOL);
            }
            assert!((sg.q_ratio(p, n).unwrap() - 1.0).abs() < EXACT_TOL);
        }
    }

    #[test]
    fn stats_one_step_and_diagonal() {
        let m = scenarios::s_one();
        let s = semigroup_stats(&m, 0, 1).unwrap();
        assert!((s.beta - 0.3).abs() < EXACT_TOL);
        let d = semigroup_stats(&m, 3, 3).unwrap();
        assert_eq!(d.q_kernel, WeightedKernel::identity(m.space(3).unwrap()));
        assert_eq!(d.q_ratio, 1.0);
        assert_eq!(d.beta, 1.0);
        assert!(semigroup_stats(&m, 4, 3).is_err());
    }

    #[test]
    fn alpha_examples() {
        let m = scenarios::s_one();
        let eta = ProbabilityMeasure::uniform(m.space(0).unwrap());
        let a = alpha_star(&m, 1, 5, 0.5, &eta).unwrap();
        assert!((a.exact - 0.2).abs() < EXACT_TOL);
        assert!(a.exact <= a.bound + EXACT_TOL);

        let zero_mu = scenarios::without_immigration(&m, 1.0);
        let a = alpha_star(&zero_mu, 0, 4, 0.7, &eta).unwrap();
        assert_eq!(a.exact, 1.0);
        assert_eq!(a.bound, 1.0);

        let a = alpha_star(&m, 0, 4, 0.0, &eta).unwrap();
        assert_eq!(a.exact, 0.0);
        assert!(!a.degenerate);

        let a = alpha_star(&zero_mu, 0, 4, 0.0, &eta).unwrap();
        assert!(a.degenerate);
        assert_eq!(a.exact, 0.0);
    }

    #[test]
    fn envelope_examples() {
        let sub = scenarios::s_sub();
        let (lo, hi) = mass_envelope(&sub, 2).unwrap();
        assert!((lo - 0.875).abs() < EXACT_TOL && (hi - 0.875).abs() < EXACT_TOL);

        let sup = scenarios::s_sup();
        for n in [0usize, 1, 5, 20] {
            let g = 1.25f64.powi(n as i32);
            let closed = 0.5 * g + 0.5 * (g - 1.0) / 0.25;
            let (lo, hi) = mass_envelope(&sup, n).unwrap();
            assert!((lo - closed).abs() <= EXACT_TOL * closed.max(1.0));
            assert_eq!(lo, hi);
        }
    }

    #[test]
    fn limiting_examples() {
        let lim = limiting_measures(&scenarios::s_sub()).unwrap();
        assert!((lim.gamma.mass() - 1.0).abs() < 1e-13);
        assert!(limiting_measures(&scenarios::s_one()).is_err());
        let none = limiting_measures(&scenarios::without_immigration(&scenarios::s_sub(), 0.5)).unwrap();
        assert_eq!(none.gamma.mass(), 0.0);
        assert!(none.eta.is_none());
    }

    #[test]
    fn fixed_point_examples() {
        let fp = fixed_point_eta(&scenarios::s_one()).unwrap();
        assert!((fp.eta.weights()[0] - 4.0 / 7.0).abs() < 1e-12);
        assert!((fp.eta.weights()[1] - 3.0 / 7.0).abs() < 1e-12);

        let fp = fixed_point_eta(&scenarios::s_sup()).unwrap();
        assert!((fp.lyapunov - 1.25f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn fixed_point_rank_one() {
        let s = StateSpace::indexed(3);
        let pi = ProbabilityMeasure::new(&s, vec![0.2, 0.5, 0.3]).unwrap();
        let m = BranchingModel::homogeneous(
            Potential::new(&s, vec![0.5, 2.0, 1.0]).unwrap(),
            MarkovKernel::rank_one(&s, &pi),
            DiscreteMeasure::new(&s, vec![0.1, 0.1, 0.1]).unwrap(),
        )
        .unwrap();
        let fp = fixed_point_eta(&m).unwrap();
        assert!(fp.iterations <= 2);
        assert!(tv_distance(&fp.eta, &pi).unwrap() < 1e-15);
    }

    #[test]
    fn fixed_point_periodic_fails() {
        let s = StateSpace::indexed(2);
        let m = BranchingModel::homogeneous(
            Potential::new(&s, vec![1.0, 2.0]).unwrap(),
            MarkovKernel::square(&s, vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
            DiscreteMeasure::new(&s, vec![0.1, 0.1]).unwrap(),
        )
        .unwrap();
        assert!(matches!(fixed_point_eta(&m), Err(Error::NoConvergence { .. })));
        assert_eq!(mixing_certificate(&m, 1), Err(Error::CertificateAbsent { k: 1 }));
    }

    #[test]
    fn certificate_examples() {
        let c = mixing_certificate(&scenarios::s_sub(), 1).unwrap();
        assert!((c.epsilon - 0.5).abs() < EXACT_TOL);
        assert_eq!(c.delta_k, 1.0);

        let s = StateSpace::indexed(2);
        let pi = ProbabilityMeasure::new(&s, vec![0.3, 0.7]).unwrap();
        let m = BranchingModel::homogeneous(
            Potential::constant(&s, 1.0).unwrap(),
            MarkovKernel::rank_one(&s, &pi),
            DiscreteMeasure::new(&s, vec![0.1, 0.1]).unwrap(),
        )
        .unwrap();
        assert_eq!(mixing_certificate(&m, 1).unwrap().epsilon, 1.0);
    }

    #[test]
    fn b_constant_reductions() {
        // no immigration: b_{p,n} = 2 q^2 beta
        let m = scenarios::without_immigration(&scenarios::s_mix(), 1.0);
        let sg = Semigroups::new(&m);
        let b = b_constants_with(&sg, 6).unwrap();
        for p in 0..=6 {
            let q = sg.q_ratio(p, 6).unwrap();
            let beta = sg.beta(p, 6).unwrap();
            assert!((b.terms[p] - 2.0 * q * q * beta).abs() < EXACT_TOL);
        }

        // rank-one motion and constant potential: beta(P_{q,n}) = 0 for q < n,
        // so only the q = n mixture term (beta(P_{n,n}) = 1) remains for p < n
        let s = StateSpace::indexed(2);
        let pi = ProbabilityMeasure::new(&s, vec![0.3, 0.7]).unwrap();
        let m = BranchingModel::homogeneous(
            Potential::constant(&s, 0.8).unwrap(),
            MarkovKernel::rank_one(&s, &pi),
            DiscreteMeasure::new(&s, vec![0.1, 0.1]).unwrap(),
        )
        .unwrap();
        let sg = Semigroups::new(&m);
        let b = b_constants_with(&sg, 5).unwrap();
        let c_n = sg.c(5, 5).unwrap();
        for p in 0..5 {
            let c_sum: f64 = ((p + 1)..=5).map(|q| sg.c(q, 5).unwrap()).sum();
            let expect = 2.0 * b.alpha_star[p] * c_n / c_sum;
            assert!((b.terms[p] - expect).abs() < EXACT_TOL);
        }
        assert_eq!(b.terms[5], 2.0);
    }

    #[test]
    fn variance_bound_examples() {
        let cert = MixingCertificate {
            k: 1,
            epsilon: 0.5,
            delta_k: 1.0,
            delta_k_minus_1: 1.0,
        };
        // 6/100 * 4 * 1.04^4
        let v = variance_bound_rhs(&cert, 5, 101).unwrap();
        assert!((v - 0.24 * 1.04f64.powi(4)).abs() < 1e-15);
        assert!((variance_bound_rhs(&cert, 1, 11).unwrap() - 2.0 / 10.0 * 4.0).abs() < 1e-15);
        assert!(variance_bound_rhs(&cert, 6, 101).unwrap() > v);
        assert!(variance_bound_rhs(&cert, 5, 201).unwrap() < v);
        assert!(variance_bound_rhs(&cert, 5, 1).is_err());
        assert!(variance_bound_rhs(&cert, 0, 10).is_err());
    }

    #[test]
    fn gamma_semigroup_matches_flow_and_iteration() {
        for m in [scenarios::s_one(), scenarios::s_mix()] {
            let flow = run_flow(&m, 8).unwrap();
            let (mass, eta) =
                gamma_semigroup(&m, 0, 8, flow.mass(0), flow.eta(0)).unwrap();
            assert!((mass - flow.mass(8)).abs() < EXACT_TOL * mass);
            assert!(tv_distance(&eta, flow.eta(8)).unwrap() < EXACT_TOL);

            let start = ProbabilityMeasure::new(m.space(2).unwrap(), vec![0.9, 0.1]).unwrap();
            let a = gamma_semigroup(&m, 2, 7, 1.7, &start).unwrap();
            let b = gamma_iterated(&m, 2, 7, 1.7, &start).unwrap();
            assert!((a.0 - b.0).abs() < EXACT_TOL * a.0);
            assert!(tv_distance(&a.1, &b.1).unwrap() < EXACT_TOL);

            let id = gamma_semigroup(&m, 4, 4, 1.7, &start).unwrap();
            assert_eq!(id, (1.7, start.clone()));
        }
    }

    #[test]
    fn gamma_semigroup_unit_potential_closed_form() {
        let m = scenarios::s_one();
        let mk = m.transition(0).unwrap();
        let eta0 = m.initial().normalized().unwrap();
        let mu_bar = m.immigration_law(1).unwrap().unwrap();
        let (g0, mu1, n) = (0.5, 0.5, 3usize);
        let mut expect = vec![0.0; 2];
        let head = transport(&eta0, &mk.power(n).unwrap()).unwrap();
        for (e, h) in expect.iter_mut().zip(head.weights()) {
            *e += g0 * h;
        }
        for p in 0..n {
            let t = transport(&mu_bar, &mk.power(p).unwrap()).unwrap();
            for (e, v) in expect.iter_mut().zip(t.weights()) {
                *e += mu1 * v;
            }
        }
        expect.iter_mut().for_each(|e| *e /= g0 + n as f64 * mu1);
        let (_, law) = gamma_semigroup(&m, 0, n, g0, &eta0).unwrap();
        for (a, b) in law.weights().iter().zip(&expect) {
            assert!((a - b).abs() < EXACT_TOL);
        }
    }
}
