//! Particle approximation of the spontaneous-birth measures.
//!
//! With reference laws `lambda_n` and bounded densities
//! `H_n = d mu_n / d lambda_n`, the birth measures are replaced by
//! `mu_n^{N'} = H_n lambda_n^{N'}` where `lambda_n^{N'}` is the empirical
//! law of `N'` iid draws from `lambda_n`. Plugging them into the intensity
//! recursion gives the unbiased random flow
//! `tilde gamma_n = tilde gamma_{n-1} Q_n + mu_n^{N'}`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::{mixing_certificate, FlowTrajectory, Semigroups};
use crate::measure::{apply_kernel, DiscreteMeasure, Function, ProbabilityMeasure};
use crate::model::{BranchingModel, Regime};
use crate::rng::{CounterRng, Purpose};
use crate::sim::sample_index;

/// `H = d mu / d lambda`; fails unless `lambda` dominates `mu`.
pub fn density(mu: &DiscreteMeasure, lambda: &ProbabilityMeasure) -> Result<Function> {
    if mu.space() != lambda.space() {
        return Err(Error::SpaceMismatch("density"));
    }
    let values = mu
        .weights()
        .iter()
        .zip(lambda.weights())
        .enumerate()
        .map(|(x, (m, l))| {
            if *l > 0.0 {
                Ok(m / l)
            } else if *m == 0.0 {
                Ok(0.0)
            } else {
                Err(Error::InvalidMeasure(format!(
                    "reference law does not dominate mu at state {x}"
                )))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Function::new(mu.space(), values)
}

/// `mu^{N'} = H lambda^{N'}` from `N'` draws `zeta^i ~ lambda`.
#[derive(Clone, Debug, PartialEq)]
pub struct BirthParticleMeasure {
    pub samples: Vec<usize>,
    pub density: Vec<f64>,
    pub measure: DiscreteMeasure,
}

pub fn birth_particle_measure(
    lambda: &ProbabilityMeasure,
    h: &Function,
    samples: usize,
    rng_key: (u64, u64, usize),
) -> Result<BirthParticleMeasure> {
    if h.values().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidArgument("density must be finite and nonnegative".into()));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one birth sample".into()));
    }
    let (seed, run, step) = rng_key;
    let zeta: Vec<usize> = (0..samples)
        .map(|i| {
            let u = CounterRng::keyed(seed, run, step, i, Purpose::Birth).uniform();
            sample_index(lambda.weights(), u)
        })
        .collect();
    let mut weights = vec![0.0; lambda.space().size()];
    for &z in &zeta {
        weights[z] += h.values()[z];
    }
    weights.iter_mut().for_each(|w| *w /= samples as f64);
    let density = zeta.iter().map(|z| h.values()[*z]).collect();
    Ok(BirthParticleMeasure {
        samples: zeta,
        density,
        measure: DiscreteMeasure::new(lambda.space(), weights)?,
    })
}

/// Reference laws for `n = 0..=n_max` with their densities.
#[derive(Clone, Debug)]
pub struct BirthReference {
    pub lambdas: Vec<ProbabilityMeasure>,
    pub densities: Vec<Function>,
}

impl BirthReference {
    /// The same `lambda` at every step.
    pub fn constant(model: &BranchingModel, lambda: &ProbabilityMeasure, n_max: usize) -> Result<Self> {
        Self::new(model, vec![lambda.clone(); n_max + 1])
    }

    pub fn new(model: &BranchingModel, lambdas: Vec<ProbabilityMeasure>) -> Result<Self> {
        let densities = lambdas
            .iter()
            .enumerate()
            .map(|(n, l)| density(model.immigration(n)?, l))
            .collect::<Result<_>>()?;
        Ok(Self { lambdas, densities })
    }

    pub fn horizon(&self) -> usize {
        self.lambdas.len() - 1
    }

    /// One draw of `(mu_0^{N'}, ..., mu_{n_max}^{N'})`.
    pub fn draw(&self, samples: usize, seed: u64, run: u64) -> Result<Vec<DiscreteMeasure>> {
        (0..self.lambdas.len())
            .map(|n| {
                Ok(birth_particle_measure(&self.lambdas[n], &self.densities[n], samples, (seed, run, n))?
                    .measure)
            })
            .collect()
    }

    /// `||H_n||`, maximized over steps.
    pub fn density_sup(&self) -> f64 {
        self.densities.iter().map(|h| h.sup_norm()).fold(0.0, f64::max)
    }
}

/// `tilde gamma_n = tilde gamma_{n-1} Q_n + mu_n^{N'}`, `tilde gamma_0 = mu_0^{N'}`.
pub fn tilde_flow(model: &BranchingModel, births: &[DiscreteMeasure]) -> Result<FlowTrajectory> {
    if births.is_empty() {
        return Err(Error::InvalidArgument("need at least one birth measure".into()));
    }
    let mut gammas: Vec<DiscreteMeasure> = Vec::with_capacity(births.len());
    gammas.push(births[0].clone());
    for n in 1..births.len() {
        let next = model.push(&gammas[n - 1], n - 1)?.plus(&births[n])?;
        gammas.push(next);
    }
    FlowTrajectory::from_intensities(gammas)
}

/// Max relative residual of `tilde gamma_n = sum_p mu_p^{N'} Q_{p,n}`.
pub fn tilde_decomposition_residual(
    sg: &Semigroups<'_>,
    births: &[DiscreteMeasure],
    flow: &FlowTrajectory,
    n: usize,
) -> Result<f64> {
    let col = sg.column(n)?;
    let mut total = DiscreteMeasure::zero(births[n].space());
    for p in 0..=n {
        total = total.plus(&apply_kernel(&births[p], &col[p])?)?;
    }
    let scale = flow.mass(n).max(1.0);
    Ok(total.max_abs_diff(flow.gamma(n))? / scale)
}

/// `N' Var(tilde gamma_n(f)) = sum_p Var_{lambda_p}(H_p Q_{p,n} f)`.
pub fn exact_birth_variance(
    sg: &Semigroups<'_>,
    reference: &BirthReference,
    n: usize,
    f: &Function,
) -> Result<f64> {
    let col = sg.column(n)?;
    (0..=n)
        .map(|p| {
            let hqf = reference.densities[p].mul(&col[p].apply_fn(f)?)?;
            reference.lambdas[p].variance(&hqf)
        })
        .sum()
}

/// `sum_p alpha*_{p,n}(gamma_p(1))^2 / gamma_p(1)^2 ||H_p|| mu_p(1) q_{p,n}^2 ||f||^2`,
/// an upper bound on `N' E[(tilde gamma_n(f)/gamma_n(1) - eta_n(f))^2]`.
pub fn crude_birth_bound(
    sg: &Semigroups<'_>,
    reference: &BirthReference,
    flow: &FlowTrajectory,
    n: usize,
    f: &Function,
) -> Result<f64> {
    let model = sg.model();
    let c: Vec<f64> = (0..=n).map(|p| sg.c(p, n)).collect::<Result<_>>()?;
    let mut total = 0.0;
    for p in 0..=n {
        let gp = flow.mass(p);
        let c_sum: f64 = c[p + 1..].iter().sum();
        let sup_q1 = sg.q_one(p, n)?.into_iter().fold(0.0, f64::max);
        let a = if c_sum > 0.0 {
            (gp * sup_q1 / c_sum).min(1.0)
        } else {
            1.0
        };
        let q = sg.q_ratio(p, n)?;
        total += (a / gp).powi(2)
            * reference.densities[p].sup_norm()
            * model.immigration(p)?.mass()
            * q
            * q;
    }
    Ok(total * f.sup_norm().powi(2))
}

/// Uniform-in-time bound on `N' sup_n E[(tilde gamma_n(f)/gamma_n(1) - eta_n(f))^2]`
/// for a homogeneous model in one of the three regimes, with `||f|| <= 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegimeBound {
    pub regime: Regime,
    /// `||H|| mu(1) (delta_k / eps)^2`.
    pub c: f64,
    pub series: f64,
}

impl RegimeBound {
    pub fn value(&self) -> f64 {
        self.c * self.series
    }
}

const SERIES_TERMS: usize = 100_000;

pub fn regime_bound(model: &BranchingModel, h_sup: f64, k: usize) -> Result<RegimeBound> {
    let regime = model
        .regime()
        .ok_or_else(|| Error::Regime("model is not in one of the three regimes".into()))?;
    let cert = mixing_certificate(model, k)?;
    let mu1 = model.immigration(1)?.mass();
    let g0 = model.initial().mass();
    let (g_lo, g_hi) = (model.potential(0)?.lower(), model.potential(0)?.upper());
    let c = h_sup * mu1 * (cert.delta_k / cert.epsilon).powi(2);
    let series = match regime {
        // sum_{p>=0} (g0 + mu p)^{-2}, tail bounded by an integral
        Regime::UnitPotential => {
            if g0 <= 0.0 {
                return Err(Error::Regime("unit-potential bound needs gamma_0(1) > 0".into()));
            }
            let head: f64 = (0..SERIES_TERMS)
                .map(|p| (g0 + mu1 * p as f64).powi(-2))
                .sum();
            let tail = if mu1 > 0.0 {
                1.0 / (mu1 * (g0 + mu1 * (SERIES_TERMS as f64 - 1.0)))
            } else {
                f64::INFINITY
            };
            head + tail
        }
        // d2^{-2} sum_{p>=0} [1 ∧ d1^2 g_+^{2p}]
        Regime::Subcritical => {
            let d1 = g0.max(mu1 / (1.0 - g_hi)) * cert.delta_k / (cert.epsilon * mu1);
            let d2 = g0.min(mu1 / (1.0 - g_lo));
            let mut sum = 0.0;
            let mut p = 0;
            loop {
                let t = (d1 * d1 * g_hi.powi(2 * p)).min(1.0);
                sum += t;
                p += 1;
                if t < 1.0 && t / (1.0 - g_hi * g_hi) < 1e-16 {
                    sum += t * g_hi * g_hi / (1.0 - g_hi * g_hi);
                    break;
                }
            }
            sum / (d2 * d2)
        }
        // sum_p m_-(p)^{-2}, closed with a geometric tail
        Regime::Supercritical => {
            let m_minus =
                |p: i32| g0 * g_lo.powi(p) + mu1 * (g_lo.powi(p) - 1.0) / (g_lo - 1.0);
            if m_minus(0) <= 0.0 {
                return Err(Error::Regime("supercritical bound needs gamma_0(1) > 0".into()));
            }
            let mut sum = 0.0;
            let mut p = 0;
            loop {
                let m = m_minus(p);
                sum += m.powi(-2);
                p += 1;
                let d = m_minus(p) / g_lo.powi(p);
                let tail = (d * d).recip() * g_lo.powi(-2 * p) / (1.0 - g_lo.powi(-2));
                if tail < 1e-16 * sum {
                    sum += tail;
                    break;
                }
            }
            sum
        }
        Regime::Gaussian => unreachable!("finite models are never tagged gaussian"),
    };
    Ok(RegimeBound { regime, c, series })
}

/// Per-run values `tilde gamma_n(f)` for `n <= n_max`, runs in parallel.
pub fn tilde_samples(
    model: &BranchingModel,
    reference: &BirthReference,
    samples: usize,
    runs: usize,
    seed: u64,
    f: &Function,
) -> Result<Vec<Vec<f64>>> {
    (0..runs)
        .into_par_iter()
        .map(|r| {
            let births = reference.draw(samples, seed, r as u64)?;
            let flow = tilde_flow(model, &births)?;
            (0..flow.len()).map(|n| flow.gamma(n).integrate(f)).collect()
        })
        .collect()
}
