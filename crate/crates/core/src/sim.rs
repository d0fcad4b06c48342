//! Direct simulation of the target population.
//!
//! One transition `n -> n+1`, in this order:
//!
//! 1. each target at `x` survives with probability `e_n(x)`;
//! 2. each survivor spawns `h >= 1` offspring with `E(h) = H_n(x)`;
//! 3. every offspring moves independently by `M_{n+1}` from the parent's
//!    state;
//! 4. `Poisson(mu_{n+1}(1))` immigrants are added, placed iid by
//!    `mu_{n+1} / mu_{n+1}(1)`.
//!
//! The initial population is itself a Poisson process with intensity
//! `mu_0`. The intensity `gamma_n(f) = E(sum_i f(X_n^i))` of this process
//! is what [`crate::exact`] computes.

use nalgebra::{Matrix4, Vector4};
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{MarkovKernel, Potential, ProbabilityMeasure};
use crate::model::BranchingModel;
use crate::rng::{CounterRng, Purpose};
use crate::stats::Summary;

/// Offspring-count law on `{1, ..., K}`: `probs[k - 1] = P(h = k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpawnLaw {
    probs: Vec<f64>,
}

impl SpawnLaw {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidArgument(format!("invalid spawn law {probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "spawn law sums to {total}, expected 1"
            )));
        }
        Ok(Self { probs })
    }

    /// `h = 1` surely.
    pub fn single() -> Self {
        Self { probs: vec![1.0] }
    }

    /// `P(h = 1) = alpha`, `P(h = 2) = 1 - alpha`.
    pub fn two_point(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!("alpha = {alpha} not in [0, 1]")));
        }
        Self::new(vec![alpha, 1.0 - alpha])
    }

    /// Mean `mean >= 1` on the two integers around it.
    pub fn with_mean(mean: f64) -> Result<Self> {
        if !(mean.is_finite() && mean >= 1.0) {
            return Err(Error::InvalidArgument(format!("spawn mean {mean} < 1")));
        }
        let k = mean.floor() as usize;
        let frac = mean - k as f64;
        let mut probs = vec![0.0; k + 1];
        probs[k - 1] = 1.0 - frac;
        probs[k] = frac;
        if frac == 0.0 {
            probs.pop();
        }
        Self::new(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| (k + 1) as f64 * p)
            .sum()
    }

    pub fn sample(&self, rng: &mut CounterRng) -> usize {
        1 + sample_index(&self.probs, rng.uniform())
    }
}

/// Inverse-CDF draw; the last index with positive weight absorbs rounding.
pub(crate) fn sample_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w <= 0.0 {
            continue;
        }
        acc += w;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Survival probabilities and spawn laws per state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchingLaw {
    pub survival: Vec<f64>,
    pub spawn: Vec<SpawnLaw>,
}

impl BranchingLaw {
    pub fn new(survival: Vec<f64>, spawn: Vec<SpawnLaw>) -> Result<Self> {
        if survival.len() != spawn.len() {
            return Err(Error::InvalidArgument("survival/spawn length mismatch".into()));
        }
        if let Some(e) = survival.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(Error::InvalidArgument(format!("survival {e} not in [0, 1]")));
        }
        Ok(Self { survival, spawn })
    }

    /// A law with `e H = G`: pure thinning where `G <= 1`, certain
    /// survival and spawning on `{floor G, floor G + 1}` elsewhere.
    pub fn for_potential(g: &Potential) -> Self {
        let mut survival = Vec::with_capacity(g.values().len());
        let mut spawn = Vec::with_capacity(g.values().len());
        for &v in g.values() {
            if v <= 1.0 {
                survival.push(v);
                spawn.push(SpawnLaw::single());
            } else {
                survival.push(1.0);
                spawn.push(SpawnLaw::with_mean(v).expect("mean > 1"));
            }
        }
        Self { survival, spawn }
    }

    /// `e(x) H(x)`.
    pub fn potential(&self) -> Vec<f64> {
        self.survival
            .iter()
            .zip(&self.spawn)
            .map(|(e, h)| e * h.mean())
            .collect()
    }
}

/// What the population simulator needs from a scenario.
pub trait PopulationModel: Sync {
    type State: Clone + Send + Sync;

    fn survival(&self, n: usize, x: &Self::State) -> f64;
    fn spawn(&self, n: usize, x: &Self::State, rng: &mut CounterRng) -> usize;
    /// One draw from `M_{n+1}(x, .)`.
    fn move_from(&self, n: usize, x: &Self::State, rng: &mut CounterRng) -> Self::State;
    /// `mu_n(1)`.
    fn immigration_mass(&self, n: usize) -> f64;
    /// One draw from `mu_n / mu_n(1)`.
    fn place_immigrant(&self, n: usize, rng: &mut CounterRng) -> Self::State;

    /// Column names for trajectory dumps.
    fn state_header(&self) -> Vec<String>;
    /// Row fields for trajectory dumps; numbers use shortest round-trip
    /// formatting.
    fn state_fields(&self, x: &Self::State) -> Vec<String>;
}

/// Finite scenario: an exact model together with branching laws realizing
/// its potentials.
#[derive(Clone, Debug)]
pub struct FiniteScenario {
    model: BranchingModel,
    laws: Vec<BranchingLaw>,
}

impl FiniteScenario {
    /// Default laws ([`BranchingLaw::for_potential`]) for every step.
    pub fn new(model: BranchingModel) -> Result<Self> {
        let steps = model.horizon().unwrap_or(1);
        let laws = (0..steps)
            .map(|n| Ok(BranchingLaw::for_potential(model.potential(n)?)))
            .collect::<Result<_>>()?;
        Ok(Self { model, laws })
    }

    /// One law per step (a single law for homogeneous models); each must
    /// satisfy `e_n H_n = G_n`.
    pub fn with_laws(model: BranchingModel, laws: Vec<BranchingLaw>) -> Result<Self> {
        let steps = model.horizon().unwrap_or(1);
        if laws.len() != steps {
            return Err(Error::InvalidArgument(format!(
                "expected {steps} branching laws, got {}",
                laws.len()
            )));
        }
        for (n, law) in laws.iter().enumerate() {
            let g = model.potential(n)?;
            let eh = law.potential();
            if eh.len() != g.values().len() {
                return Err(Error::SpaceMismatch("branching law"));
            }
            for (x, (a, b)) in eh.iter().zip(g.values()).enumerate() {
                if (a - b).abs() > 1e-12 * b.max(1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "e H = {a} but G = {b} at step {n}, state {x}"
                    )));
                }
            }
        }
        Ok(Self { model, laws })
    }

    pub fn model(&self) -> &BranchingModel {
        &self.model
    }

    fn law(&self, n: usize) -> &BranchingLaw {
        &self.laws[n.min(self.laws.len() - 1)]
    }

    fn kernel(&self, n: usize) -> &MarkovKernel {
        self.model.transition(n).expect("step inside horizon")
    }

    fn placement(&self, n: usize) -> ProbabilityMeasure {
        self.model
            .immigration_law(n)
            .expect("step inside horizon")
            .expect("placement only drawn when mu_n(1) > 0")
    }
}

impl PopulationModel for FiniteScenario {
    type State = usize;

    fn survival(&self, n: usize, x: &usize) -> f64 {
        self.law(n).survival[*x]
    }

    fn spawn(&self, n: usize, x: &usize, rng: &mut CounterRng) -> usize {
        self.law(n).spawn[*x].sample(rng)
    }

    fn move_from(&self, n: usize, x: &usize, rng: &mut CounterRng) -> usize {
        sample_index(self.kernel(n).row(*x), rng.uniform())
    }

    fn immigration_mass(&self, n: usize) -> f64 {
        self.model.immigration(n).expect("step inside horizon").mass()
    }

    fn place_immigrant(&self, n: usize, rng: &mut CounterRng) -> usize {
        sample_index(self.placement(n).weights(), rng.uniform())
    }

    fn state_header(&self) -> Vec<String> {
        vec!["state_index".into()]
    }

    fn state_fields(&self, x: &usize) -> Vec<String> {
        vec![x.to_string()]
    }
}

/// Targets `[px, py, vx, vy]` moving by `X_n = A X_{n-1} + V_n`,
/// `V_n ~ N(0, Sigma)`, with survival `s`, two-point spawning
/// `P(h = 1) = alpha` and Poisson immigration of rate `mu_rate`, placed
/// uniformly in a rectangle with `N(0, velocity_sd^2 I)` velocities.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearGaussianScenario {
    a: Matrix4<f64>,
    noise: Matrix4<f64>,
    survival: f64,
    spawn: SpawnLaw,
    mu_rate: f64,
    region: [[f64; 2]; 2],
    velocity_sd: f64,
}

pub type GaussianState = [f64; 4];

impl LinearGaussianScenario {
    /// `sigma = 0` gives deterministic motion; any other `sigma` must be
    /// positive definite.
    pub fn new(
        a: Matrix4<f64>,
        sigma: Matrix4<f64>,
        survival: f64,
        alpha: f64,
        mu_rate: f64,
        region: [[f64; 2]; 2],
        velocity_sd: f64,
    ) -> Result<Self> {
        if !(survival > 0.0 && survival <= 1.0) {
            return Err(Error::InvalidArgument(format!("survival {survival} not in (0, 1]")));
        }
        if !(mu_rate >= 0.0 && mu_rate.is_finite()) || !(velocity_sd >= 0.0) {
            return Err(Error::InvalidArgument("negative immigration parameters".into()));
        }
        if region.iter().any(|[lo, hi]| !(lo <= hi)) {
            return Err(Error::InvalidArgument("empty surveillance region".into()));
        }
        let noise = if sigma == Matrix4::zeros() {
            Matrix4::zeros()
        } else {
            if (sigma - sigma.transpose()).amax() > 1e-12 * sigma.amax() {
                return Err(Error::InvalidArgument("Sigma is not symmetric".into()));
            }
            sigma
                .cholesky()
                .ok_or_else(|| Error::InvalidArgument("Sigma is not positive definite".into()))?
                .unpack()
        };
        Ok(Self {
            a,
            noise,
            survival,
            spawn: SpawnLaw::two_point(alpha)?,
            mu_rate,
            region,
            velocity_sd,
        })
    }

    /// Constant-velocity model with time step `dt` and white-noise
    /// acceleration of intensity `q`.
    pub fn constant_velocity(dt: f64, q: f64) -> (Matrix4<f64>, Matrix4<f64>) {
        #[rustfmt::skip]
        let a = Matrix4::new(
            1.0, 0.0, dt, 0.0,
            0.0, 1.0, 0.0, dt,
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        );
        let (d3, d2) = (dt.powi(3) / 3.0, dt.powi(2) / 2.0);
        #[rustfmt::skip]
        let sigma = q * Matrix4::new(
            d3, 0.0, d2, 0.0,
            0.0, d3, 0.0, d2,
            d2, 0.0, dt, 0.0,
            0.0, d2, 0.0, dt,
        );
        (a, sigma)
    }

    /// `G = s (2 - alpha)`, the same at every state.
    pub fn potential(&self) -> f64 {
        self.survival * self.spawn.mean()
    }

    pub fn mu_rate(&self) -> f64 {
        self.mu_rate
    }

    /// `E(N_n)`: `m_0 = mu(1)`, `m_{n+1} = G m_n + mu(1)`.
    pub fn expected_counts(&self, n_max: usize) -> Vec<f64> {
        let g = self.potential();
        let mut out = vec![self.mu_rate];
        for _ in 0..n_max {
            let last = *out.last().unwrap();
            out.push(g * last + self.mu_rate);
        }
        out
    }

    fn gaussian(rng: &mut CounterRng) -> f64 {
        StandardNormal.sample(rng)
    }
}

impl PopulationModel for LinearGaussianScenario {
    type State = GaussianState;

    fn survival(&self, _n: usize, _x: &GaussianState) -> f64 {
        self.survival
    }

    fn spawn(&self, _n: usize, _x: &GaussianState, rng: &mut CounterRng) -> usize {
        self.spawn.sample(rng)
    }

    fn move_from(&self, _n: usize, x: &GaussianState, rng: &mut CounterRng) -> GaussianState {
        let z = Vector4::from_fn(|_, _| Self::gaussian(rng));
        let next = self.a * Vector4::from(*x) + self.noise * z;
        [next[0], next[1], next[2], next[3]]
    }

    fn immigration_mass(&self, _n: usize) -> f64 {
        self.mu_rate
    }

    fn place_immigrant(&self, _n: usize, rng: &mut CounterRng) -> GaussianState {
        let [[x0, x1], [y0, y1]] = self.region;
        let px = x0 + (x1 - x0) * rng.uniform();
        let py = y0 + (y1 - y0) * rng.uniform();
        let vx = self.velocity_sd * Self::gaussian(rng);
        let vy = self.velocity_sd * Self::gaussian(rng);
        [px, py, vx, vy]
    }

    fn state_header(&self) -> Vec<String> {
        ["px", "py", "vx", "vy"].map(String::from).to_vec()
    }

    fn state_fields(&self, x: &GaussianState) -> Vec<String> {
        x.iter().map(|v| format!("{v:?}")).collect()
    }
}

/// Limits that keep supercritical runs bounded.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub max_population: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            max_population: 1_000_000,
        }
    }
}

fn poisson_count(mean: f64, rng: &mut CounterRng) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive finite mean");
    let k: f64 = d.sample(rng);
    k as usize
}

fn immigrants<P: PopulationModel>(
    model: &P,
    n: usize,
    seed: u64,
    run: u64,
    out: &mut Vec<P::State>,
) {
    let mut count_rng = CounterRng::keyed(seed, run, n, 0, Purpose::ImmigrantCount);
    let count = poisson_count(model.immigration_mass(n), &mut count_rng);
    for j in 0..count {
        let mut rng = CounterRng::keyed(seed, run, n, j, Purpose::Immigrant);
        out.push(model.place_immigrant(n, &mut rng));
    }
}

/// Poisson population with intensity `mu_0`.
pub fn initial_population<P: PopulationModel>(model: &P, seed: u64, run: u64) -> Vec<P::State> {
    let mut pop = Vec::new();
    immigrants(model, 0, seed, run, &mut pop);
    pop
}

/// One transition `X_n -> X_{n+1}`.
pub fn step_population<P: PopulationModel>(
    model: &P,
    n: usize,
    pop: &[P::State],
    seed: u64,
    run: u64,
) -> Vec<P::State> {
    let mut next = Vec::with_capacity(pop.len());
    for (i, x) in pop.iter().enumerate() {
        let e = model.survival(n, x);
        if e < 1.0 && CounterRng::keyed(seed, run, n, i, Purpose::Survival).uniform() >= e {
            continue;
        }
        let h = model.spawn(n, x, &mut CounterRng::keyed(seed, run, n, i, Purpose::Spawn));
        let mut mv = CounterRng::keyed(seed, run, n, i, Purpose::Move);
        for _ in 0..h {
            next.push(model.move_from(n, x, &mut mv));
        }
    }
    immigrants(model, n + 1, seed, run, &mut next);
    next
}

/// `X_0, ..., X_{n_max}` for one run.
pub fn simulate_run<P: PopulationModel>(
    model: &P,
    n_max: usize,
    seed: u64,
    run: u64,
    options: SimOptions,
) -> Result<Vec<Vec<P::State>>> {
    let mut traj = Vec::with_capacity(n_max + 1);
    traj.push(initial_population(model, seed, run));
    for n in 0..n_max {
        let next = step_population(model, n, &traj[n], seed, run);
        if next.len() > options.max_population {
            return Err(Error::PopulationCap {
                step: n + 1,
                size: next.len(),
                cap: options.max_population,
            });
        }
        traj.push(next);
    }
    Ok(traj)
}

/// Per-run observations `values[run][step][k]` of a vector of statistics
/// of the population.
#[derive(Clone, Debug, PartialEq)]
pub struct Observations {
    pub values: Vec<Vec<Vec<f64>>>,
}

impl Observations {
    pub fn runs(&self) -> usize {
        self.values.len()
    }

    pub fn column(&self, step: usize, k: usize) -> Vec<f64> {
        self.values.iter().map(|run| run[step][k]).collect()
    }

    pub fn summary(&self, step: usize, k: usize) -> Summary {
        Summary::of(&self.column(step, k))
    }
}

/// Runs independent replicates in parallel and records
/// `observe(X_n)` for every `n <= n_max`. The output does not depend on
/// the number of threads.
pub fn simulate_observations<P, F>(
    model: &P,
    n_max: usize,
    replicates: usize,
    seed: u64,
    options: SimOptions,
    observe: F,
) -> Result<Observations>
where
    P: PopulationModel,
    F: Fn(usize, &[P::State]) -> Vec<f64> + Sync,
{
    let values = (0..replicates)
        .into_par_iter()
        .map(|run| {
            let traj = simulate_run(model, n_max, seed, run as u64, options)?;
            Ok(traj
                .iter()
                .enumerate()
                .map(|(n, pop)| observe(n, pop))
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Observations { values })
}

/// Mean and standard error of `sum_i f(X_n^i)` over replicates.
pub fn estimate_intensity<P, F>(
    model: &P,
    n: usize,
    f: F,
    replicates: usize,
    seed: u64,
) -> Result<Summary>
where
    P: PopulationModel,
    F: Fn(&P::State) -> f64 + Sync,
{
    if replicates < 2 {
        return Err(Error::InvalidArgument("need at least 2 replicates".into()));
    }
    let obs = simulate_observations(model, n, replicates, seed, SimOptions::default(), |step, pop| {
        if step == n {
            vec![pop.iter().map(&f).sum()]
        } else {
            vec![]
        }
    })?;
    Ok(obs.summary(n, 0))
}

/// Per-state occupation counts `N_n(x)` for a finite scenario.
pub fn occupation_counts(
    scenario: &FiniteScenario,
    n_max: usize,
    replicates: usize,
    seed: u64,
    options: SimOptions,
) -> Result<Observations> {
    let d = scenario.model().space(0)?.size();
    simulate_observations(scenario, n_max, replicates, seed, options, |_, pop| {
        let mut counts = vec![0.0; d];
        for &x in pop {
            counts[x] += 1.0;
        }
        counts
    })
}
