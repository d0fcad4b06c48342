//! Mean-field `N`-particle approximation of `(gamma_n(1), eta_n)`.
//!
//! One sweep `n -> n+1`:
//!
//! ```text
//! gamma^N_{n+1}(1) = gamma^N_n(1) eta^N_n(G_n) + mu_{n+1}(1)
//! xi_n^i  --S_{eta^N_n}-->  selected  --M_{n+1,(gamma^N_n(1), eta^N_n)}-->  xi_{n+1}^i
//! ```
//!
//! where the selection kernel satisfies `eta S_eta = Psi_G(eta)` and the
//! mutation moves by `M_{n+1}` with probability
//! `alpha = m eta(G) / (m eta(G) + mu_{n+1}(1))`, otherwise redraws from
//! `mu_{n+1} / mu_{n+1}(1)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{self, kernel_variance, product_form, FlowTrajectory};
use crate::measure::{
    boltzmann_gibbs, compose, reweight, transport, Function, MarkovKernel, Potential,
    ProbabilityMeasure, EXACT_TOL,
};
use crate::model::BranchingModel;
use crate::rng::{CounterRng, Purpose};
use crate::sim::{sample_index, GaussianState, LinearGaussianScenario, PopulationModel};
use crate::stats::compensated_sum;

/// What the particle system needs from a model.
pub trait ParticleModel: Sync {
    type State: Clone + Send + Sync;

    /// `G_n(x)`.
    fn potential(&self, n: usize, x: &Self::State) -> f64;
    /// `(inf G_n, sup G_n)`.
    fn potential_bounds(&self, n: usize) -> (f64, f64);
    /// One draw from `M_{n+1}(x, .)`.
    fn move_from(&self, n: usize, x: &Self::State, rng: &mut CounterRng) -> Self::State;
    /// `mu_n(1)`.
    fn immigration_mass(&self, n: usize) -> f64;
    /// One draw from `mu_n / mu_n(1)`.
    fn place_immigrant(&self, n: usize, rng: &mut CounterRng) -> Self::State;
    /// Fails if `n` is past the model horizon.
    fn check_time(&self, n: usize) -> Result<()>;
}

impl ParticleModel for BranchingModel {
    type State = usize;

    fn potential(&self, n: usize, x: &usize) -> f64 {
        BranchingModel::potential(self, n).expect("step inside horizon").values()[*x]
    }

    fn potential_bounds(&self, n: usize) -> (f64, f64) {
        let g = BranchingModel::potential(self, n).expect("step inside horizon");
        (g.lower(), g.upper())
    }

    fn move_from(&self, n: usize, x: &usize, rng: &mut CounterRng) -> usize {
        let m = self.transition(n).expect("step inside horizon");
        sample_index(m.row(*x), rng.uniform())
    }

    fn immigration_mass(&self, n: usize) -> f64 {
        self.immigration(n).expect("step inside horizon").mass()
    }

    fn place_immigrant(&self, n: usize, rng: &mut CounterRng) -> usize {
        let law = self.immigration_law(n).expect("step inside horizon");
        let law = law.expect("placement only drawn when mu_n(1) > 0");
        sample_index(law.weights(), rng.uniform())
    }

    fn check_time(&self, n: usize) -> Result<()> {
        BranchingModel::check_time(self, n)
    }
}

impl ParticleModel for LinearGaussianScenario {
    type State = GaussianState;

    fn potential(&self, _n: usize, _x: &GaussianState) -> f64 {
        LinearGaussianScenario::potential(self)
    }

    fn potential_bounds(&self, _n: usize) -> (f64, f64) {
        let g = LinearGaussianScenario::potential(self);
        (g, g)
    }

    fn move_from(&self, n: usize, x: &GaussianState, rng: &mut CounterRng) -> GaussianState {
        PopulationModel::move_from(self, n, x, rng)
    }

    fn immigration_mass(&self, _n: usize) -> f64 {
        self.mu_rate()
    }

    fn place_immigrant(&self, n: usize, rng: &mut CounterRng) -> GaussianState {
        PopulationModel::place_immigrant(self, n, rng)
    }

    fn check_time(&self, _n: usize) -> Result<()> {
        Ok(())
    }
}

/// Selection transitions `S_eta` with `eta S_eta = Psi_G(eta)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SelectionScheme {
    /// `S_eta(x, .) = Psi_G(eta)`.
    #[default]
    FullResample,
    /// `S_eta(x, .) = eps/eta(G) delta_x + (1 - eps/eta(G)) Psi_{G-eps}(eta)`;
    /// needs `G > eps`.
    ShiftedResample { epsilon: f64 },
    /// `S_eta(x, .) = eps G(x) delta_x + (1 - eps G(x)) Psi_G(eta)`; needs
    /// `eps G <= 1`. Without `epsilon`, uses `1 / max G` over the support
    /// of `eta`.
    AcceptReject { epsilon: Option<f64> },
}

impl SelectionScheme {
    pub fn name(&self) -> &'static str {
        match self {
            SelectionScheme::FullResample => "full-resample",
            SelectionScheme::ShiftedResample { .. } => "shifted-resample",
            SelectionScheme::AcceptReject { .. } => "accept-reject",
        }
    }

    /// Checks the scheme against potential bounds `[g_lo, g_hi]`.
    pub fn validate(&self, g_lo: f64, g_hi: f64) -> Result<()> {
        match *self {
            SelectionScheme::FullResample => Ok(()),
            SelectionScheme::ShiftedResample { epsilon } => {
                if !(epsilon >= 0.0 && epsilon < g_lo) {
                    return Err(Error::InvalidScheme(format!(
                        "shifted resampling needs 0 <= eps < inf G = {g_lo}, got {epsilon}"
                    )));
                }
                Ok(())
            }
            SelectionScheme::AcceptReject { epsilon: Some(eps) } => {
                if !(eps >= 0.0 && eps * g_hi <= 1.0 + EXACT_TOL) {
                    return Err(Error::InvalidScheme(format!(
                        "accept-reject needs 0 <= eps <= 1/sup G = {}, got {eps}",
                        1.0 / g_hi
                    )));
                }
                Ok(())
            }
            SelectionScheme::AcceptReject { epsilon: None } => Ok(()),
        }
    }
}

/// The selection kernel `S_eta` as an explicit matrix.
pub fn selection_kernel(
    scheme: SelectionScheme,
    g: &Potential,
    eta: &ProbabilityMeasure,
) -> Result<MarkovKernel> {
    if g.space() != eta.space() {
        return Err(Error::SpaceMismatch("selection_kernel"));
    }
    scheme.validate(g.lower(), g.upper())?;
    let d = eta.space().size();
    let psi = boltzmann_gibbs(g, eta)?;
    let rows: Vec<Vec<f64>> = match scheme {
        SelectionScheme::FullResample => vec![psi.weights().to_vec(); d],
        SelectionScheme::ShiftedResample { epsilon } => {
            let eta_g = eta.integrate(g.as_function())?;
            let keep = epsilon / eta_g;
            let shifted = reweight(&g.as_function().map(|v| v - epsilon), eta)?;
            (0..d)
                .map(|x| {
                    let mut row: Vec<f64> =
                        shifted.weights().iter().map(|w| (1.0 - keep) * w).collect();
                    row[x] += keep;
                    row
                })
                .collect()
        }
        SelectionScheme::AcceptReject { epsilon } => {
            let eps = epsilon.unwrap_or_else(|| 1.0 / support_max(g.values(), eta.weights()));
            (0..d)
                .map(|x| {
                    let keep = (eps * g.values()[x]).min(1.0);
                    let mut row: Vec<f64> =
                        psi.weights().iter().map(|w| (1.0 - keep) * w).collect();
                    row[x] += keep;
                    row
                })
                .collect()
        }
    };
    MarkovKernel::new(eta.space(), eta.space(), rows)
}

fn support_max(g: &[f64], eta: &[f64]) -> f64 {
    g.iter()
        .zip(eta)
        .filter(|(_, w)| **w > 0.0)
        .fold(0.0f64, |m, (v, _)| m.max(*v))
}

/// `max_y |(eta S_eta)(y) - Psi_G(eta)(y)|`.
pub fn transport_identity_residual(
    scheme: SelectionScheme,
    g: &Potential,
    eta: &ProbabilityMeasure,
) -> Result<f64> {
    let s = selection_kernel(scheme, g, eta)?;
    transport(eta, &s)?
        .as_measure()
        .max_abs_diff(boltzmann_gibbs(g, eta)?.as_measure())
}

/// The McKean transition `K_{n+1,(m,eta)} = S_eta M_{n+1,(m,eta)}`.
pub fn mckean_kernel(
    model: &BranchingModel,
    n: usize,
    mass: f64,
    eta: &ProbabilityMeasure,
    scheme: SelectionScheme,
) -> Result<MarkovKernel> {
    let s = selection_kernel(scheme, model.potential(n)?, eta)?;
    let m = model.mutation_kernel(n, mass, eta)?;
    MarkovKernel::from_weighted(compose(&s, &m)?)
}

/// Sorted-uniform multinomial draw of `u.len()` indices with
/// probabilities proportional to `weights`. `u` is sorted in place.
fn multinomial_sorted(weights: &[f64], u: &mut [f64]) -> Vec<usize> {
    u.sort_unstable_by(f64::total_cmp);
    let total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(u.len());
    let mut i = 0;
    let mut acc = weights[0];
    let last = weights.iter().rposition(|w| *w > 0.0).unwrap_or(0);
    for &ui in u.iter() {
        let target = ui * total;
        while acc <= target && i < last {
            i += 1;
            acc += weights[i];
        }
        out.push(i);
    }
    out
}

/// Index `i` with `cumulative[i-1] <= target < cumulative[i]`.
fn search(cumulative: &[f64], target: f64) -> usize {
    cumulative
        .partition_point(|c| *c <= target)
        .min(cumulative.len() - 1)
}

fn prefix_sums(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

/// One selection step. `g[i] = G_n(xi^i)`.
pub fn selection_step<S: Clone>(
    states: &[S],
    g: &[f64],
    scheme: SelectionScheme,
    seed: u64,
    run: u64,
    n: usize,
) -> Result<Vec<S>> {
    let size = states.len();
    let draw = |i: usize| CounterRng::keyed(seed, run, n, i, Purpose::Select);
    match scheme {
        SelectionScheme::FullResample => {
            let mut u: Vec<f64> = (0..size).map(|i| draw(i).uniform()).collect();
            let idx = multinomial_sorted(g, &mut u);
            Ok(idx.into_iter().map(|j| states[j].clone()).collect())
        }
        SelectionScheme::ShiftedResample { epsilon } => {
            let eta_g = g.iter().sum::<f64>() / size as f64;
            if g.iter().any(|v| *v <= epsilon) {
                return Err(Error::InvalidScheme(format!(
                    "shifted resampling needs G > eps = {epsilon}"
                )));
            }
            let keep = epsilon / eta_g;
            let cum = prefix_sums(g.iter().map(|v| v - epsilon));
            let total = *cum.last().unwrap();
            Ok((0..size)
                .map(|i| {
                    let mut rng = draw(i);
                    if rng.uniform() < keep {
                        states[i].clone()
                    } else {
                        states[search(&cum, rng.uniform() * total)].clone()
                    }
                })
                .collect())
        }
        SelectionScheme::AcceptReject { epsilon } => {
            let g_max = g.iter().fold(0.0f64, |m, v| m.max(*v));
            let eps = epsilon.unwrap_or(1.0 / g_max);
            if eps * g_max > 1.0 + EXACT_TOL {
                return Err(Error::InvalidScheme(format!(
                    "accept-reject needs eps G <= 1, got {}",
                    eps * g_max
                )));
            }
            let cum = prefix_sums(g.iter().copied());
            let total = *cum.last().unwrap();
            Ok((0..size)
                .map(|i| {
                    let mut rng = draw(i);
                    if rng.uniform() < eps * g[i] {
                        states[i].clone()
                    } else {
                        states[search(&cum, rng.uniform() * total)].clone()
                    }
                })
                .collect())
        }
    }
}

/// One mutation step: move by `M_{n+1}` w.p. `alpha`, else immigrate.
pub fn mutation_step<P: ParticleModel>(
    model: &P,
    selected: &[P::State],
    alpha: f64,
    seed: u64,
    run: u64,
    n: usize,
) -> Vec<P::State> {
    selected
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let moves = alpha >= 1.0
                || CounterRng::keyed(seed, run, n, i, Purpose::MutationCoin).uniform() < alpha;
            if moves {
                model.move_from(n, x, &mut CounterRng::keyed(seed, run, n, i, Purpose::Move))
            } else {
                model.place_immigrant(n + 1, &mut CounterRng::keyed(seed, run, n, i, Purpose::Immigrant))
            }
        })
        .collect()
}

/// `gamma^N_{n+1}(1) = m eta^N(G) + mu_{n+1}(1)`.
pub fn mass_update(mass: f64, eta_g: f64, mu_next: f64) -> f64 {
    mass * eta_g + mu_next
}

/// `[m_-(n), m_+(n)]` for `n <= n_max` from potential bounds.
pub fn envelope<P: ParticleModel>(model: &P, n_max: usize) -> Vec<(f64, f64)> {
    let mu: Vec<f64> = (0..=n_max).map(|n| model.immigration_mass(n)).collect();
    let mut lo = 1.0f64;
    let mut hi = 1.0f64;
    let mut out = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        if n > 0 {
            let (a, b) = model.potential_bounds(n - 1);
            lo = if n == 1 { a } else { lo.min(a) };
            hi = if n == 1 { b } else { hi.max(b) };
        }
        let e = |g: f64| (0..=n).map(|p| mu[p] * g.powi((n - p) as i32)).sum::<f64>();
        out.push((e(lo), e(hi)));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleConfig {
    pub particles: usize,
    pub horizon: usize,
    #[serde(default)]
    pub scheme: SelectionScheme,
}

/// Masses of one run together with consistency diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct RunMasses {
    pub masses: Vec<f64>,
    /// `eta^N_n(G_n)` for `n < horizon`.
    pub eta_g: Vec<f64>,
    /// Largest relative gap between the step recursion and the product
    /// formula for the masses.
    pub product_form_residual: f64,
}

/// Runs the particle system, calling `observe(n, gamma^N_n(1), xi_n)` at
/// every `n <= horizon`. Fails if a mass leaves the envelope.
pub fn run_particles_with<P, F>(
    model: &P,
    config: &ParticleConfig,
    seed: u64,
    run: u64,
    mut observe: F,
) -> Result<RunMasses>
where
    P: ParticleModel,
    F: FnMut(usize, f64, &[P::State]),
{
    let size = config.particles;
    if size == 0 {
        return Err(Error::InvalidArgument("need at least one particle".into()));
    }
    model.check_time(config.horizon)?;
    for n in 0..config.horizon {
        let (lo, hi) = model.potential_bounds(n);
        config.scheme.validate(lo, hi)?;
    }
    let bounds = envelope(model, config.horizon);
    let mu0 = model.immigration_mass(0);
    if mu0 <= 0.0 {
        return Err(Error::InvalidArgument("particles need mu_0(1) > 0".into()));
    }
    let mut states: Vec<P::State> = (0..size)
        .map(|i| model.place_immigrant(0, &mut CounterRng::keyed(seed, run, 0, i, Purpose::Initial)))
        .collect();
    let mut mass = mu0;
    let mut masses = vec![mass];
    let mut eta_g = Vec::with_capacity(config.horizon);
    observe(0, mass, &states);
    for n in 0..config.horizon {
        let g: Vec<f64> = states.iter().map(|x| model.potential(n, x)).collect();
        let mean_g = compensated_sum(g.iter().copied()) / size as f64;
        let mu_next = model.immigration_mass(n + 1);
        let weighted = mass * mean_g;
        if weighted + mu_next <= 0.0 {
            return Err(Error::DegenerateMutation(n));
        }
        let alpha = weighted / (weighted + mu_next);
        let selected = selection_step(&states, &g, config.scheme, seed, run, n)?;
        states = mutation_step(model, &selected, alpha, seed, run, n);
        mass = mass_update(mass, mean_g, mu_next);
        let (lo, hi) = bounds[n + 1];
        let slack = EXACT_TOL * hi.max(1.0);
        if mass < lo - slack || mass > hi + slack {
            return Err(Error::EnvelopeViolation {
                step: n + 1,
                mass,
                lower: lo,
                upper: hi,
            });
        }
        masses.push(mass);
        eta_g.push(mean_g);
        observe(n + 1, mass, &states);
    }
    let mu: Vec<f64> = (0..=config.horizon).map(|n| model.immigration_mass(n)).collect();
    let product = product_form(&mu, &eta_g);
    let product_form_residual = masses
        .iter()
        .zip(&product)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1.0))
        .fold(0.0, f64::max);
    Ok(RunMasses {
        masses,
        eta_g,
        product_form_residual,
    })
}

/// One run on a finite model, keeping `gamma^N_n(1)` and `eta^N_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteRun {
    pub masses: RunMasses,
    pub etas: Vec<ProbabilityMeasure>,
}

impl FiniteRun {
    pub fn mass(&self, n: usize) -> f64 {
        self.masses.masses[n]
    }

    pub fn eta(&self, n: usize) -> &ProbabilityMeasure {
        &self.etas[n]
    }

    /// `gamma^N_n(f) = gamma^N_n(1) eta^N_n(f)`.
    pub fn gamma(&self, n: usize, f: &Function) -> Result<f64> {
        Ok(self.mass(n) * self.eta(n).integrate(f)?)
    }
}

pub fn run_particles(
    model: &BranchingModel,
    config: &ParticleConfig,
    seed: u64,
    run: u64,
) -> Result<FiniteRun> {
    let mut etas = Vec::with_capacity(config.horizon + 1);
    let mut err = None;
    let masses = run_particles_with(model, config, seed, run, |n, _, states| {
        match model.space(n).and_then(|s| ProbabilityMeasure::empirical(s, states)) {
            Ok(eta) => etas.push(eta),
            Err(e) => {
                err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(FiniteRun { masses, etas })
}

/// Independent runs `0..runs` in parallel, in run order.
pub fn run_many(
    model: &BranchingModel,
    config: &ParticleConfig,
    runs: usize,
    seed: u64,
) -> Result<Vec<FiniteRun>> {
    (0..runs)
        .into_par_iter()
        .map(|r| run_particles(model, config, seed, r as u64))
        .collect()
}

/// Fluctuation fields of one run for a list of test functions, indexed
/// `[n][k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FluctuationSample {
    /// `W_n^N(f) = sqrt(N) [eta^N_n - eta^N_{n-1} K_{n,(gamma^N_{n-1}(1), eta^N_{n-1})}](f)`,
    /// with `W_0^N = V_0^{eta,N}`.
    pub w: Vec<Vec<f64>>,
    /// `sqrt(N) [gamma^N_n - gamma_n](f)`.
    pub v_gamma: Vec<Vec<f64>>,
    /// `sqrt(N) [eta^N_n - eta_n](f)`.
    pub v_eta: Vec<Vec<f64>>,
}

/// Since `eta S_eta = Psi_G(eta)`, `eta K(f)` does not depend on the
/// selection scheme and equals `Psi_G(eta) M_{(m,eta)}(f)`.
pub fn fluctuations(
    model: &BranchingModel,
    run: &FiniteRun,
    flow: &FlowTrajectory,
    fs: &[Function],
    particles: usize,
) -> Result<FluctuationSample> {
    let root_n = (particles as f64).sqrt();
    let steps = run.etas.len();
    let mut w = Vec::with_capacity(steps);
    let mut v_gamma = Vec::with_capacity(steps);
    let mut v_eta = Vec::with_capacity(steps);
    for n in 0..steps {
        let eta_n = run.eta(n);
        let predicted = if n == 0 {
            flow.eta(0).clone()
        } else {
            let prev = run.eta(n - 1);
            let m = model.mutation_kernel(n - 1, run.mass(n - 1), prev)?;
            transport(&boltzmann_gibbs(model.potential(n - 1)?, prev)?, &m)?
        };
        let mut wn = Vec::with_capacity(fs.len());
        let mut vg = Vec::with_capacity(fs.len());
        let mut ve = Vec::with_capacity(fs.len());
        for f in fs {
            let en = eta_n.integrate(f)?;
            wn.push(root_n * (en - predicted.integrate(f)?));
            vg.push(root_n * (run.mass(n) * en - flow.gamma(n).integrate(f)?));
            ve.push(root_n * (en - flow.eta(n).integrate(f)?));
        }
        w.push(wn);
        v_gamma.push(vg);
        v_eta.push(ve);
    }
    Ok(FluctuationSample { w, v_gamma, v_eta })
}

/// Limiting variance of `W_n(f)`: `eta_{n-1} K([f - K f]^2)` at the exact
/// `(gamma_{n-1}(1), eta_{n-1})`, and `Var_{eta_0}(f)` at `n = 0`.
pub fn w_variance(
    model: &BranchingModel,
    flow: &FlowTrajectory,
    n: usize,
    f: &Function,
    scheme: SelectionScheme,
) -> Result<f64> {
    if n == 0 {
        return flow.eta(0).variance(f);
    }
    let eta = flow.eta(n - 1);
    let k = mckean_kernel(model, n - 1, flow.mass(n - 1), eta, scheme)?;
    kernel_variance(eta, &k, f)
}

/// Limiting variance of `V^{gamma}_n(f)`:
/// `sum_{p <= n} gamma_p(1)^2 sigma_p^2(Q_{p,n} f)`.
pub fn v_gamma_variance(
    model: &BranchingModel,
    flow: &FlowTrajectory,
    n: usize,
    f: &Function,
    scheme: SelectionScheme,
) -> Result<f64> {
    let sg = exact::Semigroups::new(model);
    let col = sg.column(n)?;
    (0..=n)
        .map(|p| {
            let qf = col[p].apply_fn(f)?;
            Ok(flow.mass(p).powi(2) * w_variance(model, flow, p, &qf, scheme)?)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::StateSpace;
    use crate::scenarios;

    fn cfg(particles: usize, horizon: usize, scheme: SelectionScheme) -> ParticleConfig {
        ParticleConfig {
            particles,
            horizon,
            scheme,
        }
    }

    #[test]
    fn transport_identity_all_schemes() {
        let s = StateSpace::indexed(3);
        let g = Potential::new(&s, vec![0.6, 1.2, 2.0]).unwrap();
        let eta = ProbabilityMeasure::new(&s, vec![0.2, 0.5, 0.3]).unwrap();
        for scheme in [
            SelectionScheme::FullResample,
            SelectionScheme::ShiftedResample { epsilon: 0.5 },
            SelectionScheme::AcceptReject { epsilon: None },
            SelectionScheme::AcceptReject { epsilon: Some(0.3) },
        ] {
            assert!(transport_identity_residual(scheme, &g, &eta).unwrap() < EXACT_TOL);
        }
    }

    #[test]
    fn constant_potential_full_resample_is_eta() {
        let s = StateSpace::indexed(2);
        let g = Potential::constant(&s, 0.5).unwrap();
        let eta = ProbabilityMeasure::new(&s, vec![0.3, 0.7]).unwrap();
        let k = selection_kernel(SelectionScheme::FullResample, &g, &eta).unwrap();
        for x in 0..2 {
            assert!((k.entry(x, 0) - 0.3).abs() < EXACT_TOL);
        }
    }

    #[test]
    fn accept_reject_keeps_argmax() {
        let s = StateSpace::indexed(2);
        let g = Potential::new(&s, vec![1.0, 2.0]).unwrap();
        let eta = ProbabilityMeasure::new(&s, vec![0.5, 0.5]).unwrap();
        let k = selection_kernel(SelectionScheme::AcceptReject { epsilon: None }, &g, &eta).unwrap();
        assert!((k.entry(1, 1) - 1.0).abs() < EXACT_TOL);

        // particle level: argmax particles are never resampled
        let states = vec![0usize, 1, 0, 1, 1];
        let gv: Vec<f64> = states.iter().map(|x| g.values()[*x]).collect();
        let out = selection_step(&states, &gv, SelectionScheme::AcceptReject { epsilon: None }, 4, 0, 0)
            .unwrap();
        for (i, x) in states.iter().enumerate() {
            if *x == 1 {
                assert_eq!(out[i], 1);
            }
        }
    }

    #[test]
    fn shifted_degenerates_to_full() {
        let s = StateSpace::indexed(2);
        let g = Potential::new(&s, vec![1.0, 3.0]).unwrap();
        let eta = ProbabilityMeasure::new(&s, vec![0.5, 0.5]).unwrap();
        let full = selection_kernel(SelectionScheme::FullResample, &g, &eta).unwrap();
        let mut last = f64::INFINITY;
        for eps in [0.5, 0.1, 0.01, 1e-4] {
            let k = selection_kernel(SelectionScheme::ShiftedResample { epsilon: eps }, &g, &eta).unwrap();
            let dist = (0..2)
                .map(|x| crate::measure::tv_distance(&k.row_measure(x), &full.row_measure(x)).unwrap())
                .fold(0.0, f64::max);
            assert!(dist < last);
            last = dist;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn invalid_schemes() {
        assert!(SelectionScheme::ShiftedResample { epsilon: 0.5 }.validate(0.5, 1.0).is_err());
        assert!(SelectionScheme::AcceptReject { epsilon: Some(0.9) }.validate(0.5, 2.0).is_err());
        let r = run_particles(
            &scenarios::s_sub(),
            &cfg(10, 3, SelectionScheme::ShiftedResample { epsilon: 0.6 }),
            1,
            0,
        );
        assert!(matches!(r, Err(Error::InvalidScheme(_))));
    }

    #[test]
    fn multinomial_sweep() {
        let mut u = vec![0.9, 0.1, 0.5, 0.3];
        let idx = multinomial_sorted(&[1.0, 0.0, 3.0], &mut u);
        assert_eq!(idx, vec![0, 2, 2, 2]);
    }

    #[test]
    fn alpha_examples() {
        let m = scenarios::s_one();
        let eta = ProbabilityMeasure::uniform(m.space(0).unwrap());
        assert!((m.alpha(0, 1.0, &eta).unwrap() - 2.0 / 3.0).abs() < EXACT_TOL);
        let none = scenarios::without_immigration(&m, 1.0);
        assert_eq!(none.alpha(0, 1.0, &eta).unwrap(), 1.0);
    }

    #[test]
    fn constant_potential_masses_are_exact() {
        for (m, n_particles) in [(scenarios::s_one(), 50), (scenarios::s_sub(), 50), (scenarios::s_one(), 1)] {
            let flow = exact::run_flow(&m, 12).unwrap();
            let run = run_particles(&m, &cfg(n_particles, 12, SelectionScheme::FullResample), 3, 0).unwrap();
            for n in 0..=12 {
                assert!((run.mass(n) - flow.mass(n)).abs() <= EXACT_TOL * flow.mass(n));
            }
        }
    }

    #[test]
    fn product_form_and_envelope_hold() {
        for scheme in [
            SelectionScheme::FullResample,
            SelectionScheme::ShiftedResample { epsilon: 0.3 },
            SelectionScheme::AcceptReject { epsilon: None },
        ] {
            let run = run_particles(&scenarios::s_mix(), &cfg(40, 30, scheme), 8, 2).unwrap();
            assert!(run.masses.product_form_residual < EXACT_TOL);
        }
    }

    #[test]
    fn envelope_matches_exact() {
        let m = scenarios::s_mix();
        let e = envelope(&m, 10);
        for n in 0..=10 {
            let (lo, hi) = exact::mass_envelope(&m, n).unwrap();
            assert!((e[n].0 - lo).abs() < EXACT_TOL * lo.max(1.0));
            assert!((e[n].1 - hi).abs() < EXACT_TOL * hi.max(1.0));
        }
    }

    #[test]
    fn runs_are_reproducible() {
        let c = cfg(100, 10, SelectionScheme::AcceptReject { epsilon: None });
        let a = run_particles(&scenarios::s_mix(), &c, 1, 5).unwrap();
        let b = run_particles(&scenarios::s_mix(), &c, 1, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn w0_is_v0_eta() {
        let m = scenarios::s_mix();
        let flow = exact::run_flow(&m, 4).unwrap();
        let run = run_particles(&m, &cfg(100, 4, SelectionScheme::FullResample), 1, 0).unwrap();
        let f = Function::indicator(m.space(0).unwrap(), 0);
        let fl = fluctuations(&m, &run, &flow, &[f], 100).unwrap();
        assert_eq!(fl.w[0], fl.v_eta[0]);
    }

    #[test]
    fn full_resample_w_variance_is_eta_variance() {
        let m = scenarios::s_mix();
        let flow = exact::run_flow(&m, 5).unwrap();
        let f = Function::new(m.space(0).unwrap(), vec![1.0, -0.5]).unwrap();
        for n in 1..=5 {
            let v = w_variance(&m, &flow, n, &f, SelectionScheme::FullResample).unwrap();
            assert!((v - flow.eta(n).variance(&f).unwrap()).abs() < EXACT_TOL);
        }
        let c = Function::constant(m.space(0).unwrap(), 2.0);
        assert!(w_variance(&m, &flow, 3, &c, SelectionScheme::AcceptReject { epsilon: None }).unwrap().abs() < EXACT_TOL);
    }

    #[test]
    fn gaussian_particles_run() {
        let (a, sigma) = LinearGaussianScenario::constant_velocity(1.0, 0.1);
        let sc = LinearGaussianScenario::new(a, sigma, 0.9, 0.8, 0.5, [[0.0, 10.0], [0.0, 10.0]], 1.0)
            .unwrap();
        let c = cfg(50, 10, SelectionScheme::FullResample);
        let mut count = 0;
        let masses = run_particles_with(&sc, &c, 1, 0, |_, _, s| count += s.len()).unwrap();
        assert_eq!(count, 50 * 11);
        let expect = sc.expected_counts(10);
        for n in 0..=10 {
            assert!((masses.masses[n] - expect[n]).abs() < EXACT_TOL * expect[n]);
        }
    }
}
