//! Seeded statistical checks of the simulators against the exact flow.
//!
//! Every check turns one property of the flow into a list of comparisons
//! ([`CheckRecord`]s), each with its own gate and tolerance:
//!
//! * [`Gate::WithinSe`]: `|statistic - oracle| <= k SE + EXACT_TOL`;
//! * [`Gate::AtMost`]: `statistic <= bound + k SE + EXACT_TOL`;
//! * [`Gate::WithinTolerance`]: `|statistic - oracle| <= tolerance`;
//! * [`Gate::Info`]: reported only (fitted constants with no asserted value).
//!
//! `k` is [`CheckParams::gate_se`] (3 by default). The gates are
//! per-comparison; the report records how many comparisons each check made
//! so family-wise behaviour can be audited.
//!
//! Seeds are derived from the global seed and a label naming the check,
//! scenario and parameter point, so a check gives the same report whether
//! it runs alone or with others, and at any thread count.
//!
//! With [`ExperimentSpec::corruption`] set, a constant bias is added to
//! every estimator (and to every exactly computed quantity) before it is
//! compared. Each check must then fail; this guards against vacuous
//! tolerances.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::birth::{exact_birth_variance, regime_bound, tilde_samples, BirthReference};
use crate::error::{Error, Result};
use crate::exact::{
    alpha_star_with, b_constants, b_sequence, bound_dominance, fixed_point_eta,
    limiting_measures, mixing_certificate, route_agreement, run_flow, variance_bound_rhs,
    FlowTrajectory, Semigroups,
};
use crate::measure::{
    dobrushin, tv_distance, DiscreteMeasure, Function, ProbabilityMeasure, StateSpace, EXACT_TOL,
};
use crate::model::{BranchingModel, Regime};
use crate::particles::{
    fluctuations, run_many, v_gamma_variance, w_variance, ParticleConfig, SelectionScheme,
};
use crate::rng::derive_seed;
use crate::scenarios;
use crate::sim::{occupation_counts, FiniteScenario, SimOptions};
use crate::stats::{covariance, fit_line, Summary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckId {
    FlowConsistency,
    SimConsistency,
    Unbiasedness,
    LrRate,
    VarianceBound,
    Longtime,
    Clt,
    BirthApprox,
    BoundDominance,
}

impl CheckId {
    pub const ALL: [CheckId; 9] = [
        CheckId::FlowConsistency,
        CheckId::SimConsistency,
        CheckId::Unbiasedness,
        CheckId::LrRate,
        CheckId::VarianceBound,
        CheckId::Longtime,
        CheckId::Clt,
        CheckId::BirthApprox,
        CheckId::BoundDominance,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CheckId::FlowConsistency => "flow-consistency",
            CheckId::SimConsistency => "sim-consistency",
            CheckId::Unbiasedness => "unbiasedness",
            CheckId::LrRate => "lr-rate",
            CheckId::VarianceBound => "variance-bound",
            CheckId::Longtime => "longtime",
            CheckId::Clt => "clt",
            CheckId::BirthApprox => "birth-approx",
            CheckId::BoundDominance => "bound-dominance",
        }
    }
}

impl fmt::Display for CheckId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CheckId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CheckId::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown check id {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gate {
    WithinSe,
    AtMost,
    WithinTolerance,
    Info,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
}

/// One comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub check: CheckId,
    pub id: String,
    pub statistic: f64,
    pub oracle: Option<f64>,
    pub se: Option<f64>,
    pub bound: Option<f64>,
    pub gate: Gate,
    /// Allowed deviation actually applied by the gate.
    pub tolerance: f64,
    pub verdict: Verdict,
    pub n_samples: usize,
    pub seed: u64,
}

/// A per-run value behind one of the comparisons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub check: CheckId,
    pub id: String,
    pub run: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub check: CheckId,
    pub passed: bool,
    pub comparisons: usize,
    pub failures: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub corruption: Option<f64>,
    pub passed: bool,
    pub checks: Vec<CheckSummary>,
    pub records: Vec<CheckRecord>,
    #[serde(skip)]
    pub raw: Vec<RawRow>,
    /// Wall-clock time per check. Not serialized, so reports stay
    /// byte-identical across reruns.
    #[serde(skip)]
    pub runtime: Vec<(CheckId, Duration)>,
}

impl ExperimentReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.records.iter().filter(|r| r.verdict == Verdict::Fail)
    }

    pub fn summary(&self, check: CheckId) -> Option<&CheckSummary> {
        self.checks.iter().find(|c| c.check == check)
    }
}

/// A named model with an optional declared regime.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub model: BranchingModel,
    pub regime: Option<Regime>,
}

impl Scenario {
    pub fn builtin(name: &str) -> Option<Self> {
        let model = scenarios::by_name(name)?;
        let regime = model.regime();
        Some(Self {
            name: name.to_string(),
            model,
            regime,
        })
    }

    /// The declared regime, checked against the potential.
    pub fn checked_regime(&self) -> Result<Regime> {
        let detected = self.model.regime();
        match (self.regime, detected) {
            (Some(declared), Some(found)) if declared == found => Ok(found),
            (None, Some(found)) => Ok(found),
            (declared, found) => Err(Error::Regime(format!(
                "scenario {} declared {} but its potential gives {}",
                self.name,
                declared.map_or("none", |r| r.as_str()),
                found.map_or("none", |r| r.as_str()),
            ))),
        }
    }
}

fn names(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConsistencyParams {
    pub scenarios: Vec<String>,
    pub horizon: usize,
}

impl Default for FlowConsistencyParams {
    fn default() -> Self {
        Self {
            scenarios: names(&scenarios::NAMES),
            horizon: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConsistencyParams {
    pub scenarios: Vec<String>,
    pub horizon: usize,
    pub replicates: usize,
    pub max_population: usize,
}

impl Default for SimConsistencyParams {
    fn default() -> Self {
        Self {
            scenarios: names(&scenarios::NAMES),
            horizon: 6,
            replicates: 100_000,
            max_population: SimOptions::default().max_population,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnbiasednessParams {
    pub scenarios: Vec<String>,
    pub particles: usize,
    pub runs: usize,
    pub horizon: usize,
    pub functions: Vec<String>,
    pub scheme: SelectionScheme,
}

impl Default for UnbiasednessParams {
    fn default() -> Self {
        Self {
            scenarios: names(&["s-one", "s-sub", "s-sup", "s-mix"]),
            particles: 200,
            runs: 2000,
            horizon: 10,
            functions: names(&["one", "ind-0"]),
            scheme: SelectionScheme::FullResample,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrRateParams {
    pub scenarios: Vec<String>,
    pub particles: Vec<usize>,
    pub runs: usize,
    pub times: Vec<usize>,
    pub function: String,
    pub scheme: SelectionScheme,
    pub slope_tolerance: f64,
    pub exponent_agreement: f64,
    /// Allowed `max / min` of `sqrt(N) RMSE` across the grid.
    pub scaled_spread: f64,
}

impl Default for LrRateParams {
    fn default() -> Self {
        Self {
            scenarios: names(&["s-sub", "s-mix"]),
            particles: vec![100, 316, 1000, 3162, 10_000],
            runs: 500,
            times: vec![5, 20],
            function: "ind-0".into(),
            scheme: SelectionScheme::FullResample,
            slope_tolerance: 0.1,
            exponent_agreement: 0.1,
            scaled_spread: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VarianceBoundParams {
    pub scenarios: Vec<String>,
    pub particles: Vec<usize>,
    pub runs: usize,
    pub horizon: usize,
    pub lag: usize,
    pub scheme: SelectionScheme,
    /// Allowed factor between the observed and expected reduction of the
    /// left-hand side from the first to the last `N`.
    pub reduction_factor: f64,
}

impl Default for VarianceBoundParams {
    fn default() -> Self {
        Self {
            scenarios: names(&["s-sub", "s-mix"]),
            particles: vec![101, 1001],
            runs: 5000,
            horizon: 10,
            lag: 1,
            scheme: SelectionScheme::FullResample,
            reduction_factor: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LongtimeParams {
    pub scenarios: Vec<String>,
    pub horizon: usize,
    pub lyapunov_tolerance: f64,
    /// Only distances above this floor enter fitted decay rates.
    pub fit_floor: f64,
}

impl Default for LongtimeParams {
    fn default() -> Self {
        Self {
            scenarios: names(&["s-one", "s-sub", "s-sup", "s-grow"]),
            horizon: 200,
            lyapunov_tolerance: 0.01,
            fit_floor: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CltParams {
    pub scenarios: Vec<String>,
    pub particles: usize,
    pub runs: usize,
    pub horizon: usize,
    pub functions: Vec<String>,
    pub scheme: SelectionScheme,
}

impl Default for CltParams {
    fn default() -> Self {
        Self {
            scenarios: names(&["s-one", "s-sub", "s-mix"]),
            particles: 1000,
            runs: 5000,
            horizon: 5,
            functions: names(&["one", "ind-0"]),
            scheme: SelectionScheme::FullResample,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BirthApproxParams {
    pub scenarios: Vec<String>,
    /// Weights of the reference law `lambda`; uniform when absent.
    pub lambda: Option<Vec<f64>>,
    pub samples: usize,
    pub runs: usize,
    pub horizon: usize,
    pub times: Vec<usize>,
    pub function: String,
    pub lag: usize,
    pub rate_samples: Vec<usize>,
    pub rate_runs: usize,
    pub rate_time: usize,
    pub slope_tolerance: f64,
}

impl Default for BirthApproxParams {
    fn default() -> Self {
        Self {
            scenarios: names(&["s-one", "s-sub", "s-sup"]),
            lambda: None,
            samples: 100,
            runs: 5000,
            horizon: 50,
            times: vec![0, 1, 2, 5, 10, 20, 50],
            function: "ind-0".into(),
            lag: 1,
            rate_samples: vec![16, 64, 256, 1024, 4096],
            rate_runs: 1000,
            rate_time: 10,
            slope_tolerance: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundDominanceParams {
    pub scenarios: Vec<String>,
    pub horizon: usize,
    pub lag: usize,
    /// `b_n` is reported up to this time.
    pub b_horizon: usize,
}

impl Default for BoundDominanceParams {
    fn default() -> Self {
        Self {
            scenarios: names(&scenarios::NAMES),
            horizon: 50,
            lag: 1,
            b_horizon: 100,
        }
    }
}

/// Parameters of every check. Missing fields take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckParams {
    pub gate_se: f64,
    /// Raw per-run values kept per comparison.
    pub raw_runs: usize,
    pub flow_consistency: FlowConsistencyParams,
    pub sim_consistency: SimConsistencyParams,
    pub unbiasedness: UnbiasednessParams,
    pub lr_rate: LrRateParams,
    pub variance_bound: VarianceBoundParams,
    pub longtime: LongtimeParams,
    pub clt: CltParams,
    pub birth_approx: BirthApproxParams,
    pub bound_dominance: BoundDominanceParams,
}

impl Default for CheckParams {
    fn default() -> Self {
        Self {
            gate_se: 3.0,
            raw_runs: 1000,
            flow_consistency: Default::default(),
            sim_consistency: Default::default(),
            unbiasedness: Default::default(),
            lr_rate: Default::default(),
            variance_bound: Default::default(),
            longtime: Default::default(),
            clt: Default::default(),
            birth_approx: Default::default(),
            bound_dominance: Default::default(),
        }
    }
}

const MIN_RUNS: usize = 100;

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidArgument(msg()))
    }
}

fn increasing(what: &str, xs: &[usize]) -> Result<()> {
    require(
        xs.len() >= 2 && xs.windows(2).all(|w| w[0] < w[1]),
        || format!("{what} must be a strictly increasing grid of at least two values"),
    )
}

fn enough_runs(what: &str, runs: usize) -> Result<()> {
    require(runs >= MIN_RUNS, || {
        format!("{what} needs at least {MIN_RUNS} runs, got {runs}")
    })
}

impl CheckParams {
    pub fn validate(&self) -> Result<()> {
        require(self.gate_se > 0.0, || "gate_se must be positive".into())?;
        enough_runs("sim-consistency", self.sim_consistency.replicates)?;
        enough_runs("unbiasedness", self.unbiasedness.runs)?;
        enough_runs("lr-rate", self.lr_rate.runs)?;
        increasing("lr-rate particles", &self.lr_rate.particles)?;
        let lr = &self.lr_rate.particles;
        require(lr[lr.len() - 1] >= 100 * lr[0], || {
            "lr-rate particle grid must span at least two decades".into()
        })?;
        require(lr[0] >= 2, || "lr-rate needs at least two particles".into())?;
        enough_runs("variance-bound", self.variance_bound.runs)?;
        increasing("variance-bound particles", &self.variance_bound.particles)?;
        require(self.variance_bound.particles[0] >= 2, || {
            "variance-bound needs at least two particles".into()
        })?;
        enough_runs("clt", self.clt.runs)?;
        let b = &self.birth_approx;
        enough_runs("birth-approx", b.runs)?;
        enough_runs("birth-approx rate", b.rate_runs)?;
        increasing("birth-approx rate samples", &b.rate_samples)?;
        require(b.times.iter().all(|&t| t <= b.horizon), || {
            "birth-approx times must not exceed the horizon".into()
        })?;
        require(b.samples >= 1, || "birth-approx needs samples".into())?;
        Ok(())
    }
}

/// Everything a verification run needs.
#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub seed: u64,
    /// Scenarios the checks may refer to by name.
    pub scenarios: Vec<Scenario>,
    pub params: CheckParams,
    /// Bias added to every estimator (self-test mode).
    pub corruption: Option<f64>,
}

impl ExperimentSpec {
    /// The built-in scenarios with default parameters.
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            scenarios: scenarios::NAMES
                .iter()
                .map(|n| Scenario::builtin(n).expect("built-in"))
                .collect(),
            params: CheckParams::default(),
            corruption: None,
        }
    }

    pub fn scenario(&self, name: &str) -> Result<&Scenario> {
        self.scenarios
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scenario {name:?}")))
    }
}

/// `one` or `ind-<label>`.
pub fn test_function(space: &StateSpace, name: &str) -> Result<Function> {
    if name == "one" {
        return Ok(Function::constant(space, 1.0));
    }
    let label = name
        .strip_prefix("ind-")
        .ok_or_else(|| Error::InvalidArgument(format!("unknown test function {name:?}")))?;
    let x = space
        .index_of(label)
        .ok_or_else(|| Error::InvalidArgument(format!("no state {label:?} for {name:?}")))?;
    Ok(Function::indicator(space, x))
}

struct Recorder {
    check: CheckId,
    seed: u64,
    k: f64,
    bias: f64,
    raw_runs: usize,
    records: Vec<CheckRecord>,
    raw: Vec<RawRow>,
}

impl Recorder {
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        id: String,
        statistic: f64,
        oracle: Option<f64>,
        se: Option<f64>,
        bound: Option<f64>,
        gate: Gate,
        tolerance: f64,
        pass: bool,
        n_samples: usize,
    ) {
        self.records.push(CheckRecord {
            check: self.check,
            id,
            statistic,
            oracle,
            se,
            bound,
            gate,
            tolerance,
            verdict: if pass { Verdict::Pass } else { Verdict::Fail },
            n_samples,
            seed: self.seed,
        });
    }

    fn within_se(&mut self, id: String, stat: f64, oracle: f64, se: f64, n: usize) {
        let tol = self.k * se + EXACT_TOL * oracle.abs().max(1.0);
        let pass = (stat - oracle).abs() <= tol;
        self.push(id, stat, Some(oracle), Some(se), None, Gate::WithinSe, tol, pass, n);
    }

    fn at_most(&mut self, id: String, stat: f64, bound: f64, se: Option<f64>, n: usize) {
        let tol = self.k * se.unwrap_or(0.0) + EXACT_TOL * bound.abs().max(1.0);
        let pass = stat <= bound + tol;
        self.push(id, stat, None, se, Some(bound), Gate::AtMost, tol, pass, n);
    }

    fn within(&mut self, id: String, stat: f64, oracle: f64, tol: f64, n: usize) {
        let pass = (stat - oracle).abs() <= tol;
        self.push(id, stat, Some(oracle), None, None, Gate::WithinTolerance, tol, pass, n);
    }

    fn info(&mut self, id: String, stat: f64, n: usize) {
        self.push(id, stat, None, None, None, Gate::Info, 0.0, true, n);
    }

    fn raw(&mut self, id: &str, values: &[f64]) {
        for (run, &value) in values.iter().take(self.raw_runs).enumerate() {
            self.raw.push(RawRow {
                check: self.check,
                id: id.to_string(),
                run,
                value,
            });
        }
    }

    fn sub_seed(&self, label: &str) -> u64 {
        derive_seed(self.seed, label)
    }
}

/// Runs the requested checks in the given order (duplicates are ignored)
/// and merges their records.
pub fn run_checks(spec: &ExperimentSpec, checks: &[CheckId]) -> Result<ExperimentReport> {
    spec.params.validate()?;
    let mut report = ExperimentReport {
        seed: spec.seed,
        corruption: spec.corruption,
        passed: true,
        checks: Vec::new(),
        records: Vec::new(),
        raw: Vec::new(),
        runtime: Vec::new(),
    };
    let mut seen = Vec::new();
    for &check in checks {
        if seen.contains(&check) {
            continue;
        }
        seen.push(check);
        let start = Instant::now();
        let mut rec = Recorder {
            check,
            seed: derive_seed(spec.seed, check.as_str()),
            k: spec.params.gate_se,
            bias: spec.corruption.unwrap_or(0.0),
            raw_runs: spec.params.raw_runs,
            records: Vec::new(),
            raw: Vec::new(),
        };
        match check {
            CheckId::FlowConsistency => flow_consistency(spec, &mut rec)?,
            CheckId::SimConsistency => sim_consistency(spec, &mut rec)?,
            CheckId::Unbiasedness => unbiasedness(spec, &mut rec)?,
            CheckId::LrRate => lr_rate(spec, &mut rec)?,
            CheckId::VarianceBound => variance_bound(spec, &mut rec)?,
            CheckId::Longtime => longtime(spec, &mut rec)?,
            CheckId::Clt => clt(spec, &mut rec)?,
            CheckId::BirthApprox => birth_approx(spec, &mut rec)?,
            CheckId::BoundDominance => dominance(spec, &mut rec)?,
        }
        let failures = rec
            .records
            .iter()
            .filter(|r| r.verdict == Verdict::Fail)
            .count();
        report.checks.push(CheckSummary {
            check,
            passed: failures == 0,
            comparisons: rec.records.iter().filter(|r| r.gate != Gate::Info).count(),
            failures,
            seed: rec.seed,
        });
        report.passed &= failures == 0;
        report.records.append(&mut rec.records);
        report.raw.append(&mut rec.raw);
        report.runtime.push((check, start.elapsed()));
    }
    Ok(report)
}

pub fn run_all(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    run_checks(spec, &CheckId::ALL)
}

fn flow_consistency(spec: &ExperimentSpec, rec: &mut Recorder) -> Result<()> {
    let p = &spec.params.flow_consistency;
    let b = rec.bias;
    for name in &p.scenarios {
        let model = &spec.scenario(name)?.model;
        let agree = route_agreement(model, p.horizon)?;
        let n = p.horizon + 1;
        rec.at_most(format!("{name}/pair-mass"), agree.pair_mass + b, 0.0, None, n);
        rec.at_most(format!("{name}/pair-eta"), agree.pair_eta + b, 0.0, None, n);
        rec.at_most(format!("{name}/product-mass"), agree.product_mass + b, 0.0, None, n);
        rec.at_most(format!("{name}/decomposition"), agree.decomposition + b, 0.0, None, n);

        let flow = run_flow(model, p.horizon)?;
        let mut excess = f64::NEG_INFINITY;
        for t in 0..=p.horizon {
            let (lo, hi) = crate::exact::mass_envelope(model, t)?;
            let m = flow.mass(t) + b;
            excess = excess.max((lo - m).max(m - hi) / hi.max(1.0));
        }
        rec.at_most(format!("{name}/envelope-excess"), excess, 0.0, None, n);
    }
    Ok(())
}

fn sim_consistency(spec: &ExperimentSpec, rec: &mut Recorder) -> Result<()> {
    let p = &spec.params.sim_consistency;
    let b = rec.bias;
    let options = SimOptions {
        max_population: p.max_population,
    };
    for name in &p.scenarios {
        let model = &spec.scenario(name)?.model;
        let flow = run_flow(model, p.horizon)?;
        let scenario = FiniteScenario::new(model.clone())?;
        let seed = rec.sub_seed(name);
        let obs = occupation_counts(&scenario, p.horizon, p.replicates, seed, options)?;
        let space = model.space(0)?.clone();
        for t in 0..=p.horizon {
            for (x, label) in space.labels().iter().enumerate() {
                let id = format!("{name}/n={t}/x={label}");
                let s = obs.summary(t, x);
                rec.within_se(id.clone(), s.mean + b, flow.gamma(t).weights()[x], s.se, s.n);
                rec.raw(&id, &obs.column(t, x));
            }
        }
    }

    // no targets and no immigration: the process stays empty
    if let Some(first) = p.scenarios.first() {
        let model = &spec.scenario(first)?.model;
        let space = model.space(0)?;
        let empty = BranchingModel::homogeneous_with_initial(
            model.potential(0)?.clone(),
            model.transition(0)?.clone(),
            DiscreteMeasure::zero(space),
            DiscreteMeasure::zero(space),
        )?;
        let scenario = FiniteScenario::new(empty)?;
        let obs = occupation_counts(&scenario, p.horizon, MIN_RUNS, rec.sub_seed("empty"), options)?;
        let total = obs
            .values
            .iter()
            .flatten()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        rec.at_most("empty/max-count".into(), total + b, 0.0, None, MIN_RUNS);
    }
    Ok(())
}

fn functions(space: &StateSpace, names: &[String]) -> Result<Vec<(String, Function)>> {
    names
        .iter()
        .map(|n| Ok((n.clone(), test_function(space, n)?)))
        .collect()
}

fn unbiasedness(spec: &ExperimentSpec, rec: &mut Recorder) -> Result<()> {
    let p = &spec.params.unbiasedness;
    let b = rec.bias;
    let config = ParticleConfig {
        particles: p.particles,
        horizon: p.horizon,
        scheme: p.scheme,
    };
    for name in &p.scenarios {
        let model = &spec.scenario(name)?.model;
        let flow = run_flow(model, p.horizon)?;
        let runs = run_many(model, &config, p.runs, rec.sub_seed(name))?;
        for (fname, f) in functions(model.space(0)?, &p.functions)? {
            for t in 0..=p.horizon {
                let xs: Vec<f64> = runs
                    .iter()
                    .map(|r| r.gamma(t, &f).map(|v| v + b))
                    .collect::<Result<_>>()?;
                let id = format!("{name}/n={t}/f={fname}");
                let s = Summary::of(&xs);
                rec.within_se(id.clone(), s.mean, flow.gamma(t).integrate(&f)?, s.se, s.n);
                rec.raw(&id, &xs);
            }
        }
    }

    // G = 1 without immigration: every particle mass is exactly gamma_0(1)
    let model = scenarios::without_immigration(&scenarios::s_one(), 1.0);
    let runs = run_many(&model, &config, MIN_RUNS, rec.sub_seed("deterministic-mass"))?;
    let err = runs
        .iter()
        .flat_map(|r| r.masses.masses.iter())
        .fold(0.0f64, |m, v| m.max((v + b - 1.0).abs()));
    rec.at_most("deterministic-mass/max-error".into(), err, 0.0, None, MIN_RUNS);
    Ok(())
}

fn lr_rate(spec: &ExperimentSpec, rec: &mut Recorder) -> Result<()> {
    let p = &spec.params.lr_rate;
    let b = rec.bias;
    let horizon = p.times.iter().copied().max().unwrap_or(0);
    for name in &p.scenarios {
        let model = &spec.scenario(name)?.model;
        let f = test_function(model.space(0)?, &p.function)?;
        let flow = run_flow(model, horizon)?;
        // errors[t][i] = (L1, L2) at particles[i]
        let mut errors = vec![Vec::new(); p.times.len()];
        for &n_particles in &p.particles {
            let config = ParticleConfig {
                particles: n_particles,
                horizon,
                scheme: p.scheme,
            };
            let seed = rec.sub_seed(&format!("{name}/N={n_particles}"));
            let runs = run_many(model, &config, p.runs, seed)?;
            for (i, &t) in p.times.iter().enumerate() {
                let exact = flow.eta(t).integrate(&f)?;
                let errs: Vec<f64> = runs
                    .iter()
                    .map(|r| Ok(r.eta(t).integrate(&f)? + b - exact))
                    .collect::<Result<_>>()?;
                rec.raw(&format!("{name}/N={n_particles}/n={t}"), &errs);
                let l1 = errs.iter().map(|e| e.abs()).sum::<f64>() / errs.len() as f64;
                let l2 = (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt();
                errors[i].push((l1, l2));
            }
        }
        let log_n: Vec<f64> = p.particles.iter().map(|&n| (n as f64).ln()).collect();
        let samples = p.runs * p.particles.len();
        for (i, &t) in p.times.iter().enumerate() {
            let fit = |r: usize| {
                let ys: Vec<f64> = errors[i]
                    .iter()
                    .map(|e| if r == 1 { e.0 } else { e.1 }.ln())
                    .collect();
                fit_line(&log_n, &ys).slope
            };
            let (s1, s2) = (fit(1), fit(2));
            rec.within(format!("{name}/n={t}/slope-r1"), s1, -0.5, p.slope_tolerance, samples);
            rec.within(format!("{name}/n={t}/slope-r2"), s2, -0.5, p.slope_tolerance, samples);
            rec.within(
                format!("{name}/n={t}/slope-agreement"),
                s1 - s2,
                0.0,
                p.exponent_agreement,
                samples,
            );
            let scaled: Vec<f64> = p
                .particles
                .iter()
                .zip(&errors[i])
                .map(|(&n, e)| (n as f64).sqrt() * e.1)
                .collect();
            let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = scaled.iter().copied().fold(f64::INFINITY, f64::min);
            rec.at_most(format!("{name}/n={t}/scaled-spread"), max / min, p.scaled_spread, None, samples);
            let b_n = b_constants(model, t)?.total;
            rec.info(format!("{name}/n={t}/fitted-constant"), max / b_n, samples);
        }
    }
    Ok(())
}

fn variance_bound(spec: &ExperimentSpec, rec: &mut Recorder) -> Result<()> {
    let p = &spec.params.variance_bound;
    let b = rec.bias;
    for name in &p.scenarios {
        let model = &spec.scenario(name)?.model;
        let cert = mixing_certificate(model, p.lag)?;
        let flow = run_flow(model, p.horizon)?;
        let mut final_lhs = Vec::new();
        for &n_particles in &p.particles {
            let config = ParticleConfig {
                particles: n_particles,
                horizon: p.horizon,
                scheme: p.scheme,
            };
            let seed = rec.sub_seed(&format!("{name}/N={n_particles}"));
            let runs = run_many(model, &config, p.runs, seed)?;
            for t in 1..=p.horizon {
                let xs: Vec<f64> = runs
                    .iter()
                    .map(|r| ((r.mass(t) + b) / flow.mass(t) - 1.0).powi(2))
                    .collect();
                let id = format!("{name}/N={n_particles}/n={t}");
                let s = Summary::of(&xs);
                let rhs = variance_bound_rhs(&cert, t, n_particles)?;
                rec.at_most(id.clone(), s.mean, rhs, Some(s.se), s.n);
                rec.raw(&id, &xs);
                if t == p.horizon {
                    final_lhs.push(s.mean);
                }
            }
        }
        let (first, last) = (final_lhs[0], final_lhs[final_lhs.len() - 1]);
        let id = format!("{name}/n={}/reduction", p.horizon);
        if first == 0.0 && last == 0.0 {
            // constant potential: the particle mass is deterministic
            rec.info(id, 0.0, 2 * p.runs);
        } else {
            let expected = (p.particles[p.particles.len() - 1] - 1) as f64 / (p.particles[0] - 1) as f64;
            let log_ratio = (first / last / expected).ln();
            rec.within(id, log_ratio, 0.0, p.reduction_factor.ln(), 2 * p.runs);
        }
    }
    Ok(())
}

fn tv_series(flow: &FlowTrajectory, limit: &ProbabilityMeasure) -> Result<Vec<f64>> {
    (0..flow.len()).map(|n| tv_distance(flow.eta(n), limit)).collect()
}

/// Fitted geometric rate `exp(slope)` of `log tv_n`, using the points above
/// `floor`; `None` when fewer than three qualify.
fn decay_rate(tvs: &[f64], floor: f64) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = tvs
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > floor)
        .map(|(n, &v)| (n as f64, v.ln()))
        .unzip();
    (xs.len() >= 3).then(|| fit_line(&xs, &ys).slope.exp())
}

fn longtime(spec: &ExperimentSpec, rec: &mut Recorder) -> Result<()> {
    let p = &spec.params.longtime;
    let b = rec.bias;
    let h = p.horizon;
    for name in &p.scenarios {
        let scenario = spec.scenario(name)?;
        let regime = scenario.checked_regime()?;
        let model = &scenario.model;
        let flow = run_flow(model, h)?;
        let g0 = model.initial().mass();
        let mu = model.immigration(1)?.mass();
        match regime {
            Regime::UnitPotential => {
                let linear = (0..=h)
                    .map(|n| {
                        let exact = g0 + mu * n as f64;
                        (flow.mass(n) + b - exact).abs() / exact.max(1.0)
                    })
                    .fold(0.0f64, f64::max);
                rec.at_most(format!("{name}/mass-linearity"), linear, 0.0, None, h + 1);

                let limit = fixed_point_eta(model)?.eta;
                let tvs = tv_series(&flow, &limit)?;
                let scaled = tvs
                    .iter()
                    .enumerate()
                    .map(|(n, v)| n as f64 * v)
                    .fold(0.0f64, f64::max);
                // n TV(eta_n, pi) <= (gamma_0(1) + mu(1) / (1 - beta(M))) / mu(1)
                let beta = dobrushin(model.transition(0)?);
                let bound = (g0 + mu / (1.0 - beta)) / mu;
                rec.at_most(format!("{name}/scaled-tv"), scaled + b, bound, None, h + 1);
                rec.info(format!("{name}/fitted-scaled-tv"), scaled, h + 1);
            }
            Regime::Subcritical => {
                let g = model.potential(0)?.upper();
                let lim = limiting_measures(model)?;
                let limit_eta = lim
                    .eta
                    .ok_or_else(|| Error::Regime(format!("{name}: zero limiting intensity")))?;
                // |gamma_n(f) - gamma_inf(f)| <= c' g^n ||f||
                let c1 = g0 + mu / (1.0 - g);
                for (fname, f) in functions(model.space(0)?, &["one".into(), "ind-0".into()])? {
                    let target = lim.gamma.integrate(&f)?;
                    let excess = (0..=h)
                        .map(|n| {
                            let d = (flow.gamma(n).integrate(&f)? - target).abs();
                            Ok(d + b - c1 * g.powi(n as i32) * f.sup_norm())
                        })
                        .collect::<Result<Vec<f64>>>()?
                        .into_iter()
                        .fold(f64::NEG_INFINITY, f64::max);
                    rec.at_most(format!("{name}/gamma-excess/f={fname}"), excess, 0.0, None, h + 1);
                }
                // TV(eta_n, eta_inf) <= 2 c' g^n / inf_n gamma_n(1)
                let g_minus = model.potential(0)?.lower();
                let d2 = g0.min(mu / (1.0 - g_minus));
                let c = 2.0 * c1 / d2;
                let tvs = tv_series(&flow, &limit_eta)?;
                let excess = tvs
                    .iter()
                    .enumerate()
                    .map(|(n, v)| v + b - c * g.powi(n as i32))
                    .fold(f64::NEG_INFINITY, f64::max);
                rec.at_most(format!("{name}/tv-excess"), excess, 0.0, None, h + 1);
                let fitted = tvs
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v > p.fit_floor)
                    .map(|(n, v)| v / g.powi(n as i32))
                    .fold(0.0f64, f64::max);
                rec.info(format!("{name}/fitted-tv-constant"), fitted, h + 1);
                match decay_rate(&tvs, p.fit_floor) {
                    Some(rate) => rec.at_most(format!("{name}/tv-rate"), rate + b, g, None, h + 1),
                    None => rec.info(format!("{name}/tv-rate"), 0.0, h + 1),
                }
            }
            Regime::Supercritical => {
                let fp = fixed_point_eta(model)?;
                let lyapunov = flow.mass(h).ln() / h as f64;
                rec.within(
                    format!("{name}/lyapunov"),
                    lyapunov + b,
                    fp.lyapunov,
                    p.lyapunov_tolerance,
                    h + 1,
                );
                let tvs = tv_series(&flow, &fp.eta)?;
                match decay_rate(&tvs, p.fit_floor) {
                    Some(rate) => {
                        rec.at_most(format!("{name}/tv-rate"), rate + b, 1.0 - 1e-6, None, h + 1)
                    }
                    None => rec.info(format!("{name}/tv-rate"), 0.0, h + 1),
                }
                rec.at_most(format!("{name}/final-tv"), tvs[h] + b, p.fit_floor, None, h + 1);
            }
            Regime::Gaussian => {
                return Err(Error::Regime(format!(
                    "{name}: long-time checks need a finite model"
                )))
            }
        }
    }
    Ok(())
}

fn clt(spec: &ExperimentSpec, rec: &mut Recorder) -> Result<()> {
    let p = &spec.params.clt;
    let root_n = (p.particles as f64).sqrt();
    let shift = root_n * rec.bias;
    let config = ParticleConfig {
        particles: p.particles,
        horizon: p.horizon,
        scheme: p.scheme,
    };
    for name in &p.scenarios {
        let model = &spec.scenario(name)?.model;
        let flow = run_flow(model, p.horizon)?;
        let fs = functions(model.space(0)?, &p.functions)?;
        let just_fs: Vec<Function> = fs.iter().map(|(_, f)| f.clone()).collect();
        let runs = run_many(model, &config, p.runs, rec.sub_seed(name))?;
        let samples = runs
            .par_iter()
            .map(|r| fluctuations(model, r, &flow, &just_fs, p.particles))
            .collect::<Result<Vec<_>>>()?;
        for (k, (fname, f)) in fs.iter().enumerate() {
            let mut weighted = Vec::new();
            for t in 0..=p.horizon {
                let id = format!("{name}/n={t}/f={fname}");
                let w: Vec<f64> = samples.iter().map(|s| s.w[t][k] + shift).collect();
                let sw = Summary::of(&w);
                rec.within_se(format!("{id}/w-mean"), sw.mean, 0.0, sw.se, sw.n);
                let exact_w = w_variance(model, &flow, t, f, p.scheme)?;
                rec.within_se(format!("{id}/w-variance"), sw.variance, exact_w, sw.variance_se, sw.n);
                rec.raw(&format!("{id}/w"), &w);

                let v: Vec<f64> = samples.iter().map(|s| s.v_gamma[t][k] + shift).collect();
                let sv = Summary::of(&v);
                let exact_v = v_gamma_variance(model, &flow, t, f, p.scheme)?;
                rec.within_se(format!("{id}/v-gamma-variance"), sv.variance, exact_v, sv.variance_se, sv.n);

                if p.scheme == SelectionScheme::FullResample {
                    let direct = flow.eta(t).variance(f)?;
                    rec.within(format!("{id}/full-resample-variance"), exact_w + rec.bias, direct, EXACT_TOL, 1);
                }
                weighted.push(
                    runs.iter()
                        .zip(&w)
                        .map(|(r, w)| if t == 0 { flow.mass(0) } else { r.mass(t - 1) } * w)
                        .collect::<Vec<f64>>(),
                );
            }
            for q in 1..=p.horizon {
                for s in 0..q {
                    let (cov, se) = covariance(&weighted[s], &weighted[q]);
                    rec.within_se(format!("{name}/f={fname}/cov-{s}-{q}"), cov, 0.0, se, p.runs);
                }
            }
        }
    }
    Ok(())
}

fn birth_approx(spec: &ExperimentSpec, rec: &mut Recorder) -> Result<()> {
    let p = &spec.params.birth_approx;
    let b = rec.bias;
    for name in &p.scenarios {
        let model = &spec.scenario(name)?.model;
        let space = model.space(0)?;
        let lambda = match &p.lambda {
            Some(w) => ProbabilityMeasure::new(space, w.clone())?,
            None => ProbabilityMeasure::uniform(space),
        };
        let f = test_function(space, &p.function)?;
        let flow = run_flow(model, p.horizon)?;
        let sg = Semigroups::new(model);
        let reference = BirthReference::constant(model, &lambda, p.horizon)?;
        let np = p.samples as f64;
        let xs = tilde_samples(model, &reference, p.samples, p.runs, rec.sub_seed(name), &f)?;

        for &t in &p.times {
            let id = format!("{name}/n={t}");
            let col: Vec<f64> = xs.iter().map(|r| r[t] + b).collect();
            let s = Summary::of(&col);
            rec.within_se(format!("{id}/mean"), s.mean, flow.gamma(t).integrate(&f)?, s.se, s.n);
            let exact = exact_birth_variance(&sg, &reference, t, &f)?;
            rec.within_se(format!("{id}/scaled-variance"), np * s.variance, exact, np * s.variance_se, s.n);
            rec.raw(&id, &col);
        }

        // N' sup_n E[(tilde gamma_n(f) / gamma_n(1) - eta_n(f))^2]
        let mut worst = (f64::NEG_INFINITY, 0.0);
        for t in 0..=p.horizon {
            let eta_f = flow.eta(t).integrate(&f)?;
            let sq: Vec<f64> = xs
                .iter()
                .map(|r| ((r[t] + b) / flow.mass(t) - eta_f).powi(2))
                .collect();
            let s = Summary::of(&sq);
            if np * s.mean > worst.0 {
                worst = (np * s.mean, np * s.se);
            }
        }
        let bound = regime_bound(model, reference.density_sup(), p.lag)?.value() * f.sup_norm().powi(2);
        rec.at_most(format!("{name}/uniform-bound"), worst.0, bound, Some(worst.1), p.runs);

        let rate_ref = BirthReference::constant(model, &lambda, p.rate_time)?;
        let exact = flow.gamma(p.rate_time).integrate(&f)?;
        let mut rmse = Vec::new();
        for &samples in &p.rate_samples {
            let seed = rec.sub_seed(&format!("{name}/N'={samples}"));
            let ys = tilde_samples(model, &rate_ref, samples, p.rate_runs, seed, &f)?;
            let mse = ys.iter().map(|r| (r[p.rate_time] + b - exact).powi(2)).sum::<f64>()
                / ys.len() as f64;
            rmse.push(mse.sqrt().ln());
        }
        let log_n: Vec<f64> = p.rate_samples.iter().map(|&n| (n as f64).ln()).collect();
        let slope = fit_line(&log_n, &rmse).slope;
        rec.within(
            format!("{name}/n={}/slope", p.rate_time),
            slope,
            -0.5,
            p.slope_tolerance,
            p.rate_runs * p.rate_samples.len(),
        );

        // lambda = normalized immigration: the density is constant, and with
        // a constant potential the total mass carries no randomness
        if model.potential(0)?.is_constant() {
            if let Some(law) = model.immigration_law(1)? {
                let reference = BirthReference::constant(model, &law, p.horizon)?;
                let one = Function::constant(space, 1.0);
                let ys = tilde_samples(model, &reference, p.samples, MIN_RUNS, rec.sub_seed(&format!("{name}/exact-law")), &one)?;
                let worst = (0..=p.horizon)
                    .map(|t| Summary::of(&ys.iter().map(|r| r[t]).collect::<Vec<_>>()).variance)
                    .fold(0.0f64, f64::max);
                rec.at_most(format!("{name}/exact-law-mass-variance"), worst + b, 0.0, None, MIN_RUNS);
            }
        }
    }
    Ok(())
}

fn dominance(spec: &ExperimentSpec, rec: &mut Recorder) -> Result<()> {
    let p = &spec.params.bound_dominance;
    let b = rec.bias;
    for name in &p.scenarios {
        let model = &spec.scenario(name)?.model;
        let cert = mixing_certificate(model, p.lag)?;
        let pairs = (p.horizon + 1) * (p.horizon + 2) / 2;
        let dom = bound_dominance(model, &cert, p.horizon)?;
        rec.at_most(format!("{name}/q-ratio"), dom.worst_q_ratio + b, 1.0, None, pairs);
        rec.at_most(format!("{name}/beta-excess"), dom.worst_beta_excess + b, 0.0, None, pairs);

        // alpha at the exact flow and on a grid of masses and laws
        let sg = Semigroups::new(model);
        let flow = run_flow(model, p.horizon)?;
        let space = model.space(0)?;
        let mut laws: Vec<ProbabilityMeasure> =
            (0..space.size()).map(|x| ProbabilityMeasure::dirac(space, x)).collect();
        laws.push(ProbabilityMeasure::uniform(space));
        let mut worst = f64::NEG_INFINITY;
        let mut tested = 0;
        for n in 0..=p.horizon {
            for q in 0..=n {
                let m = flow.mass(q);
                let mut cases = vec![(m, flow.eta(q).clone())];
                for scale in [0.0, 0.5, 2.0] {
                    for law in &laws {
                        cases.push((scale * m, law.clone()));
                    }
                }
                for (mass, eta) in &cases {
                    let a = alpha_star_with(&sg, q, n, *mass, eta)?;
                    if !a.degenerate {
                        worst = worst.max(a.exact - a.bound);
                        tested += 1;
                    }
                }
            }
        }
        rec.at_most(format!("{name}/alpha-excess"), worst + b, 0.0, None, tested);

        let bs = b_sequence(model, p.b_horizon)?;
        let head = bs[..=p.horizon.min(p.b_horizon)].iter().copied().fold(0.0, f64::max);
        let all = bs.iter().copied().fold(0.0, f64::max);
        rec.info(format!("{name}/max-b-n/n<={}", p.horizon), head, bs.len());
        rec.info(format!("{name}/max-b-n/n<={}", p.b_horizon), all, bs.len());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(seed: u64) -> ExperimentSpec {
        let mut spec = ExperimentSpec::new(seed);
        let p = &mut spec.params;
        p.sim_consistency.replicates = 2000;
        p.unbiasedness.runs = 200;
        p.unbiasedness.horizon = 4;
        p.lr_rate.runs = 100;
        p.lr_rate.particles = vec![50, 200, 800, 5000];
        p.lr_rate.times = vec![3];
        p.variance_bound.runs = 200;
        p.variance_bound.horizon = 4;
        p.clt.runs = 300;
        p.clt.particles = 200;
        p.clt.horizon = 3;
        p.birth_approx.runs = 300;
        p.birth_approx.horizon = 20;
        p.birth_approx.times = vec![0, 5, 20];
        p.birth_approx.rate_runs = 200;
        p.birth_approx.rate_samples = vec![16, 128, 1024];
        p.bound_dominance.horizon = 20;
        p.bound_dominance.b_horizon = 30;
        p.longtime.horizon = 100;
        spec
    }

    #[test]
    fn check_ids_round_trip() {
        for c in CheckId::ALL {
            assert_eq!(c.as_str().parse::<CheckId>().unwrap(), c);
        }
        assert!("nope".parse::<CheckId>().is_err());
    }

    #[test]
    fn exact_checks_pass() {
        let spec = quick(1);
        let report = run_checks(
            &spec,
            &[CheckId::FlowConsistency, CheckId::Longtime, CheckId::BoundDominance],
        )
        .unwrap();
        let failed: Vec<_> = report.failures().collect();
        assert!(failed.is_empty(), "{failed:#?}");
    }

    #[test]
    fn corrupted_estimators_fail_every_check() {
        let mut spec = quick(2);
        spec.corruption = Some(0.1);
        let report = run_all(&spec).unwrap();
        for s in &report.checks {
            assert!(!s.passed, "{} passed under corruption", s.check);
        }
    }

    #[test]
    fn regime_mismatch_is_an_error() {
        let mut spec = quick(3);
        spec.scenarios[1].regime = Some(Regime::Supercritical);
        spec.params.longtime.scenarios = vec!["s-sub".into()];
        assert!(matches!(
            run_checks(&spec, &[CheckId::Longtime]),
            Err(Error::Regime(_))
        ));
    }

    #[test]
    fn invalid_grids_are_rejected() {
        let mut spec = quick(4);
        spec.params.lr_rate.particles = vec![100, 200, 400];
        assert!(run_checks(&spec, &[CheckId::LrRate]).is_err());
        let mut spec = quick(4);
        spec.params.unbiasedness.runs = 50;
        assert!(run_checks(&spec, &[CheckId::Unbiasedness]).is_err());
        let mut spec = quick(4);
        spec.params.variance_bound.particles = vec![1001, 101];
        assert!(run_checks(&spec, &[CheckId::VarianceBound]).is_err());
    }

    #[test]
    fn reports_are_deterministic() {
        let spec = quick(5);
        let a = run_checks(&spec, &[CheckId::Unbiasedness, CheckId::Clt]).unwrap();
        let b = run_checks(&spec, &[CheckId::Unbiasedness, CheckId::Clt]).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.raw, b.raw);
    }
}
