//! The four subcommands. Every command writes its files into one output
//! directory and never touches a file twice.

use std::fs::{self, File};
use std::path::Path;

use anyhow::{bail, Context, Result};
use branching_flow::birth::{tilde_samples, BirthReference};
use branching_flow::exact::{
    b_constants_with, fixed_point_eta, limiting_measures, mixing_certificate, run_flow,
    Semigroups,
};
use branching_flow::harness::{run_checks, test_function, CheckId, ExperimentReport, ExperimentSpec};
use branching_flow::particles::{
    fluctuations, run_many, run_particles_with, ParticleConfig,
};
use branching_flow::rng::derive_seed;
use branching_flow::sim::{simulate_run, FiniteScenario, PopulationModel, SimOptions};
use branching_flow::stats::Summary;
use branching_flow::{BranchingModel, Function, ProbabilityMeasure, Regime};

use crate::config::{Model, RunConfig};

type Writer = csv::Writer<File>;

fn create(dir: &Path, name: &str) -> Result<Writer> {
    let path = dir.join(name);
    csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))
}

/// Shortest representation that parses back to the same `f64`.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn finite(cfg: &RunConfig, command: &str) -> Result<branching_flow::harness::Scenario> {
    match cfg.model()? {
        Model::Finite(s) => Ok(s),
        Model::Gaussian(_) => bail!("`{command}` needs a finite scenario"),
    }
}

fn functions(model: &BranchingModel, names: &[String]) -> Result<Vec<(String, Function)>> {
    let space = model.space(0)?;
    names
        .iter()
        .map(|n| Ok((n.clone(), test_function(space, n)?)))
        .collect()
}

pub fn exact(cfg: &RunConfig, out: &Path) -> Result<()> {
    let scenario = finite(cfg, "exact")?;
    let model = &scenario.model;
    let h = cfg.engine.horizon;
    let flow = run_flow(model, h)?;
    let labels = model.space(0)?.labels().to_vec();

    let mut w = create(out, "flow.csv")?;
    let mut header = vec!["step".to_string()];
    header.extend(labels.iter().map(|l| format!("gamma_{l}")));
    header.push("mass".into());
    header.extend(labels.iter().map(|l| format!("eta_{l}")));
    w.write_record(&header)?;
    for n in 0..=h {
        let mut row = vec![n.to_string()];
        row.extend(flow.gamma(n).weights().iter().map(|&v| num(v)));
        row.push(num(flow.mass(n)));
        match flow.try_eta(n) {
            Some(eta) => row.extend(eta.weights().iter().map(|&v| num(v))),
            None => row.extend(labels.iter().map(|_| String::new())),
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    let sg = Semigroups::new(model);
    let mut w = create(out, "semigroup.csv")?;
    w.write_record(["p", "n", "q_pn", "beta_Ppn", "c_pn", "b_pn"])?;
    for n in 0..=h {
        let b = b_constants_with(&sg, n)?;
        for p in 0..=n {
            w.write_record([
                p.to_string(),
                n.to_string(),
                num(sg.q_ratio(p, n)?),
                num(sg.beta(p, n)?),
                num(sg.c(p, n)?),
                num(b.terms[p]),
            ])?;
        }
    }
    w.flush()?;

    let mut w = create(out, "regime.csv")?;
    w.write_record(["quantity", "value"])?;
    let (g_lo, g_hi) = model.g_bounds(0)?;
    let regime = model.regime();
    if let (Some(declared), Some(found)) = (scenario.regime, regime) {
        if declared != found {
            bail!("scenario declared {} but its potential gives {}", declared.as_str(), found.as_str());
        }
    }
    w.write_record(["regime", regime.map_or("none", |r| r.as_str())])?;
    w.write_record(["g_minus", &num(g_lo)])?;
    w.write_record(["g_plus", &num(g_hi)])?;
    if let Ok(cert) = mixing_certificate(model, 1) {
        w.write_record(["epsilon_1", &num(cert.epsilon)])?;
        w.write_record(["delta_1", &num(cert.delta_k)])?;
    }
    match regime {
        Some(Regime::UnitPotential) => {
            w.write_record(["mass_slope", &num(model.immigration(1)?.mass())])?;
            let fp = fixed_point_eta(model)?;
            for (l, v) in labels.iter().zip(fp.eta.weights()) {
                w.write_record([format!("eta_inf_{l}"), num(*v)])?;
            }
        }
        Some(Regime::Subcritical) => {
            let lim = limiting_measures(model)?;
            w.write_record(["gamma_inf_mass", &num(lim.gamma.mass())])?;
            for (l, v) in labels.iter().zip(lim.gamma.weights()) {
                w.write_record([format!("gamma_inf_{l}"), num(*v)])?;
            }
        }
        Some(Regime::Supercritical) => {
            let fp = fixed_point_eta(model)?;
            w.write_record(["lyapunov", &num(fp.lyapunov)])?;
            for (l, v) in labels.iter().zip(fp.eta.weights()) {
                w.write_record([format!("eta_inf_{l}"), num(*v)])?;
            }
        }
        _ => {}
    }
    w.flush()?;
    Ok(())
}

fn write_trajectories<P: PopulationModel>(
    model: &P,
    cfg: &RunConfig,
    seed: u64,
    w: &mut Writer,
    mut per_step: impl FnMut(usize, &[P::State]),
) -> Result<()> {
    let options = SimOptions {
        max_population: cfg.engine.max_population,
    };
    let mut header = vec!["replicate".to_string(), "step".into(), "target_id".into()];
    header.extend(model.state_header());
    w.write_record(&header)?;
    for r in 0..cfg.engine.replicates {
        let traj = simulate_run(model, cfg.engine.horizon, seed, r as u64, options)?;
        for (n, pop) in traj.iter().enumerate() {
            for (i, x) in pop.iter().enumerate() {
                let mut row = vec![r.to_string(), n.to_string(), i.to_string()];
                row.extend(model.state_fields(x));
                w.write_record(&row)?;
            }
            per_step(n, pop);
        }
    }
    w.flush()?;
    Ok(())
}

pub fn simulate(cfg: &RunConfig, seed: u64, out: &Path) -> Result<()> {
    let h = cfg.engine.horizon;
    let reps = cfg.engine.replicates;
    let mut traj = create(out, "trajectory.csv")?;
    let mut w = create(out, "intensity.csv")?;
    w.write_record(["step", "state", "mean_count", "se", "exact"])?;
    match cfg.model()? {
        Model::Finite(s) => {
            let d = s.model.space(0)?.size();
            let flow = run_flow(&s.model, h)?;
            let scenario = FiniteScenario::new(s.model.clone())?;
            let mut counts = vec![vec![Vec::with_capacity(reps); d]; h + 1];
            write_trajectories(&scenario, cfg, seed, &mut traj, |n, pop| {
                let mut c = vec![0.0; d];
                for &x in pop {
                    c[x] += 1.0;
                }
                for x in 0..d {
                    counts[n][x].push(c[x]);
                }
            })?;
            let labels = s.model.space(0)?.labels().to_vec();
            for n in 0..=h {
                for x in 0..d {
                    let st = Summary::of(&counts[n][x]);
                    w.write_record([
                        n.to_string(),
                        labels[x].clone(),
                        num(st.mean),
                        num(st.se),
                        num(flow.gamma(n).weights()[x]),
                    ])?;
                }
            }
        }
        Model::Gaussian(g) => {
            let mut counts = vec![Vec::with_capacity(reps); h + 1];
            write_trajectories(&g, cfg, seed, &mut traj, |n, pop| {
                counts[n].push(pop.len() as f64)
            })?;
            let expected = g.expected_counts(h);
            for n in 0..=h {
                let st = Summary::of(&counts[n]);
                w.write_record([
                    n.to_string(),
                    "all".into(),
                    num(st.mean),
                    num(st.se),
                    num(expected[n]),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

struct Aggregate {
    w: Writer,
}

impl Aggregate {
    fn new(out: &Path) -> Result<Self> {
        let mut w = create(out, "aggregate.csv")?;
        w.write_record(["N", "step", "quantity", "mean", "rmse", "oracle", "oracle_kind"])?;
        Ok(Self { w })
    }

    fn row(&mut self, n: usize, step: usize, quantity: &str, xs: &[f64], oracle: Option<f64>) -> Result<()> {
        let mean = Summary::of(xs).mean;
        let (rmse, oracle, kind) = match oracle {
            Some(o) => {
                let mse = xs.iter().map(|x| (x - o).powi(2)).sum::<f64>() / xs.len() as f64;
                (num(mse.sqrt()), num(o), "exact")
            }
            None => (String::new(), String::new(), "none"),
        };
        self.w.write_record([
            n.to_string(),
            step.to_string(),
            quantity.to_string(),
            num(mean),
            rmse,
            oracle,
            kind.to_string(),
        ])?;
        Ok(())
    }
}

pub fn particles(cfg: &RunConfig, seed: u64, out: &Path) -> Result<()> {
    let e = &cfg.engine;
    let mut runs_csv = create(out, "runs.csv")?;
    let mut agg = Aggregate::new(out)?;
    match cfg.model()? {
        Model::Finite(s) => {
            let model = &s.model;
            let fs = functions(model, &e.functions)?;
            let just_fs: Vec<Function> = fs.iter().map(|(_, f)| f.clone()).collect();
            let flow = run_flow(model, e.horizon)?;
            let mut header: Vec<String> = ["N", "run_id", "step", "mass"].map(String::from).to_vec();
            header.extend(fs.iter().map(|(n, _)| format!("eta_{n}")));
            header.extend(fs.iter().map(|(n, _)| format!("w_{n}")));
            runs_csv.write_record(&header)?;
            for &np in &e.particles {
                let config = ParticleConfig {
                    particles: np,
                    horizon: e.horizon,
                    scheme: e.scheme,
                };
                let runs = run_many(model, &config, e.replicates, derive_seed(seed, &format!("particles/N={np}")))?;
                for (r, run) in runs.iter().enumerate() {
                    let fl = fluctuations(model, run, &flow, &just_fs, np)?;
                    for n in 0..=e.horizon {
                        let mut row = vec![np.to_string(), r.to_string(), n.to_string(), num(run.mass(n))];
                        for f in &just_fs {
                            row.push(num(run.eta(n).integrate(f)?));
                        }
                        row.extend(fl.w[n].iter().map(|&v| num(v)));
                        runs_csv.write_record(&row)?;
                    }
                }
                for n in 0..=e.horizon {
                    let masses: Vec<f64> = runs.iter().map(|r| r.mass(n)).collect();
                    agg.row(np, n, "mass", &masses, Some(flow.mass(n)))?;
                    for (name, f) in &fs {
                        let xs: Vec<f64> =
                            runs.iter().map(|r| r.eta(n).integrate(f)).collect::<Result<_, _>>()?;
                        let exact = flow.try_eta(n).map(|eta| eta.integrate(f)).transpose()?;
                        agg.row(np, n, &format!("eta_{name}"), &xs, exact)?;
                    }
                }
            }
            if let Some(births) = e.births {
                write_births(model, &fs, births, e.replicates, e.horizon, seed, out)?;
            }
        }
        Model::Gaussian(g) => {
            runs_csv.write_record(["N", "run_id", "step", "mass", "mean_px", "mean_py"])?;
            let expected = g.expected_counts(e.horizon);
            for &np in &e.particles {
                let config = ParticleConfig {
                    particles: np,
                    horizon: e.horizon,
                    scheme: e.scheme,
                };
                let run_seed = derive_seed(seed, &format!("particles/N={np}"));
                let mut per_step = vec![(Vec::new(), Vec::new(), Vec::new()); e.horizon + 1];
                for r in 0..e.replicates {
                    let mut rows = Vec::new();
                    run_particles_with(&g, &config, run_seed, r as u64, |n, mass, states| {
                        let k = states.len() as f64;
                        let px = states.iter().map(|x| x[0]).sum::<f64>() / k;
                        let py = states.iter().map(|x| x[1]).sum::<f64>() / k;
                        rows.push((n, mass, px, py));
                    })?;
                    for (n, mass, px, py) in rows {
                        runs_csv.write_record([
                            np.to_string(),
                            r.to_string(),
                            n.to_string(),
                            num(mass),
                            num(px),
                            num(py),
                        ])?;
                        per_step[n].0.push(mass);
                        per_step[n].1.push(px);
                        per_step[n].2.push(py);
                    }
                }
                for (n, (m, px, py)) in per_step.iter().enumerate() {
                    agg.row(np, n, "mass", m, Some(expected[n]))?;
                    agg.row(np, n, "mean_px", px, None)?;
                    agg.row(np, n, "mean_py", py, None)?;
                }
            }
        }
    }
    runs_csv.flush()?;
    agg.w.flush()?;
    Ok(())
}

/// `tilde gamma_n(f)` per run, with births drawn from the uniform law.
fn write_births(
    model: &BranchingModel,
    fs: &[(String, Function)],
    samples: usize,
    runs: usize,
    horizon: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let lambda = ProbabilityMeasure::uniform(model.space(0)?);
    let reference = BirthReference::constant(model, &lambda, horizon)?;
    let seed = derive_seed(seed, "births");
    let columns: Vec<Vec<Vec<f64>>> = fs
        .iter()
        .map(|(_, f)| tilde_samples(model, &reference, samples, runs, seed, f))
        .collect::<Result<_, _>>()?;
    let mut w = create(out, "births.csv")?;
    let mut header: Vec<String> = ["N_births", "run_id", "step"].map(String::from).to_vec();
    header.extend(fs.iter().map(|(n, _)| format!("tilde_gamma_{n}")));
    w.write_record(&header)?;
    for r in 0..runs {
        for n in 0..=horizon {
            let mut row = vec![samples.to_string(), r.to_string(), n.to_string()];
            row.extend(columns.iter().map(|c| num(c[r][n])));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Parses check ids, rejecting unknown ones.
pub fn parse_checks(ids: &[String]) -> Result<Vec<CheckId>> {
    ids.iter()
        .map(|s| s.trim().parse::<CheckId>().map_err(anyhow::Error::from))
        .collect()
}

pub fn verify(
    cfg: &RunConfig,
    seed: u64,
    checks: &[CheckId],
    corruption: Option<f64>,
    out: &Path,
) -> Result<ExperimentReport> {
    let mut spec = ExperimentSpec::new(seed);
    spec.params = cfg.verify.params.clone();
    spec.corruption = corruption;
    if let Model::Finite(s) = cfg.model()? {
        match spec.scenarios.iter_mut().find(|x| x.name == s.name) {
            Some(existing) => {
                if cfg.scenario.builtin.as_deref() != Some(s.name.as_str()) {
                    bail!("scenario name {:?} is reserved for a built-in", s.name);
                }
                existing.regime = s.regime.or(existing.regime);
            }
            None => spec.scenarios.push(s),
        }
    }
    let report = run_checks(&spec, checks)?;

    let json = serde_json::to_string_pretty(&report)? + "\n";
    fs::write(out.join("report.json"), json).context("writing report.json")?;
    let mut w = create(out, "raw.csv")?;
    w.write_record(["check", "id", "run", "value"])?;
    for r in &report.raw {
        w.write_record([r.check.as_str(), &r.id, &r.run.to_string(), &num(r.value)])?;
    }
    w.flush()?;
    Ok(report)
}
