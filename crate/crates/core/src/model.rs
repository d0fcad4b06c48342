//! Finite-state branching models `(E_n, G_n, M_{n+1}, mu_n)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{
    apply_kernel, boltzmann_gibbs, compose, transport, DiscreteMeasure, Function, MarkovKernel,
    Potential, ProbabilityMeasure, StateSpace, WeightedKernel,
};

/// The three long-time behaviours of homogeneous models, plus the
/// continuous Gaussian example which is tagged separately.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `G = 1`: linear mass growth.
    UnitPotential,
    /// `sup G < 1`: bounded mass.
    Subcritical,
    /// `inf G > 1`: exponential mass growth.
    Supercritical,
    Gaussian,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::UnitPotential => "unit-potential",
            Regime::Subcritical => "subcritical",
            Regime::Supercritical => "supercritical",
            Regime::Gaussian => "gaussian",
        }
    }
}

#[derive(Clone, Debug)]
enum Schedule {
    Homogeneous {
        potential: Potential,
        kernel: MarkovKernel,
        immigration: DiscreteMeasure,
        initial: DiscreteMeasure,
    },
    Varying {
        potentials: Vec<Potential>,
        kernels: Vec<MarkovKernel>,
        immigration: Vec<DiscreteMeasure>,
    },
}

/// Potentials `G_n`, Markov transitions `M_{n+1}: E_n -> E_{n+1}` and
/// immigration intensities `mu_n`, with `gamma_0 = mu_0`.
///
/// Homogeneous models have no horizon. Time-varying models are defined up
/// to a finite horizon `H`: `G_n` and `M_{n+1}` for `n < H`, `mu_n` for
/// `n <= H`.
#[derive(Clone, Debug)]
pub struct BranchingModel {
    schedule: Schedule,
}

impl BranchingModel {
    /// Homogeneous model with `mu_0 = mu`.
    pub fn homogeneous(
        potential: Potential,
        kernel: MarkovKernel,
        immigration: DiscreteMeasure,
    ) -> Result<Self> {
        let initial = immigration.clone();
        Self::homogeneous_with_initial(potential, kernel, immigration, initial)
    }

    /// Homogeneous dynamics started from `gamma_0 = mu_0 = initial`.
    pub fn homogeneous_with_initial(
        potential: Potential,
        kernel: MarkovKernel,
        immigration: DiscreteMeasure,
        initial: DiscreteMeasure,
    ) -> Result<Self> {
        let space = potential.space();
        if kernel.source() != space || kernel.target() != space {
            return Err(Error::SpaceMismatch("homogeneous kernel"));
        }
        if immigration.space() != space || initial.space() != space {
            return Err(Error::SpaceMismatch("homogeneous immigration"));
        }
        Ok(Self {
            schedule: Schedule::Homogeneous {
                potential,
                kernel,
                immigration,
                initial,
            },
        })
    }

    pub fn time_varying(
        potentials: Vec<Potential>,
        kernels: Vec<MarkovKernel>,
        immigration: Vec<DiscreteMeasure>,
    ) -> Result<Self> {
        let h = potentials.len();
        if kernels.len() != h || immigration.len() != h + 1 {
            return Err(Error::InvalidArgument(format!(
                "horizon {h} needs {h} kernels and {} immigration measures",
                h + 1
            )));
        }
        for n in 0..h {
            let space = potentials[n].space();
            if immigration[n].space() != space || kernels[n].source() != space {
                return Err(Error::SpaceMismatch("time-varying model"));
            }
            if kernels[n].target() != immigration[n + 1].space() {
                return Err(Error::SpaceMismatch("time-varying kernel target"));
            }
        }
        Ok(Self {
            schedule: Schedule::Varying {
                potentials,
                kernels,
                immigration,
            },
        })
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(self.schedule, Schedule::Homogeneous { .. })
    }

    /// `None` for homogeneous models.
    pub fn horizon(&self) -> Option<usize> {
        match &self.schedule {
            Schedule::Homogeneous { .. } => None,
            Schedule::Varying { potentials, .. } => Some(potentials.len()),
        }
    }

    /// Fails unless `n <= horizon`.
    pub fn check_time(&self, n: usize) -> Result<()> {
        match self.horizon() {
            Some(h) if n > h => Err(Error::IndexOutOfRange { index: n, horizon: h }),
            _ => Ok(()),
        }
    }

    fn check_step(&self, n: usize) -> Result<()> {
        match self.horizon() {
            Some(h) if n >= h => Err(Error::IndexOutOfRange { index: n, horizon: h }),
            _ => Ok(()),
        }
    }

    pub fn space(&self, n: usize) -> Result<&StateSpace> {
        Ok(self.immigration(n)?.space())
    }

    /// `G_n`.
    pub fn potential(&self, n: usize) -> Result<&Potential> {
        self.check_step(n)?;
        Ok(match &self.schedule {
            Schedule::Homogeneous { potential, .. } => potential,
            Schedule::Varying { potentials, .. } => &potentials[n],
        })
    }

    /// `M_{n+1}`, the motion applied after step `n`.
    pub fn transition(&self, n: usize) -> Result<&MarkovKernel> {
        self.check_step(n)?;
        Ok(match &self.schedule {
            Schedule::Homogeneous { kernel, .. } => kernel,
            Schedule::Varying { kernels, .. } => &kernels[n],
        })
    }

    /// `mu_n`; `mu_0` is the initial intensity.
    pub fn immigration(&self, n: usize) -> Result<&DiscreteMeasure> {
        self.check_time(n)?;
        Ok(match &self.schedule {
            Schedule::Homogeneous {
                immigration,
                initial,
                ..
            } => {
                if n == 0 {
                    initial
                } else {
                    immigration
                }
            }
            Schedule::Varying { immigration, .. } => &immigration[n],
        })
    }

    /// `mu_n / mu_n(1)`, or `None` when `mu_n = 0`.
    pub fn immigration_law(&self, n: usize) -> Result<Option<ProbabilityMeasure>> {
        let mu = self.immigration(n)?;
        if mu.mass() > 0.0 {
            Ok(Some(mu.normalized()?))
        } else {
            Ok(None)
        }
    }

    /// `gamma_0 = mu_0`.
    pub fn initial(&self) -> &DiscreteMeasure {
        self.immigration(0).expect("time 0 always exists")
    }

    /// `Q_{n+1}(x, y) = G_n(x) M_{n+1}(x, y)`.
    pub fn q_kernel(&self, n: usize) -> Result<WeightedKernel> {
        self.transition(n)?
            .as_weighted()
            .scale_rows(self.potential(n)?.as_function())
    }

    /// `(g_-(n), g_+(n))`: extreme values of `G_p` over `p < n`; `(1, 1)`
    /// for `n = 0`, where no potential enters.
    pub fn g_bounds(&self, n: usize) -> Result<(f64, f64)> {
        if n == 0 {
            return Ok((1.0, 1.0));
        }
        self.check_time(n)?;
        if let Schedule::Homogeneous { potential, .. } = &self.schedule {
            return Ok((potential.lower(), potential.upper()));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in 0..n {
            let g = self.potential(p)?;
            lo = lo.min(g.lower());
            hi = hi.max(g.upper());
        }
        Ok((lo, hi))
    }

    /// Regime of a homogeneous model, if it falls in one of the three
    /// scenarios.
    pub fn regime(&self) -> Option<Regime> {
        let Schedule::Homogeneous { potential, .. } = &self.schedule else {
            return None;
        };
        let (lo, hi) = (potential.lower(), potential.upper());
        if lo == 1.0 && hi == 1.0 {
            Some(Regime::UnitPotential)
        } else if hi < 1.0 {
            Some(Regime::Subcritical)
        } else if lo > 1.0 {
            Some(Regime::Supercritical)
        } else {
            None
        }
    }

    /// `alpha_n(m, eta) = m eta(G_n) / (m eta(G_n) + mu_{n+1}(1))`.
    pub fn alpha(&self, n: usize, mass: f64, eta: &ProbabilityMeasure) -> Result<f64> {
        let weighted = mass * eta.integrate(self.potential(n)?.as_function())?;
        let denom = weighted + self.immigration(n + 1)?.mass();
        if denom <= 0.0 {
            return Err(Error::DegenerateMutation(n));
        }
        Ok(weighted / denom)
    }

    /// `M_{n+1,(m,eta)} = alpha M_{n+1} + (1 - alpha) mu_bar_{n+1}`.
    pub fn mutation_kernel(
        &self,
        n: usize,
        mass: f64,
        eta: &ProbabilityMeasure,
    ) -> Result<MarkovKernel> {
        let alpha = self.alpha(n, mass, eta)?;
        let m = self.transition(n)?;
        match self.immigration_law(n + 1)? {
            Some(mu_bar) => m.mix_with(alpha, &mu_bar),
            None => Ok(m.clone()),
        }
    }

    /// One step of the pair flow:
    /// `Gamma_{n+1}(m, eta) = (m eta(G_n) + mu_{n+1}(1), Psi_{G_n}(eta) M_{n+1,(m,eta)})`.
    pub fn gamma_step(
        &self,
        n: usize,
        mass: f64,
        eta: &ProbabilityMeasure,
    ) -> Result<(f64, ProbabilityMeasure)> {
        let g = self.potential(n)?;
        let next_mass = mass * eta.integrate(g.as_function())? + self.immigration(n + 1)?.mass();
        let selected = boltzmann_gibbs(g, eta)?;
        let next = transport(&selected, &self.mutation_kernel(n, mass, eta)?)?;
        Ok((next_mass, next))
    }

    /// Helper for `mu Q_{n+1}`.
    pub fn push(&self, gamma: &DiscreteMeasure, n: usize) -> Result<DiscreteMeasure> {
        apply_kernel(gamma, &self.q_kernel(n)?)
    }

    /// `Q_{n+1}(f)` as a function on `E_n`.
    pub fn q_apply(&self, n: usize, f: &Function) -> Result<Function> {
        self.q_kernel(n)?.apply_fn(f)
    }

    /// `Q_{p,n}` by direct composition (no caching).
    pub fn q_product(&self, p: usize, n: usize) -> Result<WeightedKernel> {
        if p > n {
            return Err(Error::InvalidArgument(format!("p = {p} > n = {n}")));
        }
        self.check_time(n)?;
        let mut acc = WeightedKernel::identity(self.space(p)?);
        for q in p..n {
            acc = compose(&acc, &self.q_kernel(q)?)?;
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::EXACT_TOL;

    fn model(g: f64) -> BranchingModel {
        let s = StateSpace::indexed(2);
        BranchingModel::homogeneous(
            Potential::constant(&s, g).unwrap(),
            MarkovKernel::square(&s, vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap(),
            DiscreteMeasure::new(&s, vec![0.3, 0.2]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn q_kernel_examples() {
        let q = model(1.0).q_kernel(0).unwrap();
        assert_eq!(&q, model(1.0).transition(0).unwrap().as_weighted());

        let q = model(0.5).q_kernel(3).unwrap();
        let expect = [[0.35, 0.15], [0.2, 0.3]];
        for x in 0..2 {
            for y in 0..2 {
                assert!((q.entry(x, y) - expect[x][y]).abs() < EXACT_TOL);
            }
        }
        for s in q.row_sums() {
            assert!((s - 0.5).abs() < EXACT_TOL);
        }
    }

    #[test]
    fn q_kernel_out_of_range() {
        let s = StateSpace::indexed(1);
        let m = BranchingModel::time_varying(
            vec![Potential::constant(&s, 1.0).unwrap()],
            vec![MarkovKernel::identity(&s)],
            vec![DiscreteMeasure::zero(&s), DiscreteMeasure::zero(&s)],
        )
        .unwrap();
        assert!(m.q_kernel(0).is_ok());
        assert_eq!(
            m.q_kernel(1),
            Err(Error::IndexOutOfRange { index: 1, horizon: 1 })
        );
    }

    #[test]
    fn regimes() {
        assert_eq!(model(1.0).regime(), Some(Regime::UnitPotential));
        assert_eq!(model(0.5).regime(), Some(Regime::Subcritical));
        assert_eq!(model(1.25).regime(), Some(Regime::Supercritical));
    }

    #[test]
    fn alpha_hand_value() {
        let m = model(1.0);
        let eta = ProbabilityMeasure::uniform(m.space(0).unwrap());
        let a = m.alpha(0, 1.0, &eta).unwrap();
        assert!((a - 2.0 / 3.0).abs() < EXACT_TOL);
    }
}
