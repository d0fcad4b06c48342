//! Reference two-state scenarios.
//!
//! All share `E = {0, 1}`, `M = [[0.7, 0.3], [0.4, 0.6]]` and
//! `mu = (0.3, 0.2)` with `gamma_0 = mu`; they differ in the potential.

use crate::measure::{DiscreteMeasure, MarkovKernel, Potential, StateSpace};
use crate::model::BranchingModel;

pub const MOTION: [[f64; 2]; 2] = [[0.7, 0.3], [0.4, 0.6]];
pub const IMMIGRATION: [f64; 2] = [0.3, 0.2];

pub fn two_state(potential: [f64; 2]) -> BranchingModel {
    let s = StateSpace::new(["0", "1"]).expect("valid labels");
    BranchingModel::homogeneous(
        Potential::new(&s, potential.to_vec()).expect("positive potential"),
        MarkovKernel::square(&s, MOTION.iter().map(|r| r.to_vec()).collect()).expect("stochastic"),
        DiscreteMeasure::new(&s, IMMIGRATION.to_vec()).expect("nonnegative"),
    )
    .expect("consistent spaces")
}

/// `G = 1`.
pub fn s_one() -> BranchingModel {
    two_state([1.0, 1.0])
}

/// `G = 0.5`.
pub fn s_sub() -> BranchingModel {
    two_state([0.5, 0.5])
}

/// `G = 1.25`.
pub fn s_sup() -> BranchingModel {
    two_state([1.25, 1.25])
}

/// `G = (0.6, 1.2)`: state-dependent potential, so selection matters and
/// `q_{p,n} > 1`.
pub fn s_mix() -> BranchingModel {
    two_state([0.6, 1.2])
}

/// `G = (1.1, 1.5)`: supercritical with a state-dependent potential.
pub fn s_grow() -> BranchingModel {
    two_state([1.1, 1.5])
}

/// Same dynamics with no immigration after time 0 and
/// `gamma_0 = initial_mass * mu_bar`.
pub fn without_immigration(model: &BranchingModel, initial_mass: f64) -> BranchingModel {
    let mu = model.initial();
    let law = mu.normalized().expect("non-zero initial intensity");
    BranchingModel::homogeneous_with_initial(
        model.potential(0).expect("time 0").clone(),
        model.transition(0).expect("time 0").clone(),
        DiscreteMeasure::zero(mu.space()),
        law.as_measure().scaled(initial_mass).expect("nonnegative mass"),
    )
    .expect("consistent spaces")
}

pub const NAMES: [&str; 5] = ["s-one", "s-sub", "s-sup", "s-mix", "s-grow"];

/// Looks up a built-in scenario by name.
pub fn by_name(name: &str) -> Option<BranchingModel> {
    match name {
        "s-one" => Some(s_one()),
        "s-sub" => Some(s_sub()),
        "s-sup" => Some(s_sup()),
        "s-mix" => Some(s_mix()),
        "s-grow" => Some(s_grow()),
        _ => None,
    }
}
