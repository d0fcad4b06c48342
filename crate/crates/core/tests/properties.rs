use branching_flow::exact::{alpha_star, mass_envelope, route_agreement, run_flow};
use branching_flow::measure::{apply_kernel, boltzmann_gibbs, compose, dobrushin, transport, tv_distance};
use branching_flow::particles::{transport_identity_residual, SelectionScheme};
use branching_flow::{
    BranchingModel, DiscreteMeasure, MarkovKernel, Potential, ProbabilityMeasure, StateSpace,
};
use proptest::prelude::*;

const TOL: f64 = 1e-12;

fn weights(d: usize, allow_zero: bool) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![3 => 0.01f64..1.0, 1 => Just(0.0)], d).prop_map(
        move |mut w| {
            if !allow_zero || w.iter().all(|v| *v == 0.0) {
                w.iter_mut().for_each(|v| *v += 0.05);
            }
            let s: f64 = w.iter().sum();
            w.into_iter().map(|v| v / s).collect()
        },
    )
}

fn kernel(d: usize) -> impl Strategy<Value = MarkovKernel> {
    prop::collection::vec(weights(d, true), d)
        .prop_map(move |rows| MarkovKernel::square(&StateSpace::indexed(d), rows).unwrap())
}

fn law(d: usize) -> impl Strategy<Value = ProbabilityMeasure> {
    weights(d, true).prop_map(move |w| ProbabilityMeasure::new(&StateSpace::indexed(d), w).unwrap())
}

fn potential(d: usize) -> impl Strategy<Value = Potential> {
    prop::collection::vec(0.1f64..3.0, d)
        .prop_map(move |g| Potential::new(&StateSpace::indexed(d), g).unwrap())
}

fn model(d: usize) -> impl Strategy<Value = BranchingModel> {
    (potential(d), kernel(d), prop::collection::vec(0.0f64..1.0, d)).prop_map(move |(g, m, mu)| {
        let mu = DiscreteMeasure::new(&StateSpace::indexed(d), mu.iter().map(|v| v + 0.01).collect())
            .unwrap();
        BranchingModel::homogeneous(g, m, mu).unwrap()
    })
}

proptest! {
    #[test]
    fn dobrushin_is_submultiplicative((a, b) in (2usize..6).prop_flat_map(|d| (kernel(d), kernel(d)))) {
        let ab = MarkovKernel::from_weighted(compose(&a, &b).unwrap()).unwrap();
        prop_assert!(dobrushin(&ab) <= dobrushin(&a) * dobrushin(&b) + TOL);
    }

    #[test]
    fn markov_kernels_contract_total_variation(
        (m, mu, nu) in (2usize..6).prop_flat_map(|d| (kernel(d), law(d), law(d)))
    ) {
        let lhs = tv_distance(&transport(&mu, &m).unwrap(), &transport(&nu, &m).unwrap()).unwrap();
        prop_assert!(lhs <= dobrushin(&m) * tv_distance(&mu, &nu).unwrap() + TOL);
    }

    #[test]
    fn boltzmann_gibbs_keeps_support_and_mass(
        (g, eta) in (2usize..6).prop_flat_map(|d| (potential(d), law(d)))
    ) {
        let psi = boltzmann_gibbs(&g, &eta).unwrap();
        prop_assert!((psi.weights().iter().sum::<f64>() - 1.0).abs() <= TOL);
        for (p, e) in psi.weights().iter().zip(eta.weights()) {
            prop_assert_eq!(*p > 0.0, *e > 0.0);
        }
    }

    #[test]
    fn selection_kernels_transport_to_boltzmann_gibbs(
        (g, eta) in (2usize..6).prop_flat_map(|d| (potential(d), law(d))),
        shift in 0.0f64..0.99,
    ) {
        let schemes = [
            SelectionScheme::FullResample,
            SelectionScheme::ShiftedResample { epsilon: shift * g.lower() },
            SelectionScheme::AcceptReject { epsilon: None },
            SelectionScheme::AcceptReject { epsilon: Some(shift / g.upper()) },
        ];
        for scheme in schemes {
            prop_assert!(transport_identity_residual(scheme, &g, &eta).unwrap() <= TOL);
        }
    }

    #[test]
    fn markov_kernels_preserve_mass(
        (m, w) in (2usize..6).prop_flat_map(|d| (kernel(d), prop::collection::vec(0.0f64..10.0, d)))
    ) {
        let mu = DiscreteMeasure::new(m.source(), w).unwrap();
        let pushed = apply_kernel(&mu, &m).unwrap();
        prop_assert!((pushed.mass() - mu.mass()).abs() <= TOL * mu.mass().max(1.0));
    }

    #[test]
    fn flow_routes_agree_and_stay_in_the_envelope(model in (2usize..5).prop_flat_map(model)) {
        let agree = route_agreement(&model, 30).unwrap();
        prop_assert!(agree.max() <= TOL, "{agree:?}");
        let flow = run_flow(&model, 30).unwrap();
        for n in 0..=30 {
            let (lo, hi) = mass_envelope(&model, n).unwrap();
            let m = flow.mass(n);
            prop_assert!(m >= lo * (1.0 - TOL) && m <= hi * (1.0 + TOL));
        }
    }

    #[test]
    fn alpha_never_exceeds_its_bound(
        (model, eta) in (2usize..5).prop_flat_map(|d| (model(d), law(d))),
        mass in 0.0f64..20.0,
        p in 0usize..8,
        gap in 0usize..8,
    ) {
        let a = alpha_star(&model, p, p + gap, mass, &eta).unwrap();
        prop_assert!(a.exact <= a.bound + TOL);
    }
}
