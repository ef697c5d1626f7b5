use formda::geometry::{prox, FeasibleSet, ProxTerm};
use formda::schedules::ScheduleConfig;
use proptest::prelude::*;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn sets() -> impl Strategy<Value = FeasibleSet> {
    (1usize..6).prop_flat_map(|d| {
        prop_oneof![
            (prop::collection::vec(-3.0..0.0f64, d), prop::collection::vec(0.0..3.0f64, d))
                .prop_map(|(lo, hi)| FeasibleSet::boxed(lo, hi).unwrap()),
            (prop::collection::vec(-2.0..2.0f64, d), 0.1..3.0f64).prop_map(|(c, r)| FeasibleSet::ball(c, r).unwrap()),
            Just(FeasibleSet::simplex(d).unwrap()),
        ]
    })
}

fn set_and_points() -> impl Strategy<Value = (FeasibleSet, Vec<f64>, Vec<f64>)> {
    sets().prop_flat_map(|s| {
        let d = s.dim();
        (Just(s), prop::collection::vec(-10.0..10.0f64, d), prop::collection::vec(-10.0..10.0f64, d))
    })
}

proptest! {
    #[test]
    fn projection_is_feasible_and_idempotent((set, p, _) in set_and_points()) {
        let q = set.project(&p).unwrap();
        prop_assert!(set.contains(&q, 1e-9));
        let qq = set.project(&q).unwrap();
        prop_assert!(dist(&q, &qq) <= 1e-12 * (1.0 + norm(&q)));
    }

    #[test]
    fn projection_is_firmly_nonexpansive((set, p, r) in set_and_points()) {
        let (a, b) = (set.project(&p).unwrap(), set.project(&r).unwrap());
        let inner: f64 = a.iter().zip(&b).zip(p.iter().zip(&r)).map(|((x, y), (u, v))| (x - y) * (u - v)).sum();
        let d2 = dist(&a, &b).powi(2);
        prop_assert!(d2 <= inner + 1e-9 * (1.0 + inner.abs()));
        prop_assert!(dist(&a, &b) <= dist(&p, &r) + 1e-9);
    }

    #[test]
    fn projection_satisfies_the_variational_inequality((set, p, r) in set_and_points()) {
        let q = set.project(&p).unwrap();
        let z = set.project(&r).unwrap();
        let v: f64 = p.iter().zip(&q).zip(&z).map(|((pi, qi), zi)| (pi - qi) * (zi - qi)).sum();
        prop_assert!(v <= 1e-9 * (1.0 + norm(&p)));
    }

    #[test]
    fn zero_prox_is_projection((set, p, _) in set_and_points(), alpha in 1e-3..10.0f64) {
        prop_assert_eq!(prox(&ProxTerm::Zero, &set, alpha, &p).unwrap(), set.project(&p).unwrap());
    }

    #[test]
    fn l1_prox_on_a_box_is_shrink_then_clamp(
        bounds in prop::collection::vec((-3.0..0.0f64, 0.0..3.0f64), 1..6),
        seed_point in prop::collection::vec(-10.0..10.0f64, 6),
        weight in 0.0..2.0f64,
        alpha in 1e-3..2.0f64,
    ) {
        let (lo, hi): (Vec<f64>, Vec<f64>) = bounds.into_iter().unzip();
        let set = FeasibleSet::boxed(lo.clone(), hi.clone()).unwrap();
        let p = &seed_point[..lo.len()];
        let got = prox(&ProxTerm::L1 { weight }, &set, alpha, p).unwrap();
        for i in 0..p.len() {
            let t = weight / alpha;
            let s = p[i].signum() * (p[i].abs() - t).max(0.0);
            prop_assert!((got[i] - s.clamp(lo[i], hi[i])).abs() <= 1e-12);
        }
    }

    #[test]
    fn largest_admissible_schedules_pass_validation(l in 0.01..100.0f64, batch in 1usize..1000) {
        let s = ScheduleConfig::largest_admissible(l, batch);
        let report = s.validate_constraints();
        prop_assert!(report.passed(), "{:?}", report.failures().collect::<Vec<_>>());
        s.validate().unwrap();
    }

    #[test]
    fn theorem_schedules_are_monotone_and_bounded(l in 0.01..100.0f64, batch in 1usize..1000, k in 1u64..1_000_000) {
        let s = ScheduleConfig::largest_admissible(l, batch);
        let now = s.schedule_at(k).unwrap();
        let next = s.schedule_at(k + 1).unwrap();
        prop_assert!(next.rho <= now.rho && next.eta <= now.eta && next.alpha <= now.alpha);
        prop_assert!(now.eta > 0.0 && now.eta <= 1.0);
        prop_assert!(now.gamma <= 1.0 && now.theta <= 1.0);
        prop_assert!(now.eta * s.beta * now.rho < 1.0);
    }

    #[test]
    fn oversized_beta_is_reported(l in 0.01..100.0f64, batch in 1usize..100, factor in 1.01..10.0f64) {
        let mut s = ScheduleConfig::largest_admissible(l, batch);
        s.beta *= factor;
        let report = s.validate_constraints();
        prop_assert!(report.failures().any(|c| c.name == "beta <= 1/(6L)"));
    }
}
