mod common;

use mtlrrc::penalty::{psi, robust_loss, threshold};
use mtlrrc::{PenaltyFamily, PenaltySpec};
use ndarray::Array1;
use proptest::prelude::*;
use rand::Rng;

use common::{normal, rng};

const FAMILIES: [PenaltyFamily; 4] = [
    PenaltyFamily::GroupLasso,
    PenaltyFamily::GroupScad,
    PenaltyFamily::GroupMcp,
    PenaltyFamily::MultiTukey,
];

/// Minimiser of `½(s − t)² + P(t)` over `t ∈ [0, s]` by a grid scan and a
/// golden-section refinement around the best grid cell.
fn radial_prox(spec: &PenaltySpec<f64>, s: f64) -> f64 {
    let h = |t: f64| 0.5 * (s - t) * (s - t) + spec.penalty_radial(t);
    let n = 4000;
    let step = s / n as f64;
    let best = (0..=n)
        .map(|i| i as f64 * step)
        .min_by(|a, b| h(*a).total_cmp(&h(*b)))
        .unwrap();
    let (mut lo, mut hi) = ((best - step).max(0.0), (best + step).min(s));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    for _ in 0..200 {
        if h(c) < h(d) {
            hi = d;
        } else {
            lo = c;
        }
        c = hi - g * (hi - lo);
        d = lo + g * (hi - lo);
    }
    let mid = 0.5 * (lo + hi);
    [0.0, mid, s]
        .into_iter()
        .min_by(|a, b| h(*a).total_cmp(&h(*b)))
        .unwrap()
}

fn draw_spec(r: &mut impl Rng, family: PenaltyFamily) -> PenaltySpec<f64> {
    let lambda = r.random_range(0.1..3.0);
    let gamma = match family {
        PenaltyFamily::GroupScad => r.random_range(2.2..6.0),
        PenaltyFamily::GroupMcp => r.random_range(1.3..6.0),
        _ => family.default_gamma(),
    };
    PenaltySpec::new(family, lambda, gamma).unwrap()
}

#[test]
fn threshold_matches_numerical_prox() {
    let mut r = rng(101);
    for family in FAMILIES {
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let spec = draw_spec(&mut r, family);
            let p = r.random_range(1..5);
            let scale = r.random_range(0.05..4.0) * spec.lambda;
            let z = Array1::from_shape_fn(p, |_| scale * normal(&mut r));
            let s = z.dot(&z).sqrt();
            let t = radial_prox(&spec, s);
            let expected = z.mapv(|v| v * t / s);
            let got = threshold(z.view(), &spec).unwrap();
            let err = (&got - &expected)
                .iter()
                .fold(0.0f64, |a, v| a.max(v.abs()));
            worst = worst.max(err);
        }
        assert!(worst <= 1e-6, "{family:?}: max deviation {worst}");
    }
}

#[test]
fn envelope_value_matches_prox_objective() {
    let mut r = rng(103);
    for family in FAMILIES {
        for _ in 0..50 {
            let spec = draw_spec(&mut r, family);
            let z = Array1::from_shape_fn(3, |_| 2.0 * spec.lambda * normal(&mut r));
            let o = threshold(z.view(), &spec).unwrap();
            let d = &z - &o;
            let on = o.dot(&o).sqrt();
            let direct = 0.5 * d.dot(&d) + spec.penalty_radial(on);
            let rho = robust_loss(z.view(), &spec).unwrap();
            let scale = match family {
                PenaltyFamily::MultiTukey => spec.lambda * spec.lambda / 6.0,
                _ => 1.0,
            };
            assert!(
                (direct - scale * rho).abs() <= 1e-8 * direct.abs().max(1.0),
                "{family:?}"
            );
        }
    }
}

fn arb_spec() -> impl Strategy<Value = PenaltySpec<f64>> {
    (0usize..4, 0.05f64..5.0, 0.0f64..1.0).prop_map(|(f, lambda, u)| {
        let family = FAMILIES[f];
        let gamma = match family {
            PenaltyFamily::GroupScad => 2.05 + 5.0 * u,
            PenaltyFamily::GroupMcp => 1.05 + 5.0 * u,
            _ => family.default_gamma(),
        };
        PenaltySpec::new(family, lambda, gamma).unwrap()
    })
}

proptest! {
    #[test]
    fn threshold_plus_psi_is_identity(
        spec in arb_spec(),
        z in proptest::collection::vec(-30.0f64..30.0, 1..6),
    ) {
        let z = Array1::from(z);
        let sum = threshold(z.view(), &spec).unwrap() + psi(z.view(), &spec).unwrap();
        for (a, b) in sum.iter().zip(z.iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn small_inputs_are_zeroed(
        spec in arb_spec(),
        dir in proptest::collection::vec(-1.0f64..1.0, 1..6),
        frac in 0.0f64..0.999,
    ) {
        let z = Array1::from(dir);
        let n = z.dot(&z).sqrt();
        prop_assume!(n > 1e-6);
        let z = z.mapv(|v| v / n * frac * spec.lambda);
        let o = threshold(z.view(), &spec).unwrap();
        match spec.family {
            PenaltyFamily::MultiTukey => prop_assert!(o.dot(&o).sqrt() <= z.dot(&z).sqrt()),
            _ => prop_assert!(o.iter().all(|&v| v == 0.0)),
        }
    }

    #[test]
    fn threshold_norm_is_monotone(
        spec in arb_spec(),
        a in 0.0f64..40.0,
        b in 0.0f64..40.0,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let f = |t: f64| spec.shrink_factor(t) * t;
        prop_assert!(f(lo) <= f(hi) + 1e-12);
        prop_assert!(f(hi) <= hi + 1e-12);
    }

    #[test]
    fn group_lasso_score_is_bounded(
        lambda in 0.01f64..10.0,
        z in proptest::collection::vec(-50.0f64..50.0, 1..6),
    ) {
        let spec = PenaltySpec::group_lasso(lambda).unwrap();
        let g = psi(Array1::from(z).view(), &spec).unwrap();
        prop_assert!(g.dot(&g).sqrt() <= lambda * (1.0 + 1e-12));
    }
}
