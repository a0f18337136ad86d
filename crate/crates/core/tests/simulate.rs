use mtlrrc::simulate::{noiseless_response, sample_truncated_mixture, split_indices};
use mtlrrc::{generate, split, Case, SimConfig, SplitSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn small(seed: u64, case: Case, kappa: f64) -> SimConfig {
    SimConfig {
        n_tasks: 12,
        n_features: 8,
        n_clusters: 3,
        n_samples: 15,
        sigma2: 5.0,
        kappa,
        case,
        sigma_o2: 1.0,
        seed,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cluster_parts_are_orthogonal(seed in 0u64..10_000, kappa in 0.0f64..1.0, case2 in any::<bool>()) {
        let case = if case2 { Case::Case2 } else { Case::Case1 };
        let (_, truth) = generate::<f64>(&small(seed, case, kappa)).unwrap();
        let u = &truth.u_true;
        for a in 0..u.nrows() {
            for b in (a + 1)..u.nrows() {
                prop_assert_eq!(u.row(a).dot(&u.row(b)), 0.0);
            }
        }
        for m in 0..truth.w_true.nrows() {
            let c = truth.cluster_of[m];
            for j in 0..truth.feature_cluster.len() {
                let own = truth.feature_cluster[j] == c;
                if !own {
                    prop_assert_eq!(truth.v_true[[m, j]], 0.0);
                    if !(truth.is_outlier[m] && case == Case::Case2) {
                        prop_assert_eq!(truth.w_true[[m, j]], 0.0);
                    }
                }
                if truth.is_outlier[m] && case == Case::Case1 {
                    prop_assert_eq!(truth.o_true[[m, j]] != 0.0, own);
                    if own {
                        prop_assert!(truth.o_true[[m, j]].abs() >= 3.0);
                    }
                }
                if !truth.is_outlier[m] {
                    prop_assert_eq!(truth.o_true[[m, j]], 0.0);
                }
            }
        }
    }

    #[test]
    fn splits_partition_every_task(
        sizes in proptest::collection::vec(3usize..40, 1..8),
        seed in 0u64..1000,
        a in 0.1f64..0.8,
    ) {
        let b = (1.0 - a) / 2.0;
        let parts = split_indices(&sizes, &SplitSpec::Ratios(a, b, 1.0 - a - b), seed).unwrap();
        for (n, p) in sizes.iter().zip(&parts) {
            let mut all: Vec<usize> = p.iter().flatten().copied().collect();
            all.sort();
            prop_assert_eq!(all, (0..*n).collect::<Vec<_>>());
        }
        let again = split_indices(&sizes, &SplitSpec::Ratios(a, b, 1.0 - a - b), seed).unwrap();
        prop_assert_eq!(parts, again);
    }

    #[test]
    fn count_splits_select_the_indexed_rows(seed in 0u64..1000) {
        let (data, truth) = generate::<f64>(&small(seed, Case::Case1, 0.2)).unwrap();
        let s = split(&data, &SplitSpec::Counts(5, 5, 5), seed).unwrap();
        let test = s.test.unwrap();
        let ystar = noiseless_response(&data, &truth.w_true);
        for m in 0..data.n_tasks() {
            for (k, &i) in s.indices[m][2].iter().enumerate() {
                prop_assert_eq!(test.task(m).y[k], data.task(m).y[i]);
                prop_assert_eq!(test.task(m).x.row(k), data.task(m).x.row(i));
            }
            prop_assert_eq!(ystar[m].len(), 15);
        }
    }
}

/// Reference sampler: draw from the untruncated half and reject.
fn rejection(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let pos = Normal::new(3.0, sigma).unwrap();
    loop {
        let v = pos.sample(rng);
        if v >= 3.0 {
            return if rand::Rng::random::<bool>(rng) { v } else { -v };
        }
    }
}

#[test]
fn truncated_mixture_matches_rejection_sampling() {
    let n = 40_000;
    for sigma in [0.5, 1.0, 2.0] {
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let mut r2 = ChaCha8Rng::seed_from_u64(6);
        let mut a: Vec<f64> = (0..n).map(|_| sample_truncated_mixture(&mut r1, sigma)).collect();
        let mut b: Vec<f64> = (0..n).map(|_| rejection(&mut r2, sigma)).collect();
        assert!(a.iter().all(|v| v.abs() >= 3.0));
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        // Two-sample Kolmogorov-Smirnov distance on the merged sample.
        let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
        while i < n && j < n {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 - j as f64).abs() / n as f64);
        }
        // Critical value at level 1e-4 is about 2.15·sqrt(2/n).
        assert!(d <= 2.15 * (2.0 / n as f64).sqrt(), "sigma {sigma}: KS distance {d}");
        let pos = a.iter().filter(|&&v| v > 0.0).count() as f64 / n as f64;
        assert!((pos - 0.5).abs() < 0.02);
    }
}

#[test]
fn outlier_share_tracks_kappa() {
    let mut cfg = small(9, Case::Case2, 0.3);
    cfg.n_tasks = 600;
    cfg.n_samples = 2;
    let (_, truth) = generate::<f64>(&cfg).unwrap();
    let share = truth.is_outlier.iter().filter(|&&o| o).count() as f64 / 600.0;
    assert!((share - 0.3).abs() < 0.06, "{share}");
}
