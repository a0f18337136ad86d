mod common;

use mtlrrc::clustering::rrc_objective;
use mtlrrc::{
    check_stationarity_rrc, cluster_labels, knn_weights, solve_rrc, PenaltyFamily, PenaltySpec,
    RrcOptions, TaskGraph,
};
use ndarray::Array2;
use rand::Rng;

use common::{normal, rng};

fn tight() -> RrcOptions<f64> {
    let mut o = RrcOptions::default();
    o.tol = 1e-11;
    o.max_sweeps = 20_000;
    o.centroid.fista_tol = 1e-13;
    o.centroid.max_fista = 20_000;
    o.centroid.admm_tol = 1e-13;
    o.centroid.max_admm = 50_000;
    o
}

/// Points around two centres with one displaced point.
fn points(r: &mut rand_chacha::ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    let centres = [2.0, -2.0];
    let mut x = Array2::from_shape_fn((n, p), |(i, _)| centres[i % 2] + 0.4 * normal(r));
    x.row_mut(n - 1).mapv_inplace(|v| v - 8.0);
    x
}

#[test]
fn rrc_solutions_are_stationary() {
    let mut r = rng(31);
    let families = [
        PenaltyFamily::GroupLasso,
        PenaltyFamily::GroupScad,
        PenaltyFamily::GroupMcp,
        PenaltyFamily::MultiTukey,
    ];
    for i in 0..20 {
        let n = r.random_range(3..=8);
        let p = r.random_range(1..=3);
        let x = points(&mut r, n, p);
        let k = r.random_range(1..n);
        let graph = knn_weights(x.view(), k).unwrap();
        let family = families[i % 4];
        let lambda = r.random_range(0.5..3.0);
        let pen = PenaltySpec::new(family, lambda, family.default_gamma()).unwrap();
        let lambda1 = r.random_range(0.05..1.0);
        let state = solve_rrc(x.view(), &graph, lambda1, &pen, &tight()).unwrap();
        let res = check_stationarity_rrc(x.view(), &state, &graph, lambda1, &pen).unwrap();
        assert!(
            res <= 1e-4,
            "instance {i} ({family:?}, n={n}, p={p}): residual {res}"
        );
    }
}

#[test]
fn rrc_sweeps_never_increase_the_objective() {
    let mut r = rng(37);
    for _ in 0..10 {
        let x = points(&mut r, 7, 2);
        let graph = knn_weights(x.view(), 3).unwrap();
        let pen = PenaltySpec::group_mcp(1.0, 3.0).unwrap();
        let state = solve_rrc(x.view(), &graph, 0.3, &pen, &tight()).unwrap();
        for w in state.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10 * w[0].abs().max(1.0), "{w:?}");
        }
        let last = *state.objective_trace.last().unwrap();
        let direct =
            rrc_objective(x.view(), state.u.view(), state.o.view(), &graph, 0.3, &pen).unwrap();
        assert!((last - direct).abs() <= 1e-12 * direct.abs().max(1.0));
    }
}

#[test]
fn strong_fusion_isolates_the_displaced_point() {
    let mut r = rng(41);
    let x = points(&mut r, 8, 2);
    // Each cluster is complete; the displaced odd point joins the odd one.
    let mut edges = Vec::new();
    for a in 0..8 {
        for b in (a + 1)..8 {
            if a % 2 == b % 2 {
                edges.push((a, b, 1.0));
            }
        }
    }
    let graph = TaskGraph::from_edges(8, edges, 3).unwrap();
    let pen = PenaltySpec::group_scad(1.0, 3.7).unwrap();
    let state = solve_rrc(x.view(), &graph, 1.0, &pen, &tight()).unwrap();
    let flagged: Vec<usize> = state
        .o
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(_, row)| row.iter().any(|&v| v != 0.0))
        .map(|(m, _)| m)
        .collect();
    assert_eq!(flagged, vec![7]);
    let labels = cluster_labels(state.u.view(), &graph);
    assert!(labels.iter().step_by(2).all(|&l| l == labels[0]));
    assert!(labels.iter().skip(1).step_by(2).all(|&l| l == labels[1]));
    assert_ne!(labels[0], labels[1]);
}
