use proptest::prelude::*;
use std::sync::OnceLock;
use tensor_ident::decomposer::{
    als_objective_trace, cluster, decompose_once, equivalent, relative_residual, RunOutcome,
    Solved, SolverConfig,
};
use tensor_ident::linalg::{self, C64, DEFAULT_RANK_TOL};
use tensor_ident::multilinear::{
    assemble, chordal_distance_vec, flatten, numerical_rank, random_decomposition, Decomposition,
    Shape3, SimpleTensor, Tensor3,
};
use tensor_ident::secant::{ParamPoint, Parametrization, SegreVeronese};
use tensor_ident::Seed;

fn small_shape() -> impl Strategy<Value = Shape3> {
    (2usize..5, 2usize..5, 2usize..5).prop_map(|(a, b, c)| Shape3::new(a, b, c).unwrap())
}

fn regauge(d: &Decomposition, seed: u64, rotate: usize) -> Decomposition {
    let mut rng = Seed(seed).rng();
    let mut terms: Vec<SimpleTensor> = d
        .terms
        .iter()
        .map(|t| {
            let l = linalg::complex_gaussian(&mut rng);
            let m = linalg::complex_gaussian(&mut rng);
            let n = C64::new(1.0, 0.0) / (l * m);
            SimpleTensor {
                a: t.a.iter().map(|z| z * l).collect(),
                b: t.b.iter().map(|z| z * m).collect(),
                c: t.c.iter().map(|z| z * n).collect(),
            }
        })
        .collect();
    let len = terms.len();
    terms.rotate_left(rotate % len);
    Decomposition {
        shape: d.shape,
        terms,
    }
}

/// Converged runs on one rank-6 (4,4,4) tensor, shared by the clustering properties.
fn runs() -> &'static Vec<Solved> {
    static RUNS: OnceLock<Vec<Solved>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let sh = Shape3::new(4, 4, 4).unwrap();
        let t = assemble(&random_decomposition(sh, 6, &mut Seed(31).rng())).unwrap();
        let cfg = SolverConfig::default();
        (0..30)
            .filter_map(|i| {
                let start = random_decomposition(sh, 6, &mut Seed(32).index(i).rng());
                match decompose_once(&t, &start, &cfg).unwrap() {
                    RunOutcome::Converged(s) => Some(s),
                    RunOutcome::Failed(_) => None,
                }
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn objective_is_gauge_invariant(sh in small_shape(), k in 1usize..5, seed in any::<u64>(), rot in 0usize..5) {
        let mut rng = Seed(seed).rng();
        let t = assemble(&random_decomposition(sh, k, &mut rng)).unwrap();
        let d = random_decomposition(sh, k, &mut rng);
        let r0 = relative_residual(&t, &d).unwrap();
        let r1 = relative_residual(&t, &regauge(&d, seed ^ 1, rot)).unwrap();
        prop_assert!((r0 - r1).abs() <= 1e-12 * r0.max(1.0));
    }

    #[test]
    fn equivalence_ignores_gauge(sh in small_shape(), k in 1usize..5, seed in any::<u64>(), rot in 0usize..5) {
        let d = random_decomposition(sh, k, &mut Seed(seed).rng());
        prop_assert!(equivalent(&d, &regauge(&d, seed ^ 2, rot), 1e-8).unwrap());
    }

    #[test]
    fn als_is_monotone(sh in small_shape(), k in 1usize..5, seed in any::<u64>()) {
        let mut rng = Seed(seed).rng();
        let t = assemble(&random_decomposition(sh, k + 1, &mut rng)).unwrap();
        let start = random_decomposition(sh, k, &mut rng);
        let trace = als_objective_trace(&t, &start, 30).unwrap();
        for w in trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-10) + 1e-24);
        }
    }

    #[test]
    fn chordal_distance_is_a_metric(n in 2usize..8, seed in any::<u64>(), s in 0.1f64..10.0, phase in 0.0f64..6.28) {
        let mut rng = Seed(seed).rng();
        let [x, y, z] = [0, 1, 2].map(|_| linalg::random_vector(n, &mut rng));
        let dxy = chordal_distance_vec(&x, &y);
        prop_assert!((dxy - chordal_distance_vec(&y, &x)).abs() < 1e-14);
        prop_assert!(dxy <= chordal_distance_vec(&x, &z) + chordal_distance_vec(&z, &y) + 1e-14);
        let scaled: Vec<C64> = x.iter().map(|v| v * C64::from_polar(s, phase)).collect();
        prop_assert!(chordal_distance_vec(&x, &scaled) < 1e-7);
        prop_assert!((chordal_distance_vec(&scaled, &y) - dxy).abs() < 1e-12);
    }

    #[test]
    fn rank_grows_with_columns(rows in 2usize..9, a in 1usize..6, b in 1usize..6, seed in any::<u64>()) {
        let mut rng = Seed(seed).rng();
        let m1 = linalg::random_matrix(rows, a, &mut rng);
        let m2 = linalg::random_matrix(rows, b, &mut rng);
        let r1 = numerical_rank(&m1, DEFAULT_RANK_TOL);
        let r12 = numerical_rank(&linalg::hstack(&[m1.clone(), m2]), DEFAULT_RANK_TOL);
        prop_assert!(r12 >= r1);
        prop_assert_eq!(r1, rows.min(a));
    }

    #[test]
    fn flattening_rank_bounded_by_terms(sh in small_shape(), k in 1usize..4, seed in any::<u64>()) {
        let t = assemble(&random_decomposition(sh, k, &mut Seed(seed).rng())).unwrap();
        for (mode, n) in [(1, sh.n1), (2, sh.n2), (3, sh.n3)] {
            let others = sh.len() / n;
            prop_assert_eq!(numerical_rank(&flatten(&t, mode).unwrap(), DEFAULT_RANK_TOL), k.min(n).min(others));
        }
    }

    #[test]
    fn tensor_json_is_bit_exact(sh in small_shape(), seed in any::<u64>()) {
        let mut rng = Seed(seed).rng();
        let t = Tensor3::new(sh, linalg::random_vector(sh.len(), &mut rng)).unwrap();
        let json = t.to_json().unwrap();
        let back = Tensor3::from_json(&json).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(back.to_json().unwrap(), json);
        let d = random_decomposition(sh, 2, &mut rng);
        prop_assert_eq!(Decomposition::from_json(&d.to_json().unwrap()).unwrap(), d);
    }

    #[test]
    fn seeds_are_reproducible(seed in any::<u64>(), i in 0u64..1000) {
        use rand::Rng;
        let a: u64 = Seed(seed).child("x").index(i).rng().random();
        let b: u64 = Seed(seed).child("x").index(i).rng().random();
        let c: u64 = Seed(seed).child("y").index(i).rng().random();
        prop_assert_eq!(a, b);
        prop_assert_ne!(a, c);
    }

    #[test]
    fn jacobian_matches_finite_differences(
        dims in (2usize..4, 2usize..4, 2usize..4),
        degrees in (1usize..4, 1usize..3, 1usize..3),
        seed in any::<u64>(),
    ) {
        let p = SegreVeronese::new([dims.0, dims.1, dims.2], [degrees.0, degrees.1, degrees.2]).unwrap();
        let mut rng = Seed(seed).rng();
        let u = p.random_point(&mut rng);
        let j = p.jacobian(&u);
        let x = u.flat();
        let h = 1e-6;
        for col in 0..x.len() {
            let (mut plus, mut minus) = (x.clone(), x.clone());
            plus[col] += C64::new(h, 0.0);
            minus[col] -= C64::new(h, 0.0);
            let fd = (p.evaluate(&ParamPoint::from_flat(&plus, p.block_dims()))
                - p.evaluate(&ParamPoint::from_flat(&minus, p.block_dims())))
                / C64::new(2.0 * h, 0.0);
            let exact = j.column(col);
            prop_assert!((&fd - exact).norm() < 1e-5 * exact.norm().max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn clustering_ignores_order(perm in Just((0..runs().len()).collect::<Vec<usize>>()).prop_shuffle()) {
        let all = runs();
        let shuffled: Vec<Solved> = perm.iter().map(|&i| all[i].clone()).collect();
        let tol = SolverConfig::default().cluster_tol;
        prop_assert_eq!(cluster(&shuffled, tol), cluster(all, tol));
    }
}

#[test]
fn clustering_finds_both_decompositions_of_a_rank_six_cube() {
    let classes = cluster(runs(), SolverConfig::default().cluster_tol);
    assert_eq!(classes.len(), 2);
    let total: usize = classes.iter().map(|c| c.members_found).sum();
    assert_eq!(total, runs().len());
}
