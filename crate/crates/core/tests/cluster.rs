use proptest::prelude::*;
use subcol_core::cluster::*;
use subcol_core::numlin::{Matrix, Rng};
use subcol_core::oracles::{thm2_canonical, Problem};
use subcol_core::selfexpress::{solve_c_fixed_z, Regularizer, SelfExpression, SolverOptions};
use subcol_core::synthdata::gen_union_subspaces;

/// Accuracy by trying every permutation of `k` labels; fine for small `k`.
fn accuracy_by_enumeration(labels: &[usize], truth: &[usize], k: usize) -> f64 {
    fn perms(k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in perms(k - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, k - 1);
                out.push(q);
            }
        }
        out
    }
    perms(k)
        .iter()
        .map(|perm| labels.iter().zip(truth).filter(|(&l, &t)| perm[l] == t).count())
        .max()
        .unwrap() as f64
        / labels.len() as f64
}

fn block_affinity(sizes: &[usize]) -> Matrix {
    let n: usize = sizes.iter().sum();
    let mut block = vec![0; n];
    let mut start = 0;
    for (b, &s) in sizes.iter().enumerate() {
        block[start..start + s].iter_mut().for_each(|x| *x = b);
        start += s;
    }
    Matrix::from_fn(n, n, |i, j| if i != j && block[i] == block[j] { 1.0 } else { 0.0 })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn accuracy_matches_enumeration(seed in any::<u64>(), n in 1usize..30, k in 1usize..5) {
        let mut rng = Rng::seed_from(seed);
        let labels: Vec<usize> = (0..n).map(|_| rng.index(k)).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.index(k)).collect();
        let a = accuracy(&labels, &truth).unwrap();
        prop_assert!((a - accuracy_by_enumeration(&labels, &truth, k)).abs() < 1e-15);
    }

    #[test]
    fn accuracy_invariant_under_relabeling(seed in any::<u64>(), n in 1usize..40, k in 1usize..6) {
        let mut rng = Rng::seed_from(seed);
        let labels: Vec<usize> = (0..n).map(|_| rng.index(k)).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.index(k)).collect();
        let mut perm: Vec<usize> = (0..k).collect();
        rng.shuffle(&mut perm);
        let relabeled: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
        let base = accuracy(&labels, &truth).unwrap();
        prop_assert_eq!(base, accuracy(&relabeled, &truth).unwrap());
        prop_assert_eq!(base, accuracy(&truth, &labels).unwrap());
        prop_assert_eq!(accuracy(&relabeled, &labels).unwrap(), 1.0);
    }

    #[test]
    fn disabled_postprocess_is_abs_and_idempotent(seed in any::<u64>(), n in 2usize..10) {
        let c = SelfExpression::projected(Rng::seed_from(seed).normal_matrix(n, n), false);
        let cfg = PostprocessConfig::disabled();
        let once = postprocess_c(&c, &cfg).unwrap();
        prop_assert_eq!(&once, &c.matrix().map(f64::abs));
        let twice = postprocess_c(&SelfExpression::projected(once.clone(), false), &cfg).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn spectral_cluster_is_deterministic(seed in any::<u64>(), n in 4usize..20) {
        let mut rng = Rng::seed_from(seed);
        let m = rng.uniform_matrix(n, n, 0.0, 1.0);
        let a = affinity(&m).unwrap();
        prop_assert_eq!(spectral_cluster(&a, 3.min(n), seed).unwrap(), spectral_cluster(&a, 3.min(n), seed).unwrap());
    }
}

#[test]
fn constructed_confusion_cases() {
    assert_eq!(accuracy(&[0, 0, 1, 1, 2], &[0, 0, 1, 1, 2]).unwrap(), 1.0);
    assert_eq!(accuracy(&[2, 2, 0, 0, 1], &[0, 0, 1, 1, 2]).unwrap(), 1.0);
    assert_eq!(accuracy(&[0, 0, 1, 1, 0, 0, 1, 1], &[0, 0, 0, 0, 1, 1, 1, 1]).unwrap(), 0.5);
}

#[test]
fn full_rank_postprocess_without_thresholding_is_projection() {
    let c = SelfExpression::projected(Rng::seed_from(4).normal_matrix(6, 6), false);
    let cfg = PostprocessConfig { keep_threshold: 1.0, sim_rank: 6, power: 1.0, enabled: true, normalize_rows: true };
    // full-rank U is orthogonal, so |UUᵀ| = I
    assert!(postprocess_c(&c, &cfg).unwrap().max_abs_diff(&Matrix::identity(6)) < 1e-12);
}

#[test]
fn rank_one_postprocess_follows_outer_product() {
    let q = [0.5, -0.3, 0.7, 0.1, -0.4];
    let nrm: f64 = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let c = SelfExpression::projected(Matrix::from_fn(5, 5, |i, j| q[i] * q[j]), false);
    let cfg = PostprocessConfig { keep_threshold: 1.0, sim_rank: 1, power: 2.0, enabled: true, normalize_rows: false };
    let out = postprocess_c(&c, &cfg).unwrap();
    let want = Matrix::from_fn(5, 5, |i, j| (q[i] * q[j] / (nrm * nrm)).powi(2));
    assert!(out.max_abs_diff(&want) < 1e-12);
}

#[test]
fn two_point_code_gives_one_edge() {
    let s = thm2_canonical(6, 2, 1.0, Problem::P1, 11).unwrap();
    let a = affinity(s.c_star.matrix()).unwrap();
    let nonzero = a.matrix().as_slice().iter().filter(|&&v| v != 0.0).count();
    assert_eq!(nonzero, 2);
}

#[test]
fn uniform_affinity_is_deterministic() {
    let n = 8;
    let a = affinity(&Matrix::from_fn(n, n, |_, _| 1.0)).unwrap();
    let l = spectral_cluster(&a, 2, 3).unwrap();
    assert_eq!(l, spectral_cluster(&a, 2, 3).unwrap());
    assert!(l.iter().all(|&x| x < 2));
}

#[test]
fn isolated_vertices_do_not_break_clustering() {
    // two triangles plus a vertex with no edges at all
    let blocks = block_affinity(&[3, 3]);
    let m = Matrix::from_fn(7, 7, |i, j| if i < 6 && j < 6 { blocks[(i, j)] } else { 0.0 });
    let labels = spectral_cluster(&Affinity::new(m).unwrap(), 3, 0).unwrap();
    assert_eq!(accuracy(&labels, &[0, 0, 0, 1, 1, 1, 2]).unwrap(), 1.0);
}

#[test]
fn extra_disjoint_block_keeps_original_accuracy() {
    let truth = [0, 0, 0, 0, 1, 1, 1, 1];
    let base = spectral_cluster(&Affinity::new(block_affinity(&[4, 4])).unwrap(), 2, 1).unwrap();
    let grown = spectral_cluster(&Affinity::new(block_affinity(&[4, 4, 4])).unwrap(), 3, 1).unwrap();
    let a0 = accuracy(&base, &truth).unwrap();
    let a1 = accuracy(&grown[..8], &truth).unwrap();
    assert!(a1 >= a0);
}

#[test]
fn ssc_separates_two_lines() {
    let (data, _) = gen_union_subspaces(2, 1, 2, 20, 80.0, 0.0, 5).unwrap();
    let sol = solve_c_fixed_z(&data.x, &Regularizer::ssc(1e-3).unwrap(), &SolverOptions::default()).unwrap();
    for cfg in [PostprocessConfig::disabled(), PostprocessConfig { sim_rank: 2, ..PostprocessConfig::for_clusters(2) }] {
        let labels = cluster_c(&sol.c, &cfg, 2, 0).unwrap();
        assert_eq!(accuracy(&labels, &data.labels).unwrap(), 1.0, "{cfg:?}");
    }
}

#[test]
fn rejects_bad_configs() {
    let c = SelfExpression::zeros(3, true);
    let mut cfg = PostprocessConfig::for_clusters(1);
    cfg.sim_rank = 4;
    assert!(postprocess_c(&c, &cfg).is_err());
    cfg.sim_rank = 2;
    cfg.keep_threshold = 0.0;
    assert!(postprocess_c(&c, &cfg).is_err());
    assert!(affinity(&Matrix::zeros(2, 3)).is_err());
    assert!(spectral_cluster(&affinity(&Matrix::zeros(3, 3)).unwrap(), 4, 0).is_err());
}
