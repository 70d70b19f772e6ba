mod support;

use hsse_core::embed::{
    builtin_scale_embedding, knn_neighborhood, pairwise_distances, pca, BuiltinProvider, ExpressionMatrix, Metric,
    ScaleEmbedding,
};
use hsse_core::linalg::Matrix;
use hsse_core::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::RngExt;
use support::*;

fn expression(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> ExpressionMatrix {
    let ids = (0..rows).map(|i| format!("c{i}")).collect();
    ExpressionMatrix::new(ids, Matrix::from_fn(rows, cols, f)).unwrap()
}

#[test]
fn projected_variance_is_the_top_covariance_eigenvalues() {
    let mut rng = rng(50);
    let x = expression(50, 20, |_, _| rng.random::<f64>() * 3.0);
    let p = pca(&x, 5).unwrap();

    let raw = DMatrix::from_row_slice(50, 20, x.values().as_slice());
    let mean = raw.row_mean();
    let centered = DMatrix::from_fn(50, 20, |i, j| raw[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / 49.0;
    let top5: f64 = sorted_eigenvalues(&cov).iter().rev().take(5).sum();

    let scores = to_dmatrix(&p.scores);
    let projected: f64 = (0..5).map(|c| scores.column(c).norm_squared() / 49.0).sum();
    assert!((projected - top5).abs() < 1e-8, "{projected} vs {top5}");
    assert!((p.variances.iter().sum::<f64>() - top5).abs() < 1e-8);
    for c in 0..5 {
        let comp = p.components.row(c);
        let big = comp.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        assert!(big > 0.0, "component {c} has a negative dominant loading");
    }
}

/// Two blobs of eight cells, far apart relative to their spread, so that
/// every 10-nearest-neighbor list crosses over and the graph is connected.
fn two_blobs(seed: u64) -> (ExpressionMatrix, Vec<bool>) {
    let mut rng = rng(seed);
    let mut rows = Vec::new();
    let mut in_second = Vec::new();
    for blob in 0..2 {
        for _ in 0..8 {
            rows.push((0..5).map(|g| 0.3 * (rng.random::<f64>() - 0.5) + if g == 0 { 10.0 * blob as f64 } else { 0.0 }).collect::<Vec<_>>());
            in_second.push(blob == 1);
        }
    }
    let x = expression(16, 5, |i, j| rows[i][j]);
    (x, in_second)
}

#[test]
fn leading_coordinate_separates_two_blobs() {
    for seed in 0..5 {
        let (x, in_second) = two_blobs(seed);
        let y = builtin_scale_embedding(&x, 10, 2).unwrap();
        let first: Vec<f64> = (0..16).map(|i| y.coords[(i, 0)]).collect();
        let side = |b: bool| first.iter().zip(&in_second).filter(move |(_, &s)| s == b).map(|(&v, _)| v);
        let (lo_a, hi_a) = side(false).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        let (lo_b, hi_b) = side(true).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        assert!(hi_a < lo_b || hi_b < lo_a, "seed {seed}: blobs overlap on the leading coordinate");
    }
}

#[test]
fn builtin_embedding_is_reproducible() {
    let (x, _) = two_blobs(3);
    let a = builtin_scale_embedding(&x, 5, 3).unwrap();
    let b = builtin_scale_embedding(&x, 5, 3).unwrap();
    let bits = |e: &ScaleEmbedding| e.coords.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    let provider = BuiltinProvider::new(&x).unwrap();
    assert_eq!(bits(&provider.embed(5, 3).unwrap()), bits(&a));
}

#[test]
fn too_few_eigenpairs_on_a_split_graph_is_reported() {
    // Two far-apart triples; each 2-nearest-neighbor list stays inside its triple.
    let x = expression(6, 2, |i, j| if j == 0 { (i / 3) as f64 * 100.0 + (i % 3) as f64 } else { (i % 3) as f64 * 0.5 });
    let err = builtin_scale_embedding(&x, 2, 5).unwrap_err();
    assert_eq!(
        err,
        Error::DisconnectedGraph {
            requested: 5,
            available: 4,
            component_sizes: vec![3, 3],
        }
    );
    assert!(builtin_scale_embedding(&x, 2, 4).is_ok());
}

fn embedding_strategy() -> impl Strategy<Value = ScaleEmbedding> {
    (3usize..25, 2usize..6, any::<u64>()).prop_map(|(m, d, seed)| {
        let mut rng = rng(seed);
        let coords = Matrix::from_fn(m, d, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        ScaleEmbedding::new(5, coords).unwrap()
    })
}

proptest! {
    #[test]
    fn distances_are_metrics(y in embedding_strategy(), chordal in any::<bool>()) {
        let metric = if chordal { Metric::Chordal } else { Metric::Euclidean };
        let d = pairwise_distances(&y, metric).unwrap();
        let m = d.size();
        for i in 0..m {
            prop_assert_eq!(d.get(i, i), 0.0);
            for j in 0..m {
                prop_assert_eq!(d.get(i, j), d.get(j, i));
                prop_assert!(d.get(i, j) >= 0.0);
                for k in 0..m {
                    prop_assert!(d.get(i, k) <= d.get(i, j) + d.get(j, k) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn chordal_distances_ignore_scale(y in embedding_strategy(), c in 0.01f64..100.0) {
        let scaled = Matrix::from_fn(y.coords.nrows(), y.coords.ncols(), |i, j| c * y.coords[(i, j)]);
        let d1 = pairwise_distances(&y, Metric::Chordal).unwrap();
        let d2 = pairwise_distances(&ScaleEmbedding::new(5, scaled).unwrap(), Metric::Chordal).unwrap();
        for i in 0..d1.size() {
            for j in 0..d1.size() {
                prop_assert!((d1.get(i, j) - d2.get(i, j)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn neighborhoods_follow_row_permutations(y in embedding_strategy(), seed in any::<u64>(), k_frac in 0.0f64..1.0) {
        let m = y.coords.nrows();
        let mut perm: Vec<usize> = (0..m).collect();
        let mut rng = rng(seed);
        for i in (1..m).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        // Row r of the permuted embedding is row perm[r] of the original.
        let permuted = Matrix::from_fn(m, y.coords.ncols(), |r, j| y.coords[(perm[r], j)]);
        let d = pairwise_distances(&y, Metric::Euclidean).unwrap();
        let dp = pairwise_distances(&ScaleEmbedding::new(5, permuted).unwrap(), Metric::Euclidean).unwrap();
        let k = 1 + ((m - 2) as f64 * k_frac) as usize;
        for r in 0..m {
            let mut mapped: Vec<usize> = knn_neighborhood(&dp, r, k).unwrap().members.iter().map(|&x| perm[x]).collect();
            let mut direct = knn_neighborhood(&d, perm[r], k).unwrap().members;
            prop_assert_eq!(mapped[0], direct[0]);
            mapped.sort();
            direct.sort();
            prop_assert_eq!(mapped, direct);
        }
    }

    #[test]
    fn neighborhoods_grow_with_k(y in embedding_strategy(), i_frac in 0.0f64..1.0) {
        let d = pairwise_distances(&y, Metric::Chordal).unwrap();
        let m = d.size();
        let i = ((m - 1) as f64 * i_frac) as usize;
        for k in 1..m - 1 {
            let small = knn_neighborhood(&d, i, k).unwrap().members;
            let large = knn_neighborhood(&d, i, k + 1).unwrap().members;
            prop_assert_eq!(&large[..small.len()], &small[..]);
        }
    }
}
