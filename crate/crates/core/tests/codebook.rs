mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use xview::codebook::{
    bow_encode, kmeans_fit, kmeans_fit_traced, kmeans_plus_plus, nearest_centroid, Codebook, KMeansConfig,
    TrajectorySet,
};

/// Lloyd iterations written out directly, starting from given centroids.
fn lloyd_oracle(points: &DMatrix<f64>, mut centroids: DMatrix<f64>, iters: usize) -> (DMatrix<f64>, Vec<f64>) {
    let (m, k) = (points.nrows(), centroids.ncols());
    let mut objective = Vec::new();
    for _ in 0..iters {
        let mut assign = vec![0; m];
        let mut total = 0.0;
        for i in 0..m {
            let mut best = (0, f64::INFINITY);
            for j in 0..k {
                let d = (points.row(i).transpose() - centroids.column(j)).norm_squared();
                if d < best.1 {
                    best = (j, d);
                }
            }
            assign[i] = best.0;
            total += best.1;
        }
        objective.push(total);
        for j in 0..k {
            let members: Vec<usize> = (0..m).filter(|&i| assign[i] == j).collect();
            if members.is_empty() {
                continue;
            }
            let mut c = points.row(members[0]).transpose() * 0.0;
            for &i in &members {
                c += points.row(i).transpose();
            }
            centroids.set_column(j, &(c / members.len() as f64));
        }
    }
    (centroids, objective)
}

fn clustered_points(seed: u64, k: usize, per: usize, p: usize) -> DMatrix<f64> {
    let mut rng = common::rng(seed);
    let centres = common::gaussian_matrix(&mut rng, k, p) * 10.0;
    let noise = common::gaussian_matrix(&mut rng, k * per, p) * 0.1;
    DMatrix::from_fn(k * per, p, |i, j| centres[(i % k, j)] + noise[(i, j)])
}

#[test]
fn objective_never_increases() {
    for seed in 0..20 {
        let mut rng = common::rng(seed);
        let pts = TrajectorySet::new(common::gaussian_matrix(&mut rng, 60, 3)).unwrap();
        let fit = kmeans_fit_traced(&pts, &KMeansConfig::new(5, seed)).unwrap();
        for w in fit.objective.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "seed {seed}: {:?}", fit.objective);
        }
    }
}

#[test]
fn agrees_with_plain_lloyd_from_the_same_seeding() {
    let pts = clustered_points(3, 4, 15, 2);
    let set = TrajectorySet::new(pts.clone()).unwrap();
    let seeds = kmeans_plus_plus(&set, 4, 9).unwrap();
    let init = DMatrix::from_fn(2, 4, |r, j| pts[(seeds[j], r)]);
    let (want, objective) = lloyd_oracle(&pts, init, 20);
    let fit = kmeans_fit_traced(&set, &KMeansConfig::new(4, 9)).unwrap();
    assert!((fit.codebook.centroids() - &want).amax() < 1e-9);
    assert!((fit.objective[0] - objective[0]).abs() < 1e-9);
}

#[test]
fn k_distinct_points_are_recovered_exactly() {
    let pts = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 5.0, 0.0, 0.0, 5.0, 5.0, 5.0]);
    let cb = kmeans_fit(&TrajectorySet::new(pts.clone()).unwrap(), &KMeansConfig::new(4, 1)).unwrap();
    for i in 0..4 {
        let row = pts.row(i).transpose();
        assert!((0..4).any(|j| cb.centroids().column(j) == row));
    }
}

#[test]
fn seeding_is_deterministic_and_distinct() {
    let pts = TrajectorySet::new(clustered_points(5, 6, 5, 3)).unwrap();
    let a = kmeans_plus_plus(&pts, 6, 17).unwrap();
    assert_eq!(a, kmeans_plus_plus(&pts, 6, 17).unwrap());
    let mut sorted = a.clone();
    sorted.sort_unstable();
    sorted.dedup();
    assert_eq!(sorted.len(), 6);
}

#[test]
fn duplicate_points_still_seed_k_clusters() {
    let pts = TrajectorySet::new(DMatrix::from_element(5, 2, 1.0)).unwrap();
    let fit = kmeans_fit_traced(&pts, &KMeansConfig::new(3, 0)).unwrap();
    assert_eq!(fit.codebook.size(), 3);
    assert_eq!(*fit.objective.last().unwrap(), 0.0);
}

#[test]
fn invalid_configurations() {
    let pts = TrajectorySet::new(DMatrix::zeros(3, 2)).unwrap();
    assert!(kmeans_fit(&pts, &KMeansConfig::new(0, 0)).is_err());
    assert!(kmeans_fit(&pts, &KMeansConfig::new(4, 0)).is_err());
    let cb = Codebook::new(DMatrix::zeros(2, 2)).unwrap();
    assert!(nearest_centroid(&[0.0; 3], &cb).is_err());
    assert!(bow_encode(&TrajectorySet::new(DMatrix::zeros(2, 3)).unwrap(), &cb).is_err());
}

proptest! {
    #[test]
    fn histogram_sums_to_one(m in 1usize..40, k in 1usize..8, seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let cb = Codebook::new(common::gaussian_matrix(&mut rng, 3, k)).unwrap();
        let set = TrajectorySet::new(common::gaussian_matrix(&mut rng, m, 3)).unwrap();
        let h = bow_encode(&set, &cb).unwrap();
        prop_assert_eq!(h.values().len(), k);
        prop_assert!((h.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(h.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn histogram_ignores_trajectory_order(m in 2usize..30, seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let cb = Codebook::new(common::gaussian_matrix(&mut rng, 2, 5)).unwrap();
        let pts = common::gaussian_matrix(&mut rng, m, 2);
        let rev = DMatrix::from_fn(m, 2, |i, j| pts[(m - 1 - i, j)]);
        let a = bow_encode(&TrajectorySet::new(pts).unwrap(), &cb).unwrap();
        let b = bow_encode(&TrajectorySet::new(rev).unwrap(), &cb).unwrap();
        prop_assert_eq!(a, b);
    }
}
