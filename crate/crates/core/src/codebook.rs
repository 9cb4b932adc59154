//! K-means trajectory codebook and bag-of-words histograms.

use nalgebra::DMatrix;
use rand::Rng;

use crate::rng::{self, purpose};
use crate::{Error, Result};

/// Trajectory descriptors of one or more videos, one trajectory per row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet(DMatrix<f64>);

impl TrajectorySet {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(Error::invalid("trajectory descriptors must have at least one column"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("trajectory set contains non-finite entries"));
        }
        Ok(Self(values))
    }

    /// Stack several sets with the same descriptor dimension.
    pub fn concat<'a>(sets: impl IntoIterator<Item = &'a TrajectorySet>) -> Result<Self> {
        let sets: Vec<&TrajectorySet> = sets.into_iter().collect();
        let Some(first) = sets.first() else {
            return Err(Error::invalid("no trajectory sets to concatenate"));
        };
        let dim = first.dim();
        if sets.iter().any(|s| s.dim() != dim) {
            return Err(Error::invalid("trajectory sets disagree on descriptor dimension"));
        }
        let rows: usize = sets.iter().map(|s| s.len()).sum();
        let mut out = DMatrix::zeros(rows, dim);
        let mut r = 0;
        for set in sets {
            out.rows_mut(r, set.len()).copy_from(&set.0);
            r += set.len();
        }
        Ok(Self(out))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    fn point(&self, i: usize) -> Vec<f64> {
        self.0.row(i).iter().copied().collect()
    }
}

/// `K` centroids stored as the columns of a `p × K` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook(DMatrix<f64>);

impl Codebook {
    pub fn new(centroids: DMatrix<f64>) -> Result<Self> {
        if centroids.ncols() == 0 || centroids.nrows() == 0 {
            return Err(Error::invalid("codebook needs at least one centroid of positive dimension"));
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("codebook contains non-finite entries"));
        }
        Ok(Self(centroids))
    }

    pub fn centroids(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn size(&self) -> usize {
        self.0.ncols()
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// L1-normalized histogram of nearest-centroid assignments.
#[derive(Debug, Clone, PartialEq)]
pub struct BowHistogram(Vec<f64>);

impl BowHistogram {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

fn sq_dist_to_centroid(point: &[f64], centroids: &DMatrix<f64>, j: usize) -> f64 {
    point
        .iter()
        .zip(centroids.column(j).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

fn nearest(point: &[f64], centroids: &DMatrix<f64>) -> (usize, f64) {
    let mut best = (0, sq_dist_to_centroid(point, centroids, 0));
    for j in 1..centroids.ncols() {
        let d = sq_dist_to_centroid(point, centroids, j);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Index of the closest centroid in Euclidean distance, lowest index on ties.
pub fn nearest_centroid(v: &[f64], codebook: &Codebook) -> Result<usize> {
    if v.len() != codebook.dim() {
        return Err(Error::invalid(format!(
            "vector has dimension {} but codebook has {}",
            v.len(),
            codebook.dim()
        )));
    }
    Ok(nearest(v, &codebook.0).0)
}

/// Bag-of-words histogram of a video's trajectories.
pub fn bow_encode(trajectories: &TrajectorySet, codebook: &Codebook) -> Result<BowHistogram> {
    if trajectories.is_empty() {
        return Err(Error::invalid("no trajectories to encode"));
    }
    if trajectories.dim() != codebook.dim() {
        return Err(Error::invalid(format!(
            "trajectories have dimension {} but codebook has {}",
            trajectories.dim(),
            codebook.dim()
        )));
    }
    let mut counts = vec![0usize; codebook.size()];
    for i in 0..trajectories.len() {
        counts[nearest(&trajectories.point(i), &codebook.0).0] += 1;
    }
    let m = trajectories.len() as f64;
    Ok(BowHistogram(counts.into_iter().map(|c| c as f64 / m).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iters: 100,
            tol: 1e-6,
        }
    }
}

/// Result of a Lloyd run with its diagnostics.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub codebook: Codebook,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squares after each assignment step.
    pub objective: Vec<f64>,
    pub iterations: usize,
}

fn validate(points: &TrajectorySet, cfg: &KMeansConfig) -> Result<()> {
    if cfg.k == 0 {
        return Err(Error::invalid("codebook size must be positive"));
    }
    if points.len() < cfg.k {
        return Err(Error::invalid(format!(
            "{} points cannot seed {} clusters",
            points.len(),
            cfg.k
        )));
    }
    if cfg.max_iters == 0 {
        return Err(Error::invalid("max_iters must be positive"));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    Ok(())
}

/// Seeded k-means++ seeding. Returns the chosen point indices in order.
pub fn kmeans_plus_plus(points: &TrajectorySet, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 || points.len() < k {
        return Err(Error::invalid(format!(
            "{} points cannot seed {} clusters",
            points.len(),
            k
        )));
    }
    let mut rng = rng::stream(seed, purpose::KMEANS_INIT, &[]);
    let m = points.len();
    let pts: Vec<Vec<f64>> = (0..m).map(|i| points.point(i)).collect();
    let sq = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };

    let mut chosen = vec![rng.random_range(0..m)];
    let mut taken = vec![false; m];
    taken[chosen[0]] = true;
    let mut d2: Vec<f64> = pts.iter().map(|p| sq(p, &pts[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                acc += d;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // Every remaining point coincides with a chosen one.
            let free: Vec<usize> = (0..m).filter(|&i| !taken[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        taken[next] = true;
        chosen.push(next);
        for (i, p) in pts.iter().enumerate() {
            d2[i] = d2[i].min(sq(p, &pts[next]));
        }
    }
    Ok(chosen)
}

/// Lloyd iterations from k-means++ seeding.
pub fn kmeans_fit(points: &TrajectorySet, cfg: &KMeansConfig) -> Result<Codebook> {
    Ok(kmeans_fit_traced(points, cfg)?.codebook)
}

/// [`kmeans_fit`] returning assignments and the objective trace.
pub fn kmeans_fit_traced(points: &TrajectorySet, cfg: &KMeansConfig) -> Result<KMeansFit> {
    validate(points, cfg)?;
    let m = points.len();
    let p = points.dim();
    let k = cfg.k;
    let pts: Vec<Vec<f64>> = (0..m).map(|i| points.point(i)).collect();

    let seeds = kmeans_plus_plus(points, k, cfg.seed)?;
    let mut centroids = DMatrix::zeros(p, k);
    for (j, &i) in seeds.iter().enumerate() {
        for (r, &v) in pts[i].iter().enumerate() {
            centroids[(r, j)] = v;
        }
    }

    let mut assignments = vec![0usize; m];
    let mut dists = vec![0.0; m];
    let mut objective = Vec::new();
    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        iterations += 1;
        for (i, pt) in pts.iter().enumerate() {
            let (j, d) = nearest(pt, &centroids);
            assignments[i] = j;
            dists[i] = d;
        }
        objective.push(dists.iter().sum());

        let mut sums = DMatrix::<f64>::zeros(p, k);
        let mut counts = vec![0usize; k];
        for (i, pt) in pts.iter().enumerate() {
            let j = assignments[i];
            counts[j] += 1;
            for (r, &v) in pt.iter().enumerate() {
                sums[(r, j)] += v;
            }
        }
        let mut updated = centroids.clone();
        let mut reseeded = vec![false; m];
        for j in 0..k {
            if counts[j] > 0 {
                let n = counts[j] as f64;
                for r in 0..p {
                    updated[(r, j)] = sums[(r, j)] / n;
                }
                continue;
            }
            // Empty cluster: move it onto the worst-served point.
            let mut far = None;
            for i in 0..m {
                if reseeded[i] {
                    continue;
                }
                if far.is_none_or(|f: usize| dists[i] > dists[f]) {
                    far = Some(i);
                }
            }
            if let Some(i) = far {
                reseeded[i] = true;
                for (r, &v) in pts[i].iter().enumerate() {
                    updated[(r, j)] = v;
                }
            }
        }

        let shift = (0..k)
            .map(|j| (updated.column(j) - centroids.column(j)).norm())
            .fold(0.0, f64::max);
        centroids = updated;
        if shift < cfg.tol {
            break;
        }
    }

    Ok(KMeansFit {
        codebook: Codebook(centroids),
        assignments,
        objective,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[&[f64]]) -> TrajectorySet {
        let p = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        TrajectorySet::new(DMatrix::from_row_slice(rows.len(), p, &flat)).unwrap()
    }

    fn book(cols: &[&[f64]]) -> Codebook {
        let p = cols[0].len();
        let flat: Vec<f64> = cols.iter().flat_map(|c| c.iter().copied()).collect();
        Codebook::new(DMatrix::from_column_slice(p, cols.len(), &flat)).unwrap()
    }

    #[test]
    fn two_points_two_clusters() {
        let pts = set(&[&[0.0, 0.0], &[10.0, 10.0]]);
        let cb = kmeans_fit(&pts, &KMeansConfig::new(2, 3)).unwrap();
        let mut cols: Vec<(f64, f64)> = (0..2).map(|j| (cb.centroids()[(0, j)], cb.centroids()[(1, j)])).collect();
        cols.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(cols, vec![(0.0, 0.0), (10.0, 10.0)]);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = set(&[&[0.0, 0.0], &[2.0, 0.0], &[4.0, 0.0]]);
        let cb = kmeans_fit(&pts, &KMeansConfig::new(1, 0)).unwrap();
        assert_eq!(cb.centroids().as_slice(), &[2.0, 0.0]);
    }

    #[test]
    fn too_few_points() {
        let pts = set(&[&[0.0], &[1.0]]);
        assert!(matches!(
            kmeans_fit(&pts, &KMeansConfig::new(3, 0)),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn duplicate_points_still_seed() {
        let pts = set(&[&[1.0], &[1.0], &[1.0], &[2.0]]);
        let fit = kmeans_fit_traced(&pts, &KMeansConfig::new(3, 11)).unwrap();
        assert_eq!(fit.codebook.size(), 3);
    }

    #[test]
    fn nearest_with_ties() {
        let cb = book(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(nearest_centroid(&[1.0, 0.0], &cb).unwrap(), 0);
        assert_eq!(nearest_centroid(&[0.5, 0.5], &cb).unwrap(), 0);
        let cb3 = book(&[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, 0.0]]);
        assert_eq!(nearest_centroid(&[0.9, 0.1], &cb3).unwrap(), 0);
        assert!(nearest_centroid(&[0.9], &cb3).is_err());
    }

    #[test]
    fn histograms() {
        let cb4 = book(&[&[0.0, 0.0], &[1.0, 0.0], &[2.0, 0.0], &[3.0, 0.0]]);
        let h = bow_encode(&set(&[&[2.0, 0.0]]), &cb4).unwrap();
        assert_eq!(h.values(), &[0.0, 0.0, 1.0, 0.0]);

        let cb3 = book(&[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, 0.0]]);
        let trajs = set(&[&[1.0, 0.0], &[0.9, 0.1], &[0.0, 1.0]]);
        let h = bow_encode(&trajs, &cb3).unwrap();
        assert_eq!(h.values(), &[2.0 / 3.0, 1.0 / 3.0, 0.0]);

        let doubled = TrajectorySet::concat([&trajs, &trajs]).unwrap();
        assert_eq!(bow_encode(&doubled, &cb3).unwrap(), h);
    }

    #[test]
    fn empty_set_is_rejected() {
        let cb = book(&[&[1.0, 0.0]]);
        let empty = TrajectorySet::new(DMatrix::zeros(0, 2)).unwrap();
        assert!(matches!(bow_encode(&empty, &cb), Err(Error::InvalidInput(_))));
    }
}
