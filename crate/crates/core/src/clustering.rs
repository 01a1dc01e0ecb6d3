//! K-means over workers' preference posteriors, an elbow rule for the
//! number of groups, and the group-conditional truths.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{self, Matrix};
use crate::rng;
use crate::sdr::SdrParams;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClusterModel {
    /// `C x M`, rows renormalised onto the simplex.
    pub centroids: Matrix,
    pub assignment: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Sum of squared distances to the assigned centroid.
    pub inertia: f64,
    /// Inertia after each Lloyd iteration of the winning restart.
    pub history: Vec<f64>,
}

impl ClusterModel {
    pub fn num_clusters(&self) -> usize {
        self.centroids.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KMeansConfig {
    /// Independent k-means++ starts; the lowest inertia wins.
    pub restarts: usize,
    pub max_iterations: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iterations: 300,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.iter_rows().enumerate() {
        let d = sq_dist(point, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// K-means with the default configuration.
pub fn kmeans(points: &Matrix, clusters: usize, seed: u64) -> Result<ClusterModel> {
    kmeans_with(points, clusters, seed, &KMeansConfig::default())
}

/// K-means++ seeding followed by Lloyd iterations until the assignment is
/// fixed or `max_iterations` is reached, over `restarts` independent starts.
/// Rows of `points` are expected to lie on the probability simplex.
pub fn kmeans_with(points: &Matrix, clusters: usize, seed: u64, config: &KMeansConfig) -> Result<ClusterModel> {
    let n = points.rows();
    if clusters == 0 || clusters > n {
        return Err(Error::InvalidArgument(alloc::format!(
            "cluster count {clusters} must lie in 1..={n}"
        )));
    }
    if config.restarts == 0 || config.max_iterations == 0 {
        return Err(Error::InvalidArgument("restarts and max_iterations must be positive".into()));
    }
    let mut best: Option<ClusterModel> = None;
    for restart in 0..config.restarts {
        let mut rng = rng::stream_indexed(seed, "kmeans", restart as u64);
        let model = lloyd(points, plus_plus(points, clusters, &mut rng), config.max_iterations);
        if best.as_ref().is_none_or(|b| model.inertia < b.inertia) {
            best = Some(model);
        }
    }
    let mut model = best.expect("at least one restart");
    for c in 0..clusters {
        let row = model.centroids.row_mut(c);
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|x| *x /= total);
        }
    }
    Ok(model)
}

fn plus_plus<R: Rng + ?Sized>(points: &Matrix, clusters: usize, rng: &mut R) -> Matrix {
    let n = points.rows();
    let mut centroids = Matrix::zeros(clusters, points.cols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut dist: Vec<f64> = (0..n).map(|p| sq_dist(points.row(p), centroids.row(0))).collect();
    for c in 1..clusters {
        let pick = if dist.iter().sum::<f64>() > 0.0 {
            rng::categorical(rng, &dist)
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for (p, d) in dist.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(p), centroids.row(c)));
        }
    }
    centroids
}

fn lloyd(points: &Matrix, mut centroids: Matrix, max_iterations: usize) -> ClusterModel {
    let (n, clusters, dim) = (points.rows(), centroids.rows(), points.cols());
    let mut assignment = vec![usize::MAX; n];
    let mut history = Vec::new();
    for _ in 0..max_iterations {
        let mut changed = false;
        for p in 0..n {
            let (c, _) = nearest(points.row(p), &centroids);
            if assignment[p] != c {
                assignment[p] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        update_centroids(points, &mut assignment, &mut centroids);
        let inertia = (0..n).map(|p| sq_dist(points.row(p), centroids.row(assignment[p]))).sum();
        history.push(inertia);
    }
    let mut sizes = vec![0usize; clusters];
    for &c in &assignment {
        sizes[c] += 1;
    }
    let inertia = (0..n).map(|p| sq_dist(points.row(p), centroids.row(assignment[p]))).sum();
    debug_assert_eq!(centroids.cols(), dim);
    ClusterModel {
        centroids,
        assignment,
        sizes,
        inertia,
        history,
    }
}

/// Recomputes means; an emptied cluster is reseeded at the point farthest
/// from its current centroid, which then moves to that cluster.
fn update_centroids(points: &Matrix, assignment: &mut [usize], centroids: &mut Matrix) {
    let (clusters, dim) = (centroids.rows(), points.cols());
    let mut sums = Matrix::zeros(clusters, dim);
    let mut counts = vec![0usize; clusters];
    for (p, &c) in assignment.iter().enumerate() {
        counts[c] += 1;
        for (s, x) in sums.row_mut(c).iter_mut().zip(points.row(p)) {
            *s += x;
        }
    }
    for c in 0..clusters {
        if counts[c] > 0 {
            continue;
        }
        let far = (0..points.rows())
            .filter(|&p| counts[assignment[p]] > 1)
            .map(|p| (p, sq_dist(points.row(p), centroids.row(assignment[p]))))
            .fold(None, |acc: Option<(usize, f64)>, (p, d)| match acc {
                Some((_, bd)) if bd >= d => acc,
                _ => Some((p, d)),
            });
        if let Some((p, _)) = far {
            log::debug!("k-means cluster {c} emptied; reseeded at point {p}");
            let old = assignment[p];
            counts[old] -= 1;
            for (s, x) in sums.row_mut(old).iter_mut().zip(points.row(p)) {
                *s -= x;
            }
            assignment[p] = c;
            counts[c] = 1;
            sums.row_mut(c).copy_from_slice(points.row(p));
        }
    }
    for c in 0..clusters {
        if counts[c] == 0 {
            continue;
        }
        for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
            *dst = s / counts[c] as f64;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ElbowConfig {
    pub folds: usize,
    /// Stop at `C` once the next cluster buys less than this fraction of
    /// the one-cluster score.
    pub threshold: f64,
    /// Scores at or below this count as already explained.
    pub floor: f64,
    pub kmeans: KMeansConfig,
}

impl Default for ElbowConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            threshold: 0.1,
            floor: 1e-3,
            kmeans: KMeansConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ElbowReport {
    /// `curve[c - 1]` is the mean held-out nearest-centroid squared distance for `c` clusters.
    pub curve: Vec<f64>,
    pub folds: usize,
    pub chosen: usize,
}

/// Default `c_max`: `min(8, I)`.
pub fn default_max_clusters(num_points: usize) -> usize {
    num_points.clamp(1, 8)
}

/// Chooses the number of clusters by cross-validated held-out distance.
/// Folds partition the rows; `C*` is the smallest `C` for which
/// `curve[C] - curve[C + 1] < threshold * curve[1]`, the score has reached
/// `floor`, or `C = c_max`.
pub fn elbow_select(points: &Matrix, max_clusters: usize, seed: u64, config: &ElbowConfig) -> Result<(usize, ElbowReport)> {
    let n = points.rows();
    if max_clusters == 0 || n == 0 {
        return Err(Error::InvalidArgument("elbow needs at least one point and one cluster".into()));
    }
    let mut folds = config.folds.max(1);
    if n < folds {
        log::warn!("only {n} points for {folds} folds; using {n} folds");
        folds = n;
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng::stream(seed, "elbow/folds"), &mut order);
    let fold_of = |pos: usize| pos * folds / n;

    let max_clusters = max_clusters.min(n);
    let mut curve = Vec::with_capacity(max_clusters);
    for c in 1..=max_clusters {
        let mut total = 0.0;
        let mut used = 0usize;
        for f in 0..folds {
            let (mut train, mut test) = (Vec::new(), Vec::new());
            for (pos, &p) in order.iter().enumerate() {
                if folds > 1 && fold_of(pos) == f {
                    test.push(p);
                } else {
                    train.push(p);
                }
            }
            if folds == 1 {
                test = train.clone();
            }
            if test.is_empty() {
                continue;
            }
            let train_points = select_rows(points, &train);
            let k = c.min(train.len());
            let fold_seed = rng::derive_seed_indexed(seed, "elbow/fit", (c * folds + f) as u64);
            let model = kmeans_with(&train_points, k, fold_seed, &config.kmeans)?;
            let score: f64 = test.iter().map(|&p| nearest(points.row(p), &model.centroids).1).sum();
            total += score / test.len() as f64;
            used += 1;
        }
        curve.push(total / used as f64);
    }
    let chosen = knee(&curve, config.threshold, config.floor);
    Ok((chosen, ElbowReport { curve, folds, chosen }))
}

fn knee(curve: &[f64], threshold: f64, floor: f64) -> usize {
    let base = curve[0];
    for c in 1..=curve.len() {
        if c == curve.len() || curve[c - 1] <= floor || curve[c - 1] - curve[c] < threshold * base {
            return c;
        }
    }
    curve.len()
}

fn select_rows(points: &Matrix, rows: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(rows.len(), points.cols());
    for (dst, &src) in rows.iter().enumerate() {
        out.row_mut(dst).copy_from_slice(points.row(src));
    }
    out
}

/// Group-conditional truth distributions.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClusterTruth {
    /// One `J x K` matrix per cluster.
    pub dist: Vec<Matrix>,
    /// `argmax[c][j]`, ties to the lowest option index.
    pub argmax: Vec<Vec<usize>>,
}

/// `P(l_cj = k | c) = sum_m softmax_k(u_m * v_j) * centroid_c[m]`.
pub fn cluster_truth(model: &ClusterModel, params: &SdrParams) -> Result<ClusterTruth> {
    if model.centroids.cols() != params.num_preferences() {
        return Err(Error::LengthMismatch {
            expected: params.num_preferences(),
            found: model.centroids.cols(),
        });
    }
    let (n_questions, k_count) = (params.v.rows(), params.num_options());
    let mut dist = Vec::with_capacity(model.num_clusters());
    let mut argmax = Vec::with_capacity(model.num_clusters());
    for centroid in model.centroids.iter_rows() {
        let mut m = Matrix::zeros(n_questions, k_count);
        for j in 0..n_questions {
            m.row_mut(j).copy_from_slice(&crate::sdr::mixed_truth(params, j, centroid));
        }
        argmax.push(m.iter_rows().map(math::argmax).collect());
        dist.push(m);
    }
    Ok(ClusterTruth { dist, argmax })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ClusterStrategy {
    #[default]
    LargestGroup,
    HighestExpertise,
}

/// Picks the cluster whose truths are reported; ties go to the lowest index.
pub fn select_cluster(model: &ClusterModel, params: &SdrParams, strategy: ClusterStrategy) -> usize {
    let score: Vec<f64> = match strategy {
        ClusterStrategy::LargestGroup => model.sizes.iter().map(|&s| s as f64).collect(),
        ClusterStrategy::HighestExpertise => {
            let mut sums = vec![0.0; model.num_clusters()];
            for (i, &c) in model.assignment.iter().enumerate() {
                sums[c] += params.e[i];
            }
            sums.iter()
                .zip(&model.sizes)
                .map(|(s, &n)| if n == 0 { f64::NEG_INFINITY } else { s / n as f64 })
                .collect()
        }
    };
    math::argmax(&score)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model_with(sizes: Vec<usize>, assignment: Vec<usize>) -> ClusterModel {
        let c = sizes.len();
        ClusterModel {
            centroids: Matrix::filled(c, 2, 0.5),
            assignment,
            sizes,
            inertia: 0.0,
            history: Vec::new(),
        }
    }

    fn params(e: Vec<f64>) -> SdrParams {
        SdrParams {
            e,
            d: vec![0.0],
            u: Matrix::zeros(2, 2),
            v: Matrix::zeros(1, 2),
        }
    }

    #[test]
    fn identical_rows_single_cluster() {
        let pts = Matrix::from_rows(&vec![vec![0.3, 0.7]; 6]);
        let m = kmeans(&pts, 1, 1).unwrap();
        assert!((m.centroids.get(0, 0) - 0.3).abs() < 1e-15);
        assert!((m.centroids.get(0, 1) - 0.7).abs() < 1e-15);
        assert!(m.inertia < 1e-30);
    }

    #[test]
    fn point_masses_recovered() {
        let mut rows = vec![vec![1.0, 0.0]; 5];
        rows.extend(vec![vec![0.0, 1.0]; 7]);
        let m = kmeans(&Matrix::from_rows(&rows), 2, 3).unwrap();
        let mut cs: Vec<Vec<f64>> = m.centroids.iter_rows().map(|r| r.to_vec()).collect();
        cs.sort_by(|a, b| b[0].total_cmp(&a[0]));
        assert_eq!(cs, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(m.inertia, 0.0);
    }

    #[test]
    fn rejects_bad_cluster_count() {
        let pts = Matrix::from_rows(&[vec![1.0, 0.0]]);
        assert!(kmeans(&pts, 2, 0).is_err());
        assert!(kmeans(&pts, 0, 0).is_err());
    }

    #[test]
    fn forced_single_cluster_curve() {
        let pts = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]]);
        let (c, report) = elbow_select(&pts, 1, 0, &ElbowConfig::default()).unwrap();
        assert_eq!(c, 1);
        assert_eq!(report.curve.len(), 1);
        assert_eq!(report.folds, 3);
    }

    #[test]
    fn knee_rule() {
        assert_eq!(knee(&[1.0, 0.1, 0.09, 0.085], 0.1, 1e-3), 2);
        assert_eq!(knee(&[1e-4, 1e-5], 0.1, 1e-3), 1);
        assert_eq!(knee(&[1.0, 0.5, 0.45], 0.1, 1e-3), 2);
        assert_eq!(knee(&[1.0, 0.7, 0.4], 0.1, 1e-3), 3);
    }

    #[test]
    fn select_rules() {
        let p = params(vec![0.0; 13]);
        let m = model_with(vec![10, 3], vec![0; 13]);
        assert_eq!(select_cluster(&m, &p, ClusterStrategy::LargestGroup), 0);
        assert_eq!(select_cluster(&model_with(vec![4, 4], vec![0; 8]), &p, ClusterStrategy::LargestGroup), 0);
        let p = params(vec![0.1, 2.0]);
        let m = model_with(vec![1, 1], vec![0, 1]);
        assert_eq!(select_cluster(&m, &p, ClusterStrategy::HighestExpertise), 1);
    }

    #[test]
    fn one_hot_centroid_collapses_to_softmax() {
        let p = SdrParams {
            e: vec![0.0],
            d: vec![0.0],
            u: Matrix::from_rows(&[vec![1.0, -1.0], vec![0.2, 0.3]]),
            v: Matrix::from_rows(&[vec![0.5, 2.0]]),
        };
        let mut m = model_with(vec![1], vec![0]);
        m.centroids = Matrix::from_rows(&[vec![0.0, 1.0]]);
        let ct = cluster_truth(&m, &p).unwrap();
        let psi = crate::sdr::truth_softmax(p.u.row(1), p.v.row(0)).probs;
        assert_eq!(ct.dist[0].row(0), psi.as_slice());
    }

    #[test]
    fn even_mix_of_opposite_one_hots() {
        let p = SdrParams {
            e: vec![0.0],
            d: vec![0.0],
            u: Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]),
            v: Matrix::from_rows(&[vec![800.0, 800.0]]),
        };
        let mut m = model_with(vec![1], vec![0]);
        m.centroids = Matrix::from_rows(&[vec![0.5, 0.5]]);
        let ct = cluster_truth(&m, &p).unwrap();
        assert_eq!(ct.dist[0].row(0), &[0.5, 0.5]);
        assert_eq!(ct.argmax[0], vec![0]);
    }
}
