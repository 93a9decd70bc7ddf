//! K-means over feature vectors, PAM K-medoids over arbitrary distances, and
//! cluster-count selection with the distortion ratio `f(K)`.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{chunk_features, LevelChunk, TileLegend};
use crate::rng::{self, streams};

pub const KMEANS_MAX_ITER: usize = 300;
pub const KMEANS_TOL: f64 = 1e-9;
/// `f(K)` values below this mark a clustering as better than uniform noise.
pub const DISTORTION_ACCEPT: f64 = 0.85;
pub const DEFAULT_RECLUSTER_THRESHOLD: f64 = 1.25;
pub const DEFAULT_CATEGORY_K_MAX: usize = 12;

const KMEDOIDS_MAX_SWAPS: usize = 10_000;
const SYMMETRY_SPOT_CHECKS: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("no points to cluster")]
    Empty,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds the {n} available items")]
    TooFewPoints { k: usize, n: usize },
    #[error("points have inconsistent dimensionality ({expected} vs {found})")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("points must have at least one dimension")]
    ZeroDimension,
    #[error("distance is asymmetric: d({i},{j}) = {dij} but d({j},{i}) = {dji}")]
    Asymmetric { i: usize, j: usize, dij: f64, dji: f64 },
    #[error("distance d({i},{j}) = {d} is negative or not finite")]
    InvalidDistance { i: usize, j: usize, d: f64 },
    #[error("need at least 2 chunks to categorize, got {0}")]
    TooFewChunks(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
    /// Sum of squared distances to the assigned center or medoid.
    pub inertia: f64,
}

impl ClusterAssignment {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|(_, &l)| l == cluster).map(|(i, _)| i).collect()
    }
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub assignment: ClusterAssignment,
    pub centers: Vec<Vec<f64>>,
    /// Inertia after each assignment step.
    pub inertia_trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_points<P: AsRef<[f64]>>(points: &[P]) -> Result<usize, ClusterError> {
    let dim = points.first().ok_or(ClusterError::Empty)?.as_ref().len();
    if dim == 0 {
        return Err(ClusterError::ZeroDimension);
    }
    for p in points {
        if p.as_ref().len() != dim {
            return Err(ClusterError::DimensionMismatch { expected: dim, found: p.as_ref().len() });
        }
    }
    Ok(dim)
}

/// Nearest center per point; ties go to the lower center index.
fn assign<P: AsRef<[f64]>>(points: &[P], centers: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let labels = points
        .iter()
        .map(|p| {
            let (best, d) = centers
                .iter()
                .map(|c| sq_dist(p.as_ref(), c))
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, d)| if d < acc.1 { (i, d) } else { acc });
            inertia += d;
            best
        })
        .collect();
    (labels, inertia)
}

/// Greedy farthest-point seeding: a random first center, then repeatedly the
/// point farthest from every chosen center (lowest index on ties).
fn farthest_point_seeds<P: AsRef<[f64]>>(points: &[P], k: usize, rng: &mut rng::Rng) -> Vec<Vec<f64>> {
    let first = rng.random_range(0..points.len());
    let mut centers = vec![points[first].as_ref().to_vec()];
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p.as_ref(), &centers[0])).collect();
    while centers.len() < k {
        let (next, _) = nearest
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
        let c = points[next].as_ref().to_vec();
        for (n, p) in nearest.iter_mut().zip(points) {
            *n = n.min(sq_dist(p.as_ref(), &c));
        }
        centers.push(c);
    }
    centers
}

/// Lloyd's algorithm from farthest-point seeds. Stops when no center moves by
/// `KMEANS_TOL` or after `KMEANS_MAX_ITER` iterations.
pub fn kmeans<P: AsRef<[f64]>>(points: &[P], k: usize, seed: u64) -> Result<KMeansFit, ClusterError> {
    let dim = check_points(points)?;
    if k == 0 {
        return Err(ClusterError::ZeroK);
    }
    if k > points.len() {
        return Err(ClusterError::TooFewPoints { k, n: points.len() });
    }
    let mut rng = rng::stream(seed, streams::CATEGORIZE);
    let mut centers = farthest_point_seeds(points, k, &mut rng);
    let mut trace = Vec::new();
    for _ in 0..KMEANS_MAX_ITER {
        let (labels, inertia) = assign(points, &centers);
        trace.push(inertia);
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p.as_ref()) {
                *s += x;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            // empty clusters keep their previous center
            if counts[c] == 0 {
                continue;
            }
            let mean: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(sq_dist(&mean, &centers[c]).sqrt());
            centers[c] = mean;
        }
        if shift < KMEANS_TOL {
            break;
        }
    }
    let (labels, inertia) = assign(points, &centers);
    if trace.last() != Some(&inertia) {
        trace.push(inertia);
    }
    Ok(KMeansFit { assignment: ClusterAssignment { labels, k, inertia }, centers, inertia_trace: trace })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionCurve {
    /// `f(K)` for K = 1..=k_max.
    pub f_values: BTreeMap<usize, f64>,
    /// The distortion `S_K` each `f(K)` was computed from.
    pub distortions: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KEstimate {
    pub k: usize,
    pub curve: DistortionCurve,
}

/// Weight `α_K` correcting for the dimensionality of the data.
pub fn distortion_alpha(k: usize, dim: usize) -> f64 {
    assert!(k >= 2, "alpha is defined for K >= 2");
    let mut alpha = 1.0 - 3.0 / (4.0 * dim as f64);
    for _ in 2..k {
        alpha += (1.0 - alpha) / 6.0;
    }
    alpha
}

/// Builds `f(K)` from distortions `S_1..S_kmax` (index 0 holds `S_1`) and
/// picks K: among the K with `f(K) < 0.85`, the one with the lowest `f(K)`
/// (smaller K on ties); K = 1 when none qualifies.
pub fn select_k(distortions: &[f64], dim: usize) -> KEstimate {
    let mut f_values = BTreeMap::new();
    let mut by_k = BTreeMap::new();
    for (i, &s) in distortions.iter().enumerate() {
        let k = i + 1;
        by_k.insert(k, s);
        let f = if k == 1 {
            1.0
        } else {
            let prev = distortions[i - 1];
            if prev == 0.0 {
                1.0
            } else {
                s / (distortion_alpha(k, dim) * prev)
            }
        };
        f_values.insert(k, f);
    }
    let k = f_values
        .iter()
        .filter(|(_, &f)| f < DISTORTION_ACCEPT)
        .fold(None, |best: Option<(usize, f64)>, (&k, &f)| match best {
            Some((_, bf)) if bf <= f => best,
            _ => Some((k, f)),
        })
        .map_or(1, |(k, _)| k);
    KEstimate { k, curve: DistortionCurve { f_values, distortions: by_k } }
}

/// Largest K actually tried for `n` items. Splitting every item into its own
/// cluster drives the distortion to zero and the ratio with it, so the scan
/// stops at half the items.
pub fn scan_limit(k_max: usize, n: usize) -> usize {
    k_max.min(n.div_ceil(2)).max(1)
}

fn check_k_max(k_max: usize, n: usize) -> Result<(), ClusterError> {
    if k_max == 0 {
        return Err(ClusterError::ZeroK);
    }
    if k_max > n {
        return Err(ClusterError::TooFewPoints { k: k_max, n });
    }
    Ok(())
}

fn estimate_k_fits<P: AsRef<[f64]>>(
    points: &[P],
    k_max: usize,
    seed: u64,
) -> Result<(KEstimate, Vec<KMeansFit>), ClusterError> {
    let dim = check_points(points)?;
    check_k_max(k_max, points.len())?;
    let fits = (1..=scan_limit(k_max, points.len()))
        .map(|k| kmeans(points, k, rng::derive(seed, k as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    // distortions at round-off level are exact fits
    let floor = 1e-12 * points.iter().map(|p| p.as_ref().iter().map(|x| x * x).sum::<f64>()).sum::<f64>();
    let distortions: Vec<f64> =
        fits.iter().map(|f| f.assignment.inertia).map(|s| if s <= floor { 0.0 } else { s }).collect();
    Ok((select_k(&distortions, dim), fits))
}

/// Runs K-means for every K in `1..=scan_limit(k_max, n)` and selects K from the distortion
/// ratio curve.
pub fn estimate_k<P: AsRef<[f64]>>(points: &[P], k_max: usize, seed: u64) -> Result<KEstimate, ClusterError> {
    estimate_k_fits(points, k_max, seed).map(|(est, _)| est)
}

/// Dense symmetric distance matrix, validated on construction.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    /// Evaluates `distance` on the upper triangle and spot-checks symmetry on
    /// up to 64 pairs (every pair for small n).
    pub fn from_fn(n: usize, distance: impl Fn(usize, usize) -> f64, seed: u64) -> Result<Self, ClusterError> {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            let dii = distance(i, i);
            if dii != 0.0 {
                return Err(ClusterError::InvalidDistance { i, j: i, d: dii });
            }
            for j in i + 1..n {
                let dij = distance(i, j);
                if !(dij.is_finite() && dij >= 0.0) {
                    return Err(ClusterError::InvalidDistance { i, j, d: dij });
                }
                d[i * n + j] = dij;
                d[j * n + i] = dij;
            }
        }
        let pairs = n * n.saturating_sub(1) / 2;
        let check = |i: usize, j: usize| {
            let (dij, dji) = (d[i * n + j], distance(j, i));
            if (dij - dji).abs() > 1e-12 * dij.abs().max(1.0) {
                Err(ClusterError::Asymmetric { i, j, dij, dji })
            } else {
                Ok(())
            }
        };
        if pairs <= SYMMETRY_SPOT_CHECKS {
            for i in 0..n {
                for j in i + 1..n {
                    check(i, j)?;
                }
            }
        } else {
            let mut rng = rng::stream(seed, streams::STYLES);
            for _ in 0..SYMMETRY_SPOT_CHECKS {
                let i = rng.random_range(0..n);
                let j = rng.random_range(0..n);
                if i != j {
                    check(i.min(j), i.max(j))?;
                }
            }
        }
        Ok(Self { n, d })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }
}

#[derive(Debug, Clone)]
pub struct KMedoidsFit {
    pub assignment: ClusterAssignment,
    /// Medoid item indices, ascending; cluster `c` is medoid `medoids[c]`.
    pub medoids: Vec<usize>,
    /// Sum of distances to the nearest medoid (the PAM objective).
    pub cost: f64,
    /// Cost before the first swap and after every accepted swap.
    pub cost_trace: Vec<f64>,
}

/// PAM over an arbitrary distance oracle.
pub fn kmedoids(
    n: usize,
    distance: impl Fn(usize, usize) -> f64,
    k: usize,
    seed: u64,
) -> Result<KMedoidsFit, ClusterError> {
    if n == 0 {
        return Err(ClusterError::Empty);
    }
    let matrix = DistanceMatrix::from_fn(n, distance, seed)?;
    kmedoids_matrix(&matrix, k, seed)
}

/// PAM swap descent from seeded random medoids until no swap lowers the cost.
pub fn kmedoids_matrix(d: &DistanceMatrix, k: usize, seed: u64) -> Result<KMedoidsFit, ClusterError> {
    let n = d.len();
    if n == 0 {
        return Err(ClusterError::Empty);
    }
    if k == 0 {
        return Err(ClusterError::ZeroK);
    }
    if k > n {
        return Err(ClusterError::TooFewPoints { k, n });
    }
    let mut rng = rng::stream(seed, streams::STYLES);
    let mut medoids = index::sample(&mut rng, n, k).into_vec();
    medoids.sort_unstable();
    let mut is_medoid = vec![false; n];
    for &m in &medoids {
        is_medoid[m] = true;
    }

    // nearest / second-nearest medoid slots per item
    let nearest = |medoids: &[usize]| -> Vec<(usize, f64, f64)> {
        (0..n)
            .map(|j| {
                let (mut s1, mut d1, mut d2) = (0, f64::INFINITY, f64::INFINITY);
                for (s, &m) in medoids.iter().enumerate() {
                    let dj = d.get(j, m);
                    if dj < d1 {
                        d2 = d1;
                        d1 = dj;
                        s1 = s;
                    } else if dj < d2 {
                        d2 = dj;
                    }
                }
                (s1, d1, d2)
            })
            .collect()
    };

    let mut near = nearest(&medoids);
    let mut cost: f64 = near.iter().map(|x| x.1).sum();
    let mut trace = vec![cost];
    for _ in 0..KMEDOIDS_MAX_SWAPS {
        let mut best: Option<(usize, usize, f64)> = None;
        for slot in 0..k {
            for o in (0..n).filter(|&o| !is_medoid[o]) {
                let mut delta = 0.0;
                for (j, &(s1, d1, d2)) in near.iter().enumerate() {
                    let djo = d.get(j, o);
                    if s1 == slot {
                        delta += djo.min(d2) - d1;
                    } else if djo < d1 {
                        delta += djo - d1;
                    }
                }
                if best.is_none_or(|(_, _, bd)| delta < bd) {
                    best = Some((slot, o, delta));
                }
            }
        }
        match best {
            Some((slot, o, delta)) if delta < -1e-12 * cost.max(1.0) => {
                is_medoid[medoids[slot]] = false;
                is_medoid[o] = true;
                medoids[slot] = o;
                near = nearest(&medoids);
                let new_cost: f64 = near.iter().map(|x| x.1).sum();
                // guard against float drift producing a non-improving swap
                if new_cost > cost {
                    break;
                }
                cost = new_cost;
                trace.push(cost);
            }
            _ => break,
        }
    }

    medoids.sort_unstable();
    let mut labels = Vec::with_capacity(n);
    let mut inertia = 0.0;
    cost = 0.0;
    for j in 0..n {
        let (label, dj) = match medoids.binary_search(&j) {
            Ok(own) => (own, 0.0),
            Err(_) => medoids.iter().map(|&m| d.get(j, m)).enumerate().fold((0, f64::INFINITY), |acc, (s, x)| {
                if x < acc.1 {
                    (s, x)
                } else {
                    acc
                }
            }),
        };
        labels.push(label);
        cost += dj;
        inertia += dj * dj;
    }
    Ok(KMedoidsFit { assignment: ClusterAssignment { labels, k, inertia }, medoids, cost, cost_trace: trace })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    /// `"<parent>"` or `"<parent>-<child>"` after reclustering.
    pub id: String,
    /// Indices into the categorized chunk list, ascending.
    pub chunks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Categorization {
    pub categories: Vec<Category>,
    pub estimate: KEstimate,
}

#[derive(Debug, Clone, Copy)]
pub struct CategorizeConfig {
    pub k_max: usize,
    pub recluster_threshold: f64,
}

impl Default for CategorizeConfig {
    fn default() -> Self {
        Self { k_max: DEFAULT_CATEGORY_K_MAX, recluster_threshold: DEFAULT_RECLUSTER_THRESHOLD }
    }
}

fn mean_pairwise(points: &[&[f64]]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += sq_dist(points[i], points[j]).sqrt();
        }
    }
    total / (n * (n - 1) / 2) as f64
}

/// Groups of member indices, in order of their lowest member.
fn groups(labels: &[usize]) -> Vec<Vec<usize>> {
    let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_label.entry(l).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = by_label.into_values().collect();
    out.sort_by_key(|g| g[0]);
    out
}

/// Clusters chunks into categories of chunk types. Clusters that are much
/// looser than the corpus as a whole are split once more by the same
/// procedure.
pub fn categorize_chunks(
    chunks: &[LevelChunk],
    legend: &TileLegend,
    seed: u64,
    config: CategorizeConfig,
) -> Result<Categorization, ClusterError> {
    if chunks.len() < 2 {
        return Err(ClusterError::TooFewChunks(chunks.len()));
    }
    let features: Vec<Vec<f64>> = chunks.iter().map(|c| chunk_features(c, legend).0).collect();
    let k_max = config.k_max.clamp(1, features.len());
    let seed = rng::derive(seed, streams::CATEGORIZE);
    let (estimate, fits) = estimate_k_fits(&features, k_max, seed)?;
    let top = groups(&fits[estimate.k - 1].assignment.labels);

    let recluster = config.recluster_threshold.is_finite();
    let corpus_mean =
        if recluster { mean_pairwise(&features.iter().map(Vec::as_slice).collect::<Vec<_>>()) } else { 0.0 };

    let mut categories = Vec::new();
    for (parent, members) in top.into_iter().enumerate() {
        let pts: Vec<&[f64]> = members.iter().map(|&i| features[i].as_slice()).collect();
        let loose = recluster
            && corpus_mean > 0.0
            && members.len() >= 2
            && mean_pairwise(&pts) > config.recluster_threshold * corpus_mean;
        if loose {
            let sub_seed = rng::derive(seed, 1000 + parent as u64);
            let (sub_est, sub_fits) = estimate_k_fits(&pts, config.k_max.clamp(1, pts.len()), sub_seed)?;
            if sub_est.k > 1 {
                for (child, sub) in groups(&sub_fits[sub_est.k - 1].assignment.labels).into_iter().enumerate() {
                    categories.push(Category {
                        id: format!("{parent}-{child}"),
                        chunks: sub.into_iter().map(|i| members[i]).collect(),
                    });
                }
                continue;
            }
        }
        categories.push(Category { id: parent.to_string(), chunks: members });
    }
    Ok(Categorization { categories, estimate })
}
