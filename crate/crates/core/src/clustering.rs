//! Top control layer: stage-averaged loads, overload-ranked centroid
//! initialisation, location-based k-means, and Calinski-Harabasz cluster
//! count selection.

use crate::scalar::Real;
use thiserror::Error;

/// Hard iteration cap for the k-means loop; convergence happens far earlier
/// in practice.
pub const MAX_KMEANS_ITERATIONS: usize = 100;

#[derive(Debug, Error)]
pub enum ClusteringError {
    #[error("load history is empty")]
    EmptyHistory,
    #[error("invalid cluster count: {0}")]
    BadClusterCount(String),
    #[error("cluster count range is empty")]
    EmptyRange,
}

/// Per-cell load series over one stage.
#[derive(Debug, Clone)]
pub struct LoadHistory<F> {
    start_time: u64,
    /// `series[cell][t]`, equal lengths across cells.
    series: Vec<Vec<F>>,
}

impl<F: Real> LoadHistory<F> {
    pub fn new(n_cells: usize, start_time: u64) -> Self {
        LoadHistory { start_time, series: vec![Vec::new(); n_cells] }
    }

    pub fn start_time(&self) -> u64 {
        self.start_time
    }

    pub fn len(&self) -> usize {
        self.series.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_cells(&self) -> usize {
        self.series.len()
    }

    /// Appends one sample per cell.
    pub fn push(&mut self, loads: &[F]) {
        assert_eq!(loads.len(), self.series.len(), "load sample size mismatch");
        for (s, &l) in self.series.iter_mut().zip(loads) {
            s.push(l);
        }
    }

    pub fn clear(&mut self, new_start: u64) {
        self.start_time = new_start;
        for s in &mut self.series {
            s.clear();
        }
    }
}

/// Arithmetic mean of each cell's load series over the stage.
pub fn stage_averaged_load<F: Real>(history: &LoadHistory<F>) -> Result<Vec<F>, ClusteringError> {
    if history.is_empty() {
        return Err(ClusteringError::EmptyHistory);
    }
    let len = F::lit(history.len() as f64);
    Ok(history
        .series
        .iter()
        .map(|s| s.iter().copied().sum::<F>() / len)
        .collect())
}

/// A partition of the cells into `h` clusters with their centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment<F> {
    pub h: usize,
    /// Cell id -> cluster index.
    pub membership: Vec<usize>,
    pub centroids: Vec<[F; 2]>,
}

impl<F: Real> ClusterAssignment<F> {
    /// Cell ids of each cluster, ascending within each cluster.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.h];
        for (cell, &c) in self.membership.iter().enumerate() {
            out[c].push(cell);
        }
        out
    }

    /// Every cell in exactly one cluster and every cluster non-empty.
    pub fn is_partition(&self) -> bool {
        self.membership.iter().all(|&c| c < self.h)
            && self.clusters().iter().all(|c| !c.is_empty())
    }
}

fn dist2<F: Real>(a: [F; 2], b: [F; 2]) -> F {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Ranks cells by descending stage-averaged load (ties to the lower id) and
/// returns the positions of the top `h` as initial centroids.
pub fn init_centroids<F: Real>(
    avg_loads: &[F],
    positions: &[[F; 2]],
    h: usize,
) -> Result<Vec<[F; 2]>, ClusteringError> {
    let n = positions.len();
    if h == 0 || h > n {
        return Err(ClusteringError::BadClusterCount(format!(
            "h = {h} outside 1..={n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        avg_loads[b]
            .partial_cmp(&avg_loads[a])
            .expect("finite loads")
            .then(a.cmp(&b))
    });
    Ok(order[..h].iter().map(|&i| positions[i]).collect())
}

/// Sum of squared distances from each point to its assigned centroid.
pub fn sse<F: Real>(positions: &[[F; 2]], assignment: &ClusterAssignment<F>) -> F {
    positions
        .iter()
        .zip(&assignment.membership)
        .map(|(&p, &c)| dist2(p, assignment.centroids[c]))
        .sum()
}

/// Alternating nearest-centroid assignment and centroid mean updates until
/// the centroids stop changing. Assignment ties go to the lower cluster
/// index; a cluster emptied by reassignment is re-seeded with the point
/// farthest from its currently assigned centroid.
pub fn run_kmeans<F: Real>(
    positions: &[[F; 2]],
    initial_centroids: &[[F; 2]],
) -> ClusterAssignment<F> {
    run_kmeans_traced(positions, initial_centroids).0
}

/// [`run_kmeans`] that also returns the SSE recorded after every iteration.
pub fn run_kmeans_traced<F: Real>(
    positions: &[[F; 2]],
    initial_centroids: &[[F; 2]],
) -> (ClusterAssignment<F>, Vec<F>) {
    assert!(!initial_centroids.is_empty(), "centroids must be non-empty");
    let n = positions.len();
    let h = initial_centroids.len();
    let mut centroids = initial_centroids.to_vec();
    let mut membership = vec![0usize; n];
    let mut trace = Vec::new();

    for _ in 0..MAX_KMEANS_ITERATIONS {
        // Assignment step.
        for (i, &p) in positions.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = dist2(p, centroids[0]);
            for (c, &ctr) in centroids.iter().enumerate().skip(1) {
                let d = dist2(p, ctr);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            membership[i] = best;
        }

        // Re-seed emptied clusters with the farthest assigned point.
        loop {
            let mut counts = vec![0usize; h];
            for &c in &membership {
                counts[c] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else { break };
            let farthest = (0..n)
                .max_by(|&a, &b| {
                    let da = dist2(positions[a], centroids[membership[a]]);
                    let db = dist2(positions[b], centroids[membership[b]]);
                    da.partial_cmp(&db).expect("finite distances").then(b.cmp(&a))
                })
                .expect("positions non-empty");
            membership[farthest] = empty;
            centroids[empty] = positions[farthest];
        }

        // Update step: centroid of each cluster is the member mean.
        let mut sums = vec![[F::zero(); 2]; h];
        let mut counts = vec![0usize; h];
        for (i, &c) in membership.iter().enumerate() {
            sums[c][0] += positions[i][0];
            sums[c][1] += positions[i][1];
            counts[c] += 1;
        }
        let new_centroids: Vec<[F; 2]> = sums
            .iter()
            .zip(&counts)
            .map(|(s, &cnt)| {
                let k = F::lit(cnt as f64);
                [s[0] / k, s[1] / k]
            })
            .collect();

        let assignment =
            ClusterAssignment { h, membership: membership.clone(), centroids: new_centroids.clone() };
        trace.push(sse(positions, &assignment));

        if new_centroids == centroids {
            return (assignment, trace);
        }
        centroids = new_centroids;
    }

    let assignment = ClusterAssignment { h, membership, centroids };
    (assignment, trace)
}

/// Between-cluster over within-cluster dispersion, normalised by degrees of
/// freedom: `(SSB / (H-1)) / (SSW / (N-H))`. Coincident clusters (zero SSW)
/// rank highest via an infinity sentinel. Defined for `1 < H < N` only.
pub fn calinski_harabasz<F: Real>(
    assignment: &ClusterAssignment<F>,
    positions: &[[F; 2]],
) -> Result<F, ClusteringError> {
    let n = positions.len();
    let h = assignment.h;
    if h <= 1 || h >= n {
        return Err(ClusteringError::BadClusterCount(format!(
            "Calinski-Harabasz needs 1 < H < N, got H = {h}, N = {n}"
        )));
    }
    let nf = F::lit(n as f64);
    let grand = positions.iter().fold([F::zero(); 2], |acc, p| {
        [acc[0] + p[0], acc[1] + p[1]]
    });
    let grand = [grand[0] / nf, grand[1] / nf];

    let clusters = assignment.clusters();
    let mut ssb = F::zero();
    for (c, members) in clusters.iter().enumerate() {
        ssb += F::lit(members.len() as f64) * dist2(assignment.centroids[c], grand);
    }
    let ssw = sse(positions, assignment);
    if ssw == F::zero() {
        return Ok(F::infinity());
    }
    let df_b = F::lit((h - 1) as f64);
    let df_w = F::lit((n - h) as f64);
    Ok((ssb / df_b) / (ssw / df_w))
}

/// Runs the full pipeline for every candidate `H` and keeps the assignment
/// with the highest Calinski-Harabasz score (ties to the smaller `H`).
pub fn select_num_clusters<F: Real>(
    positions: &[[F; 2]],
    avg_loads: &[F],
    h_range: impl IntoIterator<Item = usize>,
) -> Result<(ClusterAssignment<F>, Vec<(usize, F)>), ClusteringError> {
    let n = positions.len();
    let mut best: Option<(ClusterAssignment<F>, F)> = None;
    let mut scores = Vec::new();
    for h in h_range {
        if h < 2 || h + 1 > n {
            return Err(ClusteringError::BadClusterCount(format!(
                "candidate H = {h} outside 2..={}",
                n.saturating_sub(1)
            )));
        }
        let init = init_centroids(avg_loads, positions, h)?;
        let assignment = run_kmeans(positions, &init);
        let score = calinski_harabasz(&assignment, positions)?;
        scores.push((h, score));
        let replace = match &best {
            None => true,
            Some((_, best_score)) => score > *best_score,
        };
        if replace {
            best = Some((assignment, score));
        }
    }
    best.map(|(a, _)| (a, scores)).ok_or(ClusteringError::EmptyRange)
}
