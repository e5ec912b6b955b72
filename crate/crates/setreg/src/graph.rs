//! The constraints graph: pairwise Euclidean distances over the image set
//! and the four proximal/distal edge-construction schemes.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SetRegError};
use crate::grid::{euclidean_distance, ImageSet};

/// Edge-construction rules. Proximal rules connect similar images, distal
/// rules connect the outliers back into the set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphScheme {
    /// Edge to each of the k nearest neighbours.
    Knn,
    /// Edge to every image within the proximity threshold.
    ThresholdNear,
    /// Edge to each of the k furthest images.
    KFurthest,
    /// Edge to every image at or beyond the remoteness threshold.
    ThresholdFar,
}

/// Which schemes are active and their parameters. Edges are the union over
/// all active schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub schemes: Vec<GraphScheme>,
    pub k_near: usize,
    pub k_far: usize,
    /// Proximity threshold for [`GraphScheme::ThresholdNear`].
    pub d_thres_near: Option<f64>,
    /// Remoteness threshold for [`GraphScheme::ThresholdFar`].
    pub d_thres_far: Option<f64>,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            schemes: vec![GraphScheme::Knn, GraphScheme::KFurthest],
            k_near: 3,
            k_far: 3,
            d_thres_near: None,
            d_thres_far: None,
        }
    }
}

impl GraphConfig {
    fn validate(&self, n: usize) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(SetRegError::InvalidConfig("no graph schemes active".into()));
        }
        for scheme in &self.schemes {
            match scheme {
                GraphScheme::Knn => {
                    if self.k_near == 0 || self.k_near > n - 1 {
                        return Err(SetRegError::InvalidConfig(format!(
                            "k_near {} outside 1..={} for n = {n}",
                            self.k_near,
                            n - 1
                        )));
                    }
                }
                GraphScheme::KFurthest => {
                    if self.k_far == 0 || self.k_far > n - 1 {
                        return Err(SetRegError::InvalidConfig(format!(
                            "k_far {} outside 1..={} for n = {n}",
                            self.k_far,
                            n - 1
                        )));
                    }
                }
                GraphScheme::ThresholdNear => match self.d_thres_near {
                    Some(d) if d > 0.0 => {}
                    _ => {
                        return Err(SetRegError::InvalidConfig(
                            "threshold_near scheme needs a positive d_thres_near".into(),
                        ))
                    }
                },
                GraphScheme::ThresholdFar => match self.d_thres_far {
                    Some(d) if d > 0.0 => {}
                    _ => {
                        return Err(SetRegError::InvalidConfig(
                            "threshold_far scheme needs a positive d_thres_far".into(),
                        ))
                    }
                },
            }
        }
        Ok(())
    }

    /// Copy with the neighbour counts clamped to n-1, so a configuration
    /// tuned for large sets stays valid on small subsets.
    pub fn clamped_for(&self, n: usize) -> GraphConfig {
        let mut cfg = self.clone();
        cfg.k_near = cfg.k_near.min(n.saturating_sub(1)).max(1);
        cfg.k_far = cfg.k_far.min(n.saturating_sub(1)).max(1);
        cfg
    }
}

/// Symmetric pairwise Euclidean distances with zero diagonal.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Builds a matrix from explicit entries (must be square, symmetric
    /// within rounding, zero diagonal).
    pub fn from_values(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(SetRegError::InvalidInput(format!(
                "{} entries for a {n}x{n} matrix",
                data.len()
            )));
        }
        Ok(DistanceMatrix { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

/// Distance matrix over the raw grayscale images of the set.
pub fn distance_matrix(set: &ImageSet) -> Result<DistanceMatrix> {
    let n = set.len();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = euclidean_distance(&set.images()[i], &set.images()[j])?;
            data[i * n + j] = d;
            data[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix { n, data })
}

/// Binary directed weight matrix plus the distances it was built from.
#[derive(Debug, Clone)]
pub struct ConstraintsGraph {
    n: usize,
    weights: Vec<bool>,
    distances: DistanceMatrix,
}

impl ConstraintsGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.weights[i * self.n + j]
    }

    pub fn distances(&self) -> &DistanceMatrix {
        &self.distances
    }

    /// All directed edges (i, j) with weight 1, lexicographically ordered.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if self.weights[i * self.n + j] {
                    edges.push((i, j));
                }
            }
        }
        edges
    }

    pub fn edge_count(&self) -> usize {
        self.weights.iter().filter(|&&w| w).count()
    }

    /// Nodes with no incident edge in either direction. Such nodes get no
    /// fitness terms; the optimizer leaves their offsets at zero.
    pub fn isolated_nodes(&self) -> Vec<usize> {
        (0..self.n)
            .filter(|&v| {
                (0..self.n).all(|u| !self.has_edge(v, u) && !self.has_edge(u, v))
            })
            .collect()
    }

    /// Number of weakly-connected components.
    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.n];
        let mut count = 0;
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(v) = stack.pop() {
                for u in 0..self.n {
                    if !seen[u] && (self.has_edge(v, u) || self.has_edge(u, v)) {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
        }
        count
    }

    /// JSON view (node ids, directed edge list, distance matrix) for
    /// external inspection and visualization.
    pub fn dump_json(&self, ids: &[String]) -> serde_json::Value {
        let distances: Vec<Vec<f64>> = (0..self.n)
            .map(|i| (0..self.n).map(|j| self.distances.at(i, j)).collect())
            .collect();
        serde_json::json!({
            "nodes": ids,
            "edges": self.edges(),
            "distances": distances,
        })
    }
}

// Neighbour indices of `i` ordered by distance; ties broken by lower index.
fn ranked_neighbors(dist: &DistanceMatrix, i: usize, farthest_first: bool) -> Vec<usize> {
    let mut others: Vec<usize> = (0..dist.n()).filter(|&j| j != i).collect();
    others.sort_by(|&a, &b| {
        let (da, db) = (dist.at(i, a), dist.at(i, b));
        let ord = da.total_cmp(&db);
        let ord = if farthest_first { ord.reverse() } else { ord };
        ord.then(a.cmp(&b))
    });
    others
}

/// Applies every active scheme and unions the resulting edge sets.
/// The diagonal is forced to zero under every scheme.
pub fn build_graph(dist: &DistanceMatrix, cfg: &GraphConfig) -> Result<ConstraintsGraph> {
    let n = dist.n();
    if n < 2 {
        return Err(SetRegError::InvalidInput(format!(
            "constraints graph needs n >= 2, got {n}"
        )));
    }
    cfg.validate(n)?;
    let mut weights = vec![false; n * n];
    let mut add = |i: usize, j: usize| {
        if i != j {
            weights[i * n + j] = true;
        }
    };
    for scheme in &cfg.schemes {
        match scheme {
            GraphScheme::Knn => {
                for i in 0..n {
                    for &j in ranked_neighbors(dist, i, false).iter().take(cfg.k_near) {
                        add(i, j);
                    }
                }
            }
            GraphScheme::KFurthest => {
                for i in 0..n {
                    for &j in ranked_neighbors(dist, i, true).iter().take(cfg.k_far) {
                        add(i, j);
                    }
                }
            }
            GraphScheme::ThresholdNear => {
                let thres = cfg.d_thres_near.expect("validated");
                for i in 0..n {
                    for j in 0..n {
                        if i != j && dist.at(i, j) <= thres {
                            add(i, j);
                        }
                    }
                }
            }
            GraphScheme::ThresholdFar => {
                let thres = cfg.d_thres_far.expect("validated");
                for i in 0..n {
                    for j in 0..n {
                        if i != j && dist.at(i, j) >= thres {
                            add(i, j);
                        }
                    }
                }
            }
        }
    }
    Ok(ConstraintsGraph {
        n,
        weights,
        distances: dist.clone(),
    })
}
