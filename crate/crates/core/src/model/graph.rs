use crate::error::{FluError, Result};

/// Undirected adjacency between regions (bordering regions only).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionGraph {
    neighbors: Vec<Vec<usize>>,
}

impl RegionGraph {
    pub fn edgeless(n_regions: usize) -> Self {
        Self { neighbors: vec![Vec::new(); n_regions] }
    }

    /// Build from unordered pairs. Duplicate pairs collapse; self-loops and
    /// out-of-range endpoints are rejected.
    pub fn from_edges(n_regions: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n_regions];
        for &(a, b) in edges {
            if a >= n_regions || b >= n_regions {
                return Err(FluError::invalid(format!(
                    "edge ({a}, {b}) references a region outside 0..{n_regions}"
                )));
            }
            if a == b {
                return Err(FluError::invalid(format!("self-loop on region {a}")));
            }
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self { neighbors })
    }

    /// Path graph 0 - 1 - ... - (n-1).
    pub fn chain(n_regions: usize) -> Self {
        let edges: Vec<_> = (1..n_regions).map(|i| (i - 1, i)).collect();
        Self::from_edges(n_regions, &edges).expect("chain edges are valid")
    }

    /// Rook-adjacency lattice with `rows * cols` regions in row-major order.
    pub fn grid(rows: usize, cols: usize) -> Self {
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                if c + 1 < cols {
                    edges.push((i, i + 1));
                }
                if r + 1 < rows {
                    edges.push((i, i + cols));
                }
            }
        }
        Self::from_edges(rows * cols, &edges).expect("grid edges are valid")
    }

    #[inline]
    pub fn n_regions(&self) -> usize {
        self.neighbors.len()
    }

    #[inline]
    pub fn neighbors(&self, region: usize) -> &[usize] {
        &self.neighbors[region]
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn is_edgeless(&self) -> bool {
        self.neighbors.iter().all(Vec::is_empty)
    }

    /// Each undirected edge once, as `(a, b)` with `a < b`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.n_edges());
        for (a, list) in self.neighbors.iter().enumerate() {
            out.extend(list.iter().filter(|&&b| b > a).map(|&b| (a, b)));
        }
        out
    }

    pub fn max_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }
}
