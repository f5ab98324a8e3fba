use serde::{Deserialize, Serialize};

use super::Mask;
use crate::error::{bail, Result};

/// Undirected edge list over packed samples or mesh vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborGraph {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
}

impl NeighborGraph {
    /// Normalizes each edge to `(min, max)`, sorts and deduplicates.
    /// Self-loops and out-of-range indices are rejected.
    pub fn new(n_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut out = Vec::new();
        for (a, b) in edges {
            if a >= n_nodes || b >= n_nodes {
                bail!(Index, "edge ({a}, {b}) references a node >= {n_nodes}");
            }
            if a == b {
                bail!(Index, "self-loop on node {a}");
            }
            out.push((a.min(b), a.max(b)));
        }
        out.sort_unstable();
        out.dedup();
        Ok(Self { n_nodes, edges: out })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n_nodes];
        for &(i, j) in &self.edges {
            d[i] += 1;
            d[j] += 1;
        }
        d
    }

    /// Edge endpoints as two index columns.
    pub fn endpoints(&self) -> (Vec<usize>, Vec<usize>) {
        self.edges.iter().copied().unzip()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    /// Neighbors along the first two axes only (slice-wise 2D).
    #[serde(rename = "grid2d")]
    Grid2D4,
    /// Neighbors along all three axes.
    #[serde(rename = "grid3d")]
    Grid3D6,
}

/// Axis-adjacent pairs of inside cells, indexed by packed position.
pub fn grid_graph(mask: &Mask, connectivity: Connectivity) -> NeighborGraph {
    let dims = mask.dims();
    let lookup = mask.packed_lookup();
    let axes: &[usize] = match connectivity {
        Connectivity::Grid2D4 => &[0, 1],
        Connectivity::Grid3D6 => &[0, 1, 2],
    };
    let mut edges = Vec::new();
    for (idx, slot) in lookup.iter().enumerate() {
        let Some(i) = *slot else { continue };
        let c = mask.coord(idx);
        for &ax in axes {
            if c[ax] + 1 < dims[ax] {
                let mut n = c;
                n[ax] += 1;
                if let Some(j) = lookup[mask.linear_index(n)] {
                    edges.push((i, j));
                }
            }
        }
    }
    let n = mask.count();
    NeighborGraph::new(n, edges).expect("grid edges are in range and loop-free")
}

/// Mesh connectivity given as triangles or as explicit edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub n_vertices: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faces: Option<Vec<[usize; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
}

/// Triangle faces expand to their three edges; explicit edges pass through.
pub fn mesh_graph(n_vertices: usize, faces: &[[usize; 3]], edges: &[[usize; 2]]) -> Result<NeighborGraph> {
    let mut all = Vec::with_capacity(faces.len() * 3 + edges.len());
    for f in faces {
        if let Some(&bad) = f.iter().find(|&&v| v >= n_vertices) {
            bail!(Index, "face {f:?} references vertex {bad} >= {n_vertices}");
        }
        all.extend([(f[0], f[1]), (f[1], f[2]), (f[0], f[2])]);
    }
    all.extend(edges.iter().map(|e| (e[0], e[1])));
    NeighborGraph::new(n_vertices, all)
}

impl MeshSpec {
    pub fn graph(&self) -> Result<NeighborGraph> {
        mesh_graph(
            self.n_vertices,
            self.faces.as_deref().unwrap_or(&[]),
            self.edges.as_deref().unwrap_or(&[]),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_of_three() {
        let m = Mask::full([1, 3, 1]).unwrap();
        let g = grid_graph(&m, Connectivity::Grid2D4);
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn single_cell_has_no_edges() {
        let m = Mask::new([2, 2, 1], vec![false, true, false, false]).unwrap();
        assert_eq!(grid_graph(&m, Connectivity::Grid3D6).n_edges(), 0);
    }

    #[test]
    fn three_by_three_has_twelve_edges() {
        let m = Mask::full([3, 3, 1]).unwrap();
        assert_eq!(grid_graph(&m, Connectivity::Grid2D4).n_edges(), 12);
    }

    #[test]
    fn grid2d_ignores_third_axis() {
        let m = Mask::full([2, 2, 2]).unwrap();
        assert_eq!(grid_graph(&m, Connectivity::Grid2D4).n_edges(), 8);
        assert_eq!(grid_graph(&m, Connectivity::Grid3D6).n_edges(), 12);
    }

    #[test]
    fn triangle_and_duplicates() {
        let g = mesh_graph(3, &[[0, 1, 2]], &[]).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (1, 2)]);
        let g2 = mesh_graph(3, &[[0, 1, 2], [2, 1, 0], [1, 2, 0]], &[[1, 0]]).unwrap();
        assert_eq!(g, g2);
    }

    #[test]
    fn mesh_index_errors() {
        assert!(matches!(mesh_graph(3, &[[0, 1, 3]], &[]), Err(crate::Error::Index(_))));
        assert!(matches!(mesh_graph(3, &[], &[[1, 1]]), Err(crate::Error::Index(_))));
    }

    #[test]
    fn mesh_json() {
        let spec: MeshSpec = serde_json::from_str(r#"{"n_vertices":4,"edges":[[0,1],[2,3]]}"#).unwrap();
        assert_eq!(spec.graph().unwrap().n_edges(), 2);
    }
}
