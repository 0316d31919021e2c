use crate::error::{Error, Result};

/// Spot coordinates with the symmetric neighbor relation `dist < threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGraph {
    coords: Vec<[f64; 2]>,
    neighbors: Vec<Vec<usize>>,
    threshold: f64,
}

impl SpatialGraph {
    /// Connects every pair of spots strictly closer than `c0`.
    pub fn build(coords: &[[f64; 2]], c0: f64) -> Result<Self> {
        if !(c0.is_finite() && c0 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "neighbor threshold must be positive, got {c0}"
            )));
        }
        if let Some(i) = coords
            .iter()
            .position(|c| !(c[0].is_finite() && c[1].is_finite()))
        {
            return Err(Error::InvalidArgument(format!(
                "spot {i} has a non-finite coordinate"
            )));
        }
        let n = coords.len();
        let c0_sq = c0 * c0;
        let mut neighbors = vec![Vec::new(); n];
        let mut coincident = 0usize;
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = coords[i][0] - coords[j][0];
                let dy = coords[i][1] - coords[j][1];
                let d2 = dx * dx + dy * dy;
                if d2 < c0_sq {
                    neighbors[i].push(j);
                    neighbors[j].push(i);
                    coincident += (d2 == 0.0) as usize;
                }
            }
        }
        if coincident > 0 {
            log::warn!("{coincident} spot pairs share identical coordinates; treated as neighbors");
        }
        Ok(Self {
            coords: coords.to_vec(),
            neighbors,
            threshold: c0,
        })
    }

    /// A graph over `n` abstract spots from an explicit edge list; spots are
    /// placed on the x axis for reference only.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n || a == b {
                return Err(Error::InvalidArgument(format!("bad edge ({a}, {b})")));
            }
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self {
            coords: (0..n).map(|i| [i as f64, 0.0]).collect(),
            neighbors,
            threshold: 0.0,
        })
    }

    /// `n` spots and no edges.
    pub fn empty(n: usize) -> Self {
        Self::from_edges(n, &[]).expect("no edges")
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Number of unordered neighbor pairs.
    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn is_neighbor(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }
}

/// 1.2 times the median nearest-neighbor distance: four neighbors on a square
/// lattice, six on a triangular one.
pub fn default_threshold(coords: &[[f64; 2]]) -> Result<f64> {
    if coords.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two spots to pick a neighbor threshold".into(),
        ));
    }
    let mut nn: Vec<f64> = coords
        .iter()
        .enumerate()
        .map(|(i, a)| {
            coords
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    nn.sort_by(f64::total_cmp);
    let m = nn.len();
    let median = if m % 2 == 1 {
        nn[m / 2]
    } else {
        0.5 * (nn[m / 2 - 1] + nn[m / 2])
    };
    if median <= 0.0 {
        return Err(Error::InvalidArgument(
            "median nearest-neighbor distance is zero".into(),
        ));
    }
    Ok(1.2 * median)
}

/// Unit square lattice in raster order: spot `r * width + c` sits at `(c, r)`.
pub fn square_lattice(height: usize, width: usize) -> Vec<[f64; 2]> {
    (0..height)
        .flat_map(|r| (0..width).map(move |c| [c as f64, r as f64]))
        .collect()
}

/// Unit triangular lattice: odd rows shifted by one half, rows sqrt(3)/2 apart.
pub fn triangular_lattice(height: usize, width: usize) -> Vec<[f64; 2]> {
    let dy = 3f64.sqrt() / 2.0;
    (0..height)
        .flat_map(|r| {
            let shift = if r % 2 == 1 { 0.5 } else { 0.0 };
            (0..width).map(move |c| [c as f64 + shift, r as f64 * dy])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn square_grid_center_has_four_neighbors() {
        let g = SpatialGraph::build(&square_lattice(3, 3), 1.2).unwrap();
        assert_eq!(g.neighbors(4), &[1, 3, 5, 7]);
        assert_eq!(g.neighbors(0), &[1, 3]);
        // diagonals sit at sqrt(2), inside a 1.5 threshold
        let g = SpatialGraph::build(&square_lattice(3, 3), 1.5).unwrap();
        assert_eq!(g.neighbors(4).len(), 8);
    }

    #[test]
    fn triangular_interior_has_six_neighbors() {
        let g = SpatialGraph::build(&triangular_lattice(5, 5), 1.1).unwrap();
        assert_eq!(g.neighbors(2 * 5 + 2).len(), 6);
    }

    #[test]
    fn ties_at_threshold_are_not_neighbors() {
        let g = SpatialGraph::build(&square_lattice(2, 2), 1.0).unwrap();
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn small_threshold_gives_empty_graph() {
        let coords = [[0.0, 0.0], [0.3, 0.1], [5.0, 5.0]];
        let g = SpatialGraph::build(&coords, 0.2).unwrap();
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn nonfinite_is_rejected() {
        assert!(SpatialGraph::build(&[[0.0, f64::NAN], [1.0, 1.0]], 1.0).is_err());
        assert!(SpatialGraph::build(&[[0.0, 0.0]], 0.0).is_err());
    }

    #[test]
    fn graph_is_symmetric_and_loop_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let coords: Vec<[f64; 2]> = (0..60)
            .map(|_| [rand::Rng::random::<f64>(&mut rng) * 5.0, rand::Rng::random::<f64>(&mut rng) * 5.0])
            .collect();
        let g = SpatialGraph::build(&coords, 1.0).unwrap();
        for i in 0..g.n() {
            assert!(!g.is_neighbor(i, i));
            assert!(g.neighbors(i).windows(2).all(|w| w[0] < w[1]));
            for &j in g.neighbors(i) {
                assert!(g.is_neighbor(j, i));
            }
        }
    }

    #[test]
    fn permuted_input_gives_relabeled_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let coords = triangular_lattice(6, 7);
        let mut perm: Vec<usize> = (0..coords.len()).collect();
        perm.shuffle(&mut rng);
        let permuted: Vec<[f64; 2]> = perm.iter().map(|&i| coords[i]).collect();
        let g = SpatialGraph::build(&coords, 1.1).unwrap();
        let h = SpatialGraph::build(&permuted, 1.1).unwrap();
        // direct recomputation: spot a in h is spot perm[a] in g
        for a in 0..coords.len() {
            for b in 0..coords.len() {
                assert_eq!(h.is_neighbor(a, b), g.is_neighbor(perm[a], perm[b]));
            }
        }
    }

    #[test]
    fn default_threshold_on_lattice() {
        let c0 = default_threshold(&square_lattice(4, 4)).unwrap();
        assert!((c0 - 1.2).abs() < 1e-12);
        let g = SpatialGraph::build(&square_lattice(4, 4), c0).unwrap();
        assert_eq!(g.neighbors(5).len(), 4);
        let tri = triangular_lattice(5, 5);
        let g = SpatialGraph::build(&tri, default_threshold(&tri).unwrap()).unwrap();
        assert_eq!(g.neighbors(12).len(), 6);
    }
}
