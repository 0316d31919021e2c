//! Label-vector utilities. Labels are zero-based; a labeling is contiguous
//! when it uses exactly `0..t` for some `t`.

use crate::error::{Error, Result};

/// Relabels clusters in order of first appearance.
pub fn canonicalize(z: &[usize]) -> Vec<usize> {
    let mut map: Vec<usize> = Vec::new();
    let mut index = std::collections::HashMap::new();
    z.iter()
        .map(|&k| {
            *index.entry(k).or_insert_with(|| {
                map.push(k);
                map.len() - 1
            })
        })
        .collect()
}

/// Number of distinct labels.
pub fn n_clusters(z: &[usize]) -> usize {
    let mut seen: Vec<usize> = z.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Returns the cluster count when `z` uses exactly the labels `0..t`.
pub fn check_contiguous(z: &[usize]) -> Result<usize> {
    let t = z.iter().copied().max().map_or(0, |m| m + 1);
    let mut used = vec![false; t];
    for &k in z {
        used[k] = true;
    }
    match used.iter().position(|u| !u) {
        Some(k) => Err(Error::NonContiguousLabels(format!(
            "label {k} unused but {} present",
            t - 1
        ))),
        None => Ok(t),
    }
}

/// Cluster sizes of a contiguous labeling.
pub fn cluster_sizes(z: &[usize], t: usize) -> Vec<usize> {
    let mut sizes = vec![0; t];
    for &k in z {
        sizes[k] += 1;
    }
    sizes
}

/// True when every block of `fine` lies inside a single block of `coarse`.
pub fn is_coarsening(coarse: &[usize], fine: &[usize]) -> bool {
    let mut owner = std::collections::HashMap::new();
    fine.iter()
        .zip(coarse)
        .all(|(f, c)| *owner.entry(*f).or_insert(*c) == *c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_first_appearance() {
        assert_eq!(canonicalize(&[5, 5, 2, 9, 2]), vec![0, 0, 1, 2, 1]);
    }

    #[test]
    fn contiguity() {
        assert_eq!(check_contiguous(&[0, 2, 1, 1]).unwrap(), 3);
        assert!(check_contiguous(&[0, 2, 2]).is_err());
    }

    #[test]
    fn coarsening() {
        assert!(is_coarsening(&[0, 0, 0, 1], &[0, 1, 1, 2]));
        assert!(!is_coarsening(&[0, 1, 0, 1], &[0, 0, 1, 1]));
    }
}
