//! Count data, size factors, quality control and the spot neighbor graph.

mod graph;
mod io;
mod qc;

use std::collections::HashSet;

pub use graph::{default_threshold, square_lattice, triangular_lattice, SpatialGraph};
pub use io::{
    align_coords, load_counts, read_coords, read_dense_csv, read_mtx, sidecar_paths,
    write_coords, write_dense_csv, write_mtx, CountFormat,
};
pub use qc::{quality_control, GeneRule, QcConfig};

use crate::error::{Error, Result};

/// An `n x p` matrix of read counts, spots in rows and genes in columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountMatrix {
    n: usize,
    p: usize,
    values: Vec<u32>,
    spot_ids: Vec<String>,
    gene_ids: Vec<String>,
}

impl CountMatrix {
    /// Builds a matrix from row-major `values`, checking shape and id uniqueness.
    pub fn new(
        values: Vec<u32>,
        spot_ids: Vec<String>,
        gene_ids: Vec<String>,
    ) -> Result<Self> {
        let n = spot_ids.len();
        let p = gene_ids.len();
        if values.len() != n * p {
            return Err(Error::Dimension(format!(
                "{} values for {n} spots x {p} genes",
                values.len()
            )));
        }
        if n < 2 || p < 1 {
            return Err(Error::Dimension(format!(
                "need at least 2 spots and 1 gene, got {n} x {p}"
            )));
        }
        check_unique("spot", &spot_ids)?;
        check_unique("gene", &gene_ids)?;
        Ok(Self {
            n,
            p,
            values,
            spot_ids,
            gene_ids,
        })
    }

    /// Builds a matrix with generated ids `s1..sn` and `g1..gp`.
    pub fn from_rows(rows: &[Vec<u32>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        let values = rows.iter().flatten().copied().collect();
        Self::new(
            values,
            (1..=n).map(|i| format!("s{i}")).collect(),
            (1..=p).map(|j| format!("g{j}")).collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.values[i * self.p + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u32] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn spot_ids(&self) -> &[String] {
        &self.spot_ids
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|&y| y as u64).sum())
            .collect()
    }

    pub fn max_count(&self) -> u32 {
        self.values.iter().copied().max().unwrap_or(0)
    }

    /// Keeps the listed spots and genes, in the given order.
    pub fn subset(&self, spots: &[usize], genes: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(spots.len() * genes.len());
        for &i in spots {
            let row = self.row(i);
            values.extend(genes.iter().map(|&j| row[j]));
        }
        Self::new(
            values,
            spots.iter().map(|&i| self.spot_ids[i].clone()).collect(),
            genes.iter().map(|&j| self.gene_ids[j].clone()).collect(),
        )
    }
}

fn check_unique(kind: &'static str, ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId {
                kind,
                id: id.clone(),
            });
        }
    }
    Ok(())
}

/// Per-spot scaling factors with unit product.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeFactors(Vec<f64>);

impl SizeFactors {
    /// Wraps externally supplied factors. Only positivity is enforced, so
    /// simulation truth (which need not have unit product) can be carried too.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "size factors must be positive and finite, got {v}"
            )));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `s_i = T_i / geomean(T)` with `T_i` the spot totals, computed in log space.
pub fn compute_size_factors(counts: &CountMatrix) -> Result<SizeFactors> {
    let totals = counts.row_sums();
    if let Some(i) = totals.iter().position(|&t| t == 0) {
        return Err(Error::ZeroRowSum {
            spot: counts.spot_ids()[i].clone(),
        });
    }
    let logs: Vec<f64> = totals.iter().map(|&t| (t as f64).ln()).collect();
    let mean_log = logs.iter().sum::<f64>() / logs.len() as f64;
    Ok(SizeFactors(
        logs.iter().map(|l| (l - mean_log).exp()).collect(),
    ))
}
