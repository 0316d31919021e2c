use serde::{Deserialize, Serialize};

use super::CountMatrix;
use crate::error::{Error, Result};

/// How the two gene filters combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneRule {
    /// Drop a gene only when it is both mostly zero and never highly expressed.
    #[default]
    And,
    /// Drop a gene when either condition holds.
    Or,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QcConfig {
    pub min_spot_total: u64,
    pub max_gene_zero_prop: f64,
    pub min_gene_max: u32,
    pub gene_rule: GeneRule,
}

impl Default for QcConfig {
    fn default() -> Self {
        Self {
            min_spot_total: 100,
            max_gene_zero_prop: 0.9,
            min_gene_max: 10,
            gene_rule: GeneRule::default(),
        }
    }
}

/// Removes low-depth spots, then uninformative genes.
///
/// One pass filters spots on their totals and then genes on their zero
/// proportion and maximum over the surviving spots. Dropping genes can push a
/// spot below the depth threshold, so passes repeat until nothing changes;
/// the result is a fixed point and a second call is a no-op.
pub fn quality_control(counts: &CountMatrix, cfg: &QcConfig) -> Result<CountMatrix> {
    if !(0.0..=1.0).contains(&cfg.max_gene_zero_prop) {
        return Err(Error::InvalidArgument(format!(
            "max_gene_zero_prop must lie in [0, 1], got {}",
            cfg.max_gene_zero_prop
        )));
    }
    let mut spots: Vec<usize> = (0..counts.n()).collect();
    let mut genes: Vec<usize> = (0..counts.p()).collect();
    loop {
        let kept_spots: Vec<usize> = spots
            .iter()
            .copied()
            .filter(|&i| {
                let total: u64 = genes.iter().map(|&j| counts.get(i, j) as u64).sum();
                total >= cfg.min_spot_total
            })
            .collect();
        let kept_genes: Vec<usize> = genes
            .iter()
            .copied()
            .filter(|&j| !drop_gene(counts, &kept_spots, j, cfg))
            .collect();
        let stable = kept_spots.len() == spots.len() && kept_genes.len() == genes.len();
        spots = kept_spots;
        genes = kept_genes;
        if spots.len() < 2 || genes.is_empty() {
            return Err(Error::DegenerateAfterQc {
                spots: spots.len(),
                genes: genes.len(),
            });
        }
        if stable {
            break;
        }
    }
    counts.subset(&spots, &genes)
}

fn drop_gene(counts: &CountMatrix, spots: &[usize], j: usize, cfg: &QcConfig) -> bool {
    if spots.is_empty() {
        return true;
    }
    let mut zeros = 0usize;
    let mut max = 0u32;
    for &i in spots {
        let y = counts.get(i, j);
        zeros += (y == 0) as usize;
        max = max.max(y);
    }
    let mostly_zero = zeros as f64 / spots.len() as f64 > cfg.max_gene_zero_prop;
    let low_max = max < cfg.min_gene_max;
    match cfg.gene_rule {
        GeneRule::And => mostly_zero && low_max,
        GeneRule::Or => mostly_zero || low_max,
    }
}
