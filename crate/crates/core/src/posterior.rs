//! Point estimates from a recorded chain.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{canonicalize, check_contiguous};
use crate::sampler::ChainTrace;

/// Column means of the recorded `gamma` samples.
pub fn compute_ppi(trace: &ChainTrace) -> Result<Vec<f64>> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let s = trace.n_samples();
    let mut counts = vec![0usize; trace.p()];
    for u in 0..s {
        for (c, &g) in counts.iter_mut().zip(trace.gamma_sample(u)) {
            *c += g as usize;
        }
    }
    Ok(counts.iter().map(|&c| c as f64 / s as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    /// `PPI >= 0.5`.
    #[default]
    Median,
    /// Largest set whose Bayesian false discovery rate stays within the level.
    Bfdr,
}

/// Calls discriminating genes from PPIs. The returned threshold is on the
/// `1 - PPI` scale: gene `j` is selected when `1 - PPI_j < threshold`.
pub fn select_dgs(ppi: &[f64], mode: SelectionMode, level: f64) -> Result<(Vec<bool>, f64)> {
    if let Some(v) = ppi.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!("PPI {v} outside [0, 1]")));
    }
    match mode {
        SelectionMode::Median => Ok((ppi.iter().map(|&v| v >= 0.5).collect(), 0.5)),
        SelectionMode::Bfdr => {
            if !(0.0..=1.0).contains(&level) {
                return Err(Error::InvalidArgument(format!("BFDR level {level} outside [0, 1]")));
            }
            let mut q: Vec<f64> = ppi.iter().map(|v| 1.0 - v).collect();
            q.sort_by(f64::total_cmp);
            // selections are prefixes of the sorted q, cut between distinct values;
            // their running mean never decreases, so scan to the last feasible cut
            let mut best: Option<usize> = None;
            let mut sum = 0.0;
            let mut m = 0;
            while m < q.len() {
                let mut end = m;
                while end < q.len() && q[end] == q[m] {
                    sum += q[end];
                    end += 1;
                }
                if sum / end as f64 <= level {
                    best = Some(end);
                } else {
                    break;
                }
                m = end;
            }
            let threshold = match best {
                None => return Ok((vec![false; ppi.len()], 0.0)),
                Some(end) if end < q.len() => q[end],
                Some(_) => 1.0,
            };
            let cut = best.map(|e| q[e - 1]).unwrap_or(f64::NEG_INFINITY);
            Ok((ppi.iter().map(|v| 1.0 - v <= cut).collect(), threshold))
        }
    }
}

/// Bayesian FDR of a selection: mean of `1 - PPI` over selected genes.
pub fn bfdr(ppi: &[f64], selected: &[bool]) -> f64 {
    let (s, c) = ppi
        .iter()
        .zip(selected)
        .filter(|(_, s)| **s)
        .fold((0.0, 0usize), |(a, c), (v, _)| (a + 1.0 - v, c + 1));
    if c == 0 {
        0.0
    } else {
        s / c as f64
    }
}

/// The recorded sample with the highest joint score; ties go to the earliest.
#[derive(Debug, Clone, PartialEq)]
pub struct MapEstimate {
    pub index: usize,
    pub gamma: Vec<bool>,
    pub z: Vec<usize>,
    pub score: f64,
}

pub fn map_estimates(trace: &ChainTrace) -> Result<MapEstimate> {
    let scores = trace.scores();
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if scores.len() != trace.n_samples() {
        return Err(Error::MissingEstimate("trace carries no joint scores".into()));
    }
    let mut best = 0;
    for (u, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = u;
        }
    }
    Ok(MapEstimate {
        index: best,
        gamma: trace.gamma_sample(best).to_vec(),
        z: canonicalize(&trace.z_sample(best)),
        score: scores[best],
    })
}

/// Posterior co-clustering probabilities, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct Ppm {
    n: usize,
    values: Vec<f64>,
}

impl Ppm {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn from_dense(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Dimension(format!("{} entries for {n} x {n}", values.len())));
        }
        Ok(Self { n, values })
    }
}

pub fn compute_ppm(trace: &ChainTrace) -> Result<Ppm> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let n = trace.n();
    let s = trace.n_samples();
    let rows: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut c = vec![0u32; n - i];
            for u in 0..s {
                let z = trace.z_raw(u);
                let zi = z[i];
                for (cc, &zj) in c.iter_mut().zip(&z[i..]) {
                    *cc += (zj == zi) as u32;
                }
            }
            c
        })
        .collect();
    let mut values = vec![0.0; n * n];
    for (i, row) in rows.iter().enumerate() {
        for (off, &c) in row.iter().enumerate() {
            let v = c as f64 / s as f64;
            let j = i + off;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    Ok(Ppm { n, values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DahlEstimate {
    pub index: usize,
    pub z: Vec<usize>,
    /// `Σ_{i<i'} (I(z_i = z_i') - PPM_ii')²` at the chosen sample.
    pub loss: f64,
}

/// Least-squares partition: the recorded sample closest to the PPM.
pub fn dahl_estimate(trace: &ChainTrace, ppm: &Ppm) -> Result<DahlEstimate> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let n = trace.n();
    if ppm.n() != n {
        return Err(Error::Dimension(format!("PPM is {} x {0}, trace has {n} spots", ppm.n())));
    }
    // loss = Σ P² + Σ_{same-cluster pairs} (1 - 2P); the first term is shared
    let base: f64 = (0..n)
        .map(|i| ppm.row(i)[i + 1..].iter().map(|v| v * v).sum::<f64>())
        .sum();
    let partial: Vec<f64> = (0..trace.n_samples())
        .into_par_iter()
        .map(|u| {
            let z = trace.z_raw(u);
            let mut acc = 0.0;
            for i in 0..n {
                let row = ppm.row(i);
                for j in i + 1..n {
                    if z[i] == z[j] {
                        acc += 1.0 - 2.0 * row[j];
                    }
                }
            }
            acc
        })
        .collect();
    let mut best = 0;
    for (u, &v) in partial.iter().enumerate() {
        if v < partial[best] {
            best = u;
        }
    }
    Ok(DahlEstimate {
        index: best,
        z: canonicalize(&trace.z_sample(best)),
        loss: base + partial[best],
    })
}

/// Posterior mean profiles of the estimated domains: for each cluster of
/// `z_hat`, the average over its spots of the per-spot posterior mean level.
pub fn domain_mu_hat(trace: &ChainTrace, z_hat: &[usize]) -> Result<Vec<Vec<f64>>> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if z_hat.len() != trace.n() {
        return Err(Error::Dimension("labels do not match trace".into()));
    }
    let k = check_contiguous(z_hat)?;
    let p = trace.p();
    let mut sums = vec![vec![0.0; p]; k];
    let mut sizes = vec![0usize; k];
    for (i, &c) in z_hat.iter().enumerate() {
        sizes[c] += 1;
        for (j, acc) in sums[c].iter_mut().enumerate() {
            *acc += trace.mu_spot_mean(i, j);
        }
    }
    for (row, &m) in sums.iter_mut().zip(&sizes) {
        for v in row.iter_mut() {
            *v /= m as f64;
        }
    }
    Ok(sums)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Linkage {
    Single,
    Complete,
    #[default]
    Average,
}

fn dg_distance(a: &[f64], b: &[f64], gamma_hat: &[bool]) -> f64 {
    a.iter()
        .zip(b)
        .zip(gamma_hat)
        .filter(|(_, g)| **g)
        .map(|((x, y), _)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Agglomerative grouping of domains (rows of `mu_hat`) by their distance over
/// the selected genes. Returns each domain's group, numbered by first
/// appearance among domains.
pub fn agglomerate(
    mu_hat: &[Vec<f64>],
    gamma_hat: &[bool],
    k_target: usize,
    linkage: Linkage,
) -> Result<Vec<usize>> {
    let k = mu_hat.len();
    if k_target == 0 || k_target > k {
        return Err(Error::InvalidArgument(format!(
            "k_target must lie in 1..={k}, got {k_target}"
        )));
    }
    if !gamma_hat.iter().any(|g| *g) {
        return Err(Error::NoDiscriminatingGenes);
    }
    if mu_hat.iter().any(|r| r.len() != gamma_hat.len()) {
        return Err(Error::Dimension("mu_hat columns do not match gamma_hat".into()));
    }
    let d: Vec<Vec<f64>> = (0..k)
        .map(|a| (0..k).map(|b| dg_distance(&mu_hat[a], &mu_hat[b], gamma_hat)).collect())
        .collect();
    let mut groups: Vec<Vec<usize>> = (0..k).map(|a| vec![a]).collect();
    while groups.len() > k_target {
        let mut best = (0, 1, f64::INFINITY);
        for a in 0..groups.len() {
            for b in a + 1..groups.len() {
                let pairs = groups[a]
                    .iter()
                    .flat_map(|&x| groups[b].iter().map(move |&y| (x, y)));
                let v = match linkage {
                    Linkage::Single => pairs.map(|(x, y)| d[x][y]).fold(f64::INFINITY, f64::min),
                    Linkage::Complete => pairs.map(|(x, y)| d[x][y]).fold(0.0, f64::max),
                    Linkage::Average => {
                        pairs.map(|(x, y)| d[x][y]).sum::<f64>()
                            / (groups[a].len() * groups[b].len()) as f64
                    }
                };
                if v < best.2 {
                    best = (a, b, v);
                }
            }
        }
        let merged = groups.remove(best.1);
        groups[best.0].extend(merged);
    }
    let mut of = vec![0; k];
    for (g, members) in groups.iter().enumerate() {
        for &m in members {
            of[m] = g;
        }
    }
    Ok(canonicalize(&of))
}

/// Merges estimated domains down to `k_target` groups and maps spot labels
/// through the merge. Output labels are numbered by first appearance.
pub fn merge_domains(
    mu_hat: &[Vec<f64>],
    gamma_hat: &[bool],
    z_hat: &[usize],
    k_target: usize,
    linkage: Linkage,
) -> Result<Vec<usize>> {
    let k = check_contiguous(z_hat)?;
    if k != mu_hat.len() {
        return Err(Error::Dimension(format!(
            "{k} labelled domains but {} profiles",
            mu_hat.len()
        )));
    }
    let group = agglomerate(mu_hat, gamma_hat, k_target, linkage)?;
    Ok(canonicalize(
        &z_hat.iter().map(|&c| group[c]).collect::<Vec<_>>(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummaryConfig {
    pub selection: SelectionMode,
    pub bfdr_level: f64,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        Self {
            selection: SelectionMode::Median,
            bfdr_level: 0.05,
        }
    }
}

/// Everything reported from one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub ppi: Vec<f64>,
    pub gamma_hat: Vec<bool>,
    pub selection_threshold: f64,
    pub gamma_hat_map: Vec<bool>,
    pub z_hat_map: Vec<usize>,
    pub z_hat_ppm: Vec<usize>,
    pub ppm: Ppm,
    /// Posterior mean profile of each domain of `z_hat_ppm`.
    pub mu_hat: Vec<Vec<f64>>,
    pub mu0_hat: Vec<f64>,
    pub k_hat: usize,
    /// Posterior means of the extra-zero indicators, row-major, when recorded.
    pub r_mean: Option<Vec<f64>>,
}

pub fn summarize(trace: &ChainTrace, cfg: &SummaryConfig) -> Result<PosteriorSummary> {
    let ppi = compute_ppi(trace)?;
    let (gamma_hat, selection_threshold) = select_dgs(&ppi, cfg.selection, cfg.bfdr_level)?;
    let map = map_estimates(trace)?;
    let ppm = compute_ppm(trace)?;
    let dahl = dahl_estimate(trace, &ppm)?;
    let mu_hat = domain_mu_hat(trace, &dahl.z)?;
    let k_hat = mu_hat.len();
    Ok(PosteriorSummary {
        ppi,
        gamma_hat,
        selection_threshold,
        gamma_hat_map: map.gamma,
        z_hat_map: map.z,
        z_hat_ppm: dahl.z,
        ppm,
        mu_hat,
        mu0_hat: trace.mu0_mean(),
        k_hat,
        r_mean: trace.r_mean(),
    })
}
