//! Mixture-of-finite-mixtures partition prior with Markov random field
//! coupling: the `V_n(t)` coefficient table, the Pólya urn full conditionals
//! and the unnormalized log prior of a whole partition.
//!
//! With `K - 1 ~ Poisson(lambda)` and symmetric Dirichlet(`alpha0`) weights,
//! the prior of a partition `C` with `t` blocks is proportional to
//!
//! ```text
//! V_n(t) * prod_c alpha0^(|c|) * exp(d * E_c)
//! V_n(t) = sum_{K >= t} K!/(K-t)! * Gamma(K alpha0) / Gamma(n + K alpha0) * P(K)
//! ```
//!
//! where `x^(m)` is the rising factorial and `E_c` counts neighbor pairs
//! inside block `c`. The coupling only enters the weights of existing blocks.

use serde::{Deserialize, Serialize};

use crate::data::SpatialGraph;
use crate::error::{Error, Result};
use crate::math::ln_gamma;
use crate::partition::{check_contiguous, cluster_sizes};

/// Consecutive negligible terms required before the `V_n` series stops.
const TAIL_RUN: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfmConfig {
    /// Dirichlet concentration.
    pub alpha0: f64,
    /// Poisson rate of `K - 1`.
    pub lambda: f64,
    /// Spatial coupling strength.
    pub d: f64,
}

impl Default for MfmConfig {
    fn default() -> Self {
        Self {
            alpha0: 1.0,
            lambda: 1.0,
            d: 1.0,
        }
    }
}

impl MfmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "alpha0 must be > 0, got {}",
                self.alpha0
            )));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be > 0, got {}",
                self.lambda
            )));
        }
        if !(self.d >= 0.0 && self.d.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "d must be >= 0, got {}",
                self.d
            )));
        }
        Ok(())
    }
}

/// `log V_n(t)` for `t = 1..=t_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct VnTable {
    n: usize,
    alpha0: f64,
    lambda: f64,
    rel_tol: f64,
    k_max: usize,
    log_v: Vec<f64>,
}

impl VnTable {
    pub fn compute(n: usize, cfg: &MfmConfig, t_max: usize, rel_tol: f64) -> Result<Self> {
        cfg.validate()?;
        if n == 0 || t_max == 0 || t_max > n {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= t_max <= n, got t_max = {t_max}, n = {n}"
            )));
        }
        if !(rel_tol > 0.0 && rel_tol < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "rel_tol must lie in (0, 1), got {rel_tol}"
            )));
        }
        let k_max = 1000.max(10 * n);
        let log_v = (1..=t_max)
            .map(|t| log_vn(n, t, cfg.alpha0, cfg.lambda, rel_tol, k_max))
            .collect();
        Ok(Self {
            n,
            alpha0: cfg.alpha0,
            lambda: cfg.lambda,
            rel_tol,
            k_max,
            log_v,
        })
    }

    /// Table with the default horizon `min(n, 50)` and tolerance `1e-12`.
    pub fn with_defaults(n: usize, cfg: &MfmConfig) -> Result<Self> {
        Self::compute(n, cfg, n.min(50), 1e-12)
    }

    /// Returns a table covering at least `t_max` (capped at `n`), reusing the
    /// values already computed.
    pub fn extended(&self, t_max: usize) -> Self {
        let t_max = t_max.min(self.n);
        let mut log_v = self.log_v.clone();
        for t in (log_v.len() + 1)..=t_max {
            log_v.push(log_vn(
                self.n,
                t,
                self.alpha0,
                self.lambda,
                self.rel_tol,
                self.k_max,
            ));
        }
        Self {
            log_v,
            ..self.clone()
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t_max(&self) -> usize {
        self.log_v.len()
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// `log V_n(t)`.
    pub fn log_v(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.log_v.len() {
            return Err(Error::VnTableTooShort {
                t_max: self.log_v.len(),
                requested: t,
            });
        }
        Ok(self.log_v[t - 1])
    }

    pub(crate) fn matches(&self, cfg: &MfmConfig) -> bool {
        self.alpha0 == cfg.alpha0 && self.lambda == cfg.lambda
    }
}

fn log_vn(n: usize, t: usize, alpha0: f64, lambda: f64, rel_tol: f64, k_max: usize) -> f64 {
    let ln_tol = rel_tol.ln();
    let ln_lambda = lambda.ln();
    let mut acc = f64::NEG_INFINITY;
    let mut small_run = 0usize;
    for k in t..=k_max.max(t) {
        let kf = k as f64;
        // t! C(K, t) = K! / (K - t)!
        let falling = ln_gamma(kf + 1.0) - ln_gamma((k - t) as f64 + 1.0);
        let ln_pk = -lambda + (kf - 1.0) * ln_lambda - ln_gamma(kf);
        let term = falling + ln_gamma(kf * alpha0) - ln_gamma(n as f64 + kf * alpha0) + ln_pk;
        if term - acc < ln_tol {
            small_run += 1;
        } else {
            small_run = 0;
        }
        acc = log_add(acc, term);
        if small_run >= TAIL_RUN {
            break;
        }
    }
    acc
}

#[inline]
fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Log urn weight of joining an existing cluster with `n_k_minus_i` members
/// (spot `i` removed) and `neighbors_in_k` neighbors of `i` inside it.
#[inline]
pub fn urn_existing_log_weight(n_k_minus_i: usize, neighbors_in_k: usize, cfg: &MfmConfig) -> f64 {
    (n_k_minus_i as f64 + cfg.alpha0).ln() + cfg.d * neighbors_in_k as f64
}

/// Log urn weight of opening a new cluster when `t` clusters remain after
/// removing the spot.
#[inline]
pub fn urn_new_log_weight(t: usize, vn: &VnTable, cfg: &MfmConfig) -> Result<f64> {
    if t == 0 || t >= vn.t_max() {
        return Err(Error::VnTableTooShort {
            t_max: vn.t_max(),
            requested: t + 1,
        });
    }
    Ok(cfg.alpha0.ln() + vn.log_v[t] - vn.log_v[t - 1])
}

/// Counts neighbor pairs whose endpoints share a label.
pub fn within_cluster_edges(z: &[usize], graph: &SpatialGraph) -> usize {
    (0..z.len())
        .map(|i| {
            graph
                .neighbors(i)
                .iter()
                .filter(|&&j| j > i && z[j] == z[i])
                .count()
        })
        .sum()
}

/// Unnormalized log prior of the partition encoded by contiguous labels `z`.
pub fn partition_log_prior(
    z: &[usize],
    graph: &SpatialGraph,
    vn: &VnTable,
    cfg: &MfmConfig,
) -> Result<f64> {
    if z.len() != graph.n() || z.len() != vn.n() {
        return Err(Error::Dimension(format!(
            "{} labels, graph over {} spots, V_n table for n = {}",
            z.len(),
            graph.n(),
            vn.n()
        )));
    }
    if !vn.matches(cfg) {
        return Err(Error::InvalidArgument(
            "V_n table was built for different alpha0/lambda".into(),
        ));
    }
    let t = check_contiguous(z)?;
    let lg_a0 = ln_gamma(cfg.alpha0);
    let rising: f64 = cluster_sizes(z, t)
        .iter()
        .map(|&m| ln_gamma(cfg.alpha0 + m as f64) - lg_a0)
        .sum();
    Ok(vn.log_v(t)? + rising + cfg.d * within_cluster_edges(z, graph) as f64)
}
