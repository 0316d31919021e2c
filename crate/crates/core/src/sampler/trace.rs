use super::{McmcConfig, ModelState};
use crate::error::{Error, Result};

/// Recorded output of one chain.
///
/// Expression-level means are accumulated per spot (`mu*` of the spot's own
/// cluster), which sidesteps label switching: the mean profile of any
/// estimated domain is then the average over its spots.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    n: usize,
    p: usize,
    z_samples: Vec<u32>,
    gamma_samples: Vec<bool>,
    sample_loglik: Vec<f64>,
    sample_log_prior_gamma: Vec<f64>,
    sample_log_prior_z: Vec<f64>,
    loglik: Vec<f64>,
    k_trace: Vec<usize>,
    mu_spot_sum: Vec<f64>,
    mu0_sum: Vec<f64>,
    r_sum: Option<Vec<u32>>,
}

impl ChainTrace {
    pub fn new(n: usize, p: usize, mcmc: &McmcConfig) -> Self {
        let s = mcmc.n_samples();
        Self {
            n,
            p,
            z_samples: Vec::with_capacity(s * n),
            gamma_samples: Vec::with_capacity(s * p),
            sample_loglik: Vec::with_capacity(s),
            sample_log_prior_gamma: Vec::with_capacity(s),
            sample_log_prior_z: Vec::with_capacity(s),
            loglik: Vec::with_capacity(mcmc.iterations),
            k_trace: Vec::with_capacity(mcmc.iterations),
            mu_spot_sum: vec![0.0; n * p],
            mu0_sum: vec![0.0; p],
            r_sum: mcmc.record_r.then(|| vec![0; n * p]),
        }
    }

    /// Builds a trace from explicit partition and indicator samples, with
    /// zero expression sums. Scores may be empty.
    pub fn from_samples(
        z_samples: &[Vec<usize>],
        gamma_samples: &[Vec<bool>],
        scores: &[f64],
    ) -> Result<Self> {
        if z_samples.is_empty() {
            return Err(Error::EmptyTrace);
        }
        if z_samples.len() != gamma_samples.len() || (!scores.is_empty() && scores.len() != z_samples.len()) {
            return Err(Error::Dimension("sample counts differ".into()));
        }
        let n = z_samples[0].len();
        let p = gamma_samples[0].len();
        if z_samples.iter().any(|z| z.len() != n) || gamma_samples.iter().any(|g| g.len() != p) {
            return Err(Error::Dimension("ragged samples".into()));
        }
        let s = z_samples.len();
        Ok(Self {
            n,
            p,
            z_samples: z_samples.iter().flatten().map(|&v| v as u32).collect(),
            gamma_samples: gamma_samples.iter().flatten().copied().collect(),
            sample_loglik: scores.to_vec(),
            sample_log_prior_gamma: vec![0.0; scores.len()],
            sample_log_prior_z: vec![0.0; scores.len()],
            loglik: vec![0.0; s],
            k_trace: z_samples
                .iter()
                .map(|z| z.iter().max().map_or(0, |m| m + 1))
                .collect(),
            mu_spot_sum: vec![0.0; n * p],
            mu0_sum: vec![0.0; p],
            r_sum: None,
        })
    }

    pub(crate) fn push_iteration(&mut self, loglik: f64, k: usize) {
        self.loglik.push(loglik);
        self.k_trace.push(k);
    }

    pub(crate) fn record(&mut self, state: &ModelState, loglik: f64, lp_gamma: f64, lp_z: f64) {
        let p = self.p;
        self.z_samples.extend(state.z.iter().map(|&k| k as u32));
        self.gamma_samples.extend_from_slice(&state.gamma);
        self.sample_loglik.push(loglik);
        self.sample_log_prior_gamma.push(lp_gamma);
        self.sample_log_prior_z.push(lp_z);
        for (i, &k) in state.z.iter().enumerate() {
            let src = &state.mu_star[k * p..(k + 1) * p];
            for (acc, v) in self.mu_spot_sum[i * p..(i + 1) * p].iter_mut().zip(src) {
                *acc += v;
            }
        }
        for (acc, v) in self.mu0_sum.iter_mut().zip(&state.mu0) {
            *acc += v;
        }
        if let Some(r_sum) = self.r_sum.as_mut() {
            for (acc, &r) in r_sum.iter_mut().zip(&state.r) {
                *acc += r as u32;
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_samples(&self) -> usize {
        self.z_samples.len() / self.n.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.z_samples.is_empty()
    }

    /// Labels of recorded sample `u`, 0-based.
    pub fn z_sample(&self, u: usize) -> Vec<usize> {
        self.z_raw(u).iter().map(|&k| k as usize).collect()
    }

    pub(crate) fn z_raw(&self, u: usize) -> &[u32] {
        &self.z_samples[u * self.n..(u + 1) * self.n]
    }

    pub fn gamma_sample(&self, u: usize) -> &[bool] {
        &self.gamma_samples[u * self.p..(u + 1) * self.p]
    }

    /// Per-iteration data log-likelihood, burn-in included.
    pub fn loglik(&self) -> &[f64] {
        &self.loglik
    }

    /// Per-iteration number of clusters, burn-in included.
    pub fn k_trace(&self) -> &[usize] {
        &self.k_trace
    }

    /// Joint score `log L + log p(gamma) + log p(z)` of each recorded sample.
    /// Empty when the trace was built without scores.
    pub fn scores(&self) -> Vec<f64> {
        self.sample_loglik
            .iter()
            .zip(&self.sample_log_prior_gamma)
            .zip(&self.sample_log_prior_z)
            .map(|((a, b), c)| a + b + c)
            .collect()
    }

    pub fn sample_loglik(&self) -> &[f64] {
        &self.sample_loglik
    }

    /// Posterior mean of the expression level acting on spot `i`, gene `j`,
    /// under the cluster model (`mu*` of the spot's cluster).
    pub fn mu_spot_mean(&self, i: usize, j: usize) -> f64 {
        self.mu_spot_sum[i * self.p + j] / self.n_samples() as f64
    }

    pub fn mu0_mean(&self) -> Vec<f64> {
        let s = self.n_samples() as f64;
        self.mu0_sum.iter().map(|v| v / s).collect()
    }

    /// Posterior mean of each extra-zero indicator (row-major n x p), if recorded.
    pub fn r_mean(&self) -> Option<Vec<f64>> {
        let s = self.n_samples() as f64;
        self.r_sum
            .as_ref()
            .map(|r| r.iter().map(|&c| c as f64 / s).collect())
    }
}
