//! MCMC for the zero-inflated Poisson MFM model.
//!
//! One sweep runs, in order:
//!
//! 1. Metropolis search over the gene indicators `gamma` with all expression
//!    levels integrated out (Add/Delete and Swap moves);
//! 2. Gibbs over the allocations `z`, spot by spot, using the spatially
//!    coupled urn, with cluster birth and death, followed by a few
//!    split-merge proposals with the cluster levels integrated out;
//! 3. conjugate Gamma draws of the cluster and null expression levels;
//! 4. Bernoulli draws of the extra-zero indicators at zero counts;
//! 5. Beta draws of the per-spot zero proportions.
//!
//! Size factors are fixed inputs.

mod likelihood;
mod split_merge;
mod state;
mod steps;
mod trace;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use likelihood::{
    data_log_likelihood, gamma_log_prior, gene_cluster_marginal_loglik, marginal_from_sums,
};
pub use split_merge::split_merge;
pub use state::{ModelData, ModelState};
pub use steps::{
    extra_zero_prob, gamma_log_acceptance, spot_conditional, update_gamma, update_mu, update_pi,
    update_r, update_z, GammaMove, SpotConditional,
};
pub use trace::ChainTrace;

use crate::data::SpatialGraph;
use crate::error::{Error, Result};
use crate::mfm::{partition_log_prior, MfmConfig, VnTable};

/// Prior hyperparameters and the move mix of the gene search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub alpha_mu: f64,
    pub beta_mu: f64,
    pub alpha_pi: f64,
    pub beta_pi: f64,
    pub alpha_omega: f64,
    pub beta_omega: f64,
    /// Probability of an Add/Delete move rather than a Swap.
    pub move_prob_rho: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            alpha_mu: 1.0,
            beta_mu: 1.0,
            alpha_pi: 1.0,
            beta_pi: 1.0,
            alpha_omega: 0.1,
            beta_omega: 1.9,
            move_prob_rho: 0.5,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("alpha_mu", self.alpha_mu),
            ("beta_mu", self.beta_mu),
            ("alpha_pi", self.alpha_pi),
            ("beta_pi", self.beta_pi),
            ("alpha_omega", self.alpha_omega),
            ("beta_omega", self.beta_omega),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.move_prob_rho > 0.0 && self.move_prob_rho < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "move_prob_rho must lie in (0, 1), got {}",
                self.move_prob_rho
            )));
        }
        if ((self.alpha_omega + self.beta_omega) - 2.0).abs() > 1e-12 {
            log::warn!(
                "alpha_omega + beta_omega = {} (a vague prior on the DG proportion uses 2)",
                self.alpha_omega + self.beta_omega
            );
        }
        Ok(())
    }
}

/// How the allocations are started.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMethod {
    /// k-means on the spatially structured genes, then `mu` from its full
    /// conditional.
    #[default]
    KMeans,
    /// Uniform random labels and `mu` from the prior.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Accumulate posterior means of the extra-zero indicators.
    pub record_r: bool,
    /// Metropolis steps on `gamma` per sweep; `None` means `ceil(p / 10)`.
    pub gamma_steps: Option<usize>,
    /// Split-merge proposals on `z` per sweep.
    pub split_merge_steps: usize,
    pub init: InitMethod,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            burn_in: 5_000,
            thin: 1,
            seed: 1,
            record_r: false,
            gamma_steps: None,
            split_merge_steps: 5,
            init: InitMethod::default(),
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidArgument(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidArgument("thin must be >= 1".into()));
        }
        Ok(())
    }

    pub fn gamma_steps_for(&self, p: usize) -> usize {
        self.gamma_steps.unwrap_or(p.div_ceil(10)).max(1)
    }

    /// Number of recorded samples.
    pub fn n_samples(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }
}

/// Runs one chain and records the post-burn-in samples.
///
/// Output is a deterministic function of the inputs and `mcmc.seed`.
pub fn run_chain(
    data: &ModelData,
    graph: &SpatialGraph,
    hp: &Hyperparams,
    cfg: &MfmConfig,
    mcmc: &McmcConfig,
) -> Result<ChainTrace> {
    hp.validate()?;
    cfg.validate()?;
    mcmc.validate()?;
    if graph.n() != data.n() {
        return Err(Error::Dimension(format!(
            "graph has {} spots, data has {}",
            graph.n(),
            data.n()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mcmc.seed);
    let mut vn = VnTable::with_defaults(data.n(), cfg)?;
    let mut state = ModelState::initialize(data, hp, mcmc.init, Some(graph), &mut rng);
    if mcmc.init == InitMethod::KMeans {
        update_mu(&mut state, data, hp, &mut rng);
    }
    let gamma_steps = mcmc.gamma_steps_for(data.p());
    let mut trace = ChainTrace::new(data.n(), data.p(), mcmc);

    for it in 0..mcmc.iterations {
        update_gamma(&mut state, data, hp, gamma_steps, &mut rng);
        update_z(&mut state, data, graph, &mut vn, cfg, hp, &mut rng)?;
        for _ in 0..mcmc.split_merge_steps {
            split_merge(&mut state, data, graph, &mut vn, cfg, hp, &mut rng)?;
        }
        update_mu(&mut state, data, hp, &mut rng);
        update_r(&mut state, data, &mut rng);
        update_pi(&mut state, data, hp, &mut rng);

        let loglik = data_log_likelihood(&state, data)?;
        if !loglik.is_finite() {
            return Err(Error::NonFinite { iteration: it });
        }
        trace.push_iteration(loglik, state.n_clusters());

        if it >= mcmc.burn_in && (it - mcmc.burn_in) % mcmc.thin == 0 {
            if vn.t_max() < state.n_clusters() {
                vn = vn.extended(state.n_clusters());
            }
            let lp_z = partition_log_prior(state.z(), graph, &vn, cfg)?;
            let lp_gamma = gamma_log_prior(state.gamma(), hp);
            trace.record(&state, loglik, lp_gamma, lp_z);
        }
        if (it + 1) % 1000 == 0 {
            log::debug!(
                "iteration {}: K = {}, p_gamma = {}, loglik = {loglik:.3}",
                it + 1,
                state.n_clusters(),
                state.p_gamma()
            );
        }
    }
    Ok(trace)
}
