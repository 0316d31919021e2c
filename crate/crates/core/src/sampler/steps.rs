use rand::Rng;
use rand_distr::{Beta, Distribution};

use super::likelihood::marginal_from_sums;
use super::state::draw_gamma;
use super::{Hyperparams, ModelData, ModelState};
use crate::data::SpatialGraph;
use crate::error::Result;
use crate::math::{ln_gamma, normalize_log_weights, sample_log_categorical};
use crate::mfm::{urn_existing_log_weight, urn_new_log_weight, MfmConfig, VnTable};

const DETACHED: usize = usize::MAX;

// ---------------------------------------------------------------- Step 1

/// A proposed change to the gene indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaMove {
    /// Flip `gamma[j]`.
    Flip(usize),
    /// Include the currently excluded gene `on` and exclude the included gene `off`.
    Swap { on: usize, off: usize },
}

/// Per-cluster and pooled sums of `y` and `s` over the non-extra-zero entries
/// of gene `j`.
fn gene_sums(state: &ModelState, data: &ModelData, j: usize) -> (Vec<f64>, Vec<f64>, f64, f64) {
    let k = state.n_clusters();
    let mut ys = vec![0.0; k];
    let mut ss = vec![0.0; k];
    for i in 0..data.n() {
        if !state.r(i, j) {
            let c = state.z[i];
            ys[c] += data.y(i, j) as f64;
            ss[c] += data.s(i);
        }
    }
    let y: f64 = ys.iter().sum();
    let s: f64 = ss.iter().sum();
    (ys, ss, y, s)
}

/// Log marginal likelihood of gene `j` split by cluster minus pooled.
fn gene_split_gain(state: &ModelState, data: &ModelData, hp: &Hyperparams, j: usize) -> f64 {
    let (ys, ss, y, s) = gene_sums(state, data, j);
    let split: f64 = ys
        .iter()
        .zip(&ss)
        .map(|(&yk, &sk)| marginal_from_sums(yk, sk, hp.alpha_mu, hp.beta_mu))
        .sum();
    split - marginal_from_sums(y, s, hp.alpha_mu, hp.beta_mu)
}

/// Probability of choosing Add/Delete given the current number of included
/// genes. At the boundaries a Swap is impossible and Add/Delete is forced,
/// which makes the proposal asymmetric there.
#[inline]
fn add_delete_prob(p_gamma: usize, p: usize, rho: f64) -> f64 {
    if p_gamma == 0 || p_gamma == p {
        1.0
    } else {
        rho
    }
}

fn gamma_prior_term(p_gamma: usize, p: usize, hp: &Hyperparams) -> f64 {
    ln_gamma(hp.alpha_omega + p_gamma as f64) + ln_gamma(hp.beta_omega + (p - p_gamma) as f64)
}

/// Log Metropolis-Hastings ratio of `mv` from the current state, with every
/// expression level integrated out.
pub fn gamma_log_acceptance(
    state: &ModelState,
    data: &ModelData,
    hp: &Hyperparams,
    mv: GammaMove,
) -> f64 {
    let p = data.p();
    match mv {
        GammaMove::Flip(j) => {
            let gain = gene_split_gain(state, data, hp, j);
            let (from, to, lik) = if state.gamma[j] {
                (state.p_gamma, state.p_gamma - 1, -gain)
            } else {
                (state.p_gamma, state.p_gamma + 1, gain)
            };
            let prior = gamma_prior_term(to, p, hp) - gamma_prior_term(from, p, hp);
            let hastings = add_delete_prob(to, p, hp.move_prob_rho).ln()
                - add_delete_prob(from, p, hp.move_prob_rho).ln();
            lik + prior + hastings
        }
        GammaMove::Swap { on, off } => {
            gene_split_gain(state, data, hp, on) - gene_split_gain(state, data, hp, off)
        }
    }
}

fn nth_with_value<R: Rng + ?Sized>(gamma: &[bool], value: bool, count: usize, rng: &mut R) -> usize {
    let target = rng.random_range(0..count);
    gamma
        .iter()
        .enumerate()
        .filter(|(_, g)| **g == value)
        .nth(target)
        .map(|(j, _)| j)
        .expect("count matches")
}

pub(crate) fn propose_gamma_move<R: Rng + ?Sized>(
    state: &ModelState,
    rho: f64,
    rng: &mut R,
) -> GammaMove {
    let p = state.gamma.len();
    let pg = state.p_gamma;
    if pg == 0 || pg == p || rng.random::<f64>() < rho {
        GammaMove::Flip(rng.random_range(0..p))
    } else {
        let on = nth_with_value(&state.gamma, false, p - pg, rng);
        let off = nth_with_value(&state.gamma, true, pg, rng);
        GammaMove::Swap { on, off }
    }
}

/// Redraws the expression levels that gene `j` now uses from their full
/// conditional, so a flipped gene never carries a stale value into Steps 2 and 4.
fn refresh_gene<R: Rng + ?Sized>(
    state: &mut ModelState,
    data: &ModelData,
    hp: &Hyperparams,
    j: usize,
    rng: &mut R,
) {
    let (ys, ss, y, s) = gene_sums(state, data, j);
    if state.gamma[j] {
        for k in 0..state.n_clusters() {
            let v = draw_gamma(hp.alpha_mu + ys[k], hp.beta_mu + ss[k], rng);
            state.set_mu_star(k, j, v);
        }
    } else {
        state.mu0[j] = draw_gamma(hp.alpha_mu + y, hp.beta_mu + s, rng);
    }
}

fn apply_gamma_move(state: &mut ModelState, mv: GammaMove) {
    match mv {
        GammaMove::Flip(j) => {
            state.gamma[j] = !state.gamma[j];
            if state.gamma[j] {
                state.p_gamma += 1;
            } else {
                state.p_gamma -= 1;
            }
        }
        GammaMove::Swap { on, off } => {
            state.gamma[on] = true;
            state.gamma[off] = false;
        }
    }
}

/// Step 1: `steps` Metropolis updates of `gamma`. Returns the number accepted.
pub fn update_gamma<R: Rng + ?Sized>(
    state: &mut ModelState,
    data: &ModelData,
    hp: &Hyperparams,
    steps: usize,
    rng: &mut R,
) -> usize {
    let mut accepted = 0;
    for _ in 0..steps {
        let mv = propose_gamma_move(state, hp.move_prob_rho, rng);
        let log_a = gamma_log_acceptance(state, data, hp, mv);
        if log_a >= 0.0 || rng.random::<f64>().ln() < log_a {
            apply_gamma_move(state, mv);
            match mv {
                GammaMove::Flip(j) => refresh_gene(state, data, hp, j, rng),
                GammaMove::Swap { on, off } => {
                    refresh_gene(state, data, hp, on, rng);
                    refresh_gene(state, data, hp, off, rng);
                }
            }
            accepted += 1;
        }
    }
    accepted
}

// ---------------------------------------------------------------- Step 2

/// Removes spot `i` from its cluster. An emptied cluster is deleted by moving
/// the last cluster into its slot.
fn detach(state: &mut ModelState, i: usize) {
    let p = state.p;
    let c = state.z[i];
    state.z[i] = DETACHED;
    state.sizes[c] -= 1;
    if state.sizes[c] > 0 {
        return;
    }
    let last = state.sizes.len() - 1;
    if c != last {
        state.sizes[c] = state.sizes[last];
        state.mu_star.copy_within(last * p..(last + 1) * p, c * p);
        state.ln_mu_star.copy_within(last * p..(last + 1) * p, c * p);
        for zi in state.z.iter_mut() {
            if *zi == last {
                *zi = c;
            }
        }
    }
    state.sizes.pop();
    state.mu_star.truncate(last * p);
    state.ln_mu_star.truncate(last * p);
}

/// Conditional of a detached spot's label, split into the urn (prior) part and
/// the likelihood part. Entry `t` (the last) is a new cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct SpotConditional {
    /// Labels of the other spots after removal; the spot itself holds `usize::MAX`.
    pub others: Vec<usize>,
    pub prior_log_weights: Vec<f64>,
    pub lik_log_weights: Vec<f64>,
    pub probs: Vec<f64>,
}

pub(super) fn ensure_vn(vn: &mut VnTable, t: usize) {
    if vn.t_max() <= t {
        let want = (2 * vn.t_max()).max(t + 1).min(vn.n());
        *vn = vn.extended(want);
    }
}

#[allow(clippy::too_many_arguments)]
fn fill_weights(
    state: &ModelState,
    data: &ModelData,
    graph: &SpatialGraph,
    vn: &VnTable,
    cfg: &MfmConfig,
    hp: &Hyperparams,
    active: &[usize],
    i: usize,
    nb: &mut Vec<usize>,
    prior: &mut Vec<f64>,
    lik: &mut Vec<f64>,
) -> Result<()> {
    let p = state.p;
    let t = state.n_clusters();
    nb.clear();
    nb.resize(t, 0);
    for &j in graph.neighbors(i) {
        nb[state.z[j]] += 1;
    }
    prior.clear();
    lik.clear();
    let s = data.s(i);
    for k in 0..t {
        prior.push(urn_existing_log_weight(state.sizes[k], nb[k], cfg));
        let row = &state.ln_mu_star[k * p..(k + 1) * p];
        let mu_row = &state.mu_star[k * p..(k + 1) * p];
        let mut l = 0.0;
        for &j in active {
            if !state.r[i * p + j] {
                // y ln s - ln y! is common to every option and dropped
                l += data.y(i, j) as f64 * row[j] - s * mu_row[j];
            }
        }
        lik.push(l);
    }
    prior.push(urn_new_log_weight(t, vn, cfg)?);
    let mut l = 0.0;
    for &j in active {
        if !state.r[i * p + j] {
            l += marginal_from_sums(data.y(i, j) as f64, s, hp.alpha_mu, hp.beta_mu);
        }
    }
    lik.push(l);
    Ok(())
}

fn active_genes(state: &ModelState) -> Vec<usize> {
    (0..state.p).filter(|&j| state.gamma[j]).collect()
}

/// Conditional distribution of `z_i` given everything else, evaluated on a
/// copy of `state`.
pub fn spot_conditional(
    state: &ModelState,
    data: &ModelData,
    graph: &SpatialGraph,
    vn: &VnTable,
    cfg: &MfmConfig,
    hp: &Hyperparams,
    i: usize,
) -> Result<SpotConditional> {
    let mut st = state.clone();
    detach(&mut st, i);
    let mut vn = vn.clone();
    ensure_vn(&mut vn, st.n_clusters());
    let active = active_genes(&st);
    let (mut nb, mut prior, mut lik) = (Vec::new(), Vec::new(), Vec::new());
    fill_weights(
        &st, data, graph, &vn, cfg, hp, &active, i, &mut nb, &mut prior, &mut lik,
    )?;
    let mut probs: Vec<f64> = prior.iter().zip(&lik).map(|(a, b)| a + b).collect();
    normalize_log_weights(&mut probs);
    Ok(SpotConditional {
        others: st.z,
        prior_log_weights: prior,
        lik_log_weights: lik,
        probs,
    })
}

/// Step 2: sequential Gibbs over all spots with cluster birth and death.
/// `vn` is extended in place if the number of clusters outgrows it.
pub fn update_z<R: Rng + ?Sized>(
    state: &mut ModelState,
    data: &ModelData,
    graph: &SpatialGraph,
    vn: &mut VnTable,
    cfg: &MfmConfig,
    hp: &Hyperparams,
    rng: &mut R,
) -> Result<()> {
    let p = state.p;
    let active = active_genes(state);
    let (mut nb, mut prior, mut lik) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..data.n() {
        detach(state, i);
        let t = state.n_clusters();
        ensure_vn(vn, t);
        fill_weights(
            state, data, graph, vn, cfg, hp, &active, i, &mut nb, &mut prior, &mut lik,
        )?;
        for (w, l) in prior.iter_mut().zip(&lik) {
            *w += l;
        }
        let k = sample_log_categorical(&mut prior, rng);
        if k == t {
            let s = data.s(i);
            for j in 0..p {
                let v = if state.gamma[j] && !state.r[i * p + j] {
                    draw_gamma(hp.alpha_mu + data.y(i, j) as f64, hp.beta_mu + s, rng)
                } else {
                    draw_gamma(hp.alpha_mu, hp.beta_mu, rng)
                };
                state.mu_star.push(v);
                state.ln_mu_star.push(v.ln());
            }
            state.sizes.push(1);
        } else {
            state.sizes[k] += 1;
        }
        state.z[i] = k;
    }
    Ok(())
}

// ---------------------------------------------------------------- Step 3

/// Step 3: conjugate draws of every cluster level and every null level.
pub fn update_mu<R: Rng + ?Sized>(
    state: &mut ModelState,
    data: &ModelData,
    hp: &Hyperparams,
    rng: &mut R,
) {
    let p = state.p;
    let k = state.n_clusters();
    let mut ys = vec![0.0; k * p];
    let mut ss = vec![0.0; k * p];
    for i in 0..data.n() {
        let base = state.z[i] * p;
        let s = data.s(i);
        for j in 0..p {
            if !state.r[i * p + j] {
                ys[base + j] += data.y(i, j) as f64;
                ss[base + j] += s;
            }
        }
    }
    for c in 0..k {
        for j in 0..p {
            let e = c * p + j;
            let v = draw_gamma(hp.alpha_mu + ys[e], hp.beta_mu + ss[e], rng);
            state.set_mu_star(c, j, v);
        }
    }
    for j in 0..p {
        let (mut y, mut s) = (0.0, 0.0);
        for c in 0..k {
            y += ys[c * p + j];
            s += ss[c * p + j];
        }
        state.mu0[j] = draw_gamma(hp.alpha_mu + y, hp.beta_mu + s, rng);
    }
}

// ---------------------------------------------------------------- Step 4

/// Posterior probability that a zero count is an extra zero.
#[inline]
pub fn extra_zero_prob(pi: f64, rate: f64) -> f64 {
    if pi <= 0.0 {
        return 0.0;
    }
    pi / (pi + (1.0 - pi) * (-rate).exp())
}

/// Step 4: redraw the extra-zero indicators at zero counts.
pub fn update_r<R: Rng + ?Sized>(state: &mut ModelState, data: &ModelData, rng: &mut R) {
    let p = state.p;
    for i in 0..data.n() {
        let s = data.s(i);
        let pi = state.pi[i];
        for j in 0..p {
            let e = i * p + j;
            state.r[e] = if data.y(i, j) > 0 {
                false
            } else {
                rng.random::<f64>() < extra_zero_prob(pi, s * state.mu_for(i, j))
            };
        }
    }
}

// ---------------------------------------------------------------- Step 5

/// Step 5: per-spot extra-zero proportions.
pub fn update_pi<R: Rng + ?Sized>(
    state: &mut ModelState,
    data: &ModelData,
    hp: &Hyperparams,
    rng: &mut R,
) {
    let p = state.p;
    for i in 0..data.n() {
        let a = state.r[i * p..(i + 1) * p].iter().filter(|r| **r).count() as f64;
        let beta = Beta::new(hp.alpha_pi + a, hp.beta_pi + p as f64 - a)
            .expect("beta parameters are positive");
        state.pi[i] = beta.sample(rng);
    }
}
