//! Split-merge moves on the allocations with the included genes' cluster
//! levels integrated out. Splits are proposed by a sequential allocation
//! refined with restricted Gibbs scans over the two parts.
//!
//! Single-spot Gibbs updates almost never open a cluster next to a large
//! one: the newcomer pays the full MRF and size penalty before the gene
//! indicators can react. Once all spots share one label no gene gains from
//! inclusion, so the chain stalls there. A split proposal moves a whole
//! group at once and lets the collapsed likelihood judge it.

use rand::seq::SliceRandom;
use rand::Rng;

use super::likelihood::marginal_from_sums;
use super::state::draw_gamma;
use super::steps::ensure_vn;
use super::{Hyperparams, ModelData, ModelState};
use crate::data::SpatialGraph;
use crate::error::Result;
use crate::mfm::{partition_log_prior, MfmConfig, VnTable};

/// Running sums of one cluster over the included genes (non-extra-zero
/// entries only).
#[derive(Clone)]
struct Sums {
    size: usize,
    ys: Vec<f64>,
    ss: Vec<f64>,
}

impl Sums {
    fn new(m: usize) -> Self {
        Self {
            size: 0,
            ys: vec![0.0; m],
            ss: vec![0.0; m],
        }
    }

    fn add(&mut self, state: &ModelState, data: &ModelData, active: &[usize], i: usize) {
        let p = state.p;
        let s = data.s(i);
        self.size += 1;
        for (a, &j) in active.iter().enumerate() {
            if !state.r[i * p + j] {
                self.ys[a] += data.y(i, j) as f64;
                self.ss[a] += s;
            }
        }
    }

    fn remove(&mut self, state: &ModelState, data: &ModelData, active: &[usize], i: usize) {
        let p = state.p;
        let s = data.s(i);
        self.size -= 1;
        for (a, &j) in active.iter().enumerate() {
            if !state.r[i * p + j] {
                self.ys[a] -= data.y(i, j) as f64;
                self.ss[a] -= s;
            }
        }
    }

    fn log_marginal(&self, hp: &Hyperparams) -> f64 {
        self.ys
            .iter()
            .zip(&self.ss)
            .map(|(&y, &s)| marginal_from_sums(y, s, hp.alpha_mu, hp.beta_mu))
            .sum()
    }

    /// Log predictive of spot `i` joining this cluster.
    fn log_predictive(
        &self,
        state: &ModelState,
        data: &ModelData,
        hp: &Hyperparams,
        active: &[usize],
        i: usize,
    ) -> f64 {
        let p = state.p;
        let s = data.s(i);
        let mut l = 0.0;
        for (a, &j) in active.iter().enumerate() {
            if !state.r[i * p + j] {
                let y = data.y(i, j) as f64;
                l += marginal_from_sums(self.ys[a] + y, self.ss[a] + s, hp.alpha_mu, hp.beta_mu)
                    - marginal_from_sums(self.ys[a], self.ss[a], hp.alpha_mu, hp.beta_mu);
            }
        }
        l
    }
}

/// Restricted Gibbs scans between the launch allocation and the final scan.
const INTERMEDIATE_SCANS: usize = 3;

/// Two-way allocation of a merged group around anchors `i` and `j`.
struct Allocation {
    /// `true` where the member goes with `j`.
    to_j: Vec<bool>,
    first: Sums,
    second: Sums,
    log_q: f64,
}

struct Group<'a> {
    state: &'a ModelState,
    data: &'a ModelData,
    graph: &'a SpatialGraph,
    cfg: &'a MfmConfig,
    hp: &'a Hyperparams,
    active: &'a [usize],
    members: &'a [usize],
    i: usize,
    j: usize,
}

impl Group<'_> {
    /// Log weights of spot `l` joining the first or second part, given the
    /// sides of the other placed members.
    fn weights(&self, side: &[u8], first: &Sums, second: &Sums, l: usize) -> (f64, f64) {
        let (mut nb1, mut nb2) = (0usize, 0usize);
        for &v in self.graph.neighbors(l) {
            match side[v] {
                1 => nb1 += 1,
                2 => nb2 += 1,
                _ => {}
            }
        }
        let (st, data, hp, active) = (self.state, self.data, self.hp, self.active);
        let w1 = (first.size as f64 + self.cfg.alpha0).ln()
            + self.cfg.d * nb1 as f64
            + first.log_predictive(st, data, hp, active, l);
        let w2 = (second.size as f64 + self.cfg.alpha0).ln()
            + self.cfg.d * nb2 as f64
            + second.log_predictive(st, data, hp, active, l);
        (w1, w2)
    }

    /// Sequential allocation in random order followed by restricted Gibbs
    /// scans. Depends only on the group and the anchors, never on how the
    /// group is currently split.
    fn launch<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<u8>, Sums, Sums) {
        let (st, data, active) = (self.state, self.data, self.active);
        let mut side = vec![0u8; data.n()];
        let mut first = Sums::new(active.len());
        let mut second = Sums::new(active.len());
        first.add(st, data, active, self.i);
        second.add(st, data, active, self.j);
        side[self.i] = 1;
        side[self.j] = 2;
        let mut order: Vec<usize> = self
            .members
            .iter()
            .copied()
            .filter(|&l| l != self.i && l != self.j)
            .collect();
        order.shuffle(rng);
        for &l in &order {
            let (w1, w2) = self.weights(&side, &first, &second, l);
            if rng.random::<f64>() < prob_second(w1, w2) {
                second.add(st, data, active, l);
                side[l] = 2;
            } else {
                first.add(st, data, active, l);
                side[l] = 1;
            }
        }
        for _ in 0..INTERMEDIATE_SCANS {
            self.scan(&mut side, &mut first, &mut second, None, rng);
        }
        (side, first, second)
    }

    /// One restricted Gibbs scan over the non-anchor members in index order.
    /// With `forced` (indexed like `members`) the scan moves to that split and
    /// only its log probability is accumulated.
    fn scan<R: Rng + ?Sized>(
        &self,
        side: &mut [u8],
        first: &mut Sums,
        second: &mut Sums,
        forced: Option<&[bool]>,
        rng: &mut R,
    ) -> f64 {
        let (st, data, active) = (self.state, self.data, self.active);
        let mut log_q = 0.0;
        for (m, &l) in self.members.iter().enumerate() {
            if l == self.i || l == self.j {
                continue;
            }
            if side[l] == 2 {
                second.remove(st, data, active, l);
            } else {
                first.remove(st, data, active, l);
            }
            side[l] = 0;
            let (w1, w2) = self.weights(side, first, second, l);
            let q2 = prob_second(w1, w2);
            let go_j = match forced {
                Some(f) => f[m],
                None => rng.random::<f64>() < q2,
            };
            log_q += if go_j { q2.ln() } else { (1.0 - q2).ln() };
            if go_j {
                second.add(st, data, active, l);
                side[l] = 2;
            } else {
                first.add(st, data, active, l);
                side[l] = 1;
            }
        }
        log_q
    }

    /// Launch plus a final scan; with `forced`, the probability that the final
    /// scan lands on that split.
    fn allocate<R: Rng + ?Sized>(&self, forced: Option<&[bool]>, rng: &mut R) -> Allocation {
        let (mut side, mut first, mut second) = self.launch(rng);
        let log_q = self.scan(&mut side, &mut first, &mut second, forced, rng);
        Allocation {
            to_j: self.members.iter().map(|&l| side[l] == 2).collect(),
            first,
            second,
            log_q,
        }
    }
}

/// Probability of the second option from two log weights.
fn prob_second(w1: f64, w2: f64) -> f64 {
    1.0 / (1.0 + (w1 - w2).exp())
}

/// Draws every level of cluster `k` from its full conditional.
fn redraw_cluster<R: Rng + ?Sized>(
    state: &mut ModelState,
    data: &ModelData,
    hp: &Hyperparams,
    k: usize,
    rng: &mut R,
) {
    let p = state.p;
    let mut ys = vec![0.0; p];
    let mut ss = vec![0.0; p];
    for i in 0..data.n() {
        if state.z[i] != k {
            continue;
        }
        let s = data.s(i);
        for j in 0..p {
            if !state.r[i * p + j] {
                ys[j] += data.y(i, j) as f64;
                ss[j] += s;
            }
        }
    }
    for j in 0..p {
        let v = draw_gamma(hp.alpha_mu + ys[j], hp.beta_mu + ss[j], rng);
        state.set_mu_star(k, j, v);
    }
}

/// One split-merge proposal. Two distinct spots are drawn; if they share a
/// cluster it is split around them, otherwise their clusters are merged.
/// Accepted with the Metropolis-Hastings ratio of the partition posterior
/// given `gamma` and the extra-zero indicators, after which the affected
/// clusters' levels are redrawn from their full conditionals. Returns whether
/// the proposal was accepted.
pub fn split_merge<R: Rng + ?Sized>(
    state: &mut ModelState,
    data: &ModelData,
    graph: &SpatialGraph,
    vn: &mut VnTable,
    cfg: &MfmConfig,
    hp: &Hyperparams,
    rng: &mut R,
) -> Result<bool> {
    let n = data.n();
    let p = state.p;
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    let active: Vec<usize> = (0..p).filter(|&g| state.gamma[g]).collect();
    let (ci, cj) = (state.z[i], state.z[j]);
    let t = state.n_clusters();
    ensure_vn(vn, t + 1);
    let lp_now = partition_log_prior(&state.z, graph, vn, cfg)?;

    if ci == cj {
        let members: Vec<usize> = (0..n).filter(|&l| state.z[l] == ci).collect();
        let mut whole = Sums::new(active.len());
        for &l in &members {
            whole.add(state, data, &active, l);
        }
        let group = Group {
            state,
            data,
            graph,
            cfg,
            hp,
            active: &active,
            members: &members,
            i,
            j,
        };
        let alloc = group.allocate(None, rng);
        let mut z_new = state.z.clone();
        for (m, &l) in members.iter().enumerate() {
            if alloc.to_j[m] {
                z_new[l] = t;
            }
        }
        let lp_new = partition_log_prior(&z_new, graph, vn, cfg)?;
        let log_a = lp_new - lp_now + alloc.first.log_marginal(hp) + alloc.second.log_marginal(hp)
            - whole.log_marginal(hp)
            - alloc.log_q;
        if log_a >= 0.0 || rng.random::<f64>().ln() < log_a {
            state.z = z_new;
            state.sizes[ci] = alloc.first.size;
            state.sizes.push(alloc.second.size);
            state.mu_star.extend(std::iter::repeat_n(1.0, p));
            state.ln_mu_star.extend(std::iter::repeat_n(0.0, p));
            redraw_cluster(state, data, hp, ci, rng);
            redraw_cluster(state, data, hp, t, rng);
            return Ok(true);
        }
        return Ok(false);
    }

    let members: Vec<usize> = (0..n)
        .filter(|&l| state.z[l] == ci || state.z[l] == cj)
        .collect();
    let actual: Vec<bool> = members.iter().map(|&l| state.z[l] == cj).collect();
    let group = Group {
        state,
        data,
        graph,
        cfg,
        hp,
        active: &active,
        members: &members,
        i,
        j,
    };
    let alloc = group.allocate(Some(&actual), rng);
    let mut whole = Sums::new(active.len());
    for &l in &members {
        whole.add(state, data, &active, l);
    }
    // merge cj into ci, then move the last cluster into the freed slot
    let last = t - 1;
    let mut z_new = state.z.clone();
    for zl in z_new.iter_mut() {
        if *zl == cj {
            *zl = ci;
        }
    }
    let keep = if ci == last { cj } else { ci };
    if cj != last {
        for zl in z_new.iter_mut() {
            if *zl == last {
                *zl = cj;
            }
        }
    }
    let lp_new = partition_log_prior(&z_new, graph, vn, cfg)?;
    let log_a = lp_new - lp_now + whole.log_marginal(hp)
        - alloc.first.log_marginal(hp)
        - alloc.second.log_marginal(hp)
        + alloc.log_q;
    if log_a >= 0.0 || rng.random::<f64>().ln() < log_a {
        state.z = z_new;
        if cj != last {
            state.sizes[cj] = state.sizes[last];
            state.mu_star.copy_within(last * p..(last + 1) * p, cj * p);
            state.ln_mu_star.copy_within(last * p..(last + 1) * p, cj * p);
        }
        state.sizes.pop();
        state.mu_star.truncate(last * p);
        state.ln_mu_star.truncate(last * p);
        state.sizes[keep] = members.len();
        redraw_cluster(state, data, hp, keep, rng);
        return Ok(true);
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CountMatrix, SizeFactors};
    use crate::partition::canonicalize;
    use crate::sampler::{gene_cluster_marginal_loglik, update_z, InitMethod};
    use crate::testutil::set_partitions;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn instance() -> (ModelData, SpatialGraph) {
        let rows = vec![
            vec![0, 4, 1],
            vec![1, 6, 0],
            vec![7, 0, 2],
            vec![9, 1, 0],
            vec![3, 3, 3],
        ];
        let counts = CountMatrix::from_rows(&rows).unwrap();
        let s = SizeFactors::from_values(vec![0.8, 1.25, 1.0, 0.5, 2.0]).unwrap();
        let graph = SpatialGraph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
        (ModelData::new(counts, s).unwrap(), graph)
    }

    /// Exact posterior of the partition given gamma and r, by enumeration.
    fn exact(
        data: &ModelData,
        graph: &SpatialGraph,
        vn: &VnTable,
        cfg: &MfmConfig,
        hp: &Hyperparams,
        gamma: &[bool],
        r: &[bool],
    ) -> HashMap<Vec<usize>, f64> {
        let p = data.p();
        let mut out = HashMap::new();
        let mut total = 0.0;
        let mut logs = Vec::new();
        for z in set_partitions(data.n()) {
            let t = z.iter().max().unwrap() + 1;
            let mut lw = partition_log_prior(&z, graph, vn, cfg).unwrap();
            for j in (0..p).filter(|&j| gamma[j]) {
                for k in 0..t {
                    let (mut ys, mut ss) = (Vec::new(), Vec::new());
                    for i in (0..data.n()).filter(|&i| z[i] == k && !r[i * p + j]) {
                        ys.push(data.y(i, j));
                        ss.push(data.s(i));
                    }
                    lw += gene_cluster_marginal_loglik(&ys, &ss, hp.alpha_mu, hp.beta_mu).unwrap();
                }
            }
            logs.push((z, lw));
        }
        let hi = logs.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        for (_, lw) in &logs {
            total += (lw - hi).exp();
        }
        for (z, lw) in logs {
            out.insert(z, (lw - hi).exp() / total);
        }
        out
    }

    fn check_invariance(use_gibbs: bool, d: f64, seed: u64) {
        let (data, graph) = instance();
        let hp = Hyperparams::default();
        let cfg = MfmConfig {
            d,
            ..Default::default()
        };
        let mut vn = VnTable::with_defaults(5, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut st = ModelState::initialize(&data, &hp, InitMethod::Random, None, &mut rng);
        st.gamma = vec![true, true, false];
        st.p_gamma = 2;
        st.r = vec![false; 15];
        st.r[1 * 3 + 2] = true;
        let target = exact(&data, &graph, &vn, &cfg, &hp, &st.gamma.clone(), &st.r.clone());
        let mut counts: HashMap<Vec<usize>, f64> = HashMap::new();
        let sweeps = 200_000;
        let mut accepted = 0;
        for _ in 0..sweeps {
            if use_gibbs {
                update_z(&mut st, &data, &graph, &mut vn, &cfg, &hp, &mut rng).unwrap();
            }
            if split_merge(&mut st, &data, &graph, &mut vn, &cfg, &hp, &mut rng).unwrap() {
                accepted += 1;
            }
            st.validate(&data).unwrap();
            *counts.entry(canonicalize(&st.z)).or_default() += 1.0;
        }
        assert!(accepted > 1000, "{accepted} accepted");
        let tv: f64 = 0.5
            * target
                .iter()
                .map(|(z, pz)| (counts.get(z).copied().unwrap_or(0.0) / sweeps as f64 - pz).abs())
                .sum::<f64>();
        assert!(tv < 0.01, "TV = {tv}");
    }

    #[test]
    fn leaves_partition_posterior_invariant() {
        check_invariance(false, 0.0, 1);
        check_invariance(false, 0.8, 2);
    }

    #[test]
    fn composes_with_gibbs_scan() {
        check_invariance(true, 0.8, 3);
    }

    #[test]
    fn escapes_single_cluster() {
        // two blocks separated in gene 0 only; a single cluster is a poor state
        let rows: Vec<Vec<u32>> = (0..20)
            .map(|i| vec![if i < 10 { 0 } else { 12 }, 2])
            .collect();
        let counts = CountMatrix::from_rows(&rows).unwrap();
        let s = SizeFactors::from_values(vec![1.0; 20]).unwrap();
        let data = ModelData::new(counts, s).unwrap();
        let edges: Vec<(usize, usize)> = (0..19).map(|i| (i, i + 1)).collect();
        let graph = SpatialGraph::from_edges(20, &edges).unwrap();
        let hp = Hyperparams::default();
        let cfg = MfmConfig::default();
        let mut vn = VnTable::with_defaults(20, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut st = ModelState::from_parts(
            &data,
            vec![0; 20],
            vec![true, false],
            vec![false; 40],
            vec![6.0, 2.0],
            vec![6.0, 2.0],
            vec![0.1; 20],
        )
        .unwrap();
        for _ in 0..500 {
            split_merge(&mut st, &data, &graph, &mut vn, &cfg, &hp, &mut rng).unwrap();
            st.validate(&data).unwrap();
        }
        assert_eq!(st.n_clusters(), 2);
        let z = st.z();
        assert!((1..10).all(|i| z[i] == z[0]));
        assert!((11..20).all(|i| z[i] == z[10]));
        assert!(st.mu_star(z[10], 0) > st.mu_star(z[0], 0));
    }
}
