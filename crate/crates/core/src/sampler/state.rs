use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::{Hyperparams, InitMethod};
use crate::data::{CountMatrix, SizeFactors, SpatialGraph};
use crate::error::{Error, Result};
use crate::math::LnFactorial;
use crate::partition::{canonicalize, check_contiguous, cluster_sizes};

const K_INIT: usize = 5;

/// Counts plus fixed size factors, with a few cached transforms.
#[derive(Debug, Clone)]
pub struct ModelData {
    counts: CountMatrix,
    s: Vec<f64>,
    ln_s: Vec<f64>,
    ln_fact: LnFactorial,
}

impl ModelData {
    pub fn new(counts: CountMatrix, s: SizeFactors) -> Result<Self> {
        if s.len() != counts.n() {
            return Err(Error::Dimension(format!(
                "{} size factors for {} spots",
                s.len(),
                counts.n()
            )));
        }
        let s = s.as_slice().to_vec();
        let ln_s = s.iter().map(|v| v.ln()).collect();
        let ln_fact = LnFactorial::new(counts.max_count().min(1 << 16));
        Ok(Self {
            counts,
            s,
            ln_s,
            ln_fact,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.counts.n()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.counts.p()
    }

    #[inline]
    pub fn y(&self, i: usize, j: usize) -> u32 {
        self.counts.get(i, j)
    }

    #[inline]
    pub fn s(&self, i: usize) -> f64 {
        self.s[i]
    }

    #[inline]
    pub fn ln_s(&self, i: usize) -> f64 {
        self.ln_s[i]
    }

    pub fn size_factors(&self) -> &[f64] {
        &self.s
    }

    pub fn counts(&self) -> &CountMatrix {
        &self.counts
    }

    #[inline]
    pub(crate) fn ln_fact(&self, y: u32) -> f64 {
        self.ln_fact.get(y)
    }
}

/// Current values of all sampled quantities.
///
/// Labels are 0-based and contiguous. `mu_star` is stored row-major, one row
/// per active cluster, with a parallel cache of its logs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub(crate) p: usize,
    pub(crate) z: Vec<usize>,
    pub(crate) sizes: Vec<usize>,
    pub(crate) gamma: Vec<bool>,
    pub(crate) p_gamma: usize,
    pub(crate) r: Vec<bool>,
    pub(crate) mu_star: Vec<f64>,
    pub(crate) ln_mu_star: Vec<f64>,
    pub(crate) mu0: Vec<f64>,
    pub(crate) pi: Vec<f64>,
}

pub(crate) fn draw_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate).expect("gamma parameters are positive");
    g.sample(rng).max(f64::MIN_POSITIVE)
}

/// Moran's I z-score of `ln(1 + y / s)` for every gene, using the normal
/// approximation to its null variance on the binary neighbor graph.
fn moran_z(data: &ModelData, graph: &SpatialGraph) -> Vec<f64> {
    let n = data.n();
    let nf = n as f64;
    let w: f64 = (0..n).map(|i| graph.neighbors(i).len() as f64).sum();
    if w == 0.0 {
        return vec![0.0; data.p()];
    }
    let s1 = 2.0 * w;
    let s2: f64 = (0..n)
        .map(|i| (2.0 * graph.neighbors(i).len() as f64).powi(2))
        .sum();
    let e = -1.0 / (nf - 1.0);
    let var = (nf * nf * s1 - nf * s2 + 3.0 * w * w) / ((nf * nf - 1.0) * w * w) - e * e;
    let sd = var.max(f64::MIN_POSITIVE).sqrt();
    let mut x = vec![0.0; n];
    (0..data.p())
        .map(|j| {
            for (i, xi) in x.iter_mut().enumerate() {
                *xi = (data.y(i, j) as f64 / data.s(i)).ln_1p();
            }
            let mean = x.iter().sum::<f64>() / nf;
            x.iter_mut().for_each(|v| *v -= mean);
            let ss: f64 = x.iter().map(|v| v * v).sum();
            if ss == 0.0 {
                return 0.0;
            }
            let cross: f64 = (0..n)
                .map(|i| graph.neighbors(i).iter().map(|&l| x[i] * x[l]).sum::<f64>())
                .sum();
            let moran = nf / w * cross / ss;
            (moran - e) / sd
        })
        .collect()
}

/// Pearson dispersion `sum_i (y - s m)^2 / (s m) / (n - 1)` of each gene
/// around its pooled rate `m`; close to 1 for a homogeneous Poisson gene.
fn dispersion_index(data: &ModelData) -> Vec<f64> {
    let (n, p) = (data.n(), data.p());
    let s_tot: f64 = (0..n).map(|i| data.s(i)).sum();
    (0..p)
        .map(|j| {
            let m = (0..n).map(|i| data.y(i, j) as f64).sum::<f64>() / s_tot;
            if m == 0.0 {
                return 0.0;
            }
            let chi2: f64 = (0..n)
                .map(|i| {
                    let e = data.s(i) * m;
                    (data.y(i, j) as f64 - e).powi(2) / e
                })
                .sum();
            chi2 / (n - 1) as f64
        })
        .collect()
}

/// Starting gene set. With a graph: genes whose spatial autocorrelation
/// z-score exceeds 3. Without one: dispersion outliers (above the median by
/// more than three scaled MADs). Falls back to the `min_genes` top-scoring
/// genes when nothing stands out. Returned in index order.
fn informative_genes(data: &ModelData, graph: Option<&SpatialGraph>, min_genes: usize) -> Vec<usize> {
    let (score, cut) = match graph {
        Some(g) => (moran_z(data, g), 3.0),
        None => {
            let d = dispersion_index(data);
            let mut sorted = d.clone();
            sorted.sort_by(f64::total_cmp);
            let median = sorted[sorted.len() / 2];
            let mut dev: Vec<f64> = d.iter().map(|v| (v - median).abs()).collect();
            dev.sort_by(f64::total_cmp);
            let cut = median + 3.0 * 1.4826 * dev[dev.len() / 2];
            (d, cut)
        }
    };
    let mut order: Vec<usize> = (0..score.len()).collect();
    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
    let above = score.iter().filter(|&&v| v > cut).count();
    order.truncate(if above > 0 { above } else { min_genes.clamp(1, score.len()) });
    order.sort_unstable();
    order
}

/// `ln(1 + y / s)` of `genes`, averaged over each spot and its neighbors
/// when a graph is given. Row-major `n x genes.len()`.
fn init_features(data: &ModelData, genes: &[usize], graph: Option<&SpatialGraph>) -> Vec<f64> {
    let n = data.n();
    let x: Vec<f64> = (0..n)
        .flat_map(|i| genes.iter().map(move |&j| (data.y(i, j) as f64 / data.s(i)).ln_1p()))
        .collect();
    let Some(graph) = graph else {
        return x;
    };
    let m = genes.len();
    let mut out = x.clone();
    for i in 0..n {
        let nb = graph.neighbors(i);
        let row = &mut out[i * m..(i + 1) * m];
        for &l in nb {
            for (o, v) in row.iter_mut().zip(&x[l * m..(l + 1) * m]) {
                *o += v;
            }
        }
        let w = (nb.len() + 1) as f64;
        row.iter_mut().for_each(|o| *o /= w);
    }
    out
}

/// Lloyd's algorithm from a k-means++ seeding; `x` is row-major `n x p`.
fn kmeans_labels<R: Rng + ?Sized>(x: &[f64], n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    const MAX_ITER: usize = 50;
    let p = x.len() / n;
    let row = |i: usize| &x[i * p..(i + 1) * p];
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();

    let mut centers: Vec<f64> = row(rng.random_range(0..n)).to_vec();
    let mut best = vec![f64::INFINITY; n];
    while centers.len() < k * p {
        let last = &centers[centers.len() - p..];
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(dist2(row(i), last));
        }
        let total: f64 = best.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            best.iter()
                .position(|&b| {
                    u -= b;
                    u < 0.0
                })
                .unwrap_or(n - 1)
        } else {
            rng.random_range(0..n)
        };
        centers.extend_from_slice(row(next));
    }

    let mut labels = vec![0usize; n];
    for it in 0..MAX_ITER {
        let mut changed = false;
        for (i, l) in labels.iter_mut().enumerate() {
            let c = (0..k)
                .map(|c| (c, dist2(row(i), &centers[c * p..(c + 1) * p])))
                .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
                .0;
            changed |= c != *l;
            *l = c;
        }
        if !changed && it > 0 {
            break;
        }
        let mut sizes = vec![0usize; k];
        centers.iter_mut().for_each(|v| *v = 0.0);
        for (i, &l) in labels.iter().enumerate() {
            sizes[l] += 1;
            for (c, v) in centers[l * p..(l + 1) * p].iter_mut().zip(row(i)) {
                *c += v;
            }
        }
        for (c, &m) in sizes.iter().enumerate() {
            if m == 0 {
                // keep an emptied center on a random spot
                let i = rng.random_range(0..n);
                centers[c * p..(c + 1) * p].copy_from_slice(row(i));
            } else {
                centers[c * p..(c + 1) * p].iter_mut().for_each(|v| *v /= m as f64);
            }
        }
    }
    labels
}

impl ModelState {
    /// Starts with at most five clusters, extra zeros on half of the zero
    /// cells, `mu` from the prior and `pi = 0.5`.
    ///
    /// `Random` draws uniform labels and `gamma` iid from its prior mean.
    /// `KMeans` switches on the spatially structured genes (or, without a
    /// graph, the overdispersed ones; `ceil(p * E[omega])` top genes if none
    /// stand out) and clusters the spots on them, after neighborhood averaging when a
    /// graph is given. A near-empty `gamma` lets the
    /// allocation step collapse everything into one cluster, and with a
    /// single cluster no gene can enter, so the chain would never leave.
    pub fn initialize<R: Rng + ?Sized>(
        data: &ModelData,
        hp: &Hyperparams,
        init: InitMethod,
        graph: Option<&SpatialGraph>,
        rng: &mut R,
    ) -> Self {
        let (n, p) = (data.n(), data.p());
        let w = hp.alpha_omega / (hp.alpha_omega + hp.beta_omega);
        let (raw, gamma): (Vec<usize>, Vec<bool>) = match init {
            InitMethod::Random => (
                (0..n).map(|_| rng.random_range(0..K_INIT)).collect(),
                (0..p).map(|_| rng.random::<f64>() < w).collect(),
            ),
            InitMethod::KMeans => {
                let m = ((p as f64 * w).ceil() as usize).clamp(1, p);
                let genes = informative_genes(data, graph, m);
                let mut gamma = vec![false; p];
                for &j in &genes {
                    gamma[j] = true;
                }
                let x = init_features(data, &genes, graph);
                (kmeans_labels(&x, n, K_INIT.min(n), rng), gamma)
            }
        };
        let z = canonicalize(&raw);
        let mut r = vec![false; n * p];
        for i in 0..n {
            for j in 0..p {
                if data.y(i, j) == 0 {
                    r[i * p + j] = rng.random::<f64>() < 0.5;
                }
            }
        }
        let k = z.iter().max().map_or(0, |m| m + 1);
        let mu_star: Vec<f64> = (0..k * p)
            .map(|_| draw_gamma(hp.alpha_mu, hp.beta_mu, rng))
            .collect();
        let mu0 = (0..p)
            .map(|_| draw_gamma(hp.alpha_mu, hp.beta_mu, rng))
            .collect();
        Self::assemble(p, z, gamma, r, mu_star, mu0, vec![0.5; n])
    }

    /// Builds a state from explicit values and checks every invariant.
    pub fn from_parts(
        data: &ModelData,
        z: Vec<usize>,
        gamma: Vec<bool>,
        r: Vec<bool>,
        mu_star: Vec<f64>,
        mu0: Vec<f64>,
        pi: Vec<f64>,
    ) -> Result<Self> {
        let (n, p) = (data.n(), data.p());
        if z.len() != n || gamma.len() != p || r.len() != n * p || mu0.len() != p || pi.len() != n
        {
            return Err(Error::Dimension("state does not match data shape".into()));
        }
        let k = check_contiguous(&z)?;
        if mu_star.len() != k * p {
            return Err(Error::Dimension(format!(
                "mu_star has {} entries, expected {k} x {p}",
                mu_star.len()
            )));
        }
        let state = Self::assemble(p, z, gamma, r, mu_star, mu0, pi);
        state.validate(data)?;
        Ok(state)
    }

    fn assemble(
        p: usize,
        z: Vec<usize>,
        gamma: Vec<bool>,
        r: Vec<bool>,
        mu_star: Vec<f64>,
        mu0: Vec<f64>,
        pi: Vec<f64>,
    ) -> Self {
        let k = z.iter().max().map_or(0, |m| m + 1);
        let sizes = cluster_sizes(&z, k);
        let p_gamma = gamma.iter().filter(|g| **g).count();
        let ln_mu_star = mu_star.iter().map(|m| m.ln()).collect();
        Self {
            p,
            z,
            sizes,
            gamma,
            p_gamma,
            r,
            mu_star,
            ln_mu_star,
            mu0,
            pi,
        }
    }

    /// Checks the invariants that must hold between sweeps.
    pub fn validate(&self, data: &ModelData) -> Result<()> {
        let k = check_contiguous(&self.z)?;
        if self.sizes != cluster_sizes(&self.z, k) {
            return Err(Error::Invariant("cluster sizes out of sync".into()));
        }
        if self.mu_star.len() != k * self.p || self.ln_mu_star.len() != k * self.p {
            return Err(Error::Invariant("mu_star rows do not match clusters".into()));
        }
        if self.p_gamma != self.gamma.iter().filter(|g| **g).count() {
            return Err(Error::Invariant("p_gamma out of sync".into()));
        }
        for i in 0..data.n() {
            for j in 0..self.p {
                if self.r[i * self.p + j] && data.y(i, j) > 0 {
                    return Err(Error::Invariant(format!(
                        "extra zero flagged at positive count ({i}, {j})"
                    )));
                }
            }
        }
        if self
            .mu_star
            .iter()
            .chain(self.mu0.iter())
            .any(|m| !(*m > 0.0 && m.is_finite()))
        {
            return Err(Error::Invariant("nonpositive expression level".into()));
        }
        if self.pi.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Invariant("pi outside [0, 1]".into()));
        }
        Ok(())
    }

    pub fn z(&self) -> &[usize] {
        &self.z
    }

    pub fn gamma(&self) -> &[bool] {
        &self.gamma
    }

    pub fn p_gamma(&self) -> usize {
        self.p_gamma
    }

    pub fn n_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn cluster_sizes(&self) -> &[usize] {
        &self.sizes
    }

    #[inline]
    pub fn r(&self, i: usize, j: usize) -> bool {
        self.r[i * self.p + j]
    }

    #[inline]
    pub fn mu_star(&self, k: usize, j: usize) -> f64 {
        self.mu_star[k * self.p + j]
    }

    #[inline]
    pub fn mu0(&self, j: usize) -> f64 {
        self.mu0[j]
    }

    /// Expression level in force for spot `i`, gene `j`.
    #[inline]
    pub fn mu_for(&self, i: usize, j: usize) -> f64 {
        if self.gamma[j] {
            self.mu_star(self.z[i], j)
        } else {
            self.mu0[j]
        }
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    #[inline]
    pub(crate) fn set_mu_star(&mut self, k: usize, j: usize, v: f64) {
        self.mu_star[k * self.p + j] = v;
        self.ln_mu_star[k * self.p + j] = v.ln();
    }
}
