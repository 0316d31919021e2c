//! Synthetic spatial count data: Potts label fields on a square lattice,
//! structured domain expression levels and zero-inflated Poisson counts.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::data::{square_lattice, CountMatrix};
use crate::error::{Error, Result};

/// Built-in lattice patterns, differing in the number of domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pattern {
    #[serde(rename = "I")]
    I,
    #[serde(rename = "II")]
    II,
    #[serde(rename = "III")]
    III,
}

impl Pattern {
    pub fn n_domains(self) -> usize {
        match self {
            Pattern::I => 3,
            Pattern::II => 5,
            Pattern::III => 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimScenario {
    pub height: usize,
    pub width: usize,
    pub k: usize,
    pub potts_beta: f64,
    pub sweeps: usize,
    pub p: usize,
    pub p_gamma: usize,
    pub pi: f64,
    pub seed: u64,
}

impl Default for SimScenario {
    fn default() -> Self {
        Self::pattern(Pattern::I, 0.1)
    }
}

impl SimScenario {
    /// 40 x 40 lattice, 1000 genes of which 20 discriminate.
    pub fn pattern(pattern: Pattern, pi: f64) -> Self {
        Self {
            height: 40,
            width: 40,
            k: pattern.n_domains(),
            potts_beta: 1.0,
            sweeps: 500,
            p: 1000,
            p_gamma: 20,
            pi,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height * self.width < 2 {
            return Err(Error::InvalidArgument("lattice needs at least two sites".into()));
        }
        if ![3, 5, 7].contains(&self.k) {
            return Err(Error::InvalidArgument(format!(
                "k must be 3, 5 or 7 for the built-in expression schemes, got {}",
                self.k
            )));
        }
        if !(self.potts_beta >= 0.0 && self.potts_beta.is_finite()) {
            return Err(Error::InvalidArgument("potts_beta must be >= 0".into()));
        }
        if self.sweeps == 0 {
            return Err(Error::InvalidArgument("sweeps must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.pi) {
            return Err(Error::InvalidArgument(format!("pi must lie in [0, 1), got {}", self.pi)));
        }
        check_gene_counts(self.p, self.p_gamma)
    }
}

fn check_gene_counts(p: usize, p_gamma: usize) -> Result<()> {
    if p_gamma > p || p == 0 {
        return Err(Error::InvalidArgument(format!(
            "p_gamma ({p_gamma}) must not exceed p ({p}), and p must be positive"
        )));
    }
    if p_gamma % 2 == 1 {
        return Err(Error::InvalidArgument(format!(
            "p_gamma must be even for the half-split schemes, got {p_gamma}"
        )));
    }
    Ok(())
}

/// Raster-scan single-site Gibbs for a `k`-state Potts field on the
/// 4-neighbor lattice, `P(z_i = c) ∝ exp(beta · #{neighbors labelled c})`.
/// Site `r * width + c` is row `r`, column `c`.
///
/// Below the critical coupling `ln(1 + sqrt(k))` the chain starts from iid
/// uniform labels. At or above it, a random start freezes into striped
/// metastable states that single-site updates cannot leave, so the chain
/// starts from one randomly chosen label instead.
pub fn sample_potts<R: Rng + ?Sized>(
    height: usize,
    width: usize,
    k: usize,
    beta: f64,
    sweeps: usize,
    rng: &mut R,
) -> Vec<usize> {
    let n = height * width;
    let ordered = beta >= (1.0 + (k as f64).sqrt()).ln();
    let mut z: Vec<usize> = if ordered {
        vec![rng.random_range(0..k); n]
    } else {
        (0..n).map(|_| rng.random_range(0..k)).collect()
    };
    // exp(beta * m) for m = 0..=4 neighbors
    let boost: Vec<f64> = (0..=4).map(|m| (beta * m as f64).exp()).collect();
    let mut counts = vec![0usize; k];
    let mut w = vec![0.0; k];
    for _ in 0..sweeps {
        for r in 0..height {
            for c in 0..width {
                counts.iter_mut().for_each(|v| *v = 0);
                if r > 0 {
                    counts[z[(r - 1) * width + c]] += 1;
                }
                if r + 1 < height {
                    counts[z[(r + 1) * width + c]] += 1;
                }
                if c > 0 {
                    counts[z[r * width + c - 1]] += 1;
                }
                if c + 1 < width {
                    counts[z[r * width + c + 1]] += 1;
                }
                let mut total = 0.0;
                for (wk, &m) in w.iter_mut().zip(&counts) {
                    *wk = boost[m];
                    total += *wk;
                }
                let mut u = rng.random::<f64>() * total;
                let mut pick = k - 1;
                for (label, wk) in w.iter().enumerate() {
                    if u < *wk {
                        pick = label;
                        break;
                    }
                    u -= wk;
                }
                z[r * width + c] = pick;
            }
        }
    }
    z
}

/// True expression levels.
#[derive(Debug, Clone, PartialEq)]
pub struct MuTruth {
    /// `k x p_gamma`: domain levels on the discriminating genes (the first
    /// `p_gamma` genes).
    pub mu_star: Vec<Vec<f64>>,
    /// Levels of every gene outside the discriminating set.
    pub mu0: Vec<f64>,
    pub gamma: Vec<bool>,
    /// Genes raised in domain 4 (domain 5 takes the rest); empty when k < 5.
    pub s4: Vec<usize>,
    /// Genes raised in domain 7; empty when k < 7.
    pub s7: Vec<usize>,
}

fn random_half<R: Rng + ?Sized>(p_gamma: usize, rng: &mut R) -> Vec<usize> {
    let mut v = sample(rng, p_gamma, p_gamma / 2).into_vec();
    v.sort_unstable();
    v
}

/// Domain 1 draws `Ga(2, 1)` on the discriminating genes; domains 2 and 3 add
/// 3 and 6; domain 4 adds 3 on a random half, domain 5 on the other half;
/// domain 6 adds 9 everywhere and domain 7 adds 9 on a fresh random half.
/// Every null level is `Ga(2, 1)`.
pub fn generate_mu<R: Rng + ?Sized>(k: usize, p: usize, p_gamma: usize, rng: &mut R) -> Result<MuTruth> {
    if ![3, 5, 7].contains(&k) {
        return Err(Error::InvalidArgument(format!("k must be 3, 5 or 7, got {k}")));
    }
    check_gene_counts(p, p_gamma)?;
    let ga = Gamma::new(2.0, 1.0).expect("valid gamma");
    let base: Vec<f64> = (0..p_gamma).map(|_| ga.sample(rng)).collect();
    let shifted = |add: f64, on: &dyn Fn(usize) -> bool| -> Vec<f64> {
        base.iter()
            .enumerate()
            .map(|(j, &b)| if on(j) { b + add } else { b })
            .collect()
    };
    let mut mu_star = vec![base.clone(), shifted(3.0, &|_| true), shifted(6.0, &|_| true)];
    let mut s4 = Vec::new();
    let mut s7 = Vec::new();
    if k >= 5 {
        s4 = random_half(p_gamma, rng);
        let in4 = |j: usize| s4.binary_search(&j).is_ok();
        mu_star.push(shifted(3.0, &in4));
        mu_star.push(shifted(3.0, &|j| !in4(j)));
    }
    if k >= 7 {
        mu_star.push(shifted(9.0, &|_| true));
        s7 = random_half(p_gamma, rng);
        let in7 = |j: usize| s7.binary_search(&j).is_ok();
        mu_star.push(shifted(9.0, &in7));
    }
    let mu0 = (0..p).map(|_| ga.sample(rng)).collect();
    let gamma = (0..p).map(|j| j < p_gamma).collect();
    Ok(MuTruth {
        mu_star,
        mu0,
        gamma,
        s4,
        s7,
    })
}

/// A simulated dataset with its generating truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub counts: CountMatrix,
    pub coords: Vec<[f64; 2]>,
    pub z_true: Vec<usize>,
    pub gamma_true: Vec<bool>,
    pub mu_star_true: Vec<Vec<f64>>,
    pub mu0_true: Vec<f64>,
    /// Drawn from `U(0.5, 1.5)` and therefore not normalized to unit product.
    pub s_true: Vec<f64>,
    /// Row-major extra-zero indicators.
    pub r_true: Vec<bool>,
}

/// Emits zero-inflated Poisson counts for the labels `z_true` (0-based domains).
pub fn generate_counts<R: Rng + ?Sized>(
    z_true: &[usize],
    coords: Vec<[f64; 2]>,
    mu: &MuTruth,
    pi: f64,
    rng: &mut R,
) -> Result<SimDataset> {
    let n = z_true.len();
    let p = mu.gamma.len();
    let p_gamma = mu.mu_star.first().map_or(0, Vec::len);
    if coords.len() != n {
        return Err(Error::Dimension(format!("{} coordinates for {n} spots", coords.len())));
    }
    if let Some(&k) = z_true.iter().find(|&&k| k >= mu.mu_star.len()) {
        return Err(Error::InvalidArgument(format!(
            "label {k} has no expression profile ({} domains)",
            mu.mu_star.len()
        )));
    }
    if !(0.0..=1.0).contains(&pi) {
        return Err(Error::InvalidArgument(format!("pi must lie in [0, 1], got {pi}")));
    }
    let s_true: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let mut values = vec![0u32; n * p];
    let mut r_true = vec![false; n * p];
    for i in 0..n {
        for j in 0..p {
            if rng.random::<f64>() < pi {
                r_true[i * p + j] = true;
                continue;
            }
            let m = if j < p_gamma {
                mu.mu_star[z_true[i]][j]
            } else {
                mu.mu0[j]
            };
            let y: f64 = Poisson::new(s_true[i] * m).expect("positive rate").sample(rng);
            values[i * p + j] = y as u32;
        }
    }
    let counts = CountMatrix::new(
        values,
        (1..=n).map(|i| format!("spot{i}")).collect(),
        (1..=p).map(|j| format!("gene{j}")).collect(),
    )?;
    Ok(SimDataset {
        counts,
        coords,
        z_true: z_true.to_vec(),
        gamma_true: mu.gamma.clone(),
        mu_star_true: mu.mu_star.clone(),
        mu0_true: mu.mu0.clone(),
        s_true,
        r_true,
    })
}

/// Full generation for a lattice scenario; a pure function of the scenario.
pub fn simulate(scenario: &SimScenario) -> Result<SimDataset> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let z = sample_potts(
        scenario.height,
        scenario.width,
        scenario.k,
        scenario.potts_beta,
        scenario.sweeps,
        &mut rng,
    );
    let mu = generate_mu(scenario.k, scenario.p, scenario.p_gamma, &mut rng)?;
    generate_counts(
        &z,
        square_lattice(scenario.height, scenario.width),
        &mu,
        scenario.pi,
        &mut rng,
    )
}

/// Generation over an externally supplied layout: `labels` are 0-based domains
/// and the number of domains must match one of the built-in schemes.
pub fn simulate_with_labels(
    labels: &[usize],
    coords: Vec<[f64; 2]>,
    scenario: &SimScenario,
) -> Result<SimDataset> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let sc = SimScenario { k, ..scenario.clone() };
    sc.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mu = generate_mu(k, sc.p, sc.p_gamma, &mut rng)?;
    generate_counts(labels, coords, &mu, sc.pi, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn potts_beta_zero_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let z = sample_potts(40, 40, 3, 0.0, 1, &mut rng);
        assert_eq!(z.len(), 1600);
        let mut c = [0f64; 3];
        for &k in &z {
            c[k] += 1.0;
        }
        let e = 1600.0 / 3.0;
        let chi2: f64 = c.iter().map(|o| (o - e) * (o - e) / e).sum();
        // 99th percentile of chi-square with 2 degrees of freedom
        assert!(chi2 < 9.2103, "chi2 = {chi2}");
    }

    #[test]
    fn potts_strong_coupling_orders() {
        let mut ordered = 0;
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z = sample_potts(20, 20, 3, 10.0, 500, &mut rng);
            let mut c = [0usize; 3];
            for &k in &z {
                c[k] += 1;
            }
            if *c.iter().max().unwrap() as f64 > 0.9 * 400.0 {
                ordered += 1;
            }
        }
        assert!(ordered >= 9, "{ordered}/10");
    }

    #[test]
    fn potts_default_coupling_keeps_all_labels() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z = sample_potts(20, 20, 3, 1.0, 500, &mut rng);
            for k in 0..3 {
                assert!(z.iter().filter(|&&x| x == k).count() >= 20, "seed {seed}");
            }
        }
    }

    #[test]
    fn mu_scheme_offsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = generate_mu(7, 50, 20, &mut rng).unwrap();
        assert_eq!(m.mu_star.len(), 7);
        for j in 0..20 {
            assert_eq!(m.mu_star[2][j], m.mu_star[0][j] + 6.0);
            assert!((m.mu_star[2][j] - m.mu_star[0][j] - 6.0).abs() < 1e-12);
            assert_eq!(m.mu_star[1][j], m.mu_star[0][j] + 3.0);
            assert_eq!(m.mu_star[5][j], m.mu_star[0][j] + 9.0);
        }
        assert_eq!(m.s4.len(), 10);
        let s5: Vec<usize> = (0..20).filter(|j| !m.s4.contains(j)).collect();
        assert_eq!(s5.len(), 10);
        for j in 0..20 {
            let in4 = m.s4.contains(&j);
            assert_eq!(m.mu_star[3][j] - m.mu_star[0][j] > 1.0, in4);
            assert_eq!(m.mu_star[4][j] - m.mu_star[0][j] > 1.0, !in4);
        }
        assert_eq!(m.gamma.iter().filter(|g| **g).count(), 20);
        assert!(m.gamma[..20].iter().all(|g| *g));
        assert_eq!(m.mu0.len(), 50);

        let mut levels: Vec<i64> = Vec::new();
        for row in &m.mu_star {
            for j in 0..20 {
                let d = ((row[j] - m.mu_star[0][j]) * 1e6).round() as i64;
                if !levels.contains(&d) {
                    levels.push(d);
                }
            }
        }
        levels.sort();
        assert_eq!(levels, vec![0, 3_000_000, 6_000_000, 9_000_000]);
    }

    #[test]
    fn mu_scheme_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(generate_mu(4, 50, 20, &mut rng).is_err());
        assert!(generate_mu(5, 50, 21, &mut rng).is_err());
        assert!(generate_mu(3, 10, 20, &mut rng).is_err());
        let sc = SimScenario {
            k: 4,
            ..Default::default()
        };
        let err = sc.validate().unwrap_err().to_string();
        assert!(err.contains("3, 5 or 7"));
    }

    #[test]
    fn all_extra_zeros() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = generate_mu(3, 8, 2, &mut rng).unwrap();
        let z = vec![0, 1, 2, 1];
        let d = generate_counts(&z, square_lattice(2, 2), &m, 1.0, &mut rng).unwrap();
        assert!(d.counts.values().iter().all(|&y| y == 0));
        assert!(d.r_true.iter().all(|r| *r));
    }

    #[test]
    fn poisson_means_without_zero_inflation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = generate_mu(3, 4, 2, &mut rng).unwrap();
        let n = 10_000;
        let z: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let coords = vec![[0.0, 0.0]; n];
        let d = generate_counts(&z, coords, &m, 0.0, &mut rng).unwrap();
        assert!(d.s_true.iter().all(|s| (0.5..=1.5).contains(s)));
        for k in 0..3 {
            for j in 0..4 {
                let idx: Vec<usize> = (0..n).filter(|&i| z[i] == k).collect();
                let ys: Vec<f64> = idx.iter().map(|&i| d.counts.get(i, j) as f64).collect();
                let sbar = idx.iter().map(|&i| d.s_true[i]).sum::<f64>() / idx.len() as f64;
                let mu = if j < 2 { m.mu_star[k][j] } else { m.mu0[j] };
                let mean = ys.iter().sum::<f64>() / ys.len() as f64;
                let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (ys.len() - 1) as f64;
                let se = (var / ys.len() as f64).sqrt();
                assert!((mean - sbar * mu).abs() < 3.0 * se, "k={k} j={j}: {mean} vs {}", sbar * mu);
            }
        }
    }

    #[test]
    fn zero_fraction_matches_plug_in() {
        let sc = SimScenario {
            height: 30,
            width: 30,
            p: 60,
            p_gamma: 10,
            pi: 0.2,
            sweeps: 20,
            seed: 9,
            ..Default::default()
        };
        let d = simulate(&sc).unwrap();
        let (n, p) = (d.counts.n(), d.counts.p());
        let mut expected = 0.0;
        for i in 0..n {
            for j in 0..p {
                let mu = if j < 10 { d.mu_star_true[d.z_true[i]][j] } else { d.mu0_true[j] };
                expected += sc.pi + (1.0 - sc.pi) * (-d.s_true[i] * mu).exp();
            }
        }
        let total = (n * p) as f64;
        expected /= total;
        let observed = d.counts.values().iter().filter(|&&y| y == 0).count() as f64 / total;
        let se = (expected * (1.0 - expected) / total).sqrt();
        assert!((observed - expected).abs() < 3.0 * se, "{observed} vs {expected}");
        for (e, &r) in d.r_true.iter().enumerate() {
            if r {
                assert_eq!(d.counts.values()[e], 0);
            }
        }
    }

    #[test]
    fn reproducible() {
        let sc = SimScenario {
            height: 10,
            width: 10,
            p: 30,
            sweeps: 10,
            ..Default::default()
        };
        assert_eq!(simulate(&sc).unwrap(), simulate(&sc).unwrap());
        let other = SimScenario { seed: 2, ..sc.clone() };
        assert_ne!(simulate(&sc).unwrap().counts, simulate(&other).unwrap().counts);
    }
}
