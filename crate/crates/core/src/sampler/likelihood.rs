use super::{Hyperparams, ModelData, ModelState};
use crate::error::{Error, Result};
use crate::math::ln_gamma;

/// Log marginal of a set of Poisson counts with a shared Gamma-distributed rate:
/// `log ∫ Π Poi(y | s mu) Ga(mu | alpha, beta) dmu`. Zero for an empty set.
pub fn gene_cluster_marginal_loglik(ys: &[u32], ss: &[f64], alpha: f64, beta: f64) -> Result<f64> {
    if ys.len() != ss.len() {
        return Err(Error::Dimension(format!(
            "{} counts but {} size factors",
            ys.len(),
            ss.len()
        )));
    }
    if let Some(s) = ss.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "size factors must be positive, got {s}"
        )));
    }
    if ys.is_empty() {
        return Ok(0.0);
    }
    let mut sum_y = 0.0;
    let mut sum_s = 0.0;
    let mut base = 0.0;
    for (&y, &s) in ys.iter().zip(ss) {
        sum_y += y as f64;
        sum_s += s;
        base += y as f64 * s.ln() - ln_gamma(y as f64 + 1.0);
    }
    Ok(base + marginal_from_sums(sum_y, sum_s, alpha, beta))
}

/// The part of the Gamma-Poisson marginal that depends on the data only
/// through `sum_y` and `sum_s`. The omitted `Σ[y ln s - ln y!]` term is shared
/// by every grouping of the same observations.
#[inline]
pub fn marginal_from_sums(sum_y: f64, sum_s: f64, alpha: f64, beta: f64) -> f64 {
    if sum_s == 0.0 {
        return 0.0;
    }
    alpha * beta.ln() - ln_gamma(alpha) + ln_gamma(alpha + sum_y) - (alpha + sum_y) * (beta + sum_s).ln()
}

/// Log prior of `gamma` with the inclusion probability integrated out
/// (beta-binomial).
pub fn gamma_log_prior(gamma: &[bool], hp: &Hyperparams) -> f64 {
    let p = gamma.len() as f64;
    let pg = gamma.iter().filter(|g| **g).count() as f64;
    let (a, b) = (hp.alpha_omega, hp.beta_omega);
    ln_gamma(a + pg) + ln_gamma(b + p - pg) - ln_gamma(a + b + p) - ln_gamma(a) - ln_gamma(b)
        + ln_gamma(a + b)
}

/// `log L(Y | R, mu, gamma, z)`: extra zeros contribute nothing, every other
/// entry a Poisson term at `s_i mu`.
pub fn data_log_likelihood(state: &ModelState, data: &ModelData) -> Result<f64> {
    let p = data.p();
    let mut total = 0.0;
    for i in 0..data.n() {
        let s = data.s(i);
        let ln_s = data.ln_s(i);
        let k = state.z[i];
        for j in 0..p {
            let y = data.y(i, j);
            if state.r[i * p + j] {
                if y > 0 {
                    return Err(Error::Invariant(format!(
                        "extra zero flagged at positive count ({i}, {j})"
                    )));
                }
                continue;
            }
            let (mu, ln_mu) = if state.gamma[j] {
                (state.mu_star[k * p + j], state.ln_mu_star[k * p + j])
            } else {
                (state.mu0[j], state.mu0[j].ln())
            };
            total -= s * mu;
            if y > 0 {
                total += y as f64 * (ln_s + ln_mu) - data.ln_fact(y);
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CountMatrix, SizeFactors};
    use crate::testutil::integrate_log_density;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quadrature(ys: &[u32], ss: &[f64], a: f64, b: f64) -> f64 {
        // integrand over mu, written out term by term
        let log_f = |mu: f64| {
            let mut v = a * b.ln() - ln_gamma(a) + (a - 1.0) * mu.ln() - b * mu;
            for (&y, &s) in ys.iter().zip(ss) {
                let rate = s * mu;
                v += y as f64 * rate.ln() - rate - ln_gamma(y as f64 + 1.0);
            }
            v
        };
        integrate_log_density(log_f, 0.0, 200.0)
    }

    #[test]
    fn empty_set_is_zero() {
        assert_eq!(gene_cluster_marginal_loglik(&[], &[], 1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn single_zero_at_unit_prior() {
        let v = gene_cluster_marginal_loglik(&[0], &[1.0], 1.0, 1.0).unwrap();
        assert!((v - 0.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn matches_quadrature_example() {
        let v = gene_cluster_marginal_loglik(&[3], &[0.7], 2.0, 1.0).unwrap();
        let q = quadrature(&[3], &[0.7], 2.0, 1.0);
        assert!(((v - q) / q).abs() < 1e-8, "{v} vs {q}");
    }

    #[test]
    fn matches_quadrature_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let m = rng.random_range(1..6);
            let ys: Vec<u32> = (0..m).map(|_| rng.random_range(0..12)).collect();
            let ss: Vec<f64> = (0..m).map(|_| rng.random_range(0.3..2.0)).collect();
            let a = rng.random_range(0.5..4.0);
            let b = rng.random_range(0.5..4.0);
            let v = gene_cluster_marginal_loglik(&ys, &ss, a, b).unwrap();
            let q = quadrature(&ys, &ss, a, b);
            assert!(((v - q) / q).abs() < 1e-8, "{ys:?} {ss:?}: {v} vs {q}");
        }
    }

    #[test]
    fn rejects_bad_size_factor() {
        assert!(gene_cluster_marginal_loglik(&[1], &[0.0], 1.0, 1.0).is_err());
        assert!(gene_cluster_marginal_loglik(&[1, 2], &[1.0], 1.0, 1.0).is_err());
    }

    proptest! {
        // Appending an observation multiplies the marginal by the negative
        // binomial posterior predictive of that observation.
        #[test]
        fn predictive_identity(
            ys in prop::collection::vec(0u32..20, 0..6),
            ss in prop::collection::vec(0.2f64..3.0, 6),
            y_new in 0u32..20,
            s_new in 0.2f64..3.0,
            a in 0.3f64..5.0,
            b in 0.3f64..5.0,
        ) {
            let ss = &ss[..ys.len()];
            let before = gene_cluster_marginal_loglik(&ys, ss, a, b).unwrap();
            let mut ys2 = ys.clone();
            ys2.push(y_new);
            let mut ss2 = ss.to_vec();
            ss2.push(s_new);
            let after = gene_cluster_marginal_loglik(&ys2, &ss2, a, b).unwrap();
            let ap = a + ys.iter().map(|&y| y as f64).sum::<f64>();
            let bp = b + ss.iter().sum::<f64>();
            let y = y_new as f64;
            let pred = ln_gamma(ap + y) - ln_gamma(ap) - ln_gamma(y + 1.0)
                + ap * (bp / (bp + s_new)).ln()
                + y * (s_new / (bp + s_new)).ln();
            prop_assert!((after - before - pred).abs() < 1e-10);
        }
    }

    #[test]
    fn gamma_prior_normalizes() {
        let hp = Hyperparams::default();
        let p = 6;
        let total: f64 = (0..1u32 << p)
            .map(|mask| {
                let g: Vec<bool> = (0..p).map(|j| mask >> j & 1 == 1).collect();
                gamma_log_prior(&g, &hp).exp()
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn loglik_hand_values() {
        let c = CountMatrix::from_rows(&[vec![2], vec![0]]).unwrap();
        let s = SizeFactors::from_values(vec![1.0, 1.0]).unwrap();
        let d = ModelData::new(c, s).unwrap();
        let st = ModelState::from_parts(
            &d,
            vec![0, 0],
            vec![true],
            vec![false, true],
            vec![1.0],
            vec![3.0],
            vec![0.5, 0.5],
        )
        .unwrap();
        let v = data_log_likelihood(&st, &d).unwrap();
        assert!((v - (-1.0 - 2f64.ln())).abs() < 1e-14);

        let c = CountMatrix::from_rows(&[vec![0, 0], vec![0, 0]]).unwrap();
        let d = ModelData::new(c, SizeFactors::from_values(vec![1.0, 1.0]).unwrap()).unwrap();
        let st = ModelState::from_parts(
            &d,
            vec![0, 1],
            vec![true, false],
            vec![true; 4],
            vec![1.0; 4],
            vec![2.0; 2],
            vec![0.5, 0.5],
        )
        .unwrap();
        assert_eq!(data_log_likelihood(&st, &d).unwrap(), 0.0);
    }

    #[test]
    fn loglik_matches_naive_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, p) = (5, 4);
        let rows: Vec<Vec<u32>> = (0..n)
            .map(|_| (0..p).map(|_| rng.random_range(0..5)).collect())
            .collect();
        let c = CountMatrix::from_rows(&rows).unwrap();
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
        let d = ModelData::new(c, SizeFactors::from_values(s.clone()).unwrap()).unwrap();
        let z = vec![0, 1, 0, 2, 1];
        let gamma = vec![true, false, true, false];
        let r: Vec<bool> = (0..n * p)
            .map(|e| rows[e / p][e % p] == 0 && rng.random::<bool>())
            .collect();
        let mu_star: Vec<f64> = (0..3 * p).map(|_| rng.random_range(0.1..5.0)).collect();
        let mu0: Vec<f64> = (0..p).map(|_| rng.random_range(0.1..5.0)).collect();
        let st = ModelState::from_parts(
            &d,
            z.clone(),
            gamma.clone(),
            r.clone(),
            mu_star.clone(),
            mu0.clone(),
            vec![0.3; n],
        )
        .unwrap();

        let mut naive = 0.0;
        for i in 0..n {
            for j in 0..p {
                if r[i * p + j] {
                    continue;
                }
                let mu = if gamma[j] { mu_star[z[i] * p + j] } else { mu0[j] };
                let lam = s[i] * mu;
                let y = rows[i][j];
                let fact: f64 = (1..=y).map(|v| v as f64).product();
                naive += (lam.powi(y as i32) * (-lam).exp() / fact).ln();
            }
        }
        let v = data_log_likelihood(&st, &d).unwrap();
        assert!((v - naive).abs() < 1e-10);
    }
}
