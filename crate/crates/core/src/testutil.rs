//! Brute-force helpers shared by unit tests.

/// All set partitions of `0..n` as restricted-growth label vectors.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn grow(prefix: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        let next = prefix.iter().max().map_or(0, |m| m + 1);
        for k in 0..=next {
            prefix.push(k);
            grow(prefix, n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    grow(&mut Vec::with_capacity(n), n, &mut out);
    out
}

#[test]
fn bell_numbers() {
    let sizes: Vec<usize> = (1..=6).map(|n| set_partitions(n).len()).collect();
    assert_eq!(sizes, vec![1, 2, 5, 15, 52, 203]);
}

/// `ln ∫_lo^hi exp(log_f(x)) dx` for a unimodal positive integrand, by
/// adaptive Simpson on `t = ln x`. The integrand is rescaled by its peak so
/// neither tail under- or overflows.
pub fn integrate_log_density<F: Fn(f64) -> f64>(log_f: F, lo: f64, hi: f64) -> f64 {
    let g_log = |t: f64| log_f(t.exp()) + t;
    let t_lo = if lo > 0.0 { lo.ln() } else { -60.0 };
    let t_hi = hi.ln();
    let grid = 4000;
    let mut peak = f64::NEG_INFINITY;
    let mut t_peak = t_lo;
    for k in 0..=grid {
        let t = t_lo + (t_hi - t_lo) * k as f64 / grid as f64;
        let v = g_log(t);
        if v > peak {
            peak = v;
            t_peak = t;
        }
    }
    // shrink to where the integrand is within e^-80 of its peak
    let step = (t_hi - t_lo) / grid as f64;
    let mut a = t_peak;
    while a > t_lo && g_log(a) - peak > -80.0 {
        a -= step;
    }
    let mut b = t_peak;
    while b < t_hi && g_log(b) - peak > -80.0 {
        b += step;
    }
    let (a, b) = (a.max(t_lo), b.min(t_hi));
    let g = |t: f64| (g_log(t) - peak).exp();

    fn simpson<G: Fn(f64) -> f64>(g: &G, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = g(lm);
        let frm = g(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        simpson(g, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + simpson(g, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }

    // split into panels so the first Simpson estimate is not fooled
    let panels = 64;
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let (x0, x1) = (a + h * k as f64, a + h * (k + 1) as f64);
        let (f0, f1, fm) = (g(x0), g(x1), g(0.5 * (x0 + x1)));
        let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
        total += simpson(&g, x0, x1, f0, fm, f1, whole, 1e-15, 40);
    }
    total.ln() + peak
}

#[test]
fn integrates_gamma_density() {
    // ∫ x e^{-x} dx over (0, inf) = 1
    let v = integrate_log_density(|x| x.ln() - x, 0.0, 200.0);
    assert!(v.abs() < 1e-12, "{v}");
}
