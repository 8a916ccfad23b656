//! Scalar birth-death chain with birth rates `a + b k` and death rates
//! `k + beta k (k - 1)`.
//!
//! Everything here is deterministic numerics: the stationary law, mean
//! hitting times, the expected number of initial particles that die before
//! the population moves by one, and the Stein-factor bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on the support length of a computed stationary law.
pub const MAX_SUPPORT: usize = 1_000_000;

/// Hard cap on the backward recursion horizon used to bracket `E K_m^-`.
pub const MAX_HORIZON: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BirthDeathParams {
    a: f64,
    b: f64,
    beta: f64,
}

impl BirthDeathParams {
    pub fn new(a: f64, b: f64, beta: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidParameter(format!("a must be positive, got {a}")));
        }
        if !(b.is_finite() && (0.0..1.0).contains(&b)) {
            return Err(Error::InvalidParameter(format!("b must lie in [0, 1), got {b}")));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be nonnegative, got {beta}")));
        }
        Ok(Self { a, b, beta })
    }

    /// Poisson process parameters (`b = beta = 0`).
    pub fn poisson(a: f64) -> Result<Self> {
        Self::new(a, 0.0, 0.0)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    #[inline]
    pub fn birth_rate(&self, k: usize) -> f64 {
        self.a + self.b * k as f64
    }

    #[inline]
    pub fn death_rate(&self, k: usize) -> f64 {
        let k = k as f64;
        k + self.beta * k * (k - 1.0).max(0.0)
    }

    /// `(birth, death)` rates in state `k`.
    pub fn rates(&self, k: usize) -> (f64, f64) {
        (self.birth_rate(k), self.death_rate(k))
    }
}

/// Truncated stationary law over `0..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountDistribution {
    probs: Vec<f64>,
    tail_bound: f64,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

impl CountDistribution {
    /// Build from explicit probabilities; they are renormalized to sum to one.
    pub fn from_probs(probs: Vec<f64>, tail_bound: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidParameter("empty probability vector".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidParameter("probabilities must be finite and >= 0".into()));
        }
        let total = crate::stats::compensated_sum(probs.iter().copied());
        if total <= 0.0 {
            return Err(Error::InvalidParameter("probabilities sum to zero".into()));
        }
        let probs: Vec<f64> = probs.iter().map(|p| p / total).collect();
        Ok(Self::assemble(probs, tail_bound.max(0.0)))
    }

    pub fn point_mass(k: usize) -> Self {
        let mut probs = vec![0.0; k + 1];
        probs[k] = 1.0;
        Self::assemble(probs, 0.0)
    }

    fn assemble(probs: Vec<f64>, tail_bound: f64) -> Self {
        let mut cumulative = Vec::with_capacity(probs.len());
        let mut acc = crate::stats::KahanSum::new();
        for p in &probs {
            acc.add(*p);
            cumulative.push(acc.value());
        }
        Self {
            probs,
            tail_bound,
            cumulative,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Upper bound on the true mass beyond the last stored state.
    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// Largest stored state.
    pub fn max_state(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn pmf(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    /// `F(k) = sum_{i <= k} pi_i`.
    pub fn cdf(&self, k: usize) -> f64 {
        if self.cumulative.is_empty() {
            return (0..=k.min(self.max_state())).map(|i| self.probs[i]).sum();
        }
        self.cumulative[k.min(self.max_state())]
    }

    /// `Fbar(k) = sum_{i >= k} pi_i` over the stored support.
    pub fn survival(&self, k: usize) -> f64 {
        if k > self.max_state() {
            return 0.0;
        }
        crate::stats::compensated_sum(self.probs[k..].iter().copied())
    }

    pub fn mean(&self) -> f64 {
        crate::stats::compensated_sum(self.probs.iter().enumerate().map(|(k, p)| k as f64 * p))
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        crate::stats::compensated_sum(
            self.probs
                .iter()
                .enumerate()
                .map(|(k, p)| (k as f64 - m).powi(2) * p),
        )
    }

    /// Inverse-CDF lookup for a uniform `u` in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> usize {
        let idx = if self.cumulative.is_empty() {
            let mut acc = 0.0;
            self.probs
                .iter()
                .position(|p| {
                    acc += p;
                    u < acc
                })
                .unwrap_or(self.max_state())
        } else {
            self.cumulative.partition_point(|c| *c <= u)
        };
        let idx = idx.min(self.max_state());
        // skip zero-probability states that can be hit through rounding
        if self.probs[idx] > 0.0 {
            idx
        } else {
            (0..=idx).rev().find(|&i| self.probs[i] > 0.0).unwrap_or(idx)
        }
    }
}

/// Stationary law of the chain, truncated once the remaining tail is below
/// `tol` relative to the accumulated mass.
///
/// Weights follow `w_{k+1} = w_k * alpha_k / beta_{k+1}`. For `j >= K` the
/// ratio is at most `(b + max(a - b, 0) / (K + 1)) / (1 + beta K)`, which
/// gives a geometric bound on everything past `K`.
pub fn stationary(params: &BirthDeathParams, tol: f64) -> Result<CountDistribution> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidParameter(format!("tol must lie in (0, 1), got {tol}")));
    }
    const RESCALE_AT: f64 = 1e200;
    let mut weights = vec![1.0_f64];
    let mut mass = crate::stats::KahanSum::new();
    mass.add(1.0);
    let (a, b, beta) = (params.a, params.b, params.beta);
    loop {
        let k = weights.len() - 1;
        let w_k = weights[k];
        let kf = k as f64;
        let ratio_bound = (b + (a - b).max(0.0) / (kf + 1.0)) / (1.0 + beta * kf);
        if ratio_bound < 1.0 {
            let tail = w_k * ratio_bound / (1.0 - ratio_bound);
            let m = mass.value();
            if tail < tol * m {
                let probs: Vec<f64> = weights.iter().map(|w| w / m).collect();
                return Ok(CountDistribution::assemble(probs, tail / m));
            }
        }
        if weights.len() >= MAX_SUPPORT {
            return Err(Error::TruncationFailure { cap: MAX_SUPPORT });
        }
        let next = w_k * params.birth_rate(k) / params.death_rate(k + 1);
        weights.push(next);
        mass.add(next);
        if next > RESCALE_AT {
            let s = 1.0 / RESCALE_AT;
            for w in weights.iter_mut() {
                *w *= s;
            }
            let m = mass.value() * s;
            mass = crate::stats::KahanSum::new();
            mass.add(m);
        }
    }
}

/// Half-L1 distance plus half of both tail bounds (an upper estimate of the
/// total variation between the untruncated laws).
pub fn tv_distance(p: &CountDistribution, q: &CountDistribution) -> f64 {
    if p == q {
        return 0.0;
    }
    let len = p.probs.len().max(q.probs.len());
    let l1 = crate::stats::compensated_sum((0..len).map(|k| (p.pmf(k) - q.pmf(k)).abs()));
    (0.5 * l1 + 0.5 * (p.tail_bound + q.tail_bound)).min(1.0)
}

const MIN_PMF: f64 = 1e-300;

/// Mean time for the chain started at `k` to first reach `k + 1`:
/// `F(k) / (alpha_k pi_k)`.
pub fn hitting_up(params: &BirthDeathParams, dist: &CountDistribution, k: usize) -> Result<f64> {
    let pk = dist.pmf(k);
    if k > dist.max_state() || pk < MIN_PMF {
        return Err(Error::OutOfSupport { k });
    }
    Ok(dist.cdf(k) / (params.birth_rate(k) * pk))
}

/// Mean time for the chain started at `k >= 1` to first reach `k - 1`:
/// `Fbar(k) / (beta_k pi_k)`, with the truncation tail added to `Fbar`.
pub fn hitting_down(params: &BirthDeathParams, dist: &CountDistribution, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("hitting_down requires k >= 1".into()));
    }
    let pk = dist.pmf(k);
    if k > dist.max_state() || pk < MIN_PMF {
        return Err(Error::OutOfSupport { k });
    }
    Ok((dist.survival(k) + dist.tail_bound) / (params.death_rate(k) * pk))
}

/// `E K_m^+`: expected number of the `m` initial particles that die before
/// the population first reaches `m + 1`.
pub fn k_plus(params: &BirthDeathParams, m: usize) -> f64 {
    k_plus_sequence(params, m)[m]
}

/// `E K_0^+, ..., E K_m^+` from the forward recursion.
pub fn k_plus_sequence(params: &BirthDeathParams, m: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(m + 1);
    out.push(0.0);
    for j in 1..=m {
        let (alpha, beta) = params.rates(j);
        let jf = j as f64;
        let prev = 1.0 + out[j - 1];
        out.push(jf * beta * prev / (jf * alpha + beta * prev));
    }
    out
}

/// Interval guaranteed to contain `E K_m^-`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMinusBracket {
    pub low: f64,
    pub high: f64,
    pub horizon: usize,
}

impl KMinusBracket {
    pub fn width(&self) -> f64 {
        self.high - self.low
    }

    pub fn contains(&self, x: f64, slack: f64) -> bool {
        x >= self.low - slack && x <= self.high + slack
    }
}

fn k_minus_step(params: &BirthDeathParams, j: usize, next: f64) -> f64 {
    let (alpha, beta) = params.rates(j);
    let jf = j as f64;
    1.0 + (jf - 1.0) * alpha * next / (alpha * next + (jf + 1.0) * beta)
}

/// Bracket `E K_m^-` by running the backward recursion from the extreme
/// seeds `E K_M^- = 1` and `E K_M^- = M`. The recursion is increasing in its
/// seed, so the true value lies between the two results.
pub fn k_minus(params: &BirthDeathParams, m: usize, horizon: usize) -> Result<KMinusBracket> {
    if m == 0 {
        return Err(Error::InvalidParameter("k_minus requires m >= 1".into()));
    }
    if horizon <= m {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} must exceed m = {m}"
        )));
    }
    let mut low = 1.0;
    let mut high = horizon as f64;
    for j in (m..horizon).rev() {
        low = k_minus_step(params, j, low);
        high = k_minus_step(params, j, high);
    }
    Ok(KMinusBracket { low, high, horizon })
}

/// Double the horizon until the bracket is narrower than `tol`.
pub fn k_minus_converged(params: &BirthDeathParams, m: usize, tol: f64) -> Result<KMinusBracket> {
    let mut horizon = (2 * m).max(m + 16);
    loop {
        let br = k_minus(params, m, horizon)?;
        if br.width() <= tol {
            return Ok(br);
        }
        if horizon >= MAX_HORIZON {
            return Err(Error::BracketTooWide { m, tol, cap: MAX_HORIZON });
        }
        horizon = (horizon * 2).min(MAX_HORIZON);
    }
}

/// Bound on `C_n = sup |h_f(xi + delta_x) - h_f(xi + delta_y)|` over `|xi| = n`.
pub fn stein_c_bound(params: &BirthDeathParams, n: usize) -> f64 {
    let n1 = n as f64 + 1.0;
    let second = 1.0 / (2.0 * n1) + 1.0 / params.a;
    let ab = params.a.min(params.b);
    let third = if ab > 0.0 { 1.0 / (ab * n1) } else { f64::INFINITY };
    1.0_f64.min(second).min(third)
}

/// Bound on the second difference `Delta_2 h_f(xi)` for `|xi| = n`.
pub fn stein_d2_bound(params: &BirthDeathParams, n: usize) -> f64 {
    2.0 / (n as f64 + 1.0) + 5.0 / params.a
}

/// Which of the two death-count inequalities was checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KBoundBranch {
    /// `alpha_m > beta_m`: `1 + E K_m^+ <= alpha_m / (alpha_m - beta_m)`.
    Plus,
    /// `beta_m > alpha_m`: `E K_m^- <= beta_m / (beta_m - alpha_m)`.
    Minus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KBoundViolation {
    pub m: usize,
    pub branch: KBoundBranch,
    pub observed: f64,
    pub bound: f64,
}

/// Outcome of checking the death-count inequalities for `m <= m_max`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KBoundReport {
    pub checked: usize,
    pub skipped: Vec<usize>,
    pub violations: Vec<KBoundViolation>,
}

impl KBoundReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check `1 + E K_m^+ <= alpha_m/(alpha_m - beta_m)` where `alpha_m > beta_m`
/// and `E K_m^- <= beta_m/(beta_m - alpha_m)` where `beta_m > alpha_m`.
/// States with `alpha_m == beta_m` are skipped. The `K^-` side uses the upper
/// end of a converged bracket.
pub fn k_bounds_check(params: &BirthDeathParams, m_max: usize) -> Result<KBoundReport> {
    const SLACK: f64 = 1e-9;
    let plus = k_plus_sequence(params, m_max);
    let mut report = KBoundReport::default();
    for (m, &kp) in plus.iter().enumerate() {
        let (alpha, beta) = params.rates(m);
        if alpha > beta {
            let bound = alpha / (alpha - beta);
            let observed = 1.0 + kp;
            report.checked += 1;
            if observed > bound * (1.0 + SLACK) {
                report.violations.push(KBoundViolation {
                    m,
                    branch: KBoundBranch::Plus,
                    observed,
                    bound,
                });
            }
        } else if beta > alpha {
            let bound = beta / (beta - alpha);
            let br = k_minus_converged(params, m, 1e-10)?;
            report.checked += 1;
            if br.high > bound * (1.0 + SLACK) {
                report.violations.push(KBoundViolation {
                    m,
                    branch: KBoundBranch::Minus,
                    observed: br.high,
                    bound,
                });
            }
        } else {
            report.skipped.push(m);
        }
    }
    Ok(report)
}

/// Largest relative residual of `pi_k alpha_k = pi_{k+1} beta_{k+1}` over
/// the stored support.
pub fn detailed_balance_residual(params: &BirthDeathParams, dist: &CountDistribution) -> f64 {
    (0..dist.max_state())
        .map(|k| {
            let lhs = dist.probs[k] * params.birth_rate(k);
            let rhs = dist.probs[k + 1] * params.death_rate(k + 1);
            let scale = lhs.abs().max(rhs.abs());
            if scale == 0.0 {
                0.0
            } else {
                (lhs - rhs).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

/// States `k >= 1` of the stored support where
/// `F(k)/F(k-1) >= alpha_k/beta_k >= Fbar(k+1)/Fbar(k)` fails by more than
/// `tol` in relative terms.
pub fn ratio_chain_violations(params: &BirthDeathParams, dist: &CountDistribution, tol: f64) -> Vec<usize> {
    let mut cdf = Vec::with_capacity(dist.probs.len());
    let mut acc = crate::stats::KahanSum::new();
    for &p in &dist.probs {
        acc.add(p);
        cdf.push(acc.value());
    }
    let mut sf = vec![0.0; dist.probs.len() + 1];
    let mut acc = crate::stats::KahanSum::new();
    for k in (0..dist.probs.len()).rev() {
        acc.add(dist.probs[k]);
        sf[k] = acc.value();
    }
    (1..=dist.max_state())
        .filter(|&k| {
            let (alpha, beta) = params.rates(k);
            let first = cdf[k] * beta >= alpha * cdf[k - 1] * (1.0 - tol);
            let second = alpha * sf[k] >= beta * sf[k + 1] * (1.0 - tol);
            !(first && second)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(a: f64, b: f64, beta: f64) -> BirthDeathParams {
        BirthDeathParams::new(a, b, beta).unwrap()
    }

    #[test]
    fn rates_examples() {
        assert_eq!(p(2.0, 0.0, 0.0).rates(3), (2.0, 3.0));
        assert_eq!(p(1.0, 0.5, 0.1).rates(0), (1.0, 0.0));
        let (bi, de) = p(1.0, 0.5, 0.1).rates(4);
        assert_eq!(bi, 3.0);
        assert!((de - 5.2).abs() < 1e-15);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(BirthDeathParams::new(0.0, 0.0, 0.0).is_err());
        assert!(BirthDeathParams::new(4.0, 2.0, 0.0).is_err());
        assert!(BirthDeathParams::new(1.0, 1.0, 0.0).is_err());
        assert!(BirthDeathParams::new(1.0, 0.0, -0.1).is_err());
        assert!(BirthDeathParams::new(f64::NAN, 0.0, 0.0).is_err());
    }

    #[test]
    fn poisson_and_negative_binomial_first_terms() {
        let d = stationary(&p(2.0, 0.0, 0.0), 1e-15).unwrap();
        assert!((d.pmf(0) - 0.1353352832366127).abs() < 1e-14);
        let nb = stationary(&p(1.0, 0.5, 0.0), 1e-15).unwrap();
        assert!((nb.pmf(0) - 0.25).abs() < 1e-14);
        assert!(d.tail_bound() <= 1e-15);
    }

    #[test]
    fn stationary_rejects_bad_tol() {
        assert!(stationary(&p(1.0, 0.0, 0.0), 0.0).is_err());
        assert!(stationary(&p(1.0, 0.0, 0.0), 1.0).is_err());
    }

    #[test]
    fn stationary_handles_large_means() {
        // weights overflow without rescaling
        let d = stationary(&p(900.0, 0.0, 0.0), 1e-12).unwrap();
        assert!((d.mean() - 900.0).abs() < 1e-6);
        let nb = stationary(&p(1.0, 0.95, 0.0), 1e-12).unwrap();
        assert!((nb.mean() - 20.0).abs() < 1e-6);
    }

    #[test]
    fn tv_examples() {
        let d = stationary(&p(2.0, 0.0, 0.0), 1e-14).unwrap();
        assert!(tv_distance(&d, &d) < 1e-13);
        let tv = tv_distance(&CountDistribution::point_mass(0), &CountDistribution::point_mass(1));
        assert_eq!(tv, 1.0);
    }

    #[test]
    fn hitting_up_at_zero() {
        let params = p(2.0, 0.0, 0.0);
        let d = stationary(&params, 1e-14).unwrap();
        assert!((hitting_up(&params, &d, 0).unwrap() - 0.5).abs() < 1e-15);
        assert!(hitting_up(&params, &d, 10_000).is_err());
        assert!(hitting_down(&params, &d, 0).is_err());
    }

    #[test]
    fn hitting_identity() {
        // pi_k alpha_k E tau_k^+ = F(k)
        let params = p(1.3, 0.2, 0.05);
        let d = stationary(&params, 1e-14).unwrap();
        for k in 0..15 {
            let t = hitting_up(&params, &d, k).unwrap();
            assert!((t * params.birth_rate(k) * d.pmf(k) - d.cdf(k)).abs() < 1e-14);
        }
    }

    #[test]
    fn k_plus_examples() {
        assert_eq!(k_plus(&p(2.0, 0.0, 0.0), 0), 0.0);
        assert!((k_plus(&p(2.0, 0.0, 0.0), 1) - 1.0 / 3.0).abs() < 1e-15);
        let params = p(1.0, 0.5, 0.2);
        for (m, v) in k_plus_sequence(&params, 60).into_iter().enumerate() {
            assert!(v >= 0.0 && v <= m as f64);
        }
    }

    #[test]
    fn k_minus_bracket_is_ordered_and_shrinks() {
        let params = p(2.0, 0.0, 0.3);
        let mut last_width = f64::INFINITY;
        for horizon in [5, 10, 20, 40] {
            let br = k_minus(&params, 3, horizon).unwrap();
            assert!(br.low <= br.high);
            assert!(br.low >= 1.0);
            assert!(br.high <= 3.0 + 1e-12);
            assert!(br.width() <= last_width + 1e-15);
            last_width = br.width();
        }
        assert!(k_minus(&params, 3, 3).is_err());
        assert!(k_minus(&params, 0, 3).is_err());
        assert_eq!(k_minus(&params, 1, 9).unwrap().low, 1.0);
    }

    #[test]
    fn stein_bounds_examples() {
        assert!((stein_c_bound(&p(10.0, 0.0, 0.0), 9) - 0.15).abs() < 1e-15);
        assert_eq!(stein_c_bound(&p(0.1, 0.0, 0.0), 0), 1.0);
        assert!((stein_d2_bound(&p(5.0, 0.0, 0.0), 0) - 3.0).abs() < 1e-15);
        assert!((stein_d2_bound(&p(10.0, 0.0, 0.0), 9) - 0.7).abs() < 1e-15);
        // third branch active when a and b are both large enough
        let c = stein_c_bound(&p(20.0, 0.9, 0.0), 40);
        assert!((c - 1.0 / (0.9 * 41.0)).abs() < 1e-15);
    }

    #[test]
    fn k_bounds_examples() {
        assert!(k_bounds_check(&p(5.0, 0.5, 0.0), 50).unwrap().passed());
        assert!(k_bounds_check(&p(0.5, 0.0, 1.0), 50).unwrap().passed());
        // alpha_2 = 2 = beta_2 for (a = 2, b = 0, beta = 0)
        let r = k_bounds_check(&p(2.0, 0.0, 0.0), 5).unwrap();
        assert_eq!(r.skipped, vec![2]);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let d = CountDistribution::from_probs(vec![0.2, 0.0, 0.5, 0.3], 0.0).unwrap();
        assert_eq!(d.quantile(0.0), 0);
        assert_eq!(d.quantile(0.19), 0);
        assert_eq!(d.quantile(0.2), 2);
        assert_eq!(d.quantile(0.69), 2);
        assert_eq!(d.quantile(0.71), 3);
        assert_eq!(d.quantile(0.999_999), 3);
    }
}
