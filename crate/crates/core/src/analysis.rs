//! Closed-form outage chain and diversity-order estimation.
//!
//! The frame outage is a sum over the number `m` of relays that decoded all
//! source packets: Pout = Σ_m Pout,m · P_m, with P_m binomial in the
//! per-relay success probability and Pout,m the MDS erasure probability of
//! `P` direct and `m` coded packets.
//!
//! All tails are summed term by term (never as `1 − CDF`) so curves stay
//! accurate far below 1e-16.

use crate::channel::{block_outage_prob, Mode, NetworkConfig};
use crate::error::{Error, Result};

/// One point of an outage curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutagePoint {
    /// Linear SNR.
    pub snr: f64,
    pub outage: f64,
    pub stderr: f64,
    /// Monte Carlo trial count; 0 for analytic points.
    pub trials: u64,
}

impl OutagePoint {
    pub fn analytic(snr: f64, outage: f64) -> Self {
        Self {
            snr,
            outage,
            stderr: 0.0,
            trials: 0,
        }
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * self.snr.log10()
    }
}

/// Which engine produced a curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Engine {
    Analytic,
    MonteCarlo,
}

impl Engine {
    pub fn as_str(&self) -> &'static str {
        match self {
            Engine::Analytic => "analytic",
            Engine::MonteCarlo => "montecarlo",
        }
    }
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "analytic" => Ok(Engine::Analytic),
            "montecarlo" | "mc" => Ok(Engine::MonteCarlo),
            other => Err(Error::config("engine", format!("unknown engine `{other}`"))),
        }
    }
}

/// Ordered outage points with strictly increasing SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct OutageCurve {
    points: Vec<OutagePoint>,
    pub mode: Mode,
    pub engine: Engine,
    pub config: Option<NetworkConfig>,
}

impl OutageCurve {
    pub fn new(points: Vec<OutagePoint>, mode: Mode, engine: Engine) -> Result<Self> {
        if points.windows(2).any(|w| !(w[0].snr < w[1].snr)) {
            return Err(Error::usage("curve SNR values must be strictly increasing"));
        }
        if let Some(p) = points
            .iter()
            .find(|p| !(0.0..=1.0).contains(&p.outage) || !(p.stderr >= 0.0))
        {
            return Err(Error::usage(format!(
                "outage {} / stderr {} out of range at snr {}",
                p.outage, p.stderr, p.snr
            )));
        }
        Ok(Self {
            points,
            mode,
            engine,
            config: None,
        })
    }

    pub fn with_config(mut self, config: NetworkConfig) -> Self {
        self.config = Some(config);
        self
    }

    pub fn points(&self) -> &[OutagePoint] {
        &self.points
    }

    pub fn outage_at(&self, snr: f64) -> Option<f64> {
        self.points.iter().find(|p| p.snr == snr).map(|p| p.outage)
    }
}

/// Per-block outage probabilities of the three link classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticParams {
    /// source→destination
    pub p1: f64,
    /// source→relay
    pub p_sr: f64,
    /// relay→destination
    pub p2: f64,
    pub sources: usize,
    pub relays: usize,
    pub blocks: usize,
}

impl AnalyticParams {
    pub fn new(
        p1: f64,
        p_sr: f64,
        p2: f64,
        sources: usize,
        relays: usize,
        blocks: usize,
    ) -> Result<Self> {
        for (name, p) in [("p1", p1), ("p_sr", p_sr), ("p2", p2)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::usage(format!("{name} = {p} is not a probability")));
            }
        }
        if sources == 0 || blocks == 0 {
            return Err(Error::usage("need at least one source and one block"));
        }
        Ok(Self {
            p1,
            p_sr,
            p2,
            sources,
            relays,
            blocks,
        })
    }

    /// All three link classes share the Rayleigh block outage at `snr`.
    pub fn from_config(config: &NetworkConfig, snr: f64) -> Self {
        let p = block_outage_prob(snr, config.rate_r());
        Self {
            p1: p,
            p_sr: p,
            p2: p,
            sources: config.sources(),
            relays: config.relays(),
            blocks: config.grid().blocks(),
        }
    }
}

/// Frame outage at the allocating destination: `p_sub^L`.
pub fn dest_frame_outage(p_sub: f64, blocks: usize) -> f64 {
    p_sub.powi(blocks as i32)
}

/// Probability that a relay decodes all `P` packets: `(1 − p_sr)^P`.
pub fn relay_success_all(p_sr: f64, sources: usize) -> f64 {
    (1.0 - p_sr).powi(sources as i32)
}

// 1 − (1 − p)^n without cancellation.
fn any_failure(p: f64, n: usize) -> f64 {
    -((n as f64) * (-p).ln_1p()).exp_m1()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

// pmf with both the success and failure probabilities supplied, so that a
// complement computed accurately by the caller is not rounded away.
fn binomial_pmf(n: usize, k: usize, p: f64, q: f64) -> f64 {
    binomial(n, k) * p.powi(k as i32) * q.powi((n - k) as i32)
}

/// P_m for m = 0..=M: Binomial(M, P_R).
pub fn relay_count_distribution(p_r: f64, relays: usize) -> Vec<f64> {
    relay_count_distribution_with(p_r, 1.0 - p_r, relays)
}

fn relay_count_distribution_with(p_r: f64, q_r: f64, relays: usize) -> Vec<f64> {
    (0..=relays)
        .map(|m| binomial_pmf(relays, m, p_r, q_r))
        .collect()
}

/// Probability that more than `m` of `P` direct packets (failure
/// probability `eps_sd`) and `m` coded packets (`eps_rd`) fail.
pub fn conditional_outage(eps_sd: f64, eps_rd: f64, sources: usize, m: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..=sources {
        let pi = binomial_pmf(sources, i, eps_sd, 1.0 - eps_sd);
        // j > m - i coded failures
        let j_min = (m + 1).saturating_sub(i);
        if j_min > m {
            continue;
        }
        let tail: f64 = (j_min..=m)
            .map(|j| binomial_pmf(m, j, eps_rd, 1.0 - eps_rd))
            .sum();
        total += pi * tail;
    }
    total.min(1.0)
}

/// Overall frame outage Σ_m Pout,m · P_m.
///
/// Realistic: P_R = (1 − p_sr)^P. Optimistic: P_R = (1 − p_sr^L)^P, as if
/// each relay enjoyed the destination's frequency diversity.
pub fn overall_outage(params: &AnalyticParams, mode: Mode) -> f64 {
    let l = params.blocks;
    let eps_sd = dest_frame_outage(params.p1, l);
    let eps_rd = dest_frame_outage(params.p2, l);
    let per_source = match mode {
        Mode::Realistic => params.p_sr,
        Mode::Optimistic => dest_frame_outage(params.p_sr, l),
    };
    let q_r = any_failure(per_source, params.sources);
    let p_r = 1.0 - q_r;
    relay_count_distribution_with(p_r, q_r, params.relays)
        .iter()
        .enumerate()
        .map(|(m, pm)| pm * conditional_outage(eps_sd, eps_rd, params.sources, m))
        .sum::<f64>()
        .min(1.0)
}

/// Leading term `coefficient · p^exponent` of the high-SNR expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadingTerm {
    /// Coefficient reported for P = M: (M − 1)^M.
    pub coefficient: f64,
    /// Diversity order M + L.
    pub exponent: usize,
}

/// High-SNR leading term for the P = M case.
pub fn asymptotic_leading_term(
    sources: usize,
    relays: usize,
    blocks: usize,
) -> Result<LeadingTerm> {
    if sources != relays {
        return Err(Error::Unsupported(format!(
            "the leading-term expansion is only available for P = M (got P = {sources}, M = {relays})"
        )));
    }
    Ok(LeadingTerm {
        coefficient: ((relays as f64) - 1.0).powi(relays as i32),
        exponent: relays + blocks,
    })
}

/// Leading coefficient of this crate's realistic model, i.e. the limit of
/// Pout / p^(M+L) as p → 0 with all link classes at block outage `p`.
///
/// Each `m` contributes C(M,m)·P^(M−m)·C(P+m, m+1)·p^(M+L+m(L−1)), so only
/// `m = 0` survives for L > 1.
pub fn model_leading_coefficient(sources: usize, relays: usize, blocks: usize) -> f64 {
    let p = sources as f64;
    (0..=relays)
        .filter(|&m| blocks == 1 || m == 0)
        .map(|m| binomial(relays, m) * p.powi((relays - m) as i32) * binomial(sources + m, m + 1))
        .sum()
}

/// SNR window `[lo, hi]` (linear, inclusive).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrWindow {
    pub lo: f64,
    pub hi: f64,
}

impl SnrWindow {
    /// One decade ending at `hi`.
    pub fn decade_ending_at(hi: f64) -> Self {
        Self { lo: hi / 10.0, hi }
    }

    fn contains(&self, snr: f64) -> bool {
        // Relative slack absorbs dB→linear rounding at the edges.
        snr >= self.lo * (1.0 - 1e-9) && snr <= self.hi * (1.0 + 1e-9)
    }
}

/// Least-squares fit of log10(outage) against log10(snr).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    /// Negated slope: the diversity-order estimate.
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log10 units.
    pub residual: f64,
    pub points: usize,
    pub window: SnrWindow,
}

/// Diversity-order estimate over the points of `curve` inside `window`.
pub fn diversity_slope(curve: &OutageCurve, window: SnrWindow) -> Result<SlopeFit> {
    let pts: Vec<&OutagePoint> = curve
        .points
        .iter()
        .filter(|p| window.contains(p.snr))
        .collect();
    if pts.len() < 3 {
        return Err(Error::usage(format!(
            "slope window [{:.4e}, {:.4e}] holds {} points, need at least 3",
            window.lo,
            window.hi,
            pts.len()
        )));
    }
    if let Some(p) = pts.iter().find(|p| !(p.outage > 0.0)) {
        return Err(Error::usage(format!(
            "outage estimate {} at snr {:.4e} is not positive; raise the trial count or shrink the window",
            p.outage, p.snr
        )));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.snr.log10()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.outage.log10()).collect();
    let (slope, intercept, residual) = least_squares(&xs, &ys);
    Ok(SlopeFit {
        slope: -slope,
        intercept,
        residual,
        points: pts.len(),
        window,
    })
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    (slope, intercept, (sse / n).sqrt())
}

/// Default fit window: the highest SNR decade among points whose outage
/// lies in `[1e-9, 1e-3]`, restricted to those points.
pub fn default_window(curve: &OutageCurve) -> Option<SnrWindow> {
    window_in_band(curve, 1e-9, 1e-3)
}

/// Highest SNR decade among points with outage in `[lo, hi]`; the window is
/// narrowed so every grid point inside it is in the band.
pub fn window_in_band(curve: &OutageCurve, lo: f64, hi: f64) -> Option<SnrWindow> {
    let in_band = |p: &OutagePoint| p.outage >= lo && p.outage <= hi;
    let top = curve.points.iter().rev().find(|p| in_band(p))?;
    let mut window = SnrWindow::decade_ending_at(top.snr);
    // Shrink from below past any out-of-band point.
    if let Some(p) = curve
        .points
        .iter()
        .rev()
        .filter(|p| p.snr < top.snr && window.contains(p.snr))
        .find(|p| !in_band(p))
    {
        window.lo = p.snr * (1.0 + 1e-6);
    }
    Some(window)
}

/// The SNR decade ending at the highest point whose outage is `>= floor`.
pub fn highest_decade_above(curve: &OutageCurve, floor: f64) -> Option<SnrWindow> {
    let top = curve.points.iter().rev().find(|p| p.outage >= floor)?;
    Some(SnrWindow::decade_ending_at(top.snr))
}

/// Analytic curve over a linear SNR grid.
pub fn analytic_curve(config: &NetworkConfig, snr_grid: &[f64], mode: Mode) -> Result<OutageCurve> {
    let points = snr_grid
        .iter()
        .map(|&snr| {
            OutagePoint::analytic(
                snr,
                overall_outage(&AnalyticParams::from_config(config, snr), mode),
            )
        })
        .collect();
    Ok(OutageCurve::new(points, mode, Engine::Analytic)?
        .with_config(config.clone().with_mode(mode)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::db_to_linear;
    use itertools::Itertools;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn destination_frame_outage() {
        assert!(close(dest_frame_outage(0.1, 2), 0.01, 1e-12));
        assert_eq!(dest_frame_outage(0.37, 1), 0.37);
    }

    #[test]
    fn relay_success() {
        assert!(close(relay_success_all(0.1, 2), 0.81, 1e-12));
        assert_eq!(relay_success_all(0.0, 5), 1.0);
    }

    #[test]
    fn relay_counts() {
        assert_eq!(relay_count_distribution(1.0, 3), vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(relay_count_distribution(0.5, 2), vec![0.25, 0.5, 0.25]);
        let d = relay_count_distribution(0.3, 7);
        assert!(close(d.iter().sum(), 1.0, 1e-12));
    }

    #[test]
    fn conditional_outage_examples() {
        assert!(close(
            conditional_outage(0.2, 0.7, 3, 0),
            1.0 - 0.8f64.powi(3),
            1e-12
        ));
        assert_eq!(conditional_outage(0.0, 0.0, 4, 2), 0.0);
        // ≥ 2 failures among three Bernoulli(0.1): 3·0.01·0.9 + 0.001.
        assert!(close(conditional_outage(0.1, 0.1, 2, 1), 0.028, 1e-12));
    }

    // Sum over every failure pattern of P direct and m coded packets.
    fn enumerate_conditional(eps_sd: f64, eps_rd: f64, p: usize, m: usize) -> f64 {
        (0..p + m)
            .map(|_| [false, true])
            .multi_cartesian_product()
            .filter(|pat| pat.iter().filter(|f| **f).count() > m)
            .map(|pat| {
                pat.iter()
                    .enumerate()
                    .map(|(i, f)| {
                        let e = if i < p { eps_sd } else { eps_rd };
                        if *f {
                            e
                        } else {
                            1.0 - e
                        }
                    })
                    .product::<f64>()
            })
            .sum()
    }

    #[test]
    fn conditional_outage_matches_enumeration() {
        for p in 1..=6 {
            for m in 0..=(12 - p).min(6) {
                for (a, b) in [(0.1, 0.1), (0.3, 0.05), (0.01, 0.5)] {
                    let exact = enumerate_conditional(a, b, p, m);
                    assert!(
                        close(conditional_outage(a, b, p, m), exact, 1e-10),
                        "P={p} m={m}"
                    );
                }
            }
        }
    }

    #[test]
    fn no_relays_reduces_to_direct_links() {
        for mode in Mode::ALL {
            let params = AnalyticParams::new(0.2, 0.4, 0.3, 3, 0, 2).unwrap();
            let expected = 1.0 - (1.0 - 0.04f64).powi(3);
            assert!(close(overall_outage(&params, mode), expected, 1e-12));
        }
        let zero = AnalyticParams::new(0.0, 0.0, 0.0, 2, 2, 2).unwrap();
        assert_eq!(overall_outage(&zero, Mode::Realistic), 0.0);
    }

    #[test]
    fn overall_outage_is_monotone_and_realistic_dominates() {
        let grid = [0.0, 0.01, 0.05, 0.2, 0.5, 0.9, 1.0];
        for l in [1, 2, 4] {
            for &a in &grid {
                for &b in &grid {
                    for &c in &grid {
                        let base = AnalyticParams::new(a, b, c, 2, 2, l).unwrap();
                        let r = overall_outage(&base, Mode::Realistic);
                        let o = overall_outage(&base, Mode::Optimistic);
                        assert!(r >= o - 1e-15, "{a} {b} {c}");
                        for bump in [0.0, 0.03] {
                            let up = AnalyticParams::new(
                                (a + bump).min(1.0),
                                (b + 0.03).min(1.0),
                                (c + bump).min(1.0),
                                2,
                                2,
                                l,
                            )
                            .unwrap();
                            assert!(overall_outage(&up, Mode::Realistic) >= r - 1e-15);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn leading_terms() {
        let t = asymptotic_leading_term(2, 2, 2).unwrap();
        assert_eq!(t.exponent, 4);
        assert_eq!(t.coefficient, 1.0);
        assert_eq!(asymptotic_leading_term(2, 2, 1).unwrap().exponent, 3);
        assert!(matches!(
            asymptotic_leading_term(3, 2, 2),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn model_coefficient_matches_small_p_limit() {
        for (p, m, l) in [(2, 2, 2), (2, 2, 1), (3, 2, 2), (2, 3, 1), (1, 1, 4)] {
            let x = 1e-6;
            let params = AnalyticParams::new(x, x, x, p, m, l).unwrap();
            let ratio = overall_outage(&params, Mode::Realistic) / x.powi((m + l) as i32);
            let c = model_leading_coefficient(p, m, l);
            assert!(close(ratio, c, 1e-3), "P={p} M={m} L={l}: {ratio} vs {c}");
        }
    }

    #[test]
    fn slope_of_exact_power_law() {
        for l in [1usize, 2, 4] {
            let points = (0..=20)
                .map(|i| {
                    let snr = db_to_linear(30.0 + i as f64);
                    OutagePoint::analytic(snr, (3.0 / snr).powi(l as i32))
                })
                .collect();
            let curve = OutageCurve::new(points, Mode::Realistic, Engine::Analytic).unwrap();
            let fit = diversity_slope(&curve, SnrWindow { lo: 1e3, hi: 1e5 }).unwrap();
            assert!((fit.slope - l as f64).abs() < 0.01);
            assert!(fit.residual < 1e-9);
        }
    }

    #[test]
    fn slope_rejects_bad_windows() {
        let points = vec![
            OutagePoint::analytic(1.0, 0.1),
            OutagePoint::analytic(2.0, 0.0),
            OutagePoint::analytic(3.0, 0.0),
        ];
        let curve = OutageCurve::new(points, Mode::Realistic, Engine::MonteCarlo).unwrap();
        assert!(matches!(
            diversity_slope(&curve, SnrWindow { lo: 1.0, hi: 3.0 }),
            Err(Error::Usage(_))
        ));
        assert!(diversity_slope(&curve, SnrWindow { lo: 1.0, hi: 1.5 }).is_err());
    }

    #[test]
    fn curves_reject_unsorted_snr() {
        let points = vec![
            OutagePoint::analytic(2.0, 0.1),
            OutagePoint::analytic(1.0, 0.2),
        ];
        assert!(OutageCurve::new(points, Mode::Realistic, Engine::Analytic).is_err());
    }

    fn grid(lo_db: f64, hi_db: f64, step: f64) -> Vec<f64> {
        let n = ((hi_db - lo_db) / step).round() as usize;
        (0..=n)
            .map(|i| db_to_linear(lo_db + i as f64 * step))
            .collect()
    }

    #[test]
    fn analytic_slopes_reach_m_plus_l_and_l_m_plus_one() {
        let config = NetworkConfig::simple(2, 2, 2, 4, 2, Mode::Realistic).unwrap();
        let snrs = grid(0.0, 80.0, 1.0);
        let r = analytic_curve(&config, &snrs, Mode::Realistic).unwrap();
        let o = analytic_curve(&config, &snrs, Mode::Optimistic).unwrap();
        let top = SnrWindow::decade_ending_at(db_to_linear(80.0));
        assert!((diversity_slope(&r, top).unwrap().slope - 4.0).abs() < 0.01);
        assert!((diversity_slope(&o, top).unwrap().slope - 6.0).abs() < 0.05);
    }

    #[test]
    fn default_window_stays_in_band() {
        let config = NetworkConfig::simple(2, 2, 2, 4, 2, Mode::Realistic).unwrap();
        let curve = analytic_curve(&config, &grid(0.0, 60.0, 0.5), Mode::Optimistic).unwrap();
        let w = default_window(&curve).unwrap();
        for p in curve.points().iter().filter(|p| w.contains(p.snr)) {
            assert!((1e-9..=1e-3).contains(&p.outage));
        }
        assert!(diversity_slope(&curve, w).unwrap().points >= 3);
    }

    #[test]
    fn realistic_over_optimistic_ratio_grows_with_l() {
        for db in [5.0, 10.0, 20.0, 30.0] {
            let snr = db_to_linear(db);
            let ratios: Vec<f64> = [1usize, 2, 4]
                .iter()
                .map(|&l| {
                    let c = NetworkConfig::simple(2, 2, l, 4, 2, Mode::Realistic).unwrap();
                    let p = AnalyticParams::from_config(&c, snr);
                    overall_outage(&p, Mode::Realistic) / overall_outage(&p, Mode::Optimistic)
                })
                .collect();
            assert!(
                ratios[0] < ratios[1] && ratios[1] < ratios[2],
                "{db} dB: {ratios:?}"
            );
        }
    }
}
