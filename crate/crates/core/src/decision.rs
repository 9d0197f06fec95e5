//! Label-free decision rule over cosine-similarity scores.
//!
//! Each head compares a representation with the mean representation of the
//! true-labelled normal training data. The scores of the training set are fit
//! with a two-component univariate Gaussian mixture; the component with the
//! larger mean models normal traffic. A score is classified by the larger
//! weighted density, and the posterior of the winning component is the
//! head's confidence. The two heads are combined by a confidence vote.

use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::loss::cosine_unchecked;
use crate::model::{HeadMode, Representation};

pub const SIGMA_FLOOR: f64 = 1e-4;
pub const EM_TOLERANCE: f64 = 1e-8;
pub const EM_MAX_ITERATIONS: usize = 500;
/// Percentile of true-normal scores used by the fixed-threshold rule.
pub const DEFAULT_THRESHOLD_PERCENTILE: f64 = 5.0;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mu: f64,
    pub sigma: f64,
    pub weight: f64,
}

impl Gaussian {
    /// `ln(weight · φ(x; mu, sigma))`
    pub fn ln_weighted_density(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma;
        self.weight.ln() - self.sigma.ln() - LN_SQRT_2PI - 0.5 * z * z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPair {
    pub normal: Gaussian,
    pub abnormal: Gaussian,
}

impl GaussianPair {
    /// Posterior probabilities `(normal, abnormal)` of a score.
    pub fn posteriors(&self, score: f64) -> (f64, f64) {
        let ln_n = self.normal.ln_weighted_density(score);
        let ln_a = self.abnormal.ln_weighted_density(score);
        (logistic(ln_n - ln_a), logistic(ln_a - ln_n))
    }
}

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadDecision {
    pub label: Label,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorContext {
    pub mean_normal_en: Vec<f64>,
    pub mean_normal_de: Vec<f64>,
}

/// Componentwise mean of a set of representations.
pub fn mean_normal<R: AsRef<[f64]>>(reps: &[R]) -> Result<Vec<f64>> {
    let first = reps
        .first()
        .ok_or(Error::Empty("no normal representations to average"))?;
    let dim = first.as_ref().len();
    let mut sum = vec![0.0; dim];
    for r in reps {
        let r = r.as_ref();
        if r.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                actual: r.len(),
            });
        }
        for (s, v) in sum.iter_mut().zip(r) {
            *s += v;
        }
    }
    let n = reps.len() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}

/// Mean over the rows of `reps` selected by `rows`.
pub fn mean_rows(reps: &Matrix, rows: impl Iterator<Item = usize>) -> Result<Vec<f64>> {
    let selected: Vec<&[f64]> = rows.map(|r| reps.row(r)).collect();
    mean_normal(&selected)
}

/// Cosine similarity of every row against the anchor, in row order.
pub fn score_all(anchor: &[f64], reps: &Matrix) -> Result<Vec<f64>> {
    if reps.cols() != anchor.len() {
        return Err(Error::Dimension {
            expected: anchor.len(),
            actual: reps.cols(),
        });
    }
    Ok(reps.iter_rows().map(|r| cosine_unchecked(anchor, r)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Keep both mixture weights at 0.5 instead of estimating them.
    pub pin_weights: bool,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            pin_weights: false,
            tolerance: EM_TOLERANCE,
            max_iterations: EM_MAX_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub pair: GaussianPair,
    pub iterations: usize,
    pub converged: bool,
    /// A component collapsed and had its sigma raised to [`SIGMA_FLOOR`].
    pub sigma_floored: bool,
    /// Mixture log-likelihood before each M-step, plus the final value.
    pub log_likelihood: Vec<f64>,
}

/// Linear-interpolation percentile of sorted data, `p` in [0, 100].
fn interpolated_percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Nearest-rank percentile: the `ceil(p/100 · n)`-th smallest value.
pub fn nearest_rank_percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("no values for a percentile"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

pub fn fit_two_gaussians(scores: &[f64]) -> Result<GaussianPair> {
    Ok(fit_two_gaussians_with(scores, &FitOptions::default())?.pair)
}

/// Expectation-maximization fit of a two-component mixture.
///
/// Means start at the 25th and 75th percentiles with the pooled variance of
/// the two halves around the median; weights start equal.
pub fn fit_two_gaussians_with(scores: &[f64], opts: &FitOptions) -> Result<FitReport> {
    if scores.len() < 4 {
        return Err(Error::DegenerateScores(format!(
            "need at least 4 scores, got {}",
            scores.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::DegenerateScores("non-finite score".into()));
    }
    let xs: Vec<f64> = scores.iter().map(|s| s.clamp(-1.0, 1.0)).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        return Err(Error::DegenerateScores("all scores are equal".into()));
    }

    let mut sorted = xs.clone();
    sorted.sort_by(f64::total_cmp);
    let mut lo = Gaussian {
        mu: interpolated_percentile(&sorted, 25.0),
        sigma: 0.0,
        weight: 0.5,
    };
    let mut hi = Gaussian {
        mu: interpolated_percentile(&sorted, 75.0),
        sigma: 0.0,
        weight: 0.5,
    };
    if lo.mu == hi.mu {
        lo.mu = mean - 0.5 * var.sqrt();
        hi.mu = mean + 0.5 * var.sqrt();
    }
    let half = sorted.len() / 2;
    let (below, above) = sorted.split_at(half);
    let ss = |part: &[f64]| {
        let m = part.iter().sum::<f64>() / part.len() as f64;
        part.iter().map(|x| (x - m).powi(2)).sum::<f64>()
    };
    let pooled = (ss(below) + ss(above)) / (n - 2.0).max(1.0);
    let init_sigma = if pooled > 0.0 { pooled.sqrt() } else { var.sqrt() };
    lo.sigma = init_sigma.max(SIGMA_FLOOR);
    hi.sigma = init_sigma.max(SIGMA_FLOOR);

    let mut comps = [lo, hi];
    let mut resp = vec![0.0; xs.len()]; // responsibility of comps[1]
    let mut lls = Vec::new();
    let mut floored = false;
    let mut converged = false;
    let mut iterations = 0;

    let e_step = |comps: &[Gaussian; 2], resp: &mut [f64]| -> f64 {
        let mut ll = 0.0;
        for (x, r) in xs.iter().zip(resp.iter_mut()) {
            let a = comps[0].ln_weighted_density(*x);
            let b = comps[1].ln_weighted_density(*x);
            let m = a.max(b);
            ll += m + ((a - m).exp() + (b - m).exp()).ln();
            *r = logistic(b - a);
        }
        ll
    };

    let mut prev = e_step(&comps, &mut resp);
    lls.push(prev);
    while iterations < opts.max_iterations {
        iterations += 1;
        // M-step
        let r1: f64 = resp.iter().sum();
        let r0 = n - r1;
        if r0 <= 0.0 || r1 <= 0.0 {
            // one component absorbed every point
            floored = true;
            break;
        }
        let mu0 = xs.iter().zip(&resp).map(|(x, r)| (1.0 - r) * x).sum::<f64>() / r0;
        let mu1 = xs.iter().zip(&resp).map(|(x, r)| r * x).sum::<f64>() / r1;
        let v0 = xs.iter().zip(&resp).map(|(x, r)| (1.0 - r) * (x - mu0).powi(2)).sum::<f64>() / r0;
        let v1 = xs.iter().zip(&resp).map(|(x, r)| r * (x - mu1).powi(2)).sum::<f64>() / r1;
        let mut s0 = v0.sqrt();
        let mut s1 = v1.sqrt();
        if s0.is_nan() || s0 < SIGMA_FLOOR {
            s0 = SIGMA_FLOOR;
            floored = true;
        }
        if s1.is_nan() || s1 < SIGMA_FLOOR {
            s1 = SIGMA_FLOOR;
            floored = true;
        }
        let (w0, w1) = if opts.pin_weights { (0.5, 0.5) } else { (r0 / n, r1 / n) };
        comps = [
            Gaussian {
                mu: mu0,
                sigma: s0,
                weight: w0,
            },
            Gaussian {
                mu: mu1,
                sigma: s1,
                weight: w1,
            },
        ];
        let ll = e_step(&comps, &mut resp);
        lls.push(ll);
        let rel = (ll - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
        prev = ll;
        if rel < opts.tolerance {
            converged = true;
            break;
        }
    }

    let (mut normal, mut abnormal) = if comps[1].mu >= comps[0].mu {
        (comps[1], comps[0])
    } else {
        (comps[0], comps[1])
    };
    if normal.mu == abnormal.mu {
        // keep the strict ordering; the wider component is taken as abnormal
        if normal.sigma > abnormal.sigma {
            std::mem::swap(&mut normal, &mut abnormal);
        }
        abnormal.mu = abnormal.mu.next_down();
    }
    Ok(FitReport {
        pair: GaussianPair { normal, abnormal },
        iterations,
        converged,
        sigma_floored: floored,
        log_likelihood: lls,
    })
}

/// Picks the component with the larger weighted density. Equal densities
/// resolve to normal.
pub fn classify(score: f64, pair: &GaussianPair) -> HeadDecision {
    let (p_normal, p_abnormal) = pair.posteriors(score);
    let ln_n = pair.normal.ln_weighted_density(score);
    let ln_a = pair.abnormal.ln_weighted_density(score);
    if ln_a > ln_n {
        HeadDecision {
            label: Label::Attack,
            confidence: p_abnormal,
        }
    } else {
        HeadDecision {
            label: Label::Normal,
            confidence: p_normal,
        }
    }
}

/// Agreeing heads pass their label through; otherwise the more confident
/// head wins, and an exact tie raises an alarm.
pub fn vote(en: &HeadDecision, de: &HeadDecision) -> Label {
    if en.label == de.label {
        return en.label;
    }
    if en.confidence > de.confidence {
        en.label
    } else if de.confidence > en.confidence {
        de.label
    } else {
        Label::Attack
    }
}

/// Scores strictly below the threshold are attacks.
pub fn classify_fixed_threshold(score: f64, threshold: f64) -> Label {
    if score < threshold {
        Label::Attack
    } else {
        Label::Normal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DecisionMode {
    #[default]
    Gaussian,
    /// Threshold at the given percentile of true-normal training scores.
    FixedThreshold { percentile: f64 },
}

/// Fitted decision rule of one head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum HeadRule {
    Gaussian(GaussianPair),
    Threshold { threshold: f64 },
}

impl HeadRule {
    pub fn decide(&self, score: f64) -> HeadDecision {
        match self {
            HeadRule::Gaussian(pair) => classify(score, pair),
            // a hard threshold has no graded confidence
            HeadRule::Threshold { threshold } => HeadDecision {
                label: classify_fixed_threshold(score, *threshold),
                confidence: 1.0,
            },
        }
    }

    pub fn gaussian(&self) -> Option<&GaussianPair> {
        match self {
            HeadRule::Gaussian(p) => Some(p),
            HeadRule::Threshold { .. } => None,
        }
    }
}

/// Everything needed to label a representation without refitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionState {
    pub heads: HeadMode,
    pub anchors: AnchorContext,
    pub encoder: Option<HeadRule>,
    pub decoder: Option<HeadRule>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: Label,
    pub encoder: Option<HeadDecision>,
    pub decoder: Option<HeadDecision>,
}

impl DecisionState {
    pub fn decide(&self, rep: &Representation) -> Verdict {
        self.decide_parts(&rep.u_en, &rep.u_de)
    }

    pub fn decide_parts(&self, u_en: &[f64], u_de: &[f64]) -> Verdict {
        let encoder = self
            .encoder
            .as_ref()
            .map(|rule| rule.decide(cosine_unchecked(&self.anchors.mean_normal_en, u_en)));
        let decoder = self
            .decoder
            .as_ref()
            .map(|rule| rule.decide(cosine_unchecked(&self.anchors.mean_normal_de, u_de)));
        let label = match (&encoder, &decoder) {
            (Some(e), Some(d)) => vote(e, d),
            (Some(e), None) => e.label,
            (None, Some(d)) => d.label,
            (None, None) => unreachable!("at least one head is always active"),
        };
        Verdict {
            label,
            encoder,
            decoder,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn pair(mn: f64, sn: f64, wn: f64, ma: f64, sa: f64) -> GaussianPair {
        GaussianPair {
            normal: Gaussian {
                mu: mn,
                sigma: sn,
                weight: wn,
            },
            abnormal: Gaussian {
                mu: ma,
                sigma: sa,
                weight: 1.0 - wn,
            },
        }
    }

    fn mixture(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hi = Normal::new(0.9, 0.02).unwrap();
        let lo = Normal::new(0.3, 0.05).unwrap();
        (0..n)
            .map(|_| {
                if rng.random_bool(0.5) {
                    hi.sample(&mut rng)
                } else {
                    lo.sample(&mut rng)
                }
            })
            .collect()
    }

    #[test]
    fn mean_normal_examples() {
        assert_eq!(mean_normal(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(mean_normal(&[vec![0.3, -2.0]]).unwrap(), vec![0.3, -2.0]);
        assert!(mean_normal::<Vec<f64>>(&[]).is_err());
        assert!(mean_normal(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn mean_matches_compensated_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let reps: Vec<Vec<f64>> = (0..1000)
            .map(|_| (0..8).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let got = mean_normal(&reps).unwrap();
        for c in 0..8 {
            // Kahan-compensated running sum as an independent route
            let (mut s, mut comp) = (0.0f64, 0.0f64);
            for r in &reps {
                let y = r[c] - comp;
                let t = s + y;
                comp = (t - s) - y;
                s = t;
            }
            assert!((got[c] - s / 1000.0).abs() < 1e-12);
        }
    }

    #[test]
    fn score_all_preserves_order() {
        let reps = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], 2);
        let s = score_all(&[1.0, 0.0], &reps).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-11);
        assert_eq!(s[1], 0.0);
        assert!((s[2] - 0.5f64.sqrt()).abs() < 1e-11);
        assert!(score_all(&[1.0], &reps).is_err());
    }

    #[test]
    fn recovers_synthetic_mixture() {
        let scores = mixture(2024, 500);
        let report = fit_two_gaussians_with(&scores, &FitOptions::default()).unwrap();
        let p = report.pair;
        assert!((p.normal.mu - 0.9).abs() < 0.02, "{p:?}");
        assert!((p.abnormal.mu - 0.3).abs() < 0.02, "{p:?}");
        assert!((p.normal.sigma - 0.02).abs() < 0.01, "{p:?}");
        assert!((p.abnormal.sigma - 0.05).abs() < 0.01, "{p:?}");
        assert!((p.normal.weight + p.abnormal.weight - 1.0).abs() < 1e-12);
        assert!(report.converged);
        for w in report.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "log-likelihood fell: {w:?}");
        }
    }

    #[test]
    fn single_mode_scores_stay_ordered() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = Normal::new(0.6, 0.1).unwrap();
        let scores: Vec<f64> = (0..400).map(|_| d.sample(&mut rng)).collect();
        let p = fit_two_gaussians(&scores).unwrap();
        assert!(p.normal.mu > p.abnormal.mu);
        let pooled = ((p.normal.sigma.powi(2) + p.abnormal.sigma.powi(2)) / 2.0).sqrt();
        assert!(p.normal.mu - p.abnormal.mu < 2.0 * pooled, "{p:?}");
    }

    #[test]
    fn degenerate_scores_are_rejected() {
        assert!(fit_two_gaussians(&[0.5; 10]).is_err());
        assert!(fit_two_gaussians(&[0.1, 0.2, 0.3]).is_err());
        assert!(fit_two_gaussians(&[0.1, f64::NAN, 0.3, 0.4]).is_err());
    }

    #[test]
    fn collapsed_component_is_floored() {
        // half the mass sits on one point
        let mut scores = vec![0.8; 50];
        scores.extend((0..50).map(|i| 0.1 + i as f64 * 0.005));
        let r = fit_two_gaussians_with(&scores, &FitOptions::default()).unwrap();
        assert!(r.sigma_floored);
        assert!(r.pair.normal.sigma >= SIGMA_FLOOR && r.pair.abnormal.sigma >= SIGMA_FLOOR);
        assert!(r.pair.normal.mu > r.pair.abnormal.mu);
    }

    #[test]
    fn pinned_weights_stay_equal() {
        let scores = mixture(3, 300);
        let opts = FitOptions {
            pin_weights: true,
            ..FitOptions::default()
        };
        let p = fit_two_gaussians_with(&scores, &opts).unwrap().pair;
        assert_eq!(p.normal.weight, 0.5);
        assert_eq!(p.abnormal.weight, 0.5);
    }

    #[test]
    fn classify_examples() {
        let p = pair(0.9, 0.05, 0.5, 0.3, 0.05);
        let d = classify(0.9, &p);
        assert_eq!(d.label, Label::Normal);
        assert!(d.confidence > 0.99);

        // equal sigmas and weights cross exactly halfway
        let q = pair(0.75, 0.1, 0.5, 0.25, 0.1);
        let tie = classify(0.5, &q);
        assert_eq!(tie.label, Label::Normal);
        assert_eq!(tie.confidence, 0.5);
    }

    #[test]
    fn classify_matches_density_formula() {
        let p = pair(0.9, 0.05, 0.6, 0.3, 0.1);
        let phi = |x: f64, m: f64, s: f64| {
            (-(x - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
        };
        let wn = 0.6 * phi(0.5, 0.9, 0.05);
        let wa = 0.4 * phi(0.5, 0.3, 0.1);
        let d = classify(0.5, &p);
        let expected = if wa > wn { Label::Attack } else { Label::Normal };
        assert_eq!(d.label, expected);
        assert_eq!(d.label, Label::Attack);
        assert!((d.confidence - wa / (wn + wa)).abs() < 1e-12);
    }

    #[test]
    fn vote_examples() {
        let h = |l: u8, c: f64| HeadDecision {
            label: Label::try_from(l).unwrap(),
            confidence: c,
        };
        assert_eq!(vote(&h(0, 0.9), &h(0, 0.6)), Label::Normal);
        assert_eq!(vote(&h(0, 0.7), &h(1, 0.95)), Label::Attack);
        assert_eq!(vote(&h(1, 0.8), &h(0, 0.8)), Label::Attack);
        assert_eq!(vote(&h(1, 0.9), &h(0, 0.6)), Label::Attack);
        assert_eq!(vote(&h(0, 0.9), &h(1, 0.6)), Label::Normal);
    }

    #[test]
    fn fixed_threshold_rule() {
        assert_eq!(classify_fixed_threshold(0.8, 0.5), Label::Normal);
        assert_eq!(classify_fixed_threshold(0.5, 0.5), Label::Normal);
        assert_eq!(classify_fixed_threshold(0.49, 0.5), Label::Attack);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let scores: Vec<f64> = (0..100).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(nearest_rank_percentile(&scores, 5.0).unwrap(), sorted[4]);
        assert_eq!(nearest_rank_percentile(&scores, 0.0).unwrap(), sorted[0]);
        assert_eq!(nearest_rank_percentile(&scores, 100.0).unwrap(), sorted[99]);
    }

    proptest! {
        #[test]
        fn posteriors_sum_to_one(score in -1.0f64..1.0, mn in 0.5f64..1.0, ma in -1.0f64..0.5,
                                 sn in 0.001f64..0.5, sa in 0.001f64..0.5, wn in 0.01f64..0.99) {
            let p = pair(mn, sn, wn, ma, sa);
            let (a, b) = p.posteriors(score);
            prop_assert!((a + b - 1.0).abs() < 1e-12);
            let d = classify(score, &p);
            prop_assert!(d.confidence >= 0.5);
        }

        #[test]
        fn classify_is_monotone(mn in 0.2f64..1.0, gap in 0.01f64..1.0, s in 0.01f64..0.5,
                                a in -1.0f64..1.0, b in -1.0f64..1.0) {
            let p = pair(mn, s, 0.5, mn - gap, s);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            if classify(lo, &p).label == Label::Normal {
                prop_assert_eq!(classify(hi, &p).label, Label::Normal);
            }
        }

        #[test]
        fn vote_on_itself(l in 0u8..2, c in 0.5f64..1.0) {
            let d = HeadDecision { label: Label::try_from(l).unwrap(), confidence: c };
            prop_assert_eq!(vote(&d, &d), d.label);
        }

        #[test]
        fn fit_is_ordered_and_label_blind(seed in any::<u64>(), n in 20usize..200) {
            let scores = mixture(seed, n);
            let a = fit_two_gaussians(&scores).unwrap();
            prop_assert!(a.normal.mu > a.abnormal.mu);
            // the fit only ever sees scores; attaching any labels cannot
            // change its input, so refitting the same scores is bit-identical
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
            let labelled: Vec<(f64, Label)> = scores
                .iter()
                .map(|&s| (s, if rng.random_bool(0.5) { Label::Attack } else { Label::Normal }))
                .collect();
            let b = fit_two_gaussians(&labelled.iter().map(|p| p.0).collect::<Vec<_>>()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
