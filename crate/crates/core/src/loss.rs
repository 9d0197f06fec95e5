//! Contrastive objectives over normal-anchored batches.
//!
//! Normal samples are the only anchors. For an anchor `i` and positive `j`
//! the pair term is
//!
//! ```text
//! L_ij = -log( e^{h(i,j)/τ} / (e^{h(i,j)/τ} + N) )
//! ```
//!
//! and the batch loss averages `L_ij` over all ordered pairs `i ≠ j`. The
//! variants differ only in the negative mass `N`:
//!
//! * [`LossVariant::Crc`] sums `e^{h(i',k)/τ}` over every normal anchor `i'`
//!   and every abnormal `k`, so each pair term is pushed by the repulsion of
//!   all anchors at once.
//! * [`LossVariant::InfoNce`] sums only over the current anchor's negatives.
//!
//! `h` is cosine similarity. Everything is evaluated in log-sum-exp form.

use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, Matrix};

/// Added to every norm before dividing.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LossVariant {
    #[default]
    Crc,
    InfoNce,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub temperature: f64,
    pub variant: LossVariant,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            temperature: 0.02,
            variant: LossVariant::Crc,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature <= 1.0) {
            return Err(Error::Config(format!(
                "temperature must lie in (0, 1], got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Representations of one batch split by class.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchRepresentations {
    pub normals: Vec<Vec<f64>>,
    pub abnormals: Vec<Vec<f64>>,
}

impl BatchRepresentations {
    /// Splits the rows of `reps` by `labels`.
    pub fn from_rows(reps: &Matrix, labels: &[Label]) -> Self {
        let mut out = Self::default();
        for (row, label) in reps.iter_rows().zip(labels) {
            match label {
                Label::Normal => out.normals.push(row.to_vec()),
                Label::Attack => out.abnormals.push(row.to_vec()),
            }
        }
        out
    }

    fn dim(&self) -> Option<usize> {
        self.normals
            .first()
            .or(self.abnormals.first())
            .map(Vec::len)
    }

    fn check(&self) -> Result<()> {
        if let Some(d) = self.dim() {
            for v in self.normals.iter().chain(&self.abnormals) {
                if v.len() != d {
                    return Err(Error::Dimension {
                        expected: d,
                        actual: v.len(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub value: f64,
    /// Set when the batch has fewer than two normals: no positive pairs exist
    /// and the loss is defined as zero.
    pub no_positive_pairs: bool,
}

/// Cosine similarity with `NORM_EPS` added to both norms.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(cosine_unchecked(a, b))
}

pub(crate) fn cosine_unchecked(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / ((norm(a) + NORM_EPS) * (norm(b) + NORM_EPS))
}

pub fn crc_loss(batch: &BatchRepresentations, temperature: f64) -> Result<LossValue> {
    contrastive_loss(
        batch,
        &LossConfig {
            temperature,
            variant: LossVariant::Crc,
        },
    )
}

pub fn infonce_loss(batch: &BatchRepresentations, temperature: f64) -> Result<LossValue> {
    contrastive_loss(
        batch,
        &LossConfig {
            temperature,
            variant: LossVariant::InfoNce,
        },
    )
}

pub fn contrastive_loss(batch: &BatchRepresentations, cfg: &LossConfig) -> Result<LossValue> {
    Ok(loss_with_grads(batch, cfg)?.0)
}

/// Gradients of a head loss with respect to each input vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchGradients {
    pub normals: Vec<Vec<f64>>,
    pub abnormals: Vec<Vec<f64>>,
}

/// Loss value together with its gradient with respect to every
/// representation in the batch.
pub fn loss_with_grads(
    batch: &BatchRepresentations,
    cfg: &LossConfig,
) -> Result<(LossValue, BatchGradients)> {
    cfg.validate()?;
    batch.check()?;
    let normals: Vec<&[f64]> = batch.normals.iter().map(Vec::as_slice).collect();
    let abnormals: Vec<&[f64]> = batch.abnormals.iter().map(Vec::as_slice).collect();
    let (value, gn, ga) = head_loss(&normals, &abnormals, cfg);
    Ok((
        value,
        BatchGradients {
            normals: gn,
            abnormals: ga,
        },
    ))
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Unit-normalized copy and the stabilized norm of a vector.
fn normalize(v: &[f64]) -> (Vec<f64>, f64, f64) {
    let n = norm(v);
    let denom = n + NORM_EPS;
    (v.iter().map(|x| x / denom).collect(), n, denom)
}

/// Pulls a gradient with respect to `v / (‖v‖ + ε)` back onto `v`.
fn unnormalize_grad(v: &[f64], n: f64, denom: f64, g_hat: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> = g_hat.iter().map(|x| x / denom).collect();
    if n > 0.0 {
        let coeff = -dot(v, g_hat) / (denom * denom * n);
        axpy(&mut g, coeff, v);
    }
    g
}

type HeadResult = (LossValue, Vec<Vec<f64>>, Vec<Vec<f64>>);

fn head_loss(normals: &[&[f64]], abnormals: &[&[f64]], cfg: &LossConfig) -> HeadResult {
    let ln = normals.len();
    let la = abnormals.len();
    let dim = normals.first().or(abnormals.first()).map_or(0, |v| v.len());
    let zero_grads = |count: usize| vec![vec![0.0; dim]; count];

    if ln < 2 {
        return (
            LossValue {
                value: 0.0,
                no_positive_pairs: true,
            },
            zero_grads(ln),
            zero_grads(la),
        );
    }
    if la == 0 {
        // the negative mass is empty, so every pair fraction is exactly 1
        return (
            LossValue {
                value: 0.0,
                no_positive_pairs: false,
            },
            zero_grads(ln),
            zero_grads(la),
        );
    }

    let inv_t = 1.0 / cfg.temperature;
    let norm_n: Vec<_> = normals.iter().map(|v| normalize(v)).collect();
    let norm_a: Vec<_> = abnormals.iter().map(|v| normalize(v)).collect();

    // scaled similarities
    let mut pos = Matrix::zeros(ln, ln);
    for i in 0..ln {
        for j in 0..ln {
            if i != j {
                pos.set(i, j, dot(&norm_n[i].0, &norm_n[j].0) * inv_t);
            }
        }
    }
    let mut neg = Matrix::zeros(ln, la);
    for i in 0..ln {
        for k in 0..la {
            neg.set(i, k, dot(&norm_n[i].0, &norm_a[k].0) * inv_t);
        }
    }

    // log of the negative mass seen by anchor i
    let log_neg: Vec<f64> = match cfg.variant {
        LossVariant::Crc => {
            let all = log_sum_exp(neg.as_slice().iter().copied());
            vec![all; ln]
        }
        LossVariant::InfoNce => (0..ln)
            .map(|i| log_sum_exp(neg.row(i).iter().copied()))
            .collect(),
    };

    let c = 1.0 / (ln * (ln - 1)) as f64;
    let mut total = 0.0;
    let mut d_pos = Matrix::zeros(ln, ln);
    // Σ_j c·(1 − σ_ij) per anchor: the weight each anchor puts on its negatives
    let mut neg_weight = vec![0.0; ln];
    for i in 0..ln {
        for j in 0..ln {
            if i == j {
                continue;
            }
            let p = pos.get(i, j);
            total += softplus(log_neg[i] - p);
            let s = sigmoid(p - log_neg[i]);
            d_pos.set(i, j, c * (s - 1.0));
            neg_weight[i] += c * (1.0 - s);
        }
    }
    let value = c * total;

    let mut d_neg = Matrix::zeros(ln, la);
    match cfg.variant {
        LossVariant::Crc => {
            let w: f64 = neg_weight.iter().sum();
            let lse = log_neg[0];
            for i in 0..ln {
                for k in 0..la {
                    d_neg.set(i, k, w * (neg.get(i, k) - lse).exp());
                }
            }
        }
        LossVariant::InfoNce => {
            for i in 0..ln {
                for k in 0..la {
                    d_neg.set(i, k, neg_weight[i] * (neg.get(i, k) - log_neg[i]).exp());
                }
            }
        }
    }

    // back through the dot products of normalized vectors
    let mut g_hat_n = zero_grads(ln);
    let mut g_hat_a = zero_grads(la);
    for i in 0..ln {
        for j in 0..ln {
            if i == j {
                continue;
            }
            let d = d_pos.get(i, j) * inv_t;
            axpy(&mut g_hat_n[i], d, &norm_n[j].0);
            axpy(&mut g_hat_n[j], d, &norm_n[i].0);
        }
        for k in 0..la {
            let d = d_neg.get(i, k) * inv_t;
            axpy(&mut g_hat_n[i], d, &norm_a[k].0);
            axpy(&mut g_hat_a[k], d, &norm_n[i].0);
        }
    }

    let grads_n = (0..ln)
        .map(|i| unnormalize_grad(normals[i], norm_n[i].1, norm_n[i].2, &g_hat_n[i]))
        .collect();
    let grads_a = (0..la)
        .map(|k| unnormalize_grad(abnormals[k], norm_a[k].1, norm_a[k].2, &g_hat_a[k]))
        .collect();
    (
        LossValue {
            value,
            no_positive_pairs: false,
        },
        grads_n,
        grads_a,
    )
}

/// Loss of one head over a row-major batch, with gradients laid out in the
/// same row order as `reps`.
pub fn head_loss_rows(reps: &Matrix, labels: &[Label], cfg: &LossConfig) -> (LossValue, Matrix) {
    debug_assert_eq!(reps.rows(), labels.len());
    let mut normal_rows = Vec::new();
    let mut abnormal_rows = Vec::new();
    for (r, label) in labels.iter().enumerate() {
        match label {
            Label::Normal => normal_rows.push(r),
            Label::Attack => abnormal_rows.push(r),
        }
    }
    let normals: Vec<&[f64]> = normal_rows.iter().map(|&r| reps.row(r)).collect();
    let abnormals: Vec<&[f64]> = abnormal_rows.iter().map(|&r| reps.row(r)).collect();
    let (value, gn, ga) = head_loss(&normals, &abnormals, cfg);
    let mut grads = Matrix::zeros(reps.rows(), reps.cols());
    for (r, g) in normal_rows.iter().zip(gn).chain(abnormal_rows.iter().zip(ga)) {
        grads.row_mut(*r).copy_from_slice(&g);
    }
    (value, grads)
}

/// Dual-head objective: the encoder loss plus the decoder loss.
#[derive(Debug, Clone, PartialEq)]
pub struct DualHeadLoss {
    pub total: f64,
    pub encoder: LossValue,
    pub decoder: LossValue,
    pub encoder_grads: Matrix,
    pub decoder_grads: Matrix,
}

/// Evaluates both heads over the same batch. `en` and `de` hold one row per
/// example, in the order of `labels`.
pub fn loss_and_grads(
    en: &Matrix,
    de: &Matrix,
    labels: &[Label],
    cfg: &LossConfig,
) -> Result<DualHeadLoss> {
    cfg.validate()?;
    for m in [en, de] {
        if m.rows() != labels.len() {
            return Err(Error::Dimension {
                expected: labels.len(),
                actual: m.rows(),
            });
        }
    }
    let (encoder, encoder_grads) = head_loss_rows(en, labels, cfg);
    let (decoder, decoder_grads) = head_loss_rows(de, labels, cfg);
    Ok(DualHeadLoss {
        total: encoder.value + decoder.value,
        encoder,
        decoder,
        encoder_grads,
        decoder_grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Literal double-loop transcription of the pair term and batch average,
    /// using plain `exp` and no normalization tricks.
    fn oracle(batch: &BatchRepresentations, tau: f64, variant: LossVariant) -> f64 {
        let ln = batch.normals.len();
        let la = batch.abnormals.len();
        if ln < 2 {
            return 0.0;
        }
        let h = |a: &[f64], b: &[f64]| {
            let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt() + NORM_EPS;
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt() + NORM_EPS;
            d / (na * nb)
        };
        let mut sum = 0.0;
        for i in 0..ln {
            for j in 0..ln {
                if j == i {
                    continue;
                }
                let num = (h(&batch.normals[i], &batch.normals[j]) / tau).exp();
                let mut negs = 0.0;
                match variant {
                    LossVariant::Crc => {
                        for ip in 0..ln {
                            for k in 0..la {
                                negs += (h(&batch.normals[ip], &batch.abnormals[k]) / tau).exp();
                            }
                        }
                    }
                    LossVariant::InfoNce => {
                        for k in 0..la {
                            negs += (h(&batch.normals[i], &batch.abnormals[k]) / tau).exp();
                        }
                    }
                }
                sum += -(num / (num + negs)).ln();
            }
        }
        sum / (ln * (ln - 1)) as f64
    }

    fn random_batch(rng: &mut ChaCha8Rng, ln: usize, la: usize, dim: usize) -> BatchRepresentations {
        let mut v = || (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        BatchRepresentations {
            normals: (0..ln).map(|_| v()).collect(),
            abnormals: (0..la).map(|_| v()).collect(),
        }
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_sim(&[1.0, 0.0], &[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-11);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        // 32 / (sqrt(14) * sqrt(77))
        let expected = 32.0 / (14.0f64.sqrt() * 77.0f64.sqrt());
        let got = cosine_sim(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.974631846).abs() < 1e-9);
        assert!(cosine_sim(&[1.0], &[1.0, 2.0]).is_err());
        assert_eq!(cosine_sim(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn empty_negative_set_gives_zero() {
        let batch = BatchRepresentations {
            normals: vec![vec![1.0, 0.2], vec![0.3, 1.0], vec![-1.0, 0.5]],
            abnormals: vec![],
        };
        assert_eq!(crc_loss(&batch, 0.02).unwrap().value, 0.0);
        assert_eq!(infonce_loss(&batch, 0.02).unwrap().value, 0.0);
    }

    #[test]
    fn single_normal_is_flagged() {
        let batch = BatchRepresentations {
            normals: vec![vec![1.0, 0.0]],
            abnormals: vec![vec![0.0, 1.0]],
        };
        let v = crc_loss(&batch, 0.5).unwrap();
        assert_eq!(v.value, 0.0);
        assert!(v.no_positive_pairs);
    }

    #[test]
    fn hand_evaluated_two_normals_one_abnormal() {
        let batch = BatchRepresentations {
            normals: vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            abnormals: vec![vec![0.0, 1.0]],
        };
        let e = std::f64::consts::E;
        // two anchors each see one orthogonal abnormal: N = 2·e^0
        let crc = crc_loss(&batch, 1.0).unwrap().value;
        assert!((crc - (1.0 + 2.0 / e).ln()).abs() < 1e-12);
        let info = infonce_loss(&batch, 1.0).unwrap().value;
        assert!((info - (1.0 + 1.0 / e).ln()).abs() < 1e-12);
        assert!(crc >= info);
    }

    #[test]
    fn identical_normals_without_negatives_have_zero_gradient() {
        let batch = BatchRepresentations {
            normals: vec![vec![0.5, 0.5, 0.1]; 4],
            abnormals: vec![],
        };
        let (_, g) = loss_with_grads(&batch, &LossConfig::default()).unwrap();
        assert!(g.normals.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn matches_oracle_on_random_batches() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for ln in 0..=6 {
            for la in 0..=6 {
                let batch = random_batch(&mut rng, ln, la, 5);
                for variant in [LossVariant::Crc, LossVariant::InfoNce] {
                    for tau in [0.02, 0.3, 1.0] {
                        let cfg = LossConfig {
                            temperature: tau,
                            variant,
                        };
                        let got = contrastive_loss(&batch, &cfg).unwrap().value;
                        let want = oracle(&batch, tau, variant);
                        assert!(
                            rel_err(got, want) < 1e-9 || (got - want).abs() < 1e-12,
                            "ln={ln} la={la} {variant:?} tau={tau}: {got} vs {want}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for variant in [LossVariant::Crc, LossVariant::InfoNce] {
            for _ in 0..5 {
                let batch = random_batch(&mut rng, 4, 3, 3);
                let cfg = LossConfig {
                    temperature: 0.5,
                    variant,
                };
                let (_, g) = loss_with_grads(&batch, &cfg).unwrap();
                let h = 1e-6;
                let check = |is_normal: bool, idx: usize, c: usize, analytic: f64| {
                    let mut plus = batch.clone();
                    let mut minus = batch.clone();
                    let (p, m) = if is_normal {
                        (&mut plus.normals[idx][c], &mut minus.normals[idx][c])
                    } else {
                        (&mut plus.abnormals[idx][c], &mut minus.abnormals[idx][c])
                    };
                    *p += h;
                    *m -= h;
                    let fd = (contrastive_loss(&plus, &cfg).unwrap().value
                        - contrastive_loss(&minus, &cfg).unwrap().value)
                        / (2.0 * h);
                    let err = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-3);
                    assert!(err < 1e-5, "{variant:?}: fd {fd} vs analytic {analytic}");
                };
                for (i, gi) in g.normals.iter().enumerate() {
                    for (c, &a) in gi.iter().enumerate() {
                        check(true, i, c, a);
                    }
                }
                for (k, gk) in g.abnormals.iter().enumerate() {
                    for (c, &a) in gk.iter().enumerate() {
                        check(false, k, c, a);
                    }
                }
            }
        }
    }

    #[test]
    fn extreme_temperature_is_stable() {
        // similarities of ±1 at τ = 0.02 put exponents at ±50
        let batch = BatchRepresentations {
            normals: vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![-1.0, 0.0]],
            abnormals: vec![vec![1.0, 0.0], vec![-1.0, 0.0]],
        };
        let (v, g) = loss_with_grads(&batch, &LossConfig::default()).unwrap();
        assert!(v.value.is_finite());
        assert!(g.normals.iter().chain(&g.abnormals).flatten().all(|x| x.is_finite()));
    }

    #[test]
    fn dual_head_is_additive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let labels = [Label::Normal, Label::Attack, Label::Normal, Label::Normal, Label::Attack];
        let mk = |rng: &mut ChaCha8Rng, d: usize| {
            Matrix::from_vec(5, d, (0..5 * d).map(|_| rng.random_range(-1.0..1.0)).collect())
        };
        let en = mk(&mut rng, 3);
        let de = mk(&mut rng, 4);
        let cfg = LossConfig::default();
        let both = loss_and_grads(&en, &de, &labels, &cfg).unwrap();
        let (de_only, de_grads) = head_loss_rows(&de, &labels, &cfg);
        let (en_only, _) = head_loss_rows(&en, &labels, &cfg);
        assert_eq!(both.total, en_only.value + de_only.value);
        assert_eq!(both.decoder_grads, de_grads);
    }

    proptest! {
        #[test]
        fn scale_and_permutation_invariance(
            seed in any::<u64>(),
            ln in 2usize..6,
            la in 1usize..6,
            scale in 0.01f64..100.0,
            pick in any::<prop::sample::Index>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let batch = random_batch(&mut rng, ln, la, 4);
            let cfg = LossConfig::default();
            let base = contrastive_loss(&batch, &cfg).unwrap().value;

            let mut scaled = batch.clone();
            let idx = pick.index(ln);
            for x in &mut scaled.normals[idx] {
                *x *= scale;
            }
            let s = contrastive_loss(&scaled, &cfg).unwrap().value;
            prop_assert!(rel_err(base, s) < 1e-9 || (base - s).abs() < 1e-12);

            let mut permuted = batch.clone();
            permuted.normals.reverse();
            permuted.abnormals.rotate_left(1);
            let p = contrastive_loss(&permuted, &cfg).unwrap().value;
            prop_assert!(rel_err(base, p) < 1e-9 || (base - p).abs() < 1e-12);
        }

        #[test]
        fn crc_dominates_infonce(seed in any::<u64>(), ln in 2usize..7, la in 1usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let batch = random_batch(&mut rng, ln, la, 3);
            let crc = crc_loss(&batch, 0.02).unwrap().value;
            let info = infonce_loss(&batch, 0.02).unwrap().value;
            prop_assert!(crc >= info - 1e-12);
        }
    }
}
