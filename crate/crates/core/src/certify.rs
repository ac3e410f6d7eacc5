//! Removal certification.
//!
//! Compares the unlearned model against the retrain oracle on a fixed probe
//! set through three lenses:
//!
//! * cosine divergence: mean per-row (1 - cosine) between the two models'
//!   softmax outputs, with the mean per-row L2 gap reported alongside;
//! * a multiplicative bound estimate delta_hat over predicted-class events,
//!   with add-one smoothing and symmetrized direction (always >= 1);
//! * a loss-threshold membership-inference attack, whose advantage over
//!   coin flipping should be small for genuinely removed points.
//!
//! The verdict thresholds the cosine term only.

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{forward_logits, per_sample_losses, softmax, ClassifierModel};

/// Per-sample softmax outputs of one model over a fixed probe set.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeDistribution {
    /// p x k matrix; every row sums to 1 within 1e-9.
    pub probs: Array2<f64>,
    /// Content hash of the probe set (features, labels, and class count).
    pub probe_id: String,
}

/// Stable content hash for a probe set.
pub fn probe_content_id(probe: &Dataset) -> String {
    let mut hasher = Sha256::new();
    hasher.update((probe.len() as u64).to_le_bytes());
    hasher.update((probe.dim() as u64).to_le_bytes());
    hasher.update((probe.num_classes as u64).to_le_bytes());
    for value in probe.features.iter() {
        hasher.update(value.to_le_bytes());
    }
    for &label in &probe.labels {
        hasher.update((label as u64).to_le_bytes());
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Softmax outputs of `model` over the probe set.
pub fn probe_distribution(model: &ClassifierModel, probe: &Dataset) -> Result<ProbeDistribution> {
    if probe.is_empty() {
        return Err(Error::invalid_argument("probe set is empty".to_string()));
    }
    let logits = forward_logits(model, &probe.features)?;
    let probs = softmax(&logits)?;
    debug_assert!(probs
        .outer_iter()
        .all(|row| (row.sum() - 1.0).abs() < 1e-9));
    Ok(ProbeDistribution {
        probs,
        probe_id: probe_content_id(probe),
    })
}

fn check_matching(p: &ProbeDistribution, q: &ProbeDistribution) -> Result<()> {
    if p.probe_id != q.probe_id {
        return Err(Error::invalid_argument(
            "probe distributions come from different probe sets".to_string(),
        ));
    }
    if p.probs.dim() != q.probs.dim() {
        return Err(Error::invalid_argument(format!(
            "probe distribution shapes differ: {:?} vs {:?}",
            p.probs.dim(),
            q.probs.dim()
        )));
    }
    Ok(())
}

/// Mean per-row (1 - cosine similarity) and mean per-row L2 gap.
///
/// Probability rows are nonnegative, so the cosine lies in [0, 1] and the
/// divergence in [0, 1]; rows have sum 1 and can never be all-zero.
pub fn cosine_divergence(p: &ProbeDistribution, q: &ProbeDistribution) -> Result<(f64, f64)> {
    check_matching(p, q)?;
    let rows = p.probs.nrows() as f64;
    let mut divergence_sum = 0.0;
    let mut gap_sum = 0.0;
    for (pr, qr) in p.probs.outer_iter().zip(q.probs.outer_iter()) {
        if pr == qr {
            // Identical rows have divergence 0 by definition; the numeric
            // path would leave ~1 ulp of roundoff from sqrt(x)^2 != x.
            continue;
        }
        let dot = pr.dot(&qr);
        let p_norm = pr.dot(&pr).sqrt();
        let q_norm = qr.dot(&qr).sqrt();
        assert!(
            p_norm > 0.0 && q_norm > 0.0,
            "probability rows cannot have zero norm"
        );
        divergence_sum += (1.0 - dot / (p_norm * q_norm)).clamp(0.0, 1.0);
        let diff = &pr - &qr;
        gap_sum += diff.dot(&diff).sqrt();
    }
    Ok((divergence_sum / rows, gap_sum / rows))
}

fn argmax_row(row: ndarray::ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    let mut best_value = row[0];
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

/// Multiplicative gap between the two models' predicted-class frequencies
/// over the probe set.
///
/// The event family is the predicted-class outcome: both distributions are
/// reduced to length-k histograms of argmax predictions, add-one smoothing
/// avoids empty cells, and the returned value is the largest per-class
/// ratio taken in whichever direction exceeds one. Identical predictions
/// give exactly 1.
pub fn delta_bound_estimate(u: &ProbeDistribution, r: &ProbeDistribution) -> Result<f64> {
    check_matching(u, r)?;
    if u.probs.nrows() == 0 {
        return Err(Error::invalid_argument("empty probe".to_string()));
    }
    let k = u.probs.ncols();
    let mut hist_u = vec![0u64; k];
    let mut hist_r = vec![0u64; k];
    for row in u.probs.outer_iter() {
        hist_u[argmax_row(row)] += 1;
    }
    for row in r.probs.outer_iter() {
        hist_r[argmax_row(row)] += 1;
    }

    let mut delta_hat: f64 = 1.0;
    for c in 0..k {
        let fu = (hist_u[c] + 1) as f64;
        let fr = (hist_r[c] + 1) as f64;
        delta_hat = delta_hat.max(fu / fr).max(fr / fu);
    }
    Ok(delta_hat)
}

/// Loss-threshold membership inference from precomputed per-sample losses.
///
/// Picks the single threshold maximizing balanced accuracy (predict
/// "member" iff loss < threshold), scanning every decision boundary the
/// pooled losses admit. Scores are compared in exact integer arithmetic so
/// identical loss distributions yield an advantage of exactly zero.
pub fn mia_from_losses(member_losses: &[f64], nonmember_losses: &[f64]) -> Result<(f64, f64)> {
    let n_m = member_losses.len();
    let n_n = nonmember_losses.len();
    if n_m == 0 || n_n == 0 {
        return Err(Error::invalid_argument(
            "membership inference needs non-empty member and non-member sets".to_string(),
        ));
    }

    // (loss, is_member), sorted by loss.
    let mut pooled: Vec<(f64, bool)> = member_losses
        .iter()
        .map(|&l| (l, true))
        .chain(nonmember_losses.iter().map(|&l| (l, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("losses must be comparable"));

    // Threshold just above each distinct loss value, plus "below minimum".
    // score = TP * n_n + TN * n_m, maximized over thresholds; balanced
    // accuracy = score / (2 * n_m * n_n).
    let mut best_score = (n_n as u64) * (n_m as u64); // predict nobody: TN = n_n
    let mut members_below = 0u64;
    let mut nonmembers_below = 0u64;
    let mut i = 0;
    while i < pooled.len() {
        let value = pooled[i].0;
        while i < pooled.len() && pooled[i].0 == value {
            if pooled[i].1 {
                members_below += 1;
            } else {
                nonmembers_below += 1;
            }
            i += 1;
        }
        let tp = members_below;
        let tn = n_n as u64 - nonmembers_below;
        best_score = best_score.max(tp * n_n as u64 + tn * n_m as u64);
    }

    let balanced_accuracy = best_score as f64 / (2.0 * n_m as f64 * n_n as f64);
    Ok((balanced_accuracy, balanced_accuracy - 0.5))
}

/// Loss-threshold membership inference against `model`: per-sample
/// cross-entropy losses for both sets, then `mia_from_losses`.
pub fn mia_confidence_attack(
    model: &ClassifierModel,
    member_set: &Dataset,
    nonmember_set: &Dataset,
) -> Result<(f64, f64)> {
    if member_set.is_empty() || nonmember_set.is_empty() {
        return Err(Error::invalid_argument(
            "membership inference needs non-empty sets".to_string(),
        ));
    }
    if member_set.dim() != nonmember_set.dim() {
        return Err(Error::invalid_argument(
            "member and non-member sets have different feature dims".to_string(),
        ));
    }
    let member_losses = per_sample_losses(model, member_set)?;
    let nonmember_losses = per_sample_losses(model, nonmember_set)?;
    mia_from_losses(&member_losses, &nonmember_losses)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Certified,
    Rejected,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Certified => "certified",
            Verdict::Rejected => "rejected",
        }
    }
}

/// Everything the certification run measured, plus the verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificationReport {
    pub cosine_divergence: f64,
    pub norm_gap: f64,
    pub delta_hat: f64,
    /// Attack advantage distinguishing still-member points from the removed
    /// points under the unlearned model.
    pub mia_advantage_unlearned: f64,
    /// The same measurement under the retrain oracle.
    pub mia_advantage_oracle: f64,
    pub verdict: Verdict,
    pub threshold_used: f64,
}

/// Assemble the full certification report for an unlearned model versus its
/// retrain oracle. Certified iff cosine divergence <= threshold.
pub fn certify(
    model_unlearned: &ClassifierModel,
    model_oracle: &ClassifierModel,
    probe: &Dataset,
    removed_points: &Dataset,
    still_members: &Dataset,
    threshold: f64,
) -> Result<CertificationReport> {
    if !(threshold > 0.0) {
        return Err(Error::invalid_argument(format!(
            "certification threshold must be positive, got {threshold}"
        )));
    }
    if model_unlearned.arch != model_oracle.arch {
        return Err(Error::invalid_argument(
            "certification requires models of the same architecture".to_string(),
        ));
    }

    let u = probe_distribution(model_unlearned, probe)?;
    let r = probe_distribution(model_oracle, probe)?;
    let (cosine_div, norm_gap) = cosine_divergence(&u, &r)?;
    let delta_hat = delta_bound_estimate(&u, &r)?;

    let (_, adv_unlearned) = mia_confidence_attack(model_unlearned, still_members, removed_points)?;
    let (_, adv_oracle) = mia_confidence_attack(model_oracle, still_members, removed_points)?;

    let verdict = if cosine_div <= threshold {
        Verdict::Certified
    } else {
        Verdict::Rejected
    };
    Ok(CertificationReport {
        cosine_divergence: cosine_div,
        norm_gap,
        delta_hat,
        mia_advantage_unlearned: adv_unlearned,
        mia_advantage_oracle: adv_oracle,
        verdict,
        threshold_used: threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;
    use crate::nn::{init_model, ArchSpec};
    use crate::rng;

    fn uniform_probe(seed: u64, rows: usize, k: usize) -> ProbeDistribution {
        // Random probability matrix: positive entries, rows normalized.
        let mut rng = rng::rng_from_seed(seed);
        let mut probs = Array2::zeros((rows, k));
        for mut row in probs.outer_iter_mut() {
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = rng::uniform01(&mut rng) + 1e-6;
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        ProbeDistribution {
            probs,
            probe_id: "fixture".to_string(),
        }
    }

    #[test]
    fn zero_param_model_probes_uniform() {
        let arch = ArchSpec::SoftmaxLinear {
            input_dim: 3,
            classes: 10,
        };
        let model = ClassifierModel {
            arch,
            params: vec![0.0; arch.param_count()],
        };
        let probe = synth_blobs(1, 20, 3, 2, 4.0).unwrap();
        let dist = probe_distribution(&model, &probe).unwrap();
        for &v in dist.probs.iter() {
            assert!((v - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn probe_distribution_is_deterministic_and_matches_scalar_oracle() {
        let probe = synth_blobs(2, 10, 4, 3, 5.0).unwrap();
        let model = init_model(
            ArchSpec::SoftmaxLinear {
                input_dim: 4,
                classes: 3,
            },
            9,
        )
        .unwrap();
        let a = probe_distribution(&model, &probe).unwrap();
        let b = probe_distribution(&model, &probe).unwrap();
        assert_eq!(a, b);

        // Scalar per-sample forward + softmax.
        let (d, k) = (4, 3);
        for i in 0..probe.len() {
            let mut logits = vec![0.0; k];
            for (c, logit) in logits.iter_mut().enumerate() {
                *logit = model.params[d * k + c];
                for j in 0..d {
                    *logit += probe.features[[i, j]] * model.params[j * k + c];
                }
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            for (c, e) in exps.iter().enumerate() {
                assert!(
                    (a.probs[[i, c]] - e / sum).abs() < 1e-12,
                    "row {i} class {c}"
                );
            }
        }
    }

    #[test]
    fn cosine_divergence_identity_is_zero() {
        let p = uniform_probe(5, 8, 4);
        let (div, gap) = cosine_divergence(&p, &p).unwrap();
        assert_eq!(div, 0.0);
        assert_eq!(gap, 0.0);
    }

    #[test]
    fn cosine_divergence_orthogonal_rows() {
        let p = ProbeDistribution {
            probs: ndarray::array![[1.0, 0.0]],
            probe_id: "x".to_string(),
        };
        let q = ProbeDistribution {
            probs: ndarray::array![[0.0, 1.0]],
            probe_id: "x".to_string(),
        };
        let (div, gap) = cosine_divergence(&p, &q).unwrap();
        assert!((div - 1.0).abs() < 1e-15);
        assert!((gap - 2.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cosine_divergence_matches_scalar_reference() {
        let p = uniform_probe(11, 3, 4);
        let q = uniform_probe(12, 3, 4);
        let (div, gap) = cosine_divergence(&p, &q).unwrap();

        let mut div_ref = 0.0;
        let mut gap_ref = 0.0;
        for i in 0..3 {
            let mut dot = 0.0;
            let mut np = 0.0;
            let mut nq = 0.0;
            let mut sq = 0.0;
            for c in 0..4 {
                let a = p.probs[[i, c]];
                let b = q.probs[[i, c]];
                dot += a * b;
                np += a * a;
                nq += b * b;
                sq += (a - b) * (a - b);
            }
            div_ref += 1.0 - dot / (np.sqrt() * nq.sqrt());
            gap_ref += sq.sqrt();
        }
        div_ref /= 3.0;
        gap_ref /= 3.0;
        assert!((div - div_ref).abs() < 1e-12);
        assert!((gap - gap_ref).abs() < 1e-12);
    }

    #[test]
    fn cosine_divergence_rejects_probe_mismatch() {
        let p = uniform_probe(1, 3, 4);
        let mut q = uniform_probe(2, 3, 4);
        q.probe_id = "other".to_string();
        assert!(cosine_divergence(&p, &q).is_err());
    }

    #[test]
    fn cosine_divergence_symmetric_and_bounded() {
        for seed in 0..50 {
            let p = uniform_probe(seed, 6, 5);
            let q = uniform_probe(seed + 1000, 6, 5);
            let (d1, g1) = cosine_divergence(&p, &q).unwrap();
            let (d2, g2) = cosine_divergence(&q, &p).unwrap();
            assert!((d1 - d2).abs() < 1e-12);
            assert!((g1 - g2).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&d1), "divergence {d1} out of range");
            assert!((0.0..=2.0f64.sqrt() + 1e-12).contains(&g1));
        }
    }

    #[test]
    fn delta_identical_models_is_one() {
        let p = uniform_probe(3, 50, 4);
        assert_eq!(delta_bound_estimate(&p, &p).unwrap(), 1.0);
    }

    #[test]
    fn delta_disjoint_support_analytic() {
        // U predicts class 0 for all 100 rows, R predicts class 1:
        // smoothed ratio (100+1)/(0+1) = 101 in both directions.
        let mut u_rows = Array2::zeros((100, 2));
        let mut r_rows = Array2::zeros((100, 2));
        for i in 0..100 {
            u_rows[[i, 0]] = 0.9;
            u_rows[[i, 1]] = 0.1;
            r_rows[[i, 0]] = 0.1;
            r_rows[[i, 1]] = 0.9;
        }
        let u = ProbeDistribution {
            probs: u_rows,
            probe_id: "x".to_string(),
        };
        let r = ProbeDistribution {
            probs: r_rows,
            probe_id: "x".to_string(),
        };
        assert_eq!(delta_bound_estimate(&u, &r).unwrap(), 101.0);
    }

    #[test]
    fn delta_matches_hand_enumerated_histograms() {
        // U predicts [0,0,1,2]; R predicts [0,1,1,1].
        // Histograms with smoothing: U+1 = [3,2,2], R+1 = [2,4,1].
        // Ratios: 3/2, 4/2, 2/1 -> max 2.
        let rows_u = ndarray::array![
            [0.8, 0.1, 0.1],
            [0.7, 0.2, 0.1],
            [0.1, 0.8, 0.1],
            [0.2, 0.2, 0.6]
        ];
        let rows_r = ndarray::array![
            [0.9, 0.05, 0.05],
            [0.1, 0.8, 0.1],
            [0.3, 0.6, 0.1],
            [0.2, 0.7, 0.1]
        ];
        let u = ProbeDistribution {
            probs: rows_u,
            probe_id: "x".to_string(),
        };
        let r = ProbeDistribution {
            probs: rows_r,
            probe_id: "x".to_string(),
        };
        assert_eq!(delta_bound_estimate(&u, &r).unwrap(), 2.0);
    }

    #[test]
    fn mia_identical_distributions_give_zero_advantage() {
        let losses = vec![0.3, 1.2, 0.8, 2.0, 0.1];
        let (acc, adv) = mia_from_losses(&losses, &losses).unwrap();
        assert_eq!(acc, 0.5);
        assert_eq!(adv, 0.0);
    }

    #[test]
    fn mia_identical_sets_through_model() {
        let ds = synth_blobs(4, 30, 2, 2, 6.0).unwrap();
        let model = init_model(
            ArchSpec::SoftmaxLinear {
                input_dim: 2,
                classes: 2,
            },
            1,
        )
        .unwrap();
        let (_, adv) = mia_confidence_attack(&model, &ds, &ds).unwrap();
        assert_eq!(adv, 0.0);
    }

    #[test]
    fn mia_separable_losses_give_full_advantage() {
        let members = vec![0.1; 20];
        let nonmembers = vec![2.0; 20];
        let (acc, adv) = mia_from_losses(&members, &nonmembers).unwrap();
        assert_eq!(acc, 1.0);
        assert_eq!(adv, 0.5);
    }

    #[test]
    fn mia_advantage_is_bounded() {
        let mut rng = rng::rng_from_seed(8);
        for _ in 0..20 {
            let m: Vec<f64> = (0..17).map(|_| rng::uniform01(&mut rng) * 3.0).collect();
            let n: Vec<f64> = (0..29).map(|_| rng::uniform01(&mut rng) * 3.0).collect();
            let (acc, adv) = mia_from_losses(&m, &n).unwrap();
            assert!((0.5..=1.0).contains(&acc));
            assert!((0.0..=0.5).contains(&adv));
        }
    }

    #[test]
    fn certify_model_against_itself() {
        let ds = synth_blobs(6, 40, 2, 2, 7.0).unwrap();
        let model = init_model(
            ArchSpec::SoftmaxLinear {
                input_dim: 2,
                classes: 2,
            },
            2,
        )
        .unwrap();
        let removed = ds.subset(&[0, 1, 2]).unwrap();
        let members = ds.subset(&[10, 11, 12]).unwrap();
        let report = certify(&model, &model, &ds, &removed, &members, 1e-9).unwrap();
        assert_eq!(report.cosine_divergence, 0.0);
        assert_eq!(report.delta_hat, 1.0);
        assert_eq!(report.verdict, Verdict::Certified);
        assert_eq!(report.mia_advantage_unlearned, report.mia_advantage_oracle);
    }

    #[test]
    fn certify_rejects_nonpositive_threshold() {
        let ds = synth_blobs(6, 10, 2, 2, 7.0).unwrap();
        let model = init_model(
            ArchSpec::SoftmaxLinear {
                input_dim: 2,
                classes: 2,
            },
            2,
        )
        .unwrap();
        let sub = ds.subset(&[0]).unwrap();
        assert!(certify(&model, &model, &ds, &sub, &sub, 0.0).is_err());
    }

    #[test]
    fn certify_verdict_follows_threshold() {
        // Two different models: tiny threshold rejects, loose one accepts.
        let ds = synth_blobs(6, 30, 2, 2, 7.0).unwrap();
        let arch = ArchSpec::SoftmaxLinear {
            input_dim: 2,
            classes: 2,
        };
        let a = init_model(arch, 1).unwrap();
        let b = init_model(arch, 2).unwrap();
        let removed = ds.subset(&[0, 1]).unwrap();
        let members = ds.subset(&[5, 6]).unwrap();

        let strict = certify(&a, &b, &ds, &removed, &members, 1e-15).unwrap();
        let loose = certify(&a, &b, &ds, &removed, &members, 1.0).unwrap();
        assert!(strict.cosine_divergence > 0.0);
        assert_eq!(strict.verdict, Verdict::Rejected);
        assert_eq!(loose.verdict, Verdict::Certified);
        assert!(strict.norm_gap.is_finite());
        assert!(strict.delta_hat >= 1.0);
    }
}
