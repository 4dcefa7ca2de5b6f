//! Rating and ranking metrics, and the held-out evaluation driver.

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::RatingRecord;
use crate::diffcore::{sigmoid, DiffError};
use crate::model::{Model, NeighborSample};
use crate::pipeline::Context;
use crate::trainer::{ranking_labels, Task};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {0} predictions vs {1} targets")]
    LengthMismatch(usize, usize),
    #[error("no examples to evaluate")]
    Empty,
    #[error("AUC needs both classes; all {0} labels are identical")]
    SingleClass(usize),
    #[error(transparent)]
    Model(#[from] DiffError),
}

fn check(preds: &[f64], targets: &[f64]) -> Result<(), EvalError> {
    if preds.len() != targets.len() {
        return Err(EvalError::LengthMismatch(preds.len(), targets.len()));
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

pub fn mae(preds: &[f64], targets: &[f64]) -> Result<f64, EvalError> {
    check(preds, targets)?;
    let total: f64 = preds.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum();
    Ok(total / preds.len() as f64)
}

pub fn rmse(preds: &[f64], targets: &[f64]) -> Result<f64, EvalError> {
    check(preds, targets)?;
    let total: f64 = preds.iter().zip(targets).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((total / preds.len() as f64).sqrt())
}

/// Area under the ROC curve in Mann–Whitney form: the probability that a
/// random positive outscores a random negative, ties counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(EvalError::Empty);
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass(labels.len()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // sum of 1-based average ranks of the positives
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        let positives = order[i..=j].iter().filter(|&&k| labels[k]).count();
        pos_rank_sum += avg_rank * positives as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Mean binary cross-entropy with the same clamp as the training loss.
pub fn log_loss(probs: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    if probs.len() != labels.len() {
        return Err(EvalError::LengthMismatch(probs.len(), labels.len()));
    }
    if probs.is_empty() {
        return Err(EvalError::Empty);
    }
    let c = crate::diffcore::PROB_CLAMP;
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| {
            let p = p.clamp(c, 1.0 - c);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / probs.len() as f64)
}

/// Rating predictions with complete neighborhoods (no dropout).
pub fn predict_all(
    model: &Model,
    ctx: &Context,
    examples: &[RatingRecord],
) -> Result<Vec<f64>, DiffError> {
    examples
        .par_iter()
        .map(|r| {
            let sample = NeighborSample::full(&ctx.tables, &ctx.graph, r.user, r.item);
            model.predict(&ctx.stats, r.user, r.item, &sample)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub task: Task,
    pub mae: f64,
    pub rmse: f64,
    /// Ranking task only.
    pub auc: Option<f64>,
    pub n_examples: usize,
    /// Examples whose user has no training ratings.
    pub cold_user_count: usize,
    /// Examples whose item has no training ratings.
    pub cold_item_count: usize,
}

impl EvalReport {
    /// Flat `key=value` lines.
    pub fn to_record(&self) -> String {
        let mut s = format!(
            "task={}\nn_examples={}\nmae={}\nrmse={}\n",
            self.task, self.n_examples, self.mae, self.rmse
        );
        if let Some(a) = self.auc {
            s.push_str(&format!("auc={a}\n"));
        }
        s.push_str(&format!(
            "cold_user_count={}\ncold_item_count={}\n",
            self.cold_user_count, self.cold_item_count
        ));
        s
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} examples ({} cold users, {} cold items): MAE {:.4}, RMSE {:.4}",
            self.n_examples, self.cold_user_count, self.cold_item_count, self.mae, self.rmse
        )?;
        if let Some(a) = self.auc {
            write!(f, ", AUC {a:.4}")?;
        }
        Ok(())
    }
}

/// Scores every example and computes the task's metrics. `threshold` is the
/// ranking cutoff `F`; it is ignored for the rating task.
pub fn evaluate(
    model: &Model,
    ctx: &Context,
    test: &[RatingRecord],
    task: Task,
    threshold: f64,
) -> Result<EvalReport, EvalError> {
    if test.is_empty() {
        return Err(EvalError::Empty);
    }
    let preds = predict_all(model, ctx, test)?;
    report_from_predictions(ctx, test, &preds, task, threshold)
}

pub fn report_from_predictions(
    ctx: &Context,
    test: &[RatingRecord],
    preds: &[f64],
    task: Task,
    threshold: f64,
) -> Result<EvalReport, EvalError> {
    let targets: Vec<f64> = test.iter().map(|r| r.rating).collect();
    let auc = match task {
        Task::Rating => None,
        Task::Ranking => {
            let labels: Vec<bool> = ranking_labels(&targets, threshold)
                .into_iter()
                .map(|y| y == 1.0)
                .collect();
            let scores: Vec<f64> = preds.iter().map(|&r| sigmoid(r)).collect();
            Some(auc(&scores, &labels)?)
        }
    };
    Ok(EvalReport {
        task,
        mae: mae(preds, &targets)?,
        rmse: rmse(preds, &targets)?,
        auc,
        n_examples: test.len(),
        cold_user_count: test.iter().filter(|r| ctx.stats.is_cold_user(r.user)).count(),
        cold_item_count: test.iter().filter(|r| ctx.stats.is_cold_item(r.item)).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn error_metric_examples() {
        let t = [3.0, 4.0];
        assert_eq!(mae(&t, &t).unwrap(), 0.0);
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);
        let p = [4.0, 3.0];
        assert_eq!(mae(&p, &t).unwrap(), 1.0);
        assert_eq!(rmse(&p, &t).unwrap(), 1.0);
        let p = [3.0, 6.0];
        assert_eq!(mae(&p, &t).unwrap(), 1.0);
        assert_eq!(rmse(&p, &t).unwrap(), 2f64.sqrt());
        assert!(matches!(mae(&[1.0], &t), Err(EvalError::LengthMismatch(1, 2))));
        assert!(matches!(rmse(&[], &[]), Err(EvalError::Empty)));
    }

    #[test]
    fn auc_examples() {
        let labels = [false, false, true, true];
        assert_eq!(auc(&[0.1, 0.2, 0.3, 0.4], &labels).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 4], &labels).unwrap(), 0.5);
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &labels).unwrap(), 0.75);
        assert!(matches!(
            auc(&[0.1, 0.2], &[true, true]),
            Err(EvalError::SingleClass(2))
        ));
    }

    fn brute_force_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        proptest::collection::vec((0u8..12, any::<bool>()), 2..40)
            .prop_filter("both classes", |v| {
                v.iter().any(|x| x.1) && v.iter().any(|x| !x.1)
            })
            .prop_map(|v| {
                (
                    v.iter().map(|x| x.0 as f64 / 4.0 - 1.0).collect(),
                    v.iter().map(|x| x.1).collect(),
                )
            })
    }

    proptest! {
        #[test]
        fn mae_never_exceeds_rmse(
            pairs in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..50)
        ) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assert!(mae(&p, &t).unwrap() <= rmse(&p, &t).unwrap() + 1e-12);
        }

        #[test]
        fn auc_matches_pair_enumeration((scores, labels) in scored_labels()) {
            let a = auc(&scores, &labels).unwrap();
            prop_assert!((a - brute_force_auc(&scores, &labels)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn auc_invariant_under_monotone_maps((scores, labels) in scored_labels()) {
            let a = auc(&scores, &labels).unwrap();
            let affine: Vec<f64> = scores.iter().map(|x| 2.0 * x + 1.0).collect();
            let squashed: Vec<f64> = scores.iter().map(|&x| sigmoid(x)).collect();
            prop_assert_eq!(a, auc(&affine, &labels).unwrap());
            prop_assert_eq!(a, auc(&squashed, &labels).unwrap());
        }
    }

    #[test]
    fn log_loss_at_half_is_ln2() {
        let l = log_loss(&[0.5, 0.5], &[true, false]).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
    }
}
