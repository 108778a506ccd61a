//! Evaluation metrics for the benchmark tasks.
//!
//! Scores are generic over [`Scalar`]. Per-sentence contributions are summed
//! in parallel, so an exact type such as `BigRational` gives results that do
//! not depend on reduction order.

mod labelling;
mod negation;
mod report;
mod sentiment;

use std::iter::Sum;
use std::ops::Add;

use serde::Serialize;
use thiserror::Error;

use crate::scalar::Scalar;
use crate::tasks::TaskError;

pub use labelling::{macro_f1, ner_strict_f1, pos_accuracy, ClassScores, NerScores};
pub use negation::{negation_metrics, NegationScores};
pub use report::{
    evaluate_task, ClassEntry, EvalInput, EvalReport, InstanceCounts, MetricEntry, Task,
    REPORT_SCHEMA_VERSION,
};
pub use sentiment::{
    graph_arcs, graph_edge_f1, sentiment_graph_f1, span_token_f1, targeted_f1, Arc, ArcLabel,
    Element, Matching, MAX_OPTIMAL_GRAPHS,
};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("gold has {gold} sentences, prediction has {pred}")]
    SentenceCount { gold: usize, pred: usize },
    #[error("sentence {index}: gold has {gold} tokens, prediction has {pred}")]
    Alignment {
        index: usize,
        gold: usize,
        pred: usize,
    },
    #[error("label `{0}` is not one of the evaluated classes")]
    UnknownLabel(String),
    #[error("{file}: sentence `{sent_id}` {problem}")]
    SentenceId {
        file: String,
        sent_id: String,
        problem: &'static str,
    },
    #[error("sentence {index}: {graphs} predicted graphs exceed the optimal-matching limit")]
    MatchingTooLarge { index: usize, graphs: usize },
    #[error("{file}: {source}")]
    Parse {
        file: String,
        #[source]
        source: TaskError,
    },
}

/// Precision/recall/F1 from possibly fractional true-positive weights.
///
/// Precision and recall keep separate true-positive weights because graph
/// matching credits a pair differently on each side.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prf<S> {
    pub tp_precision: S,
    pub tp_recall: S,
    pub predicted: S,
    pub gold: S,
}

impl<S: Scalar> Prf<S> {
    pub fn zero() -> Self {
        Prf::from_weights(S::zero(), S::zero(), S::zero(), S::zero())
    }

    pub fn from_counts(tp: u64, predicted: u64, gold: u64) -> Self {
        let tp = S::from_count(tp);
        Prf::from_weights(
            tp.clone(),
            tp,
            S::from_count(predicted),
            S::from_count(gold),
        )
    }

    pub fn from_weights(tp_precision: S, tp_recall: S, predicted: S, gold: S) -> Self {
        Prf {
            tp_precision,
            tp_recall,
            predicted,
            gold,
        }
    }

    fn both_empty(&self) -> bool {
        self.predicted.is_zero() && self.gold.is_zero()
    }

    /// Zero with no predictions, unless gold is empty too, which scores 1.
    pub fn precision(&self) -> S {
        if self.predicted.is_zero() {
            return if self.both_empty() {
                S::one()
            } else {
                S::zero()
            };
        }
        self.tp_precision.clone() / self.predicted.clone()
    }

    pub fn recall(&self) -> S {
        if self.gold.is_zero() {
            return if self.both_empty() {
                S::one()
            } else {
                S::zero()
            };
        }
        self.tp_recall.clone() / self.gold.clone()
    }

    pub fn f1(&self) -> S {
        let p = self.precision();
        let r = self.recall();
        let sum = p.clone() + r.clone();
        if sum.is_zero() {
            return S::zero();
        }
        (S::one() + S::one()) * p * r / sum
    }

    pub fn to_f64(&self) -> Prf<f64> {
        Prf {
            tp_precision: self.tp_precision.to_f64(),
            tp_recall: self.tp_recall.to_f64(),
            predicted: self.predicted.to_f64(),
            gold: self.gold.to_f64(),
        }
    }
}

impl<S: Scalar> Add for Prf<S> {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Prf {
            tp_precision: self.tp_precision + rhs.tp_precision,
            tp_recall: self.tp_recall + rhs.tp_recall,
            predicted: self.predicted + rhs.predicted,
            gold: self.gold + rhs.gold,
        }
    }
}

impl<S: Scalar> Sum for Prf<S> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Prf::zero(), Add::add)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Accuracy {
    pub correct: u64,
    pub total: u64,
}

impl Accuracy {
    /// 1 when there is nothing to score.
    pub fn value<S: Scalar>(&self) -> S {
        if self.total == 0 {
            S::one()
        } else {
            S::from_ratio(self.correct, self.total)
        }
    }
}

impl Add for Accuracy {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Accuracy {
            correct: self.correct + rhs.correct,
            total: self.total + rhs.total,
        }
    }
}

pub(crate) fn check_sentence_count(gold: usize, pred: usize) -> Result<(), MetricError> {
    if gold != pred {
        return Err(MetricError::SentenceCount { gold, pred });
    }
    Ok(())
}

/// One-to-one exact matches between two multisets.
pub(crate) fn multiset_matches<K: Ord>(
    gold: impl IntoIterator<Item = K>,
    pred: impl IntoIterator<Item = K>,
) -> u64 {
    let mut counts = std::collections::BTreeMap::new();
    for k in gold {
        *counts.entry(k).or_insert(0u64) += 1;
    }
    let mut tp = 0;
    for k in pred {
        if let Some(c) = counts.get_mut(&k) {
            if *c > 0 {
                *c -= 1;
                tp += 1;
            }
        }
    }
    tp
}
