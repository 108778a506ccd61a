use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;
use rayon::prelude::*;
use serde::Serialize;

use super::{check_sentence_count, multiset_matches, MetricError, Prf};
use crate::scalar::Scalar;
use crate::tasks::{Polarity, SentimentGraph, TokenSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Element {
    Holder,
    Target,
    Expression,
}

impl Element {
    pub const ALL: [Element; 3] = [Element::Holder, Element::Target, Element::Expression];

    pub fn of(self, graph: &SentimentGraph) -> &TokenSet {
        match self {
            Element::Holder => &graph.holder,
            Element::Target => &graph.target,
            Element::Expression => &graph.expression,
        }
    }
}

/// Token-level F1 over the union of one element's tokens per sentence.
pub fn span_token_f1<S: Scalar>(
    gold: &[Vec<SentimentGraph>],
    pred: &[Vec<SentimentGraph>],
    element: Element,
) -> Result<Prf<S>, MetricError> {
    check_sentence_count(gold.len(), pred.len())?;
    let union = |graphs: &[SentimentGraph]| -> BTreeSet<usize> {
        graphs
            .iter()
            .flat_map(|g| element.of(g).iter().copied())
            .collect()
    };
    Ok(gold
        .par_iter()
        .zip(pred)
        .map(|(g, p)| {
            let (g, p) = (union(g), union(p));
            Prf::from_counts(
                g.intersection(&p).count() as u64,
                p.len() as u64,
                g.len() as u64,
            )
        })
        .reduce(Prf::zero, |a, b| a + b))
}

/// Exact target token set plus polarity, matched one-to-one. Opinions
/// without a target take no part.
pub fn targeted_f1<S: Scalar>(
    gold: &[Vec<SentimentGraph>],
    pred: &[Vec<SentimentGraph>],
) -> Result<Prf<S>, MetricError> {
    check_sentence_count(gold.len(), pred.len())?;
    let keys = |graphs: &[SentimentGraph]| -> Vec<(TokenSet, Polarity)> {
        graphs
            .iter()
            .filter(|g| !g.target.is_empty())
            .map(|g| (g.target.clone(), g.polarity))
            .collect()
    };
    Ok(gold
        .par_iter()
        .zip(pred)
        .map(|(g, p)| {
            let (g, p) = (keys(g), keys(p));
            let (ng, np) = (g.len() as u64, p.len() as u64);
            Prf::from_counts(multiset_matches(g, p), np, ng)
        })
        .reduce(Prf::zero, |a, b| a + b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ArcLabel {
    Holder,
    Target,
    Root(Polarity),
}

/// Dependency-style arc between first tokens of opinion elements. `head`
/// is `None` for the root arc into the expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Arc {
    pub head: Option<usize>,
    pub dependent: usize,
    pub label: ArcLabel,
}

/// Arcs of a sentence: root → expression (polarity), expression → target,
/// expression → holder, each anchored on the element's first token.
pub fn graph_arcs(graphs: &[SentimentGraph]) -> BTreeSet<Arc> {
    let mut arcs = BTreeSet::new();
    for g in graphs {
        let Some(&e) = g.expression.first() else {
            continue;
        };
        arcs.insert(Arc {
            head: None,
            dependent: e,
            label: ArcLabel::Root(g.polarity),
        });
        if let Some(&t) = g.target.first() {
            arcs.insert(Arc {
                head: Some(e),
                dependent: t,
                label: ArcLabel::Target,
            });
        }
        if let Some(&h) = g.holder.first() {
            arcs.insert(Arc {
                head: Some(e),
                dependent: h,
                label: ArcLabel::Holder,
            });
        }
    }
    arcs
}

/// Arc F1. Unlabelled mode compares (head, dependent) pairs only.
pub fn graph_edge_f1<S: Scalar>(
    gold: &[Vec<SentimentGraph>],
    pred: &[Vec<SentimentGraph>],
    labelled: bool,
) -> Result<Prf<S>, MetricError> {
    check_sentence_count(gold.len(), pred.len())?;
    Ok(gold
        .par_iter()
        .zip(pred)
        .map(|(g, p)| {
            let (g, p) = (graph_arcs(g), graph_arcs(p));
            if labelled {
                Prf::from_counts(
                    g.intersection(&p).count() as u64,
                    p.len() as u64,
                    g.len() as u64,
                )
            } else {
                let strip = |arcs: BTreeSet<Arc>| -> BTreeSet<(Option<usize>, usize)> {
                    arcs.into_iter().map(|a| (a.head, a.dependent)).collect()
                };
                let (g, p) = (strip(g), strip(p));
                Prf::from_counts(
                    g.intersection(&p).count() as u64,
                    p.len() as u64,
                    g.len() as u64,
                )
            }
        })
        .reduce(Prf::zero, |a, b| a + b))
}

/// How predicted and gold graphs of a sentence are paired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Matching {
    /// Repeatedly take the heaviest remaining pair, ties by (gold, pred) index.
    #[default]
    Greedy,
    /// Maximise the summed pair weight; among optimal matchings the one
    /// assigning each gold graph, in order, the lowest-index prediction.
    Optimal,
}

impl FromStr for Matching {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "greedy" => Ok(Matching::Greedy),
            "optimal" => Ok(Matching::Optimal),
            _ => Err(format!(
                "unknown matching `{s}` (expected greedy or optimal)"
            )),
        }
    }
}

impl fmt::Display for Matching {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Matching::Greedy => "greedy",
            Matching::Optimal => "optimal",
        })
    }
}

/// Optimal matching enumerates prediction subsets; sentences with more
/// predicted graphs than this are rejected.
pub const MAX_OPTIMAL_GRAPHS: usize = 20;

#[derive(Debug, Clone)]
struct PairWeight<S> {
    precision: S,
    recall: S,
}

impl<S: Scalar> PairWeight<S> {
    fn score(&self) -> S {
        self.precision.clone() + self.recall.clone()
    }
}

/// `None` when the pair may not be matched: polarity differs (labelled),
/// or some element is empty on one side only or has disjoint tokens.
fn pair_weight<S: Scalar>(
    gold: &SentimentGraph,
    pred: &SentimentGraph,
    labelled: bool,
) -> Option<PairWeight<S>> {
    if labelled && gold.polarity != pred.polarity {
        return None;
    }
    let mut precision = S::zero();
    let mut recall = S::zero();
    for e in Element::ALL {
        let (g, p) = (e.of(gold), e.of(pred));
        match (g.is_empty(), p.is_empty()) {
            (true, true) => {
                precision = precision + S::one();
                recall = recall + S::one();
            }
            (false, false) => {
                let overlap = g.intersection(p).count() as u64;
                if overlap == 0 {
                    return None;
                }
                precision = precision + S::from_ratio(overlap, p.len() as u64);
                recall = recall + S::from_ratio(overlap, g.len() as u64);
            }
            _ => return None,
        }
    }
    let three = S::from_count(3);
    Some(PairWeight {
        precision: precision / three.clone(),
        recall: recall / three,
    })
}

fn greedy_pairs<S: Scalar>(weights: &[Vec<Option<PairWeight<S>>>]) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(usize, usize, S)> = weights
        .iter()
        .enumerate()
        .flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter_map(move |(j, w)| w.as_ref().map(|w| (i, j, w.score())))
        })
        .collect();
    // Stable sort keeps (gold, pred) order among equal weights.
    candidates.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap_or(std::cmp::Ordering::Equal));
    let mut gold_used = vec![false; weights.len()];
    let mut pred_used = vec![false; weights.first().map_or(0, Vec::len)];
    let mut pairs = Vec::new();
    for (i, j, _) in candidates {
        if !gold_used[i] && !pred_used[j] {
            gold_used[i] = true;
            pred_used[j] = true;
            pairs.push((i, j));
        }
    }
    pairs
}

struct OptimalSearch<'a, S> {
    weights: &'a [Vec<Option<PairWeight<S>>>],
    memo: HashMap<(usize, u32), S>,
}

impl<S: Scalar> OptimalSearch<'_, S> {
    /// Best total score for gold graphs `i..` with predictions in `used` taken.
    fn best(&mut self, i: usize, used: u32) -> S {
        if i == self.weights.len() {
            return S::zero();
        }
        if let Some(v) = self.memo.get(&(i, used)) {
            return v.clone();
        }
        let mut best = self.best(i + 1, used);
        for (j, w) in self.weights[i].iter().enumerate() {
            if let Some(w) = w {
                if used & (1 << j) == 0 {
                    let v = w.score() + self.best(i + 1, used | (1 << j));
                    if v > best {
                        best = v;
                    }
                }
            }
        }
        self.memo.insert((i, used), best.clone());
        best
    }

    fn pairs(&mut self) -> Vec<(usize, usize)> {
        let weights = self.weights;
        let mut pairs = Vec::new();
        let mut used = 0u32;
        for (i, row) in weights.iter().enumerate() {
            let target = self.best(i, used);
            let choice = row.iter().enumerate().find_map(|(j, w)| {
                let w = w.as_ref()?;
                if used & (1 << j) != 0 {
                    return None;
                }
                let v = w.score() + self.best(i + 1, used | (1 << j));
                (v == target).then_some(j)
            });
            if let Some(j) = choice {
                used |= 1 << j;
                pairs.push((i, j));
            }
        }
        pairs
    }
}

fn optimal_pairs<S: Scalar>(weights: &[Vec<Option<PairWeight<S>>>]) -> Vec<(usize, usize)> {
    OptimalSearch {
        weights,
        memo: HashMap::new(),
    }
    .pairs()
}

fn sentence_graph_prf<S: Scalar>(
    gold: &[SentimentGraph],
    pred: &[SentimentGraph],
    labelled: bool,
    matching: Matching,
) -> Prf<S> {
    // Matching is decided on exact weights so every scalar type pairs the
    // same graphs; rounding would otherwise break ties differently.
    let exact: Vec<Vec<Option<PairWeight<BigRational>>>> = gold
        .iter()
        .map(|g| pred.iter().map(|p| pair_weight(g, p, labelled)).collect())
        .collect();
    let pairs = match matching {
        Matching::Greedy => greedy_pairs(&exact),
        Matching::Optimal => optimal_pairs(&exact),
    };
    let (mut tp_p, mut tp_r) = (S::zero(), S::zero());
    for (i, j) in pairs {
        let w: PairWeight<S> =
            pair_weight(&gold[i], &pred[j], labelled).expect("matched pairs are matchable");
        tp_p = tp_p + w.precision.clone();
        tp_r = tp_r + w.recall.clone();
    }
    Prf::from_weights(
        tp_p,
        tp_r,
        S::from_count(pred.len() as u64),
        S::from_count(gold.len() as u64),
    )
}

/// Weighted-overlap graph F1: SF1 when `labelled`, NSF1 otherwise.
///
/// A matched pair earns, on the precision side, the mean over holder, target
/// and expression of `|pred ∩ gold| / |pred|` (1 when both are empty), and
/// on the recall side the same with `|gold|`. Precision divides the summed
/// weights by the number of predicted graphs, recall by the number of gold
/// graphs.
pub fn sentiment_graph_f1<S: Scalar>(
    gold: &[Vec<SentimentGraph>],
    pred: &[Vec<SentimentGraph>],
    labelled: bool,
    matching: Matching,
) -> Result<Prf<S>, MetricError> {
    check_sentence_count(gold.len(), pred.len())?;
    if matching == Matching::Optimal {
        if let Some((index, p)) = pred
            .iter()
            .enumerate()
            .find(|(_, p)| p.len() > MAX_OPTIMAL_GRAPHS)
        {
            return Err(MetricError::MatchingTooLarge {
                index,
                graphs: p.len(),
            });
        }
    }
    Ok(gold
        .par_iter()
        .zip(pred)
        .map(|(g, p)| sentence_graph_prf(g, p, labelled, matching))
        .reduce(Prf::zero, |a, b| a + b))
}
