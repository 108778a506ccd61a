use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;

use rayon::prelude::*;

use super::{check_sentence_count, Accuracy, MetricError, Prf};
use crate::scalar::{mean, Scalar};
use crate::tasks::{EntitySpan, EntityType};

/// Token-level accuracy over aligned tag sequences.
pub fn pos_accuracy<T: PartialEq + Sync>(
    gold: &[Vec<T>],
    pred: &[Vec<T>],
) -> Result<Accuracy, MetricError> {
    check_sentence_count(gold.len(), pred.len())?;
    gold.par_iter()
        .zip(pred)
        .enumerate()
        .map(|(index, (g, p))| {
            if g.len() != p.len() {
                return Err(MetricError::Alignment {
                    index,
                    gold: g.len(),
                    pred: p.len(),
                });
            }
            Ok(Accuracy {
                correct: g.iter().zip(p).filter(|(a, b)| a == b).count() as u64,
                total: g.len() as u64,
            })
        })
        .try_reduce(Accuracy::default, |a, b| Ok(a + b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NerScores<S> {
    pub micro: Prf<S>,
    pub per_type: BTreeMap<EntityType, Prf<S>>,
}

/// Strict span F1: a prediction counts only if start, end and type all match
/// a gold entity of the same sentence. Duplicate spans count once.
pub fn ner_strict_f1<S: Scalar>(
    gold: &[Vec<EntitySpan>],
    pred: &[Vec<EntitySpan>],
) -> Result<NerScores<S>, MetricError> {
    check_sentence_count(gold.len(), pred.len())?;
    let counts = gold
        .par_iter()
        .zip(pred)
        .map(|(g, p)| {
            let g: BTreeSet<&EntitySpan> = g.iter().collect();
            let p: BTreeSet<&EntitySpan> = p.iter().collect();
            let mut counts = BTreeMap::<EntityType, [u64; 3]>::new();
            for s in &g {
                counts.entry(s.label).or_default()[2] += 1;
            }
            for s in &p {
                let c = counts.entry(s.label).or_default();
                c[1] += 1;
                if g.contains(s) {
                    c[0] += 1;
                }
            }
            counts
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (k, v) in b {
                let e = a.entry(k).or_insert([0; 3]);
                for i in 0..3 {
                    e[i] += v[i];
                }
            }
            a
        });
    let per_type: BTreeMap<EntityType, Prf<S>> = EntityType::ALL
        .into_iter()
        .map(|t| {
            let [tp, p, g] = counts.get(&t).copied().unwrap_or_default();
            (t, Prf::from_counts(tp, p, g))
        })
        .collect();
    Ok(NerScores {
        micro: per_type.values().cloned().sum(),
        per_type,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores<L, S> {
    pub per_class: Vec<(L, Prf<S>)>,
    pub macro_f1: S,
}

/// Unweighted mean of per-class F1 over `classes`.
pub fn macro_f1<L: PartialEq + Clone + Display, S: Scalar>(
    gold: &[L],
    pred: &[L],
    classes: &[L],
) -> Result<ClassScores<L, S>, MetricError> {
    check_sentence_count(gold.len(), pred.len())?;
    let class_of = |l: &L| {
        classes
            .iter()
            .position(|c| c == l)
            .ok_or_else(|| MetricError::UnknownLabel(l.to_string()))
    };
    let mut counts = vec![[0u64; 3]; classes.len()];
    for (g, p) in gold.iter().zip(pred) {
        let (g, p) = (class_of(g)?, class_of(p)?);
        counts[g][2] += 1;
        counts[p][1] += 1;
        if g == p {
            counts[g][0] += 1;
        }
    }
    let per_class: Vec<(L, Prf<S>)> = classes
        .iter()
        .zip(counts)
        .map(|(c, [tp, p, g])| (c.clone(), Prf::from_counts(tp, p, g)))
        .collect();
    let f1s: Vec<S> = per_class.iter().map(|(_, prf)| prf.f1()).collect();
    let macro_f1 = if f1s.is_empty() {
        S::zero()
    } else {
        mean(&f1s)
    };
    Ok(ClassScores {
        per_class,
        macro_f1,
    })
}
