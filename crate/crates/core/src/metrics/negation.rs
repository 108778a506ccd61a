use std::collections::BTreeSet;

use rayon::prelude::*;

use super::{check_sentence_count, multiset_matches, MetricError, Prf};
use crate::scalar::Scalar;
use crate::tasks::NegationInstance;

#[derive(Debug, Clone, PartialEq)]
pub struct NegationScores<S> {
    /// Exact cue token sets.
    pub cue: Prf<S>,
    /// Tokens in the union of scopes, per sentence.
    pub scope_tokens: Prf<S>,
    /// Cue and scope both exact.
    pub full: Prf<S>,
}

pub fn negation_metrics<S: Scalar>(
    gold: &[Vec<NegationInstance>],
    pred: &[Vec<NegationInstance>],
) -> Result<NegationScores<S>, MetricError> {
    check_sentence_count(gold.len(), pred.len())?;
    let zero = || NegationScores {
        cue: Prf::zero(),
        scope_tokens: Prf::zero(),
        full: Prf::zero(),
    };
    Ok(gold
        .par_iter()
        .zip(pred)
        .map(|(g, p)| {
            let (ng, np) = (g.len() as u64, p.len() as u64);
            let cue_tp = multiset_matches(g.iter().map(|n| &n.cue), p.iter().map(|n| &n.cue));
            let full_tp = multiset_matches(
                g.iter().map(|n| (&n.cue, &n.scope)),
                p.iter().map(|n| (&n.cue, &n.scope)),
            );
            let gs: BTreeSet<usize> = g.iter().flat_map(|n| n.scope.iter().copied()).collect();
            let ps: BTreeSet<usize> = p.iter().flat_map(|n| n.scope.iter().copied()).collect();
            let st_tp = gs.intersection(&ps).count() as u64;
            NegationScores {
                cue: Prf::from_counts(cue_tp, np, ng),
                scope_tokens: Prf::from_counts(st_tp, ps.len() as u64, gs.len() as u64),
                full: Prf::from_counts(full_tp, np, ng),
            }
        })
        .reduce(zero, |a, b| NegationScores {
            cue: a.cue + b.cue,
            scope_tokens: a.scope_tokens + b.scope_tokens,
            full: a.full + b.full,
        }))
}
