use std::ops::Range;

use num_traits::Float;

/// Piece ids with their byte ranges, plus the path score.
pub type Segmentation<F> = (Vec<(usize, Range<usize>)>, F);

/// Best-scoring segmentation of `text` into pieces known to `lookup`.
///
/// `lookup` maps a substring to `(piece id, log-probability)`; pieces with a
/// log-probability of negative infinity are treated as absent. Returns the
/// pieces as `(id, byte range)` in order together with the summed score, or
/// `None` when no segmentation exists. Scores accumulate left to right and
/// ties keep the earlier-found path, so the result is deterministic.
pub fn viterbi<F, L>(text: &str, max_piece_chars: usize, lookup: L) -> Option<Segmentation<F>>
where
    F: Float,
    L: Fn(&str) -> Option<(usize, F)>,
{
    let bounds: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect();
    let n = bounds.len() - 1;
    if n == 0 {
        return Some((Vec::new(), F::zero()));
    }

    // best[j] = (score, start position, piece id) of the best path ending at j.
    let mut best: Vec<Option<(F, usize, usize)>> = vec![None; n + 1];
    best[0] = Some((F::zero(), 0, usize::MAX));
    for i in 0..n {
        let Some((score, _, _)) = best[i] else {
            continue;
        };
        for j in (i + 1)..=(i + max_piece_chars).min(n) {
            let Some((id, lp)) = lookup(&text[bounds[i]..bounds[j]]) else {
                continue;
            };
            if lp == F::neg_infinity() {
                continue;
            }
            let cand = score + lp;
            if best[j].is_none_or(|(b, _, _)| cand > b) {
                best[j] = Some((cand, i, id));
            }
        }
    }

    let (total, _, _) = best[n]?;
    let mut path = Vec::new();
    let mut j = n;
    while j > 0 {
        let (_, i, id) = best[j].expect("back-pointer chain is complete");
        path.push((id, bounds[i]..bounds[j]));
        j = i;
    }
    path.reverse();
    Some((path, total))
}
