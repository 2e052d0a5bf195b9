use super::{EvalError, Result};

/// Substitution, deletion and insertion counts of a minimum-cost alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EditCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

impl std::ops::AddAssign for EditCounts {
    fn add_assign(&mut self, o: Self) {
        self.substitutions += o.substitutions;
        self.deletions += o.deletions;
        self.insertions += o.insertions;
    }
}

/// Levenshtein alignment of `hyp` against `reference`. Among minimum-cost
/// alignments the one with the fewest insertions plus deletions is chosen, so
/// swapping the two sequences swaps insertions and deletions and keeps the
/// substitution count.
pub fn edit_counts<T: PartialEq>(reference: &[T], hyp: &[T]) -> EditCounts {
    let (n, m) = (reference.len(), hyp.len());
    let w = m + 1;
    // (errors, insertions + deletions), compared lexicographically.
    let mut d = vec![(0usize, 0usize); (n + 1) * w];
    for i in 0..=n {
        d[i * w] = (i, i);
    }
    for (j, cell) in d.iter_mut().take(w).enumerate() {
        *cell = (j, j);
    }
    let diag = |d: &[(usize, usize)], i: usize, j: usize| {
        let (e, g) = d[(i - 1) * w + j - 1];
        (e + usize::from(reference[i - 1] != hyp[j - 1]), g)
    };
    let gap = |(e, g): (usize, usize)| (e + 1, g + 1);
    for i in 1..=n {
        for j in 1..=m {
            d[i * w + j] = diag(&d, i, j).min(gap(d[(i - 1) * w + j])).min(gap(d[i * w + j - 1]));
        }
    }
    let mut c = EditCounts::default();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 && here == diag(&d, i, j) {
            c.substitutions += usize::from(reference[i - 1] != hyp[j - 1]);
            i -= 1;
            j -= 1;
        } else if i > 0 && here == gap(d[(i - 1) * w + j]) {
            c.deletions += 1;
            i -= 1;
        } else {
            c.insertions += 1;
            j -= 1;
        }
    }
    c
}

/// Word error rate in percent.
pub fn wer<T: PartialEq>(reference: &[T], hyp: &[T]) -> Result<f64> {
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    Ok(100.0 * edit_counts(reference, hyp).errors() as f64 / reference.len() as f64)
}

/// Pooled WER over many utterances: total errors over total reference words.
pub fn corpus_wer<'a, T: PartialEq + 'a, I>(pairs: I) -> Result<f64>
where
    I: IntoIterator<Item = (&'a [T], &'a [T])>,
{
    let (mut errors, mut words) = (0usize, 0usize);
    for (r, h) in pairs {
        if r.is_empty() {
            return Err(EvalError::EmptyReference);
        }
        errors += edit_counts(r, h).errors();
        words += r.len();
    }
    if words == 0 {
        return Err(EvalError::EmptyReference);
    }
    Ok(100.0 * errors as f64 / words as f64)
}
