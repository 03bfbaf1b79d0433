//! Levenshtein alignment with substitution/deletion/insertion counts.

use serde::Serialize;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ErrorBreakdown {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_length: usize,
}

impl ErrorBreakdown {
    pub fn edits(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// `(S + D + I) / N`; undefined for an empty reference. May exceed 1.
    pub fn rate(&self) -> Option<f64> {
        (self.reference_length > 0).then(|| self.edits() as f64 / self.reference_length as f64)
    }
}

impl std::ops::Add for ErrorBreakdown {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            substitutions: self.substitutions + o.substitutions,
            deletions: self.deletions + o.deletions,
            insertions: self.insertions + o.insertions,
            reference_length: self.reference_length + o.reference_length,
        }
    }
}

impl std::iter::Sum for ErrorBreakdown {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

/// Minimal unit-cost alignment. Among minimal alignments the one with the
/// fewest insertions wins, then the one with the fewest deletions.
pub fn align<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> ErrorBreakdown {
    // (edits, insertions, deletions), compared lexicographically
    type Cost = (usize, usize, usize);
    let n = hypothesis.len();
    let mut prev: Vec<Cost> = (0..=n).map(|j| (j, j, 0)).collect();
    let mut cur: Vec<Cost> = vec![(0, 0, 0); n + 1];
    for (i, r) in reference.iter().enumerate() {
        cur[0] = (i + 1, 0, i + 1);
        for (j, h) in hypothesis.iter().enumerate() {
            let (e, ins, del) = prev[j];
            let diag = if r == h { (e, ins, del) } else { (e + 1, ins, del) };
            let (e, ins, del) = prev[j + 1];
            let deletion = (e + 1, ins, del + 1);
            let (e, ins, del) = cur[j];
            let insertion = (e + 1, ins + 1, del);
            cur[j + 1] = diag.min(deletion).min(insertion);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (edits, insertions, deletions) = prev[n];
    ErrorBreakdown {
        substitutions: edits - insertions - deletions,
        deletions,
        insertions,
        reference_length: reference.len(),
    }
}

pub fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

pub fn word_errors(reference: &str, hypothesis: &str) -> ErrorBreakdown {
    align(&words(reference), &words(hypothesis))
}

pub fn char_errors(reference: &str, hypothesis: &str) -> ErrorBreakdown {
    let r: Vec<char> = reference.chars().collect();
    let h: Vec<char> = hypothesis.chars().collect();
    align(&r, &h)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorpusReport {
    pub rows: Vec<ErrorBreakdown>,
    pub aggregate: ErrorBreakdown,
}

/// Per-utterance breakdowns and their sum.
pub fn corpus_report<T: PartialEq>(pairs: &[(Vec<T>, Vec<T>)]) -> CorpusReport {
    let rows: Vec<ErrorBreakdown> = pairs.iter().map(|(r, h)| align(r, h)).collect();
    let aggregate = rows.iter().copied().sum();
    CorpusReport { rows, aggregate }
}

/// Word and character reports for text pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TextReport {
    pub word: CorpusReport,
    pub char: CorpusReport,
}

pub fn text_report<S: AsRef<str>>(pairs: &[(S, S)]) -> TextReport {
    let word_pairs: Vec<(Vec<&str>, Vec<&str>)> = pairs
        .iter()
        .map(|(r, h)| (words(r.as_ref()), words(h.as_ref())))
        .collect();
    let char_pairs: Vec<(Vec<char>, Vec<char>)> = pairs
        .iter()
        .map(|(r, h)| (r.as_ref().chars().collect(), h.as_ref().chars().collect()))
        .collect();
    TextReport {
        word: corpus_report(&word_pairs),
        char: corpus_report(&char_pairs),
    }
}

pub const CSV_HEADER: &str = "utterance_id,ref_len,S,D,I,wer,cer";

pub fn format_rate(rate: Option<f64>) -> String {
    rate.map(|r| format!("{r:.6}")).unwrap_or_default()
}

/// One `utterance_id,ref_len,S,D,I,wer,cer` row; counts are word-level.
pub fn csv_row(id: &str, word: &ErrorBreakdown, char: &ErrorBreakdown) -> String {
    format!(
        "{id},{},{},{},{},{},{}",
        word.reference_length,
        word.substitutions,
        word.deletions,
        word.insertions,
        format_rate(word.rate()),
        format_rate(char.rate()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_sentence() {
        let e = word_errors("the cat sat", "the cat sat");
        assert_eq!(e.edits(), 0);
        assert_eq!(e.rate(), Some(0.0));
    }

    #[test]
    fn one_deletion() {
        let e = word_errors("the cat sat", "the cat");
        assert_eq!((e.substitutions, e.deletions, e.insertions), (0, 1, 0));
        assert!((e.rate().unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn swapped_pair_prefers_substitutions() {
        let e = char_errors("ab", "ba");
        assert_eq!(e.edits(), 2);
        assert_eq!((e.substitutions, e.deletions, e.insertions), (2, 0, 0));
        assert_eq!(e.rate(), Some(1.0));
    }

    #[test]
    fn empty_reference() {
        let e = word_errors("", "uh oh");
        assert_eq!(e.insertions, 2);
        assert_eq!(e.rate(), None);
        assert_eq!(format_rate(e.rate()), "");
    }

    #[test]
    fn insertion_heavy_rate_exceeds_one() {
        let e = word_errors("a", "a b c");
        assert_eq!(e.insertions, 2);
        assert_eq!(e.rate(), Some(2.0));
    }

    #[test]
    fn corpus_aggregates() {
        let r = text_report(&[("a b", "a"), ("c d", "d")]);
        assert_eq!(r.word.aggregate.rate(), Some(0.5));
        let single = text_report(&[("a b c", "a x c")]);
        assert_eq!(single.word.aggregate, single.word.rows[0]);
        let weighted = text_report(&[("a", "b"), ("a b c d e f g h i", "a b c d e f g h i")]);
        assert!((weighted.word.aggregate.rate().unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let w = word_errors("the cat sat", "the cat");
        let c = char_errors("the cat sat", "the cat");
        assert_eq!(csv_row("u0", &w, &c), "u0,3,0,1,0,0.333333,0.363636");
    }

    /// Plain Levenshtein distance by full recursion with memoization.
    fn oracle(a: &[u8], b: &[u8]) -> usize {
        fn go(a: &[u8], b: &[u8], memo: &mut std::collections::HashMap<(usize, usize), usize>) -> usize {
            if a.is_empty() {
                return b.len();
            }
            if b.is_empty() {
                return a.len();
            }
            if let Some(&v) = memo.get(&(a.len(), b.len())) {
                return v;
            }
            let sub = go(&a[1..], &b[1..], memo) + usize::from(a[0] != b[0]);
            let del = go(&a[1..], b, memo) + 1;
            let ins = go(a, &b[1..], memo) + 1;
            let v = sub.min(del).min(ins);
            memo.insert((a.len(), b.len()), v);
            v
        }
        go(a, b, &mut Default::default())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn matches_recursive_oracle(
            a in prop::collection::vec(0u8..3, 0..=8),
            b in prop::collection::vec(0u8..3, 0..=8),
        ) {
            let e = align(&a, &b);
            prop_assert_eq!(e.edits(), oracle(&a, &b));
            // a minimal alignment needs at least |len difference| indels of the right kind
            prop_assert!(e.insertions >= b.len().saturating_sub(a.len()));
            prop_assert!(e.deletions >= a.len().saturating_sub(b.len()));
            prop_assert_eq!(e.insertions + a.len(), e.deletions + b.len());
        }

        #[test]
        fn triangle_inequality(
            a in prop::collection::vec(0u8..3, 0..8),
            b in prop::collection::vec(0u8..3, 0..8),
            c in prop::collection::vec(0u8..3, 0..8),
        ) {
            prop_assert!(align(&a, &c).edits() <= align(&a, &b).edits() + align(&b, &c).edits());
        }
    }
}
