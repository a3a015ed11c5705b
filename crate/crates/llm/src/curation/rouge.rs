//! ROUGE-L F1 on normalized tokens.

/// Label threshold: a response is hallucinated when its ROUGE-L F1 against
/// the reference is strictly below this.
pub const ROUGE_THRESHOLD: f64 = 0.3;

/// Lowercases, drops every character that is neither alphanumeric nor
/// whitespace, and splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let cleaned: String =
        text.to_lowercase().chars().filter(|c| c.is_alphanumeric() || c.is_whitespace()).collect();
    cleaned.split_whitespace().map(str::to_string).collect()
}

/// Length of the longest common subsequence, two-row dynamic program.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `2PR / (P + R)` with `P = LCS/|candidate|`, `R = LCS/|reference|`, which
/// equals `2 LCS / (|candidate| + |reference|)`.
pub fn rouge_l_f1(candidate: &str, reference: &str) -> f64 {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    let lcs = lcs_len(&c, &r);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / c.len() as f64;
    let rec = lcs as f64 / r.len() as f64;
    2.0 * p * rec / (p + rec)
}

/// 1 (hallucinated) iff `score < threshold`.
pub fn rouge_label(score: f64, threshold: f64) -> u8 {
    u8::from(score < threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_examples() {
        assert!((rouge_l_f1("the cat", "the cat sat") - 0.8).abs() < 1e-12);
        assert_eq!(rouge_l_f1("x", "x"), 1.0);
        assert_eq!(rouge_l_f1("a b", "c d"), 0.0);
        assert_eq!(rouge_l_f1("", "a"), 0.0);
        assert_eq!(rouge_l_f1("!!!", "a"), 0.0);
    }

    #[test]
    fn normalization() {
        assert_eq!(tokenize("Paris, France!  It's"), vec!["paris", "france", "its"]);
        assert_eq!(rouge_l_f1("PARIS.", "paris"), 1.0);
    }

    #[test]
    fn threshold_is_strict() {
        assert_eq!(rouge_label(0.29, ROUGE_THRESHOLD), 1);
        assert_eq!(rouge_label(0.30, ROUGE_THRESHOLD), 0);
    }
}
