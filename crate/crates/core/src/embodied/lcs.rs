/// Length of a longest common subsequence, in `O(|a|·|b|)` time and
/// `O(|b|)` space.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
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

/// LCS length over the longer length; two empty programs score 1.
pub fn lcs_score<T: PartialEq>(predicted: &[T], gold: &[T]) -> f64 {
    let longest = predicted.len().max(gold.len());
    if longest == 0 {
        return 1.0;
    }
    lcs_len(predicted, gold) as f64 / longest as f64
}
