//! Ranking metrics on a single user.

use crate::{ItemSet, SparseView};

/// `2^rating - 1`.
pub fn gain(rating: f64) -> f64 {
    rating.exp2() - 1.0
}

/// Discounted cumulative gain of `ranked` (positions start at 1).
pub fn dcg(row: SparseView<'_>, ranked: &[usize]) -> f64 {
    ranked
        .iter()
        .enumerate()
        .map(|(j, &i)| gain(row.get(i)) / (j as f64 + 2.0).log2())
        .sum()
}

/// DCG of the best possible ordering of the user's items inside the restriction.
fn ideal_dcg(row: SparseView<'_>, n: usize, in_restriction: impl Fn(usize) -> bool) -> f64 {
    let mut gains: Vec<f64> = row.iter().filter(|&(i, _)| in_restriction(i)).map(|(_, r)| gain(r)).collect();
    gains.sort_by(|a, b| b.total_cmp(a));
    gains
        .iter()
        .take(n)
        .enumerate()
        .map(|(j, g)| g / (j as f64 + 2.0).log2())
        .sum()
}

/// NDCG@n with the ideal ordering taken over `restriction`; 0 when the user
/// has no positive gain there.
pub fn ndcg_at(row: SparseView<'_>, ranked: &[usize], n: usize, restriction: &ItemSet) -> f64 {
    ndcg_with(row, ranked, n, |i| restriction.contains(i))
}

pub(crate) fn ndcg_with(row: SparseView<'_>, ranked: &[usize], n: usize, in_restriction: impl Fn(usize) -> bool) -> f64 {
    let ideal = ideal_dcg(row, n, in_restriction);
    if ideal <= 0.0 {
        return 0.0;
    }
    let top = &ranked[..ranked.len().min(n)];
    dcg(row, top) / ideal
}

/// Precision and recall of the first `n` recommendations against the
/// ascending `relevant` items. Precision divides by the returned length.
pub fn precision_recall_at(relevant: &[usize], recommended: &[usize], n: usize) -> (f64, f64) {
    let top = &recommended[..recommended.len().min(n)];
    let hits = top.iter().filter(|i| relevant.binary_search(i).is_ok()).count() as f64;
    let precision = if top.is_empty() { 0.0 } else { hits / top.len() as f64 };
    let recall = if relevant.is_empty() { 0.0 } else { hits / relevant.len() as f64 };
    (precision, recall)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SparseVec;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gains() {
        assert_eq!(gain(0.0), 0.0);
        assert_eq!(gain(5.0), 31.0);
        assert_abs_diff_eq!(gain(4.5), 21.627416997969522, epsilon = 1e-12);
    }

    #[test]
    fn dcg_and_ndcg() {
        let row = SparseVec::from_pairs([(0, 5.0), (1, 3.0)]);
        let fwd = dcg(row.view(), &[0, 1]);
        let rev = dcg(row.view(), &[1, 0]);
        assert_abs_diff_eq!(fwd, 31.0 + 7.0 / 3f64.log2(), epsilon = 1e-12);
        assert_abs_diff_eq!(fwd, 35.4165, epsilon = 1e-4);
        assert_abs_diff_eq!(rev, 26.558, epsilon = 1e-3);
        assert_eq!(dcg(row.view(), &[2, 3]), 0.0);
        let all = ItemSet::full(4);
        assert_abs_diff_eq!(ndcg_at(row.view(), &[0, 1], 2, &all), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ndcg_at(row.view(), &[1, 0], 2, &all), 0.7499, epsilon = 1e-4);
        assert_eq!(ndcg_at(row.view(), &[2, 3], 2, &ItemSet::from_items(4, [2, 3])), 0.0);
    }

    #[test]
    fn precision_recall() {
        let relevant: Vec<usize> = (0..8).collect();
        let recs = [0, 1, 20, 21, 22, 23, 24, 25, 26, 27];
        assert_eq!(precision_recall_at(&relevant, &recs, 10), (0.2, 0.25));
        assert_eq!(precision_recall_at(&relevant, &[30, 31], 10), (0.0, 0.0));
        assert_eq!(precision_recall_at(&relevant, &relevant, 8), (1.0, 1.0));
        assert_eq!(precision_recall_at(&[], &[1], 1), (0.0, 0.0));
    }
}
