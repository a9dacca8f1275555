//! Residual scores and the per-dimension top-k selection.
//!
//! A residual's score is its six-axis sensitivity divided by the square of its
//! scalar uncertainty. Each dimension is ranked independently and the
//! selected set is the union of the per-dimension heads.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use crate::residual::{ResidualKind, SensitivityVector};
use crate::{Error, Result, Vec6};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionParams {
    /// Stop once this many residuals were taken in a dimension.
    pub max_per_dim: usize,
    /// Stop once a dimension's score falls below this fraction of its maximum.
    pub score_ratio_stop: f64,
    /// Drop residuals below this fraction of the maximum in every dimension
    /// before ranking. Zero disables the filter.
    pub prefilter_ratio: f64,
}

impl SelectionParams {
    pub fn new(max_per_dim: usize, score_ratio_stop: f64, prefilter_ratio: f64) -> Result<Self> {
        if max_per_dim == 0 {
            return Err(Error::InvalidInput("max_per_dim must be at least 1".into()));
        }
        for (name, r) in [("score_ratio_stop", score_ratio_stop), ("prefilter_ratio", prefilter_ratio)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidInput(format!("{name} must lie in [0, 1], got {r}")));
            }
        }
        Ok(Self { max_per_dim, score_ratio_stop, prefilter_ratio })
    }

    pub fn without_prefilter(self) -> Self {
        Self { prefilter_ratio: 0.0, ..self }
    }
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self { max_per_dim: 200, score_ratio_stop: 0.10, prefilter_ratio: 0.60 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredResidual {
    pub id: usize,
    pub kind: ResidualKind,
    pub sensitivity: SensitivityVector,
    pub phi: f64,
    pub score: Vec6,
}

impl ScoredResidual {
    pub fn new(id: usize, kind: ResidualKind, sensitivity: SensitivityVector, phi: f64) -> Result<Self> {
        let score = score_residual(&sensitivity, phi)?;
        Ok(Self { id, kind, sensitivity, phi, score })
    }
}

/// `sensitivity / phi^2`, elementwise.
pub fn score_residual(sens: &SensitivityVector, phi: f64) -> Result<Vec6> {
    if !(phi > 0.0) {
        return Err(Error::NonPositiveUncertainty(phi));
    }
    Ok(sens.values() / (phi * phi))
}

/// Per-dimension maxima, zero for an empty list.
pub fn dimension_maxima(scored: &[ScoredResidual]) -> Vec6 {
    scored.iter().fold(Vec6::zeros(), |acc, r| acc.sup(&r.score))
}

fn passes_prefilter(score: &Vec6, maxima: &Vec6, ratio: f64) -> bool {
    if maxima.iter().all(|m| *m <= 0.0) {
        return true;
    }
    (0..6).any(|j| maxima[j] > 0.0 && score[j] >= ratio * maxima[j])
}

/// Keeps residuals that reach `prefilter_ratio` of the maximum in at least
/// one dimension. Input order is preserved.
pub fn prefilter(scored: &[ScoredResidual], params: &SelectionParams) -> Vec<ScoredResidual> {
    let maxima = dimension_maxima(scored);
    scored
        .iter()
        .filter(|r| passes_prefilter(&r.score, &maxima, params.prefilter_ratio))
        .copied()
        .collect()
}

/// Descending score, then ascending id.
fn rank_order(a: (f64, usize), b: (f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// For each dimension, the ids of residuals eligible under the ratio stop
/// rule, best first, truncated to `limit`. Zero scores are never eligible.
pub fn per_dimension_ranking(scored: &[ScoredResidual], stop_ratio: f64, limit: usize) -> [Vec<usize>; 6] {
    let maxima = dimension_maxima(scored);
    let threshold = maxima * stop_ratio;
    let mut cand: [Vec<(f64, usize)>; 6] = Default::default();
    for r in scored {
        for j in 0..6 {
            let s = r.score[j];
            if s > 0.0 && s >= threshold[j] {
                cand[j].push((s, r.id));
            }
        }
    }
    cand.map(|mut c| {
        if c.len() > limit {
            if limit == 0 {
                c.clear();
            } else {
                c.select_nth_unstable_by(limit - 1, |a, b| rank_order(*a, *b));
                c.truncate(limit);
            }
        }
        c.sort_unstable_by(|a, b| rank_order(*a, *b));
        c.into_iter().map(|(_, id)| id).collect()
    })
}

/// Union of the first `take` ids of every dimension.
pub fn union_of_heads(ranking: &[Vec<usize>; 6], take: usize) -> BTreeSet<usize> {
    ranking.iter().flat_map(|ids| ids.iter().take(take).copied()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Ids admitted through each dimension, best first.
    pub per_dimension: [Vec<usize>; 6],
    pub selected: BTreeSet<usize>,
}

/// Prefilter, rank each dimension, stop at `max_per_dim` or the ratio rule,
/// and union. Deterministic for identical inputs.
pub fn select_detailed(scored: &[ScoredResidual], params: &SelectionParams) -> Selection {
    let kept;
    let pool = if params.prefilter_ratio > 0.0 {
        kept = prefilter(scored, params);
        &kept[..]
    } else {
        scored
    };
    let per_dimension = per_dimension_ranking(pool, params.score_ratio_stop, params.max_per_dim);
    let selected = union_of_heads(&per_dimension, params.max_per_dim);
    Selection { per_dimension, selected }
}

pub fn select(scored: &[ScoredResidual], params: &SelectionParams) -> BTreeSet<usize> {
    select_detailed(scored, params).selected
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scored(id: usize, score: [f64; 6]) -> ScoredResidual {
        let sens = SensitivityVector::new(Vec6::from(score)).unwrap();
        ScoredResidual::new(id, ResidualKind::Plane, sens, 1.0).unwrap()
    }

    fn random_scored(rng: &mut ChaCha8Rng, n: usize) -> Vec<ScoredResidual> {
        (0..n)
            .map(|id| {
                let s = Vec6::from_fn(|_, _| if rng.gen_bool(0.05) { 0.0 } else { rng.gen_range(0.0..1.0f64).powi(3) });
                let kind = if rng.gen_bool(0.5) { ResidualKind::Plane } else { ResidualKind::Line };
                ScoredResidual::new(id, kind, SensitivityVector::new(s).unwrap(), rng.gen_range(0.1..2.0)).unwrap()
            })
            .collect()
    }

    /// Full sort of every dimension followed by a linear walk.
    fn naive_select(scored: &[ScoredResidual], params: &SelectionParams) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for j in 0..6 {
            let max = scored.iter().map(|r| r.score[j]).fold(0.0, f64::max);
            let mut order: Vec<&ScoredResidual> = scored.iter().collect();
            order.sort_by(|a, b| b.score[j].partial_cmp(&a.score[j]).unwrap().then(a.id.cmp(&b.id)));
            for (taken, r) in order.into_iter().enumerate() {
                if taken == params.max_per_dim || r.score[j] <= 0.0 || r.score[j] < params.score_ratio_stop * max {
                    break;
                }
                out.insert(r.id);
            }
        }
        out
    }

    #[test]
    fn params_validation() {
        assert!(SelectionParams::new(0, 0.1, 0.6).is_err());
        assert!(SelectionParams::new(1, 1.1, 0.6).is_err());
        assert!(SelectionParams::new(1, 0.1, -0.1).is_err());
        assert!(SelectionParams::new(1, 0.0, 0.0).is_ok());
        let d = SelectionParams::default();
        assert_eq!((d.max_per_dim, d.score_ratio_stop, d.prefilter_ratio), (200, 0.10, 0.60));
    }

    #[test]
    fn score_examples() {
        let ones = SensitivityVector::new(Vec6::repeat(1.0)).unwrap();
        assert_eq!(score_residual(&ones, 1.0).unwrap(), Vec6::repeat(1.0));
        let s = SensitivityVector::new(Vec6::new(0.0, 1.0, 0.0, 0.0, 0.0, 1.0)).unwrap();
        assert_eq!(score_residual(&s, 0.5).unwrap(), Vec6::new(0.0, 4.0, 0.0, 0.0, 0.0, 4.0));
        let a = score_residual(&ones, 0.3).unwrap();
        let b = score_residual(&ones, 0.15).unwrap();
        assert!((b - a * 4.0).amax() < 1e-12);
        assert_eq!(score_residual(&ones, 0.0), Err(Error::NonPositiveUncertainty(0.0)));
        assert!(score_residual(&ones, -1.0).is_err());
    }

    #[test]
    fn prefilter_examples() {
        let params = SelectionParams::default();
        let one = [scored(0, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0])];
        assert_eq!(prefilter(&one, &params).len(), 1);
        let two = [scored(0, [1.0; 6]), scored(1, [0.5; 6])];
        let kept = prefilter(&two, &params);
        assert_eq!(kept.iter().map(|r| r.id).collect::<Vec<_>>(), vec![0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let many = random_scored(&mut rng, 500);
        assert_eq!(prefilter(&many, &params.without_prefilter()), many);
    }

    #[test]
    fn stop_ratio_example() {
        let list: Vec<ScoredResidual> = [10.0, 9.0, 1.0, 0.5]
            .iter()
            .enumerate()
            .map(|(i, s)| scored(i, [*s, 0.0, 0.0, 0.0, 0.0, 0.0]))
            .collect();
        let params = SelectionParams::new(200, 0.10, 0.0).unwrap();
        assert_eq!(select(&list, &params), BTreeSet::from([0, 1, 2]));
    }

    #[test]
    fn single_slot_selects_argmaxes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let list = random_scored(&mut rng, 1000);
        let params = SelectionParams::new(1, 0.1, 0.0).unwrap();
        let sel = select(&list, &params);
        assert!(sel.len() <= 6);
        for j in 0..6 {
            let best = list.iter().max_by(|a, b| a.score[j].total_cmp(&b.score[j]).then(b.id.cmp(&a.id))).unwrap();
            assert!(sel.contains(&best.id));
        }
    }

    #[test]
    fn ties_break_by_ascending_id() {
        let list: Vec<ScoredResidual> = (0..5).rev().map(|i| scored(i, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0])).collect();
        let params = SelectionParams::new(2, 0.1, 0.0).unwrap();
        assert_eq!(select(&list, &params), BTreeSet::from([0, 1]));
    }

    #[test]
    fn matches_naive_full_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let list = random_scored(&mut rng, 10_000);
        for (m, stop) in [(200, 0.10), (1, 0.5), (5000, 0.0), (50, 0.9)] {
            let params = SelectionParams::new(m, stop, 0.0).unwrap();
            assert_eq!(select(&list, &params), naive_select(&list, &params));
        }
    }

    #[test]
    fn empty_and_all_zero_inputs() {
        let params = SelectionParams::default();
        assert!(select(&[], &params).is_empty());
        let zeros = [scored(0, [0.0; 6]), scored(1, [0.0; 6])];
        assert_eq!(prefilter(&zeros, &params).len(), 2);
        assert!(select(&zeros, &params).is_empty());
    }

    #[test]
    fn low_prefilter_does_not_change_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let list = random_scored(&mut rng, 2000);
        let with = SelectionParams::new(100, 0.2, 0.2).unwrap();
        let without = with.without_prefilter();
        assert_eq!(select(&list, &with), select(&list, &without));
    }

    fn scored_strategy() -> impl Strategy<Value = Vec<ScoredResidual>> {
        prop::collection::vec(prop::array::uniform6(0.0..10.0f64), 1..60).prop_map(|rows| {
            rows.into_iter().enumerate().map(|(i, s)| scored(i, s)).collect()
        })
    }

    proptest! {
        #[test]
        fn deterministic_and_order_independent(list in scored_strategy(), m in 1usize..10, stop in 0.0..1.0f64) {
            let params = SelectionParams::new(m, stop, 0.3).unwrap();
            let a = select(&list, &params);
            let mut rev = list.clone();
            rev.reverse();
            prop_assert_eq!(&a, &select(&list, &params));
            prop_assert_eq!(a, select(&rev, &params));
        }

        #[test]
        fn per_dimension_cap_and_union_bound(list in scored_strategy(), m in 1usize..10, stop in 0.0..1.0f64) {
            let params = SelectionParams::new(m, stop, 0.0).unwrap();
            let detail = select_detailed(&list, &params);
            let total: usize = detail.per_dimension.iter().map(|d| d.len()).sum();
            prop_assert!(detail.per_dimension.iter().all(|d| d.len() <= m));
            prop_assert!(detail.selected.len() <= total);
            let mut seen = BTreeSet::new();
            let disjoint = detail.per_dimension.iter().flatten().all(|id| seen.insert(*id));
            prop_assert_eq!(detail.selected.len() == total, disjoint);
        }

        #[test]
        fn raising_a_score_keeps_it_selected(
            list in scored_strategy(), m in 1usize..10, stop in 0.0..1.0f64,
            pick in any::<prop::sample::Index>(), dim in 0usize..6, bump in 0.01..5.0f64,
        ) {
            let params = SelectionParams::new(m, stop, 0.0).unwrap();
            let i = pick.index(list.len());
            let before = select(&list, &params);
            prop_assume!(before.contains(&i));
            let mut raised = list.clone();
            raised[i].score[dim] += bump;
            let tied = raised.iter().enumerate().any(|(k, r)| k != i && r.score[dim] == raised[i].score[dim]);
            prop_assume!(!tied);
            prop_assert!(select(&raised, &params).contains(&i));
        }

        #[test]
        fn prefilter_preserves_order_and_keeps_maxima(list in scored_strategy(), ratio in 0.0..1.0f64) {
            let params = SelectionParams::new(10, 0.1, ratio).unwrap();
            let kept = prefilter(&list, &params);
            let ids: Vec<usize> = kept.iter().map(|r| r.id).collect();
            prop_assert!(ids.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(dimension_maxima(&kept), dimension_maxima(&list));
        }
    }
}
