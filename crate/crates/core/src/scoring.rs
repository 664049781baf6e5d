//! Late-interaction scoring kernels.
//!
//! For a query matrix `Q` and passage matrix `D`, `M_i = max_j Q_i · D_j`.
//! Vanilla late interaction sums every `M_i`. Focused scoring sums only the
//! `n_hat` largest query-side values and the `l_hat` largest fact-side values:
//!
//! ```text
//! S = top_{n_hat}{ M^Q_i } + top_{l_hat}{ M^F_i }
//! ```
//!
//! so different subsets of one long query can match different passages.
//! Similarities are computed in `f32`; sums are accumulated in `f64`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{EncodedQuery, TokenMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FocusParams {
    pub n_hat: usize,
    pub l_hat: usize,
}

impl Default for FocusParams {
    fn default() -> Self {
        Self { n_hat: 32, l_hat: 8 }
    }
}

impl FocusParams {
    /// Keeps every row; focused scoring then equals vanilla late interaction.
    pub const UNFOCUSED: FocusParams = FocusParams {
        n_hat: usize::MAX,
        l_hat: usize::MAX,
    };

    pub fn validate(&self) -> Result<()> {
        if self.n_hat == 0 {
            return Err(Error::Config("n_hat must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPassage {
    pub pid: String,
    pub score: f64,
    pub s_query: f64,
    pub s_fact: f64,
}

/// Query-side and fact-side partial scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocusedScore {
    pub s_query: f64,
    pub s_fact: f64,
}

impl FocusedScore {
    pub fn total(&self) -> f64 {
        self.s_query + self.s_fact
    }

    pub fn into_scored(self, pid: impl Into<String>) -> ScoredPassage {
        ScoredPassage {
            pid: pid.into(),
            score: self.total(),
            s_query: self.s_query,
            s_fact: self.s_fact,
        }
    }
}

/// Dot product with eight independent accumulators.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `M_i = max_j dot(Q_i, D_j)` for every row of `q`.
pub fn maxsim_rows(q: &TokenMatrix, d: &TokenMatrix) -> Result<Vec<f32>> {
    if q.dim() != d.dim() {
        return Err(Error::DimMismatch {
            expected: d.dim(),
            actual: q.dim(),
        });
    }
    if d.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    Ok(q.iter_rows()
        .map(|qr| {
            d.iter_rows()
                .map(|dr| dot(qr, dr))
                .fold(f32::NEG_INFINITY, f32::max)
        })
        .collect())
}

/// Sum of the `k` largest values (all of them when `k >= len`), largest first.
pub fn top_k_sum(values: &mut [f64], k: usize) -> f64 {
    values.sort_unstable_by(|a, b| b.total_cmp(a));
    values.iter().take(k).fold(0.0, |a, b| a + b)
}

/// Vanilla late interaction: every query and fact row contributes.
pub fn colbert_score(eq: &EncodedQuery, d: &TokenMatrix) -> Result<f64> {
    let mq = maxsim_rows(&eq.query_part, d)?;
    let mf = maxsim_rows(&eq.fact_part, d)?;
    Ok(mq.iter().chain(&mf).fold(0.0, |a, &m| a + f64::from(m)))
}

/// Focused late interaction.
pub fn focused_score(eq: &EncodedQuery, d: &TokenMatrix, fp: FocusParams) -> Result<FocusedScore> {
    focused_score_weighted(eq, d, fp, None)
}

/// Per-row multipliers applied to `M` before top-k selection.
///
/// Scaling a query row by `w > 0` scales its `M_i` by `w`, so this is the same
/// as re-weighting query token norms without storing non-unit rows.
#[derive(Debug, Clone, Copy)]
pub struct RowWeights<'a> {
    pub query: &'a [f64],
    pub facts: &'a [f64],
}

pub fn focused_score_weighted(
    eq: &EncodedQuery,
    d: &TokenMatrix,
    fp: FocusParams,
    weights: Option<RowWeights<'_>>,
) -> Result<FocusedScore> {
    let weighted = |m: Vec<f32>, w: Option<&[f64]>| -> Vec<f64> {
        match w {
            Some(w) => m.iter().zip(w).map(|(&m, w)| f64::from(m) * w).collect(),
            None => m.into_iter().map(f64::from).collect(),
        }
    };
    let mut mq = weighted(maxsim_rows(&eq.query_part, d)?, weights.map(|w| w.query));
    let mut mf = weighted(maxsim_rows(&eq.fact_part, d)?, weights.map(|w| w.facts));
    Ok(FocusedScore {
        s_query: top_k_sum(&mut mq, fp.n_hat),
        s_fact: top_k_sum(&mut mf, fp.l_hat),
    })
}

/// Scores many passages against one query; results match one-at-a-time calls.
pub fn focused_score_batch(
    eq: &EncodedQuery,
    docs: &[&TokenMatrix],
    fp: FocusParams,
) -> Result<Vec<FocusedScore>> {
    docs.par_iter().map(|d| focused_score(eq, d, fp)).collect()
}

/// Ranking order used everywhere: higher score first, then smaller pid.
pub fn rank_order(a: &ScoredPassage, b: &ScoredPassage) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.pid.cmp(&b.pid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f32]]) -> TokenMatrix {
        TokenMatrix::from_rows(rows[0].len(), rows).unwrap()
    }

    fn eq(q: TokenMatrix, f: TokenMatrix) -> EncodedQuery {
        EncodedQuery {
            query_part: q,
            fact_part: f,
        }
    }

    #[test]
    fn maxsim_examples() {
        let d = m(&[&[0.6, 0.8]]);
        let got = maxsim_rows(&m(&[&[1.0, 0.0], &[0.0, 1.0]]), &d).unwrap();
        assert!((got[0] - 0.6).abs() < 1e-6 && (got[1] - 0.8).abs() < 1e-6);

        let d = m(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        let same = maxsim_rows(&m(&[&[0.0, 0.0, 1.0]]), &d).unwrap();
        assert!((same[0] - 1.0).abs() < 1e-6);
        let orth = maxsim_rows(&m(&[&[1.0, 0.0, 0.0]]), &d).unwrap();
        assert!(orth[0].abs() < 1e-6);
    }

    #[test]
    fn maxsim_errors() {
        let d = TokenMatrix::empty(2);
        assert!(matches!(maxsim_rows(&m(&[&[1.0, 0.0]]), &d), Err(Error::EmptyMatrix)));
        let d3 = m(&[&[1.0, 0.0, 0.0]]);
        assert!(matches!(
            maxsim_rows(&m(&[&[1.0, 0.0]]), &d3),
            Err(Error::DimMismatch { .. })
        ));
    }

    /// Query rows e_0, e_1, e_2 against a passage built so M = [0.9, 0.2, 0.5].
    fn three_row_fixture() -> (EncodedQuery, TokenMatrix) {
        let s = |a: f32| (1.0 - a * a).sqrt();
        let q = m(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0], &[0.0, 0.0, 1.0, 0.0]]);
        let d = m(&[
            &[0.9, 0.0, 0.0, s(0.9)],
            &[0.0, 0.2, 0.0, s(0.2)],
            &[0.0, 0.0, 0.5, s(0.5)],
        ]);
        (eq(q, TokenMatrix::empty(4)), d)
    }

    #[test]
    fn colbert_examples() {
        let q = eq(m(&[&[0.0, 1.0]]), TokenMatrix::empty(2));
        let d = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!((colbert_score(&q, &d).unwrap() - 1.0).abs() < 1e-9);

        let (q, d) = three_row_fixture();
        let mq = maxsim_rows(&q.query_part, &d).unwrap();
        assert!((mq[0] - 0.9).abs() < 1e-6 && (mq[1] - 0.2).abs() < 1e-6 && (mq[2] - 0.5).abs() < 1e-6);
        assert!((colbert_score(&q, &d).unwrap() - 1.6).abs() < 1e-6);
    }

    #[test]
    fn focused_top2_of_four() {
        // M^Q = [0.9, 0.8, 0.1, 0.05] via one passage row per query row
        let vals = [0.9f32, 0.8, 0.1, 0.05];
        let mut qrows = Vec::new();
        let mut drows = Vec::new();
        for (i, v) in vals.iter().enumerate() {
            let mut q = vec![0.0f32; 5];
            q[i] = 1.0;
            qrows.push(q);
            let mut d = vec![0.0f32; 5];
            d[i] = *v;
            d[4] = (1.0 - v * v).sqrt();
            drows.push(d);
        }
        let q = eq(TokenMatrix::from_rows(5, &qrows).unwrap(), TokenMatrix::empty(5));
        let d = TokenMatrix::from_rows(5, &drows).unwrap();
        let s = focused_score(&q, &d, FocusParams { n_hat: 2, l_hat: 8 }).unwrap();
        assert!((s.total() - 1.7).abs() < 1e-6);
        assert_eq!(s.s_fact, 0.0);
    }

    #[test]
    fn defaults() {
        assert_eq!(FocusParams::default(), FocusParams { n_hat: 32, l_hat: 8 });
        assert!(FocusParams { n_hat: 0, l_hat: 0 }.validate().is_err());
    }

    #[test]
    fn scored_passage_components_add_up() {
        let s = FocusedScore {
            s_query: 1.25,
            s_fact: 0.5,
        }
        .into_scored("p");
        assert!((s.score - (s.s_query + s.s_fact)).abs() < 1e-12);
    }

    fn unit_rows(dim: usize, max_rows: usize, nonneg: bool) -> impl Strategy<Value = TokenMatrix> {
        let lo = if nonneg { 0.0f32 } else { -1.0 };
        prop::collection::vec(prop::collection::vec(lo..1.0f32, dim), 1..max_rows).prop_map(
            move |rows| {
                let rows: Vec<Vec<f32>> = rows
                    .into_iter()
                    .map(|mut r| {
                        r[0] += 1e-3;
                        crate::encoder::normalize(&mut r);
                        r
                    })
                    .collect();
                TokenMatrix::from_rows(dim, &rows).unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn monotone_in_n_hat(q in unit_rows(6, 10, false), d in unit_rows(6, 8, false), k in 1usize..10) {
            let e = eq(q, TokenMatrix::empty(6));
            let a = focused_score(&e, &d, FocusParams { n_hat: k, l_hat: 0 }).unwrap();
            let b = focused_score(&e, &d, FocusParams { n_hat: k + 1, l_hat: 0 }).unwrap();
            // M can be negative; adding a negative term lowers the sum, so
            // monotonicity is asserted over the non-negative prefix only.
            let mut m: Vec<f64> = maxsim_rows(&e.query_part, &d).unwrap().into_iter().map(f64::from).collect();
            m.sort_by(|a, b| b.total_cmp(a));
            if m.get(k).is_none_or(|&v| v >= 0.0) {
                prop_assert!(b.s_query >= a.s_query);
            }
        }

        #[test]
        fn reduction_identity(q in unit_rows(8, 12, false), f in unit_rows(8, 6, false), d in unit_rows(8, 10, false)) {
            let e = eq(q, f);
            let full = focused_score(&e, &d, FocusParams { n_hat: 64, l_hat: 64 }).unwrap();
            prop_assert!((full.total() - colbert_score(&e, &d).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn permutation_invariant(q in unit_rows(6, 8, false), d in unit_rows(6, 8, false), rot in 0usize..8) {
            let e = eq(q.clone(), TokenMatrix::empty(6));
            let fp = FocusParams { n_hat: 3, l_hat: 0 };
            let base = focused_score(&e, &d, fp).unwrap();
            let rotate = |m: &TokenMatrix| {
                let n = m.rows();
                let rows: Vec<&[f32]> = (0..n).map(|i| m.row((i + rot) % n)).collect();
                TokenMatrix::from_rows(6, &rows).unwrap()
            };
            let e2 = eq(rotate(&q), TokenMatrix::empty(6));
            let other = focused_score(&e2, &rotate(&d), fp).unwrap();
            prop_assert!((base.total() - other.total()).abs() < 1e-9);
        }

        #[test]
        fn focused_not_above_colbert_for_nonneg(q in unit_rows(6, 10, true), f in unit_rows(6, 10, true), d in unit_rows(6, 8, true), n in 1usize..10, l in 0usize..10) {
            let e = eq(q, f);
            let s = focused_score(&e, &d, FocusParams { n_hat: n, l_hat: l }).unwrap();
            prop_assert!(s.total() <= colbert_score(&e, &d).unwrap() + 1e-9);
        }

        #[test]
        fn batch_matches_single(q in unit_rows(4, 6, false), docs in prop::collection::vec(unit_rows(4, 6, false), 1..6)) {
            let e = eq(q, TokenMatrix::empty(4));
            let fp = FocusParams { n_hat: 2, l_hat: 1 };
            let refs: Vec<&TokenMatrix> = docs.iter().collect();
            let batch = focused_score_batch(&e, &refs, fp).unwrap();
            for (d, b) in docs.iter().zip(batch) {
                prop_assert_eq!(focused_score(&e, d, fp).unwrap(), b);
            }
        }
    }
}
