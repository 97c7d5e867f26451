//! Pass@k and the iteration-ranking metrics over binary validity lists.

use super::AnalyticsError;

/// Unbiased estimate of the chance that at least one of `k` samples drawn
/// from `n` (of which `c` are correct) is correct: `1 - C(n-c, k) / C(n, k)`.
pub fn pass_at_k(n: u32, c: u32, k: u32) -> Result<f64, AnalyticsError> {
    if c > n || k == 0 || k > n {
        return Err(AnalyticsError::PassAtKBounds { n, c, k });
    }
    if n - c < k {
        return Ok(1.0);
    }
    // C(n-c, k) / C(n, k) = prod_{i=n-c+1}^{n} (1 - k/i)
    let miss: f64 = (n - c + 1..=n).map(|i| 1.0 - f64::from(k) / f64::from(i)).product();
    Ok(1.0 - miss)
}

fn check_k(rel: &[bool], k: usize) -> Result<(), AnalyticsError> {
    if k == 0 || k > rel.len() {
        return Err(AnalyticsError::RankBounds { k, len: rel.len() });
    }
    Ok(())
}

fn hits(rel: &[bool], k: usize) -> usize {
    rel[..k].iter().filter(|r| **r).count()
}

pub fn precision_at_k(rel: &[bool], k: usize) -> Result<f64, AnalyticsError> {
    check_k(rel, k)?;
    Ok(hits(rel, k) as f64 / k as f64)
}

/// `None` when the list has no valid iteration.
pub fn recall_at_k(rel: &[bool], k: usize) -> Result<Option<f64>, AnalyticsError> {
    check_k(rel, k)?;
    let total = hits(rel, rel.len());
    Ok((total > 0).then(|| hits(rel, k) as f64 / total as f64))
}

/// Harmonic mean of precision and recall; 0 when both are 0 or recall is
/// undefined.
pub fn f1_at_k(rel: &[bool], k: usize) -> Result<f64, AnalyticsError> {
    let p = precision_at_k(rel, k)?;
    let r = recall_at_k(rel, k)?.unwrap_or(0.0);
    Ok(if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) })
}

/// Per-list term of MAP@k; `None` when the list has no valid iteration.
pub fn average_precision_at_k(rel: &[bool], k: usize) -> Result<Option<f64>, AnalyticsError> {
    check_k(rel, k)?;
    let total = hits(rel, rel.len());
    if total == 0 {
        return Ok(None);
    }
    let mut sum = 0.0;
    let mut seen = 0usize;
    for (j, r) in rel[..k].iter().enumerate() {
        if *r {
            seen += 1;
            sum += seen as f64 / (j + 1) as f64;
        }
    }
    Ok(Some(sum / total.min(k) as f64))
}

/// How lists without any valid iteration enter the MAP average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyListPolicy {
    #[default]
    Exclude,
    CountAsZero,
}

/// Mean average precision over lists. `None` when no list contributes.
pub fn map_at_k(
    lists: &[Vec<bool>],
    k: usize,
    policy: EmptyListPolicy,
) -> Result<Option<f64>, AnalyticsError> {
    let mut terms = Vec::with_capacity(lists.len());
    for rel in lists {
        match (average_precision_at_k(rel, k)?, policy) {
            (Some(ap), _) => terms.push(ap),
            (None, EmptyListPolicy::CountAsZero) => terms.push(0.0),
            (None, EmptyListPolicy::Exclude) => {}
        }
    }
    if terms.is_empty() {
        return Ok(None);
    }
    Ok(Some(terms.iter().sum::<f64>() / terms.len() as f64))
}

/// Binary-relevance NDCG with a `log2(j + 1)` discount; 0 when the ideal
/// DCG is 0.
pub fn ndcg_at_k(rel: &[bool], k: usize) -> Result<f64, AnalyticsError> {
    check_k(rel, k)?;
    let discount = |j: usize| 1.0 / ((j + 2) as f64).log2();
    let dcg: f64 = rel[..k].iter().enumerate().filter(|(_, r)| **r).map(|(j, _)| discount(j)).sum();
    let ideal_hits = hits(rel, rel.len()).min(k);
    let idcg: f64 = (0..ideal_hits).map(discount).sum();
    Ok(if idcg == 0.0 { 0.0 } else { dcg / idcg })
}
