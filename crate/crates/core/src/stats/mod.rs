//! Rank-based and parametric tests used by the analysis layer.

pub mod special;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Both groups at or below this size get the exact permutation p-value.
pub const EXACT_MAX_GROUP: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    NormalApprox,
    ChiSquareApprox,
    StudentT,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: Method,
    pub n_per_group: Vec<usize>,
}

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty sample")]
    Empty,
    #[error("non-finite value in sample")]
    NonFinite,
    #[error("need at least {need} groups, got {got}")]
    TooFewGroups { need: usize, got: usize },
    #[error("paired samples differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {need} observations, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("degenerate pairing: all paired differences are identical")]
    DegeneratePairing,
    #[error("correlation undefined for a constant sample")]
    Constant,
}

fn check(xs: &[f64]) -> Result<(), StatsError> {
    if xs.is_empty() {
        return Err(StatsError::Empty);
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

/// Ranks of the pooled values, doubled so that tied (average) ranks stay
/// integral. Also returns the tie-group sizes.
fn doubled_ranks(pooled: &[f64]) -> (Vec<u64>, Vec<u64>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0u64; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        // 1-based positions i+1..=j+1, average doubled = (i+1)+(j+1)
        let rank2 = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            ranks[k] = rank2;
        }
        ties.push((j - i + 1) as u64);
        i = j + 1;
    }
    (ranks, ties)
}

fn tie_term(ties: &[u64]) -> f64 {
    ties.iter().map(|&t| (t * t * t - t) as f64).sum()
}

/// Two-sided Mann-Whitney U test. The statistic is `min(U_x, U_y)`.
///
/// Uses the exact permutation distribution of the (tie-aware) rank sum
/// when both groups have at most [`EXACT_MAX_GROUP`] observations,
/// otherwise the normal approximation with tie and continuity corrections.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> Result<TestResult, StatsError> {
    check(x)?;
    check(y)?;
    let (nx, ny) = (x.len(), y.len());
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let (ranks2, ties) = doubled_ranks(&pooled);
    let rank_sum2: u64 = ranks2[..nx].iter().sum();
    // 2 * U_x
    let u2 = rank_sum2 as i64 - (nx * (nx + 1)) as i64;
    let u_x = u2 as f64 / 2.0;
    let u_y = (nx * ny) as f64 - u_x;
    let statistic = u_x.min(u_y);
    let n_per_group = vec![nx, ny];

    if nx <= EXACT_MAX_GROUP && ny <= EXACT_MAX_GROUP {
        let p_value = exact_two_sided(&ranks2, nx, rank_sum2);
        return Ok(TestResult {
            statistic,
            p_value,
            method: Method::Exact,
            n_per_group,
        });
    }

    let n = (nx + ny) as f64;
    let mean = (nx * ny) as f64 / 2.0;
    let var = (nx * ny) as f64 / 12.0 * ((n + 1.0) - tie_term(&ties) / (n * (n - 1.0)));
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = ((u_x - mean).abs() - 0.5).max(0.0) / var.sqrt();
        (2.0 * special::normal_sf(z)).min(1.0)
    };
    Ok(TestResult {
        statistic,
        p_value,
        method: Method::NormalApprox,
        n_per_group,
    })
}

/// Exact two-sided p: share of all size-`nx` subsets of the pooled ranks
/// whose rank sum is at least as far from its mean as the observed one.
/// Works on doubled ranks so every comparison is in integers.
fn exact_two_sided(ranks2: &[u64], nx: usize, observed2: u64) -> f64 {
    let max_sum: u64 = {
        let mut sorted = ranks2.to_vec();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        sorted[..nx].iter().sum()
    };
    // counts[k][s]: subsets of size k with doubled rank sum s
    let width = max_sum as usize + 1;
    let mut counts = vec![vec![0u64; width]; nx + 1];
    counts[0][0] = 1;
    for &r in ranks2 {
        let r = r as usize;
        for k in (1..=nx).rev() {
            for s in (r..width).rev() {
                counts[k][s] += counts[k - 1][s - r];
            }
        }
    }
    let n = ranks2.len() as i64;
    // mean of the doubled rank sum: nx * (n + 1)
    let center = nx as i64 * (n + 1);
    let observed_dev = (observed2 as i64 - center).abs();
    let mut extreme = 0u64;
    let mut total = 0u64;
    for (s, &c) in counts[nx].iter().enumerate() {
        total += c;
        if (s as i64 - center).abs() >= observed_dev {
            extreme += c;
        }
    }
    extreme as f64 / total as f64
}

/// `min(1, p * k)` for a family of `k` p-values.
pub fn bonferroni(p_values: &[f64]) -> Vec<f64> {
    let k = p_values.len() as f64;
    p_values.iter().map(|p| (p * k).min(1.0)).collect()
}

/// Kruskal-Wallis H with tie correction; chi-square p with `g - 1` df.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<TestResult, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups {
            need: 2,
            got: groups.len(),
        });
    }
    for g in groups {
        check(g)?;
    }
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let (ranks2, ties) = doubled_ranks(&pooled);
    let n = pooled.len() as f64;
    let mut offset = 0;
    let mut weighted = 0.0;
    for g in groups {
        let sum = ranks2[offset..offset + g.len()].iter().sum::<u64>() as f64 / 2.0;
        weighted += sum * sum / g.len() as f64;
        offset += g.len();
    }
    let correction = 1.0 - tie_term(&ties) / (n * n * n - n);
    let n_per_group = groups.iter().map(Vec::len).collect();
    if correction <= 0.0 {
        return Ok(TestResult {
            statistic: 0.0,
            p_value: 1.0,
            method: Method::ChiSquareApprox,
            n_per_group,
        });
    }
    let h = ((12.0 / (n * (n + 1.0)) * weighted - 3.0 * (n + 1.0)) / correction).max(0.0);
    let df = (groups.len() - 1) as f64;
    Ok(TestResult {
        statistic: h,
        p_value: special::chi_square_sf(h, df).clamp(0.0, 1.0),
        method: Method::ChiSquareApprox,
        n_per_group,
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Two-sided paired t-test on `x - y`.
pub fn paired_t_test(x: &[f64], y: &[f64]) -> Result<TestResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    check(x)?;
    check(y)?;
    if x.len() < 2 {
        return Err(StatsError::TooFew { need: 2, got: x.len() });
    }
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    if diffs.iter().all(|d| *d == diffs[0]) {
        return Err(StatsError::DegeneratePairing);
    }
    let n = diffs.len() as f64;
    let m = mean(&diffs);
    let var = diffs.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / (n - 1.0);
    let t = m / (var.sqrt() / n.sqrt());
    Ok(TestResult {
        statistic: t,
        p_value: special::student_t_two_sided(t, n - 1.0).clamp(0.0, 1.0),
        method: Method::StudentT,
        n_per_group: vec![x.len(), y.len()],
    })
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    check(x)?;
    check(y)?;
    if x.len() < 2 {
        return Err(StatsError::TooFew { need: 2, got: x.len() });
    }
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::Constant);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

/// Quantile by linear interpolation between closest ranks (type 7).
/// `sorted` must be non-empty and ascending.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(xs: &[f64]) -> Result<f64, StatsError> {
    check(xs)?;
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, 0.5))
}

pub fn descriptive(xs: &[f64]) -> Result<Summary, StatsError> {
    check(xs)?;
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Summary {
        n: sorted.len(),
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
        mean: mean(&sorted),
    })
}
