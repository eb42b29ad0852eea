//! Rank statistics: mid-ranks, Spearman correlation and the two-sided
//! Wilcoxon rank-sum (Mann-Whitney) test.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// 1-based ranks with ties sharing their average rank.
pub fn midranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn is_constant(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[0] == w[1])
}

/// Pearson correlation; `None` when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation of mid-ranks. A constant input yields 0.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid("spearman inputs differ in length"));
    }
    if x.len() < 3 {
        return Err(Error::invalid("spearman needs at least 3 pairs"));
    }
    Ok(pearson(&midranks(x), &midranks(y)).unwrap_or(0.0))
}

/// Largest combined sample size handled by exhaustive enumeration.
pub const EXACT_RANKSUM_MAX_N: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankSum {
    /// Sum of the mid-ranks of the first sample.
    pub statistic: f64,
    pub p_value: f64,
    pub exact: bool,
}

/// Two-sided rank-sum test of `a` against `b`.
///
/// Up to [`EXACT_RANKSUM_MAX_N`] observations the p-value comes from
/// enumerating every assignment of the pooled mid-ranks to the first group;
/// above that, a normal approximation with tie and continuity correction.
pub fn ranksum(a: &[f64], b: &[f64]) -> Result<RankSum> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("rank-sum test needs two non-empty samples"));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let n = pooled.len();
    let na = a.len();
    let w: f64 = ranks[..na].iter().sum();
    let expected = na as f64 * (n as f64 + 1.0) / 2.0;

    if n <= EXACT_RANKSUM_MAX_N {
        let observed = (w - expected).abs();
        let (mut extreme, mut total) = (0u64, 0u64);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != na {
                continue;
            }
            total += 1;
            let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            if (s - expected).abs() >= observed - 1e-9 {
                extreme += 1;
            }
        }
        return Ok(RankSum {
            statistic: w,
            p_value: extreme as f64 / total as f64,
            exact: true,
        });
    }

    let (na, nb, nf) = (na as f64, b.len() as f64, n as f64);
    let u = w - na * (na + 1.0) / 2.0;
    let mean = na * nb / 2.0;
    let ties = tie_term(&pooled);
    let var = na * nb / 12.0 * ((nf + 1.0) - ties / (nf * (nf - 1.0)));
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
        erfc(z / std::f64::consts::SQRT_2).min(1.0)
    };
    Ok(RankSum {
        statistic: w,
        p_value,
        exact: false,
    })
}

/// Two-sided p-value of [`ranksum`].
pub fn ranksum_test(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(ranksum(a, b)?.p_value)
}

fn tie_term(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let mut sum = 0.0;
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j + 1 < v.len() && v[j + 1] == v[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        sum += t * t * t - t;
        i = j + 1;
    }
    sum
}
