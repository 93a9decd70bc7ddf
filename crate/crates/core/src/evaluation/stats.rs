//! Rank statistics: Mann-Whitney U, Wilcoxon signed-rank and Spearman's rho.
//! Small samples get exact p-values by enumeration.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::EvaluationError;

/// Largest pooled size (Mann-Whitney) or pair count (Wilcoxon) for which
/// p-values are enumerated exactly.
pub const EXACT_LIMIT: usize = 12;

// tolerance when comparing enumerated statistics against the observed one
const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    #[default]
    TwoSided,
    /// The first sample tends to be larger.
    Greater,
    /// The first sample tends to be smaller.
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p: f64,
    pub exact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub rho: f64,
    pub p: f64,
}

/// Ranks starting at 1; tied values share the mean of their positions.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// `Σ (t³ − t)` over groups of tied values.
fn tie_term(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut total = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        total += t * t * t - t;
        i = j + 1;
    }
    total
}

/// Tail probability of `observed` among equally likely enumerated values.
fn exact_p(all: &[f64], observed: f64, mean: f64, alt: Alternative) -> f64 {
    let hits = all
        .iter()
        .filter(|&&u| match alt {
            Alternative::TwoSided => (u - mean).abs() >= (observed - mean).abs() - TIE_EPS,
            Alternative::Greater => u >= observed - TIE_EPS,
            Alternative::Less => u <= observed + TIE_EPS,
        })
        .count();
    hits as f64 / all.len() as f64
}

fn normal_p(observed: f64, mean: f64, var: f64, alt: Alternative) -> f64 {
    if var <= 0.0 {
        return 1.0;
    }
    let sd = var.sqrt();
    let phi = Normal::standard();
    let p = match alt {
        Alternative::TwoSided => 2.0 * (1.0 - phi.cdf((((observed - mean).abs() - 0.5) / sd).max(0.0))),
        Alternative::Greater => 1.0 - phi.cdf((observed - mean - 0.5) / sd),
        Alternative::Less => phi.cdf((observed - mean + 0.5) / sd),
    };
    p.clamp(0.0, 1.0)
}

/// Every `k`-subset of `0..n` as a bit mask.
fn subsets(n: usize, k: usize) -> impl Iterator<Item = u32> {
    (0u32..1 << n).filter(move |m| m.count_ones() as usize == k)
}

/// Mann-Whitney U for independent samples. The statistic is `U` of the
/// first sample: the number of pairs where it is larger, ties counting 1/2.
pub fn mann_whitney_u(a: &[f64], b: &[f64], alt: Alternative) -> Result<TestResult, EvaluationError> {
    if a.is_empty() || b.is_empty() {
        return Err(EvaluationError::EmptySample);
    }
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let offset = (na * (na + 1)) as f64 / 2.0;
    let u = ranks[..na].iter().sum::<f64>() - offset;
    let mean = (na * nb) as f64 / 2.0;
    let n = na + nb;
    if n <= EXACT_LIMIT {
        let all: Vec<f64> = subsets(n, na)
            .map(|m| (0..n).filter(|i| m >> i & 1 == 1).map(|i| ranks[i]).sum::<f64>() - offset)
            .collect();
        return Ok(TestResult { statistic: u, p: exact_p(&all, u, mean, alt), exact: true });
    }
    let nf = n as f64;
    let var = (na * nb) as f64 / 12.0 * ((nf + 1.0) - tie_term(&pooled) / (nf * (nf - 1.0)));
    Ok(TestResult { statistic: u, p: normal_p(u, mean, var, alt), exact: false })
}

/// Wilcoxon signed-rank test on paired samples. Zero differences are
/// dropped; the statistic is the rank sum of positive differences.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64], alt: Alternative) -> Result<TestResult, EvaluationError> {
    if a.len() != b.len() {
        return Err(EvaluationError::LengthMismatch { a: a.len(), b: b.len() });
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Err(EvaluationError::NoNonzeroDifferences);
    }
    let n = diffs.len();
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&abs);
    let w: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    if n <= EXACT_LIMIT {
        let all: Vec<f64> =
            (0u32..1 << n).map(|m| (0..n).filter(|i| m >> i & 1 == 1).map(|i| ranks[i]).sum::<f64>()).collect();
        return Ok(TestResult { statistic: w, p: exact_p(&all, w, mean, alt), exact: true });
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term(&abs) / 48.0;
    Ok(TestResult { statistic: w, p: normal_p(w, mean, var, alt), exact: false })
}

/// Spearman's rank correlation with tie-corrected ranks. The p-value is
/// two-sided from Student's t with `n − 2` degrees of freedom.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<Correlation, EvaluationError> {
    if a.len() != b.len() {
        return Err(EvaluationError::LengthMismatch { a: a.len(), b: b.len() });
    }
    let n = a.len();
    if n < 3 {
        return Err(EvaluationError::TooFewPairs(n));
    }
    let (ra, rb) = (midranks(a), midranks(b));
    let mean = (n as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        let (dx, dy) = (x - mean, y - mean);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvaluationError::ConstantRanks);
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
        (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
    };
    Ok(Correlation { rho, p })
}
