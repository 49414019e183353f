//! Rank statistics for comparing final errors across algorithms.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{HarnessError, Result};

/// Ranks starting at 1; tied values share the average of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Kruskal–Wallis H with tie correction and its chi-square upper-tail
/// p-value on `groups - 1` degrees of freedom. All-identical data gives
/// `(0, 1)`.
pub fn kruskal_wallis(groups: &[&[f64]]) -> Result<(f64, f64)> {
    if groups.len() < 2 {
        return Err(HarnessError::Input("Kruskal-Wallis needs at least two groups".into()));
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(HarnessError::Input(format!("group of size {} (need at least 2)", g.len())));
    }
    if groups.iter().flat_map(|g| g.iter()).any(|v| v.is_nan()) {
        return Err(HarnessError::Input("NaN observation".into()));
    }

    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    let n = pooled.len() as f64;
    let ranks = average_ranks(&pooled);

    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    for run in sorted.chunk_by(|a, b| a == b) {
        let t = run.len() as f64;
        ties += t * t * t - t;
    }
    let correction = 1.0 - ties / (n * n * n - n);
    if correction <= 0.0 {
        return Ok((0.0, 1.0));
    }

    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum += r * r / g.len() as f64;
        offset += g.len();
    }
    let h = ((12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0)) / correction).max(0.0);
    let chi = ChiSquared::new((groups.len() - 1) as f64).expect("positive degrees of freedom");
    let p = chi.sf(h).clamp(0.0, 1.0);
    Ok((h, p))
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Best, worst, median, mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub best: f64,
    pub worst: f64,
    pub median: f64,
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Summary {
            best: values.iter().copied().fold(f64::INFINITY, f64::min),
            worst: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            median: median(values),
            mean,
            std,
        })
    }
}

/// Pairwise outcome of an algorithm against the reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mark {
    /// Significantly lower errors than the reference.
    Better,
    /// Significantly higher errors than the reference.
    Worse,
    Same,
}

impl Mark {
    pub fn symbol(self) -> &'static str {
        match self {
            Mark::Better => "+",
            Mark::Worse => "-",
            Mark::Same => "·",
        }
    }

    pub fn flip(self) -> Mark {
        match self {
            Mark::Better => Mark::Worse,
            Mark::Worse => Mark::Better,
            Mark::Same => Mark::Same,
        }
    }
}

impl fmt::Display for Mark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Two-group Kruskal–Wallis test of `other` against `reference`. When it
/// rejects at `alpha` the direction comes from the medians; equal medians or
/// too few observations give [`Mark::Same`].
pub fn significance_mark(reference: &[f64], other: &[f64], alpha: f64) -> Mark {
    let Ok((_, p)) = kruskal_wallis(&[reference, other]) else {
        return Mark::Same;
    };
    if p >= alpha {
        return Mark::Same;
    }
    let (mr, mo) = (median(reference), median(other));
    if mo < mr {
        Mark::Better
    } else if mo > mr {
        Mark::Worse
    } else {
        Mark::Same
    }
}
