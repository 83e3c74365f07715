//! Small report building blocks shared by the checkers.

use serde::Serialize;

/// Outcome of a single sampled check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

/// Distribution of per-sample margins. Quantiles use the nearest-rank rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginSummary {
    pub min: f64,
    pub p01: f64,
    pub median: f64,
    pub mean: f64,
    pub max: f64,
}

impl MarginSummary {
    /// Returns `None` for an empty slice.
    pub fn from_margins(margins: &[f64]) -> Option<Self> {
        if margins.is_empty() {
            return None;
        }
        let mut sorted = margins.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rank = |q: f64| {
            let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
            sorted[idx - 1]
        };
        // Sequential sum over the ordered input keeps the mean reproducible.
        let mean = margins.iter().sum::<f64>() / margins.len() as f64;
        Some(Self {
            min: sorted[0],
            p01: rank(0.01),
            median: rank(0.5),
            mean,
            max: sorted[sorted.len() - 1],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_small_sample() {
        let s = MarginSummary::from_margins(&[3.0, -1.0, 2.0, 0.0]).unwrap();
        assert_eq!(s.min, -1.0);
        assert_eq!(s.max, 3.0);
        assert_eq!(s.median, 0.0);
        assert_eq!(s.mean, 1.0);
        assert!(MarginSummary::from_margins(&[]).is_none());
    }
}
