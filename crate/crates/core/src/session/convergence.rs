use serde::{Deserialize, Serialize};

/// Per-parameter convergence bookkeeping: the variance ratio
/// `r = sigma^2_new / sigma^2_old` and the flag `1 - r <= threshold`.
///
/// The rule is applied as written, so a variance that grows (`r > 1`) also
/// counts as converged. `0 / 0` gives `r = 1`; non-finite ratios never
/// converge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceState {
    pub threshold: f64,
    pub previous: Option<[f64; 9]>,
    pub current: Option<[f64; 9]>,
    pub ratios: [f64; 9],
    pub flags: [bool; 9],
}

impl ConvergenceState {
    pub fn new(threshold: f64) -> Self {
        Self {
            threshold,
            previous: None,
            current: None,
            ratios: [f64::NAN; 9],
            flags: [false; 9],
        }
    }

    /// Records a new variance vector. `comparable` is false when the model
    /// changed since the last update; the ratios then restart.
    pub fn update(&mut self, variances: [f64; 9], comparable: bool) {
        self.previous = if comparable { self.current } else { None };
        self.current = Some(variances);
        match self.previous {
            Some(prev) => {
                for i in 0..9 {
                    let r = variance_ratio(prev[i], variances[i]);
                    self.ratios[i] = r;
                    self.flags[i] = is_converged(r, self.threshold);
                }
            }
            None => {
                self.ratios = [f64::NAN; 9];
                self.flags = [false; 9];
            }
        }
    }

    pub fn all_converged(&self) -> bool {
        self.flags.iter().all(|f| *f)
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.threshold);
    }
}

pub fn variance_ratio(previous: f64, current: f64) -> f64 {
    if previous == 0.0 && current == 0.0 {
        1.0
    } else {
        current / previous
    }
}

/// `1 - r <= threshold`; false for non-finite `r`.
pub fn is_converged(ratio: f64, threshold: f64) -> bool {
    ratio.is_finite() && 1.0 - ratio <= threshold
}
