//! Small numeric helpers shared across modules.

/// Streaming log-sum-exp accumulator.
#[derive(Clone, Copy, Debug)]
pub struct LogSum {
    max: f64,
    scaled: f64,
}

impl Default for LogSum {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSum {
    pub fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }

    /// Add `exp(ln_x)`.
    pub fn add_ln(&mut self, ln_x: f64) {
        if ln_x == f64::NEG_INFINITY {
            return;
        }
        if ln_x <= self.max {
            self.scaled += (ln_x - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - ln_x).exp() + 1.0;
            self.max = ln_x;
        }
    }

    /// Logarithm of the accumulated sum (`-inf` when empty).
    pub fn ln(&self) -> f64 {
        if self.scaled == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }

    pub fn value(&self) -> f64 {
        self.ln().exp()
    }
}

/// Normalise log-weights into probabilities.
pub fn normalize_ln(ln_w: &[f64]) -> Vec<f64> {
    let mut acc = LogSum::new();
    for &x in ln_w {
        acc.add_ln(x);
    }
    let total = acc.ln();
    ln_w.iter().map(|&x| (x - total).exp()).collect()
}
