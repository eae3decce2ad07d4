//! Fixtures shared by the benchmarks in `benches/`.

use bdqsd::model::{example3, linear, logistic};
use bdqsd::BirthDeathModel;

/// Built-in models the kernels are timed on.
pub fn models() -> Vec<(&'static str, BirthDeathModel)> {
    vec![
        ("linear", linear(1.0, 2.0)),
        ("logistic", logistic(2.0, 1.0, 1.0)),
        ("example3", example3()),
    ]
}
