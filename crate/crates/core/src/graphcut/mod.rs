//! Multi-label energy minimization on a 4-connected pixel grid.
//!
//! `E(l) = Σ_X D(X, l_X) + λ Σ_{X~X'} S(l_X, l_X')` with the logarithmic smoothness
//! cost `S(a, b) = 0.5 + log|a - b| / log K` for `a ≠ b`. Minimization runs
//! alpha-expansion moves, each solved exactly as a binary min-cut.

mod expansion;
mod maxflow;

pub use expansion::{alpha_expansion, energy, pointwise_argmin, EnergyProblem, Expansion};
pub use maxflow::{Arc, FlowNetwork, MinCut};

use crate::error::{Error, Result};

/// Pairwise label cost between two neighbours (labels are 1-based).
pub fn smoothness_cost(a: u16, b: u16, num_labels: usize) -> Result<f64> {
    if a == 0 || b == 0 || a as usize > num_labels || b as usize > num_labels {
        return Err(Error::invalid(format!("labels {a}, {b} outside [1, {num_labels}]")));
    }
    if a == b {
        return Ok(0.0);
    }
    if num_labels < 2 {
        return Err(Error::invalid("smoothness cost needs at least two labels"));
    }
    let diff = (a as f64 - b as f64).abs();
    Ok(0.5 + diff.ln() / (num_labels as f64).ln())
}
