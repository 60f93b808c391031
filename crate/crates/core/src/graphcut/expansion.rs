use log::debug;

use super::maxflow::FlowNetwork;
use super::smoothness_cost;
use crate::error::{Error, Result};

/// Grid labeling problem with a dense data-cost table.
#[derive(Debug, Clone)]
pub struct EnergyProblem {
    width: usize,
    height: usize,
    num_labels: usize,
    /// `data[p * num_labels + (label - 1)]`
    data: Vec<f64>,
    lambda: f64,
    smooth: Vec<f64>,
}

impl EnergyProblem {
    pub fn new(width: usize, height: usize, num_labels: usize, data: Vec<f64>, lambda: f64) -> Result<Self> {
        if width == 0 || height == 0 || num_labels == 0 {
            return Err(Error::invalid("energy problem needs a non-empty grid and at least one label"));
        }
        if num_labels > u16::MAX as usize {
            return Err(Error::invalid("too many labels"));
        }
        if data.len() != width * height * num_labels {
            return Err(Error::invalid("data-cost table does not match grid and label count"));
        }
        if data.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::invalid("data costs must be finite and non-negative"));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::invalid(format!("smoothness weight {lambda} must be non-negative")));
        }
        let mut smooth = vec![0.0; num_labels * num_labels];
        if num_labels >= 2 {
            for a in 1..=num_labels {
                for b in 1..=num_labels {
                    smooth[(a - 1) * num_labels + (b - 1)] = smoothness_cost(a as u16, b as u16, num_labels)?;
                }
            }
        }
        Ok(Self { width, height, num_labels, data, lambda, smooth })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn data_cost(&self, pixel: usize, label: u16) -> f64 {
        self.data[pixel * self.num_labels + label as usize - 1]
    }

    /// `λ · S(a, b)`
    fn pair(&self, a: u16, b: u16) -> f64 {
        self.lambda * self.smooth[(a as usize - 1) * self.num_labels + b as usize - 1]
    }

    fn check(&self, labels: &[u16]) -> Result<()> {
        if labels.len() != self.width * self.height {
            return Err(Error::invalid("labeling size does not match the grid"));
        }
        if let Some(bad) = labels.iter().find(|&&l| l == 0 || l as usize > self.num_labels) {
            return Err(Error::invalid(format!("label {bad} outside [1, {}]", self.num_labels)));
        }
        Ok(())
    }

    /// Each 4-neighbour pair once: right then down neighbour of every pixel.
    fn for_each_pair(&self, mut f: impl FnMut(usize, usize)) {
        for y in 0..self.height {
            for x in 0..self.width {
                let p = y * self.width + x;
                if x + 1 < self.width {
                    f(p, p + 1);
                }
                if y + 1 < self.height {
                    f(p, p + self.width);
                }
            }
        }
    }
}

/// Exact evaluation of the energy of `labels`.
pub fn energy(prob: &EnergyProblem, labels: &[u16]) -> Result<f64> {
    prob.check(labels)?;
    Ok(energy_unchecked(prob, labels))
}

fn energy_unchecked(prob: &EnergyProblem, labels: &[u16]) -> f64 {
    let data: f64 = labels.iter().enumerate().map(|(p, &l)| prob.data_cost(p, l)).sum();
    let mut smooth = 0.0;
    prob.for_each_pair(|p, q| smooth += prob.pair(labels[p], labels[q]));
    data + smooth
}

/// Per-pixel label of minimal data cost; ties go to the lowest label.
pub fn pointwise_argmin(prob: &EnergyProblem) -> Vec<u16> {
    (0..prob.width * prob.height)
        .map(|p| {
            let mut best = 1u16;
            for l in 2..=prob.num_labels as u16 {
                if prob.data_cost(p, l) < prob.data_cost(p, best) {
                    best = l;
                }
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Expansion {
    pub labels: Vec<u16>,
    pub energy: f64,
    /// Energy before the first sweep, then after every full sweep over the labels.
    pub sweep_energies: Vec<f64>,
    /// Pairwise terms that had to be truncated to keep a move submodular.
    pub truncated_terms: usize,
    pub accepted_moves: usize,
}

/// Alpha-expansion from `init`, sweeping labels `1..=K` until a sweep brings no decrease.
///
/// Every move is solved as a binary min-cut. Pairwise terms violating
/// `S(l_p, α) + S(α, l_q) ≥ S(l_p, l_q)` are truncated inside the move, and a
/// move is only kept when the exact energy strictly drops.
pub fn alpha_expansion(prob: &EnergyProblem, init: &[u16]) -> Result<Expansion> {
    prob.check(init)?;
    let mut labels = init.to_vec();
    let mut current = energy_unchecked(prob, &labels);
    let mut sweep_energies = vec![current];
    let mut truncated_terms = 0;
    let mut accepted_moves = 0;

    if prob.num_labels < 2 {
        return Ok(Expansion { labels, energy: current, sweep_energies, truncated_terms, accepted_moves });
    }

    loop {
        let mut improved = false;
        for alpha in 1..=prob.num_labels as u16 {
            let (proposal, truncated) = expansion_move(prob, &labels, alpha)?;
            truncated_terms += truncated;
            let candidate = energy_unchecked(prob, &proposal);
            if candidate < current - 1e-9 * current.abs().max(1.0) {
                debug!("expansion on label {alpha}: {current} -> {candidate}");
                labels = proposal;
                current = candidate;
                improved = true;
                accepted_moves += 1;
            }
        }
        sweep_energies.push(current);
        if !improved {
            break;
        }
    }
    Ok(Expansion { labels, energy: current, sweep_energies, truncated_terms, accepted_moves })
}

/// Binary variable `x_p = 1` means pixel `p` switches to `alpha`; sink side of the cut is `x = 1`.
fn expansion_move(prob: &EnergyProblem, labels: &[u16], alpha: u16) -> Result<(Vec<u16>, usize)> {
    let n = labels.len();
    let (source, sink) = (n, n + 1);
    let mut net = FlowNetwork::with_capacity(n + 2, source, sink, 3 * n)?;
    // cost(x_p = 1) - cost(x_p = 0), constants dropped
    let mut unary: Vec<f64> = (0..n)
        .map(|p| prob.data_cost(p, alpha) - prob.data_cost(p, labels[p]))
        .collect();
    let mut pairs = Vec::with_capacity(2 * n);
    let mut truncated = 0;
    prob.for_each_pair(|p, q| {
        let (lp, lq) = (labels[p], labels[q]);
        let mut e00 = prob.pair(lp, lq);
        let e01 = prob.pair(lp, alpha);
        let e10 = prob.pair(alpha, lq);
        let e11 = 0.0;
        if e01 + e10 < e00 + e11 {
            e00 = e01 + e10 - e11;
            truncated += 1;
        }
        // E = e00 + (e10 - e00) x_p + (e11 - e10) x_q + (e01 + e10 - e00 - e11)(1 - x_p) x_q
        unary[p] += e10 - e00;
        unary[q] += e11 - e10;
        let w = e01 + e10 - e00 - e11;
        if w > 0.0 {
            pairs.push((p, q, w));
        }
    });
    for (p, &u) in unary.iter().enumerate() {
        if u > 0.0 {
            net.add_arc(source, p, u)?;
        } else if u < 0.0 {
            net.add_arc(p, sink, -u)?;
        }
    }
    for (p, q, w) in pairs {
        net.add_arc(p, q, w)?;
    }
    let cut = net.max_flow();
    let proposal = labels
        .iter()
        .enumerate()
        .map(|(p, &l)| if cut.source_side[p] { l } else { alpha })
        .collect();
    Ok((proposal, truncated))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(w: usize, h: usize, k: usize, data: Vec<f64>, lambda: f64) -> EnergyProblem {
        EnergyProblem::new(w, h, k, data, lambda).unwrap()
    }

    #[test]
    fn energy_of_uniform_labeling_is_data_only() {
        let data: Vec<f64> = (0..6 * 3).map(|i| (i % 5) as f64).collect();
        let prob = problem(3, 2, 3, data, 7.0);
        let labels = vec![2u16; 6];
        let expect: f64 = (0..6).map(|p| prob.data_cost(p, 2)).sum();
        assert_eq!(energy(&prob, &labels).unwrap(), expect);
    }

    #[test]
    fn energy_single_pixel() {
        let prob = problem(1, 1, 3, vec![4.0, 1.5, 2.0], 1.0);
        assert_eq!(energy(&prob, &[2]).unwrap(), 1.5);
    }

    #[test]
    fn energy_of_a_short_row() {
        let data: Vec<f64> = (0..12).map(|i| i as f64 * 0.25).collect();
        let prob = problem(3, 1, 4, data, 1.0);
        let labels = [1u16, 2, 4];
        let data_sum = prob.data_cost(0, 1) + prob.data_cost(1, 2) + prob.data_cost(2, 4);
        let expect = data_sum + 0.5 + (0.5 + 2f64.ln() / 4f64.ln());
        assert!((energy(&prob, &labels).unwrap() - expect).abs() < 1e-12);
        assert!(energy(&prob, &[1, 5, 1]).is_err());
        assert!(energy(&prob, &[1, 1]).is_err());
    }

    #[test]
    fn zero_lambda_gives_pointwise_argmin() {
        let data = vec![3.0, 1.0, 2.0, 0.5, 4.0, 4.0, 2.0, 2.0, 0.0, 9.0, 1.0, 8.0];
        let prob = problem(2, 2, 3, data, 0.0);
        let init = vec![1u16; 4];
        let out = alpha_expansion(&prob, &init).unwrap();
        assert_eq!(out.labels, pointwise_argmin(&prob));
        assert_eq!(out.labels, vec![2, 1, 3, 2]);
    }

    #[test]
    fn two_pixel_problem_matches_enumeration() {
        let data = vec![0.0, 2.0, 2.5, 3.0, 3.0, 2.2, 0.1, 2.0];
        let prob = problem(2, 1, 4, data, 1.0);
        let mut best = f64::INFINITY;
        for a in 1..=4u16 {
            for b in 1..=4u16 {
                best = best.min(energy(&prob, &[a, b]).unwrap());
            }
        }
        let out = alpha_expansion(&prob, &pointwise_argmin(&prob)).unwrap();
        assert!((out.energy - best).abs() < 1e-12, "{} vs {best}", out.energy);
    }

    #[test]
    fn single_label_problem_is_trivial() {
        let prob = problem(2, 2, 1, vec![1.0; 4], 1.0);
        let out = alpha_expansion(&prob, &[1; 4]).unwrap();
        assert_eq!(out.labels, vec![1; 4]);
        assert_eq!(out.energy, 4.0);
    }

    #[test]
    fn three_labels_exercise_truncation() {
        // labels 1 and 3 adjacent, expanding 2 would violate submodularity
        let data = vec![0.0, 0.4, 5.0, 5.0, 0.4, 0.0];
        let prob = problem(2, 1, 3, data, 1.0);
        let init = [1u16, 3];
        let out = alpha_expansion(&prob, &init).unwrap();
        assert!(out.truncated_terms > 0);
        assert!(out.energy <= energy(&prob, &init).unwrap());
        assert!(out.sweep_energies.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn sweep_order_is_deterministic() {
        let data: Vec<f64> = (0..25 * 4).map(|i| ((i * 37) % 11) as f64 / 3.0).collect();
        let prob = problem(5, 5, 4, data, 1.3);
        let init = pointwise_argmin(&prob);
        let a = alpha_expansion(&prob, &init).unwrap();
        let b = alpha_expansion(&prob, &init).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.energy, b.energy);
    }

    #[test]
    fn bad_problems_are_rejected() {
        assert!(EnergyProblem::new(1, 1, 2, vec![1.0], 1.0).is_err());
        assert!(EnergyProblem::new(1, 1, 2, vec![1.0, -1.0], 1.0).is_err());
        assert!(EnergyProblem::new(1, 1, 2, vec![1.0, 1.0], -1.0).is_err());
        assert!(EnergyProblem::new(0, 1, 2, vec![], 1.0).is_err());
    }
}
