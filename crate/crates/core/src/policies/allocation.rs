//! Load-proportional server partitioning.

use serde::{Deserialize, Serialize};

use crate::engine::{Allocation, ServiceClass};

/// Economic weight applied to each class's load when partitioning servers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    /// `penalty / charge`; falls back to 1 when either is zero.
    #[default]
    RatioROverC,
    Unit,
}

impl WeightRule {
    pub fn weight(&self, class: &ServiceClass) -> f64 {
        match self {
            Self::Unit => 1.0,
            Self::RatioROverC => {
                if class.charge > 0.0 && class.penalty > 0.0 {
                    class.penalty / class.charge
                } else {
                    1.0
                }
            }
        }
    }

    pub fn weights(&self, classes: &[ServiceClass]) -> Vec<f64> {
        classes.iter().map(|c| self.weight(c)).collect()
    }
}

/// Splits `total` servers in proportion to `rho[i] * alpha[i]`.
///
/// Shares are rounded half-up, then corrected by largest remainder: excess
/// servers come off the rounded-up classes with the smallest fractional
/// remainders (ties resolved towards the highest index), missing servers go
/// to the rounded-down classes with the largest remainders (ties towards the
/// lowest index). Afterwards every class in `floor`
/// without a server takes one from the currently largest pool. With no load
/// anywhere the servers are spread evenly, extras to the lowest indices.
pub fn offered_loads_allocation(
    rho: &[f64],
    alpha: &[f64],
    total: usize,
    floor: &[bool],
) -> Allocation {
    let m = rho.len();
    debug_assert_eq!(alpha.len(), m);
    debug_assert_eq!(floor.len(), m);
    if m == 0 {
        return Allocation::zeros(0);
    }
    let weighted: Vec<f64> = rho
        .iter()
        .zip(alpha)
        .map(|(r, a)| (r * a).max(0.0))
        .collect();
    let sum: f64 = weighted.iter().sum();

    let mut n = vec![0usize; m];
    if !(sum > 0.0 && sum.is_finite()) {
        for (i, slot) in n.iter_mut().enumerate() {
            *slot = total / m + usize::from(i < total % m);
        }
    } else {
        let shares: Vec<f64> = weighted.iter().map(|w| total as f64 * w / sum).collect();
        let remainders: Vec<f64> = shares.iter().map(|s| s - s.floor()).collect();
        for (slot, share) in n.iter_mut().zip(&shares) {
            *slot = (share + 0.5).floor() as usize;
        }
        let mut assigned: usize = n.iter().sum();
        while assigned > total {
            let rounded_up = |i: usize| n[i] > 0 && n[i] as f64 > shares[i];
            let any = (0..m).any(rounded_up);
            let victim = (0..m)
                .filter(|&i| if any { rounded_up(i) } else { n[i] > 0 })
                .min_by(|&a, &b| remainders[a].total_cmp(&remainders[b]).then(b.cmp(&a)))
                .expect("some class holds a server");
            n[victim] -= 1;
            assigned -= 1;
        }
        while assigned < total {
            let rounded_down = |i: usize| (n[i] as f64) < shares[i];
            let any = (0..m).any(rounded_down);
            let winner = (0..m)
                .filter(|&i| !any || rounded_down(i))
                .max_by(|&a, &b| remainders[a].total_cmp(&remainders[b]).then(b.cmp(&a)))
                .expect("at least one class");
            n[winner] += 1;
            assigned += 1;
        }
    }

    for i in 0..m {
        if !floor[i] || n[i] > 0 {
            continue;
        }
        let donor = (0..m)
            .filter(|&j| j != i && n[j] > usize::from(floor[j]))
            .max_by(|&a, &b| n[a].cmp(&n[b]).then(b.cmp(&a)));
        if let Some(j) = donor {
            n[j] -= 1;
            n[i] += 1;
        }
    }
    Allocation::new(n)
}

/// Static partition in proportion to the potential loads `delta * k * b`.
/// Classes with a positive potential load keep at least one server.
pub fn potential_loads_allocation(
    classes: &[ServiceClass],
    total: usize,
    weights: WeightRule,
) -> Allocation {
    let phi: Vec<f64> = classes.iter().map(|c| c.potential_load()).collect();
    let floor: Vec<bool> = phi.iter().map(|&p| p > 0.0).collect();
    offered_loads_allocation(&phi, &weights.weights(classes), total, &floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::Distribution;

    fn alloc(rho: &[f64], total: usize) -> Vec<usize> {
        let ones = vec![1.0; rho.len()];
        let none = vec![false; rho.len()];
        offered_loads_allocation(rho, &ones, total, &none).into_vec()
    }

    #[test]
    fn examples() {
        assert_eq!(alloc(&[1.0, 1.0], 20), vec![10, 10]);
        assert_eq!(alloc(&[2.0, 1.0], 20), vec![13, 7]);
        assert_eq!(alloc(&[1.0, 1.0, 1.0], 20), vec![7, 7, 6]);
    }

    #[test]
    fn rounding_up_shortfall() {
        // shares 3.333.. each round down to 3, one server short
        assert_eq!(alloc(&[1.0, 1.0, 1.0], 10), vec![4, 3, 3]);
        // shares (2.5, 2.5, 5) round to (3, 3, 5)
        assert_eq!(alloc(&[1.0, 1.0, 2.0], 10), vec![3, 2, 5]);
    }

    #[test]
    fn zero_load_spreads_evenly() {
        assert_eq!(alloc(&[0.0, 0.0, 0.0], 20), vec![7, 7, 6]);
        assert_eq!(alloc(&[0.0, 0.0], 1), vec![1, 0]);
    }

    #[test]
    fn single_loaded_class_takes_everything() {
        assert_eq!(alloc(&[0.0, 3.0, 0.0], 20), vec![0, 20, 0]);
    }

    #[test]
    fn floor_takes_from_largest() {
        let a = offered_loads_allocation(&[100.0, 0.001, 1.0], &[1.0; 3], 20, &[true, true, true]);
        assert_eq!(a.into_vec(), vec![18, 1, 1]);
        let a = offered_loads_allocation(&[0.0, 5.0], &[1.0; 2], 4, &[true, false]);
        assert_eq!(a.into_vec(), vec![1, 3]);
    }

    #[test]
    fn floor_cannot_exceed_capacity() {
        let a = offered_loads_allocation(&[1.0, 0.0, 0.0], &[1.0; 3], 2, &[true, true, true]);
        assert_eq!(a.total(), 2);
        assert!(a.as_slice().iter().all(|&n| n <= 1));
    }

    #[test]
    fn weights_tilt_allocation() {
        let a = offered_loads_allocation(&[1.0, 1.0], &[1.0, 3.0], 20, &[false, false]);
        assert_eq!(a.into_vec(), vec![5, 15]);
    }

    #[test]
    fn unit_ratio_weights_equal_pure_proportional() {
        let mk = |c: f64| ServiceClass::new("x", 1.0, 10, Distribution::Exponential { rate: 1.0 }, 0.1, c, 1.0, c);
        let classes = [mk(10.0), mk(20.0), mk(30.0)];
        assert_eq!(WeightRule::RatioROverC.weights(&classes), vec![1.0; 3]);
    }

    #[test]
    fn potential_loads() {
        let mk = |delta: f64, b: f64| {
            ServiceClass::new("x", 0.2, 50, Distribution::Exponential { rate: 1.0 / b }, delta, 1.0, b, 1.0)
        };
        // phi = 0.02 * 50 * 2 = 2 and 0.02 * 50 * 1 = 1
        let a = potential_loads_allocation(&[mk(0.02, 2.0), mk(0.02, 1.0)], 20, WeightRule::Unit);
        assert_eq!(a.into_vec(), vec![13, 7]);
        let a = potential_loads_allocation(&[mk(0.02, 1.0), mk(0.02, 1.0)], 20, WeightRule::Unit);
        assert_eq!(a.into_vec(), vec![10, 10]);
        let a = potential_loads_allocation(&[mk(0.0, 1.0), mk(0.02, 1.0), mk(0.01, 1.0)], 20, WeightRule::Unit);
        assert_eq!(a.get(0), 0);
        assert_eq!(a.total(), 20);
    }
}
