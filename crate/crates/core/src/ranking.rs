//! Deterministic feature ordering shared by metrics, masks and top-k
//! reconstruction.

/// Indices sorted by `|value|` descending; ties keep ascending index order.
pub fn rank_by_magnitude(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    // stable sort: equal magnitudes stay in ascending index order
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()));
    order
}

/// `⌈k · n / steps⌉` in exact integer arithmetic.
pub fn step_count(k: usize, n: usize, steps: usize) -> usize {
    (k * n).div_ceil(steps)
}

/// `⌈fraction · n⌉`, clamped to `1..=n`.
pub fn fraction_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).ceil() as usize).clamp(1, n.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_break_by_ascending_index() {
        assert_eq!(rank_by_magnitude(&[1.0, -3.0, 3.0, 0.5, -1.0]), vec![1, 2, 0, 4, 3]);
        assert_eq!(rank_by_magnitude(&[2.0; 4]), vec![0, 1, 2, 3]);
    }

    #[test]
    fn counts_round_up() {
        assert_eq!(step_count(1, 10, 3), 4);
        assert_eq!(step_count(3, 10, 3), 10);
        assert_eq!(step_count(0, 10, 3), 0);
        assert_eq!(fraction_count(0.1, 1024), 103);
        assert_eq!(fraction_count(1.0, 7), 7);
        assert_eq!(fraction_count(1e-9, 7), 1);
    }
}
