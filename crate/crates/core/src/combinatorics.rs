//! Integer compositions used by the perturbation recursions.

/// All compositions of `total` into exactly `parts` positive integers, in
/// lexicographic order. `compositions(0, 0)` yields the empty composition.
pub fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if parts == 0 {
        if total == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    if total < parts {
        return out;
    }
    let mut current = Vec::with_capacity(parts);
    fill(total, parts, &mut current, &mut out);
    out
}

fn fill(remaining: usize, parts_left: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if parts_left == 1 {
        current.push(remaining);
        out.push(current.clone());
        current.pop();
        return;
    }
    for first in 1..=(remaining - (parts_left - 1)) {
        current.push(first);
        fill(remaining - first, parts_left - 1, current, out);
        current.pop();
    }
}

pub fn max_part(alpha: &[usize]) -> usize {
    alpha.iter().copied().max().unwrap_or(0)
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_binomials() {
        // C(k-1, l-1) compositions of k into l parts
        assert_eq!(compositions(4, 2).len(), 3);
        assert_eq!(compositions(5, 3).len(), 6);
        assert_eq!(compositions(6, 6).len(), 1);
        let total: usize = (1..=6).map(|l| compositions(6, l).len()).sum();
        assert_eq!(total, 32);
    }

    #[test]
    fn empty_cases() {
        assert_eq!(compositions(0, 0), vec![Vec::<usize>::new()]);
        assert!(compositions(2, 0).is_empty());
        assert!(compositions(1, 2).is_empty());
    }

    #[test]
    fn parts_sum_to_total() {
        for c in compositions(7, 3) {
            assert_eq!(c.iter().sum::<usize>(), 7);
            assert!(c.iter().all(|&p| p >= 1));
        }
    }
}
