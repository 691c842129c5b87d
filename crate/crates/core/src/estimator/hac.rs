use crate::graph::Graph;

/// `(1/n) Σ_i Σ_j (c_i − c̄)(c_j − c̄) 1{ℓ(i, j) ≤ b}` with a uniform kernel.
///
/// Each unit's ball of radius `b` is found by a BFS truncated at depth `b`,
/// so the cost is the total ball size rather than `n²`.
pub fn hac_variance(contributions: &[f64], g: &Graph, bandwidth: usize) -> f64 {
    let n = contributions.len();
    assert_eq!(n, g.n(), "one contribution per unit");
    if n == 0 {
        return 0.0;
    }
    let mean = contributions.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = contributions.iter().map(|v| v - mean).collect();
    if bandwidth == 0 {
        return c.iter().map(|v| v * v).sum::<f64>() / n as f64;
    }

    let mut stamp = vec![usize::MAX; n];
    let mut frontier = Vec::new();
    let mut next = Vec::new();
    let mut total = 0.0;
    for i in 0..n {
        stamp[i] = i;
        frontier.clear();
        frontier.push(i);
        let mut ball = c[i];
        for _ in 0..bandwidth {
            next.clear();
            for &u in &frontier {
                for &v in g.neighbors(u) {
                    if stamp[v] != i {
                        stamp[v] = i;
                        ball += c[v];
                        next.push(v);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            std::mem::swap(&mut frontier, &mut next);
        }
        total += c[i] * ball;
    }
    total / n as f64
}

/// `(1/n) Σ_i (c_i − c̄)²`.
pub fn iid_variance(contributions: &[f64]) -> f64 {
    let n = contributions.len();
    if n == 0 {
        return 0.0;
    }
    let mean = contributions.iter().sum::<f64>() / n as f64;
    contributions.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64
}

/// `sqrt(max(σ², 0) / n)` and whether the variance had to be clamped.
pub fn standard_error(sigma2: f64, n: usize) -> (f64, bool) {
    let clamped = sigma2 < 0.0;
    ((sigma2.max(0.0) / n.max(1) as f64).sqrt(), clamped)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_three_hand_sum() {
        let g = Graph::path(3);
        let v = hac_variance(&[1.0, 2.0, 3.0], &g, 1);
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_bandwidth_is_iid() {
        let g = Graph::cycle(6);
        let c = [0.3, -1.0, 2.5, 0.0, 1.1, -0.7];
        assert_eq!(hac_variance(&c, &g, 0), iid_variance(&c));
    }

    #[test]
    fn full_bandwidth_on_connected_graph_vanishes() {
        let g = Graph::path(5);
        let v = hac_variance(&[1.0, 4.0, -2.0, 0.5, 3.0], &g, 4);
        assert!(v.abs() < 1e-14);
    }

    #[test]
    fn clamping() {
        assert_eq!(standard_error(-0.5, 4), (0.0, true));
        assert_eq!(standard_error(4.0, 4), (1.0, false));
    }
}
