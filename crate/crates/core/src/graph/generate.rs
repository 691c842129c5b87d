use rand::Rng;

use super::Graph;
use crate::error::{invalid, Result};
use crate::rng::StreamRng;

/// Random geometric graph: positions i.i.d. uniform on the unit square,
/// linked when within distance `r_n = sqrt(kappa / (π n))`.
pub fn generate_rgg(n: usize, kappa: f64, rng: &mut StreamRng) -> Result<Graph> {
    generate_rgg_with_positions(n, kappa, rng).map(|(g, _)| g)
}

/// As [`generate_rgg`], also returning the drawn positions. Positions are
/// drawn in unit order, `x` before `y`.
pub fn generate_rgg_with_positions(n: usize, kappa: f64, rng: &mut StreamRng) -> Result<(Graph, Vec<[f64; 2]>)> {
    if n == 0 {
        return Err(invalid("random geometric graph needs n >= 1"));
    }
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(invalid(format!("kappa must be positive and finite, got {kappa}")));
    }
    let radius = (kappa / (std::f64::consts::PI * n as f64)).sqrt();
    let positions: Vec<[f64; 2]> = (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();

    // bucket into square cells of side >= radius; only adjacent cells can link
    let cells = ((1.0 / radius).floor() as usize).clamp(1, 1 << 12);
    let cell_of = |p: f64| ((p * cells as f64) as usize).min(cells - 1);
    let mut grid: Vec<Vec<usize>> = vec![Vec::new(); cells * cells];
    for (i, p) in positions.iter().enumerate() {
        grid[cell_of(p[0]) * cells + cell_of(p[1])].push(i);
    }

    let r2 = radius * radius;
    let mut lists = vec![Vec::new(); n];
    for (i, p) in positions.iter().enumerate() {
        let (cx, cy) = (cell_of(p[0]), cell_of(p[1]));
        for gx in cx.saturating_sub(1)..=(cx + 1).min(cells - 1) {
            for gy in cy.saturating_sub(1)..=(cy + 1).min(cells - 1) {
                for &j in &grid[gx * cells + gy] {
                    if j != i {
                        let dx = p[0] - positions[j][0];
                        let dy = p[1] - positions[j][1];
                        if dx * dx + dy * dy <= r2 {
                            lists[i].push(j);
                        }
                    }
                }
            }
        }
    }
    Ok((Graph::from_lists(lists), positions))
}

/// Erdős–Rényi graph: each unordered pair linked independently with
/// probability `kappa / n`. Pairs are visited as `(i, j)`, `i < j`, in
/// lexicographic order, one uniform draw each.
pub fn generate_er(n: usize, kappa: f64, rng: &mut StreamRng) -> Result<Graph> {
    if !(kappa > 0.0 && kappa < n as f64) {
        return Err(invalid(format!(
            "Erdős–Rényi needs 0 < kappa < n, got kappa = {kappa}, n = {n}"
        )));
    }
    let p = kappa / n as f64;
    let mut lists = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                lists[i].push(j);
                lists[j].push(i);
            }
        }
    }
    Ok(Graph::from_lists(lists))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn huge_radius_gives_complete_graph() {
        let g = generate_rgg(2, 100.0, &mut stream(1, 0)).unwrap();
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn rgg_is_reproducible() {
        let a = generate_rgg(300, 5.0, &mut stream(9, 1)).unwrap();
        let b = generate_rgg(300, 5.0, &mut stream(9, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn er_extremes() {
        let g = generate_er(50, 1e-9, &mut stream(2, 0)).unwrap();
        assert_eq!(g.edge_count(), 0);
        let g = generate_er(50, 50.0 - 1e-9, &mut stream(2, 0)).unwrap();
        assert_eq!(g.edge_count(), 50 * 49 / 2);
        assert!(generate_er(10, 10.0, &mut stream(2, 0)).is_err());
        assert!(generate_er(10, 0.0, &mut stream(2, 0)).is_err());
    }

    #[test]
    fn rgg_rejects_bad_input() {
        assert!(generate_rgg(0, 5.0, &mut stream(0, 0)).is_err());
        assert!(generate_rgg(10, -1.0, &mut stream(0, 0)).is_err());
    }
}
