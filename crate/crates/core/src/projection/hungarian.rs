//! Minimum-cost linear assignment (shortest augmenting paths with potentials).

use crate::error::{Error, Result};

/// Cost used to pad rectangular problems and to fence off forbidden cells.
pub const SENTINEL: f64 = 1e9;

/// Minimum-cost assignment covering `min(rows, cols)` cells.
///
/// Returns `(row, col)` pairs sorted by row and the summed cost of those cells.
/// The matrix is padded to square with [`SENTINEL`]; maximization is the
/// caller's job (negate the scores).
pub fn hungarian(cost: &[Vec<f64>]) -> Result<(Vec<(usize, usize)>, f64)> {
    let rows = cost.len();
    if rows == 0 || cost[0].is_empty() {
        return Err(Error::Empty("cost matrix"));
    }
    let cols = cost[0].len();
    if let Some(r) = cost.iter().find(|r| r.len() != cols) {
        return Err(Error::Shape {
            what: "cost matrix row",
            expected: cols,
            got: r.len(),
        });
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("cost matrix".into()));
    }

    let n = rows.max(cols);
    // Square matrix, each row reduced by its minimum. Row reduction does not
    // change the optimal assignment and keeps all-sentinel pad rows at zero.
    let mut a = vec![vec![SENTINEL; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        if i < rows {
            row[..cols].copy_from_slice(&cost[i]);
        }
        let m = row.iter().copied().fold(f64::INFINITY, f64::min);
        row.iter_mut().for_each(|c| *c -= m);
    }

    // 1-indexed potentials; col_match[j] = row assigned to column j (0 = none)
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_match = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        col_match[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_match[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = a[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_match[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_match[j0] = col_match[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs: Vec<(usize, usize)> = (1..=n)
        .filter_map(|j| {
            let i = col_match[j];
            (i >= 1 && i <= rows && j <= cols).then_some((i - 1, j - 1))
        })
        .collect();
    pairs.sort_unstable();
    let total = pairs.iter().map(|&(i, j)| cost[i][j]).sum();
    Ok((pairs, total))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// Exhaustive minimum over all injective maps of the smaller side.
    pub(crate) fn brute_force(cost: &[Vec<f64>]) -> f64 {
        let rows = cost.len();
        let cols = cost[0].len();
        if rows <= cols {
            let mut best = f64::INFINITY;
            let mut used = vec![false; cols];
            fn rec(r: usize, cost: &[Vec<f64>], used: &mut [bool], acc: f64, best: &mut f64) {
                if r == cost.len() {
                    *best = best.min(acc);
                    return;
                }
                for c in 0..used.len() {
                    if !used[c] {
                        used[c] = true;
                        rec(r + 1, cost, used, acc + cost[r][c], best);
                        used[c] = false;
                    }
                }
            }
            rec(0, cost, &mut used, 0.0, &mut best);
            best
        } else {
            let t: Vec<Vec<f64>> = (0..cols).map(|c| (0..rows).map(|r| cost[r][c]).collect()).collect();
            brute_force(&t)
        }
    }

    #[test]
    fn single_cell() {
        let (p, c) = hungarian(&[vec![5.0]]).unwrap();
        assert_eq!(p, vec![(0, 0)]);
        assert_eq!(c, 5.0);
    }

    #[test]
    fn symmetric_two_by_two() {
        let (p, c) = hungarian(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(p, vec![(0, 0), (1, 1)]);
        assert_eq!(c, 2.0);
    }

    #[test]
    fn rectangular_covers_smaller_side() {
        let cost = vec![vec![2.0, 100.0, 10.0], vec![10.0, 100.0, 15.0]];
        let (p, c) = hungarian(&cost).unwrap();
        assert_eq!(p, vec![(0, 0), (1, 2)]);
        assert_eq!(c, 17.0);
        let tall: Vec<Vec<f64>> = (0..3).map(|c| cost.iter().map(|r| r[c]).collect()).collect();
        let (p, c) = hungarian(&tall).unwrap();
        assert_eq!(p, vec![(0, 0), (2, 1)]);
        assert_eq!(c, 17.0);
    }

    #[test]
    fn empty_is_error() {
        assert!(hungarian(&[]).is_err());
        assert!(hungarian(&[vec![]]).is_err());
    }

    #[test]
    fn random_five_by_five_matches_permutations() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let cost: Vec<Vec<f64>> = (0..5)
                .map(|_| (0..5).map(|_| rng.random_range(-20..=20) as f64).collect())
                .collect();
            let (pairs, total) = hungarian(&cost).unwrap();
            assert_eq!(total, brute_force(&cost));
            let mut cols: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            cols.sort_unstable();
            assert_eq!(cols, vec![0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn random_rectangular_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..300 {
            let r = rng.random_range(1..=6);
            let c = rng.random_range(1..=6);
            let cost: Vec<Vec<f64>> = (0..r)
                .map(|_| (0..c).map(|_| rng.random_range(0..50) as f64).collect())
                .collect();
            let (pairs, total) = hungarian(&cost).unwrap();
            assert_eq!(pairs.len(), r.min(c));
            assert_eq!(total, brute_force(&cost));
        }
    }
}
