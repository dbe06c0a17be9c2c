//! Dense linear assignment by shortest augmenting paths (Jonker–Volgenant
//! style dual updates, Crouse's formulation for square matrices).

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Minimizes `Σ_i cost[i][col(i)]` over permutations of an `n × n` row-major
/// matrix. Returns the column assigned to each row.
pub fn solve_assignment<T: Scalar>(n: usize, cost: &[T]) -> Result<Vec<usize>> {
    if cost.len() != n * n {
        return Err(Error::Domain(format!("cost buffer of {} entries for n = {n}", cost.len())));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::Numerical("assignment cost matrix has non-finite entries".into()));
    }
    const FREE: usize = usize::MAX;
    let mut u = vec![T::zero(); n];
    let mut v = vec![T::zero(); n];
    let mut shortest = vec![T::infinity(); n];
    let mut path = vec![FREE; n];
    let mut col4row = vec![FREE; n];
    let mut row4col = vec![FREE; n];
    let mut in_rows = vec![false; n];
    let mut in_cols = vec![false; n];
    let mut remaining = vec![0usize; n];
    // Rows visited during the current search, to reset in O(visited).
    let mut visited_rows: Vec<usize> = Vec::new();

    for cur_row in 0..n {
        let mut min_val = T::zero();
        let mut num_remaining = n;
        for (it, r) in remaining.iter_mut().enumerate() {
            *r = n - it - 1;
        }
        for &r in &visited_rows {
            in_rows[r] = false;
        }
        visited_rows.clear();
        in_cols.iter_mut().for_each(|c| *c = false);
        shortest.iter_mut().for_each(|s| *s = T::infinity());

        let mut i = cur_row;
        let sink = loop {
            let mut index = FREE;
            let mut lowest = T::infinity();
            in_rows[i] = true;
            visited_rows.push(i);
            let row = &cost[i * n..(i + 1) * n];
            let ui = u[i];
            for (it, &j) in remaining[..num_remaining].iter().enumerate() {
                let r = min_val + row[j] - ui - v[j];
                if r < shortest[j] {
                    path[j] = i;
                    shortest[j] = r;
                }
                if shortest[j] < lowest || (shortest[j] == lowest && row4col[j] == FREE) {
                    lowest = shortest[j];
                    index = it;
                }
            }
            min_val = lowest;
            if index == FREE || !min_val.is_finite() {
                return Err(Error::Numerical("assignment cost matrix is infeasible or non-finite".into()));
            }
            let j = remaining[index];
            in_cols[j] = true;
            num_remaining -= 1;
            remaining[index] = remaining[num_remaining];
            if row4col[j] == FREE {
                break j;
            }
            i = row4col[j];
        };

        u[cur_row] += min_val;
        for &r in &visited_rows {
            if r != cur_row {
                u[r] += min_val - shortest[col4row[r]];
            }
        }
        for j in 0..n {
            if in_cols[j] {
                v[j] -= min_val - shortest[j];
            }
        }

        let mut j = sink;
        loop {
            let i = path[j];
            row4col[j] = i;
            std::mem::swap(&mut col4row[i], &mut j);
            if i == cur_row {
                break;
            }
        }
    }
    Ok(col4row)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_by_three() {
        let c = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = solve_assignment(3, &c).unwrap();
        let total: f64 = a.iter().enumerate().map(|(i, &j)| c[i * 3 + j]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn constant_matrix_gives_identity() {
        let c = vec![1.0f32; 16];
        assert_eq!(solve_assignment(4, &c).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn rejects_non_finite() {
        let c = [f64::NAN, 1.0, 1.0, f64::NAN];
        assert!(solve_assignment(2, &c).is_err());
    }
}
