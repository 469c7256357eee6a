//! Dense tableau simplex for `max c·x  s.t.  A x <= b, x >= 0` with `b >= 0`.
//!
//! The origin is always feasible under `b >= 0`, so no artificial phase is
//! needed. Pivoting follows Bland's rule, which rules out cycling on the
//! heavily degenerate programs produced by schedule families.

const PIVOT_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub(crate) struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Shadow prices of the `A x <= b` rows.
    pub duals: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpFailure {
    Unbounded,
    IterationLimit,
}

/// `a` is row-major with `b.len()` rows and `c.len()` columns.
pub(crate) fn maximize(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<LpSolution, LpFailure> {
    let rows = b.len();
    let vars = c.len();
    let cols = vars + rows;
    debug_assert!(b.iter().all(|&v| v >= 0.0));

    // tableau[row][col]; last column is the rhs.
    let mut tab: Vec<Vec<f64>> = (0..rows)
        .map(|i| {
            let mut row = vec![0.0; cols + 1];
            row[..vars].copy_from_slice(&a[i]);
            row[vars + i] = 1.0;
            row[cols] = b[i];
            row
        })
        .collect();
    // reduced costs, stored as -c so that optimality means all entries >= 0
    let mut obj = vec![0.0; cols + 1];
    for (j, &cj) in c.iter().enumerate() {
        obj[j] = -cj;
    }
    let mut basis: Vec<usize> = (vars..cols).collect();

    let max_iter = 50 * (rows + cols) + 1000;
    for _ in 0..max_iter {
        let Some(enter) = (0..cols).find(|&j| obj[j] < -PIVOT_EPS) else {
            let mut x = vec![0.0; vars];
            for (i, &bv) in basis.iter().enumerate() {
                if bv < vars {
                    x[bv] = tab[i][cols];
                }
            }
            let duals = (0..rows).map(|i| obj[vars + i]).collect();
            return Ok(LpSolution { x, objective: obj[cols], duals });
        };

        let mut leave: Option<(usize, f64)> = None;
        for i in 0..rows {
            let coef = tab[i][enter];
            if coef > PIVOT_EPS {
                let ratio = tab[i][cols] / coef;
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - PIVOT_EPS
                            || ((ratio - lr).abs() <= PIVOT_EPS && basis[i] < basis[li])
                        {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let Some((pr, _)) = leave else {
            return Err(LpFailure::Unbounded);
        };

        let pivot = tab[pr][enter];
        for v in tab[pr].iter_mut() {
            *v /= pivot;
        }
        let prow = tab[pr].clone();
        for (i, row) in tab.iter_mut().enumerate() {
            if i != pr {
                let f = row[enter];
                if f != 0.0 {
                    for (v, p) in row.iter_mut().zip(&prow) {
                        *v -= f * p;
                    }
                }
            }
        }
        let f = obj[enter];
        for (v, p) in obj.iter_mut().zip(&prow) {
            *v -= f * p;
        }
        basis[pr] = enter;
    }
    Err(LpFailure::IterationLimit)
}
