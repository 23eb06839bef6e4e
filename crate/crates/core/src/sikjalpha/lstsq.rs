use nalgebra::{DMatrix, DVector};

/// Solution of a non-negative least-squares problem by clipping.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ClippedSolution {
    pub coef: Vec<f64>,
    /// Every regressor was zero.
    pub degenerate: bool,
}

fn solve_unconstrained(columns: &[Vec<f64>], target: &[f64]) -> Vec<f64> {
    let rows = target.len();
    // unit-norm columns keep the singular value cut-off scale free
    let norms: Vec<f64> = columns
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let a = DMatrix::from_fn(rows, columns.len(), |i, j| {
        if norms[j] > 0.0 {
            columns[j][i] / norms[j]
        } else {
            0.0
        }
    });
    let b = DVector::from_column_slice(target);
    let svd = a.svd(true, true);
    let cutoff = svd.singular_values.max() * 1e-12;
    let x = svd
        .solve(&b, cutoff)
        .expect("both singular vector sets were requested");
    x.iter()
        .zip(&norms)
        .map(|(v, n)| if *n > 0.0 { v / n } else { 0.0 })
        .collect()
}

/// Least squares with coefficients constrained to be non-negative: solve
/// unconstrained, drop the negative coefficients, re-solve once over the
/// remaining columns and clamp whatever is still negative.
pub(crate) fn clipped_nnls(columns: &[Vec<f64>], target: &[f64]) -> ClippedSolution {
    let k = columns.len();
    if columns.iter().all(|c| c.iter().all(|&v| v == 0.0)) {
        return ClippedSolution {
            coef: vec![0.0; k],
            degenerate: true,
        };
    }
    let first = solve_unconstrained(columns, target);
    if first.iter().all(|&c| c >= 0.0) {
        return ClippedSolution {
            coef: first,
            degenerate: false,
        };
    }
    let active: Vec<usize> = (0..k).filter(|&j| first[j] > 0.0).collect();
    let mut coef = vec![0.0; k];
    if !active.is_empty() {
        let sub: Vec<Vec<f64>> = active.iter().map(|&j| columns[j].clone()).collect();
        for (&j, v) in active.iter().zip(solve_unconstrained(&sub, target)) {
            coef[j] = v.max(0.0);
        }
    }
    ClippedSolution {
        coef,
        degenerate: false,
    }
}
