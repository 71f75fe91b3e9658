//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Largest dimension for which the adjugate is built from explicit cofactors.
const COFACTOR_MAX_DIM: usize = 4;
/// Below this |det|, `det · G⁻¹` is not trusted and cofactors are used instead.
const SINGULAR_DET: f64 = 1e-10;

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn sym_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Induced 2-norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let gram = if m.nrows() >= m.ncols() {
        m.tr_mul(m)
    } else {
        m * m.transpose()
    };
    sym_eigenvalues(&gram)
        .last()
        .copied()
        .unwrap_or(0.0)
        .max(0.0)
        .sqrt()
}

/// Largest absolute difference between `m` and its transpose.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for r in 0..n {
        for c in (r + 1)..n {
            worst = worst.max((m[(r, c)] - m[(c, r)]).abs());
        }
    }
    worst
}

/// `CᵀC` with the lower triangle mirrored from the upper one, so the result
/// is bit-exactly symmetric.
pub fn gram(c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = c.ncols();
    let mut g = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let v = c.column(a).dot(&c.column(b));
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    g
}

/// Determinant by Laplace expansion; intended for n ≤ 4.
fn det_laplace(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    match n {
        0 => 1.0,
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        3 => {
            m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
        }
        _ => {
            let mut acc = 0.0;
            for c in 0..n {
                let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                acc += sign * m[(0, c)] * det_laplace(&minor(m, 0, c));
            }
            acc
        }
    }
}

fn minor(m: &DMatrix<f64>, row: usize, col: usize) -> DMatrix<f64> {
    m.clone().remove_row(row).remove_column(col)
}

/// Determinant; exact cofactor formulas up to 4x4, LU beyond.
pub fn det(m: &DMatrix<f64>) -> f64 {
    assert!(m.is_square(), "determinant of a non-square matrix");
    if m.nrows() <= COFACTOR_MAX_DIM {
        det_laplace(m)
    } else {
        m.clone().determinant()
    }
}

fn adjugate_cofactor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 1 {
        return DMatrix::from_element(1, 1, 1.0);
    }
    let mut adj = DMatrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let sign = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
            // adj = cofactor matrix transposed
            adj[(c, r)] = sign * det(&minor(m, r, c));
        }
    }
    adj
}

/// Classical adjugate, `adj(G)·G = G·adj(G) = det(G)·I`, defined for
/// singular `G` as well.
///
/// Uses cofactors for n ≤ 4. Larger matrices use `det(G)·G⁻¹` unless
/// `|det(G)|` is below `1e-10`, in which case cofactors are used again.
pub fn adjugate(m: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(m.is_square(), "adjugate of a non-square matrix");
    let n = m.nrows();
    if n <= COFACTOR_MAX_DIM {
        return adjugate_cofactor(m);
    }
    let lu = m.clone().lu();
    let d = lu.determinant();
    if d.abs() < SINGULAR_DET {
        return adjugate_cofactor(m);
    }
    match lu.try_inverse() {
        Some(inv) => inv * d,
        None => adjugate_cofactor(m),
    }
}

/// Relative residual `‖adj(G)G − det(G)I‖_F / max(‖G‖_Fⁿ, tiny)`.
pub fn adjugate_residual(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let adj = adjugate(m);
    let resid = &adj * m - DMatrix::identity(n, n) * det(m);
    let scale = m.norm().powi(n as i32).max(f64::MIN_POSITIVE);
    resid.norm() / scale
}

/// Mean of a non-empty slice of equally sized matrices.
pub fn mean_matrix(ms: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut acc = ms[0].clone();
    for m in &ms[1..] {
        acc += m;
    }
    acc / ms.len() as f64
}

pub fn mean_vector(vs: &[DVector<f64>]) -> DVector<f64> {
    let mut acc = vs[0].clone();
    for v in &vs[1..] {
        acc += v;
    }
    acc / vs.len() as f64
}

/// Largest absolute component.
pub fn max_abs(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |acc, v| acc.max(v.abs()))
}
