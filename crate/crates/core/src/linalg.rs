//! Dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted ascending.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn sym_eigen(m: &DMatrix<f64>) -> SortedEigen {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        // deterministic sign: largest-magnitude component positive
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    SortedEigen { values, vectors }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).norm()
}

pub fn commutator(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a * b - b * a
}

/// Trace of the product `a * b` without forming it.
pub fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Projector `V Vᵀ` onto the span of the selected columns.
pub fn column_projector(vectors: &DMatrix<f64>, cols: std::ops::Range<usize>) -> DMatrix<f64> {
    let block = vectors.columns(cols.start, cols.len());
    block * block.transpose()
}

/// Matrix exponential (Padé with scaling and squaring).
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().exp()
}

/// Fréchet derivative of the exponential at `x` in direction `y`, read off
/// the upper-right block of `exp([[x, y], [0, x]])`.
pub fn expm_frechet(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut big = DMatrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(x);
    big.view_mut((n, n), (n, n)).copy_from(x);
    big.view_mut((0, n), (n, n)).copy_from(y);
    let e = big.exp();
    e.view((0, n), (n, n)).into_owned()
}

/// Spectral function `f(m)` of a symmetric matrix.
pub fn sym_apply(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = sym_eigen(m);
    let d = DMatrix::from_diagonal(&eig.values.map(f));
    &eig.vectors * d * eig.vectors.transpose()
}

pub fn diag_matrix(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(v)
}

/// `Uᵀ diag(v) U` without forming the diagonal matrix.
pub fn conjugate_diagonal(u: &DMatrix<f64>, v: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = u.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row *= v[i];
    }
    u.transpose() * scaled
}

/// Diagonal of `U X Uᵀ`, i.e. the site density of a frame-space operator.
pub fn diagonal_of_conjugate(u: &DMatrix<f64>, x: &DMatrix<f64>) -> DVector<f64> {
    let ux = u * x;
    DVector::from_iterator(
        u.nrows(),
        (0..u.nrows()).map(|i| ux.row(i).dot(&u.row(i))),
    )
}

/// Inverse square root of a symmetric positive-definite matrix.
pub fn inv_sqrt_spd(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(m, |x| 1.0 / x.sqrt())
}
