//! Small dense linear algebra: numerical rank, kernels, subspaces given by
//! explicit bases, annihilators and symplectic orthogonals.

use nalgebra::{DMatrix, DVector};

use super::dual::Real;
use crate::error::{NhError, Result};

/// Default relative rank tolerance (fraction of the largest singular value).
pub const RANK_TOL: f64 = 1e-9;

fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

fn cutoff(sv: &[f64], tol: f64) -> f64 {
    sv.first().copied().unwrap_or(0.0) * tol
}

pub fn matrix_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    let sv = singular_values(m);
    let c = cutoff(&sv, tol);
    sv.iter().filter(|&&s| s > c && s > 0.0).count()
}

/// Numerical rank of a list of vectors (rank of the matrix with these columns).
pub fn subspace_rank(vectors: &[Vec<f64>], tol: f64) -> usize {
    if vectors.is_empty() {
        return 0;
    }
    matrix_rank(&columns(vectors), tol)
}

/// Matrix whose columns are the given vectors.
pub fn columns(vectors: &[Vec<f64>]) -> DMatrix<f64> {
    let n = vectors.first().map_or(0, |v| v.len());
    DMatrix::from_fn(n, vectors.len(), |i, j| vectors[j][i])
}

/// Smallest and largest singular values.
pub fn singular_range(m: &DMatrix<f64>) -> (f64, f64) {
    let sv = singular_values(m);
    match (sv.last(), sv.first()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => (0.0, 0.0),
    }
}

/// A linear subspace of R^ambient stored as an orthonormal basis.
#[derive(Clone, Debug)]
pub struct Subspace {
    ambient: usize,
    basis: Vec<Vec<f64>>,
    tol: f64,
}

impl Subspace {
    pub fn zero(ambient: usize) -> Subspace {
        Subspace { ambient, basis: Vec::new(), tol: RANK_TOL }
    }

    pub fn full(ambient: usize) -> Subspace {
        let basis = (0..ambient)
            .map(|i| {
                let mut e = vec![0.0; ambient];
                e[i] = 1.0;
                e
            })
            .collect();
        Subspace { ambient, basis, tol: RANK_TOL }
    }

    /// Span of the given vectors, orthonormalised through the SVD.
    pub fn span(ambient: usize, vectors: &[Vec<f64>], tol: f64) -> Subspace {
        if vectors.is_empty() {
            return Subspace { ambient, basis: Vec::new(), tol };
        }
        let m = columns(vectors);
        let svd = m.svd(true, false);
        let u = svd.u.expect("left singular vectors");
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let basis = svd
            .singular_values
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > smax * tol && s > 0.0)
            .map(|(i, _)| u.column(i).iter().copied().collect())
            .collect();
        Subspace { ambient, basis, tol }
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// ambient × dim matrix of basis columns.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.ambient, self.dim(), |i, j| self.basis[j][i])
    }

    /// Distance from `v` to the subspace (Euclidean norm of the orthogonal residual).
    pub fn distance(&self, v: &[f64]) -> f64 {
        let mut r = v.to_vec();
        for b in &self.basis {
            let c: f64 = b.iter().zip(v).map(|(x, y)| x * y).sum();
            for (ri, bi) in r.iter_mut().zip(b) {
                *ri -= c * bi;
            }
        }
        r.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        let scale = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
        self.distance(v) <= tol * scale
    }

    pub fn sum(&self, other: &Subspace) -> Subspace {
        let mut all = self.basis.clone();
        all.extend(other.basis.iter().cloned());
        Subspace::span(self.ambient, &all, self.tol)
    }

    pub fn intersect(&self, other: &Subspace) -> Subspace {
        if self.dim() == 0 || other.dim() == 0 {
            return Subspace::zero(self.ambient);
        }
        // [A | -B] c = 0  =>  A c_A lies in both
        let a = self.matrix();
        let b = other.matrix();
        let mut ab = DMatrix::zeros(self.ambient, a.ncols() + b.ncols());
        ab.columns_mut(0, a.ncols()).copy_from(&a);
        ab.columns_mut(a.ncols(), b.ncols()).copy_from(&(-b));
        let ker = nullspace(&ab, self.tol);
        let vecs: Vec<Vec<f64>> = ker
            .basis
            .iter()
            .map(|c| {
                let ca = DVector::from_iterator(a.ncols(), c[..a.ncols()].iter().copied());
                (&a * ca).iter().copied().collect()
            })
            .collect();
        Subspace::span(self.ambient, &vecs, self.tol)
    }

    /// Same span, measured by mutual containment of basis vectors.
    pub fn same_span(&self, other: &Subspace, tol: f64) -> bool {
        self.dim() == other.dim()
            && self.basis.iter().all(|b| other.contains(b, tol))
            && other.basis.iter().all(|b| self.contains(b, tol))
    }

    /// Orthogonal projection of `v`.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ambient];
        for b in &self.basis {
            let c: f64 = b.iter().zip(v).map(|(x, y)| x * y).sum();
            for (o, bi) in out.iter_mut().zip(b) {
                *o += c * bi;
            }
        }
        out
    }
}

/// Kernel of `m` as a subspace of R^ncols.
pub fn nullspace(m: &DMatrix<f64>, tol: f64) -> Subspace {
    let n = m.ncols();
    if m.nrows() == 0 || n == 0 {
        let mut s = Subspace::full(n);
        s.tol = tol;
        return s;
    }
    // pad to at least square so the SVD returns a full right basis
    let rows = m.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.rows_mut(0, m.nrows()).copy_from(m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("right singular vectors");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let basis = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| !(s > smax * tol && s > 0.0))
        .map(|(i, _)| vt.row(i).iter().copied().collect())
        .collect();
    Subspace { ambient: n, basis, tol }
}

/// Covectors vanishing on `s`, returned as a subspace of the dual (same coordinates).
pub fn annihilator(s: &Subspace) -> Subspace {
    if s.dim() == 0 {
        return Subspace::full(s.ambient);
    }
    nullspace(&s.matrix().transpose(), s.tol)
}

/// `{u : ω(u, s) = 0 for all s ∈ S}` with ω(a, b) = aᵀ Ω b.
pub fn symplectic_orthogonal(omega: &DMatrix<f64>, s: &Subspace) -> Result<Subspace> {
    let (lo, hi) = singular_range(omega);
    if omega.nrows() > 0 && !(lo > hi * s.tol && lo > 0.0) {
        return Err(NhError::Degenerate { singular_value: lo });
    }
    if s.dim() == 0 {
        return Ok(Subspace::full(s.ambient));
    }
    // ω(u, s_j) = uᵀ Ω s_j = 0  ⇔  (Ω s_j)ᵀ u = 0
    let rows = (omega * s.matrix()).transpose();
    Ok(nullspace(&rows, s.tol))
}

/// The bilinear form uᵀ Ω w.
pub fn pairing(omega: &DMatrix<f64>, u: &[f64], w: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..u.len() {
        for j in 0..w.len() {
            acc += u[i] * omega[(i, j)] * w[j];
        }
    }
    acc
}

/// Restriction of a bilinear form to a subspace: Bᵀ Ω B for an orthonormal basis B.
pub fn restrict(omega: &DMatrix<f64>, s: &Subspace) -> DMatrix<f64> {
    let b = s.matrix();
    b.transpose() * omega * b
}

pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().lu().solve(b)
}

pub fn solve_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    a.clone().lu().solve(b)
}

/// Gaussian elimination with partial pivoting over any `Real` scalar, so that
/// solves inside maps stay differentiable. Pivoting uses real parts only.
pub fn solve_real<T: Real>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].value().abs().partial_cmp(&a[j][col].value().abs()).unwrap())?;
        if a[piv][col].value() == 0.0 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col].clone() / a[col][col].clone();
            for k in col..n {
                let t = a[col][k].clone() * f.clone();
                a[row][k] = a[row][k].clone() - t;
            }
            let t = b[col].clone() * f;
            b[row] = b[row].clone() - t;
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row].clone();
        for k in row + 1..n {
            acc = acc - a[row][k].clone() * x[k].clone();
        }
        x[row] = acc / a[row][row].clone();
    }
    Some(x)
}

pub fn to_dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

pub fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(n: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        v
    }

    #[test]
    fn rank_of_dependent_triple() {
        let vs = vec![e(3, 0), e(3, 1), vec![1.0, 1.0, 0.0]];
        assert_eq!(subspace_rank(&vs, RANK_TOL), 2);
        assert_eq!(subspace_rank(&[], RANK_TOL), 0);
    }

    #[test]
    fn annihilator_of_plane() {
        let s = Subspace::span(3, &[e(3, 0), e(3, 1)], RANK_TOL);
        let ann = annihilator(&s);
        assert_eq!(ann.dim(), 1);
        assert!(ann.contains(&e(3, 2), 1e-12));
        assert_eq!(annihilator(&Subspace::full(3)).dim(), 0);
    }

    #[test]
    fn canonical_symplectic_orthogonal() {
        // coordinates (q1, q2, p1, p2), ω = dq ∧ dp
        let mut omega = DMatrix::zeros(4, 4);
        omega[(0, 2)] = 1.0;
        omega[(1, 3)] = 1.0;
        omega[(2, 0)] = -1.0;
        omega[(3, 1)] = -1.0;
        let s = Subspace::span(4, &[e(4, 0)], RANK_TOL);
        let perp = symplectic_orthogonal(&omega, &s).unwrap();
        let expected = Subspace::span(4, &[e(4, 0), e(4, 1), e(4, 3)], RANK_TOL);
        assert!(perp.same_span(&expected, 1e-12));
        assert_eq!(symplectic_orthogonal(&omega, &Subspace::full(4)).unwrap().dim(), 0);
    }

    #[test]
    fn degenerate_form_is_rejected() {
        let omega = DMatrix::zeros(2, 2);
        let s = Subspace::span(2, &[e(2, 0)], RANK_TOL);
        assert!(matches!(symplectic_orthogonal(&omega, &s), Err(NhError::Degenerate { .. })));
    }

    #[test]
    fn intersection_of_planes() {
        let a = Subspace::span(3, &[e(3, 0), e(3, 1)], RANK_TOL);
        let b = Subspace::span(3, &[e(3, 1), e(3, 2)], RANK_TOL);
        let c = a.intersect(&b);
        assert_eq!(c.dim(), 1);
        assert!(c.contains(&e(3, 1), 1e-12));
        assert_eq!(a.sum(&b).dim(), 3);
    }

    #[test]
    fn generic_solve_matches_lu() {
        let a = vec![vec![2.0, 1.0, 0.0], vec![1.0, 3.0, 1.0], vec![0.0, 1.0, 4.0]];
        let b = vec![1.0, 2.0, 3.0];
        let x = solve_real(a.clone(), b.clone()).unwrap();
        let am = DMatrix::from_fn(3, 3, |i, j| a[i][j]);
        let xm = solve(&am, &to_dvec(&b)).unwrap();
        for i in 0..3 {
            assert!((x[i] - xm[i]).abs() < 1e-14);
        }
    }
}
