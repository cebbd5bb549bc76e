//! Dense symmetric-matrix primitives.
//!
//! Everything downstream (covariance maps, LMI assembly, the PSD projection
//! inside the conic solver) works on [`SymMatrix`], a thin wrapper around a
//! `nalgebra::DMatrix<f64>` whose two triangles are kept bit-identical.

use std::ops::Deref;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Default relative tolerance for PSD tests (scaled by the largest |eigenvalue|).
pub const PSD_TOL: f64 = 1e-9;

/// Dense real symmetric matrix. `entries[(i, j)] == entries[(j, i)]` exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Symmetrizes `m` as `(m + mᵀ) / 2`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "symmetric matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self::symmetrize(m))
    }

    /// Builds from the lower triangle of `m`, mirroring it into the upper one.
    pub fn from_lower(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        SymMatrix(DMatrix::from_fn(n, n, |i, j| if i >= j { m[(i, j)] } else { m[(j, i)] }))
    }

    pub fn from_row_slice(dim: usize, data: &[f64]) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::Dimension(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, data))
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        SymMatrix(DMatrix::from_fn(n, n, |i, j| if i == j { diag[i] } else { 0.0 }))
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        SymMatrix(DMatrix::identity(dim, dim) * s)
    }

    /// `(m + mᵀ) / 2` with the upper triangle copied onto the lower one, so the
    /// result is exactly symmetric even under floating-point rounding.
    pub fn symmetrize(m: DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        SymMatrix(out)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        max_abs(&self.0)
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// `Tr(self · other)` for symmetric arguments.
    pub fn dot(&self, other: &SymMatrix) -> f64 {
        self.0.component_mul(&other.0).sum()
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix::symmetrize(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix::symmetrize(&self.0 - &other.0)
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix(&self.0 * s)
    }

    /// `T · self · Tᵀ`.
    pub fn congruence(&self, t: &DMatrix<f64>) -> SymMatrix {
        SymMatrix::symmetrize(t * &self.0 * t.transpose())
    }

    /// Principal sub-block `[start, start + len)`.
    pub fn principal(&self, start: usize, len: usize) -> SymMatrix {
        SymMatrix(self.0.view((start, start), (len, len)).into_owned())
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(sym_eig(self)?.values[0])
    }

    pub fn max_eigenvalue(&self) -> Result<f64> {
        let d = sym_eig(self)?;
        Ok(d.values[d.values.len() - 1])
    }

    /// PSD test with tolerance `tol` relative to the largest |eigenvalue|.
    pub fn is_psd(&self, tol: f64) -> Result<bool> {
        let d = sym_eig(self)?;
        let scale = d.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Ok(d.values[0] >= -tol * scale.max(f64::MIN_POSITIVE))
    }
}

impl Deref for SymMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Eigendecomposition `M = V diag(values) Vᵀ` with ascending eigenvalues.
#[derive(Clone, Debug)]
pub struct EigenDecomp {
    pub values: Vec<f64>,
    /// Column `i` is the unit eigenvector for `values[i]`.
    pub vectors: DMatrix<f64>,
}

impl EigenDecomp {
    pub fn reconstruct(&self) -> SymMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            scaled.column_mut(j).scale_mut(self.values[j]);
        }
        SymMatrix::symmetrize(scaled * self.vectors.transpose())
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;
const DROP_TOL: f64 = f64::EPSILON * 1e-3;

/// Symmetric eigendecomposition by the cyclic Jacobi method.
pub fn sym_eig(m: &SymMatrix) -> Result<EigenDecomp> {
    if !m.is_finite() {
        return Err(Error::Input("matrix has non-finite entries".into()));
    }
    jacobi(m.0.as_slice().to_vec(), DMatrix::identity(m.dim(), m.dim()), m.max_abs())
}

/// As [`sym_eig`], but starts the rotations from the orthogonal `basis`
/// (typically the eigenvectors of a nearby matrix), so that only the residual
/// off-diagonal part of `basisᵀ M basis` has to be annihilated.
pub fn sym_eig_from(m: &SymMatrix, basis: &DMatrix<f64>) -> Result<EigenDecomp> {
    if !m.is_finite() {
        return Err(Error::Input("matrix has non-finite entries".into()));
    }
    if basis.shape() != m.shape() {
        return Err(Error::Dimension(format!("basis is {:?}, matrix is {:?}", basis.shape(), m.shape())));
    }
    let rotated = SymMatrix::symmetrize(basis.transpose() * &m.0 * basis);
    jacobi(rotated.0.as_slice().to_vec(), basis.clone(), m.max_abs())
}

fn jacobi(mut a: Vec<f64>, v: DMatrix<f64>, scale: f64) -> Result<EigenDecomp> {
    let n = v.nrows();
    // Column-major working copies; columns p and q are the hot paths.
    let mut v: Vec<f64> = v.as_slice().to_vec();

    if scale > 0.0 {
        for _ in 0..JACOBI_MAX_SWEEPS {
            let mut off = 0.0;
            for j in 0..n {
                for i in 0..j {
                    off += a[i + j * n] * a[i + j * n];
                }
            }
            if off == 0.0 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[p + q * n];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = a[p + p * n];
                    let aqq = a[q + q * n];
                    // Entries below the precision of both diagonals (or far
                    // below that of the whole matrix) are dropped outright.
                    let g = 100.0 * apq.abs();
                    let negligible = app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs();
                    if negligible || apq.abs() <= DROP_TOL * scale {
                        a[p + q * n] = 0.0;
                        a[q + p * n] = 0.0;
                        continue;
                    }
                    // Rutishauser's stable rotation.
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = if theta == 0.0 {
                        1.0
                    } else {
                        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                    };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    let tau = s / (1.0 + c);

                    rotate_columns(&mut a, n, p, q, s, tau);
                    a[p + p * n] = app - t * apq;
                    a[q + q * n] = aqq + t * apq;
                    a[p + q * n] = 0.0;
                    a[q + p * n] = 0.0;
                    for r in 0..n {
                        if r != p && r != q {
                            a[p + r * n] = a[r + p * n];
                            a[q + r * n] = a[r + q * n];
                        }
                    }
                    rotate_columns(&mut v, n, p, q, s, tau);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i + i * n].total_cmp(&a[j + j * n]));
    let values = order.iter().map(|&i| a[i + i * n]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[r + order[c] * n]);
    Ok(EigenDecomp { values, vectors })
}

/// Applies the rotation `(s, τ = s/(1+c))` to columns `p < q` of a
/// column-major `n × n` buffer.
fn rotate_columns(buf: &mut [f64], n: usize, p: usize, q: usize, s: f64, tau: f64) {
    let (head, tail) = buf.split_at_mut(q * n);
    let cp = &mut head[p * n..p * n + n];
    let cq = &mut tail[..n];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = xp - s * (xq + tau * xp);
        *y = xq + s * (xp - tau * xq);
    }
}

/// Frobenius-nearest PSD matrix: negative eigenvalues clamped to zero.
pub fn psd_project(m: &SymMatrix) -> Result<SymMatrix> {
    Ok(clamp_negative(m, sym_eig(m)?))
}

/// [`psd_project`] seeded with an approximate eigenbasis. Also returns the
/// computed eigenvectors so callers can seed the next projection.
pub fn psd_project_from(m: &SymMatrix, basis: &DMatrix<f64>) -> Result<(SymMatrix, DMatrix<f64>)> {
    let d = sym_eig_from(m, basis)?;
    let vectors = d.vectors.clone();
    Ok((clamp_negative(m, d), vectors))
}

fn clamp_negative(m: &SymMatrix, mut d: EigenDecomp) -> SymMatrix {
    if d.values.first().is_none_or(|&v| v >= 0.0) {
        return m.clone();
    }
    for v in d.values.iter_mut() {
        *v = v.max(0.0);
    }
    d.reconstruct()
}

/// `P₁₁ − P₁₂ P₂₂⁻¹ P₁₂ᵀ` for the split after the leading `split` rows/columns.
pub fn schur_complement(p: &SymMatrix, split: usize) -> Result<SymMatrix> {
    let n = p.dim();
    if split == 0 || split >= n {
        return Err(Error::Dimension(format!("split {split} outside 1..{n}")));
    }
    let tail = n - split;
    let p11 = p.0.view((0, 0), (split, split));
    let p12 = p.0.view((0, split), (split, tail));
    let p22 = p.principal(split, tail);

    let d = sym_eig(&p22)?;
    let norm = d.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min_abs = d.values.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if norm == 0.0 || min_abs <= 1e-12 * norm {
        return Err(Error::SingularBlock(format!(
            "trailing block has min |eigenvalue| {min_abs:e} (norm {norm:e})"
        )));
    }
    // P₂₂⁻¹ P₁₂ᵀ through the eigenbasis (P₂₂ may be indefinite here).
    let vt_p21 = d.vectors.transpose() * p12.transpose();
    let mut scaled = vt_p21.clone();
    for (i, lambda) in d.values.iter().enumerate() {
        scaled.row_mut(i).scale_mut(1.0 / lambda);
    }
    let correction = vt_p21.transpose() * scaled;
    Ok(SymMatrix::symmetrize(p11.into_owned() - correction))
}

/// Solves `M X = B` for symmetric positive definite `M` via Cholesky.
pub fn solve_spd(m: &SymMatrix, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if b.nrows() != m.dim() {
        return Err(Error::Dimension(format!(
            "right-hand side has {} rows, matrix is {}x{}",
            b.nrows(),
            m.dim(),
            m.dim()
        )));
    }
    let chol = nalgebra::Cholesky::new(m.0.clone())
        .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization broke down".into()))?;
    Ok(chol.solve(b))
}

/// Block-diagonal assembly of symmetric blocks.
pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Half-vectorization: upper triangle, column by column, off-diagonal entries
/// scaled by √2 so that `svec(A)·svec(B) = Tr(AB)`.
pub fn svec(m: &SymMatrix) -> Vec<f64> {
    let n = m.dim();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for i in 0..=j {
            let v = m[(i, j)];
            out.push(if i == j { v } else { v * std::f64::consts::SQRT_2 });
        }
    }
    out
}

/// Inverse of [`svec`].
pub fn smat(v: &[f64], dim: usize) -> SymMatrix {
    debug_assert_eq!(v.len(), svec_len(dim));
    let mut m = DMatrix::zeros(dim, dim);
    let mut idx = 0;
    for j in 0..dim {
        for i in 0..=j {
            let x = if i == j { v[idx] } else { v[idx] * std::f64::consts::FRAC_1_SQRT_2 };
            m[(i, j)] = x;
            m[(j, i)] = x;
            idx += 1;
        }
    }
    SymMatrix(m)
}

pub fn svec_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Position of entry `(i, j)` (`i <= j`) in [`svec`] order.
pub fn svec_index(i: usize, j: usize) -> usize {
    debug_assert!(i <= j);
    j * (j + 1) / 2 + i
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(dim: usize, data: &[f64]) -> SymMatrix {
        SymMatrix::from_row_slice(dim, data).unwrap()
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let d = sym_eig(&SymMatrix::identity(2)).unwrap();
        assert_eq!(d.values, vec![1.0, 1.0]);

        let d = sym_eig(&SymMatrix::from_diagonal(&[3.0, 1.0])).unwrap();
        assert_eq!(d.values, vec![1.0, 3.0]);
        assert_eq!(d.vectors[(1, 0)].abs(), 1.0);
        assert_eq!(d.vectors[(0, 1)].abs(), 1.0);
    }

    #[test]
    fn eig_two_by_two() {
        let d = sym_eig(&sym(2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        assert!((d.values[0] - 1.0).abs() < 1e-14);
        assert!((d.values[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn eig_rejects_nan() {
        let m = SymMatrix::from_diagonal(&[1.0, f64::NAN]);
        assert!(matches!(sym_eig(&m), Err(Error::Input(_))));
    }

    #[test]
    fn eig_zero_matrix() {
        let d = sym_eig(&SymMatrix::zeros(3)).unwrap();
        assert_eq!(d.values, vec![0.0; 3]);
    }

    #[test]
    fn projection_cases() {
        let p = sym(2, &[2.0, 1.0, 1.0, 2.0]);
        assert_eq!(psd_project(&p).unwrap(), p);

        let q = psd_project(&SymMatrix::from_diagonal(&[1.0, -1.0])).unwrap();
        assert!((q[(0, 0)] - 1.0).abs() < 1e-15 && q[(1, 1)].abs() < 1e-15);

        let r = psd_project(&sym(2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        for v in r.iter() {
            assert!((v - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn seeded_projection_matches_cold_start() {
        let a = sym(3, &[1.0, 2.0, 0.5, 2.0, -3.0, 0.1, 0.5, 0.1, 0.2]);
        let b = sym(3, &[1.1, 1.9, 0.5, 1.9, -2.9, 0.2, 0.5, 0.2, 0.3]);
        let basis = sym_eig(&a).unwrap().vectors;
        let (warm, vectors) = psd_project_from(&b, &basis).unwrap();
        assert!(warm.sub(&psd_project(&b).unwrap()).max_abs() < 1e-13);
        let ortho = vectors.transpose() * &vectors - DMatrix::identity(3, 3);
        assert!(ortho.amax() < 1e-14);
        assert!(psd_project_from(&b, &DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn schur_cases() {
        let s = schur_complement(&sym(2, &[2.0, 1.0, 1.0, 2.0]), 1).unwrap();
        assert!((s[(0, 0)] - 1.5).abs() < 1e-15);

        let bd = SymMatrix::new(block_diag(&[
            &DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            &DMatrix::from_row_slice(1, 1, &[4.0]),
        ]))
        .unwrap();
        let s = schur_complement(&bd, 2).unwrap();
        assert_eq!(s, bd.principal(0, 2));

        let err = schur_complement(&sym(2, &[1.0, 0.0, 0.0, 0.0]), 1);
        assert!(matches!(err, Err(Error::SingularBlock(_))));
    }

    #[test]
    fn spd_solves() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(solve_spd(&SymMatrix::identity(2), &b).unwrap(), b);

        let x = solve_spd(&SymMatrix::from_diagonal(&[2.0, 4.0]), &DMatrix::identity(2, 2)).unwrap();
        assert!((x[(0, 0)] - 0.5).abs() < 1e-15 && (x[(1, 1)] - 0.25).abs() < 1e-15);

        let x = solve_spd(&sym(2, &[2.0, 1.0, 1.0, 2.0]), &DMatrix::from_element(2, 1, 1.0)).unwrap();
        assert!((x[0] - 1.0 / 3.0).abs() < 1e-15 && (x[1] - 1.0 / 3.0).abs() < 1e-15);

        let err = solve_spd(&SymMatrix::from_diagonal(&[1.0, -1.0]), &DMatrix::identity(2, 2));
        assert!(matches!(err, Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn svec_is_isometric() {
        let a = sym(3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let b = sym(3, &[0.5, -1.0, 0.0, -1.0, 2.0, 1.5, 0.0, 1.5, -3.0]);
        let inner: f64 = svec(&a).iter().zip(svec(&b)).map(|(x, y)| x * y).sum();
        assert!((inner - a.dot(&b)).abs() < 1e-12);
        assert!(smat(&svec(&a), 3).sub(&a).max_abs() < 1e-15);
        assert_eq!(svec_index(1, 2), 4);
    }
}
