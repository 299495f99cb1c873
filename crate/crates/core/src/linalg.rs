//! Dense decompositions on small matrices: symmetric eigensolve, thin SVD,
//! SPD square roots and inverses, thin QR, and general inverses.
//!
//! Everything here is written against `ndarray` with fixed sweep orders and
//! explicit sign conventions, so results are bitwise reproducible for a given
//! input regardless of thread count or platform BLAS. The matrices involved
//! are small (factor Grams, unfoldings of desk-scale problems), so Jacobi
//! methods are both fast enough and the most accurate option.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Thin singular value decomposition truncated to `k` triplets.
///
/// `u` is `rows x k` and `v` is `cols x k`, both with orthonormal columns;
/// `s` is nonincreasing and nonnegative. The sign convention fixes the
/// largest-magnitude entry of each column of `u` to be positive.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Array2<f64>,
    pub s: Array1<f64>,
    pub v: Array2<f64>,
    pub k: usize,
}

fn check_finite(m: &Array2<f64>, what: &str) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{what} contains a non-finite entry")));
    }
    Ok(())
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// The input is symmetrized as `(A + A^T)/2` before iterating. Returns
/// eigenvalues in nonincreasing order and the matching eigenvectors as
/// columns, with each eigenvector's largest-magnitude entry positive.
pub fn sym_eig(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimMismatch(format!(
            "eigensolve needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    check_finite(a, "eigensolve input")?;

    let mut m = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            m[[i, j]] = 0.5 * (a[[i, j]] + a[[j, i]]);
        }
    }
    let mut v = Array2::<f64>::eye(n);

    for _sweep in 0..100 {
        let mut off = 0.0;
        let mut diag = 0.0;
        for i in 0..n {
            diag += m[[i, i]] * m[[i, i]];
            for j in (i + 1)..n {
                off += 2.0 * m[[i, j]] * m[[i, j]];
            }
        }
        let scale = (off + diag).sqrt();
        if off.sqrt() <= 1e-15 * scale || off == 0.0 {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                if apq.abs() <= 1e-300 || apq.abs() <= 1e-17 * (app.abs() + aqq.abs()) {
                    continue;
                }
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - sn * mkq;
                    m[[k, q]] = sn * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - sn * mqk;
                    m[[q, k]] = sn * mpk + c * mqk;
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - sn * vkq;
                    v[[k, q]] = sn * vkp + c * vkq;
                }
                m[[p, q]] = 0.0;
                m[[q, p]] = 0.0;
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].partial_cmp(&m[[i, i]]).unwrap());
    let mut vals = Array1::<f64>::zeros(n);
    let mut vecs = Array2::<f64>::zeros((n, n));
    for (pos, &idx) in order.iter().enumerate() {
        vals[pos] = m[[idx, idx]];
        for row in 0..n {
            vecs[[row, pos]] = v[[row, idx]];
        }
    }
    fix_column_signs(&mut vecs, None);
    Ok((vals, vecs))
}

/// Flips column signs so each column's largest-magnitude entry (smallest row
/// index on exact ties) is positive; a paired matrix has the same columns
/// flipped to preserve products.
fn fix_column_signs(u: &mut Array2<f64>, mut paired: Option<&mut Array2<f64>>) {
    for j in 0..u.ncols() {
        let mut best_row = 0;
        let mut best_abs = -1.0;
        for i in 0..u.nrows() {
            let a = u[[i, j]].abs();
            if a > best_abs {
                best_abs = a;
                best_row = i;
            }
        }
        if u[[best_row, j]] < 0.0 {
            for i in 0..u.nrows() {
                u[[i, j]] = -u[[i, j]];
            }
            if let Some(p) = paired.as_deref_mut() {
                for i in 0..p.nrows() {
                    p[[i, j]] = -p[[i, j]];
                }
            }
        }
    }
}

/// Thin SVD of `m` keeping the top `k` singular triplets, computed by
/// one-sided Jacobi orthogonalization of the columns.
pub fn thin_svd(m: &Array2<f64>, k: usize) -> Result<SvdResult> {
    let (rows, cols) = m.dim();
    if k < 1 || k > rows.min(cols) {
        return Err(Error::InvalidArgument(format!(
            "svd rank k = {k} out of range 1..={}",
            rows.min(cols)
        )));
    }
    check_finite(m, "svd input")?;
    if rows < cols {
        let t = thin_svd_tall(&m.t().to_owned(), k)?;
        let mut u = t.v;
        let mut v = t.u;
        fix_column_signs(&mut u, Some(&mut v));
        return Ok(SvdResult { u, s: t.s, v, k });
    }
    let mut out = thin_svd_tall(m, k)?;
    fix_column_signs(&mut out.u, Some(&mut out.v));
    Ok(out)
}

fn thin_svd_tall(m: &Array2<f64>, k: usize) -> Result<SvdResult> {
    let (rows, cols) = m.dim();
    let mut w = m.to_owned();
    let mut v = Array2::<f64>::eye(cols);

    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..cols.saturating_sub(1) {
            for q in (p + 1)..cols {
                let mut dpp = 0.0;
                let mut dqq = 0.0;
                let mut dpq = 0.0;
                for i in 0..rows {
                    let a = w[[i, p]];
                    let b = w[[i, q]];
                    dpp += a * a;
                    dqq += b * b;
                    dpq += a * b;
                }
                if dpq.abs() <= 1e-300 || dpq.abs() <= 1e-16 * (dpp * dqq).sqrt() {
                    continue;
                }
                rotated = true;
                let tau = (dqq - dpp) / (2.0 * dpq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;
                for i in 0..rows {
                    let a = w[[i, p]];
                    let b = w[[i, q]];
                    w[[i, p]] = c * a - sn * b;
                    w[[i, q]] = sn * a + c * b;
                }
                for i in 0..cols {
                    let a = v[[i, p]];
                    let b = v[[i, q]];
                    v[[i, p]] = c * a - sn * b;
                    v[[i, q]] = sn * a + c * b;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut norms: Vec<f64> = (0..cols)
        .map(|j| (0..rows).map(|i| w[[i, j]] * w[[i, j]]).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap());

    let mut s = Array1::<f64>::zeros(k);
    let mut u = Array2::<f64>::zeros((rows, k));
    let mut vk = Array2::<f64>::zeros((cols, k));
    for (pos, &idx) in order.iter().take(k).enumerate() {
        s[pos] = norms[idx];
        for i in 0..cols {
            vk[[i, pos]] = v[[i, idx]];
        }
        if norms[idx] > f64::MIN_POSITIVE {
            for i in 0..rows {
                u[[i, pos]] = w[[i, idx]] / norms[idx];
            }
        }
    }
    norms.truncate(cols);
    complete_zero_columns(&mut u, &s);
    Ok(SvdResult { u, s, v: vk, k })
}

/// Replaces columns paired with (numerically) zero singular values by vectors
/// orthonormal to the rest, taken deterministically from the canonical basis.
fn complete_zero_columns(u: &mut Array2<f64>, s: &Array1<f64>) {
    let (rows, k) = u.dim();
    for j in 0..k {
        if s[j] > f64::MIN_POSITIVE {
            continue;
        }
        let mut filled = false;
        for cand in 0..rows {
            let mut col = Array1::<f64>::zeros(rows);
            col[cand] = 1.0;
            // Two rounds of Gram-Schmidt against the nonzero columns.
            for _ in 0..2 {
                for other in 0..k {
                    if other == j {
                        continue;
                    }
                    let dot: f64 = (0..rows).map(|i| col[i] * u[[i, other]]).sum();
                    for i in 0..rows {
                        col[i] -= dot * u[[i, other]];
                    }
                }
            }
            let norm = col.dot(&col).sqrt();
            if norm > 0.5 {
                for i in 0..rows {
                    u[[i, j]] = col[i] / norm;
                }
                filled = true;
                break;
            }
        }
        if !filled {
            // k <= rows guarantees a complement exists; unreachable in
            // practice, but leave the zero column rather than panic.
        }
    }
}

/// Square root and inverse square root of a symmetric positive definite
/// matrix, returned as `(A^{1/2}, A^{-1/2})`.
///
/// The input is symmetrized internally. Eigenvalues must exceed the relative
/// floor `1e-12 * trace(A)/dim`; otherwise a singularity error is raised.
pub fn spd_sqrt(a: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    let n = a.nrows();
    let (vals, vecs) = sym_eig(a)?;
    let trace: f64 = (0..n).map(|i| a[[i, i]]).sum();
    let floor = 1e-12 * trace / n as f64;
    if !(trace > 0.0) || vals.iter().any(|&l| l <= floor) {
        return Err(Error::Singular(format!(
            "spd sqrt: eigenvalue {:.3e} at or below floor {:.3e}",
            vals.iter().cloned().fold(f64::INFINITY, f64::min),
            floor
        )));
    }
    let mut sq = Array2::<f64>::zeros((n, n));
    let mut isq = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut acc_s = 0.0;
            let mut acc_i = 0.0;
            for l in 0..n {
                let root = vals[l].sqrt();
                acc_s += vecs[[i, l]] * root * vecs[[j, l]];
                acc_i += vecs[[i, l]] / root * vecs[[j, l]];
            }
            sq[[i, j]] = acc_s;
            isq[[i, j]] = acc_i;
        }
    }
    Ok((sq, isq))
}

/// Inverse of a symmetric positive definite matrix via its eigensolve, with
/// an additive ridge of `ridge_eps * trace/dim` on the eigenvalues.
pub fn spd_inv(a: &Array2<f64>, ridge_eps: f64) -> Result<Array2<f64>> {
    let n = a.nrows();
    let (vals, vecs) = sym_eig(a)?;
    let trace: f64 = (0..n).map(|i| a[[i, i]]).sum();
    if !(trace > 0.0) {
        return Err(Error::Singular("spd inverse: nonpositive trace".into()));
    }
    let mean = trace / n as f64;
    let shift = ridge_eps * mean;
    let floor = 1e-12 * mean;
    let mut inv = Array2::<f64>::zeros((n, n));
    for l in 0..n {
        let lam = vals[l] + shift;
        if !(lam > floor && lam > 0.0) {
            return Err(Error::Singular(format!(
                "spd inverse: eigenvalue {:.3e} at or below floor {:.3e}",
                lam, floor
            )));
        }
        let w = 1.0 / lam;
        for i in 0..n {
            for j in 0..n {
                inv[[i, j]] += vecs[[i, l]] * w * vecs[[j, l]];
            }
        }
    }
    Ok(inv)
}

/// Thin Q factor of a Householder QR, with the sign convention that the
/// diagonal of R is nonnegative. Requires `rows >= cols`.
pub fn qr_thin(a: &Array2<f64>) -> Result<Array2<f64>> {
    let (m, n) = a.dim();
    if m < n {
        return Err(Error::DimMismatch(format!(
            "thin QR needs rows >= cols, got {m}x{n}"
        )));
    }
    check_finite(a, "qr input")?;
    let mut r = a.to_owned();
    // Householder vectors, stored dense per step.
    let mut hh: Vec<Option<Array1<f64>>> = Vec::with_capacity(n);
    let mut diag_sign = vec![1.0f64; n];
    for k in 0..n {
        let len = m - k;
        let mut v = Array1::<f64>::zeros(len);
        for i in 0..len {
            v[i] = r[[k + i, k]];
        }
        let norm = v.dot(&v).sqrt();
        if norm == 0.0 {
            hh.push(None);
            continue;
        }
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vtv = v.dot(&v);
        if vtv == 0.0 {
            hh.push(None);
            continue;
        }
        for col in k..n {
            let mut dot = 0.0;
            for i in 0..len {
                dot += v[i] * r[[k + i, col]];
            }
            let f = 2.0 * dot / vtv;
            for i in 0..len {
                r[[k + i, col]] -= f * v[i];
            }
        }
        diag_sign[k] = if r[[k, k]] < 0.0 { -1.0 } else { 1.0 };
        hh.push(Some(v));
    }
    // Accumulate Q = H_0 ... H_{n-1} applied to the first n canonical columns.
    let mut q = Array2::<f64>::zeros((m, n));
    for j in 0..n {
        q[[j, j]] = 1.0;
    }
    for k in (0..n).rev() {
        if let Some(v) = &hh[k] {
            let len = m - k;
            let vtv = v.dot(v);
            for col in 0..n {
                let mut dot = 0.0;
                for i in 0..len {
                    dot += v[i] * q[[k + i, col]];
                }
                let f = 2.0 * dot / vtv;
                for i in 0..len {
                    q[[k + i, col]] -= f * v[i];
                }
            }
        }
    }
    for j in 0..n {
        if diag_sign[j] < 0.0 {
            for i in 0..m {
                q[[i, j]] = -q[[i, j]];
            }
        }
    }
    Ok(q)
}

/// Inverse of a small general square matrix by Gauss-Jordan elimination with
/// partial pivoting. Rejects matrices with condition worse than ~1e13.
pub fn inv_general(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimMismatch(format!(
            "inverse needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    check_finite(a, "inverse input")?;
    let scale = a.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::Singular("inverse of a zero matrix".into()));
    }
    let mut work = a.to_owned();
    let mut inv = Array2::<f64>::eye(n);
    for col in 0..n {
        let mut piv = col;
        let mut best = work[[col, col]].abs();
        for row in (col + 1)..n {
            let v = work[[row, col]].abs();
            if v > best {
                best = v;
                piv = row;
            }
        }
        if best <= 1e-13 * scale {
            return Err(Error::Singular(format!(
                "pivot {best:.3e} too small at column {col}"
            )));
        }
        if piv != col {
            for j in 0..n {
                work.swap([col, j], [piv, j]);
                inv.swap([col, j], [piv, j]);
            }
        }
        let d = work[[col, col]];
        for j in 0..n {
            work[[col, j]] /= d;
            inv[[col, j]] /= d;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = work[[row, col]];
            if f != 0.0 {
                for j in 0..n {
                    work[[row, j]] -= f * work[[col, j]];
                    inv[[row, j]] -= f * inv[[col, j]];
                }
            }
        }
    }
    Ok(inv)
}

/// Principal square root of a small invertible matrix by Denman-Beavers
/// iteration. Returns `None` when the iteration does not converge (e.g.
/// eigenvalues on the closed negative real axis).
pub fn mat_sqrt_gl(x: &Array2<f64>) -> Option<Array2<f64>> {
    let n = x.nrows();
    if x.ncols() != n || x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut y = x.to_owned();
    let mut z = Array2::<f64>::eye(n);
    for _ in 0..80 {
        let y_inv = inv_general(&y).ok()?;
        let z_inv = inv_general(&z).ok()?;
        let y_next = (&y + &z_inv) * 0.5;
        let z_next = (&z + &y_inv) * 0.5;
        let diff = (&y_next - &y).iter().map(|v| v * v).sum::<f64>().sqrt();
        let size = y_next.iter().map(|v| v * v).sum::<f64>().sqrt();
        y = y_next;
        z = z_next;
        if diff <= 1e-14 * (1.0 + size) {
            break;
        }
    }
    let resid = (&y.dot(&y) - x).iter().map(|v| v * v).sum::<f64>().sqrt();
    let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if resid <= 1e-8 * (1.0 + xnorm) {
        Some(y)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn randn(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        })
    }

    #[test]
    fn sym_eig_diagonal() {
        let a = array![[3.0, 0.0], [0.0, 1.0]];
        let (vals, vecs) = sym_eig(&a).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-14);
        assert!((vals[1] - 1.0).abs() < 1e-14);
        assert!((vecs[[0, 0]].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sym_eig_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = randn(5, 5, &mut rng);
        let a = z.t().dot(&z);
        let (vals, vecs) = sym_eig(&a).unwrap();
        let lam = Array2::from_diag(&vals);
        let back = vecs.dot(&lam).dot(&vecs.t());
        let err = (&back - &a).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err < 1e-10, "reconstruction error {err}");
        // Orthonormal eigenvectors.
        let gram = vecs.t().dot(&vecs);
        let eye_err = (&gram - &Array2::<f64>::eye(5)).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(eye_err < 1e-12);
    }

    #[test]
    fn thin_svd_diagonal_case() {
        let a = array![[3.0, 0.0], [0.0, 1.0]];
        let r = thin_svd(&a, 2).unwrap();
        assert!((r.s[0] - 3.0).abs() < 1e-14);
        assert!((r.s[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn thin_svd_rank_one() {
        let u = array![[1.0], [2.0], [2.0]];
        let v = array![[3.0], [0.0], [4.0], [0.0]];
        let m = u.dot(&v.t());
        let r = thin_svd(&m, 3).unwrap();
        // ||u|| ||v|| = 3 * 5 = 15.
        assert!((r.s[0] - 15.0).abs() < 1e-12);
        assert!(r.s[1].abs() < 1e-10);
        assert!(r.s[2].abs() < 1e-10);
        let gram = r.u.t().dot(&r.u);
        let eye_err = (&gram - &Array2::<f64>::eye(3)).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(eye_err < 1e-10, "U not orthonormal: {eye_err}");
    }

    #[test]
    fn thin_svd_reconstructs_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = randn(6, 4, &mut rng);
        let r = thin_svd(&m, 4).unwrap();
        let back = r.u.dot(&Array2::from_diag(&r.s)).dot(&r.v.t());
        let err = (&back - &m).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err < 1e-8, "reconstruction error {err}");
    }

    #[test]
    fn thin_svd_matches_gram_eigensolve() {
        // Independent route: singular values equal sqrt of eigenvalues of M^T M.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let m = randn(8, 6, &mut rng);
            let r = thin_svd(&m, 6).unwrap();
            let (vals, _) = sym_eig(&m.t().dot(&m)).unwrap();
            for j in 0..6 {
                let expect = vals[j].max(0.0).sqrt();
                assert!(
                    (r.s[j] - expect).abs() <= 1e-8 * expect.max(1.0),
                    "sigma_{j}: {} vs {}",
                    r.s[j],
                    expect
                );
            }
        }
    }

    #[test]
    fn thin_svd_sign_convention() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = randn(5, 3, &mut rng);
        let r = thin_svd(&m, 3).unwrap();
        for j in 0..3 {
            let mut best = 0;
            for i in 0..5 {
                if r.u[[i, j]].abs() > r.u[[best, j]].abs() {
                    best = i;
                }
            }
            assert!(r.u[[best, j]] > 0.0);
        }
    }

    #[test]
    fn thin_svd_wide_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = randn(3, 7, &mut rng);
        let r = thin_svd(&m, 3).unwrap();
        let back = r.u.dot(&Array2::from_diag(&r.s)).dot(&r.v.t());
        let err = (&back - &m).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err < 1e-8);
    }

    #[test]
    fn thin_svd_k_out_of_range() {
        let m = Array2::<f64>::eye(3);
        assert!(thin_svd(&m, 0).is_err());
        assert!(thin_svd(&m, 4).is_err());
    }

    #[test]
    fn thin_svd_zero_matrix_is_orthonormal() {
        let m = Array2::<f64>::zeros((4, 3));
        let r = thin_svd(&m, 2).unwrap();
        assert_eq!(r.s[0], 0.0);
        let gram = r.u.t().dot(&r.u);
        let eye_err = (&gram - &Array2::<f64>::eye(2)).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(eye_err < 1e-12);
    }

    #[test]
    fn spd_sqrt_identity_and_diagonal() {
        let (sq, isq) = spd_sqrt(&Array2::<f64>::eye(3)).unwrap();
        assert!((&sq - &Array2::<f64>::eye(3)).iter().all(|v| v.abs() < 1e-14));
        assert!((&isq - &Array2::<f64>::eye(3)).iter().all(|v| v.abs() < 1e-14));

        let a = array![[4.0, 0.0], [0.0, 9.0]];
        let (sq, isq) = spd_sqrt(&a).unwrap();
        assert!((sq[[0, 0]] - 2.0).abs() < 1e-12);
        assert!((sq[[1, 1]] - 3.0).abs() < 1e-12);
        assert!((isq[[0, 0]] - 0.5).abs() < 1e-12);
        assert!((isq[[1, 1]] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn spd_sqrt_random_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let z = randn(3, 3, &mut rng);
        let a = z.t().dot(&z) + Array2::<f64>::eye(3);
        let (sq, isq) = spd_sqrt(&a).unwrap();
        let back = sq.dot(&sq);
        let err = (&back - &a).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err < 1e-8);
        let prod = sq.dot(&isq);
        let eye_err = (&prod - &Array2::<f64>::eye(3)).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(eye_err < 1e-10);
    }

    #[test]
    fn spd_sqrt_rejects_singular() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(matches!(spd_sqrt(&a), Err(Error::Singular(_))));
    }

    #[test]
    fn spd_inv_matches_identity_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let z = randn(4, 4, &mut rng);
        let a = z.t().dot(&z) + Array2::<f64>::eye(4);
        let inv = spd_inv(&a, 0.0).unwrap();
        let prod = a.dot(&inv);
        let eye_err = (&prod - &Array2::<f64>::eye(4)).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(eye_err < 1e-10);
    }

    #[test]
    fn spd_inv_ridge_rescues_singular() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(spd_inv(&a, 0.0).is_err());
        assert!(spd_inv(&a, 1e-6).is_ok());
    }

    #[test]
    fn qr_thin_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = randn(7, 4, &mut rng);
        let q = qr_thin(&a).unwrap();
        let gram = q.t().dot(&q);
        let eye_err = (&gram - &Array2::<f64>::eye(4)).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(eye_err < 1e-12);
        // Q spans the same column space: projecting A onto Q reproduces A.
        let back = q.dot(&q.t().dot(&a));
        let err = (&back - &a).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err < 1e-10);
    }

    #[test]
    fn inv_general_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = randn(4, 4, &mut rng) + Array2::<f64>::eye(4) * 3.0;
        let inv = inv_general(&a).unwrap();
        let prod = a.dot(&inv);
        let eye_err = (&prod - &Array2::<f64>::eye(4)).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(eye_err < 1e-10);
    }

    #[test]
    fn inv_general_rejects_singular() {
        let a = array![[1.0, 2.0], [2.0, 4.0]];
        assert!(matches!(inv_general(&a), Err(Error::Singular(_))));
    }

    #[test]
    fn mat_sqrt_gl_agrees_on_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let z = randn(3, 3, &mut rng);
        let a = z.t().dot(&z) + Array2::<f64>::eye(3);
        let s = mat_sqrt_gl(&a).unwrap();
        let err = (&s.dot(&s) - &a).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err < 1e-8);
    }

    #[test]
    fn mat_sqrt_gl_none_for_negative_scalar() {
        let a = array![[-1.0]];
        assert!(mat_sqrt_gl(&a).is_none());
    }
}
