//! Dense order-3 tensors: matricization, folding, mode products, Tucker
//! composition, and Frobenius inner products.
//!
//! Storage layout: element `(i1, i2, i3)` of a `(p1, p2, p3)` tensor lives at
//! offset `i1 + p1 * (i2 + p2 * i3)`, i.e. the first index varies fastest.
//! Matricization stacks the mode-k fibers as columns in lexicographic order
//! of the remaining indices, so the column index of element `(i1, i2, i3)` is
//!
//! - mode 1: `i2 + i3 * p2`
//! - mode 2: `i1 + i3 * p1`
//! - mode 3: `i1 + i2 * p1`
//!
//! Folding is the exact (bitwise) inverse of matricization for every mode.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Dense order-3 tensor of `f64` values.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    data: Vec<f64>,
}

impl Tensor3 {
    /// Builds a tensor from its flat buffer; `data.len()` must equal
    /// `p1 * p2 * p3`.
    pub fn new(dims: (usize, usize, usize), data: Vec<f64>) -> Result<Self> {
        let (p1, p2, p3) = dims;
        if p1 == 0 || p2 == 0 || p3 == 0 {
            return Err(Error::InvalidArgument("tensor dims must be positive".into()));
        }
        if data.len() != p1 * p2 * p3 {
            return Err(Error::DimMismatch(format!(
                "tensor data length {} does not match dims {}x{}x{}",
                data.len(),
                p1,
                p2,
                p3
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: (usize, usize, usize)) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.0 * dims.1 * dims.2],
        }
    }

    /// Stacks `p3` matrices of identical shape as frontal slices.
    pub fn from_slices(slices: &[Array2<f64>]) -> Result<Self> {
        if slices.is_empty() {
            return Err(Error::InvalidArgument("no slices given".into()));
        }
        let (p1, p2) = slices[0].dim();
        let p3 = slices.len();
        let mut t = Self::zeros((p1, p2, p3));
        for (i3, m) in slices.iter().enumerate() {
            if m.dim() != (p1, p2) {
                return Err(Error::DimMismatch(format!(
                    "slice {} has shape {:?}, expected {:?}",
                    i3,
                    m.dim(),
                    (p1, p2)
                )));
            }
            for i1 in 0..p1 {
                for i2 in 0..p2 {
                    *t.get_mut(i1, i2, i3) = m[[i1, i2]];
                }
            }
        }
        Ok(t)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    fn offset(&self, i1: usize, i2: usize, i3: usize) -> usize {
        i1 + self.dims.0 * (i2 + self.dims.1 * i3)
    }

    #[inline]
    pub fn get(&self, i1: usize, i2: usize, i3: usize) -> f64 {
        self.data[self.offset(i1, i2, i3)]
    }

    #[inline]
    pub fn get_mut(&mut self, i1: usize, i2: usize, i3: usize) -> &mut f64 {
        let o = self.offset(i1, i2, i3);
        &mut self.data[o]
    }

    /// Frontal slice `i3` as a `p1 x p2` matrix.
    pub fn slice_mat(&self, i3: usize) -> Array2<f64> {
        let (p1, p2, _) = self.dims;
        Array2::from_shape_fn((p1, p2), |(i1, i2)| self.get(i1, i2, i3))
    }

    /// Mode-`mode` matricization; `mode` must be 1, 2, or 3.
    pub fn matricize(&self, mode: usize) -> Result<Array2<f64>> {
        let (p1, p2, p3) = self.dims;
        match mode {
            1 => {
                let mut m = Array2::zeros((p1, p2 * p3));
                for i3 in 0..p3 {
                    for i2 in 0..p2 {
                        for i1 in 0..p1 {
                            m[[i1, i2 + i3 * p2]] = self.get(i1, i2, i3);
                        }
                    }
                }
                Ok(m)
            }
            2 => {
                let mut m = Array2::zeros((p2, p1 * p3));
                for i3 in 0..p3 {
                    for i2 in 0..p2 {
                        for i1 in 0..p1 {
                            m[[i2, i1 + i3 * p1]] = self.get(i1, i2, i3);
                        }
                    }
                }
                Ok(m)
            }
            3 => {
                let mut m = Array2::zeros((p3, p1 * p2));
                for i3 in 0..p3 {
                    for i2 in 0..p2 {
                        for i1 in 0..p1 {
                            m[[i3, i1 + i2 * p1]] = self.get(i1, i2, i3);
                        }
                    }
                }
                Ok(m)
            }
            _ => Err(Error::InvalidArgument(format!("mode {mode} not in {{1,2,3}}"))),
        }
    }

    /// Exact inverse of [`Tensor3::matricize`]: rebuilds the tensor with the
    /// given dims from a mode-`mode` unfolding.
    pub fn fold(m: &Array2<f64>, mode: usize, dims: (usize, usize, usize)) -> Result<Self> {
        let (p1, p2, p3) = dims;
        let expect = match mode {
            1 => (p1, p2 * p3),
            2 => (p2, p1 * p3),
            3 => (p3, p1 * p2),
            _ => return Err(Error::InvalidArgument(format!("mode {mode} not in {{1,2,3}}"))),
        };
        if m.dim() != expect {
            return Err(Error::DimMismatch(format!(
                "fold mode {mode}: matrix is {:?}, expected {:?} for dims {:?}",
                m.dim(),
                expect,
                dims
            )));
        }
        let mut t = Self::zeros(dims);
        for i3 in 0..p3 {
            for i2 in 0..p2 {
                for i1 in 0..p1 {
                    let v = match mode {
                        1 => m[[i1, i2 + i3 * p2]],
                        2 => m[[i2, i1 + i3 * p1]],
                        _ => m[[i3, i1 + i2 * p1]],
                    };
                    *t.get_mut(i1, i2, i3) = v;
                }
            }
        }
        Ok(t)
    }

    /// Mode-`mode` product with a matrix: replaces `dims[mode]` by `m.rows`,
    /// and satisfies `result.matricize(mode) == m . self.matricize(mode)`.
    pub fn mode_product(&self, m: &Array2<f64>, mode: usize) -> Result<Self> {
        let (p1, p2, p3) = self.dims;
        let pk = match mode {
            1 => p1,
            2 => p2,
            3 => p3,
            _ => return Err(Error::InvalidArgument(format!("mode {mode} not in {{1,2,3}}"))),
        };
        if m.ncols() != pk {
            return Err(Error::DimMismatch(format!(
                "mode-{mode} product: matrix has {} columns, mode dim is {pk}",
                m.ncols()
            )));
        }
        let unfolded = self.matricize(mode)?;
        let product = m.dot(&unfolded);
        let new_dims = match mode {
            1 => (m.nrows(), p2, p3),
            2 => (p1, m.nrows(), p3),
            _ => (p1, p2, m.nrows()),
        };
        Self::fold(&product, mode, new_dims)
    }

    /// Frobenius inner product with another tensor of identical dims.
    pub fn frob_inner(&self, other: &Self) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::DimMismatch(format!(
                "inner product dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn frob_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.frob_norm_sq().sqrt()
    }

    /// Elementwise difference; dims must match.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::DimMismatch(format!(
                "subtraction dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self { dims: self.dims, data })
    }
}

/// Composes a Tucker form with shared mode-1 and mode-2 factors: slice `i` of
/// the result is `C G_i R^T`.
pub fn tucker_compose(g: &Tensor3, c: &Array2<f64>, r: &Array2<f64>) -> Result<Tensor3> {
    let (k1, k2, _n) = g.dims();
    if c.ncols() != k1 {
        return Err(Error::DimMismatch(format!(
            "mode-1 factor has {} columns, core mode-1 dim is {k1}",
            c.ncols()
        )));
    }
    if r.ncols() != k2 {
        return Err(Error::DimMismatch(format!(
            "mode-2 factor has {} columns, core mode-2 dim is {k2}",
            r.ncols()
        )));
    }
    g.mode_product(c, 1)?.mode_product(r, 2)
}

/// Frobenius inner product of two matrices of identical shape.
pub fn frob_inner_mat(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch(format!(
            "inner product dims {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(a.iter().zip(b.iter()).map(|(x, y)| x * y).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn randn_tensor(dims: (usize, usize, usize), rng: &mut ChaCha8Rng) -> Tensor3 {
        let len = dims.0 * dims.1 * dims.2;
        let data = (0..len)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        Tensor3::new(dims, data).unwrap()
    }

    fn randn_mat(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        })
    }

    /// T[i,j,k] = i + 2j + 4k over dims (2,2,2).
    fn counting_tensor() -> Tensor3 {
        let mut t = Tensor3::zeros((2, 2, 2));
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    *t.get_mut(i, j, k) = (i + 2 * j + 4 * k) as f64;
                }
            }
        }
        t
    }

    #[test]
    fn matricize_zero_tensor() {
        let t = Tensor3::zeros((2, 2, 2));
        let m = t.matricize(1).unwrap();
        assert_eq!(m.dim(), (2, 4));
        assert!(m.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matricize_counting_tensor_all_modes() {
        // Hand enumeration of the fiber-stacking index map.
        let t = counting_tensor();
        let m1 = t.matricize(1).unwrap();
        for i in 0..2 {
            let expect = [i as f64, (i + 2) as f64, (i + 4) as f64, (i + 6) as f64];
            for (col, e) in expect.iter().enumerate() {
                assert_eq!(m1[[i, col]], *e);
            }
        }
        let m2 = t.matricize(2).unwrap();
        for j in 0..2 {
            let expect = [
                (2 * j) as f64,
                (1 + 2 * j) as f64,
                (4 + 2 * j) as f64,
                (5 + 2 * j) as f64,
            ];
            for (col, e) in expect.iter().enumerate() {
                assert_eq!(m2[[j, col]], *e);
            }
        }
        let m3 = t.matricize(3).unwrap();
        for k in 0..2 {
            let expect = [
                (4 * k) as f64,
                (1 + 4 * k) as f64,
                (2 + 4 * k) as f64,
                (3 + 4 * k) as f64,
            ];
            for (col, e) in expect.iter().enumerate() {
                assert_eq!(m3[[k, col]], *e);
            }
        }
    }

    #[test]
    fn matricize_invalid_mode() {
        let t = Tensor3::zeros((2, 2, 2));
        assert!(t.matricize(0).is_err());
        assert!(t.matricize(4).is_err());
    }

    #[test]
    fn fold_recovers_counting_tensor() {
        let t = counting_tensor();
        let m = t.matricize(1).unwrap();
        let back = Tensor3::fold(&m, 1, (2, 2, 2)).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn fold_dimension_mismatch() {
        let m = Array2::<f64>::zeros((2, 5));
        assert!(Tensor3::fold(&m, 1, (2, 2, 2)).is_err());
    }

    #[test]
    fn roundtrip_is_bitwise_for_all_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = randn_tensor((3, 4, 5), &mut rng);
        for mode in 1..=3 {
            let m = t.matricize(mode).unwrap();
            let back = Tensor3::fold(&m, mode, t.dims()).unwrap();
            assert_eq!(back, t, "mode {mode} round trip not exact");
        }
    }

    #[test]
    fn frobenius_agrees_across_matricizations() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let t = randn_tensor((4, 3, 6), &mut rng);
        let direct = t.frob_norm();
        for mode in 1..=3 {
            let m = t.matricize(mode).unwrap();
            let via: f64 = m.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((via - direct).abs() <= 1e-12 * direct);
        }
    }

    #[test]
    fn mode_product_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let t = randn_tensor((3, 4, 2), &mut rng);
        let id = Array2::<f64>::eye(4);
        let r = t.mode_product(&id, 2).unwrap();
        assert_eq!(r, t);
    }

    #[test]
    fn mode_product_matches_matricize_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let t = randn_tensor((2, 2, 2), &mut rng);
        let m = randn_mat(3, 2, &mut rng);
        let prod = t.mode_product(&m, 1).unwrap();
        let expect = Tensor3::fold(&m.dot(&t.matricize(1).unwrap()), 1, (3, 2, 2)).unwrap();
        assert_eq!(prod, expect);
    }

    #[test]
    fn mode_products_commute_across_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let t = randn_tensor((3, 4, 2), &mut rng);
        let a = randn_mat(5, 3, &mut rng);
        let b = randn_mat(6, 4, &mut rng);
        let ab = t.mode_product(&a, 1).unwrap().mode_product(&b, 2).unwrap();
        let ba = t.mode_product(&b, 2).unwrap().mode_product(&a, 1).unwrap();
        let err = ab.sub(&ba).unwrap().frob_norm();
        assert!(err <= 1e-12 * ab.frob_norm().max(1.0));
    }

    #[test]
    fn mode_product_associates_with_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let t = randn_tensor((4, 3, 2), &mut rng);
        let b = randn_mat(5, 4, &mut rng);
        let a = randn_mat(6, 5, &mut rng);
        let lhs = t.mode_product(&a.dot(&b), 1).unwrap();
        let rhs = t.mode_product(&b, 1).unwrap().mode_product(&a, 1).unwrap();
        let err = lhs.sub(&rhs).unwrap().frob_norm();
        assert!(err <= 1e-10 * lhs.frob_norm().max(1.0));
    }

    #[test]
    fn mode_product_dimension_mismatch() {
        let t = Tensor3::zeros((3, 4, 2));
        let m = Array2::<f64>::zeros((5, 99));
        assert!(t.mode_product(&m, 1).is_err());
    }

    #[test]
    fn tucker_compose_zero_core() {
        let g = Tensor3::zeros((2, 2, 3));
        let c = Array2::<f64>::eye(2);
        let r = Array2::<f64>::eye(2);
        let b = tucker_compose(&g, &c, &r).unwrap();
        assert!(b.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tucker_compose_identity_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let g = randn_tensor((3, 3, 1), &mut rng);
        let b = tucker_compose(&g, &Array2::eye(3), &Array2::eye(3)).unwrap();
        assert_eq!(b, g);
    }

    #[test]
    fn tucker_compose_matches_per_slice_products() {
        // Independent oracle: dense triple product slice by slice.
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let g = randn_tensor((2, 3, 4), &mut rng);
        let c = randn_mat(5, 2, &mut rng);
        let r = randn_mat(6, 3, &mut rng);
        let b = tucker_compose(&g, &c, &r).unwrap();
        for i in 0..4 {
            let expect = c.dot(&g.slice_mat(i)).dot(&r.t());
            let got = b.slice_mat(i);
            let err = (&got - &expect).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(err <= 1e-12 * expect.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0));
        }
    }

    #[test]
    fn frob_inner_examples() {
        let z = Tensor3::zeros((2, 2, 2));
        let t = counting_tensor();
        assert_eq!(t.frob_inner(&z).unwrap(), 0.0);

        let i2 = Array2::<f64>::eye(2);
        assert_eq!(frob_inner_mat(&i2, &i2).unwrap(), 2.0);

        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let a = randn_tensor((3, 2, 2), &mut rng);
        let b = randn_tensor((3, 2, 2), &mut rng);
        let mut oracle = 0.0;
        for i1 in 0..3 {
            for i2 in 0..2 {
                for i3 in 0..2 {
                    oracle += a.get(i1, i2, i3) * b.get(i1, i2, i3);
                }
            }
        }
        let got = a.frob_inner(&b).unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle.abs().max(1.0));
    }

    #[test]
    fn frob_inner_dim_mismatch() {
        let a = Tensor3::zeros((2, 2, 2));
        let b = Tensor3::zeros((2, 2, 3));
        assert!(a.frob_inner(&b).is_err());
    }
}
