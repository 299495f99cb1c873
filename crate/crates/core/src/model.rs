//! Loss functions, link functions, and the partial gradients of the shared
//! low-rank regression model.
//!
//! For individual `i` with coefficient matrix `B_i = C L1_i L2_i^T R^T`, the
//! per-observation loss is `g(<X_ij, B_i>) - Y_ij <X_ij, B_i>`, with `g`
//! either `t^2/2` (linear trace regression) or `log(1 + exp(t))` (logistic).
//! The empirical loss sums over all individuals and observations. Every
//! partial gradient of that sum reduces to a small product with the per-slice
//! gradient sum `S_i = sum_j (g'(<X_ij,B_i>) - Y_ij) X_ij`, which is what the
//! accumulation below exploits; the wide auxiliary stacks whose Grams
//! precondition the shared updates are never materialized, only their
//! `K x K` Grams are formed.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

/// Link function choice for the generalized linear loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Linear,
    Logistic,
}

impl LinkKind {
    /// Cumulant `g`: `t^2/2` for linear, `log(1+exp(t))` for logistic.
    /// The logistic branch is computed as `max(t,0) + log1p(exp(-|t|))`,
    /// which stays finite for any argument.
    pub fn g(self, t: f64) -> f64 {
        match self {
            LinkKind::Linear => 0.5 * t * t,
            LinkKind::Logistic => t.max(0.0) + (-t.abs()).exp().ln_1p(),
        }
    }

    /// Derivative `g'`: identity for linear, the sigmoid for logistic.
    /// The logistic value is clamped into the open interval (0, 1).
    pub fn g_prime(self, t: f64) -> f64 {
        match self {
            LinkKind::Linear => t,
            LinkKind::Logistic => {
                let v = if t >= 0.0 {
                    1.0 / (1.0 + (-t).exp())
                } else {
                    let e = t.exp();
                    e / (1.0 + e)
                };
                v.max(f64::MIN_POSITIVE).min(1.0 - f64::EPSILON)
            }
        }
    }
}

/// Observations for `n` individuals: per individual, `m_i` matrix covariates
/// of common shape `(p1, p2)` and scalar responses.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    xs: Vec<Vec<Array2<f64>>>,
    ys: Vec<Vec<f64>>,
}

impl DatasetBundle {
    pub fn new(xs: Vec<Vec<Array2<f64>>>, ys: Vec<Vec<f64>>) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::DimMismatch(format!(
                "{} covariate groups vs {} response groups",
                xs.len(),
                ys.len()
            )));
        }
        let p = xs
            .first()
            .and_then(|g| g.first())
            .map(|x| x.dim())
            .ok_or_else(|| Error::InvalidArgument("individual 0 has no observations".into()))?;
        for (i, (xg, yg)) in xs.iter().zip(ys.iter()).enumerate() {
            if xg.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "individual {i} has no observations"
                )));
            }
            if xg.len() != yg.len() {
                return Err(Error::DimMismatch(format!(
                    "individual {i}: {} covariates vs {} responses",
                    xg.len(),
                    yg.len()
                )));
            }
            if let Some(bad) = xg.iter().find(|x| x.dim() != p) {
                return Err(Error::DimMismatch(format!(
                    "individual {i}: covariate shape {:?} differs from {:?}",
                    bad.dim(),
                    p
                )));
            }
        }
        Ok(Self { xs, ys })
    }

    pub fn n(&self) -> usize {
        self.xs.len()
    }

    pub fn m(&self, i: usize) -> usize {
        self.xs[i].len()
    }

    pub fn mean_m(&self) -> f64 {
        let total: usize = self.xs.iter().map(|g| g.len()).sum();
        total as f64 / self.n() as f64
    }

    pub fn total_obs(&self) -> usize {
        self.xs.iter().map(|g| g.len()).sum()
    }

    pub fn p(&self) -> (usize, usize) {
        self.xs[0][0].dim()
    }

    pub fn x(&self, i: usize, j: usize) -> &Array2<f64> {
        &self.xs[i][j]
    }

    pub fn y(&self, i: usize, j: usize) -> f64 {
        self.ys[i][j]
    }

    pub fn xs(&self) -> &Vec<Vec<Array2<f64>>> {
        &self.xs
    }

    pub fn ys(&self) -> &Vec<Vec<f64>> {
        &self.ys
    }
}

/// Full parameter set: shared factors `C (p1 x K1)`, `R (p2 x K2)`, and per
/// individual loadings `L1_i (K1 x r)`, `L2_i (K2 x r)`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ParameterSet {
    pub c: Array2<f64>,
    pub r: Array2<f64>,
    pub l1: Vec<Array2<f64>>,
    pub l2: Vec<Array2<f64>>,
}

impl ParameterSet {
    pub fn new(
        c: Array2<f64>,
        r: Array2<f64>,
        l1: Vec<Array2<f64>>,
        l2: Vec<Array2<f64>>,
    ) -> Result<Self> {
        let theta = Self { c, r, l1, l2 };
        theta.validate()?;
        Ok(theta)
    }

    pub fn validate(&self) -> Result<()> {
        let k1 = self.c.ncols();
        let k2 = self.r.ncols();
        if self.l1.is_empty() || self.l1.len() != self.l2.len() {
            return Err(Error::DimMismatch(format!(
                "{} mode-1 loadings vs {} mode-2 loadings",
                self.l1.len(),
                self.l2.len()
            )));
        }
        let r = self.l1[0].ncols();
        for (i, (a, b)) in self.l1.iter().zip(self.l2.iter()).enumerate() {
            if a.dim() != (k1, r) || b.dim() != (k2, r) {
                return Err(Error::DimMismatch(format!(
                    "loadings {i} have shapes {:?}/{:?}, expected {:?}/{:?}",
                    a.dim(),
                    b.dim(),
                    (k1, r),
                    (k2, r)
                )));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.l1.len()
    }

    pub fn p1(&self) -> usize {
        self.c.nrows()
    }

    pub fn p2(&self) -> usize {
        self.r.nrows()
    }

    pub fn k1(&self) -> usize {
        self.c.ncols()
    }

    pub fn k2(&self) -> usize {
        self.r.ncols()
    }

    pub fn rank_r(&self) -> usize {
        self.l1[0].ncols()
    }

    /// Coefficient matrix of individual `i`: `C L1_i L2_i^T R^T`.
    /// Always returned in standard (row-major) layout.
    pub fn coefficient_slice(&self, i: usize) -> Array2<f64> {
        to_standard(
            self.c
                .dot(&self.l1[i])
                .dot(&self.l2[i].t())
                .dot(&self.r.t()),
        )
    }

    /// Stacks all coefficient slices into the `(p1, p2, n)` tensor.
    pub fn coefficient_tensor(&self) -> Result<Tensor3> {
        self.validate()?;
        let slices: Vec<Array2<f64>> = (0..self.n()).map(|i| self.coefficient_slice(i)).collect();
        Tensor3::from_slices(&slices)
    }

    /// Reparameterizes by invertible `(Q1, Q2, {P_i})`:
    /// `(C Q1, R Q2, {Q1^{-1} L1_i P_i, Q2^{-1} L2_i P_i^{-T}})`.
    /// The coefficient tensor is unchanged by construction.
    pub fn gauge_transform(
        &self,
        q1: &Array2<f64>,
        q2: &Array2<f64>,
        ps: &[Array2<f64>],
    ) -> Result<Self> {
        if ps.len() != self.n() {
            return Err(Error::DimMismatch(format!(
                "{} loading transforms for {} individuals",
                ps.len(),
                self.n()
            )));
        }
        let q1_inv = crate::linalg::inv_general(q1)?;
        let q2_inv = crate::linalg::inv_general(q2)?;
        let mut l1 = Vec::with_capacity(self.n());
        let mut l2 = Vec::with_capacity(self.n());
        for (i, p) in ps.iter().enumerate() {
            let p_inv_t = crate::linalg::inv_general(p)?.t().to_owned();
            l1.push(q1_inv.dot(&self.l1[i]).dot(p));
            l2.push(q2_inv.dot(&self.l2[i]).dot(&p_inv_t));
        }
        Self::new(self.c.dot(q1), self.r.dot(q2), l1, l2)
    }
}

/// Partial gradients of the empirical loss plus the Gram matrices used as
/// preconditioners, all evaluated at a single parameter set.
#[derive(Debug, Clone)]
pub struct GradientBundle {
    /// `d/dC`, shape `p1 x K1`.
    pub g_c: Array2<f64>,
    /// `d/dR`, shape `p2 x K2`.
    pub g_r: Array2<f64>,
    /// `d/dL1_i`, shapes `K1 x r`.
    pub g1: Vec<Array2<f64>>,
    /// `d/dL2_i`, shapes `K2 x r`.
    pub g2: Vec<Array2<f64>>,
    /// `sum_i L1_i L2_i^T R^T R L2_i L1_i^T`, shape `K1 x K1`.
    pub gram_c_tilde: Array2<f64>,
    /// `sum_i L2_i L1_i^T C^T C L1_i L2_i^T`, shape `K2 x K2`.
    pub gram_r_tilde: Array2<f64>,
    /// `C^T C`.
    pub gram_c: Array2<f64>,
    /// `R^T R`.
    pub gram_r: Array2<f64>,
    /// `L2_i^T R^T R L2_i`, shapes `r x r`.
    pub gram_ri: Vec<Array2<f64>>,
    /// `L1_i^T C^T C L1_i`, shapes `r x r`.
    pub gram_ci: Vec<Array2<f64>>,
}

fn check_compat(theta: &ParameterSet, data: &DatasetBundle) -> Result<()> {
    theta.validate()?;
    let (p1, p2) = data.p();
    if theta.p1() != p1 || theta.p2() != p2 || theta.n() != data.n() {
        return Err(Error::DimMismatch(format!(
            "parameters are ({}, {}) x {} individuals, data is ({}, {}) x {}",
            theta.p1(),
            theta.p2(),
            theta.n(),
            p1,
            p2,
            data.n()
        )));
    }
    Ok(())
}

/// Converts to standard (row-major) layout when the array is not already
/// contiguous in it; chained `dot` calls can produce column-major results.
pub(crate) fn to_standard(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        let dim = a.dim();
        Array2::from_shape_vec(dim, a.iter().copied().collect()).expect("shape preserved")
    }
}

#[inline]
fn flat_dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    // Both operands are standard-layout; fall back to the generic iterator
    // when a view is not contiguous.
    match (a.as_slice(), b.as_slice()) {
        (Some(x), Some(y)) => x.iter().zip(y).map(|(u, v)| u * v).sum(),
        _ => a.iter().zip(b.iter()).map(|(u, v)| u * v).sum(),
    }
}

/// Empirical loss `sum_i sum_j [ g(<X_ij, B_i>) - Y_ij <X_ij, B_i> ]`.
pub fn loss_at(theta: &ParameterSet, data: &DatasetBundle, link: LinkKind) -> Result<f64> {
    check_compat(theta, data)?;
    let mut total = 0.0;
    for i in 0..data.n() {
        let b = theta.coefficient_slice(i);
        for j in 0..data.m(i) {
            let u = flat_dot(data.x(i, j), &b);
            total += link.g(u) - data.y(i, j) * u;
        }
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    Ok(total)
}

/// Gradient of one observation's loss with respect to the coefficient
/// matrix: `(g'(<X, B>) - Y) X`.
pub fn slice_gradient(
    b_i: &Array2<f64>,
    x_ij: &Array2<f64>,
    y_ij: f64,
    link: LinkKind,
) -> Result<Array2<f64>> {
    if b_i.dim() != x_ij.dim() {
        return Err(Error::DimMismatch(format!(
            "coefficient {:?} vs covariate {:?}",
            b_i.dim(),
            x_ij.dim()
        )));
    }
    let u = flat_dot(x_ij, b_i);
    let w = link.g_prime(u) - y_ij;
    Ok(x_ij * w)
}

/// Loss and the full gradient bundle in one pass over the data.
pub fn loss_and_gradients(
    theta: &ParameterSet,
    data: &DatasetBundle,
    link: LinkKind,
) -> Result<(f64, GradientBundle)> {
    check_compat(theta, data)?;
    let n = data.n();
    let (p1, p2) = data.p();
    let (k1, k2) = (theta.k1(), theta.k2());
    let r = theta.rank_r();

    let gram_c = theta.c.t().dot(&theta.c);
    let gram_r = theta.r.t().dot(&theta.r);

    let mut g_c = Array2::<f64>::zeros((p1, k1));
    let mut g_r = Array2::<f64>::zeros((p2, k2));
    let mut g1 = Vec::with_capacity(n);
    let mut g2 = Vec::with_capacity(n);
    let mut gram_ri = Vec::with_capacity(n);
    let mut gram_ci = Vec::with_capacity(n);
    let mut gram_c_tilde = Array2::<f64>::zeros((k1, k1));
    let mut gram_r_tilde = Array2::<f64>::zeros((k2, k2));
    let mut loss = 0.0;

    for i in 0..n {
        let l1 = &theta.l1[i];
        let l2 = &theta.l2[i];
        let b = theta.coefficient_slice(i);

        // S_i = sum_j (g'(u_ij) - Y_ij) X_ij; every block below reuses it.
        let mut s = Array2::<f64>::zeros((p1, p2));
        for j in 0..data.m(i) {
            let x = data.x(i, j);
            let u = flat_dot(x, &b);
            loss += link.g(u) - data.y(i, j) * u;
            let w = link.g_prime(u) - data.y(i, j);
            s.scaled_add(w, x);
        }

        let rl2 = theta.r.dot(l2); // p2 x r
        let cl1 = theta.c.dot(l1); // p1 x r
        g_c.scaled_add(1.0, &s.dot(&rl2).dot(&l1.t()));
        g_r.scaled_add(1.0, &s.t().dot(&cl1).dot(&l2.t()));
        g1.push(theta.c.t().dot(&s).dot(&rl2)); // C^T S R L2, K1 x r
        g2.push(theta.r.t().dot(&s.t()).dot(&cl1)); // R^T S^T C L1, K2 x r

        let gri = rl2.t().dot(&rl2); // L2^T R^T R L2
        let gci = cl1.t().dot(&cl1); // L1^T C^T C L1
        gram_c_tilde.scaled_add(1.0, &l1.dot(&l2.t().dot(&gram_r).dot(l2)).dot(&l1.t()));
        gram_r_tilde.scaled_add(1.0, &l2.dot(&l1.t().dot(&gram_c).dot(l1)).dot(&l2.t()));
        gram_ri.push(gri);
        gram_ci.push(gci);
    }

    if !loss.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    Ok((
        loss,
        GradientBundle {
            g_c,
            g_r,
            g1,
            g2,
            gram_c_tilde,
            gram_r_tilde,
            gram_c,
            gram_r,
            gram_ri,
            gram_ci,
        },
    ))
}

/// Partial gradients of the empirical loss at `theta`; see
/// [`GradientBundle`] for the block shapes.
pub fn partial_gradients(
    theta: &ParameterSet,
    data: &DatasetBundle,
    link: LinkKind,
) -> Result<GradientBundle> {
    loss_and_gradients(theta, data, link).map(|(_, g)| g)
}
