//! Scaled gradient descent fitters.
//!
//! Four variants: the shared-subspace model (with and without row-sparsity on
//! the shared factors) and the per-individual baseline that ignores sharing
//! (with and without sparsity). All updates are simultaneous: every block of
//! iterate `t+1` is computed from blocks of iterate `t`. Each gradient block
//! is preconditioned by the inverse Gram matrix of the complementary factors,
//! which makes the iteration invariant to invertible reparameterizations of
//! the factorization.
//!
//! Gradients are divided by the per-individual observation count (the average
//! count for the shared model), so the step size `eta` is a per-observation
//! quantity of order one rather than something that must shrink with the
//! sample size.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg::{spd_inv, spd_sqrt};
use crate::model::{loss_and_gradients, DatasetBundle, LinkKind, ParameterSet};
use crate::tensor::Tensor3;

/// Rank triple: `r` per individual, `k1`/`k2` for the shared subspaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Ranks {
    pub r: usize,
    pub k1: usize,
    pub k2: usize,
}

/// Controls for the fitting algorithms.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct FitConfig {
    pub link: LinkKind,
    /// Per-observation step size.
    pub eta: f64,
    /// Iteration budget.
    pub max_iters: usize,
    /// Early-stop tolerance on the relative loss change.
    pub tol: f64,
    pub ranks: Ranks,
    /// Row-sparsity levels `(s1, s2)` for the shared factors; enables the
    /// hard-thresholding variants.
    pub sparsity: Option<(usize, usize)>,
    /// Ridge applied to Gram preconditioners, relative to `trace/dim`.
    pub ridge_eps: f64,
    pub seed: u64,
}

impl FitConfig {
    pub fn new(link: LinkKind, ranks: Ranks) -> Self {
        let eta = match link {
            LinkKind::Linear => 0.1,
            LinkKind::Logistic => 0.5,
        };
        Self {
            link,
            eta,
            max_iters: 300,
            tol: 1e-10,
            ranks,
            sparsity: None,
            ridge_eps: 1e-10,
            seed: 0,
        }
    }

    pub fn validate(&self, p1: usize, p2: usize) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "step size eta = {} must be positive",
                self.eta
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        let Ranks { r, k1, k2 } = self.ranks;
        if r == 0 || k1 == 0 || k2 == 0 {
            return Err(Error::InvalidArgument("ranks must be positive".into()));
        }
        if r > k1.min(k2) {
            return Err(Error::InvalidArgument(format!(
                "individual rank r = {r} exceeds min(k1, k2) = {}",
                k1.min(k2)
            )));
        }
        if k1 > p1 || k2 > p2 {
            return Err(Error::InvalidArgument(format!(
                "subspace ranks ({k1}, {k2}) exceed dimensions ({p1}, {p2})"
            )));
        }
        if let Some((s1, s2)) = self.sparsity {
            if s1 == 0 || s1 > p1 || s2 == 0 || s2 > p2 {
                return Err(Error::InvalidArgument(format!(
                    "sparsity levels ({s1}, {s2}) out of range for ({p1}, {p2})"
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of a shared-model fit.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub theta: ParameterSet,
    /// Loss at the initial point and after each completed iteration.
    pub loss_trace: Vec<f64>,
    /// Number of update steps performed; `loss_trace.len() == iters + 1`.
    pub iters: usize,
    pub converged: bool,
    /// Retained row sets `(S1, S2)` when sparsity was configured.
    pub active_rows: Option<(Vec<usize>, Vec<usize>)>,
}

/// Per-individual factor pairs from the baseline that ignores sharing.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct HeteroFit {
    /// `C_i`, shape `p1 x r`.
    pub c: Vec<Array2<f64>>,
    /// `R_i`, shape `p2 x r`.
    pub r: Vec<Array2<f64>>,
}

impl HeteroFit {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    /// Coefficient matrix of individual `i`: `C_i R_i^T`, in standard layout.
    pub fn b_slice(&self, i: usize) -> Array2<f64> {
        crate::model::to_standard(self.c[i].dot(&self.r[i].t()))
    }

    pub fn b_tensor(&self) -> Result<Tensor3> {
        let slices: Vec<Array2<f64>> = (0..self.n()).map(|i| self.b_slice(i)).collect();
        Tensor3::from_slices(&slices)
    }

    /// Moment-based spectral starting point: the top-`r` SVD factors of
    /// `m_i^{-1} sum_j Y_ij X_ij`, split as `U sqrt(S)` / `V sqrt(S)` so the
    /// two sides start balanced. With `screen = (s1, s2)`, all but the
    /// largest-norm `s1` rows and `s2` columns of the moment matrix are
    /// zeroed before the SVD.
    pub fn spectral_init(
        data: &DatasetBundle,
        r: usize,
        screen: Option<(usize, usize)>,
    ) -> Result<Self> {
        let (p1, p2) = data.p();
        if r == 0 || r > p1.min(p2) {
            return Err(Error::InvalidArgument(format!(
                "rank r = {r} out of range for ({p1}, {p2})"
            )));
        }
        let mut cs = Vec::with_capacity(data.n());
        let mut rs = Vec::with_capacity(data.n());
        for i in 0..data.n() {
            let mut moment = Array2::<f64>::zeros((p1, p2));
            for j in 0..data.m(i) {
                moment.scaled_add(data.y(i, j), data.x(i, j));
            }
            moment /= data.m(i) as f64;
            if let Some((s1, s2)) = screen {
                let (rows_kept, _) = hard_threshold_rows(&moment, s1.min(p1))?;
                let (cols_kept_t, _) = hard_threshold_rows(&rows_kept.t().to_owned(), s2.min(p2))?;
                moment = cols_kept_t.t().to_owned();
            }
            let svd = crate::linalg::thin_svd(&moment, r)?;
            let root = svd.s.mapv(f64::sqrt);
            let mut c = svd.u;
            let mut rr = svd.v;
            for j in 0..r {
                for a in 0..p1 {
                    c[[a, j]] *= root[j];
                }
                for a in 0..p2 {
                    rr[[a, j]] *= root[j];
                }
            }
            cs.push(c);
            rs.push(rr);
        }
        Ok(Self { c: cs, r: rs })
    }
}

/// Shared-model fit outcome together with per-individual diagnostics from the
/// baseline fitters.
#[derive(Debug, Clone)]
pub struct HeteroReport {
    pub fit: HeteroFit,
    pub loss_traces: Vec<Vec<f64>>,
    pub iters: Vec<usize>,
    pub converged: Vec<bool>,
    /// Final retained row sets per individual when sparsity was configured.
    pub active_rows: Option<Vec<(Vec<usize>, Vec<usize>)>>,
}

/// Zeroes all but the `s` rows of largest Euclidean norm, breaking ties
/// toward the smaller row index. Returns the thresholded matrix and the
/// sorted retained index set.
pub fn hard_threshold_rows(m: &Array2<f64>, s: usize) -> Result<(Array2<f64>, Vec<usize>)> {
    let rows = m.nrows();
    if s == 0 || s > rows {
        return Err(Error::InvalidArgument(format!(
            "sparsity s = {s} out of range 1..={rows}"
        )));
    }
    let norms: Vec<f64> = (0..rows)
        .map(|i| m.row(i).iter().map(|v| v * v).sum::<f64>())
        .collect();
    let mut order: Vec<usize> = (0..rows).collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap().then(a.cmp(&b)));
    let mut keep: Vec<usize> = order[..s].to_vec();
    keep.sort_unstable();
    let mut out = Array2::<f64>::zeros(m.dim());
    for &i in &keep {
        for j in 0..m.ncols() {
            out[[i, j]] = m[[i, j]];
        }
    }
    Ok((out, keep))
}

/// Row thresholding in the scale-invariant metric: selects the `s` largest
/// rows of `M G^{1/2}` (row norms are invariant to reparameterization there)
/// and returns `HT(M G^{1/2}, s) G^{-1/2}` with the retained index set.
///
/// Zeroing rows commutes with the right multiplications, so retained rows of
/// the result equal the corresponding rows of `M` exactly. With `s` covering
/// every row the input is returned unchanged.
pub fn scaled_hard_threshold_step(
    m: &Array2<f64>,
    gram: &Array2<f64>,
    s: usize,
    ridge_eps: f64,
) -> Result<(Array2<f64>, Vec<usize>)> {
    let rows = m.nrows();
    if s == 0 || s > rows {
        return Err(Error::InvalidArgument(format!(
            "sparsity s = {s} out of range 1..={rows}"
        )));
    }
    if gram.nrows() != m.ncols() || gram.ncols() != m.ncols() {
        return Err(Error::DimMismatch(format!(
            "gram is {:?}, factor has {} columns",
            gram.dim(),
            m.ncols()
        )));
    }
    if s == rows {
        return Ok((m.clone(), (0..rows).collect()));
    }
    let root = scaled_threshold_root(gram, ridge_eps)?;
    let scaled = m.dot(&root);
    let (_, keep) = hard_threshold_rows(&scaled, s)?;
    let mut out = Array2::<f64>::zeros(m.dim());
    for &i in &keep {
        for j in 0..m.ncols() {
            out[[i, j]] = m[[i, j]];
        }
    }
    Ok((out, keep))
}

fn scaled_threshold_root(gram: &Array2<f64>, ridge_eps: f64) -> Result<Array2<f64>> {
    let ridged = ridge(gram, ridge_eps);
    match spd_sqrt(&ridged) {
        Ok((root, _)) => Ok(root),
        Err(Error::Singular(_)) => {
            let (root, _) = spd_sqrt(&ridge(gram, 1e-6))?;
            Ok(root)
        }
        Err(e) => Err(e),
    }
}

fn ridge(gram: &Array2<f64>, ridge_eps: f64) -> Array2<f64> {
    if ridge_eps == 0.0 {
        return gram.clone();
    }
    let n = gram.nrows();
    let trace: f64 = (0..n).map(|i| gram[[i, i]]).sum();
    let shift = ridge_eps * trace / n as f64;
    let mut out = gram.clone();
    for i in 0..n {
        out[[i, i]] += shift;
    }
    out
}

/// Gram inverse used as a preconditioner: additive ridge of
/// `ridge_eps * trace/dim`, retried once at `1e-6` before giving up.
fn precond_inv(gram: &Array2<f64>, ridge_eps: f64) -> Result<Array2<f64>> {
    match spd_inv(gram, ridge_eps) {
        Ok(inv) => Ok(inv),
        Err(Error::Singular(_)) => spd_inv(gram, 1e-6),
        Err(e) => Err(e),
    }
}

fn check_init_matches(init: &ParameterSet, cfg: &FitConfig, data: &DatasetBundle) -> Result<()> {
    let (p1, p2) = data.p();
    cfg.validate(p1, p2)?;
    init.validate()?;
    let Ranks { r, k1, k2 } = cfg.ranks;
    if init.p1() != p1 || init.p2() != p2 || init.n() != data.n() {
        return Err(Error::DimMismatch(format!(
            "init is ({}, {}) x {}, data is ({p1}, {p2}) x {}",
            init.p1(),
            init.p2(),
            init.n(),
            data.n()
        )));
    }
    if init.k1() != k1 || init.k2() != k2 || init.rank_r() != r {
        return Err(Error::DimMismatch(format!(
            "init ranks ({}, {}, {}) do not match configured ({r}, {k1}, {k2})",
            init.rank_r(),
            init.k1(),
            init.k2()
        )));
    }
    Ok(())
}

/// Early-stop test: the loss moved by no more than `tol` relative to its
/// previous magnitude.
fn stalled(prev: f64, cur: f64, tol: f64) -> bool {
    (cur - prev).abs() <= tol * (1.0 + prev.abs())
}

/// Scaled gradient descent on the shared parameterization.
///
/// Each iteration updates all blocks simultaneously from iterate `t`:
/// the shared factors are preconditioned by the Grams of the mode-1/mode-2
/// unfolding cofactors, the loadings by `(C^T C)^{-1}` and the loading Grams.
pub fn fit_homogeneous(
    data: &DatasetBundle,
    init: &ParameterSet,
    cfg: &FitConfig,
) -> Result<FitReport> {
    if cfg.sparsity.is_some() {
        return Err(Error::InvalidArgument(
            "sparsity configured; use the hard-thresholding variant".into(),
        ));
    }
    fit_homogeneous_impl(data, init, cfg)
}

fn fit_homogeneous_impl(
    data: &DatasetBundle,
    init: &ParameterSet,
    cfg: &FitConfig,
) -> Result<FitReport> {
    check_init_matches(init, cfg, data)?;
    let n = data.n();
    let step = cfg.eta / data.mean_m();
    let mut theta = init.clone();
    let mut trace = Vec::with_capacity(cfg.max_iters + 1);
    let mut active: Option<(Vec<usize>, Vec<usize>)> = None;

    for iter in 0..cfg.max_iters {
        let (loss, g) = loss_and_gradients(&theta, data, cfg.link)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { iter, eta: cfg.eta });
        }
        trace.push(loss);
        if iter >= 1 && stalled(trace[iter - 1], loss, cfg.tol) {
            return Ok(FitReport {
                theta,
                loss_trace: trace,
                iters: iter,
                converged: true,
                active_rows: active,
            });
        }

        let inv_ct = precond_inv(&g.gram_c_tilde, cfg.ridge_eps)?;
        let inv_rt = precond_inv(&g.gram_r_tilde, cfg.ridge_eps)?;
        let inv_c = precond_inv(&g.gram_c, cfg.ridge_eps)?;
        let inv_r = precond_inv(&g.gram_r, cfg.ridge_eps)?;

        let mut c_next = theta.c.clone();
        c_next.scaled_add(-step, &g.g_c.dot(&inv_ct));
        let mut r_next = theta.r.clone();
        r_next.scaled_add(-step, &g.g_r.dot(&inv_rt));
        let mut l1_next = Vec::with_capacity(n);
        let mut l2_next = Vec::with_capacity(n);
        for i in 0..n {
            let inv_gri = precond_inv(&g.gram_ri[i], cfg.ridge_eps)?;
            let inv_gci = precond_inv(&g.gram_ci[i], cfg.ridge_eps)?;
            let mut l1 = theta.l1[i].clone();
            l1.scaled_add(-step, &inv_c.dot(&g.g1[i]).dot(&inv_gri));
            let mut l2 = theta.l2[i].clone();
            l2.scaled_add(-step, &inv_r.dot(&g.g2[i]).dot(&inv_gci));
            l1_next.push(l1);
            l2_next.push(l2);
        }

        if let Some((s1, s2)) = cfg.sparsity {
            // Thresholding Grams are recomputed at the half-step shared
            // factors and the freshly updated loadings.
            let gram_r_half = r_next.t().dot(&r_next);
            let gram_c_half = c_next.t().dot(&c_next);
            let k1 = cfg.ranks.k1;
            let k2 = cfg.ranks.k2;
            let mut gram_ct = Array2::<f64>::zeros((k1, k1));
            let mut gram_rt = Array2::<f64>::zeros((k2, k2));
            for i in 0..n {
                let inner_r = l2_next[i].t().dot(&gram_r_half).dot(&l2_next[i]);
                gram_ct.scaled_add(1.0, &l1_next[i].dot(&inner_r).dot(&l1_next[i].t()));
                let inner_c = l1_next[i].t().dot(&gram_c_half).dot(&l1_next[i]);
                gram_rt.scaled_add(1.0, &l2_next[i].dot(&inner_c).dot(&l2_next[i].t()));
            }
            let (c_th, s1_idx) = scaled_hard_threshold_step(&c_next, &gram_ct, s1, cfg.ridge_eps)?;
            let (r_th, s2_idx) = scaled_hard_threshold_step(&r_next, &gram_rt, s2, cfg.ridge_eps)?;
            c_next = c_th;
            r_next = r_th;
            active = Some((s1_idx, s2_idx));
        }

        theta = ParameterSet {
            c: c_next,
            r: r_next,
            l1: l1_next,
            l2: l2_next,
        };
    }

    let final_loss = crate::model::loss_at(&theta, data, cfg.link)?;
    trace.push(final_loss);
    Ok(FitReport {
        theta,
        loss_trace: trace,
        iters: cfg.max_iters,
        converged: false,
        active_rows: active,
    })
}

/// Scaled gradient descent with scaled hard thresholding on the shared
/// factors: the four gradient updates produce half-step values, then row
/// thresholding in the invariant metric is applied to `C` and `R`.
pub fn fit_homogeneous_sparse(
    data: &DatasetBundle,
    init: &ParameterSet,
    cfg: &FitConfig,
) -> Result<FitReport> {
    if cfg.sparsity.is_none() {
        return Err(Error::InvalidArgument(
            "no sparsity configured; use the dense fitter".into(),
        ));
    }
    fit_homogeneous_impl(data, init, cfg)
}

fn fit_one_individual(
    xs: &[Array2<f64>],
    ys: &[f64],
    c0: &Array2<f64>,
    r0: &Array2<f64>,
    cfg: &FitConfig,
) -> Result<(Array2<f64>, Array2<f64>, Vec<f64>, usize, bool, Option<(Vec<usize>, Vec<usize>)>)> {
    let m = xs.len();
    let step = cfg.eta / m as f64;
    let link = cfg.link;
    let mut c = c0.clone();
    let mut r = r0.clone();
    let mut trace = Vec::with_capacity(cfg.max_iters + 1);
    let mut active = None;

    let eval = |c: &Array2<f64>, r: &Array2<f64>| -> (f64, Array2<f64>) {
        let b = crate::model::to_standard(c.dot(&r.t()));
        let mut s = Array2::<f64>::zeros(b.dim());
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(ys.iter()) {
            let u: f64 = x.iter().zip(b.iter()).map(|(a, b)| a * b).sum();
            loss += link.g(u) - y * u;
            s.scaled_add(link.g_prime(u) - y, x);
        }
        (loss, s)
    };

    for iter in 0..cfg.max_iters {
        let (loss, s) = eval(&c, &r);
        if !loss.is_finite() {
            return Err(Error::Divergence { iter, eta: cfg.eta });
        }
        trace.push(loss);
        if iter >= 1 && stalled(trace[iter - 1], loss, cfg.tol) {
            return Ok((c, r, trace, iter, true, active));
        }

        let inv_gram_r = precond_inv(&r.t().dot(&r), cfg.ridge_eps)?;
        let inv_gram_c = precond_inv(&c.t().dot(&c), cfg.ridge_eps)?;
        let mut c_next = c.clone();
        c_next.scaled_add(-step, &s.dot(&r).dot(&inv_gram_r));
        let mut r_next = r.clone();
        r_next.scaled_add(-step, &s.t().dot(&c).dot(&inv_gram_c));

        if let Some((s1, s2)) = cfg.sparsity {
            let gram_r_half = r_next.t().dot(&r_next);
            let gram_c_half = c_next.t().dot(&c_next);
            let (c_th, s1_idx) =
                scaled_hard_threshold_step(&c_next, &gram_r_half, s1, cfg.ridge_eps)?;
            let (r_th, s2_idx) =
                scaled_hard_threshold_step(&r_next, &gram_c_half, s2, cfg.ridge_eps)?;
            c_next = c_th;
            r_next = r_th;
            active = Some((s1_idx, s2_idx));
        }

        c = c_next;
        r = r_next;
    }

    let (final_loss, _) = eval(&c, &r);
    trace.push(final_loss);
    Ok((c, r, trace, cfg.max_iters, false, active))
}

fn fit_heterogeneous_impl(
    data: &DatasetBundle,
    init: &HeteroFit,
    cfg: &FitConfig,
) -> Result<HeteroReport> {
    let (p1, p2) = data.p();
    // The shared-subspace ranks are not used here; substitute valid values so
    // only `r`, the step, and the sparsity levels are checked.
    let mut rank_cfg = cfg.clone();
    rank_cfg.ranks.k1 = cfg.ranks.r.min(p1);
    rank_cfg.ranks.k2 = cfg.ranks.r.min(p2);
    rank_cfg.validate(p1, p2)?;
    if init.n() != data.n() {
        return Err(Error::DimMismatch(format!(
            "init has {} individuals, data has {}",
            init.n(),
            data.n()
        )));
    }
    let r = cfg.ranks.r;
    for i in 0..init.n() {
        if init.c[i].dim() != (p1, r) || init.r[i].dim() != (p2, r) {
            return Err(Error::DimMismatch(format!(
                "init factors {i} have shapes {:?}/{:?}, expected ({p1},{r})/({p2},{r})",
                init.c[i].dim(),
                init.r[i].dim()
            )));
        }
    }

    let mut fit = HeteroFit {
        c: Vec::with_capacity(data.n()),
        r: Vec::with_capacity(data.n()),
    };
    let mut traces = Vec::with_capacity(data.n());
    let mut iters = Vec::with_capacity(data.n());
    let mut converged = Vec::with_capacity(data.n());
    let mut active_all = Vec::with_capacity(data.n());
    for i in 0..data.n() {
        let (c, rr, trace, it, conv, active) =
            fit_one_individual(&data.xs()[i], &data.ys()[i], &init.c[i], &init.r[i], cfg)?;
        fit.c.push(c);
        fit.r.push(rr);
        traces.push(trace);
        iters.push(it);
        converged.push(conv);
        active_all.push(active);
    }
    let active_rows = if cfg.sparsity.is_some() {
        Some(
            active_all
                .into_iter()
                .map(|a| a.unwrap_or_else(|| ((0..p1).collect(), (0..p2).collect())))
                .collect(),
        )
    } else {
        None
    };
    Ok(HeteroReport {
        fit,
        loss_traces: traces,
        iters,
        converged,
        active_rows,
    })
}

/// Per-individual scaled gradient descent: each `B_i = C_i R_i^T` is fitted
/// independently with Gram-inverse preconditioning on both factors.
pub fn fit_heterogeneous(
    data: &DatasetBundle,
    init: &HeteroFit,
    cfg: &FitConfig,
) -> Result<HeteroReport> {
    if cfg.sparsity.is_some() {
        return Err(Error::InvalidArgument(
            "sparsity configured; use the hard-thresholding variant".into(),
        ));
    }
    fit_heterogeneous_impl(data, init, cfg)
}

/// Per-individual scaled gradient descent with scaled hard thresholding on
/// both factors after each half-step.
pub fn fit_heterogeneous_sparse(
    data: &DatasetBundle,
    init: &HeteroFit,
    cfg: &FitConfig,
) -> Result<HeteroReport> {
    if cfg.sparsity.is_none() {
        return Err(Error::InvalidArgument(
            "no sparsity configured; use the dense fitter".into(),
        ));
    }
    fit_heterogeneous_impl(data, init, cfg)
}
