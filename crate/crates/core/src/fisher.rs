//! Fisher information and Cramer-Rao bounds for event measurements.
//!
//! Two measurement models are supported:
//!
//! * flashing source: the previous frame is dark, the event measurement reduces
//!   to `log I_t`, and the information is the Poisson form
//!   `sum_n (dh_i dh_j) / (h + beta)` over `theta = (x, y, z)`;
//! * moving source: the exponentiated measurement is the ratio
//!   `I_t / I_prev ~ N(nu / mu, nu / mu^2 + nu^2 / mu^3)` with
//!   `mu = h_prev + beta`, `nu = h_t + beta`, over
//!   `theta = (x_prev, y_prev, z_prev, x_t, y_t, z_t)`.
//!
//! The moving-source information per pixel is
//! `D^T D / (2 (mu + nu)^2)` weighted blockwise by `a` (prev/prev), `b`
//! (cross) and `c` (t/t), with `D = (mu_x/mu, mu_y/mu, mu_z/mu, nu_x/nu, nu_y/nu, nu_z/nu)`.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::optics::{Mask, Optics, PsfCotangent, PsfEval, PsfTape};
use crate::reduce::reduce_indexed;

/// Symmetric Fisher information matrix in 1/m^2.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    pub m: DMatrix<f64>,
}

impl FisherMatrix {
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    fn from_upper(dim: usize, upper: &[f64]) -> FisherMatrix {
        let mut m = DMatrix::zeros(dim, dim);
        let mut k = 0;
        for i in 0..dim {
            for j in i..dim {
                m[(i, j)] = upper[k];
                m[(j, i)] = upper[k];
                k += 1;
            }
        }
        FisherMatrix { m }
    }

    pub fn is_symmetric(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| self.m[(i, j)] == self.m[(j, i)]))
    }

    /// Smallest and largest eigenvalue.
    pub fn eigen_range(&self) -> (f64, f64) {
        let eig = self.m.clone().symmetric_eigen();
        let ev = eig.eigenvalues;
        (ev.min(), ev.max())
    }

    /// `min eig >= -tol * max eig`.
    pub fn is_psd(&self, tol: f64) -> bool {
        let (lo, hi) = self.eigen_range();
        lo >= -tol * hi.abs().max(f64::MIN_POSITIVE)
    }

    pub fn scaled(&self, k: f64) -> FisherMatrix {
        FisherMatrix { m: &self.m * k }
    }

    /// The `3 x 3` block of the current pose (rows/cols 3..6) of a two-pose matrix.
    pub fn current_block(&self) -> FisherMatrix {
        FisherMatrix {
            m: self.m.view((3, 3), (3, 3)).into_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrbResult {
    /// sqrt of the diagonal of the inverse information, meters
    pub per_parameter: Vec<f64>,
    pub depth: f64,
    pub motion: [f64; 3],
}

impl CrbResult {
    pub fn total(&self) -> f64 {
        self.per_parameter.iter().sum()
    }
}

/// Mean and variance of the Normal approximation to a ratio of Poisson
/// variables with means `nu` (numerator) and `mu` (denominator).
pub fn ratio_moments(mu: f64, nu: f64) -> Result<(f64, f64)> {
    if !(mu > 0.0 && nu > 0.0) {
        return Err(Error::InvalidInput(format!(
            "Poisson rates must be positive (mu={mu}, nu={nu})"
        )));
    }
    Ok((nu / mu, nu / (mu * mu) + nu * nu / (mu * mu * mu)))
}

/// Block weights `(a, b, c)` of the moving-source information.
#[inline]
pub fn block_weights(mu: f64, nu: f64) -> (f64, f64, f64) {
    let (mu2, nu2, mn) = (mu * mu, nu * nu, mu * nu);
    let a = 2.0 * mu2 * nu + 4.0 * mu2 + 2.0 * mu * nu2 + 12.0 * mn + 9.0 * nu2;
    let b = -(2.0 * mu2 * nu + 2.0 * mu2 + 2.0 * mu * nu2 + 7.0 * mn + 6.0 * nu2);
    let c = 2.0 * mu2 * nu + mu2 + 2.0 * mu * nu2 + 4.0 * mn + 4.0 * nu2;
    (a, b, c)
}

/// Partial derivatives of `(a, b, c)` with respect to `mu` and `nu`.
#[inline]
fn block_weight_partials(mu: f64, nu: f64) -> ([f64; 3], [f64; 3]) {
    let d_mu = [
        4.0 * mu * nu + 8.0 * mu + 2.0 * nu * nu + 12.0 * nu,
        -(4.0 * mu * nu + 4.0 * mu + 2.0 * nu * nu + 7.0 * nu),
        4.0 * mu * nu + 2.0 * mu + 2.0 * nu * nu + 4.0 * nu,
    ];
    let d_nu = [
        2.0 * mu * mu + 4.0 * mu * nu + 12.0 * mu + 18.0 * nu,
        -(2.0 * mu * mu + 4.0 * mu * nu + 7.0 * mu + 12.0 * nu),
        2.0 * mu * mu + 4.0 * mu * nu + 4.0 * mu + 8.0 * nu,
    ];
    (d_mu, d_nu)
}

/// Information of one pixel in the moving-source model, as a full 6x6 array.
/// Index order: prev x, y, z then current x, y, z.
pub fn pixel_event_information(mu: f64, nu: f64, dmu: [f64; 3], dnu: [f64; 3]) -> [[f64; 6]; 6] {
    let (a, b, c) = block_weights(mu, nu);
    let s = mu + nu;
    let inv = 1.0 / (2.0 * s * s);
    let d = [
        dmu[0] / mu,
        dmu[1] / mu,
        dmu[2] / mu,
        dnu[0] / nu,
        dnu[1] / nu,
        dnu[2] / nu,
    ];
    let mut out = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            let w = match (i < 3, j < 3) {
                (true, true) => a,
                (false, false) => c,
                _ => b,
            };
            out[i][j] = d[i] * d[j] * w * inv;
        }
    }
    out
}

/// Flashing-source information (3x3).
pub fn fisher_flashing(psf: &PsfEval, beta: f64) -> Result<FisherMatrix> {
    if !(beta >= 0.0) {
        return Err(Error::InvalidInput("background must be >= 0".into()));
    }
    let g = psf.grads()?;
    let n = psf.h.data.len();
    // slot 6 counts dark pixels that carry gradient
    let upper = reduce_indexed(
        n,
        [0.0f64; 7],
        |i, acc| {
            let gi = [g[0].data[i], g[1].data[i], g[2].data[i]];
            let lam = psf.h.data[i] + beta;
            if lam <= 0.0 {
                if gi.iter().any(|v| *v != 0.0) {
                    acc[6] += 1.0;
                }
                return;
            }
            let w = 1.0 / lam;
            let mut k = 0;
            for a in 0..3 {
                for b in a..3 {
                    acc[k] += w * gi[a] * gi[b];
                    k += 1;
                }
            }
        },
        |a, b| std::array::from_fn(|k| a[k] + b[k]),
    );
    if upper[6] > 0.0 {
        return Err(Error::InvalidInput(
            "zero-intensity pixel with non-zero gradient and no background".into(),
        ));
    }
    Ok(FisherMatrix::from_upper(3, &upper[..6]))
}

/// Moving-source information (6x6) from the PSFs at the previous and current pose.
pub fn fisher_event(psf_t: &PsfEval, psf_prev: &PsfEval, beta: f64) -> Result<FisherMatrix> {
    if !(beta > 0.0) {
        return Err(Error::InvalidInput("moving-source model needs background > 0".into()));
    }
    psf_t.h.check_same_shape(&psf_prev.h)?;
    let gt = psf_t.grads()?;
    let gp = psf_prev.grads()?;
    let n = psf_t.h.data.len();
    let upper = reduce_indexed(
        n,
        [0.0f64; 21],
        |i, acc| {
            let mu = psf_prev.h.data[i] + beta;
            let nu = psf_t.h.data[i] + beta;
            let (a, b, c) = block_weights(mu, nu);
            let s = mu + nu;
            let inv = 1.0 / (2.0 * s * s);
            let d = [
                gp[0].data[i] / mu,
                gp[1].data[i] / mu,
                gp[2].data[i] / mu,
                gt[0].data[i] / nu,
                gt[1].data[i] / nu,
                gt[2].data[i] / nu,
            ];
            let mut k = 0;
            for p in 0..6 {
                for q in p..6 {
                    let w = match (p < 3, q < 3) {
                        (true, true) => a,
                        (false, false) => c,
                        _ => b,
                    };
                    acc[k] += d[p] * d[q] * w * inv;
                    k += 1;
                }
            }
        },
        |a, b| std::array::from_fn(|k| a[k] + b[k]),
    );
    if upper.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("event Fisher information".into()));
    }
    Ok(FisherMatrix::from_upper(6, &upper))
}

fn regularized(m: &FisherMatrix, ridge: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !m.is_symmetric() {
        return Err(Error::InvalidInput("Fisher matrix is not symmetric".into()));
    }
    let d = m.dim();
    let shift = ridge * m.m.trace() / d as f64;
    let r = &m.m + DMatrix::identity(d, d) * shift;
    let inv = match r.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => r
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("inversion failed after ridge".into()))?,
    };
    Ok((r, inv))
}

/// `sqrt(diag((m + ridge * tr(m) / dim * I)^-1))`.
pub fn crb(m: &FisherMatrix, ridge: f64) -> Result<Vec<f64>> {
    let (_, inv) = regularized(m, ridge)?;
    let mut out = Vec::with_capacity(m.dim());
    for i in 0..m.dim() {
        let v = inv[(i, i)];
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Singular(format!("inverse diagonal {i} = {v}")));
        }
        out.push(v.sqrt());
    }
    Ok(out)
}

/// Bounds together with the cotangent of `sum_i weights[i] * crb_i` with
/// respect to the (unregularized) information matrix.
pub fn crb_with_backward(m: &FisherMatrix, ridge: f64, weights: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let d = m.dim();
    let (_, s) = regularized(m, ridge)?;
    let mut bounds = Vec::with_capacity(d);
    let mut s_bar = DMatrix::zeros(d, d);
    for i in 0..d {
        let v = s[(i, i)];
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Singular(format!("inverse diagonal {i} = {v}")));
        }
        let b = v.sqrt();
        bounds.push(b);
        s_bar[(i, i)] = weights[i] / (2.0 * b);
    }
    // d(R^-1) = -R^-1 dR R^-1, with R symmetric
    let r_bar = -(&s * s_bar * &s);
    let tr = r_bar.trace();
    let m_bar = &r_bar + DMatrix::identity(d, d) * (ridge * tr / d as f64);
    Ok((bounds, m_bar))
}

/// Reverse pass of [`fisher_event`]: cotangents of the current and previous
/// PSF outputs given the cotangent `m_bar` of the information matrix.
pub fn fisher_event_backward(
    psf_t: &PsfEval,
    psf_prev: &PsfEval,
    beta: f64,
    m_bar: &DMatrix<f64>,
) -> Result<(PsfCotangent, PsfCotangent)> {
    let gt = psf_t.grads()?;
    let gp = psf_prev.grads()?;
    let (rows, cols) = psf_t.h.shape();
    let n = rows * cols;
    // symmetrize so each unordered pair is counted with its full weight
    let sym = (m_bar + m_bar.transpose()) * 0.5;
    let blk = |r0: usize, c0: usize| -> [[f64; 3]; 3] {
        std::array::from_fn(|i| std::array::from_fn(|j| sym[(r0 + i, c0 + j)]))
    };
    let aa = blk(0, 0);
    let bb = blk(0, 3);
    let cc = blk(3, 3);
    let mut h_prev = vec![0.0; n];
    let mut h_t = vec![0.0; n];
    let mut d_prev = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut d_t = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mv = |m: &[[f64; 3]; 3], x: &[f64; 3]| -> [f64; 3] {
        std::array::from_fn(|i| m[i][0] * x[0] + m[i][1] * x[1] + m[i][2] * x[2])
    };
    let mtv = |m: &[[f64; 3]; 3], x: &[f64; 3]| -> [f64; 3] {
        std::array::from_fn(|i| m[0][i] * x[0] + m[1][i] * x[1] + m[2][i] * x[2])
    };
    let dot = |x: &[f64; 3], y: &[f64; 3]| x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
    for i in 0..n {
        let mu = psf_prev.h.data[i] + beta;
        let nu = psf_t.h.data[i] + beta;
        let u = [gp[0].data[i] / mu, gp[1].data[i] / mu, gp[2].data[i] / mu];
        let w = [gt[0].data[i] / nu, gt[1].data[i] / nu, gt[2].data[i] / nu];
        let (a, b, c) = block_weights(mu, nu);
        let (da, db) = block_weight_partials(mu, nu);
        let s = mu + nu;
        let k = 1.0 / (2.0 * s * s);
        let au = mv(&aa, &u);
        let bw = mv(&bb, &w);
        let btu = mtv(&bb, &u);
        let cw = mv(&cc, &w);
        let qa = dot(&u, &au);
        let qb = dot(&u, &bw);
        let qc = dot(&w, &cw);
        let l = k * (a * qa + 2.0 * b * qb + c * qc);
        let u_bar: [f64; 3] = std::array::from_fn(|j| k * (2.0 * a * au[j] + 2.0 * b * bw[j]));
        let w_bar: [f64; 3] = std::array::from_fn(|j| k * (2.0 * b * btu[j] + 2.0 * c * cw[j]));
        let mu_bar = k * (da[0] * qa + 2.0 * da[1] * qb + da[2] * qc) - 2.0 * l / s - dot(&u_bar, &u) / mu;
        let nu_bar = k * (db[0] * qa + 2.0 * db[1] * qb + db[2] * qc) - 2.0 * l / s - dot(&w_bar, &w) / nu;
        h_prev[i] = mu_bar;
        h_t[i] = nu_bar;
        for j in 0..3 {
            d_prev[j][i] = u_bar[j] / mu;
            d_t[j][i] = w_bar[j] / nu;
        }
    }
    let img = |v: Vec<f64>| Image { rows, cols, data: v };
    let [dp0, dp1, dp2] = d_prev;
    let [dt0, dt1, dt2] = d_t;
    Ok((
        PsfCotangent {
            h: Some(img(h_t)),
            dh: [Some(img(dt0)), Some(img(dt1)), Some(img(dt2))],
        },
        PsfCotangent {
            h: Some(img(h_prev)),
            dh: [Some(img(dp0)), Some(img(dp1)), Some(img(dp2))],
        },
    ))
}

/// Reverse pass of [`fisher_flashing`].
pub fn fisher_flashing_backward(psf: &PsfEval, beta: f64, m_bar: &DMatrix<f64>) -> Result<PsfCotangent> {
    let g = psf.grads()?;
    let (rows, cols) = psf.h.shape();
    let n = rows * cols;
    let sym = (m_bar + m_bar.transpose()) * 0.5;
    let mut h_bar = vec![0.0; n];
    let mut d_bar = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..n {
        let lam = psf.h.data[i] + beta;
        if lam <= 0.0 {
            continue;
        }
        let gi = [g[0].data[i], g[1].data[i], g[2].data[i]];
        let mg: [f64; 3] = std::array::from_fn(|a| (0..3).map(|b| sym[(a, b)] * gi[b]).sum());
        let q: f64 = (0..3).map(|a| gi[a] * mg[a]).sum();
        h_bar[i] = -q / (lam * lam);
        for a in 0..3 {
            d_bar[a][i] = 2.0 * mg[a] / lam;
        }
    }
    let img = |v: Vec<f64>| Image { rows, cols, data: v };
    let [d0, d1, d2] = d_bar;
    Ok(PsfCotangent {
        h: Some(img(h_bar)),
        dh: [Some(img(d0)), Some(img(d1)), Some(img(d2))],
    })
}

/// Which information model a CRB objective uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfoModel {
    /// two-pose event measurement (6 parameters)
    Event,
    /// blinking source, single pose (3 parameters)
    Flashing,
}

/// Sum over depth planes of the per-parameter bounds, averaged over motions.
#[derive(Debug, Clone)]
pub struct CrbObjective {
    pub planes: Vec<f64>,
    pub ridge: f64,
    pub model: InfoModel,
}

pub const DEFAULT_RIDGE: f64 = 1e-9;

/// `n` depth planes evenly spaced over `[-half_range, half_range]`.
pub fn depth_planes(n: usize, half_range: f64) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n)
        .map(|i| -half_range + 2.0 * half_range * i as f64 / (n - 1) as f64)
        .collect()
}

/// Per-plane bounds averaged over motions.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub z: f64,
    pub crb: Vec<f64>,
}

impl CrbObjective {
    pub fn new(planes: Vec<f64>, model: InfoModel) -> Self {
        CrbObjective {
            planes,
            ridge: DEFAULT_RIDGE,
            model,
        }
    }

    /// 11 planes over +-1.5 um, the design set.
    pub fn training(model: InfoModel) -> Self {
        Self::new(depth_planes(11, 1.5e-6), model)
    }

    /// 30 planes over +-1.5 um, the evaluation set.
    pub fn evaluation(model: InfoModel) -> Self {
        Self::new(depth_planes(30, 1.5e-6), model)
    }

    fn check(&self, motions: &[[f64; 3]]) -> Result<()> {
        if self.planes.is_empty() {
            return Err(Error::InvalidInput("at least one depth plane required".into()));
        }
        if self.model == InfoModel::Event && motions.is_empty() {
            return Err(Error::InvalidInput("at least one motion required".into()));
        }
        Ok(())
    }

    /// Bounds per plane (averaged over motions).
    pub fn curve(&self, optics: &Optics, mask: &Mask, motions: &[[f64; 3]]) -> Result<Vec<CurveRow>> {
        self.check(motions)?;
        let beta = optics.background();
        self.planes
            .par_iter()
            .map(|&z| {
                let prev = optics.psf_gradients(mask, [0.0, 0.0, z])?;
                match self.model {
                    InfoModel::Flashing => {
                        let m = fisher_flashing(&prev, beta)?;
                        Ok(CurveRow { z, crb: crb(&m, self.ridge)? })
                    }
                    InfoModel::Event => {
                        let mut acc = vec![0.0; 6];
                        for (mi, d) in motions.iter().enumerate() {
                            let cur = optics.psf_gradients(mask, [d[0], d[1], z + d[2]])?;
                            let m = fisher_event(&cur, &prev, beta)?;
                            let b = crb(&m, self.ridge).map_err(|e| {
                                Error::Singular(format!("plane z={z:.3e}, motion {mi}: {e}"))
                            })?;
                            for k in 0..6 {
                                acc[k] += b[k];
                            }
                        }
                        let inv = 1.0 / motions.len() as f64;
                        Ok(CurveRow {
                            z,
                            crb: acc.iter().map(|v| v * inv).collect(),
                        })
                    }
                }
            })
            .collect()
    }

    pub fn loss(&self, optics: &Optics, mask: &Mask, motions: &[[f64; 3]]) -> Result<f64> {
        let rows = self.curve(optics, mask, motions)?;
        let total: f64 = rows.iter().map(|r| r.crb.iter().sum::<f64>()).sum();
        if !total.is_finite() {
            return Err(Error::NonFinite("CRB loss".into()));
        }
        Ok(total)
    }

    /// Mean bound over planes and parameters.
    pub fn mean_crb(&self, optics: &Optics, mask: &Mask, motions: &[[f64; 3]]) -> Result<f64> {
        let rows = self.curve(optics, mask, motions)?;
        let n: usize = rows.iter().map(|r| r.crb.len()).sum();
        Ok(rows.iter().flat_map(|r| r.crb.iter()).sum::<f64>() / n as f64)
    }

    /// Loss and its gradient with respect to the mask values.
    pub fn loss_and_grad(&self, optics: &Optics, mask: &Mask, motions: &[[f64; 3]]) -> Result<(f64, Vec<f64>)> {
        self.check(motions)?;
        let beta = optics.background();
        let per_plane: Vec<Result<(f64, Vec<f64>)>> = self
            .planes
            .par_iter()
            .map(|&z| self.plane_loss_and_grad(optics, mask, motions, z, beta))
            .collect();
        let mut total = 0.0;
        let mut grad = vec![0.0; mask.values.len()];
        for r in per_plane {
            let (l, g) = r?;
            total += l;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        if !total.is_finite() {
            return Err(Error::NonFinite("CRB loss".into()));
        }
        if let Some(i) = grad.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("loss gradient at pupil sample {i}")));
        }
        Ok((total, grad))
    }

    fn plane_loss_and_grad(
        &self,
        optics: &Optics,
        mask: &Mask,
        motions: &[[f64; 3]],
        z: f64,
        beta: f64,
    ) -> Result<(f64, Vec<f64>)> {
        let (prev, prev_tape) = optics.psf_gradients_taped(mask, [0.0, 0.0, z])?;
        match self.model {
            InfoModel::Flashing => {
                let m = fisher_flashing(&prev, beta)?;
                let (b, m_bar) = crb_with_backward(&m, self.ridge, &[1.0; 3])
                    .map_err(|e| Error::Singular(format!("plane z={z:.3e}: {e}")))?;
                let cot = fisher_flashing_backward(&prev, beta, &m_bar)?;
                Ok((b.iter().sum(), optics.psf_backward(mask, &prev_tape, &cot)))
            }
            InfoModel::Event => {
                let w = 1.0 / motions.len() as f64;
                let mut loss = 0.0;
                let mut grad = vec![0.0; mask.values.len()];
                let mut prev_cot: Option<PsfCotangent> = None;
                for (mi, d) in motions.iter().enumerate() {
                    let (cur, cur_tape): (PsfEval, PsfTape) =
                        optics.psf_gradients_taped(mask, [d[0], d[1], z + d[2]])?;
                    let m = fisher_event(&cur, &prev, beta)?;
                    let (b, m_bar) = crb_with_backward(&m, self.ridge, &[w; 6]).map_err(|e| {
                        Error::Singular(format!("plane z={z:.3e}, motion {mi}: {e}"))
                    })?;
                    let l: f64 = b.iter().sum::<f64>() * w;
                    if !l.is_finite() {
                        return Err(Error::NonFinite(format!("loss at plane z={z:.3e}, motion {mi}")));
                    }
                    loss += l;
                    let (cot_t, cot_p) = fisher_event_backward(&cur, &prev, beta, &m_bar)?;
                    for (a, b) in grad.iter_mut().zip(optics.psf_backward(mask, &cur_tape, &cot_t)) {
                        *a += b;
                    }
                    prev_cot = Some(match prev_cot {
                        None => cot_p,
                        Some(acc) => add_cotangents(acc, &cot_p),
                    });
                }
                if let Some(c) = prev_cot {
                    for (a, b) in grad.iter_mut().zip(optics.psf_backward(mask, &prev_tape, &c)) {
                        *a += b;
                    }
                }
                Ok((loss, grad))
            }
        }
    }
}

fn add_cotangents(mut acc: PsfCotangent, other: &PsfCotangent) -> PsfCotangent {
    fn add(a: &mut Option<Image>, b: &Option<Image>) {
        match (a.as_mut(), b) {
            (Some(x), Some(y)) => {
                for (p, q) in x.data.iter_mut().zip(&y.data) {
                    *p += q;
                }
            }
            (None, Some(y)) => *a = Some(y.clone()),
            _ => {}
        }
    }
    add(&mut acc.h, &other.h);
    for j in 0..3 {
        add(&mut acc.dh[j], &other.dh[j]);
    }
    acc
}

/// Bounds of the moving-source model for one plane and motion.
pub fn event_crb_at(optics: &Optics, mask: &Mask, z: f64, motion: [f64; 3], ridge: f64) -> Result<CrbResult> {
    let prev = optics.psf_gradients(mask, [0.0, 0.0, z])?;
    let cur = optics.psf_gradients(mask, [motion[0], motion[1], z + motion[2]])?;
    let m = fisher_event(&cur, &prev, optics.background())?;
    Ok(CrbResult {
        per_parameter: crb(&m, ridge)?,
        depth: z,
        motion,
    })
}

pub const CURVE_HEADER: &str = "z_m,crb_xp,crb_yp,crb_zp,crb_xt,crb_yt,crb_zt";

pub fn write_curve_csv(rows: &[CurveRow], path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{CURVE_HEADER}")?;
    for r in rows {
        let vals: Vec<String> = r.crb.iter().map(|v| format!("{v:.6e}")).collect();
        writeln!(f, "{:.6e},{}", r.z, vals.join(","))?;
    }
    Ok(())
}
