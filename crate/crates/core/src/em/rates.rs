//! M-step for the mismeasurement rates on a logistic reparametrization of
//! the bounded box: finite-difference Newton steps, with Nelder-Mead and a
//! Newton polish as the fallback.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::ErrorRates;
use crate::math::{self, logistic};
use crate::mixture::{MismeasureParams, Mixture, PosteriorRow};

/// Box for every estimated rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBounds {
    pub lower: f64,
    pub upper: f64,
}

impl Default for RateBounds {
    fn default() -> Self {
        Self {
            lower: 1e-6,
            upper: 0.9,
        }
    }
}

impl RateBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.lower >= 0.0 && self.lower < self.upper && self.upper < 1.0) {
            return Err(invalid("rate_bounds", "need 0 <= lower < upper < 1"));
        }
        Ok(())
    }

    pub(crate) fn to_unbounded(self, x: f64) -> f64 {
        let span = self.upper - self.lower;
        let u = ((x - self.lower) / span).clamp(1e-9, 1.0 - 1e-9);
        math::logit(u)
    }

    pub(crate) fn to_bounded(self, z: f64) -> f64 {
        self.lower + (self.upper - self.lower) * logistic(z)
    }
}

/// Which rates the M-step estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RateMode {
    /// One `(p, q)` pair, or one per stratum on stratified data.
    Free,
    /// One `(p, q)` pair shared by both strata.
    Tied,
    /// Rates held at the given values.
    Fixed { rates: MismeasureParams },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateStep {
    pub params: MismeasureParams,
    pub objective: f64,
    /// `false` when the optimizer ran out of budget and the previous rates
    /// were kept.
    pub converged: bool,
    pub evaluations: usize,
}

const OBJECTIVE_TOL: f64 = 1e-10;
const MAX_EVALS: usize = 4000;

fn pack(mis: &MismeasureParams, stratified: bool) -> Vec<f64> {
    match (stratified, &mis.per_stratum) {
        (true, Some([w, b])) => vec![w.p, w.q, b.p, b.q],
        (true, None) => vec![mis.p, mis.q, mis.p, mis.q],
        _ => vec![mis.p, mis.q],
    }
}

fn unpack(x: &[f64]) -> MismeasureParams {
    if x.len() == 4 {
        let w = ErrorRates { p: x[0], q: x[1] };
        let b = ErrorRates { p: x[2], q: x[3] };
        MismeasureParams {
            p: w.p,
            q: w.q,
            per_stratum: Some([w, b]),
        }
    } else {
        MismeasureParams {
            p: x[0],
            q: x[1],
            per_stratum: None,
        }
    }
}

/// Maximizes `sum gamma ln tau(p, q)` over the rates allowed by `mode`.
///
/// Newton steps on finite-difference derivatives of the logistic-scale
/// objective run first from the previous rates; Nelder-Mead takes over when
/// the curvature is not negative definite or a step fails to improve.
pub fn m_step_rates(
    mix: &Mixture,
    gamma_by_key: &[PosteriorRow],
    previous: &MismeasureParams,
    bounds: &RateBounds,
    mode: &RateMode,
) -> RateStep {
    rate_search(mix, gamma_by_key, previous, bounds, mode, true).expect("fallback always answers")
}

/// [`m_step_rates`]; without `fallback`, `None` where Newton steps alone
/// do not reach a maximum.
pub(crate) fn rate_search(
    mix: &Mixture,
    gamma_by_key: &[PosteriorRow],
    previous: &MismeasureParams,
    bounds: &RateBounds,
    mode: &RateMode,
    fallback: bool,
) -> Option<RateStep> {
    let stratified = match mode {
        RateMode::Fixed { rates } => {
            return Some(RateStep {
                params: *rates,
                objective: mix.rate_objective(gamma_by_key, rates),
                converged: true,
                evaluations: 1,
            });
        }
        RateMode::Free => mix.data().is_stratified(),
        RateMode::Tied => false,
    };
    let prev = if stratified {
        *previous
    } else {
        unpack(&pack(previous, false))
    };
    let prev_obj = mix.rate_objective(gamma_by_key, &prev);
    let x0 = pack(&prev, stratified);
    let evals = core::cell::Cell::new(0usize);
    let objective = |x: &[f64]| {
        evals.set(evals.get() + 1);
        mix.rate_objective(gamma_by_key, &unpack(x))
    };
    let on_z = |z: &[f64]| objective(&to_x(bounds, z));
    let z0: Vec<f64> = x0.iter().map(|&v| bounds.to_unbounded(v)).collect();

    let (x, best) = match newton_search(&on_z, &z0, on_z(&z0)) {
        Some((z, f)) => (to_x(bounds, &z), f),
        None if !fallback => return None,
        None => {
            let nm = nelder_mead(|z| -on_z(z), &z0, SIMPLEX_STEP, OBJECTIVE_TOL, MAX_EVALS);
            if !nm.converged {
                return Some(RateStep {
                    params: prev,
                    objective: prev_obj,
                    converged: false,
                    evaluations: evals.get(),
                });
            }
            let mut x = to_x(bounds, &nm.x);
            let mut best = -nm.f;
            polish(&objective, bounds, &mut x, &mut best);
            (x, best)
        }
    };
    if !(best >= prev_obj) {
        return Some(RateStep {
            params: prev,
            objective: prev_obj,
            converged: true,
            evaluations: evals.get(),
        });
    }
    Some(RateStep {
        params: unpack(&x),
        objective: best,
        converged: true,
        evaluations: evals.get(),
    })
}

/// Initial simplex edge on the logistic scale.
const SIMPLEX_STEP: f64 = 0.5;
/// Finite-difference step on the logistic scale.
const NEWTON_H: f64 = 1e-4;
const NEWTON_ITERS: usize = 20;
/// Longest Newton step on the logistic scale.
const MAX_NEWTON_STEP: f64 = 2.0;
/// Iterates beyond this logistic-scale magnitude are left to Nelder-Mead.
const NEWTON_Z_LIMIT: f64 = 30.0;

/// Central-difference gradient and Hessian of `f` at `z`, given `f(z)`.
fn fd_derivatives<F: Fn(&[f64]) -> f64>(f: &F, z: &[f64], fz: f64, h: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = z.len();
    let mut g = vec![0.0; n];
    let mut hess = vec![vec![0.0; n]; n];
    let mut zs = z.to_vec();
    for i in 0..n {
        zs[i] = z[i] + h;
        let up = f(&zs);
        zs[i] = z[i] - h;
        let down = f(&zs);
        zs[i] = z[i];
        g[i] = (up - down) / (2.0 * h);
        hess[i][i] = (up - 2.0 * fz + down) / (h * h);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let mut v = [0.0; 4];
            for (k, (si, sj)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)].iter().enumerate() {
                zs[i] = z[i] + si * h;
                zs[j] = z[j] + sj * h;
                v[k] = f(&zs);
            }
            zs[i] = z[i];
            zs[j] = z[j];
            let hij = (v[0] - v[1] - v[2] + v[3]) / (4.0 * h * h);
            hess[i][j] = hij;
            hess[j][i] = hij;
        }
    }
    (g, hess)
}

/// Damped Newton ascent from `z0`, shifting the Hessian towards a negative
/// definite one where needed. Stops once the unshifted quadratic model is
/// concave and predicts a gain below the objective tolerance; `None` when a
/// step cannot be made to improve or the iterate runs off towards a bound.
fn newton_search<F: Fn(&[f64]) -> f64>(f: &F, z0: &[f64], f0: f64) -> Option<(Vec<f64>, f64)> {
    if !f0.is_finite() {
        return None;
    }
    let (mut z, mut fz) = (z0.to_vec(), f0);
    for _ in 0..NEWTON_ITERS {
        let (g, hess) = fd_derivatives(f, &z, fz, NEWTON_H);
        let (dz, shifted) = ascent_direction(&hess, &g)?;
        let gain = 0.5 * g.iter().zip(&dz).map(|(a, b)| a * b).sum::<f64>();
        if !(gain >= 0.0) {
            return None;
        }
        if !shifted && gain <= OBJECTIVE_TOL * fz.abs().max(1.0) {
            // The last full step is nearly free and shrinks the gradient
            // quadratically.
            let cand: Vec<f64> = z.iter().zip(&dz).map(|(a, d)| a + d).collect();
            let fc = f(&cand);
            return Some(if fc >= fz { (cand, fc) } else { (z, fz) });
        }
        let longest = dz.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut t = (MAX_NEWTON_STEP / longest).min(1.0);
        let mut accepted = false;
        for _ in 0..30 {
            let cand: Vec<f64> = z.iter().zip(&dz).map(|(a, d)| a + t * d).collect();
            if cand.iter().any(|v| v.abs() > NEWTON_Z_LIMIT) {
                return None;
            }
            let fc = f(&cand);
            if fc >= fz {
                z = cand;
                fz = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return None;
        }
    }
    None
}

/// Solves `(-hess + lambda I) dz = g` with the smallest `lambda` from a
/// geometric ladder that makes the system positive definite. The flag is
/// set when `lambda > 0`.
fn ascent_direction(hess: &[Vec<f64>], g: &[f64]) -> Option<(Vec<f64>, bool)> {
    let mut neg: Vec<Vec<f64>> = hess.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
    if let Some(dz) = cholesky_solve(&neg, g) {
        return Some((dz, false));
    }
    let scale = (0..g.len()).map(|i| hess[i][i].abs()).fold(0.0, f64::max).max(1e-8);
    let mut lambda = 1e-3 * scale;
    for _ in 0..12 {
        for (i, row) in neg.iter_mut().enumerate() {
            row[i] = -hess[i][i] + lambda;
        }
        if let Some(dz) = cholesky_solve(&neg, g) {
            return Some((dz, true));
        }
        lambda *= 10.0;
    }
    None
}

/// Solves `a x = b` for symmetric positive definite `a`; `None` otherwise.
fn cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i][i] = math::sqrt(s);
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (b[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (y[i] - ((i + 1)..n).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    Some(x)
}

fn to_x(bounds: &RateBounds, z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| bounds.to_bounded(v)).collect()
}

/// Central-difference gradient of `sum gamma ln tau` in the natural rate
/// coordinates, ordered `p, q` (then `p, q` of the second stratum).
pub fn rate_objective_gradient(
    mix: &Mixture,
    gamma_by_key: &[PosteriorRow],
    rates: &MismeasureParams,
    step: f64,
) -> Vec<f64> {
    let x = pack(rates, rates.per_stratum.is_some());
    let f = |x: &[f64]| mix.rate_objective(gamma_by_key, &unpack(x));
    central_gradient(&f, &x, step)
}

fn central_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], step: f64) -> Vec<f64> {
    let mut xs = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = step * x[i].abs().max(1e-3);
            xs[i] = x[i] + h;
            let up = f(&xs);
            xs[i] = x[i] - h;
            let down = f(&xs);
            xs[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Newton steps on finite-difference derivatives, kept only while they
/// improve the objective and stay inside the bounds.
fn polish<F: Fn(&[f64]) -> f64>(f: &F, bounds: &RateBounds, x: &mut Vec<f64>, best: &mut f64) {
    let n = x.len();
    for _ in 0..6 {
        let h: Vec<f64> = x.iter().map(|v| 1e-4 * v.abs().max(1e-4)).collect();
        let inside = x
            .iter()
            .zip(&h)
            .all(|(v, hv)| v - 2.0 * hv > bounds.lower && v + 2.0 * hv < bounds.upper);
        if !inside {
            return;
        }
        let mut g = vec![0.0; n];
        let mut hess = vec![vec![0.0; n]; n];
        let mut xs = x.clone();
        let f0 = *best;
        for i in 0..n {
            xs[i] = x[i] + h[i];
            let up = f(&xs);
            xs[i] = x[i] - h[i];
            let down = f(&xs);
            xs[i] = x[i];
            g[i] = (up - down) / (2.0 * h[i]);
            hess[i][i] = (up - 2.0 * f0 + down) / (h[i] * h[i]);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let mut v = [0.0; 4];
                for (k, (si, sj)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)].iter().enumerate() {
                    xs[i] = x[i] + si * h[i];
                    xs[j] = x[j] + sj * h[j];
                    v[k] = f(&xs);
                }
                xs[i] = x[i];
                xs[j] = x[j];
                let hij = (v[0] - v[1] - v[2] + v[3]) / (4.0 * h[i] * h[j]);
                hess[i][j] = hij;
                hess[j][i] = hij;
            }
        }
        let Some(dx) = solve(&hess, &g) else { return };
        // Newton step for a maximum: x - H^{-1} g.
        let cand: Vec<f64> = x.iter().zip(&dx).map(|(v, d)| v - d).collect();
        if cand.iter().any(|v| !(*v > bounds.lower && *v < bounds.upper)) {
            return;
        }
        let fc = f(&cand);
        if !(fc > *best) {
            return;
        }
        *x = cand;
        *best = fc;
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(r, &v)| {
            let mut r = r.clone();
            r.push(v);
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if !(m[piv][col].abs() > 1e-300) {
            return None;
        }
        m.swap(col, piv);
        for row in (col + 1)..n {
            let factor = m[row][col] / m[col][col];
            for k in col..=n {
                m[row][k] -= factor * m[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|k| m[i][k] * x[k]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

pub(crate) struct NelderMead {
    pub x: Vec<f64>,
    pub f: f64,
    pub converged: bool,
}

/// Minimizes `f` from `x0` with an axis-aligned initial simplex of edge
/// `step`. Stops when the spread of simplex values drops below
/// `tol * max(1, |f_best|)`.
pub(crate) fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    step: f64,
    tol: f64,
    max_evals: usize,
) -> NelderMead {
    let n = x0.len();
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = eval(&x);
        simplex.push((x, v));
    }
    let mut evals = n + 1;
    let mut converged = false;
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (lo, hi) = (simplex[0].1, simplex[n].1);
        if lo.is_finite() && (hi - lo).abs() <= tol * lo.abs().max(1.0) {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let fr = eval(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe);
            evals += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let x = along(0.5);
            let v = eval(&x);
            (x, v)
        } else {
            let x = along(-0.5);
            let v = eval(&x);
            (x, v)
        };
        evals += 1;
        if fc < simplex[n].1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for (x, v) in simplex.iter_mut().skip(1) {
            for (xi, bi) in x.iter_mut().zip(&best) {
                *xi = bi + 0.5 * (*xi - bi);
            }
            *v = eval(x);
        }
        evals += n;
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    NelderMead { x, f, converged }
}
