//! Squared-extrapolation step for EM. Parameters are mapped to an
//! unconstrained vector and two EM updates define a quadratic path through
//! parameter space.

use alloc::vec::Vec;

use super::mstep::COEF_BOUND;
use super::rates::{RateBounds, RateMode};
use crate::graph::ErrorRates;
use crate::math;
use crate::mixture::{MismeasureParams, ModelParams, OutcomeFamily};

/// Largest extrapolation length, in units of the first EM step.
const MAX_STEP: f64 = 64.0;

fn flatten(params: &ModelParams, bounds: &RateBounds, mode: &RateMode) -> Vec<f64> {
    let f = &params.family;
    let mut x: Vec<f64> = f.alpha().iter().chain(f.beta()).copied().collect();
    if let OutcomeFamily::Gaussian { sigma2, .. } = *f {
        x.push(math::ln(sigma2));
    }
    if !matches!(mode, RateMode::Fixed { .. }) {
        let m = &params.mismeasure;
        match &m.per_stratum {
            Some([a, b]) => x.extend([a.p, a.q, b.p, b.q].map(|v| bounds.to_unbounded(v))),
            None => x.extend([m.p, m.q].map(|v| bounds.to_unbounded(v))),
        }
    }
    x
}

/// Largest coordinate change between two parameter sets, on the scale used
/// for extrapolation.
pub(crate) fn max_change(a: &ModelParams, b: &ModelParams, bounds: &RateBounds, mode: &RateMode) -> f64 {
    let (x, y) = (flatten(a, bounds, mode), flatten(b, bounds, mode));
    x.iter().zip(&y).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

fn unflatten(x: &[f64], like: &ModelParams, bounds: &RateBounds, mode: &RateMode) -> Option<ModelParams> {
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut family = like.family;
    let mut rest = &x[8..];
    {
        let binomial = matches!(family, OutcomeFamily::Binomial { .. });
        let (alpha, beta) = family.coefs_mut();
        for (k, v) in alpha.iter_mut().chain(beta.iter_mut()).enumerate() {
            *v = if binomial {
                x[k].clamp(-COEF_BOUND, COEF_BOUND)
            } else {
                x[k]
            };
        }
    }
    if let OutcomeFamily::Gaussian { sigma2, .. } = &mut family {
        *sigma2 = math::exp(rest[0]);
        rest = &rest[1..];
        if !(*sigma2 > 0.0 && sigma2.is_finite()) {
            return None;
        }
    }
    let mismeasure = if matches!(mode, RateMode::Fixed { .. }) {
        like.mismeasure
    } else {
        let r: Vec<f64> = rest.iter().map(|&z| bounds.to_bounded(z)).collect();
        if r.len() == 4 {
            MismeasureParams::stratified(ErrorRates { p: r[0], q: r[1] }, ErrorRates { p: r[2], q: r[3] }).ok()?
        } else {
            MismeasureParams::new(r[0], r[1]).ok()?
        }
    };
    Some(ModelParams { family, mismeasure })
}

/// Squared extrapolation through three successive EM iterates.
pub(crate) struct Extrapolation<'a> {
    x0: Vec<f64>,
    r: Vec<f64>,
    v: Vec<f64>,
    /// Step length from the iterates, capped at `MAX_STEP`.
    pub step: f64,
    like: &'a ModelParams,
    bounds: RateBounds,
    mode: RateMode,
}

impl<'a> Extrapolation<'a> {
    /// `None` when the iterates do not call for a step beyond the plain update.
    pub fn new(
        p0: &ModelParams,
        p1: &ModelParams,
        p2: &'a ModelParams,
        bounds: &RateBounds,
        mode: &RateMode,
    ) -> Option<Self> {
        let x0 = flatten(p0, bounds, mode);
        let x1 = flatten(p1, bounds, mode);
        let x2 = flatten(p2, bounds, mode);
        if x0.len() != x1.len() || x1.len() != x2.len() {
            return None;
        }
        let r: Vec<f64> = x1.iter().zip(&x0).map(|(a, b)| a - b).collect();
        let v: Vec<f64> = x2.iter().zip(&x1).zip(&r).map(|((c, b), ri)| c - b - ri).collect();
        let norm = |u: &[f64]| math::sqrt(u.iter().map(|a| a * a).sum::<f64>());
        let (nr, nv) = (norm(&r), norm(&v));
        if !(nv > 0.0) {
            return None;
        }
        let step = (nr / nv).min(MAX_STEP);
        if !(step > 1.0) {
            return None;
        }
        Some(Self {
            x0,
            r,
            v,
            step,
            like: p2,
            bounds: *bounds,
            mode: *mode,
        })
    }

    /// The point `x0 + 2 s r + s^2 v`; `s = 1` recovers the plain update.
    pub fn at(&self, s: f64) -> Option<ModelParams> {
        let xe: Vec<f64> = self
            .x0
            .iter()
            .zip(&self.r)
            .zip(&self.v)
            .map(|((a, ri), vi)| a + 2.0 * s * ri + s * s * vi)
            .collect();
        unflatten(&xe, self.like, &self.bounds, &self.mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(a: f64, s2: f64, p: f64) -> ModelParams {
        ModelParams {
            family: OutcomeFamily::gaussian([a, 0.1, 0.2, 0.3], [0.5; 4], s2).unwrap(),
            mismeasure: MismeasureParams::new(p, 0.01).unwrap(),
        }
    }

    #[test]
    fn round_trip() {
        let b = RateBounds::default();
        let p = params(0.3, 0.7, 0.2);
        let back = unflatten(&flatten(&p, &b, &RateMode::Free), &p, &b, &RateMode::Free).unwrap();
        assert!((back.family.alpha()[0] - 0.3).abs() < 1e-12);
        assert!((back.mismeasure.p - 0.2).abs() < 1e-12);
        assert!((back.mismeasure.q - 0.01).abs() < 1e-12);
    }

    #[test]
    fn geometric_sequence_jumps_to_limit() {
        // Iterates approaching 1.0 with ratio 1/2 along alpha_0 only.
        let b = RateBounds::default();
        let mode = RateMode::Fixed {
            rates: MismeasureParams::new(0.2, 0.01).unwrap(),
        };
        let p2 = params(0.75, 0.5, 0.2);
        let e = Extrapolation::new(&params(0.0, 0.5, 0.2), &params(0.5, 0.5, 0.2), &p2, &b, &mode).unwrap();
        assert_eq!(e.step, 2.0);
        assert!((e.at(e.step).unwrap().family.alpha()[0] - 1.0).abs() < 1e-12);
        assert!((e.at(1.0).unwrap().family.alpha()[0] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn no_step_without_curvature() {
        let b = RateBounds::default();
        let p = params(0.3, 0.7, 0.2);
        assert!(Extrapolation::new(&p, &p, &p, &b, &RateMode::Free).is_none());
    }
}
