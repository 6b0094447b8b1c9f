//! The translation-invariant boundary-law recursion and its scalar reduction.
//!
//! Writing `X = x^k`, one pass down a period of the tree is
//!
//! ```text
//! t = (X + θ³)/(θ² + θX)      u = (θX + 1)/(X + θ)      v = (θ³X + 1)/(θ² + θX)
//! y = (θ⁶T + θ⁴ + θ²U + N) / (θ³(T + 1 + U + N))
//! z = (T + θ² + θ⁴U + θ⁶N) / (θ³(T + 1 + U + N))
//! f = (p + θ + θ²q) / (θ²p + θ + q)
//! ```
//!
//! with `T, U, N = t^k, u^k, v^k` and `p, q = y^k, z^k`. Fixed points of
//! `x ↦ f(x)` are exactly the constant boundary laws.

use serde::{Deserialize, Serialize};

use crate::dual::{log_sum_exp, Dual, Scalar};
use crate::model::{powi, BoundaryLaw, ModelParams};

/// `ln(1e300)`: past this magnitude intermediate products are formed in log space.
const LOG_OVERFLOW_GUARD: f64 = 690.775_527_898_213_7;

/// Evaluation context for `f(·, θ, k)` with cached powers of `θ`.
#[derive(Clone, Copy, Debug)]
pub struct ScalarMap {
    params: ModelParams,
    k: u32,
    th: f64,
    th2: f64,
    th3: f64,
    th4: f64,
    th6: f64,
    ln_th: f64,
}

/// Limits of `f` at `0⁺` and `+∞`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageBounds {
    pub l0: f64,
    pub linf: f64,
}

impl ImageBounds {
    /// The compact interval containing the image of `f`.
    pub fn interval(&self) -> (f64, f64) {
        (self.l0.min(self.linf), self.l0.max(self.linf))
    }
}

impl ScalarMap {
    pub fn new(params: ModelParams) -> Self {
        let th = params.theta();
        let th2 = th * th;
        let th3 = th2 * th;
        ScalarMap {
            params,
            k: params.k(),
            th,
            th2,
            th3,
            th4: th2 * th2,
            th6: th3 * th3,
            ln_th: th.ln(),
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn theta(&self) -> f64 {
        self.th
    }

    /// `[θ, θ², θ³, θ⁴, θ⁶]`
    pub fn theta_powers(&self) -> [f64; 5] {
        [self.th, self.th2, self.th3, self.th4, self.th6]
    }

    fn needs_log_space(&self, x: f64) -> bool {
        let kf = f64::from(self.k);
        let lt = self.ln_th.abs();
        let lx = if x > 0.0 { x.ln().abs() } else { 0.0 };
        (kf * lx).max(3.0 * kf * lt) + 6.0 * lt > LOG_OVERFLOW_GUARD
    }

    fn inner_generic<S: Scalar>(&self, x: S) -> (S, S, S) {
        let c = S::constant;
        let xk = x.powi(self.k);
        if xk.value() > 1.0 {
            let r = c(1.0) / xk;
            let t = (c(1.0) + r.scale(self.th3)) / (r.scale(self.th2) + c(self.th));
            let u = (c(self.th) + r) / (c(1.0) + r.scale(self.th));
            let v = (c(self.th3) + r) / (r.scale(self.th2) + c(self.th));
            (t, u, v)
        } else {
            let t = (xk + c(self.th3)) / (c(self.th2) + xk.scale(self.th));
            let u = (xk.scale(self.th) + c(1.0)) / (xk + c(self.th));
            let v = (xk.scale(self.th3) + c(1.0)) / (c(self.th2) + xk.scale(self.th));
            (t, u, v)
        }
    }

    fn middle_generic<S: Scalar>(&self, t: S, u: S, v: S) -> (S, S) {
        let c = S::constant;
        let (tk, uk, vk) = (t.powi(self.k), u.powi(self.k), v.powi(self.k));
        let den = (tk + c(1.0) + uk + vk).scale(self.th3);
        let y = (tk.scale(self.th6) + c(self.th4) + uk.scale(self.th2) + vk) / den;
        let z = (tk + c(self.th2) + uk.scale(self.th4) + vk.scale(self.th6)) / den;
        (y, z)
    }

    fn outer_generic<S: Scalar>(&self, y: S, z: S) -> S {
        let c = S::constant;
        let p = y.powi(self.k);
        let q = z.powi(self.k);
        (p + c(self.th) + q.scale(self.th2)) / (p.scale(self.th2) + c(self.th) + q)
    }

    /// Log-space continuation of the layers below the inner laws.
    fn outer_from_log_inner<S: Scalar>(&self, lt: S, lu: S, lv: S) -> S {
        let c = S::constant;
        let kf = f64::from(self.k);
        let l = self.ln_th;
        let (lt, lu, lv) = (lt.scale(kf), lu.scale(kf), lv.scale(kf));
        let lden = log_sum_exp(&[lt, c(0.0), lu, lv]) + c(3.0 * l);
        let ly = log_sum_exp(&[lt + c(6.0 * l), c(4.0 * l), lu + c(2.0 * l), lv]) - lden;
        let lz = log_sum_exp(&[lt, c(2.0 * l), lu + c(4.0 * l), lv + c(6.0 * l)]) - lden;
        let (lp, lq) = (ly.scale(kf), lz.scale(kf));
        let num = log_sum_exp(&[lp, c(l), lq + c(2.0 * l)]);
        let den = log_sum_exp(&[lp + c(2.0 * l), c(l), lq]);
        (num - den).exp()
    }

    fn eval_log<S: Scalar>(&self, x: S) -> S {
        let c = S::constant;
        let l = self.ln_th;
        let lx = x.ln().scale(f64::from(self.k));
        let d1 = log_sum_exp(&[c(2.0 * l), lx + c(l)]);
        let lt = log_sum_exp(&[lx, c(3.0 * l)]) - d1;
        let lu = log_sum_exp(&[lx + c(l), c(0.0)]) - log_sum_exp(&[lx, c(l)]);
        let lv = log_sum_exp(&[lx + c(3.0 * l), c(0.0)]) - d1;
        self.outer_from_log_inner(lt, lu, lv)
    }

    fn eval<S: Scalar>(&self, x: S) -> S {
        if self.needs_log_space(x.value()) {
            return self.eval_log(x);
        }
        let (t, u, v) = self.inner_generic(x);
        let (y, z) = self.middle_generic(t, u, v);
        self.outer_generic(y, z)
    }

    /// `(t, u, v)` as functions of `x`.
    pub fn inner_laws(&self, x: f64) -> (f64, f64, f64) {
        self.inner_generic(x)
    }

    /// `(y, z)` as functions of `(t, u, v)`.
    pub fn middle_laws(&self, t: f64, u: f64, v: f64) -> (f64, f64) {
        self.middle_generic(t, u, v)
    }

    /// `f(x, θ, k)`; accepts `x = 0`.
    pub fn f(&self, x: f64) -> f64 {
        self.eval(x)
    }

    /// `f'(x, θ, k)` by forward-mode differentiation of the exact composition.
    pub fn f_derivative(&self, x: f64) -> f64 {
        self.eval(Dual::variable(x)).eps
    }

    /// `f` and `f'` from a single pass.
    pub fn f_with_derivative(&self, x: f64) -> (f64, f64) {
        let d = self.eval(Dual::variable(x));
        (d.re, d.eps)
    }

    /// Evaluate the lower layers of `f` from prescribed inner laws.
    fn f_from_inner(&self, t: f64, u: f64, v: f64) -> f64 {
        let kf = f64::from(self.k);
        if (3.0 * kf + 6.0) * self.ln_th.abs() > LOG_OVERFLOW_GUARD {
            self.outer_from_log_inner(t.ln(), u.ln(), v.ln())
        } else {
            let (y, z) = self.middle_generic(t, u, v);
            self.outer_generic(y, z)
        }
    }

    /// Closed-form limits of `f` at `0⁺` and `+∞`, from the leading terms
    /// `(t, u, v) → (θ, 1/θ, 1/θ²)` and `(1/θ, θ, θ²)` respectively.
    pub fn image_bounds(&self) -> ImageBounds {
        let th = self.th;
        ImageBounds {
            l0: self.f_from_inner(th, 1.0 / th, 1.0 / self.th2),
            linf: self.f_from_inner(1.0 / th, th, self.th2),
        }
    }

    /// Full boundary law generated by the substitution chain at `x`.
    ///
    /// Only a fixed point of `f` yields a solution of the constant system;
    /// otherwise the first equation is violated (see [`ScalarMap::system_residual`]).
    pub fn law_from_x(&self, x: f64) -> BoundaryLaw {
        let k = self.k;
        let (t, u, v) = self.inner_laws(x);
        let (y, z) = self.middle_laws(t, u, v);
        BoundaryLaw {
            x: powi(x, k),
            y: powi(y, k),
            z: powi(z, k),
            t: powi(t, k),
            u: powi(u, k),
            n: powi(v, k),
        }
    }

    /// Closed-form disordered solution `X = U = 1`, `Y = Z`, `T = N`.
    pub fn disordered_law(&self) -> BoundaryLaw {
        let (th, th2, th3, th4, th6) = (self.th, self.th2, self.th3, self.th4, self.th6);
        let t0 = powi((1.0 + th3) / (th2 + th), self.k);
        let y0 = powi(
            (th6 * t0 + th4 + th2 + t0) / (2.0 * th3 * (t0 + 1.0)),
            self.k,
        );
        BoundaryLaw {
            x: 1.0,
            y: y0,
            z: y0,
            t: t0,
            u: 1.0,
            n: t0,
        }
    }

    /// Right-hand sides of the constant boundary-law system evaluated at `law`.
    pub fn system_rhs(&self, law: &BoundaryLaw) -> BoundaryLaw {
        let (th, th2, th3, th4, th6) = (self.th, self.th2, self.th3, self.th4, self.th6);
        let k = self.k;
        let BoundaryLaw { x, y, z, t, u, n } = *law;
        let d = th3 * (t + 1.0 + u + n);
        BoundaryLaw {
            x: powi((y + th + th2 * z) / (th2 * y + th + z), k),
            y: powi((th6 * t + th4 + th2 * u + n) / d, k),
            z: powi((t + th2 + th4 * u + th6 * n) / d, k),
            t: powi((x + th3) / (th2 + th * x), k),
            u: powi((th * x + 1.0) / (x + th), k),
            n: powi((th3 * x + 1.0) / (th2 + th * x), k),
        }
    }

    /// Componentwise relative residuals `|rhs_i - law_i| / law_i`.
    pub fn system_residuals(&self, law: &BoundaryLaw) -> [f64; 6] {
        let rhs = self.system_rhs(law).as_array();
        let lhs = law.as_array();
        std::array::from_fn(|i| ((rhs[i] - lhs[i]) / lhs[i]).abs())
    }

    /// Largest relative residual of the constant system.
    pub fn system_residual(&self, law: &BoundaryLaw) -> f64 {
        self.system_residuals(law).into_iter().fold(0.0, f64::max)
    }
}
