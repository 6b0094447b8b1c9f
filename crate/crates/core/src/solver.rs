//! Positive fixed points of `f(·, θ, k)`, their stability, and the
//! critical temperatures where the disordered point loses stability.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::recursion::ScalarMap;

pub const DEFAULT_GRID: usize = 2001;
/// Absolute residual bound `|f(x*) - x*|` for reported fixed points.
pub const FIXED_POINT_TOL: f64 = 1e-12;
/// Band around `|f'| = 1` classified as neutral.
pub const NEUTRAL_TOL: f64 = 1e-7;
/// Relative distance below which two roots are considered the same.
pub const DEDUP_RADIUS: f64 = 1e-9;
/// Residual accepted by [`stability_of`].
pub const STABILITY_INPUT_TOL: f64 = 1e-10;
const TANGENCY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Attracting,
    Repelling,
    Neutral,
}

impl Stability {
    pub fn classify(multiplier: f64) -> Stability {
        let m = multiplier.abs();
        if m < 1.0 - NEUTRAL_TOL {
            Stability::Attracting
        } else if m > 1.0 + NEUTRAL_TOL {
            Stability::Repelling
        } else {
            Stability::Neutral
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub x_star: f64,
    pub multiplier: f64,
    pub stability: Stability,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointScan {
    pub points: Vec<FixedPoint>,
    /// Grid points where `|f(x) - x|` has a local minimum below `1e-8`
    /// without a sign change nearby: candidates for even-multiplicity roots.
    pub suspected_tangencies: Vec<f64>,
}

fn g(map: &ScalarMap, x: f64) -> f64 {
    map.f(x) - x
}

/// Bisect a sign change of `f(x) - x` down to adjacent floats and return
/// the endpoint with the smaller residual.
fn refine(map: &ScalarMap, mut lo: f64, mut hi: f64) -> f64 {
    let mut glo = g(map, lo);
    let ghi = g(map, hi);
    if glo == 0.0 {
        return lo;
    }
    if ghi == 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(map, mid);
        if gm == 0.0 {
            return mid;
        }
        if (gm > 0.0) == (glo > 0.0) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    if g(map, lo).abs() <= g(map, hi).abs() {
        lo
    } else {
        hi
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Build a [`FixedPoint`] for a point already known to be a root.
fn describe(map: &ScalarMap, x: f64) -> FixedPoint {
    let (fx, d) = map.f_with_derivative(x);
    FixedPoint {
        x_star: x,
        multiplier: d,
        stability: Stability::classify(d),
        residual: (fx - x).abs(),
    }
}

/// Scan `f(x) - x` on a log grid over the padded image interval, bracket
/// every sign change and refine it by bisection.
pub fn scan_fixed_points(map: &ScalarMap, grid_size: usize) -> Result<FixedPointScan> {
    if grid_size < 3 {
        return Err(Error::Domain(format!(
            "grid_size must be at least 3, got {grid_size}"
        )));
    }
    let (lo, hi) = map.image_bounds().interval();
    let mut grid = log_grid(0.999 * lo, 1.001 * hi, grid_size);
    if let Err(pos) = grid.binary_search_by(|v| v.partial_cmp(&1.0).unwrap()) {
        grid.insert(pos, 1.0);
    }
    let values: Vec<f64> = grid.iter().map(|&x| g(map, x)).collect();

    let mut roots = Vec::new();
    for i in 0..grid.len() {
        if values[i] == 0.0 {
            roots.push(grid[i]);
        } else if i + 1 < grid.len()
            && values[i + 1] != 0.0
            && (values[i] > 0.0) != (values[i + 1] > 0.0)
        {
            roots.push(refine(map, grid[i], grid[i + 1]));
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut unique: Vec<f64> = Vec::with_capacity(roots.len());
    for r in roots {
        match unique.last() {
            Some(&prev) if (r - prev).abs() <= DEDUP_RADIUS * r.abs().max(prev.abs()) => {
                if g(map, r).abs() < g(map, prev).abs() {
                    *unique.last_mut().unwrap() = r;
                }
            }
            _ => unique.push(r),
        }
    }
    // x = 1 is an exact root; bisection may stop an ulp away from it.
    match unique
        .iter_mut()
        .find(|r| (**r - 1.0).abs() <= DEDUP_RADIUS)
    {
        Some(r) => *r = 1.0,
        None => {
            unique.push(1.0);
            unique.sort_by(|a, b| a.partial_cmp(b).unwrap());
        }
    }

    let mut suspected = Vec::new();
    for i in 1..grid.len() - 1 {
        let (a, b, c) = (values[i - 1].abs(), values[i].abs(), values[i + 1].abs());
        if b < TANGENCY_TOL && b <= a && b <= c {
            let near_root = unique.iter().any(|&r| r >= grid[i - 1] && r <= grid[i + 1]);
            if !near_root {
                suspected.push(grid[i]);
            }
        }
    }

    Ok(FixedPointScan {
        points: unique.into_iter().map(|x| describe(map, x)).collect(),
        suspected_tangencies: suspected,
    })
}

/// All positive fixed points of `f(·, θ, k)`, ascending.
pub fn find_fixed_points(map: &ScalarMap, grid_size: usize) -> Result<Vec<FixedPoint>> {
    Ok(scan_fixed_points(map, grid_size)?.points)
}

/// Multiplier and stability class of a fixed point.
pub fn stability_of(x_star: f64, map: &ScalarMap) -> Result<FixedPoint> {
    if !(x_star > 0.0 && x_star.is_finite()) {
        return Err(Error::Domain(format!(
            "fixed point must be positive, got {x_star}"
        )));
    }
    let fp = describe(map, x_star);
    if fp.residual > STABILITY_INPUT_TOL {
        return Err(Error::ContractViolation(format!(
            "x = {x_star} is not a fixed point (|f(x) - x| = {:e})",
            fp.residual
        )));
    }
    Ok(fp)
}

/// `s_k(θ) = f'(1, θ, k) - 1`.
pub fn s_k(theta: f64, k: u32) -> Result<f64> {
    let map = ScalarMap::new(ModelParams::new(theta, k)?);
    Ok(map.f_derivative(1.0) - 1.0)
}

pub const CRITICAL_PRESCAN: usize = 200;
pub const CRITICAL_TOL: f64 = 1e-8;

/// Root of `s_k` on `bracket`, which must contain exactly one sign change.
pub fn critical_theta(k: u32, bracket: (f64, f64)) -> Result<f64> {
    critical_theta_with_tol(k, bracket, CRITICAL_TOL)
}

/// [`critical_theta`] with a caller-chosen final bracket width.
pub fn critical_theta_with_tol(k: u32, bracket: (f64, f64), tol: f64) -> Result<f64> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Domain(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    unique_root("s_k", |th| s_k(th, k), bracket, CRITICAL_PRESCAN, tol)
}

/// Pre-scan `func` on `prescan` equispaced points, insist on exactly one
/// sign change, then bisect it down to width `tol`.
fn unique_root<F>(
    what: &'static str,
    func: F,
    bracket: (f64, f64),
    prescan: usize,
    tol: f64,
) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let (a, b) = bracket;
    if !(a > 0.0 && b > a && b.is_finite()) {
        return Err(Error::Domain(format!("invalid bracket ({a}, {b})")));
    }
    let pts: Vec<f64> = (0..prescan)
        .map(|i| a + (b - a) * i as f64 / (prescan - 1) as f64)
        .collect();
    let vals = pts.iter().map(|&t| func(t)).collect::<Result<Vec<_>>>()?;
    let mut brackets = Vec::new();
    for i in 0..pts.len() - 1 {
        if vals[i] == 0.0 {
            brackets.push((pts[i], pts[i]));
        } else if vals[i + 1] != 0.0 && (vals[i] > 0.0) != (vals[i + 1] > 0.0) {
            brackets.push((pts[i], pts[i + 1]));
        }
    }
    if *vals.last().unwrap() == 0.0 {
        brackets.push((b, b));
    }
    match brackets.len() {
        0 => Err(Error::NoSignChange { what, lo: a, hi: b }),
        1 => {
            let (mut lo, mut hi) = brackets[0];
            if lo == hi {
                return Ok(lo);
            }
            let mut flo = func(lo)?;
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                let fm = func(mid)?;
                if fm == 0.0 {
                    return Ok(mid);
                }
                if (fm > 0.0) == (flo > 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            Ok(0.5 * (lo + hi))
        }
        _ => Err(Error::Ambiguous { what, brackets }),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Orbit {
    pub limit: f64,
    /// Whether `(x_n)_{n≥1}` is monotone; the starting point is excluded.
    pub trajectory_monotone: bool,
    pub iterations: usize,
    pub trajectory: Vec<f64>,
}

fn is_monotone(xs: &[f64]) -> bool {
    let slack = |a: f64| 4.0 * f64::EPSILON * a.abs();
    let up = xs.windows(2).all(|w| w[1] >= w[0] - slack(w[0]));
    let down = xs.windows(2).all(|w| w[1] <= w[0] + slack(w[0]));
    up || down
}

/// Iterate `x ↦ f(x)` from `x0` until successive iterates differ by at most `tol`.
pub fn iterate_orbit(x0: f64, map: &ScalarMap, max_iter: usize, tol: f64) -> Result<Orbit> {
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(Error::Domain(format!("x0 must be positive, got {x0}")));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Domain(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let mut traj = vec![x0];
    let mut x = x0;
    let mut step = f64::INFINITY;
    for n in 0..max_iter {
        let next = map.f(x);
        step = (next - x).abs();
        if step <= tol {
            let limit = if step == 0.0 { x } else { next };
            if step != 0.0 {
                traj.push(next);
            }
            let res = (map.f(limit) - limit).abs();
            if res > 10.0 * tol {
                return Err(Error::Convergence {
                    iterations: n + 1,
                    last_step: step,
                    partial_orbit: traj,
                });
            }
            return Ok(Orbit {
                limit,
                trajectory_monotone: is_monotone(&traj[1.min(traj.len())..]),
                iterations: n,
                trajectory: traj,
            });
        }
        traj.push(next);
        x = next;
    }
    Err(Error::Convergence {
        iterations: max_iter,
        last_step: step,
        partial_orbit: traj,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    UniqueDisordered,
    Coexistence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub theta: f64,
    pub k: u32,
    pub s_k: f64,
    pub fixed_points: Vec<FixedPoint>,
    pub regime: Regime,
    /// Smallest fixed point when exactly three were found (the minus phase).
    pub minus: Option<f64>,
    /// Largest fixed point when exactly three were found (the plus phase).
    pub plus: Option<f64>,
    pub suspected_tangencies: Vec<f64>,
}

impl PhasePoint {
    pub fn disordered(&self) -> Option<&FixedPoint> {
        self.fixed_points
            .iter()
            .find(|p| (p.x_star - 1.0).abs() <= DEDUP_RADIUS)
    }
}

pub fn classify_phase(theta: f64, k: u32) -> Result<PhasePoint> {
    classify_phase_with_grid(theta, k, DEFAULT_GRID)
}

pub fn classify_phase_with_grid(theta: f64, k: u32, grid_size: usize) -> Result<PhasePoint> {
    let map = ScalarMap::new(ModelParams::new(theta, k)?);
    let scan = scan_fixed_points(&map, grid_size)?;
    let pts = scan.points;
    let regime = if pts.len() >= 3 {
        Regime::Coexistence
    } else {
        Regime::UniqueDisordered
    };
    let (minus, plus) = if pts.len() == 3 {
        (Some(pts[0].x_star), Some(pts[2].x_star))
    } else {
        (None, None)
    };
    Ok(PhasePoint {
        theta,
        k,
        s_k: map.f_derivative(1.0) - 1.0,
        fixed_points: pts,
        regime,
        minus,
        plus,
        suspected_tangencies: scan.suspected_tangencies,
    })
}
