//! Level-to-level transition matrices of a boundary law, their product over
//! one period, and the Kesten–Stigum function `g_k`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BoundaryLaw, ModelParams};
use crate::recursion::ScalarMap;
use crate::solver::STABILITY_INPUT_TOL;

/// Agreement required between `tr(H) - 1` and the characteristic-polynomial root.
pub const EIGEN_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionSet {
    /// Ψ → Φ.
    pub p: [[f64; 3]; 2],
    /// Φ → Υ.
    pub q: [[f64; 4]; 3],
    /// Υ → Ψ.
    pub r: [[f64; 2]; 4],
    /// `P·Q·R`, a stochastic matrix on Ψ.
    pub h: [[f64; 2]; 2],
    pub lambda2: f64,
}

/// Normalize `exp(log_w)` to a probability row without overflow.
fn softmax<const N: usize>(log_w: [f64; N]) -> [f64; N] {
    let m = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = log_w.map(|l| (l - m).exp());
    let s: f64 = out.iter().sum();
    for v in &mut out {
        *v /= s;
    }
    out
}

fn matmul<const A: usize, const B: usize, const C: usize>(
    x: &[[f64; B]; A],
    y: &[[f64; C]; B],
) -> [[f64; C]; A] {
    let mut out = [[0.0; C]; A];
    for i in 0..A {
        for j in 0..C {
            out[i][j] = (0..B).map(|l| x[i][l] * y[l][j]).sum();
        }
    }
    out
}

/// Both roots of `λ² - tr·λ + det`, computed without cancellation.
pub fn eigenvalues_2x2(h: &[[f64; 2]; 2]) -> (f64, f64) {
    let tr = h[0][0] + h[1][1];
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    let big = 0.5 * (tr + tr.signum() * disc);
    let small = if big != 0.0 { det / big } else { 0.0 };
    (big, small)
}

/// Build `P`, `Q`, `R` from the ratio form of a boundary law.
///
/// Rows are computed as softmax over log-weights so large `θ` or extreme laws
/// cannot overflow; only non-finite inputs produce non-finite entries.
pub fn build_transitions(law: &BoundaryLaw, params: &ModelParams) -> Result<TransitionSet> {
    law.validate()?;
    let lt = params.beta_j() / 2.0;
    let (lx, ly, lz) = (law.x.ln(), law.y.ln(), law.z.ln());
    let (ltt, lu, ln) = (law.t.ln(), law.u.ln(), law.n.ln());

    let p = [
        softmax([2.0 * lt + ly, lt, lz]),
        softmax([ly, lt, 2.0 * lt + lz]),
    ];
    let q = [
        softmax([6.0 * lt + ltt, 4.0 * lt, 2.0 * lt + lu, ln]),
        softmax([ltt, 0.0, lu, ln]),
        softmax([ltt, 2.0 * lt, 4.0 * lt + lu, 6.0 * lt + ln]),
    ];
    let r = [
        softmax([3.0 * lt, lx]),
        softmax([lt, lx]),
        softmax([0.0, lt + lx]),
        softmax([0.0, 3.0 * lt + lx]),
    ];
    let h = matmul(&matmul(&p, &q), &r);

    let all_finite = p
        .iter()
        .flatten()
        .chain(q.iter().flatten())
        .chain(r.iter().flatten())
        .chain(h.iter().flatten())
        .all(|v| v.is_finite());
    if !all_finite {
        return Err(Error::NumericalRange(format!(
            "non-finite transition entry for law {law:?}"
        )));
    }

    let lambda2 = h[0][0] + h[1][1] - 1.0;
    let (_, small) = eigenvalues_2x2(&h);
    if (small - lambda2).abs() > EIGEN_TOL {
        return Err(Error::NumericalRange(format!(
            "second eigenvalue mismatch: trace identity {lambda2}, characteristic root {small}"
        )));
    }
    Ok(TransitionSet {
        p,
        q,
        r,
        h,
        lambda2,
    })
}

impl TransitionSet {
    /// Largest `|row sum - 1|` across all four matrices.
    pub fn max_row_defect(&self) -> f64 {
        fn rows<const N: usize>(m: &[[f64; N]]) -> f64 {
            m.iter()
                .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
                .fold(0.0, f64::max)
        }
        rows(&self.p)
            .max(rows(&self.q))
            .max(rows(&self.r))
            .max(rows(&self.h))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub theta: f64,
    pub k: u32,
    pub lambda2: f64,
    pub g_k: f64,
    pub non_extremal: bool,
}

fn report(map: &ScalarMap, law: &BoundaryLaw) -> Result<KsReport> {
    let ts = build_transitions(law, map.params())?;
    let k = map.k();
    let g = f64::from(k).powi(3) * ts.lambda2 * ts.lambda2 - 1.0;
    Ok(KsReport {
        theta: map.theta(),
        k,
        lambda2: ts.lambda2,
        g_k: g,
        non_extremal: g > 0.0,
    })
}

/// `g_k(θ) = k³·λ₂² - 1` for the disordered law.
pub fn g_k(theta: f64, k: u32) -> Result<KsReport> {
    let map = ScalarMap::new(ModelParams::new(theta, k)?);
    report(&map, &map.disordered_law())
}

/// Same quantity for the law of an arbitrary fixed point. Informational only
/// away from `x* = 1`.
pub fn ks_for_fixed_point(x_star: f64, map: &ScalarMap) -> Result<KsReport> {
    if !(x_star > 0.0 && x_star.is_finite()) {
        return Err(Error::Domain(format!(
            "fixed point must be positive, got {x_star}"
        )));
    }
    let res = (map.f(x_star) - x_star).abs();
    if res > STABILITY_INPUT_TOL {
        return Err(Error::ContractViolation(format!(
            "x = {x_star} is not a fixed point (|f(x) - x| = {res:e})"
        )));
    }
    report(map, &map.law_from_x(x_star))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsScan {
    pub k: u32,
    pub reports: Vec<KsReport>,
    /// Maximal runs of consecutive grid points with `g_k > 0`, as `(first θ, last θ)`.
    pub positive_intervals: Vec<(f64, f64)>,
}

impl KsScan {
    /// Total length of the positive runs measured on the grid.
    pub fn positive_length(&self) -> f64 {
        self.positive_intervals.iter().map(|(a, b)| b - a).sum()
    }
}

pub fn ks_scan(k: u32, grid: &[f64]) -> Result<KsScan> {
    if grid.is_empty() {
        return Err(Error::Domain("theta grid is empty".into()));
    }
    if grid
        .windows(2)
        .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
    {
        return Err(Error::Domain(
            "theta grid must be strictly ascending".into(),
        ));
    }
    let reports = grid
        .par_iter()
        .map(|&th| g_k(th, k))
        .collect::<Result<Vec<_>>>()?;
    let mut intervals = Vec::new();
    let mut start: Option<f64> = None;
    let mut last = 0.0;
    for r in &reports {
        if r.non_extremal {
            start.get_or_insert(r.theta);
            last = r.theta;
        } else if let Some(a) = start.take() {
            intervals.push((a, last));
        }
    }
    if let Some(a) = start {
        intervals.push((a, last));
    }
    Ok(KsScan {
        k,
        reports,
        positive_intervals: intervals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_params;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn uniform_at_theta_one() {
        let params = make_params(1.0, 3).unwrap();
        let ts = build_transitions(&BoundaryLaw::ones(), &params).unwrap();
        assert!(ts.p.iter().flatten().all(|&v| close(v, 1.0 / 3.0, 1e-15)));
        assert!(ts.q.iter().flatten().all(|&v| close(v, 0.25, 1e-15)));
        assert!(ts.r.iter().flatten().all(|&v| close(v, 0.5, 1e-15)));
        assert!(ts.h.iter().flatten().all(|&v| close(v, 0.5, 1e-15)));
        assert!(close(ts.lambda2, 0.0, 1e-15));
    }

    #[test]
    fn disordered_is_flip_symmetric() {
        let map = ScalarMap::new(make_params(2.0, 2).unwrap());
        let ts = build_transitions(&map.disordered_law(), map.params()).unwrap();
        assert!(close(ts.h[0][0], ts.h[1][1], 1e-14));
        assert!(close(ts.h[0][1], ts.h[1][0], 1e-14));
    }

    #[test]
    fn direct_weights_agree() {
        // Plain-weight construction without the log-space path.
        let th: f64 = 1.7;
        let law = BoundaryLaw::new(0.8, 1.3, 2.1, 0.6, 1.9, 3.3).unwrap();
        let ts = build_transitions(&law, &make_params(th, 2).unwrap()).unwrap();
        let norm = |w: Vec<f64>| {
            let s: f64 = w.iter().sum();
            w.into_iter().map(|v| v / s).collect::<Vec<_>>()
        };
        let p1 = norm(vec![law.y, th, th * th * law.z]);
        let q0 = norm(vec![th.powi(6) * law.t, th.powi(4), th * th * law.u, law.n]);
        let r2 = norm(vec![1.0, th * law.x]);
        assert!(ts.p[1].iter().zip(&p1).all(|(a, b)| close(*a, *b, 1e-15)));
        assert!(ts.q[0].iter().zip(&q0).all(|(a, b)| close(*a, *b, 1e-15)));
        assert!(ts.r[2].iter().zip(&r2).all(|(a, b)| close(*a, *b, 1e-15)));
    }

    #[test]
    fn g_at_theta_one() {
        for k in 1..=8 {
            let r = g_k(1.0, k).unwrap();
            assert!(close(r.g_k, -1.0, 1e-12));
            assert!(!r.non_extremal);
        }
    }

    #[test]
    fn fixed_point_reports() {
        let map = ScalarMap::new(make_params(1.6, 2).unwrap());
        let a = ks_for_fixed_point(1.0, &map).unwrap();
        let b = g_k(1.6, 2).unwrap();
        assert!(close(a.g_k, b.g_k, 1e-14));
        let xp = 1.734_515_690_643_492;
        assert!(ks_for_fixed_point(xp, &map).unwrap().g_k.is_finite());
        assert!(matches!(
            ks_for_fixed_point(1.5, &map),
            Err(Error::ContractViolation(_))
        ));
        let flat = ScalarMap::new(make_params(1.0, 2).unwrap());
        assert!(close(
            ks_for_fixed_point(1.0, &flat).unwrap().g_k,
            -1.0,
            1e-12
        ));
    }

    #[test]
    fn scan_shapes() {
        let s = ks_scan(2, &[1.0]).unwrap();
        assert_eq!(s.reports.len(), 1);
        assert!(s.positive_intervals.is_empty());
        assert!(ks_scan(2, &[]).is_err());
        assert!(ks_scan(2, &[2.0, 1.0]).is_err());
        let grid: Vec<f64> = (1..=400).map(|i| 1.0 + 4.0 * i as f64 / 401.0).collect();
        let s = ks_scan(3, &grid).unwrap();
        assert!(!s.positive_intervals.is_empty());
    }

    proptest! {
        #[test]
        fn stochastic_and_spectral(
            th in 0.2f64..6.0,
            k in 1u32..6,
            logs in proptest::array::uniform6(-4.0f64..4.0),
        ) {
            let law = BoundaryLaw::from_array(logs.map(f64::exp));
            let ts = build_transitions(&law, &make_params(th, k).unwrap()).unwrap();
            prop_assert!(ts.max_row_defect() <= 1e-12);
            prop_assert!(ts.lambda2.abs() <= 1.0 + 1e-12);
            let (big, _) = eigenvalues_2x2(&ts.h);
            prop_assert!((big - 1.0).abs() <= 1e-12);
        }
    }
}
