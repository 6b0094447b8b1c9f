//! Brute-force finite-volume Gibbs measures on small balls of the tree and
//! the order-theoretic checks built on them.
//!
//! Configurations on the ball `V_n` are enumerated in mixed radix over the
//! vertices in breadth-first order, the last vertex varying fastest. The ball
//! `V_{n-1}` is a prefix of that order, so marginalizing onto it sums
//! contiguous blocks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{vertex_count, TreeLayout};
use crate::dual::log_sum_exp;
use crate::error::{Error, Result};
use crate::model::{BoundaryLaw, Level, ModelParams, Spin};

/// Largest configuration count [`exact_measure`] will enumerate.
pub const MAX_CONFIGURATIONS: u128 = 10_000_000;
/// Largest state space for which the pairwise lattice inequality is checked.
pub const MAX_HOLLEY_STATES: usize = 5_000;
/// State spaces up to this size get every up-set enumerated.
pub const EXHAUSTIVE_UPSET_STATES: usize = 20;
/// Random monotone functions used above [`EXHAUSTIVE_UPSET_STATES`].
pub const RANDOM_MONOTONE_FUNCTIONS: usize = 1000;
/// Slack on log-weights in the lattice inequality.
pub const HOLLEY_LOG_TOL: f64 = 1e-9;
/// Slack on expectations in ordering checks.
pub const ORDER_TOL: f64 = 1e-12;

/// Per-vertex fields over a ball, gauged so the first component is zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldAssignment {
    pub k: u32,
    pub depth: usize,
    /// One vector per vertex of `V_depth` in breadth-first order, indexed
    /// like the vertex's level alphabet.
    pub fields: Vec<Vec<f64>>,
}

fn gauge(mut h: Vec<f64>) -> Vec<f64> {
    let h0 = h[0];
    for v in &mut h {
        *v -= h0;
    }
    h
}

impl FieldAssignment {
    /// Constant fields of a boundary law on every vertex.
    pub fn from_law(law: &BoundaryLaw, k: u32, depth: usize) -> Result<Self> {
        law.validate()?;
        let per_level = [
            gauge(vec![0.0, law.x.ln()]),
            gauge(vec![law.y.ln(), 0.0, law.z.ln()]),
            gauge(vec![law.t.ln(), 0.0, law.u.ln(), law.n.ln()]),
        ];
        let layout = TreeLayout::new(k, depth)?;
        let fields = (0..layout.len())
            .map(|v| per_level[Level::of_distance(layout.distance(v)).index()].clone())
            .collect();
        Ok(FieldAssignment { k, depth, fields })
    }

    /// Fields induced on `V_depth` by spins frozen on the next generation.
    /// Only the outermost generation receives a nonzero field.
    pub fn from_boundary(params: &ModelParams, depth: usize, boundary: &[Spin]) -> Result<Self> {
        let k = params.k();
        let layout = TreeLayout::new(k, depth)?;
        let outer = Level::of_distance(depth + 1);
        let w = layout.level_range(depth);
        if boundary.len() != w.len() * k as usize {
            return Err(Error::Domain(format!(
                "boundary needs {} spins, got {}",
                w.len() * k as usize,
                boundary.len()
            )));
        }
        if let Some(bad) = boundary.iter().find(|s| outer.position(**s).is_none()) {
            return Err(Error::Domain(format!(
                "boundary spin {bad} is not in {}",
                outer.name()
            )));
        }
        let bj = params.beta_j();
        let mut fields = Vec::with_capacity(layout.len());
        for v in 0..layout.len() {
            let level = Level::of_distance(layout.distance(v));
            if w.contains(&v) {
                let j = v - w.start;
                let sum: f64 = boundary[j * k as usize..(j + 1) * k as usize]
                    .iter()
                    .map(|s| s.value())
                    .sum();
                fields.push(gauge(
                    level
                        .alphabet()
                        .iter()
                        .map(|s| bj * s.value() * sum)
                        .collect(),
                ));
            } else {
                fields.push(vec![0.0; level.size()]);
            }
        }
        Ok(FieldAssignment { k, depth, fields })
    }

    /// All-minimal or all-maximal spins on the generation outside the ball.
    pub fn extremal_boundary(params: &ModelParams, depth: usize, plus: bool) -> Result<Self> {
        let outer = Level::of_distance(depth + 1);
        let s = if plus {
            outer.max_spin()
        } else {
            outer.min_spin()
        };
        let width =
            TreeLayout::new(params.k(), depth)?.level_range(depth).len() * params.k() as usize;
        Self::from_boundary(params, depth, &vec![s; width])
    }

    pub fn zero(k: u32, depth: usize) -> Result<Self> {
        let layout = TreeLayout::new(k, depth)?;
        let fields = (0..layout.len())
            .map(|v| vec![0.0; Level::of_distance(layout.distance(v)).size()])
            .collect();
        Ok(FieldAssignment { k, depth, fields })
    }

    pub fn validate(&self) -> Result<()> {
        let layout = TreeLayout::new(self.k, self.depth)?;
        if self.fields.len() != layout.len() {
            return Err(Error::Domain(format!(
                "expected {} field vectors, got {}",
                layout.len(),
                self.fields.len()
            )));
        }
        for (v, h) in self.fields.iter().enumerate() {
            let level = Level::of_distance(layout.distance(v));
            if h.len() != level.size() {
                return Err(Error::Domain(format!(
                    "vertex {v}: field has {} entries, {} expected",
                    h.len(),
                    level.size()
                )));
            }
            if h[0] != 0.0 || h.iter().any(|x| !x.is_finite()) {
                return Err(Error::Domain(format!(
                    "vertex {v}: field {h:?} violates the gauge or is not finite"
                )));
            }
        }
        Ok(())
    }

    /// The same fields restricted to a smaller ball.
    pub fn truncate(&self, depth: usize) -> Result<Self> {
        if depth > self.depth {
            return Err(Error::Domain(format!(
                "cannot extend fields from depth {} to {depth}",
                self.depth
            )));
        }
        let n = TreeLayout::new(self.k, depth)?.len();
        Ok(FieldAssignment {
            k: self.k,
            depth,
            fields: self.fields[..n].to_vec(),
        })
    }
}

/// Mixed-radix indexing of configurations on a ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigSpace {
    pub k: u32,
    pub depth: usize,
    pub radices: Vec<usize>,
    strides: Vec<usize>,
    parents: Vec<usize>,
    levels: Vec<Level>,
}

/// Configurations on `V_depth`, saturating.
pub fn configuration_count(k: u32, depth: usize) -> u128 {
    let mut total: u128 = 1;
    let mut width: u128 = 1;
    for d in 0..=depth {
        let size = Level::of_distance(d).size() as u128;
        let level_total = u32::try_from(width)
            .ok()
            .and_then(|w| size.checked_pow(w))
            .unwrap_or(u128::MAX);
        total = total.saturating_mul(level_total);
        width = width.saturating_mul(u128::from(k));
    }
    total
}

impl ConfigSpace {
    pub fn new(k: u32, depth: usize, cap: u128) -> Result<Self> {
        let count = configuration_count(k, depth);
        if count > cap {
            return Err(Error::Capacity { count, cap });
        }
        let layout = TreeLayout::new(k, depth)?;
        let n = layout.len();
        let levels: Vec<Level> = (0..n)
            .map(|v| Level::of_distance(layout.distance(v)))
            .collect();
        let radices: Vec<usize> = levels.iter().map(|l| l.size()).collect();
        let mut strides = vec![1usize; n];
        for v in (0..n.saturating_sub(1)).rev() {
            strides[v] = strides[v + 1] * radices[v + 1];
        }
        let parents = (0..n)
            .map(|v| if v == 0 { 0 } else { (v - 1) / k as usize })
            .collect();
        Ok(ConfigSpace {
            k,
            depth,
            radices,
            strides,
            parents,
            levels,
        })
    }

    pub fn len(&self) -> usize {
        self.strides[0] * self.radices[0]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn vertices(&self) -> usize {
        self.radices.len()
    }

    pub fn digit(&self, index: usize, v: usize) -> usize {
        (index / self.strides[v]) % self.radices[v]
    }

    pub fn decode(&self, index: usize) -> Vec<u8> {
        (0..self.vertices())
            .map(|v| self.digit(index, v) as u8)
            .collect()
    }

    pub fn encode(&self, digits: &[u8]) -> usize {
        digits
            .iter()
            .zip(&self.strides)
            .map(|(&d, &s)| d as usize * s)
            .sum()
    }

    pub fn spins(&self, index: usize) -> Vec<Spin> {
        (0..self.vertices())
            .map(|v| self.levels[v].alphabet()[self.digit(index, v)])
            .collect()
    }

    /// Unnormalized log-weight: couplings along every edge of the ball plus
    /// the fields of the outermost generation.
    fn log_weight(
        &self,
        index: usize,
        bj: f64,
        fields: &FieldAssignment,
        outer_start: usize,
    ) -> f64 {
        let mut acc = 0.0;
        let mut prod = 0i32;
        for v in 1..self.vertices() {
            let p = self.parents[v];
            let sp = self.levels[p].alphabet()[self.digit(index, p)].doubled();
            let sv = self.levels[v].alphabet()[self.digit(index, v)].doubled();
            prod += i32::from(sp) * i32::from(sv);
        }
        acc += bj * f64::from(prod) / 4.0;
        for v in outer_start..self.vertices() {
            acc += fields.fields[v][self.digit(index, v)];
        }
        acc
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteVolumeMeasure {
    pub space: ConfigSpace,
    pub log_weights: Vec<f64>,
    pub probs: Vec<f64>,
    pub log_z: f64,
}

/// Neumaier-compensated sum in index order.
pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// The finite-volume Gibbs measure on `V_depth` with the given fields on the
/// outermost generation; fields on interior vertices are ignored.
pub fn exact_measure(
    fields: &FieldAssignment,
    params: &ModelParams,
    depth: usize,
) -> Result<FiniteVolumeMeasure> {
    exact_measure_capped(fields, params, depth, MAX_CONFIGURATIONS)
}

pub fn exact_measure_capped(
    fields: &FieldAssignment,
    params: &ModelParams,
    depth: usize,
    cap: u128,
) -> Result<FiniteVolumeMeasure> {
    if fields.k != params.k() {
        return Err(Error::Domain(format!(
            "fields built for k = {}, model has k = {}",
            fields.k,
            params.k()
        )));
    }
    let space = ConfigSpace::new(params.k(), depth, cap)?;
    if fields.fields.len() < space.vertices() {
        return Err(Error::Domain(format!(
            "fields cover depth {}, measure needs depth {depth}",
            fields.depth
        )));
    }
    let outer_start = TreeLayout::new(params.k(), depth)?.level_range(depth).start;
    let bj = params.beta_j();
    let log_weights: Vec<f64> = (0..space.len())
        .into_par_iter()
        .map(|i| space.log_weight(i, bj, fields, outer_start))
        .collect();
    let log_z = log_sum_exp(&log_weights);
    let probs = log_weights.iter().map(|&l| (l - log_z).exp()).collect();
    Ok(FiniteVolumeMeasure {
        space,
        log_weights,
        probs,
        log_z,
    })
}

impl FiniteVolumeMeasure {
    pub fn total(&self) -> f64 {
        compensated_sum(self.probs.iter().copied())
    }

    /// Marginal on the ball `V_depth` for `depth` at most the measure's depth,
    /// indexed in that ball's own mixed radix.
    pub fn marginal_on_ball(&self, depth: usize) -> Result<Vec<f64>> {
        if depth > self.space.depth {
            return Err(Error::Domain(format!(
                "ball depth {depth} exceeds measure depth {}",
                self.space.depth
            )));
        }
        let inner = TreeLayout::new(self.space.k, depth)?.len();
        let block = if inner == self.space.vertices() {
            1
        } else {
            self.space.strides[inner - 1]
        };
        Ok(self
            .probs
            .chunks(block)
            .map(|c| compensated_sum(c.iter().copied()))
            .collect())
    }

    /// Distribution of the spin at vertex `v`, over its level alphabet.
    pub fn vertex_marginal(&self, v: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.space.radices[v]];
        for (i, &p) in self.probs.iter().enumerate() {
            out[self.space.digit(i, v)] += p;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    pub depth: usize,
    /// `max |Σ_ω μ_n(ξ ∨ ω) - μ_{n-1}(ξ)|` over configurations `ξ` on `V_{n-1}`.
    pub residual: f64,
    pub worst_index: usize,
}

/// Compare `μ_n` marginalized to `V_{n-1}` with `μ_{n-1}`, both built from
/// the same fields.
pub fn check_compatibility(
    fields: &FieldAssignment,
    params: &ModelParams,
    depth: usize,
) -> Result<CompatibilityReport> {
    if depth == 0 {
        return Err(Error::Domain("compatibility needs depth at least 1".into()));
    }
    let outer = exact_measure(fields, params, depth)?;
    let inner = exact_measure(fields, params, depth - 1)?;
    let marg = outer.marginal_on_ball(depth - 1)?;
    let (worst_index, residual) = marg
        .iter()
        .zip(&inner.probs)
        .map(|(a, b)| (a - b).abs())
        .enumerate()
        .fold((0, 0.0), |acc, (i, r)| if r > acc.1 { (i, r) } else { acc });
    Ok(CompatibilityReport {
        depth,
        residual,
        worst_index,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tp2Report {
    /// `K(s1,t1)K(s2,t2) / (K(s1,t2)K(s2,t1))` from the kernel.
    pub ratio: f64,
    /// `exp(βJ (s2 - s1)(t2 - t1))`.
    pub closed_form: f64,
    /// Whether `ratio ≥ 1` exactly when `J ≥ 0`, strictly when `J > 0`.
    pub sign_consistent: bool,
}

pub fn check_tp2(params: &ModelParams, s: (Spin, Spin), t: (Spin, Spin)) -> Result<Tp2Report> {
    if !(s.0 < s.1 && t.0 < t.1) {
        return Err(Error::Domain(format!(
            "pairs must be strictly increasing: {s:?}, {t:?}"
        )));
    }
    let k = |a, b| params.kernel(a, b);
    let ratio = k(s.0, t.0) * k(s.1, t.1) / (k(s.0, t.1) * k(s.1, t.0));
    let closed_form =
        (params.beta_j() * (s.1.value() - s.0.value()) * (t.1.value() - t.0.value())).exp();
    let bj = params.beta_j();
    let sign_consistent = if bj > 0.0 {
        ratio > 1.0
    } else if bj == 0.0 {
        ratio == 1.0
    } else {
        ratio < 1.0
    };
    Ok(Tp2Report {
        ratio,
        closed_form,
        sign_consistent,
    })
}

/// Every ordered pair of pairs between consecutive level alphabets.
pub fn check_tp2_all(params: &ModelParams) -> Result<Tp2Summary> {
    let mut summary = Tp2Summary {
        cases: 0,
        max_relative_error: 0.0,
        all_sign_consistent: true,
    };
    for level in Level::ALL {
        let (a, b) = (level.alphabet(), level.next().alphabet());
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                for p in 0..b.len() {
                    for q in p + 1..b.len() {
                        let r = check_tp2(params, (a[i], a[j]), (b[p], b[q]))?;
                        summary.cases += 1;
                        let rel = ((r.ratio - r.closed_form) / r.closed_form).abs();
                        summary.max_relative_error = summary.max_relative_error.max(rel);
                        summary.all_sign_consistent &= r.sign_consistent;
                    }
                }
            }
        }
    }
    Ok(summary)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tp2Summary {
    pub cases: usize,
    pub max_relative_error: f64,
    pub all_sign_consistent: bool,
}

/// Coordinatewise order on configurations of one ball, with the up-sets used
/// as monotone test functions.
struct Poset<'a> {
    space: &'a ConfigSpace,
    digits: Vec<Vec<u8>>,
}

impl<'a> Poset<'a> {
    fn new(space: &'a ConfigSpace) -> Self {
        let digits = (0..space.len()).map(|i| space.decode(i)).collect();
        Poset { space, digits }
    }

    fn leq(&self, a: usize, b: usize) -> bool {
        self.digits[a]
            .iter()
            .zip(&self.digits[b])
            .all(|(x, y)| x <= y)
    }

    fn join(&self, a: usize, b: usize) -> usize {
        let d: Vec<u8> = self.digits[a]
            .iter()
            .zip(&self.digits[b])
            .map(|(x, y)| *x.max(y))
            .collect();
        self.space.encode(&d)
    }

    fn meet(&self, a: usize, b: usize) -> usize {
        let d: Vec<u8> = self.digits[a]
            .iter()
            .zip(&self.digits[b])
            .map(|(x, y)| *x.min(y))
            .collect();
        self.space.encode(&d)
    }

    /// Indicator vectors of test up-sets: every up-set when the space is
    /// small, otherwise single-site and root-child projections plus random
    /// up-closures.
    fn upsets(&self, seed: u64) -> Vec<Vec<bool>> {
        let n = self.space.len();
        if n <= EXHAUSTIVE_UPSET_STATES {
            let above: Vec<u32> = (0..n)
                .map(|i| {
                    (0..n)
                        .filter(|&j| self.leq(i, j))
                        .fold(0u32, |m, j| m | (1 << j))
                })
                .collect();
            return (0u32..(1u32 << n))
                .filter(|&mask| (0..n).all(|i| mask & (1 << i) == 0 || above[i] & !mask == 0))
                .map(|mask| (0..n).map(|i| mask & (1 << i) != 0).collect())
                .collect();
        }
        let mut out = Vec::new();
        for v in 0..self.space.vertices() {
            for a in 1..self.space.radices[v] {
                out.push((0..n).map(|i| self.digits[i][v] as usize >= a).collect());
            }
        }
        for c in 1..self.space.vertices().min(1 + self.space.k as usize) {
            let (r0, rc) = (self.space.radices[0], self.space.radices[c]);
            // Up-sets of a product of two chains are staircases: a child
            // threshold per root value, non-increasing in the root value.
            let combos = (rc + 1).pow(r0 as u32);
            for code in 0..combos {
                let th: Vec<usize> = (0..r0)
                    .map(|a| (code / (rc + 1).pow(a as u32)) % (rc + 1))
                    .collect();
                if th.windows(2).any(|w| w[1] > w[0]) {
                    continue;
                }
                out.push(
                    (0..n)
                        .map(|i| self.digits[i][c] as usize >= th[self.digits[i][0] as usize])
                        .collect(),
                );
            }
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        for _ in 0..RANDOM_MONOTONE_FUNCTIONS {
            let gens: Vec<usize> = (0..rng.random_range(1..=3))
                .map(|_| rng.random_range(0..n))
                .collect();
            out.push(
                (0..n)
                    .map(|i| gens.iter().any(|&g| self.leq(g, i)))
                    .collect(),
            );
        }
        out
    }
}

fn expectation(probs: &[f64], set: &[bool]) -> f64 {
    compensated_sum(probs.iter().zip(set).filter(|(_, &b)| b).map(|(p, _)| *p))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolleyReport {
    pub states: usize,
    pub pairs_checked: usize,
    pub lattice_holds: bool,
    /// Largest `log w^η(σ) + log w^ξ(τ) - log w^ξ(σ∨τ) - log w^η(σ∧τ)`.
    pub worst_log_violation: f64,
    pub worst_pair: (usize, usize),
    pub upsets_checked: usize,
    pub domination_holds: bool,
    /// Largest `E_η[F] - E_ξ[F]` over the tested up-sets.
    pub worst_domination_gap: f64,
}

/// Holley's lattice condition and stochastic domination for the ball
/// `V_depth` under boundary spins `eta ≤ xi` on the next generation.
pub fn check_holley(
    params: &ModelParams,
    depth: usize,
    eta: &[Spin],
    xi: &[Spin],
    seed: u64,
) -> Result<HolleyReport> {
    if eta.len() != xi.len() {
        return Err(Error::Domain("boundary conditions differ in length".into()));
    }
    if eta.iter().zip(xi).any(|(a, b)| a > b) {
        return Err(Error::Precondition(
            "boundary conditions are not ordered η ≤ ξ".into(),
        ));
    }
    let count = configuration_count(params.k(), depth);
    if count > MAX_HOLLEY_STATES as u128 {
        return Err(Error::Capacity {
            count,
            cap: MAX_HOLLEY_STATES as u128,
        });
    }
    let f_eta = FieldAssignment::from_boundary(params, depth, eta)?;
    let f_xi = FieldAssignment::from_boundary(params, depth, xi)?;
    let m_eta = exact_measure(&f_eta, params, depth)?;
    let m_xi = exact_measure(&f_xi, params, depth)?;
    let poset = Poset::new(&m_eta.space);
    let n = m_eta.space.len();

    let (we, wx) = (&m_eta.log_weights, &m_xi.log_weights);
    let (worst, worst_pair) = (0..n)
        .into_par_iter()
        .map(|a| {
            let mut best = (f64::NEG_INFINITY, (a, a));
            for b in 0..n {
                let gap = we[a] + wx[b] - wx[poset.join(a, b)] - we[poset.meet(a, b)];
                if gap > best.0 {
                    best = (gap, (a, b));
                }
            }
            best
        })
        .reduce(
            || (f64::NEG_INFINITY, (0, 0)),
            |x, y| {
                if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) {
                    y
                } else {
                    x
                }
            },
        );

    let sets = poset.upsets(seed);
    let dom_gap = sets
        .iter()
        .map(|s| expectation(&m_eta.probs, s) - expectation(&m_xi.probs, s))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(HolleyReport {
        states: n,
        pairs_checked: n * n,
        lattice_holds: worst <= HOLLEY_LOG_TOL,
        worst_log_violation: worst,
        worst_pair,
        upsets_checked: sets.len(),
        domination_holds: dom_gap <= ORDER_TOL,
        worst_domination_gap: dom_gap,
    })
}

/// Which Boltzmann kernel an MLR check pushes a vector through.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlrKernel {
    PsiToPhi,
    PhiToUpsilon,
    UpsilonToPsi,
}

impl MlrKernel {
    pub const ALL: [MlrKernel; 3] = [
        MlrKernel::PsiToPhi,
        MlrKernel::PhiToUpsilon,
        MlrKernel::UpsilonToPsi,
    ];

    pub fn source(self) -> Level {
        match self {
            MlrKernel::PsiToPhi => Level::Psi,
            MlrKernel::PhiToUpsilon => Level::Phi,
            MlrKernel::UpsilonToPsi => Level::Upsilon,
        }
    }

    pub fn target(self) -> Level {
        self.source().next()
    }
}

/// `m` ⪯ `m'` in likelihood ratio: `m'/m` non-decreasing along the alphabet.
pub fn mlr_ordered(m: &[f64], m_prime: &[f64], tol: f64) -> bool {
    let r: Vec<f64> = m_prime.iter().zip(m).map(|(a, b)| a / b).collect();
    r.windows(2).all(|w| w[1] >= w[0] * (1.0 - tol))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlrReport {
    pub kernel: MlrKernel,
    /// `(K m')(t) / (K m)(t)` over the target alphabet.
    pub output_ratios: Vec<f64>,
    pub preserved: bool,
}

pub fn check_mlr(
    params: &ModelParams,
    kernel: MlrKernel,
    m: &[f64],
    m_prime: &[f64],
) -> Result<MlrReport> {
    let (src, dst) = (kernel.source(), kernel.target());
    if m.len() != src.size() || m_prime.len() != src.size() {
        return Err(Error::Domain(format!(
            "vectors must have {} entries",
            src.size()
        )));
    }
    if m.iter()
        .chain(m_prime)
        .any(|v| !(v.is_finite() && *v > 0.0))
    {
        return Err(Error::Domain("vectors must be positive".into()));
    }
    if !mlr_ordered(m, m_prime, 1e-12) {
        return Err(Error::Precondition("inputs are not MLR-ordered".into()));
    }
    let push = |w: &[f64]| -> Vec<f64> {
        dst.alphabet()
            .iter()
            .map(|&t| {
                src.alphabet()
                    .iter()
                    .zip(w)
                    .map(|(&s, &x)| params.kernel(s, t) * x)
                    .sum()
            })
            .collect()
    };
    let (a, b) = (push(m), push(m_prime));
    let output_ratios: Vec<f64> = b.iter().zip(&a).map(|(x, y)| x / y).collect();
    let preserved = output_ratios
        .windows(2)
        .all(|w| w[1] >= w[0] * (1.0 - 1e-12));
    Ok(MlrReport {
        kernel,
        output_ratios,
        preserved,
    })
}

/// A measure entering the sandwich comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SandwichMember {
    /// Fields from the constant boundary law of this fixed point.
    Law { x: f64 },
    /// Frozen random spins on the generation outside the ball.
    RandomBoundary { index: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub theta: f64,
    pub k: u32,
    pub depths: Vec<usize>,
    pub members: Vec<SandwichMember>,
    pub upsets_checked: usize,
    /// Largest `E_{ξ⁻}[F] - E_μ[F]` or `E_μ[F] - E_{ξ⁺}[F]`; non-positive when ordered.
    pub worst_order_gap: f64,
    /// Largest increase of `E_{ξ⁺,n}[F]` in `n`; non-positive when monotone.
    pub worst_plus_increase: f64,
    /// Largest decrease of `E_{ξ⁻,n}[F]` in `n`; non-positive when monotone.
    pub worst_minus_decrease: f64,
    pub ordered: bool,
    pub plus_non_increasing: bool,
    pub minus_non_decreasing: bool,
    /// `P(root = +1/2)` under ξ⁻, each law, and ξ⁺ at the deepest volume.
    pub root_plus: Vec<(String, f64)>,
}

impl SandwichReport {
    pub fn passed(&self) -> bool {
        self.ordered && self.plus_non_increasing && self.minus_non_decreasing
    }
}

/// Compare, on the inner ball `V_1`, the measures with extremal boundary
/// spins against fixed-point laws and random boundaries for `n = 1..=depth`.
pub fn sandwich_report(
    params: &ModelParams,
    depth: usize,
    law_points: &[(f64, BoundaryLaw)],
    random_boundaries: usize,
    seed: u64,
) -> Result<SandwichReport> {
    if depth == 0 {
        return Err(Error::Domain("sandwich needs depth at least 1".into()));
    }
    let k = params.k();
    let inner_space = ConfigSpace::new(k, 1, MAX_CONFIGURATIONS)?;
    let sets = Poset::new(&inner_space).upsets(seed);
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5a5a_5a5a);

    let mut members = Vec::new();
    let mut worst_order = f64::NEG_INFINITY;
    let mut worst_plus_inc = f64::NEG_INFINITY;
    let mut worst_minus_dec = f64::NEG_INFINITY;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut root_plus = Vec::new();

    for n in 1..=depth {
        let inner = |f: &FieldAssignment| -> Result<Vec<f64>> {
            exact_measure(f, params, n)?.marginal_on_ball(1)
        };
        let lo = inner(&FieldAssignment::extremal_boundary(params, n, false)?)?;
        let hi = inner(&FieldAssignment::extremal_boundary(params, n, true)?)?;
        let e_lo: Vec<f64> = sets.iter().map(|s| expectation(&lo, s)).collect();
        let e_hi: Vec<f64> = sets.iter().map(|s| expectation(&hi, s)).collect();

        let mut middles: Vec<(SandwichMember, Vec<f64>)> = Vec::new();
        for (x, law) in law_points {
            middles.push((
                SandwichMember::Law { x: *x },
                inner(&FieldAssignment::from_law(law, k, n)?)?,
            ));
        }
        let outer = Level::of_distance(n + 1);
        let width = TreeLayout::new(k, n)?.level_range(n).len() * k as usize;
        for index in 0..random_boundaries {
            let xi: Vec<Spin> = (0..width)
                .map(|_| outer.alphabet()[rng.random_range(0..outer.size())])
                .collect();
            middles.push((
                SandwichMember::RandomBoundary { index },
                inner(&FieldAssignment::from_boundary(params, n, &xi)?)?,
            ));
        }
        for (_, mid) in &middles {
            for (j, s) in sets.iter().enumerate() {
                let e = expectation(mid, s);
                worst_order = worst_order.max(e_lo[j] - e).max(e - e_hi[j]);
            }
        }
        if let Some((p_lo, p_hi)) = &prev {
            for j in 0..sets.len() {
                worst_plus_inc = worst_plus_inc.max(e_hi[j] - p_hi[j]);
                worst_minus_dec = worst_minus_dec.max(p_lo[j] - e_lo[j]);
            }
        }
        if n == depth {
            let root_up = |p: &[f64]| {
                compensated_sum(
                    (0..p.len())
                        .filter(|&i| inner_space.digit(i, 0) == 1)
                        .map(|i| p[i]),
                )
            };
            root_plus.push(("minus_boundary".to_string(), root_up(&lo)));
            for (m, p) in &middles {
                if let SandwichMember::Law { x } = m {
                    root_plus.push((format!("law x={x}"), root_up(p)));
                }
            }
            root_plus.push(("plus_boundary".to_string(), root_up(&hi)));
            members = middles.into_iter().map(|(m, _)| m).collect();
        }
        prev = Some((e_lo, e_hi));
    }
    if depth == 1 {
        worst_plus_inc = 0.0;
        worst_minus_dec = 0.0;
    }
    Ok(SandwichReport {
        theta: params.theta(),
        k,
        depths: (1..=depth).collect(),
        members,
        upsets_checked: sets.len(),
        worst_order_gap: worst_order,
        worst_plus_increase: worst_plus_inc,
        worst_minus_decrease: worst_minus_dec,
        ordered: worst_order <= ORDER_TOL,
        plus_non_increasing: worst_plus_inc <= ORDER_TOL,
        minus_non_decreasing: worst_minus_dec <= ORDER_TOL,
        root_plus,
    })
}

/// Sandwich check against all three translation-invariant laws; requires
/// the coexistence regime.
pub fn check_sandwich(
    params: &ModelParams,
    depth: usize,
    random_boundaries: usize,
    seed: u64,
) -> Result<SandwichReport> {
    let map = crate::recursion::ScalarMap::new(*params);
    let pts = crate::solver::find_fixed_points(&map, crate::solver::DEFAULT_GRID)?;
    if pts.len() < 3 {
        return Err(Error::RegimeMismatch(format!(
            "sandwich check needs coexistence, found {} fixed point(s) at θ = {}",
            pts.len(),
            params.theta()
        )));
    }
    let laws: Vec<(f64, BoundaryLaw)> = pts
        .iter()
        .map(|p| (p.x_star, map.law_from_x(p.x_star)))
        .collect();
    sandwich_report(params, depth, &laws, random_boundaries, seed)
}

/// Total vertices and configurations on `V_depth`, for capacity messages.
pub fn ball_size(k: u32, depth: usize) -> (u128, u128) {
    (vertex_count(k, depth), configuration_count(k, depth))
}
