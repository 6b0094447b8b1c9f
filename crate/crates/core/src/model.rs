//! Model parameters, spin alphabets and boundary laws.
//!
//! Spins live on three alphabets assigned periodically along the generations
//! of the tree: `Ψ = {∓1/2}` at distances `≡ 0 (mod 3)`, `Φ = {-1, 0, 1}` at
//! `≡ 1` and `Υ = {∓3/2, ∓1/2}` at `≡ 2`. Spin values are stored doubled so
//! that all of them are small integers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A spin value stored as twice its physical value (`-3..=3`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Spin(pub i8);

impl Spin {
    pub fn value(self) -> f64 {
        f64::from(self.0) / 2.0
    }

    pub fn doubled(self) -> i8 {
        self.0
    }
}

impl std::fmt::Display for Spin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

const PSI: [Spin; 2] = [Spin(-1), Spin(1)];
const PHI: [Spin; 3] = [Spin(-2), Spin(0), Spin(2)];
const UPSILON: [Spin; 4] = [Spin(-3), Spin(-1), Spin(1), Spin(3)];

/// Level class of a vertex, i.e. its distance from the root modulo 3.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    Psi,
    Phi,
    Upsilon,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Psi, Level::Phi, Level::Upsilon];

    pub fn of_distance(d: usize) -> Level {
        match d % 3 {
            0 => Level::Psi,
            1 => Level::Phi,
            _ => Level::Upsilon,
        }
    }

    /// Strictly increasing spin alphabet of this level.
    pub fn alphabet(self) -> &'static [Spin] {
        match self {
            Level::Psi => &PSI,
            Level::Phi => &PHI,
            Level::Upsilon => &UPSILON,
        }
    }

    pub fn size(self) -> usize {
        self.alphabet().len()
    }

    pub fn index(self) -> usize {
        match self {
            Level::Psi => 0,
            Level::Phi => 1,
            Level::Upsilon => 2,
        }
    }

    /// Level class of the children of a vertex of this level.
    pub fn next(self) -> Level {
        match self {
            Level::Psi => Level::Phi,
            Level::Phi => Level::Upsilon,
            Level::Upsilon => Level::Psi,
        }
    }

    pub fn min_spin(self) -> Spin {
        self.alphabet()[0]
    }

    pub fn max_spin(self) -> Spin {
        *self.alphabet().last().unwrap()
    }

    /// Position of `s` in the alphabet, if present.
    pub fn position(self, s: Spin) -> Option<usize> {
        self.alphabet().iter().position(|&a| a == s)
    }

    pub fn name(self) -> &'static str {
        match self {
            Level::Psi => "psi",
            Level::Phi => "phi",
            Level::Upsilon => "upsilon",
        }
    }
}

/// The three alphabets together with the period-3 level map.
#[derive(Clone, Copy, Debug, Default)]
pub struct SpinAlphabets;

impl SpinAlphabets {
    pub fn psi(&self) -> &'static [Spin] {
        &PSI
    }
    pub fn phi(&self) -> &'static [Spin] {
        &PHI
    }
    pub fn upsilon(&self) -> &'static [Spin] {
        &UPSILON
    }
    pub fn level_of(&self, d: usize) -> Level {
        Level::of_distance(d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub j: f64,
    pub beta: f64,
}

/// Tree order and temperature parameter `θ = exp(βJ/2)`.
///
/// `(θ, k)` is the canonical parameterization; a `(J, β)` pair is kept only
/// when the parameters were built from one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    k: u32,
    theta: f64,
    coupling: Option<Coupling>,
}

impl ModelParams {
    pub fn new(theta: f64, k: u32) -> Result<Self> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::Domain(format!(
                "theta must be positive and finite, got {theta}"
            )));
        }
        if k < 1 {
            return Err(Error::Domain("tree order k must be at least 1".into()));
        }
        Ok(ModelParams {
            k,
            theta,
            coupling: None,
        })
    }

    pub fn from_coupling(j: f64, beta: f64, k: u32) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::Domain(format!("beta must be positive, got {beta}")));
        }
        if !j.is_finite() {
            return Err(Error::Domain(format!("coupling J must be finite, got {j}")));
        }
        let mut p = ModelParams::new((beta * j / 2.0).exp(), k)?;
        p.coupling = Some(Coupling { j, beta });
        Ok(p)
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// The product `βJ = 2 ln θ`.
    pub fn beta_j(&self) -> f64 {
        match self.coupling {
            Some(c) => c.beta * c.j,
            None => 2.0 * self.theta.ln(),
        }
    }

    pub fn coupling(&self) -> Option<Coupling> {
        self.coupling
    }

    pub fn is_ferromagnetic(&self) -> bool {
        self.theta > 1.0
    }

    /// Same temperature, different tree order.
    pub fn with_k(&self, k: u32) -> Result<Self> {
        let mut p = *self;
        if k < 1 {
            return Err(Error::Domain("tree order k must be at least 1".into()));
        }
        p.k = k;
        Ok(p)
    }

    /// Edge Boltzmann factor `exp(βJ s t)`.
    pub fn kernel(&self, s: Spin, t: Spin) -> f64 {
        self.log_kernel(s, t).exp()
    }

    pub fn log_kernel(&self, s: Spin, t: Spin) -> f64 {
        self.beta_j() * f64::from(s.0) * f64::from(t.0) / 4.0
    }
}

/// Convenience wrapper matching [`ModelParams::new`].
pub fn make_params(theta: f64, k: u32) -> Result<ModelParams> {
    ModelParams::new(theta, k)
}

/// Boundary-law ratios of a translation-invariant solution.
///
/// `x = exp(h̃_{1/2} - h̃_{-1/2})`, `y = exp(ḧ_{-1} - ḧ_0)`,
/// `z = exp(ḧ_1 - ḧ_0)`, `t = exp(ĥ_{-3/2} - ĥ_{-1/2})`,
/// `u = exp(ĥ_{1/2} - ĥ_{-1/2})`, `n = exp(ĥ_{3/2} - ĥ_{-1/2})`
/// (`n` is sometimes written `V`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLaw {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub t: f64,
    pub u: f64,
    pub n: f64,
}

impl BoundaryLaw {
    pub fn new(x: f64, y: f64, z: f64, t: f64, u: f64, n: f64) -> Result<Self> {
        let law = BoundaryLaw { x, y, z, t, u, n };
        law.validate()?;
        Ok(law)
    }

    pub fn ones() -> Self {
        BoundaryLaw {
            x: 1.0,
            y: 1.0,
            z: 1.0,
            t: 1.0,
            u: 1.0,
            n: 1.0,
        }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.x, self.y, self.z, self.t, self.u, self.n]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        BoundaryLaw {
            x: a[0],
            y: a[1],
            z: a[2],
            t: a[3],
            u: a[4],
            n: a[5],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.as_array().iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "boundary law components must be positive and finite: {self:?}"
            )))
        }
    }

    /// Componentwise k-th roots.
    pub fn root(&self, k: u32) -> ReducedLaw {
        let r = 1.0 / f64::from(k);
        let a = self.as_array().map(|v| v.powf(r));
        ReducedLaw::from_array(a)
    }
}

/// k-th roots of a [`BoundaryLaw`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedLaw {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub t: f64,
    pub u: f64,
    pub v: f64,
}

impl ReducedLaw {
    pub fn as_array(&self) -> [f64; 6] {
        [self.x, self.y, self.z, self.t, self.u, self.v]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        ReducedLaw {
            x: a[0],
            y: a[1],
            z: a[2],
            t: a[3],
            u: a[4],
            v: a[5],
        }
    }
}

/// Componentwise k-th power of a reduced law.
pub fn lift(r: &ReducedLaw, k: u32) -> Result<BoundaryLaw> {
    if !r.as_array().iter().all(|v| v.is_finite() && *v > 0.0) {
        return Err(Error::Domain(format!(
            "reduced law must be positive: {r:?}"
        )));
    }
    let law = BoundaryLaw::from_array(r.as_array().map(|v| powi(v, k)));
    law.validate()?;
    Ok(law)
}

/// Exponentiation by squaring.
pub(crate) fn powi(mut base: f64, mut e: u32) -> f64 {
    let mut acc = 1.0;
    while e > 0 {
        if e & 1 == 1 {
            acc *= base;
        }
        base *= base;
        e >>= 1;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_from_theta() {
        let p = make_params(1.0, 2).unwrap();
        assert_eq!(p.beta_j(), 0.0);
        let p = make_params(std::f64::consts::E, 3).unwrap();
        assert!((p.beta_j() - 2.0).abs() < 1e-15);
        assert!(make_params(1.47626086, 2).is_ok());
    }

    #[test]
    fn params_domain_errors() {
        assert!(matches!(make_params(0.0, 2), Err(Error::Domain(_))));
        assert!(matches!(make_params(-1.0, 2), Err(Error::Domain(_))));
        assert!(matches!(make_params(f64::NAN, 2), Err(Error::Domain(_))));
        assert!(matches!(make_params(2.0, 0), Err(Error::Domain(_))));
        assert!(ModelParams::from_coupling(1.0, 0.0, 2).is_err());
    }

    #[test]
    fn coupling_and_theta_agree() {
        for &(j, beta) in &[(1.0, 0.3), (-0.7, 2.0), (2.5, 1.1), (0.0, 5.0)] {
            let p = ModelParams::from_coupling(j, beta, 3).unwrap();
            let th = (beta * j / 2.0).exp();
            assert!(((p.theta() - th) / th).abs() <= 1e-15);
            assert_eq!(p.is_ferromagnetic(), j > 0.0);
        }
    }

    #[test]
    fn alphabets_are_increasing_and_periodic() {
        for l in Level::ALL {
            let a = l.alphabet();
            assert!(a.windows(2).all(|w| w[0] < w[1]));
        }
        let sa = SpinAlphabets;
        assert_eq!(sa.level_of(0), Level::Psi);
        assert_eq!(sa.level_of(4), Level::Phi);
        assert_eq!(sa.level_of(8), Level::Upsilon);
        assert_eq!(sa.upsilon()[0].value(), -1.5);
        assert_eq!(Level::Upsilon.next(), Level::Psi);
    }

    #[test]
    fn lift_examples() {
        let ones = ReducedLaw::from_array([1.0; 6]);
        assert_eq!(lift(&ones, 7).unwrap(), BoundaryLaw::ones());
        let r = ReducedLaw::from_array([2.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(lift(&r, 2).unwrap().x, 4.0);
        assert!(lift(&ReducedLaw::from_array([0.0, 1.0, 1.0, 1.0, 1.0, 1.0]), 2).is_err());
    }

    #[test]
    fn kernel_matches_theta_powers() {
        let p = make_params(1.7, 2).unwrap();
        let th = p.theta();
        // exp(βJ · 1/2 · 1) = θ
        assert!((p.kernel(Spin(1), Spin(2)) - th).abs() < 1e-14);
        // exp(βJ · 3/2 · 1/2) = θ^{3/2}
        assert!((p.kernel(Spin(3), Spin(1)) - th.powf(1.5)).abs() < 1e-14);
    }

    proptest::proptest! {
        #[test]
        fn lift_inverts_root(a in proptest::array::uniform6(1e-3f64..1e3), k in 1u32..8) {
            let law = BoundaryLaw::from_array(a);
            let back = lift(&law.root(k), k).unwrap();
            for (x, y) in law.as_array().iter().zip(back.as_array()) {
                proptest::prop_assert!(((x - y) / x).abs() <= 1e-12);
            }
        }
    }
}
