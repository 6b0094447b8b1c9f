//! Translation-invariant splitting Gibbs measures of the Ising model with
//! spins `1/2`, `1`, `3/2` arranged with period three along the generations
//! of a Cayley tree.
//!
//! ```
//! use tisgm::{classify_phase, critical_theta, make_params, ScalarMap, TreeChain};
//!
//! let phase = classify_phase(1.6, 2)?;
//! let x_plus = phase.plus.expect("three fixed points at θ = 1.6");
//! let params = make_params(1.6, 2)?;
//! let law = ScalarMap::new(params).law_from_x(x_plus);
//! let chain = TreeChain::new(&law, &params)?;
//! let summary = chain.summarize(3, 1_000, 42)?;
//! assert_eq!(summary.trees, 1_000);
//! let theta_c = critical_theta(2, (1.0, 5.0))?;
//! assert!(theta_c < 1.6);
//! # Ok::<(), tisgm::Error>(())
//! ```

pub mod chain;
pub mod dual;
pub mod error;
pub mod model;
pub mod oracle;
pub mod recursion;
pub mod solver;
pub mod spectral;
pub mod verify;

pub use chain::{
    root_law, LevelHistogram, MagnetizationEstimate, RootLaw, SampleSummary, SampledTree, TreeChain,
};
pub use error::{Error, Result};
pub use model::{
    lift, make_params, BoundaryLaw, Level, ModelParams, ReducedLaw, Spin, SpinAlphabets,
};
pub use oracle::{
    check_compatibility, check_holley, check_mlr, check_sandwich, check_tp2, check_tp2_all,
    exact_measure, CompatibilityReport, FieldAssignment, FiniteVolumeMeasure, HolleyReport,
    MlrKernel, MlrReport, SandwichReport, Tp2Report, Tp2Summary,
};
pub use recursion::{ImageBounds, ScalarMap};
pub use solver::{
    classify_phase, critical_theta, critical_theta_with_tol, find_fixed_points, iterate_orbit, s_k,
    scan_fixed_points, stability_of, FixedPoint, FixedPointScan, Orbit, PhasePoint, Regime,
    Stability,
};
pub use spectral::{
    build_transitions, g_k, ks_for_fixed_point, ks_scan, KsReport, KsScan, TransitionSet,
};
pub use verify::{run_suite, CheckResult, Outcome, VerifyConfig, VerifyReport};
