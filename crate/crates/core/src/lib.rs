//! Block-recursive structural nonlinear autoregressions: simulation, two-step
//! semiparametric B-spline sieve estimation, relaxed-shock nonlinear impulse
//! responses, a Monte Carlo harness and dependence diagnostics.
//!
//! The variable ordering convention is `Z_t = (X_t, Y_t')'`: the structural
//! series `X_t` comes first and its innovation `eps_1t` is the identified shock.

pub mod basis;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod io;
pub mod irf;
pub mod linalg;
pub mod model;
pub mod plot;
pub mod rng;
pub mod study;

pub use basis::{
    bspline_eval, build_design, gram_diagnostics, knots_from_quantiles, BlockBasis, ColumnLabel,
    DesignMatrix, DomainChoice, GramDiagnostics, KnotChoice, KnotVector, SieveBasis, SievePlan,
};
pub use error::{Error, Result};
pub use estimator::{
    fit_infeasible, fit_two_step, first_stage, ols, select_k, FirstStageFit, FittedModel, KSelection, OlsFit,
};
pub use irf::{
    check_compatibility, estimated_irf, linear_irf, population_irf, relax_eval, shocked_path,
    Compatibility, IrfMethod, IrfResult, RelaxationFn, ShockSpec, ShockedPaths,
};
pub use model::{
    builtin_dgp, draw_innovations, simulate, History, Impact, Innovation, LagPolynomial, ModelSpec,
    NonlinFn, NonlinKind, SimPath, StructuralSpec,
};
pub use diagnostics::{
    check_contractivity, estimate_delta_r, estimate_delta_r_tau, find_h_star, fit_gmc, scalar_ar, DependenceProfile,
    GmcFit, StabilityReport,
};
pub use io::DataSet;
pub use study::{
    run_study, run_study_variant_phi_shift, target_mode, EstimatorKind, StudyConfig, StudyResult, StudyRow, TargetMode,
    Variant,
};
