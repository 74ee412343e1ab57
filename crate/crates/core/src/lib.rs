//! Online convex optimization between stochastic and adversarial
//! environments: optimistic learners, two-layer ensembles, synthetic
//! environment generators, regret accounting with closed-form bounds, and a
//! seeded experiment harness.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ensemble;
pub mod environments;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod losses;
pub mod metrics;
pub mod static_learners;

pub use ensemble::{AltOptimismEnsemble, NonsmoothEnsemble, PoolKind, SmoothEnsemble, StepSizePool};
pub use environments::{EnvironmentKind, EnvironmentSpec, LossDistribution, RoundSpec, SeaEnvironment};
pub use error::{Error, Result};
pub use geometry::{Domain, Matrix, ProblemParams, SpdMatrix, Vector};
pub use harness::{ExperimentConfig, Summary};
pub use losses::{ExpectedLoss, LossFn};
pub use metrics::{BoundInputs, Lemma, RegretLedger, RegretMode, Theorem, VariationTracker};
pub use static_learners::{
    FtrlConvex, FtrlExpConcave, FtrlStronglyConvex, ImplicitOmd, OnlineLearner, OnlineNewtonOmd, OptimisticOmd,
    StepReport,
};
