//! Risk-based authentication: feature normalisation, login history, the
//! risk score and the verification step for suspicious logins.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`). Generic types
//! default to `f64`; the `*F32` aliases pick single precision.

pub mod config;
pub mod counters;
pub mod engine;
pub mod error;
pub mod features;
pub mod history;
pub mod model;
pub mod net;
pub mod replay;
pub mod reputation;
pub mod scalar;
pub mod verification;

pub use config::RiskConfig;
pub use counters::GlobalCounters;
pub use engine::{FeatureHierarchy, FeatureSet, RiskEngine, ScoringContext};
pub use features::{FeaturePipeline, RawLoginAttempt};
pub use history::{HistorySnapshot, HistoryStore, LoginHistoryEntry};
pub use model::{classify, DeviceType, FeatureValue, Level, NormalizedFeatures, Outcome, RiskScore, UserId};
pub use reputation::{IpReputation, NoReputation, ReputationHandle, ReputationSet};
pub use scalar::Scalar;

pub type RiskScoreF64 = model::RiskScore<f64>;
pub type RiskScoreF32 = model::RiskScore<f32>;
pub type RiskConfigF64 = config::RiskConfig<f64>;
pub type RiskConfigF32 = config::RiskConfig<f32>;
pub type RiskEngineF64 = engine::RiskEngine<f64>;
pub type RiskEngineF32 = engine::RiskEngine<f32>;
pub type FeatureSetF64 = engine::FeatureSet<f64>;
pub type FeatureSetF32 = engine::FeatureSet<f32>;
