//! Daily taxi-demand forecasting around a venue, fusing lagged demand,
//! weather, event flags and event text.
//!
//! The numeric core ([`tensor`], [`model`]) is generic over [`Scalar`]
//! (`f32` or `f64`); the aliases below fix the precision.

pub mod baselines;
pub mod data;
pub mod eval;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod text;

pub use scalar::Scalar;

use thiserror::Error;

pub type Tensor64 = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type Tape64 = tensor::Tape<f64>;
pub type Tape32 = tensor::Tape<f32>;
pub type Model64 = model::FusionModel<f64>;
pub type Model32 = model::FusionModel<f32>;

/// Any error of the toolkit, classified for process exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error(transparent)]
    Text(#[from] text::TextError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Baseline(#[from] baselines::BaselineError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error(transparent)]
    Engine(#[from] tensor::EngineError),
}

/// Process exit status for an error category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    /// Bad usage or configuration (1).
    Config,
    /// Unreadable or inconsistent data (2).
    Data,
    /// Numerical failure: divergence, non-PD kernels (3).
    Numerical,
}

impl ExitKind {
    pub fn code(self) -> i32 {
        match self {
            ExitKind::Config => 1,
            ExitKind::Data => 2,
            ExitKind::Numerical => 3,
        }
    }
}

fn data_kind(e: &data::DataError) -> ExitKind {
    match e {
        data::DataError::Config(_) => ExitKind::Config,
        data::DataError::Fit(_) => ExitKind::Numerical,
        _ => ExitKind::Data,
    }
}

fn model_kind(e: &model::ModelError) -> ExitKind {
    use model::ModelError as M;
    match e {
        M::Config(_) => ExitKind::Config,
        M::Divergence { .. } => ExitKind::Numerical,
        M::Engine(tensor::EngineError::Parameter(_)) => ExitKind::Config,
        M::Engine(_) | M::Contract(_) | M::Checkpoint(_) | M::Io(_) => ExitKind::Data,
    }
}

fn baseline_kind(e: &baselines::BaselineError) -> ExitKind {
    use baselines::BaselineError as B;
    match e {
        B::Parameter(_) => ExitKind::Config,
        B::Shape(_) => ExitKind::Data,
        B::Fit(_) | B::Search(_) => ExitKind::Numerical,
    }
}

impl Error {
    pub fn kind(&self) -> ExitKind {
        use eval::EvalError as E;
        match self {
            Error::Data(e) | Error::Eval(E::Data(e)) => data_kind(e),
            Error::Text(text::TextError::Parameter(_)) => ExitKind::Config,
            Error::Text(_) => ExitKind::Data,
            Error::Model(e) | Error::Eval(E::Model(e)) => model_kind(e),
            Error::Baseline(e) | Error::Eval(E::Baseline(e)) => baseline_kind(e),
            Error::Eval(E::Config(_)) => ExitKind::Config,
            Error::Eval(E::Metric(_) | E::Contract(_) | E::Csv(_) | E::Io(_)) => ExitKind::Data,
            Error::Engine(tensor::EngineError::Parameter(_)) => ExitKind::Config,
            Error::Engine(_) => ExitKind::Data,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind().code()
    }
}
