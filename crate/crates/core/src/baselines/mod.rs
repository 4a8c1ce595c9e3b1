//! Semi-supervised regression baselines: kNN, co-training regressors,
//! graph label propagation, virtual adversarial training and mean
//! teacher. The consistency-based methods were designed for
//! classification; here they run in their regression adaptations against
//! a scalar-output MLP.

use core::fmt;

use crate::data::DataError;
use crate::net::NetError;

mod coreg;
mod knn;
mod labelprop;
mod meanteacher;
mod vat;

pub use coreg::{coreg_train, labeled_loo_error, CoregConfig, CoregModel, CoregRound};
pub use knn::{knn_predict, minkowski_distance};
pub use labelprop::{label_prop, LabelPropConfig, LabelPropOutcome};
pub use meanteacher::{
    mean_teacher_train, MeanTeacherConfig, MeanTeacherModel, MeanTeacherTrainConfig,
    MeanTeacherTrainer,
};
pub use vat::{
    adversarial_directions, vat_loss, vat_loss_given_directions, vat_train, VatConfig, VatEval,
    VatModel, VatTrainConfig,
};

#[derive(Debug, Clone, PartialEq)]
pub enum BaselineError {
    EmptyTrainingSet,
    InvalidNeighborCount { k: usize, available: usize },
    TooManyUnlabeled { count: usize, max: usize },
    /// Scalar-output methods require a one-dimensional network head.
    NotScalarOutput { got: usize },
    LengthMismatch { left: usize, right: usize },
    Diverged { epoch: usize },
    EmptyValidationSet,
    Net(NetError),
    Data(DataError),
}

impl fmt::Display for BaselineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyTrainingSet => write!(f, "empty training set"),
            Self::InvalidNeighborCount { k, available } => {
                write!(f, "k = {k} neighbors requested, {available} available")
            }
            Self::TooManyUnlabeled { count, max } => {
                write!(f, "{count} unlabeled points exceed the cap of {max}; subsample first")
            }
            Self::NotScalarOutput { got } => {
                write!(f, "network output dimension is {got}, expected 1")
            }
            Self::LengthMismatch { left, right } => write!(f, "length mismatch: {left} vs {right}"),
            Self::Diverged { epoch } => write!(f, "training diverged at epoch {epoch}"),
            Self::EmptyValidationSet => write!(f, "no validation points for early stopping"),
            Self::Net(e) => write!(f, "{e}"),
            Self::Data(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for BaselineError {}

impl From<NetError> for BaselineError {
    fn from(e: NetError) -> Self {
        Self::Net(e)
    }
}

impl From<DataError> for BaselineError {
    fn from(e: DataError) -> Self {
        Self::Data(e)
    }
}
