//! Location estimators over the pixel grid.

pub mod forward;
pub mod imaging;
pub mod lda;
pub mod mpl;
pub mod rti;
pub mod transition;

pub use forward::{argmax, hmml_step, mll_estimate, ForwardState};
pub use imaging::{image_estimate, solve_rti_image, ImagingModel, VacancyGate};
pub use lda::{lda_classify, lda_train, FingerprintModel, Shrinkage};
pub use mpl::{MplLocalizer, MplMethod};
pub use rti::{rti_scores, EmptyRoomMeans, KernelHistograms, KrtiLocalizer, RtiLocalizer, VrtiLocalizer};
pub use transition::{build_transition_model, DenseTransition, TransitionKernel, TransitionModel};
