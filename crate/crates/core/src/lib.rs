//! Greedy SLIM and cold-start preference elicitation.
//!
//! The crate is organised bottom-up:
//!
//! * [`interactions`]: rating matrix with row and column access, loaders, user
//!   splits and popularity statistics.
//! * [`slim`]: the SLIM loss, scoring, top-N ranking, a coordinate-descent
//!   trainer and the `SLIM v1` text format.
//! * [`greedy`]: the row-by-row greedy trainer and the residual state it keeps.
//! * [`lfm`]: PureSVD latent factors used by the bandit questionnaire.
//! * [`elicitation`]: questionnaires and recommenders over a [`SessionState`].
//! * [`evaluation`]: ranking metrics and the offline cold-start harness.
//!
//! Parallel work is routed through [`Execution`]; with the `parallel` feature
//! disabled every execution mode runs sequentially and produces the same
//! results.

pub mod elicitation;
mod error;
pub mod evaluation;
pub mod greedy;
pub mod interactions;
mod item_set;
pub mod lfm;
mod par;
pub mod slim;
mod sparse;
pub mod synthetic;

pub use elicitation::SessionState;
pub use error::{Error, Result};
pub use interactions::InteractionMatrix;
pub use item_set::ItemSet;
pub use par::Execution;
pub use slim::{HyperParams, SlimModel};
pub use sparse::{SparseVec, SparseView};
