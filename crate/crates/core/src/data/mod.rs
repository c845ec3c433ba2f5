//! Data model, dataset file format and preprocessing.

pub mod episode;
pub mod format;
pub mod normalize;
pub mod records;
pub mod schema;
pub mod split;
pub mod transitions;

pub use episode::{Episode, Outcome, RewardFields, Split, Step};
pub use normalize::{denormalize_action, normalize_action, NormStats};
pub use records::{preprocess, BuildConfig, Encoding, PreprocessReport, RawRecord, RawValue};
pub use schema::{HybridAction, Mode, N_CONT, N_STATE};
pub use split::stratified_split;
pub use transitions::Transitions;
