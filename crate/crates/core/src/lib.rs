//! Chart design feedback: perceptual filters over a chart image, plain
//! language clarification of their results, LLM-guided explanations and
//! suggestions, and tracking of metric changes across design revisions.

pub mod backend;
pub mod chart;
pub mod clarify;
pub mod color;
pub mod config;
pub mod feedback;
pub mod ingest;
pub mod pipeline;
pub mod report;
pub mod saliency;
pub mod setup;
pub mod synth;
pub mod text;
pub mod topic;
pub mod tracker;

pub use backend::BackendError;
pub use ingest::{load_chart_image, ChartImage, IngestError, SourceFormat};
pub use topic::{FilterId, Topic, UnknownFilter};
