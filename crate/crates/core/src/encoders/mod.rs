//! Per-token temporal, interaction and seasonality features.

pub mod bie;
pub mod mte;
pub mod ste;

pub use bie::{bie_counts, bie_reconstruct, InteractionCounts, InteractionEncoder, ReconToken, ReconstructedSequence};
pub use mte::{mix_temporal, CombineMode, Granularity, MteConfig, TemporalEncoder};
pub use ste::{build_ste_signal, ste_decompose, SeasonTrend, SteEncoder};
