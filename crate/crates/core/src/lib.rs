//! Multi-swarm peer-to-peer file-sharing simulator.

pub mod chunks;
pub mod config;
pub mod engine;
pub mod harness;
pub mod lyapunov;
pub mod model;
pub mod output;
pub mod pieces;
pub mod policy;
pub mod record;
pub mod rng;
pub mod scalar;
pub mod state;
pub mod stats;

pub use chunks::{ChunkTable, MismatchSummary};
pub use engine::{
    run, total_rate, ConfigError, EventKind, EventOutcome, ExplicitPeer, InitialState, OneClubSpec, Pusher, RunConfig,
    Simulator, Violation,
};
pub use model::{ContactMode, NetworkParams, SwarmIx, SwarmSpec, Topology, TopologyError};
pub use pieces::{PieceId, PieceSet};
pub use policy::{Branch, PolicyConfig, PolicyKind, PushContext, PushOutcome, ZetaVariant};
pub use record::{Counters, EnvelopeTally, FinalSummary, Sample, Sojourn, SwarmSample, TrajectoryRecord};
pub use rng::{derive_stream_seed, SimRng};
pub use scalar::Scalar;
pub use state::{AuditReport, NetworkState, PeerRecord, PeerRef, StateError};
pub use config::{parse_config, ConfigDocument, ConfigFailure};
pub use harness::{run_preset, Overrides, PresetRun, RunOptions, ScenarioPreset, SummaryStats};
pub use lyapunov::{derive_constants, lyapunov_value, LyapunovConfig};
pub use stats::{Estimate, Verdict};

/// Version of this crate, embedded in run summaries.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Network = NetworkState<f64>;
pub type Params = NetworkParams<f64>;
pub type Swarm = SwarmSpec<f64>;
pub type Config = RunConfig<f64>;
pub type Record = TrajectoryRecord<f64>;
pub type Constants = LyapunovConfig<f64>;
