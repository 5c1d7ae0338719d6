//! What a simulation run leaves behind.

use serde::{Deserialize, Serialize};

use crate::chunks::ChunkTable;
use crate::model::SwarmIx;

/// Per-swarm metrics at one sample instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SwarmSample {
    pub population: u32,
    /// Peers holding nothing at all.
    pub empty: u32,
    pub nu_min: u32,
    pub nu_max: u32,
    pub mbar: u32,
    /// Total mismatch `M_W`.
    #[serde(rename = "M")]
    pub total_mismatch: u64,
    /// Total chunk-count `P_W`.
    #[serde(rename = "P")]
    pub total: u64,
}

impl SwarmSample {
    pub fn of_table(t: &ChunkTable) -> Self {
        let m = t.summary();
        SwarmSample {
            population: t.population(),
            empty: t.empty_peers(),
            nu_min: m.nu_min,
            nu_max: m.nu_max,
            mbar: m.mbar,
            total_mismatch: m.total_mismatch,
            total: m.total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample<T> {
    pub t: T,
    pub swarms: Vec<SwarmSample>,
}

impl<T> Sample<T> {
    pub fn total_population(&self) -> u64 {
        self.swarms.iter().map(|s| u64::from(s.population)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sojourn<T> {
    pub swarm: SwarmIx,
    pub arrival: T,
    pub departure: T,
}

impl<T: std::ops::Sub<Output = T> + Copy> Sojourn<T> {
    pub fn duration(&self) -> T {
        self.departure - self.arrival
    }
}

/// Event and push tallies for a run.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counters {
    pub events: u64,
    /// Arrivals per swarm.
    pub arrivals: Vec<u64>,
    pub seed_ticks: u64,
    pub tit_for_tat_ticks: u64,
    pub unchoke_ticks: u64,
    /// Ticks with no eligible contact target.
    pub noop_ticks: u64,
    pub pushes: u64,
    pub rare: u64,
    pub nonrare_accepted: u64,
    /// Pushes where a primary piece was offered but withheld.
    pub nonrare_suppressed: u64,
    pub extra: u64,
    /// Pushes that moved nothing.
    pub empty_pushes: u64,
    pub two_sided_exchanges: u64,
    /// Departures per swarm.
    pub departures: Vec<u64>,
}

impl Counters {
    pub fn new(swarms: usize) -> Self {
        Counters { arrivals: vec![0; swarms], departures: vec![0; swarms], ..Default::default() }
    }
}

/// Accumulated push-contact counts against the lower rate envelope.
///
/// For every swarm `W` and piece `i ∈ W`, `observed` counts push-contacts
/// made onto swarm-`W` peers missing `i` by pushers revealing `i`, and
/// `expected_lower` integrates the envelope rate of such contacts over the
/// sampled trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeTally {
    /// File pieces of each swarm, in increasing order.
    pub pieces: Vec<Vec<u16>>,
    pub observed: Vec<Vec<u64>>,
    pub expected_lower: Vec<Vec<f64>>,
    /// Upper/lower envelope ratio bound used by the check.
    pub xi2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalSummary<T> {
    pub clock: T,
    pub populations: Vec<u32>,
    pub peak_populations: Vec<u32>,
    /// First time the roster was empty, if ever.
    pub emptied_at: Option<T>,
    /// First time every piece of the swarm's file was held in the swarm.
    pub coverage_time: Vec<Option<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord<T> {
    pub swarm_ids: Vec<String>,
    pub file_sizes: Vec<usize>,
    pub sample_interval: T,
    pub samples: Vec<Sample<T>>,
    pub sojourns: Vec<Sojourn<T>>,
    pub counters: Counters,
    pub final_state: FinalSummary<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<EnvelopeTally>,
}

impl<T: Copy + PartialOrd> TrajectoryRecord<T> {
    /// Sojourns of swarm `w` whose arrival is at or after `warmup`.
    pub fn sojourns_after(&self, w: SwarmIx, warmup: T) -> impl Iterator<Item = &Sojourn<T>> + '_ {
        self.sojourns.iter().filter(move |s| s.swarm == w && s.arrival >= warmup)
    }
}
