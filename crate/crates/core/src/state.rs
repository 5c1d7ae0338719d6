//! Live-peer roster with incrementally maintained chunk tables.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chunks::{ChunkTable, MismatchSummary};
use crate::model::{SwarmIx, Topology};
use crate::pieces::{PieceId, PieceSet};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerRecord<T> {
    pub peer_id: u64,
    pub swarm: SwarmIx,
    pub cache: PieceSet,
    pub arrival_time: T,
}

/// Position of a live peer: its swarm and slot within that swarm's roster.
///
/// Slots are reassigned on departure, so a `PeerRef` is only valid until
/// the next removal from the same swarm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PeerRef {
    pub swarm: SwarmIx,
    pub slot: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StateError {
    #[error("unknown swarm index {0}")]
    UnknownSwarm(usize),
    #[error("piece {piece} is outside the downloadable set of swarm `{swarm}`")]
    PieceOutsideDownloadable { swarm: String, piece: PieceId },
    #[error("cache {cache:?} of a swarm-`{swarm}` peer is not a subset of its downloadable set")]
    CacheOutsideDownloadable { swarm: String, cache: PieceSet },
    #[error("a swarm-`{swarm}` peer holding its whole file cannot be live")]
    CompleteCache { swarm: String },
}

/// Outcome of [`NetworkState::audit`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AuditReport {
    Clean,
    Discrepancy {
        swarm: String,
        /// Offending piece, when the mismatch is in a per-piece count.
        piece: Option<PieceId>,
        detail: String,
    },
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        matches!(self, AuditReport::Clean)
    }
}

/// The network state `x`: who is present and what they hold.
///
/// The seed is implicit and never appears in the roster.
#[derive(Debug, Clone)]
pub struct NetworkState<T> {
    clock: T,
    topology: Arc<Topology>,
    members: Vec<Vec<PeerRecord<T>>>,
    tables: Vec<ChunkTable>,
    next_id: u64,
}

impl<T: Scalar> NetworkState<T> {
    pub fn new(topology: Arc<Topology>) -> Self {
        let n = topology.len();
        let tables = topology
            .swarms()
            .map(|w| ChunkTable::new(topology.files[w.0], topology.downloadable[w.0]))
            .collect();
        NetworkState {
            clock: T::zero(),
            topology,
            members: vec![Vec::new(); n],
            tables,
            next_id: 0,
        }
    }

    #[inline]
    pub fn clock(&self) -> T {
        self.clock
    }

    #[inline]
    pub fn set_clock(&mut self, t: T) {
        self.clock = t;
    }

    #[inline]
    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn topology_arc(&self) -> Arc<Topology> {
        Arc::clone(&self.topology)
    }

    /// `|x|_W`.
    #[inline]
    pub fn population(&self, w: SwarmIx) -> usize {
        self.members[w.0].len()
    }

    /// `|x|`.
    pub fn total_population(&self) -> usize {
        self.members.iter().map(Vec::len).sum()
    }

    #[inline]
    pub fn table(&self, w: SwarmIx) -> &ChunkTable {
        &self.tables[w.0]
    }

    #[inline]
    pub fn members(&self, w: SwarmIx) -> &[PeerRecord<T>] {
        &self.members[w.0]
    }

    #[inline]
    pub fn peer(&self, r: PeerRef) -> &PeerRecord<T> {
        &self.members[r.swarm.0][r.slot]
    }

    pub fn peers(&self) -> impl Iterator<Item = &PeerRecord<T>> {
        self.members.iter().flatten()
    }

    /// The `k`-th live peer in swarm order (0-based, `k < |x|`).
    pub fn nth_peer(&self, mut k: usize) -> Option<PeerRef> {
        for (w, m) in self.members.iter().enumerate() {
            if k < m.len() {
                return Some(PeerRef { swarm: SwarmIx(w), slot: k });
            }
            k -= m.len();
        }
        None
    }

    fn swarm_name(&self, w: SwarmIx) -> String {
        self.topology.ids[w.0].clone()
    }

    fn check_swarm(&self, w: SwarmIx) -> Result<(), StateError> {
        if w.0 < self.members.len() {
            Ok(())
        } else {
            Err(StateError::UnknownSwarm(w.0))
        }
    }

    /// Add a live peer with the given cache.
    pub fn add_peer(&mut self, w: SwarmIx, cache: PieceSet, arrival_time: T) -> Result<PeerRef, StateError> {
        self.check_swarm(w)?;
        if !cache.is_subset(&self.topology.downloadable[w.0]) {
            return Err(StateError::CacheOutsideDownloadable { swarm: self.swarm_name(w), cache });
        }
        if self.topology.files[w.0].is_subset(&cache) {
            return Err(StateError::CompleteCache { swarm: self.swarm_name(w) });
        }
        self.tables[w.0].add_peer(&cache);
        let peer_id = self.next_id;
        self.next_id += 1;
        self.members[w.0].push(PeerRecord { peer_id, swarm: w, cache, arrival_time });
        Ok(PeerRef { swarm: w, slot: self.members[w.0].len() - 1 })
    }

    /// An empty-cache arrival at the current clock.
    pub fn arrive(&mut self, w: SwarmIx) -> PeerRef {
        let t = self.clock;
        self.add_peer(w, PieceSet::EMPTY, t).expect("empty cache is always admissible")
    }

    pub fn remove_peer(&mut self, r: PeerRef) -> PeerRecord<T> {
        let rec = self.members[r.swarm.0].swap_remove(r.slot);
        self.tables[r.swarm.0].remove_peer(&rec.cache);
        rec
    }

    /// Apply a batch of single-piece downloads as one transition, then
    /// remove every peer whose cache now covers its file.
    ///
    /// Returns the departed peers in removal order.
    pub fn apply_downloads(&mut self, downloads: &[(PeerRef, PieceId)]) -> Vec<PeerRecord<T>> {
        let mut done: Vec<PeerRef> = Vec::new();
        for &(r, p) in downloads {
            let rec = &mut self.members[r.swarm.0][r.slot];
            debug_assert!(!rec.cache.contains(p), "peer already holds {p}");
            self.tables[r.swarm.0].add_piece(&rec.cache, p);
            rec.cache.insert(p);
            if self.topology.files[r.swarm.0].is_subset(&rec.cache) && !done.contains(&r) {
                done.push(r);
            }
        }
        // highest slot first so earlier swap_removes never move a pending peer
        done.sort_unstable_by(|a, b| b.cmp(a));
        done.into_iter().map(|r| self.remove_peer(r)).collect()
    }

    /// `ν_W^(i)`; errors for unknown swarms or pieces outside `F_W`.
    pub fn chunk_count(&self, w: SwarmIx, p: PieceId) -> Result<u32, StateError> {
        self.check_swarm(w)?;
        if !self.topology.downloadable[w.0].contains(p) {
            return Err(StateError::PieceOutsideDownloadable { swarm: self.swarm_name(w), piece: p });
        }
        Ok(self.tables[w.0].count(p))
    }

    /// `π_W^(i)`, zero for an empty swarm.
    pub fn frequency(&self, w: SwarmIx, p: PieceId) -> Result<T, StateError> {
        let c = self.chunk_count(w, p)?;
        let n = self.population(w);
        Ok(if n == 0 { T::zero() } else { T::of_count(c) / T::of_count(n) })
    }

    pub fn mismatch_summary(&self, w: SwarmIx) -> MismatchSummary {
        self.tables[w.0].summary()
    }

    /// `d_W^(i)`: copies of `i` held by peers of swarms that upload to `W`.
    pub fn complementary_count(&self, w: SwarmIx, p: PieceId) -> u32 {
        self.topology.helpers(w).iter().map(|v| self.tables[v.0].count(p)).sum()
    }

    /// `R_W`.
    #[inline]
    pub fn rare_set(&self, w: SwarmIx) -> PieceSet {
        self.tables[w.0].rare_set()
    }

    /// `W \ R_W`.
    #[inline]
    pub fn nonrare_set(&self, w: SwarmIx) -> PieceSet {
        self.topology.files[w.0] - self.rare_set(w)
    }

    /// Recount every table from the roster and compare.
    pub fn audit(&self) -> AuditReport {
        for w in self.topology.swarms() {
            let name = || self.swarm_name(w);
            let file = self.topology.files[w.0];
            let dl = self.topology.downloadable[w.0];
            for rec in &self.members[w.0] {
                if rec.swarm != w {
                    return AuditReport::Discrepancy {
                        swarm: name(),
                        piece: None,
                        detail: format!("peer {} filed under the wrong swarm", rec.peer_id),
                    };
                }
                if !rec.cache.is_subset(&dl) {
                    return AuditReport::Discrepancy {
                        swarm: name(),
                        piece: (rec.cache - dl).iter().next(),
                        detail: format!("peer {} holds a piece outside F_W", rec.peer_id),
                    };
                }
                if file.is_subset(&rec.cache) {
                    return AuditReport::Discrepancy {
                        swarm: name(),
                        piece: None,
                        detail: format!("peer {} holds all of W but is still live", rec.peer_id),
                    };
                }
            }
            let fresh = ChunkTable::from_caches(file, dl, self.members[w.0].iter().map(|r| &r.cache));
            if let Some(diff) = self.tables[w.0].first_difference(&fresh) {
                let detail = match diff {
                    Some(p) => format!(
                        "count of piece {p}: maintained {} vs recount {}",
                        self.tables[w.0].count(p),
                        fresh.count(p)
                    ),
                    None => "aggregate counters differ from recount".to_string(),
                };
                return AuditReport::Discrepancy { swarm: name(), piece: diff, detail };
            }
        }
        AuditReport::Clean
    }

    /// Test hook for fault injection into the maintained tables.
    #[doc(hidden)]
    pub fn table_mut(&mut self, w: SwarmIx) -> &mut ChunkTable {
        &mut self.tables[w.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SwarmSpec;

    fn set(v: &[usize]) -> PieceSet {
        v.iter().map(|&i| PieceId::new(i).unwrap()).collect()
    }

    fn p(i: usize) -> PieceId {
        PieceId::new(i).unwrap()
    }

    fn single(k: usize) -> NetworkState<f64> {
        let s = SwarmSpec::<f64>::selfish("W", PieceSet::first_n(k), 1.0);
        NetworkState::new(Arc::new(Topology::new(&[s]).unwrap()))
    }

    #[test]
    fn empty_network_counts_zero() {
        let s = single(4);
        for i in 1..=4 {
            assert_eq!(s.chunk_count(SwarmIx(0), p(i)), Ok(0));
        }
        assert_eq!(s.rare_set(SwarmIx(0)), PieceSet::first_n(4));
        assert_eq!(s.mismatch_summary(SwarmIx(0)), MismatchSummary::default());
        assert!(s.audit().is_clean());
    }

    #[test]
    fn chunk_count_domain_errors() {
        let s = single(2);
        assert!(matches!(s.chunk_count(SwarmIx(3), p(1)), Err(StateError::UnknownSwarm(3))));
        assert!(matches!(
            s.chunk_count(SwarmIx(0), p(3)),
            Err(StateError::PieceOutsideDownloadable { .. })
        ));
    }

    #[test]
    fn single_peer_mismatch() {
        let mut s = single(2);
        s.add_peer(SwarmIx(0), set(&[1]), 0.0).unwrap();
        let m = s.mismatch_summary(SwarmIx(0));
        assert_eq!((m.nu_max, m.nu_min, m.mbar, m.total_mismatch, m.total), (1, 0, 1, 1, 1));
        assert_eq!(s.frequency(SwarmIx(0), p(1)), Ok(1.0));
    }

    #[test]
    fn five_one_three_hand_values() {
        // caches realizing ν = (5, 3, 1) over W = [3]
        let mut s = single(3);
        let caches: [&[usize]; 5] = [&[1, 2], &[1, 2], &[1, 2], &[1, 3], &[1]];
        for c in caches {
            s.add_peer(SwarmIx(0), set(c), 0.0).unwrap();
        }
        let m = s.mismatch_summary(SwarmIx(0));
        assert_eq!((m.nu_max, m.nu_min), (5, 1));
        assert_eq!(m.mbar, 4);
        assert_eq!(m.total_mismatch, 6);
        assert!(u64::from(m.mbar) <= m.total_mismatch && m.total_mismatch <= 2 * u64::from(m.mbar));
        assert_eq!(s.rare_set(SwarmIx(0)), set(&[2, 3]));
        assert_eq!(s.nonrare_set(SwarmIx(0)), set(&[1]));
    }

    #[test]
    fn complementary_count_follows_allies() {
        let mut w1 = SwarmSpec::<f64>::selfish("W1", PieceSet::range(1, 10), 1.0);
        let mut w2 = SwarmSpec::<f64>::selfish("W2", PieceSet::range(7, 15), 1.0);
        w1.allies.push("W2".into());
        let topo = Arc::new(Topology::new(&[w1.clone(), w2.clone()]).unwrap());
        let mut s = NetworkState::<f64>::new(topo);
        for _ in 0..4 {
            s.add_peer(SwarmIx(1), set(&[8]), 0.0).unwrap();
        }
        // W2 does not upload to W1
        assert_eq!(s.complementary_count(SwarmIx(0), p(8)), 0);

        w2.allies.push("W1".into());
        let topo = Arc::new(Topology::new(&[w1, w2]).unwrap());
        let mut s = NetworkState::<f64>::new(topo);
        for _ in 0..4 {
            s.add_peer(SwarmIx(1), set(&[8]), 0.0).unwrap();
        }
        s.add_peer(SwarmIx(0), set(&[8]), 0.0).unwrap();
        assert_eq!(s.complementary_count(SwarmIx(0), p(8)), 4);
        assert_eq!(s.complementary_count(SwarmIx(1), p(8)), 1);
    }

    #[test]
    fn live_peer_invariants_enforced() {
        let mut s = single(2);
        assert!(matches!(
            s.add_peer(SwarmIx(0), set(&[1, 2]), 0.0),
            Err(StateError::CompleteCache { .. })
        ));
        assert!(matches!(
            s.add_peer(SwarmIx(0), set(&[3]), 0.0),
            Err(StateError::CacheOutsideDownloadable { .. })
        ));
    }

    #[test]
    fn simultaneous_departures_in_one_swarm() {
        let mut s = single(2);
        let a = s.add_peer(SwarmIx(0), set(&[1]), 0.0).unwrap();
        let b = s.add_peer(SwarmIx(0), set(&[2]), 0.5).unwrap();
        s.add_peer(SwarmIx(0), set(&[]), 0.7).unwrap();
        let gone = s.apply_downloads(&[(a, p(2)), (b, p(1))]);
        assert_eq!(gone.len(), 2);
        assert_eq!(s.population(SwarmIx(0)), 1);
        assert_eq!(s.peer(PeerRef { swarm: SwarmIx(0), slot: 0 }).peer_id, 2);
        assert!(s.audit().is_clean());
    }

    #[test]
    fn audit_flags_injected_fault() {
        let mut s = single(3);
        s.add_peer(SwarmIx(0), set(&[1]), 0.0).unwrap();
        s.table_mut(SwarmIx(0)).corrupt_count(p(2), 5);
        match s.audit() {
            AuditReport::Discrepancy { swarm, piece, .. } => {
                assert_eq!(swarm, "W");
                assert_eq!(piece, Some(p(2)));
            }
            AuditReport::Clean => panic!("fault not detected"),
        }
    }
}
