//! Per-swarm chunk accounting with O(1) extreme-count maintenance.

use crate::pieces::{PieceId, PieceSet};

/// Chunk-counts of one swarm.
///
/// `counts` is indexed by piece and maintained for every piece of the
/// swarm's downloadable set. The extremes `nu_max`/`nu_min`, the total `P_W`
/// and the mode are taken over the primary file only, via a count-of-counts
/// histogram: every update moves one count by one, so each extreme moves by
/// at most one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkTable {
    file: PieceSet,
    downloadable: PieceSet,
    k: u32,
    counts: Vec<u32>,
    population: u32,
    empty_peers: u32,
    total: u64,
    hist: Vec<u32>,
    nu_min: u32,
    nu_max: u32,
    mode: PieceSet,
}

/// Extremes and aggregate mismatch of one swarm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MismatchSummary {
    pub nu_max: u32,
    pub nu_min: u32,
    /// Largest mismatch `ν̄ − ν_min`.
    pub mbar: u32,
    /// Total mismatch `Σ_{i∈W} (ν̄ − ν^(i))`.
    pub total_mismatch: u64,
    /// Total chunk-count `P_W`.
    pub total: u64,
}

impl ChunkTable {
    pub fn new(file: PieceSet, downloadable: PieceSet) -> Self {
        let k = file.len() as u32;
        ChunkTable {
            file,
            downloadable,
            k,
            counts: vec![0; downloadable.max_index() + 1],
            population: 0,
            empty_peers: 0,
            total: 0,
            hist: vec![k],
            nu_min: 0,
            nu_max: 0,
            mode: file,
        }
    }

    /// Recount from scratch over the caches of the swarm's live peers.
    pub fn from_caches<'a, I>(file: PieceSet, downloadable: PieceSet, caches: I) -> Self
    where
        I: IntoIterator<Item = &'a PieceSet>,
    {
        let mut t = ChunkTable::new(file, downloadable);
        for cache in caches {
            t.add_peer(cache);
        }
        t
    }

    #[inline]
    pub fn file(&self) -> &PieceSet {
        &self.file
    }

    #[inline]
    pub fn downloadable(&self) -> &PieceSet {
        &self.downloadable
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k as usize
    }

    #[inline]
    pub fn population(&self) -> u32 {
        self.population
    }

    /// Live peers holding no piece at all.
    #[inline]
    pub fn empty_peers(&self) -> u32 {
        self.empty_peers
    }

    /// `ν_W^(i)`; zero for pieces outside the downloadable set.
    #[inline]
    pub fn count(&self, p: PieceId) -> u32 {
        self.counts.get(p.index()).copied().unwrap_or(0)
    }

    #[inline]
    pub fn nu_max(&self) -> u32 {
        self.nu_max
    }

    #[inline]
    pub fn nu_min(&self) -> u32 {
        self.nu_min
    }

    #[inline]
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Pieces of the file attaining the maximum count.
    #[inline]
    pub fn mode(&self) -> &PieceSet {
        &self.mode
    }

    #[inline]
    pub fn is_uniform(&self) -> bool {
        self.nu_max == self.nu_min
    }

    /// `R_W`: pieces below the maximum, or the whole file when counts are uniform.
    #[inline]
    pub fn rare_set(&self) -> PieceSet {
        if self.is_uniform() {
            self.file
        } else {
            self.file - self.mode
        }
    }

    pub fn summary(&self) -> MismatchSummary {
        MismatchSummary {
            nu_max: self.nu_max,
            nu_min: self.nu_min,
            mbar: self.nu_max - self.nu_min,
            total_mismatch: u64::from(self.k) * u64::from(self.nu_max) - self.total,
            total: self.total,
        }
    }

    /// A new live peer with the given cache (empty for arrivals).
    pub fn add_peer(&mut self, cache: &PieceSet) {
        self.population += 1;
        if cache.is_empty() {
            self.empty_peers += 1;
        }
        for p in cache {
            self.add_piece_to(p, false);
        }
    }

    /// A live peer with cache `cache` leaves.
    pub fn remove_peer(&mut self, cache: &PieceSet) {
        self.population -= 1;
        if cache.is_empty() {
            self.empty_peers -= 1;
        }
        for p in cache {
            self.decrement(p);
        }
    }

    /// A live peer whose cache was `before` gains piece `p`.
    pub fn add_piece(&mut self, before: &PieceSet, p: PieceId) {
        self.add_piece_to(p, before.is_empty());
    }

    fn add_piece_to(&mut self, p: PieceId, was_empty: bool) {
        debug_assert!(self.downloadable.contains(p), "piece {p} outside F_W");
        if was_empty {
            self.empty_peers -= 1;
        }
        let c = self.counts[p.index()];
        self.counts[p.index()] = c + 1;
        if !self.file.contains(p) {
            return;
        }
        self.total += 1;
        let c = c as usize;
        self.hist[c] -= 1;
        if self.hist.len() <= c + 1 {
            self.hist.push(0);
        }
        self.hist[c + 1] += 1;
        if c as u32 == self.nu_min && self.hist[c] == 0 {
            self.nu_min += 1;
        }
        if c as u32 + 1 > self.nu_max {
            self.nu_max = c as u32 + 1;
            self.mode = PieceSet::EMPTY;
            self.mode.insert(p);
        } else if c as u32 + 1 == self.nu_max {
            self.mode.insert(p);
        }
    }

    fn decrement(&mut self, p: PieceId) {
        let c = self.counts[p.index()];
        debug_assert!(c > 0);
        self.counts[p.index()] = c - 1;
        if !self.file.contains(p) {
            return;
        }
        self.total -= 1;
        let cu = c as usize;
        self.hist[cu] -= 1;
        self.hist[cu - 1] += 1;
        if c - 1 < self.nu_min {
            self.nu_min = c - 1;
        }
        if c == self.nu_max {
            self.mode.remove(p);
            if self.hist[cu] == 0 {
                self.nu_max = c - 1;
                let counts = &self.counts;
                self.mode = self.file.iter().filter(|q| counts[q.index()] == c - 1).collect();
            }
        }
    }

    /// First piece whose count differs between the two tables, or a
    /// population/total mismatch reported as `None` piece.
    pub fn first_difference(&self, other: &ChunkTable) -> Option<Option<PieceId>> {
        for p in &(self.downloadable | other.downloadable) {
            if self.count(p) != other.count(p) {
                return Some(Some(p));
            }
        }
        let trimmed = |h: &[u32]| {
            let n = h.iter().rposition(|&c| c != 0).map_or(0, |i| i + 1);
            h[..n].to_vec()
        };
        let same = self.population == other.population
            && self.empty_peers == other.empty_peers
            && self.total == other.total
            && self.nu_min == other.nu_min
            && self.nu_max == other.nu_max
            && self.mode == other.mode
            && trimmed(&self.hist) == trimmed(&other.hist);
        if same {
            None
        } else {
            Some(None)
        }
    }

    /// Test hook: overwrite one count without maintaining derived fields.
    #[doc(hidden)]
    pub fn corrupt_count(&mut self, p: PieceId, value: u32) {
        self.counts[p.index()] = value;
    }
}
