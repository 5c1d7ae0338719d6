//! Swarm and network parameters, and the resolved swarm topology.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::pieces::{PieceId, PieceSet};
use crate::scalar::Scalar;

/// Position of a swarm in the run's swarm list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SwarmIx(pub usize);

/// Peers primarily interested in one file, with their altruism preferences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwarmSpec<T> {
    pub id: String,
    /// Pieces of primary interest `W`.
    pub file: PieceSet,
    /// Pieces a peer may hold, `W ⊆ F_W`; the surplus is the excess cache.
    pub downloadable: PieceSet,
    /// Swarms this swarm's peers upload to; always contains `id`.
    pub allies: Vec<String>,
    pub lambda: T,
    pub alpha: T,
    pub beta: T,
}

impl<T: Scalar> SwarmSpec<T> {
    /// Single-file swarm that neither stores extras nor helps other swarms.
    pub fn selfish(id: &str, file: PieceSet, lambda: f64) -> Self {
        SwarmSpec {
            id: id.to_string(),
            file,
            downloadable: file,
            allies: vec![id.to_string()],
            lambda: T::of(lambda),
            alpha: T::of(1e-9),
            beta: T::of(1.5),
        }
    }

    pub fn k(&self) -> usize {
        self.file.len()
    }

    pub fn extras(&self) -> PieceSet {
        self.downloadable - self.file
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactMode {
    /// Peers contact any other peer; the seed serves the whole network.
    #[default]
    Shared,
    /// Peers contact only their own swarm; the seed runs one clock per swarm.
    Autonomous,
}

/// Contact-process parameters shared by every peer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkParams<T> {
    /// Tick rate of each tit-for-tat link.
    pub mu: T,
    /// Tick rate of a peer's optimistic-unchoke link.
    pub mu_hat: T,
    /// Links per peer (the seed uses all of them for unchokes).
    #[serde(rename = "L")]
    pub links: u32,
    /// Seed per-link tick rate.
    #[serde(rename = "U")]
    pub seed_rate: T,
    /// Probability a non-benefiting peer still pushes in a tit-for-tat contact.
    pub p: T,
    pub y_opt: bool,
    #[serde(default)]
    pub mode: ContactMode,
    /// Seed per-link rate dedicated to each swarm (autonomous mode).
    #[serde(default)]
    pub seed_split: BTreeMap<String, T>,
    /// Force pushes toward empty-cache counterparts in tit-for-tat contacts.
    #[serde(default)]
    pub scalability_mode: bool,
}

impl<T: Scalar> NetworkParams<T> {
    pub fn new(mu: f64, mu_hat: f64, links: u32, seed_rate: f64, p: f64, y_opt: bool) -> Self {
        NetworkParams {
            mu: T::of(mu),
            mu_hat: T::of(mu_hat),
            links,
            seed_rate: T::of(seed_rate),
            p: T::of(p),
            y_opt,
            mode: ContactMode::Shared,
            seed_split: BTreeMap::new(),
            scalability_mode: false,
        }
    }

    #[inline]
    pub fn y(&self) -> u32 {
        u32::from(self.y_opt)
    }

    /// Tit-for-tat links per peer, `L − 1{Y_opt}`.
    #[inline]
    pub fn tft_links(&self) -> u32 {
        self.links.saturating_sub(self.y())
    }

    /// Push-contact intensity per ally holder when non-benefiting pushes
    /// succeed with probability `t`: `2(L − 1{Y_opt})·μ·t + 1{Y_opt}·μ̂`.
    pub fn delta(&self, t: T) -> T {
        let two = T::of(2.0);
        let unchoke = if self.y_opt { self.mu_hat } else { T::zero() };
        two * T::of_count(self.tft_links()) * self.mu * t + unchoke
    }

    pub fn delta_p(&self) -> T {
        self.delta(self.p)
    }

    pub fn delta_1(&self) -> T {
        self.delta(T::one())
    }

    /// Bound on the ratio between the upper and lower push-contact rate
    /// envelopes; infinite when `Δ_p = 0`.
    pub fn xi2(&self) -> T {
        let one = T::one();
        if self.y_opt {
            let two_l1_mu = T::of(2.0) * T::of_count(self.links.saturating_sub(1)) * self.mu;
            let den = two_l1_mu * self.p + self.mu_hat;
            if den <= T::zero() {
                return T::infinity();
            }
            one + (two_l1_mu + self.mu_hat) / den
        } else if self.p > T::zero() {
            one + one / self.p
        } else {
            T::infinity()
        }
    }

    /// Total seed tick rate `L·U`.
    pub fn seed_total(&self) -> T {
        T::of_count(self.links) * self.seed_rate
    }
}

/// Swarm relationships resolved to indices, shared by state and engine.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub ids: Vec<String>,
    pub files: Vec<PieceSet>,
    pub downloadable: Vec<PieceSet>,
    /// `uploads_to[v]` has bit `w` set when `w ∈ 𝒲_v`.
    uploads_to: Vec<u64>,
    /// `helpers[w]`: swarms `v ≠ w` with `w ∈ 𝒲_v`.
    helpers: Vec<Vec<SwarmIx>>,
    /// Size of the master-file `K`.
    pub master_k: usize,
}

pub const MAX_SWARMS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TopologyError {
    #[error("too many swarms ({0}); at most {MAX_SWARMS} are supported")]
    TooManySwarms(usize),
    #[error("duplicate swarm id `{0}`")]
    DuplicateId(String),
    #[error("swarm `{swarm}` lists unknown ally `{ally}`")]
    UnknownAlly { swarm: String, ally: String },
}

impl Topology {
    pub fn new<T: Scalar>(swarms: &[SwarmSpec<T>]) -> Result<Self, TopologyError> {
        if swarms.len() > MAX_SWARMS {
            return Err(TopologyError::TooManySwarms(swarms.len()));
        }
        let ids: Vec<String> = swarms.iter().map(|s| s.id.clone()).collect();
        for (i, id) in ids.iter().enumerate() {
            if ids[..i].contains(id) {
                return Err(TopologyError::DuplicateId(id.clone()));
            }
        }
        let mut uploads_to = vec![0u64; swarms.len()];
        for (v, s) in swarms.iter().enumerate() {
            for ally in &s.allies {
                let w = ids.iter().position(|x| x == ally).ok_or_else(|| TopologyError::UnknownAlly {
                    swarm: s.id.clone(),
                    ally: ally.clone(),
                })?;
                uploads_to[v] |= 1 << w;
            }
        }
        let helpers = (0..swarms.len())
            .map(|w| {
                (0..swarms.len())
                    .filter(|&v| v != w && uploads_to[v] & (1 << w) != 0)
                    .map(SwarmIx)
                    .collect()
            })
            .collect();
        let master_k = swarms.iter().map(|s| s.downloadable.max_index()).max().unwrap_or(0);
        Ok(Topology {
            ids,
            files: swarms.iter().map(|s| s.file).collect(),
            downloadable: swarms.iter().map(|s| s.downloadable).collect(),
            uploads_to,
            helpers,
            master_k,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn swarms(&self) -> impl Iterator<Item = SwarmIx> {
        (0..self.ids.len()).map(SwarmIx)
    }

    /// Does swarm `from` upload to swarm `to`?
    #[inline]
    pub fn uploads(&self, from: SwarmIx, to: SwarmIx) -> bool {
        self.uploads_to[from.0] & (1 << to.0) != 0
    }

    /// Swarms other than `w` whose peers upload to `w`.
    #[inline]
    pub fn helpers(&self, w: SwarmIx) -> &[SwarmIx] {
        &self.helpers[w.0]
    }

    pub fn has_foreign_allies(&self, w: SwarmIx) -> bool {
        self.uploads_to[w.0] & !(1 << w.0) != 0
    }

    pub fn master(&self) -> PieceSet {
        PieceSet::first_n(self.master_k)
    }

    pub fn index_of(&self, id: &str) -> Option<SwarmIx> {
        self.ids.iter().position(|x| x == id).map(SwarmIx)
    }

    #[inline]
    pub fn file(&self, w: SwarmIx) -> &PieceSet {
        &self.files[w.0]
    }

    #[inline]
    pub fn k(&self, w: SwarmIx) -> usize {
        self.files[w.0].len()
    }

    pub fn in_downloadable(&self, w: SwarmIx, p: PieceId) -> bool {
        self.downloadable[w.0].contains(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_and_xi2() {
        let mut n = NetworkParams::<f64>::new(1.0, 1.0 / 3.0, 3, 1.0, 0.5, false);
        assert_eq!(n.delta_p(), 3.0);
        assert_eq!(n.delta_1(), 6.0);
        assert_eq!(n.xi2(), 3.0);
        n.p = 0.0;
        assert_eq!(n.delta_p(), 0.0);
        assert!(n.xi2().is_infinite());
        n.y_opt = true;
        // Δ_p = μ̂ and ξ2 = 1 + (4 + 1/3)/(1/3) = 14
        assert!((n.delta_p() - 1.0 / 3.0).abs() < 1e-12);
        assert!((n.xi2() - 14.0).abs() < 1e-9);
    }

    #[test]
    fn topology_resolves_helpers() {
        let mut a = SwarmSpec::<f64>::selfish("A", PieceSet::range(1, 10), 1.0);
        let b = SwarmSpec::<f64>::selfish("B", PieceSet::range(7, 15), 1.0);
        a.allies.push("B".into());
        let t = Topology::new(&[a, b]).unwrap();
        assert!(t.uploads(SwarmIx(0), SwarmIx(1)));
        assert!(!t.uploads(SwarmIx(1), SwarmIx(0)));
        assert_eq!(t.helpers(SwarmIx(1)), &[SwarmIx(0)]);
        assert!(t.helpers(SwarmIx(0)).is_empty());
        assert!(t.has_foreign_allies(SwarmIx(0)));
        assert_eq!(t.master_k, 15);
    }

    #[test]
    fn topology_rejects_bad_allies() {
        let mut a = SwarmSpec::<f64>::selfish("A", PieceSet::range(1, 2), 1.0);
        a.allies.push("Z".into());
        assert!(matches!(Topology::new(&[a]), Err(TopologyError::UnknownAlly { .. })));
        let b = SwarmSpec::<f64>::selfish("A", PieceSet::range(1, 2), 1.0);
        assert!(matches!(Topology::new(&[b.clone(), b]), Err(TopologyError::DuplicateId(_))));
    }
}
