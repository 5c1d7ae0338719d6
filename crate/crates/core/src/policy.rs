//! Piece-selection policies: which piece, if any, a push-contact transfers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{ContactMode, NetworkParams, SwarmIx, SwarmSpec};
use crate::pieces::{PieceId, PieceSet};
use crate::rng::SimRng;
use crate::scalar::Scalar;
use crate::state::NetworkState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolicyKind {
    /// Rarest-first over rare pieces with probabilistic non-rare sharing.
    #[serde(rename = "RFwPMS")]
    RfwPms,
    /// As `RfwPms` but uniform over the offered rare pieces.
    #[serde(rename = "RNwPMS")]
    RnwPms,
    /// Mode suppression: never transfer a piece in the mode unless all are.
    #[serde(rename = "MS")]
    Ms,
    /// Mode suppression only once the largest mismatch exceeds a threshold.
    #[serde(rename = "TMS")]
    Tms,
    /// Rarest-first, work-conserving.
    #[serde(rename = "RF")]
    Rf,
    /// Random novel piece, work-conserving.
    #[serde(rename = "RN")]
    Rn,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] =
        [PolicyKind::RfwPms, PolicyKind::RnwPms, PolicyKind::Ms, PolicyKind::Tms, PolicyKind::Rf, PolicyKind::Rn];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::RfwPms => "RFwPMS",
            PolicyKind::RnwPms => "RNwPMS",
            PolicyKind::Ms => "MS",
            PolicyKind::Tms => "TMS",
            PolicyKind::Rf => "RF",
            PolicyKind::Rn => "RN",
        }
    }

    pub fn uses_zeta(self) -> bool {
        matches!(self, PolicyKind::RfwPms | PolicyKind::RnwPms)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown policy `{0}` (expected one of RFwPMS, RNwPMS, MS, TMS, RF, RN)")]
pub struct UnknownPolicy(pub String);

impl FromStr for PolicyKind {
    type Err = UnknownPolicy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownPolicy(s.to_string()))
    }
}

/// Form of the non-rares' sharing factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZetaVariant {
    /// `exp(−(m̄_W + d^α)/(β K_W))`.
    #[default]
    Standard,
    /// `exp(−(Δ_1/(β L U))·(m̄_W + d)/min{K_W, |x|})`.
    Flashcrowd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    #[serde(default)]
    pub zeta_variant: ZetaVariant,
    /// TMS suppression threshold on `m̄_W`; `2·K_W` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tms_threshold: Option<u32>,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind) -> Self {
        PolicyConfig { kind, zeta_variant: ZetaVariant::Standard, tms_threshold: None }
    }

    pub fn with_zeta(mut self, v: ZetaVariant) -> Self {
        self.zeta_variant = v;
        self
    }

    pub fn threshold_for(&self, k: usize) -> u32 {
        self.tms_threshold.unwrap_or(2 * k as u32)
    }
}

/// A committed push toward one live peer.
#[derive(Debug, Clone, Copy)]
pub struct PushContext<'a, T> {
    pub state: &'a NetworkState<T>,
    pub swarms: &'a [SwarmSpec<T>],
    pub params: &'a NetworkParams<T>,
    /// Revealed cache profile of the pusher (everything for the seed).
    pub revealed: PieceSet,
    pub target_swarm: SwarmIx,
    pub target_cache: PieceSet,
}

/// Which rule produced (or failed to produce) the transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Rare,
    NonRare,
    Extra,
    Nothing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PushOutcome {
    pub piece: Option<PieceId>,
    pub branch: Branch,
    /// A primary piece was on offer but withheld by suppression.
    pub suppressed: bool,
}

impl PushOutcome {
    fn none() -> Self {
        PushOutcome { piece: None, branch: Branch::Nothing, suppressed: false }
    }
}

/// Non-rares' sharing factor for piece `n` offered to the target swarm.
pub fn sharing_factor<T: Scalar>(ctx: &PushContext<'_, T>, n: PieceId, variant: ZetaVariant) -> T {
    let w = ctx.target_swarm;
    let spec = &ctx.swarms[w.0];
    if spec.beta <= T::zero() {
        return T::zero();
    }
    let table = ctx.state.table(w);
    let mbar = T::of_count(table.nu_max() - table.nu_min());
    let d = T::of_count(ctx.state.complementary_count(w, n));
    let k = T::of_count(table.k());
    match variant {
        ZetaVariant::Standard => (-(mbar + d.powf(spec.alpha)) / (spec.beta * k)).exp(),
        ZetaVariant::Flashcrowd => {
            let (lu, pop) = match ctx.params.mode {
                ContactMode::Shared => (ctx.params.seed_total(), ctx.state.total_population()),
                ContactMode::Autonomous => {
                    let u = ctx.params.seed_split.get(&spec.id).copied().unwrap_or(T::zero());
                    (T::of_count(ctx.params.links) * u, ctx.state.population(w))
                }
            };
            let scale = T::of_count(table.k().min(pop).max(1));
            (-(ctx.params.delta_1() / (spec.beta * lu)) * (mbar + d) / scale).exp()
        }
    }
}

#[inline]
fn pick(set: &PieceSet, rng: &mut SimRng) -> PieceId {
    set.nth(rng.index(set.len())).expect("index within set")
}

/// Pieces of `set` with the smallest chunk-count in the target swarm.
fn rarest<T: Scalar>(ctx: &PushContext<'_, T>, set: &PieceSet) -> PieceSet {
    let table = ctx.state.table(ctx.target_swarm);
    let mut best = u32::MAX;
    let mut out = PieceSet::EMPTY;
    for p in set {
        let c = table.count(p);
        if c < best {
            best = c;
            out = PieceSet::EMPTY;
        }
        if c == best {
            out.insert(p);
        }
    }
    out
}

fn extra(h3: &PieceSet, rng: &mut SimRng, suppressed: bool) -> PushOutcome {
    if h3.is_empty() {
        PushOutcome { piece: None, branch: Branch::Nothing, suppressed }
    } else {
        PushOutcome { piece: Some(pick(h3, rng)), branch: Branch::Extra, suppressed }
    }
}

/// The transferable set (empty or a singleton) under `policy`.
///
/// Random draws happen in a fixed order: the rare-piece pick, then the
/// non-rare pick and its Bernoulli trial, then the extra-piece pick, each
/// only when the rule is reached.
pub fn transferable_set<T: Scalar>(ctx: &PushContext<'_, T>, policy: &PolicyConfig, rng: &mut SimRng) -> PushOutcome {
    let w = ctx.target_swarm;
    let topo = ctx.state.topology();
    let file = *topo.file(w);
    let offered = ctx.revealed - ctx.target_cache;
    let h2 = offered & file;
    let h3 = (offered & topo.downloadable[w.0]) - file;
    if h2.is_empty() {
        return if h3.is_empty() { PushOutcome::none() } else { extra(&h3, rng, false) };
    }
    let table = ctx.state.table(w);
    let h1 = h2 & table.rare_set();
    match policy.kind {
        PolicyKind::RfwPms | PolicyKind::RnwPms => {
            if !h1.is_empty() {
                let from = if policy.kind == PolicyKind::RfwPms { rarest(ctx, &h1) } else { h1 };
                return PushOutcome { piece: Some(pick(&from, rng)), branch: Branch::Rare, suppressed: false };
            }
            let n = pick(&h2, rng);
            let zeta = sharing_factor(ctx, n, policy.zeta_variant).as_f64();
            if rng.bernoulli(zeta) {
                PushOutcome { piece: Some(n), branch: Branch::NonRare, suppressed: false }
            } else {
                extra(&h3, rng, true)
            }
        }
        PolicyKind::Rf => {
            let r = pick(&rarest(ctx, &h2), rng);
            let branch = if h1.contains(r) { Branch::Rare } else { Branch::NonRare };
            PushOutcome { piece: Some(r), branch, suppressed: false }
        }
        PolicyKind::Rn => unsuppressed(h1, h2, rng),
        PolicyKind::Ms => suppress_mode(h1, h3, rng),
        PolicyKind::Tms => {
            if table.nu_max() - table.nu_min() > policy.threshold_for(table.k()) {
                suppress_mode(h1, h3, rng)
            } else {
                unsuppressed(h1, h2, rng)
            }
        }
    }
}

fn unsuppressed(h1: PieceSet, h2: PieceSet, rng: &mut SimRng) -> PushOutcome {
    let r = pick(&h2, rng);
    let branch = if h1.contains(r) { Branch::Rare } else { Branch::NonRare };
    PushOutcome { piece: Some(r), branch, suppressed: false }
}

// With uniform counts the rare set is all of W, so this waives suppression.
fn suppress_mode(h1: PieceSet, h3: PieceSet, rng: &mut SimRng) -> PushOutcome {
    if h1.is_empty() {
        extra(&h3, rng, true)
    } else {
        PushOutcome { piece: Some(pick(&h1, rng)), branch: Branch::Rare, suppressed: false }
    }
}
