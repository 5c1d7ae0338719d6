//! Event-driven simulation of the network's continuous-time Markov chain.
//!
//! All Poisson clocks are superposed: each step draws one exponential
//! holding time from the total rate, then one uniform to pick the clock
//! that fired, then resolves it. Per step the draw order is: holding time,
//! clock, initiator, target, push trials (peer 1 then peer 2), then the
//! piece-selection draws of each committed direction in the same order.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::model::{ContactMode, NetworkParams, SwarmIx, SwarmSpec, Topology, MAX_SWARMS};
use crate::pieces::{PieceId, PieceSet};
use crate::policy::{transferable_set, Branch, PolicyConfig, PushContext};
use crate::record::{Counters, EnvelopeTally, FinalSummary, Sample, Sojourn, SwarmSample, TrajectoryRecord};
use crate::rng::SimRng;
use crate::scalar::Scalar;
use crate::state::{NetworkState, PeerRef};

/// Which Poisson clock fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Arrival(SwarmIx),
    /// A seed link; carries the target swarm in autonomous mode.
    SeedTick(Option<SwarmIx>),
    TitForTatTick,
    UnchokeTick,
}

/// What a resolved event did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EventOutcome {
    pub pushes: u8,
    pub transfers: u8,
    pub departures: u8,
    pub noop: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneClubSpec {
    /// The piece every one-club peer lacks.
    pub missing: usize,
    pub size: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitPeer {
    pub swarm: String,
    pub cache: PieceSet,
    #[serde(default = "one")]
    pub count: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialState {
    #[default]
    Empty,
    /// Peers holding their whole file except one common piece.
    OneClub { swarms: BTreeMap<String, OneClubSpec> },
    /// Empty-cache peers present at time zero.
    FlashCrowd { swarms: BTreeMap<String, u32> },
    Explicit { peers: Vec<ExplicitPeer> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(serialize = "T: Serialize", deserialize = "T: Scalar"))]
pub struct RunConfig<T> {
    pub params: NetworkParams<T>,
    pub swarms: Vec<SwarmSpec<T>>,
    pub policy: PolicyConfig,
    pub t_end: T,
    pub rng_seed: u64,
    #[serde(default)]
    pub initial: InitialState,
    pub sample_interval: T,
    /// Keep the per-piece push-contact tallies used by the envelope check.
    #[serde(default)]
    pub track_push_rates: bool,
}

/// Upper bound on grid samples per run.
pub const MAX_SAMPLES: f64 = 2.0e6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Dotted location such as `swarms[1].allies`.
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigError {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration:")?;
        for v in &self.violations {
            write!(f, "\n  {}: {}", v.path, v.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

struct Checker(Vec<Violation>);

impl Checker {
    fn check(&mut self, ok: bool, path: impl Into<String>, message: impl Into<String>) {
        if !ok {
            self.0.push(Violation { path: path.into(), message: message.into() });
        }
    }
}

impl<T: Scalar> RunConfig<T> {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut c = Checker(Vec::new());
        let n = &self.params;
        let finite = |x: T| x.is_finite();
        c.check(finite(n.mu) && n.mu > T::zero(), "network.mu", "must be a positive rate");
        c.check(finite(n.mu_hat) && n.mu_hat >= T::zero(), "network.mu_hat", "must be a non-negative rate");
        if n.y_opt {
            c.check(n.mu_hat > T::zero(), "network.mu_hat", "must be positive when y_opt is set");
        }
        c.check(n.links >= 1, "network.L", "must be at least 1");
        c.check(finite(n.seed_rate) && n.seed_rate > T::zero(), "network.U", "must be a positive rate");
        c.check(finite(n.p) && n.p >= T::zero() && n.p <= T::one(), "network.p", "must lie in [0, 1]");

        c.check(!self.swarms.is_empty(), "swarms", "at least one swarm is required");
        c.check(self.swarms.len() <= MAX_SWARMS, "swarms", format!("at most {MAX_SWARMS} swarms are supported"));
        let ids: Vec<&str> = self.swarms.iter().map(|s| s.id.as_str()).collect();
        let mut master = PieceSet::EMPTY;
        for (i, s) in self.swarms.iter().enumerate() {
            let at = |f: &str| format!("swarms[{i}].{f}");
            c.check(!s.id.is_empty(), at("id"), "must be non-empty");
            c.check(!ids[..i].contains(&s.id.as_str()), at("id"), format!("duplicate swarm id `{}`", s.id));
            c.check(!s.file.is_empty(), at("file"), "must be non-empty");
            c.check(s.file.is_subset(&s.downloadable), at("downloadable"), "must contain the file");
            c.check(s.allies.iter().any(|a| a == &s.id), at("allies"), "must contain the swarm's own id");
            for a in &s.allies {
                c.check(ids.contains(&a.as_str()), at("allies"), format!("unknown swarm `{a}`"));
            }
            c.check(finite(s.lambda) && s.lambda >= T::zero(), at("lambda"), "must be a non-negative rate");
            c.check(s.alpha >= T::zero() && s.alpha <= T::one(), at("alpha"), "must lie in [0, 1]");
            c.check(finite(s.beta) && s.beta >= T::zero(), at("beta"), "must be non-negative");
            master = master | s.downloadable;
        }
        c.check(
            self.swarms.is_empty() || master.max_index() >= 2,
            "swarms",
            "the master-file must have at least two pieces",
        );

        match n.mode {
            ContactMode::Shared => {
                c.check(n.seed_split.is_empty(), "network.seed_split", "only applies in autonomous mode");
            }
            ContactMode::Autonomous => {
                let mut sum = T::zero();
                for id in &ids {
                    match n.seed_split.get(*id) {
                        Some(&u) => {
                            c.check(
                                finite(u) && u > T::zero(),
                                format!("network.seed_split.{id}"),
                                "must be a positive rate",
                            );
                            sum = sum + u;
                        }
                        None => c.check(false, "network.seed_split", format!("missing swarm `{id}`")),
                    }
                }
                for k in n.seed_split.keys() {
                    c.check(ids.contains(&k.as_str()), "network.seed_split", format!("unknown swarm `{k}`"));
                }
                let tol = T::of(1e-9) * n.seed_rate.max(T::one());
                c.check(sum <= n.seed_rate + tol, "network.seed_split", "shares must sum to at most U");
            }
        }

        c.check(finite(self.t_end) && self.t_end >= T::zero(), "sim.t_end", "must be a finite non-negative time");
        c.check(
            finite(self.sample_interval) && self.sample_interval > T::zero(),
            "sim.sample_interval",
            "must be positive",
        );
        if self.sample_interval > T::zero() && finite(self.t_end) {
            c.check(
                (self.t_end / self.sample_interval).as_f64() <= MAX_SAMPLES,
                "sim.sample_interval",
                format!("too fine for t_end (more than {MAX_SAMPLES} samples)"),
            );
        }

        let find = |id: &str| self.swarms.iter().find(|s| s.id == id);
        match &self.initial {
            InitialState::Empty => {}
            InitialState::OneClub { swarms } => {
                for (id, club) in swarms {
                    let at = format!("sim.initial.swarms.{id}");
                    match find(id) {
                        None => c.check(false, at, "unknown swarm"),
                        Some(s) => {
                            let ok = PieceId::new(club.missing).is_some_and(|p| s.file.contains(p));
                            c.check(ok, format!("{at}.missing"), "must be a piece of the swarm's file");
                        }
                    }
                }
            }
            InitialState::FlashCrowd { swarms } => {
                for id in swarms.keys() {
                    c.check(find(id).is_some(), format!("sim.initial.swarms.{id}"), "unknown swarm");
                }
            }
            InitialState::Explicit { peers } => {
                for (i, p) in peers.iter().enumerate() {
                    let at = format!("sim.initial.peers[{i}]");
                    match find(&p.swarm) {
                        None => c.check(false, format!("{at}.swarm"), "unknown swarm"),
                        Some(s) => {
                            c.check(p.cache.is_subset(&s.downloadable), format!("{at}.cache"), "must lie within F_W");
                            c.check(!s.file.is_subset(&p.cache), format!("{at}.cache"), "must miss part of the file");
                        }
                    }
                }
            }
        }

        if c.0.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { violations: c.0 })
        }
    }
}

/// Seed tick rate dedicated to each swarm in autonomous mode (zero in shared mode).
fn seed_rates<T: Scalar>(swarms: &[SwarmSpec<T>], params: &NetworkParams<T>) -> Vec<T> {
    let l = T::of_count(params.links);
    swarms
        .iter()
        .map(|s| match params.mode {
            ContactMode::Shared => T::zero(),
            ContactMode::Autonomous => l * params.seed_split.get(&s.id).copied().unwrap_or(T::zero()),
        })
        .collect()
}

/// Sum of all clock rates in `state`.
pub fn total_rate<T: Scalar>(state: &NetworkState<T>, swarms: &[SwarmSpec<T>], params: &NetworkParams<T>) -> T {
    let arrivals: T = swarms.iter().map(|s| s.lambda).sum();
    let seed = match params.mode {
        ContactMode::Shared => params.seed_total(),
        ContactMode::Autonomous => seed_rates(swarms, params).into_iter().sum(),
    };
    let x = T::of_count(state.total_population());
    let unchoke = if params.y_opt { x * params.mu_hat } else { T::zero() };
    arrivals + seed + x * T::of_count(params.tft_links()) * params.mu + unchoke
}

/// Who initiates a one-directional push.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pusher {
    Seed,
    Peer(PeerRef),
}

struct EnvelopeAcc {
    pieces: Vec<Vec<PieceId>>,
    observed: Vec<Vec<u64>>,
    lower: Vec<Vec<f64>>,
}

impl EnvelopeAcc {
    fn new(topo: &Topology) -> Self {
        let pieces: Vec<Vec<PieceId>> = topo.files.iter().map(|f| f.iter().collect()).collect();
        EnvelopeAcc {
            observed: pieces.iter().map(|v| vec![0; v.len()]).collect(),
            lower: pieces.iter().map(|v| vec![0.0; v.len()]).collect(),
            pieces,
        }
    }

    fn observe(&mut self, w: SwarmIx, offered_missing: PieceSet) {
        for (j, p) in self.pieces[w.0].iter().enumerate() {
            if offered_missing.contains(*p) {
                self.observed[w.0][j] += 1;
            }
        }
    }

    fn accumulate<T: Scalar>(&mut self, state: &NetworkState<T>, params: &NetworkParams<T>, seed: &[T], dt: f64) {
        let delta_p = params.delta_p().as_f64();
        let total = state.total_population();
        for w in state.topology().swarms() {
            let pop = state.population(w);
            if pop == 0 {
                continue;
            }
            let (n, s_w) = match params.mode {
                ContactMode::Shared => (total, params.seed_total().as_f64()),
                ContactMode::Autonomous => (pop, seed[w.0].as_f64()),
            };
            let xi1 = if n >= 2 { n as f64 / (n as f64 - 1.0) } else { 0.0 };
            let table = state.table(w);
            for (j, &p) in self.pieces[w.0].iter().enumerate() {
                let nu = table.count(p);
                let missing = pop as u32 - nu;
                if missing == 0 {
                    continue;
                }
                let h = match params.mode {
                    ContactMode::Shared => nu + state.complementary_count(w, p),
                    ContactMode::Autonomous => nu,
                };
                let per_target = (s_w + delta_p * xi1 * f64::from(h)) / n as f64;
                self.lower[w.0][j] += dt * f64::from(missing) * per_target;
            }
        }
    }

    fn finish(self, xi2: f64) -> EnvelopeTally {
        EnvelopeTally {
            pieces: self.pieces.iter().map(|v| v.iter().map(|p| p.index() as u16).collect()).collect(),
            observed: self.observed,
            expected_lower: self.lower,
            xi2,
        }
    }
}

/// A simulation in progress.
pub struct Simulator<T> {
    pub state: NetworkState<T>,
    swarms: Vec<SwarmSpec<T>>,
    params: NetworkParams<T>,
    policy: PolicyConfig,
    rng: SimRng,
    seed_rates: Vec<T>,
    master: PieceSet,
    counters: Counters,
    sojourns: Vec<Sojourn<T>>,
    envelope: Option<EnvelopeAcc>,
    peak: Vec<u32>,
    emptied_at: Option<T>,
    coverage: Vec<Option<T>>,
}

impl<T: Scalar> Simulator<T> {
    pub fn new(config: &RunConfig<T>) -> Result<Self, ConfigError> {
        config.validate()?;
        let topo = Topology::new(&config.swarms).map_err(|e| ConfigError {
            violations: vec![Violation { path: "swarms".into(), message: e.to_string() }],
        })?;
        let topo = Arc::new(topo);
        let mut state = NetworkState::new(Arc::clone(&topo));
        let ix = |id: &str| topo.index_of(id).expect("validated swarm id");
        match &config.initial {
            InitialState::Empty => {}
            InitialState::OneClub { swarms } => {
                for (id, club) in swarms {
                    let w = ix(id);
                    let mut cache = *topo.file(w);
                    cache.remove(PieceId::new(club.missing).expect("validated piece"));
                    for _ in 0..club.size {
                        state.add_peer(w, cache, T::zero()).expect("one-club cache is admissible");
                    }
                }
            }
            InitialState::FlashCrowd { swarms } => {
                for (id, &size) in swarms {
                    let w = ix(id);
                    for _ in 0..size {
                        state.arrive(w);
                    }
                }
            }
            InitialState::Explicit { peers } => {
                for p in peers {
                    let w = ix(&p.swarm);
                    for _ in 0..p.count {
                        state.add_peer(w, p.cache, T::zero()).expect("validated cache");
                    }
                }
            }
        }
        let n = topo.len();
        let mut sim = Simulator {
            envelope: config.track_push_rates.then(|| EnvelopeAcc::new(&topo)),
            master: topo.master(),
            seed_rates: seed_rates(&config.swarms, &config.params),
            swarms: config.swarms.clone(),
            params: config.params.clone(),
            policy: config.policy,
            rng: SimRng::seed_from(config.rng_seed),
            counters: Counters::new(n),
            sojourns: Vec::new(),
            peak: vec![0; n],
            emptied_at: None,
            coverage: vec![None; n],
            state,
        };
        sim.note_milestones();
        Ok(sim)
    }

    pub fn swarms(&self) -> &[SwarmSpec<T>] {
        &self.swarms
    }

    pub fn params(&self) -> &NetworkParams<T> {
        &self.params
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn sojourns(&self) -> &[Sojourn<T>] {
        &self.sojourns
    }

    pub fn total_rate(&self) -> T {
        total_rate(&self.state, &self.swarms, &self.params)
    }

    /// Draw the next holding time, move the clock and resolve one event.
    ///
    /// Returns `None` when no clock can fire.
    pub fn advance(&mut self) -> Option<(EventKind, T)> {
        let rate = self.total_rate();
        if rate <= T::zero() {
            return None;
        }
        let dt = self.rng.exp(rate);
        self.accumulate(dt);
        let t = self.state.clock() + dt;
        self.state.set_clock(t);
        let kind = self.fire();
        Some((kind, dt))
    }

    fn accumulate(&mut self, dt: T) {
        if let Some(env) = &mut self.envelope {
            env.accumulate(&self.state, &self.params, &self.seed_rates, dt.as_f64());
        }
    }

    fn pick_event(&mut self) -> EventKind {
        let total = self.total_rate();
        let mut u = T::of(self.rng.unit()) * total;
        let mut last = None;
        macro_rules! try_clock {
            ($rate:expr, $kind:expr) => {
                let r = $rate;
                if r > T::zero() {
                    if u < r {
                        return $kind;
                    }
                    #[allow(unused_assignments)]
                    {
                        u = u - r;
                    }
                    last = Some($kind);
                }
            };
        }
        for (w, s) in self.swarms.iter().enumerate() {
            try_clock!(s.lambda, EventKind::Arrival(SwarmIx(w)));
        }
        match self.params.mode {
            ContactMode::Shared => {
                try_clock!(self.params.seed_total(), EventKind::SeedTick(None));
            }
            ContactMode::Autonomous => {
                for w in 0..self.swarms.len() {
                    try_clock!(self.seed_rates[w], EventKind::SeedTick(Some(SwarmIx(w))));
                }
            }
        }
        let x = T::of_count(self.state.total_population());
        try_clock!(x * T::of_count(self.params.tft_links()) * self.params.mu, EventKind::TitForTatTick);
        if self.params.y_opt {
            try_clock!(x * self.params.mu_hat, EventKind::UnchokeTick);
        }
        // rounding left `u` past the end: take the last clock with positive rate
        last.expect("total rate is positive")
    }

    /// Pick the clock that fired and resolve it at the current time.
    pub fn fire(&mut self) -> EventKind {
        let kind = self.pick_event();
        self.counters.events += 1;
        let out = match kind {
            EventKind::Arrival(w) => {
                self.counters.arrivals[w.0] += 1;
                self.state.arrive(w);
                EventOutcome::default()
            }
            EventKind::SeedTick(target) => {
                self.counters.seed_ticks += 1;
                let r = match target {
                    None => {
                        let n = self.state.total_population();
                        (n > 0).then(|| self.state.nth_peer(self.rng.index(n)).expect("index within roster"))
                    }
                    Some(w) => {
                        let n = self.state.population(w);
                        (n > 0).then(|| PeerRef { swarm: w, slot: self.rng.index(n) })
                    }
                };
                match r {
                    Some(r) => self.resolve_unchoke(Pusher::Seed, r),
                    None => EventOutcome { noop: true, ..Default::default() },
                }
            }
            EventKind::TitForTatTick | EventKind::UnchokeTick => {
                if kind == EventKind::TitForTatTick {
                    self.counters.tit_for_tat_ticks += 1;
                } else {
                    self.counters.unchoke_ticks += 1;
                }
                match self.pick_pair() {
                    Some((a, b)) if kind == EventKind::TitForTatTick => self.resolve_tit_for_tat(a, b),
                    Some((a, b)) => self.resolve_unchoke(Pusher::Peer(a), b),
                    None => EventOutcome { noop: true, ..Default::default() },
                }
            }
        };
        if out.noop {
            self.counters.noop_ticks += 1;
        }
        self.note_milestones();
        kind
    }

    /// Uniform initiator, then a uniform distinct target among the peers it can reach.
    fn pick_pair(&mut self) -> Option<(PeerRef, PeerRef)> {
        let n = self.state.total_population();
        if n < 2 && self.params.mode == ContactMode::Shared {
            return None;
        }
        if n == 0 {
            return None;
        }
        let i = self.rng.index(n);
        let a = self.state.nth_peer(i).expect("index within roster");
        match self.params.mode {
            ContactMode::Shared => {
                let mut j = self.rng.index(n - 1);
                if j >= i {
                    j += 1;
                }
                Some((a, self.state.nth_peer(j).expect("index within roster")))
            }
            ContactMode::Autonomous => {
                let m = self.state.population(a.swarm);
                if m < 2 {
                    return None;
                }
                let mut j = self.rng.index(m - 1);
                if j >= a.slot {
                    j += 1;
                }
                Some((a, PeerRef { swarm: a.swarm, slot: j }))
            }
        }
    }

    /// Profile `from` shows to a peer of swarm `to`.
    fn revealed(&self, from: Pusher, to: SwarmIx) -> PieceSet {
        match from {
            Pusher::Seed => self.master,
            Pusher::Peer(r) => {
                if self.state.topology().uploads(r.swarm, to) {
                    self.state.peer(r).cache
                } else {
                    PieceSet::EMPTY
                }
            }
        }
    }

    /// Choose the piece for a committed push; the state is not modified.
    fn choose(&mut self, revealed: PieceSet, target: PeerRef) -> Option<PieceId> {
        let cache = self.state.peer(target).cache;
        let w = target.swarm;
        self.counters.pushes += 1;
        if let Some(env) = &mut self.envelope {
            env.observe(w, (*self.state.topology().file(w) - cache) & revealed);
        }
        let ctx = PushContext {
            state: &self.state,
            swarms: &self.swarms,
            params: &self.params,
            revealed,
            target_swarm: w,
            target_cache: cache,
        };
        let out = transferable_set(&ctx, &self.policy, &mut self.rng);
        let c = &mut self.counters;
        match out.branch {
            Branch::Rare => c.rare += 1,
            Branch::NonRare => c.nonrare_accepted += 1,
            Branch::Extra => c.extra += 1,
            Branch::Nothing => c.empty_pushes += 1,
        }
        if out.suppressed {
            c.nonrare_suppressed += 1;
        }
        out.piece
    }

    fn apply(&mut self, downloads: &[(PeerRef, PieceId)]) -> u8 {
        let t = self.state.clock();
        let gone = self.state.apply_downloads(downloads);
        for rec in &gone {
            self.counters.departures[rec.swarm.0] += 1;
            self.sojourns.push(Sojourn { swarm: rec.swarm, arrival: rec.arrival_time, departure: t });
        }
        gone.len() as u8
    }

    /// One-directional push from `from` to `target`.
    pub fn resolve_unchoke(&mut self, from: Pusher, target: PeerRef) -> EventOutcome {
        let revealed = self.revealed(from, target.swarm);
        let allied = match from {
            Pusher::Seed => true,
            Pusher::Peer(r) => self.state.topology().uploads(r.swarm, target.swarm),
        };
        if !allied {
            return EventOutcome::default();
        }
        match self.choose(revealed, target) {
            Some(p) => {
                let departures = self.apply(&[(target, p)]);
                EventOutcome { pushes: 1, transfers: 1, departures, noop: false }
            }
            None => EventOutcome { pushes: 1, ..Default::default() },
        }
    }

    /// Two-sided contact: both push decisions and piece choices are made
    /// against the pre-contact state, then applied as one transition.
    pub fn resolve_tit_for_tat(&mut self, a: PeerRef, b: PeerRef) -> EventOutcome {
        let topo = self.state.topology();
        let (sa, sb) = (self.state.peer(a).cache, self.state.peer(b).cache);
        let a_to_b = topo.uploads(a.swarm, b.swarm);
        let b_to_a = topo.uploads(b.swarm, a.swarm);
        let shown_a = if a_to_b { sa } else { PieceSet::EMPTY };
        let shown_b = if b_to_a { sb } else { PieceSet::EMPTY };
        let benefit_a = !((shown_b & *topo.file(a.swarm)) - sa).is_empty();
        let benefit_b = !((shown_a & *topo.file(b.swarm)) - sb).is_empty();
        let p = self.params.p.as_f64();
        let forced = self.params.scalability_mode;
        let commit = |benefit: bool, allied: bool, other_empty: bool, rng: &mut SimRng| {
            allied && (benefit || (forced && other_empty) || rng.bernoulli(p))
        };
        let push_a = commit(benefit_a, a_to_b, sb.is_empty(), &mut self.rng);
        let push_b = commit(benefit_b, b_to_a, sa.is_empty(), &mut self.rng);

        let mut out = EventOutcome::default();
        let mut downloads = [(a, PieceId::new(1).expect("piece 1")); 2];
        let mut n = 0;
        if push_a {
            out.pushes += 1;
            if let Some(piece) = self.choose(shown_a, b) {
                downloads[n] = (b, piece);
                n += 1;
            }
        }
        if push_b {
            out.pushes += 1;
            if let Some(piece) = self.choose(shown_b, a) {
                downloads[n] = (a, piece);
                n += 1;
            }
        }
        if n == 2 {
            self.counters.two_sided_exchanges += 1;
        }
        out.transfers = n as u8;
        if n > 0 {
            out.departures = self.apply(&downloads[..n]);
        }
        out
    }

    fn note_milestones(&mut self) {
        let t = self.state.clock();
        if self.emptied_at.is_none() && self.state.total_population() == 0 {
            self.emptied_at = Some(t);
        }
        for w in self.state.topology().swarms() {
            let table = self.state.table(w);
            self.peak[w.0] = self.peak[w.0].max(table.population());
            if self.coverage[w.0].is_none() && table.nu_min() >= 1 {
                self.coverage[w.0] = Some(t);
            }
        }
    }

    fn sample(&self, t: T) -> Sample<T> {
        Sample { t, swarms: self.state.topology().swarms().map(|w| SwarmSample::of_table(self.state.table(w))).collect() }
    }

    fn all_arrivals_off(&self) -> bool {
        self.swarms.iter().all(|s| s.lambda <= T::zero())
    }

    /// Run until `t_end`, or until the roster empties when no swarm has arrivals.
    pub fn run_until(&mut self, t_end: T, sample_interval: T) -> Vec<Sample<T>> {
        let mut samples = vec![self.sample(self.state.clock())];
        let mut k: u64 = 1;
        let grid = |k: u64| T::of_count(k) * sample_interval;
        loop {
            let now = self.state.clock();
            if now >= t_end {
                break;
            }
            if self.all_arrivals_off() && self.state.total_population() == 0 {
                if samples.last().is_some_and(|s| s.t < now) {
                    samples.push(self.sample(now));
                }
                break;
            }
            let rate = self.total_rate();
            if rate <= T::zero() {
                break;
            }
            let dt = self.rng.exp(rate);
            let next = now + dt;
            let stop = next > t_end;
            let until = if stop { t_end } else { next };
            self.accumulate(until - now);
            while grid(k) <= until && (stop || grid(k) < next) {
                samples.push(self.sample(grid(k)));
                k += 1;
            }
            self.state.set_clock(until);
            if stop {
                break;
            }
            self.fire();
        }
        samples
    }

    pub fn into_record(self, samples: Vec<Sample<T>>, sample_interval: T) -> TrajectoryRecord<T> {
        let topo = self.state.topology();
        TrajectoryRecord {
            swarm_ids: topo.ids.clone(),
            file_sizes: topo.files.iter().map(PieceSet::len).collect(),
            sample_interval,
            samples,
            final_state: FinalSummary {
                clock: self.state.clock(),
                populations: topo.swarms().map(|w| self.state.population(w) as u32).collect(),
                peak_populations: self.peak.clone(),
                emptied_at: self.emptied_at,
                coverage_time: self.coverage.clone(),
            },
            envelope: self.envelope.map(|e| e.finish(self.params.xi2().as_f64())),
            sojourns: self.sojourns,
            counters: self.counters,
        }
    }
}

/// Simulate `config` from its initial state to its horizon.
pub fn run<T: Scalar>(config: &RunConfig<T>) -> Result<TrajectoryRecord<T>, ConfigError> {
    let mut sim = Simulator::new(config)?;
    let samples = sim.run_until(config.t_end, config.sample_interval);
    Ok(sim.into_record(samples, config.sample_interval))
}
