//! Oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use swarmlab::harness::{resolve_preset, run_replications, swarms_with_behavior, variant_seed, Behavior};
use swarmlab::output::{write_sojourns_csv, write_trajectory_csv};
use swarmlab::policy::{sharing_factor, transferable_set};
use swarmlab::{
    derive_constants, lyapunov_value, ExplicitPeer, InitialState, LyapunovConfig, NetworkParams, NetworkState,
    OneClubSpec, Overrides, PieceId, PieceSet, PolicyConfig, PolicyKind, PushContext, RunConfig, SimRng, Simulator,
    SwarmIx, SwarmSpec, Topology, ZetaVariant,
};

pub fn piece(i: usize) -> PieceId {
    PieceId::new(i).unwrap()
}

pub fn set(v: &[usize]) -> PieceSet {
    v.iter().map(|&i| piece(i)).collect()
}

// ---- event-level fuzzing ----

pub fn fuzz_config(behavior: Behavior, kind: PolicyKind, seed: u64, p: f64, y_opt: bool, scale: f64) -> RunConfig<f64> {
    let mut params = NetworkParams::new(1.0, 1.0 / 3.0, 3, 0.5, p, y_opt);
    let files = [PieceSet::range(1, 6), PieceSet::range(4, 9)];
    let swarms = swarms_with_behavior(&files, &[2.0 * scale, 1.5 * scale], behavior, &mut params);
    let mut clubs = BTreeMap::new();
    clubs.insert("W1".to_string(), OneClubSpec { missing: 2, size: 8 });
    RunConfig {
        params,
        swarms,
        policy: PolicyConfig { kind, zeta_variant: ZetaVariant::Standard, tms_threshold: Some(3) },
        t_end: 1e6,
        rng_seed: seed,
        initial: InitialState::OneClub { swarms: clubs },
        sample_interval: 100.0,
        track_push_rates: false,
    }
}

/// `P_W ≤ (K_W − 1)|x|_W` and `m̄_W ≤ M_W ≤ (K_W − 1) m̄_W` for every swarm.
pub fn check_bounds(state: &NetworkState<f64>) -> Result<(), String> {
    for w in state.topology().swarms() {
        let t = state.table(w);
        let k = t.k() as u64;
        let m = t.summary();
        let x = u64::from(t.population());
        if m.total > (k - 1) * x {
            return Err(format!("P = {} exceeds (K-1)|x| = {}", m.total, (k - 1) * x));
        }
        let mbar = u64::from(m.mbar);
        if !(mbar <= m.total_mismatch && m.total_mismatch <= (k - 1) * mbar) {
            return Err(format!("mismatch bounds fail: mbar {mbar}, M {}", m.total_mismatch));
        }
    }
    Ok(())
}

/// Audit the tables and the chunk-count bounds after each of `events` events.
pub fn fuzz_run(cfg: &RunConfig<f64>, events: usize) -> Result<usize, String> {
    let mut sim = Simulator::new(cfg).map_err(|e| e.to_string())?;
    for step in 0..events {
        if sim.advance().is_none() {
            return Ok(step);
        }
        let audit = sim.state.audit();
        if !audit.is_clean() {
            return Err(format!("step {step}: {audit:?}"));
        }
        check_bounds(&sim.state).map_err(|e| format!("step {step}: {e}"))?;
    }
    Ok(events)
}

// ---- brute-force transferable set ----

pub struct Support {
    pub pieces: PieceSet,
    pub none_possible: bool,
    /// Pieces of `W` that can only come out of the sharing-factor draw.
    pub nonrare: PieceSet,
}

/// Every piece the selection rules may return, computed from raw caches.
#[allow(clippy::too_many_arguments)]
pub fn brute_support(
    caches: &[PieceSet],
    file: PieceSet,
    dl: PieceSet,
    revealed: PieceSet,
    target: PieceSet,
    policy: &PolicyConfig,
    zeta_positive: bool,
    zeta_one: bool,
) -> Support {
    let counts: BTreeMap<PieceId, usize> =
        file.iter().map(|p| (p, caches.iter().filter(|c| c.contains(p)).count())).collect();
    let hi = counts.values().copied().max().unwrap_or(0);
    let lo = counts.values().copied().min().unwrap_or(0);
    let rare: PieceSet = if hi == lo { file } else { file.iter().filter(|p| counts[p] < hi).collect() };
    let novel_w: PieceSet = file.iter().filter(|&p| revealed.contains(p) && !target.contains(p)).collect();
    let novel_x: PieceSet =
        dl.iter().filter(|&p| revealed.contains(p) && !target.contains(p) && !file.contains(p)).collect();
    let novel_rare: PieceSet = novel_w.iter().filter(|&p| rare.contains(p)).collect();
    let rarest_of = |s: &PieceSet| -> PieceSet {
        let m = s.iter().map(|p| counts[&p]).min();
        s.iter().filter(|p| Some(counts[p]) == m).collect()
    };
    let only = |pieces: PieceSet| Support { pieces, none_possible: false, nonrare: PieceSet::EMPTY };
    let fallback = || Support { pieces: novel_x, none_possible: novel_x.is_empty(), nonrare: PieceSet::EMPTY };
    if novel_w.is_empty() {
        return fallback();
    }
    let ms = || if novel_rare.is_empty() { fallback() } else { only(novel_rare) };
    match policy.kind {
        PolicyKind::RfwPms | PolicyKind::RnwPms => {
            if !novel_rare.is_empty() {
                return only(if policy.kind == PolicyKind::RfwPms { rarest_of(&novel_rare) } else { novel_rare });
            }
            let mut s = if zeta_one { only(PieceSet::EMPTY) } else { fallback() };
            if zeta_positive {
                s.pieces = s.pieces | novel_w;
                s.nonrare = novel_w;
            }
            s
        }
        PolicyKind::Rf => only(rarest_of(&novel_w)),
        PolicyKind::Rn => only(novel_w),
        PolicyKind::Ms => ms(),
        PolicyKind::Tms => {
            if (hi - lo) as u32 > policy.threshold_for(file.len()) {
                ms()
            } else {
                only(novel_w)
            }
        }
    }
}

pub fn random_subset(rng: &mut SimRng, of: &PieceSet, density: f64) -> PieceSet {
    of.iter().filter(|_| rng.bernoulli(density)).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct ContextSpec {
    pub seed: u64,
    pub k: usize,
    pub extras: usize,
    pub peers: usize,
    pub density: f64,
    pub alpha: f64,
    pub beta: f64,
    pub kind: PolicyKind,
    pub flash: bool,
    pub threshold: u32,
}

impl ContextSpec {
    pub fn random(rng: &mut SimRng, seed: u64) -> Self {
        let beta = match rng.index(3) {
            0 => 0.0,
            1 => 0.01 + 5.0 * rng.unit(),
            _ => 1e12,
        };
        ContextSpec {
            seed,
            k: 1 + rng.index(9),
            extras: rng.index(4),
            peers: rng.index(12),
            density: 0.05 + 0.9 * rng.unit(),
            alpha: 0.1 + 1.9 * rng.unit(),
            beta,
            kind: PolicyKind::ALL[rng.index(6)],
            flash: rng.bernoulli(0.5),
            threshold: rng.index(4) as u32,
        }
    }
}

/// Build one random population and check `contexts` random pushes into it.
pub fn check_contexts(spec: &ContextSpec, contexts: usize) -> Result<(), String> {
    let mut rng = SimRng::seed_from(spec.seed);
    let k = spec.k;
    let file = PieceSet::first_n(k);
    let dl = PieceSet::first_n(k + spec.extras);
    let mut s = SwarmSpec::<f64>::selfish("W", file, 1.0);
    s.downloadable = dl;
    s.alpha = spec.alpha;
    s.beta = spec.beta;
    let swarms = vec![s];
    let topo = Arc::new(Topology::new(&swarms).unwrap());
    let mut state = NetworkState::<f64>::new(topo);
    let mut caches = Vec::new();
    for _ in 0..spec.peers {
        let mut c = random_subset(&mut rng, &dl, spec.density);
        if file.is_subset(&c) {
            c.remove(file.nth(rng.index(k)).unwrap());
        }
        state.add_peer(SwarmIx(0), c, 0.0).unwrap();
        caches.push(c);
    }
    let params = NetworkParams::new(1.0, 1.0 / 3.0, 3, 1.0, 0.5, true);
    let policy = PolicyConfig {
        kind: spec.kind,
        zeta_variant: if spec.flash { ZetaVariant::Flashcrowd } else { ZetaVariant::Standard },
        tms_threshold: Some(spec.threshold),
    };
    for _ in 0..contexts {
        let mut target = random_subset(&mut rng, &dl, spec.density);
        if file.is_subset(&target) {
            target.remove(file.nth(rng.index(k)).unwrap());
        }
        let revealed = if rng.bernoulli(0.2) { dl } else { random_subset(&mut rng, &dl, spec.density) };
        let ctx =
            PushContext { state: &state, swarms: &swarms, params: &params, revealed, target_swarm: SwarmIx(0), target_cache: target };
        let zetas: Vec<f64> = (file & (revealed - target)).iter().map(|n| sharing_factor(&ctx, n, policy.zeta_variant)).collect();
        for &z in &zetas {
            if !(0.0..=1.0).contains(&z) || (spec.beta == 0.0 && z != 0.0) {
                return Err(format!("sharing factor {z} with β = {}", spec.beta));
            }
        }
        let zeta_positive = zetas.iter().any(|&z| z > 0.0);
        let zeta_one = zetas.iter().all(|&z| z >= 1.0);
        let support = brute_support(&caches, file, dl, revealed, target, &policy, zeta_positive, zeta_one);
        let out = transferable_set(&ctx, &policy, &mut rng);
        match out.piece {
            Some(p) => {
                if !(revealed.contains(p) && !target.contains(p) && dl.contains(p)) {
                    return Err(format!("{}: piece {p} is not novel and offered", spec.kind));
                }
                if !support.pieces.contains(p) {
                    return Err(format!("{}: chose {p}, allowed {:?}", spec.kind, support.pieces));
                }
                if spec.beta == 0.0 && support.nonrare.contains(p) {
                    return Err(format!("{}: non-rare piece {p} passed full suppression", spec.kind));
                }
            }
            None if !support.none_possible => {
                return Err(format!("{}: returned nothing, allowed {:?}", spec.kind, support.pieces));
            }
            None => {}
        }
    }
    Ok(())
}

/// `(m̄, d, ζ)` for every piece of a random single-swarm state.
pub fn zeta_points(seed: u64, k: usize, alpha: f64, beta: f64, flash: bool, population: usize) -> Vec<(u32, u32, f64)> {
    let mut rng = SimRng::seed_from(seed);
    let file = PieceSet::first_n(k);
    let mut spec = SwarmSpec::<f64>::selfish("W", file, 1.0);
    spec.alpha = alpha;
    spec.beta = beta;
    let swarms = vec![spec];
    let topo = Arc::new(Topology::new(&swarms).unwrap());
    let mut state = NetworkState::<f64>::new(topo);
    let density = rng.unit();
    for _ in 0..population {
        let mut c = random_subset(&mut rng, &file, density);
        if file.is_subset(&c) {
            c.remove(file.nth(rng.index(k)).unwrap());
        }
        state.add_peer(SwarmIx(0), c, 0.0).unwrap();
    }
    let params = NetworkParams::new(1.0, 1.0 / 3.0, 3, 1.0, 0.5, true);
    let ctx = PushContext {
        state: &state,
        swarms: &swarms,
        params: &params,
        revealed: file,
        target_swarm: SwarmIx(0),
        target_cache: PieceSet::EMPTY,
    };
    let variant = if flash { ZetaVariant::Flashcrowd } else { ZetaVariant::Standard };
    let m = state.table(SwarmIx(0)).summary().mbar;
    file.iter().map(|n| (m, state.complementary_count(SwarmIx(0), n), sharing_factor(&ctx, n, variant))).collect()
}

/// Monotonicity of ζ over pairs of points that share everything but `(m̄, d)`.
pub fn check_zeta_monotone(pts: &[(u32, u32, f64)]) -> Result<(), String> {
    for a in pts {
        for b in pts {
            if a.0 <= b.0 && a.1 <= b.1 && a.2 < b.2 - 1e-15 {
                return Err(format!("ζ{a:?} < ζ{b:?}"));
            }
        }
    }
    Ok(())
}

// ---- Lyapunov micro-oracle ----

pub fn lyap_swarm(k: usize, lambda: f64) -> Vec<SwarmSpec<f64>> {
    let mut s = SwarmSpec::selfish("W", PieceSet::first_n(k), lambda);
    s.alpha = 1.0;
    s.beta = 1.5;
    vec![s]
}

pub fn components(swarms: &[SwarmSpec<f64>], caches: &[PieceSet], cfg: &LyapunovConfig<f64>) -> [f64; 3] {
    let topo = Arc::new(Topology::new(swarms).unwrap());
    let mut st = NetworkState::<f64>::new(topo);
    for c in caches {
        st.add_peer(SwarmIx(0), *c, 0.0).unwrap();
    }
    lyapunov_value(&st, cfg).per_swarm[0]
}

/// Exact `QV(x)` for a single RFwPMS swarm, enumerated from the contact rules.
pub struct Micro {
    pub params: NetworkParams<f64>,
    pub swarms: Vec<SwarmSpec<f64>>,
    pub cfg: LyapunovConfig<f64>,
    pub k: usize,
}

impl Micro {
    pub fn v(&self, caches: &[PieceSet]) -> f64 {
        let live: Vec<PieceSet> = caches.iter().copied().filter(|c| c.len() < self.k).collect();
        components(&self.swarms, &live, &self.cfg).iter().sum()
    }

    /// Distribution of the piece moved by a committed push.
    fn push(&self, caches: &[PieceSet], revealed: PieceSet, target: usize) -> Vec<(Option<PieceId>, f64)> {
        let file = PieceSet::first_n(self.k);
        let novel: Vec<PieceId> = (revealed & (file - caches[target])).iter().collect();
        if novel.is_empty() {
            return vec![(None, 1.0)];
        }
        let count = |p: PieceId| caches.iter().filter(|c| c.contains(p)).count();
        let counts: Vec<usize> = file.iter().map(count).collect();
        let (hi, lo) = (*counts.iter().max().unwrap(), *counts.iter().min().unwrap());
        let rare: Vec<PieceId> = novel.iter().copied().filter(|&p| hi == lo || count(p) < hi).collect();
        if !rare.is_empty() {
            let m = rare.iter().map(|&p| count(p)).min().unwrap();
            let best: Vec<PieceId> = rare.into_iter().filter(|&p| count(p) == m).collect();
            let w = 1.0 / best.len() as f64;
            return best.into_iter().map(|p| (Some(p), w)).collect();
        }
        // no other swarm uploads here, so the complementary count is zero
        let s = &self.swarms[0];
        let d: f64 = 0.0;
        let zeta = (-((hi - lo) as f64 + d.powf(s.alpha)) / (s.beta * self.k as f64)).exp();
        let w = 1.0 / novel.len() as f64;
        novel.iter().flat_map(|&n| [(Some(n), w * zeta), (None, w * (1.0 - zeta))]).collect()
    }

    fn with(caches: &[PieceSet], moves: &[(usize, Option<PieceId>)]) -> Vec<PieceSet> {
        let mut c = caches.to_vec();
        for &(i, p) in moves {
            if let Some(p) = p {
                c[i].insert(p);
            }
        }
        c
    }

    /// `(q(x), Σ_y q(x, y)(V(y) − V(x)))`.
    pub fn qv(&self, caches: &[PieceSet]) -> (f64, f64) {
        let v0 = self.v(caches);
        let n = caches.len();
        let pr = &self.params;
        let file = PieceSet::first_n(self.k);
        let lambda = self.swarms[0].lambda;
        let mut arrived = caches.to_vec();
        arrived.push(PieceSet::EMPTY);
        let mut q = lambda;
        let mut qv = lambda * (self.v(&arrived) - v0);

        let seed = f64::from(pr.links) * pr.seed_rate;
        q += seed;
        for t in 0..n {
            for (p, w) in self.push(caches, file, t) {
                qv += seed / n as f64 * w * (self.v(&Self::with(caches, &[(t, p)])) - v0);
            }
        }
        if n >= 2 {
            let pair = 1.0 / (n * (n - 1)) as f64;
            let tft = n as f64 * f64::from(pr.tft_links()) * pr.mu;
            let unchoke = if pr.y_opt { n as f64 * pr.mu_hat } else { 0.0 };
            q += tft + unchoke;
            let commit = |k: usize, other: usize| if (caches[other] & (file - caches[k])).is_empty() { pr.p } else { 1.0 };
            for a in 0..n {
                for b in 0..n {
                    if a == b {
                        continue;
                    }
                    for (p, w) in self.push(caches, caches[a], b) {
                        qv += unchoke * pair * w * (self.v(&Self::with(caches, &[(b, p)])) - v0);
                    }
                    let (ca, cb) = (commit(a, b), commit(b, a));
                    let mut da = vec![(None, 1.0 - ca)];
                    da.extend(self.push(caches, caches[a], b).into_iter().map(|(p, w)| (p, w * ca)));
                    let mut db = vec![(None, 1.0 - cb)];
                    db.extend(self.push(caches, caches[b], a).into_iter().map(|(p, w)| (p, w * cb)));
                    for &(pa, wa) in &da {
                        for &(pb, wb) in &db {
                            let next = Self::with(caches, &[(b, pa), (a, pb)]);
                            qv += tft * pair * wa * wb * (self.v(&next) - v0);
                        }
                    }
                }
            }
        }
        (q, qv)
    }
}

pub struct DriftComparison {
    pub exact: f64,
    pub monte_carlo: f64,
    pub sigma: f64,
}

/// Exact drift against `q(x)·E[ΔV at the first jump]` over `samples` first jumps.
pub fn drift_comparison(params: NetworkParams<f64>, k: usize, lambda: f64, caches: &[PieceSet], samples: u64) -> DriftComparison {
    let swarms = lyap_swarm(k, lambda);
    let cfg = derive_constants(&params, &swarms, 0.5, 0.1).unwrap();
    assert!(cfg.is_finite());
    let micro = Micro { params: params.clone(), swarms: swarms.clone(), cfg: cfg.clone(), k };
    let (q, exact) = micro.qv(caches);
    let peers: Vec<ExplicitPeer> = caches.iter().map(|c| ExplicitPeer { swarm: "W".into(), cache: *c, count: 1 }).collect();
    let mut run = RunConfig {
        params,
        swarms,
        policy: PolicyConfig::new(PolicyKind::RfwPms),
        t_end: 1.0,
        rng_seed: 0,
        initial: InitialState::Explicit { peers },
        sample_interval: 1.0,
        track_push_rates: false,
    };
    let v0 = micro.v(caches);
    let mut deltas = Vec::with_capacity(samples as usize);
    for s in 0..samples {
        run.rng_seed = s;
        let mut sim = Simulator::new(&run).unwrap();
        assert!((sim.total_rate() - q).abs() < 1e-12 * q);
        sim.advance().unwrap();
        deltas.push(lyapunov_value(&sim.state, &cfg).total - v0);
    }
    let n = samples as f64;
    let mean = deltas.iter().sum::<f64>() / n;
    let sd = (deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    DriftComparison { exact, monte_carlo: q * mean, sigma: q * sd / n.sqrt() }
}

// ---- replay ----

/// Trajectory and sojourn CSV bytes of every replication of a preset.
pub fn csv_bytes(name: &str, overrides: &Overrides, seed: u64) -> Vec<(Vec<u8>, Vec<u8>)> {
    let p = resolve_preset(name, overrides).unwrap();
    let mut out = Vec::new();
    for v in &p.variants {
        let lyap = derive_constants(&v.config.params, &v.config.swarms, 0.5, 0.1).ok();
        for rec in run_replications(&v.config, p.replications, variant_seed(seed, &v.label)).unwrap() {
            let (mut a, mut b) = (Vec::new(), Vec::new());
            write_trajectory_csv(&rec, lyap.as_ref(), &mut a).unwrap();
            write_sojourns_csv(&rec, &mut b).unwrap();
            out.push((a, b));
        }
    }
    out
}

/// The three short preset runs used for replay checks.
pub fn replay_cases() -> Vec<(&'static str, Overrides)> {
    vec![
        ("fps_hard_tft", Overrides { t_end: Some(200.0), replications: Some(2), ..Default::default() }),
        ("stability_two_swarm_autonomous", Overrides { t_end: Some(40.0), replications: Some(2), ..Default::default() }),
        ("flash_crowd_large", Overrides { only: Some(vec!["ms".into(), "rfwpms".into()]), replications: Some(2), ..Default::default() }),
    ]
}
