//! Named scenario presets, replication management and summary statistics.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{run, ConfigError, InitialState, OneClubSpec, RunConfig};
use crate::model::{ContactMode, NetworkParams, SwarmIx, SwarmSpec};
use crate::pieces::PieceSet;
use crate::policy::{PolicyConfig, PolicyKind, ZetaVariant};
use crate::record::TrajectoryRecord;
use crate::rng::derive_stream_seed;
use crate::stats::{batch_means, linear_fit, mean_ci, Estimate, LinearFit, Verdict};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("unknown preset `{name}`{}", suggest(.suggestions))]
    UnknownPreset { name: String, suggestions: Vec<String> },
    #[error("invalid override: {0}")]
    BadOverride(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

fn suggest(s: &[String]) -> String {
    if s.is_empty() {
        String::new()
    } else {
        format!("; did you mean {}?", s.join(", "))
    }
}

/// How swarms interact with one another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    /// Upload to every swarm and store any piece of the master-file.
    Altruistic,
    /// Upload to every swarm but store only the own file.
    Opportunistic,
    Selfish,
    /// Contacts stay within the swarm; the seed splits its rate evenly.
    Autonomous,
}

impl Behavior {
    pub const ALL: [Behavior; 4] = [Behavior::Altruistic, Behavior::Opportunistic, Behavior::Selfish, Behavior::Autonomous];

    pub fn name(self) -> &'static str {
        match self {
            Behavior::Altruistic => "altruistic",
            Behavior::Opportunistic => "opportunistic",
            Behavior::Selfish => "selfish",
            Behavior::Autonomous => "autonomous",
        }
    }
}

/// Swarm list and contact mode for files `files` (ids `W1`, `W2`, ...).
pub fn swarms_with_behavior(
    files: &[PieceSet],
    lambdas: &[f64],
    behavior: Behavior,
    params: &mut NetworkParams<f64>,
) -> Vec<SwarmSpec<f64>> {
    let master = files.iter().fold(PieceSet::EMPTY, |a, f| a | *f);
    let master = PieceSet::first_n(master.max_index());
    let ids: Vec<String> = (1..=files.len()).map(|i| format!("W{i}")).collect();
    let mut out = Vec::new();
    for (i, (&file, &lambda)) in files.iter().zip(lambdas).enumerate() {
        let mut s = SwarmSpec::selfish(&ids[i], file, lambda);
        match behavior {
            Behavior::Altruistic => {
                s.allies = ids.clone();
                s.downloadable = master;
            }
            Behavior::Opportunistic => s.allies = ids.clone(),
            Behavior::Selfish | Behavior::Autonomous => {}
        }
        out.push(s);
    }
    if behavior == Behavior::Autonomous {
        params.mode = ContactMode::Autonomous;
        let share = params.seed_rate / files.len() as f64;
        params.seed_split = ids.iter().map(|id| (id.clone(), share)).collect();
    }
    out
}

/// Pieces `{lo+1, ..., hi}`.
fn span(lo: usize, hi: usize) -> PieceSet {
    PieceSet::range(lo + 1, hi)
}

/// One configuration within a preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub label: String,
    /// File-size parameter of a sweep, when the preset varies it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub config: RunConfig<f64>,
}

/// A value a statistic is expected to reproduce, within a relative tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub variant: String,
    pub swarm: usize,
    pub statistic: String,
    pub value: f64,
    pub rel_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPreset {
    pub name: String,
    pub description: String,
    pub variants: Vec<Variant>,
    pub replications: u32,
    /// Sojourns of peers arriving before this time are discarded.
    pub warmup: f64,
    pub level: f64,
    pub references: Vec<Reference>,
}

impl ScenarioPreset {
    /// SHA-256 of the canonical JSON serialization.
    pub fn content_hash(&self) -> String {
        hash_json(self)
    }
}

pub fn hash_json<S: Serialize>(value: &S) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable");
    hex::encode(Sha256::digest(bytes))
}

/// Confidence level of reported intervals unless overridden.
pub const DEFAULT_LEVEL: f64 = 0.95;

/// Per-invocation adjustments to a preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replications: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_interval: Option<f64>,
    /// Keep only sweep variants with these file sizes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<usize>>,
    /// Keep only variants with these labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub only: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
}

pub struct PresetInfo {
    pub name: &'static str,
    pub description: &'static str,
}

const PRESETS: &[PresetInfo] = &[
    PresetInfo { name: "fps_hard_tft", description: "single swarm, hard tit-for-tat without unchokes: empty peers pile up" },
    PresetInfo { name: "lps_workconserving", description: "rarest-first from an 800-peer one-club with λ > LU: the one-club grows" },
    PresetInfo { name: "stability_two_swarm_altruistic", description: "two altruistic swarms escaping 500-peer one-clubs" },
    PresetInfo { name: "stability_two_swarm_opportunistic", description: "two opportunistic swarms escaping 500-peer one-clubs" },
    PresetInfo { name: "stability_two_swarm_selfish", description: "two selfish swarms escaping 500-peer one-clubs" },
    PresetInfo { name: "stability_two_swarm_autonomous", description: "two autonomous swarms escaping 500-peer one-clubs" },
    PresetInfo { name: "three_swarm_alpha0", description: "three altruistic swarms with α = 0 started in one-clubs" },
    PresetInfo { name: "scalability_table2", description: "steady-state sojourn of two swarms for λ, 4λ, 16λ under every behavior" },
    PresetInfo { name: "sojourn_vs_filesize", description: "steady-state sojourn of two swarms as the file size grows" },
    PresetInfo { name: "ms_comparison_table3", description: "steady-state sojourn of MS, TMS and RFwPMS over file sizes" },
    PresetInfo { name: "flash_crowd_large", description: "500 empty peers, K = 100: flush-out of MS, TMS, RFwPMS, RNwPMS" },
    PresetInfo { name: "flash_crowd_small", description: "100 empty peers, K = 600: both sharing-factor forms" },
];

pub fn list_presets() -> &'static [PresetInfo] {
    PRESETS
}

fn base_run(params: NetworkParams<f64>, swarms: Vec<SwarmSpec<f64>>, policy: PolicyConfig, t_end: f64) -> RunConfig<f64> {
    RunConfig {
        params,
        swarms,
        policy,
        t_end,
        rng_seed: 0,
        initial: InitialState::Empty,
        sample_interval: 1.0,
        track_push_rates: false,
    }
}

fn variant(label: impl Into<String>, k: Option<usize>, config: RunConfig<f64>) -> Variant {
    Variant { label: label.into(), k, config }
}

fn one_club(entries: &[(&str, usize, u32)]) -> InitialState {
    InitialState::OneClub {
        swarms: entries
            .iter()
            .map(|&(id, missing, size)| (id.to_string(), OneClubSpec { missing, size }))
            .collect(),
    }
}

fn flash(id: &str, size: u32) -> InitialState {
    InitialState::FlashCrowd { swarms: BTreeMap::from([(id.to_string(), size)]) }
}

fn reference(variant: &str, swarm: usize, statistic: &str, value: f64, rel_tol: f64) -> Reference {
    Reference { variant: variant.into(), swarm, statistic: statistic.into(), value, rel_tol }
}

fn stability_preset(name: &str, behavior: Behavior) -> ScenarioPreset {
    let mut params = NetworkParams::new(1.0, 1.0 / 3.0, 3, 1.0, 0.0, true);
    let files = [span(0, 15), span(10, 25)];
    let swarms = swarms_with_behavior(&files, &[20.0, 20.0], behavior, &mut params);
    let mut c = base_run(params, swarms, PolicyConfig::new(PolicyKind::RfwPms), 400.0);
    c.initial = one_club(&[("W1", 1, 500), ("W2", 11, 500)]);
    ScenarioPreset {
        name: name.into(),
        description: String::new(),
        variants: vec![variant(behavior.name(), None, c)],
        replications: 2,
        warmup: 0.0,
        level: DEFAULT_LEVEL,
        references: vec![],
    }
}

const TABLE2: [(Behavior, [[f64; 2]; 3]); 4] = [
    (Behavior::Altruistic, [[2.927, 4.400], [3.088, 3.990], [3.134, 3.971]]),
    (Behavior::Opportunistic, [[3.704, 5.042], [3.832, 5.341], [3.956, 5.570]]),
    (Behavior::Selfish, [[4.378, 6.394], [4.590, 6.482], [4.667, 6.604]]),
    (Behavior::Autonomous, [[2.791, 3.769], [2.712, 2.667], [2.788, 2.740]]),
];

/// `(K, MS, TMS, RFwPMS)` steady-state sojourn references.
pub const TABLE3: [(usize, f64, f64, f64); 8] = [
    (2, 6.246, 5.022, 5.178),
    (10, 18.250, 12.546, 12.525),
    (20, 31.741, 23.020, 23.058),
    (40, 55.648, 43.775, 43.750),
    (80, 100.300, 84.374, 84.421),
    (100, 121.804, 104.849, 104.610),
    (200, 226.998, 205.300, 205.176),
    (500, 533.737, 506.480, 506.351),
];

pub const SCALES: [(&str, f64); 3] = [("x1", 1.0), ("x4", 4.0), ("x16", 16.0)];

/// The preset named `name` with its frozen defaults.
pub fn preset(name: &str) -> Result<ScenarioPreset, HarnessError> {
    let rf = PolicyConfig::new(PolicyKind::RfwPms);
    let mut p = match name {
        "fps_hard_tft" => {
            let params = NetworkParams::new(1.0, 1.0 / 3.0, 3, 1.0, 0.0, false);
            let swarms = vec![SwarmSpec::selfish("W", PieceSet::first_n(10), 4.0)];
            ScenarioPreset {
                name: name.into(),
                description: String::new(),
                variants: vec![variant("rfwpms", None, base_run(params, swarms, rf, 1000.0))],
                replications: 3,
                warmup: 0.0,
                level: DEFAULT_LEVEL,
                references: vec![],
            }
        }
        "lps_workconserving" => {
            let params = NetworkParams::new(1.0, 1.0 / 3.0, 3, 1.0, 0.5, false);
            let swarms = vec![SwarmSpec::selfish("W", PieceSet::first_n(10), 6.0)];
            let mut c = base_run(params, swarms, PolicyConfig::new(PolicyKind::Rf), 1000.0);
            c.initial = one_club(&[("W", 1, 800)]);
            c.sample_interval = 5.0;
            ScenarioPreset {
                name: name.into(),
                description: String::new(),
                variants: vec![variant("rf", None, c)],
                replications: 2,
                warmup: 0.0,
                level: DEFAULT_LEVEL,
                references: vec![],
            }
        }
        "stability_two_swarm_altruistic" => stability_preset(name, Behavior::Altruistic),
        "stability_two_swarm_opportunistic" => stability_preset(name, Behavior::Opportunistic),
        "stability_two_swarm_selfish" => stability_preset(name, Behavior::Selfish),
        "stability_two_swarm_autonomous" => stability_preset(name, Behavior::Autonomous),
        "three_swarm_alpha0" => {
            let mut params = NetworkParams::new(1.0, 1.0 / 3.0, 3, 1.0 / 3.0, 0.5, true);
            let files = [span(0, 10), span(6, 15), span(16, 30)];
            let mut swarms = swarms_with_behavior(&files, &[8.0, 4.0, 2.0], Behavior::Altruistic, &mut params);
            for s in &mut swarms {
                s.alpha = 0.0;
            }
            let mut c = base_run(params, swarms, rf, 400.0);
            c.initial = one_club(&[("W1", 1, 300), ("W2", 7, 300), ("W3", 17, 300)]);
            ScenarioPreset {
                name: name.into(),
                description: String::new(),
                variants: vec![variant("altruistic", None, c)],
                replications: 2,
                warmup: 0.0,
                level: DEFAULT_LEVEL,
                references: vec![],
            }
        }
        "scalability_table2" => {
            let mut variants = Vec::new();
            let mut references = Vec::new();
            for (behavior, rows) in TABLE2 {
                for ((scale_name, scale), row) in SCALES.iter().zip(rows) {
                    let mut params = NetworkParams::new(1.0, 1.0 / 3.0, 3, 1.0, 0.5, false);
                    let files = [span(0, 10), span(8, 18)];
                    let lambdas = [4.0 * scale, 2.0 * scale];
                    let swarms = swarms_with_behavior(&files, &lambdas, behavior, &mut params);
                    let label = format!("{}_{scale_name}", behavior.name());
                    variants.push(variant(&label, None, base_run(params, swarms, rf, 1000.0)));
                    for (w, &v) in row.iter().enumerate() {
                        references.push(reference(&label, w, "mean_sojourn", v, 0.2));
                    }
                }
            }
            ScenarioPreset {
                name: name.into(),
                description: String::new(),
                variants,
                replications: 10,
                warmup: 200.0,
                level: DEFAULT_LEVEL,
                references,
            }
        }
        "sojourn_vs_filesize" => {
            let mut variants = Vec::new();
            for behavior in Behavior::ALL {
                for k1 in [10, 20, 30, 40, 50] {
                    let mut params = NetworkParams::new(1.0, 1.0 / 3.0, 3, 1.0, 0.5, true);
                    let files = [span(0, k1), span(k1 / 2, 3 * k1 / 2)];
                    let swarms = swarms_with_behavior(&files, &[6.0, 2.0], behavior, &mut params);
                    let label = format!("{}_k{k1}", behavior.name());
                    variants.push(variant(label, Some(k1), base_run(params, swarms, rf, 1000.0)));
                }
            }
            ScenarioPreset {
                name: name.into(),
                description: String::new(),
                variants,
                replications: 4,
                warmup: 200.0,
                level: DEFAULT_LEVEL,
                references: vec![],
            }
        }
        "ms_comparison_table3" => {
            let mut variants = Vec::new();
            let mut references = Vec::new();
            for (k, ms, tms, rfw) in TABLE3 {
                for (kind, value) in [(PolicyKind::Ms, ms), (PolicyKind::Tms, tms), (PolicyKind::RfwPms, rfw)] {
                    let params = NetworkParams::new(1.0, 1.0, 1, 1.0, 0.5, true);
                    let mut s = SwarmSpec::selfish("W", PieceSet::first_n(k), 4.0);
                    s.beta = 1.7;
                    let label = format!("{}_k{k}", kind.name().to_lowercase());
                    let c = base_run(params, vec![s], PolicyConfig::new(kind), 5000.0);
                    variants.push(variant(&label, Some(k), c));
                    references.push(reference(&label, 0, "mean_sojourn", value, 0.15));
                }
            }
            ScenarioPreset {
                name: name.into(),
                description: String::new(),
                variants,
                replications: 4,
                warmup: 1000.0,
                level: DEFAULT_LEVEL,
                references,
            }
        }
        "flash_crowd_large" => {
            let mut variants = Vec::new();
            for kind in [PolicyKind::Ms, PolicyKind::Tms, PolicyKind::RfwPms, PolicyKind::RnwPms] {
                let params = NetworkParams::new(1.0, 1.0, 1, 1.0, 0.5, true);
                let swarms = vec![SwarmSpec::selfish("W", PieceSet::first_n(100), 0.0)];
                let mut c = base_run(params, swarms, PolicyConfig::new(kind), 20_000.0);
                c.initial = flash("W", 500);
                variants.push(variant(kind.name().to_lowercase(), None, c));
            }
            ScenarioPreset {
                name: name.into(),
                description: String::new(),
                variants,
                replications: 4,
                warmup: 0.0,
                level: DEFAULT_LEVEL,
                references: vec![],
            }
        }
        "flash_crowd_small" => {
            let mut variants = Vec::new();
            let mk = |policy: PolicyConfig, beta: f64| {
                let params = NetworkParams::new(1.0, 1.0, 3, 1.0 / 3.0, 0.5, true);
                let mut s = SwarmSpec::selfish("W", PieceSet::first_n(600), 0.0);
                s.beta = beta;
                let mut c = base_run(params, vec![s], policy, 50_000.0);
                c.initial = flash("W", 100);
                c.sample_interval = 5.0;
                c
            };
            variants.push(variant("rfwpms_standard", None, mk(rf, 1.5)));
            variants.push(variant("ms", None, mk(PolicyConfig::new(PolicyKind::Ms), 1.5)));
            for (label, beta) in [("rfwpms_flashcrowd_b0.2", 0.2), ("rfwpms_flashcrowd_b0.4", 0.4), ("rfwpms_flashcrowd_b0.5", 0.5)] {
                variants.push(variant(label, None, mk(rf.with_zeta(ZetaVariant::Flashcrowd), beta)));
            }
            ScenarioPreset {
                name: name.into(),
                description: String::new(),
                variants,
                replications: 3,
                warmup: 0.0,
                level: DEFAULT_LEVEL,
                references: vec![],
            }
        }
        _ => return Err(unknown(name)),
    };
    p.description = PRESETS.iter().find(|i| i.name == name).map(|i| i.description.to_string()).unwrap_or_default();
    Ok(p)
}

fn unknown(name: &str) -> HarnessError {
    let lname = name.to_lowercase();
    let mut scored: Vec<(usize, &str)> = PRESETS.iter().map(|p| (edit_distance(&lname, p.name), p.name)).collect();
    scored.sort();
    let mut suggestions: Vec<String> = PRESETS
        .iter()
        .filter(|p| !lname.is_empty() && (p.name.contains(&lname) || lname.contains(p.name)))
        .map(|p| p.name.to_string())
        .collect();
    for (d, n) in scored.into_iter().take(3) {
        if d <= n.len() / 2 && !suggestions.iter().any(|s| s == n) {
            suggestions.push(n.to_string());
        }
    }
    HarnessError::UnknownPreset { name: name.into(), suggestions }
}

fn edit_distance(a: &str, b: &str) -> usize {
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.chars().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, &cb) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(ca != cb)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

/// The preset with `overrides` applied and validated.
pub fn resolve_preset(name: &str, overrides: &Overrides) -> Result<ScenarioPreset, HarnessError> {
    let mut p = preset(name)?;
    if let Some(r) = overrides.replications {
        if r == 0 {
            return Err(HarnessError::BadOverride("replications must be at least 1".into()));
        }
        p.replications = r;
    }
    if let Some(level) = overrides.level {
        if !(level > 0.0 && level < 1.0) {
            return Err(HarnessError::BadOverride("level must lie in (0, 1)".into()));
        }
        p.level = level;
    }
    if let Some(ks) = &overrides.k {
        if p.variants.iter().all(|v| v.k.is_none()) {
            return Err(HarnessError::BadOverride(format!("preset `{name}` has no file-size sweep")));
        }
        p.variants.retain(|v| v.k.is_some_and(|k| ks.contains(&k)));
    }
    if let Some(only) = &overrides.only {
        for o in only {
            if !p.variants.iter().any(|v| &v.label == o) {
                return Err(HarnessError::BadOverride(format!("no variant `{o}` in preset `{name}`")));
            }
        }
        p.variants.retain(|v| only.contains(&v.label));
    }
    if p.variants.is_empty() {
        return Err(HarnessError::BadOverride("the selection leaves no variants".into()));
    }
    if let Some(t) = overrides.t_end {
        let old = p.variants[0].config.t_end;
        for v in &mut p.variants {
            v.config.t_end = t;
        }
        if overrides.warmup.is_none() && old > 0.0 {
            p.warmup *= t / old;
        }
    }
    if let Some(w) = overrides.warmup {
        p.warmup = w;
    }
    if let Some(dt) = overrides.sample_interval {
        for v in &mut p.variants {
            v.config.sample_interval = dt;
        }
    }
    let t_end = p.variants.iter().map(|v| v.config.t_end).fold(f64::INFINITY, f64::min);
    if !(p.warmup >= 0.0) || (p.warmup > 0.0 && p.warmup >= t_end) {
        return Err(HarnessError::BadOverride(format!("warmup {} must lie in [0, t_end = {t_end})", p.warmup)));
    }
    for v in &p.variants {
        v.config.validate()?;
    }
    let known: Vec<&str> = p.variants.iter().map(|v| v.label.as_str()).collect();
    p.references.retain(|r| known.contains(&r.variant.as_str()));
    Ok(p)
}

/// Thread pool honoring `SWARMLAB_THREADS`.
fn pool() -> rayon::ThreadPool {
    let n = std::env::var("SWARMLAB_THREADS").ok().and_then(|s| s.trim().parse::<usize>().ok()).unwrap_or(0);
    rayon::ThreadPoolBuilder::new().num_threads(n).build().expect("thread pool")
}

/// Seed of a variant's replication stream, independent of which other
/// variants are selected.
pub fn variant_seed(root: u64, label: &str) -> u64 {
    let h = Sha256::digest(label.as_bytes());
    let tag = u64::from_le_bytes(h[..8].try_into().expect("8 bytes"));
    derive_stream_seed(root, tag)
}

/// Run `replications` independent copies of `config` in parallel; replication
/// `r` uses stream seed `derive_stream_seed(root, r)`.
pub fn run_replications(
    config: &RunConfig<f64>,
    replications: u32,
    root: u64,
) -> Result<Vec<TrajectoryRecord<f64>>, ConfigError> {
    config.validate()?;
    let run_one = |r: u32| {
        let mut c = config.clone();
        c.rng_seed = derive_stream_seed(root, u64::from(r));
        run(&c)
    };
    pool().install(|| (0..replications).into_par_iter().map(run_one).collect())
}

/// Steady-state sojourn estimate; `estimate` is `None` with a reason when undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SojournEstimate {
    pub estimate: Option<Estimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub undefined: Option<String>,
}

/// Mean sojourn of swarm `w` over peers arriving at or after `warmup`,
/// with a batch-means interval across replications.
pub fn steady_state_sojourn(records: &[TrajectoryRecord<f64>], w: usize, warmup: f64, level: f64) -> SojournEstimate {
    if records.is_empty() {
        return SojournEstimate { estimate: None, undefined: Some("no records".into()) };
    }
    if records.iter().all(|r| warmup >= r.final_state.clock) {
        return SojournEstimate { estimate: None, undefined: Some("warmup covers the whole run".into()) };
    }
    let groups: Vec<Vec<f64>> =
        records.iter().map(|r| r.sojourns_after(SwarmIx(w), warmup).map(|s| s.duration()).collect()).collect();
    match batch_means(&groups, level, 10) {
        Some(e) => SojournEstimate { estimate: Some(e), undefined: None },
        None => SojournEstimate { estimate: None, undefined: Some("no departures after warmup".into()) },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlushOut {
    pub time: f64,
    /// The roster never emptied; `time` is the end of the run.
    pub censored: bool,
}

/// First time the roster is empty in a run without arrivals.
pub fn flush_out_time(record: &TrajectoryRecord<f64>) -> FlushOut {
    match record.final_state.emptied_at {
        Some(t) => FlushOut { time: t, censored: false },
        None => FlushOut { time: record.final_state.clock, censored: true },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmStats {
    pub id: String,
    pub sojourn: SojournEstimate,
    pub departures_after_warmup: usize,
    pub peak_population: u32,
    pub final_population: Option<Estimate>,
    /// Smallest sampled population.
    pub min_population: u32,
    /// Largest sampled population over the last quarter of the run.
    pub last_quartile_max: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlushOutStats {
    /// Censored runs enter at their end time, so this is a lower bound when any are censored.
    pub time: Estimate,
    pub censored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub level: f64,
    pub warmup: f64,
    pub replications: usize,
    pub swarms: Vec<SwarmStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flush_out: Option<FlushOutStats>,
    /// Time until every piece of every file was held by some peer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage_time: Option<Estimate>,
    /// Least-squares slope of the total population over time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population_slope: Option<Estimate>,
    /// Share of empty peers in the final sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_empty_fraction: Option<Estimate>,
    /// Every replication's population trend is increasing.
    pub monotone_growth: bool,
}

fn population_fit(r: &TrajectoryRecord<f64>) -> Option<LinearFit> {
    let pts: Vec<(f64, f64)> = r.samples.iter().map(|s| (s.t, s.total_population() as f64)).collect();
    linear_fit(&pts)
}

pub fn summarize(records: &[TrajectoryRecord<f64>], warmup: f64, level: f64) -> SummaryStats {
    let n_swarms = records.first().map_or(0, |r| r.swarm_ids.len());
    let mut swarms = Vec::new();
    for w in 0..n_swarms {
        let finals: Vec<f64> = records.iter().map(|r| f64::from(r.final_state.populations[w])).collect();
        let mut min_pop = u32::MAX;
        let mut lq = 0;
        for r in records {
            let t_end = r.final_state.clock;
            for s in &r.samples {
                min_pop = min_pop.min(s.swarms[w].population);
                if s.t >= 0.75 * t_end {
                    lq = lq.max(s.swarms[w].population);
                }
            }
        }
        swarms.push(SwarmStats {
            id: records[0].swarm_ids[w].clone(),
            sojourn: steady_state_sojourn(records, w, warmup, level),
            departures_after_warmup: records.iter().map(|r| r.sojourns_after(SwarmIx(w), warmup).count()).sum(),
            peak_population: records.iter().map(|r| r.final_state.peak_populations[w]).max().unwrap_or(0),
            final_population: mean_ci(&finals, level),
            min_population: if min_pop == u32::MAX { 0 } else { min_pop },
            last_quartile_max: lq,
        });
    }
    let no_arrivals = records.iter().all(|r| r.counters.arrivals.iter().all(|&a| a == 0));
    let flush_out = (no_arrivals && !records.is_empty()).then(|| {
        let f: Vec<FlushOut> = records.iter().map(flush_out_time).collect();
        let times: Vec<f64> = f.iter().map(|x| x.time).collect();
        FlushOutStats { time: mean_ci(&times, level).expect("non-empty"), censored: f.iter().filter(|x| x.censored).count() }
    });
    let coverage: Vec<f64> = records
        .iter()
        .map(|r| {
            r.final_state
                .coverage_time
                .iter()
                .map(|c| c.unwrap_or(r.final_state.clock))
                .fold(0.0, f64::max)
        })
        .collect();
    let fits: Vec<Option<LinearFit>> = records.iter().map(population_fit).collect();
    let slopes: Vec<f64> = fits.iter().flatten().map(|f| f.slope).collect();
    let empties: Vec<f64> = records
        .iter()
        .filter_map(|r| {
            let s = r.samples.last()?;
            let pop = s.total_population();
            (pop > 0).then(|| s.swarms.iter().map(|x| f64::from(x.empty)).sum::<f64>() / pop as f64)
        })
        .collect();
    let monotone_growth = !records.is_empty()
        && records.iter().zip(&fits).all(|(r, f)| {
            let n = r.samples.len();
            let q = (n / 4).max(1);
            let mean = |s: &[crate::record::Sample<f64>]| {
                s.iter().map(|x| x.total_population() as f64).sum::<f64>() / s.len().max(1) as f64
            };
            f.is_some_and(|f| f.slope > 0.0) && n >= 2 && mean(&r.samples[n - q..]) > mean(&r.samples[..q])
        });
    SummaryStats {
        level,
        warmup,
        replications: records.len(),
        swarms,
        flush_out,
        coverage_time: mean_ci(&coverage, level),
        population_slope: mean_ci(&slopes, level),
        final_empty_fraction: mean_ci(&empties, level),
        monotone_growth,
    }
}

/// A tolerance check on one measured statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub observed: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub verdict: Verdict,
}

impl Check {
    pub fn within(name: impl Into<String>, observed: Option<f64>, lo: Option<f64>, hi: Option<f64>) -> Self {
        let verdict = match observed {
            None => Verdict::Inconclusive,
            Some(x) if x.is_nan() => Verdict::Inconclusive,
            Some(x) => {
                if lo.is_none_or(|l| x >= l) && hi.is_none_or(|h| x <= h) {
                    Verdict::Pass
                } else {
                    Verdict::Fail
                }
            }
        };
        Check { name: name.into(), observed, lo, hi, verdict }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRun {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub config_hash: String,
    pub root_seed: u64,
    pub summary: SummaryStats,
    #[serde(skip)]
    pub records: Vec<TrajectoryRecord<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetRun {
    pub preset: ScenarioPreset,
    pub preset_hash: String,
    pub rng_seed: u64,
    pub variants: Vec<VariantRun>,
    pub checks: Vec<Check>,
    /// Per file size MS versus RFwPMS comparison (mode-suppression sweeps only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub improvements: Vec<Improvement>,
    /// `Fail` if any check failed, `Pass` if at least one passed and none failed.
    pub verdict: Verdict,
}

impl PresetRun {
    pub fn variant(&self, label: &str) -> Option<&VariantRun> {
        self.variants.iter().find(|v| v.label == label)
    }
}

/// Mean sojourns of the mode-suppression policies at one file size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub k: usize,
    pub ms: Option<f64>,
    pub tms: Option<f64>,
    pub rfwpms: Option<f64>,
    /// `100·(MS − RFwPMS)/MS`.
    pub percent: Option<f64>,
}

fn improvements(runs: &[VariantRun]) -> Vec<Improvement> {
    let mut ks: Vec<usize> = runs.iter().filter_map(|v| v.k).collect();
    ks.sort_unstable();
    ks.dedup();
    let mean = |p: &str, k: usize| runs.iter().find(|v| v.label == format!("{p}_k{k}")).and_then(|v| sojourn_mean(v, 0));
    ks.into_iter()
        .filter(|&k| mean("ms", k).is_some() || mean("rfwpms", k).is_some())
        .map(|k| {
            let (ms, rf) = (mean("ms", k), mean("rfwpms", k));
            Improvement { k, ms, tms: mean("tms", k), rfwpms: rf, percent: ms.zip(rf).map(|(a, b)| 100.0 * (a - b) / a) }
        })
        .collect()
}

pub struct RunOptions {
    /// Keep the per-replication trajectory records in the result.
    pub keep_records: bool,
}

/// Resolve, execute and summarize a preset.
pub fn run_preset(name: &str, overrides: &Overrides, rng_seed: u64, opts: &RunOptions) -> Result<PresetRun, HarnessError> {
    let preset = resolve_preset(name, overrides)?;
    let mut variants = Vec::new();
    for v in &preset.variants {
        let root = variant_seed(rng_seed, &v.label);
        let records = run_replications(&v.config, preset.replications, root)?;
        let summary = summarize(&records, preset.warmup, preset.level);
        variants.push(VariantRun {
            label: v.label.clone(),
            k: v.k,
            config_hash: hash_json(&v.config),
            root_seed: root,
            summary,
            records: if opts.keep_records { records } else { Vec::new() },
        });
    }
    let checks = preset_checks(&preset, &variants);
    let verdict = overall(&checks);
    let improvements = if preset.name == "ms_comparison_table3" { improvements(&variants) } else { Vec::new() };
    Ok(PresetRun { preset_hash: preset.content_hash(), preset, rng_seed, variants, checks, improvements, verdict })
}

pub fn overall(checks: &[Check]) -> Verdict {
    if checks.iter().any(|c| c.verdict == Verdict::Fail) {
        Verdict::Fail
    } else if checks.iter().any(|c| c.verdict == Verdict::Pass) {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    }
}

fn sojourn_mean(v: &VariantRun, w: usize) -> Option<f64> {
    v.summary.swarms.get(w)?.sojourn.estimate.map(|e| e.mean)
}

fn flush_mean(v: &VariantRun) -> Option<f64> {
    v.summary.flush_out.as_ref().map(|f| f.time.mean)
}

/// Tolerance verdicts for the preset's claims.
pub fn preset_checks(preset: &ScenarioPreset, runs: &[VariantRun]) -> Vec<Check> {
    let find = |label: &str| runs.iter().find(|r| r.label == label);
    let mut checks = Vec::new();
    for r in &preset.references {
        if let Some(v) = find(&r.variant) {
            let (lo, hi) = (r.value * (1.0 - r.rel_tol), r.value * (1.0 + r.rel_tol));
            checks.push(Check::within(
                format!("{} swarm {} {} ≈ {}", r.variant, r.swarm + 1, r.statistic, r.value),
                sojourn_mean(v, r.swarm),
                Some(lo),
                Some(hi),
            ));
        }
    }
    let name = preset.name.as_str();
    match name {
        "fps_hard_tft" => {
            for v in runs {
                let c = &v.config_of(preset);
                let growth = c.swarms.iter().map(|s| s.lambda).sum::<f64>() - c.params.seed_total();
                checks.push(Check::within(
                    format!("{} population slope ≈ λ − LU = {growth}", v.label),
                    v.summary.population_slope.map(|e| e.mean),
                    Some(0.7 * growth),
                    Some(1.3 * growth),
                ));
                checks.push(Check::within(
                    format!("{} final empty-peer share", v.label),
                    v.summary.final_empty_fraction.map(|e| e.mean),
                    Some(0.9),
                    None,
                ));
            }
        }
        "lps_workconserving" => {
            for v in runs {
                let init = initial_population(&v.config_of(preset).initial) as f64;
                checks.push(Check::within(
                    format!("{} final population over 1.5× initial {init}", v.label),
                    Some(v.summary.swarms.iter().map(|s| s.final_population.map_or(0.0, |e| e.mean)).sum::<f64>()),
                    Some(1.5 * init),
                    None,
                ));
            }
        }
        n if n.starts_with("stability_two_swarm_") || n == "three_swarm_alpha0" => {
            for v in runs {
                for s in &v.summary.swarms {
                    checks.push(Check::within(
                        format!("{} {} drops below 150", v.label, s.id),
                        Some(f64::from(s.min_population)),
                        None,
                        Some(149.0),
                    ));
                    checks.push(Check::within(
                        format!("{} {} last-quartile maximum below 300", v.label, s.id),
                        Some(f64::from(s.last_quartile_max)),
                        None,
                        Some(299.0),
                    ));
                }
            }
        }
        "scalability_table2" => {
            for behavior in [Behavior::Altruistic, Behavior::Autonomous] {
                let means: Vec<f64> = SCALES
                    .iter()
                    .filter_map(|(s, _)| find(&format!("{}_{s}", behavior.name())).and_then(|v| sojourn_mean(v, 0)))
                    .collect();
                if means.len() == SCALES.len() {
                    let spread = means.iter().cloned().fold(f64::MIN, f64::max) / means.iter().cloned().fold(f64::MAX, f64::min) - 1.0;
                    checks.push(Check::within(
                        format!("{} swarm 1 sojourn spread across λ scales", behavior.name()),
                        Some(spread),
                        None,
                        Some(0.15),
                    ));
                }
            }
        }
        "sojourn_vs_filesize" => {
            for behavior in Behavior::ALL {
                let rows: Vec<&VariantRun> = runs.iter().filter(|v| v.label.starts_with(behavior.name())).collect();
                if rows.len() < 3 {
                    continue;
                }
                for w in 0..2 {
                    let pts: Vec<(f64, f64)> = rows
                        .iter()
                        .filter_map(|v| {
                            let k = preset.variants.iter().find(|p| p.label == v.label)?.config.swarms[w].k();
                            Some((k as f64, sojourn_mean(v, w)?))
                        })
                        .collect();
                    let fit = linear_fit(&pts);
                    let lo = (behavior == Behavior::Altruistic).then_some(0.95);
                    checks.push(Check::within(
                        format!("{} swarm {} sojourn-vs-K linear fit R²", behavior.name(), w + 1),
                        fit.map(|f| f.r2),
                        lo,
                        None,
                    ));
                }
            }
        }
        "ms_comparison_table3" => {
            for (k, _, _, _) in TABLE3 {
                let (Some(ms), Some(rf)) = (find(&format!("ms_k{k}")), find(&format!("rfwpms_k{k}"))) else {
                    continue;
                };
                let imp = match (sojourn_mean(ms, 0), sojourn_mean(rf, 0)) {
                    (Some(a), Some(b)) => Some(100.0 * (a - b) / a),
                    _ => None,
                };
                let lo = (k == 10).then_some(20.0);
                checks.push(Check::within(format!("K={k} RFwPMS improvement over MS (%)"), imp, lo, None));
            }
        }
        "flash_crowd_large" => {
            for v in runs {
                let c = v.config_of(preset);
                let k = c.swarms[0].k() as f64;
                let expect = k / c.params.seed_total();
                checks.push(Check::within(
                    format!("{} all pieces present by ≈ K/(LU) = {expect}", v.label),
                    v.summary.coverage_time.map(|e| e.mean),
                    Some(0.75 * expect),
                    Some(1.25 * expect),
                ));
            }
            if let (Some(ms), Some(rf), Some(rn)) = (find("ms"), find("rfwpms"), find("rnwpms")) {
                let (m, f, n) = (flush_mean(ms), flush_mean(rf), flush_mean(rn));
                checks.push(Check::within("RFwPMS/MS flush-out ratio", f.zip(m).map(|(a, b)| a / b), None, Some(0.6)));
                checks.push(Check::within("RNwPMS/MS flush-out ratio", n.zip(m).map(|(a, b)| a / b), Some(1.0), None));
            }
        }
        "flash_crowd_small" => {
            let fc = |b: &str| find(&format!("rfwpms_flashcrowd_b{b}")).and_then(flush_mean);
            if let (Some(std), Some(b4)) = (find("rfwpms_standard").and_then(flush_mean), fc("0.4")) {
                checks.push(Check::within("standard-ζ / flashcrowd-ζ(β=0.4) flush-out ratio", Some(std / b4), Some(2.0), None));
            }
            if let (Some(b2), Some(b4), Some(b5)) = (fc("0.2"), fc("0.4"), fc("0.5")) {
                checks.push(Check::within("flashcrowd-ζ β=0.4 flush-out minus min(β=0.2, β=0.5)", Some(b4 - b2.min(b5)), None, Some(0.0)));
            }
        }
        _ => {}
    }
    checks
}

fn initial_population(init: &InitialState) -> u64 {
    match init {
        InitialState::Empty => 0,
        InitialState::OneClub { swarms } => swarms.values().map(|c| u64::from(c.size)).sum(),
        InitialState::FlashCrowd { swarms } => swarms.values().map(|&n| u64::from(n)).sum(),
        InitialState::Explicit { peers } => peers.iter().map(|p| u64::from(p.count)).sum(),
    }
}

impl VariantRun {
    fn config_of<'a>(&self, preset: &'a ScenarioPreset) -> &'a RunConfig<f64> {
        &preset.variants.iter().find(|v| v.label == self.label).expect("variant of preset").config
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_listed_preset_resolves() {
        for info in list_presets() {
            let p = resolve_preset(info.name, &Overrides::default()).unwrap();
            assert!(!p.variants.is_empty());
            assert!(p.replications >= 1);
            for v in &p.variants {
                assert!(p.warmup < v.config.t_end, "{}", info.name);
            }
        }
    }

    #[test]
    fn unknown_preset_suggests() {
        match preset("flash_crowd") {
            Err(HarnessError::UnknownPreset { suggestions, .. }) => {
                assert!(suggestions.iter().any(|s| s == "flash_crowd_large"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides_filter_and_validate() {
        let o = Overrides { k: Some(vec![10]), ..Default::default() };
        let p = resolve_preset("ms_comparison_table3", &o).unwrap();
        assert_eq!(p.variants.len(), 3);
        assert_eq!(p.references.len(), 3);
        let bad = Overrides { k: Some(vec![10]), ..Default::default() };
        assert!(matches!(resolve_preset("fps_hard_tft", &bad), Err(HarnessError::BadOverride(_))));
        let bad = Overrides { warmup: Some(5000.0), ..Default::default() };
        assert!(resolve_preset("ms_comparison_table3", &bad).is_err());
        let bad = Overrides { replications: Some(0), ..Default::default() };
        assert!(resolve_preset("fps_hard_tft", &bad).is_err());
        let t = Overrides { t_end: Some(500.0), ..Default::default() };
        assert_eq!(resolve_preset("scalability_table2", &t).unwrap().warmup, 100.0);
    }

    #[test]
    fn behaviors_shape_topology() {
        let files = [span(0, 10), span(8, 18)];
        let mut p = NetworkParams::new(1.0, 1.0 / 3.0, 3, 1.0, 0.5, false);
        let a = swarms_with_behavior(&files, &[4.0, 2.0], Behavior::Altruistic, &mut p);
        assert_eq!(a[0].downloadable, PieceSet::first_n(18));
        assert_eq!(a[1].file, PieceSet::range(9, 18));
        assert_eq!(a[0].allies.len(), 2);
        let mut p = NetworkParams::new(1.0, 1.0 / 3.0, 3, 1.0, 0.5, false);
        let s = swarms_with_behavior(&files, &[4.0, 2.0], Behavior::Autonomous, &mut p);
        assert_eq!(p.mode, ContactMode::Autonomous);
        assert_eq!(p.seed_split["W2"], 0.5);
        assert_eq!(s[1].allies, vec!["W2".to_string()]);
    }

    #[test]
    fn sojourn_estimate_edges() {
        let p = resolve_preset("ms_comparison_table3", &Overrides { k: Some(vec![2]), t_end: Some(60.0), ..Default::default() }).unwrap();
        let recs = run_replications(&p.variants[0].config, 2, 5).unwrap();
        assert!(steady_state_sojourn(&recs, 0, 60.0, 0.95).estimate.is_none());
        assert!(steady_state_sojourn(&recs, 0, 10.0, 0.95).estimate.is_some());
        assert!(steady_state_sojourn(&[], 0, 0.0, 0.95).undefined.is_some());
    }

    #[test]
    fn replications_are_deterministic() {
        let o = Overrides { replications: Some(2), t_end: Some(50.0), ..Default::default() };
        let a = run_preset("fps_hard_tft", &o, 9, &RunOptions { keep_records: false }).unwrap();
        let b = run_preset("fps_hard_tft", &o, 9, &RunOptions { keep_records: false }).unwrap();
        assert_eq!(a.variants[0].summary, b.variants[0].summary);
        assert_eq!(a.preset_hash, b.preset_hash);
    }
}
