//! The JSON run-configuration document and its line-anchored validation.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::{InitialState, RunConfig, Violation};
use crate::model::{NetworkParams, SwarmSpec};
use crate::pieces::PieceSet;
use crate::policy::PolicyConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwarmEntry {
    pub id: String,
    pub file: PieceSet,
    /// Defaults to `file`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub downloadable: Option<PieceSet>,
    /// Defaults to the swarm itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allies: Option<Vec<String>>,
    pub lambda: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

fn default_alpha() -> f64 {
    1e-9
}

fn default_beta() -> f64 {
    1.5
}

fn default_interval() -> f64 {
    1.0
}

fn default_replications() -> u32 {
    1
}

impl SwarmEntry {
    pub fn resolve(&self) -> SwarmSpec<f64> {
        SwarmSpec {
            id: self.id.clone(),
            file: self.file,
            downloadable: self.downloadable.unwrap_or(self.file),
            allies: self.allies.clone().unwrap_or_else(|| vec![self.id.clone()]),
            lambda: self.lambda,
            alpha: self.alpha,
            beta: self.beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub t_end: f64,
    #[serde(default = "default_interval")]
    pub sample_interval: f64,
    #[serde(default)]
    pub rng_seed: u64,
    /// Defaults to 20% of `t_end`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup: Option<f64>,
    #[serde(default = "default_replications")]
    pub replications: u32,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub track_push_rates: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_eps")]
    pub epsilon_prime: f64,
    /// Confidence of the push-rate envelope check.
    #[serde(default = "default_conf")]
    pub confidence: f64,
}

fn default_eta() -> f64 {
    0.5
}

fn default_eps() -> f64 {
    0.1
}

fn default_conf() -> f64 {
    0.99
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection { eta: default_eta(), epsilon_prime: default_eps(), confidence: default_conf() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub network: NetworkParams<f64>,
    pub swarms: Vec<SwarmEntry>,
    pub policy: PolicyConfig,
    pub sim: SimSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
}

impl ConfigDocument {
    /// Document equivalent to an already-resolved run configuration.
    pub fn from_run_config(c: &RunConfig<f64>, replications: u32, warmup: Option<f64>) -> Self {
        ConfigDocument {
            network: c.params.clone(),
            swarms: c
                .swarms
                .iter()
                .map(|s| SwarmEntry {
                    id: s.id.clone(),
                    file: s.file,
                    downloadable: Some(s.downloadable),
                    allies: Some(s.allies.clone()),
                    lambda: s.lambda,
                    alpha: s.alpha,
                    beta: s.beta,
                })
                .collect(),
            policy: c.policy,
            sim: SimSection {
                t_end: c.t_end,
                sample_interval: c.sample_interval,
                rng_seed: c.rng_seed,
                warmup,
                replications,
                initial: c.initial.clone(),
                track_push_rates: c.track_push_rates,
            },
            diagnostics: DiagnosticsSection::default(),
        }
    }

    pub fn run_config(&self) -> RunConfig<f64> {
        RunConfig {
            params: self.network.clone(),
            swarms: self.swarms.iter().map(SwarmEntry::resolve).collect(),
            policy: self.policy,
            t_end: self.sim.t_end,
            rng_seed: self.sim.rng_seed,
            initial: self.sim.initial.clone(),
            sample_interval: self.sim.sample_interval,
            track_push_rates: self.sim.track_push_rates,
        }
    }

    pub fn warmup(&self) -> f64 {
        self.sim.warmup.unwrap_or(0.2 * self.sim.t_end)
    }

    fn violations(&self) -> Vec<Violation> {
        let mut v = match self.run_config().validate() {
            Ok(()) => Vec::new(),
            Err(e) => e.violations,
        };
        let mut add = |path: &str, message: &str| v.push(Violation { path: path.into(), message: message.into() });
        for (i, s) in self.swarms.iter().enumerate() {
            if let Some(a) = &s.allies {
                if a.is_empty() {
                    add(&format!("swarms[{i}].allies"), "must be non-empty");
                }
            }
        }
        if self.sim.replications == 0 {
            add("sim.replications", "must be at least 1");
        }
        let w = self.warmup();
        if !(w >= 0.0) || (w > 0.0 && w >= self.sim.t_end) {
            add("sim.warmup", "must lie in [0, t_end)");
        }
        let d = &self.diagnostics;
        if !(d.eta > 0.0 && d.eta < 1.0) {
            add("diagnostics.eta", "must lie in (0, 1)");
        }
        if !(d.epsilon_prime > 0.0) {
            add("diagnostics.epsilon_prime", "must be positive");
        }
        if !(d.confidence > 0.0 && d.confidence < 1.0) {
            add("diagnostics.confidence", "must lie in (0, 1)");
        }
        v
    }
}

/// One validation message, anchored to a line of the source when possible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub path: Option<String>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "line {l}, column {c}: ")?,
            (Some(l), None) => write!(f, "line {l}: ")?,
            _ => {}
        }
        if let Some(p) = &self.path {
            write!(f, "{p}: ")?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))]
pub struct ConfigFailure(pub Vec<Diagnostic>);

/// Parse and fully validate a configuration document.
pub fn parse_config(text: &str) -> Result<ConfigDocument, ConfigFailure> {
    let doc: ConfigDocument = serde_json::from_str(text).map_err(|e| {
        ConfigFailure(vec![Diagnostic {
            line: Some(e.line()),
            column: Some(e.column()),
            path: None,
            message: e.to_string().split(" at line ").next().unwrap_or_default().to_string(),
        }])
    })?;
    let violations = doc.violations();
    if violations.is_empty() {
        return Ok(doc);
    }
    let lines = locate_paths(text);
    Err(ConfigFailure(
        violations
            .into_iter()
            .map(|v| Diagnostic { line: line_of(&lines, &v.path), column: None, path: Some(v.path), message: v.message })
            .collect(),
    ))
}

fn line_of(lines: &BTreeMap<String, usize>, path: &str) -> Option<usize> {
    let mut p = path.to_string();
    loop {
        if let Some(&l) = lines.get(&p) {
            return Some(l);
        }
        let cut = p.rfind(['.', '['])?;
        p.truncate(cut);
    }
}

/// Line (1-based) of every object key and array element, keyed by its
/// dotted path (`swarms[0].allies`). Assumes syntactically valid JSON.
fn locate_paths(text: &str) -> BTreeMap<String, usize> {
    struct Scan<'a> {
        b: &'a [u8],
        i: usize,
        line: usize,
        out: BTreeMap<String, usize>,
    }
    impl Scan<'_> {
        fn ws(&mut self) {
            while let Some(&c) = self.b.get(self.i) {
                if c == b'\n' {
                    self.line += 1;
                } else if !c.is_ascii_whitespace() {
                    break;
                }
                self.i += 1;
            }
        }
        fn string(&mut self) -> String {
            let start = self.i + 1;
            self.i += 1;
            while let Some(&c) = self.b.get(self.i) {
                match c {
                    b'\\' => self.i += 2,
                    b'"' => break,
                    _ => self.i += 1,
                }
            }
            let s = String::from_utf8_lossy(&self.b[start..self.i.min(self.b.len())]).into_owned();
            self.i += 1;
            s
        }
        fn value(&mut self, path: &str) {
            self.ws();
            match self.b.get(self.i) {
                Some(b'{') => {
                    self.i += 1;
                    loop {
                        self.ws();
                        match self.b.get(self.i) {
                            Some(b'"') => {
                                let line = self.line;
                                let key = self.string();
                                let p = if path.is_empty() { key } else { format!("{path}.{key}") };
                                self.out.insert(p.clone(), line);
                                self.ws();
                                self.i += 1; // ':'
                                self.value(&p);
                            }
                            Some(b',') => self.i += 1,
                            Some(b'}') => {
                                self.i += 1;
                                return;
                            }
                            _ => return,
                        }
                    }
                }
                Some(b'[') => {
                    self.i += 1;
                    let mut k = 0;
                    loop {
                        self.ws();
                        match self.b.get(self.i) {
                            Some(b']') => {
                                self.i += 1;
                                return;
                            }
                            Some(b',') => self.i += 1,
                            Some(_) => {
                                let p = format!("{path}[{k}]");
                                self.out.insert(p.clone(), self.line);
                                self.value(&p);
                                k += 1;
                            }
                            None => return,
                        }
                    }
                }
                Some(b'"') => {
                    self.string();
                }
                Some(_) => {
                    while let Some(&c) = self.b.get(self.i) {
                        if matches!(c, b',' | b'}' | b']') || c.is_ascii_whitespace() {
                            break;
                        }
                        self.i += 1;
                    }
                }
                None => {}
            }
        }
    }
    let mut s = Scan { b: text.as_bytes(), i: 0, line: 1, out: BTreeMap::new() };
    s.value("");
    s.out
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{
  "network": {"mu": 1, "mu_hat": 0.333, "L": 3, "U": 1, "p": 0.5, "y_opt": true},
  "swarms": [
    {"id": "W", "file": "1-10", "lambda": 4}
  ],
  "policy": {"kind": "RFwPMS"},
  "sim": {"t_end": 100}
}"#;

    #[test]
    fn minimal_document_parses_with_defaults() {
        let d = parse_config(GOOD).unwrap();
        let c = d.run_config();
        assert_eq!(c.swarms[0].downloadable, PieceSet::first_n(10));
        assert_eq!(c.swarms[0].allies, vec!["W".to_string()]);
        assert_eq!(c.swarms[0].beta, 1.5);
        assert_eq!(d.warmup(), 20.0);
        assert_eq!(d.sim.replications, 1);
    }

    #[test]
    fn unknown_key_is_rejected_with_position() {
        let bad = GOOD.replace("\"t_end\": 100", "\"t_end\": 100, \"speed\": 2");
        let e = parse_config(&bad).unwrap_err();
        assert_eq!(e.0[0].line, Some(7));
        assert!(e.0[0].message.contains("speed"), "{}", e.0[0].message);
    }

    #[test]
    fn violations_point_at_lines() {
        let bad = GOOD.replace("\"lambda\": 4", "\"lambda\": -4, \"allies\": [\"X\"]").replace("\"p\": 0.5", "\"p\": 1.5");
        let e = parse_config(&bad).unwrap_err();
        let by_path: BTreeMap<_, _> = e.0.iter().map(|d| (d.path.clone().unwrap(), d.line)).collect();
        assert_eq!(by_path["network.p"], Some(2));
        assert_eq!(by_path["swarms[0].lambda"], Some(4));
        assert_eq!(by_path["swarms[0].allies"], Some(4));
        let text = e.to_string();
        assert!(text.contains("line 2: network.p"), "{text}");
    }

    #[test]
    fn locator_handles_nesting_and_strings() {
        let m = locate_paths("{\n \"a\": [1,\n {\"b\": \"x,]}\"}],\n \"c\": {\"d\": null}\n}");
        assert_eq!(m["a"], 2);
        assert_eq!(m["a[1].b"], 3);
        assert_eq!(m["c.d"], 4);
        assert_eq!(line_of(&m, "c.d.e[3]"), Some(4));
    }
}
