//! Lyapunov function, its constants, drift estimates and rate-envelope checks.

use serde::{Deserialize, Serialize};
use statrs::distribution::{DiscreteCDF, Poisson};

use crate::model::{ContactMode, NetworkParams, SwarmSpec, Topology};
use crate::record::{Sample, SwarmSample, TrajectoryRecord};
use crate::scalar::Scalar;
use crate::state::NetworkState;
pub use crate::stats::Verdict;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LyapunovError {
    #[error("push-contact rate Δ_p is zero; the constants are undefined")]
    NoPushContacts,
    #[error("η must lie in (0, 1)")]
    BadEta,
    #[error("ε′ must be positive")]
    BadEpsilon,
    #[error("topology: {0}")]
    Topology(String),
    #[error("window {window} exceeds the trajectory span {span}")]
    WindowTooLong { window: f64, span: f64 },
    #[error("window must be positive")]
    BadWindow,
    #[error("configuration covers {expected} swarms, the record has {found}")]
    SwarmMismatch { expected: usize, found: usize },
}

/// Per-swarm constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmConstants<T> {
    pub k: usize,
    pub c1: T,
    pub c2: T,
    pub c3: T,
    pub delta: T,
    pub d: T,
    pub d1: T,
    pub d2: T,
    /// Size threshold used by the first floor on `C3`.
    pub n1: T,
    /// Seed rate seen by the swarm (`L·U`, or its own share in autonomous mode).
    pub seed_rate: T,
    /// Arrival intensity entering the bounds (`|λ|`, or `λ_W` in autonomous mode).
    pub lambda: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovConfig<T> {
    pub eta: T,
    pub epsilon_prime: T,
    pub epsilon: T,
    /// `C^(1) = max_W K_W·C1_W`.
    pub c_big1: T,
    pub delta_p: T,
    pub delta_1: T,
    pub xi2: T,
    pub swarms: Vec<SwarmConstants<T>>,
}

impl<T: Scalar> LyapunovConfig<T> {
    pub fn is_finite(&self) -> bool {
        self.swarms.iter().all(|s| s.c2.is_finite() && s.c3.is_finite() && s.delta.is_finite())
    }

    /// Why the constants are unusable, if they are.
    pub fn non_finite_reason(&self) -> Option<String> {
        let bad: Vec<usize> = (0..self.swarms.len()).filter(|&i| !self.swarms[i].d.is_finite()).collect();
        if !bad.is_empty() {
            return Some(format!(
                "D_W overflows for swarm(s) {bad:?}: β^(1+1/α)·K^(5+1/α) is infinite for tiny α with foreign allies"
            ));
        }
        (!self.is_finite()).then(|| "derived constants are not finite".to_string())
    }
}

const E_NEG2: f64 = 0.135_335_283_236_612_7;

/// `D_W^(1)` and `D_W^(2)`; the second is computed in log space.
fn discrepancy_terms<T: Scalar>(eta: T, xi2: T, rate: T, beta: T, alpha: T, k: T) -> (T, T) {
    let e2 = T::of(E_NEG2);
    let d1 = T::of(12.0) * e2 / (eta * eta) * xi2 * rate * beta * beta * k.powi(7);
    let d2 = if beta <= T::zero() {
        T::zero()
    } else {
        let inv_a = T::one() / alpha;
        let log = (T::of(3.0) * e2 / eta * xi2 * rate).ln() + (T::one() + inv_a) * beta.ln() + (T::of(5.0) + inv_a) * k.ln();
        log.exp()
    };
    (d1, d2)
}

/// Constants following the recipe, in order: `C1`, `C^(1)`, `C2`, `δ`, `C3`.
///
/// Each is the extreme value its inequalities admit; all the inequalities
/// are linear in the unknown, so the extremes have closed forms.
pub fn derive_constants<T: Scalar>(
    params: &NetworkParams<T>,
    swarms: &[SwarmSpec<T>],
    eta: T,
    epsilon_prime: T,
) -> Result<LyapunovConfig<T>, LyapunovError> {
    if !(eta > T::zero() && eta < T::one()) {
        return Err(LyapunovError::BadEta);
    }
    if !(epsilon_prime > T::zero()) {
        return Err(LyapunovError::BadEpsilon);
    }
    let delta_p = params.delta_p();
    if !(delta_p > T::zero()) {
        return Err(LyapunovError::NoPushContacts);
    }
    let topo = Topology::new(swarms).map_err(|e| LyapunovError::Topology(e.to_string()))?;
    let xi2 = params.xi2();
    let eps = T::of(2.0) * epsilon_prime;
    let one_eta = T::one() - eta;
    let lambda_all: T = swarms.iter().map(|s| s.lambda).sum();
    let c1: Vec<T> = swarms.iter().map(|s| T::of(8.0) * T::of_count(s.k() * s.k())).collect();
    let c_big1 = swarms.iter().zip(&c1).map(|(s, &c)| T::of_count(s.k()) * c).fold(T::zero(), T::max);

    let mut out = Vec::with_capacity(swarms.len());
    for (i, s) in swarms.iter().enumerate() {
        let k = T::of_count(s.k());
        let (seed_rate, lambda) = match params.mode {
            ContactMode::Shared => (params.seed_total(), lambda_all),
            ContactMode::Autonomous => {
                let u = params.seed_split.get(&s.id).copied().unwrap_or(T::zero());
                (T::of_count(params.links) * u, s.lambda)
            }
        };
        let (d1, d2) = discrepancy_terms(eta, xi2, seed_rate + delta_p, s.beta, s.alpha, k);
        let d = if topo.has_foreign_allies(crate::model::SwarmIx(i)) { d1 + d2 } else { d1 };
        let c1 = c1[i];
        let c2 = T::of(4.0) * k * (lambda * c_big1 + d + eps) / seed_rate;
        let two_k2_xi2 = T::of(2.0) * k * k * xi2;
        let delta = (T::of(0.5) * one_eta)
            .min(T::of(0.125) * c1 * one_eta / (two_k2_xi2 * c2))
            .min(T::of(0.25) * c2 * one_eta / two_k2_xi2);

        let theta = lambda + d;
        let slack = seed_rate.min(T::of(2.0) * one_eta * delta_p);
        let base = T::of(2.0) * one_eta * (seed_rate - T::of(2.0) * one_eta * delta_p);
        let n1 = ((theta + eps) * k * k / (T::of(2.0) * one_eta) - base) / slack;
        let n1 = n1.pos();
        let floor1 = k * n1 / one_eta;
        let floor2 = k * (k - eta) / (one_eta * one_eta)
            * ((lambda * c1 + eps) * k / (T::of(0.125) * c1 * delta_p) + T::of(2.0));
        let c3 = T::of(2.0) + floor1.max(floor2);
        out.push(SwarmConstants { k: s.k(), c1, c2, c3, delta, d, d1, d2, n1, seed_rate, lambda });
    }
    Ok(LyapunovConfig {
        eta,
        epsilon_prime,
        epsilon: eps,
        c_big1,
        delta_p,
        delta_1: params.delta_1(),
        xi2,
        swarms: out,
    })
}

/// One recipe inequality evaluated on a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipeCheck {
    pub swarm: usize,
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Evaluate every recipe inequality as `lhs ≥ rhs`.
pub fn check_recipe<T: Scalar>(cfg: &LyapunovConfig<T>) -> Vec<RecipeCheck> {
    let mut v = Vec::new();
    let eta = cfg.eta.as_f64();
    let one_eta = 1.0 - eta;
    let eps = cfg.epsilon.as_f64();
    let tol = 1e-9;
    let mut push = |swarm: usize, name: &'static str, lhs: f64, rhs: f64| {
        let holds = lhs >= rhs - tol * rhs.abs().max(1.0);
        v.push(RecipeCheck { swarm, name, lhs, rhs, holds });
    };
    let c_big1 = cfg.c_big1.as_f64();
    let mut max_kc1 = 0.0f64;
    for (i, s) in cfg.swarms.iter().enumerate() {
        let k = s.k as f64;
        let (c1, c2, c3, delta) = (s.c1.as_f64(), s.c2.as_f64(), s.c3.as_f64(), s.delta.as_f64());
        let lu = s.seed_rate.as_f64();
        let dp = cfg.delta_p.as_f64();
        let xi2 = cfg.xi2.as_f64();
        let lam = s.lambda.as_f64();
        max_kc1 = max_kc1.max(k * c1);
        push(i, "C1 >= 8K^2", c1, 8.0 * k * k);
        push(i, "0.25 K^-1 LU C2 >= |lambda| C(1) + D + eps", 0.25 / k * lu * c2, lam * c_big1 + s.d.as_f64() + eps);
        push(i, "0.5(1-eta) >= delta", 0.5 * one_eta, delta);
        push(i, "0.125 C1 >= 2 delta/(1-eta) K^2 xi2 C2", 0.125 * c1, 2.0 * delta / one_eta * k * k * xi2 * c2);
        push(i, "0.25 C2 >= 2 delta/(1-eta) K^2 xi2", 0.25 * c2, 2.0 * delta / one_eta * k * k * xi2);
        push(i, "(C3-2)(1-eta)/K >= N1", (c3 - 2.0) * one_eta / k, s.n1.as_f64());
        // N1 itself must make θ + g ≤ −ε at its threshold
        let theta = lam + s.d.as_f64();
        let n = (c3 - 2.0) * one_eta / k;
        let g = -2.0 * one_eta / (k * k)
            * (2.0 * one_eta * (lu - 2.0 * one_eta * dp) + n * lu.min(2.0 * one_eta * dp));
        push(i, "-g >= theta + eps", -g, theta + eps);
        push(i, "theta2 = 0.5 C1 >= 2(1-eta)^2", 0.5 * c1, 2.0 * one_eta * one_eta);
        push(
            i,
            "0.125 C1 K^-1 dp ((C3-2)(1-eta)^2/(K(K-eta)) - 2) >= |lambda| C1 + eps",
            0.125 * c1 / k * dp * ((c3 - 2.0) * one_eta * one_eta / (k * (k - eta)) - 2.0),
            lam * c1 + eps,
        );
    }
    push(usize::MAX, "C(1) >= max K C1", c_big1, max_kc1);
    v
}

/// Components `(V1, V2, V3)` of one swarm.
pub fn swarm_components<T: Scalar>(s: &SwarmSample, cfg: &LyapunovConfig<T>, w: usize) -> [T; 3] {
    let c = &cfg.swarms[w];
    let m = T::of_count(s.total_mismatch);
    let nu_bar = T::of_count(s.nu_max);
    let v1 = (m - cfg.eta * nu_bar).pos();
    let p = T::of_count(s.total);
    let v2 = c.c1 * (T::of_count(c.k as u64 * u64::from(s.population)) - p);
    let v3 = if c.c2.is_finite() && c.c3.is_finite() { c.c2 * (c.c3 - p).pos() } else { T::nan() };
    [v1 * v1, v2, v3]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovValue<T> {
    pub total: T,
    pub per_swarm: Vec<[T; 3]>,
}

fn value_of<T: Scalar>(swarms: &[SwarmSample], cfg: &LyapunovConfig<T>) -> LyapunovValue<T> {
    let per_swarm: Vec<[T; 3]> = swarms.iter().enumerate().map(|(w, s)| swarm_components(s, cfg, w)).collect();
    let total = per_swarm.iter().map(|c| c[0] + c[1] + c[2]).sum();
    LyapunovValue { total, per_swarm }
}

pub fn lyapunov_value<T: Scalar>(state: &NetworkState<T>, cfg: &LyapunovConfig<T>) -> LyapunovValue<T> {
    let samples: Vec<SwarmSample> =
        state.topology().swarms().map(|w| SwarmSample::of_table(state.table(w))).collect();
    value_of(&samples, cfg)
}

pub fn sample_value<T: Scalar>(sample: &Sample<T>, cfg: &LyapunovConfig<T>) -> LyapunovValue<T> {
    value_of(&sample.swarms, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftPoint<T> {
    pub t: T,
    pub total: T,
    pub per_swarm: Vec<[T; 3]>,
}

/// Windowed finite differences `(V(t+w) − V(t))/w` at each sample time.
///
/// The window is rounded to a whole number of sample intervals.
pub fn empirical_drift<T: Scalar>(
    record: &TrajectoryRecord<T>,
    cfg: &LyapunovConfig<T>,
    window: T,
) -> Result<Vec<DriftPoint<T>>, LyapunovError> {
    if record.swarm_ids.len() != cfg.swarms.len() {
        return Err(LyapunovError::SwarmMismatch { expected: cfg.swarms.len(), found: record.swarm_ids.len() });
    }
    if !(window > T::zero()) {
        return Err(LyapunovError::BadWindow);
    }
    let span = match (record.samples.first(), record.samples.last()) {
        (Some(a), Some(b)) => b.t - a.t,
        _ => T::zero(),
    };
    if window > span {
        return Err(LyapunovError::WindowTooLong { window: window.as_f64(), span: span.as_f64() });
    }
    let steps = ((window / record.sample_interval).round().to_usize().unwrap_or(1)).max(1);
    let values: Vec<LyapunovValue<T>> = record.samples.iter().map(|s| sample_value(s, cfg)).collect();
    let mut out = Vec::new();
    for i in 0..values.len().saturating_sub(steps) {
        let (a, b) = (&values[i], &values[i + steps]);
        let dt = record.samples[i + steps].t - record.samples[i].t;
        if dt <= T::zero() {
            continue;
        }
        let per_swarm = a
            .per_swarm
            .iter()
            .zip(&b.per_swarm)
            .map(|(x, y)| [(y[0] - x[0]) / dt, (y[1] - x[1]) / dt, (y[2] - x[2]) / dt])
            .collect();
        out.push(DriftPoint { t: record.samples[i].t, total: (b.total - a.total) / dt, per_swarm });
    }
    Ok(out)
}

/// Average drift of `V` and its components between time `from` and the last sample.
pub fn mean_drift<T: Scalar>(record: &TrajectoryRecord<T>, cfg: &LyapunovConfig<T>, from: T) -> Option<DriftPoint<T>> {
    let a = record.samples.iter().find(|s| s.t >= from)?;
    let b = record.samples.last()?;
    let dt = b.t - a.t;
    if dt <= T::zero() {
        return None;
    }
    let (va, vb) = (sample_value(a, cfg), sample_value(b, cfg));
    Some(DriftPoint {
        t: a.t,
        total: (vb.total - va.total) / dt,
        per_swarm: va
            .per_swarm
            .iter()
            .zip(&vb.per_swarm)
            .map(|(x, y)| [(y[0] - x[0]) / dt, (y[1] - x[1]) / dt, (y[2] - x[2]) / dt])
            .collect(),
    })
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceEnvelope {
    pub swarm: usize,
    pub piece: u16,
    pub observed: u64,
    pub expected_lower: f64,
    pub expected_upper: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    /// Family-wise confidence over all conclusive pieces.
    pub confidence: f64,
    /// Expected count below which a piece is not tested.
    pub min_expected: f64,
    pub pieces: Vec<PieceEnvelope>,
    pub verdict: Verdict,
}

/// Test observed push-contact counts against `[Γ_lower, ξ2·Γ_lower]`.
///
/// Each conclusive piece gets a two-sided exact Poisson test at
/// Bonferroni-corrected level; the overall verdict fails if any piece fails
/// and is inconclusive when no piece had enough exposure.
pub fn rate_envelope_check<T>(record: &TrajectoryRecord<T>, confidence: f64) -> Option<EnvelopeReport> {
    let env = record.envelope.as_ref()?;
    const MIN_EXPECTED: f64 = 10.0;
    let conclusive = env.expected_lower.iter().flatten().filter(|&&e| e >= MIN_EXPECTED).count().max(1);
    let alpha = (1.0 - confidence) / conclusive as f64;
    let mut pieces = Vec::new();
    let mut any_pass = false;
    let mut any_fail = false;
    for (w, ps) in env.pieces.iter().enumerate() {
        for (j, &piece) in ps.iter().enumerate() {
            let obs = env.observed[w][j];
            let lo = env.expected_lower[w][j];
            let hi = env.xi2 * lo;
            let verdict = if lo < MIN_EXPECTED {
                Verdict::Inconclusive
            } else {
                // P(X ≥ obs | lo) small: too many only if it also clears the upper bound
                let below = Poisson::new(lo).map(|d| d.cdf(obs)).unwrap_or(1.0);
                let above = if hi.is_finite() && obs > 0 {
                    Poisson::new(hi).map(|d| d.sf(obs - 1)).unwrap_or(1.0)
                } else {
                    1.0
                };
                if below < alpha / 2.0 || above < alpha / 2.0 {
                    Verdict::Fail
                } else {
                    Verdict::Pass
                }
            };
            any_pass |= verdict == Verdict::Pass;
            any_fail |= verdict == Verdict::Fail;
            pieces.push(PieceEnvelope {
                swarm: w,
                piece,
                observed: obs,
                expected_lower: lo,
                expected_upper: hi,
                verdict,
            });
        }
    }
    let verdict = if any_fail {
        Verdict::Fail
    } else if any_pass {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    };
    Some(EnvelopeReport { confidence, min_expected: MIN_EXPECTED, pieces, verdict })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SwarmIx;
    use crate::pieces::{PieceId, PieceSet};
    use std::sync::Arc;

    fn params() -> NetworkParams<f64> {
        NetworkParams::new(1.0, 1.0 / 3.0, 3, 1.0, 0.5, true)
    }

    fn single(k: usize, lambda: f64) -> Vec<SwarmSpec<f64>> {
        vec![SwarmSpec::selfish("W", PieceSet::first_n(k), lambda)]
    }

    #[test]
    fn c1_and_single_swarm_discrepancy() {
        let cfg = derive_constants(&params(), &single(2, 1.0), 0.5, 0.1).unwrap();
        assert_eq!(cfg.swarms[0].c1, 32.0);
        assert_eq!(cfg.c_big1, 64.0);
        assert_eq!(cfg.swarms[0].d, cfg.swarms[0].d1);
        assert!(check_recipe(&cfg).iter().all(|c| c.holds), "{:?}", check_recipe(&cfg));
    }

    #[test]
    fn zero_beta_zero_discrepancy() {
        let mut s = single(3, 1.0);
        s[0].beta = 0.0;
        let cfg = derive_constants(&params(), &s, 0.5, 0.1).unwrap();
        assert_eq!(cfg.swarms[0].d, 0.0);
    }

    #[test]
    fn no_push_contacts_is_an_error() {
        let mut p = params();
        p.y_opt = false;
        p.p = 0.0;
        assert_eq!(derive_constants(&p, &single(3, 1.0), 0.5, 0.1), Err(LyapunovError::NoPushContacts));
    }

    #[test]
    fn foreign_allies_with_tiny_alpha_overflow() {
        let mut s = single(3, 1.0);
        let mut v = SwarmSpec::selfish("V", PieceSet::first_n(3), 1.0);
        v.allies.push("W".into());
        s[0].allies.push("V".into());
        s.push(v);
        let cfg = derive_constants(&params(), &s, 0.5, 0.1).unwrap();
        assert!(cfg.swarms[0].d.is_infinite());
        assert!(cfg.non_finite_reason().is_some());
        s[0].alpha = 1.0;
        s[1].alpha = 1.0;
        let cfg = derive_constants(&params(), &s, 0.5, 0.1).unwrap();
        assert!(cfg.is_finite());
        assert!(cfg.swarms[0].d2 > 0.0);
        assert!(check_recipe(&cfg).iter().all(|c| c.holds));
    }

    #[test]
    fn hand_evaluated_components() {
        let cfg = derive_constants(&params(), &single(3, 1.0), 0.5, 0.1).unwrap();
        assert_eq!(cfg.swarms[0].c1, 72.0);
        let topo = Arc::new(Topology::new(&single(3, 1.0)).unwrap());
        let mut st = NetworkState::<f64>::new(topo);
        let set = |v: &[usize]| v.iter().map(|&i| PieceId::new(i).unwrap()).collect::<PieceSet>();
        for c in [set(&[1, 2]), set(&[1, 2]), set(&[1, 3]), set(&[])] {
            st.add_peer(SwarmIx(0), c, 0.0).unwrap();
        }
        // ν = (3, 2, 1)
        let v = lyapunov_value(&st, &cfg);
        assert_eq!(v.per_swarm[0][0], 2.25);
        assert_eq!(v.per_swarm[0][1], 432.0);
        let c = &cfg.swarms[0];
        assert!((v.per_swarm[0][2] - c.c2 * (c.c3 - 6.0)).abs() < 1e-9 * v.per_swarm[0][2]);

        let empty = NetworkState::<f64>::new(Arc::new(Topology::new(&single(3, 1.0)).unwrap()));
        let v = lyapunov_value(&empty, &cfg);
        assert_eq!(v.per_swarm[0][0], 0.0);
        assert_eq!(v.per_swarm[0][1], 0.0);
        assert_eq!(v.per_swarm[0][2], c.c2 * c.c3);
    }

    #[test]
    fn recipe_holds_across_parameters() {
        for k in [1, 2, 5, 10, 40] {
            for lam in [0.0, 0.5, 4.0, 40.0] {
                for eta in [0.1, 0.5, 0.9] {
                    let cfg = derive_constants(&params(), &single(k, lam), eta, 0.01).unwrap();
                    for c in check_recipe(&cfg) {
                        assert!(c.holds, "k={k} λ={lam} η={eta}: {c:?}");
                    }
                }
            }
        }
    }
}
