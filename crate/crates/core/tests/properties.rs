mod common;

use std::sync::Arc;

use common::*;
use proptest::prelude::*;
use swarmlab::harness::Behavior;
use swarmlab::{NetworkParams, NetworkState, PieceSet, PolicyConfig, PolicyKind, PushContext, SimRng, SwarmIx, SwarmSpec, Topology};

proptest! {
    #![proptest_config(ProptestConfig { cases: 3, ..ProptestConfig::default() })]

    #[test]
    fn incremental_tables_match_recount(seed in any::<u64>(), p in 0.0f64..1.0, y_opt in any::<bool>(), scale in 0.5f64..3.0) {
        for behavior in Behavior::ALL {
            for kind in PolicyKind::ALL {
                let cfg = fuzz_config(behavior, kind, seed, p, y_opt, scale);
                if let Err(e) = fuzz_run(&cfg, 10_000) {
                    return Err(TestCaseError::fail(format!("{behavior:?}/{kind}: {e}")));
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 2000, ..ProptestConfig::default() })]

    #[test]
    fn transferable_set_matches_brute_force(
        seed in any::<u64>(),
        k in 1usize..10,
        extras in 0usize..4,
        peers in 0usize..12,
        density in 0.05f64..0.95,
        beta in prop_oneof![Just(0.0), 0.01f64..5.0, Just(1e12)],
        alpha in 0.1f64..2.0,
        kind_ix in 0usize..6,
        flash in any::<bool>(),
        threshold in 0u32..4,
    ) {
        let spec = ContextSpec { seed, k, extras, peers, density, alpha, beta, kind: PolicyKind::ALL[kind_ix], flash, threshold };
        if let Err(e) = check_contexts(&spec, 50) {
            return Err(TestCaseError::fail(format!("{spec:?}: {e}")));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn zeta_is_monotone(seeds in prop::collection::vec(any::<u64>(), 8), k in 2usize..8, alpha in 0.1f64..3.0, beta in 0.05f64..4.0, flash in any::<bool>(), pop in 1usize..30) {
        let pts: Vec<(u32, u32, f64)> = seeds.iter().flat_map(|&s| zeta_points(s, k, alpha, beta, flash, pop)).collect();
        if let Err(e) = check_zeta_monotone(&pts) {
            return Err(TestCaseError::fail(e));
        }
    }

    #[test]
    fn zeta_vanishes_without_beta(seed in any::<u64>(), k in 1usize..8, alpha in 0.1f64..3.0, flash in any::<bool>(), pop in 0usize..20) {
        for (_, _, z) in zeta_points(seed, k, alpha, 0.0, flash, pop) {
            prop_assert_eq!(z, 0.0);
        }
    }
}

#[test]
fn worked_rarest_example() {
    // ν = (5, 1) over W = [2]; target holds piece 1
    let file = PieceSet::first_n(2);
    let swarms = vec![SwarmSpec::<f64>::selfish("W", file, 1.0)];
    let topo = Arc::new(Topology::new(&swarms).unwrap());
    let mut state = NetworkState::<f64>::new(topo);
    for _ in 0..5 {
        state.add_peer(SwarmIx(0), set(&[1]), 0.0).unwrap();
    }
    state.add_peer(SwarmIx(0), set(&[2]), 0.0).unwrap();
    let params = NetworkParams::new(1.0, 1.0 / 3.0, 3, 1.0, 0.5, true);
    let ctx = PushContext {
        state: &state,
        swarms: &swarms,
        params: &params,
        revealed: file,
        target_swarm: SwarmIx(0),
        target_cache: set(&[1]),
    };
    let mut rng = SimRng::seed_from(4);
    let out = swarmlab::policy::transferable_set(&ctx, &PolicyConfig::new(PolicyKind::RfwPms), &mut rng);
    assert_eq!(out.piece, Some(piece(2)));
}
