mod common;

use common::*;
use swarmlab::harness::preset;
use swarmlab::Overrides;

const PINNED: [(&str, &str); 12] = [
    ("fps_hard_tft", "4d3146e60ebcea81d5f2a96aa57bbbf487cbb3e91cb88fd2c2edbe95a6b52ca3"),
    ("lps_workconserving", "63ce7e7bd138ddc9b875de01f565dca0646b00e4267720c3339854c3c25ede44"),
    ("stability_two_swarm_altruistic", "88e18c17e073dc0d42dee255bd0f8e1c4ae592c9a0b1d1fe5baa0899e615f53b"),
    ("stability_two_swarm_opportunistic", "beeff6181660b9c315a6c7b8d18bd0c484a39fdc0fc21e7681794ca3b14bfb68"),
    ("stability_two_swarm_selfish", "7589c3315ad27e44c00eb29edaacc3fe116513c6a957028619bbbde100be6ec7"),
    ("stability_two_swarm_autonomous", "49942a5146f8da75f68dc0a74f1091f8830531a038d7cfb89a9d225eede9064c"),
    ("three_swarm_alpha0", "c07c4a91a5d31e67947f363d264c9615d0abfec2514cb6f5e558ea244ebb55eb"),
    ("scalability_table2", "79085b4251c83c9d98b860e3681fa12b5094816284c7afd5ec9904c48708ee8c"),
    ("sojourn_vs_filesize", "45ab183257ea694e8e6b7424fc83c197bc614e86e3ebd21c346e2770a64100d5"),
    ("ms_comparison_table3", "44473c9c7fb38edaf7af9cbfdc90b94c50019980014fb332bb34a0403fccf0f0"),
    ("flash_crowd_large", "70c0876b09ac6542d1575db43e95dd8a41817e552823ba5035461a9bd9864d85"),
    ("flash_crowd_small", "f6a3f8934eefd71332595242de9e1606ff9e6f648e03d8ee3cb189a8a16adaaf"),
];

#[test]
fn preset_contents_are_pinned() {
    for (name, hash) in PINNED {
        assert_eq!(preset(name).unwrap().content_hash(), hash, "preset {name} changed");
    }
    assert_eq!(swarmlab::harness::list_presets().len(), PINNED.len());
}

#[test]
fn replays_are_bit_identical() {
    for (name, o) in replay_cases() {
        let first = csv_bytes(name, &o, 17);
        let second = csv_bytes(name, &o, 17);
        assert!(!first.is_empty());
        assert!(first == second, "{name} did not replay identically");
        assert!(first != csv_bytes(name, &o, 18), "{name} ignores the seed");
    }
}

#[test]
fn variant_streams_do_not_depend_on_selection() {
    let all = csv_bytes("flash_crowd_large", &Overrides { replications: Some(1), t_end: Some(30.0), ..Default::default() }, 5);
    let one = csv_bytes(
        "flash_crowd_large",
        &Overrides { replications: Some(1), t_end: Some(30.0), only: Some(vec!["rfwpms".into()]), ..Default::default() },
        5,
    );
    assert_eq!(one.len(), 1);
    assert!(all.contains(&one[0]));
}
