use std::collections::BTreeMap;
use std::path::PathBuf;

use phasorflow::mods::ModsDoc;
use phasorflow::scenario::ScenarioSpec;
use phasorflow::schema::{load_feeder, parse_feeder, FeederDoc};
use phasorflow_core::feeder::{nominal_slack_voltage, Bases, LineSpec, LoadSpec, NetworkParts, NodeSpec, DEFAULT_REGION, SLACK_ID};
use phasorflow_core::linalg::DenseMatrix;
use phasorflow_core::{Complex64, Network, Phase, PhaseSet};
use proptest::prelude::*;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn modified(feeder: &str, mods: &[&str]) -> Network {
    let mut net = load_feeder(&data(feeder)).unwrap();
    for m in mods {
        let list = ModsDoc::load(&data(m)).unwrap().to_modifications().unwrap();
        net = net.apply_modifications(&list).unwrap();
    }
    net
}

fn round_trip(net: &Network) -> Network {
    let text = serde_json::to_string_pretty(&FeederDoc::from_network(net)).unwrap();
    parse_feeder(&text).unwrap()
}

/// Sum of spot loads per phase, converted back to kW and kvar.
fn totals_kw(net: &Network) -> [(f64, f64); 3] {
    let s = net.bases().s_base_va / 1e3;
    let mut t = [(0.0, 0.0); 3];
    for ld in net.loads() {
        t[ld.phase.index()].0 += ld.demand.re * s;
        t[ld.phase.index()].1 += ld.demand.im * s;
    }
    t
}

#[test]
fn ieee13_load_totals_match_documentation() {
    let net = load_feeder(&data("ieee13.json")).unwrap();
    // totals row of the spot-load table
    let want = [(1158.0, 606.0), (973.0, 627.0), (1135.0, 753.0)];
    for (got, want) in totals_kw(&net).iter().zip(want) {
        assert!((got.0 - want.0).abs() < 1e-6 && (got.1 - want.1).abs() < 1e-6, "{got:?} vs {want:?}");
    }
}

#[test]
fn ieee37_load_totals_match_documentation() {
    let net = load_feeder(&data("ieee37.json")).unwrap();
    let want = [(727.0, 357.0), (639.0, 314.0), (1091.0, 530.0)];
    for (got, want) in totals_kw(&net).iter().zip(want) {
        assert!((got.0 - want.0).abs() < 1e-6 && (got.1 - want.1).abs() < 1e-6, "{got:?} vs {want:?}");
    }
}

fn assert_line_pu(net: &Network, from: &str, to: &str, ohm_per_mile: [[(f64, f64); 3]; 3], feet: f64, v_base: f64, s_base: f64) {
    let li = net.find_line(from, to).unwrap();
    let z = &net.lines()[li].impedance;
    let scale = feet / 5280.0 / (v_base * v_base / s_base);
    for i in 0..3 {
        for j in 0..3 {
            let want = Complex64::new(ohm_per_mile[i][j].0, ohm_per_mile[i][j].1) * scale;
            assert!((z[(i, j)] - want).norm() < 1e-12, "{from}:{to} ({i},{j}) {} vs {want}", z[(i, j)]);
        }
    }
}

#[test]
fn per_unit_conversion_of_documented_configurations() {
    let (aa, ab, ac, bb, bc, cc) = ((0.3465, 1.0179), (0.1560, 0.5017), (0.1580, 0.4236), (0.3375, 1.0478), (0.1535, 0.3849), (0.3414, 1.0348));
    let cfg601 = [[aa, ab, ac], [ab, bb, bc], [ac, bc, cc]];
    let net = load_feeder(&data("ieee13.json")).unwrap();
    assert_line_pu(&net, "650", "632", cfg601, 2000.0, 4160.0, 5e6);

    let (aa, ab, ac, bb, bc, cc) = ((0.4751, 0.2973), (0.1629, -0.0326), (0.1234, -0.0607), (0.4488, 0.2678), (0.1629, -0.0326), (0.4751, 0.2973));
    let cfg722 = [[aa, ab, ac], [ab, bb, bc], [ac, bc, cc]];
    let net = load_feeder(&data("ieee37.json")).unwrap();
    assert_line_pu(&net, "701", "702", cfg722, 960.0, 4800.0, 2.5e6);

    // a replacement line is converted with the same bases
    let net = modified("ieee13.json", &["mods_ieee13.json"]);
    assert_line_pu(&net, "633", "634", cfg601, 50.0, 4160.0, 5e6);
}

#[test]
fn shipped_feeders_need_modification_and_then_solve() {
    for (feeder, mods) in [("ieee13.json", "mods_ieee13.json"), ("ieee37.json", "mods_ieee37.json")] {
        let raw = load_feeder(&data(feeder)).unwrap();
        assert!(raw.ensure_solvable().is_err(), "{feeder}");
        let net = modified(feeder, &[mods]);
        net.ensure_solvable().unwrap();
        phasorflow_core::solve_exact(&net, &Default::default(), &Default::default()).unwrap();
    }
}

#[test]
fn dual_scenarios_have_expected_shape() {
    for (spec, nodes, switches) in [("ieee13_dual.json", 27, 1), ("ieee37_dual.json", 75, 2)] {
        let s = ScenarioSpec::load(&data(spec)).unwrap();
        let net = s.build_network(&data("")).unwrap();
        assert_eq!(net.nodes().len(), nodes, "{spec}");
        assert_eq!(net.open_switches().len(), switches, "{spec}");
    }
    let s = ScenarioSpec::load(&data("ieee13_dual.json")).unwrap();
    let net = s.build_network(&data("")).unwrap();
    // 1684 only has phases a and c
    assert_eq!(net.der().len(), 14);
    assert_eq!(net.vvc().len(), 12);
}

#[test]
fn shipped_networks_round_trip() {
    let mut nets = vec![
        load_feeder(&data("ieee13.json")).unwrap(),
        load_feeder(&data("ieee37.json")).unwrap(),
        modified("ieee13.json", &["mods_ieee13.json", "mods_ieee13_switching.json"]),
        modified("ieee37.json", &["mods_ieee37.json"]),
    ];
    for spec in ["ieee13_dual.json", "ieee37_dual.json"] {
        nets.push(ScenarioSpec::load(&data(spec)).unwrap().build_network(&data("")).unwrap());
    }
    for net in &nets {
        assert_eq!(&round_trip(net), net);
    }
}

fn chain(z: &[[f64; 4]], loads: &[(u8, f64, f64, f64)]) -> Network {
    let n = z.len();
    let mut nodes = vec![NodeSpec {
        id: SLACK_ID.into(),
        phases: PhaseSet::ABC,
        region: DEFAULT_REGION.into(),
    }];
    let mut lines = Vec::new();
    for (i, zi) in z.iter().enumerate() {
        let id = format!("n{i}");
        nodes.push(NodeSpec {
            id: id.clone(),
            phases: PhaseSet::ABC,
            region: DEFAULT_REGION.into(),
        });
        let from = if i == 0 { SLACK_ID.to_string() } else { format!("n{}", i - 1) };
        let m = DenseMatrix::from_fn(3, 3, |r, c| {
            if r == c {
                Complex64::new(zi[0], zi[1])
            } else {
                Complex64::new(zi[2], zi[3])
            }
        });
        lines.push(LineSpec::with_impedance(&from, &id, PhaseSet::ABC, m));
    }
    let loads = loads
        .iter()
        .map(|&(k, re, im, beta_s)| LoadSpec {
            node: format!("n{}", k as usize % n),
            phase: Phase::ALL[k as usize % 3],
            demand: Complex64::new(re, im),
            beta_s,
            beta_z: 1.0 - beta_s,
            note: None,
        })
        .collect();
    Network::from_parts(NetworkParts {
        name: Some("chain".into()),
        bases: Bases::single(1e6, 4160.0),
        slack: SLACK_ID.into(),
        slack_voltage: nominal_slack_voltage(),
        nodes,
        line_configs: BTreeMap::new(),
        lines,
        loads,
        caps: vec![],
        der: vec![],
        vvc: vec![],
    })
    .unwrap()
}

proptest! {
    #[test]
    fn random_feeders_round_trip(
        z in prop::collection::vec(prop::array::uniform4(-1.0f64..1.0), 1..6),
        loads in prop::collection::vec((any::<u8>(), -1.0f64..1.0, -1.0f64..1.0, 0.0f64..=1.0), 0..10),
    ) {
        let net = chain(&z, &loads);
        prop_assert_eq!(round_trip(&net), net);
    }
}
