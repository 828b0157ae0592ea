mod common;

use std::collections::BTreeSet;

use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reqc_core::dsl::codes::CYCLE_IN_DEPENDENCIES;
use reqc_core::dsl::{parse_bytes, parse_document, serialize_document, validate_document, Identifier};
use reqc_core::graph::{build_graph, Phase};
use reqc_core::interface::{
    match_data_flows, ApiInterfaceSig, DataOperation, Event, FieldType, InterfaceId, InterfaceKind, InterfaceSig,
    PayloadField, PayloadSchema, UiInterfaceSig,
};
use reqc_core::trace::{RequirementRef, TraceKey, TraceStore, TraceTuple};
use reqc_core::verification::{classify_test_kind, pass_rate, TestOutcome};

fn outcomes(bits: &[bool]) -> Vec<TestOutcome> {
    bits.iter()
        .enumerate()
        .map(|(i, &passed)| TestOutcome {
            case_id: id(&format!("T{i}")),
            passed,
            feedback: if passed { String::new() } else { "failed".into() },
            duration_ms: 0,
        })
        .collect()
}

fn event(name: u8, typed: bool) -> Event {
    let field_type = if typed { FieldType::String } else { FieldType::Number };
    Event::new(
        format!("E{name}"),
        PayloadSchema {
            fields: vec![PayloadField {
                name: "v".into(),
                field_type,
            }],
        },
    )
}

fn arb_interface() -> impl Strategy<Value = (bool, Vec<(u8, bool)>, Vec<(u8, bool)>)> {
    (
        any::<bool>(),
        prop::collection::vec((0u8..4, any::<bool>()), 1..3),
        prop::collection::vec((0u8..4, any::<bool>()), 0..3),
    )
}

fn build_interface(i: usize, (ui, out, inc): &(bool, Vec<(u8, bool)>, Vec<(u8, bool)>)) -> InterfaceSig {
    let out: Vec<Event> = out.iter().map(|&(n, t)| event(n, t)).collect();
    let inc: Vec<Event> = inc.iter().map(|&(n, t)| event(n, t)).collect();
    if *ui {
        InterfaceSig::Ui(UiInterfaceSig {
            id: InterfaceId::new(format!("ui.{i}")),
            name: format!("Ui{i}"),
            location: String::new(),
            layout_notes: String::new(),
            produces: out,
            consumes: inc,
        })
    } else {
        InterfaceSig::Api(ApiInterfaceSig {
            id: InterfaceId::new(format!("api.{i}")),
            name: format!("Api{i}"),
            location: String::new(),
            accepts: inc.into_iter().next().unwrap_or_else(|| event(9, true)),
            operations: vec![DataOperation::new("svc.run() -> void")],
            emits: out,
        })
    }
}

fn arb_tuple() -> impl Strategy<Value = TraceTuple> {
    (
        0u8..6,
        any::<bool>(),
        prop::collection::btree_set(0u8..6, 0..3),
        prop::collection::btree_set(0u8..8, 0..4),
        prop::option::of(0u8..4),
    )
        .prop_map(|(r, scenario, interfaces, tests, code)| TraceTuple {
            requirement: if scenario {
                RequirementRef::scenario(id(&format!("S{r}")))
            } else {
                RequirementRef::node(id(&format!("N{r}")))
            },
            interfaces: interfaces.into_iter().map(|i| InterfaceId::new(format!("db.{i}"))).collect(),
            tests: tests.into_iter().map(|t| id(&format!("T{t}"))).collect(),
            code: code.map(|c| id(&format!("code-N{c}"))),
        })
}

/// Reachability by repeated relaxation, independent of the validator's DFS.
fn has_cycle(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut reach = vec![vec![false; n]; n];
    for &(a, b) in edges {
        reach[a][b] = true;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    (0..n).any(|i| reach[i][i])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parse_is_total(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
        let _ = parse_bytes(&bytes);
    }

    #[test]
    fn parse_is_total_on_near_documents(seed in any::<u64>(), cut in 0usize..2000, junk in "[{}\\[\\]\":,a-z \n]{0,8}") {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let text = serialize_document(&random_document(&mut rng, 6));
        let mut at = cut.min(text.len());
        while !text.is_char_boundary(at) {
            at -= 1;
        }
        let mutated = format!("{}{junk}{}", &text[..at], &text[at..]);
        let _ = parse_document(&mutated);
    }

    #[test]
    fn serialize_is_a_fixed_point(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let doc = random_document(&mut rng, 20);
        let text = serialize_document(&doc);
        let parsed = parse_document(&text).unwrap();
        prop_assert_eq!(serialize_document(&parsed), text);
        prop_assert!(validate_document(&parsed).errors.is_empty());
    }

    #[test]
    fn schedule_shape(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let doc = compile_tree(&mut rng, 30);
        let graph = build_graph(&doc).unwrap();
        let schedule = graph.plan_schedule();
        prop_assert_eq!(schedule.len(), 2 * graph.len());
        prop_assert_eq!(&schedule[0].node_id, graph.root());
        prop_assert_eq!(schedule[0].phase, Phase::Red);
        prop_assert_eq!(&schedule.last().unwrap().node_id, graph.root());
        prop_assert_eq!(schedule.last().unwrap().phase, Phase::Green);
        // Red entries follow document pre-order.
        let reds: Vec<&Identifier> = schedule.iter().filter(|e| e.phase == Phase::Red).map(|e| &e.node_id).collect();
        let preorder: Vec<&Identifier> = doc.nodes().into_iter().map(|n| &n.id).collect();
        prop_assert_eq!(reds, preorder);
        prop_assert!(graph.dependency_order_check(&schedule).len() <= graph.dependency_edges().len());
    }

    #[test]
    fn cycle_detection_matches_oracle(n in 2usize..7, raw in prop::collection::vec((0usize..7, 0usize..7), 0..10)) {
        let edges: Vec<(usize, usize)> = raw
            .into_iter()
            .map(|(a, b)| (a % n, b % n))
            .filter(|(a, b)| a != b)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut text = String::from("node ROOT \"r\" { description: \"\" children {\n");
        for i in 0..n {
            // An edge (a, b) means b depends on a.
            let deps: Vec<String> = edges.iter().filter(|(_, b)| *b == i).map(|(a, _)| format!("N{a}")).collect();
            let deps = if deps.is_empty() { String::new() } else { format!("dependencies: [{}]", deps.join(", ")) };
            text.push_str(&format!(
                "node N{i} \"n\" {{ description: \"d\" {deps} scenario S{i} \"s\" {{ step {{ given: \"\" when: \"w\" then: \"t\" }} }} }}\n"
            ));
        }
        text.push_str("} }");
        let report = validate_document(&parse_document(&text).unwrap());
        prop_assert_eq!(report.has_error(CYCLE_IN_DEPENDENCIES), has_cycle(n, &edges));
    }

    #[test]
    fn flows_ignore_input_order(specs in prop::collection::vec(arb_interface(), 1..6), seed in any::<u64>()) {
        let interfaces: Vec<InterfaceSig> = specs.iter().enumerate().map(|(i, s)| build_interface(i, s)).collect();
        let mut shuffled = interfaces.clone();
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(match_data_flows(&interfaces), match_data_flows(&shuffled));
    }

    #[test]
    fn pass_rate_is_a_weighted_mean(a in prop::collection::vec(any::<bool>(), 1..80), b in prop::collection::vec(any::<bool>(), 1..80)) {
        let (ra, rb) = (pass_rate(&outcomes(&a)).unwrap(), pass_rate(&outcomes(&b)).unwrap());
        let joined: Vec<bool> = a.iter().chain(&b).copied().collect();
        let rj = pass_rate(&outcomes(&joined)).unwrap();
        let mean = (ra.percent() * a.len() as f64 + rb.percent() * b.len() as f64) / joined.len() as f64;
        prop_assert!((rj.percent() - mean).abs() < 1e-9);
        prop_assert!((0.0..=100.0).contains(&rj.percent()));
        prop_assert!((rj.hundredths() as f64 / 100.0 - rj.percent()).abs() <= 0.005 + 1e-9);
    }

    #[test]
    fn trace_indexes_agree_with_scans(tuples in prop::collection::vec(arb_tuple(), 0..30)) {
        let store = TraceStore::from_tuples(tuples.clone());
        let distinct: BTreeSet<String> = tuples.iter().map(|t| serde_json::to_string(t).unwrap()).collect();
        prop_assert_eq!(store.len(), distinct.len());
        for key in [TraceKey::Requirement, TraceKey::Interface, TraceKey::Test, TraceKey::Code] {
            for probe in ["N0", "N3", "S1", "db.0", "db.5", "T0", "T7", "code-N1", "missing"] {
                prop_assert_eq!(store.query(key, probe), store.scan(key, probe));
            }
        }
        let reimported = TraceStore::import(&store.export()).unwrap();
        prop_assert_eq!(reimported, store);
    }

    #[test]
    fn classification_ignores_target_order(targets in prop::collection::vec(prop::sample::select(vec![InterfaceKind::Ui, InterfaceKind::Api, InterfaceKind::Db]), 1..5)) {
        let mut reversed = targets.clone();
        reversed.reverse();
        prop_assert_eq!(classify_test_kind(&targets).ok(), classify_test_kind(&reversed).ok());
    }
}

#[test]
fn pass_rate_examples() {
    let mut bits = vec![true; 27];
    bits.extend([false; 3]);
    assert_eq!(pass_rate(&outcomes(&bits)).unwrap().to_string(), "90.00");
    let mut bits = vec![true; 41];
    bits.extend([false; 4]);
    assert_eq!(pass_rate(&outcomes(&bits)).unwrap().to_string(), "91.11");
    assert!(pass_rate(&[]).is_err());
}
