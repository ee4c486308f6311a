mod common;

use std::collections::BTreeSet;

use cctrace::ledger::{Amount, ChainModel, ChainOrd, Registry, StoreBuilder, Transfer, TransferKey, TransferStore, TxOut};
use cctrace::orchestrator::{
    step_loop, Action, ActionKind, BeliefState, Env, Finding, HeuristicPolicy, Outcome, Policy, TranscriptRecord,
};
use cctrace::price::{PriceOracle, PriceSample, PriceSeries};
use cctrace::simgen::generate_world;
use cctrace::trace::{trace_single, TraceConfig};
use cctrace::Error;

fn bits(s: &str) -> Vec<bool> {
    s.chars().map(|c| c == '1').collect()
}

fn assert_monotone(transcript: &[TranscriptRecord]) {
    for w in transcript.windows(2) {
        let (a, b) = (bits(&w[0].belief), bits(&w[1].belief));
        assert!(a.iter().zip(&b).all(|(x, y)| !x || *y), "{} -> {}", w[0].belief, w[1].belief);
    }
}

#[test]
fn orchestrated_equals_direct_trace() {
    for seed in 0..4u64 {
        let world = generate_world(&common::random_spec(seed + 100)).unwrap();
        let cfg = TraceConfig::default();
        let env = Env {
            store: &world.store,
            oracle: &world.oracle,
            cfg: &cfg,
        };
        for key in world.targets() {
            let mut p = HeuristicPolicy::new(key.clone(), &cfg);
            let out = step_loop(&mut p, env, BeliefState::fresh(), 32).unwrap();
            assert_monotone(&out.transcript);
            match &out.outcome {
                Outcome::Completed(r) => {
                    let direct = trace_single(&world.store, &world.oracle, &key, &r.config).unwrap();
                    assert_eq!(r, &direct, "seed {seed} target {key}");
                    assert!(out.belief.is_complete());
                }
                Outcome::Failed(f) => {
                    // The last settings tried must leave nothing standing.
                    let tries = |k| out.transcript.iter().filter(|t| t.action == k).count() as u64;
                    let last = TraceConfig {
                        delta_t: cfg.delta_t * tries(ActionKind::SearchCandidates).max(1),
                        w_p: cfg.w_p * tries(ActionKind::Validate).max(1),
                        ..cfg.clone()
                    };
                    let direct = trace_single(&world.store, &world.oracle, &key, &last).unwrap();
                    assert!(direct.candidates.is_empty(), "{f:?}");
                }
            }
            for line in out.transcript_jsonl().lines() {
                let rec: TranscriptRecord = serde_json::from_str(line).unwrap();
                assert_eq!(rec.belief.len(), 6);
            }
        }
    }
}

fn two_chain_store(transfers: Vec<Transfer>) -> (TransferStore, PriceOracle) {
    let mut r = Registry::new();
    r.add_chain("BTC".into(), ChainModel::Utxo).unwrap();
    r.add_chain("ETH".into(), ChainModel::Account).unwrap();
    r.add_asset("BTC".into(), ["BTC".into()]).unwrap();
    r.add_asset("ETH".into(), ["ETH".into()]).unwrap();
    let mut b = StoreBuilder::new(r);
    for t in transfers {
        b.insert(t).unwrap();
    }
    let mut o = PriceOracle::new();
    o.insert(PriceSeries::new("ETH".into(), "BTC".into(), vec![PriceSample { ts: 0, rate: 20.0 }]).unwrap())
        .unwrap();
    (b.build().unwrap(), o)
}

fn transfer(chain: &str, tx: &str, ts: u64, units: u64) -> Transfer {
    Transfer {
        tx_id: tx.into(),
        chain: chain.into(),
        ts,
        asset: chain.into(),
        amt: Amount::from_units(units),
        spenders: BTreeSet::from(["s".to_string()]),
        recipients: BTreeSet::from(["r".to_string()]),
        ord: ChainOrd::new(ts, 0),
        inputs: vec![],
        outputs: if chain == "BTC" {
            vec![TxOut {
                address: "r".into(),
                amount: Amount::from_units(units),
            }]
        } else {
            vec![]
        },
    }
}

#[test]
fn late_settlement_is_found_on_retry() {
    // Settles 5000 s after the source, beyond the default 3600 s window.
    let (store, oracle) = two_chain_store(vec![
        transfer("BTC", "src", 10_000, 100_000_000),
        transfer("ETH", "dst", 15_000, 1_980_000_000),
    ]);
    let cfg = TraceConfig::default();
    assert!(trace_single(&store, &oracle, &TransferKey::new("ETH", "dst"), &cfg)
        .unwrap()
        .candidates
        .is_empty());
    let env = Env {
        store: &store,
        oracle: &oracle,
        cfg: &cfg,
    };
    let mut p = HeuristicPolicy::new(TransferKey::new("ETH", "dst"), &cfg);
    let out = step_loop(&mut p, env, BeliefState::fresh(), 32).unwrap();
    let r = out.result().expect("completed");
    assert_eq!(r.config.delta_t, 7200);
    assert_eq!(r.rank_of(&TransferKey::new("BTC", "src")), Some(1));
    let searches = out.transcript.iter().filter(|t| t.action == ActionKind::SearchCandidates).count();
    assert_eq!(searches, 2);
    assert_monotone(&out.transcript);
}

#[test]
fn unreachable_source_fails_after_one_retry() {
    let (store, oracle) = two_chain_store(vec![
        transfer("BTC", "src", 10_000, 100_000_000),
        transfer("ETH", "dst", 30_000, 1_980_000_000),
    ]);
    let cfg = TraceConfig::default();
    let env = Env {
        store: &store,
        oracle: &oracle,
        cfg: &cfg,
    };
    let mut p = HeuristicPolicy::new(TransferKey::new("ETH", "dst"), &cfg);
    let out = step_loop(&mut p, env, BeliefState::fresh(), 32).unwrap();
    assert!(matches!(out.outcome, Outcome::Failed(_)));
    assert_eq!(out.belief.bit_string(), "111000");
    assert_eq!(out.transcript.last().unwrap().action, ActionKind::Terminate);
}

#[test]
fn budget_exhaustion_reports_partial_belief() {
    let (store, oracle) = two_chain_store(vec![
        transfer("BTC", "src", 10_000, 100_000_000),
        transfer("ETH", "dst", 10_600, 1_980_000_000),
    ]);
    let cfg = TraceConfig::default();
    let env = Env {
        store: &store,
        oracle: &oracle,
        cfg: &cfg,
    };
    let mut p = HeuristicPolicy::new(TransferKey::new("ETH", "dst"), &cfg);
    let out = step_loop(&mut p, env, BeliefState::fresh(), 3).unwrap();
    match out.outcome {
        Outcome::Failed(f) => {
            assert!(f.reason.contains("budget"));
            assert_eq!(f.belief, "111000");
        }
        Outcome::Completed(_) => panic!("budget of 3 cannot complete six milestones"),
    }
    let mut p = HeuristicPolicy::new(TransferKey::new("ETH", "dst"), &cfg);
    assert!(step_loop(&mut p, env, BeliefState::fresh(), 0).is_err());
}

#[test]
fn complete_belief_terminates_immediately() {
    let (store, oracle) = two_chain_store(vec![transfer("ETH", "dst", 10_600, 1)]);
    let cfg = TraceConfig::default();
    let env = Env {
        store: &store,
        oracle: &oracle,
        cfg: &cfg,
    };
    let mut p = HeuristicPolicy::new(TransferKey::new("ETH", "dst"), &cfg);
    let out = step_loop(&mut p, env, BeliefState::complete(), 32).unwrap();
    assert_eq!(out.transcript.len(), 1);
    assert_eq!(out.transcript[0].action, ActionKind::Terminate);
    assert_eq!(out.belief, BeliefState::complete());
}

/// Replays a fixed script regardless of the belief.
struct Scripted(Vec<Action>);

impl Policy for Scripted {
    fn decide(&mut self, _: &BeliefState, _: Option<&Finding>) -> Action {
        if self.0.is_empty() {
            Action::Terminate { reason: "script done".into() }
        } else {
            self.0.remove(0)
        }
    }
}

#[test]
fn protocol_violations() {
    let (store, oracle) = two_chain_store(vec![
        transfer("BTC", "src", 10_000, 100_000_000),
        transfer("ETH", "dst", 10_600, 1_980_000_000),
    ]);
    let cfg = TraceConfig::default();
    let env = Env {
        store: &store,
        oracle: &oracle,
        cfg: &cfg,
    };
    let target = TransferKey::new("ETH", "dst");
    let mut skip = Scripted(vec![Action::Score]);
    assert!(matches!(
        step_loop(&mut skip, env, BeliefState::fresh(), 32),
        Err(Error::ProtocolViolation(_))
    ));
    let mut repeat = Scripted(vec![
        Action::ResolveTarget { target: target.clone() },
        Action::ResolveTarget { target },
    ]);
    assert!(matches!(
        step_loop(&mut repeat, env, BeliefState::fresh(), 32),
        Err(Error::ProtocolViolation(_))
    ));
}
