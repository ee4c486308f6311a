use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use cctrace::dataset::{
    apply_tier_filter, ingest, read_tier, write_tier, Dataset, LoadMode, Provenance, SwapRecord, Tier, TierThresholds,
};
use cctrace::ledger::Transfer;
use cctrace::simgen::{generate_world, SybilSpec, WorldDraft, WorldSpec};
use cctrace::trace::{trace_single, TraceConfig};
use cctrace::Error;

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn busy_world() -> cctrace::simgen::World {
    let mut d = WorldDraft::new(WorldSpec {
        seed: 21,
        swap_count: 15,
        background_rate: 0.3,
        duration: 2 * 86_400,
        allow_decoys: true,
        ..WorldSpec::default()
    })
    .unwrap();
    d.plant_sybil(&SybilSpec::default()).unwrap();
    d.finish().unwrap()
}

#[test]
fn emit_load_emit_is_byte_identical() {
    let world = busy_world();
    let th = TierThresholds::default();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    world.write(a.path(), &th).unwrap();

    let ds = Dataset::load(a.path(), LoadMode::Strict).unwrap();
    assert!(ds.issues.is_empty());
    let original: Vec<&Transfer> = world.store.iter().collect();
    let loaded: Vec<&Transfer> = ds.store.iter().collect();
    assert_eq!(original, loaded);
    assert_eq!(ds.links, world.truth.links);
    assert_eq!(ds.sybils, world.truth.sybils);

    ds.write(b.path(), Some(&world.thresholds(&th))).unwrap();
    assert_eq!(files(a.path()), files(b.path()));

    for tier in Tier::ALL {
        let want = world.emit_tier(tier, &th).unwrap();
        assert_eq!(ds.tier(a.path(), tier, LoadMode::Strict).unwrap(), want, "{tier}");
    }
}

#[test]
fn tiers_roundtrip_on_their_own() {
    let world = busy_world();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    world.write(a.path(), &TierThresholds::default()).unwrap();
    for tier in [Tier::Hf, Tier::HfMini] {
        let (m, records) = read_tier(a.path(), tier, LoadMode::Strict).unwrap();
        write_tier(b.path(), tier, &records, m.provenance).unwrap();
        let dir = |r: &Path| r.join("tiers").join(tier.as_str());
        assert_eq!(files(&dir(a.path())), files(&dir(b.path())));
    }
}

#[test]
fn loaded_dataset_traces_like_the_world() {
    let world = busy_world();
    let dir = tempfile::tempdir().unwrap();
    world.write(dir.path(), &TierThresholds::default()).unwrap();
    let ds = Dataset::load(dir.path(), LoadMode::Strict).unwrap();
    let cfg = TraceConfig::default();
    for key in world.targets().iter().take(20) {
        let a = trace_single(&world.store, &world.oracle, key, &cfg).unwrap();
        let b = trace_single(&ds.store, &ds.oracle, key, &cfg).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn strict_and_lenient_loading() {
    let world = generate_world(&WorldSpec {
        swap_count: 3,
        ..WorldSpec::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    world.write(dir.path(), &TierThresholds::default()).unwrap();
    let path = dir.path().join("transfers.tsv");
    let mut text = fs::read_to_string(&path).unwrap();
    text.push_str("garbage\tline\n");
    fs::write(&path, text).unwrap();

    assert!(matches!(Dataset::load(dir.path(), LoadMode::Strict), Err(Error::Parse { .. })));
    let ds = Dataset::load(dir.path(), LoadMode::Lenient).unwrap();
    assert_eq!(ds.issues.len(), 1);
    assert_eq!(ds.store.len(), world.store.len());

    // A manifest that disagrees with the files is caught in strict mode.
    let manifest = dir.path().join("manifest.json");
    let m = fs::read_to_string(&manifest).unwrap();
    let n = world.store.len();
    fs::write(&manifest, m.replace(&format!("\"transfer_count\": {n}"), &format!("\"transfer_count\": {}", n + 1))).unwrap();
    let text = fs::read_to_string(&path).unwrap().replace("garbage\tline\n", "");
    fs::write(&path, text).unwrap();
    assert!(matches!(Dataset::load(dir.path(), LoadMode::Strict), Err(Error::Inconsistent(_))));
}

fn record(id: &str, asset: &str, amt: &str, delay: u64) -> SwapRecord {
    let out = if asset == "ETH" { "BTC" } else { "ETH" };
    SwapRecord {
        inbound_tx_id: format!("in-{id}"),
        inbound_chain: asset.into(),
        inbound_asset: asset.into(),
        inbound_amt: amt.parse().unwrap(),
        inbound_ts: 1_000,
        outbound_tx_id: format!("out-{id}"),
        outbound_chain: out.into(),
        outbound_asset: out.into(),
        outbound_amt: "1".parse().unwrap(),
        outbound_ts: 1_000 + delay,
        bridge: "thorchain".into(),
        inbound_from: None,
        outbound_to: None,
        extras: BTreeMap::new(),
    }
}

#[test]
fn tier_boundaries() {
    let th = TierThresholds::default();
    let records = vec![
        record("at", "BTC", "0.09", 1800),
        record("below", "BTC", "0.08999999", 10),
        record("late", "BTC", "1", 1801),
        record("eth-at", "ETH", "1.9", 0),
        record("eth-below", "ETH", "1.89999999", 0),
    ];
    let hf: Vec<String> = apply_tier_filter(&records, Tier::Hf, &th)
        .unwrap()
        .into_iter()
        .map(|r| r.inbound_tx_id)
        .collect();
    assert_eq!(hf, ["in-at", "in-eth-at"]);
    assert_eq!(apply_tier_filter(&records, Tier::Raw, &th).unwrap(), records);

    let many: Vec<SwapRecord> = (0..250).map(|i| record(&i.to_string(), "BTC", "1", 60)).collect();
    let mini = apply_tier_filter(&many, Tier::HfMini, &th).unwrap();
    assert_eq!(mini.len(), 100);
    let pos: Vec<usize> = mini.iter().map(|r| many.iter().position(|m| m == r).unwrap()).collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(apply_tier_filter(&mini, Tier::HfMini, &th).unwrap(), mini);
}

#[test]
fn ingest_external_records() {
    let world = busy_world();
    let src = tempfile::tempdir().unwrap();
    world.write(src.path(), &TierThresholds::default()).unwrap();
    let prices: Vec<PathBuf> = fs::read_dir(src.path().join("prices"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    let out = tempfile::tempdir().unwrap();
    let ds = ingest(
        &src.path().join("swaps.tsv"),
        &prices,
        &BTreeMap::new(),
        LoadMode::Strict,
        out.path(),
        Some(&TierThresholds::default()),
    )
    .unwrap();
    assert_eq!(ds.store.len(), 2 * world.truth.links.len());
    assert_eq!(ds.links.len(), world.truth.links.len());
    assert!(matches!(ds.manifest.tier.provenance, Provenance::External { .. }));
    // Without background traffic every source is found at rank 1 or close to it.
    let cfg = TraceConfig::default();
    let found = ds
        .links
        .iter()
        .filter(|l| {
            trace_single(&ds.store, &ds.oracle, &l.link.dst, &cfg)
                .unwrap()
                .rank_of(&l.link.src)
                .is_some()
        })
        .count();
    assert_eq!(found, ds.links.len());
}
