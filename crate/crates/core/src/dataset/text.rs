//! Tab-separated record formats.
//!
//! Every file starts with a `#` magic line naming the format and version,
//! followed by a column header line and one record per line. Field values
//! percent-escape `%`, tab, CR, LF, `,`, `=` and `:` so that list fields
//! (`a,b`), outpoints (`tx:vout`) and outputs (`addr=amount`) split
//! unambiguously. Amounts are written with exactly eight decimals and rates
//! in shortest round-trip form, so writing a loaded file reproduces it byte
//! for byte.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use super::{LoadMode, SwapRecord, TruthLink};
use crate::error::{Error, Result};
use crate::ledger::{
    Amount, AssetId, BridgeId, ChainId, ChainModel, ChainOrd, CrossChainLink, OutPoint, Registry, Transfer,
    TransferKey, TxOut,
};
use crate::price::{PriceSample, PriceSeries};

pub const TRANSFERS_MAGIC: &str = "# cctrace transfers v1";
pub const PRICES_MAGIC: &str = "# cctrace prices v1";
pub const SWAPS_MAGIC: &str = "# cctrace swaps v1";
pub const LINKS_MAGIC: &str = "# cctrace links v1";

const TRANSFER_COLUMNS: [&str; 11] = [
    "tx_id",
    "chain",
    "ts",
    "asset",
    "amt",
    "spenders",
    "recipients",
    "block_height",
    "intra_index",
    "inputs",
    "outputs",
];

pub const SWAP_COLUMNS: [&str; 13] = [
    "inbound_tx_id",
    "inbound_chain",
    "inbound_asset",
    "inbound_amt",
    "inbound_ts",
    "outbound_tx_id",
    "outbound_chain",
    "outbound_asset",
    "outbound_amt",
    "outbound_ts",
    "bridge",
    "inbound_from",
    "outbound_to",
];

/// The first eleven swap columns are mandatory; the address columns are
/// optional.
const REQUIRED_SWAP_COLUMNS: usize = 11;

const LINK_COLUMNS: [&str; 7] = ["src_tx", "src_chain", "dst_tx", "dst_chain", "bridge", "fee", "delay"];

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '%' | '\t' | '\n' | '\r' | ',' | '=' | ':' => {
                let _ = write!(out, "%{:02X}", c as u32);
            }
            _ => out.push(c),
        }
    }
    out
}

fn unescape(s: &str, line: usize) -> Result<String> {
    if !s.contains('%') {
        return Ok(s.to_owned());
    }
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = s
                .get(i + 1..i + 3)
                .ok_or_else(|| Error::parse(line, format!("truncated escape in {s:?}")))?;
            let b = u8::from_str_radix(hex, 16).map_err(|_| Error::parse(line, format!("bad escape %{hex}")))?;
            out.push(b);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).map_err(|_| Error::parse(line, "escaped field is not UTF-8"))
}

fn join<'a>(items: impl IntoIterator<Item = &'a String>) -> String {
    items.into_iter().map(|s| escape(s)).collect::<Vec<_>>().join(",")
}

fn split_list(field: &str, line: usize) -> Result<Vec<String>> {
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field.split(',').map(|s| unescape(s, line)).collect()
}

fn num<T: std::str::FromStr>(field: &str, what: &str, line: usize) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} {field:?}")))
}

fn amount(field: &str, line: usize) -> Result<Amount> {
    field
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid amount {field:?}")))
}

/// Data lines after the magic and header, with 1-based line numbers.
fn body<'a>(text: &'a str, magic: &str) -> Result<(Vec<&'a str>, Vec<(usize, &'a str)>)> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first.starts_with(magic) => {}
        _ => return Err(Error::parse(1, format!("expected header {magic:?}"))),
    }
    let (_, header) = lines.next().ok_or_else(|| Error::parse(2, "missing column header"))?;
    let columns = header.split('\t').collect();
    let rows = lines.filter(|(_, l)| !l.is_empty()).map(|(i, l)| (i + 1, l)).collect();
    Ok((columns, rows))
}

fn check_columns(found: &[&str], expected: &[&str]) -> Result<()> {
    if found != expected {
        return Err(Error::parse(2, format!("unexpected columns {found:?}, expected {expected:?}")));
    }
    Ok(())
}

/// Issues collected in lenient mode.
pub type Issues = Vec<(usize, String)>;

fn handle<T>(mode: LoadMode, issues: &mut Issues, line: usize, r: Result<T>) -> Result<Option<T>> {
    match (r, mode) {
        (Ok(v), _) => Ok(Some(v)),
        (Err(e), LoadMode::Strict) => Err(e),
        (Err(e), LoadMode::Lenient) => {
            issues.push((line, e.to_string()));
            Ok(None)
        }
    }
}

pub fn write_transfers<'a>(transfers: impl IntoIterator<Item = &'a Transfer>) -> String {
    let mut s = String::new();
    s.push_str(TRANSFERS_MAGIC);
    s.push('\n');
    s.push_str(&TRANSFER_COLUMNS.join("\t"));
    s.push('\n');
    for t in transfers {
        let inputs: Vec<String> = t.inputs.iter().map(|o| format!("{}:{}", escape(&o.tx_id), o.vout)).collect();
        let outputs: Vec<String> = t.outputs.iter().map(|o| format!("{}={}", escape(&o.address), o.amount)).collect();
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            escape(&t.tx_id),
            escape(t.chain.as_str()),
            t.ts,
            escape(t.asset.as_str()),
            t.amt,
            join(&t.spenders),
            join(&t.recipients),
            t.ord.height,
            t.ord.index,
            inputs.join(","),
            outputs.join(",")
        );
    }
    s
}

/// Parses a transfers file. Missing block heights are derived from the
/// timestamp; missing intra-block indexes number the records sharing a
/// height in file order.
pub fn read_transfers(text: &str, mode: LoadMode, issues: &mut Issues) -> Result<Vec<Transfer>> {
    let (columns, rows) = body(text, TRANSFERS_MAGIC)?;
    check_columns(&columns, &TRANSFER_COLUMNS)?;
    let mut next_index: HashMap<(ChainId, u64), u32> = HashMap::new();
    let mut out = Vec::with_capacity(rows.len());
    for (line, row) in rows {
        let parsed = parse_transfer(row, line, &mut next_index);
        if let Some(t) = handle(mode, issues, line, parsed)? {
            out.push(t);
        }
    }
    Ok(out)
}

fn parse_transfer(row: &str, line: usize, next_index: &mut HashMap<(ChainId, u64), u32>) -> Result<Transfer> {
    let f: Vec<&str> = row.split('\t').collect();
    if f.len() != TRANSFER_COLUMNS.len() {
        return Err(Error::parse(line, format!("expected {} fields, found {}", TRANSFER_COLUMNS.len(), f.len())));
    }
    let chain = ChainId::new(unescape(f[1], line)?);
    let ts: u64 = num(f[2], "timestamp", line)?;
    let height: u64 = if f[7].is_empty() { ts } else { num(f[7], "block height", line)? };
    let slot = next_index.entry((chain.clone(), height)).or_insert(0);
    let index: u32 = if f[8].is_empty() { *slot } else { num(f[8], "intra-block index", line)? };
    *slot = (*slot).max(index.saturating_add(1));

    let inputs = split_raw(f[9])
        .map(|item| {
            let (tx, vout) = item
                .rsplit_once(':')
                .ok_or_else(|| Error::parse(line, format!("invalid input {item:?}")))?;
            Ok(OutPoint {
                tx_id: unescape(tx, line)?,
                vout: num(vout, "vout", line)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let outputs = split_raw(f[10])
        .map(|item| {
            let (addr, amt) = item
                .rsplit_once('=')
                .ok_or_else(|| Error::parse(line, format!("invalid output {item:?}")))?;
            Ok(TxOut {
                address: unescape(addr, line)?,
                amount: amount(amt, line)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let spenders: BTreeSet<String> = split_list(f[5], line)?.into_iter().collect();
    let recipients: BTreeSet<String> = split_list(f[6], line)?.into_iter().collect();
    if spenders.is_empty() || recipients.is_empty() {
        return Err(Error::parse(line, "spender and recipient sets must be non-empty"));
    }
    Ok(Transfer {
        tx_id: unescape(f[0], line)?,
        chain,
        ts,
        asset: AssetId::new(unescape(f[3], line)?),
        amt: amount(f[4], line)?,
        spenders,
        recipients,
        ord: ChainOrd::new(height, index),
        inputs,
        outputs,
    })
}

fn split_raw(field: &str) -> impl Iterator<Item = &str> {
    field.split(',').filter(|s| !s.is_empty())
}

pub fn write_prices(series: &PriceSeries) -> String {
    let mut s = format!(
        "{PRICES_MAGIC} base={} quote={}\nts\trate\n",
        escape(series.base().as_str()),
        escape(series.quote().as_str())
    );
    for p in series.samples() {
        let _ = writeln!(s, "{}\t{}", p.ts, p.rate);
    }
    s
}

/// Parses a price file; timestamps must strictly increase.
pub fn read_prices(text: &str) -> Result<PriceSeries> {
    let first = text.lines().next().unwrap_or_default();
    let rest = first
        .strip_prefix(PRICES_MAGIC)
        .ok_or_else(|| Error::parse(1, format!("expected header {PRICES_MAGIC:?}")))?;
    let mut base = None;
    let mut quote = None;
    for kv in rest.split_whitespace() {
        match kv.split_once('=') {
            Some(("base", v)) => base = Some(unescape(v, 1)?),
            Some(("quote", v)) => quote = Some(unescape(v, 1)?),
            _ => return Err(Error::parse(1, format!("unexpected header token {kv:?}"))),
        }
    }
    let (base, quote) = match (base, quote) {
        (Some(b), Some(q)) => (AssetId::new(b), AssetId::new(q)),
        _ => return Err(Error::parse(1, "price header must name base and quote")),
    };
    let (columns, rows) = body(text, PRICES_MAGIC)?;
    check_columns(&columns, &["ts", "rate"])?;
    let mut samples: Vec<PriceSample> = Vec::with_capacity(rows.len());
    for (line, row) in rows {
        let (ts, rate) = row
            .split_once('\t')
            .ok_or_else(|| Error::parse(line, "expected ts<TAB>rate"))?;
        let ts: u64 = num(ts, "timestamp", line)?;
        let rate: f64 = num(rate, "rate", line)?;
        if let Some(prev) = samples.last() {
            if prev.ts >= ts {
                return Err(Error::parse(line, format!("timestamp {ts} does not increase")));
            }
        }
        samples.push(PriceSample { ts, rate });
    }
    PriceSeries::new(base, quote, samples)
}

pub fn write_swaps(records: &[SwapRecord]) -> String {
    let extra_cols: BTreeSet<&String> = records.iter().flat_map(|r| r.extras.keys()).collect();
    let mut s = String::new();
    s.push_str(SWAPS_MAGIC);
    s.push('\n');
    let mut header: Vec<String> = SWAP_COLUMNS.iter().map(|c| c.to_string()).collect();
    header.extend(extra_cols.iter().map(|c| escape(c)));
    s.push_str(&header.join("\t"));
    s.push('\n');
    for r in records {
        let mut f = vec![
            escape(&r.inbound_tx_id),
            escape(r.inbound_chain.as_str()),
            escape(r.inbound_asset.as_str()),
            r.inbound_amt.to_string(),
            r.inbound_ts.to_string(),
            escape(&r.outbound_tx_id),
            escape(r.outbound_chain.as_str()),
            escape(r.outbound_asset.as_str()),
            r.outbound_amt.to_string(),
            r.outbound_ts.to_string(),
            escape(r.bridge.as_str()),
            r.inbound_from.as_deref().map(escape).unwrap_or_default(),
            r.outbound_to.as_deref().map(escape).unwrap_or_default(),
        ];
        f.extend(extra_cols.iter().map(|c| r.extras.get(*c).map(|v| escape(v)).unwrap_or_default()));
        s.push_str(&f.join("\t"));
        s.push('\n');
    }
    s
}

/// Parses swap records. Columns beyond the known set are kept verbatim in
/// [`SwapRecord::extras`].
pub fn read_swaps(text: &str, mode: LoadMode, issues: &mut Issues) -> Result<Vec<SwapRecord>> {
    let (columns, rows) = body(text, SWAPS_MAGIC)?;
    let mut pos: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, c) in columns.iter().enumerate() {
        if pos.insert(c, i).is_some() {
            return Err(Error::parse(2, format!("duplicate column {c:?}")));
        }
    }
    for c in &SWAP_COLUMNS[..REQUIRED_SWAP_COLUMNS] {
        if !pos.contains_key(c) {
            return Err(Error::parse(2, format!("missing column {c:?}")));
        }
    }
    let extra_cols: Vec<(String, usize)> = columns
        .iter()
        .enumerate()
        .filter(|(_, c)| !SWAP_COLUMNS.contains(c))
        .map(|(i, c)| Ok((unescape(c, 2)?, i)))
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(rows.len());
    for (line, row) in rows {
        let parsed = parse_swap(row, line, columns.len(), &pos, &extra_cols);
        if let Some(r) = handle(mode, issues, line, parsed)? {
            out.push(r);
        }
    }
    Ok(out)
}

fn parse_swap(row: &str, line: usize, width: usize, pos: &BTreeMap<&str, usize>, extra_cols: &[(String, usize)]) -> Result<SwapRecord> {
    let f: Vec<&str> = row.split('\t').collect();
    if f.len() != width {
        return Err(Error::parse(line, format!("expected {width} fields, found {}", f.len())));
    }
    let get = |c: &str| f[pos[c]];
    let opt = |c: &str| -> Result<Option<String>> {
        match pos.get(c).map(|&i| f[i]) {
            None | Some("") => Ok(None),
            Some(v) => unescape(v, line).map(Some),
        }
    };
    let mut extras = BTreeMap::new();
    for (name, i) in extra_cols {
        if !f[*i].is_empty() {
            extras.insert(name.clone(), unescape(f[*i], line)?);
        }
    }
    let r = SwapRecord {
        inbound_tx_id: unescape(get("inbound_tx_id"), line)?,
        inbound_chain: ChainId::new(unescape(get("inbound_chain"), line)?),
        inbound_asset: AssetId::new(unescape(get("inbound_asset"), line)?),
        inbound_amt: amount(get("inbound_amt"), line)?,
        inbound_ts: num(get("inbound_ts"), "timestamp", line)?,
        outbound_tx_id: unescape(get("outbound_tx_id"), line)?,
        outbound_chain: ChainId::new(unescape(get("outbound_chain"), line)?),
        outbound_asset: AssetId::new(unescape(get("outbound_asset"), line)?),
        outbound_amt: amount(get("outbound_amt"), line)?,
        outbound_ts: num(get("outbound_ts"), "timestamp", line)?,
        bridge: BridgeId::new(unescape(get("bridge"), line)?),
        inbound_from: opt("inbound_from")?,
        outbound_to: opt("outbound_to")?,
        extras,
    };
    r.validate().map_err(|m| Error::parse(line, m))?;
    Ok(r)
}

pub fn write_links(links: &[TruthLink]) -> String {
    let mut s = format!("{LINKS_MAGIC}\n{}\n", LINK_COLUMNS.join("\t"));
    for l in links {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            escape(&l.link.src.tx_id),
            escape(l.link.src.chain.as_str()),
            escape(&l.link.dst.tx_id),
            escape(l.link.dst.chain.as_str()),
            escape(l.link.bridge.as_str()),
            l.fee.map(|f| f.to_string()).unwrap_or_default(),
            l.delay
        );
    }
    s
}

pub fn read_links(text: &str) -> Result<Vec<TruthLink>> {
    let (columns, rows) = body(text, LINKS_MAGIC)?;
    check_columns(&columns, &LINK_COLUMNS)?;
    rows.into_iter()
        .map(|(line, row)| {
            let f: Vec<&str> = row.split('\t').collect();
            if f.len() != LINK_COLUMNS.len() {
                return Err(Error::parse(line, format!("expected {} fields, found {}", LINK_COLUMNS.len(), f.len())));
            }
            Ok(TruthLink {
                link: CrossChainLink {
                    src: TransferKey::new(unescape(f[1], line)?, unescape(f[0], line)?),
                    dst: TransferKey::new(unescape(f[3], line)?, unescape(f[2], line)?),
                    bridge: BridgeId::new(unescape(f[4], line)?),
                },
                fee: if f[5].is_empty() { None } else { Some(num(f[5], "fee", line)?) },
                delay: num(f[6], "delay", line)?,
            })
        })
        .collect()
}

/// Chain model guess for ingested data lacking a registry.
pub fn default_model(chain: &ChainId) -> ChainModel {
    match chain.as_str() {
        "BTC" | "LTC" | "DOGE" | "BCH" => ChainModel::Utxo,
        _ => ChainModel::Account,
    }
}

/// Registry covering every chain and asset mentioned by `records`.
pub fn registry_for_swaps(records: &[SwapRecord], models: &BTreeMap<ChainId, ChainModel>) -> Result<Registry> {
    let mut reg = Registry::new();
    let mut assets: BTreeMap<AssetId, BTreeSet<ChainId>> = BTreeMap::new();
    for r in records {
        for (chain, asset) in [(&r.inbound_chain, &r.inbound_asset), (&r.outbound_chain, &r.outbound_asset)] {
            let model = models.get(chain).copied().unwrap_or_else(|| default_model(chain));
            reg.add_chain(chain.clone(), model)?;
            assets.entry(asset.clone()).or_default().insert(chain.clone());
        }
    }
    for (asset, chains) in assets {
        reg.add_asset(asset, chains)?;
    }
    Ok(reg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn escape_roundtrip_specials() {
        let s = "a%b\tc,d=e:f\ng";
        assert_eq!(unescape(&escape(s), 1).unwrap(), s);
        assert!(!escape(s).contains(['\t', ',', '=', ':', '\n']));
        assert!(unescape("%G1", 1).is_err());
        assert!(unescape("%4", 1).is_err());
    }

    #[test]
    fn missing_height_and_index_are_derived() {
        let text = format!(
            "{TRANSFERS_MAGIC}\n{}\n\
             a\tETH\t100\tETH\t1\tx\ty\t\t\t\t\n\
             b\tETH\t100\tETH\t1\tx\ty\t\t\t\t\n\
             c\tETH\t120\tETH\t1\tx\ty\t7\t\t\t\n",
            TRANSFER_COLUMNS.join("\t")
        );
        let ts = read_transfers(&text, LoadMode::Strict, &mut Vec::new()).unwrap();
        assert_eq!(ts[0].ord, ChainOrd::new(100, 0));
        assert_eq!(ts[1].ord, ChainOrd::new(100, 1));
        assert_eq!(ts[2].ord, ChainOrd::new(7, 0));
    }

    #[test]
    fn strict_vs_lenient() {
        let text = format!(
            "{TRANSFERS_MAGIC}\n{}\nbad\tETH\tnot-a-number\tETH\t1\tx\ty\t1\t0\t\t\n",
            TRANSFER_COLUMNS.join("\t")
        );
        match read_transfers(&text, LoadMode::Strict, &mut Vec::new()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let mut issues = Vec::new();
        assert!(read_transfers(&text, LoadMode::Lenient, &mut issues).unwrap().is_empty());
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].0, 3);
    }

    #[test]
    fn prices_reject_non_monotone() {
        let text = format!("{PRICES_MAGIC} base=A quote=B\nts\trate\n1\t1.5\n1\t2\n");
        assert!(read_prices(&text).is_err());
        let ok = format!("{PRICES_MAGIC} base=A quote=B\nts\trate\n1\t1.5\n2\t0.1\n");
        let s = read_prices(&ok).unwrap();
        assert_eq!(write_prices(&s), ok);
    }

    #[test]
    fn unknown_swap_columns_survive() {
        let header = [&SWAP_COLUMNS[..REQUIRED_SWAP_COLUMNS], &["memo"]].concat().join("\t");
        let text = format!(
            "{SWAPS_MAGIC}\n{header}\n\
             in1\tBTC\tBTC\t0.10000000\t100\tout1\tETH\tETH\t2.00000000\t700\tthorchain\t=:ETH.ETH:0x1\n"
        );
        let recs = read_swaps(&text, LoadMode::Strict, &mut Vec::new()).unwrap();
        assert_eq!(recs[0].extras["memo"], "=:ETH.ETH:0x1");
        let again = read_swaps(&write_swaps(&recs), LoadMode::Strict, &mut Vec::new()).unwrap();
        assert_eq!(again, recs);
    }

    proptest! {
        #[test]
        fn escape_is_invertible(s in "\\PC*") {
            prop_assert_eq!(unescape(&escape(&s), 1).unwrap(), s);
        }
    }
}
