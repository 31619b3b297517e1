//! CSV reports. Comment lines starting with `#` precede the header row.

use std::fmt::Write as _;

use symbar_core::group::Word;
use symbar_core::ReflectionGroup;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::run::{Reference, Row, SweepRow};

/// Seventeen significant digits, enough to round-trip an `f64`.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn preamble(kind: &str, hash: &str, seed: Option<u64>) -> String {
    let mut out = format!("# symbar {kind}\n# config_sha256 = {hash}\n");
    if let Some(seed) = seed {
        let _ = writeln!(out, "# seed = {seed}");
    }
    out
}

fn finish(head: String, writer: csv::Writer<Vec<u8>>) -> Result<Vec<u8>, CliError> {
    let body = writer.into_inner().map_err(|e| CliError::Other(e.to_string()))?;
    let mut out = head.into_bytes();
    out.extend(body);
    Ok(out)
}

pub fn price(cfg: &RunConfig, rows: &[Row]) -> Result<Vec<u8>, CliError> {
    let mut head = preamble("price", &cfg.hash, Some(cfg.plan.seed));
    let _ = writeln!(head, "# rate = {}\n# horizon = {}", num(cfg.rate), num(cfg.plan.horizon));
    let discount = (-cfg.rate * cfg.plan.horizon).exp();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["label", "mean", "stderr", "paths", "steps", "gap_hits", "excluded", "capped", "seed", "discounted"])?;
    for r in rows {
        w.write_record([
            r.label.to_string(),
            num(r.mean),
            num(r.stderr),
            r.paths.to_string(),
            r.steps.to_string(),
            r.gap_hits.to_string(),
            r.excluded.to_string(),
            r.capped.to_string(),
            r.seed.to_string(),
            num(discount * r.mean),
        ])?;
    }
    finish(head, w)
}

pub fn convergence(cfg: &RunConfig, reference: &Reference, rows: &[SweepRow]) -> Result<Vec<u8>, CliError> {
    let mut head = preamble("convergence", &cfg.hash, Some(cfg.plan.seed));
    let _ = writeln!(head, "# reference = {} {}", reference.label, num(reference.value));
    let discount = (-cfg.rate * cfg.plan.horizon).exp();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["label", "steps", "paths", "mean", "stderr", "reference", "error", "gap_hits", "excluded", "capped", "seed", "discounted"])?;
    for s in rows {
        let r = &s.row;
        w.write_record([
            r.label.to_string(),
            r.steps.to_string(),
            r.paths.to_string(),
            num(r.mean),
            num(r.stderr),
            num(s.reference),
            num(r.mean - s.reference),
            r.gap_hits.to_string(),
            r.excluded.to_string(),
            r.capped.to_string(),
            r.seed.to_string(),
            num(discount * r.mean),
        ])?;
    }
    finish(head, w)
}

pub fn group(hash: &str, group: &ReflectionGroup) -> Result<Vec<u8>, CliError> {
    let d = group.dim();
    let mut head = preamble("group inspect", hash, None);
    let _ = writeln!(head, "# elements = {}\n# complete = {}\n# cap = {}", group.len(), group.is_complete(), group.cap());
    if let Some(rep) = group.disjointness() {
        let _ = writeln!(head, "# disjointness samples = {} max_cover = {} uncovered = {}", rep.samples, rep.max_cover, rep.uncovered);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["index".to_string(), "word".to_string(), "eta".to_string()];
    for i in 0..d {
        for j in 0..d {
            header.push(format!("t{}{}", i + 1, j + 1));
        }
    }
    header.extend((0..d).map(|i| format!("b{}", i + 1)));
    w.write_record(&header)?;
    for (idx, g) in group.elements().iter().enumerate() {
        let iso = g.isometry();
        let mut rec = vec![idx.to_string(), Word(g.word()).to_string(), g.eta().to_string()];
        for i in 0..d {
            for j in 0..d {
                rec.push(num(iso.linear()[(i, j)] + 0.0));
            }
        }
        rec.extend(iso.translation().iter().map(|v| num(v + 0.0)));
        w.write_record(&rec)?;
    }
    finish(head, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, 6.467368133494341, -1e-300, 0.0, 1e6] {
            let s = num(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(num(0.5), "5.0000000000000000e-1");
    }
}
