#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn symbar() -> Command {
    Command::new(env!("CARGO_BIN_EXE_symbar"))
}

pub fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

pub fn run(args: &[&str]) -> Output {
    symbar().args(args).output().expect("symbar runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Data rows of a report, keyed by column name.
pub fn rows(csv_bytes: &[u8]) -> Vec<HashMap<String, String>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(csv_bytes);
    let headers = reader.headers().unwrap().clone();
    reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            headers.iter().zip(r.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect()
        })
        .collect()
}

pub fn field(row: &HashMap<String, String>, name: &str) -> f64 {
    row[name].parse().unwrap_or_else(|_| panic!("column {name} = {}", row[name]))
}

pub fn by_label<'a>(rows: &'a [HashMap<String, String>], label: &str) -> &'a HashMap<String, String> {
    rows.iter().find(|r| r["label"] == label).unwrap_or_else(|| panic!("no row {label}"))
}

pub fn dao_config(paths: usize, steps: usize, seed: u64, estimators: &str) -> String {
    format!(
        "model.name = gbm\nmodel.x0 = 100\nmodel.sigma = 0.2\nbarrier.K = 90\npayoff.kind = call\npayoff.strike = 100\n\
         plan.paths = {paths}\nplan.steps = {steps}\nplan.horizon = 1\nplan.seed = {seed}\nestimators = {estimators}\n"
    )
}
