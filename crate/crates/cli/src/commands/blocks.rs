use std::process::ExitCode;

use clap::Args;
use pcbdefect::blocks::check::{run_checks, CheckResult};
use pcbdefect::config::Settings;
use serde::Serialize;

use super::print_out;

#[derive(Debug, Args)]
pub struct BlocksCheckArgs {
    /// Block name (shift, irsa, dpca, clcf, backbone, neck) or
    /// `block/case`; every case when omitted.
    #[arg(long)]
    pub case: Option<String>,
    /// Print a JSON report instead of the table.
    #[arg(long)]
    pub json: bool,
    /// Base seed for the randomized cases.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Serialize)]
struct BlocksReport<'a> {
    passed: usize,
    failed: usize,
    results: &'a [CheckResult],
}

pub fn table(results: &[CheckResult]) -> String {
    let bw = results.iter().map(|r| r.block.len()).max().unwrap_or(5).max(5);
    let cw = results.iter().map(|r| r.case.len()).max().unwrap_or(4).max(4);
    let mut out = format!("{:<bw$}  {:<cw$}  {:<6}  detail\n", "block", "case", "result");
    for r in results {
        let verdict = if r.passed { "PASS" } else { "FAIL" };
        out.push_str(&format!("{:<bw$}  {:<cw$}  {:<6}  {}\n", r.block, r.case, verdict, r.detail));
    }
    let passed = results.iter().filter(|r| r.passed).count();
    out.push_str(&format!("{passed}/{} cases passed\n", results.len()));
    out
}

pub fn run(a: &BlocksCheckArgs, s: &Settings) -> anyhow::Result<ExitCode> {
    let results = run_checks(a.case.as_deref(), a.seed.unwrap_or(s.seed))?;
    let passed = results.iter().filter(|r| r.passed).count();
    let failed = results.len() - passed;
    if a.json {
        print_out(&format!("{}\n", serde_json::to_string_pretty(&BlocksReport { passed, failed, results: &results })?))?;
    } else {
        print_out(&table(&results))?;
    }
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
