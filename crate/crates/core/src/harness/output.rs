//! CSV and JSON persistence of sweep results.

use std::io::{self, Write};

use serde::Serialize;

use super::episode::TranscriptLine;
use super::sweep::ExperimentResult;

/// Column header of the regret CSV.
pub const CSV_COLUMNS: &str = "algo,feedback,d,T,seed,checkpoint_t,cum_regret_analytic,cum_regret_realized";
/// Prefix of the first CSV line, which carries the generation time and is
/// the only line allowed to differ between identical runs.
pub const TIMESTAMP_PREFIX: &str = "# generated_at=";

/// Writes every checkpoint of every trajectory, horizon-major, seed-minor.
pub fn write_csv<W: Write>(result: &ExperimentResult, generated_at: &str, mut out: W) -> io::Result<()> {
    writeln!(out, "{TIMESTAMP_PREFIX}{generated_at}")?;
    writeln!(out, "{CSV_COLUMNS}")?;
    let c = &result.config;
    for tr in &result.trajectories {
        for (k, t) in tr.checkpoints.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{:?},{:?}",
                c.algo, c.feedback, c.dim, tr.horizon, tr.seed, t, tr.cum_regret_analytic[k], tr.cum_regret_realized[k]
            )?;
        }
    }
    Ok(())
}

/// Pretty-printed JSON of everything in the result except the trajectories.
pub fn summary_json(result: &ExperimentResult) -> String {
    serde_json::to_string_pretty(result).expect("experiment results always serialize")
}

/// Writes a fault transcript as `t,level,branch,price`.
pub fn write_transcript<W: Write>(lines: &[TranscriptLine], mut out: W) -> io::Result<()> {
    writeln!(out, "t,level,branch,price")?;
    for l in lines {
        let level = l.level.map(|v| v.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{:?}", l.t, level, l.branch, l.price)?;
    }
    Ok(())
}

/// One row of a pass/fail table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRow<'a> {
    pub name: &'a str,
    pub passed: bool,
    pub detail: String,
}

/// Fixed-width text table, one check per line.
pub fn render_table(rows: &[TableRow<'_>]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
    rows.iter()
        .map(|r| format!("{:<width$}  {}  {}\n", r.name, if r.passed { "PASS" } else { "FAIL" }, r.detail))
        .collect()
}
