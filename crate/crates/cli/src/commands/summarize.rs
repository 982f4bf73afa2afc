//! `summarize`: posterior summaries of every column of a samples file.

use super::{header, summary_row, SUMMARY_HEADER};
use crate::error::{CliError, Result};
use crate::io::{read_table, OutputDir};
use crate::SummarizeArgs;

const INDEX_COLUMNS: [&str; 2] = ["chain", "draw"];

pub fn run(args: &SummarizeArgs) -> Result<()> {
    if !(args.hpd > 0.0 && args.hpd < 1.0) {
        return Err(CliError::option("hpd", "must lie in (0, 1)"));
    }
    let table = read_table(&args.samples)?;
    if table.rows.is_empty() {
        return Err(CliError::parse(&args.samples, 2, "no draws"));
    }
    let rows = table
        .header
        .iter()
        .enumerate()
        .filter(|(_, name)| !INDEX_COLUMNS.contains(&name.as_str()))
        .map(|(j, name)| {
            let draws: Vec<f64> = table.rows.iter().map(|r| r[j]).collect();
            summary_row(name, &draws, args.hpd)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = OutputDir::create(&args.out)?;
    out.write_csv("summary.csv", &header(&SUMMARY_HEADER), rows)?;
    out.finish();
    Ok(())
}
