//! CSV, JSON and aligned-table writers.

use std::io::Write;

use anyhow::Result;
use clap::ValueEnum;
use robinhood_fluid::sim::{ScalingRow, SimStats};
use robinhood_fluid::ComparisonReport;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub age: u32,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stddev: Option<f64>,
}

/// One value per age, plus named scalars that only the JSON and table
/// formats show.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Series {
    pub rows: Vec<Row>,
    #[serde(default)]
    pub summary: Vec<(String, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimStats>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Section {
    pub title: String,
    pub report: ComparisonReport,
}

pub enum Output {
    Series(Series),
    Comparison(ComparisonReport),
    Scaling(Vec<ScalingRow>),
    Repro(Vec<Section>),
}

/// Shortest representation that round-trips; never uses an exponent, so
/// every value keeps its full precision in plain decimal.
fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn write(out: &mut dyn Write, output: &Output, format: Format) -> Result<()> {
    match format {
        Format::Csv => write_csv(out, output),
        Format::Json => {
            match output {
                Output::Series(s) => serde_json::to_writer_pretty(&mut *out, s)?,
                Output::Comparison(r) => serde_json::to_writer_pretty(&mut *out, r)?,
                Output::Scaling(rows) => serde_json::to_writer_pretty(&mut *out, rows)?,
                Output::Repro(sections) => serde_json::to_writer_pretty(&mut *out, sections)?,
            }
            writeln!(out)?;
            Ok(())
        }
        Format::Table => write_table(out, output),
    }
}

fn write_csv(out: &mut dyn Write, output: &Output) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    match output {
        Output::Series(s) => {
            let with_sd = s.rows.iter().any(|r| r.stddev.is_some());
            if with_sd {
                w.write_record(["age", "value", "stddev"])?;
            } else {
                w.write_record(["age", "value"])?;
            }
            for r in &s.rows {
                let mut rec = vec![r.age.to_string(), num(r.value)];
                if with_sd {
                    rec.push(opt(r.stddev));
                }
                w.write_record(&rec)?;
            }
        }
        Output::Comparison(r) => {
            w.write_record(["age", "theory", "sim_mean", "sim_stddev", "abs_diff", "z"])?;
            for row in &r.rows {
                w.write_record(comparison_record(row))?;
            }
        }
        Output::Scaling(rows) => {
            w.write_record(["n", "mean_max_age", "max_max_age"])?;
            for r in rows {
                w.write_record([
                    r.n.to_string(),
                    num(r.mean_max_age),
                    r.max_max_age.to_string(),
                ])?;
            }
        }
        Output::Repro(sections) => {
            w.write_record([
                "table",
                "age",
                "theory",
                "sim_mean",
                "sim_stddev",
                "abs_diff",
                "z",
            ])?;
            for s in sections {
                for row in &s.report.rows {
                    let mut rec = vec![s.title.clone()];
                    rec.extend(comparison_record(row));
                    w.write_record(&rec)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn comparison_record(row: &robinhood_fluid::ComparisonRow) -> Vec<String> {
    vec![
        row.age.to_string(),
        num(row.theory),
        num(row.sim_mean),
        num(row.sim_stddev),
        num(row.abs_diff),
        opt(row.z),
    ]
}

fn write_table(out: &mut dyn Write, output: &Output) -> Result<()> {
    match output {
        Output::Series(s) => {
            let with_sd = s.rows.iter().any(|r| r.stddev.is_some());
            if with_sd {
                writeln!(out, "{:>4}  {:>16}  {:>16}", "age", "value", "stddev")?;
            } else {
                writeln!(out, "{:>4}  {:>16}", "age", "value")?;
            }
            for r in &s.rows {
                match (with_sd, r.stddev) {
                    (true, Some(sd)) => {
                        writeln!(out, "{:>4}  {:>16.12}  {:>16.12}", r.age, r.value, sd)?
                    }
                    (true, None) => writeln!(out, "{:>4}  {:>16.12}  {:>16}", r.age, r.value, "")?,
                    _ => writeln!(out, "{:>4}  {:>16.12}", r.age, r.value)?,
                }
            }
            for (name, v) in &s.summary {
                writeln!(out, "{name}: {}", num(*v))?;
            }
        }
        Output::Comparison(r) => writeln!(out, "{r}")?,
        Output::Scaling(rows) => {
            writeln!(
                out,
                "{:>10}  {:>12}  {:>11}",
                "n", "mean max age", "max max age"
            )?;
            for r in rows {
                writeln!(
                    out,
                    "{:>10}  {:>12.4}  {:>11}",
                    r.n, r.mean_max_age, r.max_max_age
                )?;
            }
        }
        Output::Repro(sections) => {
            for s in sections {
                writeln!(out, "== {} ==\n{}\n", s.title, s.report)?;
            }
        }
    }
    Ok(())
}
