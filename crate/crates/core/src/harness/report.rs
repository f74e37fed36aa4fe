//! Flat tabular and plot-script output for harness reports.
//!
//! Tables are CSV with a block of `#` comment lines on top echoing the run
//! manifest; [`crate::reference::read_threshold_table`] and most plotting
//! tools skip such lines.

use std::io::Write;

use serde::Serialize;

use super::{SiteClassification, UcltReport};
use crate::error::{LabError, Result};

fn csv_err(e: csv::Error) -> LabError {
    LabError::Io(std::io::Error::other(e))
}

/// Write `rows` as CSV after one `# ` comment line per entry of `header`.
pub fn write_table<W: Write, T: Serialize>(mut out: W, header: &[String], rows: &[T]) -> Result<()> {
    for line in header {
        for part in line.lines() {
            writeln!(out, "# {part}")?;
        }
    }
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct RowOut<'a> {
    n: usize,
    functional: &'a str,
    x: i64,
    walk_mean: f64,
    walk_se: f64,
    discrepancy: f64,
    radius: f64,
}

#[derive(Serialize)]
struct SupOut<'a> {
    n: usize,
    functional: &'a str,
    discrepancy: f64,
    radius: f64,
    argmax: i64,
    grid_size: usize,
}

#[derive(Serialize)]
struct SetOut<'a> {
    n: usize,
    set: &'a str,
    sup_probability: f64,
    inf_probability: f64,
    brownian_probability: f64,
    brownian_se: f64,
    radius: f64,
}

/// One row per `(n, F, x)`.
pub fn write_uclt_rows<W: Write>(out: W, header: &[String], report: &UcltReport) -> Result<()> {
    let rows: Vec<RowOut> = report
        .rows
        .iter()
        .map(|r| RowOut {
            n: r.n,
            functional: r.functional.name(),
            x: r.x,
            walk_mean: r.walk_mean,
            walk_se: r.walk_se,
            discrepancy: r.discrepancy,
            radius: r.radius,
        })
        .collect();
    write_table(out, header, &rows)
}

/// One row per `(n, F)` sup.
pub fn write_uclt_sups<W: Write>(out: W, header: &[String], report: &UcltReport) -> Result<()> {
    let rows: Vec<SupOut> = report
        .sups
        .iter()
        .map(|s| SupOut {
            n: s.n,
            functional: s.functional.name(),
            discrepancy: s.discrepancy,
            radius: s.radius,
            argmax: s.argmax,
            grid_size: s.grid_size,
        })
        .collect();
    write_table(out, header, &rows)
}

pub fn write_uclt_sets<W: Write>(out: W, header: &[String], report: &UcltReport) -> Result<()> {
    let rows: Vec<SetOut> = report
        .sets
        .iter()
        .map(|s| SetOut {
            n: s.n,
            set: s.set.name(),
            sup_probability: s.sup_probability,
            inf_probability: s.inf_probability,
            brownian_probability: s.brownian_probability,
            brownian_se: s.brownian_se,
            radius: s.radius,
        })
        .collect();
    write_table(out, header, &rows)
}

#[derive(Serialize)]
struct ClassOut {
    x: i64,
    epsilon: f64,
    n: usize,
    samples: usize,
    item_i: bool,
    item_i_discrepancy: f64,
    item_i_radius: f64,
    item_ii: bool,
    item_ii_probability: f64,
    item_ii_radius: f64,
    item_iii: bool,
    item_iii_probability: f64,
    item_iii_radius: f64,
    is_good: bool,
    nice_probability: f64,
    nice_radius: f64,
    is_nice: bool,
}

pub fn write_classifications<W: Write>(out: W, header: &[String], sites: &[SiteClassification]) -> Result<()> {
    let rows: Vec<ClassOut> = sites
        .iter()
        .map(|s| ClassOut {
            x: s.x,
            epsilon: s.epsilon,
            n: s.n,
            samples: s.samples,
            item_i: s.item_i,
            item_i_discrepancy: s.item_i_discrepancy,
            item_i_radius: s.item_i_radius,
            item_ii: s.item_ii,
            item_ii_probability: s.item_ii_probability,
            item_ii_radius: s.item_ii_radius,
            item_iii: s.item_iii,
            item_iii_probability: s.item_iii_probability,
            item_iii_radius: s.item_iii_radius,
            is_good: s.is_good,
            nice_probability: s.nice_probability,
            nice_radius: s.nice_radius,
            is_nice: s.is_nice,
        })
        .collect();
    write_table(out, header, &rows)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<W: Write, T: Serialize>(mut out: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| LabError::Io(e.into()))?;
    writeln!(out)?;
    Ok(())
}

/// Gnuplot commands plotting the sup discrepancy against `n`, one curve per
/// functional, with confidence radii as error bars. `sups_file` is the path
/// written by [`write_uclt_sups`], relative to where gnuplot is run.
pub fn gnuplot_uclt<W: Write>(mut out: W, report: &UcltReport, sups_file: &str, image: &str) -> Result<()> {
    writeln!(out, "set datafile separator ','")?;
    writeln!(out, "set datafile commentschars '#'")?;
    writeln!(out, "set terminal pngcairo size 900,600")?;
    writeln!(out, "set output '{image}'")?;
    writeln!(out, "set logscale x")?;
    writeln!(out, "set xlabel 'n'")?;
    writeln!(out, "set ylabel 'sup over start grid of |E F(Z^n) - E F(W)|'")?;
    writeln!(out, "set key top right")?;
    let curves: Vec<String> = report
        .config
        .functionals
        .iter()
        .map(|f| {
            format!(
                "'{sups_file}' every ::1 using 1:(stringcolumn(2) eq '{name}' ? $3 : 1/0):4 with yerrorlines title '{name}'",
                name = f.name()
            )
        })
        .collect();
    writeln!(out, "plot {}", curves.join(", \\\n     "))?;
    Ok(())
}
