//! CSV emission with a fixed float format so identical runs produce
//! byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;
use crate::optim::RunRecord;

/// 17-significant-digit scientific notation: round-trips every f64 and is
/// locale-independent.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write one row of mixed fields.
pub fn write_row<W: Write>(w: &mut W, fields: &[String]) -> Result<()> {
    writeln!(w, "{}", fields.join(","))?;
    Ok(())
}

/// Deterministic per-iteration CSV for a run. Wall-clock timing is withheld
/// here and emitted by [`write_timing_csv`] instead, keeping this file
/// byte-stable across repeated runs.
pub fn write_run_csv(record: &RunRecord, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "iter,neg_elbo,grad_norm,c_frob,v_eig_min,v_eig_max")?;
    for row in &record.rows {
        write_row(
            &mut w,
            &[
                row.iter.to_string(),
                fmt_f64(row.neg_elbo),
                fmt_f64(row.grad_norm),
                fmt_f64(row.c_frob),
                fmt_f64(row.v_eig_min),
                fmt_f64(row.v_eig_max),
            ],
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Measured wall-clock milliseconds per iteration; varies run to run.
pub fn write_timing_csv(record: &RunRecord, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "iter,wall_ms")?;
    for row in &record.rows {
        write_row(&mut w, &[row.iter.to_string(), fmt_f64(row.wall_ms)])?;
    }
    w.flush()?;
    Ok(())
}

/// Mean/min/max envelope series across seeds for one (metric, axis) pair.
pub fn write_series_csv(
    path: &Path,
    axis_name: &str,
    xs: &[f64],
    mean: &[f64],
    min: &[f64],
    max: &[f64],
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{axis_name},mean,min,max")?;
    for i in 0..xs.len() {
        write_row(
            &mut w,
            &[fmt_f64(xs[i]), fmt_f64(mean[i]), fmt_f64(min[i]), fmt_f64(max[i])],
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for &x in &[0.0, 1.0, -1.5, 1e-300, std::f64::consts::PI, 301.18] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "failed for {s}");
        }
    }

    #[test]
    fn float_format_has_seventeen_significant_digits() {
        let s = fmt_f64(std::f64::consts::PI);
        let mantissa: String = s.chars().take_while(|c| *c != 'e').filter(|c| c.is_ascii_digit()).collect();
        assert_eq!(mantissa.len(), 17, "got {s}");
    }
}
