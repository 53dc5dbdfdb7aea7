use std::io::Write;

use super::{PointOutput, Resolved, RunRecord, CODE_VERSION};
use crate::error::Result;

/// 12 significant digits; integral values print without exponent.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else if x == x.trunc() && x.abs() < 1e12 {
        format!("{}", x as i64)
    } else {
        format!("{x:.11e}")
    }
}

/// CSV with a `#` metadata header, then one line per output row.
///
/// Failed points keep their coordinates, empty result cells and the error in `status`.
pub fn write_csv(w: &mut impl Write, resolved: &Resolved, outputs: &[std::result::Result<PointOutput, String>], record: &RunRecord) -> Result<()> {
    writeln!(w, "# fluxband {CODE_VERSION}")?;
    writeln!(w, "# scenario: {}", resolved.scenario.name())?;
    writeln!(w, "# config_digest: sha256:{}", resolved.digest)?;
    writeln!(w, "# integrator: {}", serde_json::to_string(&resolved.config.integrator)?)?;
    for warning in &record.validation_warnings {
        writeln!(w, "# warning: {warning}")?;
    }
    let cols = resolved.scenario.columns();
    let mut header: Vec<String> = resolved.axes.iter().map(|(p, _)| p.clone()).collect();
    header.extend(cols.iter().map(|s| s.to_string()));
    header.push("status".into());
    writeln!(w, "{}", header.join(","))?;
    for (rec, out) in record.points.iter().zip(outputs) {
        let coords: Vec<String> = rec.coords.iter().map(|&x| format_number(x)).collect();
        match out {
            Ok(o) => {
                for row in &o.rows {
                    let mut cells = coords.clone();
                    cells.extend(row.iter().map(|&x| format_number(x)));
                    cells.push("ok".into());
                    writeln!(w, "{}", cells.join(","))?;
                }
            }
            Err(e) => {
                let mut cells = coords.clone();
                cells.extend(std::iter::repeat_n(String::new(), cols.len()));
                cells.push(format!("\"error: {}\"", e.replace('"', "'").replace('\n', " ")));
                writeln!(w, "{}", cells.join(","))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(format_number(0.1), "1.00000000000e-1");
        assert_eq!(format_number(std::f64::consts::PI), "3.14159265359e0");
        assert_eq!(format_number(3.0), "3");
        assert_eq!(format_number(f64::NAN), "nan");
    }
}
