use std::io::Write;

use crate::diagnostics::MetricsRecord;
use crate::error::Result;

/// `t,pop_loss,esssup_dwL,wl1_layer_1,…,wl1_layer_L,coupling_dist`
pub fn metrics_header(depth: usize) -> String {
    let mut cols = vec!["t".to_string(), "pop_loss".into(), "esssup_dwL".into()];
    cols.extend((1..=depth).map(|i| format!("wl1_layer_{i}")));
    cols.push("coupling_dist".into());
    cols.join(",")
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the metrics series with 17 significant digits; `coupling_dist`
/// is left empty where not applicable.
pub fn write_metrics_csv<W: Write>(out: &mut W, depth: usize, records: &[MetricsRecord]) -> Result<()> {
    writeln!(out, "{}", metrics_header(depth))?;
    for r in records {
        let mut fields = vec![num(r.t), num(r.pop_loss), num(r.esssup_dwl)];
        fields.extend((0..depth).map(|i| r.weighted_l1.get(i).map(|&v| num(v)).unwrap_or_default()));
        fields.push(r.coupling_dist.map(num).unwrap_or_default());
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_row_format() {
        let r = MetricsRecord {
            t: 0.5,
            pop_loss: 0.1,
            esssup_dwl: 0.0,
            weighted_l1: vec![1.0, 2.0],
            coupling_dist: None,
        };
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, 2, &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,pop_loss,esssup_dwL,wl1_layer_1,wl1_layer_2,coupling_dist");
        let row = lines.next().unwrap();
        assert!(row.starts_with("5.0000000000000000e-1,1.0000000000000001e-1,"));
        assert!(row.ends_with(','));
    }
}
