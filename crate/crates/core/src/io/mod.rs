//! Plain-text container for weights, trajectories and latent codes.
//!
//! ```text
//! mflab-text-container 1
//! header <key> <value>
//! ...
//! record <name> <rows> <cols>
//! <cols decimals, space separated>      (one line per row, row-major)
//! ...
//! end
//! ```
//!
//! Values are written with 17 significant digits (`{:.16e}`), which
//! round-trips every `f64` exactly. Header values run to the end of the line.

mod serial;

pub use serial::{
    codes_from_container, codes_to_container, embedding_from_container, embedding_to_container,
    finite_trajectory_from_container, finite_trajectory_to_container, mf_trajectory_from_container,
    mf_trajectory_to_container, weights_from_container, weights_to_container,
};

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

const MAGIC: &str = "mflab-text-container 1";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Container {
    headers: Vec<(String, String)>,
    records: Vec<(String, Matrix<f64>)>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_header(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        debug_assert!(!key.contains(char::is_whitespace) && !value.contains('\n'));
        match self.headers.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.headers.push((key.to_string(), value)),
        }
    }

    pub fn header(&self, key: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn headers(&self) -> &[(String, String)] {
        &self.headers
    }

    /// Header parsed as `F`, with a parse error naming the key.
    pub fn parse_header<F: std::str::FromStr>(&self, key: &str) -> Result<F> {
        let raw = self.header(key).ok_or_else(|| parse_err(0, format!("missing header `{key}`")))?;
        raw.parse().map_err(|_| parse_err(0, format!("bad value `{raw}` for header `{key}`")))
    }

    pub fn push_record<T: Scalar>(&mut self, name: &str, m: &Matrix<T>) {
        debug_assert!(!name.contains(char::is_whitespace));
        self.records.push((name.to_string(), m.cast()));
    }

    pub fn record(&self, name: &str) -> Option<&Matrix<f64>> {
        self.records.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn require(&self, name: &str) -> Result<&Matrix<f64>> {
        self.record(name).ok_or_else(|| parse_err(0, format!("missing record `{name}`")))
    }

    pub fn record_names(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|(n, _)| n.as_str())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(MAGIC);
        s.push('\n');
        for (k, v) in &self.headers {
            let _ = writeln!(s, "header {k} {v}");
        }
        for (name, m) in &self.records {
            let _ = writeln!(s, "record {name} {} {}", m.rows(), m.cols());
            for r in 0..m.rows() {
                let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:.16e}")).collect();
                s.push_str(&row.join(" "));
                s.push('\n');
            }
        }
        s.push_str("end\n");
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l.trim_end() == MAGIC => {}
            _ => return Err(parse_err(1, format!("expected `{MAGIC}`"))),
        }
        let mut c = Container::new();
        loop {
            let Some((ln, line)) = lines.next() else {
                return Err(parse_err(0, "missing `end`"));
            };
            let line = line.trim_end();
            if line == "end" {
                break;
            }
            if let Some(rest) = line.strip_prefix("header ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                c.headers.push((k.to_string(), v.to_string()));
            } else if let Some(rest) = line.strip_prefix("record ") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(parse_err(ln, "record line needs `name rows cols`"));
                }
                let rows: usize = parts[1].parse().map_err(|_| parse_err(ln, "bad row count"))?;
                let cols: usize = parts[2].parse().map_err(|_| parse_err(ln, "bad column count"))?;
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let (rl, row) = lines.next().ok_or_else(|| parse_err(ln, "record truncated"))?;
                    let before = data.len();
                    for tok in row.split_whitespace() {
                        data.push(tok.parse::<f64>().map_err(|_| parse_err(rl, format!("bad number `{tok}`")))?);
                    }
                    if data.len() - before != cols {
                        return Err(parse_err(rl, format!("expected {cols} values, found {}", data.len() - before)));
                    }
                }
                c.records.push((parts[0].to_string(), Matrix::from_vec(rows, cols, data)?));
            } else if !line.is_empty() {
                return Err(parse_err(ln, format!("unexpected line `{line}`")));
            }
        }
        Ok(c)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

pub(crate) fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let mut c = Container::new();
        c.set_header("kind", "test");
        c.set_header("h", 0.1);
        let m = Matrix::from_vec(2, 3, vec![0.1, -1.0 / 3.0, 1e-300, f64::MAX, -0.0, 2.5]).unwrap();
        c.push_record("m", &m);
        c.push_record("empty", &Matrix::<f64>::zeros(1, 0));
        let text = c.render();
        let back = Container::parse(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.parse_header::<f64>("h").unwrap(), 0.1);
        assert_eq!(back.render(), text);
    }

    #[test]
    fn malformed_input_reports_line() {
        let bad = "mflab-text-container 1\nrecord m 1 2\n1.0 x\nend\n";
        match Container::parse(bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(Container::parse("nope\n").is_err());
        assert!(Container::parse("mflab-text-container 1\n").is_err());
    }
}
