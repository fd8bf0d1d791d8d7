//! CSV (`t, mu_1..mu_d`) and JSON (`{d, times, weights}`) forms of a market path.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SimplexPath, StrategyReport};
use crate::error::{Error, Result};
use crate::fmt::sig12;

#[derive(Serialize, Deserialize)]
struct PathJson {
    d: usize,
    times: Vec<f64>,
    weights: Vec<Vec<f64>>,
}

pub fn write_path_csv<W: Write>(path: &SimplexPath, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=path.d()).map(|i| format!("mu_{i}")));
    w.write_record(&header)?;
    for n in 0..path.len() {
        let mut row = vec![sig12(path.times()[n])];
        row.extend(path.weight(n).iter().map(|v| sig12(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_path_csv<R: Read>(input: R) -> Result<SimplexPath> {
    let mut r = csv::Reader::from_reader(input);
    let d = r.headers()?.len().checked_sub(1).filter(|d| *d >= 2).ok_or_else(|| {
        Error::Parse("expected columns t, mu_1..mu_d with d >= 2".into())
    })?;
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != d + 1 {
            return Err(Error::Parse(format!("row with {} fields, expected {}", vals.len(), d + 1)));
        }
        times.push(vals[0]);
        rows.push(vals[1..].to_vec());
    }
    // values were rounded to 12 digits on the way out
    let weights = rows
        .into_iter()
        .map(|r| crate::geometry::SimplexPoint::from_clamped(r, 1e-10))
        .collect::<Result<Vec<_>>>()?;
    SimplexPath::new(times, weights)
}

pub fn path_to_json(path: &SimplexPath) -> Result<String> {
    let doc = PathJson {
        d: path.d(),
        times: path.times().to_vec(),
        weights: path.weights().iter().map(|w| w.coords().to_vec()).collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn path_from_json(s: &str) -> Result<SimplexPath> {
    let doc: PathJson = serde_json::from_str(s)?;
    if doc.weights.iter().any(|w| w.len() != doc.d) {
        return Err(Error::Parse(format!("weight rows do not have d = {} entries", doc.d)));
    }
    SimplexPath::from_rows(doc.times, doc.weights)
}

pub fn write_report_json(report: &StrategyReport, file: &Path) -> Result<()> {
    std::fs::write(file, serde_json::to_string_pretty(report)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SimplexPath {
        SimplexPath::from_rows(
            vec![0.0, 0.5, 1.0],
            vec![vec![0.2, 0.3, 0.5], vec![0.25, 0.25, 0.5], vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]],
        )
        .unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let p = sample();
        let mut buf = Vec::new();
        write_path_csv(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,mu_1,mu_2,mu_3\n"));
        let q = read_path_csv(buf.as_slice()).unwrap();
        assert_eq!(q.len(), 3);
        for n in 0..3 {
            for (a, b) in p.weight(n).iter().zip(q.weight(n)) {
                assert!((a - b).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let p = sample();
        let q = path_from_json(&path_to_json(&p).unwrap()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn malformed_inputs() {
        assert!(read_path_csv("t,mu_1,mu_2\n0,0.5\n".as_bytes()).is_err());
        assert!(read_path_csv("t,mu_1\n0,1\n".as_bytes()).is_err());
        assert!(path_from_json(r#"{"d":3,"times":[0],"weights":[[0.5,0.5]]}"#).is_err());
        assert!(path_from_json(r#"{"d":2,"times":[0],"weights":[[0.7,0.5]]}"#).is_err());
    }
}
