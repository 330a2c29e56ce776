use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::measures::UncertaintySummary;
use crate::error::{Error, Result};

/// One row of the uncertainty dump. `true_label` is empty for inputs with
/// no in-distribution class.
#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintyRecord {
    pub example_id: usize,
    pub true_label: Option<usize>,
    pub summary: UncertaintySummary,
}

pub fn uncertainty_csv(records: &[UncertaintyRecord], n_classes: usize) -> String {
    let mut s = String::from("example_id,true_label,predicted_class");
    for i in 0..n_classes {
        let _ = write!(s, ",p{i}");
    }
    s.push_str(",entropy,total_std,classwise_std_max,classwise_range_max\n");
    for r in records {
        let label = r.true_label.map(|l| l.to_string()).unwrap_or_default();
        let _ = write!(s, "{},{},{}", r.example_id, label, r.summary.predicted_class);
        for p in &r.summary.mean_prob {
            let _ = write!(s, ",{p}");
        }
        let u = &r.summary;
        let _ = writeln!(
            s,
            ",{},{},{},{}",
            u.entropy, u.total_std, u.classwise_std_max, u.classwise_range_max
        );
    }
    s
}

pub fn write_uncertainty_csv(path: &Path, records: &[UncertaintyRecord], n_classes: usize) -> Result<()> {
    fs::write(path, uncertainty_csv(records, n_classes)).map_err(|e| Error::io(path, e))
}

pub fn read_uncertainty_csv(path: &Path) -> Result<Vec<UncertaintyRecord>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, why: &str| Error::format(path, format!("line {line}: {why}"));
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad(1, "empty file"))?.split(',').collect();
    if header.len() < 8 || header[..3] != ["example_id", "true_label", "predicted_class"] {
        return Err(bad(1, "unexpected header"));
    }
    let n = header.len() - 7;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != header.len() {
            return Err(bad(i + 2, "wrong field count"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 2, "bad number"));
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad(i + 2, "bad integer"));
        let mean_prob = f[3..3 + n].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
        out.push(UncertaintyRecord {
            example_id: int(f[0])?,
            true_label: if f[1].is_empty() { None } else { Some(int(f[1])?) },
            summary: UncertaintySummary {
                predicted_class: int(f[2])?,
                mean_prob,
                entropy: num(f[3 + n])?,
                total_std: num(f[4 + n])?,
                classwise_std_max: num(f[5 + n])?,
                classwise_range_max: num(f[6 + n])?,
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let rec = |id, label| UncertaintyRecord {
            example_id: id,
            true_label: label,
            summary: UncertaintySummary {
                mean_prob: vec![0.1, 0.2, 0.3, 0.4],
                entropy: 1.846_439_344_671_015,
                total_std: 0.1 + 0.2,
                classwise_std_max: 1e-300,
                classwise_range_max: 0.0,
                predicted_class: 3,
            },
        };
        let rows = vec![rec(0, Some(2)), rec(7, None)];
        let text = uncertainty_csv(&rows, 4);
        assert!(text.starts_with(
            "example_id,true_label,predicted_class,p0,p1,p2,p3,entropy,total_std,classwise_std_max,classwise_range_max\n"
        ));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.csv");
        write_uncertainty_csv(&p, &rows, 4).unwrap();
        assert_eq!(read_uncertainty_csv(&p).unwrap(), rows);
    }
}
