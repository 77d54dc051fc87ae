//! File formats: series CSV (`t,i,j,count`), coefficient CSV (`i,j,value`),
//! long-format count records (`date,row_label,col_label,count`) and atomic
//! writes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::model::CountMatrixSeries;

/// Version stamped into every JSON sidecar.
pub const SCHEMA_VERSION: u32 = 1;

/// Writes through `fill` into a temporary sibling of `path`, then renames it
/// into place.
pub fn atomic_write<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidConfig(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        fill(&mut w)?;
        w.flush()?;
        w.get_ref().sync_all()?;
        Ok(())
    })();
    match result {
        Ok(()) => {
            fs::rename(&tmp, path)?;
            Ok(())
        }
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    atomic_write(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

fn fmt_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

pub fn write_series_csv<W: Write>(out: W, series: &CountMatrixSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "i", "j", "count"])?;
    for (t, f) in series.frames().iter().enumerate() {
        for i in 0..series.m() {
            for j in 0..series.n() {
                w.write_record([t.to_string(), i.to_string(), j.to_string(), fmt_value(f[(i, j)])])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct SeriesRow {
    t: usize,
    i: usize,
    j: usize,
    count: f64,
}

/// Reads a complete `t,i,j,count` grid. Integer-valued data are checked as
/// counts; anything else must at least be finite.
pub fn read_series_csv<R: Read>(input: R) -> Result<CountMatrixSeries> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut cells: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
    let (mut t_max, mut m, mut n) = (0, 0, 0);
    for row in rdr.deserialize() {
        let r: SeriesRow = row?;
        if cells.insert((r.t, r.i, r.j), r.count).is_some() {
            return Err(Error::Ingest(format!("duplicate cell t={} i={} j={}", r.t, r.i, r.j)));
        }
        t_max = t_max.max(r.t + 1);
        m = m.max(r.i + 1);
        n = n.max(r.j + 1);
    }
    if cells.is_empty() {
        return Err(Error::Ingest("series file has no rows".into()));
    }
    if cells.len() != t_max * m * n {
        return Err(Error::Ingest(format!(
            "incomplete grid: {} rows for T={t_max}, m={m}, n={n}",
            cells.len()
        )));
    }
    let mut frames = vec![DenseMatrix::zeros(m, n); t_max];
    for ((t, i, j), v) in cells {
        frames[t][(i, j)] = v;
    }
    if frames.iter().all(|f| f.iter().all(|v| v.fract() == 0.0)) {
        CountMatrixSeries::from_counts(m, n, frames)
    } else {
        CountMatrixSeries::from_real_frames(m, n, frames)
    }
}

pub fn write_matrix_csv<W: Write>(out: W, m: &DenseMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["i", "j", "value"])?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_record([i.to_string(), j.to_string(), m[(i, j)].to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct MatrixRow {
    i: usize,
    j: usize,
    value: f64,
}

pub fn read_matrix_csv<R: Read>(input: R) -> Result<DenseMatrix> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut cells = BTreeMap::new();
    let (mut rows, mut cols) = (0, 0);
    for row in rdr.deserialize() {
        let r: MatrixRow = row?;
        if cells.insert((r.i, r.j), r.value).is_some() {
            return Err(Error::Ingest(format!("duplicate entry ({}, {})", r.i, r.j)));
        }
        rows = rows.max(r.i + 1);
        cols = cols.max(r.j + 1);
    }
    if cells.len() != rows * cols || cells.is_empty() {
        return Err(Error::Ingest("matrix file does not describe a full matrix".into()));
    }
    let mut out = DenseMatrix::zeros(rows, cols);
    for ((i, j), v) in cells {
        out[(i, j)] = v;
    }
    Ok(out)
}

/// Explicit row and column label order; labels outside it are dropped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelOrder {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LongRecord {
    pub date: String,
    pub row_label: String,
    pub col_label: String,
    pub count: u64,
}

#[derive(Debug, Clone)]
pub struct IngestedSeries {
    pub series: CountMatrixSeries,
    /// One ISO date per frame, consecutive days.
    pub dates: Vec<NaiveDate>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    /// Cells absent from the input and set to 0.
    pub zero_filled: usize,
    /// Records whose labels are not in the configured order.
    pub dropped: usize,
}

/// Default largest tolerated share of zero-filled cells.
pub const DEFAULT_FILL_THRESHOLD: f64 = 0.5;

fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|_| Error::Ingest(format!("'{s}' is not an ISO-8601 date (YYYY-MM-DD)")))
}

/// Pivots long-format daily counts into a matrix series covering every day
/// from the first to the last date. Duplicate keys are an error.
pub fn ingest_long_csv<R: Read>(
    input: R,
    order: Option<&LabelOrder>,
    fill_threshold: f64,
) -> Result<IngestedSeries> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut records = Vec::new();
    for row in rdr.deserialize() {
        let r: LongRecord = row?;
        records.push(r);
    }
    pivot_records(&records, order, fill_threshold)
}

pub fn pivot_records(
    records: &[LongRecord],
    order: Option<&LabelOrder>,
    fill_threshold: f64,
) -> Result<IngestedSeries> {
    let mut dropped = 0;
    let mut kept = Vec::with_capacity(records.len());
    for r in records {
        let keep = order.is_none_or(|o| o.rows.contains(&r.row_label) && o.cols.contains(&r.col_label));
        if keep {
            kept.push((parse_date(&r.date)?, r));
        } else {
            dropped += 1;
        }
    }
    if dropped > 0 {
        log::info!("dropped {dropped} records with labels outside the configured order");
    }
    let (row_labels, col_labels) = match order {
        Some(o) => (o.rows.clone(), o.cols.clone()),
        None => {
            let rows: BTreeSet<_> = kept.iter().map(|(_, r)| r.row_label.clone()).collect();
            let cols: BTreeSet<_> = kept.iter().map(|(_, r)| r.col_label.clone()).collect();
            (rows.into_iter().collect(), cols.into_iter().collect())
        }
    };
    let first = kept.iter().map(|(d, _)| *d).min();
    let last = kept.iter().map(|(d, _)| *d).max();
    let (first, last) = match (first, last) {
        (Some(f), Some(l)) if l > f => (f, l),
        _ => return Err(Error::Ingest("need records on at least 2 distinct dates".into())),
    };
    let days = (last - first).num_days() as usize + 1;
    let (m, n) = (row_labels.len(), col_labels.len());
    let row_idx: HashMap<&str, usize> = row_labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let col_idx: HashMap<&str, usize> = col_labels.iter().enumerate().map(|(j, l)| (l.as_str(), j)).collect();

    let mut frames = vec![DenseMatrix::zeros(m, n); days];
    let mut seen: HashMap<(usize, usize, usize), usize> = HashMap::new();
    let mut duplicates: BTreeSet<(NaiveDate, String, String)> = BTreeSet::new();
    for (d, r) in &kept {
        let t = (*d - first).num_days() as usize;
        let (i, j) = (row_idx[r.row_label.as_str()], col_idx[r.col_label.as_str()]);
        let hits = seen.entry((t, i, j)).or_insert(0);
        *hits += 1;
        if *hits > 1 {
            duplicates.insert((*d, r.row_label.clone(), r.col_label.clone()));
        }
        frames[t][(i, j)] = r.count as f64;
    }
    if !duplicates.is_empty() {
        let listed: Vec<String> = duplicates
            .iter()
            .take(10)
            .map(|(d, r, c)| format!("({d}, {r}, {c})"))
            .collect();
        return Err(Error::Ingest(format!(
            "{} duplicate (date, row, col) keys: {}{}",
            duplicates.len(),
            listed.join(", "),
            if duplicates.len() > 10 { ", ..." } else { "" }
        )));
    }
    let total = days * m * n;
    let zero_filled = total - seen.len();
    let share = zero_filled as f64 / total as f64;
    if share > fill_threshold {
        return Err(Error::Ingest(format!(
            "{zero_filled} of {total} cells missing ({:.1}%), above the fill threshold {:.1}%",
            100.0 * share,
            100.0 * fill_threshold
        )));
    }
    if zero_filled > 0 {
        log::warn!("zero-filled {zero_filled} missing (date, row, col) combinations");
    }
    Ok(IngestedSeries {
        series: CountMatrixSeries::from_counts(m, n, frames)?,
        dates: (0..days).map(|k| first + chrono::Days::new(k as u64)).collect(),
        row_labels,
        col_labels,
        zero_filled,
        dropped,
    })
}

/// Inverse of [`pivot_records`]: one record per cell per frame.
pub fn series_to_long(
    series: &CountMatrixSeries,
    dates: &[NaiveDate],
    row_labels: &[String],
    col_labels: &[String],
) -> Result<Vec<LongRecord>> {
    if dates.len() != series.len() || row_labels.len() != series.m() || col_labels.len() != series.n() {
        return Err(Error::Dimension("labels do not match the series".into()));
    }
    if !series.is_integer_valued() {
        return Err(Error::Domain("long format holds counts only".into()));
    }
    let mut out = Vec::with_capacity(series.len() * series.m() * series.n());
    for (t, f) in series.frames().iter().enumerate() {
        for (i, rl) in row_labels.iter().enumerate() {
            for (j, cl) in col_labels.iter().enumerate() {
                out.push(LongRecord {
                    date: dates[t].format("%Y-%m-%d").to_string(),
                    row_label: rl.clone(),
                    col_label: cl.clone(),
                    count: f[(i, j)] as u64,
                });
            }
        }
    }
    Ok(out)
}

pub fn write_long_csv<W: Write>(out: W, records: &[LongRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MinarCoefficients;
    use crate::thinning::{seeded_rng, simulate_minar};

    fn sample() -> CountMatrixSeries {
        let a = DenseMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.2, 0.2]);
        let b = DenseMatrix::from_row_slice(3, 3, &[0.5, 0.1, 0.0, 0.1, 0.4, 0.1, 0.0, 0.2, 0.5]);
        let coef = MinarCoefficients::new(a, b, DenseMatrix::from_element(2, 3, 1.5)).unwrap();
        simulate_minar(&coef, 25, 20, &mut seeded_rng(5, 0)).unwrap()
    }

    #[test]
    fn series_csv_round_trip() {
        let s = sample();
        let mut buf = Vec::new();
        write_series_csv(&mut buf, &s).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf).lines().count(), 1 + 25 * 6);
        let back = read_series_csv(buf.as_slice()).unwrap();
        assert_eq!(back.frames(), s.frames());
        assert!(back.is_integer_valued());
    }

    #[test]
    fn series_csv_rejects_gaps_and_duplicates() {
        let gap = "t,i,j,count\n0,0,0,1\n0,1,1,2\n";
        assert!(read_series_csv(gap.as_bytes()).is_err());
        let dup = "t,i,j,count\n0,0,0,1\n0,0,0,2\n";
        assert!(read_series_csv(dup.as_bytes()).is_err());
        let neg = "t,i,j,count\n0,0,0,-1\n";
        assert!(read_series_csv(neg.as_bytes()).is_err());
    }

    #[test]
    fn matrix_csv_round_trip() {
        let m = DenseMatrix::from_row_slice(2, 3, &[0.25, -1.0, 3.5, 1e-9, 0.0, 7.0]);
        let mut buf = Vec::new();
        write_matrix_csv(&mut buf, &m).unwrap();
        assert_eq!(read_matrix_csv(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn long_format_round_trip() {
        let s = sample();
        let start = NaiveDate::from_ymd_opt(2023, 1, 30).unwrap();
        let dates: Vec<_> = (0..25).map(|k| start + chrono::Days::new(k)).collect();
        let rows = vec!["ROBBERY".to_string(), "THEFT".to_string()];
        let cols = vec!["10".to_string(), "11".to_string(), "15".to_string()];
        let recs = series_to_long(&s, &dates, &rows, &cols).unwrap();
        let mut buf = Vec::new();
        write_long_csv(&mut buf, &recs).unwrap();
        let got = ingest_long_csv(buf.as_slice(), None, DEFAULT_FILL_THRESHOLD).unwrap();
        assert_eq!(got.series.frames(), s.frames());
        assert_eq!(got.dates, dates);
        assert_eq!(got.row_labels, rows);
        assert_eq!(got.zero_filled, 0);
    }

    #[test]
    fn explicit_order_and_dropping() {
        let text = "date,row_label,col_label,count\n\
            2024-01-01,THEFT,10,5\n2024-01-01,ASSAULT,10,2\n2024-01-01,ARSON,10,9\n\
            2024-01-02,THEFT,10,4\n2024-01-02,ASSAULT,10,1\n";
        let order = LabelOrder {
            rows: vec!["THEFT".into(), "ASSAULT".into()],
            cols: vec!["10".into()],
        };
        let got = ingest_long_csv(text.as_bytes(), Some(&order), 0.5).unwrap();
        assert_eq!(got.dropped, 1);
        assert_eq!(got.series.frame(0)[(0, 0)], 5.0);
        assert_eq!(got.series.frame(1)[(1, 0)], 1.0);
    }

    #[test]
    fn zero_fill_counts_and_threshold() {
        let text = "date,row_label,col_label,count\n\
            2024-01-01,A,x,1\n2024-01-01,A,y,2\n2024-01-01,B,x,3\n2024-01-01,B,y,4\n\
            2024-01-03,A,x,1\n2024-01-03,B,y,1\n";
        let got = ingest_long_csv(text.as_bytes(), None, 0.6).unwrap();
        assert_eq!(got.series.len(), 3);
        assert_eq!(got.zero_filled, 6);
        assert_eq!(got.series.frame(1).amax(), 0.0);
        assert!(ingest_long_csv(text.as_bytes(), None, 0.4).is_err());
    }

    #[test]
    fn duplicates_are_listed() {
        let text = "date,row_label,col_label,count\n\
            2024-01-01,A,x,1\n2024-01-01,A,x,2\n2024-01-02,A,x,1\n";
        let err = ingest_long_csv(text.as_bytes(), None, 0.5).unwrap_err().to_string();
        assert!(err.contains("(2024-01-01, A, x)"), "{err}");
    }

    #[test]
    fn bad_input_is_rejected() {
        let one_day = "date,row_label,col_label,count\n2024-01-01,A,x,1\n";
        assert!(ingest_long_csv(one_day.as_bytes(), None, 0.5).is_err());
        let bad_date = "date,row_label,col_label,count\n01/02/2024,A,x,1\n2024-01-03,A,x,1\n";
        assert!(ingest_long_csv(bad_date.as_bytes(), None, 0.5).is_err());
        let negative = "date,row_label,col_label,count\n2024-01-01,A,x,-1\n2024-01-02,A,x,1\n";
        assert!(ingest_long_csv(negative.as_bytes(), None, 0.5).is_err());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("out.json");
        write_json(&p, &serde_json::json!({"a": 1})).unwrap();
        write_json(&p, &serde_json::json!({"a": 2})).unwrap();
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(v["a"], 2);
        let leftovers: Vec<_> = fs::read_dir(p.parent().unwrap()).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
        let failed = atomic_write(&p, |_| Err(Error::InvalidConfig("boom".into())));
        assert!(failed.is_err());
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
