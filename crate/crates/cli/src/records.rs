//! Sweep tables and their CSV / JSON encodings.
//!
//! CSV columns are `grid,zeta_1..zeta_K,rank,traceF`, then one `v1_<label>`
//! column per parameter for the dominant eigenvector, then `error`. A failed
//! grid point keeps its grid value and message and leaves every other cell
//! empty. JSON is an array with one object per record. Floats are written
//! with 17 significant digits so both encodings round-trip exactly.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};
use serde_json::ser::{CompactFormatter, Formatter};

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRecord {
    pub grid: f64,
    /// Descending, zero-padded to the table width; empty for failures.
    pub zeta: Vec<f64>,
    pub rank: Option<usize>,
    pub trace: Option<f64>,
    /// Dominant eigenvector entry per table label, `None` where the label
    /// does not exist at this grid point.
    pub v1: Vec<Option<f64>>,
    pub error: Option<String>,
}

impl SweepRecord {
    pub fn failure(grid: f64, n_labels: usize, message: impl Into<String>) -> Self {
        Self {
            grid,
            zeta: Vec::new(),
            rank: None,
            trace: None,
            v1: vec![None; n_labels],
            error: Some(message.into()),
        }
    }

    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    /// Number of eigenvalue columns.
    pub k: usize,
    pub labels: Vec<String>,
    pub records: Vec<SweepRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub location: String,
    pub message: String,
}

impl ParseError {
    fn new(location: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            location: location.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

impl std::error::Error for ParseError {}

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Shortest order containing every input order as a subsequence, ties
/// broken by first appearance. Falls back to first-appearance order if the
/// inputs disagree.
pub fn merge_label_orders(orders: &[Vec<String>]) -> Vec<String> {
    let mut first_seen: Vec<String> = Vec::new();
    let mut rank: HashMap<&str, usize> = HashMap::new();
    for order in orders {
        for l in order {
            if !rank.contains_key(l.as_str()) {
                rank.insert(l, first_seen.len());
                first_seen.push(l.clone());
            }
        }
    }
    let n = first_seen.len();
    let mut succ: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut indeg = vec![0usize; n];
    for order in orders {
        for w in order.windows(2) {
            let (a, b) = (rank[w[0].as_str()], rank[w[1].as_str()]);
            if succ[a].insert(b) {
                indeg[b] += 1;
            }
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut out = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        out.push(first_seen[v].clone());
        for &w in &succ[v] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                ready.insert(w);
            }
        }
    }
    if out.len() == n {
        out
    } else {
        first_seen
    }
}

impl SweepTable {
    fn check_shape(&self) -> Result<(), ParseError> {
        for (r, rec) in self.records.iter().enumerate() {
            let loc = format!("record {r}");
            if rec.v1.len() != self.labels.len() {
                return Err(ParseError::new(loc, "eigenvector width differs from label count"));
            }
            if rec.is_error() {
                if !rec.zeta.is_empty() || rec.rank.is_some() || rec.trace.is_some() || rec.v1.iter().any(Option::is_some) {
                    return Err(ParseError::new(loc, "failed record carries results"));
                }
            } else if rec.zeta.len() != self.k || rec.rank.is_none() || rec.trace.is_none() {
                return Err(ParseError::new(loc, format!("expected {} eigenvalues, rank and trace", self.k)));
            }
        }
        Ok(())
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["grid".to_string()];
        h.extend((1..=self.k).map(|i| format!("zeta_{i}")));
        h.push("rank".into());
        h.push("traceF".into());
        h.extend(self.labels.iter().map(|l| format!("v1_{l}")));
        h.push("error".into());
        h
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<(), ParseError> {
        self.check_shape()?;
        let mut out = csv::Writer::from_writer(w);
        let io_err = |e: csv::Error| ParseError::new("output", e.to_string());
        out.write_record(self.csv_header()).map_err(io_err)?;
        for rec in &self.records {
            let mut row = vec![format_float(rec.grid)];
            if rec.is_error() {
                row.extend(std::iter::repeat_n(String::new(), self.k + 2 + self.labels.len()));
            } else {
                row.extend(rec.zeta.iter().map(|&z| format_float(z)));
                row.push(rec.rank.map(|r| r.to_string()).unwrap_or_default());
                row.push(rec.trace.map(format_float).unwrap_or_default());
                row.extend(rec.v1.iter().map(|v| v.map(format_float).unwrap_or_default()));
            }
            row.push(rec.error.clone().unwrap_or_default());
            out.write_record(&row).map_err(io_err)?;
        }
        out.flush().map_err(|e| ParseError::new("output", e.to_string()))
    }

    pub fn to_csv_string(&self) -> Result<String, ParseError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| ParseError::new("output", e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self, ParseError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
        let mut rows = rdr.records();
        let header = match rows.next() {
            Some(h) => h.map_err(|e| ParseError::new("line 1", e.to_string()))?,
            None => return Err(ParseError::new("line 1", "missing header")),
        };
        let cols: Vec<&str> = header.iter().collect();
        if cols.first() != Some(&"grid") {
            return Err(ParseError::new("line 1", "first column must be grid"));
        }
        let mut k = 0;
        while cols.get(1 + k).is_some_and(|c| *c == format!("zeta_{}", k + 1)) {
            k += 1;
        }
        if cols.get(1 + k) != Some(&"rank") || cols.get(2 + k) != Some(&"traceF") {
            return Err(ParseError::new("line 1", "expected rank,traceF after the eigenvalue columns"));
        }
        if cols.last() != Some(&"error") || cols.len() < k + 4 {
            return Err(ParseError::new("line 1", "last column must be error"));
        }
        let mut labels = Vec::new();
        for c in &cols[k + 3..cols.len() - 1] {
            match c.strip_prefix("v1_") {
                Some(l) => labels.push(l.to_string()),
                None => return Err(ParseError::new("line 1", format!("unexpected column {c}"))),
            }
        }
        let width = cols.len();
        let mut records = Vec::new();
        for (r, row) in rows.enumerate() {
            let loc = format!("line {}", r + 2);
            let row = row.map_err(|e| ParseError::new(&loc, e.to_string()))?;
            if row.len() != width {
                return Err(ParseError::new(loc, format!("expected {width} fields, found {}", row.len())));
            }
            let field = |c: usize| row.get(c).unwrap_or("");
            let float = |c: usize| -> Result<f64, ParseError> {
                field(c)
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| ParseError::new(format!("{loc}, column {}", cols[c]), format!("not a finite number: {:?}", field(c))))
            };
            let grid = float(0)?;
            let error = field(width - 1);
            if !error.is_empty() {
                if (1..width - 1).any(|c| !field(c).is_empty()) {
                    return Err(ParseError::new(loc, "failed record carries results"));
                }
                records.push(SweepRecord::failure(grid, labels.len(), error));
                continue;
            }
            let zeta = (1..=k).map(float).collect::<Result<Vec<_>, _>>()?;
            let rank = field(k + 1)
                .parse::<usize>()
                .map_err(|_| ParseError::new(format!("{loc}, column rank"), format!("not a count: {:?}", field(k + 1))))?;
            let trace = float(k + 2)?;
            let v1 = (k + 3..width - 1)
                .map(|c| if field(c).is_empty() { Ok(None) } else { float(c).map(Some) })
                .collect::<Result<Vec<_>, _>>()?;
            records.push(SweepRecord {
                grid,
                zeta,
                rank: Some(rank),
                trace: Some(trace),
                v1,
                error: None,
            });
        }
        Ok(Self { k, labels, records })
    }

    pub fn to_json_string(&self) -> Result<String, ParseError> {
        self.check_shape()?;
        let recs: Vec<JsonRecord> = self
            .records
            .iter()
            .map(|r| JsonRecord {
                grid: r.grid,
                zeta: r.zeta.clone(),
                rank: r.rank,
                trace: r.trace,
                v1: self.labels.iter().cloned().zip(r.v1.iter().copied()).collect(),
                error: r.error.clone(),
            })
            .collect();
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision);
        recs.serialize(&mut ser).map_err(|e| ParseError::new("output", e.to_string()))?;
        buf.push(b'\n');
        String::from_utf8(buf).map_err(|e| ParseError::new("output", e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ParseError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let recs: Vec<JsonRecord> = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ParseError::new(path, e.into_inner().to_string())
        })?;
        let labels: Vec<String> = recs.first().map(|r| r.v1.iter().map(|(l, _)| l.clone()).collect()).unwrap_or_default();
        let k = recs.iter().find(|r| r.error.is_none()).map_or(0, |r| r.zeta.len());
        let mut records = Vec::with_capacity(recs.len());
        for (i, r) in recs.into_iter().enumerate() {
            if r.v1.len() != labels.len() || r.v1.iter().zip(&labels).any(|((a, _), b)| a != b) {
                return Err(ParseError::new(format!("[{i}].v1"), "labels differ from the first record"));
            }
            records.push(SweepRecord {
                grid: r.grid,
                zeta: r.zeta,
                rank: r.rank,
                trace: r.trace,
                v1: r.v1.into_iter().map(|(_, v)| v).collect(),
                error: r.error,
            });
        }
        let table = Self { k, labels, records };
        table.check_shape()?;
        Ok(table)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRecord {
    grid: f64,
    zeta: Vec<f64>,
    rank: Option<usize>,
    #[serde(rename = "traceF")]
    trace: Option<f64>,
    v1: Vec<(String, Option<f64>)>,
    error: Option<String>,
}

/// Compact JSON with every float written to 17 significant digits.
#[derive(Clone, Copy, Debug, Default)]
pub struct FullPrecision;

impl Formatter for FullPrecision {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_float(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        CompactFormatter.write_f32(writer, value)
    }
}

/// Compact JSON of any value with [`FullPrecision`] floats.
pub fn to_json_full_precision<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision);
    value.serialize(&mut ser).expect("value serializes");
    String::from_utf8(buf).expect("json is utf-8")
}
