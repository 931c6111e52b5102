//! Transaction parsing and weekly aggregation.
//!
//! A transaction log is a delimited text file with a header row. Three
//! columns are used: the buying entity, the amount and the timestamp.
//! Amounts are summed per entity into ISO-8601 weeks on a grid shared by
//! every entity, with empty weeks filled by zero.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{DateTime, Datelike, Duration, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transaction {
    pub entity_name: String,
    pub amount: f64,
    pub timestamp: NaiveDateTime,
}

/// Header names of the three columns that are read from a transaction log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub entity: String,
    pub amount: String,
    pub timestamp: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            entity: "ORGFULLNAME".into(),
            amount: "REAL_PRICE".into(),
            timestamp: "CREATE_TIME".into(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ParseOptions {
    pub delimiter: u8,
    /// Drop rows that are byte-for-byte duplicates of an earlier row.
    pub dedup: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self { delimiter: b',', dedup: false }
    }
}

/// A data row that could not be turned into a [`Transaction`].
#[derive(Debug, Clone, PartialEq)]
pub struct Reject {
    /// 1-based line number in the source, counting the header as line 1.
    pub row: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub transactions: Vec<Transaction>,
    pub rejects: Vec<Reject>,
    pub warnings: Vec<String>,
    pub duplicates_dropped: usize,
}

/// Parse a timestamp given either as epoch seconds or as a calendar string.
pub fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    let s = raw.trim();
    if s.is_empty() {
        return None;
    }
    if let Ok(secs) = s.parse::<i64>() {
        return DateTime::from_timestamp(secs, 0).map(|d| d.naive_utc());
    }
    const FORMATS: [&str; 4] = [
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%d %H:%M",
    ];
    for f in FORMATS {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, f) {
            return Some(t);
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

pub fn parse_transactions<R: Read>(
    source: R,
    columns: &ColumnMap,
    opts: ParseOptions,
) -> Result<ParseOutcome> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(Error::EmptyInput("transaction stream has no header row".into()));
    }
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Config(format!("mapped column `{name}` not found in header")))
    };
    let ci = find(&columns.entity)?;
    let ca = find(&columns.amount)?;
    let ct = find(&columns.timestamp)?;

    let mut out = ParseOutcome::default();
    let mut seen: HashSet<Vec<String>> = HashSet::new();
    let mut record = csv::StringRecord::new();
    let mut line: u64 = 1;
    while reader.read_record(&mut record)? {
        line += 1;
        if opts.dedup {
            let key: Vec<String> = record.iter().map(str::to_owned).collect();
            if !seen.insert(key) {
                out.duplicates_dropped += 1;
                continue;
            }
        }
        let field = |i: usize| record.get(i).unwrap_or("");
        let name = field(ci).trim();
        if name.is_empty() {
            out.rejects.push(Reject { row: line, reason: "empty entity name".into() });
            continue;
        }
        let amount = match field(ca).trim().parse::<f64>() {
            Ok(a) if a.is_finite() => a,
            _ => {
                out.rejects.push(Reject {
                    row: line,
                    reason: format!("unparseable amount `{}`", field(ca)),
                });
                continue;
            }
        };
        let Some(timestamp) = parse_timestamp(field(ct)) else {
            out.rejects.push(Reject {
                row: line,
                reason: format!("unparseable timestamp `{}`", field(ct)),
            });
            continue;
        };
        if amount < 0.0 {
            out.warnings.push(format!("row {line}: negative amount {amount} for `{name}`"));
        }
        out.transactions.push(Transaction { entity_name: name.to_owned(), amount, timestamp });
    }
    if line == 1 {
        return Err(Error::EmptyInput("transaction stream has no data rows".into()));
    }
    Ok(out)
}

/// An ISO-8601 week, e.g. `2017-W18`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WeekId {
    pub year: i32,
    pub week: u32,
}

impl WeekId {
    pub fn new(year: i32, week: u32) -> Result<Self> {
        NaiveDate::from_isoywd_opt(year, week, chrono::Weekday::Mon)
            .map(|_| Self { year, week })
            .ok_or_else(|| Error::Range(format!("{year}-W{week:02} is not a valid ISO week")))
    }

    pub fn of(t: &NaiveDateTime) -> Self {
        let iso = t.date().iso_week();
        Self { year: iso.year(), week: iso.week() }
    }

    pub fn monday(&self) -> NaiveDate {
        NaiveDate::from_isoywd_opt(self.year, self.week, chrono::Weekday::Mon)
            .expect("WeekId is validated on construction")
    }

    /// Whole weeks from `self` to `other` (negative when `other` is earlier).
    pub fn weeks_until(&self, other: &WeekId) -> i64 {
        (other.monday() - self.monday()).num_days() / 7
    }

    pub fn offset(&self, weeks: i64) -> WeekId {
        let t = (self.monday() + Duration::weeks(weeks)).and_hms_opt(0, 0, 0).unwrap();
        WeekId::of(&t)
    }
}

impl fmt::Display for WeekId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-W{:02}", self.year, self.week)
    }
}

impl FromStr for WeekId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (y, w) = s
            .trim()
            .split_once("-W")
            .ok_or_else(|| Error::Format(format!("bad ISO week `{s}`")))?;
        let year = y.parse().map_err(|_| Error::Format(format!("bad ISO week year in `{s}`")))?;
        let week = w.parse().map_err(|_| Error::Format(format!("bad ISO week number in `{s}`")))?;
        WeekId::new(year, week)
    }
}

/// Inclusive range of weeks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeekSpan {
    pub start: WeekId,
    pub end: WeekId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklySeries {
    pub entity_name: String,
    pub values: Vec<f64>,
}

/// Equal-length weekly series for a set of uniquely named entities.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesMatrix {
    series: Vec<WeeklySeries>,
    grid_start: WeekId,
    grid_len: usize,
}

impl SeriesMatrix {
    pub fn new(series: Vec<WeeklySeries>, grid_start: WeekId) -> Result<Self> {
        let grid_len = series.first().map(|s| s.values.len()).unwrap_or(0);
        if grid_len == 0 {
            return Err(Error::Shape("series matrix needs at least one week".into()));
        }
        let mut names = HashSet::new();
        for s in &series {
            if s.values.len() != grid_len {
                return Err(Error::Shape(format!(
                    "series `{}` has {} weeks, expected {grid_len}",
                    s.entity_name,
                    s.values.len()
                )));
            }
            if !names.insert(s.entity_name.as_str()) {
                return Err(Error::Input(format!("duplicate entity `{}`", s.entity_name)));
            }
        }
        Ok(Self { series, grid_start, grid_len })
    }

    /// Build from raw rows, anchoring the grid at an arbitrary fixed week.
    pub fn from_rows(labels: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != rows.len() {
            return Err(Error::Shape("label count differs from row count".into()));
        }
        let series = labels
            .into_iter()
            .zip(rows)
            .map(|(entity_name, values)| WeeklySeries { entity_name, values })
            .collect();
        Self::new(series, WeekId { year: 2017, week: 18 })
    }

    pub fn n(&self) -> usize {
        self.series.len()
    }

    pub fn t(&self) -> usize {
        self.grid_len
    }

    pub fn grid_start(&self) -> WeekId {
        self.grid_start
    }

    pub fn series(&self) -> &[WeeklySeries] {
        &self.series
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.series[i].values
    }

    pub fn labels(&self) -> Vec<String> {
        self.series.iter().map(|s| s.entity_name.clone()).collect()
    }

    pub fn total(&self) -> f64 {
        self.series.iter().flat_map(|s| s.values.iter()).sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["entity".to_owned()];
        header.extend((0..self.grid_len).map(|k| format!("week_{k}")));
        w.write_record(&header)?;
        for s in &self.series {
            let mut rec = vec![s.entity_name.clone()];
            rec.extend(s.values.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Sidecar metadata as `key=value` lines.
    pub fn metadata(&self) -> String {
        format!(
            "grid_start={}\ngrid_start_date={}\ngrid_len={}\nentities={}\n",
            self.grid_start,
            self.grid_start.monday(),
            self.grid_len,
            self.n()
        )
    }

    pub fn read_csv<R: Read>(input: R, metadata: &str) -> Result<Self> {
        let mut grid_start = None;
        let mut grid_len = None;
        for line in metadata.lines() {
            match line.split_once('=') {
                Some(("grid_start", v)) => grid_start = Some(v.parse::<WeekId>()?),
                Some(("grid_len", v)) => {
                    grid_len = Some(v.trim().parse::<usize>().map_err(|_| {
                        Error::Format(format!("bad grid_len `{v}`"))
                    })?)
                }
                _ => {}
            }
        }
        let grid_start = grid_start.ok_or_else(|| Error::Format("metadata lacks grid_start".into()))?;
        let grid_len = grid_len.ok_or_else(|| Error::Format("metadata lacks grid_len".into()))?;
        let mut r = csv::Reader::from_reader(input);
        let mut series = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let name = rec.get(0).unwrap_or("").to_owned();
            let values = rec
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().map_err(|_| Error::Format(format!("bad value `{v}` for `{name}`"))))
                .collect::<Result<Vec<_>>>()?;
            if values.len() != grid_len {
                return Err(Error::Shape(format!(
                    "`{name}` has {} weeks but metadata says {grid_len}",
                    values.len()
                )));
            }
            series.push(WeeklySeries { entity_name: name, values });
        }
        Self::new(series, grid_start)
    }
}

/// Sum transactions per entity and ISO week.
///
/// The grid covers the earliest through latest transaction week unless
/// `span` is given; transactions outside an explicit span are dropped.
/// Entities come out in lexicographic order.
pub fn aggregate_weekly(txns: &[Transaction], span: Option<WeekSpan>) -> Result<SeriesMatrix> {
    let (start, end) = match span {
        Some(s) => {
            if s.end < s.start {
                return Err(Error::Range(format!("week span ends ({}) before it starts ({})", s.end, s.start)));
            }
            (s.start, s.end)
        }
        None => {
            let weeks = txns.iter().map(|t| WeekId::of(&t.timestamp));
            let lo = weeks.clone().min();
            let hi = weeks.max();
            match (lo, hi) {
                (Some(lo), Some(hi)) => (lo, hi),
                _ => return Err(Error::EmptyInput("no transactions and no week span".into())),
            }
        }
    };
    let len = start.weeks_until(&end) as usize + 1;
    let mut by_entity: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for t in txns {
        let k = start.weeks_until(&WeekId::of(&t.timestamp));
        if k < 0 || k as usize >= len {
            continue;
        }
        by_entity.entry(t.entity_name.as_str()).or_insert_with(|| vec![0.0; len])[k as usize] += t.amount;
    }
    if by_entity.is_empty() {
        return Err(Error::EmptyInput("no transactions fall inside the week span".into()));
    }
    let series = by_entity
        .into_iter()
        .map(|(name, values)| WeeklySeries { entity_name: name.to_owned(), values })
        .collect();
    SeriesMatrix::new(series, start)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cols() -> ColumnMap {
        ColumnMap { entity: "name".into(), amount: "amount".into(), timestamp: "time".into() }
    }

    fn txn(name: &str, amount: f64, date: &str) -> Transaction {
        Transaction { entity_name: name.into(), amount, timestamp: parse_timestamp(date).unwrap() }
    }

    #[test]
    fn minimal_file_parses() {
        let src = "name,amount,time\nA,10.5,2017-05-02\n";
        let out = parse_transactions(src.as_bytes(), &cols(), ParseOptions::default()).unwrap();
        assert_eq!(out.transactions.len(), 1);
        assert!(out.rejects.is_empty());
        assert_eq!(out.transactions[0].amount, 10.5);
    }

    #[test]
    fn bad_amount_is_rejected_with_row() {
        let src = "name,amount,time\nA,abc,2017-05-02\n";
        let out = parse_transactions(src.as_bytes(), &cols(), ParseOptions::default()).unwrap();
        assert!(out.transactions.is_empty());
        assert_eq!(out.rejects.len(), 1);
        assert_eq!(out.rejects[0].row, 2);
    }

    #[test]
    fn wide_file_uses_only_mapped_columns() {
        let mut header: Vec<String> = (0..80).map(|i| format!("c{i}")).collect();
        header[3] = "ORGFULLNAME".into();
        header[17] = "REAL_PRICE".into();
        header[42] = "CREATE_TIME".into();
        let mut row: Vec<String> = (0..80).map(|i| format!("junk{i}")).collect();
        row[3] = "Acme".into();
        row[17] = "12.25".into();
        row[42] = "2017-06-01 10:00:00".into();
        let src = format!("{}\n{}\n", header.join(","), row.join(","));
        let out = parse_transactions(src.as_bytes(), &ColumnMap::default(), ParseOptions::default()).unwrap();
        assert_eq!(out.transactions, vec![txn("Acme", 12.25, "2017-06-01 10:00:00")]);
    }

    #[test]
    fn missing_column_names_it() {
        let src = "name,amount\nA,1\n";
        let err = parse_transactions(src.as_bytes(), &cols(), ParseOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("time")), "{err}");
    }

    #[test]
    fn empty_stream_is_an_error() {
        let err = parse_transactions("".as_bytes(), &cols(), ParseOptions::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyInput(_)));
    }

    #[test]
    fn epoch_and_string_timestamps() {
        let a = parse_timestamp("1493683200").unwrap();
        let b = parse_timestamp("2017-05-02 00:00:00").unwrap();
        assert_eq!(a, b);
        assert!(parse_timestamp("yesterday").is_none());
    }

    #[test]
    fn negative_amounts_warn_and_dedup_drops_copies() {
        let src = "name,amount,time\nA,-3,2017-05-02\nA,-3,2017-05-02\n";
        let out = parse_transactions(src.as_bytes(), &cols(), ParseOptions::default()).unwrap();
        assert_eq!(out.transactions.len(), 2);
        assert_eq!(out.warnings.len(), 2);
        let out = parse_transactions(src.as_bytes(), &cols(), ParseOptions { dedup: true, ..Default::default() }).unwrap();
        assert_eq!(out.transactions.len(), 1);
        assert_eq!(out.duplicates_dropped, 1);
    }

    #[test]
    fn same_week_sums() {
        let m = aggregate_weekly(&[txn("A", 10.0, "2017-05-02"), txn("A", 5.0, "2017-05-04")], None).unwrap();
        assert_eq!(m.row(0), &[15.0]);
    }

    #[test]
    fn gap_weeks_are_zero_filled() {
        let m = aggregate_weekly(&[txn("A", 1.0, "2017-05-01"), txn("A", 2.0, "2017-05-15")], None).unwrap();
        assert_eq!(m.row(0), &[1.0, 0.0, 2.0]);
    }

    #[test]
    fn disjoint_entities_share_union_grid() {
        // Weeks: 2017-W18 (May 1), W19, W20, W21. A buys in W18 and W19, B in W21.
        let txns = [
            txn("B", 7.0, "2017-05-24"),
            txn("A", 1.0, "2017-05-01"),
            txn("A", 2.0, "2017-05-07"),
            txn("A", 4.0, "2017-05-08"),
        ];
        let m = aggregate_weekly(&txns, None).unwrap();
        assert_eq!(m.labels(), vec!["A", "B"]);
        assert_eq!(m.grid_start().to_string(), "2017-W18");
        assert_eq!(m.row(0), &[3.0, 4.0, 0.0, 0.0]);
        assert_eq!(m.row(1), &[0.0, 0.0, 0.0, 7.0]);
    }

    #[test]
    fn reversed_span_is_a_range_error() {
        let span = WeekSpan { start: WeekId::new(2017, 20).unwrap(), end: WeekId::new(2017, 18).unwrap() };
        assert!(matches!(aggregate_weekly(&[], Some(span)), Err(Error::Range(_))));
    }

    #[test]
    fn explicit_span_pads_grid() {
        let span = WeekSpan { start: WeekId::new(2017, 17).unwrap(), end: WeekId::new(2017, 20).unwrap() };
        let m = aggregate_weekly(&[txn("A", 1.0, "2017-05-02")], Some(span)).unwrap();
        assert_eq!(m.row(0), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn week_crossing_year_boundary() {
        let m = aggregate_weekly(&[txn("A", 1.0, "2017-12-28"), txn("A", 1.0, "2018-01-04")], None).unwrap();
        assert_eq!(m.t(), 2);
        assert_eq!(m.grid_start().to_string(), "2017-W52");
        assert_eq!(m.grid_start().offset(1).to_string(), "2018-W01");
    }

    #[test]
    fn csv_round_trip() {
        let m = aggregate_weekly(&[txn("A,x", 1.25, "2017-05-02"), txn("B", 0.1, "2017-05-20")], None).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = SeriesMatrix::read_csv(buf.as_slice(), &m.metadata()).unwrap();
        assert_eq!(back, m);
    }
}
