use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use sha2::{Digest, Sha256};

use crate::error::{FluError, Result};
use crate::model::{ObservationPanel, PhaseScheme, RegionGraph};

/// Gaps listed in full before the error message is truncated.
const LISTED_GAPS: usize = 20;

pub(crate) fn read_input(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| FluError::InvalidInput(format!("cannot read {}: {e}", path.display())))
}

/// SHA-256 of a git-style blob header followed by the content, hex encoded.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

fn reader(bytes: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(bytes)
}

fn check_header(rdr: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(|e| parse_error(1, e.to_string()))?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(parse_error(1, format!("expected header `{}`, found `{}`", expected.join(","), got.join(","))));
    }
    Ok(())
}

fn parse_error(line: usize, message: impl Into<String>) -> FluError {
    FluError::Parse { line, message: message.into() }
}

fn line_of(record: &csv::StringRecord) -> usize {
    record.position().map_or(0, |p| p.line() as usize)
}

fn parse_date(field: &str, line: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(field, "%Y-%m-%d")
        .map_err(|_| parse_error(line, format!("date `{field}` is not YYYY-MM-DD")))
}

/// Parse a `region,date,count` table in any row order. Regions are sorted by
/// id; every region must have exactly one count on every date between the
/// first and last date in the file.
pub fn parse_counts(bytes: &[u8]) -> Result<ObservationPanel> {
    let mut rdr = reader(bytes);
    check_header(&mut rdr, &["region", "date", "count"])?;
    let mut cells: BTreeMap<String, BTreeMap<NaiveDate, u64>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| parse_error(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = line_of(&record);
        if record.len() != 3 {
            return Err(parse_error(line, format!("expected 3 fields, found {}", record.len())));
        }
        let region = &record[0];
        if region.is_empty() {
            return Err(parse_error(line, "empty region id"));
        }
        let date = parse_date(&record[1], line)?;
        let count: i64 =
            record[2].parse().map_err(|_| parse_error(line, format!("count `{}` is not an integer", &record[2])))?;
        if count < 0 {
            return Err(parse_error(line, format!("negative count {count}")));
        }
        if cells.entry(region.to_string()).or_default().insert(date, count as u64).is_some() {
            return Err(parse_error(line, format!("duplicate cell ({region}, {date})")));
        }
    }
    let all_dates: BTreeSet<NaiveDate> = cells.values().flat_map(|m| m.keys().copied()).collect();
    let (Some(&first), Some(&last)) = (all_dates.first(), all_dates.last()) else {
        return Err(FluError::invalid("counts file has no rows"));
    };
    let dates: Vec<NaiveDate> = first.iter_days().take_while(|d| *d <= last).collect();
    let mut gaps = Vec::new();
    for (region, series) in &cells {
        for d in &dates {
            if !series.contains_key(d) {
                gaps.push(format!("({region}, {d})"));
            }
        }
    }
    if !gaps.is_empty() {
        let more = gaps.len().saturating_sub(LISTED_GAPS);
        let mut msg = format!("{} missing cells: {}", gaps.len(), gaps[..gaps.len().min(LISTED_GAPS)].join(", "));
        if more > 0 {
            let _ = write!(msg, " and {more} more");
        }
        return Err(FluError::invalid(msg));
    }
    let ids: Vec<String> = cells.keys().cloned().collect();
    let rows = cells.into_values().map(|m| m.into_values().collect()).collect();
    ObservationPanel::new(ids, dates, rows)
}

pub fn ingest_counts(path: &Path) -> Result<ObservationPanel> {
    parse_counts(&read_input(path)?)
}

/// Parse a `region_a,region_b` edge list against the panel's regions. An
/// empty file is an edgeless graph.
pub fn parse_adjacency(bytes: &[u8], panel: &ObservationPanel) -> Result<RegionGraph> {
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Ok(RegionGraph::edgeless(panel.n_regions()));
    }
    let mut rdr = reader(bytes);
    check_header(&mut rdr, &["region_a", "region_b"])?;
    let mut edges = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| parse_error(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = line_of(&record);
        if record.len() != 2 {
            return Err(parse_error(line, format!("expected 2 fields, found {}", record.len())));
        }
        let index = |id: &str| {
            panel.region_index(id).ok_or_else(|| parse_error(line, format!("unknown region `{id}`")))
        };
        let (a, b) = (index(&record[0])?, index(&record[1])?);
        if a == b {
            return Err(parse_error(line, format!("self-loop on `{}`", &record[0])));
        }
        edges.push((a, b));
    }
    RegionGraph::from_edges(panel.n_regions(), &edges)
}

pub fn ingest_adjacency(path: &Path, panel: &ObservationPanel) -> Result<RegionGraph> {
    parse_adjacency(&read_input(path)?, panel)
}

/// A `region,date,<value>` table keyed by region and date.
pub fn parse_series(bytes: &[u8]) -> Result<BTreeMap<(String, NaiveDate), f64>> {
    let mut rdr = reader(bytes);
    let header = rdr.headers().map_err(|e| parse_error(1, e.to_string()))?.clone();
    if header.len() != 3 || &header[0] != "region" || &header[1] != "date" {
        return Err(parse_error(1, "expected header `region,date,<value>`"));
    }
    let mut out = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| parse_error(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = line_of(&record);
        if record.len() != 3 {
            return Err(parse_error(line, format!("expected 3 fields, found {}", record.len())));
        }
        let date = parse_date(&record[1], line)?;
        let value: f64 = record[2]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| parse_error(line, format!("value `{}` is not a finite number", &record[2])))?;
        if out.insert((record[0].to_string(), date), value).is_some() {
            return Err(parse_error(line, format!("duplicate cell ({}, {date})", &record[0])));
        }
    }
    if out.is_empty() {
        return Err(FluError::invalid("series file has no rows"));
    }
    Ok(out)
}

pub(crate) fn fmt_prob(p: f64) -> String {
    format!("{p:.6}")
}

pub(crate) fn phase_columns(scheme: PhaseScheme, probs: &[f64]) -> [String; 4] {
    match scheme {
        PhaseScheme::Four => std::array::from_fn(|z| fmt_prob(probs[z])),
        // the single epidemic phase of the two-phase scheme goes in the rising column
        PhaseScheme::Two => [fmt_prob(probs[0]), fmt_prob(probs[1]), String::new(), String::new()],
    }
}

pub(crate) struct CsvTable {
    writer: csv::Writer<Vec<u8>>,
}

impl CsvTable {
    pub(crate) fn new(header: &[&str]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).expect("in-memory write");
        Self { writer }
    }

    pub(crate) fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("in-memory write");
    }

    pub(crate) fn finish(self) -> Vec<u8> {
        self.writer.into_inner().expect("in-memory flush")
    }
}
