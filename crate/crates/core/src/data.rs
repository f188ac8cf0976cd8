//! Longitudinal and survival CSV ingestion, validation and the subject-level join.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::ops::Range;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A covariate cell. Numbers stay numbers; `true`/`false` literals stay booleans
/// so that canonical files survive a parse/write round trip unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovariateValue {
    Real(f64),
    Bool(bool),
}

impl CovariateValue {
    pub fn as_f64(self) -> f64 {
        match self {
            CovariateValue::Real(v) => v,
            CovariateValue::Bool(b) => f64::from(u8::from(b)),
        }
    }

    fn parse(cell: &str) -> Option<Self> {
        let cell = cell.trim();
        match cell {
            "true" | "TRUE" => return Some(CovariateValue::Bool(true)),
            "false" | "FALSE" => return Some(CovariateValue::Bool(false)),
            _ => {}
        }
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => Some(CovariateValue::Real(v)),
            _ => None,
        }
    }

    fn render(self) -> String {
        match self {
            CovariateValue::Real(v) => format_real(v),
            CovariateValue::Bool(b) => b.to_string(),
        }
    }

    fn total_cmp(&self, other: &Self) -> Ordering {
        self.as_f64().total_cmp(&other.as_f64())
    }
}

pub type Covariates = IndexMap<String, CovariateValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongitudinalRecord {
    pub subject_id: String,
    pub time: f64,
    pub response: f64,
    pub covariates: Covariates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub subject_id: String,
    pub event_time: f64,
    pub event: bool,
    pub covariates: Covariates,
}

/// Column names for the longitudinal file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LongitudinalSchema {
    pub id: String,
    pub time: String,
    pub response: String,
}

impl Default for LongitudinalSchema {
    fn default() -> Self {
        Self {
            id: "id".into(),
            time: "time".into(),
            response: "y".into(),
        }
    }
}

/// Column names for the survival file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurvivalSchema {
    pub id: String,
    pub time: String,
    pub status: String,
}

impl Default for SurvivalSchema {
    fn default() -> Self {
        Self {
            id: "id".into(),
            time: "time".into(),
            status: "status".into(),
        }
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_real(v: f64) -> String {
    format!("{v}")
}

struct Header {
    names: Vec<String>,
}

impl Header {
    fn position(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    }
}

fn reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source)
}

fn read_header<R: Read>(rdr: &mut csv::Reader<R>) -> Result<Header> {
    let names = rdr
        .headers()?
        .iter()
        .map(|s| s.trim_start_matches('\u{feff}').to_string())
        .collect::<Vec<_>>();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(Error::Schema("header row missing".into()));
    }
    Ok(Header { names })
}

fn parse_real(cell: &str, row: usize, column: &str) -> Result<f64> {
    match cell.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            row,
            message: format!("column `{column}`: expected a finite number, found `{cell}`"),
        }),
    }
}

fn parse_covariates(
    record: &csv::StringRecord,
    header: &Header,
    skip: &[usize],
    row: usize,
) -> Result<Covariates> {
    let mut out = Covariates::new();
    for (j, name) in header.names.iter().enumerate() {
        if skip.contains(&j) {
            continue;
        }
        let cell = record.get(j).unwrap_or("");
        let value = CovariateValue::parse(cell).ok_or_else(|| Error::Parse {
            row,
            message: format!("covariate `{name}`: invalid or missing value `{cell}`"),
        })?;
        out.insert(name.clone(), value);
    }
    Ok(out)
}

fn check_width(record: &csv::StringRecord, header: &Header, row: usize) -> Result<()> {
    if record.len() != header.names.len() {
        return Err(Error::Parse {
            row,
            message: format!(
                "expected {} fields, found {}",
                header.names.len(),
                record.len()
            ),
        });
    }
    Ok(())
}

/// Parses a long-format file: one row per visit.
pub fn parse_longitudinal_csv<R: Read>(
    source: R,
    schema: &LongitudinalSchema,
) -> Result<Vec<LongitudinalRecord>> {
    let mut rdr = reader(source);
    let header = read_header(&mut rdr)?;
    let id = header.position(&schema.id)?;
    let time = header.position(&schema.time)?;
    let response = header.position(&schema.response)?;
    let skip = [id, time, response];

    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec?;
        check_width(&rec, &header, row)?;
        let subject_id = rec[id].trim().to_string();
        if subject_id.is_empty() {
            return Err(Error::Parse {
                row,
                message: "empty subject id".into(),
            });
        }
        out.push(LongitudinalRecord {
            subject_id,
            time: parse_real(&rec[time], row, &schema.time)?,
            response: parse_real(&rec[response], row, &schema.response)?,
            covariates: parse_covariates(&rec, &header, &skip, row)?,
        });
    }
    Ok(out)
}

fn parse_status(cell: &str, row: usize, column: &str) -> Result<bool> {
    match cell.trim() {
        "1" | "true" | "TRUE" => Ok(true),
        "0" | "false" | "FALSE" => Ok(false),
        other => Err(Error::Parse {
            row,
            message: format!("column `{column}`: event indicator must be 0/1/true/false, found `{other}`"),
        }),
    }
}

/// Parses a one-row-per-subject survival file.
pub fn parse_survival_csv<R: Read>(
    source: R,
    schema: &SurvivalSchema,
) -> Result<Vec<SurvivalRecord>> {
    let mut rdr = reader(source);
    let header = read_header(&mut rdr)?;
    let id = header.position(&schema.id)?;
    let time = header.position(&schema.time)?;
    let status = header.position(&schema.status)?;
    let skip = [id, time, status];

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec?;
        check_width(&rec, &header, row)?;
        let subject_id = rec[id].trim().to_string();
        if subject_id.is_empty() {
            return Err(Error::Parse {
                row,
                message: "empty subject id".into(),
            });
        }
        if !seen.insert(subject_id.clone()) {
            return Err(Error::DuplicateId(subject_id));
        }
        let event_time = parse_real(&rec[time], row, &schema.time)?;
        if event_time < 0.0 {
            return Err(Error::NegativeTime {
                subject: subject_id,
                time: event_time,
            });
        }
        out.push(SurvivalRecord {
            subject_id,
            event_time,
            event: parse_status(&rec[status], row, &schema.status)?,
            covariates: parse_covariates(&rec, &header, &skip, row)?,
        });
    }
    Ok(out)
}

fn covariate_names<'a>(maps: impl Iterator<Item = &'a Covariates>) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for m in maps {
        for k in m.keys() {
            if !names.contains(k) {
                names.push(k.clone());
            }
        }
    }
    names
}

fn writer<W: Write>(sink: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink)
}

fn covariate_cell(map: &Covariates, name: &str) -> Result<String> {
    map.get(name)
        .map(|v| v.render())
        .ok_or_else(|| Error::Schema(format!("record lacks covariate `{name}`")))
}

/// Writes records in canonical form (LF line endings, shortest round-trip numbers).
pub fn write_longitudinal_csv<W: Write>(
    records: &[LongitudinalRecord],
    schema: &LongitudinalSchema,
    sink: W,
) -> Result<()> {
    let names = covariate_names(records.iter().map(|r| &r.covariates));
    let mut w = writer(sink);
    let mut header = vec![schema.id.clone(), schema.time.clone(), schema.response.clone()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.subject_id.clone(), format_real(r.time), format_real(r.response)];
        for n in &names {
            row.push(covariate_cell(&r.covariates, n)?);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_survival_csv<W: Write>(
    records: &[SurvivalRecord],
    schema: &SurvivalSchema,
    sink: W,
) -> Result<()> {
    let names = covariate_names(records.iter().map(|r| &r.covariates));
    let mut w = writer(sink);
    let mut header = vec![schema.id.clone(), schema.time.clone(), schema.status.clone()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.subject_id.clone(),
            format_real(r.event_time),
            if r.event { "1".into() } else { "0".into() },
        ];
        for n in &names {
            row.push(covariate_cell(&r.covariates, n)?);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Validated merge of the two record sets.
///
/// Subjects are ordered by id; `visits[i]` is the range of `longitudinal`
/// belonging to `survival[i]` (possibly empty).
#[derive(Debug, Clone, PartialEq)]
pub struct JointDataset {
    pub longitudinal: Vec<LongitudinalRecord>,
    pub survival: Vec<SurvivalRecord>,
    pub visits: Vec<Range<usize>>,
    /// Name under which formulas refer to the visit time.
    pub time_name: String,
}

fn cmp_covariates(a: &Covariates, b: &Covariates) -> Ordering {
    let mut ka: Vec<_> = a.iter().collect();
    let mut kb: Vec<_> = b.iter().collect();
    ka.sort_by(|x, y| x.0.cmp(y.0));
    kb.sort_by(|x, y| x.0.cmp(y.0));
    for ((na, va), (nb, vb)) in ka.iter().zip(kb.iter()) {
        let o = na.cmp(nb).then_with(|| va.total_cmp(vb));
        if o != Ordering::Equal {
            return o;
        }
    }
    ka.len().cmp(&kb.len())
}

/// Joins long-format visits with per-subject survival records.
///
/// A visit recorded exactly at the event time is accepted.
pub fn join_datasets(
    long: Vec<LongitudinalRecord>,
    surv: Vec<SurvivalRecord>,
    time_name: &str,
) -> Result<JointDataset> {
    if long.is_empty() || surv.is_empty() {
        return Err(Error::InvalidInput(
            "both longitudinal and survival data must be nonempty".into(),
        ));
    }
    let mut surv = surv;
    surv.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
    let mut index = BTreeMap::new();
    for (i, s) in surv.iter().enumerate() {
        if !s.event_time.is_finite() || s.event_time < 0.0 {
            return Err(Error::NegativeTime {
                subject: s.subject_id.clone(),
                time: s.event_time,
            });
        }
        if index.insert(s.subject_id.clone(), i).is_some() {
            return Err(Error::DuplicateId(s.subject_id.clone()));
        }
    }

    let mut orphans = Vec::new();
    for r in &long {
        if r.subject_id.is_empty() {
            return Err(Error::InvalidInput("empty subject id".into()));
        }
        if !r.time.is_finite() || !r.response.is_finite() {
            return Err(Error::NonFinite(format!(
                "visit of subject `{}` has non-finite time or response",
                r.subject_id
            )));
        }
        if !index.contains_key(&r.subject_id) && !orphans.contains(&r.subject_id) {
            orphans.push(r.subject_id.clone());
        }
    }
    if !orphans.is_empty() {
        orphans.sort();
        return Err(Error::Orphan(orphans));
    }

    let mut long = long;
    long.sort_by(|a, b| {
        index[&a.subject_id]
            .cmp(&index[&b.subject_id])
            .then_with(|| a.time.total_cmp(&b.time))
            .then_with(|| a.response.total_cmp(&b.response))
            .then_with(|| cmp_covariates(&a.covariates, &b.covariates))
    });

    let mut late = Vec::new();
    let mut visits = vec![0..0; surv.len()];
    let mut start = 0;
    while start < long.len() {
        let i = index[&long[start].subject_id];
        let mut end = start;
        while end < long.len() && long[end].subject_id == long[start].subject_id {
            if long[end].time > surv[i].event_time && !late.contains(&surv[i].subject_id) {
                late.push(surv[i].subject_id.clone());
            }
            end += 1;
        }
        visits[i] = start..end;
        start = end;
    }
    if !late.is_empty() {
        return Err(Error::TemporalConsistency(late));
    }

    Ok(JointDataset {
        longitudinal: long,
        survival: surv,
        visits,
        time_name: time_name.to_string(),
    })
}

impl JointDataset {
    pub fn n_subjects(&self) -> usize {
        self.survival.len()
    }

    pub fn n_obs(&self) -> usize {
        self.longitudinal.len()
    }

    pub fn subject_visits(&self, i: usize) -> &[LongitudinalRecord] {
        &self.longitudinal[self.visits[i].clone()]
    }

    /// Value of `name` for a visit row: the time variable, a visit covariate,
    /// or the subject's baseline (survival) covariate, in that order.
    pub fn lookup(&self, row: usize, subject: usize, name: &str) -> Option<f64> {
        let r = &self.longitudinal[row];
        if name == self.time_name {
            return Some(r.time);
        }
        r.covariates
            .get(name)
            .or_else(|| self.survival[subject].covariates.get(name))
            .map(|v| v.as_f64())
    }

    /// Index of the subject owning each longitudinal row.
    pub fn row_subjects(&self) -> Vec<usize> {
        let mut out = vec![0; self.longitudinal.len()];
        for (i, r) in self.visits.iter().enumerate() {
            for k in r.clone() {
                out[k] = i;
            }
        }
        out
    }
}
