//! Registry snapshot loading.
//!
//! Two snapshot kinds are supported, each as CSV or JSON lines:
//!
//! * `models.csv` — `id,name,release_date,license_class,weights_access,modalities,parameter_count,documented,manufacturer,country`
//! * `benchmarks.csv` — `id,name,release_date,citations,stars,forks,watchers,open_issues,sample_size,category,authors`
//!   with an optional sidecar `affiliations.csv` — `benchmark_id,author,institution,country`
//!
//! List-valued columns (`modalities`, `authors`) are `;`-separated in CSV and
//! arrays in JSON lines. Every record is validated here; no other module parses
//! input files. Exports are normalized so that load → export → load → export
//! is byte-stable.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MODEL_COLUMNS: [&str; 10] = [
    "id",
    "name",
    "release_date",
    "license_class",
    "weights_access",
    "modalities",
    "parameter_count",
    "documented",
    "manufacturer",
    "country",
];

pub const BENCHMARK_COLUMNS: [&str; 11] = [
    "id",
    "name",
    "release_date",
    "citations",
    "stars",
    "forks",
    "watchers",
    "open_issues",
    "sample_size",
    "category",
    "authors",
];

pub const AFFILIATION_COLUMNS: [&str; 4] = ["benchmark_id", "author", "institution", "country"];

pub const ALIAS_COLUMNS: [&str; 2] = ["variant", "canonical"];

/// Label used when a record carries no country.
pub const UNKNOWN_COUNTRY: &str = "Unknown";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnapshotFormat {
    Csv,
    JsonLines,
}

impl FromStr for SnapshotFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(SnapshotFormat::Csv),
            "json" | "jsonl" | "json-lines" => Ok(SnapshotFormat::JsonLines),
            other => Err(Error::invalid(format!("unknown snapshot format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LicenseClass {
    Permissive,
    Community,
    Closed,
    Unspecified,
}

impl LicenseClass {
    pub fn as_str(self) -> &'static str {
        match self {
            LicenseClass::Permissive => "permissive",
            LicenseClass::Community => "community",
            LicenseClass::Closed => "closed",
            LicenseClass::Unspecified => "unspecified",
        }
    }
}

impl FromStr for LicenseClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "permissive" => Ok(LicenseClass::Permissive),
            "community" => Ok(LicenseClass::Community),
            "closed" => Ok(LicenseClass::Closed),
            "unspecified" | "" => Ok(LicenseClass::Unspecified),
            other => Err(format!(
                "expected permissive|community|closed|unspecified, got `{other}`"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightsAccess {
    Open,
    Gated,
    Unspecified,
}

impl WeightsAccess {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightsAccess::Open => "open",
            WeightsAccess::Gated => "gated",
            WeightsAccess::Unspecified => "unspecified",
        }
    }
}

impl FromStr for WeightsAccess {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "open" => Ok(WeightsAccess::Open),
            "gated" => Ok(WeightsAccess::Gated),
            "unspecified" | "" => Ok(WeightsAccess::Unspecified),
            other => Err(format!("expected open|gated|unspecified, got `{other}`")),
        }
    }
}

/// One model-registry entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub id: String,
    pub name: String,
    pub release_date: NaiveDate,
    pub license_class: LicenseClass,
    pub weights_access: WeightsAccess,
    pub modalities: BTreeSet<String>,
    pub parameter_count: Option<u64>,
    /// Model card, training-data summary and licence text are all present.
    pub documented: bool,
    pub manufacturer: String,
    pub country: String,
}

/// An (author, institution, country) triple attached to a benchmark.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Affiliation {
    pub author: String,
    pub institution: String,
    pub country: String,
}

/// One benchmark-registry entry with its resolved affiliations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub id: String,
    pub name: String,
    pub release_date: NaiveDate,
    pub citations: u64,
    pub stars: u64,
    pub forks: Option<u64>,
    pub watchers: Option<u64>,
    pub open_issues: Option<u64>,
    pub sample_size: Option<u64>,
    pub category: String,
    pub authors: Vec<String>,
    pub affiliations: Vec<Affiliation>,
}

impl BenchmarkRecord {
    /// Minimal record, mostly useful for fixtures.
    pub fn new(id: impl Into<String>, release_date: NaiveDate) -> Self {
        let id = id.into();
        BenchmarkRecord {
            name: id.clone(),
            id,
            release_date,
            citations: 0,
            stars: 0,
            forks: None,
            watchers: None,
            open_issues: None,
            sample_size: None,
            category: String::new(),
            authors: Vec::new(),
            affiliations: Vec::new(),
        }
    }
}

/// Audit trail for one loaded file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub source_label: String,
    pub path: PathBuf,
    pub format: SnapshotFormat,
    pub snapshot_date: Option<NaiveDate>,
    pub record_count: usize,
    /// SHA-256 of the file bytes, lowercase hex.
    pub checksum: String,
    /// Rows whose date lacked day (or month) precision and were completed.
    pub imprecise_date_rows: Vec<u64>,
}

impl SnapshotManifest {
    /// Re-hashes the file and compares against the recorded checksum.
    pub fn verify(&self) -> Result<bool> {
        let bytes = std::fs::read(&self.path).map_err(|e| Error::io(&self.path, e))?;
        Ok(sha256_hex(&bytes) == self.checksum)
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub source_label: Option<String>,
    /// Upper bound for release dates. When absent no upper bound is applied
    /// and the manifest records the latest release date seen.
    pub snapshot_date: Option<NaiveDate>,
    pub earliest_date: NaiveDate,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            source_label: None,
            snapshot_date: None,
            earliest_date: NaiveDate::from_ymd_opt(2015, 1, 1).unwrap(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub manifest: SnapshotManifest,
    pub affiliations_manifest: Option<SnapshotManifest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parses `YYYY-MM-DD`, `YYYY-MM` or `YYYY`. The flag is true when the date
/// was completed to the first of the month / year.
pub fn parse_date(raw: &str) -> Result<(NaiveDate, bool), String> {
    let s = raw.trim();
    let parts: Vec<&str> = s.split('-').collect();
    let num = |p: &str| -> Result<u32, String> {
        p.parse::<u32>().map_err(|_| format!("invalid date `{s}`"))
    };
    let (y, m, d, imprecise) = match parts.as_slice() {
        [y, m, d] if y.len() == 4 => (num(y)?, num(m)?, num(d)?, false),
        [y, m] if y.len() == 4 => (num(y)?, num(m)?, 1, true),
        [y] if y.len() == 4 => (num(y)?, 1, 1, true),
        _ => return Err(format!("invalid date `{s}` (expected YYYY-MM-DD, YYYY-MM or YYYY)")),
    };
    NaiveDate::from_ymd_opt(y as i32, m, d)
        .map(|date| (date, imprecise))
        .ok_or_else(|| format!("invalid calendar date `{s}`"))
}

// Row access shared by the CSV and JSON-lines readers.
struct RawRow {
    line: u64,
    fields: HashMap<String, String>,
}

impl RawRow {
    fn get(&self, column: &str) -> &str {
        self.fields.get(column).map(String::as_str).unwrap_or("")
    }
}

struct RowParser<'a> {
    path: &'a Path,
    row: &'a RawRow,
}

impl RowParser<'_> {
    fn err(&self, column: &str, message: impl Into<String>) -> Error {
        Error::Row {
            path: self.path.to_path_buf(),
            row: self.row.line,
            column: column.to_string(),
            message: message.into(),
        }
    }

    fn text(&self, column: &str) -> String {
        self.row.get(column).trim().to_string()
    }

    fn required(&self, column: &str) -> Result<String> {
        let v = self.text(column);
        if v.is_empty() {
            return Err(self.err(column, "value is required"));
        }
        Ok(v)
    }

    fn count(&self, column: &str) -> Result<u64> {
        let v = self.text(column);
        v.parse::<u64>()
            .map_err(|_| self.err(column, format!("expected a nonnegative integer, got `{v}`")))
    }

    fn optional_count(&self, column: &str) -> Result<Option<u64>> {
        if self.text(column).is_empty() {
            Ok(None)
        } else {
            self.count(column).map(Some)
        }
    }

    fn optional_positive(&self, column: &str) -> Result<Option<u64>> {
        match self.optional_count(column)? {
            Some(0) => Err(self.err(column, "must be positive when present")),
            other => Ok(other),
        }
    }

    fn boolean(&self, column: &str) -> Result<bool> {
        match self.text(column).to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" | "" => Ok(false),
            other => Err(self.err(column, format!("expected a boolean, got `{other}`"))),
        }
    }

    fn list(&self, column: &str) -> Vec<String> {
        self.row
            .get(column)
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect()
    }

    fn parse<T: FromStr<Err = String>>(&self, column: &str) -> Result<T> {
        self.row.get(column).parse::<T>().map_err(|m| self.err(column, m))
    }

    fn date(&self, column: &str, opts: &LoadOptions) -> Result<(NaiveDate, bool)> {
        let (date, imprecise) = parse_date(self.row.get(column)).map_err(|m| self.err(column, m))?;
        if date < opts.earliest_date {
            return Err(self.err(column, format!("{date} precedes {}", opts.earliest_date)));
        }
        if let Some(limit) = opts.snapshot_date {
            if date > limit {
                return Err(self.err(column, format!("{date} is after the snapshot date {limit}")));
            }
        }
        Ok((date, imprecise))
    }
}

fn read_rows(path: &Path, bytes: &[u8], format: SnapshotFormat, columns: &[&str]) -> Result<Vec<RawRow>> {
    match format {
        SnapshotFormat::Csv => read_csv_rows(path, bytes, columns),
        SnapshotFormat::JsonLines => read_jsonl_rows(path, bytes, columns),
    }
}

fn read_csv_rows(path: &Path, bytes: &[u8], columns: &[&str]) -> Result<Vec<RawRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            message: format!("unreadable header: {e}"),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers != columns {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            message: format!("expected header `{}`, found `{}`", columns.join(","), headers.join(",")),
        });
    }
    let mut rows = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let fields = headers
            .iter()
            .cloned()
            .zip(record.iter().map(str::to_string))
            .collect();
        rows.push(RawRow { line, fields });
    }
    Ok(rows)
}

fn json_field_to_string(value: &Value) -> String {
    match value {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Array(items) => items
            .iter()
            .map(json_field_to_string)
            .collect::<Vec<_>>()
            .join(";"),
        other => other.to_string(),
    }
}

fn read_jsonl_rows(path: &Path, bytes: &[u8], columns: &[&str]) -> Result<Vec<RawRow>> {
    let mut rows = Vec::new();
    for (idx, line) in bytes.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let schema_err = |message: String| Error::Row {
            path: path.to_path_buf(),
            row: line_no,
            column: String::new(),
            message,
        };
        let obj = match serde_json::from_str::<Value>(&line) {
            Ok(Value::Object(obj)) => obj,
            Ok(_) => return Err(schema_err("expected a JSON object".into())),
            Err(e) => return Err(schema_err(e.to_string())),
        };
        if let Some(extra) = obj.keys().find(|k| !columns.contains(&k.as_str())) {
            return Err(schema_err(format!("unexpected field `{extra}`")));
        }
        if let Some(missing) = columns.iter().find(|c| !obj.contains_key(**c)) {
            return Err(schema_err(format!("missing field `{missing}`")));
        }
        let fields = obj
            .iter()
            .map(|(k, v)| (k.clone(), json_field_to_string(v)))
            .collect();
        rows.push(RawRow { line: line_no, fields });
    }
    Ok(rows)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn manifest(
    path: &Path,
    bytes: &[u8],
    format: SnapshotFormat,
    opts: &LoadOptions,
    record_count: usize,
    latest: Option<NaiveDate>,
    imprecise_date_rows: Vec<u64>,
) -> SnapshotManifest {
    SnapshotManifest {
        source_label: opts
            .source_label
            .clone()
            .unwrap_or_else(|| path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default()),
        path: path.to_path_buf(),
        format,
        snapshot_date: opts.snapshot_date.or(latest),
        record_count,
        checksum: sha256_hex(bytes),
        imprecise_date_rows,
    }
}

pub fn load_models(path: &Path, format: SnapshotFormat, opts: &LoadOptions) -> Result<Loaded<ModelRecord>> {
    let bytes = read_file(path)?;
    let rows = read_rows(path, &bytes, format, &MODEL_COLUMNS)?;
    let mut seen: HashSet<String> = HashSet::new();
    let mut records = Vec::with_capacity(rows.len());
    let mut imprecise = Vec::new();
    for row in &rows {
        let p = RowParser { path, row };
        let id = p.required("id")?;
        if !seen.insert(id.clone()) {
            return Err(p.err("id", format!("duplicate id `{id}`")));
        }
        let (release_date, inexact) = p.date("release_date", opts)?;
        if inexact {
            imprecise.push(row.line);
        }
        let country = p.text("country");
        records.push(ModelRecord {
            id,
            name: p.text("name"),
            release_date,
            license_class: p.parse("license_class")?,
            weights_access: p.parse("weights_access")?,
            modalities: p.list("modalities").into_iter().collect(),
            parameter_count: p.optional_positive("parameter_count")?,
            documented: p.boolean("documented")?,
            manufacturer: p.text("manufacturer"),
            country: if country.is_empty() { UNKNOWN_COUNTRY.to_string() } else { country },
        });
    }
    let latest = records.iter().map(|r| r.release_date).max();
    let manifest = manifest(path, &bytes, format, opts, records.len(), latest, imprecise);
    Ok(Loaded {
        records,
        manifest,
        affiliations_manifest: None,
    })
}

/// Loads benchmarks plus (optionally) their affiliation sidecar. Affiliations
/// naming an unknown benchmark, or an author absent from a nonempty author
/// list, are rejected.
pub fn load_benchmarks(
    path: &Path,
    affiliations: Option<&Path>,
    format: SnapshotFormat,
    opts: &LoadOptions,
) -> Result<Loaded<BenchmarkRecord>> {
    let bytes = read_file(path)?;
    let rows = read_rows(path, &bytes, format, &BENCHMARK_COLUMNS)?;
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut records = Vec::with_capacity(rows.len());
    let mut imprecise = Vec::new();
    for row in &rows {
        let p = RowParser { path, row };
        let id = p.required("id")?;
        if index.contains_key(&id) {
            return Err(p.err("id", format!("duplicate id `{id}`")));
        }
        let (release_date, inexact) = p.date("release_date", opts)?;
        if inexact {
            imprecise.push(row.line);
        }
        index.insert(id.clone(), records.len());
        records.push(BenchmarkRecord {
            id,
            name: p.text("name"),
            release_date,
            citations: p.count("citations")?,
            stars: p.count("stars")?,
            forks: p.optional_count("forks")?,
            watchers: p.optional_count("watchers")?,
            open_issues: p.optional_count("open_issues")?,
            sample_size: p.optional_positive("sample_size")?,
            category: p.text("category"),
            authors: p.list("authors"),
            affiliations: Vec::new(),
        });
    }

    let affiliations_manifest = match affiliations {
        None => None,
        Some(aff_path) => {
            let aff_bytes = read_file(aff_path)?;
            let aff_rows = read_rows(aff_path, &aff_bytes, format, &AFFILIATION_COLUMNS)?;
            for row in &aff_rows {
                let p = RowParser { path: aff_path, row };
                let bench_id = p.required("benchmark_id")?;
                let Some(&slot) = index.get(&bench_id) else {
                    return Err(p.err("benchmark_id", format!("unknown benchmark `{bench_id}`")));
                };
                let author = p.text("author");
                let record = &mut records[slot];
                if !record.authors.is_empty() && !record.authors.contains(&author) {
                    return Err(p.err(
                        "author",
                        format!("`{author}` is not an author of benchmark `{bench_id}`"),
                    ));
                }
                let affiliation = Affiliation {
                    author,
                    institution: p.text("institution"),
                    country: p.text("country"),
                };
                if !record.affiliations.contains(&affiliation) {
                    record.affiliations.push(affiliation);
                }
            }
            Some(manifest(aff_path, &aff_bytes, format, opts, aff_rows.len(), None, Vec::new()))
        }
    };

    let latest = records.iter().map(|r| r.release_date).max();
    let manifest = manifest(path, &bytes, format, opts, records.len(), latest, imprecise);
    Ok(Loaded {
        records,
        manifest,
        affiliations_manifest,
    })
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn opt(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_models<W: Write>(records: &[ModelRecord], format: SnapshotFormat, w: W) -> Result<()> {
    match format {
        SnapshotFormat::Csv => {
            let mut out = csv_writer(w);
            out.write_record(MODEL_COLUMNS)?;
            for r in records {
                out.write_record([
                    r.id.clone(),
                    r.name.clone(),
                    r.release_date.to_string(),
                    r.license_class.as_str().to_string(),
                    r.weights_access.as_str().to_string(),
                    r.modalities.iter().cloned().collect::<Vec<_>>().join(";"),
                    opt(r.parameter_count),
                    r.documented.to_string(),
                    r.manufacturer.clone(),
                    r.country.clone(),
                ])?;
            }
            out.flush().map_err(|e| Error::io("<writer>", e))?;
        }
        SnapshotFormat::JsonLines => {
            let mut w = w;
            for r in records {
                let v = json!({
                    "id": r.id,
                    "name": r.name,
                    "release_date": r.release_date.to_string(),
                    "license_class": r.license_class.as_str(),
                    "weights_access": r.weights_access.as_str(),
                    "modalities": r.modalities,
                    "parameter_count": r.parameter_count,
                    "documented": r.documented,
                    "manufacturer": r.manufacturer,
                    "country": r.country,
                });
                writeln!(w, "{v}").map_err(|e| Error::io("<writer>", e))?;
            }
        }
    }
    Ok(())
}

pub fn write_benchmarks<W: Write>(records: &[BenchmarkRecord], format: SnapshotFormat, w: W) -> Result<()> {
    match format {
        SnapshotFormat::Csv => {
            let mut out = csv_writer(w);
            out.write_record(BENCHMARK_COLUMNS)?;
            for r in records {
                out.write_record([
                    r.id.clone(),
                    r.name.clone(),
                    r.release_date.to_string(),
                    r.citations.to_string(),
                    r.stars.to_string(),
                    opt(r.forks),
                    opt(r.watchers),
                    opt(r.open_issues),
                    opt(r.sample_size),
                    r.category.clone(),
                    r.authors.join(";"),
                ])?;
            }
            out.flush().map_err(|e| Error::io("<writer>", e))?;
        }
        SnapshotFormat::JsonLines => {
            let mut w = w;
            for r in records {
                let v = json!({
                    "id": r.id,
                    "name": r.name,
                    "release_date": r.release_date.to_string(),
                    "citations": r.citations,
                    "stars": r.stars,
                    "forks": r.forks,
                    "watchers": r.watchers,
                    "open_issues": r.open_issues,
                    "sample_size": r.sample_size,
                    "category": r.category,
                    "authors": r.authors,
                });
                writeln!(w, "{v}").map_err(|e| Error::io("<writer>", e))?;
            }
        }
    }
    Ok(())
}

pub fn write_affiliations<W: Write>(records: &[BenchmarkRecord], format: SnapshotFormat, w: W) -> Result<()> {
    match format {
        SnapshotFormat::Csv => {
            let mut out = csv_writer(w);
            out.write_record(AFFILIATION_COLUMNS)?;
            for r in records {
                for a in &r.affiliations {
                    out.write_record([&r.id, &a.author, &a.institution, &a.country])?;
                }
            }
            out.flush().map_err(|e| Error::io("<writer>", e))?;
        }
        SnapshotFormat::JsonLines => {
            let mut w = w;
            for r in records {
                for a in &r.affiliations {
                    let v = json!({
                        "benchmark_id": r.id,
                        "author": a.author,
                        "institution": a.institution,
                        "country": a.country,
                    });
                    writeln!(w, "{v}").map_err(|e| Error::io("<writer>", e))?;
                }
            }
        }
    }
    Ok(())
}

/// Variant → canonical label mapping with chains resolved.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AliasTable {
    resolved: BTreeMap<String, String>,
}

impl AliasTable {
    pub fn from_pairs<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        let mut direct: BTreeMap<String, String> = BTreeMap::new();
        for (variant, canonical) in pairs {
            let (variant, canonical) = (variant.into(), canonical.into());
            if variant == canonical {
                continue;
            }
            if let Some(prev) = direct.get(&variant) {
                if *prev != canonical {
                    return Err(Error::invalid(format!(
                        "alias `{variant}` maps to both `{prev}` and `{canonical}`"
                    )));
                }
            }
            direct.insert(variant, canonical);
        }
        let mut resolved = BTreeMap::new();
        for start in direct.keys() {
            let mut visited = BTreeSet::from([start.as_str()]);
            let mut current = direct[start].as_str();
            while let Some(next) = direct.get(current) {
                if !visited.insert(current) {
                    return Err(Error::AliasCycle(start.clone()));
                }
                current = next;
            }
            if visited.contains(current) {
                return Err(Error::AliasCycle(start.clone()));
            }
            resolved.insert(start.clone(), current.to_string());
        }
        Ok(AliasTable { resolved })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let rows = read_csv_rows(path, &bytes, &ALIAS_COLUMNS)?;
        let pairs: Vec<(String, String)> = rows
            .iter()
            .map(|r| (r.get("variant").trim().to_string(), r.get("canonical").trim().to_string()))
            .collect();
        Self::from_pairs(pairs)
    }

    pub fn is_empty(&self) -> bool {
        self.resolved.is_empty()
    }

    pub fn canonical<'a>(&'a self, label: &'a str) -> &'a str {
        self.resolved.get(label).map(String::as_str).unwrap_or(label)
    }
}

/// Rewrites institution and country labels of every affiliation. Records are
/// never merged or dropped; affiliations that collapse onto the same triple
/// are deduplicated within their record.
pub fn dedupe_entities(records: &[BenchmarkRecord], aliases: &AliasTable) -> Vec<BenchmarkRecord> {
    records
        .iter()
        .map(|r| {
            let mut out = r.clone();
            out.affiliations.clear();
            for a in &r.affiliations {
                let rewritten = Affiliation {
                    author: a.author.clone(),
                    institution: aliases.canonical(&a.institution).to_string(),
                    country: aliases.canonical(&a.country).to_string(),
                };
                if !out.affiliations.contains(&rewritten) {
                    out.affiliations.push(rewritten);
                }
            }
            out
        })
        .collect()
}

/// Model-side counterpart of [`dedupe_entities`]: rewrites manufacturer and
/// country labels.
pub fn dedupe_models(records: &[ModelRecord], aliases: &AliasTable) -> Vec<ModelRecord> {
    records
        .iter()
        .map(|m| ModelRecord {
            manufacturer: aliases.canonical(&m.manufacturer).to_string(),
            country: aliases.canonical(&m.country).to_string(),
            ..m.clone()
        })
        .collect()
}

impl fmt::Display for SnapshotFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SnapshotFormat::Csv => "csv",
            SnapshotFormat::JsonLines => "json-lines",
        })
    }
}

/// Release year helper shared by the yearly analytics.
pub(crate) fn year_of(date: NaiveDate) -> i32 {
    date.year()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, content: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, content).unwrap();
        p
    }

    const MODELS: &str = "id,name,release_date,license_class,weights_access,modalities,parameter_count,documented,manufacturer,country\n\
m1,Alpha,2021-03-04,permissive,open,text;image,7000000000,true,Acme,USA\n\
m2,\"Beta, large\",2022-05,closed,gated,text,,false,Globex,\n\
m3,Gamma,2023,community,unspecified,,13000000000,yes,Acme,France\n";

    #[test]
    fn header_only_file_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "models.csv", &format!("{}\n", MODEL_COLUMNS.join(",")));
        let loaded = load_models(&p, SnapshotFormat::Csv, &LoadOptions::default()).unwrap();
        assert!(loaded.records.is_empty());
        assert_eq!(loaded.manifest.record_count, 0);
    }

    #[test]
    fn bad_parameter_count_names_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let body = MODELS.replace("7000000000", "abc");
        let p = write(dir.path(), "models.csv", &body);
        let err = load_models(&p, SnapshotFormat::Csv, &LoadOptions::default()).unwrap_err();
        match err {
            Error::Row { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "parameter_count");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn three_rows_round_trip_through_export() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "models.csv", MODELS);
        let loaded = load_models(&p, SnapshotFormat::Csv, &LoadOptions::default()).unwrap();
        assert_eq!(loaded.records.len(), 3);
        assert_eq!(loaded.records[1].name, "Beta, large");
        assert_eq!(loaded.records[1].country, UNKNOWN_COUNTRY);
        assert_eq!(loaded.manifest.imprecise_date_rows, vec![3, 4]);

        let mut first = Vec::new();
        write_models(&loaded.records, SnapshotFormat::Csv, &mut first).unwrap();
        let p2 = write(dir.path(), "models2.csv", std::str::from_utf8(&first).unwrap());
        let again = load_models(&p2, SnapshotFormat::Csv, &LoadOptions::default()).unwrap();
        assert_eq!(again.records, loaded.records);
        let mut second = Vec::new();
        write_models(&again.records, SnapshotFormat::Csv, &mut second).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn json_lines_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "models.csv", MODELS);
        let loaded = load_models(&p, SnapshotFormat::Csv, &LoadOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_models(&loaded.records, SnapshotFormat::JsonLines, &mut buf).unwrap();
        let pj = write(dir.path(), "models.jsonl", std::str::from_utf8(&buf).unwrap());
        let back = load_models(&pj, SnapshotFormat::JsonLines, &LoadOptions::default()).unwrap();
        assert_eq!(back.records, loaded.records);
    }

    #[test]
    fn duplicate_model_id_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let body = MODELS.replace("m2,", "m1,");
        let p = write(dir.path(), "models.csv", &body);
        assert!(matches!(
            load_models(&p, SnapshotFormat::Csv, &LoadOptions::default()),
            Err(Error::Row { row: 3, .. })
        ));
    }

    #[test]
    fn dates_outside_window_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let early = MODELS.replace("2021-03-04", "2014-12-31");
        let p = write(dir.path(), "models.csv", &early);
        assert!(load_models(&p, SnapshotFormat::Csv, &LoadOptions::default()).is_err());

        let p = write(dir.path(), "models.csv", MODELS);
        let opts = LoadOptions {
            snapshot_date: NaiveDate::from_ymd_opt(2022, 12, 31),
            ..Default::default()
        };
        let err = load_models(&p, SnapshotFormat::Csv, &opts).unwrap_err();
        assert!(err.to_string().contains("snapshot date"), "{err}");
    }

    #[test]
    fn wrong_header_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "models.csv", "id,name\nm1,x\n");
        assert!(matches!(
            load_models(&p, SnapshotFormat::Csv, &LoadOptions::default()),
            Err(Error::Schema { .. })
        ));
    }

    const BENCH: &str = "id,name,release_date,citations,stars,forks,watchers,open_issues,sample_size,category,authors\n\
b1,BigSuite,2022-06-01,5000,3000,400,50,12,200,reasoning,Ann;Bob;Cy\n\
b2,Small,2023-01-15,3,1,,,,,,Dee;Eve\n";

    #[test]
    fn benchmarks_without_affiliations_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "benchmarks.csv", BENCH);
        let loaded = load_benchmarks(&p, None, SnapshotFormat::Csv, &LoadOptions::default()).unwrap();
        assert_eq!(loaded.records.len(), 2);
        assert_eq!(loaded.records[1].authors, vec!["Dee", "Eve"]);
        assert!(loaded.records[1].affiliations.is_empty());
        assert_eq!(loaded.records[1].forks, None);
    }

    #[test]
    fn duplicate_benchmark_id_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "benchmarks.csv", &BENCH.replace("b2,", "b1,"));
        assert!(load_benchmarks(&p, None, SnapshotFormat::Csv, &LoadOptions::default()).is_err());
    }

    #[test]
    fn affiliation_for_unlisted_author_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "benchmarks.csv", BENCH);
        let a = write(
            dir.path(),
            "aff.csv",
            "benchmark_id,author,institution,country\nb1,Ann,Uni A,USA\nb1,Zed,Uni B,UK\n",
        );
        let err = load_benchmarks(&p, Some(&a), SnapshotFormat::Csv, &LoadOptions::default()).unwrap_err();
        match err {
            Error::Row { row, column, .. } => assert_eq!((row, column.as_str()), (3, "author")),
            other => panic!("{other}"),
        }
        let a = write(dir.path(), "aff.csv", "benchmark_id,author,institution,country\nb9,Ann,Uni A,USA\n");
        assert!(load_benchmarks(&p, Some(&a), SnapshotFormat::Csv, &LoadOptions::default()).is_err());
    }

    #[test]
    fn benchmark_export_is_fixed_point() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "benchmarks.csv", BENCH);
        let a = write(
            dir.path(),
            "aff.csv",
            "benchmark_id,author,institution,country\nb1,Ann,Uni A,USA\nb1,Bob,\"Lab, Inc\",USA\n",
        );
        let loaded = load_benchmarks(&p, Some(&a), SnapshotFormat::Csv, &LoadOptions::default()).unwrap();
        let (mut b1, mut a1) = (Vec::new(), Vec::new());
        write_benchmarks(&loaded.records, SnapshotFormat::Csv, &mut b1).unwrap();
        write_affiliations(&loaded.records, SnapshotFormat::Csv, &mut a1).unwrap();
        let p2 = write(dir.path(), "b2.csv", std::str::from_utf8(&b1).unwrap());
        let a2 = write(dir.path(), "a2.csv", std::str::from_utf8(&a1).unwrap());
        let again = load_benchmarks(&p2, Some(&a2), SnapshotFormat::Csv, &LoadOptions::default()).unwrap();
        assert_eq!(again.records, loaded.records);
        let (mut b2, mut a2b) = (Vec::new(), Vec::new());
        write_benchmarks(&again.records, SnapshotFormat::Csv, &mut b2).unwrap();
        write_affiliations(&again.records, SnapshotFormat::Csv, &mut a2b).unwrap();
        assert_eq!(b1, b2);
        assert_eq!(a1, a2b);
    }

    #[test]
    fn checksum_tracks_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "benchmarks.csv", BENCH);
        let first = load_benchmarks(&p, None, SnapshotFormat::Csv, &LoadOptions::default()).unwrap();
        assert!(first.manifest.verify().unwrap());
        let same = load_benchmarks(&p, None, SnapshotFormat::Csv, &LoadOptions::default()).unwrap();
        assert_eq!(first.manifest.checksum, same.manifest.checksum);
        fs::write(&p, BENCH.replace("5000", "5001")).unwrap();
        assert!(!first.manifest.verify().unwrap());
        let changed = load_benchmarks(&p, None, SnapshotFormat::Csv, &LoadOptions::default()).unwrap();
        assert_ne!(first.manifest.checksum, changed.manifest.checksum);
    }

    #[test]
    fn alias_table_rewrites_and_detects_cycles() {
        let empty = AliasTable::default();
        let mut rec = BenchmarkRecord::new("b", NaiveDate::from_ymd_opt(2020, 1, 1).unwrap());
        rec.authors = vec!["Ann".into()];
        rec.affiliations = vec![Affiliation {
            author: "Ann".into(),
            institution: "UC Berkeley".into(),
            country: "USA".into(),
        }];
        assert_eq!(dedupe_entities(&[rec.clone()], &empty), vec![rec.clone()]);

        let table = AliasTable::from_pairs([("UC Berkeley", "University of California, Berkeley")]).unwrap();
        let out = dedupe_entities(&[rec], &table);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].affiliations[0].institution, "University of California, Berkeley");

        assert!(matches!(
            AliasTable::from_pairs([("A", "B"), ("B", "A")]),
            Err(Error::AliasCycle(_))
        ));
        let chain = AliasTable::from_pairs([("A", "B"), ("B", "C")]).unwrap();
        assert_eq!(chain.canonical("A"), "C");
    }

    #[test]
    fn partial_dates_complete_to_first() {
        assert_eq!(parse_date("2021-07").unwrap(), (NaiveDate::from_ymd_opt(2021, 7, 1).unwrap(), true));
        assert_eq!(parse_date("2021").unwrap(), (NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(), true));
        assert!(parse_date("2021-02-30").is_err());
        assert!(parse_date("21-02-03").is_err());
    }
}
