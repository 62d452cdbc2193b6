//! Loading, validating, filtering and joining OD flow records with zone
//! attributes.
//!
//! All tables are UTF-8 CSV with a header row. Identifiers are restricted to
//! `[A-Za-z0-9_-]` so they never need quoting. Line numbers in errors count the
//! header as line 1.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const OD_FLOWS_HEADER: [&str; 3] = ["origin_zone", "destination_zone", "annual_total_trips"];
pub const ZONES_HEADER: [&str; 7] = [
    "zone_id",
    "centroid_lat",
    "centroid_lon",
    "population",
    "establishments",
    "employees",
    "annual_payroll",
];
pub const CENTROIDS_HEADER: [&str; 3] = ["zone_id", "centroid_lat", "centroid_lon"];
pub const COUNTIES_HEADER: [&str; 6] = [
    "county_id",
    "zone_id",
    "population",
    "establishments",
    "employees",
    "annual_payroll",
];
pub const CROSSWALK_HEADER: [&str; 2] = ["county_id", "zone_id"];
pub const DATASET_HEADER: [&str; 17] = [
    "origin_zone",
    "destination_zone",
    "annual_total_trips",
    "origin_index",
    "destination_index",
    "orig_lat",
    "orig_lon",
    "dest_lat",
    "dest_lon",
    "orig_pop",
    "dest_pop",
    "orig_est",
    "dest_est",
    "orig_emp",
    "dest_emp",
    "orig_ap",
    "dest_ap",
];

/// Maximum number of unresolved identifiers listed in a join error.
const MAX_LISTED_MISSING: usize = 20;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{source_name}: {source}")]
    Io {
        source_name: String,
        #[source]
        source: io::Error,
    },
    #[error("{source_name}: malformed CSV: {source}")]
    Csv {
        source_name: String,
        #[source]
        source: csv::Error,
    },
    #[error("{source_name}: missing column(s) {missing:?}")]
    Schema {
        source_name: String,
        missing: Vec<String>,
    },
    #[error("{source_name}:{line}: column `{column}`: {reason} (value `{value}`)")]
    Parse {
        source_name: String,
        line: u64,
        column: String,
        value: String,
        reason: String,
    },
    #[error("{source_name}:{line}: duplicate OD pair ({origin}, {destination})")]
    DuplicatePair {
        source_name: String,
        line: u64,
        origin: String,
        destination: String,
    },
    #[error("{source_name}:{line}: duplicate {kind} `{id}`")]
    DuplicateId {
        source_name: String,
        line: u64,
        kind: &'static str,
        id: String,
    },
    #[error("{total} unresolved zone identifier(s), first ones: {listed:?}")]
    UnresolvedZones { listed: Vec<String>, total: usize },
}

pub type Result<T> = std::result::Result<T, IngestError>;

/// One origin/destination pair with its annual truck trip count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OdRecord {
    pub origin_zone: String,
    pub destination_zone: String,
    pub annual_total_trips: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Centroid {
    pub lat: f64,
    pub lon: f64,
}

/// Zone-level attributes. Payroll is in thousands of dollars.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneAttributes {
    pub zone_id: String,
    pub centroid_lat: f64,
    pub centroid_lon: f64,
    pub population: u64,
    pub establishments: u64,
    pub employees: u64,
    pub annual_payroll: u64,
}

impl ZoneAttributes {
    pub fn centroid(&self) -> Centroid {
        Centroid {
            lat: self.centroid_lat,
            lon: self.centroid_lon,
        }
    }

    fn profile(&self) -> ZoneProfile {
        ZoneProfile {
            lat: self.centroid_lat,
            lon: self.centroid_lon,
            population: self.population,
            establishments: self.establishments,
            employees: self.employees,
            annual_payroll: self.annual_payroll,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountyRow {
    pub county_id: String,
    pub zone_id: String,
    pub population: u64,
    pub establishments: u64,
    pub employees: u64,
    pub annual_payroll: u64,
}

/// Attribute sums for one zone, before centroids are attached.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ZoneTotals {
    pub zone_id: String,
    pub population: u64,
    pub establishments: u64,
    pub employees: u64,
    pub annual_payroll: u64,
}

/// Centroid and attributes of one side of an OD pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoneProfile {
    pub lat: f64,
    pub lon: f64,
    pub population: u64,
    pub establishments: u64,
    pub employees: u64,
    pub annual_payroll: u64,
}

/// An OD record joined with both zones' attributes.
///
/// `origin_index`/`destination_index` are the dense zone indices assigned by
/// sorting the zone table's identifiers lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedRecord {
    pub origin_zone: String,
    pub destination_zone: String,
    pub annual_total_trips: u64,
    pub origin_index: usize,
    pub destination_index: usize,
    pub origin: ZoneProfile,
    pub destination: ZoneProfile,
}

// ---------------------------------------------------------------------------
// CSV plumbing

struct Table {
    source_name: String,
    columns: HashMap<String, usize>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read<R: Read>(reader: R, source_name: &str, required: &[&str]) -> Result<Table> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let csv_err = |source| IngestError::Csv {
            source_name: source_name.to_string(),
            source,
        };
        let headers = rdr.headers().map_err(csv_err)?.clone();
        let columns: HashMap<String, usize> = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_string(), i))
            .collect();
        let missing: Vec<String> = required
            .iter()
            .filter(|c| !columns.contains_key(**c))
            .map(|c| c.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(IngestError::Schema {
                source_name: source_name.to_string(),
                missing,
            });
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            rows.push((line, rec));
        }
        Ok(Table {
            source_name: source_name.to_string(),
            columns,
            rows,
        })
    }

    fn field<'a>(&self, line: u64, rec: &'a csv::StringRecord, column: &str) -> Result<&'a str> {
        let idx = self.columns[column];
        rec.get(idx).ok_or_else(|| self.parse_err(line, column, "", "missing field"))
    }

    fn parse_err(&self, line: u64, column: &str, value: &str, reason: &str) -> IngestError {
        IngestError::Parse {
            source_name: self.source_name.clone(),
            line,
            column: column.to_string(),
            value: value.to_string(),
            reason: reason.to_string(),
        }
    }

    fn ident(&self, line: u64, rec: &csv::StringRecord, column: &str) -> Result<String> {
        let v = self.field(line, rec, column)?;
        if is_valid_identifier(v) {
            Ok(v.to_string())
        } else {
            Err(self.parse_err(line, column, v, "identifier must match [A-Za-z0-9_-]+"))
        }
    }

    fn count(&self, line: u64, rec: &csv::StringRecord, column: &str) -> Result<u64> {
        let v = self.field(line, rec, column)?;
        v.parse::<u64>()
            .map_err(|_| self.parse_err(line, column, v, "expected a non-negative integer"))
    }

    fn positive(&self, line: u64, rec: &csv::StringRecord, column: &str) -> Result<u64> {
        let n = self.count(line, rec, column)?;
        if n == 0 {
            let v = self.field(line, rec, column)?;
            return Err(self.parse_err(line, column, v, "must be at least 1"));
        }
        Ok(n)
    }

    fn coordinate(&self, line: u64, rec: &csv::StringRecord, column: &str, limit: f64) -> Result<f64> {
        let v = self.field(line, rec, column)?;
        let x: f64 = v
            .parse()
            .map_err(|_| self.parse_err(line, column, v, "expected a number"))?;
        if !x.is_finite() || x.abs() > limit {
            return Err(self.parse_err(line, column, v, &format!("outside [-{limit}, {limit}]")));
        }
        Ok(x)
    }
}

pub fn is_valid_identifier(s: &str) -> bool {
    !s.is_empty()
        && s
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| IngestError::Io {
        source_name: path.display().to_string(),
        source,
    })
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|source| IngestError::Io {
        source_name: path.display().to_string(),
        source,
    })
}

fn write_io<T>(source_name: &str, r: io::Result<T>) -> Result<T> {
    r.map_err(|source| IngestError::Io {
        source_name: source_name.to_string(),
        source,
    })
}

// ---------------------------------------------------------------------------
// OD flows

pub fn load_od_flows(path: &Path) -> Result<Vec<OdRecord>> {
    read_od_flows(open(path)?, &path.display().to_string())
}

pub fn read_od_flows<R: Read>(reader: R, source_name: &str) -> Result<Vec<OdRecord>> {
    let table = Table::read(reader, source_name, &OD_FLOWS_HEADER)?;
    let mut seen: HashSet<(String, String)> = HashSet::with_capacity(table.rows.len());
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let origin = table.ident(*line, rec, "origin_zone")?;
        let destination = table.ident(*line, rec, "destination_zone")?;
        let trips = table.count(*line, rec, "annual_total_trips")?;
        if !seen.insert((origin.clone(), destination.clone())) {
            return Err(IngestError::DuplicatePair {
                source_name: source_name.to_string(),
                line: *line,
                origin,
                destination,
            });
        }
        out.push(OdRecord {
            origin_zone: origin,
            destination_zone: destination,
            annual_total_trips: trips,
        });
    }
    Ok(out)
}

pub fn write_od_flows<W: Write>(mut w: W, records: &[OdRecord]) -> io::Result<()> {
    writeln!(w, "{}", OD_FLOWS_HEADER.join(","))?;
    for r in records {
        writeln!(w, "{},{},{}", r.origin_zone, r.destination_zone, r.annual_total_trips)?;
    }
    w.flush()
}

pub fn save_od_flows(path: &Path, records: &[OdRecord]) -> Result<()> {
    let f = create(path)?;
    write_io(&path.display().to_string(), write_od_flows(io::BufWriter::new(f), records))
}

// ---------------------------------------------------------------------------
// Zones, centroids, counties, crosswalk

pub fn load_zones(path: &Path) -> Result<Vec<ZoneAttributes>> {
    read_zones(open(path)?, &path.display().to_string())
}

pub fn read_zones<R: Read>(reader: R, source_name: &str) -> Result<Vec<ZoneAttributes>> {
    let table = Table::read(reader, source_name, &ZONES_HEADER)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let zone_id = table.ident(*line, rec, "zone_id")?;
        if !seen.insert(zone_id.clone()) {
            return Err(IngestError::DuplicateId {
                source_name: source_name.to_string(),
                line: *line,
                kind: "zone",
                id: zone_id,
            });
        }
        out.push(ZoneAttributes {
            zone_id,
            centroid_lat: table.coordinate(*line, rec, "centroid_lat", 90.0)?,
            centroid_lon: table.coordinate(*line, rec, "centroid_lon", 180.0)?,
            population: table.positive(*line, rec, "population")?,
            establishments: table.positive(*line, rec, "establishments")?,
            employees: table.positive(*line, rec, "employees")?,
            annual_payroll: table.positive(*line, rec, "annual_payroll")?,
        });
    }
    Ok(out)
}

pub fn write_zones<W: Write>(mut w: W, zones: &[ZoneAttributes]) -> io::Result<()> {
    writeln!(w, "{}", ZONES_HEADER.join(","))?;
    for z in zones {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            z.zone_id,
            z.centroid_lat,
            z.centroid_lon,
            z.population,
            z.establishments,
            z.employees,
            z.annual_payroll
        )?;
    }
    w.flush()
}

pub fn save_zones(path: &Path, zones: &[ZoneAttributes]) -> Result<()> {
    let f = create(path)?;
    write_io(&path.display().to_string(), write_zones(io::BufWriter::new(f), zones))
}

/// Zone centroids only. Any zones.csv also satisfies this schema.
pub fn load_zone_centroids(path: &Path) -> Result<BTreeMap<String, Centroid>> {
    read_zone_centroids(open(path)?, &path.display().to_string())
}

pub fn read_zone_centroids<R: Read>(reader: R, source_name: &str) -> Result<BTreeMap<String, Centroid>> {
    let table = Table::read(reader, source_name, &CENTROIDS_HEADER)?;
    let mut out = BTreeMap::new();
    for (line, rec) in &table.rows {
        let zone_id = table.ident(*line, rec, "zone_id")?;
        let c = Centroid {
            lat: table.coordinate(*line, rec, "centroid_lat", 90.0)?,
            lon: table.coordinate(*line, rec, "centroid_lon", 180.0)?,
        };
        if out.insert(zone_id.clone(), c).is_some() {
            return Err(IngestError::DuplicateId {
                source_name: source_name.to_string(),
                line: *line,
                kind: "zone",
                id: zone_id,
            });
        }
    }
    Ok(out)
}

pub fn load_counties(path: &Path) -> Result<Vec<CountyRow>> {
    read_counties(open(path)?, &path.display().to_string())
}

pub fn read_counties<R: Read>(reader: R, source_name: &str) -> Result<Vec<CountyRow>> {
    let table = Table::read(reader, source_name, &COUNTIES_HEADER)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let county_id = table.ident(*line, rec, "county_id")?;
        if !seen.insert(county_id.clone()) {
            return Err(IngestError::DuplicateId {
                source_name: source_name.to_string(),
                line: *line,
                kind: "county",
                id: county_id,
            });
        }
        out.push(CountyRow {
            county_id,
            zone_id: table.ident(*line, rec, "zone_id")?,
            population: table.count(*line, rec, "population")?,
            establishments: table.count(*line, rec, "establishments")?,
            employees: table.count(*line, rec, "employees")?,
            annual_payroll: table.count(*line, rec, "annual_payroll")?,
        });
    }
    Ok(out)
}

pub fn write_counties<W: Write>(mut w: W, rows: &[CountyRow]) -> io::Result<()> {
    writeln!(w, "{}", COUNTIES_HEADER.join(","))?;
    for c in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            c.county_id, c.zone_id, c.population, c.establishments, c.employees, c.annual_payroll
        )?;
    }
    w.flush()
}

/// County to zone assignments, `county_id,zone_id`. A county may appear once.
pub fn load_crosswalk(path: &Path) -> Result<BTreeMap<String, String>> {
    read_crosswalk(open(path)?, &path.display().to_string())
}

pub fn read_crosswalk<R: Read>(reader: R, source_name: &str) -> Result<BTreeMap<String, String>> {
    let table = Table::read(reader, source_name, &CROSSWALK_HEADER)?;
    let mut out = BTreeMap::new();
    for (line, rec) in &table.rows {
        let county = table.ident(*line, rec, "county_id")?;
        let zone = table.ident(*line, rec, "zone_id")?;
        if out.insert(county.clone(), zone).is_some() {
            return Err(IngestError::DuplicateId {
                source_name: source_name.to_string(),
                line: *line,
                kind: "county",
                id: county,
            });
        }
    }
    Ok(out)
}

/// Reassigns counties listed in the crosswalk; unlisted counties keep the
/// zone from their own row.
pub fn apply_crosswalk(rows: &mut [CountyRow], crosswalk: &BTreeMap<String, String>) {
    for row in rows {
        if let Some(zone) = crosswalk.get(&row.county_id) {
            row.zone_id.clone_from(zone);
        }
    }
}

/// Zone ids to drop, one per line. `#` starts a comment.
pub fn load_exclusions(path: &Path) -> Result<BTreeSet<String>> {
    let f = open(path)?;
    let name = path.display().to_string();
    let mut out = BTreeSet::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = write_io(&name, line)?;
        let id = line.split('#').next().unwrap_or("").trim();
        if id.is_empty() {
            continue;
        }
        if !is_valid_identifier(id) {
            return Err(IngestError::Parse {
                source_name: name,
                line: i as u64 + 1,
                column: "zone_id".into(),
                value: id.into(),
                reason: "identifier must match [A-Za-z0-9_-]+".into(),
            });
        }
        out.insert(id.to_string());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Filtering

#[derive(Debug, Clone, Default)]
pub struct FilterOptions {
    pub excluded_zones: BTreeSet<String>,
    pub exclude_intrazonal: bool,
}

/// How many records each rule removed. A record is counted under the first
/// rule that removes it, in the order listed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FilterReport {
    pub input: usize,
    pub removed_excluded_zone: usize,
    pub removed_zero_trips: usize,
    pub removed_intrazonal: usize,
    pub retained: usize,
}

pub fn filter_records(records: Vec<OdRecord>, options: &FilterOptions) -> (Vec<OdRecord>, FilterReport) {
    let mut report = FilterReport {
        input: records.len(),
        ..Default::default()
    };
    let kept: Vec<OdRecord> = records
        .into_iter()
        .filter(|r| {
            if options.excluded_zones.contains(&r.origin_zone)
                || options.excluded_zones.contains(&r.destination_zone)
            {
                report.removed_excluded_zone += 1;
                false
            } else if r.annual_total_trips == 0 {
                report.removed_zero_trips += 1;
                false
            } else if options.exclude_intrazonal && r.origin_zone == r.destination_zone {
                report.removed_intrazonal += 1;
                false
            } else {
                true
            }
        })
        .collect();
    report.retained = kept.len();
    (kept, report)
}

// ---------------------------------------------------------------------------
// County aggregation

#[derive(Debug, Clone, Default)]
pub struct AggregationReport {
    /// One entry per zone that received at least one county, sorted by id.
    pub zones: Vec<ZoneTotals>,
    /// Counties naming a zone outside the universe.
    pub skipped_rows: Vec<CountyRow>,
    /// Universe zones without any county; excluded from `zones`.
    pub empty_zones: Vec<String>,
}

impl AggregationReport {
    pub fn warning_count(&self) -> usize {
        self.skipped_rows.len()
    }
}

/// Sums county attributes into their zones.
pub fn aggregate_counties(rows: &[CountyRow], zones: &BTreeSet<String>) -> Result<AggregationReport> {
    let mut seen = HashSet::new();
    let mut sums: BTreeMap<&str, ZoneTotals> = BTreeMap::new();
    let mut skipped = Vec::new();
    for row in rows {
        if !seen.insert(row.county_id.as_str()) {
            return Err(IngestError::DuplicateId {
                source_name: "county rows".into(),
                line: 0,
                kind: "county",
                id: row.county_id.clone(),
            });
        }
        if !zones.contains(&row.zone_id) {
            skipped.push(row.clone());
            continue;
        }
        let t = sums.entry(row.zone_id.as_str()).or_insert_with(|| ZoneTotals {
            zone_id: row.zone_id.clone(),
            ..Default::default()
        });
        t.population += row.population;
        t.establishments += row.establishments;
        t.employees += row.employees;
        t.annual_payroll += row.annual_payroll;
    }
    let empty_zones = zones
        .iter()
        .filter(|z| !sums.contains_key(z.as_str()))
        .cloned()
        .collect();
    Ok(AggregationReport {
        zones: sums.into_values().collect(),
        skipped_rows: skipped,
        empty_zones,
    })
}

/// Builds zone attributes from aggregated totals and a centroid table.
/// Zones whose totals contain a zero attribute cannot be log-transformed and
/// are returned separately.
pub fn attach_centroids(
    totals: &[ZoneTotals],
    centroids: &BTreeMap<String, Centroid>,
) -> Result<(Vec<ZoneAttributes>, Vec<String>)> {
    let missing: Vec<String> = totals
        .iter()
        .filter(|t| !centroids.contains_key(&t.zone_id))
        .map(|t| t.zone_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(unresolved(missing));
    }
    let mut zones = Vec::with_capacity(totals.len());
    let mut degenerate = Vec::new();
    for t in totals {
        if t.population == 0 || t.establishments == 0 || t.employees == 0 || t.annual_payroll == 0 {
            degenerate.push(t.zone_id.clone());
            continue;
        }
        let c = centroids[&t.zone_id];
        zones.push(ZoneAttributes {
            zone_id: t.zone_id.clone(),
            centroid_lat: c.lat,
            centroid_lon: c.lon,
            population: t.population,
            establishments: t.establishments,
            employees: t.employees,
            annual_payroll: t.annual_payroll,
        });
    }
    Ok((zones, degenerate))
}

fn unresolved(mut missing: Vec<String>) -> IngestError {
    missing.sort();
    missing.dedup();
    let total = missing.len();
    missing.truncate(MAX_LISTED_MISSING);
    IngestError::UnresolvedZones {
        listed: missing,
        total,
    }
}

// ---------------------------------------------------------------------------
// Join

/// Dense zone index: identifiers sorted lexicographically.
pub fn zone_index(zones: &[ZoneAttributes]) -> BTreeMap<String, usize> {
    let ids: BTreeSet<&str> = zones.iter().map(|z| z.zone_id.as_str()).collect();
    ids.into_iter()
        .enumerate()
        .map(|(i, id)| (id.to_string(), i))
        .collect()
}

pub fn join_dataset(records: &[OdRecord], zones: &[ZoneAttributes]) -> Result<Vec<AugmentedRecord>> {
    let by_id: HashMap<&str, &ZoneAttributes> = zones.iter().map(|z| (z.zone_id.as_str(), z)).collect();
    let index = zone_index(zones);
    let missing: Vec<String> = records
        .iter()
        .flat_map(|r| [&r.origin_zone, &r.destination_zone])
        .filter(|id| !by_id.contains_key(id.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(unresolved(missing));
    }
    Ok(records
        .iter()
        .map(|r| {
            let o = by_id[r.origin_zone.as_str()];
            let d = by_id[r.destination_zone.as_str()];
            AugmentedRecord {
                origin_zone: r.origin_zone.clone(),
                destination_zone: r.destination_zone.clone(),
                annual_total_trips: r.annual_total_trips,
                origin_index: index[&r.origin_zone],
                destination_index: index[&r.destination_zone],
                origin: o.profile(),
                destination: d.profile(),
            }
        })
        .collect())
}

pub fn write_dataset<W: Write>(mut w: W, rows: &[AugmentedRecord]) -> io::Result<()> {
    writeln!(w, "{}", DATASET_HEADER.join(","))?;
    for r in rows {
        let (o, d) = (&r.origin, &r.destination);
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.origin_zone,
            r.destination_zone,
            r.annual_total_trips,
            r.origin_index,
            r.destination_index,
            o.lat,
            o.lon,
            d.lat,
            d.lon,
            o.population,
            d.population,
            o.establishments,
            d.establishments,
            o.employees,
            d.employees,
            o.annual_payroll,
            d.annual_payroll
        )?;
    }
    w.flush()
}

pub fn save_dataset(path: &Path, rows: &[AugmentedRecord]) -> Result<()> {
    let f = create(path)?;
    write_io(&path.display().to_string(), write_dataset(io::BufWriter::new(f), rows))
}

pub fn load_dataset(path: &Path) -> Result<Vec<AugmentedRecord>> {
    read_dataset(open(path)?, &path.display().to_string())
}

pub fn read_dataset<R: Read>(reader: R, source_name: &str) -> Result<Vec<AugmentedRecord>> {
    let table = Table::read(reader, source_name, &DATASET_HEADER)?;
    let mut out = Vec::with_capacity(table.rows.len());
    let mut seen = HashSet::new();
    for (line, rec) in &table.rows {
        let line = *line;
        let index = |col: &str| -> Result<usize> { Ok(table.count(line, rec, col)? as usize) };
        let profile = |p: &str| -> Result<ZoneProfile> {
            let name = |suffix: &str| format!("{p}_{suffix}");
            Ok(ZoneProfile {
                lat: table.coordinate(line, rec, &name("lat"), 90.0)?,
                lon: table.coordinate(line, rec, &name("lon"), 180.0)?,
                population: table.positive(line, rec, &name("pop"))?,
                establishments: table.positive(line, rec, &name("est"))?,
                employees: table.positive(line, rec, &name("emp"))?,
                annual_payroll: table.positive(line, rec, &name("ap"))?,
            })
        };
        let origin_zone = table.ident(line, rec, "origin_zone")?;
        let destination_zone = table.ident(line, rec, "destination_zone")?;
        if !seen.insert((origin_zone.clone(), destination_zone.clone())) {
            return Err(IngestError::DuplicatePair {
                source_name: source_name.to_string(),
                line,
                origin: origin_zone,
                destination: destination_zone,
            });
        }
        out.push(AugmentedRecord {
            origin_zone,
            destination_zone,
            annual_total_trips: table.count(line, rec, "annual_total_trips")?,
            origin_index: index("origin_index")?,
            destination_index: index("destination_index")?,
            origin: profile("orig")?,
            destination: profile("dest")?,
        });
    }
    Ok(out)
}
