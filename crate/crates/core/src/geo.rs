//! Gazetteer lookups and great-circle distance.
//!
//! The gazetteer is loaded from a GeoNames "main export" style TSV
//! (tab-separated, no quoting) with the usual column layout:
//!
//! ```text
//! 0 geonameid   1 name        2 asciiname   3 alternatenames (comma-sep)
//! 4 latitude    5 longitude   6 feature class   7 feature code
//! 8 country code   9..13 cc2/admin codes   14 population   15.. unused
//! ```
//!
//! Only three kinds of rows become lookup entries:
//! countries (class `A`, code `PCL*`), states (class `A`, code `ADM1`) and
//! cities (class `P` with population above 500). Everything else — villages
//! under the population cut-off, hydrographic features, spots — is skipped,
//! and [`classify_territory`] reports it as [`TerritoryClass::Other`].

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{GeoNamesId, GeoPoint, LocationLevel};
use crate::normalize::normalize_name;

/// Mean Earth radius used by every distance in the system.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Great-circle distance in kilometres between two points (haversine).
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat().to_radians(), b.lat().to_radians());
    let dlat = (b.lat() - a.lat()).to_radians();
    let dlon = (b.lon() - a.lon()).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// What the gazetteer knows a GeoNames id to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerritoryClass {
    Country,
    State,
    City,
    /// Absent from the gazetteer (or present in the source file but below
    /// the city population cut-off / of an untracked feature kind).
    Other,
}

/// One resolvable place.
#[derive(Debug, Clone)]
pub struct PlaceEntry {
    pub id: GeoNamesId,
    pub name: String,
    pub level: LocationLevel,
    pub feature_class: char,
    pub feature_code: String,
    pub point: Option<GeoPoint>,
    /// The country the place belongs to; for countries, the entry itself.
    pub country_id: GeoNamesId,
}

/// In-memory gazetteer: id lookup plus an exact normalized-name index.
#[derive(Debug, Default)]
pub struct Gazetteer {
    places: BTreeMap<GeoNamesId, PlaceEntry>,
    name_index: BTreeMap<String, BTreeSet<GeoNamesId>>,
}

/// Population above which a populated place counts as a city.
const CITY_MIN_POPULATION: u64 = 500;

struct RawRow {
    id: u64,
    name: String,
    ascii_name: String,
    alt_names: String,
    lat: Option<f64>,
    lon: Option<f64>,
    feature_class: char,
    feature_code: String,
    country_code: String,
    population: u64,
}

fn parse_row(line: &str) -> Option<RawRow> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() < 15 {
        return None;
    }
    let id: u64 = cols[0].parse().ok().filter(|id| *id > 0)?;
    if cols[1].trim().is_empty() {
        return None;
    }
    Some(RawRow {
        id,
        name: cols[1].to_string(),
        ascii_name: cols[2].to_string(),
        alt_names: cols[3].to_string(),
        lat: cols[4].parse().ok(),
        lon: cols[5].parse().ok(),
        feature_class: cols[6].chars().next()?,
        feature_code: cols[7].to_string(),
        country_code: cols[8].to_string(),
        population: cols[14].parse().unwrap_or(0),
    })
}

impl Gazetteer {
    /// Loads a gazetteer from a GeoNames-layout TSV file. Returns the
    /// gazetteer and the number of rows skipped (malformed, untracked
    /// feature kind, or state/city with no loadable country).
    pub fn from_tsv_path(path: &Path) -> Result<(Gazetteer, usize)> {
        let file = std::fs::File::open(path).map_err(|source| Error::UnreadableFile {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_tsv_reader(std::io::BufReader::new(file))
    }

    pub fn from_tsv_reader(reader: impl BufRead) -> Result<(Gazetteer, usize)> {
        let mut rows = Vec::new();
        let mut skipped = 0usize;
        for line in reader.lines() {
            let line = line.map_err(|source| Error::UnreadableFile {
                path: "<gazetteer>".into(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            match parse_row(&line) {
                Some(row) => rows.push(row),
                None => skipped += 1,
            }
        }

        // Countries first: state and city rows resolve their country code
        // against this map, so the file may list rows in any order.
        let mut country_by_code: BTreeMap<String, GeoNamesId> = BTreeMap::new();
        for row in &rows {
            if row.feature_class == 'A' && row.feature_code.starts_with("PCL") {
                country_by_code
                    .entry(row.country_code.clone())
                    .or_insert(GeoNamesId(row.id));
            }
        }

        let mut gaz = Gazetteer::default();
        for row in rows {
            let level = match (row.feature_class, row.feature_code.as_str()) {
                ('A', code) if code.starts_with("PCL") => LocationLevel::Country,
                ('A', "ADM1") => LocationLevel::State,
                ('P', _) if row.population > CITY_MIN_POPULATION => LocationLevel::City,
                _ => {
                    skipped += 1;
                    continue;
                }
            };
            let id = GeoNamesId(row.id);
            let country_id = if level == LocationLevel::Country {
                id
            } else {
                match country_by_code.get(&row.country_code) {
                    Some(cid) => *cid,
                    None => {
                        skipped += 1;
                        continue;
                    }
                }
            };
            let point = row
                .lat
                .zip(row.lon)
                .and_then(|(lat, lon)| GeoPoint::normalize(lat, lon));
            let entry = PlaceEntry {
                id,
                name: row.name.clone(),
                level,
                feature_class: row.feature_class,
                feature_code: row.feature_code.clone(),
                point,
                country_id,
            };
            let mut names: Vec<&str> = vec![&row.name, &row.ascii_name];
            names.extend(row.alt_names.split(',').filter(|n| !n.is_empty()));
            for name in names {
                let key = normalize_name(name);
                if !key.is_empty() {
                    gaz.name_index.entry(key).or_default().insert(id);
                }
            }
            gaz.places.insert(id, entry);
        }
        Ok((gaz, skipped))
    }

    pub fn get(&self, id: GeoNamesId) -> Option<&PlaceEntry> {
        self.places.get(&id)
    }

    pub fn len(&self) -> usize {
        self.places.len()
    }

    pub fn is_empty(&self) -> bool {
        self.places.is_empty()
    }
}

/// Classifies a GeoNames id against the gazetteer.
pub fn classify_territory(id: GeoNamesId, gaz: &Gazetteer) -> TerritoryClass {
    match gaz.get(id).map(|p| p.level) {
        Some(LocationLevel::Country) => TerritoryClass::Country,
        Some(LocationLevel::State) => TerritoryClass::State,
        Some(LocationLevel::City) => TerritoryClass::City,
        None => TerritoryClass::Other,
    }
}

/// Resolves a place name to a GeoNames id by exact normalized-name match at
/// the requested level, optionally restricted to one country. Ambiguity is
/// treated as failure: zero or two-plus candidates yield `None` rather than
/// a guess.
pub fn link_location_text(
    name: &str,
    level: LocationLevel,
    country_hint: Option<GeoNamesId>,
    gaz: &Gazetteer,
) -> Option<GeoNamesId> {
    let key = normalize_name(name);
    if key.is_empty() {
        return None;
    }
    let ids = gaz.name_index.get(&key)?;
    let mut candidates = ids.iter().filter_map(|id| {
        let place = gaz.get(*id)?;
        if place.level != level {
            return None;
        }
        if let Some(hint) = country_hint {
            if place.country_id != hint {
                return None;
            }
        }
        Some(*id)
    });
    let first = candidates.next()?;
    candidates.next().is_none().then_some(first)
}
