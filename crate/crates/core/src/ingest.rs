//! Source-dump ingestion.
//!
//! Dumps are UTF-8 files with one JSON object per line:
//!
//! ```json
//! {"source":"wikidata","id":"Q26229254","types":["HEALTHCARE_ORGANIZATION"],
//!  "aliases":[{"text":"Spaarne Gasthuis","lang":"nl"}],
//!  "country":{"name":"Netherlands","geonames_id":2750405},
//!  "admin_territories":[{"geonames_id":2759794}],
//!  "zip":"2035 RC","lat":52.361,"lon":4.636,
//!  "sameas":{"geonames":"10381755","umls":"C4248121"}}
//! ```
//!
//! Unknown fields are ignored so dumps can carry extra annotations. A line
//! that cannot be turned into a valid record (bad JSON, bad id syntax, no
//! usable alias, unknown semantic type) is counted and skipped; a record
//! that declares a *different source* than the dump it sits in aborts the
//! load, since that points at a mixed-up file rather than line noise.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{classify_territory, link_location_text, Gazetteer, TerritoryClass};
use crate::model::{
    validate_source_id, Alias, GeoNamesId, GeoPoint, LocationLevel, LocationRef, SemanticType,
    SourceId, SourceTag,
};

/// A territory attached to a record before gazetteer classification
/// (Wikidata's "located in administrative territory" chain). The level is
/// unknown until [`resolve_admin_territory`] asks the gazetteer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdminTerritory {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geonames_id: Option<GeoNamesId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

/// One record of one source vocabulary, already validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub id: SourceId,
    pub types: BTreeSet<SemanticType>,
    /// Never empty; duplicates (same text and language) collapsed.
    pub aliases: Vec<Alias>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country: Option<LocationRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<LocationRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub city: Option<LocationRef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub admin_territories: Vec<AdminTerritory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zip: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<GeoPoint>,
    /// Declared `owl:sameAs` links: foreign source → native id there.
    /// Never contains the record's own source.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sameas: BTreeMap<SourceTag, String>,
}

impl SourceRecord {
    pub fn source(&self) -> SourceTag {
        self.id.source
    }
}

// ---------------------------------------------------------------------------
// Raw JSON shapes (straight off the wire, before validation)

#[derive(Deserialize)]
struct RawRecord {
    source: String,
    id: String,
    #[serde(default)]
    types: Vec<String>,
    #[serde(default)]
    aliases: Vec<RawAlias>,
    #[serde(default)]
    country: Option<RawLocation>,
    #[serde(default)]
    state: Option<RawLocation>,
    #[serde(default)]
    city: Option<RawLocation>,
    #[serde(default)]
    admin_territories: Vec<RawLocation>,
    #[serde(default)]
    zip: Option<String>,
    #[serde(default)]
    lat: Option<f64>,
    #[serde(default)]
    lon: Option<f64>,
    #[serde(default)]
    sameas: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct RawAlias {
    text: String,
    #[serde(default)]
    lang: Option<String>,
}

#[derive(Deserialize)]
struct RawLocation {
    #[serde(default)]
    geonames_id: Option<IdText>,
    #[serde(default)]
    name: Option<String>,
}

/// GeoNames ids appear both as JSON numbers and as strings in the wild.
#[derive(Deserialize)]
#[serde(untagged)]
enum IdText {
    Num(u64),
    Text(String),
}

impl IdText {
    fn to_geonames_id(&self) -> Option<GeoNamesId> {
        match self {
            IdText::Num(n) => (*n > 0).then_some(GeoNamesId(*n)),
            IdText::Text(t) => validate_source_id(SourceTag::Geonames, t)
                .then(|| GeoNamesId(t.parse().unwrap())),
        }
    }
}

fn convert_location(raw: Option<RawLocation>, level: LocationLevel) -> Option<LocationRef> {
    let raw = raw?;
    LocationRef::new(
        level,
        raw.geonames_id.as_ref().and_then(IdText::to_geonames_id),
        raw.name,
    )
}

/// Why a line was rejected; only used for skip accounting.
enum LineError {
    Malformed,
    Mismatch(SourceTag),
}

fn convert_record(raw: RawRecord, expected: SourceTag) -> std::result::Result<SourceRecord, LineError> {
    let source = SourceTag::parse(&raw.source).ok_or(LineError::Malformed)?;
    if source != expected {
        return Err(LineError::Mismatch(source));
    }
    let id = SourceId::new(source, raw.id).ok_or(LineError::Malformed)?;

    let mut types = BTreeSet::new();
    for t in &raw.types {
        let parsed: SemanticType =
            serde_json::from_value(serde_json::Value::String(t.clone()))
                .map_err(|_| LineError::Malformed)?;
        types.insert(parsed);
    }
    if types.is_empty() {
        return Err(LineError::Malformed);
    }

    let mut aliases = Vec::new();
    for raw_alias in raw.aliases {
        if let Some(alias) = Alias::new(raw_alias.text, raw_alias.lang.as_deref()) {
            if !aliases.contains(&alias) {
                aliases.push(alias);
            }
        }
    }
    if aliases.is_empty() {
        return Err(LineError::Malformed);
    }

    let mut sameas = BTreeMap::new();
    for (key, value) in raw.sameas {
        let foreign = match SourceTag::parse(&key) {
            Some(s) => s,
            None => continue, // unknown source label: ignore the link
        };
        // Links to the record's own source or with broken id syntax are
        // dropped; the record itself stays usable.
        if foreign != source && validate_source_id(foreign, &value) {
            sameas.insert(foreign, value);
        }
    }

    Ok(SourceRecord {
        id,
        types,
        aliases,
        country: convert_location(raw.country, LocationLevel::Country),
        state: convert_location(raw.state, LocationLevel::State),
        city: convert_location(raw.city, LocationLevel::City),
        admin_territories: raw
            .admin_territories
            .into_iter()
            .filter_map(|t| {
                let geonames_id = t.geonames_id.as_ref().and_then(IdText::to_geonames_id);
                let name = t.name.filter(|n| !n.trim().is_empty());
                (geonames_id.is_some() || name.is_some())
                    .then_some(AdminTerritory { geonames_id, name })
            })
            .collect(),
        zip: raw.zip.filter(|z| !z.trim().is_empty()),
        point: match (raw.lat, raw.lon) {
            (Some(lat), Some(lon)) => GeoPoint::normalize(lat, lon),
            _ => None,
        },
        sameas,
    })
}

/// Result of loading one dump.
#[derive(Debug)]
pub struct DumpLoad {
    pub records: Vec<SourceRecord>,
    /// Lines that were not valid records and were skipped.
    pub skipped: usize,
}

/// Loads a normalized dump, verifying every record declares `expected` as
/// its source.
pub fn load_source_dump(path: &Path, expected: SourceTag) -> Result<DumpLoad> {
    let file = std::fs::File::open(path).map_err(|source| Error::UnreadableFile {
        path: path.to_path_buf(),
        source,
    })?;
    load_source_dump_reader(std::io::BufReader::new(file), expected, path)
}

pub fn load_source_dump_reader(
    reader: impl BufRead,
    expected: SourceTag,
    path: &Path,
) -> Result<DumpLoad> {
    let mut records = Vec::new();
    let mut skipped = 0usize;
    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| Error::UnreadableFile {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = match serde_json::from_str(&line) {
            Ok(raw) => raw,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        match convert_record(raw, expected) {
            Ok(record) => records.push(record),
            Err(LineError::Malformed) => skipped += 1,
            Err(LineError::Mismatch(found)) => {
                return Err(Error::SourceMismatch {
                    path: path.to_path_buf(),
                    line: line_no + 1,
                    expected,
                    found,
                })
            }
        }
    }
    Ok(DumpLoad { records, skipped })
}

// ---------------------------------------------------------------------------
// Blacklist

/// Categories that retrieval casts too wide a net for: generic class pages
/// and UMLS concepts that denote kinds of institutions rather than
/// facilities. Anything listed here is removed right after loading.
#[derive(Debug, Clone, Default)]
pub struct Blacklist {
    ids: BTreeSet<SourceId>,
}

/// DBpedia pages excluded by default: category-like articles that match the
/// retrieval patterns but denote the building type itself.
const DEFAULT_DBPEDIA_PAGES: [&str; 8] = [
    "Hospital",
    "Rehabilitation_hospital",
    "University",
    "School",
    "Community_college",
    "Sixth_form_college",
    "Professional_school",
    "Reform_school",
];

/// UMLS concepts excluded by default (kinds of institutions, not
/// institutions).
const DEFAULT_UMLS_CUIS: [&str; 21] = [
    "C3828423", "C0557812", "C0027689", "C0681333", "C1318228", "C0871230", "C0337962",
    "C0036375", "C0557808", "C1562642", "C0598858", "C0587907", "C3833703", "C3838700",
    "C0020021", "C0442592", "C3839733", "C3810847", "C3840771", "C0237680", "C3834491",
];

impl Blacklist {
    /// The built-in default blacklist.
    pub fn builtin() -> Blacklist {
        let mut ids = BTreeSet::new();
        for page in DEFAULT_DBPEDIA_PAGES {
            ids.insert(SourceId::new(SourceTag::Dbpedia, page).unwrap());
        }
        for cui in DEFAULT_UMLS_CUIS {
            ids.insert(SourceId::new(SourceTag::Umls, cui).unwrap());
        }
        Blacklist { ids }
    }

    pub fn empty() -> Blacklist {
        Blacklist::default()
    }

    /// Parses a blacklist file: one `SOURCE:native_id` per line, `#`
    /// comments and blank lines allowed. The file is part of the run
    /// configuration, so a malformed line is a hard error.
    pub fn from_path(path: &Path) -> Result<Blacklist> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::UnreadableFile {
            path: path.to_path_buf(),
            source,
        })?;
        let mut ids = BTreeSet::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parsed = line.split_once(':').and_then(|(source, native)| {
                SourceId::new(SourceTag::parse(source.trim())?, native.trim())
            });
            match parsed {
                Some(id) => {
                    ids.insert(id);
                }
                None => {
                    return Err(Error::InvalidConfig(format!(
                        "{}:{}: expected SOURCE:native_id, got {line:?}",
                        path.display(),
                        line_no + 1
                    )))
                }
            }
        }
        Ok(Blacklist { ids })
    }

    pub fn contains(&self, id: &SourceId) -> bool {
        self.ids.contains(id)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SourceId> {
        self.ids.iter()
    }
}

/// Removes blacklisted records, preserving the order of survivors.
pub fn apply_blacklist(
    records: Vec<SourceRecord>,
    blacklist: &Blacklist,
) -> (Vec<SourceRecord>, usize) {
    let before = records.len();
    let kept: Vec<SourceRecord> = records
        .into_iter()
        .filter(|r| !blacklist.contains(&r.id))
        .collect();
    let removed = before - kept.len();
    (kept, removed)
}

// ---------------------------------------------------------------------------
// Location resolution against the gazetteer

/// Classifies a Wikidata record's administrative territories and moves them
/// into the `city` / `state` slots (first match wins, input order).
/// Territories that do not resolve to a tracked city or state — no GeoNames
/// id, unknown id, country-level, or slot already filled — are dropped.
/// Returns the record (with `admin_territories` emptied) and the dropped
/// count. Non-Wikidata records pass through untouched.
pub fn resolve_admin_territory(
    mut record: SourceRecord,
    gaz: &Gazetteer,
) -> (SourceRecord, usize) {
    if record.source() != SourceTag::Wikidata || record.admin_territories.is_empty() {
        return (record, 0);
    }
    let mut dropped = 0usize;
    for territory in std::mem::take(&mut record.admin_territories) {
        let Some(id) = territory.geonames_id else {
            dropped += 1;
            continue;
        };
        let slot = match classify_territory(id, gaz) {
            TerritoryClass::City => &mut record.city,
            TerritoryClass::State => &mut record.state,
            TerritoryClass::Country | TerritoryClass::Other => {
                dropped += 1;
                continue;
            }
        };
        if slot.is_some() {
            dropped += 1;
            continue;
        }
        let place = gaz.get(id).expect("classified ids resolve");
        *slot = Some(LocationRef {
            level: place.level,
            geonames_id: Some(id),
            name: Some(territory.name.unwrap_or_else(|| place.name.clone())),
            feature_class: Some(place.feature_class),
            feature_code: Some(place.feature_code.clone()),
        });
    }
    (record, dropped)
}

fn enrich_ref(r: &mut LocationRef, hint: Option<GeoNamesId>, gaz: &Gazetteer) {
    if let Some(id) = r.geonames_id {
        match gaz.get(id) {
            Some(place) if place.level == r.level => {
                if r.name.is_none() {
                    r.name = Some(place.name.clone());
                }
                r.feature_class = Some(place.feature_class);
                r.feature_code = Some(place.feature_code.clone());
            }
            Some(_) => {
                // The id resolves to a different level than claimed; the id
                // is wrong, so fall back to whatever the name gives us.
                r.geonames_id = None;
                if let Some(name) = r.name.clone() {
                    if let Some(found) = link_location_text(&name, r.level, hint, gaz) {
                        apply_place(r, found, gaz);
                    }
                }
            }
            None => {} // id unknown to this gazetteer: keep it as-is
        }
    } else if let Some(name) = r.name.clone() {
        if let Some(found) = link_location_text(&name, r.level, hint, gaz) {
            apply_place(r, found, gaz);
        }
    }
}

fn apply_place(r: &mut LocationRef, id: GeoNamesId, gaz: &Gazetteer) {
    let place = gaz.get(id).expect("linked ids resolve");
    r.geonames_id = Some(id);
    r.feature_class = Some(place.feature_class);
    r.feature_code = Some(place.feature_code.clone());
}

/// Full per-record location pass: admin territories first (Wikidata), then
/// name/id enrichment of the country, state and city references. The
/// resolved country restricts state and city name lookups. Returns the
/// record and the number of dropped admin territories.
pub fn geolink_record(record: SourceRecord, gaz: &Gazetteer) -> (SourceRecord, usize) {
    let (mut record, dropped) = resolve_admin_territory(record, gaz);
    if let Some(country) = record.country.as_mut() {
        enrich_ref(country, None, gaz);
        if country.geonames_id.is_none() && country.name.is_none() {
            record.country = None;
        }
    }
    let hint = record.country.as_ref().and_then(|c| c.geonames_id);
    for slot in [&mut record.state, &mut record.city] {
        if let Some(r) = slot.as_mut() {
            enrich_ref(r, hint, gaz);
            if r.geonames_id.is_none() && r.name.is_none() {
                *slot = None;
            }
        }
    }
    (record, dropped)
}
