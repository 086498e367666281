//! Serialization of the knowledge base (flat CSV and Turtle) and the
//! in-process query helpers mirroring the queries the RDF form supports in
//! a triple store.
//!
//! Both exports are byte-deterministic: entities are already sorted by
//! `kb_id`, every map iterated is ordered, and floating-point values are
//! rendered with Rust's shortest-roundtrip formatter.

use std::path::Path;

use crate::align::{KnowledgeBase, MergedEntity};
use crate::error::{Error, Result};
use crate::geo::haversine_km;
use crate::model::{GeoPoint, LocationRef, SemanticType, SourceTag};
use crate::normalize::normalize_name;
use crate::turtle;

/// The flat file's header. One row per entity, in this exact column order.
pub const CSV_HEADER: [&str; 17] = [
    "kb_id",
    "preferred_name",
    "semantic_types",
    "latitude",
    "longitude",
    "city_geonames_id",
    "city_name",
    "zip",
    "state_geonames_id",
    "state_name",
    "country_geonames_id",
    "country_name",
    "wikidata_id",
    "dbpedia_id",
    "yago_id",
    "geonames_id",
    "umls_cui",
];

fn location_cells(loc: &Option<LocationRef>) -> (String, String) {
    match loc {
        Some(loc) => (
            loc.geonames_id.map(|id| id.to_string()).unwrap_or_default(),
            loc.name.clone().unwrap_or_default(),
        ),
        None => (String::new(), String::new()),
    }
}

/// The CSV document as bytes (UTF-8, comma-separated, LF line endings,
/// RFC-4180 quoting).
pub fn csv_bytes(kb: &KnowledgeBase) -> Vec<u8> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    writer.write_record(CSV_HEADER).expect("writing to memory");
    for entity in &kb.entities {
        let types: Vec<&str> = entity.types.iter().map(|t| t.label()).collect();
        let (lat, lon) = match entity.point {
            Some(p) => (p.lat().to_string(), p.lon().to_string()),
            None => (String::new(), String::new()),
        };
        let (city_id, city_name) = location_cells(&entity.city);
        let (state_id, state_name) = location_cells(&entity.state);
        let (country_id, country_name) = location_cells(&entity.country);
        let id = |source: SourceTag| entity.ids.get(&source).cloned().unwrap_or_default();
        writer
            .write_record([
                entity.kb_id.clone(),
                entity.preferred_name().to_string(),
                types.join(";"),
                lat,
                lon,
                city_id,
                city_name,
                entity.zip.clone().unwrap_or_default(),
                state_id,
                state_name,
                country_id,
                country_name,
                id(SourceTag::Wikidata),
                id(SourceTag::Dbpedia),
                id(SourceTag::Yago),
                id(SourceTag::Geonames),
                id(SourceTag::Umls),
            ])
            .expect("writing to memory");
    }
    writer.into_inner().expect("writing to memory")
}

/// Writes the CSV file; returns the number of entity rows.
pub fn export_csv(kb: &KnowledgeBase, path: &Path) -> Result<u64> {
    std::fs::write(path, csv_bytes(kb)).map_err(|source| Error::UnwritablePath {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(kb.entities.len() as u64)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TurtleOptions {
    /// Emit well-known-text points as `POINT(lat lon)` instead of the
    /// standard lon-lat order, matching the coordinate order the published
    /// queries use.
    pub wkt_lat_first: bool,
}

/// The Turtle document and its statement count.
pub fn turtle_string(kb: &KnowledgeBase, options: &TurtleOptions) -> (String, u64) {
    turtle::document(kb, options.wkt_lat_first)
}

/// Writes the Turtle file; returns the statement count.
pub fn export_turtle(kb: &KnowledgeBase, path: &Path, options: &TurtleOptions) -> Result<u64> {
    let (document, statements) = turtle_string(kb, options);
    std::fs::write(path, document).map_err(|source| Error::UnwritablePath {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(statements)
}

/// Entities within `max_km` of `center` (all located entities when no
/// radius is given), sorted by ascending distance, ties by `kb_id`.
/// Entities without coordinates never appear.
pub fn query_radius<'a>(
    kb: &'a KnowledgeBase,
    center: GeoPoint,
    max_km: Option<f64>,
) -> Vec<(&'a MergedEntity, f64)> {
    let mut hits: Vec<(&MergedEntity, f64)> = kb
        .entities
        .iter()
        .filter_map(|e| e.point.map(|p| (e, haversine_km(center, p))))
        .filter(|(_, d)| max_km.is_none_or(|max| *d <= max))
        .collect();
    hits.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.kb_id.cmp(&b.0.kb_id)));
    hits
}

/// Conjunctive location/type filter with normalized name comparison.
#[derive(Debug, Clone, Default)]
pub struct QueryFilter {
    pub country: Option<String>,
    pub state: Option<String>,
    pub city: Option<String>,
    pub semantic_type: Option<SemanticType>,
}

impl QueryFilter {
    pub fn is_empty(&self) -> bool {
        self.country.is_none()
            && self.state.is_none()
            && self.city.is_none()
            && self.semantic_type.is_none()
    }
}

/// Entities passing every provided filter, in `kb_id` order. No filters
/// selects everything.
pub fn query_filter<'a>(kb: &'a KnowledgeBase, filter: &QueryFilter) -> Vec<&'a MergedEntity> {
    let wanted = |loc: &Option<LocationRef>, want: &Option<String>| match want {
        None => true,
        Some(want) => loc
            .as_ref()
            .and_then(|l| l.name.as_deref())
            .is_some_and(|name| normalize_name(name) == normalize_name(want)),
    };
    kb.entities
        .iter()
        .filter(|e| wanted(&e.country, &filter.country))
        .filter(|e| wanted(&e.state, &filter.state))
        .filter(|e| wanted(&e.city, &filter.city))
        .filter(|e| filter.semantic_type.map_or(true, |t| e.types.contains(&t)))
        .collect()
}
