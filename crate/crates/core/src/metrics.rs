//! Descriptive statistics over a finished knowledge base: per-source field
//! coverage, located percentages per semantic type, alias-language variety,
//! `sameAs` connectivity before and after alignment, per-country facility
//! density, and cross-source overlap.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::align::KnowledgeBase;
use crate::error::{Error, Result};
use crate::ingest::SourceRecord;
use crate::model::{GeoNamesId, SemanticType, SourceTag};

/// Countries below this population are too small for a meaningful
/// facilities-per-100k figure and report no density.
pub const MIN_DENSITY_POPULATION: u64 = 500_000;

/// Field coverage of one source's records, captured at build time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SourceStats {
    pub records: u64,
    pub with_country: u64,
    pub with_state: u64,
    pub with_city: u64,
    pub with_zip: u64,
    pub with_point: u64,
    /// Sum over records of the number of distinct alias language tags,
    /// so `language_tags / records` is the per-record average.
    pub language_tags: u64,
}

pub fn per_source_stats(records: &[SourceRecord]) -> BTreeMap<SourceTag, SourceStats> {
    let mut out: BTreeMap<SourceTag, SourceStats> = BTreeMap::new();
    for record in records {
        let stats = out.entry(record.source()).or_default();
        stats.records += 1;
        stats.with_country += u64::from(record.country.is_some());
        stats.with_state += u64::from(record.state.is_some());
        stats.with_city += u64::from(record.city.is_some());
        stats.with_zip += u64::from(record.zip.is_some());
        stats.with_point += u64::from(record.point.is_some());
        let langs: BTreeSet<&str> =
            record.aliases.iter().filter_map(|a| a.lang.as_deref()).collect();
        stats.language_tags += langs.len() as u64;
    }
    out
}

/// How well one semantic type is geolocated: entity count, entities with a
/// valid coordinate pair, and the percentage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TypeLocated {
    pub entities: u64,
    pub with_point: u64,
    pub pct_with_point: f64,
}

/// Located percentage per semantic type. Every type appears, including
/// those with zero entities (reported as 0 / 0 / 0%). Entities with several
/// types count under each.
pub fn located_stats(kb: &KnowledgeBase) -> BTreeMap<SemanticType, TypeLocated> {
    let mut out: BTreeMap<SemanticType, TypeLocated> =
        SemanticType::ALL.iter().map(|t| (*t, TypeLocated::default())).collect();
    for entity in &kb.entities {
        for ty in &entity.types {
            let stats = out.get_mut(ty).expect("all types pre-seeded");
            stats.entities += 1;
            stats.with_point += u64::from(entity.point.is_some());
        }
    }
    for stats in out.values_mut() {
        if stats.entities > 0 {
            stats.pct_with_point = 100.0 * stats.with_point as f64 / stats.entities as f64;
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LanguageStats {
    /// Distinct lowercased language tags across all entity aliases.
    pub distinct: u64,
    /// Mean distinct-language count per entity; 0 for an empty KB.
    pub avg_per_entity: f64,
    /// Mean distinct-language count per source record, from build-time
    /// statistics.
    pub avg_per_source_record: BTreeMap<SourceTag, f64>,
    pub aliases_per_language: BTreeMap<String, u64>,
    pub untagged_aliases: u64,
}

pub fn language_stats(kb: &KnowledgeBase) -> LanguageStats {
    let mut stats = LanguageStats::default();
    let mut tag_sum = 0u64;
    for entity in &kb.entities {
        let mut entity_langs: BTreeSet<&str> = BTreeSet::new();
        for alias in &entity.aliases {
            match alias.lang.as_deref() {
                Some(lang) => {
                    entity_langs.insert(lang);
                    *stats.aliases_per_language.entry(lang.to_string()).or_insert(0) += 1;
                }
                None => stats.untagged_aliases += 1,
            }
        }
        tag_sum += entity_langs.len() as u64;
    }
    stats.distinct = stats.aliases_per_language.len() as u64;
    if !kb.entities.is_empty() {
        stats.avg_per_entity = tag_sum as f64 / kb.entities.len() as f64;
    }
    for (source, s) in &kb.source_stats {
        let avg = if s.records > 0 { s.language_tags as f64 / s.records as f64 } else { 0.0 };
        stats.avg_per_source_record.insert(*source, avg);
    }
    stats
}

/// `sameAs` reachability before and after alignment. An entity holding
/// n source ids makes every pair mutually reachable: n·(n−1)/2 undirected
/// pairs, i.e. n·(n−1) directed mappings — the directed count is always
/// exactly twice the undirected one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityStats {
    /// Directed `sameAs` links the input records declared.
    pub unidirectional_before: u64,
    /// Undirected id pairs inside entities after alignment.
    pub undirected_pairs_after: u64,
    /// Directed mappings after alignment: 2 × `undirected_pairs_after`.
    pub directed_after: u64,
    /// Share of directed mappings no record declared:
    /// 100·(after − before)/after. Absent when nothing merged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pct_new: Option<f64>,
}

pub fn connectivity_stats(kb: &KnowledgeBase) -> ConnectivityStats {
    let unidirectional_before = kb.counters.declared_sameas_links;
    let undirected_pairs_after: u64 = kb
        .entities
        .iter()
        .map(|e| {
            let n = e.ids.len() as u64;
            n * (n - 1) / 2
        })
        .sum();
    let directed_after = 2 * undirected_pairs_after;
    let pct_new = (directed_after > 0).then(|| {
        100.0 * directed_after.saturating_sub(unidirectional_before) as f64 / directed_after as f64
    });
    ConnectivityStats { unidirectional_before, undirected_pairs_after, directed_after, pct_new }
}

/// Country populations keyed by the country's GeoNames id.
#[derive(Debug, Clone, Default)]
pub struct PopulationTable {
    rows: BTreeMap<GeoNamesId, u64>,
}

impl PopulationTable {
    /// Reads a two-column TSV: country GeoNames id, population. `#` lines
    /// and blank lines are skipped; anything else malformed is an error.
    pub fn from_path(path: &Path) -> Result<PopulationTable> {
        let file = std::fs::File::open(path).map_err(|source| Error::UnreadableFile {
            path: path.to_path_buf(),
            source,
        })?;
        let mut table = PopulationTable::default();
        for (ix, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| Error::UnreadableFile {
                path: path.to_path_buf(),
                source,
            })?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let malformed = |reason: &str| Error::MalformedPopulationTable {
                path: path.to_path_buf(),
                line: ix + 1,
                reason: reason.to_string(),
            };
            let mut parts = trimmed.splitn(2, '\t');
            let id = parts.next().unwrap_or_default().trim();
            let population = parts
                .next()
                .map(str::trim)
                .ok_or_else(|| malformed("expected two tab-separated columns"))?;
            let id: u64 = id
                .parse()
                .ok()
                .filter(|n| *n > 0)
                .ok_or_else(|| malformed("country id is not a positive integer"))?;
            let population: u64 = population
                .parse()
                .map_err(|_| malformed("population is not a non-negative integer"))?;
            table.insert(GeoNamesId(id), population);
        }
        Ok(table)
    }

    pub fn insert(&mut self, id: GeoNamesId, population: u64) {
        self.rows.insert(id, population);
    }

    pub fn get(&self, id: GeoNamesId) -> Option<u64> {
        self.rows.get(&id).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub country_geonames_id: GeoNamesId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country_name: Option<String>,
    pub entities: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<u64>,
    /// Facilities per 100 000 inhabitants. Absent (`NO_DATA` in tabular
    /// form) when the population is unknown or below the floor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_100k: Option<f64>,
}

/// Healthcare organizations per country and per 100k inhabitants, grouped
/// by the country's GeoNames id. Entities of other types, or without a
/// gazetteer-resolved country, do not contribute.
pub fn density_stats(kb: &KnowledgeBase, populations: &PopulationTable) -> Vec<DensityRow> {
    let mut groups: BTreeMap<GeoNamesId, (BTreeSet<&str>, u64)> = BTreeMap::new();
    for entity in &kb.entities {
        if !entity.types.contains(&SemanticType::HealthcareOrganization) {
            continue;
        }
        let Some(country) = entity.country.as_ref() else { continue };
        let Some(id) = country.geonames_id else { continue };
        let group = groups.entry(id).or_default();
        if let Some(name) = country.name.as_deref() {
            group.0.insert(name);
        }
        group.1 += 1;
    }
    groups
        .into_iter()
        .map(|(id, (names, entities))| {
            let population = populations.get(id);
            let per_100k = population
                .filter(|p| *p >= MIN_DENSITY_POPULATION)
                .map(|p| entities as f64 * 100_000.0 / p as f64);
            DensityRow {
                country_geonames_id: id,
                country_name: names.first().map(|n| n.to_string()),
                entities,
                population,
                per_100k,
            }
        })
        .collect()
}

/// Entity counts per exact source combination (e.g. `WIKIDATA+UMLS`).
/// The counts sum to the number of entities.
pub fn overlap_stats(kb: &KnowledgeBase) -> BTreeMap<String, u64> {
    let mut out: BTreeMap<String, u64> = BTreeMap::new();
    for entity in &kb.entities {
        let label: Vec<&str> = entity.ids.keys().map(|s| s.label()).collect();
        *out.entry(label.join("+")).or_insert(0) += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub entities: u64,
    pub per_source: BTreeMap<SourceTag, SourceStats>,
    pub per_type_located: BTreeMap<SemanticType, TypeLocated>,
    pub language: LanguageStats,
    pub connectivity: ConnectivityStats,
    pub density: Vec<DensityRow>,
    pub overlaps: BTreeMap<String, u64>,
}

pub fn compute_metrics(kb: &KnowledgeBase, populations: &PopulationTable) -> MetricsReport {
    MetricsReport {
        entities: kb.entities.len() as u64,
        per_source: kb.source_stats.clone(),
        per_type_located: located_stats(kb),
        language: language_stats(kb),
        connectivity: connectivity_stats(kb),
        density: density_stats(kb, populations),
        overlaps: overlap_stats(kb),
    }
}

impl MetricsReport {
    /// Flat tab-separated rendering, one `section\tkey\tvalue` row per
    /// figure, for spreadsheet import.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("section\tkey\tvalue\n");
        let mut row = |section: &str, key: &str, value: String| {
            out.push_str(section);
            out.push('\t');
            out.push_str(key);
            out.push('\t');
            out.push_str(&value);
            out.push('\n');
        };
        row("kb", "entities", self.entities.to_string());

        for (source, s) in &self.per_source {
            let label = source.label();
            row("source", &format!("{label}.records"), s.records.to_string());
            row("source", &format!("{label}.with_country"), s.with_country.to_string());
            row("source", &format!("{label}.with_state"), s.with_state.to_string());
            row("source", &format!("{label}.with_city"), s.with_city.to_string());
            row("source", &format!("{label}.with_zip"), s.with_zip.to_string());
            row("source", &format!("{label}.with_point"), s.with_point.to_string());
        }

        for (ty, s) in &self.per_type_located {
            row("located", &format!("{}.entities", ty.label()), s.entities.to_string());
            row("located", &format!("{}.with_point", ty.label()), s.with_point.to_string());
            row("located", &format!("{}.pct", ty.label()), format!("{:.2}", s.pct_with_point));
        }

        row("language", "distinct", self.language.distinct.to_string());
        row("language", "avg_per_entity", format!("{:.4}", self.language.avg_per_entity));
        for (source, avg) in &self.language.avg_per_source_record {
            row("language", &format!("avg.{}", source.label()), format!("{avg:.4}"));
        }
        row("language", "untagged_aliases", self.language.untagged_aliases.to_string());

        row("connectivity", "unidirectional_before", self.connectivity.unidirectional_before.to_string());
        row("connectivity", "undirected_pairs_after", self.connectivity.undirected_pairs_after.to_string());
        row("connectivity", "directed_after", self.connectivity.directed_after.to_string());
        row(
            "connectivity",
            "pct_new",
            self.connectivity.pct_new.map_or_else(|| "NA".into(), |p| format!("{p:.2}")),
        );

        for d in &self.density {
            let key = match &d.country_name {
                Some(name) => format!("{} ({name})", d.country_geonames_id),
                None => d.country_geonames_id.to_string(),
            };
            row(
                "density",
                &key,
                d.per_100k.map_or_else(|| "NO_DATA".into(), |v| format!("{v:.4}")),
            );
        }

        for (subset, n) in &self.overlaps {
            row("overlap", subset, n.to_string());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::{BuildCounters, MergeConfig, MergedEntity};
    use crate::model::{Alias, GeoPoint, LocationLevel, LocationRef};

    fn entity(
        seq: usize,
        ids: &[(SourceTag, &str)],
        country: Option<(Option<u64>, &str)>,
        point: Option<(f64, f64)>,
        aliases: &[(&str, Option<&str>)],
    ) -> MergedEntity {
        MergedEntity {
            kb_id: format!("MTF{seq:08}"),
            ids: ids.iter().map(|(s, id)| (*s, id.to_string())).collect(),
            aliases: aliases
                .iter()
                .map(|(text, lang)| Alias::new(*text, *lang).unwrap())
                .collect(),
            types: BTreeSet::from([SemanticType::HealthcareOrganization]),
            country: country.and_then(|(id, n)| {
                LocationRef::new(LocationLevel::Country, id.map(GeoNamesId), Some(n.into()))
            }),
            state: None,
            city: None,
            zip: None,
            point: point.and_then(|(lat, lon)| GeoPoint::normalize(lat, lon)),
            provenance: vec![],
        }
    }

    fn kb_with(entities: Vec<MergedEntity>, declared_links: u64) -> KnowledgeBase {
        KnowledgeBase::from_parts(
            MergeConfig::default(),
            BuildCounters { declared_sameas_links: declared_links, ..BuildCounters::default() },
            BTreeMap::new(),
            entities,
        )
    }

    #[test]
    fn located_stats_cover_every_type() {
        let kb = kb_with(
            vec![
                entity(1, &[(SourceTag::Wikidata, "Q1")], None, Some((52.0, 4.0)), &[("A", None)]),
                entity(2, &[(SourceTag::Umls, "C0000001")], None, None, &[("B", None)]),
            ],
            0,
        );
        let report = located_stats(&kb);
        assert_eq!(report.len(), SemanticType::ALL.len());
        let hco = &report[&SemanticType::HealthcareOrganization];
        assert_eq!((hco.entities, hco.with_point), (2, 1));
        assert!((hco.pct_with_point - 50.0).abs() < 1e-12);
        // A type with no entities reports zeros, not NaN.
        let edu = &report[&SemanticType::EducationalInstitution];
        assert_eq!((edu.entities, edu.with_point), (0, 0));
        assert_eq!(edu.pct_with_point, 0.0);
    }

    #[test]
    fn language_stats_count_distinct_tags_per_entity() {
        let kb = kb_with(
            vec![
                entity(
                    1,
                    &[(SourceTag::Wikidata, "Q1")],
                    None,
                    None,
                    &[("Hospital", Some("en")), ("Ziekenhuis", Some("nl")), ("H", None), ("Hôpital", Some("fr"))],
                ),
                entity(2, &[(SourceTag::Umls, "C0000001")], None, None, &[("Clinic", Some("en"))]),
            ],
            0,
        );
        let stats = language_stats(&kb);
        assert_eq!(stats.distinct, 3);
        assert_eq!(stats.untagged_aliases, 1);
        assert_eq!(stats.aliases_per_language["en"], 2);
        // (3 + 1) / 2 entities
        assert!((stats.avg_per_entity - 2.0).abs() < 1e-12);
    }

    #[test]
    fn connectivity_counts_directed_and_undirected() {
        // One 3-source entity: 3 undirected pairs = 6 directed mappings.
        // Four links were declared, so a third of the mappings are new.
        let kb = kb_with(
            vec![entity(
                1,
                &[(SourceTag::Wikidata, "Q1"), (SourceTag::Geonames, "11"), (SourceTag::Umls, "C0000001")],
                None,
                None,
                &[("A", None)],
            )],
            4,
        );
        let stats = connectivity_stats(&kb);
        assert_eq!(stats.unidirectional_before, 4);
        assert_eq!(stats.undirected_pairs_after, 3);
        assert_eq!(stats.directed_after, 6);
        assert!((stats.pct_new.unwrap() - 100.0 * 2.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn connectivity_on_singletons_has_no_percentage() {
        let kb = kb_with(
            vec![entity(1, &[(SourceTag::Umls, "C0000001")], None, None, &[("A", None)])],
            0,
        );
        let stats = connectivity_stats(&kb);
        assert_eq!(stats.directed_after, 0);
        assert_eq!(stats.pct_new, None);
    }

    #[test]
    fn density_applies_the_population_floor() {
        let mut table = PopulationTable::default();
        table.insert(GeoNamesId(100), 1_000_000);
        table.insert(GeoNamesId(200), 400_000);
        let kb = kb_with(
            vec![
                entity(1, &[(SourceTag::Wikidata, "Q1")], Some((Some(100), "Exampleland")), None, &[("A", None)]),
                entity(2, &[(SourceTag::Wikidata, "Q2")], Some((Some(100), "Exampleland")), None, &[("B", None)]),
                entity(3, &[(SourceTag::Wikidata, "Q3")], Some((Some(100), "Exampleland")), None, &[("C", None)]),
                entity(4, &[(SourceTag::Wikidata, "Q4")], Some((Some(100), "Exampleland")), None, &[("D", None)]),
                entity(5, &[(SourceTag::Wikidata, "Q5")], Some((Some(100), "Exampleland")), None, &[("E", None)]),
                entity(6, &[(SourceTag::Wikidata, "Q6")], Some((Some(200), "Tinyland")), None, &[("F", None)]),
                entity(7, &[(SourceTag::Wikidata, "Q7")], Some((Some(300), "Atlantis")), None, &[("G", None)]),
                entity(8, &[(SourceTag::Wikidata, "Q8")], Some((None, "Nowhere")), None, &[("H", None)]),
                entity(9, &[(SourceTag::Wikidata, "Q9")], None, None, &[("I", None)]),
            ],
            0,
        );
        let rows = density_stats(&kb, &table);
        assert_eq!(rows.len(), 3);
        // Five facilities per million inhabitants = 0.5 per 100k.
        assert_eq!(rows[0].country_geonames_id, GeoNamesId(100));
        assert_eq!(rows[0].entities, 5);
        assert_eq!(rows[0].per_100k, Some(0.5));
        // Populations under the floor and unknown countries report nothing.
        assert_eq!(rows[1].population, Some(400_000));
        assert_eq!(rows[1].per_100k, None);
        assert_eq!(rows[2].population, None);
        assert_eq!(rows[2].per_100k, None);
    }

    #[test]
    fn density_ignores_other_types() {
        let mut table = PopulationTable::default();
        table.insert(GeoNamesId(100), 1_000_000);
        let mut school = entity(1, &[(SourceTag::Dbpedia, "S")], Some((Some(100), "Exampleland")), None, &[("S", None)]);
        school.types = BTreeSet::from([SemanticType::EducationalInstitution]);
        let kb = kb_with(vec![school], 0);
        assert!(density_stats(&kb, &table).is_empty());
    }

    #[test]
    fn overlaps_partition_the_entities() {
        let kb = kb_with(
            vec![
                entity(1, &[(SourceTag::Wikidata, "Q1"), (SourceTag::Umls, "C0000001")], None, None, &[("A", None)]),
                entity(2, &[(SourceTag::Wikidata, "Q2"), (SourceTag::Umls, "C0000002")], None, None, &[("B", None)]),
                entity(3, &[(SourceTag::Geonames, "33")], None, None, &[("C", None)]),
            ],
            0,
        );
        let overlaps = overlap_stats(&kb);
        assert_eq!(overlaps["WIKIDATA+UMLS"], 2);
        assert_eq!(overlaps["GEONAMES"], 1);
        assert_eq!(overlaps.values().sum::<u64>(), kb.entities.len() as u64);
    }

    #[test]
    fn population_table_parses_and_rejects() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("pop.tsv");
        std::fs::write(&good, "# id\tpopulation\n2750405\t17500000\n\n2802361\t11600000\n").unwrap();
        let table = PopulationTable::from_path(&good).unwrap();
        assert_eq!(table.get(GeoNamesId(2750405)), Some(17_500_000));
        assert_eq!(table.get(GeoNamesId(2802361)), Some(11_600_000));
        assert_eq!(table.get(GeoNamesId(1)), None);

        for bad_body in ["x\t100\n", "2750405\tmany\n", "2750405\n", "0\t100\n"] {
            let bad = dir.path().join("bad.tsv");
            std::fs::write(&bad, bad_body).unwrap();
            assert!(
                matches!(
                    PopulationTable::from_path(&bad),
                    Err(Error::MalformedPopulationTable { line: 1, .. })
                ),
                "expected rejection of {bad_body:?}"
            );
        }
    }

    #[test]
    fn tsv_rendering_is_stable() {
        let mut table = PopulationTable::default();
        table.insert(GeoNamesId(100), 600_000);
        let kb = kb_with(
            vec![entity(1, &[(SourceTag::Wikidata, "Q1")], Some((Some(100), "Exampleland")), None, &[("A", Some("en"))])],
            0,
        );
        let report = compute_metrics(&kb, &table);
        let tsv = report.to_tsv();
        assert!(tsv.starts_with("section\tkey\tvalue\n"));
        assert!(tsv.contains("kb\tentities\t1\n"));
        assert!(tsv.contains("density\t100 (Exampleland)\t0.1667\n"));
        assert!(tsv.contains("connectivity\tpct_new\tNA\n"));
        assert!(tsv.contains("located\tHEALTHCARE_ORGANIZATION.pct\t0.00\n"));
    }
}
