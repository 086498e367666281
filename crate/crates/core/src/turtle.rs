//! The Turtle serializer behind [`crate::export::export_turtle`].
//!
//! Output layout, in order: the pinned prefix block, the schema (classes
//! with their external equivalences, then properties), one resource per
//! gazetteer-resolved location, one resource per facility. Everything is
//! emitted in deterministic order so identical knowledge bases serialize
//! byte-identically.

use std::collections::BTreeMap;

use crate::align::{KnowledgeBase, MergedEntity};
use crate::model::{GeoNamesId, LocationLevel, LocationRef, SemanticType, SourceTag};

/// The namespace block every document starts with. `mto:`/`mtp:`/`mtr:`
/// hold the knowledge base's own classes, properties and resources.
const PREFIXES: &[(&str, &str)] = &[
    ("mto", "http://research.mytomorrows.com/ontology/"),
    ("mtp", "http://research.mytomorrows.com/property/"),
    ("mtr", "http://research.mytomorrows.com/resource/"),
    ("rdf", "http://www.w3.org/1999/02/22-rdf-syntax-ns#"),
    ("rdfs", "http://www.w3.org/2000/01/rdf-schema#"),
    ("owl", "http://www.w3.org/2002/07/owl#"),
    ("skos", "http://www.w3.org/2004/02/skos/core#"),
    ("xsd", "http://www.w3.org/2001/XMLSchema#"),
    ("geo", "http://www.opengis.net/ont/geosparql#"),
    ("gn", "http://www.geonames.org/ontology#"),
    ("schema", "http://schema.org/"),
];

struct Writer {
    out: String,
    statements: u64,
}

impl Writer {
    fn new() -> Writer {
        let mut out = String::new();
        for (prefix, iri) in PREFIXES {
            out.push_str(&format!("@prefix {prefix}: <{iri}> .\n"));
        }
        Writer { out, statements: 0 }
    }

    /// One subject block. Each (predicate, object) pair is one statement.
    fn block(&mut self, subject: &str, pairs: &[(&str, Vec<String>)]) {
        let pairs: Vec<&(&str, Vec<String>)> =
            pairs.iter().filter(|(_, objects)| !objects.is_empty()).collect();
        if pairs.is_empty() {
            return;
        }
        self.out.push('\n');
        self.out.push_str(subject);
        for (ix, (predicate, objects)) in pairs.iter().enumerate() {
            self.out.push_str(if ix == 0 { " " } else { " ;\n    " });
            self.out.push_str(predicate);
            self.out.push(' ');
            self.out.push_str(&objects.join(", "));
            self.statements += objects.len() as u64;
        }
        self.out.push_str(" .\n");
    }
}

/// String literal with Turtle's required escapes (quote, backslash, and
/// control characters).
fn literal(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for c in text.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04X}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn lang_literal(text: &str, lang: Option<&str>) -> String {
    match lang {
        Some(lang) => format!("{}@{lang}", literal(text)),
        None => literal(text),
    }
}

fn decimal(value: f64) -> String {
    let s = format!("{value}");
    debug_assert!(!s.contains(['e', 'E']), "Display of f64 stays in plain decimal notation");
    format!("\"{s}\"^^xsd:decimal")
}

/// Full IRI in angle brackets, percent-encoding the few characters the
/// IRIREF production forbids. Ingest already rejects whitespace/controls
/// in native ids, so this only fires on exotic punctuation.
fn iri(raw: String) -> String {
    let mut out = String::with_capacity(raw.len() + 2);
    out.push('<');
    for c in raw.chars() {
        match c {
            '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\' => {
                let mut buf = [0u8; 4];
                for byte in c.encode_utf8(&mut buf).as_bytes() {
                    out.push_str(&format!("%{byte:02X}"));
                }
            }
            c => out.push(c),
        }
    }
    out.push('>');
    out
}

/// The published identity of a native id in its home dataset.
fn sameas_target(source: SourceTag, native_id: &str) -> String {
    iri(match source {
        SourceTag::Wikidata => format!("http://www.wikidata.org/entity/{native_id}"),
        SourceTag::Geonames => format!("http://sws.geonames.org/{native_id}/"),
        SourceTag::Dbpedia => format!("http://dbpedia.org/resource/{native_id}"),
        SourceTag::Yago => format!("http://yago-knowledge.org/resource/{native_id}"),
        SourceTag::Umls => format!("http://purl.bioontology.org/ontology/UMLS/{native_id}"),
    })
}

fn type_class(ty: SemanticType) -> &'static str {
    match ty {
        SemanticType::EducationalInstitution => "mto:EducationalInstitution",
        SemanticType::HealthcareOrganization => "mto:HealthcareOrganization",
        SemanticType::PharmaceuticalCompany => "mto:PharmaceuticalCompany",
    }
}

fn level_class(level: LocationLevel) -> &'static str {
    match level {
        LocationLevel::Country => "mto:Country",
        LocationLevel::State => "mto:State",
        LocationLevel::City => "mto:City",
    }
}

fn write_tbox(w: &mut Writer) {
    let class = |label: &str| {
        vec![
            ("a", vec!["owl:Class".to_string()]),
            ("rdfs:label", vec![lang_literal(label, Some("en"))]),
        ]
    };
    let mut pairs = class("Trial facility");
    pairs.push(("rdfs:subClassOf", vec!["schema:Organization".into()]));
    w.block("mto:TrialFacility", &pairs);

    for (subject, label, equivalent) in [
        ("mto:HealthcareOrganization", "Healthcare organization", Some("schema:MedicalOrganization")),
        ("mto:EducationalInstitution", "Educational institution", Some("schema:EducationalOrganization")),
        ("mto:PharmaceuticalCompany", "Pharmaceutical company", None),
    ] {
        let mut pairs = class(label);
        pairs.push(("rdfs:subClassOf", vec!["mto:TrialFacility".into()]));
        if let Some(eq) = equivalent {
            pairs.push(("owl:equivalentClass", vec![eq.into()]));
        }
        w.block(subject, &pairs);
    }

    for (subject, label, equivalent) in [
        ("mto:Country", "Country", "schema:Country"),
        ("mto:State", "State", "schema:State"),
        ("mto:City", "City", "schema:City"),
    ] {
        let mut pairs = class(label);
        pairs.push(("owl:equivalentClass", vec![equivalent.into()]));
        w.block(subject, &pairs);
    }

    for (subject, label) in [("mtp:country", "country"), ("mtp:state", "state"), ("mtp:city", "city")] {
        w.block(
            subject,
            &[
                ("a", vec!["owl:ObjectProperty".into()]),
                ("rdfs:label", vec![lang_literal(label, Some("en"))]),
            ],
        );
    }

    for (subject, label, equivalent) in [
        ("mtp:zip", "postal code", "schema:postalCode"),
        ("mtp:latitude", "latitude", "schema:latitude"),
        ("mtp:longitude", "longitude", "schema:longitude"),
    ] {
        w.block(
            subject,
            &[
                ("a", vec!["owl:DatatypeProperty".into()]),
                ("rdfs:label", vec![lang_literal(label, Some("en"))]),
                ("owl:equivalentProperty", vec![equivalent.into()]),
            ],
        );
    }
}

/// Only gazetteer-resolved references become location resources; a bare
/// name has no stable identifier to mint an IRI from.
fn collect_locations(kb: &KnowledgeBase) -> BTreeMap<GeoNamesId, LocationRef> {
    let mut out: BTreeMap<GeoNamesId, LocationRef> = BTreeMap::new();
    for entity in &kb.entities {
        for loc in [&entity.country, &entity.state, &entity.city].into_iter().flatten() {
            if let Some(id) = loc.geonames_id {
                out.entry(id).or_insert_with(|| loc.clone());
            }
        }
    }
    out
}

fn location_subject(id: GeoNamesId) -> String {
    format!("mtr:GN{id}")
}

fn write_location(w: &mut Writer, id: GeoNamesId, loc: &LocationRef) {
    let mut pairs: Vec<(&str, Vec<String>)> = vec![("a", vec![level_class(loc.level).into()])];
    if let Some(name) = &loc.name {
        pairs.push(("rdfs:label", vec![literal(name)]));
    }
    if let Some(class) = loc.feature_class {
        pairs.push(("gn:featureClass", vec![format!("gn:{class}")]));
        if let Some(code) = &loc.feature_code {
            pairs.push(("gn:featureCode", vec![format!("gn:{class}.{code}")]));
        }
    }
    pairs.push(("owl:sameAs", vec![sameas_target(SourceTag::Geonames, &id.0.to_string())]));
    w.block(&location_subject(id), &pairs);
}

fn write_facility(w: &mut Writer, entity: &MergedEntity, wkt_lat_first: bool) {
    let mut types = vec!["mto:TrialFacility".to_string()];
    types.extend(entity.types.iter().map(|t| type_class(*t).to_string()));

    let preferred = entity.preferred_alias();
    let alt_labels: Vec<String> = entity
        .aliases
        .iter()
        .filter(|a| *a != preferred)
        .map(|a| lang_literal(&a.text, a.lang.as_deref()))
        .collect();

    let mut pairs: Vec<(&str, Vec<String>)> = vec![
        ("a", types),
        ("rdfs:label", vec![lang_literal(&preferred.text, preferred.lang.as_deref())]),
        ("skos:altLabel", alt_labels),
    ];
    for (predicate, loc) in [
        ("mtp:country", &entity.country),
        ("mtp:state", &entity.state),
        ("mtp:city", &entity.city),
    ] {
        if let Some(id) = loc.as_ref().and_then(|l| l.geonames_id) {
            pairs.push((predicate, vec![location_subject(id)]));
        }
    }
    if let Some(zip) = &entity.zip {
        pairs.push(("mtp:zip", vec![literal(zip)]));
    }
    if let Some(point) = entity.point {
        pairs.push(("mtp:latitude", vec![decimal(point.lat())]));
        pairs.push(("mtp:longitude", vec![decimal(point.lon())]));
        let (first, second) =
            if wkt_lat_first { (point.lat(), point.lon()) } else { (point.lon(), point.lat()) };
        pairs.push(("geo:asWKT", vec![format!("\"POINT({first} {second})\"^^geo:wktLiteral")]));
    }
    let sameas: Vec<String> =
        entity.ids.iter().map(|(source, id)| sameas_target(*source, id)).collect();
    pairs.push(("owl:sameAs", sameas));

    w.block(&format!("mtr:{}", entity.kb_id), &pairs);
}

/// Serializes the whole knowledge base; returns the document and its
/// statement count. An empty knowledge base yields the prefix block alone.
pub(crate) fn document(kb: &KnowledgeBase, wkt_lat_first: bool) -> (String, u64) {
    let mut w = Writer::new();
    if !kb.entities.is_empty() {
        write_tbox(&mut w);
        for (id, loc) in collect_locations(kb) {
            write_location(&mut w, id, &loc);
        }
        for entity in &kb.entities {
            write_facility(&mut w, entity, wkt_lat_first);
        }
    }
    (w.out, w.statements)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_escapes() {
        assert_eq!(literal("plain"), "\"plain\"");
        assert_eq!(literal("say \"hi\""), "\"say \\\"hi\\\"\"");
        assert_eq!(literal("back\\slash"), "\"back\\\\slash\"");
        assert_eq!(literal("line\nbreak"), "\"line\\nbreak\"");
        assert_eq!(literal("bell\u{7}"), "\"bell\\u0007\"");
    }

    #[test]
    fn decimals_never_use_exponents() {
        for v in [0.0000001, -0.0000001, 52.374, -179.999999, 0.5] {
            let rendered = decimal(v);
            let lexical = rendered.strip_suffix("^^xsd:decimal").expect("typed literal");
            assert!(!lexical.contains(['e', 'E']), "{rendered}");
        }
    }

    #[test]
    fn iris_percent_encode_forbidden_characters() {
        assert_eq!(
            iri("http://dbpedia.org/resource/A|B".into()),
            "<http://dbpedia.org/resource/A%7CB>"
        );
        assert_eq!(iri("http://x/y".into()), "<http://x/y>");
    }

    #[test]
    fn sameas_targets_per_source() {
        assert_eq!(
            sameas_target(SourceTag::Wikidata, "Q42"),
            "<http://www.wikidata.org/entity/Q42>"
        );
        assert_eq!(
            sameas_target(SourceTag::Geonames, "2759794"),
            "<http://sws.geonames.org/2759794/>"
        );
        assert_eq!(
            sameas_target(SourceTag::Umls, "C0020021"),
            "<http://purl.bioontology.org/ontology/UMLS/C0020021>"
        );
    }
}
