//! Core vocabulary: source tags, validated native ids, coordinates,
//! semantic types, aliases and location references.

use std::fmt;

use serde::{Deserialize, Serialize};

/// The five source vocabularies. The declaration order doubles as the merge
/// priority order — earlier sources win field conflicts and are processed
/// first during alignment — so the derived `Ord` is load-bearing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    Wikidata,
    Geonames,
    Dbpedia,
    Yago,
    Umls,
}

impl SourceTag {
    pub const ALL: [SourceTag; 5] = [
        SourceTag::Wikidata,
        SourceTag::Geonames,
        SourceTag::Dbpedia,
        SourceTag::Yago,
        SourceTag::Umls,
    ];

    /// Linked-open-data sources participate in `sameAs` clique detection;
    /// UMLS is a terminology without `sameAs` links of its own.
    pub fn is_lod(self) -> bool {
        !matches!(self, SourceTag::Umls)
    }

    pub fn label(self) -> &'static str {
        match self {
            SourceTag::Wikidata => "WIKIDATA",
            SourceTag::Geonames => "GEONAMES",
            SourceTag::Dbpedia => "DBPEDIA",
            SourceTag::Yago => "YAGO",
            SourceTag::Umls => "UMLS",
        }
    }

    /// Case-insensitive parse of a source label ("wikidata", "UMLS", ...).
    pub fn parse(text: &str) -> Option<SourceTag> {
        match text.to_ascii_uppercase().as_str() {
            "WIKIDATA" => Some(SourceTag::Wikidata),
            "GEONAMES" => Some(SourceTag::Geonames),
            "DBPEDIA" => Some(SourceTag::Dbpedia),
            "YAGO" => Some(SourceTag::Yago),
            "UMLS" => Some(SourceTag::Umls),
            _ => None,
        }
    }
}

impl fmt::Display for SourceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Returns whether `native_id` is syntactically valid for `source`:
///
/// * WIKIDATA — `Q` followed by one or more digits;
/// * GEONAMES — a positive decimal integer without leading zeros;
/// * UMLS — `C` followed by exactly seven digits;
/// * DBPEDIA / YAGO — a non-empty page/resource name free of whitespace
///   and control characters (the ids are minted into IRIs on export).
pub fn validate_source_id(source: SourceTag, native_id: &str) -> bool {
    match source {
        SourceTag::Wikidata => {
            let mut chars = native_id.chars();
            chars.next() == Some('Q')
                && !native_id[1..].is_empty()
                && native_id[1..].bytes().all(|b| b.is_ascii_digit())
        }
        SourceTag::Geonames => {
            !native_id.is_empty()
                && native_id.bytes().all(|b| b.is_ascii_digit())
                && !native_id.starts_with('0')
                && native_id.parse::<u64>().is_ok()
        }
        SourceTag::Umls => {
            native_id.len() == 8
                && native_id.starts_with('C')
                && native_id[1..].bytes().all(|b| b.is_ascii_digit())
        }
        SourceTag::Dbpedia | SourceTag::Yago => {
            !native_id.is_empty()
                && !native_id.chars().any(|c| c.is_whitespace() || c.is_control())
        }
    }
}

/// A native identifier qualified by its source. Construction validates the
/// per-source syntax, so a held `SourceId` is always well-formed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceId {
    pub source: SourceTag,
    pub native_id: String,
}

impl SourceId {
    pub fn new(source: SourceTag, native_id: impl Into<String>) -> Option<SourceId> {
        let native_id = native_id.into();
        validate_source_id(source, &native_id).then_some(SourceId { source, native_id })
    }
}

impl fmt::Display for SourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.source, self.native_id)
    }
}

/// A GeoNames feature id (positive integer).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct GeoNamesId(pub u64);

impl GeoNamesId {
    pub fn as_source_id(self) -> SourceId {
        SourceId {
            source: SourceTag::Geonames,
            native_id: self.0.to_string(),
        }
    }
}

impl fmt::Display for GeoNamesId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A WGS84 coordinate. Constructed only through [`GeoPoint::normalize`], so
/// latitude is always in [-90, 90] and longitude in [-180, 180].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoint")]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

#[derive(Deserialize)]
struct RawPoint {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawPoint> for GeoPoint {
    type Error = String;

    fn try_from(raw: RawPoint) -> Result<GeoPoint, String> {
        GeoPoint::normalize(raw.lat, raw.lon)
            .ok_or_else(|| format!("invalid coordinate ({}, {})", raw.lat, raw.lon))
    }
}

impl GeoPoint {
    /// Turns raw coordinate fields into a point, yielding `None` for
    /// non-finite or out-of-range values and for the exact origin (0, 0),
    /// which the source dumps use as a "location unknown" placeholder
    /// (Null Island).
    pub fn normalize(lat: f64, lon: f64) -> Option<GeoPoint> {
        if !lat.is_finite() || !lon.is_finite() {
            return None;
        }
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return None;
        }
        if lat == 0.0 && lon == 0.0 {
            return None;
        }
        Some(GeoPoint { lat, lon })
    }

    pub fn lat(self) -> f64 {
        self.lat
    }

    pub fn lon(self) -> f64 {
        self.lon
    }
}

/// Facility categories tracked by the knowledge base.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SemanticType {
    EducationalInstitution,
    HealthcareOrganization,
    PharmaceuticalCompany,
}

impl SemanticType {
    pub const ALL: [SemanticType; 3] = [
        SemanticType::EducationalInstitution,
        SemanticType::HealthcareOrganization,
        SemanticType::PharmaceuticalCompany,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SemanticType::EducationalInstitution => "EDUCATIONAL_INSTITUTION",
            SemanticType::HealthcareOrganization => "HEALTHCARE_ORGANIZATION",
            SemanticType::PharmaceuticalCompany => "PHARMACEUTICAL_COMPANY",
        }
    }
}

impl fmt::Display for SemanticType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A surface form of a facility name. `text` is stored verbatim (never
/// normalized in place); `lang` is a lowercased language tag, or `None`
/// when the source did not state one.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Alias {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang: Option<String>,
}

impl Alias {
    /// `None` when `text` is empty or whitespace-only. A `lang` of
    /// "UNKNOWN" (any case) or the empty string means "not stated".
    pub fn new(text: impl Into<String>, lang: Option<&str>) -> Option<Alias> {
        let text = text.into();
        if text.trim().is_empty() {
            return None;
        }
        let lang = lang.and_then(|l| {
            let l = l.trim().to_lowercase();
            (!l.is_empty() && l != "unknown" && valid_lang_tag(&l)).then_some(l)
        });
        Some(Alias { text, lang })
    }
}

/// BCP-47-shaped tag as Turtle's grammar accepts it: an alphabetic primary
/// subtag, then `-`-separated alphanumeric subtags. Anything else is
/// treated as untagged rather than poisoning the RDF export.
fn valid_lang_tag(tag: &str) -> bool {
    let mut parts = tag.split('-');
    let Some(first) = parts.next() else { return false };
    if first.is_empty() || !first.chars().all(|c| c.is_ascii_alphabetic()) {
        return false;
    }
    parts.all(|p| !p.is_empty() && p.chars().all(|c| c.is_ascii_alphanumeric()))
}

/// Administrative levels a facility can be located at.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LocationLevel {
    Country,
    State,
    City,
}

impl fmt::Display for LocationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LocationLevel::Country => "COUNTRY",
            LocationLevel::State => "STATE",
            LocationLevel::City => "CITY",
        })
    }
}

/// A reference to a country, state or city. At least one of `geonames_id`
/// and `name` is present; the feature class/code pair is filled in once the
/// reference has been resolved against the gazetteer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationRef {
    pub level: LocationLevel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geonames_id: Option<GeoNamesId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_class: Option<char>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_code: Option<String>,
}

impl LocationRef {
    pub fn new(
        level: LocationLevel,
        geonames_id: Option<GeoNamesId>,
        name: Option<String>,
    ) -> Option<LocationRef> {
        let name = name.filter(|n| !n.trim().is_empty());
        if geonames_id.is_none() && name.is_none() {
            return None;
        }
        Some(LocationRef {
            level,
            geonames_id,
            name,
            feature_class: None,
            feature_code: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_order_is_merge_priority() {
        let mut shuffled = [
            SourceTag::Umls,
            SourceTag::Dbpedia,
            SourceTag::Wikidata,
            SourceTag::Yago,
            SourceTag::Geonames,
        ];
        shuffled.sort();
        assert_eq!(shuffled, SourceTag::ALL);
    }

    #[test]
    fn wikidata_ids() {
        assert!(validate_source_id(SourceTag::Wikidata, "Q5"));
        assert!(validate_source_id(SourceTag::Wikidata, "Q189553"));
        assert!(!validate_source_id(SourceTag::Wikidata, "5"));
        assert!(!validate_source_id(SourceTag::Wikidata, "Q"));
        assert!(!validate_source_id(SourceTag::Wikidata, "Q5x"));
        assert!(!validate_source_id(SourceTag::Wikidata, "q5"));
    }

    #[test]
    fn geonames_ids() {
        assert!(validate_source_id(SourceTag::Geonames, "2759794"));
        assert!(!validate_source_id(SourceTag::Geonames, "0"));
        assert!(!validate_source_id(SourceTag::Geonames, "007"));
        assert!(!validate_source_id(SourceTag::Geonames, "-5"));
        assert!(!validate_source_id(SourceTag::Geonames, "12a"));
        assert!(!validate_source_id(SourceTag::Geonames, ""));
    }

    #[test]
    fn umls_cuis() {
        assert!(validate_source_id(SourceTag::Umls, "C0020021"));
        assert!(!validate_source_id(SourceTag::Umls, "C002002"));
        assert!(!validate_source_id(SourceTag::Umls, "C00200211"));
        assert!(!validate_source_id(SourceTag::Umls, "0020021C"));
        assert!(!validate_source_id(SourceTag::Umls, "c0020021"));
    }

    #[test]
    fn page_name_ids() {
        assert!(validate_source_id(SourceTag::Dbpedia, "Spaarne_Gasthuis"));
        assert!(validate_source_id(SourceTag::Yago, "Mayo_Clinic"));
        assert!(!validate_source_id(SourceTag::Dbpedia, ""));
        assert!(!validate_source_id(SourceTag::Dbpedia, "Spaarne Gasthuis"));
        assert!(!validate_source_id(SourceTag::Yago, "bad\nname"));
    }

    #[test]
    fn null_island_and_ranges() {
        assert!(GeoPoint::normalize(0.0, 0.0).is_none());
        assert!(GeoPoint::normalize(90.5, 0.0).is_none());
        assert!(GeoPoint::normalize(0.0, -180.5).is_none());
        assert!(GeoPoint::normalize(f64::NAN, 4.9).is_none());
        let p = GeoPoint::normalize(52.3676, 4.9041).unwrap();
        assert_eq!((p.lat(), p.lon()), (52.3676, 4.9041));
        // (0, x) and (x, 0) are real places; only the exact origin is a
        // placeholder.
        assert!(GeoPoint::normalize(0.0, 6.73).is_some());
        assert!(GeoPoint::normalize(51.48, 0.0).is_some());
    }

    #[test]
    fn alias_normalizes_lang_only() {
        let a = Alias::new("Hôpital Necker", Some("FR")).unwrap();
        assert_eq!(a.text, "Hôpital Necker");
        assert_eq!(a.lang.as_deref(), Some("fr"));
        assert!(Alias::new("  ", Some("en")).is_none());
        assert_eq!(Alias::new("X", Some("UNKNOWN")).unwrap().lang, None);
        assert_eq!(Alias::new("X", Some("")).unwrap().lang, None);
        assert_eq!(Alias::new("X", None).unwrap().lang, None);
    }

    #[test]
    fn alias_drops_malformed_lang_tags() {
        assert_eq!(Alias::new("X", Some("zh-Hans")).unwrap().lang.as_deref(), Some("zh-hans"));
        assert_eq!(Alias::new("X", Some("nan-hani-tw")).unwrap().lang.as_deref(), Some("nan-hani-tw"));
        // Numeric-first, embedded spaces, stray separators: all untagged.
        assert_eq!(Alias::new("X", Some("12")).unwrap().lang, None);
        assert_eq!(Alias::new("X", Some("en US")).unwrap().lang, None);
        assert_eq!(Alias::new("X", Some("en-")).unwrap().lang, None);
        assert_eq!(Alias::new("X", Some("-en")).unwrap().lang, None);
    }

    #[test]
    fn location_ref_needs_id_or_name() {
        assert!(LocationRef::new(LocationLevel::City, None, None).is_none());
        assert!(LocationRef::new(LocationLevel::City, None, Some("  ".into())).is_none());
        assert!(
            LocationRef::new(LocationLevel::City, Some(GeoNamesId(2759794)), None).is_some()
        );
        assert!(LocationRef::new(LocationLevel::Country, None, Some("Peru".into())).is_some());
    }

    #[test]
    fn geopoint_deserialization_rejects_invalid() {
        assert!(serde_json::from_str::<GeoPoint>(r#"{"lat":52.0,"lon":4.9}"#).is_ok());
        assert!(serde_json::from_str::<GeoPoint>(r#"{"lat":99.0,"lon":4.9}"#).is_err());
        assert!(serde_json::from_str::<GeoPoint>(r#"{"lat":0.0,"lon":0.0}"#).is_err());
    }
}
