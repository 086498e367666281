//! Construction of a unified, geolocated knowledge base of medical facilities
//! from five public vocabularies (Wikidata, GeoNames, DBpedia, YAGO, UMLS).
//!
//! The pipeline runs in fixed stages:
//!
//! 1. **ingest** — read normalized per-source dumps, drop blacklisted ids,
//!    resolve Wikidata administrative territories against the gazetteer.
//! 2. **geo** — gazetteer lookups (exact normalized-name matching) and
//!    great-circle distance.
//! 3. **align** — merge records that denote the same real-world facility:
//!    full `sameAs` cliques first, then partial `sameAs` absorption in source
//!    order, then geography-gated string matching over a character-trigram
//!    TF-IDF space, and finally residual singletons. At most one native id
//!    per source ever lands in one entity.
//! 4. **triallink** — attach clinical-trial site names to entities, after
//!    diverting vague site descriptions ("Local Institution", "Site 128", …).
//! 5. **metrics / export** — coverage statistics, CSV and Turtle artifacts,
//!    and geo queries over the finished knowledge base.
//!
//! All stages are deterministic: rebuilding from a permuted copy of the same
//! dumps yields byte-identical exports.

pub mod align;
pub mod error;
pub mod export;
pub mod geo;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod normalize;
pub mod textmatch;
pub mod triallink;
mod turtle;

pub use error::Error;
pub use model::{
    Alias, GeoNamesId, GeoPoint, LocationLevel, LocationRef, SemanticType, SourceId, SourceTag,
};
