//! Entity alignment: collapsing per-source records into merged entities.
//!
//! The knowledge base is built in four ordered steps. Throughout all of
//! them one rule is absolute: **an entity holds at most one native id per
//! source**, and a native id lands in exactly one entity.
//!
//! 1. **Full `sameAs` cliques.** Connected groups of linked-open-data
//!    records that cover every LOD source present in the run, with a
//!    pairwise-consistent link for every pair, become entities outright.
//!    Groups with conflicting claims (two records of one source in the same
//!    component, or a link contradicting a member's id) are left for the
//!    later steps and logged.
//! 2. **Partial `sameAs` absorption.** Remaining records that declare or
//!    receive at least one `sameAs` link are processed source by source
//!    (Wikidata → GeoNames → DBpedia → YAGO → UMLS, ascending native id
//!    within a source). A record joins the first existing entity it is
//!    linked to whose slot for its source is free; otherwise it seeds a new
//!    entity. Records with no links at all fall through to step 3.
//! 3. **Geography-gated string matching.** A trigram TF-IDF space is built
//!    over every alias in the run. Link-less records are processed in the
//!    same deterministic order; each is compared against every existing
//!    entity *and* every other still-unmerged record with any alias-pair
//!    cosine at or above the lowest rule threshold, best score first (ties:
//!    ascending entity key). The first candidate that satisfies its
//!    applicable rule absorbs the record:
//!
//!    * **Rule 1** — both sides have coordinates: max alias-pair cosine
//!      ≥ 0.75 *and* the points lie within 1 km.
//!    * **Rule 2** — coordinates incomplete, both sides name a city and a
//!      country: normalized-equal names *and* cosine ≥ 0.9.
//!    * **Rule 3** — no shared city knowledge, both sides name a country:
//!      normalized-equal country *and* at least 3 alias pairs with cosine
//!      ≥ 0.99.
//!
//!    Exactly one rule applies to a given pair (availability of location
//!    data decides which); if its thresholds fail, the pair does not merge.
//!    A candidate that passes its rule but already holds an id of the
//!    record's source blocks the merge and the next candidate is tried.
//! 4. **Residual singletons.** Whatever is still unmerged becomes a
//!    one-record entity.
//!
//! Every decision point iterates data in a defined order, so rebuilding
//! from permuted input yields identical entities and identical `kb_id`s.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::haversine_km;
use crate::ingest::SourceRecord;
use crate::metrics::{per_source_stats, SourceStats};
use crate::model::{Alias, GeoPoint, LocationRef, SemanticType, SourceId, SourceTag};
use crate::normalize::normalize_name;
use crate::textmatch::{CandidateIndex, IndexMode};

/// Merge thresholds and processing order. Immutable for the duration of a
/// run; recorded in the finished knowledge base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MergeConfig {
    /// Rule 1: minimum max-alias-pair cosine when both sides have points.
    pub rule1_min_cosine: f64,
    /// Rule 1: maximum great-circle distance in km.
    pub rule1_max_km: f64,
    /// Rule 2: minimum cosine when merging on equal city + country names.
    pub rule2_min_cosine: f64,
    /// Rule 3: per-alias-pair cosine floor.
    pub rule3_min_cosine: f64,
    /// Rule 3: how many alias pairs must clear the floor.
    pub rule3_min_pairs: usize,
    /// Candidate-list width for approximate retrieval. Exact retrieval
    /// (the default build path) considers every candidate at or above the
    /// lowest rule threshold, so this only caps approximate mode.
    pub candidates: usize,
    /// Processing and field-priority order over sources.
    pub source_order: [SourceTag; 5],
}

impl Default for MergeConfig {
    fn default() -> MergeConfig {
        MergeConfig {
            rule1_min_cosine: 0.75,
            rule1_max_km: 1.0,
            rule2_min_cosine: 0.9,
            rule3_min_cosine: 0.99,
            rule3_min_pairs: 3,
            candidates: 10,
            source_order: SourceTag::ALL,
        }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rule1_min_cosine", self.rule1_min_cosine),
            ("rule2_min_cosine", self.rule2_min_cosine),
            ("rule3_min_cosine", self.rule3_min_cosine),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if !self.rule1_max_km.is_finite() || self.rule1_max_km < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "rule1_max_km must be a non-negative number, got {}",
                self.rule1_max_km
            )));
        }
        if self.rule3_min_pairs == 0 {
            return Err(Error::InvalidConfig("rule3_min_pairs must be at least 1".into()));
        }
        if self.candidates == 0 {
            return Err(Error::InvalidConfig("candidates must be at least 1".into()));
        }
        let mut seen = self.source_order;
        seen.sort();
        if seen != SourceTag::ALL {
            return Err(Error::InvalidConfig(
                "source_order must list each source exactly once".into(),
            ));
        }
        Ok(())
    }

    fn rank(&self, source: SourceTag) -> u8 {
        self.source_order.iter().position(|s| *s == source).unwrap() as u8
    }

    /// The lowest cosine any rule can merge at: candidates below this can
    /// be skipped without changing the outcome.
    fn candidate_floor(&self) -> f64 {
        self.rule1_min_cosine
            .min(self.rule2_min_cosine)
            .min(self.rule3_min_cosine)
    }
}

/// One provenance entry on an entity: which record was absorbed, at which
/// step, under which rule, with which evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeEvent {
    pub step: u8,
    pub record: SourceId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cosine: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_km: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub close_pairs: Option<u32>,
}

/// Audit-trail row for the merge report (one JSON object per line on
/// export). Covers merges, seeds, conflicts and blocked attempts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportEvent {
    pub step: u8,
    pub action: &'static str,
    pub record: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cosine: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_km: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// A finished entity: the union of its constituent records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedEntity {
    pub kb_id: String,
    /// Source → native id; at most one per source by construction.
    pub ids: BTreeMap<SourceTag, String>,
    pub aliases: BTreeSet<Alias>,
    pub types: BTreeSet<SemanticType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country: Option<LocationRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<LocationRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub city: Option<LocationRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zip: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<GeoPoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub provenance: Vec<MergeEvent>,
}

impl MergedEntity {
    /// The display alias: the lexicographically first English alias, then
    /// the first alias in any stated language, then the first untagged one.
    pub fn preferred_alias(&self) -> &Alias {
        let rank = |a: &Alias| match a.lang.as_deref() {
            Some("en") => 0u8,
            Some(_) => 1,
            None => 2,
        };
        self.aliases
            .iter()
            .min_by(|a, b| {
                rank(a)
                    .cmp(&rank(b))
                    .then_with(|| a.lang.cmp(&b.lang))
                    .then_with(|| a.text.cmp(&b.text))
            })
            .expect("entities always carry at least one alias")
    }

    pub fn preferred_name(&self) -> &str {
        &self.preferred_alias().text
    }

    pub fn source_count(&self) -> usize {
        self.ids.len()
    }
}

/// Aggregate counts from one build, kept with the knowledge base so later
/// commands can reproduce record-level statistics without the dumps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildCounters {
    pub input_records: u64,
    pub duplicate_ids_dropped: u64,
    /// Directed `sameAs` links declared by the input records.
    pub declared_sameas_links: u64,
    pub step1_entities: u64,
    pub step1_conflict_records: u64,
    pub step2_joins: u64,
    pub step2_seeds: u64,
    pub step3_merges_rule1: u64,
    pub step3_merges_rule2: u64,
    pub step3_merges_rule3: u64,
    pub step3_blocked: u64,
    pub step4_singletons: u64,
}

/// The finished knowledge base.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "KbOnDisk")]
pub struct KnowledgeBase {
    pub config: MergeConfig,
    pub counters: BuildCounters,
    /// Per-source record statistics captured at build time.
    pub source_stats: BTreeMap<SourceTag, SourceStats>,
    /// Sorted by `kb_id`.
    pub entities: Vec<MergedEntity>,
    #[serde(skip_serializing)]
    by_source_id: BTreeMap<SourceId, usize>,
}

#[derive(Deserialize)]
struct KbOnDisk {
    config: MergeConfig,
    counters: BuildCounters,
    #[serde(default)]
    source_stats: BTreeMap<SourceTag, SourceStats>,
    entities: Vec<MergedEntity>,
}

impl From<KbOnDisk> for KnowledgeBase {
    fn from(disk: KbOnDisk) -> KnowledgeBase {
        KnowledgeBase::from_parts(disk.config, disk.counters, disk.source_stats, disk.entities)
    }
}

impl KnowledgeBase {
    pub fn from_parts(
        config: MergeConfig,
        counters: BuildCounters,
        source_stats: BTreeMap<SourceTag, SourceStats>,
        entities: Vec<MergedEntity>,
    ) -> KnowledgeBase {
        let mut by_source_id = BTreeMap::new();
        for (ix, entity) in entities.iter().enumerate() {
            for (source, native_id) in &entity.ids {
                by_source_id.insert(
                    SourceId { source: *source, native_id: native_id.clone() },
                    ix,
                );
            }
        }
        KnowledgeBase { config, counters, source_stats, entities, by_source_id }
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn entity_by_source(&self, id: &SourceId) -> Option<&MergedEntity> {
        self.by_source_id.get(id).map(|ix| &self.entities[*ix])
    }
}

/// A knowledge base plus the audit trail of how it was assembled.
#[derive(Debug)]
pub struct BuildOutcome {
    pub kb: KnowledgeBase,
    pub report: Vec<ReportEvent>,
}

// ---------------------------------------------------------------------------
// Working state

/// A cluster under construction: either an entity-in-progress or a single
/// still-unmerged record awaiting step 3/4.
#[derive(Debug)]
struct Cluster {
    members: BTreeMap<SourceTag, SourceRecord>,
    events: Vec<MergeEvent>,
    /// True for clusters created by steps 1-2; false while the cluster is
    /// just an unmerged record.
    entity: bool,
}

impl Cluster {
    fn seed(record: SourceRecord, entity: bool) -> Cluster {
        let mut members = BTreeMap::new();
        members.insert(record.source(), record);
        Cluster { members, events: Vec::new(), entity }
    }

    /// Deterministic identity: the first present source in config order,
    /// with that member's native id.
    fn key(&self, cfg: &MergeConfig) -> (u8, String) {
        cfg.source_order
            .iter()
            .find_map(|s| self.members.get(s).map(|r| (cfg.rank(*s), r.id.native_id.clone())))
            .expect("clusters are never empty")
    }

    fn first_field<'a, T>(
        &'a self,
        cfg: &MergeConfig,
        get: impl Fn(&'a SourceRecord) -> Option<T>,
    ) -> Option<T> {
        cfg.source_order
            .iter()
            .filter_map(|s| self.members.get(s))
            .find_map(get)
    }

    fn merged_point(&self, cfg: &MergeConfig) -> Option<GeoPoint> {
        self.first_field(cfg, |r| r.point)
    }

    fn merged_city_name(&self, cfg: &MergeConfig) -> Option<&str> {
        self.first_field(cfg, |r| r.city.as_ref().and_then(|c| c.name.as_deref()))
    }

    fn merged_country_name(&self, cfg: &MergeConfig) -> Option<&str> {
        self.first_field(cfg, |r| r.country.as_ref().and_then(|c| c.name.as_deref()))
    }

    fn alias_texts(&self) -> impl Iterator<Item = &str> {
        self.members.values().flat_map(|r| r.aliases.iter().map(|a| a.text.as_str()))
    }
}

fn record_key(cfg: &MergeConfig, r: &SourceRecord) -> (u8, String) {
    (cfg.rank(r.source()), r.id.native_id.clone())
}

// ---------------------------------------------------------------------------
// Canonicalization

/// Sorts records into processing order and drops records whose (source,
/// native id) was already seen. The content serialization breaks ties
/// between distinct records claiming the same id, so the survivor does not
/// depend on input order.
fn canonicalize(records: Vec<SourceRecord>, cfg: &MergeConfig) -> (Vec<SourceRecord>, u64) {
    let mut keyed: Vec<(u8, SourceRecord, String)> = records
        .into_iter()
        .map(|r| {
            let json = serde_json::to_string(&r).expect("records serialize");
            (cfg.rank(r.source()), r, json)
        })
        .collect();
    keyed.sort_by(|a, b| {
        (a.0, &a.1.id.native_id, &a.2).cmp(&(b.0, &b.1.id.native_id, &b.2))
    });
    let mut out: Vec<SourceRecord> = Vec::with_capacity(keyed.len());
    let mut dropped = 0u64;
    for (_, record, _) in keyed {
        if out.last().is_some_and(|prev| prev.id == record.id) {
            dropped += 1;
        } else {
            out.push(record);
        }
    }
    (out, dropped)
}

// ---------------------------------------------------------------------------
// Link graph

/// Symmetric view of the declared `sameAs` links between records present in
/// the run, plus the set of records that declare any link at all (even a
/// dangling one — such records are handled by step 2, not step 3).
struct LinkGraph {
    edges: BTreeMap<SourceId, BTreeSet<SourceId>>,
    linked: BTreeSet<SourceId>,
}

impl LinkGraph {
    fn build(records: &[SourceRecord]) -> LinkGraph {
        let present: BTreeSet<SourceId> = records.iter().map(|r| r.id.clone()).collect();
        let mut edges: BTreeMap<SourceId, BTreeSet<SourceId>> = BTreeMap::new();
        let mut linked: BTreeSet<SourceId> = BTreeSet::new();
        for record in records {
            if !record.sameas.is_empty() {
                linked.insert(record.id.clone());
            }
            for (source, native_id) in &record.sameas {
                let target = SourceId { source: *source, native_id: native_id.clone() };
                if present.contains(&target) {
                    linked.insert(target.clone());
                    edges.entry(record.id.clone()).or_default().insert(target.clone());
                    edges.entry(target).or_default().insert(record.id.clone());
                }
            }
        }
        LinkGraph { edges, linked }
    }

    fn neighbours(&self, id: &SourceId) -> Option<&BTreeSet<SourceId>> {
        self.edges.get(id)
    }

    fn connected(&self, a: &SourceId, b: &SourceId) -> bool {
        self.edges.get(a).is_some_and(|n| n.contains(b))
    }

    fn is_linked(&self, id: &SourceId) -> bool {
        self.linked.contains(id)
    }
}

// ---------------------------------------------------------------------------
// Step 1: full sameAs cliques

struct StepState {
    clusters: Vec<Cluster>,
    report: Vec<ReportEvent>,
    counters: BuildCounters,
}

/// Detects groups of LOD records whose links form a full clique covering
/// every LOD source present in the run and promotes them to entities.
/// Returns the records left over for steps 2-4.
fn step1_full_sameas(
    records: Vec<SourceRecord>,
    graph: &LinkGraph,
    cfg: &MergeConfig,
    state: &mut StepState,
) -> Vec<SourceRecord> {
    let present_lod: BTreeSet<SourceTag> = records
        .iter()
        .map(|r| r.source())
        .filter(|s| s.is_lod())
        .collect();
    if present_lod.len() < 2 {
        return records;
    }

    // Connected components over LOD records only.
    let mut by_id: BTreeMap<SourceId, SourceRecord> =
        records.into_iter().map(|r| (r.id.clone(), r)).collect();
    let mut component_of: BTreeMap<SourceId, usize> = BTreeMap::new();
    let mut components: Vec<Vec<SourceId>> = Vec::new();
    for id in by_id.keys().filter(|id| id.source.is_lod()) {
        if component_of.contains_key(id) {
            continue;
        }
        let ix = components.len();
        let mut stack = vec![id.clone()];
        let mut members = Vec::new();
        component_of.insert(id.clone(), ix);
        while let Some(current) = stack.pop() {
            members.push(current.clone());
            if let Some(neighbours) = graph.neighbours(&current) {
                for n in neighbours {
                    if n.source.is_lod()
                        && by_id.contains_key(n)
                        && !component_of.contains_key(n)
                    {
                        component_of.insert(n.clone(), ix);
                        stack.push(n.clone());
                    }
                }
            }
        }
        members.sort();
        components.push(members);
    }
    components.sort();

    let mut absorbed: BTreeSet<SourceId> = BTreeSet::new();
    for members in components {
        if members.len() < 2 {
            continue;
        }
        let sources: Vec<SourceTag> = members.iter().map(|id| id.source).collect();
        let distinct: BTreeSet<SourceTag> = sources.iter().copied().collect();
        let duplicated_source = distinct.len() != sources.len();
        let covers_all = distinct == present_lod;
        let pairwise = members.iter().enumerate().all(|(i, a)| {
            members[i + 1..].iter().all(|b| graph.connected(a, b))
        });
        // A member's claim about another member's source must match that
        // member's actual id (a dangling claim to a different id is a
        // conflict even when the direct links check out).
        let consistent = !duplicated_source
            && members.iter().all(|id| {
                let record = &by_id[id];
                members.iter().all(|other| {
                    other == id
                        || record
                            .sameas
                            .get(&other.source)
                            .is_none_or(|claim| *claim == other.native_id)
                })
            });

        if covers_all && pairwise && consistent {
            let mut cluster = Cluster { members: BTreeMap::new(), events: Vec::new(), entity: true };
            for (i, id) in members.iter().enumerate() {
                let record = by_id[id].clone();
                if i > 0 {
                    cluster.events.push(MergeEvent {
                        step: 1,
                        record: id.clone(),
                        rule: None,
                        cosine: None,
                        distance_km: None,
                        close_pairs: None,
                    });
                }
                cluster.members.insert(id.source, record);
                absorbed.insert(id.clone());
            }
            state.report.push(ReportEvent {
                step: 1,
                action: "clique",
                record: members[0].to_string(),
                target: None,
                rule: None,
                cosine: None,
                distance_km: None,
                note: Some(format!("clique of {}", members.len())),
            });
            state.counters.step1_entities += 1;
            state.clusters.push(cluster);
        } else if duplicated_source || !consistent {
            state.counters.step1_conflict_records += members.len() as u64;
            state.report.push(ReportEvent {
                step: 1,
                action: "conflict",
                record: members[0].to_string(),
                target: None,
                rule: None,
                cosine: None,
                distance_km: None,
                note: Some(format!("{} records with conflicting links", members.len())),
            });
        }
        // Incomplete-but-consistent groups fall through silently: they are
        // the normal input of step 2.
    }

    let mut remaining: Vec<SourceRecord> = Vec::new();
    for (id, record) in std::mem::take(&mut by_id) {
        if !absorbed.contains(&id) {
            remaining.push(record);
        }
    }
    remaining.sort_by(|a, b| record_key(cfg, a).cmp(&record_key(cfg, b)));
    remaining
}

// ---------------------------------------------------------------------------
// Step 2: partial sameAs absorption

/// Absorbs every remaining record that has any `sameAs` involvement:
/// joining the first linked entity with a free slot for its source, or
/// seeding a new entity. Records without links pass through.
fn step2_partial_sameas(
    remaining: Vec<SourceRecord>,
    graph: &LinkGraph,
    cfg: &MergeConfig,
    state: &mut StepState,
) -> Vec<SourceRecord> {
    // Where each already-placed record sits, so links resolve to clusters.
    let mut cluster_of: BTreeMap<SourceId, usize> = BTreeMap::new();
    for (ix, cluster) in state.clusters.iter().enumerate() {
        for record in cluster.members.values() {
            cluster_of.insert(record.id.clone(), ix);
        }
    }

    let mut passthrough = Vec::new();
    for record in remaining {
        // `remaining` is sorted by (source rank, native id), which is
        // exactly the processing order this step requires.
        if !graph.is_linked(&record.id) {
            passthrough.push(record);
            continue;
        }
        let mut candidates: Vec<usize> = graph
            .neighbours(&record.id)
            .map(|ns| ns.iter().filter_map(|n| cluster_of.get(n).copied()).collect())
            .unwrap_or_default();
        candidates.sort_unstable();
        candidates.dedup();

        let mut joined = None;
        for ix in candidates {
            if state.clusters[ix].members.contains_key(&record.source()) {
                state.report.push(ReportEvent {
                    step: 2,
                    action: "slot_taken",
                    record: record.id.to_string(),
                    target: Some(format!("{}:{}", state.clusters[ix].key(cfg).0, state.clusters[ix].key(cfg).1)),
                    rule: None,
                    cosine: None,
                    distance_km: None,
                    note: Some("entity already holds an id for this source".into()),
                });
                continue;
            }
            joined = Some(ix);
            break;
        }

        match joined {
            Some(ix) => {
                cluster_of.insert(record.id.clone(), ix);
                state.clusters[ix].events.push(MergeEvent {
                    step: 2,
                    record: record.id.clone(),
                    rule: None,
                    cosine: None,
                    distance_km: None,
                    close_pairs: None,
                });
                state.report.push(ReportEvent {
                    step: 2,
                    action: "join",
                    record: record.id.to_string(),
                    target: None,
                    rule: None,
                    cosine: None,
                    distance_km: None,
                    note: None,
                });
                state.counters.step2_joins += 1;
                state.clusters[ix].members.insert(record.source(), record);
            }
            None => {
                cluster_of.insert(record.id.clone(), state.clusters.len());
                state.report.push(ReportEvent {
                    step: 2,
                    action: "seed",
                    record: record.id.to_string(),
                    target: None,
                    rule: None,
                    cosine: None,
                    distance_km: None,
                    note: None,
                });
                state.counters.step2_seeds += 1;
                state.clusters.push(Cluster::seed(record, true));
            }
        }
    }
    passthrough
}

// ---------------------------------------------------------------------------
// Step 3: geography-gated string matching

fn names_equal(a: Option<&str>, b: Option<&str>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => normalize_name(a) == normalize_name(b),
        _ => false,
    }
}

/// The union-find over pool slots. Roots are always the absorbing side, so
/// a slot that became part of an entity keeps pointing at it.
fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Step 3 over the pool of entities + unmerged records. Consumes the
/// unmerged records into `state.clusters` as protos; returns the slot list
/// of records that remain singletons for step 4.
fn step3_string_merge(
    remaining: Vec<SourceRecord>,
    cfg: &MergeConfig,
    mode: IndexMode,
    state: &mut StepState,
) -> Vec<usize> {
    let first_proto = state.clusters.len();
    for record in remaining {
        state.clusters.push(Cluster::seed(record, false));
    }
    let pool = &mut state.clusters;

    // One alias = one index entry, owned by the slot of its cluster.
    let mut entries: Vec<(String, String)> = Vec::new();
    let mut entry_slot: Vec<usize> = Vec::new();
    for (slot, cluster) in pool.iter().enumerate() {
        for text in cluster.alias_texts() {
            entries.push((slot.to_string(), text.to_string()));
            entry_slot.push(slot);
        }
    }
    let index = CandidateIndex::build(&entries, mode);
    let mut slot_aliases: Vec<Vec<u32>> = vec![Vec::new(); pool.len()];
    for (alias_ix, slot) in entry_slot.iter().enumerate() {
        slot_aliases[*slot].push(alias_ix as u32);
    }

    let mut parent: Vec<usize> = (0..pool.len()).collect();
    let floor = cfg.candidate_floor();

    for slot in first_proto..pool.len() {
        if find(&mut parent, slot) != slot || pool[slot].members.len() > 1 {
            continue; // already absorbed into (or grown into) an entity
        }
        let record_id = pool[slot].members.values().next().unwrap().id.clone();

        // Score every other cluster: max alias-pair cosine plus the count
        // of pairs clearing the rule-3 floor.
        let mut max_cos: BTreeMap<usize, f64> = BTreeMap::new();
        let mut close_pairs: BTreeMap<usize, u32> = BTreeMap::new();
        for query_ix in &slot_aliases[slot] {
            let query = index.vector(*query_ix);
            for (alias_ix, score) in index.scored_aliases(query) {
                let other = find(&mut parent, entry_slot[alias_ix as usize]);
                if other == slot {
                    continue;
                }
                let best = max_cos.entry(other).or_insert(0.0);
                if score > *best {
                    *best = score;
                }
                if score >= cfg.rule3_min_cosine {
                    *close_pairs.entry(other).or_insert(0) += 1;
                }
            }
        }

        let mut candidates: Vec<(usize, f64, (u8, String))> = max_cos
            .into_iter()
            .filter(|(_, score)| *score >= floor)
            .map(|(other, score)| (other, score, pool[other].key(cfg)))
            .collect();
        candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.2.cmp(&b.2)));
        if mode == IndexMode::Approximate {
            candidates.truncate(cfg.candidates);
        }

        let record = pool[slot].members.values().next().unwrap().clone();
        for (other, score, _) in candidates {
            let candidate = &pool[other];
            let rule = applicable_rule(&record, candidate, cfg);
            let evidence = match rule {
                Some(1) => {
                    let d = haversine_km(
                        record.point.unwrap(),
                        candidate.merged_point(cfg).unwrap(),
                    );
                    (score >= cfg.rule1_min_cosine && d <= cfg.rule1_max_km)
                        .then_some((1u8, Some(d), None))
                }
                Some(2) => {
                    let cities_equal = names_equal(
                        record.city.as_ref().and_then(|c| c.name.as_deref()),
                        candidate.merged_city_name(cfg),
                    );
                    let countries_equal = names_equal(
                        record.country.as_ref().and_then(|c| c.name.as_deref()),
                        candidate.merged_country_name(cfg),
                    );
                    (cities_equal && countries_equal && score >= cfg.rule2_min_cosine)
                        .then_some((2u8, None, None))
                }
                Some(3) => {
                    let countries_equal = names_equal(
                        record.country.as_ref().and_then(|c| c.name.as_deref()),
                        candidate.merged_country_name(cfg),
                    );
                    let pairs = close_pairs.get(&other).copied().unwrap_or(0);
                    (countries_equal && pairs as usize >= cfg.rule3_min_pairs)
                        .then_some((3u8, None, Some(pairs)))
                }
                _ => None,
            };
            let Some((rule, distance_km, pairs)) = evidence else {
                continue;
            };

            if pool[other].members.contains_key(&record.source()) {
                state.counters.step3_blocked += 1;
                state.report.push(ReportEvent {
                    step: 3,
                    action: "blocked",
                    record: record_id.to_string(),
                    target: Some(format!("{}:{}", pool[other].key(cfg).0, pool[other].key(cfg).1)),
                    rule: Some(rule),
                    cosine: Some(score),
                    distance_km,
                    note: Some("candidate already holds an id for this source".into()),
                });
                continue;
            }

            // Commit: absorb the record into the candidate cluster.
            parent[slot] = other;
            let (removed_source, removed_record) =
                pool[slot].members.pop_first().expect("proto has its record");
            pool[other].entity = true;
            pool[other].events.push(MergeEvent {
                step: 3,
                record: removed_record.id.clone(),
                rule: Some(rule),
                cosine: Some(score),
                distance_km,
                close_pairs: pairs,
            });
            state.report.push(ReportEvent {
                step: 3,
                action: "merge",
                record: record_id.to_string(),
                target: Some(format!("{}:{}", pool[other].key(cfg).0, pool[other].key(cfg).1)),
                rule: Some(rule),
                cosine: Some(score),
                distance_km,
                note: None,
            });
            pool[other].members.insert(removed_source, removed_record);
            match rule {
                1 => state.counters.step3_merges_rule1 += 1,
                2 => state.counters.step3_merges_rule2 += 1,
                _ => state.counters.step3_merges_rule3 += 1,
            }
            // Move the absorbed slot's index aliases to the winner so later
            // queries score against the grown cluster.
            let moved = std::mem::take(&mut slot_aliases[slot]);
            slot_aliases[other].extend(moved);
            break;
        }
    }

    (first_proto..pool.len())
        .filter(|slot| {
            let mut parent_copy = parent.clone();
            find(&mut parent_copy, *slot) == *slot && pool[*slot].members.len() == 1 && !pool[*slot].entity
        })
        .collect()
}

/// Which merge rule governs a (record, cluster) pair, decided purely by
/// which location data both sides have:
/// coordinates on both sides → rule 1; otherwise city + country names on
/// both sides → rule 2; otherwise country names on both sides → rule 3;
/// otherwise none.
fn applicable_rule(record: &SourceRecord, cluster: &Cluster, cfg: &MergeConfig) -> Option<u8> {
    let record_point = record.point.is_some();
    let cluster_point = cluster.merged_point(cfg).is_some();
    if record_point && cluster_point {
        return Some(1);
    }
    let record_city = record.city.as_ref().is_some_and(|c| c.name.is_some());
    let cluster_city = cluster.merged_city_name(cfg).is_some();
    let record_country = record.country.as_ref().is_some_and(|c| c.name.is_some());
    let cluster_country = cluster.merged_country_name(cfg).is_some();
    if record_city && cluster_city && record_country && cluster_country {
        return Some(2);
    }
    if record_country && cluster_country {
        return Some(3);
    }
    None
}

// ---------------------------------------------------------------------------
// Step 4 + assembly

/// Builds the knowledge base. The input may arrive in any order and may
/// contain duplicate ids; the output is identical either way.
pub fn build_kb(records: Vec<SourceRecord>, cfg: &MergeConfig) -> Result<BuildOutcome> {
    cfg.validate()?;
    build_kb_with_mode(records, cfg, IndexMode::Exact)
}

/// As [`build_kb`], with control over retrieval accuracy in step 3.
/// `Exact` (the default) guarantees the documented greedy semantics;
/// `Approximate` trades a bounded candidate list for speed.
pub fn build_kb_with_mode(
    records: Vec<SourceRecord>,
    cfg: &MergeConfig,
    mode: IndexMode,
) -> Result<BuildOutcome> {
    cfg.validate()?;
    let (records, duplicate_ids_dropped) = canonicalize(records, cfg);

    let mut state = StepState {
        clusters: Vec::new(),
        report: Vec::new(),
        counters: BuildCounters {
            input_records: records.len() as u64,
            duplicate_ids_dropped,
            declared_sameas_links: records.iter().map(|r| r.sameas.len() as u64).sum(),
            ..BuildCounters::default()
        },
    };
    let source_stats = per_source_stats(&records);
    let graph = LinkGraph::build(&records);

    let remaining = step1_full_sameas(records, &graph, cfg, &mut state);
    let remaining = step2_partial_sameas(remaining, &graph, cfg, &mut state);
    let residual_slots = step3_string_merge(remaining, cfg, mode, &mut state);

    for slot in residual_slots {
        state.counters.step4_singletons += 1;
        state.clusters[slot].entity = true;
        let id = state.clusters[slot].members.values().next().unwrap().id.to_string();
        state.report.push(ReportEvent {
            step: 4,
            action: "residual",
            record: id,
            target: None,
            rule: None,
            cosine: None,
            distance_km: None,
            note: None,
        });
    }

    // Assemble entities in deterministic order. Clusters that were absorbed
    // during step 3 are now empty and disappear.
    let mut finished: Vec<(Cluster, (u8, String))> = state
        .clusters
        .into_iter()
        .filter(|c| !c.members.is_empty())
        .map(|c| {
            let key = c.key(cfg);
            (c, key)
        })
        .collect();
    finished.sort_by(|a, b| a.1.cmp(&b.1));

    let entities: Vec<MergedEntity> = finished
        .into_iter()
        .enumerate()
        .map(|(ix, (cluster, _))| assemble_entity(cluster, ix + 1, cfg))
        .collect();

    let kb = KnowledgeBase::from_parts(cfg.clone(), state.counters, source_stats, entities);
    Ok(BuildOutcome { kb, report: state.report })
}

fn assemble_entity(cluster: Cluster, seq: usize, cfg: &MergeConfig) -> MergedEntity {
    let kb_id = format!("MTF{seq:08}");
    let mut ids = BTreeMap::new();
    let mut aliases = BTreeSet::new();
    let mut types = BTreeSet::new();
    for (source, record) in &cluster.members {
        ids.insert(*source, record.id.native_id.clone());
        aliases.extend(record.aliases.iter().cloned());
        types.extend(record.types.iter().copied());
    }
    MergedEntity {
        kb_id,
        ids,
        aliases,
        types,
        country: cluster.first_field(cfg, |r| r.country.clone()),
        state: cluster.first_field(cfg, |r| r.state.clone()),
        city: cluster.first_field(cfg, |r| r.city.clone()),
        zip: cluster.first_field(cfg, |r| r.zip.clone()),
        point: cluster.merged_point(cfg),
        provenance: cluster.events,
    }
}
