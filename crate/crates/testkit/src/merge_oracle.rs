//! Exhaustive reference implementation of the four alignment steps, built
//! for clarity over speed: clusters are plain record vectors, candidate
//! scoring walks every alias pair of every cluster, and there is no index,
//! no union-find and no pruning. Given the same records and configuration
//! it must produce exactly the same entity partition as the production
//! pipeline.

use std::collections::{BTreeMap, BTreeSet};

use medkb_core::align::MergeConfig;
use medkb_core::ingest::SourceRecord;
use medkb_core::model::{SourceId, SourceTag};
use medkb_core::normalize::normalize_name;
use medkb_core::textmatch::MIN_DOC_FREQ;

use crate::geo_oracle::haversine_atan2_km;
use crate::tfidf_oracle::{cosine, OracleSpace};

type Cluster = Vec<SourceRecord>;

fn rank(cfg: &MergeConfig, source: SourceTag) -> u8 {
    cfg.source_order.iter().position(|s| *s == source).unwrap() as u8
}

fn cluster_key(cfg: &MergeConfig, cluster: &Cluster) -> (u8, String) {
    cluster
        .iter()
        .map(|r| (rank(cfg, r.source()), r.id.native_id.clone()))
        .min()
        .expect("clusters are never empty")
}

/// First member, in configured source order, for which `get` yields a value.
fn first_field<'a, T>(
    cfg: &MergeConfig,
    cluster: &'a Cluster,
    get: impl Fn(&'a SourceRecord) -> Option<T>,
) -> Option<T> {
    cfg.source_order
        .iter()
        .filter_map(|s| cluster.iter().find(|r| r.source() == *s))
        .find_map(get)
}

fn names_equal(a: Option<&str>, b: Option<&str>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => normalize_name(a) == normalize_name(b),
        _ => false,
    }
}

fn canonicalize(records: &[SourceRecord], cfg: &MergeConfig) -> Vec<SourceRecord> {
    let mut keyed: Vec<(u8, String, String, SourceRecord)> = records
        .iter()
        .map(|r| {
            (
                rank(cfg, r.source()),
                r.id.native_id.clone(),
                serde_json::to_string(r).unwrap(),
                r.clone(),
            )
        })
        .collect();
    keyed.sort_by(|a, b| (a.0, &a.1, &a.2).cmp(&(b.0, &b.1, &b.2)));
    let mut out: Vec<SourceRecord> = Vec::new();
    for (_, _, _, record) in keyed {
        if out.last().map(|p| p.id == record.id) != Some(true) {
            out.push(record);
        }
    }
    out
}

/// The entity partition the four-step alignment should produce.
pub fn partition(records: &[SourceRecord], cfg: &MergeConfig) -> BTreeSet<BTreeSet<SourceId>> {
    let records = canonicalize(records, cfg);
    let present: BTreeSet<SourceId> = records.iter().map(|r| r.id.clone()).collect();

    // Symmetric link view among records actually present, plus the set of
    // records with any sameAs involvement (even a dangling declaration).
    let mut edges: BTreeMap<SourceId, BTreeSet<SourceId>> = BTreeMap::new();
    let mut linked: BTreeSet<SourceId> = BTreeSet::new();
    for r in &records {
        if !r.sameas.is_empty() {
            linked.insert(r.id.clone());
        }
        for (source, native_id) in &r.sameas {
            let target = SourceId { source: *source, native_id: native_id.clone() };
            if present.contains(&target) {
                linked.insert(target.clone());
                edges.entry(r.id.clone()).or_default().insert(target.clone());
                edges.entry(target).or_default().insert(r.id.clone());
            }
        }
    }
    let connected = |a: &SourceId, b: &SourceId| edges.get(a).is_some_and(|n| n.contains(b));

    // Step 1: full-coverage cliques over the LOD records.
    let present_lod: BTreeSet<SourceTag> =
        records.iter().map(|r| r.source()).filter(|s| s.is_lod()).collect();
    let by_id: BTreeMap<SourceId, &SourceRecord> =
        records.iter().map(|r| (r.id.clone(), r)).collect();

    let mut clusters: Vec<Cluster> = Vec::new();
    let mut absorbed: BTreeSet<SourceId> = BTreeSet::new();
    if present_lod.len() >= 2 {
        let mut seen: BTreeSet<SourceId> = BTreeSet::new();
        let mut components: Vec<Vec<SourceId>> = Vec::new();
        for id in by_id.keys().filter(|id| id.source.is_lod()) {
            if seen.contains(id) {
                continue;
            }
            let mut stack = vec![id.clone()];
            let mut members = Vec::new();
            seen.insert(id.clone());
            while let Some(current) = stack.pop() {
                members.push(current.clone());
                for n in edges.get(&current).into_iter().flatten() {
                    if n.source.is_lod() && by_id.contains_key(n) && seen.insert(n.clone()) {
                        stack.push(n.clone());
                    }
                }
            }
            members.sort();
            components.push(members);
        }
        components.sort();

        for members in components {
            if members.len() < 2 {
                continue;
            }
            let sources: Vec<SourceTag> = members.iter().map(|m| m.source).collect();
            let distinct: BTreeSet<SourceTag> = sources.iter().copied().collect();
            let covers = distinct == present_lod && distinct.len() == sources.len();
            let pairwise = members
                .iter()
                .enumerate()
                .all(|(i, a)| members[i + 1..].iter().all(|b| connected(a, b)));
            let consistent = members.iter().all(|id| {
                members.iter().all(|other| {
                    other == id
                        || by_id[id]
                            .sameas
                            .get(&other.source)
                            .map(|claim| *claim == other.native_id)
                            != Some(false)
                })
            });
            if covers && pairwise && consistent {
                clusters.push(members.iter().map(|id| by_id[id].clone()).collect());
                absorbed.extend(members);
            }
        }
    }

    // Step 2: linked records join the first (oldest) linked cluster with a
    // free slot for their source, or seed a new cluster; link-less records
    // fall through to the string-matching pool.
    let mut remaining: Vec<&SourceRecord> =
        records.iter().filter(|r| !absorbed.contains(&r.id)).collect();
    remaining.sort_by_key(|r| (rank(cfg, r.source()), r.id.native_id.clone()));

    let mut pool3: Vec<SourceRecord> = Vec::new();
    for record in remaining {
        if !linked.contains(&record.id) {
            pool3.push(record.clone());
            continue;
        }
        let mut joined = false;
        for cluster in clusters.iter_mut() {
            let is_linked_here = cluster.iter().any(|m| connected(&record.id, &m.id));
            let slot_free = cluster.iter().all(|m| m.source() != record.source());
            if is_linked_here && slot_free {
                cluster.push(record.clone());
                joined = true;
                break;
            }
        }
        if !joined {
            clusters.push(vec![record.clone()]);
        }
    }

    // Step 3: every link-less record, in order, against every other pool
    // cluster, gated by the rule its location data selects.
    let first_proto = clusters.len();
    for record in pool3 {
        clusters.push(vec![record]);
    }
    let corpus: Vec<String> = clusters
        .iter()
        .flat_map(|c| c.iter().flat_map(|r| r.aliases.iter().map(|a| a.text.clone())))
        .collect();
    let space = OracleSpace::build(&corpus, MIN_DOC_FREQ);
    let floor = cfg.rule1_min_cosine.min(cfg.rule2_min_cosine).min(cfg.rule3_min_cosine);

    for slot in first_proto..clusters.len() {
        if clusters[slot].len() != 1 {
            continue; // absorbed elsewhere, or already grown into an entity
        }
        let record = clusters[slot][0].clone();
        let record_vectors: Vec<BTreeMap<String, f64>> =
            record.aliases.iter().map(|a| space.vector(&a.text)).collect();

        let mut candidates: Vec<(usize, f64, u32, (u8, String))> = Vec::new();
        for (other, cluster) in clusters.iter().enumerate() {
            if other == slot || cluster.is_empty() {
                continue;
            }
            let mut max_cos = 0.0f64;
            let mut close_pairs = 0u32;
            for qv in &record_vectors {
                for alias in cluster.iter().flat_map(|r| &r.aliases) {
                    let score = cosine(qv, &space.vector(&alias.text));
                    if score > max_cos {
                        max_cos = score;
                    }
                    if score >= cfg.rule3_min_cosine {
                        close_pairs += 1;
                    }
                }
            }
            if max_cos >= floor {
                candidates.push((other, max_cos, close_pairs, cluster_key(cfg, cluster)));
            }
        }
        candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.3.cmp(&b.3)));

        for (other, score, close_pairs, _) in candidates {
            let cluster = &clusters[other];
            let cluster_point = first_field(cfg, cluster, |r| r.point);
            let cluster_city =
                first_field(cfg, cluster, |r| r.city.as_ref().and_then(|c| c.name.clone()));
            let cluster_country =
                first_field(cfg, cluster, |r| r.country.as_ref().and_then(|c| c.name.clone()));
            let record_city = record.city.as_ref().and_then(|c| c.name.as_deref());
            let record_country = record.country.as_ref().and_then(|c| c.name.as_deref());

            let passes = if record.point.is_some() && cluster_point.is_some() {
                let a = record.point.unwrap();
                let b = cluster_point.unwrap();
                score >= cfg.rule1_min_cosine
                    && haversine_atan2_km((a.lat(), a.lon()), (b.lat(), b.lon()))
                        <= cfg.rule1_max_km
            } else if record_city.is_some()
                && cluster_city.is_some()
                && record_country.is_some()
                && cluster_country.is_some()
            {
                names_equal(record_city, cluster_city.as_deref())
                    && names_equal(record_country, cluster_country.as_deref())
                    && score >= cfg.rule2_min_cosine
            } else if record_country.is_some() && cluster_country.is_some() {
                names_equal(record_country, cluster_country.as_deref())
                    && close_pairs as usize >= cfg.rule3_min_pairs
            } else {
                false
            };
            if !passes {
                continue;
            }
            if clusters[other].iter().any(|m| m.source() == record.source()) {
                continue; // one-to-one: try the next candidate
            }
            let record = clusters[slot].pop().unwrap();
            clusters[other].push(record);
            break;
        }
    }

    // Step 4 is implicit: whatever is left stands alone.
    clusters
        .into_iter()
        .filter(|c| !c.is_empty())
        .map(|c| c.into_iter().map(|r| r.id).collect())
        .collect()
}
