//! Seeded fixture generators for alignment tests.
//!
//! Fixtures are built family by family: each family picks a facility name
//! and a city, then emits one adversarial scenario — a complete sameAs
//! clique, a poisoned clique, a partial link chain, a pair that only a
//! string rule can merge, a pair that looks mergeable but is 100 km apart,
//! and so on. Names deliberately repeat across families so the trigram
//! vocabulary clears its document-frequency floor and so that merges
//! compete across family boundaries.
//!
//! Coordinates stay far away from the 1 km rule-1 boundary by
//! construction: records of the same family jitter at most ~0.3 km around
//! their city centre, and the city centres themselves are hundreds of
//! kilometres apart. This keeps the partition insensitive to which
//! haversine formulation (production `asin`, oracle `atan2`) measures the
//! pair.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use medkb_core::ingest::SourceRecord;
use medkb_core::model::{
    Alias, GeoNamesId, GeoPoint, LocationLevel, LocationRef, SemanticType, SourceId, SourceTag,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Facility names, reused across families on purpose (12 names across a
/// ~200-record fixture keeps every trigram above the document-frequency
/// floor most of the time).
pub const NAME_POOL: [&str; 12] = [
    "Sint Lucas Andreas Ziekenhuis",
    "General Hospital",
    "Saint Mary Medical Center",
    "University Children Clinic",
    "Charite Campus Mitte",
    "Hospital Universitario La Paz",
    "Centre Hospitalier Lyon Sud",
    "Ospedale San Raffaele",
    "Royal Infirmary",
    "Massachusetts General Hospital",
    "Valley Health Institute",
    "Northern Cancer Research Centre",
];

pub struct City {
    pub name: &'static str,
    pub country: &'static str,
    pub lat: f64,
    pub lon: f64,
    pub city_gn: u64,
    pub country_gn: u64,
}

pub const CITIES: [City; 8] = [
    City { name: "Amsterdam", country: "Netherlands", lat: 52.3728, lon: 4.8936, city_gn: 2759794, country_gn: 2750405 },
    City { name: "Berlin", country: "Germany", lat: 52.5200, lon: 13.4050, city_gn: 2950159, country_gn: 2921044 },
    City { name: "Lyon", country: "France", lat: 45.7640, lon: 4.8357, city_gn: 2996944, country_gn: 3017382 },
    City { name: "Milan", country: "Italy", lat: 45.4642, lon: 9.1900, city_gn: 3173435, country_gn: 3175395 },
    City { name: "Boston", country: "United States", lat: 42.3601, lon: -71.0589, city_gn: 4930956, country_gn: 6252001 },
    City { name: "Madrid", country: "Spain", lat: 40.4168, lon: -3.7038, city_gn: 3117735, country_gn: 2510769 },
    City { name: "Edinburgh", country: "United Kingdom", lat: 55.9533, lon: -3.1883, city_gn: 2650225, country_gn: 2635167 },
    City { name: "Tokyo", country: "Japan", lat: 35.6762, lon: 139.6503, city_gn: 1850144, country_gn: 1861060 },
];

const LOD: [SourceTag; 4] =
    [SourceTag::Wikidata, SourceTag::Geonames, SourceTag::Dbpedia, SourceTag::Yago];

/// Swaps two adjacent characters or drops one — a one-keystroke typo.
pub fn misspell(rng: &mut ChaCha8Rng, name: &str) -> String {
    let mut chars: Vec<char> = name.chars().collect();
    let ix = rng.gen_range(1..chars.len() - 1);
    if rng.gen_bool(0.5) {
        chars.swap(ix, ix + 1);
    } else {
        chars.remove(ix);
    }
    chars.into_iter().collect()
}

/// A different spelling of the same normalized name.
fn case_variant(rng: &mut ChaCha8Rng, name: &str) -> String {
    match rng.gen_range(0..3) {
        0 => name.to_uppercase(),
        1 => name.to_lowercase(),
        _ => name.replacen(' ', "  ", 1),
    }
}

fn native_id(source: SourceTag, serial: u64) -> String {
    match source {
        SourceTag::Wikidata => format!("Q{}", 50_000 + serial),
        SourceTag::Geonames => (8_000_000 + serial).to_string(),
        SourceTag::Dbpedia | SourceTag::Yago => format!("Fixture_{serial}"),
        SourceTag::Umls => format!("C{:07}", 2_000_000 + serial),
    }
}

/// An id that is syntactically valid but never generated, for dangling
/// sameAs claims.
fn absent_id(source: SourceTag, serial: u64) -> String {
    match source {
        SourceTag::Wikidata => format!("Q{}", 99_000_000 + serial),
        SourceTag::Geonames => (99_000_000 + serial).to_string(),
        SourceTag::Dbpedia | SourceTag::Yago => format!("Missing_{serial}"),
        SourceTag::Umls => format!("C9{:06}", serial % 1_000_000),
    }
}

fn mk(source: SourceTag, serial: u64, name: &str, rng: &mut ChaCha8Rng) -> SourceRecord {
    let lang = *[Some("en"), Some("nl"), Some("de"), Some("fr"), None, Some("en")]
        .choose(rng)
        .unwrap();
    let mut aliases = vec![Alias::new(name, lang).expect("pool names are valid aliases")];
    if rng.gen_bool(0.3) {
        aliases.push(Alias::new(case_variant(rng, name), Some("en")).unwrap());
    }
    if rng.gen_bool(0.15) {
        aliases.push(Alias::new(misspell(rng, name), None).unwrap());
    }
    let mut types = BTreeSet::new();
    types.insert(match rng.gen_range(0..4) {
        0 => SemanticType::EducationalInstitution,
        1 => SemanticType::PharmaceuticalCompany,
        _ => SemanticType::HealthcareOrganization,
    });
    if rng.gen_bool(0.15) {
        types.insert(SemanticType::HealthcareOrganization);
    }
    SourceRecord {
        id: SourceId::new(source, native_id(source, serial)).expect("generated ids are valid"),
        types,
        aliases,
        country: None,
        state: None,
        city: None,
        admin_territories: Vec::new(),
        zip: if rng.gen_bool(0.2) { Some(format!("{:05}", serial % 100_000)) } else { None },
        point: None,
        sameas: Default::default(),
    }
}

/// Jittered coordinate inside the city (≤ ~0.3 km from the centre).
fn jittered(city: &City, rng: &mut ChaCha8Rng) -> GeoPoint {
    let lat = city.lat + rng.gen_range(-0.0018..=0.0018);
    let lon = city.lon + rng.gen_range(-0.0018..=0.0018);
    GeoPoint::normalize(lat, lon).expect("city coordinates are in range")
}

fn attach_point(record: &mut SourceRecord, city: &City, rng: &mut ChaCha8Rng) {
    record.point = Some(jittered(city, rng));
}

/// Attaches city and country references with randomly varied spellings;
/// GeoNames ids ride along half of the time.
fn attach_names(record: &mut SourceRecord, city: &City, rng: &mut ChaCha8Rng, with_city: bool) {
    let id = rng.gen_bool(0.5);
    if with_city {
        record.city = LocationRef::new(
            LocationLevel::City,
            id.then_some(GeoNamesId(city.city_gn)),
            Some(case_variant(rng, city.name)),
        );
    }
    record.country = LocationRef::new(
        LocationLevel::Country,
        id.then_some(GeoNamesId(city.country_gn)),
        Some(case_variant(rng, city.country)),
    );
}

/// Distinct sources for a string-merge family, never linked by sameAs.
fn pick_sources(rng: &mut ChaCha8Rng, k: usize) -> Vec<SourceTag> {
    let mut all = SourceTag::ALL;
    all.shuffle(rng);
    all[..k].to_vec()
}

// ---------------------------------------------------------------------------
// Scenario emitters. `serial..serial+7` is reserved for one family, so ids
// never collide across families.

fn full_clique(out: &mut Vec<SourceRecord>, serial: u64, name: &str, city: &City, rng: &mut ChaCha8Rng) {
    let mut members: Vec<SourceRecord> =
        LOD.iter().enumerate().map(|(i, s)| mk(*s, serial + i as u64, name, rng)).collect();
    for i in 0..members.len() {
        for j in i + 1..members.len() {
            let target_first = rng.gen_bool(0.5);
            let (a, b) = if target_first { (i, j) } else { (j, i) };
            let claim = (members[b].source(), members[b].id.native_id.clone());
            members[a].sameas.insert(claim.0, claim.1);
        }
    }
    for m in members.iter_mut() {
        if rng.gen_bool(0.5) {
            attach_point(m, city, rng);
        }
        let with_city = rng.gen_bool(0.6);
        attach_names(m, city, rng, with_city);
    }
    if rng.gen_bool(0.6) {
        let mut umls = mk(SourceTag::Umls, serial + 4, name, rng);
        let anchor = rng.gen_range(0..members.len());
        if rng.gen_bool(0.5) {
            umls.sameas.insert(members[anchor].source(), members[anchor].id.native_id.clone());
        } else {
            members[anchor].sameas.insert(SourceTag::Umls, umls.id.native_id.clone());
        }
        out.extend(members);
        out.push(umls);
    } else {
        out.extend(members);
    }
}

/// A clique-shaped component that step 1 must reject: either one member
/// claims a wrong id for another member's source, or two records of the
/// same source hang off one hub.
fn poisoned_clique(out: &mut Vec<SourceRecord>, serial: u64, name: &str, city: &City, rng: &mut ChaCha8Rng) {
    if rng.gen_bool(0.5) {
        let mut members: Vec<SourceRecord> =
            LOD.iter().enumerate().map(|(i, s)| mk(*s, serial + i as u64, name, rng)).collect();
        for i in 1..members.len() {
            let claim = (members[i].source(), members[i].id.native_id.clone());
            members[0].sameas.insert(claim.0, claim.1);
            let hub = (members[0].source(), members[0].id.native_id.clone());
            members[i].sameas.insert(hub.0, hub.1);
        }
        for i in 1..members.len() {
            for j in i + 1..members.len() {
                let claim = (members[j].source(), members[j].id.native_id.clone());
                members[i].sameas.insert(claim.0, claim.1);
            }
        }
        // Contradiction: the yago member claims a wikidata id that is not
        // the wikidata member's.
        members[3].sameas.insert(SourceTag::Wikidata, absent_id(SourceTag::Wikidata, serial));
        for m in members.iter_mut() {
            attach_names(m, city, rng, true);
        }
        out.extend(members);
    } else {
        let mut wd_a = mk(SourceTag::Wikidata, serial, name, rng);
        let mut wd_b = mk(SourceTag::Wikidata, serial + 1, name, rng);
        let gn = mk(SourceTag::Geonames, serial + 2, name, rng);
        wd_a.sameas.insert(SourceTag::Geonames, gn.id.native_id.clone());
        wd_b.sameas.insert(SourceTag::Geonames, gn.id.native_id.clone());
        out.extend([wd_a, wd_b, gn]);
    }
}

fn partial_chain(out: &mut Vec<SourceRecord>, serial: u64, name: &str, city: &City, rng: &mut ChaCha8Rng) {
    let k = rng.gen_range(2..=3);
    let mut sources = LOD.to_vec();
    sources.shuffle(&mut *rng);
    let mut members: Vec<SourceRecord> =
        sources[..k].iter().enumerate().map(|(i, s)| mk(*s, serial + i as u64, name, rng)).collect();
    for i in 1..members.len() {
        let claim = (members[i].source(), members[i].id.native_id.clone());
        members[i - 1].sameas.insert(claim.0, claim.1);
    }
    for m in members.iter_mut() {
        if rng.gen_bool(0.4) {
            attach_point(m, city, rng);
        }
        let with_city = rng.gen_bool(0.5);
        attach_names(m, city, rng, with_city);
    }
    if rng.gen_bool(0.4) {
        let mut umls = mk(SourceTag::Umls, serial + 4, name, rng);
        umls.sameas.insert(members[0].source(), members[0].id.native_id.clone());
        out.extend(members);
        out.push(umls);
    } else {
        out.extend(members);
    }
}

fn dangling_link(out: &mut Vec<SourceRecord>, serial: u64, name: &str, city: &City, rng: &mut ChaCha8Rng) {
    let source = *SourceTag::ALL.choose(rng).unwrap();
    let mut record = mk(source, serial, name, rng);
    let target = *SourceTag::ALL
        .iter()
        .copied()
        .filter(|s| *s != source)
        .collect::<Vec<_>>()
        .choose(rng)
        .unwrap();
    record.sameas.insert(target, absent_id(target, serial));
    if rng.gen_bool(0.5) {
        attach_point(&mut record, city, rng);
    }
    attach_names(&mut record, city, rng, true);
    out.push(record);
}

/// Same name, same city block, coordinates on both sides: rule 1 decides.
fn nearby_pair(out: &mut Vec<SourceRecord>, serial: u64, name: &str, city: &City, rng: &mut ChaCha8Rng) {
    let k = rng.gen_range(2..=3);
    for (i, source) in pick_sources(rng, k).into_iter().enumerate() {
        let text = if i > 0 && rng.gen_bool(0.3) { misspell(rng, name) } else { name.to_string() };
        let mut record = mk(source, serial + i as u64, &text, rng);
        attach_point(&mut record, city, rng);
        if rng.gen_bool(0.5) {
            let with_city = rng.gen_bool(0.5);
            attach_names(&mut record, city, rng, with_city);
        }
        out.push(record);
    }
}

/// No coordinates anywhere, but city and country names on both sides:
/// rule 2 decides.
fn named_city_pair(out: &mut Vec<SourceRecord>, serial: u64, name: &str, city: &City, rng: &mut ChaCha8Rng) {
    for (i, source) in pick_sources(rng, 2).into_iter().enumerate() {
        let mut record = mk(source, serial + i as u64, name, rng);
        attach_names(&mut record, city, rng, true);
        out.push(record);
    }
}

/// Country names only, three aliases that agree nearly verbatim on each
/// side: rule 3 decides.
fn country_only_pair(out: &mut Vec<SourceRecord>, serial: u64, name: &str, city: &City, rng: &mut ChaCha8Rng) {
    for (i, source) in pick_sources(rng, 2).into_iter().enumerate() {
        let mut record = mk(source, serial + i as u64, name, rng);
        record.aliases = vec![
            Alias::new(name, Some("en")).unwrap(),
            Alias::new(name.to_uppercase(), Some("de")).unwrap(),
            Alias::new(name.to_lowercase(), None).unwrap(),
        ];
        attach_names(&mut record, city, rng, false);
        out.push(record);
    }
}

/// Identical names in cities hundreds of kilometres apart — rule 1 must
/// keep them separate.
fn distant_pair(out: &mut Vec<SourceRecord>, serial: u64, name: &str, city_ix: usize, rng: &mut ChaCha8Rng) {
    let other = &CITIES[(city_ix + 1 + rng.gen_range(0..CITIES.len() - 1)) % CITIES.len()];
    for (i, (source, city)) in pick_sources(rng, 2)
        .into_iter()
        .zip([&CITIES[city_ix], other])
        .enumerate()
    {
        let mut record = mk(source, serial + i as u64, name, rng);
        attach_point(&mut record, city, rng);
        let with_city = rng.gen_bool(0.5);
        attach_names(&mut record, city, rng, with_city);
        out.push(record);
    }
}

/// Two records of the *same* source plus one mergeable neighbour: the
/// second same-source record must end up blocked.
fn slot_conflict(out: &mut Vec<SourceRecord>, serial: u64, name: &str, city: &City, rng: &mut ChaCha8Rng) {
    let source = *SourceTag::ALL.choose(rng).unwrap();
    let partner = *SourceTag::ALL
        .iter()
        .copied()
        .filter(|s| *s != source)
        .collect::<Vec<_>>()
        .choose(rng)
        .unwrap();
    for (i, s) in [source, source, partner].into_iter().enumerate() {
        let mut record = mk(s, serial + i as u64, name, rng);
        attach_point(&mut record, city, rng);
        out.push(record);
    }
}

/// The same (source, id) emitted twice with different payloads; the
/// canonical run keeps exactly one of them.
fn duplicate_id(out: &mut Vec<SourceRecord>, serial: u64, name: &str, city: &City, rng: &mut ChaCha8Rng) {
    let source = *SourceTag::ALL.choose(rng).unwrap();
    let first = mk(source, serial, name, rng);
    let mut second = first.clone();
    second.aliases = vec![Alias::new(case_variant(rng, name), Some("en")).unwrap()];
    attach_names(&mut second, city, rng, true);
    out.push(first);
    out.push(second);
}

/// No links and no location at all: nothing can merge it.
fn bare_singleton(out: &mut Vec<SourceRecord>, serial: u64, name: &str, rng: &mut ChaCha8Rng) {
    let source = *SourceTag::ALL.choose(rng).unwrap();
    out.push(mk(source, serial, name, rng));
}

/// A deterministic adversarial fixture of (at least nearly) `n` records.
pub fn records(seed: u64, n: usize) -> Vec<SourceRecord> {
    let mut rng = rng(seed);
    let mut out: Vec<SourceRecord> = Vec::new();
    let mut family = 0u64;
    while out.len() < n {
        let serial = family * 8 + 1;
        let name = NAME_POOL[rng.gen_range(0..NAME_POOL.len())];
        let city_ix = rng.gen_range(0..CITIES.len());
        let city = &CITIES[city_ix];
        match rng.gen_range(0..100) {
            0..=11 => full_clique(&mut out, serial, name, city, &mut rng),
            12..=21 => poisoned_clique(&mut out, serial, name, city, &mut rng),
            22..=33 => partial_chain(&mut out, serial, name, city, &mut rng),
            34..=41 => dangling_link(&mut out, serial, name, city, &mut rng),
            42..=55 => nearby_pair(&mut out, serial, name, city, &mut rng),
            56..=67 => named_city_pair(&mut out, serial, name, city, &mut rng),
            68..=75 => country_only_pair(&mut out, serial, name, city, &mut rng),
            76..=83 => distant_pair(&mut out, serial, name, city_ix, &mut rng),
            84..=89 => slot_conflict(&mut out, serial, name, city, &mut rng),
            90..=94 => duplicate_id(&mut out, serial, name, city, &mut rng),
            _ => bare_singleton(&mut out, serial, name, &mut rng),
        }
        family += 1;
    }
    out.truncate(n);

    // A few stray cross-family claims to tangle the link graph. `or_insert`
    // keeps scenario-internal claims intact.
    for _ in 0..out.len() / 50 {
        let from = rng.gen_range(0..out.len());
        let to = rng.gen_range(0..out.len());
        if out[from].id.source != out[to].id.source {
            let claim = (out[to].id.source, out[to].id.native_id.clone());
            out[from].sameas.entry(claim.0).or_insert(claim.1);
        }
    }
    out
}

/// The same records in a different order.
pub fn shuffled(seed: u64, records: &[SourceRecord]) -> Vec<SourceRecord> {
    let mut out = records.to_vec();
    out.shuffle(&mut rng(seed));
    out
}
