//! Linking clinical-trial site mentions to knowledge-base entities.
//!
//! Registry dumps identify trial sites by free-text name plus coarse
//! location fields. Many of those names denote no particular facility —
//! generic ("Hospital") or deliberately anonymized ("Novartis Facility #1")
//! — and are diverted by wildcard patterns before any matching happens.
//! The rest are matched against entity aliases by trigram TF-IDF cosine,
//! kept above a strict 0.7 threshold, filtered for location compatibility,
//! and assigned one-to-one greedily by descending score.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::KnowledgeBase;
use crate::error::{Error, Result};
use crate::normalize::normalize_name;
use crate::textmatch::{CandidateIndex, IndexMode};

/// One distinct site mention from a trial registry. The identity of a site
/// is the (raw_name, city, zip, state, country) tuple; `trial_id` records
/// the first trial that mentioned it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSite {
    pub trial_id: String,
    pub raw_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub city: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zip: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country: Option<String>,
}

impl TrialSite {
    /// The distinctness and sort key (everything but the trial id).
    pub fn tuple_key(&self) -> (&str, Option<&str>, Option<&str>, Option<&str>, Option<&str>) {
        (
            self.raw_name.as_str(),
            self.city.as_deref(),
            self.zip.as_deref(),
            self.state.as_deref(),
            self.country.as_deref(),
        )
    }
}

/// A `%`-wildcard pattern flagging vague site names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VaguePattern {
    pub pattern: String,
    pub label: String,
}

impl VaguePattern {
    pub fn new(pattern: &str) -> VaguePattern {
        VaguePattern { pattern: pattern.to_string(), label: pattern.to_string() }
    }
}

/// The published pattern table, in table order (first match wins).
pub fn default_vague_patterns() -> Vec<VaguePattern> {
    [
        "%Investigational Site%",
        "%Facility #%",
        "%Investigative Site%",
        "%Hospital #%",
        "%Research Site%",
        "Site%",
        "Local Ins%",
        "Local Inv%",
        "Local Hosp%",
        "Hospital Local%",
        "%local%office%",
        "%local%information%",
        "%local%authority of%",
        "Azienda%Sanitaria Locale%",
        "Local primary school%",
    ]
    .into_iter()
    .map(VaguePattern::new)
    .collect()
}

/// Case-insensitive SQL-LIKE match: `%` spans any (possibly empty)
/// character run; everything else is literal. A pattern without a leading
/// `%` anchors at the start, without a trailing `%` at the end.
pub fn wildcard_match(name: &str, pattern: &str) -> bool {
    let name = name.to_lowercase();
    let pattern = pattern.to_lowercase();
    let anchored_start = !pattern.starts_with('%');
    let anchored_end = !pattern.ends_with('%');
    let segments: Vec<&str> = pattern.split('%').filter(|s| !s.is_empty()).collect();
    if segments.is_empty() {
        // A pattern of only wildcards matches anything; an empty pattern
        // matches only the empty name.
        return !anchored_start || name.is_empty();
    }
    let mut pos = 0usize;
    for (i, seg) in segments.iter().enumerate() {
        let last = i == segments.len() - 1;
        if i == 0 && anchored_start {
            if !name.starts_with(seg) {
                return false;
            }
            pos = seg.len();
            if last && anchored_end {
                return pos == name.len();
            }
            continue;
        }
        if last && anchored_end {
            return name.len() >= pos + seg.len() && name.ends_with(seg);
        }
        match name[pos..].find(seg) {
            Some(off) => pos += off + seg.len(),
            None => return false,
        }
    }
    true
}

/// First matching pattern's label, in the given order.
pub fn detect_vague<'a>(name: &str, patterns: &'a [VaguePattern]) -> Option<&'a str> {
    patterns
        .iter()
        .find(|p| wildcard_match(name, &p.pattern))
        .map(|p| p.label.as_str())
}

/// The distinct sites of a registry dump plus mention bookkeeping.
#[derive(Debug, Clone, Default)]
pub struct RegistryDump {
    /// Distinct (name, city, zip, state, country) tuples, sorted by tuple,
    /// each with its mention count.
    pub sites: Vec<(TrialSite, u64)>,
    pub mentions: u64,
    pub distinct_trials: u64,
    pub skipped_rows: u64,
}

impl RegistryDump {
    pub fn distinct_sites(&self) -> Vec<TrialSite> {
        self.sites.iter().map(|(s, _)| s.clone()).collect()
    }
}

/// Parses a registry dump: a delimited file with header
/// `trial_id,facility_name,city,zip,state,country`. Rows without a
/// facility name (and rows with the wrong shape) are skipped and counted.
pub fn parse_registry_dump(path: &std::path::Path, delimiter: u8) -> Result<RegistryDump> {
    let file = std::fs::File::open(path).map_err(|source| Error::UnreadableFile {
        path: path.to_path_buf(),
        source,
    })?;
    parse_registry_dump_reader(file, delimiter)
}

pub fn parse_registry_dump_reader(reader: impl std::io::Read, delimiter: u8) -> Result<RegistryDump> {
    let mut csv = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);

    let mut dump = RegistryDump::default();
    let mut distinct: BTreeMap<(String, Option<String>, Option<String>, Option<String>, Option<String>), (TrialSite, u64)> =
        BTreeMap::new();
    let mut trials: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();

    for row in csv.records() {
        let Ok(row) = row else {
            dump.skipped_rows += 1;
            continue;
        };
        let field = |ix: usize| -> Option<String> {
            row.get(ix).map(str::trim).filter(|s| !s.is_empty()).map(str::to_string)
        };
        let (Some(trial_id), Some(raw_name)) = (field(0), field(1)) else {
            dump.skipped_rows += 1;
            continue;
        };
        let site = TrialSite {
            trial_id,
            raw_name,
            city: field(2),
            zip: field(3),
            state: field(4),
            country: field(5),
        };
        dump.mentions += 1;
        trials.insert(site.trial_id.clone());
        let key = (
            site.raw_name.clone(),
            site.city.clone(),
            site.zip.clone(),
            site.state.clone(),
            site.country.clone(),
        );
        distinct.entry(key).or_insert_with(|| (site, 0)).1 += 1;
    }
    dump.distinct_trials = trials.len() as u64;
    dump.sites = distinct.into_values().collect();
    Ok(dump)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkMethod {
    #[serde(rename = "STRING_MATCH")]
    StringMatch,
}

/// A one-to-one link between a distinct site tuple and an entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSiteLink {
    pub site: TrialSite,
    pub kb_id: String,
    pub score: f64,
    pub method: LinkMethod,
}

/// The three-way partition of the distinct input sites.
#[derive(Debug, Clone, Default)]
pub struct LinkOutcome {
    pub links: Vec<TrialSiteLink>,
    pub unmatched: Vec<TrialSite>,
    pub vague: Vec<(TrialSite, String)>,
}

/// An alias index over the knowledge base, owners keyed by `kb_id`.
pub fn kb_alias_index(kb: &KnowledgeBase, mode: IndexMode) -> CandidateIndex {
    let entries: Vec<(String, String)> = kb
        .entities
        .iter()
        .flat_map(|e| e.aliases.iter().map(|a| (e.kb_id.clone(), a.text.clone())))
        .collect();
    CandidateIndex::build(&entries, mode)
}

fn location_compatible(site: &TrialSite, entity: &crate::align::MergedEntity) -> bool {
    let agree = |a: Option<&str>, b: Option<&str>| match (a, b) {
        (Some(a), Some(b)) => normalize_name(a) == normalize_name(b),
        _ => true, // absent on either side does not block
    };
    agree(site.country.as_deref(), entity.country.as_ref().and_then(|c| c.name.as_deref()))
        && agree(site.city.as_deref(), entity.city.as_ref().and_then(|c| c.name.as_deref()))
}

/// Links distinct sites to entities. Vague names are diverted first; the
/// rest take the best location-compatible candidate with cosine strictly
/// above `threshold`; assignment is one-to-one, greedy in descending score
/// with (site tuple, kb_id) tie-breaks. Returns an exact partition of the
/// input sites.
pub fn link_sites(
    sites: &[TrialSite],
    kb: &KnowledgeBase,
    index: &CandidateIndex,
    patterns: &[VaguePattern],
    threshold: f64,
) -> LinkOutcome {
    let mut outcome = LinkOutcome::default();

    // Vague diversion, then candidate scoring, both per site and
    // independent — scored in parallel, committed sequentially.
    #[derive(Debug)]
    enum Scored {
        Vague(String),
        Candidates(Vec<(String, f64)>),
    }
    let scored: Vec<Scored> = sites
        .par_iter()
        .map(|site| {
            if let Some(label) = detect_vague(&site.raw_name, patterns) {
                return Scored::Vague(label.to_string());
            }
            let query = index.vectorize_query(&site.raw_name);
            let mut best: BTreeMap<&str, f64> = BTreeMap::new();
            for (alias_ix, score) in index.scored_aliases(&query) {
                let owner = index.owner(alias_ix);
                let entry = best.entry(owner).or_insert(0.0);
                if score > *entry {
                    *entry = score;
                }
            }
            let mut candidates: Vec<(String, f64)> = best
                .into_iter()
                .filter(|(owner, score)| {
                    *score > threshold
                        && kb
                            .entities
                            .binary_search_by(|e| e.kb_id.as_str().cmp(owner))
                            .map(|ix| location_compatible(site, &kb.entities[ix]))
                            .unwrap_or(false)
                })
                .map(|(owner, score)| (owner.to_string(), score))
                .collect();
            candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            Scored::Candidates(candidates)
        })
        .collect();

    // Greedy one-to-one assignment over the global candidate list.
    let mut order: Vec<usize> = (0..sites.len()).collect();
    order.sort_by(|a, b| sites[*a].tuple_key().cmp(&sites[*b].tuple_key()));
    let mut proposals: Vec<(f64, usize, &str)> = Vec::new();
    for site_ix in &order {
        if let Scored::Candidates(candidates) = &scored[*site_ix] {
            for (kb_id, score) in candidates {
                proposals.push((*score, *site_ix, kb_id.as_str()));
            }
        }
    }
    proposals.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| sites[a.1].tuple_key().cmp(&sites[b.1].tuple_key()))
            .then_with(|| a.2.cmp(b.2))
    });

    let mut site_assigned: Vec<Option<(String, f64)>> = vec![None; sites.len()];
    let mut taken_entities: std::collections::BTreeSet<&str> = std::collections::BTreeSet::new();
    for (score, site_ix, kb_id) in proposals {
        if site_assigned[site_ix].is_some() || taken_entities.contains(kb_id) {
            continue;
        }
        taken_entities.insert(kb_id);
        site_assigned[site_ix] = Some((kb_id.to_string(), score));
    }

    for site_ix in order {
        match &scored[site_ix] {
            Scored::Vague(label) => outcome.vague.push((sites[site_ix].clone(), label.clone())),
            Scored::Candidates(_) => match site_assigned[site_ix].take() {
                Some((kb_id, score)) => outcome.links.push(TrialSiteLink {
                    site: sites[site_ix].clone(),
                    kb_id,
                    score,
                    method: LinkMethod::StringMatch,
                }),
                None => outcome.unmatched.push(sites[site_ix].clone()),
            },
        }
    }
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::{BuildCounters, MergeConfig, MergedEntity};
    use crate::model::{Alias, LocationLevel, LocationRef, SemanticType, SourceTag};
    use std::collections::BTreeSet;

    #[test]
    fn wildcard_semantics() {
        assert!(wildcard_match("Pfizer Investigational Site", "%Investigational Site%"));
        assert!(wildcard_match("Site 128", "Site%"));
        assert!(!wildcard_match("Offsite Clinic", "Site%")); // anchored start
        assert!(wildcard_match("exact", "exact"));
        assert!(!wildcard_match("exactly", "exact")); // anchored both ends
        assert!(wildcard_match("a big local head office here", "%local%office%"));
        assert!(!wildcard_match("office local", "%local%office%")); // order matters
        assert!(wildcard_match("ab", "a%b"));
        assert!(!wildcard_match("a", "a%a")); // segments cannot overlap
        assert!(wildcard_match("anything", "%"));
        assert!(wildcard_match("", "%"));
        assert!(!wildcard_match("x", ""));
        assert!(wildcard_match("CASE insensitive MATCH", "case%match"));
    }

    #[test]
    fn table_examples_hit_their_pattern() {
        let patterns = default_vague_patterns();
        for (name, expected) in [
            ("Pfizer Investigational Site", "%Investigational Site%"),
            ("Novartis Facility #1", "%Facility #%"),
            ("Facility # 1", "%Facility #%"),
            ("Moscow City Hospital # 29", "%Hospital #%"),
            ("City Clinical Hospital #8", "%Hospital #%"),
            ("Research Site 1", "%Research Site%"),
            ("CAPRISA, Vulindlela Clinical Research Site", "%Research Site%"),
            ("Site 128", "Site%"),
            ("Site # 3 OLVG Amsterdam", "Site%"),
            ("Local Institution", "Local Ins%"),
            ("Local Instiution", "Local Ins%"),
            ("Local Investigator", "Local Inv%"),
            ("Local Hospitals", "Local Hosp%"),
            ("Hospital Local Palos Blancos", "Hospital Local%"),
            ("Hospital local de Yopal E.S.E", "Hospital Local%"),
            ("Local Medical Information Office", "%local%office%"),
            ("Pfizer Japan Local Country Office", "%local%office%"),
            ("Local Health Authority of Reggio Emilia-IRCCS", "%local%authority of%"),
            ("Azienda Sanitaria Locale Brindisi", "Azienda%Sanitaria Locale%"),
            ("Azienda Unità Sanitaria Locale di Reggio Emilia", "Azienda%Sanitaria Locale%"),
            ("Local primary schools", "Local primary school%"),
        ] {
            assert_eq!(detect_vague(name, &patterns), Some(expected), "for {name:?}");
        }
    }

    #[test]
    fn genuine_names_are_not_vague() {
        let patterns = default_vague_patterns();
        for name in [
            "Memorial Sloan Kettering Cancer Center",
            "MD Anderson Cancer Center",
            "Boehringer Ingelheim",
            "Academisch Medisch Centrum",
            "University of Michigan",
        ] {
            assert_eq!(detect_vague(name, &patterns), None, "for {name:?}");
        }
    }

    #[test]
    fn registry_parse_dedupes_with_multiplicity() {
        let csv = "trial_id,facility_name,city,zip,state,country\n\
                   NCT001,General Hospital,Amsterdam,,,Netherlands\n\
                   NCT002,General Hospital,Amsterdam,,,Netherlands\n\
                   NCT002,Other Clinic,,,,\n\
                   NCT003,,Rotterdam,,,Netherlands\n";
        let dump = parse_registry_dump_reader(csv.as_bytes(), b',').unwrap();
        assert_eq!(dump.mentions, 3);
        assert_eq!(dump.skipped_rows, 1); // the nameless row
        assert_eq!(dump.distinct_trials, 2);
        assert_eq!(dump.sites.len(), 2);
        let counts: Vec<u64> = dump.sites.iter().map(|(_, n)| *n).collect();
        assert_eq!(counts, vec![2, 1]);
        // The first mention's trial id sticks to the deduplicated tuple.
        assert_eq!(dump.sites[0].0.trial_id, "NCT001");
    }

    #[test]
    fn registry_parse_skips_malformed_rows() {
        let csv = "trial_id,facility_name,city,zip,state,country\n\
                   NCT001,Clinic A,Amsterdam,,,Netherlands\n\
                   NCT002,too,few\n";
        let dump = parse_registry_dump_reader(csv.as_bytes(), b',').unwrap();
        assert_eq!(dump.sites.len(), 1);
        assert_eq!(dump.skipped_rows, 1);
    }

    fn kb_of(names_and_countries: &[(&str, Option<&str>)]) -> KnowledgeBase {
        let entities = names_and_countries
            .iter()
            .enumerate()
            .map(|(ix, (name, country))| MergedEntity {
                kb_id: format!("MTF{:08}", ix + 1),
                ids: [(SourceTag::Umls, format!("C{:07}", ix + 1))].into_iter().collect(),
                aliases: BTreeSet::from([Alias::new(*name, None).unwrap()]),
                types: BTreeSet::from([SemanticType::HealthcareOrganization]),
                country: country.and_then(|c| {
                    LocationRef::new(LocationLevel::Country, None, Some(c.into()))
                }),
                state: None,
                city: None,
                zip: None,
                point: None,
                provenance: vec![],
            })
            .collect();
        KnowledgeBase::from_parts(
            MergeConfig::default(),
            BuildCounters::default(),
            BTreeMap::new(),
            entities,
        )
    }

    fn site(name: &str, city: Option<&str>, country: Option<&str>) -> TrialSite {
        TrialSite {
            trial_id: "NCT0".into(),
            raw_name: name.into(),
            city: city.map(str::to_string),
            zip: None,
            state: None,
            country: country.map(str::to_string),
        }
    }

    /// Eleven same-name entities so the name's trigrams clear the
    /// document-frequency floor of the TF-IDF vocabulary.
    fn testville_kb(country: Option<&str>) -> KnowledgeBase {
        let rows: Vec<(&str, Option<&str>)> =
            (0..11).map(|_| ("University of Testville Hospital", country)).collect();
        kb_of(&rows)
    }

    #[test]
    fn typo_still_links_above_threshold() {
        let kb = testville_kb(Some("Netherlands"));
        let index = kb_alias_index(&kb, IndexMode::Exact);
        let sites = vec![site("Universty of Testville Hospital", None, Some("Netherlands"))];
        let out = link_sites(&sites, &kb, &index, &default_vague_patterns(), 0.7);
        assert_eq!(out.links.len(), 1);
        assert!(out.links[0].score > 0.7);
        assert_eq!(out.links[0].kb_id, "MTF00000001"); // tie broken by kb_id
        assert!(out.unmatched.is_empty() && out.vague.is_empty());
    }

    #[test]
    fn conflicting_country_blocks_the_link() {
        let kb = testville_kb(Some("Belgium"));
        let index = kb_alias_index(&kb, IndexMode::Exact);
        let sites = vec![site("University of Testville Hospital", None, Some("Netherlands"))];
        let out = link_sites(&sites, &kb, &index, &default_vague_patterns(), 0.7);
        assert!(out.links.is_empty());
        assert_eq!(out.unmatched.len(), 1);
    }

    #[test]
    fn absent_fields_do_not_block() {
        let kb = testville_kb(None); // entity side has no country at all
        let index = kb_alias_index(&kb, IndexMode::Exact);
        let sites = vec![site("University of Testville Hospital", Some("Testville"), Some("Netherlands"))];
        let out = link_sites(&sites, &kb, &index, &default_vague_patterns(), 0.7);
        assert_eq!(out.links.len(), 1);
    }

    #[test]
    fn vague_sites_are_diverted_before_matching() {
        let kb = kb_of(&(0..11).map(|_| ("Investigational Site", None)).collect::<Vec<_>>());
        let index = kb_alias_index(&kb, IndexMode::Exact);
        let sites = vec![site("Pfizer Investigational Site", None, None)];
        let out = link_sites(&sites, &kb, &index, &default_vague_patterns(), 0.7);
        assert!(out.links.is_empty());
        assert_eq!(out.vague.len(), 1);
        assert_eq!(out.vague[0].1, "%Investigational Site%");
    }

    #[test]
    fn one_to_one_across_sites_and_entities() {
        let kb = testville_kb(None);
        let index = kb_alias_index(&kb, IndexMode::Exact);
        let sites = vec![
            site("University of Testville Hospital", Some("Amsterdam"), None),
            site("University of Testville Hospital", None, None),
        ];
        let out = link_sites(&sites, &kb, &index, &default_vague_patterns(), 0.7);
        assert_eq!(out.links.len(), 2);
        assert_ne!(out.links[0].kb_id, out.links[1].kb_id);
        // Partition law: every distinct site lands in exactly one bucket.
        assert_eq!(out.links.len() + out.unmatched.len() + out.vague.len(), sites.len());
    }
}
