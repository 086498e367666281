//! The `build`, `link-trials` and `metrics` commands. All three read the
//! run manifest; `build` produces every knowledge-base artifact,
//! `link-trials` adds the trial-registry link report on top, and
//! `metrics` recomputes the report from the stored knowledge base and
//! prints it. Progress goes to standard error; data goes to files (or, for
//! `metrics`, standard output).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use medkb_core::align::{build_kb, BuildCounters, KnowledgeBase};
use medkb_core::export::{export_csv, export_turtle, TurtleOptions};
use medkb_core::ingest::{
    apply_blacklist, geolink_record, load_source_dump, Blacklist, SourceRecord,
};
use medkb_core::metrics::{compute_metrics, PopulationTable};
use medkb_core::textmatch::IndexMode;
use medkb_core::triallink::{
    default_vague_patterns, kb_alias_index, link_sites, parse_registry_dump, LinkOutcome,
    TrialSite,
};
use medkb_core::geo::Gazetteer;

use crate::fail::{self, Result};
use crate::manifest::{self, RunManifest};

fn configure_workers(workers: Option<usize>) {
    if let Some(n) = workers {
        // Ignore the error: the pool can only be configured once per
        // process, and a second configuration attempt means tests or a
        // library consumer already did it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn write_artifact(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes)
        .map_err(|e| fail::output(format!("cannot write {}: {e}", path.display())))
}

fn load_kb(manifest: &RunManifest) -> Result<KnowledgeBase> {
    let path = manifest.output_path(manifest::KB_FILE);
    let file = std::fs::File::open(&path).map_err(|e| {
        fail::input(format!(
            "knowledge base missing ({}: {e}); run `medkb build` first",
            path.display()
        ))
    })?;
    serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| fail::input(format!("cannot parse {}: {e}", path.display())))
}

fn load_population(manifest: &RunManifest) -> Result<PopulationTable> {
    match &manifest.population {
        Some(path) => Ok(PopulationTable::from_path(path)?),
        None => Ok(PopulationTable::default()),
    }
}

/// Everything `build` writes besides the artifacts themselves: a compact,
/// deterministic account of the run (no timings — identical inputs must
/// produce byte-identical files).
#[derive(Debug, Serialize)]
struct BuildSummary {
    config_hash: String,
    gazetteer_places: usize,
    gazetteer_lines_skipped: usize,
    dump_lines_skipped: BTreeMap<String, u64>,
    records_loaded: u64,
    blacklisted: u64,
    admin_territories_dropped: u64,
    counters: BuildCounters,
    entities: u64,
    csv_rows: u64,
    turtle_statements: u64,
}

pub fn cmd_build(manifest_path: &Path) -> Result<()> {
    let started = Instant::now();
    let (manifest, config_hash) = manifest::load(manifest_path)?;
    configure_workers(manifest.workers);

    let (gazetteer, gazetteer_lines_skipped) = Gazetteer::from_tsv_path(&manifest.gazetteer)?;
    eprintln!(
        "gazetteer: {} places ({} lines skipped)",
        gazetteer.len(),
        gazetteer_lines_skipped
    );
    let blacklist = match &manifest.blacklist {
        Some(path) => Blacklist::from_path(path)?,
        None => Blacklist::builtin(),
    };

    let mut records: Vec<SourceRecord> = Vec::new();
    let mut dump_lines_skipped = BTreeMap::new();
    for (tag, path) in manifest.dumps.present() {
        let load = load_source_dump(path, tag)?;
        eprintln!("{}: {} records ({} lines skipped)", tag, load.records.len(), load.skipped);
        dump_lines_skipped.insert(tag.to_string(), load.skipped as u64);
        records.extend(load.records);
    }
    let records_loaded = records.len() as u64;
    let (records, blacklisted) = apply_blacklist(records, &blacklist);
    eprintln!("blacklist: {blacklisted} records removed");

    let mut admin_territories_dropped = 0u64;
    let records: Vec<SourceRecord> = records
        .into_iter()
        .map(|r| {
            let (r, dropped) = geolink_record(r, &gazetteer);
            admin_territories_dropped += dropped as u64;
            r
        })
        .collect();

    let outcome = build_kb(records, &manifest.merge)?;
    let kb = outcome.kb;
    eprintln!("alignment: {} entities from {} records", kb.len(), kb.counters.input_records);

    std::fs::create_dir_all(&manifest.output_dir)
        .map_err(|e| fail::output(format!("cannot create {}: {e}", manifest.output_dir.display())))?;

    let csv_rows = export_csv(&kb, &manifest.output_path(manifest::CSV_FILE))?;
    let options = TurtleOptions { wkt_lat_first: manifest.export.wkt_lat_first };
    let turtle_statements = export_turtle(&kb, &manifest.output_path(manifest::TURTLE_FILE), &options)?;

    let kb_json = serde_json::to_vec_pretty(&kb).expect("knowledge base serializes");
    write_artifact(&manifest.output_path(manifest::KB_FILE), &kb_json)?;

    let mut merge_report = Vec::new();
    for event in &outcome.report {
        serde_json::to_writer(&mut merge_report, event).expect("report event serializes");
        merge_report.push(b'\n');
    }
    write_artifact(&manifest.output_path(manifest::MERGE_REPORT_FILE), &merge_report)?;

    let population = load_population(&manifest)?;
    let report = compute_metrics(&kb, &population);
    let metrics_json = serde_json::to_vec_pretty(&report).expect("metrics serialize");
    write_artifact(&manifest.output_path(manifest::METRICS_JSON_FILE), &metrics_json)?;
    write_artifact(&manifest.output_path(manifest::METRICS_TSV_FILE), report.to_tsv().as_bytes())?;

    let summary = BuildSummary {
        config_hash,
        gazetteer_places: gazetteer.len(),
        gazetteer_lines_skipped,
        dump_lines_skipped,
        records_loaded,
        blacklisted: blacklisted as u64,
        admin_territories_dropped,
        counters: kb.counters.clone(),
        entities: kb.len() as u64,
        csv_rows,
        turtle_statements,
    };
    let summary_json = serde_json::to_vec_pretty(&summary).expect("summary serializes");
    write_artifact(&manifest.output_path(manifest::SUMMARY_FILE), &summary_json)?;

    eprintln!(
        "build: {} entities, {} csv rows, {} turtle statements in {:.2?}",
        kb.len(),
        csv_rows,
        turtle_statements,
        started.elapsed()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct LinkSummary {
    config_hash: String,
    threshold: f64,
    registry_mentions: u64,
    registry_rows_skipped: u64,
    distinct_trials: u64,
    distinct_sites: u64,
    linked: u64,
    unmatched: u64,
    vague: u64,
    /// Linked share of all distinct sites.
    pct_linked_of_all: f64,
    /// Linked share of the sites that were specific enough to try.
    pct_linked_of_matchable: f64,
}

/// One line of `links.jsonl`: the partition verdict for one distinct site.
#[derive(Debug, Serialize)]
struct LinkRow<'a> {
    status: &'static str,
    site: &'a TrialSite,
    #[serde(skip_serializing_if = "Option::is_none")]
    kb_id: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    method: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pattern: Option<&'a str>,
}

fn link_rows(outcome: &LinkOutcome) -> Vec<u8> {
    let mut out = Vec::new();
    let mut push = |row: &LinkRow| {
        serde_json::to_writer(&mut out, row).expect("link row serializes");
        out.push(b'\n');
    };
    for link in &outcome.links {
        push(&LinkRow {
            status: "linked",
            site: &link.site,
            kb_id: Some(&link.kb_id),
            score: Some(link.score),
            method: Some("STRING_MATCH"),
            pattern: None,
        });
    }
    for site in &outcome.unmatched {
        push(&LinkRow { status: "unmatched", site, kb_id: None, score: None, method: None, pattern: None });
    }
    for (site, pattern) in &outcome.vague {
        push(&LinkRow {
            status: "vague",
            site,
            kb_id: None,
            score: None,
            method: None,
            pattern: Some(pattern),
        });
    }
    out
}

pub fn cmd_link_trials(manifest_path: &Path) -> Result<()> {
    let started = Instant::now();
    let (manifest, config_hash) = manifest::load(manifest_path)?;
    configure_workers(manifest.workers);
    let registry_path = manifest
        .registry
        .as_deref()
        .ok_or_else(|| fail::config("manifest has no registry path; add `registry = \"...\"`"))?;

    let kb = load_kb(&manifest)?;
    let registry = parse_registry_dump(registry_path, manifest.delimiter_byte()?)?;
    eprintln!(
        "registry: {} distinct sites from {} mentions ({} rows skipped)",
        registry.sites.len(),
        registry.mentions,
        registry.skipped_rows
    );

    let index = kb_alias_index(&kb, IndexMode::Exact);
    let sites = registry.distinct_sites();
    let outcome = link_sites(&sites, &kb, &index, &default_vague_patterns(), manifest.trials.threshold);

    let (linked, unmatched, vague) =
        (outcome.links.len() as u64, outcome.unmatched.len() as u64, outcome.vague.len() as u64);
    let distinct = linked + unmatched + vague;
    let matchable = linked + unmatched;
    let pct = |num: u64, den: u64| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };

    std::fs::create_dir_all(&manifest.output_dir)
        .map_err(|e| fail::output(format!("cannot create {}: {e}", manifest.output_dir.display())))?;
    write_artifact(&manifest.output_path(manifest::LINKS_FILE), &link_rows(&outcome))?;
    let summary = LinkSummary {
        config_hash,
        threshold: manifest.trials.threshold,
        registry_mentions: registry.mentions,
        registry_rows_skipped: registry.skipped_rows,
        distinct_trials: registry.distinct_trials,
        distinct_sites: distinct,
        linked,
        unmatched,
        vague,
        pct_linked_of_all: pct(linked, distinct),
        pct_linked_of_matchable: pct(linked, matchable),
    };
    let summary_json = serde_json::to_vec_pretty(&summary).expect("summary serializes");
    write_artifact(&manifest.output_path(manifest::LINK_SUMMARY_FILE), &summary_json)?;

    eprintln!(
        "link-trials: {linked} linked, {unmatched} unmatched, {vague} vague in {:.2?}",
        started.elapsed()
    );
    Ok(())
}

pub fn cmd_metrics(manifest_path: &Path) -> Result<()> {
    let (manifest, _) = manifest::load(manifest_path)?;
    let kb = load_kb(&manifest)?;
    let population = load_population(&manifest)?;
    let report = compute_metrics(&kb, &population);
    let mut stdout = std::io::stdout().lock();
    stdout
        .write_all(report.to_tsv().as_bytes())
        .map_err(|e| fail::output(format!("cannot write to stdout: {e}")))
}
