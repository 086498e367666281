//! End-to-end tests of the `medkb` binary against the bundled demo data:
//! the exit-code contract, artifact determinism, and the output formats
//! of every subcommand.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn demo_data() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../demo/data")
        .canonicalize()
        .expect("bundled demo data is present")
}

fn medkb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_medkb"))
        .args(args)
        .output()
        .expect("binary spawns")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("not killed by a signal")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout is UTF-8")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("stderr is UTF-8")
}

/// The final stderr line — the error verdict, after any progress lines.
fn last_err(out: &Output) -> String {
    stderr(out).lines().last().unwrap_or_default().to_string()
}

/// Writes a manifest into `dir` pointing at the bundled demo inputs, with
/// `output_dir` resolving inside `dir`. Individual lines can be overridden
/// to break the configuration on purpose.
fn write_manifest(dir: &Path, overrides: &[(&str, &str)]) -> PathBuf {
    let data = demo_data();
    let mut lines: Vec<(String, String)> = vec![
        ("output_dir".into(), "\"out\"".into()),
        ("workers".into(), "2".into()),
        ("gazetteer".into(), format!("{:?}", data.join("gazetteer.tsv"))),
        ("blacklist".into(), format!("{:?}", data.join("blacklist.txt"))),
        ("registry".into(), format!("{:?}", data.join("trials.csv"))),
        ("population".into(), format!("{:?}", data.join("population.tsv"))),
        ("dumps.wikidata".into(), format!("{:?}", data.join("wikidata.jsonl"))),
        ("dumps.geonames".into(), format!("{:?}", data.join("geonames.jsonl"))),
        ("dumps.dbpedia".into(), format!("{:?}", data.join("dbpedia.jsonl"))),
        ("dumps.yago".into(), format!("{:?}", data.join("yago.jsonl"))),
        ("dumps.umls".into(), format!("{:?}", data.join("umls.jsonl"))),
    ];
    for (key, value) in overrides {
        match lines.iter_mut().find(|(k, _)| k == key) {
            Some(line) if value.is_empty() => {
                line.1.clear();
            }
            Some(line) => line.1 = value.to_string(),
            None => lines.push((key.to_string(), value.to_string())),
        }
    }
    let mut body = String::new();
    let mut dumps = String::from("[dumps]\n");
    for (key, value) in &lines {
        if value.is_empty() {
            continue; // dropped by an override
        }
        if let Some(dump) = key.strip_prefix("dumps.") {
            dumps.push_str(&format!("{dump} = {value}\n"));
        } else {
            body.push_str(&format!("{key} = {value}\n"));
        }
    }
    body.push_str(&dumps);
    let path = dir.join("manifest.toml");
    std::fs::write(&path, body).expect("manifest written");
    path
}

/// One shared demo build (plus trial links) for the read-only tests.
/// Returns (manifest path, output directory).
fn built() -> &'static (PathBuf, PathBuf) {
    static BUILT: OnceLock<(PathBuf, PathBuf)> = OnceLock::new();
    BUILT.get_or_init(|| {
        let dir = tempfile::tempdir().expect("tempdir").keep();
        let manifest = write_manifest(&dir, &[]);
        let manifest_str = manifest.to_str().unwrap();
        let out = medkb(&["build", "--manifest", manifest_str]);
        assert_eq!(code(&out), 0, "demo build failed: {}", stderr(&out));
        let out = medkb(&["link-trials", "--manifest", manifest_str]);
        assert_eq!(code(&out), 0, "demo link-trials failed: {}", stderr(&out));
        (manifest, dir.join("out"))
    })
}

fn kb_path() -> String {
    built().1.join("kb.json").to_str().unwrap().to_string()
}

/// Rows below the header of a `query` table.
fn table_rows(out: &Output) -> Vec<String> {
    let text = stdout(out);
    let mut lines = text.lines();
    let header = lines.next().expect("table has a header line");
    let columns: Vec<&str> = header.split_whitespace().collect();
    assert_eq!(columns, ["KB_ID", "DISTANCE_KM", "LOCATION", "NAME"]);
    lines.map(|l| l.to_string()).collect()
}

#[test]
fn help_and_version_succeed() {
    let out = medkb(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("build"), "help lists the build subcommand");
    let out = medkb(&["build", "--help"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(
        text.contains("ARTIFACT CONTRACTS") && text.contains("EXIT CODES"),
        "long help documents artifact formats and exit codes"
    );
    let out = medkb(&["--version"]);
    assert_eq!(code(&out), 0);
}

#[test]
fn bad_command_lines_exit_4() {
    for args in [
        vec![],
        vec!["frobnicate"],
        vec!["build"],                     // --manifest is required
        vec!["build", "--bogus", "x"],
        vec!["query"],                     // a kb or manifest is required
    ] {
        let out = medkb(&args);
        assert_eq!(code(&out), 4, "for {args:?}: {}", stderr(&out));
    }
}

#[test]
fn unreadable_manifest_exits_config() {
    let out = medkb(&["build", "--manifest", "/nonexistent/manifest.toml"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).starts_with("medkb: CONFIG:"), "{}", stderr(&out));
}

#[test]
fn manifest_referencing_missing_file_exits_config() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(dir.path(), &[("gazetteer", "\"absent.tsv\"")]);
    let out = medkb(&["build", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(err.starts_with("medkb: CONFIG:") && err.contains("absent.tsv"), "{err}");
}

#[test]
fn zero_workers_exits_config() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(dir.path(), &[("workers", "0")]);
    let out = medkb(&["build", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).starts_with("medkb: CONFIG:"), "{}", stderr(&out));
}

#[test]
fn dump_of_the_wrong_source_exits_input() {
    let dir = tempfile::tempdir().unwrap();
    let geonames = format!("{:?}", demo_data().join("geonames.jsonl"));
    let manifest = write_manifest(dir.path(), &[("dumps.wikidata", &geonames)]);
    let out = medkb(&["build", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(last_err(&out).starts_with("medkb: INPUT:"), "{}", stderr(&out));
}

#[test]
fn unwritable_output_dir_exits_output() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("blocker"), b"a file, not a directory").unwrap();
    let manifest = write_manifest(dir.path(), &[("output_dir", "\"blocker/out\"")]);
    let out = medkb(&["build", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(last_err(&out).starts_with("medkb: OUTPUT:"), "{}", stderr(&out));
}

#[test]
fn build_writes_every_artifact() {
    let (_, out_dir) = built();
    for name in [
        "kb.json",
        "facilities.csv",
        "facilities.ttl",
        "merge_report.jsonl",
        "metrics.json",
        "metrics.tsv",
        "summary.json",
        "links.jsonl",
        "link_summary.json",
    ] {
        assert!(out_dir.join(name).is_file(), "missing artifact {name}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    let entities = summary["entities"].as_u64().unwrap();
    assert!(entities > 0);
    assert_eq!(summary["csv_rows"].as_u64().unwrap(), entities);
    let hash = summary["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
}

#[test]
fn rebuilds_are_byte_identical() {
    let mut snapshots: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_manifest(dir.path(), &[]);
        let out = medkb(&["build", "--manifest", manifest.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let mut files = Vec::new();
        for name in [
            "kb.json",
            "facilities.csv",
            "facilities.ttl",
            "merge_report.jsonl",
            "metrics.json",
            "metrics.tsv",
            "summary.json",
        ] {
            files.push((name.to_string(), std::fs::read(dir.path().join("out").join(name)).unwrap()));
        }
        snapshots.push(files);
    }
    let (first, second) = (&snapshots[0], &snapshots[1]);
    for ((name, a), (_, b)) in first.iter().zip(second) {
        assert_eq!(a, b, "{name} differs between two builds of the same inputs");
    }
}

#[test]
fn query_near_returns_ascending_distances() {
    let kb = kb_path();
    let out = medkb(&["query", "--kb", &kb, "--near", "52.5200,13.4050", "--max-km", "10"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = table_rows(&out);
    assert!(rows.len() >= 3, "Berlin radius finds several facilities:\n{}", stdout(&out));
    let mut last = 0.0f64;
    for row in &rows {
        let mut cols = row.split_whitespace();
        let kb_id = cols.next().unwrap();
        let km: f64 = cols.next().unwrap().parse().expect("numeric distance");
        assert!(kb_id.starts_with("MTF"), "{row}");
        assert!(km <= 10.0 && km >= last, "distances sorted, within radius: {row}");
        last = km;
    }
}

#[test]
fn query_json_emits_one_object_per_hit() {
    let kb = kb_path();
    let out = medkb(&[
        "query", "--kb", &kb, "--near", "52.5200,13.4050", "--max-km", "10", "--json",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let mut last = 0.0f64;
    let mut rows = 0;
    for line in stdout(&out).lines() {
        let hit: serde_json::Value = serde_json::from_str(line).expect("JSON line");
        assert!(hit["kb_id"].as_str().unwrap().starts_with("MTF"));
        assert!(!hit["name"].as_str().unwrap().is_empty());
        let km = hit["distance_km"].as_f64().unwrap();
        assert!(km <= 10.0 && km >= last);
        last = km;
        rows += 1;
    }
    assert!(rows >= 3);
}

#[test]
fn query_filters_by_location_and_type() {
    let kb = kb_path();
    let out = medkb(&["query", "--kb", &kb, "--country", "Netherlands", "--type", "EDUCATIONAL_INSTITUTION"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = table_rows(&out);
    assert!(!rows.is_empty());
    for row in &rows {
        assert!(row.contains("Netherlands"), "{row}");
    }

    // The same country without the type filter can only grow.
    let all = medkb(&["query", "--kb", &kb, "--country", "Netherlands"]);
    assert!(table_rows(&all).len() >= rows.len());

    // Filters are conjunctive: an impossible combination is empty.
    let none = medkb(&["query", "--kb", &kb, "--country", "Netherlands", "--city", "Berlin"]);
    assert_eq!(code(&none), 0);
    assert!(table_rows(&none).is_empty());
}

#[test]
fn query_rejects_malformed_selectors() {
    let kb = kb_path();
    for args in [
        vec!["query", "--kb", &kb, "--near", "bogus"],
        vec!["query", "--kb", &kb, "--near", "52.5"],         // one coordinate
        vec!["query", "--kb", &kb, "--near", "91.0,0.0"],     // latitude out of range
        vec!["query", "--kb", &kb, "--near", "0,0"],          // null island is never a place
        vec!["query", "--kb", &kb, "--near", "52.5,13.4", "--country", "X"], // radius xor filters
        vec!["query", "--kb", &kb, "--max-km", "5"],          // --max-km needs --near
        vec!["query", "--kb", &kb, "--type", "NONSENSE"],
        vec!["query", "--kb", &kb, "--manifest", "x.toml", "--near", "52.5,13.4"], // conflicting inputs
    ] {
        let out = medkb(&args);
        assert_eq!(code(&out), 4, "for {args:?}: {}", stderr(&out));
    }
}

#[test]
fn query_without_a_built_kb_exits_input() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("kb.json");
    let out = medkb(&["query", "--kb", missing.to_str().unwrap(), "--near", "52.5,13.4"]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.starts_with("medkb: INPUT:") && err.contains("medkb build"), "{err}");
}

#[test]
fn link_trials_requires_a_registry() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(dir.path(), &[("registry", "")]);
    let out = medkb(&["link-trials", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).starts_with("medkb: CONFIG:"), "{}", stderr(&out));
}

#[test]
fn link_trials_before_build_exits_input() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(dir.path(), &[]);
    let out = medkb(&["link-trials", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).starts_with("medkb: INPUT:"), "{}", stderr(&out));
}

#[test]
fn link_rows_partition_the_registry_sites() {
    let (_, out_dir) = built();
    let rows: Vec<serde_json::Value> =
        std::fs::read_to_string(out_dir.join("links.jsonl"))
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
    let mut linked = 0u64;
    let mut unmatched = 0u64;
    let mut vague = 0u64;
    let mut kb_ids = std::collections::BTreeSet::new();
    for row in &rows {
        match row["status"].as_str().unwrap() {
            "linked" => {
                linked += 1;
                assert!(row["score"].as_f64().unwrap() > 0.7, "{row}");
                assert_eq!(row["method"].as_str().unwrap(), "STRING_MATCH");
                assert!(kb_ids.insert(row["kb_id"].as_str().unwrap().to_string()), "entity linked twice: {row}");
            }
            "unmatched" => {
                unmatched += 1;
                assert!(row.get("kb_id").is_none());
            }
            "vague" => {
                vague += 1;
                assert!(row["pattern"].as_str().is_some(), "{row}");
            }
            other => panic!("unknown status {other}"),
        }
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("link_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["linked"].as_u64().unwrap(), linked);
    assert_eq!(summary["unmatched"].as_u64().unwrap(), unmatched);
    assert_eq!(summary["vague"].as_u64().unwrap(), vague);
    assert_eq!(summary["distinct_sites"].as_u64().unwrap(), linked + unmatched + vague);
    assert!(linked > 0 && unmatched > 0 && vague > 0, "demo registry exercises all three outcomes");
}

#[test]
fn metrics_prints_the_tsv_report() {
    let (manifest, _) = built();
    let out = medkb(&["metrics", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("section\tkey\tvalue\n"), "TSV header first");
    assert!(text.contains("\nkb\tentities\t"), "knowledge-base section present");
    assert!(text.contains("NO_DATA"), "below-floor population renders NO_DATA");
    assert!(text.lines().any(|l| l.starts_with("density\t")), "density section present");
}

#[test]
fn metrics_before_build_exits_input() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(dir.path(), &[]);
    let out = medkb(&["metrics", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).starts_with("medkb: INPUT:"), "{}", stderr(&out));
}
