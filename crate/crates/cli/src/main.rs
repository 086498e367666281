//! `medkb` — build, link, and query the facility knowledge base.
//!
//! One command per process; all progress on standard error, all data in
//! files or on standard output. Exit codes are a stable contract:
//! 0 success, 1 CONFIG, 2 INPUT, 3 OUTPUT, 4 BAD_ARGUMENTS.

mod fail;
mod manifest;
mod query;
mod run;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

/// The byte-exact artifact contracts, shown under `--help`.
const FORMATS: &str = "\
ARTIFACT CONTRACTS (byte-exact):
  facilities.csv   UTF-8, comma-separated, LF line endings, RFC 4180 quoting,
                   rows sorted by kb_id. Columns, in order:
                   kb_id, preferred_name, semantic_types (';'-joined),
                   latitude, longitude, city_geonames_id, city_name, zip,
                   state_geonames_id, state_name, country_geonames_id,
                   country_name, wikidata_id, dbpedia_id, yago_id,
                   geonames_id, umls_cui
  facilities.ttl   Turtle. Fixed prefix block (mto, mtp, mtr, rdf, rdfs, owl,
                   skos, xsd, geo, gn, schema), schema statements, location
                   resources (mtr:GN<id>), then one block per facility
                   (mtr:<kb_id>) with types, labels, location properties,
                   coordinates (xsd:decimal and geo:asWKT), and owl:sameAs
                   links to the source vocabularies. WKT points are
                   longitude-first unless `export.wkt_lat_first` is set.
  Identical inputs produce byte-identical artifacts.

EXIT CODES: 0 success, 1 CONFIG, 2 INPUT, 3 OUTPUT, 4 BAD_ARGUMENTS.";

#[derive(Debug, Parser)]
#[command(name = "medkb", version, about = "Facility knowledge-base pipeline", after_long_help = FORMATS)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the knowledge base: ingest dumps, link locations, align
    /// entities, compute metrics, export all artifacts.
    #[command(after_long_help = FORMATS)]
    Build {
        /// Run manifest (TOML).
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
    },
    /// Link trial-registry site names to built facilities.
    LinkTrials {
        /// Run manifest (TOML); must configure `registry`.
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
    },
    /// Query an exported knowledge base by radius or by filters.
    Query(query::QueryArgs),
    /// Recompute the metrics report from the stored knowledge base and
    /// print it as TSV.
    Metrics {
        /// Run manifest (TOML).
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => fail::Category::BadArguments.code(),
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match &cli.command {
        Command::Build { manifest } => run::cmd_build(manifest),
        Command::LinkTrials { manifest } => run::cmd_link_trials(manifest),
        Command::Query(args) => query::cmd_query(args),
        Command::Metrics { manifest } => run::cmd_metrics(manifest),
    };
    if let Err(failure) = result {
        eprintln!("medkb: {failure}");
        std::process::exit(failure.category.code());
    }
}
