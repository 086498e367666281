//! The `query` command: radius and filter lookups against an exported
//! knowledge base, printed as a table (or JSON lines with `--json`).

use std::io::Write;
use std::path::PathBuf;

use serde::Serialize;

use medkb_core::align::MergedEntity;
use medkb_core::export::{query_filter, query_radius, QueryFilter};
use medkb_core::model::{GeoPoint, SemanticType};

use crate::fail::{self, Result};
use crate::manifest;

#[derive(Debug, clap::Args)]
pub struct QueryArgs {
    /// Exported knowledge base (kb.json).
    #[arg(long, value_name = "FILE", conflicts_with = "manifest")]
    pub kb: Option<PathBuf>,
    /// Run manifest; the knowledge base is taken from its output directory.
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Radius query center as `LAT,LON` (decimal degrees).
    #[arg(long, value_name = "LAT,LON")]
    pub near: Option<String>,
    /// Radius cap in kilometres (radius queries only; default unbounded).
    #[arg(long, value_name = "KM", requires = "near")]
    pub max_km: Option<f64>,
    /// Filter: country name (normalized comparison).
    #[arg(long)]
    pub country: Option<String>,
    /// Filter: state name.
    #[arg(long)]
    pub state: Option<String>,
    /// Filter: city name.
    #[arg(long)]
    pub city: Option<String>,
    /// Filter: semantic type (HEALTHCARE_ORGANIZATION,
    /// EDUCATIONAL_INSTITUTION, or PHARMACEUTICAL_COMPANY).
    #[arg(long = "type", value_name = "TYPE")]
    pub semantic_type: Option<String>,
    /// Emit JSON lines instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Serialize)]
struct Hit<'a> {
    kb_id: &'a str,
    name: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    distance_km: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    country: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    city: Option<&'a str>,
}

fn hit<'a>(entity: &'a MergedEntity, distance_km: Option<f64>) -> Hit<'a> {
    Hit {
        kb_id: &entity.kb_id,
        name: entity.preferred_name(),
        distance_km,
        country: entity.country.as_ref().and_then(|c| c.name.as_deref()),
        city: entity.city.as_ref().and_then(|c| c.name.as_deref()),
    }
}

fn parse_near(text: &str) -> Result<GeoPoint> {
    let bad = || {
        fail::bad_arguments(format!(
            "--near expects `LAT,LON` in decimal degrees, got {text:?}"
        ))
    };
    let (lat, lon) = text.split_once(',').ok_or_else(bad)?;
    let lat: f64 = lat.trim().parse().map_err(|_| bad())?;
    let lon: f64 = lon.trim().parse().map_err(|_| bad())?;
    GeoPoint::normalize(lat, lon).ok_or_else(bad)
}

fn parse_type(text: &str) -> Result<SemanticType> {
    serde_json::from_value(serde_json::Value::String(text.to_string())).map_err(|_| {
        fail::bad_arguments(format!(
            "unknown semantic type {text:?} (expected HEALTHCARE_ORGANIZATION, \
             EDUCATIONAL_INSTITUTION, or PHARMACEUTICAL_COMPANY)"
        ))
    })
}

fn print_hits(hits: &[Hit], json: bool) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    let mut emit = |line: String| {
        writeln!(stdout, "{line}").map_err(|e| fail::output(format!("cannot write to stdout: {e}")))
    };
    if json {
        for h in hits {
            emit(serde_json::to_string(h).expect("hit serializes"))?;
        }
        return Ok(());
    }
    emit(format!("{:<12} {:<12} {:<24} {}", "KB_ID", "DISTANCE_KM", "LOCATION", "NAME"))?;
    for h in hits {
        let distance = h.distance_km.map_or(String::new(), |d| format!("{d:.3}"));
        let location = match (h.city, h.country) {
            (Some(city), Some(country)) => format!("{city}, {country}"),
            (Some(one), None) | (None, Some(one)) => one.to_string(),
            (None, None) => String::new(),
        };
        emit(format!("{:<12} {:<12} {:<24} {}", h.kb_id, distance, location, h.name))?;
    }
    Ok(())
}

pub fn cmd_query(args: &QueryArgs) -> Result<()> {
    let kb_path = match (&args.kb, &args.manifest) {
        (Some(kb), None) => kb.clone(),
        (None, Some(manifest_path)) => {
            let (manifest, _) = manifest::load(manifest_path)?;
            manifest.output_path(manifest::KB_FILE)
        }
        (Some(_), Some(_)) => unreachable!("clap enforces the conflict"),
        (None, None) => {
            return Err(fail::bad_arguments("pass either --kb or --manifest"));
        }
    };

    let filter = QueryFilter {
        country: args.country.clone(),
        state: args.state.clone(),
        city: args.city.clone(),
        semantic_type: args.semantic_type.as_deref().map(parse_type).transpose()?,
    };
    if args.near.is_some() && !filter.is_empty() {
        return Err(fail::bad_arguments(
            "--near and location/type filters are mutually exclusive",
        ));
    }
    if args.near.is_none() && filter.is_empty() {
        return Err(fail::bad_arguments(
            "nothing to query: pass --near or at least one filter",
        ));
    }
    let center = args.near.as_deref().map(parse_near).transpose()?;

    let file = std::fs::File::open(&kb_path).map_err(|e| {
        fail::input(format!(
            "knowledge base missing ({}: {e}); run `medkb build` first",
            kb_path.display()
        ))
    })?;
    let kb = serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| fail::input(format!("cannot parse {}: {e}", kb_path.display())))?;

    let hits: Vec<Hit> = match center {
        Some(center) => query_radius(&kb, center, args.max_km)
            .into_iter()
            .map(|(e, d)| hit(e, Some(d)))
            .collect(),
        None => query_filter(&kb, &filter).into_iter().map(|e| hit(e, None)).collect(),
    };
    print_hits(&hits, args.json)
}
