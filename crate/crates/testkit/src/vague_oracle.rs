//! Wildcard-pattern reference matcher by translation to regular
//! expressions: `%` becomes `.*`, everything else is escaped, the whole
//! pattern is anchored, and both sides are lowercased first — the same
//! case-folding the production matcher applies.

use medkb_core::triallink::VaguePattern;
use regex::Regex;

pub fn translate(pattern: &str) -> Regex {
    let body: Vec<String> =
        pattern.to_lowercase().split('%').map(|seg| regex::escape(seg)).collect();
    Regex::new(&format!("(?s)^{}$", body.join(".*"))).expect("escaped pattern always compiles")
}

/// First matching pattern's label, in input order.
pub fn detect_vague_regex(name: &str, patterns: &[VaguePattern]) -> Option<String> {
    let name = name.to_lowercase();
    patterns
        .iter()
        .find(|p| translate(&p.pattern).is_match(&name))
        .map(|p| p.label.clone())
}
