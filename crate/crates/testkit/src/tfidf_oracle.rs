//! Brute-force trigram TF-IDF: no inverted index, no pruning — every
//! vector is a plain string-keyed map and every comparison walks the full
//! corpus. Arithmetic is performed in lexicographic term order with the
//! same expressions as the production code, so scores are expected to be
//! bit-identical, not merely close.

use std::collections::BTreeMap;

use medkb_core::normalize::normalize_name;

/// Character trigrams of the normalized name, no boundary padding.
pub fn trigrams(name: &str) -> Vec<String> {
    let chars: Vec<char> = normalize_name(name).chars().collect();
    if chars.len() < 3 {
        return Vec::new();
    }
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

/// The weighting space over a corpus of aliases (each alias is one
/// document; a trigram counts once per document for document frequency).
#[derive(Debug, Clone)]
pub struct OracleSpace {
    idf: BTreeMap<String, f64>,
}

impl OracleSpace {
    pub fn build(corpus: &[String], min_doc_freq: u32) -> OracleSpace {
        let mut doc_freq: BTreeMap<String, u32> = BTreeMap::new();
        for alias in corpus {
            let mut seen: BTreeMap<String, ()> = BTreeMap::new();
            for t in trigrams(alias) {
                seen.entry(t).or_insert(());
            }
            for (t, ()) in seen {
                *doc_freq.entry(t).or_insert(0) += 1;
            }
        }
        let n_docs = corpus.len() as u64;
        let idf = doc_freq
            .into_iter()
            .filter(|(_, df)| *df >= min_doc_freq)
            .map(|(t, df)| {
                let idf = ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0;
                (t, idf)
            })
            .collect();
        OracleSpace { idf }
    }

    pub fn is_empty(&self) -> bool {
        self.idf.is_empty()
    }

    /// Raw-count TF × IDF over retained terms.
    pub fn vector(&self, name: &str) -> BTreeMap<String, f64> {
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        for t in trigrams(name) {
            *counts.entry(t).or_insert(0) += 1;
        }
        counts
            .into_iter()
            .filter_map(|(t, tf)| self.idf.get(&t).map(|idf| (t, tf as f64 * idf)))
            .collect()
    }
}

pub fn norm(v: &BTreeMap<String, f64>) -> f64 {
    v.values().map(|w| w * w).sum::<f64>().sqrt()
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let mut dot = 0.0;
    for (t, wa) in a {
        if let Some(wb) = b.get(t) {
            dot += wa * wb;
        }
    }
    dot / (na * nb)
}

/// Best score per owner across an alias corpus, ranked score-descending
/// with ascending-owner ties, zero scores dropped, truncated to `k`.
pub fn topk(
    entries: &[(String, String)],
    space: &OracleSpace,
    query: &str,
    k: usize,
) -> Vec<(String, f64)> {
    let qv = space.vector(query);
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for (owner, alias) in entries {
        let score = cosine(&qv, &space.vector(alias));
        let entry = best.entry(owner.as_str()).or_insert(0.0);
        if score > *entry {
            *entry = score;
        }
    }
    let mut ranked: Vec<(String, f64)> = best
        .into_iter()
        .filter(|(_, s)| *s > 0.0)
        .map(|(o, s)| (o.to_string(), s))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}
