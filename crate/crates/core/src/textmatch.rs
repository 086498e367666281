//! Character-trigram TF-IDF similarity over facility names.
//!
//! Alias texts are normalized (see [`crate::normalize`]), chopped into
//! overlapping character trigrams without boundary padding, and weighted
//! with a smoothed idf. Rare trigrams — those appearing in fewer than
//! [`MIN_DOC_FREQ`] aliases — are dropped from the vocabulary entirely,
//! which keeps the space dense enough that a single typo still leaves most
//! of a name's mass intact.
//!
//! The [`CandidateIndex`] answers nearest-neighbour queries over an alias
//! collection. `Exact` mode is contractually identical to brute-force
//! cosine ranking; `Approximate` mode prunes low-weight query terms for
//! speed and only promises high recall.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::normalize::normalize_name;

/// Minimum number of aliases a trigram must appear in to stay in the
/// vocabulary.
pub const MIN_DOC_FREQ: u32 = 10;

/// Fraction of a query vector's squared mass that approximate retrieval
/// keeps when selecting posting lists to visit.
const APPROX_MASS_KEPT: f64 = 0.9;

/// Yields the character trigrams of an already-normalized string.
fn trigrams(normalized: &str) -> Vec<String> {
    let chars: Vec<char> = normalized.chars().collect();
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

/// The trigram space: term indices (assigned in lexicographic trigram
/// order), document frequencies and idf weights.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrigramVocabulary {
    term_to_index: BTreeMap<String, u32>,
    doc_freq: Vec<u32>,
    n_docs: u64,
    idf: Vec<f64>,
}

/// Builds the vocabulary over a multiset of alias texts. Each alias is one
/// document; a trigram's document frequency counts aliases containing it at
/// least once. Permuting the alias list does not change the result.
pub fn build_vocabulary<I>(aliases: I) -> TrigramVocabulary
where
    I: IntoIterator,
    I::Item: AsRef<str>,
{
    let mut df: BTreeMap<String, u32> = BTreeMap::new();
    let mut n_docs = 0u64;
    for alias in aliases {
        n_docs += 1;
        let mut seen: Vec<String> = trigrams(&normalize_name(alias.as_ref()));
        seen.sort_unstable();
        seen.dedup();
        for term in seen {
            *df.entry(term).or_insert(0) += 1;
        }
    }

    let mut vocab = TrigramVocabulary {
        n_docs,
        ..Default::default()
    };
    for (term, freq) in df {
        if freq < MIN_DOC_FREQ {
            continue;
        }
        let index = vocab.doc_freq.len() as u32;
        vocab.term_to_index.insert(term, index);
        vocab.doc_freq.push(freq);
        vocab
            .idf
            .push(((1.0 + n_docs as f64) / (1.0 + freq as f64)).ln() + 1.0);
    }
    vocab
}

impl TrigramVocabulary {
    pub fn len(&self) -> usize {
        self.doc_freq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_freq.is_empty()
    }

    pub fn n_docs(&self) -> u64 {
        self.n_docs
    }

    pub fn index_of(&self, term: &str) -> Option<u32> {
        self.term_to_index.get(term).copied()
    }

    pub fn idf(&self, index: u32) -> f64 {
        self.idf[index as usize]
    }

    pub fn doc_freq_of(&self, index: u32) -> u32 {
        self.doc_freq[index as usize]
    }
}

/// A TF-IDF vector: entries sorted by ascending term index, plus the
/// precomputed Euclidean norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
    norm: f64,
}

impl SparseVector {
    /// Builds a vector from (term index, weight) pairs. Entries are sorted;
    /// the norm is accumulated in ascending index order so that identical
    /// inputs produce bit-identical norms.
    pub fn new(mut entries: Vec<(u32, f64)>) -> SparseVector {
        entries.sort_unstable_by_key(|(i, _)| *i);
        let norm = entries
            .iter()
            .map(|(_, w)| w * w)
            .sum::<f64>()
            .sqrt();
        SparseVector { entries, norm }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn is_zero(&self) -> bool {
        self.norm == 0.0
    }
}

/// Vectorizes a text in the given vocabulary: term frequency is the raw
/// trigram count, weight is `tf * idf`. Out-of-vocabulary trigrams
/// contribute nothing.
pub fn vectorize(text: &str, vocab: &TrigramVocabulary) -> SparseVector {
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    for term in trigrams(&normalize_name(text)) {
        if let Some(index) = vocab.index_of(&term) {
            *counts.entry(index).or_insert(0.0) += 1.0;
        }
    }
    SparseVector::new(
        counts
            .into_iter()
            .map(|(index, tf)| (index, tf * vocab.idf(index)))
            .collect(),
    )
}

/// Cosine similarity. Zero when either vector has zero norm. The dot
/// product is accumulated in ascending term-index order (lexicographic
/// trigram order), which pins the floating-point result.
pub fn cosine(u: &SparseVector, v: &SparseVector) -> f64 {
    if u.norm == 0.0 || v.norm == 0.0 {
        return 0.0;
    }
    let mut dot = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    while i < u.entries.len() && j < v.entries.len() {
        let (ui, uw) = u.entries[i];
        let (vi, vw) = v.entries[j];
        match ui.cmp(&vi) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += uw * vw;
                i += 1;
                j += 1;
            }
        }
    }
    dot / (u.norm * v.norm)
}

/// Retrieval accuracy mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexMode {
    /// Results identical to brute-force cosine ranking.
    Exact,
    /// Low-weight query terms may be skipped; recall@10 stays high but is
    /// not guaranteed to be perfect.
    Approximate,
}

/// Inverted index from trigram to the aliases containing it, with each
/// alias owned by an entity id.
#[derive(Debug)]
pub struct CandidateIndex {
    mode: IndexMode,
    vocab: TrigramVocabulary,
    owners: Vec<String>,
    vectors: Vec<SparseVector>,
    /// Term index → alias indices whose vectors contain the term.
    postings: Vec<Vec<u32>>,
}

impl CandidateIndex {
    /// Builds the index over `(owner entity id, alias text)` pairs. The
    /// vocabulary is derived from exactly these alias texts.
    pub fn build(entries: &[(String, String)], mode: IndexMode) -> CandidateIndex {
        let vocab = build_vocabulary(entries.iter().map(|(_, text)| text));
        let mut vectors = Vec::with_capacity(entries.len());
        let mut owners = Vec::with_capacity(entries.len());
        let mut postings = vec![Vec::new(); vocab.len()];
        for (alias_ix, (owner, text)) in entries.iter().enumerate() {
            let vector = vectorize(text, &vocab);
            for (term, _) in vector.entries() {
                postings[*term as usize].push(alias_ix as u32);
            }
            owners.push(owner.clone());
            vectors.push(vector);
        }
        CandidateIndex {
            mode,
            vocab,
            owners,
            vectors,
            postings,
        }
    }

    pub fn mode(&self) -> IndexMode {
        self.mode
    }

    pub fn vocabulary(&self) -> &TrigramVocabulary {
        &self.vocab
    }

    pub fn alias_count(&self) -> usize {
        self.vectors.len()
    }

    pub fn owner(&self, alias_ix: u32) -> &str {
        &self.owners[alias_ix as usize]
    }

    pub fn vector(&self, alias_ix: u32) -> &SparseVector {
        &self.vectors[alias_ix as usize]
    }

    pub fn vectorize_query(&self, text: &str) -> SparseVector {
        vectorize(text, &self.vocab)
    }

    /// Scores every indexed alias with a nonzero cosine against the query
    /// vector. Exact mode visits the postings of every query term, so no
    /// nonzero-similarity alias can be missed; approximate mode keeps only
    /// the heaviest query terms covering [`APPROX_MASS_KEPT`] of the
    /// squared mass. Results are in ascending alias-index order.
    pub fn scored_aliases(&self, query: &SparseVector) -> Vec<(u32, f64)> {
        if query.is_zero() {
            return Vec::new();
        }
        let mut terms: Vec<(u32, f64)> = query.entries().to_vec();
        if self.mode == IndexMode::Approximate {
            terms.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
            let total = query.norm() * query.norm();
            let mut kept = 0.0;
            let mut cut = terms.len();
            for (i, (_, w)) in terms.iter().enumerate() {
                kept += w * w;
                if kept >= APPROX_MASS_KEPT * total {
                    cut = i + 1;
                    break;
                }
            }
            terms.truncate(cut);
        }
        let mut candidates: Vec<u32> = terms
            .iter()
            .flat_map(|(term, _)| self.postings[*term as usize].iter().copied())
            .collect();
        candidates.sort_unstable();
        candidates.dedup();
        candidates
            .into_iter()
            .filter_map(|alias_ix| {
                let score = cosine(query, &self.vectors[alias_ix as usize]);
                (score > 0.0).then_some((alias_ix, score))
            })
            .collect()
    }

    /// The entities owning the nearest aliases: each entity scores the
    /// maximum cosine over its aliases, entities are ranked by descending
    /// score with ties broken by ascending entity id, and only positive
    /// scores are returned (so fewer than `k` results are possible).
    pub fn topk(&self, query: &str, k: usize) -> Vec<(String, f64)> {
        let query = self.vectorize_query(query);
        let mut best: BTreeMap<&str, f64> = BTreeMap::new();
        for (alias_ix, score) in self.scored_aliases(&query) {
            let owner = self.owner(alias_ix);
            let entry = best.entry(owner).or_insert(0.0);
            if score > *entry {
                *entry = score;
            }
        }
        let mut ranked: Vec<(String, f64)> =
            best.into_iter().map(|(o, s)| (o.to_string(), s)).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(k);
        ranked
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn doc_frequency_floor() {
        // Ten copies keep a name's trigrams; a two-character alias has none.
        let mut aliases = vec!["St. Mary Hospital"; 10];
        aliases.push("zz");
        let vocab = build_vocabulary(&aliases);
        assert_eq!(vocab.len(), 15); // all 15 distinct trigrams, df = 10
        assert_eq!(vocab.n_docs(), 11);
        let ix = vocab.index_of("hos").unwrap();
        assert_eq!(vocab.doc_freq_of(ix), 10);

        // Nine copies fall below the floor.
        let vocab = build_vocabulary(vec!["St. Mary Hospital"; 9]);
        assert!(vocab.is_empty());
    }

    #[test]
    fn idf_is_smoothed_log() {
        // 12 documents, "hos" in 11 of them: ln(13/12) + 1.
        let mut docs = vec!["hos"; 11];
        docs.push("abc");
        let vocab = build_vocabulary(&docs);
        assert_eq!(vocab.len(), 1); // "abc" has df 1, dropped
        let ix = vocab.index_of("hos").unwrap();
        assert!((vocab.idf(ix) - 1.0800427076735364).abs() < 1e-12);
    }

    #[test]
    fn term_frequency_is_raw_count() {
        // "aaaa" contains the trigram "aaa" twice.
        let mut docs = vec!["aaa"; 10];
        docs.extend(["xyz", "xyz"]);
        let vocab = build_vocabulary(&docs);
        assert_eq!(vocab.len(), 1);
        let v = vectorize("aaaa", &vocab);
        assert_eq!(v.entries().len(), 1);
        assert!((v.entries()[0].1 - 2.3341081693263326).abs() < 1e-12);
    }

    #[test]
    fn cosine_hand_computed() {
        let u = SparseVector::new(vec![(0, 1.0), (1, 2.0)]);
        let v = SparseVector::new(vec![(1, 4.0), (0, 3.0)]); // unsorted input
        assert!((cosine(&u, &v) - 0.9838699100999074).abs() < 1e-12);
        assert!((cosine(&u, &u) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_norm_vectors_score_zero() {
        let vocab = build_vocabulary(vec!["abcdef"; 10]);
        let short = vectorize("ab", &vocab); // two chars: no trigrams
        let real = vectorize("abcdef", &vocab);
        assert!(short.is_zero());
        assert_eq!(cosine(&short, &real), 0.0);
        assert_eq!(cosine(&short, &short), 0.0);
    }

    #[test]
    fn norm_matches_entries() {
        let v = SparseVector::new(vec![(3, 3.0), (7, 4.0)]);
        assert!((v.norm() - 5.0).abs() < 1e-9);
    }

    fn small_index(mode: IndexMode) -> CandidateIndex {
        let mut entries: Vec<(String, String)> = Vec::new();
        let names = [
            "Saint Mary Hospital",
            "Saint Mary Hospital Center",
            "General Hospital of Testville",
            "Testville Clinic",
            "University Medical Center",
        ];
        for (i, name) in names.iter().enumerate() {
            // Repeat each name enough times (under distinct owners) to keep
            // its trigrams above the document-frequency floor.
            for copy in 0..10 {
                entries.push((format!("e{:02}-{copy}", i), name.to_string()));
            }
        }
        CandidateIndex::build(&entries, mode)
    }

    #[test]
    fn exact_query_of_indexed_alias_ranks_it_first_with_unit_score() {
        let index = small_index(IndexMode::Exact);
        let hits = index.topk("Saint Mary Hospital", 3);
        assert_eq!(hits[0].0, "e00-0"); // ascending owner id among ties
        assert!((hits[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_vocabulary_query_returns_nothing() {
        let index = small_index(IndexMode::Exact);
        assert!(index.topk("qqqq", 5).is_empty());
        assert!(index.topk("", 5).is_empty());
    }

    #[test]
    fn ties_break_by_ascending_owner() {
        let entries: Vec<(String, String)> = (0..12)
            .map(|i| (format!("{:02}", 11 - i), "alpha beta".to_string()))
            .collect();
        let index = CandidateIndex::build(&entries, IndexMode::Exact);
        let hits = index.topk("alpha beta", 4);
        let owners: Vec<&str> = hits.iter().map(|(o, _)| o.as_str()).collect();
        assert_eq!(owners, ["00", "01", "02", "03"]);
    }

    /// Brute force: score every owner by max cosine over its aliases.
    fn brute_topk(index: &CandidateIndex, query: &str, k: usize) -> Vec<(String, f64)> {
        let q = index.vectorize_query(query);
        let mut best: BTreeMap<String, f64> = BTreeMap::new();
        for ix in 0..index.alias_count() as u32 {
            let s = cosine(&q, index.vector(ix));
            if s > 0.0 {
                let e = best.entry(index.owner(ix).to_string()).or_insert(0.0);
                if s > *e {
                    *e = s;
                }
            }
        }
        let mut ranked: Vec<(String, f64)> = best.into_iter().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(k);
        ranked
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn exact_topk_equals_brute_force(
            texts in proptest::collection::vec("[abc ]{3,10}", 20..60),
            query in "[abc ]{3,10}",
        ) {
            let entries: Vec<(String, String)> = texts
                .into_iter()
                .enumerate()
                .map(|(i, t)| (format!("{:03}", i % 17), t))
                .collect();
            let index = CandidateIndex::build(&entries, IndexMode::Exact);
            prop_assert_eq!(index.topk(&query, 10), brute_topk(&index, &query, 10));
        }

        #[test]
        fn vocabulary_is_permutation_invariant(
            mut texts in proptest::collection::vec("[ab]{3,6}", 15..40),
            seed in any::<u64>(),
        ) {
            let forward = build_vocabulary(&texts);
            // Deterministic shuffle driven by the seed.
            let mut s = seed;
            for i in (1..texts.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                texts.swap(i, (s >> 33) as usize % (i + 1));
            }
            let shuffled = build_vocabulary(&texts);
            prop_assert_eq!(forward.term_to_index, shuffled.term_to_index);
            prop_assert_eq!(forward.doc_freq, shuffled.doc_freq);
        }

        #[test]
        fn cosine_is_symmetric_and_bounded(
            a in proptest::collection::vec((0u32..30, 0.1f64..5.0), 0..8),
            b in proptest::collection::vec((0u32..30, 0.1f64..5.0), 0..8),
        ) {
            // Deduplicate indices to satisfy the sorted-entries contract.
            let dedup = |v: Vec<(u32, f64)>| {
                let mut m = BTreeMap::new();
                for (i, w) in v { m.insert(i, w); }
                SparseVector::new(m.into_iter().collect())
            };
            let (u, v) = (dedup(a), dedup(b));
            let s = cosine(&u, &v);
            prop_assert_eq!(s, cosine(&v, &u));
            prop_assert!((0.0..=1.0 + 1e-9).contains(&s));
        }
    }
}
