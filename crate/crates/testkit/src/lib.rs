//! Test-only companions to `medkb-core`: reference implementations written
//! the slow, obvious way (quadratic scans, regex translations, textbook
//! formulas) plus seeded fixture generators. The test suites check the
//! production code against these oracles; nothing here ships.

pub mod gen;
pub mod geo_oracle;
pub mod merge_oracle;
pub mod tfidf_oracle;
pub mod vague_oracle;
