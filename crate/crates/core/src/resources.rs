//! Rule files bundled into the library as the canonical defaults.

use std::path::Path;

use crate::data_model::{io::parse_schema, FeatureSchema};
use crate::error::Result;

pub const SCHEMA_CSV: &str = include_str!("../resources/schema.csv");
pub const LEXICON_CSV: &str = include_str!("../resources/lexicon.csv");
pub const RULES_JSON: &str = include_str!("../resources/rules.json");
pub const CODEMAP_CSV: &str = include_str!("../resources/codemap.csv");
pub const WINDOWS_CSV: &str = include_str!("../resources/windows.csv");
pub const CHADS2VASC_JSON: &str = include_str!("../resources/scores/chads2vasc.json");
pub const HATCH_JSON: &str = include_str!("../resources/scores/hatch.json");
pub const APPLE_JSON: &str = include_str!("../resources/scores/apple.json");

pub fn canonical_schema() -> FeatureSchema {
    parse_schema(SCHEMA_CSV, Path::new("<bundled schema>")).expect("bundled schema is valid")
}

pub fn schema_or_default(path: Option<&Path>) -> Result<FeatureSchema> {
    match path {
        Some(p) => crate::data_model::io::load_schema(p),
        None => Ok(canonical_schema()),
    }
}
