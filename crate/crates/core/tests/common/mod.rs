//! Shared by the parser fixture test and the acceptance suite.

#![allow(dead_code)]

pub mod e2e;

use std::fs;
use std::path::{Path, PathBuf};

use proactive_core::suggestion::parse::{parse_suggestions_with, ParseFailure};
use proactive_core::suggestion::SuggestionCategory;
use serde::Deserialize;

#[derive(Debug, Deserialize)]
struct Expected {
    max_n: usize,
    allowed: String,
    outcome: String,
    warnings: usize,
    suggestions: Vec<ExpectedSuggestion>,
}

#[derive(Debug, Deserialize, PartialEq)]
struct ExpectedSuggestion {
    category: SuggestionCategory,
    summary: String,
    #[serde(default)]
    code: Option<String>,
    explanation: Vec<String>,
}

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/parser")
}

pub fn check(raw_path: &Path) -> Result<(), String> {
    let raw = fs::read_to_string(raw_path).map_err(|e| e.to_string())?;
    let exp_path = raw_path.with_extension("expected.json");
    let exp: Expected = serde_json::from_str(&fs::read_to_string(&exp_path).map_err(|e| e.to_string())?)
        .map_err(|e| format!("{}: {e}", exp_path.display()))?;
    let allowed: &[SuggestionCategory] = match exp.allowed.as_str() {
        "debug" => &SuggestionCategory::DEBUG,
        _ => &SuggestionCategory::ALL,
    };
    let got = parse_suggestions_with(&raw, exp.max_n, allowed);
    match (exp.outcome.as_str(), got) {
        ("ok", Ok(batch)) => {
            let got: Vec<_> = batch
                .suggestions
                .into_iter()
                .map(|s| ExpectedSuggestion {
                    category: s.category,
                    summary: s.summary,
                    code: s.code,
                    explanation: s.explanation,
                })
                .collect();
            if got != exp.suggestions {
                return Err(format!("suggestions differ:\n got {got:#?}\n want {:#?}", exp.suggestions));
            }
            if batch.warnings != exp.warnings {
                return Err(format!("warnings {} != {}", batch.warnings, exp.warnings));
            }
            Ok(())
        }
        ("empty", Err(ParseFailure::Empty)) => Ok(()),
        ("no_valid", Err(ParseFailure::NoValidEntries { warnings })) if warnings == exp.warnings => Ok(()),
        (want, got) => Err(format!("expected {want}, got {got:?}")),
    }
}

/// Every `*.txt` in the fixture directory with its expectation.
pub fn fixtures() -> Vec<PathBuf> {
    let mut v: Vec<_> = fs::read_dir(fixture_dir())
        .unwrap()
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    v.sort();
    v
}
