//! Mixture spec files (TOML).
//!
//! ```toml
//! samples = 256            # or: grid = { height = 32, width = 32 }
//! layout = "blocks"        # "blocks" (default) or "iid"
//! seed = 7
//! blocks = [[1, 128], [2, 128]]   # optional explicit runs, 1-based classes
//!
//! [[component]]
//! mean = 128.0
//! variance = 16.0
//! weight = 0.5
//! ```

use std::path::Path;

use classgain::model::{Component, Layout, MixtureSpec, Shape};
use serde::Deserialize;

use crate::error::{CliError, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    samples: Option<usize>,
    grid: Option<RawGrid>,
    #[serde(default)]
    layout: RawLayout,
    #[serde(default)]
    seed: u64,
    blocks: Option<Vec<(usize, usize)>>,
    component: Vec<Component>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    height: usize,
    width: usize,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawLayout {
    #[default]
    Blocks,
    Iid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecFile {
    pub spec: MixtureSpec,
    pub shape: Shape,
}

pub fn load(path: &Path) -> Result<SpecFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse(&text).map_err(|(line, message)| CliError::Spec {
        path: path.to_path_buf(),
        line,
        message,
    })
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of the first occurrence of `key = ...`, for semantic errors.
fn key_line(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('=') || rest.starts_with(']'))
                || l.starts_with(&format!("[[{key}"))
        })
        .map_or(1, |i| i + 1)
}

/// Parses spec text; errors carry a 1-based line number.
pub fn parse(text: &str) -> std::result::Result<SpecFile, (usize, String)> {
    if text.trim().is_empty() {
        return Err((1, "spec file is empty".into()));
    }
    let raw: RawSpec = toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(1, |s| line_of(text, s.start));
        (line, e.message().to_string())
    })?;
    let shape = match (raw.samples, raw.grid) {
        (Some(n), None) => Shape::Linear(n),
        (None, Some(g)) => Shape::Grid {
            height: g.height,
            width: g.width,
        },
        (Some(_), Some(_)) => {
            return Err((
                key_line(text, "grid"),
                "give either `samples` or `grid`, not both".into(),
            ))
        }
        (None, None) => return Err((1, "missing `samples` or `grid`".into())),
    };
    let layout = match (raw.layout, raw.blocks) {
        (RawLayout::Iid, Some(_)) => {
            return Err((
                key_line(text, "blocks"),
                "`blocks` requires layout = \"blocks\"".into(),
            ))
        }
        (RawLayout::Iid, None) => Layout::Iid,
        (RawLayout::Blocks, Some(runs)) => {
            let mut zero_based = Vec::with_capacity(runs.len());
            for (class, len) in runs {
                if class == 0 {
                    return Err((key_line(text, "blocks"), "block classes are 1-based".into()));
                }
                zero_based.push((class - 1, len));
            }
            Layout::Blocks(zero_based)
        }
        (RawLayout::Blocks, None) => {
            MixtureSpec::blocks(raw.component.clone(), shape.len(), raw.seed).layout
        }
    };
    let spec = MixtureSpec {
        components: raw.component,
        layout,
        seed: raw.seed,
    };
    spec.validate(shape.len()).map_err(|e| {
        let msg = e.to_string();
        let key = if msg.contains("block") {
            "blocks"
        } else if msg.contains("component") || msg.contains("weight") {
            "component"
        } else {
            "samples"
        };
        (key_line(text, key), msg)
    })?;
    Ok(SpecFile { spec, shape })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CASE_ONE: &str = "samples = 256\nseed = 3\n\n[[component]]\nmean = 128.0\nvariance = 16.0\nweight = 0.5\n\n[[component]]\nmean = 16.0\nvariance = 16.0\nweight = 0.5\n";

    #[test]
    fn parses_blocks_by_default() {
        let f = parse(CASE_ONE).unwrap();
        assert_eq!(f.shape, Shape::Linear(256));
        assert_eq!(f.spec.seed, 3);
        assert_eq!(f.spec.layout, Layout::Blocks(vec![(0, 128), (1, 128)]));
    }

    #[test]
    fn grid_and_explicit_blocks() {
        let text = CASE_ONE.replace(
            "samples = 256",
            "grid = { height = 4, width = 2 }\nblocks = [[2, 3], [1, 5]]",
        );
        let f = parse(&text).unwrap();
        assert_eq!(
            f.shape,
            Shape::Grid {
                height: 4,
                width: 2
            }
        );
        assert_eq!(f.spec.layout, Layout::Blocks(vec![(1, 3), (0, 5)]));
    }

    #[test]
    fn empty_file_is_an_error() {
        assert_eq!(parse("  \n").unwrap_err().0, 1);
    }

    #[test]
    fn syntax_errors_report_their_line() {
        let text = CASE_ONE.replace(
            "variance = 16.0\nweight = 0.5\n\n[[component]]\nmean = 16.0",
            "variance = 16.0\nweight = 0.5\n\n[[component]]\nmean = = 16.0",
        );
        let (line, _) = parse(&text).unwrap_err();
        assert_eq!(line, 10);
    }

    #[test]
    fn semantic_errors_point_at_the_key() {
        let text = CASE_ONE.replace(
            "samples = 256",
            "samples = 256\nblocks = [[1, 100], [2, 100]]",
        );
        let (line, msg) = parse(&text).unwrap_err();
        assert_eq!(line, 2);
        assert!(msg.contains("cover"), "{msg}");
        let (line, _) =
            parse(&CASE_ONE.replace("weight = 0.5\n\n", "weight = 0.7\n\n")).unwrap_err();
        assert_eq!(line, 4);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let (line, _) = parse(&format!("colour = 1\n{CASE_ONE}")).unwrap_err();
        assert_eq!(line, 1);
    }
}
