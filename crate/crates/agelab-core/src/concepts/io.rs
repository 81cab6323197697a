//! Concept-space file format.
//!
//! Human-readable, line-oriented `key = value` text with one `[space]`
//! header section followed by one `[record]` section per concept:
//!
//! ```text
//! [space]
//! version = 1
//! seed = 42
//! embed_dim = 16
//! data_dim = 2
//! families = alpha,bravo
//! null = 10
//!
//! [record]
//! id = 0
//! name = alpha0
//! family = alpha
//! mode_mean = 3.25,-0.5        # omitted for the null concept
//! mode_std = 0.16              # omitted for the null concept
//! synonym_of = none            # or a concept id
//! abnormal = false
//! embedding = 0.12,-0.4,...
//! ```
//!
//! Floats are printed in shortest round-trip form, so save followed by
//! load reproduces every value bit-exactly.

use std::path::Path;

use crate::error::{Error, Result};
use crate::kvtext::{self, SectionReader};

use super::{ConceptId, ConceptMode, ConceptRecord, ConceptSpace};

fn join_floats(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_floats(text: &str, line: usize, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim().parse::<f64>().map_err(|_| Error::Config {
                line,
                message: format!("invalid float `{t}` in {what}"),
            })
        })
        .collect()
}

pub fn space_to_text(space: &ConceptSpace) -> String {
    let mut out = String::new();
    out.push_str("# agelab concept space\n[space]\n");
    out.push_str("version = 1\n");
    out.push_str(&format!("seed = {}\n", space.seed));
    out.push_str(&format!("embed_dim = {}\n", space.embed_dim));
    out.push_str(&format!("data_dim = {}\n", space.data_dim));
    out.push_str(&format!("families = {}\n", space.families.join(",")));
    out.push_str(&format!("null = {}\n", space.null_id.0));
    for rec in &space.records {
        out.push_str("\n[record]\n");
        out.push_str(&format!("id = {}\n", rec.id.0));
        out.push_str(&format!("name = {}\n", rec.name));
        out.push_str(&format!("family = {}\n", rec.family));
        if let Some(mode) = &rec.mode {
            out.push_str(&format!("mode_mean = {}\n", join_floats(&mode.mean)));
            out.push_str(&format!("mode_std = {}\n", mode.std));
        }
        match rec.synonym_of {
            Some(id) => out.push_str(&format!("synonym_of = {}\n", id.0)),
            None => out.push_str("synonym_of = none\n"),
        }
        out.push_str(&format!("abnormal = {}\n", rec.abnormal));
        out.push_str(&format!("embedding = {}\n", join_floats(&rec.embedding)));
    }
    out
}

pub fn space_from_text(text: &str) -> Result<ConceptSpace> {
    let sections = kvtext::parse(text)?;
    let header = sections
        .iter()
        .find(|s| s.name == "space")
        .ok_or_else(|| Error::Config {
            line: 1,
            message: "missing [space] section".into(),
        })?;
    let mut reader = SectionReader::new(header);
    let version: u32 = reader.require("version")?;
    if version != 1 {
        return Err(Error::Config {
            line: header.line,
            message: format!("unsupported space file version {version}"),
        });
    }
    let seed: u64 = reader.require("seed")?;
    let embed_dim: usize = reader.require("embed_dim")?;
    let data_dim: usize = reader.require("data_dim")?;
    let families_entry = reader.take("families").ok_or_else(|| Error::Config {
        line: header.line,
        message: "missing required key `families` in [space]".into(),
    })?;
    let families: Vec<String> = families_entry
        .value
        .split(',')
        .map(|f| f.trim().to_string())
        .collect();
    let null_id = ConceptId(reader.require("null")?);
    reader.finish()?;

    let mut records = Vec::new();
    for section in sections.iter().filter(|s| s.name == "record") {
        let mut r = SectionReader::new(section);
        let id = ConceptId(r.require("id")?);
        let name: String = r.require("name")?;
        let family_entry = r.take("family");
        let family = family_entry.map(|e| e.value.clone()).unwrap_or_default();
        let mode = match (r.take("mode_mean"), r.take_parsed::<f64>("mode_std")?) {
            (Some(mean_entry), Some(std)) => Some(ConceptMode {
                mean: parse_floats(&mean_entry.value, mean_entry.line, "mode_mean")?,
                std,
            }),
            (None, None) => None,
            _ => {
                return Err(Error::Config {
                    line: section.line,
                    message: format!("record `{name}` has only one of mode_mean/mode_std"),
                })
            }
        };
        let synonym_of = match r.take("synonym_of") {
            Some(e) if e.value == "none" => None,
            Some(e) => Some(ConceptId(e.value.parse::<usize>().map_err(|_| {
                Error::Config {
                    line: e.line,
                    message: format!("invalid synonym_of `{}`", e.value),
                }
            })?)),
            None => None,
        };
        let abnormal: bool = r.take_parsed("abnormal")?.unwrap_or(false);
        let embedding_entry = r.take("embedding").ok_or_else(|| Error::Config {
            line: section.line,
            message: format!("record `{name}` has no embedding"),
        })?;
        let embedding = parse_floats(&embedding_entry.value, embedding_entry.line, "embedding")?;
        r.finish()?;

        if embedding.len() != embed_dim {
            return Err(Error::Config {
                line: embedding_entry.line,
                message: format!(
                    "record `{name}` embedding has {} values, expected {embed_dim}",
                    embedding.len()
                ),
            });
        }
        if let Some(mode) = &mode {
            if mode.mean.len() != data_dim {
                return Err(Error::Config {
                    line: section.line,
                    message: format!(
                        "record `{name}` mode mean has {} values, expected {data_dim}",
                        mode.mean.len()
                    ),
                });
            }
        }
        if id.0 != records.len() {
            return Err(Error::Config {
                line: section.line,
                message: format!("record ids must be dense and ordered; got {id} next"),
            });
        }
        records.push(ConceptRecord {
            id,
            name,
            family,
            mode,
            embedding,
            synonym_of,
            abnormal,
        });
    }

    if null_id.0 >= records.len() {
        return Err(Error::Config {
            line: header.line,
            message: format!("null id {null_id} is out of range"),
        });
    }
    ConceptSpace::from_parts(records, families, embed_dim, data_dim, null_id, seed)
}

pub fn save_space(space: &ConceptSpace, path: &Path) -> Result<()> {
    std::fs::write(path, space_to_text(space)).map_err(|e| Error::io(path, e))
}

pub fn load_space(path: &Path) -> Result<ConceptSpace> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    space_from_text(&text)
}

#[cfg(test)]
mod tests {
    use super::super::{build_concept_space, SpaceSpec};
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let space = build_concept_space(&SpaceSpec::default(), 42).unwrap();
        let text = space_to_text(&space);
        let loaded = space_from_text(&text).unwrap();
        assert_eq!(space, loaded);
        // And a second serialization is byte-identical.
        assert_eq!(text, space_to_text(&loaded));
    }

    #[test]
    fn rejects_malformed_records() {
        let space = build_concept_space(&SpaceSpec::default(), 42).unwrap();
        let text = space_to_text(&space);
        let broken = text.replace("mode_std = 0.16", "mode_std_typo = 0.16");
        assert!(space_from_text(&broken).is_err());
    }
}
