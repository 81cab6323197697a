//! Line-oriented `key = value` text with `[section]` headers.
//!
//! Shared grammar for the experiment config and concept-space files:
//! blank lines and `#` comments are ignored, a `[name]` line opens a
//! section, and every other line must be `key = value`. Values run to the
//! end of the line with surrounding whitespace trimmed. Section names may
//! repeat; entries keep file order.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

pub(crate) fn parse(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| Error::Config {
                line,
                message: format!("unterminated section header `{trimmed}`"),
            })?;
            if name.is_empty() {
                return Err(Error::Config {
                    line,
                    message: "empty section name".into(),
                });
            }
            sections.push(Section {
                name: name.trim().to_string(),
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or_else(|| Error::Config {
            line,
            message: format!("expected `key = value`, got `{trimmed}`"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config {
                line,
                message: "empty key".into(),
            });
        }
        let section = sections.last_mut().ok_or_else(|| Error::Config {
            line,
            message: format!("`{key}` appears before any [section] header"),
        })?;
        section.entries.push(Entry {
            key: key.to_string(),
            value: value.trim().to_string(),
            line,
        });
    }
    Ok(sections)
}

/// Tracks which keys of a section were consumed so unknown keys can be
/// reported with their line numbers.
pub(crate) struct SectionReader<'a> {
    section: &'a Section,
    used: Vec<bool>,
}

impl<'a> SectionReader<'a> {
    pub fn new(section: &'a Section) -> Self {
        SectionReader {
            used: vec![false; section.entries.len()],
            section,
        }
    }

    pub fn name(&self) -> &str {
        &self.section.name
    }

    /// Last occurrence of `key`, marking every occurrence consumed.
    pub fn take(&mut self, key: &str) -> Option<&'a Entry> {
        let mut found = None;
        for (i, e) in self.section.entries.iter().enumerate() {
            if e.key == key {
                self.used[i] = true;
                found = Some(e);
            }
        }
        found
    }

    pub fn take_parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|_| Error::Config {
                line: e.line,
                message: format!(
                    "invalid value `{}` for key `{}` in [{}]",
                    e.value,
                    key,
                    self.section.name
                ),
            }),
        }
    }

    pub fn require<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        self.take_parsed(key)?.ok_or_else(|| Error::Config {
            line: self.section.line,
            message: format!("missing required key `{key}` in [{}]", self.section.name),
        })
    }

    /// Errors if any key was never consumed.
    pub fn finish(self) -> Result<()> {
        for (i, used) in self.used.iter().enumerate() {
            if !used {
                let e = &self.section.entries[i];
                return Err(Error::Config {
                    line: e.line,
                    message: format!("unknown key `{}` in [{}]", e.key, self.section.name),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_entries() {
        let text = "# comment\n[alpha]\nx = 1\ny = two words\n\n[beta]\nz=3\n";
        let sections = parse(text).unwrap();
        assert_eq!(sections.len(), 2);
        assert_eq!(sections[0].name, "alpha");
        assert_eq!(sections[0].entries[1].value, "two words");
        assert_eq!(sections[1].entries[0].line, 7);
    }

    #[test]
    fn reports_line_numbers_on_errors() {
        let err = parse("[a]\nbad line\n").unwrap_err();
        match err {
            Error::Config { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected_on_finish() {
        let sections = parse("[a]\nx = 1\nmystery = 2\n").unwrap();
        let mut reader = SectionReader::new(&sections[0]);
        let _: Option<u32> = reader.take_parsed("x").unwrap();
        let err = reader.finish().unwrap_err();
        match err {
            Error::Config { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("mystery"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }
}
