//! Sectioned `key = value` text files.
//!
//! Used for schema files (one `[attribute]` block per attribute) and run
//! configs (`[data]`, `[model]`, ...). Blank lines and `#` comments are
//! ignored; section names may repeat.

use std::path::Path;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Document {
    pub context: String,
    pub sections: Vec<Section>,
}

impl Document {
    pub fn parse(context: &str, text: &str) -> Result<Self> {
        let mut sections: Vec<Section> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| Error::Parse {
                    context: context.to_string(),
                    line,
                    message: format!("unterminated section header `{content}`"),
                })?;
                sections.push(Section {
                    name: name.trim().to_string(),
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
                context: context.to_string(),
                line,
                message: format!("expected `key = value`, got `{content}`"),
            })?;
            let section = sections.last_mut().ok_or_else(|| Error::Parse {
                context: context.to_string(),
                line,
                message: "entry before the first section header".to_string(),
            })?;
            let key = key.trim().to_string();
            if section.get(&key).is_some() {
                return Err(Error::Parse {
                    context: context.to_string(),
                    line,
                    message: format!("duplicate key `{key}` in section [{}]", section.name),
                });
            }
            section.entries.push(Entry {
                key,
                value: value.trim().to_string(),
                line,
            });
        }
        Ok(Document {
            context: context.to_string(),
            sections,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&path.display().to_string(), &text)
    }

    pub fn sections<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Section> + 'a {
        self.sections.iter().filter(move |s| s.name == name)
    }

    /// Looks up `key` in the first section called `section`.
    pub fn value(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections
            .iter()
            .filter(|s| s.name == section)
            .find_map(|s| s.get(key))
    }

    pub fn error(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            context: self.context.clone(),
            line,
            message: message.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_repeated_sections_and_comments() {
        let doc = Document::parse(
            "t",
            "# header\n[a]\nx = 1 # trailing\n\n[a]\nx=2\n[b]\ny = hello world\n",
        )
        .unwrap();
        assert_eq!(doc.sections.len(), 3);
        let xs: Vec<_> = doc.sections("a").map(|s| s.get("x").unwrap().value.as_str()).collect();
        assert_eq!(xs, ["1", "2"]);
        assert_eq!(doc.value("b", "y").unwrap().value, "hello world");
        assert_eq!(doc.value("b", "y").unwrap().line, 8);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(Document::parse("t", "x = 1\n").is_err());
        assert!(Document::parse("t", "[a\n").is_err());
        assert!(Document::parse("t", "[a]\njunk\n").is_err());
        assert!(Document::parse("t", "[a]\nx=1\nx=2\n").is_err());
    }
}
