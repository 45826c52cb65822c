//! Plain-text templates with `{placeholder}` slots.
//!
//! A slot is `{` followed by an identifier (`[A-Za-z_][A-Za-z0-9_]*`) and `}`.
//! Any other brace is literal text, which lets the JSON examples inside the
//! prompts stay unescaped.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const TEMPLATES_ENV: &str = "HERDALIGN_TEMPLATES";

#[derive(Debug, PartialEq)]
enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn pieces(text: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = text;
    let mut literal_start = 0usize;
    let mut offset = 0usize;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        if let Some(close) = after.find('}') {
            let name = &after[..close];
            if is_ident(name) {
                let abs_open = offset + open;
                if abs_open > literal_start {
                    out.push(Piece::Text(&text[literal_start..abs_open]));
                }
                out.push(Piece::Slot(name));
                let consumed = open + 1 + close + 1;
                offset += consumed;
                literal_start = offset;
                rest = &rest[consumed..];
                continue;
            }
        }
        offset += open + 1;
        rest = &rest[open + 1..];
    }
    if literal_start < text.len() {
        out.push(Piece::Text(&text[literal_start..]));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Template {
    name: String,
    text: String,
}

impl Template {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        Template {
            name: name.into(),
            text: text.into(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Distinct slot names in order of first appearance.
    pub fn placeholders(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for p in pieces(&self.text) {
            if let Piece::Slot(name) = p {
                if !seen.contains(&name) {
                    seen.push(name);
                }
            }
        }
        seen
    }

    /// Fills every slot; a slot without a binding is an error.
    pub fn render(&self, bindings: &BTreeMap<&str, String>) -> Result<String> {
        let mut out = String::with_capacity(self.text.len() + 256);
        for p in pieces(&self.text) {
            match p {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => match bindings.get(name) {
                    Some(v) => out.push_str(v),
                    None => {
                        return Err(Error::Template(format!(
                            "template '{}' has no binding for {{{name}}}",
                            self.name
                        )))
                    }
                },
            }
        }
        Ok(out)
    }
}

/// The four shipped templates, loaded from a directory or the built-in copies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemplateSet {
    pub p3_prompt: Template,
    pub p3_sft_response: Template,
    pub p1_prompt: Template,
    pub p2_prompt: Template,
}

const FILES: [&str; 4] = [
    "p3_prompt.txt",
    "p3_sft_response.txt",
    "p1_prompt.txt",
    "p2_prompt.txt",
];

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet {
            p3_prompt: Template::new(FILES[0], include_str!("../templates/p3_prompt.txt")),
            p3_sft_response: Template::new(
                FILES[1],
                include_str!("../templates/p3_sft_response.txt"),
            ),
            p1_prompt: Template::new(FILES[2], include_str!("../templates/p1_prompt.txt")),
            p2_prompt: Template::new(FILES[3], include_str!("../templates/p2_prompt.txt")),
        }
    }
}

impl TemplateSet {
    /// Reads the templates from `dir`. Files missing there fall back to the
    /// built-in copy.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut set = TemplateSet::default();
        for (i, file) in FILES.iter().enumerate() {
            let path = dir.join(file);
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let t = Template::new(*file, text);
            match i {
                0 => set.p3_prompt = t,
                1 => set.p3_sft_response = t,
                2 => set.p1_prompt = t,
                _ => set.p2_prompt = t,
            }
        }
        Ok(set)
    }

    /// Explicit directory first, then `HERDALIGN_TEMPLATES`, then built-ins.
    pub fn resolve(dir: Option<&Path>) -> Result<Self> {
        let from_env = std::env::var_os(TEMPLATES_ENV).map(PathBuf::from);
        match dir.map(Path::to_path_buf).or(from_env) {
            Some(d) => Self::load_dir(&d),
            None => Ok(Self::default()),
        }
    }
}
