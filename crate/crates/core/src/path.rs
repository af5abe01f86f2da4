//! Node paths and slug helpers.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Ordered label sequence from the root of the domain tree.
///
/// Paths order label-by-label, which is the "lexicographic path" used for
/// every deterministic tie-break in the engine. The textual form joins labels
/// with `/`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct NodePath(Vec<String>);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PathError {
    #[error("empty path")]
    Empty,
    #[error("invalid label {0:?}: labels must be non-empty, trimmed, and contain no '/'")]
    InvalidLabel(String),
}

pub fn validate_label(label: &str) -> Result<(), PathError> {
    if label.is_empty() || label.trim() != label || label.contains('/') {
        return Err(PathError::InvalidLabel(label.to_string()));
    }
    Ok(())
}

impl NodePath {
    pub fn root(label: &str) -> Result<Self, PathError> {
        validate_label(label)?;
        Ok(Self(alloc::vec![label.to_string()]))
    }

    pub fn from_labels<I, S>(labels: I) -> Result<Self, PathError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(PathError::Empty);
        }
        for l in &labels {
            validate_label(l)?;
        }
        Ok(Self(labels))
    }

    pub fn child(&self, label: &str) -> Result<Self, PathError> {
        validate_label(label)?;
        let mut labels = self.0.clone();
        labels.push(label.to_string());
        Ok(Self(labels))
    }

    pub fn parent(&self) -> Option<Self> {
        if self.0.len() <= 1 {
            None
        } else {
            Some(Self(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.0
    }

    pub fn last(&self) -> &str {
        self.0.last().map(String::as_str).unwrap_or("")
    }

    /// Number of labels; the root has depth 1.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn starts_with(&self, prefix: &NodePath) -> bool {
        self.0.starts_with(&prefix.0)
    }

    /// Filename-safe identifier: slugged labels joined with `.`.
    pub fn slug(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(|l| slugify(l)).collect();
        parts.join(".")
    }

    /// Relative directory form used under `skills/` and `tests/`.
    pub fn dir(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(|l| slugify(l)).collect();
        parts.join("/")
    }
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("/"))
    }
}

impl fmt::Debug for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodePath({})", self)
    }
}

impl FromStr for NodePath {
    type Err = PathError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() {
            return Err(PathError::Empty);
        }
        Self::from_labels(s.split('/'))
    }
}

impl Serialize for NodePath {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodePath {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Lowercase ASCII slug: alphanumerics kept, every other run collapsed to `-`.
pub fn slugify(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_dash = false;
    for c in text.chars() {
        if c.is_ascii_alphanumeric() {
            if pending_dash && !out.is_empty() {
                out.push('-');
            }
            pending_dash = false;
            out.push(c.to_ascii_lowercase());
        } else {
            pending_dash = true;
        }
    }
    out
}

pub fn is_slug(s: &str) -> bool {
    !s.is_empty()
        && !s.starts_with('-')
        && !s.ends_with('-')
        && !s.contains("--")
        && s.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
}
