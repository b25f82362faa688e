use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// A named, ordered label set. The position of a label is its class index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelSchema {
    name: String,
    labels: Vec<String>,
}

impl LabelSchema {
    pub fn new(name: impl Into<String>, labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return contract("label schema has no labels");
        }
        let mut seen = HashSet::new();
        for label in &labels {
            if label.is_empty() || label.contains(char::is_whitespace) {
                return contract(format!("invalid label name `{label}`"));
            }
            if !seen.insert(label.as_str()) {
                return contract(format!("duplicate label `{label}`"));
            }
        }
        Ok(Self {
            name: name.into(),
            labels,
        })
    }

    /// The five-class biomedical schema.
    pub fn five() -> Self {
        Self::builtin(
            "five",
            &["BACKGROUND", "OBJECTIVE", "METHOD", "RESULT", "CONCLUSION"],
        )
    }

    /// The three-class schema for computer-science abstracts.
    pub fn three() -> Self {
        Self::builtin("three", &["BACKGROUND", "TECHNIQUE", "OBSERVATION"])
    }

    /// Looks up a built-in schema by name (`three` or `five`).
    pub fn by_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "three" | "3" => Some(Self::three()),
            "five" | "5" => Some(Self::five()),
            _ => None,
        }
    }

    fn builtin(name: &str, labels: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }
}

/// A total, surjective map between two schemas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMapping {
    source: LabelSchema,
    target: LabelSchema,
    image: Vec<usize>,
}

impl LabelMapping {
    pub fn new(source: LabelSchema, target: LabelSchema, pairs: &[(&str, &str)]) -> Result<Self> {
        let mut image = vec![None; source.len()];
        for &(from, to) in pairs {
            let Some(i) = source.index_of(from) else {
                return contract(format!("`{from}` is not in schema `{}`", source.name()));
            };
            let Some(j) = target.index_of(to) else {
                return contract(format!("`{to}` is not in schema `{}`", target.name()));
            };
            if image[i].replace(j).is_some_and(|prev| prev != j) {
                return contract(format!("`{from}` is mapped twice"));
            }
        }
        let image: Vec<usize> = match image.into_iter().collect() {
            Some(image) => image,
            None => return contract("mapping is not total over the source schema"),
        };
        let mut covered = vec![false; target.len()];
        for &j in &image {
            covered[j] = true;
        }
        if let Some(j) = covered.iter().position(|c| !c) {
            return contract(format!(
                "mapping is not surjective: `{}` has no preimage",
                target.labels[j]
            ));
        }
        Ok(Self {
            source,
            target,
            image,
        })
    }

    /// BACKGROUND, OBJECTIVE → BACKGROUND; METHOD → TECHNIQUE;
    /// RESULT, CONCLUSION → OBSERVATION.
    pub fn five_to_three() -> Self {
        Self::new(
            LabelSchema::five(),
            LabelSchema::three(),
            &[
                ("BACKGROUND", "BACKGROUND"),
                ("OBJECTIVE", "BACKGROUND"),
                ("METHOD", "TECHNIQUE"),
                ("RESULT", "OBSERVATION"),
                ("CONCLUSION", "OBSERVATION"),
            ],
        )
        .expect("built-in mapping is valid")
    }

    pub fn identity(schema: &LabelSchema) -> Self {
        Self {
            source: schema.clone(),
            target: schema.clone(),
            image: (0..schema.len()).collect(),
        }
    }

    pub fn source(&self) -> &LabelSchema {
        &self.source
    }

    pub fn target(&self) -> &LabelSchema {
        &self.target
    }

    pub fn apply_index(&self, source_index: usize) -> usize {
        self.image[source_index]
    }

    pub fn apply(&self, label: &str) -> Option<&str> {
        let i = self.source.index_of(label)?;
        Some(&self.target.labels[self.image[i]])
    }
}
