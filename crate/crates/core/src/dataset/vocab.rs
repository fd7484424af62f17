use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 17;

/// Sixteen diver gestures plus the negative `none` class, in report order.
pub const CLASS_NAMES: [&str; NUM_CLASSES] = [
    "backward", "boat", "carry", "delimiter", "down", "end", "five", "four", "here", "mosaic",
    "none", "one", "photo", "start", "three", "two", "up",
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassVocab {
    names: Vec<String>,
}

impl Default for ClassVocab {
    fn default() -> Self {
        ClassVocab {
            names: CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl ClassVocab {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.len() != NUM_CLASSES {
            return Err(Error::invalid(format!(
                "vocabulary must have {NUM_CLASSES} classes, got {}",
                names.len()
            )));
        }
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || names[..i].contains(n) {
                return Err(Error::invalid(format!("vocabulary name '{n}' empty or repeated")));
            }
        }
        if names.iter().filter(|n| *n == "none").count() != 1 {
            return Err(Error::invalid("vocabulary needs exactly one 'none' class"));
        }
        Ok(ClassVocab { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }
}
