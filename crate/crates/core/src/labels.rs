use std::borrow::Cow;
use std::path::Path;

use crate::error::{Error, Result};

/// PASCAL VOC class order.
pub const VOC_CLASSES: [&str; 20] = [
    "aeroplane",
    "bicycle",
    "bird",
    "boat",
    "bottle",
    "bus",
    "car",
    "cat",
    "chair",
    "cow",
    "diningtable",
    "dog",
    "horse",
    "motorbike",
    "person",
    "pottedplant",
    "sheep",
    "sofa",
    "train",
    "tvmonitor",
];

/// Class id to name table. Ids without a name print as their number.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClassNames {
    names: Vec<String>,
}

impl ClassNames {
    pub fn new(names: Vec<String>) -> Self {
        ClassNames { names }
    }

    pub fn voc() -> Self {
        Self::new(VOC_CLASSES.iter().map(|s| s.to_string()).collect())
    }

    /// No names: every class prints as its id.
    pub fn ids_only() -> Self {
        Self::default()
    }

    /// One name per non-empty line.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let names: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        if let Some(bad) = names.iter().find(|n| n.contains(char::is_whitespace)) {
            return Err(Error::format(
                "class names",
                format!("name `{bad}` contains whitespace"),
            ));
        }
        Ok(Self::new(names))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn label(&self, id: usize) -> Cow<'_, str> {
        match self.names.get(id) {
            Some(n) => Cow::Borrowed(n),
            None => Cow::Owned(id.to_string()),
        }
    }

    /// Accepts either a numeric id or a known name.
    pub fn lookup(&self, token: &str) -> Option<usize> {
        if let Ok(id) = token.parse::<usize>() {
            return Some(id);
        }
        self.names.iter().position(|n| n == token)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_and_lookup() {
        let n = ClassNames::voc();
        assert_eq!(n.label(11), "dog");
        assert_eq!(n.label(25), "25");
        assert_eq!(n.lookup("person"), Some(14));
        assert_eq!(n.lookup("7"), Some(7));
        assert_eq!(n.lookup("unicorn"), None);
        assert_eq!(ClassNames::ids_only().label(3), "3");
    }
}
