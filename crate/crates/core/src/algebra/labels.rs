use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use super::AlgebraError;

/// Shared handle to an ordered set of object labels.
pub type Labels = Arc<LabelSet>;

/// An ordered list of unique object identifiers with O(1) lookup.
#[derive(Clone)]
pub struct LabelSet {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSet {
    pub fn new<I, S>(labels: I) -> Result<Labels, AlgebraError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(AlgebraError::DuplicateLabel(l.clone()));
            }
        }
        Ok(Arc::new(LabelSet { labels, index }))
    }

    pub fn from_strs(labels: &[&str]) -> Result<Labels, AlgebraError> {
        Self::new(labels.iter().copied())
    }

    /// `prefix1, prefix2, …, prefixN`.
    pub fn numbered(prefix: &str, n: usize) -> Labels {
        Self::new((1..=n).map(|i| format!("{prefix}{i}"))).expect("numbered labels are unique")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn get(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    /// Same labels in the same order.
    pub fn same_order(&self, other: &LabelSet) -> bool {
        self.labels == other.labels
    }

    /// Same labels, any order.
    pub fn same_set(&self, other: &LabelSet) -> bool {
        self.len() == other.len() && self.labels.iter().all(|l| other.index.contains_key(l))
    }

    /// For each position in `self`, the position of the same label in `other`.
    pub fn positions_in(&self, other: &LabelSet) -> Result<Vec<usize>, AlgebraError> {
        if !self.same_set(other) {
            return Err(self.mismatch(other));
        }
        Ok(self.labels.iter().map(|l| other.index[l]).collect())
    }

    pub(crate) fn mismatch(&self, other: &LabelSet) -> AlgebraError {
        AlgebraError::LabelMismatch {
            left: self.describe_against(other),
            right: other.describe_against(self),
        }
    }

    fn describe_against(&self, other: &LabelSet) -> String {
        let stray = self.labels.iter().find(|l| !other.index.contains_key(*l));
        match stray {
            Some(l) => format!("{} labels (e.g. `{}` not in the other set)", self.len(), l),
            None => format!("{} labels", self.len()),
        }
    }
}

impl PartialEq for LabelSet {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels
    }
}

impl Eq for LabelSet {}

impl fmt::Debug for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 6;
        write!(f, "LabelSet[{}](", self.len())?;
        for (i, l) in self.labels.iter().take(SHOWN).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{l}")?;
        }
        if self.len() > SHOWN {
            write!(f, ", …")?;
        }
        write!(f, ")")
    }
}
