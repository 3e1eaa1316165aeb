//! Name-keyed registries of interchangeable strategies.
//!
//! Each algorithm family (fairness measures, regularizers, scorecard
//! solvers, trainers) exposes its variants through a `Registry` so that
//! configs and the command line select them by name.

use crate::error::{Error, Result};

pub struct Registry<T: ?Sized + 'static> {
    kind: &'static str,
    entries: Vec<(&'static str, &'static T)>,
}

impl<T: ?Sized + 'static> Registry<T> {
    pub const fn new(kind: &'static str) -> Self {
        Registry {
            kind,
            entries: Vec::new(),
        }
    }

    pub fn with(mut self, name: &'static str, strategy: &'static T) -> Self {
        assert!(
            self.entries.iter().all(|(n, _)| *n != name),
            "duplicate {} '{name}'",
            self.kind
        );
        self.entries.push((name, strategy));
        self
    }

    pub fn get(&self, name: &str) -> Result<&'static T> {
        self.entries
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, s)| *s)
            .ok_or_else(|| Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|(n, _)| *n == name)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }
}
