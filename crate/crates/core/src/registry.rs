//! Name-keyed registries of interchangeable strategies.
//!
//! Welfare-rule families and dynamics are looked up by the names used on the
//! command line and in config files.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<&'static str, Box<T>>,
    aliases: BTreeMap<&'static str, &'static str>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
            aliases: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, entry: Box<T>) -> &mut Self {
        self.entries.insert(name, entry);
        self
    }

    pub fn alias(&mut self, alias: &'static str, target: &'static str) -> &mut Self {
        debug_assert!(self.entries.contains_key(target));
        self.aliases.insert(alias, target);
        self
    }

    pub fn get(&self, name: &str) -> Result<&T> {
        let key = self.aliases.get(name).copied().unwrap_or(name);
        self.entries
            .get(key)
            .map(Box::as_ref)
            .ok_or_else(|| Error::UnknownName {
                kind: self.kind,
                name: name.to_string(),
                known: self.names().join(", "),
            })
    }

    /// Canonical names followed by aliases.
    pub fn names(&self) -> Vec<&'static str> {
        self.entries
            .keys()
            .chain(self.aliases.keys())
            .copied()
            .collect()
    }
}
