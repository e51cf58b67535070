//! Name-keyed registry of interchangeable algorithm variants.
//!
//! Each family of variants (error schemes, amplification modes,
//! stability-certificate routes, scenario generators) is expressed as a
//! trait; concrete variants are boxed trait objects registered under a
//! short name and looked up at run time.

use crate::error::{QodeError, Result};

/// Ordered collection of named trait objects.
pub struct Registry<T: ?Sized> {
    family: &'static str,
    entries: Vec<(&'static str, Box<T>)>,
}

impl<T: ?Sized> Registry<T> {
    /// Empty registry for the given family name (used in error messages).
    pub fn new(family: &'static str) -> Self {
        Registry {
            family,
            entries: Vec::new(),
        }
    }

    /// Add a variant; a later registration under the same name replaces the earlier one.
    pub fn register(&mut self, name: &'static str, item: Box<T>) -> &mut Self {
        if let Some(slot) = self.entries.iter_mut().find(|(n, _)| *n == name) {
            slot.1 = item;
        } else {
            self.entries.push((name, item));
        }
        self
    }

    /// Builder-style [`Registry::register`].
    pub fn with(mut self, name: &'static str, item: Box<T>) -> Self {
        self.register(name, item);
        self
    }

    /// Look up a variant by name.
    pub fn get(&self, name: &str) -> Result<&T> {
        self.entries
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, item)| item.as_ref())
            .ok_or_else(|| {
                QodeError::invalid(
                    "strategy",
                    format!(
                        "unknown {} `{name}`; known: {}",
                        self.family,
                        self.names().join(", ")
                    ),
                )
            })
    }

    /// Registered names in registration order.
    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    /// Iterate over `(name, variant)` pairs in registration order.
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &T)> {
        self.entries.iter().map(|(n, item)| (*n, item.as_ref()))
    }

    /// Number of registered variants.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// True when nothing is registered.
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Shape {
        fn sides(&self) -> u32;
    }
    struct Tri;
    struct Quad;
    impl Shape for Tri {
        fn sides(&self) -> u32 {
            3
        }
    }
    impl Shape for Quad {
        fn sides(&self) -> u32 {
            4
        }
    }

    #[test]
    fn lookup_by_name() {
        let reg = Registry::<dyn Shape>::new("shape")
            .with("tri", Box::new(Tri))
            .with("quad", Box::new(Quad));
        assert_eq!(reg.get("quad").unwrap().sides(), 4);
        assert_eq!(reg.names(), vec!["tri", "quad"]);
        let err = reg.get("hex").err().unwrap();
        assert!(err.to_string().contains("tri, quad"));
    }

    #[test]
    fn re_registration_replaces() {
        let mut reg: Registry<dyn Shape> = Registry::new("shape");
        reg.register("x", Box::new(Tri));
        reg.register("x", Box::new(Quad));
        assert_eq!(reg.len(), 1);
        assert_eq!(reg.get("x").unwrap().sides(), 4);
    }
}
