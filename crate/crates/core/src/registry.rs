//! Name-keyed registries of interchangeable strategies.
//!
//! Samplers and negativity detectors are selected at runtime from
//! configuration strings. A registry maps each name to a factory that builds
//! the boxed trait object from a context value.

use crate::error::{Error, Result};

type Factory<T, C> = Box<dyn Fn(&C) -> Result<Box<T>> + Send + Sync>;

pub struct Registry<T: ?Sized, C> {
    kind: &'static str,
    entries: Vec<(String, Factory<T, C>)>,
}

impl<T: ?Sized, C> Registry<T, C> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: Vec::new(),
        }
    }

    /// Registers a factory, replacing any earlier entry with the same name.
    pub fn register<F>(&mut self, name: &str, factory: F) -> &mut Self
    where
        F: Fn(&C) -> Result<Box<T>> + Send + Sync + 'static,
    {
        self.entries.retain(|(n, _)| n != name);
        self.entries.push((name.to_string(), Box::new(factory)));
        self
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|(n, _)| n == name)
    }

    pub fn create(&self, name: &str, context: &C) -> Result<Box<T>> {
        match self.entries.iter().find(|(n, _)| n == name) {
            Some((_, factory)) => factory(context),
            None => Err(Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greeter {
        fn greet(&self) -> String;
    }
    struct Plain(String);
    impl Greeter for Plain {
        fn greet(&self) -> String {
            self.0.clone()
        }
    }

    #[test]
    fn create_by_name_and_report_unknown() {
        let mut reg: Registry<dyn Greeter, String> = Registry::new("greeter");
        reg.register("plain", |ctx: &String| Ok(Box::new(Plain(ctx.clone())) as Box<dyn Greeter>));
        assert_eq!(reg.create("plain", &"hi".into()).unwrap().greet(), "hi");
        match reg.create("fancy", &String::new()) {
            Err(Error::UnknownStrategy { available, .. }) => assert_eq!(available, "plain"),
            _ => panic!("expected unknown strategy"),
        }
    }

    #[test]
    fn re_registering_replaces() {
        let mut reg: Registry<dyn Greeter, ()> = Registry::new("greeter");
        reg.register("a", |_| Ok(Box::new(Plain("1".into())) as Box<dyn Greeter>));
        reg.register("a", |_| Ok(Box::new(Plain("2".into())) as Box<dyn Greeter>));
        assert_eq!(reg.names(), vec!["a"]);
        assert_eq!(reg.create("a", &()).unwrap().greet(), "2");
    }
}
