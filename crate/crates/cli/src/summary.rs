use std::fmt::{self, Display};

use crate::config::Command;

/// Ordered `key = value` lines; keys are stable so scripts can grep them.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    entries: Vec<(&'static str, String)>,
}

impl Summary {
    pub fn new(command: Command) -> Self {
        Self {
            entries: vec![("command", command.name().to_string())],
        }
    }

    pub fn push(&mut self, key: &'static str, value: impl Display) {
        self.entries.push((key, value.to_string()));
    }
}

impl Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}
