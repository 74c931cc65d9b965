use alloc::vec::Vec;

use super::dispatch::ProcessorError;
use super::Name;

/// Per-event transient record shared by the processors of one chain.
///
/// Starts from the protocol's declared values for every event and is never
/// persisted. Processors use it to pass flags such as "skip the remaining
/// ack processing" down the chain; the framework never interprets them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scratchpad {
    vals: Vec<(Name, u64)>,
}

impl Scratchpad {
    pub fn new(decl: &[(Name, u64)]) -> Self {
        Scratchpad {
            vals: decl.to_vec(),
        }
    }

    fn slot(&mut self, name: Name) -> Result<&mut u64, ProcessorError> {
        self.vals
            .iter_mut()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| v)
            .ok_or(ProcessorError::UndeclaredScratch(name))
    }

    pub fn get(&self, name: Name) -> Result<u64, ProcessorError> {
        self.vals
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| *v)
            .ok_or(ProcessorError::UndeclaredScratch(name))
    }

    pub fn set(&mut self, name: Name, value: u64) -> Result<(), ProcessorError> {
        *self.slot(name)? = value;
        Ok(())
    }

    pub fn flag(&self, name: Name) -> Result<bool, ProcessorError> {
        self.get(name).map(|v| v != 0)
    }

    pub fn set_flag(&mut self, name: Name, on: bool) -> Result<(), ProcessorError> {
        self.set(name, on as u64)
    }
}
