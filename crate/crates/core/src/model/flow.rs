use core::cmp::Ordering;
use core::fmt;
use core::hash::{Hash, Hasher};

pub const MAX_KEY_ARITY: usize = 6;

/// Structural context-lookup key: an ordered tuple of scalars.
///
/// Per-flow keys carry the full tuple declared by the protocol; group keys
/// are prefixes of it; the global key is empty.
#[derive(Clone, Copy)]
pub struct FlowKey {
    len: u8,
    parts: [u64; MAX_KEY_ARITY],
}

impl FlowKey {
    pub const GLOBAL: FlowKey = FlowKey {
        len: 0,
        parts: [0; MAX_KEY_ARITY],
    };

    /// Panics if more than [`MAX_KEY_ARITY`] components are given.
    pub fn new(parts: &[u64]) -> Self {
        assert!(parts.len() <= MAX_KEY_ARITY, "flow key arity {} too large", parts.len());
        let mut key = FlowKey::GLOBAL;
        key.parts[..parts.len()].copy_from_slice(parts);
        key.len = parts.len() as u8;
        key
    }

    pub fn parts(&self) -> &[u64] {
        &self.parts[..self.len as usize]
    }

    pub fn arity(&self) -> usize {
        self.len as usize
    }

    pub fn part(&self, i: usize) -> u64 {
        self.parts()[i]
    }

    /// The first `n` components, or `None` if the key is shorter.
    pub fn prefix(&self, n: usize) -> Option<FlowKey> {
        (n <= self.arity()).then(|| FlowKey::new(&self.parts[..n]))
    }
}

impl PartialEq for FlowKey {
    fn eq(&self, other: &Self) -> bool {
        self.parts() == other.parts()
    }
}

impl Eq for FlowKey {}

impl Hash for FlowKey {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.parts().hash(state)
    }
}

impl PartialOrd for FlowKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FlowKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.parts().cmp(other.parts())
    }
}

impl fmt::Debug for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, p) in self.parts().iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{p}")?;
        }
        f.write_str(")")
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for FlowKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.parts().serialize(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;

    #[test]
    fn structural_equality_and_prefix() {
        let k = FlowKey::new(&[1, 2, 3, 4]);
        assert_eq!(k, FlowKey::new(&[1, 2, 3, 4]));
        assert_ne!(k, FlowKey::new(&[1, 2, 3]));
        assert_eq!(k.prefix(2), Some(FlowKey::new(&[1, 2])));
        assert_eq!(k.prefix(0), Some(FlowKey::GLOBAL));
        assert_eq!(k.prefix(5), None);
        assert_eq!(format!("{k}"), "(1,2,3,4)");
    }

    #[test]
    fn ordering_is_lexicographic() {
        assert!(FlowKey::new(&[1, 9]) < FlowKey::new(&[2, 0]));
        assert!(FlowKey::new(&[1]) < FlowKey::new(&[1, 0]));
    }
}
