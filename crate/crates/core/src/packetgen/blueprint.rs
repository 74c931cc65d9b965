use alloc::vec::Vec;

use super::PacketError;
use crate::instruction::Uid;
use crate::model::Name;

/// Byte ranges a computed checksum covers, concatenated in list order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cover {
    /// The whole header and options, with checksum fields zeroed.
    Header,
    /// Header bytes from the start of `first` to the end of `last`.
    Fields(Name, Name),
    /// The serialized payload, nested blueprints included.
    Payload,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChecksumSpec {
    pub cover: Vec<Cover>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FieldValue {
    Value(u64),
    /// RFC 1071 checksum filled in at serialization time. The field must be
    /// 16 bits wide and byte aligned.
    Computed(ChecksumSpec),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Field {
    pub name: Name,
    pub bits: u8,
    pub value: FieldValue,
}

impl Field {
    pub fn new(name: Name, bits: u8, value: u64) -> Self {
        Field {
            name,
            bits,
            value: FieldValue::Value(value),
        }
    }

    pub fn concrete(&self) -> Option<u64> {
        match self.value {
            FieldValue::Value(v) => Some(v),
            FieldValue::Computed(_) => None,
        }
    }

    pub fn mask(&self) -> u64 {
        width_mask(self.bits)
    }
}

pub(crate) fn width_mask(bits: u8) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// Bytes `[offset, offset + len)` of TX unit `uid`, cut into packets of at
/// most `seg_unit` bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DataRef {
    pub uid: Uid,
    pub offset: u64,
    pub len: u64,
    pub seg_unit: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    None,
    Data(DataRef),
    Nested(Vec<PacketBlueprint>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PacketBlueprint {
    pub header: Vec<Field>,
    /// Variable-length fields serialized right after the header.
    pub options: Vec<Field>,
    pub payload: Payload,
}

impl PacketBlueprint {
    pub fn new(header: Vec<Field>) -> Self {
        PacketBlueprint {
            header,
            options: Vec::new(),
            payload: Payload::None,
        }
    }

    fn find(&self, name: &str) -> Option<&Field> {
        self.header.iter().chain(self.options.iter()).find(|f| f.name == name)
    }

    fn find_mut(&mut self, name: &str) -> Option<&mut Field> {
        self.header
            .iter_mut()
            .chain(self.options.iter_mut())
            .find(|f| f.name == name)
    }

    pub fn get(&self, name: &str) -> Option<u64> {
        self.find(name).and_then(Field::concrete)
    }

    pub fn has_field(&self, name: &str) -> bool {
        self.find(name).is_some()
    }

    /// Sets a concrete value, truncated to the field width. Panics on an
    /// unknown field since that is a protocol programming error.
    pub fn set(mut self, name: Name, value: u64) -> Self {
        self.set_mut(name, value)
            .unwrap_or_else(|e| panic!("blueprint: {e}"));
        self
    }

    pub fn set_mut(&mut self, name: Name, value: u64) -> Result<(), PacketError> {
        let f = self.find_mut(name).ok_or(PacketError::UnknownField(name))?;
        f.value = FieldValue::Value(value & f.mask());
        Ok(())
    }

    pub fn checksum(mut self, name: &str, cover: &[Cover]) -> Self {
        let f = self
            .find_mut(name)
            .unwrap_or_else(|| panic!("blueprint: no field `{name}`"));
        f.value = FieldValue::Computed(ChecksumSpec {
            cover: cover.to_vec(),
        });
        self
    }

    pub fn option(mut self, name: Name, bits: u8, value: u64) -> Self {
        self.options.push(Field::new(name, bits, value & width_mask(bits)));
        self
    }

    pub fn data(mut self, uid: Uid, offset: u64, len: u64, seg_unit: u64) -> Self {
        self.payload = Payload::Data(DataRef {
            uid,
            offset,
            len,
            seg_unit: seg_unit.max(1),
        });
        self
    }

    pub fn nested(mut self, inner: Vec<PacketBlueprint>) -> Self {
        self.payload = Payload::Nested(inner);
        self
    }

    pub fn header_bits(&self) -> u32 {
        self.header
            .iter()
            .chain(self.options.iter())
            .map(|f| f.bits as u32)
            .sum()
    }

    /// Payload byte count once serialized.
    pub fn payload_len(&self) -> u64 {
        match &self.payload {
            Payload::None => 0,
            Payload::Data(d) => d.len,
            Payload::Nested(inner) => inner.iter().map(|b| b.wire_len()).sum(),
        }
    }

    pub fn wire_len(&self) -> u64 {
        self.header_bits().div_ceil(8) as u64 + self.payload_len()
    }

    pub fn payload_is_empty(&self) -> bool {
        self.payload_len() == 0
    }

    /// Data payload, if any.
    pub fn data_ref(&self) -> Option<&DataRef> {
        match &self.payload {
            Payload::Data(d) => Some(d),
            _ => None,
        }
    }

    pub fn same_layout(&self, other: &PacketBlueprint) -> bool {
        self.header.len() == other.header.len()
            && self
                .header
                .iter()
                .zip(other.header.iter())
                .all(|(a, b)| a.name == b.name && a.bits == b.bits)
    }
}

/// A named, fixed header layout shared by a protocol's parser and its
/// blueprints. Fields are packed MSB first in declaration order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeaderLayout {
    pub name: Name,
    pub fields: &'static [(Name, u8)],
}

/// Field values decoded from a header.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedHeader {
    pub values: Vec<(Name, u64)>,
}

impl ParsedHeader {
    pub fn get(&self, name: &str) -> Option<u64> {
        self.values.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }

    /// Missing fields read as zero; layouts are static so a missing name is
    /// a programming error caught by the round-trip tests.
    pub fn val(&self, name: &str) -> u64 {
        self.get(name).unwrap_or(0)
    }
}

impl HeaderLayout {
    pub const fn new(name: Name, fields: &'static [(Name, u8)]) -> Self {
        HeaderLayout { name, fields }
    }

    pub fn bits(&self) -> u32 {
        self.fields.iter().map(|(_, b)| *b as u32).sum()
    }

    /// Header length in bytes.
    pub fn len(&self) -> usize {
        self.bits().div_ceil(8) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// Blueprint with every field of this layout set to zero.
    pub fn blueprint(&self) -> PacketBlueprint {
        PacketBlueprint::new(
            self.fields
                .iter()
                .map(|&(name, bits)| Field::new(name, bits, 0))
                .collect(),
        )
    }

    pub fn parse(&self, bytes: &[u8]) -> Result<ParsedHeader, PacketError> {
        if bytes.len() < self.len() {
            return Err(PacketError::Truncated {
                need: self.len(),
                have: bytes.len(),
            });
        }
        let mut pos = 0u32;
        let values = self
            .fields
            .iter()
            .map(|&(name, bits)| {
                let v = super::serialize::read_bits(bytes, pos, bits);
                pos += bits as u32;
                (name, v)
            })
            .collect();
        Ok(ParsedHeader { values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const L: HeaderLayout = HeaderLayout::new("t", &[("a", 4), ("b", 12), ("c", 16)]);

    #[test]
    fn layout_blueprint_and_lengths() {
        let bp = L.blueprint().set("a", 0x1f).set("c", 7);
        assert_eq!(bp.get("a"), Some(0xf));
        assert_eq!(bp.get("c"), Some(7));
        assert_eq!(L.len(), 4);
        assert_eq!(bp.wire_len(), 4);
        let with_data = bp.clone().data(Uid(0), 10, 3000, 1460);
        assert_eq!(with_data.wire_len(), 3004);
        let nested = L.blueprint().nested(alloc::vec![with_data.clone(), with_data]);
        assert_eq!(nested.payload_len(), 6008);
    }

    #[test]
    fn set_unknown_field_is_an_error() {
        let mut bp = L.blueprint();
        assert!(bp.set_mut("zz", 1).is_err());
    }
}
