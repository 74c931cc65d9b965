use alloc::vec;
use alloc::vec::Vec;

use super::blueprint::{Cover, Field, FieldValue, PacketBlueprint, Payload};
use super::checksum::internet_checksum_parts;
use super::PacketError;
use crate::instruction::Uid;
use crate::reassembly::ReassemblyError;

/// Reads TX bytes for Data payloads.
pub trait PayloadSource {
    fn read(&mut self, uid: Uid, offset: u64, len: u64) -> Result<Vec<u8>, ReassemblyError>;
}

impl<F> PayloadSource for F
where
    F: FnMut(Uid, u64, u64) -> Result<Vec<u8>, ReassemblyError>,
{
    fn read(&mut self, uid: Uid, offset: u64, len: u64) -> Result<Vec<u8>, ReassemblyError> {
        self(uid, offset, len)
    }
}

/// Transport bytes of one packet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Serialized {
    pub bytes: Vec<u8>,
    /// Outermost header plus options, in bytes.
    pub hdr_len: usize,
}

pub(crate) fn read_bits(bytes: &[u8], pos: u32, bits: u8) -> u64 {
    let mut v = 0u64;
    for i in 0..bits as u32 {
        let p = pos + i;
        let bit = (bytes[(p / 8) as usize] >> (7 - p % 8)) & 1;
        v = (v << 1) | bit as u64;
    }
    v
}

fn write_bits(bytes: &mut [u8], pos: u32, bits: u8, value: u64) {
    for i in 0..bits as u32 {
        let p = pos + i;
        let bit = (value >> (bits as u32 - 1 - i)) & 1;
        let byte = &mut bytes[(p / 8) as usize];
        let shift = 7 - p % 8;
        *byte = (*byte & !(1 << shift)) | ((bit as u8) << shift);
    }
}

fn pack_header(fields: &[&Field]) -> Result<(Vec<u8>, Vec<(usize, u32)>), PacketError> {
    let bits: u32 = fields.iter().map(|f| f.bits as u32).sum();
    if !bits.is_multiple_of(8) {
        return Err(PacketError::Unaligned(fields.last().map_or("<header>", |f| f.name)));
    }
    let mut out = vec![0u8; (bits / 8) as usize];
    let mut pos = 0u32;
    let mut offsets = Vec::with_capacity(fields.len());
    for (i, f) in fields.iter().enumerate() {
        if f.bits == 0 || f.bits > 64 {
            return Err(PacketError::BadWidth(f.name));
        }
        if let FieldValue::Value(v) = f.value {
            if v & !f.mask() != 0 {
                return Err(PacketError::ValueTooWide {
                    field: f.name,
                    value: v,
                    bits: f.bits,
                });
            }
            write_bits(&mut out, pos, f.bits, v);
        }
        offsets.push((i, pos));
        pos += f.bits as u32;
    }
    Ok((out, offsets))
}

/// Packs the header and options in declared order, appends the payload, and
/// fills computed checksum fields last.
pub fn serialize(bp: &PacketBlueprint, src: &mut dyn PayloadSource) -> Result<Serialized, PacketError> {
    let fields: Vec<&Field> = bp.header.iter().chain(bp.options.iter()).collect();
    let (mut hdr, offsets) = pack_header(&fields)?;
    let hdr_len = hdr.len();

    let payload = match &bp.payload {
        Payload::None => Vec::new(),
        Payload::Data(d) => {
            let bytes = src.read(d.uid, d.offset, d.len)?;
            if bytes.len() as u64 != d.len {
                return Err(PacketError::Payload(ReassemblyError::RangeUnavailable {
                    offset: d.offset,
                    len: d.len,
                }));
            }
            bytes
        }
        Payload::Nested(inner) => {
            let mut out = Vec::new();
            for b in inner {
                out.extend_from_slice(&serialize(b, src)?.bytes);
            }
            out
        }
    };

    let pos_of = |name: &str| -> Result<(u32, u8), PacketError> {
        offsets
            .iter()
            .find(|(i, _)| fields[*i].name == name)
            .map(|(i, p)| (*p, fields[*i].bits))
            .ok_or(PacketError::UnknownField("<checksum cover>"))
    };

    for (i, pos) in &offsets {
        let f = fields[*i];
        let FieldValue::Computed(spec) = &f.value else { continue };
        if f.bits != 16 || pos % 8 != 0 {
            return Err(PacketError::Unaligned(f.name));
        }
        let mut parts: Vec<&[u8]> = Vec::new();
        for c in &spec.cover {
            match *c {
                Cover::Header => parts.push(&hdr),
                Cover::Payload => parts.push(&payload),
                Cover::Fields(first, last) => {
                    let (lo, _) = pos_of(first)?;
                    let (hp, hb) = pos_of(last)?;
                    let hi = hp + hb as u32;
                    if !lo.is_multiple_of(8) || !hi.is_multiple_of(8) || hi < lo {
                        return Err(PacketError::Unaligned(first));
                    }
                    parts.push(&hdr[(lo / 8) as usize..(hi / 8) as usize]);
                }
            }
        }
        let sum = internet_checksum_parts(&parts);
        let at = (pos / 8) as usize;
        hdr[at..at + 2].copy_from_slice(&sum.to_be_bytes());
    }

    hdr.extend_from_slice(&payload);
    Ok(Serialized { bytes: hdr, hdr_len })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packetgen::blueprint::HeaderLayout;
    use crate::packetgen::checksum::verifies;

    const ZERO20: HeaderLayout = HeaderLayout::new(
        "zero",
        &[("a", 32), ("b", 32), ("c", 32), ("d", 32), ("e", 16), ("csum", 16)],
    );

    fn no_data() -> impl FnMut(Uid, u64, u64) -> Result<Vec<u8>, ReassemblyError> {
        |_, offset, len| Err(ReassemblyError::RangeUnavailable { offset, len })
    }

    #[test]
    fn zero_header_checksum_is_all_ones() {
        let bp = ZERO20.blueprint().checksum("csum", &[Cover::Header]);
        let s = serialize(&bp, &mut no_data()).unwrap();
        assert_eq!(s.bytes.len(), 20);
        assert_eq!(&s.bytes[18..20], &[0xff, 0xff]);
        assert!(verifies(&s.bytes));
    }

    #[test]
    fn bit_packing_is_msb_first_big_endian() {
        const L: HeaderLayout = HeaderLayout::new("p", &[("v", 4), ("f", 12), ("x", 16), ("y", 8)]);
        let bp = L.blueprint().set("v", 0xa).set("f", 0x123).set("x", 0xbeef).set("y", 0x7f);
        let s = serialize(&bp, &mut no_data()).unwrap();
        assert_eq!(s.bytes, [0xa1, 0x23, 0xbe, 0xef, 0x7f]);
        let parsed = L.parse(&s.bytes).unwrap();
        assert_eq!(parsed.get("f"), Some(0x123));
        assert_eq!(parsed.get("x"), Some(0xbeef));
    }

    #[test]
    fn payload_and_field_range_cover() {
        const L: HeaderLayout = HeaderLayout::new("p", &[("a", 16), ("b", 16), ("csum", 16), ("pad", 16)]);
        let data: Vec<u8> = (0u8..7).collect();
        let mut src = |_: Uid, o: u64, l: u64| Ok(data[o as usize..(o + l) as usize].to_vec());
        let bp = L
            .blueprint()
            .set("a", 0x1234)
            .set("b", 0xabcd)
            .set("pad", 0x5555)
            .checksum("csum", &[Cover::Fields("a", "b"), Cover::Payload])
            .data(Uid(0), 0, 7, 100);
        let s = serialize(&bp, &mut src).unwrap();
        assert_eq!(s.hdr_len, 8);
        let mut check: Vec<u8> = alloc::vec![0x12, 0x34, 0xab, 0xcd];
        check.extend_from_slice(&data);
        let expect = crate::packetgen::checksum::internet_checksum(&check);
        assert_eq!(u16::from_be_bytes([s.bytes[4], s.bytes[5]]), expect);
        assert_eq!(&s.bytes[8..], &data[..]);
    }

    #[test]
    fn unavailable_payload_propagates() {
        let bp = ZERO20.blueprint().data(Uid(3), 5, 10, 100);
        assert!(matches!(
            serialize(&bp, &mut no_data()),
            Err(PacketError::Payload(ReassemblyError::RangeUnavailable { .. }))
        ));
    }

    #[test]
    fn unaligned_header_is_rejected() {
        const L: HeaderLayout = HeaderLayout::new("u", &[("a", 3)]);
        assert!(matches!(serialize(&L.blueprint(), &mut no_data()), Err(PacketError::Unaligned(_))));
    }
}
