use alloc::vec::Vec;

use super::PacketError;
use crate::scheduler::QueueRef;

pub const LINK_HDR_LEN: usize = 4;
pub const NET_HDR_LEN: usize = 12;

/// A materialized packet.
///
/// Wire layout: link header (src host u16, dst host u16), network header
/// (src addr u32, dst addr u32, total length u32 counting the network header
/// and transport bytes), then the transport bytes. All big-endian. Priority,
/// queue selector and header length travel out of band.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WirePacket {
    pub src_host: u16,
    pub dst_host: u16,
    pub src_addr: u32,
    pub dst_addr: u32,
    pub transport: Vec<u8>,
    pub prio: u8,
    pub queue: Option<QueueRef>,
    /// Transport header length, for trace output.
    pub hdr_len: u16,
}

impl WirePacket {
    pub fn new(src_host: u16, dst_host: u16, src_addr: u32, dst_addr: u32, transport: Vec<u8>) -> Self {
        WirePacket {
            src_host,
            dst_host,
            src_addr,
            dst_addr,
            transport,
            prio: 0,
            queue: None,
            hdr_len: 0,
        }
    }

    /// Bytes on the wire.
    pub fn len(&self) -> usize {
        LINK_HDR_LEN + NET_HDR_LEN + self.transport.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn total_length(&self) -> u32 {
        (NET_HDR_LEN + self.transport.len()) as u32
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(&self.src_host.to_be_bytes());
        out.extend_from_slice(&self.dst_host.to_be_bytes());
        out.extend_from_slice(&self.src_addr.to_be_bytes());
        out.extend_from_slice(&self.dst_addr.to_be_bytes());
        out.extend_from_slice(&self.total_length().to_be_bytes());
        out.extend_from_slice(&self.transport);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<WirePacket, PacketError> {
        let need = LINK_HDR_LEN + NET_HDR_LEN;
        if bytes.len() < need {
            return Err(PacketError::Truncated {
                need,
                have: bytes.len(),
            });
        }
        let u16_at = |i: usize| u16::from_be_bytes([bytes[i], bytes[i + 1]]);
        let u32_at = |i: usize| u32::from_be_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
        let total = u32_at(12) as usize;
        if total != bytes.len() - LINK_HDR_LEN {
            return Err(PacketError::LengthMismatch {
                declared: total,
                actual: bytes.len() - LINK_HDR_LEN,
            });
        }
        Ok(WirePacket::new(
            u16_at(0),
            u16_at(2),
            u32_at(4),
            u32_at(8),
            bytes[need..].to_vec(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_layout() {
        let p = WirePacket::new(1, 2, 0x0a000001, 0x0a000002, alloc::vec![0xde, 0xad]);
        assert_eq!(
            p.to_bytes(),
            [0, 1, 0, 2, 10, 0, 0, 1, 10, 0, 0, 2, 0, 0, 0, 14, 0xde, 0xad]
        );
        assert_eq!(WirePacket::from_bytes(&p.to_bytes()).unwrap(), p);
        assert_eq!(p.len(), 18);
    }

    #[test]
    fn length_is_checked() {
        let mut b = WirePacket::new(1, 2, 3, 4, alloc::vec![1, 2, 3]).to_bytes();
        b.pop();
        assert!(matches!(WirePacket::from_bytes(&b), Err(PacketError::LengthMismatch { .. })));
        assert!(matches!(WirePacket::from_bytes(&b[..5]), Err(PacketError::Truncated { .. })));
    }
}
