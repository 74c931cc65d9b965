/// RFC 1071 Internet checksum: ones-complement of the ones-complement sum of
/// big-endian 16-bit words, with an odd trailing byte padded with zero.
pub fn internet_checksum(bytes: &[u8]) -> u16 {
    !fold(sum_words(bytes, 0))
}

/// Checksum over several pieces as if they were concatenated.
pub fn internet_checksum_parts(parts: &[&[u8]]) -> u16 {
    let mut sum = 0u64;
    let mut carry: Option<u8> = None;
    for part in parts {
        let mut p = *part;
        if let Some(hi) = carry.take() {
            match p.split_first() {
                Some((lo, rest)) => {
                    sum += u16::from_be_bytes([hi, *lo]) as u64;
                    p = rest;
                }
                None => {
                    carry = Some(hi);
                    continue;
                }
            }
        }
        let even = p.len() & !1;
        sum = sum_words(&p[..even], sum);
        if even < p.len() {
            carry = Some(p[even]);
        }
    }
    if let Some(hi) = carry {
        sum += u16::from_be_bytes([hi, 0]) as u64;
    }
    !fold(sum)
}

fn sum_words(bytes: &[u8], mut sum: u64) -> u64 {
    let mut chunks = bytes.chunks_exact(2);
    for w in &mut chunks {
        sum += u16::from_be_bytes([w[0], w[1]]) as u64;
    }
    if let [last] = chunks.remainder() {
        sum += u16::from_be_bytes([*last, 0]) as u64;
    }
    sum
}

fn fold(mut sum: u64) -> u16 {
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    sum as u16
}

/// True when a buffer that embeds its own checksum sums to all ones.
pub fn verifies(bytes: &[u8]) -> bool {
    internet_checksum(bytes) == 0
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    // Vectors computed with an independent Python implementation.
    #[test]
    fn reference_vectors() {
        assert_eq!(internet_checksum(&[]), 0xffff);
        assert_eq!(internet_checksum(&[0x00, 0x01, 0xf2, 0x03, 0xf4, 0xf5, 0xf6, 0xf7]), 0x220d);
        assert_eq!(internet_checksum(&[0u8; 20]), 0xffff);
        assert_eq!(internet_checksum(&[0x01]), 0xfeff);
        let ipv4 = [
            0x45, 0x00, 0x00, 0x3c, 0x1c, 0x46, 0x40, 0x00, 0x40, 0x06, 0x00, 0x00, 0xac, 0x10, 0x0a, 0x63, 0xac,
            0x10, 0x0a, 0x0c,
        ];
        assert_eq!(internet_checksum(&ipv4), 0xb1e6);
    }

    proptest! {
        #[test]
        fn embedded_checksum_verifies(mut data in proptest::collection::vec(any::<u8>(), 2..600), at in 0usize..300) {
            let at = (at % (data.len() / 2)) * 2;
            data[at] = 0;
            data[at + 1] = 0;
            let c = internet_checksum(&data);
            data[at..at + 2].copy_from_slice(&c.to_be_bytes());
            prop_assert!(verifies(&data));
        }

        #[test]
        fn parts_match_concatenation(parts in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 0..9), 0..6)) {
            let flat: Vec<u8> = parts.iter().flatten().copied().collect();
            let refs: Vec<&[u8]> = parts.iter().map(|p| p.as_slice()).collect();
            prop_assert_eq!(internet_checksum_parts(&refs), internet_checksum(&flat));
        }
    }
}
