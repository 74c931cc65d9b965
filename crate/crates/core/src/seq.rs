//! 32-bit serial-number arithmetic for sequence numbers.

#[inline]
pub fn seq_lt(a: u32, b: u32) -> bool {
    (a.wrapping_sub(b) as i32) < 0
}

#[inline]
pub fn seq_le(a: u32, b: u32) -> bool {
    a == b || seq_lt(a, b)
}

#[inline]
pub fn seq_gt(a: u32, b: u32) -> bool {
    seq_lt(b, a)
}

#[inline]
pub fn seq_ge(a: u32, b: u32) -> bool {
    seq_le(b, a)
}

/// Forward distance from `from` to `to`, assuming `to` is not behind `from`.
#[inline]
pub fn seq_diff(to: u32, from: u32) -> u32 {
    to.wrapping_sub(from)
}

#[inline]
pub fn seq_max(a: u32, b: u32) -> u32 {
    if seq_lt(a, b) {
        b
    } else {
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wraps_around() {
        assert!(seq_lt(u32::MAX - 5, 3));
        assert!(seq_gt(3, u32::MAX - 5));
        assert!(seq_le(7, 7));
        assert_eq!(seq_diff(3, u32::MAX - 5), 9);
        assert_eq!(seq_max(u32::MAX, 1), 1);
        assert_eq!(seq_max(10, 2), 10);
    }
}
