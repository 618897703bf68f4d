//! Fixed-size bitsets over the (state, action) pairs of an MDP.

use std::io::{self, Read, Write};

/// Set of pair indices, stored LSB-first in 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairSet {
    len: usize,
    words: Vec<u64>,
}

impl PairSet {
    pub fn new(len: usize) -> Self {
        Self {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut set = Self::new(len);
        for i in indices {
            set.insert(i);
        }
        set
    }

    /// Universe size.
    pub fn capacity(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn insert(&mut self, i: usize) {
        assert!(i < self.len, "pair index {i} out of range {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        i < self.len && self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn union_with(&mut self, other: &PairSet) {
        assert_eq!(self.len, other.len, "pair universes differ");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn intersection_count(&self, other: &PairSet) -> usize {
        assert_eq!(self.len, other.len, "pair universes differ");
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn is_subset(&self, other: &PairSet) -> bool {
        self.len == other.len && self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + bit)
            })
        })
    }

    /// Writes `len` as a little-endian u64 followed by ceil(len/8) bytes,
    /// bit `i` stored in byte `i/8` at position `i%8`.
    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        w.write_all(&(self.len as u64).to_le_bytes())?;
        let n_bytes = self.len.div_ceil(8);
        let bytes: Vec<u8> = (0..n_bytes)
            .map(|b| (self.words[b / 8] >> ((b % 8) * 8)) as u8)
            .collect();
        w.write_all(&bytes)
    }

    pub fn read_from(mut r: impl Read) -> io::Result<Self> {
        let mut header = [0u8; 8];
        r.read_exact(&mut header)?;
        let len = usize::try_from(u64::from_le_bytes(header))
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidData, "bitset too large"))?;
        let mut bytes = vec![0u8; len.div_ceil(8)];
        r.read_exact(&mut bytes)?;
        let mut set = Self::new(len);
        for (b, &byte) in bytes.iter().enumerate() {
            set.words[b / 8] |= u64::from(byte) << ((b % 8) * 8);
        }
        if len % 64 != 0 {
            if let Some(last) = set.words.last() {
                if last >> (len % 64) != 0 {
                    return Err(io::Error::new(
                        io::ErrorKind::InvalidData,
                        "bits set beyond declared length",
                    ));
                }
            }
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn byte_layout_is_lsb_first() {
        let set = PairSet::from_indices(10, [0, 9]);
        let mut buf = Vec::new();
        set.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], &10u64.to_le_bytes());
        assert_eq!(&buf[8..], &[0b0000_0001, 0b0000_0010]);
    }

    proptest! {
        #[test]
        fn serialization_roundtrip(len in 1usize..300, raw in proptest::collection::vec(0usize..300, 0..50)) {
            let set = PairSet::from_indices(len, raw.into_iter().filter(|&i| i < len));
            let mut buf = Vec::new();
            set.write_to(&mut buf).unwrap();
            let back = PairSet::read_from(&buf[..]).unwrap();
            prop_assert_eq!(&back, &set);
            prop_assert_eq!(back.iter().count(), set.count());
        }
    }
}
