//! Piece identities and fixed-width piece-set masks.

use std::fmt;
use std::ops::{BitAnd, BitOr, Not, Sub};
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

const WORDS: usize = 16;

/// Largest master-file size a [`PieceSet`] can address.
pub const MAX_PIECES: usize = WORDS * 64;

/// One piece of the master-file, numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PieceId(u16);

impl PieceId {
    pub fn new(index: usize) -> Option<Self> {
        (1..=MAX_PIECES).contains(&index).then_some(PieceId(index as u16))
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    fn bit(self) -> (usize, u64) {
        let z = self.0 as usize - 1;
        (z / 64, 1u64 << (z % 64))
    }
}

impl fmt::Display for PieceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A set of pieces as a bitmask over `1..=MAX_PIECES`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PieceSet {
    words: [u64; WORDS],
}

impl PieceSet {
    pub const EMPTY: PieceSet = PieceSet { words: [0; WORDS] };

    pub fn new() -> Self {
        Self::EMPTY
    }

    /// `{first, ..., last}`; empty when `first > last`.
    pub fn range(first: usize, last: usize) -> Self {
        let mut s = Self::EMPTY;
        for i in first.max(1)..=last.min(MAX_PIECES) {
            s.words[(i - 1) / 64] |= 1 << ((i - 1) % 64);
        }
        s
    }

    /// The master-file `[K] = {1, ..., K}`.
    pub fn first_n(k: usize) -> Self {
        Self::range(1, k)
    }

    pub fn from_pieces<I: IntoIterator<Item = PieceId>>(it: I) -> Self {
        let mut s = Self::EMPTY;
        for p in it {
            s.insert(p);
        }
        s
    }

    #[inline]
    pub fn insert(&mut self, p: PieceId) -> bool {
        let (w, b) = p.bit();
        let fresh = self.words[w] & b == 0;
        self.words[w] |= b;
        fresh
    }

    #[inline]
    pub fn remove(&mut self, p: PieceId) -> bool {
        let (w, b) = p.bit();
        let had = self.words[w] & b != 0;
        self.words[w] &= !b;
        had
    }

    #[inline]
    pub fn contains(&self, p: PieceId) -> bool {
        let (w, b) = p.bit();
        self.words[w] & b != 0
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    #[inline]
    pub fn is_subset(&self, other: &PieceSet) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    #[inline]
    pub fn intersects(&self, other: &PieceSet) -> bool {
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    /// Largest piece index present, 0 for the empty set.
    pub fn max_index(&self) -> usize {
        for (w, &word) in self.words.iter().enumerate().rev() {
            if word != 0 {
                return w * 64 + 64 - word.leading_zeros() as usize;
            }
        }
        0
    }

    /// The `k`-th smallest element (0-based).
    pub fn nth(&self, mut k: usize) -> Option<PieceId> {
        for (w, &word) in self.words.iter().enumerate() {
            let c = word.count_ones() as usize;
            if k < c {
                let mut word = word;
                for _ in 0..k {
                    word &= word - 1;
                }
                return Some(PieceId((w * 64 + word.trailing_zeros() as usize + 1) as u16));
            }
            k -= c;
        }
        None
    }

    pub fn iter(&self) -> Iter<'_> {
        Iter { set: self, word: 0, bits: self.words[0] }
    }
}

impl BitAnd for PieceSet {
    type Output = PieceSet;
    #[inline]
    fn bitand(mut self, rhs: PieceSet) -> PieceSet {
        for (a, b) in self.words.iter_mut().zip(rhs.words) {
            *a &= b;
        }
        self
    }
}

impl BitOr for PieceSet {
    type Output = PieceSet;
    #[inline]
    fn bitor(mut self, rhs: PieceSet) -> PieceSet {
        for (a, b) in self.words.iter_mut().zip(rhs.words) {
            *a |= b;
        }
        self
    }
}

impl Sub for PieceSet {
    type Output = PieceSet;
    #[inline]
    fn sub(mut self, rhs: PieceSet) -> PieceSet {
        for (a, b) in self.words.iter_mut().zip(rhs.words) {
            *a &= !b;
        }
        self
    }
}

/// Complement within `1..=MAX_PIECES`.
impl Not for PieceSet {
    type Output = PieceSet;
    fn not(mut self) -> PieceSet {
        for a in self.words.iter_mut() {
            *a = !*a;
        }
        self
    }
}

pub struct Iter<'a> {
    set: &'a PieceSet,
    word: usize,
    bits: u64,
}

impl Iterator for Iter<'_> {
    type Item = PieceId;

    #[inline]
    fn next(&mut self) -> Option<PieceId> {
        loop {
            if self.bits != 0 {
                let tz = self.bits.trailing_zeros() as usize;
                self.bits &= self.bits - 1;
                return Some(PieceId((self.word * 64 + tz + 1) as u16));
            }
            self.word += 1;
            if self.word >= WORDS {
                return None;
            }
            self.bits = self.set.words[self.word];
        }
    }
}

impl<'a> IntoIterator for &'a PieceSet {
    type Item = PieceId;
    type IntoIter = Iter<'a>;
    fn into_iter(self) -> Iter<'a> {
        self.iter()
    }
}

impl FromIterator<PieceId> for PieceSet {
    fn from_iter<I: IntoIterator<Item = PieceId>>(iter: I) -> Self {
        Self::from_pieces(iter)
    }
}

/// Compact notation: inclusive ranges and singletons, e.g. `1-10,12,15-18`.
/// The empty set prints as the empty string.
impl fmt::Display for PieceSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        let mut it = self.iter().peekable();
        while let Some(start) = it.next() {
            let mut end = start.index();
            while let Some(n) = it.peek() {
                if n.index() == end + 1 {
                    end += 1;
                    it.next();
                } else {
                    break;
                }
            }
            if !first {
                f.write_str(",")?;
            }
            first = false;
            if end == start.index() {
                write!(f, "{start}")?;
            } else {
                write!(f, "{start}-{end}")?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for PieceSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{self}}}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid piece set `{0}`: expected comma-separated indices or ranges in 1..={MAX_PIECES}")]
pub struct ParsePieceSetError(String);

impl FromStr for PieceSet {
    type Err = ParsePieceSetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParsePieceSetError(s.to_string());
        let mut set = PieceSet::EMPTY;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (a, b) = match part.split_once('-') {
                Some((a, b)) => (a.trim(), b.trim()),
                None => (part, part),
            };
            let a: usize = a.parse().map_err(|_| bad())?;
            let b: usize = b.parse().map_err(|_| bad())?;
            if a == 0 || b > MAX_PIECES || a > b {
                return Err(bad());
            }
            set = set | PieceSet::range(a, b);
        }
        Ok(set)
    }
}

impl Serialize for PieceSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PieceSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = PieceSet;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a piece list such as \"1-10,12\" or [1, 2, 3]")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<PieceSet, E> {
                v.parse().map_err(E::custom)
            }

            fn visit_seq<A: de::SeqAccess<'de>>(self, mut seq: A) -> Result<PieceSet, A::Error> {
                let mut set = PieceSet::EMPTY;
                while let Some(i) = seq.next_element::<usize>()? {
                    let p = PieceId::new(i)
                        .ok_or_else(|| de::Error::custom(format!("piece {i} outside 1..={MAX_PIECES}")))?;
                    set.insert(p);
                }
                Ok(set)
            }
        }
        d.deserialize_any(V)
    }
}
