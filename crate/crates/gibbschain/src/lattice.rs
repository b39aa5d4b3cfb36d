//! Finite alphabets, site-anchored words, and factor grammars on the line.
//!
//! Sites are integers. A `Word` is a block of symbols anchored at a start
//! site; a `Grammar` is an order-m table of allowed (m+1)-factors defining a
//! subshift of finite type. Admissibility of any word reduces to checking its
//! factors against the table.

use crate::error::{Error, Result};
use std::collections::BTreeSet;
use std::fmt;

/// Symbol index into an `Alphabet`.
pub type Sym = u8;

/// Finite symbol set with stable indices and printable names.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alphabet {
    names: Vec<String>,
}

impl Alphabet {
    /// Builds an alphabet from symbol names. Names must be nonempty and unique.
    pub fn new<S: Into<String>>(names: Vec<S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::InvalidAlphabet("no symbols".into()));
        }
        if names.len() > 64 {
            return Err(Error::InvalidAlphabet(format!(
                "{} symbols exceeds the supported maximum of 64",
                names.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for n in &names {
            if n.is_empty() {
                return Err(Error::InvalidAlphabet("empty symbol name".into()));
            }
            if !seen.insert(n.clone()) {
                return Err(Error::InvalidAlphabet(format!("duplicate symbol {n:?}")));
            }
        }
        Ok(Self { names })
    }

    /// Binary alphabet named "0", "1".
    pub fn binary() -> Self {
        Self::new(vec!["0", "1"]).expect("binary alphabet is valid")
    }

    /// Number of symbols.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    /// True when the alphabet has exactly one symbol.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of a symbol name.
    pub fn id_of(&self, name: &str) -> Result<Sym> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| i as Sym)
            .ok_or_else(|| Error::InvalidAlphabet(format!("unknown symbol {name:?}")))
    }

    /// Printable name of a symbol index.
    pub fn name(&self, s: Sym) -> &str {
        &self.names[s as usize]
    }

    /// Iterator over all symbol indices.
    pub fn syms(&self) -> impl Iterator<Item = Sym> + Clone {
        (0..self.names.len() as Sym).into_iter()
    }
}

/// Inclusive integer interval of sites.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Interval {
    lo: i64,
    hi: i64,
}

impl Interval {
    /// Builds `[lo, hi]`; requires `lo <= hi`.
    pub fn new(lo: i64, hi: i64) -> Result<Self> {
        if lo > hi {
            return Err(Error::Config(format!("interval [{lo}, {hi}] is empty")));
        }
        Ok(Self { lo, hi })
    }

    /// Left endpoint.
    pub fn lo(&self) -> i64 {
        self.lo
    }

    /// Right endpoint (inclusive).
    pub fn hi(&self) -> i64 {
        self.hi
    }

    /// Number of sites.
    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    /// Never true; intervals are nonempty by construction.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// True when `site` lies inside.
    pub fn contains(&self, site: i64) -> bool {
        self.lo <= site && site <= self.hi
    }

    /// Iterator over sites in ascending order.
    pub fn sites(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi
    }

    /// Interval extended by `k` sites to the right.
    pub fn grow_right(&self, k: usize) -> Self {
        Self {
            lo: self.lo,
            hi: self.hi + k as i64,
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Single-site substitution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SitePatch {
    /// Site to overwrite.
    pub site: i64,
    /// Replacement symbol.
    pub sym: Sym,
}

/// Symbol block anchored at a start site; covers `start..=start+len-1`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Word {
    start: i64,
    syms: Vec<Sym>,
}

impl Word {
    /// Builds a word anchored at `start`.
    pub fn new(start: i64, syms: Vec<Sym>) -> Self {
        Self { start, syms }
    }

    /// Word with no sites, anchored so that appending begins at `next`.
    pub fn empty(next: i64) -> Self {
        Self {
            start: next,
            syms: Vec::new(),
        }
    }

    /// Parses symbol names separated by nothing (single-char names) or spaces.
    pub fn parse(start: i64, text: &str, alphabet: &Alphabet) -> Result<Self> {
        let single = alphabet.syms().all(|s| alphabet.name(s).chars().count() == 1);
        let mut syms = Vec::new();
        if text.contains(' ') || !single {
            for tok in text.split_whitespace() {
                syms.push(alphabet.id_of(tok)?);
            }
        } else {
            for ch in text.chars() {
                syms.push(alphabet.id_of(&ch.to_string())?);
            }
        }
        Ok(Self { start, syms })
    }

    /// First covered site.
    pub fn start(&self) -> i64 {
        self.start
    }

    /// Last covered site; `start - 1` when empty.
    pub fn end(&self) -> i64 {
        self.start + self.syms.len() as i64 - 1
    }

    /// Number of sites.
    pub fn len(&self) -> usize {
        self.syms.len()
    }

    /// True when the word covers no sites.
    pub fn is_empty(&self) -> bool {
        self.syms.is_empty()
    }

    /// Symbol at `site`, if covered.
    pub fn get(&self, site: i64) -> Option<Sym> {
        if site < self.start || site > self.end() {
            None
        } else {
            Some(self.syms[(site - self.start) as usize])
        }
    }

    /// Overwrites the symbol at `site`; the site must be covered.
    pub fn set(&mut self, site: i64, sym: Sym) {
        let i = (site - self.start) as usize;
        self.syms[i] = sym;
    }

    /// Raw symbol slice, ascending by site.
    pub fn syms(&self) -> &[Sym] {
        &self.syms
    }

    /// Copy with one site replaced; the site must be covered.
    pub fn patched(&self, p: SitePatch) -> Self {
        let mut w = self.clone();
        w.set(p.site, p.sym);
        w
    }

    /// Appends one symbol on the right.
    pub fn push(&mut self, sym: Sym) {
        self.syms.push(sym);
    }

    /// Sub-word covering `iv`, which must lie inside this word.
    pub fn slice(&self, iv: Interval) -> Result<Self> {
        if iv.lo() < self.start || iv.hi() > self.end() {
            return Err(Error::WindowTooShort {
                site: iv.lo(),
                needed: iv.len(),
                available: self.len(),
            });
        }
        let a = (iv.lo() - self.start) as usize;
        let b = (iv.hi() - self.start) as usize;
        Ok(Self {
            start: iv.lo(),
            syms: self.syms[a..=b].to_vec(),
        })
    }

    /// Concatenation with a word starting right after this one.
    pub fn join(&self, right: &Word) -> Result<Self> {
        if right.start != self.end() + 1 {
            return Err(Error::Config(format!(
                "cannot join word at {} to word ending at {}",
                right.start,
                self.end()
            )));
        }
        let mut syms = self.syms.clone();
        syms.extend_from_slice(&right.syms);
        Ok(Self {
            start: self.start,
            syms,
        })
    }

    /// Merge of two words with disjoint or agreeing overlap; `other` wins on overlap.
    pub fn overlay(&self, other: &Word) -> Self {
        if other.is_empty() {
            return self.clone();
        }
        if self.is_empty() {
            return other.clone();
        }
        let start = self.start.min(other.start);
        let end = self.end().max(other.end());
        let mut syms = Vec::with_capacity((end - start + 1) as usize);
        for site in start..=end {
            let s = other
                .get(site)
                .or_else(|| self.get(site))
                .expect("overlay must cover a contiguous range");
            syms.push(s);
        }
        Self { start, syms }
    }

    /// Renders with an alphabet, compact for single-character names.
    pub fn display(&self, alphabet: &Alphabet) -> String {
        let single = alphabet.syms().all(|s| alphabet.name(s).chars().count() == 1);
        let parts: Vec<&str> = self.syms.iter().map(|&s| alphabet.name(s)).collect();
        if single {
            parts.concat()
        } else {
            parts.join(" ")
        }
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word@{}{:?}", self.start, self.syms)
    }
}

/// Packs a symbol slice into a mixed-radix index (first symbol most significant).
pub(crate) fn pack(syms: &[Sym], base: usize) -> usize {
    let mut acc = 0usize;
    for &s in syms {
        acc = acc * base + s as usize;
    }
    acc
}

/// Inverse of `pack` for a fixed length.
pub(crate) fn unpack(mut idx: usize, base: usize, len: usize) -> Vec<Sym> {
    let mut out = vec![0 as Sym; len];
    for i in (0..len).rev() {
        out[i] = (idx % base) as Sym;
        idx /= base;
    }
    out
}

/// Order-m factor grammar: a table of allowed words of length m+1.
///
/// Construction rejects tables with dead ends, so every allowed factor
/// extends to a bi-infinite admissible configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grammar {
    order: usize,
    base: usize,
    allowed: Vec<bool>,
}

impl Grammar {
    /// Full shift: every word over an alphabet of size `n` is admissible.
    pub fn full_shift(n: usize) -> Self {
        Self {
            order: 0,
            base: n,
            allowed: vec![true; n],
        }
    }

    /// Builds an order-`order` grammar from the allowed factor table.
    ///
    /// `allowed` is indexed by `pack` of the factor (length `order + 1`).
    pub fn from_table(order: usize, alphabet_len: usize, allowed: Vec<bool>) -> Result<Self> {
        let want = alphabet_len.pow((order + 1) as u32);
        if allowed.len() != want {
            return Err(Error::InvalidGrammar(format!(
                "table has {} entries, expected {}",
                allowed.len(),
                want
            )));
        }
        if !allowed.iter().any(|&b| b) {
            return Err(Error::InvalidGrammar("no allowed factors".into()));
        }
        let g = Self {
            order,
            base: alphabet_len,
            allowed,
        };
        g.check_dead_end_free()?;
        Ok(g)
    }

    /// Builds a grammar by forbidding the listed words of length `order + 1`.
    pub fn from_forbidden(order: usize, alphabet_len: usize, forbidden: &[Vec<Sym>]) -> Result<Self> {
        let size = alphabet_len.pow((order + 1) as u32);
        let mut allowed = vec![true; size];
        for w in forbidden {
            if w.len() != order + 1 {
                return Err(Error::InvalidGrammar(format!(
                    "forbidden word {w:?} has length {}, expected {}",
                    w.len(),
                    order + 1
                )));
            }
            if w.iter().any(|&s| s as usize >= alphabet_len) {
                return Err(Error::InvalidGrammar(format!(
                    "forbidden word {w:?} uses a symbol outside the alphabet"
                )));
            }
            allowed[pack(w, alphabet_len)] = false;
        }
        Self::from_table(order, alphabet_len, allowed)
    }

    fn check_dead_end_free(&self) -> Result<()> {
        if self.order == 0 {
            return Ok(());
        }
        let m1 = self.order + 1;
        for idx in 0..self.allowed.len() {
            if !self.allowed[idx] {
                continue;
            }
            let w = unpack(idx, self.base, m1);
            let right = (0..self.base as Sym).any(|a| {
                let mut v = w[1..].to_vec();
                v.push(a);
                self.allowed[pack(&v, self.base)]
            });
            if !right {
                return Err(Error::GrammarDeadEnd { word: w, side: "right" });
            }
            let left = (0..self.base as Sym).any(|a| {
                let mut v = vec![a];
                v.extend_from_slice(&w[..self.order]);
                self.allowed[pack(&v, self.base)]
            });
            if !left {
                return Err(Error::GrammarDeadEnd { word: w, side: "left" });
            }
        }
        Ok(())
    }

    /// Grammar order m; factors have length m + 1.
    pub fn order(&self) -> usize {
        self.order
    }

    /// True when no factor is forbidden (full support).
    pub fn is_full(&self) -> bool {
        self.allowed.iter().all(|&b| b)
    }

    /// Alphabet size the table was built for.
    pub fn alphabet_len(&self) -> usize {
        self.base
    }

    /// True when the factor (length order + 1) is in the table.
    pub fn factor_allowed(&self, factor: &[Sym]) -> bool {
        debug_assert_eq!(factor.len(), self.order + 1);
        self.allowed[pack(factor, self.base)]
    }

    /// True when every length-(m+1) factor of `syms` is allowed.
    ///
    /// Words shorter than m + 1 are admissible iff they occur as a factor of
    /// some allowed table word.
    pub fn is_admissible(&self, syms: &[Sym]) -> bool {
        if syms.iter().any(|&s| (s as usize) >= self.base) {
            return false;
        }
        let m1 = self.order + 1;
        if syms.is_empty() {
            return true;
        }
        if syms.len() < m1 {
            return self.short_word_occurs(syms);
        }
        syms.windows(m1).all(|w| self.allowed[pack(w, self.base)])
    }

    fn short_word_occurs(&self, syms: &[Sym]) -> bool {
        let m1 = self.order + 1;
        for idx in 0..self.allowed.len() {
            if !self.allowed[idx] {
                continue;
            }
            let w = unpack(idx, self.base, m1);
            if w.windows(syms.len()).any(|f| f == syms) {
                return true;
            }
        }
        false
    }

    /// True when a site-anchored word is admissible.
    pub fn word_admissible(&self, w: &Word) -> bool {
        self.is_admissible(w.syms())
    }

    /// Admissibility of `syms` placed between a left and right context.
    ///
    /// Only the factors that touch `syms` are checked; the contexts are
    /// assumed adjacent (left ends just before `syms`, right starts just
    /// after). Shorter contexts leave the corresponding side unconstrained.
    pub fn admissible_in_context(&self, left: &[Sym], syms: &[Sym], right: &[Sym]) -> bool {
        let m = self.order;
        let lk = left.len().min(m);
        let rk = right.len().min(m);
        let mut joined = Vec::with_capacity(lk + syms.len() + rk);
        joined.extend_from_slice(&left[left.len() - lk..]);
        joined.extend_from_slice(syms);
        joined.extend_from_slice(&right[..rk]);
        let m1 = m + 1;
        if joined.len() < m1 {
            return self.is_admissible(&joined);
        }
        // factors not touching syms were admissible already as part of the contexts
        joined.windows(m1).all(|w| self.allowed[pack(w, self.base)])
    }

    /// Enumerates admissible interior words on `span` between two contexts.
    ///
    /// Contexts must be admissible words adjacent to `span` (left ends at
    /// `span.lo() - 1`, right starts at `span.hi() + 1`); either may be
    /// shorter than the order, leaving that side unconstrained. Output is in
    /// lexicographic symbol order and deterministic.
    pub fn enumerate_interior(
        &self,
        span: Interval,
        left: &[Sym],
        right: &[Sym],
    ) -> Result<Vec<Vec<Sym>>> {
        if !self.is_admissible(left) {
            return Err(Error::InadmissibleWord {
                site: span.lo() - 1,
                detail: "left context violates the grammar".into(),
            });
        }
        if !self.is_admissible(right) {
            return Err(Error::InadmissibleWord {
                site: span.hi() + 1,
                detail: "right context violates the grammar".into(),
            });
        }
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(span.len());
        self.enumerate_rec(span.len(), left, right, &mut cur, &mut out);
        Ok(out)
    }

    fn enumerate_rec(
        &self,
        len: usize,
        left: &[Sym],
        right: &[Sym],
        cur: &mut Vec<Sym>,
        out: &mut Vec<Vec<Sym>>,
    ) {
        if cur.len() == len {
            if self.admissible_in_context(left, cur, right) {
                out.push(cur.clone());
            }
            return;
        }
        let m = self.order;
        for a in 0..self.base as Sym {
            // prefix viability: factors fully determined by left context + prefix
            cur.push(a);
            let viable = {
                let need = m + 1;
                let have = left.len().min(m) + cur.len();
                if have < need {
                    true
                } else {
                    let lk = left.len().min(m);
                    let mut tail = Vec::with_capacity(need);
                    if cur.len() >= need {
                        tail.extend_from_slice(&cur[cur.len() - need..]);
                    } else {
                        let from_left = need - cur.len();
                        tail.extend_from_slice(&left[left.len() - lk..][lk - from_left..]);
                        tail.extend_from_slice(cur);
                    }
                    self.allowed[pack(&tail, self.base)]
                }
            };
            if viable {
                self.enumerate_rec(len, left, right, cur, out);
            }
            cur.pop();
        }
    }

    /// Number of admissible words of length `n` with free boundaries.
    pub fn count_words(&self, n: usize) -> usize {
        if n == 0 {
            return 1;
        }
        let span = Interval::new(0, n as i64 - 1).expect("n >= 1");
        self.enumerate_interior(span, &[], &[])
            .expect("empty contexts are admissible")
            .len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden_mean() -> Grammar {
        Grammar::from_forbidden(1, 2, &[vec![1, 1]]).unwrap()
    }

    #[test]
    fn alphabet_rejects_duplicates_and_empty() {
        assert!(Alphabet::new(Vec::<String>::new()).is_err());
        assert!(Alphabet::new(vec!["a", "a"]).is_err());
        let ab = Alphabet::new(vec!["+", "-"]).unwrap();
        assert_eq!(ab.id_of("-").unwrap(), 1);
        assert_eq!(ab.name(0), "+");
    }

    #[test]
    fn word_anchoring_and_patching() {
        let w = Word::new(-2, vec![0, 1, 0, 0]);
        assert_eq!(w.start(), -2);
        assert_eq!(w.end(), 1);
        assert_eq!(w.get(-1), Some(1));
        assert_eq!(w.get(2), None);
        let p = w.patched(SitePatch { site: 0, sym: 1 });
        assert_eq!(p.get(0), Some(1));
        assert_eq!(w.get(0), Some(0));
        let s = w.slice(Interval::new(-1, 0).unwrap()).unwrap();
        assert_eq!(s.syms(), &[1, 0]);
        assert_eq!(s.start(), -1);
    }

    #[test]
    fn word_overlay_prefers_other() {
        let base = Word::new(0, vec![0, 0, 0]);
        let patch = Word::new(1, vec![1, 1]);
        let merged = base.overlay(&patch);
        assert_eq!(merged.syms(), &[0, 1, 1]);
    }

    #[test]
    fn full_shift_admits_everything() {
        let g = Grammar::full_shift(3);
        assert!(g.is_admissible(&[0, 1, 2, 2, 0]));
        assert_eq!(g.count_words(3), 27);
    }

    #[test]
    fn golden_mean_admissibility() {
        let g = golden_mean();
        assert!(g.is_admissible(&[0, 1, 0, 1, 0]));
        assert!(!g.is_admissible(&[0, 1, 1, 0]));
        assert!(g.is_admissible(&[1]));
        assert!(g.is_admissible(&[]));
    }

    #[test]
    fn golden_mean_counts_are_fibonacci() {
        // count(n) follows F(n+2) with F(1) = F(2) = 1
        let g = golden_mean();
        let mut fib = vec![0u64, 1, 1];
        for i in 3..20 {
            let v = fib[i - 1] + fib[i - 2];
            fib.push(v);
        }
        for n in 1..=15 {
            assert_eq!(g.count_words(n) as u64, fib[n + 2], "length {n}");
        }
    }

    #[test]
    fn golden_mean_enumeration_lexicographic() {
        let g = golden_mean();
        let span = Interval::new(0, 2).unwrap();
        let words = g.enumerate_interior(span, &[], &[]).unwrap();
        let expect: Vec<Vec<Sym>> = vec![
            vec![0, 0, 0],
            vec![0, 0, 1],
            vec![0, 1, 0],
            vec![1, 0, 0],
            vec![1, 0, 1],
        ];
        assert_eq!(words, expect);
    }

    #[test]
    fn enumeration_respects_contexts() {
        let g = golden_mean();
        let span = Interval::new(0, 1).unwrap();
        // left context ends with 1: first interior site cannot be 1
        let words = g.enumerate_interior(span, &[1], &[]).unwrap();
        assert_eq!(words, vec![vec![0, 0], vec![0, 1]]);
        // right context starts with 1: last interior site cannot be 1
        let words = g.enumerate_interior(span, &[], &[1]).unwrap();
        assert_eq!(words, vec![vec![0, 0], vec![1, 0]]);
        // inadmissible context is a typed error
        let err = g.enumerate_interior(span, &[1, 1], &[]).unwrap_err();
        assert!(matches!(err, Error::InadmissibleWord { .. }));
    }

    #[test]
    fn dead_end_tables_rejected() {
        // order 1 on {0,1}: allow only 01; 01 has no allowed successor
        let err = Grammar::from_table(1, 2, vec![false, true, false, false]).unwrap_err();
        assert!(matches!(err, Error::GrammarDeadEnd { .. }));
        // forbidding both 01 and 10 splits into two full shifts; still dead-end free
        let g = Grammar::from_forbidden(1, 2, &[vec![0, 1], vec![1, 0]]).unwrap();
        assert_eq!(g.count_words(4), 2);
    }

    #[test]
    fn short_words_must_occur_in_table() {
        // order 2 on {0,1}: only 000 and 001→... build from forbidden list instead
        let g = Grammar::from_forbidden(2, 2, &[vec![1, 1, 1]]).unwrap();
        assert!(g.is_admissible(&[1, 1]));
        let g2 = Grammar::from_forbidden(2, 2, &[vec![1, 1, 1], vec![1, 1, 0], vec![0, 1, 1]]).unwrap();
        // 11 no longer occurs in any allowed factor
        assert!(!g2.is_admissible(&[1, 1]));
    }

    #[test]
    fn pack_unpack_roundtrip() {
        for idx in 0..27 {
            let w = unpack(idx, 3, 3);
            assert_eq!(pack(&w, 3), idx);
        }
    }
}
