//! Past-conditioned singleton kernels and interval products.
//!
//! A `GSingleton` gives the probability of the symbol at one site given the
//! symbols to its left. A `LisFamily` attaches singletons to every site of
//! the lattice (one base kernel plus optional per-site overrides), checks
//! normalization against the grammar, and evaluates interval kernels as
//! site-ordered products of singletons.

use crate::certified::CertifiedValue;
use crate::error::{Error, Result};
use crate::lattice::{pack, unpack, Alphabet, Grammar, Sym, Word};
use std::collections::BTreeMap;

/// Certified upper bound on the influence of the past beyond depth `k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DecayBound {
    /// `var_k <= coeff * ratio^k`.
    Geometric { coeff: f64, ratio: f64 },
    /// `var_k <= coeff / (k + 1)^exponent`.
    PowerLaw { coeff: f64, exponent: f64 },
}

impl DecayBound {
    /// Upper bound on the oscillation at agreement depth `k`.
    pub fn var_bound(&self, k: usize) -> f64 {
        let v = match *self {
            DecayBound::Geometric { coeff, ratio } => coeff * ratio.powi(k as i32),
            DecayBound::PowerLaw { coeff, exponent } => {
                coeff / ((k + 1) as f64).powf(exponent)
            }
        };
        v.min(1.0)
    }

    /// Upper bound on the tail sum of `var_bound` from depth `k` on.
    pub fn tail_sum(&self, k: usize) -> f64 {
        match *self {
            DecayBound::Geometric { coeff, ratio } => {
                if ratio >= 1.0 {
                    f64::INFINITY
                } else {
                    coeff * ratio.powi(k as i32) / (1.0 - ratio)
                }
            }
            // sum_{j >= k} c/(j+1)^e <= c * integral_{k}^{inf} x^{-e} dx for k >= 1
            DecayBound::PowerLaw { coeff, exponent } => {
                if exponent <= 1.0 {
                    f64::INFINITY
                } else if k == 0 {
                    coeff + self.tail_sum(1)
                } else {
                    coeff * (k as f64).powf(1.0 - exponent) / (exponent - 1.0)
                }
            }
        }
    }

    /// Upper bound on the tail sum of `var_bound` squared from depth `k` on.
    ///
    /// Squares can be summable when the plain tail is not: a harmonic bound
    /// `c/(k+1)` has an infinite tail sum but a finite square tail.
    pub fn sq_tail_sum(&self, k: usize) -> f64 {
        match *self {
            DecayBound::Geometric { coeff, ratio } => {
                if ratio >= 1.0 {
                    f64::INFINITY
                } else {
                    let r2 = ratio * ratio;
                    coeff * coeff * r2.powi(k as i32) / (1.0 - r2)
                }
            }
            DecayBound::PowerLaw { coeff, exponent } => {
                let e2 = 2.0 * exponent;
                if e2 <= 1.0 {
                    f64::INFINITY
                } else if k == 0 {
                    coeff * coeff + self.sq_tail_sum(1)
                } else {
                    coeff * coeff * (k as f64).powf(1.0 - e2) / (e2 - 1.0)
                }
            }
        }
    }
}

/// Memory structure of a past-conditioned kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MemoryBound {
    /// The kernel reads exactly the last `M` symbols; `var_k = 0` for `k >= M`.
    Exact(usize),
    /// The kernel reads the whole past with the given certified decay.
    Decaying(DecayBound),
}

/// How a renewal kernel's mark probability decays with the age.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RenewalDecay {
    /// `q(age) = tail + amplitude * ratio^age`.
    Geometric { ratio: f64 },
    /// `q(age) = tail + amplitude / (age + 1)`.
    Harmonic,
}

/// Evaluation backend of a singleton kernel.
#[derive(Clone, Debug)]
pub enum PastKernel {
    /// Finite-memory table: `rows[pack(last M symbols)][symbol]`.
    Table { memory: usize, rows: Vec<f64> },
    /// Binary renewal kernel: the probability of the marked symbol depends
    /// on the number of sites since it last occurred.
    Renewal {
        marked: Sym,
        tail: f64,
        amplitude: f64,
        decay: RenewalDecay,
    },
}

/// Singleton kernel bound to an alphabet size.
#[derive(Clone, Debug)]
pub struct GSingleton {
    base: usize,
    kernel: PastKernel,
}

impl GSingleton {
    /// Finite-memory kernel from a flattened row table.
    pub fn from_table(base: usize, memory: usize, rows: Vec<f64>) -> Result<Self> {
        let want = base.pow(memory as u32) * base;
        if rows.len() != want {
            return Err(Error::Config(format!(
                "kernel table has {} entries, expected {}",
                rows.len(),
                want
            )));
        }
        if rows.iter().any(|&v| !v.is_finite() || v < 0.0 || v > 1.0) {
            return Err(Error::Config(
                "kernel entries must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            base,
            kernel: PastKernel::Table { memory, rows },
        })
    }

    /// Order-1 kernel from a square transition matrix.
    pub fn from_matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let base = rows.len();
        let mut flat = Vec::with_capacity(base * base);
        for r in rows {
            if r.len() != base {
                return Err(Error::Config("transition matrix must be square".into()));
            }
            flat.extend_from_slice(r);
        }
        Self::from_table(base, 1, flat)
    }

    /// Memoryless kernel.
    pub fn iid(probs: &[f64]) -> Result<Self> {
        Self::from_table(probs.len(), 0, probs.to_vec())
    }

    /// Binary renewal kernel; requires `0 < tail` and `tail + amplitude < 1`.
    pub fn renewal(marked: Sym, tail: f64, amplitude: f64, decay: RenewalDecay) -> Result<Self> {
        if marked > 1 {
            return Err(Error::Config("renewal kernels are binary".into()));
        }
        if !(tail > 0.0 && amplitude > 0.0 && tail + amplitude < 1.0) {
            return Err(Error::Config(format!(
                "renewal parameters out of range: tail {tail}, amplitude {amplitude}"
            )));
        }
        if let RenewalDecay::Geometric { ratio } = decay {
            if !(ratio > 0.0 && ratio < 1.0) {
                return Err(Error::Config(format!("renewal ratio {ratio} not in (0, 1)")));
            }
        }
        Ok(Self {
            base: 2,
            kernel: PastKernel::Renewal {
                marked,
                tail,
                amplitude,
                decay,
            },
        })
    }

    /// Alphabet size.
    pub fn alphabet_len(&self) -> usize {
        self.base
    }

    /// Memory structure with its certified decay.
    pub fn memory_bound(&self) -> MemoryBound {
        match &self.kernel {
            PastKernel::Table { memory, .. } => MemoryBound::Exact(*memory),
            PastKernel::Renewal {
                amplitude, decay, ..
            } => MemoryBound::Decaying(match decay {
                RenewalDecay::Geometric { ratio } => DecayBound::Geometric {
                    coeff: *amplitude,
                    ratio: *ratio,
                },
                RenewalDecay::Harmonic => DecayBound::PowerLaw {
                    coeff: *amplitude,
                    exponent: 1.0,
                },
            }),
        }
    }

    fn renewal_q(tail: f64, amplitude: f64, decay: RenewalDecay, age: usize) -> f64 {
        match decay {
            RenewalDecay::Geometric { ratio } => tail + amplitude * ratio.powi(age as i32),
            RenewalDecay::Harmonic => tail + amplitude / (age + 1) as f64,
        }
    }

    /// Kernel value given the visible past window (ending one site before
    /// the evaluated one), with a certified radius for the unseen past.
    pub fn eval(&self, avail: &[Sym], sym: Sym) -> Result<(f64, f64)> {
        match &self.kernel {
            PastKernel::Table { memory, rows } => {
                if avail.len() < *memory {
                    return Err(Error::WindowTooShort {
                        site: 0,
                        needed: *memory,
                        available: avail.len(),
                    });
                }
                let ctx = &avail[avail.len() - memory..];
                let idx = pack(ctx, self.base) * self.base + sym as usize;
                Ok((rows[idx], 0.0))
            }
            PastKernel::Renewal {
                marked,
                tail,
                amplitude,
                decay,
            } => {
                let age = avail.iter().rev().take_while(|&&s| s != *marked).count();
                let (q, r) = if age == avail.len() {
                    // mark not visible: bracket q over ages >= age
                    let hi = Self::renewal_q(*tail, *amplitude, *decay, age);
                    let lo = *tail;
                    ((hi + lo) / 2.0, (hi - lo) / 2.0)
                } else {
                    (Self::renewal_q(*tail, *amplitude, *decay, age), 0.0)
                };
                if sym == *marked {
                    Ok((q, r))
                } else {
                    Ok((1.0 - q, r))
                }
            }
        }
    }

    /// Window length guaranteeing a zero radius, if finite.
    pub fn exact_window(&self) -> Option<usize> {
        match self.memory_bound() {
            MemoryBound::Exact(m) => Some(m),
            MemoryBound::Decaying(_) => None,
        }
    }
}

/// Past-conditioned singleton family on the full lattice.
#[derive(Clone, Debug)]
pub struct LisFamily {
    alphabet: Alphabet,
    grammar: Grammar,
    base: GSingleton,
    overrides: BTreeMap<i64, GSingleton>,
    min_prob: f64,
}

impl LisFamily {
    /// Builds a family and verifies grammar-aware normalization.
    ///
    /// For every probed admissible past window, the kernel must put zero
    /// mass on grammar-forbidden successors and total mass `1 ± 1e-12` on
    /// admissible ones, each with strictly positive probability.
    pub fn new(
        alphabet: Alphabet,
        grammar: Grammar,
        base: GSingleton,
        overrides: BTreeMap<i64, GSingleton>,
    ) -> Result<Self> {
        if grammar.alphabet_len() != alphabet.len() || base.alphabet_len() != alphabet.len() {
            return Err(Error::Config(
                "alphabet, grammar and kernel sizes disagree".into(),
            ));
        }
        for s in overrides.values() {
            if s.alphabet_len() != alphabet.len() {
                return Err(Error::Config("override kernel size disagrees".into()));
            }
        }
        let mut fam = Self {
            alphabet,
            grammar,
            base,
            overrides,
            min_prob: 0.0,
        };
        fam.min_prob = fam.check_normalization(1e-12)?;
        Ok(fam)
    }

    /// Stationary family with no site overrides.
    pub fn stationary(alphabet: Alphabet, grammar: Grammar, base: GSingleton) -> Result<Self> {
        Self::new(alphabet, grammar, base, BTreeMap::new())
    }

    /// Alphabet.
    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    /// Grammar.
    pub fn grammar(&self) -> &Grammar {
        &self.grammar
    }

    /// True when every site uses the same kernel.
    pub fn is_stationary(&self) -> bool {
        self.overrides.is_empty()
    }

    /// Kernel in effect at `site`.
    pub fn singleton(&self, site: i64) -> &GSingleton {
        self.overrides.get(&site).unwrap_or(&self.base)
    }

    /// Certified positive lower bound on admissible singleton values.
    pub fn min_prob(&self) -> f64 {
        self.min_prob
    }

    /// Coarsest memory bound across sites: the largest exact memory, or the
    /// slowest decay if any site kernel reads the whole past.
    pub fn memory_bound(&self) -> MemoryBound {
        let mut worst = self.base.memory_bound();
        for s in self.overrides.values() {
            worst = match (worst, s.memory_bound()) {
                (MemoryBound::Exact(a), MemoryBound::Exact(b)) => MemoryBound::Exact(a.max(b)),
                (MemoryBound::Decaying(d), MemoryBound::Exact(_))
                | (MemoryBound::Exact(_), MemoryBound::Decaying(d)) => MemoryBound::Decaying(d),
                (MemoryBound::Decaying(a), MemoryBound::Decaying(b)) => {
                    // keep the one with the larger deep-tail bound
                    if a.tail_sum(32) >= b.tail_sum(32) {
                        MemoryBound::Decaying(a)
                    } else {
                        MemoryBound::Decaying(b)
                    }
                }
            };
        }
        worst
    }

    /// Upper bound on `var_k` uniform over sites.
    pub fn var_bound(&self, k: usize) -> f64 {
        match self.memory_bound() {
            MemoryBound::Exact(m) => {
                if k >= m {
                    0.0
                } else {
                    1.0
                }
            }
            MemoryBound::Decaying(d) => d.var_bound(k),
        }
    }

    /// Upper bound on `sum_{j >= k} var_j` uniform over sites.
    pub fn var_tail(&self, k: usize) -> f64 {
        match self.memory_bound() {
            MemoryBound::Exact(m) => {
                if k >= m {
                    0.0
                } else {
                    (m - k) as f64
                }
            }
            MemoryBound::Decaying(d) => d.tail_sum(k),
        }
    }

    /// Singleton value at `site` given the adjacent past window.
    ///
    /// `past` must end at `site - 1` (or be empty). Grammar-forbidden
    /// successors give exactly zero.
    pub fn eval(&self, site: i64, past: &Word, sym: Sym) -> Result<(f64, f64)> {
        if !past.is_empty() && past.end() != site - 1 {
            return Err(Error::Config(format!(
                "past window ends at {}, expected {}",
                past.end(),
                site - 1
            )));
        }
        self.eval_syms(site, past.syms(), sym)
    }

    fn eval_syms(&self, site: i64, avail: &[Sym], sym: Sym) -> Result<(f64, f64)> {
        if !self.grammar.admissible_in_context(avail, &[sym], &[]) {
            return Ok((0.0, 0.0));
        }
        self.singleton(site).eval(avail, sym).map_err(|e| match e {
            Error::WindowTooShort { needed, available, .. } => Error::WindowTooShort {
                site,
                needed,
                available,
            },
            other => other,
        })
    }

    /// Interval kernel: the site-ordered product of singleton values for
    /// `word` given the adjacent `past` window.
    ///
    /// The radius is the sum of the singleton radii (sound for factors in
    /// `[0, 1]`); `n_used` records the past window length.
    pub fn lis_interval(&self, word: &Word, past: &Word) -> Result<CertifiedValue> {
        if word.is_empty() {
            return Ok(CertifiedValue::exact(1.0));
        }
        if !past.is_empty() && past.end() != word.start() - 1 {
            return Err(Error::Config(format!(
                "past window ends at {}, expected {}",
                past.end(),
                word.start() - 1
            )));
        }
        let mut avail: Vec<Sym> = past.syms().to_vec();
        let mut value = 1.0f64;
        let mut radius = 0.0f64;
        for site in word.start()..=word.end() {
            let sym = word.get(site).unwrap();
            let (v, r) = self.eval_syms(site, &avail, sym)?;
            value *= v;
            radius += r;
            if value == 0.0 && radius == 0.0 {
                return Ok(CertifiedValue::new(0.0, 0.0, past.len()));
            }
            avail.push(sym);
        }
        Ok(CertifiedValue::new(value, radius.min(1.0), past.len()))
    }

    fn check_normalization(&self, tol: f64) -> Result<f64> {
        let probe_depth = match self.memory_bound() {
            MemoryBound::Exact(m) => m.max(self.grammar.order()),
            MemoryBound::Decaying(_) => {
                let mut d = self.grammar.order().max(1);
                while self.alphabet.len().pow((d + 1) as u32) <= 4096 && d < 10 {
                    d += 1;
                }
                d
            }
        };
        let mut sites: Vec<i64> = vec![0];
        sites.extend(self.overrides.keys());
        let mut min_prob = f64::INFINITY;
        let pasts = self.enumerate_pasts(probe_depth)?;
        for &site in &sites {
            for past in &pasts {
                let mut total = 0.0f64;
                let mut any = false;
                for a in self.alphabet.syms() {
                    if !self.grammar.admissible_in_context(past, &[a], &[]) {
                        continue;
                    }
                    let (v, r) = self.singleton(site).eval(past, a)?;
                    if v - r <= 0.0 {
                        return Err(Error::PositivityViolated {
                            context: format!(
                                "singleton at site {site} on admissible past {past:?} symbol {a}"
                            ),
                            value: v,
                        });
                    }
                    min_prob = min_prob.min(v - r);
                    total += v;
                    any = true;
                }
                if !any {
                    continue;
                }
                let defect = (total - 1.0).abs();
                if defect > tol {
                    return Err(Error::NormalizationDefect {
                        site,
                        defect,
                        tolerance: tol,
                    });
                }
            }
        }
        Ok(min_prob)
    }

    fn enumerate_pasts(&self, depth: usize) -> Result<Vec<Vec<Sym>>> {
        if depth == 0 {
            return Ok(vec![Vec::new()]);
        }
        let base = self.alphabet.len();
        let count = base.pow(depth as u32);
        let mut out = Vec::new();
        for idx in 0..count {
            let w = unpack(idx, base, depth);
            if self.grammar.is_admissible(&w) {
                out.push(w);
            }
        }
        Ok(out)
    }
}

/// Re-checks singleton normalization of a built family at a given tolerance.
pub fn check_singleton_normalization(family: &LisFamily, tolerance: f64) -> Result<()> {
    family.check_normalization(tolerance).map(|_| ())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn markov() -> LisFamily {
        let ab = Alphabet::binary();
        let g = Grammar::full_shift(2);
        let k = GSingleton::from_matrix(&[vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap();
        LisFamily::stationary(ab, g, k).unwrap()
    }

    fn renewal() -> LisFamily {
        let ab = Alphabet::binary();
        let g = Grammar::full_shift(2);
        let k = GSingleton::renewal(1, 0.4, 0.3, RenewalDecay::Geometric { ratio: 0.5 }).unwrap();
        LisFamily::stationary(ab, g, k).unwrap()
    }

    #[test]
    fn interval_product_matches_hand_value() {
        let fam = markov();
        let word = Word::new(0, vec![1, 0]);
        let past = Word::new(-1, vec![0]);
        let v = fam.lis_interval(&word, &past).unwrap();
        assert_eq!(v.value, 0.3 * 0.4);
        assert_eq!(v.radius, 0.0);
    }

    #[test]
    fn exact_memory_requires_window() {
        let fam = markov();
        let word = Word::new(0, vec![1]);
        let err = fam.lis_interval(&word, &Word::empty(0)).unwrap_err();
        assert!(matches!(err, Error::WindowTooShort { .. }));
    }

    #[test]
    fn factorization_splits_exactly_at_last_site() {
        // splitting off the last factor reproduces the same arithmetic
        let fam = markov();
        let word = Word::new(0, vec![1, 0, 0, 1, 0]);
        let past = Word::new(-1, vec![0]);
        let full = fam.lis_interval(&word, &past).unwrap().value;
        let head = word.slice(crate::lattice::Interval::new(0, 3).unwrap()).unwrap();
        let tail = word.slice(crate::lattice::Interval::new(4, 4).unwrap()).unwrap();
        let head_v = fam.lis_interval(&head, &past).unwrap().value;
        let joined = past.join(&head).unwrap();
        let tail_v = fam.lis_interval(&tail, &joined).unwrap().value;
        assert_eq!(full, head_v * tail_v);
    }

    #[test]
    fn factorization_holds_at_every_split() {
        let fam = markov();
        let word = Word::new(0, vec![1, 0, 0, 1, 0, 1]);
        let past = Word::new(-1, vec![0]);
        let full = fam.lis_interval(&word, &past).unwrap().value;
        for n in 0..5 {
            let head = word
                .slice(crate::lattice::Interval::new(0, n).unwrap())
                .unwrap();
            let tail = word
                .slice(crate::lattice::Interval::new(n + 1, 5).unwrap())
                .unwrap();
            let head_v = fam.lis_interval(&head, &past).unwrap().value;
            let joined = past.join(&head).unwrap();
            let tail_v = fam.lis_interval(&tail, &joined).unwrap().value;
            assert!((full - head_v * tail_v).abs() <= 1e-15 * full.max(1e-300));
        }
    }

    #[test]
    fn renewal_bracket_radius() {
        let fam = renewal();
        // all-zero window of length 3, no mark visible: q in [0.4, 0.4 + 0.3 * 0.125]
        let past = Word::new(-3, vec![0, 0, 0]);
        let (v, r) = fam.eval(0, &past, 1).unwrap();
        let hi = 0.4 + 0.3 * 0.125;
        assert!((v - (hi + 0.4) / 2.0).abs() < 1e-15);
        assert!((r - (hi - 0.4) / 2.0).abs() < 1e-15);
        // mark visible: exact
        let past = Word::new(-3, vec![1, 0, 0]);
        let (v, r) = fam.eval(0, &past, 1).unwrap();
        assert_eq!(r, 0.0);
        assert!((v - (0.4 + 0.3 * 0.25)).abs() < 1e-15);
    }

    #[test]
    fn renewal_memory_bound_is_geometric() {
        let fam = renewal();
        match fam.memory_bound() {
            MemoryBound::Decaying(DecayBound::Geometric { coeff, ratio }) => {
                assert_eq!(coeff, 0.3);
                assert_eq!(ratio, 0.5);
            }
            other => panic!("unexpected bound {other:?}"),
        }
        assert!((fam.var_bound(3) - 0.3 * 0.125).abs() < 1e-15);
        assert!((fam.var_tail(3) - 0.3 * 0.125 * 2.0).abs() < 1e-15);
        assert!((fam.min_prob() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn grammar_zeros_and_normalization() {
        let ab = Alphabet::binary();
        let g = Grammar::from_forbidden(1, 2, &[vec![1, 1]]).unwrap();
        let k = GSingleton::from_matrix(&[vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
        let fam = LisFamily::stationary(ab, g, k).unwrap();
        let past = Word::new(-1, vec![1]);
        let (v, _) = fam.eval(0, &past, 1).unwrap();
        assert_eq!(v, 0.0);
        let (v, _) = fam.eval(0, &past, 0).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn normalization_defect_detected() {
        let ab = Alphabet::binary();
        let g = Grammar::full_shift(2);
        let k = GSingleton::from_matrix(&[vec![0.7, 0.2], vec![0.4, 0.6]]).unwrap();
        let err = LisFamily::stationary(ab, g, k).unwrap_err();
        assert!(matches!(err, Error::NormalizationDefect { .. }));
    }

    #[test]
    fn leaked_mass_on_forbidden_factor_detected() {
        let ab = Alphabet::binary();
        let g = Grammar::from_forbidden(1, 2, &[vec![1, 1]]).unwrap();
        // row for past 1 puts mass on the forbidden successor
        let k = GSingleton::from_matrix(&[vec![0.5, 0.5], vec![0.9, 0.1]]).unwrap();
        let err = LisFamily::stationary(ab, g, k).unwrap_err();
        assert!(matches!(err, Error::NormalizationDefect { .. }));
    }

    #[test]
    fn zero_on_admissible_factor_rejected() {
        let ab = Alphabet::binary();
        let g = Grammar::full_shift(2);
        let k = GSingleton::from_matrix(&[vec![1.0, 0.0], vec![0.4, 0.6]]).unwrap();
        let err = LisFamily::stationary(ab, g, k).unwrap_err();
        assert!(matches!(err, Error::PositivityViolated { .. }));
    }

    #[test]
    fn empty_interval_is_exact_unit() {
        let fam = markov();
        let v = fam
            .lis_interval(&Word::empty(0), &Word::new(-1, vec![0]))
            .unwrap();
        assert_eq!(v.value, 1.0);
        assert_eq!(v.radius, 0.0);
    }

    #[test]
    fn site_overrides_take_effect() {
        let ab = Alphabet::binary();
        let g = Grammar::full_shift(2);
        let base = GSingleton::from_matrix(&[vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap();
        let special = GSingleton::iid(&[0.5, 0.5]).unwrap();
        let mut overrides = BTreeMap::new();
        overrides.insert(3i64, special);
        let fam = LisFamily::new(ab, g, base, overrides).unwrap();
        assert!(!fam.is_stationary());
        let past = Word::new(2, vec![0]);
        assert_eq!(fam.eval(3, &past, 1).unwrap().0, 0.5);
        let past = Word::new(3, vec![0]);
        assert_eq!(fam.eval(4, &past, 1).unwrap().0, 0.3);
    }
}
