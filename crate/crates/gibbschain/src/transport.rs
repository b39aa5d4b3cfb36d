//! Certified passage between past-conditioned and two-sided families.
//!
//! One direction builds two-sided conditional probabilities out of a
//! past-conditioned family: the ratio of the interval kernel on a finite
//! window to its interior-summed marginal converges as the window grows to
//! the right, and the variation profile of the family turns the truncation
//! into a rigorous radius. The other direction recovers past-conditioned
//! kernels from a two-sided family by growing the conditioned volume and
//! bracketing the value between the extremes over probed boundary words;
//! the envelope spread is the radius. Round-trip checks compose the two
//! directions against the identity and report discrepancies against the
//! combined certificates.
//!
//! Both directions are written against small traits so that a composed
//! family (a two-sided family induced by a past-conditioned one, or the
//! reverse) plugs back into the same machinery.

use crate::certified::CertifiedValue;
use crate::error::{Error, Result};
use crate::kernels::{LisFamily, MemoryBound, SpecFamily};
use crate::lattice::{pack, unpack, Alphabet, Grammar, Interval, Sym, Word};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

/// Caps and seeds for truncated limits and boundary probing.
#[derive(Clone, Copy, Debug)]
pub struct Limits {
    /// Deepest right-truncation depth for past-conditioned limits.
    pub n_max: usize,
    /// Most volume-growing steps for two-sided limits.
    pub k_max: usize,
    /// Most boundary words probed per step before sampling kicks in.
    pub probe_budget: usize,
    /// Most interior configurations per exact enumeration.
    pub volume_budget: usize,
    /// Seed for the sampled-boundary fallback.
    pub seed: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            n_max: 64,
            k_max: 64,
            probe_budget: 4096,
            volume_budget: 1 << 20,
            seed: 0x5eed,
        }
    }
}

/// Family of single-site kernels conditioned on the past, with enough
/// structure to certify right-truncated limits.
pub trait PastFamily {
    /// Alphabet shared by every site.
    fn alphabet(&self) -> &Alphabet;
    /// Exclusion grammar; full shift when unconstrained.
    fn grammar(&self) -> &Grammar;
    /// Value and radius of the site kernel given the adjacent past window.
    fn eval(&self, site: i64, past: &Word, sym: Sym) -> Result<(f64, f64)>;
    /// Positive lower bound on admissible single-site values.
    fn floor(&self) -> f64;
    /// Upper bound on the summed variation beyond `gap` agreed past sites.
    fn var_tail(&self, gap: usize) -> f64;
    /// Upper bound on the oscillation at agreement depth `gap`; the tail
    /// sum is always a valid (if crude) per-depth bound.
    fn var_bound(&self, gap: usize) -> f64 {
        self.var_tail(gap)
    }
    /// Upper bound on the summed squares of the variation beyond `gap`.
    ///
    /// Oscillations never exceed one, so the plain tail is a sound default;
    /// families with structured decay override with the tighter square sum.
    fn var_sq_tail(&self, gap: usize) -> f64 {
        self.var_tail(gap)
    }
    /// Exact memory in sites when the kernels read a bounded past.
    fn memory(&self) -> Option<usize> {
        None
    }
    /// True when every site uses the same kernel.
    fn is_stationary(&self) -> bool {
        false
    }

    /// Product of site kernels for `word` given the adjacent `past`.
    fn interval_product(&self, word: &Word, past: &Word) -> Result<CertifiedValue> {
        if word.is_empty() {
            return Ok(CertifiedValue::exact(1.0));
        }
        let mut avail = past.clone();
        if avail.is_empty() {
            avail = Word::empty(word.start());
        }
        let mut value = 1.0f64;
        let mut radius = 0.0f64;
        for site in word.start()..=word.end() {
            let sym = word.get(site).unwrap();
            let (v, r) = self.eval(site, &avail, sym)?;
            value *= v;
            radius += r;
            avail.push(sym);
        }
        Ok(CertifiedValue::new(value, radius.min(1.0), past.len()))
    }
}

impl PastFamily for LisFamily {
    fn alphabet(&self) -> &Alphabet {
        LisFamily::alphabet(self)
    }

    fn grammar(&self) -> &Grammar {
        LisFamily::grammar(self)
    }

    fn eval(&self, site: i64, past: &Word, sym: Sym) -> Result<(f64, f64)> {
        LisFamily::eval(self, site, past, sym)
    }

    fn floor(&self) -> f64 {
        self.min_prob()
    }

    fn var_tail(&self, gap: usize) -> f64 {
        LisFamily::var_tail(self, gap)
    }

    fn var_bound(&self, gap: usize) -> f64 {
        LisFamily::var_bound(self, gap)
    }

    fn var_sq_tail(&self, gap: usize) -> f64 {
        match self.memory_bound() {
            MemoryBound::Exact(m) => {
                if gap >= m {
                    0.0
                } else {
                    (m - gap) as f64
                }
            }
            MemoryBound::Decaying(d) => d.sq_tail_sum(gap),
        }
    }

    fn memory(&self) -> Option<usize> {
        match self.memory_bound() {
            MemoryBound::Exact(m) => Some(m),
            MemoryBound::Decaying(_) => None,
        }
    }

    fn is_stationary(&self) -> bool {
        LisFamily::is_stationary(self)
    }

    fn interval_product(&self, word: &Word, past: &Word) -> Result<CertifiedValue> {
        self.lis_interval(word, past)
    }
}

/// Family of finite-volume two-sided conditional distributions.
pub trait TwoSidedFamily {
    /// Alphabet shared by every site.
    fn alphabet(&self) -> &Alphabet;
    /// Exclusion grammar; full shift when unconstrained.
    fn grammar(&self) -> &Grammar;
    /// Exterior sites read on each side of a conditioned volume.
    fn reach(&self) -> (usize, usize);
    /// True when every site uses the same kernel.
    fn is_stationary(&self) -> bool {
        false
    }
    /// Conditional distribution over admissible interiors of `span` given
    /// the exterior part of `window`, in lexicographic order, together with
    /// a uniform radius bound valid for every row.
    fn interval_distribution(
        &self,
        span: Interval,
        window: &Word,
        budget: usize,
    ) -> Result<(Vec<(Vec<Sym>, f64)>, f64)>;

    /// Conditional expectation of `h` on `span` given the exterior part of
    /// `window`, further conditioned on the `frozen` interior symbols.
    ///
    /// Returns the value with a radius bound. The default enumerates the
    /// full interior distribution; implementations with factorized weights
    /// override it with a linear-cost pass so that volumes can grow deep.
    fn conditional_expectation(
        &self,
        span: Interval,
        window: &Word,
        h: &TestFn,
        frozen: &[(i64, Sym)],
        budget: usize,
    ) -> Result<(f64, f64)> {
        expectation_by_enumeration(self, span, window, h, frozen, budget)
    }
}

/// Conditional expectation through the full interior table.
///
/// Correct for any family, exponential in the volume; the fallback when no
/// factorized pass applies.
fn expectation_by_enumeration<T: TwoSidedFamily + ?Sized>(
    fam: &T,
    span: Interval,
    window: &Word,
    h: &TestFn,
    frozen: &[(i64, Sym)],
    budget: usize,
) -> Result<(f64, f64)> {
    let (rows, row_rad) = fam.interval_distribution(span, window, budget)?;
    let mut mass = 0.0f64;
    let mut acc = 0.0f64;
    let mut matched = 0usize;
    for (row, p) in &rows {
        let keep = frozen
            .iter()
            .all(|&(s, sym)| row[(s - span.lo()) as usize] == sym);
        if keep {
            mass += p;
            acc += p * h.eval_in(row, span.lo());
            matched += 1;
        }
    }
    if mass <= 0.0 {
        return Err(Error::ZeroDenominator(format!(
            "conditioning has no mass on {span}"
        )));
    }
    let rad = if row_rad > 0.0 {
        2.0 * h.sup_abs() * matched as f64 * row_rad / mass
    } else {
        0.0
    };
    Ok((acc / mass, rad))
}

impl TwoSidedFamily for SpecFamily {
    fn alphabet(&self) -> &Alphabet {
        SpecFamily::alphabet(self)
    }

    fn grammar(&self) -> &Grammar {
        SpecFamily::grammar(self)
    }

    fn reach(&self) -> (usize, usize) {
        SpecFamily::reach(self)
    }

    fn interval_distribution(
        &self,
        span: Interval,
        window: &Word,
        budget: usize,
    ) -> Result<(Vec<(Vec<Sym>, f64)>, f64)> {
        Ok((self.gamma_interval_table(span, window, budget)?, 0.0))
    }

    fn is_stationary(&self) -> bool {
        SpecFamily::is_stationary(self)
    }

    fn conditional_expectation(
        &self,
        span: Interval,
        window: &Word,
        h: &TestFn,
        frozen: &[(i64, Sym)],
        budget: usize,
    ) -> Result<(f64, f64)> {
        match spec_dp_expectation(self, span, window, h, frozen)? {
            Some(out) => Ok(out),
            None => expectation_by_enumeration(self, span, window, h, frozen, budget),
        }
    }
}

/// Backward reachability of admissible completions inside a conditioned
/// volume: entry `[i][s]` is true when the grammar state `s` (last `order`
/// symbols before offset `i`) extends to an interior meshing with the
/// right part of `window`. `None` when the state space is too wide.
fn grammar_reachability(
    grammar: &Grammar,
    span: Interval,
    window: &Word,
) -> Option<Vec<Vec<bool>>> {
    let g = grammar.order();
    let n = span.len();
    let base = grammar.alphabet_len();
    if g == 0 {
        return Some(vec![vec![true]; n + 1]);
    }
    let states = base.checked_pow(g as u32).filter(|&s| s <= 4096)?;
    let shift = |s: usize, c: Sym| (s * base + c as usize) % states;
    let state_syms = |mut s: usize| -> Vec<Sym> {
        let mut out = vec![0 as Sym; g];
        for i in (0..g).rev() {
            out[i] = (s % base) as Sym;
            s /= base;
        }
        out
    };
    // seam check: factors ending right of the span, state holding its tail
    let seam_ok = |s: usize| -> bool {
        let tail = state_syms(s);
        for k in 1..=g {
            let end = span.hi() + k as i64;
            if window.end() < end {
                break;
            }
            let mut factor = Vec::with_capacity(g + 1);
            for site in end - g as i64..=end {
                if site > span.hi() {
                    factor.push(window.get(site).unwrap());
                } else {
                    factor.push(tail[(site - (span.hi() - g as i64 + 1)) as usize]);
                }
            }
            if !grammar.factor_allowed(&factor) {
                return false;
            }
        }
        true
    };
    let mut ok = vec![vec![false; states]; n + 1];
    for s in 0..states {
        ok[n][s] = seam_ok(s);
    }
    for i in (0..n).rev() {
        for s in 0..states {
            for c in 0..base as Sym {
                let mut factor = state_syms(s);
                factor.push(c);
                if grammar.factor_allowed(&factor) && ok[i + 1][shift(s, c)] {
                    ok[i][s] = true;
                    break;
                }
            }
        }
    }
    Some(ok)
}

/// Lexicographically smallest admissible interior of `span` compatible
/// with the surrounding `window`, or `None` when the grammar admits none.
fn admissible_reference(
    grammar: &Grammar,
    span: Interval,
    window: &Word,
    ok: &[Vec<bool>],
) -> Option<Vec<Sym>> {
    let g = grammar.order();
    let n = span.len();
    let base = grammar.alphabet_len();
    if g == 0 {
        return Some(vec![0; n]);
    }
    let states = ok[0].len();
    let shift = |s: usize, c: Sym| (s * base + c as usize) % states;
    let state_syms = |mut s: usize| -> Vec<Sym> {
        let mut out = vec![0 as Sym; g];
        for i in (0..g).rev() {
            out[i] = (s % base) as Sym;
            s /= base;
        }
        out
    };
    let mut s = {
        let syms: Vec<Sym> = (span.lo() - g as i64..span.lo())
            .map(|site| window.get(site).unwrap())
            .collect();
        pack(&syms, base)
    };
    if !ok[0][s] {
        return None;
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut chosen = None;
        for c in 0..base as Sym {
            let mut factor = state_syms(s);
            factor.push(c);
            if grammar.factor_allowed(&factor) && ok[i + 1][shift(s, c)] {
                chosen = Some(c);
                break;
            }
        }
        let c = chosen?;
        out.push(c);
        s = shift(s, c);
    }
    Some(out)
}

/// Transfer pass over a conditioned volume of a two-sided kernel family.
///
/// Interior weights factor through single-site density ratios against a
/// fixed admissible reference interior, flipped left to right; each ratio
/// reads a bounded context, so a state-indexed sweep computes conditioned
/// normalizers in time linear in the volume. Returns `Ok(None)` when a
/// ratio degenerates (zero density in a mixed context) and enumeration
/// must take over.
fn spec_dp_expectation(
    fam: &SpecFamily,
    span: Interval,
    window: &Word,
    h: &TestFn,
    frozen: &[(i64, Sym)],
) -> Result<Option<(f64, f64)>> {
    let base = fam.alphabet().len();
    let g = fam.grammar().order();
    let (rl, rr) = SpecFamily::reach(fam);
    let s_len = rl;
    if window.start() > span.lo() - rl as i64 || window.end() < span.hi() + rr as i64 {
        return Err(Error::WindowTooShort {
            site: span.lo(),
            needed: span.len() + rl + rr,
            available: window.len(),
        });
    }
    let states = match base.checked_pow(s_len as u32).filter(|&s| s <= 65536) {
        Some(s) => s,
        None => return Ok(None),
    };
    let n = span.len();
    let reach_tbl = match grammar_reachability(fam.grammar(), span, window) {
        Some(t) => t,
        None => return Ok(None),
    };
    let reference = match admissible_reference(fam.grammar(), span, window, &reach_tbl) {
        Some(r) => r,
        None => {
            return Err(Error::ZeroDenominator(format!(
                "no admissible interior on {span}"
            )))
        }
    };
    let g_states = reach_tbl[0].len();
    let mut forced: Vec<Option<Sym>> = vec![None; n];
    for &(site, sym) in frozen {
        forced[(site - span.lo()) as usize] = Some(sym);
    }
    // one pass per assignment of the free test-window sites
    let hspan = h.span();
    let h_sites: Vec<i64> = hspan
        .sites()
        .filter(|&s| forced[(s - span.lo()) as usize].is_none())
        .collect();
    let passes = base.pow(h_sites.len() as u32);
    let shift = |s: usize, c: Sym| (s * base + c as usize) % states.max(1);
    let init_state = if s_len == 0 {
        0usize
    } else {
        let syms: Vec<Sym> = (span.lo() - s_len as i64..span.lo())
            .map(|site| window.get(site).unwrap())
            .collect();
        pack(&syms, base)
    };
    // density of `window` overlaid with explicit symbols around `site`
    let local = |site: i64, left: &[Sym], at: Sym| -> Result<f64> {
        let (ml, mr) = fam.singleton(site).memory();
        let lo = site - ml as i64;
        let hi = site + mr as i64;
        let mut syms = Vec::with_capacity((hi - lo + 1) as usize);
        for p in lo..=hi {
            let v = if p < site - left.len() as i64 || p > span.hi() {
                window.get(p).unwrap()
            } else if p < site {
                left[(p - (site - left.len() as i64)) as usize]
            } else if p == site {
                at
            } else {
                reference[(p - span.lo()) as usize]
            };
            syms.push(v);
        }
        fam.rho_at(&Word::new(lo, syms), site)
    };
    let mut log_z: Vec<Option<f64>> = Vec::with_capacity(passes);
    let mut h_vals: Vec<f64> = Vec::with_capacity(passes);
    for pass in 0..passes {
        let assign = unpack(pass, base, h_sites.len());
        let mut pass_forced = forced.clone();
        for (t, &site) in h_sites.iter().enumerate() {
            pass_forced[(site - span.lo()) as usize] = Some(assign[t]);
        }
        let row: Vec<Sym> = hspan
            .sites()
            .map(|s| pass_forced[(s - span.lo()) as usize].unwrap())
            .collect();
        h_vals.push(h.eval_in(&row, hspan.lo()));
        let mut weights = vec![0.0f64; states.max(1)];
        weights[init_state] = 1.0;
        let mut scale = 0.0f64;
        let state_syms = |mut s: usize| -> Vec<Sym> {
            let mut out = vec![0 as Sym; s_len];
            for i in (0..s_len).rev() {
                out[i] = (s % base) as Sym;
                s /= base;
            }
            out
        };
        for i in 0..n {
            let site = span.lo() + i as i64;
            let mut next = vec![0.0f64; states.max(1)];
            for s in 0..states.max(1) {
                let w = weights[s];
                if w <= 0.0 {
                    continue;
                }
                let left = state_syms(s);
                let den = local(site, &left, reference[i])?;
                if den <= 0.0 {
                    return Ok(None);
                }
                for c in 0..base as Sym {
                    if let Some(f) = pass_forced[i] {
                        if c != f {
                            continue;
                        }
                    }
                    if g > 0 {
                        let mut factor = left[left.len() - g..].to_vec();
                        factor.push(c);
                        if !fam.grammar().factor_allowed(&factor) {
                            continue;
                        }
                        // dead branches carry no weight regardless of the
                        // mixed densities along them
                        if !reach_tbl[i + 1][pack(&factor[1..], base) % g_states] {
                            continue;
                        }
                    }
                    let num = local(site, &left, c)?;
                    if num <= 0.0 {
                        // live prefix with zero mixed density: the
                        // telescoping breaks and enumeration must decide
                        return Ok(None);
                    }
                    next[shift(s, c)] += w * num / den;
                }
            }
            let top = next.iter().fold(0.0f64, |m, &v| m.max(v));
            if top <= 0.0 {
                weights = next;
                break;
            }
            for v in next.iter_mut() {
                *v /= top;
            }
            scale += top.ln();
            weights = next;
        }
        // seam-dead states were pruned at the last transition
        let z: f64 = weights.iter().sum();
        log_z.push(if z > 0.0 { Some(z.ln() + scale) } else { None });
    }
    let top = log_z
        .iter()
        .flatten()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    if !top.is_finite() {
        return Err(Error::ZeroDenominator(format!(
            "conditioning has no mass on {span}"
        )));
    }
    let mut mass = 0.0f64;
    let mut acc = 0.0f64;
    for (lz, hv) in log_z.iter().zip(&h_vals) {
        if let Some(lz) = lz {
            let w = (lz - top).exp();
            mass += w;
            acc += w * hv;
        }
    }
    Ok(Some((acc / mass, 0.0)))
}

fn checked_sites(sites: &[i64]) -> Result<(Vec<i64>, i64, i64)> {
    if sites.is_empty() {
        return Err(Error::Config("empty site list".into()));
    }
    let set: BTreeSet<i64> = sites.iter().copied().collect();
    if set.len() != sites.len() {
        return Err(Error::Config("sites must be distinct".into()));
    }
    let sorted: Vec<i64> = set.into_iter().collect();
    let lo = sorted[0];
    let hi = *sorted.last().unwrap();
    Ok((sorted, lo, hi))
}

/// Ratio of the interval kernel on `[min sites, n]` to its marginal with
/// the `sites` interior summed out, all conditioned on the past part of
/// `window`.
///
/// `window` supplies the interior on `sites`, the exterior on the rest of
/// `[min sites, n]`, and as much past as the family wants to read. The
/// returned `n_used` is the depth `n - max sites`. The value is a
/// conditional probability up to the returned numeric radius; truncation
/// error is the caller's business (see [`lis_to_spec`]).
pub fn f_ratio<F: PastFamily + ?Sized>(
    family: &F,
    sites: &[i64],
    n: i64,
    window: &Word,
) -> Result<CertifiedValue> {
    let (sorted, lo, hi) = checked_sites(sites)?;
    if n < hi {
        return Err(Error::Config(format!(
            "truncation {n} lies before the last site {hi}"
        )));
    }
    if window.end() < n {
        return Err(Error::WindowTooShort {
            site: n,
            needed: (n - window.start() + 1) as usize,
            available: window.len(),
        });
    }
    let span = Interval::new(lo, n)?;
    let word = window.slice(span)?;
    let past = if window.start() < lo {
        window.slice(Interval::new(window.start(), lo - 1)?)?
    } else {
        Word::empty(lo)
    };
    let num = family.interval_product(&word, &past)?;
    let base = family.alphabet().len();
    let count = base.pow(sorted.len() as u32);
    let mut den = CertifiedValue::exact(0.0);
    for idx in 0..count {
        let assign = unpack(idx, base, sorted.len());
        let mut w = word.clone();
        for (t, &s) in sorted.iter().enumerate() {
            w.set(s, assign[t]);
        }
        let term = family.interval_product(&w, &past)?;
        den = den.add(&term);
    }
    if den.lo() <= 0.0 {
        return Err(Error::ZeroDenominator(format!(
            "interior marginal on sites {sorted:?} up to {n} is not positive"
        )));
    }
    let q = num.div(&den).ok_or_else(|| {
        Error::ZeroDenominator(format!(
            "interior marginal on sites {sorted:?} up to {n} straddles zero"
        ))
    })?;
    Ok(CertifiedValue::new(q.value, q.radius, (n - hi) as usize))
}

/// Truncation-tail bound for the ratio at depth `n`: summed variation of
/// all later site kernels over flips on `sites`, against the value floor.
pub fn ratio_tail<F: PastFamily + ?Sized>(family: &F, sites: &[i64], n: i64) -> f64 {
    let mut s = 0.0f64;
    for &j in sites {
        s += family.var_tail((n - j).max(0) as usize);
    }
    s / family.floor()
}

/// Two-sided conditional probability induced by a past-conditioned family,
/// with a rigorous truncation radius.
///
/// Picks the smallest depth whose summed-variation tail bound is at most
/// `target_radius`, evaluates [`f_ratio`] there, and returns the value with
/// the tail bound (plus any numeric radius) attached. Families with exact
/// memory `M` certify radius zero at depth `M`.
pub fn lis_to_spec<F: PastFamily + ?Sized>(
    family: &F,
    sites: &[i64],
    window: &Word,
    target_radius: f64,
    limits: &Limits,
) -> Result<CertifiedValue> {
    if !(target_radius > 0.0) {
        return Err(Error::Config("target radius must be positive".into()));
    }
    let (_, _, hi) = checked_sites(sites)?;
    let mut chosen = None;
    for step in 0..=limits.n_max {
        let n = hi + step as i64;
        if ratio_tail(family, sites, n) <= target_radius {
            chosen = Some(n);
            break;
        }
    }
    let n = chosen.ok_or(Error::TailNotSummable {
        target: target_radius,
        reached: ratio_tail(family, sites, hi + limits.n_max as i64),
        n_max: limits.n_max,
    })?;
    if window.end() < n {
        return Err(Error::WindowTooShort {
            site: n,
            needed: (n - window.start() + 1) as usize,
            available: window.len(),
        });
    }
    let f = f_ratio(family, sites, n, window)?;
    let tail = ratio_tail(family, sites, n);
    Ok(CertifiedValue::new(f.value, f.radius + tail, f.n_used))
}

/// Test function on a finite window of sites, tabulated per interior word.
#[derive(Clone, Debug)]
pub struct TestFn {
    span: Interval,
    base: usize,
    values: Vec<f64>,
}

impl TestFn {
    /// Tabulated function; `values` indexed by the packed word on `span`.
    pub fn new(span: Interval, base: usize, values: Vec<f64>) -> Result<Self> {
        let want = base.pow(span.len() as u32);
        if values.len() != want {
            return Err(Error::Config(format!(
                "test function has {} entries, expected {}",
                values.len(),
                want
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("test function entries must be finite".into()));
        }
        Ok(Self { span, base, values })
    }

    /// Constant function.
    pub fn constant(span: Interval, base: usize, c: f64) -> Result<Self> {
        Self::new(span, base, vec![c; base.pow(span.len() as u32)])
    }

    /// Indicator of a finite union of interior words on `span`.
    pub fn indicator(span: Interval, base: usize, words: &[Vec<Sym>]) -> Result<Self> {
        let mut values = vec![0.0; base.pow(span.len() as u32)];
        for w in words {
            if w.len() != span.len() {
                return Err(Error::Config(format!(
                    "event word length {} does not match span {}",
                    w.len(),
                    span
                )));
            }
            values[pack(w, base)] = 1.0;
        }
        Self::new(span, base, values)
    }

    /// Window the function reads.
    pub fn span(&self) -> Interval {
        self.span
    }

    /// Value on a hull row; `hull_lo` is the site of `syms[0]`.
    fn eval_in(&self, syms: &[Sym], hull_lo: i64) -> f64 {
        let a = (self.span.lo() - hull_lo) as usize;
        let b = (self.span.hi() - hull_lo) as usize;
        self.values[pack(&syms[a..=b], self.base)]
    }

    /// Largest absolute value the function takes.
    fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// One volume step of a boundary envelope.
#[derive(Clone, Copy, Debug)]
pub struct EnvelopeStep {
    /// Growth steps applied to the starting volume.
    pub depth: usize,
    /// Smallest probed value.
    pub lo: f64,
    /// Largest probed value.
    pub hi: f64,
    /// Boundary words that produced a value.
    pub probes: usize,
    /// True when every boundary word was attempted.
    pub exhaustive: bool,
}

impl EnvelopeStep {
    /// Width of the probed value range.
    pub fn spread(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Certified two-sided limit with its per-step envelope history.
#[derive(Clone, Debug)]
pub struct Envelope {
    /// Midpoint of the final envelope with radius half its spread.
    pub value: CertifiedValue,
    /// Envelope per volume step, in growth order.
    pub steps: Vec<EnvelopeStep>,
    /// True when any step fell back to sampled boundary probing.
    pub sampled: bool,
}

/// Limit of volume-grown conditional expectations of `h`, bracketed over
/// boundary words.
///
/// Starting from the volume `start`, the conditioned volume grows on the
/// selected sides. At each step every admissible boundary word on the
/// grown side(s) is probed (or a deterministic-extremes-plus-sampled subset
/// past `probe_budget`) and `h` is averaged under the volume's conditional
/// distribution, restricted to the window's values on `frozen` sites. The
/// limit is certified once the probe envelope is narrower than twice
/// `target_radius`; the midpoint halves the certificate for free.
pub fn envelope_limit<T: TwoSidedFamily + ?Sized>(
    fam: &T,
    h: &TestFn,
    window: &Word,
    frozen: &[i64],
    start: Interval,
    grow_left: bool,
    grow_right: bool,
    target_radius: f64,
    limits: &Limits,
) -> Result<Envelope> {
    if !(target_radius >= 0.0) {
        return Err(Error::Config("target radius must be nonnegative".into()));
    }
    if !grow_left && !grow_right {
        return Err(Error::Config("at least one side must grow".into()));
    }
    if h.span().lo() < start.lo() || h.span().hi() > start.hi() {
        return Err(Error::Config(format!(
            "test window {} outside starting volume {start}",
            h.span()
        )));
    }
    let (rl, rr) = fam.reach();
    let base = fam.alphabet().len();
    if !grow_left && rl > 0 && window.start() > start.lo() - rl as i64 {
        return Err(Error::WindowTooShort {
            site: start.lo() - rl as i64,
            needed: rl,
            available: window.len(),
        });
    }
    if !grow_right && rr > 0 && window.end() < start.hi() + rr as i64 {
        return Err(Error::WindowTooShort {
            site: start.hi() + rr as i64,
            needed: rr,
            available: window.len(),
        });
    }
    for &s in frozen {
        if !start.contains(s) {
            return Err(Error::Config(format!(
                "frozen site {s} outside starting volume {start}"
            )));
        }
        if window.get(s).is_none() {
            return Err(Error::Config(format!(
                "frozen site {s} has no value in the window"
            )));
        }
    }
    let frozen_pairs: Vec<(i64, Sym)> = frozen
        .iter()
        .map(|&s| (s, window.get(s).unwrap()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(limits.seed);
    let mut steps: Vec<EnvelopeStep> = Vec::new();
    let mut sampled = false;
    let mut last_spread = f64::INFINITY;
    for depth in 0..=limits.k_max {
        let hull = Interval::new(
            start.lo() - if grow_left { depth as i64 } else { 0 },
            start.hi() + if grow_right { depth as i64 } else { 0 },
        )?;
        let lprobe = if grow_left { rl } else { 0 };
        let rprobe = if grow_right { rr } else { 0 };
        let space = base.pow((lprobe + rprobe) as u32);
        let exhaustive = space <= limits.probe_budget;
        let mut picks: BTreeSet<usize> = BTreeSet::new();
        if exhaustive {
            picks.extend(0..space);
        } else {
            sampled = true;
            picks.insert(0);
            picks.insert(space - 1);
            while picks.len() < limits.probe_budget {
                picks.insert(rng.random_range(0..space));
            }
        }
        let dl = hull.lo() - rl as i64;
        let dr = hull.hi() + rr as i64;
        let domain = Interval::new(dl.min(window.start()), dr.max(window.end()))?;
        let mut template: Vec<Sym> = Vec::with_capacity(domain.len());
        for site in domain.sites() {
            template.push(window.get(site).unwrap_or(0));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut rad = 0.0f64;
        let mut used = 0usize;
        for &idx in &picks {
            let syms = unpack(idx, base, lprobe + rprobe);
            let mut trial = Word::new(domain.lo(), template.clone());
            for (t, &s) in syms[..lprobe].iter().enumerate() {
                trial.set(hull.lo() - lprobe as i64 + t as i64, s);
            }
            for (t, &s) in syms[lprobe..].iter().enumerate() {
                trial.set(hull.hi() + 1 + t as i64, s);
            }
            let (value, r) = match fam.conditional_expectation(
                hull,
                &trial,
                h,
                &frozen_pairs,
                limits.volume_budget,
            ) {
                Ok(out) => out,
                Err(Error::ZeroDenominator(_)) => continue,
                Err(e) => return Err(e),
            };
            lo = lo.min(value);
            hi = hi.max(value);
            rad = rad.max(r);
            used += 1;
        }
        if used == 0 {
            return Err(Error::ZeroDenominator(format!(
                "no boundary word admits the conditioning at depth {depth}"
            )));
        }
        steps.push(EnvelopeStep {
            depth,
            lo,
            hi,
            probes: used,
            exhaustive,
        });
        last_spread = hi - lo;
        if last_spread <= 2.0 * target_radius {
            let value =
                CertifiedValue::new((lo + hi) / 2.0, last_spread / 2.0 + rad, steps.len());
            return Ok(Envelope {
                value,
                steps,
                sampled,
            });
        }
    }
    Err(Error::SpreadNotContracting {
        spread: last_spread,
        k_used: limits.k_max,
        target: target_radius,
    })
}

/// Boundary envelopes of the conditional expectation of `h` over a fixed
/// run of symmetrically grown volumes, one step per depth in `0..steps`.
///
/// Unlike [`envelope_limit`] there is no target: the whole trace is
/// returned for inspection. Over exhaustively probed boundaries the upper
/// envelope never increases and the lower never decreases, because each
/// deeper conditional value is an average of shallower ones.
pub fn spread_trace<T: TwoSidedFamily + ?Sized>(
    fam: &T,
    h: &TestFn,
    window: &Word,
    start: Interval,
    steps: usize,
    limits: &Limits,
) -> Result<Vec<EnvelopeStep>> {
    if steps == 0 {
        return Err(Error::Config("spread trace needs at least one step".into()));
    }
    if h.span().lo() < start.lo() || h.span().hi() > start.hi() {
        return Err(Error::Config(format!(
            "test window {} outside starting volume {start}",
            h.span()
        )));
    }
    let (rl, rr) = fam.reach();
    let base = fam.alphabet().len();
    let mut rng = ChaCha8Rng::seed_from_u64(limits.seed);
    let mut out = Vec::with_capacity(steps);
    for depth in 0..steps {
        let hull = Interval::new(start.lo() - depth as i64, start.hi() + depth as i64)?;
        let space = base.pow((rl + rr) as u32);
        let exhaustive = space <= limits.probe_budget;
        let mut picks: BTreeSet<usize> = BTreeSet::new();
        if exhaustive {
            picks.extend(0..space);
        } else {
            picks.insert(0);
            picks.insert(space - 1);
            while picks.len() < limits.probe_budget {
                picks.insert(rng.random_range(0..space));
            }
        }
        let domain = Interval::new(
            (hull.lo() - rl as i64).min(window.start()),
            (hull.hi() + rr as i64).max(window.end()),
        )?;
        let mut template: Vec<Sym> = Vec::with_capacity(domain.len());
        for site in domain.sites() {
            template.push(window.get(site).unwrap_or(0));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut used = 0usize;
        for &idx in &picks {
            let syms = unpack(idx, base, rl + rr);
            let mut trial = Word::new(domain.lo(), template.clone());
            for (t, &s) in syms[..rl].iter().enumerate() {
                trial.set(hull.lo() - rl as i64 + t as i64, s);
            }
            for (t, &s) in syms[rl..].iter().enumerate() {
                trial.set(hull.hi() + 1 + t as i64, s);
            }
            let (value, _) =
                match fam.conditional_expectation(hull, &trial, h, &[], limits.volume_budget) {
                    Ok(v) => v,
                    Err(Error::ZeroDenominator(_)) => continue,
                    Err(e) => return Err(e),
                };
            lo = lo.min(value);
            hi = hi.max(value);
            used += 1;
        }
        if used == 0 {
            return Err(Error::ZeroDenominator(format!(
                "no boundary word admits the conditioning at depth {depth}"
            )));
        }
        out.push(EnvelopeStep {
            depth,
            lo,
            hi,
            probes: used,
            exhaustive,
        });
    }
    Ok(out)
}

/// Past-conditioned kernel recovered from a two-sided family.
///
/// Returns the probability of the event (a finite union of interior words
/// on `span`) conditioned on `past`, by growing the volume to the right
/// and bracketing over right boundary words until the envelope is narrower
/// than twice `target_radius`.
pub fn spec_to_lis<T: TwoSidedFamily + ?Sized>(
    fam: &T,
    span: Interval,
    event: &[Vec<Sym>],
    past: &Word,
    target_radius: f64,
    limits: &Limits,
) -> Result<Envelope> {
    let h = TestFn::indicator(span, fam.alphabet().len(), event)?;
    envelope_limit(fam, &h, past, &[], span, false, true, target_radius, limits)
}

/// Infinite site set exhausted by growing finite volumes.
#[derive(Clone, Copy, Debug)]
pub enum Region {
    /// All sites from `from` rightward.
    RightRay { from: i64 },
    /// All sites up to `upto`.
    LeftRay { upto: i64 },
    /// All sites outside the finite `gap`.
    Cofinite { gap: Interval },
}

/// Conditional expectation of `h` on an infinite volume, truncated along
/// an exhausting sequence of finite volumes with envelope certificates.
///
/// The window supplies the fixed exterior: the left context for a right
/// ray, the right context for a left ray, and the gap values for a
/// cofinite region (whose outer boundaries are probed on both sides).
pub fn global_kernel<T: TwoSidedFamily + ?Sized>(
    fam: &T,
    region: Region,
    h: &TestFn,
    window: &Word,
    target_radius: f64,
    limits: &Limits,
) -> Result<Envelope> {
    match region {
        Region::RightRay { from } => {
            if h.span().lo() < from {
                return Err(Error::Config(format!(
                    "test window {} leaves the region starting at {from}",
                    h.span()
                )));
            }
            let start = Interval::new(from, h.span().hi())?;
            envelope_limit(fam, h, window, &[], start, false, true, target_radius, limits)
        }
        Region::LeftRay { upto } => {
            if h.span().hi() > upto {
                return Err(Error::Config(format!(
                    "test window {} leaves the region ending at {upto}",
                    h.span()
                )));
            }
            let start = Interval::new(h.span().lo(), upto)?;
            envelope_limit(fam, h, window, &[], start, true, false, target_radius, limits)
        }
        Region::Cofinite { gap } => {
            if h.span().hi() >= gap.lo() && h.span().lo() <= gap.hi() {
                return Err(Error::Config(format!(
                    "test window {} overlaps the excluded gap {gap}",
                    h.span()
                )));
            }
            let start = Interval::new(
                h.span().lo().min(gap.lo()),
                h.span().hi().max(gap.hi()),
            )?;
            let frozen: Vec<i64> = gap.sites().collect();
            envelope_limit(
                fam,
                h,
                window,
                &frozen,
                start,
                true,
                true,
                target_radius,
                limits,
            )
        }
    }
}

/// Two-sided family induced by a past-conditioned one.
///
/// Finite-volume distributions are truncated ratios at the depth certified
/// by the variation tail for `target_radius`; every row carries that tail
/// as its radius. `max_span` caps the volumes the declared reach allows.
pub struct InducedSpec<'a, F: PastFamily + ?Sized> {
    family: &'a F,
    target_radius: f64,
    limits: Limits,
    max_span: usize,
}

impl<'a, F: PastFamily + ?Sized> InducedSpec<'a, F> {
    /// Wraps `family`; distributions will be certified to `target_radius`.
    pub fn new(family: &'a F, target_radius: f64, limits: Limits) -> Self {
        Self {
            family,
            target_radius,
            limits,
            max_span: 8,
        }
    }

    fn depth_for(&self, span_len: usize) -> usize {
        for d in 0..=self.limits.n_max {
            if span_len as f64 * self.family.var_tail(d) / self.family.floor()
                <= self.target_radius
            {
                return d;
            }
        }
        self.limits.n_max
    }
}

impl<F: PastFamily + ?Sized> TwoSidedFamily for InducedSpec<'_, F> {
    fn alphabet(&self) -> &Alphabet {
        self.family.alphabet()
    }

    fn grammar(&self) -> &Grammar {
        self.family.grammar()
    }

    fn reach(&self) -> (usize, usize) {
        let g = self.family.grammar().order();
        let left = match self.family.memory() {
            Some(m) => m.max(g),
            None => g.max(8),
        };
        (left.max(1), self.depth_for(self.max_span).max(g))
    }

    fn is_stationary(&self) -> bool {
        self.family.is_stationary()
    }

    fn interval_distribution(
        &self,
        span: Interval,
        window: &Word,
        budget: usize,
    ) -> Result<(Vec<(Vec<Sym>, f64)>, f64)> {
        let sites: Vec<i64> = span.sites().collect();
        let base = self.family.alphabet().len();
        let count = base
            .checked_pow(sites.len() as u32)
            .filter(|&c| c <= budget)
            .ok_or(Error::VolumeTooLarge {
                requested: (base as f64).powi(sites.len() as i32),
                budget,
            })?;
        let mut step = None;
        for d in 0..=self.limits.n_max {
            let n = span.hi() + d as i64;
            if ratio_tail(self.family, &sites, n) <= self.target_radius {
                step = Some(n);
                break;
            }
        }
        let n = step.ok_or(Error::TailNotSummable {
            target: self.target_radius,
            reached: ratio_tail(self.family, &sites, span.hi() + self.limits.n_max as i64),
            n_max: self.limits.n_max,
        })?;
        if window.end() < n {
            return Err(Error::WindowTooShort {
                site: n,
                needed: (n - window.start() + 1) as usize,
                available: window.len(),
            });
        }
        let tail = ratio_tail(self.family, &sites, n);
        let word = window.slice(Interval::new(span.lo(), n)?)?;
        let past = if window.start() < span.lo() {
            window.slice(Interval::new(window.start(), span.lo() - 1)?)?
        } else {
            Word::empty(span.lo())
        };
        let mut terms: Vec<CertifiedValue> = Vec::with_capacity(count);
        let mut total = CertifiedValue::exact(0.0);
        for idx in 0..count {
            let assign = unpack(idx, base, sites.len());
            let mut w = word.clone();
            for (t, &s) in sites.iter().enumerate() {
                w.set(s, assign[t]);
            }
            let term = self.family.interval_product(&w, &past)?;
            total = total.add(&term);
            terms.push(term);
        }
        if total.lo() <= 0.0 {
            return Err(Error::ZeroDenominator(format!(
                "interior marginal on {span} up to {n} is not positive"
            )));
        }
        let mut rows = Vec::new();
        let mut row_rad = tail;
        for (idx, term) in terms.iter().enumerate() {
            if term.value == 0.0 && term.radius == 0.0 {
                continue;
            }
            let q = term.div(&total).ok_or_else(|| {
                Error::ZeroDenominator("interior marginal straddles zero".into())
            })?;
            row_rad = row_rad.max(tail + q.radius);
            rows.push((unpack(idx, base, sites.len()), q.value));
        }
        if rows.is_empty() {
            return Err(Error::ZeroDenominator(format!(
                "no admissible interior on {span}"
            )));
        }
        Ok((rows, row_rad))
    }

    fn conditional_expectation(
        &self,
        span: Interval,
        window: &Word,
        h: &TestFn,
        frozen: &[(i64, Sym)],
        budget: usize,
    ) -> Result<(f64, f64)> {
        match self.dp_expectation(span, window, h, frozen)? {
            Some(out) => Ok(out),
            None => expectation_by_enumeration(self, span, window, h, frozen, budget),
        }
    }
}

impl<F: PastFamily + ?Sized> InducedSpec<'_, F> {
    /// Transfer pass over the truncated ratios of an exact-memory family.
    ///
    /// The ratio weights are plain products of site kernels, so partial
    /// products only need the memory-deep suffix of the interior: a
    /// state-indexed sweep sums them in time linear in the truncation
    /// depth. Returns `Ok(None)` for families without exact memory or
    /// with inexact kernel values, where enumeration must take over.
    fn dp_expectation(
        &self,
        span: Interval,
        window: &Word,
        h: &TestFn,
        frozen: &[(i64, Sym)],
    ) -> Result<Option<(f64, f64)>> {
        let mem = match self.family.memory() {
            Some(m) => m,
            None => return Ok(None),
        };
        let g = self.family.grammar().order();
        let s_len = mem.max(g);
        let base = self.family.alphabet().len();
        let states = match base.checked_pow(s_len as u32).filter(|&s| s <= 65536) {
            Some(s) => s,
            None => return Ok(None),
        };
        let sites: Vec<i64> = span.sites().collect();
        let mut chosen = None;
        for d in 0..=self.limits.n_max {
            let n = span.hi() + d as i64;
            if ratio_tail(self.family, &sites, n) <= self.target_radius {
                chosen = Some(n);
                break;
            }
        }
        let n = chosen.ok_or(Error::TailNotSummable {
            target: self.target_radius,
            reached: ratio_tail(self.family, &sites, span.hi() + self.limits.n_max as i64),
            n_max: self.limits.n_max,
        })?;
        let tail = ratio_tail(self.family, &sites, n);
        if window.start() > span.lo() - s_len as i64 || window.end() < n {
            return Err(Error::WindowTooShort {
                site: span.lo(),
                needed: (n - span.lo()) as usize + s_len + 1,
                available: window.len(),
            });
        }
        let len = (n - span.lo() + 1) as usize;
        let mut forced: Vec<Option<Sym>> = vec![None; len];
        for &(site, sym) in frozen {
            forced[(site - span.lo()) as usize] = Some(sym);
        }
        for site in span.hi() + 1..=n {
            forced[(site - span.lo()) as usize] = Some(window.get(site).unwrap());
        }
        let hspan = h.span();
        let h_sites: Vec<i64> = hspan
            .sites()
            .filter(|&s| forced[(s - span.lo()) as usize].is_none())
            .collect();
        let passes = base.pow(h_sites.len() as u32);
        let shift = |s: usize, c: Sym| (s * base + c as usize) % states.max(1);
        let init_state = if s_len == 0 {
            0usize
        } else {
            let syms: Vec<Sym> = (span.lo() - s_len as i64..span.lo())
                .map(|site| window.get(site).unwrap())
                .collect();
            pack(&syms, base)
        };
        let state_syms = |mut s: usize| -> Vec<Sym> {
            let mut out = vec![0 as Sym; s_len];
            for i in (0..s_len).rev() {
                out[i] = (s % base) as Sym;
                s /= base;
            }
            out
        };
        let mut log_z: Vec<Option<f64>> = Vec::with_capacity(passes);
        let mut h_vals: Vec<f64> = Vec::with_capacity(passes);
        for pass in 0..passes {
            let assign = unpack(pass, base, h_sites.len());
            let mut pass_forced = forced.clone();
            for (t, &site) in h_sites.iter().enumerate() {
                pass_forced[(site - span.lo()) as usize] = Some(assign[t]);
            }
            let row: Vec<Sym> = hspan
                .sites()
                .map(|s| pass_forced[(s - span.lo()) as usize].unwrap())
                .collect();
            h_vals.push(h.eval_in(&row, hspan.lo()));
            let mut weights = vec![0.0f64; states.max(1)];
            weights[init_state] = 1.0;
            let mut scale = 0.0f64;
            for (i, item) in pass_forced.iter().enumerate().take(len) {
                let site = span.lo() + i as i64;
                let mut next = vec![0.0f64; states.max(1)];
                for s in 0..states.max(1) {
                    let w = weights[s];
                    if w <= 0.0 {
                        continue;
                    }
                    let past = if s_len == 0 {
                        Word::empty(site)
                    } else {
                        Word::new(site - s_len as i64, state_syms(s))
                    };
                    for c in 0..base as Sym {
                        if let Some(f) = item {
                            if c != *f {
                                continue;
                            }
                        }
                        let (v, r) = self.family.eval(site, &past, c)?;
                        if r > 0.0 {
                            return Ok(None);
                        }
                        if v <= 0.0 {
                            continue;
                        }
                        next[shift(s, c)] += w * v;
                    }
                }
                let top = next.iter().fold(0.0f64, |m, &v| m.max(v));
                if top <= 0.0 {
                    weights = next;
                    break;
                }
                for v in next.iter_mut() {
                    *v /= top;
                }
                scale += top.ln();
                weights = next;
            }
            let z: f64 = weights.iter().sum();
            log_z.push(if z > 0.0 { Some(z.ln() + scale) } else { None });
        }
        let top = log_z
            .iter()
            .flatten()
            .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        if !top.is_finite() {
            return Err(Error::ZeroDenominator(format!(
                "conditioning has no mass on {span}"
            )));
        }
        let mut mass = 0.0f64;
        let mut acc = 0.0f64;
        for (lz, hv) in log_z.iter().zip(&h_vals) {
            if let Some(lz) = lz {
                let w = (lz - top).exp();
                mass += w;
                acc += w * hv;
            }
        }
        Ok(Some((acc / mass, tail)))
    }
}

/// Past-conditioned family induced by a two-sided one.
///
/// Single-site kernels are envelope limits over right boundaries; the
/// declared `memory` drives the variation-tail certificates of anything
/// built on top, and `floor` is measured over admissible contexts at the
/// declared depth.
pub struct InducedLis<'a, T: TwoSidedFamily + ?Sized> {
    spec: &'a T,
    target_radius: f64,
    limits: Limits,
    memory: MemoryBound,
    floor: f64,
}

impl<'a, T: TwoSidedFamily + ?Sized> InducedLis<'a, T> {
    /// Wraps `spec` with a declared memory profile for the induced kernels.
    ///
    /// The positive floor is measured by evaluating every admissible
    /// context at the profile's depth; a nonpositive certified lower bound
    /// is a positivity error.
    pub fn new(
        spec: &'a T,
        target_radius: f64,
        limits: Limits,
        memory: MemoryBound,
    ) -> Result<Self> {
        let depth = match &memory {
            MemoryBound::Exact(m) => (*m).max(spec.grammar().order()).max(1),
            MemoryBound::Decaying(_) => spec.grammar().order().max(4),
        };
        let base = spec.alphabet().len();
        let count = base
            .checked_pow(depth as u32)
            .filter(|&c| c <= 4096)
            .ok_or(Error::Config(
                "floor measurement needs at most 4096 contexts".into(),
            ))?;
        let mut me = Self {
            spec,
            target_radius,
            limits,
            memory,
            floor: f64::INFINITY,
        };
        let mut floor = f64::INFINITY;
        for idx in 0..count {
            let past_syms = unpack(idx, base, depth);
            if !spec.grammar().is_admissible(&past_syms) {
                continue;
            }
            let past = Word::new(-(depth as i64), past_syms.clone());
            for sym in 0..base as Sym {
                if !spec
                    .grammar()
                    .admissible_in_context(&past_syms, &[sym], &[])
                {
                    continue;
                }
                let (v, r) = PastFamily::eval(&me, 0, &past, sym)?;
                let low = v - r;
                if low <= 0.0 {
                    return Err(Error::PositivityViolated {
                        context: format!(
                            "induced kernel at symbol {sym} after {past_syms:?}"
                        ),
                        value: low,
                    });
                }
                floor = floor.min(low);
            }
        }
        if !floor.is_finite() {
            return Err(Error::Config("no admissible context for the floor".into()));
        }
        me.floor = floor;
        Ok(me)
    }
}

impl<T: TwoSidedFamily + ?Sized> PastFamily for InducedLis<'_, T> {
    fn alphabet(&self) -> &Alphabet {
        self.spec.alphabet()
    }

    fn grammar(&self) -> &Grammar {
        self.spec.grammar()
    }

    fn eval(&self, site: i64, past: &Word, sym: Sym) -> Result<(f64, f64)> {
        if !past.is_empty() && past.end() != site - 1 {
            return Err(Error::Config(format!(
                "past window ends at {}, expected {}",
                past.end(),
                site - 1
            )));
        }
        let span = Interval::new(site, site)?;
        let env = spec_to_lis(
            self.spec,
            span,
            &[vec![sym]],
            past,
            self.target_radius,
            &self.limits,
        )?;
        Ok((env.value.value, env.value.radius))
    }

    fn floor(&self) -> f64 {
        self.floor
    }

    fn var_tail(&self, gap: usize) -> f64 {
        match &self.memory {
            MemoryBound::Exact(m) => {
                if gap >= *m {
                    0.0
                } else {
                    (*m - gap) as f64
                }
            }
            MemoryBound::Decaying(d) => d.tail_sum(gap),
        }
    }

    fn var_bound(&self, gap: usize) -> f64 {
        match &self.memory {
            MemoryBound::Exact(m) => {
                if gap >= *m {
                    0.0
                } else {
                    1.0
                }
            }
            MemoryBound::Decaying(d) => d.var_bound(gap),
        }
    }

    fn var_sq_tail(&self, gap: usize) -> f64 {
        match &self.memory {
            MemoryBound::Exact(m) => {
                if gap >= *m {
                    0.0
                } else {
                    (*m - gap) as f64
                }
            }
            MemoryBound::Decaying(d) => d.sq_tail_sum(gap),
        }
    }

    fn memory(&self) -> Option<usize> {
        match &self.memory {
            MemoryBound::Exact(m) => Some(*m),
            MemoryBound::Decaying(_) => None,
        }
    }

    fn is_stationary(&self) -> bool {
        self.spec.is_stationary()
    }
}

/// One compared probe of a round trip.
#[derive(Clone, Debug)]
pub struct ProbeOutcome {
    /// Human-readable probe description.
    pub label: String,
    /// Value from the original family.
    pub direct: CertifiedValue,
    /// Value after composing the two maps.
    pub composed: CertifiedValue,
    /// Absolute difference of the two values.
    pub discrepancy: f64,
    /// Radii sum plus the caller's tolerance.
    pub allowed: f64,
    /// True when the discrepancy is within the allowance.
    pub pass: bool,
}

/// Round-trip comparison across a probe collection.
#[derive(Clone, Debug)]
pub struct RoundtripReport {
    /// Per-probe results in input order.
    pub outcomes: Vec<ProbeOutcome>,
    /// Largest discrepancy observed.
    pub max_discrepancy: f64,
    /// True when every probe passed.
    pub pass: bool,
}

impl RoundtripReport {
    fn from_outcomes(outcomes: Vec<ProbeOutcome>) -> Self {
        let max_discrepancy = outcomes
            .iter()
            .fold(0.0f64, |m, o| m.max(o.discrepancy));
        let pass = outcomes.iter().all(|o| o.pass);
        Self {
            outcomes,
            max_discrepancy,
            pass,
        }
    }
}

/// Single-site probe of a past-conditioned kernel.
#[derive(Clone, Debug)]
pub struct PastProbe {
    /// Site evaluated.
    pub site: i64,
    /// Adjacent past window.
    pub past: Word,
    /// Symbol whose probability is compared.
    pub sym: Sym,
}

/// Finite-volume probe of a two-sided kernel.
#[derive(Clone, Debug)]
pub struct SpecProbe {
    /// Conditioned sites.
    pub sites: Vec<i64>,
    /// Window carrying the interior and the exterior context.
    pub window: Word,
}

/// Composes the two maps starting from a past-conditioned family and
/// compares against the family itself on single-site probes.
///
/// The past window of each probe must extend far enough right of the site
/// to cover the truncation depth of the intermediate two-sided family.
pub fn roundtrip_cb<F: PastFamily + ?Sized>(
    family: &F,
    probes: &[PastProbe],
    target_radius: f64,
    tolerance: f64,
    limits: &Limits,
) -> Result<RoundtripReport> {
    let induced = InducedSpec::new(family, target_radius, limits.clone());
    let mut outcomes = Vec::with_capacity(probes.len());
    for p in probes {
        let (v, r) = family.eval(p.site, &p.past, p.sym)?;
        let direct = CertifiedValue::new(v, r, 0);
        let span = Interval::new(p.site, p.site)?;
        let env = spec_to_lis(
            &induced,
            span,
            &[vec![p.sym]],
            &p.past,
            target_radius,
            limits,
        )?;
        let discrepancy = (direct.value - env.value.value).abs();
        let allowed = direct.radius + env.value.radius + tolerance;
        outcomes.push(ProbeOutcome {
            label: format!("site {} sym {} past {:?}", p.site, p.sym, p.past.syms()),
            direct,
            composed: env.value,
            discrepancy,
            pass: discrepancy <= allowed,
            allowed,
        });
    }
    Ok(RoundtripReport::from_outcomes(outcomes))
}

/// Composes the two maps starting from a two-sided family and compares
/// against the family itself on finite-volume probes.
///
/// `memory` declares the variation profile of the intermediate
/// past-conditioned family (exact memory for finite-range models).
pub fn roundtrip_bc(
    spec: &SpecFamily,
    probes: &[SpecProbe],
    memory: MemoryBound,
    target_radius: f64,
    tolerance: f64,
    limits: &Limits,
) -> Result<RoundtripReport> {
    let induced = InducedLis::new(spec, target_radius, limits.clone(), memory)?;
    let mut outcomes = Vec::with_capacity(probes.len());
    for p in probes {
        let direct = CertifiedValue::exact(spec.gamma_volume(&p.sites, &p.window)?);
        let composed = lis_to_spec(&induced, &p.sites, &p.window, target_radius, limits)?;
        let discrepancy = (direct.value - composed.value).abs();
        let allowed = direct.radius + composed.radius + tolerance;
        outcomes.push(ProbeOutcome {
            label: format!("sites {:?} window {:?}", p.sites, p.window.syms()),
            direct,
            composed,
            discrepancy,
            pass: discrepancy <= allowed,
            allowed,
        });
    }
    Ok(RoundtripReport::from_outcomes(outcomes))
}

/// Composition defect of nested conditional volumes: averaging the inner
/// volume's conditional under the outer one must reproduce the outer
/// marginal. Returns the defect and the radius allowance.
pub fn composition_gap<T: TwoSidedFamily + ?Sized>(
    fam: &T,
    inner: Interval,
    outer: Interval,
    window: &Word,
    budget: usize,
) -> Result<(f64, f64)> {
    if inner.lo() < outer.lo() || inner.hi() > outer.hi() {
        return Err(Error::Config(format!(
            "inner volume {inner} not inside outer volume {outer}"
        )));
    }
    let (rows, row_rad) = fam.interval_distribution(outer, window, budget)?;
    let target: Vec<Sym> = inner
        .sites()
        .map(|s| window.get(s).unwrap())
        .collect();
    let pick = |row: &[Sym]| -> bool {
        inner
            .sites()
            .zip(target.iter())
            .all(|(s, &t)| row[(s - outer.lo()) as usize] == t)
    };
    let mut rhs = 0.0f64;
    let mut lhs = 0.0f64;
    let mut inner_rad = 0.0f64;
    for (row, p) in &rows {
        if pick(row) {
            rhs += p;
        }
        let mut overlaid = window.clone();
        for (t, site) in outer.sites().enumerate() {
            overlaid.set(site, row[t]);
        }
        let (inner_rows, ir) = fam.interval_distribution(inner, &overlaid, budget)?;
        let q = inner_rows
            .iter()
            .find(|(r, _)| r[..] == target[..])
            .map(|(_, q)| *q)
            .unwrap_or(0.0);
        lhs += p * q;
        inner_rad = inner_rad.max(ir);
    }
    let gap = (lhs - rhs).abs();
    let allowance = row_rad * rows.len() as f64 * 2.0 + inner_rad;
    Ok((gap, allowance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{GSingleton, RenewalDecay, RhoSingleton};
    use crate::oracle::TransferModel;

    fn markov_family() -> LisFamily {
        let ab = Alphabet::binary();
        let g = Grammar::full_shift(2);
        let k = GSingleton::from_matrix(&[vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap();
        LisFamily::stationary(ab, g, k).unwrap()
    }

    fn ising_spec(beta: f64) -> SpecFamily {
        let ab = Alphabet::new(vec!["+", "-"]).unwrap();
        let g = Grammar::full_shift(2);
        let k = RhoSingleton::pair_potential(vec![1.0, -1.0], beta).unwrap();
        SpecFamily::stationary(ab, g, k).unwrap()
    }

    fn ising_chain(beta: f64) -> TransferModel {
        let e = |a: f64, b: f64| (beta * a * b).exp();
        TransferModel::new(2, 1, vec![e(1.0, 1.0), e(1.0, -1.0), e(-1.0, 1.0), e(-1.0, -1.0)])
            .unwrap()
    }

    #[test]
    fn markov_probe_value_is_frozen_ratio() {
        let fam = markov_family();
        let w = Word::new(-1, vec![0, 1, 0]);
        let f = f_ratio(&fam, &[0], 1, &w).unwrap();
        assert!((f.value - 0.19672131147540983).abs() < 1e-15);
        assert_eq!(f.radius, 0.0);
        assert_eq!(f.n_used, 1);
    }

    #[test]
    fn zero_depth_ratio_is_the_interval_kernel() {
        let fam = markov_family();
        let w = Word::new(-1, vec![0, 1, 0, 1]);
        let f = f_ratio(&fam, &[0, 1, 2], 2, &w).unwrap();
        let direct = fam
            .lis_interval(
                &w.slice(Interval::new(0, 2).unwrap()).unwrap(),
                &w.slice(Interval::new(-1, -1).unwrap()).unwrap(),
            )
            .unwrap();
        assert!((f.value - direct.value).abs() < 1e-15);
    }

    #[test]
    fn ratios_sum_to_one_over_interiors() {
        let fam = markov_family();
        // sites 0 and 2 with site 1 and the tail fixed from the window
        let mut total = 0.0;
        for a in 0..2u8 {
            for b in 0..2u8 {
                let w = Word::new(-1, vec![1, a, 0, b, 1]);
                total += f_ratio(&fam, &[0, 2], 3, &w).unwrap().value;
            }
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iid_ratio_ignores_depth_and_exterior() {
        let ab = Alphabet::binary();
        let g = Grammar::full_shift(2);
        let k = GSingleton::iid(&[0.25, 0.75]).unwrap();
        let fam = LisFamily::stationary(ab, g, k).unwrap();
        for n in 0..4i64 {
            let w = Word::new(0, vec![1, 0, 1, 1, 0]);
            let f = f_ratio(&fam, &[0], n, &w).unwrap();
            assert!((f.value - 0.75).abs() < 1e-15, "n={n}");
        }
    }

    #[test]
    fn markov_limit_is_exact_at_depth_one() {
        let fam = markov_family();
        let oracle = TransferModel::from_matrix(&[vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap();
        let limits = Limits::default();
        for idx in 0..8usize {
            let syms = unpack(idx, 2, 3);
            let w = Word::new(-1, syms);
            let got = lis_to_spec(&fam, &[0], &w, 1e-9, &limits).unwrap();
            assert_eq!(got.radius, 0.0);
            assert_eq!(got.n_used, 1);
            let want = oracle
                .two_sided_conditional(&w, Interval::new(0, 0).unwrap())
                .unwrap();
            assert!((got.value - want).abs() < 1e-12);
        }
    }

    #[test]
    fn geometric_renewal_certifies_requested_radius() {
        let ab = Alphabet::binary();
        let g = Grammar::full_shift(2);
        let k = GSingleton::renewal(0, 0.4, 0.3, RenewalDecay::Geometric { ratio: 0.5 }).unwrap();
        let fam = LisFamily::stationary(ab, g, k).unwrap();
        let mut w = Word::new(-8, vec![0; 40]);
        w.set(-1, 0);
        let got = lis_to_spec(&fam, &[0], &w, 1e-6, &Limits::default()).unwrap();
        assert!(got.radius <= 1e-6 + 1e-12, "radius {}", got.radius);
        assert!(got.value > 0.0 && got.value < 1.0);
        // successive truncations stay inside the certified bracket
        let deep = f_ratio(&fam, &[0], w.end(), &w).unwrap();
        assert!(
            (deep.value - got.value).abs() <= got.radius + deep.radius + 1e-12,
            "{} vs {}",
            deep.value,
            got.value
        );
    }

    #[test]
    fn harmonic_tail_cannot_certify() {
        let ab = Alphabet::binary();
        let g = Grammar::full_shift(2);
        let k = GSingleton::renewal(0, 0.4, 0.3, RenewalDecay::Harmonic).unwrap();
        let fam = LisFamily::stationary(ab, g, k).unwrap();
        let w = Word::new(-4, vec![0; 80]);
        let err = lis_to_spec(&fam, &[0], &w, 1e-6, &Limits::default()).unwrap_err();
        assert!(matches!(err, Error::TailNotSummable { .. }), "{err}");
    }

    #[test]
    fn per_step_moves_obey_the_recursion_bound() {
        let fam = markov_family();
        let w = Word::new(-1, vec![0, 1, 0, 1, 1, 0, 0, 1]);
        let sites = [0i64];
        for n in 0..5i64 {
            let cur = f_ratio(&fam, &sites, n, &w).unwrap().value;
            let nxt = f_ratio(&fam, &sites, n + 1, &w).unwrap().value;
            // pointwise constants of the next singleton under interior flips
            let k = n + 1;
            let past = w.slice(Interval::new(-1, k - 1).unwrap()).unwrap();
            let target = w.get(k).unwrap();
            let mut cmin = f64::INFINITY;
            let mut delta = 0.0f64;
            let baseline = fam.eval(k, &past, target).unwrap().0;
            for a in 0..2u8 {
                let flipped = past.patched(crate::lattice::SitePatch { site: 0, sym: a });
                let v = fam.eval(k, &flipped, target).unwrap().0;
                cmin = cmin.min(v);
                delta = delta.max((baseline - v).abs());
            }
            assert!(
                (nxt - cur).abs() <= delta / cmin + 1e-14,
                "n={n}: |{nxt} - {cur}| > {delta}/{cmin}"
            );
        }
    }

    #[test]
    fn ising_limit_matches_the_chain_law() {
        let spec = ising_spec(0.5);
        let chain = ising_chain(0.5);
        let (rows, _) = chain.stationary_chain().unwrap();
        let limits = Limits::default();
        for prev in 0..2u8 {
            for sym in 0..2u8 {
                let past = Word::new(-1, vec![prev]);
                let env = spec_to_lis(
                    &spec,
                    Interval::new(0, 0).unwrap(),
                    &[vec![sym]],
                    &past,
                    1e-6,
                    &limits,
                )
                .unwrap();
                let want = rows[prev as usize][sym as usize];
                assert!(
                    (env.value.value - want).abs() <= env.value.radius + 1e-12,
                    "prev {prev} sym {sym}: {} vs {want}",
                    env.value.value
                );
            }
        }
    }

    #[test]
    fn ising_envelope_is_monotone_and_contracts() {
        let spec = ising_spec(0.5);
        let past = Word::new(-1, vec![0]);
        let env = spec_to_lis(
            &spec,
            Interval::new(0, 0).unwrap(),
            &[vec![0]],
            &past,
            1e-9,
            &Limits::default(),
        )
        .unwrap();
        for pair in env.steps.windows(2) {
            assert!(pair[1].hi <= pair[0].hi + 1e-15);
            assert!(pair[1].lo >= pair[0].lo - 1e-15);
        }
        let at10 = env.steps.iter().find(|s| s.depth == 10);
        if let Some(s) = at10 {
            assert!(s.spread() < 1e-3);
        }
        assert!(!env.sampled);
    }

    #[test]
    fn iid_spec_limit_is_immediate() {
        let ab = Alphabet::binary();
        let g = Grammar::full_shift(2);
        let k = RhoSingleton::from_table(2, 0, 0, vec![0.25, 0.75]).unwrap();
        let spec = SpecFamily::stationary(ab, g, k).unwrap();
        let env = spec_to_lis(
            &spec,
            Interval::new(0, 0).unwrap(),
            &[vec![1]],
            &Word::empty(0),
            1e-12,
            &Limits::default(),
        )
        .unwrap();
        assert_eq!(env.value.n_used, 1);
        assert_eq!(env.value.radius, 0.0);
        assert!((env.value.value - 0.75).abs() < 1e-15);
    }

    #[test]
    fn golden_mean_spec_recovers_chain_transitions() {
        let ab = Alphabet::binary();
        let g = Grammar::from_forbidden(1, 2, &[vec![1, 1]]).unwrap();
        let t = vec![
            1.0 / 3.0,
            1.0,
            2.0 / 3.0,
            0.0,
            1.0,
            1.0,
            0.0,
            0.0,
        ];
        let k = RhoSingleton::from_table(2, 1, 1, t).unwrap();
        let spec = SpecFamily::stationary(ab, g, k).unwrap();
        let limits = Limits::default();
        let env = spec_to_lis(
            &spec,
            Interval::new(0, 0).unwrap(),
            &[vec![0]],
            &Word::new(-1, vec![0]),
            1e-9,
            &limits,
        )
        .unwrap();
        assert!(
            (env.value.value - 0.5).abs() <= env.value.radius + 1e-12,
            "{}",
            env.value.value
        );
        let forced = spec_to_lis(
            &spec,
            Interval::new(0, 0).unwrap(),
            &[vec![0]],
            &Word::new(-1, vec![1]),
            1e-9,
            &limits,
        )
        .unwrap();
        assert!((forced.value.value - 1.0).abs() <= forced.value.radius + 1e-12);
    }

    #[test]
    fn markov_roundtrip_is_tight() {
        let fam = markov_family();
        let mut probes = Vec::new();
        for prev in 0..2u8 {
            for sym in 0..2u8 {
                // long zero tail so the intermediate ratios can truncate deep
                let mut past = Word::new(-1, vec![prev]);
                for _ in 0..16 {
                    let mut w = Word::new(past.start() - 1, vec![0]);
                    w = w.join(&past).unwrap();
                    past = w;
                }
                probes.push(PastProbe {
                    site: 0,
                    past,
                    sym,
                });
            }
        }
        let report = roundtrip_cb(&fam, &probes, 1e-10, 1e-9, &Limits::default()).unwrap();
        assert!(report.pass, "max discrepancy {}", report.max_discrepancy);
        assert!(report.max_discrepancy <= 1e-9);
    }

    #[test]
    fn ising_roundtrip_recovers_volume_kernels() {
        let spec = ising_spec(0.5);
        let mut probes = Vec::new();
        for idx in 0..8usize {
            let syms = unpack(idx, 2, 3);
            let mut window = Word::new(-1, syms);
            for _ in 0..8 {
                window.push(0);
            }
            probes.push(SpecProbe {
                sites: vec![0],
                window,
            });
        }
        let report = roundtrip_bc(
            &spec,
            &probes,
            MemoryBound::Exact(1),
            1e-7,
            1e-6,
            &Limits::default(),
        )
        .unwrap();
        assert!(report.pass, "max discrepancy {}", report.max_discrepancy);
        for o in &report.outcomes {
            assert!(o.composed.radius <= 1e-5, "radius {}", o.composed.radius);
        }
    }

    #[test]
    fn constant_test_function_is_exact() {
        let spec = ising_spec(0.5);
        let h = TestFn::constant(Interval::new(0, 0).unwrap(), 2, 1.0).unwrap();
        let env = global_kernel(
            &spec,
            Region::RightRay { from: 0 },
            &h,
            &Word::new(-1, vec![0]),
            1e-12,
            &Limits::default(),
        )
        .unwrap();
        assert!((env.value.value - 1.0).abs() < 1e-14);
        assert!(env.value.radius < 1e-12 + 1e-15);
    }

    #[test]
    fn ray_kernel_agrees_with_single_site_limit() {
        let spec = ising_spec(0.5);
        let h = TestFn::indicator(Interval::new(0, 0).unwrap(), 2, &[vec![0]]).unwrap();
        let ray = global_kernel(
            &spec,
            Region::RightRay { from: 0 },
            &h,
            &Word::new(-1, vec![0]),
            1e-8,
            &Limits::default(),
        )
        .unwrap();
        let single = spec_to_lis(
            &spec,
            Interval::new(0, 0).unwrap(),
            &[vec![0]],
            &Word::new(-1, vec![0]),
            1e-8,
            &Limits::default(),
        )
        .unwrap();
        let gap = (ray.value.value - single.value.value).abs();
        assert!(gap <= ray.value.radius + single.value.radius + 1e-12);
    }

    #[test]
    fn cofinite_kernel_matches_two_step_chain_law() {
        let spec = ising_spec(0.5);
        let chain = ising_chain(0.5);
        let (rows, _) = chain.stationary_chain().unwrap();
        // condition on site 0 only; ask for the law of site 2
        let h = TestFn::indicator(Interval::new(2, 2).unwrap(), 2, &[vec![0]]).unwrap();
        let env = global_kernel(
            &spec,
            Region::Cofinite {
                gap: Interval::new(0, 0).unwrap(),
            },
            &h,
            &Word::new(0, vec![0]),
            1e-7,
            &Limits::default(),
        )
        .unwrap();
        let want: f64 = (0..2).map(|m| rows[0][m] * rows[m][0]).sum();
        assert!(
            (env.value.value - want).abs() <= env.value.radius + 1e-12,
            "{} vs {want}",
            env.value.value
        );
    }

    #[test]
    fn induced_spec_composes_consistently() {
        let fam = markov_family();
        let induced = InducedSpec::new(&fam, 1e-10, Limits::default());
        let mut window = Word::new(-2, vec![0, 1]);
        for s in [1, 0, 0, 1, 0, 0, 0, 0] {
            window.push(s);
        }
        let (gap, allowance) = composition_gap(
            &induced,
            Interval::new(1, 2).unwrap(),
            Interval::new(0, 3).unwrap(),
            &window,
            1 << 16,
        )
        .unwrap();
        assert!(gap <= allowance + 1e-10, "gap {gap} allowance {allowance}");
    }

    #[test]
    fn spec_composition_is_exact_for_ising() {
        let spec = ising_spec(0.5);
        let window = Word::new(-1, vec![0, 1, 0, 0, 1, 0]);
        let (gap, allowance) = composition_gap(
            &spec,
            Interval::new(1, 2).unwrap(),
            Interval::new(0, 3).unwrap(),
            &window,
            1 << 16,
        )
        .unwrap();
        assert!(gap <= allowance + 1e-12, "gap {gap}");
    }

    #[test]
    fn spread_trace_envelopes_are_monotone_and_contract() {
        let spec = ising_spec(0.5);
        let span = Interval::new(0, 0).unwrap();
        let h = TestFn::indicator(span, 2, &[vec![0]]).unwrap();
        let window = Word::new(0, vec![0]);
        let steps = spread_trace(&spec, &h, &window, span, 11, &Limits::default()).unwrap();
        assert_eq!(steps.len(), 11);
        for pair in steps.windows(2) {
            assert!(pair[1].hi <= pair[0].hi + 1e-15, "upper envelope grew");
            assert!(pair[1].lo >= pair[0].lo - 1e-15, "lower envelope shrank");
        }
        assert!(steps[10].spread() < 1e-3, "spread {}", steps[10].spread());
        assert!(steps.iter().all(|s| s.exhaustive));
    }

    #[test]
    fn spread_trace_of_a_constant_is_flat() {
        let spec = ising_spec(0.5);
        let span = Interval::new(0, 0).unwrap();
        let h = TestFn::constant(span, 2, 3.5).unwrap();
        let window = Word::new(0, vec![0]);
        let steps = spread_trace(&spec, &h, &window, span, 4, &Limits::default()).unwrap();
        for s in &steps {
            assert_eq!(s.spread(), 0.0);
            assert_eq!(s.hi, 3.5);
        }
    }

    #[test]
    fn slowed_decay_reports_spread_not_contracting() {
        // spread stalls when the volume cannot grow: k_max 0 freezes it
        let spec = ising_spec(1.0);
        let limits = Limits {
            k_max: 0,
            ..Limits::default()
        };
        let err = spec_to_lis(
            &spec,
            Interval::new(0, 0).unwrap(),
            &[vec![0]],
            &Word::new(-1, vec![0]),
            1e-9,
            &limits,
        )
        .unwrap_err();
        match err {
            Error::SpreadNotContracting { spread, k_used, .. } => {
                assert!(spread > 1e-9);
                assert_eq!(k_used, 0);
            }
            other => panic!("unexpected error {other}"),
        }
    }
}
