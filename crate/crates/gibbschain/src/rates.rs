//! Continuity rates, interdependence coefficients, uniqueness criteria,
//! and certified oscillation bounds for transported kernels.
//!
//! Everything here is measured on truncated windows and carries either an
//! exact radius or a truncation radius from the family's declared decay.
//! Divergent-series criteria are certified only when the decay profile
//! implies the series terms stay above a positive constant; a verdict is
//! never upgraded on numerical evidence alone. Budgeted enumerations fall
//! back to deterministic sampling and say so: a sampled supremum is a
//! certified lower bound for the quantity, not an upper one, and the
//! consumers here only use it in that direction.

use crate::certified::CertifiedValue;
use crate::error::{Error, Result};
use crate::kernels::SpecFamily;
use crate::lattice::{unpack, Grammar, Interval, SitePatch, Sym, Word};
use crate::transport::{lis_to_spec, ratio_tail, spec_to_lis, Limits, PastFamily, TwoSidedFamily};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

const SAMPLE_SEED: u64 = 0x5eed;

/// A measured quantity with an honesty flag.
///
/// When `exhaustive` is false the enumeration was budget-capped: for
/// supremum-type quantities the interval's lower end is still certified
/// (witnessed by evaluated pairs) while the upper end only covers what was
/// probed; for infimum-type quantities the roles swap.
#[derive(Clone, Copy, Debug)]
pub struct Measured {
    /// Value with its certified radius.
    pub value: CertifiedValue,
    /// True when every candidate window was enumerated.
    pub exhaustive: bool,
}

/// Admissible words of a given length, exhaustively or by deterministic
/// sampling when the count exceeds `budget`.
fn candidate_words(
    grammar: &Grammar,
    base: usize,
    len: usize,
    budget: usize,
    seed: u64,
) -> (Vec<Vec<Sym>>, bool) {
    let total = (base as f64).powi(len as i32);
    if total <= budget.max(1) as f64 {
        let n = base.pow(len as u32);
        let words = (0..n)
            .map(|i| unpack(i, base, len))
            .filter(|w| grammar.is_admissible(w))
            .collect();
        return (words, true);
    }
    let mut set: BTreeSet<Vec<Sym>> = BTreeSet::new();
    for a in 0..base {
        set.insert(vec![a as Sym; len]);
        for b in 0..base {
            set.insert(
                (0..len)
                    .map(|i| if i % 2 == 0 { a as Sym } else { b as Sym })
                    .collect(),
            );
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..budget.saturating_mul(4) {
        if set.len() >= budget {
            break;
        }
        set.insert((0..len).map(|_| rng.random_range(0..base) as Sym).collect());
    }
    (
        set.into_iter().filter(|w| grammar.is_admissible(w)).collect(),
        false,
    )
}

/// Kernel value at the last site of `word`, conditioned on the rest.
fn eval_at<F: PastFamily + ?Sized>(family: &F, site: i64, word: &Word) -> Result<(f64, f64)> {
    let past = if site > word.start() {
        word.slice(Interval::new(word.start(), site - 1)?)?
    } else {
        Word::empty(site)
    };
    family.eval(site, &past, word.get(site).unwrap())
}

/// Per-bucket aggregates for sup/inf measurements over truncated windows.
#[derive(Clone, Copy)]
struct Agg {
    max_hi: f64,
    min_lo: f64,
    max_lo: f64,
    min_hi: f64,
}

impl Agg {
    fn new() -> Self {
        Agg {
            max_hi: f64::NEG_INFINITY,
            min_lo: f64::INFINITY,
            max_lo: f64::NEG_INFINITY,
            min_hi: f64::INFINITY,
        }
    }

    fn push(&mut self, v: f64, r: f64) {
        self.max_hi = self.max_hi.max(v + r);
        self.min_lo = self.min_lo.min(v - r);
        self.max_lo = self.max_lo.max(v - r);
        self.min_hi = self.min_hi.min(v + r);
    }

    /// Certified interval for the spread sup |x - y| within the bucket.
    fn spread(&self) -> (f64, f64) {
        let hi = (self.max_hi - self.min_lo).max(0.0);
        let lo = (self.max_lo - self.min_hi).max(0.0);
        (lo, hi)
    }
}

/// Oscillation of the kernel at `site` over pasts agreeing on the last `k`
/// sites and the evaluated symbol.
///
/// Pasts are truncated at `depth` sites; the radius adds twice the declared
/// per-depth bound so the interval covers the supremum over full pasts.
/// Exact-memory families measured at `depth >= memory` get radius zero.
pub fn var_k<F: PastFamily + ?Sized>(
    family: &F,
    site: i64,
    k: usize,
    depth: usize,
    budget: usize,
) -> Result<Measured> {
    if depth < k {
        return Err(Error::Config(format!(
            "depth {depth} shorter than agreement length {k}"
        )));
    }
    let base = family.alphabet().len();
    let len = depth + 1;
    let (words, exhaustive) = candidate_words(family.grammar(), base, len, budget, SAMPLE_SEED);
    let mut buckets: BTreeMap<Vec<Sym>, Agg> = BTreeMap::new();
    for w in &words {
        let word = Word::new(site - depth as i64, w.clone());
        let (v, r) = eval_at(family, site, &word)?;
        let key = w[len - 1 - k..].to_vec();
        buckets.entry(key).or_insert_with(Agg::new).push(v, r);
    }
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    for agg in buckets.values() {
        let (l, h) = agg.spread();
        lo = lo.max(l);
        hi = hi.max(h);
    }
    let tail = 2.0 * family.var_bound(depth);
    let lo = (lo - tail).max(0.0);
    let hi = hi + tail;
    Ok(Measured {
        value: CertifiedValue::new((lo + hi) / 2.0, (hi - lo) / 2.0, depth),
        exhaustive,
    })
}

/// Oscillation of the log-kernel at `site`, same window semantics as
/// [`var_k`]. Requires a positive kernel floor.
pub fn var_log_k<F: PastFamily + ?Sized>(
    family: &F,
    site: i64,
    k: usize,
    depth: usize,
    budget: usize,
) -> Result<Measured> {
    if depth < k {
        return Err(Error::Config(format!(
            "depth {depth} shorter than agreement length {k}"
        )));
    }
    let floor = family.floor();
    if !(floor > 0.0) {
        return Err(Error::PositivityViolated {
            context: "log-oscillation needs a positive kernel floor".into(),
            value: floor,
        });
    }
    let base = family.alphabet().len();
    let len = depth + 1;
    let (words, exhaustive) = candidate_words(family.grammar(), base, len, budget, SAMPLE_SEED);
    let mut buckets: BTreeMap<Vec<Sym>, Agg> = BTreeMap::new();
    for w in &words {
        let word = Word::new(site - depth as i64, w.clone());
        let (v, r) = eval_at(family, site, &word)?;
        if v + r < floor {
            continue; // forbidden continuation, not a point of the chain
        }
        // admissible values live in [floor, 1]; clip the bracket there
        let lo = (v - r).max(floor).ln();
        let hi = (v + r).min(1.0).max(floor).ln();
        let mid = (lo + hi) / 2.0;
        let key = w[len - 1 - k..].to_vec();
        buckets
            .entry(key)
            .or_insert_with(Agg::new)
            .push(mid, (hi - lo) / 2.0);
    }
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    for agg in buckets.values() {
        let (l, h) = agg.spread();
        lo = lo.max(l);
        hi = hi.max(h);
    }
    let tail = 2.0 * family.var_bound(depth) / floor;
    let lo = (lo - tail).max(0.0);
    let hi = hi + tail;
    Ok(Measured {
        value: CertifiedValue::new((lo + hi) / 2.0, (hi - lo) / 2.0, depth),
        exhaustive,
    })
}

/// Smallest overlap mass of the successor rows of two pasts agreeing on the
/// last `k` sites.
///
/// The interval's lower end is the per-bucket symbolwise-minimum sum, which
/// bounds every pair from below; the upper end is the best pair found. An
/// exhaustive enumeration certifies the lower end over all truncated pasts.
pub fn overlap_k<F: PastFamily + ?Sized>(
    family: &F,
    site: i64,
    k: usize,
    depth: usize,
    budget: usize,
) -> Result<Measured> {
    if depth < k {
        return Err(Error::Config(format!(
            "depth {depth} shorter than agreement length {k}"
        )));
    }
    let base = family.alphabet().len();
    let (pasts, exhaustive) = candidate_words(family.grammar(), base, depth, budget, SAMPLE_SEED);
    // per suffix bucket: rows of (value, radius) per past, plus symbolwise minima
    struct Bucket {
        rows: Vec<Vec<(f64, f64)>>,
        floor_lo: Vec<f64>,
    }
    let mut buckets: BTreeMap<Vec<Sym>, Bucket> = BTreeMap::new();
    for p in &pasts {
        let past = Word::new(site - depth as i64, p.clone());
        let mut row = Vec::with_capacity(base);
        for a in 0..base {
            row.push(family.eval(site, &past, a as Sym)?);
        }
        let key = p[depth - k..].to_vec();
        let b = buckets.entry(key).or_insert_with(|| Bucket {
            rows: Vec::new(),
            floor_lo: vec![f64::INFINITY; base],
        });
        for a in 0..base {
            b.floor_lo[a] = b.floor_lo[a].min((row[a].0 - row[a].1).max(0.0));
        }
        b.rows.push(row);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::INFINITY;
    let mut pair_budget = budget.max(16);
    for b in buckets.values() {
        lo = lo.min(b.floor_lo.iter().sum::<f64>());
        for (i, ri) in b.rows.iter().enumerate() {
            for rj in b.rows.iter().skip(i + 1) {
                if pair_budget == 0 {
                    break;
                }
                pair_budget -= 1;
                let pair_hi: f64 = (0..base)
                    .map(|a| (ri[a].0 + ri[a].1).min(rj[a].0 + rj[a].1).max(0.0))
                    .sum();
                hi = hi.min(pair_hi);
            }
        }
        if b.rows.len() == 1 {
            // a single truncated class still pairs with itself
            let self_hi: f64 = (0..base).map(|a| b.rows[0][a].0 + b.rows[0][a].1).sum();
            hi = hi.min(self_hi);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Config("no admissible past of the requested depth".into()));
    }
    let tail = family.alphabet().len() as f64 * family.var_bound(depth);
    let lo = (lo - tail).max(0.0);
    let hi = hi + tail;
    Ok(Measured {
        value: CertifiedValue::new((lo + hi) / 2.0, (hi - lo) / 2.0, depth),
        exhaustive,
    })
}

/// Shape of a family's declared per-depth oscillation bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProfileForm {
    /// No dependence beyond `memory` sites.
    Exact { memory: usize },
    /// `var_k <= coeff / rate^k` with `rate > 1`.
    Geometric { coeff: f64, rate: f64 },
    /// Tabulated bounds with no recognized closed form.
    Table,
}

/// One measured oscillation entry of a profile.
#[derive(Clone, Copy, Debug)]
pub struct RateSample {
    /// Agreement length.
    pub k: usize,
    /// Measured oscillation with its radius.
    pub value: CertifiedValue,
    /// False when the enumeration was sampled.
    pub exhaustive: bool,
}

/// Measured oscillation sequence with its certified tail.
#[derive(Clone, Debug)]
pub struct RateProfile {
    /// Measured `var_k` for `k = 0..=depth`, reported as-is.
    pub samples: Vec<RateSample>,
    /// Declared decay shape backing the tail bound.
    pub form: ProfileForm,
    /// Certified bound on the summed oscillations beyond the last sample.
    pub tail: f64,
}

impl RateProfile {
    /// Certified upper bound for `var_k`: the declared bound, improved by
    /// the measurement when that one was exhaustive.
    pub fn upper(&self, k: usize, family_bound: f64) -> f64 {
        match self.samples.get(k) {
            Some(s) if s.exhaustive => family_bound.min(s.value.hi()).max(0.0),
            _ => family_bound,
        }
    }
}

/// Recognizes the declared decay shape of a family.
pub fn profile_form<F: PastFamily + ?Sized>(family: &F) -> ProfileForm {
    if let Some(m) = family.memory() {
        return ProfileForm::Exact { memory: m };
    }
    // skip depths clipped at 1.0, then test for a constant ratio
    let k0 = (0..8).find(|&k| {
        let v = family.var_bound(k);
        v > 0.0 && v < 1.0
    });
    if let Some(k0) = k0 {
        let v0 = family.var_bound(k0);
        let q = family.var_bound(k0 + 1) / v0;
        if q > 0.0 && q < 1.0 {
            let constant = (k0..k0 + 12).all(|k| {
                let a = family.var_bound(k);
                let b = family.var_bound(k + 1);
                a > 0.0 && (b / a - q).abs() <= 1e-9
            });
            if constant {
                return ProfileForm::Geometric {
                    coeff: v0 / q.powi(k0 as i32),
                    rate: 1.0 / q,
                };
            }
        }
    }
    ProfileForm::Table
}

/// Measures `var_k` for `k = 0..=depth` at one site and attaches the
/// declared tail bound beyond `depth`.
pub fn rate_profile<F: PastFamily + ?Sized>(
    family: &F,
    site: i64,
    depth: usize,
    budget: usize,
) -> Result<RateProfile> {
    let mut samples = Vec::with_capacity(depth + 1);
    for k in 0..=depth {
        let m = var_k(family, site, k, depth, budget)?;
        samples.push(RateSample {
            k,
            value: m.value,
            exhaustive: m.exhaustive,
        });
    }
    Ok(RateProfile {
        samples,
        form: profile_form(family),
        tail: family.var_tail(depth + 1),
    })
}

/// Interdependence matrix: worst-case variation distance of the single-site
/// projected kernels under a flip at one other site.
///
/// Entries cover `window x window`; the diagonal is excluded (stored as an
/// exact zero placeholder and skipped by the row sums). `row_tails[i]`
/// bounds the summed entries at sites outside the window for that row.
#[derive(Clone, Debug)]
pub struct DobrushinMatrix {
    /// Probed site window.
    pub window: Interval,
    /// `entries[i][j]` for row site `window.lo() + i`, flip site
    /// `window.lo() + j`.
    pub entries: Vec<Vec<CertifiedValue>>,
    /// Certified bound on the row sum outside the window.
    pub row_tails: Vec<f64>,
    /// False when some entry came from a sampled enumeration.
    pub exhaustive: bool,
}

impl DobrushinMatrix {
    /// Row site for an entry index.
    pub fn site(&self, idx: usize) -> i64 {
        self.window.lo() + idx as i64
    }

    /// Certified upper bound on the full row sum, diagonal excluded.
    pub fn row_sum_hi(&self, idx: usize) -> f64 {
        let row = &self.entries[idx];
        let inside: f64 = row
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != idx)
            .map(|(_, e)| e.hi().max(0.0))
            .sum();
        inside + self.row_tails[idx]
    }

    /// Certified lower bound on the full row sum, diagonal excluded.
    pub fn row_sum_lo(&self, idx: usize) -> f64 {
        self.entries[idx]
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != idx)
            .map(|(_, e)| e.lo().max(0.0))
            .sum()
    }

    /// Largest certified row-sum upper bound over the window.
    pub fn max_row_sum_hi(&self) -> f64 {
        (0..self.entries.len())
            .map(|i| self.row_sum_hi(i))
            .fold(0.0, f64::max)
    }
}

/// Interdependence matrix of a past-conditioned family over `window`.
///
/// Rows read only their past, so entries with flip site at or after the row
/// site are exactly zero. Pasts are truncated at `depth` sites (extended
/// per row when the window demands it) and the radii carry the truncation.
pub fn dobrushin_matrix_lis<F: PastFamily + ?Sized>(
    family: &F,
    window: Interval,
    depth: usize,
    budget: usize,
) -> Result<DobrushinMatrix> {
    let base = family.alphabet().len();
    let n = window.len();
    let mut entries = vec![vec![CertifiedValue::exact(0.0); n]; n];
    let mut row_tails = Vec::with_capacity(n);
    let mut exhaustive = true;
    for (ri, i) in window.sites().enumerate() {
        let row_depth = depth.max((i - window.lo()) as usize);
        let start = i - row_depth as i64;
        let (pasts, exh) =
            candidate_words(family.grammar(), base, row_depth, budget, SAMPLE_SEED ^ ri as u64);
        exhaustive &= exh;
        // per-pair truncation slack: every row entry can move this much
        // when the unseen past varies
        let slack = base as f64 * family.var_bound(row_depth);
        for (ci, j) in window.sites().enumerate() {
            if j >= i {
                continue;
            }
            let pos = (j - start) as usize;
            let mut lo = 0.0f64;
            let mut hi = 0.0f64;
            let mut seen = false;
            for p in &pasts {
                for a in 0..base as Sym {
                    if p[pos] != a {
                        continue;
                    }
                    for b in (a + 1)..base as Sym {
                        let mut q = p.clone();
                        q[pos] = b;
                        if !family.grammar().is_admissible(&q) {
                            continue;
                        }
                        let pa = Word::new(start, p.clone());
                        let pb = Word::new(start, q);
                        let mut tv_lo = 0.0f64;
                        let mut tv_hi = 0.0f64;
                        for t in 0..base as Sym {
                            let (va, ra) = family.eval(i, &pa, t)?;
                            let (vb, rb) = family.eval(i, &pb, t)?;
                            let d = (va - vb).abs();
                            tv_lo += (d - ra - rb).max(0.0);
                            tv_hi += d + ra + rb;
                        }
                        lo = lo.max(tv_lo / 2.0);
                        hi = hi.max(tv_hi / 2.0);
                        seen = true;
                    }
                }
            }
            if !seen {
                continue; // no admissible flip pair: the coefficient is void
            }
            let lo = (lo - slack).max(0.0);
            let hi = (hi + slack).min(1.0);
            entries[ri][ci] = CertifiedValue::new((lo + hi) / 2.0, (hi - lo) / 2.0, row_depth);
        }
        // flips farther left than the window: a flip at distance d leaves
        // an agreement block of d - 1 past sites plus the evaluated symbol
        let dist = (i - window.lo() + 1) as usize;
        let tail: f64 = (base as f64 / 2.0) * family.var_tail(dist.saturating_sub(1));
        row_tails.push(tail);
    }
    Ok(DobrushinMatrix {
        window,
        entries,
        row_tails,
        exhaustive,
    })
}

/// Interdependence matrix of a two-sided single-site family over `window`.
///
/// Site kernels have finite reach, so every coefficient is an exact
/// enumeration over admissible contexts; flips beyond the reach contribute
/// exactly zero. Coefficients at sites inside the reach but outside the
/// window are folded into the row tails.
pub fn dobrushin_matrix_spec(
    spec: &SpecFamily,
    window: Interval,
    budget: usize,
) -> Result<DobrushinMatrix> {
    let base = spec.alphabet().len();
    let (rl, rr) = spec.reach();
    let n = window.len();
    let mut entries = vec![vec![CertifiedValue::exact(0.0); n]; n];
    let mut row_tails = vec![0.0f64; n];
    let mut exhaustive = true;
    for (ri, i) in window.sites().enumerate() {
        let ctx = Interval::new(i - rl as i64, i + rr as i64)?;
        let (words, exh) =
            candidate_words(spec.grammar(), base, ctx.len(), budget, SAMPLE_SEED ^ ri as u64);
        exhaustive &= exh;
        for j in ctx.sites() {
            if j == i {
                continue;
            }
            let pos = (j - ctx.lo()) as usize;
            let mut best = 0.0f64;
            for w in &words {
                let wa = Word::new(ctx.lo(), w.clone());
                let row_a = match site_row(spec, &wa, i) {
                    Some(r) => r,
                    None => continue,
                };
                for b in 0..base as Sym {
                    if b <= w[pos] {
                        continue;
                    }
                    let wb = wa.patched(SitePatch { site: j, sym: b });
                    if !spec.grammar().word_admissible(&wb) {
                        continue;
                    }
                    let row_b = match site_row(spec, &wb, i) {
                        Some(r) => r,
                        None => continue,
                    };
                    let tv: f64 = (0..base).map(|t| (row_a[t] - row_b[t]).abs()).sum::<f64>() / 2.0;
                    best = best.max(tv);
                }
            }
            if let Some(ci) = (j >= window.lo() && j <= window.hi())
                .then(|| (j - window.lo()) as usize)
            {
                entries[ri][ci] = CertifiedValue::new(best, 0.0, ctx.len());
            } else {
                row_tails[ri] += best;
            }
        }
    }
    Ok(DobrushinMatrix {
        window,
        entries,
        row_tails,
        exhaustive,
    })
}

/// Normalized single-site conditional distribution at `site`, or `None`
/// when the context admits no symbol there.
fn site_row(spec: &SpecFamily, window: &Word, site: i64) -> Option<Vec<f64>> {
    let mask = spec.mask_at(window, site);
    if !mask.iter().any(|&m| m) {
        return None;
    }
    let rho = spec.rho_row(window, site).ok()?;
    let w = spec.weights();
    let row: Vec<f64> = rho.iter().zip(w).map(|(r, l)| r * l).collect();
    let z: f64 = row.iter().sum();
    if z <= 0.0 {
        return None;
    }
    Some(row.into_iter().map(|p| p / z).collect())
}

/// Minimum and summed flip oscillation of one kernel value over a set of
/// substitution sites.
#[derive(Clone, Debug)]
pub struct OscillationPair {
    /// Evaluated site.
    pub k: i64,
    /// Substitution sites.
    pub sites: Vec<i64>,
    /// Smallest kernel value over admissible substitutions.
    pub c: CertifiedValue,
    /// Summed single-flip oscillations over the sites.
    pub delta: CertifiedValue,
}

impl OscillationPair {
    /// Certified ratio `delta / c`.
    pub fn ratio(&self) -> Result<CertifiedValue> {
        self.delta.div(&self.c).ok_or(Error::PositivityViolated {
            context: format!("substitution floor at site {}", self.k),
            value: self.c.lo(),
        })
    }
}

/// Substitution floor and flip oscillation of the past-conditioned kernel
/// at `k` over the sites of `lambda`, in the context `window`.
///
/// The window must cover every substitution site and end at or beyond `k`;
/// symbols right of `k` are ignored. Substituted words that leave the
/// grammar are excluded, matching conditioning on the admissible set.
pub fn oscillation_lis<F: PastFamily + ?Sized>(
    family: &F,
    k: i64,
    lambda: &[i64],
    window: &Word,
) -> Result<OscillationPair> {
    if lambda.is_empty() {
        return Err(Error::Config("empty substitution set".into()));
    }
    let lo = *lambda.iter().min().unwrap();
    let hi = *lambda.iter().max().unwrap();
    if hi > k {
        return Err(Error::Config(format!(
            "substitution site {hi} beyond evaluated site {k}"
        )));
    }
    if window.start() > lo || window.end() < k {
        return Err(Error::WindowTooShort {
            site: k,
            needed: (k - lo + 1) as usize,
            available: window.len(),
        });
    }
    let base = family.alphabet().len();
    let w0 = window.slice(Interval::new(window.start(), k)?)?;
    let (v0, r0) = eval_at(family, k, &w0)?;

    // substitution floor over all admissible assignments on lambda
    let count = base.pow(lambda.len() as u32);
    let mut c_lo = f64::INFINITY;
    let mut c_hi = f64::INFINITY;
    for idx in 0..count {
        let assign = unpack(idx, base, lambda.len());
        let mut w = w0.clone();
        for (t, &s) in lambda.iter().enumerate() {
            w.set(s, assign[t]);
        }
        if !family.grammar().word_admissible(&w) {
            continue;
        }
        let (v, r) = eval_at(family, k, &w)?;
        c_lo = c_lo.min(v - r);
        c_hi = c_hi.min(v + r);
    }
    if !c_hi.is_finite() {
        return Err(Error::Config(format!(
            "no admissible substitution on {lambda:?} in the given window"
        )));
    }
    if c_hi <= 0.0 {
        return Err(Error::PositivityViolated {
            context: format!("substitution floor at site {k}"),
            value: c_hi,
        });
    }

    // summed single-flip oscillations from the base word
    let mut d_lo = 0.0f64;
    let mut d_hi = 0.0f64;
    for &j in lambda {
        let cur = w0.get(j).unwrap();
        let mut site_lo = 0.0f64;
        let mut site_hi = 0.0f64;
        for a in 0..base as Sym {
            if a == cur {
                continue;
            }
            let w = w0.patched(SitePatch { site: j, sym: a });
            if !family.grammar().word_admissible(&w) {
                continue;
            }
            let (v, r) = eval_at(family, k, &w)?;
            let d = (v - v0).abs();
            site_lo = site_lo.max((d - r - r0).max(0.0));
            site_hi = site_hi.max(d + r + r0);
        }
        d_lo += site_lo;
        d_hi += site_hi;
    }
    Ok(OscillationPair {
        k,
        sites: lambda.to_vec(),
        c: CertifiedValue::new((c_lo + c_hi) / 2.0, (c_hi - c_lo) / 2.0, window.len()),
        delta: CertifiedValue::new((d_lo + d_hi) / 2.0, (d_hi - d_lo) / 2.0, window.len()),
    })
}

/// Substitution floor and flip oscillation of the single-site conditional
/// probability at `k` under flips at `j`, in the context `window`.
///
/// Two-sided kernels give exact values; the window must cover the reach
/// around both sites.
pub fn oscillation_spec(
    spec: &SpecFamily,
    k: i64,
    j: i64,
    window: &Word,
) -> Result<OscillationPair> {
    let base = spec.alphabet().len();
    let v0 = spec.gamma_volume(&[k], window)?;
    let mut c = if j == k { f64::INFINITY } else { v0 };
    let mut delta = 0.0f64;
    let cur = window.get(j).ok_or(Error::WindowTooShort {
        site: j,
        needed: 1,
        available: window.len(),
    })?;
    for a in 0..base as Sym {
        let w = window.patched(SitePatch { site: j, sym: a });
        if !spec.grammar().word_admissible(&w) {
            continue;
        }
        let v = spec.gamma_volume(&[k], &w)?;
        c = c.min(v);
        if a != cur {
            delta = delta.max((v - v0).abs());
        }
    }
    if !c.is_finite() || c <= 0.0 {
        return Err(Error::PositivityViolated {
            context: format!("flip floor of the site-{k} conditional under site {j}"),
            value: if c.is_finite() { c } else { 0.0 },
        });
    }
    Ok(OscillationPair {
        k,
        sites: vec![j],
        c: CertifiedValue::new(c, 0.0, window.len()),
        delta: CertifiedValue::new(delta, 0.0, window.len()),
    })
}

/// Outcome of one uniqueness criterion.
#[derive(Clone, Debug)]
pub enum Verdict {
    /// Certified, with a criterion-specific margin (larger is stronger).
    Holds { margin: f64 },
    /// Certified violation with a witness.
    Fails { witness: String },
    /// Neither certified: truncated evidence only.
    Inconclusive { detail: String },
    /// Structural precondition not met.
    Inapplicable { reason: String },
}

impl Verdict {
    /// True for a certified positive verdict.
    pub fn holds(&self) -> bool {
        matches!(self, Verdict::Holds { .. })
    }

    /// Short tag for reports.
    pub fn tag(&self) -> &'static str {
        match self {
            Verdict::Holds { .. } => "holds",
            Verdict::Fails { .. } => "fails",
            Verdict::Inconclusive { .. } => "inconclusive",
            Verdict::Inapplicable { .. } => "inapplicable",
        }
    }
}

/// One evaluated criterion with its evidence trajectory.
#[derive(Clone, Debug)]
pub struct CriterionReport {
    /// Criterion name.
    pub name: String,
    /// Certified outcome.
    pub verdict: Verdict,
    /// Partial sums / products / terms backing the verdict.
    pub trajectory: Vec<f64>,
    /// Conventions and structural facts used.
    pub notes: Vec<String>,
}

/// Knobs for criterion evaluation.
#[derive(Clone, Copy, Debug)]
pub struct CriterionOptions {
    /// Largest agreement depth measured.
    pub depth: usize,
    /// Enumeration budget per measurement.
    pub budget: usize,
    /// Longest cylinder checked by boundary uniformity.
    pub cylinder_cap: usize,
    /// Largest conditioning volume for boundary uniformity.
    pub volume_cap: usize,
    /// Extra sites tried left of a cylinder (and around a volume).
    pub pad: usize,
}

impl Default for CriterionOptions {
    fn default() -> Self {
        CriterionOptions {
            depth: 12,
            budget: 1 << 16,
            cylinder_cap: 4,
            volume_cap: 12,
            pad: 4,
        }
    }
}

/// Per-cylinder boundary-uniformity constant.
#[derive(Clone, Debug)]
pub struct CylinderConstant {
    /// Cylinder word, anchored at site 0.
    pub word: Vec<Sym>,
    /// Certified lower bound on the best uniformity ratio.
    pub constant: f64,
    /// Volume padding that achieved it.
    pub pad_used: usize,
}

/// Boundary-uniformity search result.
#[derive(Clone, Debug)]
pub struct BoundaryUniformity {
    /// Constants per probed cylinder.
    pub per_cylinder: Vec<CylinderConstant>,
    /// Certified lower bound over all probed cylinders.
    pub constant: f64,
}

/// Uniformity constant of a past-conditioned family: for each cylinder the
/// best (over volume extensions to the left) worst-case ratio of the
/// cylinder probability under two boundary pasts.
pub fn boundary_uniformity_lis<F: PastFamily + ?Sized>(
    family: &F,
    opts: &CriterionOptions,
) -> Result<BoundaryUniformity> {
    let base = family.alphabet().len();
    let g = family.grammar();
    let past_depth = family.memory().unwrap_or(4).max(g.order()).max(1);
    let mut per_cylinder = Vec::new();
    let mut overall = f64::INFINITY;
    for len in 1..=opts.cylinder_cap {
        let (cyls, _) = candidate_words(g, base, len, opts.budget, SAMPLE_SEED);
        for x in cyls {
            let mut best = 0.0f64;
            let mut best_pad = 0usize;
            for pad in 0..=opts.pad {
                let vol_lo = -(pad as i64);
                let (fillers, _) = candidate_words(g, base, pad, opts.budget, SAMPLE_SEED);
                let (pasts, _) =
                    candidate_words(g, base, past_depth, opts.budget, SAMPLE_SEED ^ 1);
                let mut min_lo = f64::INFINITY;
                let mut max_hi = 0.0f64;
                for p in &pasts {
                    let past = Word::new(vol_lo - past_depth as i64, p.clone());
                    let mut total = CertifiedValue::exact(0.0);
                    for f in &fillers {
                        let mut syms = f.clone();
                        syms.extend_from_slice(&x);
                        let word = Word::new(vol_lo, syms);
                        let term = family.interval_product(&word, &past)?;
                        total = total.add(&term);
                    }
                    if total.hi() <= 0.0 {
                        continue; // boundary past incompatible with the cylinder
                    }
                    min_lo = min_lo.min(total.lo().max(0.0));
                    max_hi = max_hi.max(total.hi());
                }
                if max_hi > 0.0 && min_lo.is_finite() {
                    let ratio = min_lo / max_hi;
                    if ratio > best {
                        best = ratio;
                        best_pad = pad;
                    }
                }
            }
            overall = overall.min(best);
            per_cylinder.push(CylinderConstant {
                word: x,
                constant: best,
                pad_used: best_pad,
            });
        }
    }
    if per_cylinder.is_empty() {
        return Err(Error::Config("no admissible cylinder to probe".into()));
    }
    Ok(BoundaryUniformity {
        per_cylinder,
        constant: overall,
    })
}

/// Uniformity constant of a two-sided family: for each cylinder the best
/// (over symmetric volume growth) worst-case ratio of the cylinder's
/// conditional probability under two boundary conditions.
pub fn boundary_uniformity_spec<T: TwoSidedFamily + ?Sized>(
    spec: &T,
    opts: &CriterionOptions,
) -> Result<BoundaryUniformity> {
    let base = spec.alphabet().len();
    let g = spec.grammar();
    let (rl, rr) = spec.reach();
    let mut per_cylinder = Vec::new();
    let mut overall = f64::INFINITY;
    for len in 1..=opts.cylinder_cap {
        let (cyls, _) = candidate_words(g, base, len, opts.budget, SAMPLE_SEED);
        for x in cyls {
            let mut best = 0.0f64;
            let mut best_pad = 0usize;
            for pad in 0..=opts.pad {
                if len + 2 * pad > opts.volume_cap {
                    break;
                }
                let span = Interval::new(-(pad as i64), (len + pad) as i64 - 1)?;
                let (lefts, _) = candidate_words(g, base, rl, opts.budget, SAMPLE_SEED ^ 2);
                let (rights, _) = candidate_words(g, base, rr, opts.budget, SAMPLE_SEED ^ 3);
                let mut min_lo = f64::INFINITY;
                let mut max_hi = 0.0f64;
                let mut boundary_budget = opts.budget.max(16);
                'outer: for l in &lefts {
                    for r in &rights {
                        if boundary_budget == 0 {
                            break 'outer;
                        }
                        boundary_budget -= 1;
                        let mut syms = l.clone();
                        syms.extend(std::iter::repeat(0).take(span.len()));
                        syms.extend_from_slice(r);
                        let window = Word::new(span.lo() - rl as i64, syms);
                        let dist = match spec.interval_distribution(span, &window, opts.budget) {
                            Ok(d) => d,
                            Err(Error::ZeroDenominator(_)) | Err(Error::InadmissibleWord { .. }) => {
                                continue;
                            }
                            Err(e) => return Err(e),
                        };
                        let (rows, rad) = dist;
                        let mut mass = 0.0f64;
                        for (row, p) in &rows {
                            if row[pad..pad + len] == x[..] {
                                mass += p;
                            }
                        }
                        let matched = rows.len() as f64;
                        min_lo = min_lo.min((mass - rad * matched).max(0.0));
                        max_hi = max_hi.max(mass + rad * matched);
                    }
                }
                if max_hi > 0.0 && min_lo.is_finite() {
                    let ratio = min_lo / max_hi;
                    if ratio > best {
                        best = ratio;
                        best_pad = pad;
                    }
                }
            }
            overall = overall.min(best);
            per_cylinder.push(CylinderConstant {
                word: x,
                constant: best,
                pad_used: best_pad,
            });
        }
    }
    if per_cylinder.is_empty() {
        return Err(Error::Config("no admissible cylinder to probe".into()));
    }
    Ok(BoundaryUniformity {
        per_cylinder,
        constant: overall,
    })
}

/// Evaluates every past-conditioned uniqueness criterion.
///
/// Divergent-series criteria certify through the decay profile: when the
/// certified upper bounds keep every series term above a positive constant
/// the series diverges rigorously; otherwise the verdict is inconclusive
/// with the measured trajectory. Margins are, per criterion: the certified
/// lower bound on the limiting terms (series criteria), one minus the row
/// sum (interdependence), the uniformity constant, or the exponential of
/// the negated certified square sum.
pub fn criterion_suite_lis<F: PastFamily + ?Sized>(
    family: &F,
    opts: &CriterionOptions,
) -> Result<Vec<CriterionReport>> {
    let base = family.alphabet().len() as f64;
    let floor = family.floor();
    let stationary = family.is_stationary();
    let mut reports = Vec::new();
    let station_note = "stationarity is a structural tag, not inferred from data".to_string();

    // upper bounds per depth, profile-certified and measurement-improved
    let mut var_hi = Vec::with_capacity(opts.depth + 1);
    let mut log_hi = Vec::with_capacity(opts.depth + 1);
    let mut overlap_lo = Vec::with_capacity(opts.depth + 1);
    if stationary {
        for k in 0..=opts.depth {
            let v = var_k(family, 0, k, opts.depth, opts.budget)?;
            let bound = family.var_bound(k);
            var_hi.push(if v.exhaustive {
                bound.min(v.value.hi()).max(0.0)
            } else {
                bound
            });
            let l = var_log_k(family, 0, k, opts.depth, opts.budget)?;
            log_hi.push(if l.exhaustive {
                (bound / floor).min(l.value.hi()).max(0.0)
            } else {
                bound / floor
            });
            let o = overlap_k(family, 0, k, opts.depth, opts.budget)?;
            let profile_lo = 1.0 - (base / 2.0) * var_hi[k];
            overlap_lo.push(if o.exhaustive {
                profile_lo.max(o.value.lo()).max(0.0)
            } else {
                profile_lo.max(0.0)
            });
        }
    }

    if stationary {
        // terms prod_{k=1..n} (1 - |A|/2 var_k), certified from below
        let mut traj = Vec::new();
        let mut product = 1.0f64;
        let mut bad = None;
        for k in 1..=opts.depth {
            let factor = 1.0 - (base / 2.0) * var_hi[k];
            if factor < 0.0 {
                bad = Some(k);
            }
            product *= factor;
            traj.push(product);
        }
        let unseen = 1.0 - (base / 2.0) * family.var_tail(opts.depth + 1);
        let limit = product * unseen.max(0.0);
        let verdict = if let Some(k) = bad {
            Verdict::Fails {
                witness: format!("term factor at depth {k} is certified negative"),
            }
        } else if limit > 0.0 {
            Verdict::Holds { margin: limit }
        } else {
            Verdict::Inconclusive {
                detail: "certified term floor reaches zero within the probed depth".into(),
            }
        };
        reports.push(CriterionReport {
            name: "harris".into(),
            verdict,
            trajectory: traj,
            notes: vec![
                station_note.clone(),
                format!("weak non-nullness from the kernel floor {floor:.3e}"),
            ],
        });
    } else {
        reports.push(inapplicable("harris", &station_note));
    }

    if stationary {
        // terms exp(-sum_{k=1..n} var_k(log)), certified from below
        let mut traj = Vec::new();
        let mut s = 0.0f64;
        for k in 1..=opts.depth {
            s += log_hi[k];
            traj.push((-s).exp());
        }
        let tail = family.var_tail(opts.depth + 1) / floor;
        let verdict = if tail.is_finite() {
            Verdict::Holds {
                margin: (-(s + tail)).exp(),
            }
        } else {
            Verdict::Inconclusive {
                detail: "log-oscillation tail is not summable".into(),
            }
        };
        reports.push(CriterionReport {
            name: "berbee".into(),
            verdict,
            trajectory: traj,
            notes: vec![station_note.clone()],
        });
    } else {
        reports.push(inapplicable("berbee", &station_note));
    }

    if stationary {
        // terms prod_{k=1..n} overlap_k, certified from below
        let mut traj = Vec::new();
        let mut product = 1.0f64;
        let mut zero = None;
        for k in 1..=opts.depth {
            if overlap_lo[k] <= 0.0 {
                zero = Some(k);
            }
            product *= overlap_lo[k].max(0.0);
            traj.push(product);
        }
        let unseen = 1.0 - (base / 2.0) * family.var_tail(opts.depth + 1);
        let limit = product * unseen.max(0.0);
        let verdict = if limit > 0.0 {
            Verdict::Holds { margin: limit }
        } else if zero.is_some() {
            Verdict::Inconclusive {
                detail: format!(
                    "no certified positive overlap at depth {}",
                    zero.unwrap()
                ),
            }
        } else {
            Verdict::Inconclusive {
                detail: "overlap tail correction reaches zero".into(),
            }
        };
        reports.push(CriterionReport {
            name: "stenflo".into(),
            verdict,
            trajectory: traj,
            notes: vec![
                station_note.clone(),
                "overlaps measured on truncated pasts with profile tails".into(),
            ],
        });
    } else {
        reports.push(inapplicable("stenflo", &station_note));
    }

    if stationary {
        // sum_{k>=0} var_k(log)^2 with a certified square tail
        let mut traj = Vec::new();
        let mut s = 0.0f64;
        for k in 0..=opts.depth {
            s += log_hi[k] * log_hi[k];
            traj.push(s);
        }
        let tail = family.var_sq_tail(opts.depth + 1) / (floor * floor);
        let verdict = if tail.is_finite() {
            Verdict::Holds {
                margin: (-(s + tail)).exp(),
            }
        } else {
            Verdict::Inconclusive {
                detail: "squared log-oscillation tail is not summable".into(),
            }
        };
        reports.push(CriterionReport {
            name: "johansson-oberg".into(),
            verdict,
            trajectory: traj,
            notes: vec![
                station_note.clone(),
                "square sums on truncated pasts with profile tails".into(),
            ],
        });
    } else {
        reports.push(inapplicable("johansson-oberg", &station_note));
    }

    // one-sided interdependence row sum at the window's right edge
    {
        let window = Interval::new(-(opts.depth as i64), 0)?;
        let matrix = dobrushin_matrix_lis(family, window, opts.depth, opts.budget)?;
        let idx = matrix.entries.len() - 1;
        let hi = matrix.row_sum_hi(idx);
        let lo = matrix.row_sum_lo(idx);
        let verdict = if lo >= 1.0 {
            Verdict::Fails {
                witness: format!("row sum at site 0 certified at least {lo:.6}"),
            }
        } else if hi < 1.0 {
            if stationary {
                Verdict::Holds { margin: 1.0 - hi }
            } else {
                Verdict::Inconclusive {
                    detail: format!("probed rows only (best bound {hi:.6}); sites vary"),
                }
            }
        } else {
            Verdict::Inconclusive {
                detail: format!("row sum bound {hi:.6} not below one"),
            }
        };
        reports.push(CriterionReport {
            name: "dobrushin-one-sided".into(),
            verdict,
            trajectory: (0..matrix.entries.len()).map(|i| matrix.row_sum_hi(i)).collect(),
            notes: vec![
                "variation distance is half the L1 gap over symbols".into(),
                "continuity from the declared decay profile".into(),
            ],
        });
    }

    // boundary uniformity over short cylinders with leftward volume growth
    {
        let bu = boundary_uniformity_lis(family, opts)?;
        let verdict = if bu.constant > 0.0 {
            Verdict::Holds { margin: bu.constant }
        } else {
            Verdict::Inconclusive {
                detail: "no positive uniformity ratio within the probed volumes".into(),
            }
        };
        reports.push(CriterionReport {
            name: "boundary-uniformity-one-sided".into(),
            verdict,
            trajectory: bu.per_cylinder.iter().map(|c| c.constant).collect(),
            notes: vec![format!(
                "cylinders up to length {}, volumes padded up to {}",
                opts.cylinder_cap, opts.pad
            )],
        });
    }

    Ok(reports)
}

fn inapplicable(name: &str, note: &str) -> CriterionReport {
    CriterionReport {
        name: name.into(),
        verdict: Verdict::Inapplicable {
            reason: "family is not stationary".into(),
        },
        trajectory: Vec::new(),
        notes: vec![note.to_string()],
    }
}

/// Evaluates the two-sided uniqueness criteria.
pub fn criterion_suite_spec(
    spec: &SpecFamily,
    opts: &CriterionOptions,
) -> Result<Vec<CriterionReport>> {
    let mut reports = Vec::new();
    let (rl, rr) = spec.reach();
    let half = rl.max(rr) as i64;
    {
        let window = Interval::new(-half, half)?;
        let matrix = dobrushin_matrix_spec(spec, window, opts.budget)?;
        let idx = (0 - window.lo()) as usize;
        let hi = matrix.row_sum_hi(idx);
        let lo = matrix.row_sum_lo(idx);
        let verdict = if lo >= 1.0 {
            Verdict::Fails {
                witness: format!("row sum at site 0 certified at least {lo:.6}"),
            }
        } else if hi < 1.0 {
            if spec.is_stationary() {
                Verdict::Holds { margin: 1.0 - hi }
            } else {
                Verdict::Inconclusive {
                    detail: format!("probed rows only (best bound {hi:.6}); sites vary"),
                }
            }
        } else {
            Verdict::Inconclusive {
                detail: format!("row sum bound {hi:.6} not below one"),
            }
        };
        reports.push(CriterionReport {
            name: "dobrushin".into(),
            verdict,
            trajectory: (0..matrix.entries.len()).map(|i| matrix.row_sum_hi(i)).collect(),
            notes: vec![
                "variation distance is half the L1 gap over symbols".into(),
                "finite kernel reach makes coefficients beyond it exactly zero".into(),
            ],
        });
    }
    {
        let bu = boundary_uniformity_spec(spec, opts)?;
        let verdict = if bu.constant > 0.0 {
            Verdict::Holds { margin: bu.constant }
        } else {
            Verdict::Inconclusive {
                detail: "no positive uniformity ratio within the probed volumes".into(),
            }
        };
        reports.push(CriterionReport {
            name: "boundary-uniformity".into(),
            verdict,
            trajectory: bu.per_cylinder.iter().map(|c| c.constant).collect(),
            notes: vec![format!(
                "cylinders up to length {}, volumes up to {} sites",
                opts.cylinder_cap, opts.volume_cap
            )],
        });
    }
    Ok(reports)
}

/// Summable-future certificate for a substitution set.
#[derive(Clone, Debug)]
pub struct FutureCertificate {
    /// Substitution sites.
    pub sites: Vec<i64>,
    /// Certified per-depth ratio caps, from the set's largest site on.
    pub eps: Vec<(i64, f64)>,
    /// Certified bound on the remaining sum.
    pub tail: f64,
    /// Certified total when the tail is finite.
    pub total: Option<f64>,
    /// Outcome.
    pub verdict: Verdict,
    /// False when the per-depth suprema were sampled.
    pub exhaustive: bool,
}

/// Certifies that the summed worst-case oscillation ratios over a
/// substitution set converge.
///
/// For each evaluated site the supremum of `delta / c` over probed context
/// windows is capped by the declared profile; the certificate totals the
/// caps and the profile tail. A non-summable tail yields an inconclusive
/// verdict with the partial sums.
pub fn gf_certificate<F: PastFamily + ?Sized>(
    family: &F,
    lambda: &[i64],
    horizon: usize,
    window_depth: usize,
    budget: usize,
) -> Result<FutureCertificate> {
    if lambda.is_empty() {
        return Err(Error::Config("empty substitution set".into()));
    }
    let floor = family.floor();
    let m = *lambda.iter().max().unwrap();
    let lo = *lambda.iter().min().unwrap();
    let base = family.alphabet().len();
    let mut eps = Vec::new();
    let mut exhaustive = true;
    let mut total = 0.0f64;
    for step in 0..=horizon {
        let k = m + step as i64;
        let len = ((k - lo) as usize + window_depth + 1).max(window_depth + 1);
        let (words, exh) = candidate_words(family.grammar(), base, len, budget, SAMPLE_SEED ^ 7);
        exhaustive &= exh;
        let mut measured = 0.0f64;
        let mut any = false;
        for w in &words {
            let window = Word::new(k - len as i64 + 1, w.clone());
            let pair = match oscillation_lis(family, k, lambda, &window) {
                Ok(p) => p,
                Err(Error::Config(_)) => continue,
                Err(e) => return Err(e),
            };
            let r = match pair.ratio() {
                Ok(r) => r.hi(),
                Err(_) => f64::INFINITY,
            };
            measured = measured.max(r);
            any = true;
        }
        let profile: f64 = lambda
            .iter()
            .map(|&j| family.var_bound((k - 1 - j).max(0) as usize))
            .sum::<f64>()
            / floor;
        let cap = if any && exh { profile.min(measured) } else { profile };
        total += cap;
        eps.push((k, cap));
    }
    let tail = ratio_tail(family, lambda, m + horizon as i64);
    let (total, verdict) = if tail.is_finite() {
        let t = total + tail;
        (Some(t), Verdict::Holds { margin: t })
    } else {
        (
            None,
            Verdict::Inconclusive {
                detail: "profile ratio tail is not summable".into(),
            },
        )
    };
    Ok(FutureCertificate {
        sites: lambda.to_vec(),
        eps,
        tail,
        total,
        verdict,
        exhaustive,
    })
}

/// Exponential-future certificate at one site.
#[derive(Clone, Debug)]
pub struct ExponentialCertificate {
    /// Flip site.
    pub site: i64,
    /// Certified exponential base, when one exists.
    pub a: Option<f64>,
    /// Certified cap on `a^(k-j)` times the ratio at depth `k`.
    pub bound: Option<f64>,
    /// Measured ratio caps along the probed depths.
    pub probes: Vec<(i64, f64)>,
    /// Outcome.
    pub verdict: Verdict,
}

/// Certifies an exponential envelope on the flip-oscillation ratios of a
/// past-conditioned family at `j`.
///
/// Exact memory gives a trivially finite envelope; a geometric profile
/// certifies base `rate` in closed form; anything else is inconclusive.
pub fn egf_certificate_lis<F: PastFamily + ?Sized>(
    family: &F,
    j: i64,
    horizon: usize,
    window_depth: usize,
    budget: usize,
) -> Result<ExponentialCertificate> {
    let floor = family.floor();
    let base = family.alphabet().len();
    let mut probes = Vec::new();
    for step in 1..=horizon {
        let k = j + step as i64;
        let len = step + window_depth + 1;
        let (words, exh) = candidate_words(family.grammar(), base, len, budget, SAMPLE_SEED ^ 9);
        let mut measured = 0.0f64;
        let mut any = false;
        for w in &words {
            let window = Word::new(k - len as i64 + 1, w.clone());
            let pair = match oscillation_lis(family, k, &[j], &window) {
                Ok(p) => p,
                Err(Error::Config(_)) => continue,
                Err(e) => return Err(e),
            };
            match pair.ratio() {
                Ok(r) => measured = measured.max(r.hi()),
                Err(_) => measured = f64::INFINITY,
            }
            any = true;
        }
        let profile = family.var_bound((k - 1 - j).max(0) as usize) / floor;
        let cap = if any && exh { profile.min(measured) } else { profile };
        probes.push((k, cap));
    }
    let (a, bound, verdict) = match profile_form(family) {
        ProfileForm::Exact { memory } => {
            let a = 2.0f64;
            let b = probes
                .iter()
                .take(memory)
                .map(|&(k, c)| a.powi((k - j) as i32) * c)
                .fold(0.0, f64::max);
            (Some(a), Some(b), Verdict::Holds { margin: b })
        }
        ProfileForm::Geometric { coeff, rate } => {
            // a^(k-j) * coeff * rate^-(k-1-j) / floor = a * coeff / floor at a = rate
            let closed = rate * coeff / floor;
            let b = probes
                .iter()
                .map(|&(k, c)| rate.powi((k - j) as i32) * c)
                .fold(closed, f64::max);
            (Some(rate), Some(b), Verdict::Holds { margin: b })
        }
        ProfileForm::Table => (
            None,
            None,
            Verdict::Inconclusive {
                detail: "no certified exponential envelope for a tabulated profile".into(),
            },
        ),
    };
    Ok(ExponentialCertificate {
        site: j,
        a,
        bound,
        probes,
        verdict,
    })
}

/// Certifies an exponential envelope on the flip-oscillation ratios of a
/// two-sided family at `j`; finite reach makes deep ratios exactly zero.
pub fn egf_certificate_spec(
    spec: &SpecFamily,
    j: i64,
    budget: usize,
) -> Result<ExponentialCertificate> {
    let base = spec.alphabet().len();
    let (rl, rr) = spec.reach();
    let a = 2.0f64;
    let mut probes = Vec::new();
    let mut bound = 0.0f64;
    for step in 1..=(rl as i64) {
        let k = j + step;
        let ctx = Interval::new(j - rl as i64 - rr as i64, k + rl as i64 + rr as i64)?;
        let (words, _) = candidate_words(spec.grammar(), base, ctx.len(), budget, SAMPLE_SEED ^ 11);
        let mut worst = 0.0f64;
        for w in &words {
            let window = Word::new(ctx.lo(), w.clone());
            match oscillation_spec(spec, k, j, &window) {
                Ok(pair) => {
                    if let Ok(r) = pair.ratio() {
                        worst = worst.max(r.hi());
                    }
                }
                Err(Error::PositivityViolated { .. }) | Err(Error::ZeroDenominator(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        bound = bound.max(a.powi(step as i32) * worst);
        probes.push((k, worst));
    }
    Ok(ExponentialCertificate {
        site: j,
        a: Some(a),
        bound: Some(bound),
        probes,
        verdict: Verdict::Holds { margin: bound },
    })
}

/// `1 - prod (1 - r_i) / (1 + r_i)` over measured ratio intervals, with the
/// unmeasured factors bracketed through their summed caps.
///
/// Each unseen factor `(1-u)/(1+u)` is at least `1 - 2u`, so the unseen
/// product is at least `1 - 2 * tail`; an infinite tail collapses the
/// bracket to the trivial upper end.
pub fn flip_product_bound(ratios: &[CertifiedValue], tail: f64) -> CertifiedValue {
    let mut p_lo = 1.0f64;
    let mut p_hi = 1.0f64;
    for r in ratios {
        let f_lo = ((1.0 - r.hi()) / (1.0 + r.hi())).clamp(0.0, 1.0);
        let f_hi = ((1.0 - r.lo().max(0.0)) / (1.0 + r.lo().max(0.0))).clamp(0.0, 1.0);
        p_lo *= f_lo;
        p_hi *= f_hi;
    }
    let q_lo = if tail.is_finite() {
        (1.0 - 2.0 * tail).max(0.0)
    } else {
        0.0
    };
    let lo = (1.0 - p_hi).max(0.0);
    let hi = (1.0 - p_lo * q_lo).min(1.0);
    CertifiedValue::new((lo + hi) / 2.0, (hi - lo) / 2.0, ratios.len())
}

/// Constant `M` such that `1 - prod_{i>=k} (1-u_i)/(1+u_i) <= M * H(k-1)`
/// for `u_i <= m / a^i <= 1/2`, where `H(x) = integral_x^inf a^-t dt`.
///
/// Valid from `k >= log_a(2m)` on, where every `u_i` is at most one half.
pub fn geometric_product_gap(m: f64, a: f64) -> f64 {
    debug_assert!(a > 1.0 && m >= 0.0);
    2.0 * m * a.ln() / (a - 1.0)
}

/// Bound on the sensitivity of the induced two-sided kernel on `sites` to a
/// flip at `j` right of the set: twice the summed flip-oscillation ratios
/// of the site kernels from `j` on, closed with the profile tail.
pub fn future_flip_bound<F: PastFamily + ?Sized>(
    family: &F,
    sites: &[i64],
    j: i64,
    window: &Word,
) -> Result<CertifiedValue> {
    let m = *sites.iter().max().ok_or(Error::Config("empty site set".into()))?;
    if j <= m {
        return Err(Error::Config(format!(
            "flip site {j} must lie right of the set maximum {m}"
        )));
    }
    let n = window.end();
    let tail = ratio_tail(family, sites, n);
    if !tail.is_finite() {
        return Err(Error::TailNotSummable {
            target: 0.0,
            reached: f64::INFINITY,
            n_max: (n - j).max(0) as usize,
        });
    }
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    for i in j..=n {
        let pair = oscillation_lis(family, i, sites, window)?;
        let r = pair.ratio()?;
        lo += r.lo().max(0.0);
        hi += r.hi();
    }
    let lo = (2.0 * lo).min(1.0);
    let hi = (2.0 * (hi + tail)).min(1.0);
    Ok(CertifiedValue::new(
        (lo + hi) / 2.0,
        (hi - lo) / 2.0,
        (n - j + 1).max(0) as usize,
    ))
}

/// Bound on the sensitivity of the induced two-sided kernel on a volume
/// starting at `first_site` to a flip at `j` left of it: one minus the
/// product of `(1-r)/(1+r)` over the site kernels from `first_site` on.
pub fn past_flip_bound<F: PastFamily + ?Sized>(
    family: &F,
    first_site: i64,
    j: i64,
    window: &Word,
) -> Result<CertifiedValue> {
    if j >= first_site {
        return Err(Error::Config(format!(
            "flip site {j} must lie left of the volume start {first_site}"
        )));
    }
    let n = window.end();
    let tail = family.var_tail((n - j).max(0) as usize) / family.floor();
    if !tail.is_finite() {
        return Err(Error::TailNotSummable {
            target: 0.0,
            reached: f64::INFINITY,
            n_max: (n - first_site).max(0) as usize,
        });
    }
    let mut ratios = Vec::new();
    for i in first_site..=n {
        let pair = oscillation_lis(family, i, &[j], window)?;
        ratios.push(pair.ratio()?);
    }
    Ok(flip_product_bound(&ratios, tail))
}

/// Bound on the sensitivity of the induced past-conditioned kernel on a
/// volume starting at `first_site` to a flip at `j` left of it, from the
/// two-sided site kernels; finite reach truncates the product exactly.
pub fn past_flip_bound_spec(
    spec: &SpecFamily,
    first_site: i64,
    j: i64,
    window: &Word,
) -> Result<CertifiedValue> {
    if j >= first_site {
        return Err(Error::Config(format!(
            "flip site {j} must lie left of the volume start {first_site}"
        )));
    }
    let (rl, _) = spec.reach();
    let last = (j + rl as i64).min(window.end());
    let mut ratios = Vec::new();
    for i in first_site..=last {
        let pair = oscillation_spec(spec, i, j, window)?;
        ratios.push(pair.ratio()?);
    }
    Ok(flip_product_bound(&ratios, 0.0))
}

/// Measured sensitivity of the transported two-sided kernel to a single
/// admissible flip of the window at `j`: the companion check for
/// [`future_flip_bound`] and [`past_flip_bound`].
pub fn induced_spec_flip_gap<F: PastFamily + ?Sized>(
    family: &F,
    sites: &[i64],
    j: i64,
    window: &Word,
    target_radius: f64,
    limits: &Limits,
) -> Result<CertifiedValue> {
    if sites.contains(&j) {
        return Err(Error::Config(format!("flip site {j} lies in the volume")));
    }
    let base_val = lis_to_spec(family, sites, window, target_radius, limits)?;
    let cur = window.get(j).ok_or(Error::WindowTooShort {
        site: j,
        needed: 1,
        available: window.len(),
    })?;
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    for a in 0..family.alphabet().len() as Sym {
        if a == cur {
            continue;
        }
        let w = window.patched(SitePatch { site: j, sym: a });
        if !family.grammar().word_admissible(&w) {
            continue;
        }
        let v = lis_to_spec(family, sites, &w, target_radius, limits)?;
        let d = (v.value - base_val.value).abs();
        lo = lo.max((d - v.radius - base_val.radius).max(0.0));
        hi = hi.max(d + v.radius + base_val.radius);
    }
    Ok(CertifiedValue::new(
        (lo + hi) / 2.0,
        (hi - lo) / 2.0,
        base_val.n_used,
    ))
}

/// Measured sensitivity of the transported past-conditioned kernel to a
/// single admissible flip of the past at `j`: the companion check for
/// [`past_flip_bound_spec`].
pub fn induced_lis_flip_gap<T: TwoSidedFamily + ?Sized>(
    spec: &T,
    span: Interval,
    interior: &[Sym],
    j: i64,
    past: &Word,
    target_radius: f64,
    limits: &Limits,
) -> Result<CertifiedValue> {
    if j < past.start() || j > past.end() {
        return Err(Error::WindowTooShort {
            site: j,
            needed: 1,
            available: past.len(),
        });
    }
    let event = vec![interior.to_vec()];
    let base_val = spec_to_lis(spec, span, &event, past, target_radius, limits)?.value;
    let cur = past.get(j).unwrap();
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    for a in 0..spec.alphabet().len() as Sym {
        if a == cur {
            continue;
        }
        let w = past.patched(SitePatch { site: j, sym: a });
        if !spec.grammar().word_admissible(&w) {
            continue;
        }
        let v = spec_to_lis(spec, span, &event, &w, target_radius, limits)?.value;
        let d = (v.value - base_val.value).abs();
        lo = lo.max((d - v.radius - base_val.radius).max(0.0));
        hi = hi.max(d + v.radius + base_val.radius);
    }
    Ok(CertifiedValue::new(
        (lo + hi) / 2.0,
        (hi - lo) / 2.0,
        base_val.n_used,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{GSingleton, LisFamily, RenewalDecay, RhoSingleton};
    use crate::lattice::Alphabet;

    fn markov() -> LisFamily {
        let kernel = GSingleton::from_matrix(&[vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap();
        LisFamily::stationary(Alphabet::binary(), Grammar::full_shift(2), kernel).unwrap()
    }

    fn iid_half() -> LisFamily {
        let kernel = GSingleton::iid(&[0.5, 0.5]).unwrap();
        LisFamily::stationary(Alphabet::binary(), Grammar::full_shift(2), kernel).unwrap()
    }

    fn renewal_geometric() -> LisFamily {
        let kernel =
            GSingleton::renewal(0, 0.4, 0.3, RenewalDecay::Geometric { ratio: 0.5 }).unwrap();
        LisFamily::stationary(Alphabet::binary(), Grammar::full_shift(2), kernel).unwrap()
    }

    fn renewal_harmonic() -> LisFamily {
        let kernel = GSingleton::renewal(0, 0.4, 0.3, RenewalDecay::Harmonic).unwrap();
        LisFamily::stationary(Alphabet::binary(), Grammar::full_shift(2), kernel).unwrap()
    }

    fn golden_mean() -> LisFamily {
        let grammar = Grammar::from_forbidden(1, 2, &[vec![1, 1]]).unwrap();
        let kernel = GSingleton::from_matrix(&[vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
        LisFamily::stationary(Alphabet::binary(), grammar, kernel).unwrap()
    }

    fn ising(beta: f64) -> SpecFamily {
        let kernel = RhoSingleton::pair_potential(vec![-1.0, 1.0], beta).unwrap();
        SpecFamily::stationary(Alphabet::binary(), Grammar::full_shift(2), kernel).unwrap()
    }

    #[test]
    fn markov_step_variation_is_the_row_gap() {
        let fam = markov();
        let v = var_k(&fam, 0, 0, 3, 1 << 12).unwrap();
        assert!(v.exhaustive);
        assert!((v.value.value - 0.3).abs() < 1e-15);
        assert_eq!(v.value.radius, 0.0);
    }

    #[test]
    fn variation_vanishes_beyond_exact_memory() {
        let fam = markov();
        for k in 1..=3 {
            let v = var_k(&fam, 0, k, 4, 1 << 12).unwrap();
            assert_eq!(v.value.value, 0.0, "depth {k}");
            assert_eq!(v.value.radius, 0.0);
        }
    }

    #[test]
    fn iid_has_zero_variation_at_every_depth() {
        let fam = iid_half();
        for k in 0..=3 {
            let v = var_k(&fam, 0, k, 3, 1 << 12).unwrap();
            assert_eq!(v.value.value, 0.0);
            let l = var_log_k(&fam, 0, k, 3, 1 << 12).unwrap();
            assert_eq!(l.value.value, 0.0);
        }
    }

    #[test]
    fn renewal_variation_respects_declared_decay() {
        let fam = renewal_geometric();
        for k in 0..=4 {
            let v = var_k(&fam, 0, k, 8, 1 << 14).unwrap();
            assert!(v.exhaustive);
            // the declared profile dominates the certified interval's low end
            assert!(v.value.lo() <= fam.var_bound(k) + 1e-12, "depth {k}");
            assert!(v.value.hi() >= 0.0);
        }
    }

    #[test]
    fn markov_interdependence_matrix_is_one_entry() {
        let fam = markov();
        let m = dobrushin_matrix_lis(&fam, Interval::new(-2, 0).unwrap(), 4, 1 << 12).unwrap();
        let c = m.entries[2][1]; // row site 0, flip site -1
        assert!((c.value - 0.3).abs() < 1e-12);
        assert_eq!(c.radius, 0.0);
        assert_eq!(m.entries[2][0].value, 0.0); // flip two sites back
        assert_eq!(m.row_tails[2], 0.0);
        assert!((m.row_sum_hi(2) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn interdependence_is_translation_invariant() {
        let fam = markov();
        let m = dobrushin_matrix_lis(&fam, Interval::new(-2, 1).unwrap(), 5, 1 << 12).unwrap();
        for i in 1..4 {
            let c = m.entries[i][i - 1];
            assert!((c.value - 0.3).abs() < 1e-12, "row {i}");
        }
    }

    #[test]
    fn ising_interdependence_matches_the_flip_formula() {
        let spec = ising(0.5);
        let m = dobrushin_matrix_spec(&spec, Interval::new(-1, 1).unwrap(), 1 << 12).unwrap();
        let expected = 1.0f64.tanh() / 2.0;
        let left = m.entries[1][0];
        let right = m.entries[1][2];
        assert!((left.value - expected).abs() < 1e-12);
        assert!((right.value - expected).abs() < 1e-12);
        assert!((m.row_sum_hi(1) - 1.0f64.tanh()).abs() < 1e-10);
    }

    #[test]
    fn iid_criteria_hold_with_maximal_margins() {
        let fam = iid_half();
        let opts = CriterionOptions {
            depth: 6,
            budget: 1 << 12,
            cylinder_cap: 3,
            pad: 2,
            ..CriterionOptions::default()
        };
        let reports = criterion_suite_lis(&fam, &opts).unwrap();
        assert_eq!(reports.len(), 6);
        for r in &reports {
            assert!(r.verdict.holds(), "{} should hold", r.name);
        }
        let margin = |name: &str| -> f64 {
            reports
                .iter()
                .find(|r| r.name == name)
                .map(|r| match r.verdict {
                    Verdict::Holds { margin } => margin,
                    _ => unreachable!(),
                })
                .unwrap()
        };
        assert!((margin("harris") - 1.0).abs() < 1e-12);
        assert!((margin("berbee") - 1.0).abs() < 1e-12);
        assert!((margin("stenflo") - 1.0).abs() < 1e-12);
        assert!((margin("johansson-oberg") - 1.0).abs() < 1e-12);
        assert!((margin("dobrushin-one-sided") - 1.0).abs() < 1e-12);
        assert!((margin("boundary-uniformity-one-sided") - 1.0).abs() < 1e-9);
    }

    #[test]
    fn markov_criteria_all_hold() {
        let fam = markov();
        let opts = CriterionOptions {
            depth: 6,
            budget: 1 << 12,
            cylinder_cap: 3,
            pad: 3,
            ..CriterionOptions::default()
        };
        let reports = criterion_suite_lis(&fam, &opts).unwrap();
        for r in &reports {
            assert!(r.verdict.holds(), "{} should hold: {:?}", r.name, r.verdict);
        }
        let dob = reports
            .iter()
            .find(|r| r.name == "dobrushin-one-sided")
            .unwrap();
        match dob.verdict {
            Verdict::Holds { margin } => assert!((margin - 0.7).abs() < 1e-12),
            _ => unreachable!(),
        }
        let joberg = reports
            .iter()
            .find(|r| r.name == "johansson-oberg")
            .unwrap();
        match joberg.verdict {
            // only the depth-zero log oscillation contributes: ln 2 squared
            Verdict::Holds { margin } => {
                let expected = (-(2.0f64.ln().powi(2))).exp();
                assert!((margin - expected).abs() < 1e-9);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn ising_spec_criteria_hold_with_frozen_margin() {
        let spec = ising(0.5);
        let opts = CriterionOptions {
            cylinder_cap: 2,
            volume_cap: 6,
            pad: 2,
            budget: 1 << 10,
            ..CriterionOptions::default()
        };
        let reports = criterion_suite_spec(&spec, &opts).unwrap();
        let dob = reports.iter().find(|r| r.name == "dobrushin").unwrap();
        match dob.verdict {
            Verdict::Holds { margin } => {
                assert!((margin - (1.0 - 1.0f64.tanh())).abs() < 1e-10);
            }
            _ => panic!("dobrushin should hold"),
        }
        let bu = reports
            .iter()
            .find(|r| r.name == "boundary-uniformity")
            .unwrap();
        assert!(bu.verdict.holds());
    }

    #[test]
    fn golden_mean_criteria_run_under_constraints() {
        let fam = golden_mean();
        let opts = CriterionOptions {
            depth: 5,
            budget: 1 << 10,
            cylinder_cap: 3,
            pad: 2,
            ..CriterionOptions::default()
        };
        let reports = criterion_suite_lis(&fam, &opts).unwrap();
        let dob = reports
            .iter()
            .find(|r| r.name == "dobrushin-one-sided")
            .unwrap();
        match dob.verdict {
            Verdict::Holds { margin } => assert!((margin - 0.5).abs() < 1e-12),
            _ => panic!("constrained chain should still satisfy the row-sum test"),
        }
    }

    #[test]
    fn harmonic_renewal_future_sum_is_inconclusive() {
        let fam = renewal_harmonic();
        let cert = gf_certificate(&fam, &[0], 4, 4, 1 << 10).unwrap();
        assert!(matches!(cert.verdict, Verdict::Inconclusive { .. }));
        assert!(cert.total.is_none());
        assert!(!cert.tail.is_finite());
    }

    #[test]
    fn harmonic_renewal_square_sum_still_holds() {
        let fam = renewal_harmonic();
        let opts = CriterionOptions {
            depth: 6,
            budget: 1 << 12,
            cylinder_cap: 2,
            pad: 2,
            ..CriterionOptions::default()
        };
        let reports = criterion_suite_lis(&fam, &opts).unwrap();
        let jo = reports
            .iter()
            .find(|r| r.name == "johansson-oberg")
            .unwrap();
        assert!(jo.verdict.holds(), "square tail is finite: {:?}", jo.verdict);
        let harris = reports.iter().find(|r| r.name == "harris").unwrap();
        assert!(
            matches!(harris.verdict, Verdict::Inconclusive { .. }),
            "no positive term floor under a harmonic profile"
        );
    }

    #[test]
    fn geometric_renewal_certifies_exponential_future() {
        let fam = renewal_geometric();
        let cert = egf_certificate_lis(&fam, 0, 5, 4, 1 << 10).unwrap();
        assert!(cert.verdict.holds());
        assert!((cert.a.unwrap() - 2.0).abs() < 1e-12);
        let gf = gf_certificate(&fam, &[0], 5, 4, 1 << 10).unwrap();
        assert!(gf.verdict.holds());
        assert!(gf.total.unwrap().is_finite());
    }

    #[test]
    fn exact_memory_future_caps_vanish_beyond_the_range() {
        let fam = markov();
        let cert = gf_certificate(&fam, &[0], 5, 3, 1 << 10).unwrap();
        assert!(cert.verdict.holds());
        for &(k, cap) in &cert.eps {
            if k >= 2 {
                assert_eq!(cap, 0.0, "site {k}");
            }
        }
        // depth-0 substitution ratio 4/3 plus depth-1 ratio 1, no tail
        assert!((cert.total.unwrap() - 7.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn markov_oscillation_pair_matches_enumeration() {
        let fam = markov();
        let window = Word::new(0, vec![0, 1]);
        let pair = oscillation_lis(&fam, 1, &[0], &window).unwrap();
        assert!((pair.c.value - 0.3).abs() < 1e-15);
        assert!((pair.delta.value - 0.3).abs() < 1e-15);
        let r = pair.ratio().unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distant_singletons_do_not_oscillate() {
        let fam = markov();
        let window = Word::new(0, vec![0, 1, 0]);
        let pair = oscillation_lis(&fam, 2, &[0], &window).unwrap();
        assert_eq!(pair.delta.value, 0.0);
        assert!((pair.c.value - 0.4).abs() < 1e-15);
    }

    #[test]
    fn ising_single_flip_oscillation_is_frozen() {
        let spec = ising(0.5);
        let window = Word::new(-2, vec![1, 1, 1, 1, 1]);
        let pair = oscillation_spec(&spec, 0, 1, &window).unwrap();
        let gap = 1.0f64.tanh() / 2.0;
        assert!((pair.delta.value - gap).abs() < 1e-12);
        assert!((pair.c.value - 0.5).abs() < 1e-12);
        let r = pair.ratio().unwrap();
        assert!((r.value - 1.0f64.tanh()).abs() < 1e-12);
    }

    #[test]
    fn future_flip_bound_dominates_measured_gap() {
        let fam = markov();
        let window = Word::new(-1, vec![0, 0, 1, 0]);
        let bound = future_flip_bound(&fam, &[0], 1, &window).unwrap();
        assert!(bound.hi() <= 1.0 + 1e-12);
        let limits = Limits::default();
        let measured = induced_spec_flip_gap(&fam, &[0], 1, &window, 1e-9, &limits).unwrap();
        assert!(
            measured.hi() <= bound.hi() + 1e-9,
            "measured {} exceeds bound {}",
            measured.hi(),
            bound.hi()
        );
        assert!(measured.value > 0.0);
    }

    #[test]
    fn past_flip_bound_dominates_measured_gap() {
        let fam = markov();
        let window = Word::new(-2, vec![0, 0, 0, 1, 0]);
        let bound = past_flip_bound(&fam, 0, -1, &window).unwrap();
        // single active factor with ratio 3/4 gives 1 - (1/7) = 6/7
        assert!((bound.value - 6.0 / 7.0).abs() < bound.radius + 1e-12);
        let limits = Limits::default();
        let measured = induced_spec_flip_gap(&fam, &[0], -1, &window, 1e-9, &limits).unwrap();
        assert!(measured.hi() <= bound.hi() + 1e-9);
    }

    #[test]
    fn spec_past_flip_bound_dominates_induced_chain() {
        let spec = ising(0.5);
        let window = Word::new(-3, vec![1, 1, 1, 1, 1, 1, 1]);
        let bound = past_flip_bound_spec(&spec, 0, -1, &window).unwrap();
        let t = 1.0f64.tanh();
        let expected = 1.0 - (1.0 - t) / (1.0 + t);
        assert!((bound.value - expected).abs() < bound.radius + 1e-12);
        let limits = Limits::default();
        let past = Word::new(-3, vec![1, 1, 1]);
        let span = Interval::new(0, 0).unwrap();
        let measured =
            induced_lis_flip_gap(&spec, span, &[1], -1, &past, 1e-6, &limits).unwrap();
        assert!(
            measured.hi() <= bound.hi() + 1e-6,
            "measured {} exceeds bound {}",
            measured.hi(),
            bound.hi()
        );
    }

    #[test]
    fn renewal_past_flip_bound_truncates_the_product() {
        let fam = renewal_geometric();
        let window = Word::new(-6, vec![0; 20]);
        let bound = past_flip_bound(&fam, 0, -1, &window).unwrap();
        assert!(bound.hi() < 1.0, "certified tail keeps the bound nontrivial");
        let limits = Limits::default();
        let measured = induced_spec_flip_gap(&fam, &[0], -1, &window, 1e-3, &limits).unwrap();
        assert!(measured.hi() <= bound.hi() + 1e-6);
    }

    #[test]
    fn geometric_product_gap_dominates_direct_products() {
        let m = 0.3f64;
        let a = 2.0f64;
        let big = geometric_product_gap(m, a);
        for k in 2..10 {
            let mut product = 1.0f64;
            for i in k..400 {
                let u = m / a.powi(i);
                product *= (1.0 - u) / (1.0 + u);
            }
            let lhs = 1.0 - product;
            let rhs = big * a.powf(-((k - 1) as f64)) / a.ln();
            assert!(lhs <= rhs + 1e-12, "k = {k}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn profile_forms_are_recognized() {
        assert_eq!(
            profile_form(&markov()),
            ProfileForm::Exact { memory: 1 }
        );
        match profile_form(&renewal_geometric()) {
            ProfileForm::Geometric { coeff, rate } => {
                assert!((coeff - 0.3).abs() < 1e-9);
                assert!((rate - 2.0).abs() < 1e-9);
            }
            other => panic!("expected a geometric form, got {other:?}"),
        }
        assert_eq!(profile_form(&renewal_harmonic()), ProfileForm::Table);
    }

    #[test]
    fn overlap_of_identical_rows_is_full() {
        let fam = iid_half();
        let o = overlap_k(&fam, 0, 1, 3, 1 << 10).unwrap();
        assert!(o.exhaustive);
        assert!((o.value.value - 1.0).abs() < 1e-12);
        assert_eq!(o.value.radius, 0.0);
    }

    #[test]
    fn markov_overlap_beyond_memory_is_full() {
        let fam = markov();
        let o = overlap_k(&fam, 0, 1, 3, 1 << 10).unwrap();
        assert!((o.value.value - 1.0).abs() < 1e-12);
        let o0 = overlap_k(&fam, 0, 0, 3, 1 << 10).unwrap();
        // rows (0.7, 0.3) vs (0.4, 0.6): overlap 0.4 + 0.3
        assert!((o0.value.value - 0.7).abs() < 1e-12);
    }
}
