//! Two-sided single-site densities and finite-volume reconstruction.
//!
//! A `RhoSingleton` is the density of one site against the product weights,
//! conditioned on a two-sided context. A `SpecFamily` validates positivity
//! and per-context normalization, evaluates multi-site densities from the
//! single-site ones, and exposes the induced finite-volume conditional
//! probabilities. Order consistency is a checkable property, not an
//! assumption: disagreement between evaluation orders fails loudly with the
//! observed gap.
//!
//! Two reconstruction routes cover two support shapes. When every word is
//! admissible, multi-site densities come from the peel-one-site recursion:
//! divide the peeled site's density by the weighted mean of itself over the
//! remaining sites' density. That recursion silently drops any term whose
//! single-site density vanishes, which is exact only when a vanishing term
//! really carries no mass. Under an exclusion grammar a flip at one site can
//! leave the admissible set while the summed-out remainder still carries
//! mass, so the dropped term is a removable zero-over-zero with a finite
//! value the single-site kernels cannot express pointwise. Constrained
//! families therefore take the flip-chain route instead: enumerate the
//! admissible interiors, connect interiors differing at one site, propagate
//! relative weights along a spanning tree of single-site density ratios, and
//! verify every remaining edge closes its cycle. Cycle closure there plays
//! the role the order shuffle plays for the peel route.

use crate::error::{Error, Result};
use crate::lattice::{pack, unpack, Alphabet, Grammar, Interval, Sym, Word};
use std::collections::BTreeMap;

/// Evaluation backend of a two-sided single-site density.
#[derive(Clone, Debug)]
pub enum TwoSidedKernel {
    /// Explicit table over (left context, symbol, right context).
    Table {
        left: usize,
        right: usize,
        values: Vec<f64>,
    },
    /// Nearest-neighbor pair energy: density proportional to
    /// `exp(beta * s[a] * (s[left] + s[right]))`, normalized per context.
    PairPotential { beta: f64, spins: Vec<f64> },
    /// Per-symbol positive tilt of an inner kernel, renormalized per context.
    Scaled {
        inner: Box<TwoSidedKernel>,
        factors: Vec<f64>,
    },
}

impl TwoSidedKernel {
    fn memory(&self) -> (usize, usize) {
        match self {
            TwoSidedKernel::Table { left, right, .. } => (*left, *right),
            TwoSidedKernel::PairPotential { .. } => (1, 1),
            TwoSidedKernel::Scaled { inner, .. } => inner.memory(),
        }
    }

    /// Density of every symbol given the contexts; `mask` marks the symbols
    /// admissible in this slot.
    fn eval_all(&self, base: usize, lctx: &[Sym], rctx: &[Sym], weights: &[f64], mask: &[bool]) -> Vec<f64> {
        match self {
            TwoSidedKernel::Table {
                left,
                right,
                values,
            } => {
                let l = pack(&lctx[lctx.len() - left..], base);
                let r = pack(&rctx[..*right], base);
                let rdim = base.pow(*right as u32);
                (0..base)
                    .map(|a| values[(l * base + a) * rdim + r])
                    .collect()
            }
            TwoSidedKernel::PairPotential { beta, spins } => {
                let sl = spins[lctx[lctx.len() - 1] as usize];
                let sr = spins[rctx[0] as usize];
                let e: Vec<f64> = (0..base)
                    .map(|a| (beta * spins[a] * (sl + sr)).exp())
                    .collect();
                let z: f64 = (0..base)
                    .filter(|&a| mask[a])
                    .map(|a| weights[a] * e[a])
                    .sum();
                (0..base)
                    .map(|a| if mask[a] { e[a] / z } else { 0.0 })
                    .collect()
            }
            TwoSidedKernel::Scaled { inner, factors } => {
                let v = inner.eval_all(base, lctx, rctx, weights, mask);
                let z: f64 = (0..base).map(|a| weights[a] * factors[a] * v[a]).sum();
                (0..base).map(|a| factors[a] * v[a] / z).collect()
            }
        }
    }
}

/// Single-site two-sided density kernel.
#[derive(Clone, Debug)]
pub struct RhoSingleton {
    base: usize,
    kernel: TwoSidedKernel,
}

impl RhoSingleton {
    /// Table kernel; values indexed by `(pack(left) * base + sym) * base^right + pack(right)`.
    pub fn from_table(base: usize, left: usize, right: usize, values: Vec<f64>) -> Result<Self> {
        let want = base.pow(left as u32) * base * base.pow(right as u32);
        if values.len() != want {
            return Err(Error::Config(format!(
                "density table has {} entries, expected {}",
                values.len(),
                want
            )));
        }
        if values.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::Config(
                "density entries must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            base,
            kernel: TwoSidedKernel::Table {
                left,
                right,
                values,
            },
        })
    }

    /// Nearest-neighbor pair-energy kernel.
    pub fn pair_potential(spins: Vec<f64>, beta: f64) -> Result<Self> {
        if spins.len() < 2 {
            return Err(Error::Config("need at least two spin values".into()));
        }
        if !beta.is_finite() || spins.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("pair potential parameters must be finite".into()));
        }
        Ok(Self {
            base: spins.len(),
            kernel: TwoSidedKernel::PairPotential { beta, spins },
        })
    }

    /// Positive per-symbol tilt of an existing kernel.
    pub fn scaled(inner: &RhoSingleton, factors: Vec<f64>) -> Result<Self> {
        if factors.len() != inner.base {
            return Err(Error::Config("tilt factor count must match alphabet".into()));
        }
        if factors.iter().any(|&f| !(f > 0.0) || !f.is_finite()) {
            return Err(Error::Config("tilt factors must be positive".into()));
        }
        Ok(Self {
            base: inner.base,
            kernel: TwoSidedKernel::Scaled {
                inner: Box::new(inner.kernel.clone()),
                factors,
            },
        })
    }

    /// Alphabet size.
    pub fn alphabet_len(&self) -> usize {
        self.base
    }

    /// (left, right) context lengths the kernel reads.
    pub fn memory(&self) -> (usize, usize) {
        self.kernel.memory()
    }
}

/// Cycle-closure tolerance for flip-chain reconstruction on constrained
/// grammars, matching the order-shuffle tolerance used on full support.
const FLIP_TOL: f64 = 1e-10;

/// Two-sided singleton family with product weights on the full lattice.
#[derive(Clone, Debug)]
pub struct SpecFamily {
    alphabet: Alphabet,
    grammar: Grammar,
    weights: Vec<f64>,
    base: RhoSingleton,
    overrides: BTreeMap<i64, RhoSingleton>,
}

impl SpecFamily {
    /// Builds a family and validates positivity and per-context normalization.
    ///
    /// `weights` are the positive per-symbol reference weights (`None` for
    /// uniform weight 1). For every admissible context the weighted density
    /// sum over admissible symbols must be `1 ± 1e-12`, forbidden symbols
    /// must carry exactly zero density, and admissible ones must be positive.
    pub fn new(
        alphabet: Alphabet,
        grammar: Grammar,
        weights: Option<Vec<f64>>,
        base: RhoSingleton,
        overrides: BTreeMap<i64, RhoSingleton>,
    ) -> Result<Self> {
        let weights = weights.unwrap_or_else(|| vec![1.0; alphabet.len()]);
        if grammar.alphabet_len() != alphabet.len()
            || base.alphabet_len() != alphabet.len()
            || weights.len() != alphabet.len()
        {
            return Err(Error::Config(
                "alphabet, grammar, weights and kernel sizes disagree".into(),
            ));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::Config("weights must be positive".into()));
        }
        for s in overrides.values() {
            if s.alphabet_len() != alphabet.len() {
                return Err(Error::Config("override kernel size disagrees".into()));
            }
        }
        let fam = Self {
            alphabet,
            grammar,
            weights,
            base,
            overrides,
        };
        fam.check_contexts(1e-12)?;
        Ok(fam)
    }

    /// Stationary family with uniform weights and no overrides.
    pub fn stationary(alphabet: Alphabet, grammar: Grammar, base: RhoSingleton) -> Result<Self> {
        Self::new(alphabet, grammar, None, base, BTreeMap::new())
    }

    /// Alphabet.
    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    /// Grammar.
    pub fn grammar(&self) -> &Grammar {
        &self.grammar
    }

    /// Per-symbol reference weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// True when every site uses the same kernel.
    pub fn is_stationary(&self) -> bool {
        self.overrides.is_empty()
    }

    /// Kernel in effect at `site`.
    pub fn singleton(&self, site: i64) -> &RhoSingleton {
        self.overrides.get(&site).unwrap_or(&self.base)
    }

    /// Context reach on each side: kernel memory or grammar order, whichever
    /// is larger, maximized over site kernels.
    pub fn reach(&self) -> (usize, usize) {
        let g = self.grammar.order();
        let mut l = self.base.memory().0;
        let mut r = self.base.memory().1;
        for s in self.overrides.values() {
            l = l.max(s.memory().0);
            r = r.max(s.memory().1);
        }
        (l.max(g), r.max(g))
    }

    /// Admissibility mask over symbols at `site` inside `window`.
    pub fn mask_at(&self, window: &Word, site: i64) -> Vec<bool> {
        let g = self.grammar.order() as i64;
        let lft: Vec<Sym> = ((site - g).max(window.start())..site)
            .map(|i| window.get(i).unwrap())
            .collect();
        let rgt: Vec<Sym> = (site + 1..=(site + g).min(window.end()))
            .map(|i| window.get(i).unwrap())
            .collect();
        self.alphabet
            .syms()
            .map(|a| self.grammar.admissible_in_context(&lft, &[a], &rgt))
            .collect()
    }

    /// Density of every symbol at `site` given the rest of `window`.
    ///
    /// The window must cover the kernel memory around `site`. Forbidden
    /// symbols get exactly zero.
    pub fn rho_row(&self, window: &Word, site: i64) -> Result<Vec<f64>> {
        let (ml, mr) = self.singleton(site).memory();
        if window.start() > site - ml as i64 || window.end() < site + mr as i64 {
            return Err(Error::WindowTooShort {
                site,
                needed: ml + mr + 1,
                available: window.len(),
            });
        }
        let lctx: Vec<Sym> = (site - ml as i64..site)
            .map(|i| window.get(i).unwrap())
            .collect();
        let rctx: Vec<Sym> = (site + 1..=site + mr as i64)
            .map(|i| window.get(i).unwrap())
            .collect();
        let mask = self.mask_at(window, site);
        Ok(self
            .singleton(site)
            .kernel
            .eval_all(self.alphabet.len(), &lctx, &rctx, &self.weights, &mask))
    }

    /// Density of the symbol `window` holds at `site`, zero off the grammar.
    pub fn rho_at(&self, window: &Word, site: i64) -> Result<f64> {
        let row = self.rho_row(window, site)?;
        Ok(row[window.get(site).ok_or(Error::WindowTooShort {
            site,
            needed: 1,
            available: window.len(),
        })? as usize])
    }

    fn require_coverage(&self, window: &Word, sites: &[i64]) -> Result<()> {
        let (rl, rr) = self.reach();
        let lo = sites.iter().min().unwrap() - rl as i64;
        let hi = sites.iter().max().unwrap() + rr as i64;
        if window.start() > lo || window.end() < hi {
            return Err(Error::WindowTooShort {
                site: *sites.iter().min().unwrap(),
                needed: (hi - lo + 1) as usize,
                available: window.len(),
            });
        }
        Ok(())
    }

    /// True when the grammar forbids nothing, so the peel recursion is exact.
    pub fn full_support(&self) -> bool {
        self.grammar.is_full()
    }

    /// Multi-site density by peeling sites in the given order.
    ///
    /// `order` lists distinct sites; the first is peeled first. The window
    /// must cover the sites extended by the family reach and is treated as
    /// zero density when inadmissible. Constrained grammars route to the
    /// flip chain, where the removal order is immaterial and consistency is
    /// checked through cycle closure instead.
    pub fn rho_volume_ordered(&self, order: &[i64], window: &Word) -> Result<f64> {
        if order.is_empty() {
            return Err(Error::Config("empty site list".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &s in order {
            if !seen.insert(s) {
                return Err(Error::Config(format!("duplicate site {s}")));
            }
        }
        self.require_coverage(window, order)?;
        if !self.grammar.word_admissible(window) {
            return Ok(0.0);
        }
        if self.full_support() {
            return self.peel(order, window);
        }
        let sites: Vec<i64> = seen.into_iter().collect();
        self.rho_from_flip_chain(&sites, window, FLIP_TOL)
    }

    fn peel(&self, order: &[i64], window: &Word) -> Result<f64> {
        let k = order[0];
        if order.len() == 1 {
            return self.rho_at(window, k);
        }
        let row = self.rho_row(window, k)?;
        let own = row[window.get(k).unwrap() as usize];
        if own == 0.0 {
            return Ok(0.0);
        }
        let rest = &order[1..];
        let mut denom = 0.0f64;
        for a in self.alphabet.syms() {
            let v = row[a as usize];
            if v == 0.0 {
                continue;
            }
            let wa = window.patched(crate::lattice::SitePatch { site: k, sym: a });
            let sub = self.peel(rest, &wa)?;
            if sub <= 0.0 {
                return Err(Error::PositivityViolated {
                    context: format!("peeled density on sites {rest:?} at symbol {a}"),
                    value: sub,
                });
            }
            denom += self.weights[a as usize] * v / sub;
        }
        Ok(own / denom)
    }

    /// Multi-site density in the canonical order (largest site peeled first).
    pub fn rho_volume(&self, sites: &[i64], window: &Word) -> Result<f64> {
        let mut order: Vec<i64> = sites.to_vec();
        order.sort_unstable();
        order.reverse();
        self.rho_volume_ordered(&order, window)
    }

    /// Pair density with the order-consistency check.
    ///
    /// On full support this evaluates both peeling orders; if they differ by
    /// more than `tolerance` the family is not a consistent specification
    /// and a typed error carries the gap. Constrained grammars run the flip
    /// chain with the same tolerance on cycle closure. Returns the
    /// canonical-order value.
    pub fn rho_pair(&self, i: i64, j: i64, window: &Word, tolerance: f64) -> Result<f64> {
        if i == j {
            return Err(Error::Config("pair sites must differ".into()));
        }
        let (hi, lo) = if i > j { (i, j) } else { (j, i) };
        self.require_coverage(window, &[lo, hi])?;
        if !self.grammar.word_admissible(window) {
            return Ok(0.0);
        }
        if !self.full_support() {
            return self.rho_from_flip_chain(&[lo, hi], window, tolerance);
        }
        let e1 = self.peel(&[hi, lo], window)?;
        let e2 = self.peel(&[lo, hi], window)?;
        let gap = (e1 - e2).abs();
        if gap > tolerance {
            return Err(Error::OrderConsistencyViolated { gap, tolerance });
        }
        Ok(e1)
    }

    /// Conditional probability of the symbols `window` holds on `sites`
    /// given the rest: the site weights times the multi-site density.
    pub fn gamma_volume(&self, sites: &[i64], window: &Word) -> Result<f64> {
        let rho = self.rho_volume(sites, window)?;
        let mut lam = 1.0f64;
        for &s in sites {
            lam *= self.weights[window.get(s).unwrap() as usize];
        }
        Ok(lam * rho)
    }

    /// Conditional distribution over admissible interiors of `span` given
    /// the exterior part of `window`, by bottom-up tabulation.
    ///
    /// Equivalent to `gamma_volume` per interior but shares subvolume
    /// tables; cost is about `|A|^(span + reach)` instead of exponential in
    /// depth times span. Interior entries come back in lexicographic order.
    pub fn gamma_interval_table(
        &self,
        span: Interval,
        window: &Word,
        budget: usize,
    ) -> Result<Vec<(Vec<Sym>, f64)>> {
        let sites: Vec<i64> = span.sites().collect();
        self.require_coverage(window, &sites)?;
        if !self.full_support() {
            return self.gamma_flip_chain(&sites, window, budget, FLIP_TOL);
        }
        let base = self.alphabet.len();
        let (_, rr) = self.reach();
        let l = span.lo();
        let r = span.hi();
        let n = span.len();
        let ext = |j: usize| -> i64 { (l + j as i64 - 1 + rr as i64).min(r) };
        // level tables over K_j = [l, ext(j)]
        let mut table: Vec<f64> = Vec::new();
        let mut prev_hi: i64 = 0;
        for j in 1..=n {
            let k = l + j as i64 - 1; // site added at this level
            let hi_j = ext(j);
            let size = (hi_j - l + 1) as usize;
            let entries = base.pow(size as u32);
            if entries > budget {
                return Err(Error::VolumeTooLarge {
                    requested: entries as f64,
                    budget,
                });
            }
            let mut cur = vec![0.0f64; entries];
            for (idx, slot) in cur.iter_mut().enumerate() {
                let assign = unpack(idx, base, size);
                let mut w = window.clone();
                for (t, &s) in assign.iter().enumerate() {
                    w.set(l + t as i64, s);
                }
                let row = self.rho_row(&w, k)?;
                let own = row[w.get(k).unwrap() as usize];
                if own == 0.0 {
                    continue;
                }
                if j == 1 {
                    *slot = own;
                    continue;
                }
                let proj = |word: &Word| -> usize {
                    let len = (prev_hi - l + 1) as usize;
                    let mut syms = Vec::with_capacity(len);
                    for t in 0..len {
                        syms.push(word.get(l + t as i64).unwrap());
                    }
                    pack(&syms, base)
                };
                if table[proj(&w)] == 0.0 {
                    continue;
                }
                let mut denom = 0.0f64;
                let mut bad = false;
                for a in self.alphabet.syms() {
                    let v = row[a as usize];
                    if v == 0.0 {
                        continue;
                    }
                    let wa = w.patched(crate::lattice::SitePatch { site: k, sym: a });
                    let sub = table[proj(&wa)];
                    if sub <= 0.0 {
                        bad = true;
                        break;
                    }
                    denom += self.weights[a as usize] * v / sub;
                }
                if bad {
                    return Err(Error::PositivityViolated {
                        context: format!("subvolume table at level {j}"),
                        value: 0.0,
                    });
                }
                *slot = own / denom;
            }
            table = cur;
            prev_hi = hi_j;
        }
        // final level covers the whole span; attach weights
        let mut out = Vec::new();
        for (idx, &rho) in table.iter().enumerate() {
            if rho <= 0.0 {
                continue;
            }
            let assign = unpack(idx, base, n);
            let lam: f64 = assign.iter().map(|&s| self.weights[s as usize]).product();
            out.push((assign, lam * rho));
        }
        if out.is_empty() {
            return Err(Error::ZeroDenominator(format!(
                "no admissible interior on {span}"
            )));
        }
        Ok(out)
    }

    /// Conditional distribution over admissible assignments of `sites` given
    /// the exterior of `window`, by chaining single-site density ratios.
    ///
    /// Interiors differing at exactly one site are connected; the ratio of
    /// their conditional probabilities is a single-site weighted density
    /// ratio, well defined because both ends are admissible. Weights spread
    /// from an arbitrary root along a breadth-first tree; every non-tree
    /// edge then re-derives one weight and any relative mismatch above
    /// `tolerance` means the single-site densities do not cohere into one
    /// distribution. Entries come back in lexicographic order.
    pub fn gamma_flip_chain(
        &self,
        sites: &[i64],
        window: &Word,
        budget: usize,
        tolerance: f64,
    ) -> Result<Vec<(Vec<Sym>, f64)>> {
        let mut sorted = sites.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.is_empty() || sorted.len() != sites.len() {
            return Err(Error::Config("sites must be non-empty and distinct".into()));
        }
        self.require_coverage(window, &sorted)?;
        let base = self.alphabet.len();
        let n = sorted.len();
        let total = base
            .checked_pow(n as u32)
            .filter(|&t| t <= budget)
            .ok_or(Error::VolumeTooLarge {
                requested: (base as f64).powi(n as i32),
                budget,
            })?;
        let mut node_of = vec![usize::MAX; total];
        let mut nodes: Vec<usize> = Vec::new();
        for idx in 0..total {
            let assign = unpack(idx, base, n);
            let mut w = window.clone();
            for (t, &s) in sorted.iter().enumerate() {
                w.set(s, assign[t]);
            }
            if self.grammar.word_admissible(&w) {
                node_of[idx] = nodes.len();
                nodes.push(idx);
            }
        }
        if nodes.is_empty() {
            return Err(Error::ZeroDenominator(format!(
                "no admissible interior on sites {sorted:?}"
            )));
        }
        let mut weight = vec![0.0f64; nodes.len()];
        let mut visited = vec![false; nodes.len()];
        weight[0] = 1.0;
        visited[0] = true;
        let mut queue = std::collections::VecDeque::from([0usize]);
        let mut worst_gap = 0.0f64;
        while let Some(u) = queue.pop_front() {
            let assign = unpack(nodes[u], base, n);
            let mut wu = window.clone();
            for (t, &s) in sorted.iter().enumerate() {
                wu.set(s, assign[t]);
            }
            for (t, &site) in sorted.iter().enumerate() {
                let row = self.rho_row(&wu, site)?;
                let cur = assign[t];
                let own = self.weights[cur as usize] * row[cur as usize];
                let stride = base.pow((n - 1 - t) as u32);
                for b in self.alphabet.syms() {
                    if b == cur {
                        continue;
                    }
                    let idx =
                        (nodes[u] as i64 + (b as i64 - cur as i64) * stride as i64) as usize;
                    let v = node_of[idx];
                    if v == usize::MAX {
                        continue;
                    }
                    let alt = self.weights[b as usize] * row[b as usize];
                    if own <= 0.0 || alt <= 0.0 {
                        return Err(Error::PositivityViolated {
                            context: format!(
                                "flip at site {site} between admissible interiors"
                            ),
                            value: own.min(alt),
                        });
                    }
                    let derived = weight[u] * alt / own;
                    if visited[v] {
                        let gap = (weight[v] - derived).abs()
                            / weight[v].abs().max(derived.abs());
                        worst_gap = worst_gap.max(gap);
                    } else {
                        weight[v] = derived;
                        visited[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        if visited.iter().any(|&f| !f) {
            return Err(Error::Config(
                "admissible interiors split into several flip components; \
                 single-site ratios cannot connect them"
                    .into(),
            ));
        }
        if worst_gap > tolerance {
            return Err(Error::OrderConsistencyViolated {
                gap: worst_gap,
                tolerance,
            });
        }
        let z: f64 = weight.iter().sum();
        Ok(nodes
            .iter()
            .zip(weight)
            .map(|(&idx, w)| (unpack(idx, base, n), w / z))
            .collect())
    }

    /// Multi-site density of the window's own interior through the flip
    /// chain: conditional probability divided by the site weights.
    fn rho_from_flip_chain(&self, sites: &[i64], window: &Word, tolerance: f64) -> Result<f64> {
        let dist = self.gamma_flip_chain(sites, window, 1 << 20, tolerance)?;
        let assign: Vec<Sym> = sites.iter().map(|&s| window.get(s).unwrap()).collect();
        let p = dist
            .iter()
            .find(|(a, _)| *a == assign)
            .map(|(_, p)| *p)
            .unwrap_or(0.0);
        let lam: f64 = assign.iter().map(|&s| self.weights[s as usize]).product();
        Ok(p / lam)
    }

    fn check_contexts(&self, tol: f64) -> Result<()> {
        let (rl, rr) = self.reach();
        let len = rl + 1 + rr;
        let total = self.alphabet.len().pow(len as u32);
        if total > 1 << 16 {
            return Err(Error::VolumeTooLarge {
                requested: total as f64,
                budget: 1 << 16,
            });
        }
        let mut sites: Vec<i64> = vec![0];
        sites.extend(self.overrides.keys());
        for &site in &sites {
            let mut sums: BTreeMap<usize, f64> = BTreeMap::new();
            for idx in 0..total {
                let syms = unpack(idx, self.alphabet.len(), len);
                if !self.grammar.is_admissible(&syms) {
                    continue;
                }
                let window = Word::new(site - rl as i64, syms.clone());
                let row = self.rho_row(&window, site)?;
                let mask = self.mask_at(&window, site);
                let a = syms[rl] as usize;
                if !mask[a] {
                    continue;
                }
                if row[a] <= 0.0 {
                    return Err(Error::PositivityViolated {
                        context: format!("density at site {site} in context {syms:?}"),
                        value: row[a],
                    });
                }
                for b in self.alphabet.syms() {
                    if !mask[b as usize] && row[b as usize] != 0.0 {
                        return Err(Error::Config(format!(
                            "density at site {site} puts mass {} on forbidden symbol {b}",
                            row[b as usize]
                        )));
                    }
                }
                // context key drops the center symbol
                let mut ctx = syms.clone();
                ctx.remove(rl);
                let key = pack(&ctx, self.alphabet.len());
                *sums.entry(key).or_insert(0.0) += self.weights[a] * row[a];
            }
            if sums.is_empty() {
                return Err(Error::Config(format!(
                    "no admissible context at site {site}"
                )));
            }
            for (_, total) in sums {
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
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;

    fn ising(beta: f64) -> SpecFamily {
        let ab = Alphabet::new(vec!["+", "-"]).unwrap();
        let g = Grammar::full_shift(2);
        let k = RhoSingleton::pair_potential(vec![1.0, -1.0], beta).unwrap();
        SpecFamily::stationary(ab, g, k).unwrap()
    }

    fn golden_mean_spec() -> SpecFamily {
        let ab = Alphabet::binary();
        let g = Grammar::from_forbidden(1, 2, &[vec![1, 1]]).unwrap();
        // contexts (l, r): (0,0) -> (1/3, 2/3); elsewhere the corner forces 0
        let t = vec![
            1.0 / 3.0, // (0, _, 0) sym 0
            1.0,       // (0, _, 1) sym 0
            2.0 / 3.0, // (0, _, 0) sym 1
            0.0,       // (0, _, 1) sym 1
            1.0,       // (1, _, 0) sym 0
            1.0,       // (1, _, 1) sym 0
            0.0,       // (1, _, 0) sym 1
            0.0,       // (1, _, 1) sym 1
        ];
        let k = RhoSingleton::from_table(2, 1, 1, t).unwrap();
        SpecFamily::stationary(ab, g, k).unwrap()
    }

    #[test]
    fn ising_singleton_is_logistic() {
        let fam = ising(0.5);
        let w = Word::new(-1, vec![0, 0, 0]);
        let v = fam.rho_at(&w, 0).unwrap();
        assert!((v - 0.8807970779778823).abs() < 1e-15);
        let w = Word::new(-1, vec![0, 1, 0]);
        let v = fam.rho_at(&w, 0).unwrap();
        assert!((v - (1.0 - 0.8807970779778823)).abs() < 1e-15);
    }

    #[test]
    fn pair_density_is_order_consistent() {
        let fam = ising(0.5);
        for idx in 0..16 {
            let syms = crate::lattice::unpack(idx, 2, 4);
            let w = Word::new(-1, syms);
            let v = fam.rho_pair(0, 1, &w, 1e-12).unwrap();
            assert!(v > 0.0);
        }
    }

    #[test]
    fn mixed_coupling_breaks_order_consistency() {
        // site 0 carries a different bond strength than its neighbors
        let ab = Alphabet::new(vec!["+", "-"]).unwrap();
        let g = Grammar::full_shift(2);
        let base = RhoSingleton::pair_potential(vec![1.0, -1.0], 0.5).unwrap();
        let hot = RhoSingleton::pair_potential(vec![1.0, -1.0], 0.7).unwrap();
        let mut overrides = BTreeMap::new();
        overrides.insert(0i64, hot);
        let fam = SpecFamily::new(ab, g, None, base, overrides).unwrap();
        let w = Word::new(-1, vec![0, 0, 1, 0]);
        let err = fam.rho_pair(0, 1, &w, 1e-10).unwrap_err();
        match err {
            Error::OrderConsistencyViolated { gap, .. } => assert!(gap > 1e-6),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn uniform_tilt_stays_consistent() {
        // a global per-symbol tilt is an external field: still a specification
        let ab = Alphabet::new(vec!["+", "-"]).unwrap();
        let g = Grammar::full_shift(2);
        let inner = RhoSingleton::pair_potential(vec![1.0, -1.0], 0.5).unwrap();
        let tilted = RhoSingleton::scaled(&inner, vec![1.0, 1.35]).unwrap();
        let fam = SpecFamily::stationary(ab, g, tilted).unwrap();
        let w = Word::new(-1, vec![0, 1, 0, 0]);
        let v = fam.rho_pair(0, 1, &w, 1e-12).unwrap();
        assert!(v > 0.0);
    }

    #[test]
    fn volume_density_matches_direct_normalization() {
        let beta = 0.25;
        let fam = ising(beta);
        let g = Grammar::full_shift(2);
        let span = Interval::new(0, 2).unwrap();
        let window = Word::new(-1, vec![0, 0, 0, 0, 1]);
        let spin = |s: Sym| if s == 0 { 1.0 } else { -1.0 };
        let logw = |w: &Word| {
            let mut acc = 0.0;
            for i in -1..3 {
                acc += beta * spin(w.get(i).unwrap()) * spin(w.get(i + 1).unwrap());
            }
            acc
        };
        let dist = oracle::finite_volume_gibbs(&g, span, &window, &logw, 1 << 20).unwrap();
        for (syms, p) in &dist {
            let mut probe = window.clone();
            for (t, &s) in syms.iter().enumerate() {
                probe.set(t as i64, s);
            }
            let q = fam.gamma_volume(&[0, 1, 2], &probe).unwrap();
            assert!((p - q).abs() < 1e-13, "{syms:?}: {p} vs {q}");
        }
    }

    #[test]
    fn peeling_order_does_not_matter() {
        let fam = ising(0.5);
        let window = Word::new(-1, vec![0, 1, 0, 0, 1, 0]);
        let sites = [0i64, 1, 2, 3];
        let canon = fam.rho_volume(&sites, &window).unwrap();
        let orders: Vec<Vec<i64>> = vec![
            vec![0, 1, 2, 3],
            vec![3, 2, 1, 0],
            vec![1, 3, 0, 2],
            vec![2, 0, 3, 1],
        ];
        for ord in orders {
            let v = fam.rho_volume_ordered(&ord, &window).unwrap();
            assert!((v - canon).abs() <= 1e-10 * canon.abs().max(1.0), "{ord:?}");
        }
    }

    #[test]
    fn interval_table_matches_per_interior_recursion() {
        let fam = ising(0.5);
        let span = Interval::new(0, 3).unwrap();
        let window = Word::new(-1, vec![0, 0, 0, 0, 0, 1]);
        let table = fam.gamma_interval_table(span, &window, 1 << 20).unwrap();
        let total: f64 = table.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for (syms, p) in &table {
            let mut probe = window.clone();
            for (t, &s) in syms.iter().enumerate() {
                probe.set(t as i64, s);
            }
            let q = fam.gamma_volume(&[0, 1, 2, 3], &probe).unwrap();
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn golden_mean_table_respects_grammar() {
        let fam = golden_mean_spec();
        let w = Word::new(-1, vec![0, 1, 0]);
        assert!((fam.rho_at(&w, 0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let w = Word::new(-1, vec![1, 1, 0]);
        assert_eq!(fam.rho_volume(&[0], &w).unwrap(), 0.0);
        // forced corner: right neighbor 1 forces symbol 0
        let w = Word::new(-1, vec![0, 0, 1]);
        assert!((fam.rho_at(&w, 0).unwrap() - 1.0).abs() < 1e-15);
        // distribution over an interval sums to one
        let span = Interval::new(0, 2).unwrap();
        let window = Word::new(-2, vec![0, 0, 0, 0, 0, 1, 0]);
        let table = fam.gamma_interval_table(span, &window, 1 << 20).unwrap();
        let total: f64 = table.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        // right neighbor 1 kills interiors ending in 1: 000 010 100 remain
        assert_eq!(table.len(), 3);
    }

    #[test]
    fn golden_mean_table_matches_chain_conditionals() {
        // the table equals the single-site conditionals of the Markov chain
        // with P(0|0) = 1/2 on the golden-mean grammar, so multi-site
        // conditionals must reproduce that chain's exact path-weight ratios
        let fam = golden_mean_spec();
        let chain =
            oracle::TransferModel::from_matrix(&[vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
        // a flip at the peeled site can exit the grammar while still carrying
        // summed-out mass; this window is the smallest case where dropping
        // that term would give 2/3 instead of the true 2/5
        let window = Word::new(-1, vec![0, 1, 0, 0]);
        let v = fam.rho_pair(0, 1, &window, 1e-12).unwrap();
        assert!((v - 0.4).abs() < 1e-14, "{v}");
        let span = Interval::new(0, 2).unwrap();
        for ctx in [vec![0, 9, 9, 9, 0, 0], vec![0, 9, 9, 9, 1, 0]] {
            for idx in 0..8usize {
                let mut syms = ctx.clone();
                let interior = crate::lattice::unpack(idx, 2, 3);
                syms[1..4].copy_from_slice(&interior);
                let window = Word::new(-1, syms.clone());
                let q = fam.gamma_volume(&[0, 1, 2], &window).unwrap();
                let p = chain.two_sided_conditional(&window, span).unwrap_or(0.0);
                assert!((p - q).abs() < 1e-13, "{syms:?}: {p} vs {q}");
            }
        }
    }

    #[test]
    fn golden_mean_sitewise_mixture_stays_consistent() {
        // a sitewise mixture of corner-forced nearest-neighbor tables is
        // still realizable by a site-dependent chain: each row only ties
        // consecutive transition kernels together, so cycles always close
        let ab = Alphabet::binary();
        let g = Grammar::from_forbidden(1, 2, &[vec![1, 1]]).unwrap();
        let t_half = vec![1.0 / 3.0, 1.0, 2.0 / 3.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let t_alt = vec![0.4, 1.0, 0.6, 0.0, 1.0, 1.0, 0.0, 0.0];
        let base = RhoSingleton::from_table(2, 1, 1, t_half).unwrap();
        let alt = RhoSingleton::from_table(2, 1, 1, t_alt).unwrap();
        let mut overrides = BTreeMap::new();
        overrides.insert(1i64, alt);
        let fam = SpecFamily::new(ab, g, None, base, overrides).unwrap();
        let window = Word::new(-1, vec![0, 0, 0, 0, 0]);
        let dist = fam
            .gamma_flip_chain(&[0, 1, 2], &window, 1 << 20, 1e-10)
            .unwrap();
        let total: f64 = dist.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(dist.len(), 5);
    }

    #[test]
    fn flip_chain_agrees_with_peel_on_full_support() {
        let fam = ising(0.5);
        let window = Word::new(-1, vec![0, 0, 0, 0, 0, 1]);
        let dist = fam
            .gamma_flip_chain(&[0, 1, 2, 3], &window, 1 << 20, 1e-10)
            .unwrap();
        for (syms, p) in &dist {
            let mut probe = window.clone();
            for (t, &s) in syms.iter().enumerate() {
                probe.set(t as i64, s);
            }
            let q = fam.gamma_volume(&[0, 1, 2, 3], &probe).unwrap();
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn flip_chain_detects_mixed_coupling() {
        let ab = Alphabet::new(vec!["+", "-"]).unwrap();
        let g = Grammar::full_shift(2);
        let base = RhoSingleton::pair_potential(vec![1.0, -1.0], 0.5).unwrap();
        let hot = RhoSingleton::pair_potential(vec![1.0, -1.0], 0.7).unwrap();
        let mut overrides = BTreeMap::new();
        overrides.insert(0i64, hot);
        let fam = SpecFamily::new(ab, g, None, base, overrides).unwrap();
        let window = Word::new(-1, vec![0, 0, 1, 0]);
        let err = fam
            .gamma_flip_chain(&[0, 1], &window, 1 << 20, 1e-10)
            .unwrap_err();
        match err {
            Error::OrderConsistencyViolated { gap, .. } => assert!(gap > 1e-6, "{gap}"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn weighted_family_reproduces_probabilities() {
        // density p/weight against weights (2, 1) gives conditionals p
        let ab = Alphabet::binary();
        let g = Grammar::full_shift(2);
        let k = RhoSingleton::from_table(2, 0, 0, vec![0.25 / 2.0, 0.75]).unwrap();
        let fam = SpecFamily::new(ab, g, Some(vec![2.0, 1.0]), k, BTreeMap::new()).unwrap();
        let w = Word::new(0, vec![1]);
        assert!((fam.gamma_volume(&[0], &w).unwrap() - 0.75).abs() < 1e-15);
        let w = Word::new(0, vec![0]);
        assert!((fam.gamma_volume(&[0], &w).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn bad_tables_rejected() {
        let ab = Alphabet::binary();
        let g = Grammar::from_forbidden(1, 2, &[vec![1, 1]]).unwrap();
        // mass on the forbidden corner (1, 1, 1)
        let mut t = vec![0.5, 1.0, 0.5, 0.0, 1.0, 1.0, 0.0, 0.0];
        t[7] = 0.1;
        let k = RhoSingleton::from_table(2, 1, 1, t).unwrap();
        assert!(SpecFamily::stationary(ab.clone(), g.clone(), k).is_err());
        // normalization defect on context (0, 0)
        let t = vec![0.5, 1.0, 0.4, 0.0, 1.0, 1.0, 0.0, 0.0];
        let k = RhoSingleton::from_table(2, 1, 1, t).unwrap();
        let err = SpecFamily::stationary(ab.clone(), g.clone(), k).unwrap_err();
        assert!(matches!(err, Error::NormalizationDefect { .. }));
        // zero on an admissible slot
        let t = vec![0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let k = RhoSingleton::from_table(2, 1, 1, t).unwrap();
        let err = SpecFamily::stationary(ab, g, k).unwrap_err();
        assert!(matches!(err, Error::PositivityViolated { .. }));
    }
}
