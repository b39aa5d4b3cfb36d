//! Independent brute-force evaluators used to cross-check kernel code.
//!
//! Everything here works from raw transition weights by exhaustive
//! enumeration and exact path-weight ratios. Nothing in this module calls
//! the kernel or transport code, so agreement between the two routes is
//! evidence, not tautology.

use crate::error::{Error, Result};
use crate::lattice::{pack, unpack, Grammar, Interval, Sym, Word};

/// Stationary finite-memory weight model on a line.
///
/// A state is a word of `memory` symbols; `weights[state * base + a]` is the
/// nonnegative weight of appending symbol `a`. Zero weight encodes a
/// forbidden transition. Rows need not be normalized; conditioning ratios
/// are normalization-free and the induced stationary chain is built from the
/// principal eigenvector when needed.
#[derive(Clone, Debug)]
pub struct TransferModel {
    base: usize,
    memory: usize,
    weights: Vec<f64>,
}

/// One step of a boundary-envelope trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpreadStep {
    /// Volume index (growth steps beyond the base volume).
    pub k: usize,
    /// Smallest probed value.
    pub lo: f64,
    /// Largest probed value.
    pub hi: f64,
    /// Number of boundary words probed.
    pub probes: usize,
}

impl SpreadStep {
    /// Envelope width.
    pub fn spread(&self) -> f64 {
        self.hi - self.lo
    }
}

impl TransferModel {
    /// Builds a model from raw weights; `weights.len()` must be `base^(memory+1)`.
    pub fn new(base: usize, memory: usize, weights: Vec<f64>) -> Result<Self> {
        let states = base.pow(memory as u32);
        if weights.len() != states * base {
            return Err(Error::Config(format!(
                "weight table has {} entries, expected {}",
                weights.len(),
                states * base
            )));
        }
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::Config("weights must be finite and nonnegative".into()));
        }
        let m = Self {
            base,
            memory,
            weights,
        };
        m.check_irreducible()?;
        Ok(m)
    }

    /// Order-1 model from a square matrix of transition weights.
    pub fn from_matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let base = rows.len();
        let mut weights = Vec::with_capacity(base * base);
        for r in rows {
            if r.len() != base {
                return Err(Error::Config("transition matrix must be square".into()));
            }
            weights.extend_from_slice(r);
        }
        Self::new(base, 1, weights)
    }

    /// Memoryless model from symbol weights.
    pub fn iid(probs: &[f64]) -> Result<Self> {
        Self::new(probs.len(), 0, probs.to_vec())
    }

    /// Alphabet size.
    pub fn alphabet_len(&self) -> usize {
        self.base
    }

    /// State word length.
    pub fn memory(&self) -> usize {
        self.memory
    }

    /// Number of states.
    pub fn state_count(&self) -> usize {
        self.base.pow(self.memory as u32)
    }

    /// Weight of appending `sym` to the state encoding `state_word`.
    pub fn weight(&self, state_word: &[Sym], sym: Sym) -> f64 {
        debug_assert_eq!(state_word.len(), self.memory);
        let s = pack(state_word, self.base);
        self.weights[s * self.base + sym as usize]
    }

    fn live_states(&self) -> Vec<bool> {
        let states = self.state_count();
        let mut live = vec![false; states];
        for s in 0..states {
            for a in 0..self.base {
                if self.weights[s * self.base + a] > 0.0 {
                    live[s] = true;
                    live[self.next_state(s, a as Sym)] = true;
                }
            }
        }
        live
    }

    fn next_state(&self, state: usize, sym: Sym) -> usize {
        if self.memory == 0 {
            return 0;
        }
        let drop = self.base.pow((self.memory - 1) as u32);
        (state % drop) * self.base + sym as usize
    }

    fn check_irreducible(&self) -> Result<()> {
        let states = self.state_count();
        let live = self.live_states();
        let Some(start) = live.iter().position(|&b| b) else {
            return Err(Error::Config("all transition weights are zero".into()));
        };
        let mut fwd = vec![false; states];
        let mut stack = vec![start];
        fwd[start] = true;
        while let Some(s) = stack.pop() {
            for a in 0..self.base {
                if self.weights[s * self.base + a] > 0.0 {
                    let t = self.next_state(s, a as Sym);
                    if !fwd[t] {
                        fwd[t] = true;
                        stack.push(t);
                    }
                }
            }
        }
        let mut bwd = vec![false; states];
        let mut stack = vec![start];
        bwd[start] = true;
        while let Some(s) = stack.pop() {
            for p in 0..states {
                for a in 0..self.base {
                    if self.weights[p * self.base + a] > 0.0
                        && self.next_state(p, a as Sym) == s
                        && !bwd[p]
                    {
                        bwd[p] = true;
                        stack.push(p);
                    }
                }
            }
        }
        for s in 0..states {
            if live[s] && !(fwd[s] && bwd[s]) {
                return Err(Error::Config(format!(
                    "weight digraph is not irreducible: state {s} not bi-reachable"
                )));
            }
        }
        Ok(())
    }

    /// Principal eigenvalue and right eigenvector by shifted power iteration.
    ///
    /// The vector is positive on live states and normalized to sum 1; the
    /// residual `max |Wv - lambda v|` is driven below `1e-14 * lambda`.
    pub fn principal_right(&self) -> Result<(f64, Vec<f64>)> {
        self.power_iterate(false)
    }

    /// Principal left eigenvector (same eigenvalue), normalized to sum 1.
    pub fn principal_left(&self) -> Result<(f64, Vec<f64>)> {
        self.power_iterate(true)
    }

    fn apply(&self, v: &[f64], transpose: bool, out: &mut [f64]) {
        let states = self.state_count();
        out.iter_mut().for_each(|x| *x = 0.0);
        for s in 0..states {
            for a in 0..self.base {
                let w = self.weights[s * self.base + a];
                if w == 0.0 {
                    continue;
                }
                let t = self.next_state(s, a as Sym);
                if transpose {
                    out[t] += w * v[s];
                } else {
                    out[s] += w * v[t];
                }
            }
        }
    }

    fn power_iterate(&self, transpose: bool) -> Result<(f64, Vec<f64>)> {
        let states = self.state_count();
        let live = self.live_states();
        let shift: f64 = 1.0 + self.weights.iter().cloned().fold(0.0, f64::max);
        let mut v: Vec<f64> = live.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let norm: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= norm);
        let mut next = vec![0.0; states];
        let mut lambda = 0.0;
        let mut best_res = f64::INFINITY;
        let mut stalled = 0usize;
        for _ in 0..200_000 {
            self.apply(&v, transpose, &mut next);
            for s in 0..states {
                next[s] += shift * v[s];
            }
            let total: f64 = next.iter().sum();
            lambda = total - shift;
            let inv = 1.0 / total;
            next.iter_mut().for_each(|x| *x *= inv);
            std::mem::swap(&mut v, &mut next);
            // residual of the unshifted operator; push well below the 1e-14
            // contract so the vector itself is good to ~1e-15
            self.apply(&v, transpose, &mut next);
            let mut res = 0.0f64;
            for s in 0..states {
                res = res.max((next[s] - lambda * v[s]).abs());
            }
            let scale = lambda.max(1.0);
            if res <= 1e-16 * scale {
                break;
            }
            if res < best_res * 0.999 {
                best_res = res;
                stalled = 0;
            } else {
                stalled += 1;
                if stalled > 64 {
                    break;
                }
            }
        }
        self.apply(&v, transpose, &mut next);
        let mut res = 0.0f64;
        for s in 0..states {
            res = res.max((next[s] - lambda * v[s]).abs());
        }
        if res > 1e-14 * lambda.max(1.0) {
            return Err(Error::CannotCertify {
                target: 1e-14,
                detail: format!("power iteration stalled at residual {res:e}"),
            });
        }
        let total: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= total);
        Ok((lambda, v))
    }

    /// Row-stochastic chain induced by the principal eigenvector, with its
    /// stationary state distribution.
    ///
    /// Returns `(rows, pi)` where `rows[state][a]` is the transition
    /// probability and `pi[state]` the invariant weight (sums to 1 on live
    /// states). For already-stochastic weights this reproduces them.
    pub fn stationary_chain(&self) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let states = self.state_count();
        let (lambda, v) = self.principal_right()?;
        let mut rows = vec![vec![0.0; self.base]; states];
        for s in 0..states {
            if v[s] == 0.0 {
                continue;
            }
            for a in 0..self.base {
                let w = self.weights[s * self.base + a];
                if w > 0.0 {
                    rows[s][a] = w * v[self.next_state(s, a as Sym)] / (lambda * v[s]);
                }
            }
        }
        // invariant distribution of the induced chain: left eigenvector of
        // the stochastic matrix at eigenvalue 1
        let mut flat = Vec::with_capacity(states * self.base);
        for r in &rows {
            flat.extend_from_slice(r);
        }
        let chain = TransferModel {
            base: self.base,
            memory: self.memory,
            weights: flat,
        };
        let (_, mut pi) = chain.power_iterate(true)?;
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|x| *x /= total);
        Ok((rows, pi))
    }

    /// Stationary distribution over states of a stochastic model.
    ///
    /// Residual below `1e-14`; errors if the rows are not probability
    /// vectors (up to `1e-12`) on live states.
    pub fn invariant_measure(&self) -> Result<Vec<f64>> {
        let live = self.live_states();
        for s in 0..self.state_count() {
            if !live[s] {
                continue;
            }
            let row: f64 = (0..self.base).map(|a| self.weights[s * self.base + a]).sum();
            if (row - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "state {s} row sums to {row}, not a probability vector"
                )));
            }
        }
        let (_, pi) = self.power_iterate(true)?;
        Ok(pi)
    }

    /// Log weight of the path factors at positions `span` inside `window`.
    ///
    /// The window must cover `span` extended by `memory` sites to the left.
    /// Returns `None` when some factor has zero weight.
    pub fn path_log_weight(&self, window: &Word, span: Interval) -> Result<Option<f64>> {
        let need_lo = span.lo() - self.memory as i64;
        if window.start() > need_lo || window.end() < span.hi() {
            return Err(Error::WindowTooShort {
                site: span.lo(),
                needed: (span.hi() - need_lo + 1) as usize,
                available: window.len(),
            });
        }
        let mut acc = 0.0f64;
        let mut state = Vec::with_capacity(self.memory);
        for i in span.lo() - self.memory as i64..span.lo() {
            state.push(window.get(i).unwrap());
        }
        for i in span.sites() {
            let a = window.get(i).unwrap();
            let w = self.weight(&state, a);
            if w == 0.0 {
                return Ok(None);
            }
            acc += w.ln();
            if self.memory > 0 {
                state.remove(0);
                state.push(a);
            }
        }
        Ok(Some(acc))
    }

    /// Exact two-sided conditional of the word on `span` inside `window`.
    ///
    /// Computes the ratio of path weights over `[lo, hi + memory]`, the
    /// positions whose factors involve `span`; the stationary and
    /// normalization factors cancel exactly, so no eigendata is needed. The
    /// window must cover `[lo - memory, hi + memory]`.
    pub fn two_sided_conditional(&self, window: &Word, span: Interval) -> Result<f64> {
        let factor_span = Interval::new(span.lo(), span.hi() + self.memory as i64)?;
        let num = self.path_log_weight(window, factor_span)?;
        let mut denom = 0.0f64;
        let mut num_val = 0.0f64;
        let n = span.len();
        let total = (self.base as f64).powi(n as i32);
        if total > 2f64.powi(26) {
            return Err(Error::VolumeTooLarge {
                requested: total,
                budget: 1 << 26,
            });
        }
        let mut probe = window.clone();
        let count = self.base.pow(n as u32);
        for idx in 0..count {
            let syms = unpack(idx, self.base, n);
            for (j, &s) in syms.iter().enumerate() {
                probe.set(span.lo() + j as i64, s);
            }
            if let Some(lw) = self.path_log_weight(&probe, factor_span)? {
                denom += lw.exp();
            }
        }
        if denom <= 0.0 {
            return Err(Error::ZeroDenominator(format!(
                "no admissible completion on {span}"
            )));
        }
        if let Some(lw) = num {
            num_val = lw.exp();
        }
        Ok(num_val / denom)
    }
}

/// Finite-volume Gibbs distribution over admissible interiors by direct
/// normalization.
///
/// `log_weight` maps the merged window (boundary overwritten by an interior
/// candidate) to a relative log weight; only differences matter. Returns
/// `(interior, probability)` pairs in lexicographic interior order.
pub fn finite_volume_gibbs(
    grammar: &Grammar,
    span: Interval,
    window: &Word,
    log_weight: &dyn Fn(&Word) -> f64,
    budget: usize,
) -> Result<Vec<(Vec<Sym>, f64)>> {
    let total = (grammar.alphabet_len() as f64).powi(span.len() as i32);
    if total > budget as f64 {
        return Err(Error::VolumeTooLarge {
            requested: total,
            budget,
        });
    }
    let left: Vec<Sym> = (window.start()..span.lo())
        .map(|i| window.get(i).unwrap())
        .collect();
    let right: Vec<Sym> = (span.hi() + 1..=window.end())
        .map(|i| window.get(i).unwrap())
        .collect();
    let interiors = grammar.enumerate_interior(span, &left, &right)?;
    if interiors.is_empty() {
        return Err(Error::ZeroDenominator(format!(
            "no admissible interior on {span}"
        )));
    }
    let mut logs = Vec::with_capacity(interiors.len());
    for syms in &interiors {
        let mut probe = window.clone();
        for (j, &s) in syms.iter().enumerate() {
            probe.set(span.lo() + j as i64, s);
        }
        logs.push(log_weight(&probe));
    }
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::ZeroDenominator(format!(
            "all interior weights vanish on {span}"
        )));
    }
    let shifted: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = shifted.iter().sum();
    Ok(interiors
        .into_iter()
        .zip(shifted)
        .map(|(w, e)| (w, e / z))
        .collect())
}

/// Boundary-envelope trace of a conditional expectation over growing volumes.
///
/// For each step `k` in `0..steps`, `boundaries(k)` supplies the probe words
/// and `eval(k, boundary)` the conditional value; the envelope is the min
/// and max over probes. The caller chooses the volume family; this helper
/// only organizes the trace.
pub fn spread_trace(
    steps: usize,
    boundaries: &mut dyn FnMut(usize) -> Result<Vec<Word>>,
    eval: &mut dyn FnMut(usize, &Word) -> Result<f64>,
) -> Result<Vec<SpreadStep>> {
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        let probes = boundaries(k)?;
        if probes.is_empty() {
            return Err(Error::Config(format!("no boundary probes at step {k}")));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for b in &probes {
            let v = eval(k, b)?;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        out.push(SpreadStep {
            k,
            lo,
            hi,
            probes: probes.len(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn markov_rows() -> Vec<Vec<f64>> {
        vec![vec![0.7, 0.3], vec![0.4, 0.6]]
    }

    #[test]
    fn invariant_measure_of_two_state_chain() {
        // balance pi0 * 0.3 = pi1 * 0.4 gives pi = (4/7, 3/7)
        let m = TransferModel::from_matrix(&markov_rows()).unwrap();
        let pi = m.invariant_measure().unwrap();
        assert!((pi[0] - 4.0 / 7.0).abs() < 1e-14);
        assert!((pi[1] - 3.0 / 7.0).abs() < 1e-14);
    }

    #[test]
    fn two_sided_conditional_matches_hand_ratio() {
        let m = TransferModel::from_matrix(&markov_rows()).unwrap();
        // window sites -1..=2, conditional of sigma_0 = 1 given 0 . 0 at +-1:
        // factors: P(1|0) P(0|1) = 0.3 * 0.4 = 0.12 against
        // P(0|0) P(0|0) = 0.49, total 0.61
        let w = Word::new(-1, vec![0, 1, 0, 0]);
        let span = Interval::new(0, 0).unwrap();
        let p = m.two_sided_conditional(&w, span).unwrap();
        assert!((p - 0.12 / 0.61).abs() < 1e-15);
        assert!((p - 0.19672131147540983).abs() < 1e-15);
    }

    #[test]
    fn two_sided_conditional_iid_ignores_context() {
        let m = TransferModel::iid(&[0.25, 0.75]).unwrap();
        let w = Word::new(-1, vec![0, 1, 1]);
        let p = m
            .two_sided_conditional(&w, Interval::new(0, 0).unwrap())
            .unwrap();
        assert!((p - 0.75).abs() < 1e-15);
    }

    #[test]
    fn ising_conditional_is_logistic() {
        // spins +1,-1 for symbols 0,1; weight exp(beta * s * t), beta = 0.5
        let beta = 0.5f64;
        let e = |s: f64, t: f64| (beta * s * t).exp();
        let rows = vec![vec![e(1.0, 1.0), e(1.0, -1.0)], vec![e(-1.0, 1.0), e(-1.0, -1.0)]];
        let m = TransferModel::from_matrix(&rows).unwrap();
        // gamma_0(+ | + +) = 1 / (1 + exp(-2 * beta * 2)) = logistic(2)
        let w = Word::new(-1, vec![0, 0, 0]);
        let p = m
            .two_sided_conditional(&w, Interval::new(0, 0).unwrap())
            .unwrap();
        let expect = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((p - expect).abs() < 1e-15);
        assert!((p - 0.8807970779778823).abs() < 1e-15);
    }

    #[test]
    fn parry_chain_of_golden_mean() {
        // adjacency of the golden-mean shift; Perron root is the golden ratio
        let m = TransferModel::from_matrix(&[vec![1.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let (lambda, _v) = m.principal_right().unwrap();
        let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
        assert!((lambda - phi).abs() < 1e-13);
        let (rows, pi) = m.stationary_chain().unwrap();
        // Parry chain: P(0|0) = 1/phi, P(1|0) = 1/phi^2, P(0|1) = 1
        assert!((rows[0][0] - 1.0 / phi).abs() < 1e-13);
        assert!((rows[0][1] - 1.0 / (phi * phi)).abs() < 1e-13);
        assert!((rows[1][0] - 1.0).abs() < 1e-13);
        assert!(rows[1][1] == 0.0);
        // stationary: pi0 = phi^2 / (1 + phi^2), pi1 = 1 / (1 + phi^2)
        let p0 = phi * phi / (1.0 + phi * phi);
        assert!((pi[0] - p0).abs() < 1e-13);
        assert!((pi[0] - 0.7236067977499789).abs() < 1e-12);
    }

    #[test]
    fn irreducibility_rejected_for_split_graph() {
        let err = TransferModel::from_matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn finite_volume_gibbs_matches_conditional() {
        // pair weights reproduce the transfer conditional on a window
        let beta = 0.25f64;
        let spin = |s: Sym| if s == 0 { 1.0 } else { -1.0 };
        let g = Grammar::full_shift(2);
        let span = Interval::new(0, 2).unwrap();
        let window = Word::new(-1, vec![0, 0, 0, 0, 1]);
        let logw = |w: &Word| {
            let mut acc = 0.0;
            for i in -1..3 {
                acc += beta * spin(w.get(i).unwrap()) * spin(w.get(i + 1).unwrap());
            }
            acc
        };
        let dist = finite_volume_gibbs(&g, span, &window, &logw, 1 << 20).unwrap();
        let total: f64 = dist.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-14);
        let e = |s: f64, t: f64| (beta * s * t).exp();
        let rows = vec![vec![e(1.0, 1.0), e(1.0, -1.0)], vec![e(-1.0, 1.0), e(-1.0, -1.0)]];
        let m = TransferModel::from_matrix(&rows).unwrap();
        for (syms, p) in &dist {
            let mut probe = window.clone();
            for (j, &s) in syms.iter().enumerate() {
                probe.set(j as i64, s);
            }
            let q = m.two_sided_conditional(&probe, span).unwrap();
            assert!((p - q).abs() < 1e-13, "interior {syms:?}: {p} vs {q}");
        }
    }

    #[test]
    fn spread_trace_contracts_for_chain_conditionals() {
        // P(sigma_0 = 0 | past 0, boundary symbol at distance k+1), interior
        // sites 1..=k marginalized by direct normalization
        let m = TransferModel::from_matrix(&markov_rows()).unwrap();
        let g = Grammar::full_shift(2);
        let trace = spread_trace(
            6,
            &mut |k| {
                let site = k as i64 + 1;
                Ok(vec![Word::new(site, vec![0]), Word::new(site, vec![1])])
            },
            &mut |k, b| {
                let span = Interval::new(0, k as i64).unwrap();
                let mut window = Word::new(-1, vec![0; k + 3]);
                window.set(k as i64 + 1, b.get(k as i64 + 1).unwrap());
                let factor_span = Interval::new(0, k as i64 + 1).unwrap();
                let logw = |w: &Word| {
                    m.path_log_weight(w, factor_span)
                        .unwrap()
                        .unwrap_or(f64::NEG_INFINITY)
                };
                let dist = finite_volume_gibbs(&g, span, &window, &logw, 1 << 20)?;
                Ok(dist
                    .iter()
                    .filter(|(syms, _)| syms[0] == 0)
                    .map(|(_, p)| p)
                    .sum())
            },
        )
        .unwrap();
        for pair in trace.windows(2) {
            assert!(pair[1].hi <= pair[0].hi);
            assert!(pair[1].lo >= pair[0].lo);
        }
        assert!(trace.last().unwrap().spread() < trace[0].spread() * 0.01);
    }
}
