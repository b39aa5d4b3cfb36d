//! Thin command-line front end: load a model file, run one certified
//! operation, print a deterministic report.
//!
//! Exit codes: 0 when every recorded check passes, 1 when at least one
//! check fails, 2 when the input or the requested operation is invalid
//! (bad file, wrong side, uncertifiable target).

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use gibbschain::certified::CertifiedValue;
use gibbschain::error::{Error, Result};
use gibbschain::kernels::{
    check_singleton_normalization, LisFamily, MemoryBound, SpecFamily,
};
use gibbschain::lattice::{Alphabet, Grammar, Interval, Sym, Word};
use gibbschain::model::{BuiltFamily, Model, ModelKind, ModelSpec};
use gibbschain::oracle::{finite_volume_gibbs, TransferModel};
use gibbschain::rates::{
    criterion_suite_lis, criterion_suite_spec, dobrushin_matrix_lis, dobrushin_matrix_spec,
    egf_certificate_lis, egf_certificate_spec, future_flip_bound, gf_certificate,
    induced_lis_flip_gap, induced_spec_flip_gap, oscillation_lis, oscillation_spec,
    past_flip_bound, past_flip_bound_spec, rate_profile, CriterionOptions, ProfileForm,
};
use gibbschain::report::{Format, Report};
use gibbschain::transport::{
    composition_gap, lis_to_spec, ratio_tail, roundtrip_bc, roundtrip_cb, spec_to_lis, Limits,
    PastProbe, RoundtripReport, SpecProbe,
};

#[derive(Parser)]
#[command(
    name = "gibbschain",
    version,
    about = "Certified numerics for chains and one-dimensional Gibbs models"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Comparison tolerance; defaults to the model file's setting.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    /// Deepest right-truncation depth for past-conditioned limits.
    #[arg(long, global = true, default_value_t = 64)]
    n_max: usize,
    /// Most volume-growing steps for two-sided limits.
    #[arg(long, global = true, default_value_t = 64)]
    k_max: usize,
    /// Enumeration budget per measurement.
    #[arg(long, global = true, default_value_t = 1 << 16)]
    budget: usize,
    /// Most boundary words probed per volume step before sampling.
    #[arg(long, global = true, default_value_t = 4096)]
    probes: usize,
    /// Seed for sampled fallbacks.
    #[arg(long, global = true, default_value_t = 0x5eed)]
    seed: u64,
    /// Output format: text or machine.
    #[arg(long, global = true, default_value = "text")]
    format: String,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate single-site kernels conditioned on the past.
    EvalLis { model: PathBuf },
    /// Evaluate finite-volume kernels conditioned on both sides.
    EvalSpec { model: PathBuf },
    /// Transport a past-conditioned family to two-sided kernels.
    LisToSpec { model: PathBuf },
    /// Transport a two-sided family to past-conditioned kernels.
    SpecToLis { model: PathBuf },
    /// Compose both transports and compare against the original family.
    Roundtrip { model: PathBuf },
    /// Rebuild volume kernels from singletons and cross-check them.
    Reconstruct { model: PathBuf },
    /// Run the uniqueness criteria suite.
    Criteria { model: PathBuf },
    /// Measure oscillation rates, sensitivity matrices, and flip bounds.
    Rates { model: PathBuf },
    /// Cross-validate against transfer and direct-normalization oracles.
    OracleCheck { model: PathBuf },
}

impl Cmd {
    fn model_path(&self) -> &Path {
        match self {
            Cmd::EvalLis { model }
            | Cmd::EvalSpec { model }
            | Cmd::LisToSpec { model }
            | Cmd::SpecToLis { model }
            | Cmd::Roundtrip { model }
            | Cmd::Reconstruct { model }
            | Cmd::Criteria { model }
            | Cmd::Rates { model }
            | Cmd::OracleCheck { model } => model,
        }
    }
}

struct Ctx {
    file: ModelSpec,
    model: Model,
    tolerance: f64,
    limits: Limits,
    budget: usize,
}

fn main() {
    std::process::exit(run(Cli::parse()));
}

fn run(cli: Cli) -> i32 {
    let format = match cli.format.parse::<Format>() {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let file = match ModelSpec::from_file(cli.command.model_path()) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let model = match file.build() {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let ctx = Ctx {
        tolerance: cli.tolerance.unwrap_or(model.tolerance),
        limits: Limits {
            n_max: cli.n_max,
            k_max: cli.k_max,
            probe_budget: cli.probes,
            volume_budget: 1 << 20,
            seed: cli.seed,
        },
        budget: cli.budget,
        file,
        model,
    };
    let report = match dispatch(&cli.command, &ctx) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    print!("{}", report.render(format));
    report.exit_code()
}

fn dispatch(cmd: &Cmd, ctx: &Ctx) -> Result<Report> {
    match cmd {
        Cmd::EvalLis { .. } => eval_lis(ctx),
        Cmd::EvalSpec { .. } => eval_spec(ctx),
        Cmd::LisToSpec { .. } => lis_to_spec_cmd(ctx),
        Cmd::SpecToLis { .. } => spec_to_lis_cmd(ctx),
        Cmd::Roundtrip { .. } => roundtrip_cmd(ctx),
        Cmd::Reconstruct { .. } => reconstruct_cmd(ctx),
        Cmd::Criteria { .. } => criteria_cmd(ctx),
        Cmd::Rates { .. } => rates_cmd(ctx),
        Cmd::OracleCheck { .. } => oracle_check_cmd(ctx),
    }
}

// ---------------------------------------------------------------- helpers

fn alphabet_of(m: &Model) -> &Alphabet {
    match &m.family {
        BuiltFamily::Lis(f) => f.alphabet(),
        BuiltFamily::Spec(s) => s.alphabet(),
    }
}

fn lbl(ctx: &Ctx, syms: &[Sym]) -> String {
    let a = alphabet_of(&ctx.model);
    syms.iter().map(|&s| a.name(s)).collect()
}

/// Admissible words of the given length, lexicographic, truncated to `cap`.
fn words_of(g: &Grammar, len: usize, cap: usize) -> Result<Vec<Vec<Sym>>> {
    if len == 0 {
        return Ok(vec![Vec::new()]);
    }
    let span = Interval::new(0, len as i64 - 1)?;
    let mut all = g.enumerate_interior(span, &[], &[])?;
    all.truncate(cap);
    Ok(all)
}

/// Admissible symbols directly right of `left`, in symbol order.
fn admissible_next(g: &Grammar, left: &[Sym]) -> Result<Vec<Sym>> {
    let ord = g.order().min(left.len());
    let ctxw = &left[left.len() - ord..];
    let span = Interval::new(0, 0)?;
    Ok(g.enumerate_interior(span, ctxw, &[])?
        .into_iter()
        .map(|w| w[0])
        .collect())
}

/// Grows the word to the right with the first admissible symbol each step.
fn extend_right(g: &Grammar, w: &mut Word, count: usize) -> Result<()> {
    for _ in 0..count {
        let next = admissible_next(g, w.syms())?
            .into_iter()
            .next()
            .ok_or_else(|| Error::GrammarDeadEnd {
                word: w.syms().to_vec(),
                side: "right",
            })?;
        w.push(next);
    }
    Ok(())
}

/// Grows the word to the left with the first admissible symbol each step.
fn extend_left(g: &Grammar, w: &mut Word, count: usize) -> Result<()> {
    for _ in 0..count {
        let start = w.start() - 1;
        let ord = g.order().min(w.len());
        let right_ctx = w.syms()[..ord].to_vec();
        let cands = g.enumerate_interior(Interval::new(start, start)?, &[], &right_ctx)?;
        let first = cands.into_iter().next().ok_or_else(|| Error::GrammarDeadEnd {
            word: w.syms().to_vec(),
            side: "left",
        })?;
        let head = Word::new(start, vec![first[0]]);
        *w = head.join(w)?;
    }
    Ok(())
}

fn unpack_word(mut idx: usize, base: usize, len: usize) -> Vec<Sym> {
    let mut out = vec![0 as Sym; len];
    for pos in (0..len).rev() {
        out[pos] = (idx % base) as Sym;
        idx /= base;
    }
    out
}

fn need_lis<'a>(ctx: &'a Ctx, cmd: &str) -> Result<&'a LisFamily> {
    ctx.model.lis().ok_or_else(|| {
        Error::Config(format!(
            "{cmd} needs a past-conditioned family, but model {} declares the two-sided side",
            ctx.model.name
        ))
    })
}

fn need_spec<'a>(ctx: &'a Ctx, cmd: &str) -> Result<&'a SpecFamily> {
    ctx.model.spec().ok_or_else(|| {
        Error::Config(format!(
            "{cmd} needs a two-sided family, but model {} declares the past-conditioned side",
            ctx.model.name
        ))
    })
}

/// Exact transfer model built from a finite-memory kernel table; `None`
/// when the memory is unbounded or the induced weight matrix is not
/// irreducible.
fn transfer_from_table(fam: &LisFamily) -> Option<TransferModel> {
    let m = match fam.memory_bound() {
        MemoryBound::Exact(m) => m,
        MemoryBound::Decaying(_) => return None,
    };
    let base = fam.alphabet().len();
    let states = base.checked_pow(m as u32)?;
    let mut weights = vec![0.0f64; states * base];
    for s in 0..states {
        let past = if m == 0 {
            Word::empty(0)
        } else {
            Word::new(-(m as i64), unpack_word(s, base, m))
        };
        for a in 0..base {
            // inadmissible contexts keep weight zero and drop out
            if let Ok((v, _)) = fam.eval(0, &past, a as Sym) {
                weights[s * base + a] = v;
            }
        }
    }
    TransferModel::new(base, m, weights).ok()
}

/// Pair-weight transfer model of a nearest-neighbour spin density; `None`
/// for other kinds or when a per-symbol tilt breaks the product form.
fn ising_transfer(ctx: &Ctx) -> Option<TransferModel> {
    if !matches!(ctx.model.kind, ModelKind::IsingSpec)
        || ctx.file.params.scale.is_some()
        || ctx.file.params.perturb_beta.is_some()
    {
        return None;
    }
    let beta = ctx.file.params.beta?;
    let spins = ctx.file.params.spins.clone()?;
    let n = spins.len();
    let mut w = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            w[i * n + j] = (beta * spins[i] * spins[j]).exp();
        }
    }
    TransferModel::new(n, 1, w).ok()
}

/// log Boltzmann weight of a window under the nearest-neighbour coupling.
fn ising_log_weight(ctx: &Ctx) -> Option<impl Fn(&Word) -> f64> {
    if !matches!(ctx.model.kind, ModelKind::IsingSpec)
        || ctx.file.params.scale.is_some()
        || ctx.file.params.perturb_beta.is_some()
    {
        return None;
    }
    let beta = ctx.file.params.beta?;
    let spins = ctx.file.params.spins.clone()?;
    Some(move |w: &Word| {
        let mut e = 0.0;
        for i in w.start()..w.end() {
            e += spins[w.get(i).unwrap() as usize] * spins[w.get(i + 1).unwrap() as usize];
        }
        beta * e
    })
}

// ------------------------------------------------------------------ eval

fn eval_lis(ctx: &Ctx) -> Result<Report> {
    let mut rep = Report::new("eval-lis", &ctx.model.name);
    rep.text("side", ctx.model.side());
    let tol = ctx.tolerance;
    match &ctx.model.family {
        BuiltFamily::Lis(fam) => {
            let g = fam.grammar();
            let depth = match fam.memory_bound() {
                MemoryBound::Exact(m) => m.max(1),
                MemoryBound::Decaying(_) => 4,
            };
            for p in words_of(g, depth, 8)? {
                let past = Word::new(-(depth as i64), p.clone());
                let mut total = CertifiedValue::exact(0.0);
                for a in fam.alphabet().syms() {
                    let (v, r) = fam.eval(0, &past, a)?;
                    let cv = CertifiedValue::new(v, r, 0);
                    rep.certified(
                        &format!("f.{}.{}", lbl(ctx, &p), fam.alphabet().name(a)),
                        cv,
                    );
                    total = total.add(&cv);
                }
                rep.check(
                    &format!("norm.{}", lbl(ctx, &p)),
                    (total.value - 1.0).abs() <= total.radius + tol.max(1e-12),
                );
            }
            match check_singleton_normalization(fam, tol.max(1e-9)) {
                Ok(()) => {
                    rep.check("normalization", true);
                }
                Err(e) => {
                    rep.text("normalization.detail", &e.to_string());
                    rep.check("normalization", false);
                }
            }
        }
        BuiltFamily::Spec(spec) => {
            // induced past-conditioned kernels, certified by volume growth;
            // the floor leaves headroom for contraction rates near tanh(1)
            let g = spec.grammar();
            let (rl, _) = spec.reach();
            let depth = (rl + g.order()).max(2);
            let span = Interval::new(0, 0)?;
            let target = tol.max(1e-8);
            for p in words_of(g, depth, 6)? {
                let past = Word::new(-(depth as i64), p.clone());
                let mut sum = 0.0f64;
                let mut rad = 0.0f64;
                for a in admissible_next(g, &p)? {
                    let env = spec_to_lis(spec, span, &[vec![a]], &past, target, &ctx.limits)?;
                    rep.certified(
                        &format!("g.{}.{}", lbl(ctx, &p), spec.alphabet().name(a)),
                        env.value,
                    );
                    sum += env.value.value;
                    rad += env.value.radius;
                }
                rep.check(
                    &format!("norm.{}", lbl(ctx, &p)),
                    (sum - 1.0).abs() <= rad + tol.max(1e-12),
                );
            }
        }
    }
    Ok(rep)
}

fn eval_spec(ctx: &Ctx) -> Result<Report> {
    let mut rep = Report::new("eval-spec", &ctx.model.name);
    rep.text("side", ctx.model.side());
    let tol = ctx.tolerance;
    match &ctx.model.family {
        BuiltFamily::Spec(spec) => {
            let g = spec.grammar();
            let (rl, rr) = spec.reach();
            let words = words_of(g, rl + 1 + rr, 12)?;
            let mut groups: BTreeMap<(Vec<Sym>, Vec<Sym>), f64> = BTreeMap::new();
            for w in &words {
                let window = Word::new(-(rl as i64), w.clone());
                let v = spec.gamma_volume(&[0], &window)?;
                rep.exact(&format!("gamma.{}", lbl(ctx, w)), v);
                *groups
                    .entry((w[..rl].to_vec(), w[rl + 1..].to_vec()))
                    .or_insert(0.0) += v;
            }
            for ((l, r), sum) in &groups {
                let mut key = lbl(ctx, l);
                key.push('_');
                key.push_str(&lbl(ctx, r));
                rep.check(&format!("norm.{key}"), (sum - 1.0).abs() <= tol.max(1e-12));
            }
            for w in words_of(g, rl + 2 + rr, 4)? {
                let window = Word::new(-(rl as i64), w.clone());
                let v = spec.gamma_volume(&[0, 1], &window)?;
                rep.exact(&format!("gamma2.{}", lbl(ctx, &w)), v);
            }
        }
        BuiltFamily::Lis(fam) => {
            // induced two-sided kernels via certified interval ratios
            let g = fam.grammar();
            let d = 3usize;
            let pad = match fam.memory_bound() {
                MemoryBound::Exact(m) => m + 1,
                MemoryBound::Decaying(_) => 36,
            };
            let target = tol.max(1e-9);
            let words = words_of(g, 2 * d + 1, 6)?;
            let span0 = Interval::new(0, 0)?;
            let mut seen: BTreeSet<(Vec<Sym>, Vec<Sym>)> = BTreeSet::new();
            for w in &words {
                let key = (w[..d].to_vec(), w[d + 1..].to_vec());
                if !seen.insert(key.clone()) {
                    continue;
                }
                if seen.len() > 4 {
                    break;
                }
                let centers = g.enumerate_interior(span0, &key.0, &key.1)?;
                let mut sum = 0.0f64;
                let mut rad = 0.0f64;
                for c in centers {
                    let mut core = w.clone();
                    core[d] = c[0];
                    let label = lbl(ctx, &core);
                    let mut window = Word::new(-(d as i64), core);
                    extend_right(g, &mut window, pad)?;
                    let v = lis_to_spec(fam, &[0], &window, target, &ctx.limits)?;
                    rep.certified(&format!("gamma.{label}"), v);
                    sum += v.value;
                    rad += v.radius;
                }
                let mut key_l = lbl(ctx, &key.0);
                key_l.push('_');
                key_l.push_str(&lbl(ctx, &key.1));
                rep.check(
                    &format!("norm.{key_l}"),
                    (sum - 1.0).abs() <= rad + tol.max(1e-12),
                );
            }
        }
    }
    Ok(rep)
}

// ------------------------------------------------------------- transport

fn lis_to_spec_cmd(ctx: &Ctx) -> Result<Report> {
    let fam = need_lis(ctx, "lis-to-spec")?;
    let mut rep = Report::new("lis-to-spec", &ctx.model.name);
    let g = fam.grammar();
    let d = 3usize;
    let pad = match fam.memory_bound() {
        MemoryBound::Exact(m) => m + 1,
        MemoryBound::Decaying(_) => 36,
    };
    let target = ctx.tolerance.max(1e-9);
    rep.exact("target-radius", target);
    let oracle = transfer_from_table(fam);
    for w in words_of(g, 2 * d + 1, 8)? {
        let label = lbl(ctx, &w);
        let mut window = Word::new(-(d as i64), w.clone());
        extend_right(g, &mut window, pad)?;
        let v = lis_to_spec(fam, &[0], &window, target, &ctx.limits)?;
        rep.certified(&format!("gamma.{label}"), v);
        rep.check(
            &format!("target.{label}"),
            v.radius <= target * (1.0 + 1e-9),
        );
        if let Some(tm) = &oracle {
            let expected = tm.two_sided_conditional(&window, Interval::new(0, 0)?)?;
            rep.exact(&format!("oracle.{label}"), expected);
            rep.check(
                &format!("agree.{label}"),
                (v.value - expected).abs() <= v.radius + ctx.tolerance.max(1e-12),
            );
        }
    }
    if oracle.is_none() {
        rep.text("oracle", "inapplicable: no finite-memory transfer model");
    }
    Ok(rep)
}

fn spec_to_lis_cmd(ctx: &Ctx) -> Result<Report> {
    let spec = need_spec(ctx, "spec-to-lis")?;
    let mut rep = Report::new("spec-to-lis", &ctx.model.name);
    let g = spec.grammar();
    let (rl, _) = spec.reach();
    let plen = (rl + g.order()).max(3);
    let span = Interval::new(0, 0)?;
    let target = ctx.tolerance.max(1e-8);
    rep.exact("target-radius", target);
    let chain = match ising_transfer(ctx) {
        Some(tm) => Some(tm.stationary_chain()?),
        None => None,
    };
    let mut sampled = false;
    for p in words_of(g, plen, 6)? {
        let past = Word::new(-(plen as i64), p.clone());
        let mut sum = 0.0f64;
        let mut rad = 0.0f64;
        for a in admissible_next(g, &p)? {
            let key = format!("g.{}.{}", lbl(ctx, &p), spec.alphabet().name(a));
            let env = spec_to_lis(spec, span, &[vec![a]], &past, target, &ctx.limits)?;
            rep.certified(&key, env.value);
            rep.int(&format!("{key}.steps"), env.steps.len() as i64);
            sampled |= env.sampled;
            sum += env.value.value;
            rad += env.value.radius;
            if let Some((rows, _)) = &chain {
                let prev = *p.last().unwrap() as usize;
                let expected = rows[prev][a as usize];
                rep.check(
                    &format!("agree.{}.{}", lbl(ctx, &p), spec.alphabet().name(a)),
                    (env.value.value - expected).abs() <= env.value.radius + ctx.tolerance,
                );
            }
        }
        rep.check(
            &format!("norm.{}", lbl(ctx, &p)),
            (sum - 1.0).abs() <= rad + ctx.tolerance.max(1e-12),
        );
    }
    rep.text("boundary-probing", if sampled { "sampled" } else { "exhaustive" });
    if chain.is_none() {
        rep.text("oracle", "inapplicable: no pair-weight transfer model");
    }
    Ok(rep)
}

// ------------------------------------------------------------- roundtrip

/// Past-family roundtrip with probe pasts deep enough for the induced
/// truncation; the target adapts to what the kernel's decay can certify.
fn lis_roundtrip(
    ctx: &Ctx,
    fam: &LisFamily,
    cap: usize,
) -> Result<(RoundtripReport, f64)> {
    let g = fam.grammar();
    let (core_len, left_pad, target, limits) = match fam.memory_bound() {
        MemoryBound::Exact(m) => (
            m.max(1) + 1,
            16,
            ctx.tolerance.max(1e-11),
            ctx.limits.clone(),
        ),
        MemoryBound::Decaying(_) => {
            // every envelope step enumerates the grown volume, so the target
            // is kept coarse enough that convergence lands at shallow depth
            let l = 12usize;
            let reach = 4.0 * fam.var_tail(l) / fam.min_prob();
            if !reach.is_finite() {
                return Err(Error::CannotCertify {
                    target: ctx.tolerance,
                    detail: "summed oscillations of the past kernel diverge; the induced \
                             two-sided family has no certified truncation"
                        .into(),
                });
            }
            let mut lim = ctx.limits.clone();
            lim.k_max = lim.k_max.min(24);
            lim.probe_budget = lim.probe_budget.min(256);
            (2, l, reach.max(ctx.tolerance * 0.1).max(1e-12), lim)
        }
    };
    let mut probes = Vec::new();
    for w in words_of(g, core_len, cap)? {
        let sym = *w.last().unwrap();
        let core = &w[..core_len - 1];
        let mut past = Word::new(-(core.len() as i64), core.to_vec());
        extend_left(g, &mut past, left_pad)?;
        probes.push(PastProbe { site: 0, past, sym });
    }
    let r = roundtrip_cb(fam, &probes, target, ctx.tolerance.max(target), &limits)?;
    Ok((r, target))
}

fn report_roundtrip(rep: &mut Report, r: &RoundtripReport) {
    for (i, o) in r.outcomes.iter().enumerate() {
        rep.exact(&format!("probe.{i}.discrepancy"), o.discrepancy);
        rep.exact(&format!("probe.{i}.allowed"), o.allowed);
        rep.check(&format!("probe.{i}"), o.pass);
    }
    rep.exact("max-discrepancy", r.max_discrepancy);
    rep.check("roundtrip", r.pass);
}

fn roundtrip_cmd(ctx: &Ctx) -> Result<Report> {
    let mut rep = Report::new("roundtrip", &ctx.model.name);
    rep.text("side", ctx.model.side());
    match &ctx.model.family {
        BuiltFamily::Lis(fam) => {
            let (r, target) = lis_roundtrip(ctx, fam, 8)?;
            rep.exact("target-radius", target);
            report_roundtrip(&mut rep, &r);
        }
        BuiltFamily::Spec(spec) => {
            let g = spec.grammar();
            let (rl, rr) = spec.reach();
            // conservative order of the induced chain for a finite-range
            // density under a finite-order grammar
            let m = rl + rr + g.order();
            let mut probes = Vec::new();
            for w in words_of(g, rl + 1 + rr, 8)? {
                let mut window = Word::new(-(rl as i64), w.clone());
                extend_right(g, &mut window, m + 3)?;
                probes.push(SpecProbe {
                    sites: vec![0],
                    window,
                });
            }
            let target = ctx.tolerance.max(1e-7);
            rep.exact("target-radius", target);
            let r = roundtrip_bc(
                spec,
                &probes,
                MemoryBound::Exact(m),
                target,
                ctx.tolerance.max(1e-6),
                &ctx.limits,
            )?;
            report_roundtrip(&mut rep, &r);
        }
    }
    Ok(rep)
}

// ----------------------------------------------------------- reconstruct

fn reconstruct_cmd(ctx: &Ctx) -> Result<Report> {
    let spec = need_spec(ctx, "reconstruct")?;
    let mut rep = Report::new("reconstruct", &ctx.model.name);
    let g = spec.grammar();
    let (rl, rr) = spec.reach();
    let span = Interval::new(0, 2)?;
    let tol = ctx.tolerance.max(1e-9);
    let gtol = ctx.tolerance.max(1e-10);
    let oracle = ising_log_weight(ctx);
    if !spec.full_support() {
        rep.text(
            "routes",
            "single route: tabulation delegates to the flip chain under a grammar",
        );
    }
    for w in words_of(g, rl + 3 + rr, 4)? {
        let window = Word::new(-(rl as i64), w.clone());
        let label = lbl(ctx, &w);
        let direct = spec.gamma_interval_table(span, &window, ctx.budget)?;
        rep.int(&format!("volume.{label}.rows"), direct.len() as i64);
        // second route: spread weights along the single-flip chain
        match spec.gamma_flip_chain(&[0, 1, 2], &window, ctx.budget, tol) {
            Ok(chain) => {
                let worst = direct
                    .iter()
                    .zip(&chain)
                    .map(|((_, a), (_, b))| (a - b).abs())
                    .fold(0.0f64, f64::max);
                rep.exact(&format!("route-gap.{label}"), worst);
                rep.check(&format!("routes-agree.{label}"), worst <= tol);
            }
            Err(Error::OrderConsistencyViolated { gap, tolerance }) => {
                rep.text(
                    &format!("order.{label}.detail"),
                    &format!("flip-chain gap {gap:e} exceeds tolerance {tolerance:e}"),
                );
                rep.check(&format!("order-consistent.{label}"), false);
                continue;
            }
            Err(e) => return Err(e),
        }
        // pair marginal must not depend on the evaluation order
        match spec.rho_pair(0, 1, &window, tol) {
            Ok(_) => {
                rep.check(&format!("order-consistent.{label}"), true);
            }
            Err(Error::OrderConsistencyViolated { gap, tolerance }) => {
                rep.text(
                    &format!("order.{label}.detail"),
                    &format!("pair gap {gap:e} exceeds tolerance {tolerance:e}"),
                );
                rep.check(&format!("order-consistent.{label}"), false);
                continue;
            }
            Err(e) => return Err(e),
        }
        // averaging the inner volume under the outer reproduces the marginal
        let (gap, allowance) = composition_gap(spec, Interval::new(1, 1)?, span, &window, ctx.budget)?;
        rep.exact(&format!("composition.{label}.gap"), gap);
        rep.check(&format!("composition.{label}"), gap <= allowance + tol);
        if let Some(lw) = &oracle {
            let fvg = finite_volume_gibbs(g, span, &window, lw, ctx.budget)?;
            let worst = direct
                .iter()
                .zip(&fvg)
                .map(|((_, a), (_, b))| (a - b).abs())
                .fold(0.0f64, f64::max);
            rep.exact(&format!("oracle-gap.{label}"), worst);
            rep.check(&format!("oracle.{label}"), worst <= gtol);
        }
    }
    Ok(rep)
}

// -------------------------------------------------------------- criteria

fn criteria_cmd(ctx: &Ctx) -> Result<Report> {
    let mut rep = Report::new("criteria", &ctx.model.name);
    rep.text("side", ctx.model.side());
    let opts = CriterionOptions {
        depth: ctx.limits.n_max.min(12),
        budget: ctx.budget,
        ..CriterionOptions::default()
    };
    let list = match &ctx.model.family {
        BuiltFamily::Lis(f) => criterion_suite_lis(f, &opts)?,
        BuiltFamily::Spec(s) => criterion_suite_spec(s, &opts)?,
    };
    rep.int("criteria", list.len() as i64);
    for c in &list {
        rep.criterion(c);
    }
    Ok(rep)
}

// ----------------------------------------------------------------- rates

fn form_label(form: &ProfileForm) -> String {
    match form {
        ProfileForm::Exact { memory } => format!("exact-memory({memory})"),
        ProfileForm::Geometric { coeff, rate } => format!("geometric(coeff={coeff},rate={rate})"),
        ProfileForm::Table => "table".into(),
    }
}

fn rates_cmd(ctx: &Ctx) -> Result<Report> {
    let mut rep = Report::new("rates", &ctx.model.name);
    rep.text("side", ctx.model.side());
    let tol = ctx.tolerance;
    match &ctx.model.family {
        BuiltFamily::Lis(fam) => {
            let g = fam.grammar();
            let depth = ctx.limits.n_max.min(10);
            let prof = rate_profile(fam, 0, depth, ctx.budget)?;
            let mut sampled = false;
            for s in &prof.samples {
                rep.certified(&format!("var.{}", s.k), s.value);
                sampled |= !s.exhaustive;
            }
            rep.exact("var.tail", prof.tail);
            rep.text("var.form", &form_label(&prof.form));
            if sampled {
                rep.text(
                    "var.note",
                    "some depths sampled; measured suprema certify only from below",
                );
            }
            let dm = dobrushin_matrix_lis(fam, Interval::new(-4, 0)?, depth, ctx.budget)?;
            for idx in 0..dm.entries.len() {
                rep.exact(
                    &format!("dobrushin.row.{}", dm.site(idx)),
                    dm.row_sum_hi(idx),
                );
            }
            rep.exact("dobrushin.max", dm.max_row_sum_hi());
            rep.text(
                "dobrushin.verdict",
                if dm.max_row_sum_hi() < 1.0 {
                    "contracting"
                } else {
                    "not-contracting"
                },
            );
            let win = Word::new(-4, words_of(g, 6, 1)?.remove(0));
            match oscillation_lis(fam, 1, &[0], &win) {
                Ok(pair) => {
                    rep.certified("osc.floor", pair.c);
                    rep.certified("osc.delta", pair.delta);
                    rep.certified("osc.ratio", pair.ratio()?);
                }
                Err(Error::PositivityViolated { .. }) => {
                    rep.text("osc", "kernel floor not separated from zero on this window");
                }
                Err(e) => return Err(e),
            }
            // flip bounds against the measured transported sensitivity
            let mut win2 = Word::new(-2, words_of(g, 3, 1)?.remove(0));
            extend_right(g, &mut win2, 12)?;
            let tail_here = ratio_tail(fam, &[0], win2.end());
            let target = tol.max(1e-9).max(2.0 * tail_here);
            for (key, j, bound) in [
                ("flip.future", 2i64, future_flip_bound(fam, &[0], 2, &win2)),
                ("flip.past", -2i64, past_flip_bound(fam, 0, -2, &win2)),
            ] {
                match bound {
                    Ok(b) => {
                        rep.certified(&format!("{key}.bound"), b);
                        let gap = induced_spec_flip_gap(fam, &[0], j, &win2, target, &ctx.limits)?;
                        rep.certified(&format!("{key}.measured"), gap);
                        // the measured interval must not lie wholly above the
                        // certified bound; its width is truncation-limited
                        rep.check(
                            &format!("{key}.dominates"),
                            gap.lo() <= b.hi() + tol.max(1e-12),
                        );
                    }
                    Err(Error::TailNotSummable { .. }) => {
                        rep.text(key, "uncertifiable: summed oscillations diverge");
                    }
                    Err(e) => return Err(e),
                }
            }
            let gf = gf_certificate(fam, &[0], depth, depth, ctx.budget)?;
            rep.text("gf.verdict", gf.verdict.tag());
            rep.exact("gf.tail", gf.tail);
            if let Some(t) = gf.total {
                rep.exact("gf.total", t);
            }
            let egf = egf_certificate_lis(fam, 1, depth, depth, ctx.budget)?;
            rep.text("egf.verdict", egf.verdict.tag());
            if let Some(a) = egf.a {
                rep.exact("egf.base", a);
            }
            if let Some(b) = egf.bound {
                rep.exact("egf.bound", b);
            }
        }
        BuiltFamily::Spec(spec) => {
            let g = spec.grammar();
            let (rl, rr) = spec.reach();
            let dm = dobrushin_matrix_spec(spec, Interval::new(-2, 2)?, ctx.budget)?;
            for idx in 0..dm.entries.len() {
                rep.exact(
                    &format!("dobrushin.row.{}", dm.site(idx)),
                    dm.row_sum_hi(idx),
                );
            }
            rep.exact("dobrushin.max", dm.max_row_sum_hi());
            rep.text(
                "dobrushin.verdict",
                if dm.max_row_sum_hi() < 1.0 {
                    "contracting"
                } else {
                    "not-contracting"
                },
            );
            let win = Word::new(
                -(rl as i64),
                words_of(g, rl + 2 + rr, 1)?.remove(0),
            );
            let pair = oscillation_spec(spec, 0, 1, &win)?;
            rep.certified("osc.floor", pair.c);
            rep.certified("osc.delta", pair.delta);
            rep.certified("osc.ratio", pair.ratio()?);
            // past flip bound against the measured induced-kernel gap
            let plen = 2 + rl;
            let wlen = plen + 1 + rl + rr;
            let past_win = Word::new(-(plen as i64), words_of(g, wlen, 1)?.remove(0));
            let bound = past_flip_bound_spec(spec, 0, -2, &past_win)?;
            rep.certified("flip.past.bound", bound);
            let past = past_win.slice(Interval::new(-(plen as i64), -1)?)?;
            let sym = admissible_next(g, past.syms())?[0];
            let target = tol.max(1e-7);
            let gap = induced_lis_flip_gap(
                spec,
                Interval::new(0, 0)?,
                &[sym],
                -2,
                &past,
                target,
                &ctx.limits,
            )?;
            rep.certified("flip.past.measured", gap);
            rep.check(
                "flip.past.dominates",
                gap.lo() <= bound.hi() + tol.max(1e-12),
            );
            let egf = egf_certificate_spec(spec, 0, ctx.budget)?;
            rep.text("egf.verdict", egf.verdict.tag());
            if let Some(a) = egf.a {
                rep.exact("egf.base", a);
            }
            if let Some(b) = egf.bound {
                rep.exact("egf.bound", b);
            }
        }
    }
    Ok(rep)
}

// ----------------------------------------------------------- oracle-check

fn oracle_check_cmd(ctx: &Ctx) -> Result<Report> {
    let mut rep = Report::new("oracle-check", &ctx.model.name);
    rep.text("side", ctx.model.side());
    let tol = ctx.tolerance;
    match &ctx.model.family {
        BuiltFamily::Lis(fam) => {
            match check_singleton_normalization(fam, tol.max(1e-9)) {
                Ok(()) => {
                    rep.check("normalization", true);
                }
                Err(e) => {
                    rep.text("normalization.detail", &e.to_string());
                    rep.check("normalization", false);
                }
            }
            if let Some(tm) = transfer_from_table(fam) {
                let g = fam.grammar();
                let m = tm.memory().max(1);
                let target = tol.max(1e-11);
                // interval ratios against exact path-weight conditionals
                for w in words_of(g, 2 * m + 3, 6)? {
                    let window = Word::new(-(m as i64 + 1), w.clone());
                    let got = lis_to_spec(fam, &[0], &window, target, &ctx.limits)?;
                    let expected = tm.two_sided_conditional(&window, Interval::new(0, 0)?)?;
                    rep.check(
                        &format!("two-sided.{}", lbl(ctx, &w)),
                        (got.value - expected).abs() <= got.radius + tol.max(1e-12),
                    );
                }
                let (_, pi) = tm.stationary_chain()?;
                rep.check(
                    "invariant.norm",
                    (pi.iter().sum::<f64>() - 1.0).abs() <= 1e-9,
                );
                for (s, p) in pi.iter().enumerate() {
                    let state = unpack_word(s, fam.alphabet().len(), tm.memory());
                    let key = if state.is_empty() {
                        "invariant.all".to_string()
                    } else {
                        format!("invariant.{}", lbl(ctx, &state))
                    };
                    rep.exact(&key, *p);
                }
                let (r, _) = lis_roundtrip(ctx, fam, 4)?;
                rep.exact("roundtrip.max-discrepancy", r.max_discrepancy);
                rep.check("roundtrip", r.pass);
            } else {
                rep.text(
                    "transfer",
                    match fam.memory_bound() {
                        MemoryBound::Decaying(_) => "inapplicable: unbounded memory",
                        MemoryBound::Exact(_) => "unavailable: weight matrix not irreducible",
                    },
                );
                let prof = rate_profile(fam, 0, 10, ctx.budget)?;
                rep.exact("var.tail", prof.tail);
                rep.text("var.form", &form_label(&prof.form));
                if fam.var_tail(0).is_finite() {
                    let (r, _) = lis_roundtrip(ctx, fam, 4)?;
                    rep.exact("roundtrip.max-discrepancy", r.max_discrepancy);
                    rep.check("roundtrip", r.pass);
                } else {
                    rep.text("roundtrip", "uncertifiable: summed oscillations diverge");
                }
            }
        }
        BuiltFamily::Spec(spec) => {
            let g = spec.grammar();
            let (rl, rr) = spec.reach();
            let span = Interval::new(0, 1)?;
            let words = words_of(g, rl + 2 + rr, 6)?;
            let tol2 = tol.max(1e-9);
            let oracle_lw = ising_log_weight(ctx);
            let oracle_tm = ising_transfer(ctx);
            if !spec.full_support() {
                rep.text(
                    "routes",
                    "single route: tabulation delegates to the flip chain under a grammar",
                );
            }
            for w in &words {
                let window = Word::new(-(rl as i64), w.clone());
                let label = lbl(ctx, w);
                let direct = spec.gamma_interval_table(span, &window, ctx.budget)?;
                if spec.full_support() {
                    match spec.gamma_flip_chain(&[0, 1], &window, ctx.budget, tol2) {
                        Ok(chain) => {
                            let worst = direct
                                .iter()
                                .zip(&chain)
                                .map(|((_, a), (_, b))| (a - b).abs())
                                .fold(0.0f64, f64::max);
                            rep.check(&format!("routes-agree.{label}"), worst <= tol2);
                        }
                        Err(Error::OrderConsistencyViolated { gap, tolerance }) => {
                            rep.text(
                                &format!("order.{label}.detail"),
                                &format!("flip-chain gap {gap:e} exceeds tolerance {tolerance:e}"),
                            );
                            rep.check(&format!("order-consistent.{label}"), false);
                            continue;
                        }
                        Err(e) => return Err(e),
                    }
                }
                let (gap, allowance) =
                    composition_gap(spec, Interval::new(0, 0)?, span, &window, ctx.budget)?;
                rep.check(&format!("composition.{label}"), gap <= allowance + tol2);
                if let Some(lw) = &oracle_lw {
                    let fvg = finite_volume_gibbs(g, span, &window, lw, ctx.budget)?;
                    let worst = direct
                        .iter()
                        .zip(&fvg)
                        .map(|((_, a), (_, b))| (a - b).abs())
                        .fold(0.0f64, f64::max);
                    rep.check(&format!("gibbs-oracle.{label}"), worst <= tol.max(1e-10));
                }
                if let Some(tm) = &oracle_tm {
                    let expected = tm.two_sided_conditional(&window, span)?;
                    let got = spec.gamma_volume(&[0, 1], &window)?;
                    rep.check(
                        &format!("transfer-oracle.{label}"),
                        (got - expected).abs() <= tol.max(1e-10),
                    );
                }
            }
            if oracle_lw.is_none() {
                rep.text("oracle", "inapplicable: no pair-weight form for this kind");
            }
        }
    }
    Ok(rep)
}
