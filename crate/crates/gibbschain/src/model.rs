//! Declarative model files: a flat TOML schema that parses to a kernel
//! family, fails with the parser's line and column on bad input, and
//! round-trips through serialization byte-identically.
//!
//! A file has four sections. `[model]` names the instance, picks the kernel
//! kind, and carries the stationarity tag. `[alphabet]` lists symbol names.
//! `[grammar]` is optional and lists forbidden words over those names.
//! `[params]` holds the kind-specific numbers; unknown or missing keys are
//! reported by name. `[tolerances]` optionally overrides the default
//! comparison tolerance.

use crate::error::{Error, Result};
use crate::kernels::{GSingleton, LisFamily, RenewalDecay, RhoSingleton, SpecFamily};
use crate::lattice::{Alphabet, Grammar, Sym};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Default tolerance for composed identities.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// Kernel family kinds a model file can declare.
#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Finite-order stochastic matrix, past-conditioned.
    MarkovChain,
    /// Nearest-neighbor pair potential, two-sided.
    IsingSpec,
    /// Memoryless distribution, past-conditioned.
    Iid,
    /// Binary renewal kernel with declared decay, past-conditioned.
    RenewalG,
    /// Explicit kernel table on either side.
    CustomTable,
}

impl ModelKind {
    /// Config-file spelling.
    pub fn label(&self) -> &'static str {
        match self {
            ModelKind::MarkovChain => "markov-chain",
            ModelKind::IsingSpec => "ising-spec",
            ModelKind::Iid => "iid",
            ModelKind::RenewalG => "renewal-g",
            ModelKind::CustomTable => "custom-table",
        }
    }
}

/// Which side an explicit table lives on.
#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum TableSide {
    /// Past-conditioned single-site kernel.
    Lis,
    /// Two-sided single-site density.
    Spec,
}

/// `[model]` section.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Display name used in reports.
    pub name: String,
    /// Kernel family kind.
    pub kind: ModelKind,
    /// Structural tag: every site uses the same kernel.
    #[serde(default = "default_true")]
    pub stationary: bool,
}

fn default_true() -> bool {
    true
}

/// `[alphabet]` section.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AlphabetSection {
    /// Symbol names; order fixes the numeric encoding.
    pub symbols: Vec<String>,
}

/// `[grammar]` section: forbidden words over symbol names.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GrammarSection {
    /// Factor length minus one.
    pub order: usize,
    /// Forbidden factors, each of length `order + 1`.
    #[serde(default)]
    pub forbidden: Vec<Vec<String>>,
}

/// Declared decay of a renewal kernel.
#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq)]
#[serde(tag = "form", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DecaySection {
    /// Amplitude shrinks by `ratio` per unit of age.
    Geometric {
        /// Per-step factor in (0, 1).
        ratio: f64,
    },
    /// Amplitude shrinks like one over age plus one.
    Harmonic,
}

/// `[params]` section; which keys are required depends on the kind.
#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    /// Transition matrix rows (markov-chain).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    /// Symbol probabilities (iid).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    /// Inverse temperature (ising-spec).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Spin value per symbol (ising-spec).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spins: Option<Vec<f64>>,
    /// Optional positive per-symbol tilt of the density (ising-spec).
    /// A global tilt is an external field: still a consistent family.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<Vec<f64>>,
    /// Optional deviant coupling at site 0 (ising-spec). Breaks the mutual
    /// consistency of the singletons: a negative control for the
    /// order-consistency detector.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturb_beta: Option<f64>,
    /// Renewal mark symbol name (renewal-g).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub marked: Option<String>,
    /// Renewal tail probability (renewal-g).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail: Option<f64>,
    /// Renewal amplitude at age zero (renewal-g).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    /// Renewal decay shape (renewal-g).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay: Option<DecaySection>,
    /// Table side (custom-table).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub side: Option<TableSide>,
    /// Past sites read by a lis table (custom-table, side = lis).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub memory: Option<usize>,
    /// Left reach of a spec table (custom-table, side = spec).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub left: Option<usize>,
    /// Right reach of a spec table (custom-table, side = spec).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub right: Option<usize>,
    /// Flattened kernel values, context-major (custom-table).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    /// A-priori symbol weights (custom-table, side = spec).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

/// `[tolerances]` section.
#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSection {
    /// Override for the default comparison tolerance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

/// A parsed model file.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Instance name, kind, stationarity.
    pub model: ModelSection,
    /// Symbols.
    pub alphabet: AlphabetSection,
    /// Optional exclusion grammar.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grammar: Option<GrammarSection>,
    /// Kind-specific numbers.
    pub params: ParamsSection,
    /// Optional tolerance overrides.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<ToleranceSection>,
}

/// A built kernel family, on whichever side the model declares.
#[derive(Clone, Debug)]
pub enum BuiltFamily {
    /// Past-conditioned family.
    Lis(LisFamily),
    /// Two-sided family.
    Spec(SpecFamily),
}

/// A validated model: the built family plus run parameters.
#[derive(Clone, Debug)]
pub struct Model {
    /// Display name.
    pub name: String,
    /// Declared kind.
    pub kind: ModelKind,
    /// Comparison tolerance for this model.
    pub tolerance: f64,
    /// The family.
    pub family: BuiltFamily,
}

impl Model {
    /// The past-conditioned family, if this model lives on that side.
    pub fn lis(&self) -> Option<&LisFamily> {
        match &self.family {
            BuiltFamily::Lis(f) => Some(f),
            BuiltFamily::Spec(_) => None,
        }
    }

    /// The two-sided family, if this model lives on that side.
    pub fn spec(&self) -> Option<&SpecFamily> {
        match &self.family {
            BuiltFamily::Spec(f) => Some(f),
            BuiltFamily::Lis(_) => None,
        }
    }

    /// Side label for reports.
    pub fn side(&self) -> &'static str {
        match &self.family {
            BuiltFamily::Lis(_) => "lis",
            BuiltFamily::Spec(_) => "spec",
        }
    }
}

impl ModelSpec {
    /// Parses a model file; syntax and schema errors carry the parser's
    /// line, column, and offending key.
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("model file: {e}")))
    }

    /// Reads and parses a model file, naming the path in any error.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Canonical serialization; `parse(render(s)) == s` and rendering is
    /// a byte-level fixed point.
    pub fn render(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize model: {e}")))
    }

    /// Effective comparison tolerance.
    pub fn tolerance(&self) -> f64 {
        self.tolerances
            .and_then(|t| t.tolerance)
            .unwrap_or(DEFAULT_TOLERANCE)
    }

    /// Validates the sections and constructs the declared family.
    pub fn build(&self) -> Result<Model> {
        let alphabet = Alphabet::new(self.alphabet.symbols.clone())?;
        let base = alphabet.len();
        let grammar = match &self.grammar {
            None => Grammar::full_shift(base),
            Some(g) => {
                let mut forbidden = Vec::with_capacity(g.forbidden.len());
                for word in &g.forbidden {
                    let ids: Result<Vec<Sym>> =
                        word.iter().map(|n| alphabet.id_of(n)).collect();
                    forbidden.push(ids?);
                }
                Grammar::from_forbidden(g.order, base, &forbidden)?
            }
        };
        let p = &self.params;
        let family = match self.model.kind {
            ModelKind::MarkovChain => {
                let matrix = p
                    .matrix
                    .as_ref()
                    .ok_or_else(|| missing("matrix", self.model.kind))?;
                let kernel = GSingleton::from_matrix(matrix)?;
                BuiltFamily::Lis(LisFamily::stationary(alphabet, grammar, kernel)?)
            }
            ModelKind::Iid => {
                let probs = p
                    .probs
                    .as_ref()
                    .ok_or_else(|| missing("probs", self.model.kind))?;
                let kernel = GSingleton::iid(probs)?;
                BuiltFamily::Lis(LisFamily::stationary(alphabet, grammar, kernel)?)
            }
            ModelKind::RenewalG => {
                let marked = p
                    .marked
                    .as_ref()
                    .ok_or_else(|| missing("marked", self.model.kind))?;
                let tail = p.tail.ok_or_else(|| missing("tail", self.model.kind))?;
                let amp = p
                    .amplitude
                    .ok_or_else(|| missing("amplitude", self.model.kind))?;
                let decay = p.decay.ok_or_else(|| missing("decay", self.model.kind))?;
                let decay = match decay {
                    DecaySection::Geometric { ratio } => RenewalDecay::Geometric { ratio },
                    DecaySection::Harmonic => RenewalDecay::Harmonic,
                };
                let kernel = GSingleton::renewal(alphabet.id_of(marked)?, tail, amp, decay)?;
                BuiltFamily::Lis(LisFamily::stationary(alphabet, grammar, kernel)?)
            }
            ModelKind::IsingSpec => {
                let beta = p.beta.ok_or_else(|| missing("beta", self.model.kind))?;
                let spins = p
                    .spins
                    .as_ref()
                    .ok_or_else(|| missing("spins", self.model.kind))?;
                if spins.len() != base {
                    return Err(Error::Config(format!(
                        "params.spins has {} entries for {} symbols",
                        spins.len(),
                        base
                    )));
                }
                let mut kernel = RhoSingleton::pair_potential(spins.clone(), beta)?;
                if let Some(scale) = &p.scale {
                    kernel = RhoSingleton::scaled(&kernel, scale.clone())?;
                }
                let mut overrides = BTreeMap::new();
                if let Some(pb) = p.perturb_beta {
                    overrides.insert(0i64, RhoSingleton::pair_potential(spins.clone(), pb)?);
                }
                BuiltFamily::Spec(SpecFamily::new(alphabet, grammar, None, kernel, overrides)?)
            }
            ModelKind::CustomTable => {
                let side = p.side.ok_or_else(|| missing("side", self.model.kind))?;
                let values = p
                    .values
                    .as_ref()
                    .ok_or_else(|| missing("values", self.model.kind))?;
                match side {
                    TableSide::Lis => {
                        let memory =
                            p.memory.ok_or_else(|| missing("memory", self.model.kind))?;
                        let kernel = GSingleton::from_table(base, memory, values.clone())?;
                        BuiltFamily::Lis(LisFamily::stationary(alphabet, grammar, kernel)?)
                    }
                    TableSide::Spec => {
                        let left = p.left.ok_or_else(|| missing("left", self.model.kind))?;
                        let right =
                            p.right.ok_or_else(|| missing("right", self.model.kind))?;
                        let kernel =
                            RhoSingleton::from_table(base, left, right, values.clone())?;
                        let fam = SpecFamily::new(
                            alphabet,
                            grammar,
                            p.weights.clone(),
                            kernel,
                            Default::default(),
                        )?;
                        BuiltFamily::Spec(fam)
                    }
                }
            }
        };
        let built_stationary = match &family {
            BuiltFamily::Lis(f) => f.is_stationary(),
            BuiltFamily::Spec(s) => s.is_stationary(),
        };
        if self.model.stationary && !built_stationary {
            return Err(Error::Config(
                "model.stationary = true, but params.perturb_beta builds a site-dependent family"
                    .into(),
            ));
        }
        if !self.model.stationary && built_stationary {
            return Err(Error::Config(
                "model.stationary = false, but every site uses the same kernel".into(),
            ));
        }
        Ok(Model {
            name: self.model.name.clone(),
            kind: self.model.kind,
            tolerance: self.tolerance(),
            family,
        })
    }
}

fn missing(field: &str, kind: ModelKind) -> Error {
    Error::Config(format!(
        "params.{field} is required for kind {}",
        kind.label()
    ))
}

/// Stem names of the shipped zoo models.
pub const ZOO: &[&str] = &[
    "markov",
    "iid",
    "ising_025",
    "ising_05",
    "ising_10",
    "ising_slow",
    "ising_perturbed",
    "renewal_geometric",
    "renewal_harmonic",
    "goldenmean",
    "goldenmean_spec",
    "custom_range2",
];

/// Path of a shipped zoo model by stem name.
pub fn zoo_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../models")
        .join(format!("{name}.toml"))
}

/// Loads and builds a zoo model by stem name.
pub fn zoo_model(name: &str) -> Result<Model> {
    ModelSpec::from_file(&zoo_path(name))?.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Word;

    const MARKOV: &str = r#"
[model]
name = "markov"
kind = "markov-chain"

[alphabet]
symbols = ["0", "1"]

[params]
matrix = [[0.7, 0.3], [0.4, 0.6]]
"#;

    #[test]
    fn markov_file_builds_a_lis_family() {
        let spec = ModelSpec::parse(MARKOV).unwrap();
        assert!(spec.model.stationary, "tag defaults to true");
        let model = spec.build().unwrap();
        let fam = model.lis().expect("chain side");
        let past = crate::lattice::Word::new(-1, vec![0]);
        let (v, r) = fam.eval(0, &past, 1).unwrap();
        assert_eq!(v, 0.3);
        assert_eq!(r, 0.0);
        assert_eq!(model.tolerance, DEFAULT_TOLERANCE);
    }

    #[test]
    fn round_trip_is_a_byte_level_fixed_point() {
        let spec = ModelSpec::parse(MARKOV).unwrap();
        let once = spec.render().unwrap();
        let again = ModelSpec::parse(&once).unwrap();
        assert_eq!(spec, again);
        assert_eq!(once, again.render().unwrap());
    }

    #[test]
    fn missing_kind_names_the_field_and_location() {
        let err = ModelSpec::parse("[model]\nname = \"x\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("kind"), "got: {msg}");
        assert!(msg.contains("line"), "location missing: {msg}");
    }

    #[test]
    fn empty_file_is_a_precise_parse_error() {
        let err = ModelSpec::parse("").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("model"), "missing section unnamed: {msg}");
    }

    #[test]
    fn unknown_param_is_rejected_by_name() {
        let bad = MARKOV.replace("matrix", "matrx");
        let err = ModelSpec::parse(&bad).unwrap_err();
        assert!(err.to_string().contains("matrx"), "got: {err}");
    }

    #[test]
    fn kind_param_mismatch_is_reported() {
        let bad = r#"
[model]
name = "x"
kind = "renewal-g"

[alphabet]
symbols = ["0", "1"]

[params]
tail = 0.4
amplitude = 0.3
marked = "0"
"#;
        let err = ModelSpec::parse(bad).unwrap().build().unwrap_err();
        assert!(err.to_string().contains("params.decay"), "got: {err}");
    }

    #[test]
    fn grammar_words_use_symbol_names() {
        let text = r#"
[model]
name = "gm"
kind = "custom-table"

[alphabet]
symbols = ["0", "1"]

[grammar]
order = 1
forbidden = [["1", "1"]]

[params]
side = "lis"
memory = 1
values = [0.5, 0.5, 1.0, 0.0]
"#;
        let model = ModelSpec::parse(text).unwrap().build().unwrap();
        let fam = model.lis().unwrap();
        assert!(!fam.grammar().is_admissible(&[1, 1]));
        assert!(fam.grammar().is_admissible(&[1, 0]));
    }

    #[test]
    fn every_zoo_model_builds_and_round_trips() {
        for name in ZOO {
            let path = zoo_path(name);
            let spec = ModelSpec::from_file(&path)
                .unwrap_or_else(|e| panic!("{name}: {e}"));
            let rendered = spec.render().unwrap();
            assert_eq!(
                ModelSpec::parse(&rendered).unwrap(),
                spec,
                "{name} does not round-trip"
            );
            spec.build().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn ising_scale_builds_the_tilted_density() {
        let text = r#"
[model]
name = "tilted"
kind = "ising-spec"

[alphabet]
symbols = ["+", "-"]

[params]
beta = 0.5
spins = [1.0, -1.0]
scale = [1.0, 1.05]
"#;
        let model = ModelSpec::parse(text).unwrap().build().unwrap();
        // a global tilt is an external field: still stationary and consistent
        let spec = model.spec().unwrap();
        assert!(spec.is_stationary());
        let w = Word::new(-1, vec![0, 0, 1, 0]);
        spec.rho_pair(0, 1, &w, 1e-10).unwrap();
    }

    #[test]
    fn perturbed_coupling_trips_the_order_check() {
        let model = zoo_model("ising_perturbed").unwrap();
        let spec = model.spec().unwrap();
        assert!(!spec.is_stationary());
        let w = Word::new(-1, vec![0, 0, 1, 0]);
        match spec.rho_pair(0, 1, &w, 1e-10) {
            Err(Error::OrderConsistencyViolated { gap, .. }) => assert!(gap > 1e-6),
            other => panic!("expected an order-consistency violation, got {other:?}"),
        }
    }

    #[test]
    fn stationary_tag_must_match_the_built_family() {
        let text = r#"
[model]
name = "mislabeled"
kind = "ising-spec"
stationary = false

[alphabet]
symbols = ["+", "-"]

[params]
beta = 0.5
spins = [1.0, -1.0]
"#;
        let err = ModelSpec::parse(text).unwrap().build().unwrap_err();
        assert!(err.to_string().contains("stationary"));
    }
}
