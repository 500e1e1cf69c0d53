//! Deterministic Monte Carlo scenarios.
//!
//! Each runner is a pure function of an [`ExperimentConfig`]: all randomness
//! comes from named forks of `config.rng`, and parallel work is split by
//! index (see [`crate::stats::chunked`]), so reports are bit-reproducible for
//! any worker count.

mod common;
mod induced;
mod invariant;
mod marginals;
mod moment_oracles;
mod schur_horn;
mod stein;
mod submatrix;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bounds::{self, BoundReport, ConstantsConfig};
use crate::error::{Error, Result};
use crate::linalg::{entry_frame, orthonormalize_traceless, CoefficientFrame, EntrySelector, Field, HermitianMatrix, Spectrum};
use crate::rng::RngStream;
use crate::samplers::{gaussian_ensemble, Potential};

pub use common::{sample_marginals, GaussianControl};
pub use induced::run_induced_state;
pub use invariant::run_invariant_ensemble;
pub use marginals::{run_entry_marginals, run_marginal_gaussianity};
pub use moment_oracles::verify_moment_oracles;
pub use schur_horn::run_schur_horn;
pub use stein::verify_stein_conditions;
pub use submatrix::run_submatrix_semicircle;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Oracles,
    Stein,
    Marginals,
    Entries,
    Submatrix,
    #[serde(rename = "schurhorn")]
    SchurHorn,
    Induced,
    Invariant,
    Bounds,
}

impl Scenario {
    pub const ALL: [Scenario; 9] = [
        Scenario::Oracles,
        Scenario::Stein,
        Scenario::Marginals,
        Scenario::Entries,
        Scenario::Submatrix,
        Scenario::SchurHorn,
        Scenario::Induced,
        Scenario::Invariant,
        Scenario::Bounds,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Oracles => "oracles",
            Scenario::Stein => "stein",
            Scenario::Marginals => "marginals",
            Scenario::Entries => "entries",
            Scenario::Submatrix => "submatrix",
            Scenario::SchurHorn => "schurhorn",
            Scenario::Induced => "induced",
            Scenario::Invariant => "invariant",
            Scenario::Bounds => "bounds",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .iter()
            .copied()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario {s:?}")))
    }
}

/// How the eigenvalues are chosen. Shapes other than `explicit` and `file`
/// are functions of `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumSpec {
    Explicit { values: Vec<f64> },
    /// JSON array of numbers.
    File { path: PathBuf },
    /// Half `+√n`, half `−√n`.
    PmSqrtN,
    /// Half `+c`, half `−c`.
    PmSplit { c: f64 },
    /// `(1, 0, …, 0)`.
    RankOne,
    /// `λ_i = i − (n−1)/2 + offset`.
    Ladder {
        #[serde(default)]
        offset: f64,
    },
    /// `±√n` on the first `rank` coordinates (even), zero elsewhere.
    LowRank { rank: usize },
    /// `(n, −n/(n−1), …, −n/(n−1))`: operator norm of order `n`.
    Spike,
}

impl SpectrumSpec {
    pub fn resolve(&self, n: usize) -> Result<Spectrum> {
        let s = match self {
            SpectrumSpec::Explicit { values } => Spectrum::new(values.clone())?,
            SpectrumSpec::File { path } => {
                let text = std::fs::read_to_string(path)?;
                let values: Vec<f64> = serde_json::from_str(&text)?;
                Spectrum::new(values)?
            }
            SpectrumSpec::PmSqrtN => Spectrum::pm_sqrt_n(n)?,
            SpectrumSpec::PmSplit { c } => Spectrum::pm_split(n, *c)?,
            SpectrumSpec::RankOne => Spectrum::rank_one(n)?,
            SpectrumSpec::Ladder { offset } => {
                let mid = (n as f64 - 1.0) / 2.0;
                Spectrum::new((0..n).map(|i| i as f64 - mid + offset).collect())?
            }
            SpectrumSpec::LowRank { rank } => {
                if *rank == 0 || rank % 2 != 0 || *rank > n {
                    return Err(Error::Config(format!("low_rank needs an even rank in [2, n], got {rank}")));
                }
                let c = (n as f64).sqrt();
                let mut v = vec![0.0; n];
                for (i, x) in v.iter_mut().take(*rank).enumerate() {
                    *x = if i % 2 == 0 { c } else { -c };
                }
                Spectrum::new(v)?
            }
            SpectrumSpec::Spike => {
                if n < 2 {
                    return Err(Error::Config("spike spectrum needs n >= 2".into()));
                }
                let nf = n as f64;
                let mut v = vec![-nf / (nf - 1.0); n];
                v[0] = nf;
                Spectrum::new(v)?
            }
        };
        if s.len() != n {
            return Err(Error::Config(format!("spectrum has {} values but n = {n}", s.len())));
        }
        Ok(s)
    }

    /// Whether the spectrum is defined for every `n`.
    pub fn scales_with_n(&self) -> bool {
        !matches!(self, SpectrumSpec::Explicit { .. } | SpectrumSpec::File { .. })
    }
}

/// How the coefficient matrices are chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FrameSpec {
    /// `d` off-diagonal picks `R 1 2, I 1 2, R 1 3, I 1 3, …` (real parts
    /// only for the real field).
    Auto,
    /// Entry selectors in text form (`"D j"`, `"R j k"`, `"I j k"`).
    Entries { picks: Vec<String> },
    /// `d` GUE (GOE) draws, orthonormalized after recentering.
    Random,
    /// `I ⊗ … ⊗ σ_z ⊗ … ⊗ I / √n` for `n = 2^q`, first `d` factors.
    Tensor,
    /// Given matrices, orthonormalized after recentering.
    Explicit { matrices: Vec<HermitianMatrix> },
}

impl FrameSpec {
    /// Resolves to a frame; `entries` frames also return their selectors.
    pub fn resolve(&self, n: usize, d: usize, field: Field, stream: RngStream) -> Result<CoefficientFrame> {
        match self {
            FrameSpec::Auto => {
                if d == 0 {
                    return Ok(CoefficientFrame::empty());
                }
                let picks = auto_picks(n, d, field)?;
                Ok(entry_frame(n, &picks, field)?.0)
            }
            FrameSpec::Entries { picks } => {
                let picks: Vec<EntrySelector> = picks.iter().map(|p| p.parse()).collect::<Result<_>>()?;
                if picks.is_empty() {
                    return Ok(CoefficientFrame::empty());
                }
                Ok(entry_frame(n, &picks, field)?.0)
            }
            FrameSpec::Random => {
                if d == 0 {
                    return Ok(CoefficientFrame::empty());
                }
                let mut rng = stream.rng();
                let raw: Vec<HermitianMatrix> = (0..d)
                    .map(|_| gaussian_ensemble(n, field, &mut rng))
                    .collect::<Result<_>>()?;
                orthonormalize_traceless(&raw)
            }
            FrameSpec::Tensor => tensor_frame(n, d),
            FrameSpec::Explicit { matrices } => {
                if matrices.is_empty() {
                    return Ok(CoefficientFrame::empty());
                }
                if matrices[0].dim() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: matrices[0].dim(),
                    });
                }
                orthonormalize_traceless(matrices)
            }
        }
    }
}

fn auto_picks(n: usize, d: usize, field: Field) -> Result<Vec<EntrySelector>> {
    let mut out = Vec::with_capacity(d);
    'outer: for k in 1..n {
        for j in 0..k {
            out.push(EntrySelector::Real(j, k));
            if out.len() == d {
                break 'outer;
            }
            if field == Field::Complex {
                out.push(EntrySelector::Imag(j, k));
                if out.len() == d {
                    break 'outer;
                }
            }
        }
    }
    if out.len() < d {
        return Err(Error::Config(format!("cannot pick {d} distinct off-diagonal entries at n = {n}")));
    }
    Ok(out)
}

/// Pauli-`z` on one tensor factor, normalized to unit Hilbert–Schmidt norm.
pub fn tensor_frame(n: usize, d: usize) -> Result<CoefficientFrame> {
    if !n.is_power_of_two() || n < 2 {
        return Err(Error::Config(format!("tensor frame needs n = 2^q >= 2, got {n}")));
    }
    let q = n.trailing_zeros() as usize;
    if d > q {
        return Err(Error::Config(format!("tensor frame at n = {n} has at most {q} factors, asked for {d}")));
    }
    let h = 1.0 / (n as f64).sqrt();
    let matrices = (0..d)
        .map(|j| {
            let bit = q - 1 - j;
            let diag: Vec<f64> = (0..n).map(|i| if (i >> bit) & 1 == 0 { h } else { -h }).collect();
            HermitianMatrix::diagonal(&diag, Field::Complex)
        })
        .collect();
    CoefficientFrame::new(matrices)
}

/// Fixed pass thresholds that are not theorem right-hand sides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Largest accepted |z| for Monte Carlo vs closed form.
    pub z: f64,
    /// Pooled truncation-vs-GUE eigenvalue `W₁`.
    pub pooled_w1: f64,
    /// Mean spectral distance to the semicircle.
    pub semicircle_w1: f64,
    /// Per-replica `W₁` of the diagonal measure to its Gaussian.
    pub replica_w1: f64,
    /// Fraction of replicas that must meet `replica_w1`.
    pub replica_fraction: f64,
    /// Range for `(max a_ii − tr Λ/n)/√(log n)`.
    pub max_stat_range: [f64; 2],
    /// `‖Λ̃‖_op / n` at or below which the `o(n)` hypothesis is taken to hold.
    pub op_ratio: f64,
    /// `K` in `‖Λ̃‖_op ≤ K √n`.
    pub op_growth: f64,
    /// Relative agreement of plug-in and bootstrap fluctuation estimates.
    pub bootstrap_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            z: 5.0,
            pooled_w1: 0.1,
            semicircle_w1: 0.2,
            replica_w1: 0.1,
            replica_fraction: 0.9,
            max_stat_range: [0.5, 3.0],
            op_ratio: 0.1,
            op_growth: 2.0,
            bootstrap_rel: 0.1,
        }
    }
}

/// Markov chain settings for non-quadratic potentials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    /// Independent chains; draws are split evenly between them.
    pub chains: usize,
    /// Burn-in steps per chain, `10⁴ n` when absent.
    pub burn_in: Option<usize>,
    /// Steps between retained draws, `10 n` when absent.
    pub thin: Option<usize>,
    /// Proposal standard deviation, `1/√n` when absent.
    pub step_size: Option<f64>,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            chains: 8,
            burn_in: None,
            thin: None,
            step_size: None,
        }
    }
}

/// Full description of one run. Missing JSON keys take the scenario's
/// defaults (see [`ExperimentConfig::defaults`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub s: usize,
    /// Monte Carlo sample count.
    pub m: usize,
    pub replicas: usize,
    /// Gaussian-vs-Gaussian control replicates for `W₁`/TV bias.
    pub control_replicas: usize,
    pub spectrum: SpectrumSpec,
    pub frame: FrameSpec,
    pub epsilon: f64,
    pub field: Field,
    pub rng: RngStream,
    pub constants: ConstantsConfig,
    pub tolerances: Tolerances,
    /// Concentration level for the semicircle tail bound.
    pub t: f64,
    /// Extra dimensions for trend reporting (Schur–Horn).
    pub ladder: Vec<usize>,
    pub ladder_replicas: usize,
    /// Second spectrum run alongside the main one for comparison (submatrix).
    pub contrast: Option<SpectrumSpec>,
    pub potential: Potential,
    pub mcmc: McmcConfig,
    /// Use `spectrum` for every draw instead of sampling eigenvalues
    /// (invariant ensemble).
    pub fixed_spectrum: bool,
    /// Bootstrap resamples (invariant ensemble).
    pub bootstrap: usize,
    /// Store raw samples in the report for plot data.
    pub keep_samples: bool,
}

impl ExperimentConfig {
    pub fn defaults(scenario: Scenario) -> Self {
        let mut c = ExperimentConfig {
            scenario,
            n: 8,
            d: 1,
            k: 8,
            s: 16,
            m: 10_000,
            replicas: 20,
            control_replicas: 10,
            spectrum: SpectrumSpec::PmSqrtN,
            frame: FrameSpec::Auto,
            epsilon: 1e-3,
            field: Field::Complex,
            rng: RngStream::new(0, 0),
            constants: ConstantsConfig::default(),
            tolerances: Tolerances::default(),
            t: 0.1,
            ladder: Vec::new(),
            ladder_replicas: 2,
            contrast: None,
            potential: Potential::quadratic(),
            mcmc: McmcConfig::default(),
            fixed_spectrum: false,
            bootstrap: 200,
            keep_samples: true,
        };
        match scenario {
            Scenario::Oracles => {
                c.n = 3;
                c.m = 1_000_000;
                c.spectrum = SpectrumSpec::Ladder { offset: 0.0 };
            }
            Scenario::Stein => {
                c.n = 10;
                c.d = 2;
                c.m = 1_000_000;
                c.spectrum = SpectrumSpec::Ladder { offset: 0.5 };
                c.frame = FrameSpec::Random;
            }
            Scenario::Marginals => {
                c.n = 4096;
            }
            Scenario::Entries => {
                c.n = 10_000;
                c.d = 3;
                c.m = 1000;
                c.control_replicas = 8;
                c.frame = FrameSpec::Entries {
                    picks: vec!["D 1".into(), "R 1 2".into(), "I 2 3".into()],
                };
            }
            Scenario::Submatrix => {
                c.n = 65_536;
                c.k = 32;
                c.replicas = 200;
            }
            Scenario::SchurHorn => {
                c.n = 2048;
                c.ladder = vec![256, 512, 1024];
            }
            Scenario::Induced => {
                c.s = 4096;
                c.d = 3;
                c.m = 2000;
                c.frame = FrameSpec::Tensor;
            }
            Scenario::Invariant => {
                c.m = 2000;
                c.frame = FrameSpec::Tensor;
            }
            Scenario::Bounds => {
                c.n = 100;
                c.d = 4;
                c.spectrum = SpectrumSpec::PmSplit { c: 10.0 };
            }
        }
        c
    }

    /// Builds a config from user JSON layered over the scenario defaults,
    /// then dotted-path overrides (`"frame.kind=random"`, values parsed as
    /// JSON when possible, otherwise as strings). The scenario is taken
    /// from `scenario` if given, else from the JSON.
    pub fn from_json_layers(scenario: Option<Scenario>, user: &Value, overrides: &[String]) -> Result<Self> {
        if !user.is_object() {
            return Err(Error::Config("config must be a JSON object".into()));
        }
        let from_json = match user.get("scenario") {
            Some(v) => Some(
                v.as_str()
                    .ok_or_else(|| Error::Config("scenario must be a string".into()))?
                    .parse::<Scenario>()?,
            ),
            None => None,
        };
        let scenario = match (scenario, from_json) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::Config(format!(
                    "config is for scenario {} but {} was requested",
                    b.name(),
                    a.name()
                )))
            }
            (Some(a), _) => a,
            (None, Some(b)) => b,
            (None, None) => return Err(Error::Config("no scenario given".into())),
        };
        let mut base = serde_json::to_value(ExperimentConfig::defaults(scenario))?;
        merge(&mut base, user);
        if let Some(obj) = base.as_object_mut() {
            obj.insert("scenario".into(), Value::String(scenario.name().into()));
        }
        for o in overrides {
            apply_override(&mut base, o)?;
        }
        let cfg: ExperimentConfig =
            serde_json::from_value(base).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(scenario: Option<Scenario>, text: &str, overrides: &[String]) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed config JSON: {e}")))?;
        Self::from_json_layers(scenario, &v, overrides)
    }

    /// Scenario-independent completeness checks; runners check the rest.
    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        if self.n == 0 {
            return Err(Error::Config("n must be >= 1".into()));
        }
        if self.m == 0 {
            return Err(Error::Config("m must be >= 1".into()));
        }
        if !(self.t >= 0.0) {
            return Err(Error::Config("t must be nonnegative".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        let f = self.tolerances.replica_fraction;
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::Config("replica_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn resolve_spectrum(&self) -> Result<Spectrum> {
        self.spectrum.resolve(self.n)
    }

    pub fn resolve_frame(&self) -> Result<CoefficientFrame> {
        self.frame.resolve(self.n, self.d, self.field, self.rng.fork("frame"))
    }
}

fn merge(base: &mut Value, user: &Value) {
    match (base, user) {
        (Value::Object(b), Value::Object(u)) => {
            for (k, v) in u {
                // Tagged enums are replaced wholesale so variant fields do
                // not leak across kinds.
                let tagged = v.get("kind").is_some();
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() && !tagged => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, u) => *b = u.clone(),
    }
}

fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    let mut cur = root;
    // Optional sections (e.g. `contrast`) start as null and accept any key.
    let mut fresh = false;
    for (i, key) in keys.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override path {path:?}: {key:?} is not inside an object")))?;
        if !fresh && !obj.contains_key(*key) {
            return Err(Error::Config(format!("override path {path:?}: unknown key {key:?}")));
        }
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        let next = obj.entry(key.to_string()).or_insert(Value::Null);
        fresh = next.is_null();
        if fresh {
            *next = Value::Object(Default::default());
        }
        cur = next;
    }
    Ok(())
}

/// Where a pass threshold comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdProvenance {
    /// A theorem's right-hand side, possibly plus a control allowance.
    PaperBound,
    /// Calibrated against a Gaussian-vs-Gaussian or resampling control.
    ControlCalibrated,
    /// A fixed Monte Carlo tolerance around a closed form or comparison law.
    Derived,
    /// Not asserted.
    ReportedOnly,
}

/// One pass/fail (or reported) comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Key of the compared value in `measured`.
    pub measured: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    pub provenance: ThresholdProvenance,
    /// `None` for reported-only checks.
    pub passed: Option<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// No asserted checks.
    Reported,
}

/// Long-form rows (one per replica, or one per estimated quantity).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    /// Optional row labels, written as a leading `label` column.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            labels: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn push_labeled(&mut self, label: &str, row: Vec<f64>) {
        self.labels.push(label.to_string());
        self.push(row);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Raw draws kept for plotting, `m × d` row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub d: usize,
    pub values: Vec<f64>,
    pub provenance: RngStream,
}

impl SampleSet {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().skip(j).step_by(self.d.max(1)).copied().collect()
    }
}

/// Output of a runner. Serialized as `report.json`; contains no timing so
/// that reruns are byte-identical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario: Scenario,
    pub status: Status,
    /// Key of the headline measured value.
    pub headline: Option<String>,
    pub measured: BTreeMap<String, f64>,
    pub bound: Option<BoundReport>,
    pub checks: Vec<Check>,
    pub pass_flags: BTreeMap<String, bool>,
    pub notes: Vec<String>,
    pub replicas: Table,
    pub samples: BTreeMap<String, SampleSet>,
    pub config: ExperimentConfig,
}

impl ExperimentReport {
    pub fn new(config: &ExperimentConfig) -> Self {
        ExperimentReport {
            scenario: config.scenario,
            status: Status::Reported,
            headline: None,
            measured: BTreeMap::new(),
            bound: None,
            checks: Vec::new(),
            pass_flags: BTreeMap::new(),
            notes: Vec::new(),
            replicas: Table::default(),
            samples: BTreeMap::new(),
            config: config.clone(),
        }
    }

    pub fn measure(&mut self, key: &str, value: f64) {
        self.measured.insert(key.to_string(), value);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn headline(&mut self, key: &str) {
        self.headline = Some(key.to_string());
    }

    fn check(&mut self, name: &str, key: &str, lower: Option<f64>, upper: Option<f64>, provenance: ThresholdProvenance) {
        let value = *self
            .measured
            .get(key)
            .unwrap_or_else(|| panic!("check {name} references unmeasured {key}"));
        let passed = match provenance {
            ThresholdProvenance::ReportedOnly => None,
            _ => Some(
                !value.is_nan() && lower.is_none_or(|l| value >= l) && upper.is_none_or(|u| value <= u),
            ),
        };
        if let Some(p) = passed {
            self.pass_flags.insert(name.to_string(), p);
        }
        self.checks.push(Check {
            name: name.to_string(),
            measured: key.to_string(),
            value,
            lower,
            upper,
            provenance,
            passed,
        });
    }

    /// Asserts `measured[key] ≤ threshold`.
    pub fn check_le(&mut self, name: &str, key: &str, threshold: f64, provenance: ThresholdProvenance) {
        self.check(name, key, None, Some(threshold), provenance);
    }

    /// Asserts `measured[key] ≥ threshold`.
    pub fn check_ge(&mut self, name: &str, key: &str, threshold: f64, provenance: ThresholdProvenance) {
        self.check(name, key, Some(threshold), None, provenance);
    }

    /// Asserts `lo ≤ measured[key] ≤ hi`.
    pub fn check_range(&mut self, name: &str, key: &str, lo: f64, hi: f64, provenance: ThresholdProvenance) {
        self.check(name, key, Some(lo), Some(hi), provenance);
    }

    /// Records `measured[key]` against `threshold` without asserting.
    pub fn report_le(&mut self, name: &str, key: &str, threshold: f64) {
        self.check(name, key, None, Some(threshold), ThresholdProvenance::ReportedOnly);
    }

    pub fn keep_sample(&mut self, name: &str, d: usize, values: Vec<f64>, provenance: RngStream) {
        if self.config.keep_samples {
            self.samples.insert(name.to_string(), SampleSet { d, values, provenance });
        }
    }

    fn finish(mut self) -> Self {
        let asserted: Vec<bool> = self.checks.iter().filter_map(|c| c.passed).collect();
        self.status = if asserted.is_empty() {
            Status::Reported
        } else if asserted.iter().all(|&p| p) {
            Status::Pass
        } else {
            Status::Fail
        };
        self
    }

    pub fn headline_value(&self) -> Option<f64> {
        self.headline.as_ref().and_then(|k| self.measured.get(k)).copied()
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }
}

/// Evaluates the bounds relevant to the configured spectrum and frame.
/// Headline: the entry bound when `tr Λ = 0`, else the marginal bound.
pub fn evaluate_bounds(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let spectrum = cfg.resolve_spectrum()?;
    let mut report = ExperimentReport::new(cfg);
    let traceless = spectrum.trace().abs() <= 1e-10 * spectrum.hs_norm().max(1.0);
    if traceless {
        let b = bounds::bound_entries(&spectrum, cfg.d)?;
        report.measure("entries", b.value);
        let sub = bounds::bound_submatrix_semicircle(&spectrum, cfg.k.min(cfg.n).max(1), cfg.t, &cfg.constants)?;
        report.measure("submatrix", sub.value);
        for key in ["semicircle_expectation", "tail_probability", "turning_point_k"] {
            report.measure(key, sub.ingredient(key).unwrap_or(f64::NAN));
        }
        report.bound = Some(b);
        report.headline("entries");
    }
    if !spectrum.is_scalar() {
        if let Ok(frame) = cfg.resolve_frame() {
            if frame.d() > 0 && frame.is_orthonormal() && frame.is_traceless() {
                let t0 = bounds::bound_t0(&spectrum, &frame, cfg.field)?;
                report.measure("marginal", t0.value);
                if !traceless {
                    report.bound = Some(t0);
                    report.headline("marginal");
                }
            }
        }
    }
    if report.headline.is_none() {
        return Err(Error::Config(
            "bounds: need a traceless spectrum or an orthonormal traceless frame".into(),
        ));
    }
    Ok(report.finish())
}

/// Runs the configured scenario.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let report = match cfg.scenario {
        Scenario::Oracles => verify_moment_oracles(cfg),
        Scenario::Stein => verify_stein_conditions(cfg),
        Scenario::Marginals => run_marginal_gaussianity(cfg),
        Scenario::Entries => run_entry_marginals(cfg),
        Scenario::Submatrix => run_submatrix_semicircle(cfg),
        Scenario::SchurHorn => run_schur_horn(cfg),
        Scenario::Induced => run_induced_state(cfg),
        Scenario::Invariant => run_invariant_ensemble(cfg),
        Scenario::Bounds => evaluate_bounds(cfg),
    }?;
    Ok(report.finish())
}
