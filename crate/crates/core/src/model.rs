//! Problem instances for the known-valuation (KVS) and Bayesian-valuation
//! (BVS) settings, value distributions, feature priors and the generators
//! for the worked examples and separation constructions.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// Tolerance on exact probability masses.
pub const MASS_TOL: f64 = 1e-9;
/// Tolerance on closed-form pmf evaluations.
pub const PMF_TOL: f64 = 1e-12;

/// Quantile at which unbounded supports are truncated.
pub const TAIL_QUANTILE: f64 = 1.0 - 1e-9;

/// List of violated invariants; empty iff the input is well-formed.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport(pub Vec<String>);

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn push(&mut self, msg: impl Into<String>) {
        self.0.push(msg.into());
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(Error::Instance(self.0.join("; ")))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            write!(f, "ok")
        } else {
            write!(f, "{}", self.0.join("; "))
        }
    }
}

fn check_masses<'a>(masses: impl Iterator<Item = &'a f64>, report: &mut ValidationReport) {
    let mut sum = 0.0;
    for &m in masses {
        if !m.is_finite() || m < 0.0 {
            report.push(format!("mass {m} is negative or not finite"));
        }
        sum += m;
    }
    if (sum - 1.0).abs() > MASS_TOL {
        report.push(format!("masses sum to {sum}"));
    }
}

// ---------------------------------------------------------------------------
// Known-valuation setting

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KvsState {
    pub id: String,
    pub mass: f64,
    pub values: Vec<f64>,
}

fn unit_scale() -> f64 {
    1.0
}

fn is_unit_scale(s: &f64) -> bool {
    *s == 1.0
}

/// Explicit known-valuation instance.
///
/// Values are stored in their native units; `scale` is the normalization
/// factor so that every `value / scale` lies in `[0, 1]`. It is 1 for
/// instances that are already normalized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KvsInstance {
    pub n: usize,
    pub states: Vec<KvsState>,
    #[serde(default = "unit_scale", skip_serializing_if = "is_unit_scale")]
    pub scale: f64,
}

impl KvsInstance {
    pub fn new(n: usize, states: Vec<KvsState>) -> Self {
        KvsInstance { n, states, scale: 1.0 }
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.mass).collect()
    }

    pub fn state_index(&self, id: &str) -> Option<usize> {
        self.states.iter().position(|s| s.id == id)
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        if self.n == 0 {
            report.push("bidder count must be positive");
        }
        if self.states.is_empty() {
            report.push("no states");
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            report.push(format!("scale {} must be positive", self.scale));
        }
        check_masses(self.states.iter().map(|s| &s.mass), &mut report);
        let mut ids = HashSet::new();
        for s in &self.states {
            if !ids.insert(s.id.as_str()) {
                report.push(format!("duplicate state id {:?}", s.id));
            }
            if s.values.len() != self.n {
                report.push(format!(
                    "state {:?} has {} values, expected {}",
                    s.id,
                    s.values.len(),
                    self.n
                ));
            }
            for &v in &s.values {
                if !v.is_finite() || v < 0.0 || v > self.scale * (1.0 + 1e-12) {
                    report.push(format!(
                        "state {:?} value {v} outside [0, {}]",
                        s.id, self.scale
                    ));
                }
            }
        }
        report
    }

    /// Copy with values divided by `scale`.
    pub fn normalized(&self) -> KvsInstance {
        if self.scale == 1.0 {
            return self.clone();
        }
        let states = self
            .states
            .iter()
            .map(|s| KvsState {
                id: s.id.clone(),
                mass: s.mass,
                values: s.values.iter().map(|v| v / self.scale).collect(),
            })
            .collect();
        KvsInstance { n: self.n, states, scale: 1.0 }
    }

    /// Sorted distinct values of bidder `i` over states with positive mass.
    pub fn support(&self, i: usize) -> Vec<f64> {
        let mut vals: Vec<f64> = self
            .states
            .iter()
            .filter(|s| s.mass > 0.0)
            .map(|s| s.values[i])
            .collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        vals
    }

    /// Expected highest value, the ceiling for any revenue.
    pub fn surplus(&self) -> f64 {
        self.states
            .iter()
            .map(|s| s.mass * s.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .sum()
    }

    pub fn sampler(&self) -> KvsSampler<'_> {
        KvsSampler::new(self)
    }
}

/// Prior over the states of an instance, accessed only by sampling.
pub trait StateSampler: Sync {
    fn num_states(&self) -> usize;
    fn values(&self, state: usize) -> &[f64];
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize;

    /// Occurrence count of every state among `draws` independent samples.
    fn sample_counts<R: Rng + ?Sized>(&self, draws: usize, rng: &mut R) -> Vec<usize> {
        let mut counts = vec![0; self.num_states()];
        for _ in 0..draws {
            counts[self.sample(rng)] += 1;
        }
        counts
    }
}

/// Inverse-cdf sampler over an explicit instance.
#[derive(Clone, Debug)]
pub struct KvsSampler<'a> {
    instance: &'a KvsInstance,
    cumulative: Vec<f64>,
}

impl<'a> KvsSampler<'a> {
    pub fn new(instance: &'a KvsInstance) -> Self {
        let mut acc = 0.0;
        let cumulative = instance
            .states
            .iter()
            .map(|s| {
                acc += s.mass;
                acc
            })
            .collect();
        KvsSampler { instance, cumulative }
    }
}

impl StateSampler for KvsSampler<'_> {
    fn num_states(&self) -> usize {
        self.instance.states.len()
    }

    fn values(&self, state: usize) -> &[f64] {
        &self.instance.states[state].values
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().unwrap_or(&1.0);
        let u = rng.random::<f64>() * total;
        let idx = self.cumulative.partition_point(|&c| c <= u);
        // Skip zero-mass states that share a cumulative value.
        idx.min(self.cumulative.len() - 1)
    }

    /// Multinomial counts via sequential binomials, equal in law to
    /// counting `draws` single samples.
    fn sample_counts<R: Rng + ?Sized>(&self, draws: usize, rng: &mut R) -> Vec<usize> {
        let mut counts = vec![0; self.num_states()];
        let mut left = draws as u64;
        let mut rest: f64 = self.instance.states.iter().map(|s| s.mass).sum();
        for (c, s) in counts.iter_mut().zip(&self.instance.states) {
            if left == 0 {
                break;
            }
            let p = if rest > 0.0 { (s.mass / rest).clamp(0.0, 1.0) } else { 1.0 };
            let k = Binomial::new(left, p).expect("probability in [0,1]").sample(rng);
            *c = k as usize;
            left -= k;
            rest -= s.mass;
        }
        // Rounding in `rest` can leave draws unassigned; give them to the
        // last positive-mass state.
        if left > 0 {
            let last = self.instance.states.iter().rposition(|s| s.mass > 0.0).unwrap_or(0);
            counts[last] += left as usize;
        }
        counts
    }
}

// ---------------------------------------------------------------------------
// Value distributions

/// One-dimensional value distribution on `[0, ∞)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueDistribution {
    Point(f64),
    Uniform(f64, f64),
    /// Exponential with the given rate.
    Exponential(f64),
    /// Takes `value` with probability `p`, otherwise 0.
    Bernoulli(f64, f64),
}

impl ValueDistribution {
    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        match *self {
            ValueDistribution::Point(c) => {
                if !(c.is_finite() && c >= 0.0) {
                    r.push(format!("point({c}) must be a nonnegative real"));
                }
            }
            ValueDistribution::Uniform(a, b) => {
                if !(a.is_finite() && b.is_finite() && a >= 0.0 && b > a) {
                    r.push(format!("uniform({a},{b}) needs 0 <= a < b"));
                }
            }
            ValueDistribution::Exponential(rate) => {
                if !(rate.is_finite() && rate > 0.0) {
                    r.push(format!("exponential({rate}) needs a positive rate"));
                }
            }
            ValueDistribution::Bernoulli(v, p) => {
                if !(v.is_finite() && v >= 0.0 && (0.0..=1.0).contains(&p)) {
                    r.push(format!("bernoulli({v},{p}) needs value >= 0, p in [0,1]"));
                }
            }
        }
        r
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ValueDistribution::Point(c) => c,
            ValueDistribution::Uniform(a, b) => 0.5 * (a + b),
            ValueDistribution::Exponential(rate) => 1.0 / rate,
            ValueDistribution::Bernoulli(v, p) => v * p,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            ValueDistribution::Point(c) => {
                if x >= c {
                    1.0
                } else {
                    0.0
                }
            }
            ValueDistribution::Uniform(a, b) => ((x - a) / (b - a)).clamp(0.0, 1.0),
            ValueDistribution::Exponential(rate) => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            ValueDistribution::Bernoulli(v, p) => {
                if x >= v {
                    1.0
                } else if x >= 0.0 {
                    1.0 - p
                } else {
                    0.0
                }
            }
        }
    }

    /// Generalized inverse cdf, `inf { x : F(x) >= t }` for `t` in `(0, 1)`.
    pub fn quantile(&self, t: f64) -> f64 {
        match *self {
            ValueDistribution::Point(c) => c,
            ValueDistribution::Uniform(a, b) => a + (b - a) * t,
            ValueDistribution::Exponential(rate) => -(-t).ln_1p() / rate,
            ValueDistribution::Bernoulli(v, p) => {
                if t > 1.0 - p {
                    v
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }

    /// Discrete families carry atoms; MHR-based bounds do not apply to them.
    pub fn is_discrete(&self) -> bool {
        matches!(self, ValueDistribution::Point(_) | ValueDistribution::Bernoulli(..))
    }

    /// Monotone hazard rate. Point masses count as the degenerate MHR case.
    pub fn is_mhr(&self) -> bool {
        !matches!(self, ValueDistribution::Bernoulli(..))
    }

    /// Upper end of the support, truncated at [`TAIL_QUANTILE`] when unbounded.
    pub fn upper(&self) -> f64 {
        match *self {
            ValueDistribution::Point(c) => c,
            ValueDistribution::Uniform(_, b) => b,
            ValueDistribution::Exponential(_) => self.quantile(TAIL_QUANTILE),
            ValueDistribution::Bernoulli(v, _) => v,
        }
    }

    /// Points where the cdf is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            ValueDistribution::Point(c) => vec![c],
            ValueDistribution::Uniform(a, b) => vec![a, b],
            ValueDistribution::Exponential(_) => vec![0.0],
            ValueDistribution::Bernoulli(v, _) => vec![0.0, v],
        }
    }
}

impl fmt::Display for ValueDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueDistribution::Point(c) => write!(f, "point:{c}"),
            ValueDistribution::Uniform(a, b) => write!(f, "uniform:{a},{b}"),
            ValueDistribution::Exponential(r) => write!(f, "exponential:{r}"),
            ValueDistribution::Bernoulli(v, p) => write!(f, "bernoulli:{v},{p}"),
        }
    }
}

/// Parses the command-line form `family:p1[,p2]`, e.g. `uniform:0,1`.
impl FromStr for ValueDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (family, rest) = s
            .split_once(':')
            .ok_or_else(|| param(format!("distribution {s:?} must look like family:params")))?;
        let nums = rest
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| param(format!("distribution {s:?}: {e}")))?;
        let d = match (family, nums.as_slice()) {
            ("point", [c]) => ValueDistribution::Point(*c),
            ("uniform", [a, b]) => ValueDistribution::Uniform(*a, *b),
            ("exponential", [r]) => ValueDistribution::Exponential(*r),
            ("bernoulli", [v, p]) => ValueDistribution::Bernoulli(*v, *p),
            _ => return Err(param(format!("unknown distribution {s:?}"))),
        };
        d.validate().into_result()?;
        Ok(d)
    }
}

// ---------------------------------------------------------------------------
// Bayesian-valuation setting

/// Targeting bitvector θ ∈ {0,1}ⁿ, written as a string of `0`/`1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureVector(Vec<bool>);

impl FeatureVector {
    pub fn new(bits: Vec<bool>) -> Self {
        FeatureVector(bits)
    }

    pub fn zeros(n: usize) -> Self {
        FeatureVector(vec![false; n])
    }

    pub fn one_hot(n: usize, i: usize) -> Self {
        let mut bits = vec![false; n];
        bits[i] = true;
        FeatureVector(bits)
    }

    /// Bidders `0..k` targeted, the rest not.
    pub fn prefix(n: usize, k: usize) -> Self {
        FeatureVector((0..n).map(|i| i < k).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    /// Number of targeted bidders, |θ|.
    pub fn weight(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// The single targeted bidder of a tail state.
    pub fn tail_bidder(&self) -> Option<usize> {
        if self.weight() == 1 {
            self.0.iter().position(|&b| b)
        } else {
            None
        }
    }

    /// All 2ⁿ vectors in lexicographic order of their string form.
    pub fn enumerate(n: usize) -> Vec<FeatureVector> {
        assert!(n < 31, "enumeration of 2^{n} states");
        (0..1usize << n)
            .map(|code| FeatureVector((0..n).map(|i| code >> (n - 1 - i) & 1 == 1).collect()))
            .collect()
    }
}

impl fmt::Display for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for FeatureVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(param(format!("feature vector {s:?} must contain only 0/1"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(FeatureVector)
    }
}

impl Serialize for FeatureVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FeatureVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorAtom {
    pub state: FeatureVector,
    pub mass: f64,
}

/// Prior given as an explicit list of states, with its cdf precomputed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<PriorAtom>", into = "Vec<PriorAtom>")]
pub struct ExplicitPrior {
    atoms: Vec<PriorAtom>,
    cumulative: Vec<f64>,
}

impl From<Vec<PriorAtom>> for ExplicitPrior {
    fn from(atoms: Vec<PriorAtom>) -> Self {
        let mut acc = 0.0;
        let cumulative = atoms
            .iter()
            .map(|a| {
                acc += a.mass;
                acc
            })
            .collect();
        ExplicitPrior { atoms, cumulative }
    }
}

impl From<ExplicitPrior> for Vec<PriorAtom> {
    fn from(p: ExplicitPrior) -> Self {
        p.atoms
    }
}

impl ExplicitPrior {
    pub fn atoms(&self) -> &[PriorAtom] {
        &self.atoms
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &FeatureVector {
        let total = *self.cumulative.last().unwrap_or(&1.0);
        let u = rng.random::<f64>() * total;
        let idx = self.cumulative.partition_point(|&c| c <= u).min(self.atoms.len() - 1);
        &self.atoms[idx].state
    }
}

/// User-supplied prior with sampling and pmf access.
pub trait FeatureSampler: fmt::Debug + Send + Sync {
    fn n(&self) -> usize;
    fn pmf(&self, state: &FeatureVector) -> f64;
    fn sample(&self, rng: &mut dyn RngCore) -> FeatureVector;

    /// Per-bidder `Pr(θ_i = 1)`, when known.
    fn marginals(&self) -> Option<Vec<f64>> {
        None
    }
}

/// Prior over targeting vectors.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeaturePrior {
    /// Each θ_i = 1 independently with the given probability.
    Iid(f64),
    Explicit(ExplicitPrior),
    #[serde(skip)]
    Sampler(Arc<dyn FeatureSampler>),
}

impl PartialEq for FeaturePrior {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (FeaturePrior::Iid(a), FeaturePrior::Iid(b)) => a == b,
            (FeaturePrior::Explicit(a), FeaturePrior::Explicit(b)) => a == b,
            (FeaturePrior::Sampler(a), FeaturePrior::Sampler(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl FeaturePrior {
    pub fn explicit(atoms: Vec<PriorAtom>) -> Self {
        FeaturePrior::Explicit(atoms.into())
    }

    pub fn pmf(&self, state: &FeatureVector) -> f64 {
        match self {
            FeaturePrior::Iid(eps) => {
                let k = state.weight() as i32;
                let n = state.len() as i32;
                eps.powi(k) * (1.0 - eps).powi(n - k)
            }
            FeaturePrior::Explicit(p) => p
                .atoms
                .iter()
                .filter(|a| &a.state == state)
                .map(|a| a.mass)
                .sum(),
            FeaturePrior::Sampler(s) => s.pmf(state),
        }
    }

    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> FeatureVector {
        match self {
            FeaturePrior::Iid(eps) => {
                FeatureVector((0..n).map(|_| rng.random::<f64>() < *eps).collect())
            }
            FeaturePrior::Explicit(p) => p.sample(rng).clone(),
            FeaturePrior::Sampler(s) => s.sample(rng),
        }
    }

    pub fn marginals(&self, n: usize) -> Option<Vec<f64>> {
        match self {
            FeaturePrior::Iid(eps) => Some(vec![*eps; n]),
            FeaturePrior::Explicit(p) => {
                let mut m = vec![0.0; n];
                for a in &p.atoms {
                    for (i, &b) in a.state.bits().iter().enumerate() {
                        if b {
                            m[i] += a.mass;
                        }
                    }
                }
                Some(m)
            }
            FeaturePrior::Sampler(s) => s.marginals(),
        }
    }

    /// Masses λ(e_i) of the tail states.
    pub fn tail_masses(&self, n: usize) -> Vec<f64> {
        match self {
            FeaturePrior::Iid(eps) => vec![eps * (1.0 - eps).powi(n as i32 - 1); n],
            FeaturePrior::Explicit(p) => {
                let mut m = vec![0.0; n];
                for a in &p.atoms {
                    if let Some(i) = a.state.tail_bidder() {
                        m[i] += a.mass;
                    }
                }
                m
            }
            FeaturePrior::Sampler(s) => (0..n).map(|i| s.pmf(&FeatureVector::one_hot(n, i))).collect(),
        }
    }

    /// Every state with its mass, when the support is small enough to list.
    pub fn enumerate(&self, n: usize) -> Option<Vec<(FeatureVector, f64)>> {
        match self {
            FeaturePrior::Explicit(p) => {
                Some(p.atoms.iter().map(|a| (a.state.clone(), a.mass)).collect())
            }
            FeaturePrior::Iid(_) if n <= 20 => Some(
                FeatureVector::enumerate(n)
                    .into_iter()
                    .map(|s| {
                        let m = self.pmf(&s);
                        (s, m)
                    })
                    .collect(),
            ),
            _ => None,
        }
    }
}

/// Bayesian-valuation instance: targeting prior plus high/low value
/// distributions shared by all bidders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BvsInstance {
    pub n: usize,
    pub prior: FeaturePrior,
    pub high: ValueDistribution,
    pub low: ValueDistribution,
}

impl BvsInstance {
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        if self.n == 0 {
            report.push("bidder count must be positive");
        }
        report.0.extend(self.high.validate().0);
        report.0.extend(self.low.validate().0);
        if self.high.mean() <= self.low.mean() {
            report.push(format!(
                "mean ordering violated: E[high] = {} <= E[low] = {}",
                self.high.mean(),
                self.low.mean()
            ));
        }
        match &self.prior {
            FeaturePrior::Iid(eps) => {
                if !(0.0..=1.0).contains(eps) {
                    report.push(format!("iid probability {eps} outside [0,1]"));
                }
            }
            FeaturePrior::Explicit(p) => {
                check_masses(p.atoms.iter().map(|a| &a.mass), &mut report);
                let mut seen = HashSet::new();
                for a in &p.atoms {
                    if a.state.len() != self.n {
                        report.push(format!("state {} has length {}, expected {}", a.state, a.state.len(), self.n));
                    }
                    if !seen.insert(&a.state) {
                        report.push(format!("duplicate state {}", a.state));
                    }
                }
            }
            FeaturePrior::Sampler(s) => {
                if s.n() != self.n {
                    report.push(format!("sampler has {} bidders, expected {}", s.n(), self.n));
                }
            }
        }
        report
    }

    /// Bidder value given targeting bit and type quantile `t`. Types are
    /// coupled comonotonically: `v(1,t) = H⁻¹(t)`, `v(0,t) = L⁻¹(t)`.
    pub fn value(&self, targeted: bool, t: f64) -> f64 {
        if targeted {
            self.high.quantile(t)
        } else {
            self.low.quantile(t)
        }
    }

    /// Bid of a bidder whose posterior on being targeted is `q`.
    pub fn posterior_bid(&self, q: f64, t: f64) -> f64 {
        q * self.high.quantile(t) + (1.0 - q) * self.low.quantile(t)
    }
}

/// Either kind of instance, as stored in JSON files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Instance {
    Kvs(KvsInstance),
    Bvs(BvsInstance),
}

impl Instance {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> ValidationReport {
        match self {
            Instance::Kvs(k) => k.validate(),
            Instance::Bvs(b) => b.validate(),
        }
    }
}

pub fn validate(instance: &Instance) -> ValidationReport {
    instance.validate()
}

// ---------------------------------------------------------------------------
// Generators

/// Two bidders, profiles (1,2) and (7,7) with mass 1/2 each. Values are
/// kept in native units with scale 7.
pub fn make_example1() -> KvsInstance {
    KvsInstance {
        n: 2,
        states: vec![
            KvsState { id: "A".into(), mass: 0.5, values: vec![1.0, 2.0] },
            KvsState { id: "B".into(), mass: 0.5, values: vec![7.0, 7.0] },
        ],
        scale: 7.0,
    }
}

/// Three bidders where private signaling beats every public scheme.
pub fn make_example3(eps: f64) -> Result<KvsInstance> {
    if !(eps > 0.0 && eps < 1.0 / 3.0) {
        return Err(param(format!("example 3 needs 0 < eps < 1/3, got {eps}")));
    }
    Ok(KvsInstance::new(
        3,
        vec![
            KvsState { id: "A".into(), mass: 1.0 - eps, values: vec![2.0 * eps, eps, 1.0] },
            KvsState { id: "B".into(), mass: eps, values: vec![1.0, 1.0 - eps, eps] },
        ],
    ))
}

/// Symmetric instance behind the signal-count lower bound: high values are
/// Bernoulli(1, 1/√n), low values are 0, targeting bits i.i.d. Bernoulli(ε).
pub fn make_theorem2_instance(n: usize, eps: f64) -> Result<BvsInstance> {
    if n < 4 {
        return Err(param(format!("separation instance needs n >= 4, got {n}")));
    }
    if !(eps > 0.0 && eps < 1.0 / 3.0) {
        return Err(param(format!("separation instance needs 0 < eps < 1/3, got {eps}")));
    }
    Ok(BvsInstance {
        n,
        prior: FeaturePrior::Iid(eps),
        high: ValueDistribution::Bernoulli(1.0, 1.0 / (n as f64).sqrt()),
        low: ValueDistribution::Point(0.0),
    })
}

/// One uniformly chosen bidder is targeted with U[0,1] value; everyone
/// else values the item at 0.
pub fn make_example2(n: usize) -> Result<BvsInstance> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(param(format!("example 2 needs an even n >= 2, got {n}")));
    }
    let atoms = (0..n)
        .map(|i| PriorAtom { state: FeatureVector::one_hot(n, i), mass: 1.0 / n as f64 })
        .collect();
    Ok(BvsInstance {
        n,
        prior: FeaturePrior::explicit(atoms),
        high: ValueDistribution::Uniform(0.0, 1.0),
        low: ValueDistribution::Point(0.0),
    })
}

fn random_masses<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<f64> {
    // Flat Dirichlet via normalized exponentials.
    let raw: Vec<f64> = (0..count).map(|_| -(1.0 - rng.random::<f64>()).ln() + 1e-6).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Random instance with U[0,1] values and flat-Dirichlet masses.
pub fn random_kvs<R: Rng + ?Sized>(n: usize, num_states: usize, rng: &mut R) -> KvsInstance {
    let masses = random_masses(num_states, rng);
    let states = masses
        .into_iter()
        .enumerate()
        .map(|(s, mass)| KvsState {
            id: format!("s{s}"),
            mass,
            values: (0..n).map(|_| rng.random::<f64>()).collect(),
        })
        .collect();
    KvsInstance::new(n, states)
}

/// Instance whose states are every profile of `∏ supports[i]`, with random
/// strictly positive masses.
pub fn random_lattice<R: Rng + ?Sized>(supports: &[Vec<f64>], rng: &mut R) -> KvsInstance {
    let n = supports.len();
    let mut profiles: Vec<Vec<f64>> = vec![vec![]];
    for sup in supports {
        profiles = profiles
            .into_iter()
            .flat_map(|p| {
                sup.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    let masses = random_masses(profiles.len(), rng);
    let states = profiles
        .into_iter()
        .zip(masses)
        .enumerate()
        .map(|(s, (values, mass))| KvsState { id: format!("p{s:03}"), mass, values })
        .collect();
    KvsInstance::new(n, states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive;

    #[test]
    fn example_generators_are_valid() {
        assert!(make_example1().validate().is_empty());
        let ex3 = make_example3(0.1).unwrap();
        assert!(ex3.validate().is_empty());
        assert_eq!(ex3.masses(), vec![0.9, 0.1]);
        assert_eq!(ex3.states[0].values, vec![0.2, 0.1, 1.0]);
        assert_eq!(ex3.states[1].values, vec![1.0, 0.9, 0.1]);
        assert_eq!(make_example3(0.25).unwrap().masses(), vec![0.75, 0.25]);
        assert!(make_example3(0.5).is_err());
        assert!(make_example2(4).unwrap().validate().is_empty());
        assert!(make_theorem2_instance(4, 0.1).unwrap().validate().is_empty());
    }

    #[test]
    fn example1_profiles() {
        let ex1 = make_example1();
        assert_eq!(ex1.masses(), vec![0.5, 0.5]);
        assert_eq!(ex1.states[0].values, vec![1.0, 2.0]);
        assert_eq!(ex1.states[1].values, vec![7.0, 7.0]);
        assert_eq!(ex1.masses().iter().sum::<f64>(), 1.0);
        let norm = ex1.normalized();
        assert!(norm.validate().is_empty());
        assert_eq!(norm.states[1].values, vec![1.0, 1.0]);
    }

    #[test]
    fn validation_messages() {
        let mut bad = make_example3(0.1).unwrap();
        bad.states[0].mass = 0.6;
        bad.states[1].mass = 0.6;
        let r = bad.validate();
        assert!(r.0.iter().any(|m| m.contains("masses sum to 1.2")), "{r}");

        let mut over = make_example3(0.1).unwrap();
        over.states[0].values[2] = 1.5;
        assert!(!over.validate().is_empty());

        let mut dup = make_example3(0.1).unwrap();
        dup.states[1].id = "A".into();
        assert!(dup.validate().0.iter().any(|m| m.contains("duplicate")));

        let bvs = BvsInstance {
            n: 2,
            prior: FeaturePrior::Iid(0.5),
            high: ValueDistribution::Point(0.2),
            low: ValueDistribution::Point(0.5),
        };
        assert!(bvs.validate().0.iter().any(|m| m.contains("mean ordering violated")));
    }

    #[test]
    fn theorem2_parameters() {
        let inst = make_theorem2_instance(4, 0.1).unwrap();
        assert_eq!(inst.high, ValueDistribution::Bernoulli(1.0, 0.5));
        assert_eq!(inst.low, ValueDistribution::Point(0.0));
        assert_eq!(inst.prior, FeaturePrior::Iid(0.1));
        let big = make_theorem2_instance(100, 0.3).unwrap();
        assert_eq!(big.high, ValueDistribution::Bernoulli(1.0, 0.1));
        assert!(make_theorem2_instance(2, 0.1).is_err());
    }

    #[test]
    fn theorem2_pmf_formula() {
        let inst = make_theorem2_instance(6, 0.2).unwrap();
        let mut total = 0.0;
        for s in FeatureVector::enumerate(6) {
            let k = s.weight() as i32;
            let want = 0.2f64.powi(k) * 0.8f64.powi(6 - k);
            let got = inst.prior.pmf(&s);
            assert!((got - want).abs() <= PMF_TOL);
            total += got;
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn example2_states() {
        let e = make_example2(4).unwrap();
        let atoms = e.prior.enumerate(4).unwrap();
        assert_eq!(atoms.len(), 4);
        assert!(atoms.iter().all(|(s, m)| s.weight() == 1 && *m == 0.25));
        assert_eq!(make_example2(2).unwrap().prior.enumerate(2).unwrap().len(), 2);
        assert!(make_example2(3).is_err());
    }

    fn sampling_matches_pmf(prior: &FeaturePrior, n: usize, seed: u64) {
        let draws = 100_000;
        let mut rng = derive(seed, 0);
        let mut counts = std::collections::HashMap::new();
        for _ in 0..draws {
            *counts.entry(prior.sample(n, &mut rng)).or_insert(0usize) += 1;
        }
        for (s, p) in prior.enumerate(n).unwrap() {
            let freq = *counts.get(&s).unwrap_or(&0) as f64 / draws as f64;
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((freq - p).abs() <= 4.0 * se + 1e-12, "{s}: {freq} vs {p}");
        }
    }

    #[test]
    fn sampled_frequencies_match_pmf() {
        sampling_matches_pmf(&FeaturePrior::Iid(0.3), 4, 1);
        sampling_matches_pmf(&make_example2(4).unwrap().prior, 4, 2);
    }

    #[test]
    fn kvs_sampler_frequencies() {
        let inst = make_example3(0.1).unwrap();
        let sampler = inst.sampler();
        let mut rng = derive(3, 0);
        let hits = (0..100_000).filter(|_| sampler.sample(&mut rng) == 1).count();
        let se = (0.09f64 / 100_000.0).sqrt();
        assert!((hits as f64 / 1e5 - 0.1).abs() < 4.0 * se);
    }

    #[test]
    fn json_schema() {
        let k = r#"{"kind":"kvs","n":3,"states":[{"id":"A","mass":0.9,"values":[0.2,0.1,1.0]},{"id":"B","mass":0.1,"values":[1.0,0.9,0.1]}]}"#;
        match Instance::from_json(k).unwrap() {
            Instance::Kvs(inst) => assert_eq!(inst, make_example3(0.1).unwrap()),
            _ => panic!(),
        }
        let b = r#"{"kind":"bvs","n":4,"prior":{"iid":0.1},"high":{"bernoulli":[1.0,0.5]},"low":{"point":0.0}}"#;
        match Instance::from_json(b).unwrap() {
            Instance::Bvs(inst) => assert_eq!(inst, make_theorem2_instance(4, 0.1).unwrap()),
            _ => panic!(),
        }
        let unknown = r#"{"kind":"kvs","n":1,"extra":3,"states":[]}"#;
        assert!(Instance::from_json(unknown).is_err());
        let unknown_state = r#"{"kind":"kvs","n":1,"states":[{"id":"A","mass":1,"values":[0],"x":1}]}"#;
        assert!(Instance::from_json(unknown_state).is_err());
        let ex2 = Instance::Bvs(make_example2(2).unwrap());
        let back = Instance::from_json(&ex2.to_json().unwrap()).unwrap();
        assert_eq!(back, ex2);
    }

    #[test]
    fn distribution_strings() {
        assert_eq!("uniform:0,1".parse::<ValueDistribution>().unwrap(), ValueDistribution::Uniform(0.0, 1.0));
        assert_eq!("point:0".parse::<ValueDistribution>().unwrap(), ValueDistribution::Point(0.0));
        assert!("uniform:1,0".parse::<ValueDistribution>().is_err());
        assert!("gamma:1".parse::<ValueDistribution>().is_err());
    }

    #[test]
    fn quantile_inverts_cdf() {
        for d in [
            ValueDistribution::Uniform(0.5, 2.0),
            ValueDistribution::Exponential(4.0),
        ] {
            for t in [0.01, 0.3, 0.77, 0.999] {
                assert!((d.cdf(d.quantile(t)) - t).abs() < 1e-12);
            }
        }
        let b = ValueDistribution::Bernoulli(1.0, 0.25);
        assert_eq!(b.quantile(0.7), 0.0);
        assert_eq!(b.quantile(0.8), 1.0);
    }
}
