//! Tail pooling in the Bayesian-valuation setting: feasibility of pairing
//! single-target states, the explicit pairing construction, the pooling
//! signal, and welfare/revenue of second-price auctions with high/low
//! bidders.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::auction::top_two;
use crate::error::{param, Error, Result};
use crate::lp::{LpProblem, Relation, Sense};
use crate::model::{BvsInstance, FeatureVector, ValidationReport, ValueDistribution};
use crate::rng::{paired_trials, Estimate};
use crate::scheme::Signal;

/// Relative tolerance of the balance test and the construction.
const BALANCE_TOL: f64 = 1e-12;

/// Whether no positive tail mass exceeds the sum of the others.
pub fn tail_balanced(masses: &[f64]) -> bool {
    let total: f64 = masses.iter().filter(|&&m| m > 0.0).sum();
    let max = masses.iter().cloned().fold(0.0, f64::max);
    max <= total - max + BALANCE_TOL * total
}

/// Detailed-balance pairing π over the positive-mass tail states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolingScheme {
    pub n: usize,
    /// Bidder index of each tail state e_i with positive mass.
    pub tail_states: Vec<usize>,
    pub masses: Vec<f64>,
    /// `rows[a][b]` is π(e_{tail_states[a]}, e_{tail_states[b]}).
    pub rows: Vec<Vec<f64>>,
}

impl PoolingScheme {
    pub fn validate(&self, tol: f64) -> ValidationReport {
        let mut r = ValidationReport::default();
        let t = self.tail_states.len();
        for a in 0..t {
            let sum: f64 = self.rows[a].iter().sum();
            if (sum - 1.0).abs() > tol {
                r.push(format!("row of e{} sums to {sum}", self.tail_states[a]));
            }
            if self.rows[a][a] != 0.0 {
                r.push(format!("e{} is paired with itself", self.tail_states[a]));
            }
            for b in 0..t {
                if self.rows[a][b] < 0.0 {
                    r.push(format!("negative entry at ({a},{b})"));
                }
                let lhs = self.masses[a] * self.rows[a][b];
                let rhs = self.masses[b] * self.rows[b][a];
                if (lhs - rhs).abs() > tol {
                    r.push(format!(
                        "detailed balance fails for (e{}, e{}): {lhs} vs {rhs}",
                        self.tail_states[a], self.tail_states[b]
                    ));
                }
            }
        }
        r
    }

    fn position(&self, bidder: usize) -> Option<usize> {
        self.tail_states.iter().position(|&b| b == bidder)
    }

    /// π(e_a, e_b) by bidder index.
    pub fn prob(&self, a: usize, b: usize) -> f64 {
        match (self.position(a), self.position(b)) {
            (Some(x), Some(y)) => self.rows[x][y],
            _ => 0.0,
        }
    }
}

/// Feasibility program for a pooling scheme: rows sum to one, detailed
/// balance, no self-pairing. Variable `a*t + b` is π(a, b).
pub fn build_lp3(masses: &[f64]) -> LpProblem {
    let tails: Vec<usize> = (0..masses.len()).filter(|&i| masses[i] > 0.0).collect();
    let t = tails.len();
    let mut lp = LpProblem::new(t * t, Sense::Maximize);
    for a in 0..t {
        lp.set_bounds(a * t + a, 0.0, 0.0);
        lp.add_constraint((0..t).map(|b| (a * t + b, 1.0)).collect(), Relation::Eq, 1.0);
        for b in a + 1..t {
            lp.add_constraint(
                vec![(a * t + b, masses[tails[a]]), (b * t + a, -masses[tails[b]])],
                Relation::Eq,
                0.0,
            );
        }
    }
    lp
}

/// Explicit pairing for tail-balanced masses.
///
/// Masses are sorted descending (ties by index). The top state is first
/// paired with the third and later states in order until its excess over the
/// second is used up. The remaining states below the top two are re-sorted
/// and chained from the bottom up, each paired with the one above it for
/// its whole residual mass. The last three residuals a, a, c are closed by
/// pairing each top state with the third for c/2 and the tops with each
/// other for a - c/2.
pub fn construct_pooling(masses: &[f64]) -> Result<PoolingScheme> {
    let n = masses.len();
    if masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
        return Err(param("tail masses must be nonnegative reals"));
    }
    let tails: Vec<usize> = (0..n).filter(|&i| masses[i] > 0.0).collect();
    let t = tails.len();
    if t < 2 {
        return Err(Error::Infeasible(format!("need two positive tail states, have {t}")));
    }
    if !tail_balanced(masses) {
        return Err(Error::Infeasible(format!("tail masses {masses:?} are not tail-balanced")));
    }
    let lam: Vec<f64> = tails.iter().map(|&i| masses[i]).collect();
    let total: f64 = lam.iter().sum();
    let tol = BALANCE_TOL * total;
    // Positions sorted by mass, descending; indices into `tails`.
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| lam[b].total_cmp(&lam[a]).then(a.cmp(&b)));
    let mut pair = vec![vec![0.0; t]; t];
    let mut res = lam.clone();
    let add = |pair: &mut Vec<Vec<f64>>, a: usize, b: usize, w: f64| {
        pair[a][b] += w;
        pair[b][a] += w;
    };

    if t == 2 {
        // Balance forces equal masses; pair them fully.
        let w = 0.5 * (lam[0] + lam[1]);
        add(&mut pair, 0, 1, w);
    } else {
        let (top, second) = (order[0], order[1]);
        let mut excess = res[top] - res[second];
        for &p in &order[2..] {
            if excess <= tol {
                break;
            }
            let w = excess.min(res[p]);
            add(&mut pair, top, p, w);
            res[top] -= w;
            res[p] -= w;
            excess -= w;
        }
        let mut rest: Vec<usize> = order[2..].to_vec();
        rest.sort_by(|&a, &b| res[b].total_cmp(&res[a]).then(a.cmp(&b)));
        for idx in (1..rest.len()).rev() {
            let (lo, hi) = (rest[idx], rest[idx - 1]);
            let w = res[lo].min(res[hi]);
            if w > 0.0 {
                add(&mut pair, lo, hi, w);
                res[hi] -= w;
                res[lo] = 0.0;
            }
        }
        let third = rest[0];
        let c = res[third];
        let a = 0.5 * (res[top] + res[second]);
        add(&mut pair, top, third, 0.5 * c);
        add(&mut pair, second, third, 0.5 * c);
        add(&mut pair, top, second, (a - 0.5 * c).max(0.0));
    }

    let rows = (0..t)
        .map(|a| (0..t).map(|b| pair[a][b] / lam[a]).collect())
        .collect();
    let scheme = PoolingScheme { n, tail_states: tails, masses: lam, rows };
    let report = scheme.validate(1e-9);
    if !report.is_empty() {
        return Err(Error::Infeasible(format!("pairing construction failed: {report}")));
    }
    Ok(scheme)
}

/// Reveal θ unless it is a tail state; pool a tail state with a partner
/// drawn from π(θ, ·).
pub fn tail_pool_signal<R: Rng + ?Sized>(theta: &FeatureVector, pi: &PoolingScheme, rng: &mut R) -> Result<Signal> {
    let Some(a) = theta.tail_bidder() else {
        return Ok(Signal::RevealedState(theta.to_string()));
    };
    let pos = pi
        .position(a)
        .ok_or_else(|| Error::Scheme(format!("tail state {theta} has no pooling row")))?;
    let row = &pi.rows[pos];
    let u = rng.random::<f64>();
    let mut acc = 0.0;
    let mut pick = row.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    for (b, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            pick = b;
            break;
        }
    }
    let partner = FeatureVector::one_hot(theta.len(), pi.tail_states[pick]);
    Signal::pooled(theta.clone(), partner)
}

/// Tail pooling for a given prior. Without a feasible pairing, tail states
/// are revealed like any other state and the approximation guarantee is
/// void.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailPooling {
    pub n: usize,
    pub pooling: Option<PoolingScheme>,
    pub guarantee_void: bool,
}

impl TailPooling {
    pub fn for_instance(instance: &BvsInstance) -> Self {
        let masses = instance.prior.tail_masses(instance.n);
        let positive = masses.iter().filter(|&&m| m > 0.0).count();
        match construct_pooling(&masses) {
            Ok(p) => TailPooling { n: instance.n, pooling: Some(p), guarantee_void: false },
            Err(_) => TailPooling { n: instance.n, pooling: None, guarantee_void: positive > 0 },
        }
    }

    pub fn signal<R: Rng + ?Sized>(&self, theta: &FeatureVector, rng: &mut R) -> Result<Signal> {
        match &self.pooling {
            Some(p) if theta.tail_bidder().is_some() => tail_pool_signal(theta, p, rng),
            _ => Ok(Signal::RevealedState(theta.to_string())),
        }
    }

    /// Each bidder's posterior probability of being targeted given `signal`.
    pub fn posterior(&self, signal: &Signal) -> Vec<f64> {
        match signal {
            Signal::PooledPair(x, y) => {
                let mut q = vec![0.0; self.n];
                let (a, b) = (x.tail_bidder().unwrap(), y.tail_bidder().unwrap());
                let p = self.pooling.as_ref().expect("pooled signal without pooling");
                let ma = p.masses[p.position(a).unwrap()] * p.prob(a, b);
                let mb = p.masses[p.position(b).unwrap()] * p.prob(b, a);
                q[a] = ma / (ma + mb);
                q[b] = mb / (ma + mb);
                q
            }
            Signal::RevealedState(s) => s
                .parse::<FeatureVector>()
                .map(|f| f.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
                .unwrap_or_else(|_| vec![0.0; self.n]),
            _ => vec![0.0; self.n],
        }
    }
}

// ---------------------------------------------------------------------------
// Welfare and revenue of k high and m low bidders

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Quadrature,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuctionStats {
    pub k: usize,
    pub m: usize,
    pub welfare: f64,
    pub revenue: f64,
    pub welfare_se: f64,
    pub revenue_se: f64,
    pub method: Method,
}

impl AuctionStats {
    fn exact(k: usize, m: usize, welfare: f64, revenue: f64, method: Method) -> Self {
        AuctionStats { k, m, welfare, revenue, welfare_se: 0.0, revenue_se: 0.0, method }
    }
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Adaptive Simpson integral of `f` over `[a, b]`, split at `breaks`.
pub(crate) fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut pts: Vec<f64> = breaks.iter().cloned().filter(|&x| x > a && x < b).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    // Extra uniform cuts keep narrow features from being stepped over.
    let mut grid = Vec::new();
    for w in pts.windows(2) {
        for i in 0..16 {
            grid.push(w[0] + (w[1] - w[0]) * i as f64 / 16.0);
        }
    }
    grid.push(b);
    let per = tol / grid.len() as f64;
    grid.windows(2)
        .map(|w| {
            // Nudge inside each piece so jumps at the ends do not leak in.
            let (lo, hi) = (w[0], w[1]);
            if hi <= lo {
                return 0.0;
            }
            let e = (hi - lo) * 1e-12;
            let (x0, x1) = (lo + e, hi - e);
            let fa = f(x0);
            let fb = f(x1);
            let fm = f(0.5 * (x0 + x1));
            let whole = (x1 - x0) / 6.0 * (fa + 4.0 * fm + fb);
            simpson(&f, x0, x1, fa, fm, fb, whole, per, 40) * (hi - lo) / (x1 - x0)
        })
        .sum()
}

const QUAD_TOL: f64 = 1e-10;

fn upper_limit(dists: &[ValueDistribution]) -> f64 {
    dists.iter().map(|d| d.upper()).fold(0.0, f64::max)
}

/// Welfare and revenue of k i.i.d. bidders by quadrature of
/// `∫ 1 - H^k` and `∫ 1 - kH^{k-1} + (k-1)H^k`.
pub fn stats_ak_quadrature(dist: &ValueDistribution, k: usize) -> Result<AuctionStats> {
    if k == 0 {
        return Err(param("the auction needs at least one bidder"));
    }
    dist.validate().into_result()?;
    let kf = k as f64;
    let top = upper_limit(&[*dist]);
    let bp = dist.breakpoints();
    let wel = integrate(|v| 1.0 - dist.cdf(v).powi(k as i32), 0.0, top, &bp, QUAD_TOL);
    let rev = if k == 1 {
        0.0
    } else {
        integrate(
            |v| {
                let h = dist.cdf(v);
                1.0 - kf * h.powi(k as i32 - 1) + (kf - 1.0) * h.powi(k as i32)
            },
            0.0,
            top,
            &bp,
            QUAD_TOL,
        )
    };
    Ok(AuctionStats::exact(k, 0, wel, rev, Method::Quadrature))
}

/// Welfare and revenue of k i.i.d. bidders drawn from `dist`.
pub fn stats_ak(dist: &ValueDistribution, k: usize) -> Result<AuctionStats> {
    if k == 0 {
        return Err(param("the auction needs at least one bidder"));
    }
    dist.validate().into_result()?;
    let kf = k as f64;
    let closed = |w: f64, r: f64| Ok(AuctionStats::exact(k, 0, w, r, Method::ClosedForm));
    match *dist {
        ValueDistribution::Uniform(a, b) => {
            let rev = if k == 1 { 0.0 } else { a + (b - a) * (kf - 1.0) / (kf + 1.0) };
            closed(a + (b - a) * kf / (kf + 1.0), rev)
        }
        ValueDistribution::Point(c) => closed(c, if k == 1 { 0.0 } else { c }),
        ValueDistribution::Bernoulli(v, p) => {
            let none = (1.0 - p).powi(k as i32);
            let one = kf * p * (1.0 - p).powi(k as i32 - 1);
            closed(v * (1.0 - none), if k == 1 { 0.0 } else { v * (1.0 - none - one) })
        }
        ValueDistribution::Exponential(_) => stats_ak_quadrature(dist, k),
    }
}

fn check_nk(n: usize, k: usize) -> Result<()> {
    if n < 2 {
        return Err(param(format!("need n >= 2 bidders, got {n}")));
    }
    if k > n {
        return Err(param(format!("high-bidder count {k} exceeds n = {n}")));
    }
    Ok(())
}

/// Quadrature route for k high and n-k low bidders via the cdfs of the
/// first and second order statistics.
pub fn stats_ank_quadrature(high: &ValueDistribution, low: &ValueDistribution, n: usize, k: usize) -> Result<AuctionStats> {
    check_nk(n, k)?;
    let m = n - k;
    let (ki, mi) = (k as i32, m as i32);
    let (kf, mf) = (k as f64, m as f64);
    let top = upper_limit(&[*high, *low]);
    let mut bp = high.breakpoints();
    bp.extend(low.breakpoints());
    let wel = integrate(|v| 1.0 - high.cdf(v).powi(ki) * low.cdf(v).powi(mi), 0.0, top, &bp, QUAD_TOL);
    let rev = integrate(
        |v| {
            let (h, l) = (high.cdf(v), low.cdf(v));
            let all = h.powi(ki) * l.powi(mi);
            let one_high = if k > 0 { kf * h.powi(ki - 1) * (1.0 - h) * l.powi(mi) } else { 0.0 };
            let one_low = if m > 0 { mf * l.powi(mi - 1) * (1.0 - l) * h.powi(ki) } else { 0.0 };
            1.0 - all - one_high - one_low
        },
        0.0,
        top,
        &bp,
        QUAD_TOL,
    );
    Ok(AuctionStats { k, m, welfare: wel, revenue: rev, welfare_se: 0.0, revenue_se: 0.0, method: Method::Quadrature })
}

/// Welfare and revenue with k bidders drawn from `high` and n-k from `low`.
pub fn stats_ank(high: &ValueDistribution, low: &ValueDistribution, n: usize, k: usize) -> Result<AuctionStats> {
    check_nk(n, k)?;
    let relabel = |s: AuctionStats| AuctionStats { k, m: n - k, ..s };
    if k == n || high == low {
        return stats_ak(high, n).map(relabel);
    }
    if k == 0 {
        return stats_ak(low, n).map(relabel);
    }
    if *low == ValueDistribution::Point(0.0) {
        // Low bidders bid 0, so only the k high draws matter.
        let s = stats_ak(high, k)?;
        return Ok(relabel(s));
    }
    stats_ank_quadrature(high, low, n, k)
}

/// Monte-Carlo route for k high and n-k low bidders.
pub fn stats_ank_mc(
    high: &ValueDistribution,
    low: &ValueDistribution,
    n: usize,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<AuctionStats> {
    check_nk(n, k)?;
    if trials == 0 {
        return Err(param("trials must be positive"));
    }
    let moments = paired_trials(trials, seed, |rng| {
        let v: Vec<f64> = (0..n).map(|i| if i < k { high.sample(rng) } else { low.sample(rng) }).collect();
        top_two(&v)
    });
    let (w, r) = (moments.estimate_a(), moments.estimate_b());
    Ok(AuctionStats {
        k,
        m: n - k,
        welfare: w.mean,
        revenue: r.mean,
        welfare_se: w.std_error,
        revenue_se: r.std_error,
        method: Method::MonteCarlo,
    })
}

/// Monte-Carlo route for k i.i.d. bidders.
pub fn stats_ak_mc(dist: &ValueDistribution, k: usize, trials: usize, seed: u64) -> Result<AuctionStats> {
    if k == 0 {
        return Err(param("the auction needs at least one bidder"));
    }
    let moments = paired_trials(trials, seed, |rng| {
        let mut v = vec![0.0; k.max(2)];
        for x in v.iter_mut().take(k) {
            *x = dist.sample(rng);
        }
        top_two(&v)
    });
    let (w, r) = (moments.estimate_a(), moments.estimate_b());
    Ok(AuctionStats {
        k,
        m: 0,
        welfare: w.mean,
        revenue: r.mean,
        welfare_se: w.std_error,
        revenue_se: r.std_error,
        method: Method::MonteCarlo,
    })
}

/// Default trial count for Monte-Carlo fallbacks.
pub const DEFAULT_TRIALS: usize = 100_000;

/// Revenue when two bidders are pooled (each bids ½(v(1,t) + v(0,t))) and
/// the other n-2 bid a low draw. Exact when low values are 0.
pub fn pooled_pair_revenue(high: &ValueDistribution, low: &ValueDistribution, n: usize) -> Result<Estimate> {
    if n < 2 {
        return Err(param(format!("pooling needs n >= 2, got {n}")));
    }
    if *low == ValueDistribution::Point(0.0) {
        // Bids are ½X for X ~ high and max2 is the smaller pooled bid.
        let s = stats_ak(high, 2)?;
        return Ok(Estimate::exact(0.5 * s.revenue));
    }
    pooled_pair_revenue_mc(high, low, n, DEFAULT_TRIALS, 0)
}

pub fn pooled_pair_revenue_mc(
    high: &ValueDistribution,
    low: &ValueDistribution,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<Estimate> {
    Ok(pooled_pair_draws(high, low, n, trials, seed)?.estimate_a())
}

/// Paired (pooled revenue, full-information welfare with bidder 0 targeted).
fn pooled_pair_draws(
    high: &ValueDistribution,
    low: &ValueDistribution,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<crate::rng::PairedMoments> {
    if n < 2 {
        return Err(param(format!("pooling needs n >= 2, got {n}")));
    }
    if trials == 0 {
        return Err(param("trials must be positive"));
    }
    Ok(paired_trials(trials, seed, |rng| {
        let mut bids = vec![0.0; n];
        let mut vals = vec![0.0; n];
        for i in 0..n {
            let t = rng.random::<f64>();
            let (h, l) = (high.quantile(t), low.quantile(t));
            bids[i] = if i < 2 { 0.5 * (h + l) } else { l };
            vals[i] = if i == 0 { h } else { l };
        }
        (top_two(&bids).1, top_two(&vals).0)
    }))
}

/// W_k(x) = Σ_{i≤k} x^i/i and R_k(x) = W_k(x) - x^k.
pub fn wk_rk(x: f64, k: usize) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&x) {
        return Err(param(format!("x must lie in [0,1], got {x}")));
    }
    if k == 0 {
        return Err(param("k must be positive"));
    }
    let mut w = 0.0;
    let mut p = 1.0;
    for i in 1..=k {
        p *= x;
        w += p / i as f64;
    }
    Ok((w, w - p))
}

pub fn harmonic(k: usize) -> f64 {
    (1..=k).map(|i| 1.0 / i as f64).sum()
}

/// Per-state revenue guarantee of tail pooling, as a fraction of
/// full-information welfare.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma6Report {
    pub n: usize,
    pub weight: usize,
    pub revenue: Estimate,
    pub welfare: Estimate,
    /// Revenue/welfare; `None` when welfare is 0 (the bound holds trivially).
    pub ratio: Option<Estimate>,
    /// Constant bound for the branch: 1/3, 1/6 or 1/8.
    pub bound: f64,
    /// Sharper bound including the logarithmic term.
    pub refined_bound: f64,
    pub passes: bool,
    pub passes_refined: bool,
    /// The guarantee is only claimed for n >= 22 on the targeted branches.
    pub guarantee_applies: bool,
}

/// Branch bounds (constant, refined) for |θ| = `weight` among `n` bidders.
pub fn lemma6_bounds(n: usize, weight: usize) -> (f64, f64) {
    let log_term = |k: usize| {
        let l = ((k + 1) as f64).ln();
        (l - 1.0) / l
    };
    match weight {
        0 => (1.0 / 3.0, (1.0f64 / 3.0).max(log_term(n))),
        1 => (1.0 / 8.0, 1.0 / 8.0),
        k => (1.0 / 6.0, (1.0f64 / 6.0).max(0.5 * log_term(k))),
    }
}

/// Compares tail-pooling revenue at a state with `weight` targeted bidders
/// against full-information welfare at that state.
pub fn check_lemma6(
    high: &ValueDistribution,
    low: &ValueDistribution,
    n: usize,
    weight: usize,
    trials: usize,
    seed: u64,
) -> Result<Lemma6Report> {
    check_nk(n, weight)?;
    for d in [high, low] {
        d.validate().into_result()?;
        if !d.is_mhr() {
            return Err(Error::Unsupported(format!("{d} is not MHR; the bound does not apply")));
        }
    }
    if high.mean() <= low.mean() {
        return Err(param("mean ordering violated: E[high] <= E[low]"));
    }
    let (bound, refined_bound) = lemma6_bounds(n, weight);
    let (revenue, welfare) = if weight == 1 {
        let welfare = Estimate::exact(stats_ank(high, low, n, 1)?.welfare);
        let revenue = if *low == ValueDistribution::Point(0.0) {
            pooled_pair_revenue(high, low, n)?
        } else {
            pooled_pair_revenue_mc(high, low, n, trials, seed)?
        };
        (revenue, welfare)
    } else {
        let s = stats_ank(high, low, n, weight)?;
        (Estimate::exact(s.revenue), Estimate::exact(s.welfare))
    };
    let ratio = (welfare.mean > 0.0).then(|| Estimate {
        mean: revenue.mean / welfare.mean,
        std_error: revenue.std_error / welfare.mean,
        trials: revenue.trials,
    });
    let check = |b: f64| match ratio {
        Some(r) => r.mean >= b - 3.0 * r.std_error,
        None => revenue.mean >= -3.0 * revenue.std_error,
    };
    Ok(Lemma6Report {
        n,
        weight,
        revenue,
        welfare,
        ratio,
        bound,
        refined_bound,
        passes: check(bound),
        passes_refined: check(refined_bound),
        guarantee_applies: weight == 0 || n >= 22,
    })
}

/// Paired Monte-Carlo check for the pooled branch: revenue and welfare from
/// common draws.
pub fn check_pooled_branch_mc(
    high: &ValueDistribution,
    low: &ValueDistribution,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<Estimate> {
    Ok(pooled_pair_draws(high, low, n, trials, seed)?.estimate_ratio())
}
