//! Private signaling in the known-valuation setting.
//!
//! One bidder j is left uninformed about whether the profile is v or a
//! low-probability auxiliary profile u; everyone else learns the profile.
//! When u has a unique top bidder j whose runner-up u_[2] sits just below
//! v_[1], bidder j's best responses all bid at least u_[2], so revenue at v
//! is at least u_[2] in every equilibrium where informed bidders bid
//! truthfully. Auxiliary profiles are either other states of the instance
//! or mixtures of two lattice profiles built per case.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::auction::top_two;
use crate::error::{param, Error, Result};
use crate::model::{KvsInstance, StateSampler};
use crate::rng::Estimate;

/// Relative tolerance when comparing expected utilities.
const UTILITY_TOL: f64 = 1e-12;

/// Bids `[lo, hi)`; `hi` is infinite for the last interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BidInterval {
    pub lo: f64,
    pub hi: f64,
    pub utility: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    /// Distinct highest opposing bids, ascending.
    pub breakpoints: Vec<f64>,
    pub intervals: Vec<BidInterval>,
    /// Utility-maximizing bids, adjacent intervals merged.
    pub best: Vec<BidInterval>,
    pub max_utility: f64,
}

impl BestResponse {
    /// Infimum of the best-response set.
    pub fn lowest_bid(&self) -> f64 {
        self.best[0].lo
    }

    pub fn contains(&self, b: f64) -> bool {
        self.best.iter().any(|iv| b >= iv.lo && b < iv.hi)
    }
}

/// Expected-utility analysis for bidder `j`, who only knows the posterior
/// over profiles, against opponents bidding `informed_bids[p]` at profile p.
///
/// Bidder j wins an exact tie with the highest opposing bid, so each
/// interval between consecutive opposing maxima is closed on the left.
pub fn uninformed_best_response(
    posterior: &[(f64, Vec<f64>)],
    j: usize,
    informed_bids: &[Vec<f64>],
) -> Result<BestResponse> {
    if posterior.is_empty() || posterior.iter().all(|p| p.0 <= 0.0) {
        return Err(param("empty posterior"));
    }
    if informed_bids.len() != posterior.len() {
        return Err(param("one bid vector per posterior profile is required"));
    }
    let opp: Vec<f64> = informed_bids
        .iter()
        .map(|b| {
            b.iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &x)| x)
                .fold(0.0, f64::max)
        })
        .collect();
    let mut breakpoints: Vec<f64> = opp.clone();
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();

    // Utility on [m_k, m_{k+1}) is the gain from every profile whose
    // opposing maximum is at most m_k.
    let scale = posterior
        .iter()
        .map(|(m, prof)| m * prof[j].abs().max(1.0))
        .sum::<f64>()
        .max(1e-300);
    let gain = |threshold: f64| -> f64 {
        posterior
            .iter()
            .zip(&opp)
            .filter(|(_, &m)| m <= threshold)
            .map(|((mass, prof), &m)| mass * (prof[j] - m))
            .sum()
    };
    let mut intervals = Vec::new();
    if breakpoints[0] > 0.0 {
        intervals.push(BidInterval { lo: 0.0, hi: breakpoints[0], utility: 0.0 });
    }
    for (k, &m) in breakpoints.iter().enumerate() {
        let hi = breakpoints.get(k + 1).copied().unwrap_or(f64::INFINITY);
        intervals.push(BidInterval { lo: m, hi, utility: gain(m) });
    }
    let max_utility = intervals.iter().map(|iv| iv.utility).fold(f64::NEG_INFINITY, f64::max);
    let mut best: Vec<BidInterval> = Vec::new();
    for iv in &intervals {
        if iv.utility >= max_utility - UTILITY_TOL * scale {
            match best.last_mut() {
                Some(last) if last.hi == iv.lo => last.hi = iv.hi,
                _ => best.push(*iv),
            }
        }
    }
    Ok(BestResponse { breakpoints, intervals, best, max_utility })
}

/// Two candidate profiles for the uninformed bidder: v with mass 1-δ and
/// the auxiliary profile u with mass δ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoProfileStructure {
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    pub delta: f64,
    pub uninformed: usize,
}

impl TwoProfileStructure {
    pub fn validate(&self) -> Result<()> {
        let n = self.v.len();
        let j = self.uninformed;
        let bad = |m: String| Err(Error::Scheme(m));
        if self.u.len() != n || j >= n || n < 2 {
            return bad("profiles must have equal length >= 2 and j must index a bidder".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta {} must lie in (0,1)", self.delta));
        }
        let u_others = self.u.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, &x)| x).fold(f64::NEG_INFINITY, f64::max);
        if self.u[j] <= u_others {
            return bad(format!("bidder {j} does not hold the unique top value of u"));
        }
        let (v1, _) = top_two(&self.v);
        let v_others = self.v.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, &x)| x).fold(f64::NEG_INFINITY, f64::max);
        if v_others < v1 {
            return bad(format!("bidder {j} alone holds the top value of v"));
        }
        if u_others >= v1 {
            return bad(format!("runner-up of u ({u_others}) must lie strictly below the top of v ({v1})"));
        }
        Ok(())
    }

    /// u_[2], the floor on j's bids in every best response.
    pub fn floor(&self) -> f64 {
        top_two(&self.u).1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorstBne {
    pub best_response: BestResponse,
    /// Lowest bid in j's best-response set.
    pub worst_bid: f64,
    pub revenue_at_v: f64,
    pub revenue_at_u: f64,
    /// (1-δ)·revenue_at_v + δ·revenue_at_u.
    pub expected: f64,
}

/// Revenue at `bids` with bidder `j` replaced by `b`.
fn revenue_with(bids: &[f64], j: usize, b: f64) -> f64 {
    let mut all = bids.to_vec();
    all[j] = b;
    top_two(&all).1
}

/// Worst equilibrium revenue when informed bidders bid truthfully.
/// Revenue is nondecreasing in j's bid, so the worst case is the infimum of
/// the best-response set.
pub fn worst_bne_revenue(s: &TwoProfileStructure) -> Result<WorstBne> {
    s.validate()?;
    let posterior = vec![(1.0 - s.delta, s.v.clone()), (s.delta, s.u.clone())];
    let bids = vec![s.v.clone(), s.u.clone()];
    let br = uninformed_best_response(&posterior, s.uninformed, &bids)?;
    let b = br.lowest_bid();
    let rv = revenue_with(&s.v, s.uninformed, b);
    let ru = revenue_with(&s.u, s.uninformed, b);
    Ok(WorstBne {
        best_response: br,
        worst_bid: b,
        revenue_at_v: rv,
        revenue_at_u: ru,
        expected: (1.0 - s.delta) * rv + s.delta * ru,
    })
}

/// Largest value over all states and bidders (ρ*, held by i*) and the
/// largest value of any other bidder (ρ**, held by i**). Ties go to the
/// lowest index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extremes {
    pub rho_star: f64,
    pub i_star: usize,
    pub rho_2: f64,
    pub i_2: usize,
}

impl Extremes {
    /// Over states of positive mass.
    pub fn of(instance: &KvsInstance) -> Self {
        let n = instance.n;
        let best = |skip: Option<usize>| {
            let mut out = (f64::NEG_INFINITY, usize::MAX);
            for i in (0..n).filter(|&i| Some(i) != skip) {
                for s in instance.states.iter().filter(|s| s.mass > 0.0) {
                    if s.values[i] > out.0 {
                        out = (s.values[i], i);
                    }
                }
            }
            out
        };
        let (rho_star, i_star) = best(None);
        let (rho_2, i_2) = if n >= 2 { best(Some(i_star)) } else { (0.0, i_star) };
        Extremes { rho_star, i_star, rho_2, i_2 }
    }
}

/// Which auxiliary construction applies to profile `v`.
pub fn classify_case(v: &[f64], ex: &Extremes) -> Result<u8> {
    let (v1, _) = top_two(v);
    if v.iter().all(|&x| x == 0.0) {
        return Err(Error::Scheme("all-zero profile: no construction applies".into()));
    }
    let tops = v.iter().filter(|&&x| x == v1).count();
    if tops > 1 {
        return Ok(0);
    }
    let vi = v[ex.i_star];
    if vi <= ex.rho_2 {
        Ok(if vi < v1 { 1 } else { 2 })
    } else {
        Ok(3)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryConstruction {
    pub case_id: u8,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    /// Probability of w1 in the mixture.
    pub q: f64,
    pub u: Vec<f64>,
    pub uninformed: usize,
}

/// Builds the mixture u = q·w1 + (1-q)·w2 for profile `v`. When `supports`
/// is given, w1 and w2 must lie in the product of the supports.
pub fn build_auxiliary(
    v: &[f64],
    case_id: u8,
    ex: &Extremes,
    eps: f64,
    supports: Option<&[Vec<f64>]>,
) -> Result<AuxiliaryConstruction> {
    let (v1, _) = top_two(v);
    if !(eps > 0.0 && eps < v1) {
        return Err(param(format!("construction gap {eps} must lie in (0, v_[1] = {v1})")));
    }
    let argmax = v.iter().position(|&x| x == v1).unwrap();
    let (w1, w2, q, j) = match case_id {
        0 => {
            let tilde = v.iter().rposition(|&x| x == v1).unwrap();
            let w2 = v
                .iter()
                .enumerate()
                .map(|(i, &x)| if x == v1 && i != tilde { 0.0 } else { x })
                .collect();
            (v.to_vec(), w2, 1.0 - eps / v1, tilde)
        }
        1 => {
            let mut w1 = v.to_vec();
            w1[ex.i_star] = ex.rho_star;
            let mut w2 = w1.clone();
            w2[argmax] = 0.0;
            (w1, w2, 1.0 - eps / v1, ex.i_star)
        }
        2 | 3 => {
            let mut w1 = v.to_vec();
            w1[ex.i_2] = ex.rho_2;
            w1[ex.i_star] = ex.rho_star;
            let mut w2 = w1.clone();
            w2[ex.i_star] = 0.0;
            let target = if case_id == 2 { v1 - eps } else { ex.rho_2 - eps };
            (w1, w2, target / ex.rho_star, ex.i_2)
        }
        c => return Err(param(format!("unknown case {c}"))),
    };
    if let Some(sup) = supports {
        for (name, w) in [("w1", &w1), ("w2", &w2)] {
            for (i, x) in w.iter().enumerate() {
                if !sup[i].contains(x) {
                    return Err(Error::Unsupported(format!(
                        "{name} needs value {x} for bidder {i}, which is not in its support"
                    )));
                }
            }
        }
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Scheme(format!("mixture weight {q} outside (0,1)")));
    }
    let u = w1.iter().zip(&w2).map(|(a, b)| q * a + (1.0 - q) * b).collect();
    Ok(AuxiliaryConstruction { case_id, w1, w2, q, u, uninformed: j })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem5Bound {
    pub bound: f64,
    pub surplus: f64,
    /// Σ_θ λ_θ (v_{i*}(θ) - ρ**)⁺.
    pub excluded: f64,
    pub warnings: Vec<String>,
}

/// Distinct values of each bidder over the listed states.
pub fn supports(instance: &KvsInstance) -> Vec<Vec<f64>> {
    (0..instance.n)
        .map(|i| {
            let mut v: Vec<f64> = instance.states.iter().map(|s| s.values[i]).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        })
        .collect()
}

fn key(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Whether every profile of ∏V_i is a listed state.
fn lattice_complete(instance: &KvsInstance, sup: &[Vec<f64>]) -> bool {
    let size = sup.iter().try_fold(1usize, |acc, s| acc.checked_mul(s.len()));
    match size {
        Some(sz) if sz <= instance.states.len() => {
            let listed: std::collections::HashSet<Vec<u64>> = instance.states.iter().map(|s| key(&s.values)).collect();
            listed.len() == sz
        }
        _ => false,
    }
}

/// Surplus minus the unavoidable loss above ρ** minus ε.
pub fn theorem5_bound(instance: &KvsInstance, eps: f64) -> Result<Theorem5Bound> {
    instance.validate().into_result()?;
    let mut warnings = Vec::new();
    let ex = Extremes::of(instance);
    if instance.n < 2 {
        warnings.push("single bidder: no second bid exists, the bound is trivial".to_string());
    }
    let sup = supports(instance);
    for (i, s) in sup.iter().enumerate() {
        if !s.contains(&0.0) {
            warnings.push(format!("0 is not in the support of bidder {i}"));
        }
    }
    if !lattice_complete(instance, &sup) {
        warnings.push("states do not cover the full support lattice".to_string());
    } else if instance.states.iter().any(|s| s.mass <= 0.0) {
        warnings.push("some lattice profile has zero mass".to_string());
    }
    let surplus = instance.surplus();
    let excluded = if instance.n < 2 {
        surplus
    } else {
        instance
            .states
            .iter()
            .map(|s| s.mass * (s.values[ex.i_star] - ex.rho_2).max(0.0))
            .sum()
    };
    Ok(Theorem5Bound { bound: surplus - excluded - eps, surplus, excluded, warnings })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrivateMode {
    /// Lattice when every support profile is listed and 0 is in every
    /// support, otherwise support pairing.
    Auto,
    /// Auxiliary profiles mixed from two lattice profiles, per case.
    Lattice,
    /// Auxiliary profile taken from another listed state.
    SupportPairing,
}

/// Signaling plan for one realized state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatePlan {
    pub id: String,
    pub mass: f64,
    pub case_id: Option<u8>,
    /// None when the state is revealed to everyone.
    pub uninformed: Option<usize>,
    pub aux: Option<Vec<f64>>,
    /// Donor states (by index) and the mass each routes to this state's
    /// auxiliary event.
    pub donors: Vec<(usize, f64)>,
    /// Mass this state routes to other states' auxiliary events.
    pub given: f64,
    pub worst_bid: Option<f64>,
    /// Per-state guarantee: v_[1] - gap, or ρ** - gap for case 3.
    pub bound: f64,
    /// Worst-equilibrium revenue when this state is realized as itself.
    pub worst_revenue: f64,
    pub full_info_revenue: f64,
    pub note: Option<String>,
}

impl StatePlan {
    fn aux_mass(&self) -> f64 {
        self.donors.iter().map(|d| d.1).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivateSchemePlan {
    pub mode: PrivateMode,
    pub epsilon: f64,
    pub delta_requested: f64,
    pub delta_used: f64,
    pub states: Vec<StatePlan>,
    /// Exact expected revenue in the worst equilibrium.
    pub aggregate: f64,
    pub theorem5: Theorem5Bound,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivateSchemeResult {
    pub plan: PrivateSchemePlan,
    pub simulated: Estimate,
}

fn max2_or_zero(v: &[f64]) -> f64 {
    if v.len() < 2 {
        0.0
    } else {
        top_two(v).1
    }
}

struct Candidate {
    case_id: Option<u8>,
    uninformed: usize,
    u: Vec<f64>,
    /// Donor state indices with their share of the auxiliary mass.
    shares: Vec<(usize, f64)>,
    bound: f64,
}

fn resolve_mode(instance: &KvsInstance, mode: PrivateMode, sup: &[Vec<f64>]) -> Result<PrivateMode> {
    let complete = lattice_complete(instance, sup);
    let zero_in_all = sup.iter().all(|s| s.contains(&0.0));
    let zero_mass = instance.states.iter().any(|s| s.mass <= 0.0);
    match mode {
        PrivateMode::Lattice => {
            if !complete || !zero_in_all {
                return Err(Error::Unsupported(
                    "lattice mode needs every support profile listed and 0 in every support".into(),
                ));
            }
            if zero_mass {
                return Err(Error::Infeasible("full-support violated: a lattice profile has zero mass".into()));
            }
            Ok(PrivateMode::Lattice)
        }
        PrivateMode::Auto if complete && zero_in_all => {
            if zero_mass {
                return Err(Error::Infeasible("full-support violated: a lattice profile has zero mass".into()));
            }
            Ok(PrivateMode::Lattice)
        }
        _ => Ok(PrivateMode::SupportPairing),
    }
}

/// Builds the per-state plan and evaluates it exactly.
pub fn plan_private_scheme(instance: &KvsInstance, eps: f64, delta: f64, mode: PrivateMode) -> Result<PrivateSchemePlan> {
    instance.validate().into_result()?;
    if instance.n < 2 {
        return Err(param("private signaling needs at least 2 bidders"));
    }
    if !(eps > 0.0) {
        return Err(param(format!("epsilon must be positive, got {eps}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(param(format!("delta must lie in (0,1), got {delta}")));
    }
    let sup = supports(instance);
    let mode = resolve_mode(instance, mode, &sup)?;
    let ex = Extremes::of(instance);
    let theorem5 = theorem5_bound(instance, eps)?;
    let index: HashMap<Vec<u64>, usize> =
        instance.states.iter().enumerate().map(|(s, st)| (key(&st.values), s)).collect();
    let gap = 0.5 * eps;

    // Candidate structure per state, before masses are fixed.
    let mut cands: Vec<Option<Candidate>> = Vec::with_capacity(instance.states.len());
    let mut notes: Vec<Option<String>> = vec![None; instance.states.len()];
    let mut cases: Vec<Option<u8>> = vec![None; instance.states.len()];
    for (s, st) in instance.states.iter().enumerate() {
        let v = &st.values;
        if st.mass <= 0.0 {
            cands.push(None);
            continue;
        }
        let full = max2_or_zero(v);
        let cand = match mode {
            PrivateMode::Lattice => match classify_case(v, &ex) {
                Err(_) => {
                    notes[s] = Some("all-zero profile: revealed".into());
                    None
                }
                Ok(c) => {
                    cases[s] = Some(c);
                    match build_auxiliary(v, c, &ex, gap, Some(&sup)) {
                        Err(e) => {
                            notes[s] = Some(format!("revealed: {e}"));
                            None
                        }
                        Ok(aux) => {
                            let probe = TwoProfileStructure { v: v.clone(), u: aux.u.clone(), delta: 0.5, uninformed: aux.uninformed };
                            match probe.validate() {
                                Err(e) => {
                                    notes[s] = Some(format!("revealed: {e}"));
                                    None
                                }
                                Ok(()) => {
                                    let (v1, _) = top_two(v);
                                    let bound = if c == 3 { ex.rho_2 - gap } else { v1 - gap };
                                    let d1 = index[&key(&aux.w1)];
                                    let d2 = index[&key(&aux.w2)];
                                    Some(Candidate {
                                        case_id: Some(c),
                                        uninformed: aux.uninformed,
                                        u: aux.u,
                                        shares: vec![(d1, aux.q), (d2, 1.0 - aux.q)],
                                        bound,
                                    })
                                }
                            }
                        }
                    }
                }
            },
            _ => {
                // Best other state as the auxiliary profile.
                let mut best: Option<(f64, Candidate)> = None;
                for (d, other) in instance.states.iter().enumerate() {
                    if d == s || other.mass <= 0.0 {
                        continue;
                    }
                    let u = &other.values;
                    let (_, u2) = top_two(u);
                    let Some(j) = (0..instance.n).find(|&k| u[k] > u2) else { continue };
                    let probe = TwoProfileStructure { v: v.clone(), u: u.clone(), delta: 0.5, uninformed: j };
                    if probe.validate().is_err() {
                        continue;
                    }
                    let r = worst_bne_revenue(&probe)?.revenue_at_v;
                    if r > full + 1e-12 && best.as_ref().is_none_or(|b| r > b.0) {
                        best = Some((
                            r,
                            Candidate { case_id: None, uninformed: j, u: u.clone(), shares: vec![(d, 1.0)], bound: u2 },
                        ));
                    }
                }
                best.map(|b| b.1)
            }
        };
        cands.push(cand);
    }

    // Shrink δ so no donor gives away more than half its mass and the
    // donated mass costs at most gap in revenue.
    let mut demand = vec![0.0; instance.states.len()];
    for (s, c) in cands.iter().enumerate() {
        if let Some(c) = c {
            for &(d, share) in &c.shares {
                demand[d] += share * instance.states[s].mass;
            }
        }
    }
    let mut delta_used = delta;
    if ex.rho_star > 0.0 {
        delta_used = delta_used.min(gap / ex.rho_star);
    }
    for (d, &dem) in demand.iter().enumerate() {
        if dem > 0.0 {
            delta_used = delta_used.min(0.5 * instance.states[d].mass / dem);
        }
    }

    let mut given = vec![0.0; instance.states.len()];
    let mut donors: Vec<Vec<(usize, f64)>> = vec![Vec::new(); instance.states.len()];
    for (s, c) in cands.iter().enumerate() {
        if let Some(c) = c {
            let mu = delta_used * instance.states[s].mass;
            for &(d, share) in &c.shares {
                let amt = share * mu;
                if amt > 0.0 {
                    given[d] += amt;
                    donors[s].push((d, amt));
                }
            }
        }
    }

    let mut states = Vec::with_capacity(instance.states.len());
    let mut aggregate = 0.0;
    for (s, st) in instance.states.iter().enumerate() {
        let v = &st.values;
        let full = max2_or_zero(v);
        let own = st.mass - given[s];
        let plan = match &cands[s] {
            Some(c) => {
                let aux_mass: f64 = donors[s].iter().map(|d| d.1).sum();
                let structure = TwoProfileStructure {
                    v: v.clone(),
                    u: c.u.clone(),
                    delta: aux_mass / (own + aux_mass),
                    uninformed: c.uninformed,
                };
                let w = worst_bne_revenue(&structure)?;
                aggregate += own * w.revenue_at_v + aux_mass * w.revenue_at_u;
                StatePlan {
                    id: st.id.clone(),
                    mass: st.mass,
                    case_id: c.case_id,
                    uninformed: Some(c.uninformed),
                    aux: Some(c.u.clone()),
                    donors: donors[s].clone(),
                    given: given[s],
                    worst_bid: Some(w.worst_bid),
                    bound: c.bound,
                    worst_revenue: w.revenue_at_v,
                    full_info_revenue: full,
                    note: None,
                }
            }
            None => {
                aggregate += own * full;
                let bound = match cases[s] {
                    Some(3) => ex.rho_2 - gap,
                    _ => top_two(v).0 - gap,
                };
                StatePlan {
                    id: st.id.clone(),
                    mass: st.mass,
                    case_id: cases[s],
                    uninformed: None,
                    aux: None,
                    donors: Vec::new(),
                    given: given[s],
                    worst_bid: None,
                    bound: if mode == PrivateMode::Lattice { bound.min(full) } else { full },
                    worst_revenue: full,
                    full_info_revenue: full,
                    note: notes[s].clone(),
                }
            }
        };
        states.push(plan);
    }
    Ok(PrivateSchemePlan {
        mode,
        epsilon: eps,
        delta_requested: delta,
        delta_used,
        states,
        aggregate,
        theorem5,
    })
}

/// Samples realized states, routes donated mass to auxiliary events, forms
/// every bidder's bid from its signal and records second-price revenue.
pub fn simulate_private_scheme(instance: &KvsInstance, plan: &PrivateSchemePlan, trials: usize, seed: u64) -> Result<Estimate> {
    if trials == 0 {
        return Err(param("trials must be positive"));
    }
    // Routes out of each realized state: (consumer, probability).
    let mut routes: Vec<Vec<(usize, f64)>> = vec![Vec::new(); instance.states.len()];
    for (c, p) in plan.states.iter().enumerate() {
        for &(d, amt) in &p.donors {
            routes[d].push((c, amt / instance.states[d].mass));
        }
    }
    let sampler = instance.sampler();
    let revenue = |rng: &mut crate::rng::SimRng| -> f64 {
        let s = sampler.sample(rng);
        let u = rng.random::<f64>();
        let mut acc = 0.0;
        for &(c, p) in &routes[s] {
            acc += p;
            if u < acc {
                // Auxiliary event of consumer c: informed bidders are told the
                // auxiliary label and bid its mean; j bids its worst response.
                let cp = &plan.states[c];
                let j = cp.uninformed.unwrap();
                return revenue_with(cp.aux.as_ref().unwrap(), j, cp.worst_bid.unwrap());
            }
        }
        let sp = &plan.states[s];
        let v = &instance.states[s].values;
        match (sp.uninformed, sp.worst_bid) {
            (Some(j), Some(b)) => revenue_with(v, j, b),
            _ => max2_or_zero(v),
        }
    };
    Ok(crate::rng::trials(trials, seed, revenue))
}

/// Plans the scheme, evaluates its worst-equilibrium revenue exactly and
/// by simulation.
pub fn run_private_scheme(
    instance: &KvsInstance,
    eps: f64,
    delta: f64,
    seed: u64,
    trials: usize,
    mode: PrivateMode,
) -> Result<PrivateSchemeResult> {
    let plan = plan_private_scheme(instance, eps, delta, mode)?;
    let simulated = simulate_private_scheme(instance, &plan, trials, seed)?;
    Ok(PrivateSchemeResult { plan, simulated })
}

impl PrivateSchemePlan {
    /// Total mass routed to auxiliary events.
    pub fn auxiliary_mass(&self) -> f64 {
        self.states.iter().map(|s| s.aux_mass()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_example1, make_example3, random_lattice};
    use crate::rng::derive;

    fn example1_br() -> BestResponse {
        let inst = make_example1();
        let posterior: Vec<(f64, Vec<f64>)> = inst.states.iter().map(|s| (s.mass, s.values.clone())).collect();
        let bids: Vec<Vec<f64>> = inst.states.iter().map(|s| s.values.clone()).collect();
        uninformed_best_response(&posterior, 0, &bids).unwrap()
    }

    #[test]
    fn example1_best_response_is_below_two() {
        let br = example1_br();
        assert_eq!(br.breakpoints, vec![2.0, 7.0]);
        assert_eq!(br.best, vec![BidInterval { lo: 0.0, hi: 2.0, utility: 0.0 }]);
    }

    #[test]
    fn example1_grid_search() {
        let inst = make_example1();
        let br = example1_br();
        // Direct utility of each bid on a 1e-3 grid.
        let util = |b: f64| -> f64 {
            inst.states.iter().map(|s| if b >= s.values[1] { s.mass * (s.values[0] - s.values[1]) } else { 0.0 }).sum()
        };
        let grid: Vec<f64> = (0..=9000).map(|i| i as f64 * 1e-3).collect();
        let best = grid.iter().map(|&b| util(b)).fold(f64::NEG_INFINITY, f64::max);
        for &b in &grid {
            assert_eq!(util(b) >= best - 1e-15, br.contains(b), "bid {b}");
        }
    }

    #[test]
    fn example3_uninformed_bids_high() {
        let eps = 0.1;
        let delta = 0.01;
        let v = vec![2.0 * eps, eps, 1.0];
        let u = vec![1.0, 1.0 - eps, eps];
        let br = uninformed_best_response(&[(1.0 - delta, v.clone()), (delta, u.clone())], 0, &[v, u]).unwrap();
        assert_eq!(br.best.len(), 1);
        assert!(br.best[0].lo >= 1.0 - eps - 1e-15 && br.best[0].hi <= 1.0);
    }

    #[test]
    fn point_posterior_is_truthful() {
        let v = vec![0.6, 0.4, 0.2];
        let br = uninformed_best_response(&[(1.0, v.clone())], 0, std::slice::from_ref(&v)).unwrap();
        assert_eq!(br.best[0].lo, 0.4);
        assert!((br.max_utility - 0.2).abs() < 1e-15);
        assert!(br.contains(0.6));
        assert!(uninformed_best_response(&[], 0, &[]).is_err());
    }

    #[test]
    fn example3_structure() {
        let s = TwoProfileStructure { v: vec![0.2, 0.1, 1.0], u: vec![1.0, 0.9, 0.1], delta: 0.01, uninformed: 0 };
        let w = worst_bne_revenue(&s).unwrap();
        assert!(w.revenue_at_v >= 0.9 - 1e-12 && w.expected >= 0.9 - 1e-12);
        let tight = TwoProfileStructure { u: vec![1.0, 1.0, 0.1], ..s.clone() };
        assert!(worst_bne_revenue(&tight).is_err());
        for d in [0.5, 0.001] {
            let w = worst_bne_revenue(&TwoProfileStructure { delta: d, ..s.clone() }).unwrap();
            assert_eq!(w.worst_bid, s.floor());
        }
    }

    #[test]
    fn classification() {
        let ex = Extremes { rho_star: 1.0, i_star: 2, rho_2: 1.0, i_2: 0 };
        assert_eq!(classify_case(&[0.2, 0.1, 1.0], &ex).unwrap(), 2);
        assert_eq!(classify_case(&[0.5, 0.5, 0.1], &ex).unwrap(), 0);
        let ex3 = Extremes { rho_star: 0.9, i_star: 0, rho_2: 0.5, i_2: 1 };
        assert_eq!(classify_case(&[0.9, 0.2, 0.1], &ex3).unwrap(), 3);
        assert_eq!(classify_case(&[0.3, 0.5, 0.1], &ex3).unwrap(), 1);
        assert!(classify_case(&[0.0, 0.0, 0.0], &ex3).is_err());
    }

    #[test]
    fn case_constructions() {
        let ex = Extremes { rho_star: 1.0, i_star: 2, rho_2: 1.0, i_2: 0 };
        let a = build_auxiliary(&[0.5, 0.5, 0.1], 0, &ex, 0.05, None).unwrap();
        assert_eq!(a.uninformed, 1);
        assert!((a.q - 0.9).abs() < 1e-15);
        for (x, want) in a.u.iter().zip([0.45, 0.5, 0.1]) {
            assert!((x - want).abs() < 1e-12);
        }
        let ex3 = Extremes { rho_star: 0.9, i_star: 0, rho_2: 0.5, i_2: 1 };
        let c = build_auxiliary(&[0.9, 0.2, 0.1], 3, &ex3, 0.05, None).unwrap();
        assert!((c.q - 0.5).abs() < 1e-12);
        assert!((c.u[0] - 0.45).abs() < 1e-12 && (c.u[1] - 0.5).abs() < 1e-12);
        assert_eq!(c.uninformed, 1);
        assert!(build_auxiliary(&[0.9, 0.2, 0.1], 3, &ex3, 0.9, None).is_err());
    }

    #[test]
    fn example3_private_revenue() {
        let inst = make_example3(0.1).unwrap();
        let r = run_private_scheme(&inst, 0.1, 0.01, 1, 50_000, PrivateMode::Auto).unwrap();
        assert_eq!(r.plan.mode, PrivateMode::SupportPairing);
        assert!(r.plan.aggregate >= 0.9 - 1e-6, "{}", r.plan.aggregate);
        assert!(r.simulated.agrees_with(r.plan.aggregate, 4.0), "{:?}", r.simulated);
        let t5 = theorem5_bound(&inst, 0.1).unwrap();
        assert_eq!(t5.excluded, 0.0);
        assert!((t5.bound - (inst.surplus() - 0.1)).abs() < 1e-12);
    }

    fn lattice_instance(seed: u64) -> KvsInstance {
        let sup = vec![vec![0.0, 0.5, 1.0]; 3];
        random_lattice(&sup, &mut derive(seed, 0))
    }

    #[test]
    fn lattice_meets_bound() {
        for seed in 0..5 {
            let inst = lattice_instance(seed);
            let r = run_private_scheme(&inst, 0.05, 0.01, seed, 20_000, PrivateMode::Auto).unwrap();
            assert_eq!(r.plan.mode, PrivateMode::Lattice);
            let b = theorem5_bound(&inst, 0.05).unwrap();
            assert!(r.plan.aggregate >= b.bound - 1e-6, "{} < {}", r.plan.aggregate, b.bound);
            assert!(r.simulated.agrees_with(r.plan.aggregate, 4.0));
            for st in &r.plan.states {
                assert!(st.worst_revenue >= st.bound - 1e-9, "{st:?}");
            }
        }
    }

    #[test]
    fn lattice_case_guarantees() {
        let inst = lattice_instance(3);
        let ex = Extremes::of(&inst);
        let sup = supports(&inst);
        let eps = 0.05;
        for st in &inst.states {
            let Ok(c) = classify_case(&st.values, &ex) else { continue };
            let a = build_auxiliary(&st.values, c, &ex, eps, Some(&sup)).unwrap();
            for (x, (w1, w2)) in a.u.iter().zip(a.w1.iter().zip(&a.w2)) {
                assert!((x - (a.q * w1 + (1.0 - a.q) * w2)).abs() < 1e-12);
            }
            let s = TwoProfileStructure { v: st.values.clone(), u: a.u.clone(), delta: 0.01, uninformed: a.uninformed };
            let Ok(w) = worst_bne_revenue(&s) else {
                assert_eq!(c, 3, "only ties at ρ** invalidate a case-3 structure");
                continue;
            };
            let (v1, _) = top_two(&st.values);
            let floor = if c == 3 { ex.rho_2 - eps } else { v1 - eps };
            assert!(w.revenue_at_v >= floor - 1e-9);
            assert!(st.values[a.uninformed] < v1 || st.values.iter().filter(|&&x| x == v1).count() > 1);
        }
    }

    #[test]
    fn zero_mass_lattice_point() {
        let mut inst = lattice_instance(1);
        let m = inst.states[4].mass;
        inst.states[4].mass = 0.0;
        inst.states[5].mass += m;
        assert!(matches!(
            run_private_scheme(&inst, 0.05, 0.01, 1, 100, PrivateMode::Auto),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn bound_by_enumeration() {
        let sup = vec![vec![0.0, 0.3, 0.8]; 4];
        let inst = random_lattice(&sup, &mut derive(5, 0));
        let eps = 0.05;
        // i* = 0 holds 0.8 first; ρ** = 0.8 as well, so nothing is excluded.
        let surplus: f64 = inst.states.iter().map(|s| s.mass * s.values.iter().cloned().fold(0.0, f64::max)).sum();
        let b = theorem5_bound(&inst, eps).unwrap();
        assert!((b.bound - (surplus - eps)).abs() < 1e-12);
        assert!(b.warnings.is_empty(), "{:?}", b.warnings);
    }

    proptest::proptest! {
        #[test]
        fn floor_holds_for_valid_structures(
            v in proptest::collection::vec(0.0f64..1.0, 3),
            u in proptest::collection::vec(0.0f64..1.0, 3),
            j in 0usize..3,
            d1 in 0.001f64..0.999,
            d2 in 0.001f64..0.999,
        ) {
            let s = TwoProfileStructure { v, u, delta: d1, uninformed: j };
            if s.validate().is_ok() {
                let a = worst_bne_revenue(&s).unwrap();
                let b = worst_bne_revenue(&TwoProfileStructure { delta: d2, ..s.clone() }).unwrap();
                proptest::prop_assert_eq!(a.worst_bid, s.floor());
                proptest::prop_assert_eq!(b.worst_bid, s.floor());
                proptest::prop_assert!(a.revenue_at_v >= s.floor() && a.revenue_at_u == s.floor());
            }
        }
    }

    #[test]
    fn single_bidder_bound() {
        let inst = KvsInstance::new(1, vec![crate::model::KvsState { id: "a".into(), mass: 1.0, values: vec![0.7] }]);
        let b = theorem5_bound(&inst, 0.05).unwrap();
        assert!(b.bound <= 0.0 && !b.warnings.is_empty());
    }
}
