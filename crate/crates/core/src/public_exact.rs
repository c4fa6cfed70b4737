//! Exact optimal public scheme in the known-valuation setting, as an LP
//! over the n(n-1) pair signals σ^{ij} ("i on top, j second").

use crate::error::{param, Error, Result};
use crate::lp::{solve_lp, LpProblem, LpStatus, Relation, Sense};
use crate::model::KvsInstance;
use crate::scheme::{ExplicitScheme, SchemeRow, Signal};

/// Signal mass below which a signal is dropped from a returned scheme.
const ALPHA_DROP: f64 = 1e-12;

/// Ordered pairs (i, j), i ≠ j, in lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignalSpaceIJ {
    pub n: usize,
    pub pairs: Vec<(usize, usize)>,
}

impl SignalSpaceIJ {
    pub fn new(n: usize) -> Self {
        let pairs = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        SignalSpaceIJ { n, pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn signals(&self) -> Vec<Signal> {
        self.pairs.iter().map(|&(i, j)| Signal::Pair(i, j)).collect()
    }
}

/// Column of φ(atom `s`, signal `k`).
pub fn var_index(num_signals: usize, s: usize, k: usize) -> usize {
    s * num_signals + k
}

/// Pair-signal LP over weighted atoms. Ordering rows are relaxed by
/// `slack`; with unit weights summing to one and zero slack this is the
/// exact program.
pub(crate) fn pair_signal_lp(weights: &[f64], values: &[&[f64]], n: usize, slack: f64) -> LpProblem {
    let space = SignalSpaceIJ::new(n);
    let ns = space.len();
    let atoms = weights.len();
    let mut lp = LpProblem::new(atoms * ns, Sense::Maximize);
    for j in 0..lp.num_vars {
        lp.set_bounds(j, 0.0, 1.0);
    }
    let mut obj = Vec::with_capacity(atoms * ns);
    for s in 0..atoms {
        for (k, &(_, j)) in space.pairs.iter().enumerate() {
            obj.push((var_index(ns, s, k), weights[s] * values[s][j]));
        }
    }
    lp.set_objective(obj);
    // (a) i weakly above j under σ^{ij}.
    for (k, &(i, j)) in space.pairs.iter().enumerate() {
        let row = (0..atoms)
            .map(|s| (var_index(ns, s, k), weights[s] * (values[s][i] - values[s][j])))
            .collect();
        lp.add_constraint(row, Relation::Ge, -slack);
    }
    // (b) j weakly above every other bidder k.
    for (k, &(i, j)) in space.pairs.iter().enumerate() {
        for other in (0..n).filter(|&o| o != i && o != j) {
            let row = (0..atoms)
                .map(|s| (var_index(ns, s, k), weights[s] * (values[s][j] - values[s][other])))
                .collect();
            lp.add_constraint(row, Relation::Ge, -slack);
        }
    }
    // (c) each atom's row is a distribution.
    for s in 0..atoms {
        let row = (0..ns).map(|k| (var_index(ns, s, k), 1.0)).collect();
        lp.add_constraint(row, Relation::Eq, 1.0);
    }
    lp
}

/// The exact LP: variables φ(θ, σ^{ij}) for every state and pair signal.
pub fn build_lp1(instance: &KvsInstance) -> Result<LpProblem> {
    if instance.n < 2 {
        return Err(param("the pair-signal LP needs at least 2 bidders"));
    }
    instance.validate().into_result()?;
    let weights = instance.masses();
    let values: Vec<&[f64]> = instance.states.iter().map(|s| s.values.as_slice()).collect();
    Ok(pair_signal_lp(&weights, &values, instance.n, 0.0))
}

/// Turns an LP solution into a scheme table, dropping signals of zero mass.
pub(crate) fn scheme_from_solution(
    instance: &KvsInstance,
    space: &SignalSpaceIJ,
    x: &[f64],
) -> ExplicitScheme {
    let ns = space.len();
    let phi = |s: usize, k: usize| x[var_index(ns, s, k)].max(0.0);
    let alpha: Vec<f64> = (0..ns)
        .map(|k| instance.states.iter().enumerate().map(|(s, st)| st.mass * phi(s, k)).sum())
        .collect();
    let keep: Vec<usize> = (0..ns).filter(|&k| alpha[k] > ALPHA_DROP).collect();
    let rows = instance
        .states
        .iter()
        .enumerate()
        .map(|(s, st)| {
            let mut probs: Vec<f64> = keep.iter().map(|&k| phi(s, k)).collect();
            let total: f64 = probs.iter().sum();
            if total > 0.0 {
                probs.iter_mut().for_each(|p| *p /= total);
            } else {
                // Only zero-mass states can end up here.
                probs[0] = 1.0;
            }
            SchemeRow { state: st.id.clone(), probs }
        })
        .collect();
    ExplicitScheme {
        signals: keep.iter().map(|&k| Signal::Pair(space.pairs[k].0, space.pairs[k].1)).collect(),
        rows,
    }
}

/// Optimal public scheme and its revenue.
pub fn solve_optimal_public(instance: &KvsInstance) -> Result<(ExplicitScheme, f64)> {
    let lp = build_lp1(instance)?;
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Lp(format!("pair-signal LP returned {:?}", sol.status)));
    }
    let space = SignalSpaceIJ::new(instance.n);
    Ok((scheme_from_solution(instance, &space, &sol.values), sol.objective_value))
}

/// Largest violation of "i weakly top, j weakly second" over the pair
/// signals of `scheme`.
pub fn ordering_violation(instance: &KvsInstance, scheme: &ExplicitScheme) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (k, sig) in scheme.signals.iter().enumerate() {
        let Signal::Pair(i, j) = *sig else { continue };
        let (_, v) = crate::auction::conditional_values(instance, scheme, k)?;
        worst = worst.max(v[j] - v[i]);
        for (o, &vo) in v.iter().enumerate() {
            if o != i && o != j {
                worst = worst.max(vo - v[j]);
            }
        }
    }
    Ok(worst)
}
