//! Brute-force ground truth used to cross-check the solvers.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::model::{BvsInstance, FeatureVector, KvsInstance, ValueDistribution};
use crate::scheme::{ExplicitScheme, SchemeRow, Signal};

pub const MAX_ORACLE_STATES: usize = 10_000;
/// State count up to which partitions into any number of blocks are listed.
const FREE_PARTITION_STATES: usize = 10;
const MAX_PARTITION_STATES: usize = 16;
const MAX_PARTITION_BLOCKS: usize = 3;

/// Optimal public scheme from an LP over signal masses x(θ, σ^{ij}) in
/// [0, λ_θ], solved with an external simplex implementation.
pub fn brute_force_public_optimal(instance: &KvsInstance) -> Result<(ExplicitScheme, f64)> {
    let n = instance.n;
    if n < 2 {
        return Err(param("public revenue needs at least 2 bidders"));
    }
    if instance.states.len() > MAX_ORACLE_STATES {
        return Err(Error::TooLarge(format!(
            "{} states exceeds the oracle limit of {MAX_ORACLE_STATES}",
            instance.states.len()
        )));
    }
    instance.validate().into_result()?;
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).collect();
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<Vec<minilp::Variable>> = instance
        .states
        .iter()
        .map(|st| pairs.iter().map(|&(_, j)| lp.add_var(st.values[j], (0.0, st.mass))).collect())
        .collect();
    for (s, st) in instance.states.iter().enumerate() {
        let row: Vec<_> = vars[s].iter().map(|&x| (x, 1.0)).collect();
        lp.add_constraint(&row, ComparisonOp::Eq, st.mass);
    }
    for (k, &(i, j)) in pairs.iter().enumerate() {
        for other in 0..n {
            if other == j {
                continue;
            }
            // Top bidder i above j, and j above every remaining bidder.
            let (hi, lo) = if other == i { (i, j) } else { (j, other) };
            let row: Vec<_> = instance
                .states
                .iter()
                .enumerate()
                .map(|(s, st)| (vars[s][k], st.values[hi] - st.values[lo]))
                .collect();
            lp.add_constraint(&row, ComparisonOp::Ge, 0.0);
        }
    }
    let sol = lp.solve().map_err(|e| Error::Lp(format!("oracle LP: {e}")))?;
    let rows = instance
        .states
        .iter()
        .enumerate()
        .map(|(s, st)| {
            let probs = if st.mass > 0.0 {
                vars[s].iter().map(|&x| (sol[x] / st.mass).clamp(0.0, 1.0)).collect()
            } else {
                let mut p = vec![0.0; pairs.len()];
                p[0] = 1.0;
                p
            };
            SchemeRow { state: st.id.clone(), probs }
        })
        .collect();
    let signals = pairs.iter().map(|&(i, j)| Signal::Pair(i, j)).collect();
    Ok((ExplicitScheme { signals, rows }, sol.objective()))
}

/// Deterministic scheme: the signal names the block containing the state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionScheme {
    pub states: Vec<FeatureVector>,
    /// Indices into `states`.
    pub blocks: Vec<Vec<usize>>,
}

impl PartitionScheme {
    pub fn validate(&self, max_blocks: usize) -> Result<()> {
        let mut seen = vec![false; self.states.len()];
        for b in &self.blocks {
            for &s in b {
                if s >= seen.len() || seen[s] {
                    return Err(Error::Scheme(format!("state {s} missing or repeated in partition")));
                }
                seen[s] = true;
            }
        }
        if seen.iter().any(|x| !x) {
            return Err(Error::Scheme("partition does not cover every state".into()));
        }
        if self.blocks.len() > max_blocks {
            return Err(Error::Scheme(format!("{} blocks exceeds {max_blocks}", self.blocks.len())));
        }
        Ok(())
    }
}

/// Segments of the type quantile on which a discrete quantile is constant.
fn quantile_cuts(dists: &[ValueDistribution]) -> Vec<f64> {
    let mut cuts = vec![0.0, 1.0];
    for d in dists {
        if let ValueDistribution::Bernoulli(_, p) = *d {
            let c = 1.0 - p;
            if c > 0.0 && c < 1.0 {
                cuts.push(c);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts
}

/// E[max_i X_i] for independent discrete `X_i` given as (prob, value) lists.
fn expected_max(vars: &[Vec<(f64, f64)>]) -> f64 {
    let mut xs: Vec<f64> = vars.iter().flatten().map(|a| a.1).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let cdf = |x: f64| -> f64 {
        vars.iter()
            .map(|v| v.iter().filter(|a| a.1 <= x).map(|a| a.0).sum::<f64>())
            .product()
    };
    let mut prev = 0.0;
    let mut total = 0.0;
    for &x in &xs {
        let c = cdf(x);
        total += x * (c - prev);
        prev = c;
    }
    total
}

/// Block mass times expected winning bid when each bidder bids its
/// posterior mean given the block and its own type.
fn block_welfare(instance: &BvsInstance, states: &[(FeatureVector, f64)], mask: u32, cuts: &[f64]) -> f64 {
    let n = instance.n;
    let mut mass = 0.0;
    let mut targeted = vec![0.0; n];
    for (s, (theta, m)) in states.iter().enumerate() {
        if mask & (1 << s) != 0 {
            mass += m;
            for (i, t) in targeted.iter_mut().enumerate() {
                if theta.get(i) {
                    *t += m;
                }
            }
        }
    }
    if mass <= 0.0 {
        return 0.0;
    }
    let vars: Vec<Vec<(f64, f64)>> = targeted
        .iter()
        .map(|&t| {
            let q = t / mass;
            cuts.windows(2)
                .map(|w| (w[1] - w[0], instance.posterior_bid(q, 0.5 * (w[0] + w[1]))))
                .collect()
        })
        .collect();
    mass * expected_max(&vars)
}

/// Maximum welfare over deterministic schemes with at most `max_signals`
/// signals, by exhaustive enumeration of set partitions.
pub fn best_partition_welfare(instance: &BvsInstance, max_signals: usize) -> Result<(PartitionScheme, f64)> {
    instance.validate().into_result()?;
    if max_signals == 0 {
        return Err(param("at least one signal is required"));
    }
    if !(instance.high.is_discrete() && instance.low.is_discrete()) {
        return Err(Error::Unsupported("partition welfare needs point or bernoulli value families".into()));
    }
    let states: Vec<(FeatureVector, f64)> = instance
        .prior
        .enumerate(instance.n)
        .ok_or_else(|| Error::Unsupported("prior cannot be enumerated".into()))?
        .into_iter()
        .filter(|s| s.1 > 0.0)
        .collect();
    let m = states.len();
    let vectors: Vec<FeatureVector> = states.iter().map(|s| s.0.clone()).collect();
    let cuts = quantile_cuts(&[instance.high, instance.low]);
    if max_signals >= m {
        // Posterior means only get more spread out under refinement.
        let welfare = (0..m).map(|s| block_welfare(instance, &states, 1 << s, &cuts)).sum();
        return Ok((PartitionScheme { states: vectors, blocks: (0..m).map(|s| vec![s]).collect() }, welfare));
    }
    if m > MAX_PARTITION_STATES || (m > FREE_PARTITION_STATES && max_signals > MAX_PARTITION_BLOCKS) {
        return Err(Error::TooLarge(format!("{m} states into {max_signals} blocks is too many partitions")));
    }
    let cache: Vec<f64> = (0..1u32 << m).map(|mask| block_welfare(instance, &states, mask, &cuts)).collect();

    struct Search<'a> {
        cache: &'a [f64],
        m: usize,
        max_blocks: usize,
        blocks: Vec<u32>,
        best: f64,
        best_blocks: Vec<u32>,
    }
    impl Search<'_> {
        fn go(&mut self, e: usize) {
            if e == self.m {
                let w: f64 = self.blocks.iter().map(|&b| self.cache[b as usize]).sum();
                if w > self.best {
                    self.best = w;
                    self.best_blocks = self.blocks.clone();
                }
                return;
            }
            for b in 0..self.blocks.len() {
                self.blocks[b] |= 1 << e;
                self.go(e + 1);
                self.blocks[b] &= !(1 << e);
            }
            if self.blocks.len() < self.max_blocks {
                self.blocks.push(1 << e);
                self.go(e + 1);
                self.blocks.pop();
            }
        }
    }
    let mut search = Search { cache: &cache, m, max_blocks: max_signals, blocks: Vec::new(), best: f64::NEG_INFINITY, best_blocks: Vec::new() };
    search.go(0);
    let blocks = search
        .best_blocks
        .iter()
        .map(|&b| (0..m).filter(|&s| b & (1 << s) != 0).collect())
        .collect();
    Ok((PartitionScheme { states: vectors, blocks }, search.best))
}

/// ln k! for k = 0..=n.
fn log_factorials(n: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(n + 1);
    t.push(0.0);
    for k in 1..=n {
        t.push(t[k - 1] + (k as f64).ln());
    }
    t
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullInfoRevenue {
    pub exact: f64,
    pub lower_bound: f64,
}

/// Full-information revenue on the separation instance: the probability
/// that at least two targeted bidders draw the high value, where each
/// bidder is targeted with probability ε and then values the item at 1
/// with probability 1/√n.
pub fn theorem2_fullinfo_revenue(n: usize, eps: f64) -> Result<FullInfoRevenue> {
    if n < 4 {
        return Err(param(format!("needs n >= 4, got {n}")));
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(param(format!("eps {eps} outside [0,1]")));
    }
    let rn = (n as f64).sqrt();
    let lower_bound = 1.0 - (-eps * rn).exp() - eps * rn * (-eps * (n as f64 - 1.0) / rn).exp();
    if eps == 0.0 {
        return Ok(FullInfoRevenue { exact: 0.0, lower_bound });
    }
    let lf = log_factorials(n);
    let r = 1.0 - 1.0 / rn;
    let mut exact = 0.0;
    for i in 2..=n {
        let log_w = lf[n] - lf[i] - lf[n - i] + i as f64 * eps.ln() + (n - i) as f64 * (-eps).ln_1p();
        let w = if eps == 1.0 { if i == n { 1.0 } else { 0.0 } } else { log_w.exp() };
        let at_least_two = 1.0 - r.powi(i as i32) - i as f64 / rn * r.powi(i as i32 - 1);
        exact += w * at_least_two;
    }
    Ok(FullInfoRevenue { exact, lower_bound })
}

/// E[X | X ≥ k] for X ~ Binomial(m, p), summed in log space.
pub fn binomial_cond_expectation(m: u64, p: f64, k: u64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(param(format!("p = {p} must lie in (0,1)")));
    }
    if k > m {
        return Err(param(format!("k = {k} exceeds m = {m}")));
    }
    let mu = m as usize;
    let lf = log_factorials(mu);
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let logs: Vec<f64> = (k as usize..=mu)
        .map(|x| lf[mu] - lf[x] - lf[mu - x] + x as f64 * lp + (mu - x) as f64 * lq)
        .collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut num) = (0.0, 0.0);
    for (off, &l) in logs.iter().enumerate() {
        let w = (l - top).exp();
        z += w;
        num += w * (k as usize + off) as f64;
    }
    let log_prob = top + z.ln();
    if log_prob < 1e-300f64.ln() {
        return Err(Error::Infeasible(format!("P(X >= {k}) = e^{log_prob:.1} is below 1e-300")));
    }
    Ok(num / z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::max2;
    use crate::model::{make_example1, make_example3, FeaturePrior, KvsState, PriorAtom};

    #[test]
    fn public_examples() {
        let (_, r) = brute_force_public_optimal(&make_example3(0.1).unwrap()).unwrap();
        assert!((0.27 - 1e-9..=0.3 + 1e-9).contains(&r), "{r}");
        let (_, r1) = brute_force_public_optimal(&make_example1()).unwrap();
        assert!(r1 >= 4.0 - 1e-9);
        let one = KvsInstance::new(3, vec![KvsState { id: "x".into(), mass: 1.0, values: vec![0.2, 0.9, 0.4] }]);
        let (s, r) = brute_force_public_optimal(&one).unwrap();
        assert!((r - max2(&[0.2, 0.9, 0.4]).unwrap()).abs() < 1e-9);
        assert!(s.validate(&["x".to_string()]).is_empty());
    }

    #[test]
    fn expected_max_of_bernoullis() {
        // max of two Bernoulli(1/2) is 1 w.p. 3/4.
        let b = vec![(0.5, 0.0), (0.5, 1.0)];
        assert!((expected_max(&[b.clone(), b]) - 0.75).abs() < 1e-15);
    }

    fn small_bvs() -> BvsInstance {
        let atoms = FeatureVector::enumerate(4)
            .into_iter()
            .map(|s| {
                let w = s.weight() as i32;
                PriorAtom { mass: 0.3f64.powi(w) * 0.7f64.powi(4 - w), state: s }
            })
            .collect();
        BvsInstance {
            n: 4,
            prior: FeaturePrior::explicit(atoms),
            high: ValueDistribution::Bernoulli(1.0, 0.5),
            low: ValueDistribution::Point(0.0),
        }
    }

    #[test]
    fn partition_extremes() {
        let inst = small_bvs();
        let (_, full) = best_partition_welfare(&inst, 16).unwrap();
        let (one, none) = best_partition_welfare(&inst, 1).unwrap();
        assert_eq!(one.blocks.len(), 1);
        // No information: everyone bids 0.3·H⁻¹(t).
        let b = vec![(0.5, 0.0), (0.5, 0.3)];
        assert!((none - expected_max(&vec![b; 4])).abs() < 1e-12);
        // Full information: welfare is P(some targeted bidder draws 1).
        let want = 1.0 - (1.0 - 0.3 * 0.5f64).powi(4);
        assert!((full - want).abs() < 1e-12, "{full} vs {want}");
        let (p2, two) = best_partition_welfare(&inst, 2).unwrap();
        p2.validate(2).unwrap();
        assert!(two < full - 1e-6 && two >= none - 1e-12);
        let (_, three) = best_partition_welfare(&inst, 3).unwrap();
        assert!(three >= two - 1e-12);
    }

    #[test]
    fn refinement_shortcut_matches_enumeration() {
        let atoms: Vec<PriorAtom> = ["100", "010", "001", "110", "011"]
            .iter()
            .zip([0.3, 0.2, 0.2, 0.2, 0.1])
            .map(|(s, m)| PriorAtom { state: s.parse().unwrap(), mass: m })
            .collect();
        let inst = BvsInstance {
            n: 3,
            prior: FeaturePrior::explicit(atoms),
            high: ValueDistribution::Bernoulli(2.0, 0.6),
            low: ValueDistribution::Bernoulli(1.0, 0.3),
        };
        let mut last = 0.0;
        for k in 1..=5 {
            let (_, w) = best_partition_welfare(&inst, k).unwrap();
            assert!(w >= last - 1e-12);
            last = w;
        }
    }

    #[test]
    fn continuous_families_rejected() {
        let mut inst = small_bvs();
        inst.high = ValueDistribution::Uniform(0.0, 1.0);
        assert!(matches!(best_partition_welfare(&inst, 2), Err(Error::Unsupported(_))));
    }

    #[test]
    fn theorem2_formulas() {
        let r = theorem2_fullinfo_revenue(100, 0.3).unwrap();
        let closed = 1.0 - (-3.0f64).exp() - 3.0 * (-0.3f64 * 99.0 / 10.0).exp();
        assert!((r.lower_bound - closed).abs() < 1e-12);
        assert!(r.exact >= r.lower_bound);
        assert_eq!(theorem2_fullinfo_revenue(10, 0.0).unwrap().exact, 0.0);
        let big = theorem2_fullinfo_revenue(2000, 0.05).unwrap();
        assert!(big.exact.is_finite() && big.exact >= big.lower_bound);
        // Direct sum at small n.
        let (n, e) = (6usize, 0.25f64);
        let rn = (n as f64).sqrt();
        let mut direct = 0.0;
        for i in 0..=n {
            let c = (0..i).fold(1.0, |acc, k| acc * (n - k) as f64 / (k + 1) as f64);
            let inner = 1.0 - (1.0 - 1.0 / rn).powi(i as i32) - i as f64 / rn * (1.0 - 1.0 / rn).powi(i as i32 - 1);
            direct += c * e.powi(i as i32) * (1.0 - e).powi((n - i) as i32) * inner;
        }
        assert!((theorem2_fullinfo_revenue(n, e).unwrap().exact - direct).abs() < 1e-12);
    }

    #[test]
    fn binomial_conditionals() {
        assert!((binomial_cond_expectation(50, 0.2, 0).unwrap() - 10.0).abs() < 1e-9);
        assert!((binomial_cond_expectation(50, 0.2, 50).unwrap() - 50.0).abs() < 1e-9);
        // m = 3, p = 1/2, k = 2: (2·3 + 3·1) / 4.
        assert!((binomial_cond_expectation(3, 0.5, 2).unwrap() - 2.25).abs() < 1e-12);
        assert!(binomial_cond_expectation(100_000, 0.01, 100_000).is_err());
    }

    #[test]
    fn binomial_matches_reference_pmf() {
        use statrs::distribution::{Binomial, Discrete};
        for &(m, p, k) in &[(200u64, 0.1, 30u64), (1000, 0.3, 320), (10_000, 0.1, 2000)] {
            let b = Binomial::new(p, m).unwrap();
            let (z, num) = (k..=m).fold((0.0, 0.0), |(z, num), x| {
                let w = b.pmf(x);
                (z + w, num + w * x as f64)
            });
            let ours = binomial_cond_expectation(m, p, k).unwrap();
            assert!((ours - num / z).abs() < 1e-6 * ours, "m={m}: {ours} vs {}", num / z);
        }
    }
}
