//! Sampled public scheme: each call places the realized state at a random
//! slot among K prior samples, solves the empirical pair-signal LP with
//! relaxed ordering rows, and emits a pair signal from the realized state's
//! row. Running time does not depend on the number of states.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::lp::{solve_lp, LpProblem, LpStatus};
use crate::model::{KvsInstance, StateSampler};
use crate::public_exact::{pair_signal_lp, var_index, SignalSpaceIJ};
use crate::rng::{derive, Estimate, SimRng};
use crate::scheme::Signal;

/// Number of prior samples guaranteeing an ε-optimal scheme:
/// `ceil(8n⁴/ε² · ln(4n³/ε))`.
pub fn sample_count(n: usize, epsilon: f64) -> Result<usize> {
    if n < 2 {
        return Err(param(format!("sample count needs n >= 2, got {n}")));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(param(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    let n = n as f64;
    let k = (8.0 * n.powi(4) / (epsilon * epsilon)) * (4.0 * n.powi(3) / epsilon).ln();
    Ok(k.ceil() as usize)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub epsilon: f64,
    pub k: usize,
    /// Whether `k` is the guarantee-bearing formula value.
    pub formula_k: bool,
    pub seed: u64,
}

impl McConfig {
    pub fn new(n: usize, epsilon: f64, seed: u64) -> Result<Self> {
        Ok(McConfig { epsilon, k: sample_count(n, epsilon)?, formula_k: true, seed })
    }

    /// Same configuration with a fixed sample count.
    pub fn with_k(mut self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(param("sample count must be positive"));
        }
        self.formula_k = false;
        self.k = k;
        Ok(self)
    }
}

/// One empirical atom: a state with its sample weight `count / K`.
#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub state: usize,
    pub weight: f64,
    pub values: Vec<f64>,
}

/// Empirical LP with ordering rows relaxed by ε/(2n²). Atoms are distinct
/// states; repeated samples are merged into one atom with summed weight,
/// which leaves the optimum unchanged.
pub fn build_lp2(atoms: &[Atom], n: usize, epsilon: f64) -> Result<LpProblem> {
    if atoms.is_empty() {
        return Err(param("the empirical LP needs at least one sample"));
    }
    if n < 2 {
        return Err(param("the empirical LP needs at least 2 bidders"));
    }
    if atoms.iter().any(|a| a.values.len() != n) {
        return Err(param("atom value vectors must have length n"));
    }
    let weights: Vec<f64> = atoms.iter().map(|a| a.weight).collect();
    let values: Vec<&[f64]> = atoms.iter().map(|a| a.values.as_slice()).collect();
    Ok(pair_signal_lp(&weights, &values, n, epsilon / (2.0 * (n * n) as f64)))
}

/// Groups raw samples (state indices) into atoms of weight `count / K`.
pub fn atoms_from_samples(samples: &[usize], values: impl Fn(usize) -> Vec<f64>) -> Vec<Atom> {
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let total = samples.len() as f64;
    let mut atoms: Vec<Atom> = Vec::new();
    for s in sorted {
        match atoms.last_mut() {
            Some(a) if a.state == s => a.weight += 1.0,
            _ => atoms.push(Atom { state: s, weight: 1.0, values: values(s) }),
        }
    }
    atoms.iter_mut().for_each(|a| a.weight /= total);
    atoms
}

/// K-sample multiset with the realized state in slot `slot`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalDraw {
    pub slot: usize,
    /// Occurrences of each state among the K samples (realized one included).
    pub counts: Vec<usize>,
}

/// Places `theta` at a uniform slot ℓ in 1..=K and fills the other K-1
/// slots with fresh prior samples.
pub fn draw_empirical<S: StateSampler, R: Rng + ?Sized>(
    theta: usize,
    sampler: &S,
    k: usize,
    rng: &mut R,
) -> EmpiricalDraw {
    let slot = rng.random_range(1..=k);
    let mut counts = sampler.sample_counts(k - 1, rng);
    counts[theta] += 1;
    EmpiricalDraw { slot, counts }
}

/// Outcome of one signaling call, with the solved empirical LP for
/// inspection.
#[derive(Clone, Debug)]
pub struct McSignal {
    pub signal: Signal,
    pub draw: EmpiricalDraw,
    pub atoms: Vec<Atom>,
    /// φ̃(atom, ·) over [`SignalSpaceIJ`] order.
    pub phi: Vec<Vec<f64>>,
    /// Index into `atoms` of the realized state.
    pub theta_atom: usize,
    pub lp_objective: f64,
}

impl McSignal {
    /// Empirical posterior-weighted values Σ_atoms w φ̃ v per pair signal.
    pub fn weighted_values(&self, n: usize) -> Vec<Vec<f64>> {
        let ns = n * (n - 1);
        let mut out = vec![vec![0.0; n]; ns];
        for (a, row) in self.atoms.iter().zip(&self.phi) {
            for k in 0..ns {
                for i in 0..n {
                    out[k][i] += a.weight * row[k] * a.values[i];
                }
            }
        }
        out
    }
}

fn solve_empirical(atoms: &[Atom], n: usize, epsilon: f64) -> Result<(Vec<Vec<f64>>, f64)> {
    let lp = build_lp2(atoms, n, epsilon)?;
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Lp(format!("empirical LP returned {:?}", sol.status)));
    }
    let ns = n * (n - 1);
    let phi = (0..atoms.len())
        .map(|s| (0..ns).map(|k| sol.values[var_index(ns, s, k)].max(0.0)).collect())
        .collect();
    Ok((phi, sol.objective_value))
}

/// One call of the sampled scheme for realized state `theta`. Values must
/// already be on the unit scale.
pub fn mc_signal<S: StateSampler, R: Rng + ?Sized>(
    theta: usize,
    sampler: &S,
    config: &McConfig,
    rng: &mut R,
) -> Result<McSignal> {
    let n = sampler.values(theta).len();
    if config.k == 0 {
        return Err(param("sample count must be positive"));
    }
    let draw = draw_empirical(theta, sampler, config.k, rng);
    let k = config.k as f64;
    let atoms: Vec<Atom> = draw
        .counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(s, &c)| Atom { state: s, weight: c as f64 / k, values: sampler.values(s).to_vec() })
        .collect();
    let theta_atom = atoms.iter().position(|a| a.state == theta).expect("realized state is sampled");
    let (phi, lp_objective) = solve_empirical(&atoms, n, config.epsilon)?;
    let row = &phi[theta_atom];
    let total: f64 = row.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut pick = row.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    for (idx, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            pick = idx;
            break;
        }
    }
    let (i, j) = SignalSpaceIJ::new(n).pairs[pick];
    Ok(McSignal { signal: Signal::Pair(i, j), draw, atoms, phi, theta_atom, lp_objective })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEvaluation {
    /// Revenue of the empirical (state, signal) joint, in instance units.
    pub revenue: Estimate,
    /// Mean optimum of the empirical LPs solved along the way.
    pub mean_lp_objective: f64,
    pub k: usize,
    pub formula_k: bool,
}

/// Runs the sampled scheme on `trials` prior draws and scores the induced
/// joint distribution of (state, signal) with the public revenue formula.
///
/// With per-signal sums S_σ = Σ_{t: σ_t = σ} v(θ_t), revenue is
/// (1/T) Σ_σ max2 S_σ, which is the mean of v_{j(σ_t)}(θ_t) where j(σ) is
/// the second-ranked bidder of S_σ; the standard error is that of this mean.
pub fn evaluate_mc_scheme(instance: &KvsInstance, config: &McConfig, trials: usize) -> Result<McEvaluation> {
    if trials == 0 {
        return Err(param("trials must be positive"));
    }
    if instance.n < 2 {
        return Err(param("a second-price auction needs at least 2 bidders"));
    }
    instance.validate().into_result()?;
    let unit = instance.normalized();
    let sampler = unit.sampler();
    let n = unit.n;
    let draws: Vec<(usize, usize, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng: SimRng = derive(config.seed, t as u64);
            let theta = sampler.sample(&mut rng);
            let out = mc_signal(theta, &sampler, config, &mut rng)?;
            let Signal::Pair(i, j) = out.signal else { unreachable!() };
            let k = SignalSpaceIJ::new(n).pairs.iter().position(|&p| p == (i, j)).unwrap();
            Ok((theta, k, out.lp_objective))
        })
        .collect::<Result<_>>()?;

    let ns = n * (n - 1);
    let mut sums = vec![vec![0.0; n]; ns];
    for &(theta, k, _) in &draws {
        for (acc, &v) in sums[k].iter_mut().zip(sampler.values(theta)) {
            *acc += v;
        }
    }
    let second: Vec<usize> = sums
        .iter()
        .map(|s| {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
            order[1]
        })
        .collect();
    let obs: Vec<f64> = draws.iter().map(|&(theta, k, _)| sampler.values(theta)[second[k]]).collect();
    let tf = trials as f64;
    let mean = obs.iter().sum::<f64>() / tf;
    let var = if trials > 1 {
        obs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (tf - 1.0)
    } else {
        0.0
    };
    Ok(McEvaluation {
        revenue: Estimate {
            mean: mean * instance.scale,
            std_error: (var / tf).sqrt() * instance.scale,
            trials,
        },
        mean_lp_objective: draws.iter().map(|d| d.2).sum::<f64>() / tf * instance.scale,
        k: config.k,
        formula_k: config.formula_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::max2;
    use crate::model::{make_example3, KvsState};
    use crate::public_exact::solve_optimal_public;
    use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, Discrete};

    #[test]
    fn sample_count_formula() {
        assert_eq!(sample_count(2, 1.0).unwrap(), 444);
        let direct = (16200.0f64 * 540f64.ln()).ceil() as usize;
        assert_eq!(sample_count(3, 0.2).unwrap(), direct);
        assert!(sample_count(3, 0.0).is_err());
        assert!(sample_count(3, -1.0).is_err());
        assert!(sample_count(1, 0.5).is_err());
    }

    fn atom(state: usize, weight: f64, values: &[f64]) -> Atom {
        Atom { state, weight, values: values.to_vec() }
    }

    #[test]
    fn single_atom_lp() {
        let v = [0.3, 0.9, 0.6];
        let lp = build_lp2(&[atom(0, 1.0, &v)], 3, 0.01).unwrap();
        let s = solve_lp(&lp).unwrap();
        assert!((s.objective_value - max2(&v).unwrap()).abs() < 0.01);
        assert!(build_lp2(&[], 3, 0.1).is_err());
    }

    #[test]
    fn huge_slack_picks_per_state_max() {
        // Slack 1/(2·4)·... with ε = 1 and values in [0, 0.1]: ordering
        // rows cannot bind, so each state takes its largest value as "second".
        let atoms = vec![atom(0, 0.5, &[0.1, 0.0]), atom(1, 0.5, &[0.0, 0.05])];
        let lp = build_lp2(&atoms, 2, 1.0).unwrap();
        let s = solve_lp(&lp).unwrap();
        assert!((s.objective_value - (0.5 * 0.1 + 0.5 * 0.05)).abs() < 1e-9);
    }

    #[test]
    fn exact_proportions_close_to_optimum() {
        let inst = make_example3(0.1).unwrap();
        let (_, opt) = solve_optimal_public(&inst).unwrap();
        let atoms: Vec<Atom> = inst
            .states
            .iter()
            .enumerate()
            .map(|(s, st)| atom(s, st.mass, &st.values))
            .collect();
        let eps = 0.2;
        let s = solve_lp(&build_lp2(&atoms, 3, eps).unwrap()).unwrap();
        assert!(s.objective_value >= opt - 1e-9);
        assert!(s.objective_value <= opt + eps / 2.0 * 6.0);
    }

    #[test]
    fn single_state_prior_signal() {
        let inst = KvsInstance::new(3, vec![KvsState { id: "x".into(), mass: 1.0, values: vec![0.2, 0.9, 0.5] }]);
        let sampler = inst.sampler();
        let cfg = McConfig::new(3, 0.05, 1).unwrap().with_k(20).unwrap();
        let mut rng = derive(1, 0);
        for _ in 0..20 {
            let out = mc_signal(0, &sampler, &cfg, &mut rng).unwrap();
            let Signal::Pair(_, j) = out.signal else { panic!() };
            assert_eq!(j, 2);
        }
        let one = cfg.with_k(1).unwrap();
        let out = mc_signal(0, &sampler, &one, &mut rng).unwrap();
        assert_eq!(out.atoms.len(), 1);
        assert_eq!(out.draw.slot, 1);
    }

    #[test]
    fn samples_are_iid_from_prior() {
        // With θ ~ λ placed in a uniform slot, the count of state 0 among
        // the K samples must be Binomial(K, λ_0).
        let inst = KvsInstance::new(
            2,
            vec![
                KvsState { id: "a".into(), mass: 0.5, values: vec![0.1, 0.2] },
                KvsState { id: "b".into(), mass: 0.3, values: vec![0.4, 0.3] },
                KvsState { id: "c".into(), mass: 0.2, values: vec![0.9, 0.6] },
            ],
        );
        let sampler = inst.sampler();
        let k = 6;
        let runs = 20_000;
        let mut rng = derive(77, 0);
        let mut hist = vec![0usize; k + 1];
        for _ in 0..runs {
            let theta = sampler.sample(&mut rng);
            let d = draw_empirical(theta, &sampler, k, &mut rng);
            assert_eq!(d.counts.iter().sum::<usize>(), k);
            hist[d.counts[0]] += 1;
        }
        let law = Binomial::new(0.5, k as u64).unwrap();
        let stat: f64 = (0..=k)
            .map(|c| {
                let e = law.pmf(c as u64) * runs as f64;
                (hist[c] as f64 - e).powi(2) / e
            })
            .sum();
        let p = 1.0 - ChiSquared::new(k as f64).unwrap().cdf(stat);
        assert!(p > 0.001, "chi-square {stat}, p = {p}");
    }

    #[test]
    fn emitted_signal_respects_relaxed_order() {
        let inst = make_example3(0.1).unwrap();
        let sampler = inst.sampler();
        let eps = 0.2;
        let cfg = McConfig::new(3, eps, 3).unwrap().with_k(200).unwrap();
        let slack = eps / 18.0;
        let mut rng = derive(3, 0);
        for _ in 0..50 {
            let out = mc_signal(0, &sampler, &cfg, &mut rng).unwrap();
            let Signal::Pair(i, j) = out.signal else { panic!() };
            let k = SignalSpaceIJ::new(3).pairs.iter().position(|&p| p == (i, j)).unwrap();
            let w = &out.weighted_values(3)[k];
            assert!(w[i] >= w[j] - slack - 1e-7);
            for o in (0..3).filter(|&o| o != i && o != j) {
                assert!(w[j] >= w[o] - slack - 1e-7);
            }
            assert!(out.phi[out.theta_atom][k] > 0.0);
        }
    }

    #[test]
    fn evaluation_near_optimum() {
        let inst = make_example3(0.1).unwrap();
        let (_, opt) = solve_optimal_public(&inst).unwrap();
        let cfg = McConfig::new(3, 0.2, 5).unwrap();
        let ev = evaluate_mc_scheme(&inst, &cfg, 1000).unwrap();
        assert!(ev.formula_k);
        assert!(ev.revenue.mean >= opt - 0.2 - 3.0 * ev.revenue.std_error, "{ev:?}");
        assert!(evaluate_mc_scheme(&inst, &cfg, 0).is_err());
    }

    #[test]
    fn fine_config_converges_to_optimum() {
        let inst = KvsInstance::new(
            2,
            vec![
                KvsState { id: "a".into(), mass: 0.5, values: vec![0.2, 0.6] },
                KvsState { id: "b".into(), mass: 0.5, values: vec![1.0, 0.9] },
            ],
        );
        let (_, opt) = solve_optimal_public(&inst).unwrap();
        let cfg = McConfig::new(2, 1e-3, 9).unwrap().with_k(200_000).unwrap();
        let ev = evaluate_mc_scheme(&inst, &cfg, 400).unwrap();
        assert!((ev.revenue.mean - opt).abs() <= 3.0 * ev.revenue.std_error + 0.01, "{ev:?} vs {opt}");
    }

    #[test]
    fn evaluation_is_thread_independent() {
        let inst = make_example3(0.1).unwrap();
        let cfg = McConfig::new(3, 0.2, 5).unwrap().with_k(500).unwrap();
        let a = evaluate_mc_scheme(&inst, &cfg, 64).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| evaluate_mc_scheme(&inst, &cfg, 64)).unwrap();
        assert_eq!(a, b);
    }
}
