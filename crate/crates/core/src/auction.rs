//! Second-price mechanics and revenue/welfare of public schemes.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::model::{BvsInstance, FeatureVector, KvsInstance};
use crate::rng::{paired_trials, Estimate, SimRng};
use crate::scheme::{ExplicitScheme, PublicScheme, Signal};

/// Second order statistic, counting multiplicity.
pub fn max2(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(param(format!("max2 needs at least 2 values, got {}", values.len())));
    }
    Ok(top_two(values).1)
}

/// Largest and second-largest entries; `values` must have length >= 2.
pub(crate) fn top_two(values: &[f64]) -> (f64, f64) {
    let (mut a, mut b) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &v in values {
        if v > a {
            b = a;
            a = v;
        } else if v > b {
            b = v;
        }
    }
    (a, b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuctionOutcome {
    pub winner: usize,
    pub price: f64,
    pub all_bids: Vec<f64>,
}

/// Highest bid wins (lowest index among ties) and pays the second-highest.
pub fn run_second_price(bids: &[f64]) -> Result<AuctionOutcome> {
    if bids.len() < 2 {
        return Err(param(format!("second-price auction needs 2 bids, got {}", bids.len())));
    }
    if let Some(b) = bids.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
        return Err(param(format!("bid {b} is not a nonnegative real")));
    }
    let mut winner = 0;
    for (i, &b) in bids.iter().enumerate() {
        if b > bids[winner] {
            winner = i;
        }
    }
    Ok(AuctionOutcome { winner, price: top_two(bids).1, all_bids: bids.to_vec() })
}

fn state_ids(instance: &KvsInstance) -> Vec<String> {
    instance.states.iter().map(|s| s.id.clone()).collect()
}

/// Probability α_σ of signal `signal` and the posterior-mean values v(σ).
pub fn conditional_values(
    instance: &KvsInstance,
    scheme: &ExplicitScheme,
    signal: usize,
) -> Result<(f64, Vec<f64>)> {
    let rows = scheme.aligned(&state_ids(instance))?;
    if signal >= scheme.signals.len() {
        return Err(Error::Scheme(format!("signal index {signal} out of range")));
    }
    let mut alpha = 0.0;
    let mut v = vec![0.0; instance.n];
    for (s, row) in instance.states.iter().zip(&rows) {
        let w = s.mass * row[signal];
        alpha += w;
        for (acc, &x) in v.iter_mut().zip(&s.values) {
            *acc += w * x;
        }
    }
    if alpha <= 0.0 {
        return Err(Error::Scheme(format!("signal {} has zero probability", scheme.signals[signal])));
    }
    v.iter_mut().for_each(|x| *x /= alpha);
    Ok((alpha, v))
}

/// Like [`conditional_values`] but addressed by signal label.
pub fn conditional_values_of(
    instance: &KvsInstance,
    scheme: &ExplicitScheme,
    signal: &Signal,
) -> Result<(f64, Vec<f64>)> {
    let idx = scheme
        .signals
        .iter()
        .position(|s| s == signal)
        .ok_or_else(|| Error::Scheme(format!("signal {signal} not in scheme")))?;
    conditional_values(instance, scheme, idx)
}

/// Σ_σ α_σ · f(v(σ)) over signals of positive probability.
fn public_functional(
    instance: &KvsInstance,
    scheme: &PublicScheme,
    f: impl Fn(&[f64]) -> f64,
) -> Result<f64> {
    if instance.n < 2 {
        return Err(param("a second-price auction needs at least 2 bidders"));
    }
    let table = scheme.explicit_for(instance)?;
    let rows = table.aligned(&state_ids(instance))?;
    let mut total = 0.0;
    for k in 0..table.signals.len() {
        let mut alpha = 0.0;
        let mut v = vec![0.0; instance.n];
        for (s, row) in instance.states.iter().zip(&rows) {
            let w = s.mass * row[k];
            alpha += w;
            for (acc, &x) in v.iter_mut().zip(&s.values) {
                *acc += w * x;
            }
        }
        if alpha > 0.0 {
            v.iter_mut().for_each(|x| *x /= alpha);
            total += alpha * f(&v);
        }
    }
    Ok(total)
}

/// Rev(φ) = Σ_σ α_σ · max2 v(σ).
pub fn kvs_public_revenue(instance: &KvsInstance, scheme: &PublicScheme) -> Result<f64> {
    public_functional(instance, scheme, |v| top_two(v).1)
}

/// Σ_σ α_σ · max v(σ).
pub fn kvs_public_welfare(instance: &KvsInstance, scheme: &PublicScheme) -> Result<f64> {
    public_functional(instance, scheme, |v| top_two(v).0)
}

/// Draws a signal for a realized state and returns each bidder's posterior
/// probability of being targeted.
enum BvsSignaler<'a> {
    Full,
    None(Vec<f64>),
    Pooling(&'a crate::bvs_pool::TailPooling),
    Table {
        rows: HashMap<FeatureVector, &'a [f64]>,
        posteriors: Vec<Vec<f64>>,
    },
}

impl<'a> BvsSignaler<'a> {
    fn new(instance: &'a BvsInstance, scheme: &'a PublicScheme) -> Result<Self> {
        let n = instance.n;
        Ok(match scheme {
            PublicScheme::FullInformation => BvsSignaler::Full,
            PublicScheme::NoInformation => BvsSignaler::None(
                instance
                    .prior
                    .marginals(n)
                    .ok_or_else(|| Error::Unsupported("prior has no marginals".into()))?,
            ),
            PublicScheme::TailPooling(tp) => {
                if tp.n != n {
                    return Err(Error::Scheme(format!("pooling built for {} bidders, instance has {n}", tp.n)));
                }
                BvsSignaler::Pooling(tp)
            }
            PublicScheme::Explicit(table) => {
                let states = instance.prior.enumerate(n).ok_or_else(|| {
                    Error::Unsupported("explicit schemes need an enumerable prior".into())
                })?;
                let ids: Vec<String> = states.iter().map(|(s, _)| s.to_string()).collect();
                let aligned = table.aligned(&ids)?;
                let k = table.signals.len();
                let mut mass = vec![0.0; k];
                let mut posteriors = vec![vec![0.0; n]; k];
                for ((s, m), row) in states.iter().zip(&aligned) {
                    for sig in 0..k {
                        let w = m * row[sig];
                        mass[sig] += w;
                        for i in 0..n {
                            if s.get(i) {
                                posteriors[sig][i] += w;
                            }
                        }
                    }
                }
                for (p, m) in posteriors.iter_mut().zip(&mass) {
                    if *m > 0.0 {
                        p.iter_mut().for_each(|x| *x /= m);
                    }
                }
                let rows = states.into_iter().map(|(s, _)| s).zip(aligned).collect();
                BvsSignaler::Table { rows, posteriors }
            }
            PublicScheme::MonteCarloLp(_) => {
                return Err(Error::Unsupported(
                    "the sampled LP scheme applies to known-valuation instances".into(),
                ))
            }
        })
    }

    fn posterior(&self, theta: &FeatureVector, rng: &mut SimRng) -> Vec<f64> {
        match self {
            BvsSignaler::Full => theta.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            BvsSignaler::None(m) => m.clone(),
            BvsSignaler::Pooling(tp) => {
                let sig = tp.signal(theta, rng).expect("state drawn from the prior");
                tp.posterior(&sig)
            }
            BvsSignaler::Table { rows, posteriors } => {
                let row = rows[theta];
                let u = rng.random::<f64>();
                let mut acc = 0.0;
                let mut pick = row.len() - 1;
                for (k, &p) in row.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = k;
                        break;
                    }
                }
                posteriors[pick].clone()
            }
        }
    }
}

/// Revenue and realized welfare (true value of the winner) of one draw.
pub(crate) fn bvs_draw(instance: &BvsInstance, q: &[f64], theta: &FeatureVector, rng: &mut SimRng) -> (f64, f64) {
    let mut bids = Vec::with_capacity(instance.n);
    let mut truth = Vec::with_capacity(instance.n);
    for (i, &qi) in q.iter().enumerate() {
        let t = rng.random::<f64>();
        bids.push(instance.posterior_bid(qi, t));
        truth.push(instance.value(theta.get(i), t));
    }
    let mut winner = 0;
    for (i, &b) in bids.iter().enumerate() {
        if b > bids[winner] {
            winner = i;
        }
    }
    (top_two(&bids).1, truth[winner])
}

/// Monte-Carlo revenue and welfare of a public scheme in the Bayesian
/// setting. Each bidder bids E[v | own type, signal].
pub fn bvs_public_mc(
    instance: &BvsInstance,
    scheme: &PublicScheme,
    trials: usize,
    seed: u64,
) -> Result<(Estimate, Estimate)> {
    if trials == 0 {
        return Err(param("trials must be positive"));
    }
    if instance.n < 2 {
        return Err(param("a second-price auction needs at least 2 bidders"));
    }
    instance.validate().into_result()?;
    let signaler = BvsSignaler::new(instance, scheme)?;
    let m = paired_trials(trials, seed, |rng| {
        let theta = instance.prior.sample(instance.n, rng);
        let q = signaler.posterior(&theta, rng);
        bvs_draw(instance, &q, &theta, rng)
    });
    Ok((m.estimate_a(), m.estimate_b()))
}

pub fn bvs_public_revenue_mc(
    instance: &BvsInstance,
    scheme: &PublicScheme,
    trials: usize,
    seed: u64,
) -> Result<Estimate> {
    Ok(bvs_public_mc(instance, scheme, trials, seed)?.0)
}
