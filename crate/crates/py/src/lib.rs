//! Python bindings. Instances are classes; structured results come back as
//! plain dicts and lists.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use signalcraft::model::{self, Instance};
use signalcraft::{auction, bvs_pool, oracle, private, public_exact, public_mc, rng, Error, PublicScheme};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Parameter(_) | Error::Instance(_) | Error::Scheme(_) | Error::Json(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json_value<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| to_py(e.into()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_dist(s: &str) -> PyResult<model::ValueDistribution> {
    s.parse().map_err(to_py)
}

/// Known-valuation instance: a list of states with masses and value vectors.
#[pyclass(name = "KvsInstance", module = "signalcraft", from_py_object)]
#[derive(Clone)]
struct PyKvs(model::KvsInstance);

#[pymethods]
impl PyKvs {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        match Instance::from_json(text).map_err(to_py)? {
            Instance::Kvs(k) => {
                k.validate().into_result().map_err(to_py)?;
                Ok(PyKvs(k))
            }
            Instance::Bvs(_) => Err(PyValueError::new_err("expected a kvs instance")),
        }
    }

    fn to_json(&self) -> PyResult<String> {
        Instance::Kvs(self.0.clone()).to_json().map_err(to_py)
    }

    #[staticmethod]
    fn example1() -> Self {
        PyKvs(model::make_example1())
    }

    #[staticmethod]
    fn example3(epsilon: f64) -> PyResult<Self> {
        Ok(PyKvs(model::make_example3(epsilon).map_err(to_py)?))
    }

    #[staticmethod]
    fn random(n: usize, states: usize, seed: u64) -> Self {
        PyKvs(model::random_kvs(n, states, &mut rng::derive(seed, 0)))
    }

    #[staticmethod]
    fn lattice(supports: Vec<Vec<f64>>, seed: u64) -> Self {
        PyKvs(model::random_lattice(&supports, &mut rng::derive(seed, 0)))
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.0.states.len()
    }

    fn surplus(&self) -> f64 {
        self.0.surplus()
    }

    fn __repr__(&self) -> String {
        format!("KvsInstance(n={}, states={})", self.0.n, self.0.states.len())
    }
}

/// Bayesian-valuation instance: targeting prior plus high/low distributions.
#[pyclass(name = "BvsInstance", module = "signalcraft", from_py_object)]
#[derive(Clone)]
struct PyBvs(model::BvsInstance);

#[pymethods]
impl PyBvs {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        match Instance::from_json(text).map_err(to_py)? {
            Instance::Bvs(b) => {
                b.validate().into_result().map_err(to_py)?;
                Ok(PyBvs(b))
            }
            Instance::Kvs(_) => Err(PyValueError::new_err("expected a bvs instance")),
        }
    }

    fn to_json(&self) -> PyResult<String> {
        Instance::Bvs(self.0.clone()).to_json().map_err(to_py)
    }

    #[staticmethod]
    fn example2(n: usize) -> PyResult<Self> {
        Ok(PyBvs(model::make_example2(n).map_err(to_py)?))
    }

    #[staticmethod]
    fn separation(n: usize, epsilon: f64) -> PyResult<Self> {
        Ok(PyBvs(model::make_theorem2_instance(n, epsilon).map_err(to_py)?))
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n
    }

    fn __repr__(&self) -> String {
        format!("BvsInstance(n={}, high={}, low={})", self.0.n, self.0.high, self.0.low)
    }
}

fn kvs_scheme(name: &str) -> PyResult<PublicScheme> {
    match name {
        "full" => Ok(PublicScheme::FullInformation),
        "none" => Ok(PublicScheme::NoInformation),
        other => Err(PyValueError::new_err(format!("unknown scheme {other:?}"))),
    }
}

/// Revenue of "full" or "none" on a known-valuation instance.
#[pyfunction]
fn public_revenue(instance: &PyKvs, scheme: &str) -> PyResult<f64> {
    auction::kvs_public_revenue(&instance.0, &kvs_scheme(scheme)?).map_err(to_py)
}

/// Optimal public revenue and the scheme table as a dict.
#[pyfunction]
fn solve_optimal_public<'py>(py: Python<'py>, instance: &PyKvs) -> PyResult<(f64, Bound<'py, PyAny>)> {
    let (scheme, revenue) = public_exact::solve_optimal_public(&instance.0).map_err(to_py)?;
    Ok((revenue, json_value(py, &scheme)?))
}

/// Optimal public revenue from the independent oracle LP.
#[pyfunction]
fn oracle_public_optimal(instance: &PyKvs) -> PyResult<f64> {
    Ok(oracle::brute_force_public_optimal(&instance.0).map_err(to_py)?.1)
}

/// Revenue estimate (mean, std error) of the sampled public scheme.
#[pyfunction]
#[pyo3(signature = (instance, epsilon, trials, seed, samples=None))]
fn evaluate_mc_scheme(instance: &PyKvs, epsilon: f64, trials: usize, seed: u64, samples: Option<usize>) -> PyResult<(f64, f64)> {
    let mut config = public_mc::McConfig::new(instance.0.n, epsilon, seed).map_err(to_py)?;
    if let Some(k) = samples {
        config = config.with_k(k).map_err(to_py)?;
    }
    let e = public_mc::evaluate_mc_scheme(&instance.0, &config, trials).map_err(to_py)?;
    Ok((e.revenue.mean, e.revenue.std_error))
}

/// Private scheme plan (dict) with its simulated revenue.
#[pyfunction]
#[pyo3(signature = (instance, epsilon, delta=0.01, seed=0, trials=100_000))]
fn run_private_scheme<'py>(
    py: Python<'py>,
    instance: &PyKvs,
    epsilon: f64,
    delta: f64,
    seed: u64,
    trials: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let r = private::run_private_scheme(&instance.0, epsilon, delta, seed, trials, private::PrivateMode::Auto)
        .map_err(to_py)?;
    json_value(py, &r)
}

#[pyfunction]
fn theorem5_bound<'py>(py: Python<'py>, instance: &PyKvs, epsilon: f64) -> PyResult<Bound<'py, PyAny>> {
    json_value(py, &private::theorem5_bound(&instance.0, epsilon).map_err(to_py)?)
}

/// Best-response intervals [(lo, hi)] of an uninformed bidder `j` facing
/// truthful opponents, given (mass, profile) pairs.
#[pyfunction]
fn uninformed_best_response(posterior: Vec<(f64, Vec<f64>)>, j: usize) -> PyResult<Vec<(f64, f64)>> {
    let bids: Vec<Vec<f64>> = posterior.iter().map(|p| p.1.clone()).collect();
    let br = private::uninformed_best_response(&posterior, j, &bids).map_err(to_py)?;
    Ok(br.best.iter().map(|iv| (iv.lo, iv.hi)).collect())
}

#[pyfunction]
fn tail_balanced(masses: Vec<f64>) -> bool {
    bvs_pool::tail_balanced(&masses)
}

/// Pairing probabilities over the positive-mass tail states.
#[pyfunction]
fn construct_pooling(masses: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    Ok(bvs_pool::construct_pooling(&masses).map_err(to_py)?.rows)
}

/// Revenue and welfare estimates of "full", "none" or "pooling".
#[pyfunction]
fn bvs_public_mc(instance: &PyBvs, scheme: &str, trials: usize, seed: u64) -> PyResult<((f64, f64), (f64, f64))> {
    let s = match scheme {
        "pooling" => PublicScheme::TailPooling(bvs_pool::TailPooling::for_instance(&instance.0)),
        other => kvs_scheme(other)?,
    };
    let (r, w) = auction::bvs_public_mc(&instance.0, &s, trials, seed).map_err(to_py)?;
    Ok(((r.mean, r.std_error), (w.mean, w.std_error)))
}

#[pyfunction]
fn pooled_pair_revenue(high: &str, low: &str, n: usize) -> PyResult<(f64, f64)> {
    let e = bvs_pool::pooled_pair_revenue(&parse_dist(high)?, &parse_dist(low)?, n).map_err(to_py)?;
    Ok((e.mean, e.std_error))
}

/// Per-branch revenue/welfare report, e.g. check_lemma6("uniform:0,1", "point:0", 22, 2).
#[pyfunction]
#[pyo3(signature = (high, low, n, weight, trials=100_000, seed=0))]
fn check_lemma6<'py>(
    py: Python<'py>,
    high: &str,
    low: &str,
    n: usize,
    weight: usize,
    trials: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let r = bvs_pool::check_lemma6(&parse_dist(high)?, &parse_dist(low)?, n, weight, trials, seed).map_err(to_py)?;
    json_value(py, &r)
}

/// Best deterministic-scheme welfare with at most `max_signals` blocks.
#[pyfunction]
fn best_partition_welfare(instance: &PyBvs, max_signals: usize) -> PyResult<(Vec<Vec<usize>>, f64)> {
    let (p, w) = oracle::best_partition_welfare(&instance.0, max_signals).map_err(to_py)?;
    Ok((p.blocks, w))
}

/// (exact sum, closed lower bound) of full-information revenue.
#[pyfunction]
fn fullinfo_revenue(n: usize, epsilon: f64) -> PyResult<(f64, f64)> {
    let r = oracle::theorem2_fullinfo_revenue(n, epsilon).map_err(to_py)?;
    Ok((r.exact, r.lower_bound))
}

#[pyfunction]
fn binomial_cond_expectation(m: u64, p: f64, k: u64) -> PyResult<f64> {
    oracle::binomial_cond_expectation(m, p, k).map_err(to_py)
}

#[pymodule]
#[pyo3(name = "signalcraft")]
pub fn signalcraft_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKvs>()?;
    m.add_class::<PyBvs>()?;
    m.add_function(wrap_pyfunction!(public_revenue, m)?)?;
    m.add_function(wrap_pyfunction!(solve_optimal_public, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_public_optimal, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_mc_scheme, m)?)?;
    m.add_function(wrap_pyfunction!(run_private_scheme, m)?)?;
    m.add_function(wrap_pyfunction!(theorem5_bound, m)?)?;
    m.add_function(wrap_pyfunction!(uninformed_best_response, m)?)?;
    m.add_function(wrap_pyfunction!(tail_balanced, m)?)?;
    m.add_function(wrap_pyfunction!(construct_pooling, m)?)?;
    m.add_function(wrap_pyfunction!(bvs_public_mc, m)?)?;
    m.add_function(wrap_pyfunction!(pooled_pair_revenue, m)?)?;
    m.add_function(wrap_pyfunction!(check_lemma6, m)?)?;
    m.add_function(wrap_pyfunction!(best_partition_welfare, m)?)?;
    m.add_function(wrap_pyfunction!(fullinfo_revenue, m)?)?;
    m.add_function(wrap_pyfunction!(binomial_cond_expectation, m)?)?;
    Ok(())
}
