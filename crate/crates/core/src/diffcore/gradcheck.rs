//! Central finite-difference oracle for the tape.
//!
//! The oracle only ever evaluates forward values; it never looks at the
//! backward implementation it is checking.

use rand::Rng;

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore, SeededRng};
use super::tensor::Tensor;
use crate::error::Result;

/// Perturbation used by every check.
pub const STEP: f64 = 1e-5;

/// Magnitude below which errors are measured absolutely rather than relatively.
pub const FLOOR: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Helpers for building random check inputs.
pub struct GradCheck;

impl GradCheck {
    pub fn random(shape: &[usize], rng: &mut SeededRng) -> Tensor {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::new(shape.to_vec(), data).expect("finite random data")
    }
}

fn eval_inputs<F>(inputs: &[Tensor], f: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    Ok(g.value(out).item())
}

/// Worst relative error between the tape's gradient and central differences,
/// over every entry of every input.
pub fn check_inputs<F>(inputs: &[Tensor], f: F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut worst: f64 = 0.0;
    for (which, input) in inputs.iter().enumerate() {
        let analytic = grads
            .wrt(vars[which])
            .map(|t| t.data().to_vec())
            .unwrap_or_else(|| vec![0.0; input.len()]);
        for (j, &a) in analytic.iter().enumerate() {
            let mut plus = inputs.to_vec();
            plus[which].data_mut()[j] += STEP;
            let mut minus = inputs.to_vec();
            minus[which].data_mut()[j] -= STEP;
            let numeric = (eval_inputs(&plus, &f)? - eval_inputs(&minus, &f)?) / (2.0 * STEP);
            worst = worst.max(relative_error(a, numeric));
        }
    }
    Ok(worst)
}

/// Per-parameter outcome of [`check_params`].
#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub worst: f64,
    pub checked: usize,
}

/// Compares stored-parameter gradients of the scalar built by `f` against
/// central differences.
///
/// `f` receives a fresh graph and the store; it must bind parameters itself.
/// At most `max_entries` entries per parameter are probed (evenly strided),
/// and frozen parameters are expected to receive no gradient at all.
pub fn check_params<F>(store: &ParamStore, max_entries: usize, f: F) -> Result<Vec<ParamCheck>>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut work = store.clone();
    work.zero_grad();
    let mut g = Graph::new();
    let out = f(&mut g, &work)?;
    g.backward(out)?.accumulate_into(&mut work);
    let analytic: Vec<Vec<f64>> = work
        .iter()
        .map(|(_, p)| p.gradient.data().to_vec())
        .collect();

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let out = f(&mut g, s)?;
        Ok(g.value(out).item())
    };

    let mut report = Vec::new();
    for id in store.ids() {
        let p = store.get(id);
        let len = p.value.len();
        let stride = len.div_ceil(max_entries.max(1)).max(1);
        let mut worst: f64 = 0.0;
        let mut checked = 0;
        for j in (0..len).step_by(stride) {
            let numeric = if p.frozen {
                0.0
            } else {
                let plus = perturbed(store, id, j, STEP);
                let minus = perturbed(store, id, j, -STEP);
                (eval(&plus)? - eval(&minus)?) / (2.0 * STEP)
            };
            worst = worst.max(relative_error(analytic[id.index()][j], numeric));
            checked += 1;
        }
        report.push(ParamCheck {
            name: p.name.clone(),
            worst,
            checked,
        });
    }
    Ok(report)
}

fn perturbed(store: &ParamStore, id: ParamId, entry: usize, delta: f64) -> ParamStore {
    let mut s = store.clone();
    s.get_mut(id).value.data_mut()[entry] += delta;
    s
}

/// Largest error in a [`check_params`] report.
pub fn worst(report: &[ParamCheck]) -> f64 {
    report.iter().map(|r| r.worst).fold(0.0, f64::max)
}
