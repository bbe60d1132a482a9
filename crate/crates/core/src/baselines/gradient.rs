//! Plain gradient descent on the dual with Armijo backtracking.

use std::time::Instant;

use crate::dual::{check_dual_probs, DualState};
use crate::error::{Error, Result};
use crate::model::PairwiseMrf;
use crate::spanning::EdgeProbabilities;
use crate::trace::{SolveStatus, SolveTrace, TraceRecord};

#[derive(Debug, Clone)]
pub struct GdConfig {
    /// Stop once the gradient max-norm falls below this. Armijo tests on
    /// objective values lose resolution once `|g|²` nears the rounding of
    /// `F_D`, which puts the practical floor a little under 1e-7.
    pub tol: f64,
    pub max_iters: usize,
    /// Sufficient-decrease parameter.
    pub armijo: f64,
    pub max_halvings: usize,
}

impl Default for GdConfig {
    fn default() -> Self {
        GdConfig {
            tol: 1e-7,
            max_iters: 100_000,
            armijo: 1e-4,
            max_halvings: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GdSolution<'a> {
    pub state: DualState<'a>,
    pub trace: SolveTrace,
}

/// Full-gradient steps from `β = 0`. Each iteration tries twice the last
/// accepted step and halves it until the Armijo condition holds.
pub fn solve_gradient_descent<'a>(
    mrf: &'a PairwiseMrf,
    ep: &'a EdgeProbabilities,
    cfg: &GdConfig,
) -> Result<GdSolution<'a>> {
    check_dual_probs(mrf, ep)?;
    let start = Instant::now();
    let mut state = DualState::new(mrf, ep)?;
    let mut trace = SolveTrace::new();
    let mut f = state.dual_objective();
    let mut step = 1.0;
    let mut trial = state.clone();
    let mut last_delta = None;

    for iter in 0..=cfg.max_iters {
        let grad: Vec<f64> = state.dual_gradient().into_iter().flatten().collect();
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        trace.final_residual = gmax;
        trace.records.push(TraceRecord {
            update: iter,
            sweep: iter,
            edge: None,
            dual_obj: Some(f),
            primal_obj: None,
            residual: Some(gmax),
            delta: last_delta,
            elapsed_ns: start.elapsed().as_nanos(),
        });
        if gmax < cfg.tol {
            trace.status = SolveStatus::Converged;
            break;
        }
        if iter == cfg.max_iters {
            break;
        }
        let gsq: f64 = grad.iter().map(|g| g * g).sum();
        let beta = state.beta_flat();
        step *= 2.0;
        let mut halvings = 0;
        let f_new = loop {
            let candidate: Vec<f64> = beta.iter().zip(&grad).map(|(b, g)| b - step * g).collect();
            trial.set_beta_flat(&candidate)?;
            let f_try = trial.dual_objective();
            if f_try <= f - cfg.armijo * step * gsq {
                break f_try;
            }
            halvings += 1;
            if halvings > cfg.max_halvings {
                return Err(Error::LineSearch(cfg.max_halvings));
            }
            step *= 0.5;
        };
        std::mem::swap(&mut state, &mut trial);
        let delta = f - f_new;
        trace.min_delta = trace.min_delta.min(delta);
        trace.total_delta += delta;
        last_delta = Some(delta);
        trace.updates += 1;
        trace.sweeps = iter + 1;
        f = f_new;
    }
    Ok(GdSolution { state, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gen_ising_grid, Graph, IsingSpec};
    use crate::spanning::uniform_tree_probs;

    #[test]
    fn zero_model_stops_immediately() {
        let mrf = PairwiseMrf::zeros(Graph::grid(2, 2), vec![2; 4]).unwrap();
        let ep = uniform_tree_probs(&mrf.graph).unwrap();
        let sol = solve_gradient_descent(&mrf, &ep, &GdConfig::default()).unwrap();
        assert_eq!(sol.trace.status, SolveStatus::Converged);
        assert_eq!(sol.trace.updates, 0);
    }

    #[test]
    fn accepted_steps_decrease_the_objective() {
        let spec = IsingSpec { rows: 2, cols: 3, alpha_field: 1.0, alpha_inter: 1.0, seed: 11 };
        let mrf = gen_ising_grid(&spec).unwrap();
        let ep = uniform_tree_probs(&mrf.graph).unwrap();
        let cfg = GdConfig { max_iters: 50, ..GdConfig::default() };
        let sol = solve_gradient_descent(&mrf, &ep, &cfg).unwrap();
        let objs: Vec<f64> = sol.trace.records.iter().filter_map(|r| r.dual_obj).collect();
        assert!(objs.windows(2).all(|w| w[1] < w[0]));
        assert!(sol.trace.min_delta > 0.0);
    }
}
