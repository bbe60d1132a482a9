//! Convergent single-edge coordinate updates on the dual.
//!
//! Each update moves one edge's β table along the log-ratio of its two joint
//! copies,
//!
//! ```text
//! β_uv += ε · log( μ(x_v|x_u) μ_u(x_u) / (μ(x_u|x_v) μ_v(x_v)) )
//! ```
//!
//! with `ε = eps_factor · min(ρ_u, ρ_v, ρ_{u->v}, ρ_{v->u})`. For
//! `0 < eps_factor < 1` the dual objective never increases and is unchanged
//! only at edges whose two copies already agree.

use std::time::Instant;

use log::warn;

use crate::dual::{
    check_dual_probs, optimality_residual, primal_objective, DualState, EntropyForm,
    PrimalMarginals,
};
use crate::error::{Error, Result};
use crate::math::log_sum_exp;
use crate::model::{Graph, PairwiseMrf};
use crate::spanning::EdgeProbabilities;
use crate::trace::{SolveStatus, SolveTrace, TraceRecord};

/// Log-probabilities below this are clamped in the marginal-form update.
pub const LOG_FLOOR: f64 = -700.0;

/// Slack allowed on the per-update descent check.
pub const MONOTONE_SLACK: f64 = 1e-12;

/// Allowed gap between the incrementally tracked and the recomputed
/// objective before a warning is logged.
pub const DRIFT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct GpConfig {
    /// Fraction of the smallest incident probability used as step size.
    pub eps_factor: f64,
    /// Stop once the optimality residual falls below this.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Evaluate the primal objective every this many sweeps; 0 disables it.
    pub primal_eval_every: usize,
    /// Abort when an update increases the dual objective.
    pub check_monotone: bool,
    /// Keep one trace row per edge update, not only per sweep.
    pub record_updates: bool,
    pub entropy_form: EntropyForm,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            eps_factor: 0.5,
            tol: 1e-8,
            max_sweeps: 10_000,
            primal_eval_every: 1,
            check_monotone: true,
            record_updates: true,
            entropy_form: EntropyForm::Conditional,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_factor > 0.0 && self.eps_factor < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "eps_factor must lie in (0, 1), got {}",
                self.eps_factor
            )));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidArgument("tol must be non-negative".into()));
        }
        Ok(())
    }
}

/// `eps_factor · min(ρ_u, ρ_v, ρ_{u->v}, ρ_{v->u})` for canonical edge `e`.
pub fn step_size(ep: &EdgeProbabilities, graph: &Graph, e: usize, eps_factor: f64) -> Result<f64> {
    let (u, v) = graph.edge(e);
    let smallest = ep.rho_root[u]
        .min(ep.rho_root[v])
        .min(ep.rho_dir[2 * e])
        .min(ep.rho_dir[2 * e + 1]);
    if !(smallest > 0.0) {
        return Err(Error::InvalidProbs(format!(
            "edge ({u}, {v}) has a non-positive incident probability"
        )));
    }
    Ok(eps_factor * smallest)
}

/// Outcome of a single edge update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeUpdate {
    /// Decrease of the dual objective, `F_D(before) - F_D(after)`.
    pub delta: f64,
    /// Max discrepancy between the edge's two joint copies before the update.
    pub residual_before: f64,
}

/// Applies the β update to edge `e` and returns the objective decrease,
/// computed from the two affected node terms only.
pub fn update_edge_beta(state: &mut DualState<'_>, e: usize, eps: f64) -> Result<EdgeUpdate> {
    let mrf = state.mrf();
    let ep = state.probs();
    let (u, v) = mrf.graph.edge(e);
    let (ku, kv) = (mrf.cards[u], mrf.cards[v]);

    let log_mu_u = state.node_log_marginal(u);
    let log_mu_v = state.node_log_marginal(v);
    // Parent u: k_u × k_v. Parent v: k_v × k_u.
    let cond_from_u = state.log_conditional(2 * e);
    let cond_from_v = state.log_conditional(2 * e + 1);

    let mut beta = state.beta[e].clone();
    let mut residual: f64 = 0.0;
    for xu in 0..ku {
        for xv in 0..kv {
            let a = cond_from_u[xu * kv + xv] + log_mu_u[xu];
            let b = cond_from_v[xv * ku + xu] + log_mu_v[xv];
            residual = residual.max((a.exp() - b.exp()).abs());
            beta[xu * kv + xv] += eps * (a - b);
        }
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFinite(format!("β update on edge ({u}, {v})")));
    }

    let old_lambda_u = state.lambda[2 * e].clone();
    let old_lambda_v = state.lambda[2 * e + 1].clone();
    state.beta[e] = beta;
    state.refresh_edge(e);

    let node_gain = |log_mu: &[f64], old: &[f64], new: &[f64], rho: f64| {
        let shifted: Vec<f64> = log_mu
            .iter()
            .zip(old.iter().zip(new))
            .map(|(lm, (lo, ln))| lm + (lo - ln) / rho)
            .collect();
        -rho * log_sum_exp(&shifted)
    };
    let delta = node_gain(&log_mu_u, &old_lambda_u, &state.lambda[2 * e], ep.rho_root[u])
        + node_gain(&log_mu_v, &old_lambda_v, &state.lambda[2 * e + 1], ep.rho_root[v]);
    if !delta.is_finite() {
        return Err(Error::NonFinite(format!("objective change on edge ({u}, {v})")));
    }
    Ok(EdgeUpdate {
        delta,
        residual_before: residual,
    })
}

fn floored_log(p: f64, floored: &mut usize) -> f64 {
    let l = if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };
    if l < LOG_FLOOR {
        *floored += 1;
        LOG_FLOOR
    } else {
        l
    }
}

/// The same update written on singleton and conditional marginals. The
/// result matches `to_primal` after [`update_edge_beta`]; working in logs
/// turns every ratio into a difference.
pub fn update_edge_marginal_form(
    m: &PrimalMarginals,
    graph: &Graph,
    ep: &EdgeProbabilities,
    e: usize,
    eps: f64,
) -> Result<PrimalMarginals> {
    let (u, v) = graph.edge(e);
    let (ku, kv) = (m.card(u), m.card(v));
    let (du, dv) = (2 * e, 2 * e + 1);
    let (rho_u_dir, rho_v_dir) = (ep.rho_dir[du], ep.rho_dir[dv]);
    let mut floored = 0;

    let log_mu_u: Vec<f64> = m.mu_node[u].iter().map(|&p| floored_log(p, &mut floored)).collect();
    let log_mu_v: Vec<f64> = m.mu_node[v].iter().map(|&p| floored_log(p, &mut floored)).collect();
    let cond_u: Vec<f64> = m.mu_cond[du].iter().map(|&p| floored_log(p, &mut floored)).collect();
    let cond_v: Vec<f64> = m.mu_cond[dv].iter().map(|&p| floored_log(p, &mut floored)).collect();
    if floored > 0 {
        warn!("marginal-form update on edge ({u}, {v}) floored {floored} log entries at {LOG_FLOOR}");
    }

    // a: copy owned by u -> v, b: copy owned by v -> u, both indexed (x_u, x_v).
    let a = |xu: usize, xv: usize| cond_u[xu * kv + xv] + log_mu_u[xu];
    let b = |xu: usize, xv: usize| cond_v[xv * ku + xu] + log_mu_v[xv];

    let mut new_cond_u = vec![0.0; ku * kv];
    let step = eps / rho_u_dir;
    for xu in 0..ku {
        let row = &mut new_cond_u[xu * kv..(xu + 1) * kv];
        for (xv, slot) in row.iter_mut().enumerate() {
            *slot = (1.0 - step) * cond_u[xu * kv + xv] + step * (b(xu, xv) - log_mu_u[xu]);
        }
        normalize_log_row(row);
    }
    let mut new_cond_v = vec![0.0; kv * ku];
    let step = eps / rho_v_dir;
    for xv in 0..kv {
        let row = &mut new_cond_v[xv * ku..(xv + 1) * ku];
        for (xu, slot) in row.iter_mut().enumerate() {
            *slot = (1.0 - step) * cond_v[xv * ku + xu] + step * (a(xu, xv) - log_mu_v[xv]);
        }
        normalize_log_row(row);
    }

    let mut new_mu_u: Vec<f64> = (0..ku)
        .map(|xu| {
            let inner: Vec<f64> = (0..kv)
                .map(|xv| cond_u[xu * kv + xv] + eps / rho_u_dir * (b(xu, xv) - a(xu, xv)))
                .collect();
            log_mu_u[xu] + rho_u_dir / ep.rho_root[u] * log_sum_exp(&inner)
        })
        .collect();
    normalize_log_row(&mut new_mu_u);
    let mut new_mu_v: Vec<f64> = (0..kv)
        .map(|xv| {
            let inner: Vec<f64> = (0..ku)
                .map(|xu| cond_v[xv * ku + xu] + eps / rho_v_dir * (a(xu, xv) - b(xu, xv)))
                .collect();
            log_mu_v[xv] + rho_v_dir / ep.rho_root[v] * log_sum_exp(&inner)
        })
        .collect();
    normalize_log_row(&mut new_mu_v);

    let mut out = m.clone();
    out.mu_node[u] = new_mu_u.into_iter().map(f64::exp).collect();
    out.mu_node[v] = new_mu_v.into_iter().map(f64::exp).collect();
    out.mu_cond[du] = new_cond_u.into_iter().map(f64::exp).collect();
    out.mu_cond[dv] = new_cond_v.into_iter().map(f64::exp).collect();
    if out.mu_node.iter().chain(&out.mu_cond).flatten().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite(format!("marginal-form update on edge ({u}, {v})")));
    }
    Ok(out)
}

fn normalize_log_row(row: &mut [f64]) {
    let z = log_sum_exp(row);
    for x in row.iter_mut() {
        *x -= z;
    }
}

/// `Σ_i ρ_i log μ_i(x_i) + Σ_{p->c} ρ_{p->c} log μ(x_c | x_p)` over both
/// orientations of every edge. Differs from the assignment score by a
/// constant that tracks the dual objective.
pub fn reparam_product(
    m: &PrimalMarginals,
    graph: &Graph,
    ep: &EdgeProbabilities,
    x: &[usize],
) -> Result<f64> {
    let zero = |what: String| Error::InvalidArgument(format!("zero marginal entry in {what}"));
    let mut total = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        let p = m.mu_node[i][xi];
        if !(p > 0.0) {
            return Err(zero(format!("node {i}")));
        }
        total += ep.rho_root[i] * p.ln();
    }
    for d in 0..graph.num_directed() {
        let (p, c) = graph.directed_edge(d);
        let q = m.mu_cond[d][x[p] * m.card(c) + x[c]];
        if !(q > 0.0) {
            return Err(zero(format!("conditional {p} -> {c}")));
        }
        total += ep.rho_dir[d] * q.ln();
    }
    Ok(total)
}

/// Finished run.
#[derive(Debug, Clone)]
pub struct GpSolution<'a> {
    pub state: DualState<'a>,
    pub marginals: PrimalMarginals,
    pub trace: SolveTrace,
}

impl GpSolution<'_> {
    pub fn dual_objective(&self) -> f64 {
        self.state.dual_objective()
    }
}

/// Round-robin sweep driver over canonical edges.
#[derive(Debug, Clone)]
pub struct GpSolver<'a> {
    state: DualState<'a>,
    cfg: GpConfig,
    eps: Vec<f64>,
    objective: f64,
    residual: f64,
    trace: SolveTrace,
    start: Instant,
}

impl<'a> GpSolver<'a> {
    /// Starts from `β = 0`.
    pub fn new(mrf: &'a PairwiseMrf, ep: &'a EdgeProbabilities, cfg: GpConfig) -> Result<Self> {
        cfg.validate()?;
        let report = mrf.validate();
        if !report.is_empty() {
            return Err(Error::InvalidModel(report.issues.join("; ")));
        }
        check_dual_probs(mrf, ep)?;
        let eps = (0..mrf.num_edges())
            .map(|e| step_size(ep, &mrf.graph, e, cfg.eps_factor))
            .collect::<Result<Vec<_>>>()?;
        let state = DualState::new(mrf, ep)?;
        let mut solver = GpSolver {
            objective: state.dual_objective(),
            state,
            cfg,
            eps,
            residual: f64::INFINITY,
            trace: SolveTrace::new(),
            start: Instant::now(),
        };
        solver.summarize_sweep()?;
        Ok(solver)
    }

    pub fn state(&self) -> &DualState<'a> {
        &self.state
    }

    pub fn trace(&self) -> &SolveTrace {
        &self.trace
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Dual objective tracked through the per-update decreases.
    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn converged(&self) -> bool {
        self.residual < self.cfg.tol
    }

    /// One update per edge in canonical order, then a sweep summary.
    pub fn sweep(&mut self) -> Result<()> {
        let graph = &self.state.mrf().graph;
        let sweep = self.trace.sweeps + 1;
        for e in 0..graph.num_edges() {
            let upd = update_edge_beta(&mut self.state, e, self.eps[e])?;
            self.trace.updates += 1;
            if self.cfg.check_monotone && upd.delta < -MONOTONE_SLACK {
                return Err(Error::Monotonicity {
                    update: self.trace.updates,
                    increase: -upd.delta,
                });
            }
            self.objective -= upd.delta;
            self.trace.min_delta = self.trace.min_delta.min(upd.delta);
            self.trace.total_delta += upd.delta;
            if self.cfg.record_updates {
                self.trace.records.push(TraceRecord {
                    update: self.trace.updates,
                    sweep,
                    edge: Some(graph.edge(e)),
                    dual_obj: Some(self.objective),
                    primal_obj: None,
                    residual: Some(upd.residual_before),
                    delta: Some(upd.delta),
                    elapsed_ns: self.start.elapsed().as_nanos(),
                });
            }
        }
        self.trace.sweeps = sweep;
        self.summarize_sweep()
    }

    fn summarize_sweep(&mut self) -> Result<()> {
        let full = self.state.dual_objective();
        let drift = (full - self.objective).abs();
        if drift > DRIFT_TOLERANCE * full.abs().max(1.0) {
            warn!(
                "tracked dual objective drifted by {drift:e} after sweep {}",
                self.trace.sweeps
            );
        }
        self.objective = full;
        let marginals = self.state.to_primal();
        self.residual = optimality_residual(&marginals, &self.state.mrf().graph);
        let every = self.cfg.primal_eval_every;
        let primal = if every > 0 && self.trace.sweeps % every == 0 {
            Some(primal_objective(
                &marginals,
                self.state.probs(),
                self.state.mrf(),
                self.cfg.entropy_form,
            )?)
        } else {
            None
        };
        self.trace.final_residual = self.residual;
        self.trace.records.push(TraceRecord {
            update: self.trace.updates,
            sweep: self.trace.sweeps,
            edge: None,
            dual_obj: Some(full),
            primal_obj: primal,
            residual: Some(self.residual),
            delta: None,
            elapsed_ns: self.start.elapsed().as_nanos(),
        });
        Ok(())
    }

    /// Sweeps until the residual drops below `tol` or the cap is reached.
    pub fn run(mut self) -> Result<GpSolution<'a>> {
        while !self.converged() && self.trace.sweeps < self.cfg.max_sweeps {
            self.sweep()?;
        }
        self.trace.status = if self.converged() {
            SolveStatus::Converged
        } else {
            SolveStatus::MaxSweeps
        };
        let marginals = self.state.to_primal();
        Ok(GpSolution {
            state: self.state,
            marginals,
            trace: self.trace,
        })
    }
}

/// Runs the solver from `β = 0` to convergence or the sweep cap.
pub fn solve<'a>(
    mrf: &'a PairwiseMrf,
    ep: &'a EdgeProbabilities,
    cfg: &GpConfig,
) -> Result<GpSolution<'a>> {
    GpSolver::new(mrf, ep, cfg.clone())?.run()
}
