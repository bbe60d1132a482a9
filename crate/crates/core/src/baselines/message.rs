//! Tree-reweighted message passing (synchronous schedule).
//!
//! With undirected appearance probability `ρ_e = ρ_{u->v} + ρ_{v->u}`, the
//! message from `j` to `i` over edge `e` is
//!
//! ```text
//! log M_{j->i}(x_i) = lse_{x_j} [ θ_ij(x_i, x_j)/ρ_e + θ_j(x_j)
//!                                 + Σ_{k ∈ N(j)} ρ_kj log M_{k->j}(x_j)
//!                                 - log M_{i->j}(x_j) ]
//! ```
//!
//! normalized to log-sum-exp zero. Damping mixes old and new messages in
//! the log domain.

use std::time::Instant;

use crate::dual::{check_marginal_shapes, outgoing_id, primal_objective, EntropyForm, PrimalMarginals};
use crate::error::{Error, Result};
use crate::math::{log_normalize, log_sum_exp, softmax};
use crate::model::PairwiseMrf;
use crate::spanning::EdgeProbabilities;
use crate::trace::{SolveStatus, SolveTrace, TraceRecord};

/// Log-domain messages keyed by directed edge id: entry `d` is the message
/// from the parent of `d` to its child, a table over the child's states.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageSet {
    pub log_msgs: Vec<Vec<f64>>,
}

impl MessageSet {
    pub fn uniform(mrf: &PairwiseMrf) -> Self {
        let g = &mrf.graph;
        let log_msgs = (0..g.num_directed())
            .map(|d| {
                let (_, c) = g.directed_edge(d);
                let k = mrf.cards[c];
                vec![-(k as f64).ln(); k]
            })
            .collect();
        MessageSet { log_msgs }
    }
}

#[derive(Debug, Clone)]
pub struct MpConfig {
    /// Weight of the old message, in `[0, 1)`.
    pub damping: f64,
    /// Converged once the max log-message change falls below this.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Sweep at which a still-moving run is declared non-settling.
    pub settle_window: Option<usize>,
    pub settle_threshold: f64,
    /// Evaluate the primal objective of the beliefs every this many sweeps;
    /// 0 disables it.
    pub primal_eval_every: usize,
    pub entropy_form: EntropyForm,
}

impl Default for MpConfig {
    fn default() -> Self {
        MpConfig {
            damping: 0.0,
            tol: 1e-10,
            max_sweeps: 10_000,
            settle_window: None,
            settle_threshold: 1e-3,
            primal_eval_every: 1,
            entropy_form: EntropyForm::Conditional,
        }
    }
}

impl MpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::InvalidArgument(format!(
                "damping must lie in [0, 1), got {}",
                self.damping
            )));
        }
        Ok(())
    }
}

fn check_edge_probs(mrf: &PairwiseMrf, ep: &EdgeProbabilities) -> Result<()> {
    if ep.rho_dir.len() != mrf.graph.num_directed() {
        return Err(Error::InvalidProbs("shape does not match the model graph".into()));
    }
    for e in 0..mrf.num_edges() {
        if !(ep.undirected(e) > 0.0) {
            let (u, v) = mrf.graph.edge(e);
            return Err(Error::InvalidProbs(format!(
                "edge ({u}, {v}) has zero appearance probability"
            )));
        }
    }
    Ok(())
}

/// Reweighted sum of incoming messages at `j`, plus its potential, minus the
/// message arriving from `skip`.
fn cavity(msgs: &MessageSet, mrf: &PairwiseMrf, ep: &EdgeProbabilities, j: usize, skip: usize) -> Vec<f64> {
    let g = &mrf.graph;
    let mut out = mrf.node_pot[j].clone();
    for nb in g.neighbors(j) {
        let into_j = outgoing_id(g, nb.vertex, nb.edge);
        let rho = ep.undirected(nb.edge);
        for (o, m) in out.iter_mut().zip(&msgs.log_msgs[into_j]) {
            *o += rho * m;
        }
        if nb.vertex == skip {
            for (o, m) in out.iter_mut().zip(&msgs.log_msgs[into_j]) {
                *o -= m;
            }
        }
    }
    out
}

/// Undamped, normalized update of message `d`.
fn fresh_message(msgs: &MessageSet, mrf: &PairwiseMrf, ep: &EdgeProbabilities, d: usize) -> Vec<f64> {
    let g = &mrf.graph;
    let (j, i) = g.directed_edge(d);
    let e = d / 2;
    let rho = ep.undirected(e);
    let (kj, ki) = (mrf.cards[j], mrf.cards[i]);
    let pre = cavity(msgs, mrf, ep, j, i);
    let mut terms = vec![0.0; kj];
    let mut out: Vec<f64> = (0..ki)
        .map(|xi| {
            for (xj, t) in terms.iter_mut().enumerate() {
                let theta = if d % 2 == 0 {
                    mrf.edge_value(e, xj, xi)
                } else {
                    mrf.edge_value(e, xi, xj)
                };
                *t = theta / rho + pre[xj];
            }
            log_sum_exp(&terms)
        })
        .collect();
    log_normalize(&mut out);
    out
}

/// One synchronous sweep over every directed message. Returns the new
/// messages and the largest absolute log-domain change.
pub fn trw_mp_sweep(
    msgs: &MessageSet,
    mrf: &PairwiseMrf,
    ep: &EdgeProbabilities,
    damping: f64,
) -> Result<(MessageSet, f64)> {
    check_edge_probs(mrf, ep)?;
    if !(0.0..1.0).contains(&damping) {
        return Err(Error::InvalidArgument(format!("damping {damping} outside [0, 1)")));
    }
    let mut change: f64 = 0.0;
    let log_msgs = (0..mrf.graph.num_directed())
        .map(|d| {
            let fresh = fresh_message(msgs, mrf, ep, d);
            let mut mixed: Vec<f64> = if damping > 0.0 {
                msgs.log_msgs[d]
                    .iter()
                    .zip(&fresh)
                    .map(|(o, n)| damping * o + (1.0 - damping) * n)
                    .collect()
            } else {
                fresh
            };
            log_normalize(&mut mixed);
            for (o, n) in msgs.log_msgs[d].iter().zip(&mixed) {
                change = change.max((o - n).abs());
            }
            mixed
        })
        .collect();
    if !change.is_finite() {
        return Err(Error::NonFinite("message update".into()));
    }
    Ok((MessageSet { log_msgs }, change))
}

/// Pseudomarginals from messages. Conditionals come from the pairwise
/// beliefs, so the result need not be consistent before convergence.
pub fn trw_mp_beliefs(msgs: &MessageSet, mrf: &PairwiseMrf, ep: &EdgeProbabilities) -> PrimalMarginals {
    let g = &mrf.graph;
    let mu_node = (0..mrf.num_nodes())
        .map(|i| {
            let mut b = mrf.node_pot[i].clone();
            for nb in g.neighbors(i) {
                let rho = ep.undirected(nb.edge);
                let into_i = outgoing_id(g, nb.vertex, nb.edge);
                for (x, m) in b.iter_mut().zip(&msgs.log_msgs[into_i]) {
                    *x += rho * m;
                }
            }
            softmax(&b)
        })
        .collect();
    let mu_cond = (0..g.num_directed())
        .map(|d| {
            let (p, c) = g.directed_edge(d);
            let e = d / 2;
            let rho = ep.undirected(e);
            let pre_p = cavity(msgs, mrf, ep, p, c);
            let pre_c = cavity(msgs, mrf, ep, c, p);
            let (kp, kc) = (mrf.cards[p], mrf.cards[c]);
            let mut table = Vec::with_capacity(kp * kc);
            for xp in 0..kp {
                let row: Vec<f64> = (0..kc)
                    .map(|xc| {
                        let theta = if d % 2 == 0 {
                            mrf.edge_value(e, xp, xc)
                        } else {
                            mrf.edge_value(e, xc, xp)
                        };
                        theta / rho + pre_p[xp] + pre_c[xc]
                    })
                    .collect();
                table.extend(softmax(&row));
            }
            table
        })
        .collect();
    PrimalMarginals { mu_node, mu_cond }
}

#[derive(Debug, Clone)]
pub struct MpSolution {
    pub messages: MessageSet,
    pub marginals: PrimalMarginals,
    pub trace: SolveTrace,
}

impl MpSolution {
    /// Primal objective of the final beliefs.
    pub fn primal_objective(&self, mrf: &PairwiseMrf, ep: &EdgeProbabilities, form: EntropyForm) -> Result<f64> {
        primal_objective(&self.marginals, ep, mrf, form)
    }
}

/// Runs synchronous sweeps from uniform messages.
///
/// Stops when the max change drops below `tol` (converged), when the change
/// still exceeds `settle_threshold` at sweep `settle_window` (non-settling),
/// or at `max_sweeps`.
pub fn run_trw_mp(mrf: &PairwiseMrf, ep: &EdgeProbabilities, cfg: &MpConfig) -> Result<MpSolution> {
    cfg.validate()?;
    check_edge_probs(mrf, ep)?;
    let start = Instant::now();
    let mut msgs = MessageSet::uniform(mrf);
    let mut trace = SolveTrace::new();
    let mut status = SolveStatus::MaxSweeps;
    for sweep in 1..=cfg.max_sweeps {
        let (next, change) = trw_mp_sweep(&msgs, mrf, ep, cfg.damping)?;
        msgs = next;
        trace.sweeps = sweep;
        trace.updates += mrf.graph.num_directed();
        trace.final_residual = change;
        let every = cfg.primal_eval_every;
        let primal = if every > 0 && sweep % every == 0 {
            let beliefs = trw_mp_beliefs(&msgs, mrf, ep);
            check_marginal_shapes(&beliefs, mrf)?;
            Some(primal_objective(&beliefs, ep, mrf, cfg.entropy_form)?)
        } else {
            None
        };
        trace.records.push(TraceRecord {
            update: trace.updates,
            sweep,
            edge: None,
            dual_obj: None,
            primal_obj: primal,
            residual: Some(change),
            delta: None,
            elapsed_ns: start.elapsed().as_nanos(),
        });
        if change < cfg.tol {
            status = SolveStatus::Converged;
            break;
        }
        if cfg.settle_window == Some(sweep) && change > cfg.settle_threshold {
            status = SolveStatus::NonSettling;
            break;
        }
    }
    trace.status = status;
    let marginals = trw_mp_beliefs(&msgs, mrf, ep);
    Ok(MpSolution {
        messages: msgs,
        marginals,
        trace,
    })
}
