//! Exact inference by enumerating every joint assignment.

use crate::dual::PrimalMarginals;
use crate::error::{Error, Result};
use crate::model::PairwiseMrf;

/// Upper bound on the number of joint assignments enumerated.
pub const MAX_ASSIGNMENTS: u64 = 1 << 20;

fn check_size(mrf: &PairwiseMrf) -> Result<()> {
    let mut total: u64 = 1;
    for &k in &mrf.cards {
        total = total.saturating_mul(k as u64);
        if total > MAX_ASSIGNMENTS {
            return Err(Error::SizeGuard(format!(
                "state space exceeds {MAX_ASSIGNMENTS} assignments"
            )));
        }
    }
    Ok(())
}

/// Calls `f` on every assignment in mixed-radix order, node 0 fastest.
fn for_each_assignment(mrf: &PairwiseMrf, mut f: impl FnMut(&[usize], f64)) {
    let n = mrf.num_nodes();
    let mut x = vec![0usize; n];
    loop {
        let mut s: f64 = x.iter().enumerate().map(|(i, &xi)| mrf.node_pot[i][xi]).sum();
        for (e, &(u, v)) in mrf.graph.edges().iter().enumerate() {
            s += mrf.edge_value(e, x[u], x[v]);
        }
        f(&x, s);
        let mut i = 0;
        loop {
            if i == n {
                return;
            }
            x[i] += 1;
            if x[i] < mrf.cards[i] {
                break;
            }
            x[i] = 0;
            i += 1;
        }
    }
}

/// `log Z` as a running log-sum-exp over all assignments.
pub fn exact_log_partition(mrf: &PairwiseMrf) -> Result<f64> {
    check_size(mrf)?;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for_each_assignment(mrf, |_, s| {
        if s > max {
            sum = sum * (max - s).exp() + 1.0;
            max = s;
        } else {
            sum += (s - max).exp();
        }
    });
    Ok(max + sum.ln())
}

/// Exact singleton marginals and child-given-parent conditionals derived
/// from the exact pairwise joints.
pub fn exact_marginals(mrf: &PairwiseMrf) -> Result<PrimalMarginals> {
    let log_z = exact_log_partition(mrf)?;
    let g = &mrf.graph;
    let mut node: Vec<Vec<f64>> = mrf.cards.iter().map(|&k| vec![0.0; k]).collect();
    let mut pair: Vec<Vec<f64>> = mrf.edge_pot.iter().map(|t| vec![0.0; t.len()]).collect();
    for_each_assignment(mrf, |x, s| {
        let p = (s - log_z).exp();
        for (i, &xi) in x.iter().enumerate() {
            node[i][xi] += p;
        }
        for (e, &(u, v)) in g.edges().iter().enumerate() {
            pair[e][x[u] * mrf.cards[v] + x[v]] += p;
        }
    });
    let mu_cond = (0..g.num_directed())
        .map(|d| {
            let (u, v) = g.edge(d / 2);
            let (ku, kv) = (mrf.cards[u], mrf.cards[v]);
            let joint = &pair[d / 2];
            let (kp, kc) = if d % 2 == 0 { (ku, kv) } else { (kv, ku) };
            let mut table = vec![0.0; kp * kc];
            for xp in 0..kp {
                for xc in 0..kc {
                    table[xp * kc + xc] = if d % 2 == 0 {
                        joint[xp * kv + xc]
                    } else {
                        joint[xc * kv + xp]
                    };
                }
                let row = &mut table[xp * kc..(xp + 1) * kc];
                let z: f64 = row.iter().sum();
                for r in row.iter_mut() {
                    *r /= z;
                }
            }
            table
        })
        .collect();
    Ok(PrimalMarginals {
        mu_node: node,
        mu_cond,
    })
}
