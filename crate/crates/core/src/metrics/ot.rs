//! Exact discrete optimal transport.
//!
//! Three solvers, all exact: sorted quantile coupling on the line (convex
//! costs only), shortest-augmenting-path assignment for equal-size uniform
//! measures, and a primal network simplex for the general transportation
//! problem. Inputs larger than the solver budget are refused.

use serde::{Deserialize, Serialize};

use super::{Diagnostics, MetricKind, MetricResult};
use crate::error::{Error, Result};
use crate::measures::EmpiricalMeasure;
use crate::scalar::Real;

/// Largest equal-size uniform problem sent to the assignment solver.
pub const MAX_ASSIGNMENT: usize = 1024;
/// Largest support (per side) accepted by the transportation solver.
pub const MAX_TRANSPORT: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Identical,
    Quantile,
    Assignment,
    NetworkSimplex,
    ClosedForm,
}

/// `W_q(μ, ν) = (min_π ∫ |x - y|^q dπ)^{1/q}`.
///
/// The value carries the q-th root; the unrooted cost is in
/// `diagnostics.cost`.
pub fn wasserstein<T: Real>(mu: &EmpiricalMeasure<T>, nu: &EmpiricalMeasure<T>, q: f64) -> Result<MetricResult> {
    if !(q >= 1.0) || !q.is_finite() {
        return Err(Error::Invalid(format!("Wasserstein exponent must lie in [1, inf), got {q}")));
    }
    let (cost, solver) = solve(mu, nu, q)?;
    Ok(MetricResult {
        kind: MetricKind::Wasserstein { q },
        value: cost.max(0.0).powf(1.0 / q),
        diagnostics: Diagnostics { solver: Some(solver), cost: Some(cost), ..Default::default() },
    })
}

/// `min_π ∫ |x - y|^p dπ` for any `p > 0` (no root).
pub fn transport_cost<T: Real>(mu: &EmpiricalMeasure<T>, nu: &EmpiricalMeasure<T>, p: f64) -> Result<MetricResult> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::Invalid(format!("transport exponent must be positive, got {p}")));
    }
    let (cost, solver) = solve(mu, nu, p)?;
    Ok(MetricResult {
        kind: MetricKind::TransportCost { p },
        value: cost.max(0.0),
        diagnostics: Diagnostics { solver: Some(solver), cost: Some(cost), ..Default::default() },
    })
}

/// Kantorovich-Rubinstein dual norm `sup_{Lip(φ) ≤ 1} ⟨μ - ν, φ⟩ = W₁(μ, ν)`.
pub fn dual_lipschitz<T: Real>(mu: &EmpiricalMeasure<T>, nu: &EmpiricalMeasure<T>) -> Result<f64> {
    Ok(wasserstein(mu, nu, 1.0)?.value)
}

fn solve<T: Real>(mu: &EmpiricalMeasure<T>, nu: &EmpiricalMeasure<T>, p: f64) -> Result<(f64, Solver)> {
    if mu.dim() != nu.dim() {
        return Err(Error::Dimension { expected: mu.dim(), got: nu.dim() });
    }
    if mu == nu {
        return Ok((0.0, Solver::Identical));
    }
    let a = mu.to_f64();
    let b = nu.to_f64();
    if a.dim() == 1 && p >= 1.0 {
        return Ok((quantile_cost(&a, &b, p), Solver::Quantile));
    }
    let (n, m) = (a.len(), b.len());
    if n.max(m) > MAX_TRANSPORT {
        return Err(Error::SolverBudget { points: n.max(m), budget: MAX_TRANSPORT });
    }
    let cost = |i: usize, j: usize| ground_cost(a.point(i), b.point(j), p);
    if n == m && n <= MAX_ASSIGNMENT && a.is_uniform() && b.is_uniform() {
        let c: Vec<f64> = (0..n * n).map(|k| cost(k / n, k % n)).collect();
        let perm = assignment(n, &c);
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| c[i * n + j]).sum();
        return Ok((total / n as f64, Solver::Assignment));
    }
    let (total, _) = network_simplex(a.weights(), b.weights(), &cost);
    Ok((total, Solver::NetworkSimplex))
}

#[inline]
fn ground_cost(x: &[f64], y: &[f64], p: f64) -> f64 {
    let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    if p == 2.0 {
        r2
    } else if p == 1.0 {
        r2.sqrt()
    } else {
        r2.sqrt().powf(p)
    }
}

/// `∫₀¹ |F⁻¹(u) - G⁻¹(u)|^p du`, optimal on the line for convex costs.
fn quantile_cost(a: &EmpiricalMeasure<f64>, b: &EmpiricalMeasure<f64>, p: f64) -> f64 {
    let sorted = |m: &EmpiricalMeasure<f64>| {
        let mut v: Vec<(f64, f64)> = m.points().iter().copied().zip(m.weights().iter().copied()).collect();
        v.sort_by(|x, y| x.0.total_cmp(&y.0));
        v
    };
    let xs = sorted(a);
    let ys = sorted(b);
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (xs[0].1, ys[0].1);
    let mut total = 0.0;
    loop {
        let w = ra.min(rb);
        total += w * (xs[i].0 - ys[j].0).abs().powf(p);
        ra -= w;
        rb -= w;
        if ra <= 0.0 {
            i += 1;
            if i == xs.len() {
                break;
            }
            ra = xs[i].1;
        }
        if rb <= 0.0 {
            j += 1;
            if j == ys.len() {
                break;
            }
            rb = ys[j].1;
        }
    }
    total
}

/// Minimum-cost perfect matching on an `n × n` cost matrix (row major).
/// Returns `perm[row] = column`.
pub(crate) fn assignment(n: usize, c: &[f64]) -> Vec<usize> {
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|x| *x = inf);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            let row = &c[(i0 - 1) * n..i0 * n];
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    perm
}

const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;
const DIR_UP: i8 = 1;
const DIR_DOWN: i8 = -1;

/// Primal network simplex for the balanced transportation problem with
/// supplies `a` and demands `b` on the complete bipartite graph.
///
/// Spanning-tree bookkeeping (parent, thread, successor counts) follows the
/// classic LEMON layout; entering arcs are priced by block search.
/// Returns the optimal cost and the dense flow matrix.
pub(crate) fn network_simplex(a: &[f64], b: &[f64], cost_fn: &dyn Fn(usize, usize) -> f64) -> (f64, Vec<f64>) {
    let (n, m) = (a.len(), b.len());
    let node_num = n + m;
    let real_arcs = n * m;
    let all_arcs = real_arcs + node_num;
    let root = node_num;

    let mut cost = vec![0.0; all_arcs];
    let mut max_cost = 0.0f64;
    for i in 0..n {
        for j in 0..m {
            let c = cost_fn(i, j);
            cost[i * m + j] = c;
            max_cost = max_cost.max(c);
        }
    }
    let mut art_source = vec![0usize; node_num];
    let mut art_target = vec![0usize; node_num];
    let source = |e: usize, art_source: &[usize]| if e < real_arcs { e / m } else { art_source[e - real_arcs] };
    let target = |e: usize, art_target: &[usize]| if e < real_arcs { n + e % m } else { art_target[e - real_arcs] };

    let supply: Vec<f64> = a.iter().copied().chain(b.iter().map(|x| -x)).collect();
    let art_cost = (max_cost + 1.0) * node_num as f64;
    let eps = 1e-14 * (1.0 + max_cost);

    let mut flow = vec![0.0; all_arcs];
    let mut state = vec![STATE_LOWER; all_arcs];
    let mut pi = vec![0.0; node_num + 1];
    let mut parent = vec![usize::MAX; node_num + 1];
    let mut pred = vec![usize::MAX; node_num + 1];
    let mut pred_dir = vec![0i8; node_num + 1];
    let mut thread = vec![0usize; node_num + 1];
    let mut rev_thread = vec![0usize; node_num + 1];
    let mut succ_num = vec![0usize; node_num + 1];
    let mut last_succ = vec![0usize; node_num + 1];

    thread[root] = 0;
    rev_thread[0] = root;
    succ_num[root] = node_num + 1;
    last_succ[root] = root - 1;
    for u in 0..node_num {
        let e = real_arcs + u;
        parent[u] = root;
        pred[u] = e;
        thread[u] = u + 1;
        rev_thread[u + 1] = u;
        succ_num[u] = 1;
        last_succ[u] = u;
        state[e] = STATE_TREE;
        if supply[u] >= 0.0 {
            pred_dir[u] = DIR_UP;
            pi[u] = 0.0;
            art_source[u] = u;
            art_target[u] = root;
            flow[e] = supply[u];
            cost[e] = 0.0;
        } else {
            pred_dir[u] = DIR_DOWN;
            pi[u] = art_cost;
            art_source[u] = root;
            art_target[u] = u;
            flow[e] = -supply[u];
            cost[e] = art_cost;
        }
    }

    let block = ((real_arcs as f64).sqrt() as usize).max(10);
    let mut next_arc = 0usize;
    let mut dirty = Vec::new();
    let max_iter = 50 * all_arcs + 10_000;
    for _ in 0..max_iter {
        // pricing
        let mut in_arc = usize::MAX;
        let mut best = -eps;
        let mut cnt = block;
        let mut e = next_arc;
        let mut scanned = 0;
        let mut found = false;
        while scanned < real_arcs {
            let (i, j) = (e / m, n + e % m);
            let c = state[e] as f64 * (cost[e] + pi[i] - pi[j]);
            if c < best {
                best = c;
                in_arc = e;
            }
            e += 1;
            if e == real_arcs {
                e = 0;
            }
            scanned += 1;
            cnt -= 1;
            if cnt == 0 {
                if in_arc != usize::MAX {
                    found = true;
                    break;
                }
                cnt = block;
            }
        }
        if !found && in_arc == usize::MAX {
            break;
        }
        next_arc = e;

        // join node
        let (s_in, t_in) = (source(in_arc, &art_source), target(in_arc, &art_target));
        let (mut u, mut v) = (s_in, t_in);
        while u != v {
            if succ_num[u] < succ_num[v] {
                u = parent[u];
            } else {
                v = parent[v];
            }
        }
        let join = u;

        // leaving arc
        let (first, second) = if state[in_arc] == STATE_LOWER { (s_in, t_in) } else { (t_in, s_in) };
        let mut delta = f64::INFINITY;
        let mut result = 0;
        let mut u_out = usize::MAX;
        let mut u = first;
        while u != join {
            if pred_dir[u] == DIR_UP {
                let d = flow[pred[u]].max(0.0);
                if d < delta {
                    delta = d;
                    u_out = u;
                    result = 1;
                }
            }
            u = parent[u];
        }
        let mut u = second;
        while u != join {
            if pred_dir[u] == DIR_DOWN {
                let d = flow[pred[u]].max(0.0);
                if d <= delta {
                    delta = d;
                    u_out = u;
                    result = 2;
                }
            }
            u = parent[u];
        }
        debug_assert!(result != 0, "uncapacitated transportation cannot be unbounded");
        let (u_in, v_in) = if result == 1 { (first, second) } else { (second, first) };

        // augment
        if delta > 0.0 {
            let val = state[in_arc] as f64 * delta;
            flow[in_arc] += val;
            let mut u = s_in;
            while u != join {
                flow[pred[u]] -= pred_dir[u] as f64 * val;
                u = parent[u];
            }
            let mut u = t_in;
            while u != join {
                flow[pred[u]] += pred_dir[u] as f64 * val;
                u = parent[u];
            }
        }
        state[in_arc] = STATE_TREE;
        let out_arc = pred[u_out];
        state[out_arc] = STATE_LOWER;
        flow[out_arc] = 0.0;

        // tree update
        let old_rev_thread = rev_thread[u_out];
        let old_succ_num = succ_num[u_out];
        let old_last_succ = last_succ[u_out];
        let v_out = parent[u_out];
        if u_in == u_out {
            parent[u_in] = v_in;
            pred[u_in] = in_arc;
            pred_dir[u_in] = if u_in == s_in { DIR_UP } else { DIR_DOWN };
            if thread[v_in] != u_out {
                let mut after = thread[old_last_succ];
                thread[old_rev_thread] = after;
                rev_thread[after] = old_rev_thread;
                after = thread[v_in];
                thread[v_in] = u_out;
                rev_thread[u_out] = v_in;
                thread[old_last_succ] = after;
                rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue = if old_rev_thread == v_in { thread[old_last_succ] } else { thread[v_in] };
            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = last_succ[u_in];
            let mut after = thread[last];
            thread[v_in] = u_in;
            dirty.clear();
            dirty.push(v_in);
            while stem != u_out {
                let next_stem = parent[stem];
                thread[last] = next_stem;
                dirty.push(last);
                let before = rev_thread[stem];
                thread[before] = after;
                rev_thread[after] = before;
                parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;
                last = if last_succ[stem] == last_succ[par_stem] { rev_thread[par_stem] } else { last_succ[stem] };
                after = thread[last];
            }
            parent[u_out] = par_stem;
            thread[last] = thread_continue;
            rev_thread[thread_continue] = last;
            last_succ[u_out] = last;
            if old_rev_thread != v_in {
                thread[old_rev_thread] = after;
                rev_thread[after] = old_rev_thread;
            }
            for &u in &dirty {
                rev_thread[thread[u]] = u;
            }
            let mut tmp_sc = 0usize;
            let tmp_ls = last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = parent[u];
                pred[u] = pred[p];
                pred_dir[u] = -pred_dir[p];
                tmp_sc = tmp_sc + succ_num[u] - succ_num[p];
                succ_num[u] = tmp_sc;
                last_succ[p] = tmp_ls;
                u = p;
            }
            pred[u_in] = in_arc;
            pred_dir[u_in] = if u_in == s_in { DIR_UP } else { DIR_DOWN };
            succ_num[u_in] = old_succ_num;
        }
        let up_limit_out = if last_succ[join] == v_in { join } else { usize::MAX };
        let last_succ_out = last_succ[u_out];
        let mut u = v_in;
        while u != usize::MAX && last_succ[u] == v_in {
            last_succ[u] = last_succ_out;
            u = parent[u];
        }
        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && last_succ[u] == old_last_succ {
                last_succ[u] = old_rev_thread;
                u = parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && last_succ[u] == old_last_succ {
                last_succ[u] = last_succ_out;
                u = parent[u];
            }
        }
        let mut u = v_in;
        while u != join {
            succ_num[u] += old_succ_num;
            u = parent[u];
        }
        let mut u = v_out;
        while u != join {
            succ_num[u] -= old_succ_num;
            u = parent[u];
        }

        // potentials of the moved subtree
        let sigma = pi[v_in] - pi[u_in] - pred_dir[u_in] as f64 * cost[in_arc];
        let end = thread[last_succ[u_in]];
        let mut u = u_in;
        while u != end {
            pi[u] += sigma;
            u = thread[u];
        }
    }

    flow.truncate(real_arcs);
    let total = flow.iter().zip(&cost).map(|(f, c)| f.max(0.0) * c).sum();
    (total, flow)
}
