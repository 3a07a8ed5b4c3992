//! Exact solution of the cardinality-constrained problem for small samples.
//!
//! The search is over outlier indicators. Problems with at most
//! [`OracleOptions::exhaustive_limit`] supports are enumerated outright;
//! larger ones go through a best-first branch-and-bound whose node bound is
//! the least-squares objective of the rows already fixed as inliers, raised
//! by the smallest cost that the rows still forced into the fit must add.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::classic::fit_ols;
use crate::error::{Error, Result};
use crate::gram::Gram;
use crate::l0::{fit_iht, improves, noise_floor, top_k_indices, SparsitySolution, IHT_MAX_ITER};
use crate::linalg::{residuals, Dataset};
use crate::par;

pub const MAX_ORACLE_ROWS: usize = 200;
/// Denominator floor in the optimality gap.
pub const GAP_EPSILON: f64 = 1e-12;
/// Gap at or below which a run is reported as proven optimal.
pub const OPTIMALITY_TOLERANCE: f64 = 1e-4;
/// Relative agreement of objectives treated as the same solution.
pub const EQUAL_OBJECTIVE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    pub time_limit: Duration,
    /// Enumerate every support when there are at most this many.
    pub exhaustive_limit: u64,
    /// When set together with a warm start, outlier effects larger than
    /// `tau * max |alpha_warm|` are treated as infeasible. This mirrors the
    /// bounded formulation and can exclude the true optimum, so it is off by
    /// default.
    pub alpha_bound_tau: Option<f64>,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { time_limit: Duration::from_secs(300), exhaustive_limit: 2_000_000, alpha_bound_tau: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Optimal,
    TimeLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub solution: SparsitySolution,
    /// Objective of the best solution found.
    pub primal: f64,
    /// Best lower bound at termination.
    pub dual: f64,
    pub proven_optimal: bool,
    /// Supports enumerated, or search nodes expanded.
    pub nodes_explored: u64,
    pub wall_time: Duration,
    pub termination: Termination,
}

impl OracleResult {
    pub fn gap(&self) -> f64 {
        relative_optimality_gap(self.primal, self.dual.max(GAP_EPSILON)).unwrap_or(f64::INFINITY)
    }
}

/// `(primal - dual) / dual`.
pub fn relative_optimality_gap(primal: f64, dual: f64) -> Result<f64> {
    if !(dual > 0.0) {
        return Err(Error::DivisionDomain { dual });
    }
    Ok((primal - dual) / dual)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolutionComparison {
    pub same_support: bool,
    pub same_objective: bool,
}

impl SolutionComparison {
    pub fn equal(&self) -> bool {
        self.same_support || self.same_objective
    }
}

pub fn compare_solutions(a: &SparsitySolution, b: &SparsitySolution) -> SolutionComparison {
    let scale = a.objective.abs().max(b.objective.abs());
    SolutionComparison {
        same_support: a.outliers == b.outliers,
        same_objective: (a.objective - b.objective).abs() <= EQUAL_OBJECTIVE_TOLERANCE * scale,
    }
}

/// Same outlier set, or objectives equal to relative precision `1e-8`.
pub fn equal_solution(a: &SparsitySolution, b: &SparsitySolution) -> bool {
    compare_solutions(a, b).equal()
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    c
}

struct Incumbent {
    solution: SparsitySolution,
    floor: f64,
    alpha_bound: Option<f64>,
}

impl Incumbent {
    fn value(&self) -> f64 {
        self.solution.objective
    }

    fn admissible(&self, sol: &SparsitySolution) -> bool {
        self.alpha_bound.is_none_or(|m| sol.outliers.iter().all(|&i| sol.alpha[i].abs() <= m))
    }

    /// Refits `outliers` with QR and keeps it if it improves.
    fn offer(&mut self, data: &Dataset, k: usize, screened: f64, outliers: Vec<usize>) {
        if !improves(screened, self.value(), self.floor) {
            return;
        }
        if let Ok(sol) = SparsitySolution::from_outliers(data, k, outliers) {
            if self.admissible(&sol) && improves(sol.objective, self.value(), self.floor) {
                self.solution = sol;
            }
        }
    }
}

/// Exact minimizer of `0.5 * RSS` over all outlier sets of size at most `k`.
///
/// `warm_start`, when given, seeds the incumbent. On reaching the time limit
/// the best solution found is returned with `termination = TimeLimit` and the
/// smallest open bound as `dual`.
pub fn best_subset_exact(
    data: &Dataset,
    k: usize,
    warm_start: Option<&SparsitySolution>,
    options: &OracleOptions,
) -> Result<OracleResult> {
    let start = Instant::now();
    let n = data.n();
    if n > MAX_ORACLE_ROWS {
        return Err(Error::TooLarge { n, limit: MAX_ORACLE_ROWS });
    }
    if n - k.min(n) < data.width() {
        return Err(Error::TooFewInliers { inliers: n.saturating_sub(k), width: data.width() });
    }
    if let Some(w) = warm_start {
        if w.alpha.len() != n || w.beta.len() != data.width() {
            return Err(Error::Dimension("warm start does not match dataset".into()));
        }
    }
    let alpha_bound = match (options.alpha_bound_tau, warm_start) {
        (Some(tau), Some(w)) if !w.outliers.is_empty() => {
            Some(tau * w.alpha.iter().fold(0.0f64, |m, a| m.max(a.abs())))
        }
        _ => None,
    };

    let own = fit_iht(data, k, &fit_ols(data)?.beta, IHT_MAX_ITER)?;
    // branching order and target shift come from the internal start only, so
    // the search itself does not depend on the warm start
    let t = residuals(data, &own.beta)?;
    let mut incumbent = Incumbent { solution: own, floor: noise_floor(data), alpha_bound };
    if !incumbent.admissible(&incumbent.solution) {
        incumbent.solution.objective = f64::INFINITY;
    }
    if let Some(w) = warm_start {
        if w.outliers.len() <= k && incumbent.admissible(w) && w.objective < incumbent.value() {
            if let Ok(refit) = SparsitySolution::from_outliers(data, k, w.outliers.clone()) {
                incumbent.solution = refit;
            }
        }
    }

    let (nodes, dual, termination) = if binomial(n, k) <= options.exhaustive_limit as u128 {
        let nodes = enumerate(data, k, &t, &mut incumbent);
        (nodes, incumbent.value(), Termination::Optimal)
    } else {
        branch_and_bound(data, k, &t, &mut incumbent, start, options.time_limit)
    };
    if !incumbent.value().is_finite() {
        return Err(Error::AllFitsFailed);
    }
    let primal = incumbent.value();
    let dual = dual.min(primal);
    let gap = (primal - dual) / dual.max(GAP_EPSILON);
    Ok(OracleResult {
        solution: incumbent.solution,
        primal,
        dual,
        proven_optimal: gap <= OPTIMALITY_TOLERANCE,
        nodes_explored: nodes,
        wall_time: start.elapsed(),
        termination,
    })
}

/// Scores every support of exactly `k` outliers.
fn enumerate(data: &Dataset, k: usize, t: &[f64], inc: &mut Incumbent) -> u64 {
    let n = data.n();
    let full = Gram::from_rows(data, t, 0..n);
    if k == 0 {
        let mut scratch = Vec::new();
        if let Some(rss) = full.rss(&mut scratch) {
            inc.offer(data, 0, 0.5 * rss, vec![]);
        }
        return 1;
    }

    struct Walk<'a> {
        data: &'a Dataset,
        t: &'a [f64],
        stack: Vec<Gram>,
        chosen: Vec<usize>,
        scratch: Vec<f64>,
        best: Option<(f64, Vec<usize>)>,
        count: u64,
    }

    impl Walk<'_> {
        fn descend(&mut self, from: usize, k: usize) {
            let depth = self.chosen.len();
            let n = self.data.n();
            for i in from..=n - (k - depth) {
                let (head, tail) = self.stack.split_at_mut(depth + 1);
                let g = &mut tail[0];
                g.clone_from(&head[depth]);
                g.remove(self.data.design_row(i), self.t[i]);
                self.chosen.push(i);
                if depth + 1 == k {
                    self.count += 1;
                    if let Some(rss) = self.stack[depth + 1].rss(&mut self.scratch) {
                        if self.best.as_ref().is_none_or(|b| rss < b.0) {
                            self.best = Some((rss, self.chosen.clone()));
                        }
                    }
                } else {
                    self.descend(i + 1, k);
                }
                self.chosen.pop();
            }
        }
    }

    let results = par::map_indexed(n - k + 1, |first| {
        let mut walk = Walk {
            data,
            t,
            stack: vec![full.clone(); k + 1],
            chosen: vec![first],
            scratch: Vec::new(),
            best: None,
            count: 0,
        };
        walk.stack[1].remove(data.design_row(first), t[first]);
        if k == 1 {
            walk.count = 1;
            walk.best = walk.stack[1].rss(&mut walk.scratch).map(|rss| (rss, vec![first]));
        } else {
            walk.descend(first + 1, k);
        }
        (walk.best, walk.count)
    });

    let mut count = 0;
    // candidates in lexicographic order; keep ones within rounding of the
    // best so the QR refit settles near-ties
    let mut scored: Vec<(f64, Vec<usize>)> = Vec::new();
    for (best, c) in results {
        count += c;
        scored.extend(best);
    }
    let Some(min) = scored.iter().map(|s| s.0).min_by(f64::total_cmp) else {
        return count;
    };
    for (rss, outliers) in scored {
        if rss <= min * (1.0 + 1e-9) + 2.0 * inc.floor {
            inc.offer(data, k, 0.5 * rss * (1.0 - 1e-9) - inc.floor, outliers);
        }
    }
    count
}

#[derive(Debug)]
struct Node {
    bound: f64,
    seq: u64,
    depth: usize,
    outliers: Vec<usize>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // reversed so the max-heap pops the smallest bound, earliest first
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(other.seq.cmp(&self.seq))
    }
}

enum Evaluation {
    Leaf,
    Open(f64),
}

struct Search<'a> {
    data: &'a Dataset,
    k: usize,
    t: &'a [f64],
    order: Vec<usize>,
    scratch: Vec<f64>,
    z: Vec<f64>,
}

impl Search<'_> {
    /// Lower bound for all completions of `node`, offering the incumbent a
    /// greedy completion along the way.
    fn evaluate(&mut self, depth: usize, outliers: &[usize], parent: f64, inc: &mut Incumbent) -> Evaluation {
        let data = self.data;
        let fixed_in = self.order[..depth].iter().copied().filter(|i| !outliers.contains(i));
        let gram = Gram::from_rows(data, self.t, fixed_in);
        let free = &self.order[depth..];
        let remaining = self.k - outliers.len();
        let forced = free.len().saturating_sub(remaining);
        let Some(chol) = gram.cholesky() else {
            return if depth == self.order.len() { Evaluation::Leaf } else { Evaluation::Open(parent) };
        };
        let mut delta = gram.rhs().to_vec();
        let explained = chol.forward(&mut delta);
        chol.backward(&mut delta);
        let rss = (gram.target_ss() - explained).max(0.0);
        if forced == 0 {
            let mut all = outliers.to_vec();
            all.extend_from_slice(free);
            inc.offer(data, self.k, 0.5 * rss, all);
            return Evaluation::Leaf;
        }
        let mut resid = Vec::with_capacity(free.len());
        let mut increments = Vec::with_capacity(free.len());
        for &j in free {
            let x = data.design_row(j);
            let e = self.t[j] - x.iter().zip(&delta).map(|(a, b)| a * b).sum::<f64>();
            let h = chol.leverage(x, &mut self.z);
            resid.push(e);
            increments.push(e * e / (1.0 + h));
        }
        // any completion keeps `forced` free rows, and adding rows never
        // lowers the residual sum, so the largest single-row cost among them
        // is at least the forced-th smallest
        let (_, kth, _) = increments.select_nth_unstable_by(forced - 1, f64::total_cmp);
        let bound = (0.5 * (rss + *kth)).max(parent);

        let drop = top_k_indices(&resid, remaining);
        let mut greedy = gram.clone();
        let mut all = outliers.to_vec();
        let mut d = 0;
        for (pos, &j) in free.iter().enumerate() {
            if drop.get(d) == Some(&pos) {
                d += 1;
                all.push(j);
            } else {
                greedy.add(data.design_row(j), self.t[j]);
            }
        }
        if let Some(g) = greedy.rss(&mut self.scratch) {
            inc.offer(data, self.k, 0.5 * g, all);
        }
        Evaluation::Open(bound)
    }
}

fn branch_and_bound(
    data: &Dataset,
    k: usize,
    t: &[f64],
    inc: &mut Incumbent,
    start: Instant,
    time_limit: Duration,
) -> (u64, f64, Termination) {
    let n = data.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| t[b].abs().total_cmp(&t[a].abs()).then(a.cmp(&b)));
    let mut search = Search { data, k, t, order, scratch: Vec::new(), z: Vec::new() };
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let mut nodes = 0u64;
    let mut dual_floor = 0.0f64;
    if let Evaluation::Open(b) = search.evaluate(0, &[], 0.0, inc) {
        heap.push(Node { bound: b, seq, depth: 0, outliers: vec![] });
    }
    let prune = |bound: f64, inc: &Incumbent| !improves(bound, inc.value(), inc.floor);
    while let Some(node) = heap.pop() {
        if prune(node.bound, inc) {
            // best-first: every remaining bound is at least this large
            heap.clear();
            break;
        }
        debug_assert!(node.bound >= dual_floor, "dual bound decreased");
        dual_floor = node.bound;
        nodes += 1;
        if nodes.is_multiple_of(64) && start.elapsed() >= time_limit {
            heap.push(node);
            break;
        }
        let row = search.order[node.depth];
        let mut children = Vec::with_capacity(2);
        if node.outliers.len() < k {
            let mut outs = node.outliers.clone();
            outs.push(row);
            children.push(outs);
        }
        children.push(node.outliers);
        for outs in children {
            if let Evaluation::Open(b) = search.evaluate(node.depth + 1, &outs, node.bound, inc) {
                if !prune(b, inc) {
                    seq += 1;
                    heap.push(Node { bound: b, seq, depth: node.depth + 1, outliers: outs });
                }
            }
        }
    }
    match heap.peek() {
        None => (nodes, inc.value(), Termination::Optimal),
        Some(open) => (nodes, open.bound, Termination::TimeLimit),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random(n: usize, d: usize, n_out: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let y = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let shift = if i < n_out { 4.0 + 4.0 * rng.random::<f64>() } else { 0.0 };
                0.5 + r.iter().sum::<f64>() + rng.sample::<f64, _>(StandardNormal) + shift
            })
            .collect();
        Dataset::new(y, &rows, true).unwrap()
    }

    /// Independent oracle: QR least squares on every complement.
    fn all_supports(data: &Dataset, k: usize) -> (f64, usize) {
        fn rec(data: &Dataset, k: usize, from: usize, cur: &mut Vec<usize>, out: &mut (f64, usize)) {
            if cur.len() == k {
                out.1 += 1;
                if let Ok(s) = SparsitySolution::from_outliers(data, k, cur.clone()) {
                    out.0 = out.0.min(s.objective);
                }
                return;
            }
            for i in from..data.n() {
                cur.push(i);
                rec(data, k, i + 1, cur, out);
                cur.pop();
            }
        }
        let mut out = (f64::INFINITY, 0);
        rec(data, k, 0, &mut Vec::new(), &mut out);
        out
    }

    fn bnb() -> OracleOptions {
        OracleOptions { exhaustive_limit: 0, ..Default::default() }
    }

    #[test]
    fn budget_zero_is_ols_in_one_node() {
        let data = random(15, 2, 0, 1);
        let res = best_subset_exact(&data, 0, None, &OracleOptions::default()).unwrap();
        assert!(res.proven_optimal);
        assert_eq!(res.nodes_explored, 1);
        assert!((res.primal - fit_ols(&data).unwrap().objective).abs() < 1e-10);
    }

    #[test]
    fn enumeration_covers_all_66_supports() {
        let data = random(12, 1, 2, 3);
        let res = best_subset_exact(&data, 2, None, &OracleOptions::default()).unwrap();
        let (best, count) = all_supports(&data, 2);
        assert_eq!(count, 66);
        assert_eq!(res.nodes_explored, 66);
        assert!((res.primal - best).abs() <= 1e-10 * (1.0 + best));
        assert_eq!(res.termination, Termination::Optimal);
    }

    #[test]
    fn branch_and_bound_matches_enumeration() {
        for seed in 0..40 {
            let n = 8 + (seed as usize % 7);
            let k = 1 + (seed as usize % 4);
            let data = random(n, 1 + seed as usize % 2, k.min(2), 100 + seed);
            let res = best_subset_exact(&data, k, None, &bnb()).unwrap();
            let (best, _) = all_supports(&data, k);
            assert!((res.primal - best).abs() <= 1e-9 * (1.0 + best), "seed {seed}: {} vs {best}", res.primal);
            assert!(res.proven_optimal);
            assert!(res.gap() <= OPTIMALITY_TOLERANCE);
        }
    }

    #[test]
    fn optimal_warm_start_is_kept() {
        let data = random(14, 1, 2, 9);
        let exact = best_subset_exact(&data, 2, None, &OracleOptions::default()).unwrap();
        let again = best_subset_exact(&data, 2, Some(&exact.solution), &bnb()).unwrap();
        assert_eq!(again.primal, exact.primal);
        assert!(again.proven_optimal);
    }

    #[test]
    fn time_limit_returns_incumbent_with_honest_bound() {
        let data = random(120, 2, 10, 5);
        let opts = OracleOptions { time_limit: Duration::ZERO, exhaustive_limit: 0, alpha_bound_tau: None };
        let res = best_subset_exact(&data, 10, None, &opts).unwrap();
        assert!(res.dual <= res.primal + 1e-9);
        if res.termination == Termination::TimeLimit {
            assert!(!res.proven_optimal || res.gap() <= OPTIMALITY_TOLERANCE);
        }
    }

    #[test]
    fn rejects_large_or_infeasible_problems() {
        let data = random(201, 1, 0, 1);
        assert!(matches!(best_subset_exact(&data, 1, None, &OracleOptions::default()), Err(Error::TooLarge { .. })));
        let data = random(5, 2, 0, 1);
        assert!(matches!(
            best_subset_exact(&data, 3, None, &OracleOptions::default()),
            Err(Error::TooFewInliers { .. })
        ));
    }

    #[test]
    fn gap_arithmetic() {
        assert_eq!(relative_optimality_gap(1.0, 1.0).unwrap(), 0.0);
        assert!((relative_optimality_gap(1.1, 1.0).unwrap() - 0.1).abs() < 1e-12);
        assert!(matches!(relative_optimality_gap(1.0, 0.0), Err(Error::DivisionDomain { .. })));
    }

    #[test]
    fn solution_equality() {
        let data = random(12, 1, 2, 4);
        let a = SparsitySolution::from_outliers(&data, 2, vec![0, 1]).unwrap();
        let mut b = a.clone();
        b.alpha[0] += 0.0;
        assert!(equal_solution(&a, &b));
        let mut c = SparsitySolution::from_outliers(&data, 2, vec![0, 5]).unwrap();
        c.objective = a.objective * (1.0 + 1e-3);
        assert!(!equal_solution(&a, &c));
        let cmp = compare_solutions(&a, &b);
        assert!(cmp.same_support && cmp.same_objective);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn warm_start_never_hurts(seed in 0u64..1000, k in 1usize..4) {
            let data = random(12, 1, 2, seed);
            let cold = best_subset_exact(&data, k, None, &bnb()).unwrap();
            let warm_sol = SparsitySolution::from_outliers(&data, k, (0..k).collect()).unwrap();
            let warm = best_subset_exact(&data, k, Some(&warm_sol), &bnb()).unwrap();
            proptest::prop_assert!(warm.primal <= cold.primal * (1.0 + 1e-12) + 1e-15);
        }
    }
}
