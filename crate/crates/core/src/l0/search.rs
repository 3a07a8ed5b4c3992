use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CoefVector, Dataset};
use crate::par;

use super::iht::{fit_iht, IHT_MAX_ITER};
use super::swap::{local_swap_search, IMPROVEMENT_TOL};
use super::{improves, noise_floor, SparsitySolution};

pub const LCS_MAX_OUTER: usize = 50;
pub const NEIGHBORHOOD_MAX_SWEEPS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcsOutcome {
    pub solution: SparsitySolution,
    /// Objective of the first hard-thresholding pass.
    pub iht_objective: f64,
    /// Number of exchange searches performed.
    pub outer_iterations: usize,
    /// The returned solution admits no improving exchange of order `l`.
    pub inescapable: bool,
}

/// Local combinatorial search: hard thresholding from `beta0`, then
/// alternating improving exchanges and hard thresholding until no exchange
/// of up to `l` rows helps.
///
/// Single-row exchanges are exhausted before pairs are tried, so with `l = 2`
/// the search passes through the `l = 1` result and can only improve on it.
pub fn fit_lcs(data: &Dataset, k: usize, beta0: &CoefVector, l: usize) -> Result<SparsitySolution> {
    fit_lcs_detailed(data, k, beta0, l).map(|o| o.solution)
}

pub fn fit_lcs_detailed(data: &Dataset, k: usize, beta0: &CoefVector, l: usize) -> Result<LcsOutcome> {
    if !(1..=2).contains(&l) {
        return Err(Error::InvalidInput(format!("local exactness level must be 1 or 2, got {l}")));
    }
    let mut sol = fit_iht(data, k, beta0, IHT_MAX_ITER)?;
    let iht_objective = sol.objective;
    let mut searches = 0;
    for _ in 0..LCS_MAX_OUTER {
        let mut step = local_swap_search(data, &sol, 1)?;
        searches += 1;
        if !step.improved && l == 2 {
            step = local_swap_search(data, &sol, 2)?;
            searches += 1;
        }
        if !step.improved {
            return Ok(LcsOutcome { solution: sol, iht_objective, outer_iterations: searches, inescapable: true });
        }
        debug_assert!(step.solution.objective < sol.objective, "accepted exchange did not improve");
        let swapped = step.solution;
        let refined = fit_iht(data, k, &swapped.beta, IHT_MAX_ITER)?;
        let next = if refined.objective <= swapped.objective { refined } else { swapped };
        debug_assert!(next.objective < sol.objective, "local search objective increased");
        sol = next;
    }
    log::warn!("local search stopped after {LCS_MAX_OUTER} outer iterations without certifying a local optimum");
    Ok(LcsOutcome { solution: sol, iht_objective, outer_iterations: searches, inescapable: false })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodOutcome {
    /// `solutions[k - 1]` is the solution for budget `k`.
    pub solutions: Vec<SparsitySolution>,
    pub sweeps: usize,
    /// The summed objective stopped changing before the sweep cap.
    pub converged: bool,
}

impl NeighborhoodOutcome {
    pub fn for_k(&self, k: usize) -> Option<&SparsitySolution> {
        k.checked_sub(1).and_then(|i| self.solutions.get(i))
    }

    pub fn total_objective(&self) -> f64 {
        self.solutions.iter().map(|s| s.objective).sum()
    }
}

/// Solves every budget `1..=max_k` with local search from `beta0`, then
/// sweeps upward through the budgets re-seeding each one from the current
/// solutions of its neighbors, keeping whichever is best. Sweeps stop once
/// the summed objective is unchanged to relative precision `1e-12`.
pub fn neighborhood_search(data: &Dataset, beta0: &CoefVector, max_k: usize, l: usize) -> Result<NeighborhoodOutcome> {
    if max_k == 0 || max_k > data.n() / 2 {
        return Err(Error::InvalidInput(format!("maximum budget {max_k} outside 1..={}", data.n() / 2)));
    }
    let initial = par::map_indexed(max_k, |i| fit_lcs(data, i + 1, beta0, l));
    let mut solutions = initial.into_iter().collect::<Result<Vec<_>>>()?;
    let mut total: f64 = solutions.iter().map(|s| s.objective).sum();
    let mut sweeps = 0;
    let floor = noise_floor(data);
    let mut converged = max_k == 1;
    while !converged && sweeps < NEIGHBORHOOD_MAX_SWEEPS {
        sweeps += 1;
        for idx in 0..max_k {
            let k = idx + 1;
            let mut seeds = Vec::with_capacity(2);
            if idx > 0 {
                seeds.push(solutions[idx - 1].beta.clone());
            }
            if idx + 1 < max_k {
                seeds.push(solutions[idx + 1].beta.clone());
            }
            for seed in seeds {
                match fit_lcs(data, k, &seed, l) {
                    Ok(cand) if improves(cand.objective, solutions[idx].objective, floor) => solutions[idx] = cand,
                    Ok(_) => {}
                    Err(e) => log::debug!("re-seeded fit for k={k} failed: {e}"),
                }
            }
        }
        let next: f64 = solutions.iter().map(|s| s.objective).sum();
        debug_assert!(next <= total, "neighborhood sweep increased the summed objective");
        converged = (total - next).abs() <= IMPROVEMENT_TOL * total.abs() + floor;
        total = next;
    }
    Ok(NeighborhoodOutcome { solutions, sweeps, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classic::fit_lad;
    use crate::l0::fit_iht;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{StandardNormal, Uniform};

    fn contaminated(n: usize, shifts: &[(usize, f64)], seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Uniform::new(-1.0, 1.0).unwrap();
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let x: f64 = rng.sample(StandardNormal);
            let shift = shifts.iter().find(|s| s.0 == i).map_or(0.0, |s| s.1);
            rows.push(vec![x]);
            y.push(0.5 + x + rng.sample(noise) + shift);
        }
        Dataset::new(y, &rows, true).unwrap()
    }

    fn brute_force(data: &Dataset, k: usize) -> SparsitySolution {
        fn rec(data: &Dataset, k: usize, start: usize, cur: &mut Vec<usize>, best: &mut Option<SparsitySolution>) {
            if cur.len() == k {
                if let Ok(s) = SparsitySolution::from_outliers(data, k, cur.clone()) {
                    if best.as_ref().is_none_or(|b| s.objective < b.objective) {
                        *best = Some(s);
                    }
                }
                return;
            }
            for i in start..data.n() {
                cur.push(i);
                rec(data, k, i + 1, cur, best);
                cur.pop();
            }
        }
        let mut best = None;
        rec(data, k, 0, &mut Vec::new(), &mut best);
        best.unwrap()
    }

    #[test]
    fn lcs_dominates_iht_and_certifies() {
        for seed in 0..10 {
            let data = contaminated(20, &[(2, 4.0), (7, -3.0), (11, 3.5)], seed);
            let beta0 = CoefVector::zeros(2);
            let iht = fit_iht(&data, 3, &beta0, IHT_MAX_ITER).unwrap();
            for l in [1, 2] {
                let out = fit_lcs_detailed(&data, 3, &beta0, l).unwrap();
                assert!(out.inescapable);
                assert_eq!(out.iht_objective, iht.objective);
                assert!(out.solution.objective <= iht.objective);
                assert!(!local_swap_search(&data, &out.solution, l).unwrap().improved);
            }
            let l1 = fit_lcs(&data, 3, &beta0, 1).unwrap();
            let l2 = fit_lcs(&data, 3, &beta0, 2).unwrap();
            assert!(l2.objective <= l1.objective);
        }
    }

    #[test]
    fn clean_data_matches_iht() {
        let rows: Vec<Vec<f64>> = (0..15).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 1.0 + 2.0 * r[0]).collect();
        let data = Dataset::new(y, &rows, true).unwrap();
        let beta0 = CoefVector::zeros(2);
        let iht = fit_iht(&data, 2, &beta0, IHT_MAX_ITER).unwrap();
        let lcs = fit_lcs(&data, 2, &beta0, 2).unwrap();
        assert_eq!(lcs, iht);
    }

    #[test]
    fn lcs_reaches_global_optimum_on_small_instances() {
        for seed in 0..5 {
            let data = contaminated(14, &[(0, 5.0), (5, -4.0)], 100 + seed);
            let beta0 = fit_lad(&data).unwrap().beta;
            let lcs = fit_lcs(&data, 2, &beta0, 2).unwrap();
            // exchanges of order 2 reach every support of size 2
            assert!((lcs.objective - brute_force(&data, 2).objective).abs() <= 1e-10 * (1.0 + lcs.objective));
        }
    }

    #[test]
    fn neighborhood_objective_is_monotone_in_k() {
        let data = contaminated(40, &[(1, 6.0), (9, -5.0), (30, 4.0)], 3);
        let out = neighborhood_search(&data, &CoefVector::zeros(2), 8, 1).unwrap();
        assert_eq!(out.solutions.len(), 8);
        for (i, s) in out.solutions.iter().enumerate() {
            assert_eq!(s.k, i + 1);
        }
        for w in out.solutions.windows(2) {
            assert!(w[1].objective <= w[0].objective);
        }
        assert!(out.converged);
    }

    #[test]
    fn single_budget_is_plain_lcs() {
        let data = contaminated(20, &[(4, 8.0)], 9);
        let beta0 = CoefVector::zeros(2);
        let out = neighborhood_search(&data, &beta0, 1, 1).unwrap();
        assert_eq!(out.solutions, vec![fit_lcs(&data, 1, &beta0, 1).unwrap()]);
        assert_eq!(out.sweeps, 0);
    }

    #[test]
    fn planted_outliers_recovered_by_neighborhood_search() {
        let planted = [(3, 9.0), (17, -8.0), (33, 10.0), (51, -9.5)];
        let data = contaminated(60, &planted, 21);
        let beta0 = fit_lad(&data).unwrap().beta;
        let out = neighborhood_search(&data, &beta0, 8, 1).unwrap();
        assert_eq!(out.for_k(4).unwrap().outliers, vec![3, 17, 33, 51]);
    }

    #[test]
    fn rejects_bad_budgets() {
        let data = contaminated(10, &[], 1);
        assert!(neighborhood_search(&data, &CoefVector::zeros(2), 6, 1).is_err());
        assert!(neighborhood_search(&data, &CoefVector::zeros(2), 0, 1).is_err());
        assert!(fit_lcs(&data, 1, &CoefVector::zeros(2), 3).is_err());
    }
}
