//! Exact daily pickup selection.
//!
//! Given a visit cost and an available supply for each pickup unit, choose
//! the cheapest set of units whose combined supply covers the day's demand.
//! This is a covering knapsack; it is solved by depth-first branch and bound
//! using the fractional relaxation as the lower bound.
//!
//! Among cost-optimal selections the result is unique: fewer units win, then
//! the lexicographically smallest ascending index list. Total cost is always
//! summed in index order so that two routes to the same set agree bitwise.

use std::cmp::Ordering;
use std::fmt::Write as _;

use crate::error::SolverError;

/// Supply may fall short of demand by this many lbs and still count as met.
pub const DEMAND_SLACK: f64 = 1e-6;

/// Search nodes explored before the incumbent is returned unproven.
pub const DEFAULT_NODE_BUDGET: u64 = 10_000_000;

/// Largest instance [`brute_force_solve`] accepts.
pub const BRUTE_FORCE_MAX_UNITS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct PickupProblem {
    pub costs: Vec<f64>,
    pub supplies: Vec<f64>,
    pub demand: f64,
}

impl PickupProblem {
    pub fn new(costs: Vec<f64>, supplies: Vec<f64>, demand: f64) -> Result<Self, SolverError> {
        let p = Self {
            costs,
            supplies,
            demand,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if self.costs.len() != self.supplies.len() {
            return Err(SolverError::LengthMismatch {
                costs: self.costs.len(),
                supplies: self.supplies.len(),
            });
        }
        for (what, values) in [("cost", &self.costs), ("supply", &self.supplies)] {
            if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
                return Err(SolverError::InvalidValue { what, index, value });
            }
        }
        if !(self.demand.is_finite() && self.demand >= 0.0) {
            return Err(SolverError::InvalidDemand(self.demand));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    fn covers(&self, supply: f64) -> bool {
        supply >= self.demand - DEMAND_SLACK
    }

    fn schedule(&self, chosen: &[usize], optimal: bool) -> Schedule {
        let mut selected = vec![false; self.len()];
        for &i in chosen {
            selected[i] = true;
        }
        Schedule::from_selection(self, selected, optimal)
    }

    /// Solver-neutral text form: objective row, covering constraint, binary
    /// declarations.
    pub fn to_lp(&self) -> String {
        let row = |coef: &[f64]| {
            if coef.is_empty() {
                return "0".to_string();
            }
            coef.iter()
                .enumerate()
                .map(|(i, c)| format!("{c}x{i}"))
                .collect::<Vec<_>>()
                .join(" + ")
        };
        let mut out = String::new();
        let _ = writeln!(out, "min: {};", row(&self.costs));
        let _ = writeln!(out, "c1: {} >= {};", row(&self.supplies), self.demand);
        let vars: Vec<String> = (0..self.len()).map(|i| format!("x{i}")).collect();
        let _ = writeln!(out, "bin {};", vars.join(" "));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub selected: Vec<bool>,
    pub total_cost: f64,
    pub total_supply: f64,
    /// Selected supply covers demand (within [`DEMAND_SLACK`]).
    pub feasible: bool,
    /// The search finished within its node budget.
    pub optimal: bool,
}

impl Schedule {
    fn from_selection(p: &PickupProblem, selected: Vec<bool>, optimal: bool) -> Self {
        let (mut cost, mut supply) = (0.0, 0.0);
        for (i, _) in selected.iter().enumerate().filter(|(_, s)| **s) {
            cost += p.costs[i];
            supply += p.supplies[i];
        }
        Self {
            feasible: p.covers(supply),
            selected,
            total_cost: cost,
            total_supply: supply,
            optimal,
        }
    }

    pub fn selected_indices(&self) -> Vec<usize> {
        self.selected
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.then_some(i))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.selected.iter().filter(|s| **s).count()
    }
}

fn index_order_cost(costs: &[f64], chosen_sorted: &[usize]) -> f64 {
    chosen_sorted.iter().fold(0.0, |acc, &i| acc + costs[i])
}

/// Total order on feasible selections (ascending index lists).
fn compare_selection(costs: &[f64], a: &[usize], b: &[usize]) -> Ordering {
    index_order_cost(costs, a)
        .total_cmp(&index_order_cost(costs, b))
        .then(a.len().cmp(&b.len()))
        .then_with(|| a.cmp(b))
}

/// Minimum-cost selection covering `p.demand`.
///
/// When the supplies cannot cover demand at all, every unit is selected and
/// the schedule is flagged infeasible.
pub fn solve_daily(p: &PickupProblem) -> Schedule {
    solve_with_budget(p, DEFAULT_NODE_BUDGET)
}

pub fn solve_with_budget(p: &PickupProblem, node_budget: u64) -> Schedule {
    if p.covers(0.0) {
        return p.schedule(&[], true);
    }
    let total: f64 = p.supplies.iter().sum();
    if !p.covers(total) {
        let all: Vec<usize> = (0..p.len()).collect();
        return p.schedule(&all, true);
    }

    // Units with nothing to pick up can only add cost.
    let mut order: Vec<usize> = (0..p.len()).filter(|&i| p.supplies[i] > 0.0).collect();
    order.sort_by(|&a, &b| {
        (p.costs[a] / p.supplies[a])
            .total_cmp(&(p.costs[b] / p.supplies[b]))
            .then(a.cmp(&b))
    });

    let mut search = Search {
        problem: p,
        order: &order,
        suffix_supply: suffix_sums(order.iter().map(|&i| p.supplies[i])),
        target: p.demand - DEMAND_SLACK,
        best: None,
        best_cost: f64::INFINITY,
        nodes: 0,
        budget: node_budget,
        exhausted: false,
        chosen: Vec::with_capacity(order.len()),
    };
    // Greedy incumbent, so an exhausted budget still returns a cover.
    let mut supply = 0.0;
    for &i in &order {
        if supply >= search.target {
            break;
        }
        search.chosen.push(i);
        supply += p.supplies[i];
    }
    search.offer();
    search.chosen.clear();
    search.descend(0, 0.0, 0.0);
    let optimal = !search.exhausted;
    let best = search.best.take().expect("greedy incumbent");
    p.schedule(&best, optimal)
}

fn suffix_sums(values: impl DoubleEndedIterator<Item = f64> + ExactSizeIterator) -> Vec<f64> {
    let mut out = vec![0.0; values.len() + 1];
    for (k, v) in values.enumerate().rev() {
        out[k] = out[k + 1] + v;
    }
    out
}

struct Search<'a> {
    problem: &'a PickupProblem,
    order: &'a [usize],
    suffix_supply: Vec<f64>,
    target: f64,
    best: Option<Vec<usize>>,
    best_cost: f64,
    nodes: u64,
    budget: u64,
    exhausted: bool,
    chosen: Vec<usize>,
}

impl Search<'_> {
    /// Cheapest fractional cover of `need` using units `pos..`; `None` when
    /// they cannot cover it.
    fn relaxation(&self, pos: usize, need: f64) -> Option<f64> {
        if self.suffix_supply[pos] < need {
            return None;
        }
        let mut need = need;
        let mut bound = 0.0;
        for &i in &self.order[pos..] {
            let (c, s) = (self.problem.costs[i], self.problem.supplies[i]);
            if s >= need {
                return Some(bound + c * need / s);
            }
            bound += c;
            need -= s;
        }
        Some(bound)
    }

    fn offer(&mut self) {
        let mut cand = self.chosen.clone();
        cand.sort_unstable();
        let better = match &self.best {
            None => true,
            Some(b) => compare_selection(&self.problem.costs, &cand, b) == Ordering::Less,
        };
        if better {
            self.best_cost = index_order_cost(&self.problem.costs, &cand);
            self.best = Some(cand);
        }
    }

    fn descend(&mut self, pos: usize, cost: f64, supply: f64) {
        if supply >= self.target {
            self.offer();
            return;
        }
        if pos == self.order.len() || self.exhausted {
            return;
        }
        let Some(relaxed) = self.relaxation(pos, self.target - supply) else {
            return;
        };
        // Keep near-ties alive so the tie-break sees them.
        if cost + relaxed > self.best_cost + 1e-9 * self.best_cost.max(1.0) {
            return;
        }
        self.nodes += 1;
        if self.nodes > self.budget {
            self.exhausted = true;
            return;
        }
        let unit = self.order[pos];
        self.chosen.push(unit);
        self.descend(
            pos + 1,
            cost + self.problem.costs[unit],
            supply + self.problem.supplies[unit],
        );
        self.chosen.pop();
        self.descend(pos + 1, cost, supply);
    }
}

/// Exhaustive enumeration with the same tie-breaking as [`solve_daily`].
pub fn brute_force_solve(p: &PickupProblem) -> Result<Schedule, SolverError> {
    let n = p.len();
    if n > BRUTE_FORCE_MAX_UNITS {
        return Err(SolverError::TooLarge {
            max: BRUTE_FORCE_MAX_UNITS,
            got: n,
        });
    }
    let mut best: Option<Vec<usize>> = None;
    for mask in 0u32..(1u32 << n) {
        let chosen: Vec<usize> = (0..n).filter(|b| mask >> b & 1 == 1).collect();
        let supply = chosen.iter().fold(0.0, |acc, &i| acc + p.supplies[i]);
        if !p.covers(supply) {
            continue;
        }
        if best
            .as_ref()
            .is_none_or(|b| compare_selection(&p.costs, &chosen, b) == Ordering::Less)
        {
            best = Some(chosen);
        }
    }
    Ok(match best {
        Some(b) => p.schedule(&b, true),
        None => p.schedule(&(0..n).collect::<Vec<_>>(), true),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(costs: &[f64], supplies: &[f64], demand: f64) -> PickupProblem {
        PickupProblem::new(costs.to_vec(), supplies.to_vec(), demand).unwrap()
    }

    #[test]
    fn single_unit() {
        let s = solve_daily(&problem(&[10.0], &[100.0], 50.0));
        assert_eq!(s.selected, vec![true]);
        assert_eq!(s.total_cost, 10.0);
        assert!(s.feasible && s.optimal);
    }

    #[test]
    fn example_program_instance() {
        let p = problem(&[24.39, 56.59, 35.81], &[177.99, 552.06, 12.0], 500.0);
        let s = solve_daily(&p);
        assert_eq!(s.selected_indices(), vec![1]);
        assert_eq!(s.total_cost, 56.59);
        assert_eq!(s, brute_force_solve(&p).unwrap());
    }

    #[test]
    fn infeasible_selects_everything() {
        let s = solve_daily(&problem(&[1.0, 2.0, 3.0], &[30.0, 30.0, 30.0], 100.0));
        assert_eq!(s.selected, vec![true; 3]);
        assert!(!s.feasible);
        assert_eq!(s.total_cost, 6.0);
    }

    #[test]
    fn zero_demand_selects_nothing() {
        let s = solve_daily(&problem(&[1.0, 2.0], &[30.0, 30.0], 0.0));
        assert_eq!(s.selected, vec![false; 2]);
        assert_eq!(s.total_cost, 0.0);
        assert!(s.feasible);
    }

    #[test]
    fn empty_instances() {
        let s = brute_force_solve(&problem(&[], &[], 0.0)).unwrap();
        assert!(s.selected.is_empty() && s.feasible && s.total_cost == 0.0);
        let s = brute_force_solve(&problem(&[], &[], 5.0)).unwrap();
        assert!(!s.feasible);
        assert!(!solve_daily(&problem(&[], &[], 5.0)).feasible);
    }

    #[test]
    fn brute_force_size_limit() {
        let p = problem(&[1.0; 21], &[1.0; 21], 1.0);
        assert_eq!(brute_force_solve(&p), Err(SolverError::TooLarge { max: 20, got: 21 }));
    }

    #[test]
    fn tie_breaks_on_count_then_lexicographic() {
        // {0} and {1,2} both cost 2; fewer units wins.
        let s = solve_daily(&problem(&[2.0, 1.0, 1.0], &[10.0, 5.0, 5.0], 10.0));
        assert_eq!(s.selected_indices(), vec![0]);
        // {0,3} and {1,2} cost 2 with two units each; {0,3} sorts first.
        let p = problem(&[1.0, 1.0, 1.0, 1.0], &[5.0, 5.0, 5.0, 5.0], 10.0);
        assert_eq!(solve_daily(&p).selected_indices(), vec![0, 1]);
        let p = problem(&[1.0, 1.0, 1.0, 1.0], &[4.0, 5.0, 5.0, 6.0], 10.0);
        assert_eq!(solve_daily(&p).selected_indices(), vec![0, 3]);
        assert_eq!(brute_force_solve(&p).unwrap().selected_indices(), vec![0, 3]);
    }

    #[test]
    fn zero_supply_units_never_chosen_when_feasible() {
        let p = problem(&[0.0, 5.0], &[0.0, 10.0], 10.0);
        assert_eq!(solve_daily(&p).selected_indices(), vec![1]);
    }

    #[test]
    fn slack_absorbs_rounding() {
        let p = problem(&[1.0, 1.0], &[0.1, 0.2], 0.3 + 1e-9);
        assert!(solve_daily(&p).feasible);
    }

    #[test]
    fn budget_exhaustion_marks_unproven() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 40;
        let supplies: Vec<f64> = (0..n).map(|_| rng.random_range(50.0..150.0)).collect();
        let costs: Vec<f64> = supplies.iter().map(|s| s * rng.random_range(0.99..1.01)).collect();
        let demand = supplies.iter().sum::<f64>() * 0.5;
        let p = problem(&costs, &supplies, demand);
        let s = solve_with_budget(&p, 10);
        assert!(!s.optimal);
        assert!(s.feasible);
    }

    #[test]
    fn lp_text_form() {
        let p = problem(&[24.39, 56.59], &[177.99, 552.06], 500.0);
        assert_eq!(
            p.to_lp(),
            "min: 24.39x0 + 56.59x1;\nc1: 177.99x0 + 552.06x1 >= 500;\nbin x0 x1;\n"
        );
    }

    #[test]
    fn invalid_problems() {
        assert!(PickupProblem::new(vec![1.0], vec![], 1.0).is_err());
        assert!(PickupProblem::new(vec![-1.0], vec![1.0], 1.0).is_err());
        assert!(PickupProblem::new(vec![1.0], vec![f64::NAN], 1.0).is_err());
        assert!(PickupProblem::new(vec![1.0], vec![1.0], -1.0).is_err());
    }

    fn instance() -> impl Strategy<Value = PickupProblem> {
        (1usize..=12)
            .prop_flat_map(|n| {
                (
                    proptest::collection::vec(0.0f64..100.0, n),
                    proptest::collection::vec(0.0f64..100.0, n),
                    0.0f64..1.2,
                )
            })
            .prop_map(|(costs, supplies, frac)| {
                let demand = supplies.iter().sum::<f64>() * frac;
                PickupProblem::new(costs, supplies, demand).unwrap()
            })
    }

    proptest! {
        #[test]
        fn matches_brute_force(p in instance()) {
            let fast = solve_daily(&p);
            let slow = brute_force_solve(&p).unwrap();
            prop_assert_eq!(fast.selected, slow.selected);
            prop_assert_eq!(fast.total_cost.to_bits(), slow.total_cost.to_bits());
            prop_assert_eq!(fast.feasible, slow.feasible);
        }

        #[test]
        fn cost_non_decreasing_in_demand(p in instance()) {
            let total: f64 = p.supplies.iter().sum();
            let mut last = 0.0;
            for step in 0..=12 {
                let q = PickupProblem { demand: total * step as f64 / 10.0, ..p.clone() };
                let s = solve_daily(&q);
                if !s.feasible { break; }
                prop_assert!(s.total_cost >= last - 1e-9);
                last = s.total_cost;
            }
        }

        #[test]
        fn cost_scaling_keeps_selection(p in instance(), lambda in 0.1f64..10.0) {
            let base = solve_daily(&p);
            let scaled = PickupProblem { costs: p.costs.iter().map(|c| c * lambda).collect(), ..p.clone() };
            let s = solve_daily(&scaled);
            prop_assert_eq!(&s.selected, &base.selected);
            prop_assert!((s.total_cost - lambda * base.total_cost).abs() <= 1e-9 * (1.0 + s.total_cost));
        }

        #[test]
        fn adding_units_never_hurts(p in instance(), cost in 0.0f64..100.0, supply in 0.0f64..100.0) {
            let base = solve_daily(&p);
            prop_assume!(base.feasible);
            let mut bigger = p.clone();
            bigger.costs.push(cost);
            bigger.supplies.push(supply);
            prop_assert!(solve_daily(&bigger).total_cost <= base.total_cost + 1e-9);
            let mut free = p.clone();
            free.costs.push(0.0);
            free.supplies.push(supply.max(1.0));
            prop_assert!(solve_daily(&free).total_cost <= base.total_cost + 1e-9);
        }
    }
}
