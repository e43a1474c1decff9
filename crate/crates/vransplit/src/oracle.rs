//! Exact solvers for optimality-gap measurement.
//!
//! [`solve_exhaustive`] enumerates every assignment and is the ground truth
//! on small instances. [`solve_bnb`] is a depth-first branch-and-bound whose
//! lower bound sums each undecided DU's cheapest individually-feasible
//! option, ignoring the coupled CU and link capacity constraints; that bound
//! never exceeds the true completion cost, so the search is exact.

use crate::model::{evaluate, Assignment, Instance, SplitOption, ALL_SPLITS};
use crate::{Error, Result};

pub const EXHAUSTIVE_MAX_DUS: usize = 12;
pub const BNB_DEFAULT_MAX_DUS: usize = 200;

/// Cost equality slack for tie handling; well above f64 noise on sums,
/// far below any real cost difference.
const TIE_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum OracleOutcome {
    Optimal { assignment: Assignment, cost: f64 },
    Infeasible,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub outcome: OracleOutcome,
    pub nodes_explored: u64,
}

impl OracleResult {
    pub fn optimal_cost(&self) -> Option<f64> {
        match &self.outcome {
            OracleOutcome::Optimal { cost, .. } => Some(*cost),
            OracleOutcome::Infeasible => None,
        }
    }

    pub fn status_str(&self) -> &'static str {
        match self.outcome {
            OracleOutcome::Optimal { .. } => "Optimal",
            OracleOutcome::Infeasible => "Infeasible",
        }
    }
}

/// Enumerate all 4^N assignments in lexicographic order and keep the
/// feasible minimum; the first of exactly equal costs wins, which is the
/// lexicographically smallest.
pub fn solve_exhaustive(instance: &Instance) -> Result<OracleResult> {
    let n = instance.n_dus();
    if n > EXHAUSTIVE_MAX_DUS {
        return Err(Error::Size(format!(
            "exhaustive search limited to {} DUs, instance has {}",
            EXHAUSTIVE_MAX_DUS, n
        )));
    }

    let mut indices = vec![0usize; n];
    let mut nodes = 0u64;
    let mut best: Option<(f64, Assignment)> = None;
    loop {
        nodes += 1;
        let assignment = Assignment::new(
            indices
                .iter()
                .map(|i| SplitOption::from_index(*i).unwrap())
                .collect(),
        );
        let report = instance.evaluate(&assignment)?;
        if report.is_feasible() && best.as_ref().map_or(true, |(c, _)| report.total < *c) {
            best = Some((report.total, assignment));
        }

        // Odometer increment, last DU fastest.
        let mut pos = n;
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            indices[pos] += 1;
            if indices[pos] < 4 {
                break;
            }
            indices[pos] = 0;
        }
        if indices.iter().all(|i| *i == 0) {
            break;
        }
    }

    Ok(OracleResult {
        outcome: match best {
            Some((cost, assignment)) => OracleOutcome::Optimal { assignment, cost },
            None => OracleOutcome::Infeasible,
        },
        nodes_explored: nodes,
    })
}

/// Depth-first branch-and-bound. DUs are branched in descending traffic
/// order, options in ascending individually-feasible cost; ties between
/// equal-cost optima resolve to the lexicographically smallest split
/// sequence.
pub fn solve_bnb(instance: &Instance) -> Result<OracleResult> {
    solve_bnb_with_limit(instance, BNB_DEFAULT_MAX_DUS)
}

pub fn solve_bnb_with_limit(instance: &Instance, max_dus: usize) -> Result<OracleResult> {
    let n = instance.n_dus();
    if n > max_dus {
        return Err(Error::Size(format!(
            "branch-and-bound limited to {} DUs, instance has {}",
            max_dus, n
        )));
    }

    // Per-DU cost table; the objective decomposes as a sum of these.
    let cost: Vec<[f64; 4]> = instance
        .profiles
        .iter()
        .map(|p| {
            let mut row = [0.0; 4];
            for (o, split) in ALL_SPLITS.iter().enumerate() {
                row[o] = crate::model::du_cost(p, *split)
                    + crate::model::routing_cost(p, *split)
                    + crate::model::cu_cost_share(p, *split, &instance.system);
            }
            row
        })
        .collect();

    // Candidates that pass the separable DU-capacity and delay constraints,
    // cheapest first, index ties resolved toward the smaller split id.
    let mut candidates: Vec<Vec<usize>> = Vec::with_capacity(n);
    for p in &instance.profiles {
        let mut opts: Vec<usize> = ALL_SPLITS
            .iter()
            .enumerate()
            .filter(|(_, s)| {
                p.lambda_mbps * s.rho_du() <= p.du_capacity
                    && p.route_delay_us <= s.delay_bound_us()
            })
            .map(|(o, _)| o)
            .collect();
        if opts.is_empty() {
            return Ok(OracleResult {
                outcome: OracleOutcome::Infeasible,
                nodes_explored: 0,
            });
        }
        let du = candidates.len();
        opts.sort_by(|a, b| {
            cost[du][*a]
                .partial_cmp(&cost[du][*b])
                .unwrap()
                .then(a.cmp(b))
        });
        candidates.push(opts);
    }

    // Branch order: descending traffic, ties toward the smaller DU index.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| {
        instance.profiles[*b]
            .lambda_mbps
            .partial_cmp(&instance.profiles[*a].lambda_mbps)
            .unwrap()
            .then(a.cmp(b))
    });

    // suffix_min[k] = cheapest completion of positions k.. ignoring coupling.
    let mut suffix_min = vec![0.0; n + 1];
    for k in (0..n).rev() {
        let du = order[k];
        suffix_min[k] = suffix_min[k + 1] + cost[du][candidates[du][0]];
    }

    // Every DU pushes at least its cheapest-possible flow through its path,
    // whatever option wins. suffix_min_flow[k][e] sums those floors over the
    // undecided positions k.., letting the search drop subtrees whose link
    // overload can no longer be avoided. Precomputed per depth so repeated
    // add/undo cannot accumulate float drift.
    let n_links = instance.topology.links.len();
    let min_flow: Vec<f64> = (0..n)
        .map(|du| {
            let p = &instance.profiles[du];
            candidates[du]
                .iter()
                .map(|o| crate::model::flow_of(ALL_SPLITS[*o], p.lambda_mbps))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut suffix_min_flow = vec![vec![0.0; n_links]; n + 1];
    for k in (0..n).rev() {
        let du = order[k];
        let row = suffix_min_flow[k + 1].clone();
        suffix_min_flow[k] = row;
        for li in &instance.topology.path_of(instance.profiles[du].du_id).links {
            suffix_min_flow[k][*li] += min_flow[du];
        }
    }
    for (li, link) in instance.topology.links.iter().enumerate() {
        if suffix_min_flow[0][li] > link.capacity_mbps {
            return Ok(OracleResult {
                outcome: OracleOutcome::Infeasible,
                nodes_explored: 0,
            });
        }
    }

    let mut search = BnbSearch {
        instance,
        cost: &cost,
        candidates: &candidates,
        order: &order,
        suffix_min: &suffix_min,
        suffix_min_flow: &suffix_min_flow,
        link_load: vec![0.0; n_links],
        cu_load: 0.0,
        current: vec![0usize; n],
        best: None,
        nodes: 0,
    };
    search.dfs(0, 0.0);

    let (best_splits, nodes) = (search.best, search.nodes);
    match best_splits {
        Some((splits, _)) => {
            let assignment = Assignment::new(
                splits
                    .iter()
                    .map(|o| SplitOption::from_index(*o).unwrap())
                    .collect(),
            );
            let report = evaluate(
                &assignment,
                &instance.profiles,
                &instance.system,
                &instance.topology,
            )?;
            debug_assert!(report.is_feasible());
            Ok(OracleResult {
                outcome: OracleOutcome::Optimal {
                    assignment,
                    cost: report.total,
                },
                nodes_explored: nodes,
            })
        }
        None => Ok(OracleResult {
            outcome: OracleOutcome::Infeasible,
            nodes_explored: nodes,
        }),
    }
}

struct BnbSearch<'a> {
    instance: &'a Instance,
    cost: &'a [[f64; 4]],
    candidates: &'a [Vec<usize>],
    order: &'a [usize],
    suffix_min: &'a [f64],
    suffix_min_flow: &'a [Vec<f64>],
    link_load: Vec<f64>,
    cu_load: f64,
    current: Vec<usize>,
    /// (splits in DU order, canonical cost)
    best: Option<(Vec<usize>, f64)>,
    nodes: u64,
}

impl BnbSearch<'_> {
    fn dfs(&mut self, depth: usize, acc: f64) {
        self.nodes += 1;
        if let Some((_, best_cost)) = &self.best {
            // Keep equal-bound branches alive so exact ties can still be
            // compared lexicographically.
            if acc + self.suffix_min[depth] > best_cost + TIE_EPS {
                return;
            }
        }
        if depth == self.order.len() {
            self.offer_leaf();
            return;
        }

        let du = self.order[depth];
        let profile = &self.instance.profiles[du];
        let path = self.instance.topology.path_of(profile.du_id);
        for &o in &self.candidates[du] {
            let split = SplitOption::from_index(o).unwrap();
            let new_cu = self.cu_load + profile.lambda_mbps * split.rho_cu();
            if new_cu > self.instance.system.cu_capacity {
                continue;
            }
            let flow = crate::model::flow_of(split, profile.lambda_mbps);
            // Decided load, this option's flow, and the undecided DUs' flow
            // floors must all fit; otherwise the whole subtree is doomed.
            let overloads = path.links.iter().any(|li| {
                self.link_load[*li] + flow + self.suffix_min_flow[depth + 1][*li]
                    > self.instance.topology.links[*li].capacity_mbps
            });
            if overloads {
                continue;
            }

            self.cu_load = new_cu;
            for li in &path.links {
                self.link_load[*li] += flow;
            }
            self.current[du] = o;
            self.dfs(depth + 1, acc + self.cost[du][o]);
            for li in &path.links {
                self.link_load[*li] -= flow;
            }
            self.cu_load -= profile.lambda_mbps * split.rho_cu();
        }
    }

    fn offer_leaf(&mut self) {
        // Canonical cost in DU index order, bit-stable across branch orders.
        let cost: f64 = self
            .current
            .iter()
            .enumerate()
            .map(|(du, o)| self.cost[du][*o])
            .sum();
        match &mut self.best {
            None => self.best = Some((self.current.clone(), cost)),
            Some((splits, best_cost)) => {
                if cost < *best_cost - TIE_EPS
                    || ((cost - *best_cost).abs() <= TIE_EPS && self.current < *splits)
                {
                    *splits = self.current.clone();
                    *best_cost = cost.min(*best_cost);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_instance, BsProfile, PenaltyWeights, ScenarioConfig, SystemParams};
    use crate::topology::{generate_waxman, Link, Node, NodeKind, RoutePath, Topology, WaxmanConfig};

    fn star_topology(n_dus: usize, delays_us: &[f64], costs: &[f64], capacity: f64) -> Topology {
        let mut nodes = vec![Node { id: 0, kind: NodeKind::Cu, x: 0.5, y: 0.5 }];
        let mut links = Vec::new();
        let mut paths = Vec::new();
        for i in 0..n_dus {
            nodes.push(Node {
                id: i + 1,
                kind: NodeKind::Du,
                x: 0.1,
                y: 0.1,
            });
            links.push(Link {
                a: 0,
                b: i + 1,
                capacity_mbps: capacity,
                delay_us: delays_us[i],
                unit_cost_per_mbps: costs[i],
            });
            paths.push(RoutePath {
                du_id: i + 1,
                links: vec![i],
                total_delay_us: delays_us[i],
                total_cost_per_mbps: costs[i],
            });
        }
        Topology {
            schema_version: 1,
            seed: 0,
            nodes,
            links,
            paths,
        }
    }

    fn star_instance(
        delays_us: &[f64],
        costs: &[f64],
        capacity: f64,
        system: SystemParams,
    ) -> Instance {
        let topo = star_topology(delays_us.len(), delays_us, costs, capacity);
        let profiles = topo
            .paths
            .iter()
            .map(|p| BsProfile {
                du_id: p.du_id,
                lambda_mbps: 150.0,
                vm_cost: 1.0,
                compute_cost: 1.0,
                du_capacity: 7.5,
                route_delay_us: p.total_delay_us,
                route_cost_per_mbps: p.total_cost_per_mbps,
            })
            .collect();
        Instance {
            topology: topo,
            profiles,
            system,
        }
    }

    fn default_system() -> SystemParams {
        SystemParams {
            cu_capacity: 75.0,
            vm_cost_cu: 0.5,
            compute_cost_cu: 0.017,
            penalty: PenaltyWeights::uniform(100.0),
        }
    }

    #[test]
    fn forced_choice_single_du() {
        // Long delay rules out S2/S3; an expensive CU makes S0 beat S1.
        let mut system = default_system();
        system.compute_cost_cu = 20.0;
        let inst = star_instance(&[25_000.0], &[0.0], 1e6, system);
        let result = solve_exhaustive(&inst).unwrap();
        match &result.outcome {
            OracleOutcome::Optimal { assignment, .. } => {
                assert_eq!(assignment.splits, vec![SplitOption::S0]);
            }
            _ => panic!("expected Optimal"),
        }
        let bnb = solve_bnb(&inst).unwrap();
        assert_eq!(bnb.outcome, result.outcome);
    }

    #[test]
    fn decoupled_instance_matches_per_du_minimum() {
        // Zero routing cost and huge capacities: each DU independently picks
        // the split minimizing its compute plus CU share.
        let inst = star_instance(&[100.0, 25_000.0], &[0.0, 0.0], 1e9, default_system());
        let result = solve_bnb(&inst).unwrap();
        let (assignment, cost) = match result.outcome {
            OracleOutcome::Optimal { assignment, cost } => (assignment, cost),
            _ => panic!("expected Optimal"),
        };
        let mut expected = 0.0;
        for (i, p) in inst.profiles.iter().enumerate() {
            let best = ALL_SPLITS
                .iter()
                .filter(|s| {
                    p.route_delay_us <= s.delay_bound_us()
                        && p.lambda_mbps * s.rho_du() <= p.du_capacity
                })
                .min_by(|a, b| {
                    let ca = crate::model::du_cost(p, **a)
                        + crate::model::cu_cost_share(p, **a, &inst.system);
                    let cb = crate::model::du_cost(p, **b)
                        + crate::model::cu_cost_share(p, **b, &inst.system);
                    ca.partial_cmp(&cb).unwrap()
                })
                .copied()
                .unwrap();
            assert_eq!(assignment.splits[i], best, "DU {}", i);
            expected += crate::model::du_cost(p, best)
                + crate::model::cu_cost_share(p, best, &inst.system);
        }
        assert!((cost - expected).abs() < 1e-9);
    }

    #[test]
    fn infeasible_when_no_option_fits() {
        // Delay beyond even S0's 30 ms bound.
        let inst = star_instance(&[40_000.0], &[0.0], 1e6, default_system());
        let result = solve_bnb(&inst).unwrap();
        assert_eq!(result.outcome, OracleOutcome::Infeasible);
        let ex = solve_exhaustive(&inst).unwrap();
        assert_eq!(ex.outcome, OracleOutcome::Infeasible);
    }

    #[test]
    fn equal_cost_tie_resolves_to_lexicographic_smallest() {
        // Two idle DUs behind long delays: S0 and S1 price identically, so
        // (S0, S0) must win in both solvers.
        let mut inst = star_instance(&[25_000.0, 25_000.0], &[0.0, 0.0], 1e6, default_system());
        for p in &mut inst.profiles {
            p.lambda_mbps = 0.0;
        }
        for r in [solve_exhaustive(&inst).unwrap(), solve_bnb(&inst).unwrap()] {
            match r.outcome {
                OracleOutcome::Optimal { assignment, .. } => {
                    assert_eq!(assignment.splits, vec![SplitOption::S0, SplitOption::S0]);
                }
                _ => panic!("expected Optimal"),
            }
        }
    }

    fn random_instance(seed: u64, n_nodes: usize) -> Instance {
        let mut topo = generate_waxman(
            &WaxmanConfig {
                n_nodes,
                capacity_range_mbps: (800.0, 20_000.0),
                ..WaxmanConfig::default()
            },
            seed,
        )
        .unwrap();
        topo.rescale_max_path_delay(3_658.61);
        build_instance(topo, &ScenarioConfig::default()).unwrap()
    }

    #[test]
    fn bnb_matches_exhaustive_on_random_instances() {
        for seed in 0..100 {
            let inst = random_instance(1_000 + seed, 9);
            let ex = solve_exhaustive(&inst).unwrap();
            let bb = solve_bnb(&inst).unwrap();
            match (&ex.outcome, &bb.outcome) {
                (
                    OracleOutcome::Optimal { cost: ce, .. },
                    OracleOutcome::Optimal { cost: cb, .. },
                ) => {
                    assert!(
                        (ce - cb).abs() <= 1e-9 * ce.abs().max(1.0),
                        "seed {seed}: exhaustive {ce} vs bnb {cb}"
                    );
                }
                (OracleOutcome::Infeasible, OracleOutcome::Infeasible) => {}
                other => panic!("seed {seed}: status mismatch {other:?}"),
            }
        }
    }

    #[test]
    fn optimal_assignment_is_feasible() {
        for seed in 0..10 {
            let inst = random_instance(2_000 + seed, 10);
            if let OracleOutcome::Optimal { assignment, cost } =
                solve_bnb(&inst).unwrap().outcome
            {
                let report = inst.evaluate(&assignment).unwrap();
                assert!(report.is_feasible());
                assert_eq!(report.total, cost);
            }
        }
    }

    #[test]
    fn bnb_is_deterministic() {
        let inst = random_instance(77, 10);
        let a = solve_bnb(&inst).unwrap();
        let b = solve_bnb(&inst).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn size_limits_are_enforced() {
        let inst = random_instance(5, 15);
        assert!(matches!(solve_exhaustive(&inst), Err(Error::Size(_))));
        assert!(matches!(solve_bnb_with_limit(&inst, 10), Err(Error::Size(_))));
    }

    #[test]
    fn r1_scale_instance_terminates() {
        // Paper-scale parameters: 100 nodes, capacities up to 100 Gbps.
        let mut topo = generate_waxman(&WaxmanConfig::default(), 4242).unwrap();
        topo.rescale_max_path_delay(3_658.61);
        let inst = build_instance(topo, &ScenarioConfig::default()).unwrap();
        let result = solve_bnb(&inst).unwrap();
        match result.outcome {
            OracleOutcome::Optimal { assignment, .. } => {
                assert!(inst.evaluate(&assignment).unwrap().is_feasible());
            }
            OracleOutcome::Infeasible => panic!("R1-scale instance should be feasible"),
        }
    }
}
