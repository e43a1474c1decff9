//! Split options, cost evaluation, and constraint accounting.
//!
//! An [`Assignment`] picks one split per DU. [`evaluate`] prices it (DU
//! compute, CU compute, routing) and measures constraint violations as
//! normalized nonnegative overshoots, so the penalty weights are
//! dimensionless. The penalized total `L = J + xi` is what learning
//! minimizes; `J` alone is the network cost.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::topology::Topology;
use crate::{Error, Result};

/// Functional split options, increasingly centralized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SplitOption {
    S0,
    S1,
    S2,
    S3,
}

pub const ALL_SPLITS: [SplitOption; 4] = [
    SplitOption::S0,
    SplitOption::S1,
    SplitOption::S2,
    SplitOption::S3,
];

/// DU-side processing load per split, reference cores per Mbps.
pub const RHO_DU: [f64; 4] = [0.05, 0.04, 0.00325, 0.0];
/// CU-side processing load per split, reference cores per Mbps.
pub const RHO_CU: [f64; 4] = [0.0, 0.001, 0.00175, 0.05];
/// Delay bound per split in microseconds (30 ms, 30 ms, 2 ms, 0.25 ms).
pub const DELAY_BOUND_US: [f64; 4] = [30_000.0, 30_000.0, 2_000.0, 250.0];

impl SplitOption {
    pub fn index(self) -> usize {
        match self {
            SplitOption::S0 => 0,
            SplitOption::S1 => 1,
            SplitOption::S2 => 2,
            SplitOption::S3 => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<SplitOption> {
        ALL_SPLITS.get(i).copied()
    }

    pub fn rho_du(self) -> f64 {
        RHO_DU[self.index()]
    }

    pub fn rho_cu(self) -> f64 {
        RHO_CU[self.index()]
    }

    pub fn delay_bound_us(self) -> f64 {
        DELAY_BOUND_US[self.index()]
    }
}

impl std::fmt::Display for SplitOption {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "S{}", self.index())
    }
}

/// Crosshaul flow created by a DU under a split, in Mbps.
pub fn flow_of(split: SplitOption, lambda_mbps: f64) -> f64 {
    debug_assert!(lambda_mbps >= 0.0);
    match split {
        SplitOption::S0 | SplitOption::S1 => lambda_mbps,
        SplitOption::S2 => 1.02 * lambda_mbps + 1.5,
        SplitOption::S3 => 2_500.0,
    }
}

/// Per-DU parameters; path delay and routing cost are copied in from the
/// topology so a profile prices everything but shared-link capacity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsProfile {
    pub du_id: usize,
    pub lambda_mbps: f64,
    /// VM instantiation cost at the DU (alpha_n).
    pub vm_cost: f64,
    /// Compute cost per reference core at the DU (beta_n).
    pub compute_cost: f64,
    /// DU processing capacity in reference cores (H_n).
    pub du_capacity: f64,
    pub route_delay_us: f64,
    pub route_cost_per_mbps: f64,
}

/// CU-side parameters and penalty weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// CU processing capacity in reference cores (H_0).
    pub cu_capacity: f64,
    /// VM instantiation cost at the CU (alpha_0).
    pub vm_cost_cu: f64,
    /// Compute cost per reference core at the CU (beta_0).
    pub compute_cost_cu: f64,
    pub penalty: PenaltyWeights,
}

/// One nonnegative weight per constraint family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyWeights {
    pub cu_capacity: f64,
    pub du_capacity: f64,
    pub link_capacity: f64,
    pub delay: f64,
}

impl PenaltyWeights {
    pub fn zero() -> Self {
        PenaltyWeights {
            cu_capacity: 0.0,
            du_capacity: 0.0,
            link_capacity: 0.0,
            delay: 0.0,
        }
    }

    pub fn uniform(w: f64) -> Self {
        PenaltyWeights {
            cu_capacity: w,
            du_capacity: w,
            link_capacity: w,
            delay: w,
        }
    }
}

/// One split choice per DU, aligned with the profile order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    pub splits: Vec<SplitOption>,
}

impl Assignment {
    pub fn new(splits: Vec<SplitOption>) -> Self {
        Assignment { splits }
    }

    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }
}

/// Fully decentralized reference: every DU on split 0.
pub fn dran_assignment(n: usize) -> Assignment {
    Assignment::new(vec![SplitOption::S0; n])
}

/// Fully centralized reference: every DU on split 3.
pub fn cran_assignment(n: usize) -> Assignment {
    Assignment::new(vec![SplitOption::S3; n])
}

/// Normalized nonnegative constraint overshoots, one entry per family.
/// Zero everywhere exactly when the assignment is feasible.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violations {
    pub cu_capacity: f64,
    pub du_capacity: f64,
    pub link_capacity: f64,
    pub delay: f64,
}

impl Violations {
    pub fn is_zero(&self) -> bool {
        self.cu_capacity == 0.0
            && self.du_capacity == 0.0
            && self.link_capacity == 0.0
            && self.delay == 0.0
    }

    pub fn weighted(&self, w: &PenaltyWeights) -> f64 {
        w.cu_capacity * self.cu_capacity
            + w.du_capacity * self.du_capacity
            + w.link_capacity * self.link_capacity
            + w.delay * self.delay
    }
}

/// Priced assignment: per-DU costs, totals, violations, penalized total.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    /// Compute cost per DU (V_n).
    pub du_compute: Vec<f64>,
    /// CU compute cost (V_0).
    pub cu_compute: f64,
    /// Routing cost per DU (U_n0).
    pub routing: Vec<f64>,
    /// Total network cost (J).
    pub total: f64,
    pub violations: Violations,
    /// Weighted penalty (xi).
    pub penalty: f64,
    /// Penalized total (L = J + xi).
    pub penalized_total: f64,
}

impl CostReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_zero()
    }

    /// One CSV row per DU plus a TOTAL row carrying the aggregates.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "du_row,compute_cost,routing_cost,cu_compute,total_j,penalty,penalized_total,\
             viol_cu,viol_du,viol_link,viol_delay\n",
        );
        for (i, (v, u)) in self.du_compute.iter().zip(&self.routing).enumerate() {
            out.push_str(&format!("{},{},{},,,,,,,,\n", i, v, u));
        }
        out.push_str(&format!(
            "TOTAL,{},{},{},{},{},{},{},{},{},{}\n",
            self.du_compute.iter().sum::<f64>(),
            self.routing.iter().sum::<f64>(),
            self.cu_compute,
            self.total,
            self.penalty,
            self.penalized_total,
            self.violations.cu_capacity,
            self.violations.du_capacity,
            self.violations.link_capacity,
            self.violations.delay,
        ));
        out
    }
}

/// Compute cost of one DU under a split (alpha_n + beta_n lambda_n rho^d).
pub fn du_cost(profile: &BsProfile, split: SplitOption) -> f64 {
    profile.vm_cost + profile.compute_cost * profile.lambda_mbps * split.rho_du()
}

/// CU compute cost of a whole assignment (sum of alpha_0 + lambda beta_0 rho^c).
pub fn cu_cost(assignment: &Assignment, profiles: &[BsProfile], params: &SystemParams) -> f64 {
    assignment
        .splits
        .iter()
        .zip(profiles)
        .map(|(split, p)| cu_cost_share(p, *split, params))
        .sum()
}

/// One DU's contribution to the CU compute cost.
pub fn cu_cost_share(profile: &BsProfile, split: SplitOption, params: &SystemParams) -> f64 {
    params.vm_cost_cu + profile.lambda_mbps * params.compute_cost_cu * split.rho_cu()
}

/// Routing cost of one DU's flow along its path.
pub fn routing_cost(profile: &BsProfile, split: SplitOption) -> f64 {
    profile.route_cost_per_mbps * flow_of(split, profile.lambda_mbps)
}

/// Price an assignment and measure its constraint violations.
///
/// Overshoots are normalized by their bound (capacity or delay limit) before
/// weighting. Pure: identical inputs give bit-identical reports.
pub fn evaluate(
    assignment: &Assignment,
    profiles: &[BsProfile],
    params: &SystemParams,
    topology: &Topology,
) -> Result<CostReport> {
    if assignment.len() != profiles.len() {
        return Err(Error::Input(format!(
            "assignment covers {} DUs but instance has {}",
            assignment.len(),
            profiles.len()
        )));
    }

    let mut du_compute = Vec::with_capacity(profiles.len());
    let mut routing = Vec::with_capacity(profiles.len());
    let mut cu_compute = 0.0;
    let mut cu_load = 0.0;
    let mut viol_du = 0.0;
    let mut viol_delay = 0.0;
    let mut link_load = vec![0.0; topology.links.len()];

    for (p, split) in profiles.iter().zip(&assignment.splits) {
        du_compute.push(du_cost(p, *split));
        routing.push(routing_cost(p, *split));
        cu_compute += cu_cost_share(p, *split, params);
        cu_load += p.lambda_mbps * split.rho_cu();

        let du_load = p.lambda_mbps * split.rho_du();
        viol_du += overshoot(du_load, p.du_capacity) / p.du_capacity;
        viol_delay += overshoot(p.route_delay_us, split.delay_bound_us()) / split.delay_bound_us();

        let flow = flow_of(*split, p.lambda_mbps);
        for li in &topology.path_of(p.du_id).links {
            link_load[*li] += flow;
        }
    }

    let mut viol_link = 0.0;
    for (li, load) in link_load.iter().enumerate() {
        let cap = topology.links[li].capacity_mbps;
        viol_link += overshoot(*load, cap) / cap;
    }

    let violations = Violations {
        cu_capacity: overshoot(cu_load, params.cu_capacity) / params.cu_capacity,
        du_capacity: viol_du,
        link_capacity: viol_link,
        delay: viol_delay,
    };

    let total = du_compute
        .iter()
        .zip(&routing)
        .map(|(v, u)| v + u)
        .sum::<f64>()
        + cu_compute;
    let penalty = violations.weighted(&params.penalty);

    Ok(CostReport {
        du_compute,
        cu_compute,
        routing,
        total,
        violations,
        penalty,
        penalized_total: total + penalty,
    })
}

fn overshoot(load: f64, bound: f64) -> f64 {
    (load - bound).max(0.0)
}

/// A topology with its per-DU profiles and system parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub topology: Topology,
    pub profiles: Vec<BsProfile>,
    pub system: SystemParams,
}

impl Instance {
    pub fn n_dus(&self) -> usize {
        self.profiles.len()
    }

    pub fn evaluate(&self, assignment: &Assignment) -> Result<CostReport> {
        evaluate(assignment, &self.profiles, &self.system, &self.topology)
    }

    /// Reference-only pricing: violations are still reported but carry no
    /// penalty, so `L = J`. Used for the C-RAN benchmark column, never for
    /// training.
    pub fn evaluate_reference(&self, assignment: &Assignment) -> Result<CostReport> {
        let mut params = self.system.clone();
        params.penalty = PenaltyWeights::zero();
        evaluate(assignment, &self.profiles, &params, &self.topology)
    }

    pub fn dran_report(&self) -> Result<CostReport> {
        self.evaluate(&dran_assignment(self.n_dus()))
    }

    pub fn cran_reference_report(&self) -> Result<CostReport> {
        self.evaluate_reference(&cran_assignment(self.n_dus()))
    }

    /// Same instance with every DU's traffic replaced by `lambda_mbps`.
    pub fn with_uniform_lambda(&self, lambda_mbps: f64) -> Instance {
        let mut out = self.clone();
        for p in &mut out.profiles {
            p.lambda_mbps = lambda_mbps;
        }
        out
    }

    /// Same instance with all routing costs scaled by `factor`.
    pub fn with_cost_scale(&self, factor: f64) -> Instance {
        let mut out = self.clone();
        out.topology.scale_routing_costs(factor);
        for p in &mut out.profiles {
            p.route_cost_per_mbps *= factor;
        }
        out
    }

    /// Per-DU scaled view used by randomized training: traffic and path
    /// routing costs are multiplied by the given factors.
    pub fn scaled_per_du(&self, lambda_factors: &[f64], cost_factors: &[f64]) -> Instance {
        assert_eq!(lambda_factors.len(), self.profiles.len());
        assert_eq!(cost_factors.len(), self.profiles.len());
        let mut out = self.clone();
        for (i, p) in out.profiles.iter_mut().enumerate() {
            p.lambda_mbps *= lambda_factors[i];
            p.route_cost_per_mbps *= cost_factors[i];
        }
        out
    }
}

/// Scenario file: per-DU overrides on top of uniform defaults.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub defaults: BsDefaults,
    #[serde(default)]
    pub overrides: Vec<BsOverride>,
    #[serde(default)]
    pub system: SystemDefaults,
    /// Absent means: weight every family by the instance's D-RAN total, so a
    /// 100% overshoot of any one constraint costs as much as running fully
    /// decentralized.
    #[serde(default)]
    pub penalty_weights: Option<PenaltyWeights>,
}

fn default_schema_version() -> u32 {
    1
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            schema_version: 1,
            defaults: BsDefaults::default(),
            overrides: Vec::new(),
            system: SystemDefaults::default(),
            penalty_weights: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct BsDefaults {
    pub lambda_mbps: f64,
    pub vm_cost: f64,
    pub compute_cost: f64,
    pub du_capacity: f64,
}

impl Default for BsDefaults {
    fn default() -> Self {
        // High-load defaults: 150 Mbps per DU, unit DU costs, 7.5 RC DUs.
        BsDefaults {
            lambda_mbps: 150.0,
            vm_cost: 1.0,
            compute_cost: 1.0,
            du_capacity: 7.5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BsOverride {
    pub du_id: usize,
    pub lambda_mbps: Option<f64>,
    pub vm_cost: Option<f64>,
    pub compute_cost: Option<f64>,
    pub du_capacity: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemDefaults {
    pub cu_capacity: f64,
    /// Absent means half the DU VM cost.
    pub vm_cost_cu: Option<f64>,
    /// Absent means 0.017 times the DU compute cost.
    pub compute_cost_cu: Option<f64>,
}

impl Default for SystemDefaults {
    fn default() -> Self {
        SystemDefaults {
            cu_capacity: 75.0,
            vm_cost_cu: None,
            compute_cost_cu: None,
        }
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<ScenarioConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            source: e,
        })?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Build an instance from a topology and scenario; penalty weights default
/// to the instance's D-RAN total cost per family.
pub fn build_instance(topology: Topology, scenario: &ScenarioConfig) -> Result<Instance> {
    let d = &scenario.defaults;
    if d.lambda_mbps < 0.0 || d.vm_cost < 0.0 || d.compute_cost < 0.0 || d.du_capacity <= 0.0 {
        return Err(Error::Parameter(
            "scenario defaults must be nonnegative with positive DU capacity".into(),
        ));
    }
    let mut profiles: Vec<BsProfile> = topology
        .paths
        .iter()
        .map(|p| BsProfile {
            du_id: p.du_id,
            lambda_mbps: d.lambda_mbps,
            vm_cost: d.vm_cost,
            compute_cost: d.compute_cost,
            du_capacity: d.du_capacity,
            route_delay_us: p.total_delay_us,
            route_cost_per_mbps: p.total_cost_per_mbps,
        })
        .collect();

    for ov in &scenario.overrides {
        let p = profiles
            .iter_mut()
            .find(|p| p.du_id == ov.du_id)
            .ok_or_else(|| Error::Input(format!("override for unknown DU {}", ov.du_id)))?;
        if let Some(l) = ov.lambda_mbps {
            p.lambda_mbps = l;
        }
        if let Some(a) = ov.vm_cost {
            p.vm_cost = a;
        }
        if let Some(b) = ov.compute_cost {
            p.compute_cost = b;
        }
        if let Some(h) = ov.du_capacity {
            p.du_capacity = h;
        }
    }

    let system = SystemParams {
        cu_capacity: scenario.system.cu_capacity,
        vm_cost_cu: scenario.system.vm_cost_cu.unwrap_or(d.vm_cost / 2.0),
        compute_cost_cu: scenario
            .system
            .compute_cost_cu
            .unwrap_or(0.017 * d.compute_cost),
        penalty: PenaltyWeights::zero(),
    };

    let mut instance = Instance {
        topology,
        profiles,
        system,
    };
    let penalty = match scenario.penalty_weights {
        Some(w) => w,
        None => PenaltyWeights::uniform(instance.dran_report()?.total),
    };
    instance.system.penalty = penalty;
    Ok(instance)
}
