//! Config-driven commands behind the `vransplit` binary.
//!
//! Every command is reproducible: outputs are derived entirely from the
//! resolved config and seed, and the run manifest records every resolved
//! value. Timing never goes into files, only to stdout.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::inference::{
    cost_scale_sweep, evaluate_suite, lambda_sweep, search_over_temperatures, GapTable,
    SearchConfig, DEFAULT_TEMPERATURE_SWEEP,
};
use crate::model::{build_instance, Instance, PenaltyWeights, ScenarioConfig};
use crate::nn::checkpoint::Checkpoint;
use crate::oracle::{solve_bnb, OracleOutcome};
use crate::policy::{CriticParameters, PolicyParameters};
use crate::topology::{generate_waxman, load_topology, save_topology, Topology, WaxmanConfig};
use crate::trainer::{train, TrainConfig, TrainState, CURVE_CSV_HEADER};
use crate::{Error, Result};

pub const EXPERIMENT_SCHEMA_VERSION: u32 = 1;

/// Where the topology comes from.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologySource {
    File(PathBuf),
    Generate(GenerateSpec),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateSpec {
    #[serde(flatten)]
    pub waxman: WaxmanConfig,
    /// When set, link delays are rescaled so the longest DU to CU path has
    /// exactly this delay.
    pub rescale_max_path_delay_us: Option<f64>,
}

impl Default for GenerateSpec {
    fn default() -> Self {
        GenerateSpec {
            waxman: WaxmanConfig::default(),
            rescale_max_path_delay_us: Some(3_658.61),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioSource {
    File(PathBuf),
    Inline(ScenarioConfig),
}

/// Top-level experiment description; one file drives the whole pipeline.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub topology: TopologySource,
    pub scenario: ScenarioSource,
    pub train: TrainConfig,
    pub search: SearchConfig,
    pub temperatures: Vec<f64>,
    pub out_dir: PathBuf,
    /// Master seed; propagated to generation, training, and search.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: EXPERIMENT_SCHEMA_VERSION,
            topology: TopologySource::Generate(GenerateSpec::default()),
            scenario: ScenarioSource::Inline(ScenarioConfig::default()),
            train: TrainConfig::default(),
            search: SearchConfig::default(),
            temperatures: DEFAULT_TEMPERATURE_SWEEP.to_vec(),
            out_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: ExperimentConfig = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            source: e,
        })?;
        if config.schema_version != EXPERIMENT_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported experiment schema {}",
                config.schema_version
            )));
        }
        Ok(config)
    }

    /// Push the master seed into every stage.
    pub fn propagate_seed(&mut self) {
        self.train.seed = self.seed;
        self.search.seed = self.seed;
    }

    pub fn resolve_topology(&self) -> Result<Topology> {
        match &self.topology {
            TopologySource::File(path) => load_topology(path),
            TopologySource::Generate(spec) => {
                let mut topo = generate_waxman(&spec.waxman, self.seed)?;
                if let Some(target) = spec.rescale_max_path_delay_us {
                    topo.rescale_max_path_delay(target);
                }
                Ok(topo)
            }
        }
    }

    pub fn resolve_scenario(&self) -> Result<ScenarioConfig> {
        match &self.scenario {
            ScenarioSource::File(path) => ScenarioConfig::load(path),
            ScenarioSource::Inline(sc) => Ok(sc.clone()),
        }
    }

    pub fn resolve_instance(&self) -> Result<Instance> {
        let topo = self.resolve_topology()?;
        let scenario = self.resolve_scenario()?;
        build_instance(topo, &scenario)
    }
}

/// Everything that determined a run, written next to its outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub topology: TopologySource,
    pub scenario: ScenarioConfig,
    pub penalty_weights: PenaltyWeights,
    pub train: TrainConfig,
    pub search: SearchConfig,
    pub temperatures: Vec<f64>,
}

fn write_manifest(config: &ExperimentConfig, instance: &Instance, out_dir: &Path) -> Result<()> {
    let manifest = RunManifest {
        schema_version: EXPERIMENT_SCHEMA_VERSION,
        seed: config.seed,
        topology: config.topology.clone(),
        scenario: config.resolve_scenario()?,
        penalty_weights: instance.system.penalty,
        train: config.train.clone(),
        search: config.search.clone(),
        temperatures: config.temperatures.clone(),
    };
    let path = out_dir.join("run_manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Parse {
        path: path.clone(),
        source: e,
    })?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn ensure_out_dir(config: &ExperimentConfig) -> Result<PathBuf> {
    let dir = config.out_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn ecdf_csv(values: &mut Vec<f64>, value_header: &str) -> String {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len() as f64;
    let mut out = format!("{value_header},cum_fraction\n");
    for (i, v) in values.iter().enumerate() {
        out.push_str(&format!("{},{}\n", v, (i + 1) as f64 / n));
    }
    out
}

/// Generate a topology file plus eCDF summaries of per-link capacity and
/// per-path latency.
pub fn cmd_generate(config: &ExperimentConfig) -> Result<i32> {
    let out_dir = ensure_out_dir(config)?;
    let topo = config.resolve_topology()?;

    let topo_path = out_dir.join("topology.json");
    save_topology(&topo, &topo_path)?;

    let mut capacities: Vec<f64> = topo.links.iter().map(|l| l.capacity_mbps).collect();
    let cap_path = out_dir.join("capacity_ecdf.csv");
    fs::write(&cap_path, ecdf_csv(&mut capacities, "capacity_mbps"))
        .map_err(|e| Error::io(&cap_path, e))?;

    let mut delays: Vec<f64> = topo.paths.iter().map(|p| p.total_delay_us).collect();
    let lat_path = out_dir.join("path_latency_ecdf.csv");
    fs::write(&lat_path, ecdf_csv(&mut delays, "path_delay_us"))
        .map_err(|e| Error::io(&lat_path, e))?;

    println!(
        "generated {} nodes ({} DUs), {} links, max path delay {:.2} us -> {}",
        topo.nodes.len(),
        topo.n_dus(),
        topo.links.len(),
        topo.max_path_delay_us(),
        topo_path.display()
    );
    Ok(0)
}

/// Train (or resume) and write the curve CSV, checkpoints, and manifest.
pub fn cmd_train(config: &ExperimentConfig, resume: Option<&Path>) -> Result<i32> {
    let out_dir = ensure_out_dir(config)?;
    let instance = config.resolve_instance()?;
    write_manifest(config, &instance, &out_dir)?;

    let mut state = TrainState::new(&config.train);
    let curve_path = out_dir.join("curve.csv");
    let mut curve: Box<dyn Write> = if let Some(ck_path) = resume {
        let ck = Checkpoint::load(ck_path)?;
        state.restore(&ck)?;
        let file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&curve_path)
            .map_err(|e| Error::io(&curve_path, e))?;
        Box::new(file)
    } else {
        let mut file = fs::File::create(&curve_path).map_err(|e| Error::io(&curve_path, e))?;
        writeln!(file, "{CURVE_CSV_HEADER}").map_err(|e| Error::io(&curve_path, e))?;
        Box::new(file)
    };

    let cadence = config.train.checkpoint_every;
    let result = train(&mut state, &instance, &config.train, |record, state| {
        writeln!(curve, "{}", record.to_csv_row()).map_err(|e| Error::io(&curve_path, e))?;
        if cadence > 0 && state.epoch % cadence == 0 {
            let path = out_dir.join(format!("checkpoint_epoch_{}.json", state.epoch));
            state.to_checkpoint().save(&path)?;
        }
        Ok(())
    });

    match result {
        Ok(records) => {
            let final_path = out_dir.join("checkpoint_final.json");
            state.to_checkpoint().save(&final_path)?;
            if let Some(last) = records.last() {
                println!(
                    "trained to epoch {}: mean_J {:.4}, mean_xi {:.4} -> {}",
                    state.epoch,
                    last.mean_j,
                    last.mean_xi,
                    final_path.display()
                );
            }
            Ok(0)
        }
        Err(err @ Error::Numeric(_)) => {
            let path = out_dir.join("diagnostic_checkpoint.json");
            state.to_checkpoint().save(&path)?;
            eprintln!("aborted: {err}; diagnostic state in {}", path.display());
            Err(err)
        }
        Err(err) => Err(err),
    }
}

fn load_models(
    config: &ExperimentConfig,
    checkpoint: &Path,
) -> Result<(PolicyParameters, CriticParameters, usize)> {
    let ck = Checkpoint::load(checkpoint)?;
    let mut rng = crate::nn::sample::derived_rng(0, 0, 0);
    let mut policy = PolicyParameters::new(config.train.policy, &mut rng);
    policy.load_named(&ck.policy.params)?;
    let mut critic = CriticParameters::new(
        config.train.policy.hidden_dim,
        config.train.policy.num_layers,
        &mut rng,
    );
    critic.load_named(&ck.critic.params)?;
    Ok((policy, critic, ck.epoch))
}

#[derive(Serialize)]
struct AssignmentDump<'a> {
    splits: Vec<SplitEntry>,
    total_j: f64,
    penalized_total: f64,
    feasible: bool,
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<&'a str>,
}

#[derive(Serialize)]
struct SplitEntry {
    du_id: usize,
    split: usize,
}

/// Run the sampling search on the configured instance with a trained policy.
pub fn cmd_infer(config: &ExperimentConfig, checkpoint: &Path) -> Result<i32> {
    let out_dir = ensure_out_dir(config)?;
    let instance = config.resolve_instance()?;
    let (policy, _, epoch) = load_models(config, checkpoint)?;

    let (result, temperature) =
        search_over_temperatures(&policy, &instance, &config.search, &config.temperatures)?;
    let dump = AssignmentDump {
        splits: instance
            .profiles
            .iter()
            .zip(&result.best_assignment.splits)
            .map(|(p, s)| SplitEntry {
                du_id: p.du_id,
                split: s.index(),
            })
            .collect(),
        total_j: result.best_report.total,
        penalized_total: result.best_report.penalized_total,
        feasible: result.best_report.is_feasible(),
        temperature,
        note: None,
    };
    let path = out_dir.join("best_assignment.json");
    let text = serde_json::to_string_pretty(&dump).map_err(|e| Error::Parse {
        path: path.clone(),
        source: e,
    })?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    println!(
        "checkpoint epoch {}: best J {:.4} (feasible: {}, T {}) over {} samples -> {}",
        epoch,
        result.best_report.total,
        result.best_report.is_feasible(),
        temperature,
        result.samples_evaluated,
        path.display()
    );
    Ok(if result.best_report.is_feasible() { 0 } else { 3 })
}

#[derive(Serialize)]
struct OracleDump {
    status: &'static str,
    cost: Option<f64>,
    splits: Option<Vec<SplitEntry>>,
    nodes_explored: u64,
}

/// Solve the configured instance exactly with branch-and-bound.
pub fn cmd_solve_exact(config: &ExperimentConfig) -> Result<i32> {
    let out_dir = ensure_out_dir(config)?;
    let instance = config.resolve_instance()?;
    let started = Instant::now();
    let result = solve_bnb(&instance)?;
    let wall = started.elapsed().as_secs_f64();

    let dump = match &result.outcome {
        OracleOutcome::Optimal { assignment, cost } => OracleDump {
            status: "Optimal",
            cost: Some(*cost),
            splits: Some(
                instance
                    .profiles
                    .iter()
                    .zip(&assignment.splits)
                    .map(|(p, s)| SplitEntry {
                        du_id: p.du_id,
                        split: s.index(),
                    })
                    .collect(),
            ),
            nodes_explored: result.nodes_explored,
        },
        OracleOutcome::Infeasible => OracleDump {
            status: "Infeasible",
            cost: None,
            splits: None,
            nodes_explored: result.nodes_explored,
        },
    };
    let path = out_dir.join("oracle_result.json");
    let text = serde_json::to_string_pretty(&dump).map_err(|e| Error::Parse {
        path: path.clone(),
        source: e,
    })?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

    // One CSV record on stdout; wall time stays out of the files.
    println!(
        "instance,{},{},{},{:.6}",
        result
            .optimal_cost()
            .map_or(String::new(), |c| c.to_string()),
        result.status_str(),
        result.nodes_explored,
        wall
    );
    Ok(match result.outcome {
        OracleOutcome::Optimal { .. } => 0,
        OracleOutcome::Infeasible => 3,
    })
}

/// Sweep override from the command line: `name=lo:hi:step`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepKind {
    Lambda,
    CostScale,
}

impl SweepSpec {
    pub fn parse(text: &str) -> Result<SweepSpec> {
        let bad = || Error::Config(format!("sweep must look like name=lo:hi:step, got {text:?}"));
        let (name, range) = text.split_once('=').ok_or_else(bad)?;
        let kind = match name {
            "lambda" => SweepKind::Lambda,
            "cost_scale" => SweepKind::CostScale,
            _ => {
                return Err(Error::Config(format!(
                    "unknown sweep {name:?}; expected lambda or cost_scale"
                )))
            }
        };
        let parts: Vec<&str> = range.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let nums: Vec<f64> = parts
            .iter()
            .map(|p| p.parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let (lo, hi, step) = (nums[0], nums[1], nums[2]);
        if step <= 0.0 || hi < lo {
            return Err(bad());
        }
        Ok(SweepSpec { kind, lo, hi, step })
    }

    pub fn points(&self) -> usize {
        ((self.hi - self.lo) / self.step + 1.0 + 1e-9).floor() as usize
    }

    pub fn instances(&self, base: &Instance) -> Vec<(String, Instance)> {
        let points = self.points();
        let hi = self.lo + self.step * (points - 1) as f64;
        match self.kind {
            SweepKind::Lambda => lambda_sweep(base, self.lo, hi, points),
            SweepKind::CostScale => cost_scale_sweep(base, self.lo, hi, points),
        }
    }
}

/// Gap and cost comparison against the exact oracle, D-RAN, and C-RAN.
pub fn cmd_compare(
    config: &ExperimentConfig,
    checkpoint: &Path,
    sweep: Option<SweepSpec>,
) -> Result<i32> {
    let out_dir = ensure_out_dir(config)?;
    let instance = config.resolve_instance()?;
    write_manifest(config, &instance, &out_dir)?;
    let (policy, _, _) = load_models(config, checkpoint)?;

    let mut groups: Vec<(String, Vec<(String, Instance)>)> = Vec::new();
    match sweep {
        Some(spec) => {
            let name = match spec.kind {
                SweepKind::Lambda => "lambda",
                SweepKind::CostScale => "cost_scale",
            };
            groups.push((name.to_string(), spec.instances(&instance)));
        }
        None => {
            groups.push(("lambda".into(), lambda_sweep(&instance, 10.0, 150.0, 10)));
            groups.push((
                "cost_scale".into(),
                cost_scale_sweep(&instance, 0.1, 1.0, 10),
            ));
        }
    }

    let mut combined = GapTable::default();
    let mut plot = String::from("sweep,value,gap_percent,j_search,j_dran,j_cran_ref\n");
    for (name, instances) in &groups {
        let table = evaluate_suite(&policy, instances, &config.search, &config.temperatures)?;
        for (row, (id, _)) in table.rows.iter().zip(instances) {
            let value = id.rsplit('_').next().unwrap_or_default();
            plot.push_str(&format!(
                "{},{},{},{},{},{}\n",
                name,
                value,
                row.gap_percent.map_or(String::new(), |g| g.to_string()),
                row.j_search,
                row.j_dran,
                row.j_cran_reference
            ));
        }
        combined.rows.extend(table.rows);
    }

    let gap_path = out_dir.join("gap_table.csv");
    fs::write(&gap_path, combined.to_csv()).map_err(|e| Error::io(&gap_path, e))?;
    let plot_path = out_dir.join("plot_data.csv");
    fs::write(&plot_path, plot).map_err(|e| Error::io(&plot_path, e))?;

    match (combined.mean_gap_percent(), combined.max_gap_percent()) {
        (Some(mean), Some(max)) => {
            println!(
                "{} instances: mean gap {:.4}%, max gap {:.4}% -> {}",
                combined.rows.len(),
                mean,
                max,
                gap_path.display()
            );
        }
        _ => println!(
            "{} instances, none oracle-solvable -> {}",
            combined.rows.len(),
            gap_path.display()
        ),
    }
    Ok(0)
}

/// Run the finite-difference suite over every kernel and the whole policy
/// and critic graphs.
pub fn cmd_gradcheck(seed: u64, coords_per_check: usize, tolerance: f64) -> Result<i32> {
    let mut outcomes = crate::nn::gradcheck::kernel_suite(seed, coords_per_check);
    outcomes.extend(crate::policy::graph_checks(seed, coords_per_check));
    let mut failed = false;
    let mut total = 0usize;
    for o in &outcomes {
        total += o.coords_checked;
        let ok = o.passes(tolerance);
        failed |= !ok;
        println!(
            "{}: {} coords, max rel err {:.3e} [{}]",
            o.name,
            o.coords_checked,
            o.max_rel_err,
            if ok { "pass" } else { "FAIL" }
        );
    }
    println!("checked {total} coordinates at tolerance {tolerance}");
    if failed {
        Err(Error::Numeric("gradient check failed".into()))
    } else {
        Ok(0)
    }
}

/// Exit code for an error per the command contract.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Numeric(_) => 4,
        Error::Topology(_) => 3,
        _ => 2,
    }
}
