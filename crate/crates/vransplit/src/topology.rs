//! Synthetic crosshaul networks: Waxman generation, delay-shortest DU to CU
//! routing, and JSON persistence.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::sample::derived_rng;
use crate::{Error, Result};

pub const TOPOLOGY_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Cu,
    Du,
    Router,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub kind: NodeKind,
    pub x: f64,
    pub y: f64,
}

/// Undirected link; loads in both directions share the capacity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub a: usize,
    pub b: usize,
    pub capacity_mbps: f64,
    pub delay_us: f64,
    pub unit_cost_per_mbps: f64,
}

/// Single routed path from one DU to the CU.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutePath {
    pub du_id: usize,
    /// Indices into `Topology::links`, ordered DU to CU.
    pub links: Vec<usize>,
    pub total_delay_us: f64,
    pub total_cost_per_mbps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub schema_version: u32,
    pub seed: u64,
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    /// One path per DU, in DU id order.
    pub paths: Vec<RoutePath>,
}

/// Parameters for [`generate_waxman`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct WaxmanConfig {
    pub n_nodes: usize,
    pub alpha: f64,
    pub beta: f64,
    pub capacity_range_mbps: (f64, f64),
    /// Microseconds of link delay per unit of Euclidean distance.
    pub delay_scale_us: f64,
    pub routing_cost_range: (f64, f64),
}

impl Default for WaxmanConfig {
    fn default() -> Self {
        WaxmanConfig {
            n_nodes: 100,
            alpha: 0.5,
            beta: 0.1,
            capacity_range_mbps: (1_000.0, 100_000.0),
            delay_scale_us: 3_000.0,
            routing_cost_range: (0.0001, 0.001),
        }
    }
}

/// Waxman edge probability: alpha * exp(-d / (beta * l_max)).
pub fn waxman_edge_probability(dist: f64, alpha: f64, beta: f64, l_max: f64) -> f64 {
    alpha * (-dist / (beta * l_max)).exp()
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Generate a connected Waxman topology with one CU.
///
/// Nodes are placed uniformly in the unit square; every pair is linked with
/// the Waxman probability; the node nearest the centroid becomes the CU. If
/// the edge sample is disconnected, the closest inter-component node pairs
/// are linked until it is. Deterministic for a given seed.
pub fn generate_waxman(config: &WaxmanConfig, seed: u64) -> Result<Topology> {
    validate_config(config)?;
    let mut rng = derived_rng(seed, 0x7090, 0);
    let n = config.n_nodes;

    let positions: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.gen::<f64>(), rng.gen::<f64>()))
        .collect();

    let mut l_max = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            l_max = l_max.max(dist(positions[i], positions[j]));
        }
    }
    if l_max == 0.0 {
        l_max = 1.0;
    }

    let mut links = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let d = dist(positions[i], positions[j]);
            let p = waxman_edge_probability(d, config.alpha, config.beta, l_max);
            if rng.gen::<f64>() < p {
                links.push(make_link(i, j, d, config, &mut rng));
            }
        }
    }

    // Stitch disconnected components with the closest cross-component pairs.
    loop {
        let comp = components(n, &links);
        if comp.iter().max().copied().unwrap_or(0) == 0 {
            break;
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            for j in (i + 1)..n {
                if comp[i] != comp[j] {
                    let d = dist(positions[i], positions[j]);
                    let cand = (d, i, j);
                    if best.map_or(true, |b| cand < b) {
                        best = Some(cand);
                    }
                }
            }
        }
        let (d, i, j) = best.expect("disconnected graph has a cross-component pair");
        links.push(make_link(i, j, d, config, &mut rng));
    }

    let centroid = (0.5, 0.5);
    let cu = (0..n)
        .min_by(|&i, &j| {
            dist(positions[i], centroid)
                .partial_cmp(&dist(positions[j], centroid))
                .unwrap_or(Ordering::Equal)
                .then(i.cmp(&j))
        })
        .expect("at least one node");

    let nodes = (0..n)
        .map(|id| Node {
            id,
            kind: if id == cu { NodeKind::Cu } else { NodeKind::Du },
            x: positions[id].0,
            y: positions[id].1,
        })
        .collect();

    let mut topo = Topology {
        schema_version: TOPOLOGY_SCHEMA_VERSION,
        seed,
        nodes,
        links,
        paths: Vec::new(),
    };
    compute_paths(&mut topo)?;
    Ok(topo)
}

fn make_link(i: usize, j: usize, d: f64, config: &WaxmanConfig, rng: &mut impl Rng) -> Link {
    let (clo, chi) = config.capacity_range_mbps;
    let (rlo, rhi) = config.routing_cost_range;
    Link {
        a: i,
        b: j,
        capacity_mbps: if clo == chi { clo } else { rng.gen_range(clo..chi) },
        delay_us: config.delay_scale_us * d,
        unit_cost_per_mbps: if rlo == rhi { rlo } else { rng.gen_range(rlo..rhi) },
    }
}

fn validate_config(config: &WaxmanConfig) -> Result<()> {
    if config.n_nodes < 2 {
        return Err(Error::Parameter("n_nodes must be at least 2".into()));
    }
    if !(config.alpha > 0.0 && config.alpha <= 1.0) || !(config.beta > 0.0 && config.beta <= 1.0) {
        return Err(Error::Parameter("alpha and beta must lie in (0, 1]".into()));
    }
    let (clo, chi) = config.capacity_range_mbps;
    if !(clo > 0.0 && chi >= clo) {
        return Err(Error::Parameter("capacity range must be positive".into()));
    }
    let (rlo, rhi) = config.routing_cost_range;
    if !(rlo >= 0.0 && rhi >= rlo) {
        return Err(Error::Parameter(
            "routing cost range must be nonnegative".into(),
        ));
    }
    if config.delay_scale_us < 0.0 {
        return Err(Error::Parameter("delay scale must be nonnegative".into()));
    }
    Ok(())
}

fn components(n: usize, links: &[Link]) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        let mut root = x;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = x;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for l in links {
        let (ra, rb) = (find(&mut parent, l.a), find(&mut parent, l.b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    // Relabel roots to dense component ids, smallest node first.
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    let mut out = vec![0; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if label[r] == usize::MAX {
            label[r] = next;
            next += 1;
        }
        out[i] = label[r];
    }
    out
}

#[derive(Copy, Clone, PartialEq)]
struct HeapEntry {
    delay: f64,
    hops: usize,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap: smaller delay first, then fewer hops, then smaller id.
        other
            .delay
            .partial_cmp(&self.delay)
            .unwrap_or(Ordering::Equal)
            .then(other.hops.cmp(&self.hops))
            .then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Fill `paths` with the delay-shortest route from every DU to the CU.
///
/// Ties break on fewer hops, then on the smaller predecessor id, which makes
/// the chosen tree deterministic.
pub fn compute_paths(topo: &mut Topology) -> Result<()> {
    let cu = topo.cu_id()?;
    let n = topo.nodes.len();

    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (li, l) in topo.links.iter().enumerate() {
        adj[l.a].push((l.b, li));
        adj[l.b].push((l.a, li));
    }
    for nb in adj.iter_mut() {
        nb.sort_by_key(|(peer, _)| *peer);
    }

    // Dijkstra from the CU over (delay, hops, predecessor id).
    let mut delay = vec![f64::INFINITY; n];
    let mut hops = vec![usize::MAX; n];
    let mut pred: Vec<Option<(usize, usize)>> = vec![None; n];
    delay[cu] = 0.0;
    hops[cu] = 0;
    let mut heap = BinaryHeap::new();
    heap.push(HeapEntry {
        delay: 0.0,
        hops: 0,
        node: cu,
    });
    while let Some(HeapEntry {
        delay: d,
        hops: h,
        node: u,
    }) = heap.pop()
    {
        if (d, h) > (delay[u], hops[u]) {
            continue;
        }
        for &(v, li) in &adj[u] {
            let nd = d + topo.links[li].delay_us;
            let nh = h + 1;
            let better = nd < delay[v]
                || (nd == delay[v] && nh < hops[v])
                || (nd == delay[v]
                    && nh == hops[v]
                    && pred[v].map_or(false, |(p, _)| u < p));
            if better {
                delay[v] = nd;
                hops[v] = nh;
                pred[v] = Some((u, li));
                heap.push(HeapEntry {
                    delay: nd,
                    hops: nh,
                    node: v,
                });
            }
        }
    }

    let mut paths = Vec::new();
    for node in &topo.nodes {
        if node.kind != NodeKind::Du {
            continue;
        }
        if delay[node.id].is_infinite() {
            return Err(Error::Topology(format!(
                "DU {} is not connected to the CU",
                node.id
            )));
        }
        let mut links = Vec::new();
        let mut cost = 0.0;
        let mut cur = node.id;
        while cur != cu {
            let (p, li) = pred[cur].expect("finite delay implies predecessor");
            links.push(li);
            cost += topo.links[li].unit_cost_per_mbps;
            cur = p;
        }
        paths.push(RoutePath {
            du_id: node.id,
            links,
            total_delay_us: delay[node.id],
            total_cost_per_mbps: cost,
        });
    }
    paths.sort_by_key(|p| p.du_id);
    topo.paths = paths;
    Ok(())
}

impl Topology {
    pub fn cu_id(&self) -> Result<usize> {
        let cus: Vec<usize> = self
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Cu)
            .map(|n| n.id)
            .collect();
        match cus.as_slice() {
            [only] => Ok(*only),
            _ => Err(Error::Topology(format!(
                "expected exactly one CU, found {}",
                cus.len()
            ))),
        }
    }

    pub fn du_ids(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Du)
            .map(|n| n.id)
            .collect()
    }

    pub fn n_dus(&self) -> usize {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Du).count()
    }

    /// Path for a DU; panics if paths were not computed.
    pub fn path_of(&self, du_id: usize) -> &RoutePath {
        self.paths
            .iter()
            .find(|p| p.du_id == du_id)
            .expect("path missing for DU")
    }

    pub fn max_path_delay_us(&self) -> f64 {
        self.paths
            .iter()
            .map(|p| p.total_delay_us)
            .fold(0.0, f64::max)
    }

    /// Multiply every link delay by `factor` and refresh path totals.
    /// The shortest-path tree is unchanged under uniform scaling.
    pub fn scale_delays(&mut self, factor: f64) {
        for l in &mut self.links {
            l.delay_us *= factor;
        }
        for p in &mut self.paths {
            p.total_delay_us = p.links.iter().map(|li| self.links[*li].delay_us).sum();
        }
    }

    /// Rescale delays so the largest DU to CU path delay equals `target_us`.
    pub fn rescale_max_path_delay(&mut self, target_us: f64) {
        let max = self.max_path_delay_us();
        if max > 0.0 {
            self.scale_delays(target_us / max);
        }
    }

    /// Multiply every link routing cost by `factor` and refresh path totals.
    pub fn scale_routing_costs(&mut self, factor: f64) {
        for l in &mut self.links {
            l.unit_cost_per_mbps *= factor;
        }
        for p in &mut self.paths {
            p.total_cost_per_mbps = p
                .links
                .iter()
                .map(|li| self.links[*li].unit_cost_per_mbps)
                .sum();
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cu_id()?;
        for node in &self.nodes {
            if !(0.0..=1.0).contains(&node.x) || !(0.0..=1.0).contains(&node.y) {
                return Err(Error::Topology(format!(
                    "node {} position outside the unit square",
                    node.id
                )));
            }
        }
        for (i, l) in self.links.iter().enumerate() {
            if l.a >= self.nodes.len() || l.b >= self.nodes.len() {
                return Err(Error::Topology(format!("link {} endpoint out of range", i)));
            }
            if l.capacity_mbps <= 0.0 {
                return Err(Error::Topology(format!(
                    "link {} capacity must be positive, got {}",
                    i, l.capacity_mbps
                )));
            }
            if l.delay_us < 0.0 || l.unit_cost_per_mbps < 0.0 {
                return Err(Error::Topology(format!(
                    "link {} has negative delay or cost",
                    i
                )));
            }
        }
        let du_count = self.n_dus();
        if self.paths.len() != du_count {
            return Err(Error::Topology(format!(
                "expected {} paths, found {}",
                du_count,
                self.paths.len()
            )));
        }
        let cu = self.cu_id()?;
        for p in &self.paths {
            let mut delay = 0.0;
            let mut cost = 0.0;
            let mut cur = p.du_id;
            for li in &p.links {
                let l = self
                    .links
                    .get(*li)
                    .ok_or_else(|| Error::Topology(format!("path link {} out of range", li)))?;
                cur = if l.a == cur {
                    l.b
                } else if l.b == cur {
                    l.a
                } else {
                    return Err(Error::Topology(format!(
                        "path for DU {} is not a connected chain",
                        p.du_id
                    )));
                };
                delay += l.delay_us;
                cost += l.unit_cost_per_mbps;
            }
            if cur != cu {
                return Err(Error::Topology(format!(
                    "path for DU {} does not end at the CU",
                    p.du_id
                )));
            }
            if (delay - p.total_delay_us).abs() > 1e-9 * delay.max(1.0)
                || (cost - p.total_cost_per_mbps).abs() > 1e-9 * cost.max(1.0)
            {
                return Err(Error::Topology(format!(
                    "path totals for DU {} do not match link sums",
                    p.du_id
                )));
            }
        }
        Ok(())
    }
}

pub fn save_topology(topo: &Topology, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(topo).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        source: e,
    })?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_topology(path: &Path) -> Result<Topology> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let topo: Topology = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        source: e,
    })?;
    if topo.schema_version != TOPOLOGY_SCHEMA_VERSION {
        return Err(Error::Validation {
            path: path.to_path_buf(),
            message: format!("unsupported topology schema {}", topo.schema_version),
        });
    }
    topo.validate().map_err(|e| Error::Validation {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(topo)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(n: usize) -> WaxmanConfig {
        WaxmanConfig {
            n_nodes: n,
            ..WaxmanConfig::default()
        }
    }

    #[test]
    fn hundred_nodes_one_cu_rest_dus() {
        let topo = generate_waxman(&tiny_config(100), 42).unwrap();
        assert_eq!(topo.nodes.len(), 100);
        assert!(topo.cu_id().is_ok());
        assert_eq!(topo.n_dus(), 99);
        assert_eq!(topo.paths.len(), 99);
        topo.validate().unwrap();
    }

    #[test]
    fn two_nodes_single_link() {
        let cfg = WaxmanConfig {
            n_nodes: 2,
            alpha: 1.0,
            beta: 1.0,
            ..WaxmanConfig::default()
        };
        let topo = generate_waxman(&cfg, 7).unwrap();
        assert_eq!(topo.n_dus(), 1);
        let p = &topo.paths[0];
        assert_eq!(p.links.len(), 1);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_waxman(&tiny_config(30), 5).unwrap();
        let b = generate_waxman(&tiny_config(30), 5).unwrap();
        assert_eq!(a, b);
        let c = generate_waxman(&tiny_config(30), 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn capacities_span_configured_range() {
        let topo = generate_waxman(&tiny_config(100), 11).unwrap();
        let caps: Vec<f64> = topo.links.iter().map(|l| l.capacity_mbps).collect();
        let lo = caps.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = caps.iter().cloned().fold(0.0_f64, f64::max);
        assert!(lo >= 1_000.0);
        assert!(hi <= 100_000.0);
        // With hundreds of draws the empirical range should reach near both ends.
        assert!(lo < 6_000.0, "low end {lo}");
        assert!(hi > 90_000.0, "high end {hi}");
    }

    #[test]
    fn edge_probability_monotone_in_distance() {
        let mut last = f64::INFINITY;
        for step in 0..50 {
            let d = step as f64 / 50.0;
            let p = waxman_edge_probability(d, 0.5, 0.1, 1.0);
            assert!(p <= last);
            last = p;
        }
    }

    #[test]
    fn near_pairs_link_more_often_than_far_pairs() {
        // Statistical check over many seeds.
        let cfg = tiny_config(12);
        let mut near = (0usize, 0usize);
        let mut far = (0usize, 0usize);
        for seed in 0..300 {
            let topo = generate_waxman(&cfg, seed).unwrap();
            let pos: Vec<(f64, f64)> = topo.nodes.iter().map(|n| (n.x, n.y)).collect();
            let linked: std::collections::HashSet<(usize, usize)> = topo
                .links
                .iter()
                .map(|l| (l.a.min(l.b), l.a.max(l.b)))
                .collect();
            for i in 0..pos.len() {
                for j in (i + 1)..pos.len() {
                    let d = dist(pos[i], pos[j]);
                    let is_linked = linked.contains(&(i, j));
                    if d < 0.25 {
                        near.0 += is_linked as usize;
                        near.1 += 1;
                    } else if d > 0.75 {
                        far.0 += is_linked as usize;
                        far.1 += 1;
                    }
                }
            }
        }
        let near_rate = near.0 as f64 / near.1 as f64;
        let far_rate = far.0 as f64 / far.1 as f64;
        assert!(
            near_rate > 2.0 * far_rate,
            "near {near_rate:.3} vs far {far_rate:.3}"
        );
    }

    #[test]
    fn shortest_path_beats_alternative() {
        // CU(0) - DU(2) direct link of 20us vs through node 1 at 5us + 5us.
        let mut topo = Topology {
            schema_version: TOPOLOGY_SCHEMA_VERSION,
            seed: 0,
            nodes: vec![
                Node { id: 0, kind: NodeKind::Cu, x: 0.5, y: 0.5 },
                Node { id: 1, kind: NodeKind::Router, x: 0.4, y: 0.5 },
                Node { id: 2, kind: NodeKind::Du, x: 0.3, y: 0.5 },
            ],
            links: vec![
                Link { a: 0, b: 2, capacity_mbps: 1e5, delay_us: 20.0, unit_cost_per_mbps: 0.0 },
                Link { a: 0, b: 1, capacity_mbps: 1e5, delay_us: 5.0, unit_cost_per_mbps: 0.0 },
                Link { a: 1, b: 2, capacity_mbps: 1e5, delay_us: 5.0, unit_cost_per_mbps: 0.0 },
            ],
            paths: Vec::new(),
        };
        compute_paths(&mut topo).unwrap();
        assert_eq!(topo.paths[0].total_delay_us, 10.0);
        assert_eq!(topo.paths[0].links.len(), 2);
    }

    #[test]
    fn equal_delay_prefers_fewer_hops() {
        // Direct 10us link vs two 5us hops: same delay, fewer hops wins.
        let mut topo = Topology {
            schema_version: TOPOLOGY_SCHEMA_VERSION,
            seed: 0,
            nodes: vec![
                Node { id: 0, kind: NodeKind::Cu, x: 0.5, y: 0.5 },
                Node { id: 1, kind: NodeKind::Router, x: 0.4, y: 0.5 },
                Node { id: 2, kind: NodeKind::Du, x: 0.3, y: 0.5 },
            ],
            links: vec![
                Link { a: 0, b: 2, capacity_mbps: 1e5, delay_us: 10.0, unit_cost_per_mbps: 0.0 },
                Link { a: 0, b: 1, capacity_mbps: 1e5, delay_us: 5.0, unit_cost_per_mbps: 0.0 },
                Link { a: 1, b: 2, capacity_mbps: 1e5, delay_us: 5.0, unit_cost_per_mbps: 0.0 },
            ],
            paths: Vec::new(),
        };
        compute_paths(&mut topo).unwrap();
        assert_eq!(topo.paths[0].total_delay_us, 10.0);
        assert_eq!(topo.paths[0].links, vec![0]);
    }

    /// Every simple path delay from `from` to `to`, for cross-checking Dijkstra.
    fn enumerate_path_delays(topo: &Topology, from: usize, to: usize) -> Vec<f64> {
        let n = topo.nodes.len();
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (li, l) in topo.links.iter().enumerate() {
            adj[l.a].push((l.b, li));
            adj[l.b].push((l.a, li));
        }
        let mut out = Vec::new();
        let mut visited = vec![false; n];
        fn walk(
            u: usize,
            to: usize,
            delay: f64,
            adj: &[Vec<(usize, usize)>],
            links: &[Link],
            visited: &mut [bool],
            out: &mut Vec<f64>,
        ) {
            if u == to {
                out.push(delay);
                return;
            }
            visited[u] = true;
            for &(v, li) in &adj[u] {
                if !visited[v] {
                    walk(v, to, delay + links[li].delay_us, adj, links, visited, out);
                }
            }
            visited[u] = false;
        }
        walk(from, to, 0.0, &adj, &topo.links, &mut visited, &mut out);
        out
    }

    #[test]
    fn dijkstra_matches_exhaustive_enumeration() {
        for seed in 0..5 {
            let topo = generate_waxman(&tiny_config(10), 100 + seed).unwrap();
            let cu = topo.cu_id().unwrap();
            for p in &topo.paths {
                let all = enumerate_path_delays(&topo, p.du_id, cu);
                let best = all.iter().cloned().fold(f64::INFINITY, f64::min);
                assert!(
                    (p.total_delay_us - best).abs() < 1e-9,
                    "DU {} path {} vs enumerated {}",
                    p.du_id,
                    p.total_delay_us,
                    best
                );
            }
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("topo.json");
        let topo = generate_waxman(&tiny_config(20), 3).unwrap();
        save_topology(&topo, &path).unwrap();
        let back = load_topology(&path).unwrap();
        assert_eq!(topo, back);
    }

    #[test]
    fn load_rejects_negative_capacity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("topo.json");
        let mut topo = generate_waxman(&tiny_config(5), 3).unwrap();
        topo.links[0].capacity_mbps = -10.0;
        let text = serde_json::to_string(&topo).unwrap();
        std::fs::write(&path, text).unwrap();
        let err = load_topology(&path).unwrap_err();
        assert!(err.to_string().contains("capacity"), "{err}");
    }

    #[test]
    fn load_rejects_missing_cu() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("topo.json");
        let mut topo = generate_waxman(&tiny_config(5), 3).unwrap();
        for n in &mut topo.nodes {
            n.kind = NodeKind::Du;
        }
        let text = serde_json::to_string(&topo).unwrap();
        std::fs::write(&path, text).unwrap();
        let err = load_topology(&path).unwrap_err();
        assert!(err.to_string().contains("exactly one CU"), "{err}");
    }

    #[test]
    fn load_reports_malformed_json_with_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("topo.json");
        std::fs::write(&path, "{\"schema_version\": 1, \"nodes\": [").unwrap();
        let err = load_topology(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
    }

    #[test]
    fn delay_rescaling_hits_target() {
        let mut topo = generate_waxman(&tiny_config(40), 9).unwrap();
        topo.rescale_max_path_delay(3658.61);
        assert!((topo.max_path_delay_us() - 3658.61).abs() < 1e-6);
        topo.validate().unwrap();
    }
}
