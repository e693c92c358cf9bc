//! Scenario parameters, validation and randomized scenario generation.
//!
//! Indices are zero-based throughout: station `m` is routing node `m + 1`,
//! node `0` is the depot.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng64;

pub const INSTANCE_SCHEMA: &str = "instance-v1";

/// Uniform slot discretisation of the mission horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotGrid {
    pub delta: f64,
    pub n_slot: usize,
    pub t_mission: f64,
}

impl SlotGrid {
    pub fn new(delta: f64, n_slot: usize) -> Self {
        Self {
            delta,
            n_slot,
            t_mission: delta * n_slot as f64,
        }
    }

    /// Start time `t * delta` of slot `t`.
    pub fn time_of(&self, t: usize) -> f64 {
        t as f64 * self.delta
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: usize,
    pub pos: [f64; 2],
    pub value: f64,
    pub weight: f64,
    pub min_service: f64,
    pub isds: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UavSpec {
    pub id: usize,
    pub speed: f64,
    pub dist_budget: f64,
    pub payload_cap: f64,
    pub energy_budget: f64,
    pub f_uav: f64,
    pub b_ul: f64,
    pub b_bh: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsdSpec {
    pub id: usize,
    pub station: usize,
    pub f_loc: f64,
    /// Nominal relative deadline; tasks may carry their own draw.
    pub deadline_dur: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub isd: usize,
    pub gen_slot: usize,
    pub workload: f64,
    pub input_bits: f64,
    /// Per-task relative deadline in seconds. `None` falls back to the ISD's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyCoeffs {
    pub a_fly: f64,
    pub a_hov: f64,
    pub a_cmp: f64,
    pub a_ul: f64,
    pub a_bh: f64,
}

impl Default for EnergyCoeffs {
    fn default() -> Self {
        Self {
            a_fly: 80.0,
            a_hov: 200.0,
            a_cmp: 0.5,
            a_ul: 1e-6,
            a_bh: 1e-6,
        }
    }
}

/// Effective-rate factors. Unlisted entries take the default value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "RateFactorsRepr", into = "RateFactorsRepr")]
pub struct RateFactors {
    pub ul_default: f64,
    pub bh_default: f64,
    ul: BTreeMap<(usize, usize, usize), f64>,
    bh: BTreeMap<(usize, usize), f64>,
}

impl Default for RateFactors {
    fn default() -> Self {
        Self::uniform(1.0, 1.0)
    }
}

impl RateFactors {
    pub fn uniform(ul: f64, bh: f64) -> Self {
        Self {
            ul_default: ul,
            bh_default: bh,
            ul: BTreeMap::new(),
            bh: BTreeMap::new(),
        }
    }

    /// gamma^ul for ISD `k`, slot `t`, UAV `u`.
    pub fn ul(&self, k: usize, t: usize, u: usize) -> f64 {
        self.ul.get(&(k, t, u)).copied().unwrap_or(self.ul_default)
    }

    /// gamma^bh for slot `t`, UAV `u`.
    pub fn bh(&self, t: usize, u: usize) -> f64 {
        self.bh.get(&(t, u)).copied().unwrap_or(self.bh_default)
    }

    pub fn set_ul(&mut self, k: usize, t: usize, u: usize, factor: f64) {
        self.ul.insert((k, t, u), factor);
    }

    pub fn set_bh(&mut self, t: usize, u: usize, factor: f64) {
        self.bh.insert((t, u), factor);
    }

    fn all_factors(&self) -> impl Iterator<Item = f64> + '_ {
        [self.ul_default, self.bh_default]
            .into_iter()
            .chain(self.ul.values().copied())
            .chain(self.bh.values().copied())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RateFactorsRepr {
    ul_default: f64,
    bh_default: f64,
    #[serde(default)]
    ul: Vec<(usize, usize, usize, f64)>,
    #[serde(default)]
    bh: Vec<(usize, usize, f64)>,
}

impl From<RateFactorsRepr> for RateFactors {
    fn from(r: RateFactorsRepr) -> Self {
        Self {
            ul_default: r.ul_default,
            bh_default: r.bh_default,
            ul: r.ul.into_iter().map(|(k, t, u, f)| ((k, t, u), f)).collect(),
            bh: r.bh.into_iter().map(|(t, u, f)| ((t, u), f)).collect(),
        }
    }
}

impl From<RateFactors> for RateFactorsRepr {
    fn from(r: RateFactors) -> Self {
        Self {
            ul_default: r.ul_default,
            bh_default: r.bh_default,
            ul: r.ul.into_iter().map(|((k, t, u), f)| (k, t, u, f)).collect(),
            bh: r.bh.into_iter().map(|((t, u), f)| (t, u, f)).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub w_col: f64,
    pub w_cmp: f64,
    pub w_miss: f64,
    pub w_flow: f64,
    pub w_res: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self {
            w_col: 1.0,
            w_cmp: 1.0,
            w_miss: 1.0,
            w_flow: 0.01,
            w_res: 0.1,
        }
    }
}

/// Distribution the task set was drawn from; lets environments redraw a
/// fresh task realisation per episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskModel {
    pub n_tasks: usize,
    pub deadline_lo: f64,
    pub deadline_hi: f64,
    pub workload_mean: f64,
    pub workload_sd: f64,
    pub workload_min: f64,
    pub bits_mean: f64,
    pub bits_sd: f64,
    pub bits_min: f64,
}

impl TaskModel {
    /// Draws a task set: per task `gen_slot`, ISD, deadline, workload, bits
    /// in that order. The result is sorted by generation slot (stable).
    pub fn sample(&self, n_slot: usize, n_isd: usize, rng: &mut Rng64) -> Vec<TaskSpec> {
        let mut tasks: Vec<TaskSpec> = (0..self.n_tasks)
            .map(|_| {
                let gen_slot = rng.index(n_slot);
                let isd = rng.index(n_isd);
                let deadline = rng.range(self.deadline_lo, self.deadline_hi);
                let workload = rng
                    .gaussian(self.workload_mean, self.workload_sd)
                    .max(self.workload_min);
                let input_bits = rng.gaussian(self.bits_mean, self.bits_sd).max(self.bits_min);
                TaskSpec {
                    isd,
                    gen_slot,
                    workload,
                    input_bits,
                    deadline: Some(deadline),
                }
            })
            .collect();
        tasks.sort_by_key(|t| t.gen_slot);
        tasks
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub schema: String,
    pub profile: String,
    pub seed: u64,
    pub grid: SlotGrid,
    pub depot: [f64; 2],
    pub stations: Vec<Station>,
    pub uavs: Vec<UavSpec>,
    pub isds: Vec<IsdSpec>,
    pub tasks: Vec<TaskSpec>,
    pub energy: EnergyCoeffs,
    pub rates: RateFactors,
    pub weights: ObjectiveWeights,
    pub cloud_cap: f64,
    /// Distances over nodes `{depot} ∪ stations`.
    pub dist: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_model: Option<TaskModel>,
}

impl Instance {
    pub fn n_stations(&self) -> usize {
        self.stations.len()
    }

    pub fn n_uavs(&self) -> usize {
        self.uavs.len()
    }

    pub fn n_isds(&self) -> usize {
        self.isds.len()
    }

    /// Distance between station `a` and station `b`.
    pub fn d_stations(&self, a: usize, b: usize) -> f64 {
        self.dist[a + 1][b + 1]
    }

    pub fn d_depot_to(&self, m: usize) -> f64 {
        self.dist[0][m + 1]
    }

    pub fn d_to_depot(&self, m: usize) -> f64 {
        self.dist[m + 1][0]
    }

    /// Distance between routing nodes (0 = depot).
    pub fn d_nodes(&self, i: usize, j: usize) -> f64 {
        self.dist[i][j]
    }

    pub fn station_of_isd(&self, k: usize) -> usize {
        self.isds[k].station
    }

    /// Relative deadline D of a task.
    pub fn deadline_of(&self, task: &TaskSpec) -> f64 {
        task.deadline.unwrap_or(self.isds[task.isd].deadline_dur)
    }

    /// Absolute deadline `tau * delta + D`.
    pub fn abs_deadline(&self, task: &TaskSpec) -> f64 {
        self.grid.time_of(task.gen_slot) + self.deadline_of(task)
    }

    /// Last slot whose completion `(t + 1) * delta` still meets the deadline,
    /// clamped to the grid. `None` if no slot qualifies.
    pub fn last_ontime_slot(&self, task: &TaskSpec) -> Option<usize> {
        let lim = self.abs_deadline(task) / self.grid.delta;
        // (t + 1) <= lim, with a small guard against representation error.
        let t_plus_one = (lim + 1e-9).floor();
        if t_plus_one < 1.0 {
            return None;
        }
        let t = (t_plus_one as usize - 1).min(self.grid.n_slot - 1);
        (t >= task.gen_slot).then_some(t)
    }

    /// Redraws the task set from the recorded task model.
    pub fn resample_tasks(&self, seed: u64) -> Option<Vec<TaskSpec>> {
        let model = self.task_model.as_ref()?;
        let mut rng = Rng64::derive(seed, 0x7a5c);
        Some(model.sample(self.grid.n_slot, self.n_isds(), &mut rng))
    }

    pub fn with_tasks(&self, tasks: Vec<TaskSpec>) -> Instance {
        Instance {
            tasks,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Instance> {
        let inst: Instance = serde_json::from_str(text)?;
        if inst.schema != INSTANCE_SCHEMA {
            return Err(Error::Config(format!(
                "unsupported instance schema {:?} (expected {INSTANCE_SCHEMA})",
                inst.schema
            )));
        }
        Ok(inst)
    }

    pub fn total_workload(&self) -> f64 {
        self.tasks.iter().map(|t| t.workload).sum()
    }
}

/// Euclidean distance matrix over `{depot} ∪ stations`.
pub fn euclidean_matrix(depot: [f64; 2], stations: &[Station]) -> Vec<Vec<f64>> {
    let nodes: Vec<[f64; 2]> = std::iter::once(depot)
        .chain(stations.iter().map(|s| s.pos))
        .collect();
    nodes
        .iter()
        .map(|a| {
            nodes
                .iter()
                .map(|b| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt())
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: String,
    pub message: String,
}

impl Violation {
    fn new(code: &str, message: String) -> Self {
        Self {
            code: code.to_string(),
            message,
        }
    }
}

/// Checks every structural invariant; an empty report means valid.
pub fn validate_instance(inst: &Instance) -> Vec<Violation> {
    let mut out = Vec::new();
    let g = &inst.grid;
    if !(g.delta > 0.0) {
        out.push(Violation::new("grid", format!("delta must be positive, got {}", g.delta)));
    }
    if g.n_slot == 0 {
        out.push(Violation::new("grid", "n_slot must be at least 1".into()));
    }
    if (g.n_slot as f64 * g.delta - g.t_mission).abs() > 1e-9 * g.t_mission.abs().max(1.0) {
        out.push(Violation::new(
            "grid",
            format!(
                "n_slot * delta = {} differs from t_mission = {}",
                g.n_slot as f64 * g.delta,
                g.t_mission
            ),
        ));
    }

    for (i, s) in inst.stations.iter().enumerate() {
        if s.id != i {
            out.push(Violation::new("station", format!("station at index {i} has id {}", s.id)));
        }
        for (name, v) in [("value", s.value), ("weight", s.weight), ("min_service", s.min_service)] {
            if !(v >= 0.0) || !v.is_finite() {
                out.push(Violation::new("station", format!("station {i}: {name} = {v} must be >= 0")));
            }
        }
        for &k in &s.isds {
            if k >= inst.isds.len() {
                out.push(Violation::new("station", format!("station {i}: unknown ISD {k}")));
            }
        }
    }

    for (i, u) in inst.uavs.iter().enumerate() {
        if u.id != i {
            out.push(Violation::new("uav", format!("UAV at index {i} has id {}", u.id)));
        }
        for (name, v) in [
            ("speed", u.speed),
            ("dist_budget", u.dist_budget),
            ("payload_cap", u.payload_cap),
            ("energy_budget", u.energy_budget),
            ("f_uav", u.f_uav),
            ("b_ul", u.b_ul),
            ("b_bh", u.b_bh),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                out.push(Violation::new("uav", format!("UAV {i}: {name} = {v} must be > 0")));
            }
        }
    }

    for (i, k) in inst.isds.iter().enumerate() {
        if k.id != i {
            out.push(Violation::new("isd", format!("ISD at index {i} has id {}", k.id)));
        }
        if k.station >= inst.stations.len() {
            out.push(Violation::new(
                "isd",
                format!("ISD {i}: host station {} does not exist", k.station),
            ));
        }
        if !(k.f_loc > 0.0) {
            out.push(Violation::new("isd", format!("ISD {i}: f_loc must be > 0")));
        }
        if !(k.deadline_dur > 0.0) {
            out.push(Violation::new("isd", format!("ISD {i}: deadline_dur must be > 0")));
        }
    }

    for (i, t) in inst.tasks.iter().enumerate() {
        if t.isd >= inst.isds.len() {
            out.push(Violation::new("task", format!("task {i}: unknown ISD {}", t.isd)));
        }
        if t.gen_slot >= g.n_slot {
            out.push(Violation::new(
                "task",
                format!("task {i}: gen_slot {} outside [0, {})", t.gen_slot, g.n_slot),
            ));
        }
        if !(t.workload > 0.0) {
            out.push(Violation::new("task", format!("task {i}: workload must be > 0")));
        }
        if !(t.input_bits > 0.0) {
            out.push(Violation::new("task", format!("task {i}: input_bits must be > 0")));
        }
        if let Some(d) = t.deadline {
            if !(d > 0.0) {
                out.push(Violation::new("task", format!("task {i}: deadline must be > 0")));
            }
        }
    }

    let e = &inst.energy;
    for (name, v) in [
        ("a_fly", e.a_fly),
        ("a_hov", e.a_hov),
        ("a_cmp", e.a_cmp),
        ("a_ul", e.a_ul),
        ("a_bh", e.a_bh),
    ] {
        if !(v >= 0.0) {
            out.push(Violation::new("energy", format!("{name} = {v} must be >= 0")));
        }
    }
    for f in inst.rates.all_factors() {
        if !(f > 0.0 && f <= 1.0) {
            out.push(Violation::new("rates", format!("rate factor {f} outside (0, 1]")));
        }
    }
    let w = &inst.weights;
    for (name, v) in [
        ("w_col", w.w_col),
        ("w_cmp", w.w_cmp),
        ("w_miss", w.w_miss),
        ("w_flow", w.w_flow),
        ("w_res", w.w_res),
    ] {
        if !(v >= 0.0) {
            out.push(Violation::new("weights", format!("{name} = {v} must be >= 0")));
        }
    }
    if !(inst.cloud_cap > 0.0) {
        out.push(Violation::new("cloud", "cloud_cap must be > 0".into()));
    }

    let n = inst.stations.len() + 1;
    if inst.dist.len() != n || inst.dist.iter().any(|r| r.len() != n) {
        out.push(Violation::new(
            "dist",
            format!("distance matrix must be {n}x{n}"),
        ));
    } else {
        for i in 0..n {
            if inst.dist[i][i] != 0.0 {
                out.push(Violation::new("dist", format!("non-zero diagonal at ({i},{i})")));
            }
            for j in (i + 1)..n {
                let (a, b) = (inst.dist[i][j], inst.dist[j][i]);
                if (a - b).abs() > 1e-9 * a.abs().max(1.0) {
                    out.push(Violation::new("dist", format!("distance asymmetry at ({i},{j})")));
                }
                if a < 0.0 {
                    out.push(Violation::new("dist", format!("negative distance at ({i},{j})")));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if inst.dist[i][j] > inst.dist[i][k] + inst.dist[k][j] + 1e-9 {
                        out.push(Violation::new(
                            "dist",
                            format!("triangle inequality fails for ({i},{k},{j})"),
                        ));
                    }
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Scenario generation

/// Registered scenario profile names.
pub const PROFILES: &[&str] = &["paper", "tiny", "tiny-mixed"];

/// Generates a scenario; a pure function of `(seed, profile)`.
pub fn generate_scenario(seed: u64, profile: &str) -> Result<Instance> {
    match profile {
        "paper" => Ok(paper_profile(seed)),
        "tiny" => Ok(tiny_profile(seed, false)),
        "tiny-mixed" => Ok(tiny_profile(seed, true)),
        other => Err(Error::Config(format!(
            "unknown scenario profile {other:?}; registered: {}",
            PROFILES.join(", ")
        ))),
    }
}

/// Scenario with two homogeneous UAVs and six single-ISD stations.
fn paper_profile(seed: u64) -> Instance {
    const MIN_SERVICE: [f64; 6] = [100.0, 80.0, 80.0, 80.0, 70.0, 70.0];
    const SIDE: f64 = 300.0;
    let grid = SlotGrid::new(1.0, 313);
    let uavs: Vec<UavSpec> = (0..2)
        .map(|id| UavSpec {
            id,
            speed: 10.0,
            dist_budget: 4800.0,
            payload_cap: 30.0,
            energy_budget: 150.0 * 3600.0,
            f_uav: 400.0,
            b_ul: 500e6,
            b_bh: 120e6,
        })
        .collect();
    let energy = EnergyCoeffs::default();
    let mut rng = Rng64::new(seed);

    let stations = loop {
        let stations: Vec<Station> = (0..6)
            .map(|id| {
                let x = rng.range(-SIDE / 2.0, SIDE / 2.0);
                let y = rng.range(-SIDE / 2.0, SIDE / 2.0);
                Station {
                    id,
                    pos: [x, y],
                    value: 0.0,
                    weight: 0.0,
                    min_service: MIN_SERVICE[id],
                    isds: vec![id],
                }
            })
            .collect();
        let mut stations = stations;
        for s in stations.iter_mut() {
            s.value = rng.int_range(1, 10) as f64;
        }
        for s in stations.iter_mut() {
            s.weight = rng.range(5.0, 10.0);
        }
        let dist = euclidean_matrix([0.0, 0.0], &stations);
        if full_collection_feasible(&stations, &uavs, &dist, &energy, grid.t_mission) {
            break stations;
        }
    };
    let isds: Vec<IsdSpec> = (0..6)
        .map(|id| IsdSpec {
            id,
            station: id,
            f_loc: 300.0,
            deadline_dur: 80.0,
        })
        .collect();
    let task_model = TaskModel {
        n_tasks: 1920,
        deadline_lo: 20.0,
        deadline_hi: 80.0,
        workload_mean: 10.0,
        workload_sd: 2.0,
        workload_min: 1.0,
        bits_mean: 1e5,
        bits_sd: 2e4,
        bits_min: 1e3,
    };
    let tasks = task_model.sample(grid.n_slot, isds.len(), &mut rng);
    let dist = euclidean_matrix([0.0, 0.0], &stations);
    Instance {
        schema: INSTANCE_SCHEMA.into(),
        profile: "paper".into(),
        seed,
        grid,
        depot: [0.0, 0.0],
        stations,
        uavs,
        isds,
        tasks,
        energy,
        rates: RateFactors::default(),
        weights: ObjectiveWeights::default(),
        cloud_cap: 400.0,
        dist,
        task_model: Some(task_model),
    }
}

/// Small single-UAV scenarios sized for exhaustive search.
///
/// `mixed` draws the station count in {1, 2}, task count in {0..=3} and slot
/// count in [10, 30]; otherwise the shape is fixed at 2 stations, 3 tasks,
/// 30 slots.
fn tiny_profile(seed: u64, mixed: bool) -> Instance {
    let mut rng = Rng64::new(seed ^ 0x7141);
    let (n_st, n_tasks, n_slot) = if mixed {
        (1 + rng.index(2), rng.index(4), 10 + rng.index(21))
    } else {
        (2, 3, 30)
    };
    let grid = SlotGrid::new(1.0, n_slot);
    let stations: Vec<Station> = (0..n_st)
        .map(|id| Station {
            id,
            pos: [rng.range(-50.0, 50.0), rng.range(-50.0, 50.0)],
            value: rng.int_range(1, 10) as f64,
            weight: rng.range(10.0, 20.0),
            min_service: rng.int_range(4, 8) as f64,
            isds: vec![id],
        })
        .collect();
    let uavs = vec![UavSpec {
        id: 0,
        speed: 10.0,
        dist_budget: 1000.0,
        payload_cap: 30.0,
        energy_budget: 100_000.0,
        f_uav: 6.0,
        b_ul: 200.0,
        b_bh: 100.0,
    }];
    let isds: Vec<IsdSpec> = (0..n_st)
        .map(|id| IsdSpec {
            id,
            station: id,
            f_loc: 2.0,
            deadline_dur: 12.0,
        })
        .collect();
    let task_model = TaskModel {
        n_tasks,
        deadline_lo: 4.0,
        deadline_hi: 12.0,
        workload_mean: 5.0,
        workload_sd: 1.5,
        workload_min: 1.0,
        bits_mean: 150.0,
        bits_sd: 40.0,
        bits_min: 20.0,
    };
    let tasks = task_model.sample(n_slot, n_st, &mut rng);
    let dist = euclidean_matrix([0.0, 0.0], &stations);
    Instance {
        schema: INSTANCE_SCHEMA.into(),
        profile: if mixed { "tiny-mixed" } else { "tiny" }.into(),
        seed,
        grid,
        depot: [0.0, 0.0],
        stations,
        uavs,
        isds,
        tasks,
        energy: EnergyCoeffs::default(),
        rates: RateFactors::default(),
        weights: ObjectiveWeights::default(),
        cloud_cap: 8.0,
        dist,
        task_model: Some(task_model),
    }
}

/// Whether some assignment of every station to a single closed tour per UAV
/// respects time, distance, payload and flight-energy budgets.
fn full_collection_feasible(
    stations: &[Station],
    uavs: &[UavSpec],
    dist: &[Vec<f64>],
    energy: &EnergyCoeffs,
    t_mission: f64,
) -> bool {
    let m = stations.len();
    let u = uavs.len();
    let combos = u.pow(m as u32);
    (0..combos).any(|code| {
        let mut groups = vec![Vec::new(); u];
        let mut c = code;
        for s in 0..m {
            groups[c % u].push(s);
            c /= u;
        }
        groups.iter().zip(uavs).all(|(g, spec)| {
            let payload: f64 = g.iter().map(|&s| stations[s].weight).sum();
            payload <= spec.payload_cap
                && best_tour(g, stations, spec, dist, energy, t_mission).is_some()
        })
    })
}

fn best_tour(
    group: &[usize],
    stations: &[Station],
    spec: &UavSpec,
    dist: &[Vec<f64>],
    energy: &EnergyCoeffs,
    t_mission: f64,
) -> Option<f64> {
    let mut order = group.to_vec();
    let mut best: Option<f64> = None;
    permute(&mut order, 0, &mut |ord| {
        let mut node = 0;
        let mut len = 0.0;
        let mut service = 0.0;
        for &s in ord {
            len += dist[node][s + 1];
            service += stations[s].min_service;
            node = s + 1;
        }
        len += dist[node][0];
        let time = len / spec.speed + service;
        let e = energy.a_fly * len + energy.a_hov * service;
        if time <= t_mission && len <= spec.dist_budget && e <= spec.energy_budget {
            best = Some(best.map_or(time, |b: f64| b.min(time)));
        }
    });
    best
}

pub(crate) fn permute(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}
