//! Independent reference evaluators shared by the integration tests.
//!
//! Everything here is written from the model definitions directly and does
//! not call the library's own checkers, ledgers or objective code.
#![allow(dead_code)]

use std::collections::BTreeSet;

use uavmec::mec::{Alloc, Component, MecConstraint, Mode, TaskRecord};
use uavmec::model::Instance;
use uavmec::routing::{RouteConstraint, RoutePlan};
use uavmec::trace::EpisodeTrace;

const TOL: f64 = 1e-9;

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Position of routing node `i` (0 = depot).
fn node_pos(inst: &Instance, i: usize) -> [f64; 2] {
    if i == 0 {
        inst.depot
    } else {
        inst.stations[i - 1].pos
    }
}

// ---------------------------------------------------------------------------
// Routing

/// Violated constraint families from the arc/assignment variables of a plan.
///
/// The plan is first lowered to `x[u][i][j]` arc counts and `y[u][m]`
/// assignment indicators; each family is then checked on those variables
/// and on the per-visit times.
pub fn route_violations(inst: &Instance, plan: &RoutePlan) -> BTreeSet<RouteConstraint> {
    let n_nodes = inst.n_stations() + 1;
    let mut out = BTreeSet::new();
    let mut y = vec![vec![0usize; inst.n_stations()]; plan.routes.len()];
    for (u, r) in plan.routes.iter().enumerate() {
        for v in &r.visits {
            y[u][v.station] += 1;
        }
    }
    for m in 0..inst.n_stations() {
        if (0..plan.routes.len()).filter(|&u| y[u][m] > 0).count() > 1 {
            out.insert(RouteConstraint::StationAssignment);
        }
    }
    for (u, r) in plan.routes.iter().enumerate() {
        let spec = &inst.uavs[u];
        let mut nodes = vec![0];
        nodes.extend(r.visits.iter().map(|v| v.station + 1));
        if nodes.len() > 1 {
            nodes.push(0);
        }
        let mut x = vec![vec![0usize; n_nodes]; n_nodes];
        for w in nodes.windows(2) {
            x[w[0]][w[1]] += 1;
        }
        for m in 0..inst.n_stations() {
            let indeg: usize = (0..n_nodes).map(|i| x[i][m + 1]).sum();
            let outdeg: usize = (0..n_nodes).map(|j| x[m + 1][j]).sum();
            let assigned = usize::from(y[u][m] > 0);
            if indeg != assigned || outdeg != assigned {
                out.insert(RouteConstraint::RouteConsistency);
            }
        }
        let leave: usize = x[0].iter().sum();
        let enter: usize = (0..n_nodes).map(|i| x[i][0]).sum();
        if leave != enter || leave > 1 {
            out.insert(RouteConstraint::DepotBalance);
        }
        let payload: f64 = (0..inst.n_stations())
            .filter(|&m| y[u][m] > 0)
            .map(|m| inst.stations[m].weight)
            .sum();
        if payload > spec.payload_cap + TOL {
            out.insert(RouteConstraint::Payload);
        }
        let mut length = 0.0;
        for i in 0..n_nodes {
            for j in 0..n_nodes {
                length += x[i][j] as f64 * dist(node_pos(inst, i), node_pos(inst, j));
            }
        }
        if length > spec.dist_budget + TOL {
            out.insert(RouteConstraint::Distance);
        }
        if r.depart != 0.0 || r.ret > inst.grid.t_mission + TOL {
            out.insert(RouteConstraint::Horizon);
        }
        // times per position along the tour: (arrival, departure)
        let mut times = vec![(r.depart, r.depart)];
        times.extend(r.visits.iter().map(|v| (v.arr, v.dep)));
        if nodes.len() > 1 {
            times.push((r.ret, r.ret));
        }
        for p in 1..nodes.len() {
            let (i, j) = (nodes[p - 1], nodes[p]);
            let travel = dist(node_pos(inst, i), node_pos(inst, j)) / spec.speed;
            if times[p].0 < times[p - 1].1 + travel - TOL {
                out.insert(match (i, j) {
                    (0, _) => RouteConstraint::DepotLeg,
                    (_, 0) => RouteConstraint::ReturnLeg,
                    _ => RouteConstraint::StationLeg,
                });
            }
        }
        for v in &r.visits {
            if v.dep - v.arr < inst.stations[v.station].min_service - TOL {
                out.insert(RouteConstraint::MinService);
            }
        }
    }
    out
}

/// `serving[u][t]`: station whose window holds slot `t` for UAV `u`.
///
/// Slot `t` belongs to a visit when its start time lies in `[arr, dep]`;
/// a slot covered by two visits belongs to the earlier one.
pub fn windows(inst: &Instance, plan: &RoutePlan) -> Vec<Vec<Option<usize>>> {
    let d = inst.grid.delta;
    plan.routes
        .iter()
        .map(|r| {
            (0..inst.grid.n_slot)
                .map(|t| {
                    let start = t as f64 * d;
                    r.visits
                        .iter()
                        .find(|v| start >= v.arr - TOL * d && start <= v.dep + TOL * d)
                        .map(|v| v.station)
                })
                .collect()
        })
        .collect()
}

/// Flight plus hover energy per UAV from positions and visit times.
pub fn flight_energy(inst: &Instance, plan: &RoutePlan) -> Vec<f64> {
    plan.routes
        .iter()
        .map(|r| {
            let mut pos = inst.depot;
            let mut len = 0.0;
            let mut hover = 0.0;
            for v in &r.visits {
                let p = inst.stations[v.station].pos;
                len += dist(pos, p);
                pos = p;
                hover += v.dep - v.arr;
            }
            len += dist(pos, inst.depot);
            inst.energy.a_fly * len + inst.energy.a_hov * hover
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Admission

/// Outcome of one component of one proposal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Verdict {
    Accepted,
    Rejected(MecConstraint),
}

/// Task state as the admission simulator sees it.
#[derive(Clone, Debug)]
pub struct SimTask {
    pub isd: usize,
    pub gen_slot: usize,
    pub workload: f64,
    pub bits: f64,
    pub mode: Mode,
    pub done: [f64; 3],
    pub complete: Option<usize>,
}

/// Straight-line admission simulator over a fixed window table.
pub struct AdmissionSim<'a> {
    pub inst: &'a Instance,
    pub serving: Vec<Vec<Option<usize>>>,
    pub tasks: Vec<SimTask>,
    /// Remaining compute-plus-comm energy per UAV; `None` when ungated.
    pub energy_left: Option<Vec<f64>>,
    slot: usize,
    /// Current-slot usage: local per ISD, then per UAV compute, uplink,
    /// backhaul, and the shared cloud.
    loc: Vec<f64>,
    uav: Vec<f64>,
    ul: Vec<f64>,
    bh: Vec<f64>,
    cloud: f64,
}

impl<'a> AdmissionSim<'a> {
    pub fn new(inst: &'a Instance, plan: &RoutePlan, gated: bool) -> Self {
        let energy_left = gated.then(|| {
            flight_energy(inst, plan)
                .iter()
                .zip(&inst.uavs)
                .map(|(f, u)| (u.energy_budget - f).max(0.0))
                .collect()
        });
        Self {
            inst,
            serving: windows(inst, plan),
            tasks: inst
                .tasks
                .iter()
                .map(|t| SimTask {
                    isd: t.isd,
                    gen_slot: t.gen_slot,
                    workload: t.workload,
                    bits: t.input_bits,
                    mode: Mode::Unassigned,
                    done: [0.0; 3],
                    complete: None,
                })
                .collect(),
            energy_left,
            slot: usize::MAX,
            loc: vec![0.0; inst.n_isds()],
            uav: vec![0.0; inst.n_uavs()],
            ul: vec![0.0; inst.n_uavs()],
            bh: vec![0.0; inst.n_uavs()],
            cloud: 0.0,
        }
    }

    fn station(&self, k: usize) -> usize {
        self.inst.isds[self.tasks[k].isd].station
    }

    /// Whether a first-hop UAV mode can still be bound at this point.
    pub fn mode_allowed(&self, k: usize, mode: Mode) -> bool {
        match mode {
            Mode::Unassigned => false,
            Mode::Local => true,
            Mode::OnUav(u) | Mode::CloudVia(u) => {
                let m = self.station(k);
                (self.tasks[k].gen_slot..self.inst.grid.n_slot).any(|t| self.serving[u][t] == Some(m))
            }
        }
    }

    /// Admits one proposal at slot `t`; returns the verdict per component
    /// (`None` for a zero request).
    pub fn propose(&mut self, t: usize, k: usize, a: Alloc) -> [Option<Verdict>; 3] {
        if t != self.slot {
            self.slot = t;
            self.loc.iter_mut().for_each(|x| *x = 0.0);
            for v in [&mut self.uav, &mut self.ul, &mut self.bh] {
                v.iter_mut().for_each(|x| *x = 0.0);
            }
            self.cloud = 0.0;
        }
        let inst = self.inst;
        let d = inst.grid.delta;
        let m = self.station(k);
        let task = self.tasks[k].clone();
        let amounts = [a.cmp, a.ul, a.bh];
        let mut out = [None; 3];
        if amounts.iter().all(|&x| x == 0.0) {
            return out;
        }
        let fits = |used: f64, x: f64, cap: f64| used + x <= cap * (1.0 + 1e-12) + 1e-12;
        let hop = task.mode.first_hop();
        let in_window = hop.is_some_and(|u| self.serving[u][t] == Some(m));
        for c in 0..3 {
            let x = amounts[c];
            if x <= 0.0 {
                continue;
            }
            // every failing condition, in precedence order
            let mut failing: Vec<MecConstraint> = Vec::new();
            if task.complete.is_some() {
                failing.push(MecConstraint::AfterCompletion);
            }
            let uses = match c {
                0 => task.mode != Mode::Unassigned,
                1 => hop.is_some(),
                _ => matches!(task.mode, Mode::CloudVia(_)),
            };
            if !uses {
                failing.push(MecConstraint::ModeGate);
            }
            let windowed = !(c == 0 && matches!(task.mode, Mode::Local | Mode::CloudVia(_)));
            if uses && windowed && !in_window {
                failing.push(MecConstraint::ServiceWindow);
            }
            let mut energy = 0.0;
            if uses {
                let (cap_ok, cap_id) = match (c, task.mode) {
                    (0, Mode::Local) => (
                        fits(self.loc[task.isd], x, inst.isds[task.isd].f_loc),
                        MecConstraint::LocalCapacity,
                    ),
                    (0, Mode::OnUav(u)) => (fits(self.uav[u], x, inst.uavs[u].f_uav), MecConstraint::UavCapacity),
                    (0, _) => (fits(self.cloud, x, inst.cloud_cap), MecConstraint::CloudCapacity),
                    (1, _) => {
                        let u = hop.unwrap();
                        (fits(self.ul[u], x, inst.uavs[u].b_ul), MecConstraint::UplinkCapacity)
                    }
                    _ => {
                        let u = hop.unwrap();
                        (fits(self.bh[u], x, inst.uavs[u].b_bh), MecConstraint::BackhaulCapacity)
                    }
                };
                if !cap_ok {
                    failing.push(cap_id);
                }
                energy = match (c, task.mode) {
                    (0, Mode::OnUav(_)) => inst.energy.a_cmp * x * d,
                    (0, _) => 0.0,
                    (1, _) => inst.energy.a_ul * inst.rates.ul(task.isd, t, hop.unwrap()) * x * d,
                    _ => inst.energy.a_bh * inst.rates.bh(t, hop.unwrap()) * x * d,
                };
                if let (Some(left), Some(u)) = (&self.energy_left, hop) {
                    if energy > 0.0 && energy > left[u] + 1e-9 {
                        failing.push(MecConstraint::EnergyBudget);
                    }
                }
            }
            out[c] = Some(match failing.first() {
                Some(&f) => Verdict::Rejected(f),
                None => {
                    let tk = &mut self.tasks[k];
                    match (c, tk.mode) {
                        (0, Mode::Local) => self.loc[tk.isd] += x,
                        (0, Mode::OnUav(u)) => self.uav[u] += x,
                        (0, _) => self.cloud += x,
                        (1, _) => self.ul[hop.unwrap()] += x,
                        _ => self.bh[hop.unwrap()] += x,
                    }
                    tk.done[c] += match c {
                        0 => x * d,
                        1 => inst.rates.ul(tk.isd, t, hop.unwrap()) * x * d,
                        _ => inst.rates.bh(t, hop.unwrap()) * x * d,
                    };
                    if let (Some(left), Some(u)) = (&mut self.energy_left, hop) {
                        left[u] -= energy;
                    }
                    Verdict::Accepted
                }
            });
        }
        out
    }

    /// End-of-slot completion check.
    pub fn close_slot(&mut self, t: usize) {
        for tk in &mut self.tasks {
            if tk.complete.is_some() || tk.mode == Mode::Unassigned {
                continue;
            }
            let enough = |done: f64, need: f64| done >= need * (1.0 - 1e-9);
            let ok = enough(tk.done[0], tk.workload)
                && (tk.mode.first_hop().is_none() || enough(tk.done[1], tk.bits))
                && (!matches!(tk.mode, Mode::CloudVia(_)) || enough(tk.done[2], tk.bits));
            if ok {
                tk.complete = Some(t);
            }
        }
    }
}

pub fn component_index(c: Component) -> usize {
    match c {
        Component::Cmp => 0,
        Component::Ul => 1,
        Component::Bh => 2,
    }
}

// ---------------------------------------------------------------------------
// Trace re-summation

/// Per-UAV `(fly, cmp, com)` energy re-summed from the task allocations.
pub fn trace_energy(tr: &EpisodeTrace) -> Vec<[f64; 3]> {
    let inst = &tr.instance;
    let d = inst.grid.delta;
    let fly = flight_energy(inst, &tr.plan);
    let mut out: Vec<[f64; 3]> = fly.into_iter().map(|f| [f, 0.0, 0.0]).collect();
    for rec in &tr.records {
        for &(t, a) in &rec.alloc {
            match rec.mode {
                Mode::OnUav(u) => {
                    out[u][1] += inst.energy.a_cmp * a.cmp * d;
                    out[u][2] += inst.energy.a_ul * inst.rates.ul(rec.spec.isd, t, u) * a.ul * d;
                }
                Mode::CloudVia(u) => {
                    out[u][2] += inst.energy.a_ul * inst.rates.ul(rec.spec.isd, t, u) * a.ul * d;
                    out[u][2] += inst.energy.a_bh * inst.rates.bh(t, u) * a.bh * d;
                }
                _ => {}
            }
        }
    }
    out
}

/// Completion slot of a record recomputed from its allocations.
fn completion_slot(inst: &Instance, rec: &TaskRecord) -> Option<usize> {
    let d = inst.grid.delta;
    let u = rec.mode.first_hop();
    let mut done = [0.0; 3];
    for &(t, a) in &rec.alloc {
        done[0] += a.cmp * d;
        if let Some(u) = u {
            done[1] += inst.rates.ul(rec.spec.isd, t, u) * a.ul * d;
            done[2] += inst.rates.bh(t, u) * a.bh * d;
        }
        let enough = |x: f64, need: f64| x >= need * (1.0 - 1e-9);
        let ok = rec.mode != Mode::Unassigned
            && enough(done[0], rec.spec.workload)
            && (u.is_none() || enough(done[1], rec.spec.input_bits))
            && (!matches!(rec.mode, Mode::CloudVia(_)) || enough(done[2], rec.spec.input_bits));
        if ok {
            return Some(t);
        }
    }
    None
}

/// Hand-expanded episode objective from the plan and the task allocations.
///
/// Returns `(total, [collection, ontime, miss, flow, resource])` with the
/// raw (unweighted) terms.
pub fn trace_objective(tr: &EpisodeTrace) -> (f64, [f64; 5]) {
    let inst = &tr.instance;
    let d = inst.grid.delta;
    let w = &inst.weights;
    let mut collected = vec![false; inst.n_stations()];
    for r in &tr.plan.routes {
        for v in &r.visits {
            collected[v.station] = true;
        }
    }
    let collection: f64 = (0..inst.n_stations())
        .filter(|&m| collected[m])
        .map(|m| inst.stations[m].value)
        .sum();
    let (mut ontime, mut miss, mut flow) = (0.0, 0.0, 0.0);
    for rec in &tr.records {
        let deadline = rec.spec.deadline.unwrap_or(inst.isds[rec.spec.isd].deadline_dur);
        let finish = completion_slot(inst, rec).map(|c| (c + 1) as f64 * d);
        let z = finish.is_some_and(|f| f <= rec.spec.gen_slot as f64 * d + deadline + 1e-9);
        if z {
            ontime += 1.0;
        } else {
            miss += 1.0;
        }
        flow += finish.unwrap_or(inst.grid.t_mission) - rec.spec.gen_slot as f64 * d;
    }
    let cmp_cap: f64 = inst.isds.iter().map(|k| k.f_loc).sum::<f64>()
        + inst.uavs.iter().map(|u| u.f_uav).sum::<f64>()
        + inst.cloud_cap;
    let com_cap: f64 = inst.uavs.iter().map(|u| u.b_ul + u.b_bh).sum();
    let mut resource = 0.0;
    for t in 0..inst.grid.n_slot {
        let mut c = 0.0;
        let mut m = 0.0;
        for rec in &tr.records {
            for &(s, a) in &rec.alloc {
                if s == t {
                    c += a.cmp;
                    m += a.ul + a.bh;
                }
            }
        }
        resource += (c / cmp_cap).min(1.0) + (m / com_cap).min(1.0);
    }
    let total = w.w_col * collection + w.w_cmp * ontime - w.w_miss * miss - w.w_flow * flow - w.w_res * resource;
    (total, [collection, ontime, miss, flow, resource])
}

/// Relative difference with a unit floor on the scale.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

// ---------------------------------------------------------------------------
// Learning

/// GAE straight from the definition: `A_t = sum_l (gamma lambda)^l delta_{t+l}`
/// within the episode containing `t`.
pub fn gae_double_loop(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = rewards.len();
    let next_value = |s: usize| {
        if dones[s] {
            0.0
        } else if s + 1 == n {
            last_value
        } else {
            values[s + 1]
        }
    };
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            for s in t..n {
                let td = rewards[s] + gamma * next_value(s) - values[s];
                sum += (gamma * lambda).powi((s - t) as i32) * td;
                if dones[s] {
                    break;
                }
            }
            sum
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Retrieval

/// Indices of the `k` most similar rows after a full sort by
/// (cosine desc, index asc).
pub fn full_sort_top_k(query: &[f64], rows: &[Vec<f64>], k: usize) -> Vec<usize> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut scored: Vec<(f64, usize)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let dot: f64 = query.iter().zip(r).map(|(a, b)| a * b).sum();
            (dot / (norm(query) * norm(r)), i)
        })
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    scored.into_iter().take(k).map(|s| s.1).collect()
}

// ---------------------------------------------------------------------------
// Randomized agreement harnesses

use std::collections::BTreeMap;

use uavmec::mec::{apply_slot, assign_mode, check_completion, finalize, SlotLedger};
use uavmec::model::generate_scenario;
use uavmec::rng::Rng64;
use uavmec::routing::{check_route, compute_timing, windows_unchecked};

/// Agreement tally; `violated` counts how often each family fired.
#[derive(Debug, Default)]
pub struct Tally {
    pub cases: usize,
    pub agree: usize,
    pub mismatches: Vec<String>,
    pub violated: BTreeMap<String, usize>,
}

impl Tally {
    fn record(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.cases += 1;
        if ok {
            self.agree += 1;
        } else if self.mismatches.len() < 10 {
            self.mismatches.push(what());
        }
    }

    pub fn all_agree(&self) -> bool {
        self.cases > 0 && self.agree == self.cases
    }
}

/// Random station order for each UAV, stations possibly shared.
fn random_seqs(rng: &mut Rng64, n_st: usize, n_u: usize) -> Vec<Vec<usize>> {
    (0..n_u)
        .map(|_| {
            let mut s: Vec<usize> = (0..n_st).filter(|_| rng.uniform() < 0.7).collect();
            rng.shuffle(&mut s);
            s
        })
        .collect()
}

/// Random plan with slack services, then one corruption of type `kind`.
fn corrupted_plan(inst: &mut Instance, rng: &mut Rng64, kind: usize) -> RoutePlan {
    let seqs = random_seqs(rng, inst.n_stations(), inst.n_uavs());
    let durs: Vec<Vec<f64>> = seqs
        .iter()
        .map(|s| s.iter().map(|&m| inst.stations[m].min_service + rng.range(0.0, 3.0)).collect())
        .collect();
    let mut plan = compute_timing(inst, &seqs, &durs).unwrap();
    let u = rng.index(inst.n_uavs());
    let r = &mut plan.routes[u];
    let n = r.visits.len();
    match kind {
        1 if n > 0 => {
            let i = rng.index(n);
            r.visits[i].arr -= rng.range(0.0, 4.0);
        }
        2 if n > 0 => {
            let i = rng.index(n);
            let tau = inst.stations[r.visits[i].station].min_service;
            r.visits[i].dep = r.visits[i].arr + tau * rng.uniform();
        }
        3 if n > 0 => {
            let v = r.visits[rng.index(n)].clone();
            let at = rng.index(n + 1);
            r.visits.insert(at, v);
        }
        4 => r.depart = rng.range(0.0, 2.0),
        5 => r.ret = inst.grid.t_mission + rng.range(-1.0, 3.0),
        6 if n > 0 => r.ret -= rng.range(0.0, 4.0),
        7 => inst.uavs[u].payload_cap = rng.range(5.0, 35.0),
        8 => inst.uavs[u].dist_budget = rng.range(10.0, 300.0),
        9 if n > 0 => {
            // sub-tolerance jitter must not change any verdict
            let i = rng.index(n);
            r.visits[i].arr += rng.range(-1e-12, 1e-12);
        }
        _ => {}
    }
    plan
}

/// `check_route` against [`route_violations`] on random and corrupted plans.
///
/// `extra_uav` duplicates the UAV so shared stations can occur.
pub fn route_agreement(seeds: std::ops::Range<u64>, plans_per_seed: usize, extra_uav: bool) -> Tally {
    let mut tally = Tally::default();
    for seed in seeds {
        let base = generate_scenario(seed, "tiny-mixed").unwrap();
        let mut rng = Rng64::derive(seed, 0xc0de);
        for p in 0..plans_per_seed {
            let mut inst = base.clone();
            if extra_uav {
                let mut twin = inst.uavs[0].clone();
                twin.id = 1;
                inst.uavs.push(twin);
            }
            let plan = corrupted_plan(&mut inst, &mut rng, p % 10);
            let expected = route_violations(&inst, &plan);
            let report = check_route(&inst, &plan).unwrap();
            let got: BTreeSet<RouteConstraint> = report.violations.iter().map(|v| v.constraint).collect();
            for c in &expected {
                *tally.violated.entry(c.to_string()).or_default() += 1;
            }
            tally.record(got == expected, || format!("seed {seed} plan {p}: expected {expected:?}, got {got:?}"));
        }
    }
    tally
}

const ALL_MODES: usize = 5;

fn mode_from(code: usize) -> Mode {
    match code {
        0 => Mode::Local,
        1 => Mode::OnUav(0),
        2 => Mode::CloudVia(0),
        3 => Mode::Unassigned,
        _ => Mode::Local,
    }
}

/// A proposal amount that lands below, on, or above a capacity.
fn amount(rng: &mut Rng64, cap: f64) -> f64 {
    match rng.index(6) {
        0 => 0.0,
        1 => cap,
        2 => cap / 2.0,
        3 => cap * rng.range(1.0, 1.6),
        _ => cap * rng.uniform(),
    }
}

/// `apply_slot` against [`AdmissionSim`] under adversarial proposals.
///
/// Per seed: a random feasible tour, random mode bindings (some refused),
/// and proposals with random modes, over-cap amounts and closed windows.
/// Every component verdict, every cumulant and every completion slot is
/// compared. With `tight_energy` the UAV budget barely covers flight.
pub fn admission_agreement(seeds: std::ops::Range<u64>, tight_energy: bool) -> Tally {
    let mut tally = Tally::default();
    for seed in seeds {
        let mut inst = generate_scenario(seed, "tiny-mixed").unwrap();
        let mut rng = Rng64::derive(seed, 0xad17);
        // more tasks than the profile draws, to stress shared capacity
        if let Some(model) = inst.task_model.clone() {
            let mut tasks = inst.tasks.clone();
            tasks.extend(model.sample(inst.grid.n_slot, inst.n_isds(), &mut rng).into_iter().take(3));
            tasks.sort_by_key(|t| t.gen_slot);
            inst.tasks = tasks;
        }
        let n_st = inst.n_stations();
        let mut seq: Vec<usize> = (0..n_st).collect();
        rng.shuffle(&mut seq);
        let durs = seq.iter().map(|&m| inst.stations[m].min_service + rng.range(0.0, 6.0)).collect();
        let plan = compute_timing(&inst, &[seq], &[durs]).unwrap();
        if tight_energy {
            let fly = flight_energy(&inst, &plan)[0];
            inst.uavs[0].energy_budget = fly + rng.range(0.0, 5.0);
        }
        let table = windows_unchecked(&inst, &plan);
        let mut sim = AdmissionSim::new(&inst, &plan, true);
        let mut ledger = SlotLedger::with_energy_gate(&inst, &plan);
        let mut recs: Vec<TaskRecord> = inst
            .tasks
            .iter()
            .map(|t| TaskRecord::new(t.clone(), inst.grid.t_mission))
            .collect();

        for t in 0..inst.grid.n_slot {
            // window table agreement
            let lib = table.serving(0, t);
            tally.record(lib == sim.serving[0][t], || format!("seed {seed} slot {t}: window {lib:?} vs {:?}", sim.serving[0][t]));

            // bind modes for tasks generated by now
            for k in 0..recs.len() {
                if recs[k].spec.gen_slot > t || recs[k].mode.is_assigned() || rng.uniform() < 0.5 {
                    continue;
                }
                let mode = mode_from(rng.index(ALL_MODES));
                let expect_ok = sim.mode_allowed(k, mode);
                let got_ok = assign_mode(&inst, &mut recs[k], k, mode, &table).is_ok();
                tally.record(expect_ok == got_ok, || format!("seed {seed} slot {t} task {k}: bind {mode} expected {expect_ok}"));
                if expect_ok && got_ok {
                    sim.tasks[k].mode = mode;
                }
            }

            // adversarial proposals in random order, repeats allowed
            let live: Vec<usize> = (0..recs.len()).filter(|&k| recs[k].spec.gen_slot <= t).collect();
            let mut proposals = Vec::new();
            for _ in 0..live.len() * 2 {
                if live.is_empty() {
                    break;
                }
                let k = live[rng.index(live.len())];
                let isd = recs[k].spec.isd;
                let cmp_cap = if rng.uniform() < 0.5 { inst.isds[isd].f_loc } else { inst.uavs[0].f_uav };
                let a = Alloc::new(
                    amount(&mut rng, cmp_cap),
                    amount(&mut rng, inst.uavs[0].b_ul),
                    amount(&mut rng, inst.uavs[0].b_bh),
                );
                proposals.push((k, a));
            }
            let rejected = apply_slot(&inst, t, &mut ledger, &mut recs, &proposals, &table).unwrap();
            let mut got: Vec<(usize, usize, MecConstraint)> = rejected
                .iter()
                .map(|r| (r.task, component_index(r.component), r.constraint))
                .collect();
            let mut expected = Vec::new();
            for &(k, a) in &proposals {
                for (c, v) in sim.propose(t, k, a).iter().enumerate() {
                    if let Some(Verdict::Rejected(why)) = v {
                        expected.push((k, c, *why));
                        *tally.violated.entry(why.to_string()).or_default() += 1;
                    }
                }
            }
            got.sort_by_key(|x| (x.0, x.1, x.2 as u8));
            expected.sort_by_key(|x| (x.0, x.1, x.2 as u8));
            tally.record(got == expected, || format!("seed {seed} slot {t}: rejections {got:?} vs {expected:?}"));

            for rec in recs.iter_mut() {
                check_completion(&inst, rec, t);
            }
            sim.close_slot(t);
            for (k, (rec, st)) in recs.iter().zip(&sim.tasks).enumerate() {
                let same = rec.complete_slot == st.complete
                    && (rec.done_cmp - st.done[0]).abs() <= 1e-9 * st.done[0].max(1.0)
                    && (rec.done_ul - st.done[1]).abs() <= 1e-9 * st.done[1].max(1.0)
                    && (rec.done_bh - st.done[2]).abs() <= 1e-9 * st.done[2].max(1.0);
                tally.record(same, || format!("seed {seed} slot {t} task {k}: record diverged"));
            }
        }
        finalize(&inst, &mut ledger, &mut recs);
        if let Some(left) = &sim.energy_left {
            let lib_left = ledger.headroom(0);
            tally.record((lib_left - left[0]).abs() <= 1e-6, || format!("seed {seed}: energy headroom {lib_left} vs {}", left[0]));
        }
    }
    tally
}

/// Cap, window, temporal and energy invariants checked directly on a trace.
pub fn trace_invariants(tr: &EpisodeTrace) -> Vec<String> {
    let inst = &tr.instance;
    let mut bad = Vec::new();
    let serving = windows(inst, &tr.plan);
    let n = inst.grid.n_slot;
    let fits = |x: f64, cap: f64| x <= cap * (1.0 + 1e-9) + 1e-9;
    let mut loc = vec![vec![0.0; inst.n_isds()]; n];
    let mut uav = vec![vec![0.0; inst.n_uavs()]; n];
    let mut ul = vec![vec![0.0; inst.n_uavs()]; n];
    let mut bh = vec![vec![0.0; inst.n_uavs()]; n];
    let mut cloud = vec![0.0; n];
    for (k, rec) in tr.records.iter().enumerate() {
        let m = inst.isds[rec.spec.isd].station;
        let done_at = completion_slot(inst, rec);
        if done_at != rec.complete_slot {
            bad.push(format!("task {k}: completion {:?} vs recomputed {done_at:?}", rec.complete_slot));
        }
        for &(t, a) in &rec.alloc {
            if t < rec.spec.gen_slot {
                bad.push(format!("task {k}: allocation at {t} before generation"));
            }
            if done_at.is_some_and(|c| t > c) {
                bad.push(format!("task {k}: allocation at {t} after completion"));
            }
            match rec.mode {
                Mode::Unassigned => bad.push(format!("task {k}: allocation without a mode")),
                Mode::Local => {
                    loc[t][rec.spec.isd] += a.cmp;
                    if a.ul > 0.0 || a.bh > 0.0 {
                        bad.push(format!("task {k}: local task uses links"));
                    }
                }
                Mode::OnUav(u) | Mode::CloudVia(u) => {
                    let open = serving[u][t] == Some(m);
                    let windowed = a.ul > 0.0 || a.bh > 0.0 || matches!(rec.mode, Mode::OnUav(_)) && a.cmp > 0.0;
                    if windowed && !open {
                        bad.push(format!("task {k}: UAV {u} allocation at {t} outside the window"));
                    }
                    ul[t][u] += a.ul;
                    if matches!(rec.mode, Mode::OnUav(_)) {
                        uav[t][u] += a.cmp;
                        if a.bh > 0.0 {
                            bad.push(format!("task {k}: on-UAV task uses the backhaul"));
                        }
                    } else {
                        cloud[t] += a.cmp;
                        bh[t][u] += a.bh;
                    }
                }
            }
        }
    }
    for t in 0..n {
        for (k, isd) in inst.isds.iter().enumerate() {
            if !fits(loc[t][k], isd.f_loc) {
                bad.push(format!("slot {t}: ISD {k} local compute {} > {}", loc[t][k], isd.f_loc));
            }
        }
        for (u, spec) in inst.uavs.iter().enumerate() {
            if !fits(uav[t][u], spec.f_uav) || !fits(ul[t][u], spec.b_ul) || !fits(bh[t][u], spec.b_bh) {
                bad.push(format!("slot {t}: UAV {u} capacity exceeded"));
            }
        }
        if !fits(cloud[t], inst.cloud_cap) {
            bad.push(format!("slot {t}: cloud {} > {}", cloud[t], inst.cloud_cap));
        }
    }
    for (u, e) in trace_energy(tr).iter().enumerate() {
        let total = e[0] + e[1] + e[2];
        if total > inst.uavs[u].energy_budget * (1.0 + 1e-9) {
            bad.push(format!("UAV {u}: energy {total} over budget"));
        }
    }
    bad
}
