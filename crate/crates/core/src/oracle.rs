//! Reference solvers: exhaustive search on tiny instances, a greedy
//! heuristic and a masked-uniform random policy.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{
    level_alloc_parts, make_handoff, mode_of_option, offload_feasible, option_of_mode, EnvConfig, Handoff,
    LowerAction, LowerEnv, RowDecision, UpperAction, UpperEnv,
};
use crate::error::{Error, Result};
use crate::exec::{map_slice, Execution};
use crate::mec::{le_cap, reached, Alloc, Mode, TaskRecord};
use crate::model::{Instance, TaskSpec};
use crate::objective::{evaluate, ObjectiveBreakdown};
use crate::rng::Rng64;
use crate::routing::{check_route, compute_timing_min, flight_energy, RoutePlan, ServiceWindowTable};
use crate::trace::EpisodeTrace;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TinyLimits {
    pub max_stations: usize,
    pub max_uavs: usize,
    pub max_tasks: usize,
    pub max_slots: usize,
    /// Cap on evaluated joint slot decisions across the whole search.
    pub node_budget: u64,
}

impl Default for TinyLimits {
    fn default() -> Self {
        Self {
            max_stations: 2,
            max_uavs: 1,
            max_tasks: 3,
            max_slots: 30,
            node_budget: 100_000_000,
        }
    }
}

/// One task's decision in one slot, in the lower option alphabet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotDecision {
    pub task: usize,
    pub option: usize,
    pub alpha: usize,
    pub beta: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub slots: Vec<Vec<SlotDecision>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BruteForceResult {
    pub value: f64,
    pub plan: RoutePlan,
    pub schedule: Schedule,
    pub plans_searched: usize,
    pub nodes: u64,
}

/// A finished two-layer episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub plan: RoutePlan,
    pub trace: EpisodeTrace,
    pub objective: ObjectiveBreakdown,
    pub upper_return: f64,
    pub lower_return: f64,
}

impl EpisodeOutcome {
    pub fn ontime_ratio(&self) -> f64 {
        let n = self.trace.records.len();
        if n == 0 {
            return 1.0;
        }
        self.trace.records.iter().filter(|r| r.z).count() as f64 / n as f64
    }
}

// ---------------------------------------------------------------------------
// Route enumeration

/// Every single-tour plan the upper environment can produce: disjoint
/// ordered station sequences per UAV, minimum service, earliest timing,
/// within every routing budget and the flight-energy budget.
pub fn feasible_plans(inst: &Instance) -> Result<Vec<RoutePlan>> {
    let n_u = inst.n_uavs();
    let mut out = Vec::new();
    let mut seqs = vec![Vec::new(); n_u];
    let mut used = vec![false; inst.n_stations()];
    enumerate_plans(inst, 0, &mut seqs, &mut used, &mut out)?;
    Ok(out)
}

fn enumerate_plans(
    inst: &Instance,
    u: usize,
    seqs: &mut Vec<Vec<usize>>,
    used: &mut Vec<bool>,
    out: &mut Vec<RoutePlan>,
) -> Result<()> {
    if u == inst.n_uavs() {
        let plan = compute_timing_min(inst, seqs)?;
        let ok = check_route(inst, &plan)?.passes()
            && flight_energy(inst, &plan)
                .iter()
                .zip(&inst.uavs)
                .all(|(e, s)| *e <= s.energy_budget + 1e-9);
        if ok {
            out.push(plan);
        }
        return Ok(());
    }
    // current sequence of UAV u as-is, then every extension
    enumerate_plans(inst, u + 1, seqs, used, out)?;
    for m in 0..inst.n_stations() {
        if used[m] {
            continue;
        }
        used[m] = true;
        seqs[u].push(m);
        if prefix_ok(inst, u, &seqs[u]) {
            enumerate_plans_same(inst, u, seqs, used, out)?;
        }
        seqs[u].pop();
        used[m] = false;
    }
    Ok(())
}

// Recursion that keeps extending UAV `u` before moving on.
fn enumerate_plans_same(
    inst: &Instance,
    u: usize,
    seqs: &mut Vec<Vec<usize>>,
    used: &mut Vec<bool>,
    out: &mut Vec<RoutePlan>,
) -> Result<()> {
    enumerate_plans(inst, u, seqs, used, out).map(|_| ())
}

/// Cheap prune: a sequence whose payload already exceeds the cap cannot be
/// extended to a feasible one.
fn prefix_ok(inst: &Instance, u: usize, seq: &[usize]) -> bool {
    let w: f64 = seq.iter().map(|&m| inst.stations[m].weight).sum();
    w <= inst.uavs[u].payload_cap + 1e-9
}

// ---------------------------------------------------------------------------
// Exact slot-level search

#[derive(Clone, Debug, PartialEq)]
struct TaskState {
    mode: Mode,
    done: [f64; 3],
    complete: bool,
}

struct Search<'a> {
    inst: &'a Instance,
    cfg: &'a EnvConfig,
    windows: &'a ServiceWindowTable,
    tasks: Vec<TaskSpec>,
    last_ontime: Vec<Option<usize>>,
    residual: Vec<f64>,
    energy_binds: bool,
    cmp_cap: f64,
    com_cap: f64,
    memo: HashMap<(usize, Vec<u64>), f64>,
    nodes: u64,
    budget: u64,
}

struct Child {
    decisions: Vec<SlotDecision>,
    next: Vec<TaskState>,
    energy: Vec<f64>,
    reward: f64,
}

impl<'a> Search<'a> {
    fn new(inst: &'a Instance, cfg: &'a EnvConfig, handoff: &'a Handoff, budget: u64) -> Self {
        let mut tasks = inst.tasks.clone();
        tasks.sort_by_key(|t| t.gen_slot);
        let last_ontime = tasks.iter().map(|t| inst.last_ontime_slot(t)).collect();
        let e = &inst.energy;
        let worst: f64 = tasks
            .iter()
            .map(|t| e.a_cmp * t.workload + (e.a_ul + e.a_bh) * t.input_bits)
            .sum();
        let energy_binds = handoff.residual_energy.iter().any(|&r| r < worst + 1e-6);
        let cmp_cap = inst.isds.iter().map(|k| k.f_loc).sum::<f64>()
            + inst.uavs.iter().map(|u| u.f_uav).sum::<f64>()
            + inst.cloud_cap;
        let com_cap = inst.uavs.iter().map(|u| u.b_ul + u.b_bh).sum();
        Self {
            inst,
            cfg,
            windows: &handoff.windows,
            tasks,
            last_ontime,
            residual: handoff.residual_energy.clone(),
            energy_binds,
            cmp_cap,
            com_cap,
            memo: HashMap::new(),
            nodes: 0,
            budget,
        }
    }

    /// Objective contribution of every task when none completes.
    fn baseline(&self) -> f64 {
        let w = &self.inst.weights;
        let t_m = self.inst.grid.t_mission;
        self.tasks
            .iter()
            .map(|t| -w.w_miss - w.w_flow * (t_m - self.inst.grid.time_of(t.gen_slot)))
            .sum()
    }

    /// Gain over the baseline for completing task `i` in slot `t`.
    fn completion_gain(&self, i: usize, t: usize) -> f64 {
        let w = &self.inst.weights;
        let spec = &self.tasks[i];
        let g = &self.inst.grid;
        let done_at = g.time_of(t + 1);
        let z = done_at <= self.inst.abs_deadline(spec) + 1e-9;
        let with = if z { w.w_cmp } else { -w.w_miss } - w.w_flow * (done_at - g.time_of(spec.gen_slot));
        let without = -w.w_miss - w.w_flow * (g.t_mission - g.time_of(spec.gen_slot));
        with - without
    }

    fn closed(&self, u: usize, energy: &[f64]) -> bool {
        self.residual[u] <= 0.0 || (self.energy_binds && self.residual[u] - energy[u] <= 1e-9)
    }

    fn key(&self, t: usize, st: &[TaskState], energy: &[f64]) -> (usize, Vec<u64>) {
        let mut k = Vec::with_capacity(st.len() * 4 + energy.len());
        for s in st {
            let mode = match s.mode {
                Mode::Unassigned => 0,
                Mode::Local => 1,
                Mode::OnUav(u) => 2 + 2 * u as u64,
                Mode::CloudVia(u) => 3 + 2 * u as u64,
            };
            k.push(mode | if s.complete { 1 << 32 } else { 0 });
            if !s.complete {
                k.extend(s.done.iter().map(|d| d.to_bits()));
            }
        }
        if self.energy_binds {
            k.extend(energy.iter().map(|e| e.to_bits()));
        }
        (t, k)
    }

    fn live(&self, i: usize, t: usize, st: &[TaskState]) -> bool {
        self.tasks[i].gen_slot <= t && !st[i].complete && self.last_ontime[i].is_some_and(|l| l >= t)
    }

    fn edf_order(&self, t: usize, st: &[TaskState]) -> Vec<usize> {
        let mut q: Vec<usize> = (0..self.tasks.len()).filter(|&i| self.live(i, t, st)).collect();
        q.sort_by(|&a, &b| {
            let (sa, sb) = (&self.tasks[a], &self.tasks[b]);
            self.inst
                .abs_deadline(sa)
                .total_cmp(&self.inst.abs_deadline(sb))
                .then(sa.gen_slot.cmp(&sb.gen_slot))
                .then(sa.isd.cmp(&sb.isd))
                .then(a.cmp(&b))
        });
        q
    }

    fn open(&self, mode: Mode, i: usize, t: usize, energy: &[f64]) -> bool {
        let m = self.inst.station_of_isd(self.tasks[i].isd);
        mode.first_hop()
            .is_some_and(|u| !self.closed(u, energy) && self.windows.eta(u, m, t))
    }

    /// Distinct (decision, proposal) options for task `i` in slot `t`.
    fn options(&self, i: usize, t: usize, st: &TaskState, energy: &[f64]) -> Vec<(SlotDecision, Mode, Alloc)> {
        let n_u = self.inst.n_uavs();
        let l_q = self.cfg.l_q;
        let mut out: Vec<(SlotDecision, Mode, Alloc)> = Vec::new();
        let push = |out: &mut Vec<(SlotDecision, Mode, Alloc)>, mode: Mode, a: usize, b: usize, require_nonzero: bool| {
            let p = level_alloc_parts(
                self.inst,
                self.cfg,
                &self.tasks[i],
                mode,
                st.done,
                t,
                self.open(mode, i, t, energy),
                a,
                b,
            );
            if require_nonzero && p.is_zero() {
                return;
            }
            if out.iter().any(|(_, m, q)| *m == mode && *q == p) {
                return;
            }
            out.push((
                SlotDecision {
                    task: i,
                    option: option_of_mode(mode, n_u),
                    alpha: a,
                    beta: b,
                },
                mode,
                p,
            ));
        };
        if st.mode.is_assigned() {
            for a in 0..l_q {
                for b in 0..l_q {
                    push(&mut out, st.mode, a, b, false);
                }
            }
        } else {
            out.push((
                SlotDecision {
                    task: i,
                    option: 0,
                    alpha: 0,
                    beta: 0,
                },
                Mode::Unassigned,
                Alloc::ZERO,
            ));
            let last = self.last_ontime[i].unwrap_or(0);
            let m = self.inst.station_of_isd(self.tasks[i].isd);
            let mut modes = vec![Mode::Local];
            for u in 0..n_u {
                if !self.closed(u, energy) && self.windows.open_between(u, m, t, last) {
                    modes.push(Mode::OnUav(u));
                    modes.push(Mode::CloudVia(u));
                }
            }
            for mode in modes {
                for a in 0..l_q {
                    for b in 0..l_q {
                        push(&mut out, mode, a, b, true);
                    }
                }
            }
        }
        out
    }

    /// Admits one joint choice exactly as the slot ledger would.
    fn admit(
        &self,
        t: usize,
        st: &[TaskState],
        energy: &[f64],
        order: &[usize],
        picks: &[&(SlotDecision, Mode, Alloc)],
    ) -> Child {
        let inst = self.inst;
        let n_u = inst.n_uavs();
        let delta = inst.grid.delta;
        let e = &inst.energy;
        let mut next = st.to_vec();
        let mut energy = energy.to_vec();
        let mut used_loc = vec![0.0; inst.n_isds()];
        let mut used_uav = vec![0.0; n_u];
        let mut used_cld = 0.0;
        let mut used_ul = vec![0.0; n_u];
        let mut used_bh = vec![0.0; n_u];
        let headroom = |energy: &[f64], u: usize| self.residual[u] - energy[u];
        let fits = |h: f64, x: f64| x <= h + 1e-9;
        let mut decisions = Vec::with_capacity(picks.len());
        for (&i, pick) in order.iter().zip(picks) {
            let (dec, mode, p) = **pick;
            decisions.push(dec);
            if mode == Mode::Unassigned {
                continue;
            }
            next[i].mode = mode;
            if p.is_zero() {
                continue;
            }
            let spec = &self.tasks[i];
            let isd = spec.isd;
            let open = self.open(mode, i, t, &energy);
            let mut acc_cmp = 0.0;
            if p.cmp > 0.0 {
                match mode {
                    Mode::Local => {
                        if le_cap(used_loc[isd] + p.cmp, inst.isds[isd].f_loc) {
                            used_loc[isd] += p.cmp;
                            acc_cmp = p.cmp;
                        }
                    }
                    Mode::OnUav(u) => {
                        let en = e.a_cmp * p.cmp * delta;
                        if open && le_cap(used_uav[u] + p.cmp, inst.uavs[u].f_uav) && fits(headroom(&energy, u), en) {
                            used_uav[u] += p.cmp;
                            energy[u] += en;
                            acc_cmp = p.cmp;
                        }
                    }
                    Mode::CloudVia(_) => {
                        if le_cap(used_cld + p.cmp, inst.cloud_cap) {
                            used_cld += p.cmp;
                            acc_cmp = p.cmp;
                        }
                    }
                    Mode::Unassigned => {}
                }
            }
            if let Some(u) = mode.first_hop() {
                if p.ul > 0.0 {
                    let eff = inst.rates.ul(isd, t, u) * p.ul;
                    let en = e.a_ul * eff * delta;
                    if open && le_cap(used_ul[u] + p.ul, inst.uavs[u].b_ul) && fits(headroom(&energy, u), en) {
                        used_ul[u] += p.ul;
                        energy[u] += en;
                        next[i].done[1] += eff * delta;
                    }
                }
                if p.bh > 0.0 && mode.uses_backhaul() {
                    let eff = inst.rates.bh(t, u) * p.bh;
                    let en = e.a_bh * eff * delta;
                    if open && le_cap(used_bh[u] + p.bh, inst.uavs[u].b_bh) && fits(headroom(&energy, u), en) {
                        used_bh[u] += p.bh;
                        energy[u] += en;
                        next[i].done[2] += eff * delta;
                    }
                }
            }
            next[i].done[0] += acc_cmp * delta;
        }
        let mut reward = 0.0;
        for &i in order {
            let s = &next[i];
            if s.mode.is_assigned() && !s.complete && sufficient(&self.tasks[i], s) {
                next[i].complete = true;
                reward += self.completion_gain(i, t);
            }
        }
        let cmp_used = used_loc.iter().sum::<f64>() + used_uav.iter().sum::<f64>() + used_cld;
        let com_used = used_ul.iter().sum::<f64>() + used_bh.iter().sum::<f64>();
        let norm = |x: f64, c: f64| if c > 0.0 { (x / c).clamp(0.0, 1.0) } else { 0.0 };
        reward -= self.inst.weights.w_res * (norm(cmp_used, self.cmp_cap) + norm(com_used, self.com_cap));
        Child {
            decisions,
            next,
            energy,
            reward,
        }
    }

    fn children(&mut self, t: usize, st: &[TaskState], energy: &[f64]) -> Result<Vec<Child>> {
        let order = self.edf_order(t, st);
        let opts: Vec<Vec<(SlotDecision, Mode, Alloc)>> =
            order.iter().map(|&i| self.options(i, t, &st[i], energy)).collect();
        let mut out: Vec<Child> = Vec::new();
        let mut seen: HashMap<(usize, Vec<u64>), usize> = HashMap::new();
        let mut idx = vec![0usize; opts.len()];
        loop {
            self.nodes += 1;
            if self.nodes > self.budget {
                return Err(Error::Limits {
                    estimate: self.nodes as f64,
                    budget: self.budget as f64,
                });
            }
            let picks: Vec<&(SlotDecision, Mode, Alloc)> =
                idx.iter().zip(&opts).map(|(&k, o)| &o[k]).collect();
            let c = self.admit(t, st, energy, &order, &picks);
            // children reaching the same state differ only in slot reward
            let k = self.key(t + 1, &c.next, &c.energy);
            match seen.get(&k) {
                Some(&j) => {
                    let prev: &mut Child = &mut out[j];
                    if c.reward > prev.reward {
                        *prev = c;
                    }
                }
                None => {
                    seen.insert(k, out.len());
                    out.push(c);
                }
            }
            // odometer increment
            let mut d = 0;
            loop {
                if d == idx.len() {
                    return Ok(out);
                }
                idx[d] += 1;
                if idx[d] < opts[d].len() {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
        }
    }

    fn next_event(&self, t: usize, st: &[TaskState]) -> Option<usize> {
        (t..self.inst.grid.n_slot).find(|&s| (0..self.tasks.len()).any(|i| self.live(i, s, st)))
    }

    fn value(&mut self, t: usize, st: &[TaskState], energy: &[f64]) -> Result<f64> {
        let Some(t) = self.next_event(t, st) else {
            return Ok(0.0);
        };
        let key = self.key(t, st, energy);
        if let Some(&v) = self.memo.get(&key) {
            return Ok(v);
        }
        let kids = self.children(t, st, energy)?;
        let mut best = f64::NEG_INFINITY;
        for c in kids {
            let v = c.reward + self.value(t + 1, &c.next, &c.energy)?;
            if v > best {
                best = v;
            }
        }
        self.memo.insert(key, best);
        Ok(best)
    }

    /// Walks the memo from the root and returns the argmax decisions.
    fn reconstruct(&mut self) -> Result<Schedule> {
        let mut st = self.initial();
        let mut energy = vec![0.0; self.inst.n_uavs()];
        let mut sched = Schedule {
            slots: vec![Vec::new(); self.inst.grid.n_slot],
        };
        let mut t = 0;
        while let Some(s) = self.next_event(t, &st) {
            let target = self.value(s, &st, &energy)?;
            let kids = self.children(s, &st, &energy)?;
            let mut chosen = None;
            for c in kids {
                let v = c.reward + self.value(s + 1, &c.next, &c.energy)?;
                if v == target {
                    chosen = Some(c);
                    break;
                }
            }
            let c = chosen.ok_or_else(|| Error::State("argmax child not found".into()))?;
            sched.slots[s] = c.decisions;
            st = c.next;
            energy = c.energy;
            t = s + 1;
        }
        Ok(sched)
    }

    fn initial(&self) -> Vec<TaskState> {
        vec![
            TaskState {
                mode: Mode::Unassigned,
                done: [0.0; 3],
                complete: false,
            };
            self.tasks.len()
        ]
    }
}

fn sufficient(spec: &TaskSpec, s: &TaskState) -> bool {
    reached(s.done[0], spec.workload)
        && (!s.mode.uses_uplink() || reached(s.done[1], spec.input_bits))
        && (!s.mode.uses_backhaul() || reached(s.done[2], spec.input_bits))
}

fn check_limits(inst: &Instance, cfg: &EnvConfig, limits: &TinyLimits) -> Result<()> {
    let too_big = |what: &str, got: usize, max: usize| {
        Err(Error::Input(format!(
            "{what}: {got} exceeds the exhaustive-search limit {max}"
        )))
    };
    if inst.n_stations() > limits.max_stations {
        return too_big("stations", inst.n_stations(), limits.max_stations);
    }
    if inst.n_uavs() > limits.max_uavs {
        return too_big("UAVs", inst.n_uavs(), limits.max_uavs);
    }
    if inst.tasks.len() > limits.max_tasks.min(cfg.k_g) {
        return too_big("tasks", inst.tasks.len(), limits.max_tasks.min(cfg.k_g));
    }
    if inst.grid.n_slot > limits.max_slots {
        return too_big("slots", inst.grid.n_slot, limits.max_slots);
    }
    Ok(())
}

/// Best scheduling value for a fixed plan; includes the all-missed baseline
/// but not the collection term.
pub fn schedule_optimum(inst: &Instance, cfg: &EnvConfig, plan: &RoutePlan, budget: u64) -> Result<(f64, Schedule, u64)> {
    let handoff = make_handoff(inst, plan)?;
    let mut search = Search::new(inst, cfg, &handoff, budget);
    let init = search.initial();
    let v = search.value(0, &init, &vec![0.0; inst.n_uavs()])?;
    let sched = search.reconstruct()?;
    Ok((search.baseline() + v, sched, search.nodes))
}

/// Exhaustive optimum of the weighted objective over every feasible plan and
/// every schedule on the environment's allocation grid.
pub fn brute_force(inst: &Instance, cfg: &EnvConfig, limits: &TinyLimits, exec: Execution) -> Result<BruteForceResult> {
    check_limits(inst, cfg, limits)?;
    let plans = feasible_plans(inst)?;
    let results = map_slice(exec, &plans, |plan| {
        let collect: f64 = plan.collected().iter().map(|&m| inst.stations[m].value).sum();
        schedule_optimum(inst, cfg, plan, limits.node_budget)
            .map(|(v, s, n)| (inst.weights.w_col * collect + v, s, n))
    });
    let mut best: Option<(usize, f64, Schedule)> = None;
    let mut nodes = 0;
    for (k, r) in results.into_iter().enumerate() {
        let (v, s, n) = r?;
        nodes += n;
        if nodes > limits.node_budget {
            return Err(Error::Limits {
                estimate: nodes as f64,
                budget: limits.node_budget as f64,
            });
        }
        if best.as_ref().is_none_or(|b| v > b.1) {
            best = Some((k, v, s));
        }
    }
    let (k, value, schedule) = best.ok_or_else(|| Error::State("no feasible plan (the empty plan is always feasible)".into()))?;
    Ok(BruteForceResult {
        value,
        plan: plans[k].clone(),
        schedule,
        plans_searched: plans.len(),
        nodes,
    })
}

/// Replays a plan and schedule through the lower environment.
pub fn replay(inst: &Instance, cfg: &EnvConfig, plan: &RoutePlan, schedule: &Schedule) -> Result<EpisodeOutcome> {
    let handoff = make_handoff(inst, plan)?;
    let mut cfg = cfg.clone();
    cfg.resample_tasks = false;
    let l = (cfg.l_q - 1) as f64;
    let mut env = LowerEnv::new(Arc::new(inst.clone()), handoff, cfg.clone());
    env.reset(0);
    let mut ret = 0.0;
    while !env.is_done() {
        let t = env.slot();
        let mut rows = vec![RowDecision::default(); cfg.k_g];
        for d in schedule.slots.get(t).map(|v| v.as_slice()).unwrap_or(&[]) {
            let Some(row) = env.snapshot().iter().position(|&i| i == d.task) else {
                return Err(Error::State(format!("slot {t}: task {} is not in the snapshot", d.task)));
            };
            if row >= cfg.k_g {
                return Err(Error::State(format!("slot {t}: task {} outside the actionable rows", d.task)));
            }
            rows[row] = RowDecision {
                option: d.option,
                alpha: d.alpha as f64 / l,
                beta: d.beta as f64 / l,
            };
        }
        ret += env.step(&LowerAction { rows }).reward;
    }
    finish(inst, plan, &env, 0.0, ret)
}

fn finish(inst: &Instance, plan: &RoutePlan, env: &LowerEnv, up: f64, low: f64) -> Result<EpisodeOutcome> {
    let trace = env.trace();
    let objective = evaluate(env.instance(), plan, &trace.records, &trace.ledger)?;
    let _ = inst;
    Ok(EpisodeOutcome {
        plan: plan.clone(),
        trace,
        objective,
        upper_return: up,
        lower_return: low,
    })
}

// ---------------------------------------------------------------------------
// Heuristics

/// Nearest-feasible insertion for routing; EDF dispatch to the fastest
/// feasible mode at full allocation for scheduling.
pub fn greedy_policy(inst: Arc<Instance>, cfg: &EnvConfig, seed: u64) -> Result<EpisodeOutcome> {
    let mut up = UpperEnv::new(inst.clone(), cfg.clone());
    up.reset(seed);
    let mut up_ret = 0.0;
    while !up.is_done() {
        let mask = up.mask();
        let n_m = inst.n_stations();
        let state_node = up.plan();
        let syms: Vec<usize> = (0..inst.n_uavs())
            .map(|u| {
                let node = state_node.routes[u].visits.last().map_or(0, |v| v.station + 1);
                (0..n_m)
                    .filter(|&m| mask[u][m + 1])
                    .min_by(|&a, &b| inst.d_nodes(node, a + 1).total_cmp(&inst.d_nodes(node, b + 1)))
                    .map_or(n_m + 1, |m| m + 1)
            })
            .collect();
        let prio = (0..inst.n_uavs()).map(|u| -(u as f64)).collect();
        up_ret += up.step(&UpperAction { prio, route_sym: syms }).reward;
    }
    let plan = up.plan();
    let handoff = make_handoff(&inst, &plan)?;
    let mut env = LowerEnv::new(inst.clone(), handoff, cfg.clone());
    env.reset(seed);
    let mut low_ret = 0.0;
    while !env.is_done() {
        let rows = greedy_rows(&env);
        low_ret += env.step(&LowerAction { rows }).reward;
    }
    let plan = env.handoff().plan.clone();
    finish(&inst, &plan, &env, up_ret, low_ret)
}

fn greedy_rows(env: &LowerEnv) -> Vec<RowDecision> {
    let inst = env.instance();
    let cfg = env.config();
    let mask = env.mask();
    let n_u = inst.n_uavs();
    let t = env.slot();
    env.snapshot()
        .iter()
        .take(cfg.k_g)
        .enumerate()
        .map(|(row, &i)| {
            let rec = &env.records()[i];
            let full = RowDecision {
                option: 0,
                alpha: 1.0,
                beta: 1.0,
            };
            if rec.mode.is_assigned() {
                return RowDecision {
                    option: option_of_mode(rec.mode, n_u),
                    ..full
                };
            }
            let best = (1..2 + 2 * n_u)
                .filter(|&o| mask[row][o])
                .filter_map(|o| mode_of_option(o, n_u).map(|m| (o, finish_estimate(inst, rec, m, t, env.windows()))))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            RowDecision {
                option: best.map_or(0, |b| b.0),
                ..full
            }
        })
        .collect()
}

/// Rough slots-to-finish at full allocation, counting the wait for a window.
fn finish_estimate(inst: &Instance, rec: &TaskRecord, mode: Mode, t: usize, w: &ServiceWindowTable) -> f64 {
    let d = inst.grid.delta;
    let wl = rec.spec.workload;
    let b = rec.spec.input_bits;
    let m = inst.station_of_isd(rec.spec.isd);
    let wait = |u: usize| (t..w.n_slot).position(|s| w.eta(u, m, s)).map_or(f64::INFINITY, |p| p as f64);
    match mode {
        Mode::Unassigned => f64::INFINITY,
        Mode::Local => wl / (inst.isds[rec.spec.isd].f_loc * d),
        Mode::OnUav(u) => wait(u) + (wl / (inst.uavs[u].f_uav * d)).max(b / (inst.uavs[u].b_ul * d)),
        Mode::CloudVia(u) => {
            wait(u)
                + (wl / (inst.cloud_cap * d))
                    .max(b / (inst.uavs[u].b_ul * d))
                    .max(b / (inst.uavs[u].b_bh * d))
        }
    }
}

/// Uniform over unmasked symbols and options; allocations uniform in [0, 1].
pub fn random_policy(inst: Arc<Instance>, cfg: &EnvConfig, seed: u64) -> Result<EpisodeOutcome> {
    let mut rng = Rng64::derive(seed, 0x5eed);
    let mut up = UpperEnv::new(inst.clone(), cfg.clone());
    up.reset(seed);
    let mut up_ret = 0.0;
    while !up.is_done() {
        let mask = up.mask();
        let syms = mask.iter().map(|row| pick_unmasked(row, &mut rng)).collect();
        let prio = (0..inst.n_uavs()).map(|_| rng.uniform()).collect();
        up_ret += up.step(&UpperAction { prio, route_sym: syms }).reward;
    }
    let plan = up.plan();
    let handoff = make_handoff(&inst, &plan)?;
    let mut env = LowerEnv::new(inst.clone(), handoff, cfg.clone());
    env.reset(seed);
    let mut low_ret = 0.0;
    while !env.is_done() {
        let rows = env
            .mask()
            .iter()
            .map(|m| RowDecision {
                option: pick_unmasked(m, &mut rng),
                alpha: rng.uniform(),
                beta: rng.uniform(),
            })
            .collect();
        low_ret += env.step(&LowerAction { rows }).reward;
    }
    finish(&inst, &plan, &env, up_ret, low_ret)
}

pub fn pick_unmasked(mask: &[bool], rng: &mut Rng64) -> usize {
    let ok: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    ok[rng.index(ok.len())]
}

/// Whether a task could be routed through UAV `u` at slot `t`; re-exported
/// for callers that build their own masks.
pub fn offload_possible(env: &LowerEnv, i: usize, u: usize) -> bool {
    let rec = &env.records()[i];
    offload_feasible(env.instance(), rec, u, env.slot(), env.windows(), env.ledger().headroom(u))
}
