use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{edf_queue, level_alloc, mode_of_option, offload_feasible, option_of_mode, EnvConfig, Handoff};
use crate::mec::{apply_slot, assign_mode, check_completion, finalize, Mode, SlotLedger, TaskRecord};
use crate::model::Instance;
use crate::routing::ServiceWindowTable;
use crate::trace::EpisodeTrace;

/// Decision for one snapshot position: option index plus allocation
/// fractions in [0, 1] (quantized by the environment).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RowDecision {
    pub option: usize,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LowerAction {
    pub rows: Vec<RowDecision>,
}

/// Itemized reward terms of one lower step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LowerInfo {
    pub complete: f64,
    pub dispatch: f64,
    pub progress: f64,
    pub backlog: f64,
    pub utilization: f64,
    pub deadline: f64,
    pub invalid: f64,
    pub idle: f64,
    pub alloc: f64,
    pub living: f64,
    pub end: f64,
    pub completed: usize,
    pub newly_missed: usize,
    pub invalid_count: usize,
    pub rejected: usize,
}

impl LowerInfo {
    pub fn reward(&self) -> f64 {
        self.complete + self.dispatch + self.progress + self.backlog + self.utilization
            - self.deadline
            - self.invalid
            - self.idle
            - self.alloc
            - self.living
            + self.end
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LowerStep {
    pub state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: LowerInfo,
}

#[derive(Clone, Debug)]
pub struct LowerEnv {
    base: Arc<Instance>,
    inst: Instance,
    cfg: EnvConfig,
    handoff: Handoff,
    windows: ServiceWindowTable,
    recs: Vec<TaskRecord>,
    ledger: SlotLedger,
    levels: Vec<(usize, usize)>,
    frozen: Vec<bool>,
    /// Tasks with `gen_slot <= t`, as a prefix of the gen-sorted task list.
    n_released: usize,
    last_gen: usize,
    t: usize,
    done: bool,
    queue: Vec<usize>,
    snapshot: Vec<usize>,
    d_max: f64,
}

impl LowerEnv {
    pub fn new(base: Arc<Instance>, handoff: Handoff, cfg: EnvConfig) -> Self {
        let inst = (*base).clone();
        let windows = handoff.windows.clone();
        let ledger = SlotLedger::new(&inst);
        Self {
            base,
            inst,
            cfg,
            handoff,
            windows,
            recs: Vec::new(),
            ledger,
            levels: Vec::new(),
            frozen: Vec::new(),
            n_released: 0,
            last_gen: 0,
            t: 0,
            done: false,
            queue: Vec::new(),
            snapshot: Vec::new(),
            d_max: 1.0,
        }
    }

    /// `5K + 6U + 7 + 3UK + 11 N_q`.
    pub fn state_len_for(n_isds: usize, n_uavs: usize, n_q: usize) -> usize {
        5 * n_isds + 6 * n_uavs + 7 + 3 * n_uavs * n_isds + 11 * n_q
    }

    pub fn state_len(&self) -> usize {
        Self::state_len_for(self.inst.n_isds(), self.inst.n_uavs(), self.cfg.n_q)
    }

    pub fn n_options(&self) -> usize {
        2 * self.inst.n_uavs() + 2
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn instance(&self) -> &Instance {
        &self.inst
    }

    pub fn records(&self) -> &[TaskRecord] {
        &self.recs
    }

    pub fn ledger(&self) -> &SlotLedger {
        &self.ledger
    }

    pub fn windows(&self) -> &ServiceWindowTable {
        &self.windows
    }

    pub fn handoff(&self) -> &Handoff {
        &self.handoff
    }

    pub fn slot(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Task indices behind each snapshot row.
    pub fn snapshot(&self) -> &[usize] {
        &self.snapshot
    }

    pub fn frozen(&self) -> &[bool] {
        &self.frozen
    }

    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        let tasks = if self.cfg.resample_tasks {
            self.base.resample_tasks(seed)
        } else {
            None
        };
        self.inst = match tasks {
            Some(tasks) => self.base.with_tasks(tasks),
            None => (*self.base).clone(),
        };
        // release order relies on tasks sorted by generation slot
        self.inst.tasks.sort_by_key(|t| t.gen_slot);
        let t_m = self.inst.grid.t_mission;
        self.recs = self.inst.tasks.iter().map(|s| TaskRecord::new(s.clone(), t_m)).collect();
        self.ledger = SlotLedger::new(&self.inst);
        self.ledger.energy_cap = Some(self.handoff.residual_energy.clone());
        self.windows = self.handoff.windows.clone();
        for u in 0..self.inst.n_uavs() {
            if self.handoff.residual_energy[u] <= 0.0 {
                self.windows.close_from(u, 0);
            }
        }
        self.levels = vec![(0, 0); self.recs.len()];
        self.frozen = vec![false; self.recs.len()];
        self.n_released = 0;
        self.last_gen = self.inst.tasks.iter().map(|t| t.gen_slot).max().unwrap_or(0);
        self.t = 0;
        self.done = self.inst.grid.n_slot == 0;
        self.d_max = self
            .inst
            .tasks
            .iter()
            .map(|t| self.inst.deadline_of(t))
            .fold(self.inst.grid.delta, f64::max);
        self.advance_release();
        self.freeze_missed();
        self.refresh_queue();
        self.state()
    }

    fn advance_release(&mut self) {
        while self.n_released < self.recs.len() && self.recs[self.n_released].spec.gen_slot <= self.t {
            self.n_released += 1;
        }
    }

    /// Freezes released tasks that can no longer finish on time.
    fn freeze_missed(&mut self) -> usize {
        let mut n = 0;
        for i in 0..self.n_released {
            if self.frozen[i] || self.recs[i].is_complete() {
                continue;
            }
            let late = match self.inst.last_ontime_slot(&self.recs[i].spec) {
                Some(last) => last < self.t,
                None => true,
            };
            if late {
                self.frozen[i] = true;
                n += 1;
            }
        }
        n
    }

    fn live(&self, i: usize) -> bool {
        i < self.n_released && !self.frozen[i] && !self.recs[i].is_complete()
    }

    fn serviceable(&self, i: usize) -> bool {
        let r = &self.recs[i];
        match r.mode {
            Mode::OnUav(u) => self.windows.eta(u, self.inst.station_of_isd(r.spec.isd), self.t),
            _ => true,
        }
    }

    fn refresh_queue(&mut self) {
        if self.done || self.t >= self.inst.grid.n_slot {
            self.queue.clear();
            self.snapshot.clear();
            return;
        }
        let released = &self.recs[..self.n_released];
        self.queue = edf_queue(&self.inst, released, self.t, &self.frozen[..self.n_released]);
        let mut snap: Vec<usize> = self.queue.iter().copied().filter(|&i| self.serviceable(i)).collect();
        snap.extend(self.queue.iter().copied().filter(|&i| !self.serviceable(i)));
        snap.truncate(self.cfg.n_q);
        self.snapshot = snap;
    }

    fn residual(&self, u: usize) -> f64 {
        self.ledger.headroom(u)
    }

    /// Option availability per actionable position (`K_g` rows).
    pub fn mask(&self) -> Vec<Vec<bool>> {
        let n_u = self.inst.n_uavs();
        let n_o = self.n_options();
        (0..self.cfg.k_g)
            .map(|row| {
                let mut m = vec![false; n_o];
                m[0] = true;
                let Some(&i) = self.snapshot.get(row) else { return m };
                let rec = &self.recs[i];
                if rec.mode.is_assigned() {
                    m[option_of_mode(rec.mode, n_u)] = true;
                } else {
                    m[1] = true;
                    for u in 0..n_u {
                        let ok = offload_feasible(&self.inst, rec, u, self.t, &self.windows, self.residual(u));
                        m[2 + u] = ok;
                        m[2 + n_u + u] = ok;
                    }
                }
                m
            })
            .collect()
    }

    fn backlog_potential(&self) -> f64 {
        let b: f64 = self.recs[..self.n_released]
            .iter()
            .filter(|r| !r.is_complete())
            .map(|r| 1.0 - r.progress())
            .sum();
        self.cfg.lower.backlog * b / self.cfg.n_q as f64
    }

    fn idle_potential(&self) -> f64 {
        let r = if self.t == 0 {
            0.0
        } else {
            self.ledger.slots[self.t - 1].r_cmp
        };
        self.cfg.lower.utilization * (1.0 - r)
    }

    pub fn step(&mut self, action: &LowerAction) -> LowerStep {
        let mut info = LowerInfo::default();
        if self.done {
            return LowerStep {
                state: self.state(),
                reward: 0.0,
                done: true,
                info,
            };
        }
        let rw = self.cfg.lower.clone();
        let n_u = self.inst.n_uavs();
        let t = self.t;
        let b_before = self.backlog_potential();
        let u_before = self.idle_potential();
        let progress_before: Vec<(usize, f64)> =
            self.queue.iter().map(|&i| (i, self.recs[i].progress())).collect();

        // decisions on the actionable snapshot positions
        let mask = self.mask();
        let mut any_waiting = false;
        let mut any_action = false;
        let n_act = self.cfg.k_g.min(self.snapshot.len());
        for row in 0..n_act {
            let i = self.snapshot[row];
            let dec = action.rows.get(row).copied().unwrap_or_default();
            let waiting = !self.recs[i].mode.is_assigned();
            any_waiting |= waiting;
            if dec.option == 0 {
                continue;
            }
            any_action = true;
            let levels = (self.cfg.quantize(dec.alpha), self.cfg.quantize(dec.beta));
            if dec.option >= mask[row].len() || !mask[row][dec.option] {
                info.invalid_count += 1;
                continue;
            }
            if waiting {
                let Some(mode) = mode_of_option(dec.option, n_u) else {
                    info.invalid_count += 1;
                    continue;
                };
                if assign_mode(&self.inst, &mut self.recs[i], i, mode, &self.windows).is_err() {
                    info.invalid_count += 1;
                    continue;
                }
                info.dispatch += match mode {
                    Mode::Local => rw.dispatch_local,
                    Mode::OnUav(_) => rw.dispatch_uav,
                    _ => rw.dispatch_cloud,
                };
            }
            self.levels[i] = levels;
        }
        if any_waiting && !any_action {
            info.idle = rw.idle;
        }
        info.invalid = rw.invalid * info.invalid_count as f64;

        // every active task proposes its current levels, in queue order
        let proposals: Vec<(usize, crate::mec::Alloc)> = self
            .queue
            .iter()
            .filter(|&&i| self.recs[i].mode.is_assigned())
            .map(|&i| {
                let (a, b) = self.levels[i];
                (i, level_alloc(&self.inst, &self.cfg, &self.recs[i], t, &self.windows, a, b))
            })
            .filter(|(_, a)| !a.is_zero())
            .collect();
        let rejected = apply_slot(&self.inst, t, &mut self.ledger, &mut self.recs, &proposals, &self.windows)
            .expect("lower env proposals are well-formed");
        info.rejected = rejected.len();
        info.alloc = rw.alloc * rejected.len() as f64;

        for &(i, before) in &progress_before {
            check_completion(&self.inst, &mut self.recs[i], t);
            if self.recs[i].is_complete() {
                info.completed += 1;
            }
            info.progress += (self.recs[i].progress() - before).max(0.0);
        }
        info.progress *= rw.progress;
        info.complete = rw.complete * info.completed as f64;

        for u in 0..n_u {
            if self.ledger.headroom(u) <= 1e-9 {
                self.windows.close_from(u, t + 1);
            }
        }

        // advance to the next slot
        self.t += 1;
        info.living = rw.living;
        let horizon_end = self.t >= self.inst.grid.n_slot;
        if !horizon_end {
            self.advance_release();
            info.newly_missed = self.freeze_missed();
        }
        let cleared = !horizon_end
            && self.t > self.last_gen
            && (0..self.n_released).all(|i| !self.live(i))
            && self.n_released == self.recs.len();
        if horizon_end || cleared {
            self.done = true;
            let overdue = self.recs.iter().filter(|r| !r.is_complete()).count();
            info.end = -rw.end_overdue * overdue as f64;
            if cleared {
                info.end += rw.end_clear;
            }
            finalize(&self.inst, &mut self.ledger, &mut self.recs);
        }
        info.deadline = rw.deadline * info.newly_missed as f64;
        info.backlog = b_before - self.backlog_potential();
        info.utilization = u_before - self.idle_potential();
        self.refresh_queue();
        let reward = info.reward();
        LowerStep {
            state: self.state(),
            reward,
            done: self.done,
            info,
        }
    }

    /// Runs the remaining slots with all-skip decisions; used when a policy
    /// stops early.
    pub fn run_out(&mut self) {
        let skip = LowerAction::default();
        while !self.done {
            self.step(&skip);
        }
    }

    pub fn trace(&self) -> EpisodeTrace {
        EpisodeTrace {
            instance: self.inst.clone(),
            plan: self.handoff.plan.clone(),
            ledger: self.ledger.clone(),
            records: self.recs.clone(),
        }
    }

    pub fn state(&self) -> Vec<f64> {
        let inst = &self.inst;
        let n_k = inst.n_isds();
        let n_u = inst.n_uavs();
        let n_q = self.cfg.n_q as f64;
        let t = self.t.min(inst.grid.n_slot.saturating_sub(1));
        let now = inst.grid.time_of(self.t);
        let prev = if self.t == 0 || self.ledger.slots.is_empty() {
            None
        } else {
            self.ledger.slots.get(self.t - 1)
        };
        let mut out = Vec::with_capacity(self.state_len());

        let mut waiting = vec![0usize; n_k];
        let mut rem_local = vec![0.0; n_k];
        let mut min_ttd = vec![f64::INFINITY; n_k];
        let mut on_uav = vec![vec![0usize; n_k]; n_u];
        let mut via = vec![vec![0usize; n_k]; n_u];
        for &i in &self.queue {
            let r = &self.recs[i];
            let k = r.spec.isd;
            min_ttd[k] = min_ttd[k].min(inst.abs_deadline(&r.spec) - now);
            match r.mode {
                Mode::Unassigned => waiting[k] += 1,
                Mode::Local => rem_local[k] += (r.spec.workload - r.done_cmp).max(0.0),
                Mode::OnUav(u) => on_uav[u][k] += 1,
                Mode::CloudVia(u) => via[u][k] += 1,
            }
        }
        let serving_now = |k: usize| (0..n_u).any(|u| self.windows.eta(u, inst.station_of_isd(k), self.t));

        for k in 0..n_k {
            let f = inst.isds[k].f_loc;
            out.push(unit(waiting[k] as f64 / n_q));
            out.push(prev.map_or(0.0, |s| unit(s.used_loc[k] / f)));
            out.push(unit(rem_local[k] / (f * inst.grid.delta)));
            out.push(if min_ttd[k].is_finite() { unit(min_ttd[k] / self.d_max) } else { 1.0 });
            out.push(flag(serving_now(k)));
        }
        for u in 0..n_u {
            let spec = &inst.uavs[u];
            let res0 = self.handoff.residual_energy[u];
            out.push(if res0 > 0.0 { unit(self.ledger.headroom(u) / res0) } else { 0.0 });
            out.push(prev.map_or(0.0, |s| unit(s.used_uav[u] / spec.f_uav)));
            out.push(prev.map_or(0.0, |s| unit(s.used_ul[u] / spec.b_ul)));
            out.push(prev.map_or(0.0, |s| unit(s.used_bh[u] / spec.b_bh)));
            out.push(flag(self.windows.serving(u, self.t).is_some()));
            let left = (self.t..inst.grid.n_slot).filter(|&s| self.windows.serving(u, s).is_some()).count();
            out.push(unit(left as f64 / inst.grid.n_slot.max(1) as f64));
        }
        let n_tasks = self.recs.len().max(1) as f64;
        let completed = self.recs.iter().filter(|r| r.is_complete()).count() as f64;
        let frozen = self.frozen.iter().filter(|&&f| f).count() as f64;
        out.push(unit(self.t as f64 / inst.grid.n_slot.max(1) as f64));
        out.push(unit(self.n_released as f64 / n_tasks));
        out.push(unit(completed / n_tasks));
        out.push(unit(frozen / n_tasks));
        out.push(prev.map_or(0.0, |s| unit(s.cloud_total() / inst.cloud_cap)));
        out.push(prev.map_or(0.0, |s| s.r_cmp));
        out.push(prev.map_or(0.0, |s| s.r_com));
        for u in 0..n_u {
            for k in 0..n_k {
                out.push(unit(on_uav[u][k] as f64 / n_q));
                out.push(unit(via[u][k] as f64 / n_q));
                out.push(flag(self.windows.eta(u, inst.station_of_isd(k), t) && self.t < inst.grid.n_slot));
            }
        }
        for row in 0..self.cfg.n_q {
            match self.snapshot.get(row) {
                None => out.extend(std::iter::repeat_n(0.0, 11)),
                Some(&i) => {
                    let r = &self.recs[i];
                    let rem_com = if r.mode.uses_uplink() {
                        let mut need = (r.spec.input_bits - r.done_ul).max(0.0);
                        if r.mode.uses_backhaul() {
                            need += (r.spec.input_bits - r.done_bh).max(0.0);
                            need /= 2.0;
                        }
                        need / r.spec.input_bits
                    } else {
                        0.0
                    };
                    out.push(1.0);
                    out.push((r.spec.isd + 1) as f64 / n_k as f64);
                    out.push(flag(r.mode.is_assigned()));
                    out.push(flag(r.mode == Mode::Local));
                    out.push(flag(matches!(r.mode, Mode::OnUav(_))));
                    out.push(flag(matches!(r.mode, Mode::CloudVia(_))));
                    out.push(r.mode.first_hop().map_or(0.0, |u| (u + 1) as f64 / n_u as f64));
                    out.push(unit((inst.abs_deadline(&r.spec) - now) / self.d_max));
                    out.push(unit((r.spec.workload - r.done_cmp) / r.spec.workload));
                    out.push(unit(rem_com));
                    out.push(flag(self.serviceable(i)));
                }
            }
        }
        out
    }
}

fn unit(x: f64) -> f64 {
    if x.is_finite() {
        x.clamp(0.0, 1.0)
    } else {
        0.0
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::make_handoff;
    use crate::model::{generate_scenario, TaskSpec};
    use crate::routing::{compute_timing_min, RoutePlan};

    fn paper_env(plan: Option<Vec<Vec<usize>>>) -> LowerEnv {
        let inst = generate_scenario(1, "paper").unwrap();
        let plan = match plan {
            Some(seqs) => compute_timing_min(&inst, &seqs).unwrap(),
            None => RoutePlan::empty(2),
        };
        let h = make_handoff(&inst, &plan).unwrap();
        LowerEnv::new(Arc::new(inst), h, EnvConfig::default())
    }

    fn single_task_env(spec: TaskSpec, cfg: EnvConfig) -> LowerEnv {
        let inst = generate_scenario(1, "paper").unwrap().with_tasks(vec![spec]);
        let mut inst = inst;
        inst.task_model = None;
        let h = make_handoff(&inst, &RoutePlan::empty(2)).unwrap();
        LowerEnv::new(Arc::new(inst), h, cfg)
    }

    #[test]
    fn reset_shape_and_determinism() {
        let mut e = paper_env(Some(vec![vec![0, 1], vec![2]]));
        let s = e.reset(4);
        assert_eq!(s.len(), 261);
        assert_eq!(s.len(), e.state_len());
        assert_eq!(e.reset(4), s);
        assert!(s.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn empty_queue_all_skip_pays_living_only() {
        let spec = TaskSpec {
            isd: 0,
            gen_slot: 5,
            workload: 10.0,
            input_bits: 1e5,
            deadline: Some(30.0),
        };
        let mut e = single_task_env(spec, EnvConfig::default());
        e.reset(0);
        let st = e.step(&LowerAction::default());
        assert_eq!(st.info.idle, 0.0);
        assert_eq!(st.info.living, 0.01);
        assert_eq!(st.info.backlog, 0.0);
        assert_eq!(st.info.utilization, 0.0);
        assert!((st.reward + 0.01).abs() < 1e-15);
    }

    #[test]
    fn local_dispatch_then_completion() {
        let spec = TaskSpec {
            isd: 0,
            gen_slot: 0,
            workload: 600.0,
            input_bits: 1e5,
            deadline: Some(30.0),
        };
        let mut e = single_task_env(spec, EnvConfig::default());
        e.reset(0);
        let act = LowerAction {
            rows: vec![RowDecision {
                option: 1,
                alpha: 1.0,
                beta: 0.0,
            }],
        };
        let st = e.step(&act);
        assert_eq!(st.info.dispatch, 0.05);
        assert_eq!(st.info.completed, 0);
        // allocation persists without a new decision
        let st = e.step(&LowerAction::default());
        assert_eq!(st.info.completed, 1);
        assert_eq!(st.info.complete, 1.0);
        assert_eq!(e.records()[0].complete_slot, Some(1));
        assert!(st.done);
    }

    #[test]
    fn overdue_task_penalized_at_end() {
        let spec = TaskSpec {
            isd: 0,
            gen_slot: 300,
            workload: 10.0,
            input_bits: 1e5,
            deadline: Some(80.0),
        };
        let mut e = single_task_env(spec, EnvConfig::default());
        e.reset(0);
        let mut last = None;
        while !e.is_done() {
            last = Some(e.step(&LowerAction::default()));
        }
        let st = last.unwrap();
        assert_eq!(st.info.end, -2.0);
    }

    #[test]
    fn potentials_telescope() {
        let mut e = paper_env(Some(vec![vec![0, 1], vec![2, 3]]));
        e.reset(7);
        let b0 = e.backlog_potential();
        let u0 = e.idle_potential();
        let mut rng = crate::rng::Rng64::new(1);
        let (mut sb, mut su) = (0.0, 0.0);
        while !e.is_done() {
            let mask = e.mask();
            let rows = mask
                .iter()
                .map(|m| {
                    let ok: Vec<usize> = (0..m.len()).filter(|&o| m[o]).collect();
                    RowDecision {
                        option: ok[rng.index(ok.len())],
                        alpha: rng.uniform(),
                        beta: rng.uniform(),
                    }
                })
                .collect();
            let st = e.step(&LowerAction { rows });
            sb += st.info.backlog;
            su += st.info.utilization;
            assert_eq!(st.info.invalid_count, 0);
        }
        assert!((sb - (b0 - e.backlog_potential())).abs() < 1e-9);
        assert!((su - (u0 - e.idle_potential())).abs() < 1e-9);
    }

    #[test]
    fn active_task_cannot_switch_option() {
        let mut e = paper_env(Some(vec![vec![0], vec![1]]));
        e.reset(2);
        let first = LowerAction {
            rows: vec![RowDecision {
                option: 1,
                alpha: 0.0,
                beta: 0.0,
            }],
        };
        e.step(&first);
        let i = e.snapshot()[0];
        if e.records()[i].mode == Mode::Local {
            let mask = e.mask();
            let row = e.snapshot().iter().position(|&x| x == i).unwrap();
            if row < mask.len() {
                assert!(mask[row][1]);
                assert!(mask[row][2..].iter().all(|&x| !x));
            }
        }
    }
}
