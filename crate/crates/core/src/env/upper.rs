use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::EnvConfig;
use crate::model::Instance;
use crate::routing::{RoutePlan, UavRoute, Visit, ROUTE_SCHEMA};

/// Priority scores plus one routing symbol per UAV.
///
/// Symbols: 0 stay, `1..=M` add station `s - 1`, `M + 1` complete.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpperAction {
    pub prio: Vec<f64>,
    pub route_sym: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpperInfo {
    pub collection: f64,
    pub coverage: f64,
    pub balance: f64,
    pub delivery: f64,
    pub constraint: f64,
    pub end: f64,
    /// Masked symbols coerced to stay.
    pub coerced: usize,
    /// Adds lost to a higher-priority UAV in the same step.
    pub conflicts: usize,
    pub collected: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpperStep {
    pub state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: UpperInfo,
}

#[derive(Clone, Debug)]
pub struct UpperEnv {
    inst: Arc<Instance>,
    cfg: EnvConfig,
    max_steps: usize,
    lo: [f64; 2],
    span: [f64; 2],
    v_max: f64,
    v_total: f64,
    node: Vec<usize>,
    clock: Vec<f64>,
    dist_used: Vec<f64>,
    payload: Vec<f64>,
    fly_energy: Vec<f64>,
    visits: Vec<Vec<Visit>>,
    ret: Vec<f64>,
    complete: Vec<bool>,
    owner: Vec<Option<usize>>,
    steps: usize,
    done: bool,
}

impl UpperEnv {
    pub fn new(inst: Arc<Instance>, cfg: EnvConfig) -> Self {
        let mut lo = inst.depot;
        let mut hi = inst.depot;
        for s in &inst.stations {
            for d in 0..2 {
                lo[d] = lo[d].min(s.pos[d]);
                hi[d] = hi[d].max(s.pos[d]);
            }
        }
        let span = [hi[0] - lo[0], hi[1] - lo[1]];
        let v_max = inst.stations.iter().map(|s| s.value).fold(0.0, f64::max);
        let v_total = inst.stations.iter().map(|s| s.value).sum();
        let max_steps = cfg.max_upper_steps.unwrap_or(2 * (inst.n_stations() + 1));
        let n_u = inst.n_uavs();
        let n_m = inst.n_stations();
        Self {
            inst,
            cfg,
            max_steps,
            lo,
            span,
            v_max,
            v_total,
            node: vec![0; n_u],
            clock: vec![0.0; n_u],
            dist_used: vec![0.0; n_u],
            payload: vec![0.0; n_u],
            fly_energy: vec![0.0; n_u],
            visits: vec![Vec::new(); n_u],
            ret: vec![0.0; n_u],
            complete: vec![false; n_u],
            owner: vec![None; n_m],
            steps: 0,
            done: false,
        }
    }

    pub fn instance(&self) -> &Arc<Instance> {
        &self.inst
    }

    /// `U (8 + 2M) + 4M + 2`.
    pub fn state_len_for(n_uavs: usize, n_stations: usize) -> usize {
        n_uavs * (8 + 2 * n_stations) + 4 * n_stations + 2
    }

    pub fn state_len(&self) -> usize {
        Self::state_len_for(self.inst.n_uavs(), self.inst.n_stations())
    }

    pub fn n_symbols(&self) -> usize {
        self.inst.n_stations() + 2
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    /// The environment has no stochastic dynamics; the seed only pins the
    /// interface.
    pub fn reset(&mut self, _seed: u64) -> Vec<f64> {
        let n_u = self.inst.n_uavs();
        self.node = vec![0; n_u];
        self.clock = vec![0.0; n_u];
        self.dist_used = vec![0.0; n_u];
        self.payload = vec![0.0; n_u];
        self.fly_energy = vec![0.0; n_u];
        self.visits = vec![Vec::new(); n_u];
        self.ret = vec![0.0; n_u];
        self.complete = vec![false; n_u];
        self.owner = vec![None; self.inst.n_stations()];
        self.steps = 0;
        self.done = false;
        self.state()
    }

    pub fn collected_fraction(&self) -> f64 {
        let n = self.owner.len();
        if n == 0 {
            return 1.0;
        }
        self.owner.iter().filter(|o| o.is_some()).count() as f64 / n as f64
    }

    pub fn all_collected(&self) -> bool {
        self.owner.iter().all(|o| o.is_some())
    }

    /// Whether UAV `u` can add station `m` now and still return within every
    /// budget.
    pub fn can_add(&self, u: usize, m: usize) -> bool {
        if self.done || self.complete[u] || self.owner[m].is_some() {
            return false;
        }
        let inst = &*self.inst;
        let spec = &inst.uavs[u];
        let st = &inst.stations[m];
        let leg = inst.d_nodes(self.node[u], m + 1);
        let back = inst.d_to_depot(m);
        let eps = 1e-9;
        self.payload[u] + st.weight <= spec.payload_cap + eps
            && self.dist_used[u] + leg + back <= spec.dist_budget + eps
            && self.clock[u] + (leg + back) / spec.speed + st.min_service <= inst.grid.t_mission + eps
            && self.fly_energy[u] + inst.energy.a_fly * (leg + back) + inst.energy.a_hov * st.min_service
                <= spec.energy_budget + eps
    }

    /// Per-UAV availability over the `M + 2` symbols.
    pub fn mask(&self) -> Vec<Vec<bool>> {
        let n_m = self.inst.n_stations();
        (0..self.inst.n_uavs())
            .map(|u| {
                let mut row = vec![false; n_m + 2];
                row[0] = true;
                row[n_m + 1] = true;
                for m in 0..n_m {
                    row[m + 1] = self.can_add(u, m);
                }
                row
            })
            .collect()
    }

    pub fn state(&self) -> Vec<f64> {
        let inst = &*self.inst;
        let n_m = inst.n_stations();
        let t_m = inst.grid.t_mission;
        let mut out = Vec::with_capacity(self.state_len());
        for u in 0..inst.n_uavs() {
            let spec = &inst.uavs[u];
            let pos = self.pos_of(u);
            out.push(self.norm_coord(pos[0], 0));
            out.push(self.norm_coord(pos[1], 1));
            out.push(unit(1.0 - self.fly_energy[u] / spec.energy_budget));
            out.push(unit(self.payload[u] / spec.payload_cap));
            out.push(unit(1.0 - self.dist_used[u] / spec.dist_budget));
            out.push(unit(self.clock[u] / t_m));
            out.push(if self.complete[u] { 1.0 } else { 0.0 });
            out.push(if n_m == 0 { 0.0 } else { self.visits[u].len() as f64 / n_m as f64 });
            for m in 0..n_m {
                out.push(if self.owner[m] == Some(u) { 1.0 } else { 0.0 });
            }
            for m in 0..n_m {
                out.push(unit(inst.d_nodes(self.node[u], m + 1) / spec.dist_budget));
            }
        }
        let cap = inst.uavs.iter().map(|u| u.payload_cap).fold(0.0, f64::max);
        for (m, st) in inst.stations.iter().enumerate() {
            out.push(if self.owner[m].is_some() { 1.0 } else { 0.0 });
            out.push(if self.v_max > 0.0 { unit(st.value / self.v_max) } else { 0.0 });
            out.push(if cap > 0.0 { unit(st.weight / cap) } else { 0.0 });
            out.push(unit(st.min_service / t_m));
        }
        let max_clock = self.clock.iter().cloned().fold(0.0, f64::max);
        out.push(unit(max_clock / t_m));
        out.push(self.collected_fraction());
        out
    }

    fn pos_of(&self, u: usize) -> [f64; 2] {
        match self.node[u] {
            0 => self.inst.depot,
            n => self.inst.stations[n - 1].pos,
        }
    }

    fn norm_coord(&self, x: f64, d: usize) -> f64 {
        if self.span[d] > 0.0 {
            unit((x - self.lo[d]) / self.span[d])
        } else {
            0.0
        }
    }

    fn balance_potential(&self) -> f64 {
        let max_budget = self.inst.uavs.iter().map(|u| u.dist_budget).fold(0.0, f64::max);
        if self.dist_used.len() < 2 || max_budget <= 0.0 {
            return 0.0;
        }
        let hi = self.dist_used.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = self.dist_used.iter().cloned().fold(f64::INFINITY, f64::min);
        -self.cfg.upper.balance * (hi - lo) / max_budget
    }

    fn add(&mut self, u: usize, m: usize) {
        let inst = &*self.inst;
        let spec = &inst.uavs[u];
        let st = &inst.stations[m];
        let leg = inst.d_nodes(self.node[u], m + 1);
        let arr = self.clock[u] + leg / spec.speed;
        let dep = arr + st.min_service;
        self.visits[u].push(Visit { station: m, arr, dep });
        self.clock[u] = dep;
        self.dist_used[u] += leg;
        self.payload[u] += st.weight;
        self.fly_energy[u] += inst.energy.a_fly * leg + inst.energy.a_hov * st.min_service;
        self.node[u] = m + 1;
        self.owner[m] = Some(u);
    }

    /// Flies UAV `u` home; returns the delivered-value share bonus.
    fn go_home(&mut self, u: usize) -> f64 {
        if self.complete[u] {
            return 0.0;
        }
        let inst = &*self.inst;
        if self.node[u] != 0 {
            let leg = inst.d_nodes(self.node[u], 0);
            self.clock[u] += leg / inst.uavs[u].speed;
            self.dist_used[u] += leg;
            self.fly_energy[u] += inst.energy.a_fly * leg;
            self.node[u] = 0;
            self.ret[u] = self.clock[u];
        }
        self.complete[u] = true;
        let value: f64 = self.visits[u].iter().map(|v| inst.stations[v.station].value).sum();
        if self.v_total > 0.0 {
            self.cfg.upper.delivery * value / self.v_total
        } else {
            0.0
        }
    }

    pub fn step(&mut self, action: &UpperAction) -> UpperStep {
        let n_u = self.inst.n_uavs();
        let n_m = self.inst.n_stations();
        let mut info = UpperInfo::default();
        if self.done {
            return UpperStep {
                state: self.state(),
                reward: 0.0,
                done: true,
                info,
            };
        }
        let mask = self.mask();
        let cov_before = self.collected_fraction();
        let bal_before = self.balance_potential();

        let mut order: Vec<usize> = (0..n_u).collect();
        order.sort_by(|&a, &b| {
            let pa = action.prio.get(a).copied().unwrap_or(0.0);
            let pb = action.prio.get(b).copied().unwrap_or(0.0);
            pb.total_cmp(&pa).then(a.cmp(&b))
        });
        for u in order {
            let sym = action.route_sym.get(u).copied().unwrap_or(0);
            if sym >= n_m + 2 || !mask[u][sym] {
                info.coerced += 1;
                info.constraint += self.cfg.upper.constraint;
                continue;
            }
            if self.complete[u] || sym == 0 {
                continue;
            }
            if sym == n_m + 1 {
                info.delivery += self.go_home(u);
                continue;
            }
            let m = sym - 1;
            if self.can_add(u, m) {
                self.add(u, m);
                info.collection += self.inst.stations[m].value;
                info.collected.push(m);
            } else {
                info.conflicts += 1;
            }
        }
        self.steps += 1;

        if self.complete.iter().all(|&c| c) || self.steps >= self.max_steps {
            for u in 0..n_u {
                info.delivery += self.go_home(u);
            }
            self.done = true;
            let unserved = self.owner.iter().filter(|o| o.is_none()).count();
            info.end = if unserved == 0 {
                self.cfg.upper.end_success
            } else {
                -self.cfg.upper.end_unserved * unserved as f64
            };
        }
        info.coverage = self.cfg.upper.coverage * (self.collected_fraction() - cov_before);
        info.balance = self.balance_potential() - bal_before;
        let reward =
            info.collection + info.coverage + info.balance + info.delivery - info.constraint + info.end;
        UpperStep {
            state: self.state(),
            reward,
            done: self.done,
            info,
        }
    }

    /// The route plan built so far; open tours are closed at the depot.
    pub fn plan(&self) -> RoutePlan {
        let inst = &*self.inst;
        let routes = (0..inst.n_uavs())
            .map(|u| {
                let ret = if self.complete[u] {
                    self.ret[u]
                } else if self.node[u] == 0 {
                    0.0
                } else {
                    self.clock[u] + inst.d_nodes(self.node[u], 0) / inst.uavs[u].speed
                };
                UavRoute {
                    visits: self.visits[u].clone(),
                    depart: 0.0,
                    ret: if self.visits[u].is_empty() { 0.0 } else { ret },
                }
            })
            .collect();
        RoutePlan {
            schema: ROUTE_SCHEMA.into(),
            routes,
        }
    }
}

fn unit(x: f64) -> f64 {
    if x.is_finite() {
        x.clamp(0.0, 1.0)
    } else {
        0.0
    }
}
