//! Slot-by-slot task execution under compute, link and energy limits.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Instance, TaskSpec};
use crate::routing::{flight_energy, RoutePlan, ServiceWindowTable};

/// Relative slack for capacity and sufficiency comparisons.
const REL_EPS: f64 = 1e-12;

/// Capacity test with a small relative slack.
pub fn le_cap(x: f64, cap: f64) -> bool {
    x <= cap + REL_EPS * cap.abs().max(1.0)
}

/// Sufficiency test with a small relative slack.
pub fn reached(done: f64, need: f64) -> bool {
    done + REL_EPS * need.abs().max(1.0) >= need
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[default]
    Unassigned,
    Local,
    OnUav(usize),
    CloudVia(usize),
}

impl Mode {
    /// First-hop UAV for UAV and cloud modes.
    pub fn first_hop(self) -> Option<usize> {
        match self {
            Mode::OnUav(u) | Mode::CloudVia(u) => Some(u),
            _ => None,
        }
    }

    pub fn is_assigned(self) -> bool {
        self != Mode::Unassigned
    }

    pub fn uses_uplink(self) -> bool {
        self.first_hop().is_some()
    }

    pub fn uses_backhaul(self) -> bool {
        matches!(self, Mode::CloudVia(_))
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Unassigned => f.write_str("unassigned"),
            Mode::Local => f.write_str("local"),
            Mode::OnUav(u) => write!(f, "uav({u})"),
            Mode::CloudVia(u) => write!(f, "cloud-via({u})"),
        }
    }
}

/// Per-slot allocation: compute in work-units/s, links in bits/s.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Alloc {
    pub cmp: f64,
    pub ul: f64,
    pub bh: f64,
}

impl Alloc {
    pub const ZERO: Alloc = Alloc {
        cmp: 0.0,
        ul: 0.0,
        bh: 0.0,
    };

    pub fn new(cmp: f64, ul: f64, bh: f64) -> Self {
        Self { cmp, ul, bh }
    }

    pub fn is_zero(&self) -> bool {
        self.cmp == 0.0 && self.ul == 0.0 && self.bh == 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub spec: TaskSpec,
    pub mode: Mode,
    /// Accepted allocations by slot, ascending.
    pub alloc: Vec<(usize, Alloc)>,
    pub done_cmp: f64,
    /// Effective (rate-factor weighted) bits delivered.
    pub done_ul: f64,
    pub done_bh: f64,
    pub complete_slot: Option<usize>,
    pub z: bool,
    pub completion_time: f64,
}

impl TaskRecord {
    pub fn new(spec: TaskSpec, t_mission: f64) -> Self {
        Self {
            spec,
            mode: Mode::Unassigned,
            alloc: Vec::new(),
            done_cmp: 0.0,
            done_ul: 0.0,
            done_bh: 0.0,
            complete_slot: None,
            z: false,
            completion_time: t_mission,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.complete_slot.is_some()
    }

    /// Cumulative completion flag at slot `t`.
    pub fn chi(&self, t: usize) -> bool {
        self.complete_slot.is_some_and(|c| c <= t)
    }

    pub fn alloc_at(&self, t: usize) -> Alloc {
        self.alloc
            .iter()
            .rev()
            .find(|(s, _)| *s == t)
            .map_or(Alloc::ZERO, |(_, a)| *a)
    }

    pub fn cmp_sufficient(&self) -> bool {
        reached(self.done_cmp, self.spec.workload)
    }

    pub fn ul_sufficient(&self) -> bool {
        !self.mode.uses_uplink() || reached(self.done_ul, self.spec.input_bits)
    }

    pub fn bh_sufficient(&self) -> bool {
        !self.mode.uses_backhaul() || reached(self.done_bh, self.spec.input_bits)
    }

    /// Cumulative sufficiency for the bound mode.
    pub fn sufficient(&self) -> bool {
        self.mode.is_assigned() && self.cmp_sufficient() && self.ul_sufficient() && self.bh_sufficient()
    }

    /// Fraction of the remaining requirement already met, averaged over the
    /// components the mode uses.
    pub fn progress(&self) -> f64 {
        let frac = |done: f64, need: f64| if need > 0.0 { (done / need).min(1.0) } else { 1.0 };
        let mut parts = vec![frac(self.done_cmp, self.spec.workload)];
        if self.mode.uses_uplink() {
            parts.push(frac(self.done_ul, self.spec.input_bits));
        }
        if self.mode.uses_backhaul() {
            parts.push(frac(self.done_bh, self.spec.input_bits));
        }
        parts.iter().sum::<f64>() / parts.len() as f64
    }
}

/// Fixes the execution mode of an unassigned task.
pub fn assign_mode(
    inst: &Instance,
    rec: &mut TaskRecord,
    task: usize,
    mode: Mode,
    windows: &ServiceWindowTable,
) -> Result<()> {
    if rec.mode.is_assigned() {
        return Err(Error::ModeLocked { task });
    }
    match mode {
        Mode::Unassigned => {
            return Err(Error::Precondition(format!("task {task}: cannot assign the unassigned mode")))
        }
        Mode::Local => {}
        Mode::OnUav(u) | Mode::CloudVia(u) => {
            if u >= windows.n_uavs() {
                return Err(Error::Input(format!("task {task}: unknown UAV {u}")));
            }
            let m = inst.station_of_isd(rec.spec.isd);
            let last = windows.n_slot.saturating_sub(1);
            if windows.n_slot == 0 || !windows.open_between(u, m, rec.spec.gen_slot, last) {
                return Err(Error::InfeasibleMode {
                    task,
                    uav: u,
                    from_slot: rec.spec.gen_slot,
                });
            }
        }
    }
    rec.mode = mode;
    Ok(())
}

// ---------------------------------------------------------------------------
// Ledger

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotUsage {
    /// Per ISD.
    pub used_loc: Vec<f64>,
    /// Per UAV.
    pub used_uav: Vec<f64>,
    /// Cloud compute relayed through each UAV.
    pub used_cld_via: Vec<f64>,
    pub used_ul: Vec<f64>,
    pub used_bh: Vec<f64>,
    /// Rate-factor weighted link usage, used for comm energy.
    pub eff_ul: Vec<f64>,
    pub eff_bh: Vec<f64>,
    pub r_cmp: f64,
    pub r_com: f64,
}

impl SlotUsage {
    fn new(n_isd: usize, n_uav: usize) -> Self {
        Self {
            used_loc: vec![0.0; n_isd],
            used_uav: vec![0.0; n_uav],
            used_cld_via: vec![0.0; n_uav],
            used_ul: vec![0.0; n_uav],
            used_bh: vec![0.0; n_uav],
            eff_ul: vec![0.0; n_uav],
            eff_bh: vec![0.0; n_uav],
            r_cmp: 0.0,
            r_com: 0.0,
        }
    }

    pub fn cloud_total(&self) -> f64 {
        self.used_cld_via.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotLedger {
    pub slots: Vec<SlotUsage>,
    /// Compute plus comm energy committed so far, per UAV.
    pub energy_used: Vec<f64>,
    /// Per-UAV headroom for compute plus comm energy; `None` disables the gate.
    pub energy_cap: Option<Vec<f64>>,
    pub finalized: bool,
}

impl SlotLedger {
    pub fn new(inst: &Instance) -> Self {
        Self {
            slots: vec![SlotUsage::new(inst.n_isds(), inst.n_uavs()); inst.grid.n_slot],
            energy_used: vec![0.0; inst.n_uavs()],
            energy_cap: None,
            finalized: false,
        }
    }

    /// Ledger whose energy gate leaves room for the plan's flight energy.
    pub fn with_energy_gate(inst: &Instance, plan: &RoutePlan) -> Self {
        let mut ledger = Self::new(inst);
        let fly = flight_energy(inst, plan);
        ledger.energy_cap = Some(
            inst.uavs
                .iter()
                .zip(&fly)
                .map(|(u, f)| (u.energy_budget - f).max(0.0))
                .collect(),
        );
        ledger
    }

    pub fn headroom(&self, u: usize) -> f64 {
        self.energy_cap
            .as_ref()
            .map_or(f64::INFINITY, |cap| cap[u] - self.energy_used[u])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Component {
    Cmp,
    Ul,
    Bh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MecConstraint {
    /// The component is not used by the task's mode.
    ModeGate,
    /// The first-hop UAV is not hovering over the task's station.
    ServiceWindow,
    LocalCapacity,
    UavCapacity,
    CloudCapacity,
    UplinkCapacity,
    BackhaulCapacity,
    EnergyBudget,
    /// The task already completed.
    AfterCompletion,
}

impl fmt::Display for MecConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MecConstraint::ModeGate => "mode-gate",
            MecConstraint::ServiceWindow => "service-window",
            MecConstraint::LocalCapacity => "local-capacity",
            MecConstraint::UavCapacity => "uav-capacity",
            MecConstraint::CloudCapacity => "cloud-capacity",
            MecConstraint::UplinkCapacity => "uplink-capacity",
            MecConstraint::BackhaulCapacity => "backhaul-capacity",
            MecConstraint::EnergyBudget => "energy-budget",
            MecConstraint::AfterCompletion => "after-completion",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub task: usize,
    pub component: Component,
    pub amount: f64,
    pub constraint: MecConstraint,
}

/// Admits proposed allocations for slot `t` in proposal order.
///
/// Each component is admitted or rejected on its own; accepted amounts
/// accrue to the task cumulants and the ledger.
pub fn apply_slot(
    inst: &Instance,
    t: usize,
    ledger: &mut SlotLedger,
    recs: &mut [TaskRecord],
    proposed: &[(usize, Alloc)],
    windows: &ServiceWindowTable,
) -> Result<Vec<Rejection>> {
    if t >= inst.grid.n_slot {
        return Err(Error::Precondition(format!(
            "slot {t} outside grid of {} slots",
            inst.grid.n_slot
        )));
    }
    for &(k, a) in proposed {
        let rec = recs
            .get(k)
            .ok_or_else(|| Error::Input(format!("unknown task index {k}")))?;
        if !(a.cmp >= 0.0 && a.ul >= 0.0 && a.bh >= 0.0) {
            return Err(Error::Precondition(format!("task {k}: negative or NaN allocation {a:?}")));
        }
        if t < rec.spec.gen_slot && !a.is_zero() {
            return Err(Error::Temporal {
                task: k,
                slot: t,
                gen_slot: rec.spec.gen_slot,
            });
        }
    }

    let delta = inst.grid.delta;
    let e = &inst.energy;
    let mut rejected = Vec::new();
    for &(k, a) in proposed {
        if a.is_zero() {
            continue;
        }
        let rec = &mut recs[k];
        let isd = rec.spec.isd;
        let m = inst.station_of_isd(isd);
        let mode = rec.mode;
        let mut accepted = Alloc::ZERO;
        let mut reject = |component, amount: f64, constraint| {
            if amount > 0.0 {
                rejected.push(Rejection {
                    task: k,
                    component,
                    amount,
                    constraint,
                });
            }
        };
        if rec.is_complete() {
            reject(Component::Cmp, a.cmp, MecConstraint::AfterCompletion);
            reject(Component::Ul, a.ul, MecConstraint::AfterCompletion);
            reject(Component::Bh, a.bh, MecConstraint::AfterCompletion);
            continue;
        }
        let usage = &mut ledger.slots[t];
        let window_open = mode.first_hop().is_some_and(|u| windows.eta(u, m, t));

        // compute
        if a.cmp > 0.0 {
            match mode {
                Mode::Unassigned => reject(Component::Cmp, a.cmp, MecConstraint::ModeGate),
                Mode::Local => {
                    if le_cap(usage.used_loc[isd] + a.cmp, inst.isds[isd].f_loc) {
                        usage.used_loc[isd] += a.cmp;
                        accepted.cmp = a.cmp;
                    } else {
                        reject(Component::Cmp, a.cmp, MecConstraint::LocalCapacity);
                    }
                }
                Mode::OnUav(u) => {
                    let energy = e.a_cmp * a.cmp * delta;
                    if !window_open {
                        reject(Component::Cmp, a.cmp, MecConstraint::ServiceWindow);
                    } else if !le_cap(usage.used_uav[u] + a.cmp, inst.uavs[u].f_uav) {
                        reject(Component::Cmp, a.cmp, MecConstraint::UavCapacity);
                    } else if !energy_fits(ledger_headroom(&ledger.energy_cap, &ledger.energy_used, u), energy) {
                        reject(Component::Cmp, a.cmp, MecConstraint::EnergyBudget);
                    } else {
                        usage.used_uav[u] += a.cmp;
                        ledger.energy_used[u] += energy;
                        accepted.cmp = a.cmp;
                    }
                }
                Mode::CloudVia(u) => {
                    if le_cap(usage.cloud_total() + a.cmp, inst.cloud_cap) {
                        usage.used_cld_via[u] += a.cmp;
                        accepted.cmp = a.cmp;
                    } else {
                        reject(Component::Cmp, a.cmp, MecConstraint::CloudCapacity);
                    }
                }
            }
        }

        // uplink
        if a.ul > 0.0 {
            match mode.first_hop() {
                None => reject(Component::Ul, a.ul, MecConstraint::ModeGate),
                Some(u) => {
                    let eff = inst.rates.ul(isd, t, u) * a.ul;
                    let energy = e.a_ul * eff * delta;
                    if !window_open {
                        reject(Component::Ul, a.ul, MecConstraint::ServiceWindow);
                    } else if !le_cap(usage.used_ul[u] + a.ul, inst.uavs[u].b_ul) {
                        reject(Component::Ul, a.ul, MecConstraint::UplinkCapacity);
                    } else if !energy_fits(ledger_headroom(&ledger.energy_cap, &ledger.energy_used, u), energy) {
                        reject(Component::Ul, a.ul, MecConstraint::EnergyBudget);
                    } else {
                        usage.used_ul[u] += a.ul;
                        usage.eff_ul[u] += eff;
                        ledger.energy_used[u] += energy;
                        accepted.ul = a.ul;
                        rec.done_ul += eff * delta;
                    }
                }
            }
        }

        // backhaul
        if a.bh > 0.0 {
            match mode {
                Mode::CloudVia(u) => {
                    let eff = inst.rates.bh(t, u) * a.bh;
                    let energy = e.a_bh * eff * delta;
                    if !window_open {
                        reject(Component::Bh, a.bh, MecConstraint::ServiceWindow);
                    } else if !le_cap(usage.used_bh[u] + a.bh, inst.uavs[u].b_bh) {
                        reject(Component::Bh, a.bh, MecConstraint::BackhaulCapacity);
                    } else if !energy_fits(ledger_headroom(&ledger.energy_cap, &ledger.energy_used, u), energy) {
                        reject(Component::Bh, a.bh, MecConstraint::EnergyBudget);
                    } else {
                        usage.used_bh[u] += a.bh;
                        usage.eff_bh[u] += eff;
                        ledger.energy_used[u] += energy;
                        accepted.bh = a.bh;
                        rec.done_bh += eff * delta;
                    }
                }
                _ => reject(Component::Bh, a.bh, MecConstraint::ModeGate),
            }
        }

        rec.done_cmp += accepted.cmp * delta;
        if !accepted.is_zero() {
            match rec.alloc.last_mut() {
                Some((s, prev)) if *s == t => {
                    prev.cmp += accepted.cmp;
                    prev.ul += accepted.ul;
                    prev.bh += accepted.bh;
                }
                _ => rec.alloc.push((t, accepted)),
            }
        }
    }
    let (rc, rm) = occupation(ledger, inst, t);
    ledger.slots[t].r_cmp = rc;
    ledger.slots[t].r_com = rm;
    Ok(rejected)
}

fn ledger_headroom(cap: &Option<Vec<f64>>, used: &[f64], u: usize) -> f64 {
    cap.as_ref().map_or(f64::INFINITY, |c| c[u] - used[u])
}

fn energy_fits(headroom: f64, energy: f64) -> bool {
    energy <= headroom + 1e-9
}

/// Marks the task complete at `t` if its cumulants became sufficient.
pub fn check_completion(inst: &Instance, rec: &mut TaskRecord, t: usize) {
    if rec.is_complete() || !rec.sufficient() {
        return;
    }
    rec.complete_slot = Some(t);
    rec.completion_time = inst.grid.time_of(t + 1);
    rec.z = rec.completion_time <= inst.abs_deadline(&rec.spec) + 1e-9;
}

/// Closes the episode: incomplete tasks get `T = T_mission`, `z = 0`.
pub fn finalize(inst: &Instance, ledger: &mut SlotLedger, recs: &mut [TaskRecord]) {
    for rec in recs.iter_mut() {
        if !rec.is_complete() {
            rec.z = false;
            rec.completion_time = inst.grid.t_mission;
        }
    }
    for t in 0..ledger.slots.len() {
        let (rc, rm) = occupation(ledger, inst, t);
        ledger.slots[t].r_cmp = rc;
        ledger.slots[t].r_com = rm;
    }
    ledger.finalized = true;
}

/// Normalized compute and comm occupation of slot `t`.
pub fn occupation(ledger: &SlotLedger, inst: &Instance, t: usize) -> (f64, f64) {
    let s = &ledger.slots[t];
    let cmp_used: f64 =
        s.used_loc.iter().sum::<f64>() + s.used_uav.iter().sum::<f64>() + s.cloud_total();
    let cmp_cap: f64 = inst.isds.iter().map(|k| k.f_loc).sum::<f64>()
        + inst.uavs.iter().map(|u| u.f_uav).sum::<f64>()
        + inst.cloud_cap;
    let com_used: f64 = s.used_ul.iter().sum::<f64>() + s.used_bh.iter().sum::<f64>();
    let com_cap: f64 = inst.uavs.iter().map(|u| u.b_ul + u.b_bh).sum();
    let norm = |x: f64, c: f64| if c > 0.0 { (x / c).clamp(0.0, 1.0) } else { 0.0 };
    (norm(cmp_used, cmp_cap), norm(com_used, com_cap))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UavEnergy {
    pub fly: f64,
    pub cmp: f64,
    pub com: f64,
    pub total: f64,
    pub within_budget: bool,
}

/// Per-UAV energy from the task records.
pub fn uav_energy(inst: &Instance, recs: &[TaskRecord], plan: &RoutePlan) -> Vec<UavEnergy> {
    let fly = flight_energy(inst, plan);
    let delta = inst.grid.delta;
    let mut cmp = vec![0.0; inst.n_uavs()];
    let mut com = vec![0.0; inst.n_uavs()];
    for rec in recs {
        let Some(u) = rec.mode.first_hop() else { continue };
        for &(t, a) in &rec.alloc {
            if matches!(rec.mode, Mode::OnUav(_)) {
                cmp[u] += inst.energy.a_cmp * a.cmp * delta;
            }
            com[u] += inst.energy.a_ul * inst.rates.ul(rec.spec.isd, t, u) * a.ul * delta;
            com[u] += inst.energy.a_bh * inst.rates.bh(t, u) * a.bh * delta;
        }
    }
    energy_rows(inst, fly, cmp, com)
}

/// Per-UAV energy re-summed from the slot ledger.
pub fn ledger_energy(inst: &Instance, ledger: &SlotLedger, plan: &RoutePlan) -> Vec<UavEnergy> {
    let fly = flight_energy(inst, plan);
    let delta = inst.grid.delta;
    let n = inst.n_uavs();
    let mut cmp = vec![0.0; n];
    let mut com = vec![0.0; n];
    for s in &ledger.slots {
        for u in 0..n {
            cmp[u] += inst.energy.a_cmp * s.used_uav[u] * delta;
            com[u] += inst.energy.a_ul * s.eff_ul[u] * delta + inst.energy.a_bh * s.eff_bh[u] * delta;
        }
    }
    energy_rows(inst, fly, cmp, com)
}

fn energy_rows(inst: &Instance, fly: Vec<f64>, cmp: Vec<f64>, com: Vec<f64>) -> Vec<UavEnergy> {
    fly.into_iter()
        .zip(cmp)
        .zip(com)
        .enumerate()
        .map(|(u, ((fly, cmp), com))| {
            let total = fly + cmp + com;
            UavEnergy {
                fly,
                cmp,
                com,
                total,
                within_budget: total <= inst.uavs[u].energy_budget,
            }
        })
        .collect()
}
