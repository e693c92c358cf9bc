//! The two decision processes: upper routing and lower slot scheduling.

mod lower;
mod upper;

pub use lower::{LowerAction, LowerEnv, LowerInfo, LowerStep, RowDecision};
pub use upper::{UpperAction, UpperEnv, UpperInfo, UpperStep};

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mec::{reached, Alloc, Mode, TaskRecord};
use crate::model::{Instance, TaskSpec};
use crate::routing::{flight_energy, service_windows, RoutePlan, ServiceWindowTable};

/// Upper reward coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpperRewards {
    /// Scale of the coverage gain (fraction of stations newly collected).
    pub coverage: f64,
    /// Scale of the load-balance potential.
    pub balance: f64,
    /// Scale of the delivered-value share when a UAV returns.
    pub delivery: f64,
    /// Penalty per masked symbol that had to be coerced to stay.
    pub constraint: f64,
    /// Terminal bonus when every station is collected.
    pub end_success: f64,
    /// Terminal penalty per station left uncollected.
    pub end_unserved: f64,
}

impl Default for UpperRewards {
    fn default() -> Self {
        Self {
            coverage: 10.0,
            balance: 2.0,
            delivery: 5.0,
            constraint: 2.0,
            end_success: 20.0,
            end_unserved: 10.0,
        }
    }
}

/// Lower reward coefficients, one per reward term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LowerRewards {
    pub complete: f64,
    pub dispatch_local: f64,
    pub dispatch_uav: f64,
    pub dispatch_cloud: f64,
    pub progress: f64,
    pub backlog: f64,
    pub utilization: f64,
    pub deadline: f64,
    pub invalid: f64,
    pub idle: f64,
    pub alloc: f64,
    pub living: f64,
    /// Terminal penalty per overdue or unfinished released task.
    pub end_overdue: f64,
    /// Terminal bonus for clearing every task before the horizon.
    pub end_clear: f64,
}

impl Default for LowerRewards {
    fn default() -> Self {
        Self {
            complete: 1.0,
            dispatch_local: 0.05,
            dispatch_uav: 0.1,
            dispatch_cloud: 0.1,
            progress: 0.5,
            backlog: 0.2,
            utilization: 0.5,
            deadline: 2.0,
            invalid: 0.2,
            idle: 0.1,
            alloc: 0.02,
            living: 0.01,
            end_overdue: 2.0,
            end_clear: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Snapshot rows in the lower state.
    pub n_q: usize,
    /// Actionable snapshot positions per slot.
    pub k_g: usize,
    /// Allocation levels, evenly spaced over [0, 1].
    pub l_q: usize,
    /// Upper episode step cap; `None` means `2 (M + 1)`.
    pub max_upper_steps: Option<usize>,
    /// Draw fresh tasks from the instance's task model on every lower reset.
    pub resample_tasks: bool,
    pub upper: UpperRewards,
    pub lower: LowerRewards,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            n_q: 16,
            k_g: 8,
            l_q: 5,
            max_upper_steps: None,
            resample_tasks: true,
            upper: UpperRewards::default(),
            lower: LowerRewards::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_q == 0 || self.k_g == 0 || self.k_g > self.n_q {
            return Err(Error::Config(format!(
                "need 0 < k_g <= n_q, got k_g = {}, n_q = {}",
                self.k_g, self.n_q
            )));
        }
        if self.l_q < 2 {
            return Err(Error::Config(format!("l_q must be at least 2, got {}", self.l_q)));
        }
        Ok(())
    }

    /// Fraction for a level index.
    pub fn level_frac(&self, level: usize) -> f64 {
        level.min(self.l_q - 1) as f64 / (self.l_q - 1) as f64
    }

    /// Nearest level index for a value in [0, 1].
    pub fn quantize(&self, x: f64) -> usize {
        let x = if x.is_finite() { x.clamp(0.0, 1.0) } else { 0.0 };
        (x * (self.l_q - 1) as f64).round() as usize
    }
}

/// Upper-to-lower hand-off: service windows and per-UAV energy headroom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Handoff {
    pub plan: RoutePlan,
    pub windows: ServiceWindowTable,
    pub residual_energy: Vec<f64>,
}

pub fn make_handoff(inst: &Instance, plan: &RoutePlan) -> Result<Handoff> {
    let windows = service_windows(inst, plan)?;
    let fly = flight_energy(inst, plan);
    let residual_energy = inst
        .uavs
        .iter()
        .zip(&fly)
        .map(|(u, f)| (u.energy_budget - f).max(0.0))
        .collect();
    Ok(Handoff {
        plan: plan.clone(),
        windows,
        residual_energy,
    })
}

/// Number of joint discrete actions before allocation levels:
/// `(M + 2)^U * (2U + 2)^K_g`.
pub fn action_space_size(n_stations: usize, n_uavs: usize, k_g: usize) -> u128 {
    let upper = (n_stations as u128 + 2).pow(n_uavs as u32);
    let lower = (2 * n_uavs as u128 + 2).pow(k_g as u32);
    upper * lower
}

/// Option index of a mode in the lower alphabet:
/// 0 skip, 1 local, `2 + u` UAV, `2 + U + u` cloud via UAV.
pub fn option_of_mode(mode: Mode, n_uavs: usize) -> usize {
    match mode {
        Mode::Unassigned => 0,
        Mode::Local => 1,
        Mode::OnUav(u) => 2 + u,
        Mode::CloudVia(u) => 2 + n_uavs + u,
    }
}

pub fn mode_of_option(option: usize, n_uavs: usize) -> Option<Mode> {
    match option {
        0 => None,
        1 => Some(Mode::Local),
        o if o < 2 + n_uavs => Some(Mode::OnUav(o - 2)),
        o if o < 2 + 2 * n_uavs => Some(Mode::CloudVia(o - 2 - n_uavs)),
        _ => None,
    }
}

/// Unfinished tasks by absolute deadline, ties by `(gen_slot, isd, index)`.
pub fn edf_queue(inst: &Instance, recs: &[TaskRecord], t: usize, frozen: &[bool]) -> Vec<usize> {
    let mut q: Vec<usize> = (0..recs.len())
        .filter(|&i| {
            let r = &recs[i];
            r.spec.gen_slot <= t && !r.is_complete() && !frozen.get(i).copied().unwrap_or(false)
        })
        .collect();
    q.sort_by(|&a, &b| edf_cmp(inst, &recs[a], &recs[b]).then(a.cmp(&b)));
    q
}

fn edf_cmp(inst: &Instance, a: &TaskRecord, b: &TaskRecord) -> Ordering {
    inst.abs_deadline(&a.spec)
        .total_cmp(&inst.abs_deadline(&b.spec))
        .then(a.spec.gen_slot.cmp(&b.spec.gen_slot))
        .then(a.spec.isd.cmp(&b.spec.isd))
}

/// Allocation requested by a task in slot `t` at the given levels.
///
/// Levels scale the capacity of the resource the mode uses; each component is
/// clipped to what the task still needs and left at zero when the first-hop
/// UAV is not hovering over the task's station.
pub fn level_alloc(
    inst: &Instance,
    cfg: &EnvConfig,
    rec: &TaskRecord,
    t: usize,
    windows: &ServiceWindowTable,
    alpha: usize,
    beta: usize,
) -> Alloc {
    let m = inst.station_of_isd(rec.spec.isd);
    let open = rec.mode.first_hop().is_some_and(|u| windows.eta(u, m, t));
    level_alloc_parts(
        inst,
        cfg,
        &rec.spec,
        rec.mode,
        [rec.done_cmp, rec.done_ul, rec.done_bh],
        t,
        open,
        alpha,
        beta,
    )
}

/// `level_alloc` on raw task progress; `open` is the first-hop window flag.
#[allow(clippy::too_many_arguments)]
pub fn level_alloc_parts(
    inst: &Instance,
    cfg: &EnvConfig,
    spec: &TaskSpec,
    mode: Mode,
    done: [f64; 3],
    t: usize,
    open: bool,
    alpha: usize,
    beta: usize,
) -> Alloc {
    let delta = inst.grid.delta;
    let a = cfg.level_frac(alpha);
    let b = cfg.level_frac(beta);
    let isd = spec.isd;
    let mut out = Alloc::ZERO;
    if !reached(done[0], spec.workload) {
        let need = ((spec.workload - done[0]) / delta).max(0.0);
        out.cmp = match mode {
            Mode::Unassigned => 0.0,
            Mode::Local => (a * inst.isds[isd].f_loc).min(need),
            Mode::OnUav(u) if open => (a * inst.uavs[u].f_uav).min(need),
            Mode::OnUav(_) => 0.0,
            Mode::CloudVia(_) => (a * inst.cloud_cap).min(need),
        };
    }
    if let Some(u) = mode.first_hop() {
        if open && !reached(done[1], spec.input_bits) {
            let g = inst.rates.ul(isd, t, u);
            let need = ((spec.input_bits - done[1]) / (g * delta)).max(0.0);
            out.ul = (b * inst.uavs[u].b_ul).min(need);
        }
        if open && mode.uses_backhaul() && !reached(done[2], spec.input_bits) {
            let g = inst.rates.bh(t, u);
            let need = ((spec.input_bits - done[2]) / (g * delta)).max(0.0);
            out.bh = (b * inst.uavs[u].b_bh).min(need);
        }
    }
    out
}

/// Whether UAV-relayed mode via `u` can still finish on time from slot `t`.
pub fn offload_feasible(
    inst: &Instance,
    rec: &TaskRecord,
    u: usize,
    t: usize,
    windows: &ServiceWindowTable,
    residual: f64,
) -> bool {
    let Some(last) = inst.last_ontime_slot(&rec.spec) else {
        return false;
    };
    residual > 0.0 && last >= t && windows.open_between(u, inst.station_of_isd(rec.spec.isd), t, last)
}
