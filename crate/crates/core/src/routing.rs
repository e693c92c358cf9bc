//! UAV routes: timing, constraint checks, service windows, flight energy.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Instance;

pub const ROUTE_SCHEMA: &str = "route-v1";

const TIME_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub station: usize,
    pub arr: f64,
    pub dep: f64,
}

/// One closed tour: depot -> visits -> depot.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UavRoute {
    pub visits: Vec<Visit>,
    /// Depot departure time.
    pub depart: f64,
    /// Depot return time.
    pub ret: f64,
}

impl UavRoute {
    pub fn stations(&self) -> impl Iterator<Item = usize> + '_ {
        self.visits.iter().map(|v| v.station)
    }

    pub fn visit_of(&self, m: usize) -> Option<&Visit> {
        self.visits.iter().find(|v| v.station == m)
    }

    /// Closed-tour length including both depot legs.
    pub fn length(&self, inst: &Instance) -> f64 {
        let mut node = 0;
        let mut len = 0.0;
        for v in &self.visits {
            len += inst.d_nodes(node, v.station + 1);
            node = v.station + 1;
        }
        if node != 0 {
            len += inst.d_nodes(node, 0);
        }
        len
    }

    pub fn service_time(&self) -> f64 {
        self.visits.iter().map(|v| v.dep - v.arr).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutePlan {
    pub schema: String,
    pub routes: Vec<UavRoute>,
}

impl RoutePlan {
    pub fn empty(n_uavs: usize) -> Self {
        Self {
            schema: ROUTE_SCHEMA.into(),
            routes: vec![UavRoute::default(); n_uavs],
        }
    }

    /// Stations with `c_m = 1`: assigned to some UAV.
    pub fn collected(&self) -> BTreeSet<usize> {
        self.routes.iter().flat_map(|r| r.stations()).collect()
    }

    pub fn assigned_uav(&self, m: usize) -> Option<usize> {
        self.routes
            .iter()
            .position(|r| r.stations().any(|s| s == m))
    }

    pub fn n_visits(&self) -> usize {
        self.routes.iter().map(|r| r.visits.len()).sum()
    }

    /// Builds a plan from per-UAV arc lists over routing nodes (0 = depot).
    ///
    /// Only single closed tours are representable; a UAV leaving the depot
    /// more than once is rejected.
    pub fn from_arcs(inst: &Instance, arcs: &[Vec<(usize, usize)>], times: &[Vec<(f64, f64)>]) -> Result<Self> {
        let mut routes = Vec::with_capacity(arcs.len());
        for (u, list) in arcs.iter().enumerate() {
            let starts = list.iter().filter(|(i, _)| *i == 0).count();
            if starts > 1 {
                return Err(Error::Input(format!(
                    "UAV {u}: multi-tour routes are not supported (depot left {starts} times)"
                )));
            }
            let mut visits = Vec::new();
            let mut node = 0;
            let mut guard = 0;
            if starts == 1 {
                loop {
                    let next = list
                        .iter()
                        .find(|(i, _)| *i == node)
                        .map(|&(_, j)| j)
                        .ok_or_else(|| Error::Input(format!("UAV {u}: route breaks at node {node}")))?;
                    if next == 0 {
                        break;
                    }
                    if next > inst.n_stations() {
                        return Err(Error::Input(format!("UAV {u}: unknown node {next}")));
                    }
                    let (arr, dep) = times
                        .get(u)
                        .and_then(|t| t.get(visits.len()))
                        .copied()
                        .unwrap_or((0.0, 0.0));
                    visits.push(Visit {
                        station: next - 1,
                        arr,
                        dep,
                    });
                    node = next;
                    guard += 1;
                    if guard > list.len() {
                        return Err(Error::Input(format!("UAV {u}: route contains a sub-cycle")));
                    }
                }
            }
            if visits.len() != list.len().saturating_sub(1) && !list.is_empty() {
                return Err(Error::Input(format!(
                    "UAV {u}: arcs do not form a single closed tour"
                )));
            }
            routes.push(UavRoute {
                visits,
                depart: 0.0,
                ret: 0.0,
            });
        }
        Ok(Self {
            schema: ROUTE_SCHEMA.into(),
            routes,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: RoutePlan = serde_json::from_str(text)?;
        if plan.schema != ROUTE_SCHEMA {
            return Err(Error::Config(format!(
                "unsupported route schema {:?} (expected {ROUTE_SCHEMA})",
                plan.schema
            )));
        }
        Ok(plan)
    }
}

// ---------------------------------------------------------------------------
// Constraint checking

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RouteConstraint {
    /// Each station served by at most one UAV.
    StationAssignment,
    /// A station on a route is entered and left exactly once.
    RouteConsistency,
    /// Depot departures equal depot returns.
    DepotBalance,
    Payload,
    Distance,
    /// `s_u = 0` and `r_u <= T_mission`.
    Horizon,
    /// First arrival respects depot-to-station travel time.
    DepotLeg,
    /// Arrival respects travel time from the previous station.
    StationLeg,
    /// Depot return respects travel time from the last station.
    ReturnLeg,
    MinService,
}

impl RouteConstraint {
    pub const ALL: [RouteConstraint; 10] = [
        RouteConstraint::StationAssignment,
        RouteConstraint::RouteConsistency,
        RouteConstraint::DepotBalance,
        RouteConstraint::Payload,
        RouteConstraint::Distance,
        RouteConstraint::Horizon,
        RouteConstraint::DepotLeg,
        RouteConstraint::StationLeg,
        RouteConstraint::ReturnLeg,
        RouteConstraint::MinService,
    ];
}

impl fmt::Display for RouteConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RouteConstraint::StationAssignment => "station-assignment",
            RouteConstraint::RouteConsistency => "route-consistency",
            RouteConstraint::DepotBalance => "depot-balance",
            RouteConstraint::Payload => "payload",
            RouteConstraint::Distance => "distance",
            RouteConstraint::Horizon => "horizon",
            RouteConstraint::DepotLeg => "depot-leg",
            RouteConstraint::StationLeg => "station-leg",
            RouteConstraint::ReturnLeg => "return-leg",
            RouteConstraint::MinService => "min-service",
        };
        f.write_str(s)
    }
}

/// Offending `(u, m, i, j)` tuple; `i`, `j` are routing nodes (0 = depot).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub u: Option<usize>,
    pub m: Option<usize>,
    pub i: Option<usize>,
    pub j: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RouteViolation {
    pub constraint: RouteConstraint,
    pub witness: Witness,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RouteReport {
    pub violations: Vec<RouteViolation>,
    pub collected: Vec<usize>,
}

impl RouteReport {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violates(&self, c: RouteConstraint) -> bool {
        self.violations.iter().any(|v| v.constraint == c)
    }

    /// Pass/fail per constraint family, in declaration order.
    pub fn summary(&self) -> Vec<(RouteConstraint, bool)> {
        RouteConstraint::ALL
            .iter()
            .map(|&c| (c, !self.violates(c)))
            .collect()
    }
}

fn witness(u: usize, m: Option<usize>, i: Option<usize>, j: Option<usize>) -> Witness {
    Witness {
        u: Some(u),
        m,
        i,
        j,
    }
}

/// Evaluates every routing constraint and reports all violations.
pub fn check_route(inst: &Instance, plan: &RoutePlan) -> Result<RouteReport> {
    if plan.routes.len() != inst.n_uavs() {
        return Err(Error::Input(format!(
            "plan has {} routes for {} UAVs",
            plan.routes.len(),
            inst.n_uavs()
        )));
    }
    for (u, r) in plan.routes.iter().enumerate() {
        for v in &r.visits {
            if v.station >= inst.n_stations() {
                return Err(Error::Input(format!("UAV {u}: unknown station id {}", v.station)));
            }
        }
    }

    let mut out = Vec::new();
    let mut push = |constraint, w: Witness, detail: String| {
        out.push(RouteViolation {
            constraint,
            witness: w,
            detail,
        })
    };

    // Station assignment across UAVs.
    for m in 0..inst.n_stations() {
        let owners: Vec<usize> = plan
            .routes
            .iter()
            .enumerate()
            .filter(|(_, r)| r.stations().any(|s| s == m))
            .map(|(u, _)| u)
            .collect();
        if owners.len() > 1 {
            push(
                RouteConstraint::StationAssignment,
                Witness {
                    u: Some(owners[1]),
                    m: Some(m),
                    ..Default::default()
                },
                format!("station {m} assigned to UAVs {owners:?}"),
            );
        }
    }

    let t_mission = inst.grid.t_mission;
    for (u, route) in plan.routes.iter().enumerate() {
        let spec = &inst.uavs[u];

        // Duplicate visits break enter/leave-once consistency.
        let mut seen = BTreeSet::new();
        for v in &route.visits {
            if !seen.insert(v.station) {
                push(
                    RouteConstraint::RouteConsistency,
                    witness(u, Some(v.station), None, None),
                    format!("UAV {u} visits station {} more than once", v.station),
                );
            }
        }

        let payload: f64 = seen.iter().map(|&m| inst.stations[m].weight).sum();
        if payload > spec.payload_cap + 1e-9 {
            push(
                RouteConstraint::Payload,
                witness(u, None, None, None),
                format!("UAV {u} payload {payload} exceeds {}", spec.payload_cap),
            );
        }
        let length = route.length(inst);
        if length > spec.dist_budget + 1e-9 {
            push(
                RouteConstraint::Distance,
                witness(u, None, None, None),
                format!("UAV {u} tour length {length} exceeds {}", spec.dist_budget),
            );
        }
        if route.depart != 0.0 || route.ret > t_mission + TIME_EPS {
            push(
                RouteConstraint::Horizon,
                witness(u, None, None, None),
                format!(
                    "UAV {u} departs at {} and returns at {} (horizon {t_mission})",
                    route.depart, route.ret
                ),
            );
        }

        let mut prev_node = 0;
        let mut prev_dep = route.depart;
        for v in &route.visits {
            let node = v.station + 1;
            let travel = inst.d_nodes(prev_node, node) / spec.speed;
            if v.arr + TIME_EPS < prev_dep + travel {
                let (c, what) = if prev_node == 0 {
                    (RouteConstraint::DepotLeg, "depot")
                } else {
                    (RouteConstraint::StationLeg, "previous station")
                };
                push(
                    c,
                    witness(u, Some(v.station), Some(prev_node), Some(node)),
                    format!(
                        "UAV {u} arrives at station {} at {} before {} (travel from {what})",
                        v.station,
                        v.arr,
                        prev_dep + travel
                    ),
                );
            }
            let tau = inst.stations[v.station].min_service;
            if v.dep - v.arr + TIME_EPS < tau {
                push(
                    RouteConstraint::MinService,
                    witness(u, Some(v.station), None, None),
                    format!(
                        "UAV {u} serves station {} for {} < {tau}",
                        v.station,
                        v.dep - v.arr
                    ),
                );
            }
            prev_node = node;
            prev_dep = v.dep;
        }
        if prev_node != 0 {
            let travel = inst.d_nodes(prev_node, 0) / spec.speed;
            if route.ret + TIME_EPS < prev_dep + travel {
                push(
                    RouteConstraint::ReturnLeg,
                    witness(u, Some(prev_node - 1), Some(prev_node), Some(0)),
                    format!(
                        "UAV {u} returns at {} before {}",
                        route.ret,
                        prev_dep + travel
                    ),
                );
            }
        }
    }

    Ok(RouteReport {
        violations: out,
        collected: plan.collected().into_iter().collect(),
    })
}

/// Earliest-arrival schedule for given visit orders and service durations.
pub fn compute_timing(
    inst: &Instance,
    visit_seqs: &[Vec<usize>],
    service_durs: &[Vec<f64>],
) -> Result<RoutePlan> {
    if visit_seqs.len() != inst.n_uavs() || service_durs.len() != visit_seqs.len() {
        return Err(Error::Input(format!(
            "expected {} visit sequences with matching service durations",
            inst.n_uavs()
        )));
    }
    let mut routes = Vec::with_capacity(visit_seqs.len());
    for (u, (seq, durs)) in visit_seqs.iter().zip(service_durs).enumerate() {
        if seq.len() != durs.len() {
            return Err(Error::Input(format!("UAV {u}: {} visits but {} durations", seq.len(), durs.len())));
        }
        let speed = inst.uavs[u].speed;
        let mut node = 0;
        let mut clock = 0.0;
        let mut visits = Vec::with_capacity(seq.len());
        for (&m, &dur) in seq.iter().zip(durs) {
            if m >= inst.n_stations() {
                return Err(Error::Input(format!("UAV {u}: unknown station id {m}")));
            }
            let tau = inst.stations[m].min_service;
            if dur < tau {
                return Err(Error::Precondition(format!(
                    "UAV {u}: service {dur} at station {m} below minimum {tau}"
                )));
            }
            let arr = clock + inst.d_nodes(node, m + 1) / speed;
            let dep = arr + dur;
            visits.push(Visit { station: m, arr, dep });
            clock = dep;
            node = m + 1;
        }
        let ret = if node == 0 {
            0.0
        } else {
            clock + inst.d_nodes(node, 0) / speed
        };
        routes.push(UavRoute {
            visits,
            depart: 0.0,
            ret,
        });
    }
    Ok(RoutePlan {
        schema: ROUTE_SCHEMA.into(),
        routes,
    })
}

/// `compute_timing` with every service equal to the station minimum.
pub fn compute_timing_min(inst: &Instance, visit_seqs: &[Vec<usize>]) -> Result<RoutePlan> {
    let durs: Vec<Vec<f64>> = visit_seqs
        .iter()
        .map(|seq| {
            seq.iter()
                .map(|&m| inst.stations.get(m).map_or(0.0, |s| s.min_service))
                .collect()
        })
        .collect();
    compute_timing(inst, visit_seqs, &durs)
}

// ---------------------------------------------------------------------------
// Service windows

/// Inclusive slot range during which a UAV hovers at a station.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub station: usize,
    pub first: usize,
    pub last: usize,
}

impl Window {
    pub fn len(&self) -> usize {
        self.last + 1 - self.first
    }

    pub fn is_empty(&self) -> bool {
        self.last < self.first
    }
}

/// Slot-level service indicators `eta(u, m, t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceWindowTable {
    pub n_slot: usize,
    pub windows: Vec<Vec<Window>>,
    /// `serving[u][t]`: station served by UAV `u` in slot `t`.
    serving: Vec<Vec<Option<usize>>>,
}

impl ServiceWindowTable {
    pub fn empty(n_uavs: usize, n_slot: usize) -> Self {
        Self {
            n_slot,
            windows: vec![Vec::new(); n_uavs],
            serving: vec![vec![None; n_slot]; n_uavs],
        }
    }

    pub fn n_uavs(&self) -> usize {
        self.windows.len()
    }

    pub fn eta(&self, u: usize, m: usize, t: usize) -> bool {
        t < self.n_slot && self.serving[u][t] == Some(m)
    }

    pub fn serving(&self, u: usize, t: usize) -> Option<usize> {
        self.serving[u].get(t).copied().flatten()
    }

    /// Whether some slot in `[from, to]` has `eta(u, m, .)` true.
    pub fn open_between(&self, u: usize, m: usize, from: usize, to: usize) -> bool {
        self.windows[u]
            .iter()
            .any(|w| w.station == m && w.first <= to && w.last >= from && !w.is_empty())
    }

    /// Number of slots with some window open, per UAV.
    pub fn open_slots(&self, u: usize) -> usize {
        self.serving[u].iter().filter(|s| s.is_some()).count()
    }

    pub fn window_count(&self) -> usize {
        self.windows.iter().map(|w| w.len()).sum()
    }

    /// Closes every window of UAV `u` from slot `t` on.
    pub fn close_from(&mut self, u: usize, t: usize) {
        for s in self.serving[u].iter_mut().skip(t) {
            *s = None;
        }
        for w in self.windows[u].iter_mut() {
            if w.last >= t {
                w.last = w.last.min(t.saturating_sub(1));
                if t == 0 || w.first >= t {
                    w.last = w.first.wrapping_sub(1);
                }
            }
        }
        self.windows[u].retain(|w| !w.is_empty() && w.last != usize::MAX);
    }
}

/// Slot windows induced by a feasible plan (closed interval endpoints).
pub fn service_windows(inst: &Instance, plan: &RoutePlan) -> Result<ServiceWindowTable> {
    let report = check_route(inst, plan)?;
    if !report.passes() {
        return Err(Error::Input(format!(
            "plan is infeasible: {}",
            report
                .violations
                .iter()
                .map(|v| v.detail.as_str())
                .collect::<Vec<_>>()
                .join("; ")
        )));
    }
    Ok(windows_unchecked(inst, plan))
}

/// Window extraction without the feasibility check.
pub fn windows_unchecked(inst: &Instance, plan: &RoutePlan) -> ServiceWindowTable {
    let n_slot = inst.grid.n_slot;
    let delta = inst.grid.delta;
    let mut table = ServiceWindowTable::empty(plan.routes.len(), n_slot);
    for (u, route) in plan.routes.iter().enumerate() {
        for v in &route.visits {
            let first = (v.arr / delta - TIME_EPS).ceil().max(0.0) as usize;
            let last_f = (v.dep / delta + TIME_EPS).floor();
            if last_f < 0.0 || first >= n_slot {
                continue;
            }
            let last = (last_f as usize).min(n_slot - 1);
            if first > last {
                continue;
            }
            // A slot already claimed by an earlier visit stays with it.
            let mut first_free = first;
            while first_free <= last && table.serving[u][first_free].is_some() {
                first_free += 1;
            }
            if first_free > last {
                continue;
            }
            for t in first_free..=last {
                table.serving[u][t] = Some(v.station);
            }
            table.windows[u].push(Window {
                station: v.station,
                first: first_free,
                last,
            });
        }
    }
    table
}

/// Flight plus hover energy per UAV: `a_fly * length + a_hov * sum(dep - arr)`.
pub fn flight_energy(inst: &Instance, plan: &RoutePlan) -> Vec<f64> {
    plan.routes
        .iter()
        .map(|r| inst.energy.a_fly * r.length(inst) + inst.energy.a_hov * r.service_time())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{euclidean_matrix, generate_scenario, Station};

    /// One-UAV instance with stations at the given coordinates, speed 10.
    pub(crate) fn line_instance(points: &[[f64; 2]], taus: &[f64]) -> Instance {
        let mut inst = generate_scenario(1, "tiny").unwrap();
        inst.grid = crate::model::SlotGrid::new(1.0, 600);
        inst.stations = points
            .iter()
            .zip(taus)
            .enumerate()
            .map(|(id, (p, &tau))| Station {
                id,
                pos: *p,
                value: 1.0,
                weight: 1.0,
                min_service: tau,
                isds: vec![id],
            })
            .collect();
        inst.isds = (0..points.len())
            .map(|id| crate::model::IsdSpec {
                id,
                station: id,
                f_loc: 2.0,
                deadline_dur: 10.0,
            })
            .collect();
        inst.tasks.clear();
        inst.uavs[0].dist_budget = 4800.0;
        inst.dist = euclidean_matrix([0.0, 0.0], &inst.stations);
        inst
    }

    #[test]
    fn timing_single_station() {
        let inst = line_instance(&[[600.0, 0.0]], &[100.0]);
        let plan = compute_timing(&inst, &[vec![0]], &[vec![100.0]]).unwrap();
        let r = &plan.routes[0];
        assert_eq!(r.visits[0].arr, 60.0);
        assert_eq!(r.visits[0].dep, 160.0);
        assert_eq!(r.ret, 220.0);
    }

    #[test]
    fn timing_two_stations_chained() {
        let inst = line_instance(&[[600.0, 0.0], [600.0, 800.0]], &[100.0, 80.0]);
        let plan = compute_timing(&inst, &[vec![0, 1]], &[vec![100.0, 80.0]]).unwrap();
        let r = &plan.routes[0];
        assert_eq!(r.visits[1].arr, 240.0);
        assert_eq!(r.visits[1].dep, 320.0);
        assert_eq!(r.ret, 420.0);
    }

    #[test]
    fn timing_empty_route_and_short_service() {
        let inst = line_instance(&[[600.0, 0.0]], &[100.0]);
        let plan = compute_timing(&inst, &[vec![]], &[vec![]]).unwrap();
        assert_eq!(plan.routes[0].depart, 0.0);
        assert_eq!(plan.routes[0].ret, 0.0);
        let err = compute_timing(&inst, &[vec![0]], &[vec![99.0]]).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn empty_plan_passes_everything() {
        let inst = generate_scenario(1, "paper").unwrap();
        let report = check_route(&inst, &RoutePlan::empty(2)).unwrap();
        assert!(report.passes());
        assert!(report.collected.is_empty());
    }

    #[test]
    fn double_assignment_is_reported() {
        let inst = generate_scenario(1, "paper").unwrap();
        let plan = compute_timing_min(&inst, &[vec![0], vec![0]]).unwrap();
        let report = check_route(&inst, &plan).unwrap();
        assert!(report.violates(RouteConstraint::StationAssignment));
    }

    #[test]
    fn unknown_station_is_input_error() {
        let inst = generate_scenario(1, "paper").unwrap();
        let mut plan = RoutePlan::empty(2);
        plan.routes[0].visits.push(Visit {
            station: 42,
            arr: 0.0,
            dep: 0.0,
        });
        assert!(matches!(check_route(&inst, &plan), Err(Error::Input(_))));
    }

    #[test]
    fn tight_timing_passes_and_early_arrival_fails() {
        let inst = generate_scenario(1, "paper").unwrap();
        // three stations nearest to the depot
        let mut order: Vec<usize> = (0..6).collect();
        order.sort_by(|&a, &b| inst.d_depot_to(a).total_cmp(&inst.d_depot_to(b)));
        let seq: Vec<usize> = order[..3].to_vec();
        let plan = compute_timing_min(&inst, &[seq.clone(), vec![]]).unwrap();
        // hand recomputation of travel times d / v
        let mut clock = 0.0;
        let mut node = 0;
        for (v, &m) in plan.routes[0].visits.iter().zip(&seq) {
            let p = inst.stations[m].pos;
            let from = if node == 0 { [0.0, 0.0] } else { inst.stations[node - 1].pos };
            let d = ((p[0] - from[0]).powi(2) + (p[1] - from[1]).powi(2)).sqrt();
            clock += d / 10.0;
            assert!((v.arr - clock).abs() < 1e-9);
            clock += inst.stations[m].min_service;
            node = m + 1;
        }
        assert!(check_route(&inst, &plan).unwrap().passes());

        let mut bad = plan.clone();
        bad.routes[0].visits[1].arr -= 1.0;
        bad.routes[0].visits[1].dep -= 1.0;
        let report = check_route(&inst, &bad).unwrap();
        assert!(report.violates(RouteConstraint::StationLeg));
    }

    #[test]
    fn windows_closed_intervals() {
        let inst = line_instance(&[[600.0, 0.0], [0.0, 900.0]], &[100.0, 10.0]);
        let plan = compute_timing(&inst, &[vec![0]], &[vec![100.0]]).unwrap();
        let table = service_windows(&inst, &plan).unwrap();
        let open: Vec<usize> = (0..600).filter(|&t| table.eta(0, 0, t)).collect();
        assert_eq!(open.len(), 101);
        assert_eq!(open[0], 60);
        assert_eq!(*open.last().unwrap(), 160);
        assert!((0..600).all(|t| !table.eta(0, 1, t)));
    }

    #[test]
    fn windows_reject_infeasible_plan() {
        let inst = generate_scenario(1, "paper").unwrap();
        let plan = compute_timing_min(&inst, &[vec![0], vec![0]]).unwrap();
        assert!(service_windows(&inst, &plan).is_err());
    }

    #[test]
    fn flight_energy_examples() {
        let mut inst = line_instance(&[[600.0, 0.0]], &[0.0]);
        assert_eq!(flight_energy(&inst, &RoutePlan::empty(1)), vec![0.0]);
        inst.energy.a_fly = 1.0;
        inst.energy.a_hov = 0.0;
        let plan = compute_timing(&inst, &[vec![0]], &[vec![0.0]]).unwrap();
        assert_eq!(flight_energy(&inst, &plan), vec![1200.0]);

        // 1800 m tour with 180 s of service under default coefficients
        let mut inst = line_instance(&[[300.0, 0.0], [600.0, 0.0]], &[100.0, 80.0]);
        inst.stations[1].pos = [900.0, 0.0];
        inst.dist = euclidean_matrix([0.0, 0.0], &inst.stations);
        let plan = compute_timing(&inst, &[vec![0, 1]], &[vec![100.0, 80.0]]).unwrap();
        assert_eq!(plan.routes[0].length(&inst), 1800.0);
        assert_eq!(flight_energy(&inst, &plan), vec![180_000.0]);
    }

    #[test]
    fn multi_tour_arcs_rejected() {
        let inst = line_instance(&[[600.0, 0.0], [0.0, 900.0]], &[1.0, 1.0]);
        let arcs = vec![vec![(0, 1), (1, 0), (0, 2), (2, 0)]];
        let err = RoutePlan::from_arcs(&inst, &arcs, &[]).unwrap_err();
        assert!(err.to_string().contains("multi-tour"));
        let ok = RoutePlan::from_arcs(&inst, &[vec![(0, 2), (2, 1), (1, 0)]], &[]).unwrap();
        assert_eq!(ok.routes[0].stations().collect::<Vec<_>>(), vec![1, 0]);
    }
}
