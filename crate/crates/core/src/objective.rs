//! Episode-level objective and its five components.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mec::{SlotLedger, TaskRecord};
use crate::model::{Instance, ObjectiveWeights};
use crate::routing::RoutePlan;

/// Raw (unweighted) objective terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RawTerms {
    pub collection: f64,
    pub ontime: f64,
    pub miss: f64,
    pub flow: f64,
    pub resource: f64,
}

impl RawTerms {
    pub fn weighted(&self, w: &ObjectiveWeights) -> ObjectiveBreakdown {
        let collection_value = w.w_col * self.collection;
        let ontime_return = w.w_cmp * self.ontime;
        let miss_cost = w.w_miss * self.miss;
        let flow_cost = w.w_flow * self.flow;
        let resource_cost = w.w_res * self.resource;
        ObjectiveBreakdown {
            collection_value,
            ontime_return,
            miss_cost,
            flow_cost,
            resource_cost,
            total: collection_value + ontime_return - miss_cost - flow_cost - resource_cost,
            raw: *self,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub collection_value: f64,
    pub ontime_return: f64,
    pub miss_cost: f64,
    pub flow_cost: f64,
    pub resource_cost: f64,
    pub total: f64,
    pub raw: RawTerms,
}

impl ObjectiveBreakdown {
    pub const CSV_COLUMNS: [&'static str; 6] = [
        "collection_value",
        "ontime_return",
        "miss_cost",
        "flow_cost",
        "resource_cost",
        "objective",
    ];

    pub fn csv_values(&self) -> [f64; 6] {
        [
            self.collection_value,
            self.ontime_return,
            self.miss_cost,
            self.flow_cost,
            self.resource_cost,
            self.total,
        ]
    }
}

pub fn raw_terms(inst: &Instance, plan: &RoutePlan, recs: &[TaskRecord], ledger: &SlotLedger) -> RawTerms {
    let collection = plan.collected().iter().map(|&m| inst.stations[m].value).sum();
    let mut ontime = 0.0;
    let mut miss = 0.0;
    let mut flow = 0.0;
    for rec in recs {
        if rec.z {
            ontime += 1.0;
        } else {
            miss += 1.0;
        }
        flow += rec.completion_time - inst.grid.time_of(rec.spec.gen_slot);
    }
    let resource = ledger.slots.iter().map(|s| s.r_cmp + s.r_com).sum();
    RawTerms {
        collection,
        ontime,
        miss,
        flow,
        resource,
    }
}

/// Weighted objective of a finalized episode.
pub fn evaluate(
    inst: &Instance,
    plan: &RoutePlan,
    recs: &[TaskRecord],
    ledger: &SlotLedger,
) -> Result<ObjectiveBreakdown> {
    if !ledger.finalized {
        return Err(Error::State("episode not finalized".into()));
    }
    Ok(raw_terms(inst, plan, recs, ledger).weighted(&inst.weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mec::{finalize, Mode};
    use crate::model::{generate_scenario, TaskSpec};
    use proptest::prelude::*;

    #[test]
    fn empty_episode_is_zero() {
        let inst = generate_scenario(1, "tiny").unwrap().with_tasks(vec![]);
        let mut ledger = SlotLedger::new(&inst);
        finalize(&inst, &mut ledger, &mut []);
        let b = evaluate(&inst, &RoutePlan::empty(1), &[], &ledger).unwrap();
        assert_eq!(b, ObjectiveBreakdown::default());
    }

    #[test]
    fn unfinalized_is_state_error() {
        let inst = generate_scenario(1, "tiny").unwrap();
        let ledger = SlotLedger::new(&inst);
        assert!(matches!(
            evaluate(&inst, &RoutePlan::empty(1), &[], &ledger),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn flow_of_task_completed_at_slot_nine() {
        let mut inst = generate_scenario(1, "tiny").unwrap();
        inst.weights = ObjectiveWeights {
            w_col: 0.0,
            w_cmp: 0.0,
            w_miss: 0.0,
            w_flow: 1.0,
            w_res: 0.0,
        };
        let spec = TaskSpec {
            isd: 0,
            gen_slot: 0,
            workload: 1.0,
            input_bits: 1.0,
            deadline: Some(20.0),
        };
        let mut rec = TaskRecord::new(spec, inst.grid.t_mission);
        rec.mode = Mode::Local;
        rec.done_cmp = 1.0;
        crate::mec::check_completion(&inst, &mut rec, 9);
        let mut recs = vec![rec];
        let mut ledger = SlotLedger::new(&inst);
        finalize(&inst, &mut ledger, &mut recs);
        let b = evaluate(&inst, &RoutePlan::empty(1), &recs, &ledger).unwrap();
        assert_eq!(b.flow_cost, 10.0);
        assert_eq!(b.total, -10.0);
    }

    fn raw() -> impl Strategy<Value = RawTerms> {
        (0.0..100.0, 0.0..50.0, 0.0..50.0, 0.0..1e4, 0.0..600.0).prop_map(|(a, b, c, d, e)| RawTerms {
            collection: a,
            ontime: b,
            miss: c,
            flow: d,
            resource: e,
        })
    }

    fn weights() -> impl Strategy<Value = ObjectiveWeights> {
        (0.0..5.0, 0.0..5.0, 0.0..5.0, 0.0..1.0, 0.0..1.0).prop_map(|(a, b, c, d, e)| ObjectiveWeights {
            w_col: a,
            w_cmp: b,
            w_miss: c,
            w_flow: d,
            w_res: e,
        })
    }

    proptest! {
        #[test]
        fn zero_weights_give_zero(r in raw()) {
            let w = ObjectiveWeights { w_col: 0.0, w_cmp: 0.0, w_miss: 0.0, w_flow: 0.0, w_res: 0.0 };
            prop_assert_eq!(r.weighted(&w).total, 0.0);
        }

        #[test]
        fn total_linear_in_each_weight(r in raw(), w in weights(), s in 0.1f64..10.0) {
            let base = r.weighted(&w).total;
            let mut w2 = w;
            w2.w_col *= s;
            let expect = base + (s - 1.0) * w.w_col * r.collection;
            let got = r.weighted(&w2).total;
            prop_assert!((got - expect).abs() <= 1e-9 * (1.0 + expect.abs()));
        }

        #[test]
        fn argmax_invariant_to_uniform_scaling(
            cands in proptest::collection::vec(raw(), 2..8),
            w in weights(),
            s in 0.01f64..100.0,
        ) {
            let ws = ObjectiveWeights {
                w_col: w.w_col * s, w_cmp: w.w_cmp * s, w_miss: w.w_miss * s,
                w_flow: w.w_flow * s, w_res: w.w_res * s,
            };
            let best = |w: &ObjectiveWeights| {
                let vals: Vec<f64> = cands.iter().map(|r| r.weighted(w).total).collect();
                let top = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                vals.iter().map(|v| (top - v) <= 1e-9 * (1.0 + top.abs())).collect::<Vec<_>>()
            };
            let a = best(&w);
            let b = best(&ws);
            // every strict winner under one scaling is a (near) winner under the other
            for (x, y) in a.iter().zip(&b) {
                if *x { prop_assert!(*y || a.iter().filter(|v| **v).count() > 1); }
            }
        }
    }
}
