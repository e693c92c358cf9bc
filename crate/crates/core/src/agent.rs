//! Glue between the environments and the learner: action layouts, mask
//! flattening and action decoding.

use crate::env::{LowerAction, LowerEnv, RowDecision, UpperAction, UpperEnv};
use crate::learn::{Action, ActionSpec};

/// Upper head: one routing block of `M + 2` symbols per UAV, one priority
/// scalar per UAV.
pub fn upper_spec(n_uavs: usize, n_stations: usize) -> ActionSpec {
    ActionSpec {
        blocks: vec![n_stations + 2; n_uavs],
        n_cont: n_uavs,
    }
}

/// Lower head: one option block per actionable row, then `(alpha, beta)`
/// per row.
pub fn lower_spec(k_g: usize, n_options: usize) -> ActionSpec {
    ActionSpec {
        blocks: vec![n_options; k_g],
        n_cont: 2 * k_g,
    }
}

pub fn flatten_mask(mask: &[Vec<bool>]) -> Vec<bool> {
    mask.iter().flatten().copied().collect()
}

pub fn upper_action(a: &Action, n_uavs: usize) -> UpperAction {
    UpperAction {
        prio: (0..n_uavs).map(|u| a.squashed(u)).collect(),
        route_sym: a.cats.clone(),
    }
}

pub fn lower_action(a: &Action, k_g: usize) -> LowerAction {
    LowerAction {
        rows: (0..k_g)
            .map(|r| RowDecision {
                option: a.cats[r],
                alpha: a.unit(2 * r),
                beta: a.unit(2 * r + 1),
            })
            .collect(),
    }
}

/// Uniform interface the trainer drives.
pub trait Episodic {
    fn spec(&self) -> ActionSpec;
    fn obs_dim(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn flat_mask(&self) -> Vec<bool>;
    /// Applies an action; returns `(next state, reward, done)`.
    fn apply(&mut self, a: &Action) -> (Vec<f64>, f64, bool);
}

impl Episodic for UpperEnv {
    fn spec(&self) -> ActionSpec {
        let inst = self.instance();
        upper_spec(inst.n_uavs(), inst.n_stations())
    }

    fn obs_dim(&self) -> usize {
        self.state_len()
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        UpperEnv::reset(self, seed)
    }

    fn flat_mask(&self) -> Vec<bool> {
        flatten_mask(&self.mask())
    }

    fn apply(&mut self, a: &Action) -> (Vec<f64>, f64, bool) {
        let s = self.step(&upper_action(a, self.instance().n_uavs()));
        (s.state, s.reward, s.done)
    }
}

impl Episodic for LowerEnv {
    fn spec(&self) -> ActionSpec {
        lower_spec(self.config().k_g, self.n_options())
    }

    fn obs_dim(&self) -> usize {
        self.state_len()
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        LowerEnv::reset(self, seed)
    }

    fn flat_mask(&self) -> Vec<bool> {
        flatten_mask(&self.mask())
    }

    fn apply(&mut self, a: &Action) -> (Vec<f64>, f64, bool) {
        let s = self.step(&lower_action(a, self.config().k_g));
        (s.state, s.reward, s.done)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_handoff, EnvConfig};
    use crate::model::generate_scenario;
    use crate::routing::RoutePlan;
    use std::sync::Arc;

    #[test]
    fn layouts_match_environment_shapes() {
        let inst = Arc::new(generate_scenario(1, "paper").unwrap());
        let cfg = EnvConfig::default();
        let up = UpperEnv::new(inst.clone(), cfg.clone());
        assert_eq!(up.spec().n_logits(), up.flat_mask().len());
        assert_eq!(up.spec().out_dim(), 2 * 8 + 2 * 2);
        let h = make_handoff(&inst, &RoutePlan::empty(2)).unwrap();
        let mut low = LowerEnv::new(inst, h, cfg);
        low.reset(0);
        assert_eq!(low.spec().n_logits(), low.flat_mask().len());
        assert_eq!(low.spec().out_dim(), 8 * 6 + 16 * 2);
    }

    #[test]
    fn decoding_maps_heads_to_fields() {
        let a = Action {
            cats: vec![3, 0],
            pre: vec![0.0, 100.0, -100.0, 0.0],
        };
        let low = lower_action(&a, 2);
        assert_eq!(low.rows[0].option, 3);
        assert_eq!(low.rows[0].alpha, 0.5);
        assert_eq!(low.rows[0].beta, 1.0);
        assert_eq!(low.rows[1].alpha, 0.0);
        let up = upper_action(&a, 2);
        assert_eq!(up.route_sym, vec![3, 0]);
        assert_eq!(up.prio[1], 1.0);
    }
}
