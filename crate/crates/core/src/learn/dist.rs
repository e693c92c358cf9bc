//! Action heads: masked categorical blocks and tanh-squashed Gaussians.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng64;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Layout of the actor output: categorical logits for each block, then
/// `n_cont` means, then `n_cont` raw log-std values.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub blocks: Vec<usize>,
    pub n_cont: usize,
}

impl ActionSpec {
    pub fn n_logits(&self) -> usize {
        self.blocks.iter().sum()
    }

    pub fn out_dim(&self) -> usize {
        self.n_logits() + 2 * self.n_cont
    }

    pub fn check_mask(&self, mask: &[bool]) -> Result<()> {
        if mask.len() != self.n_logits() {
            return Err(Error::Shape {
                expected: self.n_logits(),
                got: mask.len(),
            });
        }
        let mut off = 0;
        for (b, &n) in self.blocks.iter().enumerate() {
            if !mask[off..off + n].iter().any(|&x| x) {
                return Err(Error::Precondition(format!("action block {b} has every option masked")));
            }
            off += n;
        }
        Ok(())
    }
}

/// Sampled or replayed action: one index per block plus pre-squash values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub cats: Vec<usize>,
    pub pre: Vec<f64>,
}

impl Action {
    /// Squashed continuous value in (-1, 1).
    pub fn squashed(&self, j: usize) -> f64 {
        self.pre[j].tanh()
    }

    /// Squashed continuous value mapped to (0, 1).
    pub fn unit(&self, j: usize) -> f64 {
        0.5 * (self.pre[j].tanh() + 1.0)
    }
}

/// Smooth log-std bound and its derivative.
pub fn log_std(raw: f64) -> (f64, f64) {
    let th = raw.tanh();
    let half = 0.5 * (LOG_STD_MAX - LOG_STD_MIN);
    (LOG_STD_MIN + half * (th + 1.0), half * (1.0 - th * th))
}

/// Raw head value that yields the requested log-std.
pub fn raw_for_log_std(ls: f64) -> f64 {
    let half = 0.5 * (LOG_STD_MAX - LOG_STD_MIN);
    ((ls - LOG_STD_MIN) / half - 1.0).clamp(-0.999_999, 0.999_999).atanh()
}

/// Masked softmax over one block; masked entries get probability 0.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    let top = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&z, _)| z)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(&z, &m)| if m { (z - top).exp() } else { 0.0 })
        .collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    p
}

/// Per-sample evaluation of the whole action distribution.
#[derive(Clone, Debug, Default)]
pub struct HeadEval {
    pub logp: f64,
    pub entropy: f64,
}

/// Log-probability and entropy of `action` under the head outputs `out`.
///
/// When `grad` is given it receives `c_logp * dlogp/dout + c_ent * dH/dout`.
pub fn evaluate(
    spec: &ActionSpec,
    out: &[f64],
    mask: &[bool],
    action: &Action,
    grad: Option<(&mut [f64], f64, f64)>,
) -> HeadEval {
    let mut logp = 0.0;
    let mut entropy = 0.0;
    let mut g = grad;
    let mut off = 0;
    for (b, &n) in spec.blocks.iter().enumerate() {
        let p = masked_softmax(&out[off..off + n], &mask[off..off + n]);
        let a = action.cats[b];
        logp += p[a].ln();
        let h: f64 = -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>();
        entropy += h;
        if let Some((gr, c_lp, c_ent)) = g.as_mut() {
            for i in 0..n {
                if !mask[off + i] || p[i] == 0.0 {
                    continue;
                }
                let dlp = if i == a { 1.0 } else { 0.0 } - p[i];
                let dh = -p[i] * (p[i].ln() + h);
                gr[off + i] += *c_lp * dlp + *c_ent * dh;
            }
        }
        off += n;
    }
    let nl = spec.n_logits();
    for j in 0..spec.n_cont {
        let mu = out[nl + j];
        let (ls, dls) = log_std(out[nl + spec.n_cont + j]);
        let sigma = ls.exp();
        let x = action.pre[j];
        let zt = (x - mu) / sigma;
        let th = x.tanh();
        logp += -0.5 * zt * zt - ls - HALF_LN_2PI - (1.0 - th * th + 1e-12).ln();
        entropy += 0.5 + HALF_LN_2PI + ls;
        if let Some((gr, c_lp, c_ent)) = g.as_mut() {
            gr[nl + j] += *c_lp * zt / sigma;
            gr[nl + spec.n_cont + j] += (*c_lp * (zt * zt - 1.0) + *c_ent) * dls;
        }
    }
    HeadEval { logp, entropy }
}

/// Draws an action; `greedy` takes modes and means instead.
pub fn sample(spec: &ActionSpec, out: &[f64], mask: &[bool], rng: &mut Rng64, greedy: bool) -> Action {
    let mut cats = Vec::with_capacity(spec.blocks.len());
    let mut off = 0;
    for &n in &spec.blocks {
        let p = masked_softmax(&out[off..off + n], &mask[off..off + n]);
        let pick = if greedy {
            (0..n).fold(0, |best, i| if p[i] > p[best] { i } else { best })
        } else {
            let u = rng.uniform();
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &pi) in p.iter().enumerate() {
                if pi <= 0.0 {
                    continue;
                }
                acc += pi;
                if u < acc {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave u just above the final sum
            pick.unwrap_or_else(|| (0..n).rev().find(|&i| p[i] > 0.0).unwrap_or(0))
        };
        cats.push(pick);
        off += n;
    }
    let nl = spec.n_logits();
    let pre = (0..spec.n_cont)
        .map(|j| {
            let mu = out[nl + j];
            if greedy {
                mu
            } else {
                let (ls, _) = log_std(out[nl + spec.n_cont + j]);
                mu + ls.exp() * rng.standard_normal()
            }
        })
        .collect();
    Action { cats, pre }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ActionSpec {
        ActionSpec {
            blocks: vec![4, 3],
            n_cont: 2,
        }
    }

    #[test]
    fn zero_logits_give_uniform_over_unmasked() {
        let s = spec();
        let out = vec![0.0; s.out_dim()];
        let mask = vec![true, false, true, true, true, true, true];
        let p = masked_softmax(&out[..4], &mask[..4]);
        assert_eq!(p[1], 0.0);
        for i in [0, 2, 3] {
            assert!((p[i] - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_unmasked_symbol_is_certain() {
        let s = spec();
        let mut rng = Rng64::new(1);
        let out: Vec<f64> = (0..s.out_dim()).map(|_| rng.gaussian(0.0, 3.0)).collect();
        let mask = vec![false, false, true, false, true, true, true];
        for _ in 0..100 {
            let a = sample(&s, &out, &mask, &mut rng, false);
            assert_eq!(a.cats[0], 2);
        }
        let p = masked_softmax(&out[..4], &mask[..4]);
        assert_eq!(p[2], 1.0);
    }

    #[test]
    fn logp_matches_direct_density() {
        let s = spec();
        let mut rng = Rng64::new(5);
        let out: Vec<f64> = (0..s.out_dim()).map(|_| rng.gaussian(0.0, 1.0)).collect();
        let mask = vec![true; 7];
        let a = sample(&s, &out, &mask, &mut rng, false);
        let ev = evaluate(&s, &out, &mask, &a, None);
        // direct recomputation
        let mut lp = 0.0;
        let z0: f64 = out[..4].iter().map(|z| z.exp()).sum();
        lp += (out[a.cats[0]].exp() / z0).ln();
        let z1: f64 = out[4..7].iter().map(|z| z.exp()).sum();
        lp += (out[4 + a.cats[1]].exp() / z1).ln();
        for j in 0..2 {
            let mu = out[7 + j];
            let ls = LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (out[9 + j].tanh() + 1.0);
            let sd = ls.exp();
            let x = a.pre[j];
            let dens = (-(x - mu).powi(2) / (2.0 * sd * sd)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
            let jac = 1.0 - x.tanh().powi(2);
            lp += (dens / jac).ln();
        }
        assert!((ev.logp - lp).abs() < 1e-9, "{} vs {}", ev.logp, lp);
    }

    #[test]
    fn masked_entropy_bounded_by_log_count() {
        let mut rng = Rng64::new(9);
        let s = ActionSpec {
            blocks: vec![6],
            n_cont: 0,
        };
        for _ in 0..500 {
            let out: Vec<f64> = (0..6).map(|_| rng.gaussian(0.0, 2.0)).collect();
            let mask: Vec<bool> = (0..6).map(|i| i == 0 || rng.uniform() < 0.5).collect();
            let n = mask.iter().filter(|&&m| m).count();
            let a = Action {
                cats: vec![0],
                pre: vec![],
            };
            let ev = evaluate(&s, &out, &mask, &a, None);
            assert!(ev.entropy <= (n as f64).ln() + 1e-12);
        }
    }

    #[test]
    fn log_std_inverse() {
        for ls in [-4.0, -1.0, 0.0, 0.5] {
            assert!((log_std(raw_for_log_std(ls)).0 - ls).abs() < 1e-9);
        }
    }
}
