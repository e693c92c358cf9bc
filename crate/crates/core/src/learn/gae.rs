use crate::error::{Error, Result};

/// Generalized advantage estimates and returns (`advantage + value`).
///
/// `dones[t]` marks the end of an episode after step `t`; `last_value`
/// bootstraps a segment cut off mid-episode.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: if values.len() != n { values.len() } else { dones.len() },
        });
    }
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let (next_v, carry) = if dones[t] {
            (0.0, 0.0)
        } else if t + 1 == n {
            (last_value, 0.0)
        } else {
            (values[t + 1], acc)
        };
        let delta = rewards[t] + gamma * next_v - values[t];
        acc = delta + gamma * lambda * carry;
        adv[t] = acc;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, ret))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_zero_is_one_step_td() {
        let r = [1.0, 2.0, 3.0];
        let v = [0.5, 0.25, 0.125];
        let (a, _) = gae(&r, &v, &[false; 3], 4.0, 0.9, 0.0).unwrap();
        assert_eq!(a[0], 1.0 + 0.9 * 0.25 - 0.5);
        assert_eq!(a[2], 3.0 + 0.9 * 4.0 - 0.125);
    }

    #[test]
    fn gamma_zero_is_reward_minus_value() {
        let r = [1.0, -2.0];
        let v = [0.5, 0.5];
        let (a, ret) = gae(&r, &v, &[false, false], 9.0, 0.0, 0.95).unwrap();
        assert_eq!(a, vec![0.5, -2.5]);
        assert_eq!(ret, vec![1.0, -2.0]);
    }

    #[test]
    fn length_mismatch_is_error() {
        assert!(gae(&[1.0], &[1.0, 2.0], &[false], 0.0, 0.9, 0.9).is_err());
    }
}
