//! Generalised advantage estimation.

use alloc::vec;
use alloc::vec::Vec;

/// Advantages and value targets for one trajectory segment.
///
/// `next_values[t]` is the critic's value of the state reached after step
/// `t`; it is ignored when `terminal[t]`. `episode_end[t]` cuts the trace so
/// advantages never leak across episode boundaries (true for both terminal
/// and truncated steps).
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    terminal: &[bool],
    episode_end: &[bool],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(
        values.len() == n && next_values.len() == n && terminal.len() == n && episode_end.len() == n,
        "gae inputs must share one length"
    );
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let bootstrap = if terminal[t] { 0.0 } else { next_values[t] };
        let delta = rewards[t] + gamma * bootstrap - values[t];
        let carry = if episode_end[t] { 0.0 } else { running };
        running = delta + gamma * lambda * carry;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_zero_rollout() {
        let (adv, ret) = gae(&[0.0; 4], &[0.0; 4], &[0.0; 4], &[false; 4], &[false; 4], 0.99, 0.95);
        assert_eq!(adv, vec![0.0; 4]);
        assert_eq!(ret, vec![0.0; 4]);
    }

    #[test]
    fn three_step_episode_by_hand() {
        // gamma 0.9, lambda 0.8; terminal after the third step
        let r = [1.0, 0.0, 2.0];
        let v = [0.5, 0.4, 0.3];
        let nv = [0.4, 0.3, 99.0];
        // delta2 = 2 - 0.3 = 1.7
        // delta1 = 0 + 0.9*0.3 - 0.4 = -0.13
        // delta0 = 1 + 0.9*0.4 - 0.5 = 0.86
        // A2 = 1.7
        // A1 = -0.13 + 0.72*1.7 = 1.094
        // A0 = 0.86 + 0.72*1.094 = 1.64768
        let (adv, ret) = gae(&r, &v, &nv, &[false, false, true], &[false, false, true], 0.9, 0.8);
        let want = [1.64768, 1.094, 1.7];
        for (a, w) in adv.iter().zip(want) {
            assert!((a - w).abs() < 1e-12, "{a} vs {w}");
        }
        assert!((ret[0] - (1.64768 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn lambda_zero_is_td_error() {
        let r = [0.3, -1.0, 0.7, 0.1];
        let v = [0.2, 0.9, -0.4, 0.5];
        let nv = [0.9, -0.4, 0.5, 0.8];
        let (adv, _) = gae(&r, &v, &nv, &[false; 4], &[false; 4], 0.95, 0.0);
        for t in 0..4 {
            let td = r[t] + 0.95 * nv[t] - v[t];
            assert!((adv[t] - td).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_one_is_monte_carlo() {
        let r = [0.3, -1.0, 0.7, 0.1];
        let v = [0.2, 0.9, -0.4, 0.5];
        let nv = [0.9, -0.4, 0.5, 123.0];
        let term = [false, false, false, true];
        let (adv, _) = gae(&r, &v, &nv, &term, &term, 0.95, 1.0);
        for t in 0..4 {
            let mc: f64 = (t..4).map(|k| 0.95f64.powi((k - t) as i32) * r[k]).sum();
            assert!((adv[t] - (mc - v[t])).abs() < 1e-12);
        }
    }

    #[test]
    fn truncation_bootstraps_but_cuts_trace() {
        let (adv, _) = gae(&[1.0, 1.0], &[0.0, 0.0], &[0.0, 10.0], &[false, false], &[true, false], 0.5, 1.0);
        assert_eq!(adv[1], 1.0 + 0.5 * 10.0);
        assert_eq!(adv[0], 1.0);
    }
}
