use crate::error::{shape_err, Result};

/// Generalized advantage estimation over a flat rollout.
///
/// `next_values[t]` is `V(s_{t+1})`; it is ignored where `terminated[t]`.
/// `episode_end[t]` marks the last step of an episode segment (termination,
/// truncation or the end of the rollout) and stops the backward recursion.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    terminated: &[bool],
    episode_end: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if [values.len(), next_values.len(), terminated.len(), episode_end.len()]
        .iter()
        .any(|l| *l != n)
    {
        return shape_err("GAE inputs must share one length");
    }
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let bootstrap = if terminated[t] { 0.0 } else { gamma * next_values[t] };
        let delta = rewards[t] + bootstrap - values[t];
        if episode_end[t] {
            running = 0.0;
        }
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    let targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, targets))
}

/// Z-scores in place with the population standard deviation.
///
/// Returns `false` (and zeroes the slice) when the variance vanishes.
pub fn normalize_advantages(adv: &mut [f64]) -> bool {
    if adv.is_empty() {
        return false;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 1e-12 * mean.abs().max(1.0)) {
        log::warn!("advantages have zero variance; using zeros");
        adv.iter_mut().for_each(|a| *a = 0.0);
        return false;
    }
    adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// O(T^2) reference: explicit discounted sum of TD errors within one episode.
    fn brute_force(rewards: &[f64], values: &[f64], last_next: f64, terminal: bool, gamma: f64, lambda: f64) -> Vec<f64> {
        let n = rewards.len();
        let next = |t: usize| {
            if t + 1 < n {
                values[t + 1]
            } else if terminal {
                0.0
            } else {
                last_next
            }
        };
        let delta: Vec<f64> = (0..n).map(|t| rewards[t] + gamma * next(t) - values[t]).collect();
        (0..n)
            .map(|t| (t..n).map(|k| (gamma * lambda).powi((k - t) as i32) * delta[k]).sum())
            .collect()
    }

    fn flags(n: usize, terminal: bool) -> (Vec<bool>, Vec<bool>) {
        let mut term = vec![false; n];
        let mut end = vec![false; n];
        end[n - 1] = true;
        term[n - 1] = terminal;
        (term, end)
    }

    #[test]
    fn one_step_td() {
        let (a, _) = compute_gae(&[1.0], &[0.5], &[2.0], &[false], &[true], 0.9, 0.0).unwrap();
        assert!((a[0] - (1.0 + 0.9 * 2.0 - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn monte_carlo_return() {
        let r = [1.0, 2.0, 3.0];
        let (term, end) = flags(3, true);
        let (a, _) = compute_gae(&r, &[0.0; 3], &[0.0; 3], &term, &end, 1.0, 1.0).unwrap();
        assert_eq!(a, vec![6.0, 5.0, 3.0]);
    }

    #[test]
    fn episodes_do_not_leak() {
        let r = [1.0, 1.0, 1.0, 1.0];
        let term = [false, true, false, false];
        let end = [false, true, false, true];
        let (a, _) = compute_gae(&r, &[0.0; 4], &[0.0; 4], &term, &end, 1.0, 1.0).unwrap();
        assert_eq!(a, vec![2.0, 1.0, 2.0, 1.0]);
    }

    #[test]
    fn truncation_bootstraps_termination_does_not() {
        let (a, _) = compute_gae(&[0.0], &[0.0], &[5.0], &[false], &[true], 0.5, 0.9).unwrap();
        assert_eq!(a[0], 2.5);
        let (a, _) = compute_gae(&[0.0], &[0.0], &[5.0], &[true], &[true], 0.5, 0.9).unwrap();
        assert_eq!(a[0], 0.0);
    }

    #[test]
    fn normalization_examples() {
        let mut a = vec![1.0, -1.0];
        normalize_advantages(&mut a);
        assert_eq!(a, vec![1.0, -1.0]);
        let mut c = vec![5.0, 5.0, 5.0];
        assert!(!normalize_advantages(&mut c));
        assert_eq!(c, vec![0.0; 3]);
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            episode in prop::collection::vec((-2.0f64..2.0, -1.0f64..1.0), 1..256),
            last_next in -1.0f64..1.0,
            terminal: bool,
        ) {
            let rewards: Vec<f64> = episode.iter().map(|p| p.0).collect();
            let values: Vec<f64> = episode.iter().map(|p| p.1).collect();
            let n = rewards.len();
            let mut next: Vec<f64> = values[1..].to_vec();
            next.push(last_next);
            let (term, end) = flags(n, terminal);
            let (adv, tgt) = compute_gae(&rewards, &values, &next, &term, &end, 0.99, 0.9).unwrap();
            let oracle = brute_force(&rewards, &values, last_next, terminal, 0.99, 0.9);
            for t in 0..n {
                prop_assert!((adv[t] - oracle[t]).abs() <= 1e-9);
                prop_assert!((tgt[t] - (oracle[t] + values[t])).abs() <= 1e-9);
            }
        }

        #[test]
        fn normalized_moments(mut adv in prop::collection::vec(-100.0f64..100.0, 2..500)) {
            prop_assume!(adv.iter().any(|a| (a - adv[0]).abs() > 1e-3));
            normalize_advantages(&mut adv);
            let n = adv.len() as f64;
            let mean = adv.iter().sum::<f64>() / n;
            let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!(mean.abs() < 1e-10);
            prop_assert!((std - 1.0).abs() < 1e-10);
        }
    }
}
