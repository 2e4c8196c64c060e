use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::nn::GaussianPolicy;

/// Mean undiscounted return of `episodes` runs with the deterministic policy
/// output, cycling through `goals`. Initial-state noise is drawn from `seed`.
pub fn evaluate_policy(
    env: &Environment,
    policy: &GaussianPolicy,
    goals: &[usize],
    episodes: usize,
    seed: u64,
) -> Result<f64> {
    Ok(episode_returns(env, policy, goals, episodes, seed)?.iter().sum::<f64>() / episodes as f64)
}

/// Per-episode returns; episode `k` uses goal `goals[k % goals.len()]`.
pub fn episode_returns(
    env: &Environment,
    policy: &GaussianPolicy,
    goals: &[usize],
    episodes: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if goals.is_empty() || episodes == 0 {
        return Err(Error::EmptyInput("evaluation needs goals and episodes".into()));
    }
    let mut env = env.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(episodes);
    for k in 0..episodes {
        let mut s = env.reset(goals[k % goals.len()], &mut rng)?;
        let mut ret = 0.0;
        loop {
            let a = policy.forward_mean(&s)?;
            let step = env.step(&a)?;
            ret += step.reward;
            if step.terminated || step.truncated {
                break;
            }
            s = step.state;
        }
        out.push(ret);
    }
    Ok(out)
}
