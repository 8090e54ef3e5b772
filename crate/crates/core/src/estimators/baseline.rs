use crate::dataset::TrajectoryDataset;
use crate::error::{DiceError, Result};

/// Mean logged reward: the behaviour policy's own average-reward objective.
pub fn average_reward_baseline(dataset: &TrajectoryDataset) -> Result<f64> {
    let n = dataset.num_transitions();
    if n == 0 {
        return Err(DiceError::input("average reward of an empty dataset"));
    }
    Ok(dataset.records().iter().map(|r| r.reward).sum::<f64>() / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate, GenerateOptions};
    use crate::mdp::{Policy, TabularMdp};

    #[test]
    fn constant_reward_and_empty() {
        let mdp =
            TabularMdp::new(1, 1, vec![vec![vec![0.8]]], vec![vec![0.2]], vec![vec![2.5]], vec![1.0], 0.9).unwrap();
        let p = Policy::uniform(1, 1);
        let ds = generate(&mdp, &p, &p, &GenerateOptions { num_trajectories: 10, ..Default::default() }).unwrap();
        assert_eq!(average_reward_baseline(&ds).unwrap(), 2.5);
        let empty = TrajectoryDataset::from_records(ds.header.clone(), vec![]).unwrap();
        assert!(average_reward_baseline(&empty).is_err());
    }
}
