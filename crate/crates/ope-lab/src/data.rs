//! Trajectories, datasets, and their on-disk format.
//!
//! A [`Trajectory`] is one episode: `num_steps` rows of (state, action,
//! reward). A [`Dataset`] is a batch of independent trajectories sharing one
//! horizon, together with the seed record needed to regenerate it. Datasets
//! are immutable once built and safe to share across threads.
//!
//! On disk a dataset is a CSV with one row per timestep — columns
//! `(traj_id, t, s0..s{d-1}, action, reward)` — plus a JSON sidecar holding
//! the generating spec, seed record, horizon, and early-termination points.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{OpeError, Result};

/// One episode of length `num_steps` (= T + 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<f64>, // row-major, num_steps x state_dim
    actions: Vec<u32>,
    rewards: Vec<f64>,
    state_dim: usize,
    /// First absorbing step for episodes that terminated early; steps at and
    /// after this index carry zero reward and a frozen state, and are treated
    /// as a single-action absorbing regime by fitting and weighting code.
    term_step: Option<usize>,
}

impl Trajectory {
    pub fn new(states: Vec<f64>, actions: Vec<u32>, rewards: Vec<f64>, state_dim: usize) -> Result<Self> {
        Self::with_termination(states, actions, rewards, state_dim, None)
    }

    pub fn with_termination(
        states: Vec<f64>,
        actions: Vec<u32>,
        rewards: Vec<f64>,
        state_dim: usize,
        term_step: Option<usize>,
    ) -> Result<Self> {
        if state_dim == 0 || states.len() % state_dim != 0 {
            return Err(OpeError::DimensionMismatch(format!(
                "states length {} is not a multiple of state_dim {state_dim}",
                states.len()
            )));
        }
        let steps = states.len() / state_dim;
        if actions.len() != steps || rewards.len() != steps || steps == 0 {
            return Err(OpeError::DimensionMismatch(format!(
                "states/actions/rewards must share one length, got {steps}/{}/{}",
                actions.len(),
                rewards.len()
            )));
        }
        if let Some(ts) = term_step {
            if ts == 0 || ts > steps {
                return Err(OpeError::InvalidSpec(format!("term_step {ts} out of range 1..={steps}")));
            }
        }
        Ok(Self { states, actions, rewards, state_dim, term_step })
    }

    /// Number of timesteps T + 1.
    pub fn num_steps(&self) -> usize {
        self.actions.len()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn state(&self, t: usize) -> &[f64] {
        &self.states[t * self.state_dim..(t + 1) * self.state_dim]
    }

    pub fn action(&self, t: usize) -> u32 {
        self.actions[t]
    }

    pub fn reward(&self, t: usize) -> f64 {
        self.rewards[t]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// First absorbing step, if the episode ended before the horizon.
    pub fn term_step(&self) -> Option<usize> {
        self.term_step
    }

    /// True when step `t` lies in the absorbing padding after early
    /// termination.
    pub fn is_absorbed(&self, t: usize) -> bool {
        self.term_step.is_some_and(|ts| t >= ts)
    }

    /// Discounted return G_T = sum_t gamma^t R_t.
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        let mut g = 0.0;
        let mut w = 1.0;
        for &r in &self.rewards {
            g += w * r;
            w *= gamma;
        }
        g
    }
}

/// Seed bookkeeping: the root seed plus the substream id of each trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub root_seed: u64,
    pub base_stream: u64,
}

impl SeedRecord {
    /// Substream id consumed by trajectory `i`.
    pub fn trajectory_stream(&self, i: usize) -> u64 {
        self.base_stream + i as u64
    }
}

/// A batch of i.i.d. trajectories sharing one horizon.
#[derive(Debug, Clone)]
pub struct Dataset {
    trajectories: Vec<Trajectory>,
    state_dim: usize,
    num_actions: usize,
    seed_record: SeedRecord,
}

impl Dataset {
    pub fn new(trajectories: Vec<Trajectory>, num_actions: usize, seed_record: SeedRecord) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(OpeError::NotEnoughData("dataset must contain at least one trajectory".into()));
        }
        let steps = trajectories[0].num_steps();
        let state_dim = trajectories[0].state_dim();
        for tr in &trajectories {
            if tr.num_steps() != steps || tr.state_dim() != state_dim {
                return Err(OpeError::DimensionMismatch(
                    "all trajectories must share one horizon and state dimension".into(),
                ));
            }
        }
        Ok(Self { trajectories, state_dim, num_actions, seed_record })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn num_steps(&self) -> usize {
        self.trajectories[0].num_steps()
    }

    /// Horizon T (num_steps - 1).
    pub fn horizon(&self) -> usize {
        self.num_steps() - 1
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn seed_record(&self) -> SeedRecord {
        self.seed_record
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn trajectory(&self, i: usize) -> &Trajectory {
        &self.trajectories[i]
    }

    /// Largest |reward| observed anywhere in the data.
    pub fn observed_reward_bound(&self) -> f64 {
        self.trajectories
            .iter()
            .flat_map(|t| t.rewards().iter())
            .fold(0.0f64, |m, r| m.max(r.abs()))
    }
}

/// Sidecar metadata stored next to a dataset CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    /// Generating environment spec, as tagged JSON.
    pub spec: serde_json::Value,
    pub seed_record: SeedRecord,
    pub num_trajectories: usize,
    /// Number of timesteps per trajectory (T + 1).
    pub num_steps: usize,
    pub state_dim: usize,
    pub num_actions: usize,
    /// Early-termination step per trajectory (`null` when none).
    pub term_steps: Vec<Option<usize>>,
}

/// Writes `dataset` as CSV plus a JSON sidecar at `<path>.meta.json`.
pub fn write_dataset_csv(dataset: &Dataset, path: &Path, spec: serde_json::Value) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["traj_id".to_string(), "t".to_string()];
    for d in 0..dataset.state_dim() {
        header.push(format!("s{d}"));
    }
    header.push("action".into());
    header.push("reward".into());
    w.write_record(&header)?;
    for (i, tr) in dataset.trajectories().iter().enumerate() {
        for t in 0..tr.num_steps() {
            let mut row = vec![i.to_string(), t.to_string()];
            for v in tr.state(t) {
                row.push(format!("{v}"));
            }
            row.push(tr.action(t).to_string());
            row.push(format!("{}", tr.reward(t)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;

    let meta = DatasetMeta {
        spec,
        seed_record: dataset.seed_record(),
        num_trajectories: dataset.len(),
        num_steps: dataset.num_steps(),
        state_dim: dataset.state_dim(),
        num_actions: dataset.num_actions(),
        term_steps: dataset.trajectories().iter().map(|t| t.term_step()).collect(),
    };
    let meta_path = sidecar_path(path);
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Reads a dataset written by [`write_dataset_csv`].
pub fn read_dataset_csv(path: &Path) -> Result<(Dataset, DatasetMeta)> {
    let meta: DatasetMeta = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    let mut reader = csv::Reader::from_path(path)?;
    let d = meta.state_dim;
    let mut per_traj: Vec<(Vec<f64>, Vec<u32>, Vec<f64>)> =
        vec![(Vec::new(), Vec::new(), Vec::new()); meta.num_trajectories];
    for record in reader.records() {
        let record = record?;
        let id: usize = parse_field(&record, 0)?;
        let (states, actions, rewards) = per_traj
            .get_mut(id)
            .ok_or_else(|| OpeError::InvalidSpec(format!("traj_id {id} exceeds sidecar count")))?;
        for j in 0..d {
            states.push(parse_field(&record, 2 + j)?);
        }
        actions.push(parse_field::<u32>(&record, 2 + d)?);
        rewards.push(parse_field(&record, 3 + d)?);
    }
    let mut trajectories = Vec::with_capacity(per_traj.len());
    for (i, (states, actions, rewards)) in per_traj.into_iter().enumerate() {
        trajectories.push(Trajectory::with_termination(states, actions, rewards, d, meta.term_steps[i])?);
    }
    let dataset = Dataset::new(trajectories, meta.num_actions, meta.seed_record)?;
    if dataset.num_steps() != meta.num_steps {
        return Err(OpeError::InvalidSpec("csv rows disagree with sidecar num_steps".into()));
    }
    Ok((dataset, meta))
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta.json");
    std::path::PathBuf::from(p)
}

fn parse_field<T: std::str::FromStr>(record: &csv::StringRecord, idx: usize) -> Result<T> {
    record
        .get(idx)
        .ok_or_else(|| OpeError::InvalidSpec(format!("missing csv column {idx}")))?
        .parse::<T>()
        .map_err(|_| OpeError::InvalidSpec(format!("unparsable csv field at column {idx}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_dataset() -> Dataset {
        let t0 = Trajectory::new(vec![0.0, 1.0, 0.0], vec![1, 0, 1], vec![0.5, -1.0, 2.0], 1).unwrap();
        let t1 = Trajectory::with_termination(
            vec![1.0, 1.0, 1.0],
            vec![0, 0, 0],
            vec![1.0, 0.0, 0.0],
            1,
            Some(1),
        )
        .unwrap();
        Dataset::new(vec![t0, t1], 2, SeedRecord { root_seed: 9, base_stream: 100 }).unwrap()
    }

    #[test]
    fn lengths_must_agree() {
        assert!(Trajectory::new(vec![0.0, 1.0], vec![0], vec![0.0], 1).is_err());
        let t0 = Trajectory::new(vec![0.0], vec![0], vec![0.0], 1).unwrap();
        let t1 = Trajectory::new(vec![0.0, 1.0], vec![0, 1], vec![0.0, 0.0], 1).unwrap();
        assert!(Dataset::new(vec![t0, t1], 2, SeedRecord { root_seed: 0, base_stream: 0 }).is_err());
    }

    #[test]
    fn discounted_return_geometric() {
        let t = Trajectory::new(vec![0.0, 0.0, 0.0], vec![0, 0, 0], vec![1.0, 1.0, 1.0], 1).unwrap();
        assert!((t.discounted_return(0.5) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn absorbing_flags() {
        let ds = toy_dataset();
        assert!(!ds.trajectory(0).is_absorbed(2));
        assert!(ds.trajectory(1).is_absorbed(1));
        assert!(!ds.trajectory(1).is_absorbed(0));
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let ds = toy_dataset();
        write_dataset_csv(&ds, &path, serde_json::json!({"kind": "toy"})).unwrap();
        let (back, meta) = read_dataset_csv(&path).unwrap();
        assert_eq!(back.len(), ds.len());
        assert_eq!(meta.num_actions, 2);
        for i in 0..ds.len() {
            assert_eq!(back.trajectory(i), ds.trajectory(i));
        }
    }
}
