//! Episode-aware replay buffer with hindsight goal relabeling ("future"
//! strategy).
//!
//! Episodes are stored and evicted whole, so every stored transition can
//! always see the rest of its episode when a future goal is drawn.

use std::collections::VecDeque;

use rand::Rng;
use thiserror::Error;

use crate::environment::{Point, RewardSpec, StepInfo, DESIRED_GOAL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReplayError {
    #[error("cannot store an empty episode")]
    EmptyEpisode,
    #[error("malformed episode: {0}")]
    MalformedEpisode(String),
    #[error("episode of {len} steps exceeds the buffer capacity {capacity}")]
    EpisodeTooLong { len: usize, capacity: usize },
    #[error("cannot sample from an empty buffer")]
    EmptyBuffer,
}

/// One environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f32>,
    pub action: Vec<f32>,
    pub reward: f64,
    pub next_obs: Vec<f32>,
    pub terminated: bool,
    /// Facts about the next state.
    pub info: StepInfo,
    /// Goal the episode was run with, at full precision.
    pub desired_goal: Point,
    pub episode_id: u64,
    pub step_in_episode: u32,
}

impl Transition {
    /// Copy of `self` retargeted at `goal`, with reward and termination
    /// recomputed from the stored step facts.
    pub fn relabel(&self, goal: Point, spec: &RewardSpec) -> Transition {
        let mut t = self.clone();
        for obs in [&mut t.obs, &mut t.next_obs] {
            obs[DESIRED_GOAL.start] = goal[0] as f32;
            obs[DESIRED_GOAL.start + 1] = goal[1] as f32;
        }
        t.reward = spec.compute_reward(self.info.achieved_goal, goal, &self.info);
        t.terminated = spec.is_terminal(self.info.achieved_goal, goal, &self.info);
        t.desired_goal = goal;
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GoalStrategy {
    Future,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HerConfig {
    pub enabled: bool,
    /// Virtual goals per real goal; a sample is relabeled with probability n/(n+1).
    pub n_sampled_goal: usize,
    pub strategy: GoalStrategy,
}

impl Default for HerConfig {
    fn default() -> Self {
        Self { enabled: true, n_sampled_goal: 16, strategy: GoalStrategy::Future }
    }
}

impl HerConfig {
    pub fn relabel_probability(&self) -> f64 {
        if !self.enabled {
            return 0.0;
        }
        let n = self.n_sampled_goal as f64;
        n / (n + 1.0)
    }
}

/// A sampled transition, possibly retargeted.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub transition: Transition,
    pub goal_used: Point,
    pub relabeled: bool,
    /// Step in the episode whose achieved goal was used, when relabeled.
    pub goal_source_step: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: VecDeque<Vec<Transition>>,
    /// Global index of each episode's first transition.
    starts: VecDeque<u64>,
    len: usize,
    /// Global index one past the newest transition.
    end: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, episodes: VecDeque::new(), starts: VecDeque::new(), len: 0, end: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn episodes(&self) -> impl Iterator<Item = &[Transition]> {
        self.episodes.iter().map(Vec::as_slice)
    }

    pub fn store_episode(&mut self, transitions: Vec<Transition>) -> Result<(), ReplayError> {
        let first = transitions.first().ok_or(ReplayError::EmptyEpisode)?;
        let id = first.episode_id;
        for (k, t) in transitions.iter().enumerate() {
            if t.episode_id != id {
                return Err(ReplayError::MalformedEpisode(format!(
                    "step {k} belongs to episode {} instead of {id}",
                    t.episode_id
                )));
            }
            if t.step_in_episode as usize != k {
                return Err(ReplayError::MalformedEpisode(format!(
                    "expected step index {k}, found {}",
                    t.step_in_episode
                )));
            }
        }
        if transitions.len() > self.capacity {
            return Err(ReplayError::EpisodeTooLong { len: transitions.len(), capacity: self.capacity });
        }
        while self.len + transitions.len() > self.capacity {
            let old = self.episodes.pop_front().expect("buffer over capacity but empty");
            self.starts.pop_front();
            self.len -= old.len();
        }
        self.starts.push_back(self.end);
        self.end += transitions.len() as u64;
        self.len += transitions.len();
        self.episodes.push_back(transitions);
        Ok(())
    }

    /// Uniformly chosen stored transition as (episode slot, step).
    fn locate(&self, offset: usize) -> (usize, usize) {
        let global = self.end - self.len as u64 + offset as u64;
        let slot = self.starts.partition_point(|&s| s <= global) - 1;
        (slot, (global - self.starts[slot]) as usize)
    }

    pub fn sample_batch<R: Rng>(
        &self,
        n: usize,
        her: &HerConfig,
        spec: &RewardSpec,
        rng: &mut R,
    ) -> Result<Vec<Sample>, ReplayError> {
        if self.is_empty() {
            return Err(ReplayError::EmptyBuffer);
        }
        let p = her.relabel_probability();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let (slot, step) = self.locate(rng.random_range(0..self.len));
            let episode = &self.episodes[slot];
            let t = &episode[step];
            // The coin is always drawn so the stream advances the same way
            // regardless of the outcome.
            let coin = rng.random::<f64>() < p;
            let has_future = step + 1 < episode.len();
            let source = if coin && has_future { Some(rng.random_range(step + 1..episode.len())) } else { None };
            let goal = source.map_or(t.desired_goal, |k| episode[k].info.achieved_goal);
            out.push(Sample {
                transition: t.relabel(goal, spec),
                goal_used: goal,
                relabeled: source.is_some(),
                goal_source_step: source.map(|k| k as u32),
            });
        }
        Ok(out)
    }
}
