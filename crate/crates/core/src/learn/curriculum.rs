use super::CurriculumConfig;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub success: bool,
    /// Level the episode was generated at.
    pub level: usize,
    pub episode_return: f64,
    pub length: usize,
}

/// Waypoint-count level and the rolling success window at that level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub level: usize,
    pub max_level: usize,
    pub window_len: usize,
    pub threshold: f64,
    pub window: VecDeque<bool>,
}

impl CurriculumState {
    pub fn new(cfg: &CurriculumConfig) -> Self {
        Self {
            level: cfg.start_level,
            max_level: cfg.max_level,
            window_len: cfg.window,
            threshold: cfg.threshold,
            window: VecDeque::with_capacity(cfg.window),
        }
    }

    pub fn success_rate(&self) -> f64 {
        if self.window.is_empty() {
            return 0.0;
        }
        self.window.iter().filter(|s| **s).count() as f64 / self.window.len() as f64
    }

    /// Feeds finished episodes in order. Episodes from an earlier level are
    /// ignored. Returns the number of levels gained.
    pub fn tick(&mut self, outcomes: &[EpisodeOutcome]) -> usize {
        let start = self.level;
        for o in outcomes {
            if o.level != self.level {
                continue;
            }
            if self.window.len() == self.window_len {
                self.window.pop_front();
            }
            self.window.push_back(o.success);
            if self.window.len() == self.window_len && self.success_rate() >= self.threshold && self.level < self.max_level {
                self.level += 1;
                self.window.clear();
            }
        }
        self.level - start
    }
}
