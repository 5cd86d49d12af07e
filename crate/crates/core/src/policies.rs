//! Open-loop baseline search policies.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{ActionIndex, Observation};
use crate::error::Error;

/// Anything that picks the next beam cell from an observation.
pub trait Policy {
    fn next_action(&mut self, observation: &Observation) -> ActionIndex;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    /// Uniform over all cells at every step.
    Random,
    /// One uniformly drawn cell held for the whole episode.
    Static,
    /// Raster scan, azimuth fastest.
    Coverage,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Random, PolicyKind::Static, PolicyKind::Coverage];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Random => "random",
            PolicyKind::Static => "static",
            PolicyKind::Coverage => "coverage",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(PolicyKind::Random),
            "static" => Ok(PolicyKind::Static),
            "coverage" => Ok(PolicyKind::Coverage),
            other => Err(Error::Config(format!(
                "unknown policy `{other}` (expected random, static or coverage)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaselinePolicy {
    kind: PolicyKind,
    rng: ChaCha8Rng,
    fixed_action: Option<ActionIndex>,
    step_counter: usize,
    n_a: usize,
}

impl BaselinePolicy {
    pub fn new(kind: PolicyKind, seed: u64, n_a: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fixed_action = (kind == PolicyKind::Static).then(|| uniform_cell(&mut rng, n_a));
        Self {
            kind,
            rng,
            fixed_action,
            step_counter: 0,
            n_a,
        }
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn fixed_action(&self) -> Option<ActionIndex> {
        self.fixed_action
    }
}

fn uniform_cell(rng: &mut ChaCha8Rng, n_a: usize) -> ActionIndex {
    ActionIndex::new(rng.random_range(0..n_a), rng.random_range(0..n_a))
}

impl Policy for BaselinePolicy {
    /// The observation is ignored: all baselines are open-loop.
    fn next_action(&mut self, _observation: &Observation) -> ActionIndex {
        let k = self.step_counter;
        self.step_counter += 1;
        match self.kind {
            PolicyKind::Random => uniform_cell(&mut self.rng, self.n_a),
            PolicyKind::Static => self.fixed_action.expect("static policy draws its cell at construction"),
            PolicyKind::Coverage => ActionIndex::new(k % self.n_a, (k / self.n_a) % self.n_a),
        }
    }
}
