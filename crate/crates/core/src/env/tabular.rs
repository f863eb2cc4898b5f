use crate::agent::{Environment, Step};
use crate::error::Result;
use crate::features::{FeatureMap, FeatureVec};
use crate::mdp::TabularMdp;
use crate::rng::RngStream;

/// A [`TabularMdp`] played episodically with one-hot features.
#[derive(Debug, Clone)]
pub struct MdpEnv {
    pub mdp: TabularMdp,
    features: FeatureMap,
}

impl MdpEnv {
    pub fn new(mdp: TabularMdp) -> Self {
        let features = FeatureMap::one_hot(mdp.n_states);
        MdpEnv { mdp, features }
    }
}

impl Environment for MdpEnv {
    type State = usize;

    fn name(&self) -> &'static str {
        "mdp"
    }

    fn n_actions(&self) -> usize {
        self.mdp.n_actions
    }

    fn feature_map(&self) -> &FeatureMap {
        &self.features
    }

    fn features(&self, state: &usize) -> FeatureVec {
        self.features.state(*state)
    }

    fn reset(&mut self, rng: &mut RngStream) -> usize {
        self.mdp.sample_start(rng)
    }

    fn step(&mut self, state: &usize, action: usize, rng: &mut RngStream) -> Result<Step<usize>> {
        let out = self.mdp.step(*state, action, rng);
        Ok(Step {
            next: out.next_state,
            reward: out.reward,
            done: out.done,
        })
    }
}
