use rand::Rng as _;

use crate::env::{Action, Agent, Domain, GridWorld, Pose};
use crate::error::Result;
use crate::expert::{expert_label, CostModel};
use crate::models::{Model, ModelInput};
use crate::rng::{derive_seed, rng};
use crate::tensor::Scalar;

/// One decision request: where the robot is, where it heads, and which task
/// step this is (used only by stochastic policies).
#[derive(Clone, Copy, Debug)]
pub struct Query<'a> {
    pub world: &'a GridWorld,
    pub pose: Pose,
    pub goal: Pose,
    pub task: usize,
    pub step: usize,
}

/// Anything that picks the next action for a batch of queries. The answer
/// for a query must not depend on the rest of the batch.
pub trait Policy: Sync {
    fn domain(&self) -> Domain;
    fn act(&self, queries: &[Query]) -> Result<Vec<Action>>;
}

/// Greedy action of a trained network.
pub struct ModelPolicy<'m, T> {
    pub model: &'m Model<T>,
}

impl<T: Scalar> Policy for ModelPolicy<'_, T> {
    fn domain(&self) -> Domain {
        self.model.config.domain
    }

    fn act(&self, queries: &[Query]) -> Result<Vec<Action>> {
        let mut input = ModelInput::new(self.model.config.n);
        for q in queries {
            input.push(q.world, q.pose, q.goal, self.domain())?;
        }
        Ok(self.model.predict(&input))
    }
}

/// The expert itself: the canonical A* next action.
pub struct OraclePolicy {
    pub agent: Agent,
    pub cost: CostModel,
}

impl OraclePolicy {
    pub fn new(domain: Domain) -> Self {
        OraclePolicy { agent: Agent::new(domain), cost: CostModel::default() }
    }
}

impl Policy for OraclePolicy {
    fn domain(&self) -> Domain {
        self.agent.domain
    }

    fn act(&self, queries: &[Query]) -> Result<Vec<Action>> {
        Ok(queries
            .iter()
            .map(|q| expert_label(q.world, &self.agent, &self.cost, q.pose, q.goal).unwrap_or(Action(0)))
            .collect())
    }
}

/// Uniformly random actions, seeded per (task, step).
pub struct RandomPolicy {
    pub domain: Domain,
    pub seed: u64,
}

impl Policy for RandomPolicy {
    fn domain(&self) -> Domain {
        self.domain
    }

    fn act(&self, queries: &[Query]) -> Result<Vec<Action>> {
        Ok(queries
            .iter()
            .map(|q| {
                let stream = ((q.task as u64) << 32) | q.step as u64;
                let mut r = rng(derive_seed(self.seed, stream));
                Action(r.gen_range(0..self.domain.action_count()) as u8)
            })
            .collect())
    }
}

/// Fixed action list replayed step by step, regardless of the state.
pub struct ScriptedPolicy {
    pub domain: Domain,
    pub actions: Vec<Action>,
}

impl Policy for ScriptedPolicy {
    fn domain(&self) -> Domain {
        self.domain
    }

    fn act(&self, queries: &[Query]) -> Result<Vec<Action>> {
        Ok(queries.iter().map(|q| self.actions[q.step % self.actions.len()]).collect())
    }
}
