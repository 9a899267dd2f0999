//! SARSA learner with softmax exploration over valid actions.
//!
//! The base station acts with the inference network and keeps experience in
//! a bounded FIFO memory; the training network lives on the remote side and
//! only ever sees transitions explicitly uploaded to it.

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;

use crate::env::{ActionSpace, Allocation, StateVector};
use crate::nn::{AdamState, ValueNet};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateVector,
    pub action: usize,
    pub next_state: StateVector,
    pub reward: f64,
    pub next_action: usize,
}

/// Bounded FIFO of transitions; the oldest entry is evicted first.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    entries: VecDeque<Transition>,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay memory needs a positive capacity");
        ReplayMemory {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> + '_ {
        self.entries.iter()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn record(&mut self, t: Transition) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(t);
    }

    /// Copies `min(budget, len)` distinct entries drawn uniformly without
    /// replacement. The memory itself is left untouched.
    pub fn draw_for_upload<R: Rng + ?Sized>(&self, budget: usize, rng: &mut R) -> Vec<Transition> {
        let n = budget.min(self.entries.len());
        index::sample(rng, self.entries.len(), n)
            .into_iter()
            .map(|i| self.entries[i].clone())
            .collect()
    }
}

/// Softmax probabilities of `q / temperature` restricted to `valid` actions.
pub fn action_probabilities(q: &[f64], valid: &[bool], temperature: f64) -> Vec<f64> {
    assert!(temperature > 0.0, "temperature must be positive");
    let max = q
        .iter()
        .zip(valid)
        .filter(|(_, &ok)| ok)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = q
        .iter()
        .zip(valid)
        .map(|(&v, &ok)| {
            if ok {
                ((v - max) / temperature).exp()
            } else {
                0.0
            }
        })
        .collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    p
}

/// Samples an action from the masked softmax over `net`'s values.
pub fn select_action<R: Rng + ?Sized>(
    net: &ValueNet,
    state: &StateVector,
    alloc: &Allocation,
    temperature: f64,
    rng: &mut R,
) -> usize {
    let q = net.forward(state.as_slice());
    let valid = ActionSpace::new(alloc.blocks.len()).mask(alloc);
    sample_index(&action_probabilities(&q, &valid, temperature), rng)
}

fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &pi) in p.iter().enumerate() {
        if pi == 0.0 {
            continue;
        }
        acc += pi;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Highest-valued valid action, ties to the lowest index.
pub fn greedy_from_values(q: &[f64], valid: &[bool]) -> usize {
    let mut best = 0;
    let mut best_q = f64::NEG_INFINITY;
    for (a, (&v, &ok)) in q.iter().zip(valid).enumerate() {
        if ok && v > best_q {
            best = a;
            best_q = v;
        }
    }
    best
}

pub fn greedy_action(net: &ValueNet, state: &StateVector, alloc: &Allocation) -> usize {
    let q = net.forward(state.as_slice());
    greedy_from_values(&q, &ActionSpace::new(alloc.blocks.len()).mask(alloc))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams {
    pub gamma: f64,
    pub learning_rate: f64,
    pub temperature: f64,
    pub batch_size: usize,
    pub memory_capacity: usize,
    /// Initial output bias of the value network. `None` starts every Q-value
    /// at `0.75 / (1 - gamma)`, the return of a steady reward of 0.75.
    pub initial_q: Option<f64>,
}

impl AgentParams {
    pub fn initial_q(&self) -> f64 {
        self.initial_q.unwrap_or(0.75 / (1.0 - self.gamma))
    }
}

impl Default for AgentParams {
    fn default() -> Self {
        AgentParams {
            gamma: 0.95,
            learning_rate: 1e-5,
            temperature: 0.1,
            batch_size: 32,
            memory_capacity: 5000,
            initial_q: None,
        }
    }
}

/// Inference network (acting) and training network (learning) with the
/// optimizer state of the latter.
#[derive(Debug, Clone)]
pub struct AgentPair {
    pub inference: ValueNet,
    pub training: ValueNet,
    pub adam: AdamState,
    pub temperature: f64,
    pub gamma: f64,
    pub batch_size: usize,
    grad: Vec<f64>,
}

impl AgentPair {
    /// Both networks start from the same random initialization, with the
    /// output biases set to `params.initial_q()`.
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        num_actions: usize,
        params: &AgentParams,
        rng: &mut R,
    ) -> Self {
        let mut training = ValueNet::init(state_dim, num_actions, rng);
        training.layer_bias_mut(2).fill(params.initial_q());
        Self::from_net(training, params)
    }

    pub fn from_net(net: ValueNet, params: &AgentParams) -> Self {
        AgentPair {
            inference: net.clone(),
            adam: AdamState::new(net.num_params(), params.learning_rate),
            grad: vec![0.0; net.num_params()],
            training: net,
            temperature: params.temperature,
            gamma: params.gamma,
            batch_size: params.batch_size.max(1),
        }
    }

    /// SARSA updates of the training network over `batch`, in order, one Adam
    /// step per minibatch. Targets `r + gamma * Q(s', a')` are computed with
    /// the weights as they stand before each step. Returns the step count.
    pub fn sarsa_train(&mut self, batch: &[Transition]) -> usize {
        let mut steps = 0;
        let mut targets = Vec::with_capacity(self.batch_size);
        for chunk in batch.chunks(self.batch_size) {
            targets.clear();
            targets.extend(chunk.iter().map(|t| {
                let bootstrap = if self.gamma == 0.0 {
                    0.0
                } else {
                    self.training
                        .q_value(t.next_state.as_slice(), t.next_action)
                };
                t.reward + self.gamma * bootstrap
            }));
            self.grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / chunk.len() as f64;
            for (t, &target) in chunk.iter().zip(&targets) {
                self.training.accumulate_td_grad(
                    t.state.as_slice(),
                    t.action,
                    target,
                    scale,
                    &mut self.grad,
                );
            }
            self.adam.step(self.training.params_mut(), &self.grad);
            steps += 1;
        }
        steps
    }

    /// Replaces the inference network with a copy of the training network.
    pub fn sync(&mut self) {
        self.inference.clone_from(&self.training);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sv(x: f64) -> StateVector {
        StateVector(vec![x; 8])
    }

    fn transition(i: usize) -> Transition {
        Transition {
            state: sv(i as f64),
            action: 0,
            next_state: sv(0.0),
            reward: 0.5,
            next_action: 0,
        }
    }

    #[test]
    fn masked_actions_get_zero_probability() {
        let valid = ActionSpace::new(2).mask(&Allocation::new(vec![0, 10]));
        let p = action_probabilities(&[0.0, 100.0, 0.0], &valid, 0.1);
        assert_eq!(p[1], 0.0);
        assert!((p[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn equal_values_uniform() {
        let p = action_probabilities(&[0.3; 3], &[true; 3], 0.1);
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_reference_values() {
        let p = action_probabilities(&[1.0, 0.0, 0.0], &[true; 3], 0.5);
        let z = 2f64.exp() + 2.0;
        assert!((p[0] - 2f64.exp() / z).abs() < 1e-12);
        assert!((p[0] - 0.78699).abs() < 1e-5);
        assert!((p[1] - 0.10651).abs() < 1e-5);
        assert_eq!(p[1], p[2]);
    }

    #[test]
    fn large_values_do_not_overflow() {
        let p = action_probabilities(&[1e4, 1e4 - 0.1, -1e4], &[true; 3], 0.01);
        assert!(p.iter().all(|x| x.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn greedy_examples() {
        let all = [true; 3];
        assert_eq!(greedy_from_values(&[0.2, 0.9, 0.1], &all), 1);
        assert_eq!(
            greedy_from_values(&[0.2, 0.9, 0.1], &[true, false, true]),
            0
        );
        assert_eq!(greedy_from_values(&[0.5, 0.5, 0.1], &all), 0);
    }

    #[test]
    fn select_respects_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = ValueNet::zeros(8, 3);
        net.layer_bias_mut(2).copy_from_slice(&[0.0, 50.0, 0.0]);
        let alloc = Allocation::new(vec![0, 10]);
        for _ in 0..1000 {
            assert_ne!(select_action(&net, &sv(0.1), &alloc, 0.1, &mut rng), 1);
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut m = ReplayMemory::new(2);
        for i in 1..=3 {
            m.record(transition(i));
        }
        let kept: Vec<f64> = m.iter().map(|t| t.state.0[0]).collect();
        assert_eq!(kept, vec![2.0, 3.0]);
    }

    #[test]
    fn upload_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = ReplayMemory::new(10);
        for i in 0..5 {
            m.record(transition(i));
        }
        assert!(m.draw_for_upload(0, &mut rng).is_empty());
        let mut all: Vec<f64> = m
            .draw_for_upload(50, &mut rng)
            .iter()
            .map(|t| t.state.0[0])
            .collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.len(), 5);
    }

    #[test]
    fn upload_inclusion_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut m = ReplayMemory::new(1000);
        for i in 0..1000 {
            m.record(transition(i));
        }
        let rounds = 20_000;
        let mut hits = vec![0usize; 1000];
        for _ in 0..rounds {
            let drawn = m.draw_for_upload(284, &mut rng);
            assert_eq!(drawn.len(), 284);
            let mut ids: Vec<usize> = drawn.iter().map(|t| t.state.0[0] as usize).collect();
            ids.sort_unstable();
            ids.dedup();
            assert_eq!(ids.len(), 284);
            for i in ids {
                hits[i] += 1;
            }
        }
        for h in hits {
            let f = h as f64 / rounds as f64;
            assert!((f - 0.284).abs() <= 0.02, "inclusion {f}");
        }
    }

    #[test]
    fn batching_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut agent = AgentPair::new(8, 3, &AgentParams::default(), &mut rng);
        let batch: Vec<Transition> = (0..64).map(transition).collect();
        assert_eq!(agent.sarsa_train(&batch), 2);
        assert_eq!(agent.sarsa_train(&batch[..33]), 2);
        assert_eq!(agent.sarsa_train(&[]), 0);
        assert_eq!(agent.adam.step, 4);
    }

    #[test]
    fn myopic_target_is_reward() {
        let params = AgentParams {
            gamma: 0.0,
            learning_rate: 1e-2,
            ..AgentParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut agent = AgentPair::new(8, 3, &params, &mut rng);
        let t = Transition {
            state: sv(0.3),
            action: 2,
            next_state: sv(0.9),
            reward: 0.7,
            next_action: 1,
        };
        for _ in 0..2000 {
            agent.sarsa_train(std::slice::from_ref(&t));
        }
        assert!((agent.training.q_value(&t.state.0, 2) - 0.7).abs() < 1e-3);
    }

    #[test]
    fn training_never_touches_inference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut agent = AgentPair::new(8, 3, &AgentParams::default(), &mut rng);
        let before = agent.inference.clone();
        agent.sarsa_train(&(0..40).map(transition).collect::<Vec<_>>());
        assert_eq!(agent.inference, before);
        assert_ne!(agent.training, before);
        agent.sync();
        assert_eq!(agent.inference, agent.training);
        let synced = agent.inference.clone();
        agent.sync();
        assert_eq!(agent.inference, synced);
        agent.sarsa_train(&[transition(1)]);
        assert_eq!(agent.inference, synced);
    }

    #[test]
    fn output_bias_starts_at_initial_q() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let agent = AgentPair::new(8, 3, &AgentParams::default(), &mut rng);
        assert!(agent
            .training
            .layer_bias(2)
            .iter()
            .all(|&b| (b - 15.0).abs() < 1e-9));
        assert_eq!(agent.inference, agent.training);
        let params = AgentParams {
            initial_q: Some(0.0),
            ..AgentParams::default()
        };
        let agent = AgentPair::new(8, 3, &params, &mut ChaCha8Rng::seed_from_u64(6));
        assert!(agent.training.layer_bias(2).iter().all(|&b| b == 0.0));
        assert_eq!(
            agent.training.layer_weights(0),
            AgentPair::new(
                8,
                3,
                &AgentParams::default(),
                &mut ChaCha8Rng::seed_from_u64(6)
            )
            .training
            .layer_weights(0)
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn temperature_scaling_invariance(q in prop::collection::vec(-5.0f64..5.0, 3), t in 0.05f64..2.0, c in 0.1f64..10.0) {
                let valid = [true, true, false];
                let a = action_probabilities(&q, &valid, t);
                let scaled: Vec<f64> = q.iter().map(|x| x * c).collect();
                let b = action_probabilities(&scaled, &valid, t * c);
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x - y).abs() < 1e-9);
                }
                prop_assert_eq!(a[2], 0.0);
            }

            #[test]
            fn greedy_shift_invariance(q in prop::collection::vec(-5.0f64..5.0, 3), shift in -100.0f64..100.0, mask in prop::collection::vec(any::<bool>(), 2)) {
                let valid = [true, mask[0], mask[1]];
                let shifted: Vec<f64> = q.iter().map(|x| x + shift).collect();
                let a = greedy_from_values(&q, &valid);
                prop_assert!(valid[a]);
                prop_assert_eq!(a, greedy_from_values(&shifted, &valid));
            }

            #[test]
            fn eviction_matches_list_model(cap in 1usize..50, n in 0usize..1000) {
                let mut m = ReplayMemory::new(cap);
                let mut model: Vec<usize> = Vec::new();
                for i in 0..n {
                    m.record(transition(i));
                    model.push(i);
                    if model.len() > cap {
                        model.remove(0);
                    }
                }
                let got: Vec<usize> = m.iter().map(|t| t.state.0[0] as usize).collect();
                prop_assert_eq!(got, model);
            }
        }
    }
}
