//! Backhaul queueing dynamics, allocation actions, packet utility and the
//! state encoding seen by the agent.
//!
//! Every slot runs in a fixed order: on-off transitions, transmission under
//! the allocation in force, packet generation, enqueue with overflow, and
//! finally the slot reward. New packets therefore wait at least one slot.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};
use crate::link::LinkParams;
use crate::traffic::{assign_applications, AppKind, AppProfile, Packet, UserState};

/// Delay of a packet: finite slots if delivered or queued, infinite if dropped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delay {
    Slots(u64),
    Infinite,
}

/// Utility in [0, 1] of a packet of `profile` experiencing `delay`.
///
/// Non-critical traffic decays as `budget / delay` past the budget; critical
/// traffic is worth 1 up to the budget (inclusive) and 0 after it.
pub fn utility(profile: &AppProfile, delay: Delay) -> f64 {
    let d = match delay {
        Delay::Infinite => return 0.0,
        Delay::Slots(0) => return 1.0,
        Delay::Slots(d) => d as f64,
    };
    if profile.is_critical() {
        if d <= profile.delay_budget {
            1.0
        } else {
            0.0
        }
    } else {
        (profile.delay_budget / d).min(1.0)
    }
}

/// Bounded FIFO of one slice. The head of the queue is the oldest packet.
#[derive(Debug, Clone)]
pub struct SliceBuffer {
    pub slice_id: usize,
    pub capacity: usize,
    queue: VecDeque<Packet>,
}

impl SliceBuffer {
    pub fn new(slice_id: usize, capacity: usize) -> Self {
        SliceBuffer {
            slice_id,
            capacity,
            queue: VecDeque::with_capacity(capacity + 32),
        }
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn packets(&self) -> impl Iterator<Item = &Packet> + '_ {
        self.queue.iter()
    }

    pub fn clear(&mut self) {
        self.queue.clear();
    }

    /// Sends the oldest `min(len, capacity(n_blocks))` packets, appending each
    /// with its delay to `delivered`. Returns the number sent.
    pub fn transmit(
        &mut self,
        n_blocks: u32,
        current_slot: u64,
        link: &LinkParams,
        delivered: &mut Vec<(Packet, u64)>,
    ) -> usize {
        let chi = self.queue.len().min(link.packets_per_slot(n_blocks));
        delivered.extend(
            self.queue
                .drain(..chi)
                .map(|p| (p, current_slot - p.arrival_slot)),
        );
        chi
    }

    /// Appends `arrivals` and discards the oldest packets beyond capacity into
    /// `dropped`. Returns the number discarded.
    pub fn enqueue_with_overflow(
        &mut self,
        arrivals: &[Packet],
        dropped: &mut Vec<Packet>,
    ) -> Result<usize> {
        if let Some(p) = arrivals.iter().find(|p| p.slice_id != self.slice_id) {
            return Err(Error::Contract(format!(
                "packet of slice {} enqueued on slice {}",
                p.slice_id, self.slice_id
            )));
        }
        self.queue.extend(arrivals.iter().copied());
        let omega = self.queue.len().saturating_sub(self.capacity);
        dropped.extend(self.queue.drain(..omega));
        Ok(omega)
    }
}

/// Enumerates actions: 0 keeps the allocation, the rest are ordered pairs
/// `(from, to)` with `from != to`, in lexicographic order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSpace {
    pub num_slices: usize,
}

impl ActionSpace {
    pub fn new(num_slices: usize) -> Self {
        ActionSpace { num_slices }
    }

    pub fn len(&self) -> usize {
        1 + self.num_slices * (self.num_slices - 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The `(donor, receiver)` pair moved by `action`, `None` for the keep action.
    pub fn transfer(&self, action: usize) -> Option<(usize, usize)> {
        if action == 0 || action >= self.len() {
            return None;
        }
        let k = action - 1;
        let from = k / (self.num_slices - 1);
        let mut to = k % (self.num_slices - 1);
        if to >= from {
            to += 1;
        }
        Some((from, to))
    }

    pub fn action_for(&self, from: usize, to: usize) -> usize {
        assert!(from != to && from < self.num_slices && to < self.num_slices);
        let to_idx = if to > from { to - 1 } else { to };
        1 + from * (self.num_slices - 1) + to_idx
    }

    /// Validity of every action for `alloc`: a transfer needs a non-empty donor.
    pub fn mask(&self, alloc: &Allocation) -> Vec<bool> {
        (0..self.len())
            .map(|a| match self.transfer(a) {
                None => true,
                Some((from, _)) => alloc.blocks[from] > 0,
            })
            .collect()
    }
}

/// Resource blocks per slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    pub blocks: Vec<u32>,
}

impl Allocation {
    pub fn new(blocks: Vec<u32>) -> Self {
        Allocation { blocks }
    }

    /// Spreads `total` blocks as evenly as possible, extra blocks to the first slices.
    pub fn even(num_slices: usize, total: u32) -> Self {
        let base = total / num_slices as u32;
        let extra = (total % num_slices as u32) as usize;
        Allocation {
            blocks: (0..num_slices).map(|i| base + (i < extra) as u32).collect(),
        }
    }

    pub fn zero(num_slices: usize) -> Self {
        Allocation {
            blocks: vec![0; num_slices],
        }
    }

    pub fn total(&self) -> u32 {
        self.blocks.iter().sum()
    }

    pub fn apply_action(&self, action: usize) -> Result<Allocation> {
        let space = ActionSpace::new(self.blocks.len());
        if action >= space.len() {
            return Err(Error::InvalidAction {
                action,
                blocks: self.blocks.clone(),
            });
        }
        let mut next = self.clone();
        if let Some((from, to)) = space.transfer(action) {
            if next.blocks[from] == 0 {
                return Err(Error::InvalidAction {
                    action,
                    blocks: self.blocks.clone(),
                });
            }
            next.blocks[from] -= 1;
            next.blocks[to] += 1;
        }
        Ok(next)
    }
}

/// Per-slice results of one slot.
#[derive(Debug, Clone, Default)]
pub struct SlotOutcome {
    pub delivered: Vec<Vec<(Packet, u64)>>,
    pub dropped: Vec<Vec<Packet>>,
    pub chi: Vec<usize>,
    pub omega: Vec<usize>,
    pub phi: f64,
}

impl SlotOutcome {
    fn with_slices(n: usize) -> Self {
        SlotOutcome {
            delivered: vec![Vec::new(); n],
            dropped: vec![Vec::new(); n],
            chi: vec![0; n],
            omega: vec![0; n],
            phi: 0.0,
        }
    }

    fn clear(&mut self) {
        self.delivered.iter_mut().for_each(Vec::clear);
        self.dropped.iter_mut().for_each(Vec::clear);
        self.chi.iter_mut().for_each(|c| *c = 0);
        self.omega.iter_mut().for_each(|c| *c = 0);
        self.phi = 0.0;
    }
}

/// Score of one slice: utility of delivered packets over handled (delivered
/// plus dropped) packets, or 0 when the slice handled nothing.
pub fn slice_score(delivered: &[(Packet, u64)], omega: usize, users: &[UserState]) -> f64 {
    let handled = delivered.len() + omega;
    if handled == 0 {
        return 0.0;
    }
    let total: f64 = delivered
        .iter()
        .map(|(p, d)| utility(&users[p.user_id].profile, Delay::Slots(*d)))
        .sum();
    total / handled as f64
}

/// System utility of a slot: mean slice score over slices with at least one user.
///
/// `users` must be indexed by `user_id`.
pub fn slot_reward(delivered: &[Vec<(Packet, u64)>], omega: &[usize], users: &[UserState]) -> f64 {
    let mut sum = 0.0;
    let mut populated = 0usize;
    for (slice, del) in delivered.iter().enumerate() {
        if !users.iter().any(|u| u.profile.slice == slice) {
            continue;
        }
        populated += 1;
        sum += slice_score(del, omega[slice], users);
    }
    if populated == 0 {
        0.0
    } else {
        sum / populated as f64
    }
}

/// Normalized observation: four features per slice, slice-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub const FEATURES_PER_SLICE: usize = 4;

/// Encodes, for every slice: occupancy / Q, mean and min remaining time
/// before the budget (clamped to ±`delta_max`, divided by it, +1 when empty),
/// and the packets the previous allocation would deliver now, divided by the
/// single-slice maximum.
pub fn build_state(
    buffers: &[SliceBuffer],
    prev_alloc: &Allocation,
    users: &[UserState],
    current_slot: u64,
    link: &LinkParams,
    delta_max: f64,
) -> StateVector {
    let max_deliverable = link.max_packets_per_slot() as f64;
    let mut features = Vec::with_capacity(buffers.len() * FEATURES_PER_SLICE);
    for (slice, buf) in buffers.iter().enumerate() {
        let len = buf.len();
        features.push(len as f64 / buf.capacity as f64);
        if len == 0 {
            features.extend_from_slice(&[1.0, 1.0]);
        } else {
            let mut sum = 0.0;
            let mut min = f64::INFINITY;
            for p in buf.packets() {
                let age = (current_slot - p.arrival_slot) as f64;
                let slack = (users[p.user_id].profile.delay_budget - age)
                    .clamp(-delta_max, delta_max)
                    / delta_max;
                sum += slack;
                min = min.min(slack);
            }
            features.push(sum / len as f64);
            features.push(min);
        }
        let deliverable = len.min(link.packets_per_slot(prev_alloc.blocks[slice]));
        features.push(deliverable as f64 / max_deliverable);
    }
    StateVector(features)
}

/// Cumulative per-slice packet counts since the last reset.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SliceCounters {
    pub generated: usize,
    pub delivered: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone)]
pub struct IntervalOutcome {
    pub state: StateVector,
    pub mean_phi: f64,
}

/// The sliced backhaul environment of one simulation run.
#[derive(Debug, Clone)]
pub struct SlicingEnv {
    link: LinkParams,
    profiles: Vec<AppProfile>,
    num_users: usize,
    frozen_apps: Option<Vec<AppKind>>,
    num_slices: usize,
    delta_max: f64,
    users: Vec<UserState>,
    buffers: Vec<SliceBuffer>,
    alloc: Allocation,
    slot: u64,
    counters: Vec<SliceCounters>,
    outcome: SlotOutcome,
    arrivals: Vec<Vec<Packet>>,
    scratch: Vec<Packet>,
}

impl SlicingEnv {
    /// Environment with `num_users` users drawing applications from `profiles`.
    /// Call [`SlicingEnv::reset`] before stepping.
    pub fn new(link: LinkParams, profiles: Vec<AppProfile>, num_users: usize) -> Result<Self> {
        link.validate()?;
        if profiles.is_empty() {
            return Err(Error::Config("no application profiles".into()));
        }
        if num_users == 0 {
            return Err(Error::Config("num_users must be at least 1".into()));
        }
        for p in &profiles {
            p.validate()?;
        }
        let num_slices = profiles.iter().map(|p| p.slice).max().unwrap_or(0).max(1) + 1;
        let delta_max = profiles.iter().map(|p| p.delay_budget).fold(0.0, f64::max);
        Ok(SlicingEnv {
            buffers: (0..num_slices)
                .map(|s| SliceBuffer::new(s, link.buffer_packets))
                .collect(),
            alloc: Allocation::even(num_slices, link.num_blocks),
            link,
            profiles,
            num_users,
            frozen_apps: None,
            num_slices,
            delta_max,
            users: Vec::new(),
            slot: 0,
            counters: vec![SliceCounters::default(); num_slices],
            outcome: SlotOutcome::with_slices(num_slices),
            arrivals: vec![Vec::new(); num_slices],
            scratch: Vec::new(),
        })
    }

    /// Pins the application of each user instead of redrawing them per episode.
    pub fn freeze_applications(&mut self, apps: Vec<AppKind>) -> Result<()> {
        for k in &apps {
            if !self.profiles.iter().any(|p| p.kind == *k) {
                return Err(Error::Config(format!(
                    "frozen application {k} has no profile"
                )));
            }
        }
        self.num_users = apps.len();
        self.frozen_apps = Some(apps);
        Ok(())
    }

    /// Installs explicit users (indexed by `user_id`) without touching the rest of the state.
    pub fn set_users(&mut self, users: Vec<UserState>) {
        debug_assert!(users.iter().enumerate().all(|(i, u)| u.user_id == i));
        self.num_users = users.len();
        self.users = users;
    }

    pub fn set_allocation(&mut self, alloc: Allocation) {
        assert_eq!(alloc.blocks.len(), self.num_slices);
        self.alloc = alloc;
    }

    /// Starts a new episode: empty buffers, even split, fresh applications.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        self.buffers.iter_mut().for_each(SliceBuffer::clear);
        self.alloc = Allocation::even(self.num_slices, self.link.num_blocks);
        self.slot = 0;
        self.counters = vec![SliceCounters::default(); self.num_slices];
        self.users = match &self.frozen_apps {
            None => assign_applications(self.num_users, &self.profiles, rng)?,
            Some(apps) => {
                let pinned: Vec<AppProfile> = apps
                    .iter()
                    .map(|k| {
                        self.profiles
                            .iter()
                            .find(|p| p.kind == *k)
                            .cloned()
                            .expect("checked on freeze")
                    })
                    .collect();
                pinned
                    .into_iter()
                    .enumerate()
                    .map(|(i, p)| {
                        let profile = std::slice::from_ref(&p);
                        let mut u = assign_applications(1, profile, rng)
                            .expect("one profile")
                            .remove(0);
                        u.user_id = i;
                        u
                    })
                    .collect()
            }
        };
        Ok(())
    }

    pub fn link(&self) -> &LinkParams {
        &self.link
    }

    pub fn num_slices(&self) -> usize {
        self.num_slices
    }

    pub fn action_space(&self) -> ActionSpace {
        ActionSpace::new(self.num_slices)
    }

    pub fn state_dim(&self) -> usize {
        self.num_slices * FEATURES_PER_SLICE
    }

    pub fn allocation(&self) -> &Allocation {
        &self.alloc
    }

    pub fn users(&self) -> &[UserState] {
        &self.users
    }

    pub fn buffers(&self) -> &[SliceBuffer] {
        &self.buffers
    }

    pub fn counters(&self) -> &[SliceCounters] {
        &self.counters
    }

    /// Index of the next slot to be simulated.
    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn delta_max(&self) -> f64 {
        self.delta_max
    }

    pub fn observe(&self) -> StateVector {
        build_state(
            &self.buffers,
            &self.alloc,
            &self.users,
            self.slot,
            &self.link,
            self.delta_max,
        )
    }

    /// Simulates one slot with `blocks` resource blocks per slice.
    pub fn step_slot<R: Rng + ?Sized>(
        &mut self,
        blocks: &[u32],
        rng: &mut R,
    ) -> Result<&SlotOutcome> {
        self.outcome.clear();
        let slot = self.slot;
        for u in self.users.iter_mut().filter(|u| u.profile.on_off) {
            u.step_onoff(rng)?;
        }
        for (s, buf) in self.buffers.iter_mut().enumerate() {
            let chi = buf.transmit(blocks[s], slot, &self.link, &mut self.outcome.delivered[s]);
            self.outcome.chi[s] = chi;
            self.counters[s].delivered += chi;
        }
        self.arrivals.iter_mut().for_each(Vec::clear);
        for u in self.users.iter_mut() {
            self.scratch.clear();
            u.generate_packets(slot, &self.link, &mut self.scratch);
            self.arrivals[u.profile.slice].extend_from_slice(&self.scratch);
        }
        for (s, buf) in self.buffers.iter_mut().enumerate() {
            self.counters[s].generated += self.arrivals[s].len();
            let omega =
                buf.enqueue_with_overflow(&self.arrivals[s], &mut self.outcome.dropped[s])?;
            self.outcome.omega[s] = omega;
            self.counters[s].dropped += omega;
        }
        self.outcome.phi = slot_reward(&self.outcome.delivered, &self.outcome.omega, &self.users);
        self.slot += 1;
        Ok(&self.outcome)
    }

    fn run_interval<R, F>(&mut self, blocks: &[u32], rng: &mut R, observer: &mut F) -> Result<f64>
    where
        R: Rng + ?Sized,
        F: FnMut(&SlotOutcome, &[u32]),
    {
        let mut sum = 0.0;
        for _ in 0..self.link.decision_slots {
            let out = self.step_slot(blocks, rng)?;
            sum += out.phi;
            observer(out, blocks);
        }
        Ok(sum / self.link.decision_slots as f64)
    }

    /// Applies `action` to the allocation and runs one decision interval.
    pub fn step_decision_interval<R: Rng + ?Sized>(
        &mut self,
        action: usize,
        rng: &mut R,
    ) -> Result<IntervalOutcome> {
        self.step_decision_interval_observed(action, rng, &mut |_, _| {})
    }

    pub fn step_decision_interval_observed<R, F>(
        &mut self,
        action: usize,
        rng: &mut R,
        observer: &mut F,
    ) -> Result<IntervalOutcome>
    where
        R: Rng + ?Sized,
        F: FnMut(&SlotOutcome, &[u32]),
    {
        self.alloc = self.alloc.apply_action(action)?;
        let blocks = self.alloc.blocks.clone();
        let mean_phi = self.run_interval(&blocks, rng, observer)?;
        Ok(IntervalOutcome {
            state: self.observe(),
            mean_phi,
        })
    }

    /// Runs one decision interval with no blocks for user data, the link
    /// being busy with training traffic. The exploitation allocation is kept.
    pub fn step_update_interval<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
    ) -> Result<IntervalOutcome> {
        self.step_update_interval_observed(rng, &mut |_, _| {})
    }

    pub fn step_update_interval_observed<R, F>(
        &mut self,
        rng: &mut R,
        observer: &mut F,
    ) -> Result<IntervalOutcome>
    where
        R: Rng + ?Sized,
        F: FnMut(&SlotOutcome, &[u32]),
    {
        let blocks = vec![0; self.num_slices];
        let mean_phi = self.run_interval(&blocks, rng, observer)?;
        Ok(IntervalOutcome {
            state: self.observe(),
            mean_phi,
        })
    }
}
