//! Per-user packet arrivals.
//!
//! Every user runs one application. Non-critical applications emit at a
//! constant bitrate; critical ones follow a two-state (silent/active)
//! Markov chain and emit at their bitrate only while active. Bits are
//! turned into packets through a fractional accumulator, so the long-run
//! packet rate matches the bitrate exactly.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::LinkParams;

/// Slice index of the non-critical slice.
pub const SLICE_NC: usize = 0;
/// Slice index of the critical slice.
pub const SLICE_C: usize = 1;
pub const NUM_SLICES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AppKind {
    /// Non-critical voice.
    Ncvo,
    /// Non-critical video.
    Ncvi,
    /// Critical voice.
    Cvo,
    /// Critical video.
    Cvi,
}

impl AppKind {
    pub const ALL: [AppKind; 4] = [AppKind::Ncvo, AppKind::Ncvi, AppKind::Cvo, AppKind::Cvi];

    pub fn name(self) -> &'static str {
        match self {
            AppKind::Ncvo => "NCVO",
            AppKind::Ncvi => "NCVI",
            AppKind::Cvo => "CVO",
            AppKind::Cvi => "CVI",
        }
    }
}

impl fmt::Display for AppKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AppKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "NCVO" => Ok(AppKind::Ncvo),
            "NCVI" => Ok(AppKind::Ncvi),
            "CVO" => Ok(AppKind::Cvo),
            "CVI" => Ok(AppKind::Cvi),
            other => Err(Error::Config(format!("unknown application `{other}`"))),
        }
    }
}

/// Static description of an application.
#[derive(Debug, Clone, PartialEq)]
pub struct AppProfile {
    pub kind: AppKind,
    /// Bitrate in bits per second (rate while active for on-off sources).
    pub bitrate_bps: u64,
    /// Packet delay budget in slots. May be fractional (75 ms at 10 ms slots).
    pub delay_budget: f64,
    pub slice: usize,
    pub on_off: bool,
    /// Probability of keeping the current on-off state over one slot.
    pub p_stay: f64,
}

impl AppProfile {
    /// Builds a profile from a millisecond delay budget.
    pub fn new(
        kind: AppKind,
        bitrate_bps: u64,
        delay_ms: f64,
        p_stay: f64,
        link: &LinkParams,
    ) -> Result<Self> {
        let (slice, on_off) = match kind {
            AppKind::Ncvo | AppKind::Ncvi => (SLICE_NC, false),
            AppKind::Cvo | AppKind::Cvi => (SLICE_C, true),
        };
        let profile = AppProfile {
            kind,
            bitrate_bps,
            delay_budget: link.ms_to_slots(delay_ms),
            slice,
            on_off,
            p_stay,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| {
            Err(Error::InvalidValue {
                key: format!("app.{}", self.kind.name().to_ascii_lowercase()),
                reason: reason.into(),
            })
        };
        if self.bitrate_bps == 0 {
            return bad("bitrate must be positive");
        }
        if !(self.delay_budget >= 1.0) {
            return bad("delay budget must be at least one slot");
        }
        if !(0.0..=1.0).contains(&self.p_stay) {
            return bad("p_stay must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn is_critical(&self) -> bool {
        self.slice == SLICE_C
    }
}

/// The four default applications: (kind, kb/s, delay budget in ms).
pub fn default_profiles(link: &LinkParams) -> Vec<AppProfile> {
    const TABLE: [(AppKind, u64, f64); 4] = [
        (AppKind::Ncvo, 25_000, 100.0),
        (AppKind::Ncvi, 384_000, 300.0),
        (AppKind::Cvo, 25_000, 75.0),
        (AppKind::Cvi, 384_000, 100.0),
    ];
    TABLE
        .iter()
        .map(|&(kind, bps, ms)| AppProfile::new(kind, bps, ms, 0.9, link).expect("default profile"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activity {
    Silent,
    Active,
}

impl Activity {
    fn flipped(self) -> Self {
        match self {
            Activity::Silent => Activity::Active,
            Activity::Active => Activity::Silent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub user_id: usize,
    pub slice_id: usize,
    pub arrival_slot: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserState {
    pub user_id: usize,
    pub profile: AppProfile,
    pub activity: Activity,
    /// Generated bits not yet forming a whole packet; always below the packet length.
    pub bit_accumulator: u64,
}

impl UserState {
    pub fn new(user_id: usize, profile: AppProfile, activity: Activity) -> Self {
        let activity = if profile.on_off {
            activity
        } else {
            Activity::Active
        };
        UserState {
            user_id,
            profile,
            activity,
            bit_accumulator: 0,
        }
    }

    /// Advances the on-off chain given a uniform draw `u` in [0, 1): the
    /// state flips when `u < 1 - p_stay`.
    pub fn step_onoff_with(&mut self, u: f64) -> Result<()> {
        if !self.profile.on_off {
            return Err(Error::Contract(format!(
                "on-off transition requested for constant-bitrate application {}",
                self.profile.kind
            )));
        }
        if u < 1.0 - self.profile.p_stay {
            self.activity = self.activity.flipped();
        }
        Ok(())
    }

    pub fn step_onoff<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let u: f64 = rng.gen();
        self.step_onoff_with(u)
    }

    /// Emits this slot's packets into `out` and returns how many were emitted.
    pub fn generate_packets(
        &mut self,
        slot: u64,
        link: &LinkParams,
        out: &mut Vec<Packet>,
    ) -> usize {
        if self.activity == Activity::Silent {
            return 0;
        }
        self.bit_accumulator += link.bits_per_slot(self.profile.bitrate_bps);
        let count = (self.bit_accumulator / link.packet_bits) as usize;
        self.bit_accumulator %= link.packet_bits;
        out.extend((0..count).map(|_| Packet {
            user_id: self.user_id,
            slice_id: self.profile.slice,
            arrival_slot: slot,
        }));
        count
    }
}

/// Draws one application per user, uniformly over `profiles`. On-off sources
/// start in a uniformly drawn state, the stationary law of a symmetric chain.
pub fn assign_applications<R: Rng + ?Sized>(
    num_users: usize,
    profiles: &[AppProfile],
    rng: &mut R,
) -> Result<Vec<UserState>> {
    if num_users == 0 {
        return Err(Error::Config("num_users must be at least 1".into()));
    }
    if profiles.is_empty() {
        return Err(Error::Config("no application profiles available".into()));
    }
    Ok((0..num_users)
        .map(|user_id| {
            let profile = profiles[rng.gen_range(0..profiles.len())].clone();
            let activity = if profile.on_off && rng.gen_bool(0.5) {
                Activity::Silent
            } else {
                Activity::Active
            };
            UserState::new(user_id, profile, activity)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn profile(kind: AppKind) -> AppProfile {
        let link = LinkParams::default();
        default_profiles(&link)
            .into_iter()
            .find(|p| p.kind == kind)
            .unwrap()
    }

    #[test]
    fn default_table_in_slots() {
        let budgets: Vec<f64> = AppKind::ALL
            .iter()
            .map(|&k| profile(k).delay_budget)
            .collect();
        assert_eq!(budgets, vec![10.0, 30.0, 7.5, 10.0]);
        assert!(!profile(AppKind::Ncvi).on_off);
        assert!(profile(AppKind::Cvo).on_off);
        assert_eq!(profile(AppKind::Cvi).slice, SLICE_C);
    }

    #[test]
    fn five_users_get_known_profiles() {
        let link = LinkParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let users = assign_applications(5, &default_profiles(&link), &mut rng).unwrap();
        assert_eq!(users.len(), 5);
        for (i, u) in users.iter().enumerate() {
            assert_eq!(u.user_id, i);
            assert_eq!(u.bit_accumulator, 0);
            if !u.profile.on_off {
                assert_eq!(u.activity, Activity::Active);
            }
        }
    }

    #[test]
    fn zero_users_is_config_error() {
        let link = LinkParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            assign_applications(0, &default_profiles(&link), &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn single_user_assignment_is_deterministic() {
        let link = LinkParams::default();
        let profiles = default_profiles(&link);
        let a = assign_applications(1, &profiles, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = assign_applications(1, &profiles, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn profile_frequencies_are_uniform() {
        let link = LinkParams::default();
        let profiles = default_profiles(&link);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut counts = [0usize; 4];
        let users = assign_applications(10_000, &profiles, &mut rng).unwrap();
        for u in &users {
            counts[AppKind::ALL
                .iter()
                .position(|&k| k == u.profile.kind)
                .unwrap()] += 1;
        }
        for c in counts {
            let f = c as f64 / 10_000.0;
            assert!((f - 0.25).abs() <= 0.02, "frequency {f}");
        }
    }

    #[test]
    fn silent_flips_on_small_draw() {
        let mut u = UserState::new(0, profile(AppKind::Cvo), Activity::Silent);
        u.step_onoff_with(0.05).unwrap();
        assert_eq!(u.activity, Activity::Active);
        u.step_onoff_with(0.5).unwrap();
        assert_eq!(u.activity, Activity::Active);
    }

    #[test]
    fn absorbing_chain_never_moves() {
        let mut p = profile(AppKind::Cvi);
        p.p_stay = 1.0;
        let mut u = UserState::new(0, p, Activity::Silent);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            u.step_onoff(&mut rng).unwrap();
            assert_eq!(u.activity, Activity::Silent);
        }
    }

    #[test]
    fn onoff_on_cbr_is_contract_violation() {
        let mut u = UserState::new(0, profile(AppKind::Ncvo), Activity::Active);
        assert!(matches!(u.step_onoff_with(0.0), Err(Error::Contract(_))));
    }

    #[test]
    fn empirical_stay_fraction() {
        let mut u = UserState::new(0, profile(AppKind::Cvi), Activity::Active);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let steps = 100_000;
        let mut stays = 0;
        let mut active = 0;
        for _ in 0..steps {
            let before = u.activity;
            u.step_onoff(&mut rng).unwrap();
            stays += (before == u.activity) as usize;
            active += (u.activity == Activity::Active) as usize;
        }
        let stay = stays as f64 / steps as f64;
        assert!((stay - 0.9).abs() <= 0.01, "stay fraction {stay}");
        // Correlated chain: the variance of the occupancy estimate is inflated
        // by (1 + rho) / (1 - rho) = 19 for lag-one correlation 0.8.
        let sigma = (0.25 * 19.0 / steps as f64).sqrt();
        let occ = active as f64 / steps as f64;
        assert!((occ - 0.5).abs() <= 3.0 * sigma, "occupancy {occ}");
    }

    #[test]
    fn ncvi_first_slot_emits_seven() {
        let link = LinkParams::default();
        let mut u = UserState::new(2, profile(AppKind::Ncvi), Activity::Active);
        let mut out = Vec::new();
        assert_eq!(u.generate_packets(4, &link, &mut out), 7);
        assert_eq!(u.bit_accumulator, 256);
        assert!(out
            .iter()
            .all(|p| p.user_id == 2 && p.slice_id == SLICE_NC && p.arrival_slot == 4));
        assert_eq!(u.generate_packets(5, &link, &mut out), 8);
        assert_eq!(u.bit_accumulator, 0);
    }

    #[test]
    fn silent_source_emits_nothing() {
        let link = LinkParams::default();
        let mut u = UserState::new(0, profile(AppKind::Cvo), Activity::Silent);
        u.bit_accumulator = 100;
        let mut out = Vec::new();
        assert_eq!(u.generate_packets(0, &link, &mut out), 0);
        assert!(out.is_empty());
        assert_eq!(u.bit_accumulator, 100);
    }

    #[test]
    fn ncvo_first_packet_on_third_slot() {
        let link = LinkParams::default();
        let mut u = UserState::new(0, profile(AppKind::Ncvo), Activity::Active);
        let mut out = Vec::new();
        let counts: Vec<usize> = (0..3)
            .map(|s| u.generate_packets(s, &link, &mut out))
            .collect();
        assert_eq!(counts, vec![0, 0, 1]);
        assert_eq!(u.bit_accumulator, 750 - 512);
    }

    #[test]
    fn cbr_long_run_rate() {
        let link = LinkParams::default();
        let mut u = UserState::new(0, profile(AppKind::Ncvi), Activity::Active);
        let mut out = Vec::new();
        let horizon = 10_000u64;
        let n: usize = (0..horizon)
            .map(|s| u.generate_packets(s, &link, &mut out))
            .sum();
        let rate = n as f64 / (horizon as f64 * 0.01);
        let expected = 384_000.0 / 512.0;
        assert!((rate - expected).abs() <= expected / horizon as f64 + 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn bits_are_conserved(kind in 0usize..4, seed in any::<u64>(), horizon in 1u64..400) {
                let link = LinkParams::default();
                let mut u = UserState::new(0, profile(AppKind::ALL[kind]), Activity::Active);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut out = Vec::new();
                let mut active_bits = 0u64;
                for slot in 0..horizon {
                    if u.profile.on_off {
                        u.step_onoff(&mut rng).unwrap();
                    }
                    if u.activity == Activity::Active {
                        active_bits += link.bits_per_slot(u.profile.bitrate_bps);
                    }
                    u.generate_packets(slot, &link, &mut out);
                    prop_assert!(u.bit_accumulator < link.packet_bits);
                }
                prop_assert_eq!(out.len() as u64 * link.packet_bits + u.bit_accumulator, active_bits);
            }
        }
    }
}
