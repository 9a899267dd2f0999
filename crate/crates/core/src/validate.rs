//! Fast self-checks run by `colsim validate`: closed-form oracles and a few
//! invariants on short simulations.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::action_probabilities;
use crate::config::ExperimentConfig;
use crate::env::{utility, Delay, SlicingEnv};
use crate::harness::{nearest_rank, simulate_run_records};
use crate::link::LinkParams;
use crate::nn::{AdamState, ValueNet};
use crate::scheduler::{channel_budget, plan_episode, ConvergenceDetector, CostParams, Strategy};
use crate::traffic::default_profiles;

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed {
            write!(f, "PASS {}", self.name)
        } else {
            write!(f, "FAIL {}: {}", self.name, self.detail)
        }
    }
}

type Outcome = std::result::Result<(), String>;
type NamedCheck = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Outcome {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn packets_per_slot() -> Outcome {
    let link = LinkParams::default();
    let got: Vec<usize> = (0..=10).map(|n| link.packets_per_slot(n)).collect();
    let want = vec![0, 1, 3, 5, 7, 9, 11, 13, 15, 17, 19];
    ensure(got == want, || format!("{got:?}"))
}

fn utilities() -> Outcome {
    let p = default_profiles(&LinkParams::default());
    let cases = [
        (utility(&p[0], Delay::Slots(20)), 0.5),
        (utility(&p[0], Delay::Slots(5)), 1.0),
        (utility(&p[2], Delay::Slots(7)), 1.0),
        (utility(&p[2], Delay::Slots(8)), 0.0),
        (utility(&p[3], Delay::Infinite), 0.0),
    ];
    for (i, (got, want)) in cases.iter().enumerate() {
        ensure(close(*got, *want, 1e-12), || {
            format!("case {i}: {got} != {want}")
        })?;
    }
    Ok(())
}

fn network_shape() -> Outcome {
    let net = ValueNet::zeros(8, 3);
    ensure(net.num_params() == 2755, || {
        format!("{} parameters", net.num_params())
    })
}

fn gradient_matches_finite_differences() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = ValueNet::init(8, 3, &mut rng);
    let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (action, target) = (1, 0.7);
    let grad = net.grad_td_loss(&x, action, target);
    let loss = |n: &ValueNet| (n.q_value(&x, action) - target).powi(2);
    let h = 1e-5;
    for i in (0..net.num_params()).step_by(97) {
        let mut plus = net.clone();
        plus.params_mut()[i] += h;
        let mut minus = net.clone();
        minus.params_mut()[i] -= h;
        let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
        let tol = (1e-4 * fd.abs()).max(1e-7);
        ensure(close(fd, grad[i], tol), || {
            format!("parameter {i}: analytic {} vs numeric {fd}", grad[i])
        })?;
    }
    Ok(())
}

fn adam_first_step() -> Outcome {
    let mut adam = AdamState::new(1, 1e-5);
    let mut p = [0.0];
    adam.step(&mut p, &[1.0]);
    ensure(close(p[0], -1e-5, 1e-10), || format!("first step {}", p[0]))
}

fn softmax_example() -> Outcome {
    let p = action_probabilities(&[1.0, 0.0, 0.0], &[true; 3], 0.5);
    ensure(
        close(p[0], 0.78699, 1e-5) && close(p[1], 0.10651, 1e-5) && close(p[2], p[1], 1e-15),
        || format!("{p:?}"),
    )
}

fn channel_budgets() -> Outcome {
    let link = LinkParams::default();
    let cost = CostParams::default();
    let d = ConvergenceDetector::new(10);
    let budget = |s, prior| {
        channel_budget(&plan_episode(s, prior, &d, &link, &cost), &link, &cost).transitions
    };
    let got = [
        budget(Strategy::constant(2), 0),
        budget(Strategy::constant(1), 9),
        budget(Strategy::constant(0), 0),
    ];
    ensure(got == [284, 11, 0], || format!("{got:?}"))
}

fn detector_fires_on_plateau() -> Outcome {
    let mut d = ConvergenceDetector::new(50);
    for _ in 0..100 {
        d.update(0.4);
    }
    let mut rising = ConvergenceDetector::new(3);
    for k in 0..100 {
        rising.update(k as f64 / 100.0);
    }
    ensure(d.fired_at() == Some(100) && !rising.fired(), || {
        format!("plateau {:?}, rising {:?}", d.fired_at(), rising.fired_at())
    })
}

fn nearest_rank_example() -> Outcome {
    let v = [0.2, 0.8];
    ensure(
        nearest_rank(&v, 5.0) == 0.2 && nearest_rank(&v, 95.0) == 0.8,
        || "nearest rank".into(),
    )
}

fn episode_invariants() -> Outcome {
    let link = LinkParams::default();
    let mut env =
        SlicingEnv::new(link.clone(), default_profiles(&link), 5).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..3 {
        env.reset(&mut rng).map_err(|e| e.to_string())?;
        for _ in 0..link.decisions_per_episode() {
            let mask = env.action_space().mask(env.allocation());
            let valid: Vec<usize> = (0..mask.len()).filter(|&a| mask[a]).collect();
            let action = valid[rng.gen_range(0..valid.len())];
            let out = env
                .step_decision_interval(action, &mut rng)
                .map_err(|e| e.to_string())?;
            ensure((0.0..=1.0).contains(&out.mean_phi), || {
                format!("phi {}", out.mean_phi)
            })?;
            ensure(out.state.0.iter().all(|x| (-1.0..=1.0).contains(x)), || {
                "feature out of range".into()
            })?;
            ensure(env.allocation().total() == link.num_blocks, || {
                "blocks not conserved".into()
            })?;
        }
        for (c, b) in env.counters().iter().zip(env.buffers()) {
            ensure(c.generated == c.delivered + c.dropped + b.len(), || {
                format!("packets not conserved: {c:?}")
            })?;
        }
    }
    Ok(())
}

fn runs_are_deterministic() -> Outcome {
    let cfg = ExperimentConfig::parse_str("episodes = 3\nstrategies = constant:2\n")
        .map_err(|e| e.to_string())?;
    let a = simulate_run_records(&cfg, Strategy::constant(2), 0).map_err(|e| e.to_string())?;
    let b = simulate_run_records(&cfg, Strategy::constant(2), 0).map_err(|e| e.to_string())?;
    ensure(a == b, || "two identical runs differ".into())
}

fn dump_round_trip() -> Outcome {
    let net = ValueNet::init(8, 3, &mut ChaCha8Rng::seed_from_u64(5));
    let mut buf = Vec::new();
    net.dump(&mut buf).map_err(|e| e.to_string())?;
    let back = ValueNet::load(buf.as_slice()).map_err(|e| e.to_string())?;
    ensure(back == net, || "loaded network differs".into())
}

/// Runs every check, in a fixed order.
pub fn run_all() -> Vec<Check> {
    let checks: [NamedCheck; 12] = [
        ("deliverable packets per block count", packets_per_slot),
        ("delay utility", utilities),
        ("network parameter count", network_shape),
        (
            "backpropagation against finite differences",
            gradient_matches_finite_differences,
        ),
        ("first Adam step", adam_first_step),
        ("softmax probabilities", softmax_example),
        ("channel budgets", channel_budgets),
        ("convergence detector", detector_fires_on_plateau),
        ("nearest-rank percentiles", nearest_rank_example),
        ("random-episode invariants", episode_invariants),
        ("run determinism", runs_are_deterministic),
        ("network dump round trip", dump_round_trip),
    ];
    checks
        .into_iter()
        .map(|(name, check)| match check() {
            Ok(()) => Check {
                name,
                passed: true,
                detail: String::new(),
            },
            Err(detail) => Check {
                name,
                passed: false,
                detail,
            },
        })
        .collect()
}
