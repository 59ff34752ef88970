//! Monte Carlo trajectory simulation: seeded quenched walks, boundary
//! hitting times, box-exit probability estimates, and trap-sojourn
//! experiments.
//!
//! Each step consumes exactly one uniform draw, so a trajectory prefix is
//! unchanged by edits to bonds the walk has not yet been able to touch.
//! Replicas derive their seeds as a pure function of `(master seed, index)`
//! and aggregate by summation, making every estimate independent of
//! scheduling.

use crate::environment::Environment;
use crate::error::Error;
use crate::kernel::pi;
use crate::lattice::{LatticePoint, ScaledBox};
use crate::rng::replica_seed;
use crate::stats::wilson_interval;
use crate::traps::TrapPattern;
use crate::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// A simulated path: the start point and every subsequent position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    start: LatticePoint,
    steps: Vec<LatticePoint>,
    seed: u64,
}

impl Trajectory {
    pub fn start(&self) -> &LatticePoint {
        &self.start
    }

    /// Number of steps taken.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Position after `t` steps; `t = 0` is the start.
    pub fn position(&self, t: usize) -> &LatticePoint {
        if t == 0 {
            &self.start
        } else {
            &self.steps[t - 1]
        }
    }

    /// All positions including the start.
    pub fn positions(&self) -> impl Iterator<Item = &LatticePoint> {
        std::iter::once(&self.start).chain(self.steps.iter())
    }
}

/// Draws the next position. Consumes exactly one uniform per call; the 2d
/// directions are scanned in canonical order (axis ascending, minus then
/// plus).
fn sample_step<R: Rng>(env: &Environment, at: &LatticePoint, rng: &mut R) -> LatticePoint {
    let window = env.window();
    let d = env.dim();
    let site = window.index_of(at).expect("walk stays in storage");
    let side = window.side() as usize;
    let mut weights = [0.0f64; 16];
    debug_assert!(2 * d <= 16);
    let mut total = 0.0;
    for axis in 0..d {
        let stride = side.pow((d - 1 - axis) as u32);
        let down = env.bond_at_site(site - stride, axis);
        let up = env.bond_at_site(site, axis);
        weights[2 * axis] = down;
        weights[2 * axis + 1] = up;
        total += down + up;
    }
    let target = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for k in 0..2 * d {
        acc += weights[k];
        if target < acc {
            let axis = k / 2;
            let delta = if k % 2 == 0 { -1 } else { 1 };
            return at.offset(axis, delta);
        }
    }
    // numerically possible only when target == total; take the last direction
    at.offset(d - 1, 1)
}

/// Simulates a `length`-step quenched walk from `start`.
///
/// `length <= radius - |start|` always fits; the range check is enforced
/// lazily, so longer walks succeed as long as the realized path stays in
/// the interior of the stored window.
pub fn simulate(
    env: &Environment,
    start: &LatticePoint,
    length: u64,
    seed: u64,
) -> Result<Trajectory> {
    if start.dim() != env.dim() {
        return Err(Error::DimensionMismatch {
            expected: env.dim(),
            got: start.dim(),
        });
    }
    let limit = env.radius() - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut at = start.clone();
    let mut steps = Vec::with_capacity((length as usize).min(1 << 24));
    for _ in 0..length {
        if at.sup_norm() > limit {
            return Err(Error::HorizonTooLarge {
                horizon: length,
                radius: env.radius(),
            });
        }
        at = sample_step(env, &at, &mut rng);
        steps.push(at.clone());
    }
    Ok(Trajectory {
        start: start.clone(),
        steps,
        seed,
    })
}

/// First arrival on the inner boundary of one scaled box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingRecord {
    pub n_scale: u32,
    pub time: u64,
    pub location: LatticePoint,
}

/// Hitting times of the nested boundaries, with a truncation flag instead
/// of an error when the trajectory ends too early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingReport {
    pub records: Vec<HittingRecord>,
    /// True when the trajectory ended before reaching the outermost
    /// requested boundary.
    pub truncated: bool,
}

/// First hitting times of the boundaries of `B_1, ..., B_n_max`, plus the
/// convention that the zeroth hit happens at time zero at the start point.
pub fn hitting_times(traj: &Trajectory, n_max: u32) -> HittingReport {
    let mut records = vec![HittingRecord {
        n_scale: 0,
        time: 0,
        location: traj.start().clone(),
    }];
    let mut next = 1u32;
    for (t, p) in traj.positions().enumerate() {
        while next <= n_max && p.sup_norm() >= 3 * i64::from(next) {
            records.push(HittingRecord {
                n_scale: next,
                time: t as u64,
                location: p.clone(),
            });
            next += 1;
        }
        if next > n_max {
            break;
        }
    }
    HittingReport {
        records,
        truncated: next <= n_max,
    }
}

/// A Monte Carlo probability estimate with a 95% Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub hits: u64,
    pub replicas: u64,
    pub seed: u64,
}

/// Monte Carlo estimate of `P_0(X_n in box)`.
pub fn exit_probability(
    env: &Environment,
    n: u64,
    target: &ScaledBox,
    replicas: u64,
    seed: u64,
) -> Result<Estimate> {
    if replicas == 0 {
        return Err(Error::InvalidParameter("need at least one replica".into()));
    }
    if target.dim() != env.dim() {
        return Err(Error::DimensionMismatch {
            expected: env.dim(),
            got: target.dim(),
        });
    }
    let origin = LatticePoint::origin(env.dim());
    if n as i64 > env.radius() {
        return Err(Error::HorizonTooLarge {
            horizon: n,
            radius: env.radius(),
        });
    }
    let hits: u64 = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let traj = simulate(env, &origin, n, replica_seed(seed, r))
                .expect("horizon checked above");
            u64::from(
                target
                    .contains(traj.position(n as usize))
                    .expect("dimensions agree"),
            )
        })
        .sum();
    let (ci_low, ci_high) = wilson_interval(hits, replicas);
    Ok(Estimate {
        estimate: hits as f64 / replicas as f64,
        ci_low,
        ci_high,
        hits,
        replicas,
        seed,
    })
}

/// Exact and simulated probability that the walk started at the trap's `y`
/// alternates on `{y, z}` for `n` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SojournReport {
    /// Closed form from the stored conductances:
    /// `p_y^ceil(n/2) * p_z^floor(n/2)` with `p_y = w(y,z)/pi(y)`.
    pub exact: f64,
    pub mc: Estimate,
    pub stay_y: f64,
    pub stay_z: f64,
    pub n: u64,
}

/// Exact probability that the walk started at the trap's `y` alternates on
/// `{y, z}` for `n` steps, from the stored conductances: departures from
/// `y` happen at the even step indices, from `z` at the odd ones.
pub fn sojourn_exact(env: &Environment, trap: &TrapPattern, n: u64) -> Result<f64> {
    for bond in trap.all_bonds() {
        env.conductance(&bond).map_err(|_| {
            Error::TrapMismatch(format!("bond {bond} of the pattern is outside storage"))
        })?;
    }
    if trap.y.sup_norm() >= env.radius() || trap.z.sup_norm() >= env.radius() {
        return Err(Error::TrapMismatch("trap touches the storage face".into()));
    }
    let w_yz = env.conductance(&trap.strong_bond)?;
    let stay_y = w_yz / pi(env, &trap.y)?;
    let stay_z = w_yz / pi(env, &trap.z)?;
    Ok(stay_y.powi(n.div_ceil(2) as i32) * stay_z.powi((n / 2) as i32))
}

/// Runs the sojourn experiment on a trap pattern found or planted in `env`.
pub fn trap_sojourn(
    env: &Environment,
    trap: &TrapPattern,
    n: u64,
    replicas: u64,
    seed: u64,
) -> Result<SojournReport> {
    if replicas == 0 {
        return Err(Error::InvalidParameter("need at least one replica".into()));
    }
    let exact = sojourn_exact(env, trap, n)?;
    let y = trap.y.clone();
    let z = trap.z.clone();
    let w_yz = env.conductance(&trap.strong_bond)?;
    let stay_y = w_yz / pi(env, &y)?;
    let stay_z = w_yz / pi(env, &z)?;

    let hits: u64 = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(replica_seed(seed, r));
            let mut at = y.clone();
            for step_index in 0..n {
                at = sample_step(env, &at, &mut rng);
                let expected = if step_index % 2 == 0 { &z } else { &y };
                if &at != expected {
                    return 0u64;
                }
            }
            1u64
        })
        .sum();
    let (ci_low, ci_high) = wilson_interval(hits, replicas);
    Ok(SojournReport {
        exact,
        mc: Estimate {
            estimate: hits as f64 / replicas as f64,
            ci_low,
            ci_high,
            hits,
            replicas,
            seed,
        },
        stay_y,
        stay_z,
        n,
    })
}

/// Walks until the boundary of `B_n` is hit, up to `max_steps`.
///
/// Returns the trajectory truncated at the hit (or at `max_steps` when the
/// boundary was not reached, flagged by the caller via `hitting_times`).
pub fn simulate_until_boundary(
    env: &Environment,
    n: u32,
    max_steps: u64,
    seed: u64,
) -> Result<Trajectory> {
    let origin = LatticePoint::origin(env.dim());
    let goal = 3 * i64::from(n);
    if goal >= env.radius() {
        return Err(Error::HorizonTooLarge {
            horizon: goal as u64,
            radius: env.radius(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut at = origin.clone();
    let mut steps = Vec::new();
    for _ in 0..max_steps {
        if at.sup_norm() >= goal {
            break;
        }
        at = sample_step(env, &at, &mut rng);
        steps.push(at.clone());
    }
    Ok(Trajectory {
        start: origin,
        steps,
        seed,
    })
}
