//! Exponent fitting and comparison against the theoretical decay windows,
//! plus the end-to-end replay of the trapping lower-bound chain on exact
//! kernels.

use crate::environment::{sample_environment, ConductanceLaw, Environment};
use crate::error::Error;
use crate::kernel::{heat_kernel, pi, return_series, ReturnSeries};
use crate::lattice::LatticePoint;
use crate::rng::replica_seed;
use crate::stats::{least_squares, wilson_interval};
use crate::traps::{alpha_exponent, first_trap_rank, is_trap};
use crate::walker::{hitting_times, simulate_until_boundary, sojourn_exact, Estimate};
use crate::Result;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// A fitted log-log slope with a bootstrap confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_min: u64,
    pub n_max: u64,
    pub points_used: usize,
    pub residual_rms: f64,
}

/// Least-squares slope of `log value` against `log n` over the grid points
/// in `[n_min, n_max]`, with a nonparametric bootstrap interval over the
/// points.
pub fn fit_exponent(
    series: &ReturnSeries,
    n_min: u64,
    n_max: u64,
    bootstrap_seed: u64,
) -> Result<DecayFit> {
    let selected: Vec<(f64, f64)> = series
        .points
        .iter()
        .filter(|p| p.n >= n_min && p.n <= n_max)
        .map(|p| {
            if p.value <= p.err_bound {
                Err(Error::TruncationDominated)
            } else {
                Ok(((p.n as f64).ln(), p.value.ln()))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    if selected.len() < 4 {
        return Err(Error::InsufficientPoints {
            needed: 4,
            got: selected.len(),
        });
    }
    let x: Vec<f64> = selected.iter().map(|&(a, _)| a).collect();
    let y: Vec<f64> = selected.iter().map(|&(_, b)| b).collect();
    let (slope, intercept) = least_squares(&x, &y);
    let residual_rms = (x
        .iter()
        .zip(&y)
        .map(|(&xi, &yi)| {
            let r = yi - slope * xi - intercept;
            r * r
        })
        .sum::<f64>()
        / x.len() as f64)
        .sqrt();

    // percentile bootstrap over grid points
    let mut rng = ChaCha8Rng::seed_from_u64(bootstrap_seed);
    let b = 1000;
    let mut slopes = Vec::with_capacity(b);
    while slopes.len() < b {
        let mut bx = Vec::with_capacity(x.len());
        let mut by = Vec::with_capacity(x.len());
        for _ in 0..x.len() {
            let k = rng.gen_range(0..x.len());
            bx.push(x[k]);
            by.push(y[k]);
        }
        // degenerate resamples (all one point) carry no slope information
        if bx.iter().all(|&v| v == bx[0]) {
            continue;
        }
        slopes.push(least_squares(&bx, &by).0);
    }
    slopes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ci_low = slopes[(b as f64 * 0.025) as usize].min(slope);
    let ci_high = slopes[(b as f64 * 0.975) as usize].max(slope);

    Ok(DecayFit {
        slope,
        intercept,
        ci_low,
        ci_high,
        n_min,
        n_max,
        points_used: x.len(),
        residual_rms,
    })
}

/// Exact rational value together with its nearest float.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactValue {
    pub value: f64,
    /// The full-precision rational as `p/q`.
    pub exact: String,
}

fn exact(r: BigRational) -> ExactValue {
    ExactValue {
        value: r.to_f64().unwrap_or(f64::NAN),
        exact: r.to_string(),
    }
}

fn rational(x: f64, name: &str) -> Result<BigRational> {
    BigRational::from_float(x)
        .ok_or_else(|| Error::InvalidParameter(format!("{name} = {x} is not finite")))
}

fn int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from_i64(n).unwrap())
}

/// `-2 (1 + d (2d - 1) gamma)`, the small-gamma end of the exponent
/// window, evaluated in exact rational arithmetic.
pub fn anomalous_window(d: usize, gamma: f64) -> Result<(ExactValue, ExactValue)> {
    let g = rational(gamma, "gamma")?;
    let di = d as i64;
    let lower = -int(2) * (int(1) + int(di) * int(2 * di - 1) * g);
    Ok((exact(lower), exact(int(-2))))
}

/// `d (4d - 2) gamma / (1 - eps)`: the correction to the exponent 2 in the
/// trapping lower bound.
pub fn delta_small_gamma(d: usize, gamma: f64, eps: f64) -> Result<ExactValue> {
    let g = rational(gamma, "gamma")?;
    let e = rational(eps, "eps")?;
    if eps <= 0.0 || eps >= 1.0 {
        return Err(Error::InvalidParameter(
            "eps must lie strictly between 0 and 1".into(),
        ));
    }
    let di = d as i64;
    Ok(exact(int(di) * int(4 * di - 2) * g / (int(1) - e)))
}

/// `4 d^2 / gamma`: the correction to the exponent d/2 in the evolving-set
/// upper bound.
pub fn delta_large_gamma(d: usize, gamma: f64) -> Result<ExactValue> {
    let g = rational(gamma, "gamma")?;
    if gamma <= 0.0 {
        return Err(Error::InvalidParameter("gamma must be positive".into()));
    }
    let di = d as i64;
    Ok(exact(int(4 * di * di) / g))
}

/// `-d/2 + 4 d^2 / gamma`: the large-gamma decay target.
pub fn standard_target(d: usize, gamma: f64) -> Result<ExactValue> {
    let g = rational(gamma, "gamma")?;
    if gamma <= 0.0 {
        return Err(Error::InvalidParameter("gamma must be positive".into()));
    }
    let di = d as i64;
    Ok(exact(-int(di) / int(2) + int(4 * di * di) / g))
}

/// The dimension-dependent universal upper-bound exponent: `-d/2` in
/// d = 2, 3 and `-2` from d = 4 on (with a logarithmic factor at d = 4).
pub fn universal_exponent(d: usize) -> (ExactValue, bool) {
    let di = d as i64;
    if d <= 3 {
        (exact(-int(di) / int(2)), false)
    } else {
        (exact(int(-2)), d == 4)
    }
}

/// Position of a fitted slope relative to a target interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Below,
    Inside,
    Above,
    /// The confidence interval crosses an endpoint.
    Straddles,
}

fn verdict(ci: (f64, f64), lo: f64, hi: f64) -> Verdict {
    if ci.1 < lo {
        Verdict::Below
    } else if ci.0 > hi {
        Verdict::Above
    } else if lo == hi || (ci.0 >= lo && ci.1 <= hi) {
        // a point target counts as Inside when the interval covers it
        Verdict::Inside
    } else {
        Verdict::Straddles
    }
}

/// Numeric exponent windows and the fitted slope's position in each.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsReport {
    pub d: usize,
    pub gamma: f64,
    pub eps: f64,
    pub mu: f64,
    pub fit: DecayFit,
    pub window_low: ExactValue,
    pub window_high: ExactValue,
    pub universal: ExactValue,
    /// The d = 4 case carries an extra logarithmic factor.
    pub universal_log_factor: bool,
    pub standard: ExactValue,
    pub delta_small_gamma: ExactValue,
    pub delta_large_gamma: ExactValue,
    pub window_verdict: Verdict,
    pub universal_verdict: Verdict,
    pub standard_verdict: Verdict,
    /// The asymptotic standard-decay slope is out of reach of exact kernels
    /// at the dimensions where the asymptotic regime sets in; the report
    /// carries the targets evaluated exactly instead of pretending to fit
    /// them.
    pub note: String,
    /// Set when `(gamma, mu)` leave the regime the standard-decay target
    /// needs; the windows are still evaluated.
    pub regime_warning: Option<String>,
}

/// Assembles the numeric windows for the fitted slope.
pub fn bounds_report(
    fit: &DecayFit,
    d: usize,
    gamma: f64,
    eps: f64,
    mu: f64,
) -> Result<BoundsReport> {
    let (window_low, window_high) = anomalous_window(d, gamma)?;
    let (universal, universal_log_factor) = universal_exponent(d);
    let standard = standard_target(d, gamma)?;
    let ds = delta_small_gamma(d, gamma, eps)?;
    let dl = delta_large_gamma(d, gamma)?;
    let ci = (fit.ci_low, fit.ci_high);
    let window_verdict = verdict(ci, window_low.value, window_high.value);
    let universal_verdict = verdict(ci, universal.value, universal.value);
    let standard_verdict = verdict(ci, standard.value, standard.value);
    Ok(BoundsReport {
        d,
        gamma,
        eps,
        mu,
        fit: fit.clone(),
        window_low,
        window_high,
        universal,
        universal_log_factor,
        standard,
        delta_small_gamma: ds,
        delta_large_gamma: dl,
        window_verdict,
        universal_verdict,
        standard_verdict,
        note: format!(
            "the d >= 5 asymptotic slopes are not desk-reproducible \
             (kernel supports near 1e9 sites at informative n); targets are \
             evaluated exactly and the d = {d} fit is compared against them"
        ),
        regime_warning: crate::isoperimetry::regime_warning(d, gamma, mu),
    })
}

/// One grid point of an environment-averaged return series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealedPoint {
    pub n: u64,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnealedSeries {
    pub d: usize,
    pub law: String,
    pub replicas: u64,
    pub seed: u64,
    pub points: Vec<AnnealedPoint>,
}

/// Averages the even-step return probability over independently sampled
/// fields. The discrete-time average is reported as an indicative
/// comparison only: the continuous-time anomaly rests on waiting times the
/// jump chain does not have.
pub fn annealed_return(
    d: usize,
    law: ConductanceLaw,
    n_grid: &[u64],
    replicas: u64,
    seed: u64,
    tau: f64,
) -> Result<AnnealedSeries> {
    if replicas == 0 {
        return Err(Error::InvalidParameter("need at least one replica".into()));
    }
    let n_max = *n_grid
        .iter()
        .max()
        .ok_or_else(|| Error::InvalidParameter("empty n grid".into()))?;
    let radius = 2 * n_max as i64 + 2;
    let all: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let env = sample_environment(d, radius, law, replica_seed(seed, r))?;
            let series = return_series(&env, n_grid, tau)?;
            Ok(series.points.iter().map(|p| p.value).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let m = all[0].len();
    let mut points = Vec::with_capacity(m);
    let mut grid: Vec<u64> = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    for (j, &n) in grid.iter().enumerate() {
        let values: Vec<f64> = all.iter().map(|v| v[j]).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (values.len() - 1) as f64)
                .sqrt()
        } else {
            0.0
        };
        let half = 1.959_963_984_540_054 * sd / (values.len() as f64).sqrt();
        points.push(AnnealedPoint {
            n,
            mean,
            ci_low: mean - half,
            ci_high: mean + half,
            sd,
        });
    }
    Ok(AnnealedSeries {
        d,
        law: law.to_string(),
        replicas,
        seed,
        points,
    })
}

/// Bound checks at one trap site.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrapSiteCheck {
    pub site: LatticePoint,
    pub rank: u32,
    /// `w(x,y) / pi(x)` against `1 / (4 d N^alpha)`.
    pub crossing: f64,
    pub crossing_bound: f64,
    pub crossing_ok: bool,
    /// Exact alternation probability against
    /// `(xi / (xi + (2d-1) N^-alpha))^n`.
    pub sojourn_exact: f64,
    pub sojourn_bound: f64,
    pub sojourn_ok: bool,
}

/// Full replay of the trapping lower-bound chain on one environment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    pub d: usize,
    pub gamma: f64,
    pub xi: f64,
    pub eps: f64,
    pub n_scale: u64,
    pub alpha: f64,
    /// Time horizon `n = floor(N^alpha)`.
    pub n: u64,
    pub q_n: f64,
    /// `(1 - q_N)^N`, the no-trap probability over the first N hits.
    pub no_trap_context: f64,
    pub delta: ExactValue,
    /// Exact kernel quantities.
    pub p2n: f64,
    pub p2n_err: f64,
    pub pi0: f64,
    pub box_radius: i64,
    pub box_mass: f64,
    pub pi_box: f64,
    /// `(P^{2n}(0,0) + err) / pi(0)` against `box_mass^2 / pi(box)`.
    pub reversibility_lhs: f64,
    pub reversibility_rhs: f64,
    pub reversibility_ok: bool,
    /// Walk statistics over the replicas.
    pub replicas: u64,
    pub truncated_replicas: u64,
    pub rank_histogram: Vec<(u32, u64)>,
    pub reached: Estimate,
    pub trap_checks: Vec<TrapSiteCheck>,
    /// `P(D_N <= N-1) * min crossing * min sojourn`, zero when no trap was
    /// seen; a Monte Carlo lower bound for the box mass.
    pub assembled_lower_bound: f64,
    pub assembled_consistent: bool,
}

/// Parameters of the pipeline replay.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub d: usize,
    pub gamma: f64,
    pub xi: f64,
    pub eps: f64,
    pub n_scale: u64,
    pub seed: u64,
    pub walk_replicas: u64,
    pub tau: f64,
    /// Weak-bond exponent; `None` derives it from `(gamma, eps)`. The scan
    /// and the bound checks are well defined for any positive exponent, and
    /// an override decouples the trap scale from the walkability of the
    /// sampled field.
    pub alpha_override: Option<f64>,
    /// Step cap per walk replica; replicas that do not reach the outer
    /// boundary in time are flagged as truncated, which is the expected
    /// outcome at small gamma where natural traps hold the walk.
    pub walk_step_cap: u64,
}

impl PipelineConfig {
    pub fn alpha(&self) -> Result<f64> {
        match self.alpha_override {
            Some(a) if a > 0.0 => Ok(a),
            Some(a) => Err(Error::InvalidParameter(format!(
                "alpha override {a} must be positive"
            ))),
            None => alpha_exponent(self.d, self.gamma, self.eps),
        }
    }
}

/// Smallest storage radius for the pipeline at these parameters.
pub fn pipeline_radius(n_scale: u64, horizon: u64) -> i64 {
    (3 * n_scale as i64 + 1).max(2 * horizon as i64 + 2)
}

/// Horizon `n = floor(N^alpha)` for the pipeline.
pub fn pipeline_horizon(n_scale: u64, alpha: f64) -> u64 {
    ((n_scale as f64).powf(alpha).floor() as u64).max(1)
}

/// Samples a fresh field and replays the lower-bound chain on it.
pub fn anomalous_pipeline(config: &PipelineConfig) -> Result<PipelineReport> {
    let alpha = config.alpha()?;
    let horizon = pipeline_horizon(config.n_scale, alpha);
    let env = sample_environment(
        config.d,
        pipeline_radius(config.n_scale, horizon),
        ConductanceLaw::PolyTail {
            gamma: config.gamma,
        },
        config.seed,
    )?;
    anomalous_pipeline_on(&env, config)
}

/// Replays the lower-bound chain on a given environment (typically one with
/// a planted trap).
pub fn anomalous_pipeline_on(env: &Environment, config: &PipelineConfig) -> Result<PipelineReport> {
    let d = config.d;
    let n_big = config.n_scale;
    let alpha = config.alpha()?;
    let n = pipeline_horizon(n_big, alpha);
    let q_n = crate::traps::q_n_with_alpha(d, config.gamma, config.xi, alpha, n_big)?;
    let origin = LatticePoint::origin(d);

    // exact kernel side
    let half = heat_kernel(env, n, &origin, config.tau)?;
    let full = heat_kernel(env, 2 * n, &origin, config.tau)?;
    let pi0 = pi(env, &origin)?;
    let box_radius = (3.0 * (n as f64).powf(1.0 / alpha)).floor() as i64;
    let box_radius = box_radius.min(env.radius() - 1);
    let box_mass = half.mass_where(|p| p.sup_norm() <= box_radius);
    let pi_box = pi_over_box(env, box_radius)?;
    let p2n = full.mass_at(&origin);
    let lhs = (p2n + full.lost_mass_bound()) / pi0;
    let rhs = box_mass * box_mass / pi_box;

    // walk side
    let results: Vec<(Option<(u32, LatticePoint)>, bool)> = (0..config.walk_replicas)
        .into_par_iter()
        .map(|r| {
            let walk_seed = replica_seed(config.seed ^ 0x77a1_13e5, r);
            let traj = simulate_until_boundary(
                env,
                (n_big - 1) as u32,
                config.walk_step_cap,
                walk_seed,
            )
            .expect("boundary inside storage");
            let hits = hitting_times(&traj, (n_big - 1) as u32);
            if hits.truncated {
                return (None, true);
            }
            let rank = first_trap_rank(env, &hits, n_big, alpha, config.xi)
                .expect("collections inside storage");
            match rank {
                Some(k) => {
                    let location = hits
                        .records
                        .iter()
                        .find(|rec| rec.n_scale == k)
                        .expect("rank comes from the records")
                        .location
                        .clone();
                    (Some((k, location)), false)
                }
                None => (None, false),
            }
        })
        .collect();

    let truncated = results.iter().filter(|(_, t)| *t).count() as u64;
    let effective = config.walk_replicas - truncated;
    let mut rank_counts: std::collections::BTreeMap<u32, u64> = std::collections::BTreeMap::new();
    let mut sites: Vec<(u32, LatticePoint)> = Vec::new();
    let mut hits_count = 0u64;
    for (found, truncated_flag) in &results {
        if *truncated_flag {
            continue;
        }
        if let Some((k, site)) = found {
            hits_count += 1;
            *rank_counts.entry(*k).or_insert(0) += 1;
            if !sites.iter().any(|(_, s)| s == site) {
                sites.push((*k, site.clone()));
            }
        }
    }

    // direct scan: the bound checks must not depend on the walk reaching the
    // boundary, which it cannot do at small gamma
    let scan_region = crate::lattice::Window::new(d, 3 * (n_big as i64 - 1));
    let scan = crate::traps::scan_traps(env, n_big, alpha, config.xi, &scan_region)?;
    for (site, _) in &scan.hits {
        if !sites.iter().any(|(_, s)| s == site) {
            let rank = (site.sup_norm() / 3) as u32; // boundary scale of the site
            sites.push((rank, site.clone()));
        }
    }
    let (ci_low, ci_high) = if effective > 0 {
        wilson_interval(hits_count, effective)
    } else {
        (0.0, 1.0)
    };
    let reached = Estimate {
        estimate: if effective > 0 {
            hits_count as f64 / effective as f64
        } else {
            0.0
        },
        ci_low,
        ci_high,
        hits: hits_count,
        replicas: effective,
        seed: config.seed,
    };

    // bound checks at every distinct trap site seen
    let n_alpha = (n_big as f64).powf(alpha);
    let crossing_bound = 1.0 / (4.0 * d as f64 * n_alpha);
    let sojourn_bound =
        (config.xi / (config.xi + (2.0 * d as f64 - 1.0) * (n_big as f64).powf(-alpha)))
            .powi(n as i32);
    let mut trap_checks = Vec::new();
    for (rank, site) in &sites {
        let (valid, pattern) = is_trap(env, site, n_big, alpha, config.xi)?;
        debug_assert!(valid);
        let w_xy = env.conductance(&pattern.weak_bond)?;
        let crossing = w_xy / pi(env, site)?;
        let sojourn = sojourn_exact(env, &pattern, n)?;
        trap_checks.push(TrapSiteCheck {
            site: site.clone(),
            rank: *rank,
            crossing,
            crossing_bound,
            crossing_ok: crossing >= crossing_bound - 1e-15,
            sojourn_exact: sojourn,
            sojourn_bound,
            sojourn_ok: sojourn >= sojourn_bound - 1e-15,
        });
    }

    let min_crossing = trap_checks
        .iter()
        .map(|t| t.crossing)
        .fold(f64::INFINITY, f64::min);
    let min_sojourn = trap_checks
        .iter()
        .map(|t| t.sojourn_exact)
        .fold(f64::INFINITY, f64::min);
    let assembled = if trap_checks.is_empty() {
        0.0
    } else {
        reached.estimate * min_crossing * min_sojourn
    };
    // the assembled product must not exceed the exact box mass beyond the
    // Monte Carlo slack on the reached-probability factor
    let slack = if trap_checks.is_empty() {
        0.0
    } else {
        (reached.ci_high - reached.estimate) * min_crossing * min_sojourn
    };
    let assembled_consistent = assembled <= box_mass + slack + 1e-12;

    Ok(PipelineReport {
        d,
        gamma: config.gamma,
        xi: config.xi,
        eps: config.eps,
        n_scale: n_big,
        alpha,
        n,
        q_n,
        no_trap_context: (1.0 - q_n).powi(n_big as i32),
        delta: delta_small_gamma(d, config.gamma, config.eps)?,
        p2n,
        p2n_err: full.lost_mass_bound(),
        pi0,
        box_radius,
        box_mass,
        pi_box,
        reversibility_lhs: lhs,
        reversibility_rhs: rhs,
        reversibility_ok: lhs >= rhs - 1e-12,
        replicas: config.walk_replicas,
        truncated_replicas: truncated,
        rank_histogram: rank_counts.into_iter().collect(),
        reached,
        trap_checks,
        assembled_lower_bound: assembled,
        assembled_consistent,
    })
}

fn pi_over_box(env: &Environment, radius: i64) -> Result<f64> {
    let d = env.dim();
    let mut total = 0.0;
    let mut coords = vec![-radius; d];
    loop {
        total += pi(env, &LatticePoint::new(coords.clone()))?;
        let mut k = d;
        loop {
            if k == 0 {
                return Ok(total);
            }
            k -= 1;
            if coords[k] < radius {
                coords[k] += 1;
                for c in coords.iter_mut().skip(k + 1) {
                    *c = -radius;
                }
                break;
            }
        }
    }
}

/// Builds a planted-trap fixture for a pipeline configuration: simulates a
/// probe walk with the seed of walk replica 0, plants the trap at its
/// rank-`k` boundary hit, and returns the modified field with the planted
/// site. The probe prefix is unchanged by the plant because the collection
/// lies outside the box the prefix explores, so replica 0 of the pipeline
/// meets the planted trap at rank `k`.
///
/// Requires a field the walk can actually traverse (moderate gamma); at
/// small gamma natural traps hold the walk and the probe is truncated.
pub fn planted_fixture(config: &PipelineConfig, k: u32) -> Result<(Environment, LatticePoint)> {
    let alpha = config.alpha()?;
    let horizon = pipeline_horizon(config.n_scale, alpha);
    let env = sample_environment(
        config.d,
        pipeline_radius(config.n_scale, horizon),
        ConductanceLaw::PolyTail {
            gamma: config.gamma,
        },
        config.seed,
    )?;
    let walk_seed = replica_seed(config.seed ^ 0x77a1_13e5, 0);
    let traj = simulate_until_boundary(
        &env,
        (config.n_scale - 1) as u32,
        config.walk_step_cap,
        walk_seed,
    )?;
    let hits = hitting_times(&traj, (config.n_scale - 1) as u32);
    if hits.truncated {
        return Err(Error::InvalidParameter(format!(
            "probe walk for seed {} did not reach the boundary in {} steps",
            config.seed, config.walk_step_cap
        )));
    }
    let site = hits
        .records
        .iter()
        .find(|rec| rec.n_scale == k)
        .ok_or_else(|| Error::InvalidParameter(format!("no rank-{k} record")))?
        .location
        .clone();
    let planted = crate::traps::plant_trap(&env, &site, config.n_scale, alpha, config.xi)?;
    Ok((planted, site))
}
