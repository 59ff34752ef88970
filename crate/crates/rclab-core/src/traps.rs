//! Trap patterns: the bond collection around a candidate site, detection of
//! the trap configuration, its closed-form probability under the power-tail
//! law, exhaustive scans, and the boundary-hit independence experiment.
//!
//! A trap at `x` consists of a weak entry bond `[x, y]` with conductance in
//! `(N^-a / 2, N^-a]`, a strong bond `[y, z]` with conductance at least
//! `xi`, and all remaining bonds out of `y` or `z` at most `N^-a`: a walk
//! crossing into `y` is then held on `{y, z}` for about `N^a` steps.

use crate::environment::Environment;
use crate::error::Error;
use crate::lattice::{direction_and_sign, Bond, LatticePoint, Window};
use crate::rng;
use crate::stats::{bonferroni_z, chi2_homogeneity_pvalue};
use crate::walker::{hitting_times, simulate_until_boundary};
use crate::Result;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// The directed geometry of a candidate trap: `y = x + eps * e_i0` and
/// `z = x + 2 eps * e_i0`, plus the classification of the `4d - 1` bonds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapPattern {
    pub x: LatticePoint,
    pub y: LatticePoint,
    pub z: LatticePoint,
    /// The entry bond `[x, y]`.
    pub weak_bond: Bond,
    /// The holding bond `[y, z]`.
    pub strong_bond: Bond,
    /// The `4d - 3` remaining bonds out of `y` or `z`, including the
    /// forward bond `[z, z + eps * e_i0]`.
    pub other_bonds: Vec<Bond>,
}

impl TrapPattern {
    /// All `4d - 1` bonds of the collection.
    pub fn all_bonds(&self) -> Vec<Bond> {
        let mut bonds = Vec::with_capacity(2 + self.other_bonds.len());
        bonds.push(self.weak_bond.clone());
        bonds.push(self.strong_bond.clone());
        bonds.extend(self.other_bonds.iter().cloned());
        bonds
    }
}

/// The bond collection around `x`, placed along the dominant axis of `x`
/// pointing away from the origin.
pub fn collection_c(x: &LatticePoint) -> TrapPattern {
    let d = x.dim();
    let (i0, eps) = direction_and_sign(x);
    let y = x.offset(i0, eps.into());
    let z = x.offset(i0, 2 * i64::from(eps));
    let weak_bond = Bond::new(x.clone(), y.clone()).expect("x and y are neighbors");
    let strong_bond = Bond::new(y.clone(), z.clone()).expect("y and z are neighbors");
    let mut other_bonds = Vec::with_capacity(4 * d - 3);
    for i in 0..d {
        if i == i0 {
            continue;
        }
        for delta in [-1i64, 1] {
            other_bonds.push(Bond::new(y.clone(), y.offset(i, delta)).unwrap());
        }
    }
    for i in 0..d {
        if i == i0 {
            continue;
        }
        for delta in [-1i64, 1] {
            other_bonds.push(Bond::new(z.clone(), z.offset(i, delta)).unwrap());
        }
    }
    other_bonds.push(Bond::new(z.clone(), z.offset(i0, eps.into())).unwrap());
    TrapPattern {
        x: x.clone(),
        y,
        z,
        weak_bond,
        strong_bond,
        other_bonds,
    }
}

/// The exponent `a = (1 - eps) / ((4d - 2) gamma)` tying the weak-bond
/// scale to the tail exponent.
pub fn alpha_exponent(d: usize, gamma: f64, eps: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter("gamma must be positive".into()));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(
            "eps must lie strictly between 0 and 1".into(),
        ));
    }
    Ok((1.0 - eps) / ((4 * d - 2) as f64 * gamma))
}

/// Tests the trap conditions at `x` and returns the verdict with the
/// inspected pattern.
pub fn is_trap(
    env: &Environment,
    x: &LatticePoint,
    n: u64,
    alpha: f64,
    xi: f64,
) -> Result<(bool, TrapPattern)> {
    let pattern = collection_c(x);
    let scale = (n as f64).powf(-alpha);
    let w_xy = env.conductance(&pattern.weak_bond)?;
    let w_yz = env.conductance(&pattern.strong_bond)?;
    let mut ok = w_xy > 0.5 * scale && w_xy <= scale && w_yz >= xi;
    for bond in &pattern.other_bonds {
        // query every bond so storage violations surface even on misses
        ok &= env.conductance(bond)? <= scale;
    }
    Ok((ok, pattern))
}

/// Overwrites the collection at `x` so the trap conditions hold: the weak
/// bond at three quarters of the scale, the strong bond midway between `xi`
/// and 1, the rest at 0.4 of the scale.
pub fn plant_trap(
    env: &Environment,
    x: &LatticePoint,
    n: u64,
    alpha: f64,
    xi: f64,
) -> Result<Environment> {
    let pattern = collection_c(x);
    let scale = (n as f64).powf(-alpha);
    let mut overrides = vec![
        (pattern.weak_bond.clone(), 0.75 * scale),
        (pattern.strong_bond.clone(), (1.0 + xi) / 2.0),
    ];
    for bond in &pattern.other_bonds {
        overrides.push((bond.clone(), 0.4 * scale));
    }
    env.with_overrides(&overrides)
}

/// Probability that one fresh collection forms a trap under the exact
/// power-tail law with the derived exponent:
/// `(1 - 2^-gamma) (1 - xi^gamma) N^-(1 - eps)`.
pub fn q_n_closed_form(d: usize, gamma: f64, xi: f64, eps: f64, n: u64) -> Result<f64> {
    alpha_exponent(d, gamma, eps)?;
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::InvalidParameter(
            "xi must lie strictly between 0 and 1".into(),
        ));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("N must be >= 1".into()));
    }
    let nf = n as f64;
    Ok((1.0 - 2f64.powf(-gamma)) * (1.0 - xi.powf(gamma)) * nf.powf(eps - 1.0))
}

/// The same probability for an arbitrary weak-bond exponent `alpha`:
/// the product of the three condition probabilities under the power CDF.
pub fn q_n_with_alpha(d: usize, gamma: f64, xi: f64, alpha: f64, n: u64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter("alpha must be positive".into()));
    }
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::InvalidParameter(
            "xi must lie strictly between 0 and 1".into(),
        ));
    }
    let scale = (n as f64).powf(-alpha);
    let p_weak = scale.powf(gamma) - (0.5 * scale).powf(gamma);
    let p_strong = 1.0 - xi.powf(gamma);
    let p_other = scale.powf(gamma * (4 * d - 3) as f64);
    Ok(p_weak * p_strong * p_other)
}

/// Exhaustive trap scan over a set of candidate sites.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrapScanReport {
    pub n: u64,
    pub alpha: f64,
    pub xi: f64,
    pub hits: Vec<(LatticePoint, TrapPattern)>,
    pub sites_scanned: u64,
}

impl TrapScanReport {
    /// CSV rows `site_coords,omega_xy,omega_yz,max_other`.
    pub fn write_csv<W: Write>(&self, env: &Environment, mut w: W) -> Result<()> {
        writeln!(w, "site_coords,omega_xy,omega_yz,max_other")?;
        for (site, pattern) in &self.hits {
            let w_xy = env.conductance(&pattern.weak_bond)?;
            let w_yz = env.conductance(&pattern.strong_bond)?;
            let max_other = pattern
                .other_bonds
                .iter()
                .map(|b| env.conductance(b).unwrap_or(f64::NAN))
                .fold(f64::NEG_INFINITY, f64::max);
            writeln!(w, "{site},{w_xy:.16e},{w_yz:.16e},{max_other:.16e}")?;
        }
        Ok(())
    }
}

/// Scans every site of `region` for the trap configuration.
pub fn scan_traps(
    env: &Environment,
    n: u64,
    alpha: f64,
    xi: f64,
    region: &Window,
) -> Result<TrapScanReport> {
    if region.dim() != env.dim() {
        return Err(Error::DimensionMismatch {
            expected: env.dim(),
            got: region.dim(),
        });
    }
    let sites = region.checked_point_count()?;
    let hits: Vec<(LatticePoint, TrapPattern)> = (0..sites)
        .into_par_iter()
        .map(|idx| {
            let site = region.point_at(idx);
            let (found, pattern) = is_trap(env, &site, n, alpha, xi)?;
            Ok(found.then_some((site, pattern)))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(TrapScanReport {
        n,
        alpha,
        xi,
        hits,
        sites_scanned: sites as u64,
    })
}

/// Rank of the first boundary hit whose collection forms a trap, or `None`
/// for the infinite branch.
pub fn first_trap_rank(
    env: &Environment,
    report: &crate::walker::HittingReport,
    n: u64,
    alpha: f64,
    xi: f64,
) -> Result<Option<u32>> {
    for rec in &report.records {
        if u64::from(rec.n_scale) >= n {
            break;
        }
        let (found, _) = is_trap(env, &rec.location, n, alpha, xi)?;
        if found {
            return Ok(Some(rec.n_scale));
        }
    }
    Ok(None)
}

/// One marginal or joint frequency compared against its target.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrequencyCheck {
    pub label: String,
    pub observed: f64,
    pub expected: f64,
    /// Half-width of the acceptance band (already Bonferroni-adjusted where
    /// applicable).
    pub band: f64,
    pub within: bool,
}

/// Results of the boundary-hit independence experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaReport {
    pub d: usize,
    pub gamma: f64,
    pub xi: f64,
    pub eps: f64,
    pub n: u64,
    pub alpha: f64,
    pub q_theory: f64,
    pub replicas: u64,
    pub truncated_replicas: u64,
    /// Per-rank trap frequency against the closed form.
    pub marginals: Vec<FrequencyCheck>,
    /// Pairwise joint frequencies against the product of the empirical
    /// marginals.
    pub pairwise: Vec<FrequencyCheck>,
    /// Triple joint frequencies against the product of the empirical
    /// marginals.
    pub triples: Vec<FrequencyCheck>,
    /// Frequency of no trap at any rank against `(1 - q)^N`.
    pub none_check: FrequencyCheck,
    /// The exponential union bound `exp(-q N)` that dominates `(1 - q)^N`;
    /// context for how fast the no-trap event dies off in N.
    pub exp_bound_context: f64,
    /// Homogeneity p-value of the per-rank counts (small p flags rank
    /// dependence).
    pub homogeneity_p: f64,
    pub all_within: bool,
}

/// Runs the independence experiment: each replica samples a fresh field,
/// walks from the origin to the boundary of `B_(N-1)`, and records which of
/// the `N` boundary-hit collections form traps. Under the i.i.d. field the
/// indicators are independent with common probability `q_N`.
pub fn lambda_experiment(
    d: usize,
    gamma: f64,
    xi: f64,
    eps: f64,
    n: u64,
    replicas: u64,
    seed: u64,
) -> Result<LambdaReport> {
    if n < 2 || n > 16 {
        return Err(Error::InvalidParameter(
            "the experiment supports 2 <= N <= 16".into(),
        ));
    }
    if replicas == 0 {
        return Err(Error::InvalidParameter("need at least one replica".into()));
    }
    let alpha = alpha_exponent(d, gamma, eps)?;
    let q = q_n_closed_form(d, gamma, xi, eps, n)?;
    let radius = 3 * n as i64 + 1;
    // generous cap: two thousand times the squared boundary distance
    let max_steps = 2_000 * (3 * n) * (3 * n);

    // pattern histogram over the 2^N trap-indicator masks
    let patterns: Vec<u64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let env_seed = rng::replica_seed(seed, 2 * r);
            let walk_seed = rng::replica_seed(seed, 2 * r + 1);
            let env = crate::environment::sample_environment(
                d,
                radius,
                crate::environment::ConductanceLaw::PolyTail { gamma },
                env_seed,
            )
            .expect("parameters validated");
            let traj = simulate_until_boundary(&env, (n - 1) as u32, max_steps, walk_seed)
                .expect("boundary inside storage");
            let hits = hitting_times(&traj, (n - 1) as u32);
            if hits.truncated {
                return u64::MAX; // sentinel: replica discarded
            }
            let mut mask = 0u64;
            for rec in &hits.records {
                let (found, _) = is_trap(&env, &rec.location, n, alpha, xi)
                    .expect("collection bonds inside storage");
                if found {
                    mask |= 1 << rec.n_scale;
                }
            }
            mask
        })
        .collect();

    let mut histogram = vec![0u64; 1 << n];
    let mut truncated = 0u64;
    for mask in patterns {
        if mask == u64::MAX {
            truncated += 1;
        } else {
            histogram[mask as usize] += 1;
        }
    }
    let effective = replicas - truncated;
    if effective == 0 {
        return Err(Error::InvalidParameter(
            "every replica was truncated before the outer boundary".into(),
        ));
    }
    let total = effective as f64;
    let freq_of = |bits: u64| -> f64 {
        histogram
            .iter()
            .enumerate()
            .filter(|(mask, _)| (*mask as u64) & bits == bits)
            .map(|(_, &c)| c)
            .sum::<u64>() as f64
            / total
    };

    let ranks = n as usize;
    let marginals_freq: Vec<f64> = (0..ranks).map(|k| freq_of(1 << k)).collect();
    let marginal_counts: Vec<u64> = marginals_freq
        .iter()
        .map(|f| (f * total).round() as u64)
        .collect();

    // central moment of an influence function over the histogram
    let variance_of = |f: &dyn Fn(u64) -> f64| -> f64 {
        let mean: f64 = histogram
            .iter()
            .enumerate()
            .map(|(mask, &c)| c as f64 * f(mask as u64))
            .sum::<f64>()
            / total;
        histogram
            .iter()
            .enumerate()
            .map(|(mask, &c)| {
                let v = f(mask as u64) - mean;
                c as f64 * v * v
            })
            .sum::<f64>()
            / total
    };

    let z_marg = bonferroni_z(3.0, ranks);
    let mut marginals = Vec::with_capacity(ranks);
    for (k, &p_k) in marginals_freq.iter().enumerate() {
        let sigma = (q * (1.0 - q) / total).sqrt();
        let band = z_marg * sigma;
        marginals.push(FrequencyCheck {
            label: format!("rank {k}"),
            observed: p_k,
            expected: q,
            band,
            within: (p_k - q).abs() <= band,
        });
    }

    let pair_count = ranks * (ranks - 1) / 2;
    let z_pair = bonferroni_z(3.0, pair_count.max(1));
    let mut pairwise = Vec::with_capacity(pair_count);
    for j in 0..ranks {
        for k in (j + 1)..ranks {
            let p_jk = freq_of((1 << j) | (1 << k));
            let (pj, pk) = (marginals_freq[j], marginals_freq[k]);
            let t = p_jk - pj * pk;
            // influence function of the covariance estimator
            let infl = move |mask: u64| -> f64 {
                let ij = f64::from(mask >> j & 1 == 1);
                let ik = f64::from(mask >> k & 1 == 1);
                ij * ik - pk * ij - pj * ik
            };
            let sigma = (variance_of(&infl) / total).sqrt();
            let band = z_pair * sigma.max(1.0 / total);
            pairwise.push(FrequencyCheck {
                label: format!("ranks ({j}, {k})"),
                observed: p_jk,
                expected: pj * pk,
                band,
                within: t.abs() <= band,
            });
        }
    }

    let triple_count = ranks * (ranks - 1) * (ranks - 2) / 6;
    let z_triple = bonferroni_z(3.0, triple_count.max(1));
    let mut triples = Vec::with_capacity(triple_count);
    for j in 0..ranks {
        for k in (j + 1)..ranks {
            for l in (k + 1)..ranks {
                let p_jkl = freq_of((1 << j) | (1 << k) | (1 << l));
                let (pj, pk, pl) = (marginals_freq[j], marginals_freq[k], marginals_freq[l]);
                let t = p_jkl - pj * pk * pl;
                let infl = move |mask: u64| -> f64 {
                    let ij = f64::from(mask >> j & 1 == 1);
                    let ik = f64::from(mask >> k & 1 == 1);
                    let il = f64::from(mask >> l & 1 == 1);
                    ij * ik * il - pk * pl * ij - pj * pl * ik - pj * pk * il
                };
                let sigma = (variance_of(&infl) / total).sqrt();
                let band = z_triple * sigma.max(1.0 / total);
                triples.push(FrequencyCheck {
                    label: format!("ranks ({j}, {k}, {l})"),
                    observed: p_jkl,
                    expected: pj * pk * pl,
                    band,
                    within: t.abs() <= band,
                });
            }
        }
    }

    let none_freq = histogram[0] as f64 / total;
    let none_expected = (1.0 - q).powi(n as i32);
    let exp_bound_context = (-q * n as f64).exp();
    let none_sigma = (none_expected * (1.0 - none_expected) / total).sqrt();
    let none_check = FrequencyCheck {
        label: "no trap at any rank".into(),
        observed: none_freq,
        expected: none_expected,
        band: 3.0 * none_sigma,
        within: (none_freq - none_expected).abs() <= 3.0 * none_sigma,
    };

    let homogeneity_p =
        chi2_homogeneity_pvalue(&marginal_counts, &vec![effective; ranks]);

    let all_within = marginals.iter().all(|c| c.within)
        && pairwise.iter().all(|c| c.within)
        && triples.iter().all(|c| c.within)
        && none_check.within;

    Ok(LambdaReport {
        d,
        gamma,
        xi,
        eps,
        n,
        alpha,
        q_theory: q,
        replicas,
        truncated_replicas: truncated,
        marginals,
        pairwise,
        triples,
        none_check,
        exp_bound_context,
        homogeneity_p,
        all_within,
    })
}
