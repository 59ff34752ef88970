//! Isoperimetric machinery on explicit finite chains: the edge measure
//! `Q(S1, S2)`, boundary ratios, the isoperimetric profile over connected
//! subsets, the evolving-set heat-kernel threshold, and the surface/volume
//! bounds for connected subsets of the even sublattice.

use crate::environment::ModifiedEnvironment;
use crate::error::Error;
use crate::lattice::{even_neighbors, LatticePoint};
use crate::Result;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap, HashSet};

/// Row-sum tolerance for stochastic matrices.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Detailed-balance tolerance for chains flagged reversible.
pub const REVERSIBILITY_TOL: f64 = 1e-10;

/// An explicit Markov chain: indexed states, a row-stochastic transition
/// matrix, and a positive (not necessarily normalized) invariant measure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiniteChain {
    states: Vec<String>,
    /// Dense row-major transition matrix.
    p: Vec<f64>,
    pi: Vec<f64>,
}

impl FiniteChain {
    pub fn new(states: Vec<String>, p: Vec<f64>, pi: Vec<f64>) -> Result<Self> {
        let n = states.len();
        if n == 0 {
            return Err(Error::ChainPrecondition("empty state space".into()));
        }
        if p.len() != n * n {
            return Err(Error::ChainPrecondition(format!(
                "matrix has {} entries, expected {}",
                p.len(),
                n * n
            )));
        }
        if pi.len() != n {
            return Err(Error::ChainPrecondition(format!(
                "measure has {} entries, expected {n}",
                pi.len()
            )));
        }
        for (i, &m) in pi.iter().enumerate() {
            if !(m > 0.0) || !m.is_finite() {
                return Err(Error::ChainPrecondition(format!(
                    "pi({}) = {m} is not positive",
                    states[i]
                )));
            }
        }
        for i in 0..n {
            let row_sum: f64 = p[i * n..(i + 1) * n].iter().sum();
            if (row_sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::ChainPrecondition(format!(
                    "row {} sums to {row_sum}",
                    states[i]
                )));
            }
            if p[i * n..(i + 1) * n].iter().any(|&x| x < 0.0) {
                return Err(Error::ChainPrecondition(format!(
                    "row {} has a negative entry",
                    states[i]
                )));
            }
        }
        Ok(Self { states, p, pi })
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s == label)
    }

    pub fn transition(&self, from: usize, to: usize) -> f64 {
        self.p[from * self.n_states() + to]
    }

    pub fn pi(&self, state: usize) -> f64 {
        self.pi[state]
    }

    pub fn pi_total(&self) -> f64 {
        self.pi.iter().sum()
    }

    pub fn matrix(&self) -> &[f64] {
        &self.p
    }

    pub fn measure(&self) -> &[f64] {
        &self.pi
    }

    /// Smallest holding probability `min_x P(x, x)`.
    pub fn min_holding(&self) -> f64 {
        (0..self.n_states())
            .map(|i| self.transition(i, i))
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest detailed-balance defect `|pi(x)P(x,y) - pi(y)P(y,x)|`.
    pub fn reversibility_defect(&self) -> f64 {
        let n = self.n_states();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst
                    .max((self.pi[i] * self.transition(i, j) - self.pi[j] * self.transition(j, i)).abs());
            }
        }
        worst
    }

    pub fn is_reversible(&self) -> bool {
        self.reversibility_defect() <= REVERSIBILITY_TOL
    }

    /// Neighbors of a state in the graph induced by `P > 0` (diagonal
    /// excluded).
    pub fn graph_neighbors(&self, state: usize) -> Vec<usize> {
        let n = self.n_states();
        (0..n)
            .filter(|&j| j != state && (self.transition(state, j) > 0.0 || self.transition(j, state) > 0.0))
            .collect()
    }

    /// Exact `P^n` by binary exponentiation.
    pub fn matrix_power(&self, mut n: u64) -> Vec<f64> {
        let k = self.n_states();
        let mut result = identity(k);
        let mut base = self.p.clone();
        while n > 0 {
            if n & 1 == 1 {
                result = mat_mul(&result, &base, k);
            }
            base = mat_mul(&base, &base, k);
            n >>= 1;
        }
        result
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "states": self.states,
            "P": self.p,
            "pi": self.pi,
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let states: Vec<String> = serde_json::from_value(
            value
                .get("states")
                .ok_or_else(|| Error::MalformedFile("missing \"states\"".into()))?
                .clone(),
        )
        .map_err(|e| Error::MalformedFile(e.to_string()))?;
        let p: Vec<f64> = serde_json::from_value(
            value
                .get("P")
                .ok_or_else(|| Error::MalformedFile("missing \"P\"".into()))?
                .clone(),
        )
        .map_err(|e| Error::MalformedFile(e.to_string()))?;
        let pi: Vec<f64> = serde_json::from_value(
            value
                .get("pi")
                .ok_or_else(|| Error::MalformedFile("missing \"pi\"".into()))?
                .clone(),
        )
        .map_err(|e| Error::MalformedFile(e.to_string()))?;
        Self::new(states, p, pi)
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn mat_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

/// Edge measure `Q(S1, S2) = sum over x in S1, y in S2 of pi(x) P(x, y)`.
pub fn edge_measure(chain: &FiniteChain, s1: &[usize], s2: &[usize]) -> Result<f64> {
    let n = chain.n_states();
    for &s in s1.iter().chain(s2) {
        if s >= n {
            return Err(Error::ChainPrecondition(format!(
                "state id {s} out of range (chain has {n} states)"
            )));
        }
    }
    let mut total = 0.0;
    for &x in s1 {
        for &y in s2 {
            total += chain.pi(x) * chain.transition(x, y);
        }
    }
    Ok(total)
}

/// Boundary ratio `Phi_S = Q(S, S^c) / pi(S)`.
///
/// The full state space has an empty boundary and ratio zero; the profile
/// machinery excludes it separately so thresholds stay finite.
pub fn phi_s(chain: &FiniteChain, s: &[usize]) -> Result<f64> {
    let n = chain.n_states();
    let in_s: HashSet<usize> = s.iter().copied().collect();
    if in_s.is_empty() {
        return Err(Error::ChainPrecondition(
            "boundary ratio of the empty set".into(),
        ));
    }
    let complement: Vec<usize> = (0..n).filter(|i| !in_s.contains(i)).collect();
    let q = edge_measure(chain, s, &complement)?;
    let mass: f64 = s.iter().map(|&x| chain.pi(x)).sum();
    Ok(q / mass)
}

/// How a profile was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProfileMode {
    /// Exhaustive enumeration of connected proper subsets; the profile is
    /// exact.
    Exact,
    /// Random connected subsets only; the reported values upper-bound the
    /// true infimum, so thresholds derived from them are not certified.
    SampledNonCertified,
}

/// The isoperimetric profile `Phi(r)`: for each requested `r`, the infimum
/// of `Phi_S` over connected proper nonempty subsets with `pi(S) <= r`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsoProfile {
    /// `(r, Phi(r), minimizing subset)`, increasing in `r`; `Phi` is
    /// `f64::INFINITY` when no admissible subset exists.
    pub breakpoints: Vec<(f64, f64, Vec<usize>)>,
    pub mode: ProfileMode,
}

impl IsoProfile {
    /// Profile value at measure `u` (the step function extended to all
    /// positive arguments). Breakpoints are sorted by `r` and carry the
    /// running minimum, so this is a binary search.
    pub fn value_at(&self, u: f64) -> f64 {
        match self.breakpoints.partition_point(|(r, _, _)| *r <= u) {
            0 => f64::INFINITY,
            k => self.breakpoints[k - 1].1,
        }
    }
}

/// Enumeration budget for connected subsets before switching is suggested.
pub const SUBSET_BUDGET: u64 = 1 << 20;

/// Enumerates every connected nonempty proper subset of the chain graph.
///
/// Standard rooted growth: subsets are generated with a fixed minimal root
/// and an extension frontier restricted to larger-indexed or unblocked
/// vertices, so each subset appears exactly once. Fails once `budget`
/// subsets have been produced.
fn enumerate_connected_subsets(
    chain: &FiniteChain,
    budget: u64,
    mut visit: impl FnMut(&[usize]),
) -> Result<()> {
    let n = chain.n_states();
    let mut produced: u64 = 0;
    let adjacency: Vec<Vec<usize>> = (0..n).map(|v| chain.graph_neighbors(v)).collect();

    // For each root r, enumerate connected sets whose minimum element is r.
    for root in 0..n {
        let mut current = vec![root];
        let mut forbidden: HashSet<usize> = HashSet::new();
        grow(
            &adjacency,
            root,
            &mut current,
            &mut forbidden,
            &mut produced,
            budget,
            n,
            &mut visit,
        )?;
    }
    return Ok(());

    #[allow(clippy::too_many_arguments)]
    fn grow(
        adjacency: &[Vec<usize>],
        root: usize,
        current: &mut Vec<usize>,
        forbidden: &mut HashSet<usize>,
        produced: &mut u64,
        budget: u64,
        n: usize,
        visit: &mut impl FnMut(&[usize]),
    ) -> Result<()> {
        *produced += 1;
        if *produced > budget {
            return Err(Error::BudgetExceeded {
                budget,
                required: *produced,
            });
        }
        if current.len() < n {
            visit(current);
        }
        // candidate extensions: neighbors of the current set, above the
        // root, not already in, not forbidden
        let in_set: HashSet<usize> = current.iter().copied().collect();
        let mut candidates: Vec<usize> = Vec::new();
        for &v in current.iter() {
            for &w in &adjacency[v] {
                if w > root
                    && !in_set.contains(&w)
                    && !forbidden.contains(&w)
                    && !candidates.contains(&w)
                {
                    candidates.push(w);
                }
            }
        }
        candidates.sort_unstable();
        let mut blocked_here: Vec<usize> = Vec::new();
        for &c in &candidates {
            current.push(c);
            grow(
                adjacency, root, current, forbidden, produced, budget, n, visit,
            )?;
            current.pop();
            // done with c in this branch: block it for the siblings
            forbidden.insert(c);
            blocked_here.push(c);
        }
        for c in blocked_here {
            forbidden.remove(&c);
        }
        Ok(())
    }
}

/// The complete profile step function: one exhaustive enumeration of the
/// connected proper subsets, recording at every achievable measure the best
/// boundary ratio seen at or below it. Every breakpoint of the true
/// `Phi(r)` appears, which the threshold integral relies on.
pub fn full_profile(chain: &FiniteChain) -> Result<IsoProfile> {
    full_profile_with_budget(chain, SUBSET_BUDGET)
}

pub fn full_profile_with_budget(chain: &FiniteChain, budget: u64) -> Result<IsoProfile> {
    // best ratio at each exact mass value; masses are summed in ascending
    // state order so they agree bit-for-bit with any other canonical scan
    let mut at_mass: HashMap<u64, (f64, Vec<usize>)> = HashMap::new();
    enumerate_connected_subsets(chain, budget, |subset| {
        let mut sorted = subset.to_vec();
        sorted.sort_unstable();
        let mass: f64 = sorted.iter().map(|&x| chain.pi(x)).sum();
        let phi = phi_s(chain, &sorted).expect("proper nonempty subset");
        let slot = at_mass
            .entry(mass.to_bits())
            .or_insert((f64::INFINITY, Vec::new()));
        if phi < slot.0 {
            *slot = (phi, sorted);
        }
    })?;
    Ok(running_minimum_profile(at_mass, ProfileMode::Exact))
}

fn running_minimum_profile(
    at_mass: HashMap<u64, (f64, Vec<usize>)>,
    mode: ProfileMode,
) -> IsoProfile {
    let mut entries: Vec<(f64, f64, Vec<usize>)> = at_mass
        .into_iter()
        .map(|(bits, (phi, set))| (f64::from_bits(bits), phi, set))
        .collect();
    entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut breakpoints: Vec<(f64, f64, Vec<usize>)> = Vec::new();
    let mut best = f64::INFINITY;
    let mut best_set: Vec<usize> = Vec::new();
    for (r, phi, set) in entries {
        if phi < best {
            best = phi;
            best_set = set;
        }
        breakpoints.push((r, best, best_set.clone()));
    }
    IsoProfile { breakpoints, mode }
}

/// Exact isoperimetric profile over connected subsets at each requested
/// measure level: `Phi(r) = inf { Phi_S : S connected, pi(S) <= r }`, the
/// infimum taken over nonempty proper subsets.
pub fn iso_profile(chain: &FiniteChain, r_grid: &[f64]) -> Result<IsoProfile> {
    iso_profile_with_budget(chain, r_grid, SUBSET_BUDGET)
}

pub fn iso_profile_with_budget(
    chain: &FiniteChain,
    r_grid: &[f64],
    budget: u64,
) -> Result<IsoProfile> {
    let full = full_profile_with_budget(chain, budget)?;
    let mut grid: Vec<f64> = r_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let breakpoints = grid
        .into_iter()
        .map(|r| {
            let mut phi = f64::INFINITY;
            let mut set: Vec<usize> = Vec::new();
            for (br, bphi, bset) in &full.breakpoints {
                if *br <= r {
                    phi = *bphi;
                    set = bset.clone();
                } else {
                    break;
                }
            }
            (r, phi, set)
        })
        .collect();
    Ok(IsoProfile {
        breakpoints,
        mode: ProfileMode::Exact,
    })
}

/// Randomized profile upper bound for chains too large to enumerate: grows
/// `samples` random connected subsets and keeps the best ratio per level.
/// Not certified; see [`ProfileMode::SampledNonCertified`].
pub fn iso_profile_sampled<R: Rng>(
    chain: &FiniteChain,
    r_grid: &[f64],
    samples: usize,
    rng: &mut R,
) -> IsoProfile {
    let n = chain.n_states();
    let mut at_mass: HashMap<u64, (f64, Vec<usize>)> = HashMap::new();
    for _ in 0..samples {
        let target = rng.gen_range(1..n);
        let start = rng.gen_range(0..n);
        let mut set = vec![start];
        let mut in_set: HashSet<usize> = set.iter().copied().collect();
        while set.len() < target {
            let frontier: Vec<usize> = set
                .iter()
                .flat_map(|&v| chain.graph_neighbors(v))
                .filter(|w| !in_set.contains(w))
                .collect();
            if frontier.is_empty() {
                break;
            }
            let pick = frontier[rng.gen_range(0..frontier.len())];
            in_set.insert(pick);
            set.push(pick);
        }
        if set.len() == n {
            continue;
        }
        set.sort_unstable();
        let mass: f64 = set.iter().map(|&x| chain.pi(x)).sum();
        let phi = phi_s(chain, &set).expect("proper nonempty subset");
        let slot = at_mass
            .entry(mass.to_bits())
            .or_insert((f64::INFINITY, Vec::new()));
        if phi < slot.0 {
            *slot = (phi, set.clone());
        }
    }
    let full = running_minimum_profile(at_mass, ProfileMode::SampledNonCertified);
    let mut grid: Vec<f64> = r_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    IsoProfile {
        breakpoints: grid
            .into_iter()
            .map(|r| {
                let mut phi = f64::INFINITY;
                let mut set: Vec<usize> = Vec::new();
                for (br, bphi, bset) in &full.breakpoints {
                    if *br <= r {
                        phi = *bphi;
                        set = bset.clone();
                    } else {
                        break;
                    }
                }
                (r, phi, set)
            })
            .collect(),
        mode: ProfileMode::SampledNonCertified,
    }
}

/// The exact evolving-set integral
/// `int_{4 (pi(x) /\ pi(y))}^{4 / eps} 4 / (u Phi(u)^2) du`
/// over the piecewise-constant profile of the chain, in closed form.
///
/// The profile is evaluated on the distinct measures of connected proper
/// subsets; between breakpoints the integrand is `c / u`, so every piece
/// integrates to a logarithm.
pub fn threshold_integral(chain: &FiniteChain, profile: &IsoProfile, epsilon: f64, x: usize, y: usize) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter("epsilon must be positive".into()));
    }
    let lower = 4.0 * chain.pi(x).min(chain.pi(y));
    let upper = 4.0 / epsilon;
    if lower >= upper {
        return Ok(0.0);
    }
    // breakpoints of the step function Phi(u) inside [lower, upper]
    let mut cuts: BTreeSet<u64> = BTreeSet::new();
    cuts.insert(lower.to_bits());
    cuts.insert(upper.to_bits());
    for (r, _, _) in &profile.breakpoints {
        if *r > lower && *r < upper {
            cuts.insert(r.to_bits());
        }
    }
    let cuts: Vec<f64> = cuts.into_iter().map(f64::from_bits).collect();
    let mut total = 0.0;
    for pair in cuts.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let phi = profile.value_at(a);
        if phi == 0.0 {
            return Err(Error::ProfileVanishes { at: a });
        }
        if phi.is_finite() {
            total += 4.0 / (phi * phi) * (b / a).ln();
        }
        // infinite Phi means no admissible set at this scale: zero integrand
    }
    Ok(total)
}

/// Smallest number of steps after which `P^n(x, y) <= eps pi(y)` is
/// guaranteed by the evolving-set bound for a chain with holding
/// probability at least `sigma`.
pub fn mp_threshold(
    chain: &FiniteChain,
    profile: &IsoProfile,
    sigma: f64,
    epsilon: f64,
    x: usize,
    y: usize,
) -> Result<u64> {
    if !(sigma > 0.0 && sigma <= 0.5) {
        return Err(Error::ChainPrecondition(format!(
            "holding probability bound sigma = {sigma} must lie in (0, 1/2]"
        )));
    }
    let min_holding = chain.min_holding();
    if min_holding + 1e-15 < sigma {
        return Err(Error::ChainPrecondition(format!(
            "chain has holding probability {min_holding} < sigma = {sigma}"
        )));
    }
    let integral = threshold_integral(chain, profile, epsilon, x, y)?;
    let bound = 1.0 + (1.0 - sigma) * (1.0 - sigma) / (sigma * sigma) * integral;
    Ok(bound.ceil().max(1.0) as u64)
}

/// Result of checking the evolving-set bound on one pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MpPairReport {
    pub x: usize,
    pub y: usize,
    pub threshold: u64,
    pub p_n: f64,
    pub bound: f64,
    /// `eps pi(y)` at least reaches the stationary limit of `P^n(x, y)`, so
    /// the inequality is falsifiable at finite n.
    pub informative: bool,
    pub holds: bool,
    pub margin: f64,
}

/// Verification report over a set of pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MpReport {
    pub epsilon: f64,
    pub sigma: f64,
    pub pairs: Vec<MpPairReport>,
    pub violations: usize,
}

/// Checks `P^n(x, y) <= eps pi(y)` at `n = mp_threshold` by exact matrix
/// power for each pair. A violation on an informative pair is an
/// implementation bug, not an expected outcome.
///
/// Pairs where `eps pi(y)` is below the stationary limit `pi(y) / pi(V)`
/// are flagged non-informative: with the unnormalized measure the bound
/// concerns transient decay and finite chains equilibrate instead.
pub fn verify_mp(chain: &FiniteChain, epsilon: f64, pairs: &[(usize, usize)]) -> Result<MpReport> {
    verify_mp_with_sigma(chain, epsilon, pairs, None)
}

/// [`verify_mp`] with an explicit holding-probability bound instead of the
/// measured `min_x P(x, x)` (both remain valid choices; the measured one is
/// the default, an analytic lower bound gives larger thresholds).
pub fn verify_mp_with_sigma(
    chain: &FiniteChain,
    epsilon: f64,
    pairs: &[(usize, usize)],
    sigma_override: Option<f64>,
) -> Result<MpReport> {
    let sigma = sigma_override.unwrap_or_else(|| chain.min_holding()).min(0.5);
    if !(sigma > 0.0) {
        return Err(Error::ChainPrecondition(
            "chain has a state with zero holding probability".into(),
        ));
    }
    let profile = full_profile(chain)?;
    let n = chain.n_states();
    let pi_total = chain.pi_total();
    let mut out = Vec::with_capacity(pairs.len());
    let mut violations = 0;
    let mut powers: HashMap<u64, Vec<f64>> = HashMap::new();
    for &(x, y) in pairs {
        if x >= n || y >= n {
            return Err(Error::ChainPrecondition(format!(
                "pair ({x}, {y}) out of range"
            )));
        }
        let threshold = mp_threshold(chain, &profile, sigma, epsilon, x, y)?;
        let power = powers
            .entry(threshold)
            .or_insert_with(|| chain.matrix_power(threshold));
        let p_n = power[x * n + y];
        let bound = epsilon * chain.pi(y);
        let informative = epsilon * pi_total >= 1.0;
        let holds = p_n <= bound + 1e-12;
        if informative && !holds {
            violations += 1;
        }
        out.push(MpPairReport {
            x,
            y,
            threshold,
            p_n,
            bound,
            informative,
            holds,
            margin: bound - p_n,
        });
    }
    Ok(MpReport {
        epsilon,
        sigma,
        pairs: out,
        violations,
    })
}

/// Surface and volume comparison for a connected subset of the even
/// sublattice under the modified field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfaceVolumeReport {
    /// `Q(Lambda, complement)` of the two-step chain.
    pub edge_measure: f64,
    /// `pi(Lambda)` under the modified field.
    pub volume: f64,
    /// Number of even-graph edges leaving the subset.
    pub boundary_edges: u64,
    /// Effective conductance floor `alpha(N) = N^-(d/gamma + mu)`.
    pub alpha: f64,
    /// Whether the field minimum over the protected box meets `alpha`.
    pub alpha_valid: bool,
    /// `Q >= alpha^2 / (2d) * |boundary|`.
    pub surface_bound_holds: bool,
    /// `pi(Lambda) <= 2d * |Lambda|`.
    pub volume_bound_holds: bool,
    pub subset_size: usize,
    /// Set when `(gamma, mu)` leave the regime `gamma > 8d`,
    /// `mu < 1/8 - d/gamma` where the decay conclusion applies; the bounds
    /// themselves are still computed and checked.
    pub regime_warning: Option<String>,
}

/// Warning text when `(gamma, mu)` are outside the large-gamma regime.
pub fn regime_warning(d: usize, gamma: f64, mu: f64) -> Option<String> {
    let d_f = d as f64;
    if gamma <= 8.0 * d_f {
        return Some(format!(
            "gamma = {gamma} is not above 8d = {}; the standard-decay conclusion needs it",
            8.0 * d_f
        ));
    }
    if mu >= 1.0 / 8.0 - d_f / gamma {
        return Some(format!(
            "mu = {mu} is not below 1/8 - d/gamma = {}; the exponent budget is exceeded",
            1.0 / 8.0 - d_f / gamma
        ));
    }
    None
}

/// Checks the two-step surface bound and the volume bound on a connected
/// even subset, with `alpha = N^-(d/gamma + mu)` (or 1 for a constant
/// field).
pub fn surface_volume_check(
    modenv: &ModifiedEnvironment<'_>,
    mu: f64,
    gamma_for_alpha: Option<f64>,
    subset: &[LatticePoint],
) -> Result<SurfaceVolumeReport> {
    let d = modenv.dim();
    if subset.is_empty() {
        return Err(Error::InvalidParameter("empty subset".into()));
    }
    for p in subset {
        if p.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.dim(),
            });
        }
        if !p.is_even() {
            return Err(Error::OddPoint(p.coords.clone()));
        }
    }
    let set: BTreeSet<&LatticePoint> = subset.iter().collect();
    if set.len() != subset.len() {
        return Err(Error::InvalidParameter("subset has duplicates".into()));
    }
    if !even_subset_connected(subset) {
        return Err(Error::InvalidParameter(
            "subset is not connected in the even-sublattice graph".into(),
        ));
    }

    let n = modenv.n_scale();
    let alpha = match gamma_for_alpha {
        Some(gamma) => (n.max(2) as f64).powf(-(d as f64 / gamma + mu)),
        None => 1.0,
    };
    let alpha_valid = modenv
        .base()
        .min_over_plain_box(modenv.protected_radius())?
        >= alpha;

    let mut edge_total = 0.0;
    let mut volume = 0.0;
    let mut boundary_edges = 0u64;
    for x in subset {
        let pi_x = modenv.pi(x);
        volume += pi_x;
        for z in even_neighbors(x)? {
            if !set.contains(&z) {
                boundary_edges += 1;
                edge_total += pi_x * modenv.two_step(x, &z);
            }
        }
        // two-step moves can also land outside the L1-ball of radius 2 only
        // at the starting point itself, so the even neighbors plus the
        // holding state exhaust the support of P^2(x, .)
    }

    let surface_target = alpha * alpha / (2.0 * d as f64) * boundary_edges as f64;
    let volume_target = 2.0 * d as f64 * subset.len() as f64;
    Ok(SurfaceVolumeReport {
        edge_measure: edge_total,
        volume,
        boundary_edges,
        alpha,
        alpha_valid,
        surface_bound_holds: edge_total >= surface_target - 1e-12,
        volume_bound_holds: volume <= volume_target + 1e-12,
        subset_size: subset.len(),
        regime_warning: gamma_for_alpha.and_then(|g| regime_warning(d, g, mu)),
    })
}

/// Connectivity in the even-sublattice graph (L1 distance 2).
pub fn even_subset_connected(subset: &[LatticePoint]) -> bool {
    if subset.is_empty() {
        return false;
    }
    let set: HashSet<&LatticePoint> = subset.iter().collect();
    let mut seen: HashSet<&LatticePoint> = HashSet::new();
    let mut stack = vec![&subset[0]];
    seen.insert(&subset[0]);
    while let Some(p) = stack.pop() {
        for q in even_neighbors(p).expect("subset points are even") {
            if let Some(&stored) = set.get(&q) {
                if seen.insert(stored) {
                    stack.push(stored);
                }
            }
        }
    }
    seen.len() == subset.len()
}

/// Grows a random connected subset of the even sublattice inside
/// `[-window, window]^d`, starting from `start`.
pub fn random_connected_even_subset<R: Rng>(
    d: usize,
    window: i64,
    size: usize,
    start: LatticePoint,
    rng: &mut R,
) -> Vec<LatticePoint> {
    assert!(start.is_even() && start.sup_norm() <= window);
    let mut set: BTreeSet<LatticePoint> = BTreeSet::new();
    set.insert(start);
    while set.len() < size {
        let frontier: Vec<LatticePoint> = set
            .iter()
            .flat_map(|p| even_neighbors(p).unwrap())
            .filter(|q| q.sup_norm() <= window && !set.contains(q))
            .collect();
        if frontier.is_empty() {
            break;
        }
        let pick = frontier[rng.gen_range(0..frontier.len())].clone();
        set.insert(pick);
    }
    let _ = d;
    set.into_iter().collect()
}

/// Minimum over the given shapes of `|boundary edges| / |shape|^((d-1)/d)`,
/// the empirical isoperimetric constant of the family.
pub fn iso_constant_check(d: usize, shapes: &[Vec<LatticePoint>]) -> Result<f64> {
    if shapes.is_empty() {
        return Err(Error::InvalidParameter("no shapes given".into()));
    }
    let mut kappa = f64::INFINITY;
    for shape in shapes {
        if shape.is_empty() {
            return Err(Error::InvalidParameter("empty shape".into()));
        }
        let set: HashSet<&LatticePoint> = shape.iter().collect();
        let mut boundary = 0u64;
        for p in shape {
            if p.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: p.dim(),
                });
            }
            for q in p.neighbors() {
                if !set.contains(&q) {
                    boundary += 1;
                }
            }
        }
        let ratio = boundary as f64 / (shape.len() as f64).powf((d as f64 - 1.0) / d as f64);
        kappa = kappa.min(ratio);
    }
    Ok(kappa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{modify, sample_environment, ConductanceLaw};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lazy_two_state() -> FiniteChain {
        FiniteChain::new(
            vec!["0".into(), "1".into()],
            vec![0.5, 0.5, 0.5, 0.5],
            vec![1.0, 1.0],
        )
        .unwrap()
    }

    fn flip_two_state() -> FiniteChain {
        FiniteChain::new(
            vec!["0".into(), "1".into()],
            vec![0.0, 1.0, 1.0, 0.0],
            vec![1.0, 1.0],
        )
        .unwrap()
    }

    fn lazy_cycle(n: usize) -> FiniteChain {
        let mut p = vec![0.0; n * n];
        for i in 0..n {
            p[i * n + i] = 0.5;
            p[i * n + (i + 1) % n] = 0.25;
            p[i * n + (i + n - 1) % n] = 0.25;
        }
        FiniteChain::new(
            (0..n).map(|i| i.to_string()).collect(),
            p,
            vec![1.0; n],
        )
        .unwrap()
    }

    /// All-subsets brute force restricted to connected proper subsets.
    fn brute_force_profile(chain: &FiniteChain, r: f64) -> f64 {
        let n = chain.n_states();
        assert!(n <= 20);
        let mut best = f64::INFINITY;
        for mask in 1u32..((1 << n) - 1) {
            let subset: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
            let mass: f64 = subset.iter().map(|&i| chain.pi(i)).sum();
            if mass > r || !subset_connected(chain, &subset) {
                continue;
            }
            best = best.min(phi_s(chain, &subset).unwrap());
        }
        best
    }

    fn subset_connected(chain: &FiniteChain, subset: &[usize]) -> bool {
        let in_set: HashSet<usize> = subset.iter().copied().collect();
        let mut seen = HashSet::new();
        let mut stack = vec![subset[0]];
        seen.insert(subset[0]);
        while let Some(v) = stack.pop() {
            for w in chain.graph_neighbors(v) {
                if in_set.contains(&w) && seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        seen.len() == subset.len()
    }

    #[test]
    fn edge_measure_basics() {
        let chain = flip_two_state();
        assert_eq!(edge_measure(&chain, &[], &[0, 1]).unwrap(), 0.0);
        assert_eq!(edge_measure(&chain, &[0], &[1]).unwrap(), 1.0);
        // reversible symmetry
        let lazy = lazy_two_state();
        let q01 = edge_measure(&lazy, &[0], &[1]).unwrap();
        let q10 = edge_measure(&lazy, &[1], &[0]).unwrap();
        assert!((q01 - q10).abs() < 1e-15);
    }

    #[test]
    fn phi_s_hand_values() {
        let lazy = lazy_two_state();
        assert!((phi_s(&lazy, &[0]).unwrap() - 0.5).abs() < 1e-15);
        // the full space has no boundary
        assert_eq!(phi_s(&lazy, &[0, 1]).unwrap(), 0.0);
        assert!(phi_s(&lazy, &[]).is_err());

        // 6-cycle, arc of 3: two boundary edges of weight 1/4 each, mass 3
        let cycle = lazy_cycle(6);
        let phi = phi_s(&cycle, &[0, 1, 2]).unwrap();
        assert!((phi - 2.0 * 0.25 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn profile_on_two_state_chain() {
        let lazy = lazy_two_state();
        let profile = iso_profile(&lazy, &[1.0, 2.0]).unwrap();
        assert_eq!(profile.mode, ProfileMode::Exact);
        assert!((profile.breakpoints[0].1 - 0.5).abs() < 1e-15);
        // the full space is excluded, so Phi stays 1/2 even at r = 2
        assert!((profile.breakpoints[1].1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn profile_matches_all_subsets_brute_force() {
        let chains = vec![lazy_two_state(), lazy_cycle(5), lazy_cycle(8)];
        for chain in chains {
            let profile = full_profile(&chain).unwrap();
            for (r, phi, minimizer) in &profile.breakpoints {
                let brute = brute_force_profile(&chain, *r);
                if phi.is_finite() {
                    assert!(
                        (phi - brute).abs() < 1e-12,
                        "r={r}: {phi} vs brute {brute}"
                    );
                    let mass: f64 = minimizer.iter().map(|&i| chain.pi(i)).sum();
                    assert!(mass <= *r + 1e-12);
                    assert!(subset_connected(&chain, minimizer));
                } else {
                    assert_eq!(brute, f64::INFINITY);
                }
            }
        }
    }

    #[test]
    fn profile_is_nonincreasing_in_r() {
        let chain = lazy_cycle(7);
        let profile = full_profile(&chain).unwrap();
        for pair in profile.breakpoints.windows(2) {
            assert!(pair[1].1 <= pair[0].1 + 1e-15);
        }
    }

    #[test]
    fn budget_exceeded_is_reported() {
        let chain = lazy_cycle(10);
        let err = iso_profile_with_budget(&chain, &[10.0], 16).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
    }

    #[test]
    fn sampled_profile_upper_bounds_exact() {
        let chain = lazy_cycle(8);
        let exact = full_profile(&chain).unwrap();
        let grid: Vec<f64> = exact.breakpoints.iter().map(|(r, _, _)| *r).collect();
        let exact = iso_profile(&chain, &grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sampled = iso_profile_sampled(&chain, &grid, 200, &mut rng);
        assert_eq!(sampled.mode, ProfileMode::SampledNonCertified);
        for (e, s) in exact.breakpoints.iter().zip(&sampled.breakpoints) {
            if s.1.is_finite() {
                assert!(s.1 >= e.1 - 1e-12);
            }
        }
    }

    #[test]
    fn threshold_hand_computation_two_state() {
        // lazy two-state chain: Phi is 1/2 everywhere admissible, sigma = 1/2,
        // eps = 0.1: integral over [4, 40] of 16/u du = 16 ln 10, threshold
        // rounds to 38
        let chain = lazy_two_state();
        let profile = full_profile(&chain).unwrap();
        let integral = threshold_integral(&chain, &profile, 0.1, 0, 1).unwrap();
        assert!((integral - 16.0 * 10.0_f64.ln()).abs() < 1e-10);
        let n = mp_threshold(&chain, &profile, 0.5, 0.1, 0, 1).unwrap();
        assert_eq!(n, 38);
    }

    #[test]
    fn threshold_empty_integral_gives_one() {
        let chain = lazy_two_state();
        let profile = full_profile(&chain).unwrap();
        // 4 (pi(x) /\ pi(y)) = 4 >= 4 / eps = 4 at eps = 1
        let n = mp_threshold(&chain, &profile, 0.5, 1.0, 0, 1).unwrap();
        assert_eq!(n, 1);
    }

    #[test]
    fn threshold_is_nonincreasing_in_epsilon() {
        let chain = lazy_cycle(6);
        let profile = full_profile(&chain).unwrap();
        let mut last = u64::MAX;
        for eps in [0.05, 0.1, 0.2, 0.5, 1.0] {
            let n = mp_threshold(&chain, &profile, 0.5, eps, 0, 3).unwrap();
            assert!(n <= last, "threshold grew at eps={eps}");
            last = n;
        }
    }

    #[test]
    fn verify_mp_on_lazy_cycle() {
        let chain = lazy_cycle(6);
        let pairs: Vec<(usize, usize)> = (0..6).flat_map(|x| (0..6).map(move |y| (x, y))).collect();
        let report = verify_mp(&chain, 0.2, &pairs).unwrap();
        assert_eq!(report.violations, 0);
        for pair in &report.pairs {
            assert!(pair.informative); // eps pi_total = 1.2 >= 1
            assert!(pair.holds, "violation at ({}, {})", pair.x, pair.y);
            assert!(pair.margin > 0.0);
        }
    }

    #[test]
    fn verify_mp_flags_non_informative_pairs() {
        let chain = lazy_two_state();
        let report = verify_mp(&chain, 0.1, &[(0, 1)]).unwrap();
        assert!(!report.pairs[0].informative); // eps pi_total = 0.2 < 1
        assert_eq!(report.violations, 0); // not counted as violation
        let report = verify_mp(&chain, 0.6, &[(0, 1)]).unwrap();
        assert!(report.pairs[0].informative);
        assert!(report.pairs[0].holds);
    }

    #[test]
    fn chain_json_roundtrip() {
        let chain = lazy_cycle(4);
        let json = chain.to_json();
        let back = FiniteChain::from_json(&json).unwrap();
        assert_eq!(chain.states(), back.states());
        assert_eq!(chain.matrix(), back.matrix());
        assert_eq!(chain.measure(), back.measure());
    }

    #[test]
    fn chain_validation_rejects_bad_input() {
        assert!(FiniteChain::new(vec!["a".into()], vec![0.9], vec![1.0]).is_err());
        assert!(FiniteChain::new(vec!["a".into()], vec![1.0], vec![0.0]).is_err());
        assert!(FiniteChain::new(vec!["a".into()], vec![1.0, 0.0], vec![1.0]).is_err());
    }

    #[test]
    fn iso_constant_on_squares_and_strips() {
        // k x k squares in d = 2: boundary 4k, ratio 4k / k = 4
        let squares: Vec<Vec<LatticePoint>> = (1..=5)
            .map(|k| {
                (0..k)
                    .flat_map(|x| (0..k).map(move |y| LatticePoint::new(vec![x, y])))
                    .collect()
            })
            .collect();
        let kappa = iso_constant_check(2, &squares).unwrap();
        assert!((kappa - 4.0).abs() < 1e-12);

        // 1 x k strips: ratio (2k + 2) / sqrt(k), minimal at k = 1
        let strips: Vec<Vec<LatticePoint>> = (1..=6)
            .map(|k| (0..k).map(|y| LatticePoint::new(vec![0, y])).collect())
            .collect();
        let kappa = iso_constant_check(2, &strips).unwrap();
        assert!((kappa - 4.0).abs() < 1e-12);
        // and the family minimum is positive for any nonempty family
        assert!(kappa > 0.0);
    }

    #[test]
    fn surface_volume_on_constant_field() {
        let env = sample_environment(2, 8, ConductanceLaw::Constant { value: 1.0 }, 0).unwrap();
        let modified = modify(&env, 3).unwrap();
        // singleton at the origin: pi = 2d = 4 <= 2d * 1
        let report =
            surface_volume_check(&modified, 0.01, None, &[LatticePoint::origin(2)]).unwrap();
        assert_eq!(report.boundary_edges, 8); // all 2d^2 even neighbors outside
        assert!(report.surface_bound_holds);
        assert!(report.volume_bound_holds);
        assert!((report.volume - 4.0).abs() < 1e-12);
        assert!(report.alpha_valid);
    }

    #[test]
    fn surface_volume_singleton_equality_case_d1() {
        let env = sample_environment(1, 6, ConductanceLaw::Constant { value: 1.0 }, 0).unwrap();
        let modified = modify(&env, 2).unwrap();
        let report =
            surface_volume_check(&modified, 0.1, None, &[LatticePoint::origin(1)]).unwrap();
        // pi({0}) = 2 = 2d |Lambda| exactly in d = 1
        assert!((report.volume - 2.0).abs() < 1e-12);
        assert!(report.volume_bound_holds);
    }

    #[test]
    fn surface_volume_rejects_disconnected_subsets() {
        let env = sample_environment(2, 8, ConductanceLaw::Constant { value: 1.0 }, 0).unwrap();
        let modified = modify(&env, 3).unwrap();
        let subset = vec![
            LatticePoint::origin(2),
            LatticePoint::new(vec![4, 0]), // L1 distance 4: not an even-graph neighbor
        ];
        assert!(surface_volume_check(&modified, 0.01, None, &subset).is_err());
    }

    #[test]
    fn surface_volume_on_random_fields() {
        // gamma large, mu generous: the conductance floor alpha is met and
        // both bounds must hold on every random connected subset
        let gamma = 45.0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        for seed in 0..10 {
            let env =
                sample_environment(2, 12, ConductanceLaw::PolyTail { gamma }, 600 + seed).unwrap();
            let modified = modify(&env, 9).unwrap();
            for _ in 0..10 {
                let size = rng.gen_range(1..=12);
                let subset =
                    random_connected_even_subset(2, 8, size, LatticePoint::origin(2), &mut rng);
                let report =
                    surface_volume_check(&modified, 0.5, Some(gamma), &subset).unwrap();
                if report.alpha_valid {
                    checked += 1;
                    assert!(report.surface_bound_holds, "surface bound failed: {report:?}");
                    assert!(report.volume_bound_holds, "volume bound failed: {report:?}");
                }
            }
        }
        assert!(checked > 50, "alpha floor met only {checked} times");
    }
}
