//! The quenched transition operator and exact n-step distributions.
//!
//! One step of the walk moves from `x` to a neighbor `y` with probability
//! `w(x,y) / pi(x)` where `pi(x)` is the sum of the incident conductances.
//! Distributions are propagated exactly; entries falling below a truncation
//! threshold are dropped with their total mass accumulated into a one-sided
//! error bound, so every reported kernel value `v` brackets the true value
//! in `[v, v + lost_mass_bound]`.

use crate::environment::{Environment, ModifiedEnvironment};
use crate::error::Error;
use crate::isoperimetry::FiniteChain;
use crate::lattice::{LatticePoint, Window};
use crate::Result;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};

/// Default truncation threshold for propagated mass.
pub const DEFAULT_TRUNCATION: f64 = 1e-14;

/// Default state budget when materializing the two-step chain.
pub const DEFAULT_CHAIN_STATES: usize = 4096;

/// Sum of the 2d conductances incident to `x`; the reversible measure.
///
/// Requires `x` at distance >= 1 from the window face so all bonds exist.
pub fn pi(env: &Environment, x: &LatticePoint) -> Result<f64> {
    if x.dim() != env.dim() {
        return Err(Error::DimensionMismatch {
            expected: env.dim(),
            got: x.dim(),
        });
    }
    if x.sup_norm() > env.radius() - 1 {
        return Err(Error::PointOutsideBox {
            point: x.coords.clone(),
            radius: env.radius() - 1,
        });
    }
    let window = env.window();
    let site = window.index_of(x)?;
    let mut total = 0.0;
    for axis in 0..env.dim() {
        let stride = (window.side() as usize).pow((env.dim() - 1 - axis) as u32);
        total += env.bond_at_site(site, axis);
        total += env.bond_at_site(site - stride, axis);
    }
    Ok(total)
}

/// One-step transition probability `w(from, to) / pi(from)`.
pub fn transition(env: &Environment, from: &LatticePoint, to: &LatticePoint) -> Result<f64> {
    if from.l1_distance(to) != 1 {
        return Ok(0.0);
    }
    let bond = crate::lattice::Bond::new(from.clone(), to.clone())?;
    Ok(env.conductance(&bond)? / pi(env, from)?)
}

/// A finitely supported sub-probability vector with tracked truncated mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseDistribution {
    d: usize,
    entries: BTreeMap<LatticePoint, f64>,
    lost_mass_bound: f64,
}

impl SparseDistribution {
    /// Point mass at `at`.
    pub fn delta(at: LatticePoint) -> Self {
        let d = at.dim();
        let mut entries = BTreeMap::new();
        entries.insert(at, 1.0);
        Self {
            d,
            entries,
            lost_mass_bound: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn support_size(&self) -> usize {
        self.entries.len()
    }

    pub fn mass_at(&self, p: &LatticePoint) -> f64 {
        self.entries.get(p).copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn lost_mass_bound(&self) -> f64 {
        self.lost_mass_bound
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LatticePoint, f64)> {
        self.entries.iter().map(|(p, &m)| (p, m))
    }

    /// Total stored mass over points satisfying the predicate.
    pub fn mass_where<F: Fn(&LatticePoint) -> bool>(&self, pred: F) -> f64 {
        self.entries
            .iter()
            .filter(|(p, _)| pred(p))
            .map(|(_, &m)| m)
            .sum()
    }

    /// Largest sup-norm in the support.
    pub fn support_radius(&self) -> i64 {
        self.entries.keys().map(|p| p.sup_norm()).max().unwrap_or(0)
    }

    fn from_parts(d: usize, entries: BTreeMap<LatticePoint, f64>, lost: f64) -> Self {
        Self {
            d,
            entries,
            lost_mass_bound: lost,
        }
    }
}

/// Exact one-step push-forward followed by truncation below `tau`.
///
/// The support must stay at distance >= 1 from the window face. Intended
/// for small supports and cross-checks; the n-step drivers below use a
/// dense engine with the same semantics.
pub fn step(env: &Environment, dist: &SparseDistribution, tau: f64) -> Result<SparseDistribution> {
    if dist.dim() != env.dim() {
        return Err(Error::DimensionMismatch {
            expected: env.dim(),
            got: dist.dim(),
        });
    }
    let limit = env.radius() - 1;
    let mut out: BTreeMap<LatticePoint, f64> = BTreeMap::new();
    for (p, mass) in dist.iter() {
        if p.sup_norm() > limit {
            return Err(Error::PointOutsideBox {
                point: p.coords.clone(),
                radius: limit,
            });
        }
        let pi_p = pi(env, p)?;
        for axis in 0..env.dim() {
            for delta in [-1i64, 1] {
                let q = p.offset(axis, delta);
                let lower = if delta < 0 { &q } else { p };
                let bond = crate::lattice::Bond::from_lower(lower.clone(), axis);
                let w = env.conductance(&bond)?;
                *out.entry(q).or_insert(0.0) += mass * w / pi_p;
            }
        }
    }
    let mut lost = dist.lost_mass_bound();
    if tau > 0.0 {
        let too_small: Vec<LatticePoint> = out
            .iter()
            .filter(|(_, &m)| m < tau)
            .map(|(p, _)| p.clone())
            .collect();
        for p in too_small {
            lost += out.remove(&p).unwrap();
        }
    }
    Ok(SparseDistribution::from_parts(env.dim(), out, lost))
}

/// Exact n-step distribution from `source`, with truncation threshold `tau`.
pub fn heat_kernel(
    env: &Environment,
    n: u64,
    source: &LatticePoint,
    tau: f64,
) -> Result<SparseDistribution> {
    let mut engine = DenseFront::new(env, source, tau)?;
    if n as i64 + source.sup_norm() > env.radius() - 1 {
        return Err(Error::HorizonTooLarge {
            horizon: n,
            radius: env.radius(),
        });
    }
    for _ in 0..n {
        engine.step()?;
    }
    Ok(engine.to_sparse())
}

/// One point of a return-probability series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnPoint {
    /// Half the step count: the value is the 2n-step return probability.
    pub n: u64,
    pub value: f64,
    /// One-sided truncation bound: the true value lies in
    /// `[value, value + err_bound]`.
    pub err_bound: f64,
}

/// The even-step return probabilities `P^{2n}(0, 0)` on a grid of n.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub d: usize,
    pub law: String,
    pub seed: u64,
    pub tau: f64,
    pub points: Vec<ReturnPoint>,
}

impl ReturnSeries {
    /// CSV with header `n,p2n,err_bound`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,p2n,err_bound")?;
        for p in &self.points {
            writeln!(w, "{},{:.16e},{:.16e}", p.n, p.value, p.err_bound)?;
        }
        Ok(())
    }

    /// Reads the CSV form; metadata fields are left at placeholders.
    pub fn read_csv<R: BufRead>(r: R) -> Result<ReturnSeries> {
        let mut points = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("n,") {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() < 2 {
                return Err(Error::MalformedFile(format!(
                    "series line {} has {} fields",
                    i + 1,
                    fields.len()
                )));
            }
            let n: u64 = fields[0]
                .trim()
                .parse()
                .map_err(|e| Error::MalformedFile(format!("bad n on line {}: {e}", i + 1)))?;
            let value: f64 = fields[1]
                .trim()
                .parse()
                .map_err(|e| Error::MalformedFile(format!("bad value on line {}: {e}", i + 1)))?;
            let err_bound: f64 = if fields.len() > 2 {
                fields[2].trim().parse().unwrap_or(0.0)
            } else {
                0.0
            };
            points.push(ReturnPoint { n, value, err_bound });
        }
        if points.is_empty() {
            return Err(Error::MalformedFile("empty series".into()));
        }
        points.sort_by_key(|p| p.n);
        Ok(ReturnSeries {
            d: 0,
            law: String::new(),
            seed: 0,
            tau: 0.0,
            points,
        })
    }
}

/// Geometric grid of n values from `n_min` to `n_max` with `per_octave`
/// points per doubling; endpoints always included.
pub fn geometric_grid(n_min: u64, n_max: u64, per_octave: u32) -> Vec<u64> {
    assert!(n_min >= 1 && n_max >= n_min && per_octave >= 1);
    let ratio = 2f64.powf(1.0 / f64::from(per_octave));
    let mut out = vec![n_min];
    let mut x = n_min as f64;
    loop {
        x *= ratio;
        let n = x.round() as u64;
        if n >= n_max {
            break;
        }
        if n > *out.last().unwrap() {
            out.push(n);
        }
    }
    if *out.last().unwrap() != n_max {
        out.push(n_max);
    }
    out
}

/// Computes `P^{2n}(0, 0)` for every n in `grid` with one propagation pass.
pub fn return_series(env: &Environment, grid: &[u64], tau: f64) -> Result<ReturnSeries> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty n grid".into()));
    }
    let mut sorted: Vec<u64> = grid.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let n_max = *sorted.last().unwrap();
    if 2 * n_max as i64 > env.radius() - 1 {
        return Err(Error::HorizonTooLarge {
            horizon: 2 * n_max,
            radius: env.radius(),
        });
    }
    let origin = LatticePoint::origin(env.dim());
    let mut engine = DenseFront::new(env, &origin, tau)?;
    let mut points = Vec::with_capacity(sorted.len());
    let mut next = 0usize;
    for step_index in 1..=(2 * n_max) {
        engine.step()?;
        if step_index % 2 == 0 && next < sorted.len() && sorted[next] * 2 == step_index {
            points.push(ReturnPoint {
                n: sorted[next],
                value: engine.mass_at(&origin),
                err_bound: engine.lost(),
            });
            next += 1;
        }
    }
    Ok(ReturnSeries {
        d: env.dim(),
        law: env.law().to_string(),
        seed: env.seed(),
        tau,
        points,
    })
}

/// The two-step operator of the modified field restricted to the even
/// points of the window `[-(N+1) - 2*horizon, ...]^d`, materialized as an
/// explicit reversible chain.
///
/// Two-step moves that would exit the window fold into the holding
/// probability, which keeps rows stochastic and preserves both stationarity
/// and reversibility of the restriction; a walk started inside the
/// protected box cannot reach the folded region within `horizon` two-step
/// moves, so the restricted dynamics are exact there.
pub fn two_step_even_kernel(
    modenv: &ModifiedEnvironment<'_>,
    horizon: u64,
    max_states: usize,
) -> Result<FiniteChain> {
    let d = modenv.dim();
    let radius = modenv.protected_radius() + 2 * horizon as i64;
    let window = Window::new(d, radius);
    let mut states: Vec<LatticePoint> = Vec::new();
    for idx in 0..window.checked_point_count()? {
        let p = window.point_at(idx);
        if p.is_even() {
            states.push(p);
        }
        if states.len() > max_states {
            return Err(Error::BudgetExceeded {
                budget: max_states as u64,
                required: states.len() as u64,
            });
        }
    }
    let index: BTreeMap<&LatticePoint, usize> =
        states.iter().enumerate().map(|(i, p)| (p, i)).collect();
    let n = states.len();
    let mut p = vec![0.0; n * n];
    let mut pi = vec![0.0; n];
    for (i, x) in states.iter().enumerate() {
        pi[i] = modenv.pi(x);
        let mut inside = 0.0;
        let holding = modenv.two_step(x, x);
        p[i * n + i] = holding;
        inside += holding;
        for z in crate::lattice::even_neighbors(x)? {
            let prob = modenv.two_step(x, &z);
            if prob == 0.0 {
                continue;
            }
            if let Some(&j) = index.get(&z) {
                p[i * n + j] = prob;
                inside += prob;
            }
        }
        // fold the escaping two-step mass back into the diagonal
        p[i * n + i] += 1.0 - inside;
    }
    FiniteChain::new(states.iter().map(|s| s.to_string()).collect(), p, pi)
}

/// Dense two-buffer propagation engine over a moving bounding window.
///
/// The window grows by one cell per step and shrinks back to the bounding
/// box of the surviving (>= tau) mass, so the buffers track the effective
/// support rather than the full reachable box.
struct DenseFront<'a> {
    env: &'a Environment,
    d: usize,
    tau: f64,
    /// Inclusive per-axis bounds of the current buffer.
    bounds: Vec<(i64, i64)>,
    data: Vec<f64>,
    scratch: Vec<f64>,
    lost: f64,
}

fn volume(bounds: &[(i64, i64)]) -> usize {
    bounds.iter().map(|&(lo, hi)| (hi - lo + 1) as usize).product()
}

fn strides(bounds: &[(i64, i64)]) -> Vec<usize> {
    let d = bounds.len();
    let mut s = vec![1usize; d];
    for k in (0..d.saturating_sub(1)).rev() {
        s[k] = s[k + 1] * (bounds[k + 1].1 - bounds[k + 1].0 + 1) as usize;
    }
    s
}

impl<'a> DenseFront<'a> {
    fn new(env: &'a Environment, source: &LatticePoint, tau: f64) -> Result<Self> {
        if source.dim() != env.dim() {
            return Err(Error::DimensionMismatch {
                expected: env.dim(),
                got: source.dim(),
            });
        }
        if !(tau >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "truncation threshold {tau} must be >= 0"
            )));
        }
        if source.sup_norm() > env.radius() - 1 {
            return Err(Error::PointOutsideBox {
                point: source.coords.clone(),
                radius: env.radius() - 1,
            });
        }
        Ok(Self {
            env,
            d: env.dim(),
            tau,
            bounds: source.coords.iter().map(|&c| (c, c)).collect(),
            data: vec![1.0],
            scratch: Vec::new(),
            lost: 0.0,
        })
    }

    fn lost(&self) -> f64 {
        self.lost
    }

    fn mass_at(&self, p: &LatticePoint) -> f64 {
        let mut idx = 0usize;
        for (k, &c) in p.coords.iter().enumerate() {
            let (lo, hi) = self.bounds[k];
            if c < lo || c > hi {
                return 0.0;
            }
            idx = idx * (hi - lo + 1) as usize + (c - lo) as usize;
        }
        self.data[idx]
    }

    /// One exact push-forward: gather into the grown window, truncate,
    /// shrink to the surviving support.
    fn step(&mut self) -> Result<()> {
        let limit = self.env.radius() - 1;
        if self
            .bounds
            .iter()
            .any(|&(lo, hi)| lo.abs() > limit || hi.abs() > limit)
        {
            return Err(Error::PointOutsideBox {
                point: self.bounds.iter().map(|&(lo, _)| lo).collect(),
                radius: limit,
            });
        }

        // p_buf = mass / pi over the old window
        let old_bounds = self.bounds.clone();
        let old_strides = strides(&old_bounds);
        let p_buf = self.divide_by_pi(&old_bounds);

        // gather into the window grown by one in every direction
        let new_bounds: Vec<(i64, i64)> = old_bounds
            .iter()
            .map(|&(lo, hi)| (lo - 1, hi + 1))
            .collect();
        let new_strides = strides(&new_bounds);
        let new_volume = volume(&new_bounds);
        self.scratch.clear();
        self.scratch.resize(new_volume, 0.0);
        self.gather(&old_bounds, &old_strides, &p_buf, &new_bounds);

        // truncate and find the tight bounding box of the survivors
        let tau = self.tau;
        let last_len = (new_bounds[self.d - 1].1 - new_bounds[self.d - 1].0 + 1) as usize;
        let rows = new_volume / last_len;
        let stats: Vec<(f64, Vec<(i64, i64)>)> = self
            .scratch
            .par_chunks_mut(last_len)
            .enumerate()
            .map(|(row, chunk)| {
                let mut lost_here = 0.0;
                let mut lo_hi: Vec<(i64, i64)> = vec![(i64::MAX, i64::MIN); self.d];
                let outer = decode_outer_for(row, &new_bounds);
                for (j, v) in chunk.iter_mut().enumerate() {
                    if *v == 0.0 {
                        continue;
                    }
                    if *v < tau {
                        lost_here += *v;
                        *v = 0.0;
                        continue;
                    }
                    let c_last = new_bounds[self.d - 1].0 + j as i64;
                    for (k, &oc) in outer.iter().enumerate() {
                        lo_hi[k].0 = lo_hi[k].0.min(oc);
                        lo_hi[k].1 = lo_hi[k].1.max(oc);
                    }
                    lo_hi[self.d - 1].0 = lo_hi[self.d - 1].0.min(c_last);
                    lo_hi[self.d - 1].1 = lo_hi[self.d - 1].1.max(c_last);
                }
                (lost_here, lo_hi)
            })
            .collect();
        debug_assert_eq!(stats.len(), rows);
        let mut tight: Vec<(i64, i64)> = vec![(i64::MAX, i64::MIN); self.d];
        for (lost_here, lo_hi) in &stats {
            self.lost += lost_here;
            for k in 0..self.d {
                tight[k].0 = tight[k].0.min(lo_hi[k].0);
                tight[k].1 = tight[k].1.max(lo_hi[k].1);
            }
        }
        if tight[0].0 == i64::MAX {
            // everything truncated; keep a degenerate window at the origin
            tight = vec![(0, 0); self.d];
            self.data.clear();
            self.data.resize(1, 0.0);
            self.bounds = tight;
            return Ok(());
        }

        // repack the tight sub-box into the front buffer
        let tight_volume = volume(&tight);
        let tight_last = (tight[self.d - 1].1 - tight[self.d - 1].0 + 1) as usize;
        self.data.clear();
        self.data.resize(tight_volume, 0.0);
        {
            let scratch = &self.scratch;
            let d = self.d;
            let offset_last = (tight[d - 1].0 - new_bounds[d - 1].0) as usize;
            self.data
                .par_chunks_mut(tight_last)
                .enumerate()
                .for_each(|(row, chunk)| {
                    let outer = decode_outer_for(row, &tight);
                    let mut src = 0usize;
                    for (k, &oc) in outer.iter().enumerate() {
                        src += (oc - new_bounds[k].0) as usize * new_strides[k];
                    }
                    src += offset_last;
                    chunk.copy_from_slice(&scratch[src..src + tight_last]);
                });
        }
        self.bounds = tight;
        Ok(())
    }

    /// mass / pi per cell of the current window.
    fn divide_by_pi(&self, bounds: &[(i64, i64)]) -> Vec<f64> {
        let d = self.d;
        let env = self.env;
        let ewindow = env.window();
        let eside = ewindow.side() as usize;
        let estrides: Vec<usize> = (0..d).map(|k| eside.pow((d - 1 - k) as u32)).collect();
        let last_len = (bounds[d - 1].1 - bounds[d - 1].0 + 1) as usize;
        let mut out = vec![0.0; self.data.len()];
        out.par_chunks_mut(last_len)
            .zip(self.data.par_chunks(last_len))
            .enumerate()
            .for_each(|(row, (o, input))| {
                let outer = decode_outer_for(row, bounds);
                let mut esite = 0usize;
                for (k, &oc) in outer.iter().enumerate() {
                    esite += (oc + ewindow.radius()) as usize * estrides[k];
                }
                esite += (bounds[d - 1].0 + ewindow.radius()) as usize;
                for (j, (dst, &m)) in o.iter_mut().zip(input).enumerate() {
                    if m == 0.0 {
                        continue;
                    }
                    let site = esite + j;
                    let mut pi_x = 0.0;
                    for k in 0..d {
                        pi_x += env.bond_at_site(site, k);
                        pi_x += env.bond_at_site(site - estrides[k], k);
                    }
                    *dst = m / pi_x;
                }
            });
        out
    }

    /// out[y] = sum over axes and signs of w(source, y) * p_buf[source].
    fn gather(
        &mut self,
        old_bounds: &[(i64, i64)],
        old_strides: &[usize],
        p_buf: &[f64],
        new_bounds: &[(i64, i64)],
    ) {
        let d = self.d;
        let env = self.env;
        let ewindow = env.window();
        let eside = ewindow.side() as usize;
        let estrides: Vec<usize> = (0..d).map(|k| eside.pow((d - 1 - k) as u32)).collect();
        let last_len = (new_bounds[d - 1].1 - new_bounds[d - 1].0 + 1) as usize;
        let (olo_last, ohi_last) = old_bounds[d - 1];
        let nlo_last = new_bounds[d - 1].0;

        self.scratch
            .par_chunks_mut(last_len)
            .enumerate()
            .for_each(|(row, out_row)| {
                let outer = decode_outer_for(row, new_bounds);
                let outer_in_old = outer
                    .iter()
                    .enumerate()
                    .all(|(k, &c)| c >= old_bounds[k].0 && c <= old_bounds[k].1);

                // env site index of (outer, nlo_last)
                let mut esite_row = 0usize;
                for (k, &oc) in outer.iter().enumerate() {
                    esite_row += (oc + ewindow.radius()) as usize * estrides[k];
                }
                esite_row += (nlo_last + ewindow.radius()) as usize;

                // moves along the last axis, within this row
                if outer_in_old {
                    let mut src_base = 0usize;
                    for (k, &oc) in outer.iter().enumerate() {
                        src_base += (oc - old_bounds[k].0) as usize * old_strides[k];
                    }
                    // source at j - 1 (moving up): bond lower end = source
                    for c in olo_last..=ohi_last {
                        let src = p_buf[src_base + (c - olo_last) as usize];
                        if src == 0.0 {
                            continue;
                        }
                        let esite_src = esite_row + (c - nlo_last) as usize;
                        // up: source c -> target c+1, bond at source
                        out_row[(c + 1 - nlo_last) as usize] +=
                            src * env.bond_at_site(esite_src, d - 1);
                        // down: source c -> target c-1, bond at target
                        out_row[(c - 1 - nlo_last) as usize] +=
                            src * env.bond_at_site(esite_src - 1, d - 1);
                    }
                }

                // moves across the other axes: whole-row transfer from the
                // neighboring outer rows
                for axis in 0..d.saturating_sub(1) {
                    for sign in [-1i64, 1] {
                        let c_src = outer[axis] + sign;
                        if c_src < old_bounds[axis].0 || c_src > old_bounds[axis].1 {
                            continue;
                        }
                        let mut ok = true;
                        let mut src_base = 0usize;
                        for (k, &oc) in outer.iter().enumerate() {
                            let c = if k == axis { c_src } else { oc };
                            if c < old_bounds[k].0 || c > old_bounds[k].1 {
                                ok = false;
                                break;
                            }
                            src_base += (c - old_bounds[k].0) as usize * old_strides[k];
                        }
                        if !ok {
                            continue;
                        }
                        // inner range where the source row overlaps
                        for c in olo_last..=ohi_last {
                            let src = p_buf[src_base + (c - olo_last) as usize];
                            if src == 0.0 {
                                continue;
                            }
                            let esite_tgt = esite_row + (c - nlo_last) as usize;
                            // bond between source and target along `axis`:
                            // lower endpoint is the one with the smaller
                            // coordinate on that axis
                            let esite_bond = if sign > 0 {
                                esite_tgt // target below source
                            } else {
                                esite_tgt - estrides[axis] // source below target
                            };
                            out_row[(c - nlo_last) as usize] +=
                                src * env.bond_at_site(esite_bond, axis);
                        }
                    }
                }
            });
    }

    fn to_sparse(&self) -> SparseDistribution {
        let d = self.d;
        let last_len = (self.bounds[d - 1].1 - self.bounds[d - 1].0 + 1) as usize;
        let mut entries = BTreeMap::new();
        for (row, chunk) in self.data.chunks(last_len).enumerate() {
            let outer = decode_outer_for(row, &self.bounds);
            for (j, &v) in chunk.iter().enumerate() {
                if v > 0.0 {
                    let mut coords = outer.clone();
                    coords.push(self.bounds[d - 1].0 + j as i64);
                    entries.insert(LatticePoint::new(coords), v);
                }
            }
        }
        SparseDistribution::from_parts(d, entries, self.lost)
    }
}

/// Outer (all but last axis) coordinates of a row index.
fn decode_outer_for(mut row: usize, bounds: &[(i64, i64)]) -> Vec<i64> {
    let d = bounds.len();
    let mut outer = vec![0i64; d - 1];
    for k in (0..d - 1).rev() {
        let len = (bounds[k].1 - bounds[k].0 + 1) as usize;
        outer[k] = bounds[k].0 + (row % len) as i64;
        row /= len;
    }
    outer
}
