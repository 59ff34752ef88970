//! Sampling, storing, and transforming i.i.d. conductance fields.
//!
//! A field assigns one conductance in `(0, 1]` to every nearest-neighbor
//! bond with both endpoints in the window `[-R, R]^d`. Values are a pure
//! function of `(d, radius, law, seed)`: each bond slot is hashed with a
//! counter-based generator, so construction parallelizes over disjoint slot
//! ranges with identical output.
//!
//! Canonical bond order: sites lexicographically (axis 0 most significant),
//! then axis `0..d` for the bond from a site towards its positive neighbor.
//! Bonds leaving the window are not stored.

use crate::error::Error;
use crate::lattice::{Bond, LatticePoint, Window};
use crate::rng;
use crate::Result;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Marginal law of one bond conductance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConductanceLaw {
    /// Exact power CDF `P(w <= a) = a^gamma` on `[0, 1]`.
    PolyTail { gamma: f64 },
    /// I.i.d. site variables with the power CDF; a bond takes the minimum of
    /// its two endpoint values.
    SiteMin { gamma: f64 },
    /// Every bond equals `value`.
    Constant { value: f64 },
}

impl ConductanceLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ConductanceLaw::PolyTail { gamma } | ConductanceLaw::SiteMin { gamma } => {
                if !(gamma > 0.0) || !gamma.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "gamma must be positive and finite, got {gamma}"
                    )));
                }
            }
            ConductanceLaw::Constant { value } => {
                if !(value > 0.0 && value <= 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "constant conductance must lie in (0, 1], got {value}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn tag(&self) -> u8 {
        match self {
            ConductanceLaw::PolyTail { .. } => 0,
            ConductanceLaw::SiteMin { .. } => 1,
            ConductanceLaw::Constant { .. } => 2,
        }
    }

    fn param(&self) -> f64 {
        match *self {
            ConductanceLaw::PolyTail { gamma } | ConductanceLaw::SiteMin { gamma } => gamma,
            ConductanceLaw::Constant { value } => value,
        }
    }

    fn from_tag(tag: u8, param: f64) -> Result<Self> {
        let law = match tag {
            0 => ConductanceLaw::PolyTail { gamma: param },
            1 => ConductanceLaw::SiteMin { gamma: param },
            2 => ConductanceLaw::Constant { value: param },
            other => {
                return Err(Error::MalformedFile(format!("unknown law tag {other}")))
            }
        };
        law.validate()?;
        Ok(law)
    }
}

impl std::fmt::Display for ConductanceLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            ConductanceLaw::PolyTail { gamma } => write!(f, "poly-tail(gamma={gamma})"),
            ConductanceLaw::SiteMin { gamma } => write!(f, "site-min(gamma={gamma})"),
            ConductanceLaw::Constant { value } => write!(f, "constant({value})"),
        }
    }
}

// Domain separation for the site variables of the site-min law.
const SITE_STREAM_SALT: u64 = 0x736974_655f7661;

#[derive(Clone)]
enum Storage {
    /// Every bond equals the value; nothing is materialized.
    Uniform(f64),
    /// One slot per (site, axis); slots whose bond leaves the window hold NaN.
    Dense(Vec<f64>),
}

/// An immutable conductance field on the bonds of `[-R, R]^d`.
#[derive(Clone)]
pub struct Environment {
    d: usize,
    radius: i64,
    law: ConductanceLaw,
    seed: u64,
    window: Window,
    storage: Storage,
}

impl std::fmt::Debug for Environment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Environment")
            .field("d", &self.d)
            .field("radius", &self.radius)
            .field("law", &self.law)
            .field("seed", &self.seed)
            .field(
                "storage",
                &match self.storage {
                    Storage::Uniform(v) => format!("uniform({v})"),
                    Storage::Dense(ref v) => format!("dense[{}]", v.len()),
                },
            )
            .finish()
    }
}

impl PartialEq for Environment {
    fn eq(&self, other: &Self) -> bool {
        if (self.d, self.radius, self.seed) != (other.d, other.radius, other.seed)
            || self.law != other.law
        {
            return false;
        }
        self.iter_bonds_with_values()
            .zip(other.iter_bonds_with_values())
            .all(|((sa, aa, va), (sb, ab, vb))| sa == sb && aa == ab && va == vb)
    }
}

/// Samples a fresh i.i.d. field. See the module docs for the slot layout.
pub fn sample_environment(
    d: usize,
    radius: i64,
    law: ConductanceLaw,
    seed: u64,
) -> Result<Environment> {
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    if radius < 1 {
        return Err(Error::InvalidParameter(format!(
            "radius must be >= 1, got {radius}"
        )));
    }
    law.validate()?;
    let window = Window::new(d, radius);
    let sites = window.checked_point_count()?;
    let slots = sites
        .checked_mul(d)
        .ok_or(Error::CapacityExceeded {
            required: sites as u128 * d as u128,
            limit: usize::MAX as u128,
        })?;

    let storage = match law {
        ConductanceLaw::Constant { value } => Storage::Uniform(value),
        ConductanceLaw::PolyTail { gamma } => {
            let inv_gamma = 1.0 / gamma;
            let mut values = vec![f64::NAN; slots];
            values
                .par_chunks_mut(1 << 16)
                .enumerate()
                .for_each(|(chunk, out)| {
                    let base = chunk << 16;
                    for (k, v) in out.iter_mut().enumerate() {
                        let slot = base + k;
                        if slot_is_stored(&window, slot, d) {
                            *v = rng::uniform_open_closed(seed, slot as u64).powf(inv_gamma);
                        }
                    }
                });
            Storage::Dense(values)
        }
        ConductanceLaw::SiteMin { gamma } => {
            let inv_gamma = 1.0 / gamma;
            let site_seed = rng::keyed(seed, SITE_STREAM_SALT);
            let site_value =
                |site: usize| rng::uniform_open_closed(site_seed, site as u64).powf(inv_gamma);
            let side = window.side() as usize;
            let mut values = vec![f64::NAN; slots];
            values
                .par_chunks_mut(1 << 16)
                .enumerate()
                .for_each(|(chunk, out)| {
                    let base = chunk << 16;
                    for (k, v) in out.iter_mut().enumerate() {
                        let slot = base + k;
                        if slot_is_stored(&window, slot, d) {
                            let site = slot / d;
                            let axis = slot % d;
                            // neighbor along `axis` is `side^(d-1-axis)` later in
                            // lexicographic site order
                            let stride = side.pow((d - 1 - axis) as u32);
                            *v = site_value(site).min(site_value(site + stride));
                        }
                    }
                });
            Storage::Dense(values)
        }
    };

    Ok(Environment {
        d,
        radius,
        law,
        seed,
        window,
        storage,
    })
}

/// Whether the slot's bond has both endpoints inside the window, i.e. the
/// site coordinate along the slot axis is below the upper face.
fn slot_is_stored(window: &Window, slot: usize, d: usize) -> bool {
    let site = slot / d;
    let axis = slot % d;
    let side = window.side() as usize;
    let stride = side.pow((d - 1 - axis) as u32);
    (site / stride) % side < side - 1
}

impl Environment {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn law(&self) -> ConductanceLaw {
        self.law
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn window(&self) -> Window {
        self.window
    }

    /// Number of stored bonds, `d * 2R * (2R + 1)^(d-1)`.
    pub fn bond_count(&self) -> u64 {
        let side = (2 * self.radius + 1) as u64;
        self.d as u64 * (side - 1) * side.pow((self.d - 1) as u32)
    }

    /// The stored conductance of a bond; symmetric in endpoint order.
    pub fn conductance(&self, bond: &Bond) -> Result<f64> {
        let (lo, hi) = bond.endpoints();
        if lo.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: lo.dim(),
            });
        }
        if !self.window.contains(&lo) || !self.window.contains(&hi) {
            return Err(Error::BondOutsideBox {
                point: lo.coords.clone(),
                axis: bond.axis(),
                radius: self.radius,
            });
        }
        let site = self.window.index_of(&lo)?;
        Ok(self.value_at_slot(site * self.d + bond.axis()))
    }

    /// Fast path: value of the bond from the site with array index
    /// `site_index` towards its positive neighbor along `axis`. The caller
    /// guarantees the bond is stored.
    #[inline]
    pub fn bond_at_site(&self, site_index: usize, axis: usize) -> f64 {
        self.value_at_slot(site_index * self.d + axis)
    }

    #[inline]
    fn value_at_slot(&self, slot: usize) -> f64 {
        match self.storage {
            Storage::Uniform(v) => v,
            Storage::Dense(ref values) => values[slot],
        }
    }

    /// Iterates the stored bonds in canonical order as
    /// `(site_index, axis, value)`.
    pub fn iter_bonds_with_values(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let d = self.d;
        let window = self.window;
        let slots = self.window.checked_point_count().unwrap() * d;
        (0..slots).filter_map(move |slot| {
            slot_is_stored(&window, slot, d)
                .then(|| (slot / d, slot % d, self.value_at_slot(slot)))
        })
    }

    /// A copy of this field with the given bonds overwritten. The result is
    /// always densely stored; it is no longer re-derivable from its seed,
    /// but saves and loads like any other field.
    pub fn with_overrides(&self, overrides: &[(Bond, f64)]) -> Result<Environment> {
        let mut values = match self.storage {
            Storage::Dense(ref v) => v.clone(),
            Storage::Uniform(c) => {
                let sites = self.window.checked_point_count()?;
                let mut v = vec![f64::NAN; sites * self.d];
                for (slot, val) in v.iter_mut().enumerate() {
                    if slot_is_stored(&self.window, slot, self.d) {
                        *val = c;
                    }
                }
                v
            }
        };
        for (bond, value) in overrides {
            if !(*value > 0.0 && *value <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "override {value} outside (0, 1]"
                )));
            }
            let (lo, hi) = bond.endpoints();
            if !self.window.contains(&lo) || !self.window.contains(&hi) {
                return Err(Error::BondOutsideBox {
                    point: lo.coords.clone(),
                    axis: bond.axis(),
                    radius: self.radius,
                });
            }
            let site = self.window.index_of(&lo)?;
            values[site * self.d + bond.axis()] = *value;
        }
        Ok(Environment {
            storage: Storage::Dense(values),
            ..self.clone()
        })
    }

    /// Smallest conductance among bonds with both endpoints in `[-N, N]^d`.
    pub fn min_over_plain_box(&self, n: i64) -> Result<f64> {
        if n < 1 || n > self.radius {
            return Err(Error::InvalidParameter(format!(
                "box half-width {n} must lie in [1, {}]",
                self.radius
            )));
        }
        if let Storage::Uniform(c) = self.storage {
            return Ok(c);
        }
        let mut min = f64::INFINITY;
        let mut coords = vec![-n; self.d];
        loop {
            let site = self
                .window
                .index_of(&LatticePoint::new(coords.clone()))
                .unwrap();
            for axis in 0..self.d {
                if coords[axis] < n {
                    min = min.min(self.bond_at_site(site, axis));
                }
            }
            let mut k = self.d;
            loop {
                if k == 0 {
                    return Ok(min);
                }
                k -= 1;
                if coords[k] < n {
                    coords[k] += 1;
                    for c in coords.iter_mut().skip(k + 1) {
                        *c = -n;
                    }
                    break;
                }
            }
        }
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = ChecksumWriter::new(BufWriter::new(file));
        w.raw(b"RCLB")?;
        w.put(&FORMAT_VERSION.to_le_bytes())?;
        w.put(&(self.d as u16).to_le_bytes())?;
        w.put(&(self.radius as u32).to_le_bytes())?;
        w.put(&[self.law.tag()])?;
        w.put(&self.law.param().to_le_bytes())?;
        w.put(&self.seed.to_le_bytes())?;
        w.put(&self.bond_count().to_le_bytes())?;
        for (_, _, value) in self.iter_bonds_with_values() {
            w.put(&value.to_le_bytes())?;
        }
        let checksum = w.checksum();
        let mut inner = w.into_inner();
        inner.write_all(&checksum.to_le_bytes())?;
        inner.flush()?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Environment> {
        let file = std::fs::File::open(path)?;
        let mut r = ChecksumReader::new(BufReader::new(file));
        let mut magic = [0u8; 4];
        r.raw(&mut magic)?;
        if &magic != b"RCLB" {
            return Err(Error::BadMagic);
        }
        let version = u16::from_le_bytes(r.take()?);
        if version > FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let d = u16::from_le_bytes(r.take()?) as usize;
        let radius = u32::from_le_bytes(r.take()?) as i64;
        let law_tag = r.take::<1>()?[0];
        let param = f64::from_le_bytes(r.take()?);
        let law = ConductanceLaw::from_tag(law_tag, param)?;
        let seed = u64::from_le_bytes(r.take()?);
        let count = u64::from_le_bytes(r.take()?);
        if d == 0 || radius < 1 {
            return Err(Error::MalformedFile(format!(
                "bad geometry d={d} radius={radius}"
            )));
        }
        let window = Window::new(d, radius);
        let sites = window.checked_point_count()?;
        let expected = {
            let side = (2 * radius + 1) as u64;
            d as u64 * (side - 1) * side.pow((d - 1) as u32)
        };
        if count != expected {
            return Err(Error::MalformedFile(format!(
                "bond count {count} does not match geometry ({expected} expected)"
            )));
        }
        let mut values = vec![f64::NAN; sites * d];
        for slot in 0..values.len() {
            if slot_is_stored(&window, slot, d) {
                let v = f64::from_le_bytes(r.take()?);
                if !(v > 0.0 && v <= 1.0) {
                    return Err(Error::MalformedFile(format!(
                        "conductance {v} outside (0, 1]"
                    )));
                }
                values[slot] = v;
            }
        }
        let computed = r.checksum();
        let stored = u64::from_le_bytes(r.take_unhashed()?);
        if stored != computed {
            return Err(Error::ChecksumMismatch { stored, computed });
        }
        Ok(Environment {
            d,
            radius,
            law,
            seed,
            window,
            storage: Storage::Dense(values),
        })
    }
}

/// Restricts the field to the protected box `[-(N+1), N+1]^d`; every bond
/// with an endpoint outside it reads as 1. Defined on all of `Z^d`.
#[derive(Debug, Clone, Copy)]
pub struct ModifiedEnvironment<'a> {
    base: &'a Environment,
    n_scale: i64,
}

/// Resets all bonds outside the protected box `[-(N+1), N+1]^d` to 1.
pub fn modify(base: &Environment, n: i64) -> Result<ModifiedEnvironment<'_>> {
    if n < 0 {
        return Err(Error::InvalidParameter("N must be >= 0".into()));
    }
    if n + 1 > base.radius() {
        return Err(Error::InvalidParameter(format!(
            "protected box of half-width {} exceeds stored radius {}",
            n + 1,
            base.radius()
        )));
    }
    Ok(ModifiedEnvironment { base, n_scale: n })
}

impl<'a> ModifiedEnvironment<'a> {
    pub fn base(&self) -> &'a Environment {
        self.base
    }

    pub fn n_scale(&self) -> i64 {
        self.n_scale
    }

    /// Half-width of the protected box, `N + 1`.
    pub fn protected_radius(&self) -> i64 {
        self.n_scale + 1
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// The modified conductance; total (any bond of `Z^d`).
    pub fn conductance(&self, bond: &Bond) -> f64 {
        let (lo, hi) = bond.endpoints();
        let r = self.protected_radius();
        if lo.sup_norm() <= r && hi.sup_norm() <= r {
            self.base
                .conductance(bond)
                .expect("protected box fits the stored window")
        } else {
            1.0
        }
    }

    /// Sum of the 2d incident modified conductances; defined everywhere.
    pub fn pi(&self, x: &LatticePoint) -> f64 {
        let mut total = 0.0;
        for axis in 0..self.dim() {
            total += self.conductance(&Bond::from_lower(x.offset(axis, -1), axis));
            total += self.conductance(&Bond::from_lower(x.clone(), axis));
        }
        total
    }

    /// One-step transition probability of the walk in the modified field.
    pub fn transition(&self, from: &LatticePoint, to: &LatticePoint) -> f64 {
        if from.l1_distance(to) != 1 {
            return 0.0;
        }
        let bond = Bond::new(from.clone(), to.clone()).unwrap();
        self.conductance(&bond) / self.pi(from)
    }

    /// Two-step transition probability (both arguments on one parity class).
    pub fn two_step(&self, from: &LatticePoint, to: &LatticePoint) -> f64 {
        let mut total = 0.0;
        for mid in from.neighbors() {
            if mid.l1_distance(to) == 1 {
                total += self.transition(from, &mid) * self.transition(&mid, to);
            }
        }
        total
    }
}

/// `log(min conductance over the bonds of [-N, N]^d) / log N`.
///
/// For the power-tail law this converges to `-d / gamma` as `N` grows.
pub fn min_conductance_statistic(env: &Environment, n: i64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "N must be >= 2 for a meaningful log N, got {n}"
        )));
    }
    let min = env.min_over_plain_box(n)?;
    Ok(min.ln() / (n as f64).ln())
}

const FORMAT_VERSION: u16 = 1;

// FNV-1a, 64-bit. The checksum covers every byte after the magic and before
// the checksum field itself.
struct Fnv1a(u64);

impl Fnv1a {
    fn new() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }

    fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
}

struct ChecksumWriter<W: Write> {
    inner: W,
    hash: Fnv1a,
}

impl<W: Write> ChecksumWriter<W> {
    fn new(inner: W) -> Self {
        Self {
            inner,
            hash: Fnv1a::new(),
        }
    }

    /// Writes without hashing (magic bytes).
    fn raw(&mut self, bytes: &[u8]) -> Result<()> {
        self.inner.write_all(bytes)?;
        Ok(())
    }

    fn put(&mut self, bytes: &[u8]) -> Result<()> {
        self.hash.update(bytes);
        self.inner.write_all(bytes)?;
        Ok(())
    }

    fn checksum(&self) -> u64 {
        self.hash.0
    }

    fn into_inner(self) -> W {
        self.inner
    }
}

struct ChecksumReader<R: Read> {
    inner: R,
    hash: Fnv1a,
}

impl<R: Read> ChecksumReader<R> {
    fn new(inner: R) -> Self {
        Self {
            inner,
            hash: Fnv1a::new(),
        }
    }

    fn raw(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner
            .read_exact(buf)
            .map_err(|e| Error::MalformedFile(format!("short read: {e}")))
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.raw(&mut buf)?;
        self.hash.update(&buf);
        Ok(buf)
    }

    fn take_unhashed<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.raw(&mut buf)?;
        Ok(buf)
    }

    fn checksum(&self) -> u64 {
        self.hash.0
    }
}
