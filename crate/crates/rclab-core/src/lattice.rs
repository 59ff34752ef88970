//! Geometry of `Z^d`: points, nearest-neighbor bonds, scaled boxes
//! `[-3N, 3N]^d` with their inner boundaries, plain windows `[-R, R]^d`
//! with a bijective array index, the direction/sign decomposition used for
//! trap placement, and the even sublattice.

use crate::error::Error;
use crate::Result;
use serde::{Deserialize, Serialize};

/// A point of `Z^d`, stored as signed integer coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticePoint {
    pub coords: Vec<i64>,
}

impl LatticePoint {
    pub fn new(coords: Vec<i64>) -> Self {
        assert!(!coords.is_empty(), "dimension must be at least 1");
        Self { coords }
    }

    pub fn origin(d: usize) -> Self {
        Self::new(vec![0; d])
    }

    /// Canonical unit vector along `axis` (0-based).
    pub fn unit(d: usize, axis: usize) -> Self {
        assert!(axis < d);
        let mut coords = vec![0; d];
        coords[axis] = 1;
        Self::new(coords)
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// The point shifted by `delta` along `axis`.
    pub fn offset(&self, axis: usize, delta: i64) -> Self {
        let mut coords = self.coords.clone();
        coords[axis] += delta;
        Self::new(coords)
    }

    pub fn l1_distance(&self, other: &Self) -> u64 {
        assert_eq!(self.dim(), other.dim());
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| a.abs_diff(*b))
            .sum()
    }

    pub fn sup_norm(&self) -> i64 {
        self.coords.iter().map(|c| c.abs()).max().unwrap()
    }

    /// The 2d nearest neighbors, ordered by axis then sign (-, +).
    pub fn neighbors(&self) -> Vec<LatticePoint> {
        let mut out = Vec::with_capacity(2 * self.dim());
        for axis in 0..self.dim() {
            out.push(self.offset(axis, -1));
            out.push(self.offset(axis, 1));
        }
        out
    }

    /// True when the coordinate sum is even, i.e. the point belongs to the
    /// even sublattice.
    pub fn is_even(&self) -> bool {
        self.coords.iter().sum::<i64>() % 2 == 0
    }
}

impl std::fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// An unordered nearest-neighbor bond, stored canonically as its lower
/// endpoint plus the axis towards the upper one, so `(a, b)` and `(b, a)`
/// compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bond {
    lower: LatticePoint,
    axis: usize,
}

impl Bond {
    pub fn new(a: LatticePoint, b: LatticePoint) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::DimensionMismatch {
                expected: a.dim(),
                got: b.dim(),
            });
        }
        if a.l1_distance(&b) != 1 {
            return Err(Error::NotAdjacent(a.coords, b.coords));
        }
        let axis = (0..a.dim())
            .find(|&i| a.coords[i] != b.coords[i])
            .expect("distinct points differ somewhere");
        let lower = if a.coords[axis] < b.coords[axis] { a } else { b };
        Ok(Self { lower, axis })
    }

    /// Bond from `p` towards `p + e_axis`.
    pub fn from_lower(lower: LatticePoint, axis: usize) -> Self {
        assert!(axis < lower.dim());
        Self { lower, axis }
    }

    pub fn lower(&self) -> &LatticePoint {
        &self.lower
    }

    pub fn axis(&self) -> usize {
        self.axis
    }

    pub fn endpoints(&self) -> (LatticePoint, LatticePoint) {
        (self.lower.clone(), self.lower.offset(self.axis, 1))
    }
}

impl std::fmt::Display for Bond {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (a, b) = self.endpoints();
        write!(f, "[{a},{b}]")
    }
}

/// The box `B_N = [-3N, 3N]^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaledBox {
    d: usize,
    scale: u32,
}

impl ScaledBox {
    /// `B_N` in dimension `d`. `scale` is the `N` of the box, its extent is
    /// `3N` in every coordinate.
    pub fn new(d: usize, scale: u32) -> Self {
        assert!(d >= 1);
        Self { d, scale }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    /// Half-width `3N` of the box.
    pub fn extent(&self) -> i64 {
        3 * i64::from(self.scale)
    }

    /// Number of lattice points, `(6N + 1)^d`.
    pub fn point_count(&self) -> u128 {
        let side = 6 * u128::from(self.scale) + 1;
        (0..self.d).fold(1u128, |acc, _| acc * side)
    }

    /// Whether every coordinate of `p` lies in `[-3N, 3N]`.
    pub fn contains(&self, p: &LatticePoint) -> Result<bool> {
        if p.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: p.dim(),
            });
        }
        Ok(p.sup_norm() <= self.extent())
    }

    /// The set of points of the box adjacent to some point outside it:
    /// exactly those with some coordinate of absolute value `3N`.
    ///
    /// Materializes the shell; intended for small boxes. Hitting detection
    /// in the walker tests membership arithmetically instead.
    pub fn inner_boundary(&self) -> Vec<LatticePoint> {
        let e = self.extent();
        let mut out = Vec::new();
        let mut coords = vec![-e; self.d];
        loop {
            if coords.iter().any(|c| c.abs() == e) {
                out.push(LatticePoint::new(coords.clone()));
            }
            // odometer increment
            let mut k = self.d;
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                if coords[k] < e {
                    coords[k] += 1;
                    for c in coords.iter_mut().skip(k + 1) {
                        *c = -e;
                    }
                    break;
                }
            }
        }
    }

    /// Membership in the inner boundary without materializing it.
    pub fn on_inner_boundary(&self, p: &LatticePoint) -> Result<bool> {
        Ok(self.contains(p)? && p.sup_norm() == self.extent())
    }
}

/// The plain window `[-R, R]^d` backing array-indexed kernels, distinct from
/// the `3N`-scaled [`ScaledBox`] so the two conventions never mix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    d: usize,
    radius: i64,
}

impl Window {
    pub fn new(d: usize, radius: i64) -> Self {
        assert!(d >= 1 && radius >= 0);
        Self { d, radius }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn side(&self) -> i64 {
        2 * self.radius + 1
    }

    pub fn contains(&self, p: &LatticePoint) -> bool {
        p.dim() == self.d && p.sup_norm() <= self.radius
    }

    /// Number of lattice points `(2R + 1)^d`, checked against overflow.
    pub fn checked_point_count(&self) -> Result<usize> {
        let side = self.side() as u128;
        let mut count: u128 = 1;
        for _ in 0..self.d {
            count = count
                .checked_mul(side)
                .ok_or(Error::CapacityExceeded {
                    required: u128::MAX,
                    limit: usize::MAX as u128,
                })?;
        }
        if count > usize::MAX as u128 {
            return Err(Error::CapacityExceeded {
                required: count,
                limit: usize::MAX as u128,
            });
        }
        Ok(count as usize)
    }

    /// Bijective mixed-radix index of a point, lexicographic in the
    /// coordinates (axis 0 most significant).
    pub fn index_of(&self, p: &LatticePoint) -> Result<usize> {
        if p.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: p.dim(),
            });
        }
        if !self.contains(p) {
            return Err(Error::PointOutsideBox {
                point: p.coords.clone(),
                radius: self.radius,
            });
        }
        let side = self.side() as usize;
        let mut idx = 0usize;
        for &c in &p.coords {
            idx = idx * side + (c + self.radius) as usize;
        }
        Ok(idx)
    }

    /// Inverse of [`Window::index_of`].
    pub fn point_at(&self, mut idx: usize) -> LatticePoint {
        let side = self.side() as usize;
        let mut coords = vec![0i64; self.d];
        for k in (0..self.d).rev() {
            coords[k] = (idx % side) as i64 - self.radius;
            idx /= side;
        }
        LatticePoint::new(coords)
    }
}

/// The largest axis index achieving the maximal `|x_i|`, and the sign of
/// that coordinate (`+1` when it is `>= 0`).
///
/// Axes are 0-based; ties, including the origin, resolve to the last axis.
/// Trap placement depends on this exact tie-break, so it is fixed here once.
pub fn direction_and_sign(x: &LatticePoint) -> (usize, i8) {
    let max_abs = x.coords.iter().map(|c| c.abs()).max().unwrap();
    let i0 = (0..x.dim())
        .rev()
        .find(|&i| x.coords[i].abs() == max_abs)
        .unwrap();
    let eps = if x.coords[i0] >= 0 { 1 } else { -1 };
    (i0, eps)
}

/// Neighbors of an even point in the even-sublattice graph: the `2d^2`
/// even points at L1 distance exactly 2 (straight two-step moves plus
/// diagonal moves).
pub fn even_neighbors(x: &LatticePoint) -> Result<Vec<LatticePoint>> {
    if !x.is_even() {
        return Err(Error::OddPoint(x.coords.clone()));
    }
    let d = x.dim();
    let mut out = Vec::with_capacity(2 * d * d);
    for i in 0..d {
        out.push(x.offset(i, -2));
        out.push(x.offset(i, 2));
    }
    for i in 0..d {
        for j in (i + 1)..d {
            for (si, sj) in [(-1, -1), (-1, 1), (1, -1), (1, 1)] {
                out.push(x.offset(i, si).offset(j, sj));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_contains_endpoint_and_rejects_beyond() {
        let b = ScaledBox::new(1, 1);
        assert!(b.contains(&LatticePoint::new(vec![3])).unwrap());
        assert!(!b.contains(&LatticePoint::new(vec![4])).unwrap());
    }

    #[test]
    fn box_contains_rejects_dimension_mismatch() {
        let b = ScaledBox::new(2, 1);
        let err = b.contains(&LatticePoint::new(vec![0])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn box_point_count_d2() {
        let b = ScaledBox::new(2, 1);
        let mut count = 0u32;
        for x in -4..=4i64 {
            for y in -4..=4i64 {
                if b.contains(&LatticePoint::new(vec![x, y])).unwrap() {
                    count += 1;
                }
            }
        }
        assert_eq!(count, 49); // (6*1+1)^2
        assert_eq!(b.point_count(), 49);
    }

    #[test]
    fn inner_boundary_d1_and_d2() {
        let b1 = ScaledBox::new(1, 1);
        let mut pts = b1.inner_boundary();
        pts.sort();
        assert_eq!(
            pts,
            vec![LatticePoint::new(vec![-3]), LatticePoint::new(vec![3])]
        );

        let b2 = ScaledBox::new(2, 1);
        let boundary = b2.inner_boundary();
        assert_eq!(boundary.len(), 24); // 7^2 - 5^2
        for p in &boundary {
            assert!(b2.contains(p).unwrap());
            assert!(p.neighbors().iter().any(|q| !b2.contains(q).unwrap()));
        }
    }

    #[test]
    fn inner_boundary_count_formula_small_dims() {
        for d in 1..=3usize {
            for n in 1..=5u32 {
                let b = ScaledBox::new(d, n);
                let side = 6 * u128::from(n) + 1;
                let inner = side - 2;
                let expected = (0..d).fold(1u128, |a, _| a * side)
                    - (0..d).fold(1u128, |a, _| a * inner);
                assert_eq!(
                    b.inner_boundary().len() as u128,
                    expected,
                    "d={d} N={n}"
                );
            }
        }
    }

    #[test]
    fn direction_and_sign_examples() {
        // unique max on axis 0
        let (i0, eps) = direction_and_sign(&LatticePoint::new(vec![3, 1]));
        assert_eq!((i0, eps), (0, 1));
        // tie at |.| = 2: largest index wins, coordinate is +2
        let (i0, eps) = direction_and_sign(&LatticePoint::new(vec![-2, 2]));
        assert_eq!((i0, eps), (1, 1));
        // all ties at the origin: last axis, sign +
        let (i0, eps) = direction_and_sign(&LatticePoint::origin(5));
        assert_eq!((i0, eps), (4, 1));
        // negative dominant coordinate
        let (i0, eps) = direction_and_sign(&LatticePoint::new(vec![1, -5, 2]));
        assert_eq!((i0, eps), (1, -1));
    }

    #[test]
    fn direction_and_sign_scale_invariant() {
        for coords in [vec![2, -3], vec![-1, -1], vec![0, 7], vec![5, 5]] {
            let p = LatticePoint::new(coords.clone());
            let scaled = LatticePoint::new(coords.iter().map(|c| c * 4).collect());
            assert_eq!(direction_and_sign(&p), direction_and_sign(&scaled));
        }
    }

    #[test]
    fn even_neighbors_d1_and_d2() {
        let n1 = even_neighbors(&LatticePoint::origin(1)).unwrap();
        let mut c1: Vec<i64> = n1.iter().map(|p| p.coords[0]).collect();
        c1.sort();
        assert_eq!(c1, vec![-2, 2]);

        let mut n2 = even_neighbors(&LatticePoint::origin(2)).unwrap();
        n2.sort();
        let mut expected: Vec<LatticePoint> = vec![
            vec![-2, 0],
            vec![2, 0],
            vec![0, -2],
            vec![0, 2],
            vec![-1, -1],
            vec![-1, 1],
            vec![1, -1],
            vec![1, 1],
        ]
        .into_iter()
        .map(LatticePoint::new)
        .collect();
        expected.sort();
        assert_eq!(n2, expected);
        assert_eq!(n2.len(), 2 * 2 * 2); // 2d^2
    }

    #[test]
    fn even_neighbors_rejects_odd_points() {
        let err = even_neighbors(&LatticePoint::new(vec![1, 0])).unwrap_err();
        assert!(matches!(err, Error::OddPoint(_)));
    }

    #[test]
    fn even_neighbors_parity_and_symmetry() {
        let x = LatticePoint::new(vec![2, -1, 1]);
        assert!(x.is_even());
        for y in even_neighbors(&x).unwrap() {
            assert!(y.is_even());
            assert_eq!(x.l1_distance(&y), 2);
            assert!(even_neighbors(&y).unwrap().contains(&x));
        }
    }

    #[test]
    fn even_neighbor_count_matches_formula() {
        for d in 1..=4usize {
            let n = even_neighbors(&LatticePoint::origin(d)).unwrap();
            assert_eq!(n.len(), 2 * d * d);
        }
    }

    #[test]
    fn bond_is_unordered_and_rejects_non_neighbors() {
        let a = LatticePoint::new(vec![0, 0]);
        let b = LatticePoint::new(vec![0, 1]);
        let ab = Bond::new(a.clone(), b.clone()).unwrap();
        let ba = Bond::new(b.clone(), a.clone()).unwrap();
        assert_eq!(ab, ba);
        assert!(Bond::new(a.clone(), LatticePoint::new(vec![1, 1])).is_err());
        assert!(Bond::new(a, LatticePoint::new(vec![0, 0])).is_err());
    }

    #[test]
    fn window_index_roundtrip() {
        let w = Window::new(3, 2);
        let count = w.checked_point_count().unwrap();
        assert_eq!(count, 125);
        for idx in 0..count {
            let p = w.point_at(idx);
            assert_eq!(w.index_of(&p).unwrap(), idx);
        }
    }

    #[test]
    fn window_rejects_outside_points() {
        let w = Window::new(2, 3);
        let err = w.index_of(&LatticePoint::new(vec![4, 0])).unwrap_err();
        assert!(matches!(err, Error::PointOutsideBox { .. }));
    }
}
