//! Charts, points and cells for the three flat model surfaces.
//!
//! Every chart is unit-normalized: the square `Q = [0,1]²`, the annulus
//! `A = S¹ × [0,1]` (axis 0 periodic) and the torus `T²` (both axes
//! periodic). Physical sub-annuli are handled through [`Band`], an affine
//! reparametrization of a horizontal strip onto the unit interval.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("point ({x}, {y}) is outside the {kind:?} chart")]
    OutsideChart { kind: ChartKind, x: f64, y: f64 },
    #[error("coordinate is not finite")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartKind {
    Square,
    Annulus,
    Torus,
}

/// A unit chart together with its per-axis wrap flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "ChartKind", into = "ChartKind")]
pub struct Chart {
    kind: ChartKind,
}

impl From<ChartKind> for Chart {
    fn from(kind: ChartKind) -> Self {
        Chart { kind }
    }
}

impl From<Chart> for ChartKind {
    fn from(c: Chart) -> Self {
        c.kind
    }
}

impl Chart {
    pub const SQUARE: Chart = Chart { kind: ChartKind::Square };
    pub const ANNULUS: Chart = Chart { kind: ChartKind::Annulus };
    pub const TORUS: Chart = Chart { kind: ChartKind::Torus };

    pub fn new(kind: ChartKind) -> Self {
        Chart { kind }
    }

    pub fn kind(&self) -> ChartKind {
        self.kind
    }

    /// Wrap flags `[x, y]`.
    pub fn periodic_axes(&self) -> [bool; 2] {
        match self.kind {
            ChartKind::Square => [false, false],
            ChartKind::Annulus => [true, false],
            ChartKind::Torus => [true, true],
        }
    }

    pub fn wraps_x(&self) -> bool {
        self.periodic_axes()[0]
    }

    pub fn wraps_y(&self) -> bool {
        self.periodic_axes()[1]
    }

    /// Validates `(x, y)` and reduces wrapped coordinates mod 1.
    pub fn point(&self, x: f64, y: f64) -> Result<ChartPoint, DomainError> {
        if !x.is_finite() || !y.is_finite() {
            return Err(DomainError::NonFinite);
        }
        let [wx, wy] = self.periodic_axes();
        let ok = |v: f64, wrap: bool| wrap || (0.0..=1.0).contains(&v);
        if !ok(x, wx) || !ok(y, wy) {
            return Err(DomainError::OutsideChart { kind: self.kind, x, y });
        }
        Ok(ChartPoint {
            x: if wx { wrap_unit(x) } else { x },
            y: if wy { wrap_unit(y) } else { y },
        })
    }

    pub fn contains(&self, p: ChartPoint) -> bool {
        let [wx, wy] = self.periodic_axes();
        let ok = |v: f64, wrap: bool| {
            v.is_finite() && if wrap { (0.0..1.0).contains(&v) } else { (0.0..=1.0).contains(&v) }
        };
        ok(p.x, wx) && ok(p.y, wy)
    }

    /// Signed displacement `q − p`, using the shortest representative on
    /// wrapped axes.
    pub fn delta(&self, p: ChartPoint, q: ChartPoint) -> (f64, f64) {
        let [wx, wy] = self.periodic_axes();
        let d = |a: f64, b: f64, wrap: bool| {
            let d = b - a;
            if wrap {
                d - d.round()
            } else {
                d
            }
        };
        (d(p.x, q.x, wx), d(p.y, q.y, wy))
    }

    pub fn distance(&self, p: ChartPoint, q: ChartPoint) -> f64 {
        let (dx, dy) = self.delta(p, q);
        dx.hypot(dy)
    }

    /// Grid cell containing `p` at resolution `n`.
    ///
    /// The closing edge `1.0` of an unwrapped axis belongs to cell `n − 1`.
    pub fn cell_of(&self, p: ChartPoint, n: usize) -> CellIndex {
        let [wx, wy] = self.periodic_axes();
        CellIndex {
            i: axis_cell(p.x, n, wx),
            j: axis_cell(p.y, n, wy),
        }
    }

    /// Center of a cell as a chart point.
    pub fn cell_center(&self, c: CellIndex, n: usize) -> ChartPoint {
        let nf = n as f64;
        ChartPoint {
            x: (c.i as f64 + 0.5) / nf,
            y: (c.j as f64 + 0.5) / nf,
        }
    }
}

/// Free-function form of [`Chart::distance`].
pub fn chart_distance(c: Chart, p: ChartPoint, q: ChartPoint) -> f64 {
    c.distance(p, q)
}

/// Free-function form of [`Chart::cell_of`].
pub fn cell_of(c: Chart, p: ChartPoint, n: usize) -> CellIndex {
    c.cell_of(p, n)
}

fn axis_cell(v: f64, n: usize, wrap: bool) -> usize {
    let nf = n as f64;
    if wrap {
        let k = (wrap_unit(v) * nf).floor() as i64;
        k.rem_euclid(n as i64) as usize
    } else {
        let k = (v * nf).floor();
        k.clamp(0.0, nf - 1.0) as usize
    }
}

/// Reduces to `[0, 1)`; `rem_euclid` can return exactly 1.0 for tiny
/// negative inputs.
pub fn wrap_unit(v: f64) -> f64 {
    let r = v.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub x: f64,
    pub y: f64,
}

impl ChartPoint {
    /// Unchecked constructor; use [`Chart::point`] to validate.
    pub const fn new(x: f64, y: f64) -> Self {
        ChartPoint { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub i: usize,
    pub j: usize,
}

impl CellIndex {
    pub const fn new(i: usize, j: usize) -> Self {
        CellIndex { i, j }
    }
}

/// A horizontal strip `[lo, hi]` of the annulus, reparametrized affinely
/// onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub const UNIT: Band = Band { lo: 0.0, hi: 1.0 };

    pub fn new(lo: f64, hi: f64) -> Option<Self> {
        (lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo < hi && hi <= 1.0).then_some(Band { lo, hi })
    }

    pub fn height(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, y: f64) -> bool {
        (self.lo..=self.hi).contains(&y)
    }

    pub fn to_unit(&self, y: f64) -> f64 {
        (y - self.lo) / self.height()
    }

    pub fn from_unit(&self, v: f64) -> f64 {
        self.lo + v * self.height()
    }

    /// Widens the band so that the current band maps onto `[δ, 1 − δ]` of
    /// the result.
    pub fn padded(&self, delta: f64) -> Option<Band> {
        if !(0.0..0.5).contains(&delta) {
            return None;
        }
        let pad = delta * self.height() / (1.0 - 2.0 * delta);
        Band::new(self.lo - pad, self.hi + pad)
    }

    /// Annulus point to band-normalized point (x unchanged).
    pub fn point_to_unit(&self, p: ChartPoint) -> ChartPoint {
        ChartPoint::new(p.x, self.to_unit(p.y))
    }

    pub fn point_from_unit(&self, q: ChartPoint) -> ChartPoint {
        ChartPoint::new(q.x, self.from_unit(q.y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64, y: f64) -> ChartPoint {
        ChartPoint::new(x, y)
    }

    #[test]
    fn torus_distance_wraps() {
        let d = Chart::TORUS.distance(p(0.95, 0.5), p(0.05, 0.5));
        assert!((d - 0.1).abs() < 1e-12);
    }

    #[test]
    fn square_diagonal() {
        let d = Chart::SQUARE.distance(p(0.0, 0.0), p(1.0, 1.0));
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn self_distance_is_zero() {
        for c in [Chart::SQUARE, Chart::ANNULUS, Chart::TORUS] {
            assert_eq!(c.distance(p(0.3, 0.7), p(0.3, 0.7)), 0.0);
        }
    }

    #[test]
    fn cell_examples() {
        assert_eq!(Chart::SQUARE.cell_of(p(0.5, 0.5), 4), CellIndex::new(2, 2));
        assert_eq!(Chart::TORUS.cell_of(p(1.0 - 1e-12, 0.0), 4), CellIndex::new(3, 0));
        assert_eq!(Chart::SQUARE.cell_of(p(1.0, 1.0), 4), CellIndex::new(3, 3));
    }

    #[test]
    fn wrap_flags() {
        assert_eq!(Chart::SQUARE.periodic_axes(), [false, false]);
        assert_eq!(Chart::ANNULUS.periodic_axes(), [true, false]);
        assert_eq!(Chart::TORUS.periodic_axes(), [true, true]);
    }

    #[test]
    fn point_validation() {
        assert!(Chart::SQUARE.point(1.2, 0.5).is_err());
        assert!(Chart::ANNULUS.point(0.5, -0.1).is_err());
        let q = Chart::ANNULUS.point(-0.25, 0.5).unwrap();
        assert!((q.x - 0.75).abs() < 1e-15);
        let q = Chart::TORUS.point(-1e-18, 2.5).unwrap();
        assert!(q.x < 1.0 && q.x >= 0.0);
        assert!((q.y - 0.5).abs() < 1e-15);
        assert!(Chart::SQUARE.point(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn band_padding_maps_onto_margin() {
        let e = Band::new(0.2, 0.8).unwrap();
        let frame = e.padded(0.1).unwrap();
        assert!((frame.to_unit(0.2) - 0.1).abs() < 1e-12);
        assert!((frame.to_unit(0.8) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn triangle_inequality_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for c in [Chart::SQUARE, Chart::ANNULUS, Chart::TORUS] {
            for _ in 0..1000 {
                let mut r = || p(rng.gen(), rng.gen());
                let (a, b, d) = (r(), r(), r());
                assert!(c.distance(a, d) <= c.distance(a, b) + c.distance(b, d) + f64::EPSILON * 4.0);
            }
        }
    }

    proptest! {
        #[test]
        fn cell_stable_under_unit_shift(x in 0.0f64..1.0, y in 0.0f64..1.0, n in 2usize..200) {
            let base = Chart::TORUS.cell_of(p(x, y), n);
            let shifted = Chart::TORUS.point(x + 1.0, y).unwrap();
            // Adding 1.0 can round x by one ulp; only exact-boundary inputs could move.
            let on_edge = ((x * n as f64).fract() - 0.0).abs() < 1e-9
                || ((x * n as f64).fract() - 1.0).abs() < 1e-9;
            if !on_edge {
                prop_assert_eq!(Chart::TORUS.cell_of(shifted, n), base);
            }
            let sa = Chart::ANNULUS.point(x - 1.0, y).unwrap();
            if !on_edge {
                prop_assert_eq!(Chart::ANNULUS.cell_of(sa, n), Chart::ANNULUS.cell_of(p(x, y), n));
            }
        }

        #[test]
        fn distance_symmetric(ax in 0.0f64..1.0, ay in 0.0f64..1.0, bx in 0.0f64..1.0, by in 0.0f64..1.0) {
            for c in [Chart::SQUARE, Chart::ANNULUS, Chart::TORUS] {
                prop_assert_eq!(c.distance(p(ax, ay), p(bx, by)), c.distance(p(bx, by), p(ax, ay)));
            }
        }
    }
}
