//! Exactly area-preserving self-maps of the unit charts.
//!
//! Every map evaluates forward and inverse in closed form (bump flows by
//! negating the flow time) and reports the lifted horizontal displacement
//! alongside the image, which is what rotation numbers are built from.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bump_flow::{BumpError, SeparatorSpec};
use crate::geometry::{Band, Chart, ChartKind, ChartPoint, DomainError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("maps live on different charts ({0:?} vs {1:?})")]
    ChartMismatch(ChartKind, ChartKind),
    #[error("parameter {name} = {value} outside [{min}, {max}]")]
    InvalidParam { name: &'static str, value: f64, min: f64, max: f64 },
    #[error("{kind} is not defined on the {chart:?} chart")]
    UnsupportedChart { kind: &'static str, chart: ChartKind },
    #[error("orbit left the confinement strip [{lo}, {hi}] at y = {y}")]
    Escaped { y: f64, lo: f64, hi: f64 },
    #[error("finite-difference step {0} outside [1e-7, 1e-4]")]
    BadStep(f64),
    #[error(transparent)]
    Bump(#[from] BumpError),
}

/// Affine shear profile `τ(y) = offset + slope·y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shear {
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub slope: f64,
}

impl Shear {
    pub fn eval(&self, y: f64) -> f64 {
        self.offset + self.slope * y
    }
}

/// Periodic kick shape `s(θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KickShape {
    #[default]
    Sine,
    /// `sin θ + ratio·sin 2θ`
    TwoMode { ratio: f64 },
}

impl KickShape {
    fn eval(&self, theta: f64) -> f64 {
        match *self {
            KickShape::Sine => theta.sin(),
            KickShape::TwoMode { ratio } => theta.sin() + ratio * (2.0 * theta).sin(),
        }
    }
}

/// How a kicked twist treats the vertical coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum YBoundary {
    /// Reduce `y` mod 1 (the map then factors through the torus).
    Wrap,
    /// Fail with [`MapError::Escaped`] when an image leaves `[lo, hi]`.
    Confine { lo: f64, hi: f64 },
}

impl Default for YBoundary {
    fn default() -> Self {
        YBoundary::Confine { lo: 0.05, hi: 0.95 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MapKind {
    Identity,
    /// `(x, y) ↦ (x + τ(y), y)`
    IntegrableTwist { shear: Shear },
    /// `y' = y + (k/2π)·s(2πx)`, `(x, y) ↦ (x + y', y')`
    KickedTwist { k: f64, shape: KickShape, boundary: YBoundary },
    /// Three-bump separator on `Q`, or on an annulus band when `frame` is set.
    BumpFlow { spec: SeparatorSpec, frame: Option<Band> },
    /// Applied first to last.
    Composite(Vec<AreaMap>),
    Inverse(Box<AreaMap>),
    /// `h ∘ g ∘ h⁻¹`
    Conjugate { g: Box<AreaMap>, h: Box<AreaMap> },
}

/// A named scalar parameter with its admissible range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapParam {
    pub name: &'static str,
    pub value: f64,
    pub min: f64,
    pub max: f64,
}

impl MapParam {
    fn check(self) -> Result<(), MapError> {
        if self.value.is_finite() && (self.min..=self.max).contains(&self.value) {
            Ok(())
        } else {
            Err(MapError::InvalidParam { name: self.name, value: self.value, min: self.min, max: self.max })
        }
    }
}

/// Finite-difference step used by Jacobian audits; bump-flow conjugates have
/// third derivatives near 1e7, so the central difference needs the smallest
/// admissible step.
pub const DEFAULT_FD_STEP: f64 = 1e-7;

pub const MAX_KICK: f64 = 10.0;
pub const MAX_SHEAR: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MapConfig", into = "MapConfig")]
pub struct AreaMap {
    chart: Chart,
    kind: MapKind,
}

impl AreaMap {
    /// Unvalidated; constructors below validate.
    pub(crate) fn from_parts(chart: Chart, kind: MapKind) -> Self {
        AreaMap { chart, kind }
    }

    pub fn identity(chart: Chart) -> Self {
        AreaMap { chart, kind: MapKind::Identity }
    }

    pub fn integrable_twist(chart: Chart, shear: Shear) -> Result<Self, MapError> {
        let m = AreaMap { chart, kind: MapKind::IntegrableTwist { shear } };
        m.validate()?;
        Ok(m)
    }

    /// `τ(y) = y`.
    pub fn standard_twist(chart: Chart) -> Self {
        AreaMap { chart, kind: MapKind::IntegrableTwist { shear: Shear { offset: 0.0, slope: 1.0 } } }
    }

    /// Rigid rotation by `alpha`.
    pub fn rotation(chart: Chart, alpha: f64) -> Result<Self, MapError> {
        Self::integrable_twist(chart, Shear { offset: alpha, slope: 0.0 })
    }

    pub fn kicked_twist(chart: Chart, k: f64, shape: KickShape, boundary: YBoundary) -> Result<Self, MapError> {
        let m = AreaMap { chart, kind: MapKind::KickedTwist { k, shape, boundary } };
        m.validate()?;
        Ok(m)
    }

    /// Sine kick with the chart's default boundary rule: wrap on the torus,
    /// confine to `[0.05, 0.95]` on the annulus.
    pub fn standard_kicked(chart: Chart, k: f64) -> Result<Self, MapError> {
        let boundary = if chart.wraps_y() { YBoundary::Wrap } else { YBoundary::default() };
        Self::kicked_twist(chart, k, KickShape::Sine, boundary)
    }

    pub fn composite(maps: Vec<AreaMap>) -> Result<Self, MapError> {
        let chart = maps.first().map(|m| m.chart).ok_or(MapError::InvalidParam {
            name: "composite.len",
            value: 0.0,
            min: 1.0,
            max: f64::INFINITY,
        })?;
        for m in &maps {
            ensure_same_chart(chart, m.chart)?;
        }
        Ok(AreaMap { chart, kind: MapKind::Composite(maps) })
    }

    pub fn inverse(&self) -> Self {
        match &self.kind {
            MapKind::Inverse(inner) => (**inner).clone(),
            _ => AreaMap { chart: self.chart, kind: MapKind::Inverse(Box::new(self.clone())) },
        }
    }

    /// `self^n` as a composite; `n = 1` returns a clone.
    pub fn power(&self, n: usize) -> Self {
        match n {
            0 => AreaMap::identity(self.chart),
            1 => self.clone(),
            _ => AreaMap { chart: self.chart, kind: MapKind::Composite(vec![self.clone(); n]) },
        }
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }

    pub fn kind(&self) -> &MapKind {
        &self.kind
    }

    pub fn params(&self) -> Vec<MapParam> {
        match &self.kind {
            MapKind::IntegrableTwist { shear } => vec![
                MapParam { name: "offset", value: shear.offset, min: -MAX_SHEAR, max: MAX_SHEAR },
                MapParam { name: "slope", value: shear.slope, min: -MAX_SHEAR, max: MAX_SHEAR },
            ],
            MapKind::KickedTwist { k, shape, boundary } => {
                let mut v = vec![MapParam { name: "k", value: *k, min: 0.0, max: MAX_KICK }];
                if let KickShape::TwoMode { ratio } = shape {
                    v.push(MapParam { name: "ratio", value: *ratio, min: -1.0, max: 1.0 });
                }
                if let YBoundary::Confine { lo, hi } = boundary {
                    v.push(MapParam { name: "confine.lo", value: *lo, min: 0.0, max: *hi });
                    v.push(MapParam { name: "confine.hi", value: *hi, min: *lo, max: 1.0 });
                }
                v
            }
            _ => Vec::new(),
        }
    }

    fn validate(&self) -> Result<(), MapError> {
        for p in self.params() {
            p.check()?;
        }
        match &self.kind {
            MapKind::IntegrableTwist { .. } if !self.chart.wraps_x() => {
                Err(MapError::UnsupportedChart { kind: "integrable_twist", chart: self.chart.kind() })
            }
            MapKind::KickedTwist { .. } if !self.chart.wraps_x() => {
                Err(MapError::UnsupportedChart { kind: "kicked_twist", chart: self.chart.kind() })
            }
            MapKind::KickedTwist { boundary: YBoundary::Confine { .. }, .. } if self.chart.wraps_y() => {
                Err(MapError::UnsupportedChart { kind: "confined kicked_twist", chart: self.chart.kind() })
            }
            MapKind::BumpFlow { spec, frame } => {
                spec.validate()?;
                match (frame, self.chart.kind()) {
                    (None, ChartKind::Square) | (Some(_), ChartKind::Annulus) => Ok(()),
                    _ => Err(MapError::UnsupportedChart { kind: "bump_flow", chart: self.chart.kind() }),
                }
            }
            MapKind::Composite(ms) => {
                if ms.is_empty() {
                    return Err(MapError::InvalidParam { name: "composite.len", value: 0.0, min: 1.0, max: f64::INFINITY });
                }
                ms.iter().try_for_each(|m| {
                    ensure_same_chart(self.chart, m.chart)?;
                    m.validate()
                })
            }
            MapKind::Inverse(m) => {
                ensure_same_chart(self.chart, m.chart)?;
                m.validate()
            }
            MapKind::Conjugate { g, h } => {
                ensure_same_chart(self.chart, g.chart)?;
                ensure_same_chart(self.chart, h.chart)?;
                g.validate()?;
                h.validate()
            }
            _ => Ok(()),
        }
    }

    pub fn apply(&self, p: ChartPoint) -> Result<ChartPoint, MapError> {
        self.check_input(p)?;
        Ok(self.eval(p, false)?.0)
    }

    pub fn apply_inverse(&self, p: ChartPoint) -> Result<ChartPoint, MapError> {
        self.check_input(p)?;
        Ok(self.eval(p, true)?.0)
    }

    /// Image together with the lifted (unreduced) horizontal displacement.
    pub fn apply_lifted(&self, p: ChartPoint) -> Result<(ChartPoint, f64), MapError> {
        self.check_input(p)?;
        self.eval(p, false)
    }

    fn check_input(&self, p: ChartPoint) -> Result<(), MapError> {
        if self.chart.contains(p) {
            Ok(())
        } else {
            Err(DomainError::OutsideChart { kind: self.chart.kind(), x: p.x, y: p.y }.into())
        }
    }

    fn eval(&self, p: ChartPoint, inverse: bool) -> Result<(ChartPoint, f64), MapError> {
        let wrap = crate::geometry::wrap_unit;
        match &self.kind {
            MapKind::Identity => Ok((p, 0.0)),
            MapKind::IntegrableTwist { shear } => {
                let dx = if inverse { -shear.eval(p.y) } else { shear.eval(p.y) };
                Ok((ChartPoint::new(wrap(p.x + dx), p.y), dx))
            }
            MapKind::KickedTwist { k, shape, boundary } => {
                let kick = |x: f64| k / TAU * shape.eval(TAU * x);
                let reduce_y = |y: f64| -> Result<f64, MapError> {
                    match *boundary {
                        YBoundary::Wrap => Ok(wrap(y)),
                        YBoundary::Confine { lo, hi } => {
                            if (lo..=hi).contains(&y) {
                                Ok(y)
                            } else {
                                Err(MapError::Escaped { y, lo, hi })
                            }
                        }
                    }
                };
                if inverse {
                    let x = wrap(p.x - p.y);
                    let y = reduce_y(p.y - kick(x))?;
                    Ok((ChartPoint::new(x, y), -p.y))
                } else {
                    let y1 = p.y + kick(p.x);
                    let x1 = wrap(p.x + y1);
                    Ok((ChartPoint::new(x1, reduce_y(y1)?), y1))
                }
            }
            MapKind::BumpFlow { spec, frame } => {
                let q = match frame {
                    Some(b) if !b.contains(p.y) => return Ok((p, 0.0)),
                    Some(b) => b.point_to_unit(p),
                    None => p,
                };
                let r = if inverse { spec.apply_inverse(q)? } else { spec.apply(q)? };
                if r == q {
                    return Ok((p, 0.0));
                }
                let out = match frame {
                    Some(b) => b.point_from_unit(r),
                    None => r,
                };
                Ok((out, r.x - q.x))
            }
            MapKind::Composite(ms) => {
                let mut q = p;
                let mut total = 0.0;
                let mut step = |m: &AreaMap| -> Result<(), MapError> {
                    let (r, d) = m.eval(q, inverse)?;
                    q = r;
                    total += d;
                    Ok(())
                };
                if inverse {
                    ms.iter().rev().try_for_each(&mut step)?;
                } else {
                    ms.iter().try_for_each(&mut step)?;
                }
                Ok((q, total))
            }
            MapKind::Inverse(m) => m.eval(p, !inverse),
            MapKind::Conjugate { g, h } => {
                // forward: h ∘ g ∘ h⁻¹; inverse: h ∘ g⁻¹ ∘ h⁻¹
                let (a, d1) = h.eval(p, true)?;
                let (b, d2) = g.eval(a, inverse)?;
                let (c, d3) = h.eval(b, false)?;
                Ok((c, d1 + d2 + d3))
            }
        }
    }

    /// Central finite-difference Jacobian determinant (one-sided at the edge
    /// of an unwrapped axis).
    pub fn jacobian_det(&self, p: ChartPoint, step: f64) -> Result<f64, MapError> {
        if !(1e-7..=1e-4).contains(&step) {
            return Err(MapError::BadStep(step));
        }
        self.check_input(p)?;
        let [wx, wy] = self.chart.periodic_axes();
        let column = |dx: f64, dy: f64, wrap: bool, coord: f64| -> Result<(f64, f64), MapError> {
            let (minus, plus) = if wrap {
                (-step, step)
            } else {
                (if coord - step < 0.0 { 0.0 } else { -step }, if coord + step > 1.0 { 0.0 } else { step })
            };
            let at = |s: f64| {
                let q = ChartPoint::new(p.x + s * dx, p.y + s * dy);
                let q = ChartPoint::new(
                    if wx { crate::geometry::wrap_unit(q.x) } else { q.x },
                    if wy { crate::geometry::wrap_unit(q.y) } else { q.y },
                );
                self.eval(q, false).map(|r| r.0)
            };
            let (a, b) = (at(minus)?, at(plus)?);
            let h = plus - minus;
            let d = |u: f64, v: f64| {
                let d = v - u;
                d - d.round()
            };
            Ok((d(a.x, b.x) / h, d(a.y, b.y) / h))
        };
        let (xx, yx) = column(1.0, 0.0, wx, p.x)?;
        let (xy, yy) = column(0.0, 1.0, wy, p.y)?;
        Ok(xx * yy - xy * yx)
    }
}

fn ensure_same_chart(a: Chart, b: Chart) -> Result<(), MapError> {
    if a == b {
        Ok(())
    } else {
        Err(MapError::ChartMismatch(a.kind(), b.kind()))
    }
}

/// Free-function forms matching the operation names.
pub fn apply(m: &AreaMap, p: ChartPoint) -> Result<ChartPoint, MapError> {
    m.apply(p)
}

pub fn apply_inverse(m: &AreaMap, p: ChartPoint) -> Result<ChartPoint, MapError> {
    m.apply_inverse(p)
}

pub fn jacobian_det(m: &AreaMap, p: ChartPoint, step: f64) -> Result<f64, MapError> {
    m.jacobian_det(p, step)
}

/// `g̃ = h g h⁻¹`.
pub fn conjugate(g: &AreaMap, h: &AreaMap) -> Result<AreaMap, MapError> {
    ensure_same_chart(g.chart, h.chart)?;
    Ok(AreaMap { chart: g.chart, kind: MapKind::Conjugate { g: Box::new(g.clone()), h: Box::new(h.clone()) } })
}

/// JSON form: `{"kind": "...", "chart": "...", "params": {...}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart: Option<ChartKind>,
    #[serde(flatten)]
    pub spec: MapSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum MapSpec {
    Identity,
    IntegrableTwist(Shear),
    KickedTwist {
        k: f64,
        #[serde(default)]
        shape: KickShape,
        #[serde(default)]
        boundary: Option<YBoundary>,
    },
    BumpFlow {
        spec: SeparatorSpec,
        #[serde(default)]
        frame: Option<Band>,
    },
    Composite { maps: Vec<MapConfig> },
    Inverse { map: Box<MapConfig> },
    Conjugate { g: Box<MapConfig>, h: Box<MapConfig> },
}

impl TryFrom<MapConfig> for AreaMap {
    type Error = MapError;

    fn try_from(c: MapConfig) -> Result<Self, MapError> {
        let chart = c.chart.map(Chart::new);
        let need = |default: ChartKind| Chart::new(c.chart.unwrap_or(default));
        let m = match c.spec {
            MapSpec::Identity => AreaMap::identity(need(ChartKind::Annulus)),
            MapSpec::IntegrableTwist(shear) => AreaMap::integrable_twist(need(ChartKind::Annulus), shear)?,
            MapSpec::KickedTwist { k, shape, boundary } => {
                let chart = need(ChartKind::Annulus);
                let boundary = boundary.unwrap_or(if chart.wraps_y() { YBoundary::Wrap } else { YBoundary::default() });
                AreaMap::kicked_twist(chart, k, shape, boundary)?
            }
            MapSpec::BumpFlow { spec, frame } => {
                let chart = need(if frame.is_some() { ChartKind::Annulus } else { ChartKind::Square });
                let m = AreaMap { chart, kind: MapKind::BumpFlow { spec, frame } };
                m.validate()?;
                m
            }
            MapSpec::Composite { maps } => {
                let maps = maps.into_iter().map(AreaMap::try_from).collect::<Result<Vec<_>, _>>()?;
                AreaMap::composite(maps)?
            }
            MapSpec::Inverse { map } => AreaMap::try_from(*map)?.inverse(),
            MapSpec::Conjugate { g, h } => conjugate(&AreaMap::try_from(*g)?, &AreaMap::try_from(*h)?)?,
        };
        if let Some(chart) = chart {
            ensure_same_chart(chart, m.chart)?;
        }
        Ok(m)
    }
}

impl From<AreaMap> for MapConfig {
    fn from(m: AreaMap) -> Self {
        let spec = match m.kind {
            MapKind::Identity => MapSpec::Identity,
            MapKind::IntegrableTwist { shear } => MapSpec::IntegrableTwist(shear),
            MapKind::KickedTwist { k, shape, boundary } => MapSpec::KickedTwist { k, shape, boundary: Some(boundary) },
            MapKind::BumpFlow { spec, frame } => MapSpec::BumpFlow { spec, frame },
            MapKind::Composite(ms) => MapSpec::Composite { maps: ms.into_iter().map(MapConfig::from).collect() },
            MapKind::Inverse(inner) => MapSpec::Inverse { map: Box::new(MapConfig::from(*inner)) },
            MapKind::Conjugate { g, h } => {
                MapSpec::Conjugate { g: Box::new(MapConfig::from(*g)), h: Box::new(MapConfig::from(*h)) }
            }
        };
        MapConfig { chart: Some(m.chart.kind()), spec }
    }
}
