//! Compactly supported Hamiltonian bump flows on the unit square and the
//! three-bump separator built from them.
//!
//! A bump `α(x, y) = η(x)·ρ(y)` lives in the rectangle
//! `R = [c − w, c + w] × [0, 1]`. On the core zone `|x − c| ≤ a·w`,
//! `ρ(y) = 1` the field `(−∂_y α, ∂_x α)` is exactly `(0, 1)`, so the flow
//! translates the vertical segment `{c} × [δ, 1 − δ]` upward at unit speed
//! for as long as it stays inside that zone.
//!
//! Both profiles are spliced from the C^∞ transition
//! `S(s) = e^{−1/s} / (e^{−1/s} + e^{−1/(1−s)})`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Band, Chart, ChartPoint};
use crate::map_zoo::{AreaMap, MapKind};

/// Largest RK4 step used by [`flow`].
pub const MAX_STEP: f64 = 2.5e-4;

/// Tolerance for trajectories leaving `Q` through roundoff.
pub const EXIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BumpError {
    #[error("invalid separator spec: {0}")]
    Spec(String),
    #[error("flow time {0} outside [-1, 1]")]
    TimeOutOfRange(f64),
    #[error("point ({x}, {y}) is outside the unit square")]
    OutsideSquare { x: f64, y: f64 },
    #[error("trajectory left the unit square at ({x}, {y})")]
    Integration { x: f64, y: f64 },
}

/// Smooth transition: 0 for `s ≤ 0`, 1 for `s ≥ 1`.
fn smooth_step(s: f64) -> (f64, f64) {
    if s <= 0.0 {
        return (0.0, 0.0);
    }
    if s >= 1.0 {
        return (1.0, 0.0);
    }
    let f = |u: f64| (-1.0 / u).exp();
    let (a, b) = (f(s), f(1.0 - s));
    let (da, db) = (a / (s * s), b / ((1.0 - s) * (1.0 - s)));
    let sum = a + b;
    (a / sum, (da * b + a * db) / (sum * sum))
}

/// One bump Hamiltonian: center line `x = center`, support half-width
/// `half_width`, translation core of half-width `plateau·half_width`, and a
/// vertical cutoff that vanishes on `[0, ramp_start·δ]` and equals 1 on
/// `[ramp_end·δ, 1 − ramp_end·δ]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpSpec {
    pub center: f64,
    pub half_width: f64,
    #[serde(default = "default_plateau")]
    pub plateau: f64,
    pub delta: f64,
    #[serde(default = "default_ramp_start")]
    pub ramp_start: f64,
    #[serde(default = "default_ramp_end")]
    pub ramp_end: f64,
}

fn default_plateau() -> f64 {
    0.3
}
fn default_ramp_start() -> f64 {
    0.05
}
fn default_ramp_end() -> f64 {
    0.6
}

impl BumpSpec {
    pub fn new(center: f64, half_width: f64, delta: f64) -> Self {
        BumpSpec {
            center,
            half_width,
            plateau: default_plateau(),
            delta,
            ramp_start: default_ramp_start(),
            ramp_end: default_ramp_end(),
        }
    }

    pub fn validate(&self) -> Result<(), BumpError> {
        let err = |m: &str| Err(BumpError::Spec(format!("{m}: {self:?}")));
        if !(self.half_width > 0.0 && self.center - self.half_width > 0.0 && self.center + self.half_width < 1.0) {
            return err("rectangle must lie inside (0,1) x [0,1]");
        }
        if !(self.plateau > 0.0 && self.plateau < 1.0) {
            return err("plateau fraction must be in (0,1)");
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return err("delta must be in (0, 1/2)");
        }
        if !(0.0 < self.ramp_start && self.ramp_start < self.ramp_end && self.ramp_end < 1.0) {
            return err("need 0 < ramp_start < ramp_end < 1");
        }
        Ok(())
    }

    /// `[x_lo, x_hi]` of the support rectangle.
    pub fn rectangle(&self) -> (f64, f64) {
        (self.center - self.half_width, self.center + self.half_width)
    }

    pub fn in_support(&self, p: ChartPoint) -> bool {
        (p.x - self.center).abs() < self.half_width
    }

    /// Largest `ε` such that the segment `{c} × [δ, 1 − δ]` shifted by any
    /// `|s| < ε` stays in the translation core.
    pub fn epsilon(&self) -> f64 {
        let core_lo = self.ramp_end * self.delta;
        let core_hi = 1.0 - core_lo;
        (self.delta - core_lo).min(core_hi - (1.0 - self.delta))
    }

    /// Distance from `∂Q` inside which the bump is exactly zero.
    pub fn boundary_margin(&self) -> f64 {
        let (lo, hi) = self.rectangle();
        (self.ramp_start * self.delta).min(lo).min(1.0 - hi)
    }

    /// `η(x)` and `η'(x)`.
    fn eta(&self, x: f64) -> (f64, f64) {
        let u = (x - self.center) / self.half_width;
        let au = u.abs();
        if au <= self.plateau {
            return (x - self.center, 1.0);
        }
        if au >= 1.0 {
            return (0.0, 0.0);
        }
        let span = 1.0 - self.plateau;
        let (s, ds) = smooth_step((au - self.plateau) / span);
        let beta = 1.0 - s;
        // d(beta)/dx = -S'(..) * sign(u) / (span * w)
        let dbeta = -ds * u.signum() / (span * self.half_width);
        let d = x - self.center;
        (d * beta, beta + d * dbeta)
    }

    /// `ρ(y)` and `ρ'(y)`.
    fn rho(&self, y: f64) -> (f64, f64) {
        let lo0 = self.ramp_start * self.delta;
        let lo1 = self.ramp_end * self.delta;
        let span = lo1 - lo0;
        if y < 0.5 {
            let (s, ds) = smooth_step((y - lo0) / span);
            (s, ds / span)
        } else {
            let (s, ds) = smooth_step((1.0 - y - lo0) / span);
            (s, -ds / span)
        }
    }

    pub fn hamiltonian(&self, p: ChartPoint) -> f64 {
        self.eta(p.x).0 * self.rho(p.y).0
    }

    /// `(−∂_y α, ∂_x α)` from the closed-form profile derivatives.
    pub fn field(&self, p: ChartPoint) -> (f64, f64) {
        let (eta, deta) = self.eta(p.x);
        let (rho, drho) = self.rho(p.y);
        (-eta * drho, deta * rho)
    }

    /// `∂_x F_x + ∂_y F_y`, which is `−η'ρ' + η'ρ'`.
    pub fn divergence(&self, p: ChartPoint) -> f64 {
        let (_, deta) = self.eta(p.x);
        let (_, drho) = self.rho(p.y);
        -deta * drho + deta * drho
    }
}

/// Free-function form of [`BumpSpec::field`].
pub fn hamiltonian_field(b: &BumpSpec, p: ChartPoint) -> (f64, f64) {
    b.field(p)
}

/// Time-`t` map of the bump field, by fixed-step classical RK4.
pub fn flow(b: &BumpSpec, t: f64, p: ChartPoint) -> Result<ChartPoint, BumpError> {
    if !(-1.0..=1.0).contains(&t) {
        return Err(BumpError::TimeOutOfRange(t));
    }
    if !(0.0..=1.0).contains(&p.x) || !(0.0..=1.0).contains(&p.y) {
        return Err(BumpError::OutsideSquare { x: p.x, y: p.y });
    }
    if t == 0.0 || !b.in_support(p) {
        return Ok(p);
    }
    let steps = (t.abs() / MAX_STEP).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let (mut x, mut y) = (p.x, p.y);
    for _ in 0..steps {
        let k1 = b.field(ChartPoint::new(x, y));
        let k2 = b.field(ChartPoint::new(x + 0.5 * h * k1.0, y + 0.5 * h * k1.1));
        let k3 = b.field(ChartPoint::new(x + 0.5 * h * k2.0, y + 0.5 * h * k2.1));
        let k4 = b.field(ChartPoint::new(x + h * k3.0, y + h * k3.1));
        x += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        y += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    }
    let out = |v: f64| !(-EXIT_TOLERANCE..=1.0 + EXIT_TOLERANCE).contains(&v);
    if out(x) || out(y) {
        return Err(BumpError::Integration { x, y });
    }
    Ok(ChartPoint::new(x.clamp(0.0, 1.0), y.clamp(0.0, 1.0)))
}

/// Three bumps and their flow times; evaluates
/// `h = φ₁^{t₁} ∘ φ₂^{t₂} ∘ φ₃^{t₃}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatorSpec {
    pub bumps: [BumpSpec; 3],
    pub t: [f64; 3],
}

impl SeparatorSpec {
    /// Three equal bumps centered at `centers`.
    pub fn uniform(centers: [f64; 3], half_width: f64, delta: f64, t: [f64; 3]) -> Self {
        SeparatorSpec {
            bumps: centers.map(|c| BumpSpec::new(c, half_width, delta)),
            t,
        }
    }

    pub fn validate(&self) -> Result<(), BumpError> {
        for b in &self.bumps {
            b.validate()?;
        }
        for w in self.bumps.windows(2) {
            let (_, hi) = w[0].rectangle();
            let (lo, _) = w[1].rectangle();
            if w[0].center >= w[1].center {
                return Err(BumpError::Spec("bump centers must be strictly increasing".into()));
            }
            if hi >= lo {
                return Err(BumpError::Spec(format!(
                    "rectangles overlap: [.., {hi}] and [{lo}, ..]"
                )));
            }
        }
        for (b, &t) in self.bumps.iter().zip(&self.t) {
            let eps = b.epsilon();
            if !t.is_finite() || t.abs() >= eps {
                return Err(BumpError::Spec(format!("|t| = {} is not below epsilon = {eps}", t.abs())));
            }
        }
        Ok(())
    }

    /// Smallest per-bump `ε`.
    pub fn epsilon(&self) -> f64 {
        self.bumps.iter().map(BumpSpec::epsilon).fold(f64::INFINITY, f64::min)
    }

    pub fn boundary_margin(&self) -> f64 {
        self.bumps.iter().map(BumpSpec::boundary_margin).fold(f64::INFINITY, f64::min)
    }

    pub fn with_times(&self, t: [f64; 3]) -> Self {
        SeparatorSpec { bumps: self.bumps, t }
    }

    /// `h(p)` on the unit square.
    pub fn apply(&self, p: ChartPoint) -> Result<ChartPoint, BumpError> {
        let mut q = p;
        for k in (0..3).rev() {
            q = flow(&self.bumps[k], self.t[k], q)?;
        }
        Ok(q)
    }

    /// `h⁻¹(p)`: negated times in reverse order.
    pub fn apply_inverse(&self, p: ChartPoint) -> Result<ChartPoint, BumpError> {
        let mut q = p;
        for k in 0..3 {
            q = flow(&self.bumps[k], -self.t[k], q)?;
        }
        Ok(q)
    }
}

/// The separator as an area map of the unit square.
pub fn build_separator(spec: &SeparatorSpec) -> Result<AreaMap, BumpError> {
    spec.validate()?;
    Ok(AreaMap::from_parts(Chart::SQUARE, MapKind::BumpFlow { spec: spec.clone(), frame: None }))
}

/// The separator transplanted into the annulus band `frame` through the
/// affine identification of the band with the unit square.
pub fn build_separator_in_band(spec: &SeparatorSpec, frame: Band) -> Result<AreaMap, BumpError> {
    spec.validate()?;
    Ok(AreaMap::from_parts(Chart::ANNULUS, MapKind::BumpFlow { spec: spec.clone(), frame: Some(frame) }))
}
