//! Detection of essential invariant circles in an annulus band.
//!
//! Seeds along a vertical transversal are iterated; an orbit is accepted as
//! an invariant circle when it stays in the band, has a converged, badly
//! approximable rotation number, fills every angular bin with small
//! vertical spread, and its raster is essential and invariant at grid scale.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::continua_grid::{column_heights, is_essential, rasterize, ContinuumError, ContinuumFamily, GridContinuum, RowBand, SampleOrder, DEFAULT_COLUMNS};
use crate::geometry::{wrap_unit, Band, Chart, ChartKind, ChartPoint};
use crate::map_zoo::{AreaMap, MapError};
use crate::numfmt::fmt17;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("orbit left the band at iteration {iteration}: {source}")]
    EscapedBand { iteration: usize, source: MapError },
    #[error("rotation numbers need a chart with a periodic x axis, got {0:?}")]
    UnsupportedChart(ChartKind),
    #[error("invalid input: {0}")]
    BadInput(&'static str),
    #[error("no invariant circle accepted among {tried} seeds")]
    NoneFound { tried: usize },
    #[error(transparent)]
    Continuum(#[from] ContinuumError),
}

pub const MIN_ITERATIONS: usize = 100;
/// Largest denominator treated as a low-order resonance.
pub const MAX_DENOMINATOR: u64 = 20;
pub const RATIONAL_TOLERANCE: f64 = 1e-6;
/// Return distance below which an orbit counts as periodic.
pub const PERIOD_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationNumberEstimate {
    /// Mean lifted displacement, reduced to `[0, 1)`.
    pub value: f64,
    pub iterations: usize,
    /// `|mean over T − mean over T/2|`
    pub residual: f64,
    /// Least `q ≤ 20` with `f^q(p) = p`, if any.
    pub period: Option<u64>,
}

pub fn rotation_number(f: &AreaMap, p: ChartPoint, t: usize) -> Result<RotationNumberEstimate, DetectError> {
    orbit(f, p, t, None)
}

/// Iterates `t` times, returning the estimate and optionally the orbit.
fn orbit(f: &AreaMap, p: ChartPoint, t: usize, keep: Option<&mut Vec<ChartPoint>>) -> Result<RotationNumberEstimate, DetectError> {
    if !f.chart().wraps_x() {
        return Err(DetectError::UnsupportedChart(f.chart().kind()));
    }
    if t < MIN_ITERATIONS {
        return Err(DetectError::BadInput("need at least 100 iterations"));
    }
    let chart = f.chart();
    let mut samples = keep;
    let mut q = p;
    let mut sum = 0.0;
    let mut half = 0.0;
    let mut period = None;
    for k in 1..=t {
        let (r, dx) = f.apply_lifted(q).map_err(|source| DetectError::EscapedBand { iteration: k, source })?;
        sum += dx;
        q = r;
        if let Some(s) = samples.as_deref_mut() {
            s.push(q);
        }
        if k == t / 2 {
            half = sum / k as f64;
        }
        if period.is_none() && k as u64 <= MAX_DENOMINATOR && chart.distance(p, q) < PERIOD_TOLERANCE {
            period = Some(k as u64);
        }
    }
    let mean = sum / t as f64;
    Ok(RotationNumberEstimate { value: wrap_unit(mean), iterations: t, residual: (mean - half).abs(), period })
}

/// Nearest `p/q` with `q ≤ 20` within the tolerance, if any.
pub fn near_rational(v: f64) -> Option<(u64, u64)> {
    (1..=MAX_DENOMINATOR).find_map(|q| {
        let p = (v * q as f64).round();
        ((v - p / q as f64).abs() < RATIONAL_TOLERANCE).then_some((p as u64, q))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectConfig {
    /// Power of the map whose circles are sought.
    pub power: usize,
    /// Number of seed slots, one per target circle.
    pub count: usize,
    pub iterations: usize,
    /// Largest vertical extent of the orbit inside one angular bin.
    pub spread_tol: f64,
    pub resolution: usize,
    pub transversal_x: f64,
    /// Annulus band rasterized onto the unit square.
    pub frame: Band,
    /// Extra seeds tried inside a slot's raster row after a rejection.
    pub retries: usize,
    pub invariance_samples: usize,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            power: 1,
            count: 50,
            iterations: 4096,
            spread_tol: 0.05,
            resolution: 64,
            transversal_x: 0.1,
            frame: Band::UNIT,
            retries: 8,
            invariance_samples: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum Rejection {
    Escaped { iteration: usize },
    LeftBand,
    NotConverged,
    NearRational { p: u64, q: u64 },
    EmptyBin,
    Spread,
    NotEssential,
    Overlap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleCandidate {
    pub seed: ChartPoint,
    /// Orbit points in annulus coordinates.
    #[serde(skip)]
    pub samples: Vec<ChartPoint>,
    pub rotation: Option<RotationNumberEstimate>,
    pub spread: f64,
    /// Invariance residual of the accepted raster; recorded, not gated.
    pub invariance: Option<f64>,
    pub rejection: Option<Rejection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectedFamily {
    /// Rasters in frame coordinates on the annulus chart.
    pub family: ContinuumFamily,
    /// Accepted candidates, aligned with `family.members()`.
    pub accepted: Vec<CircleCandidate>,
    /// Every seed tried, in order.
    pub tried: Vec<CircleCandidate>,
}

impl DetectedFamily {
    /// Diagnostics table, one row per seed.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "seed_x,seed_y,rotation,residual,spread,invariance,accepted,reason")?;
        for c in &self.tried {
            let (rot, res) = c.rotation.map_or((String::new(), String::new()), |r| (fmt17(r.value), fmt17(r.residual)));
            let reason = c.rejection.map(|r| format!("{r:?}")).unwrap_or_default();
            writeln!(
                w,
                "{},{},{rot},{res},{},{},{},{}",
                fmt17(c.seed.x),
                fmt17(c.seed.y),
                fmt17(c.spread),
                c.invariance.map(fmt17).unwrap_or_default(),
                c.rejection.is_none(),
                reason.replace(',', ";")
            )?;
        }
        Ok(())
    }
}

/// Seed heights of slot `s`: its center first, then golden-ratio offsets
/// inside the center's raster row.
fn slot_seeds(e: Band, cfg: &DetectConfig, s: usize) -> Vec<f64> {
    let n = cfg.resolution as f64;
    let center = e.lo + e.height() * (s as f64 + 0.5) / cfg.count as f64;
    let row = (cfg.frame.to_unit(center) * n).floor();
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    let mut out = vec![center];
    for r in 1..=cfg.retries {
        let offset = ((r as f64 * golden).fract() - 0.5) * 0.8;
        out.push(cfg.frame.from_unit((row + 0.5 + offset) / n));
    }
    out
}

/// Finds essential invariant circles of `f^n` inside `e`.
pub fn detect_circle_family(f: &AreaMap, e: Band, cfg: &DetectConfig) -> Result<DetectedFamily, DetectError> {
    if cfg.count == 0 || cfg.power == 0 {
        return Err(DetectError::BadInput("count and power must be at least 1"));
    }
    if cfg.resolution < 8 {
        return Err(DetectError::BadInput("resolution must be at least 8"));
    }
    if !(cfg.frame.lo <= e.lo && e.hi <= cfg.frame.hi) {
        return Err(DetectError::BadInput("band must lie inside the frame"));
    }
    let fp = f.power(cfg.power);
    type Slot = (Vec<CircleCandidate>, Option<GridContinuum>);
    let slots: Vec<Slot> = (0..cfg.count)
        .into_par_iter()
        .map(|s| {
            let mut tried = Vec::new();
            for y in slot_seeds(e, cfg, s) {
                let (cand, raster) = examine(&fp, ChartPoint::new(cfg.transversal_x, y), e, cfg)?;
                tried.push(cand);
                if raster.is_some() {
                    return Ok((tried, raster));
                }
            }
            Ok((tried, None))
        })
        .collect::<Result<_, DetectError>>()?;
    // Disjointness filter in slot order: the later of an overlapping pair goes.
    let mut tried = Vec::new();
    let mut kept: Vec<(CircleCandidate, GridContinuum)> = Vec::new();
    for (mut cands, raster) in slots {
        if let Some(k) = raster {
            let last = cands.last_mut().expect("a raster comes with its candidate");
            if kept.iter().all(|(_, other)| other.is_disjoint(&k)) {
                kept.push((last.clone(), k));
            } else {
                last.rejection = Some(Rejection::Overlap);
            }
        }
        tried.extend(cands);
    }
    if kept.is_empty() {
        return Err(DetectError::NoneFound { tried: tried.len() });
    }
    let keys = kept
        .iter()
        .map(|(_, k)| column_heights(k, DEFAULT_COLUMNS).map(|y| y[0]))
        .collect::<Result<Vec<_>, _>>()?;
    let mut order: Vec<usize> = (0..kept.len()).collect();
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
    let mut slots: Vec<Option<(CircleCandidate, GridContinuum)>> = kept.into_iter().map(Some).collect();
    let (accepted, members): (Vec<_>, Vec<_>) = order.iter().map(|&k| slots[k].take().expect("each slot taken once")).unzip();
    let family = ContinuumFamily::new(members, DEFAULT_COLUMNS)?;
    Ok(DetectedFamily { family, accepted, tried })
}

/// Runs the acceptance gates on one seed.
fn examine(fp: &AreaMap, seed: ChartPoint, e: Band, cfg: &DetectConfig) -> Result<(CircleCandidate, Option<GridContinuum>), DetectError> {
    let mut cand = CircleCandidate { seed, samples: Vec::with_capacity(cfg.iterations), rotation: None, spread: f64::NAN, invariance: None, rejection: None };
    let reject = |mut c: CircleCandidate, r: Rejection| {
        c.rejection = Some(r);
        Ok((c, None))
    };
    let rot = match orbit(fp, seed, cfg.iterations, Some(&mut cand.samples)) {
        Ok(r) => r,
        Err(DetectError::EscapedBand { iteration, .. }) => return reject(cand, Rejection::Escaped { iteration }),
        Err(other) => return Err(other),
    };
    cand.rotation = Some(rot);
    if !cand.samples.iter().all(|p| e.contains(p.y)) {
        return reject(cand, Rejection::LeftBand);
    }
    if rot.residual >= 1.0 / (cfg.iterations as f64).sqrt() {
        return reject(cand, Rejection::NotConverged);
    }
    if let Some((p, q)) = near_rational(rot.value) {
        return reject(cand, Rejection::NearRational { p, q });
    }
    let n = cfg.resolution;
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for p in &cand.samples {
        let b = ((p.x * n as f64) as usize).min(n - 1);
        lo[b] = lo[b].min(p.y);
        hi[b] = hi[b].max(p.y);
    }
    if lo.iter().any(|v| v.is_infinite()) {
        return reject(cand, Rejection::EmptyBin);
    }
    cand.spread = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);
    if cand.spread >= cfg.spread_tol {
        return reject(cand, Rejection::Spread);
    }
    let unit: Vec<ChartPoint> = cand.samples.iter().map(|p| cfg.frame.point_to_unit(*p)).collect();
    let raster = rasterize(&unit, Chart::ANNULUS, n, SampleOrder::Angular)?;
    if !is_essential(&raster, RowBand::full(n)) {
        return reject(cand, Rejection::NotEssential);
    }
    cand.invariance = Some(invariance_residual(fp, &raster, cfg.frame, cfg.invariance_samples));
    Ok((cand, Some(raster)))
}

/// Fraction of sampled cells of `K` (a raster of `frame`) whose center is
/// mapped outside the one-cell dilation of `K`. Failed evaluations count
/// as outside.
pub fn invariance_residual(f: &AreaMap, k: &GridContinuum, frame: Band, samples: usize) -> f64 {
    let cells: Vec<_> = k.iter().collect();
    let stride = cells.len().div_ceil(samples.max(1)).max(1);
    let n = k.n();
    let picked: Vec<_> = cells.iter().step_by(stride).collect();
    let outside = picked
        .iter()
        .filter(|c| {
            let center = frame.point_from_unit(k.chart().cell_center(***c, n));
            match f.apply(center) {
                Ok(q) if frame.contains(q.y) => !k.contains_dilated(k.chart().cell_of(frame.point_to_unit(q), n)),
                _ => true,
            }
        })
        .count();
    outside as f64 / picked.len() as f64
}
