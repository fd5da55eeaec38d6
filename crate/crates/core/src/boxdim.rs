//! Box counting in the unit cube, the order embedding of chains into the
//! line, and the search for a translation pulling two chains apart.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::continua_grid::chain_violation;
use crate::numfmt::fmt17;

/// Points closer than this in every coordinate are merged.
pub const DEDUP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum BoxDimError {
    #[error("point cloud is empty")]
    Empty,
    #[error("point {index} is outside the unit cube or not finite")]
    OutOfCube { index: usize },
    #[error("box side {0} is outside (0, 1]")]
    BadSide(f64),
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("need at least {need} scales, got {got}")]
    TooFewScales { need: usize, got: usize },
    #[error("all box counts are equal; slope undefined")]
    DegenerateFit,
    #[error("points {a} and {b} are incomparable: {pa:?} vs {pb:?}")]
    NotChain { a: usize, b: usize, pa: [f64; 3], pb: [f64; 3] },
    #[error("invalid search parameters: {0}")]
    BadSearch(&'static str),
    #[error("no separating translation in {samples} samples; best margin {best_margin}")]
    BudgetExhausted { samples: usize, best_margin: f64 },
    #[error("line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A nonempty, deduplicated finite subset of `[0,1]³`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 3]>", into = "Vec<[f64; 3]>")]
pub struct PointCloud3 {
    points: Vec<[f64; 3]>,
}

impl PointCloud3 {
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self, BoxDimError> {
        if points.is_empty() {
            return Err(BoxDimError::Empty);
        }
        if let Some(index) = points.iter().position(|p| !p.iter().all(|v| (0.0..=1.0).contains(v))) {
            return Err(BoxDimError::OutOfCube { index });
        }
        let mut sorted = points;
        sorted.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])).then(a[2].total_cmp(&b[2])));
        let mut kept: Vec<[f64; 3]> = Vec::with_capacity(sorted.len());
        for p in sorted {
            let dup = kept
                .iter()
                .rev()
                .take_while(|q| p[0] - q[0] <= DEDUP_TOLERANCE)
                .any(|q| linf(p, *q) <= DEDUP_TOLERANCE);
            if !dup {
                kept.push(p);
            }
        }
        Ok(PointCloud3 { points: kept })
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl TryFrom<Vec<[f64; 3]>> for PointCloud3 {
    type Error = BoxDimError;

    fn try_from(v: Vec<[f64; 3]>) -> Result<Self, Self::Error> {
        PointCloud3::new(v)
    }
}

impl From<PointCloud3> for Vec<[f64; 3]> {
    fn from(p: PointCloud3) -> Self {
        p.points
    }
}

pub fn linf(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).abs()).fold(0.0, f64::max)
}

/// Number of origin-anchored boxes of side `side` meeting the cloud.
pub fn box_count(p: &PointCloud3, side: f64) -> Result<usize, BoxDimError> {
    if !(side > 0.0 && side <= 1.0) {
        return Err(BoxDimError::BadSide(side));
    }
    let last = ((1.0 / side).ceil() as u64).max(1) - 1;
    let idx = |v: f64| ((v / side).floor() as u64).min(last);
    let boxes: HashSet<[u64; 3]> = p.points.iter().map(|q| [idx(q[0]), idx(q[1]), idx(q[2])]).collect();
    Ok(boxes.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    /// Box sides, largest first.
    pub scales: Vec<f64>,
    pub counts: Vec<usize>,
    pub slope: f64,
    /// Standard error of the slope.
    pub slope_ci: f64,
}

pub const MIN_POINTS: usize = 16;
pub const MIN_SCALES: usize = 4;

/// Least-squares slope of `log N(s)` against `log(1/s)` over the sides
/// `2^-k` for `k` in `exponents`.
pub fn upper_box_dimension(p: &PointCloud3, exponents: std::ops::RangeInclusive<u32>) -> Result<DimensionEstimate, BoxDimError> {
    if p.len() < MIN_POINTS {
        return Err(BoxDimError::TooFewPoints { need: MIN_POINTS, got: p.len() });
    }
    let scales: Vec<f64> = exponents.map(|k| 0.5f64.powi(k as i32)).collect();
    if scales.len() < MIN_SCALES {
        return Err(BoxDimError::TooFewScales { need: MIN_SCALES, got: scales.len() });
    }
    let counts = scales.iter().map(|&s| box_count(p, s)).collect::<Result<Vec<_>, _>>()?;
    if counts.iter().all(|&c| c == counts[0]) {
        return Err(BoxDimError::DegenerateFit);
    }
    let xs: Vec<f64> = scales.iter().map(|s| (1.0 / s).ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let (slope, slope_ci) = linear_fit(&xs, &ys);
    Ok(DimensionEstimate { scales, counts, slope, slope_ci })
}

/// Ordinary least squares; returns the slope and its standard error.
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    let se = if xs.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    (slope, se)
}

/// `φ(x) = x₁ + x₂ + x₃` on a chain, in input order.
pub fn sum_embed(p: &PointCloud3) -> Result<Vec<f64>, BoxDimError> {
    if let Some((a, b)) = chain_violation(&p.points) {
        return Err(BoxDimError::NotChain { a, b, pa: p.points[a], pb: p.points[b] });
    }
    Ok(p.points.iter().map(|q| q[0] + q[1] + q[2]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparatingTranslation {
    pub t: [f64; 3],
    /// Minimum l∞ distance between `A + t` and `A′`.
    pub achieved: f64,
    /// Random samples drawn before success; 0 when `t = 0` was accepted.
    pub samples: usize,
}

/// Minimum l∞ distance between `A + t` and `sorted` (ordered by x),
/// returning early once it falls to `stop_at` or below.
fn min_distance(a: &[[f64; 3]], t: [f64; 3], sorted: &[[f64; 3]], stop_at: f64) -> f64 {
    let mut best = f64::INFINITY;
    for p in a {
        let q = [p[0] + t[0], p[1] + t[1], p[2] + t[2]];
        let start = sorted.partition_point(|r| r[0] < q[0] - best);
        for r in &sorted[start..] {
            if r[0] > q[0] + best {
                break;
            }
            let d = linf(q, *r);
            if d < best {
                best = d;
                if best <= stop_at {
                    return best;
                }
            }
        }
    }
    best
}

/// Exhaustive check that every pair of `A + t` and `A′` is more than
/// `margin` apart in l∞.
pub fn verify_separation(a: &PointCloud3, a_prime: &PointCloud3, t: [f64; 3], margin: f64) -> bool {
    a.points.iter().all(|p| {
        let q = [p[0] + t[0], p[1] + t[1], p[2] + t[2]];
        a_prime.points.iter().all(|r| linf(q, *r) > margin)
    })
}

/// Seeded search for `t ∈ (−ε, ε)³` with `A + t` more than `margin` away
/// from `A′`. `t = 0` is tried before any sample.
pub fn find_separating_translation(
    a: &PointCloud3,
    a_prime: &PointCloud3,
    eps: f64,
    margin: f64,
    budget: usize,
    seed: u64,
) -> Result<SeparatingTranslation, BoxDimError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(BoxDimError::BadSearch("epsilon must be positive"));
    }
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(BoxDimError::BadSearch("margin must be nonnegative"));
    }
    if budget == 0 {
        return Err(BoxDimError::BadSearch("budget must be at least 1"));
    }
    let mut sorted = a_prime.points.clone();
    sorted.sort_by(|p, q| p[0].total_cmp(&q[0]));
    let zero = min_distance(&a.points, [0.0; 3], &sorted, f64::NEG_INFINITY);
    if zero > margin {
        return Ok(SeparatingTranslation { t: [0.0; 3], achieved: zero, samples: 0 });
    }
    let mut best = zero;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 1..=budget {
        let t = [0; 3].map(|_| loop {
            let v = rng.gen_range(-eps..eps);
            if v.abs() < eps {
                break v;
            }
        });
        // Below the running best a sample can neither succeed nor improve it.
        let d = min_distance(&a.points, t, &sorted, best);
        if d > margin {
            return Ok(SeparatingTranslation { t, achieved: d, samples: k });
        }
        best = best.max(d);
    }
    Err(BoxDimError::BudgetExhausted { samples: budget, best_margin: best })
}

/// Writes `x,y,z` rows at 17 significant digits, with a header.
pub fn write_csv<W: Write>(p: &PointCloud3, mut w: W) -> std::io::Result<()> {
    writeln!(w, "x,y,z")?;
    for q in &p.points {
        writeln!(w, "{},{},{}", fmt17(q[0]), fmt17(q[1]), fmt17(q[2]))?;
    }
    Ok(())
}

/// Reads `x,y,z` rows; a non-numeric first line is taken as a header.
pub fn read_csv<R: BufRead>(r: R) -> Result<PointCloud3, BoxDimError> {
    let mut points = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(v) if v.len() == 3 => points.push([v[0], v[1], v[2]]),
            Ok(v) => return Err(BoxDimError::Csv { line: k + 1, msg: format!("expected 3 fields, got {}", v.len()) }),
            Err(_) if k == 0 => continue,
            Err(e) => return Err(BoxDimError::Csv { line: k + 1, msg: e.to_string() }),
        }
    }
    PointCloud3::new(points)
}

/// `count` random points of a chain: each coordinate is an independent
/// random increasing sequence in `[0, 1]`.
pub fn random_chain(rng: &mut impl Rng, count: usize) -> Vec<[f64; 3]> {
    let coords = [0; 3].map(|_| {
        let inc: Vec<f64> = (0..count).map(|_| rng.gen::<f64>().powi(2)).collect();
        let total = inc.iter().sum::<f64>() * (1.0 + rng.gen::<f64>());
        inc.iter()
            .scan(0.0, |acc, v| {
                *acc += v / total;
                Some(*acc)
            })
            .collect::<Vec<f64>>()
    });
    (0..count).map(|k| [coords[0][k], coords[1][k], coords[2][k]]).collect()
}
