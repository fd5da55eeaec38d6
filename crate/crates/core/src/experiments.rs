//! End-to-end separation pipeline: detect the circle families of `f^n` and
//! `g^n` in a band, move the `g` family off the `f` family with a bump
//! separator, conjugate `g`, and compare IFS coverage before and after.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boxdim::{find_separating_translation, BoxDimError, PointCloud3, SeparatingTranslation};
use crate::bump_flow::{build_separator_in_band, BumpError, SeparatorSpec};
use crate::continua_grid::{
    chain_coordinates, column_heights, extract_frontier, outer_boundary, rasterize, CellSet, ContinuumError,
    FrontierDecomposition, GridContinuum, RowBand, SampleOrder, DEFAULT_COLUMNS,
};
use crate::geometry::{Band, Chart, ChartKind, ChartPoint};
use crate::ifs_engine::{coverage_test, CoverageOptions, CoverageReport, IfsError, Mode, SATURATION_WINDOW};
use crate::invariant_detect::{detect_circle_family, invariance_residual, DetectConfig, DetectError, DetectedFamily};
use crate::map_zoo::{conjugate, AreaMap, MapError};
use crate::numfmt::fmt17;
use crate::seeds::substream_seed;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Search(#[from] BoxDimError),
    #[error(transparent)]
    Continuum(#[from] ContinuumError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Bump(#[from] BumpError),
    #[error(transparent)]
    Ifs(#[from] IfsError),
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("{failed} of {pairs} pairs have no witnessing column")]
    VerificationFailed { failed: usize, pairs: usize, outcome: Box<SeparationOutcome> },
    #[error("members {index} and {} break monotonicity", index + 1)]
    NotMonotone { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoverageConfig {
    /// Defaults to the golden-mean height (the band midpoint if outside)
    /// on the detection transversal.
    pub start: Option<ChartPoint>,
    /// Defaults to the detection resolution.
    pub resolution: Option<usize>,
    pub budget: usize,
    pub idle_limit: Option<usize>,
    pub mode: Mode,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        CoverageConfig { start: None, resolution: None, budget: 2000, idle_limit: Some(SATURATION_WINDOW), mode: Mode::Semigroup }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeparationConfig {
    /// Margin of the band inside the unit square.
    pub delta: f64,
    pub columns: [f64; 3],
    /// Half width of each bump rectangle.
    pub half_width: f64,
    /// `power` and `frame` are set by the pipeline.
    pub detect: DetectConfig,
    /// Separation margin of the translation search; defaults to `2/N`.
    pub margin: Option<f64>,
    pub search_budget: usize,
    /// Skips the search and uses these flow times.
    pub forced_t: Option<[f64; 3]>,
    pub coverage: CoverageConfig,
    pub seed: u64,
}

impl Default for SeparationConfig {
    fn default() -> Self {
        SeparationConfig {
            delta: 0.1,
            columns: DEFAULT_COLUMNS,
            half_width: 0.1,
            detect: DetectConfig::default(),
            margin: None,
            search_budget: 10_000,
            forced_t: None,
            coverage: CoverageConfig::default(),
            seed: 0,
        }
    }
}

fn one() -> usize {
    1
}

/// One JSON document describing a whole separation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub f: AreaMap,
    pub g: AreaMap,
    pub band: Band,
    #[serde(default = "one")]
    pub power: usize,
    #[serde(flatten)]
    pub separation: SeparationConfig,
}

/// Column witness for the pair `(h(K_g), K_f)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairWitness {
    pub g_member: usize,
    pub f_member: usize,
    /// First column whose heights differ by more than one cell.
    pub column: Option<usize>,
    /// Largest height difference over the three columns.
    pub gap: f64,
}

/// Rasters in frame coordinates, kept for image output.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FamilyRasters {
    pub f: Vec<GridContinuum>,
    pub g: Vec<GridContinuum>,
    pub g_after: Vec<GridContinuum>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationOutcome {
    pub band: Band,
    pub frame: Band,
    pub power: usize,
    pub resolution: usize,
    /// Set when `g^n` has no circle in the band and `h` is the identity.
    pub trivially_separated: bool,
    /// Column heights of the `f` family in the unit square.
    pub f_family: Vec<[f64; 3]>,
    pub g_family: Vec<[f64; 3]>,
    /// Column heights of `h` applied to each `g` member.
    pub g_family_after: Vec<[f64; 3]>,
    /// `None` when the flow times were forced or the run was trivial.
    pub translation: Option<SeparatingTranslation>,
    pub separator: SeparatorSpec,
    /// `h g h⁻¹`.
    pub conjugate: AreaMap,
    pub verification: Vec<PairWitness>,
    pub coverage_before: CoverageReport,
    pub coverage_after: CoverageReport,
    #[serde(skip)]
    pub rasters: FamilyRasters,
}

impl SeparationOutcome {
    /// Cells gained by replacing `g` with its conjugate.
    pub fn coverage_gain(&self) -> i64 {
        self.coverage_after.covered as i64 - self.coverage_before.covered as i64
    }

    pub fn failed_pairs(&self) -> usize {
        self.verification.iter().filter(|w| w.column.is_none()).count()
    }

    /// Coverage curves side by side.
    pub fn write_coverage_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "word_length,before,after")?;
        let (b, a) = (&self.coverage_before.fraction, &self.coverage_after.fraction);
        for k in 0..b.len().max(a.len()) {
            let at = |v: &Vec<f64>| fmt17(*v.get(k).or(v.last()).expect("fractions are nonempty"));
            writeln!(w, "{k},{},{}", at(b), at(a))?;
        }
        Ok(())
    }
}

fn detect(m: &AreaMap, e: Band, cfg: &DetectConfig) -> Result<Option<DetectedFamily>, ExperimentError> {
    match detect_circle_family(m, e, cfg) {
        Ok(d) => Ok(Some(d)),
        Err(DetectError::NoneFound { .. }) => Ok(None),
        Err(other) => Err(other.into()),
    }
}

/// Runs the separation pipeline for `(f^n, g^n)` on the band `e`.
pub fn run_separation(
    f: &AreaMap,
    g: &AreaMap,
    e: Band,
    n: usize,
    cfg: &SeparationConfig,
) -> Result<SeparationOutcome, ExperimentError> {
    if f.chart() != g.chart() {
        return Err(MapError::ChartMismatch(f.chart().kind(), g.chart().kind()).into());
    }
    if f.chart().kind() != ChartKind::Annulus {
        return Err(ExperimentError::BadConfig("the pipeline runs on the annulus chart".into()));
    }
    let frame = e
        .padded(cfg.delta)
        .ok_or_else(|| ExperimentError::BadConfig(format!("band {e:?} does not admit margin {}", cfg.delta)))?;
    let res = cfg.detect.resolution;
    let margin = cfg.margin.unwrap_or(2.0 / res as f64);
    if margin < 2.0 / res as f64 {
        return Err(ExperimentError::BadConfig(format!("margin {margin} is below two cells at resolution {res}")));
    }
    let dcfg = DetectConfig { power: n, frame, ..cfg.detect };

    let detected_g = detect(g, e, &dcfg)?;
    let detected_f = match detected_g {
        Some(_) => Some(detect_circle_family(f, e, &dcfg)?),
        None => detect(f, e, &dcfg)?,
    };
    let (f_family, f_rasters) = match &detected_f {
        Some(d) => (chain_coordinates(&d.family, cfg.columns, cfg.delta)?, d.family.members().to_vec()),
        None => (Vec::new(), Vec::new()),
    };

    let base = SeparatorSpec::uniform(cfg.columns, cfg.half_width, cfg.delta, [0.0; 3]);
    base.validate()?;
    let (g_family, g_rasters, translation, t) = match &detected_g {
        None => (Vec::new(), Vec::new(), None, [0.0; 3]),
        Some(d) => {
            let a = chain_coordinates(&d.family, cfg.columns, cfg.delta)?;
            let (translation, t) = match cfg.forced_t {
                Some(t) => (None, t),
                None => {
                    let seed = substream_seed(cfg.seed, "translation");
                    let found = find_separating_translation(
                        &PointCloud3::new(a.clone())?,
                        &PointCloud3::new(f_family.clone())?,
                        base.epsilon(),
                        margin,
                        cfg.search_budget,
                        seed,
                    )?;
                    (Some(found), found.t)
                }
            };
            (a, d.family.members().to_vec(), translation, t)
        }
    };
    let separator = base.with_times(t);
    let h = build_separator_in_band(&separator, frame)?;
    let g_tilde = conjugate(g, &h)?;

    let mut g_after = Vec::new();
    let mut g_family_after = Vec::new();
    if let Some(d) = &detected_g {
        for cand in &d.accepted {
            let moved = cand
                .samples
                .iter()
                .map(|p| h.apply(*p).map(|q| frame.point_to_unit(q)))
                .collect::<Result<Vec<_>, _>>()?;
            let k = rasterize(&moved, Chart::ANNULUS, res, SampleOrder::Angular)?;
            g_family_after.push(column_heights(&k, cfg.columns)?);
            g_after.push(k);
        }
    }
    let verification = witness_table(&g_family_after, &f_family, res);

    let start = cfg.coverage.start.unwrap_or_else(|| {
        let golden = (5f64.sqrt() - 1.0) / 2.0;
        ChartPoint::new(dcfg.transversal_x, if e.contains(golden) { golden } else { e.from_unit(0.5) })
    });
    let cov_n = cfg.coverage.resolution.unwrap_or(res);
    let opts = CoverageOptions { mode: cfg.coverage.mode, idle_limit: cfg.coverage.idle_limit };
    let coverage_before = coverage_test(f, g, start, cov_n, cfg.coverage.budget, opts)?;
    let coverage_after = coverage_test(f, &g_tilde, start, cov_n, cfg.coverage.budget, opts)?;

    let outcome = SeparationOutcome {
        band: e,
        frame,
        power: n,
        resolution: res,
        trivially_separated: detected_g.is_none(),
        f_family,
        g_family,
        g_family_after,
        translation,
        separator,
        conjugate: g_tilde,
        verification,
        coverage_before,
        coverage_after,
        rasters: FamilyRasters { f: f_rasters, g: g_rasters, g_after },
    };
    let failed = outcome.failed_pairs();
    if failed > 0 {
        let pairs = outcome.verification.len();
        return Err(ExperimentError::VerificationFailed { failed, pairs, outcome: Box::new(outcome) });
    }
    Ok(outcome)
}

/// One entry per pair; a column witnesses when heights differ by more than `1/N`.
fn witness_table(moved: &[[f64; 3]], fixed: &[[f64; 3]], n: usize) -> Vec<PairWitness> {
    let cell = 1.0 / n as f64;
    let mut out = Vec::with_capacity(moved.len() * fixed.len());
    for (gi, a) in moved.iter().enumerate() {
        for (fi, b) in fixed.iter().enumerate() {
            let diffs = [0, 1, 2].map(|k| (a[k] - b[k]).abs());
            out.push(PairWitness {
                g_member: gi,
                f_member: fi,
                column: (0..3).find(|&k| diffs[k] > cell),
                gap: diffs.iter().copied().fold(0.0, f64::max),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosednessReport {
    pub limit: GridContinuum,
    /// `Less` for an increasing sequence, `Greater` for a decreasing one.
    pub direction: Ordering,
    /// Invariance residual of the limit under each supplied map.
    pub residuals: Vec<f64>,
    /// `None` when the limit is not annular in the full band.
    pub frontier: Option<FrontierDecomposition>,
}

/// Product order of the column maxima over every grid column.
fn column_order(a: &GridContinuum, b: &GridContinuum) -> Option<Ordering> {
    let mut ord = Ordering::Equal;
    for i in 0..a.n() {
        let step = a.column_max(i)?.cmp(&b.column_max(i)?);
        match (ord, step) {
            (_, Ordering::Equal) => {}
            (Ordering::Equal, s) => ord = s,
            (o, s) if o != s => return None,
            _ => {}
        }
    }
    Some(ord)
}

/// Grid limit of a monotone sequence of crossing continua (rasters of
/// `frame`): the boundary of the union of their lower (increasing) or upper
/// (decreasing) complementary components.
pub fn closedness_probe(
    seq: &[GridContinuum],
    maps: &[AreaMap],
    frame: Band,
    samples: usize,
) -> Result<ClosednessReport, ExperimentError> {
    if seq.len() < 3 {
        return Err(ExperimentError::BadConfig("need at least three members".into()));
    }
    let (chart, n) = (seq[0].chart(), seq[0].n());
    if seq.iter().any(|k| k.chart() != chart || k.n() != n) {
        return Err(ContinuumError::GridMismatch.into());
    }
    let mut direction = Ordering::Equal;
    for (index, w) in seq.windows(2).enumerate() {
        match column_order(&w[0], &w[1]) {
            None => return Err(ExperimentError::NotMonotone { index }),
            Some(Ordering::Equal) => {}
            Some(o) if direction == Ordering::Equal => direction = o,
            Some(o) if o != direction => return Err(ExperimentError::NotMonotone { index }),
            Some(_) => {}
        }
    }
    let band = RowBand::full(n);
    let mut union = CellSet::empty(n);
    for k in seq {
        let parts = extract_frontier(k, band)?;
        union.union_with(if direction == Ordering::Greater { &parts.upper } else { &parts.lower });
    }
    let limit = GridContinuum::from_set(chart, outer_boundary(&union, chart, band))?;
    let residuals = maps.iter().map(|m| invariance_residual(m, &limit, frame, samples)).collect();
    let frontier = extract_frontier(&limit, band).ok();
    Ok(ClosednessReport { limit, direction, residuals, frontier })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continua_grid::is_essential;
    use crate::invariant_detect::Rejection;
    use crate::map_zoo::{KickShape, YBoundary};

    fn circle(y: f64, n: usize) -> GridContinuum {
        let pts: Vec<ChartPoint> = (0..4 * n).map(|k| ChartPoint::new(k as f64 / (4 * n) as f64, y)).collect();
        rasterize(&pts, Chart::ANNULUS, n, SampleOrder::Angular).unwrap()
    }

    fn small_config() -> SeparationConfig {
        SeparationConfig {
            detect: DetectConfig { count: 12, iterations: 1024, ..DetectConfig::default() },
            coverage: CoverageConfig { budget: 400, ..CoverageConfig::default() },
            seed: 5,
            ..SeparationConfig::default()
        }
    }

    #[test]
    fn monotone_limit_is_the_accumulation_circle() {
        let seq: Vec<_> = (1..=20).map(|m| circle(0.5 - 1.0 / (m as f64 + 4.0), 16)).collect();
        let twist = AreaMap::standard_twist(Chart::ANNULUS);
        let r = closedness_probe(&seq, &[twist], Band::UNIT, 64).unwrap();
        assert_eq!(r.direction, Ordering::Less);
        assert!(r.limit.iter().all(|c| c.j.abs_diff(8) <= 1), "{:?}", r.limit.iter().collect::<Vec<_>>());
        assert!(is_essential(&r.limit, RowBand::full(16)));
        assert_eq!(r.residuals, vec![0.0]);
        assert!(r.frontier.is_some());
    }

    #[test]
    fn decreasing_sequence_uses_upper_components() {
        let seq: Vec<_> = (1..=10).map(|m| circle(0.5 + 1.0 / (m as f64 + 4.0), 16)).collect();
        let r = closedness_probe(&seq, &[], Band::UNIT, 64).unwrap();
        assert_eq!(r.direction, Ordering::Greater);
        assert!(r.limit.iter().all(|c| c.j.abs_diff(8) <= 1));
    }

    #[test]
    fn constant_family_limit_is_the_member() {
        let k = circle(0.3, 16);
        let r = closedness_probe(&[k.clone(), k.clone(), k.clone()], &[], Band::UNIT, 64).unwrap();
        assert_eq!(r.limit, k);
        assert_eq!(r.direction, Ordering::Equal);
    }

    #[test]
    fn non_monotone_and_short_sequences_fail() {
        let seq = [circle(0.2, 16), circle(0.6, 16), circle(0.4, 16)];
        assert!(matches!(closedness_probe(&seq, &[], Band::UNIT, 64), Err(ExperimentError::NotMonotone { index: 1 })));
        assert!(matches!(closedness_probe(&seq[..2], &[], Band::UNIT, 64), Err(ExperimentError::BadConfig(_))));
    }

    #[test]
    fn witness_requires_more_than_one_cell() {
        let t = witness_table(&[[0.5, 0.5, 0.5]], &[[0.5, 0.5 + 1.0 / 32.0, 0.53]], 32);
        assert_eq!(t[0].column, None);
        let t = witness_table(&[[0.5, 0.5, 0.5]], &[[0.5, 0.5, 0.57]], 32);
        assert_eq!(t[0].column, Some(2));
    }

    #[test]
    fn twin_twists_separate_pairwise() {
        let twist = AreaMap::standard_twist(Chart::ANNULUS);
        let e = Band::new(0.2, 0.8).unwrap();
        let out = run_separation(&twist, &twist, e, 1, &small_config()).unwrap();
        let (nf, ng) = (out.f_family.len(), out.g_family.len());
        assert!(nf >= 10 && ng == nf);
        assert_eq!(out.verification.len(), nf * ng);
        assert!(out.verification.iter().all(|w| w.column.is_some() && w.gap > 1.0 / 64.0));
        assert!(!out.trivially_separated);
        assert!(out.translation.unwrap().achieved > 2.0 / 64.0);
        assert!(out.coverage_gain() >= 64, "gain {}", out.coverage_gain());
    }

    #[test]
    fn pipeline_is_deterministic() {
        let twist = AreaMap::standard_twist(Chart::ANNULUS);
        let e = Band::new(0.2, 0.8).unwrap();
        let a = run_separation(&twist, &twist, e, 1, &small_config()).unwrap();
        let b = run_separation(&twist, &twist, e, 1, &small_config()).unwrap();
        assert_eq!(crate::numfmt::to_json_string(&a).unwrap(), crate::numfmt::to_json_string(&b).unwrap());
    }

    #[test]
    fn zero_translation_fails_every_diagonal_pair() {
        let twist = AreaMap::standard_twist(Chart::ANNULUS);
        let e = Band::new(0.2, 0.8).unwrap();
        let cfg = SeparationConfig { forced_t: Some([0.0; 3]), ..small_config() };
        match run_separation(&twist, &twist, e, 1, &cfg) {
            Err(ExperimentError::VerificationFailed { failed, outcome, .. }) => {
                let m = outcome.g_family.len();
                assert!(failed >= m);
                for i in 0..m {
                    let w = outcome.verification[i * m + i];
                    assert_eq!((w.g_member, w.f_member, w.column), (i, i, None));
                }
            }
            other => panic!("expected verification failure, got {other:?}"),
        }
    }

    #[test]
    fn chaotic_g_short_circuits() {
        let twist = AreaMap::standard_twist(Chart::ANNULUS);
        let g = AreaMap::kicked_twist(Chart::ANNULUS, 3.0, KickShape::Sine, YBoundary::Wrap).unwrap();
        let e = Band::new(0.2, 0.8).unwrap();
        let out = run_separation(&twist, &g, e, 1, &small_config()).unwrap();
        assert!(out.trivially_separated);
        assert!(out.verification.is_empty());
        assert_eq!(out.separator.t, [0.0; 3]);
        assert_eq!(out.coverage_before, out.coverage_after);
    }

    #[test]
    fn conjugate_family_is_the_moved_family() {
        let twist = AreaMap::standard_twist(Chart::ANNULUS);
        let e = Band::new(0.2, 0.8).unwrap();
        let cfg = small_config();
        let out = run_separation(&twist, &twist, e, 1, &cfg).unwrap();
        let dcfg = DetectConfig { frame: out.frame, ..cfg.detect };
        let before = detect_circle_family(&twist, e, &dcfg).unwrap();
        let again = detect_circle_family(&out.conjugate, e, &dcfg).unwrap();
        assert!(again.family.len() * 3 >= before.family.len() * 2);
        for (cand, k) in again.accepted.iter().zip(again.family.members()) {
            let idx = before.accepted.iter().position(|c| c.seed == cand.seed).expect("same seed accepted for g");
            let m = &out.rasters.g_after[idx];
            assert!(k.iter().all(|c| m.contains_dilated(c)));
            assert!(m.iter().all(|c| k.contains_dilated(c)));
        }
        // Moved circles near the band edge leave it; moved neighbors may touch.
        for c in &before.accepted {
            if !again.accepted.iter().any(|a| a.seed == c.seed) {
                let r = again.tried.iter().find(|a| a.seed == c.seed).and_then(|a| a.rejection);
                assert!(matches!(r, Some(Rejection::LeftBand | Rejection::Overlap)), "{r:?}");
            }
        }
        // Steep flanks of the moved circles put some cell centers more than a cell off the curve.
        assert!(again.accepted.iter().any(|c| c.invariance.unwrap() > 0.0));
    }

    #[test]
    fn kicked_circles_accumulate_to_an_essential_limit() {
        let m = AreaMap::kicked_twist(Chart::ANNULUS, 0.3, KickShape::Sine, YBoundary::Wrap).unwrap();
        let e = Band::new(0.2, 0.8).unwrap();
        let cfg = DetectConfig { count: 16, iterations: 1024, resolution: 32, ..DetectConfig::default() };
        let d = detect_circle_family(&m, e, &cfg).unwrap();
        let members = d.family.members();
        assert!(members.len() >= 3);
        let tail = &members[members.len() - 3..];
        let r = closedness_probe(tail, &[m], Band::UNIT, 256).unwrap();
        assert!(is_essential(&r.limit, RowBand::full(32)));
        assert_eq!(r.residuals, vec![0.0]);
    }

    #[test]
    fn config_round_trips_with_defaults() {
        let json = r#"{"f":{"kind":"integrable_twist","params":{}},"g":{"kind":"integrable_twist","params":{}},
            "band":{"lo":0.2,"hi":0.8},"seed":7,"detect":{"count":50}}"#;
        let c: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert_eq!(c.power, 1);
        assert_eq!(c.separation.seed, 7);
        assert_eq!(c.separation.detect.count, 50);
        assert_eq!(c.separation.detect.resolution, 64);
        assert_eq!(c.f.chart(), Chart::ANNULUS);
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
