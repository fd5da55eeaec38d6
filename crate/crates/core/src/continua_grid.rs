//! Rasterized continua on the unit charts.
//!
//! Continua are 4-connected cell sets; their complements are labeled with
//! 8-connectivity, so a 4-connected curve always separates. Sub-annuli are
//! given as inclusive row ranges ([`RowBand`]).

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Band, CellIndex, Chart, ChartKind, ChartPoint};

#[derive(Debug, Error)]
pub enum ContinuumError {
    #[error("continuum has no cells")]
    Empty,
    #[error("cell set is not 4-connected")]
    NotConnected,
    #[error("cell ({i}, {j}) is outside the {n}x{n} grid")]
    CellOutOfRange { i: usize, j: usize, n: usize },
    #[error("resolution or chart mismatch")]
    GridMismatch,
    #[error("cell ({i}, {j}) has its whole 8-neighborhood inside the continuum")]
    NotEmptyInterior { i: usize, j: usize },
    #[error("continuum is not annular in the band")]
    NotAnnular,
    #[error("column {column} misses a continuum")]
    ColumnMiss { column: usize },
    #[error("member {member} meets row {row} inside the boundary margin")]
    MarginViolation { member: usize, row: usize },
    #[error("members {a} and {b} are not comparable in the product order")]
    NotChain { a: usize, b: usize },
    #[error("members {a} and {b} overlap")]
    Overlap { a: usize, b: usize },
    #[error("members {a} and {b} share a maximal row in a column")]
    NotOrdered { a: usize, b: usize },
    #[error("malformed image: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Inclusive row range `lo..=hi` of an `n x n` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowBand {
    pub lo: usize,
    pub hi: usize,
}

impl RowBand {
    pub fn full(n: usize) -> Self {
        RowBand { lo: 0, hi: n - 1 }
    }

    /// Rows whose cell centers lie in `band`.
    pub fn from_band(band: Band, n: usize) -> Option<Self> {
        let nf = n as f64;
        let lo = (band.lo * nf - 0.5).ceil().max(0.0) as usize;
        let hi = (band.hi * nf - 0.5).floor().min(nf - 1.0);
        if hi < 0.0 || (hi as usize) < lo {
            return None;
        }
        Some(RowBand { lo, hi: hi as usize })
    }

    pub fn rows(&self) -> usize {
        self.hi - self.lo + 1
    }

    pub fn contains(&self, j: usize) -> bool {
        (self.lo..=self.hi).contains(&j)
    }
}

/// Neighbor stepping on an `n x n` grid with per-axis wrap.
#[derive(Debug, Clone, Copy)]
struct Lattice {
    n: usize,
    wrap: [bool; 2],
}

const N4: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
const N8: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

impl Lattice {
    fn of(chart: Chart, n: usize) -> Self {
        Lattice { n, wrap: chart.periodic_axes() }
    }

    /// Neighbor of `(i, j)` and the number of times the x seam was crossed.
    fn step(&self, i: usize, j: usize, d: (i64, i64)) -> Option<(usize, usize, i32)> {
        let n = self.n as i64;
        let (mut a, mut b) = (i as i64 + d.0, j as i64 + d.1);
        let mut lift = 0;
        if !(0..n).contains(&a) {
            if !self.wrap[0] {
                return None;
            }
            lift = if a < 0 { -1 } else { 1 };
            a = a.rem_euclid(n);
        }
        if !(0..n).contains(&b) {
            if !self.wrap[1] {
                return None;
            }
            b = b.rem_euclid(n);
        }
        Some((a as usize, b as usize, lift))
    }

    /// Signed shortest offset from `a` to `b` along one axis.
    fn offset(&self, a: usize, b: usize, axis: usize) -> i64 {
        let n = self.n as i64;
        let d = b as i64 - a as i64;
        if self.wrap[axis] {
            let r = d.rem_euclid(n);
            if r > n / 2 {
                r - n
            } else {
                r
            }
        } else {
            d
        }
    }
}

/// A dense cell mask over an `n x n` grid, row-major with `j` the row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellSet {
    n: usize,
    bits: Vec<bool>,
}

impl CellSet {
    pub fn empty(n: usize) -> Self {
        CellSet { n, bits: vec![false; n * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn contains(&self, c: CellIndex) -> bool {
        c.i < self.n && c.j < self.n && self.bits[c.j * self.n + c.i]
    }

    fn get(&self, i: usize, j: usize) -> bool {
        self.bits[j * self.n + i]
    }

    pub fn insert(&mut self, c: CellIndex) {
        self.bits[c.j * self.n + c.i] = true;
    }

    pub fn len(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    pub fn iter(&self) -> impl Iterator<Item = CellIndex> + '_ {
        let n = self.n;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(k, _)| CellIndex::new(k % n, k / n))
    }

    pub fn is_subset(&self, other: &CellSet) -> bool {
        self.n == other.n && self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }

    pub fn union_with(&mut self, other: &CellSet) {
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
    }

    pub fn is_disjoint(&self, other: &CellSet) -> bool {
        self.n == other.n && self.bits.iter().zip(&other.bits).all(|(a, b)| !(*a && *b))
    }
}

/// A nonempty 4-connected set of grid cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CellList", into = "CellList")]
pub struct GridContinuum {
    chart: Chart,
    cells: CellSet,
    tops: Vec<Option<usize>>,
}

impl GridContinuum {
    pub fn from_cells<I: IntoIterator<Item = CellIndex>>(chart: Chart, n: usize, cells: I) -> Result<Self, ContinuumError> {
        let mut set = CellSet::empty(n);
        for c in cells {
            if c.i >= n || c.j >= n {
                return Err(ContinuumError::CellOutOfRange { i: c.i, j: c.j, n });
            }
            set.insert(c);
        }
        Self::from_set(chart, set)
    }

    pub fn from_set(chart: Chart, cells: CellSet) -> Result<Self, ContinuumError> {
        if cells.is_empty() {
            return Err(ContinuumError::Empty);
        }
        if !is_connected4(&cells, Lattice::of(chart, cells.n)) {
            return Err(ContinuumError::NotConnected);
        }
        let n = cells.n;
        let tops = (0..n).map(|i| (0..n).rev().find(|&j| cells.get(i, j))).collect();
        Ok(GridContinuum { chart, cells, tops })
    }

    /// The raster of the horizontal circle through row `j`.
    pub fn row(chart: Chart, n: usize, j: usize) -> Result<Self, ContinuumError> {
        Self::from_cells(chart, n, (0..n).map(|i| CellIndex::new(i, j)))
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }

    pub fn n(&self) -> usize {
        self.cells.n
    }

    pub fn cells(&self) -> &CellSet {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, c: CellIndex) -> bool {
        self.cells.contains(c)
    }

    pub fn iter(&self) -> impl Iterator<Item = CellIndex> + '_ {
        self.cells.iter()
    }

    /// Same cells read in another chart; fails if connectivity relied on a
    /// seam the new chart lacks.
    pub fn with_chart(&self, chart: Chart) -> Result<Self, ContinuumError> {
        Self::from_set(chart, self.cells.clone())
    }

    /// True if `c` lies within one cell (8-neighborhood) of the continuum.
    pub fn contains_dilated(&self, c: CellIndex) -> bool {
        let lat = self.lattice();
        self.contains(c) || N8.iter().any(|&d| lat.step(c.i, c.j, d).is_some_and(|(a, b, _)| self.cells.get(a, b)))
    }

    /// Highest occupied row in column `i`.
    pub fn column_max(&self, i: usize) -> Option<usize> {
        self.tops[i]
    }

    pub fn is_disjoint(&self, other: &GridContinuum) -> bool {
        self.cells.is_disjoint(&other.cells)
    }

    pub fn cell_centers(&self) -> impl Iterator<Item = ChartPoint> + '_ {
        let n = self.n();
        self.iter().map(move |c| self.chart.cell_center(c, n))
    }

    fn lattice(&self) -> Lattice {
        Lattice::of(self.chart, self.n())
    }
}

#[derive(Serialize, Deserialize)]
struct CellList {
    chart: ChartKind,
    n: usize,
    cells: Vec<[usize; 2]>,
}

impl TryFrom<CellList> for GridContinuum {
    type Error = ContinuumError;

    fn try_from(l: CellList) -> Result<Self, Self::Error> {
        GridContinuum::from_cells(l.chart.into(), l.n, l.cells.iter().map(|&[i, j]| CellIndex::new(i, j)))
    }
}

impl From<GridContinuum> for CellList {
    fn from(k: GridContinuum) -> Self {
        CellList {
            chart: k.chart.kind(),
            n: k.n(),
            cells: k.iter().map(|c| [c.i, c.j]).collect(),
        }
    }
}

fn is_connected4(cells: &CellSet, lat: Lattice) -> bool {
    let Some(start) = cells.iter().next() else {
        return false;
    };
    let n = cells.n;
    let mut seen = vec![false; n * n];
    let mut queue = VecDeque::from([(start.i, start.j)]);
    seen[start.j * n + start.i] = true;
    let mut count = 1;
    while let Some((i, j)) = queue.pop_front() {
        for d in N4 {
            if let Some((a, b, _)) = lat.step(i, j, d) {
                let k = b * n + a;
                if cells.bits[k] && !seen[k] {
                    seen[k] = true;
                    count += 1;
                    queue.push_back((a, b));
                }
            }
        }
    }
    count == cells.len()
}

/// Components of `band ∖ K` under 8-connectivity.
struct Components {
    label: Vec<u32>,
    touches_bottom: Vec<bool>,
    touches_top: Vec<bool>,
    wraps: Vec<bool>,
}

const NONE: u32 = u32::MAX;

impl Components {
    fn count(&self) -> usize {
        self.wraps.len()
    }

    fn mask(&self, id: u32, n: usize) -> CellSet {
        CellSet { n, bits: self.label.iter().map(|l| *l == id).collect() }
    }
}

fn complement_components(k: &CellSet, lat: Lattice, band: RowBand) -> Components {
    let n = lat.n;
    // The band is an annulus even on the torus.
    let lat = Lattice { n, wrap: [lat.wrap[0], false] };
    let mut label = vec![NONE; n * n];
    let mut lift = vec![0i32; n * n];
    let mut comps = Components { label: Vec::new(), touches_bottom: Vec::new(), touches_top: Vec::new(), wraps: Vec::new() };
    for j0 in band.lo..=band.hi {
        for i0 in 0..n {
            let k0 = j0 * n + i0;
            if k.bits[k0] || label[k0] != NONE {
                continue;
            }
            let id = comps.count() as u32;
            let (mut bottom, mut top, mut wraps) = (false, false, false);
            label[k0] = id;
            let mut queue = VecDeque::from([(i0, j0)]);
            while let Some((i, j)) = queue.pop_front() {
                bottom |= j == band.lo;
                top |= j == band.hi;
                let here = lift[j * n + i];
                for d in N8 {
                    let Some((a, b, dl)) = lat.step(i, j, d) else { continue };
                    if !band.contains(b) {
                        continue;
                    }
                    let kk = b * n + a;
                    if k.bits[kk] {
                        continue;
                    }
                    if label[kk] == NONE {
                        label[kk] = id;
                        lift[kk] = here + dl;
                        queue.push_back((a, b));
                    } else if lift[kk] != here + dl {
                        wraps = true;
                    }
                }
            }
            comps.touches_bottom.push(bottom);
            comps.touches_top.push(top);
            comps.wraps.push(wraps);
        }
    }
    comps.label = label;
    comps
}

/// Ids of the lower and upper components if `band ∖ K` splits as required.
fn annular_split(k: &CellSet, lat: Lattice, band: RowBand) -> Option<(Components, u32, u32)> {
    if k.iter().any(|c| !band.contains(c.j)) {
        return None;
    }
    let comps = complement_components(k, lat, band);
    if comps.count() != 2 {
        return None;
    }
    let side = |id: usize| (comps.touches_bottom[id], comps.touches_top[id]);
    let (lower, upper) = match (side(0), side(1)) {
        ((true, false), (false, true)) => (0, 1),
        ((false, true), (true, false)) => (1, 0),
        _ => return None,
    };
    if lat.wrap[0] && !(comps.wraps[0] && comps.wraps[1]) {
        return None;
    }
    Some((comps, lower, upper))
}

/// True iff the flood fill of `Q ∖ K` from the bottom side never reaches
/// the top side. Cells are read in the square, without seams.
pub fn crosses_horizontally(k: &GridContinuum) -> bool {
    let n = k.n();
    let lat = Lattice { n, wrap: [false, false] };
    let mut seen = vec![false; n * n];
    let mut queue: VecDeque<(usize, usize)> = (0..n).filter(|&i| !k.cells.get(i, 0)).map(|i| (i, 0)).collect();
    for &(i, _) in &queue {
        seen[i] = true;
    }
    while let Some((i, j)) = queue.pop_front() {
        if j == n - 1 {
            return false;
        }
        for d in N8 {
            if let Some((a, b, _)) = lat.step(i, j, d) {
                let kk = b * n + a;
                if !k.cells.bits[kk] && !seen[kk] {
                    seen[kk] = true;
                    queue.push_back((a, b));
                }
            }
        }
    }
    true
}

/// True iff `band ∖ K` has exactly two components, one on each boundary
/// row, each wrapping the periodic axis when the chart has one.
pub fn is_essential(k: &GridContinuum, band: RowBand) -> bool {
    band.hi < k.n() && annular_split(&k.cells, k.lattice(), band).is_some()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontierDecomposition {
    pub frontier: GridContinuum,
    pub lower: CellSet,
    pub upper: CellSet,
    pub band: RowBand,
}

/// The unique frontier contained in `K`, with the two complementary
/// components of the band.
pub fn extract_frontier(k: &GridContinuum, band: RowBand) -> Result<FrontierDecomposition, ContinuumError> {
    let n = k.n();
    if band.hi >= n {
        return Err(ContinuumError::NotAnnular);
    }
    let lat = k.lattice();
    for c in k.iter() {
        let full = N8
            .iter()
            .all(|&d| lat.step(c.i, c.j, d).is_some_and(|(a, b, _)| k.cells.get(a, b)));
        if full {
            return Err(ContinuumError::NotEmptyInterior { i: c.i, j: c.j });
        }
    }
    let (comps, lo_id, up_id) = annular_split(&k.cells, lat, band).ok_or(ContinuumError::NotAnnular)?;
    let u_minus = interior4(&closure4(&comps.mask(lo_id, n), lat, band), lat, band);
    let u_plus = interior4(&closure4(&comps.mask(up_id, n), lat, band), lat, band);
    let b_minus = boundary8(&u_minus, lat, band);
    let b_plus = boundary8(&u_plus, lat, band);
    let frontier = CellSet {
        n,
        bits: b_minus.bits.iter().zip(&b_plus.bits).map(|(a, b)| *a && *b).collect(),
    };
    let frontier = close_diagonal_gaps(frontier, &k.cells, lat);
    debug_assert!(frontier.is_subset(&k.cells));
    let frontier = GridContinuum::from_set(k.chart, frontier).map_err(|_| ContinuumError::NotAnnular)?;
    let (comps, lo_id, up_id) = annular_split(&frontier.cells, lat, band).ok_or(ContinuumError::NotAnnular)?;
    Ok(FrontierDecomposition {
        lower: comps.mask(lo_id, n),
        upper: comps.mask(up_id, n),
        frontier,
        band,
    })
}

/// Joins cells of `s` that touch only at a corner through their shared
/// 4-neighbor in `k`, the lower one when both qualify.
fn close_diagonal_gaps(s: CellSet, k: &CellSet, lat: Lattice) -> CellSet {
    let mut out = s.clone();
    for c in s.iter() {
        for d in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
            let Some((a, b, _)) = lat.step(c.i, c.j, d) else { continue };
            if !s.get(a, b) {
                continue;
            }
            let mut via: Vec<(usize, usize)> =
                [(d.0, 0), (0, d.1)].iter().filter_map(|&e| lat.step(c.i, c.j, e)).map(|(x, y, _)| (x, y)).collect();
            if via.iter().any(|&(x, y)| s.get(x, y)) {
                continue;
            }
            via.sort_by_key(|&(x, y)| (y, x));
            if let Some(&(x, y)) = via.iter().find(|&&(x, y)| k.get(x, y)) {
                out.insert(CellIndex::new(x, y));
            }
        }
    }
    out
}

/// One-cell 4-dilation, kept inside the band.
fn closure4(s: &CellSet, lat: Lattice, band: RowBand) -> CellSet {
    let mut out = s.clone();
    for c in s.iter() {
        for d in N4 {
            if let Some((a, b, _)) = lat.step(c.i, c.j, d) {
                if band.contains(b) {
                    out.bits[b * lat.n + a] = true;
                }
            }
        }
    }
    out
}

/// Cells whose 4-neighbors all lie in `s`; neighbors outside the band or
/// the chart count as inside.
fn interior4(s: &CellSet, lat: Lattice, band: RowBand) -> CellSet {
    let mut out = CellSet::empty(lat.n);
    for c in s.iter() {
        let inner = N4.iter().all(|&d| match lat.step(c.i, c.j, d) {
            Some((a, b, _)) => !band.contains(b) || s.get(a, b),
            None => true,
        });
        if inner {
            out.insert(c);
        }
    }
    out
}

/// Band cells outside `s` that are 8-adjacent to `s`.
fn boundary8(s: &CellSet, lat: Lattice, band: RowBand) -> CellSet {
    let mut out = CellSet::empty(lat.n);
    for c in s.iter() {
        for d in N8 {
            if let Some((a, b, _)) = lat.step(c.i, c.j, d) {
                if band.contains(b) && !s.get(a, b) {
                    out.insert(CellIndex::new(a, b));
                }
            }
        }
    }
    out
}

/// Band cells outside `s` that are 8-adjacent to `s`, on the lattice of `chart`.
pub fn outer_boundary(s: &CellSet, chart: Chart, band: RowBand) -> CellSet {
    boundary8(s, Lattice::of(chart, s.n()), band)
}

/// Compares the highest cells of two disjoint crossing continua in the
/// column containing abscissa `x`.
pub fn order_compare(k1: &GridContinuum, k2: &GridContinuum, x: f64) -> Result<Ordering, ContinuumError> {
    let column = column_of(x, k1.n());
    let ord = compare_column(k1, k2, column)?;
    if cfg!(debug_assertions) {
        let flip = (0..k1.n()).find(|&i| compare_column(k1, k2, i).is_ok_and(|o| o != ord));
        if let Some(i) = flip {
            debug_assert!(!k1.is_disjoint(k2), "ordering changes at column {i}");
        }
    }
    Ok(ord)
}

fn compare_column(k1: &GridContinuum, k2: &GridContinuum, column: usize) -> Result<Ordering, ContinuumError> {
    let a = k1.column_max(column).ok_or(ContinuumError::ColumnMiss { column })?;
    let b = k2.column_max(column).ok_or(ContinuumError::ColumnMiss { column })?;
    Ok(a.cmp(&b))
}

fn column_of(x: f64, n: usize) -> usize {
    Chart::SQUARE.cell_of(ChartPoint::new(x.clamp(0.0, 1.0), 0.0), n).i
}

/// The three vertical lines used by the separator.
pub const DEFAULT_COLUMNS: [f64; 3] = [0.25, 0.5, 0.75];

/// Pairwise-disjoint continua sorted strictly under the column order.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuumFamily {
    members: Vec<GridContinuum>,
    order_key: Vec<[f64; 3]>,
    columns: [f64; 3],
}

impl ContinuumFamily {
    pub fn new(members: Vec<GridContinuum>, columns: [f64; 3]) -> Result<Self, ContinuumError> {
        check_grid(&members)?;
        for a in 0..members.len() {
            for b in a + 1..members.len() {
                if !members[a].is_disjoint(&members[b]) {
                    return Err(ContinuumError::Overlap { a, b });
                }
            }
        }
        Self::sorted(members, columns)
    }

    /// Keeps members in order, discarding any that overlap an earlier one.
    pub fn from_disjoint_filter(candidates: Vec<GridContinuum>, columns: [f64; 3]) -> Result<Self, ContinuumError> {
        check_grid(&candidates)?;
        let mut kept: Vec<GridContinuum> = Vec::new();
        for c in candidates {
            if kept.iter().all(|k| k.is_disjoint(&c)) {
                kept.push(c);
            }
        }
        Self::sorted(kept, columns)
    }

    pub fn empty(columns: [f64; 3]) -> Self {
        ContinuumFamily { members: Vec::new(), order_key: Vec::new(), columns }
    }

    fn sorted(members: Vec<GridContinuum>, columns: [f64; 3]) -> Result<Self, ContinuumError> {
        let mut keyed = members
            .into_iter()
            .map(|m| Ok((column_heights(&m, columns)?, m)))
            .collect::<Result<Vec<_>, ContinuumError>>()?;
        keyed.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]));
        for w in 1..keyed.len() {
            if keyed[w - 1].0[0] >= keyed[w].0[0] {
                return Err(ContinuumError::NotOrdered { a: w - 1, b: w });
            }
        }
        let (order_key, members) = keyed.into_iter().unzip();
        Ok(ContinuumFamily { members, order_key, columns })
    }

    pub fn members(&self) -> &[GridContinuum] {
        &self.members
    }

    pub fn order_key(&self) -> &[[f64; 3]] {
        &self.order_key
    }

    pub fn columns(&self) -> [f64; 3] {
        self.columns
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

fn check_grid(members: &[GridContinuum]) -> Result<(), ContinuumError> {
    match members.first() {
        Some(f) if members.iter().any(|m| m.n() != f.n() || m.chart() != f.chart()) => Err(ContinuumError::GridMismatch),
        _ => Ok(()),
    }
}

/// `max pr₂(K ∩ ℓ)` at each column, as the center height of the top cell.
pub fn column_heights(k: &GridContinuum, xs: [f64; 3]) -> Result<[f64; 3], ContinuumError> {
    let n = k.n();
    let mut y = [0.0; 3];
    for (slot, x) in y.iter_mut().zip(xs) {
        let column = column_of(x, n);
        let j = k.column_max(column).ok_or(ContinuumError::ColumnMiss { column })?;
        *slot = (j as f64 + 0.5) / n as f64;
    }
    Ok(y)
}

/// The coordinate triples `(y₁, y₂, y₃)` of a family; verified to be a chain.
pub fn chain_coordinates(f: &ContinuumFamily, xs: [f64; 3], delta: f64) -> Result<Vec<[f64; 3]>, ContinuumError> {
    let mut out = Vec::with_capacity(f.len());
    for (member, k) in f.members().iter().enumerate() {
        let n = k.n() as f64;
        if let Some(c) = k.iter().find(|c| {
            let y = (c.j as f64 + 0.5) / n;
            y < delta || y > 1.0 - delta
        }) {
            return Err(ContinuumError::MarginViolation { member, row: c.j });
        }
        out.push(column_heights(k, xs)?);
    }
    if let Some((a, b)) = chain_violation(&out) {
        return Err(ContinuumError::NotChain { a, b });
    }
    Ok(out)
}

/// First pair incomparable in the product order.
pub fn chain_violation(points: &[[f64; 3]]) -> Option<(usize, usize)> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| points[a].iter().sum::<f64>().total_cmp(&points[b].iter().sum::<f64>()));
    idx.windows(2)
        .find(|w| !(0..3).all(|k| points[w[0]][k] <= points[w[1]][k]))
        .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
}

/// How consecutive samples are joined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleOrder {
    /// Bridge in the given order; `closed` also joins last to first.
    Path { closed: bool },
    /// Sort by abscissa first, as for an orbit cloud on a circle.
    Angular,
}

/// Marks every sampled cell and joins consecutive cells by minimal
/// 4-connected staircases.
pub fn rasterize(samples: &[ChartPoint], chart: Chart, n: usize, order: SampleOrder) -> Result<GridContinuum, ContinuumError> {
    let lat = Lattice::of(chart, n);
    let (mut cells, closed): (Vec<CellIndex>, bool) = match order {
        SampleOrder::Path { closed } => (samples.iter().map(|p| chart.cell_of(*p, n)).collect(), closed),
        SampleOrder::Angular => {
            let mut sorted = samples.to_vec();
            sorted.sort_by(|p, q| p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y)));
            (sorted.iter().map(|p| chart.cell_of(*p, n)).collect(), lat.wrap[0])
        }
    };
    cells.dedup();
    let Some(&first) = cells.first() else {
        return Err(ContinuumError::Empty);
    };
    let mut set = CellSet::empty(n);
    set.insert(first);
    for w in cells.windows(2) {
        bridge(&mut set, lat, w[0], w[1]);
    }
    if closed && cells.len() > 1 {
        bridge(&mut set, lat, cells[cells.len() - 1], first);
    }
    GridContinuum::from_set(chart, set)
}

fn bridge(set: &mut CellSet, lat: Lattice, from: CellIndex, to: CellIndex) {
    let n = lat.n as i64;
    let dx = lat.offset(from.i, to.i, 0);
    let dy = lat.offset(from.j, to.j, 1);
    let (ax, ay) = (dx.abs(), dy.abs());
    let (mut x, mut y) = (from.i as i64, from.j as i64);
    let (mut sx, mut sy) = (0, 0);
    while sx < ax || sy < ay {
        // Step along the axis that lags the straight segment more.
        let take_x = sy >= ay || (sx < ax && (2 * sx + 1) * ay <= (2 * sy + 1) * ax);
        if take_x {
            x += dx.signum();
            sx += 1;
        } else {
            y += dy.signum();
            sy += 1;
        }
        set.insert(CellIndex::new(x.rem_euclid(n) as usize, y.rem_euclid(n) as usize));
    }
    set.insert(to);
}

/// Writes a plain (P1) bitmap; the top image row is the highest grid row.
pub fn write_pbm<W: Write>(k: &GridContinuum, mut w: W) -> std::io::Result<()> {
    let n = k.n();
    writeln!(w, "P1\n{n} {n}")?;
    for j in (0..n).rev() {
        let line: Vec<&str> = (0..n).map(|i| if k.cells.get(i, j) { "1" } else { "0" }).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Reads a square P1 or P4 bitmap into a cell mask.
pub fn read_pbm_cells<R: BufRead>(mut r: R) -> Result<CellSet, ContinuumError> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    let mut pos = 0;
    let magic = pbm_token(&data, &mut pos)?;
    let width: usize = parse_token(&pbm_token(&data, &mut pos)?)?;
    let height: usize = parse_token(&pbm_token(&data, &mut pos)?)?;
    if width != height || width == 0 {
        return Err(ContinuumError::Format(format!("expected a square image, got {width}x{height}")));
    }
    let n = width;
    let mut set = CellSet::empty(n);
    match magic.as_str() {
        "P1" => {
            let mut k = 0;
            while k < n * n {
                while pos < data.len() && (data[pos].is_ascii_whitespace() || data[pos] == b'#') {
                    if data[pos] == b'#' {
                        skip_comment(&data, &mut pos);
                    } else {
                        pos += 1;
                    }
                }
                let bit = match data.get(pos) {
                    Some(b'0') => false,
                    Some(b'1') => true,
                    _ => return Err(ContinuumError::Format("truncated P1 raster".into())),
                };
                pos += 1;
                if bit {
                    set.insert(CellIndex::new(k % n, n - 1 - k / n));
                }
                k += 1;
            }
        }
        "P4" => {
            pos += 1;
            let stride = n.div_ceil(8);
            let raster = data.get(pos..pos + stride * n).ok_or_else(|| ContinuumError::Format("truncated P4 raster".into()))?;
            for row in 0..n {
                for i in 0..n {
                    if raster[row * stride + i / 8] & (0x80 >> (i % 8)) != 0 {
                        set.insert(CellIndex::new(i, n - 1 - row));
                    }
                }
            }
        }
        other => return Err(ContinuumError::Format(format!("unsupported magic {other:?}"))),
    }
    Ok(set)
}

pub fn read_pbm<R: BufRead>(r: R, chart: Chart) -> Result<GridContinuum, ContinuumError> {
    GridContinuum::from_set(chart, read_pbm_cells(r)?)
}

fn skip_comment(data: &[u8], pos: &mut usize) {
    while *pos < data.len() && data[*pos] != b'\n' {
        *pos += 1;
    }
}

fn pbm_token(data: &[u8], pos: &mut usize) -> Result<String, ContinuumError> {
    loop {
        match data.get(*pos) {
            Some(b'#') => skip_comment(data, pos),
            Some(c) if c.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(ContinuumError::Format("unexpected end of header".into())),
        }
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    Ok(String::from_utf8_lossy(&data[start..*pos]).into_owned())
}

fn parse_token(t: &str) -> Result<usize, ContinuumError> {
    t.parse().map_err(|_| ContinuumError::Format(format!("bad header value {t:?}")))
}

/// Writes a plain (P2) graymap with member `k` at gray level `k + 1`.
pub fn write_family_pgm<W: Write>(f: &ContinuumFamily, n: usize, w: W) -> std::io::Result<()> {
    write_layers_pgm(f.members(), n, w)
}

/// As [`write_family_pgm`] for any list of continua; later layers win.
pub fn write_layers_pgm<W: Write>(layers: &[GridContinuum], n: usize, mut w: W) -> std::io::Result<()> {
    let mut level = vec![0usize; n * n];
    for (k, m) in layers.iter().enumerate() {
        for c in m.iter().filter(|c| c.i < n && c.j < n) {
            level[c.j * n + c.i] = k + 1;
        }
    }
    writeln!(w, "P2\n{n} {n}\n{}", layers.len().max(1))?;
    for j in (0..n).rev() {
        let line: Vec<String> = (0..n).map(|i| level[j * n + i].to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn curve(chart: Chart, n: usize, y: impl Fn(f64) -> f64) -> GridContinuum {
        let pts: Vec<ChartPoint> = (0..4 * n).map(|k| k as f64 / (4 * n) as f64).map(|x| ChartPoint::new(x, y(x))).collect();
        rasterize(&pts, chart, n, SampleOrder::Path { closed: chart.wraps_x() }).unwrap()
    }

    fn with_whisker(k: &GridContinuum, column: usize, from: usize, len: usize) -> GridContinuum {
        let mut cells: Vec<CellIndex> = k.iter().collect();
        cells.extend((from..from + len).map(|j| CellIndex::new(column, j)));
        GridContinuum::from_cells(k.chart(), k.n(), cells).unwrap()
    }

    fn row_cells(n: usize, j: usize) -> Vec<CellIndex> {
        (0..n).map(|i| CellIndex::new(i, j)).collect()
    }

    #[test]
    fn construction_checks() {
        assert!(matches!(GridContinuum::from_cells(Chart::SQUARE, 8, []), Err(ContinuumError::Empty)));
        let two = [CellIndex::new(0, 0), CellIndex::new(2, 0)];
        assert!(matches!(GridContinuum::from_cells(Chart::SQUARE, 8, two), Err(ContinuumError::NotConnected)));
        let seam = [CellIndex::new(0, 3), CellIndex::new(7, 3)];
        assert!(GridContinuum::from_cells(Chart::ANNULUS, 8, seam).is_ok());
        assert!(GridContinuum::from_cells(Chart::SQUARE, 8, seam).is_err());
        assert!(matches!(
            GridContinuum::from_cells(Chart::SQUARE, 8, [CellIndex::new(8, 0)]),
            Err(ContinuumError::CellOutOfRange { .. })
        ));
    }

    #[test]
    fn crossing_examples() {
        let n = 64;
        let line = GridContinuum::row(Chart::SQUARE, n, 32).unwrap();
        assert!(crosses_horizontally(&line));
        let vertical = GridContinuum::from_cells(Chart::SQUARE, n, (0..n).map(|j| CellIndex::new(32, j))).unwrap();
        assert!(!crosses_horizontally(&vertical));
        let sine = curve(Chart::SQUARE, n, |x| 0.5 + 0.2 * (TAU * x).sin());
        assert!(crosses_horizontally(&sine));
        let partial = GridContinuum::from_cells(Chart::SQUARE, n, (0..n - 1).map(|i| CellIndex::new(i, 20))).unwrap();
        assert!(!crosses_horizontally(&partial));
    }

    #[test]
    fn sine_crossing_matches_flood_oracle() {
        // Independent oracle: repeated relaxation until no change.
        let n = 64;
        let sine = curve(Chart::SQUARE, n, |x| 0.5 + 0.2 * (TAU * x).sin());
        let mut reach = vec![vec![false; n]; n];
        for i in 0..n {
            reach[0][i] = !sine.contains(CellIndex::new(i, 0));
        }
        let mut changed = true;
        while changed {
            changed = false;
            for j in 0..n {
                for i in 0..n {
                    if reach[j][i] || sine.contains(CellIndex::new(i, j)) {
                        continue;
                    }
                    let lit = (j.saturating_sub(1)..=(j + 1).min(n - 1))
                        .any(|b| (i.saturating_sub(1)..=(i + 1).min(n - 1)).any(|a| reach[b][a]));
                    if lit {
                        reach[j][i] = true;
                        changed = true;
                    }
                }
            }
        }
        assert_eq!(crosses_horizontally(&sine), !reach[n - 1].iter().any(|r| *r));
    }

    #[test]
    fn essential_examples() {
        let n = 64;
        let band = RowBand::from_band(Band::new(0.2, 0.8).unwrap(), n).unwrap();
        let circle = GridContinuum::row(Chart::ANNULUS, n, 32).unwrap();
        assert!(is_essential(&circle, band));
        let arc = GridContinuum::from_cells(Chart::ANNULUS, n, (0..40).map(|i| CellIndex::new(i, 32))).unwrap();
        assert!(!is_essential(&arc, band));
        let whisker = with_whisker(&circle, 10, 33, 6);
        assert!(is_essential(&whisker, band));
        assert!(!is_essential(&GridContinuum::row(Chart::ANNULUS, n, 2).unwrap(), band));
    }

    #[test]
    fn essential_matches_component_count_oracle() {
        let n = 32;
        let band = RowBand::full(n);
        let circle = curve(Chart::ANNULUS, n, |x| 0.5 + 0.1 * (TAU * x).cos());
        let whisker = with_whisker(&circle, 5, circle.column_max(5).unwrap() + 1, 4);
        for k in [&circle, &whisker] {
            // Union-find over complement cells with 8-neighbors and x seam.
            let idx = |i: usize, j: usize| j * n + i;
            let mut parent: Vec<usize> = (0..n * n).collect();
            fn find(p: &mut [usize], x: usize) -> usize {
                let mut r = x;
                while p[r] != r {
                    r = p[r];
                }
                p[x] = r;
                r
            }
            for j in 0..n {
                for i in 0..n {
                    if k.contains(CellIndex::new(i, j)) {
                        continue;
                    }
                    for (di, dj) in [(1i64, 0i64), (1, 1), (0, 1), (-1, 1)] {
                        let a = (i as i64 + di).rem_euclid(n as i64) as usize;
                        let b = j as i64 + dj;
                        if b >= n as i64 || k.contains(CellIndex::new(a, b as usize)) {
                            continue;
                        }
                        let (ra, rb) = (find(&mut parent, idx(i, j)), find(&mut parent, idx(a, b as usize)));
                        parent[ra] = rb;
                    }
                }
            }
            let mut roots: Vec<usize> = (0..n * n)
                .filter(|&c| !k.contains(CellIndex::new(c % n, c / n)))
                .map(|c| find(&mut parent, c))
                .collect();
            roots.sort();
            roots.dedup();
            assert_eq!(roots.len(), 2);
            assert!(is_essential(k, band));
        }
    }

    #[test]
    fn frontier_of_circle_is_itself() {
        let n = 64;
        let band = RowBand::full(n);
        let circle = GridContinuum::row(Chart::ANNULUS, n, 30).unwrap();
        let d = extract_frontier(&circle, band).unwrap();
        assert_eq!(d.frontier, circle);
        assert_eq!(d.lower.len(), 30 * n);
        assert_eq!(d.upper.len(), 33 * n);
        assert!(d.lower.is_disjoint(&d.upper));
    }

    #[test]
    fn frontier_drops_whiskers() {
        let n = 64;
        let band = RowBand::full(n);
        let wavy = curve(Chart::ANNULUS, n, |x| 0.5 + 0.15 * (2.0 * TAU * x).sin());
        let up = with_whisker(&wavy, 7, wavy.column_max(7).unwrap() + 1, 6);
        let j = (0..n).find(|&j| up.contains(CellIndex::new(40, j))).unwrap();
        let both = with_whisker(&up, 40, j - 5, 5);
        let d = extract_frontier(&both, band).unwrap();
        assert_eq!(d.frontier, wavy);
        let again = extract_frontier(&d.frontier, band).unwrap();
        assert_eq!(again.frontier, d.frontier);
        let covered = d.lower.len() + d.upper.len() + d.frontier.len();
        assert_eq!(covered, n * n);
    }

    #[test]
    fn frontier_is_connected_across_thick_corners() {
        // A 2x2 block where the curve steps down leaves the one-sided
        // boundaries meeting only diagonally.
        let n = 32;
        let mut cells = Vec::new();
        cells.extend((0..=17).map(|i| CellIndex::new(i, 9)));
        cells.extend((16..n).map(|i| CellIndex::new(i, 8)));
        cells.push(CellIndex::new(17, 8));
        cells.push(CellIndex::new(n - 1, 9));
        let k = GridContinuum::from_cells(Chart::ANNULUS, n, cells).unwrap();
        let d = extract_frontier(&k, RowBand::full(n)).unwrap();
        assert!(d.frontier.cells().is_subset(k.cells()));
        assert!(is_essential(&d.frontier, RowBand::full(n)));
        assert_eq!(extract_frontier(&d.frontier, RowBand::full(n)).unwrap().frontier, d.frontier);
    }

    #[test]
    fn angular_raster_follows_a_descending_curve() {
        // A V-shaped dip two rows deep per column.
        let n = 64;
        let y = |x: f64| 0.5 - 2.0 * (0.1 - (x - 0.5).abs()).max(0.0);
        let pts: Vec<ChartPoint> = (0..4096).map(|k| k as f64 / 4096.0).map(|x| ChartPoint::new(x, y(x))).collect();
        let k = rasterize(&pts, Chart::ANNULUS, n, SampleOrder::Angular).unwrap();
        let row = |v: f64| (v * n as f64).floor() as usize;
        for c in k.iter() {
            let (x0, x1) = (c.i as f64 / n as f64, (c.i + 1) as f64 / n as f64);
            let ys = [y(x0), y(x1), y(x0.max(0.5).min(x1))];
            let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            // One row of slack for staircase corners.
            assert!(row(lo) <= c.j + 1 && c.j <= row(hi) + 1, "{c:?} off the curve");
        }
    }

    #[test]
    fn thick_band_has_interior() {
        let n = 64;
        let cells = (26..=38).flat_map(|j| row_cells(n, j));
        let thick = GridContinuum::from_cells(Chart::ANNULUS, n, cells).unwrap();
        assert!(matches!(
            extract_frontier(&thick, RowBand::full(n)),
            Err(ContinuumError::NotEmptyInterior { .. })
        ));
    }

    #[test]
    fn frontier_needs_annular_input() {
        let n = 32;
        let arc = GridContinuum::from_cells(Chart::ANNULUS, n, (0..20).map(|i| CellIndex::new(i, 16))).unwrap();
        assert!(matches!(extract_frontier(&arc, RowBand::full(n)), Err(ContinuumError::NotAnnular)));
    }

    #[test]
    fn order_examples() {
        let n = 64;
        let low = GridContinuum::row(Chart::SQUARE, n, 19).unwrap();
        let high = GridContinuum::row(Chart::SQUARE, n, 44).unwrap();
        for x in [0.1, 0.5, 0.9] {
            assert_eq!(order_compare(&low, &high, x).unwrap(), Ordering::Less);
            assert_eq!(order_compare(&high, &low, x).unwrap(), Ordering::Greater);
        }
        let a = curve(Chart::SQUARE, n, |x| 0.4 + 0.1 * (TAU * x).sin());
        let b = curve(Chart::SQUARE, n, |x| 0.6 + 0.1 * (TAU * x).sin());
        assert!(a.is_disjoint(&b));
        for i in 0..n {
            let x = (i as f64 + 0.5) / n as f64;
            assert_eq!(order_compare(&a, &b, x).unwrap(), Ordering::Less);
        }
        let short = GridContinuum::from_cells(Chart::SQUARE, n, (0..10).map(|i| CellIndex::new(i, 5))).unwrap();
        assert!(matches!(order_compare(&short, &high, 0.5), Err(ContinuumError::ColumnMiss { column: 32 })));
    }

    fn random_graph_family(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<GridContinuum> {
        // Disjoint graphs: sorted base heights with a shared bounded wobble.
        let mut bases: Vec<usize> = (0..count).map(|_| 2 * rng.gen_range(10..n / 2 - 10)).collect();
        bases.sort();
        bases.dedup();
        let phase = rng.gen::<f64>() * TAU;
        bases
            .into_iter()
            .map(|b| {
                let height = |i: usize| (b as i64 + (3.0 * (TAU * i as f64 / n as f64 + phase).sin()).round() as i64) as usize;
                let mut cells = Vec::new();
                for i in 0..n {
                    let (j0, j1) = if i == 0 { (height(0), height(0)) } else { (height(i - 1), height(i)) };
                    cells.extend((j0.min(j1)..=j0.max(j1)).map(|j| CellIndex::new(i, j)));
                }
                GridContinuum::from_cells(Chart::SQUARE, n, cells).unwrap()
            })
            .collect()
    }

    #[test]
    fn order_is_strict_total_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fam = random_graph_family(&mut rng, 256, 100);
        let m = fam.len();
        let table: Vec<Vec<bool>> =
            (0..m).map(|a| (0..m).map(|b| order_compare(&fam[a], &fam[b], 0.5).unwrap() == Ordering::Less).collect()).collect();
        let lt = |a: usize, b: usize| table[a][b];
        for a in 0..m {
            assert!(!lt(a, a));
            for b in 0..m {
                if a != b {
                    assert!(lt(a, b) ^ lt(b, a));
                }
            }
        }
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    if lt(a, b) && lt(b, c) {
                        assert!(lt(a, c));
                    }
                }
            }
        }
    }

    #[test]
    fn family_construction() {
        let n = 64;
        let rows = [45, 19, 32];
        let members: Vec<_> = rows.iter().map(|&j| GridContinuum::row(Chart::SQUARE, n, j).unwrap()).collect();
        let fam = ContinuumFamily::new(members.clone(), DEFAULT_COLUMNS).unwrap();
        let heights: Vec<usize> = fam.members().iter().map(|m| m.column_max(0).unwrap()).collect();
        assert_eq!(heights, vec![19, 32, 45]);
        let mut dup = members.clone();
        dup.push(members[0].clone());
        assert!(matches!(ContinuumFamily::new(dup.clone(), DEFAULT_COLUMNS), Err(ContinuumError::Overlap { .. })));
        assert_eq!(ContinuumFamily::from_disjoint_filter(dup, DEFAULT_COLUMNS).unwrap().len(), 3);
    }

    #[test]
    fn chain_coordinate_examples() {
        let n = 64;
        let members: Vec<_> = [0.3, 0.5, 0.7]
            .iter()
            .map(|y| GridContinuum::row(Chart::SQUARE, n, (y * n as f64) as usize).unwrap())
            .collect();
        let fam = ContinuumFamily::new(members.clone(), DEFAULT_COLUMNS).unwrap();
        let a = chain_coordinates(&fam, DEFAULT_COLUMNS, 0.1).unwrap();
        for (t, y) in a.iter().zip([0.3, 0.5, 0.7]) {
            assert!(t.iter().all(|v| (v - y).abs() <= 1.0 / n as f64));
        }
        let single = ContinuumFamily::new(vec![members[1].clone()], DEFAULT_COLUMNS).unwrap();
        assert_eq!(chain_coordinates(&single, DEFAULT_COLUMNS, 0.1).unwrap().len(), 1);
        let low = GridContinuum::row(Chart::SQUARE, n, 2).unwrap();
        let fam = ContinuumFamily::new(vec![low], DEFAULT_COLUMNS).unwrap();
        assert!(matches!(
            chain_coordinates(&fam, DEFAULT_COLUMNS, 0.1),
            Err(ContinuumError::MarginViolation { member: 0, row: 2 })
        ));
    }

    #[test]
    fn random_graph_families_give_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let fam = ContinuumFamily::new(random_graph_family(&mut rng, 256, 100), DEFAULT_COLUMNS).unwrap();
        let a = chain_coordinates(&fam, DEFAULT_COLUMNS, 0.05).unwrap();
        for p in &a {
            for q in &a {
                let le = (0..3).all(|k| p[k] <= q[k]);
                let ge = (0..3).all(|k| p[k] >= q[k]);
                assert!(le || ge);
            }
        }
        assert!(chain_violation(&[[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]).is_some());
    }

    #[test]
    fn rasterize_examples() {
        let n = 64;
        let pts: Vec<ChartPoint> = (0..10_000).map(|k| ChartPoint::new(k as f64 / 1e4, 0.5)).collect();
        let k = rasterize(&pts, Chart::ANNULUS, n, SampleOrder::Path { closed: true }).unwrap();
        assert_eq!(k, GridContinuum::row(Chart::ANNULUS, n, 32).unwrap());
        let one = rasterize(&[ChartPoint::new(0.3, 0.3)], Chart::SQUARE, n, SampleOrder::Angular).unwrap();
        assert_eq!(one.len(), 1);
        assert!(matches!(rasterize(&[], Chart::SQUARE, n, SampleOrder::Angular), Err(ContinuumError::Empty)));
    }

    #[test]
    fn golden_orbit_rasterizes_to_ring() {
        let n = 64;
        let golden = (5f64.sqrt() - 1.0) / 2.0;
        let y = 0.37;
        let pts: Vec<ChartPoint> = (0..500).map(|k| ChartPoint::new((k as f64 * golden).fract(), y + 0.03 * (TAU * (k as f64 * golden)).sin())).collect();
        let k = rasterize(&pts, Chart::ANNULUS, n, SampleOrder::Angular).unwrap();
        assert!(is_essential(&k, RowBand::full(n)));
        assert!((0..n).all(|i| k.column_max(i).is_some()));
    }

    #[test]
    fn bridge_is_minimal() {
        let n = 32;
        let lat = Lattice { n, wrap: [true, false] };
        let mut set = CellSet::empty(n);
        set.insert(CellIndex::new(30, 4));
        bridge(&mut set, lat, CellIndex::new(30, 4), CellIndex::new(2, 7));
        assert_eq!(set.len(), 1 + 4 + 3);
        assert!(set.contains(CellIndex::new(0, 5)) || set.contains(CellIndex::new(0, 6)) || set.contains(CellIndex::new(31, 5)));
    }

    #[test]
    fn pbm_and_json_round_trip() {
        let n = 16;
        let k = curve(Chart::ANNULUS, n, |x| 0.5 + 0.2 * (TAU * x).sin());
        let mut buf = Vec::new();
        write_pbm(&k, &mut buf).unwrap();
        assert_eq!(read_pbm(&buf[..], Chart::ANNULUS).unwrap(), k);
        let text = String::from_utf8(buf).unwrap();
        let top = text.lines().nth(2).unwrap();
        assert_eq!(top.contains('1'), k.iter().any(|c| c.j == n - 1));

        let mut p4 = b"P4\n# comment\n16 16\n".to_vec();
        for j in (0..n).rev() {
            let mut row = [0u8; 2];
            for i in 0..n {
                if k.contains(CellIndex::new(i, j)) {
                    row[i / 8] |= 0x80 >> (i % 8);
                }
            }
            p4.extend_from_slice(&row);
        }
        assert_eq!(read_pbm(&p4[..], Chart::ANNULUS).unwrap(), k);

        let json = serde_json::to_string(&k).unwrap();
        let back: GridContinuum = serde_json::from_str(&json).unwrap();
        assert_eq!(back, k);
        assert!(serde_json::from_str::<GridContinuum>(r#"{"chart":"square","n":4,"cells":[[0,0],[2,2]]}"#).is_err());
        assert!(matches!(read_pbm(&b"P1\n3 2\n0 0 0 0 0 0"[..], Chart::SQUARE), Err(ContinuumError::Format(_))));
    }

    #[test]
    fn family_pgm_levels() {
        let n = 8;
        let fam = ContinuumFamily::new(
            vec![GridContinuum::row(Chart::SQUARE, n, 2).unwrap(), GridContinuum::row(Chart::SQUARE, n, 5).unwrap()],
            DEFAULT_COLUMNS,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_family_pgm(&fam, n, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[2], "2");
        assert_eq!(lines[3 + (n - 1 - 5)], "2 2 2 2 2 2 2 2");
        assert_eq!(lines[3 + (n - 1 - 2)], "1 1 1 1 1 1 1 1");
    }

    #[test]
    fn row_band_from_band() {
        let b = RowBand::from_band(Band::new(0.2, 0.8).unwrap(), 64).unwrap();
        assert_eq!((b.lo, b.hi), (13, 50));
        assert_eq!(RowBand::full(8), RowBand { lo: 0, hi: 7 });
    }
}
