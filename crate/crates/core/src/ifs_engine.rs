//! Words over a pair of maps, the nine transitivity notions on finite
//! permutation models, and grid-coverage exploration on surfaces.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::io::Write;

use petgraph::algo::condensation;
use petgraph::graph::DiGraph;
use petgraph::visit::EdgeRef;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CellIndex, Chart, ChartPoint};
use crate::map_zoo::{AreaMap, MapError};
use crate::numfmt::fmt17;

#[derive(Debug, Error)]
pub enum IfsError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("letter {letter} has no map (only {maps} given)")]
    LetterOutOfRange { letter: usize, maps: usize },
    #[error("inverse letters need group mode")]
    InverseInSemigroup,
    #[error("maps live on different charts")]
    ChartMismatch,
    #[error("invalid input: {0}")]
    BadInput(&'static str),
    #[error("no hitting word up to length {max_len} ({explored} words explored)")]
    Timeout { max_len: usize, explored: usize },
}

/// Whether words may use inverse letters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Semigroup,
    Group,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Letter {
    pub map: usize,
    pub inverse: bool,
}

impl Letter {
    pub const fn gen(map: usize) -> Self {
        Letter { map, inverse: false }
    }

    pub const fn inv(map: usize) -> Self {
        Letter { map, inverse: true }
    }
}

/// A word applied left to right: `[a, b]` means `b(a(p))`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Word {
    pub letters: Vec<Letter>,
}

impl Word {
    pub fn identity() -> Self {
        Word::default()
    }

    pub fn from_indices(indices: &[usize]) -> Self {
        Word { letters: indices.iter().map(|&m| Letter::gen(m)).collect() }
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Letterwise inverse in reverse order.
    pub fn inverse(&self) -> Self {
        Word {
            letters: self.letters.iter().rev().map(|l| Letter { map: l.map, inverse: !l.inverse }).collect(),
        }
    }

    fn pushed(&self, l: Letter) -> Self {
        let mut w = self.clone();
        w.letters.push(l);
        w
    }
}

impl fmt::Display for Word {
    /// `f`, `g`, ... for generators, upper case for inverses, `e` when empty.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return write!(f, "e");
        }
        for l in &self.letters {
            let c = char::from(b'f' + (l.map % 20) as u8);
            write!(f, "{}", if l.inverse { c.to_ascii_uppercase() } else { c })?;
        }
        Ok(())
    }
}

pub fn apply_word(w: &Word, maps: &[AreaMap], p: ChartPoint, mode: Mode) -> Result<ChartPoint, IfsError> {
    w.letters.iter().try_fold(p, |q, l| {
        let m = maps.get(l.map).ok_or(IfsError::LetterOutOfRange { letter: l.map, maps: maps.len() })?;
        if l.inverse && mode == Mode::Semigroup {
            return Err(IfsError::InverseInSemigroup);
        }
        Ok(if l.inverse { m.apply_inverse(q)? } else { m.apply(q)? })
    })
}

/// Two permutations of `{0, …, n−1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinitePermModel {
    pub f: Vec<usize>,
    pub g: Vec<usize>,
}

impl FinitePermModel {
    pub fn new(f: Vec<usize>, g: Vec<usize>) -> Result<Self, IfsError> {
        if f.is_empty() || f.len() != g.len() {
            return Err(IfsError::BadInput("permutations must be nonempty and of equal size"));
        }
        if !is_permutation(&f) || !is_permutation(&g) {
            return Err(IfsError::BadInput("not a permutation"));
        }
        Ok(FinitePermModel { f, g })
    }

    /// Builds from disjoint cycles, e.g. `[[0, 1], [2, 3]]`.
    pub fn from_cycles(n: usize, f: &[&[usize]], g: &[&[usize]]) -> Result<Self, IfsError> {
        Self::new(cycles_to_perm(n, f)?, cycles_to_perm(n, g)?)
    }

    pub fn n(&self) -> usize {
        self.f.len()
    }

    /// Random model on `1..=max_n` points. Half the models preserve a random
    /// block partition, so both transitive and intransitive cases occur.
    pub fn random(rng: &mut impl Rng, max_n: usize) -> Self {
        let n = rng.gen_range(1..=max_n.max(1));
        let blocks = if rng.gen_bool(0.5) { rng.gen_range(1..=n) } else { 1 };
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut cuts: Vec<usize> = (1..n).collect();
        cuts.shuffle(rng);
        let mut cuts: Vec<usize> = cuts.into_iter().take(blocks - 1).collect();
        cuts.sort_unstable();
        cuts.insert(0, 0);
        cuts.push(n);
        let mut f = vec![0; n];
        let mut g = vec![0; n];
        for w in cuts.windows(2) {
            let block = &order[w[0]..w[1]];
            for perm in [&mut f, &mut g] {
                let mut image = block.to_vec();
                // Identity on a block now and then keeps degenerate cases in play.
                if !rng.gen_bool(0.2) {
                    image.shuffle(rng);
                }
                for (a, b) in block.iter().zip(image) {
                    perm[*a] = b;
                }
            }
        }
        FinitePermModel { f, g }
    }
}

fn is_permutation(p: &[usize]) -> bool {
    let mut seen = vec![false; p.len()];
    p.iter().all(|&v| v < p.len() && !std::mem::replace(&mut seen[v], true))
}

fn cycles_to_perm(n: usize, cycles: &[&[usize]]) -> Result<Vec<usize>, IfsError> {
    let mut p: Vec<usize> = (0..n).collect();
    for c in cycles {
        for k in 0..c.len() {
            let (a, b) = (c[k], c[(k + 1) % c.len()]);
            if a >= n || b >= n {
                return Err(IfsError::BadInput("cycle entry out of range"));
            }
            p[a] = b;
        }
    }
    if is_permutation(&p) {
        Ok(p)
    } else {
        Err(IfsError::BadInput("cycles overlap"))
    }
}

/// The nine transitivity notions, numbered as in the usual list: group
/// (1–3), semigroup (4–6), iterated function system (7–9).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitivityReport {
    pub values: [bool; 9],
}

impl TransitivityReport {
    pub fn all_agree(&self) -> bool {
        self.values.iter().all(|v| *v == self.values[0])
    }
}

/// Exact evaluation on the finite model, where every singleton is open:
/// "dense" means "all vertices" and a residual set is the whole set.
pub fn finite_transitivity_suite(m: &FinitePermModel) -> TransitivityReport {
    let n = m.n();
    let forward: Vec<[usize; 2]> = (0..n).map(|v| [m.f[v], m.g[v]]).collect();
    let mut inv_f = vec![0; n];
    let mut inv_g = vec![0; n];
    for v in 0..n {
        inv_f[m.f[v]] = v;
        inv_g[m.g[v]] = v;
    }
    let group_adj: Vec<Vec<usize>> = (0..n).map(|v| vec![m.f[v], m.g[v], inv_f[v], inv_g[v]]).collect();

    // Group orbits by BFS from each vertex (identity included).
    let group_orbit_full: Vec<bool> = (0..n).map(|v| bfs_reach(&group_adj, v, true).iter().all(|r| *r)).collect();
    let t1 = group_orbit_full.iter().any(|b| *b);
    let t3 = group_orbit_full.iter().all(|b| *b);

    // Reflexive transitive closure of the group action.
    let mut closure = vec![vec![false; n]; n];
    for v in 0..n {
        closure[v][v] = true;
        for &w in &group_adj[v] {
            closure[v][w] = true;
        }
    }
    warshall(&mut closure);
    let t2 = closure.iter().all(|row| row.iter().all(|b| *b));

    // Semigroup orbits: nonempty words only.
    let adj: Vec<Vec<usize>> = forward.iter().map(|e| e.to_vec()).collect();
    let semi_full: Vec<bool> = (0..n).map(|v| bfs_reach(&adj, v, false).iter().all(|r| *r)).collect();
    let t4 = semi_full.iter().any(|b| *b);
    let t6 = semi_full.iter().all(|b| *b);
    let mut reach = vec![vec![false; n]; n];
    for v in 0..n {
        for &w in &adj[v] {
            reach[v][w] = true;
        }
    }
    warshall(&mut reach);
    let t5 = reach.iter().all(|row| row.iter().all(|b| *b));

    // Branches: walks through the condensation DAG.
    let walks = BranchStructure::of(&forward);
    let t7 = walks.chain && walks.first_cyclic && walks.last_cyclic;
    let t8 = walks.chain && walks.last_cyclic;
    let t9 = (0..n).all(|v| walks.chain && walks.last_cyclic && walks.first_component.contains(&v));

    TransitivityReport { values: [t1, t2, t3, t4, t5, t6, t7, t8, t9] }
}

fn bfs_reach(adj: &[Vec<usize>], start: usize, include_start: bool) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::new();
    if include_start {
        seen[start] = true;
    }
    for &w in &adj[start] {
        if !seen[w] {
            seen[w] = true;
            queue.push_back(w);
        }
    }
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen
}

fn warshall(m: &mut [Vec<bool>]) {
    let n = m.len();
    for k in 0..n {
        for i in 0..n {
            if m[i][k] {
                for j in 0..n {
                    if m[k][j] {
                        m[i][j] = true;
                    }
                }
            }
        }
    }
}

/// Whether one walk can pass through every strongly connected component.
struct BranchStructure {
    /// Components are totally ordered with an edge between consecutive ones.
    chain: bool,
    first_cyclic: bool,
    last_cyclic: bool,
    first_component: Vec<usize>,
}

impl BranchStructure {
    fn of(edges: &[[usize; 2]]) -> Self {
        let mut g: DiGraph<usize, ()> = DiGraph::new();
        let nodes: Vec<_> = (0..edges.len()).map(|v| g.add_node(v)).collect();
        for (v, e) in edges.iter().enumerate() {
            for &w in e {
                g.add_edge(nodes[v], nodes[w], ());
            }
        }
        let has_cycle = |members: &[usize]| members.len() > 1 || edges[members[0]].contains(&members[0]);
        let dag = condensation(g, true);
        let k = dag.node_count();
        let indeg: Vec<usize> = dag.node_indices().map(|v| dag.neighbors_directed(v, petgraph::Incoming).count()).collect();
        let mut order = Vec::with_capacity(k);
        let mut current = dag.node_indices().find(|&v| indeg[v.index()] == 0);
        let mut chain = dag.node_indices().filter(|&v| indeg[v.index()] == 0).count() == 1;
        while let Some(v) = current {
            order.push(v);
            let succ: HashSet<_> = dag.edges(v).map(|e| e.target()).filter(|&t| t != v).collect();
            current = match succ.len() {
                0 => None,
                1 => succ.into_iter().next(),
                _ => {
                    // A later component reachable only through a sibling breaks the chain.
                    chain = false;
                    None
                }
            };
        }
        chain &= order.len() == k;
        let first = order.first().map(|&v| dag[v].clone()).unwrap_or_default();
        let last = order.last().map(|&v| dag[v].clone()).unwrap_or_default();
        BranchStructure {
            chain,
            first_cyclic: !first.is_empty() && has_cycle(&first),
            last_cyclic: !last.is_empty() && has_cycle(&last),
            first_component: first,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub models: usize,
    pub equivalent: usize,
    pub all_true: usize,
    pub all_false: usize,
}

/// Runs the suite on `models` random models, model `k` drawn from stream
/// `k` of the `finite-oracle` substream.
pub fn run_finite_oracle(models: usize, max_n: usize, seed: u64) -> OracleSummary {
    let reports: Vec<TransitivityReport> = (0..models)
        .into_par_iter()
        .map(|k| {
            let mut rng = crate::seeds::indexed(seed, "finite-oracle", k as u64);
            finite_transitivity_suite(&FinitePermModel::random(&mut rng, max_n))
        })
        .collect();
    OracleSummary {
        models,
        equivalent: reports.iter().filter(|r| r.all_agree()).count(),
        all_true: reports.iter().filter(|r| r.values.iter().all(|v| *v)).count(),
        all_false: reports.iter().filter(|r| r.values.iter().all(|v| !*v)).count(),
    }
}

/// Idle steps after which coverage exploration stops.
pub const SATURATION_WINDOW: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageOptions {
    pub mode: Mode,
    /// `None` disables the saturation stop.
    pub idle_limit: Option<usize>,
}

impl Default for CoverageOptions {
    fn default() -> Self {
        CoverageOptions { mode: Mode::Semigroup, idle_limit: Some(SATURATION_WINDOW) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub resolution: usize,
    pub budget: usize,
    pub start: ChartPoint,
    pub covered: usize,
    /// `fraction[k]` is the covered fraction using words of length ≤ k.
    pub fraction: Vec<f64>,
    pub saturated: bool,
    /// Witnesses dropped because a map failed on them.
    pub dropped: usize,
    #[serde(skip)]
    pub cells: Vec<bool>,
}

impl CoverageReport {
    pub fn final_fraction(&self) -> f64 {
        *self.fraction.last().expect("fraction starts with the start cell")
    }

    pub fn is_covered(&self, c: CellIndex) -> bool {
        self.cells.get(c.j * self.resolution + c.i).copied().unwrap_or(false)
    }

    /// Rows containing at least one covered cell.
    pub fn rows_touched(&self) -> Vec<usize> {
        let n = self.resolution;
        (0..n).filter(|&j| (0..n).any(|i| self.cells[j * n + i])).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "word_length,fraction")?;
        for (k, f) in self.fraction.iter().enumerate() {
            writeln!(w, "{k},{}", fmt17(*f))?;
        }
        Ok(())
    }

    /// Plain graymap of covered cells (top image row is the highest row).
    pub fn write_pgm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.resolution;
        writeln!(w, "P2\n{n} {n}\n1")?;
        for j in (0..n).rev() {
            let line: Vec<&str> = (0..n).map(|i| if self.cells[j * n + i] { "1" } else { "0" }).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

fn letters(count: usize, mode: Mode) -> Vec<Letter> {
    let mut out: Vec<Letter> = (0..count).map(Letter::gen).collect();
    if mode == Mode::Group {
        out.extend((0..count).map(Letter::inv));
    }
    out
}

fn apply_letter(maps: &[&AreaMap], l: Letter, p: ChartPoint) -> Result<ChartPoint, MapError> {
    if l.inverse {
        maps[l.map].apply_inverse(p)
    } else {
        maps[l.map].apply(p)
    }
}

/// Breadth-first cell exploration of the orbit of `start` under words in
/// `f` and `g`, one witness point per covered cell.
pub fn coverage_test(
    f: &AreaMap,
    g: &AreaMap,
    start: ChartPoint,
    n: usize,
    budget: usize,
    opts: CoverageOptions,
) -> Result<CoverageReport, IfsError> {
    if n < 8 {
        return Err(IfsError::BadInput("resolution must be at least 8"));
    }
    if budget == 0 {
        return Err(IfsError::BadInput("budget must be at least 1"));
    }
    if f.chart() != g.chart() {
        return Err(IfsError::ChartMismatch);
    }
    let chart = f.chart();
    if !chart.contains(start) {
        return Err(MapError::from(crate::geometry::DomainError::OutsideChart { kind: chart.kind(), x: start.x, y: start.y }).into());
    }
    let maps = [f, g];
    let alphabet = letters(2, opts.mode);
    let total = (n * n) as f64;
    let mut cells = vec![false; n * n];
    let c0 = chart.cell_of(start, n);
    cells[c0.j * n + c0.i] = true;
    let mut covered = 1;
    let mut frontier = vec![start];
    let mut fraction = vec![covered as f64 / total];
    let (mut idle, mut dropped, mut saturated) = (0, 0, false);
    for _ in 0..budget {
        let images: Vec<Result<ChartPoint, MapError>> = frontier
            .par_iter()
            .flat_map_iter(|&p| alphabet.iter().map(move |&l| apply_letter(&maps, l, p)))
            .collect();
        let mut next = Vec::new();
        for q in images {
            let Ok(q) = q else {
                dropped += 1;
                continue;
            };
            let c = chart.cell_of(q, n);
            let k = c.j * n + c.i;
            if !cells[k] {
                cells[k] = true;
                covered += 1;
                next.push(q);
            }
        }
        idle = if next.is_empty() { idle + 1 } else { 0 };
        frontier = next;
        fraction.push(covered as f64 / total);
        if opts.idle_limit.is_some_and(|limit| idle >= limit) {
            saturated = true;
            break;
        }
    }
    Ok(CoverageReport { resolution: n, budget, start, covered, fraction, saturated, dropped, cells })
}

/// Node cap for [`hitting_test`], on top of the word-length budget.
pub const HITTING_NODE_CAP: usize = 200_000;

/// The 3×3 sample stencil of a cell (offsets 1/6, 1/2, 5/6 of the side).
pub fn cell_stencil(chart: Chart, c: CellIndex, n: usize) -> Vec<ChartPoint> {
    let h = 1.0 / n as f64;
    let mut out = Vec::with_capacity(9);
    for b in [1.0, 3.0, 5.0] {
        for a in [1.0, 3.0, 5.0] {
            let p = ChartPoint::new((c.i as f64 + a / 6.0) * h, (c.j as f64 + b / 6.0) * h);
            debug_assert!(chart.contains(p));
            out.push(p);
        }
    }
    out
}

/// Shortest word carrying a stencil sample of `u` into `v`.
pub fn hitting_test(f: &AreaMap, g: &AreaMap, u: CellIndex, v: CellIndex, n: usize, budget: usize) -> Result<Word, IfsError> {
    if f.chart() != g.chart() {
        return Err(IfsError::ChartMismatch);
    }
    if n == 0 || u.i >= n || u.j >= n || v.i >= n || v.j >= n {
        return Err(IfsError::BadInput("cell outside the grid"));
    }
    let chart = f.chart();
    let maps = [f, g];
    let hits = |pts: &[ChartPoint]| pts.iter().any(|p| chart.cell_of(*p, n) == v);
    let start = cell_stencil(chart, u, n);
    if hits(&start) {
        return Ok(Word::identity());
    }
    let signature = |pts: &[ChartPoint]| {
        let mut s: Vec<CellIndex> = pts.iter().map(|p| chart.cell_of(*p, n)).collect();
        s.sort();
        s
    };
    let mut seen: HashSet<Vec<CellIndex>> = HashSet::from([signature(&start)]);
    let mut layer = vec![(Word::identity(), start)];
    let mut explored = 0;
    for _ in 0..budget {
        let mut next = Vec::new();
        for (w, pts) in &layer {
            for l in letters(2, Mode::Semigroup) {
                explored += 1;
                let images: Vec<ChartPoint> = pts.iter().filter_map(|p| apply_letter(&maps, l, *p).ok()).collect();
                if images.is_empty() {
                    continue;
                }
                let word = w.pushed(l);
                if hits(&images) {
                    return Ok(word);
                }
                if seen.insert(signature(&images)) {
                    next.push((word, images));
                }
            }
            if explored >= HITTING_NODE_CAP {
                return Err(IfsError::Timeout { max_len: budget, explored });
            }
        }
        if next.is_empty() {
            break;
        }
        layer = next;
    }
    Err(IfsError::Timeout { max_len: budget, explored })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_zoo::{KickShape, YBoundary};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn word_application() {
        let twist = AreaMap::standard_twist(Chart::ANNULUS);
        let p = ChartPoint::new(0.0, 0.25);
        assert_eq!(apply_word(&Word::identity(), std::slice::from_ref(&twist), p, Mode::Semigroup).unwrap(), p);
        let q = apply_word(&Word::from_indices(&[0, 0]), std::slice::from_ref(&twist), p, Mode::Semigroup).unwrap();
        assert!((q.x - 0.5).abs() < 1e-15 && q.y == 0.25);

        let kicked = AreaMap::standard_kicked(Chart::TORUS, 0.9).unwrap();
        let maps = [AreaMap::standard_twist(Chart::TORUS), kicked];
        let w = Word::from_indices(&[0, 1, 1, 0, 1]);
        let p = ChartPoint::new(0.3, 0.7);
        let q = apply_word(&w, &maps, p, Mode::Semigroup).unwrap();
        let back = apply_word(&w.inverse(), &maps, q, Mode::Group).unwrap();
        assert!(Chart::TORUS.distance(p, back) < 1e-9);
        assert!(matches!(apply_word(&w.inverse(), &maps, q, Mode::Semigroup), Err(IfsError::InverseInSemigroup)));
        assert!(matches!(
            apply_word(&Word::from_indices(&[2]), &maps, p, Mode::Semigroup),
            Err(IfsError::LetterOutOfRange { letter: 2, maps: 2 })
        ));
        assert_eq!(w.to_string(), "fggfg");
        assert_eq!(w.inverse().to_string(), "GFGGF");
    }

    #[test]
    fn finite_examples() {
        let cycle = FinitePermModel::from_cycles(3, &[&[0, 1, 2]], &[]).unwrap();
        assert_eq!(finite_transitivity_suite(&cycle).values, [true; 9]);
        let klein = FinitePermModel::from_cycles(4, &[&[0, 1], &[2, 3]], &[&[0, 2], &[1, 3]]).unwrap();
        assert_eq!(finite_transitivity_suite(&klein).values, [true; 9]);
        let stuck = FinitePermModel::from_cycles(4, &[&[0, 1]], &[&[0, 1]]).unwrap();
        assert_eq!(finite_transitivity_suite(&stuck).values, [false; 9]);
        let single = FinitePermModel::new(vec![0], vec![0]).unwrap();
        assert_eq!(finite_transitivity_suite(&single).values, [true; 9]);
    }

    #[test]
    fn model_validation() {
        assert!(FinitePermModel::new(vec![0, 0], vec![0, 1]).is_err());
        assert!(FinitePermModel::new(vec![], vec![]).is_err());
        assert!(FinitePermModel::from_cycles(3, &[&[0, 1], &[1, 2]], &[]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let m = FinitePermModel::random(&mut rng, 12);
            assert!(is_permutation(&m.f) && is_permutation(&m.g));
        }
    }

    /// Brute-force oracle: simulate all words up to length 2n from each
    /// vertex and compare against the suite's group/semigroup answers.
    #[test]
    fn suite_matches_word_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (mut yes, mut no) = (0, 0);
        for _ in 0..300 {
            let m = FinitePermModel::random(&mut rng, 7);
            let n = m.n();
            let orbit_full = |v: usize| {
                let mut seen = vec![false; n];
                let mut layer = vec![v];
                for _ in 0..2 * n {
                    layer = layer.iter().flat_map(|&x| [m.f[x], m.g[x]]).collect();
                    layer.sort();
                    layer.dedup();
                    for &x in &layer {
                        seen[x] = true;
                    }
                }
                seen.iter().all(|s| *s)
            };
            let expected = (0..n).all(orbit_full);
            let r = finite_transitivity_suite(&m);
            assert!(r.all_agree(), "{m:?} {r:?}");
            assert_eq!(r.values[5], expected);
            if expected {
                yes += 1;
            } else {
                no += 1;
            }
        }
        assert!(yes > 30 && no > 30, "{yes} {no}");
    }

    #[test]
    fn branch_structure_on_general_digraphs() {
        // 0 → 1 → 2 ⟲ : a chain ending in a loop.
        let b = BranchStructure::of(&[[1, 1], [2, 2], [2, 2]]);
        assert!(b.chain && b.last_cyclic && !b.first_cyclic);
        // 0 → {1, 2}, both sinks: not a chain.
        let b = BranchStructure::of(&[[1, 2], [1, 1], [2, 2]]);
        assert!(!b.chain);
    }

    #[test]
    fn oracle_is_deterministic() {
        let a = run_finite_oracle(50, 12, 7);
        let b = run_finite_oracle(50, 12, 7);
        assert_eq!(a, b);
        assert_eq!(a.equivalent, 50);
        assert!(a.all_true > 0 && a.all_false > 0);
    }

    #[test]
    fn coverage_identity_stays_put() {
        let id = AreaMap::identity(Chart::ANNULUS);
        let r = coverage_test(&id, &id, ChartPoint::new(0.3, 0.3), 16, 200, CoverageOptions::default()).unwrap();
        assert_eq!(r.covered, 1);
        assert!(r.fraction.iter().all(|f| *f == 1.0 / 256.0));
        assert!(r.saturated);
        assert_eq!(r.fraction.len(), SATURATION_WINDOW + 1);
        let r = coverage_test(&id, &id, ChartPoint::new(0.3, 0.3), 16, 80, CoverageOptions { idle_limit: None, ..Default::default() }).unwrap();
        assert!(!r.saturated);
        assert_eq!(r.fraction.len(), 81);
    }

    #[test]
    fn coverage_twist_confined_to_circle() {
        let t = AreaMap::standard_twist(Chart::ANNULUS);
        let n = 32;
        let golden = 0.5 + 0.1 * (5f64.sqrt() - 2.0);
        let r = coverage_test(&t, &t, ChartPoint::new(0.5, golden), n, 10_000, CoverageOptions::default()).unwrap();
        assert!(r.final_fraction() <= 2.0 / n as f64);
        assert_eq!(r.rows_touched().len(), 1);
        assert!(r.fraction.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn coverage_twist_and_kicked_fills_annulus() {
        let t = AreaMap::standard_twist(Chart::ANNULUS);
        let k = AreaMap::kicked_twist(Chart::ANNULUS, 1.5, KickShape::Sine, YBoundary::Wrap).unwrap();
        let r = coverage_test(&t, &k, ChartPoint::new(0.23, 0.41), 32, 10_000, CoverageOptions::default()).unwrap();
        assert!(r.final_fraction() >= 0.9, "{}", r.final_fraction());
        assert!(r.fraction.iter().all(|f| (0.0..=1.0).contains(f)));
    }

    #[test]
    fn coverage_drops_escaping_witnesses() {
        let t = AreaMap::standard_twist(Chart::ANNULUS);
        let k = AreaMap::standard_kicked(Chart::ANNULUS, 2.0).unwrap();
        let r = coverage_test(&t, &k, ChartPoint::new(0.23, 0.41), 16, 500, CoverageOptions::default()).unwrap();
        assert!(r.dropped > 0);
    }

    #[test]
    fn coverage_input_checks() {
        let t = AreaMap::standard_twist(Chart::ANNULUS);
        let s = AreaMap::identity(Chart::SQUARE);
        let p = ChartPoint::new(0.5, 0.5);
        assert!(matches!(coverage_test(&t, &t, p, 4, 10, Default::default()), Err(IfsError::BadInput(_))));
        assert!(matches!(coverage_test(&t, &t, p, 16, 0, Default::default()), Err(IfsError::BadInput(_))));
        assert!(matches!(coverage_test(&t, &s, p, 16, 10, Default::default()), Err(IfsError::ChartMismatch)));
    }

    #[test]
    fn coverage_csv_and_determinism() {
        let t = AreaMap::standard_twist(Chart::ANNULUS);
        let k = AreaMap::kicked_twist(Chart::ANNULUS, 1.5, KickShape::Sine, YBoundary::Wrap).unwrap();
        let p = ChartPoint::new(0.2, 0.3);
        let a = coverage_test(&t, &k, p, 16, 300, Default::default()).unwrap();
        let b = coverage_test(&t, &k, p, 16, 300, Default::default()).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), a.fraction.len() + 1);
        assert!(text.starts_with("word_length,fraction\n0,"));
    }

    #[test]
    fn hitting_examples() {
        let n = 16;
        let t = AreaMap::standard_twist(Chart::ANNULUS);
        let u = CellIndex::new(3, 4);
        assert!(hitting_test(&t, &t, u, u, n, 5).unwrap().is_empty());
        // Row 4 has y ≈ 0.28, so one twist moves x by about 4.5 cells.
        let w = hitting_test(&t, &t, u, CellIndex::new(7, 4), n, 5).unwrap();
        assert_eq!(w.len(), 1);
        assert!(matches!(hitting_test(&t, &t, u, CellIndex::new(3, 10), n, 8), Err(IfsError::Timeout { .. })));
        let k = AreaMap::kicked_twist(Chart::ANNULUS, 1.5, KickShape::Sine, YBoundary::Wrap).unwrap();
        let w = hitting_test(&t, &k, CellIndex::new(8, 2), CellIndex::new(8, 13), n, 30).unwrap();
        assert!(!w.is_empty());
        let p = cell_stencil(Chart::ANNULUS, CellIndex::new(8, 2), n);
        let maps = [t, k];
        let hit = p.iter().any(|q| {
            apply_word(&w, &maps, *q, Mode::Semigroup).is_ok_and(|r| Chart::ANNULUS.cell_of(r, n) == CellIndex::new(8, 13))
        });
        assert!(hit);
    }
}
