//! EM-type block pursuit on a response matrix.
//!
//! Each region of the columns hosts one OR node. Rows (examples) are assigned
//! per region to one content block or to the off branch (E-step); each block
//! then re-selects its strongest columns over its rows and re-solves their
//! tilting parameters (M-step). Blocks whose summed score falls below the
//! survival threshold are discarded and their rows fall to off.
//!
//! The maximized objective is
//!
//! ```text
//! sum_i sum_r [ log pi_r(a_ir) + score_{a_ir}(i) ]  +  sum_r sum_b log pi_r(b)  -  eps * live_blocks
//! ```
//!
//! where the middle term is the add-one (Dirichlet) smoothing of the branch
//! priors. Every phase of a sweep is a coordinate ascent step on it.

use std::io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::features::FeatureConfig;
use crate::infoproj::{reference_mean, solve_beta};
use crate::model::{AndOrTemplate, Branch, CellRect, DataMatrix, Layout, Level, OrNode, Pat, ReferenceModel, SelectedFeature};

/// Parameters of block pursuit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PursuitConfig {
    /// Maximum number of selected columns per block.
    pub t_features: usize,
    /// Content blocks per region (the off branch comes on top).
    pub k_or: usize,
    /// Blocks whose score falls below this many nats are discarded.
    pub epsilon_gain: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Column means above this are projected as if they were this value,
    /// which bounds every `beta`.
    pub max_target: f64,
}

impl Default for PursuitConfig {
    fn default() -> Self {
        Self { t_features: 10, k_or: 2, epsilon_gain: 2.0, max_iters: 30, seed: 7, max_target: 0.95 }
    }
}

impl PursuitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_features == 0 || self.k_or == 0 || self.max_iters == 0 {
            return invalid("t_features, k_or and max_iters must be positive");
        }
        if !(self.epsilon_gain >= 0.0) {
            return invalid("epsilon_gain must be nonnegative");
        }
        if !(self.max_target > 0.0 && self.max_target < 1.0) {
            return invalid("max_target must lie in (0, 1)");
        }
        Ok(())
    }
}

/// A region of the column space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub id: usize,
    pub rect: Option<CellRect>,
    pub columns: Vec<usize>,
}

/// Partition of the columns into regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tiling {
    pub regions: Vec<RegionSpec>,
}

impl Tiling {
    /// Tiles an object lattice into `tiles_x * tiles_y` equal rectangles.
    pub fn object(cfg: &FeatureConfig, tiles_x: u32, tiles_y: u32) -> Result<Self> {
        if tiles_x == 0 || tiles_y == 0 || cfg.cells_x % tiles_x != 0 || cfg.cells_y % tiles_y != 0 {
            return invalid(format!(
                "{}x{} cells cannot be tiled by {tiles_x}x{tiles_y} regions",
                cfg.cells_x, cfg.cells_y
            ));
        }
        let dict = cfg.dictionary()?;
        let (w, h) = (cfg.cells_x / tiles_x, cfg.cells_y / tiles_y);
        let mut regions = Vec::new();
        for ty in 0..tiles_y {
            for tx in 0..tiles_x {
                let rect = CellRect::new(tx * w, ty * h, w, h);
                regions.push(RegionSpec { id: regions.len(), rect: Some(rect), columns: dict.columns_in(&rect) });
            }
        }
        Ok(Self { regions })
    }

    /// Splits `0..columns` into `n` contiguous equal groups.
    pub fn contiguous(columns: usize, n: usize) -> Result<Self> {
        if n == 0 || columns % n != 0 {
            return invalid(format!("{columns} columns cannot be split into {n} equal regions"));
        }
        let per = columns / n;
        Ok(Self {
            regions: (0..n).map(|r| RegionSpec { id: r, rect: None, columns: (r * per..(r + 1) * per).collect() }).collect(),
        })
    }

    fn check(&self, d: usize) -> Result<()> {
        if self.regions.is_empty() {
            return invalid("tiling has no regions");
        }
        let mut seen = vec![false; d];
        for region in &self.regions {
            if region.columns.is_empty() {
                return invalid(format!("region {} owns no columns", region.id));
            }
            for &c in &region.columns {
                if c >= d {
                    return invalid(format!("region {} column {c} outside {d} columns", region.id));
                }
                if std::mem::replace(&mut seen[c], true) {
                    return invalid(format!("column {c} belongs to several regions"));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return invalid("tiling does not cover every column");
        }
        Ok(())
    }
}

/// Rows x columns block with per-column parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    /// Index into the tiling's regions.
    pub region: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<SelectedFeature>,
    pub score: f64,
}

/// `sum_{i in rows, j in cols} (beta_j R_ij - log z_j)`.
pub fn block_score(b: &Block, r: &DataMatrix) -> Result<f64> {
    if let Some(&i) = b.rows.iter().find(|&&i| i >= r.n_rows()) {
        return invalid(format!("row {i} outside {} rows", r.n_rows()));
    }
    if let Some(f) = b.cols.iter().find(|f| f.column >= r.n_cols()) {
        return invalid(format!("column {} outside {} columns", f.column, r.n_cols()));
    }
    let mut total = 0.0;
    for &i in &b.rows {
        for f in &b.cols {
            total += f.beta * r.get(i, f.column) - f.log_z;
        }
    }
    Ok(total)
}

/// One line of the learning trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    /// Objective at the end of the sweep.
    pub objective: f64,
    /// Objective after the E-step, before the M-step.
    pub objective_after_e: f64,
    pub live_blocks: usize,
    pub reassignments: usize,
}

/// Writes the trace as tab-separated text, one line per iteration.
pub fn write_trace(trace: &[TraceRow], out: &mut impl io::Write) -> io::Result<()> {
    writeln!(out, "# iteration\tobjective\tlive_blocks\treassignments")?;
    for row in trace {
        writeln!(out, "{}\t{:.17e}\t{}\t{}", row.iteration, row.objective, row.live_blocks, row.reassignments)?;
    }
    Ok(())
}

pub fn trace_to_string(trace: &[TraceRow]) -> String {
    let mut buf = Vec::new();
    write_trace(trace, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii")
}

/// Outcome of block pursuit.
#[derive(Debug, Clone, PartialEq)]
pub struct Pursuit {
    pub template: AndOrTemplate,
    /// `assignment[i][r]` is the branch index chosen by row `i` in region `r`
    /// (0 is off).
    pub assignment: Vec<Vec<usize>>,
    pub blocks: Vec<Block>,
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone)]
struct RegionState {
    /// Selected features of each live content block.
    blocks: Vec<Vec<SelectedFeature>>,
    /// Log prior of `[off, block 0, block 1, ...]`.
    log_priors: Vec<f64>,
}

struct Learner<'a> {
    r: &'a DataMatrix,
    q: &'a ReferenceModel,
    tiling: &'a Tiling,
    cfg: PursuitConfig,
    ref_means: Vec<f64>,
    regions: Vec<RegionState>,
    assignment: Vec<Vec<usize>>,
}

/// Learns a template by EM-type block pursuit.
pub fn pursue(r: &DataMatrix, q: &ReferenceModel, tiling: &Tiling, cfg: &PursuitConfig) -> Result<Pursuit> {
    cfg.validate()?;
    tiling.check(r.n_cols())?;
    if q.n_features() != r.n_cols() {
        return invalid(format!("reference covers {} columns, matrix has {}", q.n_features(), r.n_cols()));
    }
    let mut learner = Learner {
        r,
        q,
        tiling,
        cfg: *cfg,
        ref_means: q.histograms.iter().map(|h| reference_mean(h)).collect(),
        regions: Vec::new(),
        assignment: Vec::new(),
    };
    learner.initialize()?;
    let mut trace = Vec::new();
    let start = learner.objective();
    trace.push(TraceRow {
        iteration: 0,
        objective: start,
        objective_after_e: start,
        live_blocks: learner.live_blocks(),
        reassignments: 0,
    });
    for iteration in 1..=cfg.max_iters {
        let reassignments = learner.e_step();
        let objective_after_e = learner.objective();
        learner.m_step()?;
        let pruned = learner.prune();
        let objective = learner.objective();
        trace.push(TraceRow { iteration, objective, objective_after_e, live_blocks: learner.live_blocks(), reassignments });
        if reassignments == 0 && pruned == 0 {
            break;
        }
    }
    let all_off = learner.assignment.iter().all(|row| row.iter().all(|&b| b == 0));
    if learner.live_blocks() == 0 || all_off {
        return Err(Error::DegenerateTemplate(
            "every example fell to the off branch in every region; no block carries information".into(),
        ));
    }
    let template = learner.template();
    let blocks = learner.blocks();
    Ok(Pursuit { template, assignment: learner.assignment, blocks, trace })
}

/// Penalized objective of a template under an assignment: complete
/// log-likelihood of every row, plus the add-one smoothing term of the
/// branch priors, minus `epsilon_gain` per live block.
pub fn em_objective(r: &DataMatrix, template: &AndOrTemplate, assignment: &[Vec<usize>], epsilon_gain: f64) -> Result<f64> {
    if assignment.len() != r.n_rows() {
        return invalid(format!("assignment covers {} rows, matrix has {}", assignment.len(), r.n_rows()));
    }
    let mut total = 0.0;
    for (i, row) in assignment.iter().enumerate() {
        if row.len() != template.or_nodes.len() {
            return invalid(format!("row {i} assigns {} regions, template has {}", row.len(), template.or_nodes.len()));
        }
        for (node, &b) in template.or_nodes.iter().zip(row) {
            let branch = node
                .branches
                .get(b)
                .ok_or_else(|| Error::InvalidArgument(format!("branch {b} missing in region {}", node.region)))?;
            total += branch.log_prob;
            if let Some(k) = branch.part {
                total += template.terminals[k].score(r.row(i));
            }
        }
    }
    let smoothing: f64 = template.or_nodes.iter().flat_map(|n| n.branches.iter().map(|b| b.log_prob)).sum();
    Ok(total + smoothing - epsilon_gain * template.terminals.len() as f64)
}

impl Learner<'_> {
    fn n_rows(&self) -> usize {
        self.r.n_rows()
    }

    fn live_blocks(&self) -> usize {
        self.regions.iter().map(|s| s.blocks.len()).sum()
    }

    fn initialize(&mut self) -> Result<()> {
        let n = self.n_rows();
        self.assignment = vec![vec![0; self.tiling.regions.len()]; n];
        self.regions.clear();
        for (ri, region) in self.tiling.regions.iter().enumerate() {
            let k = self.cfg.k_or.min(n);
            let seed = self.cfg.seed.wrapping_add((ri as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let groups = kmeans(self.r, &region.columns, k, seed);
            for (i, g) in groups.iter().enumerate() {
                self.assignment[i][ri] = g + 1;
            }
            self.regions.push(RegionState { blocks: vec![Vec::new(); k], log_priors: vec![0.0; k + 1] });
        }
        self.m_step()?;
        self.prune();
        Ok(())
    }

    fn row_score(features: &[SelectedFeature], row: &[f64]) -> f64 {
        features.iter().map(|f| f.beta * row[f.column] - f.log_z).sum()
    }

    /// Reassigns every (row, region) to its best branch. Returns the number of changes.
    fn e_step(&mut self) -> usize {
        let regions = &self.regions;
        let r = self.r;
        let new: Vec<Vec<usize>> = (0..self.n_rows())
            .into_par_iter()
            .map(|i| {
                let row = r.row(i);
                regions
                    .iter()
                    .map(|state| {
                        let mut best = 0;
                        let mut best_value = state.log_priors[0];
                        for (b, features) in state.blocks.iter().enumerate() {
                            let value = state.log_priors[b + 1] + Self::row_score(features, row);
                            if value > best_value {
                                best = b + 1;
                                best_value = value;
                            }
                        }
                        best
                    })
                    .collect()
            })
            .collect();
        let changes = new
            .iter()
            .zip(&self.assignment)
            .map(|(a, b)| a.iter().zip(b).filter(|(x, y)| x != y).count())
            .sum();
        self.assignment = new;
        changes
    }

    fn rows_of(&self, region: usize, branch: usize) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.assignment[i][region] == branch).collect()
    }

    /// Re-selects each block's columns and parameters over its rows, then
    /// re-estimates the smoothed branch priors.
    fn m_step(&mut self) -> Result<()> {
        for ri in 0..self.regions.len() {
            for b in 0..self.regions[ri].blocks.len() {
                let rows = self.rows_of(ri, b + 1);
                if rows.is_empty() {
                    continue;
                }
                self.regions[ri].blocks[b] = self.fit_block(ri, &rows)?;
            }
        }
        self.update_priors();
        Ok(())
    }

    /// Best `t_features` columns of a region for a row set, each with its
    /// projected `(beta, z)`. Only columns whose mean exceeds the reference
    /// mean (positive tilt) are candidates.
    fn fit_block(&self, region: usize, rows: &[usize]) -> Result<Vec<SelectedFeature>> {
        let n = rows.len() as f64;
        let mut candidates: Vec<(f64, SelectedFeature)> = Vec::new();
        for &c in &self.tiling.regions[region].columns {
            let mean = rows.iter().map(|&i| self.r.get(i, c)).sum::<f64>() / n;
            let target = mean.min(self.cfg.max_target);
            if target <= self.ref_means[c] {
                continue;
            }
            let sol = match solve_beta(self.q.histogram(c), target) {
                Ok(sol) => sol,
                Err(Error::Saturation { .. }) => continue,
                Err(e) => return Err(e),
            };
            if sol.beta <= 0.0 {
                continue;
            }
            let value = sol.beta * mean - sol.log_z;
            if value > 0.0 {
                candidates.push((
                    value,
                    SelectedFeature {
                        column: c,
                        beta: sol.beta,
                        log_z: sol.log_z,
                        mean: sol.expected_response,
                        gain: sol.gain,
                    },
                ));
            }
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.column.cmp(&b.1.column)));
        candidates.truncate(self.cfg.t_features);
        let mut selected: Vec<SelectedFeature> = candidates.into_iter().map(|(_, f)| f).collect();
        selected.sort_by_key(|f| f.column);
        Ok(selected)
    }

    fn update_priors(&mut self) {
        let n = self.n_rows() as f64;
        for (ri, state) in self.regions.iter_mut().enumerate() {
            let branches = state.blocks.len() + 1;
            let mut counts = vec![0.0; branches];
            for row in &self.assignment {
                counts[row[ri]] += 1.0;
            }
            state.log_priors = counts.iter().map(|c| ((c + 1.0) / (n + branches as f64)).ln()).collect();
        }
    }

    fn block_value(&self, region: usize, b: usize) -> (usize, f64) {
        let rows = self.rows_of(region, b + 1);
        let features = &self.regions[region].blocks[b];
        let score = rows.iter().map(|&i| Self::row_score(features, self.r.row(i))).sum();
        (rows.len(), score)
    }

    /// Discards blocks below the survival threshold (and empty ones); their
    /// rows fall to off. Returns the number of discarded blocks.
    fn prune(&mut self) -> usize {
        let mut pruned = 0;
        for ri in 0..self.regions.len() {
            let doomed: Vec<usize> = (0..self.regions[ri].blocks.len())
                .filter(|&b| {
                    let (rows, score) = self.block_value(ri, b);
                    rows == 0 || self.regions[ri].blocks[b].is_empty() || score < self.cfg.epsilon_gain
                })
                .collect();
            if doomed.is_empty() {
                continue;
            }
            pruned += doomed.len();
            let mut remap = Vec::with_capacity(self.regions[ri].blocks.len() + 1);
            remap.push(0);
            let mut next = 1;
            for b in 0..self.regions[ri].blocks.len() {
                if doomed.contains(&b) {
                    remap.push(0);
                } else {
                    remap.push(next);
                    next += 1;
                }
            }
            for row in &mut self.assignment {
                row[ri] = remap[row[ri]];
            }
            let state = &mut self.regions[ri];
            state.blocks = std::mem::take(&mut state.blocks)
                .into_iter()
                .enumerate()
                .filter(|(b, _)| !doomed.contains(b))
                .map(|(_, f)| f)
                .collect();
        }
        if pruned > 0 {
            self.update_priors();
        }
        pruned
    }

    fn objective(&self) -> f64 {
        em_objective(self.r, &self.template(), &self.assignment, self.cfg.epsilon_gain)
            .expect("learner state is consistent")
    }

    fn template(&self) -> AndOrTemplate {
        let mut or_nodes = Vec::with_capacity(self.regions.len());
        let mut terminals = Vec::new();
        for (region, state) in self.tiling.regions.iter().zip(&self.regions) {
            let mut branches = vec![Branch { part: None, log_prob: state.log_priors[0] }];
            for (b, features) in state.blocks.iter().enumerate() {
                let k = terminals.len();
                terminals.push(Pat::new(k, region.id, region.rect, features.clone()));
                branches.push(Branch { part: Some(k), log_prob: state.log_priors[b + 1] });
            }
            or_nodes.push(OrNode { region: region.id, rect: region.rect, columns: region.columns.clone(), branches });
        }
        AndOrTemplate {
            label: String::new(),
            level: Level::Object,
            layout: Layout::Matrix { columns: self.r.n_cols() },
            or_nodes,
            terminals,
        }
    }

    fn blocks(&self) -> Vec<Block> {
        let mut out = Vec::new();
        for (ri, state) in self.regions.iter().enumerate() {
            for (b, features) in state.blocks.iter().enumerate() {
                let (_, score) = self.block_value(ri, b);
                out.push(Block { region: ri, rows: self.rows_of(ri, b + 1), cols: features.clone(), score });
            }
        }
        out
    }
}

/// Lloyd's k-means on a column slice with k-means++ seeding. Returns the
/// group of every row; ties go to the lowest group index.
fn kmeans(r: &DataMatrix, columns: &[usize], k: usize, seed: u64) -> Vec<usize> {
    let n = r.n_rows();
    let point = |i: usize| columns.iter().map(|&c| r.get(i, c)).collect::<Vec<f64>>();
    let points: Vec<Vec<f64>> = (0..n).map(point).collect();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids: Vec<Vec<f64>> = vec![points[rng.gen_range(0..n)].clone()];
    while centroids.len() < k {
        let weights: Vec<f64> =
            points.iter().map(|p| centroids.iter().map(|c| dist(p, c)).fold(f64::INFINITY, f64::min)).collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            // All remaining points coincide with a centroid.
            centroids.push(points[rng.gen_range(0..n)].clone());
            continue;
        }
        let mut pick = rng.gen::<f64>() * total;
        let mut chosen = n - 1;
        for (i, w) in weights.iter().enumerate() {
            if pick < *w {
                chosen = i;
                break;
            }
            pick -= w;
        }
        centroids.push(points[chosen].clone());
    }

    let mut groups = vec![usize::MAX; n];
    for _ in 0..100 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (g, c) in centroids.iter().enumerate() {
                let d = dist(p, c);
                if d < best_d {
                    best = g;
                    best_d = d;
                }
            }
            if groups[i] != best {
                groups[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (g, c) in centroids.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&groups).filter(|(_, &gi)| gi == g).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            for (d, v) in c.iter_mut().enumerate() {
                *v = members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64;
            }
        }
    }
    groups
}
