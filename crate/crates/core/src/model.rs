//! Domain types shared across the pipeline: the feature dictionary, the
//! response matrix, terminal templates (PATs), the AND-OR template itself,
//! latent configurations and parse trees.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::features::FeatureConfig;
use crate::scene::SceneLayout;

/// Tolerance used for probability-mass and normalizer checks.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Axis-aligned rectangle in lattice cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl CellRect {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn contains(&self, cx: u32, cy: u32) -> bool {
        cx >= self.x && cx < self.x + self.w && cy >= self.y && cy < self.y + self.h
    }

    pub fn area(&self) -> u32 {
        self.w * self.h
    }

    /// Intersection over union; 0 when either rectangle is empty.
    pub fn iou(&self, other: &CellRect) -> f64 {
        let w = (self.x + self.w).min(other.x + other.w).saturating_sub(self.x.max(other.x));
        let h = (self.y + self.h).min(other.y + other.h).saturating_sub(self.y.max(other.y));
        let inter = f64::from(w * h);
        let union = f64::from(self.area()) + f64::from(other.area()) - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (self.y..self.y + self.h).flat_map(move |y| (self.x..self.x + self.w).map(move |x| (x, y)))
    }
}

/// Feature channel of a dictionary entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Sketch,
    Texture,
    Flatness,
    Color,
}

/// Channel-specific parameters. Sketch features carry an orientation and a
/// scale index, color features a hue-saturation bin, the others nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "channel", rename_all = "lowercase")]
pub enum FeatureKind {
    Sketch { orientation: u16, scale: u16 },
    Texture,
    Flatness,
    Color { bin: u16 },
}

impl FeatureKind {
    pub fn channel(&self) -> Channel {
        match self {
            FeatureKind::Sketch { .. } => Channel::Sketch,
            FeatureKind::Texture => Channel::Texture,
            FeatureKind::Flatness => Channel::Flatness,
            FeatureKind::Color { .. } => Channel::Color,
        }
    }
}

/// One candidate feature: a channel evaluated at a lattice cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub x: u32,
    pub y: u32,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

impl FeatureSpec {
    pub fn channel(&self) -> Channel {
        self.kind.channel()
    }
}

impl fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            FeatureKind::Sketch { orientation, scale } => {
                write!(f, "sketch({},{})o{}s{}", self.x, self.y, orientation, scale)
            }
            FeatureKind::Texture => write!(f, "texture({},{})", self.x, self.y),
            FeatureKind::Flatness => write!(f, "flatness({},{})", self.x, self.y),
            FeatureKind::Color { bin } => write!(f, "color({},{})b{}", self.x, self.y, bin),
        }
    }
}

/// Lattice dimensions in cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeDims {
    pub width: u32,
    pub height: u32,
}

impl LatticeDims {
    pub fn cells(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// The ordered set of candidate features for a lattice.
///
/// Cells are enumerated row-major; within a cell the order is every
/// (orientation, scale) sketch pair, then texture, flatness and the color bins.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDictionary {
    pub dims: LatticeDims,
    pub orientations: u16,
    pub scales: u16,
    pub color_bins: u16,
    specs: Vec<FeatureSpec>,
}

impl FeatureDictionary {
    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn specs(&self) -> &[FeatureSpec] {
        &self.specs
    }

    pub fn get(&self, column: usize) -> Option<&FeatureSpec> {
        self.specs.get(column)
    }

    pub fn per_cell(&self) -> usize {
        self.orientations as usize * self.scales as usize + self.color_bins as usize + 2
    }

    /// Column index of a spec, or `None` if the spec is not in the dictionary.
    pub fn index_of(&self, spec: &FeatureSpec) -> Option<usize> {
        if spec.x >= self.dims.width || spec.y >= self.dims.height {
            return None;
        }
        let sketch = self.orientations as usize * self.scales as usize;
        let offset = match spec.kind {
            FeatureKind::Sketch { orientation, scale } => {
                if orientation >= self.orientations || scale >= self.scales {
                    return None;
                }
                orientation as usize * self.scales as usize + scale as usize
            }
            FeatureKind::Texture => sketch,
            FeatureKind::Flatness => sketch + 1,
            FeatureKind::Color { bin } => {
                if bin >= self.color_bins {
                    return None;
                }
                sketch + 2 + bin as usize
            }
        };
        let cell = spec.y as usize * self.dims.width as usize + spec.x as usize;
        Some(cell * self.per_cell() + offset)
    }

    /// Columns whose cell lies in `rect`, in dictionary order.
    pub fn columns_in(&self, rect: &CellRect) -> Vec<usize> {
        self.specs
            .iter()
            .enumerate()
            .filter(|(_, s)| rect.contains(s.x, s.y))
            .map(|(j, _)| j)
            .collect()
    }
}

/// Enumerates the candidate features of a lattice. `D = cells * (O*S + C + 2)`.
pub fn canonical_dictionary(
    dims: LatticeDims,
    orientations: u16,
    scales: u16,
    color_bins: u16,
) -> Result<FeatureDictionary> {
    if dims.width == 0 || dims.height == 0 {
        return invalid(format!("zero-sized lattice {}x{}", dims.width, dims.height));
    }
    if orientations == 0 || scales == 0 || color_bins == 0 {
        return invalid("orientation, scale and color bin counts must be positive");
    }
    let mut specs = Vec::with_capacity(
        dims.cells() * (orientations as usize * scales as usize + color_bins as usize + 2),
    );
    for y in 0..dims.height {
        for x in 0..dims.width {
            for orientation in 0..orientations {
                for scale in 0..scales {
                    specs.push(FeatureSpec { x, y, kind: FeatureKind::Sketch { orientation, scale } });
                }
            }
            specs.push(FeatureSpec { x, y, kind: FeatureKind::Texture });
            specs.push(FeatureSpec { x, y, kind: FeatureKind::Flatness });
            for bin in 0..color_bins {
                specs.push(FeatureSpec { x, y, kind: FeatureKind::Color { bin } });
            }
        }
    }
    Ok(FeatureDictionary { dims, orientations, scales, color_bins, specs })
}

/// N x D matrix of feature responses, each in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMatrix {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn new(rows: Vec<String>, columns: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if rows.is_empty() || columns.is_empty() {
            return invalid("data matrix needs at least one row and one column");
        }
        if values.len() != rows.len() * columns.len() {
            return invalid(format!(
                "data matrix has {} values, expected {}x{}",
                values.len(),
                rows.len(),
                columns.len()
            ));
        }
        if let Some(pos) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return invalid(format!(
                "response {} at ({}, {}) outside [0, 1]",
                values[pos],
                pos / columns.len(),
                pos % columns.len()
            ));
        }
        Ok(Self { rows, columns, values })
    }

    /// Builds a matrix from equally long row vectors, naming columns `c0..`.
    pub fn from_rows(rows: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let width = rows.first().map(|r| r.1.len()).unwrap_or(0);
        if rows.iter().any(|r| r.1.len() != width) {
            return invalid("rows of unequal length");
        }
        let columns = (0..width).map(|j| format!("c{j}")).collect();
        let (names, data): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        Self::new(names, columns, data.concat())
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.columns.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.columns.len();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows.len()).map(move |i| self.get(i, j))
    }
}

/// Per-feature reference histograms over equal-width bins on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceModel {
    pub bins: usize,
    pub histograms: Vec<Vec<f64>>,
    pub sample_count: usize,
}

impl ReferenceModel {
    pub fn histogram(&self, column: usize) -> &[f64] {
        &self.histograms[column]
    }

    pub fn n_features(&self) -> usize {
        self.histograms.len()
    }
}

/// A selected feature of a terminal template with its log-linear parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedFeature {
    pub column: usize,
    pub beta: f64,
    pub log_z: f64,
    /// Mean response under the tilted distribution.
    pub mean: f64,
    /// Per-example information gain `beta * mean - log_z`.
    pub gain: f64,
}

impl SelectedFeature {
    pub fn score(&self, response: f64) -> f64 {
        self.beta * response - self.log_z
    }
}

/// Terminal node: a photography art template over one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pat {
    pub part_id: usize,
    pub region: usize,
    pub rect: Option<CellRect>,
    pub selected: Vec<SelectedFeature>,
    /// Sum of the selected features' log normalizers.
    pub log_z: f64,
}

impl Pat {
    pub fn new(part_id: usize, region: usize, rect: Option<CellRect>, selected: Vec<SelectedFeature>) -> Self {
        let log_z = selected.iter().map(|f| f.log_z).sum();
        Self { part_id, region, rect, selected, log_z }
    }

    /// `sum_j beta_j r_j - log Z` for an activated part.
    pub fn score(&self, responses: &[f64]) -> f64 {
        let weighted: f64 = self.selected.iter().map(|f| f.beta * responses[f.column]).sum();
        weighted - self.log_z
    }

    pub fn total_gain(&self) -> f64 {
        self.selected.iter().map(|f| f.gain).sum()
    }
}

/// Discrete transform of an object part relative to its template position.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transform {
    pub dx: i32,
    pub dy: i32,
    pub dtheta: i32,
    pub dscale: i32,
}

impl Transform {
    pub fn new(dx: i32, dy: i32, dtheta: i32, dscale: i32) -> Self {
        Self { dx, dy, dtheta, dscale }
    }
}

/// Scene-level attributes of an activated object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attributes {
    pub position: CellRect,
    /// Fraction of the image covered by the object.
    pub size: f64,
    /// Mean (hue, saturation, value) inside the object window.
    pub mean_color: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    Transform(Transform),
    Attributes(Attributes),
}

/// Latent configuration `(s, g)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub s: Vec<bool>,
    pub g: BTreeMap<usize, Geometry>,
}

impl Configuration {
    pub fn active_parts(&self) -> impl Iterator<Item = usize> + '_ {
        self.s.iter().enumerate().filter(|(_, on)| **on).map(|(k, _)| k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Object,
    Scene,
}

/// What the columns of a template's response space mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Layout {
    /// Columns are the canonical feature dictionary of an object window.
    Object {
        features: FeatureConfig,
        stats: Option<ObjectStats>,
    },
    /// Columns are (candidate region, object template, channel) responses.
    Scene(SceneLayout),
    /// Columns carry no further meaning (raw data matrices).
    Matrix { columns: usize },
}

/// Annotation statistics of an object's training windows, in image fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectStats {
    pub mean_center: [f64; 2],
    pub mean_area: f64,
    pub mean_color: [f64; 3],
    pub examples: usize,
}

/// One alternative under an OR node. `part == None` is the "off" branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub part: Option<usize>,
    pub log_prob: f64,
}

/// OR node hosting the alternatives for one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrNode {
    pub region: usize,
    pub rect: Option<CellRect>,
    /// Response columns owned by this region.
    pub columns: Vec<usize>,
    pub branches: Vec<Branch>,
}

impl OrNode {
    /// Index of the modal (highest prior) branch, lowest index on ties.
    pub fn modal_branch(&self) -> usize {
        let mut best = 0;
        for (b, branch) in self.branches.iter().enumerate() {
            if branch.log_prob > self.branches[best].log_prob {
                best = b;
            }
        }
        best
    }
}

/// A two-level AND-OR template: root AND over regions, one OR node per region
/// choosing between terminal PATs and an off branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AndOrTemplate {
    pub label: String,
    pub level: Level,
    pub layout: Layout,
    pub or_nodes: Vec<OrNode>,
    pub terminals: Vec<Pat>,
}

impl AndOrTemplate {
    /// Number of terminal parts, i.e. the length of `s`.
    pub fn part_count(&self) -> usize {
        self.terminals.len()
    }

    /// Dimension of the response space the template is defined over.
    pub fn dimension(&self) -> usize {
        match &self.layout {
            Layout::Object { features, .. } => features.dimension(),
            Layout::Scene(scene) => scene.dimension(),
            Layout::Matrix { columns } => *columns,
        }
    }

    /// `(or node index, branch index)` hosting part `k`.
    pub fn locate_part(&self, k: usize) -> Option<(usize, usize)> {
        self.or_nodes.iter().enumerate().find_map(|(r, node)| {
            node.branches.iter().position(|b| b.part == Some(k)).map(|b| (r, b))
        })
    }

    /// Prior probability of the branch hosting part `k`.
    pub fn part_frequency(&self, k: usize) -> f64 {
        self.locate_part(k)
            .map(|(r, b)| self.or_nodes[r].branches[b].log_prob.exp())
            .unwrap_or(0.0)
    }

    /// Per-region argmax-prior branch.
    pub fn modal_choices(&self) -> Vec<usize> {
        self.or_nodes.iter().map(OrNode::modal_branch).collect()
    }

    /// Per-region branch selected by a configuration.
    pub fn choices(&self, config: &Configuration) -> Result<Vec<usize>> {
        if config.s.len() != self.part_count() {
            return invalid(format!(
                "configuration has {} parts, template has {}",
                config.s.len(),
                self.part_count()
            ));
        }
        self.or_nodes
            .iter()
            .enumerate()
            .map(|(r, node)| {
                let on: Vec<usize> = node
                    .branches
                    .iter()
                    .enumerate()
                    .filter(|(_, b)| b.part.is_some_and(|k| config.s[k]))
                    .map(|(i, _)| i)
                    .collect();
                match on.as_slice() {
                    [] => Ok(0),
                    [b] => Ok(*b),
                    _ => invalid(format!("region {r} has {} activated parts", on.len())),
                }
            })
            .collect()
    }

    /// Structural vector `s` for per-region branch choices.
    pub fn structure_for(&self, choices: &[usize]) -> Vec<bool> {
        let mut s = vec![false; self.part_count()];
        for (node, &b) in self.or_nodes.iter().zip(choices) {
            if let Some(k) = node.branches[b].part {
                s[k] = true;
            }
        }
        s
    }

    /// Human-readable name of part `k`.
    pub fn part_label(&self, k: usize) -> String {
        if let Layout::Scene(scene) = &self.layout {
            if let Some(name) = scene.part_object_label(&self.terminals[k]) {
                return name;
            }
        }
        match self.locate_part(k) {
            Some((r, b)) => format!("{}.r{}b{}", self.label, self.or_nodes[r].region, b),
            None => format!("{}.part{}", self.label, k),
        }
    }

    /// Hex SHA-256 of the learned grammar (OR nodes and terminals), independent
    /// of labels and layout metadata.
    pub fn structure_digest(&self) -> String {
        #[derive(Serialize)]
        struct Structure<'a> {
            or_nodes: &'a [OrNode],
            terminals: &'a [Pat],
        }
        crate::serial::digest_of(&Structure { or_nodes: &self.or_nodes, terminals: &self.terminals })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum NodeKind {
    And,
    Or,
    Terminal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseNode {
    pub id: String,
    pub kind: NodeKind,
    pub parent: Option<usize>,
    /// Chosen branch for OR nodes.
    pub branch: Option<usize>,
    /// Terminal part id for TERMINAL nodes.
    pub part: Option<usize>,
    pub label: String,
    pub score: f64,
    pub geometry: Option<Geometry>,
}

/// Parse of an image against a template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseTree {
    pub template: String,
    pub root_score: f64,
    /// `log p(s, g | Temp)` of the chosen configuration.
    pub log_prior: f64,
    pub nodes: Vec<ParseNode>,
}

impl ParseTree {
    /// Sum of the scores of activated terminal nodes.
    pub fn terminal_sum(&self) -> f64 {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Terminal).map(|n| n.score).sum()
    }

    pub fn terminals(&self) -> impl Iterator<Item = &ParseNode> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Terminal)
    }
}

/// A broken template invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub node: String,
    pub rule: String,
}

impl Violation {
    fn new(node: impl Into<String>, rule: impl Into<String>) -> Self {
        Self { node: node.into(), rule: rule.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.node, self.rule)
    }
}

/// Checks every structural invariant of a template. Returns an empty list iff
/// the template is well formed.
pub fn validate_template(t: &AndOrTemplate) -> Vec<Violation> {
    let mut out = Vec::new();
    let dim = t.dimension();
    let dictionary = match &t.layout {
        Layout::Object { features, .. } => features.dictionary().ok(),
        _ => None,
    };

    let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
    let mut hosted: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for (r, node) in t.or_nodes.iter().enumerate() {
        let id = format!("region {}", node.region);
        let mass: f64 = node.branches.iter().map(|b| b.log_prob.exp()).sum();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            out.push(Violation::new(&id, format!("branch mass {mass}")));
        }
        if node.branches.first().map(|b| b.part.is_some()).unwrap_or(true) {
            out.push(Violation::new(&id, "branch 0 must be the off branch"));
        }
        for (b, branch) in node.branches.iter().enumerate().skip(1) {
            match branch.part {
                None => out.push(Violation::new(&id, format!("branch {b} is a second off branch"))),
                Some(k) => hosted.entry(k).or_default().push((r, b)),
            }
        }
        for &c in &node.columns {
            if c >= dim {
                out.push(Violation::new(&id, format!("column {c} outside dimension {dim}")));
            } else if let Some(prev) = owner.insert(c, r) {
                out.push(Violation::new(
                    &id,
                    format!("column {c} also owned by region {}", t.or_nodes[prev].region),
                ));
            }
        }
    }

    for (k, pat) in t.terminals.iter().enumerate() {
        let id = format!("part {k}");
        if pat.part_id != k {
            out.push(Violation::new(&id, format!("part_id {} does not match position", pat.part_id)));
        }
        match hosted.get(&k).map(Vec::as_slice) {
            Some([(r, _)]) => {
                let node = &t.or_nodes[*r];
                if pat.region != node.region {
                    out.push(Violation::new(&id, "region differs from hosting OR node"));
                }
                for f in &pat.selected {
                    if !node.columns.contains(&f.column) {
                        out.push(Violation::new(&id, "feature outside region"));
                    } else if let (Some(dict), Some(rect)) = (&dictionary, pat.rect) {
                        match dict.get(f.column) {
                            Some(spec) if rect.contains(spec.x, spec.y) => {}
                            _ => out.push(Violation::new(&id, "feature outside region")),
                        }
                    }
                }
            }
            None | Some([]) => out.push(Violation::new(&id, "terminal not hosted by any OR node")),
            Some(_) => out.push(Violation::new(&id, "terminal hosted by several branches")),
        }
        if pat.selected.iter().any(|f| !f.log_z.is_finite() || !f.beta.is_finite()) {
            out.push(Violation::new(&id, "normalizer z must be positive and finite"));
        }
        let sum: f64 = pat.selected.iter().map(|f| f.log_z).sum();
        if (sum - pat.log_z).abs() > MASS_TOLERANCE {
            out.push(Violation::new(&id, format!("log_Z {} != sum of log z {}", pat.log_z, sum)));
        }
    }
    for k in hosted.keys().filter(|k| **k >= t.terminals.len()) {
        out.push(Violation::new(format!("part {k}"), "branch references a missing terminal"));
    }

    if let (Some(dict), Level::Object) = (&dictionary, t.level) {
        let mut covered: BTreeSet<(u32, u32)> = BTreeSet::new();
        let mut tiled = true;
        for node in &t.or_nodes {
            if let Some(rect) = node.rect {
                for cell in rect.cells() {
                    if !covered.insert(cell) {
                        out.push(Violation::new(
                            format!("region {}", node.region),
                            format!("cell ({}, {}) overlaps another region", cell.0, cell.1),
                        ));
                    }
                }
            } else {
                tiled = false;
            }
        }
        if tiled && covered.len() != dict.dims.cells() {
            out.push(Violation::new(
                "root",
                format!("regions cover {} of {} cells", covered.len(), dict.dims.cells()),
            ));
        }
    }
    out
}
