//! Configuration diffs against a template's modal configuration and the
//! declarative rule corpus that turns them into guidance.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::inference::render_parse_tree;
use crate::model::{AndOrTemplate, Geometry, Layout, ParseTree};
use crate::scene::color_bin_distance;

/// The corpus shipped with the crate. Its rules are our own wording, not a
/// published rule set.
pub const DEFAULT_CORPUS: &str = include_str!("../assets/default_corpus.json");

/// Color bins used when comparing scene colors.
const GUIDANCE_COLOR_BINS: u16 = 12;

/// Thresholds that decide which differences enter a [`ConfigDiff`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Parts at least this frequent are expected in a photograph.
    pub presence: f64,
    /// Parts at most this frequent are unexpected.
    pub absence: f64,
    pub xy: u32,
    pub theta: u32,
    pub scale: u32,
    /// Size ratios above this or below its inverse are reported.
    pub size_ratio: f64,
    pub color_bins: u32,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { presence: 0.8, absence: 0.1, xy: 1, theta: 1, scale: 1, size_ratio: 1.5, color_bins: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartEntry {
    pub part: usize,
    pub label: String,
    /// Prior probability of the branch hosting the part.
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricDeviation {
    pub part: usize,
    pub label: String,
    pub dx: i32,
    pub dy: i32,
    pub dtheta: i32,
    pub dscale: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeDeviation {
    pub part: usize,
    pub label: String,
    /// Observed over expected size.
    pub size_ratio: f64,
    pub color_bin_distance: u32,
}

/// Differences between a parse and the template's modal configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigDiff {
    pub missing_parts: Vec<PartEntry>,
    pub extra_parts: Vec<PartEntry>,
    pub geometric_deviations: Vec<GeometricDeviation>,
    pub attribute_deviations: Vec<AttributeDeviation>,
}

impl ConfigDiff {
    pub fn is_empty(&self) -> bool {
        self.missing_parts.is_empty()
            && self.extra_parts.is_empty()
            && self.geometric_deviations.is_empty()
            && self.attribute_deviations.is_empty()
    }
}

impl Tolerances {
    pub fn geometric_exceeds(&self, d: &GeometricDeviation) -> bool {
        d.dx.unsigned_abs() > self.xy
            || d.dy.unsigned_abs() > self.xy
            || d.dtheta.unsigned_abs() > self.theta
            || d.dscale.unsigned_abs() > self.scale
    }

    pub fn attribute_exceeds(&self, d: &AttributeDeviation) -> bool {
        d.size_ratio > self.size_ratio || d.size_ratio < 1.0 / self.size_ratio || d.color_bin_distance > self.color_bins
    }
}

/// Compares a parse with the template it was produced against.
pub fn diff_configuration(parse: &ParseTree, template: &AndOrTemplate, tol: &Tolerances) -> Result<ConfigDiff> {
    if parse.template != template.label {
        return invalid(format!("parse of '{}' compared with template '{}'", parse.template, template.label));
    }
    let or_count = parse.nodes.iter().filter(|n| n.kind == crate::model::NodeKind::Or).count();
    if or_count != template.or_nodes.len() {
        return invalid(format!("parse has {or_count} OR nodes, template has {}", template.or_nodes.len()));
    }
    let mut active = BTreeSet::new();
    let mut diff = ConfigDiff::default();
    for node in parse.terminals() {
        let Some(k) = node.part.filter(|k| *k < template.part_count()) else {
            return invalid(format!("parse node {} names no template part", node.id));
        };
        active.insert(k);
        let label = template.part_label(k);
        match node.geometry {
            Some(Geometry::Transform(t)) => {
                let d = GeometricDeviation { part: k, label: label.clone(), dx: t.dx, dy: t.dy, dtheta: t.dtheta, dscale: t.dscale };
                if tol.geometric_exceeds(&d) {
                    diff.geometric_deviations.push(d);
                }
            }
            Some(Geometry::Attributes(a)) => {
                let expected = match &template.layout {
                    Layout::Scene(layout) => layout.expected.get(k).copied().flatten(),
                    _ => None,
                };
                if let Some(e) = expected.filter(|e| e.size > 0.0) {
                    let d = AttributeDeviation {
                        part: k,
                        label: label.clone(),
                        size_ratio: a.size / e.size,
                        color_bin_distance: color_bin_distance(a.mean_color, e.mean_color, GUIDANCE_COLOR_BINS),
                    };
                    if tol.attribute_exceeds(&d) {
                        diff.attribute_deviations.push(d);
                    }
                }
            }
            None => {}
        }
    }
    // Scene parts name objects; an object counts as present when any of its
    // parts is, and is reported missing once, under its most frequent part.
    let scene = template.level == crate::model::Level::Scene;
    let active_labels: BTreeSet<String> = active.iter().map(|k| template.part_label(*k)).collect();
    for k in 0..template.part_count() {
        let frequency = template.part_frequency(k);
        let entry = || PartEntry { part: k, label: template.part_label(k), frequency };
        if !active.contains(&k) && frequency >= tol.presence {
            let e = entry();
            if !scene {
                diff.missing_parts.push(e);
            } else if !active_labels.contains(&e.label) {
                match diff.missing_parts.iter_mut().find(|m| m.label == e.label) {
                    Some(m) if m.frequency < e.frequency => *m = e,
                    Some(_) => {}
                    None => diff.missing_parts.push(e),
                }
            }
        }
        if active.contains(&k) && frequency <= tol.absence {
            diff.extra_parts.push(entry());
        }
    }
    Ok(diff)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Major,
    Warn,
    Info,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    /// Fires once per item of a list field.
    Exists,
    /// Fires for items whose label (string value) or part id (number) matches.
    Contains,
    /// Fires once when the list holds at least `value` items.
    CountGe,
    Eq,
    Gt,
    Ge,
    Lt,
    Le,
    AbsGt,
    AbsGe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub field: String,
    pub op: Op,
    #[serde(default)]
    pub value: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub id: String,
    pub when: Condition,
    pub message: String,
    pub severity: Severity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ListField {
    Missing,
    Extra,
    Geometric,
    Attribute,
}

impl ListField {
    fn parse(name: &str) -> Option<Self> {
        match name {
            "missing_parts" => Some(Self::Missing),
            "extra_parts" => Some(Self::Extra),
            "geometric_deviations" => Some(Self::Geometric),
            "attribute_deviations" => Some(Self::Attribute),
            _ => None,
        }
    }

    fn item_fields(self) -> &'static [&'static str] {
        match self {
            Self::Missing | Self::Extra => &["part", "label", "frequency"],
            Self::Geometric => &["part", "label", "dx", "dy", "dtheta", "dscale"],
            Self::Attribute => &["part", "label", "size_ratio", "color_bin_distance"],
        }
    }

    fn len(self, diff: &ConfigDiff) -> usize {
        match self {
            Self::Missing => diff.missing_parts.len(),
            Self::Extra => diff.extra_parts.len(),
            Self::Geometric => diff.geometric_deviations.len(),
            Self::Attribute => diff.attribute_deviations.len(),
        }
    }

    fn labels(self, diff: &ConfigDiff) -> Vec<String> {
        (0..self.len(diff)).filter_map(|i| self.value(diff, i, "label")).map(|v| v.text()).collect()
    }

    fn value(self, diff: &ConfigDiff, i: usize, field: &str) -> Option<Value> {
        match self {
            Self::Missing | Self::Extra => {
                let e = if self == Self::Missing { &diff.missing_parts[i] } else { &diff.extra_parts[i] };
                match field {
                    "part" => Some(Value::Int(e.part as i64)),
                    "label" => Some(Value::Text(e.label.clone())),
                    "frequency" => Some(Value::Real(e.frequency)),
                    _ => None,
                }
            }
            Self::Geometric => {
                let d = &diff.geometric_deviations[i];
                match field {
                    "part" => Some(Value::Int(d.part as i64)),
                    "label" => Some(Value::Text(d.label.clone())),
                    "dx" => Some(Value::Signed(d.dx)),
                    "dy" => Some(Value::Signed(d.dy)),
                    "dtheta" => Some(Value::Signed(d.dtheta)),
                    "dscale" => Some(Value::Signed(d.dscale)),
                    _ => None,
                }
            }
            Self::Attribute => {
                let d = &diff.attribute_deviations[i];
                match field {
                    "part" => Some(Value::Int(d.part as i64)),
                    "label" => Some(Value::Text(d.label.clone())),
                    "size_ratio" => Some(Value::Real(d.size_ratio)),
                    "color_bin_distance" => Some(Value::Int(i64::from(d.color_bin_distance))),
                    _ => None,
                }
            }
        }
    }
}

/// A bound value of a diff item.
#[derive(Debug, Clone, PartialEq)]
enum Value {
    Int(i64),
    Signed(i32),
    Real(f64),
    Text(String),
}

impl Value {
    fn number(&self) -> Option<f64> {
        match self {
            Value::Int(v) => Some(*v as f64),
            Value::Signed(v) => Some(f64::from(*v)),
            Value::Real(v) => Some(*v),
            Value::Text(_) => None,
        }
    }

    fn text(&self) -> String {
        match self {
            Value::Int(v) => v.to_string(),
            Value::Signed(v) => format!("{v:+}"),
            Value::Real(v) => format!("{v:.2}"),
            Value::Text(s) => s.clone(),
        }
    }
}

/// A rule compiled against the declared diff fields.
#[derive(Debug, Clone, PartialEq)]
struct Compiled {
    list: ListField,
    item_field: Option<String>,
}

fn compile(rule: &Rule) -> Result<Compiled> {
    let bad = |msg: String| Err(Error::Corpus(format!("rule '{}': {msg}", rule.id)));
    let (list_name, item_field) = match rule.when.field.split_once('.') {
        Some((l, f)) => (l, Some(f.to_string())),
        None => (rule.when.field.as_str(), None),
    };
    let Some(list) = ListField::parse(list_name) else {
        return bad(format!("unknown field '{}'", rule.when.field));
    };
    if let Some(f) = &item_field {
        if !list.item_fields().contains(&f.as_str()) {
            return bad(format!("unknown field '{}'", rule.when.field));
        }
    }
    let value = &rule.when.value;
    match (&item_field, rule.when.op) {
        (None, Op::Exists) => {}
        (None, Op::Contains) if value.is_string() || value.is_u64() => {}
        (None, Op::CountGe) if value.is_u64() => {}
        (Some(f), Op::Eq) if f == "label" && value.is_string() => {}
        (Some(f), Op::Gt | Op::Ge | Op::Lt | Op::Le | Op::Eq | Op::AbsGt | Op::AbsGe)
            if f != "label" && value.is_number() => {}
        _ => return bad(format!("operator {:?} with value {value} does not apply to '{}'", rule.when.op, rule.when.field)),
    }
    let allowed: Vec<&str> = if rule.when.op == Op::CountGe {
        vec!["count", "labels"]
    } else {
        let mut v = list.item_fields().to_vec();
        v.extend(["count", "labels"]);
        v
    };
    for name in placeholders(&rule.message).map_err(|e| Error::Corpus(format!("rule '{}': {e}", rule.id)))? {
        if !allowed.contains(&name.as_str()) {
            return bad(format!("placeholder {{{name}}} cannot be bound for field '{}'", rule.when.field));
        }
    }
    Ok(Compiled { list, item_field })
}

fn placeholders(message: &str) -> std::result::Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut rest = message;
    while let Some(start) = rest.find('{') {
        let after = &rest[start + 1..];
        let Some(end) = after.find('}') else {
            return Err("unclosed placeholder".into());
        };
        let name = &after[..end];
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(format!("malformed placeholder {{{name}}}"));
        }
        out.push(name.to_string());
        rest = &after[end + 1..];
    }
    if rest.contains('}') {
        return Err("unmatched '}'".into());
    }
    Ok(out)
}

fn item_matches(rule: &Rule, compiled: &Compiled, diff: &ConfigDiff, i: usize) -> bool {
    let value = &rule.when.value;
    match (&compiled.item_field, rule.when.op) {
        (None, Op::Exists) => true,
        (None, Op::Contains) => match (value.as_str(), value.as_u64()) {
            (Some(label), _) => compiled.list.value(diff, i, "label") == Some(Value::Text(label.to_string())),
            (None, Some(part)) => compiled.list.value(diff, i, "part") == Some(Value::Int(part as i64)),
            _ => false,
        },
        (Some(f), op) => {
            let Some(v) = compiled.list.value(diff, i, f) else {
                return false;
            };
            if let (Value::Text(s), Op::Eq) = (&v, op) {
                return value.as_str() == Some(s.as_str());
            }
            let (Some(x), Some(c)) = (v.number(), value.as_f64()) else {
                return false;
            };
            match op {
                Op::Eq => x == c,
                Op::Gt => x > c,
                Op::Ge => x >= c,
                Op::Lt => x < c,
                Op::Le => x <= c,
                Op::AbsGt => x.abs() > c,
                Op::AbsGe => x.abs() >= c,
                _ => false,
            }
        }
        _ => false,
    }
}

/// Whether a rule holds for a diff; `item` selects the list item for
/// item-level rules and is ignored for `count_ge`.
pub fn rule_holds(rule: &Rule, diff: &ConfigDiff, item: Option<usize>) -> Result<bool> {
    let compiled = compile(rule)?;
    if rule.when.op == Op::CountGe {
        let need = rule.when.value.as_u64().unwrap_or(u64::MAX);
        return Ok(compiled.list.len(diff) as u64 >= need);
    }
    Ok(match item {
        Some(i) if i < compiled.list.len(diff) => item_matches(rule, &compiled, diff, i),
        _ => false,
    })
}

/// Ordered, validated rule set.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleCorpus {
    rules: Vec<Rule>,
    compiled: Vec<Compiled>,
}

impl RuleCorpus {
    pub fn new(rules: Vec<Rule>) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for rule in &rules {
            if !ids.insert(rule.id.as_str()) {
                return Err(Error::Corpus(format!("duplicate rule id '{}'", rule.id)));
            }
        }
        let compiled = rules.iter().map(compile).collect::<Result<_>>()?;
        Ok(Self { rules, compiled })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rules: Vec<Rule> =
            serde_json::from_str(text).map_err(|e| Error::Corpus(format!("line {} column {}: {e}", e.line(), e.column())))?;
        Self::new(rules)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn default_corpus() -> Self {
        Self::from_json(DEFAULT_CORPUS).expect("the shipped corpus is valid")
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// Every firing as `(rule index, item)`, in rule order then item order.
    pub fn evaluate(&self, diff: &ConfigDiff) -> Vec<(usize, Option<usize>)> {
        let mut out = Vec::new();
        for (r, (rule, compiled)) in self.rules.iter().zip(&self.compiled).enumerate() {
            if rule.when.op == Op::CountGe {
                if rule_holds(rule, diff, None).unwrap_or(false) {
                    out.push((r, None));
                }
                continue;
            }
            for i in 0..compiled.list.len(diff) {
                if item_matches(rule, compiled, diff, i) {
                    out.push((r, Some(i)));
                }
            }
        }
        out
    }

    fn render(&self, r: usize, item: Option<usize>, diff: &ConfigDiff) -> String {
        let rule = &self.rules[r];
        let list = self.compiled[r].list;
        let mut out = String::new();
        let mut rest = rule.message.as_str();
        while let Some(start) = rest.find('{') {
            out.push_str(&rest[..start]);
            let after = &rest[start + 1..];
            let end = after.find('}').expect("validated at load");
            let name = &after[..end];
            let text = match name {
                "count" => list.len(diff).to_string(),
                "labels" => list.labels(diff).join(", "),
                field => item.and_then(|i| list.value(diff, i, field)).map(|v| v.text()).unwrap_or_default(),
            };
            out.push_str(&text);
            rest = &after[end + 1..];
        }
        out.push_str(rest);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceMessage {
    pub rule: String,
    pub severity: Severity,
    pub field: String,
    /// Index of the diff item the message is about.
    pub item: Option<usize>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceReport {
    pub template: String,
    pub messages: Vec<GuidanceMessage>,
    pub diff: ConfigDiff,
    pub parse_tree: ParseTree,
    pub parse_tree_text: String,
    /// Path of the rendered mean template.
    pub visualization: Option<String>,
}

/// Fires every matching rule; messages are ordered by severity (major
/// first), then rule order, then item order.
pub fn generate_report(
    diff: &ConfigDiff,
    corpus: &RuleCorpus,
    template: &AndOrTemplate,
    parse: &ParseTree,
    visualization: Option<&str>,
) -> GuidanceReport {
    let mut messages: Vec<GuidanceMessage> = corpus
        .evaluate(diff)
        .into_iter()
        .map(|(r, item)| {
            let rule = &corpus.rules[r];
            GuidanceMessage {
                rule: rule.id.clone(),
                severity: rule.severity,
                field: rule.when.field.clone(),
                item,
                text: corpus.render(r, item, diff),
            }
        })
        .collect();
    messages.sort_by_key(|m| m.severity);
    GuidanceReport {
        template: template.label.clone(),
        messages,
        diff: diff.clone(),
        parse_tree: parse.clone(),
        parse_tree_text: render_parse_tree(parse),
        visualization: visualization.map(str::to_string),
    }
}

impl GuidanceReport {
    /// Plain-text rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Guidance against template '{}'", self.template);
        if self.messages.is_empty() {
            out.push_str("No issues found.\n");
        }
        for m in &self.messages {
            let tag = match m.severity {
                Severity::Major => "MAJOR",
                Severity::Warn => "WARN",
                Severity::Info => "INFO",
            };
            let _ = writeln!(out, "[{tag}] {}", m.text);
        }
        out.push_str("\nParse tree:\n");
        out.push_str(&self.parse_tree_text);
        if let Some(v) = &self.visualization {
            let _ = writeln!(out, "\nTemplate visualization: {v}");
        }
        out
    }
}
