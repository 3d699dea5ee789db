//! Exact inference of the latent configuration, matching scores and
//! classification.
//!
//! Regions are independent given the template, so the joint argmax over all
//! branch combinations factors into one argmax per OR node.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::features::ResponseVector;
use crate::model::{AndOrTemplate, Configuration, Geometry, NodeKind, ParseNode, ParseTree, Transform};

/// Per-region branch maximizing `log prior + terminal score`; ties go to the
/// lowest branch index.
pub fn best_choices(values: &[f64], template: &AndOrTemplate) -> Vec<usize> {
    template
        .or_nodes
        .iter()
        .map(|node| {
            let mut best = 0;
            let mut best_value = f64::NEG_INFINITY;
            for (b, branch) in node.branches.iter().enumerate() {
                let score = branch.part.map_or(0.0, |k| template.terminals[k].score(values));
                let value = branch.log_prob + score;
                if value > best_value {
                    best = b;
                    best_value = value;
                }
            }
            best
        })
        .collect()
}

fn check_dimension(responses: &ResponseVector, template: &AndOrTemplate) -> Result<()> {
    if responses.len() != template.dimension() || responses.geometry.len() != responses.len() {
        return invalid(format!(
            "response vector has {} entries, template '{}' expects {}",
            responses.len(),
            template.label,
            template.dimension()
        ));
    }
    Ok(())
}

/// Geometry of an activated part: the evidence recorded for its strongest
/// selected feature (largest `beta * r`), falling back to any evidence in the
/// region and finally to the identity transform.
fn part_geometry(responses: &ResponseVector, template: &AndOrTemplate, region: usize, k: usize) -> Geometry {
    let pat = &template.terminals[k];
    let strongest = pat
        .selected
        .iter()
        .filter(|f| responses.geometry[f.column].is_some())
        .max_by(|a, b| {
            (a.beta * responses.values[a.column])
                .total_cmp(&(b.beta * responses.values[b.column]))
                .then(b.column.cmp(&a.column))
        })
        .and_then(|f| responses.geometry[f.column]);
    strongest
        .or_else(|| template.or_nodes[region].columns.iter().find_map(|&c| responses.geometry[c]))
        .unwrap_or(Geometry::Transform(Transform::default()))
}

/// Infers `(s, g)` and the parse tree of an image.
pub fn infer_configuration(responses: &ResponseVector, template: &AndOrTemplate) -> Result<(Configuration, ParseTree)> {
    check_dimension(responses, template)?;
    let choices = best_choices(&responses.values, template);
    let s = template.structure_for(&choices);
    let mut g = BTreeMap::new();
    let mut nodes = vec![ParseNode {
        id: "root".into(),
        kind: NodeKind::And,
        parent: None,
        branch: None,
        part: None,
        label: template.label.clone(),
        score: 0.0,
        geometry: None,
    }];
    let mut root_score = 0.0;
    let mut log_prior = 0.0;
    for (r, (node, &b)) in template.or_nodes.iter().zip(&choices).enumerate() {
        let branch = &node.branches[b];
        log_prior += branch.log_prob;
        let or_index = nodes.len();
        nodes.push(ParseNode {
            id: format!("or{}", node.region),
            kind: NodeKind::Or,
            parent: Some(0),
            branch: Some(b),
            part: None,
            label: format!("region {}", node.region),
            score: branch.log_prob,
            geometry: None,
        });
        if let Some(k) = branch.part {
            let score = template.terminals[k].score(&responses.values);
            let geometry = part_geometry(responses, template, r, k);
            root_score += score;
            g.insert(k, geometry);
            nodes.push(ParseNode {
                id: format!("t{k}"),
                kind: NodeKind::Terminal,
                parent: Some(or_index),
                branch: None,
                part: Some(k),
                label: template.part_label(k),
                score,
                geometry: Some(geometry),
            });
        }
    }
    nodes[0].score = root_score;
    let tree = ParseTree { template: template.label.clone(), root_score, log_prior, nodes };
    Ok((Configuration { s, g }, tree))
}

/// Raw and normalized matching score of an image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    pub raw: f64,
    pub normalized: f64,
    pub s_max: f64,
    pub configuration: Configuration,
    pub parse_tree: ParseTree,
}

/// Normalizer of the matching score: the raw score of an image whose every
/// response is 1.
pub fn s_max(template: &AndOrTemplate) -> f64 {
    let ones = vec![1.0; template.dimension()];
    best_choices(&ones, template)
        .iter()
        .zip(&template.or_nodes)
        .filter_map(|(&b, node)| node.branches[b].part)
        .map(|k| template.terminals[k].score(&ones))
        .sum()
}

/// `clip(raw / s_max, 0, 1)`; zero when the template carries no positive score.
pub fn normalize_score(raw: f64, s_max: f64) -> f64 {
    if s_max > 0.0 {
        (raw / s_max).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

pub fn matching_score(responses: &ResponseVector, template: &AndOrTemplate) -> Result<MatchScore> {
    let (configuration, parse_tree) = infer_configuration(responses, template)?;
    let raw = parse_tree.root_score;
    let s_max = s_max(template);
    Ok(MatchScore { raw, normalized: normalize_score(raw, s_max), s_max, configuration, parse_tree })
}

/// One candidate of a classification: a labelled template and the image's
/// responses in that template's space.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub label: &'a str,
    pub template: &'a AndOrTemplate,
    pub responses: &'a ResponseVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub label: String,
    pub raw: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: String,
    pub scores: Vec<LabelScore>,
}

/// Argmax label by normalized score; ties go to the lexicographically
/// smallest label.
pub fn classify(candidates: &[Candidate<'_>]) -> Result<Classification> {
    if candidates.is_empty() {
        return invalid("no templates to classify against");
    }
    let scores = candidates
        .iter()
        .map(|c| {
            let m = matching_score(c.responses, c.template)?;
            Ok(LabelScore { label: c.label.to_string(), raw: m.raw, normalized: m.normalized })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = scores
        .iter()
        .min_by(|a, b| b.normalized.total_cmp(&a.normalized).then_with(|| a.label.cmp(&b.label)))
        .expect("nonempty");
    Ok(Classification { label: best.label.clone(), scores })
}

/// Indented text rendering of a parse tree, one node per line.
pub fn render_parse_tree(tree: &ParseTree) -> String {
    let mut out = String::new();
    let depth = |mut i: usize| {
        let mut d = 0;
        while let Some(p) = tree.nodes[i].parent {
            i = p;
            d += 1;
        }
        d
    };
    for (i, node) in tree.nodes.iter().enumerate() {
        let indent = "  ".repeat(depth(i));
        let kind = match node.kind {
            NodeKind::And => "AND",
            NodeKind::Or => "OR",
            NodeKind::Terminal => "TERMINAL",
        };
        let _ = write!(out, "{indent}{kind} {} [{}]", node.id, node.label);
        if let Some(b) = node.branch {
            let _ = write!(out, " branch={b}");
            if b == 0 {
                out.push_str(" (off)");
            }
        }
        let _ = write!(out, " score={:.6}", node.score);
        match node.geometry {
            Some(Geometry::Transform(t)) => {
                let _ = write!(out, " transform=({},{},{},{})", t.dx, t.dy, t.dtheta, t.dscale);
            }
            Some(Geometry::Attributes(a)) => {
                let _ = write!(
                    out,
                    " position=({},{},{},{}) size={:.4} color=({:.3},{:.3},{:.3})",
                    a.position.x,
                    a.position.y,
                    a.position.w,
                    a.position.h,
                    a.size,
                    a.mean_color[0],
                    a.mean_color[1],
                    a.mean_color[2]
                );
            }
            None => {}
        }
        out.push('\n');
    }
    out
}
