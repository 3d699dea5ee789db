#![allow(dead_code)]

use aot_core::model::{AndOrTemplate, Branch, Layout, Level, OrNode, Pat, SelectedFeature};

pub fn feature(column: usize, beta: f64, log_z: f64, mean: f64) -> SelectedFeature {
    SelectedFeature { column, beta, log_z, mean, gain: beta * mean - log_z }
}

/// Matrix-layout template with `columns_per_region` columns per region;
/// `parts[r]` lists the content branches of region `r` as
/// `(log prior, features)`, and `off[r]` is the log prior of its off branch.
pub fn template(columns_per_region: usize, off: &[f64], parts: Vec<Vec<(f64, Vec<SelectedFeature>)>>) -> AndOrTemplate {
    let mut or_nodes = Vec::new();
    let mut terminals = Vec::new();
    for (r, region_parts) in parts.into_iter().enumerate() {
        let mut branches = vec![Branch { part: None, log_prob: off[r] }];
        for (log_prob, features) in region_parts {
            let k = terminals.len();
            terminals.push(Pat::new(k, r, None, features));
            branches.push(Branch { part: Some(k), log_prob });
        }
        or_nodes.push(OrNode {
            region: r,
            rect: None,
            columns: (r * columns_per_region..(r + 1) * columns_per_region).collect(),
            branches,
        });
    }
    AndOrTemplate {
        label: "toy".into(),
        level: Level::Object,
        layout: Layout::Matrix { columns: off.len() * columns_per_region },
        or_nodes,
        terminals,
    }
}

/// Every per-region branch combination of a template.
pub fn all_choices(t: &AndOrTemplate) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for node in &t.or_nodes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..node.branches.len()).map(move |b| {
                    let mut next = prefix.clone();
                    next.push(b);
                    next
                })
            })
            .collect();
    }
    out
}
