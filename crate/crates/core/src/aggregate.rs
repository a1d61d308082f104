//! Post-fit summaries: group-level averages of unit posteriors and modal
//! class assignments.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::numerics::argmax;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupProfile {
    pub label: String,
    pub n_units: usize,
    pub proportions: Vec<f64>,
}

fn profile(px: &Matrix, rows: &[usize], label: &str) -> GroupProfile {
    let mut p = vec![0.0; px.cols];
    for &i in rows {
        for (acc, v) in p.iter_mut().zip(px.row(i)) {
            *acc += v;
        }
    }
    let n = rows.len() as f64;
    p.iter_mut().for_each(|v| *v /= n);
    GroupProfile {
        label: label.to_string(),
        n_units: rows.len(),
        proportions: p,
    }
}

/// Column means of the posterior rows of the units in group `label`.
/// `groups[i]` indexes `labels`.
pub fn group_class_proportions(px: &Matrix, groups: &[usize], labels: &[String], label: &str) -> Result<GroupProfile> {
    let g = labels
        .iter()
        .position(|l| l == label)
        .ok_or_else(|| Error::UnknownGroup(label.to_string()))?;
    let rows: Vec<usize> = (0..px.rows).filter(|&i| groups[i] == g).collect();
    if rows.is_empty() {
        return Err(Error::UnknownGroup(label.to_string()));
    }
    Ok(profile(px, &rows, label))
}

/// Profiles of every group that has at least one unit, in label order.
pub fn all_group_profiles(px: &Matrix, groups: &[usize], labels: &[String]) -> Vec<GroupProfile> {
    let mut members = vec![Vec::new(); labels.len()];
    for (i, &g) in groups.iter().enumerate().take(px.rows) {
        members[g].push(i);
    }
    labels
        .iter()
        .zip(&members)
        .filter(|(_, rows)| !rows.is_empty())
        .map(|(l, rows)| profile(px, rows, l))
        .collect()
}

/// Row-wise argmax (zero-based); ties go to the smallest class.
pub fn modal_assignments(post: &Matrix) -> Vec<usize> {
    post.iter_rows().map(argmax).collect()
}

pub fn write_profiles_csv<W: Write>(profiles: &[GroupProfile], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Format(e.to_string());
    let t = profiles.first().map_or(0, |p| p.proportions.len());
    let mut header = vec!["group".to_string(), "n".to_string()];
    header.extend((1..=t).map(|c| format!("C{c}")));
    w.write_record(&header).map_err(io)?;
    for p in profiles {
        let mut rec = vec![p.label.clone(), p.n_units.to_string()];
        rec.extend(p.proportions.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
