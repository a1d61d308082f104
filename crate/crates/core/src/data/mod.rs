//! CSV ingestion, categorical encoding, covariate design matrices and the
//! missing-data policy: rows with a missing item are dropped up front, rows
//! with a missing covariate only for structural estimation.

mod encode;
mod table;

pub use encode::{encode_covariates, encode_items, DesignMatrix, EncodedItems, ItemSchema};
pub use table::{load_csv, Column, RawTable};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Which CSV columns play which role.
#[derive(Debug, Clone, Default)]
pub struct ColumnRoles {
    pub items: Vec<String>,
    pub group: Option<String>,
    pub low_covariates: Vec<String>,
    pub high_covariates: Vec<String>,
}

/// Encoded data ready for estimation. Units are indexed `0..N`, groups
/// `0..J`; every group has at least one unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub items: Vec<ItemSchema>,
    y: Vec<usize>,
    group_of: Vec<usize>,
    group_rows: Vec<Vec<usize>>,
    pub group_labels: Vec<String>,
    /// N × K, first column all ones.
    pub z_low: Matrix,
    pub z_low_names: Vec<String>,
    /// J × K*, first column all ones.
    pub z_high: Matrix,
    pub z_high_names: Vec<String>,
    /// Per unit: some covariate is missing.
    pub covariate_missing: Vec<bool>,
    /// Per unit: row index in the source table.
    pub source_rows: Vec<usize>,
}

fn intercept(n: usize) -> Matrix {
    Matrix::filled(n, 1, 1.0)
}

impl Dataset {
    /// Intercept-only dataset from already-encoded responses. `groups`
    /// holds zero-based group indices per unit; `None` puts every unit in a
    /// single group.
    pub fn new(items: Vec<ItemSchema>, y: Vec<Vec<usize>>, groups: Option<Vec<usize>>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::EmptyData);
        }
        let h = items.len();
        let mut flat = Vec::with_capacity(n * h);
        for row in &y {
            if row.len() != h {
                return Err(Error::InvalidSpec("response row has wrong length".into()));
            }
            for (v, item) in row.iter().zip(&items) {
                if *v >= item.n_categories() {
                    return Err(Error::InvalidSpec(format!(
                        "code {v} out of range for item `{}`",
                        item.name
                    )));
                }
            }
            flat.extend_from_slice(row);
        }
        let group_of = groups.unwrap_or_else(|| vec![0; n]);
        if group_of.len() != n {
            return Err(Error::InvalidSpec("group vector has wrong length".into()));
        }
        let j = group_of.iter().max().map_or(0, |m| m + 1);
        let mut group_rows = vec![Vec::new(); j];
        for (i, &g) in group_of.iter().enumerate() {
            group_rows[g].push(i);
        }
        if group_rows.iter().any(Vec::is_empty) {
            return Err(Error::InvalidSpec("group indices must be contiguous".into()));
        }
        Ok(Dataset {
            items,
            y: flat,
            group_of,
            group_rows,
            group_labels: (1..=j).map(|g| g.to_string()).collect(),
            z_low: intercept(n),
            z_low_names: vec!["Intercept".into()],
            z_high: intercept(j),
            z_high_names: vec!["Intercept".into()],
            covariate_missing: vec![false; n],
            source_rows: (0..n).collect(),
        })
    }

    /// Replaces the low-level design; `z` must include the intercept column.
    pub fn with_low_covariates(mut self, names: Vec<String>, z: Matrix) -> Self {
        assert_eq!(z.rows, self.n_units());
        assert_eq!(names.len(), z.cols);
        self.z_low = z;
        self.z_low_names = names;
        self
    }

    pub fn with_high_covariates(mut self, names: Vec<String>, z: Matrix) -> Self {
        assert_eq!(z.rows, self.n_groups());
        assert_eq!(names.len(), z.cols);
        self.z_high = z;
        self.z_high_names = names;
        self
    }

    /// Encodes a raw table: items, groups (by first appearance) and both
    /// design matrices. Rows with a missing item are removed.
    pub fn build(table: &RawTable, roles: &ColumnRoles) -> Result<Self> {
        if roles.items.is_empty() {
            return Err(Error::InvalidSpec("at least one item column is required".into()));
        }
        let enc = encode_items(table, &roles.items)?;
        let keep = enc.complete_rows();
        if keep.is_empty() {
            return Err(Error::EmptyData);
        }
        let t = table.select_rows(&keep);
        let n = keep.len();

        let mut group_labels: Vec<String> = Vec::new();
        let mut group_of = Vec::with_capacity(n);
        if let Some(gcol) = &roles.group {
            let col = t.column(gcol)?;
            let mut index = std::collections::HashMap::new();
            for r in 0..n {
                let label = col.text(r).unwrap_or_else(|| "NA".to_string());
                let next = index.len();
                let g = *index.entry(label.clone()).or_insert_with(|| {
                    group_labels.push(label);
                    next
                });
                group_of.push(g);
            }
        } else {
            group_labels.push("all".into());
            group_of.resize(n, 0);
        }
        let j = group_labels.len();
        let mut group_rows = vec![Vec::new(); j];
        for (i, &g) in group_of.iter().enumerate() {
            group_rows[g].push(i);
        }

        let low = encode_covariates(&t, &roles.low_covariates)?;
        let high = encode_covariates(&t, &roles.high_covariates)?;

        // high-level covariates must be constant within a group
        let kh = high.values.cols;
        let mut z_high = Matrix::filled(j, kh, f64::NAN);
        for (g, rows) in group_rows.iter().enumerate() {
            z_high[(g, 0)] = 1.0;
            for c in 1..kh {
                let mut value: Option<f64> = None;
                for &r in rows {
                    let v = high.values[(r, c)];
                    if v.is_nan() {
                        continue;
                    }
                    match value {
                        None => value = Some(v),
                        Some(prev) if prev != v => {
                            return Err(Error::InconsistentGroupCovariate {
                                column: high.names[c].clone(),
                                group: group_labels[g].clone(),
                            })
                        }
                        _ => {}
                    }
                }
                if let Some(v) = value {
                    z_high[(g, c)] = v;
                }
            }
        }

        let covariate_missing = (0..n)
            .map(|r| low.missing[r] || high.missing[r])
            .collect();

        Ok(Dataset {
            items: enc.schemas,
            y: enc.y,
            group_of,
            group_rows,
            group_labels,
            z_low: low.values,
            z_low_names: low.names,
            z_high,
            z_high_names: high.names,
            covariate_missing,
            source_rows: keep,
        })
    }

    pub fn n_units(&self) -> usize {
        self.group_of.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_groups(&self) -> usize {
        self.group_rows.len()
    }

    pub fn n_categories(&self) -> Vec<usize> {
        self.items.iter().map(ItemSchema::n_categories).collect()
    }

    #[inline]
    pub fn y_row(&self, i: usize) -> &[usize] {
        let h = self.items.len();
        &self.y[i * h..(i + 1) * h]
    }

    /// Row-major N × H codes.
    pub fn responses(&self) -> &[usize] {
        &self.y
    }

    #[inline]
    pub fn group_of(&self, i: usize) -> usize {
        self.group_of[i]
    }

    pub fn group_assignment(&self) -> &[usize] {
        &self.group_of
    }

    pub fn group_rows(&self, j: usize) -> &[usize] {
        &self.group_rows[j]
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.group_rows.iter().map(Vec::len).collect()
    }

    pub fn has_low_covariates(&self) -> bool {
        self.z_low.cols > 1
    }

    pub fn has_high_covariates(&self) -> bool {
        self.z_high.cols > 1
    }

    /// One-hot expansion used as clustering input: binary items give a
    /// single 0/1 column, polytomous items one column per category.
    pub fn one_hot(&self) -> Matrix {
        let widths: Vec<usize> = self
            .items
            .iter()
            .map(|it| if it.n_categories() == 2 { 1 } else { it.n_categories() })
            .collect();
        let p: usize = widths.iter().sum();
        let mut x = Matrix::zeros(self.n_units(), p);
        for i in 0..self.n_units() {
            let mut offset = 0;
            for (h, &y) in self.y_row(i).iter().enumerate() {
                if widths[h] == 1 {
                    x[(i, offset)] = y as f64;
                } else {
                    x[(i, offset + y)] = 1.0;
                }
                offset += widths[h];
            }
        }
        x
    }

    /// Keeps the listed units (in order), dropping groups left empty.
    pub fn select_units(&self, keep: &[usize]) -> Result<Dataset> {
        if keep.is_empty() {
            return Err(Error::EmptyData);
        }
        let h = self.n_items();
        let mut y = Vec::with_capacity(keep.len() * h);
        for &i in keep {
            y.extend_from_slice(self.y_row(i));
        }
        let mut remap = vec![usize::MAX; self.n_groups()];
        let mut kept_groups = Vec::new();
        let mut group_of = Vec::with_capacity(keep.len());
        for &i in keep {
            let g = self.group_of[i];
            if remap[g] == usize::MAX {
                remap[g] = kept_groups.len();
                kept_groups.push(g);
            }
            group_of.push(remap[g]);
        }
        let mut group_rows = vec![Vec::new(); kept_groups.len()];
        for (i, &g) in group_of.iter().enumerate() {
            group_rows[g].push(i);
        }
        Ok(Dataset {
            items: self.items.clone(),
            y,
            group_of,
            group_rows,
            group_labels: kept_groups.iter().map(|&g| self.group_labels[g].clone()).collect(),
            z_low: self.z_low.select_rows(keep),
            z_low_names: self.z_low_names.clone(),
            z_high: self.z_high.select_rows(&kept_groups),
            z_high_names: self.z_high_names.clone(),
            covariate_missing: keep.iter().map(|&i| self.covariate_missing[i]).collect(),
            source_rows: keep.iter().map(|&i| self.source_rows[i]).collect(),
        })
    }

    /// Drops covariate designs, keeping only the intercepts.
    pub fn without_covariates(&self) -> Dataset {
        let mut d = self.clone();
        d.z_low = intercept(self.n_units());
        d.z_low_names = vec!["Intercept".into()];
        d.z_high = intercept(self.n_groups());
        d.z_high_names = vec!["Intercept".into()];
        d.covariate_missing = vec![false; self.n_units()];
        d
    }
}

/// Removes units with a missing covariate. Groups emptied by the filter are
/// dropped with a warning.
pub fn filter_for_structural(data: &Dataset) -> Result<Dataset> {
    let keep: Vec<usize> = (0..data.n_units())
        .filter(|&i| !data.covariate_missing[i])
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyStructuralData);
    }
    if keep.len() == data.n_units() {
        return Ok(data.clone());
    }
    let out = data.select_units(&keep)?;
    if out.n_groups() < data.n_groups() {
        log::warn!(
            "{} group(s) dropped from structural estimation: every unit has a missing covariate",
            data.n_groups() - out.n_groups()
        );
    }
    Ok(out)
}
