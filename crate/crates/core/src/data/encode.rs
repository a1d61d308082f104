use serde::{Deserialize, Serialize};

use super::table::{Column, RawTable};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A categorical indicator and its observed category codes, in encoding
/// order: code `c` of the encoded data is `categories[c]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemSchema {
    pub name: String,
    pub categories: Vec<String>,
}

impl ItemSchema {
    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn decode(&self, code: usize) -> &str {
        &self.categories[code]
    }
}

/// Sorted distinct values of a column (numeric order for numeric columns,
/// lexicographic otherwise) and the per-row index into that list.
fn levels(col: &Column) -> (Vec<String>, Vec<Option<usize>>) {
    match col {
        Column::Int(v) => {
            let mut lv: Vec<i64> = v.iter().flatten().copied().collect();
            lv.sort_unstable();
            lv.dedup();
            let codes = v
                .iter()
                .map(|x| x.map(|x| lv.binary_search(&x).unwrap()))
                .collect();
            (lv.iter().map(|x| x.to_string()).collect(), codes)
        }
        Column::Float(v) => {
            let mut lv: Vec<f64> = v.iter().flatten().copied().collect();
            lv.sort_by(f64::total_cmp);
            lv.dedup();
            let codes = v
                .iter()
                .map(|x| x.map(|x| lv.binary_search_by(|p| p.total_cmp(&x)).unwrap()))
                .collect();
            (lv.iter().map(|x| x.to_string()).collect(), codes)
        }
        Column::Str(v) => {
            let mut lv: Vec<&String> = v.iter().flatten().collect();
            lv.sort();
            lv.dedup();
            let codes = v
                .iter()
                .map(|x| x.as_ref().map(|x| lv.binary_search(&x).unwrap()))
                .collect();
            (lv.into_iter().cloned().collect(), codes)
        }
    }
}

/// Encoded responses for the complete rows of a table.
#[derive(Debug, Clone)]
pub struct EncodedItems {
    pub schemas: Vec<ItemSchema>,
    /// Row-major (complete rows) × items.
    pub y: Vec<usize>,
    /// `true` for table rows with at least one missing item.
    pub missing: Vec<bool>,
}

impl EncodedItems {
    pub fn complete_rows(&self) -> Vec<usize> {
        (0..self.missing.len()).filter(|&r| !self.missing[r]).collect()
    }
}

/// Encodes categorical item columns to `0..C_h` by sorted observed code.
/// Rows with any missing item are flagged and left out of `y`.
pub fn encode_items(table: &RawTable, item_cols: &[String]) -> Result<EncodedItems> {
    let n = table.n_rows();
    let mut missing = vec![false; n];
    let mut schemas = Vec::with_capacity(item_cols.len());
    let mut coded = Vec::with_capacity(item_cols.len());
    for name in item_cols {
        let col = table.column(name)?;
        let (cats, codes) = levels(col);
        for (r, c) in codes.iter().enumerate() {
            if c.is_none() {
                missing[r] = true;
            }
        }
        schemas.push(ItemSchema {
            name: name.clone(),
            categories: cats,
        });
        coded.push(codes);
    }

    // categories are enumerated over complete rows only
    let keep: Vec<usize> = (0..n).filter(|&r| !missing[r]).collect();
    let mut y = Vec::with_capacity(keep.len() * item_cols.len());
    let mut remaps = Vec::with_capacity(schemas.len());
    for (schema, codes) in schemas.iter_mut().zip(&coded) {
        let mut used = vec![false; schema.categories.len()];
        for &r in &keep {
            used[codes[r].unwrap()] = true;
        }
        let mut remap = vec![usize::MAX; used.len()];
        let mut next = 0;
        let mut cats = Vec::new();
        for (c, u) in used.iter().enumerate() {
            if *u {
                remap[c] = next;
                next += 1;
                cats.push(schema.categories[c].clone());
            }
        }
        schema.categories = cats;
        if schema.n_categories() < 2 {
            return Err(Error::DegenerateItem(schema.name.clone()));
        }
        remaps.push(remap);
    }
    for &r in &keep {
        for (codes, remap) in coded.iter().zip(&remaps) {
            y.push(remap[codes[r].unwrap()]);
        }
    }
    Ok(EncodedItems {
        schemas,
        y,
        missing,
    })
}

/// A covariate design matrix with a leading intercept column. Missing
/// cells hold NaN and flag their row in `missing`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub names: Vec<String>,
    pub values: Matrix,
    pub missing: Vec<bool>,
}

/// Numeric columns pass through; text columns become `<col>.<level>`
/// dummies for every level after the first in sorted order.
pub fn encode_covariates(table: &RawTable, cols: &[String]) -> Result<DesignMatrix> {
    let n = table.n_rows();
    let mut names = vec!["Intercept".to_string()];
    let mut columns: Vec<Vec<f64>> = vec![vec![1.0; n]];
    let mut missing = vec![false; n];

    for name in cols {
        let col = table.column(name)?;
        for (r, m) in missing.iter_mut().enumerate() {
            if col.is_missing(r) {
                *m = true;
            }
        }
        if col.is_numeric() {
            names.push(name.clone());
            columns.push((0..n).map(|r| col.as_f64(r).unwrap_or(f64::NAN)).collect());
        } else {
            let (lv, codes) = levels(col);
            if lv.len() < 2 {
                return Err(Error::DegenerateCovariate(name.clone()));
            }
            for (l, level) in lv.iter().enumerate().skip(1) {
                names.push(format!("{name}.{level}"));
                columns.push(
                    codes
                        .iter()
                        .map(|c| match c {
                            Some(c) if *c == l => 1.0,
                            Some(_) => 0.0,
                            None => f64::NAN,
                        })
                        .collect(),
                );
            }
        }
    }

    let k = columns.len();
    let mut values = Matrix::zeros(n, k);
    for (j, col) in columns.iter().enumerate() {
        for (r, v) in col.iter().enumerate() {
            values[(r, j)] = *v;
        }
    }
    Ok(DesignMatrix {
        names,
        values,
        missing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(csv: &str) -> RawTable {
        RawTable::from_reader(csv.as_bytes(), &[]).unwrap()
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn binary_identity_encoding() {
        let t = table("a\n1\n0\n1\n");
        let e = encode_items(&t, &names(&["a"])).unwrap();
        assert_eq!(e.schemas[0].categories, vec!["0", "1"]);
        assert_eq!(e.y, vec![1, 0, 1]);
    }

    #[test]
    fn string_codes_sorted() {
        let t = table("a\nc\na\nb\n");
        let e = encode_items(&t, &names(&["a"])).unwrap();
        assert_eq!(e.schemas[0].n_categories(), 3);
        assert_eq!(e.schemas[0].categories, vec!["a", "b", "c"]);
        assert_eq!(e.y, vec![2, 0, 1]);
    }

    #[test]
    fn missing_item_rows_flagged() {
        let t = table("a,b\n1,0\n0,1\n1,\n0,0\n1,1\n");
        let e = encode_items(&t, &names(&["a", "b"])).unwrap();
        // direct scan: only the third row has an empty cell
        let expect: Vec<bool> = (0..5).map(|r| r == 2).collect();
        assert_eq!(e.missing, expect);
        assert_eq!(e.y.len() / 2, 4);
        assert_eq!(e.complete_rows(), vec![0, 1, 3, 4]);
    }

    #[test]
    fn single_category_item_rejected() {
        let t = table("a,b\n1,0\n1,1\n");
        assert!(matches!(
            encode_items(&t, &names(&["a", "b"])),
            Err(Error::DegenerateItem(n)) if n == "a"
        ));
    }

    #[test]
    fn country_dummies_with_sorted_reference() {
        let t = table("COUNTRY\nITA\nBGR\nCHL\nITA\n");
        let d = encode_covariates(&t, &names(&["COUNTRY"])).unwrap();
        assert_eq!(d.names, vec!["Intercept", "COUNTRY.CHL", "COUNTRY.ITA"]);
        assert_eq!(d.values.row(0), &[1.0, 0.0, 1.0]);
        assert_eq!(d.values.row(1), &[1.0, 0.0, 0.0]);
        assert_eq!(d.values.row(2), &[1.0, 1.0, 0.0]);
    }

    #[test]
    fn numeric_passthrough() {
        let t = table("log_gdp_constant,female\n9.8,1\n10.5,0\n");
        let d = encode_covariates(&t, &names(&["log_gdp_constant", "female"])).unwrap();
        assert_eq!(d.names, vec!["Intercept", "log_gdp_constant", "female"]);
        assert_eq!(d.values.column(1), vec![9.8, 10.5]);
        assert_eq!(d.values.column(2), vec![1.0, 0.0]);
        assert!(d.values.column(0).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn constant_categorical_rejected() {
        let t = table("c\nx\nx\n");
        assert!(matches!(
            encode_covariates(&t, &names(&["c"])),
            Err(Error::DegenerateCovariate(_))
        ));
    }

    #[test]
    fn dummy_expansion_counts() {
        let t = table("g\nb\na\nd\nc\na\n");
        let d = encode_covariates(&t, &names(&["g"])).unwrap();
        assert_eq!(d.values.cols - 1, 3);
        for r in 0..d.values.rows {
            let ones = d.values.row(r)[1..].iter().filter(|&&v| v == 1.0).count();
            assert!(ones <= 1);
        }
    }
}
