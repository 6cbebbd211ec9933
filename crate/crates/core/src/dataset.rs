//! Discrete datasets: schema, CSV ingestion, contexts and unique-row extraction.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest integer code accepted from input files.
pub const MAX_CODE: u32 = u16::MAX as u32;

/// Variable names, arities and optional categorical labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSchema {
    names: Vec<String>,
    arities: Vec<usize>,
    /// Per variable, the label of each code when the column was categorical.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    labels: Vec<Option<Vec<String>>>,
}

impl VariableSchema {
    pub fn new(names: Vec<String>, arities: Vec<usize>) -> Result<Self> {
        let schema = VariableSchema {
            names,
            arities,
            labels: Vec::new(),
        };
        schema.validate()?;
        Ok(schema)
    }

    /// Binary schema with names `X0..X{n-1}`.
    pub fn binary(n: usize) -> Self {
        VariableSchema {
            names: default_names(n),
            arities: vec![2; n],
            labels: Vec::new(),
        }
    }

    pub fn with_labels(mut self, labels: Vec<Option<Vec<String>>>) -> Result<Self> {
        self.labels = labels;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.names.len() != self.arities.len() {
            return Err(Error::Schema(format!(
                "{} names for {} arities",
                self.names.len(),
                self.arities.len()
            )));
        }
        if self.names.is_empty() {
            return Err(Error::Schema("no variables".into()));
        }
        for (a, &r) in self.arities.iter().enumerate() {
            if r < 2 || r > MAX_CODE as usize + 1 {
                return Err(Error::Schema(format!(
                    "variable {a} has arity {r}; arities must lie in 2..={}",
                    MAX_CODE as usize + 1
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for name in &self.names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate variable name {name:?}")));
            }
        }
        if !self.labels.is_empty() {
            if self.labels.len() != self.arities.len() {
                return Err(Error::Schema("label table length differs from n".into()));
            }
            for (a, l) in self.labels.iter().enumerate() {
                if let Some(l) = l {
                    if l.len() > self.arities[a] {
                        return Err(Error::Schema(format!(
                            "variable {a} has more labels than its arity"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.arities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arities.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn arities(&self) -> &[usize] {
        &self.arities
    }

    pub fn arity(&self, var: usize) -> usize {
        self.arities[var]
    }

    /// Categorical labels of `var`, if its column was not numeric.
    pub fn labels(&self, var: usize) -> Option<&[String]> {
        self.labels.get(var).and_then(|l| l.as_deref())
    }

    /// Number of joint states, or `None` on overflow.
    pub fn state_count(&self) -> Option<u128> {
        self.arities
            .iter()
            .try_fold(1u128, |acc, &r| acc.checked_mul(r as u128))
    }

    fn render(&self, var: usize, code: u32) -> String {
        match self.labels(var).and_then(|l| l.get(code as usize)) {
            Some(label) => label.clone(),
            None => code.to_string(),
        }
    }
}

fn default_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("X{i}")).collect()
}

/// A complete table of discrete samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    schema: VariableSchema,
    data: Vec<u32>,
}

impl Dataset {
    pub fn new(schema: VariableSchema, rows: Vec<Vec<u32>>) -> Result<Self> {
        let n = schema.len();
        let mut data = Vec::with_capacity(rows.len() * n);
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::Ragged {
                    row: r + 1,
                    expected: n,
                    found: row.len(),
                });
            }
            data.extend(row);
        }
        Self::from_flat(schema, data)
    }

    /// Builds a dataset from row-major codes.
    pub fn from_flat(schema: VariableSchema, data: Vec<u32>) -> Result<Self> {
        schema.validate()?;
        let n = schema.len();
        if !data.len().is_multiple_of(n) {
            return Err(Error::Schema(
                "flat data length is not a multiple of n".into(),
            ));
        }
        for (i, &code) in data.iter().enumerate() {
            let a = i % n;
            if code as usize >= schema.arity(a) {
                return Err(Error::Parse {
                    row: i / n + 1,
                    column: a + 1,
                    message: format!("code {code} out of range for arity {}", schema.arity(a)),
                });
            }
        }
        Ok(Dataset { schema, data })
    }

    pub fn schema(&self) -> &VariableSchema {
        &self.schema
    }

    pub fn n(&self) -> usize {
        self.schema.len()
    }

    pub fn num_rows(&self) -> usize {
        self.data.len() / self.n()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, r: usize) -> &[u32] {
        let n = self.n();
        &self.data[r * n..(r + 1) * n]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[u32]> + '_ {
        self.data.chunks_exact(self.n())
    }

    /// First `count` rows as a new dataset sharing the schema.
    pub fn head(&self, count: usize) -> Dataset {
        let end = (count * self.n()).min(self.data.len());
        Dataset {
            schema: self.schema.clone(),
            data: self.data[..end].to_vec(),
        }
    }

    pub fn load_csv(path: impl AsRef<Path>, header: bool) -> Result<Self> {
        Self::read_csv(File::open(path)?, header)
    }

    /// Parses CSV text. Columns made only of non-negative integers keep their
    /// codes; any other column is categorical, coded by first appearance.
    pub fn read_csv<R: Read>(reader: R, header: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);

        let mut names: Option<Vec<String>> = None;
        let mut fields: Vec<Vec<String>> = Vec::new();
        let mut width: Option<usize> = None;
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 1;
            let rec = rec.map_err(|e| Error::Parse {
                row: line,
                column: 0,
                message: e.to_string(),
            })?;
            let w = *width.get_or_insert(rec.len());
            if rec.len() != w {
                return Err(Error::Ragged {
                    row: line,
                    expected: w,
                    found: rec.len(),
                });
            }
            let row: Vec<String> = rec.iter().map(str::to_owned).collect();
            if header && names.is_none() {
                names = Some(row);
            } else {
                fields.push(row);
            }
        }
        if fields.is_empty() {
            return Err(Error::EmptyData);
        }
        let n = width.unwrap_or(0);
        let names = names.unwrap_or_else(|| default_names(n));

        let header_rows = usize::from(header);
        let mut arities = vec![2usize; n];
        let mut labels: Vec<Option<Vec<String>>> = vec![None; n];
        let mut data = vec![0u32; fields.len() * n];
        for a in 0..n {
            let mut numeric = true;
            for (r, row) in fields.iter().enumerate() {
                let f = &row[a];
                let err = |message: String| Error::Parse {
                    row: r + 1 + header_rows,
                    column: a + 1,
                    message,
                };
                if f.is_empty() {
                    return Err(err("missing value".into()));
                }
                match f.parse::<u64>() {
                    Ok(code) if code > MAX_CODE as u64 => {
                        return Err(err(format!("code {code} exceeds {MAX_CODE}")))
                    }
                    Ok(_) => {}
                    Err(_) if f.parse::<f64>().is_ok() => {
                        return Err(err(format!("{f:?} is not a non-negative integer code")))
                    }
                    Err(_) => numeric = false,
                }
            }
            if numeric {
                let mut max = 0;
                for (r, row) in fields.iter().enumerate() {
                    let code = row[a].parse::<u32>().expect("checked above");
                    max = max.max(code);
                    data[r * n + a] = code;
                }
                arities[a] = (max as usize + 1).max(2);
            } else {
                let mut index: HashMap<&str, u32> = HashMap::new();
                let mut order: Vec<String> = Vec::new();
                for (r, row) in fields.iter().enumerate() {
                    let next = order.len() as u32;
                    let code = *index.entry(row[a].as_str()).or_insert_with(|| {
                        order.push(row[a].clone());
                        next
                    });
                    if code > MAX_CODE {
                        return Err(Error::Parse {
                            row: r + 1 + header_rows,
                            column: a + 1,
                            message: "too many distinct labels".into(),
                        });
                    }
                    data[r * n + a] = code;
                }
                arities[a] = order.len().max(2);
                labels[a] = Some(order);
            }
        }

        let labels = if labels.iter().any(Option::is_some) {
            labels
        } else {
            Vec::new()
        };
        let schema = VariableSchema {
            names,
            arities,
            labels,
        };
        schema.validate()?;
        Ok(Dataset { schema, data })
    }

    /// Writes the dataset with a header line, rendering categorical labels.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(self.schema.names()).map_err(csv_err)?;
        for row in self.rows() {
            let rendered: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(a, &c)| self.schema.render(a, c))
                .collect();
            w.write_record(&rendered).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(File::create(path)?))
    }
}

/// A partial assignment `x_W`: sorted variable ids with aligned codes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Context {
    vars: Vec<usize>,
    values: Vec<u32>,
}

impl Context {
    pub fn new(vars: Vec<usize>, values: Vec<u32>) -> Result<Self> {
        if vars.len() != values.len() {
            return Err(Error::Context(format!(
                "{} variables but {} values",
                vars.len(),
                values.len()
            )));
        }
        if vars.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Context(
                "variables must be strictly increasing".into(),
            ));
        }
        Ok(Context { vars, values })
    }

    pub fn empty() -> Self {
        Context::default()
    }

    /// A canonical assignment over all of `V`.
    pub fn full(values: &[u32]) -> Self {
        Context {
            vars: (0..values.len()).collect(),
            values: values.to_vec(),
        }
    }

    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.vars.iter().copied().zip(self.values.iter().copied())
    }

    pub fn get(&self, var: usize) -> Option<u32> {
        self.vars.binary_search(&var).ok().map(|i| self.values[i])
    }

    pub fn contains(&self, var: usize) -> bool {
        self.vars.binary_search(&var).is_ok()
    }

    /// Copy of this context with `var = value` added (or overwritten).
    pub fn with(&self, var: usize, value: u32) -> Context {
        let mut out = self.clone();
        match out.vars.binary_search(&var) {
            Ok(i) => out.values[i] = value,
            Err(i) => {
                out.vars.insert(i, var);
                out.values.insert(i, value);
            }
        }
        out
    }

    /// Projection onto the variables of `vars` that this context assigns.
    pub fn restrict<I: IntoIterator<Item = usize>>(&self, vars: I) -> Context {
        let mut picked: Vec<usize> = vars.into_iter().filter(|&v| self.contains(v)).collect();
        picked.sort_unstable();
        picked.dedup();
        let values = picked
            .iter()
            .map(|&v| self.get(v).expect("filtered"))
            .collect();
        Context {
            vars: picked,
            values,
        }
    }

    /// Whether every pair of `self` also appears in `other`.
    pub fn is_subassignment_of(&self, other: &Context) -> bool {
        self.iter().all(|(v, x)| other.get(v) == Some(x))
    }

    pub fn matches(&self, row: &[u32]) -> bool {
        self.iter().all(|(v, x)| row[v] == x)
    }

    pub fn validate(&self, schema: &VariableSchema) -> Result<()> {
        for (v, x) in self.iter() {
            if v >= schema.len() {
                return Err(Error::Context(format!(
                    "variable {v} outside schema of {} variables",
                    schema.len()
                )));
            }
            if x as usize >= schema.arity(v) {
                return Err(Error::Context(format!(
                    "value {x} out of range for variable {v} of arity {}",
                    schema.arity(v)
                )));
            }
        }
        Ok(())
    }
}

/// Distinct rows in first-appearance order with their multiplicities.
pub fn unique_rows(d: &Dataset) -> Result<Vec<(Context, usize)>> {
    if d.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut index: HashMap<&[u32], usize> = HashMap::new();
    let mut out: Vec<(Context, usize)> = Vec::new();
    for row in d.rows() {
        match index.get(row) {
            Some(&i) => out[i].1 += 1,
            None => {
                index.insert(row, out.len());
                out.push((Context::full(row), 1));
            }
        }
    }
    Ok(out)
}
