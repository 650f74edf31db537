//! Unit-level datasets, CSV readers/writers and design-matrix construction.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::count::FrequencyTable;
use crate::error::{Error, Result};

pub const INTERCEPT: &str = "(Intercept)";

#[derive(Debug, Clone, PartialEq)]
pub enum CovariateKind {
    Continuous,
    /// Dummy coded against `levels[reference]`.
    Categorical { levels: Vec<String>, reference: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Covariate {
    pub name: String,
    pub kind: CovariateKind,
}

impl Covariate {
    pub fn continuous(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: CovariateKind::Continuous,
        }
    }

    /// A categorical covariate. The reference defaults to the last level.
    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        levels: impl IntoIterator<Item = S>,
        reference: Option<&str>,
    ) -> Result<Self> {
        let name = name.into();
        let levels: Vec<String> = levels.into_iter().map(Into::into).collect();
        if levels.is_empty() {
            return Err(Error::Schema(format!("categorical '{name}' has no levels")));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = levels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(Error::Schema(format!("categorical '{name}' repeats level '{dup}'")));
        }
        let reference = match reference {
            None => levels.len() - 1,
            Some(r) => levels.iter().position(|l| l == r).ok_or_else(|| {
                Error::Schema(format!("reference '{r}' is not a level of '{name}'"))
            })?,
        };
        Ok(Self {
            name,
            kind: CovariateKind::Categorical { levels, reference },
        })
    }
}

/// Ordered covariate declarations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schema {
    covariates: Vec<Covariate>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaFile {
    #[serde(default)]
    covariate: Vec<CovariateDecl>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CovariateDecl {
    name: String,
    kind: String,
    #[serde(default)]
    levels: Vec<String>,
    reference: Option<String>,
}

impl Schema {
    pub fn new(covariates: Vec<Covariate>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &covariates {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("covariate '{}' declared twice", c.name)));
            }
        }
        Ok(Self { covariates })
    }

    /// Parse a TOML schema made of `[[covariate]]` tables with `name`, `kind`
    /// (`continuous` or `categorical`), and for categoricals `levels` and an
    /// optional `reference`.
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: SchemaFile =
            toml::from_str(text).map_err(|e| Error::Schema(e.message().to_string()))?;
        let covariates = file
            .covariate
            .into_iter()
            .map(|d| match d.kind.as_str() {
                "continuous" => Ok(Covariate::continuous(d.name)),
                "categorical" => Covariate::categorical(d.name, d.levels, d.reference.as_deref()),
                other => Err(Error::Schema(format!(
                    "covariate '{}': unknown kind '{other}'",
                    d.name
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(covariates)
    }

    pub fn read_toml(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn covariates(&self) -> &[Covariate] {
        &self.covariates
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.covariates.iter().position(|c| c.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Covariate> {
        self.position(name).map(|i| &self.covariates[i])
    }

    pub fn len(&self) -> usize {
        self.covariates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covariates.is_empty()
    }

    /// Keep only the named covariates, in schema order.
    pub fn restrict(&self, names: &[String]) -> Result<Self> {
        for n in names {
            if self.position(n).is_none() {
                return Err(Error::Schema(format!("unknown covariate '{n}'")));
            }
        }
        Ok(Self {
            covariates: self
                .covariates
                .iter()
                .filter(|c| names.contains(&c.name))
                .cloned()
                .collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovariateValue {
    Numeric(f64),
    /// Index into the declared levels.
    Level(usize),
}

/// One listed individual: the truncated count and its covariates, aligned
/// with the dataset schema.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedUnit {
    pub count: u64,
    pub covariates: Vec<CovariateValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    units: Vec<ObservedUnit>,
}

impl Dataset {
    pub fn new(schema: Schema, units: Vec<ObservedUnit>) -> Result<Self> {
        for (i, u) in units.iter().enumerate() {
            if u.count < 1 {
                return Err(Error::validation(format!("unit {i}: count must be >= 1")));
            }
            if u.covariates.len() != schema.len() {
                return Err(Error::validation(format!(
                    "unit {i}: {} covariate values for {} schema columns",
                    u.covariates.len(),
                    schema.len()
                )));
            }
            for (value, cov) in u.covariates.iter().zip(schema.covariates()) {
                let ok = match (value, &cov.kind) {
                    (CovariateValue::Numeric(x), CovariateKind::Continuous) => x.is_finite(),
                    (CovariateValue::Level(l), CovariateKind::Categorical { levels, .. }) => {
                        *l < levels.len()
                    }
                    _ => false,
                };
                if !ok {
                    return Err(Error::validation(format!(
                        "unit {i}: invalid value for '{}'",
                        cov.name
                    )));
                }
            }
        }
        Ok(Self { schema, units })
    }

    /// Covariate-free dataset, one unit per count.
    pub fn from_counts(counts: impl IntoIterator<Item = u64>) -> Result<Self> {
        let units = counts
            .into_iter()
            .map(|count| ObservedUnit {
                count,
                covariates: Vec::new(),
            })
            .collect();
        Self::new(Schema::default(), units)
    }

    pub fn from_table(table: &FrequencyTable) -> Result<Self> {
        Self::from_counts(table.to_counts())
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn units(&self) -> &[ObservedUnit] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn counts(&self) -> impl Iterator<Item = u64> + '_ {
        self.units.iter().map(|u| u.count)
    }

    pub fn frequency_table(&self) -> FrequencyTable {
        let counts: Vec<i64> = self.counts().map(|c| c as i64).collect();
        FrequencyTable::from_counts(&counts).expect("dataset counts are >= 1")
    }

    /// Units matching `keep`, same schema.
    pub fn filter(&self, keep: impl Fn(&ObservedUnit) -> bool) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            units: self.units.iter().filter(|u| keep(u)).cloned().collect(),
        }
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_count(field: &str, line: u64) -> Result<u64> {
    let c: i64 = field.trim().parse().map_err(|_| {
        Error::at_line(line, format!("count '{field}' is not an integer"))
    })?;
    if c < 1 {
        return Err(Error::at_line(line, format!("count {c} < 1 in zero-truncated data")));
    }
    Ok(c as u64)
}

/// Read one unit per row. Columns not named by `count_column` or the schema
/// are ignored.
pub fn read_individual_csv(
    path: impl AsRef<Path>,
    count_column: &str,
    schema: &Schema,
) -> Result<Dataset> {
    read_individual(open(path.as_ref())?, count_column, schema)
}

pub fn read_individual<R: Read>(reader: R, count_column: &str, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
    };
    let count_idx = column(count_column)?;
    let cov_idx = schema
        .covariates()
        .iter()
        .map(|c| column(&c.name))
        .collect::<Result<Vec<_>>>()?;

    let mut units = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let count = parse_count(&record[count_idx], line)?;
        let mut covariates = Vec::with_capacity(cov_idx.len());
        for (&idx, cov) in cov_idx.iter().zip(schema.covariates()) {
            let raw = record.get(idx).unwrap_or("").trim();
            if raw.is_empty() {
                return Err(Error::at_line(line, format!("blank value for '{}'", cov.name)));
            }
            let value = match &cov.kind {
                CovariateKind::Continuous => {
                    let x: f64 = raw.parse().map_err(|_| {
                        Error::at_line(line, format!("'{}' value '{raw}' is not numeric", cov.name))
                    })?;
                    if !x.is_finite() {
                        return Err(Error::at_line(line, format!("'{}' is not finite", cov.name)));
                    }
                    CovariateValue::Numeric(x)
                }
                CovariateKind::Categorical { levels, .. } => CovariateValue::Level(
                    levels.iter().position(|l| l == raw).ok_or_else(|| {
                        Error::at_line(line, format!("unknown level '{raw}' for '{}'", cov.name))
                    })?,
                ),
            };
            covariates.push(value);
        }
        units.push(ObservedUnit { count, covariates });
    }
    Dataset::new(schema.clone(), units)
}

pub fn write_individual_csv<W: Write>(dataset: &Dataset, count_column: &str, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec![count_column.to_string()];
    header.extend(dataset.schema().covariates().iter().map(|c| c.name.clone()));
    wtr.write_record(&header)?;
    for unit in dataset.units() {
        let mut row = vec![unit.count.to_string()];
        for (v, cov) in unit.covariates.iter().zip(dataset.schema().covariates()) {
            row.push(match (v, &cov.kind) {
                (CovariateValue::Numeric(x), _) => x.to_string(),
                (CovariateValue::Level(l), CovariateKind::Categorical { levels, .. }) => {
                    levels[*l].clone()
                }
                (CovariateValue::Level(l), CovariateKind::Continuous) => l.to_string(),
            });
        }
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// Read a `count,freq` file.
pub fn read_frequency_csv(path: impl AsRef<Path>) -> Result<FrequencyTable> {
    read_frequency(open(path.as_ref())?)
}

pub fn read_frequency<R: Read>(reader: R) -> Result<FrequencyTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?;
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    if names != ["count", "freq"] {
        return Err(Error::Schema(format!(
            "frequency file header must be 'count,freq', found '{}'",
            names.join(",")
        )));
    }
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let count = parse_count(&record[0], line)?;
        let freq: u64 = record[1].trim().parse().map_err(|_| {
            Error::at_line(line, format!("frequency '{}' is not a non-negative integer", &record[1]))
        })?;
        if !seen.insert(count) {
            return Err(Error::at_line(line, format!("duplicate count value {count}")));
        }
        pairs.push((count, freq));
    }
    FrequencyTable::from_frequencies(pairs)
}

pub fn write_frequency_csv<W: Write>(table: &FrequencyTable, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["count", "freq"])?;
    for (j, f) in table.iter() {
        wtr.write_record([j.to_string(), f.to_string()])?;
    }
    wtr.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// Which covariates enter the linear predictor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub intercept: bool,
    pub terms: Vec<String>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::intercept_only()
    }
}

impl ModelSpec {
    pub fn intercept_only() -> Self {
        Self {
            intercept: true,
            terms: Vec::new(),
        }
    }

    pub fn with_terms<S: Into<String>>(terms: impl IntoIterator<Item = S>) -> Self {
        Self {
            intercept: true,
            terms: terms.into_iter().map(Into::into).collect(),
        }
    }

    /// Parse a comma-separated term list; blank means intercept only.
    pub fn parse(list: &str) -> Self {
        Self::with_terms(
            list.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from),
        )
    }

    pub fn validate(&self, schema: &Schema) -> Result<()> {
        let mut seen = HashSet::new();
        for t in &self.terms {
            if schema.position(t).is_none() {
                return Err(Error::Usage(format!("term '{t}' is not a declared covariate")));
            }
            if !seen.insert(t) {
                return Err(Error::Usage(format!("term '{t}' listed twice")));
            }
        }
        if !self.intercept && self.terms.is_empty() {
            return Err(Error::Usage("model has no columns".into()));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        if self.terms.is_empty() {
            "Null".to_string()
        } else {
            self.terms.join(" + ")
        }
    }
}

/// Numeric design matrix, one row per dataset unit.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub matrix: DMatrix<f64>,
    pub columns: Vec<String>,
}

impl DesignMatrix {
    pub fn new(matrix: DMatrix<f64>, columns: Vec<String>) -> Result<Self> {
        if matrix.ncols() != columns.len() {
            return Err(Error::Usage(format!(
                "{} column names for {} columns",
                columns.len(),
                matrix.ncols()
            )));
        }
        Ok(Self { matrix, columns })
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn intercept_index(&self) -> Option<usize> {
        self.columns.iter().position(|c| c == INTERCEPT)
    }

    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        DesignMatrix {
            matrix: self.matrix.select_rows(rows),
            columns: self.columns.clone(),
        }
    }
}

/// Intercept first, then the model's covariates in schema order; categoricals
/// expand to one `name=level` dummy per non-reference level.
pub fn build_design(dataset: &Dataset, spec: &ModelSpec) -> Result<DesignMatrix> {
    spec.validate(dataset.schema())?;
    let mut columns = Vec::new();
    // (schema position, Some(level) for a dummy)
    let mut sources: Vec<Option<(usize, Option<usize>)>> = Vec::new();
    if spec.intercept {
        columns.push(INTERCEPT.to_string());
        sources.push(None);
    }
    for (pos, cov) in dataset.schema().covariates().iter().enumerate() {
        if !spec.terms.contains(&cov.name) {
            continue;
        }
        match &cov.kind {
            CovariateKind::Continuous => {
                columns.push(cov.name.clone());
                sources.push(Some((pos, None)));
            }
            CovariateKind::Categorical { levels, reference } => {
                for (l, level) in levels.iter().enumerate() {
                    if l != *reference {
                        columns.push(format!("{}={level}", cov.name));
                        sources.push(Some((pos, Some(l))));
                    }
                }
            }
        }
    }
    let units = dataset.units();
    let matrix = DMatrix::from_fn(units.len(), columns.len(), |i, j| match sources[j] {
        None => 1.0,
        Some((pos, level)) => match (units[i].covariates[pos], level) {
            (CovariateValue::Numeric(x), _) => x,
            (CovariateValue::Level(have), Some(want)) => f64::from(u8::from(have == want)),
            (CovariateValue::Level(_), None) => unreachable!("categorical without level"),
        },
    });
    DesignMatrix::new(matrix, columns)
}
