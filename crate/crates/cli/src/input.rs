use std::path::Path;

use popsize::{
    read_frequency_csv, read_individual_csv, Covariate, Dataset, Error, FrequencyTable, Result,
    Schema,
};

/// `name=levels[:reference]`; levels are split on `|` when present, else on `,`.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalArg {
    pub name: String,
    pub levels: Vec<String>,
    pub reference: Option<String>,
}

impl std::str::FromStr for CategoricalArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (name, rest) = s
            .split_once('=')
            .ok_or_else(|| format!("'{s}' is not name=levels[:reference]"))?;
        let (levels, reference) = match rest.rsplit_once(':') {
            Some((levels, reference)) => (levels, Some(reference.trim().to_string())),
            None => (rest, None),
        };
        let sep = if levels.contains('|') { '|' } else { ',' };
        let levels: Vec<String> = levels
            .split(sep)
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty())
            .collect();
        if name.trim().is_empty() || levels.is_empty() {
            return Err(format!("'{s}' needs a name and at least one level"));
        }
        Ok(Self {
            name: name.trim().to_string(),
            levels,
            reference: reference.filter(|r| !r.is_empty()),
        })
    }
}

/// Schema over exactly `terms`: declarations come from the schema file, then
/// `--categorical` flags; anything undeclared is continuous.
pub fn build_schema(
    terms: &[String],
    categorical: &[CategoricalArg],
    schema_file: Option<&Path>,
) -> Result<Schema> {
    let declared = match schema_file {
        Some(path) => Schema::read_toml(path)?,
        None => Schema::default(),
    };
    for c in categorical {
        if !terms.contains(&c.name) {
            return Err(Error::Usage(format!(
                "--categorical {} names a covariate that no model uses",
                c.name
            )));
        }
    }
    let mut covariates = Vec::with_capacity(terms.len());
    for term in terms {
        let covariate = match categorical.iter().find(|c| &c.name == term) {
            Some(c) => Covariate::categorical(
                c.name.clone(),
                c.levels.clone(),
                c.reference.as_deref(),
            )?,
            None => declared
                .get(term)
                .cloned()
                .unwrap_or_else(|| Covariate::continuous(term.clone())),
        };
        covariates.push(covariate);
    }
    Schema::new(covariates)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Individual,
    Frequency,
}

pub enum Loaded {
    Table(FrequencyTable),
    Units(Dataset),
}

impl Loaded {
    pub fn table(&self) -> FrequencyTable {
        match self {
            Loaded::Table(t) => t.clone(),
            Loaded::Units(d) => d.frequency_table(),
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            Loaded::Table(t) => t.iter().count(),
            Loaded::Units(d) => d.len(),
        }
    }
}

pub fn load(path: &Path, format: DataFormat, count_col: &str, schema: &Schema) -> Result<Loaded> {
    match format {
        DataFormat::Frequency => read_frequency_csv(path).map(Loaded::Table),
        DataFormat::Individual => read_individual_csv(path, count_col, schema).map(Loaded::Units),
    }
}
