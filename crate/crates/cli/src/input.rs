//! Dataset sources and the preparation protocol shared by every subcommand:
//! load, add noise to the whole dataset, split, then optionally z-score with
//! training statistics.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use msfs_core::data::{add_gaussian_noise, load_arff, load_csv, split};
use msfs_core::{CsvOptions, Dataset, SplitMode, SplitSpec, Standardizer};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Arff,
}

/// Either the number of trailing label columns (CSV) or a Mulan label-spec
/// XML file (ARFF).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelSource {
    Count(usize),
    Spec(PathBuf),
}

impl FromStr for LabelSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() {
            return Err("empty label source".into());
        }
        Ok(match s.parse::<usize>() {
            Ok(n) => LabelSource::Count(n),
            Err(_) => LabelSource::Spec(PathBuf::from(s)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    pub path: PathBuf,
    /// A separate test file; the split is then train = `path`, test = this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    pub labels: LabelSource,
    #[serde(default)]
    pub header: bool,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl DataSource {
    pub fn format(&self) -> Format {
        self.format
            .unwrap_or_else(|| match self.path.extension().and_then(|e| e.to_str()) {
                Some(ext) if ext.eq_ignore_ascii_case("arff") => Format::Arff,
                _ => Format::Csv,
            })
    }

    /// Paths made absolute relative to `base`.
    pub fn resolved(&self, base: &Path) -> Self {
        let mut out = self.clone();
        out.path = resolve(base, &self.path);
        out.test_path = self.test_path.as_deref().map(|p| resolve(base, p));
        if let LabelSource::Spec(p) = &self.labels {
            out.labels = LabelSource::Spec(resolve(base, p));
        }
        out
    }

    fn load_one(&self, path: &Path) -> CliResult<Dataset> {
        match (self.format(), &self.labels) {
            (Format::Csv, LabelSource::Count(m)) => Ok(load_csv(
                path,
                CsvOptions::new(*m).with_header(self.header),
            )?),
            (Format::Arff, LabelSource::Spec(xml)) => Ok(load_arff(path, xml)?),
            (Format::Csv, LabelSource::Spec(_)) => Err(CliError::usage(
                "CSV input needs --labels <count of trailing label columns>",
            )),
            (Format::Arff, LabelSource::Count(_)) => Err(CliError::usage(
                "ARFF input needs --labels <label spec XML>",
            )),
        }
    }

    /// The whole dataset, plus the training row count when a separate test
    /// file was given (training rows come first).
    pub fn load(&self) -> CliResult<(Dataset, Option<usize>)> {
        let train = self.load_one(&self.path)?;
        match &self.test_path {
            None => Ok((train, None)),
            Some(test_path) => {
                let test = self.load_one(test_path)?;
                let n = train.n_instances();
                Ok((train.concat(&test)?, Some(n)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareOptions {
    pub split: Option<SplitSpec>,
    pub noise_ratio: f64,
    pub noise_seed: u64,
    pub standardize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Option<Dataset>,
}

/// Resolve the split from explicit counts and/or a separate test file.
pub fn resolve_split(
    counts: Option<(usize, usize)>,
    mode: SplitMode,
    seed: u64,
    full: &Dataset,
    file_train_rows: Option<usize>,
) -> CliResult<Option<SplitSpec>> {
    match (counts, file_train_rows) {
        (Some(_), Some(_)) => Err(CliError::usage(
            "give either a separate test file or --train/--test counts, not both",
        )),
        (Some((train, test)), None) => Ok(Some(SplitSpec {
            train_count: train,
            test_count: test,
            seed,
            mode,
        })),
        (None, Some(train)) => Ok(Some(SplitSpec::first_n(train, full.n_instances() - train))),
        (None, None) => Ok(None),
    }
}

pub fn prepare(full: &Dataset, opts: &PrepareOptions) -> CliResult<Prepared> {
    let noisy = add_gaussian_noise(full, opts.noise_ratio, opts.noise_seed)?;
    let (train, test) = match &opts.split {
        Some(spec) => {
            let (a, b) = split(&noisy, spec)?;
            (a, Some(b))
        }
        None => (noisy, None),
    };
    if !opts.standardize {
        return Ok(Prepared { train, test });
    }
    let z = Standardizer::fit(train.features());
    let test = test.map(|t| z.transform(&t)).transpose()?;
    Ok(Prepared {
        train: z.transform(&train)?,
        test,
    })
}
