//! Downloads the public datasets and normalizes them to CSV.

use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

/// How a raw download is turned into the CSV the configs expect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawFormat {
    /// R-datasets CSV export whose first column holds row names.
    RCsv,
    /// Whitespace-separated UCI file without a header row.
    Whitespace(&'static [&'static str]),
}

#[derive(Debug, Clone, Copy)]
pub struct Source {
    pub name: &'static str,
    pub file: &'static str,
    pub url: &'static str,
    pub format: RawFormat,
    pub description: &'static str,
}

const GERMAN_COLUMNS: &[&str] = &[
    "checking_status",
    "duration",
    "credit_history",
    "purpose",
    "credit_amount",
    "savings",
    "employment",
    "installment_rate",
    "personal_status",
    "other_parties",
    "residence_since",
    "property_magnitude",
    "age",
    "other_payment_plans",
    "housing",
    "existing_credits",
    "job",
    "num_dependents",
    "telephone",
    "foreign_worker",
    "class",
];

pub const SOURCES: &[Source] = &[
    Source {
        name: "carseats",
        file: "carseats.csv",
        url: "https://vincentarelbundock.github.io/Rdatasets/csv/ISLR/Carseats.csv",
        format: RawFormat::RCsv,
        description: "child car seat sales in 400 stores (ISLR::Carseats)",
    },
    Source {
        name: "caravan",
        file: "caravan.csv",
        url: "https://vincentarelbundock.github.io/Rdatasets/csv/ISLR/Caravan.csv",
        format: RawFormat::RCsv,
        description: "caravan insurance purchases, 5822 customers (ISLR::Caravan)",
    },
    Source {
        name: "german",
        file: "german.csv",
        url: "https://archive.ics.uci.edu/ml/machine-learning-databases/statlog/german/german.data",
        format: RawFormat::Whitespace(GERMAN_COLUMNS),
        description: "Statlog German credit data, 1000 applicants (UCI)",
    },
    Source {
        name: "cps1985",
        file: "cps1985.csv",
        url: "https://vincentarelbundock.github.io/Rdatasets/csv/AER/CPS1985.csv",
        format: RawFormat::RCsv,
        description: "1985 Current Population Survey wages (AER::CPS1985)",
    },
    Source {
        name: "boston",
        file: "boston.csv",
        url: "https://vincentarelbundock.github.io/Rdatasets/csv/MASS/Boston.csv",
        format: RawFormat::RCsv,
        description: "Boston housing values (MASS::Boston)",
    },
];

pub fn source(name: &str) -> Option<&'static Source> {
    SOURCES.iter().find(|s| s.name.eq_ignore_ascii_case(name))
}

/// Data directory: `$TWOCULTURES_DATA_DIR`, else `./data`.
pub fn data_dir() -> PathBuf {
    std::env::var_os("TWOCULTURES_DATA_DIR").map_or_else(|| PathBuf::from("data"), PathBuf::from)
}

/// Converts a raw download into CSV text with a header row.
pub fn normalize(raw: &str, format: RawFormat) -> Result<String, CliError> {
    match format {
        RawFormat::RCsv => {
            let mut lines = raw.lines();
            let header = lines.next().ok_or_else(|| CliError::Io("empty download".into()))?;
            // older exports leave the row-name column unnamed
            let header = if header.starts_with("\"\",") {
                format!("\"rownames\",{}", &header[3..])
            } else if header.starts_with(',') {
                format!("rownames{header}")
            } else {
                header.to_string()
            };
            let mut out = header;
            out.push('\n');
            for line in lines.filter(|l| !l.trim().is_empty()) {
                out.push_str(line.trim_end_matches('\r'));
                out.push('\n');
            }
            Ok(out)
        }
        RawFormat::Whitespace(columns) => {
            let mut out = columns.join(",");
            out.push('\n');
            for (i, line) in raw.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let fields: Vec<&str> = line.split_whitespace().collect();
                if fields.len() != columns.len() {
                    return Err(CliError::Io(format!(
                        "line {}: expected {} fields, found {}",
                        i + 1,
                        columns.len(),
                        fields.len()
                    )));
                }
                out.push_str(&fields.join(","));
                out.push('\n');
            }
            Ok(out)
        }
    }
}

fn download(url: &str) -> Result<String, CliError> {
    let mut resp = ureq::get(url).call().map_err(|e| CliError::Io(format!("download of {url} failed: {e}")))?;
    resp.body_mut()
        .with_config()
        .limit(64 << 20)
        .read_to_string()
        .map_err(|e| CliError::Io(format!("download of {url} failed: {e}")))
}

/// Fetches one dataset (from its public URL, or from a local copy of the
/// raw file) into `data_dir`, returning the written path.
pub fn fetch(name: &str, from: Option<&Path>, data_dir: &Path) -> Result<PathBuf, CliError> {
    let src = source(name).ok_or_else(|| {
        let known: Vec<&str> = SOURCES.iter().map(|s| s.name).collect();
        CliError::Usage(format!("unknown dataset `{name}`; known: {}", known.join(", ")))
    })?;
    let raw = match from {
        Some(p) => fs::read_to_string(p).map_err(|e| CliError::Io(format!("cannot read {}: {e}", p.display())))?,
        None => download(src.url)?,
    };
    let csv = normalize(&raw, src.format)?;
    fs::create_dir_all(data_dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", data_dir.display())))?;
    let out = data_dir.join(src.file);
    fs::write(&out, csv).map_err(|e| CliError::Io(format!("cannot write {}: {e}", out.display())))?;
    Ok(out)
}

/// Instructions printed when a configured dataset is missing.
pub fn instructions(dataset: &str, path: &Path) -> String {
    let mut msg = format!("dataset file {} not found.\n", path.display());
    match source(dataset) {
        Some(s) => {
            msg.push_str(&format!(
                "`{}` is {}; it is not bundled. Fetch it with\n    twocultures fetch {}\n\
                 or, from a local copy of {},\n    twocultures fetch {} --from <file>\n",
                s.name, s.description, s.name, s.url, s.name
            ));
        }
        None => msg.push_str("check the `dataset` section of the config.\n"),
    }
    msg.push_str("Files are written to $TWOCULTURES_DATA_DIR (default ./data).");
    msg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r_csv_header_is_named() {
        let raw = "\"\",\"a\",\"b\"\n\"1\",2,x\n";
        assert_eq!(normalize(raw, RawFormat::RCsv).unwrap(), "\"rownames\",\"a\",\"b\"\n\"1\",2,x\n");
        let named = "rownames,a\n1,2\n";
        assert_eq!(normalize(named, RawFormat::RCsv).unwrap(), named);
    }

    #[test]
    fn whitespace_gets_header() {
        let cols: &'static [&'static str] = &["a", "b"];
        assert_eq!(normalize("1 x\n2  y\n\n", RawFormat::Whitespace(cols)).unwrap(), "a,b\n1,x\n2,y\n");
        assert!(normalize("1 2 3\n", RawFormat::Whitespace(cols)).is_err());
    }

    #[test]
    fn local_fetch_writes_csv() {
        let dir = tempfile::tempdir().unwrap();
        let raw = dir.path().join("raw.csv");
        fs::write(&raw, "\"\",\"medv\"\n\"1\",24\n").unwrap();
        let out = fetch("boston", Some(&raw), dir.path()).unwrap();
        assert_eq!(out, dir.path().join("boston.csv"));
        assert!(fetch("nope", Some(&raw), dir.path()).is_err());
    }
}
