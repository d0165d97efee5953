//! Plain-text artifacts. Every file starts with `# config=<hash>` so files
//! from different runs cannot be combined silently.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ftcs_core::sparse::CsrMatrix;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const CONFIG_FILE: &str = "config.toml";

pub struct RunDir {
    pub path: PathBuf,
    pub config: RunConfig,
    pub hash: String,
}

impl RunDir {
    /// Creates the directory and records the configuration.
    pub fn create(path: &Path, config: &RunConfig) -> CliResult<Self> {
        std::fs::create_dir_all(path)
            .map_err(|e| CliError::io(format!("creating {}", path.display()), e))?;
        let mut stored = config.clone();
        stored.output = Default::default();
        let dir = Self {
            path: path.to_path_buf(),
            config: stored,
            hash: config.hash(),
        };
        let text = dir.config.to_toml();
        dir.write(CONFIG_FILE, &text)?;
        Ok(dir)
    }

    pub fn open(path: &Path) -> CliResult<Self> {
        let file = path.join(CONFIG_FILE);
        if !file.exists() {
            return Err(CliError::Usage(format!(
                "{} is not a run directory (no {CONFIG_FILE}); run `ftcs build` first",
                path.display()
            )));
        }
        let text = std::fs::read_to_string(&file)
            .map_err(|e| CliError::io(format!("reading {}", file.display()), e))?;
        let body = strip_header(&text).1;
        let config = RunConfig::from_toml(body)?;
        let hash = config.hash();
        let dir = Self {
            path: path.to_path_buf(),
            config,
            hash,
        };
        dir.check_header(CONFIG_FILE, &text)?;
        Ok(dir)
    }

    pub fn exists(&self, name: &str) -> bool {
        self.path.join(name).exists()
    }

    /// Writes `body` under the hash header.
    pub fn write(&self, name: &str, body: &str) -> CliResult<()> {
        let file = self.path.join(name);
        let text = format!("# config={}\n{body}", self.hash);
        std::fs::write(&file, text)
            .map_err(|e| CliError::io(format!("writing {}", file.display()), e))
    }

    /// Writes a file that carries no header (SVG plots).
    pub fn write_raw(&self, name: &str, body: &str) -> CliResult<()> {
        let file = self.path.join(name);
        std::fs::write(&file, body)
            .map_err(|e| CliError::io(format!("writing {}", file.display()), e))
    }

    /// Reads an artifact, rejecting files written by a different configuration.
    pub fn read(&self, name: &str) -> CliResult<String> {
        let file = self.path.join(name);
        if !file.exists() {
            return Err(CliError::Usage(format!(
                "missing artifact {}",
                file.display()
            )));
        }
        let text = std::fs::read_to_string(&file)
            .map_err(|e| CliError::io(format!("reading {}", file.display()), e))?;
        self.check_header(name, &text)?;
        Ok(strip_header(&text).1.to_string())
    }

    fn check_header(&self, name: &str, text: &str) -> CliResult<()> {
        match strip_header(text).0 {
            Some(h) if h == self.hash => Ok(()),
            Some(h) => Err(CliError::Invariant(format!(
                "mixed-run artifact: {name} has config={h} but the run has config={}",
                self.hash
            ))),
            None if name == CONFIG_FILE => Ok(()),
            None => Err(CliError::Invariant(format!("{name} lacks a config header"))),
        }
    }
}

fn strip_header(text: &str) -> (Option<&str>, &str) {
    match text.strip_prefix("# config=") {
        Some(rest) => {
            let end = rest.find('\n').unwrap_or(rest.len());
            (Some(rest[..end].trim()), rest.get(end + 1..).unwrap_or(""))
        }
        None => (None, text),
    }
}

fn data_lines(body: &str) -> impl Iterator<Item = (usize, &str)> {
    body.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn bad(name: &str, line: usize, what: &str) -> CliError {
    CliError::Usage(format!("{name}:{}: {what}", line + 2))
}

/// `rows cols nnz` followed by `row col value` lines, zero-based.
pub fn format_matrix(m: &CsrMatrix) -> String {
    let mut s = String::with_capacity(m.nnz() * 40);
    writeln!(s, "{} {} {}", m.nrows(), m.ncols(), m.nnz()).unwrap();
    for (r, c, v) in m.triplets() {
        writeln!(s, "{r} {c} {v:.16e}").unwrap();
    }
    s
}

pub fn parse_matrix(name: &str, body: &str) -> CliResult<CsrMatrix> {
    let mut lines = data_lines(body);
    let (l0, head) = lines
        .next()
        .ok_or_else(|| bad(name, 0, "empty matrix file"))?;
    let dims: Vec<usize> = head
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|_| bad(name, l0, "bad header"))?;
    let [rows, cols, nnz] = dims[..] else {
        return Err(bad(name, l0, "header must be `rows cols nnz`"));
    };
    let mut trip = Vec::with_capacity(nnz);
    for (ln, line) in lines {
        let mut it = line.split_whitespace();
        let (Some(r), Some(c), Some(v), None) = (it.next(), it.next(), it.next(), it.next()) else {
            return Err(bad(name, ln, "expected `row col value`"));
        };
        let r: usize = r.parse().map_err(|_| bad(name, ln, "bad row"))?;
        let c: usize = c.parse().map_err(|_| bad(name, ln, "bad column"))?;
        let v: f64 = v.parse().map_err(|_| bad(name, ln, "bad value"))?;
        trip.push((r, c, v));
    }
    if trip.len() != nnz {
        return Err(CliError::Usage(format!(
            "{name}: header promises {nnz} entries, found {}",
            trip.len()
        )));
    }
    Ok(CsrMatrix::from_triplets(rows, cols, trip)?)
}

pub fn format_vector(v: &[f64]) -> String {
    let mut s = String::with_capacity(v.len() * 24);
    for x in v {
        writeln!(s, "{x:.16e}").unwrap();
    }
    s
}

pub fn parse_vector(name: &str, body: &str) -> CliResult<Vec<f64>> {
    data_lines(body)
        .map(|(ln, l)| l.trim().parse().map_err(|_| bad(name, ln, "bad value")))
        .collect()
}

/// `box_index,value` table.
pub fn format_indexed(v: &[f64]) -> String {
    let mut s = String::from("box_index,value\n");
    for (i, x) in v.iter().enumerate() {
        writeln!(s, "{i},{x:.16e}").unwrap();
    }
    s
}

pub fn parse_indexed(name: &str, body: &str) -> CliResult<Vec<f64>> {
    let mut out = Vec::new();
    for (ln, line) in data_lines(body).skip(1) {
        let (i, v) = line
            .split_once(',')
            .ok_or_else(|| bad(name, ln, "expected `box_index,value`"))?;
        let i: usize = i.parse().map_err(|_| bad(name, ln, "bad index"))?;
        if i != out.len() {
            return Err(bad(name, ln, "indices must be consecutive"));
        }
        out.push(v.trim().parse().map_err(|_| bad(name, ln, "bad value"))?);
    }
    Ok(out)
}

/// `box_index,label` table.
pub fn format_labels(labels: &[u8]) -> String {
    let mut s = String::from("box_index,label\n");
    for (i, l) in labels.iter().enumerate() {
        writeln!(s, "{i},{l}").unwrap();
    }
    s
}

pub fn parse_labels(name: &str, body: &str) -> CliResult<Vec<u8>> {
    parse_indexed(name, body)?
        .into_iter()
        .map(|v| {
            if v == 1.0 || v == 2.0 {
                Ok(v as u8)
            } else {
                Err(CliError::Usage(format!("{name}: labels must be 1 or 2")))
            }
        })
        .collect()
}

/// `key,value` summary rows.
pub fn format_summary(rows: &[(&str, String)]) -> String {
    let mut s = String::from("key,value\n");
    for (k, v) in rows {
        writeln!(s, "{k},{v}").unwrap();
    }
    s
}

pub fn parse_summary(body: &str) -> Vec<(String, String)> {
    data_lines(body)
        .skip(1)
        .filter_map(|(_, l)| {
            l.split_once(',')
                .map(|(k, v)| (k.to_string(), v.to_string()))
        })
        .collect()
}
