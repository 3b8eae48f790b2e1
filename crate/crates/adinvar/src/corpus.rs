//! Program corpus loading: `.sac` files with optional `.box` sidecars.
//!
//! A corpus directory holds one program per `.sac` file. An optional sidecar
//! with the same stem and extension `.box` declares a safe input box, one
//! line per input: `<id> <lo> <hi>`. Primal points for randomized checks are
//! drawn inside the box, which must keep every elemental in its domain (and
//! leave margin for finite-difference perturbations). Inputs without a
//! declared interval default to [0.6, 1.4].

use std::path::{Path, PathBuf};

use rand::Rng;
use thiserror::Error;

use crate::program::{parse_program, ParseError, Program};

/// Fallback per-input interval; keeps `log`, `sqrt` and `div` comfortably in
/// domain for corpus-style programs.
pub const DEFAULT_BOX: (f64, f64) = (0.6, 1.4);

/// Axis-aligned input box a program is known to be smooth on.
#[derive(Debug, Clone, PartialEq)]
pub struct SafeBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SafeBox {
    pub fn default_for(n_inputs: usize) -> Self {
        SafeBox {
            lo: vec![DEFAULT_BOX.0; n_inputs],
            hi: vec![DEFAULT_BOX.1; n_inputs],
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&a, &b)| rng.random_range(a..=b))
            .collect()
    }
}

/// A corpus program together with its safe input box.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub program: Program,
    pub safe_box: SafeBox,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
    #[error("{path}:{line}: expected '<id> <lo> <hi>'")]
    BoxSyntax { path: PathBuf, line: usize },
    #[error("{path}:{line}: {id} is not an input of the program")]
    BoxUnknownInput {
        path: PathBuf,
        line: usize,
        id: String,
    },
    #[error("{path}:{line}: empty interval for {id}")]
    BoxEmptyInterval {
        path: PathBuf,
        line: usize,
        id: String,
    },
    #[error("no .sac files found under {path}")]
    EmptyCorpus { path: PathBuf },
}

fn read(path: &Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_box(path: &Path, text: &str, program: &Program) -> Result<SafeBox, CorpusError> {
    let mut sb = SafeBox::default_for(program.n_inputs());
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let (id, lo, hi) = match tokens.as_slice() {
            [id, lo, hi] => match (lo.parse::<f64>(), hi.parse::<f64>()) {
                (Ok(lo), Ok(hi)) => (*id, lo, hi),
                _ => {
                    return Err(CorpusError::BoxSyntax {
                        path: path.to_path_buf(),
                        line: line_no,
                    })
                }
            },
            _ => {
                return Err(CorpusError::BoxSyntax {
                    path: path.to_path_buf(),
                    line: line_no,
                })
            }
        };
        let slot = program
            .input_vars
            .iter()
            .position(|v| v == id)
            .ok_or_else(|| CorpusError::BoxUnknownInput {
                path: path.to_path_buf(),
                line: line_no,
                id: id.to_string(),
            })?;
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(CorpusError::BoxEmptyInterval {
                path: path.to_path_buf(),
                line: line_no,
                id: id.to_string(),
            });
        }
        sb.lo[slot] = lo;
        sb.hi[slot] = hi;
    }
    Ok(sb)
}

/// Loads one `.sac` file (plus its `.box` sidecar, if present). The program
/// is named after the file stem.
pub fn load_program_file(path: &Path) -> Result<CorpusEntry, CorpusError> {
    let text = read(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "main".to_string());
    let program = parse_program(&text)
        .map_err(|source| CorpusError::Parse {
            path: path.to_path_buf(),
            source,
        })?
        .with_name(name);
    let box_path = path.with_extension("box");
    let safe_box = if box_path.exists() {
        parse_box(&box_path, &read(&box_path)?, &program)?
    } else {
        SafeBox::default_for(program.n_inputs())
    };
    Ok(CorpusEntry { program, safe_box })
}

/// Loads every `.sac` file in a directory (non-recursive), sorted by name.
pub fn load_corpus_dir(dir: &Path) -> Result<Vec<CorpusEntry>, CorpusError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|source| CorpusError::Io {
            path: dir.to_path_buf(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "sac").unwrap_or(false))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CorpusError::EmptyCorpus {
            path: dir.to_path_buf(),
        });
    }
    paths.iter().map(|p| load_program_file(p)).collect()
}

/// Loads a mix of `.sac` files and corpus directories, in argument order.
pub fn load_paths(paths: &[PathBuf]) -> Result<Vec<CorpusEntry>, CorpusError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            out.extend(load_corpus_dir(p)?);
        } else {
            out.push(load_program_file(p)?);
        }
    }
    Ok(out)
}
