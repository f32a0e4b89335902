//! Dataset ingestion: LIBSVM text parsing, label normalization, seeded
//! train/test splitting, optional row scaling, and a caching downloader for
//! the LIBSVM repository.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

/// Sparse design matrix (CSR) with +/-1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    n: usize,
    d: usize,
    indptr: Vec<usize>,
    /// 0-based column indices, strictly ascending within a row.
    indices: Vec<usize>,
    values: Vec<f64>,
    labels: Vec<f64>,
}

impl DesignMatrix {
    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.d
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Sparse entries of row `i` as parallel (indices, values) slices.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[lo..hi], &self.values[lo..hi])
    }

    /// `x_i . theta`.
    pub fn dot_row(&self, i: usize, theta: &DVector<f64>) -> f64 {
        let (idx, val) = self.row(i);
        idx.iter().zip(val).map(|(&j, &v)| v * theta[j]).sum()
    }

    /// `M^T x_i` for a `d x k` matrix, accumulated sparsely.
    pub fn mat_t_row(&self, i: usize, m: &DMatrix<f64>) -> DVector<f64> {
        let (idx, val) = self.row(i);
        let mut out = DVector::zeros(m.ncols());
        for (&j, &v) in idx.iter().zip(val) {
            out.axpy(v, &m.row(j).transpose(), 1.0);
        }
        out
    }

    /// Dense copy of row `i`.
    pub fn dense_row(&self, i: usize) -> DVector<f64> {
        let mut out = DVector::zeros(self.d);
        let (idx, val) = self.row(i);
        for (&j, &v) in idx.iter().zip(val) {
            out[j] = v;
        }
        out
    }

    /// Largest eigenvalue of `X^T X` by power iteration.
    pub fn xtx_lambda_max(&self, tol: f64, max_iters: usize) -> f64 {
        let mut v = DVector::from_element(self.d, 1.0 / (self.d as f64).sqrt());
        let mut lambda = 0.0_f64;
        for _ in 0..max_iters {
            // w = X^T (X v)
            let mut w: DVector<f64> = DVector::zeros(self.d);
            for i in 0..self.n {
                let xi_v = self.dot_row(i, &v);
                let (idx, val) = self.row(i);
                for (&j, &x) in idx.iter().zip(val) {
                    w[j] += x * xi_v;
                }
            }
            let new_lambda = w.norm();
            if new_lambda == 0.0 {
                return 0.0;
            }
            v = w / new_lambda;
            if (new_lambda - lambda).abs() <= tol * new_lambda.max(1.0) {
                return new_lambda;
            }
            lambda = new_lambda;
        }
        lambda
    }

    /// Serialize back to LIBSVM text (1-based indices).
    pub fn write_libsvm<W: Write>(&self, mut w: W) -> Result<()> {
        for i in 0..self.n {
            let label = self.labels[i];
            if label > 0.0 {
                write!(w, "+1")?;
            } else {
                write!(w, "-1")?;
            }
            let (idx, val) = self.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                write!(w, " {}:{}", j + 1, v)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Scale each row to 2-norm at most 1 (rows with norm <= 1 are untouched).
    pub fn scale_rows(&mut self) {
        for i in 0..self.n {
            let (lo, hi) = (self.indptr[i], self.indptr[i + 1]);
            let norm = self.values[lo..hi]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            if norm > 1.0 {
                for v in &mut self.values[lo..hi] {
                    *v /= norm;
                }
            }
        }
    }

    /// New matrix containing the listed rows, in the listed order.
    pub fn take_rows(&self, order: &[usize]) -> DesignMatrix {
        let mut indptr = Vec::with_capacity(order.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut labels = Vec::with_capacity(order.len());
        indptr.push(0);
        for &i in order {
            let (idx, val) = self.row(i);
            indices.extend_from_slice(idx);
            values.extend_from_slice(val);
            indptr.push(indices.len());
            labels.push(self.labels[i]);
        }
        DesignMatrix {
            n: order.len(),
            d: self.d,
            indptr,
            indices,
            values,
            labels,
        }
    }
}

/// Parse LIBSVM text: `<label> <idx>:<val> ...` per line, 1-based ascending
/// indices. `dim_override` fixes the column count when max-index inference
/// would undershoot (sparse trailing features).
pub fn parse_libsvm<R: Read>(reader: R, dim_override: Option<usize>) -> Result<DesignMatrix> {
    let reader = BufReader::new(reader);
    let mut raw_labels = Vec::new();
    let mut indptr = vec![0usize];
    let mut indices = Vec::new();
    let mut values = Vec::new();
    let mut max_index = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_ascii_whitespace();
        let label_tok = tokens.next().ok_or(Error::Parse {
            line: lineno,
            msg: "missing label".into(),
        })?;
        let label: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("invalid label token '{label_tok}'"),
        })?;
        raw_labels.push(label);

        let mut prev_index = 0usize;
        for tok in tokens {
            let (idx_str, val_str) = tok.split_once(':').ok_or(Error::Parse {
                line: lineno,
                msg: format!("expected idx:val, got '{tok}'"),
            })?;
            let idx: usize = idx_str.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("invalid feature index '{idx_str}'"),
            })?;
            if val_str.is_empty() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("empty value field for index {idx}"),
                });
            }
            let val: f64 = val_str.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("invalid feature value '{val_str}'"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "feature indices are 1-based".into(),
                });
            }
            if idx <= prev_index {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("non-ascending feature index {idx} after {prev_index}"),
                });
            }
            prev_index = idx;
            max_index = max_index.max(idx);
            indices.push(idx - 1);
            values.push(val);
        }
        indptr.push(indices.len());
    }

    let d = match dim_override {
        Some(d) => {
            if d < max_index {
                return Err(Error::Dimension(format!(
                    "dimension override {d} is below the largest observed index {max_index}"
                )));
            }
            d
        }
        None => max_index,
    };

    let labels = normalize_labels(&raw_labels)?;
    Ok(DesignMatrix {
        n: labels.len(),
        d,
        indptr,
        indices,
        values,
        labels,
    })
}

/// Map whatever binary label set the source uses onto {-1, +1}: the smaller
/// raw label becomes -1 and the larger +1 (so {0,1} -> {-1,+1}).
fn normalize_labels(raw: &[f64]) -> Result<Vec<f64>> {
    let distinct: BTreeSet<_> = raw.iter().map(|&l| l.to_bits()).collect();
    if distinct.len() > 2 {
        return Err(Error::Parse {
            line: 0,
            msg: format!("expected binary labels, found {} distinct values", distinct.len()),
        });
    }
    let values: Vec<f64> = distinct.iter().map(|&b| f64::from_bits(b)).collect();
    let already_signed = values.iter().all(|&v| v == -1.0 || v == 1.0);
    if already_signed {
        return Ok(raw.to_vec());
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(raw.iter().map(|&l| if l == lo { -1.0 } else { 1.0 }).collect())
}

/// Deterministic split: seeded shuffle then prefix.
#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    pub train_count: usize,
    pub shuffle_seed: u64,
    pub scale: bool,
}

pub fn split(dm: &DesignMatrix, spec: &SplitSpec) -> Result<(DesignMatrix, DesignMatrix)> {
    let n = dm.rows();
    if spec.train_count == 0 || spec.train_count >= n {
        return Err(Error::Config(format!(
            "train_count {} must lie strictly between 0 and {n}",
            spec.train_count
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(spec.shuffle_seed);
    order.shuffle(&mut rng);
    let mut train = dm.take_rows(&order[..spec.train_count]);
    let mut test = dm.take_rows(&order[spec.train_count..]);
    if spec.scale {
        train.scale_rows();
        test.scale_rows();
    }
    Ok((train, test))
}

/// Supported LIBSVM datasets (name, remote file, expected n, d, default train count).
pub struct DatasetInfo {
    pub name: &'static str,
    pub file: &'static str,
    pub n: usize,
    pub d: usize,
    pub train_count: usize,
}

const LIBSVM_BASE: &str = "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/binary";

pub const DATASETS: &[DatasetInfo] = &[
    DatasetInfo { name: "australian-scale", file: "australian_scale", n: 690, d: 14, train_count: 552 },
    DatasetInfo { name: "diabetes-scale", file: "diabetes_scale", n: 768, d: 8, train_count: 614 },
    DatasetInfo { name: "breast-cancer", file: "breast-cancer", n: 683, d: 10, train_count: 546 },
    DatasetInfo { name: "mushrooms", file: "mushrooms", n: 8124, d: 112, train_count: 6499 },
    DatasetInfo { name: "phishing", file: "phishing", n: 11055, d: 68, train_count: 8844 },
    DatasetInfo { name: "mnist", file: "mnist.bz2", n: 70000, d: 784, train_count: 60000 },
    DatasetInfo { name: "covtype-scale", file: "covtype.libsvm.binary.scale.bz2", n: 581012, d: 54, train_count: 500000 },
    DatasetInfo { name: "leukemia", file: "leu.bz2", n: 38, d: 7129, train_count: 34 },
];

pub fn dataset_info(name: &str) -> Result<&'static DatasetInfo> {
    DATASETS
        .iter()
        .find(|d| d.name == name)
        .ok_or_else(|| Error::Config(format!("unknown dataset '{name}'")))
}

/// Environment variable overriding the cache root.
pub const CACHE_ENV: &str = "NGVI_CACHE_DIR";

pub fn default_cache_dir() -> PathBuf {
    if let Ok(dir) = std::env::var(CACHE_ENV) {
        return PathBuf::from(dir);
    }
    let home = std::env::var("HOME").unwrap_or_else(|_| ".".into());
    Path::new(&home).join(".cache").join("ngvi")
}

/// Fetch a dataset file into the cache, or reuse the cached copy. In offline
/// mode only the cache is consulted. The manifest records source URL, byte
/// length, and retrieval time; cached files are length-verified against it.
pub fn fetch_dataset(name: &str, cache_dir: &Path, offline: bool) -> Result<PathBuf> {
    let info = dataset_info(name)?;
    let dir = cache_dir.join(info.name);
    let path = dir.join(info.file);
    let manifest = dir.join("manifest.txt");

    if path.is_file() {
        if let Some(expected) = manifest_length(&manifest) {
            let actual = fs::metadata(&path)?.len();
            if actual != expected {
                return Err(Error::Integrity(format!(
                    "cached {} has {actual} bytes, manifest records {expected}",
                    path.display()
                )));
            }
        }
        return Ok(path);
    }
    if offline {
        return Err(Error::Fetch(format!(
            "dataset '{name}' is not cached under {} and offline mode is on",
            dir.display()
        )));
    }

    let url = format!("{LIBSVM_BASE}/{}", info.file);
    let response = ureq::get(&url)
        .call()
        .map_err(|e| Error::Fetch(format!("GET {url}: {e}")))?;
    let mut body = Vec::new();
    response
        .into_reader()
        .read_to_end(&mut body)
        .map_err(|e| Error::Fetch(format!("reading {url}: {e}")))?;

    fs::create_dir_all(&dir)?;
    // write-to-temp-then-rename keeps concurrent fetches atomic
    let tmp = dir.join(format!("{}.part", info.file));
    fs::write(&tmp, &body)?;
    fs::rename(&tmp, &path)?;
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    fs::write(
        &manifest,
        format!("url = {url}\nlength = {}\nretrieved_unix = {now}\n", body.len()),
    )?;
    Ok(path)
}

fn manifest_length(manifest: &Path) -> Option<u64> {
    let text = fs::read_to_string(manifest).ok()?;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("length = ") {
            return rest.trim().parse().ok();
        }
    }
    None
}

/// SHA-256 digest of a file, hex-encoded. Recorded in run summaries.
pub fn file_digest(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Open a dataset file, transparently decompressing by suffix, and parse it.
pub fn load_dataset_file(path: &Path, dim_override: Option<usize>) -> Result<DesignMatrix> {
    let file = fs::File::open(path)?;
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("");
    if name.ends_with(".bz2") {
        parse_libsvm(bzip2::read::BzDecoder::new(file), dim_override)
    } else if name.ends_with(".gz") {
        parse_libsvm(flate2::read::GzDecoder::new(file), dim_override)
    } else {
        parse_libsvm(file, dim_override)
    }
}

/// Fetch (or hit the cache) and parse a named dataset, applying its
/// recorded dimension.
pub fn load_dataset(name: &str, cache_dir: &Path, offline: bool) -> Result<DesignMatrix> {
    let info = dataset_info(name)?;
    let path = fetch_dataset(name, cache_dir, offline)?;
    load_dataset_file(&path, Some(info.d))
}
