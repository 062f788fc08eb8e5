//! File formats: JSON reports with an embedded provenance block, CSV tables
//! with `#` comment headers, and a binary kernel sidecar.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use hfio_core::calculus::SymbolSamples;
use hfio_core::dense::CMatrix;
use hfio_core::numeric::{make_grid, Grid, ScalarField};
use hfio_core::operator::{KernelMatrix, KernelMeta};
use hfio_core::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

const KERNEL_MAGIC: &[u8; 8] = b"HFIOKRN1";

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File { path: path.display().to_string(), source }
}

fn format_err(path: &Path, msg: impl Into<String>) -> IoError {
    IoError::Format { path: path.display().to_string(), msg: msg.into() }
}

/// Provenance written into every output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Meta {
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        Self { tool: "hfio".into(), version: env!("CARGO_PKG_VERSION").into(), config_hash: config_hash.into(), seed }
    }

    fn comment_lines(&self) -> String {
        format!("# tool={} version={}\n# config_hash={}\n# seed={}\n", self.tool, self.version, self.config_hash, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub meta: Meta,
    pub report: T,
}

pub fn write_json<T: Serialize>(path: &Path, meta: &Meta, report: &T) -> Result<(), IoError> {
    let f = File::create(path).map_err(file_err(path))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, &Envelope { meta: meta.clone(), report })
        .map_err(|e| format_err(path, e.to_string()))?;
    w.write_all(b"\n").map_err(file_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Envelope<T>, IoError> {
    let f = File::open(path).map_err(file_err(path))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| format_err(path, e.to_string()))
}

fn csv_writer(path: &Path, meta: &Meta) -> Result<csv::Writer<BufWriter<File>>, IoError> {
    let f = File::create(path).map_err(file_err(path))?;
    let mut w = BufWriter::new(f);
    w.write_all(meta.comment_lines().as_bytes()).map_err(file_err(path))?;
    Ok(csv::Writer::from_writer(w))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<BufReader<File>>, IoError> {
    let f = File::open(path).map_err(file_err(path))?;
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(BufReader::new(f)))
}

fn csv_io(path: &Path) -> impl Fn(csv::Error) -> IoError + '_ {
    move |e| format_err(path, e.to_string())
}

/// Reads the `# key=value` provenance lines of a CSV file.
pub fn read_csv_meta(path: &Path) -> Result<Meta, IoError> {
    let mut text = String::new();
    File::open(path).map_err(file_err(path))?.read_to_string(&mut text).map_err(file_err(path))?;
    let mut fields = std::collections::BTreeMap::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        for kv in line.trim_start_matches('#').split_whitespace() {
            if let Some((k, v)) = kv.split_once('=') {
                fields.insert(k.to_string(), v.to_string());
            }
        }
    }
    let get = |k: &str| fields.get(k).cloned().ok_or_else(|| format_err(path, format!("missing {k} header")));
    Ok(Meta {
        tool: get("tool")?,
        version: get("version")?,
        config_hash: get("config_hash")?,
        seed: get("seed")?.parse().map_err(|_| format_err(path, "bad seed header"))?,
    })
}

fn axis_names(prefix: &str, n: usize) -> Vec<String> {
    if n == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=n).map(|i| format!("{prefix}{i}")).collect()
    }
}

/// Field as CSV: node coordinates, Re, Im.
pub fn write_field(path: &Path, meta: &Meta, field: &ScalarField) -> Result<(), IoError> {
    let n = field.grid.dim;
    let mut w = csv_writer(path, meta)?;
    let mut header = axis_names("x", n);
    header.extend(["re".to_string(), "im".to_string()]);
    w.write_record(&header).map_err(csv_io(path))?;
    for (p, v) in field.grid.nodes().iter().zip(&field.values) {
        let mut rec: Vec<String> = p[..n].iter().map(|c| format!("{c:e}")).collect();
        rec.push(format!("{:e}", v.re));
        rec.push(format!("{:e}", v.im));
        w.write_record(&rec).map_err(csv_io(path))?;
    }
    w.flush().map_err(file_err(path))
}

/// Reads a field CSV and recovers its uniform grid.
pub fn read_field(path: &Path) -> Result<ScalarField, IoError> {
    let mut r = csv_reader(path)?;
    let header = r.headers().map_err(csv_io(path))?.clone();
    let n = match header.len() {
        3 => 1,
        4 => 2,
        k => return Err(format_err(path, format!("expected 3 or 4 columns, found {k}"))),
    };
    let mut coords = Vec::new();
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_io(path))?;
        let nums: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| format_err(path, e.to_string()))?;
        coords.push(nums[..n].to_vec());
        values.push(Complex64::new(nums[n], nums[n + 1]));
    }
    let count = values.len();
    let per_axis = if n == 1 { count } else { (count as f64).sqrt().round() as usize };
    if per_axis.pow(n as u32) != count {
        return Err(format_err(path, format!("{count} rows do not form a square grid")));
    }
    let half_width = coords.iter().flatten().fold(0.0f64, |m, c| m.max(c.abs()));
    let grid = make_grid(n, half_width, per_axis).map_err(|e| format_err(path, e.to_string()))?;
    let tol = 1e-9 * (1.0 + half_width);
    for (k, c) in coords.iter().enumerate() {
        let node = grid.node(k);
        if c.iter().zip(&node[..n]).any(|(a, b)| (a - b).abs() > tol) {
            return Err(format_err(path, format!("row {k} is not a node of a symmetric uniform grid")));
        }
    }
    ScalarField::new(grid, values).map_err(|e| format_err(path, e.to_string()))
}

/// Metadata stored next to the binary kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelHeader {
    pub target: Grid,
    pub source: Grid,
    pub h: f64,
    pub rows: usize,
    pub cols: usize,
    /// Entries are K(x_i, y_j)·w_j, the quadrature weight of the source grid.
    pub weighted: bool,
    pub binary: String,
    pub kernel: KernelMeta,
}

/// Writes `<stem>.csv` (i, j, x_i, y_j, Re K, Im K), `<stem>.bin` and `<stem>.json`.
pub fn write_kernel(dir: &Path, stem: &str, meta: &Meta, m: &KernelMatrix) -> Result<(), IoError> {
    let n = m.target.dim;
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut w = csv_writer(&csv_path, meta)?;
    let mut header = vec!["i".to_string(), "j".to_string()];
    header.extend(axis_names("x", n));
    header.extend(axis_names("y", n));
    header.extend(["re".to_string(), "im".to_string()]);
    w.write_record(&header).map_err(csv_io(&csv_path))?;
    let xs = m.target.nodes();
    let ys = m.source.nodes();
    for (i, x) in xs.iter().enumerate() {
        for (j, y) in ys.iter().enumerate() {
            let k = m.kernel(i, j);
            let mut rec = vec![i.to_string(), j.to_string()];
            rec.extend(x[..n].iter().chain(&y[..n]).map(|c| format!("{c:e}")));
            rec.push(format!("{:e}", k.re));
            rec.push(format!("{:e}", k.im));
            w.write_record(&rec).map_err(csv_io(&csv_path))?;
        }
    }
    w.flush().map_err(file_err(&csv_path))?;

    let bin_name = format!("{stem}.bin");
    let bin_path = dir.join(&bin_name);
    let mut b = BufWriter::new(File::create(&bin_path).map_err(file_err(&bin_path))?);
    let mut put = |bytes: &[u8]| b.write_all(bytes).map_err(file_err(&bin_path));
    put(KERNEL_MAGIC)?;
    put(&(m.nrows() as u64).to_le_bytes())?;
    put(&(m.ncols() as u64).to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m.entries[(i, j)];
            put(&v.re.to_le_bytes())?;
            put(&v.im.to_le_bytes())?;
        }
    }
    b.flush().map_err(file_err(&bin_path))?;

    let header = KernelHeader {
        target: m.target,
        source: m.source,
        h: m.h,
        rows: m.nrows(),
        cols: m.ncols(),
        weighted: true,
        binary: bin_name,
        kernel: m.meta.clone(),
    };
    write_json(&dir.join(format!("{stem}.json")), meta, &header)
}

/// Reads a kernel back from its JSON metadata and binary sidecar.
pub fn read_kernel(json_path: &Path) -> Result<(Meta, KernelMatrix), IoError> {
    let env: Envelope<KernelHeader> = read_json(json_path)?;
    let hd = env.report;
    let bin_path = json_path.with_file_name(&hd.binary);
    let mut bytes = Vec::new();
    File::open(&bin_path).map_err(file_err(&bin_path))?.read_to_end(&mut bytes).map_err(file_err(&bin_path))?;
    if bytes.len() < 24 || &bytes[..8] != KERNEL_MAGIC {
        return Err(format_err(&bin_path, "not a kernel sidecar"));
    }
    let word = |k: usize| u64::from_le_bytes(bytes[k..k + 8].try_into().expect("8 bytes"));
    let (rows, cols) = (word(8) as usize, word(16) as usize);
    if rows != hd.rows || cols != hd.cols || bytes.len() != 24 + 16 * rows * cols {
        return Err(format_err(&bin_path, "size does not match metadata"));
    }
    let f = |k: usize| f64::from_le_bytes(bytes[k..k + 8].try_into().expect("8 bytes"));
    let entries = CMatrix::from_fn(rows, cols, |i, j| {
        let k = 24 + 16 * (i * cols + j);
        Complex64::new(f(k), f(k + 8))
    });
    Ok((env.meta, KernelMatrix { target: hd.target, source: hd.source, h: hd.h, entries, meta: hd.kernel }))
}

/// Singular values as CSV (j, s_j), j starting at 1.
pub fn write_singular_values(path: &Path, meta: &Meta, s: &[f64]) -> Result<(), IoError> {
    let mut w = csv_writer(path, meta)?;
    w.write_record(["j", "s_j"]).map_err(csv_io(path))?;
    for (j, v) in s.iter().enumerate() {
        w.write_record([(j + 1).to_string(), format!("{v:e}")]).map_err(csv_io(path))?;
    }
    w.flush().map_err(file_err(path))
}

pub fn read_singular_values(path: &Path) -> Result<Vec<f64>, IoError> {
    let mut r = csv_reader(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_io(path))?;
        out.push(rec.get(1).unwrap_or("").trim().parse::<f64>().map_err(|e| format_err(path, e.to_string()))?);
    }
    Ok(out)
}

/// Symbol samples as CSV (x, ξ, Re, Im).
pub fn write_symbol(path: &Path, meta: &Meta, s: &SymbolSamples) -> Result<(), IoError> {
    let n = s.samples.first().map_or(1, |p| p.x.len());
    let mut w = csv_writer(path, meta)?;
    let mut header = axis_names("x", n);
    header.extend(axis_names("xi", n));
    header.extend(["re".to_string(), "im".to_string()]);
    w.write_record(&header).map_err(csv_io(path))?;
    for p in &s.samples {
        let mut rec: Vec<String> = p.x.iter().chain(&p.xi).map(|c| format!("{c:e}")).collect();
        rec.push(format!("{:e}", p.value.re));
        rec.push(format!("{:e}", p.value.im));
        w.write_record(&rec).map_err(csv_io(path))?;
    }
    w.flush().map_err(file_err(path))
}

/// Rows of a symbol CSV as (x, ξ, value).
pub fn read_symbol(path: &Path) -> Result<Vec<(Vec<f64>, Vec<f64>, Complex64)>, IoError> {
    let mut r = csv_reader(path)?;
    let cols = r.headers().map_err(csv_io(path))?.len();
    let n = (cols - 2) / 2;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_io(path))?;
        let v: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| format_err(path, e.to_string()))?;
        out.push((v[..n].to_vec(), v[n..2 * n].to_vec(), Complex64::new(v[2 * n], v[2 * n + 1])));
    }
    Ok(out)
}
