//! Synthetic dataset generators, the cause-effect pairs loader, and
//! reversible standardization.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dist::DistSpec;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RngState;

/// Causal orientation between a pair of variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CausalDirection {
    XtoY,
    YtoX,
}

impl CausalDirection {
    pub fn flipped(self) -> Self {
        match self {
            CausalDirection::XtoY => CausalDirection::YtoX,
            CausalDirection::YtoX => CausalDirection::XtoY,
        }
    }
}

/// Per-column affine transform `(x - mean) / scale`, kept so training-space
/// quantities can be mapped back to raw units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub u_means: Vec<f64>,
    pub u_scales: Vec<f64>,
    pub z_mean: f64,
    pub z_scale: f64,
    /// Columns whose variance was zero; their scale is pinned to 1.
    pub degenerate_u: Vec<bool>,
    pub degenerate_z: bool,
}

fn column_stats(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64, bool) {
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let degenerate = var == 0.0;
    let scale = if degenerate { 1.0 } else { var.sqrt() };
    (mean, scale, degenerate)
}

impl Standardizer {
    /// Identity transform for `m` regressor columns.
    pub fn identity(m: usize) -> Self {
        Standardizer {
            u_means: vec![0.0; m],
            u_scales: vec![1.0; m],
            z_mean: 0.0,
            z_scale: 1.0,
            degenerate_u: vec![false; m],
            degenerate_z: false,
        }
    }

    /// Fits per-column mean and population standard deviation.
    pub fn fit(u: &Matrix, z: &[f64]) -> Self {
        let n = u.rows();
        let mut u_means = Vec::with_capacity(u.cols());
        let mut u_scales = Vec::with_capacity(u.cols());
        let mut degenerate_u = Vec::with_capacity(u.cols());
        for c in 0..u.cols() {
            let col = u.col(c);
            let (mean, scale, degenerate) = column_stats(col.iter().copied(), n);
            u_means.push(mean);
            u_scales.push(scale);
            degenerate_u.push(degenerate);
        }
        let (z_mean, z_scale, degenerate_z) = column_stats(z.iter().copied(), z.len());
        Standardizer {
            u_means,
            u_scales,
            z_mean,
            z_scale,
            degenerate_u,
            degenerate_z,
        }
    }

    pub fn apply_u(&self, u: &Matrix) -> Matrix {
        Matrix::from_fn(u.rows(), u.cols(), |r, c| {
            (u.get(r, c) - self.u_means[c]) / self.u_scales[c]
        })
    }

    pub fn invert_u(&self, u: &Matrix) -> Matrix {
        Matrix::from_fn(u.rows(), u.cols(), |r, c| {
            u.get(r, c) * self.u_scales[c] + self.u_means[c]
        })
    }

    pub fn apply_z(&self, z: &[f64]) -> Vec<f64> {
        z.iter().map(|v| (v - self.z_mean) / self.z_scale).collect()
    }

    pub fn invert_z(&self, z: &[f64]) -> Vec<f64> {
        z.iter().map(|v| v * self.z_scale + self.z_mean).collect()
    }
}

/// Paired regressor matrix and scalar response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub u: Matrix,
    pub z: Vec<f64>,
    pub standardizer: Option<Standardizer>,
    pub name: String,
}

impl Dataset {
    pub fn new(u: Matrix, z: Vec<f64>, name: impl Into<String>) -> Result<Self> {
        if u.rows() == 0 {
            return Err(Error::param("dataset needs at least one row"));
        }
        if u.rows() != z.len() {
            return Err(Error::shape(format!(
                "{} regressor rows vs {} responses",
                u.rows(),
                z.len()
            )));
        }
        if !u.is_finite() || z.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("dataset contains non-finite entries"));
        }
        Ok(Dataset {
            u,
            z,
            standardizer: None,
            name: name.into(),
        })
    }

    /// Scalar-on-scalar dataset from two slices.
    pub fn from_xy(x: &[f64], y: &[f64], name: impl Into<String>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::shape(format!(
                "{} regressors vs {} responses",
                x.len(),
                y.len()
            )));
        }
        Dataset::new(Matrix::column(x.to_vec()), y.to_vec(), name)
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn num_regressors(&self) -> usize {
        self.u.cols()
    }

    /// Writes the dataset as CSV (`u0,..,um,z`) with a JSON sidecar holding
    /// the standardizer when one is attached.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for c in 0..self.u.cols() {
            out.push_str(&format!("u{c},"));
        }
        out.push_str("z\n");
        for r in 0..self.u.rows() {
            for c in 0..self.u.cols() {
                out.push_str(&format!("{},", self.u.get(r, c)));
            }
            out.push_str(&format!("{}\n", self.z[r]));
        }
        std::fs::write(path, out)?;
        if let Some(standardizer) = &self.standardizer {
            let sidecar = path.with_extension("standardizer.json");
            std::fs::write(sidecar, serde_json::to_string_pretty(standardizer)?)?;
        }
        Ok(())
    }

    /// Reads a numeric CSV where the last column is the response. A
    /// non-numeric first line is treated as a header.
    pub fn read_csv(path: &Path) -> Result<Dataset> {
        let text = std::fs::read_to_string(path)?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> = line
                .split(',')
                .map(|tok| tok.trim().parse::<f64>())
                .collect();
            match parsed {
                Ok(values) => rows.push(values),
                Err(_) if lineno == 0 => continue, // header
                Err(_) => {
                    return Err(Error::Parse {
                        path: path.display().to_string(),
                        line: lineno + 1,
                        message: "non-numeric field".into(),
                    })
                }
            }
        }
        if rows.is_empty() {
            return Err(Error::param(format!("{}: no data rows", path.display())));
        }
        let width = rows[0].len();
        if width < 2 {
            return Err(Error::param("need at least one regressor and one response column"));
        }
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::param("ragged CSV rows"));
        }
        let z: Vec<f64> = rows.iter().map(|r| r[width - 1]).collect();
        let u = Matrix::from_fn(rows.len(), width - 1, |r, c| rows[r][c]);
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "csv".into());
        Dataset::new(u, z, name)
    }
}

/// Returns a standardized copy with the fitted transform attached.
pub fn standardize(data: &Dataset) -> Dataset {
    let standardizer = Standardizer::fit(&data.u, &data.z);
    Dataset {
        u: standardizer.apply_u(&data.u),
        z: standardizer.apply_z(&data.z),
        standardizer: Some(standardizer),
        name: data.name.clone(),
    }
}

/// Inverts [`standardize`]; a dataset without a transform is returned as-is.
pub fn destandardize(data: &Dataset) -> Dataset {
    match &data.standardizer {
        None => data.clone(),
        Some(s) => Dataset {
            u: s.invert_u(&data.u),
            z: s.invert_z(&data.z),
            standardizer: None,
            name: data.name.clone(),
        },
    }
}

/// Regression target used by the toy benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ToyFn {
    Square,
    SinPi,
    Exp2,
    Sigmoid5,
    Cube,
    Linear { slope: f64 },
}

impl ToyFn {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ToyFn::Square => x * x,
            ToyFn::SinPi => (std::f64::consts::PI * x).sin(),
            ToyFn::Exp2 => (2.0 * x).exp(),
            ToyFn::Sigmoid5 => 1.0 / (1.0 + (-5.0 * x).exp()),
            ToyFn::Cube => x * x * x,
            ToyFn::Linear { slope } => slope * x,
        }
    }

    pub fn name(&self) -> String {
        match self {
            ToyFn::Square => "square".into(),
            ToyFn::SinPi => "sin_pi".into(),
            ToyFn::Exp2 => "exp2".into(),
            ToyFn::Sigmoid5 => "sigmoid5".into(),
            ToyFn::Cube => "cube".into(),
            ToyFn::Linear { slope } => format!("linear_{slope}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySpec {
    pub f: ToyFn,
    pub noise: DistSpec,
    pub n: usize,
}

/// Draws `X ~ Uniform(-1,1)`, `Z = f(X) + eps`, returning the dataset and
/// the noiseless reference function.
pub fn generate_toy(spec: &ToySpec, rng: &mut RngState) -> Result<(Dataset, ToyFn)> {
    if spec.n < 10 {
        return Err(Error::param("toy datasets need n >= 10"));
    }
    let x = DistSpec::Uniform { lo: -1.0, hi: 1.0 }.sample(spec.n, rng)?;
    let eps = spec.noise.sample(spec.n, rng)?;
    let z: Vec<f64> = x
        .iter()
        .zip(&eps)
        .map(|(x, e)| spec.f.eval(*x) + e)
        .collect();
    let name = format!("toy_{}", spec.f.name());
    Ok((Dataset::from_xy(&x, &z, name)?, spec.f))
}

/// The non-additive model `Z = eps * U` with `U ~ logNormal(1,0.6) + 1` and
/// `eps ~ Uniform(-1,1)`.
pub fn generate_nonadditive(n: usize, rng: &mut RngState) -> Result<Dataset> {
    if n < 10 {
        return Err(Error::param("need n >= 10"));
    }
    let u_spec = DistSpec::Shifted {
        inner: Box::new(DistSpec::LogNormal {
            mu: 1.0,
            sigma: 0.6,
        }),
        offset: 1.0,
    };
    let u = u_spec.sample(n, rng)?;
    let eps = DistSpec::Uniform { lo: -1.0, hi: 1.0 }.sample(n, rng)?;
    let z: Vec<f64> = u.iter().zip(&eps).map(|(u, e)| u * e).collect();
    Dataset::from_xy(&u, &z, "nonadditive_scale")
}

/// One scalar-scalar cause-effect dataset with its ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairsRecord {
    pub id: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub ground_truth: CausalDirection,
    pub weight: f64,
}

/// Outcome of a directory load; nothing is dropped silently.
#[derive(Debug, Clone)]
pub struct PairsLoad {
    pub records: Vec<PairsRecord>,
    /// `(id, reason)` for every discovered-but-unusable pair.
    pub skipped: Vec<(String, String)>,
    pub discovered: usize,
}

#[derive(Debug, Clone)]
struct PairMeta {
    cause: (usize, usize),
    effect: (usize, usize),
    weight: f64,
}

fn parse_meta(path: &Path) -> Result<BTreeMap<String, PairMeta>> {
    let text = std::fs::read_to_string(path)?;
    let mut meta = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: &str| Error::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            message: message.into(),
        };
        let tokens: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .collect();
        if lineno == 0 && tokens.iter().skip(1).any(|t| t.parse::<f64>().is_err()) {
            continue; // header line
        }
        let id = normalize_pair_id(tokens[0]);
        let nums: Vec<f64> = tokens[1..]
            .iter()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err("non-numeric metadata field"))?;
        let entry = match nums.len() {
            // id, cause_first, cause_last, effect_first, effect_last, weight
            5 => PairMeta {
                cause: (nums[0] as usize, nums[1] as usize),
                effect: (nums[2] as usize, nums[3] as usize),
                weight: nums[4],
            },
            // id, cause_col, effect_col, weight
            3 => PairMeta {
                cause: (nums[0] as usize, nums[0] as usize),
                effect: (nums[1] as usize, nums[1] as usize),
                weight: nums[2],
            },
            _ => return Err(parse_err("expected 4 or 6 metadata fields")),
        };
        meta.insert(id, entry);
    }
    Ok(meta)
}

fn normalize_pair_id(token: &str) -> String {
    let digits = token.trim_start_matches("pair");
    format!("pair{:0>4}", digits)
}

fn parse_pair_file(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    let mut width = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                message: "non-numeric field".into(),
            })?;
        if let Some(w) = width {
            if values.len() != w {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    message: format!("expected {w} columns, found {}", values.len()),
                });
            }
        } else {
            width = Some(values.len());
        }
        rows.push(values);
    }
    Ok(rows)
}

/// Loads `pairNNNN.txt` tables from `dir`, keeping scalar-scalar pairs.
///
/// The metadata file lists 1-based cause/effect column ranges per pair;
/// pairs with vector-valued variables are skip-listed, never dropped
/// silently. `x`/`y` keep file column order and `ground_truth` records the
/// annotated direction.
pub fn load_pairs(dir: &Path, meta_path: &Path) -> Result<PairsLoad> {
    let meta = parse_meta(meta_path)?;
    let mut files: Vec<(String, std::path::PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(".txt") {
            if let Some(digits) = stem.strip_prefix("pair") {
                if !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit()) {
                    files.push((normalize_pair_id(stem), entry.path()));
                }
            }
        }
    }
    files.sort();

    let discovered = files.len();
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (id, path) in files {
        let Some(m) = meta.get(&id) else {
            skipped.push((id, "no metadata entry".into()));
            continue;
        };
        if m.cause.0 != m.cause.1 || m.effect.0 != m.effect.1 {
            skipped.push((id, "vector-valued variable".into()));
            continue;
        }
        let (cause_col, effect_col) = (m.cause.0, m.effect.0);
        let rows = parse_pair_file(&path)?;
        if rows.is_empty() {
            skipped.push((id, "empty file".into()));
            continue;
        }
        let width = rows[0].len();
        if cause_col == 0 || effect_col == 0 || cause_col > width || effect_col > width {
            skipped.push((id, format!("column index out of range (width {width})")));
            continue;
        }
        if rows
            .iter()
            .any(|r| !r[cause_col - 1].is_finite() || !r[effect_col - 1].is_finite())
        {
            skipped.push((id, "non-finite values".into()));
            continue;
        }
        // x/y follow file column order; metadata orients the ground truth.
        let (first, second) = if cause_col <= effect_col {
            (cause_col, effect_col)
        } else {
            (effect_col, cause_col)
        };
        let x: Vec<f64> = rows.iter().map(|r| r[first - 1]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[second - 1]).collect();
        let ground_truth = if cause_col <= effect_col {
            CausalDirection::XtoY
        } else {
            CausalDirection::YtoX
        };
        records.push(PairsRecord {
            id,
            x,
            y,
            ground_truth,
            weight: m.weight,
        });
    }
    Ok(PairsLoad {
        records,
        skipped,
        discovered,
    })
}
