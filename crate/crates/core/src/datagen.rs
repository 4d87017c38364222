//! Labelled datasets over a grid of process parameters, splitting, and CSV
//! persistence with a key-value manifest sidecar.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::extratrees::FeatureMatrix;
use crate::process::{
    generate_features, ControlSequence, ProcessInstance, ProcessParams, N_FEATURES,
};
use crate::quantum::Rng;
use crate::seed::{derive_seed, stage};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Written to every manifest; changing the column order requires changing
/// this string.
pub const FEATURE_ORDERING: &str =
    "lexicographic(i1,i2,i3,in);in-fastest;controls=0:I,1:X,2:Y,3:Z;bases=1:x+,2:y+,3:z+";

pub const K1_COLUMN: &str = "k1";
pub const PHI_COLUMN: &str = "phi";
pub const LABEL_COLUMN: &str = "log2k2";

/// `p_0001, p_0002, p_0003, p_0011, …, p_3333`.
pub fn feature_names() -> Vec<String> {
    ControlSequence::all().map(|s| format!("p_{s}")).collect()
}

/// Full dataset header: probability features, side features, label.
pub fn schema() -> Vec<String> {
    let mut names = feature_names();
    names.extend([K1_COLUMN, PHI_COLUMN, LABEL_COLUMN].map(String::from));
    names
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub k1: usize,
    pub phi: f64,
    /// `log₂ k₂`.
    pub label: f64,
}

impl Example {
    pub fn k2(&self) -> usize {
        self.label.exp2().round() as usize
    }

    /// Value of a column given its position in [`schema`].
    pub fn value(&self, column: usize) -> f64 {
        match column {
            c if c < N_FEATURES => self.features[c],
            c if c == N_FEATURES => self.k1 as f64,
            c if c == N_FEATURES + 1 => self.phi,
            _ => self.label,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub k1_values: Vec<usize>,
    pub k2_values: Vec<usize>,
    pub phi_values: Vec<f64>,
    pub examples_per_cell: usize,
    pub master_seed: u64,
}

impl GridSpec {
    /// `k1 ∈ {1,2,4}`, `k2 ∈ {1,2,8,16}`, `φ ∈ {0.1,0.2,0.7,1}`.
    pub fn training_grid(examples_per_cell: usize, master_seed: u64) -> Self {
        Self {
            k1_values: vec![1, 2, 4],
            k2_values: vec![1, 2, 8, 16],
            phi_values: vec![0.1, 0.2, 0.7, 1.0],
            examples_per_cell,
            master_seed,
        }
    }

    /// The full-scale grid: 48 cells × 4096 examples.
    pub fn full_scale(master_seed: u64) -> Self {
        Self::training_grid(4096, master_seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k1_values.is_empty() || self.k2_values.is_empty() || self.phi_values.is_empty() {
            return Err(Error::Config("grid value lists must be non-empty".into()));
        }
        if self.examples_per_cell == 0 {
            return Err(Error::Config("examples_per_cell must be >= 1".into()));
        }
        if self.k1_values.contains(&0) || self.k2_values.contains(&0) {
            return Err(Error::Config("k1 and k2 values must be >= 1".into()));
        }
        if let Some(phi) = self.phi_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Config(format!("phi value {phi} outside [0, 1]")));
        }
        Ok(())
    }

    /// Cells in generation order: `k1` outermost, then `k2`, then `φ`.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &k1 in &self.k1_values {
            for &k2 in &self.k2_values {
                for (phi_index, &phi) in self.phi_values.iter().enumerate() {
                    cells.push(Cell {
                        k1,
                        k2,
                        phi_index,
                        phi,
                    });
                }
            }
        }
        cells
    }

    pub fn total_examples(&self) -> usize {
        self.cells().len() * self.examples_per_cell
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub k1: usize,
    pub k2: usize,
    pub phi_index: usize,
    pub phi: f64,
}

impl Cell {
    /// Seed for one example, a function of the cell coordinates and the
    /// example index only.
    pub fn example_seed(&self, master_seed: u64, example_index: usize) -> u64 {
        derive_seed(
            master_seed,
            &[
                stage::DATASET,
                self.k1 as u64,
                self.k2 as u64,
                self.phi_index as u64,
                example_index as u64,
            ],
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellCount {
    pub k1: usize,
    pub k2: usize,
    pub phi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub grid: GridSpec,
    pub artifact_version: String,
    pub feature_ordering: String,
    pub cells: Vec<CellCount>,
    pub created_unix: u64,
}

impl Manifest {
    fn for_examples(grid: GridSpec, examples: &[Example], created_unix: u64) -> Self {
        Self {
            grid,
            artifact_version: ARTIFACT_VERSION.to_string(),
            feature_ordering: FEATURE_ORDERING.to_string(),
            cells: count_cells(examples),
            created_unix,
        }
    }

    pub fn example_count(&self) -> usize {
        self.cells.iter().map(|c| c.count).sum()
    }

    pub fn to_text(&self) -> String {
        let join = |v: Vec<String>| v.join(",");
        let g = &self.grid;
        let mut s = String::from("# qmarkov dataset manifest\n");
        let _ = writeln!(s, "artifact_version = {}", self.artifact_version);
        let _ = writeln!(s, "feature_ordering = {}", self.feature_ordering);
        let _ = writeln!(
            s,
            "k1_values = {}",
            join(g.k1_values.iter().map(|v| v.to_string()).collect())
        );
        let _ = writeln!(
            s,
            "k2_values = {}",
            join(g.k2_values.iter().map(|v| v.to_string()).collect())
        );
        let _ = writeln!(
            s,
            "phi_values = {}",
            join(g.phi_values.iter().map(|v| v.to_string()).collect())
        );
        let _ = writeln!(s, "examples_per_cell = {}", g.examples_per_cell);
        let _ = writeln!(s, "master_seed = {}", g.master_seed);
        let _ = writeln!(s, "examples = {}", self.example_count());
        for c in &self.cells {
            let _ = writeln!(s, "cell = {},{},{},{}", c.k1, c.k2, c.phi, c.count);
        }
        let _ = writeln!(s, "created_unix = {}", self.created_unix);
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let perr = |line: usize, column: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            column,
            message,
        };
        let mut fields: BTreeMap<String, (usize, String)> = BTreeMap::new();
        let mut cells = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| perr(line_no, 1, "expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let value_col = raw.find(value).unwrap_or(0) + 1;
            if key == "cell" {
                let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                if parts.len() != 4 {
                    return Err(perr(
                        line_no,
                        value_col,
                        "cell needs k1,k2,phi,count".into(),
                    ));
                }
                let bad = |what: &str| perr(line_no, value_col, format!("invalid cell {what}"));
                cells.push(CellCount {
                    k1: parts[0].parse().map_err(|_| bad("k1"))?,
                    k2: parts[1].parse().map_err(|_| bad("k2"))?,
                    phi: parts[2].parse().map_err(|_| bad("phi"))?,
                    count: parts[3].parse().map_err(|_| bad("count"))?,
                });
            } else {
                fields.insert(key.to_string(), (line_no, value.to_string()));
            }
        }

        let get = |key: &str| -> Result<&(usize, String)> {
            fields
                .get(key)
                .ok_or_else(|| Error::Schema(format!("manifest {} lacks `{key}`", path.display())))
        };
        fn list<T: std::str::FromStr>(
            (line, value): &(usize, String),
            perr: &dyn Fn(usize, usize, String) -> Error,
        ) -> Result<Vec<T>> {
            value
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse()
                        .map_err(|_| perr(*line, 1, format!("invalid list entry `{v}`")))
                })
                .collect()
        }
        fn scalar<T: std::str::FromStr>(
            (line, value): &(usize, String),
            perr: &dyn Fn(usize, usize, String) -> Error,
        ) -> Result<T> {
            value
                .parse()
                .map_err(|_| perr(*line, 1, format!("invalid value `{value}`")))
        }

        let grid = GridSpec {
            k1_values: list(get("k1_values")?, &perr)?,
            k2_values: list(get("k2_values")?, &perr)?,
            phi_values: list(get("phi_values")?, &perr)?,
            examples_per_cell: scalar(get("examples_per_cell")?, &perr)?,
            master_seed: scalar(get("master_seed")?, &perr)?,
        };
        let manifest = Manifest {
            grid,
            artifact_version: get("artifact_version")?.1.clone(),
            feature_ordering: get("feature_ordering")?.1.clone(),
            cells,
            created_unix: scalar(get("created_unix")?, &perr)?,
        };
        let declared: usize = scalar(get("examples")?, &perr)?;
        if declared != manifest.example_count() {
            return Err(Error::Schema(format!(
                "manifest declares {declared} examples but cells sum to {}",
                manifest.example_count()
            )));
        }
        if manifest.feature_ordering != FEATURE_ORDERING {
            return Err(Error::Schema(format!(
                "manifest feature ordering `{}` differs from `{FEATURE_ORDERING}`",
                manifest.feature_ordering
            )));
        }
        Ok(manifest)
    }
}

fn count_cells(examples: &[Example]) -> Vec<CellCount> {
    let mut counts: BTreeMap<(usize, usize, u64), usize> = BTreeMap::new();
    for ex in examples {
        *counts
            .entry((ex.k1, ex.k2(), ex.phi.to_bits()))
            .or_default() += 1;
    }
    counts
        .into_iter()
        .map(|((k1, k2, phi), count)| CellCount {
            k1,
            k2,
            phi: f64::from_bits(phi),
            count,
        })
        .collect()
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub schema: Vec<String>,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.examples.iter().map(|e| e.label).collect()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.schema
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Schema(format!("dataset has no column `{name}`")))
    }

    /// Column-major matrix of the named input columns.
    pub fn to_matrix(&self, columns: &[String]) -> Result<FeatureMatrix> {
        let indices = columns
            .iter()
            .map(|c| {
                if c == LABEL_COLUMN {
                    Err(Error::Schema("the label cannot be used as an input".into()))
                } else {
                    self.column_index(c)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let data = indices
            .iter()
            .map(|&j| self.examples.iter().map(|e| e.value(j)).collect())
            .collect();
        FeatureMatrix::from_columns(columns.to_vec(), data)
    }

    /// Rows at `indices`, with the manifest's cell counts recomputed.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let examples: Vec<Example> = indices.iter().map(|&i| self.examples[i].clone()).collect();
        let manifest = Manifest::for_examples(
            self.manifest.grid.clone(),
            &examples,
            self.manifest.created_unix,
        );
        Dataset {
            examples,
            schema: self.schema.clone(),
            manifest,
        }
    }

    /// FNV-1a over the bit patterns of each column, in schema order.
    pub fn column_checksums(&self) -> Vec<u64> {
        (0..self.schema.len())
            .map(|j| {
                self.examples.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, e| {
                    e.value(j).to_bits().to_le_bytes().iter().fold(h, |h, &b| {
                        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
                    })
                })
            })
            .collect()
    }
}

fn example_for(cell: &Cell, master_seed: u64, index: usize) -> Result<Example> {
    let mut rng = Rng::from_seed(cell.example_seed(master_seed, index));
    let params = ProcessParams::new(cell.k1, cell.k2, cell.phi)?;
    let inst = ProcessInstance::sample(params, &mut rng)?;
    Ok(Example {
        features: generate_features(&inst)?.into_vec(),
        k1: cell.k1,
        phi: cell.phi,
        label: (cell.k2 as f64).log2(),
    })
}

/// Simulates `examples_per_cell` fresh processes per grid cell. Runs on the
/// ambient rayon pool; output is identical for any pool size.
pub fn generate_dataset(grid: &GridSpec) -> Result<Dataset> {
    grid.validate()?;
    let jobs: Vec<(Cell, usize)> = grid
        .cells()
        .into_iter()
        .flat_map(|c| (0..grid.examples_per_cell).map(move |i| (c, i)))
        .collect();
    let examples = jobs
        .par_iter()
        .map(|(cell, i)| example_for(cell, grid.master_seed, *i))
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest::for_examples(grid.clone(), &examples, now_unix());
    Ok(Dataset {
        examples,
        schema: schema(),
        manifest,
    })
}

/// Which out-of-range test set to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OodKind {
    /// `k2 = 4` over `k1 ∈ {1,2,4}`, `φ ∈ {0.1,0.2,0.5,0.7,1}`.
    Interpolation = 1,
    /// `k1 = 2`, `k2 = 64`, `φ = 0.5`.
    Extrapolation = 2,
}

impl TryFrom<u32> for OodKind {
    type Error = Error;

    fn try_from(kind: u32) -> Result<Self> {
        match kind {
            1 => Ok(OodKind::Interpolation),
            2 => Ok(OodKind::Extrapolation),
            _ => Err(Error::Config(format!(
                "OOD test-set kind must be 1 or 2, got {kind}"
            ))),
        }
    }
}

pub fn ood_grid(kind: OodKind, per_cell: usize, master_seed: u64) -> GridSpec {
    let seed = derive_seed(master_seed, &[stage::OOD, kind as u64]);
    match kind {
        OodKind::Interpolation => GridSpec {
            k1_values: vec![1, 2, 4],
            k2_values: vec![4],
            phi_values: vec![0.1, 0.2, 0.5, 0.7, 1.0],
            examples_per_cell: per_cell,
            master_seed: seed,
        },
        OodKind::Extrapolation => GridSpec {
            k1_values: vec![2],
            k2_values: vec![64],
            phi_values: vec![0.5],
            examples_per_cell: per_cell,
            master_seed: seed,
        },
    }
}

pub fn generate_ood_testset(kind: OodKind, per_cell: usize, master_seed: u64) -> Result<Dataset> {
    generate_dataset(&ood_grid(kind, per_cell, master_seed))
}

/// Train/validation/test block sizes for `m` rows.
pub fn split_sizes(m: usize, fractions: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let (tr, va, te) = fractions;
    if !(tr > 0.0 && va > 0.0 && te > 0.0) {
        return Err(Error::Config(format!(
            "split fractions must be positive, got {fractions:?}"
        )));
    }
    if (tr + va + te - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions must sum to 1, got {fractions:?}"
        )));
    }
    let n_val = (m as f64 * va).floor() as usize;
    let n_test = (m as f64 * te).floor() as usize;
    Ok((m - n_val - n_test, n_val, n_test))
}

/// Uniform shuffle, then contiguous train/validation/test blocks of sizes
/// `⌊m·f⌋`; the rounding remainder goes to train.
pub fn split_dataset(
    ds: &Dataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    if ds.is_empty() {
        return Err(Error::Empty("cannot split an empty dataset".into()));
    }
    let (n_train, n_val, _) = split_sizes(ds.len(), fractions)?;
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut Rng::from_seed(seed));
    Ok((
        ds.subset(&order[..n_train]),
        ds.subset(&order[n_train..n_train + n_val]),
        ds.subset(&order[n_train + n_val..]),
    ))
}

/// Like [`split_dataset`] but applies the fractions within each grid cell.
pub fn split_dataset_stratified(
    ds: &Dataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    if ds.is_empty() {
        return Err(Error::Empty("cannot split an empty dataset".into()));
    }
    split_sizes(ds.len(), fractions)?;
    let mut groups: BTreeMap<(usize, usize, u64), Vec<usize>> = BTreeMap::new();
    for (i, e) in ds.examples.iter().enumerate() {
        groups
            .entry((e.k1, e.k2(), e.phi.to_bits()))
            .or_default()
            .push(i);
    }
    let mut rng = Rng::from_seed(seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for mut members in groups.into_values() {
        members.shuffle(&mut rng);
        let (n_train, n_val, _) = split_sizes(members.len(), fractions)?;
        train.extend_from_slice(&members[..n_train]);
        val.extend_from_slice(&members[n_train..n_train + n_val]);
        test.extend_from_slice(&members[n_train + n_val..]);
    }
    for part in [&mut train, &mut val, &mut test] {
        part.shuffle(&mut rng);
    }
    Ok((ds.subset(&train), ds.subset(&val), ds.subset(&test)))
}

/// Sidecar path: same basename with a `.manifest` extension.
pub fn manifest_path(path: &Path) -> PathBuf {
    path.with_extension("manifest")
}

fn fmt_real(v: f64) -> String {
    // 17 significant digits round-trip every f64 exactly.
    format!("{v:.16e}")
}

pub fn dataset_csv(ds: &Dataset) -> String {
    let mut out = String::with_capacity(ds.len() * ds.schema.len() * 24);
    out.push_str(&ds.schema.join(","));
    out.push('\n');
    for e in &ds.examples {
        for p in &e.features {
            out.push_str(&fmt_real(*p));
            out.push(',');
        }
        let _ = writeln!(out, "{},{},{}", e.k1, fmt_real(e.phi), fmt_real(e.label));
    }
    out
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, dataset_csv(ds)).map_err(|e| Error::io(path, e))?;
    let mpath = manifest_path(path);
    fs::write(&mpath, ds.manifest.to_text()).map_err(|e| Error::io(mpath, e))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mpath = manifest_path(path);
    let mtext = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest = Manifest::parse(&mtext, &mpath)?;

    let mut lines = text.lines().enumerate();
    let header: Vec<String> = lines
        .next()
        .map(|(_, h)| h.split(',').map(|c| c.trim().to_string()).collect())
        .ok_or_else(|| Error::Schema(format!("{} is empty", path.display())))?;
    let expected = schema();
    if header != expected {
        let missing: Vec<&String> = expected.iter().filter(|c| !header.contains(c)).collect();
        let extra: Vec<&String> = header.iter().filter(|c| !expected.contains(c)).collect();
        return Err(Error::Schema(format!(
            "{}: header does not match dataset schema (missing {missing:?}, unexpected {extra:?})",
            path.display()
        )));
    }

    let perr = |line: usize, column: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message,
    };
    let mut examples = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected.len() {
            return Err(perr(
                line_no,
                fields.len().min(expected.len()) + 1,
                format!("expected {} fields, found {}", expected.len(), fields.len()),
            ));
        }
        let real = |col: usize| -> Result<f64> {
            fields[col]
                .trim()
                .parse::<f64>()
                .map_err(|e| perr(line_no, col + 1, format!("`{}`: {e}", fields[col])))
        };
        let features = (0..N_FEATURES).map(real).collect::<Result<Vec<_>>>()?;
        let k1 = fields[N_FEATURES].trim().parse::<usize>().map_err(|e| {
            perr(
                line_no,
                N_FEATURES + 1,
                format!("`{}`: {e}", fields[N_FEATURES]),
            )
        })?;
        examples.push(Example {
            features,
            k1,
            phi: real(N_FEATURES + 1)?,
            label: real(N_FEATURES + 2)?,
        });
    }

    if examples.len() != manifest.example_count() {
        return Err(Error::Schema(format!(
            "{} has {} rows but its manifest lists {}",
            path.display(),
            examples.len(),
            manifest.example_count()
        )));
    }
    Ok(Dataset {
        examples,
        schema: header,
        manifest,
    })
}
