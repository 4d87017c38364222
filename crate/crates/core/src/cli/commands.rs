use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::datagen::{
    dataset_csv, generate_dataset, generate_ood_testset, load_dataset, save_dataset, split_dataset,
    split_dataset_stratified, Dataset, OodKind,
};
use crate::error::{Error, Result};
use crate::extratrees::{permutation_importance, select_top_features, FeatureImportance, Forest};
use crate::metrics::{fmt_score, r2, ConstantPredictor, EvalReport};
use crate::seed::{derive_seed, stage};

pub const DATASET_FILE: &str = "dataset.csv";
pub const TRAIN_FILE: &str = "train.csv";
pub const VAL_FILE: &str = "val.csv";
pub const TEST_FILE: &str = "test.csv";
pub const MODEL_FILE: &str = "model.json";
pub const REDUCED_MODEL_FILE: &str = "model_reduced.json";
pub const TRAIN_REPORT_FILE: &str = "train_report.txt";
pub const REDUCE_REPORT_FILE: &str = "reduce_report.txt";
pub const IMPORTANCE_FILE: &str = "importance.txt";

/// Report lines that legitimately differ between identical runs.
pub const VOLATILE_KEYS: &[&str] = &["fit_seconds", "created_unix"];

pub fn ood_file(kind: OodKind) -> String {
    format!("ood{}.csv", kind as u32)
}

pub fn eval_report_file(data: &Path) -> String {
    let stem = data.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    format!("eval_{stem}.txt")
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(
        || path.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    )
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_dataset(ds: &Dataset, path: &Path) -> Result<String> {
    let csv = dataset_csv(ds);
    write(path, &csv)?;
    write(&crate::datagen::manifest_path(path), &ds.manifest.to_text())?;
    Ok(sha256_hex(csv.as_bytes()))
}

fn describe_cells(ds: &Dataset) -> String {
    let mut s = String::new();
    for c in &ds.manifest.cells {
        let _ = writeln!(
            s,
            "  k1={} k2={} phi={} count={}",
            c.k1, c.k2, c.phi, c.count
        );
    }
    s
}

/// Generates the configured grid into `<out>/dataset.csv`.
pub fn generate(cfg: &ExperimentConfig) -> Result<String> {
    ensure_dir(&cfg.out)?;
    let ds = generate_dataset(&cfg.grid())?;
    let path = cfg.out.join(DATASET_FILE);
    let sum = write_dataset(&ds, &path)?;
    Ok(format!(
        "wrote {} ({} examples)\n{}sha256 = {sum}\n",
        path.display(),
        ds.len(),
        describe_cells(&ds)
    ))
}

/// Generates out-of-range test sets. Both kinds when `kind` is `None`.
pub fn oodgen(cfg: &ExperimentConfig, kind: Option<OodKind>) -> Result<String> {
    ensure_dir(&cfg.out)?;
    let kinds = match kind {
        Some(k) => vec![k],
        None => vec![OodKind::Interpolation, OodKind::Extrapolation],
    };
    let mut msg = String::new();
    for k in kinds {
        let ds = generate_ood_testset(k, cfg.ood_per_cell, cfg.seed)?;
        let path = cfg.out.join(ood_file(k));
        let sum = write_dataset(&ds, &path)?;
        let _ = write!(
            msg,
            "wrote {} ({} examples)\n{}sha256 = {sum}\n",
            path.display(),
            ds.len(),
            describe_cells(&ds)
        );
    }
    Ok(msg)
}

fn split_parts(cfg: &ExperimentConfig, data: &Path) -> Result<(Dataset, Dataset, Dataset)> {
    let ds = load_dataset(data)?;
    let seed = derive_seed(cfg.seed, &[stage::SPLIT]);
    if cfg.stratified {
        split_dataset_stratified(&ds, cfg.fractions(), seed)
    } else {
        split_dataset(&ds, cfg.fractions(), seed)
    }
}

/// Splits `data` (default `<out>/dataset.csv`) into train/val/test files.
pub fn split(cfg: &ExperimentConfig, data: Option<&Path>) -> Result<String> {
    ensure_dir(&cfg.out)?;
    let data = data.map_or_else(|| cfg.out.join(DATASET_FILE), Path::to_path_buf);
    let (train, val, test) = split_parts(cfg, &data)?;
    let mut msg = String::new();
    for (ds, name) in [(&train, TRAIN_FILE), (&val, VAL_FILE), (&test, TEST_FILE)] {
        let path = cfg.out.join(name);
        save_dataset(ds, &path)?;
        let _ = writeln!(msg, "wrote {} ({} examples)", path.display(), ds.len());
    }
    Ok(msg)
}

fn dummy_lines(train_labels: &[f64], val_labels: &[f64]) -> Result<String> {
    let mean = ConstantPredictor::fit_mean(train_labels)?;
    let two = ConstantPredictor::constant(2.0);
    let mut s = String::new();
    let _ = writeln!(s, "dummy_mean_value = {}", mean.value);
    let _ = writeln!(
        s,
        "dummy_mean_val_r2 = {}",
        fmt_score(r2(val_labels, &mean.predict(val_labels.len()))?)
    );
    let _ = writeln!(
        s,
        "dummy_const2_val_r2 = {}",
        fmt_score(r2(val_labels, &two.predict(val_labels.len()))?)
    );
    Ok(s)
}

/// Splits the dataset, fits the forest on the training part and writes
/// `model.json` plus `train_report.txt`.
pub fn train(cfg: &ExperimentConfig, data: Option<&Path>) -> Result<String> {
    split(cfg, data)?;
    let train = load_dataset(&cfg.out.join(TRAIN_FILE))?;
    let val = load_dataset(&cfg.out.join(VAL_FILE))?;
    let columns = cfg.training_columns()?;
    let x = train.to_matrix(&columns)?;
    let y = train.labels();
    let forest_cfg = cfg.forest(derive_seed(cfg.seed, &[stage::FOREST]));

    let started = Instant::now();
    let forest = Forest::fit(&x, &y, &forest_cfg)?;
    let fit_seconds = started.elapsed().as_secs_f64();
    forest.save(&cfg.out.join(MODEL_FILE))?;

    let train_rep = EvalReport::compute(&y, &forest.predict(&x)?)?;
    let val_y = val.labels();
    let val_rep = EvalReport::compute(&val_y, &forest.predict(&val.to_matrix(&columns)?)?)?;

    let mut rep = String::from("# qmarkov training report\n");
    let _ = writeln!(rep, "columns = {}", columns.len());
    let _ = writeln!(rep, "include_k1 = {}", cfg.include_k1);
    let _ = writeln!(rep, "include_phi = {}", cfg.include_phi);
    let _ = writeln!(rep, "trees = {}", forest_cfg.n_trees);
    let _ = writeln!(rep, "bootstrap = {}", forest_cfg.bootstrap);
    rep.push_str(&train_rep.to_kv("train"));
    rep.push_str(&val_rep.to_kv("val"));
    if forest_cfg.bootstrap {
        let oob = forest.oob_score(&x, &y)?;
        let _ = writeln!(rep, "oob_r2 = {}", fmt_score(oob.r2));
        let _ = writeln!(rep, "oob_coverage = {}", oob.coverage());
    } else {
        rep.push_str("oob_r2 = undefined\n");
    }
    rep.push_str(&dummy_lines(&y, &val_y)?);
    let _ = writeln!(rep, "fit_seconds = {fit_seconds:.3}");
    write(&cfg.out.join(TRAIN_REPORT_FILE), &rep)?;
    Ok(rep)
}

fn cell_breakdown(ds: &Dataset, pred: &[f64]) -> String {
    let mut cells: BTreeMap<(usize, usize, u64), Vec<f64>> = BTreeMap::new();
    for (e, &p) in ds.examples.iter().zip(pred) {
        cells
            .entry((e.k1, e.k2(), e.phi.to_bits()))
            .or_default()
            .push(p);
    }
    let mut s = String::new();
    for ((k1, k2, phi), ps) in cells {
        let n = ps.len() as f64;
        let mean = ps.iter().sum::<f64>() / n;
        let std = (ps.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n).sqrt();
        let _ = writeln!(
            s,
            "cell = k1:{k1} k2:{k2} phi:{} n:{} prediction_mean:{mean} prediction_std:{std}",
            f64::from_bits(phi),
            ps.len()
        );
    }
    s
}

/// Scores `model` on `data`, writing `<out>/eval_<data stem>.txt`.
pub fn evaluate(
    cfg: &ExperimentConfig,
    model: Option<&Path>,
    data: Option<&Path>,
) -> Result<String> {
    ensure_dir(&cfg.out)?;
    let model = model.map_or_else(|| cfg.out.join(MODEL_FILE), Path::to_path_buf);
    let data = data.map_or_else(|| cfg.out.join(TEST_FILE), Path::to_path_buf);
    let forest = Forest::load(&model)?;
    let ds = load_dataset(&data)?;
    let pred = forest.predict(&ds.to_matrix(forest.schema())?)?;
    let rep = EvalReport::compute(&ds.labels(), &pred)?;

    let mut s = String::from("# qmarkov evaluation report\n");
    let _ = writeln!(s, "model = {}", file_name(&model));
    let _ = writeln!(s, "data = {}", file_name(&data));
    s.push_str(&rep.to_kv(""));
    s.push_str(&cell_breakdown(&ds, &pred));
    write(&cfg.out.join(eval_report_file(&data)), &s)?;
    Ok(s)
}

fn importance_text(ranked: &[FeatureImportance]) -> String {
    ranked
        .iter()
        .map(|f| format!("{}\t{}\n", f.name, f.mean_drop))
        .collect()
}

fn parse_importance(text: &str, path: &Path, forest: &Forest) -> Result<Vec<FeatureImportance>> {
    let mut ranked = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let perr = |column: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            column,
            message,
        };
        let (name, value) = line
            .split_once('\t')
            .ok_or_else(|| perr(1, "expected `name<TAB>value`".into()))?;
        let mean_drop = value
            .trim()
            .parse()
            .map_err(|_| perr(name.len() + 2, format!("invalid number {value:?}")))?;
        let index = forest
            .schema()
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| {
                Error::Schema(format!("{}: feature {name:?} not in model", path.display()))
            })?;
        ranked.push(FeatureImportance {
            index,
            name: name.to_string(),
            mean_drop,
            std_drop: 0.0,
        });
    }
    if ranked.len() != forest.schema().len() {
        return Err(Error::Schema(format!(
            "{} ranks {} features, model has {}",
            path.display(),
            ranked.len(),
            forest.schema().len()
        )));
    }
    Ok(ranked)
}

/// Permutation importance of `model` on `data` (default `<out>/val.csv`),
/// written to `<out>/importance.txt` in decreasing order.
pub fn importance(
    cfg: &ExperimentConfig,
    model: Option<&Path>,
    data: Option<&Path>,
) -> Result<String> {
    ensure_dir(&cfg.out)?;
    let model = model.map_or_else(|| cfg.out.join(MODEL_FILE), Path::to_path_buf);
    let data = data.map_or_else(|| cfg.out.join(VAL_FILE), Path::to_path_buf);
    let forest = Forest::load(&model)?;
    let ds = load_dataset(&data)?;
    let x = ds.to_matrix(forest.schema())?;
    let seed = derive_seed(cfg.seed, &[stage::IMPORTANCE]);
    let ranked = permutation_importance(&forest, &x, &ds.labels(), cfg.repeats, seed)?;
    let text = importance_text(&ranked);
    write(&cfg.out.join(IMPORTANCE_FILE), &text)?;
    Ok(text)
}

/// Retrains on the `top_k` most important columns of the full model and
/// compares both on the validation split.
pub fn reduce(cfg: &ExperimentConfig, model: Option<&Path>) -> Result<String> {
    let model = model.map_or_else(|| cfg.out.join(MODEL_FILE), Path::to_path_buf);
    let forest = Forest::load(&model)?;
    let k = cfg.top_k;
    if k > forest.schema().len() {
        return Err(Error::Config(format!(
            "top_k = {k} exceeds the model's {} features",
            forest.schema().len()
        )));
    }
    let imp_path = cfg.out.join(IMPORTANCE_FILE);
    if !imp_path.exists() {
        importance(cfg, Some(&model), None)?;
    }
    let text = fs::read_to_string(&imp_path).map_err(|e| Error::io(&imp_path, e))?;
    let ranked = parse_importance(&text, &imp_path, &forest)?;
    let keep = select_top_features(&ranked, k)?;
    let columns: Vec<String> = keep.iter().map(|&j| forest.schema()[j].clone()).collect();

    let train = load_dataset(&cfg.out.join(TRAIN_FILE))?;
    let val = load_dataset(&cfg.out.join(VAL_FILE))?;
    let reduced = Forest::fit(
        &train.to_matrix(&columns)?,
        &train.labels(),
        forest.config(),
    )?;
    reduced.save(&cfg.out.join(REDUCED_MODEL_FILE))?;

    let val_y = val.labels();
    let full_r2 = r2(&val_y, &forest.predict(&val.to_matrix(forest.schema())?)?)?;
    let reduced_r2 = r2(&val_y, &reduced.predict(&val.to_matrix(&columns)?)?)?;

    let mut s = String::from("# qmarkov feature reduction report\n");
    let _ = writeln!(s, "full_features = {}", forest.schema().len());
    let _ = writeln!(s, "reduced_features = {k}");
    let _ = writeln!(s, "full_val_r2 = {}", fmt_score(full_r2));
    let _ = writeln!(s, "reduced_val_r2 = {}", fmt_score(reduced_r2));
    if let (Some(a), Some(b)) = (full_r2, reduced_r2) {
        let _ = writeln!(s, "val_r2_loss = {}", a - b);
    }
    let _ = writeln!(s, "kept = {}", columns.join(","));
    write(&cfg.out.join(REDUCE_REPORT_FILE), &s)?;
    Ok(s)
}

/// Drops report lines whose key is listed in [`VOLATILE_KEYS`].
pub fn strip_volatile(text: &str) -> String {
    text.lines()
        .filter(|l| {
            let key = l.split('=').next().unwrap_or("").trim();
            !VOLATILE_KEYS.contains(&key)
        })
        .map(|l| format!("{l}\n"))
        .collect()
}
