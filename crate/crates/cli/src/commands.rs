use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use pbvgan::cgan::{augment_to_balance, generate_conditional, train_cgan, CganModel, CGAN_MAGIC};
use pbvgan::classify::{compare_methods, evaluate, train_classifier, MetricsReport, TrainingCurves};
use pbvgan::dataset::{
    apply_plan, class_histogram, default_class_names, histogram_report, stratified_split, BalancePlan, LabeledDataset,
};
use pbvgan::gan::{sample_class, train_class_gan, GanModel, LossHistory, GAN_MAGIC};
use pbvgan::neural::{read_network, write_network};
use pbvgan::pcap_ingest::ingest_directory;
use pbvgan::preprocess::{read_csv, to_pbm, write_matrix_csv};
use pbvgan::resample::{ros_oversample, smote, SmoteConfig};

use crate::config::{Augmenter, PipelineConfig};
use crate::error::{CliError, Context, Result};
use crate::manifest::{Artifact, RunManifest, StageRecord};

pub const PBM_FILE: &str = "pbm.csv";
pub const INGEST_REPORT_FILE: &str = "ingest_report.toml";
pub const SPLIT_FILES: [&str; 3] = ["train.csv", "validation.csv", "test.csv"];
pub const BALANCED_FILE: &str = "balanced.csv";
pub const PROVENANCE_FILE: &str = "balanced.provenance.csv";
pub const PLAN_FILE: &str = "plan.toml";
pub const GAN_DIR: &str = "gan";
pub const CGAN_CHECKPOINT: &str = "cgan.ckpt";
pub const CGAN_LOSS_FILE: &str = "cgan_loss.csv";
pub const GENERATED_FILE: &str = "generated.csv";
pub const CLASSIFIER_CHECKPOINT: &str = "classifier.ckpt";
pub const CURVES_FILE: &str = "classifier_curves.csv";
pub const METRICS_FILE: &str = "metrics.toml";
pub const METRICS_CSV: &str = "metrics.csv";
pub const CONFUSION_FILE: &str = "confusion.csv";

/// Shared state of one invocation: effective config and output directory.
pub struct Run {
    pub config: PipelineConfig,
    pub out: PathBuf,
}

fn gan_checkpoint(dir: &Path, class: usize) -> PathBuf {
    dir.join(format!("class_{class}.ckpt"))
}

fn gan_loss_file(dir: &Path, class: usize) -> PathBuf {
    dir.join(format!("class_{class}_loss.csv"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).ctx(parent.display().to_string())?;
    }
    Ok(BufWriter::new(File::create(path).ctx(path.display().to_string())?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).ctx(path.display().to_string())?;
    w.flush().ctx(path.display().to_string())
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::data(format!("{what} not found: {}", path.display())))
    }
}

pub fn write_dataset(ds: &LabeledDataset, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    write_matrix_csv(ds.pbm(), ds.labels(), &mut w).ctx(path.display().to_string())?;
    w.flush().ctx(path.display().to_string())
}

fn write_provenance(ds: &LabeledDataset, path: &Path) -> Result<()> {
    let mut text = String::from("provenance\n");
    for p in ds.provenance() {
        text.push_str(&p.to_string());
        text.push('\n');
    }
    write_text(path, &text)
}

fn write_loss(history: &LossHistory, path: &Path) -> Result<()> {
    write_text(path, &history.to_csv())
}

fn curves_csv(curves: &TrainingCurves) -> String {
    let mut out = String::from("epoch,train_loss,validation_loss,validation_accuracy\n");
    for (i, ((t, v), a)) in curves
        .train_loss
        .iter()
        .zip(&curves.validation_loss)
        .zip(&curves.validation_accuracy)
        .enumerate()
    {
        out.push_str(&format!("{i},{t},{v},{a}\n"));
    }
    out
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn or_default(&self, given: Option<PathBuf>, name: &str) -> PathBuf {
        given.unwrap_or_else(|| self.path(name))
    }

    /// Class table from the config, or `class0..` covering every label seen
    /// in the config inputs and in `labels`.
    fn class_names(&self, labels: &[usize]) -> Vec<String> {
        if !self.config.classes.is_empty() {
            return self.config.classes.clone();
        }
        let from_inputs = self.config.inputs.iter().map(|i| i.label + 1).max().unwrap_or(0);
        let from_data = labels.iter().map(|l| l + 1).max().unwrap_or(0);
        default_class_names(from_inputs.max(from_data))
    }

    pub fn load_dataset(&self, path: &Path) -> Result<LabeledDataset> {
        require(path, "dataset")?;
        let file = File::open(path).ctx(path.display().to_string())?;
        let rows = read_csv(BufReader::new(file)).ctx(path.display().to_string())?;
        let names = self.class_names(&rows.labels);
        LabeledDataset::new(rows.pbm, rows.labels, names).ctx(path.display().to_string())
    }

    fn stage(&self, name: &str, method: Option<&str>, start: Instant, inputs: &[&Path], outputs: &[&Path]) -> Result<()> {
        std::fs::create_dir_all(&self.out).ctx(self.out.display().to_string())?;
        let snapshot = self.config.to_toml();
        let mut manifest = RunManifest::load(&self.out)?.unwrap_or_else(|| RunManifest::new(snapshot.clone()));
        manifest.config = snapshot;
        manifest.tool_version = env!("CARGO_PKG_VERSION").to_string();
        let hash_all = |paths: &[&Path]| paths.iter().map(|p| Artifact::of(p)).collect::<Result<Vec<_>>>();
        manifest.record(StageRecord {
            name: name.to_string(),
            seed: self.config.seed,
            method: method.map(str::to_string),
            seconds: start.elapsed().as_secs_f64(),
            inputs: hash_all(inputs)?,
            outputs: hash_all(outputs)?,
        });
        manifest.save(&self.out)
    }

    pub fn ingest(&self) -> Result<()> {
        let start = Instant::now();
        let config = &self.config;
        if config.inputs.is_empty() {
            return Err(CliError::usage("no inputs configured; add [[inputs]] entries with path and label"));
        }
        config.preprocess.validate().map_err(CliError::usage)?;
        for input in &config.inputs {
            require(&input.path, "input capture")?;
        }
        let output = ingest_directory(Path::new(""), &config.inputs, &config.ingest)?;
        let pbm = to_pbm(output.packets.iter().map(|p| p.feature_bytes()), &config.preprocess);
        let labels: Vec<usize> = output.packets.iter().map(|p| p.label).collect();
        let ds = LabeledDataset::new(pbm, labels, self.class_names(&[]))?;
        let csv = self.path(PBM_FILE);
        let report = self.path(INGEST_REPORT_FILE);
        write_dataset(&ds, &csv)?;
        write_text(&report, &output.report.to_toml())?;
        info!("ingested {} packets, dropped {:?}", output.report.total_kept(), output.report.dropped_by_reason());
        println!("kept {} packets from {} files", ds.len(), output.report.files.len());
        let inputs: Vec<&Path> = config.inputs.iter().map(|i| i.path.as_path()).collect();
        self.stage("ingest", None, start, &inputs, &[&csv, &report])
    }

    pub fn stats(&self, data: Option<PathBuf>) -> Result<()> {
        let ds = self.load_dataset(&self.or_default(data, PBM_FILE))?;
        print!("{}", histogram_report(&ds));
        Ok(())
    }

    pub fn split(&self, data: Option<PathBuf>) -> Result<()> {
        let start = Instant::now();
        let input = self.or_default(data, PBM_FILE);
        let ds = self.load_dataset(&input)?;
        let split = stratified_split(&ds, self.config.split.fractions, self.config.seed)?;
        let paths = SPLIT_FILES.map(|f| self.path(f));
        for (part, path) in [&split.train, &split.validation, &split.test].into_iter().zip(&paths) {
            write_dataset(part, path)?;
        }
        println!(
            "train {} / validation {} / test {}",
            split.train.len(),
            split.validation.len(),
            split.test.len()
        );
        let outs: Vec<&Path> = paths.iter().map(PathBuf::as_path).collect();
        self.stage("split", None, start, &[&input], &outs)
    }

    fn plan(&self, ds: &LabeledDataset) -> Result<BalancePlan> {
        let dist = class_histogram(ds);
        let balance = &self.config.balance;
        if balance.targets.is_empty() {
            Ok(BalancePlan::uniform(&dist, balance.target_per_class))
        } else {
            BalancePlan::new(&dist, balance.targets.clone()).map_err(|e| CliError::usage(format!("balance.targets: {e}")))
        }
    }

    fn gan_config(&self, ds: &LabeledDataset) -> pbvgan::gan::GanConfig {
        pbvgan::gan::GanConfig {
            data_dim: ds.width(),
            ..self.config.gan.clone()
        }
    }

    fn cgan_config(&self, ds: &LabeledDataset) -> pbvgan::cgan::CganConfig {
        pbvgan::cgan::CganConfig {
            data_dim: ds.width(),
            label_dim: ds.num_classes(),
            ..self.config.cgan.clone()
        }
    }

    fn train_gan_classes(&self, ds: &LabeledDataset, classes: &[usize], dir: &Path) -> Result<Vec<PathBuf>> {
        let config = self.gan_config(ds);
        let mut written = Vec::new();
        for &class in classes {
            info!("training GAN for class {class} ({} steps)", config.steps);
            let (model, history) = train_class_gan(ds, class, &config)?;
            let ckpt = gan_checkpoint(dir, class);
            let mut w = create(&ckpt)?;
            model.write(&mut w).ctx(ckpt.display().to_string())?;
            w.flush().ctx(ckpt.display().to_string())?;
            let loss = gan_loss_file(dir, class);
            write_loss(&history, &loss)?;
            written.push(ckpt);
            written.push(loss);
        }
        Ok(written)
    }

    fn train_cgan_to(&self, ds: &LabeledDataset, ckpt: &Path) -> Result<(CganModel, PathBuf)> {
        let config = self.cgan_config(ds);
        info!("training conditional GAN ({} steps)", config.steps);
        let (model, history) = train_cgan(ds, &config)?;
        let mut w = create(ckpt)?;
        model.write(&mut w).ctx(ckpt.display().to_string())?;
        w.flush().ctx(ckpt.display().to_string())?;
        let loss = ckpt.with_file_name(CGAN_LOSS_FILE);
        write_loss(&history, &loss)?;
        Ok((model, loss))
    }

    pub fn train_gan(&self, data: Option<PathBuf>, classes: Vec<usize>) -> Result<()> {
        let start = Instant::now();
        let input = self.or_default(data, SPLIT_FILES[0]);
        let ds = self.load_dataset(&input)?;
        let classes = if classes.is_empty() { (0..ds.num_classes()).collect() } else { classes };
        let written = self.train_gan_classes(&ds, &classes, &self.path(GAN_DIR))?;
        println!("trained {} class GANs", classes.len());
        let outs: Vec<&Path> = written.iter().map(PathBuf::as_path).collect();
        self.stage("train-gan", Some("GAN"), start, &[&input], &outs)
    }

    pub fn train_cgan(&self, data: Option<PathBuf>) -> Result<()> {
        let start = Instant::now();
        let input = self.or_default(data, SPLIT_FILES[0]);
        let ds = self.load_dataset(&input)?;
        let ckpt = self.path(CGAN_CHECKPOINT);
        let (model, loss) = self.train_cgan_to(&ds, &ckpt)?;
        println!("trained conditional GAN for {} steps", model.steps_trained);
        self.stage("train-cgan", Some("CGAN"), start, &[&input], &[&ckpt, &loss])
    }

    pub fn augment(&self, data: Option<PathBuf>, method: Option<Augmenter>, checkpoint: Option<PathBuf>, train: bool) -> Result<()> {
        let start = Instant::now();
        let method = method.unwrap_or(self.config.augment.method);
        let input = self.or_default(data, SPLIT_FILES[0]);
        let ds = self.load_dataset(&input)?;
        let plan = self.plan(&ds)?;
        for c in 0..ds.num_classes() {
            if method != Augmenter::None && plan.deficit(c) > 0 && ds.class_indices(c).is_empty() {
                return Err(CliError::data(format!(
                    "class {:?} has no rows; the plan cannot be met",
                    ds.class_names()[c]
                )));
            }
        }
        let seed = self.config.seed;
        let mut extra_inputs: Vec<PathBuf> = Vec::new();
        let mut extra_outputs: Vec<PathBuf> = Vec::new();
        let synthetic = match method {
            Augmenter::None => LabeledDataset::empty(ds.width(), ds.class_names().to_vec()),
            Augmenter::Ros => ros_oversample(&ds, &plan, seed)?,
            Augmenter::Smote => smote(
                &ds,
                &plan,
                &SmoteConfig {
                    k: self.config.augment.smote_k,
                    seed,
                },
            )?,
            Augmenter::Gan => {
                let dir = checkpoint.unwrap_or_else(|| self.path(GAN_DIR));
                let needed: Vec<usize> = (0..ds.num_classes()).filter(|&c| plan.deficit(c) > 0).collect();
                if train {
                    extra_outputs = self.train_gan_classes(&ds, &needed, &dir)?;
                }
                let mut out = LabeledDataset::empty(ds.width(), ds.class_names().to_vec());
                for &class in &needed {
                    let ckpt = gan_checkpoint(&dir, class);
                    require(&ckpt, "GAN checkpoint (train it with train-gan or pass --train)")?;
                    let model = GanModel::read(&mut BufReader::new(File::open(&ckpt)?)).ctx(ckpt.display().to_string())?;
                    let rows = sample_class(&model, &ds, class, plan.deficit(class), self.gan_config(&ds).seed)?;
                    out = pbvgan::dataset::merge(&out, &rows)?;
                    if !train {
                        extra_inputs.push(ckpt);
                    }
                }
                out
            }
            Augmenter::Cgan => {
                let ckpt = checkpoint.unwrap_or_else(|| self.path(CGAN_CHECKPOINT));
                let model = if train {
                    let (model, loss) = self.train_cgan_to(&ds, &ckpt)?;
                    extra_outputs.extend([ckpt.clone(), loss]);
                    model
                } else {
                    require(&ckpt, "conditional GAN checkpoint (train it with train-cgan or pass --train)")?;
                    extra_inputs.push(ckpt.clone());
                    CganModel::read(&mut BufReader::new(File::open(&ckpt)?)).ctx(ckpt.display().to_string())?
                };
                augment_to_balance(&model, &ds, &plan, seed)?
            }
        };
        let balanced = match method {
            Augmenter::None => ds.clone(),
            _ => apply_plan(&ds, &plan, &synthetic, seed)?,
        };
        let csv = self.path(BALANCED_FILE);
        let provenance = self.path(PROVENANCE_FILE);
        let plan_file = self.path(PLAN_FILE);
        write_dataset(&balanced, &csv)?;
        write_provenance(&balanced, &provenance)?;
        write_text(&plan_file, &plan.to_toml(ds.class_names()))?;
        println!(
            "{}: {} rows ({} synthetic), per class {:?}",
            method.name(),
            balanced.len(),
            balanced.synthetic_count(),
            class_histogram(&balanced).counts
        );
        let mut inputs: Vec<&Path> = vec![&input];
        inputs.extend(extra_inputs.iter().map(PathBuf::as_path));
        let mut outputs: Vec<&Path> = vec![&csv, &provenance, &plan_file];
        outputs.extend(extra_outputs.iter().map(PathBuf::as_path));
        self.stage("augment", Some(method.name()), start, &inputs, &outputs)
    }

    pub fn generate(&self, checkpoint: PathBuf, class: usize, count: usize, output: Option<PathBuf>) -> Result<()> {
        let start = Instant::now();
        require(&checkpoint, "checkpoint")?;
        let bytes = std::fs::read(&checkpoint).ctx(checkpoint.display().to_string())?;
        let ds = if bytes.starts_with(CGAN_MAGIC) {
            let model = CganModel::read(&mut bytes.as_slice()).ctx(checkpoint.display().to_string())?;
            let rows = generate_conditional(&model, class, count, self.config.seed)?;
            LabeledDataset::new(rows, vec![class; count], model.class_names.clone())?
        } else if bytes.starts_with(GAN_MAGIC) {
            let model = GanModel::read(&mut bytes.as_slice()).ctx(checkpoint.display().to_string())?;
            let template = LabeledDataset::empty(model.data_dim(), self.class_names(&[class]));
            sample_class(&model, &template, class, count, self.config.seed)?
        } else {
            return Err(CliError::data(format!("{}: not a GAN or conditional GAN checkpoint", checkpoint.display())));
        };
        let out = self.or_default(output, GENERATED_FILE);
        write_dataset(&ds, &out)?;
        println!("wrote {count} rows for class {class} to {}", out.display());
        self.stage("generate", None, start, &[&checkpoint], &[&out])
    }

    pub fn classify(&self, train: Option<PathBuf>, validation: Option<PathBuf>) -> Result<()> {
        let start = Instant::now();
        let train_path = self.or_default(train, BALANCED_FILE);
        let validation_path = self.or_default(validation, SPLIT_FILES[1]);
        let train = self.load_dataset(&train_path)?;
        let validation = self.load_dataset(&validation_path)?;
        let (net, curves) = train_classifier(&train, &validation, &self.config.classifier)?;
        let ckpt = self.path(CLASSIFIER_CHECKPOINT);
        let mut w = create(&ckpt)?;
        write_network(&net, &mut w).ctx(ckpt.display().to_string())?;
        w.flush().ctx(ckpt.display().to_string())?;
        let curves_path = self.path(CURVES_FILE);
        write_text(&curves_path, &curves_csv(&curves))?;
        println!(
            "trained {} epochs, best epoch {}",
            curves.train_loss.len(),
            curves.best_epoch.map_or("-".to_string(), |e| e.to_string())
        );
        self.stage("classify", None, start, &[&train_path, &validation_path], &[&ckpt, &curves_path])
    }

    pub fn evaluate(&self, model: Option<PathBuf>, test: Option<PathBuf>, method: Option<String>) -> Result<()> {
        let start = Instant::now();
        let model_path = self.or_default(model, CLASSIFIER_CHECKPOINT);
        let test_path = self.or_default(test, SPLIT_FILES[2]);
        require(&model_path, "classifier checkpoint")?;
        let net = read_network(&mut BufReader::new(File::open(&model_path)?)).ctx(model_path.display().to_string())?;
        let test = self.load_dataset(&test_path)?;
        let (cm, mut report) = evaluate(&net, &test)?;
        report.method = method.unwrap_or_else(|| self.config.augment.method.name().to_string());
        report.seed = self.config.seed;
        let metrics = self.path(METRICS_FILE);
        let metrics_csv = self.path(METRICS_CSV);
        let confusion = self.path(CONFUSION_FILE);
        write_text(&metrics, &report.to_toml())?;
        write_text(&metrics_csv, &report.to_csv())?;
        write_text(&confusion, &cm.to_csv(test.class_names()))?;
        println!(
            "{}: accuracy {:.4}, macro precision {:.4}, recall {:.4}, F1 {:.4}",
            report.method, report.accuracy, report.macro_precision, report.macro_recall, report.macro_f1
        );
        self.stage(
            "evaluate",
            Some(&report.method),
            start,
            &[&model_path, &test_path],
            &[&metrics, &metrics_csv, &confusion],
        )
    }
}

/// Loss histories in a run directory, as (file name, path).
fn loss_files(dir: &Path) -> Vec<(String, PathBuf)> {
    let mut found = Vec::new();
    let cgan = dir.join(CGAN_LOSS_FILE);
    if cgan.is_file() {
        found.push((CGAN_LOSS_FILE.to_string(), cgan));
    }
    if let Ok(entries) = std::fs::read_dir(dir.join(GAN_DIR)) {
        let mut gan: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with("_loss.csv"))
            .collect();
        gan.sort();
        for p in gan {
            let name = format!("gan_{}", p.file_name().unwrap_or_default().to_string_lossy());
            found.push((name, p));
        }
    }
    found
}

/// Comparison table over run directories, each holding a metrics report.
/// Loss histories found in the runs are copied next to the table.
pub fn report(run_dirs: &[PathBuf], out: &Path) -> Result<()> {
    if run_dirs.is_empty() {
        return Err(CliError::usage("report needs at least one run directory"));
    }
    let mut reports = Vec::new();
    for dir in run_dirs {
        let path = dir.join(METRICS_FILE);
        require(&path, "metrics report")?;
        let text = std::fs::read_to_string(&path).ctx(path.display().to_string())?;
        reports.push(MetricsReport::from_toml(&text).ctx(path.display().to_string())?);
    }
    let comparison = compare_methods(&reports)?;
    std::fs::create_dir_all(out).ctx(out.display().to_string())?;
    write_text(&out.join("comparison.txt"), &comparison.to_text())?;
    write_text(&out.join("comparison.csv"), &comparison.to_csv())?;
    write_text(&out.join("per_class.csv"), &comparison.per_class_csv())?;
    for dir in run_dirs {
        let run = dir.file_name().map_or_else(|| "run".to_string(), |n| n.to_string_lossy().into_owned());
        for (name, path) in loss_files(dir) {
            let dest = out.join("loss").join(format!("{run}_{name}"));
            if let Some(parent) = dest.parent() {
                std::fs::create_dir_all(parent).ctx(parent.display().to_string())?;
            }
            std::fs::copy(&path, &dest).ctx(path.display().to_string())?;
        }
    }
    print!("{}", comparison.to_text());
    Ok(())
}
