use std::fs;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};

use super::artifacts::*;
use super::config::{DataSource, ExperimentConfig};
use super::report::render_report;
use crate::bayes::{build_pbcnn, load_checkpoint, save_checkpoint, train_with_progress, Dataset, NetworkSpec, Pbcnn, TrainConfig};
use crate::diffcore::Array;
use crate::error::{Error, Result};
use crate::gate::{
    curve_csv, gate_decision, micro_prf, ood_confusion, risk_coverage_curve, roc_auroc, roc_csv, ThresholdTable,
};
use crate::rng::{derive_seed, seeded};
use crate::signals::{
    condition_name, generate_synthetic_fleet, generate_uniform_images, inject_fault, peak_to_peak, read_dataset_file,
    read_signal_csv, read_signal_raw, segment_signal, write_dataset_file, write_signal_raw, FaultSpec, SignalRecord,
    Spectrogram,
};
use crate::uq::{predict_mc_batch, write_uncertainty_csv, UncertaintyRecord, UncertaintySummary};

/// Label stored for images that belong to no class.
const NO_CLASS: u32 = u32::MAX;

/// One configured experiment bound to an output directory. Stages read
/// their inputs from disk, so each can run on its own once its
/// predecessors have.
pub struct Pipeline<'a> {
    config: ExperimentConfig,
    layout: Layout,
    log: Box<dyn FnMut(&str) + 'a>,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        e @ Error::Validation { .. } => e,
        e @ Error::Stage { .. } => e,
        e => Error::Stage {
            stage: name,
            source: Box::new(e),
        },
    })
}

impl<'a> Pipeline<'a> {
    /// Validates the configuration; nothing is written until a stage runs.
    pub fn new(config: ExperimentConfig, out_dir: impl Into<PathBuf>) -> Result<Self> {
        config.validate()?;
        Ok(Pipeline {
            config,
            layout: Layout::new(out_dir),
            log: Box::new(|_| {}),
        })
    }

    pub fn with_logger(mut self, log: impl FnMut(&str) + 'a) -> Self {
        self.log = Box::new(log);
        self
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    fn seed(&self, tag: &str) -> u64 {
        derive_seed(self.config.seed, tag, 0)
    }

    pub fn synth(&mut self) -> Result<Vec<PathBuf>> {
        stage("synth", self.synth_inner())
    }

    fn synth_inner(&mut self) -> Result<Vec<PathBuf>> {
        let DataSource::Synthetic { n_classes, signals_per_class, duration_s } = self.config.data.source else {
            (self.log)("synth: data source is a file list, nothing to generate");
            return Ok(Vec::new());
        };
        let records = generate_synthetic_fleet(n_classes, signals_per_class, duration_s, self.seed("fleet"))?;
        let dir = self.layout.signals_dir();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut paths = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            let p = dir.join(format!("class{}_{:04}.f32", r.class_label, i % signals_per_class));
            write_signal_raw(&p, r)?;
            paths.push(p);
        }
        (self.log)(&format!("synth: wrote {} signals to {}", paths.len(), dir.display()));
        Ok(paths)
    }

    fn load_signals(&self) -> Result<Vec<SignalRecord>> {
        let paths: Vec<PathBuf> = match &self.config.data.source {
            DataSource::Files { paths } => paths.clone(),
            DataSource::Synthetic { .. } => {
                let dir = self.layout.signals_dir();
                if !dir.exists() {
                    return Err(Error::MissingArtifact(dir));
                }
                let mut v: Vec<PathBuf> = fs::read_dir(&dir)
                    .map_err(|e| Error::io(&dir, e))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "f32"))
                    .collect();
                v.sort();
                v
            }
        };
        paths
            .iter()
            .map(|p| match p.extension().and_then(|x| x.to_str()) {
                Some("csv") => read_signal_csv(p),
                _ => read_signal_raw(p),
            })
            .collect()
    }

    pub fn preprocess(&mut self) -> Result<PreprocessInfo> {
        stage("preprocess", self.preprocess_inner())
    }

    fn preprocess_inner(&mut self) -> Result<PreprocessInfo> {
        let cfg = self.config.clone();
        let records = self.load_signals()?;
        if records.is_empty() {
            return Err(Error::contract("no signals to preprocess"));
        }
        let sample_rate = records[0].sample_rate;
        if records.iter().any(|r| r.sample_rate != sample_rate) {
            return Err(Error::contract("signals have mixed sample rates"));
        }
        let seg_len = cfg.data.spectrogram.segment_length;
        let mut by_class: std::collections::BTreeMap<usize, Vec<Array>> = Default::default();
        let mut conditions: std::collections::BTreeMap<usize, String> = Default::default();
        for r in &records {
            let segs = by_class.entry(r.class_label).or_default();
            segs.extend(segment_signal(r, seg_len)?);
            conditions.entry(r.class_label).or_insert_with(|| r.condition.clone());
        }
        if let Some(cap) = cfg.data.max_segments_per_class {
            for segs in by_class.values_mut() {
                segs.truncate(cap);
            }
        }
        let healthy = cfg.data.healthy_class;
        if !by_class.contains_key(&healthy) {
            return Err(Error::validation("data.healthy_class", format!("no signals with class {healthy}")));
        }
        if let Some(h) = cfg.data.held_out_class {
            if !by_class.contains_key(&h) {
                return Err(Error::validation("data.held_out_class", format!("no signals with class {h}")));
            }
        }
        let mut class_map = Vec::new();
        let mut dense = 0usize;
        for (&orig, _) in &by_class {
            let d = if Some(orig) == cfg.data.held_out_class {
                None
            } else {
                dense += 1;
                Some(dense - 1)
            };
            class_map.push(ClassMapEntry {
                original: orig,
                dense: d,
                condition: conditions.get(&orig).cloned().unwrap_or_else(|| condition_name(orig)),
            });
        }
        let n_known = dense;
        if n_known < 2 {
            return Err(Error::validation("data.held_out_class", "fewer than 2 known classes remain"));
        }
        let healthy_dense = class_map
            .iter()
            .find(|c| c.original == healthy)
            .and_then(|c| c.dense)
            .expect("healthy class is known");

        // Stratified split per class.
        let (mut train, mut val, mut test, mut held) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for entry in &class_map {
            let segs = &by_class[&entry.original];
            let mut idx: Vec<usize> = (0..segs.len()).collect();
            idx.shuffle(&mut seeded(derive_seed(cfg.seed, "split", entry.original as u64)));
            let items = idx.into_iter().map(|i| (segs[i].clone(), entry.dense));
            match entry.dense {
                None => held.extend(items),
                Some(_) => {
                    let items: Vec<_> = items.collect();
                    let n_trval = (items.len() as f64 * cfg.split.train_ratio).round() as usize;
                    let n_train = (n_trval as f64 * cfg.split.train_val_ratio).round() as usize;
                    let mut it = items.into_iter();
                    train.extend(it.by_ref().take(n_train));
                    val.extend(it.by_ref().take(n_trval - n_train));
                    test.extend(it);
                }
            }
        }
        for (k, part) in [&mut train, &mut val, &mut test, &mut held].into_iter().enumerate() {
            part.shuffle(&mut seeded(derive_seed(cfg.seed, "split_order", k as u64)));
        }
        if train.is_empty() || val.is_empty() || test.is_empty() {
            return Err(Error::contract("a split is empty; provide more segments"));
        }

        let id_segments: Vec<Array> = train.iter().chain(&val).chain(&test).map(|(s, _)| s.clone()).collect();
        let p2p = peak_to_peak(&id_segments)?;

        let spec = Spectrogram::new(cfg.data.spectrogram)?;
        let write_images = |name: &str, part: &[(Array, Option<usize>)]| -> Result<()> {
            let ext = spec.config().image_extents();
            let mut data = Vec::with_capacity(part.len() * ext.iter().product::<usize>());
            for (s, _) in part {
                data.extend_from_slice(spec.image(s)?.data());
            }
            let images = Array::new(vec![part.len(), ext[0], ext[1], ext[2]], data)?;
            let labels: Vec<u32> = part.iter().map(|(_, d)| d.map_or(NO_CLASS, |d| d as u32)).collect();
            write_dataset_file(&self.layout.dataset(name), &images, &labels)
        };
        write_images("train", &train)?;
        write_images("val", &val)?;
        write_images("test", &test)?;
        if !held.is_empty() {
            write_images("heldout", &held)?;
        }
        let raw: Vec<f64> = test.iter().flat_map(|(s, _)| s.data().iter().copied()).collect();
        let raw = Array::new(vec![test.len(), seg_len], raw)?;
        let labels: Vec<u32> = test.iter().map(|(_, d)| d.expect("known") as u32).collect();
        write_dataset_file(&self.layout.dataset("test_segments"), &raw, &labels)?;

        let info = PreprocessInfo {
            class_map,
            n_known_classes: n_known,
            healthy_dense,
            p2p,
            sample_rate,
            counts: SplitCounts {
                train: train.len(),
                validation: val.len(),
                test: test.len(),
                held_out: held.len(),
            },
        };
        write_json(&self.layout.preprocess_info(), &info)?;
        (self.log)(&format!(
            "preprocess: {} train / {} val / {} test / {} held-out spectrograms, p2p {:.4}",
            info.counts.train, info.counts.validation, info.counts.test, info.counts.held_out, p2p
        ));
        Ok(info)
    }

    fn load_labelled(&self, name: &str, n_classes: usize, cap: Option<usize>) -> Result<Dataset> {
        let (images, labels) = read_dataset_file(&self.layout.dataset(name))?;
        let n = cap.map_or(labels.len(), |c| c.min(labels.len()));
        let idx: Vec<usize> = (0..n).collect();
        let classes: Vec<usize> = labels[..n].iter().map(|&l| l as usize).collect();
        Dataset::from_classes(images.select_rows(&idx), &classes, n_classes)
    }

    fn load_images(&self, name: &str, cap: Option<usize>) -> Result<Array> {
        let (images, labels) = read_dataset_file(&self.layout.dataset(name))?;
        let n = cap.map_or(labels.len(), |c| c.min(labels.len()));
        Ok(images.select_rows(&(0..n).collect::<Vec<_>>()))
    }

    fn network(&self, n_known: usize) -> NetworkSpec {
        self.config.model.network.clone().unwrap_or_else(|| NetworkSpec::pbcnn(n_known))
    }

    pub fn train(&mut self) -> Result<Pbcnn> {
        stage("train", self.train_inner())
    }

    fn train_inner(&mut self) -> Result<Pbcnn> {
        let info: PreprocessInfo = read_json(&self.layout.preprocess_info())?;
        let n = info.n_known_classes;
        let train_set = self.load_labelled("train", n, None)?;
        let val_set = self.load_labelled("val", n, None)?;
        let spec = self.network(n);
        if spec.n_classes() != Some(n) {
            return Err(Error::validation("model.network", format!("head must have {n} units")));
        }
        let model = build_pbcnn(&spec, &self.config.model.prior, self.seed("init"))?;
        let tc = TrainConfig {
            seed: self.seed("train"),
            ..self.config.model.train.clone()
        };
        (self.log)(&format!(
            "train: {} examples, {} epochs, batch {}",
            train_set.len(),
            tc.epochs,
            tc.batch_size
        ));
        let log = &mut self.log;
        let started = std::time::Instant::now();
        let (model, history) = train_with_progress(model, &train_set, Some(&val_set), &tc, |r| {
            log(&format!(
                "  epoch {:>3}: loss {:.4} (kl {:.1}, nll {:.4}) val acc {:.4} [{:.0}s]",
                r.epoch,
                r.loss,
                r.mean_kl,
                r.mean_nll,
                r.val_accuracy.unwrap_or(f64::NAN),
                started.elapsed().as_secs_f64()
            ))
        })?;
        save_checkpoint(&model, &self.layout.checkpoint())?;
        let mut csv = String::from("epoch,loss,mean_kl,mean_nll,val_accuracy\n");
        for r in &history {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch,
                r.loss,
                r.mean_kl,
                r.mean_nll,
                r.val_accuracy.map(|a| a.to_string()).unwrap_or_default()
            ));
        }
        write_text(&self.layout.history(), &csv)?;
        Ok(model)
    }

    fn summaries(&self, model: &Pbcnn, images: &Array, tag: &str) -> Result<Vec<UncertaintySummary>> {
        predict_mc_batch(model, images, self.config.uq.mc_samples, self.seed(tag))?
            .iter()
            .map(UncertaintySummary::from_samples)
            .collect()
    }

    pub fn calibrate(&mut self) -> Result<ThresholdTable> {
        stage("calibrate", self.calibrate_inner())
    }

    fn calibrate_inner(&mut self) -> Result<ThresholdTable> {
        let info: PreprocessInfo = read_json(&self.layout.preprocess_info())?;
        let model = load_checkpoint(&self.layout.checkpoint())?;
        let val = self.load_labelled("val", info.n_known_classes, self.config.calibration.max_examples)?;
        (self.log)(&format!("calibrate: {} validation examples × {} samples", val.len(), self.config.uq.mc_samples));
        let sums = self.summaries(&model, val.images(), "mc_val")?;
        let truth = val.classes();
        let records: Vec<UncertaintyRecord> = sums
            .iter()
            .enumerate()
            .map(|(i, s)| UncertaintyRecord {
                example_id: i,
                true_label: Some(truth[i]),
                summary: s.clone(),
            })
            .collect();
        let path = self.layout.val_uncertainty();
        ensure_parent(&path)?;
        write_uncertainty_csv(&path, &records, info.n_known_classes)?;
        let correct: Vec<bool> = sums.iter().zip(&truth).map(|(s, &t)| s.predicted_class == t).collect();
        let mut curves = Vec::new();
        for &m in &self.config.calibration.measures {
            let u: Vec<f64> = sums.iter().map(|s| s.measure(m)).collect();
            let curve = risk_coverage_curve(&u, &correct, m)?;
            write_text(&self.layout.risk_coverage(m), &curve_csv(&curve))?;
            curves.push(curve);
        }
        let table = ThresholdTable::build(&curves, &self.config.calibration.risk_levels);
        write_text(&self.layout.thresholds(), &table.to_csv())?;
        Ok(table)
    }

    pub fn inject(&mut self) -> Result<Vec<PathBuf>> {
        stage("inject", self.inject_inner())
    }

    fn inject_inner(&mut self) -> Result<Vec<PathBuf>> {
        let info: PreprocessInfo = read_json(&self.layout.preprocess_info())?;
        let cap = self.config.evaluation.max_ood_examples;
        let (raw, labels) = read_dataset_file(&self.layout.dataset("test_segments"))?;
        let n = cap.map_or(labels.len(), |c| c.min(labels.len()));
        let spec = Spectrogram::new(self.config.data.spectrogram)?;
        let ext = spec.config().image_extents();
        let mut written = Vec::new();
        if self.config.evaluation.uniform {
            let images = generate_uniform_images(n, ext, self.seed("uniform"))?;
            let p = self.layout.dataset("ood_uniform");
            write_dataset_file(&p, &images, &vec![NO_CLASS; n])?;
            written.push(p);
        }
        for f in &self.config.evaluation.faults {
            let fs = FaultSpec {
                kind: f.kind,
                tau: f.tau,
                snr_db: f.snr_db,
                p2p_reference: info.p2p,
            };
            let mut data = Vec::with_capacity(n * ext.iter().product::<usize>());
            for i in 0..n {
                let seg = Array::from_vec(raw.row(i).to_vec());
                let mut rng = seeded(derive_seed(self.config.seed, &format!("inject_{}", f.kind), i as u64));
                let corrupted = inject_fault(&seg, &fs, info.sample_rate, &mut rng)?;
                data.extend_from_slice(spec.image(&corrupted)?.data());
            }
            let images = Array::new(vec![n, ext[0], ext[1], ext[2]], data)?;
            let p = self.layout.dataset(&format!("ood_fault_{}", f.kind));
            write_dataset_file(&p, &images, &labels[..n])?;
            written.push(p);
        }
        (self.log)(&format!("inject: {} OOD sets of {n} images", written.len()));
        Ok(written)
    }

    pub fn evaluate(&mut self) -> Result<Vec<EvaluationSummary>> {
        stage("evaluate", self.evaluate_inner())
    }

    fn evaluate_inner(&mut self) -> Result<Vec<EvaluationSummary>> {
        let info: PreprocessInfo = read_json(&self.layout.preprocess_info())?;
        let model = load_checkpoint(&self.layout.checkpoint())?;
        let table = ThresholdTable::from_csv(&self.layout.thresholds())?;
        let ev = self.config.evaluation.clone();
        let n_known = info.n_known_classes;
        let m_samples = self.config.uq.mc_samples;

        let test = self.load_labelled("test", n_known, ev.max_id_examples)?;
        (self.log)(&format!("evaluate: {} test examples × {m_samples} samples", test.len()));
        let id_sums = self.summaries(&model, test.images(), "mc_test")?;
        let truth = test.classes();
        let id_records: Vec<UncertaintyRecord> = id_sums
            .iter()
            .enumerate()
            .map(|(i, s)| UncertaintyRecord {
                example_id: i,
                true_label: Some(truth[i]),
                summary: s.clone(),
            })
            .collect();
        let p = self.layout.eval_uncertainty("test");
        ensure_parent(&p)?;
        write_uncertainty_csv(&p, &id_records, n_known)?;
        let hits = id_sums.iter().zip(&truth).filter(|(s, &t)| s.predicted_class == t).count();
        write_json(
            &self.layout.in_distribution(),
            &InDistributionSummary {
                n_examples: test.len(),
                accuracy: hits as f64 / test.len() as f64,
                mc_samples: m_samples,
            },
        )?;

        let mut out = Vec::new();
        let mut families: Vec<(OodSource, Vec<String>)> = Vec::new();
        if ev.uniform {
            families.push((OodSource::Uniform, vec!["uniform".into()]));
        }
        if ev.held_out {
            families.push((OodSource::HeldOutClass, vec!["held_out".into()]));
        }
        if !ev.faults.is_empty() {
            families.push((
                OodSource::FaultInjected,
                ev.faults.iter().map(|f| format!("fault_{}", f.kind)).collect(),
            ));
        }
        for (source, sets) in families {
            let mut set_summaries = Vec::new();
            for set in sets {
                let file = match set.as_str() {
                    "uniform" => "ood_uniform".to_string(),
                    "held_out" => "heldout".to_string(),
                    s => format!("ood_{s}"),
                };
                let images = self.load_images(&file, ev.max_ood_examples)?;
                (self.log)(&format!("evaluate: OOD set {set} ({} images)", images.extents()[0]));
                let ood_sums = self.summaries(&model, &images, &format!("mc_{set}"))?;
                let records: Vec<UncertaintyRecord> = ood_sums
                    .iter()
                    .enumerate()
                    .map(|(i, s)| UncertaintyRecord {
                        example_id: i,
                        true_label: None,
                        summary: s.clone(),
                    })
                    .collect();
                write_uncertainty_csv(&self.layout.eval_uncertainty(&set), &records, n_known)?;
                set_summaries.push(self.score_set(&set, &id_sums, &truth, &ood_sums, &table, &info)?);
            }
            let summary = EvaluationSummary {
                source,
                mc_samples: m_samples,
                operating_risk: ev.operating_risk,
                sets: set_summaries,
            };
            write_json(&self.layout.summary(source), &summary)?;
            out.push(summary);
        }
        Ok(out)
    }

    fn score_set(
        &self,
        name: &str,
        id: &[UncertaintySummary],
        truth: &[usize],
        ood: &[UncertaintySummary],
        table: &ThresholdTable,
        info: &PreprocessInfo,
    ) -> Result<SetSummary> {
        let all: Vec<&UncertaintySummary> = id.iter().chain(ood).collect();
        let is_id: Vec<bool> = (0..all.len()).map(|i| i < id.len()).collect();
        let labels: Vec<Option<usize>> = truth.iter().map(|&t| Some(t)).chain(ood.iter().map(|_| None)).collect();
        let mut auroc = Vec::new();
        for &m in &table.measures {
            let u: Vec<f64> = all.iter().map(|s| s.measure(m)).collect();
            let roc = roc_auroc(&u, &is_id)?;
            write_text(&self.layout.roc(name, m), &roc_csv(&roc))?;
            auroc.push(MeasureValue { measure: m, value: roc.auroc });
        }
        let mut risk_levels = Vec::new();
        for (li, &level) in table.risk_levels.iter().enumerate() {
            let mut measures = Vec::new();
            for (mi, &m) in table.measures.iter().enumerate() {
                let threshold = table.cells[mi][li].threshold;
                let decisions: Vec<_> = all.iter().map(|s| gate_decision(s, m, threshold)).collect();
                let c = ood_confusion(&decisions, &is_id)?;
                let prf = micro_prf(&decisions, &labels, &is_id, info.healthy_dense, info.n_known_classes)?;
                measures.push(GateMetrics {
                    measure: m,
                    threshold,
                    tp: c.tp,
                    fn_: c.fn_,
                    fp: c.fp,
                    tn: c.tn,
                    tpr: c.tpr,
                    fpr: c.fpr,
                    precision: prf.precision,
                    recall: prf.recall,
                    f_measure: prf.f_measure,
                });
            }
            risk_levels.push(RiskLevelMetrics { risk_level: level, measures });
        }
        Ok(SetSummary {
            name: name.to_string(),
            n_in_distribution: id.len(),
            n_ood: ood.len(),
            auroc,
            risk_levels,
        })
    }

    /// Artifact paths implied by the configuration.
    pub fn bundle(&self) -> ReportBundle {
        let l = &self.layout;
        let ev = &self.config.evaluation;
        let measures = &self.config.calibration.measures;
        let mut sets = Vec::new();
        if ev.uniform {
            sets.push("uniform".to_string());
        }
        if ev.held_out {
            sets.push("held_out".to_string());
        }
        sets.extend(ev.faults.iter().map(|f| format!("fault_{}", f.kind)));
        let mut uncertainty_csvs = vec![l.val_uncertainty(), l.eval_uncertainty("test")];
        uncertainty_csvs.extend(sets.iter().map(|s| l.eval_uncertainty(s)));
        let roc_csvs = sets
            .iter()
            .flat_map(|s| measures.iter().map(move |&m| l.roc(s, m)))
            .collect();
        let mut summaries = Vec::new();
        if ev.uniform {
            summaries.push(l.summary(OodSource::Uniform));
        }
        if ev.held_out {
            summaries.push(l.summary(OodSource::HeldOutClass));
        }
        if !ev.faults.is_empty() {
            summaries.push(l.summary(OodSource::FaultInjected));
        }
        ReportBundle {
            root: l.root().to_path_buf(),
            uncertainty_csvs,
            risk_coverage_csvs: measures.iter().map(|&m| l.risk_coverage(m)).collect(),
            threshold_table: l.thresholds(),
            roc_csvs,
            in_distribution: l.in_distribution(),
            summaries,
            manifest: l.manifest(),
        }
    }

    pub fn config_sha256(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(&self.config)?)))
    }

    /// Writes the manifest and `report.txt`, returning the report text.
    pub fn report(&mut self) -> Result<String> {
        stage("report", self.report_inner())
    }

    fn report_inner(&mut self) -> Result<String> {
        let bundle = self.bundle();
        let info: PreprocessInfo = read_json(&self.layout.preprocess_info())?;
        let mut artifacts = Vec::new();
        for p in bundle.all_paths() {
            if p == bundle.manifest {
                continue;
            }
            if !p.exists() {
                return Err(Error::MissingArtifact(p.to_path_buf()));
            }
            let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
            artifacts.push(ArtifactEntry {
                path: p.strip_prefix(self.layout.root()).unwrap_or(p).display().to_string(),
                sha256: hex::encode(Sha256::digest(&bytes)),
            });
        }
        let manifest = Manifest {
            tool: "bayesdiag".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: self.config.seed,
            config_sha256: self.config_sha256()?,
            class_map: info.class_map,
            artifacts,
        };
        write_json(&self.layout.manifest(), &manifest)?;
        let text = render_report(&bundle)?;
        write_text(&self.layout.report(), &text)?;
        Ok(text)
    }

    /// Every stage in order.
    pub fn run(&mut self) -> Result<ReportBundle> {
        self.synth()?;
        self.preprocess()?;
        self.train()?;
        self.calibrate()?;
        self.inject()?;
        self.evaluate()?;
        self.report()?;
        Ok(self.bundle())
    }
}

/// Runs every stage with the given configuration, writing under `out_dir`.
pub fn run_pipeline(config: ExperimentConfig, out_dir: impl Into<PathBuf>) -> Result<ReportBundle> {
    Pipeline::new(config, out_dir)?.run()
}
