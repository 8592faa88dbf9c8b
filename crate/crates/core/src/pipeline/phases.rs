//! The pipeline commands. Each is a pure function of the files under the
//! workspace directory, the run config and its seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{AblationMode, RunConfig, SweepAxis};
use super::manifest::{write_dataset, write_text, DatasetKind, DatasetStore, Entry};
use crate::constraint::{finalize_constraints, lung_plus_space, ConstraintRecord};
use crate::discriminator::{anchor_rows, fuse, train_discriminator, AnchorRow, FusedInput};
use crate::error::{Error, Result};
use crate::gradcheck::{run_all, GradCheckReport};
use crate::mask::{threshold, BinaryMask, GrayImage, ProbMap};
use crate::metrics::{auroc, bootstrap_statistic_se, confusion_rates, MeanSe, MetricReport, SampleMetrics};
use crate::rng::{derive_seed, stream};
use crate::segnet::checkpoint;
use crate::segnet::task::{Objective, SegSample, SegTask};
use crate::segnet::train::{train, EpochRecord, TrainConfig};
use crate::segnet::{Params, SegNet};
use crate::synth::{corrupt_constraints, gen_lesion_dataset, gen_lung_dataset, Split};

pub const LUNG_CHECKPOINT: &str = "phase1/lung_segmenter.ckpt";

/// Directory layout shared by all commands.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn lung_dir(&self) -> PathBuf {
        self.root.join("lung")
    }

    pub fn lesion_dir(&self) -> PathBuf {
        self.root.join("lesion")
    }

    pub fn phase_dir(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn phase3_dir(&self, mode: AblationMode) -> PathBuf {
        self.root.join("phase3").join(mode.as_str())
    }
}

// ---------------------------------------------------------------- reports

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s)
}

fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,valid_loss,lr\n");
    for r in history {
        s.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_loss, r.valid_loss, r.lr));
    }
    s
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub lung: [usize; 3],
    pub lesion: [usize; 3],
}

/// Writes the lung and lesion datasets under the workspace.
pub fn run_synth(cfg: &RunConfig, ws: &Workspace) -> Result<SynthSummary> {
    cfg.validate()?;
    let fp = cfg.fingerprint();
    let phantom = cfg.phantom();
    let lung = gen_lung_dataset(&phantom)?;
    write_dataset(&ws.lung_dir(), &lung, DatasetKind::Lung, &fp)?;
    let lesion = write_lesion_dataset(cfg, &ws.lesion_dir())?;
    let counts = |d: &crate::synth::Dataset| [Split::Train, Split::Valid, Split::Test].map(|s| d.count(s));
    Ok(SynthSummary {
        lung: counts(&lung),
        lesion: counts(&lesion),
    })
}

fn write_lesion_dataset(cfg: &RunConfig, dir: &Path) -> Result<crate::synth::Dataset> {
    let lesion = gen_lesion_dataset(&cfg.phantom())?;
    write_dataset(dir, &lesion, DatasetKind::Lesion, &cfg.fingerprint())?;
    Ok(lesion)
}

// ---------------------------------------------------------------- training helpers

/// A trained segmenter. Parameters are rounded to checkpoint precision so
/// that evaluating a reloaded checkpoint reproduces every reported number.
#[derive(Debug, Clone)]
pub struct TrainedNet {
    pub params: Params,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

pub fn train_segmenter(
    net: &SegNet,
    objective: Objective,
    train_set: &[SegSample],
    valid_set: &[SegSample],
    tcfg: &TrainConfig,
) -> Result<TrainedNet> {
    let task = SegTask { net, objective };
    let out = train(&task, net.init_params(tcfg.seed), train_set, valid_set, tcfg)?;
    Ok(TrainedNet {
        params: checkpoint::quantize(&out.params),
        best_epoch: out.best_epoch,
        history: out.history,
    })
}

fn predict(net: &SegNet, params: &Params, image: &GrayImage, t: f64) -> Result<(ProbMap, BinaryMask)> {
    let y = net.forward(params, image)?;
    let m = threshold(&y, t);
    Ok((y, m))
}

fn mean_valid_iou(net: &SegNet, params: &Params, valid: &[SegSample], t: f64) -> Result<f64> {
    let mut total = 0.0;
    for s in valid {
        let (_, m) = predict(net, params, &s.image, t)?;
        total += crate::metrics::iou(&m, &s.target)?;
    }
    Ok(total / valid.len() as f64)
}

// ---------------------------------------------------------------- phase 1

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase1Summary {
    pub config_fingerprint: String,
    pub lung_test: MetricReport,
    pub best_epoch: usize,
    pub corrupted: usize,
    pub blank_candidates: usize,
}

/// Trains the lung segmenter, reports its test metrics, and writes lung+
/// candidates for every lesion sample.
pub fn run_phase1(cfg: &RunConfig, ws: &Workspace) -> Result<Phase1Summary> {
    cfg.validate()?;
    let fp = cfg.fingerprint();
    let net = SegNet::new(cfg.network)?;
    let lung = DatasetStore::open(&ws.lung_dir())?;
    let load = |split: Split| -> Result<Vec<SegSample>> {
        lung.manifest
            .split_entries(split)
            .map(|e| {
                let target = lung.mask(e, "lung training")?;
                let (h, w) = target.shape();
                Ok(SegSample {
                    image: lung.image(e)?,
                    target,
                    constraint: BinaryMask::all_ones(h, w),
                })
            })
            .collect()
    };
    let (train_set, valid_set) = (load(Split::Train)?, load(Split::Valid)?);
    let objective = Objective::Dice {
        epsilon: cfg.loss.epsilon,
    };
    let trained = train_segmenter(&net, objective, &train_set, &valid_set, &cfg.train_config(stream::LUNG_TRAIN))?;
    let dir = ws.phase_dir("phase1");
    checkpoint::save(&trained.params, &ws.root.join(LUNG_CHECKPOINT))?;
    write_text(&dir.join("history.csv"), &history_csv(&trained.history))?;

    lung.open_evaluation();
    let samples = lung
        .manifest
        .split_entries(Split::Test)
        .map(|e| {
            let (_, m) = predict(&net, &trained.params, &lung.image(e)?, cfg.eval_threshold)?;
            SampleMetrics::evaluate(&e.id, &m, &lung.mask(e, "lung evaluation")?)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = MetricReport::from_samples(samples, cfg.bootstrap, derive_seed(cfg.seed, stream::BOOTSTRAP, 1), &fp)?;
    write_text(&dir.join("mask_access.csv"), &lung.access_csv())?;
    write_json(&dir.join("lung_metrics.json"), &report)?;
    write_text(&dir.join("lung_metrics.txt"), &report.to_kv_text())?;

    let (corrupted, blank_candidates) = build_candidates(cfg, ws, &trained.params)?;
    let summary = Phase1Summary {
        config_fingerprint: fp,
        lung_test: report,
        best_epoch: trained.best_epoch,
        corrupted,
        blank_candidates,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Applies the lung+ space segmenter to every lesion sample and corrupts
/// a fraction of the train/valid candidates. Returns (corrupted, blank).
pub fn build_candidates(cfg: &RunConfig, ws: &Workspace, lung_params: &Params) -> Result<(usize, usize)> {
    let net = SegNet::new(cfg.network)?;
    let mut store = DatasetStore::open(&ws.lesion_dir())?;
    let mut raws = Vec::new();
    let mut cands = Vec::new();
    for e in &store.manifest.entries {
        let prob = net.forward(lung_params, &store.image(e)?)?;
        raws.push(threshold(&prob, cfg.morph.bin_t));
        cands.push(lung_plus_space(&prob, &cfg.morph)?);
    }

    // corruption only touches train/valid; test annotations stay unread
    let labelled: Vec<usize> = (0..store.manifest.entries.len())
        .filter(|&i| store.manifest.entries[i].split != Split::Test)
        .collect();
    let lesions = labelled
        .iter()
        .map(|&i| store.mask(&store.manifest.entries[i], "corruption"))
        .collect::<Result<Vec<_>>>()?;
    let lesion_refs: Vec<&BinaryMask> = lesions.iter().collect();
    let subset: Vec<BinaryMask> = labelled.iter().map(|&i| cands[i].clone()).collect();
    let (corrupted, flags) = corrupt_constraints(&subset, &lesion_refs, cfg.synth.corruption, cfg.tau, cfg.seed)?;
    let mut corrupt_flag = vec![false; cands.len()];
    for (k, &i) in labelled.iter().enumerate() {
        cands[i] = corrupted[k].clone();
        corrupt_flag[i] = flags[k];
    }

    let mut blank = 0;
    for (i, (raw, cand)) in raws.iter().zip(&cands).enumerate() {
        let id = store.manifest.entries[i].id.clone();
        let raw_rel = format!("raw_lung/{id}.pgm");
        let cand_rel = format!("candidates/{id}.pgm");
        store.write_mask(&raw_rel, raw)?;
        store.write_mask(&cand_rel, cand)?;
        blank += cand.is_blank() as usize;
        let e = &mut store.manifest.entries[i];
        e.raw_lung = Some(raw_rel);
        e.candidate = Some(cand_rel);
        e.corrupted = (e.split != Split::Test).then_some(corrupt_flag[i]);
        e.clear_constraint_fields();
    }
    store.save()?;
    Ok((flags.iter().filter(|&&f| f).count(), blank))
}

// ---------------------------------------------------------------- phase 2

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub train_pos: usize,
    pub train_neg: usize,
    pub valid_pos: usize,
    pub valid_neg: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSe {
    pub specificity: Option<f64>,
    pub sensitivity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorReport {
    #[serde(flatten)]
    pub row: AnchorRow,
    pub se: RateSe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase2Summary {
    pub config_fingerprint: String,
    pub seed: u64,
    pub labels: LabelCounts,
    pub auroc: f64,
    pub auroc_se: Option<f64>,
    pub anchors: Vec<AnchorReport>,
    pub chosen_anchor: f64,
    pub chosen_cutoff: f64,
    /// Accepted constraints per split: train, valid, test.
    pub accepted: [usize; 3],
    pub best_epoch: usize,
}

impl Phase2Summary {
    pub fn anchors_csv(&self) -> String {
        let mut s = String::from(
            "anchor,cutoff,saturated,specificity,specificity_se,sensitivity,sensitivity_se,ppv,ppv_se,npv,npv_se\n",
        );
        for a in &self.anchors {
            let r = &a.row.rates;
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                a.row.anchor,
                a.row.cutoff,
                a.row.saturated,
                opt(r.specificity),
                opt(a.se.specificity),
                opt(r.sensitivity),
                opt(a.se.sensitivity),
                opt(r.ppv),
                opt(a.se.ppv),
                opt(r.npv),
                opt(a.se.npv),
            ));
        }
        s
    }
}

/// Labels candidates by coverage (train/valid only), trains the
/// discriminator, picks cutoffs and writes the final constraints.
pub fn run_phase2(cfg: &RunConfig, ws: &Workspace) -> Result<Phase2Summary> {
    cfg.validate()?;
    let mut store = DatasetStore::open(&ws.lesion_dir())?;
    let mut records = Vec::new();
    let mut fused = Vec::new();
    for e in &store.manifest.entries {
        let cand = store.candidate(e)?;
        let lesion = match e.split {
            Split::Test => None,
            _ => Some(store.mask(e, "coverage labelling")?),
        };
        fused.push(fuse(&store.image(e)?, &cand)?);
        records.push(ConstraintRecord::new(&e.id, cand, lesion.as_ref(), cfg.tau)?);
    }
    let splits: Vec<Split> = store.manifest.entries.iter().map(|e| e.split).collect();
    let pick = |split: Split| -> Vec<(FusedInput, u8)> {
        (0..records.len())
            .filter(|&i| splits[i] == split)
            .map(|i| (fused[i].clone(), records[i].label.expect("labelled split")))
            .collect()
    };
    let (train_set, valid_set) = (pick(Split::Train), pick(Split::Valid));
    let count = |set: &[(FusedInput, u8)]| {
        let pos = set.iter().filter(|(_, l)| *l == 1).count();
        (pos, set.len() - pos)
    };
    let ((train_pos, train_neg), (valid_pos, valid_neg)) = (count(&train_set), count(&valid_set));
    let labels = LabelCounts {
        train_pos,
        train_neg,
        valid_pos,
        valid_neg,
    };
    if valid_pos == 0 || valid_neg == 0 {
        return Err(Error::DegenerateLabels(format!(
            "validation labels are all {}; raise the corruption fraction or lower tau",
            u8::from(valid_pos > 0)
        )));
    }
    let clf = train_discriminator(&train_set, &valid_set, &cfg.train_config(stream::DISC_TRAIN))?;
    let scores = clf.score_all(&fused)?;

    let valid_idx: Vec<usize> = (0..records.len()).filter(|&i| splits[i] == Split::Valid).collect();
    let v_scores: Vec<f64> = valid_idx.iter().map(|&i| scores[i]).collect();
    let v_labels: Vec<u8> = valid_set.iter().map(|(_, l)| *l).collect();
    let auc = auroc(&v_scores, &v_labels)?;
    let boot = |k: u64| derive_seed(cfg.seed, stream::BOOTSTRAP, 100 + k);
    let resample = |idx: &[usize]| -> (Vec<f64>, Vec<u8>) {
        (idx.iter().map(|&j| v_scores[j]).collect(), idx.iter().map(|&j| v_labels[j]).collect())
    };
    let auroc_se = bootstrap_statistic_se(v_scores.len(), cfg.bootstrap, boot(0), |idx| {
        let (s, l) = resample(idx);
        auroc(&s, &l).ok()
    });
    let rows = anchor_rows(&v_scores, &v_labels, &cfg.cutoff)?;
    let anchors = rows
        .into_iter()
        .enumerate()
        .map(|(k, row)| {
            let rate_se = |f: fn(&crate::metrics::ConfusionRates) -> Option<f64>, j: u64| {
                bootstrap_statistic_se(v_scores.len(), cfg.bootstrap, boot(1 + 4 * k as u64 + j), |idx| {
                    let (s, l) = resample(idx);
                    let decisions: Vec<bool> = s.iter().map(|&x| x >= row.cutoff).collect();
                    confusion_rates(&decisions, &l).ok().and_then(|r| f(&r))
                })
            };
            let se = RateSe {
                specificity: rate_se(|r| r.specificity, 0),
                sensitivity: rate_se(|r| r.sensitivity, 1),
                ppv: rate_se(|r| r.ppv, 2),
                npv: rate_se(|r| r.npv, 3),
            };
            AnchorReport { row, se }
        })
        .collect::<Vec<_>>();
    let chosen = anchors
        .iter()
        .find(|a| (a.row.anchor - cfg.cutoff.chosen_anchor).abs() < 1e-12)
        .ok_or_else(|| Error::config("cutoff.chosen_anchor", "must be one of cutoff.specificity_anchors"))?;
    let chosen_cutoff = chosen.row.cutoff;

    let decisions: Vec<bool> = scores.iter().map(|&s| s >= chosen_cutoff).collect();
    let records = finalize_constraints(records, &decisions)?;
    let mut accepted = [0usize; 3];
    for (i, rec) in records.iter().enumerate() {
        let rel = format!("constraints/{}.pgm", rec.sample_id);
        store.write_mask(&rel, &rec.final_constraint)?;
        let e: &mut Entry = &mut store.manifest.entries[i];
        e.coverage = rec.coverage;
        e.label = rec.label;
        e.score = Some(scores[i]);
        e.accepted = Some(rec.accepted);
        e.constraint = Some(rel);
        if rec.accepted {
            accepted[e.split as usize] += 1;
        }
    }
    store.save()?;

    let dir = ws.phase_dir("phase2");
    checkpoint::save(clf.params(), &dir.join("discriminator.ckpt"))?;
    write_text(&dir.join("history.csv"), &history_csv(&clf.history))?;
    write_text(&dir.join("mask_access.csv"), &store.access_csv())?;
    let summary = Phase2Summary {
        config_fingerprint: cfg.fingerprint(),
        seed: cfg.seed,
        labels,
        auroc: auc,
        auroc_se,
        anchors,
        chosen_anchor: cfg.cutoff.chosen_anchor,
        chosen_cutoff,
        accepted,
        best_epoch: clf.history.iter().min_by(|a, b| a.valid_loss.total_cmp(&b.valid_loss)).map_or(0, |r| r.epoch),
    };
    write_json(&dir.join("report.json"), &summary)?;
    write_text(&dir.join("anchors.csv"), &summary.anchors_csv())?;
    Ok(summary)
}

// ---------------------------------------------------------------- phase 3

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaTrial {
    pub lambda: f64,
    pub valid_iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegRunReport {
    pub mode: AblationMode,
    pub seed: u64,
    /// `None` for the baseline objective.
    pub lambda: Option<f64>,
    pub lambda_trials: Vec<LambdaTrial>,
    pub best_epoch: usize,
    /// Mean predicted probability mass outside the test lung+ candidates.
    pub out_of_constraint_mass: MeanSe,
    pub out_of_constraint_per_sample: Vec<f64>,
    pub metrics: MetricReport,
}

impl SegRunReport {
    pub fn to_kv_text(&self) -> String {
        let mut s = format!("mode = {}\nseed = {}\n", self.mode.as_str(), self.seed);
        s.push_str(&format!("lambda = {}\n", self.lambda.map_or("none".to_string(), |l| l.to_string())));
        s.push_str(&format!("best_epoch = {}\n", self.best_epoch));
        s.push_str(&self.metrics.to_kv_text());
        s.push_str(&format!("out_mass.mean = {:.6}\n", self.out_of_constraint_mass.mean));
        s.push_str(&format!("out_mass.se = {:.6}\n", self.out_of_constraint_mass.se));
        s
    }

    pub fn per_sample_csv(&self) -> String {
        let mut s = String::from("id,iou,dsc,hd,out_mass\n");
        for (m, o) in self.metrics.samples.iter().zip(&self.out_of_constraint_per_sample) {
            s.push_str(&format!("{},{},{},{},{}\n", m.id, m.iou, m.dsc, m.hd, o));
        }
        s
    }

    fn lambda_csv(&self) -> String {
        let mut s = String::from("lambda,valid_iou\n");
        for t in &self.lambda_trials {
            s.push_str(&format!("{},{}\n", t.lambda, t.valid_iou));
        }
        s
    }
}

fn constraint_for(store: &DatasetStore, e: &Entry, mode: AblationMode) -> Result<BinaryMask> {
    let ones = || BinaryMask::all_ones(store.manifest.height, store.manifest.width);
    Ok(match mode {
        AblationMode::Baseline => ones(),
        AblationMode::RawLung => store.raw_lung(e)?,
        AblationMode::LungPlus => {
            let c = store.candidate(e)?;
            if c.is_blank() {
                ones()
            } else {
                c
            }
        }
        AblationMode::Full => store.constraint(e)?,
    })
}

/// Trains one lesion segmenter for `mode` and evaluates it on the test
/// split. Outputs go to `dest`.
pub fn run_phase3(cfg: &RunConfig, ws: &Workspace, mode: AblationMode, dest: &Path) -> Result<SegRunReport> {
    cfg.validate()?;
    let net = SegNet::new(cfg.network)?;
    let store = DatasetStore::open(&ws.lesion_dir())?;
    let load = |split: Split| -> Result<Vec<SegSample>> {
        store
            .manifest
            .split_entries(split)
            .map(|e| {
                Ok(SegSample {
                    image: store.image(e)?,
                    target: store.mask(e, "lesion training")?,
                    constraint: constraint_for(&store, e, mode)?,
                })
            })
            .collect()
    };
    let (train_set, valid_set) = (load(Split::Train)?, load(Split::Valid)?);
    let tcfg = cfg.train_config(stream::SEG_TRAIN);

    let (trained, lambda, trials) = if mode == AblationMode::Baseline {
        let obj = Objective::Dice {
            epsilon: cfg.loss.epsilon,
        };
        (train_segmenter(&net, obj, &train_set, &valid_set, &tcfg)?, None, Vec::new())
    } else {
        let grid = if cfg.lambda_search {
            cfg.loss.lambda_grid.clone()
        } else {
            vec![cfg.loss.lambda]
        };
        let mut best: Option<(TrainedNet, f64, f64)> = None;
        let mut trials = Vec::new();
        for &lambda in &grid {
            let obj = Objective::Constrained(cfg.loss.with_lambda(lambda));
            let t = train_segmenter(&net, obj, &train_set, &valid_set, &tcfg)?;
            let valid_iou = mean_valid_iou(&net, &t.params, &valid_set, cfg.eval_threshold)?;
            trials.push(LambdaTrial { lambda, valid_iou });
            if best.as_ref().is_none_or(|b| valid_iou > b.2) {
                best = Some((t, lambda, valid_iou));
            }
        }
        let (t, lambda, _) = best.expect("non-empty lambda grid");
        (t, Some(lambda), trials)
    };

    checkpoint::save(&trained.params, &dest.join("segmenter.ckpt"))?;
    write_text(&dest.join("history.csv"), &history_csv(&trained.history))?;
    let report = evaluate_segmenter(cfg, &store, &net, &trained.params, mode, lambda, trials, trained.best_epoch)?;
    write_seg_report(&report, dest, "metrics")?;
    write_text(&dest.join("mask_access.csv"), &store.access_csv())?;
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn evaluate_segmenter(
    cfg: &RunConfig,
    store: &DatasetStore,
    net: &SegNet,
    params: &Params,
    mode: AblationMode,
    lambda: Option<f64>,
    lambda_trials: Vec<LambdaTrial>,
    best_epoch: usize,
) -> Result<SegRunReport> {
    store.open_evaluation();
    let mut samples = Vec::new();
    let mut out_mass = Vec::new();
    for e in store.manifest.split_entries(Split::Test) {
        let (y, m) = predict(net, params, &store.image(e)?, cfg.eval_threshold)?;
        samples.push(SampleMetrics::evaluate(&e.id, &m, &store.mask(e, "lesion evaluation")?)?);
        let cand = store.candidate(e)?;
        out_mass.push(y.sum() - crate::mask::soft_intersection(&y, &cand)?);
    }
    let seed = derive_seed(cfg.seed, stream::BOOTSTRAP, 2);
    Ok(SegRunReport {
        mode,
        seed: cfg.seed,
        lambda,
        lambda_trials,
        best_epoch,
        out_of_constraint_mass: MeanSe::of(&out_mass, cfg.bootstrap, seed.wrapping_add(10))?,
        out_of_constraint_per_sample: out_mass,
        metrics: MetricReport::from_samples(samples, cfg.bootstrap, seed, cfg.fingerprint())?,
    })
}

fn write_seg_report(report: &SegRunReport, dest: &Path, stem: &str) -> Result<()> {
    write_json(&dest.join(format!("{stem}.json")), report)?;
    write_text(&dest.join(format!("{stem}.txt")), &report.to_kv_text())?;
    write_text(&dest.join(format!("{stem}_per_sample.csv")), &report.per_sample_csv())?;
    if !report.lambda_trials.is_empty() {
        write_text(&dest.join("lambda_search.csv"), &report.lambda_csv())?;
    }
    Ok(())
}

/// Re-evaluates a saved phase3 checkpoint on the test split.
pub fn run_eval(cfg: &RunConfig, ws: &Workspace, mode: AblationMode) -> Result<SegRunReport> {
    cfg.validate()?;
    let dest = ws.phase3_dir(mode);
    let ckpt = dest.join("segmenter.ckpt");
    let params = checkpoint::load(&ckpt)?;
    let net = SegNet::new(cfg.network)?;
    if params.len() != net.param_count() {
        return Err(Error::Format {
            path: ckpt,
            reason: format!("holds {} parameters, network needs {}", params.len(), net.param_count()),
        });
    }
    let store = DatasetStore::open(&ws.lesion_dir())?;
    let report = evaluate_segmenter(cfg, &store, &net, &params, mode, None, Vec::new(), 0)?;
    write_seg_report(&report, &dest, "eval")?;
    write_text(&dest.join("eval_mask_access.csv"), &store.access_csv())?;
    Ok(report)
}

// ---------------------------------------------------------------- ablation and sweeps

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub lambda: Option<f64>,
    pub iou: MeanSe,
    pub dsc: MeanSe,
    pub hd: MeanSe,
    pub out_mass: MeanSe,
}

impl SummaryRow {
    fn of(label: String, r: &SegRunReport) -> Self {
        Self {
            label,
            lambda: r.lambda,
            iou: r.metrics.iou,
            dsc: r.metrics.dsc,
            hd: r.metrics.hd,
            out_mass: r.out_of_constraint_mass,
        }
    }

    fn csv_fields(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.lambda.map_or("NA".to_string(), |l| l.to_string()),
            self.iou.mean,
            self.iou.se,
            self.dsc.mean,
            self.dsc.se,
            self.hd.mean,
            self.hd.se,
            self.out_mass.mean,
            self.out_mass.se
        )
    }
}

const ROW_HEADER: &str = "lambda,iou,iou_se,dsc,dsc_se,hd,hd_se,out_mass,out_mass_se";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub config_fingerprint: String,
    pub seed: u64,
    pub rows: Vec<SummaryRow>,
}

/// Runs every mode under one seed; each row is a full phase3 run.
pub fn run_ablate(cfg: &RunConfig, ws: &Workspace) -> Result<AblationReport> {
    let dir = ws.phase_dir("ablate");
    let mut rows = Vec::new();
    for mode in AblationMode::ALL {
        let r = run_phase3(cfg, ws, mode, &dir.join(mode.as_str()))?;
        rows.push(SummaryRow::of(mode.as_str().to_string(), &r));
    }
    let report = AblationReport {
        config_fingerprint: cfg.fingerprint(),
        seed: cfg.seed,
        rows,
    };
    let mut csv = format!("mode,{ROW_HEADER}\n");
    for r in &report.rows {
        csv.push_str(&format!("{},{}\n", r.label, r.csv_fields()));
    }
    write_json(&dir.join("report.json"), &report)?;
    write_text(&dir.join("ablation.csv"), &csv)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub full: SummaryRow,
    pub baseline: SummaryRow,
    /// Accepted constraints per split: train, valid, test.
    pub accepted: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config_fingerprint: String,
    pub seed: u64,
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

/// One full-pipeline training per axis value (λ fixed to `loss.lambda`),
/// reusing the phase1 lung segmenter. Each value gets its own copy of the
/// lesion dataset under `sweep/<axis>/<value>/`.
pub fn run_sweep(cfg: &RunConfig, ws: &Workspace, axis: SweepAxis) -> Result<SweepReport> {
    cfg.validate()?;
    let lung_params = checkpoint::load(&ws.root.join(LUNG_CHECKPOINT))?;
    let dir = ws.phase_dir("sweep").join(axis.as_str());
    let fixed = RunConfig {
        lambda_search: false,
        ..cfg.clone()
    };
    let baseline = run_phase3(&fixed, ws, AblationMode::Baseline, &dir.join("baseline"))?;
    let baseline_row = SummaryRow::of("baseline".into(), &baseline);
    let values: Vec<f64> = match axis {
        SweepAxis::CloseK => cfg.sweep.close_k.iter().map(|&k| k as f64).collect(),
        SweepAxis::DilateK => cfg.sweep.dilate_k.iter().map(|&k| k as f64).collect(),
        SweepAxis::Tau => cfg.sweep.tau.clone(),
    };
    let mut rows = Vec::new();
    for &v in &values {
        let mut c = fixed.clone();
        match axis {
            SweepAxis::CloseK => c.morph.close_k = v as usize,
            SweepAxis::DilateK => c.morph.dilate_k = v as usize,
            SweepAxis::Tau => c.tau = v,
        }
        c.validate()?;
        let sub = Workspace::new(dir.join(format!("{}={v}", axis.as_str())));
        write_lesion_dataset(&c, &sub.lesion_dir())?;
        build_candidates(&c, &sub, &lung_params)?;
        let p2 = run_phase2(&c, &sub)?;
        let r = run_phase3(&c, &sub, AblationMode::Full, &sub.phase3_dir(AblationMode::Full))?;
        rows.push(SweepRow {
            value: v,
            full: SummaryRow::of(format!("{}={v}", axis.as_str()), &r),
            baseline: baseline_row.clone(),
            accepted: p2.accepted,
        });
    }
    let report = SweepReport {
        config_fingerprint: cfg.fingerprint(),
        seed: cfg.seed,
        axis,
        rows,
    };
    let mut csv = format!(
        "{},accepted_train,accepted_valid,accepted_test,{ROW_HEADER},baseline_iou,baseline_dsc,baseline_hd,baseline_out_mass\n",
        axis.as_str()
    );
    for r in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.value,
            r.accepted[0],
            r.accepted[1],
            r.accepted[2],
            r.full.csv_fields(),
            r.baseline.iou.mean,
            r.baseline.dsc.mean,
            r.baseline.hd.mean,
            r.baseline.out_mass.mean
        ));
    }
    write_json(&dir.join("report.json"), &report)?;
    write_text(&dir.join("sweep.csv"), &csv)?;
    Ok(report)
}

// ---------------------------------------------------------------- gradcheck

pub const GRADCHECK_PROBES: usize = 64;

pub fn run_gradcheck(cfg: &RunConfig, ws: &Workspace) -> Result<GradCheckReport> {
    cfg.validate()?;
    let spec = crate::segnet::NetworkSpec {
        height: 16,
        width: 16,
        ..cfg.network
    };
    let report = run_all(derive_seed(cfg.seed, stream::GRADCHECK, 0), GRADCHECK_PROBES, spec)?;
    write_text(&ws.root.join("gradcheck.txt"), &report.render())?;
    Ok(report)
}
