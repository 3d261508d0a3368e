use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::augment::{augment, randomize_labels, standardize, Augmentation, Task};
use super::optim::Agents;
use super::round::{cooperative_round, Batch};
use super::{poly_lr, TrainConfig};
use crate::arch::{build_model, forward_joint, ArchConfig, ModelParams};
use crate::checkpoint::save_checkpoint;
use crate::data::{encode_pgm8, Sample};
use crate::engine::{BnMode, Tensor};
use crate::error::{Error, Result};
use crate::eval::{argmax, binary_accuracy, topk_accuracy, ConfusionMatrix};

pub const REPORT_HEADER: &str = "round,clf_loss,seg_loss,clf_lr,seg_lr,miou,top1,top2,binacc";

// rng streams derived from the run seed
const STREAM_INIT: u64 = 0;
const STREAM_CLF_ORDER: u64 = 1;
const STREAM_SEG_ORDER: u64 = 2;
const STREAM_CLF_AUG: u64 = 3;
const STREAM_SEG_AUG: u64 = 4;

pub(crate) fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Validation scores with batch norm in eval mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub miou: f64,
    pub per_class_iou: Vec<Option<f64>>,
    pub top1: f64,
    pub top2: f64,
    pub binacc: f64,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub round: usize,
    pub clf_loss: Option<f64>,
    pub seg_loss: Option<f64>,
    pub clf_lr: Option<f64>,
    pub seg_lr: Option<f64>,
    pub metrics: Option<Metrics>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ReportRow {
    pub fn to_csv(&self) -> String {
        let m = self.metrics.as_ref();
        [
            self.round.to_string(),
            cell(self.clf_loss),
            cell(self.seg_loss),
            cell(self.clf_lr),
            cell(self.seg_lr),
            cell(m.map(|m| m.miou)),
            cell(m.map(|m| m.top1)),
            cell(m.map(|m| m.top2)),
            cell(m.map(|m| m.binacc)),
        ]
        .join(",")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub seed: u64,
    /// Training samples whose grade was replaced by a random draw.
    pub corrupted_labels: usize,
    /// Round 0 is the evaluation before any step.
    pub rows: Vec<ReportRow>,
    pub wall_clock_secs: f64,
}

impl ExperimentReport {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{REPORT_HEADER}\n");
        for r in &self.rows {
            s.push_str(&r.to_csv());
            s.push('\n');
        }
        s
    }

    pub fn final_metrics(&self) -> Option<&Metrics> {
        self.rows.iter().rev().find_map(|r| r.metrics.as_ref())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelParams<f32>,
    pub agents: Agents<f32>,
    pub report: ExperimentReport,
}

/// Center-cropped, standardized validation inputs in fixed batches.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub batches: Vec<Tensor<f32>>,
    pub masks: Vec<u8>,
    pub grades: Vec<u8>,
    pub indices: Vec<usize>,
}

pub fn prepare_eval_set(samples: &[Sample], input_hw: usize, batch: usize) -> Result<EvalSet> {
    if samples.is_empty() {
        return Err(Error::arg("evaluation needs at least one sample"));
    }
    let center = Augmentation {
        crop: (samples[0].side.saturating_sub(input_hw) / 2, samples[0].side.saturating_sub(input_hw) / 2),
        ..Augmentation::identity()
    };
    let mut set = EvalSet {
        batches: Vec::new(),
        masks: Vec::with_capacity(samples.len() * input_hw * input_hw),
        grades: samples.iter().map(|s| s.grade).collect(),
        indices: samples.iter().map(|s| s.index).collect(),
    };
    for chunk in samples.chunks(batch.max(1)) {
        let mut data = Vec::with_capacity(chunk.len() * 3 * input_hw * input_hw);
        for s in chunk {
            let (mut img, mask) = center.apply(s, input_hw)?;
            standardize(&mut img);
            data.extend_from_slice(&img);
            set.masks.extend_from_slice(&mask);
        }
        set.batches.push(Tensor::from_vec([chunk.len(), 3, input_hw, input_hw], data)?);
    }
    Ok(set)
}

/// Scores the model on `set`; also returns the predicted masks of the first
/// `keep` images.
pub fn evaluate(model: &ModelParams<f32>, set: &EvalSet, keep: usize) -> Result<(Metrics, Vec<Vec<u8>>)> {
    let cfg = &model.cfg;
    let mut cm = ConfusionMatrix::new(cfg.num_seg_classes);
    let mut grade_logits = Vec::new();
    let mut pred_grades = Vec::new();
    let mut kept = Vec::new();
    let mut offset = 0;
    for x in &set.batches {
        let out = forward_joint(model, x.clone(), BnMode::Eval)?;
        let [n, k, h, w] = out.seg_logits.shape();
        let plane = h * w;
        for i in 0..n {
            let logits = out.seg_logits.sample(i);
            let pred: Vec<u8> = (0..plane)
                .map(|p| argmax(&(0..k).map(|c| logits[c * plane + p]).collect::<Vec<_>>()) as u8)
                .collect();
            cm.accumulate(&set.masks[offset..offset + plane], &pred)?;
            offset += plane;
            if kept.len() < keep {
                kept.push(pred);
            }
            let g = out.grade_logits.sample(i);
            pred_grades.push(argmax(g) as u8);
            grade_logits.extend(g.iter().map(|&v| f64::from(v)));
        }
    }
    let labels: Vec<usize> = set.grades.iter().map(|&g| usize::from(g)).collect();
    let metrics = Metrics {
        miou: cm.miou()?,
        per_class_iou: cm.iou_per_class(),
        top1: topk_accuracy(&grade_logits, &labels, 1)?,
        top2: topk_accuracy(&grade_logits, &labels, 2.min(cfg.num_grades))?,
        binacc: binary_accuracy(&pred_grades, &set.grades)?,
        confusion: cm,
    };
    Ok((metrics, kept))
}

/// Endless reshuffled passes over `0..n`.
struct EpochSampler {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl EpochSampler {
    fn new(n: usize, rng: ChaCha8Rng) -> Self {
        EpochSampler {
            order: (0..n).collect(),
            pos: n,
            rng,
        }
    }

    fn next(&mut self) -> usize {
        if self.pos == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

fn draw_batch(
    samples: &[Sample],
    sampler: &mut EpochSampler,
    aug_rng: &mut ChaCha8Rng,
    size: usize,
    task: Task,
    hw: usize,
) -> Result<Batch<f32>> {
    let mut data = Vec::with_capacity(size * 3 * hw * hw);
    let mut labels = Vec::with_capacity(match task {
        Task::Clf => size,
        Task::Seg => size * hw * hw,
    });
    for _ in 0..size {
        let s = &samples[sampler.next()];
        let (mut img, mask) = augment(s, aug_rng, task, hw)?;
        standardize(&mut img);
        data.extend_from_slice(&img);
        match task {
            Task::Clf => labels.push(usize::from(s.grade)),
            Task::Seg => labels.extend(mask.iter().map(|&m| usize::from(m))),
        }
    }
    Ok(Batch {
        images: Tensor::from_vec([size, 3, hw, hw], data)?,
        labels,
    })
}

struct Sink<'a> {
    dir: &'a Path,
    report: fs::File,
}

impl<'a> Sink<'a> {
    fn open(dir: &'a Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("report.csv");
        let mut report = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        writeln!(report, "{REPORT_HEADER}").map_err(|e| Error::io(&path, e))?;
        Ok(Sink { dir, report })
    }

    fn row(&mut self, row: &ReportRow) -> Result<()> {
        writeln!(self.report, "{}", row.to_csv()).map_err(|e| Error::io(self.dir.join("report.csv"), e))
    }

    fn masks(&self, round: usize, indices: &[usize], masks: &[Vec<u8>], side: usize) -> Result<()> {
        let dir = self.dir.join("masks").join(format!("round_{round:06}"));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (&index, mask) in indices.iter().zip(masks) {
            let path = dir.join(format!("{index:06}.pgm"));
            fs::write(&path, encode_pgm8(mask, side)).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Runs `cfg.rounds` cooperative rounds from a fresh model. With `out`, the
/// report, predicted-mask dumps and checkpoints are written there as the run
/// progresses.
pub fn train(
    cfg: &TrainConfig,
    arch: &ArchConfig,
    train_set: &[Sample],
    val_set: &[Sample],
    out: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    arch.validate()?;
    if train_set.is_empty() {
        return Err(Error::arg("training set is empty"));
    }
    let started = Instant::now();
    let hw = arch.input_hw;
    let mut samples = train_set.to_vec();
    randomize_labels(&mut samples, cfg.random_label_fraction, cfg.seed, arch.num_grades)?;

    let mut model = build_model::<f32, _>(arch, &mut stream(cfg.seed, STREAM_INIT))?;
    let mut agents = Agents::new(&model, cfg.clf_lr(), cfg.seg_lr, cfg.momentum);
    let eval_set = prepare_eval_set(val_set, hw, cfg.eval_batch)?;
    let keep = cfg.mask_dumps.min(val_set.len());
    let mut sink = out.map(Sink::open).transpose()?;

    let mut clf_order = EpochSampler::new(samples.len(), stream(cfg.seed, STREAM_CLF_ORDER));
    let mut seg_order = EpochSampler::new(samples.len(), stream(cfg.seed, STREAM_SEG_ORDER));
    let mut clf_aug = stream(cfg.seed, STREAM_CLF_AUG);
    let mut seg_aug = stream(cfg.seed, STREAM_SEG_AUG);

    let mut rows = Vec::new();
    let mut emit = |row: ReportRow, kept: Option<Vec<Vec<u8>>>, sink: &mut Option<Sink>| -> Result<()> {
        if let Some(sink) = sink.as_mut() {
            sink.row(&row)?;
            if let Some(kept) = kept {
                sink.masks(row.round, &eval_set.indices[..keep], &kept, hw)?;
            }
        }
        rows.push(row);
        Ok(())
    };

    let (metrics, kept) = evaluate(&model, &eval_set, keep)?;
    emit(
        ReportRow {
            round: 0,
            clf_loss: None,
            seg_loss: None,
            clf_lr: None,
            seg_lr: None,
            metrics: Some(metrics),
        },
        Some(kept),
        &mut sink,
    )?;

    for round in 1..=cfg.rounds {
        let clf_lr = poly_lr(round - 1, cfg.rounds, cfg.clf_lr(), cfg.poly_power)?;
        let seg_lr = poly_lr(round - 1, cfg.rounds, cfg.seg_lr, cfg.poly_power)?;
        let clf = match cfg.mode.trains_classifier() {
            true => Some(draw_batch(&samples, &mut clf_order, &mut clf_aug, cfg.clf_batch, Task::Clf, hw)?),
            false => None,
        };
        let seg = match cfg.mode.trains_segmenter() {
            true => Some(draw_batch(&samples, &mut seg_order, &mut seg_aug, cfg.seg_batch(), Task::Seg, hw)?),
            false => None,
        };
        let losses = cooperative_round(&mut model, clf.as_ref(), seg.as_ref(), &mut agents, (clf_lr, seg_lr), cfg.mode)?;
        let evaluated = (round % cfg.eval_interval == 0 || round == cfg.rounds)
            .then(|| evaluate(&model, &eval_set, keep))
            .transpose()?;
        let (metrics, kept) = evaluated.unzip();
        emit(
            ReportRow {
                round,
                clf_loss: losses.clf,
                seg_loss: losses.seg,
                clf_lr: losses.clf.map(|_| clf_lr),
                seg_lr: losses.seg.map(|_| seg_lr),
                metrics,
            },
            kept,
            &mut sink,
        )?;
        if let Some(dir) = out {
            if cfg.checkpoint_interval > 0 && round % cfg.checkpoint_interval == 0 && round != cfg.rounds {
                save_checkpoint(&dir.join(format!("checkpoint_{round:06}.cseg")), &model, &agents, round as u64)?;
            }
        }
    }

    let report = ExperimentReport {
        seed: cfg.seed,
        corrupted_labels: samples.iter().filter(|s| s.corrupted).count(),
        rows,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    if let Some(dir) = out {
        save_checkpoint(&dir.join("checkpoint.cseg"), &model, &agents, cfg.rounds as u64)?;
        write_summary(dir, &report)?;
    }
    Ok(TrainOutcome { model, agents, report })
}

fn write_summary(dir: &Path, report: &ExperimentReport) -> Result<()> {
    let last = report.final_metrics();
    let summary = serde_json::json!({
        "seed": report.seed,
        "corrupted_labels": report.corrupted_labels,
        "rounds": report.rows.last().map_or(0, |r| r.round),
        "wall_clock_secs": report.wall_clock_secs,
        "final": last.map(|m| serde_json::json!({
            "miou": m.miou,
            "per_class_iou": m.per_class_iou,
            "top1": m.top1,
            "top2": m.top2,
            "binacc": m.binacc,
        })),
    });
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).expect("json value serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
