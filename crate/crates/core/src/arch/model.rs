use std::collections::BTreeMap;

use rand::Rng;

use super::layers::{ConvUnit, DenseUnit, InceptionBlock, UpUnit};
use super::pag::{pag_merge, pag_select};
use super::params::{ModelParams, Partition, PartitionId};
use super::{ArchConfig, PagFusion};
use crate::engine::{BatchStats, BnMode, Float, Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Encoder feature maps taken right before each spatial reduction, plus the
/// bottleneck both heads read.
#[derive(Debug, Clone)]
pub struct EncoderTaps {
    pub taps: Vec<(usize, Var)>,
    pub bottleneck: Var,
}

/// A forward pass over one graph: resolves parameter names to graph leaves
/// and collects train-mode batch statistics.
pub struct Session<'a, T: Float> {
    pub g: &'a mut Graph<T>,
    model: &'a ModelParams<T>,
    mode: BnMode,
    vars: BTreeMap<String, Var>,
    bn_updates: Vec<(String, BatchStats<T>)>,
}

/// What a finished [`Session`] leaves behind.
#[derive(Debug, Default)]
pub struct SessionRecord<T> {
    pub vars: BTreeMap<String, Var>,
    pub bn_updates: Vec<(String, BatchStats<T>)>,
}

impl<'a, T: Float> Session<'a, T> {
    pub fn new(g: &'a mut Graph<T>, model: &'a ModelParams<T>, mode: BnMode) -> Self {
        Self::with_vars(g, model, mode, BTreeMap::new())
    }

    /// Session whose parameters are (partly) pre-bound to existing leaves.
    pub fn with_vars(g: &'a mut Graph<T>, model: &'a ModelParams<T>, mode: BnMode, vars: BTreeMap<String, Var>) -> Self {
        Session {
            g,
            model,
            mode,
            vars,
            bn_updates: Vec::new(),
        }
    }

    pub fn mode(&self) -> BnMode {
        self.mode
    }

    pub fn model(&self) -> &ModelParams<T> {
        self.model
    }

    /// Graph leaf for a named parameter, created on first use.
    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.vars.get(name) {
            return Ok(v);
        }
        let t = self.model.param(name)?.clone();
        let v = self.g.param(name, t);
        self.vars.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn batch_norm(&mut self, name: &str, x: Var) -> Result<Var> {
        let gamma = self.param(&format!("{name}.gamma"))?;
        let beta = self.param(&format!("{name}.beta"))?;
        let rs = self.model.running(name)?;
        let (y, stats) = self.g.batch_norm(x, gamma, beta, &rs.mean, &rs.var, self.mode)?;
        if let Some(stats) = stats {
            self.bn_updates.push((name.to_string(), stats));
        }
        Ok(y)
    }

    pub fn finish(self) -> SessionRecord<T> {
        SessionRecord {
            vars: self.vars,
            bn_updates: self.bn_updates,
        }
    }

    /// Shared trunk: stem, then per level its inception blocks, a tap, and a
    /// stride-2 conv into the next level (the last one yields the bottleneck).
    pub fn trunk(&mut self, x: Var) -> Result<EncoderTaps> {
        let cfg = &self.model.cfg;
        let [_, c, h, w] = self.g.value(x).shape();
        if c != 3 || h != cfg.input_hw || w != cfg.input_hw {
            return Err(Error::dim(format!(
                "model input must be (N,3,{0},{0}), got (N,{c},{h},{w})",
                cfg.input_hw
            )));
        }
        let top = Topology::new(cfg)?;
        let mut y = top.stem.forward(self, x)?;
        let mut taps = Vec::new();
        for (i, level) in top.levels.iter().enumerate() {
            for block in &level.blocks {
                y = block.forward(self, y)?;
            }
            taps.push((i, y));
            y = level.down.forward(self, y)?;
        }
        Ok(EncoderTaps { taps, bottleneck: y })
    }

    /// Classifier head: factorized inception blocks, global pool, dense layer.
    pub fn classifier(&mut self, taps: &EncoderTaps) -> Result<Var> {
        let top = Topology::new(&self.model.cfg)?;
        let mut y = taps.bottleneck;
        for block in &top.head_blocks {
            y = block.forward(self, y)?;
        }
        let pooled = self.g.global_avg_pool(y)?;
        top.fc.forward(self, pooled)
    }

    /// Decoder: per level in reverse, 2× transposed conv then attention merge
    /// with the selected encoder taps; a final 1×1 conv gives class logits.
    pub fn decoder(&mut self, taps: &EncoderTaps) -> Result<Var> {
        let top = Topology::new(&self.model.cfg)?;
        let mut y = taps.bottleneck;
        for stage in &top.stages {
            let u = stage.up.forward(self, y)?;
            let selected = match self.model.cfg.pag_fusion {
                PagFusion::Concat => pag_select(self.g, taps, u)?,
                PagFusion::Off => Vec::new(),
            };
            y = pag_merge(self, u, &selected, &stage.merge)?;
        }
        top.out.forward(self, y)
    }
}

struct LevelTopo {
    blocks: Vec<InceptionBlock>,
    down: ConvUnit,
}

struct StageTopo {
    up: UpUnit,
    merge: ConvUnit,
}

/// Layer layout derived from an [`ArchConfig`].
struct Topology {
    stem: ConvUnit,
    levels: Vec<LevelTopo>,
    head_blocks: Vec<InceptionBlock>,
    fc: DenseUnit,
    stages: Vec<StageTopo>,
    out: ConvUnit,
}

impl Topology {
    fn new(cfg: &ArchConfig) -> Result<Self> {
        cfg.validate()?;
        let m = PartitionId::Trunk.prefix();
        let c = PartitionId::Classifier.prefix();
        let s = PartitionId::Decoder.prefix();
        let stem = ConvUnit::new(format!("{m}stem"), 3, cfg.stem_channels, (3, 3));
        let mut levels = Vec::new();
        for (i, level) in cfg.levels.iter().enumerate() {
            let blocks = (0..level.blocks)
                .map(|b| InceptionBlock::new(format!("{m}l{i}.block{b}"), level.channels, false))
                .collect::<Result<Vec<_>>>()?;
            let next = cfg
                .levels
                .get(i + 1)
                .map_or(cfg.bottleneck_channels, |l| l.channels);
            let down = ConvUnit::new(format!("{m}l{i}.down"), level.channels, next, (3, 3)).stride(2);
            levels.push(LevelTopo { blocks, down });
        }
        let head_blocks = (0..cfg.clf_head_blocks)
            .map(|b| InceptionBlock::new(format!("{c}block{b}"), cfg.bottleneck_channels, true))
            .collect::<Result<Vec<_>>>()?;
        let fc = DenseUnit {
            name: format!("{c}fc"),
            cin: cfg.bottleneck_channels,
            cout: cfg.num_grades,
        };
        let mut stages = Vec::new();
        let n = cfg.levels.len();
        let mut cin = cfg.bottleneck_channels;
        for i in (0..n).rev() {
            let cout = cin / 2;
            let up = UpUnit {
                name: format!("{s}up{i}"),
                cin,
                cout,
            };
            let tap_channels: usize = match cfg.pag_fusion {
                // taps at this stage: every level j ≤ i has resolution ≥ stage i's
                PagFusion::Concat => cfg.levels[..=i].iter().map(|l| l.channels).sum(),
                PagFusion::Off => 0,
            };
            let merge = ConvUnit::new(format!("{s}merge{i}"), cout + tap_channels, cout, (1, 1));
            stages.push(StageTopo { up, merge });
            cin = cout;
        }
        let out = ConvUnit::new(format!("{s}out"), cin, cfg.num_seg_classes, (1, 1)).head();
        Ok(Topology {
            stem,
            levels,
            head_blocks,
            fc,
            stages,
            out,
        })
    }
}

/// Initializes every parameter of the joint model: He-normal weights
/// (fan-in), BN gamma 1 and beta 0, zero biases.
pub fn build_model<T: Float, R: Rng + ?Sized>(cfg: &ArchConfig, rng: &mut R) -> Result<ModelParams<T>> {
    let top = Topology::new(cfg)?;
    let mut trunk = Partition::default();
    let mut classifier = Partition::default();
    let mut decoder = Partition::default();
    top.stem.init(&mut trunk, rng)?;
    for level in &top.levels {
        for block in &level.blocks {
            block.init(&mut trunk, rng)?;
        }
        level.down.init(&mut trunk, rng)?;
    }
    for block in &top.head_blocks {
        block.init(&mut classifier, rng)?;
    }
    top.fc.init(&mut classifier, rng)?;
    for stage in &top.stages {
        stage.up.init(&mut decoder, rng)?;
        stage.merge.init(&mut decoder, rng)?;
    }
    top.out.init(&mut decoder, rng)?;
    Ok(ModelParams {
        cfg: cfg.clone(),
        trunk,
        classifier,
        decoder,
    })
}

/// Result of [`forward_joint`] as plain tensors.
#[derive(Debug, Clone)]
pub struct JointOutput<T> {
    pub grade_logits: Tensor<T>,
    pub seg_logits: Tensor<T>,
    /// `(level, shape)` of each encoder tap, and the bottleneck shape.
    pub tap_shapes: Vec<(usize, [usize; 4])>,
    pub bottleneck_shape: [usize; 4],
    pub bn_updates: Vec<(String, BatchStats<T>)>,
}

/// Evaluates the trunk once and both heads on its bottleneck.
pub fn forward_joint<T: Float>(model: &ModelParams<T>, x: Tensor<T>, mode: BnMode) -> Result<JointOutput<T>> {
    let mut g = Graph::new();
    let mut s = Session::new(&mut g, model, mode);
    let input = s.g.input(x);
    let taps = s.trunk(input)?;
    let grade = s.classifier(&taps)?;
    let seg = s.decoder(&taps)?;
    let record = s.finish();
    Ok(JointOutput {
        grade_logits: g.value(grade).clone(),
        seg_logits: g.value(seg).clone(),
        tap_shapes: taps.taps.iter().map(|&(i, v)| (i, g.value(v).shape())).collect(),
        bottleneck_shape: g.value(taps.bottleneck).shape(),
        bn_updates: record.bn_updates,
    })
}
