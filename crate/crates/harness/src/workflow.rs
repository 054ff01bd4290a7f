use std::collections::{BTreeMap, BTreeSet};

use anyhow::{bail, ensure, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ssada_core::adapt::{adapt, fit_domain_head, linear_probe, AdaptData, AdaptMethod, DannModel, ProbeModel};
use ssada_core::data::{
    gen_family, load_csv, split, stack_features, DomainFamily, DomainPool, DomainSpec, Role, SampleId,
    ShiftSpec,
};
use ssada_core::dino::{pretrain_ssl, DinoNet};
use ssada_core::labeler::{LabelRequest, Labeler};
use ssada_core::metrics::{auprc, RankedPredictions, ResultGrid, BASELINE};
use ssada_core::nn::{Network, Tensor};
use ssada_core::sampler::{select_aada, select_badge, select_clue, select_uniform, AcquisitionInput, Strategy};

use crate::config::{ExperimentConfig, GridEntry, LabelerMode};
use crate::report::{CurvePoint, ExperimentReport};

/// Source pool plus target pools, all with ground-truth labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub source: DomainPool<f64>,
    pub targets: Vec<DomainPool<f64>>,
}

impl Dataset {
    pub fn dim(&self) -> usize {
        self.source.dim().unwrap_or(0)
    }

    pub fn all_pools(&self) -> impl Iterator<Item = &DomainPool<f64>> {
        std::iter::once(&self.source).chain(&self.targets)
    }
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    if let (true, Some(family)) = (cfg.data.paths.is_empty(), &cfg.data.family) {
        let pools = gen_family::<f64>(family)?;
        let mut source = None;
        let mut targets = Vec::new();
        for (spec, pool) in family.domains.iter().zip(pools) {
            match spec.role {
                Role::Source if source.is_none() => source = Some(pool),
                Role::Source => bail!("family has more than one source domain"),
                Role::Target => targets.push(pool),
            }
        }
        let source = source.context("family has no source domain")?;
        return Ok(Dataset { source, targets });
    }
    let mut pools: Vec<DomainPool<f64>> = cfg
        .data
        .paths
        .iter()
        .map(|p| load_csv(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<_>>()?;
    ensure!(!pools.is_empty(), "no data paths configured");
    let idx = match &cfg.data.source {
        Some(name) => pools
            .iter()
            .position(|p| &p.name == name)
            .with_context(|| format!("source pool {name:?} not among the data paths"))?,
        None => 0,
    };
    let source = pools.remove(idx);
    ensure!(
        source.samples.iter().all(|s| s.label.is_some()),
        "source pool {} has unlabeled rows",
        source.name
    );
    Ok(Dataset { source, targets: pools })
}

/// Per-purpose random stream for one seed. Streams never overlap, so adding
/// or removing other seeds or cells leaves each one unchanged.
fn stream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng
}

const STREAM_BACKBONE: u64 = 1;
const STREAM_RETRAIN: u64 = 2;
const STREAM_PROBE: u64 = 3;
fn stream_uda(target: usize) -> u64 {
    1_000 + target as u64
}
/// Keyed by what the cell runs, not where it sits in the grid.
fn stream_cell(target: usize, entry: GridEntry) -> u64 {
    let strategy = match entry.strategy {
        Strategy::Uniform => 0,
        Strategy::Aada => 1,
        Strategy::Clue => 2,
        Strategy::Badge => 3,
    };
    let method = match entry.method {
        AdaptMethod::Finetune => 0,
        AdaptMethod::Dann => 1,
        AdaptMethod::Mme => 2,
    };
    1_000_000 + (target as u64) * 1_000 + strategy * 10 + method
}

fn corpus(cfg: &ExperimentConfig, dim: usize) -> Result<Tensor<f64>> {
    let c = &cfg.corpus;
    let family = DomainFamily {
        seed: c.seed,
        dim,
        base: c.base,
        noise: c.noise,
        latent_noise: 0.0,
        domains: vec![DomainSpec {
            name: "corpus".into(),
            n_samples: c.n_samples,
            positive_ratio: 0.5,
            positives: None,
            shift: ShiftSpec::default(),
            role: Role::Source,
        }],
    };
    let pools = gen_family::<f64>(&family)?;
    Ok(pools[0].features()?)
}

/// The backbone the probe is trained on: random, generically pretrained,
/// and optionally retrained on the pooled (unlabeled) domain data.
pub fn prepare_backbone(cfg: &ExperimentConfig, data: &Dataset, seed: u64) -> Result<Network<f64>> {
    let dim = data.dim();
    let mut rng = stream(seed, STREAM_BACKBONE);
    let backbone = cfg.backbone.build::<f64, _>(dim, &mut rng)?;
    let mut net = DinoNet::with_projector(backbone, cfg.projector, &mut rng)?;
    if cfg.workflow.ssl_pretrain {
        let x = corpus(cfg, dim)?;
        let out = pretrain_ssl(&x, net, &cfg.pretrain, &mut rng).context("generic pretraining")?;
        if out.collapsed {
            tracing::warn!(seed, "generic pretraining collapsed");
        }
        net = DinoNet::new(out.backbone, out.state.teacher.projector)?;
    }
    if cfg.workflow.ssl_retrain {
        let pools: Vec<&DomainPool<f64>> = data.all_pools().collect();
        let x = stack_features(&pools)?;
        let mut rng = stream(seed, STREAM_RETRAIN);
        let out = pretrain_ssl(&x, net, &cfg.retrain, &mut rng).context("in-domain retraining")?;
        if out.collapsed {
            tracing::warn!(seed, "in-domain retraining collapsed");
        }
        net = DinoNet::new(out.backbone, out.state.teacher.projector)?;
    }
    Ok(net.backbone)
}

pub fn train_probe(cfg: &ExperimentConfig, data: &Dataset, backbone: Network<f64>, seed: u64) -> Result<ProbeModel<f64>> {
    let x = data.source.features()?;
    let y = data.source.labels()?;
    let mut rng = stream(seed, STREAM_PROBE);
    Ok(linear_probe(backbone, &x, &y, &cfg.probe, &mut rng)?.model)
}

pub fn evaluate(model: &ProbeModel<f64>, pool: &DomainPool<f64>) -> Result<f64> {
    let scores = model.scores(&pool.features()?)?;
    Ok(auprc(&RankedPredictions::new(scores, pool.labels()?)?)?)
}

/// One target domain split into a query pool (labels hidden from training)
/// and a fixed evaluation pool.
#[derive(Debug, Clone)]
pub struct TargetSplit {
    pub query: DomainPool<f64>,
    pub eval: DomainPool<f64>,
}

pub fn split_target(cfg: &ExperimentConfig, pool: &DomainPool<f64>, seed: u64, index: usize) -> Result<TargetSplit> {
    let split_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64);
    let (query, eval) = split(pool, 1.0 - cfg.eval_fraction, split_seed)?;
    Ok(TargetSplit { query, eval })
}

/// Progress of one (seed, target, grid cell) through its rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaRoundState {
    pub round: usize,
    /// Every id queried so far, in query order.
    pub queried: Vec<SampleId>,
    pub labels: BTreeMap<SampleId, u8>,
    /// Query-pool ids not yet queried, in pool order.
    pub unlabeled: Vec<SampleId>,
    /// Evaluation AUPRC before any round, then after each round.
    pub auprc: Vec<f64>,
}

impl AdaRoundState {
    pub fn new(query: &DomainPool<f64>, start_auprc: f64) -> Self {
        Self {
            round: 0,
            queried: Vec::new(),
            labels: BTreeMap::new(),
            unlabeled: query.ids(),
            auprc: vec![start_auprc],
        }
    }
}

/// Everything a round reads besides its own state.
pub struct RoundContext<'a> {
    pub cfg: &'a ExperimentConfig,
    pub source_x: &'a Tensor<f64>,
    pub source_y: &'a [u8],
    pub split: &'a TargetSplit,
}

fn rows_for(pool: &DomainPool<f64>, ids: &[SampleId]) -> Result<Tensor<f64>> {
    let index: BTreeMap<SampleId, usize> = pool.samples.iter().enumerate().map(|(i, s)| (s.id, i)).collect();
    let rows: Vec<usize> = ids
        .iter()
        .map(|id| index.get(id).copied().with_context(|| format!("id {id} not in {}", pool.name)))
        .collect::<Result<_>>()?;
    let x = pool.features()?;
    Ok(x.select_rows(&rows))
}

fn acquisition_inputs(
    model: &DannModel<f64>,
    ids: &[SampleId],
    x: &Tensor<f64>,
) -> Result<Vec<AcquisitionInput<f64>>> {
    let feats = model.probe.features(x)?;
    let probs = model.probe.head.forward(&feats)?.softmax_rows();
    let dom = model.domain_probs(x)?;
    Ok(ids
        .iter()
        .enumerate()
        .map(|(i, &id)| AcquisitionInput {
            id,
            features: feats.row(i).to_vec(),
            class_probs: probs.row(i).to_vec(),
            domain_prob: dom[i],
        })
        .collect())
}

/// Selects `budget` ids, has them labeled, adapts `model` on every label so
/// far and evaluates. On any error, including a labeler timeout, `state` and
/// `model` are left untouched.
pub fn run_ada_round(
    ctx: &RoundContext<'_>,
    state: &AdaRoundState,
    model: &mut DannModel<f64>,
    entry: GridEntry,
    labeler: &mut dyn Labeler,
    rng: &mut ChaCha8Rng,
) -> Result<AdaRoundState> {
    let cfg = ctx.cfg;
    ensure!(!state.unlabeled.is_empty(), "unlabeled target pool is empty");
    let mut work = model.clone();
    let mut work_rng = rng.clone();
    let pool_x = rows_for(&ctx.split.query, &state.unlabeled)?;

    if entry.strategy == Strategy::Aada {
        fit_domain_head(&mut work, ctx.source_x, &pool_x, &cfg.adapt, &mut work_rng)?;
    }
    let inputs = acquisition_inputs(&work, &state.unlabeled, &pool_x)?;
    let query = match entry.strategy {
        Strategy::Uniform => select_uniform(&state.unlabeled, cfg.budget, &mut work_rng),
        Strategy::Aada => select_aada(&inputs, cfg.budget)?,
        Strategy::Clue => select_clue(&inputs, cfg.budget, cfg.clue_temperature, &mut work_rng)?,
        Strategy::Badge => select_badge(&inputs, cfg.budget, &mut work_rng)?,
    }
    .with_round(state.round);

    let eval_ids: BTreeSet<SampleId> = ctx.split.eval.ids().into_iter().collect();
    if let Some(leak) = query.ids.iter().find(|id| eval_ids.contains(id)) {
        bail!("label leakage: evaluation sample {leak} was queried");
    }
    let pending: BTreeSet<SampleId> = state.unlabeled.iter().copied().collect();
    ensure!(
        query.ids.iter().all(|id| pending.contains(id)),
        "strategy returned an id outside the unlabeled pool"
    );

    let request = LabelRequest::from_pool(state.round, &ctx.split.query, &query.ids)?;
    let answered = labeler.resolve(&request)?;
    let asked: BTreeSet<SampleId> = query.ids.iter().copied().collect();
    ensure!(
        answered.keys().copied().collect::<BTreeSet<_>>() == asked,
        "labeler answered a different id set than was queried"
    );
    ensure!(answered.values().all(|&l| l <= 1), "labeler returned a non-binary label");

    let mut next = state.clone();
    next.round += 1;
    next.queried.extend(&query.ids);
    next.labels.extend(answered);
    next.unlabeled.retain(|id| !asked.contains(id));

    let labeled_ids: Vec<SampleId> = next.labels.keys().copied().collect();
    let labeled_x = rows_for(&ctx.split.query, &labeled_ids)?;
    let labeled_y: Vec<u8> = next.labels.values().copied().collect();
    let target_x = if next.unlabeled.is_empty() {
        labeled_x.clone()
    } else {
        rows_for(&ctx.split.query, &next.unlabeled)?
    };
    let data = AdaptData {
        source_x: ctx.source_x,
        source_y: ctx.source_y,
        target_x: &target_x,
        labeled_x: &labeled_x,
        labeled_y: &labeled_y,
    };
    adapt(&mut work, entry.method, &data, &cfg.adapt, &mut work_rng)?;
    next.auprc.push(evaluate(&work.probe, &ctx.split.eval)?);

    *model = work;
    *rng = work_rng;
    Ok(next)
}

/// Results of one seed, before assembly into the report.
#[derive(Debug, Clone)]
struct SeedResult {
    /// target name -> method name -> final AUPRC.
    finals: BTreeMap<String, BTreeMap<String, f64>>,
    curves: Vec<CurvePoint>,
}

/// Probe (and optional unsupervised DANN) for one target: the baseline model.
fn start_model(
    cfg: &ExperimentConfig,
    probe: &ProbeModel<f64>,
    source_x: &Tensor<f64>,
    source_y: &[u8],
    split: &TargetSplit,
    seed: u64,
    target: usize,
) -> Result<ProbeModel<f64>> {
    if !cfg.workflow.uda_dann {
        return Ok(probe.clone());
    }
    let mut rng = stream(seed, stream_uda(target));
    let mut model = DannModel::new(probe.clone(), &cfg.uda.domain_hidden, &mut rng)?;
    let target_x = split.query.features()?;
    let empty = Tensor::zeros(&[0, target_x.cols()]);
    let data = AdaptData {
        source_x,
        source_y,
        target_x: &target_x,
        labeled_x: &empty,
        labeled_y: &[],
    };
    adapt(&mut model, AdaptMethod::Dann, &data, &cfg.uda, &mut rng)?;
    Ok(model.probe)
}

fn run_seed(cfg: &ExperimentConfig, data: &Dataset, seed: u64, labeler: &mut dyn Labeler) -> Result<SeedResult> {
    let backbone = prepare_backbone(cfg, data, seed)?;
    let probe = train_probe(cfg, data, backbone, seed).context("linear probe")?;
    let source_x = data.source.features()?;
    let source_y = data.source.labels()?;
    let mut finals = BTreeMap::new();
    let mut curves = Vec::new();
    for (t, pool) in data.targets.iter().enumerate() {
        let split = split_target(cfg, pool, seed, t).with_context(|| format!("splitting {}", pool.name))?;
        let start = start_model(cfg, &probe, &source_x, &source_y, &split, seed, t)
            .with_context(|| format!("seed {seed}, domain {}, unsupervised DANN", pool.name))?;
        let base = evaluate(&start, &split.eval)?;
        let mut row = BTreeMap::from([(BASELINE.to_string(), base)]);
        let ctx = RoundContext {
            cfg,
            source_x: &source_x,
            source_y: &source_y,
            split: &split,
        };
        for entry in &cfg.grid {
            let name = entry.name();
            let mut rng = stream(seed, stream_cell(t, *entry));
            let mut model = DannModel::new(start.clone(), &cfg.adapt.domain_hidden, &mut rng)?;
            let mut state = AdaRoundState::new(&split.query, base);
            for _ in 0..cfg.rounds {
                if state.unlabeled.is_empty() {
                    break;
                }
                state = run_ada_round(&ctx, &state, &mut model, *entry, labeler, &mut rng)
                    .with_context(|| format!("seed {seed}, domain {}, method {name}, round {}", pool.name, state.round))?;
            }
            for (r, &v) in state.auprc.iter().enumerate() {
                curves.push(CurvePoint {
                    seed,
                    domain: pool.name.clone(),
                    method: name.clone(),
                    round: r,
                    labeled: (r * cfg.budget).min(state.queried.len()),
                    auprc: v,
                });
            }
            row.insert(name, *state.auprc.last().expect("starts with the baseline"));
        }
        finals.insert(pool.name.clone(), row);
    }
    Ok(SeedResult { finals, curves })
}

/// Runs every seed and assembles the report. `labeler` supplies a labeler
/// per seed. With `cfg.parallel`, the oracle labeler and more than one seed,
/// the seeds run on separate threads; the report does not depend on it.
pub fn run_workflow<L, F>(cfg: &ExperimentConfig, mut labeler: F) -> Result<ExperimentReport>
where
    L: Labeler + Send,
    F: FnMut(u64) -> L,
{
    cfg.validate()?;
    let data = load_data(cfg)?;
    let results: Vec<SeedResult> = if cfg.parallel && cfg.labeler == LabelerMode::Oracle && cfg.seeds.len() > 1 {
        let labelers: Vec<L> = cfg.seeds.iter().map(|&s| labeler(s)).collect();
        std::thread::scope(|scope| {
            let handles: Vec<_> = cfg
                .seeds
                .iter()
                .zip(labelers)
                .map(|(&seed, mut l)| {
                    let data = &data;
                    scope.spawn(move || run_seed(cfg, data, seed, &mut l))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| bail!("seed worker panicked")))
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        cfg.seeds
            .iter()
            .map(|&seed| run_seed(cfg, &data, seed, &mut labeler(seed)))
            .collect::<Result<_>>()?
    };
    assemble(cfg, &data, results)
}

fn assemble(cfg: &ExperimentConfig, data: &Dataset, results: Vec<SeedResult>) -> Result<ExperimentReport> {
    let domains: Vec<String> = data.targets.iter().map(|p| p.name.clone()).collect();
    let mut methods = vec![BASELINE.to_string()];
    methods.extend(cfg.grid.iter().map(GridEntry::name));
    let mut grid = ResultGrid::new(cfg.seeds.clone(), domains.clone(), methods.clone());
    for d in &domains {
        for m in &methods {
            let values: Vec<f64> = results.iter().map(|r| r.finals[d][m]).collect();
            grid.insert(d, m, values)?;
        }
    }
    let curves = results.into_iter().flat_map(|r| r.curves).collect();
    Ok(ExperimentReport { grid, curves })
}
