//! Per-cell evaluation of the seven strategies.
//!
//! Everything that does not depend on the labeled target epochs (epoch
//! covariances, per-source models, the source-only model, source kernel
//! distances, source votes on target epochs) is computed once per subject or
//! per target and shared by all cells.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{BenchConfig, Record, ResultTable, Strategy};
use crate::csp::compute_csp;
use crate::data::{epoch_covariance, weighted_mean, Label, LabeledEpoch, SpatialCovariance, SubjectDataset};
use crate::error::{Error, Result};
use crate::lda::label_for_score;
use crate::pipeline::{train_csp_lda, train_lda, CspLda, Sample};
use crate::transfer::covariance::{
    cm1_affinities, cm1_combine, cm2_combine, cm2_lambda, select_sources, target_loo_accuracy, Cm1Config,
    SourceAffinity, RAND_ACC,
};
use crate::transfer::instance::{covariance_representation, InstanceWeights, KmmConfig, SourceGeometry};
use crate::transfer::model::{optimize_weights, votes_matrix, EnsembleWeights, SourceModel, SourceModelBank};

/// Labeled pool (in the order epochs are added) and test epochs of one
/// target subject in one repetition, as indices into its epoch list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub pool: Vec<usize>,
    pub test: Vec<usize>,
}

/// Draws a class-balanced pool of `pool_size` epochs, alternating classes
/// (class 0 first), so that every even-length prefix is balanced.
///
/// The random stream depends only on `(base_seed, subject, rep)`.
pub fn draw_pool(labels: &[Label], pool_size: usize, base_seed: u64, subject: usize, rep: usize) -> Result<Split> {
    let half = pool_size / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(((subject as u64) << 32) | rep as u64);
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, l) in labels.iter().enumerate() {
        by_class[l.index()].push(i);
    }
    for (class, idx) in by_class.iter_mut().enumerate() {
        if idx.len() < half {
            return Err(Error::config(format!(
                "{} epochs of class {class}, the pool needs {half}",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
    }
    if labels.len() <= pool_size {
        return Err(Error::config(format!(
            "{} epochs leave no test epochs after a pool of {pool_size}",
            labels.len()
        )));
    }
    let pool: Vec<usize> = (0..half).flat_map(|k| [by_class[0][k], by_class[1][k]]).collect();
    let mut in_pool = vec![false; labels.len()];
    for &i in &pool {
        in_pool[i] = true;
    }
    let test = (0..labels.len()).filter(|&i| !in_pool[i]).collect();
    Ok(Split { pool, test })
}

#[derive(Debug, Clone, Copy, Default)]
struct Needs {
    reps: bool,
    class_means: bool,
    pooled: bool,
    model: bool,
    bl2: bool,
}

impl Needs {
    fn of(strategies: &[Strategy]) -> Self {
        let has = |s: Strategy| strategies.contains(&s);
        Needs {
            reps: has(Strategy::Ia),
            class_means: has(Strategy::Cm1) || has(Strategy::Cm2),
            pooled: has(Strategy::Cm1),
            model: has(Strategy::Ma),
            bl2: has(Strategy::Bl2),
        }
    }
}

/// Covariances, labels and (for IA) kernel representations of one subject's epochs.
struct Epochs {
    covs: Vec<SpatialCovariance>,
    labels: Vec<Label>,
    reps: Vec<Vec<f64>>,
}

impl Epochs {
    fn new<'e>(epochs: impl Iterator<Item = &'e LabeledEpoch>, needs: Needs) -> Result<Self> {
        let mut covs = Vec::new();
        let mut labels = Vec::new();
        for e in epochs {
            covs.push(epoch_covariance(&e.epoch, true)?);
            labels.push(e.label);
        }
        let reps = if needs.reps {
            covs.iter().map(covariance_representation).collect()
        } else {
            Vec::new()
        };
        Ok(Epochs { covs, labels, reps })
    }

    fn samples(&self, idx: impl IntoIterator<Item = usize>) -> Vec<Sample<'_>> {
        idx.into_iter().map(|i| Sample::new(&self.covs[i], self.labels[i])).collect()
    }

    fn all_samples(&self) -> Vec<Sample<'_>> {
        self.samples(0..self.covs.len())
    }
}

struct SubjectCache {
    id: String,
    epochs: Epochs,
    class_means: Option<[SpatialCovariance; 2]>,
    pooled: Option<SpatialCovariance>,
    model: Option<CspLda>,
}

impl SubjectCache {
    fn new(ds: &SubjectDataset, needs: Needs, filters_per_class: usize) -> Result<Self> {
        Self::build(ds, needs, filters_per_class).map_err(|e| e.in_subject(ds.subject_id()))
    }

    fn build(ds: &SubjectDataset, needs: Needs, filters_per_class: usize) -> Result<Self> {
        let epochs = Epochs::new(ds.epochs().iter(), needs)?;
        let class_means = if needs.class_means {
            let mean = |label: Label| {
                weighted_mean(
                    epochs
                        .covs
                        .iter()
                        .zip(&epochs.labels)
                        .filter(|(_, l)| **l == label)
                        .map(|(c, _)| (c, 1.0)),
                    label,
                )
            };
            Some([mean(Label::Zero)?, mean(Label::One)?])
        } else {
            None
        };
        let pooled = if needs.pooled {
            Some(pooled_mean(epochs.covs.iter())?)
        } else {
            None
        };
        let model = if needs.model {
            Some(train_csp_lda(&epochs.all_samples(), filters_per_class)?)
        } else {
            None
        };
        Ok(SubjectCache {
            id: ds.subject_id().to_owned(),
            epochs,
            class_means,
            pooled,
            model,
        })
    }

    fn class_mean(&self, label: Label) -> &SpatialCovariance {
        &self.class_means.as_ref().expect("class means cached")[label.index()]
    }
}

fn pooled_mean<'a>(covs: impl ExactSizeIterator<Item = &'a SpatialCovariance>) -> Result<SpatialCovariance> {
    let w = 1.0 / covs.len() as f64;
    SpatialCovariance::combination(covs.map(|c| (c, w)))
}

/// Everything about the sources of one target that no cell changes.
struct TargetContext<'a> {
    sources: Vec<&'a SubjectCache>,
    per_source: Vec<Vec<Sample<'a>>>,
    all_sources: Vec<Sample<'a>>,
    bl2: Option<CspLda>,
    bank: Option<SourceModelBank>,
    geometry: Option<SourceGeometry>,
}

impl<'a> TargetContext<'a> {
    fn new(sources: Vec<&'a SubjectCache>, needs: Needs, filters_per_class: usize) -> Result<Self> {
        let per_source: Vec<Vec<Sample<'a>>> = sources.iter().map(|s| s.epochs.all_samples()).collect();
        let all_sources: Vec<Sample<'a>> = per_source.iter().flatten().copied().collect();
        let bl2 = if needs.bl2 {
            Some(train_csp_lda(&all_sources, filters_per_class).map_err(|e| e.in_strategy(Strategy::Bl2))?)
        } else {
            None
        };
        let bank = if needs.model {
            let models = sources
                .iter()
                .map(|s| SourceModel {
                    subject_id: s.id.clone(),
                    model: s.model.clone().expect("source models cached"),
                })
                .collect();
            Some(SourceModelBank::new(models)?)
        } else {
            None
        };
        let geometry = if needs.reps {
            let reps = sources.iter().flat_map(|s| s.epochs.reps.iter().cloned()).collect();
            Some(SourceGeometry::new(reps)?)
        } else {
            None
        };
        Ok(TargetContext {
            sources,
            per_source,
            all_sources,
            bl2,
            bank,
            geometry,
        })
    }
}

/// The target's epochs plus the source votes on each of them (for MA).
struct TargetView<'a> {
    epochs: &'a Epochs,
    votes: Option<DMatrix<f64>>,
}

impl<'a> TargetView<'a> {
    fn new(epochs: &'a Epochs, ctx: &TargetContext<'_>) -> Result<Self> {
        let votes = match &ctx.bank {
            Some(bank) => Some(votes_matrix(bank, epochs.covs.iter()).map_err(|e| e.in_strategy(Strategy::Ma))?),
            None => None,
        };
        Ok(TargetView { epochs, votes })
    }
}

fn accuracy(model: &CspLda, target: &Epochs, test: &[usize]) -> Result<f64> {
    let mut correct = 0usize;
    for &i in test {
        if model.predict_covariance(&target.covs[i])?.0 == target.labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

/// Per-class fused covariances `(1 − λ)Σ_t + λ·Σ_z c_z Σ_s^z`; with no
/// labeled target epochs only the source term is used.
fn fused_means(
    labeled: &[Sample<'_>],
    fuse: impl Fn(&SpatialCovariance, Label) -> Result<SpatialCovariance>,
    sources_only: impl Fn(Label) -> Result<SpatialCovariance>,
) -> Result<[SpatialCovariance; 2]> {
    if labeled.is_empty() {
        return Ok([sources_only(Label::Zero)?, sources_only(Label::One)?]);
    }
    let [t0, t1] = crate::pipeline::class_means(labeled)?;
    Ok([fuse(&t0, Label::Zero)?, fuse(&t1, Label::One)?])
}

fn with_sources<'a>(labeled: &[Sample<'a>], sources: impl IntoIterator<Item = &'a [Sample<'a>]>) -> Vec<Sample<'a>> {
    let mut out = labeled.to_vec();
    for s in sources {
        out.extend_from_slice(s);
    }
    out
}

fn evaluate(
    strategy: Strategy,
    ctx: &TargetContext<'_>,
    target: &TargetView<'_>,
    labeled_idx: &[usize],
    test: &[usize],
    cfg: &BenchConfig,
    warm: &mut Option<Vec<f64>>,
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::InsufficientData("no test epochs".into()));
    }
    if strategy != Strategy::Bl1 && ctx.sources.is_empty() {
        return Err(Error::config("no source subjects"));
    }
    let f = cfg.filters_per_class;
    let epochs = target.epochs;
    let m = labeled_idx.len();
    let labeled = epochs.samples(labeled_idx.iter().copied());
    match strategy {
        Strategy::Bl1 => {
            if m == 0 {
                return Ok(RAND_ACC);
            }
            accuracy(&train_csp_lda(&labeled, f)?, epochs, test)
        }
        Strategy::Bl2 => accuracy(ctx.bl2.as_ref().expect("source-only model cached"), epochs, test),
        Strategy::Bl3 => {
            let samples = with_sources(&labeled, [ctx.all_sources.as_slice()]);
            accuracy(&train_csp_lda(&samples, f)?, epochs, test)
        }
        Strategy::Cm1 => {
            let (affinity, lambda) = if m == 0 {
                (SourceAffinity::uniform(ctx.sources.len()), 1.0)
            } else {
                let source_pooled: Vec<SpatialCovariance> = ctx
                    .sources
                    .iter()
                    .map(|s| s.pooled.clone().expect("pooled covariances cached"))
                    .collect();
                let target_pooled = pooled_mean(labeled.iter().map(|s| s.covariance))?;
                (cm1_affinities(&source_pooled, &target_pooled)?, cfg.cm1_lambda)
            };
            let class_list = |label: Label| -> Vec<SpatialCovariance> {
                ctx.sources.iter().map(|s| s.class_mean(label).clone()).collect()
            };
            let [s0, s1] = fused_means(
                &labeled,
                |t, label| cm1_combine(t, &class_list(label), &affinity, Cm1Config { lambda }),
                |label| {
                    SpatialCovariance::combination(
                        ctx.sources.iter().zip(&affinity.alpha).map(|(s, a)| (s.class_mean(label), *a)),
                    )
                },
            )?;
            let bank = compute_csp(&s0, &s1, f)?;
            let samples = with_sources(&labeled, [ctx.all_sources.as_slice()]);
            let lda = train_lda(&bank, &samples)?;
            accuracy(&CspLda { bank, lda }, epochs, test)
        }
        Strategy::Cm2 => {
            let (selected, lambda): (Vec<usize>, f64) = if m < 4 {
                ((0..ctx.sources.len()).collect(), 1.0)
            } else {
                let selection = select_sources(&labeled, &ctx.per_source, f)?;
                let target_acc = target_loo_accuracy(&labeled, f)?;
                let lambda = cm2_lambda(target_acc, selection.accuracy, RAND_ACC)?;
                (selection.subjects, lambda)
            };
            let class_list = |label: Label| -> Vec<SpatialCovariance> {
                selected.iter().map(|&z| ctx.sources[z].class_mean(label).clone()).collect()
            };
            let share = 1.0 / selected.len() as f64;
            let [s0, s1] = fused_means(
                &labeled,
                |t, label| cm2_combine(t, &class_list(label), lambda),
                |label| {
                    SpatialCovariance::combination(
                        selected.iter().map(|&z| (ctx.sources[z].class_mean(label), share)),
                    )
                },
            )?;
            let bank = compute_csp(&s0, &s1, f)?;
            let samples = with_sources(&labeled, selected.iter().map(|&z| ctx.per_source[z].as_slice()));
            let lda = train_lda(&bank, &samples)?;
            accuracy(&CspLda { bank, lda }, epochs, test)
        }
        Strategy::Ma => {
            let votes = target.votes.as_ref().expect("source votes cached");
            let z = votes.ncols();
            let weights = if m == 0 {
                EnsembleWeights::uniform(z)
            } else {
                let p = votes.select_rows(labeled_idx);
                let y: Vec<f64> = labeled.iter().map(|s| s.label.sign()).collect();
                optimize_weights(&p, &y)?
            };
            let w = weights.as_slice();
            let correct = test
                .iter()
                .filter(|&&i| {
                    let score: f64 = (0..z).map(|k| w[k] * votes[(i, k)]).sum();
                    label_for_score(score) == epochs.labels[i]
                })
                .count();
            Ok(correct as f64 / test.len() as f64)
        }
        Strategy::Ia => {
            let beta = if m == 0 {
                InstanceWeights::uniform(ctx.all_sources.len())
            } else {
                let reps: Vec<Vec<f64>> = labeled_idx.iter().map(|&i| epochs.reps[i].clone()).collect();
                let beta = ctx
                    .geometry
                    .as_ref()
                    .expect("source geometry cached")
                    .weights_from(&reps, &KmmConfig::default(), warm.as_deref())?;
                *warm = Some(beta.as_slice().to_vec());
                beta
            };
            let mut samples = labeled;
            samples.extend(
                ctx.all_sources
                    .iter()
                    .zip(beta.as_slice())
                    .map(|(s, &b)| Sample::weighted(s.covariance, s.label, b)),
            );
            accuracy(&train_csp_lda(&samples, f)?, epochs, test)
        }
    }
}

/// Records for one target and repetition, `m` ascending.
///
/// IA starts each kernel-mean-matching solve from the weights found at the
/// previous `m`.
fn cell_records(
    ctx: &TargetContext<'_>,
    view: &TargetView<'_>,
    subject: &str,
    split: &Split,
    rep: usize,
    m_values: &[usize],
    strategies: &[Strategy],
    cfg: &BenchConfig,
) -> Result<Vec<Record>> {
    let mut warm = None;
    let mut out = Vec::with_capacity(m_values.len() * strategies.len());
    for &m in m_values {
        for &s in strategies {
            let accuracy = evaluate(s, ctx, view, &split.pool[..m], &split.test, cfg, &mut warm)
                .map_err(|e| e.in_strategy(s).in_subject(subject))?;
            out.push(Record {
                subject: subject.to_owned(),
                strategy: s,
                m,
                rep,
                accuracy,
            });
        }
    }
    Ok(out)
}

/// Trains one strategy on `target_labeled` (plus `sources`) and returns its
/// accuracy on `target_test`.
pub fn run_strategy(
    strategy: Strategy,
    target_labeled: &[LabeledEpoch],
    target_test: &[LabeledEpoch],
    sources: &[SubjectDataset],
    cfg: &BenchConfig,
) -> Result<f64> {
    cfg.validate()?;
    let needs = Needs::of(&[strategy]);
    let caches = sources
        .iter()
        .map(|s| SubjectCache::new(s, needs, cfg.filters_per_class))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_strategy(strategy))?;
    let ctx = TargetContext::new(caches.iter().collect(), needs, cfg.filters_per_class)?;
    let epochs = Epochs::new(target_labeled.iter().chain(target_test), needs)?;
    let view = TargetView::new(&epochs, &ctx)?;
    let m = target_labeled.len();
    let labeled: Vec<usize> = (0..m).collect();
    let test: Vec<usize> = (m..m + target_test.len()).collect();
    evaluate(strategy, &ctx, &view, &labeled, &test, cfg, &mut None).map_err(|e| e.in_strategy(strategy))
}

fn check_corpus(datasets: &[SubjectDataset]) -> Result<()> {
    if datasets.len() < 2 {
        return Err(Error::config(format!(
            "the benchmark needs at least 2 subjects, got {}",
            datasets.len()
        )));
    }
    let c = datasets[0].channels();
    if let Some(ds) = datasets.iter().find(|d| d.channels() != c) {
        return Err(Error::dimension(format!(
            "subject {} has {} channels, {} has {c}",
            ds.subject_id(),
            ds.channels(),
            datasets[0].subject_id()
        )));
    }
    Ok(())
}

fn thread_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::config(format!("cannot start worker threads: {e}")))
}

/// Accuracy of one strategy for one target subject, repetition and `m`;
/// the same value [`run_benchmark`] records for that cell.
pub fn run_cell(
    datasets: &[SubjectDataset],
    target: usize,
    rep: usize,
    m: usize,
    strategy: Strategy,
    cfg: &BenchConfig,
) -> Result<f64> {
    cfg.validate()?;
    check_corpus(datasets)?;
    if target >= datasets.len() {
        return Err(Error::config(format!("target index {target} out of range")));
    }
    if m > cfg.pool_size || m % cfg.m_step != 0 {
        return Err(Error::config(format!(
            "m = {m} must be a multiple of {} and at most the pool size {}",
            cfg.m_step, cfg.pool_size
        )));
    }
    let needs = Needs::of(&[strategy]);
    let caches = datasets
        .iter()
        .map(|ds| SubjectCache::new(ds, needs, cfg.filters_per_class))
        .collect::<Result<Vec<_>>>()?;
    let id = caches[target].id.as_str();
    let sources = caches.iter().enumerate().filter(|(z, _)| *z != target).map(|(_, c)| c).collect();
    let ctx = TargetContext::new(sources, needs, cfg.filters_per_class).map_err(|e| e.in_subject(id))?;
    let view = TargetView::new(&caches[target].epochs, &ctx).map_err(|e| e.in_subject(id))?;
    let split = draw_pool(&caches[target].epochs.labels, cfg.pool_size, cfg.base_seed, target, rep)
        .map_err(|e| e.in_subject(id))?;
    // IA depends on the earlier m values through its warm starts.
    let m_values: Vec<usize> = if strategy == Strategy::Ia {
        (0..=m).step_by(cfg.m_step).collect()
    } else {
        vec![m]
    };
    let records = cell_records(&ctx, &view, id, &split, rep, &m_values, &[strategy], cfg)?;
    Ok(records.last().expect("at least one m value").accuracy)
}

/// Runs every strategy for every target subject, repetition and `m`.
///
/// Subject `t` draws its pools from the stream `(base_seed, t, rep)`, so the
/// table is the same for any number of workers.
pub fn run_benchmark(datasets: &[SubjectDataset], cfg: &BenchConfig) -> Result<ResultTable> {
    cfg.validate()?;
    check_corpus(datasets)?;
    let needs = Needs::of(&cfg.strategies);
    let pool = thread_pool(cfg.workers)?;
    pool.install(|| {
        let splits: Vec<Vec<Split>> = datasets
            .iter()
            .enumerate()
            .map(|(t, ds)| {
                let labels: Vec<Label> = ds.epochs().iter().map(|e| e.label).collect();
                (0..cfg.repetitions)
                    .map(|r| draw_pool(&labels, cfg.pool_size, cfg.base_seed, t, r))
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| e.in_subject(ds.subject_id()))
            })
            .collect::<Result<_>>()?;

        let caches: Vec<SubjectCache> = datasets
            .par_iter()
            .map(|ds| SubjectCache::new(ds, needs, cfg.filters_per_class))
            .collect::<Result<_>>()?;

        let contexts: Vec<TargetContext<'_>> = (0..datasets.len())
            .into_par_iter()
            .map(|t| {
                let sources = caches.iter().enumerate().filter(|(z, _)| *z != t).map(|(_, c)| c).collect();
                TargetContext::new(sources, needs, cfg.filters_per_class).map_err(|e| e.in_subject(&caches[t].id))
            })
            .collect::<Result<_>>()?;
        let views: Vec<TargetView<'_>> = contexts
            .par_iter()
            .zip(&caches)
            .map(|(ctx, c)| TargetView::new(&c.epochs, ctx).map_err(|e| e.in_subject(&c.id)))
            .collect::<Result<_>>()?;

        let m_values = cfg.m_values();
        let cells: Vec<(usize, usize)> = (0..datasets.len())
            .flat_map(|t| (0..cfg.repetitions).map(move |r| (t, r)))
            .collect();
        let blocks: Vec<Vec<Record>> = cells
            .par_iter()
            .map(|&(t, r)| {
                cell_records(
                    &contexts[t],
                    &views[t],
                    &caches[t].id,
                    &splits[t][r],
                    r,
                    &m_values,
                    &cfg.strategies,
                    cfg,
                )
            })
            .collect::<Result<_>>()?;

        Ok(ResultTable {
            records: blocks.into_iter().flatten().collect(),
            test_sizes: caches
                .iter()
                .zip(&splits)
                .map(|(c, s)| (c.id.clone(), s[0].test.len()))
                .collect(),
        })
    })
}
