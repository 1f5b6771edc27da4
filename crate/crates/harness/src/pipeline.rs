//! End-to-end experiment pipelines.
//!
//! Every repeat draws a fresh split, trains the linear surrogate and the
//! victim, samples targets from the test set and attacks each one with a
//! degree-sized budget. Defenses are applied per target to the attacked
//! graph and to the clean graph.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use guard_core::attack::{greedy_attack, AttackBudget, AttackRecord, CensusReport};
use guard_core::defense::{
    apply_patch, degree_anchors, influence_scores, random_anchors, select_anchors, DefensePatch,
    JaccardFilter,
};
use guard_core::graph::{EdgeFlip, SparseGraph, SplitSet};
use guard_core::models::{
    accuracy, argmax, train_gcn_victim, train_linear_surrogate, GcnVictim, LinearSurrogate,
    NodeClassifier, TrainingConfig,
};

use crate::config::{DefenseKind, ExperimentConfig, ModelChoice};
use crate::data::{load_dataset, Dataset};
use crate::error::{HarnessError, HarnessResult};

/// Targets attacked in parallel between two flushes of the attack log.
const CHUNK: usize = 64;

/// Number of top attacker nodes used for mass and overlap statistics.
pub const CENSUS_TOP: usize = 50;

/// Mean and sample standard deviation over repeats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

impl Stat {
    pub fn new(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = if values.is_empty() { 0.0 } else { values.iter().sum::<f64>() / n };
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std, values }
    }
}

/// Outcome of one defense, aggregated over repeats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefenseReport {
    pub defense: DefenseKind,
    /// Victim accuracy on the targets of the attacked, purified graphs.
    pub defended_accuracy: Stat,
    /// Victim accuracy on the targets of the purified clean graph.
    pub clean_defended_accuracy: Stat,
    /// Edges removed by the defense from the attacked graphs, per repeat.
    pub removed_edges: Vec<usize>,
    /// How many of those were edges injected by the attack, per repeat.
    pub removed_injected: Vec<usize>,
    /// Edges removed from the clean graph, per repeat.
    pub clean_removed_edges: Vec<usize>,
}

/// Attacker-node statistics over all repeats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensusSummary {
    pub total_injections: usize,
    pub distinct_attackers: usize,
    /// Share of injections going to the 50 most frequent attacker nodes.
    pub top50_mass: f64,
    /// Share of histogrammed attacker nodes with degree at most 2.
    pub low_degree_fraction: f64,
    /// Share of all nodes with degree at most 2.
    pub low_degree_base_rate: f64,
    pub degree_histogram: BTreeMap<usize, usize>,
    /// Per repeat: share of that repeat's top-50 attacker nodes that are
    /// GUARD anchors.
    pub anchor_overlap_top50: Stat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ExperimentConfig,
    pub num_nodes: usize,
    pub num_edges: usize,
    /// Targets attacked in each repeat.
    pub num_targets: usize,
    pub surrogate_test_accuracy: Stat,
    pub victim_test_accuracy: Stat,
    /// Victim accuracy on the sampled targets of the clean graph.
    pub clean_accuracy: Stat,
    /// Victim accuracy on the targets of their attacked graphs.
    pub attacked_accuracy: Stat,
    /// Surrogate accuracy on the targets of their attacked graphs.
    pub surrogate_attacked_accuracy: Stat,
    /// Mean number of flips per target.
    pub mean_perturbations: f64,
    pub defenses: Vec<DefenseReport>,
    pub census: CensusSummary,
    /// The split of every repeat.
    pub splits: Vec<SplitSet>,
    /// Wall-clock seconds per phase, summed over repeats.
    pub runtimes: BTreeMap<String, f64>,
}

/// Attack-only run.
#[derive(Clone, Debug)]
pub struct CensusRun {
    pub census: CensusReport,
    pub summary: CensusSummary,
    pub surrogate_attacked_accuracy: Stat,
    pub records: usize,
    pub runtimes: BTreeMap<String, f64>,
}

/// Wall time of influence scoring plus anchor selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingProbe {
    /// Median over repetitions of the combined phase.
    pub seconds: f64,
    pub score_seconds: f64,
    pub selection_seconds: f64,
    pub num_nodes: usize,
    pub sub_size: usize,
    pub k: usize,
    pub repetitions: usize,
}

/// Sweepable defense hyper-parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    K,
    Alpha,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub reports: Vec<EvalReport>,
}

/// Optional pre-trained models that replace training.
#[derive(Clone, Debug, Default)]
pub struct Pretrained {
    pub surrogate: Option<LinearSurrogate>,
}

#[derive(Default)]
struct Timer(BTreeMap<String, f64>);

impl Timer {
    fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.0.entry(phase.to_string()).or_default() += start.elapsed().as_secs_f64();
        out
    }
}

/// One line of `attacks.jsonl`.
#[derive(Serialize, Deserialize)]
pub struct AttackLine {
    pub repeat: usize,
    #[serde(flatten)]
    pub record: AttackRecord,
}

/// Defense parameters of one report row.
#[derive(Clone, Copy, Debug)]
struct Variant {
    k: usize,
    alpha: f64,
}

enum Purifier {
    None,
    Patch(DefensePatch),
    Jaccard {
        filter: JaccardFilter,
        clean_pruned: Vec<EdgeFlip>,
        clean_classes: Vec<usize>,
    },
}

#[derive(Clone, Copy, Default)]
struct Tally {
    defended_correct: usize,
    clean_defended_correct: usize,
    removed: usize,
    removed_injected: usize,
    clean_removed: usize,
}

struct Victim {
    model: Box<dyn NodeClassifier + Send>,
    projection: Array2<f64>,
}

impl Victim {
    fn predict(&self, g: &SparseGraph, u: usize) -> HarnessResult<usize> {
        let logits = self.model.node_logits_projected(g, u, self.projection.view())?;
        Ok(argmax(logits.view()))
    }
}

struct TargetOutcome {
    record: AttackRecord,
    clean_correct: bool,
    attacked_correct: bool,
    tallies: Vec<Vec<Tally>>,
}

struct RepeatOutcome {
    splits: SplitSet,
    surrogate_test_accuracy: f64,
    victim_test_accuracy: f64,
    targets: usize,
    clean_correct: usize,
    attacked_correct: usize,
    surrogate_attacked_correct: usize,
    perturbations: usize,
    records: Vec<AttackRecord>,
    tallies: Vec<Vec<Tally>>,
    guard_anchors: Vec<DefensePatch>,
}

fn model_config(base: &TrainingConfig, seed: u64) -> TrainingConfig {
    TrainingConfig {
        seed: base.seed.wrapping_add(seed),
        ..base.clone()
    }
}

/// The labeled subset used for influence averaging, capped at `sub_size`.
fn influence_splits(cfg: &ExperimentConfig, splits: &SplitSet) -> SplitSet {
    match cfg.sub_size {
        Some(size) if size < splits.sub().len() => splits.clone().with_sub(splits.sub()[..size].to_vec()),
        _ => splits.clone(),
    }
}

fn sample_targets(cfg: &ExperimentConfig, splits: &SplitSet, r: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.repeat_seed(r) ^ 0x7461_7267_6574);
    let n = splits.test.len();
    let mut picked: Vec<usize> = sample(&mut rng, n, cfg.num_targets.min(n))
        .into_iter()
        .map(|i| splits.test[i])
        .collect();
    picked.sort_unstable();
    picked
}

fn train_surrogate(
    cfg: &ExperimentConfig,
    g: &SparseGraph,
    splits: &SplitSet,
    r: usize,
    pretrained: &Pretrained,
) -> HarnessResult<LinearSurrogate> {
    match &pretrained.surrogate {
        Some(m) => Ok(m.clone()),
        None => Ok(train_linear_surrogate(
            g,
            splits,
            &model_config(&cfg.surrogate, cfg.repeat_seed(r)),
        )?),
    }
}

fn train_victim(cfg: &ExperimentConfig, g: &SparseGraph, splits: &SplitSet, r: usize) -> HarnessResult<Victim> {
    let seed = cfg.repeat_seed(r).wrapping_add(1);
    let model: Box<dyn NodeClassifier + Send> = match cfg.model {
        ModelChoice::Gcn => Box::new(train_gcn_victim(g, splits, &model_config(&cfg.victim, seed))?),
        ModelChoice::Linear => Box::new(train_linear_surrogate(g, splits, &model_config(&cfg.victim, seed))?),
    };
    let projection = model.input_projection(g)?;
    Ok(Victim { model, projection })
}

fn build_patch(
    kind: DefenseKind,
    variant: Variant,
    cfg: &ExperimentConfig,
    g: &SparseGraph,
    surrogate: &LinearSurrogate,
    splits: &SplitSet,
    r: usize,
) -> HarnessResult<Option<DefensePatch>> {
    Ok(match kind {
        DefenseKind::Guard => {
            let table = influence_scores(surrogate, g, &influence_splits(cfg, splits), variant.alpha)?;
            Some(select_anchors(&table, variant.k)?)
        }
        DefenseKind::Random => Some(random_anchors(g, variant.k, cfg.repeat_seed(r) ^ 0x7261_6e64)?),
        DefenseKind::Degree => Some(degree_anchors(g, variant.k)?),
        DefenseKind::Jaccard | DefenseKind::None => None,
    })
}

#[allow(clippy::too_many_arguments)]
fn build_purifier(
    kind: DefenseKind,
    variant: Variant,
    cfg: &ExperimentConfig,
    g: &SparseGraph,
    surrogate: &LinearSurrogate,
    victim: Option<&Victim>,
    splits: &SplitSet,
    r: usize,
) -> HarnessResult<Purifier> {
    if let Some(patch) = build_patch(kind, variant, cfg, g, surrogate, splits, r)? {
        return Ok(Purifier::Patch(patch));
    }
    match (kind, victim) {
        (DefenseKind::Jaccard, Some(victim)) => {
            let filter = JaccardFilter::new(g, cfg.jaccard_threshold)?;
            let clean_pruned = filter.pruned_edges(g);
            let pruned = g.flip_edges(&clean_pruned)?;
            let clean_classes = victim.model.predict(&pruned)?.classes;
            Ok(Purifier::Jaccard {
                filter,
                clean_pruned,
                clean_classes,
            })
        }
        _ => Ok(Purifier::None),
    }
}

fn evaluate_target(
    g: &SparseGraph,
    u: usize,
    surrogate: &LinearSurrogate,
    victim: Option<&Victim>,
    clean_classes: &[usize],
    purifiers: &[Vec<Purifier>],
    allow_removal: bool,
) -> HarnessResult<TargetOutcome> {
    let mut budget = AttackBudget::degree_budget(g, u);
    budget.allow_removal = allow_removal;
    let attack = greedy_attack(surrogate, g, &budget)?;
    let y = g.label(u).expect("targets are labeled");
    let perturbed = &attack.perturbed;
    let clean_correct = clean_classes.get(u) == Some(&y);
    let attacked_correct = match victim {
        Some(v) => v.predict(perturbed, u)? == y,
        None => false,
    };
    let injected: BTreeSet<usize> = attack.injected.iter().copied().collect();

    let mut tallies = Vec::with_capacity(purifiers.len());
    for row in purifiers {
        let mut out = Vec::with_capacity(row.len());
        for purifier in row {
            let Some(victim) = victim else {
                out.push(Tally::default());
                continue;
            };
            let mut t = Tally::default();
            match purifier {
                Purifier::None => {
                    t.defended_correct = usize::from(attacked_correct);
                    t.clean_defended_correct = usize::from(clean_correct);
                }
                Purifier::Patch(patch) => {
                    let purified = apply_patch(perturbed, patch, u)?;
                    t.removed = purified.removed_count();
                    t.removed_injected = purified.removed.iter().filter(|v| injected.contains(v)).count();
                    t.defended_correct = usize::from(victim.predict(&purified.graph, u)? == y);
                    let clean = apply_patch(g, patch, u)?;
                    t.clean_removed = clean.removed_count();
                    let clean_ok = if clean.removed.is_empty() {
                        clean_correct
                    } else {
                        victim.predict(&clean.graph, u)? == y
                    };
                    t.clean_defended_correct = usize::from(clean_ok);
                }
                Purifier::Jaccard {
                    filter,
                    clean_pruned,
                    clean_classes: pruned_classes,
                } => {
                    let mut flips: Vec<EdgeFlip> = clean_pruned
                        .iter()
                        .copied()
                        .filter(|f| f.u != u && f.v != u)
                        .collect();
                    let incident = filter.pruned_incident(perturbed, u);
                    t.removed_injected = incident.iter().filter(|f| injected.contains(&f.v)).count();
                    flips.extend(incident);
                    t.removed = flips.len();
                    let pruned = perturbed.flip_edges(&flips)?;
                    t.defended_correct = usize::from(victim.predict(&pruned, u)? == y);
                    t.clean_removed = clean_pruned.len();
                    t.clean_defended_correct = usize::from(pruned_classes[u] == y);
                }
            }
            out.push(t);
        }
        tallies.push(out);
    }
    Ok(TargetOutcome {
        record: attack.record(),
        clean_correct,
        attacked_correct,
        tallies,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_repeat(
    cfg: &ExperimentConfig,
    data: &Dataset,
    r: usize,
    variants: &[Variant],
    with_victim: bool,
    pretrained: &Pretrained,
    sink: &mut Option<&mut dyn Write>,
    timer: &mut Timer,
) -> HarnessResult<RepeatOutcome> {
    let g = &data.graph;
    let splits = data.splits(cfg, r);
    splits.validate(g).map_err(HarnessError::Data)?;
    if splits.test.is_empty() {
        return Err(HarnessError::Config("the split has no test nodes".into()));
    }
    let surrogate = timer.time("train_surrogate", || train_surrogate(cfg, g, &splits, r, pretrained))?;
    let surrogate_test_accuracy = accuracy(&surrogate.predict(g)?, g, &splits.test)?;
    let victim = if with_victim {
        Some(timer.time("train_victim", || train_victim(cfg, g, &splits, r))?)
    } else {
        None
    };
    let (clean_classes, victim_test_accuracy) = match &victim {
        Some(v) => {
            let pred = v.model.predict(g)?;
            let acc = accuracy(&pred, g, &splits.test)?;
            (pred.classes, acc)
        }
        None => (Vec::new(), f64::NAN),
    };

    let purifiers: Vec<Vec<Purifier>> = timer.time("defense_setup", || {
        variants
            .iter()
            .map(|&variant| {
                cfg.defenses
                    .iter()
                    .map(|&kind| build_purifier(kind, variant, cfg, g, &surrogate, victim.as_ref(), &splits, r))
                    .collect::<HarnessResult<Vec<_>>>()
            })
            .collect::<HarnessResult<Vec<_>>>()
    })?;
    let guard_anchors = variants
        .iter()
        .map(|&variant| {
            Ok(build_patch(DefenseKind::Guard, variant, cfg, g, &surrogate, &splits, r)?.expect("guard patch"))
        })
        .collect::<HarnessResult<Vec<_>>>()?;

    let targets = sample_targets(cfg, &splits, r);
    let mut outcome = RepeatOutcome {
        splits: splits.clone(),
        surrogate_test_accuracy,
        victim_test_accuracy,
        targets: targets.len(),
        clean_correct: 0,
        attacked_correct: 0,
        surrogate_attacked_correct: 0,
        perturbations: 0,
        records: Vec::with_capacity(targets.len()),
        tallies: vec![vec![Tally::default(); cfg.defenses.len()]; variants.len()],
        guard_anchors,
    };
    let start = Instant::now();
    for chunk in targets.chunks(CHUNK) {
        let results: Vec<TargetOutcome> = chunk
            .par_iter()
            .map(|&u| evaluate_target(g, u, &surrogate, victim.as_ref(), &clean_classes, &purifiers, cfg.allow_removal))
            .collect::<HarnessResult<_>>()?;
        for t in results {
            if let Some(out) = sink.as_mut() {
                let line = serde_json::to_string(&AttackLine {
                    repeat: r,
                    record: t.record.clone(),
                })
                .map_err(HarnessError::runtime)?;
                out.write_all(format!("{line}\n").as_bytes())?;
            }
            let y = g.label(t.record.target).expect("labeled");
            outcome.clean_correct += usize::from(t.clean_correct);
            outcome.attacked_correct += usize::from(t.attacked_correct);
            outcome.surrogate_attacked_correct += usize::from(t.record.post_class == y);
            outcome.perturbations += t.record.injected.len() + t.record.removed.len();
            for (acc_row, row) in outcome.tallies.iter_mut().zip(&t.tallies) {
                for (acc, x) in acc_row.iter_mut().zip(row) {
                    acc.defended_correct += x.defended_correct;
                    acc.clean_defended_correct += x.clean_defended_correct;
                    acc.removed += x.removed;
                    acc.removed_injected += x.removed_injected;
                    acc.clean_removed += x.clean_removed;
                }
            }
            outcome.records.push(t.record);
        }
        if let Some(out) = sink.as_mut() {
            out.flush()?;
        }
    }
    *timer.0.entry("attack_and_evaluate".into()).or_default() += start.elapsed().as_secs_f64();
    Ok(outcome)
}

fn census_summary(g: &SparseGraph, outcomes: &[RepeatOutcome], variant: usize) -> HarnessResult<(CensusReport, CensusSummary)> {
    let census = CensusReport::from_injections(
        outcomes
            .iter()
            .flat_map(|o| o.records.iter().map(|r| r.injected.as_slice())),
        g,
    )?;
    let overlaps = outcomes
        .iter()
        .map(|o| {
            let own = CensusReport::from_injections(o.records.iter().map(|r| r.injected.as_slice()), g)?;
            let top: Vec<usize> = own.attacker_nodes().take(CENSUS_TOP).collect();
            let patch = &o.guard_anchors[variant];
            let hit = top.iter().filter(|&&v| patch.is_anchor(v)).count();
            Ok(if top.is_empty() { 0.0 } else { hit as f64 / top.len() as f64 })
        })
        .collect::<HarnessResult<Vec<f64>>>()?;
    let low_base = g.degrees().iter().filter(|&&d| d <= 2).count() as f64 / g.num_nodes().max(1) as f64;
    let summary = CensusSummary {
        total_injections: census.total,
        distinct_attackers: census.frequencies.len(),
        top50_mass: census.top_k_mass(CENSUS_TOP),
        low_degree_fraction: census.low_degree_fraction(2),
        low_degree_base_rate: low_base,
        degree_histogram: census.degree_histogram.clone(),
        anchor_overlap_top50: Stat::new(overlaps),
    };
    Ok((census, summary))
}

fn ratio(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        count as f64 / total as f64
    }
}

fn run_variants(
    cfg: &ExperimentConfig,
    variants: &[Variant],
    pretrained: &Pretrained,
    mut sink: Option<&mut dyn Write>,
) -> HarnessResult<Vec<EvalReport>> {
    cfg.validate()?;
    let mut timer = Timer::default();
    let data = timer.time("load", || load_dataset(cfg))?;
    let mut outcomes = Vec::with_capacity(cfg.repeats);
    for r in 0..cfg.repeats {
        log::info!("repeat {}/{}", r + 1, cfg.repeats);
        outcomes.push(run_repeat(cfg, &data, r, variants, true, pretrained, &mut sink, &mut timer)?);
    }
    let g = &data.graph;
    let per_repeat = |f: &dyn Fn(&RepeatOutcome) -> f64| Stat::new(outcomes.iter().map(f).collect());
    let total_targets: usize = outcomes.iter().map(|o| o.targets).sum();
    let total_flips: usize = outcomes.iter().map(|o| o.perturbations).sum();

    variants
        .iter()
        .enumerate()
        .map(|(vi, variant)| {
            let (_, census) = census_summary(g, &outcomes, vi)?;
            let defenses = cfg
                .defenses
                .iter()
                .enumerate()
                .map(|(di, &defense)| DefenseReport {
                    defense,
                    defended_accuracy: per_repeat(&|o| ratio(o.tallies[vi][di].defended_correct, o.targets)),
                    clean_defended_accuracy: per_repeat(&|o| ratio(o.tallies[vi][di].clean_defended_correct, o.targets)),
                    removed_edges: outcomes.iter().map(|o| o.tallies[vi][di].removed).collect(),
                    removed_injected: outcomes.iter().map(|o| o.tallies[vi][di].removed_injected).collect(),
                    clean_removed_edges: outcomes.iter().map(|o| o.tallies[vi][di].clean_removed).collect(),
                })
                .collect();
            Ok(EvalReport {
                config: ExperimentConfig {
                    k: variant.k,
                    alpha: variant.alpha,
                    ..cfg.clone()
                },
                num_nodes: g.num_nodes(),
                num_edges: g.num_edges(),
                num_targets: outcomes[0].targets,
                surrogate_test_accuracy: per_repeat(&|o| o.surrogate_test_accuracy),
                victim_test_accuracy: per_repeat(&|o| o.victim_test_accuracy),
                clean_accuracy: per_repeat(&|o| ratio(o.clean_correct, o.targets)),
                attacked_accuracy: per_repeat(&|o| ratio(o.attacked_correct, o.targets)),
                surrogate_attacked_accuracy: per_repeat(&|o| ratio(o.surrogate_attacked_correct, o.targets)),
                mean_perturbations: ratio(total_flips, total_targets),
                defenses,
                census,
                splits: outcomes.iter().map(|o| o.splits.clone()).collect(),
                runtimes: timer.0.clone(),
            })
        })
        .collect()
}

/// Full evaluation: clean, attacked and defended accuracy for every
/// configured defense. Attack records are streamed to `sink` as JSON lines.
pub fn run_pipeline(
    cfg: &ExperimentConfig,
    pretrained: &Pretrained,
    sink: Option<&mut dyn Write>,
) -> HarnessResult<EvalReport> {
    let variant = Variant {
        k: cfg.k,
        alpha: cfg.alpha,
    };
    Ok(run_variants(cfg, &[variant], pretrained, sink)?.remove(0))
}

/// One report per value of `parameter`; attacks are run once per repeat and
/// shared by every value.
pub fn sweep(
    cfg: &ExperimentConfig,
    parameter: SweepParameter,
    values: &[f64],
    sink: Option<&mut dyn Write>,
) -> HarnessResult<SweepReport> {
    if values.is_empty() {
        return Err(HarnessError::Config("sweep needs at least one value".into()));
    }
    let variants = values
        .iter()
        .map(|&v| match parameter {
            SweepParameter::K if v >= 0.0 && v.fract() == 0.0 => Ok(Variant {
                k: v as usize,
                alpha: cfg.alpha,
            }),
            SweepParameter::Alpha if v >= 0.0 && v.is_finite() => Ok(Variant { k: cfg.k, alpha: v }),
            _ => Err(HarnessError::Config(format!("invalid sweep value {v} for {parameter:?}"))),
        })
        .collect::<HarnessResult<Vec<_>>>()?;
    let reports = run_variants(cfg, &variants, &Pretrained::default(), sink)?;
    Ok(SweepReport {
        parameter,
        values: values.to_vec(),
        reports,
    })
}

/// Attack-only pipeline collecting the attacker-node census.
pub fn run_census(
    cfg: &ExperimentConfig,
    pretrained: &Pretrained,
    mut sink: Option<&mut dyn Write>,
) -> HarnessResult<CensusRun> {
    cfg.validate()?;
    let mut timer = Timer::default();
    let data = timer.time("load", || load_dataset(cfg))?;
    let variant = Variant {
        k: cfg.k,
        alpha: cfg.alpha,
    };
    let mut outcomes = Vec::with_capacity(cfg.repeats);
    for r in 0..cfg.repeats {
        outcomes.push(run_repeat(cfg, &data, r, &[variant], false, pretrained, &mut sink, &mut timer)?);
    }
    let (census, summary) = census_summary(&data.graph, &outcomes, 0)?;
    Ok(CensusRun {
        census,
        summary,
        surrogate_attacked_accuracy: Stat::new(
            outcomes
                .iter()
                .map(|o| ratio(o.surrogate_attacked_correct, o.targets))
                .collect(),
        ),
        records: outcomes.iter().map(|o| o.records.len()).sum(),
        runtimes: timer.0,
    })
}

/// Writes the rank-frequency curve of `census` as CSV.
pub fn write_census_csv(census: &CensusReport, g_degrees: &[usize], out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "rank,node,count,cumulative_mass,degree")?;
    let cumulative = census.cumulative_mass();
    for (rank, (&(node, count), mass)) in census.frequencies.iter().zip(cumulative).enumerate() {
        writeln!(out, "{},{node},{count},{mass:.6},{}", rank + 1, g_degrees[node])?;
    }
    Ok(())
}

/// Writes the attacker-node degree histogram next to the graph's own.
pub fn write_degree_histogram_csv(census: &CensusReport, g_degrees: &[usize], out: &mut dyn Write) -> std::io::Result<()> {
    let mut all: BTreeMap<usize, usize> = BTreeMap::new();
    for &d in g_degrees {
        *all.entry(d).or_default() += 1;
    }
    writeln!(out, "degree,attacker_nodes,all_nodes")?;
    for (&d, &count) in &all {
        writeln!(out, "{d},{},{count}", census.degree_histogram.get(&d).copied().unwrap_or(0))?;
    }
    Ok(())
}

/// Victim of [`TrainedModels`].
pub enum TrainedVictim {
    Gcn(GcnVictim),
    Linear(LinearSurrogate),
}

/// Models of repeat 0 with the data and split they were trained on.
pub struct TrainedModels {
    pub data: Dataset,
    pub splits: SplitSet,
    pub surrogate: LinearSurrogate,
    pub victim: TrainedVictim,
}

pub fn train_models(cfg: &ExperimentConfig) -> HarnessResult<TrainedModels> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let g = &data.graph;
    let splits = data.splits(cfg, 0);
    splits.validate(g).map_err(HarnessError::Data)?;
    let surrogate = train_surrogate(cfg, g, &splits, 0, &Pretrained::default())?;
    let victim_cfg = model_config(&cfg.victim, cfg.repeat_seed(0).wrapping_add(1));
    let victim = match cfg.model {
        ModelChoice::Gcn => TrainedVictim::Gcn(train_gcn_victim(g, &splits, &victim_cfg)?),
        ModelChoice::Linear => TrainedVictim::Linear(train_linear_surrogate(g, &splits, &victim_cfg)?),
    };
    Ok(TrainedModels {
        data,
        splits,
        surrogate,
        victim,
    })
}

/// Builds the defense patch of repeat 0 for the first patch-based defense
/// in the config (GUARD when none is listed).
pub fn build_defense_patch(cfg: &ExperimentConfig, pretrained: &Pretrained) -> HarnessResult<(Dataset, DefensePatch)> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let g = &data.graph;
    let splits = data.splits(cfg, 0);
    splits.validate(g).map_err(HarnessError::Data)?;
    let kind = cfg
        .defenses
        .iter()
        .copied()
        .find(|d| matches!(d, DefenseKind::Guard | DefenseKind::Random | DefenseKind::Degree))
        .unwrap_or(DefenseKind::Guard);
    let surrogate = train_surrogate(cfg, g, &splits, 0, pretrained)?;
    let variant = Variant {
        k: cfg.k,
        alpha: cfg.alpha,
    };
    let patch = build_patch(kind, variant, cfg, g, &surrogate, &splits, 0)?.expect("patch-based defense");
    Ok((data, patch))
}

/// Times influence scoring and anchor selection on repeat 0, excluding
/// surrogate training. Reports the median of `timing_repeats` runs.
pub fn time_defense(cfg: &ExperimentConfig, pretrained: &Pretrained) -> HarnessResult<TimingProbe> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let g = &data.graph;
    let splits = data.splits(cfg, 0);
    splits.validate(g).map_err(HarnessError::Data)?;
    let surrogate = train_surrogate(cfg, g, &splits, 0, pretrained)?;
    let sub = influence_splits(cfg, &splits);
    let runs = cfg.timing_repeats.max(1);
    let mut score_times = Vec::with_capacity(runs);
    let mut select_times = Vec::with_capacity(runs);
    let mut totals = Vec::with_capacity(runs);
    for _ in 0..runs {
        let start = Instant::now();
        let table = influence_scores(&surrogate, g, &sub, cfg.alpha)?;
        let scored = start.elapsed().as_secs_f64();
        let patch = select_anchors(&table, cfg.k)?;
        let total = start.elapsed().as_secs_f64();
        std::hint::black_box(patch);
        score_times.push(scored);
        select_times.push(total - scored);
        totals.push(total);
    }
    Ok(TimingProbe {
        seconds: median(&mut totals),
        score_seconds: median(&mut score_times),
        selection_seconds: median(&mut select_times),
        num_nodes: g.num_nodes(),
        sub_size: sub.sub().len(),
        k: cfg.k,
        repetitions: runs,
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
