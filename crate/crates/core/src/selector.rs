//! Budget planning, per-component selection, weak supervision and the
//! iteration driver.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterBounds;
use crate::dataset::{draw_seed, CandidatePair, DatasetSplit, Label, OracleMode};
use crate::error::{Error, Result};
use crate::eval::{f1_counts, f1_from_counts, strategy_entropy_only, strategy_random, weak_entropy_only, IterationReport, Strategy};
use crate::matcher::{encode_all, predict, train_baseline, BaselineMatcher, MatcherConfig, PairEncoding};
use crate::pairgraph::{build_iteration_graphs, GraphParams, IterationGraphs};
use crate::scoring::{score_iteration, IterationScores, NodeScores, PageRankParams, ScoringParams, SideScores};

/// `round(B · max(0.8 − i/20, 0.5))`, halves rounded up.
pub fn positive_budget(budget: usize, iteration: usize) -> usize {
    let fraction = (0.8 - iteration as f64 / 20.0).max(0.5);
    (budget as f64 * fraction + 0.5 + 1e-9).floor() as usize
}

/// One side's share of a budget across its components.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SideAllocation {
    /// `⌊B·|cc|/Σ|cc|⌋` per component.
    pub base: Vec<usize>,
    /// Components that received one extra unit of the rounding residue.
    pub residue_assignment: Vec<usize>,
    /// Final counts after capping and redistribution.
    pub per_component: Vec<usize>,
    /// Budget left over because every component is saturated.
    pub unplaced: usize,
}

impl SideAllocation {
    pub fn total(&self) -> usize {
        self.per_component.iter().sum()
    }
}

/// Proportional split of `budget` over components of the given sizes. The
/// rounding residue goes one unit each to randomly drawn components; counts
/// above a component's capacity are cut and the excess handed out again among
/// components with room.
pub fn distribute_budget(sizes: &[usize], capacities: &[usize], budget: usize, seed: u64) -> SideAllocation {
    assert_eq!(sizes.len(), capacities.len());
    let m = sizes.len();
    let total: usize = sizes.iter().sum();
    if m == 0 || total == 0 {
        return SideAllocation {
            base: vec![0; m],
            residue_assignment: vec![],
            per_component: vec![0; m],
            unplaced: budget,
        };
    }
    let base: Vec<usize> = sizes
        .iter()
        .map(|&s| (budget as u128 * s as u128 / total as u128) as usize)
        .collect();
    let residue = budget - base.iter().sum::<usize>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng);
    let residue_assignment: Vec<usize> = order.into_iter().take(residue).collect();
    let mut alloc = base.clone();
    for &c in &residue_assignment {
        alloc[c] += 1;
    }

    let mut unplaced = 0;
    loop {
        let mut surplus = 0;
        for (a, &cap) in alloc.iter_mut().zip(capacities) {
            if *a > cap {
                surplus += *a - cap;
                *a = cap;
            }
        }
        if surplus == 0 {
            break;
        }
        let mut open: Vec<usize> = (0..m).filter(|&c| alloc[c] < capacities[c]).collect();
        if open.is_empty() {
            unplaced = surplus;
            break;
        }
        open.shuffle(&mut rng);
        let mut left = surplus;
        while left > 0 && !open.is_empty() {
            open.retain(|&c| alloc[c] < capacities[c]);
            for &c in &open {
                if left == 0 {
                    break;
                }
                alloc[c] += 1;
                left -= 1;
            }
        }
        unplaced += left;
        if left > 0 {
            break;
        }
    }
    SideAllocation {
        base,
        residue_assignment,
        per_component: alloc,
        unplaced,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BudgetPlan {
    pub budget: usize,
    pub b_pos: usize,
    pub b_neg: usize,
    pub positive: SideAllocation,
    pub negative: SideAllocation,
    /// Positive-side budget moved to the negative side (and vice versa).
    pub moved_to_negative: usize,
    pub moved_to_positive: usize,
    /// Positive-side picks made without a positive graph.
    pub cold_start_picks: usize,
}

/// Split both sides and move whatever one side cannot place to the other.
fn plan_sides(
    b_pos: usize,
    b_neg: usize,
    pos: (&[usize], &[usize]),
    neg: (&[usize], &[usize]),
    seed: u64,
) -> (SideAllocation, SideAllocation, usize, usize) {
    let mut positive = distribute_budget(pos.0, pos.1, b_pos, seed);
    let mut negative = distribute_budget(neg.0, neg.1, b_neg, seed.wrapping_add(1));
    let (mut to_neg, mut to_pos) = (0, 0);
    if positive.unplaced > 0 && negative.unplaced == 0 {
        to_neg = positive.unplaced;
        negative = distribute_budget(neg.0, neg.1, b_neg + to_neg, seed.wrapping_add(1));
    } else if negative.unplaced > 0 && positive.unplaced == 0 {
        to_pos = negative.unplaced;
        positive = distribute_budget(pos.0, pos.1, b_pos + to_pos, seed);
    }
    (positive, negative, to_neg, to_pos)
}

fn side_shape(side: &SideScores, excluded: &HashSet<usize>) -> (Vec<usize>, Vec<usize>) {
    let sizes = side.sizes();
    let caps = side
        .components
        .iter()
        .map(|c| c.iter().filter(|n| !excluded.contains(&n.pair)).count())
        .collect();
    (sizes, caps)
}

/// The first `counts[c]` nodes of every component (components are sorted
/// best first), skipping excluded pairs.
fn take_per_component(side: &SideScores, counts: &[usize], excluded: &HashSet<usize>) -> Vec<usize> {
    let mut picked = Vec::new();
    for (nodes, &count) in side.components.iter().zip(counts) {
        picked.extend(nodes.iter().filter(|n| !excluded.contains(&n.pair)).take(count).map(|n| n.pair));
    }
    picked
}

/// Choose the pairs to send to the oracle: every component's budget-many
/// best nodes by fused rank. With no predicted matches in the pool, the
/// positive share goes to the pool pairs with the highest match confidence.
pub fn select_samples(scores: &IterationScores, budget: usize, iteration: usize, seed: u64) -> (Vec<usize>, BudgetPlan) {
    let b_pos = positive_budget(budget, iteration);
    let b_neg = budget - b_pos;
    let none = HashSet::new();
    let mut plan = BudgetPlan {
        budget,
        b_pos,
        b_neg,
        ..BudgetPlan::default()
    };

    if scores.positive.is_empty() {
        let mut pool: Vec<&NodeScores> = scores.negative.nodes().collect();
        pool.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then(a.pair.cmp(&b.pair)));
        let fallback: Vec<usize> = pool.iter().take(b_pos).map(|n| n.pair).collect();
        let taken: HashSet<usize> = fallback.iter().copied().collect();
        let (sizes, caps) = side_shape(&scores.negative, &taken);
        plan.cold_start_picks = fallback.len();
        plan.moved_to_negative = b_pos - fallback.len();
        plan.negative = distribute_budget(&sizes, &caps, b_neg + plan.moved_to_negative, seed.wrapping_add(1));
        let mut selected = fallback;
        selected.extend(take_per_component(&scores.negative, &plan.negative.per_component, &taken));
        return (selected, plan);
    }

    let (ps, pc) = side_shape(&scores.positive, &none);
    let (ns, nc) = side_shape(&scores.negative, &none);
    let (positive, negative, to_neg, to_pos) = plan_sides(b_pos, b_neg, (&ps, &pc), (&ns, &nc), seed);
    let mut selected = take_per_component(&scores.positive, &positive.per_component, &none);
    selected.extend(take_per_component(&scores.negative, &negative.per_component, &none));
    plan.positive = positive;
    plan.negative = negative;
    plan.moved_to_negative = to_neg;
    plan.moved_to_positive = to_pos;
    (selected, plan)
}

/// Weak labels: per side, the components' lowest-uncertainty pool pairs,
/// labeled with the model's prediction. Pairs in `excluded` are skipped.
pub fn weak_supervision(scores: &IterationScores, weak_budget: usize, excluded: &HashSet<usize>, seed: u64) -> Vec<(usize, Label)> {
    if weak_budget == 0 {
        return vec![];
    }
    let (ps, pc) = side_shape(&scores.positive, excluded);
    let (ns, nc) = side_shape(&scores.negative, excluded);
    let half = weak_budget / 2;
    let (positive, negative, _, _) = plan_sides(half, weak_budget - half, (&ps, &pc), (&ns, &nc), seed);
    let mut weak = Vec::new();
    for (side, alloc) in [(&scores.positive, &positive), (&scores.negative, &negative)] {
        for (nodes, &count) in side.components.iter().zip(&alloc.per_component) {
            let mut candidates: Vec<&NodeScores> = nodes.iter().filter(|n| !excluded.contains(&n.pair)).collect();
            candidates.sort_by(|a, b| a.uncertainty.total_cmp(&b.uncertainty).then(a.pair.cmp(&b.pair)));
            weak.extend(candidates.iter().take(count).map(|n| (n.pair, n.prediction)));
        }
    }
    weak
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    /// Oracle labels per iteration.
    pub budget: usize,
    pub iterations: usize,
    /// Nearest neighbours linked per node.
    pub q: usize,
    pub extra_ratio: f64,
    pub min_cluster_fraction: f64,
    pub max_cluster_fraction: f64,
    pub alpha: f64,
    pub beta: f64,
    pub damping: f64,
    pub pagerank_tolerance: f64,
    pub pagerank_max_iter: usize,
    pub seed: u64,
    pub seed_positives: usize,
    pub seed_negatives: usize,
    /// Defaults to `budget`.
    pub weak_budget: Option<usize>,
    pub weak_supervision: bool,
    pub strategy: Strategy,
    pub oracle: OracleMode,
    pub matcher: MatcherConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            budget: 100,
            iterations: 8,
            q: 15,
            extra_ratio: 0.03,
            min_cluster_fraction: 0.05,
            max_cluster_fraction: 0.15,
            alpha: 0.5,
            beta: 0.5,
            damping: 0.85,
            pagerank_tolerance: 1e-8,
            pagerank_max_iter: 100,
            seed: 0,
            seed_positives: 50,
            seed_negatives: 50,
            weak_budget: None,
            weak_supervision: true,
            strategy: Strategy::Battleship,
            oracle: OracleMode::GroundTruth,
            matcher: MatcherConfig::default(),
        }
    }
}

impl LoopConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn graph_params(&self) -> GraphParams {
        GraphParams {
            q: self.q,
            extra_ratio: self.extra_ratio,
            bounds: ClusterBounds {
                min_fraction: self.min_cluster_fraction,
                max_fraction: self.max_cluster_fraction,
            },
        }
    }

    pub fn scoring_params(&self) -> ScoringParams {
        ScoringParams {
            alpha: self.alpha,
            beta: self.beta,
            pagerank: PageRankParams {
                damping: self.damping,
                tolerance: self.pagerank_tolerance,
                max_iter: self.pagerank_max_iter,
            },
        }
    }

    pub fn weak_budget(&self) -> usize {
        if self.weak_supervision {
            self.weak_budget.unwrap_or(self.budget)
        } else {
            0
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.graph_params().validate()?;
        self.scoring_params().validate()?;
        self.matcher.validate()?;
        if !(self.pagerank_tolerance > 0.0) || self.pagerank_max_iter == 0 {
            return Err(Error::Config("pagerank tolerance and max_iter must be positive".into()));
        }
        if self.seed_positives == 0 || self.seed_negatives == 0 {
            return Err(Error::Config("the seed needs at least one pair of each class".into()));
        }
        Ok(())
    }
}

/// Stream-separated seeds so that every random choice in a run is independent
/// of the others yet fixed by the run seed.
pub fn derive_seed(seed: u64, stream: u64, iteration: usize) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add((iteration as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const STREAM_SEED: u64 = 1;
const STREAM_GRAPH: u64 = 2;
const STREAM_BUDGET: u64 = 3;
const STREAM_RANDOM: u64 = 4;
const STREAM_MATCHER: u64 = 5;
const STREAM_WEAK: u64 = 6;

/// One iteration's choice of pairs.
#[derive(Debug, Clone, Default)]
pub struct Selection {
    pub selected: Vec<usize>,
    pub weak: Vec<(usize, Label)>,
    pub plan: Option<BudgetPlan>,
    pub scores: Option<IterationScores>,
    pub graphs: Option<IterationGraphs>,
}

/// Select the next batch from encodings of every pair of D. `labels[i]` is
/// the training label of pair `i`, `None` while it is in the pool.
pub fn select_batch(encodings: &[PairEncoding], labels: &[Option<Label>], config: &LoopConfig, iteration: usize) -> Result<Selection> {
    if config.strategy != Strategy::Random && encodings.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: encodings.len(),
        });
    }
    let pool: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_none()).collect();
    let budget = config.budget.min(pool.len());
    let weak_budget = config.weak_budget();
    match config.strategy {
        Strategy::Random => Ok(Selection {
            selected: strategy_random(&pool, budget, derive_seed(config.seed, STREAM_RANDOM, iteration)),
            ..Selection::default()
        }),
        Strategy::Entropy => {
            let selected = strategy_entropy_only(&pool, encodings, budget);
            let chosen: HashSet<usize> = selected.iter().copied().collect();
            let rest: Vec<usize> = pool.iter().copied().filter(|i| !chosen.contains(i)).collect();
            Ok(Selection {
                selected,
                weak: weak_entropy_only(&rest, encodings, weak_budget),
                ..Selection::default()
            })
        }
        Strategy::Battleship => {
            let graphs = build_iteration_graphs(encodings, labels, &config.graph_params(), derive_seed(config.seed, STREAM_GRAPH, iteration))?;
            let scores = score_iteration(&graphs, encodings, &config.scoring_params())?;
            let (selected, plan) = select_samples(&scores, budget, iteration, derive_seed(config.seed, STREAM_BUDGET, iteration));
            let chosen: HashSet<usize> = selected.iter().copied().collect();
            let weak = weak_supervision(&scores, weak_budget, &chosen, derive_seed(config.seed, STREAM_WEAK, iteration));
            Ok(Selection {
                selected,
                weak,
                plan: Some(plan),
                scores: Some(scores),
                graphs: Some(graphs),
            })
        }
    }
}

/// Source of labels for selected pairs.
pub trait LabelOracle {
    /// Labels for `pairs`, in order. Human oracles block until all arrive.
    fn label_batch(&mut self, iteration: usize, pairs: &[&CandidatePair]) -> Result<Vec<Label>>;
}

/// Reveals the dataset's own labels.
#[derive(Debug, Default, Clone, Copy)]
pub struct GroundTruthOracle {
    pub calls: usize,
}

impl LabelOracle for GroundTruthOracle {
    fn label_batch(&mut self, _iteration: usize, pairs: &[&CandidatePair]) -> Result<Vec<Label>> {
        self.calls += pairs.len();
        pairs
            .iter()
            .map(|p| p.ground_truth.ok_or_else(|| Error::MissingGroundTruth(p.pair_id.clone())))
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoopState {
    /// Number of completed selection rounds.
    pub iteration: usize,
    /// Training label per pair of D; `None` for pool pairs.
    pub labels: Vec<Option<Label>>,
    /// Labeled pairs in the order they were added.
    pub train_order: Vec<usize>,
    pub weak_set: Vec<(usize, Label)>,
    pub encodings: Vec<PairEncoding>,
    pub reports: Vec<IterationReport>,
    pub pool_exhausted: bool,
}

impl LoopState {
    pub fn pool(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i].is_none()).collect()
    }

    pub fn pool_len(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }
}

/// Drives the loop over one dataset split.
pub struct ActiveLearner<'a> {
    pub config: LoopConfig,
    pub split: &'a DatasetSplit,
    pub state: LoopState,
    pub matcher: Option<BaselineMatcher>,
    pub last_selection: Option<Selection>,
    index: HashMap<&'a str, usize>,
}

impl<'a> ActiveLearner<'a> {
    pub fn new(config: LoopConfig, split: &'a DatasetSplit) -> Result<Self> {
        config.validate()?;
        split.validate()?;
        let index = split
            .train_pool
            .iter()
            .enumerate()
            .map(|(i, p)| (p.pair_id.as_str(), i))
            .collect();
        let state = LoopState {
            labels: vec![None; split.train_pool.len()],
            ..LoopState::default()
        };
        Ok(Self {
            config,
            split,
            state,
            matcher: None,
            last_selection: None,
            index,
        })
    }

    pub fn index_of(&self, pair_id: &str) -> Option<usize> {
        self.index.get(pair_id).copied()
    }

    fn matcher_config(&self) -> MatcherConfig {
        let mut m = self.config.matcher.clone();
        m.seed = derive_seed(self.config.seed ^ m.seed, STREAM_MATCHER, self.state.iteration);
        m
    }

    fn retrain(&mut self) -> Result<()> {
        let pool = &self.split.train_pool;
        let labeled: Vec<(&CandidatePair, Label)> = self
            .state
            .train_order
            .iter()
            .map(|&i| (&pool[i], self.state.labels[i].expect("labeled")))
            .collect();
        let weak: Vec<(&CandidatePair, Label)> = self.state.weak_set.iter().map(|&(i, l)| (&pool[i], l)).collect();
        let validation: Vec<&CandidatePair> = self.split.validation.iter().collect();
        self.matcher = Some(train_baseline(&labeled, &weak, &validation, &self.matcher_config())?);
        Ok(())
    }

    fn report(&self, selected: &[usize], started: Instant) -> IterationReport {
        let matcher = self.matcher.as_ref().expect("trained");
        let counts = self
            .split
            .test
            .iter()
            .filter_map(|p| p.ground_truth.map(|y| (predict(matcher.confidence(p)), y)))
            .fold((0, 0, 0), |acc, (p, y)| f1_counts(acc, p, y));
        let (precision, recall, f1) = f1_from_counts(counts.0, counts.1, counts.2);
        let pool = &self.split.train_pool;
        let weak_pos: Vec<Label> = self
            .state
            .weak_set
            .iter()
            .filter(|&&(_, l)| l == 1)
            .filter_map(|&(i, _)| pool[i].ground_truth)
            .collect();
        let weak_precision =
            (!weak_pos.is_empty()).then(|| weak_pos.iter().filter(|&&y| y == 1).count() as f64 / weak_pos.len() as f64);
        IterationReport {
            iteration: self.state.iteration,
            labels_used: self.state.train_order.len(),
            f1,
            precision,
            recall,
            selected_ids: selected.iter().map(|&i| pool[i].pair_id.clone()).collect(),
            oracle_calls: selected.len(),
            weak_count: self.state.weak_set.len(),
            weak_precision,
            pool_remaining: self.state.pool_len(),
            pool_exhausted: self.state.pool_exhausted,
            timing: started.elapsed().as_secs_f64(),
        }
    }

    /// Label the seed from the dataset, train the first model and report it
    /// as iteration 0.
    pub fn start(&mut self) -> Result<&IterationReport> {
        let started = Instant::now();
        let ids = draw_seed(
            &self.split.train_pool,
            self.config.seed_positives,
            self.config.seed_negatives,
            derive_seed(self.config.seed, STREAM_SEED, 0),
        )?;
        for id in ids {
            let i = self.index[id.as_str()];
            self.state.labels[i] = self.split.train_pool[i].ground_truth;
            self.state.train_order.push(i);
        }
        self.retrain()?;
        let report = self.report(&[], started);
        self.state.reports.push(report);
        Ok(self.state.reports.last().unwrap())
    }

    /// One selection round. Returns `None` once the pool is empty.
    pub fn step(&mut self, oracle: &mut dyn LabelOracle) -> Result<Option<&IterationReport>> {
        if self.matcher.is_none() {
            return Err(Error::Config("start() must run before step()".into()));
        }
        let pool_before = self.state.pool_len();
        if pool_before == 0 {
            self.state.pool_exhausted = true;
            return Ok(None);
        }
        let started = Instant::now();
        let round = self.state.iteration;
        let matcher = self.matcher.as_ref().unwrap();
        self.state.encodings = match self.config.strategy {
            Strategy::Random => Vec::new(),
            _ => encode_all(matcher, &self.split.train_pool),
        };
        let selection = select_batch(&self.state.encodings, &self.state.labels, &self.config, round)?;

        let pairs: Vec<&CandidatePair> = selection.selected.iter().map(|&i| &self.split.train_pool[i]).collect();
        let answers = oracle.label_batch(round + 1, &pairs)?;
        if answers.len() != pairs.len() {
            return Err(Error::Config(format!("oracle returned {} labels for {} pairs", answers.len(), pairs.len())));
        }
        for (&i, &label) in selection.selected.iter().zip(&answers) {
            if self.state.labels[i].is_some() {
                return Err(Error::Config(format!("pair {} selected twice", self.split.train_pool[i].pair_id)));
            }
            self.state.labels[i] = Some(crate::dataset::check_label(label as i64)?);
            self.state.train_order.push(i);
        }
        self.state.weak_set = selection.weak.iter().copied().filter(|&(i, _)| self.state.labels[i].is_none()).collect();
        self.state.iteration += 1;
        self.state.pool_exhausted = self.state.pool_len() == 0 || pool_before < self.config.budget;
        self.retrain()?;
        let report = self.report(&selection.selected, started);
        self.last_selection = Some(selection);
        self.state.reports.push(report);
        Ok(self.state.reports.last())
    }

    /// Seed, then up to `iterations` rounds.
    pub fn run(mut self, oracle: &mut dyn LabelOracle) -> Result<Vec<IterationReport>> {
        self.start()?;
        for _ in 0..self.config.iterations {
            if self.step(oracle)?.is_none() {
                break;
            }
            if self.state.pool_exhausted {
                break;
            }
        }
        Ok(self.state.reports)
    }
}

/// Full run against the dataset's own labels.
pub fn run_active_learning(config: &LoopConfig, split: &DatasetSplit) -> Result<Vec<IterationReport>> {
    if config.oracle != OracleMode::GroundTruth {
        return Err(Error::Config("run_active_learning needs the ground_truth oracle; use a session for human labeling".into()));
    }
    ActiveLearner::new(config.clone(), split)?.run(&mut GroundTruthOracle::default())
}
