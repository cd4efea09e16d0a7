//! Executes strategies over instance sets and assembles reports.

use std::sync::Arc;

use adecot::metrics::{compare_to_bon, EfficiencyReport, InstanceRow};
use adecot::model::{EditInstance, SearchConfig};
use adecot::sampler::{RemoteSampler, Sampler, SimSampler, SimWorld};
use adecot::search::{
    ade_cot, best_of_n, early_prune_baseline, PruneMode, RunTrace, SearchContext, SearchResult, Strategy,
};
use adecot::verifiers::Verifiers;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{BackendConfig, BackendKind, ExperimentConfig};
use crate::error::{CliError, CliResult};

/// Sampler and providers for one run seed.
pub struct Backend {
    pub sampler: Arc<dyn Sampler>,
    pub verifiers: Verifiers,
    pub world: Option<Arc<SimWorld>>,
}

impl Backend {
    pub fn simulated(params: adecot::sampler::SimParams, run_seed: u64, steps: u32) -> Self {
        let world = SimWorld::new(adecot::sampler::SimParams { run_seed, ..params });
        Self {
            sampler: Arc::new(SimSampler::new(world.clone(), steps)),
            verifiers: Verifiers::simulated(world.clone()),
            world: Some(world),
        }
    }

    pub fn remote(backend: &BackendConfig, steps: u32) -> CliResult<Self> {
        let endpoint = backend.endpoint()?;
        let clip = backend.clip_endpoint.clone().unwrap_or_else(|| endpoint.clone());
        let visual = backend.visual_endpoint.clone().unwrap_or_else(|| endpoint.clone());
        Ok(Self {
            sampler: Arc::new(RemoteSampler::new(&endpoint, steps, backend.http)?),
            verifiers: Verifiers::remote(&endpoint, &clip, &visual, backend.http)?,
            world: None,
        })
    }

    pub fn for_seed(cfg: &ExperimentConfig, seed: u64) -> CliResult<Self> {
        match cfg.backend.kind {
            BackendKind::Simulator => Ok(Self::simulated(cfg.simulator, seed, cfg.search.steps)),
            BackendKind::Remote => Self::remote(&cfg.backend, cfg.search.steps),
        }
    }

    pub fn register(&self, instances: &[EditInstance]) -> CliResult<()> {
        if let Some(world) = &self.world {
            for inst in instances {
                world.register_instance(inst)?;
            }
        }
        Ok(())
    }
}

pub fn run_one(
    ctx: &SearchContext<'_>,
    instance: &EditInstance,
    config: &SearchConfig,
    strategy: Strategy,
) -> SearchResult {
    match strategy {
        Strategy::Bon => best_of_n(ctx, instance, config),
        Strategy::EarlyPruneAdditional => early_prune_baseline(ctx, instance, config, PruneMode::AdditionalSteps),
        Strategy::EarlyPruneIntermediate => early_prune_baseline(ctx, instance, config, PruneMode::IntermediateState),
        Strategy::AdeCot => ade_cot(ctx, instance, config),
    }
}

/// Run `strategy` on every instance, in parallel across instances. Traces
/// come back in instance order.
pub fn run_strategy(
    backend: &Backend,
    instances: &[EditInstance],
    config: &SearchConfig,
    strategy: Strategy,
    seed: u64,
) -> CliResult<Vec<RunTrace>> {
    backend.register(instances)?;
    let ctx = SearchContext::new(backend.sampler.as_ref(), &backend.verifiers, seed);
    instances
        .par_iter()
        .map(|inst| run_one(&ctx, inst, config, strategy).map_err(CliError::from))
        .collect()
}

/// Headline numbers of one strategy on one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub instance_count: usize,
    pub eta: f64,
    pub xi: f64,
    pub mean_final_score: f64,
    pub total_nfe: f64,
    pub mean_mllm_queries: f64,
    /// Best-of-N total NFE over this strategy's.
    pub speedup_vs_bon: f64,
    pub eta_ratio: f64,
    pub xi_ratio: f64,
    pub score_delta: f64,
    pub degenerate_runs: f64,
}

impl Summary {
    pub fn mean(items: &[Summary]) -> Summary {
        let m = items.len() as f64;
        let avg = |f: fn(&Summary) -> f64| items.iter().map(f).sum::<f64>() / m;
        Summary {
            instance_count: items.first().map_or(0, |s| s.instance_count),
            eta: avg(|s| s.eta),
            xi: avg(|s| s.xi),
            mean_final_score: avg(|s| s.mean_final_score),
            total_nfe: avg(|s| s.total_nfe),
            mean_mllm_queries: avg(|s| s.mean_mllm_queries),
            speedup_vs_bon: avg(|s| s.speedup_vs_bon),
            eta_ratio: avg(|s| s.eta_ratio),
            xi_ratio: avg(|s| s.xi_ratio),
            score_delta: avg(|s| s.score_delta),
            degenerate_runs: avg(|s| s.degenerate_runs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedBlock {
    pub seed: u64,
    pub summary: Summary,
    pub report: EfficiencyReport,
    pub bon: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub strategy: Strategy,
    pub search: SearchConfig,
    pub seeds: Vec<SeedBlock>,
    pub average: Summary,
    pub bon_average: Summary,
}

/// Per-instance rows of `traces` judged against the Best-of-N traces.
pub fn rows_against(traces: &[RunTrace], bon: &[RunTrace]) -> CliResult<Vec<InstanceRow>> {
    traces
        .iter()
        .zip(bon)
        .map(|(t, b)| {
            debug_assert_eq!(t.instance_id, b.instance_id);
            let reference = b
                .final_quality()
                .ok_or_else(|| CliError::Invalid(format!("no Best-of-N result for {}", b.instance_id)))?;
            Ok(InstanceRow::from_trace(t, reference)?)
        })
        .collect()
}

pub fn efficiency(traces: &[RunTrace], bon: &[RunTrace], config: &SearchConfig) -> CliResult<EfficiencyReport> {
    Ok(EfficiencyReport::from_rows(
        rows_against(traces, bon)?,
        config.n,
        config.steps,
        config.s_max,
    )?)
}

pub fn summarize(report: &EfficiencyReport, bon: &EfficiencyReport, degenerate: usize) -> CliResult<Summary> {
    let c = compare_to_bon(report, bon)?;
    Ok(Summary {
        instance_count: report.instance_count,
        eta: report.eta,
        xi: report.xi,
        mean_final_score: report.mean_final_score,
        total_nfe: report.total_nfe as f64,
        mean_mllm_queries: report.mean_mllm_queries,
        speedup_vs_bon: c.nfe_ratio,
        eta_ratio: c.eta_ratio,
        xi_ratio: c.xi_ratio,
        score_delta: c.score_delta,
        degenerate_runs: degenerate as f64,
    })
}

/// Traces of one seed: the configured strategy and its Best-of-N reference.
pub struct SeedRun {
    pub seed: u64,
    pub traces: Vec<RunTrace>,
    pub bon: Vec<RunTrace>,
}

pub fn run_seed(
    cfg: &ExperimentConfig,
    instances: &[EditInstance],
    strategy: Strategy,
    seed: u64,
) -> CliResult<SeedRun> {
    let backend = Backend::for_seed(cfg, seed)?;
    let bon = run_strategy(&backend, instances, &cfg.search, Strategy::Bon, seed)?;
    let traces = if strategy == Strategy::Bon {
        bon.clone()
    } else {
        run_strategy(&backend, instances, &cfg.search, strategy, seed)?
    };
    Ok(SeedRun { seed, traces, bon })
}

pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub runs: Vec<SeedRun>,
}

impl ExperimentOutput {
    pub fn degenerate(&self) -> bool {
        self.runs
            .iter()
            .any(|r| r.traces.iter().chain(&r.bon).any(|t| t.degenerate))
    }
}

pub fn run_experiment(cfg: &ExperimentConfig, instances: &[EditInstance]) -> CliResult<ExperimentOutput> {
    let mut runs = Vec::new();
    let mut blocks = Vec::new();
    for &seed in &cfg.seeds {
        let run = run_seed(cfg, instances, cfg.strategy, seed)?;
        let report = efficiency(&run.traces, &run.bon, &cfg.search)?;
        let bon_report = efficiency(&run.bon, &run.bon, &cfg.search)?;
        let degenerate = run.traces.iter().filter(|t| t.degenerate).count();
        let bon_degenerate = run.bon.iter().filter(|t| t.degenerate).count();
        blocks.push(SeedBlock {
            seed,
            summary: summarize(&report, &bon_report, degenerate)?,
            bon: summarize(&bon_report, &bon_report, bon_degenerate)?,
            report,
        });
        runs.push(run);
    }
    let average = Summary::mean(&blocks.iter().map(|b| b.summary.clone()).collect::<Vec<_>>());
    let bon_average = Summary::mean(&blocks.iter().map(|b| b.bon.clone()).collect::<Vec<_>>());
    Ok(ExperimentOutput {
        report: ExperimentReport {
            strategy: cfg.strategy,
            search: cfg.search,
            seeds: blocks,
            average,
            bon_average,
        },
        runs,
    })
}

/// One row of the scaling-curve file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub strategy: Strategy,
    #[serde(rename = "N")]
    pub n: u32,
    pub mean_nfe: f64,
    pub mean_score: f64,
    pub eta: f64,
    pub xi: f64,
    pub stderr_score: f64,
}

fn stderr(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

/// Best-of-N and the configured strategy at every budget.
pub fn sweep_budgets(cfg: &ExperimentConfig, instances: &[EditInstance], budgets: &[u32]) -> CliResult<Vec<CurveRow>> {
    if budgets.is_empty() || budgets.contains(&0) {
        return Err(CliError::Invalid(
            "budgets must be a non-empty list of positive integers".into(),
        ));
    }
    let mut strategies = vec![Strategy::Bon];
    if cfg.strategy != Strategy::Bon {
        strategies.push(cfg.strategy);
    }
    let mut rows = Vec::new();
    for &strategy in &strategies {
        for &n in budgets {
            let mut search = cfg.search;
            search.n = n;
            search.n_min = search.n_min.min(n);
            let mut sub = cfg.clone();
            sub.search = search;
            let (mut etas, mut xis, mut nfes, mut scores) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for &seed in &cfg.seeds {
                let run = run_seed(&sub, instances, strategy, seed)?;
                let report = efficiency(&run.traces, &run.bon, &search)?;
                etas.push(report.eta);
                xis.push(report.xi);
                nfes.push(report.total_nfe as f64 / report.instance_count as f64);
                scores.extend(report.per_instance.iter().map(|r| r.score));
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            rows.push(CurveRow {
                strategy,
                n,
                mean_nfe: mean(&nfes),
                mean_score: mean(&scores),
                eta: mean(&etas),
                xi: mean(&xis),
                stderr_score: stderr(&scores),
            });
        }
    }
    Ok(rows)
}
