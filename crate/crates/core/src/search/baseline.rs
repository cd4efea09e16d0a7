//! Best-of-N and early-pruning baselines.

use serde::{Deserialize, Serialize};

use super::{argmax_first, finish_run, EventKind, PoolEntry, RunTrace, SearchContext, SearchResult, Strategy};
use crate::error::Result;
use crate::model::{CandidateState, EditInstance, Phase, ScoreBreakdown, SearchConfig};

/// Generate `N` full candidates and keep the best general score.
pub fn best_of_n(ctx: &SearchContext<'_>, instance: &EditInstance, config: &SearchConfig) -> SearchResult {
    let trace = RunTrace::new(instance, Strategy::Bon, ctx.run_seed, config);
    finish_run(trace, |trace| {
        config.validate()?;
        let mut pool = Vec::with_capacity(config.n as usize);
        for i in 0..config.n {
            let state = ctx.spawn(instance, i)?;
            let state = ctx.advance(trace, instance, state, 0, Phase::Full)?;
            let (image, s_gen) = ctx.finish_general(trace, instance, &state)?;
            let score = ScoreBreakdown::general(s_gen);
            trace.event(&state, EventKind::Completed, Some(score));
            pool.push(PoolEntry {
                candidate_id: i,
                seed: state.seed,
                image,
                score,
            });
        }
        let best = argmax_first(pool.iter().map(|e| e.score.unified)).expect("n >= 1");
        trace.finish(&pool[best]);
        Ok(())
    })
}

/// How the early-pruning baseline obtains its preview.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneMode {
    /// A separate short run of `t_e` steps; survivors restart from scratch.
    AdditionalSteps,
    /// Stop the real trajectory after `t_e` steps; survivors resume.
    IntermediateState,
}

impl PruneMode {
    fn strategy(self) -> Strategy {
        match self {
            PruneMode::AdditionalSteps => Strategy::EarlyPruneAdditional,
            PruneMode::IntermediateState => Strategy::EarlyPruneIntermediate,
        }
    }
}

/// Preview every candidate after `t_e` steps, drop those whose general score
/// is below `S_rj`, complete the rest and keep the best.
pub fn early_prune_baseline(
    ctx: &SearchContext<'_>,
    instance: &EditInstance,
    config: &SearchConfig,
    mode: PruneMode,
) -> SearchResult {
    let trace = RunTrace::new(instance, mode.strategy(), ctx.run_seed, config);
    finish_run(trace, |trace| {
        config.validate()?;
        let mut previewed: Vec<(CandidateState, ScoreBreakdown)> = Vec::new();
        for i in 0..config.n {
            let (state, image) = match mode {
                PruneMode::IntermediateState => {
                    let state = ctx.spawn(instance, i)?;
                    let state = ctx.advance(trace, instance, state, config.early_timestep(), Phase::Early)?;
                    let image = ctx.preview(trace, instance, &state)?;
                    (state, image)
                }
                PruneMode::AdditionalSteps => {
                    let state = ctx.spawn_short(instance, i, config.t_early)?;
                    let state = ctx.advance(trace, instance, state, 0, Phase::PreviewRun)?;
                    let image = ctx.sampler.decode(instance, &state)?;
                    (state, image)
                }
            };
            let (s_gen, queries) = ctx.verifiers.general_score(instance, &image);
            trace.mllm_queries += queries;
            let score = ScoreBreakdown::general(s_gen?);
            trace.event(&state, EventKind::Previewed, Some(score));
            previewed.push((state, score));
        }

        let mut survivors = Vec::new();
        for (state, score) in &previewed {
            if score.unified < config.s_reject {
                trace.event(state, EventKind::Rejected, Some(*score));
            } else {
                survivors.push(state.clone());
            }
        }
        if survivors.is_empty() {
            trace.degenerate = true;
            let best = argmax_first(previewed.iter().map(|(_, s)| s.unified)).expect("n >= 1");
            survivors.push(previewed[best].0.clone());
        }

        let mut pool = Vec::with_capacity(survivors.len());
        for state in survivors {
            let state = complete(ctx, trace, instance, state, mode)?;
            let (image, s_gen) = ctx.finish_general(trace, instance, &state)?;
            let score = ScoreBreakdown::general(s_gen);
            trace.event(&state, EventKind::Completed, Some(score));
            pool.push(PoolEntry {
                candidate_id: state.candidate_id,
                seed: state.seed,
                image,
                score,
            });
        }
        let best = argmax_first(pool.iter().map(|e| e.score.unified)).expect("pool is non-empty");
        trace.finish(&pool[best]);
        Ok(())
    })
}

fn complete(
    ctx: &SearchContext<'_>,
    trace: &mut RunTrace,
    instance: &EditInstance,
    state: CandidateState,
    mode: PruneMode,
) -> Result<CandidateState> {
    match mode {
        PruneMode::IntermediateState => ctx.advance(trace, instance, state, 0, Phase::Resume),
        PruneMode::AdditionalSteps => {
            let fresh = ctx.spawn(instance, state.candidate_id)?;
            ctx.advance(trace, instance, fresh, 0, Phase::Full)
        }
    }
}
