//! Difficulty-aware budgeting, edit-specific early pruning and depth-first
//! opportunistic stopping.

use super::{
    adapt_budget, argmax_first, finish_run, select_final, EventKind, PoolEntry, RunTrace, SearchContext, SearchResult,
    Strategy, TraceEvent,
};
use crate::error::Result;
use crate::model::{CandidateState, EditInstance, Image, Phase, ScoreBreakdown, SearchConfig};
use crate::verifiers::region::refine_until_signal;
use crate::verifiers::{change_map, similarity_filter, InstanceArtifacts, MaskOrigin};

/// The fully denoised difficulty probe.
#[derive(Debug, Clone)]
pub struct Probe {
    pub budget: u32,
    pub state: CandidateState,
    pub image: Image,
    /// General score of the probe, absent when the judge failed.
    pub s_gen: Option<f64>,
    /// Ledger total right after the probe finished.
    pub nfe_at_completion: u64,
}

/// Generate one full candidate, score it with the general judge only and
/// size the budget from that score. A failed judge falls back to `N`.
pub fn adapt_num(
    ctx: &SearchContext<'_>,
    trace: &mut RunTrace,
    instance: &EditInstance,
    config: &SearchConfig,
) -> Result<Probe> {
    let state = ctx.spawn(instance, 0)?;
    let state = ctx.advance(trace, instance, state, 0, Phase::Probe)?;
    let image = ctx.sampler.decode(instance, &state)?;
    let (s_gen, queries) = ctx.verifiers.general_score(instance, &image);
    trace.mllm_queries += queries;
    let s_gen = s_gen.ok();
    let budget = s_gen.map_or(config.n, |s| {
        adapt_budget(s, config.n, config.n_min, config.gamma, config.s_max)
    });
    Ok(Probe {
        budget,
        state,
        image,
        s_gen,
        nfe_at_completion: trace.total_nfe(),
    })
}

/// Survivors of the early checkpoint, best first.
#[derive(Debug, Clone)]
pub struct EarlyOutcome {
    pub ordered: Vec<(CandidateState, ScoreBreakdown)>,
    /// Every candidate was pruned; `ordered` holds the best preview instead.
    pub degenerate: bool,
}

/// Sample `count` candidates (ids from `first_id`) to the early checkpoint,
/// score their one-step previews with the unified score, reject those below
/// `S_rj`, drop near-duplicates and sort by score.
pub fn early_prune(
    ctx: &SearchContext<'_>,
    trace: &mut RunTrace,
    instance: &EditInstance,
    first_id: u32,
    count: u32,
    config: &SearchConfig,
    artifacts: &mut InstanceArtifacts,
) -> Result<EarlyOutcome> {
    let mut previews = Vec::with_capacity(count as usize);
    for i in first_id..first_id + count {
        let state = ctx.spawn(instance, i)?;
        let state = ctx.advance(trace, instance, state, config.early_timestep(), Phase::Early)?;
        let image = ctx.preview(trace, instance, &state)?;
        previews.push((state, image));
    }

    if let Some(mask) = artifacts.mask.as_ref().filter(|m| m.origin != MaskOrigin::Unavailable) {
        let maps: Vec<_> = previews
            .iter()
            .filter_map(|(_, img)| change_map(img, &instance.source, config.region_window).ok())
            .collect();
        if !maps.is_empty() {
            let (refined, _) = refine_until_signal(mask, &maps, config.mask_pad, config.region_window)?;
            artifacts.mask = Some(refined);
        }
    }

    let mut scored = Vec::with_capacity(previews.len());
    for (mut state, image) in previews {
        let (score, queries) = ctx.verifiers.unified(instance, artifacts, &image, config);
        trace.mllm_queries += queries;
        let score = score?;
        state.score_history.push((state.timestep, score));
        trace.event(&state, EventKind::Previewed, Some(score));
        scored.push((state, image, score));
    }

    let mut kept = Vec::new();
    for item in &scored {
        if item.2.unified < config.s_reject {
            trace.event(&item.0, EventKind::Rejected, Some(item.2));
        } else {
            kept.push(item);
        }
    }

    let scores: Vec<f64> = kept.iter().map(|k| k.2.unified).collect();
    let embeddings: Result<Vec<Vec<f64>>> = kept.iter().map(|k| ctx.verifiers.visual_embedding(&k.1)).collect();
    let order = match embeddings {
        Ok(e) => similarity_filter(&e, &scores, config.tau_sim),
        // Without embeddings nothing can be called a duplicate.
        Err(_) => similarity_filter(&vec![Vec::new(); kept.len()], &scores, 1.0),
    };
    for (i, item) in kept.iter().enumerate() {
        if !order.contains(&i) {
            trace.event(&item.0, EventKind::Deduplicated, Some(item.2));
        }
    }
    let mut ordered: Vec<_> = order.iter().map(|&i| (kept[i].0.clone(), kept[i].2)).collect();

    let degenerate = ordered.is_empty() && !scored.is_empty();
    if degenerate {
        let best = argmax_first(scored.iter().map(|s| s.2.unified)).expect("non-empty");
        ordered.push((scored[best].0.clone(), scored[best].2));
    }
    Ok(EarlyOutcome { ordered, degenerate })
}

/// Late-stage retain rule: keep a candidate whose late score is within
/// `delta` of the best seen so far. Returns the raised threshold when kept.
pub fn retain(threshold: f64, late_score: f64, delta: f64) -> Option<f64> {
    (late_score >= threshold - delta).then_some(threshold.max(late_score))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StopOutcome {
    pub n_cnt: u32,
    pub stopped_early: bool,
    /// Candidates taken past the late checkpoint.
    pub completed: u32,
    /// No candidates were given.
    pub degenerate: bool,
}

/// Final-stage score: unified score plus the count of "yes" answers.
fn final_score(
    ctx: &SearchContext<'_>,
    trace: &mut RunTrace,
    instance: &EditInstance,
    artifacts: &InstanceArtifacts,
    image: &Image,
    s_gen: Option<f64>,
    config: &SearchConfig,
) -> Result<ScoreBreakdown> {
    let base = match s_gen {
        Some(g) => ctx.verifiers.with_general(instance, artifacts, image, g, config),
        None => {
            let (score, queries) = ctx.verifiers.unified(instance, artifacts, image, config);
            trace.mllm_queries += queries;
            score?
        }
    };
    let (spec, queries) = ctx.verifiers.specific(instance, artifacts, image);
    trace.mllm_queries += queries;
    Ok(base.with_spec(spec, config.lambda_reg, config.lambda_cap))
}

fn intent_aligned(score: &ScoreBreakdown, config: &SearchConfig) -> bool {
    score.s_spec.is_some_and(|s| s >= config.s_high)
}

/// Complete candidates one at a time in the given order. Each is sampled to
/// the late checkpoint and previewed; it is finished only if its late score
/// stays within `delta` of the best late score so far. Stops once `N_high`
/// finished candidates are intent-aligned. `n_cnt` carries alignments found
/// before this stage.
#[allow(clippy::too_many_arguments)]
pub fn adaptive_stop(
    ctx: &SearchContext<'_>,
    trace: &mut RunTrace,
    instance: &EditInstance,
    candidates: Vec<(CandidateState, ScoreBreakdown)>,
    config: &SearchConfig,
    artifacts: &InstanceArtifacts,
    pool: &mut Vec<PoolEntry>,
    mut n_cnt: u32,
) -> Result<StopOutcome> {
    let degenerate = candidates.is_empty();
    let mut threshold = 0.0;
    let mut completed = 0;
    for (state, _) in candidates {
        if n_cnt >= config.n_high {
            break;
        }
        let mut state = ctx.advance(trace, instance, state, config.late_timestep(), Phase::Late)?;
        let preview = ctx.preview(trace, instance, &state)?;
        let (late, queries) = ctx.verifiers.unified(instance, artifacts, &preview, config);
        trace.mllm_queries += queries;
        let late = late?;
        state.score_history.push((state.timestep, late));
        let kept = retain(threshold, late.unified, config.delta);
        threshold = kept.unwrap_or(threshold);
        trace.event(&state, EventKind::LatePreviewed, Some(late));
        trace.events.last_mut().expect("just pushed").retain_threshold = Some(threshold);
        if kept.is_none() {
            trace.event(&state, EventKind::Skipped, Some(late));
            continue;
        }
        let state = ctx.advance(trace, instance, state, 0, Phase::Final)?;
        let (image, s_gen) = ctx.finish_general(trace, instance, &state)?;
        let score = final_score(ctx, trace, instance, artifacts, &image, Some(s_gen), config)?;
        completed += 1;
        if intent_aligned(&score, config) {
            n_cnt += 1;
        }
        trace.event(&state, EventKind::Completed, Some(score));
        pool.push(PoolEntry {
            candidate_id: state.candidate_id,
            seed: state.seed,
            image,
            score,
        });
    }
    Ok(StopOutcome {
        n_cnt,
        stopped_early: n_cnt >= config.n_high,
        completed,
        degenerate,
    })
}

/// Probe, early pruning on the adapted budget, opportunistic stopping and
/// final selection over everything completed, probe included.
pub fn ade_cot(ctx: &SearchContext<'_>, instance: &EditInstance, config: &SearchConfig) -> SearchResult {
    let trace = RunTrace::new(instance, Strategy::AdeCot, ctx.run_seed, config);
    finish_run(trace, |trace| {
        config.validate()?;
        let probe = adapt_num(ctx, trace, instance, config)?;
        trace.adapted_budget = Some(probe.budget);

        let (mut artifacts, queries) = ctx.verifiers.prepare_preview(instance);
        trace.mllm_queries += queries;
        trace.mllm_queries += ctx.verifiers.prepare_questions(instance, &mut artifacts);

        let early = early_prune(ctx, trace, instance, 1, probe.budget - 1, config, &mut artifacts)?;
        trace.degenerate |= early.degenerate;

        let probe_score = final_score(ctx, trace, instance, &artifacts, &probe.image, probe.s_gen, config)?;
        let n_cnt = u32::from(intent_aligned(&probe_score, config));
        trace.events.push(TraceEvent {
            candidate_id: probe.state.candidate_id,
            seed: probe.state.seed,
            kind: EventKind::Completed,
            timestep: 0,
            score: Some(probe_score),
            retain_threshold: None,
            nfe_total: probe.nfe_at_completion,
        });
        let mut pool = vec![PoolEntry {
            candidate_id: probe.state.candidate_id,
            seed: probe.state.seed,
            image: probe.image,
            score: probe_score,
        }];

        let stop = adaptive_stop(
            ctx,
            trace,
            instance,
            early.ordered,
            config,
            &artifacts,
            &mut pool,
            n_cnt,
        )?;
        trace.stopped_early = stop.stopped_early;
        trace.n_cnt_final = stop.n_cnt;

        let best = select_final(&pool, ctx.verifiers.visual.as_ref())?;
        trace.finish(&pool[best]);
        Ok(())
    })
}
