//! Search strategies over denoising trajectories.

mod ade;
mod baseline;
mod budget;
mod select;

pub use ade::retain;
pub use ade::{adapt_num, adaptive_stop, ade_cot, early_prune, EarlyOutcome, Probe, StopOutcome};
pub use baseline::{best_of_n, early_prune_baseline, PruneMode};
pub use budget::adapt_budget;
pub use select::{select_final, PoolEntry};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CandidateState, EditInstance, Image, NfeLedger, Phase, ScoreBreakdown, SearchConfig};
use crate::sampler::Sampler;
use crate::verifiers::Verifiers;

/// Tolerance when comparing a result against the Best-of-N reference.
pub const NON_DEGRADED_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Bon,
    EarlyPruneAdditional,
    EarlyPruneIntermediate,
    AdeCot,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Bon,
        Strategy::EarlyPruneAdditional,
        Strategy::EarlyPruneIntermediate,
        Strategy::AdeCot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Bon => "bon",
            Strategy::EarlyPruneAdditional => "early-prune-additional",
            Strategy::EarlyPruneIntermediate => "early-prune-intermediate",
            Strategy::AdeCot => "ade-cot",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}")))
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Preview scored at the early checkpoint.
    Previewed,
    /// Dropped for scoring below the rejection threshold.
    Rejected,
    /// Dropped as a near-duplicate of a better candidate.
    Deduplicated,
    /// Preview scored at the late checkpoint.
    LatePreviewed,
    /// Not completed because its late score fell below the retain threshold.
    Skipped,
    /// Fully denoised and scored.
    Completed,
    /// Returned as the run's answer.
    Selected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub candidate_id: u32,
    pub seed: u64,
    pub kind: EventKind,
    /// Remaining-steps timestep of the candidate when the event happened.
    pub timestep: u32,
    pub score: Option<ScoreBreakdown>,
    /// Retain threshold in force after a late preview.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub retain_threshold: Option<f64>,
    /// Ledger total when the event was recorded.
    pub nfe_total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalPick {
    pub candidate_id: u32,
    pub seed: u64,
    pub score: ScoreBreakdown,
    pub image_fingerprint: u64,
    #[serde(skip)]
    pub image: Option<Image>,
}

/// Everything a strategy did for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub instance_id: String,
    pub strategy: Strategy,
    pub run_seed: u64,
    pub config: SearchConfig,
    pub events: Vec<TraceEvent>,
    pub ledger: NfeLedger,
    #[serde(rename = "final")]
    pub final_pick: Option<FinalPick>,
    /// Budget chosen by difficulty-aware allocation.
    pub adapted_budget: Option<u32>,
    pub stopped_early: bool,
    pub n_cnt_final: u32,
    pub degenerate: bool,
    pub mllm_queries: u32,
}

impl RunTrace {
    pub fn new(instance: &EditInstance, strategy: Strategy, run_seed: u64, config: &SearchConfig) -> Self {
        Self {
            instance_id: instance.id.clone(),
            strategy,
            run_seed,
            config: *config,
            events: Vec::new(),
            ledger: NfeLedger::new(),
            final_pick: None,
            adapted_budget: None,
            stopped_early: false,
            n_cnt_final: 0,
            degenerate: false,
            mllm_queries: 0,
        }
    }

    pub fn total_nfe(&self) -> u64 {
        self.ledger.total()
    }

    pub(crate) fn charge(&mut self, state: &CandidateState, phase: Phase, steps: u64) {
        self.ledger.charge(state.candidate_id, phase, steps);
    }

    pub(crate) fn event(&mut self, state: &CandidateState, kind: EventKind, score: Option<ScoreBreakdown>) {
        self.events.push(TraceEvent {
            candidate_id: state.candidate_id,
            seed: state.seed,
            kind,
            timestep: state.timestep,
            score,
            retain_threshold: None,
            nfe_total: self.ledger.total(),
        });
    }

    /// Events of one kind.
    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// Candidates that were fully denoised, in completion order.
    pub fn completed(&self) -> impl Iterator<Item = &TraceEvent> {
        self.events_of(EventKind::Completed)
    }

    /// General score of the selected candidate.
    pub fn final_quality(&self) -> Option<f64> {
        self.final_pick.as_ref().map(|p| p.score.s_gen)
    }

    pub(crate) fn finish(&mut self, entry: &PoolEntry) {
        self.events.push(TraceEvent {
            candidate_id: entry.candidate_id,
            seed: entry.seed,
            kind: EventKind::Selected,
            timestep: 0,
            score: Some(entry.score),
            retain_threshold: None,
            nfe_total: self.ledger.total(),
        });
        self.final_pick = Some(FinalPick {
            candidate_id: entry.candidate_id,
            seed: entry.seed,
            score: entry.score,
            image_fingerprint: entry.image.fingerprint(),
            image: Some(entry.image.clone()),
        });
    }
}

/// A run that failed part-way; the partial trace is kept for inspection.
#[derive(Debug)]
pub struct SearchFailure {
    pub error: Error,
    pub partial: Box<RunTrace>,
}

impl std::fmt::Display for SearchFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} on instance {}: {}",
            self.partial.strategy, self.partial.instance_id, self.error
        )
    }
}

impl std::error::Error for SearchFailure {}

pub type SearchResult = std::result::Result<RunTrace, SearchFailure>;

pub(crate) fn finish_run(mut trace: RunTrace, body: impl FnOnce(&mut RunTrace) -> Result<()>) -> SearchResult {
    match body(&mut trace) {
        Ok(()) => Ok(trace),
        Err(error) => Err(SearchFailure {
            error,
            partial: Box::new(trace),
        }),
    }
}

/// Rewrites the instruction for a candidate. The default keeps the
/// instance's own prompts.
pub trait PromptRewriter: Send + Sync {
    fn rewrite(&self, instance: &EditInstance, candidate_index: u32) -> String;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityRewriter;

impl PromptRewriter for IdentityRewriter {
    fn rewrite(&self, instance: &EditInstance, candidate_index: u32) -> String {
        instance.prompt_for(candidate_index).to_string()
    }
}

/// Sampler, providers and run seed shared by every strategy.
#[derive(Clone, Copy)]
pub struct SearchContext<'a> {
    pub sampler: &'a dyn Sampler,
    pub verifiers: &'a Verifiers,
    pub rewriter: &'a dyn PromptRewriter,
    pub run_seed: u64,
}

impl<'a> SearchContext<'a> {
    pub fn new(sampler: &'a dyn Sampler, verifiers: &'a Verifiers, run_seed: u64) -> Self {
        Self {
            sampler,
            verifiers,
            rewriter: &IdentityRewriter,
            run_seed,
        }
    }

    pub(crate) fn spawn(&self, instance: &EditInstance, index: u32) -> Result<CandidateState> {
        let prompt = self.rewriter.rewrite(instance, index);
        self.sampler.spawn(
            instance,
            index,
            crate::rng::candidate_seed(self.run_seed, index),
            &prompt,
        )
    }

    pub(crate) fn spawn_short(&self, instance: &EditInstance, index: u32, steps: u32) -> Result<CandidateState> {
        let prompt = self.rewriter.rewrite(instance, index);
        self.sampler.spawn_short(
            instance,
            index,
            crate::rng::candidate_seed(self.run_seed, index),
            &prompt,
            steps,
        )
    }

    /// Decode a clean candidate and score it with the general judge.
    pub(crate) fn finish_general(
        &self,
        trace: &mut RunTrace,
        instance: &EditInstance,
        state: &CandidateState,
    ) -> Result<(Image, f64)> {
        let image = self.sampler.decode(instance, state)?;
        let (score, queries) = self.verifiers.general_score(instance, &image);
        trace.mllm_queries += queries;
        Ok((image, score?))
    }

    /// Advance `state` to `to_t`, charging the ledger under `phase`.
    pub(crate) fn advance(
        &self,
        trace: &mut RunTrace,
        instance: &EditInstance,
        state: CandidateState,
        to_t: u32,
        phase: Phase,
    ) -> Result<CandidateState> {
        let (state, steps) = self.sampler.sample_partial(instance, state, to_t)?;
        trace.charge(&state, phase, steps);
        Ok(state)
    }

    /// One-step preview; backends that cannot reuse a prediction are charged
    /// separately.
    pub(crate) fn preview(
        &self,
        trace: &mut RunTrace,
        instance: &EditInstance,
        state: &CandidateState,
    ) -> Result<Image> {
        let (image, extra) = self.sampler.preview(instance, state)?;
        if extra > 0 {
            trace.charge(state, Phase::PreviewExtra, extra);
        }
        Ok(image)
    }
}

/// Whether a result is at least as good as the Best-of-N reference.
pub fn non_degraded(score: f64, reference: f64) -> bool {
    score >= reference - NON_DEGRADED_TOLERANCE
}

/// Position of the highest unified score, earliest on ties.
pub(crate) fn argmax_first(scores: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Ledger total at the moment the first candidate whose general score
/// reaches `reference` was completed; the run's total if none does.
pub fn nfe_min_of(trace: &RunTrace, reference: f64) -> Result<u64> {
    let mut completed = trace.completed().peekable();
    if completed.peek().is_none() {
        return Err(Error::EmptyTrace);
    }
    Ok(completed
        .find(|e| e.score.as_ref().is_some_and(|s| non_degraded(s.s_gen, reference)))
        .map_or(trace.total_nfe(), |e| e.nfe_total))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scripted(scores: &[f64]) -> RunTrace {
        let inst = EditInstance::new("s", Image::filled(1, 1, 1, 0.0).unwrap(), "x").unwrap();
        let mut trace = RunTrace::new(&inst, Strategy::Bon, 0, &SearchConfig::default());
        for (i, s) in scores.iter().enumerate() {
            trace.ledger.charge(i as u32, Phase::Full, 28);
            trace.events.push(TraceEvent {
                candidate_id: i as u32,
                seed: i as u64,
                kind: EventKind::Completed,
                timestep: 0,
                score: Some(ScoreBreakdown::general(*s)),
                retain_threshold: None,
                nfe_total: trace.ledger.total(),
            });
        }
        trace
    }

    #[test]
    fn nfe_min_first_candidate() {
        assert_eq!(nfe_min_of(&scripted(&[9.0, 3.0]), 8.0).unwrap(), 28);
    }

    #[test]
    fn nfe_min_third_candidate() {
        assert_eq!(nfe_min_of(&scripted(&[5.0, 6.0, 8.0, 9.0]), 8.0).unwrap(), 84);
    }

    #[test]
    fn nfe_min_fallback_and_empty() {
        assert_eq!(nfe_min_of(&scripted(&[1.0, 2.0, 3.0]), 8.0).unwrap(), 84);
        assert!(matches!(nfe_min_of(&scripted(&[]), 8.0), Err(Error::EmptyTrace)));
    }

    #[test]
    fn strategy_names_roundtrip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.name()));
        }
        assert!("beam".parse::<Strategy>().is_err());
    }
}
