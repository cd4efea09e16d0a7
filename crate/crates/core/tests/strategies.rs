use std::sync::Arc;

use adecot::model::{QualityDist, Rect, RegionHint, SimMeta};
use adecot::sampler::{SimParams, SimSampler, SimWorld};
use adecot::search::{ade_cot, best_of_n, early_prune_baseline, EventKind, PruneMode, RunTrace, SearchContext};
use adecot::verifiers::Verifiers;
use adecot::{EditInstance, Image, Phase, SearchConfig};

struct Bench {
    sampler: SimSampler,
    verifiers: Verifiers,
}

impl Bench {
    fn new(params: SimParams, instances: &[EditInstance]) -> Self {
        let world: Arc<SimWorld> = SimWorld::new(params);
        for inst in instances {
            world.register_instance(inst).unwrap();
        }
        Self {
            sampler: SimSampler::new(world.clone(), 28),
            verifiers: Verifiers::simulated(world),
        }
    }

    fn ctx(&self, seed: u64) -> SearchContext<'_> {
        SearchContext::new(&self.sampler, &self.verifiers, seed)
    }
}

fn instance(id: &str, quality: QualityDist) -> EditInstance {
    let source = Image::from_fn(16, 16, 3, |r, c, ch| {
        0.3 + 0.4 * (((r * 3 + c * 5 + ch) % 7) as f64 / 7.0)
    })
    .unwrap();
    EditInstance::new(id, source, "replace the red car with a blue bicycle")
        .unwrap()
        .with_sim_meta(SimMeta {
            quality,
            ceiling: None,
            modes: None,
            edit_region: Rect {
                top: 4,
                left: 4,
                height: 6,
                width: 6,
            },
            region_hit_prob: 1.0,
            region_hint: RegionHint::EditObject,
            source_alignment: 0.3,
            caption_describes_edit: true,
        })
}

fn fixed(q: f64) -> QualityDist {
    QualityDist::Normal { mean: q, std: 0.0 }
}

fn config(n: u32) -> SearchConfig {
    SearchConfig {
        n,
        ..SearchConfig::default()
    }
}

fn completed_ids(trace: &RunTrace) -> Vec<u32> {
    trace.completed().map(|e| e.candidate_id).collect()
}

#[test]
fn best_of_n_costs_n_times_t() {
    let inst = instance("bon", QualityDist::Uniform { low: 2.0, high: 9.0 });
    let bench = Bench::new(SimParams::default(), std::slice::from_ref(&inst));
    for n in [1, 4, 32] {
        let trace = best_of_n(&bench.ctx(3), &inst, &config(n)).unwrap();
        assert_eq!(trace.total_nfe(), u64::from(n) * 28);
        for id in 0..n {
            assert_eq!(trace.ledger.candidate_total(id), 28);
        }
    }
}

#[test]
fn early_prune_survivor_costs_depend_on_mode() {
    // Noise-free previews: candidates below the threshold are rejected, the
    // rest survive.
    let inst = instance("prune", QualityDist::Uniform { low: 2.0, high: 9.0 });
    let bench = Bench::new(SimParams::noiseless(), std::slice::from_ref(&inst));
    let cfg = config(16);
    for (mode, survivor_cost) in [(PruneMode::IntermediateState, 28), (PruneMode::AdditionalSteps, 8 + 28)] {
        let trace = early_prune_baseline(&bench.ctx(0), &inst, &cfg, mode).unwrap();
        let survivors = completed_ids(&trace);
        let rejected: Vec<u32> = trace.events_of(EventKind::Rejected).map(|e| e.candidate_id).collect();
        assert!(
            !survivors.is_empty() && !rejected.is_empty(),
            "{mode:?} needs both outcomes"
        );
        assert_eq!(survivors.len() + rejected.len(), 16);
        for &id in &survivors {
            assert_eq!(
                trace.ledger.candidate_total(id),
                survivor_cost,
                "{mode:?} survivor {id}"
            );
        }
        for &id in &rejected {
            assert_eq!(trace.ledger.candidate_total(id), 8, "{mode:?} rejected {id}");
        }
        assert_eq!(
            trace.total_nfe(),
            8 * rejected.len() as u64 + survivor_cost * survivors.len() as u64
        );
    }
}

#[test]
fn two_candidates_one_survivor() {
    // One candidate well above the threshold, one well below.
    let hi = instance("hi", fixed(9.0));
    let lo = instance("lo", fixed(1.0));
    let bench = Bench::new(SimParams::noiseless(), &[hi.clone(), lo.clone()]);
    let cfg = config(2);
    let inter = early_prune_baseline(&bench.ctx(0), &hi, &cfg, PruneMode::IntermediateState).unwrap();
    assert_eq!(inter.total_nfe(), 2 * 28);
    let inter = early_prune_baseline(&bench.ctx(0), &lo, &cfg, PruneMode::IntermediateState).unwrap();
    assert!(inter.degenerate);
    assert_eq!(inter.total_nfe(), 8 + 28);
    let add = early_prune_baseline(&bench.ctx(0), &lo, &cfg, PruneMode::AdditionalSteps).unwrap();
    assert!(add.degenerate);
    assert_eq!(add.total_nfe(), 8 + 8 + 28);
}

#[test]
fn disabled_threshold_matches_best_of_n_cost() {
    let inst = instance("open", QualityDist::Uniform { low: 0.0, high: 9.0 });
    let bench = Bench::new(SimParams::default(), std::slice::from_ref(&inst));
    let cfg = SearchConfig {
        s_reject: 0.0,
        ..config(8)
    };
    let trace = early_prune_baseline(&bench.ctx(1), &inst, &cfg, PruneMode::IntermediateState).unwrap();
    assert_eq!(trace.total_nfe(), 8 * 28);
    assert_eq!(trace.events_of(EventKind::Rejected).count(), 0);
}

#[test]
fn ade_candidates_that_finish_cost_exactly_t() {
    let instances: Vec<_> = (0..12)
        .map(|i| {
            instance(
                &format!("ade-{i}"),
                QualityDist::Normal {
                    mean: 3.0 + 0.5 * f64::from(i),
                    std: 1.5,
                },
            )
        })
        .collect();
    let bench = Bench::new(SimParams::default(), &instances);
    for inst in &instances {
        let trace = ade_cot(&bench.ctx(5), inst, &config(16)).unwrap();
        let ids = completed_ids(&trace);
        assert!(!ids.is_empty());
        for id in ids {
            assert_eq!(trace.ledger.candidate_total(id), 28, "{} candidate {id}", inst.id);
            let phases: u64 = [Phase::Early, Phase::Late, Phase::Final]
                .iter()
                .map(|&p| {
                    trace
                        .ledger
                        .entries()
                        .iter()
                        .filter(|e| e.candidate_id == id && e.phase == p)
                        .map(|e| e.steps)
                        .sum::<u64>()
                })
                .sum();
            if id != 0 {
                assert_eq!(phases, 28, "non-probe candidates run the three phases");
            }
        }
    }
}

#[test]
fn opportunistic_stop_counts_full_generations() {
    let inst = instance("aligned", fixed(9.0));
    let bench = Bench::new(SimParams::noiseless(), std::slice::from_ref(&inst));
    for n_high in [1, 4] {
        let cfg = SearchConfig {
            n_high,
            gamma: 0.0,
            ..config(16)
        };
        let trace = ade_cot(&bench.ctx(2), &inst, &cfg).unwrap();
        assert_eq!(trace.completed().count() as u32, n_high);
        assert_eq!(trace.n_cnt_final, n_high);
        assert!(trace.stopped_early);
    }
}

#[test]
fn retain_threshold_never_decreases() {
    let inst = instance("mixed", QualityDist::Normal { mean: 6.5, std: 2.0 });
    let bench = Bench::new(SimParams::default(), std::slice::from_ref(&inst));
    for seed in 0..6 {
        let trace = ade_cot(&bench.ctx(seed), &inst, &config(32)).unwrap();
        let thresholds: Vec<f64> = trace.events.iter().filter_map(|e| e.retain_threshold).collect();
        assert!(thresholds.windows(2).all(|w| w[1] >= w[0]), "{thresholds:?}");
    }
}

#[test]
fn runs_are_reproducible() {
    let inst = instance("det", QualityDist::Normal { mean: 6.0, std: 1.5 });
    let once = || {
        let bench = Bench::new(SimParams::default(), std::slice::from_ref(&inst));
        serde_json::to_string(&ade_cot(&bench.ctx(11), &inst, &config(32)).unwrap()).unwrap()
    };
    assert_eq!(once(), once());
}
