//! Invariant checks against a live backend.

use adecot::model::{EditInstance, SearchConfig};
use adecot::rng::candidate_seed;
use adecot::sampler::Sampler;
use adecot::search::{best_of_n, SearchContext};

use crate::runner::Backend;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, result: adecot::Result<Option<String>>) -> Check {
    match result {
        Ok(None) => Check {
            name,
            passed: true,
            detail: String::new(),
        },
        Ok(Some(why)) => Check {
            name,
            passed: false,
            detail: why,
        },
        Err(e) => Check {
            name,
            passed: false,
            detail: e.to_string(),
        },
    }
}

/// Step accounting, preview availability, decode determinism and the
/// Best-of-N cost law on one instance.
pub fn run_checks(backend: &Backend, instance: &EditInstance, config: &SearchConfig) -> Vec<Check> {
    let sampler: &dyn Sampler = backend.sampler.as_ref();
    let seed = candidate_seed(0, 0);
    let mut out = Vec::new();

    out.push(check(
        "phase charges sum to T",
        (|| {
            let s = sampler.spawn(instance, 0, seed, &instance.instruction)?;
            let (s, a) = sampler.sample_partial(instance, s, config.early_timestep())?;
            let (s, b) = sampler.sample_partial(instance, s, config.late_timestep())?;
            let (_, c) = sampler.sample_partial(instance, s, 0)?;
            let want = [
                u64::from(config.t_early),
                u64::from(config.t_late - config.t_early),
                u64::from(config.steps - config.t_late),
            ];
            Ok(([a, b, c] != want).then(|| format!("charged {:?}, expected {:?}", [a, b, c], want)))
        })(),
    ));

    out.push(check(
        "empty interval charges nothing",
        (|| {
            let s = sampler.spawn(instance, 0, seed, &instance.instruction)?;
            let (s, _) = sampler.sample_partial(instance, s, config.early_timestep())?;
            let (_, n) = sampler.sample_partial(instance, s, config.early_timestep())?;
            Ok((n != 0).then(|| format!("charged {n}")))
        })(),
    ));

    out.push(check(
        "preview after sampling",
        (|| {
            let s = sampler.spawn(instance, 0, seed, &instance.instruction)?;
            let (s, _) = sampler.sample_partial(instance, s, config.early_timestep())?;
            let (img, _) = sampler.preview(instance, &s)?;
            Ok((!img.same_shape(&instance.source)).then(|| "preview shape differs from the source".to_string()))
        })(),
    ));

    out.push(check(
        "decode is deterministic",
        (|| {
            let once = || -> adecot::Result<_> {
                let s = sampler.spawn(instance, 0, seed, &instance.instruction)?;
                let (s, _) = sampler.sample_partial(instance, s, 0)?;
                sampler.decode(instance, &s)
            };
            Ok((once()? != once()?).then(|| "two decodes of the same seed differ".to_string()))
        })(),
    ));

    out.push(check(
        "best-of-n costs N*T",
        (|| {
            let cfg = SearchConfig {
                n: 2,
                n_min: 1,
                ..*config
            };
            let ctx = SearchContext::new(sampler, &backend.verifiers, 0);
            let trace = best_of_n(&ctx, instance, &cfg).map_err(|f| f.error)?;
            let want = u64::from(cfg.n * cfg.steps);
            Ok((trace.total_nfe() != want).then(|| format!("total {} != {want}", trace.total_nfe())))
        })(),
    ));

    out
}
