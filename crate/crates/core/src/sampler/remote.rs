//! Client for a model server speaking the sampling protocol:
//!
//! ```text
//! POST /v1/sample  {instance_id, candidate_seed, prompt, from_t, to_t, latent_ref?} -> {latent_ref, steps_charged}
//! POST /v1/preview {latent_ref}                                                   -> {image_b64, steps_charged}
//! POST /v1/decode  {latent_ref}                                                   -> {image_b64}
//! ```
//!
//! `steps_charged` from the server is what gets charged to the ledger.

use serde::{Deserialize, Serialize};

use super::{check_denoised, check_order, Sampler};
use crate::codec::decode_image;
use crate::error::{Error, Result};
use crate::http::{HttpPolicy, JsonClient};
use crate::model::{CandidateState, EditInstance, Image, LatentHandle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRequest {
    pub instance_id: String,
    pub candidate_seed: u64,
    pub prompt: String,
    pub from_t: u32,
    pub to_t: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub latent_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResponse {
    pub latent_ref: String,
    pub steps_charged: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentRequest {
    pub latent_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewResponse {
    pub image_b64: String,
    pub steps_charged: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResponse {
    pub image_b64: String,
}

#[derive(Debug, Clone)]
pub struct RemoteSampler {
    client: JsonClient,
    steps: u32,
}

impl RemoteSampler {
    pub fn new(endpoint: &str, steps: u32, policy: HttpPolicy) -> Result<Self> {
        Ok(Self {
            client: JsonClient::new(endpoint, policy)?,
            steps,
        })
    }

    fn latent_ref(state: &CandidateState) -> Option<String> {
        (!state.latent.0.is_empty()).then(|| state.latent.0.clone())
    }

    fn fresh(candidate_id: u32, seed: u64, prompt: &str, steps: u32) -> CandidateState {
        CandidateState {
            candidate_id,
            seed,
            latent: LatentHandle(String::new()),
            timestep: steps,
            trajectory_steps: steps,
            prompt_used: prompt.to_string(),
            nfe_spent: 0,
            score_history: Vec::new(),
        }
    }
}

impl Sampler for RemoteSampler {
    fn total_steps(&self) -> u32 {
        self.steps
    }

    fn spawn(&self, _instance: &EditInstance, candidate_id: u32, seed: u64, prompt: &str) -> Result<CandidateState> {
        // The server creates the latent lazily on the first sample call.
        Ok(Self::fresh(candidate_id, seed, prompt, self.steps))
    }

    fn spawn_short(
        &self,
        _instance: &EditInstance,
        candidate_id: u32,
        seed: u64,
        prompt: &str,
        steps: u32,
    ) -> Result<CandidateState> {
        if steps == 0 || steps > self.steps {
            return Err(Error::Config(format!(
                "short run length {steps} outside 1..={}",
                self.steps
            )));
        }
        Ok(Self::fresh(candidate_id, seed, prompt, steps))
    }

    fn sample_partial(
        &self,
        instance: &EditInstance,
        mut state: CandidateState,
        to_t: u32,
    ) -> Result<(CandidateState, u64)> {
        check_order(&state, to_t)?;
        if state.timestep == to_t {
            return Ok((state, 0));
        }
        let req = SampleRequest {
            instance_id: instance.id.clone(),
            candidate_seed: state.seed,
            prompt: state.prompt_used.clone(),
            from_t: state.timestep,
            to_t,
            latent_ref: Self::latent_ref(&state),
        };
        let resp: SampleResponse = self.client.post("/v1/sample", &req)?;
        state.latent = LatentHandle(resp.latent_ref);
        state.timestep = to_t;
        state.nfe_spent += resp.steps_charged;
        Ok((state, resp.steps_charged))
    }

    fn preview(&self, _instance: &EditInstance, state: &CandidateState) -> Result<(Image, u64)> {
        let latent_ref = Self::latent_ref(state).ok_or(Error::MissingPrediction(state.candidate_id))?;
        let resp: PreviewResponse = self.client.post("/v1/preview", &LatentRequest { latent_ref })?;
        Ok((decode_image(&resp.image_b64)?, resp.steps_charged))
    }

    fn decode_raw(&self, _instance: &EditInstance, state: &CandidateState) -> Result<Image> {
        let latent_ref = Self::latent_ref(state).ok_or(Error::MissingPrediction(state.candidate_id))?;
        let resp: DecodeResponse = self.client.post("/v1/decode", &LatentRequest { latent_ref })?;
        decode_image(&resp.image_b64)
    }

    fn decode(&self, instance: &EditInstance, state: &CandidateState) -> Result<Image> {
        check_denoised(state)?;
        self.decode_raw(instance, state)
    }
}
