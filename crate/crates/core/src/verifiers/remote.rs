//! Providers reached over the JSON-over-HTTP protocol. Prompt texts live on
//! the serving side; requests carry images and instructions only.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::providers::{
    AnswerJudge, Captioner, Captions, Embedder, GeneralScore, GeneralScorer, Grounder, QuestionAuthor, RegionLocator,
    RegionObjects,
};
use crate::codec::encode_image;
use crate::error::{Error, Result};
use crate::http::{HttpPolicy, JsonClient};
use crate::model::Image;

#[derive(Debug, Serialize)]
pub struct GeneralScoreRequest<'a> {
    pub source_b64: String,
    pub edited_b64: String,
    pub instruction: &'a str,
}

#[derive(Debug, Serialize)]
pub struct SourceRequest<'a> {
    pub source_b64: String,
    pub instruction: &'a str,
}

#[derive(Debug, Serialize)]
pub struct GroundRequest<'a> {
    pub source_b64: String,
    pub objects: &'a [String],
}

#[derive(Debug, Deserialize)]
pub struct GroundResponse {
    /// Rows of 0/1 values.
    pub mask: Vec<Vec<u8>>,
}

#[derive(Debug, Deserialize)]
pub struct QuestionsResponse {
    pub questions: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct AnswersRequest<'a> {
    pub source_b64: String,
    pub edited_b64: String,
    pub instruction: &'a str,
    pub questions: &'a [String],
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
pub enum EmbedRequest<'a> {
    Image { image_b64: String },
    Text { text: &'a str },
}

#[derive(Debug, Deserialize)]
pub struct EmbedResponse {
    pub vector: Vec<f64>,
}

/// Remote multimodal judge and grounding service.
#[derive(Debug, Clone)]
pub struct RemoteJudge {
    client: JsonClient,
}

impl RemoteJudge {
    pub fn new(endpoint: &str, policy: HttpPolicy) -> Result<Self> {
        Ok(Self {
            client: JsonClient::new(endpoint, policy)?,
        })
    }
}

fn finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Protocol(format!("{what} is not a finite number")))
    }
}

impl GeneralScorer for RemoteJudge {
    fn general_score(&self, source: &Image, edited: &Image, instruction: &str) -> Result<GeneralScore> {
        let reply: GeneralScore = self.client.post(
            "/v1/general_score",
            &GeneralScoreRequest {
                source_b64: encode_image(source),
                edited_b64: encode_image(edited),
                instruction,
            },
        )?;
        finite(reply.sc, "sc")?;
        finite(reply.pq, "pq")?;
        Ok(reply)
    }
}

impl RegionLocator for RemoteJudge {
    fn locate(&self, source: &Image, instruction: &str) -> Result<RegionObjects> {
        self.client.post(
            "/v1/region",
            &SourceRequest {
                source_b64: encode_image(source),
                instruction,
            },
        )
    }
}

impl Grounder for RemoteJudge {
    fn ground(&self, source: &Image, objects: &[String]) -> Result<Vec<bool>> {
        let reply: GroundResponse = self.client.post(
            "/v1/ground",
            &GroundRequest {
                source_b64: encode_image(source),
                objects,
            },
        )?;
        if reply.mask.len() != source.height() || reply.mask.iter().any(|r| r.len() != source.width()) {
            return Err(Error::Protocol(format!(
                "mask is not {}x{}",
                source.height(),
                source.width()
            )));
        }
        reply
            .mask
            .into_iter()
            .flatten()
            .map(|v| match v {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::Protocol(format!("mask value {other} is not 0 or 1"))),
            })
            .collect()
    }
}

impl Captioner for RemoteJudge {
    fn captions(&self, source: &Image, instruction: &str) -> Result<Captions> {
        self.client.post(
            "/v1/caption",
            &SourceRequest {
                source_b64: encode_image(source),
                instruction,
            },
        )
    }
}

impl QuestionAuthor for RemoteJudge {
    fn questions(&self, source: &Image, instruction: &str) -> Result<Vec<String>> {
        let reply: QuestionsResponse = self.client.post(
            "/v1/questions",
            &SourceRequest {
                source_b64: encode_image(source),
                instruction,
            },
        )?;
        Ok(reply.questions)
    }
}

/// `{"Q1": "yes", ...}` to booleans. Anything other than "yes" reads as no.
pub fn parse_answers(reply: &Map<String, Value>, count: usize) -> Vec<bool> {
    (1..=count)
        .map(|i| {
            reply
                .get(&format!("Q{i}"))
                .and_then(Value::as_str)
                .is_some_and(|s| s.trim().eq_ignore_ascii_case("yes"))
        })
        .collect()
}

impl AnswerJudge for RemoteJudge {
    fn answers(&self, source: &Image, edited: &Image, instruction: &str, questions: &[String]) -> Result<Vec<bool>> {
        let reply: Map<String, Value> = self.client.post(
            "/v1/answers",
            &AnswersRequest {
                source_b64: encode_image(source),
                edited_b64: encode_image(edited),
                instruction,
                questions,
            },
        )?;
        Ok(parse_answers(&reply, questions.len()))
    }
}

/// Remote embedding service.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    client: JsonClient,
}

impl RemoteEmbedder {
    pub fn new(endpoint: &str, policy: HttpPolicy) -> Result<Self> {
        Ok(Self {
            client: JsonClient::new(endpoint, policy)?,
        })
    }

    fn embed(&self, req: &EmbedRequest<'_>) -> Result<Vec<f64>> {
        let reply: EmbedResponse = self.client.post("/v1/embed", req)?;
        if reply.vector.is_empty() {
            return Err(Error::Protocol("empty embedding".into()));
        }
        for x in &reply.vector {
            finite(*x, "embedding entry")?;
        }
        Ok(reply.vector)
    }
}

impl Embedder for RemoteEmbedder {
    fn embed_image(&self, image: &Image) -> Result<Vec<f64>> {
        self.embed(&EmbedRequest::Image {
            image_b64: encode_image(image),
        })
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        self.embed(&EmbedRequest::Text { text })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answers_default_to_no() {
        let v: Map<String, Value> =
            serde_json::from_str(r#"{"Q1":"yes","Q2":"No","Q3":"YES ","Q5":"unsure"}"#).unwrap();
        assert_eq!(parse_answers(&v, 5), vec![true, false, true, false, false]);
    }

    #[test]
    fn embed_request_shapes() {
        let img = serde_json::to_value(EmbedRequest::Image { image_b64: "x".into() }).unwrap();
        assert_eq!(img, serde_json::json!({"image_b64": "x"}));
        let txt = serde_json::to_value(EmbedRequest::Text { text: "a cup" }).unwrap();
        assert_eq!(txt, serde_json::json!({"text": "a cup"}));
    }
}
