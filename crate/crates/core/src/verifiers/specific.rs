//! Instance-specific yes/no verification.

use serde::{Deserialize, Serialize};

use super::providers::{retry_malformed, AnswerJudge, QuestionAuthor};
use crate::error::Error;
use crate::model::{EditInstance, Image};

pub const QUESTION_COUNT: usize = 5;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSet {
    pub questions: Vec<String>,
    pub answers: Option<Vec<bool>>,
}

impl QuestionSet {
    pub fn is_usable(&self) -> bool {
        self.questions.len() == QUESTION_COUNT
    }
}

/// Ask once per instance for five verification questions. A reply with the
/// wrong number of questions counts as malformed. Returns the set (empty on
/// failure) and the number of queries made.
pub fn instance_questions(instance: &EditInstance, provider: &dyn QuestionAuthor) -> (QuestionSet, u32) {
    let (reply, queries) = retry_malformed(|| {
        let qs = provider.questions(&instance.source, &instance.instruction)?;
        if qs.len() != QUESTION_COUNT {
            return Err(Error::Protocol(format!(
                "expected {QUESTION_COUNT} questions, got {}",
                qs.len()
            )));
        }
        Ok(qs)
    });
    let set = reply
        .map(|questions| QuestionSet {
            questions,
            answers: None,
        })
        .unwrap_or_default();
    (set, queries)
}

/// Number of "yes" answers, or `None` when the set is unusable or the judge
/// fails. Returns the count and the number of queries made.
pub fn answer_questions(
    instance: &EditInstance,
    image: &Image,
    qs: &QuestionSet,
    provider: &dyn AnswerJudge,
) -> (Option<u32>, u32) {
    if !qs.is_usable() {
        return (None, 0);
    }
    let (reply, queries) = retry_malformed(|| {
        let answers = provider.answers(&instance.source, image, &instance.instruction, &qs.questions)?;
        if answers.len() != QUESTION_COUNT {
            return Err(Error::Protocol(format!(
                "expected {QUESTION_COUNT} answers, got {}",
                answers.len()
            )));
        }
        Ok(answers)
    });
    (reply.ok().map(|a| a.iter().filter(|y| **y).count() as u32), queries)
}
