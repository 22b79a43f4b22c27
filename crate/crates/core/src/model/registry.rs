use super::mock::{FrozenFirstToken, MemorizingModel, NoAnswerModel, OracleModel, ScriptedPromptModel};
use super::{qa_prompt, ExecPromptModel, ExecQaModel, PromptModel, QAModel, TrainableQAModel};
use crate::data::QARecord;
use crate::error::{Error, Result};

/// Names accepted by [`qa_backend`]; `exec:` takes a command line and
/// `hf.` a checkpoint id.
pub const QA_BACKENDS: &[&str] = &[
    "mock.memorize",
    "mock.first_token",
    "mock.no_answer",
    "mock.oracle",
    "exec:<command>",
    "hf.<checkpoint-id>",
];

pub const PROMPT_BACKENDS: &[&str] = &["mock.silent", "mock.oracle", "exec:<command>"];

/// Data some backends are built from. The oracle mocks read gold answers
/// from `gold`.
#[derive(Debug, Clone, Copy, Default)]
pub struct BackendContext<'a> {
    pub gold: &'a [QARecord],
}

fn exec_command(spec: &str) -> Result<Vec<String>> {
    let parts: Vec<String> = spec.split_whitespace().map(String::from).collect();
    if parts.is_empty() {
        return Err(Error::InvalidArgument("`exec:` backend needs a command".into()));
    }
    Ok(parts)
}

fn hf_unavailable(id: &str) -> Error {
    Error::Backend {
        record_id: None,
        message: format!(
            "checkpoint `{id}` needs a transformer runtime, which this build does not embed; \
             serve it behind an `exec:` backend"
        ),
    }
}

/// A backend that supports training steps.
pub fn trainable_backend(name: &str, ctx: BackendContext<'_>) -> Result<Box<dyn TrainableQAModel>> {
    match name {
        "mock.memorize" => Ok(Box::new(MemorizingModel::new())),
        "mock.first_token" => Ok(Box::new(FrozenFirstToken::new())),
        "mock.no_answer" => Ok(Box::new(NoAnswerModel::new())),
        "mock.oracle" => Ok(Box::new(OracleModel::from_records(ctx.gold))),
        _ if name.starts_with("exec:") => Err(Error::InvalidArgument(format!(
            "backend `{name}` is inference-only and cannot be trained"
        ))),
        _ => match name.strip_prefix("hf.") {
            Some(id) if !id.is_empty() => Err(hf_unavailable(id)),
            _ => Err(Error::UnknownBackend(name.to_string())),
        },
    }
}

/// An inference-only view of any QA backend.
pub fn qa_backend(name: &str, ctx: BackendContext<'_>) -> Result<Box<dyn QAModel>> {
    if let Some(cmd) = name.strip_prefix("exec:") {
        return Ok(Box::new(ExecQaModel::spawn(exec_command(cmd)?)?));
    }
    let model: Box<dyn QAModel> = trainable_backend(name, ctx)?;
    Ok(model)
}

pub fn prompt_backend(name: &str, ctx: BackendContext<'_>) -> Result<Box<dyn PromptModel>> {
    match name {
        "mock.silent" => Ok(Box::new(ScriptedPromptModel::new("silent"))),
        "mock.oracle" => {
            let mut m = ScriptedPromptModel::new("oracle");
            for r in ctx.gold {
                let reply = r.answers.first().map(|a| a.text.clone()).unwrap_or_default();
                m = m.with_reply(qa_prompt(&r.context, &r.question), reply);
            }
            Ok(Box::new(m))
        }
        _ => match name.strip_prefix("exec:") {
            Some(cmd) => Ok(Box::new(ExecPromptModel::spawn(exec_command(cmd)?)?)),
            None => Err(Error::UnknownBackend(name.to_string())),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_names_fail_fast() {
        let ctx = BackendContext::default();
        assert!(matches!(trainable_backend("mock.nope", ctx), Err(Error::UnknownBackend(_))));
        assert!(matches!(qa_backend("bert", ctx), Err(Error::UnknownBackend(_))));
        assert!(matches!(prompt_backend("t0pp", ctx), Err(Error::UnknownBackend(_))));
        assert!(matches!(trainable_backend("hf.", ctx), Err(Error::UnknownBackend(_))));
        let err = trainable_backend("hf.deepset/roberta-base-squad2", ctx).err().unwrap();
        assert!(err.is_backend_failure());
    }

    #[test]
    fn mock_names_resolve() {
        let ctx = BackendContext::default();
        for name in ["mock.memorize", "mock.first_token", "mock.no_answer", "mock.oracle"] {
            assert!(qa_backend(name, ctx).is_ok(), "{name}");
        }
        assert!(prompt_backend("mock.silent", ctx).is_ok());
    }
}
