use async_trait::async_trait;
use serde_json::json;

use super::{Provider, ProviderError, ProviderResponse};
use crate::suggestion::prompt::{PromptBundle, PromptKind, PromptRole};
use crate::text::fenced_blocks;

/// Answers instantly without a model. Suggestion prompts get one
/// well-formed suggestion, chats get the last message echoed back, and
/// previews return the code unchanged.
#[derive(Debug, Clone, Default)]
pub struct EchoProvider;

#[async_trait]
impl Provider for EchoProvider {
    fn name(&self) -> &str {
        "echo"
    }

    async fn complete(&self, prompt: &PromptBundle) -> Result<ProviderResponse, ProviderError> {
        let last = prompt.messages.last().map_or("", |m| m.content.as_str());
        let text = match prompt.kind {
            PromptKind::Standard | PromptKind::Debug => {
                let (ty, summary) = if prompt.kind == PromptKind::Debug {
                    ("debug_runtime", "Look at the last line of the error output.")
                } else {
                    ("explain_code", "Here is a walk-through of the current code.")
                };
                let body = json!([{
                    "type": ty,
                    "summary": summary,
                    "explanation": [format!("prompt had {} segments", prompt.messages.len())],
                }]);
                format!("```json\n{body}\n```")
            }
            PromptKind::Chat => {
                let question = prompt
                    .segments(PromptRole::History)
                    .last()
                    .map_or("", |m| m.content.as_str());
                format!("echo: {question}")
            }
            PromptKind::Preview => {
                let code = fenced_blocks(last).into_iter().next().map(|b| b.body).unwrap_or_default();
                format!("```python\n{code}\n```")
            }
        };
        Ok(ProviderResponse::new(self.name(), text, 0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condition::ConditionConfig;
    use crate::suggestion::parse::parse_suggestions;
    use crate::suggestion::prompt::{build_chat_prompt, build_standard_prompt};
    use crate::session::types::{ChatMessage, ChatRole};

    fn block_on<F: std::future::Future>(f: F) -> F::Output {
        tokio::runtime::Builder::new_current_thread().build().unwrap().block_on(f)
    }

    #[test]
    fn standard_reply_parses() {
        let p = build_standard_prompt(&[], "x = 1", &ConditionConfig::suggest());
        let r = block_on(EchoProvider.complete(&p)).unwrap();
        assert_eq!(parse_suggestions(&r.raw_text, 3).unwrap().suggestions.len(), 1);
    }

    #[test]
    fn chat_echoes_question() {
        let h = vec![ChatMessage::new(ChatRole::User, "hi there", 0)];
        let p = build_chat_prompt(&h, "", &ConditionConfig::baseline());
        let r = block_on(EchoProvider.complete(&p)).unwrap();
        assert_eq!(r.raw_text, "echo: hi there");
    }
}
