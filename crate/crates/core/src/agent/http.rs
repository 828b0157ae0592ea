use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{AgentBackend, AgentError, AgentRequest, RenderedPrompt, RequestContext};

pub const ENV_BASE: &str = "REQC_HTTP_BASE";
pub const ENV_MODEL: &str = "REQC_MODEL";
pub const ENV_KEY: &str = "REQC_API_KEY";

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    /// Extra attempts after a transport failure or a 5xx reply.
    pub retries: u32,
    pub timeout_secs: u64,
}

impl std::fmt::Debug for HttpConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpConfig")
            .field("base_url", &self.base_url)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "***"))
            .field("retries", &self.retries)
            .field("timeout_secs", &self.timeout_secs)
            .finish()
    }
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            retries: 1,
            timeout_secs: 600,
        }
    }

    pub fn from_env() -> Result<Self, AgentError> {
        let var = |name: &str| std::env::var(name).ok().filter(|v| !v.is_empty());
        let base = var(ENV_BASE).ok_or_else(|| AgentError::Config(format!("{ENV_BASE} is not set")))?;
        let model = var(ENV_MODEL).ok_or_else(|| AgentError::Config(format!("{ENV_MODEL} is not set")))?;
        let mut config = Self::new(base, model);
        config.api_key = var(ENV_KEY);
        Ok(config)
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// Chat-completions client. Images for captioning travel as data URLs.
pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, AgentError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| AgentError::Config(format!("http client: {e}")))?;
        Ok(Self { config, client })
    }

    fn body(&self, request: &AgentRequest, prompt: &RenderedPrompt) -> Value {
        let mut messages = Vec::new();
        if !prompt.system.is_empty() {
            messages.push(json!({"role": "system", "content": prompt.system}));
        }
        let image = match &request.context {
            RequestContext::CaptionImage {
                image_file: Some(file), ..
            } => std::fs::read(file).ok().map(|bytes| {
                let mime = match file.rsplit('.').next().map(str::to_ascii_lowercase).as_deref() {
                    Some("jpg" | "jpeg") => "image/jpeg",
                    Some("gif") => "image/gif",
                    Some("webp") => "image/webp",
                    _ => "image/png",
                };
                let data = base64::engine::general_purpose::STANDARD.encode(bytes);
                format!("data:{mime};base64,{data}")
            }),
            _ => None,
        };
        match image {
            Some(url) => messages.push(json!({"role": "user", "content": [
                {"type": "text", "text": prompt.user},
                {"type": "image_url", "image_url": {"url": url}},
            ]})),
            None => messages.push(json!({"role": "user", "content": prompt.user})),
        }
        json!({"model": self.config.model, "temperature": 0, "messages": messages})
    }

    fn post_once(&self, body: &Value) -> Result<(u16, String), AgentError> {
        let mut builder = self.client.post(self.config.endpoint()).json(body);
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| AgentError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response.text().map_err(|e| AgentError::Transport(e.to_string()))?;
        Ok((status, text))
    }
}

/// Pulls the assistant text out of a chat-completions reply body.
pub(crate) fn extract_content(body: &str) -> Result<String, AgentError> {
    let malformed = |message: &str| AgentError::malformed(message, Some(body.to_owned()));
    let value: Value = serde_json::from_str(body).map_err(|_| malformed("reply body is not JSON"))?;
    let choice = value
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| malformed("reply has no choices"))?;
    let message = choice.get("message").ok_or_else(|| malformed("reply choice has no message"))?;
    if let Some(refusal) = message.get("refusal").and_then(Value::as_str) {
        return Err(AgentError::Refusal(refusal.to_owned()));
    }
    if choice.get("finish_reason").and_then(Value::as_str) == Some("content_filter") {
        return Err(AgentError::Refusal("content filtered".into()));
    }
    message
        .get("content")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| malformed("reply message has no text content"))
}

impl AgentBackend for HttpBackend {
    fn name(&self) -> String {
        format!("http:{}@{}", self.config.model, self.config.base_url)
    }

    fn complete(&self, request: &AgentRequest, prompt: &RenderedPrompt) -> Result<String, AgentError> {
        let body = self.body(request, prompt);
        let mut last_error = None;
        for _ in 0..=self.config.retries {
            match self.post_once(&body) {
                Ok((status, text)) if (200..300).contains(&status) => return extract_content(&text),
                Ok((status, text)) if status >= 500 => {
                    last_error = Some(AgentError::Transport(format!("HTTP {status}: {text}")));
                }
                Ok((status, text)) => return Err(AgentError::Transport(format!("HTTP {status}: {text}"))),
                Err(e) => last_error = Some(e),
            }
        }
        Err(last_error.expect("at least one attempt is made"))
    }
}

#[cfg(test)]
mod tests {
    use std::io::{Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    use super::*;
    use crate::agent::{Gateway, PromptSet, RequirementBrief, Transcript};
    use crate::dsl::Identifier;

    /// Serves `replies` in order, one connection each, returning the request count.
    fn serve(replies: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        std::thread::spawn(move || {
            for (status, body) in replies {
                let Ok((mut stream, _)) = listener.accept() else { return };
                let mut buf = Vec::new();
                let mut chunk = [0u8; 4096];
                loop {
                    let n = stream.read(&mut chunk).unwrap_or(0);
                    buf.extend_from_slice(&chunk[..n]);
                    let text = String::from_utf8_lossy(&buf);
                    if let Some(head_end) = text.find("\r\n\r\n") {
                        let len = text[..head_end]
                            .lines()
                            .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
                            .unwrap_or(0);
                        if buf.len() >= head_end + 4 + len {
                            break;
                        }
                    }
                    if n == 0 {
                        break;
                    }
                }
                counter.fetch_add(1, Ordering::SeqCst);
                let reply = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(reply.as_bytes());
            }
        });
        (format!("http://{addr}/v1"), hits)
    }

    fn chat(content: &str) -> String {
        json!({"choices": [{"message": {"role": "assistant", "content": content}, "finish_reason": "stop"}]}).to_string()
    }

    fn caption_request() -> AgentRequest {
        AgentRequest::new(
            Identifier::new("REQ-1").unwrap(),
            RequestContext::CaptionImage {
                image_path: "shots/login.png".into(),
                image_file: None,
            },
        )
    }

    fn gateway(base: String, retries: u32) -> Gateway {
        let mut config = HttpConfig::new(base, "test-model");
        config.retries = retries;
        config.timeout_secs = 10;
        Gateway::new(Box::new(HttpBackend::new(config).unwrap()), PromptSet::default(), Transcript::in_memory())
    }

    #[test]
    fn chat_reply_parsed() {
        let (base, _) = serve(vec![(200, chat("{\"kind\": \"caption\", \"text\": \"Login form\"}"))]);
        let mut gw = gateway(base, 0);
        let response = gw.invoke(&caption_request()).unwrap();
        assert_eq!(response, crate::agent::AgentResponse::Caption { text: "Login form".into() });
    }

    #[test]
    fn garbage_is_malformed_and_logged() {
        let (base, _) = serve(vec![(200, chat("Sure! Here you go: <interfaces>"))]);
        let mut gw = gateway(base, 0);
        let request = AgentRequest::new(
            Identifier::new("REQ-1").unwrap(),
            RequestContext::GenerateTestScripts {
                requirement: RequirementBrief {
                    id: Identifier::new("REQ-1").unwrap(),
                    name: "r".into(),
                    description: String::new(),
                    image_captions: vec![],
                    scenarios: vec![],
                    dependencies: vec![],
                    parent: None,
                },
                interfaces: vec![],
                skeletons: vec![],
            },
        );
        let err = gw.invoke(&request).unwrap_err();
        assert_eq!(err.code(), "MALFORMED_RESPONSE");
        assert_eq!(
            gw.transcript().records()[0].raw_response.as_deref(),
            Some("Sure! Here you go: <interfaces>")
        );
    }

    #[test]
    fn retries_once_on_server_error() {
        let (base, hits) = serve(vec![(503, "busy".into()), (200, chat("A form."))]);
        let mut gw = gateway(base, 1);
        assert!(gw.invoke(&caption_request()).is_ok());
        assert_eq!(hits.load(Ordering::SeqCst), 2);
        assert_eq!(gw.transcript().len(), 1);
    }

    #[test]
    fn refusal_and_transport() {
        let refused = json!({"choices": [{"message": {"content": null, "refusal": "cannot help"}}]}).to_string();
        let (base, _) = serve(vec![(200, refused)]);
        assert_eq!(gateway(base, 0).invoke(&caption_request()).unwrap_err(), AgentError::Refusal("cannot help".into()));

        let closed = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
        let err = gateway(format!("http://{closed}"), 0).invoke(&caption_request()).unwrap_err();
        assert_eq!(err.code(), "TRANSPORT");
    }
}
