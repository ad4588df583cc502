//! HTTP chat-completion backend.

use std::time::Duration;

use serde_json::{json, Value};

use super::{CompletionRequest, LlmBackend, LlmError};

pub const ENV_BASE_URL: &str = "SOUS_LLM_BASE_URL";
pub const ENV_API_KEY: &str = "SOUS_LLM_API_KEY";
pub const ENV_MODEL: &str = "SOUS_LLM_MODEL";

#[derive(Clone)]
pub struct LiveConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
}

impl std::fmt::Debug for LiveConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiveConfig")
            .field("base_url", &self.base_url)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("model", &self.model)
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl LiveConfig {
    pub fn from_env() -> Result<Self, LlmError> {
        let base_url = std::env::var(ENV_BASE_URL).map_err(|_| LlmError::Config(format!("{ENV_BASE_URL} is not set")))?;
        Ok(LiveConfig {
            base_url,
            api_key: std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty()),
            model: std::env::var(ENV_MODEL).unwrap_or_else(|_| "gpt-4".to_string()),
            timeout: Duration::from_secs(60),
        })
    }
}

/// Blocking client; call from a plain thread, not from inside an async task.
pub struct LiveBackend {
    config: LiveConfig,
    client: reqwest::blocking::Client,
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(LiveBackend { config, client })
    }

    pub fn from_env() -> Result<Self, LlmError> {
        Self::new(LiveConfig::from_env()?)
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn body(&self, request: &CompletionRequest) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": request.messages(),
            "max_tokens": request.decoding.max_tokens,
        });
        if request.decoding.deterministic {
            body["temperature"] = json!(0);
            body["top_p"] = json!(1);
        }
        body
    }
}

impl LlmBackend for LiveBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let body = self.body(request);
        tracing::debug!(node = %request.node_name, url = %self.endpoint(), body = %body, "llm request");
        let mut call = self.client.post(self.endpoint()).json(&body);
        if let Some(key) = &self.config.api_key {
            call = call.bearer_auth(key);
        }
        let response = call.send().map_err(|e| LlmError::TransportError(e.without_url().to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| LlmError::TransportError(e.to_string()))?;
        tracing::debug!(node = %request.node_name, %status, body = %text, "llm response");
        if !status.is_success() {
            return Err(LlmError::TransportError(format!("HTTP {status}")));
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| LlmError::TransportError(format!("bad response body: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::TransportError("response has no choices[0].message.content".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::Decoding;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    fn req() -> CompletionRequest {
        CompletionRequest {
            node_name: "Decision".into(),
            system: "sys".into(),
            instructions: "ins".into(),
            examples: vec![],
            rendered_observation: "obs".into(),
            decoding: Decoding::default(),
        }
    }

    fn config(base_url: String) -> LiveConfig {
        LiveConfig {
            base_url,
            api_key: Some("sk-secret".into()),
            model: "m".into(),
            timeout: Duration::from_secs(5),
        }
    }

    #[test]
    fn posts_chat_completion_and_reads_content() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0u8; len];
            reader.read_exact(&mut body).unwrap();
            let reply = r#"{"choices":[{"message":{"role":"assistant","content":"{\"decision\":\"No_op\"}"}}]}"#;
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                reply.len()
            )
            .unwrap();
            (head, String::from_utf8(body).unwrap())
        });
        let backend = LiveBackend::new(config(format!("http://{addr}/v1/"))).unwrap();
        let out = backend.complete(&req()).unwrap();
        assert_eq!(out, "{\"decision\":\"No_op\"}");
        let (head, body) = server.join().unwrap();
        assert!(head.starts_with("POST /v1/chat/completions"));
        assert!(head.to_lowercase().contains("authorization: bearer sk-secret"));
        let body: Value = serde_json::from_str(&body).unwrap();
        assert_eq!(body["temperature"], 0);
        assert_eq!(body["messages"][1]["content"], "obs");
    }

    #[test]
    fn network_failure_is_transport_error() {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let backend = LiveBackend::new(config(format!("http://127.0.0.1:{port}"))).unwrap();
        assert!(matches!(backend.complete(&req()), Err(LlmError::TransportError(_))));
    }

    #[test]
    fn debug_output_redacts_key() {
        let s = format!("{:?}", config("http://x".into()));
        assert!(!s.contains("sk-secret"));
    }
}
