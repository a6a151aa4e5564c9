use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tracing::{debug, warn};

use super::{Agent, AgentDescriptor, AgentError, AgentReply, Observation, PrivilegedView};

pub const API_KEY_ENV: &str = "WIKIRACE_API_KEY";
pub const API_BASE_ENV: &str = "WIKIRACE_API_BASE";

/// Per-million-token prices. Costs are only reported when a table is given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    pub input_per_million: f64,
    pub output_per_million: f64,
}

impl PriceTable {
    pub fn cost(&self, tokens_in: u64, tokens_out: u64) -> f64 {
        (tokens_in as f64 * self.input_per_million + tokens_out as f64 * self.output_per_million) / 1e6
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmAgentConfig {
    /// Base URL up to and including the version segment, e.g.
    /// `https://api.openai.com/v1`.
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub timeout: Duration,
    pub retries: u32,
    pub backoff: Duration,
    pub requests_per_minute: f64,
    pub api_key: Option<String>,
    pub prices: Option<PriceTable>,
}

impl Default for LlmAgentConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: String::new(),
            temperature: 0.0,
            max_tokens: None,
            timeout: Duration::from_secs(120),
            retries: 3,
            backoff: Duration::from_millis(500),
            requests_per_minute: 60.0,
            api_key: None,
            prices: None,
        }
    }
}

/// Token bucket shared by every caller of one agent.
#[derive(Debug)]
pub struct RateLimiter {
    per_second: f64,
    burst: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn per_minute(rpm: f64) -> Self {
        let burst = (rpm / 6.0).max(1.0);
        Self {
            per_second: rpm / 60.0,
            burst,
            state: Mutex::new((burst, Instant::now())),
        }
    }

    /// Blocks until a request slot is available.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut st = self.state.lock().expect("rate limiter poisoned");
                let now = Instant::now();
                let refill = now.duration_since(st.1).as_secs_f64() * self.per_second;
                st.0 = (st.0 + refill).min(self.burst);
                st.1 = now;
                if st.0 >= 1.0 {
                    st.0 -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - st.0) / self.per_second)
            };
            thread::sleep(wait);
        }
    }
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Debug, Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
    #[serde(default)]
    cost: Option<f64>,
}

/// Minimal OpenAI-compatible chat-completions client.
#[derive(Debug)]
pub struct ChatClient {
    http: Client,
    config: LlmAgentConfig,
    limiter: RateLimiter,
}

enum Attempt {
    Done(ChatResponse),
    Retry(String),
    Fatal(String),
}

impl ChatClient {
    pub fn new(config: LlmAgentConfig) -> Result<Self, AgentError> {
        if config.model.is_empty() {
            return Err(AgentError::Config("model name is empty".into()));
        }
        if config.requests_per_minute.is_nan() || config.requests_per_minute <= 0.0 {
            return Err(AgentError::Config("requests per minute must be positive".into()));
        }
        let http = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| AgentError::Config(format!("http client: {e}")))?;
        Ok(Self {
            http,
            limiter: RateLimiter::per_minute(config.requests_per_minute),
            config,
        })
    }

    pub fn config(&self) -> &LlmAgentConfig {
        &self.config
    }

    pub fn request_body(&self, system: &str, user: &str) -> Value {
        let mut messages = Vec::new();
        if !system.is_empty() {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": user}));
        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
        });
        if let Some(n) = self.config.max_tokens {
            body["max_tokens"] = json!(n);
        }
        body
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, body: &Value) -> Attempt {
        self.limiter.acquire();
        let mut req = self.http.post(self.endpoint()).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status();
        if status.is_success() {
            return match resp.json::<ChatResponse>() {
                Ok(parsed) => Attempt::Done(parsed),
                Err(e) => Attempt::Retry(format!("undecodable response: {e}")),
            };
        }
        let detail = resp.text().unwrap_or_default();
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            Attempt::Retry(format!("HTTP {status}: {detail}"))
        } else {
            Attempt::Fatal(format!("HTTP {status}: {detail}"))
        }
    }

    /// Sends one chat completion, retrying transient failures with
    /// exponential backoff.
    pub fn complete(&self, system: &str, user: &str) -> Result<AgentReply, AgentError> {
        let body = self.request_body(system, user);
        let started = Instant::now();
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                let delay = self.config.backoff.saturating_mul(1 << (attempt - 1).min(16));
                debug!(attempt, ?delay, "retrying chat completion");
                thread::sleep(delay);
            }
            match self.attempt(&body) {
                Attempt::Done(resp) => {
                    let raw_text = resp
                        .choices
                        .into_iter()
                        .next()
                        .and_then(|c| c.message.content)
                        .unwrap_or_default();
                    let (tokens_in, tokens_out, reported) = resp
                        .usage
                        .map_or((0, 0, None), |u| (u.prompt_tokens, u.completion_tokens, u.cost));
                    let provider_cost = self
                        .config
                        .prices
                        .map(|p| p.cost(tokens_in, tokens_out))
                        .or(reported);
                    return Ok(AgentReply {
                        raw_text,
                        tokens_in,
                        tokens_out,
                        latency: started.elapsed(),
                        provider_cost,
                    });
                }
                Attempt::Fatal(msg) => return Err(AgentError::Config(msg)),
                Attempt::Retry(msg) => {
                    warn!(attempt, error = %msg, "chat completion failed");
                    last = msg;
                }
            }
        }
        Err(AgentError::Transport(last))
    }
}

/// Agent backed by a remote chat model.
#[derive(Debug)]
pub struct LlmAgent {
    client: ChatClient,
}

impl LlmAgent {
    pub fn new(config: LlmAgentConfig) -> Result<Self, AgentError> {
        Ok(Self {
            client: ChatClient::new(config)?,
        })
    }

    pub fn client(&self) -> &ChatClient {
        &self.client
    }
}

impl Agent for LlmAgent {
    fn descriptor(&self) -> AgentDescriptor {
        let c = self.client.config();
        let mut d = AgentDescriptor::new(format!("llm:{}", c.model), false)
            .with_param("model", &c.model)
            .with_param("base_url", &c.base_url)
            .with_param("temperature", c.temperature);
        if let Some(n) = c.max_tokens {
            d = d.with_param("max_tokens", n);
        }
        d
    }

    fn decide(&self, obs: &Observation, _: Option<&PrivilegedView<'_>>) -> Result<AgentReply, AgentError> {
        self.client.complete(&obs.system_text, &obs.user_text)
    }
}
