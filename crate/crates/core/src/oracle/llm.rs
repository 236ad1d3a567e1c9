//! OpenAI-compatible chat-completions backend.
//!
//! One request per distinct query; vote draws for the same query coalesce into
//! a single request via the `n` parameter. Parse failures are retried up to
//! `retry_limit` and then resolved deterministically to "no"/"Y" so the
//! sorting networks above always receive a total answer.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::client::{BinaryJob, BinaryResolution, CompletionRequest, OracleBackend};
use super::prompt::parse_binary_answer;
use super::{OracleError, QueryKind};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint_url: String,
    pub model_name: String,
    /// Must be > 0 when K-sample voting is enabled, or the samples collapse.
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout_secs: f64,
    /// Parse-failure and transport retries per query.
    pub retry_limit: u32,
    pub max_concurrency: usize,
    /// Environment variable holding the API key; `OPENAI_API_KEY` is the fallback.
    pub api_key_env: String,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint_url: "http://localhost:8000/v1/chat/completions".into(),
            model_name: "default".into(),
            temperature: 0.7,
            max_output_tokens: 4096,
            timeout_secs: 120.0,
            retry_limit: 2,
            max_concurrency: 8,
            api_key_env: "VA_API_KEY".into(),
        }
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
    n: u32,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: Option<String>,
}

pub struct LlmBackend {
    config: LlmConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl LlmBackend {
    pub fn new(config: LlmConfig) -> Result<Self, OracleError> {
        if config.temperature < 0.0 {
            return Err(OracleError::VotingNeedsTemperature(config.temperature));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs.max(0.001)))
            .build()
            .map_err(|e| OracleError::Backend {
                context: "http client".into(),
                message: e.to_string(),
            })?;
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .or_else(|| std::env::var("OPENAI_API_KEY").ok().filter(|k| !k.is_empty()));
        Ok(LlmBackend {
            config,
            client,
            api_key,
        })
    }

    /// One chat-completions call returning `n` completion texts.
    fn request(&self, prompt: &str, n: u32, context: &str) -> Result<Vec<String>, OracleError> {
        let body = ChatRequest {
            model: &self.config.model_name,
            messages: vec![ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: self.config.temperature,
            max_tokens: self.config.max_output_tokens,
            n,
        };
        let mut req = self.client.post(&self.config.endpoint_url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let response = req.send().map_err(|e| OracleError::Backend {
            context: context.to_string(),
            message: e.to_string(),
        })?;
        let status = response.status();
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Err(OracleError::Backend {
                context: context.to_string(),
                message: format!("HTTP {status}: {}", truncate(&text, 200)),
            });
        }
        let parsed: ChatResponse = response.json().map_err(|e| OracleError::Backend {
            context: context.to_string(),
            message: format!("malformed response body: {e}"),
        })?;
        Ok(parsed
            .choices
            .into_iter()
            .map(|c| c.message.content.unwrap_or_default())
            .collect())
    }

    /// Resolve all samples of one query: request `n` completions, parse each,
    /// retry the unresolved remainder, then fall back to "no"/"Y".
    fn resolve_group(
        &self,
        prompt: &str,
        kind: QueryKind,
        context: &str,
        slots: usize,
    ) -> Result<Vec<BinaryResolution>, OracleError> {
        let mut out: Vec<Option<BinaryResolution>> = vec![None; slots];
        let mut last_raw = String::new();
        let mut last_transport: Option<OracleError> = None;
        for _attempt in 0..=self.config.retry_limit {
            let unresolved: Vec<usize> = (0..slots).filter(|&i| out[i].is_none()).collect();
            if unresolved.is_empty() {
                break;
            }
            match self.request(prompt, unresolved.len() as u32, context) {
                Ok(raws) => {
                    last_transport = None;
                    let mut fill = unresolved.into_iter();
                    for raw in raws {
                        let Some(slot) = fill.next() else { break };
                        match parse_binary_answer(&raw, kind.vocabulary()) {
                            Ok(answer) => {
                                out[slot] = Some(BinaryResolution {
                                    answer,
                                    raw,
                                    parse_failed: false,
                                });
                            }
                            Err(_) => last_raw = raw,
                        }
                    }
                }
                Err(e) => last_transport = Some(e),
            }
        }
        if out.iter().any(|slot| slot.is_none()) {
            if let Some(e) = last_transport {
                return Err(e);
            }
            for slot in out.iter_mut().filter(|slot| slot.is_none()) {
                *slot = Some(BinaryResolution {
                    answer: false,
                    raw: last_raw.clone(),
                    parse_failed: true,
                });
            }
        }
        Ok(out.into_iter().map(|slot| slot.expect("slot resolved")).collect())
    }
}

impl OracleBackend for LlmBackend {
    fn resolve_binary(&self, jobs: &[BinaryJob]) -> Result<Vec<BinaryResolution>, OracleError> {
        // Group sample draws of the same query into one n-sample request.
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new(); // (first job, job indices)
        let mut index: std::collections::HashMap<(QueryKind, &str, &[String]), usize> =
            std::collections::HashMap::new();
        for (i, job) in jobs.iter().enumerate() {
            let group_key = (job.key.kind, job.key.criteria.as_str(), job.key.ids.as_slice());
            match index.get(&group_key) {
                Some(&g) => groups[g].1.push(i),
                None => {
                    index.insert(group_key, groups.len());
                    groups.push((i, vec![i]));
                }
            }
        }

        let worker = |g: usize| -> Result<Vec<BinaryResolution>, OracleError> {
            let (first, members) = &groups[g];
            let job = &jobs[*first];
            self.resolve_group(
                &job.prompt,
                job.key.kind,
                &job.key.describe(),
                members.len(),
            )
        };
        let group_results = run_bounded(groups.len(), self.config.max_concurrency, worker);

        let mut out: Vec<Option<BinaryResolution>> = vec![None; jobs.len()];
        for ((_, members), result) in groups.iter().zip(group_results) {
            let resolutions = result?;
            for (slot, res) in members.iter().zip(resolutions) {
                out[*slot] = Some(res);
            }
        }
        Ok(out.into_iter().map(|r| r.expect("job resolved")).collect())
    }

    fn complete(&self, requests: &[CompletionRequest]) -> Result<Vec<String>, OracleError> {
        let worker = |i: usize| -> Result<String, OracleError> {
            let mut last = None;
            for _attempt in 0..=self.config.retry_limit {
                match self.request(&requests[i].prompt, 1, "completion request") {
                    Ok(mut raws) if !raws.is_empty() => return Ok(raws.swap_remove(0)),
                    Ok(_) => {
                        last = Some(OracleError::Backend {
                            context: "completion request".into(),
                            message: "response carried no choices".into(),
                        })
                    }
                    Err(e) => last = Some(e),
                }
            }
            Err(last.unwrap_or_else(|| OracleError::Backend {
                context: "completion request".into(),
                message: "no attempts made".into(),
            }))
        };
        run_bounded(requests.len(), self.config.max_concurrency, worker)
            .into_iter()
            .collect()
    }

    fn ensure_vote_capable(&self) -> Result<(), OracleError> {
        if self.config.temperature > 0.0 {
            Ok(())
        } else {
            Err(OracleError::VotingNeedsTemperature(self.config.temperature))
        }
    }

    fn retry_limit(&self) -> u32 {
        self.config.retry_limit
    }
}

/// Run `f(0..jobs)` with at most `max_concurrency` threads in flight.
fn run_bounded<T, F>(jobs: usize, max_concurrency: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let mut results: Vec<Option<T>> = (0..jobs).map(|_| None).collect();
    let width = max_concurrency.max(1);
    let f = &f;
    for chunk_start in (0..jobs).step_by(width) {
        let end = (chunk_start + width).min(jobs);
        let chunk: Vec<(usize, T)> = std::thread::scope(|scope| {
            let handles: Vec<_> = (chunk_start..end)
                .map(|i| scope.spawn(move || (i, f(i))))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("llm worker panicked"))
                .collect()
        });
        for (i, value) in chunk {
            results[i] = Some(value);
        }
    }
    results.into_iter().map(|r| r.expect("worker ran")).collect()
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((idx, _)) => &s[..idx],
        None => s,
    }
}
