//! LLM-as-judge scoring of lesioned responses on a 1 to 10 degradation
//! scale, against any chat-completions endpoint.
//!
//! Every score is parsed from a judge reply and stored next to it; nothing
//! is ever defaulted or imputed. Verdicts are cached by (original, lesioned,
//! model), so re-running a batch costs no requests.

mod cache;
mod config;
pub mod mock;
mod parse;
mod transport;

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};

use medmap_core::trace::LesionRecord;
use serde::Serialize;
use thiserror::Error;

pub use cache::{CacheEntry, JudgeCache};
pub use config::{JudgeConfig, DEFAULT_RUBRIC, STRICT_REASK};
pub use parse::{parse_score, ParseError};
pub use transport::{ChatMessage, ChatTransport, HttpTransport, TransportError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JudgeError {
    #[error("invalid judge config: {0}")]
    Config(String),
    #[error("judge cache {0}")]
    Cache(String),
    #[error("{0} response is empty")]
    EmptyResponse(&'static str),
    #[error("judge endpoint failed after {attempts} attempt(s): {last}")]
    Transport { attempts: u32, last: TransportError },
    #[error("unparseable judge reply after a stricter re-ask ({reason}): {reply:?}")]
    Unparseable {
        reason: ParseError,
        first_reply: String,
        reply: String,
    },
    #[error("judge score {value} is outside 1..=10: {reply:?}")]
    OutOfRange { value: i64, reply: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub score: u8,
    /// The reply the score was parsed from.
    pub reply: String,
    pub from_cache: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BatchFailure {
    pub prompt_id: String,
    pub layer: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchReport {
    /// Input records in input order; failed ones keep `judge_score: None`.
    pub records: Vec<LesionRecord>,
    pub failures: Vec<BatchFailure>,
    pub already_scored: usize,
    pub cache_hits: usize,
    pub network_calls: usize,
}

pub struct Judge<T: ChatTransport = HttpTransport> {
    config: JudgeConfig,
    transport: T,
    cache: JudgeCache,
    calls: AtomicUsize,
}

impl Judge<HttpTransport> {
    pub fn connect(config: JudgeConfig, cache: JudgeCache) -> Result<Self, JudgeError> {
        config.validate()?;
        let transport = HttpTransport::new(&config);
        Self::new(config, transport, cache)
    }
}

impl<T: ChatTransport> Judge<T> {
    pub fn new(config: JudgeConfig, transport: T, cache: JudgeCache) -> Result<Self, JudgeError> {
        config.validate()?;
        Ok(Self {
            config,
            transport,
            cache,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &JudgeConfig {
        &self.config
    }

    pub fn cache(&self) -> &JudgeCache {
        &self.cache
    }

    /// Requests sent so far, retries and re-asks included.
    pub fn network_calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    fn request(&self, messages: &[ChatMessage]) -> Result<String, JudgeError> {
        let mut retry = 0;
        loop {
            self.calls.fetch_add(1, Ordering::Relaxed);
            match self.transport.complete(&self.config.model, messages) {
                Ok(reply) => return Ok(reply),
                Err(e) if e.retryable && retry + 1 < self.config.retry_limit => {
                    std::thread::sleep(self.config.backoff(retry));
                    retry += 1;
                }
                Err(last) => {
                    return Err(JudgeError::Transport {
                        attempts: retry + 1,
                        last,
                    })
                }
            }
        }
    }

    pub fn score(&self, original: &str, lesioned: &str, prompt: Option<&str>) -> Result<Verdict, JudgeError> {
        if original.trim().is_empty() {
            return Err(JudgeError::EmptyResponse("original"));
        }
        if lesioned.trim().is_empty() {
            return Err(JudgeError::EmptyResponse("lesioned"));
        }
        if let Some(hit) = self.cache.get(original, lesioned, &self.config.model) {
            return Ok(Verdict {
                score: hit.score,
                reply: hit.reply,
                from_cache: true,
            });
        }

        let mut messages = vec![ChatMessage::user(self.config.render(original, lesioned, prompt))];
        let first = self.request(&messages)?;
        let (score, reply) = match parse_score(&first) {
            Ok(s) => (s, first),
            Err(ParseError::OutOfRange(value)) => return Err(JudgeError::OutOfRange { value, reply: first }),
            Err(_) => {
                messages.push(ChatMessage::assistant(first.clone()));
                messages.push(ChatMessage::user(STRICT_REASK));
                let second = self.request(&messages)?;
                match parse_score(&second) {
                    Ok(s) => (s, second),
                    Err(ParseError::OutOfRange(value)) => return Err(JudgeError::OutOfRange { value, reply: second }),
                    Err(reason) => {
                        return Err(JudgeError::Unparseable {
                            reason,
                            first_reply: first,
                            reply: second,
                        })
                    }
                }
            }
        };
        self.cache.insert(CacheEntry {
            model: self.config.model.clone(),
            original: original.to_owned(),
            lesioned: lesioned.to_owned(),
            score,
            reply: reply.clone(),
        })?;
        Ok(Verdict {
            score,
            reply,
            from_cache: false,
        })
    }

    /// Scores every record lacking a score. Identical (original, lesioned)
    /// pairs share one verdict; at most `max_concurrency` run at once.
    /// `prompts` maps prompt ids to question text for the rubric.
    pub fn score_batch(&self, records: &[LesionRecord], prompts: Option<&BTreeMap<String, String>>) -> BatchReport {
        let calls_before = self.network_calls();
        let mut jobs: Vec<(&str, &str, Option<&str>)> = Vec::new();
        let mut job_of: HashMap<(&str, &str), usize> = HashMap::new();
        let mut record_job = vec![None; records.len()];
        for (i, r) in records.iter().enumerate() {
            if r.judge_score.is_some() {
                continue;
            }
            let key = (r.original_response.as_str(), r.lesioned_response.as_str());
            let j = *job_of.entry(key).or_insert_with(|| {
                let prompt = prompts.and_then(|p| p.get(&r.prompt_id)).map(String::as_str);
                jobs.push((key.0, key.1, prompt));
                jobs.len() - 1
            });
            record_job[i] = Some(j);
        }

        let results = self.run_jobs(&jobs);
        let mut report = BatchReport {
            records: Vec::with_capacity(records.len()),
            failures: Vec::new(),
            already_scored: records.len() - record_job.iter().flatten().count(),
            cache_hits: results.iter().filter(|r| matches!(r, Ok(v) if v.from_cache)).count(),
            network_calls: 0,
        };
        for (r, job) in records.iter().zip(record_job) {
            let mut out = r.clone();
            if let Some(j) = job {
                match &results[j] {
                    Ok(v) => {
                        out.judge_score = Some(v.score);
                        out.judge_reply = Some(v.reply.clone());
                    }
                    Err(e) => report.failures.push(BatchFailure {
                        prompt_id: r.prompt_id.clone(),
                        layer: r.layer,
                        message: e.to_string(),
                    }),
                }
            }
            report.records.push(out);
        }
        report.network_calls = self.network_calls() - calls_before;
        report
    }

    fn run_jobs(&self, jobs: &[(&str, &str, Option<&str>)]) -> Vec<Result<Verdict, JudgeError>> {
        let workers = self.config.max_concurrency.min(jobs.len());
        let next = AtomicUsize::new(0);
        let mut done: Vec<(usize, Result<Verdict, JudgeError>)> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|_| {
                    s.spawn(|| {
                        let mut out = Vec::new();
                        loop {
                            let j = next.fetch_add(1, Ordering::Relaxed);
                            let Some(&(original, lesioned, prompt)) = jobs.get(j) else {
                                break;
                            };
                            out.push((j, self.score(original, lesioned, prompt)));
                        }
                        out
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("judge worker panicked"))
                .collect()
        });
        done.sort_by_key(|(j, _)| *j);
        done.into_iter().map(|(_, r)| r).collect()
    }
}

/// One-off scoring over HTTP without a persistent cache.
pub fn score_degradation(original: &str, lesioned: &str, config: &JudgeConfig) -> Result<Verdict, JudgeError> {
    Judge::connect(config.clone(), JudgeCache::in_memory())?.score(original, lesioned, None)
}
