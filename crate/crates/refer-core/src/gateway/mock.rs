//! Deterministic scripted backend for tests and offline runs.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use regex::Regex;
use serde::Deserialize;

use super::{BackendFailure, BackendReply, ChatBackend, ChatRequest, FailureClass, Usage};

/// Routes prompts to scripted completions.
#[derive(Debug, Clone)]
pub enum PromptMatcher {
    Contains(String),
    Matches(Regex),
    Any,
}

impl PromptMatcher {
    fn matches(&self, prompt: &str) -> bool {
        match self {
            PromptMatcher::Contains(needle) => prompt.contains(needle),
            PromptMatcher::Matches(re) => re.is_match(prompt),
            PromptMatcher::Any => true,
        }
    }
}

struct Script {
    matcher: PromptMatcher,
    completions: Vec<String>,
    cursor: usize,
    failures_remaining: u32,
    always_fail: bool,
}

/// One observed backend call, for assertions in tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordedCall {
    pub model_id: String,
    pub prompt: String,
    pub n: u32,
}

/// Scripted chat backend. Matching is first-registered-wins; completions
/// cycle per completion delivered, so an n=20 request consumes 20 entries.
#[derive(Default)]
pub struct MockBackend {
    scripts: Mutex<Vec<Script>>,
    calls: AtomicU64,
    transcript: Mutex<Vec<RecordedCall>>,
}

impl MockBackend {
    pub fn new() -> Self {
        MockBackend::default()
    }

    /// Scripts completions for prompts accepted by `matcher`. Subsequent
    /// matching invocations return the scripted texts verbatim, cycling.
    pub fn script(&self, matcher: PromptMatcher, completions: Vec<String>) {
        self.script_with_failures(matcher, completions, 0, false);
    }

    /// Like [`MockBackend::script`], but the first `failures` matching calls
    /// fail with a retryable error, or every call fails if `always_fail`.
    pub fn script_with_failures(
        &self,
        matcher: PromptMatcher,
        completions: Vec<String>,
        failures: u32,
        always_fail: bool,
    ) {
        self.scripts.lock().unwrap().push(Script {
            matcher,
            completions,
            cursor: 0,
            failures_remaining: failures,
            always_fail,
        });
    }

    /// Backend attempts seen so far (including scripted failures).
    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn transcript(&self) -> Vec<RecordedCall> {
        self.transcript.lock().unwrap().clone()
    }

    /// Loads scripts from a TOML document (see repository docs for the
    /// format).
    pub fn from_script_file(path: &Path) -> Result<Self, MockScriptError> {
        let text = std::fs::read_to_string(path).map_err(|e| MockScriptError {
            message: format!("reading {}: {e}", path.display()),
        })?;
        Self::from_script_toml(&text)
    }

    pub fn from_script_toml(text: &str) -> Result<Self, MockScriptError> {
        #[derive(Deserialize)]
        struct ScriptFile {
            version: u32,
            #[serde(default)]
            script: Vec<ScriptEntry>,
        }
        #[derive(Deserialize)]
        struct ScriptEntry {
            contains: Option<String>,
            regex: Option<String>,
            #[serde(default)]
            any: bool,
            #[serde(default)]
            completions: Vec<String>,
            #[serde(default)]
            failures: u32,
            #[serde(default)]
            always_fail: bool,
        }

        let file: ScriptFile = toml::from_str(text).map_err(|e| MockScriptError {
            message: format!("parsing mock script: {e}"),
        })?;
        if file.version != 1 {
            return Err(MockScriptError {
                message: format!("unsupported mock script version {}", file.version),
            });
        }
        let mock = MockBackend::new();
        for (i, entry) in file.script.into_iter().enumerate() {
            let matcher = if let Some(needle) = entry.contains {
                PromptMatcher::Contains(needle)
            } else if let Some(pattern) = entry.regex {
                PromptMatcher::Matches(Regex::new(&pattern).map_err(|e| MockScriptError {
                    message: format!("script {i}: bad regex: {e}"),
                })?)
            } else if entry.any {
                PromptMatcher::Any
            } else {
                return Err(MockScriptError {
                    message: format!("script {i}: needs one of contains/regex/any"),
                });
            };
            if entry.completions.is_empty() && !entry.always_fail {
                return Err(MockScriptError {
                    message: format!("script {i}: no completions and not always_fail"),
                });
            }
            mock.script_with_failures(matcher, entry.completions, entry.failures, entry.always_fail);
        }
        Ok(mock)
    }
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("{message}")]
pub struct MockScriptError {
    pub message: String,
}

/// len/4 rounded up; a stable stand-in for a tokenizer.
fn mock_tokens(text: &str) -> u64 {
    (text.len() as u64).div_ceil(4)
}

impl ChatBackend for MockBackend {
    fn complete(&self, model_id: &str, request: &ChatRequest) -> Result<BackendReply, BackendFailure> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.transcript.lock().unwrap().push(RecordedCall {
            model_id: model_id.to_string(),
            prompt: request.prompt.clone(),
            n: request.n,
        });

        let mut scripts = self.scripts.lock().unwrap();
        let script = scripts
            .iter_mut()
            .find(|s| s.matcher.matches(&request.prompt))
            .ok_or_else(|| BackendFailure {
                class: FailureClass::Unscripted,
                message: format!(
                    "unscripted prompt (first 80 chars): {:?}",
                    request.prompt.chars().take(80).collect::<String>()
                ),
            })?;

        if script.always_fail {
            return Err(BackendFailure {
                class: FailureClass::Server,
                message: "scripted permanent failure".into(),
            });
        }
        if script.failures_remaining > 0 {
            script.failures_remaining -= 1;
            return Err(BackendFailure {
                class: FailureClass::Server,
                message: "scripted transient failure".into(),
            });
        }

        let mut completions = Vec::with_capacity(request.n as usize);
        for _ in 0..request.n {
            let text = script.completions[script.cursor % script.completions.len()].clone();
            script.cursor += 1;
            completions.push(text);
        }
        let output_tokens = completions.iter().map(|c| mock_tokens(c)).sum();
        Ok(BackendReply {
            completions,
            usage: Usage {
                input_tokens: mock_tokens(&request.prompt),
                output_tokens,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(prompt: &str, n: u32) -> ChatRequest {
        ChatRequest::text(prompt).with_n(n)
    }

    #[test]
    fn scripted_prompt_echoes_completion() {
        let mock = MockBackend::new();
        mock.script(
            PromptMatcher::Contains("Engagingness".into()),
            vec!["Analysis: good.\nRating: 3".into()],
        );
        let reply = mock.complete("m", &req("rate Engagingness please", 1)).unwrap();
        assert_eq!(reply.completions, vec!["Analysis: good.\nRating: 3"]);
        assert_eq!(mock.call_count(), 1);
    }

    #[test]
    fn unscripted_prompt_is_an_error() {
        let mock = MockBackend::new();
        mock.script(PromptMatcher::Contains("A".into()), vec!["x".into()]);
        let err = mock.complete("m", &req("ZZZ", 1)).unwrap_err();
        assert_eq!(err.class, FailureClass::Unscripted);
    }

    #[test]
    fn disjoint_matchers_route_independently() {
        let mock = MockBackend::new();
        mock.script(PromptMatcher::Contains("alpha".into()), vec!["1".into()]);
        mock.script(PromptMatcher::Contains("beta".into()), vec!["2".into()]);
        assert_eq!(mock.complete("m", &req("beta", 1)).unwrap().completions, vec!["2"]);
        assert_eq!(mock.complete("m", &req("alpha", 1)).unwrap().completions, vec!["1"]);
    }

    #[test]
    fn completions_cycle_across_and_within_calls() {
        let mock = MockBackend::new();
        mock.script(PromptMatcher::Any, vec!["a".into(), "b".into(), "c".into()]);
        assert_eq!(
            mock.complete("m", &req("p", 4)).unwrap().completions,
            vec!["a", "b", "c", "a"]
        );
        assert_eq!(mock.complete("m", &req("p", 1)).unwrap().completions, vec!["b"]);
    }

    #[test]
    fn scripted_failures_are_consumed_first() {
        let mock = MockBackend::new();
        mock.script_with_failures(PromptMatcher::Any, vec!["ok".into()], 2, false);
        assert!(mock.complete("m", &req("p", 1)).is_err());
        assert!(mock.complete("m", &req("p", 1)).is_err());
        assert_eq!(mock.complete("m", &req("p", 1)).unwrap().completions, vec!["ok"]);
    }

    #[test]
    fn script_file_parses() {
        let toml = r#"
version = 1

[[script]]
contains = "Engagingness"
completions = ["Analysis: fine.\nRating: 2"]

[[script]]
any = true
always_fail = true
"#;
        let mock = MockBackend::from_script_toml(toml).unwrap();
        assert!(mock.complete("m", &req("Engagingness", 1)).is_ok());
        assert!(mock.complete("m", &req("other", 1)).is_err());
        assert!(MockBackend::from_script_toml("version = 2").is_err());
    }
}
