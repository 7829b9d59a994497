use std::time::Duration;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::error::{Error, Result};

/// Environment variable read for the live client's API key by default.
pub const DEFAULT_API_KEY_VAR: &str = "OPENAI_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub image: Option<String>,
}

pub trait ChatClient {
    fn complete(&mut self, request: &ChatRequest) -> Result<String>;
}

/// Offline rule-based stand-in for a chat model. It reads the orientation,
/// instruction and skill lines of the prompt, keeps the skills whose
/// applicability names the orientation, and among those picks the one whose
/// description shares the instruction's position word (bottom or top).
/// Without a usable preference it falls back to the highest feasible id.
#[derive(Debug, Clone, Default)]
pub struct MockClient {
    pub calls: usize,
}

const BOTTOM_WORDS: &[&str] = &["bottom", "base", "lower", "low"];
const TOP_WORDS: &[&str] = &["top", "upper", "cap", "neck"];

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn mentions(text: &str, vocab: &[&str]) -> bool {
    words(text).iter().any(|w| vocab.contains(&w.as_str()))
}

struct PromptSkill {
    id: u32,
    description: String,
    applicability: String,
}

fn prompt_skills(user: &str) -> Vec<PromptSkill> {
    user.lines()
        .filter_map(|line| {
            let rest = line.strip_prefix("Skill ")?;
            let (id, rest) = rest.split_once(':')?;
            let id = id.trim().parse().ok()?;
            let (description, applicability) = match rest.rsplit_once("(applies to:") {
                Some((d, a)) => (d.trim(), a.trim().trim_end_matches(')')),
                None => (rest.trim(), ""),
            };
            Some(PromptSkill {
                id,
                description: description.to_string(),
                applicability: applicability.to_string(),
            })
        })
        .collect()
}

fn field<'a>(user: &'a str, name: &str) -> Option<&'a str> {
    user.lines().find_map(|l| l.strip_prefix(name)).map(str::trim)
}

impl ChatClient for MockClient {
    fn complete(&mut self, request: &ChatRequest) -> Result<String> {
        self.calls += 1;
        let user = &request.user;
        let skills = prompt_skills(user);
        if skills.is_empty() {
            return Ok("No skills were listed, so none can be selected.".to_string());
        }
        let orientation = field(user, "Object orientation:").unwrap_or("").to_lowercase();
        let instruction = field(user, "Instruction:").unwrap_or("");
        let feasible: Vec<&PromptSkill> = skills
            .iter()
            .filter(|s| !orientation.is_empty() && words(&s.applicability).contains(&orientation))
            .collect();
        let pool: Vec<&PromptSkill> = if feasible.is_empty() {
            skills.iter().collect()
        } else {
            feasible
        };
        let wants = if mentions(instruction, BOTTOM_WORDS) {
            Some(("bottom", BOTTOM_WORDS))
        } else if mentions(instruction, TOP_WORDS) {
            Some(("top", TOP_WORDS))
        } else {
            None
        };
        let preferred = wants.and_then(|(_, vocab)| pool.iter().find(|s| mentions(&s.description, vocab)));
        let fallback = pool.iter().max_by_key(|s| s.id).expect("pool is non-empty");
        let (choice, reason) = match (preferred, wants) {
            (Some(s), Some((part, _))) => (
                *s,
                format!("The {orientation} object can be grasped by this skill, and it holds the {part} as requested."),
            ),
            (None, Some((part, _))) => (
                *fallback,
                format!(
                    "No feasible skill grasps the {part} of a {orientation} object, so grasp feasibility takes priority. This skill applies to the current placement."
                ),
            ),
            _ => (
                *fallback,
                format!("No usable preference was given. This skill applies to a {orientation} object."),
            ),
        };
        Ok(format!("{}. {}", choice.id, reason))
    }
}

/// Baseline that ignores the prompt and names a uniformly drawn skill id.
#[derive(Debug, Clone)]
pub struct RandomClient {
    ids: Vec<u32>,
    rng: ChaCha8Rng,
}

impl RandomClient {
    pub fn new(ids: Vec<u32>, seed: u64) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::invalid("random client needs at least one skill id"));
        }
        Ok(RandomClient {
            ids,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

impl ChatClient for RandomClient {
    fn complete(&mut self, _request: &ChatRequest) -> Result<String> {
        let id = self.ids.choose(&mut self.rng).expect("ids are non-empty");
        Ok(format!("{id}. Chosen at random."))
    }
}

/// Chat-completions client over HTTP.
#[derive(Debug, Clone)]
pub struct LiveClient {
    pub endpoint: String,
    pub model: String,
    api_key: String,
    pub timeout: Duration,
}

impl LiveClient {
    pub fn new(endpoint: &str, model: &str, api_key: &str, timeout: Duration) -> Self {
        LiveClient {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key: api_key.to_string(),
            timeout,
        }
    }

    /// Reads the API key from `key_var`.
    pub fn from_env(endpoint: &str, model: &str, key_var: &str, timeout: Duration) -> Result<Self> {
        let key = std::env::var(key_var)
            .map_err(|_| Error::invalid(format!("environment variable {key_var} holds no API key")))?;
        Ok(Self::new(endpoint, model, &key, timeout))
    }

    pub fn request_body(&self, request: &ChatRequest) -> Value {
        let user = match &request.image {
            Some(url) => json!([
                {"type": "text", "text": request.user},
                {"type": "image_url", "image_url": {"url": url}},
            ]),
            None => json!(request.user),
        };
        json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": user},
            ],
        })
    }
}

impl ChatClient for LiveClient {
    fn complete(&mut self, request: &ChatRequest) -> Result<String> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let mut response = agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(self.request_body(request))
            .map_err(|e| Error::Transport(e.to_string()))?;
        let body: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| Error::Transport(format!("unreadable response: {e}")))?;
        body["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| Error::Transport(format!("response has no message content: {body}")))
    }
}
