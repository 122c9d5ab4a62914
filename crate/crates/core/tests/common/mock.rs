//! Scripted chat models, in-process and behind a local HTTP endpoint.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use claimrank::corpus::{Corpus, SelectText, TextSelector};
use claimrank::llm::{ChatClient, LlmError, Prompt};

#[derive(Debug, Clone)]
pub enum Behavior {
    /// Returns the first ten candidates in prompt order.
    Identity,
    /// Returns prose with no candidate ids in it.
    Garbage,
    /// Puts the query's gold ids first, then the other candidates in
    /// prompt order. Keyed by query text.
    Surface(Arc<HashMap<String, BTreeSet<String>>>),
    /// Every call fails at the transport level.
    Down,
}

pub const GARBAGE: &str = "Sorry, I can't help with ranking these articles.";

/// Query text -> gold ids, as the reranker sees queries.
pub fn surface_map(corpus: &Corpus, selector: &TextSelector) -> Behavior {
    let map = corpus
        .posts()
        .iter()
        .filter_map(|p| {
            let gold = corpus.gold_for(&p.id)?.clone();
            Some((p.select_text(selector).unwrap(), gold))
        })
        .collect();
    Behavior::Surface(Arc::new(map))
}

fn candidate_ids(user: &str) -> Vec<&str> {
    user.lines().filter_map(|l| l.strip_prefix("ID: ")).collect()
}

fn query_text(user: &str) -> &str {
    let start = user
        .find("## Query for fact-checking: ")
        .map(|i| i + "## Query for fact-checking: ".len())
        .unwrap_or(0);
    let end = user.find("\n## Data Augmentations:").unwrap_or(user.len());
    &user[start..end]
}

pub fn respond(behavior: &Behavior, prompt: &Prompt) -> Result<String, LlmError> {
    if matches!(behavior, Behavior::Down) {
        return Err(LlmError::Transport("mock endpoint is down".into()));
    }
    if prompt.system.is_some() {
        return Ok(format!("translated: {}", prompt.user));
    }
    let ids = candidate_ids(&prompt.user);
    let out: Vec<&str> = match behavior {
        Behavior::Identity => ids.into_iter().take(10).collect(),
        Behavior::Garbage => return Ok(GARBAGE.to_string()),
        Behavior::Surface(map) => {
            let gold = map.get(query_text(&prompt.user));
            let is_gold = |id: &&str| gold.is_some_and(|g| g.contains(*id));
            let mut v: Vec<&str> = ids.iter().copied().filter(is_gold).collect();
            v.extend(ids.iter().copied().filter(|id| !is_gold(id)));
            v.truncate(10);
            v
        }
        Behavior::Down => unreachable!(),
    };
    Ok(out.join("\t"))
}

pub struct MockClient {
    pub behavior: Behavior,
    pub calls: AtomicUsize,
}

impl MockClient {
    pub fn new(behavior: Behavior) -> Arc<Self> {
        Arc::new(Self {
            behavior,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatClient for MockClient {
    fn model_name(&self) -> &str {
        "mock"
    }

    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        respond(&self.behavior, prompt)
    }
}

/// Minimal chat-completion endpoint on 127.0.0.1. Lives until the process
/// exits.
pub struct MockServer {
    pub base_url: String,
    pub calls: Arc<AtomicUsize>,
}

impl MockServer {
    pub fn start(behavior: Behavior) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base_url = format!("http://{}/v1", listener.local_addr().unwrap());
        let calls = Arc::new(AtomicUsize::new(0));
        let counter = Arc::clone(&calls);
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let behavior = behavior.clone();
                let counter = Arc::clone(&counter);
                std::thread::spawn(move || {
                    let _ = serve(stream, &behavior, &counter);
                });
            }
        });
        Self { base_url, calls }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

fn serve(
    stream: std::net::TcpStream,
    behavior: &Behavior,
    calls: &AtomicUsize,
) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut content_length = 0usize;
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                content_length = value.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    calls.fetch_add(1, Ordering::SeqCst);

    let request: serde_json::Value = serde_json::from_slice(&body).unwrap_or_default();
    let mut prompt = Prompt {
        system: None,
        user: String::new(),
    };
    for m in request["messages"].as_array().into_iter().flatten() {
        let content = m["content"].as_str().unwrap_or_default().to_string();
        match m["role"].as_str() {
            Some("system") => prompt.system = Some(content),
            _ => prompt.user = content,
        }
    }
    let (status, payload) = match respond(behavior, &prompt) {
        Ok(text) => (
            "200 OK",
            serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]})
                .to_string(),
        ),
        Err(_) => ("503 Service Unavailable", "{\"error\":\"down\"}".to_string()),
    };
    let mut out = stream;
    write!(
        out,
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    )?;
    out.flush()
}
