//! Paper abstracts: arXiv search for the Researcher and a local corpus for
//! seed sampling.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ARXIV_ENDPOINT: &str = "https://export.arxiv.org/api/query";
pub const DEFAULT_SEARCH_LIMIT: usize = 3;
pub const DEFAULT_SEED_COUNT: usize = 3;
/// Minimum spacing between live arXiv calls.
pub const ARXIV_MIN_INTERVAL: Duration = Duration::from_secs(3);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstractRecord {
    pub arxiv_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LiteratureError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("feed parse error: {0}")]
    FeedParse(String),
    #[error("empty query")]
    EmptyQuery,
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("duplicate arxiv id `{id}` on line {line}")]
    DuplicateId { id: String, line: usize },
    #[error("corpus has {available} records, {requested} requested")]
    CorpusTooSmall { requested: usize, available: usize },
    #[error("{0}")]
    Io(String),
}

/// An immutable set of abstracts with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    records: Vec<AbstractRecord>,
}

impl Corpus {
    pub fn new(records: Vec<AbstractRecord>) -> Result<Self, LiteratureError> {
        let mut seen = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            if r.arxiv_id.trim().is_empty() {
                return Err(LiteratureError::Format {
                    line: i + 1,
                    message: "empty arxiv_id".into(),
                });
            }
            if !seen.insert(r.arxiv_id.as_str()) {
                return Err(LiteratureError::DuplicateId {
                    id: r.arxiv_id.clone(),
                    line: i + 1,
                });
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[AbstractRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Reads a corpus: one JSON object per line with `arxiv_id`, `title`, `abstract`.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, LiteratureError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| LiteratureError::Io(format!("{}: {e}", path.display())))?;
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: AbstractRecord = serde_json::from_str(line).map_err(|e| LiteratureError::Format {
            line: n + 1,
            message: e.to_string(),
        })?;
        if record.arxiv_id.trim().is_empty() {
            return Err(LiteratureError::Format {
                line: n + 1,
                message: "empty arxiv_id".into(),
            });
        }
        if !seen.insert(record.arxiv_id.clone()) {
            return Err(LiteratureError::DuplicateId {
                id: record.arxiv_id,
                line: n + 1,
            });
        }
        records.push(record);
    }
    Ok(Corpus { records })
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), LiteratureError> {
    let path = path.as_ref();
    let mut out = String::new();
    for r in &corpus.records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| LiteratureError::Io(format!("{}: {e}", path.display())))
}

/// `k` distinct records drawn uniformly without replacement, in draw order.
pub fn sample_seed_abstracts<R: Rng + ?Sized>(
    corpus: &Corpus,
    k: usize,
    rng: &mut R,
) -> Result<Vec<AbstractRecord>, LiteratureError> {
    if corpus.len() < k {
        return Err(LiteratureError::CorpusTooSmall {
            requested: k,
            available: corpus.len(),
        });
    }
    Ok(index::sample(rng, corpus.len(), k)
        .into_iter()
        .map(|i| corpus.records[i].clone())
        .collect())
}

/// Anything that can answer a Researcher literature query.
pub trait LiteratureSearch: Send + Sync {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<AbstractRecord>, LiteratureError>;
}

impl<T: LiteratureSearch + ?Sized> LiteratureSearch for Arc<T> {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<AbstractRecord>, LiteratureError> {
        (**self).search(query, limit)
    }
}

pub trait FeedFetcher: Send + Sync {
    fn fetch(&self, url: &str) -> Result<String, LiteratureError>;
}

pub struct HttpFetcher {
    client: reqwest::blocking::Client,
}

impl HttpFetcher {
    pub fn new() -> Result<Self, LiteratureError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .user_agent(concat!("mandel/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| LiteratureError::Transport(e.to_string()))?;
        Ok(Self { client })
    }
}

impl FeedFetcher for HttpFetcher {
    fn fetch(&self, url: &str) -> Result<String, LiteratureError> {
        let response = self
            .client
            .get(url)
            .send()
            .map_err(|e| LiteratureError::Transport(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(LiteratureError::Transport(format!("HTTP {status}")));
        }
        response.text().map_err(|e| LiteratureError::Transport(e.to_string()))
    }
}

const ARXIV_FIELD_PREFIXES: [&str; 9] = ["ti:", "au:", "abs:", "co:", "jr:", "cat:", "rn:", "id:", "all:"];

/// arXiv export API client with per-query caching and call spacing.
pub struct ArxivClient<F = HttpFetcher> {
    endpoint: String,
    fetcher: F,
    min_interval: Duration,
    last_call: Mutex<Option<Instant>>,
    cache: Mutex<HashMap<(String, usize), Vec<AbstractRecord>>>,
}

impl ArxivClient<HttpFetcher> {
    pub fn live() -> Result<Self, LiteratureError> {
        Ok(Self::new(ARXIV_ENDPOINT, HttpFetcher::new()?, ARXIV_MIN_INTERVAL))
    }
}

impl<F: FeedFetcher> ArxivClient<F> {
    pub fn new(endpoint: impl Into<String>, fetcher: F, min_interval: Duration) -> Self {
        Self {
            endpoint: endpoint.into(),
            fetcher,
            min_interval,
            last_call: Mutex::new(None),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn query_url(&self, query: &str, limit: usize) -> String {
        let query = query.trim();
        let search = if ARXIV_FIELD_PREFIXES.iter().any(|p| query.starts_with(p)) {
            query.to_string()
        } else {
            format!("all:{query}")
        };
        let mut url = url::Url::parse(&self.endpoint).unwrap_or_else(|_| url::Url::parse(ARXIV_ENDPOINT).unwrap());
        url.query_pairs_mut()
            .append_pair("search_query", &search)
            .append_pair("start", "0")
            .append_pair("max_results", &limit.to_string());
        url.to_string()
    }

    /// First `limit` feed entries for `query`, in feed order.
    pub fn search_arxiv(&self, query: &str, limit: usize) -> Result<Vec<AbstractRecord>, LiteratureError> {
        if query.trim().is_empty() {
            return Err(LiteratureError::EmptyQuery);
        }
        let key = (query.trim().to_string(), limit);
        if let Some(hit) = self.cache.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(hit.clone());
        }
        let url = self.query_url(query, limit);
        let body = {
            let mut last = self.last_call.lock().unwrap_or_else(|e| e.into_inner());
            if let Some(prev) = *last {
                let elapsed = prev.elapsed();
                if elapsed < self.min_interval {
                    std::thread::sleep(self.min_interval - elapsed);
                }
            }
            let body = self.fetcher.fetch(&url);
            *last = Some(Instant::now());
            body?
        };
        let mut records = parse_atom_feed(&body)?;
        records.truncate(limit);
        self.cache
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(key, records.clone());
        Ok(records)
    }
}

impl<F: FeedFetcher> LiteratureSearch for ArxivClient<F> {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<AbstractRecord>, LiteratureError> {
        self.search_arxiv(query, limit)
    }
}

const ATOM_NS: &str = "http://www.w3.org/2005/Atom";

fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Extracts (id, title, summary) of every `<entry>` of an Atom feed.
pub fn parse_atom_feed(xml: &str) -> Result<Vec<AbstractRecord>, LiteratureError> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| LiteratureError::FeedParse(e.to_string()))?;
    let root = doc.root_element();
    if !root.has_tag_name((ATOM_NS, "feed")) {
        return Err(LiteratureError::FeedParse(format!(
            "root element is <{}>, expected an Atom <feed>",
            root.tag_name().name()
        )));
    }
    let child_text = |entry: roxmltree::Node, name: &str| {
        entry
            .children()
            .find(|c| c.has_tag_name((ATOM_NS, name)))
            .map(|c| c.descendants().filter(|d| d.is_text()).filter_map(|d| d.text()).collect::<String>())
    };
    let mut records = Vec::new();
    for entry in root.children().filter(|c| c.has_tag_name((ATOM_NS, "entry"))) {
        let id = child_text(entry, "id").ok_or_else(|| LiteratureError::FeedParse("entry without <id>".into()))?;
        let id = id.trim();
        if id.contains("/api/errors") {
            let summary = child_text(entry, "summary").unwrap_or_default();
            return Err(LiteratureError::FeedParse(format!("arXiv reported an error: {}", squash(&summary))));
        }
        let arxiv_id = id.split_once("/abs/").map_or(id, |(_, rest)| rest).to_string();
        records.push(AbstractRecord {
            arxiv_id,
            title: squash(&child_text(entry, "title").unwrap_or_default()),
            abstract_text: squash(&child_text(entry, "summary").unwrap_or_default()),
        });
    }
    Ok(records)
}

/// Offline search over a local corpus: records ranked by how many query
/// terms they contain, ties broken by corpus order.
pub struct CorpusSearch {
    corpus: Arc<Corpus>,
}

impl CorpusSearch {
    pub fn new(corpus: Arc<Corpus>) -> Self {
        Self { corpus }
    }
}

impl LiteratureSearch for CorpusSearch {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<AbstractRecord>, LiteratureError> {
        if query.trim().is_empty() {
            return Err(LiteratureError::EmptyQuery);
        }
        let terms: Vec<String> = query
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| t.len() >= 3)
            .map(str::to_lowercase)
            .collect();
        let mut scored: Vec<(usize, usize)> = self
            .corpus
            .records()
            .iter()
            .enumerate()
            .filter_map(|(i, r)| {
                let hay = format!("{} {}", r.title, r.abstract_text).to_lowercase();
                let score = terms.iter().filter(|t| hay.contains(t.as_str())).count();
                (score > 0).then_some((score, i))
            })
            .collect();
        scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        Ok(scored
            .into_iter()
            .take(limit)
            .map(|(_, i)| self.corpus.records()[i].clone())
            .collect())
    }
}
