use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::dedup::{payload_key, DedupState};
use super::stage::{Decision, Derived, Stage, StageFailure};
use super::FilterError;
use crate::wire::RecordEnvelope;

/// Derived key under which ingest records the WARC record type.
pub const DERIVED_WARC_TYPE: &str = "warc_type";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterKind {
    Mime,
    UrlPattern,
    Size,
    WarcType,
    Dedup,
    Custom,
}

impl FilterKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FilterKind::Mime => "mime",
            FilterKind::UrlPattern => "url_pattern",
            FilterKind::Size => "size",
            FilterKind::WarcType => "warc_type",
            FilterKind::Dedup => "dedup",
            FilterKind::Custom => "custom",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FilterKind {
    type Err = FilterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "mime" => FilterKind::Mime,
            "url_pattern" => FilterKind::UrlPattern,
            "size" => FilterKind::Size,
            "warc_type" => FilterKind::WarcType,
            "dedup" => FilterKind::Dedup,
            "custom" => FilterKind::Custom,
            other => return Err(FilterError::UnknownKind(other.to_string())),
        })
    }
}

/// `{"kind": "...", "params": {...}}` as it appears in pipeline configs.
///
/// The kind is kept as text so an unknown kind is reported by
/// [`build_stage`] rather than as a generic parse failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub kind: String,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

impl FilterSpec {
    pub fn new(kind: FilterKind) -> Self {
        Self {
            kind: kind.as_str().to_string(),
            params: BTreeMap::new(),
        }
    }

    pub fn param(mut self, key: &str, value: impl Into<String>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn kind(&self) -> Result<FilterKind, FilterError> {
        self.kind.parse()
    }

    fn bad(&self, detail: impl Into<String>) -> FilterError {
        FilterError::BadParams {
            stage: self.kind.clone(),
            detail: detail.into(),
        }
    }

    fn required(&self, key: &str) -> Result<&str, FilterError> {
        self.params
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| self.bad(format!("missing param {key:?}")))
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, FilterError> {
        match self.params.get(key) {
            None => Ok(None),
            Some(v) => v
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| self.bad(format!("bad value for {key:?}: {v:?}"))),
        }
    }

    fn reject_unknown(&self, allowed: &[&str]) -> Result<(), FilterError> {
        match self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(self.bad(format!("unknown param {k:?}"))),
            None => Ok(()),
        }
    }
}

type Factory = dyn Fn(&FilterSpec) -> Result<Box<dyn Stage>, FilterError> + Send + Sync;

/// Named factories for `custom` stages, looked up by the `name` param.
#[derive(Clone)]
pub struct StageRegistry {
    custom: HashMap<String, Arc<Factory>>,
}

impl Default for StageRegistry {
    fn default() -> Self {
        let mut r = Self {
            custom: HashMap::new(),
        };
        r.register("strip_tags", |_| Ok(Box::new(StripTags)));
        r.register("token_count", |_| Ok(Box::new(TokenCount)));
        r
    }
}

impl StageRegistry {
    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&FilterSpec) -> Result<Box<dyn Stage>, FilterError> + Send + Sync + 'static,
    {
        self.custom.insert(name.to_string(), Arc::new(factory));
    }

    pub fn build(&self, spec: &FilterSpec) -> Result<Box<dyn Stage>, FilterError> {
        match spec.kind()? {
            FilterKind::Mime => {
                spec.reject_unknown(&["accept"])?;
                MimeStage::new(spec.required("accept")?)
                    .map(|s| Box::new(s) as Box<dyn Stage>)
                    .map_err(|d| spec.bad(d))
            }
            FilterKind::UrlPattern => {
                spec.reject_unknown(&["regex"])?;
                let re = spec.required("regex")?;
                let regex = Regex::new(&format!("^(?:{re})")).map_err(|e| spec.bad(e.to_string()))?;
                Ok(Box::new(UrlPatternStage { regex }))
            }
            FilterKind::Size => {
                spec.reject_unknown(&["min_bytes", "max_bytes"])?;
                let min = spec.parsed::<u64>("min_bytes")?;
                let max = spec.parsed::<u64>("max_bytes")?;
                if min.is_none() && max.is_none() {
                    return Err(spec.bad("need min_bytes or max_bytes"));
                }
                let (min, max) = (min.unwrap_or(0), max.unwrap_or(u64::MAX));
                if min > max {
                    return Err(spec.bad("min_bytes > max_bytes"));
                }
                Ok(Box::new(SizeStage { min, max }))
            }
            FilterKind::WarcType => {
                spec.reject_unknown(&["types"])?;
                let types: BTreeSet<String> = spec
                    .required("types")?
                    .split(',')
                    .map(|t| t.trim().to_ascii_lowercase())
                    .filter(|t| !t.is_empty())
                    .collect();
                for t in &types {
                    t.parse::<crate::warc::WarcType>()
                        .map_err(|_| spec.bad(format!("unknown WARC type {t:?}")))?;
                }
                if types.is_empty() {
                    return Err(spec.bad("empty type list"));
                }
                Ok(Box::new(WarcTypeStage { types }))
            }
            FilterKind::Dedup => {
                spec.reject_unknown(&["mode", "capacity", "fpr"])?;
                let state = match spec.params.get("mode").map(String::as_str).unwrap_or("exact") {
                    "exact" => DedupState::exact(),
                    "bloom" => {
                        let n = spec.parsed::<u64>("capacity")?.unwrap_or(1_000_000);
                        let p = spec.parsed::<f64>("fpr")?.unwrap_or(0.01);
                        DedupState::bloom(n, p).map_err(|e| spec.bad(e.to_string()))?
                    }
                    other => return Err(spec.bad(format!("unknown mode {other:?}"))),
                };
                Ok(Box::new(DedupStage::new(state)))
            }
            FilterKind::Custom => {
                let name = spec.required("name")?;
                let factory = self
                    .custom
                    .get(name)
                    .ok_or_else(|| FilterError::UnknownKind(format!("custom:{name}")))?;
                factory(spec)
            }
        }
    }
}

/// Builds a stage from its spec using the built-in registry.
pub fn build_stage(spec: &FilterSpec) -> Result<Box<dyn Stage>, FilterError> {
    StageRegistry::default().build(spec)
}

/// Accepts exact media types or `type/*` wildcards (`*/*` accepts all).
pub struct MimeStage {
    patterns: Vec<String>,
}

impl MimeStage {
    pub fn new(accept: &str) -> Result<Self, String> {
        let patterns: Vec<String> = accept
            .split(',')
            .map(|p| p.trim().to_ascii_lowercase())
            .filter(|p| !p.is_empty())
            .collect();
        if patterns.is_empty() {
            return Err("empty accept list".into());
        }
        for p in &patterns {
            let valid = match p.split_once('/') {
                Some((t, s)) => !t.is_empty() && !s.is_empty() && !s.contains('/') && (t != "*" || s == "*"),
                None => false,
            };
            if !valid {
                return Err(format!("bad media pattern {p:?}"));
            }
        }
        Ok(Self { patterns })
    }

    pub fn matches(&self, mime: &str) -> bool {
        let mime = mime.trim().to_ascii_lowercase();
        self.patterns.iter().any(|p| match p.strip_suffix("/*") {
            Some("*") => true,
            Some(major) => mime
                .split_once('/')
                .is_some_and(|(t, _)| t == major),
            None => *p == mime,
        })
    }
}

impl Stage for MimeStage {
    fn name(&self) -> &str {
        "mime"
    }

    fn evaluate(&self, env: &RecordEnvelope, _: &mut Derived) -> Result<Decision, StageFailure> {
        Ok(keep_if(self.matches(&env.mime()), self.name()))
    }
}

/// Regular expression anchored at the start of `target_uri`.
pub struct UrlPatternStage {
    regex: Regex,
}

impl Stage for UrlPatternStage {
    fn name(&self) -> &str {
        "url_pattern"
    }

    fn evaluate(&self, env: &RecordEnvelope, _: &mut Derived) -> Result<Decision, StageFailure> {
        Ok(keep_if(self.regex.is_match(&env.target_uri()), self.name()))
    }
}

/// Payload size bounds, both inclusive.
pub struct SizeStage {
    min: u64,
    max: u64,
}

impl Stage for SizeStage {
    fn name(&self) -> &str {
        "size"
    }

    fn evaluate(&self, env: &RecordEnvelope, _: &mut Derived) -> Result<Decision, StageFailure> {
        let n = env.payload().len() as u64;
        Ok(keep_if((self.min..=self.max).contains(&n), self.name()))
    }
}

pub struct WarcTypeStage {
    types: BTreeSet<String>,
}

impl Stage for WarcTypeStage {
    fn name(&self) -> &str {
        "warc_type"
    }

    fn evaluate(&self, _: &RecordEnvelope, derived: &mut Derived) -> Result<Decision, StageFailure> {
        let t = derived
            .get(DERIVED_WARC_TYPE)
            .ok_or_else(|| StageFailure::new(self.name(), "sample has no warc_type"))?;
        Ok(keep_if(self.types.contains(t), self.name()))
    }
}

/// Drops samples whose payload digest was already seen.
pub struct DedupStage {
    state: Mutex<DedupState>,
}

impl DedupStage {
    pub fn new(state: DedupState) -> Self {
        Self {
            state: Mutex::new(state),
        }
    }
}

impl Stage for DedupStage {
    fn name(&self) -> &str {
        "dedup"
    }

    fn evaluate(&self, env: &RecordEnvelope, _: &mut Derived) -> Result<Decision, StageFailure> {
        let key = payload_key(env.payload());
        let mut state = self
            .state
            .lock()
            .map_err(|_| StageFailure::new("dedup", "poisoned state"))?;
        Ok(keep_if(state.check_and_insert(&key), self.name()))
    }

    fn is_serialized(&self) -> bool {
        true
    }
}

/// Adds a plain-text rendering of an HTML payload as derived `text`.
pub struct StripTags;

impl Stage for StripTags {
    fn name(&self) -> &str {
        "strip_tags"
    }

    fn evaluate(&self, env: &RecordEnvelope, derived: &mut Derived) -> Result<Decision, StageFailure> {
        derived.insert("text".into(), strip_tags(&String::from_utf8_lossy(env.payload())));
        Ok(Decision::Keep)
    }
}

/// Adds the whitespace-separated token count of the payload.
pub struct TokenCount;

impl Stage for TokenCount {
    fn name(&self) -> &str {
        "token_count"
    }

    fn evaluate(&self, env: &RecordEnvelope, derived: &mut Derived) -> Result<Decision, StageFailure> {
        let n = String::from_utf8_lossy(env.payload()).split_whitespace().count();
        derived.insert("token_count".into(), n.to_string());
        Ok(Decision::Keep)
    }
}

fn keep_if(cond: bool, name: &str) -> Decision {
    if cond {
        Decision::Keep
    } else {
        Decision::Drop(name.to_string())
    }
}

/// Removes markup, script and style bodies, and collapses whitespace.
pub fn strip_tags(html: &str) -> String {
    let mut out = String::with_capacity(html.len() / 2);
    let lower = html.to_ascii_lowercase();
    let mut i = 0;
    while i < html.len() {
        let rest = &html[i..];
        if rest.starts_with("<!--") {
            i += rest.find("-->").map(|e| e + 3).unwrap_or(rest.len());
            continue;
        }
        if rest.starts_with('<') {
            let lrest = &lower[i..];
            let skip_body = ["script", "style"].into_iter().find(|t| {
                lrest[1..].starts_with(t)
                    && lrest[1 + t.len()..]
                        .chars()
                        .next()
                        .is_some_and(|c| c == '>' || c.is_ascii_whitespace())
            });
            if let Some(tag) = skip_body {
                let close = format!("</{tag}");
                i += lrest.find(&close).unwrap_or(lrest.len());
            }
            let rest = &html[i..];
            i += rest.find('>').map(|e| e + 1).unwrap_or(rest.len());
            out.push(' ');
            continue;
        }
        let ch = rest.chars().next().unwrap();
        out.push(ch);
        i += ch.len_utf8();
    }
    let decoded = crate::linker::decode_entities(&out);
    decoded.split_whitespace().collect::<Vec<_>>().join(" ")
}
