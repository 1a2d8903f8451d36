//! Knowledge triples, predicate metadata and the immutable knowledge base.
//!
//! Triple files are UTF-8, one record per line, pipe separated:
//!
//! ```text
//! # comment
//! Haruki Murakami | locate_in | Kyoto | Geography
//! ```
//!
//! The domain column may be omitted when the importer is given a default.
//! Predicate metadata comes from a separate TOML manifest:
//!
//! ```toml
//! [[predicate]]
//! name = "locate_in"
//! surface = "is located in"
//! transitive = true
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Knowledge category of a triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Domain {
    Culture,
    Geography,
    Health,
    History,
    Math,
    Nature,
    People,
    Religion,
    Society,
    Technology,
}

impl Domain {
    pub const ALL: [Domain; 10] = [
        Domain::Culture,
        Domain::Geography,
        Domain::Health,
        Domain::History,
        Domain::Math,
        Domain::Nature,
        Domain::People,
        Domain::Religion,
        Domain::Society,
        Domain::Technology,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Culture => "Culture",
            Domain::Geography => "Geography",
            Domain::Health => "Health",
            Domain::History => "History",
            Domain::Math => "Math",
            Domain::Nature => "Nature",
            Domain::People => "People",
            Domain::Religion => "Religion",
            Domain::Society => "Society",
            Domain::Technology => "Technology",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let wanted = s.trim();
        Domain::ALL
            .iter()
            .copied()
            .find(|d| d.as_str().eq_ignore_ascii_case(wanted))
            .ok_or_else(|| Error::UnknownDomain(wanted.to_string()))
    }
}

/// Trims and collapses internal whitespace runs to a single space. Case is kept.
pub fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// A `(subject, predicate, object)` atom tagged with its domain.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct KnowledgeTriple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub domain: Domain,
}

impl KnowledgeTriple {
    /// Builds a normalized triple, rejecting empty fields.
    pub fn new(subject: &str, predicate: &str, object: &str, domain: Domain) -> Result<Self> {
        let t = Self {
            subject: normalize(subject),
            predicate: normalize(predicate),
            object: normalize(object),
            domain,
        };
        if t.subject.is_empty() || t.predicate.is_empty() || t.object.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "empty field in triple ({subject:?}, {predicate:?}, {object:?})"
            )));
        }
        Ok(t)
    }

    /// Identity of the triple; the domain tag is an attribute, not part of it.
    pub fn key(&self) -> TripleKey {
        TripleKey {
            subject: self.subject.clone(),
            predicate: self.predicate.clone(),
            object: self.object.clone(),
        }
    }

    pub fn to_line(&self) -> String {
        format!(
            "{} | {} | {} | {}",
            self.subject, self.predicate, self.object, self.domain
        )
    }
}

impl fmt::Display for KnowledgeTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.subject, self.predicate, self.object)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TripleKey {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

/// Rule-relevant metadata for one relation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateMeta {
    pub name: String,
    /// The negated relation; a base `name(s, o)` makes `negation(s, o)` false.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negation: Option<String>,
    /// The reversed relation: `name(s, o)` yields `inverse(o, s)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse: Option<String>,
    #[serde(default)]
    pub symmetric: bool,
    #[serde(default)]
    pub transitive: bool,
    /// English verb phrase used when rendering questions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<String>,
}

impl PredicateMeta {
    /// Metadata with no rule roles, used for predicates absent from the manifest.
    pub fn plain(name: &str) -> Self {
        Self {
            name: name.to_string(),
            negation: None,
            inverse: None,
            symmetric: false,
            transitive: false,
            surface: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if normalize(&self.name).is_empty() {
            return Err(Error::Manifest("predicate with empty name".into()));
        }
        if let Some(inv) = &self.inverse {
            if normalize(inv) == normalize(&self.name) {
                return Err(Error::Manifest(format!(
                    "predicate `{}` declares itself as its inverse",
                    self.name
                )));
            }
            if self.symmetric {
                return Err(Error::Manifest(format!(
                    "predicate `{}` is symmetric and also declares inverse `{inv}`",
                    self.name
                )));
            }
        }
        if let Some(neg) = &self.negation {
            if normalize(neg).is_empty() {
                return Err(Error::Manifest(format!(
                    "predicate `{}` has an empty negation form",
                    self.name
                )));
            }
        }
        Ok(())
    }

    fn normalized(mut self) -> Self {
        self.name = normalize(&self.name);
        self.negation = self.negation.map(|s| normalize(&s));
        self.inverse = self.inverse.map(|s| normalize(&s));
        self.surface = self.surface.map(|s| normalize(&s));
        self
    }
}

#[derive(Debug, Default, Deserialize, Serialize)]
struct ManifestFile {
    #[serde(default)]
    predicate: Vec<PredicateMeta>,
}

/// Parses a TOML predicate manifest.
pub fn parse_manifest(text: &str) -> Result<BTreeMap<String, PredicateMeta>> {
    let file: ManifestFile =
        toml::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
    let mut out = BTreeMap::new();
    for meta in file.predicate {
        let meta = meta.normalized();
        meta.validate()?;
        if out.insert(meta.name.clone(), meta.clone()).is_some() {
            return Err(Error::Manifest(format!(
                "predicate `{}` declared twice",
                meta.name
            )));
        }
    }
    Ok(out)
}

pub fn load_manifest(path: &Path) -> Result<BTreeMap<String, PredicateMeta>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

pub fn manifest_to_toml(predicates: &BTreeMap<String, PredicateMeta>) -> String {
    let file = ManifestFile {
        predicate: predicates.values().cloned().collect(),
    };
    toml::to_string(&file).expect("manifest serializes")
}

/// A record that could not be imported.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportReport {
    pub read: usize,
    pub kept: usize,
    pub duplicates: usize,
    pub rejected: Vec<Rejection>,
    /// Predicates seen in the triples but missing from the manifest.
    pub unregistered_predicates: Vec<String>,
}

/// Pattern for [`KnowledgeBase::lookup`]; `None` is a wildcard.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TriplePattern {
    pub subject: Option<String>,
    pub predicate: Option<String>,
    pub object: Option<String>,
}

impl TriplePattern {
    pub fn new(subject: Option<&str>, predicate: Option<&str>, object: Option<&str>) -> Self {
        Self {
            subject: subject.map(normalize),
            predicate: predicate.map(normalize),
            object: object.map(normalize),
        }
    }

    fn matches(&self, t: &KnowledgeTriple) -> bool {
        self.subject.as_deref().is_none_or(|s| s == t.subject)
            && self.predicate.as_deref().is_none_or(|p| p == t.predicate)
            && self.object.as_deref().is_none_or(|o| o == t.object)
    }
}

/// Deduplicated triples plus predicate metadata. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "KbFile", from = "KbFile")]
pub struct KnowledgeBase {
    triples: BTreeMap<TripleKey, Domain>,
    predicates: BTreeMap<String, PredicateMeta>,
}

/// On-disk form: a triple list, since JSON map keys must be strings.
#[derive(Serialize, Deserialize)]
struct KbFile {
    triples: Vec<KnowledgeTriple>,
    predicates: BTreeMap<String, PredicateMeta>,
}

impl From<KnowledgeBase> for KbFile {
    fn from(kb: KnowledgeBase) -> Self {
        Self {
            triples: kb.dump().collect(),
            predicates: kb.predicates,
        }
    }
}

impl From<KbFile> for KnowledgeBase {
    fn from(f: KbFile) -> Self {
        KnowledgeBase::from_triples(f.triples, f.predicates)
    }
}

impl KnowledgeBase {
    /// Builds a knowledge base from already-normalized triples. Duplicate keys
    /// keep the first domain seen. Predicates missing from `predicates` get
    /// plain metadata.
    pub fn from_triples(
        triples: impl IntoIterator<Item = KnowledgeTriple>,
        mut predicates: BTreeMap<String, PredicateMeta>,
    ) -> Self {
        let mut map = BTreeMap::new();
        for t in triples {
            predicates
                .entry(t.predicate.clone())
                .or_insert_with(|| PredicateMeta::plain(&t.predicate));
            map.entry(t.key()).or_insert(t.domain);
        }
        Self {
            triples: map,
            predicates,
        }
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn contains(&self, key: &TripleKey) -> bool {
        self.triples.contains_key(key)
    }

    pub fn predicate(&self, name: &str) -> Option<&PredicateMeta> {
        self.predicates.get(name)
    }

    pub fn predicates(&self) -> &BTreeMap<String, PredicateMeta> {
        &self.predicates
    }

    /// Every triple in lexicographic order.
    pub fn dump(&self) -> impl Iterator<Item = KnowledgeTriple> + '_ {
        self.triples.iter().map(|(k, d)| KnowledgeTriple {
            subject: k.subject.clone(),
            predicate: k.predicate.clone(),
            object: k.object.clone(),
            domain: *d,
        })
    }

    /// Triples matching the concrete fields of `pattern`, in lexicographic order.
    /// An all-wildcard pattern is rejected; use [`KnowledgeBase::dump`].
    pub fn lookup(&self, pattern: &TriplePattern) -> Result<Vec<KnowledgeTriple>> {
        if pattern.subject.is_none() && pattern.predicate.is_none() && pattern.object.is_none() {
            return Err(Error::Pattern(
                "all fields are wildcards; use dump for a full scan".into(),
            ));
        }
        Ok(self.dump().filter(|t| pattern.matches(t)).collect())
    }

    /// Serializes the triples in the pipe-separated file format.
    pub fn export(&self) -> String {
        let mut out = String::new();
        for t in self.dump() {
            out.push_str(&t.to_line());
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Imports a pipe-separated triple file.
///
/// Malformed records are rejected with their line number and the import
/// continues; an unknown domain tag aborts the import.
pub fn import_triples(
    source: &str,
    predicates: BTreeMap<String, PredicateMeta>,
    domain_default: Option<Domain>,
) -> Result<(KnowledgeBase, ImportReport)> {
    let mut report = ImportReport::default();
    let mut triples = Vec::new();
    let mut seen = BTreeSet::new();

    for (idx, raw) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        report.read += 1;
        let fields: Vec<&str> = line.split('|').map(str::trim).collect();
        if fields.len() < 3 || fields.len() > 4 {
            report.rejected.push(Rejection {
                line: line_no,
                reason: format!("expected 3 or 4 `|`-separated fields, found {}", fields.len()),
            });
            continue;
        }
        let domain = match fields.get(3).filter(|d| !d.is_empty()) {
            Some(tag) => tag.parse::<Domain>()?,
            None => match domain_default {
                Some(d) => d,
                None => {
                    report.rejected.push(Rejection {
                        line: line_no,
                        reason: "no domain column and no default domain".into(),
                    });
                    continue;
                }
            },
        };
        let triple = match KnowledgeTriple::new(fields[0], fields[1], fields[2], domain) {
            Ok(t) => t,
            Err(_) => {
                report.rejected.push(Rejection {
                    line: line_no,
                    reason: "empty subject, predicate or object".into(),
                });
                continue;
            }
        };
        if !seen.insert(triple.key()) {
            report.duplicates += 1;
            continue;
        }
        triples.push(triple);
    }

    let unregistered: BTreeSet<String> = triples
        .iter()
        .filter(|t| !predicates.contains_key(&t.predicate))
        .map(|t| t.predicate.clone())
        .collect();
    report.unregistered_predicates = unregistered.into_iter().collect();
    report.kept = triples.len();
    Ok((KnowledgeBase::from_triples(triples, predicates), report))
}

/// Reads the triple file and manifest from disk and imports them.
pub fn import_files(
    triples: &Path,
    manifest: Option<&Path>,
    domain_default: Option<Domain>,
) -> Result<(KnowledgeBase, ImportReport)> {
    let source = std::fs::read_to_string(triples).map_err(|e| Error::io(triples, e))?;
    let predicates = match manifest {
        Some(p) => load_manifest(p)?,
        None => BTreeMap::new(),
    };
    import_triples(&source, predicates, domain_default)
}
