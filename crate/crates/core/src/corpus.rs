//! Labeled posts, community rules, class balancing and stratified folds.
//!
//! Both record types are stored as JSONL, one object per line:
//!
//! ```text
//! {"id": "p1", "community": "malefashion", "title": "...", "body": "...", "created_utc": 1661299200, "moderated": false}
//! {"community": "malefashion", "rule_index": 0, "text": "No spam or self-promotion"}
//! ```

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub community: String,
    pub title: String,
    #[serde(default)]
    pub body: String,
    pub created_utc: i64,
    pub moderated: bool,
}

impl Post {
    /// Title and body joined by one space; an empty body contributes nothing.
    pub fn content(&self) -> String {
        content_of(&self.title, &self.body)
    }
}

pub fn content_of(title: &str, body: &str) -> String {
    if body.is_empty() {
        title.to_owned()
    } else {
        format!("{title} {body}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunityRule {
    pub community: String,
    pub rule_index: u64,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub domain: String,
    pub posts: Vec<Post>,
}

impl Dataset {
    /// Validates post invariants (non-empty unique ids, non-empty titles).
    pub fn new(domain: impl Into<String>, posts: Vec<Post>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(posts.len());
        for (i, p) in posts.iter().enumerate() {
            validate_post(p).map_err(|message| Error::Parse { line: i + 1, message })?;
            if !seen.insert(p.id.as_str()) {
                return Err(Error::DuplicateId(p.id.clone()));
            }
        }
        Ok(Dataset {
            domain: domain.into(),
            posts,
        })
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.posts.iter().map(|p| p.moderated).collect()
    }

    pub fn contents(&self) -> Vec<String> {
        self.posts.iter().map(Post::content).collect()
    }

    /// (moderated, non-moderated) counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.posts.iter().filter(|p| p.moderated).count();
        (pos, self.posts.len() - pos)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            domain: self.domain.clone(),
            posts: indices.iter().map(|&i| self.posts[i].clone()).collect(),
        }
    }

    pub fn to_jsonl(&self) -> String {
        to_jsonl(&self.posts)
    }
}

fn validate_post(p: &Post) -> std::result::Result<(), String> {
    if p.id.is_empty() {
        return Err("post id must be non-empty".into());
    }
    if p.title.is_empty() {
        return Err(format!("post {:?} has an empty title", p.id));
    }
    Ok(())
}

/// Community rules grouped by community, each group ordered by `rule_index`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleSet {
    groups: BTreeMap<String, Vec<CommunityRule>>,
}

impl RuleSet {
    pub fn new(rules: Vec<CommunityRule>) -> Result<Self> {
        let mut groups: BTreeMap<String, Vec<CommunityRule>> = BTreeMap::new();
        for r in rules {
            groups.entry(r.community.clone()).or_default().push(r);
        }
        for group in groups.values_mut() {
            group.sort_by_key(|r| r.rule_index);
            for w in group.windows(2) {
                if w[0].rule_index == w[1].rule_index {
                    return Err(Error::DuplicateRule {
                        community: w[0].community.clone(),
                        rule_index: w[0].rule_index,
                    });
                }
            }
        }
        Ok(RuleSet { groups })
    }

    pub fn groups(&self) -> &BTreeMap<String, Vec<CommunityRule>> {
        &self.groups
    }

    pub fn communities(&self) -> impl Iterator<Item = &str> {
        self.groups.keys().map(String::as_str)
    }

    /// All rules, by community name then rule index.
    pub fn iter(&self) -> impl Iterator<Item = &CommunityRule> {
        self.groups.values().flatten()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.iter().map(|r| r.text.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses one JSONL record, reporting absent required fields by name.
fn parse_record<T: DeserializeOwned>(line: &str, lineno: usize, required: &[&str]) -> Result<T> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: lineno,
        message: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| Error::Parse {
        line: lineno,
        message: "expected a JSON object".into(),
    })?;
    if let Some(field) = required.iter().find(|f| !obj.contains_key(**f)) {
        return Err(Error::MissingField {
            line: lineno,
            field: (*field).to_owned(),
        });
    }
    serde_json::from_value(value).map_err(|e| Error::Parse {
        line: lineno,
        message: e.to_string(),
    })
}

pub fn load_posts(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let domain = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_posts(&read_file(path)?, domain)
}

pub fn parse_posts(text: &str, domain: impl Into<String>) -> Result<Dataset> {
    const REQUIRED: &[&str] = &["id", "community", "title", "created_utc", "moderated"];
    let mut posts = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let post: Post = parse_record(line, lineno, REQUIRED)?;
        validate_post(&post).map_err(|message| Error::Parse { line: lineno, message })?;
        if !seen.insert(post.id.clone()) {
            return Err(Error::DuplicateId(post.id));
        }
        posts.push(post);
    }
    Ok(Dataset {
        domain: domain.into(),
        posts,
    })
}

pub fn load_rules(path: impl AsRef<Path>) -> Result<RuleSet> {
    parse_rules(&read_file(path.as_ref())?)
}

pub fn parse_rules(text: &str) -> Result<RuleSet> {
    const REQUIRED: &[&str] = &["community", "rule_index", "text"];
    let mut rules = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let rule: CommunityRule = parse_record(line, lineno, REQUIRED)?;
        if rule.text.trim().is_empty() {
            return Err(Error::Parse {
                line: lineno,
                message: "rule text must be non-empty".into(),
            });
        }
        rules.push(rule);
    }
    RuleSet::new(rules)
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Balances the two classes by sampling the majority class without
/// replacement down to the minority count. Posts keep their input order.
pub fn undersample(data: &Dataset, seed: u64) -> Result<Dataset> {
    let (pos, neg): (Vec<usize>, Vec<usize>) =
        (0..data.len()).partition(|&i| data.posts[i].moderated);
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleClass);
    }
    let (minority, mut majority) = if pos.len() <= neg.len() { (pos, neg) } else { (neg, pos) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    majority.shuffle(&mut rng);
    majority.truncate(minority.len());

    let mut keep: Vec<usize> = minority.into_iter().chain(majority).collect();
    keep.sort_unstable();
    Ok(data.subset(&keep))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub k: usize,
    /// Held-out indices of each fold, sorted ascending.
    pub folds: Vec<Vec<usize>>,
    pub seed: u64,
}

impl FoldSplit {
    /// (train, test) indices for fold `i`, both ascending.
    pub fn train_test(&self, i: usize) -> (Vec<usize>, Vec<usize>) {
        let test = self.folds[i].clone();
        let mut train: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        train.sort_unstable();
        (train, test)
    }
}

pub fn stratified_kfold(data: &Dataset, k: usize, seed: u64) -> Result<FoldSplit> {
    stratified_kfold_labels(&data.labels(), k, seed)
}

/// Each class is shuffled and dealt round-robin across the folds; the dealing
/// position carries over from one class to the next so total fold sizes also
/// differ by at most one.
pub fn stratified_kfold_labels(labels: &[bool], k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be >= 2, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0usize;
    for class in [false, true] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::ClassTooSmall {
                class,
                count: members.len(),
                k,
            });
        }
        members.shuffle(&mut rng);
        for idx in members {
            folds[next].push(idx);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldSplit { k, folds, seed })
}
