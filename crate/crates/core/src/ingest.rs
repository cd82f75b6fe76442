//! Reading and writing the six tab-separated files of a dataset directory.
//!
//! | file                | columns                                     |
//! |---------------------|---------------------------------------------|
//! | `rec_log.tsv`       | `userId itemId result timestamp`            |
//! | `user_profile.tsv`  | `userId birthYear gender tweetCount tagIds` |
//! | `user_sns.tsv`      | `followerId followeeId`                     |
//! | `user_action.tsv`   | `userId targetId nAt nRetweet nComment`     |
//! | `user_keywords.tsv` | `userId kw:weight;kw:weight;...`            |
//! | `item.tsv`          | `itemId category keywords`                  |
//!
//! Lines starting with `#` are comments. Results may be `{0,1}` or `{-1,1}`.
//! Keywords carrying the weight `2.0` come from self-descriptions and are
//! dropped on load.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{
    ActionCounts, Gender, ItemId, KeywordId, RatingRecord, SocialGraph, TagId, UserId,
    UserProfile,
};
use crate::error::{Error, Result};

pub const REC_LOG: &str = "rec_log.tsv";
pub const USER_PROFILE: &str = "user_profile.tsv";
pub const USER_SNS: &str = "user_sns.tsv";
pub const USER_ACTION: &str = "user_action.tsv";
pub const USER_KEYWORDS: &str = "user_keywords.tsv";
pub const ITEM: &str = "item.tsv";
pub const DATASET_FILES: [&str; 6] = [REC_LOG, USER_PROFILE, USER_SNS, USER_ACTION, USER_KEYWORDS, ITEM];

const DESCRIPTION_KEYWORD_WEIGHT: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    /// Sorted by `(user, timestamp)`.
    pub rating_log: Vec<RatingRecord>,
    pub profiles: BTreeMap<UserId, UserProfile>,
    pub graph: SocialGraph,
    pub item_keywords: BTreeMap<ItemId, BTreeMap<KeywordId, f64>>,
    /// Tags of the item's own user profile.
    pub item_tags: BTreeMap<ItemId, BTreeSet<TagId>>,
    /// Parsed and kept for round-tripping; not used as a feature.
    pub item_categories: BTreeMap<ItemId, String>,
    /// `(d-, d+)`: first and last log timestamp.
    pub window: (i64, i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub records: usize,
    pub positives: usize,
    pub negatives: usize,
}

pub fn sort_log(log: &mut [RatingRecord]) {
    log.sort_by_key(|r| (r.user, r.timestamp, r.item, r.accepted));
}

impl Dataset {
    /// Establishes the structural invariants: sorted log, a profile for every
    /// referenced user, a keyword entry for every logged item, item tags taken
    /// from item profiles, and the time window.
    pub fn normalize(&mut self) {
        sort_log(&mut self.rating_log);

        let mut referenced: BTreeSet<UserId> = BTreeSet::new();
        for r in &self.rating_log {
            referenced.insert(r.user);
            referenced.insert(r.item.as_user());
        }
        for (u, vs) in &self.graph.follows {
            referenced.insert(*u);
            referenced.extend(vs.iter().copied());
        }
        for (u, targets) in &self.graph.actions {
            referenced.insert(*u);
            referenced.extend(targets.keys().copied());
        }
        referenced.extend(self.item_keywords.keys().map(|i| i.as_user()));
        for u in referenced {
            self.profiles.entry(u).or_default();
        }

        for r in &self.rating_log {
            self.item_keywords.entry(r.item).or_default();
        }
        let items: Vec<ItemId> = self.item_keywords.keys().copied().collect();
        self.item_tags.clear();
        for i in items {
            let tags = self
                .profiles
                .get(&i.as_user())
                .map(|p| p.tags.clone())
                .unwrap_or_default();
            self.item_tags.insert(i, tags);
            self.item_categories.entry(i).or_insert_with(|| "0".to_string());
        }

        self.window = log_window(&self.rating_log);
    }

    pub fn items(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.item_keywords.keys().copied()
    }

    pub fn stats(&self) -> DatasetStats {
        dataset_stats(&self.rating_log)
    }

    /// A copy sharing all side information but carrying a different log.
    pub fn with_log(&self, mut log: Vec<RatingRecord>) -> Dataset {
        sort_log(&mut log);
        let window = log_window(&log);
        Dataset {
            rating_log: log,
            window,
            ..self.clone_side_info()
        }
    }

    fn clone_side_info(&self) -> Dataset {
        Dataset {
            rating_log: Vec::new(),
            profiles: self.profiles.clone(),
            graph: self.graph.clone(),
            item_keywords: self.item_keywords.clone(),
            item_tags: self.item_tags.clone(),
            item_categories: self.item_categories.clone(),
            window: self.window,
        }
    }
}

pub fn log_window(log: &[RatingRecord]) -> (i64, i64) {
    let lo = log.iter().map(|r| r.timestamp).min();
    let hi = log.iter().map(|r| r.timestamp).max();
    match (lo, hi) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => (0, 0),
    }
}

pub fn dataset_stats(log: &[RatingRecord]) -> DatasetStats {
    let users: BTreeSet<UserId> = log.iter().map(|r| r.user).collect();
    let items: BTreeSet<ItemId> = log.iter().map(|r| r.item).collect();
    let positives = log.iter().filter(|r| r.accepted).count();
    DatasetStats {
        users: users.len(),
        items: items.len(),
        records: log.len(),
        positives,
        negatives: log.len() - positives,
    }
}

struct Lines<'a> {
    file: &'a str,
    text: &'a str,
}

impl<'a> Lines<'a> {
    fn for_each(&self, mut f: impl FnMut(usize, Vec<&'a str>) -> Result<(), String>) -> Result<()> {
        for (n, line) in self.text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            f(n + 1, fields).map_err(|message| Error::Parse {
                file: self.file.to_string(),
                line: n + 1,
                message,
            })?;
        }
        Ok(())
    }
}

fn read_file(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    fs::read_to_string(&path).map_err(|e| Error::io(path, e))
}

fn expect_fields(fields: &[&str], n: usize) -> Result<(), String> {
    if fields.len() < n {
        return Err(format!("expected {n} fields, found {}", fields.len()));
    }
    Ok(())
}

fn num<T: std::str::FromStr>(field: &str, what: &str) -> Result<T, String> {
    field
        .trim()
        .parse()
        .map_err(|_| format!("invalid {what} {field:?}"))
}

pub fn parse_rec_line(fields: &[&str]) -> Result<RatingRecord, String> {
    expect_fields(fields, 4)?;
    let user: u32 = num(fields[0], "user id")?;
    let item: u32 = num(fields[1], "item id")?;
    let result: i64 = num(fields[2], "rating")?;
    let accepted = match result {
        1 => true,
        0 | -1 => false,
        _ => return Err(format!("invalid rating {result}")),
    };
    let timestamp: i64 = num(fields[3], "timestamp")?;
    Ok(RatingRecord::new(user, item, accepted, timestamp))
}

/// Parses a standalone file in `rec_log.tsv` format.
pub fn read_rec_log(path: &Path) -> Result<Vec<RatingRecord>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut out = Vec::new();
    Lines {
        file: &name,
        text: &text,
    }
    .for_each(|_, f| {
        out.push(parse_rec_line(&f)?);
        Ok(())
    })?;
    Ok(out)
}

pub fn format_rec_log(log: &[RatingRecord]) -> String {
    let mut s = String::with_capacity(log.len() * 32);
    for r in log {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}",
            r.user,
            r.item,
            u8::from(r.accepted),
            r.timestamp
        );
    }
    s
}

fn parse_keyword_list(field: &str, default_weight: f64) -> Result<BTreeMap<KeywordId, f64>, String> {
    let mut out = BTreeMap::new();
    for tok in field.split(';') {
        let tok = tok.trim();
        if tok.is_empty() {
            continue;
        }
        let (kw, w) = match tok.split_once(':') {
            Some((k, w)) => (num::<u32>(k, "keyword id")?, num::<f64>(w, "keyword weight")?),
            None => (num::<u32>(tok, "keyword id")?, default_weight),
        };
        if !w.is_finite() || w < 0.0 {
            return Err(format!("negative or non-finite keyword weight {w}"));
        }
        if w == DESCRIPTION_KEYWORD_WEIGHT {
            continue;
        }
        out.insert(KeywordId(kw), w);
    }
    Ok(out)
}

fn parse_tags(field: &str) -> Result<BTreeSet<TagId>, String> {
    let mut out = BTreeSet::new();
    for tok in field.split(';') {
        let tok = tok.trim();
        if tok.is_empty() || tok == "0" {
            continue;
        }
        out.insert(TagId(num(tok, "tag id")?));
    }
    Ok(out)
}

/// Birth years in the public release are occasionally garbage; those become
/// the missing sentinel `0`.
fn parse_birth_year(field: &str) -> i32 {
    field.trim().parse().unwrap_or(0)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let mut ds = Dataset::default();

    let text = read_file(dir, REC_LOG)?;
    Lines { file: REC_LOG, text: &text }.for_each(|_, f| {
        ds.rating_log.push(parse_rec_line(&f)?);
        Ok(())
    })?;

    let text = read_file(dir, USER_PROFILE)?;
    Lines { file: USER_PROFILE, text: &text }.for_each(|_, f| {
        expect_fields(&f, 4)?;
        let user = UserId(num(f[0], "user id")?);
        let profile = UserProfile {
            birth_year: parse_birth_year(f[1]),
            gender: Gender::from_code(num(f[2], "gender")?),
            tweet_count: num(f[3], "tweet count")?,
            tags: match f.get(4) {
                Some(t) => parse_tags(t)?,
                None => BTreeSet::new(),
            },
            keywords: BTreeMap::new(),
        };
        ds.profiles.insert(user, profile);
        Ok(())
    })?;

    let text = read_file(dir, USER_SNS)?;
    Lines { file: USER_SNS, text: &text }.for_each(|_, f| {
        expect_fields(&f, 2)?;
        let a = UserId(num(f[0], "follower id")?);
        let b = UserId(num(f[1], "followee id")?);
        ds.graph.follows.entry(a).or_default().insert(b);
        Ok(())
    })?;

    let text = read_file(dir, USER_ACTION)?;
    Lines { file: USER_ACTION, text: &text }.for_each(|_, f| {
        expect_fields(&f, 5)?;
        let a = UserId(num(f[0], "user id")?);
        let b = UserId(num(f[1], "target id")?);
        let counts = ActionCounts {
            at: num(f[2], "at count")?,
            retweet: num(f[3], "retweet count")?,
            comment: num(f[4], "comment count")?,
        };
        ds.graph.actions.entry(a).or_default().insert(b, counts);
        Ok(())
    })?;

    let mut user_keywords: BTreeMap<UserId, BTreeMap<KeywordId, f64>> = BTreeMap::new();
    let text = read_file(dir, USER_KEYWORDS)?;
    Lines { file: USER_KEYWORDS, text: &text }.for_each(|_, f| {
        expect_fields(&f, 1)?;
        let user = UserId(num(f[0], "user id")?);
        let kws = parse_keyword_list(f.get(1).copied().unwrap_or(""), 1.0)?;
        user_keywords.insert(user, kws);
        Ok(())
    })?;

    let text = read_file(dir, ITEM)?;
    Lines { file: ITEM, text: &text }.for_each(|_, f| {
        expect_fields(&f, 1)?;
        let item = ItemId(num(f[0], "item id")?);
        let category = f.get(1).copied().unwrap_or("").to_string();
        let kws = parse_keyword_list(f.get(2).copied().unwrap_or(""), 1.0)?;
        ds.item_keywords.insert(item, kws);
        ds.item_categories.insert(item, category);
        Ok(())
    })?;

    for (u, kws) in user_keywords {
        ds.profiles.entry(u).or_default().keywords = kws;
    }
    ds.normalize();
    Ok(ds)
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| Error::io(path, e))
}

fn format_keywords(kws: &BTreeMap<KeywordId, f64>, bare_unit_weights: bool) -> String {
    let parts: Vec<String> = kws
        .iter()
        .map(|(k, w)| {
            if bare_unit_weights && *w == 1.0 {
                k.to_string()
            } else {
                format!("{k}:{w}")
            }
        })
        .collect();
    parts.join(";")
}

/// Writes the six files of `ds` into `dir`, creating it if needed. An optional
/// header line (without the leading `#`) is prepended to every file.
pub fn save_dataset(ds: &Dataset, dir: &Path, header: Option<&str>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let head = header.map(|h| format!("# {h}\n")).unwrap_or_default();

    write_file(dir, REC_LOG, &(head.clone() + &format_rec_log(&ds.rating_log)))?;

    let mut s = head.clone();
    for (u, p) in &ds.profiles {
        let tags = if p.tags.is_empty() {
            "0".to_string()
        } else {
            p.tags.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(";")
        };
        let _ = writeln!(
            s,
            "{u}\t{}\t{}\t{}\t{tags}",
            p.birth_year,
            p.gender.code(),
            p.tweet_count
        );
    }
    write_file(dir, USER_PROFILE, &s)?;

    let mut s = head.clone();
    for (u, vs) in &ds.graph.follows {
        for v in vs {
            let _ = writeln!(s, "{u}\t{v}");
        }
    }
    write_file(dir, USER_SNS, &s)?;

    let mut s = head.clone();
    for (u, targets) in &ds.graph.actions {
        for (v, c) in targets {
            let _ = writeln!(s, "{u}\t{v}\t{}\t{}\t{}", c.at, c.retweet, c.comment);
        }
    }
    write_file(dir, USER_ACTION, &s)?;

    let mut s = head.clone();
    for (u, p) in &ds.profiles {
        if !p.keywords.is_empty() {
            let _ = writeln!(s, "{u}\t{}", format_keywords(&p.keywords, false));
        }
    }
    write_file(dir, USER_KEYWORDS, &s)?;

    let mut s = head;
    for (i, kws) in &ds.item_keywords {
        let cat = ds.item_categories.get(i).map(String::as_str).unwrap_or("0");
        let _ = writeln!(s, "{i}\t{cat}\t{}", format_keywords(kws, true));
    }
    write_file(dir, ITEM, &s)?;
    Ok(())
}
