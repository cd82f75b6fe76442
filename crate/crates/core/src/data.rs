//! Shared domain types and the deterministic bucketing functions applied to
//! profiles and timestamps.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub const SECONDS_PER_DAY: i64 = 86_400;

/// Birth years outside this range (or the `0` sentinel) are treated as illegal.
pub const MIN_LEGAL_BIRTH_YEAR: i32 = 1900;
/// Last year a birth year may legally take; the public release ends in 2011/2012.
pub const MAX_LEGAL_BIRTH_YEAR: i32 = 2012;

pub const AGE_BUCKETS: usize = 30;
pub const TWEET_BUCKETS: usize = 16;
pub const HOUR_BINS: usize = 24;
pub const GENDERS: usize = 4;

macro_rules! id_newtype {
    ($name:ident) => {
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }

        impl From<u32> for $name {
            fn from(v: u32) -> Self {
                Self(v)
            }
        }
    };
}

id_newtype!(UserId);
id_newtype!(ItemId);
id_newtype!(KeywordId);
id_newtype!(TagId);

impl ItemId {
    /// Items are themselves users of the network.
    pub fn as_user(self) -> UserId {
        UserId(self.0)
    }
}

impl UserId {
    pub fn as_item(self) -> ItemId {
        ItemId(self.0)
    }
}

/// One line of the recommendation log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RatingRecord {
    pub user: UserId,
    pub item: ItemId,
    /// `true` when the user followed the recommended item.
    pub accepted: bool,
    pub timestamp: i64,
}

impl RatingRecord {
    pub fn new(user: u32, item: u32, accepted: bool, timestamp: i64) -> Self {
        Self {
            user: UserId(user),
            item: ItemId(item),
            accepted,
            timestamp,
        }
    }

    pub fn rating(&self) -> f64 {
        if self.accepted {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub enum Gender {
    #[default]
    Unknown,
    Male,
    Female,
    Other,
}

impl Gender {
    /// Decodes the release's numeric convention `{0,1,2,3}`; anything else is unknown.
    pub fn from_code(code: i64) -> Self {
        match code {
            1 => Gender::Male,
            2 => Gender::Female,
            3 => Gender::Other,
            _ => Gender::Unknown,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Gender::Unknown => 0,
            Gender::Male => 1,
            Gender::Female => 2,
            Gender::Other => 3,
        }
    }

    pub fn index(self) -> usize {
        self.code() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct UserProfile {
    /// `0` marks a missing year.
    pub birth_year: i32,
    pub gender: Gender,
    pub tweet_count: u64,
    pub tags: BTreeSet<TagId>,
    /// Keyword weights `W(u, m)`, all non-negative.
    pub keywords: BTreeMap<KeywordId, f64>,
}

impl UserProfile {
    pub fn age_bucket(&self) -> AgeBucket {
        age_bucket(self.birth_year)
    }

    pub fn tweet_bucket(&self) -> TweetBucket {
        tweet_bucket(self.tweet_count)
    }
}

/// Interaction counts from one user towards another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ActionCounts {
    pub at: u32,
    pub retweet: u32,
    pub comment: u32,
}

impl ActionCounts {
    pub fn is_empty(&self) -> bool {
        self.at == 0 && self.retweet == 0 && self.comment == 0
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SocialGraph {
    /// `S(u)`: the users followed by `u`.
    pub follows: BTreeMap<UserId, BTreeSet<UserId>>,
    /// `A(u)` with per-target counts.
    pub actions: BTreeMap<UserId, BTreeMap<UserId, ActionCounts>>,
}

impl SocialGraph {
    pub fn followees(&self, user: UserId) -> Option<&BTreeSet<UserId>> {
        self.follows.get(&user)
    }

    pub fn action_targets(&self, user: UserId) -> Option<&BTreeMap<UserId, ActionCounts>> {
        self.actions.get(&user)
    }

    /// Inserts `u` into its own follow set for every user known to the graph
    /// or listed in `users`.
    pub fn add_self_follows<I: IntoIterator<Item = UserId>>(&mut self, users: I) {
        for u in users {
            self.follows.entry(u).or_default().insert(u);
        }
        let known: Vec<UserId> = self.follows.keys().copied().collect();
        for u in known {
            self.follows.entry(u).or_default().insert(u);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgeBucket(pub u8);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TweetBucket(pub u8);

/// Hour of day in `1..=24`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HourBin(pub u8);

impl AgeBucket {
    pub const ILLEGAL: AgeBucket = AgeBucket(29);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl TweetBucket {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl HourBin {
    /// Zero-based slot for table lookups.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

pub fn age_bucket(birth_year: i32) -> AgeBucket {
    if !(MIN_LEGAL_BIRTH_YEAR..=MAX_LEGAL_BIRTH_YEAR).contains(&birth_year) {
        return AgeBucket::ILLEGAL;
    }
    let b = if birth_year < 1950 {
        0
    } else if birth_year < 2004 {
        // ceil((x - 1950) / 2) + 1 for a non-negative numerator
        ((birth_year - 1950 + 1) / 2 + 1) as u8
    } else {
        28
    };
    AgeBucket(b)
}

pub fn tweet_bucket(count: u64) -> TweetBucket {
    let v = count.saturating_add(1);
    // floor(log2(v)) for v >= 1
    let lg = 63 - v.leading_zeros();
    TweetBucket(lg.min(15) as u8)
}

pub fn hour_bin(timestamp: i64) -> HourBin {
    let secs = timestamp.rem_euclid(SECONDS_PER_DAY);
    HourBin((secs / 3600) as u8 + 1)
}

/// Seconds elapsed since UTC midnight.
pub fn second_of_day(timestamp: i64) -> i64 {
    timestamp.rem_euclid(SECONDS_PER_DAY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn age_bucket_examples() {
        assert_eq!(age_bucket(1949), AgeBucket(0));
        assert_eq!(age_bucket(1970), AgeBucket(11));
        assert_eq!(age_bucket(0), AgeBucket(29));
        assert_eq!(age_bucket(1950), AgeBucket(1));
        assert_eq!(age_bucket(1951), AgeBucket(2));
        assert_eq!(age_bucket(2003), AgeBucket(28));
        assert_eq!(age_bucket(2004), AgeBucket(28));
        assert_eq!(age_bucket(1899), AgeBucket(29));
        assert_eq!(age_bucket(2050), AgeBucket(29));
    }

    #[test]
    fn age_bucket_matches_ceil_formula() {
        for x in 1950..2004 {
            let expected = ((x - 1950) as f64 / 2.0).ceil() as u8 + 1;
            assert_eq!(age_bucket(x).0, expected, "year {x}");
        }
    }

    #[test]
    fn tweet_bucket_examples() {
        assert_eq!(tweet_bucket(0), TweetBucket(0));
        assert_eq!(tweet_bucket(1), TweetBucket(1));
        assert_eq!(tweet_bucket(2), TweetBucket(1));
        assert_eq!(tweet_bucket(3), TweetBucket(2));
        assert_eq!(tweet_bucket(1_000_000_000), TweetBucket(15));
        assert_eq!(tweet_bucket(u64::MAX), TweetBucket(15));
    }

    #[test]
    fn hour_bin_examples() {
        assert_eq!(hour_bin(0), HourBin(1));
        assert_eq!(hour_bin(3600), HourBin(2));
        assert_eq!(hour_bin(86_399), HourBin(24));
    }

    #[test]
    fn gender_codes() {
        for c in 0..4 {
            assert_eq!(Gender::from_code(c).code() as i64, c);
        }
        assert_eq!(Gender::from_code(7), Gender::Unknown);
    }

    proptest! {
        #[test]
        fn age_bucket_monotone(x in 1950i32..2003) {
            prop_assert!(age_bucket(x) <= age_bucket(x + 1));
        }

        #[test]
        fn tweet_bucket_monotone_bounded(c in 0u64..u64::MAX - 1) {
            let a = tweet_bucket(c);
            prop_assert!(a <= tweet_bucket(c + 1));
            prop_assert!(a.0 <= 15);
        }

        #[test]
        fn hour_bin_daily_period(t in 0i64..4_000_000_000) {
            prop_assert_eq!(hour_bin(t), hour_bin(t + SECONDS_PER_DAY));
            let h = hour_bin(t).0;
            prop_assert!((1..=24).contains(&h));
        }
    }
}
