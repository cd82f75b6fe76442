use serde::{Deserialize, Serialize};

use super::FeatureFlags;
use crate::data::{AGE_BUCKETS, GENDERS, HOUR_BINS, TWEET_BUCKETS};

/// Every parameter table of the model. Scalar tables have width 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Table {
    UserBias,
    ItemBias,
    Hour,
    DayMinus,
    DayPlus,
    SecMinus,
    SecPlus,
    /// `b_{u, gender(i)}`: rows are users, columns genders.
    UserToItemGender,
    /// `b_{u, age(i)}`
    UserToItemAge,
    /// `b_{gender(u), i}`: rows are items, columns genders.
    GenderToItem,
    /// `b_{age(u), i}`
    AgeToItem,
    Keyword,
    Tag,
    Tweet,
    ItemFactor,
    UserFactor,
    ZDayMinus,
    ZDayPlus,
    ZSecMinus,
    ZSecPlus,
    YAge,
    YAgeGender,
    YTweet,
    YSns,
    YAction,
    YKeyword,
    YTag,
    /// Neighborhood weights `w_ij`, one column per neighbor slot of item `i`.
    KnnRated,
    /// Neighborhood weights `c_ij`.
    KnnFollowed,
}

impl Table {
    pub const ALL: [Table; 29] = [
        Table::UserBias,
        Table::ItemBias,
        Table::Hour,
        Table::DayMinus,
        Table::DayPlus,
        Table::SecMinus,
        Table::SecPlus,
        Table::UserToItemGender,
        Table::UserToItemAge,
        Table::GenderToItem,
        Table::AgeToItem,
        Table::Keyword,
        Table::Tag,
        Table::Tweet,
        Table::ItemFactor,
        Table::UserFactor,
        Table::ZDayMinus,
        Table::ZDayPlus,
        Table::ZSecMinus,
        Table::ZSecPlus,
        Table::YAge,
        Table::YAgeGender,
        Table::YTweet,
        Table::YSns,
        Table::YAction,
        Table::YKeyword,
        Table::YTag,
        Table::KnnRated,
        Table::KnnFollowed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Table::UserBias => "user_bias",
            Table::ItemBias => "item_bias",
            Table::Hour => "hour",
            Table::DayMinus => "day_minus",
            Table::DayPlus => "day_plus",
            Table::SecMinus => "sec_minus",
            Table::SecPlus => "sec_plus",
            Table::UserToItemGender => "user_item_gender",
            Table::UserToItemAge => "user_item_age",
            Table::GenderToItem => "gender_item",
            Table::AgeToItem => "age_item",
            Table::Keyword => "keyword",
            Table::Tag => "tag",
            Table::Tweet => "tweet",
            Table::ItemFactor => "q",
            Table::UserFactor => "p",
            Table::ZDayMinus => "z_day_minus",
            Table::ZDayPlus => "z_day_plus",
            Table::ZSecMinus => "z_sec_minus",
            Table::ZSecPlus => "z_sec_plus",
            Table::YAge => "y_age",
            Table::YAgeGender => "y_age_gender",
            Table::YTweet => "y_tweet",
            Table::YSns => "y_sns",
            Table::YAction => "y_action",
            Table::YKeyword => "y_keyword",
            Table::YTag => "y_tag",
            Table::KnnRated => "knn_w",
            Table::KnnFollowed => "knn_c",
        }
    }

    pub fn from_name(name: &str) -> Option<Table> {
        Table::ALL.into_iter().find(|t| t.name() == name)
    }

    pub fn is_latent(self) -> bool {
        matches!(
            self,
            Table::ItemFactor
                | Table::UserFactor
                | Table::ZDayMinus
                | Table::ZDayPlus
                | Table::ZSecMinus
                | Table::ZSecPlus
                | Table::YAge
                | Table::YAgeGender
                | Table::YTweet
                | Table::YSns
                | Table::YAction
                | Table::YKeyword
                | Table::YTag
        )
    }

    fn enabled(self, f: &FeatureFlags) -> bool {
        match self {
            Table::UserBias | Table::ItemBias | Table::ItemFactor | Table::UserFactor => true,
            Table::Hour => f.hour,
            Table::DayMinus | Table::DayPlus | Table::ZDayMinus | Table::ZDayPlus => f.day,
            Table::SecMinus | Table::SecPlus | Table::ZSecMinus | Table::ZSecPlus => f.second,
            Table::UserToItemGender
            | Table::UserToItemAge
            | Table::GenderToItem
            | Table::AgeToItem
            | Table::YAge
            | Table::YAgeGender => f.profile,
            Table::Keyword | Table::YKeyword => f.keywords,
            Table::Tag | Table::YTag => f.tags,
            Table::Tweet | Table::YTweet => f.tweetnum,
            Table::YSns => f.sns,
            Table::YAction => f.action,
            Table::KnnRated | Table::KnnFollowed => f.knn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TableSpec {
    pub offset: usize,
    pub rows: usize,
    pub width: usize,
}

impl TableSpec {
    pub fn len(&self) -> usize {
        self.rows * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Position of every table inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    specs: Vec<TableSpec>,
    total: usize,
    dim: usize,
}

pub struct Sizes {
    pub users: usize,
    pub items: usize,
    pub keywords: usize,
    pub tags: usize,
    pub neighbors: usize,
    pub dim: usize,
}

impl Layout {
    pub fn new(sizes: &Sizes, flags: &FeatureFlags) -> Self {
        let d = sizes.dim;
        let mut specs = Vec::with_capacity(Table::ALL.len());
        let mut offset = 0;
        for t in Table::ALL {
            let (rows, width) = match t {
                Table::UserBias => (sizes.users, 1),
                Table::ItemBias
                | Table::DayMinus
                | Table::DayPlus
                | Table::SecMinus
                | Table::SecPlus => (sizes.items, 1),
                Table::Hour => (HOUR_BINS, 1),
                Table::UserToItemGender => (sizes.users, GENDERS),
                Table::UserToItemAge => (sizes.users, AGE_BUCKETS),
                Table::GenderToItem => (sizes.items, GENDERS),
                Table::AgeToItem => (sizes.items, AGE_BUCKETS),
                Table::Keyword => (sizes.keywords, 1),
                Table::Tag => (sizes.tags, 1),
                Table::Tweet => (TWEET_BUCKETS, 1),
                Table::ItemFactor
                | Table::ZDayMinus
                | Table::ZDayPlus
                | Table::ZSecMinus
                | Table::ZSecPlus => (sizes.items, d),
                Table::UserFactor | Table::YSns | Table::YAction => (sizes.users, d),
                Table::YAge => (AGE_BUCKETS, d),
                Table::YAgeGender => (AGE_BUCKETS * GENDERS, d),
                Table::YTweet => (TWEET_BUCKETS, d),
                Table::YKeyword => (sizes.keywords, d),
                Table::YTag => (sizes.tags, d),
                Table::KnnRated | Table::KnnFollowed => (sizes.items, sizes.neighbors),
            };
            let rows = if t.enabled(flags) { rows } else { 0 };
            specs.push(TableSpec { offset, rows, width });
            offset += rows * width;
        }
        Self {
            specs,
            total: offset,
            dim: d,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spec(&self, t: Table) -> TableSpec {
        self.specs[t as usize]
    }

    pub fn has(&self, t: Table) -> bool {
        self.specs[t as usize].rows > 0
    }

    /// Offset of `row` (and column 0) of table `t`.
    #[inline]
    pub fn at(&self, t: Table, row: usize) -> usize {
        let s = &self.specs[t as usize];
        debug_assert!(row < s.rows, "{t:?} row {row} out of {}", s.rows);
        s.offset + row * s.width
    }

    /// The table owning a flat offset.
    pub fn table_of(&self, offset: usize) -> Table {
        for t in Table::ALL {
            let s = self.spec(t);
            if offset >= s.offset && offset < s.offset + s.len() {
                return t;
            }
        }
        panic!("offset {offset} outside layout of {}", self.total)
    }
}
