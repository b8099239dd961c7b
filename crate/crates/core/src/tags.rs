//! The BIO tag inventory over four entity types.

use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityType {
    Per,
    Loc,
    Org,
    Misc,
}

impl EntityType {
    pub const ALL: [EntityType; 4] = [EntityType::Per, EntityType::Loc, EntityType::Org, EntityType::Misc];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Per => "PER",
            EntityType::Loc => "LOC",
            EntityType::Org => "ORG",
            EntityType::Misc => "MISC",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown entity type `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    O,
    B(EntityType),
    I(EntityType),
}

pub const NUM_TAGS: usize = 9;

/// Fixed tag order; the position in this array is the tag index everywhere.
pub const TAGS: [Tag; NUM_TAGS] = [
    Tag::O,
    Tag::B(EntityType::Per),
    Tag::I(EntityType::Per),
    Tag::B(EntityType::Loc),
    Tag::I(EntityType::Loc),
    Tag::B(EntityType::Org),
    Tag::I(EntityType::Org),
    Tag::B(EntityType::Misc),
    Tag::I(EntityType::Misc),
];

impl Tag {
    pub fn index(self) -> usize {
        match self {
            Tag::O => 0,
            Tag::B(t) => 1 + 2 * t.index(),
            Tag::I(t) => 2 + 2 * t.index(),
        }
    }

    pub fn from_index(i: usize) -> Option<Tag> {
        TAGS.get(i).copied()
    }

    pub fn entity(self) -> Option<EntityType> {
        match self {
            Tag::O => None,
            Tag::B(t) | Tag::I(t) => Some(t),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::O => f.write_str("O"),
            Tag::B(t) => write!(f, "B-{t}"),
            Tag::I(t) => write!(f, "I-{t}"),
        }
    }
}

impl FromStr for Tag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(Tag::O);
        }
        let bad = || format!("unknown tag `{s}`");
        let (prefix, ty) = s.split_once('-').ok_or_else(bad)?;
        let ty: EntityType = ty.parse().map_err(|_| bad())?;
        match prefix {
            "B" => Ok(Tag::B(ty)),
            "I" => Ok(Tag::I(ty)),
            _ => Err(bad()),
        }
    }
}

/// Whether `next` may follow `prev` under strict BIO (`None` = sequence start).
pub fn bio_allows(prev: Option<Tag>, next: Tag) -> bool {
    match next {
        Tag::O | Tag::B(_) => true,
        Tag::I(t) => matches!(prev, Some(Tag::B(p)) | Some(Tag::I(p)) if p == t),
    }
}
