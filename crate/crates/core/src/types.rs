//! Identifier newtypes and the closed vocabularies shared by every layer.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                $name(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_owned())
            }
        }
    };
}

id_newtype!(
    /// A replaceable supplier module in the adapter registry.
    AdapterId
);
id_newtype!(
    /// A registered human reviewer. Deliberately a different type from [`AdapterId`].
    PrincipalId
);
id_newtype!(TaskId);
id_newtype!(SourceId);
id_newtype!(DomainTag);

/// Source reliability grade. `Ord` follows reliability: `Unverified` is the minimum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    #[serde(rename = "D")]
    Unverified,
    #[serde(rename = "C")]
    SingleSource,
    #[serde(rename = "B")]
    Corroborated,
    #[serde(rename = "A")]
    Verified,
}

impl Tier {
    pub const ALL: [Tier; 4] = [Tier::Verified, Tier::Corroborated, Tier::SingleSource, Tier::Unverified];

    pub fn code(self) -> &'static str {
        match self {
            Tier::Verified => "A",
            Tier::Corroborated => "B",
            Tier::SingleSource => "C",
            Tier::Unverified => "D",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Tier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "A_verified" => Ok(Tier::Verified),
            "B" | "B_corroborated" => Ok(Tier::Corroborated),
            "C" | "C_single_source" => Ok(Tier::SingleSource),
            "D" | "D_unverified" => Ok(Tier::Unverified),
            other => Err(format!("unknown reliability tier `{other}`")),
        }
    }
}

/// The gateway's closed set of task domains.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainTaxonomy(BTreeSet<DomainTag>);

impl DomainTaxonomy {
    pub fn new<I, S>(tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        DomainTaxonomy(tags.into_iter().map(|t| DomainTag::new(t)).collect())
    }

    pub fn contains(&self, tag: &DomainTag) -> bool {
        self.0.contains(tag)
    }

    /// Looks up a raw string, returning the canonical tag if it is in the taxonomy.
    pub fn resolve(&self, raw: &str) -> Option<DomainTag> {
        self.0.get(&DomainTag::new(raw)).cloned()
    }

    pub fn iter(&self) -> impl Iterator<Item = &DomainTag> {
        self.0.iter()
    }
}

impl Default for DomainTaxonomy {
    fn default() -> Self {
        DomainTaxonomy::new(["summarization", "anomaly_detection", "option_generation", "planning_support"])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tier_order_is_reliability_order() {
        assert!(Tier::Verified > Tier::Corroborated);
        assert!(Tier::Corroborated > Tier::SingleSource);
        assert!(Tier::SingleSource > Tier::Unverified);
        for t in Tier::ALL {
            assert_eq!(t.code().parse::<Tier>().unwrap(), t);
        }
    }

    #[test]
    fn taxonomy_is_closed() {
        let tax = DomainTaxonomy::default();
        assert!(tax.resolve("summarization").is_some());
        assert!(tax.resolve("kinetic_strike").is_none());
    }
}
