use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Calendar quarter label of the form `YYYYQn`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Quarter {
    year: i32,
    q: u8,
}

impl Quarter {
    pub fn new(year: i32, q: u8) -> Result<Self, Error> {
        if !(1..=4).contains(&q) {
            return Err(Error::BadQuarter(format!("{year}Q{q}")));
        }
        Ok(Self { year, q })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn q(self) -> u8 {
        self.q
    }

    fn ordinal(self) -> i64 {
        i64::from(self.year) * 4 + i64::from(self.q - 1)
    }

    fn from_ordinal(o: i64) -> Self {
        Self {
            year: o.div_euclid(4) as i32,
            q: (o.rem_euclid(4) + 1) as u8,
        }
    }

    pub fn next(self) -> Self {
        Self::from_ordinal(self.ordinal() + 1)
    }

    /// Signed number of quarters from `self` to `other`.
    pub fn until(self, other: Quarter) -> i64 {
        other.ordinal() - self.ordinal()
    }

    /// All quarters from `self` through `last`, inclusive.
    pub fn range_inclusive(self, last: Quarter) -> Vec<Quarter> {
        (self.ordinal()..=last.ordinal())
            .map(Self::from_ordinal)
            .collect()
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.q)
    }
}

impl FromStr for Quarter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let bad = || Error::BadQuarter(s.to_string());
        let (y, q) = t.split_once(['Q', 'q']).ok_or_else(bad)?;
        if y.len() != 4 || q.len() != 1 {
            return Err(bad());
        }
        let year: i32 = y.parse().map_err(|_| bad())?;
        let q: u8 = q.parse().map_err(|_| bad())?;
        Quarter::new(year, q).map_err(|_| bad())
    }
}

impl TryFrom<String> for Quarter {
    type Error = Error;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Quarter> for String {
    fn from(q: Quarter) -> String {
        q.to_string()
    }
}
