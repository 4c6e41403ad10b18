use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::Error;

/// A calendar month, `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self, Error> {
        if !(1..=12).contains(&month) {
            return Err(Error::Config(format!("month {month} out of range")));
        }
        Ok(YearMonth { year, month })
    }

    pub fn of(ts: &NaiveDateTime) -> Self {
        YearMonth {
            year: ts.year(),
            month: ts.month(),
        }
    }

    /// Months since year 0, used for arithmetic.
    pub fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn from_ordinal(ord: i64) -> Self {
        YearMonth {
            year: ord.div_euclid(12) as i32,
            month: (ord.rem_euclid(12) + 1) as u32,
        }
    }

    pub fn plus(self, months: i64) -> Self {
        Self::from_ordinal(self.ordinal() + months)
    }

    /// Signed number of months from `other` to `self`.
    pub fn months_since(self, other: YearMonth) -> i64 {
        self.ordinal() - other.ordinal()
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || Error::Config(format!("expected YYYY-MM, got `{s}`"));
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year = y.parse().map_err(|_| bad())?;
        let month = m.parse().map_err(|_| bad())?;
        YearMonth::new(year, month)
    }
}

impl TryFrom<String> for YearMonth {
    type Error = Error;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<YearMonth> for String {
    fn from(ym: YearMonth) -> String {
        ym.to_string()
    }
}

/// Observation window of whole calendar months. Month index 1 is `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: YearMonth,
    pub months: u32,
}

impl Window {
    pub fn new(start: YearMonth, months: u32) -> Self {
        Window { start, months }
    }

    /// 1-based month index of `ym`, if inside the window.
    pub fn index_of(&self, ym: YearMonth) -> Option<u32> {
        let d = ym.months_since(self.start);
        (0..self.months as i64).contains(&d).then(|| d as u32 + 1)
    }

    pub fn month_at(&self, index: u32) -> YearMonth {
        self.start.plus(index as i64 - 1)
    }

    /// Months at which churn can still be confirmed by three silent months.
    pub fn risk_months(&self) -> u32 {
        self.months.saturating_sub(3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_arith() {
        let a: YearMonth = "2008-08".parse().unwrap();
        let b: YearMonth = "2009-05".parse().unwrap();
        assert_eq!(b.months_since(a), 9);
        assert_eq!(a.plus(5).to_string(), "2009-01");
        assert!("2008-13".parse::<YearMonth>().is_err());
        assert!("200808".parse::<YearMonth>().is_err());
        let w = Window::new(a, 10);
        assert_eq!(w.index_of(a), Some(1));
        assert_eq!(w.index_of(b), Some(10));
        assert_eq!(w.index_of(b.plus(1)), None);
        assert_eq!(w.month_at(10), b);
        assert_eq!(w.risk_months(), 7);
    }
}
