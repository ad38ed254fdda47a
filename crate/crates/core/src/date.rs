//! Minimal calendar-date type.
//!
//! The engine only needs day-of-week arithmetic, ordering, and ISO-8601
//! text round-trips, so a small civil-date type keeps the core crate free
//! of calendar dependencies.

use alloc::string::String;
use core::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DateError {
    /// Not a parseable `YYYY-MM-DD` string.
    Unparseable(String),
    /// Component out of range (month 13, day 32, ...).
    OutOfRange(String),
}

impl fmt::Display for DateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DateError::Unparseable(s) => write!(f, "unparseable date `{s}` (expected YYYY-MM-DD)"),
            DateError::OutOfRange(s) => write!(f, "date `{s}` has out-of-range components"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for DateError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Weekday {
    Monday,
    Tuesday,
    Wednesday,
    Thursday,
    Friday,
    Saturday,
    Sunday,
}

impl Weekday {
    /// Monday is 0, ..., Sunday is 6.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_weekend(self) -> bool {
        matches!(self, Weekday::Saturday | Weekday::Sunday)
    }
}

/// A proleptic Gregorian calendar date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CivilDate {
    year: i32,
    month: u8,
    day: u8,
}

fn is_leap(year: i32) -> bool {
    year % 4 == 0 && (year % 100 != 0 || year % 400 == 0)
}

fn days_in_month(year: i32, month: u8) -> u8 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 => {
            if is_leap(year) {
                29
            } else {
                28
            }
        }
        _ => 0,
    }
}

impl CivilDate {
    pub fn new(year: i32, month: u8, day: u8) -> Result<Self, DateError> {
        if !(1..=12).contains(&month) || day == 0 || day > days_in_month(year, month) {
            return Err(DateError::OutOfRange(alloc::format!(
                "{year:04}-{month:02}-{day:02}"
            )));
        }
        Ok(CivilDate { year, month, day })
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn month(&self) -> u8 {
        self.month
    }

    pub fn day(&self) -> u8 {
        self.day
    }

    /// Parses `YYYY-MM-DD`.
    pub fn parse(text: &str) -> Result<Self, DateError> {
        let unparseable = || DateError::Unparseable(String::from(text));
        let mut parts = text.split('-');
        let year = parts
            .next()
            .and_then(|p| if p.len() == 4 { p.parse().ok() } else { None })
            .ok_or_else(unparseable)?;
        let month = parts
            .next()
            .and_then(|p| if p.len() == 2 { p.parse().ok() } else { None })
            .ok_or_else(unparseable)?;
        let day = parts
            .next()
            .and_then(|p| if p.len() == 2 { p.parse().ok() } else { None })
            .ok_or_else(unparseable)?;
        if parts.next().is_some() {
            return Err(unparseable());
        }
        CivilDate::new(year, month, day)
    }

    /// Days since 1970-01-01 (negative before). Howard Hinnant's algorithm.
    pub fn days_from_epoch(&self) -> i64 {
        let y = if self.month <= 2 {
            self.year - 1
        } else {
            self.year
        } as i64;
        let era = if y >= 0 { y } else { y - 399 } / 400;
        let yoe = y - era * 400;
        let m = self.month as i64;
        let d = self.day as i64;
        let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + d - 1;
        let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        era * 146_097 + doe - 719_468
    }

    pub fn weekday(&self) -> Weekday {
        // 1970-01-01 was a Thursday.
        let wd = (self.days_from_epoch() + 3).rem_euclid(7);
        match wd {
            0 => Weekday::Monday,
            1 => Weekday::Tuesday,
            2 => Weekday::Wednesday,
            3 => Weekday::Thursday,
            4 => Weekday::Friday,
            5 => Weekday::Saturday,
            _ => Weekday::Sunday,
        }
    }

    /// Day number of the Monday starting this date's calendar week. Dates
    /// share this value exactly when they fall in the same Monday-to-Sunday
    /// week, which is how rolling forecast windows are grouped.
    pub fn week_anchor(&self) -> i64 {
        self.days_from_epoch() - self.weekday().index() as i64
    }
}

impl fmt::Display for CivilDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_round_trip() {
        let d = CivilDate::parse("2023-03-17").unwrap();
        assert_eq!(alloc::format!("{d}"), "2023-03-17");
        assert_eq!(d.year(), 2023);
        assert_eq!(d.month(), 3);
        assert_eq!(d.day(), 17);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(CivilDate::parse("2023-13-01").is_err());
        assert!(CivilDate::parse("2023-02-30").is_err());
        assert!(CivilDate::parse("20230217").is_err());
        assert!(CivilDate::parse("2023-2-17").is_err());
        assert!(CivilDate::parse("").is_err());
    }

    #[test]
    fn known_weekdays() {
        // 2023-03-17 was a Friday; 1970-01-01 a Thursday; 2000-02-29 a Tuesday.
        assert_eq!(
            CivilDate::parse("2023-03-17").unwrap().weekday(),
            Weekday::Friday
        );
        assert_eq!(
            CivilDate::new(1970, 1, 1).unwrap().weekday(),
            Weekday::Thursday
        );
        assert_eq!(
            CivilDate::new(2000, 2, 29).unwrap().weekday(),
            Weekday::Tuesday
        );
    }

    #[test]
    fn epoch_days_are_monotone() {
        let a = CivilDate::new(2022, 12, 31).unwrap();
        let b = CivilDate::new(2023, 1, 1).unwrap();
        assert_eq!(b.days_from_epoch() - a.days_from_epoch(), 1);
        assert!(a < b);
    }

    #[test]
    fn week_anchor_groups_weeks() {
        let mon = CivilDate::new(2023, 3, 13).unwrap();
        let fri = CivilDate::new(2023, 3, 17).unwrap();
        let next_mon = CivilDate::new(2023, 3, 20).unwrap();
        assert_eq!(mon.week_anchor(), fri.week_anchor());
        assert_ne!(fri.week_anchor(), next_mon.week_anchor());
    }
}
