use std::collections::BTreeMap;
use std::fmt;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use super::WindowedSample;
use crate::{Error, Result};

/// Meteorological seasons (Dec–Feb winter, Mar–May spring, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Season {
    Winter,
    Spring,
    Summer,
    Fall,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Winter, Season::Spring, Season::Summer, Season::Fall];

    pub fn from_month(month: u32) -> Season {
        match month {
            12 | 1 | 2 => Season::Winter,
            3..=5 => Season::Spring,
            6..=8 => Season::Summer,
            _ => Season::Fall,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Season::Winter => "winter",
            Season::Spring => "spring",
            Season::Summer => "summer",
            Season::Fall => "fall",
        }
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Season {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Season::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown season `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarGroup {
    pub month: u32,
    pub season: Season,
}

pub fn derive_calendar_groups<'a>(
    samples: impl IntoIterator<Item = &'a WindowedSample>,
) -> Result<BTreeMap<u64, CalendarGroup>> {
    let mut out = BTreeMap::new();
    let mut missing = Vec::new();
    for s in samples {
        match s.event_date {
            Some(d) => {
                out.insert(
                    s.sample_id,
                    CalendarGroup {
                        month: d.month(),
                        season: Season::from_month(d.month()),
                    },
                );
            }
            None => missing.push(s.sample_id),
        }
    }
    if missing.is_empty() {
        Ok(out)
    } else {
        Err(Error::MissingEventDate(missing))
    }
}
