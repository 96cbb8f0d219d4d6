//! Named period oracles and a shared case table.

use std::sync::OnceLock;

use num_bigint::BigUint;

use crate::cases::CaseData;
use crate::dynamics::{brute_period, BrutePeriod, Point, Tag};
use crate::renorm::{decide_with, DecideOptions, Kind, RenormError};

/// What an oracle says about one orbit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Answer {
    Period(BigUint),
    Aperiodic,
    /// Budget ran out before a conclusion.
    Unknown,
}

pub trait PeriodOracle: Send + Sync {
    fn name(&self) -> &'static str;
    fn answer(&self, cd: &CaseData, z: &Point) -> Result<Answer, RenormError>;
}

/// Iterates `T` until the orbit closes.
pub struct Brute {
    pub cap: u64,
}

impl PeriodOracle for Brute {
    fn name(&self) -> &'static str {
        "brute"
    }

    fn answer(&self, cd: &CaseData, z: &Point) -> Result<Answer, RenormError> {
        Ok(match brute_period(&cd.lambda, z, self.cap) {
            BrutePeriod::Period(p) => Answer::Period(p),
            BrutePeriod::Exceeded => Answer::Unknown,
        })
    }
}

/// Renormalization with substitution counting.
#[derive(Default)]
pub struct Renorm {
    pub opts: DecideOptions,
}

impl PeriodOracle for Renorm {
    fn name(&self) -> &'static str {
        "renorm"
    }

    fn answer(&self, cd: &CaseData, z: &Point) -> Result<Answer, RenormError> {
        let v = decide_with(cd, z, &self.opts)?;
        Ok(match (v.kind, v.period) {
            (Kind::Aperiodic, _) => Answer::Aperiodic,
            (Kind::Periodic, Some(p)) => Answer::Period(p),
            (Kind::Periodic, None) => Answer::Unknown,
        })
    }
}

pub fn oracles(brute_cap: u64) -> Vec<Box<dyn PeriodOracle>> {
    vec![Box::new(Renorm::default()), Box::new(Brute { cap: brute_cap })]
}

pub fn oracle(name: &str, brute_cap: u64) -> Option<Box<dyn PeriodOracle>> {
    oracles(brute_cap).into_iter().find(|o| o.name() == name)
}

/// Parsed case data, loaded once per process.
pub fn case(tag: Tag) -> &'static CaseData {
    static CASES: OnceLock<Vec<CaseData>> = OnceLock::new();
    let all = CASES.get_or_init(|| {
        Tag::ALL.iter().map(|&t| CaseData::load(t).expect("bundled case data parses")).collect()
    });
    &all[Tag::ALL.iter().position(|&t| t == tag).expect("known tag")]
}
