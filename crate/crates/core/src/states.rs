//! Alphabets shared by every model.
//!
//! Spreads are measured in ticks and restricted to one or two ticks.
//! Returns are mid-price changes measured in half ticks and restricted to
//! `-2..=2`. The transition state `x(t)` encodes the pair `(s(t), s(t+1))`
//! and fixes the parity of the return generated between the two trades.

use std::fmt;

use crate::error::{Error, Result};

/// Bid-ask spread in ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SpreadState {
    One,
    Two,
}

impl SpreadState {
    pub fn new(ticks: i64) -> Result<Self> {
        match ticks {
            1 => Ok(SpreadState::One),
            2 => Ok(SpreadState::Two),
            other => Err(Error::InvalidParameter(format!(
                "spread must be 1 or 2 ticks, got {other}"
            ))),
        }
    }

    pub fn ticks(self) -> u8 {
        match self {
            SpreadState::One => 1,
            SpreadState::Two => 2,
        }
    }

    /// Zero-based index, used to address rows of the spread matrix.
    pub fn index(self) -> usize {
        self.ticks() as usize - 1
    }
}

impl fmt::Display for SpreadState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.ticks())
    }
}

/// Spread transition between consecutive trades.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TransitionState {
    /// 1 -> 1
    StayOne,
    /// 1 -> 2
    Widen,
    /// 2 -> 1
    Narrow,
    /// 2 -> 2
    StayTwo,
}

impl TransitionState {
    pub const ALL: [TransitionState; 4] = [
        TransitionState::StayOne,
        TransitionState::Widen,
        TransitionState::Narrow,
        TransitionState::StayTwo,
    ];

    pub fn new(label: i64) -> Result<Self> {
        match label {
            1 => Ok(TransitionState::StayOne),
            2 => Ok(TransitionState::Widen),
            3 => Ok(TransitionState::Narrow),
            4 => Ok(TransitionState::StayTwo),
            other => Err(Error::InvalidParameter(format!(
                "transition state must be in 1..=4, got {other}"
            ))),
        }
    }

    /// Label in `1..=4`.
    pub fn label(self) -> u8 {
        match self {
            TransitionState::StayOne => 1,
            TransitionState::Widen => 2,
            TransitionState::Narrow => 3,
            TransitionState::StayTwo => 4,
        }
    }

    pub fn index(self) -> usize {
        self.label() as usize - 1
    }

    pub fn spread_constant(self) -> bool {
        matches!(self, TransitionState::StayOne | TransitionState::StayTwo)
    }

    pub fn from_spread(self) -> SpreadState {
        match self {
            TransitionState::StayOne | TransitionState::Widen => SpreadState::One,
            TransitionState::Narrow | TransitionState::StayTwo => SpreadState::Two,
        }
    }

    pub fn to_spread(self) -> SpreadState {
        match self {
            TransitionState::StayOne | TransitionState::Narrow => SpreadState::One,
            TransitionState::Widen | TransitionState::StayTwo => SpreadState::Two,
        }
    }
}

impl fmt::Display for TransitionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// Mid-price change between consecutive trades, in half ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Return(i8);

impl Return {
    pub const ALL: [Return; 5] = [Return(-2), Return(-1), Return(0), Return(1), Return(2)];

    pub fn new(half_ticks: i64) -> Result<Self> {
        if (-2..=2).contains(&half_ticks) {
            Ok(Return(half_ticks as i8))
        } else {
            Err(Error::InvalidParameter(format!(
                "return must lie in -2..=2 half ticks, got {half_ticks}"
            )))
        }
    }

    pub fn value(self) -> i8 {
        self.0
    }

    pub fn squared(self) -> u8 {
        (self.0 * self.0) as u8
    }

    /// Position in `Return::ALL`.
    pub fn index(self) -> usize {
        (self.0 + 2) as usize
    }
}

impl fmt::Display for Return {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Outcome of the logit regression: did the price move (up, for spread changes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BinaryMove(bool);

impl BinaryMove {
    pub fn new(bit: bool) -> Self {
        BinaryMove(bit)
    }

    pub fn is_set(self) -> bool {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        if self.0 {
            1.0
        } else {
            0.0
        }
    }
}

pub fn encode_transition(prev: SpreadState, next: SpreadState) -> TransitionState {
    match (prev, next) {
        (SpreadState::One, SpreadState::One) => TransitionState::StayOne,
        (SpreadState::One, SpreadState::Two) => TransitionState::Widen,
        (SpreadState::Two, SpreadState::One) => TransitionState::Narrow,
        (SpreadState::Two, SpreadState::Two) => TransitionState::StayTwo,
    }
}

/// Returns compatible with the tick grid for a given spread transition.
pub fn allowed_returns(x: TransitionState) -> &'static [Return] {
    const EVEN: [Return; 3] = [Return(-2), Return(0), Return(2)];
    const ODD: [Return; 2] = [Return(-1), Return(1)];
    if x.spread_constant() {
        &EVEN
    } else {
        &ODD
    }
}

pub fn is_allowed(r: Return, x: TransitionState) -> bool {
    (r.value() % 2 == 0) == x.spread_constant()
}

pub fn binarize_return(r: Return, x: TransitionState) -> Result<BinaryMove> {
    if !is_allowed(r, x) {
        return Err(Error::SupportViolation {
            ret: r.value() as i64,
            state: x.label(),
        });
    }
    let bit = if x.spread_constant() {
        r.value() != 0
    } else {
        r.value() == 1
    };
    Ok(BinaryMove(bit))
}

/// Inverse of [`binarize_return`]. For spread-constant regimes a move has
/// two possible signs; `up` selects `+2` over `-2` and is ignored otherwise.
pub fn unbinarize(b: BinaryMove, x: TransitionState, up: bool) -> Return {
    match (x.spread_constant(), b.is_set()) {
        (true, false) => Return(0),
        (true, true) => {
            if up {
                Return(2)
            } else {
                Return(-2)
            }
        }
        (false, true) => Return(1),
        (false, false) => Return(-1),
    }
}
