//! Patterns: a meaning placed in a concrete two-cube arrangement.

use serde::{Deserialize, Serialize};

use super::grammar::{all_meanings, Colour, Meaning, Speed, Verb};

/// Which side of the table the target cube sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const ALL: [Side; 2] = [Side::Left, Side::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    /// -1 for left, +1 for right.
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }
}

/// A motor action: what the arm does, independent of colours.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionType {
    pub verb: Verb,
    pub side: Side,
    pub speed: Speed,
}

impl ActionType {
    pub const COUNT: usize = 12;

    pub fn index(self) -> usize {
        self.verb.index() * 4 + self.side.index() * 2 + self.speed.index()
    }

    pub fn all() -> Vec<ActionType> {
        let mut out = Vec::with_capacity(Self::COUNT);
        for verb in Verb::ALL {
            for side in Side::ALL {
                for speed in Speed::ALL {
                    out.push(ActionType { verb, side, speed });
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pattern {
    pub meaning: Meaning,
    pub side: Side,
    /// Index into the target colour's two designated distractors.
    pub distractor: u8,
}

impl Pattern {
    pub fn target(&self) -> Colour {
        self.meaning.colour
    }

    pub fn distractor_colour(&self) -> Colour {
        self.meaning.colour.distractors()[self.distractor as usize]
    }

    pub fn action(&self) -> ActionType {
        ActionType {
            verb: self.meaning.verb,
            side: self.side,
            speed: self.meaning.speed,
        }
    }

    pub fn steps(&self) -> usize {
        self.meaning.speed.steps()
    }
}

/// The 144 patterns, lexicographic in (verb, colour, speed, side, distractor).
pub fn enumerate_patterns() -> Vec<Pattern> {
    all_meanings()
        .into_iter()
        .flat_map(|meaning| {
            Side::ALL.into_iter().flat_map(move |side| {
                (0..2u8).map(move |distractor| Pattern {
                    meaning,
                    side,
                    distractor,
                })
            })
        })
        .collect()
}
