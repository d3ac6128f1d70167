//! Description grammar: three verb meanings, six colours and two speeds, each
//! with two synonymous surface words.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const VERB_WORDS: [[&str; 2]; 3] = [["push", "shove"], ["pull", "drag"], ["slide", "glide"]];

pub const COLOUR_WORDS: [[&str; 2]; 6] = [
    ["red", "crimson"],
    ["green", "lime"],
    ["blue", "navy"],
    ["yellow", "golden"],
    ["cyan", "aqua"],
    ["violet", "purple"],
];

pub const SPEED_WORDS: [[&str; 2]; 2] = [["slowly", "gently"], ["fast", "quickly"]];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verb {
    Push,
    Pull,
    Slide,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Colour {
    Red,
    Green,
    Blue,
    Yellow,
    Cyan,
    Violet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speed {
    Slow,
    Fast,
}

impl Verb {
    pub const ALL: [Verb; 3] = [Verb::Push, Verb::Pull, Verb::Slide];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl Colour {
    pub const ALL: [Colour; 6] = [
        Colour::Red,
        Colour::Green,
        Colour::Blue,
        Colour::Yellow,
        Colour::Cyan,
        Colour::Violet,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// The two colours that may share the table with this one as distractor.
    pub fn distractors(self) -> [Colour; 2] {
        let i = self.index();
        [Colour::ALL[(i + 1) % 6], Colour::ALL[(i + 3) % 6]]
    }

    pub fn rgb(self) -> [u8; 3] {
        match self {
            Colour::Red => [220, 40, 40],
            Colour::Green => [40, 200, 40],
            Colour::Blue => [40, 60, 230],
            Colour::Yellow => [230, 220, 40],
            Colour::Cyan => [40, 210, 220],
            Colour::Violet => [170, 60, 210],
        }
    }
}

impl Speed {
    pub const ALL: [Speed; 2] = [Speed::Slow, Speed::Fast];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Sequence length M.
    pub fn steps(self) -> usize {
        match self {
            Speed::Slow => 100,
            Speed::Fast => 50,
        }
    }
}

/// What a description says, independent of the synonyms chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Meaning {
    pub verb: Verb,
    pub colour: Colour,
    pub speed: Speed,
}

/// One of the 8 surface strings of a meaning; bit 0 picks the verb synonym,
/// bit 1 the colour synonym, bit 2 the speed synonym.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Description {
    pub meaning: Meaning,
    pub variant: u8,
}

impl Description {
    pub fn new(meaning: Meaning, variant: u8) -> Self {
        assert!(variant < 8, "description variant {variant} out of range");
        Description { meaning, variant }
    }

    pub fn words(&self) -> [&'static str; 3] {
        let v = self.variant as usize;
        [
            VERB_WORDS[self.meaning.verb.index()][v & 1],
            COLOUR_WORDS[self.meaning.colour.index()][(v >> 1) & 1],
            SPEED_WORDS[self.meaning.speed.index()][(v >> 2) & 1],
        ]
    }

    pub fn parse(text: &str) -> Result<Self> {
        let words: Vec<&str> = text.split_whitespace().collect();
        if words.len() != 3 {
            return Err(Error::Config(format!(
                "description `{text}` must be verb colour speed"
            )));
        }
        let find = |table: &[[&str; 2]], w: &str| {
            table.iter().enumerate().find_map(|(i, syn)| {
                syn.iter().position(|s| *s == w).map(|j| (i, j))
            })
        };
        let (vi, vs) = find(&VERB_WORDS, words[0]).ok_or_else(|| Error::UnknownWord(words[0].into()))?;
        let (ci, cs) = find(&COLOUR_WORDS, words[1]).ok_or_else(|| Error::UnknownWord(words[1].into()))?;
        let (si, ss) = find(&SPEED_WORDS, words[2]).ok_or_else(|| Error::UnknownWord(words[2].into()))?;
        Ok(Description {
            meaning: Meaning {
                verb: Verb::ALL[vi],
                colour: Colour::ALL[ci],
                speed: Speed::ALL[si],
            },
            variant: (vs | (cs << 1) | (ss << 2)) as u8,
        })
    }
}

impl fmt::Display for Description {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c] = self.words();
        write!(f, "{a} {b} {c}")
    }
}

/// Meaning class of a single word: `(slot, meaning index)` with slot 0 = verb,
/// 1 = colour, 2 = speed.
pub fn word_meaning(word: &str) -> Option<(usize, usize)> {
    let tables: [&[[&str; 2]]; 3] = [&VERB_WORDS, &COLOUR_WORDS, &SPEED_WORDS];
    tables.iter().enumerate().find_map(|(slot, table)| {
        table
            .iter()
            .position(|syn| syn.contains(&word))
            .map(|m| (slot, m))
    })
}

/// All 36 meanings in lexicographic (verb, colour, speed) order.
pub fn all_meanings() -> Vec<Meaning> {
    let mut out = Vec::with_capacity(36);
    for verb in Verb::ALL {
        for colour in Colour::ALL {
            for speed in Speed::ALL {
                out.push(Meaning { verb, colour, speed });
            }
        }
    }
    out
}

/// All 288 surface strings.
pub fn all_descriptions() -> Vec<Description> {
    all_meanings()
        .into_iter()
        .flat_map(|m| (0..8).map(move |v| Description::new(m, v)))
        .collect()
}
