//! Held-out split of unseen (description, action, arrangement) combinations.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Sample};
use super::grammar::{Colour, Speed, Verb};
use super::pattern::{ActionType, Side};
use crate::error::{Error, Result};
use crate::numerics::RngStream;

pub const TEST_SIZE: usize = 216;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// (description string, action type, side, distractor colour)
pub type Combination = (String, usize, usize, usize);

pub fn combination(s: &Sample) -> Combination {
    let (side, distractor) = s.arrangement();
    (s.text(), s.pattern.action().index(), side, distractor)
}

/// Holds out one whole arrangement (side and distractor) per meaning, all six
/// variations of it. Within each (verb, speed) three colours are held out on
/// the left and three on the right, so every action type appears in test.
pub fn split(ds: &Dataset, seed: u64) -> Result<Split> {
    let mut rng = RngStream::new(seed);
    let mut held: HashSet<(Verb, Colour, Speed, Side, u8)> = HashSet::new();
    for verb in Verb::ALL {
        for speed in Speed::ALL {
            let mut sides = [Side::Left, Side::Left, Side::Left, Side::Right, Side::Right, Side::Right];
            rng.shuffle(&mut sides);
            for (colour, side) in Colour::ALL.into_iter().zip(sides) {
                held.insert((verb, colour, speed, side, rng.below(2) as u8));
            }
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, s) in ds.samples.iter().enumerate() {
        let p = s.pattern;
        let key = (p.meaning.verb, p.meaning.colour, p.meaning.speed, p.side, p.distractor);
        if held.contains(&key) {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    let out = Split { train, test };
    check_split(ds, &out)?;
    Ok(out)
}

/// Verifies the size, overlap and coverage constraints.
pub fn check_split(ds: &Dataset, sp: &Split) -> Result<()> {
    if ds.samples.len() == 864 && sp.test.len() != TEST_SIZE {
        return Err(Error::Split(format!("test set has {} samples, expected {TEST_SIZE}", sp.test.len())));
    }
    let seen: HashSet<Combination> = sp.train.iter().map(|&i| combination(&ds.samples[i])).collect();
    if let Some(&i) = sp.test.iter().find(|&&i| seen.contains(&combination(&ds.samples[i]))) {
        return Err(Error::Split(format!("test sample {} repeats a training combination", ds.samples[i].id())));
    }
    let actions: HashSet<usize> = sp.test.iter().map(|&i| ds.samples[i].pattern.action().index()).collect();
    if actions.len() != ActionType::COUNT {
        return Err(Error::Split(format!("test covers {} of {} action types", actions.len(), ActionType::COUNT)));
    }
    let meanings: HashSet<_> = sp.test.iter().map(|&i| ds.samples[i].pattern.meaning).collect();
    if meanings.len() != 36 {
        return Err(Error::Split(format!("test covers {} of 36 meanings", meanings.len())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::dataset::{build_dataset, DatasetConfig};

    #[test]
    fn split_sizes_and_overlap() {
        let ds = build_dataset(DatasetConfig::default()).unwrap();
        for seed in 0..5 {
            let sp = split(&ds, seed).unwrap();
            assert_eq!((sp.train.len(), sp.test.len()), (648, 216));
            let train: HashSet<_> = sp.train.iter().map(|&i| combination(&ds.samples[i])).collect();
            assert!(sp.test.iter().all(|&i| !train.contains(&combination(&ds.samples[i]))));
            let all: HashSet<_> = sp.train.iter().chain(&sp.test).collect();
            assert_eq!(all.len(), 864);
        }
    }

    #[test]
    fn split_is_deterministic() {
        let ds = build_dataset(DatasetConfig::default()).unwrap();
        assert_eq!(split(&ds, 3).unwrap(), split(&ds, 3).unwrap());
        assert_ne!(split(&ds, 3).unwrap(), split(&ds, 4).unwrap());
    }

    #[test]
    fn leaky_split_is_rejected() {
        let ds = build_dataset(DatasetConfig::default()).unwrap();
        let mut sp = split(&ds, 0).unwrap();
        let moved = sp.train.pop().unwrap();
        let same = ds.samples.iter().position(|s| s.pattern == ds.samples[moved].pattern && s.index != moved).unwrap();
        sp.test.retain(|&i| i != same);
        sp.test.push(moved);
        sp.train.push(same);
        assert!(matches!(check_split(&ds, &sp), Err(Error::Split(_))));
    }
}
