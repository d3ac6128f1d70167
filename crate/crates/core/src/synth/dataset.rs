//! The 864-sample corpus, in memory and on disk.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::grammar::{Description, COLOUR_WORDS, SPEED_WORDS, VERB_WORDS};
use super::pattern::{enumerate_patterns, Pattern};
use super::render::{render_frame, FrameSize, Image};
use super::split::{split, Split};
use super::trajectory::{gen_trajectory, phase};
use super::Viewpoint;
use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::task::Episode;

pub const VARIATIONS: usize = 6;
pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub seed: u64,
    pub frame: FrameSize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            seed: 0,
            frame: FrameSize::DESK,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub index: usize,
    pub pattern: Pattern,
    pub variation: u8,
    pub description: Description,
    pub joints: Vec<Vec<f64>>,
}

impl Sample {
    pub fn id(&self) -> String {
        format!("s{:03}", self.index)
    }

    pub fn text(&self) -> String {
        self.description.to_string()
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn frame(&self, t: usize, view: Viewpoint, size: FrameSize) -> Image {
        render_frame(&self.pattern, phase(t, self.len()), view, size)
    }

    pub fn frames(&self, view: Viewpoint, size: FrameSize) -> Vec<Image> {
        (0..self.len()).map(|t| self.frame(t, view, size)).collect()
    }

    /// Arrangement key: target side plus distractor colour.
    pub fn arrangement(&self) -> (usize, usize) {
        (self.pattern.side.index(), self.pattern.distractor_colour().index())
    }
}

/// Synonym choice for the `variation`-th copy of a pattern. Within a meaning
/// the 24 samples are dealt round-robin over its 8 strings in
/// (variation, distractor, side) order, so the verb synonym follows the side
/// and the colour synonym follows the distractor.
pub fn synonym_variant(p: &Pattern, variation: u8) -> u8 {
    let k = variation as usize * 4 + p.distractor as usize * 2 + p.side.index();
    (k % 8) as u8
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub samples: Vec<Sample>,
}

pub fn build_dataset(config: DatasetConfig) -> Result<Dataset> {
    config.frame.validate()?;
    let root = RngStream::new(config.seed);
    let mut samples = Vec::with_capacity(144 * VARIATIONS);
    for pattern in enumerate_patterns() {
        for variation in 0..VARIATIONS as u8 {
            let index = samples.len();
            let mut rng = root.derive(index as u64);
            samples.push(Sample {
                index,
                pattern,
                variation,
                description: Description::new(pattern.meaning, synonym_variant(&pattern, variation)),
                joints: gen_trajectory(&pattern, &mut rng),
            });
        }
    }
    Ok(Dataset { config, samples })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub id: String,
    pub index: usize,
    pub pattern: Pattern,
    pub variation: u8,
    pub description: String,
    pub action_type: usize,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrammarInfo {
    pub verbs: Vec<Vec<String>>,
    pub colours: Vec<Vec<String>>,
    pub speeds: Vec<Vec<String>>,
}

impl GrammarInfo {
    fn current() -> Self {
        let conv = |t: &[[&str; 2]]| t.iter().map(|s| s.iter().map(|w| w.to_string()).collect()).collect();
        GrammarInfo {
            verbs: conv(&VERB_WORDS),
            colours: conv(&COLOUR_WORDS),
            speeds: conv(&SPEED_WORDS),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: DatasetConfig,
    pub split_seed: u64,
    pub patterns: usize,
    pub grammar: GrammarInfo,
    pub samples: Vec<SampleMeta>,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl Dataset {
    pub fn meta(&self, s: &Sample) -> SampleMeta {
        SampleMeta {
            id: s.id(),
            index: s.index,
            pattern: s.pattern,
            variation: s.variation,
            description: s.text(),
            action_type: s.pattern.action().index(),
            steps: s.len(),
        }
    }

    pub fn manifest(&self, split_seed: u64) -> Result<Manifest> {
        let sp = split(self, split_seed)?;
        let ids = |v: &[usize]| v.iter().map(|&i| self.samples[i].id()).collect();
        Ok(Manifest {
            config: self.config,
            split_seed,
            patterns: self.samples.iter().map(|s| s.pattern).collect::<HashSet<_>>().len(),
            grammar: GrammarInfo::current(),
            samples: self.samples.iter().map(|s| self.meta(s)).collect(),
            train: ids(&sp.train),
            test: ids(&sp.test),
        })
    }

    pub fn distinct_descriptions(&self) -> usize {
        self.samples.iter().map(|s| s.description).collect::<HashSet<_>>().len()
    }

    pub fn split(&self, seed: u64) -> Result<Split> {
        split(self, seed)
    }
}

pub fn sample_dir(root: &Path, id: &str) -> PathBuf {
    root.join("samples").join(id)
}

fn frames_dir(view: Viewpoint) -> &'static str {
    match view {
        Viewpoint::Own => "frames_self",
        Viewpoint::Opposite => "frames_opposite",
    }
}

pub fn features_file(view: Viewpoint) -> &'static str {
    match view {
        Viewpoint::Own => "features_self.csv",
        Viewpoint::Opposite => "features_opposite.csv",
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Fixed-point CSV without a header, one row per time step.
pub fn matrix_to_csv(rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in rows {
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v:.6}");
        }
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    write_file(path, matrix_to_csv(rows).as_bytes())
}

pub fn read_matrix_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row: std::result::Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
        if let Some(first) = rows.first().map(|r: &Vec<f64>| r.len()) {
            if row.len() != first {
                return Err(Error::format(path, format!("line {} has {} columns, expected {first}", n + 1, row.len())));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Writes manifest, per-sample metadata and joints, and optionally every
/// frame of both viewpoints.
pub fn write_dataset(ds: &Dataset, root: &Path, split_seed: u64, frames: bool) -> Result<Manifest> {
    create_dir(root)?;
    let manifest = ds.manifest(split_seed)?;
    for s in &ds.samples {
        let dir = sample_dir(root, &s.id());
        create_dir(&dir)?;
        let meta = serde_json::to_string_pretty(&ds.meta(s)).expect("metadata serializes");
        write_file(&dir.join("meta.json"), meta.as_bytes())?;
        write_matrix_csv(&dir.join("joints.csv"), &s.joints)?;
        if frames {
            for view in [Viewpoint::Own, Viewpoint::Opposite] {
                let fdir = dir.join(frames_dir(view));
                create_dir(&fdir)?;
                for t in 0..s.len() {
                    s.frame(t, view, ds.config.frame).write_ppm(&fdir.join(format!("{t:03}.ppm")))?;
                }
            }
        }
    }
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&root.join(MANIFEST), json.as_bytes())?;
    Ok(manifest)
}

pub fn read_manifest(root: &Path) -> Result<Manifest> {
    let path = root.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
}

/// Loads a dataset written by [`write_dataset`], joints from disk.
pub fn load_dataset(root: &Path) -> Result<(Dataset, Manifest)> {
    let manifest = read_manifest(root)?;
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for m in &manifest.samples {
        let path = sample_dir(root, &m.id).join("joints.csv");
        let joints = read_matrix_csv(&path)?;
        if joints.len() != m.steps {
            return Err(Error::format(&path, format!("expected {} rows, found {}", m.steps, joints.len())));
        }
        let description = Description::parse(&m.description)?;
        samples.push(Sample {
            index: m.index,
            pattern: m.pattern,
            variation: m.variation,
            description,
            joints,
        });
    }
    Ok((
        Dataset {
            config: manifest.config,
            samples,
        },
        manifest,
    ))
}

/// Per-frame features for one sample and viewpoint, if they have been extracted.
pub fn read_features(root: &Path, id: &str, view: Viewpoint) -> Result<Option<Vec<Vec<f64>>>> {
    let path = sample_dir(root, id).join(features_file(view));
    if !path.exists() {
        return Ok(None);
    }
    read_matrix_csv(&path).map(Some)
}

/// Loads frames from disk when present, otherwise renders them.
pub fn sample_frames(root: Option<&Path>, ds: &Dataset, s: &Sample, view: Viewpoint) -> Result<Vec<Image>> {
    if let Some(root) = root {
        let dir = sample_dir(root, &s.id()).join(frames_dir(view));
        if dir.exists() {
            return (0..s.len()).map(|t| Image::read_ppm(&dir.join(format!("{t:03}.ppm")))).collect();
        }
    }
    Ok(s.frames(view, ds.config.frame))
}

/// Pairs samples with visual features from `features(sample, view)`.
pub fn to_episodes(
    samples: &[&Sample],
    mut features: impl FnMut(&Sample, Viewpoint) -> Result<Option<Vec<Vec<f64>>>>,
) -> Result<Vec<Episode>> {
    samples
        .iter()
        .map(|s| {
            let vis_self = features(s, Viewpoint::Own)?.ok_or_else(|| {
                Error::Config(format!("sample {} has no self-view features; run `cae encode`", s.id()))
            })?;
            Ok(Episode {
                id: s.id(),
                description: s.text(),
                joints: s.joints.clone(),
                vis_self,
                vis_opposite: features(s, Viewpoint::Opposite)?,
            })
        })
        .collect()
}
