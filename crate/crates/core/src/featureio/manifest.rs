//! JSON dataset manifest and the in-memory [`Dataset`].
//!
//! All file paths inside a manifest are relative to the manifest's directory.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::tensor_file::{read_tensor_file, read_tensor_shape, write_tensor_file};
use super::video::VideoFeatures;
use crate::error::{Result, TassError};
use crate::types::{QASample, QuestionType};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDims {
    pub d: usize,
    pub h: usize,
    pub w: usize,
    /// Segments per video.
    pub t: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub video_id: String,
    pub audio: String,
    pub visual: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub video_id: String,
    pub question: String,
    pub target: String,
    pub question_type: QuestionType,
    pub answer: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub answer_vocab: Vec<String>,
    pub dims: FeatureDims,
    pub videos: Vec<VideoEntry>,
    pub samples: Vec<SampleEntry>,
}

/// A validated manifest; feature tensors are read on demand.
#[derive(Clone, Debug)]
pub struct ManifestHandle {
    pub manifest: Manifest,
    pub root: PathBuf,
    video_index: HashMap<String, usize>,
}

/// Fully loaded features plus questions.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub answer_vocab: Vec<String>,
    pub dims: FeatureDims,
    pub videos: Vec<VideoFeatures>,
    pub samples: Vec<QASample>,
    /// `sample_video[i]` indexes `videos` for `samples[i]`.
    pub sample_video: Vec<usize>,
}

impl Dataset {
    pub fn new(
        answer_vocab: Vec<String>,
        dims: FeatureDims,
        videos: Vec<VideoFeatures>,
        samples: Vec<QASample>,
    ) -> Result<Self> {
        let index: HashMap<&str, usize> = videos
            .iter()
            .enumerate()
            .map(|(i, v)| (v.video_id.as_str(), i))
            .collect();
        let mut sample_video = Vec::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            let name = format!("#{i} ({})", s.video_id);
            let &vi = index.get(s.video_id.as_str()).ok_or_else(|| TassError::UnknownVideo {
                sample: name.clone(),
                video_id: s.video_id.clone(),
            })?;
            if s.answer >= answer_vocab.len() {
                return Err(TassError::AnswerOutOfRange {
                    sample: name,
                    answer: s.answer,
                    vocab: answer_vocab.len(),
                });
            }
            sample_video.push(vi);
        }
        Ok(Self {
            answer_vocab,
            dims,
            videos,
            samples,
            sample_video,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn video_of(&self, sample: usize) -> &VideoFeatures {
        &self.videos[self.sample_video[sample]]
    }

    /// Applies `f` to every video, keeping questions.
    pub fn map_videos(
        &self,
        f: impl Fn(&VideoFeatures) -> Result<VideoFeatures>,
    ) -> Result<Self> {
        let videos = self.videos.iter().map(f).collect::<Result<Vec<_>>>()?;
        let t = videos.first().map_or(self.dims.t, VideoFeatures::len);
        let dims = FeatureDims { t, ..self.dims };
        Self::new(self.answer_vocab.clone(), dims, videos, self.samples.clone())
    }
}

fn sample_name(i: usize, s: &SampleEntry) -> String {
    format!("#{i} ({})", s.video_id)
}

fn require_file(root: &Path, rel: &str, sample: &str) -> Result<PathBuf> {
    let path = root.join(rel);
    if !path.is_file() {
        return Err(TassError::MissingFile {
            sample: sample.to_string(),
            path,
        });
    }
    Ok(path)
}

fn require_shape(path: &Path, sample: &str, what: &str, expected: &[usize]) -> Result<()> {
    let found = read_tensor_shape(path)?;
    if found != expected {
        return Err(TassError::FeatureDimension {
            sample: sample.to_string(),
            what: what.to_string(),
            found,
            expected: expected.to_vec(),
        });
    }
    Ok(())
}

/// Reads and validates a manifest. Every referenced file must exist and carry
/// the declared shape; answer indices must be inside the vocabulary.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<ManifestHandle> {
    let path = path.as_ref();
    let path = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&path).map_err(|e| TassError::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let FeatureDims { d, h, w, t } = manifest.dims;

    let mut video_index = HashMap::new();
    for v in &manifest.videos {
        let audio = require_file(&root, &v.audio, &v.video_id)?;
        let visual = require_file(&root, &v.visual, &v.video_id)?;
        require_shape(&audio, &v.video_id, "audio", &[t, d])?;
        require_shape(&visual, &v.video_id, "visual", &[t, h, w, d])?;
        video_index.insert(v.video_id.clone(), video_index.len());
    }
    for (i, s) in manifest.samples.iter().enumerate() {
        let name = sample_name(i, s);
        if !video_index.contains_key(&s.video_id) {
            return Err(TassError::UnknownVideo {
                sample: name,
                video_id: s.video_id.clone(),
            });
        }
        if s.answer >= manifest.answer_vocab.len() {
            return Err(TassError::AnswerOutOfRange {
                sample: name,
                answer: s.answer,
                vocab: manifest.answer_vocab.len(),
            });
        }
        let q = require_file(&root, &s.question, &name)?;
        let tg = require_file(&root, &s.target, &name)?;
        require_shape(&q, &name, "question", &[1, d])?;
        require_shape(&tg, &name, "target", &[1, d])?;
    }
    Ok(ManifestHandle {
        manifest,
        root,
        video_index,
    })
}

impl ManifestHandle {
    pub fn load_video(&self, i: usize) -> Result<VideoFeatures> {
        let entry = &self.manifest.videos[i];
        let audio = read_tensor_file(self.root.join(&entry.audio))?;
        let visual = read_tensor_file(self.root.join(&entry.visual))?;
        VideoFeatures::new(entry.video_id.clone(), audio, visual)
    }

    pub fn load_sample(&self, i: usize) -> Result<QASample> {
        let entry = &self.manifest.samples[i];
        Ok(QASample {
            video_id: entry.video_id.clone(),
            question: read_tensor_file(self.root.join(&entry.question))?,
            target: read_tensor_file(self.root.join(&entry.target))?,
            question_type: entry.question_type,
            answer: entry.answer,
        })
    }

    pub fn video_position(&self, video_id: &str) -> Option<usize> {
        self.video_index.get(video_id).copied()
    }

    pub fn load_all(&self) -> Result<Dataset> {
        let videos = (0..self.manifest.videos.len())
            .map(|i| self.load_video(i))
            .collect::<Result<Vec<_>>>()?;
        let samples = (0..self.manifest.samples.len())
            .map(|i| self.load_sample(i))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(
            self.manifest.answer_vocab.clone(),
            self.manifest.dims,
            videos,
            samples,
        )
    }
}

/// Loads a whole dataset directory (or manifest path) into memory.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    load_manifest(path)?.load_all()
}

/// Writes every tensor plus `manifest.json` under `dir`.
pub fn save_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<Manifest> {
    let dir = dir.as_ref();
    for sub in ["videos", "questions"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| TassError::io(&p, e))?;
    }
    let mut videos = Vec::with_capacity(ds.videos.len());
    for v in &ds.videos {
        let audio = format!("videos/{}.audio.tass", v.video_id);
        let visual = format!("videos/{}.visual.tass", v.video_id);
        write_tensor_file(&v.audio, dir.join(&audio))?;
        write_tensor_file(&v.visual, dir.join(&visual))?;
        videos.push(VideoEntry {
            video_id: v.video_id.clone(),
            audio,
            visual,
        });
    }
    let mut samples = Vec::with_capacity(ds.samples.len());
    for (i, s) in ds.samples.iter().enumerate() {
        let question = format!("questions/{i:06}.question.tass");
        let target = format!("questions/{i:06}.target.tass");
        write_tensor_file(&s.question, dir.join(&question))?;
        write_tensor_file(&s.target, dir.join(&target))?;
        samples.push(SampleEntry {
            video_id: s.video_id.clone(),
            question,
            target,
            question_type: s.question_type,
            answer: s.answer,
        });
    }
    let manifest = Manifest {
        answer_vocab: ds.answer_vocab.clone(),
        dims: ds.dims,
        videos,
        samples,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| TassError::io(&path, e))?;
    Ok(manifest)
}
