use crate::error::{Result, TassError};
use crate::numcore::Tensor;

/// Audio and visual feature sequences of one video.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoFeatures {
    pub video_id: String,
    /// `T×d` audio vectors.
    pub audio: Tensor,
    /// `T×h×w×d` visual feature maps.
    pub visual: Tensor,
}

impl VideoFeatures {
    pub fn new(video_id: impl Into<String>, audio: Tensor, visual: Tensor) -> Result<Self> {
        let video_id = video_id.into();
        let (a, v) = (audio.shape(), visual.shape());
        if a.len() != 2 || v.len() != 4 || a[0] != v[0] || a[1] != v[3] {
            return Err(TassError::FeatureDimension {
                sample: video_id,
                what: "audio/visual pair".into(),
                found: [a, v].concat(),
                expected: vec![],
            });
        }
        Ok(Self {
            video_id,
            audio,
            visual,
        })
    }

    /// Number of segments.
    pub fn len(&self) -> usize {
        self.audio.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn d(&self) -> usize {
        self.audio.shape()[1]
    }

    pub fn h(&self) -> usize {
        self.visual.shape()[1]
    }

    pub fn w(&self) -> usize {
        self.visual.shape()[2]
    }

    /// Audio vector of segment `t` as `1×d`.
    pub fn audio_segment(&self, t: usize) -> Tensor {
        Tensor::row(self.audio.row_slice(t).to_vec())
    }

    /// Visual map of segment `t` flattened to `hw×d`.
    pub fn visual_segment(&self, t: usize) -> Tensor {
        let (hw, d) = (self.h() * self.w(), self.d());
        let start = t * hw * d;
        Tensor::new(&[hw, d], self.visual.data()[start..start + hw * d].to_vec())
            .expect("segment shape")
    }
}

/// Averages every `window` consecutive segments. A trailing partial window is
/// averaged over its true length, so the output has `ceil(T₁ / window)`
/// segments.
pub fn pool_preprocess(video: &VideoFeatures, window: usize) -> Result<VideoFeatures> {
    if window < 1 {
        return Err(TassError::Config("pooling window T₂ must be ≥ 1".into()));
    }
    let audio = pool_leading_axis(&video.audio, window);
    let visual = pool_leading_axis(&video.visual, window);
    VideoFeatures::new(video.video_id.clone(), audio, visual)
}

fn pool_leading_axis(t: &Tensor, window: usize) -> Tensor {
    let len = t.shape()[0];
    let stride: usize = t.shape()[1..].iter().product();
    let out_len = len.div_ceil(window);
    let mut data = vec![0.0; out_len * stride];
    for (o, chunk) in data.chunks_mut(stride).enumerate() {
        let start = o * window;
        let end = (start + window).min(len);
        for s in start..end {
            let src = &t.data()[s * stride..(s + 1) * stride];
            chunk.iter_mut().zip(src).for_each(|(a, b)| *a += b);
        }
        let inv = 1.0 / (end - start) as f64;
        chunk.iter_mut().for_each(|a| *a *= inv);
    }
    let mut shape = t.shape().to_vec();
    shape[0] = out_len;
    Tensor::new(&shape, data).expect("pooled shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_video(values: &[f64]) -> VideoFeatures {
        let n = values.len();
        let audio = Tensor::new(&[n, 1], values.to_vec()).unwrap();
        let visual = Tensor::new(&[n, 1, 1, 1], values.to_vec()).unwrap();
        VideoFeatures::new("v", audio, visual).unwrap()
    }

    #[test]
    fn divisible_windows() {
        let p = pool_preprocess(&scalar_video(&[1.0, 3.0, 5.0, 7.0]), 2).unwrap();
        assert_eq!(p.audio.data(), &[2.0, 6.0]);
        assert_eq!(p.visual.data(), &[2.0, 6.0]);
    }

    #[test]
    fn short_tail_uses_true_length() {
        let p = pool_preprocess(&scalar_video(&[1.0, 3.0, 5.0]), 2).unwrap();
        assert_eq!(p.audio.data(), &[2.0, 5.0]);
        assert_eq!(p.len(), 2);
    }

    #[test]
    fn identity_and_degenerate_windows() {
        let v = scalar_video(&[1.0, 3.0, 5.0]);
        assert_eq!(pool_preprocess(&v, 1).unwrap(), v);
        let one = pool_preprocess(&v, 7).unwrap();
        assert_eq!(one.audio.data(), &[3.0]);
        assert!(matches!(pool_preprocess(&v, 0), Err(TassError::Config(_))));
    }

    #[test]
    fn mismatched_streams_rejected() {
        let audio = Tensor::zeros(&[3, 4]);
        let visual = Tensor::zeros(&[2, 2, 2, 4]);
        assert!(VideoFeatures::new("v", audio, visual).is_err());
    }
}
