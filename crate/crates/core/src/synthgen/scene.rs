use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::protos::{gaussian_vec, PrototypeBank};
use super::spec::ScenarioSpec;
use crate::featureio::VideoFeatures;
use crate::numcore::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quadrant {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [
        Quadrant::TopLeft,
        Quadrant::TopRight,
        Quadrant::BottomLeft,
        Quadrant::BottomRight,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::TopLeft => "top-left",
            Self::TopRight => "top-right",
            Self::BottomLeft => "bottom-left",
            Self::BottomRight => "bottom-right",
        }
    }

    /// Quadrant of a row-major cell index on an `h×w` grid.
    pub fn of_cell(cell: usize, h: usize, w: usize) -> Self {
        let (row, col) = (cell / w, cell % w);
        let top = 2 * row < h;
        let left = 2 * col < w;
        match (top, left) {
            (true, true) => Self::TopLeft,
            (true, false) => Self::TopRight,
            (false, true) => Self::BottomLeft,
            (false, false) => Self::BottomRight,
        }
    }
}

/// One object placed in a video. Objects are static; a sounding object emits
/// over the half-open segment interval `[onset, offset)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub prototype: usize,
    pub cell: usize,
    pub sounding: Option<(usize, usize)>,
}

/// Latent ground truth of one synthetic video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneScript {
    pub h: usize,
    pub w: usize,
    pub segments: usize,
    pub num_prototypes: usize,
    pub objects: Vec<SceneObject>,
}

impl SceneScript {
    pub fn object(&self, prototype: usize) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.prototype == prototype)
    }

    pub fn is_present(&self, prototype: usize) -> bool {
        self.object(prototype).is_some()
    }

    pub fn is_sounding(&self, prototype: usize) -> bool {
        self.object(prototype).is_some_and(|o| o.sounding.is_some())
    }

    pub fn sounding_at(&self, t: usize) -> impl Iterator<Item = usize> + '_ {
        self.objects.iter().filter_map(move |o| match o.sounding {
            Some((on, off)) if on <= t && t < off => Some(o.prototype),
            _ => None,
        })
    }

    pub fn quadrant_of(&self, prototype: usize) -> Option<Quadrant> {
        self.object(prototype)
            .map(|o| Quadrant::of_cell(o.cell, self.h, self.w))
    }
}

/// Draws a scene script and renders its audio and visual features.
///
/// Occupied cells hold the object's visual prototype plus its quadrant
/// signature; every cell gets i.i.d. Gaussian noise. Each audio vector is the
/// mean of the audio prototypes sounding in that segment (zero when silent)
/// plus noise.
pub fn gen_video<R: Rng + ?Sized>(
    spec: &ScenarioSpec,
    bank: &PrototypeBank,
    video_id: &str,
    rng: &mut R,
) -> (VideoFeatures, SceneScript) {
    let (k, h, w, t1) = (spec.num_prototypes, spec.h, spec.w, spec.segments);
    let n_sounding = rng.random_range(1..=spec.sounding_cap());

    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(rng);
    let (sounding, rest) = order.split_at(n_sounding);
    let mut chosen: Vec<usize> = sounding.to_vec();
    for &p in rest {
        if chosen.len() < h * w && rng.random::<f64>() < spec.distractor_rate {
            chosen.push(p);
        }
    }

    let mut onsets: Vec<usize> = (0..t1).collect();
    onsets.shuffle(rng);
    let mut free: Vec<bool> = vec![true; h * w];
    let mut objects = Vec::with_capacity(chosen.len());
    for (i, &prototype) in chosen.iter().enumerate() {
        let cell = place(&mut free, h, w, rng);
        let sounding = (i < n_sounding).then(|| {
            let on = onsets[i];
            (on, rng.random_range(on + 1..=t1))
        });
        objects.push(SceneObject {
            prototype,
            cell,
            sounding,
        });
    }
    let script = SceneScript {
        h,
        w,
        segments: t1,
        num_prototypes: k,
        objects,
    };
    let video = render(spec, bank, &script, video_id, rng);
    (video, script)
}

fn place<R: Rng + ?Sized>(free: &mut [bool], h: usize, w: usize, rng: &mut R) -> usize {
    let open: Vec<Quadrant> = Quadrant::ALL
        .into_iter()
        .filter(|&q| (0..h * w).any(|c| free[c] && Quadrant::of_cell(c, h, w) == q))
        .collect();
    let quadrant = *open.choose(rng).expect("a free cell remains");
    let cells: Vec<usize> = (0..h * w)
        .filter(|&c| free[c] && Quadrant::of_cell(c, h, w) == quadrant)
        .collect();
    let cell = *cells.choose(rng).unwrap();
    free[cell] = false;
    cell
}

/// Feature rendering for a given script.
pub fn render<R: Rng + ?Sized>(
    spec: &ScenarioSpec,
    bank: &PrototypeBank,
    script: &SceneScript,
    video_id: &str,
    rng: &mut R,
) -> VideoFeatures {
    let (d, h, w, t1) = (spec.d, spec.h, spec.w, spec.segments);
    let hw = h * w;
    let mut clean_map = vec![0.0; hw * d];
    for o in &script.objects {
        let quadrant = Quadrant::of_cell(o.cell, h, w).index();
        let cell = &mut clean_map[o.cell * d..(o.cell + 1) * d];
        for ((c, v), p) in cell
            .iter_mut()
            .zip(&bank.visual[o.prototype])
            .zip(&bank.positions[quadrant])
        {
            *c = v + spec.position_scale * p;
        }
    }

    let mut visual = Vec::with_capacity(t1 * hw * d);
    let mut audio = Vec::with_capacity(t1 * d);
    for t in 0..t1 {
        let noise = gaussian_vec(hw * d, spec.noise_std, rng);
        visual.extend(clean_map.iter().zip(&noise).map(|(c, n)| c + n));

        let sounding: Vec<usize> = script.sounding_at(t).collect();
        let mut a = vec![0.0; d];
        for &p in &sounding {
            a.iter_mut()
                .zip(&bank.audio[p])
                .for_each(|(x, y)| *x += y / sounding.len() as f64);
        }
        let noise = gaussian_vec(d, spec.noise_std, rng);
        audio.extend(a.iter().zip(&noise).map(|(x, n)| x + n));
    }
    VideoFeatures::new(
        video_id,
        Tensor::new(&[t1, d], audio).unwrap(),
        Tensor::new(&[t1, h, w, d], visual).unwrap(),
    )
    .expect("consistent synthetic shapes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::protos::{gen_prototypes, stream_rng};

    #[test]
    fn quadrants_on_odd_grid() {
        assert_eq!(Quadrant::of_cell(0, 7, 7), Quadrant::TopLeft);
        assert_eq!(Quadrant::of_cell(6, 7, 7), Quadrant::TopRight);
        assert_eq!(Quadrant::of_cell(48, 7, 7), Quadrant::BottomRight);
        assert_eq!(Quadrant::of_cell(42, 7, 7), Quadrant::BottomLeft);
        assert_eq!(Quadrant::of_cell(3, 7, 7), Quadrant::TopLeft);
        assert_eq!(Quadrant::of_cell(4, 7, 7), Quadrant::TopRight);
    }

    #[test]
    fn silent_video_audio_is_pure_noise() {
        let spec = ScenarioSpec {
            noise_std: 0.0,
            ..Default::default()
        };
        let bank = gen_prototypes(&spec).unwrap();
        let script = SceneScript {
            h: spec.h,
            w: spec.w,
            segments: spec.segments,
            num_prototypes: spec.num_prototypes,
            objects: vec![SceneObject {
                prototype: 1,
                cell: 0,
                sounding: None,
            }],
        };
        let v = render(&spec, &bank, &script, "v", &mut stream_rng(0, 9));
        assert!(v.audio.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn noiseless_single_sounder_reproduces_audio_prototype() {
        let spec = ScenarioSpec {
            noise_std: 0.0,
            ..Default::default()
        };
        let bank = gen_prototypes(&spec).unwrap();
        let script = SceneScript {
            h: spec.h,
            w: spec.w,
            segments: spec.segments,
            num_prototypes: spec.num_prototypes,
            objects: vec![SceneObject {
                prototype: 2,
                cell: 10,
                sounding: Some((0, spec.segments)),
            }],
        };
        let v = render(&spec, &bank, &script, "v", &mut stream_rng(0, 9));
        for t in 0..spec.segments {
            assert_eq!(v.audio.row_slice(t), &bank.audio[2][..]);
        }
        let map = v.visual_segment(0);
        assert_eq!(map.row_slice(1), &vec![0.0; spec.d][..]);
    }

    #[test]
    fn generated_scripts_are_well_formed() {
        let spec = ScenarioSpec {
            distractor_rate: 0.8,
            ..Default::default()
        };
        let bank = gen_prototypes(&spec).unwrap();
        let mut rng = stream_rng(3, 7);
        for _ in 0..200 {
            let (_, s) = gen_video(&spec, &bank, "v", &mut rng);
            let sounding: Vec<_> = s.objects.iter().filter_map(|o| o.sounding).collect();
            assert!((1..=3).contains(&sounding.len()));
            let mut onsets: Vec<_> = sounding.iter().map(|s| s.0).collect();
            onsets.sort_unstable();
            onsets.dedup();
            assert_eq!(onsets.len(), sounding.len(), "onsets are distinct");
            assert!(sounding.iter().all(|&(a, b)| a < b && b <= spec.segments));
            let mut cells: Vec<_> = s.objects.iter().map(|o| o.cell).collect();
            cells.sort_unstable();
            cells.dedup();
            assert_eq!(cells.len(), s.objects.len());
        }
    }
}
