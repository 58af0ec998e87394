//! Synthetic gaze datasets with known structure, for tests, benchmarks and
//! demos.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::gaze::{ClassKey, Dataset, GazePoint, GazeRecording};
use crate::rng;

/// Recordings that each visit every center once (in a random order),
/// dropping `points_per_blob` Gaussian samples of spread `sigma` at each.
pub fn gaussian_blobs(
    centers: &[[f64; 2]],
    sigma: f64,
    points_per_blob: usize,
    recordings: usize,
    seed: u64,
) -> Dataset {
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let recs = (0..recordings)
        .map(|r| {
            let mut g = rng::stream(seed, r as u64);
            let mut order: Vec<usize> = (0..centers.len()).collect();
            order.shuffle(&mut g);
            let points = order
                .iter()
                .flat_map(|&c| {
                    let [cx, cy] = centers[c];
                    (0..points_per_blob)
                        .map(|_| GazePoint::new(cx + normal.sample(&mut g), cy + normal.sample(&mut g)))
                        .collect::<Vec<_>>()
                })
                .collect();
            GazeRecording::new(points, format!("blob{r}")).expect("non-empty").with_labels("blobs", "blobs")
        })
        .collect();
    Dataset::new(recs, ClassKey::Participant)
}

/// Fixation layout of class `class`: three well separated centers. The
/// first four classes use fixed, mutually distinct layouts.
pub fn class_layout(class: usize, seed: u64) -> Vec<[f64; 2]> {
    const FIXED: [[[f64; 2]; 3]; 4] = [
        [[0.2, 0.2], [0.8, 0.2], [0.5, 0.8]],
        [[0.2, 0.8], [0.8, 0.8], [0.5, 0.2]],
        [[0.15, 0.5], [0.5, 0.5], [0.85, 0.5]],
        [[0.5, 0.15], [0.3, 0.5], [0.5, 0.85]],
    ];
    if let Some(layout) = FIXED.get(class) {
        return layout.to_vec();
    }
    let mut g = rng::stream(rng::derive_seed(seed, &[class as u64]), 0);
    (0..3).map(|_| [g.gen_range(0.1..0.9), g.gen_range(0.1..0.9)]).collect()
}

/// Multi-class dataset where each class (participant label `c<i>`) looks at
/// its own fixation layout. Every recording makes 6 to 9 fixations on the
/// class's centers (each center at least once), 8 to 14 points per
/// fixation with spread `sigma`, and the layout is jittered per recording.
pub fn class_layout_dataset(classes: usize, per_class: usize, sigma: f64, seed: u64) -> Dataset {
    let spread = Normal::new(0.0, sigma).expect("finite sigma");
    let jitter = Normal::new(0.0, 0.02).expect("finite jitter");
    let mut recs = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        let layout = class_layout(c, seed);
        for r in 0..per_class {
            let mut g = rng::stream(rng::derive_seed(seed, &[c as u64, r as u64]), 0);
            let centers: Vec<[f64; 2]> =
                layout.iter().map(|&[x, y]| [x + jitter.sample(&mut g), y + jitter.sample(&mut g)]).collect();
            let mut visits: Vec<usize> = (0..centers.len()).collect();
            let extra = g.gen_range(3..=6);
            visits.extend((0..extra).map(|_| g.gen_range(0..centers.len())));
            visits.shuffle(&mut g);
            let mut points = Vec::new();
            for &v in &visits {
                let [cx, cy] = centers[v];
                for _ in 0..g.gen_range(8..=14) {
                    let x = (cx + spread.sample(&mut g)).clamp(0.0, 1.0);
                    let y = (cy + spread.sample(&mut g)).clamp(0.0, 1.0);
                    points.push(GazePoint::new(x, y));
                }
            }
            let rec = GazeRecording::new(points, format!("c{c}r{r}"))
                .expect("non-empty")
                .with_labels("layout", format!("c{c}"));
            recs.push(rec);
        }
    }
    Dataset::new(recs, ClassKey::Participant)
}
