//! Seeded synthetic hyperspectral scenes.
//!
//! Desk-scale experiments need ground-truth cubes with correlated spectra and
//! spatial structure. A scene here is a low-rank mixture: a few smooth random
//! abundance maps (sums of Gaussian blobs) combined through random smooth
//! endmember spectra, normalized into [0, 1].

use crate::cube::HsiCube;
use crate::error::Result;
use crate::rng::Rng;

/// Number of endmembers mixed into a synthetic scene.
const SYNTH_RANK: usize = 4;

/// Generate a synthetic scene of the given shape. Same seed, same scene.
pub fn synthetic_cube(bands: usize, height: usize, width: usize, rng: &mut Rng) -> Result<HsiCube> {
    let rank = SYNTH_RANK.min(bands);
    // Smooth endmember spectra: random walk, low-pass filtered, positive.
    let mut spectra = vec![0.0; rank * bands];
    for r in 0..rank {
        let mut v = rng.uniform();
        for b in 0..bands {
            v += 0.35 * rng.normal();
            spectra[r * bands + b] = v;
        }
        // Three smoothing passes.
        for _ in 0..3 {
            let row = &mut spectra[r * bands..(r + 1) * bands];
            let prev = row.to_vec();
            for b in 0..bands {
                let lo = b.saturating_sub(1);
                let hi = (b + 1).min(bands - 1);
                row[b] = (prev[lo] + prev[b] + prev[hi]) / 3.0;
            }
        }
        let min = spectra[r * bands..(r + 1) * bands].iter().cloned().fold(f64::INFINITY, f64::min);
        for b in 0..bands {
            spectra[r * bands + b] += 0.1 - min;
        }
    }

    // Abundance maps: sums of random Gaussian blobs.
    let blobs = 6;
    let mut maps = vec![0.0; rank * height * width];
    for r in 0..rank {
        for _ in 0..blobs {
            let cy = rng.range(0.0, height as f64);
            let cx = rng.range(0.0, width as f64);
            let sy = rng.range(height as f64 / 12.0, height as f64 / 3.0);
            let sx = rng.range(width as f64 / 12.0, width as f64 / 3.0);
            let amp = rng.range(0.2, 1.0);
            let map = &mut maps[r * height * width..(r + 1) * height * width];
            for y in 0..height {
                for x in 0..width {
                    let dy = (y as f64 - cy) / sy;
                    let dx = (x as f64 - cx) / sx;
                    map[y * width + x] += amp * (-0.5 * (dy * dy + dx * dx)).exp();
                }
            }
        }
    }

    let mut data = vec![0.0; bands * height * width];
    for b in 0..bands {
        for px in 0..height * width {
            let mut acc = 0.0;
            for r in 0..rank {
                acc += spectra[r * bands + b] * maps[r * height * width + px];
            }
            data[b * height * width + px] = acc;
        }
    }
    let max = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(1e-12);
    let min = data.iter().cloned().fold(f64::INFINITY, f64::min);
    for v in &mut data {
        *v = 0.05 + 0.9 * (*v - min) / (max - min);
    }
    HsiCube::from_vec(bands, height, width, data)
}
