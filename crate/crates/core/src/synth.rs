//! Synthetic gappy ocean temperature fields.
//!
//! The coastline is a smooth random field plus a basin-shaped bias,
//! thresholded at zero. Over the ocean the temperature is
//!
//! ```text
//! T(i,j,l,k) = T_deep + e^(−λl) · (T_0 + A · sin(2πk/K + φ))
//!            + Σ_r b_r(i) c_r(j) e^(−λl) w_r(k) + noise
//! ```
//!
//! with one full seasonal cycle over the `K` time steps and smooth random
//! profiles `b_r`, `c_r`, `w_r`. Without noise the multilinear rank is at
//! most `(1 + R, 1 + R, 2, 2 + R)` for a background of rank `R`. Every
//! value is rounded to `f32`, so fields survive the on-disk formats exactly.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{GappyTensor4, Mask2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub dims: [usize; 4],
    pub seed: u64,
    /// Amplitude of the random part of the coastline field relative to the
    /// basin bias.
    pub roughness: f64,
    pub seasonal_amplitude: f64,
    pub seasonal_phase: f64,
    /// `λ` in `e^(−λl)`.
    pub depth_decay: f64,
    /// Standard deviation of the white noise.
    pub noise: f64,
    pub background_rank: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            dims: [64, 48, 8, 64],
            seed: 42,
            roughness: 0.6,
            seasonal_amplitude: 4.0,
            seasonal_phase: 0.0,
            depth_decay: 0.35,
            noise: 0.02,
            background_rank: 2,
        }
    }
}

impl SynthSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

/// Deep-water temperature.
const T_DEEP: f64 = 4.0;
/// Surface offset above the deep temperature.
const T_SURFACE: f64 = 14.0;
/// Coarse lattice spacing of the coastline noise, in cells.
const COAST_SCALE: f64 = 8.0;

/// Bilinear interpolation of uniform noise on a coarse lattice.
fn smooth_noise(nx: usize, ny: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let gx = (nx as f64 / COAST_SCALE).ceil() as usize + 2;
    let gy = (ny as f64 / COAST_SCALE).ceil() as usize + 2;
    let lattice: Vec<f64> = (0..gx * gy).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let y = j as f64 / COAST_SCALE;
        let (y0, fy) = (y.floor() as usize, y.fract());
        for i in 0..nx {
            let x = i as f64 / COAST_SCALE;
            let (x0, fx) = (x.floor() as usize, x.fract());
            let at = |a: usize, b: usize| lattice[a + gx * b];
            let v = (1.0 - fx) * (1.0 - fy) * at(x0, y0)
                + fx * (1.0 - fy) * at(x0 + 1, y0)
                + (1.0 - fx) * fy * at(x0, y0 + 1)
                + fx * fy * at(x0 + 1, y0 + 1);
            out.push(v);
        }
    }
    out
}

/// Ocean where the basin bias plus coastline noise is positive.
pub fn synth_mask(nx: usize, ny: usize, roughness: f64, rng: &mut ChaCha8Rng) -> Mask2 {
    let noise = smooth_noise(nx, ny, rng);
    Mask2::from_fn(nx, ny, |i, j| {
        let u = 2.0 * (i as f64 + 0.5) / nx as f64 - 1.0;
        let v = 2.0 * (j as f64 + 0.5) / ny as f64 - 1.0;
        let basin = 0.5 - 0.5 * (u * u + v * v);
        basin + roughness * noise[i + nx * j] > 0.0
    })
}

/// A random smooth profile of length `n`: a few low-frequency cosines.
fn profile(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let waves: Vec<(f64, f64, f64)> = (1..=3)
        .map(|f| {
            (
                f as f64,
                rng.random_range(0.0..TAU),
                rng.random_range(-1.0..1.0) / f as f64,
            )
        })
        .collect();
    (0..n)
        .map(|x| {
            let s = x as f64 / n.max(1) as f64;
            waves
                .iter()
                .map(|&(f, p, a)| a * (TAU * f * s / 2.0 + p).cos())
                .sum()
        })
        .collect()
}

/// Generates the field described by `spec`; identical specs give
/// bit-identical fields.
pub fn synth(spec: &SynthSpec) -> Result<GappyTensor4> {
    let [n, m, l, k] = spec.dims;
    if spec.dims.contains(&0) {
        return Err(Error::ShapeMismatch(format!(
            "degenerate dims {:?}",
            spec.dims
        )));
    }
    let finite = [
        spec.roughness,
        spec.seasonal_amplitude,
        spec.seasonal_phase,
        spec.depth_decay,
        spec.noise,
    ];
    if finite.iter().any(|v| !v.is_finite()) || spec.noise < 0.0 {
        return Err(Error::InvalidArgument(
            "synthetic parameters must be finite, noise >= 0".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mask = synth_mask(n, m, spec.roughness, &mut rng);

    let decay: Vec<f64> = (0..l)
        .map(|d| (-spec.depth_decay * d as f64).exp())
        .collect();
    let season: Vec<f64> = (0..k)
        .map(|t| spec.seasonal_amplitude * (TAU * t as f64 / k as f64 + spec.seasonal_phase).sin())
        .collect();
    let background: Vec<[Vec<f64>; 3]> = (0..spec.background_rank)
        .map(|_| {
            [
                profile(n, &mut rng),
                profile(m, &mut rng),
                profile(k, &mut rng),
            ]
        })
        .collect();

    let mut values = Vec::with_capacity(n * m * l * k);
    for t in 0..k {
        for &e in &decay {
            for j in 0..m {
                for i in 0..n {
                    let bg: f64 = background.iter().map(|[b, c, w]| b[i] * c[j] * w[t]).sum();
                    let mut v = T_DEEP + e * (T_SURFACE + season[t] + 2.0 * bg);
                    if spec.noise > 0.0 {
                        v += spec.noise * rng.sample::<f64, _>(StandardNormal);
                    }
                    values.push(v as f32 as f64);
                }
            }
        }
    }
    GappyTensor4::with_mask(spec.dims, values, mask)
}
