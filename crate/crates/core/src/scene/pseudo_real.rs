//! The shifted "pseudo-real" domain.
//!
//! Sim frames pass through a fixed sensor-artifact pipeline whose parameters
//! stay private to this module. Consumers only ever see the distorted depth
//! (masks are blanked), so anything downstream, the search in particular,
//! has to discover the domain gap from errors alone.

use crate::depth::{DepthFrame, Domain, LabeledFrame};
use crate::rng::Rng;
use crate::transforms::kernels::dilate;

/// Parameters of the sensor-artifact pipeline.
///
/// The profile used for the pseudo-real domain is not reachable from outside
/// this module:
///
/// ```compile_fail
/// let _ = augsearch::scene::HIDDEN_PROFILE;
/// ```
///
/// ```compile_fail
/// let _ = augsearch::scene::pseudo_real::HIDDEN_PROFILE;
/// ```
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistortionProfile {
    /// Pixels within this Chebyshev radius of a depth edge read as "no
    /// return" (1.0). Zero disables the stage.
    pub edge_shadow_radius: usize,
    /// Uniform quantization to `2^bits` levels; zero disables.
    pub quantization_bits: u32,
    /// Peak amplitude of a smooth additive bias field.
    pub bias_amplitude: f64,
    pub gaussian_sigma: f64,
    pub dead_pixel_rate: f64,
}

impl DistortionProfile {
    pub const NONE: DistortionProfile = DistortionProfile {
        edge_shadow_radius: 0,
        quantization_bits: 0,
        bias_amplitude: 0.0,
        gaussian_sigma: 0.0,
        dead_pixel_rate: 0.0,
    };
}

const HIDDEN_PROFILE: DistortionProfile = DistortionProfile {
    edge_shadow_radius: 2,
    quantization_bits: 11,
    bias_amplitude: 0.02,
    gaussian_sigma: 0.01,
    dead_pixel_rate: 0.005,
};

/// Normalized depth step between 4-neighbors that counts as an edge.
const EDGE_THRESHOLD: f32 = 0.05;

/// What a consumer of the given domain sees for a rendered frame.
///
/// Sim frames pass through unchanged; pseudo-real frames get the hidden
/// distortion and a blank mask.
pub fn observe(frame: &DepthFrame, domain: Domain, rng: &mut Rng) -> DepthFrame {
    match domain {
        Domain::Sim => frame.clone(),
        Domain::PseudoReal => distort_frame(frame, &HIDDEN_PROFILE, rng).without_mask(),
    }
}

/// Applies, in order: edge shadows, quantization, smooth bias, Gaussian
/// noise, dead pixels. Pixels reading exactly 1.0 ("no return") are left
/// alone by the quantization, bias and noise stages.
///
/// Draw order: 16 bias grid values (row-major, only if the amplitude is
/// non-zero), one normal per pixel (only if sigma is non-zero), one uniform
/// per pixel (only if the dead-pixel rate is non-zero).
pub fn distort_pseudo_real(
    item: &LabeledFrame,
    profile: &DistortionProfile,
    rng: &mut Rng,
) -> LabeledFrame {
    LabeledFrame {
        frame: distort_frame(&item.frame, profile, rng),
        cube_position: item.cube_position,
    }
}

fn distort_frame(frame: &DepthFrame, p: &DistortionProfile, rng: &mut Rng) -> DepthFrame {
    let (w, h) = (frame.width(), frame.height());
    let mut d: Vec<f64> = frame.depth().iter().map(|&x| f64::from(x)).collect();

    if p.edge_shadow_radius > 0 {
        let src = frame.depth();
        let mut edge = vec![false; w * h];
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                if c + 1 < w && (src[i] - src[i + 1]).abs() > EDGE_THRESHOLD {
                    edge[i] = true;
                    edge[i + 1] = true;
                }
                if r + 1 < h && (src[i] - src[i + w]).abs() > EDGE_THRESHOLD {
                    edge[i] = true;
                    edge[i + w] = true;
                }
            }
        }
        // Radius 1 means the edge pixels themselves.
        let shadow = dilate(&edge, w, h, p.edge_shadow_radius - 1);
        for (x, s) in d.iter_mut().zip(shadow) {
            if s {
                *x = 1.0;
            }
        }
    }

    if p.quantization_bits > 0 {
        let levels = ((1u64 << p.quantization_bits) - 1) as f64;
        for x in d.iter_mut().filter(|x| **x < 1.0) {
            *x = (*x * levels).round() / levels;
        }
    }

    if p.bias_amplitude != 0.0 {
        let grid: Vec<f64> = (0..16)
            .map(|_| rng.range(-p.bias_amplitude, p.bias_amplitude))
            .collect();
        for r in 0..h {
            let gy = if h > 1 {
                3.0 * r as f64 / (h - 1) as f64
            } else {
                0.0
            };
            let (y0, fy) = ((gy.floor() as usize).min(2), gy - (gy.floor()).min(2.0));
            for c in 0..w {
                let i = r * w + c;
                if d[i] >= 1.0 {
                    continue;
                }
                let gx = if w > 1 {
                    3.0 * c as f64 / (w - 1) as f64
                } else {
                    0.0
                };
                let (x0, fx) = ((gx.floor() as usize).min(2), gx - (gx.floor()).min(2.0));
                let g = |yy: usize, xx: usize| grid[yy * 4 + xx];
                let top = g(y0, x0) * (1.0 - fx) + g(y0, x0 + 1) * fx;
                let bot = g(y0 + 1, x0) * (1.0 - fx) + g(y0 + 1, x0 + 1) * fx;
                d[i] += top * (1.0 - fy) + bot * fy;
            }
        }
    }

    if p.gaussian_sigma != 0.0 {
        for x in d.iter_mut() {
            let n = rng.normal();
            if *x < 1.0 {
                *x += p.gaussian_sigma * n;
            }
        }
    }

    if p.dead_pixel_rate != 0.0 {
        for x in d.iter_mut() {
            if rng.uniform() < p.dead_pixel_rate {
                *x = 1.0;
            }
        }
    }

    DepthFrame::from_unclamped(w, h, d, frame.mask().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth::SegClass;

    fn labeled(frame: DepthFrame) -> LabeledFrame {
        LabeledFrame {
            frame,
            cube_position: [0.1, 0.2, 0.03],
        }
    }

    #[test]
    fn zero_profile_is_identity() {
        let f = labeled(crate::test_support::random_frame(16, 12, 4));
        let out = distort_pseudo_real(&f, &DistortionProfile::NONE, &mut Rng::new(0));
        assert_eq!(out, f);
    }

    #[test]
    fn eleven_bit_quantization() {
        let p = DistortionProfile {
            quantization_bits: 11,
            ..DistortionProfile::NONE
        };
        let f = labeled(DepthFrame::filled(4, 4, 0.5, SegClass::Table));
        let out = distort_pseudo_real(&f, &p, &mut Rng::new(0));
        // 0.5 * 2047 = 1023.5 rounds to level 1024.
        let expected = (1024.0f64 / 2047.0) as f32;
        assert!(out.frame.depth().iter().all(|&d| d == expected));
    }

    #[test]
    fn dead_pixel_fraction() {
        let p = DistortionProfile {
            dead_pixel_rate: 0.01,
            ..DistortionProfile::NONE
        };
        let f = labeled(DepthFrame::filled(200, 200, 0.4, SegClass::Table));
        let out = distort_pseudo_real(&f, &p, &mut Rng::new(1));
        let dead = out.frame.depth().iter().filter(|&&d| d == 1.0).count();
        // n = 40000, p = 0.01: mean 400, sd ~19.9; 4 sd bounds.
        assert!((320..=480).contains(&dead), "{dead}");
    }

    #[test]
    fn edge_shadow_covers_step() {
        let mut depth = vec![0.3f32; 12 * 3];
        for r in 0..3 {
            for c in 6..12 {
                depth[r * 12 + c] = 0.6;
            }
        }
        let f = labeled(DepthFrame::new(12, 3, depth, vec![SegClass::Table; 36]).unwrap());
        let p = DistortionProfile {
            edge_shadow_radius: 2,
            ..DistortionProfile::NONE
        };
        let out = distort_pseudo_real(&f, &p, &mut Rng::new(0));
        for c in 0..12 {
            let shadowed = (4..=7).contains(&c);
            assert_eq!(out.frame.depth_at(1, c) == 1.0, shadowed, "col {c}");
        }
    }

    #[test]
    fn bias_is_smooth_and_bounded() {
        let p = DistortionProfile {
            bias_amplitude: 0.02,
            ..DistortionProfile::NONE
        };
        let f = labeled(DepthFrame::filled(32, 32, 0.5, SegClass::Table));
        let out = distort_pseudo_real(&f, &p, &mut Rng::new(3));
        let d = out.frame.depth();
        assert!(d.iter().all(|&x| (x - 0.5).abs() <= 0.0201));
        for r in 0..32 {
            for c in 0..31 {
                assert!((d[r * 32 + c] - d[r * 32 + c + 1]).abs() < 0.005);
            }
        }
    }

    #[test]
    fn no_return_pixels_stay_far() {
        let p = DistortionProfile {
            quantization_bits: 8,
            bias_amplitude: 0.05,
            gaussian_sigma: 0.05,
            ..DistortionProfile::NONE
        };
        let f = labeled(DepthFrame::filled(8, 8, 1.0, SegClass::Background));
        let out = distort_pseudo_real(&f, &p, &mut Rng::new(3));
        assert!(out.frame.depth().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn sim_observation_is_untouched() {
        let f = crate::test_support::random_frame(8, 8, 2);
        assert_eq!(observe(&f, Domain::Sim, &mut Rng::new(0)), f);
        let pr = observe(&f, Domain::PseudoReal, &mut Rng::new(0));
        assert!(pr.mask().iter().all(|c| *c == SegClass::Background));
    }
}
