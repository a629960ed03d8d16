use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::CoilSensitivities;
use crate::error::{Error, Result};
use crate::numerics::{ComplexImage, Tensor};

/// Synthetic anatomy families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Brainlike,
    Tumorlike,
    Kneelike,
    Liverlike,
}

impl Domain {
    pub const ALL: [Domain; 4] = [
        Domain::Brainlike,
        Domain::Tumorlike,
        Domain::Kneelike,
        Domain::Liverlike,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Brainlike => "brainlike",
            Domain::Tumorlike => "tumorlike",
            Domain::Kneelike => "kneelike",
            Domain::Liverlike => "liverlike",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Domain::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown domain {s:?} (expected brainlike, tumorlike, kneelike or liverlike)"
                ))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub domain: Domain,
    /// Height and width (power of two).
    pub size: usize,
    pub coils: usize,
    pub seed: u64,
}

/// One generated sample. `roi` marks lesion pixels for tumorlike phantoms.
#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub image: ComplexImage,
    pub sensitivities: CoilSensitivities,
    pub roi: Option<Tensor>,
}

pub fn gen_phantom(spec: &PhantomSpec) -> Result<(ComplexImage, CoilSensitivities)> {
    let p = gen_phantom_full(spec)?;
    Ok((p.image, p.sensitivities))
}

/// Phantom seeded by `spec.seed`; the object, phase and coil maps use
/// separate ChaCha streams so changing one never perturbs the others.
pub fn gen_phantom_full(spec: &PhantomSpec) -> Result<Phantom> {
    let n = spec.size;
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::Dimension(format!(
            "phantom size must be a power of two ≥ 2, got {n}"
        )));
    }
    if spec.coils == 0 {
        return Err(Error::Config("phantom needs at least one coil".into()));
    }
    let stream = |k: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(spec.seed);
        r.set_stream(k);
        r
    };
    let mut rng = stream(1);
    let grid = Grid { n };
    let (mut mag, roi) = match spec.domain {
        Domain::Brainlike => (brain(&grid, &mut rng), None),
        Domain::Tumorlike => {
            let mut m = brain(&grid, &mut rng);
            let roi = add_tumors(&grid, &mut m, &mut rng);
            (m, Some(roi))
        }
        Domain::Kneelike => (knee(&grid, &mut rng), None),
        Domain::Liverlike => (liver(&grid, &mut rng), None),
    };
    let peak = mag.iter().cloned().fold(0.0, f64::max);
    if peak > 0.0 {
        mag.iter_mut()
            .for_each(|v| *v = (*v / peak).clamp(0.0, 1.0));
    }
    let phase = smooth_field(&grid, &mut stream(2), 3, 1.2);
    let image = ComplexImage::from_fn(n, n, |r, c| {
        let (m, p) = (mag[r * n + c], phase[r * n + c]);
        (m * p.cos(), m * p.sin())
    });
    let sensitivities = coil_maps(&grid, spec.coils, &mut stream(3))?;
    Ok(Phantom {
        image,
        sensitivities,
        roi,
    })
}

struct Grid {
    n: usize,
}

impl Grid {
    /// Normalized coordinates in [-1, 1).
    fn uv(&self, i: usize) -> (f64, f64) {
        let n = self.n as f64;
        let (r, c) = (i / self.n, i % self.n);
        (2.0 * c as f64 / n - 1.0, 2.0 * r as f64 / n - 1.0)
    }

    fn len(&self) -> usize {
        self.n * self.n
    }

    fn paint(&self, img: &mut [f64], f: impl Fn(f64, f64) -> Option<f64>) {
        for (i, v) in img.iter_mut().enumerate() {
            let (x, y) = self.uv(i);
            if let Some(val) = f(x, y) {
                *v = val;
            }
        }
    }
}

/// Inside test for a rotated ellipse; returns the normalized radius².
fn ellipse(x: f64, y: f64, cx: f64, cy: f64, a: f64, b: f64, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let (dx, dy) = (x - cx, y - cy);
    let (u, v) = (c * dx + s * dy, -s * dx + c * dy);
    (u / a).powi(2) + (v / b).powi(2)
}

/// Sum of `terms` random low-frequency cosines with total amplitude `amp`.
fn smooth_field(g: &Grid, rng: &mut ChaCha8Rng, terms: usize, amp: f64) -> Vec<f64> {
    let waves: Vec<(f64, f64, f64, f64)> = (0..terms)
        .map(|_| {
            (
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(0.0..TAU),
                rng.gen_range(0.3..1.0) * amp / terms as f64,
            )
        })
        .collect();
    (0..g.len())
        .map(|i| {
            let (x, y) = g.uv(i);
            waves
                .iter()
                .map(|(kx, ky, ph, a)| a * (PI * (kx * x + ky * y) + ph).cos())
                .sum()
        })
        .collect()
}

fn brain(g: &Grid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut img = vec![0.0; g.len()];
    let (a, b) = (rng.gen_range(0.68..0.8), rng.gen_range(0.78..0.9));
    let tilt = rng.gen_range(-0.15..0.15);
    let skull = rng.gen_range(0.85..1.0);
    g.paint(&mut img, |x, y| {
        (ellipse(x, y, 0.0, 0.0, a, b, tilt) <= 1.0).then_some(skull)
    });
    let (ia, ib) = (a - 0.07, b - 0.07);
    let white = rng.gen_range(0.45..0.6);
    g.paint(&mut img, |x, y| {
        (ellipse(x, y, 0.0, 0.0, ia, ib, tilt) <= 1.0).then_some(white)
    });
    let gray = rng.gen_range(0.65..0.8);
    for _ in 0..rng.gen_range(3..6) {
        let (cx, cy) = (rng.gen_range(-0.4..0.4), rng.gen_range(-0.5..0.5));
        let (ea, eb, t) = (
            rng.gen_range(0.1..0.25),
            rng.gen_range(0.05..0.15),
            rng.gen_range(0.0..PI),
        );
        g.paint(&mut img, |x, y| {
            (ellipse(x, y, cx, cy, ea, eb, t) <= 1.0
                && ellipse(x, y, 0.0, 0.0, ia, ib, tilt) <= 1.0)
                .then_some(gray)
        });
    }
    let csf = rng.gen_range(0.1..0.2);
    let off = rng.gen_range(0.06..0.12);
    let (va, vb) = (rng.gen_range(0.05..0.09), rng.gen_range(0.18..0.28));
    for side in [-1.0, 1.0] {
        let t = side * rng.gen_range(0.1..0.35);
        g.paint(&mut img, |x, y| {
            (ellipse(x, y, side * off, -0.05, va, vb, t) <= 1.0).then_some(csf)
        });
    }
    apply_bias(g, &mut img, rng, 0.15);
    img
}

/// Multiplicative smooth bias `1 + field`.
fn apply_bias(g: &Grid, img: &mut [f64], rng: &mut ChaCha8Rng, amp: f64) {
    let bias = smooth_field(g, rng, 2, amp);
    for (v, b) in img.iter_mut().zip(bias) {
        *v *= 1.0 + b;
    }
}

/// Adds 1–3 bright Gaussian blobs inside the brain; returns the lesion mask.
fn add_tumors(g: &Grid, img: &mut [f64], rng: &mut ChaCha8Rng) -> Tensor {
    let mut roi = vec![0.0; g.len()];
    for _ in 0..rng.gen_range(1..=3) {
        let (cx, cy) = (rng.gen_range(-0.4..0.4), rng.gen_range(-0.45..0.45));
        let radius: f64 = rng.gen_range(0.07..0.16);
        let peak = rng.gen_range(0.85..1.1);
        for (i, v) in img.iter_mut().enumerate() {
            let (x, y) = g.uv(i);
            let d2 = ((x - cx).powi(2) + (y - cy).powi(2)) / radius.powi(2);
            if d2 <= 2.5 && *v > 0.0 {
                let w = (-d2).exp();
                *v = *v * (1.0 - w) + peak * w;
                if d2 <= 1.0 {
                    roi[i] = 1.0;
                }
            }
        }
    }
    Tensor::new(&[g.n, g.n], roi).unwrap()
}

fn knee(g: &Grid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut img = vec![0.0; g.len()];
    let (a, b) = (rng.gen_range(0.7..0.9), rng.gen_range(0.8..0.95));
    let angle: f64 = rng.gen_range(-0.5..0.5);
    let period = rng.gen_range(0.12..0.22);
    let (lo, hi) = (rng.gen_range(0.2..0.35), rng.gen_range(0.55..0.8));
    g.paint(&mut img, |x, y| {
        (ellipse(x, y, 0.0, 0.0, a, b, 0.0) <= 1.0).then(|| {
            let t = x * angle.cos() + y * angle.sin();
            let s = (TAU * t / period).sin();
            lo + (hi - lo) * (0.5 + 0.5 * s.signum() * s.abs().sqrt())
        })
    });
    for _ in 0..rng.gen_range(2..4) {
        let (cx, cy) = (rng.gen_range(-0.45..0.45), rng.gen_range(-0.5..0.5));
        let r = rng.gen_range(0.12..0.25);
        let (rim, marrow) = (rng.gen_range(0.05..0.12), rng.gen_range(0.75..1.0));
        g.paint(&mut img, |x, y| {
            let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
            if d <= r - 0.05 {
                Some(marrow)
            } else if d <= r {
                Some(rim)
            } else {
                None
            }
        });
    }
    apply_bias(g, &mut img, rng, 0.1);
    img
}

fn liver(g: &Grid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut img = vec![0.0; g.len()];
    let (cx, cy) = (rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
    let (a, b, t) = (
        rng.gen_range(0.6..0.85),
        rng.gen_range(0.5..0.75),
        rng.gen_range(-0.4..0.4),
    );
    let base = rng.gen_range(0.35..0.45);
    let texture = smooth_field(g, rng, 4, 0.06);
    for (i, v) in img.iter_mut().enumerate() {
        let (x, y) = g.uv(i);
        let e = ellipse(x, y, cx, cy, a, b, t);
        let lobe = ellipse(x, y, cx + 0.35 * a, cy - 0.3 * b, 0.45 * a, 0.5 * b, t);
        if e <= 1.0 || lobe <= 1.0 {
            *v = base + texture[i];
        }
    }
    let width = 1.2 / g.n as f64;
    for _ in 0..rng.gen_range(3..6) {
        let (x0, slope) = (rng.gen_range(-0.6..0.6), rng.gen_range(-0.8..0.8));
        let (amp, freq, ph) = (
            rng.gen_range(0.05..0.2),
            rng.gen_range(1.0..3.0),
            rng.gen_range(0.0..TAU),
        );
        let bright = rng.gen_range(0.8..1.0);
        for (i, v) in img.iter_mut().enumerate() {
            if *v == 0.0 {
                continue;
            }
            let (x, y) = g.uv(i);
            let curve = x0 + slope * y + amp * (PI * freq * y + ph).sin();
            let d = (x - curve).abs();
            if d < 3.0 * width {
                let w = (-(d / width).powi(2)).exp();
                *v = *v * (1.0 - w) + bright * w;
            }
        }
    }
    img
}

/// Gaussian receive profiles centred around the field of view, each with its own
/// linear phase ramp, normalized to `Σ_c |S_c|² = 1`.
fn coil_maps(g: &Grid, coils: usize, rng: &mut ChaCha8Rng) -> Result<CoilSensitivities> {
    let offset = rng.gen_range(0.0..TAU);
    let maps = (0..coils)
        .map(|k| {
            let ang = offset + TAU * k as f64 / coils as f64;
            let radius = if coils == 1 {
                0.0
            } else {
                rng.gen_range(1.0..1.3)
            };
            let (cx, cy) = (radius * ang.cos(), radius * ang.sin());
            let width = rng.gen_range(0.9..1.3);
            let (p0, px, py) = (
                rng.gen_range(0.0..TAU),
                rng.gen_range(-0.8..0.8),
                rng.gen_range(-0.8..0.8),
            );
            let n = g.n;
            ComplexImage::from_fn(n, n, |r, c| {
                let (x, y) = g.uv(r * n + c);
                let m = (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * width * width)).exp();
                let p = p0 + px * x + py * y;
                (m * p.cos(), m * p.sin())
            })
        })
        .collect();
    CoilSensitivities::normalized(maps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(domain: Domain, seed: u64) -> PhantomSpec {
        PhantomSpec {
            domain,
            size: 64,
            coils: 4,
            seed,
        }
    }

    #[test]
    fn deterministic_and_normalized() {
        for d in Domain::ALL {
            for seed in 0..5 {
                let a = gen_phantom_full(&spec(d, seed)).unwrap();
                assert_eq!(a, gen_phantom_full(&spec(d, seed)).unwrap());
                let mag = a.image.magnitude();
                let max = mag.data().iter().cloned().fold(0.0, f64::max);
                assert!(mag.data().iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
                assert!(max >= 0.5, "{d} seed {seed}: max {max}");
                assert!(a.sensitivities.normalization_error(|_| true) <= 1e-12);
                assert_eq!(a.roi.is_some(), d == Domain::Tumorlike);
            }
        }
    }

    #[test]
    fn images_are_complex_and_seeds_differ() {
        let a = gen_phantom_full(&spec(Domain::Brainlike, 1)).unwrap();
        assert!(a.image.im.data().iter().any(|v| v.abs() > 0.05));
        let b = gen_phantom_full(&spec(Domain::Brainlike, 2)).unwrap();
        assert_ne!(a.image, b.image);
        let roi = gen_phantom_full(&spec(Domain::Tumorlike, 3))
            .unwrap()
            .roi
            .unwrap();
        assert!(roi.sum() >= 4.0);
    }

    #[test]
    fn domain_tags_parse() {
        for d in Domain::ALL {
            assert_eq!(d.as_str().parse::<Domain>().unwrap(), d);
        }
        assert!("spleenlike".parse::<Domain>().is_err());
        assert!(gen_phantom(&PhantomSpec {
            domain: Domain::Kneelike,
            size: 48,
            coils: 2,
            seed: 0
        })
        .is_err());
    }

    fn histogram(t: &Tensor) -> [f64; 32] {
        let mut h = [0.0; 32];
        for &v in t.data() {
            h[((v * 32.0) as usize).min(31)] += 1.0 / t.len() as f64;
        }
        h
    }

    fn mean_distance(a: &[[f64; 32]], b: &[[f64; 32]], same: bool) -> f64 {
        let mut acc = 0.0;
        let mut n = 0;
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                if same && i >= j {
                    continue;
                }
                acc += x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum::<f64>() / 32.0;
                n += 1;
            }
        }
        acc / n as f64
    }

    #[test]
    fn brain_and_knee_histograms_differ_more_than_within() {
        let hists = |d| -> Vec<[f64; 32]> {
            (0..50)
                .map(|s| histogram(&gen_phantom(&spec(d, 1000 + s)).unwrap().0.magnitude()))
                .collect()
        };
        let brain = hists(Domain::Brainlike);
        let knee = hists(Domain::Kneelike);
        let cross = mean_distance(&brain, &knee, false);
        let within = mean_distance(&brain, &brain, true).max(mean_distance(&knee, &knee, true));
        assert!(cross > within, "cross {cross} within {within}");
    }
}
