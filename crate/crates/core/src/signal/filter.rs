//! Butterworth bandpass design (bilinear transform) and application as a
//! cascade of second-order sections.

use std::f64::consts::PI;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use super::{MovementSignal, SignalStage};
use crate::error::{Error, Result};

type C64 = Complex<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSpec {
    pub low_cut_hz: f64,
    pub high_cut_hz: f64,
    /// Bandpass order of one pass (pole count); must be even.
    pub order: usize,
    /// Forward-backward filtering; doubles the effective order.
    pub zero_phase: bool,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            low_cut_hz: 0.3,
            high_cut_hz: 3.0,
            order: 4,
            zero_phase: true,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::param("sample_rate", "must be positive"));
        }
        if self.order < 2 || !self.order.is_multiple_of(2) {
            return Err(Error::param(
                "order",
                format!("must be an even integer >= 2, got {}", self.order),
            ));
        }
        if !(self.low_cut_hz > 0.0 && self.low_cut_hz.is_finite()) {
            return Err(Error::param("low_cut_hz", "must be positive"));
        }
        if !(self.high_cut_hz > self.low_cut_hz) {
            return Err(Error::param(
                "high_cut_hz",
                format!(
                    "must exceed low_cut_hz ({} <= {})",
                    self.high_cut_hz, self.low_cut_hz
                ),
            ));
        }
        let nyquist = sample_rate / 2.0;
        if self.high_cut_hz >= nyquist {
            return Err(Error::Cutoff {
                high_hz: self.high_cut_hz,
                nyquist_hz: nyquist,
            });
        }
        Ok(())
    }
}

/// Direct-form II transposed biquad, `a[0] == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2])
    }

    /// Internal state that holds the output steady for a constant unit input.
    fn step_state(&self) -> [f64; 2] {
        let y = self.dc_gain();
        let z1 = self.b[2] - self.a[2] * y;
        let z0 = self.b[1] - self.a[1] * y + z1;
        [z0, z1]
    }

    fn run(&self, x: &mut [f64], mut z: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        for v in x.iter_mut() {
            let input = *v;
            let y = b0 * input + z[0];
            z[0] = b1 * input - a1 * y + z[1];
            z[1] = b2 * input - a2 * y;
            *v = y;
        }
    }

    fn response(&self, z_inv: C64) -> C64 {
        let num = C64::from(self.b[0]) + z_inv * (self.b[1] + z_inv * self.b[2]);
        let den = C64::from(self.a[0]) + z_inv * (self.a[1] + z_inv * self.a[2]);
        num / den
    }
}

/// A designed digital bandpass, ready to apply at one sample rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterKernel {
    pub spec: FilterSpec,
    pub sample_rate: f64,
    pub sections: Vec<Biquad>,
    pub poles: Vec<[f64; 2]>,
}

impl FilterKernel {
    /// Single-pass complex response at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> C64 {
        let w = 2.0 * PI * freq_hz / self.sample_rate;
        let z_inv = C64::from_polar(1.0, -w);
        self.sections
            .iter()
            .fold(C64::from(1.0), |acc, s| acc * s.response(z_inv))
    }

    /// Single-pass magnitude response.
    pub fn gain(&self, freq_hz: f64) -> f64 {
        self.response(freq_hz).norm()
    }

    /// Magnitude of the response as applied: squared when zero-phase.
    pub fn applied_gain(&self, freq_hz: f64) -> f64 {
        let g = self.gain(freq_hz);
        if self.spec.zero_phase {
            g * g
        } else {
            g
        }
    }

    /// Coefficient count of one pass; padding is three times this.
    pub fn effective_length(&self) -> usize {
        2 * self.sections.len() + 1
    }

    pub fn pad_length(&self) -> usize {
        3 * self.effective_length()
    }

    pub fn max_pole_radius(&self) -> f64 {
        self.poles
            .iter()
            .map(|p| p[0].hypot(p[1]))
            .fold(0.0, f64::max)
    }

    fn run_pass(&self, x: &mut [f64]) {
        let x0 = x[0];
        let mut scale = x0;
        for s in &self.sections {
            let zi = s.step_state();
            s.run(x, [zi[0] * scale, zi[1] * scale]);
            scale *= s.dc_gain();
        }
    }

    /// Filters a raw sample slice, returning a new vector of equal length.
    pub fn filter(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pad = self.pad_length();
        if self.spec.zero_phase {
            if x.len() <= pad {
                return Err(Error::Length {
                    needed: pad,
                    found: x.len(),
                });
            }
            let n = x.len();
            let mut ext = Vec::with_capacity(n + 2 * pad);
            ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
            ext.extend_from_slice(x);
            ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
            self.run_pass(&mut ext);
            ext.reverse();
            self.run_pass(&mut ext);
            ext.reverse();
            Ok(ext[pad..pad + n].to_vec())
        } else {
            if x.is_empty() {
                return Err(Error::Length { needed: 0, found: 0 });
            }
            let mut y = x.to_vec();
            self.run_pass(&mut y);
            Ok(y)
        }
    }
}

/// Designs a Butterworth bandpass of `spec.order` poles.
///
/// The analog prototype of order `order / 2` is shifted to a bandpass around
/// the prewarped cutoffs and mapped to the z-plane with the bilinear
/// transform, so the −3 dB points land exactly on the requested cutoffs.
pub fn design_bandpass(spec: &FilterSpec, sample_rate: f64) -> Result<FilterKernel> {
    spec.validate(sample_rate)?;
    let n = spec.order / 2;
    let fs2 = 2.0 * sample_rate;
    let warp = |f: f64| fs2 * (PI * f / sample_rate).tan();
    let wl = warp(spec.low_cut_hz);
    let wh = warp(spec.high_cut_hz);
    let bw = wh - wl;
    let w0 = (wl * wh).sqrt();

    let mut analog_poles = Vec::with_capacity(2 * n);
    for k in 0..n {
        let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
        let p = C64::from_polar(1.0, theta) * (bw / 2.0);
        let root = (p * p - w0 * w0).sqrt();
        analog_poles.push(p + root);
        analog_poles.push(p - root);
    }
    // n zeros at s = 0, n at infinity; gain bw^n.
    let mut gain = C64::from(bw.powi(n as i32) * fs2.powi(n as i32));
    let digital: Vec<C64> = analog_poles
        .iter()
        .map(|&s| {
            gain /= C64::from(fs2) - s;
            (C64::from(fs2) + s) / (C64::from(fs2) - s)
        })
        .collect();
    let gain = gain.re;

    let sections = pair_poles(&digital)
        .into_iter()
        .enumerate()
        .map(|(i, (p, q))| {
            let a1 = -(p + q).re;
            let a2 = (p * q).re;
            // One zero at +1 and one at −1 per section.
            let g = if i == 0 { gain } else { 1.0 };
            Biquad {
                b: [g, 0.0, -g],
                a: [1.0, a1, a2],
            }
        })
        .collect::<Vec<_>>();

    let kernel = FilterKernel {
        spec: *spec,
        sample_rate,
        sections,
        poles: digital.iter().map(|p| [p.re, p.im]).collect(),
    };
    if kernel.max_pole_radius() >= 1.0 || kernel.sections.iter().flat_map(|s| s.b.iter().chain(&s.a)).any(|v| !v.is_finite()) {
        return Err(Error::param(
            "order",
            "design is numerically unstable at this sample rate",
        ));
    }
    Ok(kernel)
}

/// Groups poles into conjugate pairs; real poles are paired with each other.
fn pair_poles(poles: &[C64]) -> Vec<(C64, C64)> {
    const IM_TOL: f64 = 1e-12;
    let mut complex: Vec<C64> = poles.iter().copied().filter(|p| p.im > IM_TOL).collect();
    complex.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    let mut real: Vec<C64> = poles
        .iter()
        .copied()
        .filter(|p| p.im.abs() <= IM_TOL)
        .map(|p| C64::from(p.re))
        .collect();
    real.sort_by(|a, b| b.re.total_cmp(&a.re));
    let mut pairs: Vec<(C64, C64)> = complex.into_iter().map(|p| (p, p.conj())).collect();
    pairs.extend(real.chunks(2).map(|c| (c[0], c[1])));
    pairs
}

/// Applies the kernel; zero-phase kernels run forward then backward over an
/// odd-reflection-padded copy.
pub fn apply_bandpass(signal: &MovementSignal, kernel: &FilterKernel) -> Result<MovementSignal> {
    if signal.stage != SignalStage::Raw {
        return Err(Error::Stage {
            expected: "raw",
            found: signal.stage.name(),
        });
    }
    if (signal.sample_rate - kernel.sample_rate).abs() > 1e-9 * kernel.sample_rate {
        return Err(Error::param(
            "sample_rate",
            format!(
                "kernel designed for {} Hz, signal sampled at {} Hz",
                kernel.sample_rate, signal.sample_rate
            ),
        ));
    }
    let samples = kernel.filter(&signal.samples)?;
    Ok(MovementSignal {
        samples,
        stage: SignalStage::Filtered,
        filter_spec: Some(kernel.spec),
        ..signal.clone()
    })
}
