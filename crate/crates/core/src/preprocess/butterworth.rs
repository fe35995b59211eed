//! Digital Butterworth design (bilinear transform with prewarping) as cascaded
//! second-order sections, plus zero-phase forward-backward application.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// One second-order section in transposed direct form II. `a[0]` is always 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z: Complex64) -> Complex64 {
        let zi = z.inv();
        let num = self.b[0] + self.b[1] * zi + self.b[2] * zi * zi;
        let den = self.a[0] + self.a[1] * zi + self.a[2] * zi * zi;
        num / den
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2])
    }

    fn from_roots(zeros: [Complex64; 2], poles: [Complex64; 2]) -> Biquad {
        // (x - r1)(x - r2) = x^2 - (r1 + r2) x + r1 r2
        let b = [1.0, -(zeros[0] + zeros[1]).re, (zeros[0] * zeros[1]).re];
        let a = [1.0, -(poles[0] + poles[1]).re, (poles[0] * poles[1]).re];
        Biquad { b, a }
    }
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    pub sections: Vec<Biquad>,
    /// Transfer-function order (number of poles).
    pub order: usize,
}

fn bilinear(s: Complex64, fs: f64) -> Complex64 {
    let k = Complex64::new(2.0 * fs, 0.0);
    (k + s) / (k - s)
}

fn prewarp(f: f64, fs: f64) -> f64 {
    2.0 * fs * (PI * f / fs).tan()
}

/// Unit-cutoff analog Butterworth poles in the left half plane.
fn prototype_poles(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| {
            let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect()
}

/// Groups digital poles into conjugate pairs (upper-half-plane representative
/// plus its mirror); leftover real poles are paired with each other.
fn pair_poles(poles: &[Complex64]) -> Vec<[Complex64; 2]> {
    const EPS: f64 = 1e-12;
    let mut pairs = Vec::new();
    let mut reals = Vec::new();
    for &p in poles {
        if p.im > EPS {
            pairs.push([p, p.conj()]);
        } else if p.im.abs() <= EPS {
            reals.push(Complex64::new(p.re, 0.0));
        }
    }
    for chunk in reals.chunks(2) {
        match chunk {
            [a, b] => pairs.push([*a, *b]),
            [a] => pairs.push([*a, Complex64::new(0.0, 0.0)]),
            _ => unreachable!(),
        }
    }
    pairs
}

fn check_freq(name: &str, f: f64, fs: f64) -> Result<()> {
    if !(f.is_finite() && f > 0.0 && f < fs / 2.0) {
        return Err(Error::config(
            name,
            format!("{f} Hz must lie strictly between 0 and Nyquist ({} Hz)", fs / 2.0),
        ));
    }
    Ok(())
}

/// Low-pass of the given order with -3 dB point at `cutoff_hz`; DC gain 1.
pub fn lowpass(order: usize, cutoff_hz: f64, fs: f64) -> Result<Sos> {
    if order == 0 {
        return Err(Error::config("order", "filter order must be >= 1"));
    }
    check_freq("cutoff_hz", cutoff_hz, fs)?;
    let wc = prewarp(cutoff_hz, fs);
    let poles: Vec<Complex64> = prototype_poles(order)
        .into_iter()
        .map(|p| bilinear(p * wc, fs))
        .collect();
    let minus_one = Complex64::new(-1.0, 0.0);
    let sections = pair_poles(&poles)
        .into_iter()
        .map(|pp| {
            let single = pp[1] == Complex64::new(0.0, 0.0) && pp[0].im == 0.0;
            let zeros = if single {
                [minus_one, Complex64::new(0.0, 0.0)]
            } else {
                [minus_one, minus_one]
            };
            let mut bq = Biquad::from_roots(zeros, pp);
            let g = bq.dc_gain();
            bq.b.iter_mut().for_each(|c| *c /= g);
            bq
        })
        .collect();
    Ok(Sos { sections, order })
}

/// Band-pass with `order` poles (must be even; the low-pass prototype has
/// order/2 poles). Unit gain at the band's center frequency.
pub fn bandpass(order: usize, low_hz: f64, high_hz: f64, fs: f64) -> Result<Sos> {
    if order < 2 || order % 2 != 0 {
        return Err(Error::config("order", "band-pass order must be even and >= 2"));
    }
    check_freq("band low", low_hz, fs)?;
    check_freq("band high", high_hz, fs)?;
    if low_hz >= high_hz {
        return Err(Error::config(
            "band",
            format!("low edge {low_hz} Hz must be below high edge {high_hz} Hz"),
        ));
    }
    let w1 = prewarp(low_hz, fs);
    let w2 = prewarp(high_hz, fs);
    let w0 = (w1 * w2).sqrt();
    let bw = w2 - w1;

    let mut poles = Vec::with_capacity(order);
    for p in prototype_poles(order / 2) {
        // s^2 - p·bw·s + w0^2 = 0
        let half = p * bw / 2.0;
        let disc = (half * half - w0 * w0).sqrt();
        poles.push(bilinear(half + disc, fs));
        poles.push(bilinear(half - disc, fs));
    }
    let zeros = [Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)];
    let center = Complex64::from_polar(1.0, 2.0 * (w0 / (2.0 * fs)).atan());
    let sections = pair_poles(&poles)
        .into_iter()
        .map(|pp| {
            let mut bq = Biquad::from_roots(zeros, pp);
            let g = bq.response(center).norm();
            bq.b.iter_mut().for_each(|c| *c /= g);
            bq
        })
        .collect();
    Ok(Sos { sections, order })
}

impl Sos {
    /// Complex frequency response at `f_hz`.
    pub fn response(&self, f_hz: f64, fs: f64) -> Complex64 {
        let z = Complex64::from_polar(1.0, 2.0 * PI * f_hz / fs);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z))
    }

    /// Reflection length used at each edge by [`Sos::filtfilt`].
    pub fn padlen(&self) -> usize {
        3 * self.order
    }

    /// Per-section states giving the steady-state response to a unit step.
    fn step_state(&self) -> Vec<[f64; 2]> {
        let mut level = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let g = s.dc_gain();
                let z2 = level * (s.b[2] - s.a[2] * g);
                let z1 = level * (s.b[1] - s.a[1] * g) + z2;
                level *= g;
                [z1, z2]
            })
            .collect()
    }

    fn run(&self, x: &mut [f64], initial: &[[f64; 2]], scale: f64) {
        for (s, z0) in self.sections.iter().zip(initial) {
            let (mut z1, mut z2) = (z0[0] * scale, z0[1] * scale);
            for v in x.iter_mut() {
                let input = *v;
                let y = s.b[0] * input + z1;
                z1 = s.b[1] * input - s.a[1] * y + z2;
                z2 = s.b[2] * input - s.a[2] * y;
                *v = y;
            }
        }
    }

    /// Causal filtering from rest.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        let rest = vec![[0.0; 2]; self.sections.len()];
        self.run(&mut y, &rest, 0.0);
        y
    }

    /// Zero-phase forward-backward filtering with odd reflection padding at both
    /// edges and steady-state initial conditions.
    pub fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pad = self.padlen();
        let n = x.len();
        if n <= pad {
            return Err(Error::invalid(format!(
                "signal of {n} samples too short for zero-phase filtering (needs > {pad})"
            )));
        }
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        let zi = self.step_state();
        let first = ext[0];
        self.run(&mut ext, &zi, first);
        ext.reverse();
        let first = ext[0];
        self.run(&mut ext, &zi, first);
        ext.reverse();
        Ok(ext[pad..pad + n].to_vec())
    }
}
