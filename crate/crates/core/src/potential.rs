//! Admissible 2π-periodic potentials `W(x)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::{io, Error, Result};

/// Tolerance of the evenness check on the sample grid.
pub const EVENNESS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialKind {
    OneMinusCos,
    Table,
}

/// A real, bounded, 2π-periodic potential, either closed-form or tabulated on
/// a uniform grid over `[0, 2π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicPotential {
    pub kind: PotentialKind,
    #[serde(default)]
    pub samples: Vec<f64>,
    #[serde(default)]
    pub label: String,
    #[serde(skip)]
    coeffs: Vec<Complex64>,
}

impl PeriodicPotential {
    /// `W(x) = 1 - cos x`.
    pub fn one_minus_cos() -> Self {
        Self {
            kind: PotentialKind::OneMinusCos,
            samples: Vec::new(),
            label: "1 - cos x".into(),
            coeffs: Vec::new(),
        }
    }

    /// Uniform table over `[0, 2π)`, resampled by trigonometric interpolation.
    pub fn table(samples: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        let mut p = Self {
            kind: PotentialKind::Table,
            samples,
            label: label.into(),
            coeffs: Vec::new(),
        };
        p.validate()?;
        p.coeffs = dft(&p.samples);
        Ok(p)
    }

    /// The free case `W = 0`.
    pub fn zero() -> Self {
        Self::table(vec![0.0; 8], "zero").expect("zero table is valid")
    }

    /// Tabulate a closed-form function on `n` nodes.
    pub fn from_fn(n: usize, label: impl Into<String>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let h = 2.0 * PI / n as f64;
        Self::table((0..n).map(|j| f(j as f64 * h)).collect(), label)
    }

    /// `s * W` as a table on 64 nodes (exact for band-limited `W`).
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let n = self.samples.len().max(64);
        Self::from_fn(n, format!("{s} * ({})", self.label), |x| s * self.eval(x))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)?;
        p.finish()
    }

    /// Re-derive cached data after deserialisation.
    pub fn finish(mut self) -> Result<Self> {
        self.validate()?;
        if self.kind == PotentialKind::Table {
            self.coeffs = dft(&self.samples);
        }
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("potential serialises")
    }

    /// SHA-256 of the JSON descriptor.
    pub fn descriptor_hash(&self) -> String {
        io::sha256_hex(self.to_json().as_bytes())
    }

    fn validate(&self) -> Result<()> {
        if self.kind == PotentialKind::Table {
            if self.samples.len() < 4 {
                return Err(Error::InvalidPotential(format!(
                    "need at least 4 samples, got {}",
                    self.samples.len()
                )));
            }
            if let Some(j) = self.samples.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidPotential(format!("non-finite sample at index {j}")));
            }
        }
        Ok(())
    }

    /// Point evaluation; exact for closed forms, trigonometric interpolant for tables.
    pub fn eval(&self, x: f64) -> f64 {
        match self.kind {
            PotentialKind::OneMinusCos => 1.0 - x.cos(),
            PotentialKind::Table => {
                let c = &self.coeffs;
                let m = c.len();
                let mut acc = c[0].re;
                for k in 1..(m + 1) / 2 {
                    let e = Complex64::from_polar(1.0, k as f64 * x);
                    acc += 2.0 * (c[k] * e).re;
                }
                if m % 2 == 0 {
                    acc += c[m / 2].re * (0.5 * m as f64 * x).cos();
                }
                acc
            }
        }
    }

    /// Values at `x_j = 2π j / n`.
    pub fn sample(&self, n: usize) -> Result<Vec<f64>> {
        if n < 4 {
            return Err(Error::InvalidInput(format!("sample grid n = {n} < 4")));
        }
        let out: Vec<f64> = if self.kind == PotentialKind::Table && n == self.samples.len() {
            self.samples.clone()
        } else {
            let h = 2.0 * PI / n as f64;
            (0..n).map(|j| self.eval(j as f64 * h)).collect()
        };
        if let Some(j) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidPotential(format!("non-finite value at node {j}")));
        }
        Ok(out)
    }

    /// `(even, max |W(x_j) - W(2π - x_j)|)` over the sample grid.
    pub fn check_evenness(&self) -> (bool, f64) {
        let vals = match self.kind {
            PotentialKind::Table => self.samples.clone(),
            PotentialKind::OneMinusCos => self.sample(64).expect("closed form"),
        };
        let n = vals.len();
        let asym = (0..n)
            .map(|j| (vals[j] - vals[(n - j) % n]).abs())
            .fold(0.0, f64::max);
        (asym <= EVENNESS_TOL, asym)
    }

    /// `max W - min W` on a fine grid; zero means the free operator.
    pub fn oscillation(&self) -> f64 {
        let v = self.sample(256).unwrap_or_default();
        let (lo, hi) = v.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
        hi - lo
    }

    pub fn min_value(&self) -> f64 {
        self.sample(256)
            .unwrap_or_default()
            .into_iter()
            .fold(f64::MAX, f64::min)
    }
}

fn dft(s: &[f64]) -> Vec<Complex64> {
    let n = s.len();
    let mut buf: Vec<Complex64> = s.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf.iter().map(|c| c / n as f64).collect()
}
