//! Temporal Gaussian splatting: one anomaly kernel per snippet, initialized
//! from glances, refreshed from mined snippets and rendered into a dense
//! pseudo-label track.
//!
//! Positions are measured in normalized time (`t / T`), so a radius of `0.1`
//! spans a tenth of the video whatever its snippet count.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{GaussianKernel, GlanceSet, ScoreTrack};

/// Shape of the per-kernel falloff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    #[default]
    Normal,
    Cauchy,
    Laplace,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 3] = [KernelFamily::Normal, KernelFamily::Cauchy, KernelFamily::Laplace];

    /// Unit-severity falloff at normalized distance `d >= 0` for radius `r`.
    fn falloff(self, d: f64, r: f64) -> f64 {
        match self {
            KernelFamily::Normal => (-(d * d) / (2.0 * r * r)).exp(),
            KernelFamily::Cauchy => (r * r) / (d * d + r * r),
            KernelFamily::Laplace => (-d / r).exp(),
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Normal => "normal",
            KernelFamily::Cauchy => "cauchy",
            KernelFamily::Laplace => "laplace",
        })
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => Ok(KernelFamily::Normal),
            "cauchy" => Ok(KernelFamily::Cauchy),
            "laplace" => Ok(KernelFamily::Laplace),
            other => Err(Error::Config(format!("unknown kernel family `{other}`"))),
        }
    }
}

/// Contribution of `kernel` at snippet `t` of a length-`len` sequence.
pub fn kernel_value(kernel: &GaussianKernel, t: usize, len: usize, family: KernelFamily) -> Result<f64> {
    if t >= len {
        return Err(Error::OutOfRange { index: t, len });
    }
    let n = len as f64;
    let d = (t as f64 / n - kernel.mu as f64 / n).abs();
    let v = kernel.severity * family.falloff(d, kernel.radius);
    if !v.is_finite() {
        return Err(Error::Numeric(format!(
            "kernel at {} (radius {}) evaluated to {v} at snippet {t}",
            kernel.mu, kernel.radius
        )));
    }
    Ok(v)
}

/// One kernel per snippet, `kernels[i].mu == i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTrack {
    kernels: Vec<GaussianKernel>,
    family: KernelFamily,
}

impl KernelTrack {
    /// Builds a track from explicit kernels; positions must equal their index.
    pub fn from_kernels(kernels: Vec<GaussianKernel>, family: KernelFamily) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::Invariant("kernel track must cover at least one snippet".into()));
        }
        for (i, k) in kernels.iter().enumerate() {
            if k.mu != i {
                return Err(Error::Invariant(format!("kernel {i} centred at {}", k.mu)));
            }
            GaussianKernel::new(k.mu, k.severity, k.radius)?;
        }
        Ok(Self { kernels, family })
    }

    pub fn kernels(&self) -> &[GaussianKernel] {
        &self.kernels
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    /// Severities as a 0/1 track, i.e. the pseudo-labels without splatting.
    pub fn indicator(&self) -> ScoreTrack {
        ScoreTrack::new(self.kernels.iter().map(|k| k.severity).collect())
            .expect("severities are validated on construction")
    }
}

/// Severity 1 at every glance snippet, 0 elsewhere, all radii `r_g`.
pub fn init_kernels(glances: &GlanceSet, len: usize, r_g: f64, family: KernelFamily) -> Result<KernelTrack> {
    if len == 0 {
        return Err(Error::Invariant("cannot place kernels on an empty sequence".into()));
    }
    if !(r_g > 0.0 && r_g.is_finite()) {
        return Err(Error::Config(format!("context radius r_g must be positive, got {r_g}")));
    }
    let mut kernels: Vec<GaussianKernel> = (0..len)
        .map(|mu| GaussianKernel {
            mu,
            severity: 0.0,
            radius: r_g,
        })
        .collect();
    for &g in glances.snippets() {
        kernels
            .get_mut(g)
            .ok_or(Error::OutOfRange { index: g, len })?
            .severity = 1.0;
    }
    Ok(KernelTrack { kernels, family })
}

/// Severity 1 exactly on glances and mined snippets; radii are kept.
pub fn update_kernels(track: &KernelTrack, mined: &[usize], glances: &GlanceSet) -> KernelTrack {
    let len = track.len();
    let mut kernels = track.kernels.clone();
    for k in &mut kernels {
        k.severity = 0.0;
    }
    for &i in glances.snippets().iter().chain(mined) {
        if let Some(k) = kernels.get_mut(i) {
            k.severity = 1.0;
        } else {
            log::warn!("ignoring kernel update at snippet {i} beyond length {len}");
        }
    }
    KernelTrack {
        kernels,
        family: track.family,
    }
}

/// Splats all kernels and clamps the sum to at most 1.
pub fn render(track: &KernelTrack) -> Result<ScoreTrack> {
    let len = track.len();
    let mut acc = vec![0.0f64; len];
    for kernel in track.kernels.iter().filter(|k| k.severity > 0.0) {
        for (t, a) in acc.iter_mut().enumerate() {
            *a += kernel_value(kernel, t, len, track.family)?;
        }
    }
    for a in &mut acc {
        *a = a.min(1.0);
    }
    ScoreTrack::new(acc)
}
