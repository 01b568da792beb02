//! Orientation-domain feedback: the stage-dependent impulse response on the
//! 180°-periodic orientation circle and its circular convolution with pooled
//! orientation profiles.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OrientationError {
    #[error("sigma must be positive and finite, got {0}")]
    Sigma(f64),
    #[error("excitatory sigma {sigma_e} must be smaller than inhibitory sigma {sigma_i}")]
    SigmaOrder { sigma_e: f64, sigma_i: f64 },
    #[error("orientation grids differ: {0} vs {1} samples")]
    GridMismatch(usize, usize),
    #[error("orientation profile needs at least one sample")]
    Empty,
    #[error("no feedback coefficients for scale {0}")]
    MissingScale(usize),
    #[error("unknown stage {0:?}")]
    UnknownStage(String),
}

/// Period of the orientation domain in degrees.
pub const PERIOD_DEG: f64 = 180.0;

/// Samples on `n` evenly spaced orientations `k * 180° / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationProfile {
    values: Vec<f64>,
}

impl OrientationProfile {
    pub fn new(values: Vec<f64>) -> Result<Self, OrientationError> {
        if values.is_empty() {
            return Err(OrientationError::Empty);
        }
        Ok(Self { values })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n.max(1)],
        }
    }

    /// Discrete unit impulse at 0°.
    pub fn unit_impulse(n: usize) -> Self {
        let mut p = Self::zeros(n);
        p.values[0] = 1.0;
        p
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn step_deg(&self) -> f64 {
        PERIOD_DEG / self.values.len() as f64
    }

    pub fn angles_deg(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| i as f64 * self.step_deg())
            .collect()
    }

    /// Value at index `i` taken modulo the grid size.
    pub fn at(&self, i: isize) -> f64 {
        self.values[i.rem_euclid(self.len() as isize) as usize]
    }

    /// Rotates the profile by `steps` samples: `out[m] = self[m - steps]`.
    pub fn shifted(&self, steps: isize) -> Self {
        Self {
            values: (0..self.len() as isize)
                .map(|m| self.at(m - steps))
                .collect(),
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * k).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Pointwise `a * self + b * other`.
    pub fn axpby(&self, a: f64, other: &Self, b: f64) -> Result<Self, OrientationError> {
        check_grid(self, other)?;
        Ok(Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }

    /// Largest `|value|` and the first index where it occurs.
    pub fn peak_abs(&self) -> (f64, usize) {
        let mut best = (self.values[0].abs(), 0);
        for (i, v) in self.values.iter().enumerate().skip(1) {
            if v.abs() > best.0 {
                best = (v.abs(), i);
            }
        }
        best
    }
}

fn check_grid(a: &OrientationProfile, b: &OrientationProfile) -> Result<(), OrientationError> {
    if a.len() != b.len() {
        return Err(OrientationError::GridMismatch(a.len(), b.len()));
    }
    Ok(())
}

/// Exposure stage of the feedback kernel: T1 ≈ 58 ms, T2 ≈ 82 ms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    T1,
    T2,
}

impl Stage {
    /// Cosmetic exposure label used in outputs.
    pub fn label(self) -> &'static str {
        match self {
            Stage::T1 => "58ms",
            Stage::T2 => "82ms",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Stage {
    type Err = OrientationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "t1" | "58ms" => Ok(Stage::T1),
            "t2" | "82ms" => Ok(Stage::T2),
            _ => Err(OrientationError::UnknownStage(s.to_string())),
        }
    }
}

/// Difference of an excitatory and an inhibitory Gaussian over orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpulseParams {
    pub sigma_e_deg: f64,
    pub sigma_i_deg: f64,
    /// Center of the excitatory lobe.
    pub theta_k_deg: f64,
    /// Center of the inhibitory lobe.
    pub theta_l_deg: f64,
}

impl ImpulseParams {
    /// Narrow Mexican hat: both lobes on the preferred orientation.
    pub fn t1() -> Self {
        Self {
            sigma_e_deg: 7.5,
            sigma_i_deg: 60.0,
            theta_k_deg: 0.0,
            theta_l_deg: 0.0,
        }
    }

    /// Inverted tuning: broader excitation moves to the orthogonal
    /// orientation while inhibition stays on the preferred one.
    pub fn t2() -> Self {
        Self {
            sigma_e_deg: 25.0,
            sigma_i_deg: 60.0,
            theta_k_deg: 90.0,
            theta_l_deg: 0.0,
        }
    }

    pub fn for_stage(stage: Stage) -> Self {
        match stage {
            Stage::T1 => Self::t1(),
            Stage::T2 => Self::t2(),
        }
    }

    pub fn validate(&self) -> Result<(), OrientationError> {
        for s in [self.sigma_e_deg, self.sigma_i_deg] {
            if !(s.is_finite() && s > 0.0) {
                return Err(OrientationError::Sigma(s));
            }
        }
        if self.sigma_e_deg >= self.sigma_i_deg {
            return Err(OrientationError::SigmaOrder {
                sigma_e: self.sigma_e_deg,
                sigma_i: self.sigma_i_deg,
            });
        }
        Ok(())
    }

    /// Unwrapped continuum difference of normal densities, in deg⁻¹.
    pub fn density(&self, theta_deg: f64) -> f64 {
        normal_pdf(theta_deg - self.theta_k_deg, self.sigma_e_deg)
            - normal_pdf(theta_deg - self.theta_l_deg, self.sigma_i_deg)
    }
}

fn normal_pdf(x: f64, sigma: f64) -> f64 {
    (-(x * x) / (2.0 * sigma * sigma)).exp() / ((2.0 * std::f64::consts::PI).sqrt() * sigma)
}

/// Number of period images summed on each side when wrapping a lobe.
const WRAPS: i32 = 3;

/// Gaussian lobe wrapped onto the circle, sampled, and scaled to unit sum.
fn wrapped_lobe(center_deg: f64, sigma_deg: f64, n: usize) -> Vec<f64> {
    let step = PERIOD_DEG / n as f64;
    let raw: Vec<f64> = (0..n)
        .map(|m| {
            let theta = m as f64 * step;
            (-WRAPS..=WRAPS)
                .map(|w| {
                    let d = theta - center_deg + f64::from(w) * PERIOD_DEG;
                    (-(d * d) / (2.0 * sigma_deg * sigma_deg)).exp()
                })
                .sum()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    pub samples: OrientationProfile,
    pub params: ImpulseParams,
}

/// Samples h(θ) on an `n`-point grid.
///
/// Each lobe is wrapped onto the 180° circle and renormalized to unit
/// discrete sum before differencing, so the samples sum to zero.
pub fn make_impulse_response(
    params: &ImpulseParams,
    n: usize,
) -> Result<ImpulseResponse, OrientationError> {
    params.validate()?;
    if n == 0 {
        return Err(OrientationError::Empty);
    }
    let exc = wrapped_lobe(params.theta_k_deg, params.sigma_e_deg, n);
    let inh = wrapped_lobe(params.theta_l_deg, params.sigma_i_deg, n);
    let values = exc.iter().zip(&inh).map(|(e, i)| e - i).collect();
    Ok(ImpulseResponse {
        samples: OrientationProfile::new(values)?,
        params: *params,
    })
}

/// `(h ⊛ p)(θ_m) = Σ_n h(θ_n) p(θ_{m-n})` with exact wraparound.
pub fn circular_convolve(
    h: &OrientationProfile,
    p: &OrientationProfile,
) -> Result<OrientationProfile, OrientationError> {
    check_grid(h, p)?;
    let n = h.len();
    let values = (0..n)
        .map(|m| {
            h.values
                .iter()
                .enumerate()
                .map(|(k, hk)| hk * p.values[(m + n - k) % n])
                .sum()
        })
        .collect();
    OrientationProfile::new(values)
}

/// Per-scale feedback weights η_j (feedforward) and α_j (feedback).
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackCoefficients {
    pub eta: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl FeedbackCoefficients {
    pub fn uniform(n_scales: usize, eta: f64, alpha: f64) -> Self {
        Self {
            eta: vec![eta; n_scales],
            alpha: vec![alpha; n_scales],
        }
    }

    /// η = 1 and α = 0: feedback switched off.
    pub fn disabled(n_scales: usize) -> Self {
        Self::uniform(n_scales, 1.0, 0.0)
    }

    pub fn for_scale(&self, j: usize) -> Result<(f64, f64), OrientationError> {
        match (self.eta.get(j), self.alpha.get(j)) {
            (Some(&e), Some(&a)) => Ok((e, a)),
            _ => Err(OrientationError::MissingScale(j)),
        }
    }
}

/// `O_j = η_j·Ortn_j + α_j·(h ⊛ Ortn_j)`.
pub fn modulate(
    ortn: &OrientationProfile,
    h: &ImpulseResponse,
    coeff: &FeedbackCoefficients,
    scale: usize,
) -> Result<OrientationProfile, OrientationError> {
    let (eta, alpha) = coeff.for_scale(scale)?;
    let fb = circular_convolve(&h.samples, ortn)?;
    ortn.axpby(eta, &fb, alpha)
}
