//! Gaussian-window pooling of filter responses into orientation profiles,
//! power-law scale combination and the max-contrast readout.

use std::sync::Mutex;

use thiserror::Error;

use crate::convolution::{Field, Raster};
use crate::filterbank::{
    for_each_response, BankParams, FilterError, OdogFilterBank, ResponseStack,
};
use crate::orientation::{
    make_impulse_response, modulate, FeedbackCoefficients, ImpulseParams, OrientationError,
    OrientationProfile, Stage,
};

#[derive(Debug, Error, PartialEq)]
pub enum PoolingError {
    #[error("pooling window {extent} px at ({cx}, {cy}) leaves the {width}x{height} display")]
    WindowOutOfBounds {
        cx: usize,
        cy: usize,
        extent: usize,
        width: usize,
        height: usize,
    },
    #[error("invalid pooling window: {0}")]
    InvalidWindow(String),
    #[error("scale selection is empty")]
    EmptySelection,
    #[error("scale {0} is not available")]
    MissingScale(usize),
    #[error("spectral mode must be positive, got {0}")]
    NonPositiveMode(f64),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Orientation(#[from] OrientationError),
}

/// Square window of `extent` pixels with Gaussian weights centered at `(cx, cy)`.
///
/// The window covers columns `cx - extent/2 .. cx - extent/2 + extent` and the
/// same range of rows. An infinite sigma gives uniform weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolingWindow {
    pub cx: usize,
    pub cy: usize,
    pub sigma_px: f64,
    pub extent: usize,
}

impl PoolingWindow {
    /// Fixed-extent window truncated at three sigmas on each side.
    pub fn fixed(cx: usize, cy: usize, extent: usize) -> Self {
        Self {
            cx,
            cy,
            sigma_px: extent as f64 / 6.0,
            extent,
        }
    }

    pub fn bounds(&self, width: usize, height: usize) -> Result<(usize, usize), PoolingError> {
        if self.extent == 0 || self.sigma_px.is_nan() || self.sigma_px <= 0.0 {
            return Err(PoolingError::InvalidWindow(format!(
                "extent {} sigma {}",
                self.extent, self.sigma_px
            )));
        }
        let half = self.extent / 2;
        let out = PoolingError::WindowOutOfBounds {
            cx: self.cx,
            cy: self.cy,
            extent: self.extent,
            width,
            height,
        };
        if self.cx < half || self.cy < half {
            return Err(out);
        }
        let (x0, y0) = (self.cx - half, self.cy - half);
        if x0 + self.extent > width || y0 + self.extent > height {
            return Err(out);
        }
        Ok((x0, y0))
    }

    fn weights_1d(&self, start: usize, center: usize) -> Vec<f64> {
        (start..start + self.extent)
            .map(|p| {
                let d = p as f64 - center as f64;
                if self.sigma_px.is_infinite() {
                    1.0
                } else {
                    (-(d * d) / (2.0 * self.sigma_px * self.sigma_px)).exp()
                }
            })
            .collect()
    }
}

/// Gaussian-weighted mean of `field` over `window`.
pub fn pool_field(field: &Field, window: &PoolingWindow) -> Result<f64, PoolingError> {
    let (x0, y0) = window.bounds(field.width, field.height)?;
    // the 2-D Gaussian is separable
    let wx = window.weights_1d(x0, window.cx);
    let wy = window.weights_1d(y0, window.cy);
    let mut acc = 0.0;
    for (dy, &gy) in wy.iter().enumerate() {
        let row = &field.data[(y0 + dy) * field.width + x0..][..window.extent];
        let s: f64 = row.iter().zip(&wx).map(|(v, gx)| v * gx).sum();
        acc += gy * s;
    }
    let norm: f64 = wx.iter().sum::<f64>() * wy.iter().sum::<f64>();
    Ok(acc / norm)
}

/// Ortn_j(θ): pooled response of scale `scale` at every orientation.
pub fn pool_orientation(
    responses: &ResponseStack,
    scale: usize,
    window: &PoolingWindow,
) -> Result<OrientationProfile, PoolingError> {
    let row = responses
        .responses
        .get(scale)
        .ok_or(PoolingError::MissingScale(scale))?;
    let values = row
        .iter()
        .map(|f| pool_field(f, window))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(OrientationProfile::new(values)?)
}

/// How the pooling window is sized for each selected scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowRule {
    /// Same window for every scale, sigma = extent / 6.
    Fixed { extent: usize },
    /// Extent 3σ_e^j of each scale's center Gaussian, sigma = extent / 6.
    PerScale3Sigma,
    /// Sigma equal to the center sigma of the smallest selected scale, extent ⌈6σ⌉.
    SmallestOfSelected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSelection {
    pub scales: Vec<usize>,
    pub window_rule: WindowRule,
}

impl ScaleSelection {
    pub fn all(n_scales: usize, window_rule: WindowRule) -> Self {
        Self {
            scales: (0..n_scales).collect(),
            window_rule,
        }
    }

    /// The `count` coarsest scales.
    pub fn largest(n_scales: usize, count: usize, window_rule: WindowRule) -> Self {
        Self {
            scales: (n_scales.saturating_sub(count)..n_scales).collect(),
            window_rule,
        }
    }

    /// Pooling window for `scale` centered on `observation`.
    pub fn window_for(
        &self,
        scale: usize,
        bank: &OdogFilterBank,
        observation: (usize, usize),
    ) -> Result<PoolingWindow, PoolingError> {
        let (cx, cy) = observation;
        let sigma_of = |j: usize| {
            bank.scales()
                .get(j)
                .map(|s| s.center_sigma_px)
                .ok_or(PoolingError::MissingScale(j))
        };
        Ok(match self.window_rule {
            WindowRule::Fixed { extent } => PoolingWindow::fixed(cx, cy, extent),
            WindowRule::PerScale3Sigma => {
                let extent = ((3.0 * sigma_of(scale)?).round() as usize).max(1);
                PoolingWindow::fixed(cx, cy, extent)
            }
            WindowRule::SmallestOfSelected => {
                let smallest = *self
                    .scales
                    .iter()
                    .min()
                    .ok_or(PoolingError::EmptySelection)?;
                let sigma = sigma_of(smallest)?;
                PoolingWindow {
                    cx,
                    cy,
                    sigma_px: sigma,
                    extent: (6.0 * sigma).ceil() as usize,
                }
            }
        })
    }
}

/// β_j = ω_j^exponent.
pub fn spectral_weights(modes: &[f64], exponent: f64) -> Result<Vec<f64>, PoolingError> {
    modes
        .iter()
        .map(|&w| {
            if w.is_finite() && w > 0.0 {
                Ok(w.powf(exponent))
            } else {
                Err(PoolingError::NonPositiveMode(w))
            }
        })
        .collect()
}

/// A(θ) together with its peak absolute value.
#[derive(Debug, Clone, PartialEq)]
pub struct Combined {
    pub profile: OrientationProfile,
    pub peak: f64,
    pub argpeak_deg: f64,
}

impl Combined {
    pub fn from_profile(profile: OrientationProfile) -> Self {
        let (peak, arg) = profile.peak_abs();
        let argpeak_deg = arg as f64 * profile.step_deg();
        Self {
            profile,
            peak,
            argpeak_deg,
        }
    }
}

/// `A(θ) = Σ_{j ∈ selection} β_j O_j(θ)`; ties on the peak go to the smallest θ.
pub fn combine_scales(
    profiles: &[OrientationProfile],
    betas: &[f64],
    selection: &ScaleSelection,
) -> Result<Combined, PoolingError> {
    let first = *selection
        .scales
        .first()
        .ok_or(PoolingError::EmptySelection)?;
    let n = profiles
        .get(first)
        .ok_or(PoolingError::MissingScale(first))?
        .len();
    let mut acc = OrientationProfile::zeros(n);
    for &j in &selection.scales {
        let o = profiles.get(j).ok_or(PoolingError::MissingScale(j))?;
        let beta = *betas.get(j).ok_or(PoolingError::MissingScale(j))?;
        acc = acc.axpby(1.0, o, beta)?;
    }
    Ok(Combined::from_profile(acc))
}

/// Everything that turns pooled profiles into a prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub bank: BankParams,
    pub impulse_t1: ImpulseParams,
    pub impulse_t2: ImpulseParams,
    pub feedback_t1: FeedbackCoefficients,
    pub feedback_t2: FeedbackCoefficients,
    pub beta_exponent: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let bank = BankParams::default();
        Self {
            impulse_t1: ImpulseParams::t1(),
            impulse_t2: ImpulseParams::t2(),
            feedback_t1: FeedbackCoefficients::uniform(bank.n_scales, 1.0, 1.0),
            feedback_t2: FeedbackCoefficients::uniform(bank.n_scales, 1.0, 1.0),
            beta_exponent: 0.1,
            bank,
        }
    }
}

impl ModelConfig {
    pub fn impulse(&self, stage: Stage) -> &ImpulseParams {
        match stage {
            Stage::T1 => &self.impulse_t1,
            Stage::T2 => &self.impulse_t2,
        }
    }

    pub fn feedback(&self, stage: Stage) -> &FeedbackCoefficients {
        match stage {
            Stage::T1 => &self.feedback_t1,
            Stage::T2 => &self.feedback_t2,
        }
    }

    /// Modulates the pooled profiles of the selected scales and combines them.
    ///
    /// `pooled[j]` must be present for every selected scale; other entries are
    /// ignored. With `feedback` `None` the stage's coefficients are used.
    pub fn combine_pooled(
        &self,
        pooled: &[Option<OrientationProfile>],
        bank: &OdogFilterBank,
        stage: Stage,
        selection: &ScaleSelection,
        feedback: Option<&FeedbackCoefficients>,
    ) -> Result<Combined, PoolingError> {
        let n = bank.n_orientations();
        let h = make_impulse_response(self.impulse(stage), n)?;
        let coeff = feedback.unwrap_or_else(|| self.feedback(stage));
        let mut modulated = vec![OrientationProfile::zeros(n); bank.n_scales()];
        for &j in &selection.scales {
            let ortn = pooled
                .get(j)
                .and_then(|p| p.as_ref())
                .ok_or(PoolingError::MissingScale(j))?;
            modulated[j] = modulate(ortn, &h, coeff, j)?;
        }
        let betas = spectral_weights(&bank.spectral_modes_cpd(), self.beta_exponent)?;
        combine_scales(&modulated, &betas, selection)
    }
}

/// One `(scale, window)` pair to pool.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolRequest {
    pub scale: usize,
    pub window: PoolingWindow,
}

/// Pools every request in a single pass over the bank's responses.
pub fn pool_requests<R: Raster + Sync>(
    display: &R,
    bank: &OdogFilterBank,
    requests: &[PoolRequest],
) -> Result<Vec<OrientationProfile>, PoolingError> {
    let (w, h) = display.dims();
    for r in requests {
        if r.scale >= bank.n_scales() {
            return Err(PoolingError::MissingScale(r.scale));
        }
        r.window.bounds(w, h)?;
    }
    let n = bank.n_orientations();
    let slots = Mutex::new(vec![vec![0.0; n]; requests.len()]);
    for_each_response(display, bank, |j, o, field| {
        for (i, r) in requests.iter().enumerate() {
            if r.scale == j {
                let v = pool_field(field, &r.window).expect("window checked above");
                slots.lock().unwrap()[i][o] = v;
            }
        }
    })?;
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|v| OrientationProfile::new(v).map_err(PoolingError::from))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    pub stage: Stage,
    pub observation: (usize, usize),
    pub profile: OrientationProfile,
    pub peak: f64,
    pub argpeak_deg: f64,
}

impl PredictionResult {
    pub fn new(stage: Stage, observation: (usize, usize), combined: Combined) -> Self {
        Self {
            stage,
            observation,
            profile: combined.profile,
            peak: combined.peak,
            argpeak_deg: combined.argpeak_deg,
        }
    }
}

/// Full pipeline for one display: filter, pool, modulate, combine.
pub fn predict<R: Raster + Sync>(
    display: &R,
    bank: &OdogFilterBank,
    model: &ModelConfig,
    stage: Stage,
    selection: &ScaleSelection,
    observation: (usize, usize),
) -> Result<PredictionResult, PoolingError> {
    if selection.scales.is_empty() {
        return Err(PoolingError::EmptySelection);
    }
    let requests = selection
        .scales
        .iter()
        .map(|&j| {
            Ok(PoolRequest {
                scale: j,
                window: selection.window_for(j, bank, observation)?,
            })
        })
        .collect::<Result<Vec<_>, PoolingError>>()?;
    let profiles = pool_requests(display, bank, &requests)?;
    let mut pooled = vec![None; bank.n_scales()];
    for (r, p) in requests.iter().zip(profiles) {
        pooled[r.scale] = Some(p);
    }
    let combined = model.combine_pooled(&pooled, bank, stage, selection, None)?;
    Ok(PredictionResult::new(stage, observation, combined))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> Field {
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(f(x, y));
            }
        }
        Field::from_vec(w, h, data).unwrap()
    }

    #[test]
    fn constant_field_pools_to_constant() {
        let f = field(32, 32, |_, _| 4.25);
        let w = PoolingWindow::fixed(16, 16, 20);
        assert!((pool_field(&f, &w).unwrap() - 4.25).abs() < 1e-12);
    }

    #[test]
    fn infinite_sigma_is_arithmetic_mean() {
        let f = field(10, 10, |x, y| (x * 3 + y * 7) as f64);
        let w = PoolingWindow {
            cx: 5,
            cy: 5,
            sigma_px: f64::INFINITY,
            extent: 6,
        };
        let mut s = 0.0;
        for y in 2..8 {
            for x in 2..8 {
                s += f.get(x, y);
            }
        }
        assert!((pool_field(&f, &w).unwrap() - s / 36.0).abs() < 1e-12);
    }

    #[test]
    fn window_bounds_are_checked() {
        let f = field(64, 64, |_, _| 1.0);
        assert!(matches!(
            pool_field(&f, &PoolingWindow::fixed(10, 32, 32)),
            Err(PoolingError::WindowOutOfBounds { .. })
        ));
        assert!(pool_field(&f, &PoolingWindow::fixed(16, 16, 32)).is_ok());
        assert!(matches!(
            pool_field(&f, &PoolingWindow::fixed(49, 48, 32)),
            Err(PoolingError::WindowOutOfBounds { .. })
        ));
    }

    #[test]
    fn spectral_weight_examples() {
        let b = spectral_weights(&[1.0, 1024.0, 2.0, 3.0], 0.1).unwrap();
        assert_eq!(b[0], 1.0);
        assert!((b[1] - 2.0).abs() < 1e-12);
        assert!(b[3] > b[2]);
        assert_eq!(
            spectral_weights(&[0.0], 0.1),
            Err(PoolingError::NonPositiveMode(0.0))
        );
    }

    fn prof(v: &[f64]) -> OrientationProfile {
        OrientationProfile::new(v.to_vec()).unwrap()
    }

    #[test]
    fn combine_singleton_and_zero() {
        let sel = ScaleSelection {
            scales: vec![1],
            window_rule: WindowRule::Fixed { extent: 256 },
        };
        let o = vec![prof(&[9.0, 9.0, 9.0]), prof(&[1.0, -3.0, 2.0])];
        let c = combine_scales(&o, &[1.0, 1.0], &sel).unwrap();
        assert_eq!(c.profile, o[1]);
        assert_eq!(c.peak, 3.0);
        assert_eq!(c.argpeak_deg, 60.0);

        let z = vec![prof(&[0.0; 3]), prof(&[0.0; 3])];
        assert_eq!(combine_scales(&z, &[1.0, 1.0], &sel).unwrap().peak, 0.0);
    }

    #[test]
    fn combine_cancels_signed_profiles() {
        let sel = ScaleSelection {
            scales: vec![0, 1],
            window_rule: WindowRule::Fixed { extent: 256 },
        };
        let a = prof(&[3.0, 1.0, 5.0, 2.0]);
        let b = prof(&[-1.0, -4.0, -2.0, -2.5]);
        let c = combine_scales(&[a, b], &[1.0, 1.0], &sel).unwrap();
        // hand sum: [2, -3, 3, -0.5]; the first maximum wins the tie
        assert_eq!(c.profile.values(), &[2.0, -3.0, 3.0, -0.5]);
        assert_eq!(c.peak, 3.0);
        assert_eq!(c.argpeak_deg, 45.0);
    }

    #[test]
    fn combine_rejects_empty_selection() {
        let sel = ScaleSelection {
            scales: vec![],
            window_rule: WindowRule::PerScale3Sigma,
        };
        assert_eq!(
            combine_scales(&[prof(&[1.0])], &[1.0], &sel),
            Err(PoolingError::EmptySelection)
        );
    }

    #[test]
    fn window_rules_agree_when_three_sigma_is_256() {
        let params = BankParams {
            // center sigma of 256 / 3 px at scale 0
            center_sigma_0_deg: 256.0 / 3.0 / 32.0,
            n_scales: 1,
            ..BankParams::default()
        };
        let bank = OdogFilterBank::new(params, 63).unwrap();
        let per = ScaleSelection::all(1, WindowRule::PerScale3Sigma)
            .window_for(0, &bank, (512, 768))
            .unwrap();
        let fixed = ScaleSelection::all(1, WindowRule::Fixed { extent: 256 })
            .window_for(0, &bank, (512, 768))
            .unwrap();
        assert_eq!(per, fixed);
    }

    #[test]
    fn smallest_of_selected_uses_finest_selected_scale() {
        let bank = OdogFilterBank::new(BankParams::default(), 63).unwrap();
        let sel = ScaleSelection::largest(7, 3, WindowRule::SmallestOfSelected);
        assert_eq!(sel.scales, vec![4, 5, 6]);
        let w = sel.window_for(6, &bank, (512, 768)).unwrap();
        assert!((w.sigma_px - 0.047 * 16.0 * 32.0).abs() < 1e-9);
        assert_eq!(w.extent, (6.0 * w.sigma_px).ceil() as usize);
    }
}
