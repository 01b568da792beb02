//! Oriented difference-of-Gaussians (ODoG) filter bank.
//!
//! Each filter is a circular center Gaussian minus a surround that is twice as
//! wide across the preferred orientation and as wide as the center along it.
//! Orientation 0° prefers vertical structure: its across axis is the image x
//! axis. Scales double the center sigma from one to the next.

use rayon::prelude::*;
use thiserror::Error;

use crate::convolution::{Field, Raster, SpectralImage};
use crate::stimuli::PixelGeometry;

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("sigma must be positive and finite, got {0}")]
    Sigma(f64),
    #[error("kernel side {side} does not fit a {width}x{height} image")]
    KernelTooLarge {
        side: usize,
        width: usize,
        height: usize,
    },
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("invalid bank parameters: {0}")]
    Params(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdogFilterSpec {
    pub scale: usize,
    pub orientation_deg: f64,
    pub center_sigma_deg: f64,
    pub surround_along_deg: f64,
    pub surround_across_deg: f64,
}

impl OdogFilterSpec {
    /// Surround as wide as the center along the orientation and twice as wide across it.
    pub fn standard(scale: usize, orientation_deg: f64, center_sigma_deg: f64) -> Self {
        Self {
            scale,
            orientation_deg,
            center_sigma_deg,
            surround_along_deg: center_sigma_deg,
            surround_across_deg: 2.0 * center_sigma_deg,
        }
    }

    fn max_sigma_deg(&self) -> f64 {
        self.center_sigma_deg
            .max(self.surround_along_deg)
            .max(self.surround_across_deg)
    }
}

/// Square, odd-sided kernel with its center at `(radius, radius)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2D {
    side: usize,
    taps: Vec<f64>,
}

impl Kernel2D {
    pub fn from_taps(side: usize, taps: Vec<f64>) -> Result<Self, FilterError> {
        if side.is_multiple_of(2) || taps.len() != side * side {
            return Err(FilterError::Dimensions(format!(
                "kernel side must be odd with side^2 taps, got side {side} and {} taps",
                taps.len()
            )));
        }
        Ok(Self { side, taps })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn radius(&self) -> usize {
        self.side / 2
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Tap at offset `(dx, dy)` from the center.
    pub fn at(&self, dx: isize, dy: isize) -> f64 {
        let r = self.radius() as isize;
        self.taps[((dy + r) as usize) * self.side + (dx + r) as usize]
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().sum()
    }

    pub fn abs_sum(&self) -> f64 {
        self.taps.iter().map(|t| t.abs()).sum()
    }
}

/// `(sin, cos)` of an angle in degrees, exact at multiples of 90°.
pub(crate) fn sin_cos_deg(deg: f64) -> (f64, f64) {
    let r = deg.rem_euclid(360.0);
    if r == 0.0 {
        (0.0, 1.0)
    } else if r == 90.0 {
        (1.0, 0.0)
    } else if r == 180.0 {
        (0.0, -1.0)
    } else if r == 270.0 {
        (-1.0, 0.0)
    } else {
        r.to_radians().sin_cos()
    }
}

/// Builds one balanced ODoG kernel.
///
/// The support covers three sigmas of the widest Gaussian; when that exceeds
/// `max_side` the support is clipped to the largest odd side that fits. The
/// mean tap is subtracted so the taps sum to zero.
pub fn build_filter(
    spec: &OdogFilterSpec,
    geometry: &PixelGeometry,
    max_side: usize,
) -> Result<Kernel2D, FilterError> {
    for s in [
        spec.center_sigma_deg,
        spec.surround_along_deg,
        spec.surround_across_deg,
        geometry.pixels_per_degree,
    ] {
        if !(s.is_finite() && s > 0.0) {
            return Err(FilterError::Sigma(s));
        }
    }
    if max_side == 0 {
        return Err(FilterError::KernelTooLarge {
            side: 1,
            width: 0,
            height: 0,
        });
    }
    let sc = geometry.deg_to_px(spec.center_sigma_deg);
    let sl = geometry.deg_to_px(spec.surround_along_deg);
    let sa = geometry.deg_to_px(spec.surround_across_deg);
    let full_side = 2 * (3.0 * geometry.deg_to_px(spec.max_sigma_deg())).ceil() as usize + 1;
    let cap = if max_side % 2 == 1 {
        max_side
    } else {
        max_side - 1
    };
    let side = full_side.min(cap);
    let r = (side / 2) as isize;

    let (sin, cos) = sin_cos_deg(spec.orientation_deg);
    let center_norm = 1.0 / (2.0 * std::f64::consts::PI * sc * sc);
    let surround_norm = 1.0 / (2.0 * std::f64::consts::PI * sa * sl);
    let mut taps = Vec::with_capacity(side * side);
    for y in -r..=r {
        let y = y as f64;
        for x in -r..=r {
            let x = x as f64;
            let across = x * cos + y * sin;
            let along = -x * sin + y * cos;
            let center = center_norm * (-(x * x + y * y) / (2.0 * sc * sc)).exp();
            let surround = surround_norm
                * (-(across * across) / (2.0 * sa * sa) - (along * along) / (2.0 * sl * sl)).exp();
            taps.push(center - surround);
        }
    }
    // summed in sorted order so kernels that are permutations of each other
    // (quarter turns) receive bit-identical corrections
    let mut sorted = taps.clone();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / taps.len() as f64;
    for t in &mut taps {
        *t -= mean;
    }
    Kernel2D::from_taps(side, taps)
}

/// Frequency (cycles/px) at which the amplitude spectrum of a 0° kernel peaks.
///
/// The spectrum of a 0° kernel peaks on the horizontal frequency axis, which
/// is the 1-D transform of the kernel summed over rows.
pub fn spectral_peak_cycles_per_px(kernel: &Kernel2D) -> f64 {
    let side = kernel.side();
    let r = kernel.radius() as isize;
    let profile: Vec<f64> = (0..side)
        .map(|kx| (0..side).map(|ky| kernel.taps()[ky * side + kx]).sum())
        .collect();
    let amplitude = |f: f64| -> f64 {
        let w = 2.0 * std::f64::consts::PI * f;
        profile
            .iter()
            .enumerate()
            .map(|(i, p)| p * (w * (i as isize - r) as f64).cos())
            .sum::<f64>()
            .abs()
    };

    let steps = (8 * side).clamp(512, 8192);
    let df = 0.5 / steps as f64;
    let (mut best, mut best_amp) = (df, amplitude(df));
    for i in 2..=steps {
        let f = i as f64 * df;
        let a = amplitude(f);
        if a > best_amp {
            best = f;
            best_amp = a;
        }
    }
    // golden-section refinement inside the bracketing grid cells
    let (mut lo, mut hi) = ((best - df).max(0.0), (best + df).min(0.5));
    let g = (5.0f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if amplitude(a) > amplitude(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BankParams {
    pub pixels_per_degree: f64,
    pub center_sigma_0_deg: f64,
    pub n_scales: usize,
    pub orientation_step_deg: f64,
}

impl Default for BankParams {
    fn default() -> Self {
        Self {
            pixels_per_degree: 32.0,
            center_sigma_0_deg: 0.047,
            n_scales: 7,
            orientation_step_deg: 15.0,
        }
    }
}

impl BankParams {
    pub fn geometry(&self) -> PixelGeometry {
        PixelGeometry {
            pixels_per_degree: self.pixels_per_degree,
        }
    }

    pub fn n_orientations(&self) -> Result<usize, FilterError> {
        let n = 180.0 / self.orientation_step_deg;
        if self.orientation_step_deg.is_nan()
            || self.orientation_step_deg <= 0.0
            || (n - n.round()).abs() > 1e-9
            || n < 1.0
        {
            return Err(FilterError::Params(format!(
                "orientation step {} does not divide 180°",
                self.orientation_step_deg
            )));
        }
        Ok(n.round() as usize)
    }

    pub fn center_sigma_deg(&self, scale: usize) -> f64 {
        self.center_sigma_0_deg * 2f64.powi(scale as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleInfo {
    pub index: usize,
    pub center_sigma_deg: f64,
    pub center_sigma_px: f64,
    /// ω_j, cycles/degree.
    pub spectral_mode_cpd: f64,
}

/// All kernels for `n_scales` x `n_orientations`, built for one display size.
#[derive(Debug, Clone)]
pub struct OdogFilterBank {
    params: BankParams,
    scales: Vec<ScaleInfo>,
    orientations_deg: Vec<f64>,
    kernels: Vec<Vec<Kernel2D>>,
}

impl OdogFilterBank {
    /// Builds the bank with kernel supports clipped to `max_side` pixels.
    pub fn new(params: BankParams, max_side: usize) -> Result<Self, FilterError> {
        if params.n_scales == 0 {
            return Err(FilterError::Params("n_scales must be positive".into()));
        }
        let n_orient = params.n_orientations()?;
        let geometry = params.geometry();
        let orientations_deg: Vec<f64> = (0..n_orient)
            .map(|i| i as f64 * params.orientation_step_deg)
            .collect();
        let kernels = (0..params.n_scales)
            .map(|j| {
                orientations_deg
                    .iter()
                    .map(|&theta| {
                        let spec = OdogFilterSpec::standard(j, theta, params.center_sigma_deg(j));
                        build_filter(&spec, &geometry, max_side)
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let scales = kernels
            .iter()
            .enumerate()
            .map(|(j, row)| ScaleInfo {
                index: j,
                center_sigma_deg: params.center_sigma_deg(j),
                center_sigma_px: geometry.deg_to_px(params.center_sigma_deg(j)),
                spectral_mode_cpd: spectral_peak_cycles_per_px(&row[0]) * params.pixels_per_degree,
            })
            .collect();
        Ok(Self {
            params,
            scales,
            orientations_deg,
            kernels,
        })
    }

    pub fn params(&self) -> &BankParams {
        &self.params
    }

    pub fn scales(&self) -> &[ScaleInfo] {
        &self.scales
    }

    pub fn n_scales(&self) -> usize {
        self.scales.len()
    }

    pub fn orientations_deg(&self) -> &[f64] {
        &self.orientations_deg
    }

    pub fn n_orientations(&self) -> usize {
        self.orientations_deg.len()
    }

    pub fn kernel(&self, scale: usize, orientation: usize) -> &Kernel2D {
        &self.kernels[scale][orientation]
    }

    pub fn spectral_modes_cpd(&self) -> Vec<f64> {
        self.scales.iter().map(|s| s.spectral_mode_cpd).collect()
    }
}

/// `responses[j][θ]`, each the size of the input display.
#[derive(Debug, Clone)]
pub struct ResponseStack {
    pub responses: Vec<Vec<Field>>,
}

impl ResponseStack {
    pub fn get(&self, scale: usize, orientation: usize) -> &Field {
        &self.responses[scale][orientation]
    }
}

/// Computes every (scale, orientation) response and hands each to `visit`.
///
/// Fields are produced and dropped one orientation pair at a time, so callers
/// that only need a reduction never hold the whole stack. `visit` may be
/// called from several threads.
pub fn for_each_response<R, F>(
    display: &R,
    bank: &OdogFilterBank,
    visit: F,
) -> Result<(), FilterError>
where
    R: Raster + Sync,
    F: Fn(usize, usize, &Field) + Sync,
{
    let (w, h) = display.dims();
    for j in 0..bank.n_scales() {
        let radius = bank.kernel(j, 0).radius();
        if bank.kernel(j, 0).side() > w || bank.kernel(j, 0).side() > h {
            return Err(FilterError::KernelTooLarge {
                side: bank.kernel(j, 0).side(),
                width: w,
                height: h,
            });
        }
        let spectral = SpectralImage::new(display, radius);
        let n = bank.n_orientations();
        let pairs: Vec<(usize, Option<usize>)> = (0..n)
            .step_by(2)
            .map(|o| (o, (o + 1 < n).then_some(o + 1)))
            .collect();
        pairs.par_iter().try_for_each(|&(a, b)| {
            let (fa, fb) =
                spectral.convolve_pair(bank.kernel(j, a), b.map(|b| bank.kernel(j, b)))?;
            visit(j, a, &fa);
            if let (Some(b), Some(fb)) = (b, fb) {
                visit(j, b, &fb);
            }
            Ok::<_, FilterError>(())
        })?;
    }
    Ok(())
}

/// All responses of the bank to `display`.
pub fn respond_all<R: Raster + Sync>(
    display: &R,
    bank: &OdogFilterBank,
) -> Result<ResponseStack, FilterError> {
    let slots: Vec<Vec<std::sync::Mutex<Option<Field>>>> = (0..bank.n_scales())
        .map(|_| {
            (0..bank.n_orientations())
                .map(|_| std::sync::Mutex::new(None))
                .collect()
        })
        .collect();
    for_each_response(display, bank, |j, o, field| {
        *slots[j][o].lock().unwrap() = Some(field.clone());
    })?;
    let responses = slots
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|m| m.into_inner().unwrap().expect("every response visited"))
                .collect()
        })
        .collect();
    Ok(ResponseStack { responses })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometry() -> PixelGeometry {
        PixelGeometry::default()
    }

    #[test]
    fn kernels_are_balanced_and_point_symmetric() {
        for theta in [0.0, 15.0, 45.0, 90.0, 165.0] {
            let k = build_filter(
                &OdogFilterSpec::standard(1, theta, 0.094),
                &geometry(),
                1023,
            )
            .unwrap();
            assert!(k.sum().abs() <= 1e-12, "theta {theta}: sum {}", k.sum());
            assert!(k.sum().abs() / k.abs_sum() < 1e-6);
            let r = k.radius() as isize;
            for dy in -r..=r {
                for dx in -r..=r {
                    assert_eq!(k.at(dx, dy), k.at(-dx, -dy));
                }
            }
        }
    }

    #[test]
    fn side_covers_three_sigma_of_surround() {
        let k = build_filter(&OdogFilterSpec::standard(0, 0.0, 0.047), &geometry(), 1023).unwrap();
        // 2 * ceil(3 * 3.008) + 1
        assert_eq!(k.side(), 21);
    }

    #[test]
    fn oversized_support_is_clipped() {
        let k = build_filter(&OdogFilterSpec::standard(6, 0.0, 3.008), &geometry(), 1024).unwrap();
        assert_eq!(k.side(), 1023);
        assert!(k.sum().abs() <= 1e-12);
    }

    #[test]
    fn quarter_turn_is_transpose() {
        let spec0 = OdogFilterSpec::standard(2, 0.0, 0.188);
        let spec90 = OdogFilterSpec::standard(2, 90.0, 0.188);
        let k0 = build_filter(&spec0, &geometry(), 1023).unwrap();
        let k90 = build_filter(&spec90, &geometry(), 1023).unwrap();
        let r = k0.radius() as isize;
        for dy in -r..=r {
            for dx in -r..=r {
                assert_eq!(k0.at(dx, dy), k90.at(dy, dx));
            }
        }
    }

    #[test]
    fn rejects_bad_sigma() {
        let mut spec = OdogFilterSpec::standard(0, 0.0, 0.047);
        spec.center_sigma_deg = 0.0;
        assert_eq!(
            build_filter(&spec, &geometry(), 100),
            Err(FilterError::Sigma(0.0))
        );
        spec.center_sigma_deg = -1.0;
        assert!(build_filter(&spec, &geometry(), 100).is_err());
    }

    #[test]
    fn orientation_step_must_divide_half_turn() {
        let p = BankParams {
            orientation_step_deg: 7.0,
            ..BankParams::default()
        };
        assert!(p.n_orientations().is_err());
        assert_eq!(BankParams::default().n_orientations().unwrap(), 12);
    }

    #[test]
    fn spectral_modes_decrease_with_scale() {
        let bank = OdogFilterBank::new(
            BankParams {
                n_scales: 4,
                ..BankParams::default()
            },
            512,
        )
        .unwrap();
        let modes = bank.spectral_modes_cpd();
        for w in modes.windows(2) {
            assert!(w[1] < w[0]);
        }
        // continuum peak of exp(-z) - exp(-4z) sits at z = ln 4 / 3
        let expected = (4f64.ln() / 3.0).sqrt()
            / (2f64.sqrt() * std::f64::consts::PI * bank.scales()[1].center_sigma_px)
            * 32.0;
        assert!((modes[1] - expected).abs() / expected < 0.02);
    }
}
