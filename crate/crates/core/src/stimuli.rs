//! Procedural display images: square-wave gratings, White's stimulus and the
//! half-black composite display the model is evaluated on.
//!
//! Luminance is stored directly in cd/m². Stripes are vertical, so the stripe
//! axis defines orientation 0°.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StimulusError {
    #[error("stripe width must be at least 1 px and at most the image width ({width}), got {stripe_width}")]
    StripeWidth { stripe_width: usize, width: usize },
    #[error("luminance must be finite and positive, got {0}")]
    Luminance(f64),
    #[error("image dimensions {width}x{height} are smaller than the stripe width {stripe_width}")]
    TooSmall {
        width: usize,
        height: usize,
        stripe_width: usize,
    },
    #[error(
        "White's stimulus needs black < test < white luminance, got {black} / {test} / {white}"
    )]
    WhiteOrdering { black: f64, test: f64, white: f64 },
    #[error("test patch {test_width}x{test_height} does not fit inside its carrier stripe")]
    PatchOverrun {
        test_width: usize,
        test_height: usize,
    },
    #[error("expected a {expected_w}x{expected_h} stimulus, got {width}x{height}")]
    Dimensions {
        expected_w: usize,
        expected_h: usize,
        width: usize,
        height: usize,
    },
    #[error("image data must hold width*height finite values >= 0")]
    InvalidData,
}

/// Row-major luminance field in cd/m².
#[derive(Debug, Clone, PartialEq)]
pub struct LuminanceImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl LuminanceImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, StimulusError> {
        if width == 0
            || height == 0
            || data.len() != width * height
            || data.iter().any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(StimulusError::InvalidData);
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn uniform(width: usize, height: usize, luminance: f64) -> Result<Self, StimulusError> {
        Self::new(width, height, vec![luminance; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Multiplies every luminance by `factor` (must be positive).
    pub fn scaled(&self, factor: f64) -> Result<Self, StimulusError> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(StimulusError::Luminance(factor));
        }
        Ok(Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| v * factor).collect(),
        })
    }
}

/// Which stripe family occupies column 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    TargetFirst,
    InducerFirst,
}

impl Phase {
    pub fn flipped(self) -> Self {
        match self {
            Phase::TargetFirst => Phase::InducerFirst,
            Phase::InducerFirst => Phase::TargetFirst,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GratingSpec {
    pub stripe_width: usize,
    pub target_luminance: f64,
    pub inducer_luminance: f64,
    pub phase: Phase,
}

impl GratingSpec {
    /// Phase that puts a target stripe over `column`.
    pub fn phase_for_target_at(stripe_width: usize, column: usize) -> Phase {
        if (column / stripe_width.max(1)).is_multiple_of(2) {
            Phase::TargetFirst
        } else {
            Phase::InducerFirst
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Placement {
    OnBlack,
    OnWhite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhiteSpec {
    pub stripe_width: usize,
    pub test_width: usize,
    pub test_height: usize,
    pub black_luminance: f64,
    pub white_luminance: f64,
    pub test_luminance: f64,
    pub placement: Placement,
}

impl WhiteSpec {
    /// 31 px stripes, a 31x62 px test patch, black 12, white 102 and gray 57 cd/m².
    pub fn standard(placement: Placement) -> Self {
        Self {
            stripe_width: 31,
            test_width: 31,
            test_height: 62,
            black_luminance: 12.0,
            white_luminance: 102.0,
            test_luminance: 57.0,
            placement,
        }
    }
}

/// Screen resolution in pixels per degree of visual angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelGeometry {
    pub pixels_per_degree: f64,
}

impl Default for PixelGeometry {
    fn default() -> Self {
        Self {
            pixels_per_degree: 32.0,
        }
    }
}

impl PixelGeometry {
    pub fn deg_to_px(&self, deg: f64) -> f64 {
        deg * self.pixels_per_degree
    }

    pub fn px_to_deg(&self, px: f64) -> f64 {
        px / self.pixels_per_degree
    }
}

fn check_luminance(l: f64) -> Result<(), StimulusError> {
    if l.is_finite() && l > 0.0 {
        Ok(())
    } else {
        Err(StimulusError::Luminance(l))
    }
}

/// Vertical square-wave grating; the final stripe may be clipped by the image edge.
pub fn make_square_grating(
    spec: &GratingSpec,
    width: usize,
    height: usize,
) -> Result<LuminanceImage, StimulusError> {
    if spec.stripe_width == 0 || spec.stripe_width > width {
        return Err(StimulusError::StripeWidth {
            stripe_width: spec.stripe_width,
            width,
        });
    }
    if height < spec.stripe_width {
        return Err(StimulusError::TooSmall {
            width,
            height,
            stripe_width: spec.stripe_width,
        });
    }
    check_luminance(spec.target_luminance)?;
    check_luminance(spec.inducer_luminance)?;

    let (even, odd) = match spec.phase {
        Phase::TargetFirst => (spec.target_luminance, spec.inducer_luminance),
        Phase::InducerFirst => (spec.inducer_luminance, spec.target_luminance),
    };
    let row: Vec<f64> = (0..width)
        .map(|c| {
            if (c / spec.stripe_width).is_multiple_of(2) {
                even
            } else {
                odd
            }
        })
        .collect();
    let mut data = Vec::with_capacity(width * height);
    for _ in 0..height {
        data.extend_from_slice(&row);
    }
    LuminanceImage::new(width, height, data)
}

/// Black/white carrier with a single gray test patch.
///
/// The stripe containing the horizontal center column hosts the patch; the
/// carrier phase is chosen so that stripe has the hosting color. The patch is
/// centered on that stripe horizontally and on the image vertically.
pub fn make_white_stimulus(
    spec: &WhiteSpec,
    width: usize,
    height: usize,
) -> Result<LuminanceImage, StimulusError> {
    let sw = spec.stripe_width;
    if sw == 0 || sw > width {
        return Err(StimulusError::StripeWidth {
            stripe_width: sw,
            width,
        });
    }
    for l in [
        spec.black_luminance,
        spec.white_luminance,
        spec.test_luminance,
    ] {
        check_luminance(l)?;
    }
    if !(spec.black_luminance < spec.test_luminance && spec.test_luminance < spec.white_luminance) {
        return Err(StimulusError::WhiteOrdering {
            black: spec.black_luminance,
            test: spec.test_luminance,
            white: spec.white_luminance,
        });
    }

    let host_index = (width / 2) / sw;
    let host_start = host_index * sw;
    let host_end = (host_start + sw).min(width);
    let host_width = host_end - host_start;
    let overrun = StimulusError::PatchOverrun {
        test_width: spec.test_width,
        test_height: spec.test_height,
    };
    if spec.test_width == 0
        || spec.test_height == 0
        || spec.test_width > host_width
        || spec.test_height > height
    {
        return Err(overrun);
    }

    let (host, other) = match spec.placement {
        Placement::OnBlack => (spec.black_luminance, spec.white_luminance),
        Placement::OnWhite => (spec.white_luminance, spec.black_luminance),
    };
    let row: Vec<f64> = (0..width)
        .map(|c| {
            if (c / sw) % 2 == host_index % 2 {
                host
            } else {
                other
            }
        })
        .collect();
    let mut data = Vec::with_capacity(width * height);
    for _ in 0..height {
        data.extend_from_slice(&row);
    }

    let x0 = host_start + (host_width - spec.test_width) / 2;
    let y0 = (height - spec.test_height) / 2;
    for y in y0..y0 + spec.test_height {
        data[y * width + x0..y * width + x0 + spec.test_width].fill(spec.test_luminance);
    }
    LuminanceImage::new(width, height, data)
}

/// Square display whose upper half is `black_luminance` and lower half is `stimulus`.
pub fn compose_display(
    stimulus: &LuminanceImage,
    display_side: usize,
    black_luminance: f64,
) -> Result<LuminanceImage, StimulusError> {
    let half = display_side / 2;
    if stimulus.width() != display_side || stimulus.height() != display_side - half {
        return Err(StimulusError::Dimensions {
            expected_w: display_side,
            expected_h: display_side - half,
            width: stimulus.width(),
            height: stimulus.height(),
        });
    }
    if !(black_luminance.is_finite() && black_luminance >= 0.0) {
        return Err(StimulusError::Luminance(black_luminance));
    }
    let mut data = vec![black_luminance; display_side * half];
    data.extend_from_slice(stimulus.data());
    LuminanceImage::new(display_side, display_side, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grating(sw: usize, t: f64, i: f64, phase: Phase, w: usize) -> LuminanceImage {
        let spec = GratingSpec {
            stripe_width: sw,
            target_luminance: t,
            inducer_luminance: i,
            phase,
        };
        make_square_grating(&spec, w, sw.max(4)).unwrap()
    }

    #[test]
    fn thin_grating_columns() {
        let img = grating(31, 31.0, 12.0, Phase::InducerFirst, 93);
        for c in 0..93 {
            let expected = if (31..62).contains(&c) { 31.0 } else { 12.0 };
            assert_eq!(img.get(c, 0), expected, "column {c}");
        }
    }

    #[test]
    fn wide_grating_has_four_segments_with_clipped_tail() {
        let img = grating(340, 72.0, 102.0, Phase::TargetFirst, 1024);
        let row = img.row(0);
        let mut segments = vec![(row[0], 1usize)];
        for &v in &row[1..] {
            let last = segments.last_mut().unwrap();
            if v == last.0 {
                last.1 += 1;
            } else {
                segments.push((v, 1));
            }
        }
        assert_eq!(segments.len(), 4);
        assert_eq!(
            segments.iter().map(|s| s.1).collect::<Vec<_>>(),
            vec![340, 340, 340, 4]
        );
    }

    #[test]
    fn equal_luminances_give_uniform_image() {
        let img = grating(31, 50.0, 50.0, Phase::TargetFirst, 100);
        assert!(img.data().iter().all(|&v| v == 50.0));
    }

    #[test]
    fn grating_rejects_bad_input() {
        let mut spec = GratingSpec {
            stripe_width: 0,
            target_luminance: 31.0,
            inducer_luminance: 12.0,
            phase: Phase::TargetFirst,
        };
        assert!(make_square_grating(&spec, 64, 64).is_err());
        spec.stripe_width = 65;
        assert!(make_square_grating(&spec, 64, 64).is_err());
        spec.stripe_width = 8;
        spec.target_luminance = -1.0;
        assert!(make_square_grating(&spec, 64, 64).is_err());
        spec.target_luminance = 0.0;
        assert!(make_square_grating(&spec, 64, 64).is_err());
    }

    #[test]
    fn white_on_black_patch() {
        let spec = WhiteSpec::standard(Placement::OnBlack);
        let img = make_white_stimulus(&spec, 1024, 512).unwrap();
        // host stripe 16 spans columns 496..527, patch rows 225..287
        assert_eq!(img.get(511, 256), 57.0);
        assert_eq!(img.get(511, 100), 12.0);
        assert_eq!(img.get(511, 400), 12.0);
        assert_eq!(img.get(480, 256), 102.0);
        assert_eq!(img.get(540, 256), 102.0);
        let patch = img.data().iter().filter(|&&v| v == 57.0).count();
        assert_eq!(patch, 31 * 62);
    }

    #[test]
    fn white_on_white_patch() {
        let spec = WhiteSpec::standard(Placement::OnWhite);
        let img = make_white_stimulus(&spec, 1024, 512).unwrap();
        assert_eq!(img.get(511, 256), 57.0);
        assert_eq!(img.get(511, 100), 102.0);
        assert_eq!(img.get(480, 256), 12.0);
    }

    #[test]
    fn white_patch_spans_exactly_one_stripe() {
        let spec = WhiteSpec::standard(Placement::OnBlack);
        let img = make_white_stimulus(&spec, 1024, 512).unwrap();
        let row = img.row(256);
        let cols: Vec<usize> = (0..1024).filter(|&c| row[c] == 57.0).collect();
        assert_eq!(cols.len(), 31);
        assert_eq!(cols[0], 496);
        assert_eq!(*cols.last().unwrap(), 526);
        let rows = (0..512).filter(|&r| img.get(511, r) == 57.0).count();
        assert_eq!(rows, 62);
    }

    #[test]
    fn white_rejects_overrun_and_bad_ordering() {
        let mut spec = WhiteSpec::standard(Placement::OnBlack);
        spec.test_width = 32;
        assert!(matches!(
            make_white_stimulus(&spec, 1024, 512),
            Err(StimulusError::PatchOverrun { .. })
        ));
        let mut spec = WhiteSpec::standard(Placement::OnBlack);
        spec.test_luminance = 120.0;
        assert!(matches!(
            make_white_stimulus(&spec, 1024, 512),
            Err(StimulusError::WhiteOrdering { .. })
        ));
    }

    #[test]
    fn compose_puts_black_on_top() {
        let g = make_square_grating(
            &GratingSpec {
                stripe_width: 31,
                target_luminance: 31.0,
                inducer_luminance: 12.0,
                phase: Phase::TargetFirst,
            },
            1024,
            512,
        )
        .unwrap();
        let d = compose_display(&g, 1024, 0.5).unwrap();
        assert_eq!((d.width(), d.height()), (1024, 1024));
        assert!(d.data()[..1024 * 512].iter().all(|&v| v == 0.5));
        assert_eq!(d.row(512), g.row(0));
        assert_eq!(d.row(1023), g.row(511));
    }

    #[test]
    fn compose_uniform_when_black_matches() {
        let s = LuminanceImage::uniform(64, 32, 7.0).unwrap();
        let d = compose_display(&s, 64, 7.0).unwrap();
        assert!(d.data().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn compose_rejects_mismatch() {
        let s = LuminanceImage::uniform(64, 64, 7.0).unwrap();
        assert!(matches!(
            compose_display(&s, 64, 0.0),
            Err(StimulusError::Dimensions { .. })
        ));
    }

    #[test]
    fn geometry_maps_stripes_to_degrees() {
        let g = PixelGeometry::default();
        assert!((g.px_to_deg(31.0) - 0.97).abs() < 0.01);
        assert!((g.px_to_deg(340.0) - 10.6).abs() < 0.05);
    }

    proptest! {
        #[test]
        fn grating_is_periodic_and_two_valued(
            sw in 1usize..40, w in 40usize..200, t in 1.0f64..200.0, i in 1.0f64..200.0,
            first in any::<bool>(),
        ) {
            let phase = if first { Phase::TargetFirst } else { Phase::InducerFirst };
            let img = grating(sw, t, i, phase, w);
            let row = img.row(0);
            for c in 0..w {
                prop_assert!(row[c] == t || row[c] == i);
                if c + 2 * sw < w {
                    prop_assert_eq!(row[c], row[c + 2 * sw]);
                }
            }
        }

        #[test]
        fn swapping_luminances_and_phase_is_identity(
            sw in 1usize..40, w in 40usize..200, t in 1.0f64..200.0, i in 1.0f64..200.0,
        ) {
            let a = grating(sw, t, i, Phase::TargetFirst, w);
            let b = grating(sw, i, t, Phase::InducerFirst, w);
            prop_assert_eq!(a, b);
        }
    }
}
