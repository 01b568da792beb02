//! Zero-padded linear convolution through 2-D FFTs.
//!
//! Output has the input's size with the kernel center aligned on each output
//! pixel ("same" convolution). Two real kernels are transformed together as
//! the real and imaginary parts of one complex buffer; since the image is
//! real, the real and imaginary parts of the product's inverse are the two
//! separate convolutions.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::filterbank::{FilterError, Kernel2D};

/// Real-valued 2-D field, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Field {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self, FilterError> {
        if data.len() != width * height || width == 0 || height == 0 {
            return Err(FilterError::Dimensions(format!(
                "{} values for a {width}x{height} field",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Anything that can be convolved: a width, a height and row-major samples.
pub trait Raster {
    fn dims(&self) -> (usize, usize);
    fn samples(&self) -> &[f64];
}

impl Raster for Field {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
    fn samples(&self) -> &[f64] {
        &self.data
    }
}

impl Raster for crate::stimuli::LuminanceImage {
    fn dims(&self) -> (usize, usize) {
        (self.width(), self.height())
    }
    fn samples(&self) -> &[f64] {
        self.data()
    }
}

/// Smallest 5-smooth integer >= n.
pub fn fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// FFT plans for one padded size.
struct Plans {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Plans {
    fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            width,
            height,
            row_fwd: planner.plan_fft_forward(width),
            col_fwd: planner.plan_fft_forward(height),
            row_inv: planner.plan_fft_inverse(width),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    /// Spatial row-major buffer -> spectrum stored transposed (column-major).
    fn forward(&self, buf: &mut Vec<Complex64>, tmp: &mut Vec<Complex64>) {
        for row in buf.chunks_exact_mut(self.width) {
            self.row_fwd.process(row);
        }
        transpose(buf, tmp, self.width, self.height);
        for col in tmp.chunks_exact_mut(self.height) {
            self.col_fwd.process(col);
        }
        std::mem::swap(buf, tmp);
    }

    /// Inverse of [`Plans::forward`], unnormalized.
    fn inverse(&self, buf: &mut Vec<Complex64>, tmp: &mut Vec<Complex64>) {
        for col in buf.chunks_exact_mut(self.height) {
            self.col_inv.process(col);
        }
        transpose(buf, tmp, self.height, self.width);
        for row in tmp.chunks_exact_mut(self.width) {
            self.row_inv.process(row);
        }
        std::mem::swap(buf, tmp);
    }
}

/// Transposes a `rows x cols` row-major matrix given as `cols` per row.
fn transpose(src: &[Complex64], dst: &mut Vec<Complex64>, cols: usize, rows: usize) {
    const BLOCK: usize = 32;
    dst.resize(src.len(), Complex64::default());
    for rb in (0..rows).step_by(BLOCK) {
        for cb in (0..cols).step_by(BLOCK) {
            for r in rb..(rb + BLOCK).min(rows) {
                for c in cb..(cb + BLOCK).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Image spectrum at a padded size large enough for kernels up to `max_radius`.
pub struct SpectralImage {
    width: usize,
    height: usize,
    plans: Plans,
    spectrum: Vec<Complex64>,
}

impl SpectralImage {
    pub fn new<R: Raster>(image: &R, max_radius: usize) -> Self {
        let (width, height) = image.dims();
        // circular wrap stays inside the zero padding when pad >= radius
        let pw = fast_len(width + max_radius);
        let ph = fast_len(height + max_radius);
        let plans = Plans::new(pw, ph);
        let mut buf = vec![Complex64::default(); pw * ph];
        for (y, row) in image.samples().chunks_exact(width).enumerate() {
            for (x, &v) in row.iter().enumerate() {
                buf[y * pw + x] = Complex64::new(v, 0.0);
            }
        }
        let mut tmp = Vec::new();
        plans.forward(&mut buf, &mut tmp);
        Self {
            width,
            height,
            plans,
            spectrum: buf,
        }
    }

    pub fn max_radius(&self) -> usize {
        (self.plans.width - self.width).min(self.plans.height - self.height)
    }

    fn check(&self, kernel: &Kernel2D) -> Result<(), FilterError> {
        if kernel.side() > self.width || kernel.side() > self.height {
            return Err(FilterError::KernelTooLarge {
                side: kernel.side(),
                width: self.width,
                height: self.height,
            });
        }
        if kernel.radius() > self.max_radius() {
            return Err(FilterError::Dimensions(format!(
                "kernel radius {} exceeds the padding {}",
                kernel.radius(),
                self.max_radius()
            )));
        }
        Ok(())
    }

    /// Convolves with one kernel, or two at once when `second` is given.
    pub fn convolve_pair(
        &self,
        first: &Kernel2D,
        second: Option<&Kernel2D>,
    ) -> Result<(Field, Option<Field>), FilterError> {
        self.check(first)?;
        if let Some(k) = second {
            self.check(k)?;
        }
        let (pw, ph) = (self.plans.width, self.plans.height);
        let mut buf = vec![Complex64::default(); pw * ph];
        place_kernel(&mut buf, pw, ph, first, |slot, v| slot.re = v);
        if let Some(k) = second {
            place_kernel(&mut buf, pw, ph, k, |slot, v| slot.im = v);
        }
        let mut tmp = Vec::new();
        self.plans.forward(&mut buf, &mut tmp);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= s;
        }
        self.plans.inverse(&mut buf, &mut tmp);

        let norm = 1.0 / (pw * ph) as f64;
        let (w, h) = (self.width, self.height);
        let mut a = Field::zeros(w, h);
        let mut b = second.map(|_| Field::zeros(w, h));
        for y in 0..h {
            let src = &buf[y * pw..y * pw + w];
            for (dst, s) in a.data[y * w..(y + 1) * w].iter_mut().zip(src) {
                *dst = s.re * norm;
            }
            if let Some(b) = b.as_mut() {
                for (dst, s) in b.data[y * w..(y + 1) * w].iter_mut().zip(src) {
                    *dst = s.im * norm;
                }
            }
        }
        Ok((a, b))
    }
}

fn place_kernel(
    buf: &mut [Complex64],
    pw: usize,
    ph: usize,
    kernel: &Kernel2D,
    mut set: impl FnMut(&mut Complex64, f64),
) {
    let side = kernel.side();
    let r = kernel.radius() as isize;
    for ky in 0..side {
        let y = (ky as isize - r).rem_euclid(ph as isize) as usize;
        for kx in 0..side {
            let x = (kx as isize - r).rem_euclid(pw as isize) as usize;
            set(&mut buf[y * pw + x], kernel.taps()[ky * side + kx]);
        }
    }
}

/// Zero-padded "same" convolution of `image` with `kernel`.
pub fn convolve<R: Raster>(image: &R, kernel: &Kernel2D) -> Result<Field, FilterError> {
    let (w, h) = image.dims();
    if kernel.side() > w || kernel.side() > h {
        return Err(FilterError::KernelTooLarge {
            side: kernel.side(),
            width: w,
            height: h,
        });
    }
    let spectral = SpectralImage::new(image, kernel.radius());
    Ok(spectral.convolve_pair(kernel, None)?.0)
}
