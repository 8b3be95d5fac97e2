//! Causal convolution kernels backing the Toeplitz operator.

use rustfft::{num_complex::Complex, FftPlanner};

/// Horizon above which the FFT path takes over from the direct sum.
pub(crate) const DIRECT_LIMIT: usize = 2048;

/// y[t] = sum_{k=0..=t} g[k] * u[t-k], truncated to the common horizon.
pub(crate) fn causal_conv_direct(taps: &[f64], u: &[f64]) -> Vec<f64> {
    let n = taps.len();
    debug_assert_eq!(n, u.len());
    let mut y = vec![0.0; n];
    for (t, yt) in y.iter_mut().enumerate() {
        let mut acc = 0.0;
        for k in 0..=t {
            acc += taps[k] * u[t - k];
        }
        *yt = acc;
    }
    y
}

/// Same contract as `causal_conv_direct`, via zero-padded FFT.
pub(crate) fn causal_conv_fft(taps: &[f64], u: &[f64]) -> Vec<f64> {
    let n = taps.len();
    debug_assert_eq!(n, u.len());
    let size = (2 * n - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(size);
    let ifft = planner.plan_fft_inverse(size);

    let mut a: Vec<Complex<f64>> = taps
        .iter()
        .map(|&x| Complex::new(x, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut b: Vec<Complex<f64>> = u
        .iter()
        .map(|&x| Complex::new(x, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    fft.process(&mut a);
    fft.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    ifft.process(&mut a);
    let scale = 1.0 / size as f64;
    a[..n].iter().map(|c| c.re * scale).collect()
}

pub(crate) fn causal_conv(taps: &[f64], u: &[f64]) -> Vec<f64> {
    if taps.len() <= DIRECT_LIMIT {
        causal_conv_direct(taps, u)
    } else {
        causal_conv_fft(taps, u)
    }
}
