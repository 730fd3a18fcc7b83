//! Thin 2D FFT helpers over `rustfft`.
//!
//! `fft2` / `ifft2` are unnormalized (forward uses `e^{-2 pi i}`, inverse
//! `e^{+2 pi i}`); `ifft2_normalized` divides by `n^2`. Lattice frequency
//! index `k` on an `n`-grid of physical side `L` maps to `zeta = signed(k)/L`
//! cycles per unit length.

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;

fn transform_rows(a: &mut Array2<Complex64>, inverse: bool) {
    let n = a.nrows();
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(a.ncols())
    } else {
        planner.plan_fft_forward(a.ncols())
    };
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    for i in 0..n {
        let mut row: Vec<Complex64> = a.row(i).to_vec();
        fft.process_with_scratch(&mut row, &mut scratch);
        for (j, v) in row.into_iter().enumerate() {
            a[[i, j]] = v;
        }
    }
}

fn transpose(a: &Array2<Complex64>) -> Array2<Complex64> {
    a.t().to_owned()
}

/// Unnormalized forward 2D FFT.
pub fn fft2(a: &Array2<Complex64>) -> Array2<Complex64> {
    let mut out = a.clone();
    transform_rows(&mut out, false);
    let mut out = transpose(&out);
    transform_rows(&mut out, false);
    transpose(&out)
}

/// Unnormalized inverse 2D FFT (sum with `e^{+2 pi i}` phases).
pub fn ifft2(a: &Array2<Complex64>) -> Array2<Complex64> {
    let mut out = a.clone();
    transform_rows(&mut out, true);
    let mut out = transpose(&out);
    transform_rows(&mut out, true);
    transpose(&out)
}

/// Inverse 2D FFT with the `1/n^2` normalization, so
/// `ifft2_normalized(fft2(a)) == a` up to roundoff.
pub fn ifft2_normalized(a: &Array2<Complex64>) -> Array2<Complex64> {
    let n2 = (a.nrows() * a.ncols()) as f64;
    let mut out = ifft2(a);
    out.mapv_inplace(|v| v / n2);
    out
}

/// Signed frequency index for position `k` on an `n`-point DFT.
pub fn signed_index(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Physical frequency (cycles per unit length) of DFT bin `(kx, ky)` on an
/// `n`-grid with physical side `l`.
pub fn bin_frequency(kx: usize, ky: usize, n: usize, l: f64) -> (f64, f64) {
    (
        signed_index(kx, n) as f64 / l,
        signed_index(ky, n) as f64 / l,
    )
}

/// Lift a real array to complex.
pub fn to_complex(a: &Array2<f64>) -> Array2<Complex64> {
    a.mapv(|v| Complex64::new(v, 0.0))
}

/// Real parts of a complex array.
pub fn real_part(a: &Array2<Complex64>) -> Array2<f64> {
    a.mapv(|v| v.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn roundtrip_and_phase_convention() {
        let n = 16;
        let mut a = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                a[[i, j]] = Complex64::new((i * 3 + j) as f64 * 0.1 - 1.0, 0.0);
            }
        }
        let back = ifft2_normalized(&fft2(&a));
        for (x, y) in a.iter().zip(back.iter()) {
            assert!((x - y).norm() < 1e-12);
        }
        // A pure mode e^{2 pi i k.x/n} concentrates at bin k under fft2.
        let (kx, ky) = (3, 5);
        let mut mode = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                let phase = 2.0 * std::f64::consts::PI * (kx * i + ky * j) as f64 / n as f64;
                mode[[i, j]] = Complex64::new(phase.cos(), phase.sin());
            }
        }
        let hat = fft2(&mode);
        assert!((hat[[kx, ky]].re - (n * n) as f64).abs() < 1e-9);
        let off = hat[[0, 0]].norm() + hat[[1, 1]].norm();
        assert!(off < 1e-9);
    }

    #[test]
    fn signed_indices() {
        assert_eq!(signed_index(0, 8), 0);
        assert_eq!(signed_index(4, 8), 4);
        assert_eq!(signed_index(5, 8), -3);
        assert_eq!(signed_index(7, 8), -1);
    }
}
