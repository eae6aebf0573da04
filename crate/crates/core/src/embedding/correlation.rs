//! Circular correlation and convolution of real vectors.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::EmbeddingError;

/// `[a ⋆ b]_k = Σ_i a_i · b_{(k+i) mod d}` by direct O(d²) evaluation.
pub fn circular_correlation(a: &[f64], b: &[f64]) -> Result<Vec<f64>, EmbeddingError> {
    check_dims(a, b)?;
    let mut out = vec![0.0; a.len()];
    correlate_into(a, b, &mut out);
    Ok(out)
}

/// Direct correlation into a caller-provided buffer. Slices must share a length.
pub fn correlate_into(a: &[f64], b: &[f64], out: &mut [f64]) {
    let d = a.len();
    debug_assert!(b.len() == d && out.len() == d);
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        // split the wrap-around so the inner loops index without a modulo
        for (i, &ai) in a[..d - k].iter().enumerate() {
            acc += ai * b[k + i];
        }
        for (i, &ai) in a[d - k..].iter().enumerate() {
            acc += ai * b[i];
        }
        *o = acc;
    }
}

/// `[a ∗ b]_k = Σ_i a_i · b_{(k−i) mod d}`. The adjoint partner of correlation:
/// `∂/∂o (r · (s ⋆ o)) = r ∗ s`.
pub fn convolve_into(a: &[f64], b: &[f64], out: &mut [f64]) {
    let d = a.len();
    debug_assert!(b.len() == d && out.len() == d);
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (i, &ai) in a[..=k].iter().enumerate() {
            acc += ai * b[k - i];
        }
        for (i, &ai) in a[k + 1..].iter().enumerate() {
            acc += ai * b[d - 1 - i];
        }
        *o = acc;
    }
}

pub fn circular_convolution(a: &[f64], b: &[f64]) -> Result<Vec<f64>, EmbeddingError> {
    check_dims(a, b)?;
    let mut out = vec![0.0; a.len()];
    convolve_into(a, b, &mut out);
    Ok(out)
}

/// Correlation through the FFT identity `F(a ⋆ b) = conj(F(a)) · F(b)`. O(d log d).
pub fn circular_correlation_fft(a: &[f64], b: &[f64]) -> Result<Vec<f64>, EmbeddingError> {
    check_dims(a, b)?;
    let d = a.len();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(d);
    let inv = planner.plan_fft_inverse(d);
    let mut fa: Vec<Complex<f64>> = a.iter().map(|&x| Complex::new(x, 0.0)).collect();
    let mut fb: Vec<Complex<f64>> = b.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    let mut prod: Vec<Complex<f64>> = fa.iter().zip(&fb).map(|(x, y)| x.conj() * y).collect();
    inv.process(&mut prod);
    let scale = 1.0 / d as f64;
    Ok(prod.into_iter().map(|c| c.re * scale).collect())
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<(), EmbeddingError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Literal transcription of the definition, modulo arithmetic and all.
    fn reference(a: &[f64], b: &[f64]) -> Vec<f64> {
        let d = a.len();
        (0..d).map(|k| (0..d).map(|i| a[i] * b[(k + i) % d]).sum()).collect()
    }

    fn reference_conv(a: &[f64], b: &[f64]) -> Vec<f64> {
        let d = a.len();
        (0..d).map(|k| (0..d).map(|i| a[i] * b[(k + d - i) % d]).sum()).collect()
    }

    #[test]
    fn two_dim_example() {
        assert_eq!(circular_correlation(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), vec![11.0, 10.0]);
    }

    #[test]
    fn one_hot_identity() {
        let b = [0.3, -1.2, 5.0, 7.5];
        assert_eq!(circular_correlation(&[1.0, 0.0, 0.0, 0.0], &b).unwrap(), b.to_vec());
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            circular_correlation(&[1.0, 2.0], &[1.0]),
            Err(EmbeddingError::DimensionMismatch { .. })
        ));
        assert!(circular_correlation_fft(&[], &[]).is_err());
    }

    #[test]
    fn direct_matches_reference_and_fft() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &d in &[1usize, 2, 3, 16, 300] {
            for _ in 0..20 {
                let a: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let b: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let direct = circular_correlation(&a, &b).unwrap();
                let refv = reference(&a, &b);
                let fft = circular_correlation_fft(&a, &b).unwrap();
                let scale = refv.iter().fold(1e-300f64, |m, x| m.max(x.abs()));
                for k in 0..d {
                    assert!((direct[k] - refv[k]).abs() <= 1e-12 * scale.max(1.0));
                    assert!((fft[k] - refv[k]).abs() <= 1e-10 * scale, "d={d} k={k}");
                }
                let conv = circular_convolution(&a, &b).unwrap();
                for (x, y) in conv.iter().zip(reference_conv(&a, &b)) {
                    assert!((x - y).abs() < 1e-12);
                }
                assert!((direct[0] - dot(&a, &b)).abs() < 1e-12);
            }
        }
    }
}
