//! Scalar fixed-point quantization formulas.
//!
//! `bits` is the target width, `sign` selects the signed (1) or unsigned (0)
//! convention and `scale` is the real value mapped to the top of the range.
//! A value is scaled by `2^(bits - sign) / scale`, rounded half to even,
//! clipped to the integer range, and (for the simulated form) mapped back.

use crate::tensor::round_half_even;

/// Inclusive integer range for `bits` and `sign`.
pub fn clip_bounds(bits: u32, sign: u32) -> (f64, f64) {
    if sign == 1 {
        let half = libm::exp2((bits - 1) as f64);
        (-half, half - 1.0)
    } else {
        (0.0, libm::exp2(bits as f64) - 1.0)
    }
}

/// `2^(bits - sign)`.
pub fn step_count(bits: u32, sign: u32) -> f64 {
    libm::exp2(bits as f64 - sign as f64)
}

/// Rounded and scaled value before clipping.
pub fn prescaled(x: f64, bits: u32, sign: u32, scale: f64) -> f64 {
    round_half_even(x / scale * step_count(bits, sign))
}

/// The integer a real value quantizes to.
pub fn quantize(x: f64, bits: u32, sign: u32, scale: f64) -> f64 {
    let (lo, hi) = clip_bounds(bits, sign);
    prescaled(x, bits, sign, scale).clamp(lo, hi)
}

/// Maps a quantized integer back to the real line.
pub fn dequantize(q: f64, bits: u32, sign: u32, scale: f64) -> f64 {
    q * scale / step_count(bits, sign)
}

/// Simulated quantization: quantize then dequantize, staying in floating
/// point.
pub fn simulated_quantize(x: f64, bits: u32, sign: u32, scale: f64) -> f64 {
    dequantize(quantize(x, bits, sign, scale), bits, sign, scale)
}

/// True when the rounded, unclipped lattice value of `x` falls outside the
/// integer range.
pub fn overflows(x: f64, bits: u32, sign: u32, scale: f64) -> bool {
    let (lo, hi) = clip_bounds(bits, sign);
    let q = prescaled(x, bits, sign, scale);
    !(lo..=hi).contains(&q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_values() {
        assert_eq!(simulated_quantize(0.0, 8, 1, 1.0), 0.0);
        assert_eq!(simulated_quantize(0.30, 8, 1, 1.0), 38.0 / 128.0);
        assert_eq!(simulated_quantize(0.30, 8, 1, 1.0), 0.296875);
        assert_eq!(simulated_quantize(10.0, 8, 1, 1.0), 0.9921875);
        assert_eq!(quantize(0.30, 8, 1, 1.0), 38.0);
        assert_eq!(quantize(10.0, 8, 1, 1.0), 127.0);
        assert_eq!(clip_bounds(8, 0), (0.0, 255.0));
        // 127.4 rounds into range, 127.6 does not.
        assert!(!overflows(127.4 / 128.0, 8, 1, 1.0));
        assert!(overflows(127.6 / 128.0, 8, 1, 1.0));
        assert!(!overflows(-1.0, 8, 1, 1.0));
        assert!(overflows(-0.6 / 16.0, 4, 0, 1.0));
    }
}
