//! Floating-point abstraction: every numeric code path in this crate is
//! generic over [`Real`], implemented for `f32` and `f64`.

use rand::distributions::uniform::SampleUniform;
use rand::Rng;
use rand_distr::StandardNormal;

/// Scalar type for all simulator and learner math.
///
/// `f64` is the default used by the CLI and the test suites; `f32` is
/// available for memory-bound experiments.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumAssignOps
    + ndarray::LinalgScalar
    + SampleUniform
    + std::iter::Sum
    + std::fmt::Display
    + std::fmt::Debug
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal (configuration constants, thresholds).
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    /// Draws one standard-normal sample.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Bit-exact textual encoding, used by checkpoint files.
    fn encode_bits(self) -> String;

    /// Inverse of [`Real::encode_bits`].
    fn decode_bits(s: &str) -> Option<Self>;
}

impl Real for f64 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }

    fn encode_bits(self) -> String {
        format!("{:016x}", self.to_bits())
    }

    fn decode_bits(s: &str) -> Option<Self> {
        u64::from_str_radix(s, 16).ok().map(f64::from_bits)
    }
}

impl Real for f32 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }

    fn encode_bits(self) -> String {
        format!("{:08x}", self.to_bits())
    }

    fn decode_bits(s: &str) -> Option<Self> {
        u32::from_str_radix(s, 16).ok().map(f32::from_bits)
    }
}

/// dBm to linear milliwatts.
pub fn dbm_to_mw<F: Real>(dbm: F) -> F {
    F::lit(10.0).powf(dbm / F::lit(10.0))
}

/// Linear milliwatts to dBm.
pub fn mw_to_dbm<F: Real>(mw: F) -> F {
    F::lit(10.0) * mw.log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_roundtrip_is_exact() {
        for v in [0.0_f64, -0.0, 1.5, f64::MIN_POSITIVE, -123.456e-30, f64::INFINITY] {
            let enc = v.encode_bits();
            let dec = f64::decode_bits(&enc).unwrap();
            assert_eq!(v.to_bits(), dec.to_bits());
        }
        let v = 0.1_f32;
        assert_eq!(v.to_bits(), f32::decode_bits(&v.encode_bits()).unwrap().to_bits());
    }

    #[test]
    fn dbm_conversions() {
        assert!((dbm_to_mw(0.0_f64) - 1.0).abs() < 1e-12);
        assert!((dbm_to_mw(30.0_f64) - 1000.0).abs() < 1e-9);
        assert!((mw_to_dbm(1.0_f64)).abs() < 1e-12);
    }
}
