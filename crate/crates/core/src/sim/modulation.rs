//! Square QAM constellations with Gray mapping, the slicer, and the THP
//! modulo operator.
//!
//! Unit-energy constellations put the per-axis levels at odd multiples of
//! the half-spacing `1/√(2(M−1)/3)`; the THP modulo period per axis is the
//! extended-constellation period `√M · spacing`, so in-region points are
//! untouched and every lattice translate folds back onto the constellation.

use crate::rng::SeededRng;
use crate::{CVec, Scalar};
use nalgebra::Complex;
use num_traits::Float;

/// Constellation family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModKind {
    Qpsk,
    Qam16,
}

/// Modulation descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModulationScheme {
    pub kind: ModKind,
    /// Gray-code the per-axis bit labels (plain binary otherwise).
    pub gray: bool,
    /// Normalize the constellation to unit average energy.
    pub unit_energy: bool,
}

impl ModulationScheme {
    pub fn qpsk() -> Self {
        ModulationScheme { kind: ModKind::Qpsk, gray: true, unit_energy: true }
    }

    pub fn qam16() -> Self {
        ModulationScheme { kind: ModKind::Qam16, gray: true, unit_energy: true }
    }

    /// Constellation size M.
    pub fn order(&self) -> usize {
        match self.kind {
            ModKind::Qpsk => 4,
            ModKind::Qam16 => 16,
        }
    }

    pub fn bits_per_symbol(&self) -> usize {
        match self.kind {
            ModKind::Qpsk => 2,
            ModKind::Qam16 => 4,
        }
    }

    fn bits_per_axis(&self) -> usize {
        self.bits_per_symbol() / 2
    }

    fn levels_per_axis(&self) -> usize {
        1 << self.bits_per_axis()
    }

    /// Half-spacing of the level grid (levels sit at odd multiples).
    pub fn half_spacing<T: Scalar>(&self) -> T {
        if self.unit_energy {
            let m = self.order() as f64;
            T::one() / Float::sqrt(T::from_f64_lit(2.0 * (m - 1.0) / 3.0))
        } else {
            T::one()
        }
    }

    /// THP modulo period per axis: `levels · spacing`.
    pub fn modulo_base<T: Scalar>(&self) -> T {
        let spacing = T::from_f64_lit(2.0) * self.half_spacing::<T>();
        T::from_f64_lit(self.levels_per_axis() as f64) * spacing
    }

    /// Per-axis bit label of each level index (level 0 is the most
    /// negative).
    fn level_label(&self, index: usize) -> u8 {
        if self.gray {
            (index ^ (index >> 1)) as u8
        } else {
            index as u8
        }
    }

    fn axis_of_bits<T: Scalar>(&self, bits: u8) -> T {
        let levels = self.levels_per_axis();
        let mut index = 0;
        for i in 0..levels {
            if self.level_label(i) == bits {
                index = i;
                break;
            }
        }
        let amp = 2.0 * index as f64 - (levels as f64 - 1.0);
        T::from_f64_lit(amp) * self.half_spacing::<T>()
    }

    fn bits_of_axis<T: Scalar>(&self, value: T) -> u8 {
        let levels = self.levels_per_axis() as i64;
        let scaled = value / self.half_spacing::<T>();
        // Nearest odd level: 2i − (L−1) for i in 0..L.
        let idx = (Float::round((scaled + T::from_f64_lit((levels - 1) as f64)) / T::from_f64_lit(2.0)))
            .to_f64()
            .unwrap_or(0.0) as i64;
        let idx = idx.clamp(0, levels - 1) as usize;
        self.level_label(idx)
    }

    /// Map `bits_per_symbol` bits (low bits of `bits`) onto a constellation
    /// point: the low half labels the in-phase axis.
    pub fn map_bits<T: Scalar>(&self, bits: u8) -> Complex<T> {
        let axis_bits = self.bits_per_axis();
        let mask = (1u8 << axis_bits) - 1;
        Complex::new(
            self.axis_of_bits(bits & mask),
            self.axis_of_bits((bits >> axis_bits) & mask),
        )
    }

    /// Nearest-point decision returning the bit label.
    pub fn slice_bits<T: Scalar>(&self, z: Complex<T>) -> u8 {
        let axis_bits = self.bits_per_axis();
        self.bits_of_axis(z.re) | (self.bits_of_axis(z.im) << axis_bits)
    }

    /// Uniform random symbol: its bit label and constellation point.
    pub fn random_symbol<T: Scalar>(&self, rng: &mut SeededRng) -> (u8, Complex<T>) {
        let bits = rng.below(self.order() as u64) as u8;
        (bits, self.map_bits(bits))
    }
}

/// Wrap every real and imaginary component into `[−base/2, base/2)`.
pub fn thp_modulo<T: Scalar>(x: &CVec<T>, base: T) -> CVec<T> {
    x.map(|z| Complex::new(wrap(z.re, base), wrap(z.im, base)))
}

fn wrap<T: Scalar>(v: T, base: T) -> T {
    v - base * Float::floor(v / base + T::from_f64_lit(0.5))
}
