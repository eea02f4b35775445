//! Almost periodic functions on the reduced spaces.
//!
//! A vector over `K` is a finite sum `Σ αᵢ e_{bᵢ}` with `e_b(a) = exp(i b(a))`
//! and `b` a rational covector on `Q_K`. Distinct frequencies are orthonormal,
//! so all arithmetic is exact: frequencies are rational tuples and amplitudes
//! are Gaussian rationals. Pulling back along `pr_{KK'}` sends `e_b` to
//! `e_{Bᵀb}`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_complex::Complex;
use num_traits::Zero;

use crate::linalg::Rational;
use crate::reduced_spaces::{ProjectionMatrix, ReducedFrame};

/// Exact complex amplitude.
pub type Amplitude = Complex<Rational>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ApError {
    #[error("frame mismatch: {0}")]
    FrameMismatch(String),
    #[error("frequency has {got} coordinates, frame has {want}")]
    DimensionMismatch { got: usize, want: usize },
}

/// A rational covector `b ∈ Q_K*` in the dual basis of a frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frequency {
    coords: Vec<Rational>,
    frame: ReducedFrame,
}

impl Frequency {
    pub fn new(coords: Vec<Rational>, frame: ReducedFrame) -> Result<Self, ApError> {
        if coords.len() != frame.len() {
            return Err(ApError::DimensionMismatch {
                got: coords.len(),
                want: frame.len(),
            });
        }
        Ok(Frequency { coords, frame })
    }

    pub fn coords(&self) -> &[Rational] {
        &self.coords
    }

    pub fn frame(&self) -> &ReducedFrame {
        &self.frame
    }
}

/// Finite combination of characters over one frame, zero amplitudes pruned.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct APVector {
    frame: ReducedFrame,
    amplitudes: BTreeMap<Vec<Rational>, Amplitude>,
}

impl APVector {
    pub fn zero(frame: ReducedFrame) -> Self {
        APVector {
            frame,
            amplitudes: BTreeMap::new(),
        }
    }

    /// The single character `e_b`.
    pub fn character(b: Frequency) -> Self {
        let mut v = APVector::zero(b.frame);
        v.amplitudes.insert(b.coords, Complex::new(Rational::from_integer(1.into()), Rational::zero()));
        v
    }

    /// Sums the given terms, merging repeated frequencies.
    pub fn from_terms(
        frame: ReducedFrame,
        terms: impl IntoIterator<Item = (Vec<Rational>, Amplitude)>,
    ) -> Result<Self, ApError> {
        let mut v = APVector::zero(frame);
        for (b, a) in terms {
            if b.len() != v.frame.len() {
                return Err(ApError::DimensionMismatch {
                    got: b.len(),
                    want: v.frame.len(),
                });
            }
            v.add_term(b, a);
        }
        Ok(v)
    }

    fn add_term(&mut self, b: Vec<Rational>, a: Amplitude) {
        let sum = match self.amplitudes.remove(&b) {
            Some(old) => old + a,
            None => a,
        };
        if !sum.is_zero() {
            self.amplitudes.insert(b, sum);
        }
    }

    pub fn frame(&self) -> &ReducedFrame {
        &self.frame
    }

    pub fn amplitudes(&self) -> &BTreeMap<Vec<Rational>, Amplitude> {
        &self.amplitudes
    }

    pub fn is_zero(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }
}

fn same_frame(a: &ReducedFrame, b: &ReducedFrame) -> Result<(), ApError> {
    if a != b {
        return Err(ApError::FrameMismatch(format!(
            "{:?} vs {:?}",
            a.dofs().iter().map(|d| d.as_str()).collect::<Vec<_>>(),
            b.dofs().iter().map(|d| d.as_str()).collect::<Vec<_>>()
        )));
    }
    Ok(())
}

/// `⟨v, w⟩ = Σ_b conj(v_b) w_b`, conjugate-linear in `v`.
pub fn inner_product(v: &APVector, w: &APVector) -> Result<Amplitude, ApError> {
    same_frame(&v.frame, &w.frame)?;
    let (small, large, flip) = if v.len() <= w.len() { (v, w, false) } else { (w, v, true) };
    let mut acc = Amplitude::zero();
    for (b, a) in &small.amplitudes {
        if let Some(c) = large.amplitudes.get(b) {
            acc += if flip { c.conj() * a } else { a.conj() * c };
        }
    }
    Ok(acc)
}

/// `U_{K'K} v`: every frequency `b` becomes `Bᵀb` over the source frame of
/// `B`. `B` has full row rank, so distinct frequencies stay distinct.
pub fn promote(v: &APVector, b: &ProjectionMatrix) -> Result<APVector, ApError> {
    same_frame(&v.frame, b.target())?;
    let bt = b.entries().transpose();
    let amplitudes = v
        .amplitudes
        .iter()
        .map(|(freq, a)| (bt.mul_vec(freq), a.clone()))
        .collect();
    Ok(APVector {
        frame: b.source().clone(),
        amplitudes,
    })
}

/// Equality in the inductive limit, decided over a common refinement `K₃`
/// with `b31: K₁ ← K₃` and `b32: K₂ ← K₃`.
pub fn limit_equal(
    v: &APVector,
    w: &APVector,
    b31: &ProjectionMatrix,
    b32: &ProjectionMatrix,
) -> Result<bool, ApError> {
    same_frame(b31.source(), b32.source())?;
    Ok(promote(v, b31)? == promote(w, b32)?)
}
