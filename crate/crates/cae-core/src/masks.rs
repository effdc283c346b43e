//! Per-label compression masks over the code space.
//!
//! A code vector of length `(o + 1) * m0` is split into `o + 1` consecutive
//! blocks of `m0` entries; block `l` is the *compression space* of label `l`.
//! The mask of label `l` is the indicator vector of its block. Masks drive
//! three operations:
//!
//! - the projection weight of a code onto a label (sum of the code entries in
//!   that label's block), which scores how strongly the encoder commits the
//!   input to the label,
//! - the projection of a code onto a label (all other blocks zeroed), which
//!   is what the decoder reconstructs from,
//! - the pseudo-label (label with the largest projection weight; ties break
//!   to the lowest label).

use crate::error::{CaeError, Result};
use crate::tensor::Scalar;

/// The family of per-label masks for a fixed label count and block size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskBank {
    /// Largest label; labels run `0..=o`.
    o: usize,
    /// Entries per label block.
    m0: usize,
}

impl MaskBank {
    /// Masks for labels `0..=o` with `m0` code entries per label.
    pub fn new(o: usize, m0: usize) -> Result<Self> {
        if m0 == 0 {
            return Err(CaeError::invalid("mask block size must be positive"));
        }
        Ok(MaskBank { o, m0 })
    }

    /// Largest label.
    pub fn max_label(&self) -> usize {
        self.o
    }

    /// Number of labels (`o + 1`).
    pub fn num_labels(&self) -> usize {
        self.o + 1
    }

    /// Entries per label block.
    pub fn block_len(&self) -> usize {
        self.m0
    }

    /// Total code length `(o + 1) * m0`.
    pub fn code_len(&self) -> usize {
        (self.o + 1) * self.m0
    }

    /// Index range of label `l`'s block within a code vector.
    pub fn block_range(&self, l: usize) -> std::ops::Range<usize> {
        debug_assert!(l <= self.o, "label {l} out of 0..={}", self.o);
        l * self.m0..(l + 1) * self.m0
    }

    /// The mask of label `l` as a dense 0/1 vector.
    pub fn mask<S: Scalar>(&self, l: usize) -> Vec<S> {
        let mut m = vec![S::ZERO; self.code_len()];
        for v in &mut m[self.block_range(l)] {
            *v = S::ONE;
        }
        m
    }

    /// Projection weight of `code` onto label `l`: the dot product with the
    /// label's mask, i.e. the sum of the code entries in block `l`.
    pub fn weight<S: Scalar>(&self, code: &[S], l: usize) -> S {
        debug_assert_eq!(code.len(), self.code_len(), "code length");
        let mut acc = S::ZERO;
        for &v in &code[self.block_range(l)] {
            acc += v;
        }
        acc
    }

    /// Projection weights onto every label, in label order.
    pub fn weights<S: Scalar>(&self, code: &[S]) -> Vec<S> {
        (0..self.num_labels()).map(|l| self.weight(code, l)).collect()
    }

    /// Projection of `code` onto label `l`: the element-wise product with the
    /// label's mask (block `l` kept, everything else zeroed).
    pub fn project<S: Scalar>(&self, code: &[S], l: usize) -> Vec<S> {
        let mut out = vec![S::ZERO; self.code_len()];
        let r = self.block_range(l);
        out[r.clone()].copy_from_slice(&code[r]);
        out
    }

    /// In-place variant of [`project`](Self::project) writing into `out`.
    pub fn project_into<S: Scalar>(&self, code: &[S], l: usize, out: &mut [S]) {
        debug_assert_eq!(out.len(), self.code_len(), "projection buffer");
        out.fill(S::ZERO);
        let r = self.block_range(l);
        out[r.clone()].copy_from_slice(&code[r]);
    }

    /// Pseudo-label of a code: the label with the largest projection weight.
    /// Ties resolve to the lowest label.
    pub fn pseudo_label<S: Scalar>(&self, code: &[S]) -> usize {
        let mut best = 0usize;
        let mut best_w = self.weight(code, 0);
        for l in 1..self.num_labels() {
            let w = self.weight(code, l);
            if w > best_w {
                best = l;
                best_w = w;
            }
        }
        best
    }
}
