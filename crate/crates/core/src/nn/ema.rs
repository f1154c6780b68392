use super::tensor::Tensor;
use crate::{Error, Result};

/// Exponential moving average of a parameter list.
#[derive(Clone, Debug, PartialEq)]
pub struct Ema {
    pub decay: f64,
    /// Steps before this one copy the live parameters instead of averaging.
    pub start_step: u64,
    shadow: Vec<Tensor>,
}

impl Ema {
    pub const DEFAULT_DECAY: f64 = 0.999;

    pub fn new<'a>(decay: f64, start_step: u64, params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        Self {
            decay,
            start_step,
            shadow: params.into_iter().cloned().collect(),
        }
    }

    pub fn from_shadow(decay: f64, start_step: u64, shadow: Vec<Tensor>) -> Self {
        Self {
            decay,
            start_step,
            shadow,
        }
    }

    pub fn shadow(&self) -> &[Tensor] {
        &self.shadow
    }

    fn check<'a>(&self, params: impl ExactSizeIterator<Item = &'a Tensor>) -> Result<()> {
        if params.len() != self.shadow.len() {
            return Err(Error::ShapeMismatch {
                op: "ema",
                expected: vec![self.shadow.len()],
                got: vec![params.len()],
            });
        }
        for (p, s) in params.zip(&self.shadow) {
            if p.shape() != s.shape() {
                return Err(Error::ShapeMismatch {
                    op: "ema",
                    expected: s.shape().to_vec(),
                    got: p.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    /// `shadow ← d·shadow + (1−d)·params` once `step ≥ start_step`, else a copy.
    pub fn update(&mut self, step: u64, params: &[&Tensor]) -> Result<()> {
        self.check(params.iter().copied())?;
        let d = if step < self.start_step { 0.0 } else { self.decay };
        for (s, p) in self.shadow.iter_mut().zip(params) {
            for (si, pi) in s.data_mut().iter_mut().zip(p.data()) {
                *si = d * *si + (1.0 - d) * pi;
            }
        }
        Ok(())
    }

    /// Exchanges live and shadow parameters.
    pub fn swap(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        self.check(params.iter().map(|p| &**p))?;
        for (s, p) in self.shadow.iter_mut().zip(params.iter_mut()) {
            std::mem::swap(s, *p);
        }
        Ok(())
    }
}
