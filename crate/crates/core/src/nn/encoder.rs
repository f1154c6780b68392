//! Permutation-invariant point-set encoder: a shared per-point MLP followed by a
//! feature-wise max over points. There are no input or feature transform
//! sub-networks, so the embedding is not made invariant to rigid motions.

use super::layers::{Mlp, Module};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::{Error, Result};
use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct SetEncoderConfig {
    pub point_dim: usize,
    pub hidden: Vec<usize>,
    pub out_dim: usize,
}

impl SetEncoderConfig {
    pub fn descriptor(&self) -> String {
        let hidden: Vec<String> = self.hidden.iter().map(|h| h.to_string()).collect();
        format!(
            "set_encoder point_dim={} hidden={} out_dim={}",
            self.point_dim,
            hidden.join(","),
            self.out_dim
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SetEncoder {
    config: SetEncoderConfig,
    mlp: Mlp,
}

impl SetEncoder {
    pub fn new<R: Rng + ?Sized>(config: SetEncoderConfig, rng: &mut R) -> Self {
        let mut widths = vec![config.point_dim];
        widths.extend(&config.hidden);
        widths.push(config.out_dim);
        let mlp = Mlp::new(&widths, false, rng);
        Self { config, mlp }
    }

    pub fn config(&self) -> &SetEncoderConfig {
        &self.config
    }

    fn check(&self, points: &Tensor) -> Result<()> {
        if points.shape().len() != 2 || points.cols() != self.config.point_dim {
            return Err(Error::ShapeMismatch {
                op: "encode_set",
                expected: vec![points.rows(), self.config.point_dim],
                got: points.shape().to_vec(),
            });
        }
        if points.rows() == 0 {
            return Err(Error::EmptyInput("encode_set: no points"));
        }
        Ok(())
    }

    /// Per-point features before pooling, `m × out_dim`.
    pub fn point_features(&self, points: &Tensor) -> Result<Tensor> {
        self.check(points)?;
        Ok(self.mlp.apply(points))
    }

    /// Embeds one set of `m ≥ 1` points (`m × point_dim`).
    pub fn encode_set(&self, points: &Tensor) -> Result<Tensor> {
        let feats = self.point_features(points)?;
        let f = feats.cols();
        let mut out = feats.row(0).to_vec();
        for i in 1..feats.rows() {
            for (o, v) in out.iter_mut().zip(&feats.data()[i * f..(i + 1) * f]) {
                if *v > *o {
                    *o = *v;
                }
            }
        }
        Ok(Tensor::vector(out))
    }

    /// Embeds several sets stacked row-wise; set `s` spans rows `offsets[s]..offsets[s+1]`.
    pub fn encode_batch(&self, points: &Tensor, offsets: &[usize]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let p = tape.constant_ref(points);
        let out = self.record(&mut tape, p, offsets)?;
        Ok(tape.value(out).clone())
    }

    pub fn record<'p>(&'p self, tape: &mut Tape<'p>, points: Var, offsets: &[usize]) -> Result<Var> {
        self.check(tape.value(points))?;
        let feats = self.mlp.record(tape, points)?;
        tape.segment_max(feats, offsets)
    }
}

impl Module for SetEncoder {
    fn params(&self) -> Vec<&Tensor> {
        self.mlp.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.mlp.params_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn encoder() -> SetEncoder {
        SetEncoder::new(
            SetEncoderConfig {
                point_dim: 3,
                hidden: vec![16],
                out_dim: 8,
            },
            &mut rng::stream(0, rng::INIT, 9),
        )
    }

    fn cloud(n: usize) -> Tensor {
        Tensor::matrix(n, 3, (0..3 * n).map(|i| ((i * 7) as f64 * 0.31).sin()).collect()).unwrap()
    }

    #[test]
    fn empty_set_is_rejected() {
        assert!(matches!(
            encoder().encode_set(&Tensor::zeros(&[0, 3])),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn reversed_and_duplicated_sets_match() {
        let enc = encoder();
        let pts = cloud(10);
        let base = enc.encode_set(&pts).unwrap();

        let rev: Vec<Vec<f64>> = (0..10).rev().map(|i| pts.row(i).to_vec()).collect();
        let rev = Tensor::from_rows(&rev, 3).unwrap();
        assert_eq!(enc.encode_set(&rev).unwrap(), base);

        let dup: Vec<Vec<f64>> = (0..20).map(|i| pts.row(i % 10).to_vec()).collect();
        let dup = Tensor::from_rows(&dup, 3).unwrap();
        assert_eq!(enc.encode_set(&dup).unwrap(), base);
    }

    #[test]
    fn batch_matches_single() {
        let enc = encoder();
        let (a, b) = (cloud(4), cloud(7));
        let mut rows: Vec<Vec<f64>> = (0..4).map(|i| a.row(i).to_vec()).collect();
        rows.extend((0..7).map(|i| b.row(i).to_vec()));
        let stacked = Tensor::from_rows(&rows, 3).unwrap();
        let batch = enc.encode_batch(&stacked, &[0, 4, 11]).unwrap();
        assert_eq!(batch.row(0), enc.encode_set(&a).unwrap().data());
        assert_eq!(batch.row(1), enc.encode_set(&b).unwrap().data());
    }
}
