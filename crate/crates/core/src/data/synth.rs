//! Synthetic multi-subject motor-imagery corpus with planted spatial patterns.
//!
//! A shared orthogonal mixing matrix `A` is drawn once. Subject `z` mixes its
//! latent sources with `A_z = R_z·A`, where `R_z` is a random rotation whose
//! angle scales with the configured divergence. Latent 0 carries `σ_hi²` power
//! under class 0 and `σ_lo²` under class 1, latent 1 the reverse, and every
//! other latent carries `noise_floor` under both classes.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Epoch, Label, LabeledEpoch, SubjectDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_subjects: usize,
    pub channels: usize,
    pub samples: usize,
    pub epochs_per_class: usize,
    /// Power of the favoured discriminative latent.
    pub sigma_hi: f64,
    /// Power of the suppressed discriminative latent.
    pub sigma_lo: f64,
    /// Rotation scale between subjects, in radians.
    pub divergence: f64,
    pub noise_floor: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// Nine subjects, 22 channels, 2 s at 125 Hz, 72 epochs per class.
    fn default() -> Self {
        SynthConfig {
            num_subjects: 9,
            channels: 22,
            samples: 250,
            epochs_per_class: 72,
            sigma_hi: 2.0,
            sigma_lo: 1.0,
            divergence: 0.2,
            noise_floor: 1.0,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_subjects == 0 || self.epochs_per_class == 0 {
            return Err(Error::config("subject and epoch counts must be at least 1"));
        }
        if self.channels < 2 {
            return Err(Error::config(format!(
                "need at least the 2 discriminative channels, got {}",
                self.channels
            )));
        }
        if self.samples < 2 {
            return Err(Error::config(format!("need at least 2 samples, got {}", self.samples)));
        }
        if !(self.sigma_lo > 0.0 && self.sigma_hi > self.sigma_lo && self.sigma_hi.is_finite()) {
            return Err(Error::config(format!(
                "need sigma_hi > sigma_lo > 0, got {} and {}",
                self.sigma_hi, self.sigma_lo
            )));
        }
        if !(self.divergence >= 0.0 && self.divergence.is_finite()) {
            return Err(Error::config(format!("divergence must be >= 0, got {}", self.divergence)));
        }
        if !(self.noise_floor >= 0.0 && self.noise_floor.is_finite()) {
            return Err(Error::config(format!(
                "noise floor must be >= 0, got {}",
                self.noise_floor
            )));
        }
        Ok(())
    }
}

/// Generated subjects together with their ground-truth mixing matrices.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub subjects: Vec<SubjectDataset>,
    mixing: Vec<DMatrix<f64>>,
}

impl SyntheticCorpus {
    pub fn generate(cfg: &SynthConfig) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.channels;
        let mut base_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let base = random_orthogonal(c, &mut base_rng);

        let mut subjects = Vec::with_capacity(cfg.num_subjects);
        let mut mixing = Vec::with_capacity(cfg.num_subjects);
        for z in 0..cfg.num_subjects {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(z as u64 + 1);
            let rotation = random_rotation(c, cfg.divergence, &mut rng);
            let a = &rotation * &base;
            let epochs = (0..2 * cfg.epochs_per_class)
                .map(|k| {
                    let label = if k % 2 == 0 { Label::Zero } else { Label::One };
                    let std = latent_std(cfg, label);
                    let s = DMatrix::from_fn(c, cfg.samples, |i, _| {
                        std[i] * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
                    });
                    // Round through f32 so in-memory data matches what a saved file reloads as.
                    let x = (&a * s).map(|v| v as f32 as f64);
                    Ok(LabeledEpoch::new(Epoch::new(x)?, label))
                })
                .collect::<Result<Vec<_>>>()?;
            subjects.push(SubjectDataset::new(format!("S{:02}", z + 1), epochs)?);
            mixing.push(a);
        }
        Ok(SyntheticCorpus { subjects, mixing })
    }

    /// Mixing matrix `A_z` of subject `z`.
    pub fn mixing(&self, z: usize) -> &DMatrix<f64> {
        &self.mixing[z]
    }

    /// `A_z⁻¹`.
    pub fn unmixing(&self, z: usize) -> DMatrix<f64> {
        self.mixing[z]
            .clone()
            .try_inverse()
            .expect("mixing matrices are orthogonal")
    }

    /// Ground-truth filters for the two discriminative latents (rows 0 and 1 of `A_z⁻¹`).
    pub fn discriminative_filters(&self, z: usize) -> (DVector<f64>, DVector<f64>) {
        let u = self.unmixing(z);
        (u.row(0).transpose(), u.row(1).transpose())
    }
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Vec<SubjectDataset>> {
    SyntheticCorpus::generate(cfg).map(|c| c.subjects)
}

fn latent_std(cfg: &SynthConfig, label: Label) -> Vec<f64> {
    let (first, second) = match label {
        Label::Zero => (cfg.sigma_hi, cfg.sigma_lo),
        Label::One => (cfg.sigma_lo, cfg.sigma_hi),
    };
    let mut v = vec![cfg.noise_floor.sqrt(); cfg.channels];
    v[0] = first.sqrt();
    v[1] = second.sqrt();
    v
}

fn gaussian_matrix(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| {
        <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
    })
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with sign-fixed R).
fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let qr = gaussian_matrix(n, rng).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Cayley rotation `(I − K/2)⁻¹(I + K/2)` of a random skew-symmetric `K`
/// scaled to spectral norm `angle`. Zero angle gives exactly the identity.
fn random_rotation(n: usize, angle: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = gaussian_matrix(n, rng);
    if angle == 0.0 {
        return DMatrix::identity(n, n);
    }
    let skew = (&g - g.transpose()) * 0.5;
    let norm = skew.clone().svd(false, false).singular_values.max();
    let k = skew * (angle / norm);
    let eye = DMatrix::<f64>::identity(n, n);
    let lhs = &eye - &k * 0.5;
    let rhs = &eye + &k * 0.5;
    lhs.lu().solve(&rhs).expect("I - K/2 is invertible for skew-symmetric K")
}
