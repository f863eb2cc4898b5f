//! State feature maps shared by policies, terminations and critics.

use std::f64::consts::PI;

/// A feature vector, either an indicator (tabular) or dense.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureVec {
    OneHot { index: usize, len: usize },
    Dense(Vec<f64>),
}

impl FeatureVec {
    pub fn len(&self) -> usize {
        match self {
            FeatureVec::OneHot { len, .. } => *len,
            FeatureVec::Dense(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn dot(&self, weights: &[f64]) -> f64 {
        debug_assert_eq!(weights.len(), self.len());
        match self {
            FeatureVec::OneHot { index, .. } => weights[*index],
            FeatureVec::Dense(v) => v.iter().zip(weights).map(|(x, w)| x * w).sum(),
        }
    }

    /// `weights += scale * phi`, optionally dividing each component by a
    /// per-feature divisor.
    #[inline]
    pub fn add_scaled(&self, weights: &mut [f64], scale: f64, divisors: Option<&[f64]>) {
        debug_assert_eq!(weights.len(), self.len());
        match (self, divisors) {
            (FeatureVec::OneHot { index, .. }, None) => weights[*index] += scale,
            (FeatureVec::OneHot { index, .. }, Some(d)) => weights[*index] += scale / d[*index],
            (FeatureVec::Dense(v), None) => {
                for (w, x) in weights.iter_mut().zip(v) {
                    *w += scale * x;
                }
            }
            (FeatureVec::Dense(v), Some(d)) => {
                for ((w, x), d) in weights.iter_mut().zip(v).zip(d) {
                    *w += scale * x / d;
                }
            }
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        match self {
            FeatureVec::OneHot { index, len } => {
                let mut v = vec![0.0; *len];
                v[*index] = 1.0;
                v
            }
            FeatureVec::Dense(v) => v.clone(),
        }
    }

    pub fn norm_sq(&self) -> f64 {
        match self {
            FeatureVec::OneHot { .. } => 1.0,
            FeatureVec::Dense(v) => v.iter().map(|x| x * x).sum(),
        }
    }
}

/// Fourier cosine basis over `[0,1]^dim` with the full coefficient lattice
/// `{0..=order}^dim`, enumerated lexicographically (last coordinate fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct FourierBasis {
    dim: usize,
    order: u32,
    coefficients: Vec<Vec<u32>>,
}

impl FourierBasis {
    pub fn new(dim: usize, order: u32) -> Self {
        assert!(dim > 0, "fourier basis needs at least one input dimension");
        let base = order as usize + 1;
        let count = base.pow(dim as u32);
        let coefficients = (0..count)
            .map(|mut k| {
                let mut c = vec![0u32; dim];
                for slot in c.iter_mut().rev() {
                    *slot = (k % base) as u32;
                    k /= base;
                }
                c
            })
            .collect();
        FourierBasis {
            dim,
            order,
            coefficients,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn coefficients(&self) -> &[Vec<u32>] {
        &self.coefficients
    }

    pub fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    /// `cos(pi * c_i . x)` for every coefficient row. Inputs must lie in
    /// `[0,1]^dim`; anything else is a caller bug and panics.
    pub fn featurize(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "fourier input has wrong dimension");
        for (i, &v) in x.iter().enumerate() {
            assert!(
                (0.0..=1.0).contains(&v),
                "fourier input component {i} = {v} outside [0,1]"
            );
        }
        self.coefficients
            .iter()
            .map(|c| {
                let arg: f64 = c.iter().zip(x).map(|(&ci, &xi)| ci as f64 * xi).sum();
                (PI * arg).cos()
            })
            .collect()
    }

    /// Per-feature learning-rate divisors `||c_i||_2`, with 1 for `c = 0`.
    pub fn lr_scaling(&self) -> Vec<f64> {
        self.coefficients
            .iter()
            .map(|c| {
                let norm = c.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
                if norm == 0.0 {
                    1.0
                } else {
                    norm
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap {
    OneHot { n_states: usize },
    Fourier(FourierBasis),
}

impl FeatureMap {
    pub fn one_hot(n_states: usize) -> Self {
        FeatureMap::OneHot { n_states }
    }

    pub fn fourier(dim: usize, order: u32) -> Self {
        FeatureMap::Fourier(FourierBasis::new(dim, order))
    }

    pub fn n_features(&self) -> usize {
        match self {
            FeatureMap::OneHot { n_states } => *n_states,
            FeatureMap::Fourier(b) => b.n_features(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FeatureMap::OneHot { .. } => "onehot",
            FeatureMap::Fourier(_) => "fourier",
        }
    }

    pub fn state(&self, s: usize) -> FeatureVec {
        match self {
            FeatureMap::OneHot { n_states } => {
                assert!(s < *n_states, "state {s} out of range for one-hot map");
                FeatureVec::OneHot { index: s, len: *n_states }
            }
            FeatureMap::Fourier(_) => panic!("fourier map needs a real-valued input"),
        }
    }

    pub fn point(&self, x: &[f64]) -> FeatureVec {
        match self {
            FeatureMap::Fourier(b) => FeatureVec::Dense(b.featurize(x)),
            FeatureMap::OneHot { .. } => panic!("one-hot map needs a state index"),
        }
    }

    /// Learning-rate divisors; `None` for maps that do not use them.
    pub fn lr_scaling(&self) -> Option<Vec<f64>> {
        match self {
            FeatureMap::OneHot { .. } => None,
            FeatureMap::Fourier(b) => Some(b.lr_scaling()),
        }
    }
}
