use crate::error::{check_finite, check_len, Error, Result};

/// Running per-dimension mean and variance (Welford).
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineNormalizer {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    /// Normalized values are clipped to `±clip`.
    clip: f64,
}

const VARIANCE_EPS: f64 = 1e-8;

impl OnlineNormalizer {
    pub fn new(dim: usize, clip: f64) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            clip,
        }
    }

    pub fn from_parts(count: u64, mean: Vec<f64>, m2: Vec<f64>, clip: f64) -> Result<Self> {
        check_len("normalizer m2", mean.len(), m2.len())?;
        if m2.iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidArgument("normalizer m2 must be >= 0".into()));
        }
        Ok(Self { count, mean, m2, clip })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn clip(&self) -> f64 {
        self.clip
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn m2(&self) -> &[f64] {
        &self.m2
    }

    /// Population variance; zero before any data.
    pub fn variance(&self) -> Vec<f64> {
        if self.count == 0 {
            return vec![0.0; self.dim()];
        }
        self.m2.iter().map(|m| m / self.count as f64).collect()
    }

    pub fn update(&mut self, x: &[f64]) -> Result<()> {
        check_len("normalizer input", self.dim(), x.len())?;
        check_finite("normalizer input", x)?;
        self.count += 1;
        let n = self.count as f64;
        for ((mean, m2), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *mean;
            *mean += d / n;
            *m2 += d * (v - *mean);
        }
        Ok(())
    }

    /// `(x − mean)/sqrt(var + 1e-8)`, clipped.
    pub fn normalize(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("normalizer input", self.dim(), x.len())?;
        let var = self.variance();
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&var)
            .map(|((v, m), s)| ((v - m) / (s + VARIANCE_EPS).sqrt()).clamp(-self.clip, self.clip))
            .collect())
    }
}
