use super::Tensor;
use crate::energy::ledger;
use crate::error::{Error, Result};

/// Per-channel batch normalization over `[C, H, W]` or `[N, C, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn validate(&self, channels: usize) -> Result<()> {
        let lens = [
            self.gamma.len(),
            self.beta.len(),
            self.running_mean.len(),
            self.running_var.len(),
        ];
        if lens.iter().any(|&l| l != channels) {
            return Err(Error::invalid(
                "batchnorm",
                format!("parameter lengths {lens:?} do not match {channels} channels"),
            ));
        }
        if !self.eps.is_finite() || self.eps < 0.0 {
            return Err(Error::invalid("batchnorm", format!("eps must be >= 0, got {}", self.eps)));
        }
        Ok(())
    }

    /// Training mode normalizes with batch statistics and updates the running
    /// statistics; eval mode uses the running statistics.
    pub fn forward(&mut self, input: &Tensor, training: bool) -> Result<Tensor> {
        let channels = channel_count(input)?;
        self.validate(channels)?;
        if !training {
            return self.eval(input);
        }
        let (mean, var, count) = batch_stats(input, channels);
        for c in 0..channels {
            let unbiased = if count > 1.0 { var[c] * count / (count - 1.0) } else { var[c] };
            self.running_mean[c] = (1.0 - self.momentum) * self.running_mean[c] + self.momentum * mean[c];
            self.running_var[c] = (1.0 - self.momentum) * self.running_var[c] + self.momentum * unbiased;
        }
        normalize(input, &mean, &var, &self.gamma, &self.beta, self.eps)
    }

    /// Replaces the running statistics with the (population) statistics of
    /// `input`, so that eval mode standardizes data like it.
    pub fn calibrate(&mut self, input: &Tensor) -> Result<()> {
        let channels = channel_count(input)?;
        self.validate(channels)?;
        let (mean, var, _) = batch_stats(input, channels);
        self.running_mean = mean;
        self.running_var = var;
        Ok(())
    }

    /// Eval-mode forward; does not touch the running statistics.
    pub fn eval(&self, input: &Tensor) -> Result<Tensor> {
        let channels = channel_count(input)?;
        self.validate(channels)?;
        normalize(
            input,
            &self.running_mean,
            &self.running_var,
            &self.gamma,
            &self.beta,
            self.eps,
        )
    }
}

fn channel_count(input: &Tensor) -> Result<usize> {
    match input.shape() {
        [c, _, _] | [_, c, _, _] => Ok(*c),
        s => Err(Error::invalid(
            "batchnorm",
            format!("expected rank 3 or 4, got {s:?}"),
        )),
    }
}

/// Per-channel mean, biased variance and per-channel element count.
fn batch_stats(input: &Tensor, channels: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let s = input.shape();
    let inner: usize = s[s.len() - 2..].iter().product();
    let outer = input.len() / (channels * inner);
    let x = input.data();
    let count = (outer * inner) as f64;
    let idx = |n: usize, c: usize| (n * channels + c) * inner;
    let mut mean = vec![0.0; channels];
    let mut var = vec![0.0; channels];
    for c in 0..channels {
        let vals = || (0..outer).flat_map(move |n| &x[idx(n, c)..idx(n, c) + inner]);
        mean[c] = vals().sum::<f64>() / count;
        var[c] = vals().map(|v| (v - mean[c]) * (v - mean[c])).sum::<f64>() / count;
    }
    (mean, var, count)
}

fn normalize(
    input: &Tensor,
    mean: &[f64],
    var: &[f64],
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> Result<Tensor> {
    let s = input.shape();
    let channels = mean.len();
    let inner: usize = s[s.len() - 2..].iter().product();
    let x = input.data();
    let mut out = vec![0.0; x.len()];
    for (block, chunk) in x.chunks(inner).enumerate() {
        let c = block % channels;
        let denom = (var[c] + eps).sqrt();
        if denom == 0.0 {
            return Err(Error::invalid(
                "batchnorm",
                format!("zero variance with eps = 0 in channel {c}"),
            ));
        }
        let o = &mut out[block * inner..(block + 1) * inner];
        for (o, &v) in o.iter_mut().zip(chunk) {
            *o = (v - mean[c]) / denom * gamma[c] + beta[c];
        }
    }
    ledger::count(x.len() as u64, x.len() as u64);
    Tensor::new(s.to_vec(), out)
}
