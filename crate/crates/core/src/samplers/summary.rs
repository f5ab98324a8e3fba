use crate::matrix::Matrix;

/// Number of contiguous batches used for the batch-means error estimate.
pub const MCSE_BATCHES: usize = 20;

/// Streaming moments for one sample, pooled over chains.
#[derive(Debug, Clone)]
pub(crate) struct Accumulator {
    dim: usize,
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
    batches: usize,
    n_keep: usize,
    batch_sum: Vec<f64>,
    batch_count: Vec<usize>,
    store: Option<Vec<Vec<f64>>>,
}

impl Accumulator {
    pub fn new(dim: usize, n_keep: usize, per_step: usize, keep: bool) -> Self {
        let batches = MCSE_BATCHES.min(n_keep).max(1);
        Self {
            dim,
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            batches,
            n_keep,
            batch_sum: vec![0.0; batches * dim],
            batch_count: vec![0; batches],
            store: keep.then(|| (0..dim).map(|_| Vec::with_capacity(n_keep * per_step)).collect()),
        }
    }

    /// Adds one draw from retained step `j` (0-based).
    pub fn push(&mut self, j: usize, theta: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        let b = j * self.batches / self.n_keep;
        self.batch_count[b] += 1;
        for k in 0..self.dim {
            let d = theta[k] - self.mean[k];
            self.mean[k] += d / n;
            self.m2[k] += d * (theta[k] - self.mean[k]);
            self.batch_sum[b * self.dim + k] += theta[k];
        }
        if let Some(s) = &mut self.store {
            for k in 0..self.dim {
                s[k].push(theta[k]);
            }
        }
    }

    fn std(&self, k: usize) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2[k] / (self.count - 1) as f64).max(0.0).sqrt()
        }
    }

    fn mcse(&self, k: usize) -> f64 {
        let means: Vec<f64> = (0..self.batches)
            .filter(|&b| self.batch_count[b] > 0)
            .map(|b| self.batch_sum[b * self.dim + k] / self.batch_count[b] as f64)
            .collect();
        let nb = means.len();
        if nb < 2 {
            return f64::NAN;
        }
        let m = means.iter().sum::<f64>() / nb as f64;
        let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (nb - 1) as f64;
        (var / nb as f64).sqrt()
    }
}

/// Per-sample posterior summaries. Vectors are indexed `[param][sample]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub names: Vec<String>,
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
    /// Batch-means Monte Carlo standard error of the posterior mean.
    pub mcse: Vec<Vec<f64>>,
    pub median: Option<Vec<Vec<f64>>>,
    /// Fraction of accepted proposals over all iterations and chains.
    pub acceptance_rate: Vec<f64>,
    /// Retained draws per parameter, `[n_samples x draws]`.
    pub retained: Option<Vec<Matrix>>,
    pub draws_per_sample: usize,
}

impl PosteriorSummary {
    pub(crate) fn assemble(
        names: Vec<String>,
        accs: &[Accumulator],
        accepted: &[usize],
        proposals: usize,
        want_median: bool,
        keep: bool,
    ) -> Self {
        let dim = names.len();
        let n = accs.len();
        let per = |f: &dyn Fn(&Accumulator, usize) -> f64| -> Vec<Vec<f64>> {
            (0..dim).map(|k| accs.iter().map(|a| f(a, k)).collect()).collect()
        };
        let median = want_median.then(|| {
            per(&|a: &Accumulator, k| {
                let mut v = a.store.as_ref().expect("draws stored")[k].clone();
                v.sort_by(f64::total_cmp);
                let m = v.len();
                if m % 2 == 1 {
                    v[m / 2]
                } else {
                    0.5 * (v[m / 2 - 1] + v[m / 2])
                }
            })
        });
        let draws = accs.first().map_or(0, |a| a.count);
        let retained = keep.then(|| {
            (0..dim)
                .map(|k| {
                    let data = accs.iter().flat_map(|a| a.store.as_ref().expect("draws stored")[k].iter().copied()).collect();
                    Matrix::new(n, draws, data).expect("equal draw counts")
                })
                .collect()
        });
        Self {
            mean: per(&|a: &Accumulator, k| a.mean[k]),
            std: per(&|a: &Accumulator, k| a.std(k)),
            mcse: per(&|a: &Accumulator, k| a.mcse(k)),
            median,
            acceptance_rate: accepted.iter().map(|&c| c as f64 / proposals as f64).collect(),
            retained,
            draws_per_sample: draws,
            names,
        }
    }

    pub fn field(&self, name: &str) -> Option<(&[f64], &[f64])> {
        let k = self.names.iter().position(|n| n == name)?;
        Some((&self.mean[k], &self.std[k]))
    }
}
