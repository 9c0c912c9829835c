//! Small numerical building blocks shared across the crate: compensated
//! summation, weighted moments, interpolated percentiles, Pearson correlation,
//! and mergeable variance accumulators for bootstrap reductions.

/// Neumaier-compensated sum. Used wherever a plain sum would accumulate
/// O(n·eps) error against a 1e-12 contract (weight normalization checks,
/// estimator identities).
pub fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn mean(values: &[f64]) -> f64 {
    kahan_sum(values.iter().copied()) / values.len() as f64
}

/// Sample variance with divisor `n - ddof`.
pub fn variance(values: &[f64], ddof: usize) -> f64 {
    let n = values.len();
    assert!(n > ddof, "variance requires more than {ddof} observations");
    let m = mean(values);
    kahan_sum(values.iter().map(|v| (v - m) * (v - m))) / (n - ddof) as f64
}

/// Weighted mean with normalizer `sum(w)`.
pub fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    debug_assert_eq!(values.len(), weights.len());
    let num = kahan_sum(values.iter().zip(weights).map(|(v, w)| v * w));
    let den = kahan_sum(weights.iter().copied());
    num / den
}

/// Weighted variance about the weighted mean, normalizer `sum(w)`.
pub fn weighted_variance(values: &[f64], weights: &[f64]) -> f64 {
    let m = weighted_mean(values, weights);
    let num = kahan_sum(
        values
            .iter()
            .zip(weights)
            .map(|(v, w)| w * (v - m) * (v - m)),
    );
    let den = kahan_sum(weights.iter().copied());
    num / den
}

/// Percentile by linear interpolation between order statistics (the
/// "type 7" convention: rank h = (n-1)q + 1 on the sorted sample).
///
/// `q` is a fraction in [0, 1]. Input need not be sorted.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of empty slice");
    assert!((0.0..=1.0).contains(&q), "percentile fraction out of range");
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value in percentile"));
    percentile_sorted(&sorted, q)
}

/// Same as [`percentile`] but assumes the input is already sorted ascending.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = h - lo as f64;
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn median(values: &[f64]) -> f64 {
    percentile(values, 0.5)
}

/// Interquartile range via type-7 quartiles.
pub fn interquartile_range(values: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value in iqr"));
    percentile_sorted(&sorted, 0.75) - percentile_sorted(&sorted, 0.25)
}

/// Pearson correlation. Returns `None` when either input has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = mean(a);
    let mb = mean(b);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let da = x - ma;
        let db = y - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / n) / ((saa / n).sqrt() * (sbb / n).sqrt()))
}

/// Streaming mean/variance accumulator over fixed-length vectors, mergeable
/// so that bootstrap replications can be reduced in deterministic block
/// order regardless of worker count.
///
/// Components may be absent in individual observations (encoded as NaN);
/// each component tracks its own contribution count.
#[derive(Clone, Debug)]
pub struct VectorVariance {
    count: Vec<u64>,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl VectorVariance {
    pub fn new(dim: usize) -> Self {
        Self {
            count: vec![0; dim],
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Welford update. NaN components are skipped.
    pub fn push(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.mean.len());
        for (j, &v) in values.iter().enumerate() {
            if v.is_nan() {
                continue;
            }
            self.count[j] += 1;
            let delta = v - self.mean[j];
            self.mean[j] += delta / self.count[j] as f64;
            self.m2[j] += delta * (v - self.mean[j]);
        }
    }

    /// Chan/Golub/LeVeque pairwise merge.
    pub fn merge(&mut self, other: &VectorVariance) {
        debug_assert_eq!(self.dim(), other.dim());
        for j in 0..self.mean.len() {
            let (na, nb) = (self.count[j], other.count[j]);
            if nb == 0 {
                continue;
            }
            if na == 0 {
                self.count[j] = nb;
                self.mean[j] = other.mean[j];
                self.m2[j] = other.m2[j];
                continue;
            }
            let n = na + nb;
            let delta = other.mean[j] - self.mean[j];
            self.mean[j] += delta * nb as f64 / n as f64;
            self.m2[j] += other.m2[j] + delta * delta * (na as f64 * nb as f64 / n as f64);
            self.count[j] = n;
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.count
    }

    pub fn means(&self) -> &[f64] {
        &self.mean
    }

    /// Population standard deviation per component (divisor = count).
    /// Components with zero contributions yield NaN.
    pub fn population_sd(&self) -> Vec<f64> {
        self.m2
            .iter()
            .zip(&self.count)
            .map(|(&m2, &n)| {
                if n == 0 {
                    f64::NAN
                } else {
                    (m2 / n as f64).max(0.0).sqrt()
                }
            })
            .collect()
    }
}
