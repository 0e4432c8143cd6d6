//! Parameter spaces, nominal laws, reference measures and reproducible sampling.
//!
//! Every random draw is keyed by a [`SeedRecord`] plus a sample index, so a
//! batch is a pure function of its inputs no matter how evaluation is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, Error, Result};

/// Compact parameter set `Xi`.
#[derive(Debug, Clone, PartialEq)]
pub enum ParameterSpace {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

impl ParameterSpace {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidInput(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Self::Ball { center, radius })
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_len("box upper corner", lower.len(), upper.len())?;
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidInput("box needs lower < upper in every coordinate".into()));
        }
        Ok(Self::Box { lower, upper })
    }

    /// Ball around `center` with the default radius `10 (sigma + |center|)`.
    pub fn default_ball(center: &[f64], sigma: f64) -> Result<Self> {
        let norm = center.iter().map(|c| c * c).sum::<f64>().sqrt();
        Self::ball(center.to_vec(), 10.0 * (sigma + norm).max(f64::MIN_POSITIVE))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Ball { center, .. } => center.len(),
            Self::Box { lower, .. } => lower.len(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Self::Ball { center, radius } => {
                let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                d2 <= radius * radius
            }
            Self::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u),
        }
    }
}

/// Nominal law `P` of the uncertain parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum NominalLaw {
    /// Weighted Dirac mixture.
    Empirical { atoms: Vec<Vec<f64>>, weights: Vec<f64> },
    /// Gaussian restricted to the parameter space.
    TruncatedGaussian { mean: Vec<f64>, cov: Vec<Vec<f64>> },
}

impl NominalLaw {
    /// Equal-weight empirical law.
    pub fn empirical(atoms: Vec<Vec<f64>>) -> Result<Self> {
        let n = atoms.len();
        if n == 0 {
            return Err(Error::Empty("empirical law needs at least one atom"));
        }
        Self::weighted(atoms, vec![1.0 / n as f64; n])
    }

    pub fn weighted(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Empty("empirical law needs at least one atom"));
        }
        check_len("atom weights", atoms.len(), weights.len())?;
        let k = atoms[0].len();
        for a in &atoms {
            check_len("atom", k, a.len())?;
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| *w < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "atom weights must be nonnegative and sum to 1, sum is {total}"
            )));
        }
        Ok(Self::Empirical { atoms, weights })
    }

    pub fn gaussian(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> Result<Self> {
        cholesky(&cov)?;
        check_len("covariance", mean.len(), cov.len())?;
        Ok(Self::TruncatedGaussian { mean, cov })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Empirical { atoms, .. } => atoms[0].len(),
            Self::TruncatedGaussian { mean, .. } => mean.len(),
        }
    }

    pub fn check_support(&self, space: &ParameterSpace) -> Result<()> {
        if let Self::Empirical { atoms, .. } = self {
            if let Some(a) = atoms.iter().find(|a| !space.contains(a)) {
                return Err(Error::InvalidInput(format!("atom {a:?} lies outside the parameter space")));
            }
        }
        Ok(())
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    for row in a {
        check_len("matrix row", n, row.len())?;
    }
    for i in 0..n {
        for j in 0..i {
            if (a[i][j] - a[j][i]).abs() > 1e-12 * (a[i][j].abs() + a[j][i].abs()).max(1.0) {
                return Err(Error::InvalidInput("covariance is not symmetric".into()));
            }
        }
    }
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = a[i][j] - (0..j).map(|p| l[i][p] * l[j][p]).sum::<f64>();
            if i == j {
                if !(s > 0.0) {
                    return Err(Error::InvalidInput("covariance is not positive definite".into()));
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Ok(l)
}

/// Gaussian reference kernel `nu_xi` of variance `sigma2` restricted to `space`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceKernel {
    pub sigma2: f64,
    pub space: ParameterSpace,
}

impl ReferenceKernel {
    pub fn new(sigma2: f64, space: ParameterSpace) -> Result<Self> {
        if !(sigma2 > 0.0) {
            return Err(Error::InvalidInput(format!("kernel variance must be positive, got {sigma2}")));
        }
        Ok(Self { sigma2, space })
    }

    /// Unnormalized density `exp(-|xi - zeta|^2 / (2 sigma^2)) 1_Xi(zeta)`.
    pub fn unnormalized_density(&self, xi: &[f64], zeta: &[f64]) -> f64 {
        if !self.space.contains(zeta) {
            return 0.0;
        }
        let d2: f64 = xi.iter().zip(zeta).map(|(a, b)| (a - b) * (a - b)).sum();
        (-d2 / (2.0 * self.sigma2)).exp()
    }
}

/// Identifies a reproducible random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SeedRecord {
    pub master: u64,
    pub iteration: u64,
    pub atom: u64,
}

impl SeedRecord {
    pub fn new(master: u64, iteration: u64, atom: u64) -> Self {
        Self {
            master,
            iteration,
            atom,
        }
    }

    /// Generator for sample `index` of this stream.
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut state = self.master;
        let mut words = [0u64; 4];
        for (w, tag) in words.iter_mut().zip([self.iteration, self.atom, index, 0x5eed]) {
            state = splitmix64(state ^ splitmix64(tag));
            *w = state;
        }
        let mut seed = [0u8; 32];
        for (chunk, w) in seed.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Samples drawn from one stream; every point lies in the parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub points: Vec<Vec<f64>>,
    pub record: SeedRecord,
    /// Total number of Gaussian draws, including rejected ones.
    pub attempts: usize,
}

const MIN_ACCEPTANCE: f64 = 1e-3;
const MAX_TRIES_PER_SAMPLE: usize = 100_000;

/// Draws `n` samples of `center + L z` restricted to `space` by rejection.
fn sample_truncated(
    center: &[f64],
    chol: &[Vec<f64>],
    space: &ParameterSpace,
    n: usize,
    record: SeedRecord,
) -> Result<SampleBatch> {
    let k = center.len();
    check_len("parameter space", k, space.dim())?;
    let mut points = Vec::with_capacity(n);
    let mut attempts = 0usize;
    for j in 0..n {
        let mut rng = record.rng(j as u64);
        let mut tries = 0usize;
        loop {
            let z: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
            let x: Vec<f64> = (0..k)
                .map(|r| {
                    let lz: f64 = (0..=r).map(|c| chol[r][c] * z[c]).sum();
                    center[r] + lz
                })
                .collect();
            tries += 1;
            attempts += 1;
            if space.contains(&x) {
                points.push(x);
                break;
            }
            if tries >= MAX_TRIES_PER_SAMPLE
                || (attempts >= 1000 && ((points.len() as f64) / (attempts as f64)) < MIN_ACCEPTANCE)
            {
                return Err(Error::RejectionStalled {
                    accepted: points.len(),
                    attempts,
                });
            }
        }
    }
    Ok(SampleBatch {
        points,
        record,
        attempts,
    })
}

/// `n` draws from `nu_xi`: Gaussian around `xi` with covariance `sigma^2 I`, restricted to `Xi`.
pub fn sample_nu(kernel: &ReferenceKernel, xi: &[f64], n: usize, record: SeedRecord) -> Result<SampleBatch> {
    if !kernel.space.contains(xi) {
        return Err(Error::InvalidInput(format!("centre {xi:?} outside the parameter space")));
    }
    let s = kernel.sigma2.sqrt();
    let k = xi.len();
    let chol: Vec<Vec<f64>> = (0..k)
        .map(|r| (0..k).map(|c| if r == c { s } else { 0.0 }).collect())
        .collect();
    sample_truncated(xi, &chol, &kernel.space, n, record)
}

/// `n` draws from the truncated Gaussian `Q_0 = N(mean, cov)` restricted to `space`.
pub fn sample_q0(law: &NominalLaw, space: &ParameterSpace, n: usize, record: SeedRecord) -> Result<SampleBatch> {
    match law {
        NominalLaw::TruncatedGaussian { mean, cov } => {
            let chol = cholesky(cov)?;
            sample_truncated(mean, &chol, space, n, record)
        }
        NominalLaw::Empirical { .. } => Err(Error::InvalidInput(
            "sample_q0 needs a truncated Gaussian law".into(),
        )),
    }
}

/// `log(sum_i w_i exp(v_i))`, shifted by the maximum so it never overflows.
///
/// Entries with zero weight are ignored.
pub fn log_sum_exp_weighted(values: &[f64], weights: &[f64]) -> Result<f64> {
    check_len("weights", values.len(), weights.len())?;
    let max = values
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Empty("log-sum-exp of an empty or zero-weight set"));
    }
    let s: f64 = values
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(v, w)| w * (v - max).exp())
        .sum();
    Ok(max + s.ln())
}

/// `log((1/n) sum_i exp(v_i))`.
pub fn log_mean_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("log_mean_exp of an empty array"));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = values.iter().map(|v| (v - max).exp()).sum();
    Ok(max + (s / values.len() as f64).ln())
}

/// Normalized `softmax` weights `w_i exp(v_i) / sum_j w_j exp(v_j)`.
pub fn softmax_weighted(values: &[f64], weights: &[f64]) -> Vec<f64> {
    let max = values
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = values
        .iter()
        .zip(weights)
        .map(|(v, w)| if *w > 0.0 { w * (v - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / total).collect()
}

/// Points with probability weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPoints {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl WeightedPoints {
    /// Equal weights, as produced by Monte-Carlo sampling.
    pub fn uniform(points: Vec<Vec<f64>>) -> Self {
        let n = points.len();
        Self {
            weights: vec![1.0 / n.max(1) as f64; n],
            points,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One nominal atom `xi^i` with its weight under `P` and the inner measure `nu_{xi^i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomSamples {
    pub atom: Vec<f64>,
    pub atom_weight: f64,
    pub inner: WeightedPoints,
}

/// Monte-Carlo discretization of `pi_0 = P (x) nu_xi`, drawn independently per atom.
pub fn draw_coupling_samples(
    law: &NominalLaw,
    kernel: &ReferenceKernel,
    n_inner: usize,
    master: u64,
    iteration: u64,
) -> Result<Vec<AtomSamples>> {
    let NominalLaw::Empirical { atoms, weights } = law else {
        return Err(Error::InvalidInput("Wasserstein ambiguity needs an empirical nominal law".into()));
    };
    atoms
        .iter()
        .zip(weights)
        .enumerate()
        .map(|(i, (a, w))| {
            let batch = sample_nu(kernel, a, n_inner, SeedRecord::new(master, iteration, i as u64))?;
            Ok(AtomSamples {
                atom: a.clone(),
                atom_weight: *w,
                inner: WeightedPoints::uniform(batch.points),
            })
        })
        .collect()
}

/// Tensor-product grid on a box in dimension 1 or 2, with trapezoid weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorGrid {
    pub axes: Vec<(f64, f64, usize)>,
}

impl TensorGrid {
    pub fn new(axes: Vec<(f64, f64, usize)>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::InvalidInput("quadrature grids support dimension 1 or 2".into()));
        }
        if axes.iter().any(|(lo, hi, n)| !(lo < hi) || *n < 2) {
            return Err(Error::InvalidInput("each grid axis needs lo < hi and two nodes".into()));
        }
        Ok(Self { axes })
    }

    pub fn uniform_1d(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(vec![(lo, hi, n)])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    fn axis_nodes(&self, d: usize) -> Vec<f64> {
        let (lo, hi, n) = self.axes[d];
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    fn axis_weights(&self, d: usize, simpson: bool) -> Vec<f64> {
        let (lo, hi, n) = self.axes[d];
        let h = (hi - lo) / (n - 1) as f64;
        (0..n)
            .map(|i| {
                if simpson {
                    if i == 0 || i == n - 1 {
                        h / 3.0
                    } else if i % 2 == 1 {
                        4.0 * h / 3.0
                    } else {
                        2.0 * h / 3.0
                    }
                } else if i == 0 || i == n - 1 {
                    h / 2.0
                } else {
                    h
                }
            })
            .collect()
    }

    /// Nodes with trapezoid (or Simpson, for odd node counts) weights.
    pub fn nodes(&self, simpson: bool) -> (Vec<Vec<f64>>, Vec<f64>) {
        let xs = self.axis_nodes(0);
        let wx = self.axis_weights(0, simpson);
        if self.dim() == 1 {
            return (xs.iter().map(|x| vec![*x]).collect(), wx);
        }
        let ys = self.axis_nodes(1);
        let wy = self.axis_weights(1, simpson);
        let mut pts = Vec::with_capacity(xs.len() * ys.len());
        let mut ws = Vec::with_capacity(xs.len() * ys.len());
        for (y, wyv) in ys.iter().zip(&wy) {
            for (x, wxv) in xs.iter().zip(&wx) {
                pts.push(vec![*x, *y]);
                ws.push(wxv * wyv);
            }
        }
        (pts, ws)
    }

    pub fn min_nodes_per_axis(&self) -> usize {
        self.axes.iter().map(|a| a.2).min().unwrap_or(0)
    }
}

/// Quadrature version of `nu_xi` on a grid: weights proportional to the kernel density.
pub fn nu_quadrature(kernel: &ReferenceKernel, xi: &[f64], grid: &TensorGrid) -> Result<WeightedPoints> {
    check_len("grid dimension", xi.len(), grid.dim())?;
    let (points, w) = grid.nodes(false);
    let raw: Vec<f64> = points
        .iter()
        .zip(&w)
        .map(|(p, wi)| wi * kernel.unnormalized_density(xi, p))
        .collect();
    normalize(points, raw)
}

/// Quadrature version of the truncated Gaussian `Q_0`.
pub fn q0_quadrature(law: &NominalLaw, space: &ParameterSpace, grid: &TensorGrid) -> Result<WeightedPoints> {
    let NominalLaw::TruncatedGaussian { mean, cov } = law else {
        return Err(Error::InvalidInput("q0_quadrature needs a truncated Gaussian law".into()));
    };
    check_len("grid dimension", mean.len(), grid.dim())?;
    let prec = invert_spd(cov)?;
    let (points, w) = grid.nodes(false);
    let raw: Vec<f64> = points
        .iter()
        .zip(&w)
        .map(|(p, wi)| {
            if !space.contains(p) {
                return 0.0;
            }
            let d: Vec<f64> = p.iter().zip(mean).map(|(a, b)| a - b).collect();
            let q: f64 = (0..d.len())
                .map(|r| (0..d.len()).map(|c| d[r] * prec[r][c] * d[c]).sum::<f64>())
                .sum();
            wi * (-0.5 * q).exp()
        })
        .collect();
    normalize(points, raw)
}

fn normalize(points: Vec<Vec<f64>>, raw: Vec<f64>) -> Result<WeightedPoints> {
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(Error::GridTooCoarse("reference density vanishes on the grid".into()));
    }
    Ok(WeightedPoints {
        points,
        weights: raw.into_iter().map(|r| r / total).collect(),
    })
}

/// Inverse of a small symmetric positive definite matrix via its Cholesky factor.
pub fn invert_spd(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let l = cholesky(a)?;
    let n = a.len();
    let mut inv = vec![vec![0.0; n]; n];
    for col in 0..n {
        // forward then backward substitution on e_col
        let mut y = vec![0.0; n];
        for i in 0..n {
            let rhs = if i == col { 1.0 } else { 0.0 };
            y[i] = (rhs - (0..i).map(|p| l[i][p] * y[p]).sum::<f64>()) / l[i][i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            x[i] = (y[i] - (i + 1..n).map(|p| l[p][i] * x[p]).sum::<f64>()) / l[i][i];
        }
        for i in 0..n {
            inv[i][col] = x[i];
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel(sigma2: f64, k: usize) -> ReferenceKernel {
        ReferenceKernel::new(sigma2, ParameterSpace::ball(vec![0.0; k], 100.0).unwrap()).unwrap()
    }

    #[test]
    fn log_mean_exp_examples() {
        assert_eq!(log_mean_exp(&[2.5; 7]).unwrap(), 2.5);
        assert!((log_mean_exp(&[0.0, 3f64.ln()]).unwrap() - 2f64.ln()).abs() < 1e-15);
        // log((e^1000 + e^1000.5)/2) = 1000 + log((1 + e^0.5)/2), evaluated unshifted
        let want = 1000.0 + ((1.0 + 0.5f64.exp()) / 2.0).ln();
        assert!((log_mean_exp(&[1000.0, 1000.5]).unwrap() - want).abs() < 1e-12);
        assert!(log_mean_exp(&[1e12, -1e12]).unwrap().is_finite());
        assert!(matches!(log_mean_exp(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn log_mean_exp_sandwich() {
        let mut state = 17u64;
        for n in 1..40 {
            let v: Vec<f64> = (0..n)
                .map(|_| {
                    state = splitmix64(state);
                    (state >> 11) as f64 / (1u64 << 53) as f64 * 2e3 - 1e3
                })
                .collect();
            let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let l = log_mean_exp(&v).unwrap();
            assert!(l <= m + 1e-12 && l >= m - (n as f64).ln() - 1e-12);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_in_support() {
        let k = ReferenceKernel::new(1.0, ParameterSpace::ball(vec![0.0, 0.0], 1.5).unwrap()).unwrap();
        let rec = SeedRecord::new(7, 3, 1);
        let a = sample_nu(&k, &[0.5, 0.0], 200, rec).unwrap();
        let b = sample_nu(&k, &[0.5, 0.0], 200, rec).unwrap();
        assert_eq!(a, b);
        assert!(a.points.iter().all(|p| k.space.contains(p)));
        assert!(a.attempts > 200);
        let c = sample_nu(&k, &[0.5, 0.0], 200, SeedRecord::new(7, 4, 1)).unwrap();
        assert_ne!(a.points, c.points);
    }

    #[test]
    fn tiny_variance_concentrates() {
        let k = kernel(1e-8, 2);
        let b = sample_nu(&k, &[1.0, -2.0], 500, SeedRecord::new(1, 0, 0)).unwrap();
        let six_sigma = 6.0 * 1e-4;
        for p in &b.points {
            assert!((p[0] - 1.0).abs() <= six_sigma && (p[1] + 2.0).abs() <= six_sigma);
        }
    }

    #[test]
    fn stalls_when_support_is_tiny() {
        let k = ReferenceKernel::new(1.0, ParameterSpace::ball(vec![0.0; 3], 1e-3).unwrap()).unwrap();
        let err = sample_nu(&k, &[0.0; 3], 10, SeedRecord::default()).unwrap_err();
        assert!(matches!(err, Error::RejectionStalled { .. }));
    }

    #[test]
    fn isotropic_q0_matches_nu_stream() {
        let space = ParameterSpace::ball(vec![0.0, 0.0], 50.0).unwrap();
        let k = ReferenceKernel::new(0.3, space.clone()).unwrap();
        let law = NominalLaw::gaussian(vec![1.0, 2.0], vec![vec![0.3, 0.0], vec![0.0, 0.3]]).unwrap();
        let rec = SeedRecord::new(11, 0, 0);
        let a = sample_nu(&k, &[1.0, 2.0], 64, rec).unwrap();
        let b = sample_q0(&law, &space, 64, rec).unwrap();
        assert_eq!(a.points, b.points);
        assert!(sample_q0(&law, &space, 0, rec).unwrap().points.is_empty());
    }

    #[test]
    fn q0_quadrature_weights_sum_to_one() {
        let space = ParameterSpace::ball(vec![0.0], 10.0).unwrap();
        let law = NominalLaw::gaussian(vec![0.0], vec![vec![1.0]]).unwrap();
        let grid = TensorGrid::uniform_1d(-10.0, 10.0, 2001).unwrap();
        let q = q0_quadrature(&law, &space, &grid).unwrap();
        let s: f64 = q.weights.iter().sum();
        let var: f64 = q.points.iter().zip(&q.weights).map(|(p, w)| w * p[0] * p[0]).sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_laws() {
        assert!(NominalLaw::gaussian(vec![0.0], vec![vec![-1.0]]).is_err());
        assert!(NominalLaw::weighted(vec![vec![0.0], vec![1.0]], vec![0.5, 0.6]).is_err());
        assert!(NominalLaw::empirical(vec![]).is_err());
        let law = NominalLaw::empirical(vec![vec![5.0]]).unwrap();
        assert!(law.check_support(&ParameterSpace::ball(vec![0.0], 1.0).unwrap()).is_err());
    }

    #[test]
    fn invert_spd_roundtrip() {
        let a = vec![vec![4.0, 1.0], vec![1.0, 3.0]];
        let inv = invert_spd(&a).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let v: f64 = (0..2).map(|p| a[i][p] * inv[p][j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }
}
