//! K-user interference channel: instances, objective, permutations and the
//! WMMSE baseline.

mod features;
pub mod io;
mod synthetic;
mod wmmse;

pub use features::{featurize, FlatSample, GraphSample};
pub use synthetic::{generate_gaussian_nodes, synthetic_labels, GaussianNodeSet, NodeFeatures};
pub use wmmse::{wmmse, WmmseResult, DEFAULT_WMMSE_ITERS, DEFAULT_WMMSE_TOL};

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use crate::rng::{domain, stream};
use crate::{Error, Result};

/// One K-user interference channel.
///
/// `h[k * K + i]` is the channel from transmitter `i` to receiver `k`; the
/// diagonal holds the direct links.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInstance {
    k: usize,
    h: Vec<Complex64>,
    w: Vec<f64>,
    sigma2: Vec<f64>,
}

impl NetworkInstance {
    pub fn new(k: usize, h: Vec<Complex64>, w: Vec<f64>, sigma2: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("user count K must be at least 1"));
        }
        if h.len() != k * k || w.len() != k || sigma2.len() != k {
            return Err(Error::invalid(format!(
                "instance dimensions do not match K = {k}: |H| = {}, |w| = {}, |sigma2| = {}",
                h.len(),
                w.len(),
                sigma2.len()
            )));
        }
        if h.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::invalid("channel matrix has non-finite entries"));
        }
        if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::invalid("rate weights must be finite and nonnegative"));
        }
        if sigma2.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::invalid("noise powers must be finite and positive"));
        }
        Ok(Self { k, h, w, sigma2 })
    }

    /// Instance with unit weights and unit noise.
    pub fn with_unit_weights(k: usize, h: Vec<Complex64>) -> Result<Self> {
        Self::new(k, h, vec![1.0; k], vec![1.0; k])
    }

    pub fn users(&self) -> usize {
        self.k
    }

    /// Channel from transmitter `i` to receiver `k`.
    pub fn channel(&self, k: usize, i: usize) -> Complex64 {
        self.h[k * self.k + i]
    }

    /// `|h_{k,i}|^2`.
    pub fn gain(&self, k: usize, i: usize) -> f64 {
        self.h[k * self.k + i].norm_sqr()
    }

    pub fn channels(&self) -> &[Complex64] {
        &self.h
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn noise(&self) -> &[f64] {
        &self.sigma2
    }

    /// Row-major matrix of `|h_{k,i}|^2`.
    pub fn gains(&self) -> Vec<f64> {
        self.h.iter().map(|c| c.norm_sqr()).collect()
    }
}

/// Transmit powers, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation(Vec<f64>);

impl PowerAllocation {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if let Some(bad) = p.iter().find(|&&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::invalid(format!("power {bad} outside [0, 1]")));
        }
        Ok(Self(p))
    }

    pub fn full(k: usize) -> Self {
        Self(vec![1.0; k])
    }

    pub fn zeros(k: usize) -> Self {
        Self(vec![0.0; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// A bijection on `0..n`.
///
/// Applying `pi` to a vector moves entry `i` to position `pi(i)`:
/// `(pi * x)[pi(i)] = x[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        let mut seen = vec![false; n];
        for &j in &map {
            if j >= n || seen[j] {
                return Err(Error::invalid(format!("{map:?} is not a permutation of 0..{n}")));
            }
            seen[j] = true;
        }
        Ok(Self(map))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    /// Uniformly random permutation (Fisher-Yates).
    pub fn random<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut map: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            map.swap(i, j);
        }
        Self(map)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (i, &j) in self.0.iter().enumerate() {
            inv[j] = i;
        }
        Self(inv)
    }

    pub fn apply<T: Clone>(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.0.len(), "permutation length mismatch");
        let mut out = x.to_vec();
        for (i, v) in x.iter().enumerate() {
            out[self.0[i]] = v.clone();
        }
        out
    }

    /// Permute rows and columns of a row-major `n x n` matrix.
    pub fn apply_square<T: Clone>(&self, a: &[T]) -> Vec<T> {
        let n = self.0.len();
        assert_eq!(a.len(), n * n, "permutation length mismatch");
        let mut out = a.to_vec();
        for k in 0..n {
            for i in 0..n {
                out[self.0[k] * n + self.0[i]] = a[k * n + i].clone();
            }
        }
        out
    }

    /// Permute whole rows of a row-major matrix with `n` rows.
    pub fn apply_rows<T: Clone>(&self, a: &[T], row_len: usize) -> Vec<T> {
        let n = self.0.len();
        assert_eq!(a.len(), n * row_len, "permutation length mismatch");
        let mut out = a.to_vec();
        for i in 0..n {
            let dst = self.0[i] * row_len;
            out[dst..dst + row_len].clone_from_slice(&a[i * row_len..(i + 1) * row_len]);
        }
        out
    }
}

fn check_dims(inst: &NetworkInstance, p: &PowerAllocation) -> Result<()> {
    if p.len() != inst.k {
        return Err(Error::invalid(format!(
            "power vector has {} entries, instance has K = {}",
            p.len(),
            inst.k
        )));
    }
    Ok(())
}

/// `SINR_k = |h_kk|^2 p_k / (sum_{i != k} |h_ki|^2 p_i + sigma_k^2)`.
pub fn sinr(inst: &NetworkInstance, p: &PowerAllocation) -> Result<Vec<f64>> {
    check_dims(inst, p)?;
    Ok(sinr_unchecked(inst, p.as_slice()))
}

pub(crate) fn sinr_unchecked(inst: &NetworkInstance, p: &[f64]) -> Vec<f64> {
    let k = inst.k;
    (0..k)
        .map(|rx| {
            let interference: f64 = (0..k)
                .filter(|&tx| tx != rx)
                .map(|tx| inst.gain(rx, tx) * p[tx])
                .sum();
            inst.gain(rx, rx) * p[rx] / (interference + inst.sigma2[rx])
        })
        .collect()
}

/// `sum_k w_k log2(1 + SINR_k)` in bits/s/Hz.
pub fn weighted_sum_rate(inst: &NetworkInstance, p: &PowerAllocation) -> Result<f64> {
    check_dims(inst, p)?;
    Ok(sum_rate_unchecked(inst, p.as_slice()))
}

pub(crate) fn sum_rate_unchecked(inst: &NetworkInstance, p: &[f64]) -> f64 {
    sinr_unchecked(inst, p)
        .iter()
        .zip(&inst.w)
        .map(|(s, w)| w * s.ln_1p())
        .sum::<f64>()
        / std::f64::consts::LN_2
}

/// Gradient of the weighted sum rate with respect to the powers.
///
/// Powers are not range-checked so the trainer can differentiate at any
/// network output.
pub fn sum_rate_gradient(inst: &NetworkInstance, p: &[f64]) -> (f64, Vec<f64>) {
    let k = inst.k;
    let mut denom = vec![0.0; k];
    let mut sinrs = vec![0.0; k];
    for rx in 0..k {
        let mut acc = inst.sigma2[rx];
        for tx in 0..k {
            if tx != rx {
                acc += inst.gain(rx, tx) * p[tx];
            }
        }
        denom[rx] = acc;
        sinrs[rx] = inst.gain(rx, rx) * p[rx] / acc;
    }
    let ln2 = std::f64::consts::LN_2;
    let rate: f64 = (0..k).map(|j| inst.w[j] * sinrs[j].ln_1p()).sum::<f64>() / ln2;
    // dR/dS_k = w_k / (ln2 (1 + S_k))
    let ds: Vec<f64> = (0..k).map(|j| inst.w[j] / (ln2 * (1.0 + sinrs[j]))).collect();
    let mut grad = vec![0.0; k];
    for rx in 0..k {
        grad[rx] += ds[rx] * inst.gain(rx, rx) / denom[rx];
        let cross = ds[rx] * sinrs[rx] / denom[rx];
        for tx in 0..k {
            if tx != rx {
                grad[tx] -= cross * inst.gain(rx, tx);
            }
        }
    }
    (rate, grad)
}

/// Relabel users: user `i` of the input becomes user `pi(i)` of the output.
pub fn apply_permutation(
    inst: &NetworkInstance,
    p: &PowerAllocation,
    pi: &Permutation,
) -> Result<(NetworkInstance, PowerAllocation)> {
    check_dims(inst, p)?;
    if pi.len() != inst.k {
        return Err(Error::invalid(format!(
            "permutation over {} users applied to K = {}",
            pi.len(),
            inst.k
        )));
    }
    let out = NetworkInstance {
        k: inst.k,
        h: pi.apply_square(&inst.h),
        w: pi.apply(&inst.w),
        sigma2: pi.apply(&inst.sigma2),
    };
    Ok((out, PowerAllocation(pi.apply(p.as_slice()))))
}

/// Instance plus its cached featurizations.
#[derive(Debug, Clone)]
pub struct PreparedInstance {
    pub instance: NetworkInstance,
    pub flat: FlatSample,
    pub graph: GraphSample,
}

impl PreparedInstance {
    pub fn new(instance: NetworkInstance) -> Self {
        let (flat, graph) = featurize(&instance);
        Self {
            instance,
            flat,
            graph,
        }
    }
}

/// A set of channel instances, optionally labelled.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub users: usize,
    pub seed: u64,
    pub samples: Vec<PreparedInstance>,
    pub labels: Option<Vec<f64>>,
}

impl Dataset {
    pub fn from_instances(instances: Vec<NetworkInstance>, seed: u64) -> Result<Self> {
        let users = instances
            .first()
            .map(|i| i.users())
            .ok_or_else(|| Error::invalid("dataset needs at least one sample"))?;
        if instances.iter().any(|i| i.users() != users) {
            return Err(Error::invalid("all samples in a dataset must share K"));
        }
        Ok(Self {
            users,
            seed,
            samples: instances.into_iter().map(PreparedInstance::new).collect(),
            labels: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn instance(&self, j: usize) -> &NetworkInstance {
        &self.samples[j].instance
    }

    pub fn with_labels(mut self, labels: Vec<f64>) -> Result<Self> {
        if labels.len() != self.samples.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} samples",
                labels.len(),
                self.samples.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// The first `m` samples (and labels).
    pub fn prefix(&self, m: usize) -> Dataset {
        let m = m.min(self.len());
        Dataset {
            users: self.users,
            seed: self.seed,
            samples: self.samples[..m].to_vec(),
            labels: self.labels.as_ref().map(|l| l[..m].to_vec()),
        }
    }
}

/// Draw one Rayleigh-fading instance: `h ~ CN(0, 1)`, unit weights and noise.
pub fn rayleigh_instance(k: usize, seed: u64, index: u64) -> NetworkInstance {
    let mut rng = stream(seed, domain::CHANNEL, index);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let h = (0..k * k)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re * scale, im * scale)
        })
        .collect();
    NetworkInstance {
        k,
        h,
        w: vec![1.0; k],
        sigma2: vec![1.0; k],
    }
}

/// `m` i.i.d. Rayleigh instances. Sample `j` depends only on `(K, seed, j)`.
pub fn generate_instances(k: usize, m: usize, seed: u64) -> Result<Dataset> {
    if k == 0 || m == 0 {
        return Err(Error::invalid(format!(
            "need K >= 1 and m >= 1 (got K = {k}, m = {m})"
        )));
    }
    use rayon::prelude::*;
    let samples = (0..m as u64)
        .into_par_iter()
        .map(|j| PreparedInstance::new(rayleigh_instance(k, seed, j)))
        .collect();
    Ok(Dataset {
        users: k,
        seed,
        samples,
        labels: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{domain, stream};

    fn unit_instance(k: usize) -> NetworkInstance {
        NetworkInstance::with_unit_weights(k, vec![Complex64::new(1.0, 0.0); k * k]).unwrap()
    }

    #[test]
    fn single_user_sinr_and_rate() {
        let inst = unit_instance(1);
        let p = PowerAllocation::full(1);
        assert_eq!(sinr(&inst, &p).unwrap(), vec![1.0]);
        assert!((weighted_sum_rate(&inst, &p).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_power_gives_zero_sinr() {
        let inst = rayleigh_instance(4, 3, 0);
        let s = sinr(&inst, &PowerAllocation::zeros(4)).unwrap();
        assert!(s.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn two_user_unit_channel() {
        let inst = unit_instance(2);
        let p = PowerAllocation::full(2);
        assert_eq!(sinr(&inst, &p).unwrap(), vec![0.5, 0.5]);
        let r = weighted_sum_rate(&inst, &p).unwrap();
        assert!((r - 2.0 * 1.5f64.log2()).abs() < 1e-14);
        assert!((r - 1.16993).abs() < 1e-5);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let inst = unit_instance(3);
        let p = PowerAllocation::full(2);
        assert!(matches!(sinr(&inst, &p), Err(Error::InvalidArgument(_))));
        assert!(matches!(
            weighted_sum_rate(&inst, &p),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn invalid_instances_are_rejected() {
        let h = vec![Complex64::new(1.0, 0.0); 4];
        assert!(NetworkInstance::new(0, vec![], vec![], vec![]).is_err());
        assert!(NetworkInstance::new(2, h.clone(), vec![1.0, -1.0], vec![1.0, 1.0]).is_err());
        assert!(NetworkInstance::new(2, h.clone(), vec![1.0, 1.0], vec![1.0, 0.0]).is_err());
        let mut bad = h.clone();
        bad[1] = Complex64::new(f64::NAN, 0.0);
        assert!(NetworkInstance::new(2, bad, vec![1.0; 2], vec![1.0; 2]).is_err());
        assert!(PowerAllocation::new(vec![0.5, 1.5]).is_err());
    }

    #[test]
    fn permutation_validation() {
        assert!(Permutation::new(vec![0, 0, 1]).is_err());
        assert!(Permutation::new(vec![0, 3, 1]).is_err());
        let pi = Permutation::new(vec![2, 0, 1]).unwrap();
        assert_eq!(pi.apply(&['a', 'b', 'c']), vec!['b', 'c', 'a']);
        assert_eq!(pi.inverse().apply(&pi.apply(&[1, 2, 3])), vec![1, 2, 3]);
    }

    #[test]
    fn identity_and_inverse_roundtrip() {
        let inst = rayleigh_instance(5, 11, 2);
        let p = PowerAllocation::new(vec![0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        let (same, same_p) = apply_permutation(&inst, &p, &Permutation::identity(5)).unwrap();
        assert_eq!(same, inst);
        assert_eq!(same_p, p);

        let pi = Permutation::random(5, &mut stream(1, domain::MISC, 0));
        let (q, qp) = apply_permutation(&inst, &p, &pi).unwrap();
        let (back, back_p) = apply_permutation(&q, &qp, &pi.inverse()).unwrap();
        assert_eq!(back, inst);
        assert_eq!(back_p, p);
    }

    #[test]
    fn sinr_is_equivariant() {
        let mut rng = stream(5, domain::MISC, 1);
        for trial in 0..20 {
            let inst = rayleigh_instance(5, 99, trial);
            let p = PowerAllocation::new(
                (0..5).map(|_| rand::Rng::random::<f64>(&mut rng)).collect(),
            )
            .unwrap();
            let pi = Permutation::random(5, &mut rng);
            let (q, qp) = apply_permutation(&inst, &p, &pi).unwrap();
            let before = sinr(&inst, &p).unwrap();
            let after = sinr(&q, &qp).unwrap();
            for k in 0..5 {
                assert!((after[pi.get(k)] - before[k]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn generation_is_deterministic_and_seeded() {
        let a = generate_instances(5, 10, 7).unwrap();
        let b = generate_instances(5, 10, 7).unwrap();
        let c = generate_instances(5, 10, 8).unwrap();
        for j in 0..10 {
            assert_eq!(a.instance(j), b.instance(j));
        }
        assert!((0..10).any(|j| a.instance(j) != c.instance(j)));
        let longer = generate_instances(5, 25, 7).unwrap();
        for j in 0..10 {
            assert_eq!(a.instance(j), longer.instance(j));
        }
        assert!(generate_instances(0, 10, 1).is_err());
        assert!(generate_instances(3, 0, 1).is_err());
    }

    #[test]
    fn rayleigh_second_moment() {
        let ds = generate_instances(10, 1000, 42).unwrap();
        let n = (ds.len() * 100) as f64;
        let mean: f64 = ds
            .samples
            .iter()
            .flat_map(|s| s.instance.gains())
            .sum::<f64>()
            / n;
        assert!((mean - 1.0).abs() < 0.02, "mean |h|^2 = {mean}");
    }

    #[test]
    fn sum_rate_gradient_matches_finite_differences() {
        let inst = rayleigh_instance(6, 4, 0);
        let p: Vec<f64> = (0..6).map(|i| 0.15 + 0.12 * i as f64).collect();
        let (r, g) = sum_rate_gradient(&inst, &p);
        assert!((r - sum_rate_unchecked(&inst, &p)).abs() < 1e-14);
        for j in 0..6 {
            let mut hi = p.clone();
            let mut lo = p.clone();
            hi[j] += 1e-6;
            lo[j] -= 1e-6;
            let fd = (sum_rate_unchecked(&inst, &hi) - sum_rate_unchecked(&inst, &lo)) / 2e-6;
            assert!((fd - g[j]).abs() < 1e-7 * (1.0 + fd.abs()), "{fd} vs {}", g[j]);
        }
    }
}
