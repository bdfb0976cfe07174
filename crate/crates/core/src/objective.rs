//! Masked thermal variance.
//!
//! For a mask vector `μ` with `N_μ` ones and `M = diag(μ)`,
//!
//! ```text
//! Q = 2/N_μ (M − μμᵀ/N_μ)ᵀ(M − μμᵀ/N_μ) = 2/N_μ M − 2/N_μ² μμᵀ
//! ```
//!
//! (the middle factor is a projector), so `½ Tᵀ Q T` is the population variance
//! of `T` over the mask. `Q` is kept as a diagonal plus a rank-one term and is
//! never densified.

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskVector {
    flags: Vec<bool>,
    members: Vec<usize>,
}

impl MaskVector {
    pub fn new(flags: Vec<bool>) -> Result<Self> {
        let members: Vec<usize> = (0..flags.len()).filter(|&i| flags[i]).collect();
        if members.is_empty() {
            return Err(Error::EmptyMask);
        }
        Ok(Self { flags, members })
    }

    pub fn from_members(n: usize, members: &[usize]) -> Result<Self> {
        let mut flags = vec![false; n];
        for &i in members {
            if i >= n {
                return Err(crate::error::invalid("mask", format!("index {i} >= {n}")));
            }
            flags[i] = true;
        }
        Self::new(flags)
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    /// `N_μ`
    pub fn count(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.flags[i]
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn off_mask(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| !self.flags[i])
    }

    /// `μ` as a 0/1 vector.
    pub fn indicator(&self) -> Vec<f64> {
        self.flags.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect()
    }
}

/// `Q = d·M + c·μμᵀ` with `d = 2/N_μ`, `c = −2/N_μ²`.
#[derive(Debug, Clone)]
pub struct VarianceWeight {
    mask: MaskVector,
}

pub fn build_variance_weight(mask: &MaskVector) -> VarianceWeight {
    VarianceWeight { mask: mask.clone() }
}

impl VarianceWeight {
    pub fn mask(&self) -> &MaskVector {
        &self.mask
    }

    pub fn dim(&self) -> usize {
        self.mask.len()
    }

    /// Diagonal coefficient on mask entries.
    pub fn diagonal(&self) -> f64 {
        2.0 / self.mask.count() as f64
    }

    /// Coefficient of the `μμᵀ` term.
    pub fn rank_one(&self) -> f64 {
        let n = self.mask.count() as f64;
        -2.0 / (n * n)
    }

    /// `Q x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let sum: f64 = self.mask.members().iter().map(|&i| x[i]).sum();
        let shift = self.rank_one() * sum;
        let d = self.diagonal();
        let mut y = vec![0.0; x.len()];
        for &i in self.mask.members() {
            y[i] = d * x[i] + shift;
        }
        y
    }

    /// `½ xᵀ Q x` evaluated through the quadratic form.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        0.5 * crate::sparse::dot(x, &self.apply(x))
    }

    /// Mask variance, evaluated in centred form for numerical stability.
    /// Equal to `½ xᵀ Q x`.
    pub fn variance(&self, x: &[f64]) -> f64 {
        let members = self.mask.members();
        let n = members.len() as f64;
        let mean = members.iter().map(|&i| x[i]).sum::<f64>() / n;
        members.iter().map(|&i| (x[i] - mean).powi(2)).sum::<f64>() / n
    }

    /// Dense `Q`, for small problems and tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut q = vec![vec![0.0; n]; n];
        for &i in self.mask.members() {
            q[i][i] += self.diagonal();
            for &j in self.mask.members() {
                q[i][j] += self.rank_one();
            }
        }
        q
    }
}

/// Population variance over the mask by direct summation: mean first, then
/// squared deviations.
pub fn brute_force_variance(t: &[f64], mask: &MaskVector) -> Result<f64> {
    check_len("variance state", mask.len(), t.len())?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..t.len() {
        if mask.contains(i) {
            sum += t[i];
            count += 1;
        }
    }
    let mean = sum / count as f64;
    let mut acc = 0.0;
    for i in 0..t.len() {
        if mask.contains(i) {
            acc += (t[i] - mean) * (t[i] - mean);
        }
    }
    Ok(acc / count as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeVariance {
    /// K²·s
    pub total: f64,
    /// Per-state variance, K².
    pub variance: Vec<f64>,
    /// Running sum after each state, K²·s.
    pub running: Vec<f64>,
}

/// `Σ_k ½ T_kᵀ Q T_k Δt_k`, with its per-state series.
pub fn cumulative_variance(
    states: &[Vec<f64>],
    dt: &[f64],
    weight: &VarianceWeight,
) -> Result<CumulativeVariance> {
    check_len("cumulative variance weights", states.len(), dt.len())?;
    if states.is_empty() {
        return Err(crate::error::invalid("trajectory", "must be nonempty"));
    }
    let mut variance = Vec::with_capacity(states.len());
    let mut running = Vec::with_capacity(states.len());
    let mut total = 0.0;
    for (t, &h) in states.iter().zip(dt) {
        check_len("cumulative variance state", weight.dim(), t.len())?;
        let v = weight.variance(t);
        total += v * h;
        variance.push(v);
        running.push(total);
    }
    Ok(CumulativeVariance {
        total,
        variance,
        running,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_element_variance_is_zero() {
        let mask = MaskVector::new(vec![true]).unwrap();
        let q = build_variance_weight(&mask);
        assert_eq!(q.quadratic_form(&[400.0]), 0.0);
    }

    #[test]
    fn two_element_variance() {
        let mask = MaskVector::new(vec![true, true]).unwrap();
        let q = build_variance_weight(&mask);
        let t = [300.0, 400.0];
        assert!((q.quadratic_form(&t) - 2500.0).abs() < 1e-9);
        assert!((brute_force_variance(&t, &mask).unwrap() - 2500.0).abs() < 1e-9);
    }

    #[test]
    fn off_mask_value_is_ignored() {
        let mask = MaskVector::new(vec![true, false]).unwrap();
        let q = build_variance_weight(&mask);
        assert_eq!(q.quadratic_form(&[300.0, 1.0]), q.quadratic_form(&[300.0, 9e9]));
    }

    #[test]
    fn empty_mask_rejected() {
        assert!(matches!(MaskVector::new(vec![false; 3]), Err(Error::EmptyMask)));
    }

    #[test]
    fn constant_state_has_zero_variance() {
        let mask = MaskVector::new(vec![true, true, false, true]).unwrap();
        assert_eq!(brute_force_variance(&[7.0; 4], &mask).unwrap(), 0.0);
    }

    #[test]
    fn dense_q_is_a_scaled_projector() {
        let mask = MaskVector::new(vec![true, false, true, true]).unwrap();
        let q = build_variance_weight(&mask).to_dense();
        let n = 3.0;
        // (N/2 Q)² = N/2 Q
        for i in 0..4 {
            for j in 0..4 {
                let sq: f64 = (0..4).map(|k| q[i][k] * q[k][j]).sum::<f64>() * n / 2.0;
                assert!((sq - q[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cumulative_hand_sum() {
        let mask = MaskVector::new(vec![true, true]).unwrap();
        let q = build_variance_weight(&mask);
        let states = vec![vec![300.0, 400.0], vec![350.0, 350.0]];
        let cv = cumulative_variance(&states, &[0.1, 0.1], &q).unwrap();
        assert!((cv.total - 250.0).abs() < 1e-9);
        assert_eq!(cv.running.len(), 2);
        assert!((cv.running[0] - 250.0).abs() < 1e-9);

        let flat = vec![vec![5.0, 5.0]; 4];
        assert_eq!(cumulative_variance(&flat, &[1.0; 4], &q).unwrap().total, 0.0);
        assert!(cumulative_variance(&[], &[], &q).is_err());
    }

    fn masked_state() -> impl Strategy<Value = (Vec<bool>, Vec<f64>)> {
        (1usize..40).prop_flat_map(|n| {
            (
                proptest::collection::vec(any::<bool>(), n)
                    .prop_filter("nonempty mask", |f| f.iter().any(|b| *b)),
                proptest::collection::vec(-2000.0..4000.0f64, n),
            )
        })
    }

    proptest! {
        #[test]
        fn quadratic_form_matches_brute_force((flags, t) in masked_state()) {
            let mask = MaskVector::new(flags).unwrap();
            let q = build_variance_weight(&mask);
            let brute = brute_force_variance(&t, &mask).unwrap();
            let scale = t.iter().map(|v| v * v).fold(1.0, f64::max);
            prop_assert!((q.quadratic_form(&t) - brute).abs() <= 1e-9 * scale);
            prop_assert!((q.variance(&t) - brute).abs() <= 1e-9 * scale);
        }

        #[test]
        fn ones_span_the_nullspace((flags, _) in masked_state()) {
            let mask = MaskVector::new(flags).unwrap();
            let q = build_variance_weight(&mask);
            let qx = q.apply(&vec![1.0; mask.len()]);
            prop_assert!(qx.iter().all(|v| v.abs() < 1e-12));
        }

        #[test]
        fn shift_and_off_mask_invariance((flags, t) in masked_state(), c in -500.0..500.0f64, junk in -1e4..1e4f64) {
            let mask = MaskVector::new(flags).unwrap();
            let q = build_variance_weight(&mask);
            let base = q.quadratic_form(&t);
            let shifted: Vec<f64> = t.iter().map(|v| v + c).collect();
            let mut scrambled = t.clone();
            for i in mask.off_mask().collect::<Vec<_>>() {
                scrambled[i] = junk;
            }
            let scale = t.iter().map(|v| (v.abs() + c.abs()).powi(2)).fold(1.0, f64::max);
            prop_assert!((q.quadratic_form(&shifted) - base).abs() <= 1e-9 * scale);
            prop_assert!((q.quadratic_form(&scrambled) - base).abs() <= 1e-12 * scale);
        }
    }
}
