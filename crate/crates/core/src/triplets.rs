//! Proximity-comparison triplets generated from labeled data, with the
//! per-triplet constraint matrices kept in rank-2 factored form.
//!
//! A triplet (i, j, k) says "j should end up closer to i than k is". Its
//! constraint matrix is `A_r = v_far v_far^T - v_near v_near^T` with
//! `v_far = a_i - a_k` and `v_near = a_i - a_j`; only the two vectors are
//! stored (O(m D) instead of O(m D^2) memory).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::Error;
use crate::linalg::SymMatrix;
use crate::Result;

/// Fixed column-block width for parallel accumulations. Partial sums are
/// combined in block order, so results do not depend on the thread count.
const ACC_BLOCK: usize = 512;

/// Labeled feature matrix: row `i` is sample `a_i`.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: DMatrix<f64>,
    labels: Vec<usize>,
    label_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from features and dense integer labels; label names
    /// default to the decimal ids.
    pub fn from_parts(features: DMatrix<f64>, labels: Vec<usize>) -> Result<Self> {
        let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
        let names = (0..n_classes).map(|c| c.to_string()).collect();
        Self::new(features, labels, names)
    }

    pub fn new(
        features: DMatrix<f64>,
        labels: Vec<usize>,
        label_names: Vec<String>,
    ) -> Result<Self> {
        if features.nrows() < 2 {
            return Err(Error::invalid("dataset needs at least 2 samples"));
        }
        if features.nrows() != labels.len() {
            return Err(Error::invalid(format!(
                "feature rows ({}) and labels ({}) disagree",
                features.nrows(),
                labels.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains a non-finite feature"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= label_names.len()) {
            return Err(Error::invalid(format!(
                "label id {bad} out of range for {} classes",
                label_names.len()
            )));
        }
        Ok(Dataset {
            features,
            labels,
            label_names,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires >= 2 samples
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn sample(&self, i: usize) -> DVector<f64> {
        self.features.row(i).transpose()
    }

    /// Squared Euclidean distance between samples `i` and `j`.
    pub fn dist_sq(&self, i: usize, j: usize) -> f64 {
        (self.features.row(i) - self.features.row(j)).norm_squared()
    }

    /// New dataset restricted to `indices` (in the given order).
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.iter().any(|&i| i >= self.len()) {
            return Err(Error::invalid("subset index out of range"));
        }
        let features = DMatrix::from_fn(indices.len(), self.dim(), |r, c| {
            self.features[(indices[r], c)]
        });
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Dataset::new(features, labels, self.label_names.clone())
    }
}

/// Index triple (i, j, k): same class for i and j, different class for k.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

/// All triplet constraint matrices in factored form: column `r` of `far` is
/// `a_i - a_k`, column `r` of `near` is `a_i - a_j`.
#[derive(Debug, Clone)]
pub struct TripletFactors {
    far: DMatrix<f64>,
    near: DMatrix<f64>,
}

impl TripletFactors {
    pub fn from_columns(far: DMatrix<f64>, near: DMatrix<f64>) -> Result<Self> {
        if far.shape() != near.shape() {
            return Err(Error::invalid("far/near factor shapes disagree"));
        }
        if far.ncols() == 0 {
            return Err(Error::invalid("need at least one triplet"));
        }
        Ok(TripletFactors { far, near })
    }

    /// Number of triplets.
    pub fn len(&self) -> usize {
        self.far.ncols()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires >= 1 triplet
    }

    pub fn dim(&self) -> usize {
        self.far.nrows()
    }

    pub fn far(&self) -> &DMatrix<f64> {
        &self.far
    }

    pub fn near(&self) -> &DMatrix<f64> {
        &self.near
    }

    /// Dense reconstruction of `A_r`; O(D^2), for audits and small problems.
    pub fn dense_constraint(&self, r: usize) -> SymMatrix {
        let vf = self.far.column(r);
        let vn = self.near.column(r);
        let m = &vf * vf.transpose() - &vn * vn.transpose();
        SymMatrix::from_matrix(m).expect("factors are finite")
    }
}

/// For each sample, pairs the `k_same` Euclidean-nearest same-class samples
/// with the `k_diff` nearest different-class samples (cross product).
/// Neighbor counts truncate to what the class sizes allow; distance ties
/// break by ascending index, so the output is deterministic.
pub fn generate_triplets(data: &Dataset, k_same: usize, k_diff: usize) -> Result<Vec<Triplet>> {
    if k_same < 1 || k_diff < 1 {
        return Err(Error::invalid("k_same and k_diff must be at least 1"));
    }
    let n = data.len();
    let mut triplets = Vec::new();
    for i in 0..n {
        let mut same: Vec<usize> = (0..n)
            .filter(|&j| j != i && data.labels[j] == data.labels[i])
            .collect();
        let mut diff: Vec<usize> = (0..n).filter(|&j| data.labels[j] != data.labels[i]).collect();
        let by_dist = |a: &usize, b: &usize| {
            data.dist_sq(i, *a)
                .total_cmp(&data.dist_sq(i, *b))
                .then(a.cmp(b))
        };
        same.sort_by(by_dist);
        diff.sort_by(by_dist);
        same.truncate(k_same);
        diff.truncate(k_diff);
        for &j in &same {
            for &k in &diff {
                triplets.push(Triplet { i, j, k });
            }
        }
    }
    Ok(triplets)
}

/// Materializes the difference-vector factors for a triplet list.
pub fn build_factors(data: &Dataset, triplets: &[Triplet]) -> Result<TripletFactors> {
    if triplets.is_empty() {
        return Err(Error::invalid("cannot build factors from zero triplets"));
    }
    let n = data.len();
    for t in triplets {
        if t.i >= n || t.j >= n || t.k >= n {
            return Err(Error::invalid(format!(
                "triplet ({}, {}, {}) out of range for {n} samples",
                t.i, t.j, t.k
            )));
        }
    }
    let d = data.dim();
    let m = triplets.len();
    let mut far = DMatrix::zeros(d, m);
    let mut near = DMatrix::zeros(d, m);
    for (r, t) in triplets.iter().enumerate() {
        let ai = data.features.row(t.i);
        far.column_mut(r)
            .copy_from(&(ai - data.features.row(t.k)).transpose());
        near.column_mut(r)
            .copy_from(&(ai - data.features.row(t.j)).transpose());
    }
    TripletFactors::from_columns(far, near)
}

/// Margin of triplet `r` under metric `X`: `<A_r, X>`, computed from the
/// factors in O(D^2) without forming `A_r`.
pub fn margin(x: &SymMatrix, r: usize, f: &TripletFactors) -> Result<f64> {
    if x.dim() != f.dim() {
        return Err(Error::invalid("metric dimension does not match factors"));
    }
    if r >= f.len() {
        return Err(Error::invalid("triplet index out of range"));
    }
    let vf = f.far.column(r);
    let vn = f.near.column(r);
    let xm = x.as_matrix();
    Ok((vf.transpose() * xm * vf)[(0, 0)] - (vn.transpose() * xm * vn)[(0, 0)])
}

/// All m margins `<A_r, X>` at once via two matrix products.
pub fn margins(x: &SymMatrix, f: &TripletFactors) -> Result<DVector<f64>> {
    if x.dim() != f.dim() {
        return Err(Error::invalid("metric dimension does not match factors"));
    }
    let xm = x.as_matrix();
    let xf = xm * &f.far;
    let xn = xm * &f.near;
    let m = f.len();
    let mut out = DVector::zeros(m);
    for r in 0..m {
        out[r] = f.far.column(r).dot(&xf.column(r)) - f.near.column(r).dot(&xn.column(r));
    }
    Ok(out)
}

/// Assembles `Â(u) = -Σ_r u_r A_r = Σ_r u_r (v_near v_near^T - v_far v_far^T)`
/// as two scaled Gram accumulations in O(m D^2).
pub fn accumulate_a_hat(u: &DVector<f64>, f: &TripletFactors) -> Result<SymMatrix> {
    if u.len() != f.len() {
        return Err(Error::invalid(format!(
            "dual vector length {} does not match {} triplets",
            u.len(),
            f.len()
        )));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("dual vector contains a non-finite entry"));
    }
    let d = f.dim();
    let m = f.len();
    let blocks: Vec<(usize, usize)> = (0..m)
        .step_by(ACC_BLOCK)
        .map(|s| (s, (s + ACC_BLOCK).min(m)))
        .collect();
    let partials: Vec<DMatrix<f64>> = blocks
        .par_iter()
        .map(|&(lo, hi)| {
            let w = hi - lo;
            let far = f.far.columns(lo, w);
            let near = f.near.columns(lo, w);
            let mut far_scaled = far.clone_owned();
            let mut near_scaled = near.clone_owned();
            for (c, r) in (lo..hi).enumerate() {
                far_scaled.column_mut(c).scale_mut(u[r]);
                near_scaled.column_mut(c).scale_mut(u[r]);
            }
            near_scaled * near.transpose() - far_scaled * far.transpose()
        })
        .collect();
    let mut acc = DMatrix::zeros(d, d);
    for p in partials {
        acc += p;
    }
    SymMatrix::from_matrix(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn dataset_from_rows(rows: &[Vec<f64>], labels: &[usize]) -> Dataset {
        let d = rows[0].len();
        let features = DMatrix::from_fn(rows.len(), d, |r, c| rows[r][c]);
        Dataset::from_parts(features, labels.to_vec()).unwrap()
    }

    fn random_dataset(n: usize, d: usize, classes: usize, rng: &mut impl Rng) -> Dataset {
        let features = DMatrix::from_fn(n, d, |_, _| rng.random::<f64>() * 4.0 - 2.0);
        let labels = (0..n).map(|i| i % classes).collect();
        Dataset::from_parts(features, labels).unwrap()
    }

    #[test]
    fn count_matches_cross_product_rule() {
        // 105 samples in 3 classes of 35: every sample has 3 same-class and
        // 3 different-class neighbors available, so m = 105 * 3 * 3 = 945.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = random_dataset(105, 4, 3, &mut rng);
        let t = generate_triplets(&data, 3, 3).unwrap();
        assert_eq!(t.len(), 945);

        // Truncation formula on an unbalanced set.
        let data = random_dataset(11, 3, 4, &mut rng);
        let t = generate_triplets(&data, 3, 5).unwrap();
        let expected: usize = (0..11)
            .map(|i| {
                let class = data.labels()[i];
                let same = data.labels().iter().filter(|&&l| l == class).count() - 1;
                let diff = 11 - same - 1;
                same.min(3) * diff.min(5)
            })
            .sum();
        assert_eq!(t.len(), expected);
    }

    #[test]
    fn degenerate_two_samples_truncates_to_zero() {
        let data = dataset_from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]], &[0, 1]);
        let t = generate_triplets(&data, 1, 1).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn four_points_match_exhaustive_enumeration() {
        // Brute-force oracle: for each sample find its nearest same-class and
        // nearest different-class sample by scanning all pairs.
        let rows = [
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![10.0, 0.0],
            vec![11.5, 0.0],
        ];
        let labels = [0, 0, 1, 1];
        let data = dataset_from_rows(&rows, &labels);
        let got = generate_triplets(&data, 1, 1).unwrap();

        let mut expected = Vec::new();
        for i in 0..4 {
            let mut best_same: Option<(f64, usize)> = None;
            let mut best_diff: Option<(f64, usize)> = None;
            for j in 0..4 {
                if j == i {
                    continue;
                }
                let d: f64 = rows[i]
                    .iter()
                    .zip(&rows[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                let slot = if labels[i] == labels[j] {
                    &mut best_same
                } else {
                    &mut best_diff
                };
                if slot.is_none() || d < slot.unwrap().0 {
                    *slot = Some((d, j));
                }
            }
            expected.push(Triplet {
                i,
                j: best_same.unwrap().1,
                k: best_diff.unwrap().1,
            });
        }
        assert_eq!(got, expected);
    }

    #[test]
    fn tie_breaking_is_by_ascending_index() {
        // Samples 1 and 2 are equidistant from 0; index 1 must win.
        let data = dataset_from_rows(
            &[
                vec![0.0, 0.0],
                vec![1.0, 0.0],
                vec![-1.0, 0.0],
                vec![5.0, 0.0],
            ],
            &[0, 0, 0, 1],
        );
        let t = generate_triplets(&data, 1, 1).unwrap();
        assert_eq!(t[0], Triplet { i: 0, j: 1, k: 3 });
    }

    #[test]
    fn factors_reconstruct_example_constraint() {
        let data = dataset_from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 2.0]], &[0, 0, 1]);
        let f = build_factors(&data, &[Triplet { i: 0, j: 1, k: 2 }]).unwrap();
        let a = f.dense_constraint(0);
        assert_abs_diff_eq!(a.entry(0, 0), -1.0);
        assert_abs_diff_eq!(a.entry(1, 1), 4.0);
        assert_abs_diff_eq!(a.entry(0, 1), 0.0);

        // j pointing at a duplicate of i leaves only the PSD far term.
        let dup = dataset_from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 2.0]], &[0, 0, 1]);
        let f = build_factors(&dup, &[Triplet { i: 0, j: 1, k: 2 }]).unwrap();
        let a = f.dense_constraint(0);
        assert_abs_diff_eq!(a.entry(1, 1), 4.0);
        assert_abs_diff_eq!(a.entry(0, 0), 0.0);

        assert!(build_factors(&data, &[Triplet { i: 0, j: 9, k: 2 }]).is_err());
    }

    #[test]
    fn margin_example_and_oracle() {
        let data = dataset_from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 2.0]], &[0, 0, 1]);
        let f = build_factors(&data, &[Triplet { i: 0, j: 1, k: 2 }]).unwrap();
        assert_abs_diff_eq!(margin(&SymMatrix::identity(2), 0, &f).unwrap(), 3.0);
        assert_abs_diff_eq!(margin(&SymMatrix::zeros(2), 0, &f).unwrap(), 0.0);
        assert!(margin(&SymMatrix::identity(3), 0, &f).is_err());
    }

    #[test]
    fn factored_margin_matches_dense_inner_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = random_dataset(12, 5, 3, &mut rng);
        let triplets = generate_triplets(&data, 2, 2).unwrap();
        let f = build_factors(&data, &triplets).unwrap();
        let x = {
            let m = DMatrix::from_fn(5, 5, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            SymMatrix::from_matrix(m).unwrap()
        };
        let batch = margins(&x, &f).unwrap();
        for r in 0..f.len() {
            let dense = crate::linalg::frob_inner(&f.dense_constraint(r), &x).unwrap();
            let single = margin(&x, r, &f).unwrap();
            assert_abs_diff_eq!(single, dense, epsilon = 1e-10);
            assert_abs_diff_eq!(batch[r], dense, epsilon = 1e-10);
        }
    }

    #[test]
    fn a_hat_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let data = random_dataset(14, 8, 2, &mut rng);
        let triplets: Vec<Triplet> = generate_triplets(&data, 2, 3).unwrap().into_iter().take(20).collect();
        let f = build_factors(&data, &triplets).unwrap();
        let u = DVector::from_fn(f.len(), |_, _| rng.random::<f64>());

        let zero = accumulate_a_hat(&DVector::zeros(f.len()), &f).unwrap();
        assert_abs_diff_eq!(zero.frob_norm(), 0.0);

        let got = accumulate_a_hat(&u, &f).unwrap();
        let mut dense = DMatrix::zeros(8, 8);
        for r in 0..f.len() {
            dense -= f.dense_constraint(r).as_matrix() * u[r];
        }
        let err = (got.as_matrix() - dense).norm();
        assert!(err <= 1e-10 * (1.0 + dense.norm()));

        let single = accumulate_a_hat(&DVector::from_vec(vec![1.0]), &build_factors(&data, &triplets[..1].to_vec()).unwrap()).unwrap();
        let neg_a1 = f.dense_constraint(0).scale(-1.0);
        assert!(single.sub(&neg_a1).unwrap().frob_norm() <= 1e-12);
    }

    #[test]
    fn constraint_is_rank_two_with_known_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let data = random_dataset(10, 6, 2, &mut rng);
        let triplets = generate_triplets(&data, 1, 1).unwrap();
        let f = build_factors(&data, &triplets).unwrap();
        for r in 0..f.len().min(5) {
            let a = f.dense_constraint(r);
            let want = f.far().column(r).norm_squared() - f.near().column(r).norm_squared();
            assert_abs_diff_eq!(a.trace(), want, epsilon = 1e-10);
            let decomp = crate::linalg::sym_eig(&a).unwrap();
            let lmax = decomp.lambda_max_abs();
            let essential = decomp
                .eigenvalues
                .iter()
                .filter(|l| l.abs() > 1e-10 * lmax.max(1.0))
                .count();
            assert!(essential <= 2, "A_r should have rank at most 2");
        }
    }
}
