//! Dense complex tensors and the matrix kernels the receivers are built on.
//!
//! Linearization convention: earlier modes vary fastest, both for the flat
//! storage of a [`ComplexTensor`] and for the column ordering of every
//! unfolding. Matrices are `nalgebra` column-major matrices, so `vec(A)`
//! stacks columns and `vec(A B C) = (Cᵀ ⊗ A) vec(B)` holds with [`kron`].
//!
//! With this convention the mode-`n` unfolding of a diagonal-core trilinear
//! model `𝓘 ×₀ A ×₁ B ×₂ C` is `A (C ⋄ B)ᵀ`, `B (C ⋄ A)ᵀ` and `C (B ⋄ A)ᵀ`.
//!
//! Mode indices are zero-based throughout.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

#[allow(non_camel_case_types)]
pub type c64 = Complex<f64>;
pub type ComplexMatrix = DMatrix<c64>;
pub type ComplexVector = DVector<c64>;

/// Default relative singular-value cutoff for [`pinv`].
pub const PINV_TOL: f64 = 1e-12;


/// Dense order-`d` array of complex scalars, first mode fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor {
    dims: Vec<usize>,
    data: Vec<c64>,
}

impl ComplexTensor {
    pub fn new(dims: Vec<usize>, data: Vec<c64>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Dimension(format!(
                "tensor extents must be positive, got {dims:?}"
            )));
        }
        let numel: usize = dims.iter().product();
        if numel != data.len() {
            return Err(Error::Dimension(format!(
                "dims {dims:?} hold {numel} entries but {} were supplied",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let numel = dims.iter().product();
        Self {
            dims: dims.to_vec(),
            data: vec![c64::new(0.0, 0.0); numel],
        }
    }

    /// Builds a tensor by evaluating `f` at every multi-index.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> c64) -> Self {
        let numel: usize = dims.iter().product();
        let mut idx = vec![0usize; dims.len()];
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(f(&idx));
            for (i, d) in idx.iter_mut().zip(dims) {
                *i += 1;
                if *i < *d {
                    break;
                }
                *i = 0;
            }
        }
        Self {
            dims: dims.to_vec(),
            data,
        }
    }

    /// The order-`order` identity tensor with `rank` ones on its superdiagonal.
    pub fn identity(order: usize, rank: usize) -> Self {
        Self::from_fn(&vec![rank; order], |idx| {
            if idx.iter().all(|&i| i == idx[0]) {
                c64::new(1.0, 0.0)
            } else {
                c64::new(0.0, 0.0)
            }
        })
    }

    /// Views a matrix as an order-2 tensor (same column-major data).
    pub fn from_matrix(m: &ComplexMatrix) -> Self {
        Self {
            dims: vec![m.nrows(), m.ncols()],
            data: m.as_slice().to_vec(),
        }
    }

    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        match self.dims.as_slice() {
            &[r, c] => Ok(ComplexMatrix::from_column_slice(r, c, &self.data)),
            _ => Err(Error::Dimension(format!(
                "expected an order-2 tensor, got dims {:?}",
                self.dims
            ))),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[c64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [c64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<c64> {
        self.data
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut lin = 0;
        let mut stride = 1;
        for (&i, &d) in idx.iter().zip(&self.dims) {
            debug_assert!(i < d);
            lin += i * stride;
            stride *= d;
        }
        lin
    }

    pub fn get(&self, idx: &[usize]) -> c64 {
        self.data[self.linear_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: c64) {
        let lin = self.linear_index(idx);
        self.data[lin] = v;
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sqr().sqrt()
    }

    /// `‖self − other‖_F²`.
    pub fn distance_sqr(&self, other: &ComplexTensor) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::Dimension(format!(
                "cannot compare dims {:?} and {:?}",
                self.dims, other.dims
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum())
    }

    /// Same data, new extents (the linearization is kept as is).
    pub fn reshape(self, dims: &[usize]) -> Result<Self> {
        Self::new(dims.to_vec(), self.data)
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            Err(Error::ModeOutOfRange {
                mode,
                order: self.order(),
            })
        } else {
            Ok(())
        }
    }
}

/// Mode-`n` unfolding: `dims[n]` rows; columns enumerate the remaining modes
/// with lower-numbered modes varying fastest.
pub fn unfold(t: &ComplexTensor, mode: usize) -> Result<ComplexMatrix> {
    t.check_mode(mode)?;
    let left: usize = t.dims[..mode].iter().product();
    let dn = t.dims[mode];
    let right: usize = t.dims[mode + 1..].iter().product();
    let mut out = ComplexMatrix::zeros(dn, left * right);
    for b in 0..right {
        for j in 0..dn {
            let src = left * (j + dn * b);
            for a in 0..left {
                out[(j, a + left * b)] = t.data[src + a];
            }
        }
    }
    Ok(out)
}

/// Inverse of [`unfold`].
pub fn fold(m: &ComplexMatrix, mode: usize, dims: &[usize]) -> Result<ComplexTensor> {
    let mut t = ComplexTensor::zeros(dims);
    t.check_mode(mode)?;
    let left: usize = dims[..mode].iter().product();
    let dn = dims[mode];
    let right: usize = dims[mode + 1..].iter().product();
    if m.nrows() != dn || m.ncols() != left * right {
        return Err(Error::Dimension(format!(
            "cannot fold a {}x{} matrix along mode {mode} into {dims:?}",
            m.nrows(),
            m.ncols()
        )));
    }
    for b in 0..right {
        for j in 0..dn {
            let dst = left * (j + dn * b);
            for a in 0..left {
                t.data[dst + a] = m[(j, a + left * b)];
            }
        }
    }
    Ok(t)
}

/// Generalized (multimode) unfolding `[T]_(rows, cols)`: the row index
/// combines `row_modes` and the column index combines `col_modes`, in both
/// cases with the first listed mode varying fastest. Together the two lists
/// must be a permutation of all modes.
pub fn unfold_modes(
    t: &ComplexTensor,
    row_modes: &[usize],
    col_modes: &[usize],
) -> Result<ComplexMatrix> {
    let order = t.order();
    let mut seen = vec![false; order];
    for &m in row_modes.iter().chain(col_modes) {
        t.check_mode(m)?;
        if std::mem::replace(&mut seen[m], true) {
            return Err(Error::Dimension(format!("mode {m} listed twice")));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Dimension(
            "row and column modes must cover every mode".into(),
        ));
    }
    let strides = |modes: &[usize]| {
        let mut s = vec![0usize; order];
        let mut acc = 1;
        for &m in modes {
            s[m] = acc;
            acc *= t.dims[m];
        }
        (s, acc)
    };
    let (rs, nrows) = strides(row_modes);
    let (cs, ncols) = strides(col_modes);
    let mut out = ComplexMatrix::zeros(nrows, ncols);
    let mut idx = vec![0usize; order];
    for &v in &t.data {
        let r: usize = idx.iter().zip(&rs).map(|(i, s)| i * s).sum();
        let c: usize = idx.iter().zip(&cs).map(|(i, s)| i * s).sum();
        out[(r, c)] = v;
        for (i, d) in idx.iter_mut().zip(&t.dims) {
            *i += 1;
            if *i < *d {
                break;
            }
            *i = 0;
        }
    }
    Ok(out)
}

/// `t ×ₙ m`.
pub fn nmode_product(t: &ComplexTensor, m: &ComplexMatrix, mode: usize) -> Result<ComplexTensor> {
    t.check_mode(mode)?;
    if m.ncols() != t.dims[mode] {
        return Err(Error::Dimension(format!(
            "mode-{mode} product needs {} columns, matrix has {}",
            t.dims[mode],
            m.ncols()
        )));
    }
    let mut dims = t.dims.clone();
    dims[mode] = m.nrows();
    fold(&(m * unfold(t, mode)?), mode, &dims)
}

/// Kronecker product; block `(i, j)` of the result is `a[(i, j)] · b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = ComplexMatrix::zeros(ra * rb, ca * cb);
    for j in 0..ca {
        for l in 0..cb {
            let col = j * cb + l;
            for i in 0..ra {
                let aij = a[(i, j)];
                for k in 0..rb {
                    out[(i * rb + k, col)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Khatri-Rao (column-wise Kronecker) product.
pub fn khatri_rao(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.ncols() != b.ncols() {
        return Err(Error::Dimension(format!(
            "Khatri-Rao needs equal column counts, got {} and {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let (ra, rb) = (a.nrows(), b.nrows());
    let mut out = ComplexMatrix::zeros(ra * rb, a.ncols());
    for l in 0..a.ncols() {
        for i in 0..ra {
            let ail = a[(i, l)];
            for k in 0..rb {
                out[(i * rb + k, l)] = ail * b[(k, l)];
            }
        }
    }
    Ok(out)
}

/// `Ξ = I_l ⋄ I_l`, the `l² × l` matrix with `(A ⊗ B) Ξ = A ⋄ B`.
pub fn selection_matrix(l: usize) -> ComplexMatrix {
    let mut xi = ComplexMatrix::zeros(l * l, l);
    for r in 0..l {
        xi[(r * l + r, r)] = c64::new(1.0, 0.0);
    }
    xi
}

/// Thin SVD with singular values sorted in decreasing order.
pub struct Svd {
    pub u: ComplexMatrix,
    pub singular_values: Vec<f64>,
    /// Right singular vectors as columns.
    pub v: ComplexMatrix,
}

pub fn svd(a: &ComplexMatrix) -> Result<Svd> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(Error::Dimension("SVD of an empty matrix".into()));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical("SVD input has non-finite entries".into()));
    }
    let k = m.min(n);
    let (mi, ni, ki) = (m as i32, n as i32, k as i32);
    let mut work_a = a.clone();
    let mut s = vec![0.0; k];
    let mut u = ComplexMatrix::zeros(m, k);
    let mut v_t = ComplexMatrix::zeros(k, n);
    let mut rwork = vec![0.0; 5 * k];
    let mut info = 0;
    let mut query = [c64::new(0.0, 0.0)];
    // SAFETY: every buffer is sized for the column-major m x n problem with
    // thin factors, as zgesvd documents.
    unsafe {
        lapack::zgesvd(
            b'S', b'S', mi, ni, work_a.as_mut_slice(), mi, &mut s, u.as_mut_slice(), mi,
            v_t.as_mut_slice(), ki, &mut query, -1, &mut rwork, &mut info,
        );
    }
    let lwork = (query[0].re as usize).max(1);
    let mut work = vec![c64::new(0.0, 0.0); lwork];
    if info == 0 {
        unsafe {
            lapack::zgesvd(
                b'S', b'S', mi, ni, work_a.as_mut_slice(), mi, &mut s, u.as_mut_slice(), mi,
                v_t.as_mut_slice(), ki, &mut work, lwork as i32, &mut rwork, &mut info,
            );
        }
    }
    if info != 0 {
        return Err(Error::Numerical(format!(
            "SVD of a {m}x{n} matrix failed (zgesvd info {info})"
        )));
    }
    Ok(Svd {
        u,
        singular_values: s,
        v: v_t.adjoint(),
    })
}

/// Moore-Penrose pseudo-inverse; singular values below `tol · σ_max` are
/// treated as zero.
pub fn pinv(a: &ComplexMatrix, tol: f64) -> Result<ComplexMatrix> {
    pinv_with_rank(a, tol).map(|(p, _)| p)
}

/// [`pinv`] together with the numerical rank it retained.
pub fn pinv_with_rank(a: &ComplexMatrix, tol: f64) -> Result<(ComplexMatrix, usize)> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok((ComplexMatrix::zeros(n, m), 0));
    }
    let s = svd(a)?;
    let cutoff = tol * s.singular_values.first().copied().unwrap_or(0.0);
    let mut out = ComplexMatrix::zeros(n, m);
    let mut rank = 0;
    for (k, &sv) in s.singular_values.iter().enumerate() {
        if sv <= cutoff || sv == 0.0 {
            break;
        }
        out += (s.v.column(k) * s.u.column(k).adjoint()) * c64::new(1.0 / sv, 0.0);
        rank += 1;
    }
    Ok((out, rank))
}

/// Numerical rank: number of singular values above `tol · σ_max`.
pub fn numerical_rank(a: &ComplexMatrix, tol: f64) -> Result<usize> {
    let s = svd(a)?;
    let cutoff = tol * s.singular_values.first().copied().unwrap_or(0.0);
    Ok(s.singular_values.iter().filter(|&&sv| sv > cutoff && sv > 0.0).count())
}

/// Dominant singular triplet: `σ u vᴴ` is the best rank-1 approximation.
#[derive(Clone, Debug)]
pub struct Rank1 {
    pub u: ComplexVector,
    pub v: ComplexVector,
    pub sigma: f64,
}

impl Rank1 {
    /// `(√σ u, √σ v*)`, so that `left · rightᵀ = σ u vᴴ`.
    pub fn balanced_factors(&self) -> (ComplexVector, ComplexVector) {
        let s = c64::new(self.sigma.sqrt(), 0.0);
        (&self.u * s, self.v.conjugate() * s)
    }

    pub fn approximation(&self) -> ComplexMatrix {
        &self.u * self.v.adjoint() * c64::new(self.sigma, 0.0)
    }
}

pub fn best_rank1(a: &ComplexMatrix) -> Result<Rank1> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(Error::Dimension("best rank-1 of an empty matrix".into()));
    }
    if a.iter().all(|z| z.norm_sqr() == 0.0) {
        let mut u = ComplexVector::zeros(m);
        let mut v = ComplexVector::zeros(n);
        u[0] = c64::new(1.0, 0.0);
        v[0] = c64::new(1.0, 0.0);
        return Ok(Rank1 { u, v, sigma: 0.0 });
    }
    let s = svd(a)?;
    Ok(Rank1 {
        u: s.u.column(0).into_owned(),
        v: s.v.column(0).into_owned(),
        sigma: s.singular_values[0],
    })
}

/// `vec` of a matrix (columns stacked).
pub fn vec(m: &ComplexMatrix) -> ComplexVector {
    ComplexVector::from_column_slice(m.as_slice())
}

pub fn unvec(v: &ComplexVector, rows: usize, cols: usize) -> Result<ComplexMatrix> {
    if v.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "cannot unvec {} entries into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(ComplexMatrix::from_column_slice(rows, cols, v.as_slice()))
}

/// `‖a − b‖_F / ‖b‖_F`, or the absolute error when `b` is zero.
pub fn rel_error(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let denom = b.norm();
    let num = (a - b).norm();
    if denom == 0.0 {
        num
    } else {
        num / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn re(x: f64) -> c64 {
        c64::new(x, 0.0)
    }

    fn real_matrix(rows: usize, cols: usize, vals: &[f64]) -> ComplexMatrix {
        ComplexMatrix::from_row_slice(rows, cols, &vals.iter().map(|&v| re(v)).collect::<Vec<_>>())
    }

    fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn random_int_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| re(rng.random_range(-3..=3) as f64))
    }

    fn random_tensor(rng: &mut impl Rng, dims: &[usize]) -> ComplexTensor {
        ComplexTensor::from_fn(dims, |_| {
            c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn unfold_mode0_of_counting_tensor() {
        // Oracle: explicit fiber enumeration, column j + 2k.
        let t = ComplexTensor::from_fn(&[2, 2, 2], |ix| re((1 + ix[0] + 2 * ix[1] + 4 * ix[2]) as f64));
        let mut expected = ComplexMatrix::zeros(2, 4);
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    expected[(i, j + 2 * k)] = re((1 + i + 2 * j + 4 * k) as f64);
                }
            }
        }
        let u = unfold(&t, 0).unwrap();
        assert_eq!(u, expected);
        assert_eq!(u, real_matrix(2, 4, &[1., 3., 5., 7., 2., 4., 6., 8.]));
    }

    #[test]
    fn unfold_zero_tensor_is_zero() {
        let t = ComplexTensor::zeros(&[3, 2, 4]);
        for n in 0..3 {
            assert!(unfold(&t, n).unwrap().iter().all(|z| *z == re(0.0)));
        }
    }

    #[test]
    fn fold_inverts_unfold() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_tensor(&mut rng, &[3, 4, 2]);
        let back = fold(&unfold(&t, 1).unwrap(), 1, t.dims()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn unfold_rejects_bad_mode() {
        let t = ComplexTensor::zeros(&[2, 2]);
        assert!(matches!(unfold(&t, 2), Err(Error::ModeOutOfRange { mode: 2, order: 2 })));
    }

    #[test]
    fn tensor_new_checks_length() {
        assert!(ComplexTensor::new(vec![2, 3], vec![re(0.0); 5]).is_err());
        assert!(ComplexTensor::new(vec![2, 0], vec![]).is_err());
    }

    #[test]
    fn nmode_identity_and_matrix_collapse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_tensor(&mut rng, &[3, 4, 2]);
        for n in 0..3 {
            let eye = ComplexMatrix::identity(t.dims()[n], t.dims()[n]);
            assert_eq!(nmode_product(&t, &eye, n).unwrap(), t);
        }
        let a = random_matrix(&mut rng, 3, 4);
        let m = random_matrix(&mut rng, 5, 3);
        let p = nmode_product(&ComplexTensor::from_matrix(&a), &m, 0).unwrap();
        assert!(rel_error(&p.to_matrix().unwrap(), &(&m * &a)) < 1e-14);
        assert!(nmode_product(&t, &m, 1).is_err());
    }

    #[test]
    fn trilinear_unfoldings_match_rank_one_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_int_matrix(&mut rng, 3, 2);
        let b = random_int_matrix(&mut rng, 2, 2);
        let c = random_int_matrix(&mut rng, 2, 2);
        let z = nmode_product(
            &nmode_product(&nmode_product(&ComplexTensor::identity(3, 2), &a, 0).unwrap(), &b, 1).unwrap(),
            &c,
            2,
        )
        .unwrap();
        // Oracle: Σ_r a_ir b_jr c_kr.
        let oracle = ComplexTensor::from_fn(&[3, 2, 2], |ix| {
            (0..2).map(|r| a[(ix[0], r)] * b[(ix[1], r)] * c[(ix[2], r)]).sum()
        });
        assert_eq!(z, oracle);
        let z0 = &a * khatri_rao(&c, &b).unwrap().transpose();
        let z1 = &b * khatri_rao(&c, &a).unwrap().transpose();
        let z2 = &c * khatri_rao(&b, &a).unwrap().transpose();
        assert_eq!(unfold(&oracle, 0).unwrap(), z0);
        assert_eq!(unfold(&oracle, 1).unwrap(), z1);
        assert_eq!(unfold(&oracle, 2).unwrap(), z2);
    }

    #[test]
    fn kron_examples() {
        let i2 = ComplexMatrix::identity(2, 2);
        assert_eq!(kron(&i2, &i2), ComplexMatrix::identity(4, 4));
        let a = real_matrix(1, 2, &[1., 2.]);
        let b = real_matrix(2, 1, &[3., 4.]);
        assert_eq!(kron(&a, &b), real_matrix(2, 2, &[3., 6., 4., 8.]));
    }

    #[test]
    fn kron_mixed_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (a, b, c, d) = (
            random_matrix(&mut rng, 2, 2),
            random_matrix(&mut rng, 2, 2),
            random_matrix(&mut rng, 2, 2),
            random_matrix(&mut rng, 2, 2),
        );
        let lhs = kron(&a, &b) * kron(&c, &d);
        let rhs = kron(&(&a * &c), &(&b * &d));
        assert!(rel_error(&lhs, &rhs) < 1e-14);
    }

    #[test]
    fn kron_vec_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (a, b, c) = (
            random_matrix(&mut rng, 3, 2),
            random_matrix(&mut rng, 2, 4),
            random_matrix(&mut rng, 4, 2),
        );
        let lhs = vec(&(&a * &b * &c));
        let rhs = kron(&c.transpose(), &a) * vec(&b);
        assert!((lhs - rhs).norm() < 1e-13);
    }

    #[test]
    fn khatri_rao_examples() {
        let a = real_matrix(2, 1, &[1., 2.]);
        let b = real_matrix(2, 1, &[3., 4.]);
        assert_eq!(khatri_rao(&a, &b).unwrap(), real_matrix(4, 1, &[3., 4., 6., 8.]));
        let ones = |r| ComplexMatrix::from_element(r, 1, re(1.0));
        assert_eq!(khatri_rao(&ones(2), &ones(3)).unwrap(), ones(6));
        assert!(khatri_rao(&ones(2), &ComplexMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn khatri_rao_is_selected_kron() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_matrix(&mut rng, 3, 2);
        let b = random_matrix(&mut rng, 3, 2);
        let lhs = khatri_rao(&a, &b).unwrap();
        let rhs = kron(&a, &b) * selection_matrix(2);
        assert!(rel_error(&lhs, &rhs) < 1e-15);
    }

    #[test]
    fn selection_matrix_examples() {
        assert_eq!(selection_matrix(1), real_matrix(1, 1, &[1.]));
        assert_eq!(
            selection_matrix(2),
            real_matrix(4, 2, &[1., 0., 0., 0., 0., 0., 0., 1.])
        );
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for l in 1..5 {
            let a = random_matrix(&mut rng, l, l);
            let b = random_matrix(&mut rng, l, l);
            let xi = selection_matrix(l);
            for col in xi.column_iter() {
                assert_eq!(col.iter().filter(|z| **z == re(1.0)).count(), 1);
                assert_eq!(col.iter().filter(|z| **z == re(0.0)).count(), l * l - 1);
            }
            assert!(rel_error(&(kron(&a, &b) * &xi), &khatri_rao(&a, &b).unwrap()) < 1e-15);
        }
    }

    #[test]
    fn pinv_examples() {
        let i3 = ComplexMatrix::identity(3, 3);
        assert!(rel_error(&pinv(&i3, PINV_TOL).unwrap(), &i3) < 1e-15);
        let d = real_matrix(2, 2, &[2., 0., 0., 0.]);
        let p = pinv(&d, PINV_TOL).unwrap();
        assert!((p - real_matrix(2, 2, &[0.5, 0., 0., 0.])).norm() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random_matrix(&mut rng, 6, 3);
        let left = pinv(&a, PINV_TOL).unwrap() * &a;
        assert!((left - ComplexMatrix::identity(3, 3)).norm() < 1e-10);
    }

    fn assert_moore_penrose(a: &ComplexMatrix) {
        let p = pinv(a, PINV_TOL).unwrap();
        let scale = a.norm().max(1.0);
        assert!(rel_error(&(a * &p * a), a) < 1e-10);
        assert!(rel_error(&(&p * a * &p), &p) < 1e-10);
        let ap = a * &p;
        let pa = &p * a;
        assert!((&ap - ap.adjoint()).norm() / scale < 1e-10);
        assert!((&pa - pa.adjoint()).norm() / scale < 1e-10);
    }

    #[test]
    fn pinv_moore_penrose_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            assert_moore_penrose(&random_matrix(&mut rng, 8, 5));
            // rank 3
            let deficient = random_matrix(&mut rng, 8, 3) * random_matrix(&mut rng, 3, 5);
            assert_moore_penrose(&deficient);
            assert_eq!(numerical_rank(&deficient, 1e-10).unwrap(), 3);
        }
    }

    #[test]
    fn best_rank1_examples() {
        let a = real_matrix(2, 2, &[1., 2., 2., 4.]);
        let r = best_rank1(&a).unwrap();
        assert!((r.sigma - 5.0).abs() < 1e-12);
        let dir = ComplexVector::from_vec(vec![re(1.0), re(2.0)]) / re(5f64.sqrt());
        assert!((r.u.dotc(&dir).norm() - 1.0).abs() < 1e-12);
        assert!((r.v.dotc(&dir).norm() - 1.0).abs() < 1e-12);
        assert!(rel_error(&r.approximation(), &a) < 1e-12);
        let (x, h) = r.balanced_factors();
        assert!(rel_error(&(x * h.transpose()), &a) < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let u0 = random_matrix(&mut rng, 4, 1);
        let v0 = random_matrix(&mut rng, 3, 1);
        let exact = &u0 * v0.adjoint();
        let e = rel_error(&best_rank1(&exact).unwrap().approximation(), &exact);
        assert!(e < 1e-12, "{e}");

        let zero = ComplexMatrix::zeros(3, 2);
        let r = best_rank1(&zero).unwrap();
        assert_eq!(r.sigma, 0.0);
        assert_eq!(r.approximation(), zero);
    }

    #[test]
    fn best_rank1_residual_is_tail_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..10 {
            let a = random_matrix(&mut rng, 6, 4);
            let tail: f64 = svd(&a).unwrap().singular_values[1..].iter().map(|s| s * s).sum();
            let resid = (&a - best_rank1(&a).unwrap().approximation()).norm_squared();
            assert!((resid - tail).abs() <= 1e-10 * tail);
        }
    }

    #[test]
    fn multimode_unfolding_groups_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let t = random_tensor(&mut rng, &[2, 3, 2, 2]);
        let m = unfold_modes(&t, &[0, 1], &[2, 3]).unwrap();
        assert_eq!(m.shape(), (6, 4));
        // Same linearization as the flat storage for the natural grouping.
        assert_eq!(m.as_slice(), t.data());
        let single = unfold_modes(&t, &[2], &[0, 1, 3]).unwrap();
        assert_eq!(single, unfold(&t, 2).unwrap());
        assert!(unfold_modes(&t, &[0, 1], &[1, 3]).is_err());
    }

    proptest! {
        #[test]
        fn unfolding_preserves_frobenius_norm(
            d0 in 1usize..4, d1 in 1usize..4, d2 in 1usize..4, d3 in 1usize..3, seed in any::<u64>()
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_tensor(&mut rng, &[d0, d1, d2, d3]);
            let norm = t.frobenius_norm();
            for n in 0..4 {
                let u = unfold(&t, n).unwrap();
                prop_assert!((u.norm() - norm).abs() <= 1e-12 * norm.max(1.0));
                prop_assert_eq!(fold(&u, n, t.dims()).unwrap(), t.clone());
            }
        }
    }
}
