//! Real symmetric embedding of complex Hermitian matrices.
//!
//! `H = A + iB` maps to `[[A, -B], [B, A]]`. `H` is PSD iff the embedding is,
//! and every eigenvalue of `H` appears twice in the embedding.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Dense embedding of an `n x n` Hermitian matrix into a `2n x 2n` real
/// symmetric one. The input is symmetrized as `(H + H^dagger)/2` first.
pub fn embed_hermitian(h: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = h.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let v = (h[(i, j)] + h[(j, i)].conj()) * 0.5;
            out[(i, j)] = v.re;
            out[(i + n, j + n)] = v.re;
            out[(i + n, j)] = v.im;
            out[(i, j + n)] = -v.im;
        }
    }
    out
}

/// Inverse of [`embed_hermitian`] composed with the orthogonal projection
/// onto embeddings, so it also accepts a general symmetric `2n x 2n` matrix.
pub fn extract_hermitian(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    let n = m.nrows() / 2;
    DMatrix::from_fn(n, n, |i, j| {
        let re = 0.5 * (m[(i, j)] + m[(i + n, j + n)]);
        let im = 0.5 * (m[(i + n, j)] - m[(i, j + n)]);
        Complex64::new(re, im)
    })
}

/// Upper-triangle real entries of the embedding of
/// `v |a><b| + conj(v) |b><a|` (or `Re(v) |a><a|` when `a == b`) in an
/// `n`-dimensional Hermitian block.
pub fn hermitian_entries(n: usize, a: usize, b: usize, v: Complex64) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(4);
    if a == b {
        if v.re != 0.0 {
            out.push((a, a, v.re));
            out.push((a + n, a + n, v.re));
        }
        return out;
    }
    let (a, b, v) = if a < b { (a, b, v) } else { (b, a, v.conj()) };
    if v.re != 0.0 {
        out.push((a, b, v.re));
        out.push((a + n, b + n, v.re));
    }
    if v.im != 0.0 {
        out.push((b, a + n, v.im));
        out.push((a, b + n, -v.im));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;

    fn sorted_eigs(m: DMatrix<f64>) -> Vec<f64> {
        let mut e: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        e
    }

    #[test]
    fn pauli_y_embedding_spectrum() {
        let i = Complex64::i();
        let h = DMatrix::from_row_slice(2, 2, &[0.0.into(), -i, i, 0.0.into()]);
        let e = sorted_eigs(embed_hermitian(&h));
        let expect = [-1.0, -1.0, 1.0, 1.0];
        for (a, b) in e.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn real_input_duplicates_spectrum() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, -1.0]).map(Complex64::from);
        let e = sorted_eigs(embed_hermitian(&h));
        assert!((e[0] - e[1]).abs() < 1e-12);
        assert!((e[2] - e[3]).abs() < 1e-12);
    }

    #[test]
    fn sparse_entries_agree_with_dense_embedding() {
        let n = 3;
        let v = Complex64::new(0.3, -0.7);
        for (a, b) in [(0, 2), (2, 0), (1, 1)] {
            let mut h = DMatrix::<Complex64>::zeros(n, n);
            if a == b {
                h[(a, a)] = v.re.into();
            } else {
                h[(a, b)] = v;
                h[(b, a)] = v.conj();
            }
            let dense = embed_hermitian(&h);
            let mut sparse = DMatrix::<f64>::zeros(2 * n, 2 * n);
            for (r, c, x) in hermitian_entries(n, a, b, v) {
                sparse[(r, c)] += x;
                if r != c {
                    sparse[(c, r)] += x;
                }
            }
            assert!((dense - sparse).norm() < 1e-15);
        }
    }

    #[test]
    fn extract_inverts_embed() {
        let h = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(1.0, 0.0),
                Complex64::new(0.5, 0.25),
                Complex64::new(0.5, -0.25),
                Complex64::new(-2.0, 0.0),
            ],
        );
        assert!((extract_hermitian(&embed_hermitian(&h)) - h).norm() < 1e-15);
    }
}
