//! Small dense symmetric-matrix helpers. Matrices are row-major `p×p`
//! slices; `p` is the channel count, so at most a handful.

/// Pairwise (cascade) summation. The result depends only on the order of
/// `values`, never on how the caller partitions work.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 8;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Eigenvalues (and optionally eigenvectors, as columns of `vecs`) of a
/// symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eigen(a: &[f64], p: usize, vals: &mut [f64], mut vecs: Option<&mut [f64]>) {
    debug_assert_eq!(a.len(), p * p);
    let mut m = a.to_vec();
    if let Some(v) = vecs.as_deref_mut() {
        v.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..p {
            v[i * p + i] = 1.0;
        }
    }
    let scale: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale > 0.0 {
        for _sweep in 0..64 {
            let mut off = 0.0;
            for i in 0..p {
                for j in i + 1..p {
                    off += m[i * p + j] * m[i * p + j];
                }
            }
            if off.sqrt() <= 1e-16 * scale {
                break;
            }
            for i in 0..p {
                for j in i + 1..p {
                    let apq = m[i * p + j];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = m[i * p + i];
                    let aqq = m[j * p + j];
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..p {
                        let mki = m[k * p + i];
                        let mkj = m[k * p + j];
                        m[k * p + i] = c * mki - s * mkj;
                        m[k * p + j] = s * mki + c * mkj;
                    }
                    for k in 0..p {
                        let mik = m[i * p + k];
                        let mjk = m[j * p + k];
                        m[i * p + k] = c * mik - s * mjk;
                        m[j * p + k] = s * mik + c * mjk;
                    }
                    if let Some(v) = vecs.as_deref_mut() {
                        for k in 0..p {
                            let vki = v[k * p + i];
                            let vkj = v[k * p + j];
                            v[k * p + i] = c * vki - s * vkj;
                            v[k * p + j] = s * vki + c * vkj;
                        }
                    }
                }
            }
        }
    }
    for i in 0..p {
        vals[i] = m[i * p + i];
    }
}

/// Lower-triangular factor `L` with `L Lᵀ = a` for a positive
/// semi-definite `a`. Zero pivots (rank deficiency) yield zero columns.
/// Returns `None` if `a` is indefinite beyond `tol`.
pub fn cholesky_psd(a: &[f64], p: usize, tol: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; p * p];
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= l[j * p + k] * l[j * p + k];
        }
        if d < -tol {
            return None;
        }
        if d <= tol {
            // Dependent column: the remaining entries must vanish too.
            for i in j + 1..p {
                let mut s = a[i * p + j];
                for k in 0..j {
                    s -= l[i * p + k] * l[j * p + k];
                }
                if s.abs() > tol.sqrt().max(tol) {
                    return None;
                }
            }
            continue;
        }
        let djj = d.sqrt();
        l[j * p + j] = djj;
        for i in j + 1..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            l[i * p + j] = s / djj;
        }
    }
    Some(l)
}
