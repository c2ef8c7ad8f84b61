//! Thin safe wrappers over the LAPACK routines used by the crate.
//!
//! All matrices are column-major `f64` (or `Complex64`) buffers, which is
//! what both LAPACK and `nalgebra::DMatrix` use natively.

use std::os::raw::{c_char, c_int};

use num_complex::Complex64;

use super::NumericsError;

fn ch(c: u8) -> c_char {
    c as c_char
}

fn to_int(v: usize) -> Result<c_int, NumericsError> {
    c_int::try_from(v).map_err(|_| NumericsError::TooLarge(v))
}

fn check(routine: &'static str, info: c_int) -> Result<(), NumericsError> {
    if info == 0 {
        Ok(())
    } else {
        Err(NumericsError::Lapack { routine, info })
    }
}

/// Singular values (descending) and optionally the full `Vᵀ` (n×n) of an
/// m×n matrix. The input buffer is destroyed.
pub(crate) fn gesdd(
    m: usize,
    n: usize,
    a: &mut [f64],
    want_vt: bool,
) -> Result<(Vec<f64>, Option<Vec<f64>>), NumericsError> {
    assert_eq!(a.len(), m * n);
    let k = m.min(n);
    let mut s = vec![0.0; k];
    if k == 0 {
        let vt = want_vt.then(|| identity(n));
        return Ok((s, vt));
    }
    let (mi, ni) = (to_int(m)?, to_int(n)?);
    let lda = mi.max(1);
    // JOBZ='A' would also build U (m×m); for tall inputs that is wasteful, so
    // with vectors requested we use 'S' (U is m×k) and only keep Vᵀ.
    let jobz = if want_vt { b'S' } else { b'N' };
    let (mut u, ldu) = if want_vt {
        (vec![0.0; m * k], mi.max(1))
    } else {
        (vec![0.0; 1], 1)
    };
    let (mut vt, ldvt) = if want_vt {
        (vec![0.0; k * n], to_int(k)?.max(1))
    } else {
        (vec![0.0; 1], 1)
    };
    let mut iwork = vec![0 as c_int; 8 * k];
    let mut info = 0;
    let mut query = [0.0f64];
    let lwork = -1;
    unsafe {
        lapack_sys::dgesdd_(
            &ch(jobz),
            &mi,
            &ni,
            a.as_mut_ptr(),
            &lda,
            s.as_mut_ptr(),
            u.as_mut_ptr(),
            &ldu,
            vt.as_mut_ptr(),
            &ldvt,
            query.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &mut info,
        );
    }
    check("dgesdd", info)?;
    let lwork = query[0].max(1.0) as c_int;
    let mut work = vec![0.0; lwork as usize];
    unsafe {
        lapack_sys::dgesdd_(
            &ch(jobz),
            &mi,
            &ni,
            a.as_mut_ptr(),
            &lda,
            s.as_mut_ptr(),
            u.as_mut_ptr(),
            &ldu,
            vt.as_mut_ptr(),
            &ldvt,
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &mut info,
        );
    }
    check("dgesdd", info)?;
    if !want_vt {
        return Ok((s, None));
    }
    if k == n {
        return Ok((s, Some(vt)));
    }
    // Wide input: complete Vᵀ to an orthonormal n×n matrix. The missing rows
    // span the orthogonal complement of the row space, i.e. part of the kernel.
    let full = complete_rows(&vt, k, n)?;
    Ok((s, Some(full)))
}

fn identity(n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    v
}

/// Extend the k orthonormal rows of a k×n column-major matrix to an n×n
/// orthogonal matrix (column-major), keeping the first k rows.
fn complete_rows(vt: &[f64], k: usize, n: usize) -> Result<Vec<f64>, NumericsError> {
    // Q from a QR of [Vᵀ]ᵀ (n×k) padded with the identity spans everything;
    // the trailing n−k Householder directions give the complement.
    let mut basis = vec![0.0; n * n];
    for c in 0..k {
        for r in 0..n {
            basis[c * n + r] = vt[r * k + c];
        }
    }
    let qc = householder_complete(n, k, &mut basis)?;
    let mut full = vec![0.0; n * n];
    for r in 0..k {
        for c in 0..n {
            full[c * n + r] = vt[c * k + r];
        }
    }
    for r in k..n {
        for c in 0..n {
            full[c * n + r] = qc[(r) * n + c];
        }
    }
    Ok(full)
}

/// Given an n×n buffer whose first k columns are orthonormal, return the full
/// orthogonal Q (column-major) of its QR factorization.
fn householder_complete(n: usize, k: usize, a: &mut [f64]) -> Result<Vec<f64>, NumericsError> {
    let ni = to_int(n)?;
    let ki = to_int(k)?;
    let mut tau = vec![0.0; n.max(1)];
    let mut info = 0;
    let mut query = [0.0f64];
    let lwork = -1;
    unsafe {
        lapack_sys::dgeqrf_(
            &ni,
            &ki,
            a.as_mut_ptr(),
            &ni,
            tau.as_mut_ptr(),
            query.as_mut_ptr(),
            &lwork,
            &mut info,
        );
    }
    check("dgeqrf", info)?;
    let lwork = (query[0].max(1.0) as c_int).max(ni);
    let mut work = vec![0.0; lwork as usize];
    unsafe {
        lapack_sys::dgeqrf_(
            &ni,
            &ki,
            a.as_mut_ptr(),
            &ni,
            tau.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            &mut info,
        );
    }
    check("dgeqrf", info)?;
    unsafe {
        lapack_sys::dorgqr_(
            &ni,
            &ni,
            &ki,
            a.as_mut_ptr(),
            &ni,
            tau.as_ptr(),
            work.as_mut_ptr(),
            &lwork,
            &mut info,
        );
    }
    check("dorgqr", info)?;
    Ok(a.to_vec())
}

/// Symmetric eigendecomposition (divide and conquer). Eigenvalues come back
/// ascending; when `vectors` is set, `a` is overwritten with the eigenvectors.
pub(crate) fn syevd(n: usize, a: &mut [f64], vectors: bool) -> Result<Vec<f64>, NumericsError> {
    assert_eq!(a.len(), n * n);
    let mut w = vec![0.0; n];
    if n == 0 {
        return Ok(w);
    }
    let ni = to_int(n)?;
    let jobz = if vectors { b'V' } else { b'N' };
    let mut info = 0;
    let mut wq = [0.0f64];
    let mut iq = [0 as c_int];
    let neg = -1;
    unsafe {
        lapack_sys::dsyevd_(
            &ch(jobz),
            &ch(b'U'),
            &ni,
            a.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            wq.as_mut_ptr(),
            &neg,
            iq.as_mut_ptr(),
            &neg,
            &mut info,
        );
    }
    check("dsyevd", info)?;
    let lwork = wq[0].max(1.0) as c_int;
    let liwork = iq[0].max(1);
    let mut work = vec![0.0; lwork as usize];
    let mut iwork = vec![0 as c_int; liwork as usize];
    unsafe {
        lapack_sys::dsyevd_(
            &ch(jobz),
            &ch(b'U'),
            &ni,
            a.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    check("dsyevd", info)?;
    Ok(w)
}

/// Fold `m` new rows `b` (m×n, column-major) into the upper-triangular
/// n×n factor `r`, so that RᵀR gains BᵀB. `b` is destroyed.
pub(crate) fn tpqrt(n: usize, r: &mut [f64], m: usize, b: &mut [f64]) -> Result<(), NumericsError> {
    assert_eq!(r.len(), n * n);
    assert_eq!(b.len(), m * n);
    if m == 0 || n == 0 {
        return Ok(());
    }
    let (mi, ni) = (to_int(m)?, to_int(n)?);
    let nb = n.min(48);
    let nbi = to_int(nb)?;
    let l = 0;
    let mut t = vec![0.0; nb * n];
    let mut work = vec![0.0; nb * n];
    let mut info = 0;
    unsafe {
        lapack_sys::dtpqrt_(
            &mi,
            &ni,
            &l,
            &nbi,
            r.as_mut_ptr(),
            &ni,
            b.as_mut_ptr(),
            &mi,
            t.as_mut_ptr(),
            &nbi,
            work.as_mut_ptr(),
            &mut info,
        );
    }
    check("dtpqrt", info)
}

/// General complex eigenproblem: eigenvalues and right eigenvectors
/// (unit 2-norm columns). The input buffer is destroyed.
pub(crate) fn zgeev(n: usize, a: &mut [Complex64]) -> Result<(Vec<Complex64>, Vec<Complex64>), NumericsError> {
    assert_eq!(a.len(), n * n);
    let mut w = vec![Complex64::new(0.0, 0.0); n];
    let mut vr = vec![Complex64::new(0.0, 0.0); n * n];
    if n == 0 {
        return Ok((w, vr));
    }
    let ni = to_int(n)?;
    let mut vl = [Complex64::new(0.0, 0.0)];
    let one = 1;
    let mut rwork = vec![0.0; 2 * n];
    let mut info = 0;
    let mut query = [Complex64::new(0.0, 0.0)];
    let neg = -1;
    unsafe {
        lapack_sys::zgeev_(
            &ch(b'N'),
            &ch(b'V'),
            &ni,
            a.as_mut_ptr() as *mut _,
            &ni,
            w.as_mut_ptr() as *mut _,
            vl.as_mut_ptr() as *mut _,
            &one,
            vr.as_mut_ptr() as *mut _,
            &ni,
            query.as_mut_ptr() as *mut _,
            &neg,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    check("zgeev", info)?;
    let lwork = (query[0].re.max(1.0) as c_int).max(2 * ni);
    let mut work = vec![Complex64::new(0.0, 0.0); lwork as usize];
    unsafe {
        lapack_sys::zgeev_(
            &ch(b'N'),
            &ch(b'V'),
            &ni,
            a.as_mut_ptr() as *mut _,
            &ni,
            w.as_mut_ptr() as *mut _,
            vl.as_mut_ptr() as *mut _,
            &one,
            vr.as_mut_ptr() as *mut _,
            &ni,
            work.as_mut_ptr() as *mut _,
            &lwork,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    check("zgeev", info)?;
    Ok((w, vr))
}
