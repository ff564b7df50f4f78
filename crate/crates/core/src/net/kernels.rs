//! Streaming kernels for a weight matrix against a handful of vectors.
//!
//! A width-2000 block is 32 MB, so a training step is bound by memory
//! traffic. Both kernels touch every weight exactly once per call and keep
//! the small operands in registers. Bodies are written once; on x86-64 they
//! are recompiled under AVX-512 or AVX2 and picked at runtime, with the dot
//! products written out in intrinsics where the autovectorizer falls short.
//! Plain multiplies and adds are used throughout (never fused), so every
//! variant produces identical bits.

const LANES: usize = 8;

/// `y[:, p] += sum_j a[:, j] * x[j, p]` for the column-major `rows x cols`
/// matrix `a`, column-major `x` (`cols x nrhs`) and `y` (`rows x nrhs`).
pub(crate) fn gemm_thin(a: &[f64], rows: usize, x: &[f64], nrhs: usize, y: &mut [f64]) {
    dispatch_thin(a, rows, x, nrhs, y)
}

/// One pass over the columns of `a` (`rows x cols`, column-major):
///
/// * if `back` is given, `back[j * nrhs + p] = scale * a[:, j] . left[:, p]`
///   with the weights as they were on entry;
/// * then `a[:, j] += sum_p step[j * nrhs + p] * left[:, p]`.
///
/// `left` is column-major `rows x nrhs`.
pub(crate) fn fused_columns(
    a: &mut [f64],
    rows: usize,
    left: &[f64],
    nrhs: usize,
    step: &[f64],
    back: Option<(&mut [f64], f64)>,
) {
    dispatch_fused(a, rows, left, nrhs, step, back)
}

macro_rules! by_width {
    ($n:expr, $f:ident, $($args:expr),*) => {
        match $n {
            1 => $f::<1>($($args),*),
            2 => $f::<2>($($args),*),
            3 => $f::<3>($($args),*),
            4 => $f::<4>($($args),*),
            5 => $f::<5>($($args),*),
            6 => $f::<6>($($args),*),
            7 => $f::<7>($($args),*),
            8 => $f::<8>($($args),*),
            9 => $f::<9>($($args),*),
            10 => $f::<10>($($args),*),
            // wider batches take the runtime-width body
            _ => $f::<0>($($args),*),
        }
    };
}

#[inline(always)]
fn thin_body<const N: usize>(a: &[f64], rows: usize, x: &[f64], nrhs: usize, y: &mut [f64]) {
    if N == 0 {
        // generic width: one right-hand side at a time
        let cols = a.len() / rows;
        for p in 0..nrhs {
            let yp = &mut y[p * rows..(p + 1) * rows];
            for j in 0..cols {
                let s = x[p * cols + j];
                for (yi, ai) in yp.iter_mut().zip(&a[j * rows..(j + 1) * rows]) {
                    *yi += ai * s;
                }
            }
        }
        return;
    }
    let cols = a.len() / rows;
    let full = rows / LANES * LANES;
    let mut j = 0;
    while j < cols {
        let take = (cols - j).min(4);
        let mut coef = [[0.0f64; 4]; N];
        for (p, cp) in coef.iter_mut().enumerate() {
            for c in 0..take {
                cp[c] = x[p * cols + j + c];
            }
        }
        let base = j * rows;
        let mut i = 0;
        while i < full {
            let mut av = [[0.0f64; LANES]; 4];
            for c in 0..take {
                av[c].copy_from_slice(&a[base + c * rows + i..base + c * rows + i + LANES]);
            }
            for (p, cp) in coef.iter().enumerate() {
                let yp = &mut y[p * rows + i..p * rows + i + LANES];
                let mut acc = [0.0f64; LANES];
                acc.copy_from_slice(yp);
                for c in 0..take {
                    for k in 0..LANES {
                        acc[k] += av[c][k] * cp[c];
                    }
                }
                yp.copy_from_slice(&acc);
            }
            i += LANES;
        }
        for i in full..rows {
            for (p, cp) in coef.iter().enumerate() {
                let mut acc = y[p * rows + i];
                for c in 0..take {
                    acc += a[base + c * rows + i] * cp[c];
                }
                y[p * rows + i] = acc;
            }
        }
        j += take;
    }
}

/// Column dot products used by the fused pass; each instruction set
/// supplies its own, all with the arithmetic of [`dots`].
type DotsFn<const N: usize> = fn(&[f64], &[&[f64]; N]) -> [f64; N];

#[inline(always)]
fn fused_body<const N: usize>(
    a: &mut [f64],
    rows: usize,
    left: &[f64],
    nrhs: usize,
    step: &[f64],
    back: Option<(&mut [f64], f64)>,
    dots: DotsFn<N>,
) {
    if N == 0 {
        fused_generic(a, rows, left, nrhs, step, back);
        return;
    }
    match back {
        Some((b, scale)) => fused_fixed::<N, true>(a, rows, left, step, b, scale, dots),
        None => fused_fixed::<N, false>(a, rows, left, step, &mut [], 0.0, dots),
    }
}

#[inline(always)]
fn fused_fixed<const N: usize, const DOTS: bool>(
    a: &mut [f64],
    rows: usize,
    left: &[f64],
    step: &[f64],
    back: &mut [f64],
    scale: f64,
    dots: DotsFn<N>,
) {
    let lcols: [&[f64]; N] = std::array::from_fn(|p| &left[p * rows..(p + 1) * rows]);
    for (j, col) in a.chunks_exact_mut(rows).enumerate() {
        // the column is still in cache for the update below
        if DOTS {
            let d = dots(col, &lcols);
            for p in 0..N {
                back[j * N + p] = scale * d[p];
            }
        }
        let st: [f64; N] = std::array::from_fn(|p| step[j * N + p]);
        let (head, rest) = col.split_at_mut(rows / LANES * LANES);
        for (c, chunk) in head.chunks_exact_mut(LANES).enumerate() {
            let i = c * LANES;
            let mut nv = [0.0f64; LANES];
            nv.copy_from_slice(chunk);
            for p in 0..N {
                let lp = &lcols[p][i..i + LANES];
                for k in 0..LANES {
                    nv[k] += st[p] * lp[k];
                }
            }
            chunk.copy_from_slice(&nv);
        }
        let off = head.len();
        for (r, v) in rest.iter_mut().enumerate() {
            for p in 0..N {
                *v += st[p] * lcols[p][off + r];
            }
        }
    }
}

/// `N` lane-blocked dot products of `a` against each of `b`, sharing loads.
#[inline(always)]
fn dots<const N: usize>(a: &[f64], b: &[&[f64]; N]) -> [f64; N] {
    let full = a.len() / LANES * LANES;
    let mut acc = [[0.0f64; LANES]; N];
    for i in (0..full).step_by(LANES) {
        let x: &[f64; LANES] = a[i..i + LANES].try_into().unwrap();
        for p in 0..N {
            let y: &[f64; LANES] = b[p][i..i + LANES].try_into().unwrap();
            for k in 0..LANES {
                acc[p][k] += x[k] * y[k];
            }
        }
    }
    finish(a, b, full, &acc)
}

#[inline(always)]
fn finish<const N: usize>(a: &[f64], b: &[&[f64]; N], full: usize, acc: &[[f64; LANES]; N]) -> [f64; N] {
    std::array::from_fn(|p| {
        let tail: f64 = (full..a.len()).map(|i| a[i] * b[p][i]).sum();
        acc[p].iter().sum::<f64>() + tail
    })
}

/// Lane-blocked dot product: `LANES` partial sums, then the remainder.
#[inline(always)]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..LANES {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// Same arithmetic as [`fused_body`] for any batch width.
fn fused_generic(
    a: &mut [f64],
    rows: usize,
    left: &[f64],
    nrhs: usize,
    step: &[f64],
    mut back: Option<(&mut [f64], f64)>,
) {
    let full = rows / LANES * LANES;
    for (j, col) in a.chunks_exact_mut(rows).enumerate() {
        if let Some((b, scale)) = back.as_mut() {
            for p in 0..nrhs {
                b[j * nrhs + p] = *scale * dot(col, &left[p * rows..(p + 1) * rows]);
            }
        }
        let st = &step[j * nrhs..(j + 1) * nrhs];
        for i in (0..full).step_by(LANES) {
            let mut nv = [0.0f64; LANES];
            nv.copy_from_slice(&col[i..i + LANES]);
            for p in 0..nrhs {
                let lp = &left[p * rows + i..p * rows + i + LANES];
                for k in 0..LANES {
                    nv[k] += st[p] * lp[k];
                }
            }
            col[i..i + LANES].copy_from_slice(&nv);
        }
        for i in full..rows {
            for p in 0..nrhs {
                col[i] += st[p] * left[p * rows + i];
            }
        }
    }
}

fn thin_portable<const N: usize>(a: &[f64], rows: usize, x: &[f64], nrhs: usize, y: &mut [f64]) {
    thin_body::<N>(a, rows, x, nrhs, y)
}

fn fused_portable<const N: usize>(
    a: &mut [f64],
    rows: usize,
    left: &[f64],
    nrhs: usize,
    step: &[f64],
    back: Option<(&mut [f64], f64)>,
) {
    fused_body::<N>(a, rows, left, nrhs, step, back, dots::<N>)
}

#[cfg(target_arch = "x86_64")]
mod x86 {
    use std::arch::x86_64::*;

    use super::*;

    #[target_feature(enable = "avx512f")]
    pub(super) unsafe fn thin_avx512<const N: usize>(a: &[f64], rows: usize, x: &[f64], nrhs: usize, y: &mut [f64]) {
        thin_body::<N>(a, rows, x, nrhs, y)
    }

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn thin_avx2<const N: usize>(a: &[f64], rows: usize, x: &[f64], nrhs: usize, y: &mut [f64]) {
        thin_body::<N>(a, rows, x, nrhs, y)
    }

    #[target_feature(enable = "avx512f")]
    pub(super) unsafe fn fused_avx512<const N: usize>(
        a: &mut [f64],
        rows: usize,
        left: &[f64],
        nrhs: usize,
        step: &[f64],
        back: Option<(&mut [f64], f64)>,
    ) {
        match back {
            Some((b, scale)) if N > 0 => unsafe { fused_dots_avx512::<N>(a, rows, left, step, b, scale) },
            back => fused_body::<N>(a, rows, left, nrhs, step, back, |a, b| {
                // SAFETY: only reachable from a caller that detected avx512f
                unsafe { dots_avx512::<N>(a, b) }
            }),
        }
    }

    /// Single pass: dots against the old column and the update share one
    /// load of each weight. Same arithmetic as the two-phase body.
    #[target_feature(enable = "avx512f")]
    unsafe fn fused_dots_avx512<const N: usize>(
        a: &mut [f64],
        rows: usize,
        left: &[f64],
        step: &[f64],
        back: &mut [f64],
        scale: f64,
    ) {
        let lcols: [&[f64]; N] = std::array::from_fn(|p| &left[p * rows..(p + 1) * rows]);
        let full = rows / LANES * LANES;
        for (j, col) in a.chunks_exact_mut(rows).enumerate() {
            let st: [f64; N] = std::array::from_fn(|p| step[j * N + p]);
            let mut acc = [_mm512_setzero_pd(); N];
            for i in (0..full).step_by(LANES) {
                // SAFETY: i + LANES <= full <= rows, the length of the
                // column and of every left vector
                unsafe {
                    let ptr = col.as_mut_ptr().add(i);
                    let x = _mm512_loadu_pd(ptr);
                    let mut nv = x;
                    for p in 0..N {
                        let y = _mm512_loadu_pd(lcols[p].as_ptr().add(i));
                        acc[p] = _mm512_add_pd(acc[p], _mm512_mul_pd(x, y));
                        nv = _mm512_add_pd(nv, _mm512_mul_pd(_mm512_set1_pd(st[p]), y));
                    }
                    _mm512_storeu_pd(ptr, nv);
                }
            }
            let mut lanes = [[0.0f64; LANES]; N];
            for p in 0..N {
                // SAFETY: lanes[p] holds exactly LANES doubles
                unsafe { _mm512_storeu_pd(lanes[p].as_mut_ptr(), acc[p]) };
            }
            // the tail is still unmodified, so the dots see the old column
            let d = finish(col, &lcols, full, &lanes);
            for p in 0..N {
                back[j * N + p] = scale * d[p];
            }
            for i in full..rows {
                for p in 0..N {
                    col[i] += st[p] * lcols[p][i];
                }
            }
        }
    }

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn fused_avx2<const N: usize>(
        a: &mut [f64],
        rows: usize,
        left: &[f64],
        nrhs: usize,
        step: &[f64],
        back: Option<(&mut [f64], f64)>,
    ) {
        fused_body::<N>(a, rows, left, nrhs, step, back, |a, b| {
            // SAFETY: only reachable from a caller that detected avx2
            unsafe { dots_avx2::<N>(a, b) }
        })
    }

    #[target_feature(enable = "avx512f")]
    unsafe fn dots_avx512<const N: usize>(a: &[f64], b: &[&[f64]; N]) -> [f64; N] {
        assert!(b.iter().all(|v| v.len() >= a.len()));
        let full = a.len() / LANES * LANES;
        let mut acc = [_mm512_setzero_pd(); N];
        for i in (0..full).step_by(LANES) {
            // SAFETY: i + LANES <= full <= len of every operand
            unsafe {
                let x = _mm512_loadu_pd(a.as_ptr().add(i));
                for p in 0..N {
                    let y = _mm512_loadu_pd(b[p].as_ptr().add(i));
                    acc[p] = _mm512_add_pd(acc[p], _mm512_mul_pd(x, y));
                }
            }
        }
        let mut lanes = [[0.0f64; LANES]; N];
        for p in 0..N {
            // SAFETY: lanes[p] holds exactly LANES doubles
            unsafe { _mm512_storeu_pd(lanes[p].as_mut_ptr(), acc[p]) };
        }
        finish(a, b, full, &lanes)
    }

    #[target_feature(enable = "avx2")]
    unsafe fn dots_avx2<const N: usize>(a: &[f64], b: &[&[f64]; N]) -> [f64; N] {
        assert!(b.iter().all(|v| v.len() >= a.len()));
        let full = a.len() / LANES * LANES;
        let mut lo = [_mm256_setzero_pd(); N];
        let mut hi = [_mm256_setzero_pd(); N];
        for i in (0..full).step_by(LANES) {
            // SAFETY: i + LANES <= full <= len of every operand
            unsafe {
                let xl = _mm256_loadu_pd(a.as_ptr().add(i));
                let xh = _mm256_loadu_pd(a.as_ptr().add(i + 4));
                for p in 0..N {
                    let y = b[p].as_ptr().add(i);
                    lo[p] = _mm256_add_pd(lo[p], _mm256_mul_pd(xl, _mm256_loadu_pd(y)));
                    hi[p] = _mm256_add_pd(hi[p], _mm256_mul_pd(xh, _mm256_loadu_pd(y.add(4))));
                }
            }
        }
        let mut lanes = [[0.0f64; LANES]; N];
        for p in 0..N {
            // SAFETY: each half of lanes[p] holds four doubles
            unsafe {
                _mm256_storeu_pd(lanes[p].as_mut_ptr(), lo[p]);
                _mm256_storeu_pd(lanes[p].as_mut_ptr().add(4), hi[p]);
            }
        }
        finish(a, b, full, &lanes)
    }
}

fn dispatch_thin(a: &[f64], rows: usize, x: &[f64], nrhs: usize, y: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: the feature was detected at runtime
            unsafe { by_width!(nrhs, thin_avx512_call, a, rows, x, nrhs, y) };
            return;
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: as above
            unsafe { by_width!(nrhs, thin_avx2_call, a, rows, x, nrhs, y) };
            return;
        }
    }
    by_width!(nrhs, thin_portable, a, rows, x, nrhs, y)
}

fn dispatch_fused(
    a: &mut [f64],
    rows: usize,
    left: &[f64],
    nrhs: usize,
    step: &[f64],
    back: Option<(&mut [f64], f64)>,
) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: the feature was detected at runtime
            unsafe { by_width!(nrhs, fused_avx512_call, a, rows, left, nrhs, step, back) };
            return;
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: as above
            unsafe { by_width!(nrhs, fused_avx2_call, a, rows, left, nrhs, step, back) };
            return;
        }
    }
    by_width!(nrhs, fused_portable, a, rows, left, nrhs, step, back)
}

#[cfg(target_arch = "x86_64")]
unsafe fn thin_avx512_call<const N: usize>(a: &[f64], rows: usize, x: &[f64], nrhs: usize, y: &mut [f64]) {
    x86::thin_avx512::<N>(a, rows, x, nrhs, y)
}

#[cfg(target_arch = "x86_64")]
unsafe fn thin_avx2_call<const N: usize>(a: &[f64], rows: usize, x: &[f64], nrhs: usize, y: &mut [f64]) {
    x86::thin_avx2::<N>(a, rows, x, nrhs, y)
}

#[cfg(target_arch = "x86_64")]
unsafe fn fused_avx512_call<const N: usize>(
    a: &mut [f64],
    rows: usize,
    left: &[f64],
    nrhs: usize,
    step: &[f64],
    back: Option<(&mut [f64], f64)>,
) {
    x86::fused_avx512::<N>(a, rows, left, nrhs, step, back)
}

#[cfg(target_arch = "x86_64")]
unsafe fn fused_avx2_call<const N: usize>(
    a: &mut [f64],
    rows: usize,
    left: &[f64],
    nrhs: usize,
    step: &[f64],
    back: Option<(&mut [f64], f64)>,
) {
    x86::fused_avx2::<N>(a, rows, left, nrhs, step, back)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(len: usize, seed: u64) -> Vec<f64> {
        let mut r = crate::rng::from_seed(seed);
        (0..len).map(|_| r.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn thin_matches_naive() {
        for (rows, cols, nrhs) in [(13, 7, 3), (16, 9, 1), (21, 5, 12), (8, 4, 10)] {
            let a = random(rows * cols, 1);
            let x = random(cols * nrhs, 2);
            let mut y = random(rows * nrhs, 3);
            let mut expect = y.clone();
            for p in 0..nrhs {
                for i in 0..rows {
                    for j in 0..cols {
                        expect[p * rows + i] += a[j * rows + i] * x[p * cols + j];
                    }
                }
            }
            gemm_thin(&a, rows, &x, nrhs, &mut y);
            for (u, v) in y.iter().zip(&expect) {
                assert!((u - v).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn fused_matches_naive_and_portable() {
        for (rows, cols, nrhs) in [(13, 7, 3), (24, 3, 6), (19, 5, 11), (9, 2, 1)] {
            let a0 = random(rows * cols, 4);
            let left = random(rows * nrhs, 5);
            let step = random(cols * nrhs, 6);
            let mut a = a0.clone();
            let mut back = vec![0.0; cols * nrhs];
            fused_columns(&mut a, rows, &left, nrhs, &step, Some((&mut back, 0.5)));
            for j in 0..cols {
                for p in 0..nrhs {
                    let d: f64 = (0..rows).map(|i| a0[j * rows + i] * left[p * rows + i]).sum();
                    assert!((back[j * nrhs + p] - 0.5 * d).abs() < 1e-13);
                }
                for i in 0..rows {
                    let u: f64 = (0..nrhs).map(|p| step[j * nrhs + p] * left[p * rows + i]).sum();
                    assert!((a[j * rows + i] - a0[j * rows + i] - u).abs() < 1e-13);
                }
            }
            let mut b = a0.clone();
            let mut back2 = vec![0.0; cols * nrhs];
            by_width!(nrhs, fused_portable, &mut b, rows, &left, nrhs, &step, Some((&mut back2, 0.5)));
            assert_eq!(a, b);
            assert_eq!(back, back2);
        }
    }
}
