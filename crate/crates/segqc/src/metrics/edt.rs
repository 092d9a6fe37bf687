//! Exact squared Euclidean distance transform in 3D.
//!
//! Separable lower-envelope (parabola) algorithm of Felzenszwalb &
//! Huttenlocher, applied axis by axis. Exact for voxel-center distances,
//! O(V) per axis.

use ndarray::Array3;

/// Stand-in for +infinity that survives parabola intersection arithmetic.
const FAR: f64 = 1e20;

/// Squared distance from every voxel to the nearest `true` voxel of `seeds`.
///
/// Voxels with no seed anywhere get a value ≥ [`FAR`]; callers that allow
/// empty seed sets must handle that case themselves.
pub fn squared_edt(seeds: &Array3<bool>) -> Array3<f64> {
    let (d, h, w) = seeds.dim();
    let mut dist = Array3::<f64>::from_elem((d, h, w), FAR);
    for (di, &s) in dist.iter_mut().zip(seeds.iter()) {
        if s {
            *di = 0.0;
        }
    }

    let mut f = vec![0.0f64; d.max(h).max(w)];
    let mut out = vec![0.0f64; d.max(h).max(w)];
    let mut v = vec![0usize; d.max(h).max(w)];
    let mut z = vec![0.0f64; d.max(h).max(w) + 1];

    // axis W
    for zi in 0..d {
        for yi in 0..h {
            for xi in 0..w {
                f[xi] = dist[[zi, yi, xi]];
            }
            dt1d(&f[..w], &mut out[..w], &mut v, &mut z);
            for xi in 0..w {
                dist[[zi, yi, xi]] = out[xi];
            }
        }
    }
    // axis H
    for zi in 0..d {
        for xi in 0..w {
            for yi in 0..h {
                f[yi] = dist[[zi, yi, xi]];
            }
            dt1d(&f[..h], &mut out[..h], &mut v, &mut z);
            for yi in 0..h {
                dist[[zi, yi, xi]] = out[yi];
            }
        }
    }
    // axis D
    for yi in 0..h {
        for xi in 0..w {
            for zi in 0..d {
                f[zi] = dist[[zi, yi, xi]];
            }
            dt1d(&f[..d], &mut out[..d], &mut v, &mut z);
            for zi in 0..d {
                dist[[zi, yi, xi]] = out[zi];
            }
        }
    }
    dist
}

/// Abscissa where the parabolas rooted at `q` and `p` intersect.
#[inline]
fn intersect(f: &[f64], q: usize, p: usize) -> f64 {
    let (qf, pf) = (q as f64, p as f64);
    ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf)
}

/// One-dimensional squared distance transform of a sampled function `f`.
///
/// `z[0] = -FAR` guarantees the pop loop stops at k = 0: intersection
/// abscissae are bounded below by -FAR/2 for inputs in [0, FAR].
fn dt1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -FAR;
    z[1] = FAR;
    for q in 1..n {
        let mut s = intersect(f, q, v[k]);
        while s <= z[k] {
            debug_assert!(k > 0);
            k -= 1;
            s = intersect(f, q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = FAR;
    }
    let mut k = 0usize;
    for q in 0..n {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        out[q] = (qf - p) * (qf - p) + f[v[k]];
    }
}
