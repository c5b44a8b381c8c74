//! Gated recurrent cell, gate order (update z, reset r, candidate n):
//!
//! ```text
//! z  = sigmoid(W_z x + U_z h + b_z)
//! r  = sigmoid(W_r x + U_r h + b_r)
//! n  = tanh(W_n x + r * (U_n h) + b_n)
//! h' = (1 - z) * n + z * h
//! ```

use ndarray::{s, Array2, ArrayView2, Zip};

use super::{linear_backward, sigmoid, Scalar};
use crate::error::{Error, Result};

/// Borrowed cell parameters: `w_ih: 3H x I`, `w_hh: 3H x H`, `b: 1 x 3H`.
#[derive(Clone, Copy, Debug)]
pub struct GruWeights<'a, T> {
    pub w_ih: &'a Array2<T>,
    pub w_hh: &'a Array2<T>,
    pub b: &'a Array2<T>,
}

/// Gradient accumulators shaped like [`GruWeights`].
#[derive(Debug)]
pub struct GruGrads<'a, T> {
    pub w_ih: &'a mut Array2<T>,
    pub w_hh: &'a mut Array2<T>,
    pub b: &'a mut Array2<T>,
}

#[derive(Clone, Debug)]
pub struct GruCache<T> {
    x: Array2<T>,
    h: Array2<T>,
    z: Array2<T>,
    r: Array2<T>,
    n: Array2<T>,
    /// `U_n h`, needed for the reset-gate gradient.
    uh_n: Array2<T>,
}

impl<'a, T: Scalar> GruWeights<'a, T> {
    pub fn hidden_dim(&self) -> usize {
        self.w_hh.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.ncols()
    }
}

pub fn gru_forward<T: Scalar>(
    weights: GruWeights<'_, T>,
    h: ArrayView2<T>,
    x: ArrayView2<T>,
) -> Result<(Array2<T>, GruCache<T>)> {
    let hd = weights.hidden_dim();
    if h.ncols() != hd {
        return Err(Error::Dimension {
            expected: hd,
            got: h.ncols(),
        });
    }
    if x.ncols() != weights.input_dim() {
        return Err(Error::Dimension {
            expected: weights.input_dim(),
            got: x.ncols(),
        });
    }
    if x.nrows() != h.nrows() {
        return Err(Error::Dimension {
            expected: h.nrows(),
            got: x.nrows(),
        });
    }
    let mut gx = x.dot(&weights.w_ih.t());
    gx += weights.b;
    let gh = h.dot(&weights.w_hh.t());

    let z = Zip::from(gx.slice(s![.., ..hd]))
        .and(gh.slice(s![.., ..hd]))
        .map_collect(|&a, &b| sigmoid(a + b));
    let r = Zip::from(gx.slice(s![.., hd..2 * hd]))
        .and(gh.slice(s![.., hd..2 * hd]))
        .map_collect(|&a, &b| sigmoid(a + b));
    let uh_n = gh.slice(s![.., 2 * hd..]).to_owned();
    let n = Zip::from(gx.slice(s![.., 2 * hd..]))
        .and(&r)
        .and(&uh_n)
        .map_collect(|&a, &r, &u| (a + r * u).tanh());
    let h_next = Zip::from(&z)
        .and(&n)
        .and(&h)
        .map_collect(|&z, &n, &h| (T::one() - z) * n + z * h);

    Ok((
        h_next,
        GruCache {
            x: x.to_owned(),
            h: h.to_owned(),
            z,
            r,
            n,
            uh_n,
        },
    ))
}

/// Returns `(dx, dh)` and accumulates parameter gradients.
pub fn gru_backward<T: Scalar>(
    weights: GruWeights<'_, T>,
    cache: &GruCache<T>,
    dh_next: &Array2<T>,
    grads: GruGrads<'_, T>,
) -> (Array2<T>, Array2<T>) {
    let hd = weights.hidden_dim();
    let rows = dh_next.nrows();
    let one = T::one();

    // pre-activation gradients for the input-side [z | r | n] block and the
    // hidden-side block; they differ only in the candidate slice
    let mut dgx = Array2::<T>::zeros((rows, 3 * hd));
    let mut dgh = Array2::<T>::zeros((rows, 3 * hd));
    let mut dh = Array2::<T>::zeros((rows, hd));

    for b in 0..rows {
        for k in 0..hd {
            let dhn = dh_next[[b, k]];
            let z = cache.z[[b, k]];
            let r = cache.r[[b, k]];
            let n = cache.n[[b, k]];
            let hp = cache.h[[b, k]];
            let u = cache.uh_n[[b, k]];

            let dn_pre = dhn * (one - z) * (one - n * n);
            let dz_pre = dhn * (hp - n) * z * (one - z);
            let dr_pre = dn_pre * u * r * (one - r);

            dgx[[b, k]] = dz_pre;
            dgx[[b, hd + k]] = dr_pre;
            dgx[[b, 2 * hd + k]] = dn_pre;
            dgh[[b, k]] = dz_pre;
            dgh[[b, hd + k]] = dr_pre;
            dgh[[b, 2 * hd + k]] = dn_pre * r;
            dh[[b, k]] = dhn * z;
        }
    }

    let dx = linear_backward(cache.x.view(), weights.w_ih, &dgx, grads.w_ih, Some(grads.b));
    ndarray::linalg::general_mat_mul(one, &dgh.t(), &cache.h, one, grads.w_hh);
    ndarray::linalg::general_mat_mul(one, &dgh, weights.w_hh, one, &mut dh);
    (dx, dh)
}
