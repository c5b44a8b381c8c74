use ndarray::{Array2, ArrayView2, Axis, Zip};

use super::{cast, Scalar};
use crate::error::{Error, Result};

/// Negative-side slope of the leaky rectifier.
pub const LEAKY_SLOPE: f64 = 0.01;
/// Variance floor inside the layer-norm square root.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[inline]
pub fn leaky_relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x * cast(LEAKY_SLOPE)
    }
}

/// Derivative of [`leaky_relu`] at pre-activation `x`.
#[inline]
pub fn leaky_relu_grad<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        cast(LEAKY_SLOPE)
    }
}

/// `dy * leaky_relu'(pre)` elementwise.
pub fn leaky_relu_backward<T: Scalar>(pre: &Array2<T>, dy: &Array2<T>) -> Array2<T> {
    Zip::from(pre).and(dy).map_collect(|&p, &d| d * leaky_relu_grad(p))
}

/// `dy * (1 - y^2)` for `y = tanh(x)`.
pub fn tanh_backward<T: Scalar>(y: &Array2<T>, dy: &Array2<T>) -> Array2<T> {
    Zip::from(y).and(dy).map_collect(|&y, &d| d * (T::one() - y * y))
}

/// `x * weight^T + bias` for `x: batch x in`, `weight: out x in`,
/// `bias: 1 x out`.
pub fn linear_forward<T: Scalar>(
    x: ArrayView2<T>,
    weight: &Array2<T>,
    bias: Option<&Array2<T>>,
) -> Result<Array2<T>> {
    if x.ncols() != weight.ncols() {
        return Err(Error::Dimension {
            expected: weight.ncols(),
            got: x.ncols(),
        });
    }
    let mut y = x.dot(&weight.t());
    if let Some(b) = bias {
        if b.shape() != [1, weight.nrows()] {
            return Err(Error::Shape {
                name: "bias".into(),
                expected: (1, weight.nrows()),
                got: b.dim(),
            });
        }
        y += b;
    }
    Ok(y)
}

/// Accumulates `dweight += dy^T x`, `dbias += sum_rows dy` and returns
/// `dx = dy * weight`.
pub fn linear_backward<T: Scalar>(
    x: ArrayView2<T>,
    weight: &Array2<T>,
    dy: &Array2<T>,
    dweight: &mut Array2<T>,
    dbias: Option<&mut Array2<T>>,
) -> Array2<T> {
    ndarray::linalg::general_mat_mul(T::one(), &dy.t(), &x, T::one(), dweight);
    if let Some(db) = dbias {
        *db += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    dy.dot(weight)
}

#[derive(Clone, Debug)]
pub struct LayerNormCache<T> {
    /// Normalized input, before the affine map.
    pub xhat: Array2<T>,
    pub inv_std: Vec<T>,
}

/// Row-wise layer normalization followed by `gain * xhat + bias`.
pub fn layer_norm_forward<T: Scalar>(
    x: ArrayView2<T>,
    gain: &Array2<T>,
    bias: &Array2<T>,
) -> Result<(Array2<T>, LayerNormCache<T>)> {
    let d = x.ncols();
    if d == 0 {
        return Err(Error::Argument("layer norm over zero features".into()));
    }
    for (name, p) in [("gain", gain), ("bias", bias)] {
        if p.shape() != [1, d] {
            return Err(Error::Shape {
                name: name.into(),
                expected: (1, d),
                got: p.dim(),
            });
        }
    }
    let n: T = cast(d as f64);
    let eps: T = cast(LAYER_NORM_EPS);
    let mut xhat = x.to_owned();
    let mut inv_std = Vec::with_capacity(x.nrows());
    for mut row in xhat.rows_mut() {
        let mean = row.sum() / n;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|&v| v * v).sum::<T>() / n;
        let s = T::one() / (var + eps).sqrt();
        row.mapv_inplace(|v| v * s);
        inv_std.push(s);
    }
    let y = &xhat * gain + bias;
    Ok((y, LayerNormCache { xhat, inv_std }))
}

pub fn layer_norm_backward<T: Scalar>(
    cache: &LayerNormCache<T>,
    gain: &Array2<T>,
    dy: &Array2<T>,
    dgain: &mut Array2<T>,
    dbias: &mut Array2<T>,
) -> Array2<T> {
    *dgain += &(dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    *dbias += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let n: T = cast(cache.xhat.ncols() as f64);
    let mut dx = dy * gain;
    for ((mut row, xhat), &s) in dx
        .rows_mut()
        .into_iter()
        .zip(cache.xhat.rows())
        .zip(&cache.inv_std)
    {
        let mean_d = row.sum() / n;
        let mean_dx = row.iter().zip(xhat).map(|(&a, &b)| a * b).sum::<T>() / n;
        Zip::from(&mut row)
            .and(&xhat)
            .for_each(|d, &xh| *d = s * (*d - mean_d - xh * mean_dx));
    }
    dx
}
