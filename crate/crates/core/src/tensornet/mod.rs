//! Minimal reverse-mode differentiation engine.
//!
//! Only the operations the voxel codec needs are provided: 3D convolution and
//! transposed convolution with cubic kernels, ReLU, sigmoid, elementwise
//! add/multiply, channel concatenation, sums and the weighted binary cross
//! entropy loss. Computations are recorded on a [`Tape`]; [`Tape::backward`]
//! walks it in reverse.
//!
//! The engine is generic over [`Scalar`] so that gradient checks can run the
//! exact same code in `f64`; models train in `f32`.

mod adam;
mod checkpoint;
mod conv;
mod params;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use conv::{conv_output_side, conv_transpose_output_side};
pub use params::{Gradients, Param, ParamStore};
pub use tape::{Tape, Var};

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// `(batch, channels, depth, height, width)`.
pub type Shape = [usize; 5];

pub fn numel(shape: &Shape) -> usize {
    shape.iter().product()
}

/// Floating point element type of the engine.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Row/column-strided GEMM: `c = alpha * a * b + beta * c`.
    ///
    /// # Safety
    /// Pointers and strides must describe valid `m x k`, `k x n` and `m x n`
    /// matrices.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("representable")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl Scalar for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Scalar for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// Real array participating in differentiation.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffTensor<T> {
    pub shape: Shape,
    pub values: Vec<T>,
    pub grad: Option<Vec<T>>,
    pub requires_grad: bool,
}

impl<T: Scalar> DiffTensor<T> {
    pub fn new(shape: Shape, values: Vec<T>, requires_grad: bool) -> crate::Result<Self> {
        if values.len() != numel(&shape) {
            return Err(crate::Error::Shape(format!(
                "{} values for shape {shape:?}",
                values.len()
            )));
        }
        Ok(DiffTensor {
            shape,
            values,
            grad: None,
            requires_grad,
        })
    }

    pub fn zeros(shape: Shape) -> Self {
        DiffTensor {
            shape,
            values: vec![T::zero(); numel(&shape)],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn scalar(v: T) -> Self {
        DiffTensor {
            shape: [1; 5],
            values: vec![v],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
