//! Differentiable operations. Each op computes its value eagerly and records
//! a vector-Jacobian product on the owning [`crate::Graph`].

pub mod conv;
pub mod distance;
pub mod elementwise;
pub mod gru;
pub mod matmul;
pub mod norm;
pub mod pool;
pub mod reduce;
pub mod resample;
pub mod shape;
pub mod softmax;

use std::rc::Rc;

use crate::{Real, Tensor, Var};

/// Records `y = f(x)` elementwise with derivative `df(x, y)`.
pub(crate) fn unary<'g, T: Real>(
    x: Var<'g, T>,
    name: &'static str,
    f: impl Fn(T) -> T,
    df: impl Fn(T, T) -> T + 'static,
) -> Var<'g, T> {
    let xv = x.value();
    let y = Rc::new(xv.map(f));
    let y_saved = Rc::clone(&y);
    x.graph().op(
        name,
        y,
        &[x],
        Box::new(move |g, _| {
            let data = g
                .data()
                .iter()
                .zip(xv.data().iter().zip(y_saved.data()))
                .map(|(&g, (&x, &y))| g * df(x, y))
                .collect();
            vec![Some(Tensor::from_parts(g.shape().to_vec(), data))]
        }),
    )
}
