use num_traits::Float;

use super::unary;
use crate::{Real, Result, Var};

impl<'g, T: Real> Var<'g, T> {
    pub fn add(self, rhs: Var<'g, T>) -> Result<Var<'g, T>> {
        let value = self.value().zip_map(&rhs.value(), |a, b| a + b)?;
        Ok(self.graph().op(
            "add",
            value,
            &[self, rhs],
            Box::new(|g, _| vec![Some(g.clone()), Some(g.clone())]),
        ))
    }

    pub fn sub(self, rhs: Var<'g, T>) -> Result<Var<'g, T>> {
        let value = self.value().zip_map(&rhs.value(), |a, b| a - b)?;
        Ok(self.graph().op(
            "sub",
            value,
            &[self, rhs],
            Box::new(|g, _| vec![Some(g.clone()), Some(g.map(|v| -v))]),
        ))
    }

    pub fn mul(self, rhs: Var<'g, T>) -> Result<Var<'g, T>> {
        let (a, b) = (self.value(), rhs.value());
        let value = a.zip_map(&b, |x, y| x * y)?;
        Ok(self.graph().op(
            "mul",
            value,
            &[self, rhs],
            Box::new(move |g, needs| {
                vec![
                    needs[0].then(|| g.zip_map(&b, |g, y| g * y).unwrap()),
                    needs[1].then(|| g.zip_map(&a, |g, x| g * x).unwrap()),
                ]
            }),
        ))
    }

    pub fn scale(self, c: T) -> Var<'g, T> {
        unary(self, "scale", move |x| x * c, move |_, _| c)
    }

    pub fn add_scalar(self, c: T) -> Var<'g, T> {
        unary(self, "add_scalar", move |x| x + c, |_, _| T::one())
    }

    pub fn neg(self) -> Var<'g, T> {
        self.scale(-T::one())
    }

    pub fn square(self) -> Var<'g, T> {
        unary(self, "square", |x| x * x, |x, _| x + x)
    }

    pub fn exp(self) -> Var<'g, T> {
        unary(self, "exp", Float::exp, |_, y| y)
    }

    pub fn ln(self) -> Var<'g, T> {
        unary(self, "ln", Float::ln, |x, _| x.recip())
    }

    pub fn tanh(self) -> Var<'g, T> {
        unary(self, "tanh", Float::tanh, |_, y| T::one() - y * y)
    }

    pub fn sigmoid(self) -> Var<'g, T> {
        unary(self, "sigmoid", sigmoid, |_, y| y * (T::one() - y))
    }

    /// `x` for `x ≥ 0`, `slope·x` otherwise.
    pub fn leaky_relu(self, slope: T) -> Var<'g, T> {
        unary(
            self,
            "leaky_relu",
            move |x| if x >= T::zero() { x } else { slope * x },
            move |x, _| if x >= T::zero() { T::one() } else { slope },
        )
    }
}

/// Logistic function, evaluated without overflow for large `|x|`.
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
