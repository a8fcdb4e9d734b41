use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Numbers that the scalar network and expression evaluators are generic over.
///
/// Every implementation evaluates its value component with exactly the same
/// floating-point operations as `f64`, so lifting never perturbs values.
pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;
    fn value(self) -> f64;
    /// `k * self`
    fn scale(self, k: f64) -> Self;
    /// `self + k`
    fn offset(self, k: f64) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tanh(self) -> Self;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
    fn square(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn recip(self) -> Self;
    /// `max(0, x)^2`
    fn requ(self) -> Self;
    fn is_finite(self) -> bool;
}

impl Scalar for f64 {
    #[inline]
    fn constant(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        k * self
    }
    #[inline]
    fn offset(self, k: f64) -> Self {
        self + k
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn square(self) -> Self {
        self * self
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    #[inline]
    fn recip(self) -> Self {
        1.0 / self
    }
    #[inline]
    fn requ(self) -> Self {
        let r = self.max(0.0);
        r * r
    }
    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

/// Value and first derivative values `(f, f', f'')` of the elementary
/// functions, shared by both dual types so their first components agree.
#[inline]
fn elementary(kind: Elem, x: f64) -> (f64, f64, f64) {
    match kind {
        Elem::Sin => {
            let (s, c) = x.sin_cos();
            (s, c, -s)
        }
        Elem::Cos => {
            let (s, c) = x.sin_cos();
            (c, -s, -c)
        }
        Elem::Tanh => {
            let t = x.tanh();
            let d = 1.0 - t * t;
            (t, d, -2.0 * t * d)
        }
        Elem::Exp => {
            let e = x.exp();
            (e, e, e)
        }
        Elem::Sqrt => {
            let s = x.sqrt();
            (s, 0.5 / s, -0.25 / (s * x))
        }
        Elem::Square => (x * x, 2.0 * x, 2.0),
        Elem::Recip => {
            let r = 1.0 / x;
            (r, -r * r, 2.0 * r * r * r)
        }
        Elem::Requ => {
            let r = x.max(0.0);
            (r * r, 2.0 * r, if x > 0.0 { 2.0 } else { 0.0 })
        }
    }
}

#[inline]
fn power(x: f64, n: i32) -> (f64, f64, f64) {
    let nf = n as f64;
    (
        x.powi(n),
        nf * x.powi(n - 1),
        nf * (nf - 1.0) * x.powi(n - 2),
    )
}

#[derive(Clone, Copy)]
enum Elem {
    Sin,
    Cos,
    Tanh,
    Exp,
    Sqrt,
    Square,
    Recip,
    Requ,
}

/// First-order dual number: a value and its derivative along one direction.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dual1 {
    pub value: f64,
    pub deriv: f64,
}

impl Dual1 {
    pub fn new(value: f64, deriv: f64) -> Self {
        Self { value, deriv }
    }

    /// The active coordinate: derivative one.
    pub fn variable(value: f64) -> Self {
        Self { value, deriv: 1.0 }
    }

    #[inline]
    fn chain(self, (f, df, _): (f64, f64, f64)) -> Self {
        Self {
            value: f,
            deriv: df * self.deriv,
        }
    }
}

impl Add for Dual1 {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.value + o.value, self.deriv + o.deriv)
    }
}

impl Sub for Dual1 {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.value - o.value, self.deriv - o.deriv)
    }
}

impl Mul for Dual1 {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self::new(
            self.value * o.value,
            self.value * o.deriv + self.deriv * o.value,
        )
    }
}

impl Div for Dual1 {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let q = self.value / o.value;
        Self::new(q, (self.deriv - q * o.deriv) / o.value)
    }
}

impl Neg for Dual1 {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.value, -self.deriv)
    }
}

impl Scalar for Dual1 {
    #[inline]
    fn constant(v: f64) -> Self {
        Self::new(v, 0.0)
    }
    #[inline]
    fn value(self) -> f64 {
        self.value
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        Self::new(k * self.value, k * self.deriv)
    }
    #[inline]
    fn offset(self, k: f64) -> Self {
        Self::new(self.value + k, self.deriv)
    }
    fn sin(self) -> Self {
        self.chain(elementary(Elem::Sin, self.value))
    }
    fn cos(self) -> Self {
        self.chain(elementary(Elem::Cos, self.value))
    }
    fn tanh(self) -> Self {
        self.chain(elementary(Elem::Tanh, self.value))
    }
    fn exp(self) -> Self {
        self.chain(elementary(Elem::Exp, self.value))
    }
    fn sqrt(self) -> Self {
        self.chain(elementary(Elem::Sqrt, self.value))
    }
    fn square(self) -> Self {
        self.chain(elementary(Elem::Square, self.value))
    }
    fn powi(self, n: i32) -> Self {
        self.chain(power(self.value, n))
    }
    fn recip(self) -> Self {
        self.chain(elementary(Elem::Recip, self.value))
    }
    fn requ(self) -> Self {
        self.chain(elementary(Elem::Requ, self.value))
    }
    fn is_finite(self) -> bool {
        self.value.is_finite() && self.deriv.is_finite()
    }
}

/// Second-order dual number along one direction: value, first and second
/// directional derivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dual2 {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Dual2 {
    pub fn new(value: f64, d1: f64, d2: f64) -> Self {
        Self { value, d1, d2 }
    }

    pub fn variable(value: f64) -> Self {
        Self {
            value,
            d1: 1.0,
            d2: 0.0,
        }
    }

    #[inline]
    fn chain(self, (f, df, ddf): (f64, f64, f64)) -> Self {
        Self {
            value: f,
            d1: df * self.d1,
            d2: df * self.d2 + ddf * self.d1 * self.d1,
        }
    }
}

impl Add for Dual2 {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.value + o.value, self.d1 + o.d1, self.d2 + o.d2)
    }
}

impl Sub for Dual2 {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.value - o.value, self.d1 - o.d1, self.d2 - o.d2)
    }
}

impl Mul for Dual2 {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self::new(
            self.value * o.value,
            self.value * o.d1 + self.d1 * o.value,
            self.value * o.d2 + 2.0 * self.d1 * o.d1 + self.d2 * o.value,
        )
    }
}

impl Div for Dual2 {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        // a = q b  =>  a' = q' b + q b',  a'' = q'' b + 2 q' b' + q b''
        let q = self.value / o.value;
        let d1 = (self.d1 - q * o.d1) / o.value;
        let d2 = (self.d2 - 2.0 * d1 * o.d1 - q * o.d2) / o.value;
        Self::new(q, d1, d2)
    }
}

impl Neg for Dual2 {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.value, -self.d1, -self.d2)
    }
}

impl Scalar for Dual2 {
    #[inline]
    fn constant(v: f64) -> Self {
        Self::new(v, 0.0, 0.0)
    }
    #[inline]
    fn value(self) -> f64 {
        self.value
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        Self::new(k * self.value, k * self.d1, k * self.d2)
    }
    #[inline]
    fn offset(self, k: f64) -> Self {
        Self::new(self.value + k, self.d1, self.d2)
    }
    fn sin(self) -> Self {
        self.chain(elementary(Elem::Sin, self.value))
    }
    fn cos(self) -> Self {
        self.chain(elementary(Elem::Cos, self.value))
    }
    fn tanh(self) -> Self {
        self.chain(elementary(Elem::Tanh, self.value))
    }
    fn exp(self) -> Self {
        self.chain(elementary(Elem::Exp, self.value))
    }
    fn sqrt(self) -> Self {
        self.chain(elementary(Elem::Sqrt, self.value))
    }
    fn square(self) -> Self {
        self.chain(elementary(Elem::Square, self.value))
    }
    fn powi(self, n: i32) -> Self {
        self.chain(power(self.value, n))
    }
    fn recip(self) -> Self {
        self.chain(elementary(Elem::Recip, self.value))
    }
    fn requ(self) -> Self {
        self.chain(elementary(Elem::Requ, self.value))
    }
    fn is_finite(self) -> bool {
        self.value.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn central<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn linear_map() {
        let x = Dual2::variable(3.0);
        let y = x.scale(2.0).offset(1.0);
        assert_eq!((y.value, y.d1, y.d2), (7.0, 2.0, 0.0));
    }

    #[test]
    fn sine_at_zero() {
        let y = Dual2::variable(0.0).sin();
        assert_eq!((y.value, y.d1, y.d2), (0.0, 1.0, -0.0));
        let c = Dual1::constant(0.3);
        assert_eq!(c.deriv, 0.0);
        assert_eq!(Dual1::variable(0.3).deriv, 1.0);
    }

    #[test]
    fn product_rule() {
        let a = Dual1::new(2.0, 3.0);
        let b = Dual1::new(5.0, 7.0);
        assert_eq!((a * b).deriv, 2.0 * 7.0 + 3.0 * 5.0);
    }

    type Prim = (&'static str, fn(Dual1) -> Dual1, fn(f64) -> f64);

    fn primitives() -> Vec<Prim> {
        vec![
            ("sin", |x| x.sin(), f64::sin),
            ("cos", |x| x.cos(), f64::cos),
            ("tanh", |x| x.tanh(), f64::tanh),
            ("exp", |x| x.exp(), f64::exp),
            ("square", |x| x.square(), |x| x * x),
            ("cube", |x| x.powi(3), |x| x.powi(3)),
            ("recip", |x| x.recip(), |x| 1.0 / x),
            ("sqrt", |x| x.sqrt(), f64::sqrt),
            ("mul", |x| x * x.sin(), |x| x * x.sin()),
            ("div", |x| x.sin() / x.exp(), |x| x.sin() / x.exp()),
        ]
    }

    proptest! {
        #[test]
        fn primitives_match_central_differences(x in 0.2f64..3.0) {
            let h = 1e-6;
            for (name, dual, plain) in primitives() {
                let d = dual(Dual1::variable(x)).deriv;
                let fd = central(plain, x, h);
                let tol = 1e-6 * d.abs().max(1.0);
                prop_assert!((d - fd).abs() <= tol, "{name}: {d} vs {fd}");
            }
        }

        #[test]
        fn second_order_matches_differences_of_first(x in 0.2f64..3.0) {
            let h = 1e-5;
            let f = |x: Dual2| (x.sin() * x.tanh() + x.recip()).powi(2) / x.sqrt().exp();
            let y = f(Dual2::variable(x));
            let d1 = |x: f64| f(Dual2::variable(x)).d1;
            let fd = central(d1, x, h);
            prop_assert!((y.d2 - fd).abs() <= 1e-6 * y.d2.abs().max(1.0));
        }

        #[test]
        fn dual2_first_component_is_dual1(x in -4.0f64..4.0, w in -2.0f64..2.0) {
            let g1 = |x: Dual1| ((x.scale(w).offset(0.5)).sin() * x.cos() + x.tanh()).square() / (x.exp().offset(1.0));
            let g2 = |x: Dual2| ((x.scale(w).offset(0.5)).sin() * x.cos() + x.tanh()).square() / (x.exp().offset(1.0));
            let a = g1(Dual1::variable(x));
            let b = g2(Dual2::variable(x));
            prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
            prop_assert_eq!(a.deriv.to_bits(), b.d1.to_bits());
            let t = (x * w + 0.5).sin() * x.cos() + x.tanh();
            let plain = (t * t) / (x.exp() + 1.0);
            prop_assert_eq!(plain.to_bits(), a.value.to_bits());
        }
    }
}
