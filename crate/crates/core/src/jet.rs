//! Second-order forward-mode jets: value, first and second derivative.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet {
    pub const fn var(x: f64) -> Self {
        Jet { v: x, d1: 1.0, d2: 0.0 }
    }

    pub const fn cst(x: f64) -> Self {
        Jet { v: x, d1: 0.0, d2: 0.0 }
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        Jet { v: e, d1: e * self.d1, d2: e * (self.d2 + self.d1 * self.d1) }
    }

    pub fn ln(self) -> Self {
        Jet { v: self.v.ln(), d1: self.d1 / self.v, d2: self.d2 / self.v - (self.d1 / self.v).powi(2) }
    }

    pub fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        Jet { v: s, d1: self.d1 / (2.0 * s), d2: self.d2 / (2.0 * s) - self.d1 * self.d1 / (4.0 * s * s * s) }
    }

    pub fn powf(self, p: f64) -> Self {
        if p == 0.0 {
            return Jet::cst(1.0);
        }
        let a = self.v.powf(p - 1.0);
        let b = if p == 1.0 { 0.0 } else { p * (p - 1.0) * self.v.powf(p - 2.0) };
        Jet { v: self.v.powf(p), d1: p * a * self.d1, d2: p * a * self.d2 + b * self.d1 * self.d1 }
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.v;
        Jet { v: r, d1: -self.d1 * r * r, d2: -self.d2 * r * r + 2.0 * self.d1 * self.d1 * r * r * r }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet { v: self.v + o.v, d1: self.d1 + o.d1, d2: self.d2 + o.d2 }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet { v: self.v - o.v, d1: self.d1 - o.d1, d2: self.d2 - o.d2 }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet { v: self.v * o.v, d1: self.d1 * o.v + self.v * o.d1, d2: self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2 }
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet { v: -self.v, d1: -self.d1, d2: -self.d2 }
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, s: f64) -> Jet {
        Jet { v: self.v * s, d1: self.d1 * s, d2: self.d2 * s }
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(self, s: f64) -> Jet {
        Jet { v: self.v + s, ..self }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_closed_forms() {
        let x = Jet::var(0.7);
        let f = (x * x).exp() / (x + 1.0).sqrt();
        // f = e^{x²}(x+1)^{-1/2}
        let h = 1e-4;
        let g = |t: f64| (t * t).exp() / (t + 1.0).sqrt();
        let d1 = (g(0.7 + h) - g(0.7 - h)) / (2.0 * h);
        let d2 = (g(0.7 + h) - 2.0 * g(0.7) + g(0.7 - h)) / (h * h);
        assert!((f.v - g(0.7)).abs() < 1e-14);
        assert!((f.d1 - d1).abs() < 1e-7);
        assert!((f.d2 - d2).abs() < 1e-5);
        let p = x.powf(1.5).ln();
        assert!((p.d1 - 1.5 / 0.7).abs() < 1e-13);
        assert!((p.d2 + 1.5 / 0.49).abs() < 1e-12);
    }
}
