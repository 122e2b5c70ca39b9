//! Second-order Taylor jets in the four event coordinates (x, y, z, t).
//!
//! A [`Jet`] carries a value, its gradient and its Hessian with respect to
//! `(x, y, z, t)`. Field formulas are written once over `Jet` and every
//! derivative the kinetic layer needs falls out exactly (to rounding).

use std::ops::{Add, Div, Mul, Neg, Sub};

pub(crate) const NV: usize = 4;
pub(crate) const T: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Jet {
    pub v: f64,
    pub g: [f64; NV],
    pub h: [[f64; NV]; NV],
}

impl Jet {
    pub const fn cst(v: f64) -> Self {
        Jet { v, g: [0.0; NV], h: [[0.0; NV]; NV] }
    }

    pub fn var(v: f64, i: usize) -> Self {
        let mut j = Jet::cst(v);
        j.g[i] = 1.0;
        j
    }

    /// The four coordinate jets for an event.
    pub fn event(x: f64, y: f64, z: f64, t: f64) -> [Jet; NV] {
        [Jet::var(x, 0), Jet::var(y, 1), Jet::var(z, 2), Jet::var(t, T)]
    }

    /// Compose with a scalar function given f(a), f'(a), f''(a).
    fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        let mut out = Jet::cst(f0);
        for i in 0..NV {
            out.g[i] = f1 * self.g[i];
            for k in 0..NV {
                out.h[i][k] = f1 * self.h[i][k] + f2 * (self.g[i] * self.g[k]);
            }
        }
        out
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }

    pub fn sq(self) -> Self {
        self * self
    }

    pub fn grad3(&self) -> [f64; 3] {
        [self.g[0], self.g[1], self.g[2]]
    }

    pub fn hess3(&self) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (k, e) in row.iter_mut().enumerate() {
                *e = self.h[i][k];
            }
        }
        m
    }

    /// Mixed derivatives ∂t∇.
    pub fn dt_grad3(&self) -> [f64; 3] {
        [self.h[T][0], self.h[T][1], self.h[T][2]]
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, o: Jet) -> Jet {
        self.v += o.v;
        for i in 0..NV {
            self.g[i] += o.g[i];
            for k in 0..NV {
                self.h[i][k] += o.h[i][k];
            }
        }
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self * -1.0
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut out = Jet::cst(self.v * o.v);
        for i in 0..NV {
            out.g[i] = self.g[i] * o.v + self.v * o.g[i];
            for k in 0..NV {
                out.h[i][k] = self.h[i][k] * o.v
                    + self.v * o.h[i][k]
                    + self.g[i] * o.g[k]
                    + self.g[k] * o.g[i];
            }
        }
        out
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, c: f64) -> Jet {
        self.v += c;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, c: f64) -> Jet {
        self.v -= c;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, c: f64) -> Jet {
        self.v *= c;
        for i in 0..NV {
            self.g[i] *= c;
            for k in 0..NV {
                self.h[i][k] *= c;
            }
        }
        self
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, c: f64) -> Jet {
        self * (1.0 / c)
    }
}

impl Add<Jet> for f64 {
    type Output = Jet;
    fn add(self, j: Jet) -> Jet {
        j + self
    }
}

impl Sub<Jet> for f64 {
    type Output = Jet;
    fn sub(self, j: Jet) -> Jet {
        -j + self
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, j: Jet) -> Jet {
        j * self
    }
}

impl Div<Jet> for f64 {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, j: Jet) -> Jet {
        j.recip() * self
    }
}
