//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

/// Integer coefficients of the physicists' Hermite polynomial, lowest degree
/// first, from `H_{k+1} = 2x H_k − 2k H_{k−1}` on exact integers.
pub fn hermite_coefficients(n: u32) -> Vec<BigInt> {
    let mut prev: Vec<BigInt> = vec![BigInt::from(1)];
    if n == 0 {
        return prev;
    }
    let mut cur: Vec<BigInt> = vec![BigInt::from(0), BigInt::from(2)];
    for k in 1..n {
        let mut next = vec![BigInt::from(0); k as usize + 2];
        for (i, c) in cur.iter().enumerate() {
            next[i + 1] += c * 2;
        }
        for (i, c) in prev.iter().enumerate() {
            next[i] -= c * BigInt::from(2 * k);
        }
        prev = cur;
        cur = next;
    }
    cur
}

/// Exact complex rational.
#[derive(Clone)]
pub struct Exact {
    pub re: BigRational,
    pub im: BigRational,
}

impl Exact {
    pub fn from_f64(z: Complex64) -> Self {
        Exact {
            re: BigRational::from_float(z.re).expect("finite"),
            im: BigRational::from_float(z.im).expect("finite"),
        }
    }

    fn mul(&self, o: &Exact) -> Exact {
        Exact {
            re: &self.re * &o.re - &self.im * &o.im,
            im: &self.re * &o.im + &self.im * &o.re,
        }
    }

    pub fn norm_sqr(&self) -> BigRational {
        &self.re * &self.re + &self.im * &self.im
    }

    pub fn to_f64(&self) -> Complex64 {
        Complex64::new(self.re.to_f64().unwrap(), self.im.to_f64().unwrap())
    }
}

/// `H_n(z)` evaluated exactly at the rational point `z` (Horner).
pub fn hermite_exact(n: u32, z: &Exact) -> Exact {
    let mut acc = Exact {
        re: BigRational::zero(),
        im: BigRational::zero(),
    };
    for c in hermite_coefficients(n).iter().rev() {
        acc = acc.mul(z);
        acc.re += BigRational::from_integer(c.clone());
    }
    acc
}

/// `−z + 2n H_{n−1}(z)/H_n(z)`, exact up to the final rounding, or `None`
/// when `H_n(z) = 0`.
pub fn log_derivative_oracle(n: u32, z: Complex64) -> Option<Complex64> {
    if n == 0 {
        return Some(-z);
    }
    let ze = Exact::from_f64(z);
    let hn = hermite_exact(n, &ze);
    let hm = hermite_exact(n - 1, &ze);
    let denom = hn.norm_sqr();
    if denom.is_zero() {
        return None;
    }
    // H_{n−1} · conj(H_n) / |H_n|²
    let two_n = BigRational::from_integer(BigInt::from(2 * n));
    let re = (&hm.re * &hn.re + &hm.im * &hn.im) * &two_n / &denom;
    let im = (&hm.im * &hn.re - &hm.re * &hn.im) * &two_n / &denom;
    let ratio = Exact { re, im }.to_f64();
    Some(ratio - z)
}

/// Composite Simpson rule with `m` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    assert!(m.is_multiple_of(2));
    let h = (b - a) / m as f64;
    let mut sum = f(a) + f(b);
    for k in 1..m {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + k as f64 * h);
    }
    sum * h / 3.0
}

/// Relative difference `|a − b| / max(|b|, floor)`.
pub fn rel_err(a: Complex64, b: Complex64, floor: f64) -> f64 {
    (a - b).norm() / b.norm().max(floor)
}
