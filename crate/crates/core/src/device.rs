//! Empirical I-V laws of resistive memory cells and the half-bias
//! nonlinearity metric.
//!
//! Two device families are modeled:
//!
//! * [`SinhDevice`]: `I(g, V) = g · sinh(b·V)`, where `g` is the lumped state
//!   term (the exponential of the normalized tunneling gap).
//! * [`ComplexDevice`]: `I(w, V) = exp(a·w + b) · (exp(c · V^(w+d)) − 1)`,
//!   defined for `V ≥ 0` and a state `w` in an open interval.
//!
//! Both expose analytic partial derivatives with respect to state and
//! voltage; training backpropagates through them.

use std::collections::BTreeMap;
use std::fmt;

use crate::config::{parse_f64, Section};
use crate::error::{Error, Result};

/// Upper end of the bracket searched by [`b_of_k`].
pub const B_SEARCH_MAX: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinhDevice {
    pub b: f64,
    pub g_min: f64,
    pub g_max: f64,
    pub v_read_max: f64,
}

impl SinhDevice {
    pub fn new(b: f64, g_min: f64, g_max: f64, v_read_max: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::domain("b", b, "b > 0"));
        }
        if !(g_min > 0.0 && g_min < g_max && g_max.is_finite()) {
            return Err(Error::domain("g_min", g_min, format!("0 < g_min < g_max = {g_max}")));
        }
        if !(v_read_max > 0.0 && v_read_max.is_finite()) {
            return Err(Error::domain("v_read_max", v_read_max, "v_read_max > 0"));
        }
        Ok(Self {
            b,
            g_min,
            g_max,
            v_read_max,
        })
    }

    /// The fitted metal-oxide cell: state range `[e^-14, e^-8]`, `b = 4`
    /// (`k ≈ 7.5`), 1 V maximum read voltage.
    pub fn fitted() -> Self {
        Self {
            b: 4.0,
            g_min: (-14.0f64).exp(),
            g_max: (-8.0f64).exp(),
            v_read_max: 1.0,
        }
    }

    /// The fitted cell's state range with a different nonlinearity.
    pub fn with_b(b: f64) -> Result<Self> {
        let f = Self::fitted();
        Self::new(b, f.g_min, f.g_max, f.v_read_max)
    }

    fn check(&self, g: f64, v: f64) -> Result<()> {
        if !(g >= self.g_min && g <= self.g_max) {
            return Err(Error::domain(
                "g",
                g,
                format!("[{:e}, {:e}]", self.g_min, self.g_max),
            ));
        }
        if !(v.abs() <= self.v_read_max) {
            return Err(Error::domain("v", v, format!("|v| <= {}", self.v_read_max)));
        }
        Ok(())
    }

    pub fn current(&self, g: f64, v: f64) -> Result<f64> {
        self.check(g, v)?;
        Ok(self.current_unchecked(g, v))
    }

    #[inline]
    pub fn current_unchecked(&self, g: f64, v: f64) -> f64 {
        g * (self.b * v).sinh()
    }

    /// `(∂I/∂g, ∂I/∂V)`
    pub fn partials(&self, g: f64, v: f64) -> Result<(f64, f64)> {
        self.check(g, v)?;
        Ok(self.partials_unchecked(g, v))
    }

    #[inline]
    pub fn partials_unchecked(&self, g: f64, v: f64) -> (f64, f64) {
        let bv = self.b * v;
        (bv.sinh(), g * self.b * bv.cosh())
    }

    pub fn nonlinearity(&self) -> NonlinearityK {
        // b > 0 is a constructor invariant.
        k_of_b(self.b * self.v_read_max).expect("b is positive")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexDevice {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    /// Exclusive lower bound of the state.
    pub w_min: f64,
    /// Exclusive upper bound of the state.
    pub w_max: f64,
    pub v_read_max: f64,
}

impl Default for ComplexDevice {
    fn default() -> Self {
        Self {
            a: -53.59,
            b: -37.058,
            c: 20.0,
            d: 0.2,
            w_min: 0.0,
            w_max: 0.15,
            v_read_max: 1.0,
        }
    }
}

impl ComplexDevice {
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [("a", self.a), ("b", self.b), ("c", self.c), ("d", self.d)] {
            if !v.is_finite() {
                return Err(Error::domain(what, v, "finite"));
            }
        }
        if !(self.w_min >= 0.0 && self.w_min < self.w_max && self.w_max.is_finite()) {
            return Err(Error::domain(
                "w_min",
                self.w_min,
                format!("0 <= w_min < w_max = {}", self.w_max),
            ));
        }
        if self.w_min + self.d <= 0.0 {
            return Err(Error::domain("d", self.d, "w + d > 0 over the state range"));
        }
        if !(self.v_read_max > 0.0 && self.v_read_max.is_finite()) {
            return Err(Error::domain(
                "v_read_max",
                self.v_read_max,
                "v_read_max > 0",
            ));
        }
        Ok(())
    }

    fn check(&self, w: f64, v: f64) -> Result<()> {
        if !(w > self.w_min && w < self.w_max) {
            return Err(Error::domain(
                "w",
                w,
                format!("({}, {})", self.w_min, self.w_max),
            ));
        }
        if !(v >= 0.0 && v <= self.v_read_max) {
            return Err(Error::domain("v", v, format!("[0, {}]", self.v_read_max)));
        }
        Ok(())
    }

    pub fn current(&self, w: f64, v: f64) -> Result<f64> {
        self.check(w, v)?;
        Ok(self.current_unchecked(w, v))
    }

    /// Evaluates the law without range checks. Also used at the `w = 0`
    /// boundary state that the signed-weight transfer subtracts off.
    #[inline]
    pub fn current_unchecked(&self, w: f64, v: f64) -> f64 {
        if v == 0.0 {
            return 0.0;
        }
        (self.a * w + self.b).exp() * (self.c * v.powf(w + self.d)).exp_m1()
    }

    /// `(∂I/∂w, ∂I/∂V)`. Both are reported as 0 at `V = 0`, where `∂I/∂V`
    /// is singular.
    pub fn partials(&self, w: f64, v: f64) -> Result<(f64, f64)> {
        self.check(w, v)?;
        Ok(self.partials_unchecked(w, v))
    }

    #[inline]
    pub fn partials_unchecked(&self, w: f64, v: f64) -> (f64, f64) {
        if v <= 0.0 {
            return (0.0, 0.0);
        }
        let p = w + self.d;
        let vp = v.powf(p);
        let prefactor = (self.a * w + self.b).exp();
        let inner = (self.c * vp).exp();
        let d_w = prefactor * (self.a * (inner - 1.0) + inner * self.c * vp * v.ln());
        let d_v = prefactor * inner * self.c * p * vp / v;
        (d_w, d_v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeviceModel {
    Sinh(SinhDevice),
    Complex(ComplexDevice),
}

impl DeviceModel {
    pub fn kind(&self) -> &'static str {
        match self {
            DeviceModel::Sinh(_) => "sinh",
            DeviceModel::Complex(_) => "complex",
        }
    }

    /// Admissible state interval `(lo, hi)`. Closed for sinh, open for complex.
    pub fn state_range(&self) -> (f64, f64) {
        match self {
            DeviceModel::Sinh(d) => (d.g_min, d.g_max),
            DeviceModel::Complex(d) => (d.w_min, d.w_max),
        }
    }

    pub fn v_read_max(&self) -> f64 {
        match self {
            DeviceModel::Sinh(d) => d.v_read_max,
            DeviceModel::Complex(d) => d.v_read_max,
        }
    }

    pub fn current(&self, state: f64, v: f64) -> Result<f64> {
        match self {
            DeviceModel::Sinh(d) => d.current(state, v),
            DeviceModel::Complex(d) => d.current(state, v),
        }
    }

    #[inline]
    pub(crate) fn current_unchecked(&self, state: f64, v: f64) -> f64 {
        match self {
            DeviceModel::Sinh(d) => d.current_unchecked(state, v),
            DeviceModel::Complex(d) => d.current_unchecked(state, v),
        }
    }

    pub fn partials(&self, state: f64, v: f64) -> Result<(f64, f64)> {
        match self {
            DeviceModel::Sinh(d) => d.partials(state, v),
            DeviceModel::Complex(d) => d.partials(state, v),
        }
    }

    /// Key-value form used in config sections and checkpoints' sidecar files.
    pub fn to_section(&self) -> Section {
        let mut s = BTreeMap::new();
        s.insert("kind".to_string(), self.kind().to_string());
        match self {
            DeviceModel::Sinh(d) => {
                s.insert("b".into(), d.b.to_string());
                s.insert("g_min".into(), d.g_min.to_string());
                s.insert("g_max".into(), d.g_max.to_string());
                s.insert("v_read_max".into(), d.v_read_max.to_string());
            }
            DeviceModel::Complex(d) => {
                s.insert("a".into(), d.a.to_string());
                s.insert("b".into(), d.b.to_string());
                s.insert("c".into(), d.c.to_string());
                s.insert("d".into(), d.d.to_string());
                s.insert("w_min".into(), d.w_min.to_string());
                s.insert("w_max".into(), d.w_max.to_string());
                s.insert("v_read_max".into(), d.v_read_max.to_string());
            }
        }
        s
    }

    /// Parses a device section. Missing keys fall back to the fitted defaults
    /// of the chosen kind; `k` may stand in for `b` on sinh devices.
    pub fn from_section(s: &Section) -> Result<Self> {
        let get = |key: &str| -> Result<Option<f64>> {
            s.get(key).map(|v| parse_f64(key, v)).transpose()
        };
        match s.get("kind").map(String::as_str).unwrap_or("sinh") {
            "sinh" => {
                let f = SinhDevice::fitted();
                let b = match (get("b")?, get("k")?) {
                    (Some(_), Some(_)) => {
                        return Err(Error::Config("give either b or k, not both".into()))
                    }
                    (Some(b), None) => b,
                    (None, Some(k)) => b_of_k(NonlinearityK::new(k)?, 1e-12)?,
                    (None, None) => f.b,
                };
                Ok(DeviceModel::Sinh(SinhDevice::new(
                    b,
                    get("g_min")?.unwrap_or(f.g_min),
                    get("g_max")?.unwrap_or(f.g_max),
                    get("v_read_max")?.unwrap_or(f.v_read_max),
                )?))
            }
            "complex" => {
                let f = ComplexDevice::default();
                let d = ComplexDevice {
                    a: get("a")?.unwrap_or(f.a),
                    b: get("b")?.unwrap_or(f.b),
                    c: get("c")?.unwrap_or(f.c),
                    d: get("d")?.unwrap_or(f.d),
                    w_min: get("w_min")?.unwrap_or(f.w_min),
                    w_max: get("w_max")?.unwrap_or(f.w_max),
                    v_read_max: get("v_read_max")?.unwrap_or(f.v_read_max),
                };
                d.validate()?;
                Ok(DeviceModel::Complex(d))
            }
            other => Err(Error::Config(format!("unknown device kind `{other}`"))),
        }
    }
}

/// Half-bias nonlinearity `I(V_max) / I(V_max / 2)`; exactly 2 for a linear cell.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct NonlinearityK(f64);

impl NonlinearityK {
    pub fn new(k: f64) -> Result<Self> {
        if !(k >= 2.0 && k.is_finite()) {
            return Err(Error::domain("k", k, "finite k >= 2"));
        }
        Ok(Self(k))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for NonlinearityK {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// `k(b) = (e^b − e^−b) / (e^(b/2) − e^(−b/2))` at a 1 V maximum read voltage.
pub fn k_of_b(b: f64) -> Result<NonlinearityK> {
    if !(b >= 0.0) || b.is_infinite() {
        return Err(Error::domain("b", b, "finite b >= 0"));
    }
    // sinh(b) = 2 sinh(b/2) cosh(b/2), so the ratio is 2 cosh(b/2); this form
    // has no 0/0 as b -> 0 and gives exactly 2 at b = 0.
    NonlinearityK::new(2.0 * (0.5 * b).cosh())
}

/// Inverts [`k_of_b`] by bisection on `[0, B_SEARCH_MAX]`.
pub fn b_of_k(k: NonlinearityK, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::domain("tol", tol, "tol > 0"));
    }
    let target = k.value();
    if target == 2.0 {
        return Ok(0.0);
    }
    let k_at = |b: f64| 2.0 * (0.5 * b).cosh();
    if target > k_at(B_SEARCH_MAX) {
        return Err(Error::Range(format!(
            "k = {target} exceeds k({B_SEARCH_MAX}) = {:e}",
            k_at(B_SEARCH_MAX)
        )));
    }
    let (mut lo, mut hi) = (0.0f64, B_SEARCH_MAX);
    loop {
        let mid = 0.5 * (lo + hi);
        let err = k_at(mid) - target;
        if err.abs() <= tol || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        if err < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}
