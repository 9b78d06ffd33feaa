use serde::{Deserialize, Serialize};

/// 2×2 integer matrix acting on the torus R²/Z².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntMatrix(pub [[i64; 2]; 2]);

impl IntMatrix {
    pub fn det(&self) -> i64 {
        let m = self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn trace(&self) -> i64 {
        self.0[0][0] + self.0[1][1]
    }

    /// Integer inverse; only meaningful when `|det| == 1`.
    pub fn inverse(&self) -> IntMatrix {
        let m = self.0;
        let d = self.det();
        IntMatrix([[m[1][1] * d, -m[0][1] * d], [-m[1][0] * d, m[0][0] * d]])
    }

    pub fn transpose(&self) -> IntMatrix {
        let m = self.0;
        IntMatrix([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    #[inline]
    pub fn apply_int(&self, v: [i64; 2]) -> [i64; 2] {
        let m = self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1],
            m[1][0] * v[0] + m[1][1] * v[1],
        ]
    }

    #[inline]
    pub fn apply_f64(&self, v: [f64; 2]) -> [f64; 2] {
        let m = self.0;
        [
            m[0][0] as f64 * v[0] + m[0][1] as f64 * v[1],
            m[1][0] as f64 * v[0] + m[1][1] as f64 * v[1],
        ]
    }
}

/// Wraps a real into `[-1/2, 1/2)`.
#[inline]
pub fn wrap_centered(x: f64) -> f64 {
    let y = x - x.round();
    if y >= 0.5 {
        y - 1.0
    } else {
        y
    }
}

/// Wraps a real into `[0, 1)`.
#[inline]
pub fn wrap_unit(x: f64) -> f64 {
    let y = x - x.floor();
    if y >= 1.0 {
        0.0
    } else {
        y
    }
}

/// A point of the 2-torus.
///
/// Stored as an exact rational anchor `num / den` plus a floating offset.
/// Rational points (periodic points of the toral automorphism) carry a zero
/// offset and are mapped exactly, so periodic orbits stay periodic for any
/// number of roof crossings. Generic points use anchor `0/1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    num: [i64; 2],
    den: i64,
    offset: [f64; 2],
}

impl TorusPoint {
    pub fn new(coords: [f64; 2]) -> Self {
        TorusPoint {
            num: [0, 0],
            den: 1,
            offset: [wrap_centered(coords[0]), wrap_centered(coords[1])],
        }
    }

    /// Exact rational point `(num[0]/den, num[1]/den)`; panics if `den <= 0`.
    pub fn rational(num: [i64; 2], den: i64) -> Self {
        assert!(den > 0, "denominator must be positive");
        TorusPoint {
            num: [num[0].rem_euclid(den), num[1].rem_euclid(den)],
            den,
            offset: [0.0, 0.0],
        }
    }

    pub fn origin() -> Self {
        TorusPoint::rational([0, 0], 1)
    }

    /// True when the point is an exact rational point (no floating offset).
    pub fn is_exact(&self) -> bool {
        self.offset == [0.0, 0.0]
    }

    pub fn anchor(&self) -> ([i64; 2], i64) {
        (self.num, self.den)
    }

    /// Coordinates in `[0, 1)²`.
    pub fn coords(&self) -> [f64; 2] {
        let d = self.den as f64;
        [
            wrap_unit(self.num[0] as f64 / d + self.offset[0]),
            wrap_unit(self.num[1] as f64 / d + self.offset[1]),
        ]
    }

    /// Image under the integer matrix, exact on the anchor.
    pub fn apply(&self, m: &IntMatrix) -> Self {
        let n = m.apply_int(self.num);
        let o = m.apply_f64(self.offset);
        TorusPoint {
            num: [n[0].rem_euclid(self.den), n[1].rem_euclid(self.den)],
            den: self.den,
            offset: [wrap_centered(o[0]), wrap_centered(o[1])],
        }
    }

    /// The point translated by `delta` (in torus coordinates).
    pub fn displaced(&self, delta: [f64; 2]) -> Self {
        TorusPoint {
            num: self.num,
            den: self.den,
            offset: [
                wrap_centered(self.offset[0] + delta[0]),
                wrap_centered(self.offset[1] + delta[1]),
            ],
        }
    }

    /// Shortest displacement `self - other` on the torus, in `[-1/2, 1/2)²`.
    ///
    /// The rational parts are subtracted exactly, so two points sharing an
    /// anchor differ by the offset difference with no cancellation.
    pub fn diff(&self, other: &TorusPoint) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (k, o) in out.iter_mut().enumerate() {
            let rat = if self.den == other.den {
                let n = (self.num[k] - other.num[k]).rem_euclid(self.den);
                n as f64 / self.den as f64
            } else {
                let d = self.den * other.den;
                let n = (self.num[k] * other.den - other.num[k] * self.den).rem_euclid(d);
                n as f64 / d as f64
            };
            *o = wrap_centered(wrap_centered(rat) + (self.offset[k] - other.offset[k]));
        }
        out
    }

    /// Flat torus distance.
    pub fn distance(&self, other: &TorusPoint) -> f64 {
        let d = self.diff(other);
        d[0].hypot(d[1])
    }
}
