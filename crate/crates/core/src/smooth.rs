//! Flat-ended smooth cutoffs used for the tube bumps and for blending
//! functions across the roof identification.

#[inline]
fn flat_exp(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

/// C^∞ step: 0 for `x <= 0`, 1 for `x >= 1`, all derivatives vanish at both ends.
#[inline]
pub fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let a = flat_exp(x);
        let b = flat_exp(1.0 - x);
        a / (a + b)
    }
}

/// Tube profile: 1 on `[0, 1/2]`, 0 on `[1, ∞)`, C^∞ in between.
#[inline]
pub fn bump_profile(d: f64) -> f64 {
    1.0 - smooth_step(2.0 * d - 1.0)
}
