//! Unit conversions into the internal SI system (T, m, s).

/// Gauss to tesla.
pub const fn gauss(g: f64) -> f64 {
    g * 1e-4
}

/// Gauss per centimetre to tesla per metre.
pub const fn gauss_per_cm(g: f64) -> f64 {
    g * 1e-2
}

/// Millitesla per metre to tesla per metre.
pub const fn mt_per_m(g: f64) -> f64 {
    g * 1e-3
}

pub const fn ms(t: f64) -> f64 {
    t * 1e-3
}

pub const fn us(t: f64) -> f64 {
    t * 1e-6
}

pub const fn mm(x: f64) -> f64 {
    x * 1e-3
}

pub const fn cm_per_s(v: f64) -> f64 {
    v * 1e-2
}

pub const fn mm_per_s(v: f64) -> f64 {
    v * 1e-3
}

pub fn deg(a: f64) -> f64 {
    a.to_radians()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions() {
        assert_eq!(gauss(0.175), 1.75e-5);
        assert_eq!(gauss_per_cm(1.0), 0.01);
        assert_eq!(ms(2.18), 2.18e-3);
        assert_eq!(cm_per_s(80.0), 0.8);
        assert!((deg(90.0) - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }
}
