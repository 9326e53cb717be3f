//! Scaling analysis on the high-genus "convoluted" surface: growth of
//! diamond perimeters on a kinked lattice, the area they enclose, the
//! minimal non-contractible loop length, and the resulting multiplicative
//! correction to the accuracy threshold.

use crate::BETA;

/// Geometry of the convoluted surface: `l` is the per-handle lattice scale
/// and `n` the number of handles. The cut-and-pair construction seeds a
/// constant density of valence-5 kinks; symmetrizing the construction (an
/// extra cut-and-pair step protecting both loop classes) doubles it.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceParams {
    pub l: u32,
    pub n: u64,
    pub symmetrized: bool,
}

impl SurfaceParams {
    pub fn new(l: u32, n: u64, symmetrized: bool) -> Self {
        assert!(l >= 2, "per-handle scale must be at least 2");
        assert!(n >= 2, "need at least two handles");
        SurfaceParams { l, n, symmetrized }
    }

    /// Kink density per vertex: 8/l^2, doubled to 16/l^2 when symmetrized.
    pub fn kink_density(&self) -> f64 {
        let base = 8.0 / (self.l as f64 * self.l as f64);
        if self.symmetrized {
            2.0 * base
        } else {
            base
        }
    }

    /// Total surface area l^2 n.
    pub fn area(&self) -> f64 {
        self.l as f64 * self.l as f64 * self.n as f64
    }
}

/// Perimeter of an r-diamond from the kink recursion
/// c(r) = 4r + density * sum_{r_k < r} c(r_k) (r - r_k),
/// evaluated iteratively. Each kink inside the diamond contributes an
/// independent copy of the perimeter it would have grown on its own.
pub fn perimeter_recursion(r: u32, density: f64) -> f64 {
    perimeter_table(r, density)[r as usize]
}

/// The full table c(0..=r) from the recursion; c(r) enters its own
/// right-hand side with weight zero, so the iteration is explicit.
pub fn perimeter_table(r: u32, density: f64) -> Vec<f64> {
    let mut c = vec![0.0; r as usize + 1];
    for i in 1..=r as usize {
        let mut kinks = 0.0;
        for (k, &ck) in c.iter().enumerate().take(i) {
            kinks += ck * (i - k) as f64;
        }
        c[i] = 4.0 * i as f64 + density * kinks;
    }
    c
}

/// Closed-form solution of the perimeter recursion: the continuum limit is
/// c'' = density * c with c(0) = 0, c'(0) = 4, so
/// c(r) = (4/sqrt(density)) sinh(sqrt(density) r); flat space gives 4r.
pub fn perimeter_closed_form(r: f64, density: f64) -> f64 {
    if density == 0.0 {
        return 4.0 * r;
    }
    let s = density.sqrt();
    4.0 / s * (s * r).sinh()
}

/// Area enclosed by an r-diamond, obtained by summing the closed-form
/// perimeter: a(r) = (4/density)(cosh(sqrt(density) r) - 1). The flat
/// limit is a(r) = 2r^2.
pub fn diamond_area(r: f64, density: f64) -> f64 {
    if density == 0.0 {
        return 2.0 * r * r;
    }
    let s = density.sqrt();
    4.0 / density * ((s * r).cosh() - 1.0)
}

/// Radius at which an expanding diamond covers `fraction` of the total
/// surface area, i.e. the minimal loop length scale: paths of this length
/// started at one end of a handle have significant probability to reach
/// the other end. Asymptotically l ln(n) / sqrt(8) for the one-sided
/// construction and l ln(n) / 4 for the symmetrized one.
pub fn minimal_loop_length_with_fraction(params: &SurfaceParams, fraction: f64) -> f64 {
    assert!(fraction > 0.0 && fraction <= 1.0);
    let d = params.kink_density();
    // Invert a(r) = fraction * l^2 n exactly.
    let target = fraction * params.area();
    ((target * d / 4.0 + 1.0).acosh()) / d.sqrt()
}

/// The minimal loop length at the default covering fraction 1/2.
pub fn minimal_loop_length(params: &SurfaceParams) -> f64 {
    minimal_loop_length_with_fraction(params, 0.5)
}

/// Multiplicative correction to the accuracy threshold from the convoluted
/// topology. Level k of the pairing hierarchy handles chains of scale 3^k;
/// on the curved surface a diamond of radius 3^k encloses area a(3^k)
/// instead of the flat 2 (3^k)^2, shrinking the per-level success factor.
/// The product truncates at the scale of the minimal loop, log_3(l ln n).
pub fn threshold_multiplier(params: &SurfaceParams) -> f64 {
    let d = params.kink_density();
    let l = params.l as f64;
    let k_max = (l * (params.n as f64).ln()).log(3.0).floor() as u32;
    assert!(k_max >= 1, "need log3(l ln n) >= 1");
    let mut log_product = 0.0;
    for k in 1..=k_max {
        let r = 3f64.powi(k as i32);
        let factor = 2.0 * r * r / diamond_area(r, d);
        log_product += r.powf(-BETA) * factor.ln();
    }
    log_product.exp()
}

/// Closed-form approximation to the same correction,
/// 8 exp(-12 (ln n)^(1-beta) / l^beta); a comparison target only.
pub fn threshold_multiplier_closed_form(params: &SurfaceParams) -> f64 {
    let l = params.l as f64;
    let ln_n = (params.n as f64).ln();
    8.0 * (-12.0 * ln_n.powf(1.0 - BETA) / l.powf(BETA)).exp()
}

/// Correction to threshold bounds based on path counting under a global
/// (beta = 1) recovery algorithm: kinks raise the walk valence from 4 to
/// some v with 4 < v < 5, multiplying the bound by 4/v.
pub fn walk_valence_multiplier(v: f64) -> f64 {
    assert!(v > 4.0 && v < 5.0, "kinked-lattice valence lies in (4, 5)");
    4.0 / v
}
