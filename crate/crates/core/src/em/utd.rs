//! Uniform theory of diffraction for a perfectly conducting wedge.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use num_complex::Complex64;

use super::{ComplexAmplitude, EmError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Polarization {
    #[default]
    Soft,
    Hard,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WedgeParams {
    /// Exterior angle / π, in (1, 2].
    pub n_wedge: f64,
    pub phi_incidence: f64,
    pub phi_observation: f64,
    /// Distance parameter, m.
    pub l: f64,
    pub polarization: Polarization,
    /// Sine of the angle between the incident ray and the edge (1 at normal incidence).
    pub sin_beta0: f64,
}

impl WedgeParams {
    fn validate(&self) -> Result<(), EmError> {
        let n = self.n_wedge;
        if !(n > 1.0 && n <= 2.0 + 1e-12) {
            return Err(EmError::Domain(format!(
                "wedge n must be in (1, 2], got {n}"
            )));
        }
        let top = n * PI + 1e-9;
        for (name, phi) in [
            ("incidence", self.phi_incidence),
            ("observation", self.phi_observation),
        ] {
            if !(phi >= -1e-9 && phi <= top) {
                return Err(EmError::Domain(format!(
                    "{name} angle {phi} outside the wedge [0, {}]",
                    n * PI
                )));
            }
        }
        if !(self.l > 0.0 && self.l.is_finite()) {
            return Err(EmError::Domain(format!(
                "distance parameter must be > 0, got {}",
                self.l
            )));
        }
        if !(self.sin_beta0 > 0.0 && self.sin_beta0 <= 1.0 + 1e-12) {
            return Err(EmError::Domain(format!(
                "sin(beta0) must be in (0, 1], got {}",
                self.sin_beta0
            )));
        }
        Ok(())
    }
}

const SERIES_LIMIT: f64 = 1.5;
const EPS: f64 = 1e-15;
const MAX_ITER: usize = 200;

/// Fresnel integrals C(u) and S(u) for u ≥ 0 by power series.
fn fresnel_series(u: f64) -> (f64, f64) {
    if u < 1e-150 {
        return (u, 0.0);
    }
    let fact = FRAC_PI_2 * u * u;
    let mut sum_c = u;
    let mut sum_s = 0.0;
    let mut sum = 0.0;
    let mut sign = 1.0;
    let mut term = u;
    let mut n = 3.0;
    let mut odd = true;
    for k in 1..MAX_ITER {
        term *= fact / k as f64;
        sum += sign * term / n;
        let test = sum.abs() * EPS;
        if odd {
            sign = -sign;
            sum_s = sum;
            sum = sum_c;
        } else {
            sum_c = sum;
            sum = sum_s;
        }
        if term < test {
            break;
        }
        odd = !odd;
        n += 2.0;
    }
    (sum_c, sum_s)
}

/// Continued fraction h(u) with ∫_u^∞ e^{iπt²/2} dt = (1+i)/2 · e^{iπu²/2} · h(u).
fn fresnel_tail_factor(u: f64) -> Complex64 {
    let pix2 = PI * u * u;
    let mut b = Complex64::new(1.0, -pix2);
    let mut cc = Complex64::new(1.0 / 1e-300, 0.0);
    let mut d = b.inv();
    let mut h = d;
    let mut n = -1.0;
    for _ in 2..MAX_ITER {
        n += 2.0;
        let a = -n * (n + 1.0);
        b += 4.0;
        d = (d * a + b).inv();
        cc = b + cc.inv() * a;
        let del = cc * d;
        h *= del;
        if (del - 1.0).norm() < EPS {
            break;
        }
    }
    h * Complex64::new(u, -u)
}

/// Kouyoumjian–Pathak transition function
/// F(x) = 2j·√x·e^{jx}·∫_{√x}^∞ e^{−jτ²} dτ.
pub fn utd_transition_function(x: f64) -> Result<ComplexAmplitude, EmError> {
    if x.is_nan() || x < 0.0 {
        return Err(EmError::Domain(format!(
            "transition function needs x >= 0, got {x}"
        )));
    }
    if x.is_infinite() {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let sx = x.sqrt();
    let u = (2.0 * x / PI).sqrt();
    let scale = Complex64::new(0.0, 2.0 * sx * FRAC_PI_2.sqrt());
    let half = Complex64::new(0.5, 0.5);
    if u <= SERIES_LIMIT {
        let (c, s) = fresnel_series(u);
        let tail = (half - Complex64::new(c, s)).conj();
        Ok(scale * Complex64::from_polar(1.0, x) * tail)
    } else {
        // e^{jx} cancels against the tail's own phase
        Ok(scale * (half * fresnel_tail_factor(u)).conj())
    }
}

/// cot(θ/2n)·F(kL·a(θ)), with the small-ε limit near shadow and reflection boundaries.
fn term(theta: f64, n: f64, kl: f64) -> Complex64 {
    let m = (theta / (2.0 * PI * n)).round();
    let eps = theta - 2.0 * PI * n * m;
    let e4 = Complex64::from_polar(1.0, FRAC_PI_4);
    if eps.abs() < 1e-6 {
        let sgn = if eps > 0.0 {
            1.0
        } else if eps < 0.0 {
            -1.0
        } else {
            0.0
        };
        return (Complex64::new((2.0 * PI * kl).sqrt() * sgn, 0.0) - e4 * (2.0 * kl * eps))
            * e4
            * n;
    }
    let a = 2.0 * (eps / 2.0).sin().powi(2);
    let f = utd_transition_function(kl * a).unwrap_or(Complex64::new(1.0, 0.0));
    f / (theta / (2.0 * n)).tan()
}

/// Four-term wedge diffraction coefficient.
pub fn utd_diffraction_coefficient(w: &WedgeParams, k: f64) -> Result<ComplexAmplitude, EmError> {
    w.validate()?;
    if k.is_nan() || k <= 0.0 {
        return Err(EmError::Domain(format!("wavenumber must be > 0, got {k}")));
    }
    let n = w.n_wedge;
    let kl = k * w.l;
    let diff = w.phi_observation - w.phi_incidence;
    let sum = w.phi_observation + w.phi_incidence;
    let direct = term(PI + diff, n, kl) + term(PI - diff, n, kl);
    let image = term(PI + sum, n, kl) + term(PI - sum, n, kl);
    let bracket = match w.polarization {
        Polarization::Soft => direct - image,
        Polarization::Hard => direct + image,
    };
    let pre =
        -Complex64::from_polar(1.0, -FRAC_PI_4) / (2.0 * n * (2.0 * PI * k).sqrt() * w.sin_beta0);
    Ok(pre * bracket)
}

/// Loss in dB of a diffraction hop relative to free-space spreading over the
/// unfolded length, for incidence distance `s_in` and diffracted distance `s_out`.
pub fn diffraction_loss(d: ComplexAmplitude, s_in: f64, s_out: f64) -> f64 {
    let spread = ((s_in + s_out) / (s_in * s_out)).sqrt();
    -20.0 * (d.norm() * spread).log10()
}
