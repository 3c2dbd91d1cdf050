//! Reference implementations shared by the integration tests and the
//! acceptance run. Apart from `half_plane_total`, which assembles a field from
//! the library's diffraction coefficient, none of them call into the crate's
//! tracer or EM code.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;

use emtrace::bvh::intersect_triangle;
use emtrace::em::{utd_diffraction_coefficient, Polarization, WedgeParams};
use emtrace::geometry::Vec3;
use emtrace::scene::Triangle;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const C0: f64 = 299_792_458.0;

/// Triangles scattered in a 40 m cube, edge lengths up to ~6 m.
pub fn random_triangles(seed: u64, n: usize) -> Vec<Triangle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let c = Vec3::new(
            rng.gen_range(-20.0..20.0),
            rng.gen_range(-20.0..20.0),
            rng.gen_range(-20.0..20.0),
        );
        let mut v = || {
            c + Vec3::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            )
        };
        let t = Triangle::new(v(), v(), v(), 0, 0);
        if t.area() > 1e-3 {
            out.push(t);
        }
    }
    out
}

pub fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Nearest hit by testing every triangle; ties go to the lowest id.
pub fn linear_nearest(tris: &[Triangle], o: Vec3, d: Vec3, t_max: f64) -> Option<(u32, f64)> {
    let mut best: Option<(u32, f64)> = None;
    for (i, t) in tris.iter().enumerate() {
        if let Some((th, _, _)) = intersect_triangle(t, o, d) {
            if th > 1e-6 && th < t_max && best.is_none_or(|(_, b)| th < b) {
                best = Some((i as u32, th));
            }
        }
    }
    best
}

fn plane_of(t: &Triangle) -> (Vec3, Vec3) {
    let [a, b, c] = t.vertices;
    ((b - a).cross(c - a).normalized(), a)
}

fn mirror(p: Vec3, t: &Triangle) -> Vec3 {
    let (n, a) = plane_of(t);
    p - n * (2.0 * (p - a).dot(n))
}

/// Barycentric inside test through sub-triangle areas.
fn inside(t: &Triangle, p: Vec3) -> bool {
    let [a, b, c] = t.vertices;
    let n = (b - a).cross(c - a);
    let nn = n.norm_squared();
    let u = (c - b).cross(p - b).dot(n) / nn;
    let v = (a - c).cross(p - c).dot(n) / nn;
    let w = 1.0 - u - v;
    let tol = 1e-9;
    u > tol && v > tol && w > tol
}

/// Point where segment a→b crosses the plane of `t`, as (point, fraction).
fn cross_plane(t: &Triangle, a: Vec3, b: Vec3) -> Option<(Vec3, f64)> {
    let (n, p0) = plane_of(t);
    let da = (a - p0).dot(n);
    let db = (b - p0).dot(n);
    if (da > 0.0) == (db > 0.0) || da == db {
        return None;
    }
    let u = da / (da - db);
    Some((a + (b - a) * u, u))
}

/// Plane-crossing occlusion test that skips the listed triangles.
fn blocked(tris: &[Triangle], a: Vec3, b: Vec3, skip: &[usize]) -> bool {
    tris.iter().enumerate().any(|(i, t)| {
        !skip.contains(&i)
            && cross_plane(t, a, b).is_some_and(|(p, u)| u > 1e-9 && u < 1.0 - 1e-9 && inside(t, p))
    })
}

/// Every specular path with up to `max_r` reflections, found by trying all
/// triangle sequences. Keys are signatures in tx→rx order ("LOS", "R3>R7").
pub fn image_method_paths(
    tris: &[Triangle],
    tx: Vec3,
    rx: Vec3,
    max_r: usize,
) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    if !blocked(tris, tx, rx, &[]) {
        out.insert("LOS".to_string(), tx.distance(rx));
    }
    let mut seq: Vec<usize> = Vec::new();
    enumerate(tris, tx, rx, max_r, &mut seq, &mut out);
    out
}

fn enumerate(
    tris: &[Triangle],
    tx: Vec3,
    rx: Vec3,
    max_r: usize,
    seq: &mut Vec<usize>,
    out: &mut BTreeMap<String, f64>,
) {
    if !seq.is_empty() {
        if let Some(len) = unfold(tris, tx, rx, seq) {
            let sig: Vec<String> = seq.iter().map(|i| format!("R{i}")).collect();
            out.insert(sig.join(">"), len);
        }
    }
    if seq.len() == max_r {
        return;
    }
    for i in 0..tris.len() {
        if seq.last() == Some(&i) {
            continue;
        }
        seq.push(i);
        enumerate(tris, tx, rx, max_r, seq, out);
        seq.pop();
    }
}

fn unfold(tris: &[Triangle], tx: Vec3, rx: Vec3, seq: &[usize]) -> Option<f64> {
    let mut images = vec![tx];
    for &i in seq {
        let last = *images.last().unwrap();
        images.push(mirror(last, &tris[i]));
    }
    let total = rx.distance(*images.last().unwrap());
    // walk back from the receiver toward successive images
    let mut points = vec![rx];
    let mut from = rx;
    for k in (0..seq.len()).rev() {
        let t = &tris[seq[k]];
        let (p, u) = cross_plane(t, from, images[k + 1])?;
        if !(u > 1e-9 && u < 1.0 - 1e-9) || !inside(t, p) {
            return None;
        }
        points.push(p);
        from = p;
    }
    points.push(tx);
    points.reverse();
    for (k, w) in points.windows(2).enumerate() {
        let mut skip = Vec::new();
        if k > 0 {
            skip.push(seq[k - 1]);
        }
        if k < seq.len() {
            skip.push(seq[k]);
        }
        if blocked(tris, w[0], w[1], &skip) {
            return None;
        }
    }
    Some(total)
}

/// Minimizer of a unimodal function on [a, b].
pub fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

#[allow(clippy::too_many_arguments)]
fn simpson<F: Fn(f64) -> Complex64>(
    f: &F,
    a: f64,
    b: f64,
    fa: Complex64,
    fm: Complex64,
    fb: Complex64,
    whole: Complex64,
    tol: f64,
    depth: u32,
) -> Complex64 {
    let m = (a + b) / 2.0;
    let (lm, rm) = ((a + m) / 2.0, (m + b) / 2.0);
    let (flm, frm) = (f(lm), f(rm));
    let left = (fa + flm * 4.0 + fm) * ((m - a) / 6.0);
    let right = (fm + frm * 4.0 + fb) * ((b - m) / 6.0);
    let delta = left + right - whole;
    if depth == 0 || delta.norm() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

pub fn adaptive_simpson<F: Fn(f64) -> Complex64>(f: F, a: f64, b: f64, tol: f64) -> Complex64 {
    let (fa, fb, fm) = (f(a), f(b), f((a + b) / 2.0));
    let whole = (fa + fm * 4.0 + fb) * ((b - a) / 6.0);
    simpson(&f, a, b, fa, fm, fb, whole, tol, 50)
}

/// F(x) = 2j√x e^{jx} ∫_{√x}^∞ e^{−jτ²} dτ, with the path rotated to
/// τ = √x + s·e^{−jπ/4} so the integrand decays like e^{−s²}:
/// F(x) = 2j√x e^{−jπ/4} ∫_0^∞ e^{−s²} e^{−√(2x)(1+j)s} ds.
pub fn transition_quadrature(x: f64) -> Complex64 {
    let a = x.sqrt();
    let k = 2f64.sqrt() * a;
    let integrand = |s: f64| Complex64::from_polar((-s * s - k * s).exp(), -k * s);
    let upper = 7.0f64.min(50.0 / k.max(1e-12)).max(1e-3);
    let i = adaptive_simpson(integrand, 0.0, upper, 1e-13);
    Complex64::new(0.0, 2.0 * a) * Complex64::from_polar(1.0, -PI / 4.0) * i
}

/// Friis free-space loss in dB.
pub fn friis_db(f_ghz: f64, d: f64) -> f64 {
    20.0 * (4.0 * PI * d * f_ghz * 1e9 / C0).log10()
}

/// Flat-earth two-ray received power in dBm with a real reflection
/// coefficient of magnitude `r` and phase π.
pub fn two_ray_dbm(p_tx_dbm: f64, f_ghz: f64, d: f64, h_tx: f64, h_rx: f64, r: f64) -> f64 {
    let k = 2.0 * PI * f_ghz * 1e9 / C0;
    let d1 = (d * d + (h_tx - h_rx).powi(2)).sqrt();
    let d2 = (d * d + (h_tx + h_rx).powi(2)).sqrt();
    let field = Complex64::from_polar(1.0 / d1, -k * d1) - Complex64::from_polar(r / d2, -k * d2);
    p_tx_dbm - friis_db(f_ghz, 1.0) + 20.0 * field.norm().log10()
}

/// Distances in [lo, hi] where the two-ray direct and reflected terms are in
/// antiphase (path difference a whole number of wavelengths).
pub fn two_ray_nulls(f_ghz: f64, lo: f64, hi: f64, h_tx: f64, h_rx: f64) -> Vec<f64> {
    let lambda = C0 / (f_ghz * 1e9);
    let diff =
        |d: f64| (d * d + (h_tx + h_rx).powi(2)).sqrt() - (d * d + (h_tx - h_rx).powi(2)).sqrt();
    let mut out = Vec::new();
    let m_lo = (diff(hi) / lambda).ceil() as i64;
    let m_hi = (diff(lo) / lambda).floor() as i64;
    for m in m_lo..=m_hi {
        let target = m as f64 * lambda;
        // diff is decreasing in d
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let mid = (a + b) / 2.0;
            if diff(mid) > target {
                a = mid;
            } else {
                b = mid;
            }
        }
        out.push((a + b) / 2.0);
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Total field of a soft half-plane (face along φ = 0) lit by a line of
/// sight source at distance `sp` and angle `phi_i` from the edge, observed at
/// distance `s` and angle `phi_o`.
pub fn half_plane_total(sp: f64, phi_i: f64, s: f64, phi_o: f64, k: f64) -> Complex64 {
    let src = (sp * phi_i.cos(), sp * phi_i.sin());
    let obs = (s * phi_o.cos(), s * phi_o.sin());
    let spherical = |r: f64| Complex64::from_polar(1.0 / r, -k * r);
    let mut e = Complex64::new(0.0, 0.0);
    if phi_o < PI + phi_i {
        e += spherical(((src.0 - obs.0).powi(2) + (src.1 - obs.1).powi(2)).sqrt());
    }
    if phi_o < PI - phi_i {
        let img = (src.0, -src.1);
        e -= spherical(((img.0 - obs.0).powi(2) + (img.1 - obs.1).powi(2)).sqrt());
    }
    let w = WedgeParams {
        n_wedge: 2.0,
        phi_incidence: phi_i,
        phi_observation: phi_o,
        l: s * sp / (s + sp),
        polarization: Polarization::Soft,
        sin_beta0: 1.0,
    };
    let d = utd_diffraction_coefficient(&w, k).unwrap();
    e + spherical(sp) * d * (sp / (s * (s + sp))).sqrt() * Complex64::from_polar(1.0, -k * s)
}
