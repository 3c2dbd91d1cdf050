use crate::geometry::Vec3;

/// Axis-aligned bounding box. The empty box has `min = +inf`, `max = -inf`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Default for Aabb {
    fn default() -> Self {
        Self::empty()
    }
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Aabb { min, max }
    }

    pub fn empty() -> Self {
        Aabb {
            min: Vec3::splat(f64::INFINITY),
            max: Vec3::splat(f64::NEG_INFINITY),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x || self.min.y > self.max.y || self.min.z > self.max.z
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb {
            min: self.min.min(o.min),
            max: self.max.max(o.max),
        }
    }

    pub fn grow(&mut self, p: Vec3) {
        self.min = self.min.min(p);
        self.max = self.max.max(p);
    }

    pub fn inflated(&self, r: f64) -> Aabb {
        Aabb {
            min: self.min - Vec3::splat(r),
            max: self.max + Vec3::splat(r),
        }
    }

    pub fn extent(&self) -> Vec3 {
        if self.is_empty() {
            Vec3::ZERO
        } else {
            self.max - self.min
        }
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn surface_area(&self) -> f64 {
        let e = self.extent();
        2.0 * (e.x * e.y + e.y * e.z + e.z * e.x)
    }

    pub fn contains(&self, o: &Aabb) -> bool {
        o.is_empty()
            || (self.min.x <= o.min.x
                && self.min.y <= o.min.y
                && self.min.z <= o.min.z
                && self.max.x >= o.max.x
                && self.max.y >= o.max.y
                && self.max.z >= o.max.z)
    }

    pub fn largest_axis(&self) -> usize {
        let e = self.extent();
        if e.x >= e.y && e.x >= e.z {
            0
        } else if e.y >= e.z {
            1
        } else {
            2
        }
    }

    /// Parametric overlap of the ray `origin + t·dir` with the box, clipped to
    /// `[t_min, t_max]`. `inv_dir` is the componentwise reciprocal of `dir`.
    /// Slightly conservative so that hits on the box surface are never lost.
    #[inline]
    pub fn ray_range(&self, origin: Vec3, inv_dir: Vec3, t_min: f64, t_max: f64) -> Option<f64> {
        let mut lo = t_min;
        let mut hi = t_max;
        for a in 0..3 {
            let pad_lo = 1e-9 * (1.0 + self.min[a].abs());
            let pad_hi = 1e-9 * (1.0 + self.max[a].abs());
            let t1 = (self.min[a] - pad_lo - origin[a]) * inv_dir[a];
            let t2 = (self.max[a] + pad_hi - origin[a]) * inv_dir[a];
            // f64::min/max drop NaN (ray in the slab plane), keeping the test conservative
            lo = lo.max(t1.min(t2));
            hi = hi.min(t1.max(t2));
        }
        if lo <= hi {
            Some(lo)
        } else {
            None
        }
    }

    /// True when the segment `origin + t·dir`, `t ∈ [0, t_max]`, touches the box.
    pub fn hits_segment(&self, origin: Vec3, dir: Vec3, t_max: f64) -> bool {
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        self.ray_range(origin, inv, 0.0, t_max).is_some()
    }
}
