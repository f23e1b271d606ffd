//! Blockage field construction and line-of-sight queries.
//!
//! Obstacles are rectangles on a 2-D plane; a transmitter-receiver segment
//! is LOS iff it intersects none of them. The field is immutable after
//! generation and safe to query from anywhere.

use rand::Rng;
use rand_distr::{Distribution, Poisson, Uniform};
use serde::{Deserialize, Serialize};

use crate::config::{CountMode, OrientationMode};

/// 2-D point/vector in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Vec2) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// A rectangular obstacle.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Rect {
    pub center: Vec2,
    /// Half extents along the rect's local x/y axes.
    pub half_extents: Vec2,
    /// Rotation of the local frame (radians, 0 = axis-aligned).
    pub orientation: f64,
}

impl Rect {
    pub fn axis_aligned(center: Vec2, hx: f64, hy: f64) -> Self {
        Self { center, half_extents: Vec2::new(hx, hy), orientation: 0.0 }
    }

    /// Corners in world coordinates (counter-clockwise).
    pub fn corners(&self) -> [Vec2; 4] {
        let (s, c) = self.orientation.sin_cos();
        let (hx, hy) = (self.half_extents.x, self.half_extents.y);
        let rot = |lx: f64, ly: f64| Vec2 {
            x: self.center.x + c * lx - s * ly,
            y: self.center.y + s * lx + c * ly,
        };
        [rot(-hx, -hy), rot(hx, -hy), rot(hx, hy), rot(-hx, hy)]
    }

    /// True iff the segment a-b has a nonempty intersection with the
    /// (closed) rectangle. Uses the slab method in the rect's local frame.
    pub fn intersects_segment(&self, a: Vec2, b: Vec2) -> bool {
        // Transform into the local frame where the rect is an AABB.
        let (s, c) = self.orientation.sin_cos();
        let to_local = |p: Vec2| {
            let dx = p.x - self.center.x;
            let dy = p.y - self.center.y;
            Vec2 { x: c * dx + s * dy, y: -s * dx + c * dy }
        };
        let la = to_local(a);
        let lb = to_local(b);

        let mut t0 = 0.0f64;
        let mut t1 = 1.0f64;
        for (p0, d, h) in [
            (la.x, lb.x - la.x, self.half_extents.x),
            (la.y, lb.y - la.y, self.half_extents.y),
        ] {
            if d == 0.0 {
                if p0 < -h || p0 > h {
                    return false;
                }
            } else {
                let mut ta = (-h - p0) / d;
                let mut tb = (h - p0) / d;
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                }
                t0 = t0.max(ta);
                t1 = t1.min(tb);
                if t0 > t1 {
                    return false;
                }
            }
        }
        true
    }
}

/// The set of obstacles scattered over the area.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockageField {
    pub rects: Vec<Rect>,
    /// Area bounds (width, height) in meters.
    pub bounds: Vec2,
    /// Density the field was generated at (blockages/km^2).
    pub density_per_km2: f64,
}

impl BlockageField {
    pub fn empty(bounds: Vec2) -> Self {
        Self { rects: Vec::new(), bounds, density_per_km2: 0.0 }
    }

    /// Export as CSV (`cx,cy,hx,hy,orientation_rad` per rect).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cx,cy,hx,hy,orientation_rad\n");
        for r in &self.rects {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.center.x, r.center.y, r.half_extents.x, r.half_extents.y, r.orientation
            ));
        }
        out
    }
}

/// Parameters for field generation.
#[derive(Debug, Clone, Copy)]
pub struct FieldParams {
    pub density_per_km2: f64,
    pub bounds: Vec2,
    /// Full-dimension range (m); half extents are half of a draw from this.
    pub dim_range: (f64, f64),
    pub orientation: OrientationMode,
    pub count_mode: CountMode,
}

/// Scatter rectangles over the bounds. The count is Poisson with mean
/// density x area (or exactly that mean rounded, in fixed mode); centers
/// are uniform; each full dimension is uniform over the configured range.
pub fn generate_field(params: &FieldParams, rng: &mut impl Rng) -> BlockageField {
    let area_km2 = params.bounds.x * params.bounds.y / 1.0e6;
    let mean = params.density_per_km2 * area_km2;
    let count = match params.count_mode {
        CountMode::Fixed => mean.round() as usize,
        CountMode::Poisson => {
            if mean > 0.0 {
                Poisson::new(mean).expect("validated mean").sample(rng) as usize
            } else {
                0
            }
        }
    };

    let ux = Uniform::new(0.0, params.bounds.x).expect("positive bounds");
    let uy = Uniform::new(0.0, params.bounds.y).expect("positive bounds");
    let (dmin, dmax) = params.dim_range;
    let udim = Uniform::new(dmin, dmax).expect("validated dim range");

    let mut rects = Vec::with_capacity(count);
    for _ in 0..count {
        let center = Vec2::new(ux.sample(rng), uy.sample(rng));
        let hx = udim.sample(rng) / 2.0;
        let hy = udim.sample(rng) / 2.0;
        let orientation = match params.orientation {
            OrientationMode::AxisAligned => 0.0,
            OrientationMode::Uniform => rng.random_range(0.0..std::f64::consts::PI),
        };
        rects.push(Rect { center, half_extents: Vec2::new(hx, hy), orientation });
    }
    BlockageField { rects, bounds: params.bounds, density_per_km2: params.density_per_km2 }
}

/// True iff the segment tx-rx intersects no obstacle in the field.
pub fn is_los(tx: Vec2, rx: Vec2, field: &BlockageField) -> bool {
    field.rects.iter().all(|r| !r.intersects_segment(tx, rx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn params(density: f64) -> FieldParams {
        FieldParams {
            density_per_km2: density,
            bounds: Vec2::new(100.0, 100.0),
            dim_range: (1.0, 2.0),
            orientation: OrientationMode::AxisAligned,
            count_mode: CountMode::Poisson,
        }
    }

    #[test]
    fn zero_density_gives_empty_field() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let f = generate_field(&params(0.0), &mut rng);
        assert!(f.rects.is_empty());
        assert!(is_los(Vec2::new(0.0, 0.0), Vec2::new(50.0, 50.0), &f));
    }

    #[test]
    fn poisson_count_mean_matches_density() {
        // 4000/km^2 over 0.01 km^2 => mean 40; the Monte Carlo mean over
        // 1000 seeds must land within 40 +/- 1 (5 sigma of the mean).
        let mut total = 0usize;
        for seed in 0..1000u64 {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            total += generate_field(&params(4000.0), &mut rng).rects.len();
        }
        let mean = total as f64 / 1000.0;
        assert!((mean - 40.0).abs() < 1.0, "mean {mean}");
    }

    #[test]
    fn expected_count_scales_with_density() {
        let mut total = 0usize;
        for seed in 0..1000u64 {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            total += generate_field(&params(1000.0), &mut rng).rects.len();
        }
        let mean = total as f64 / 1000.0;
        assert!((mean - 10.0).abs() < 0.5, "mean {mean}");
    }

    #[test]
    fn fixed_count_mode_is_exact() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let f = generate_field(
            &FieldParams { count_mode: CountMode::Fixed, ..params(4000.0) },
            &mut rng,
        );
        assert_eq!(f.rects.len(), 40);
    }

    #[test]
    fn rect_on_midpoint_blocks() {
        let mut f = BlockageField::empty(Vec2::new(100.0, 100.0));
        f.rects.push(Rect::axis_aligned(Vec2::new(50.0, 50.0), 0.5, 0.5));
        assert!(!is_los(Vec2::new(40.0, 50.0), Vec2::new(60.0, 50.0), &f));
        // A parallel segment off to the side stays clear.
        assert!(is_los(Vec2::new(40.0, 52.0), Vec2::new(60.0, 52.0), &f));
    }

    #[test]
    fn rotated_rect_blocks() {
        let mut f = BlockageField::empty(Vec2::new(100.0, 100.0));
        f.rects.push(Rect {
            center: Vec2::new(50.0, 50.0),
            half_extents: Vec2::new(1.0, 0.1),
            orientation: std::f64::consts::FRAC_PI_2,
        });
        // Rect is now tall and thin: a horizontal segment through it is blocked,
        // a segment passing beside the thin axis is not.
        assert!(!is_los(Vec2::new(40.0, 50.0), Vec2::new(60.0, 50.0), &f));
        assert!(is_los(Vec2::new(49.5, 40.0), Vec2::new(49.5, 60.0), &f));
    }

    #[test]
    fn endpoint_inside_rect_blocks() {
        let mut f = BlockageField::empty(Vec2::new(100.0, 100.0));
        f.rects.push(Rect::axis_aligned(Vec2::new(50.0, 50.0), 1.0, 1.0));
        assert!(!is_los(Vec2::new(50.0, 50.0), Vec2::new(80.0, 50.0), &f));
    }

    proptest! {
        #[test]
        fn los_is_symmetric(ax in 0.0..100.0, ay in 0.0..100.0,
                            bx in 0.0..100.0, by in 0.0..100.0,
                            seed in 0u64..64) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let f = generate_field(&params(4000.0), &mut rng);
            let a = Vec2::new(ax, ay);
            let b = Vec2::new(bx, by);
            prop_assume!(a != b);
            prop_assert_eq!(is_los(a, b, &f), is_los(b, a, &f));
        }

        #[test]
        fn adding_rect_never_restores_los(ax in 0.0..100.0, ay in 0.0..100.0,
                                          bx in 0.0..100.0, by in 0.0..100.0,
                                          cx in 0.0..100.0, cy in 0.0..100.0,
                                          seed in 0u64..64) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let mut f = generate_field(&params(2000.0), &mut rng);
            let a = Vec2::new(ax, ay);
            let b = Vec2::new(bx, by);
            prop_assume!(a != b);
            let before = is_los(a, b, &f);
            f.rects.push(Rect::axis_aligned(Vec2::new(cx, cy), 0.8, 0.6));
            let after = is_los(a, b, &f);
            // LOS may only flip true -> false.
            prop_assert!(before || !after);
        }

        #[test]
        fn removing_nonintersecting_rect_preserves_answer(
            ax in 0.0..100.0, ay in 0.0..100.0,
            bx in 0.0..100.0, by in 0.0..100.0,
            seed in 0u64..64)
        {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let f = generate_field(&params(4000.0), &mut rng);
            let a = Vec2::new(ax, ay);
            let b = Vec2::new(bx, by);
            prop_assume!(a != b);
            let baseline = is_los(a, b, &f);
            for (i, r) in f.rects.iter().enumerate() {
                if !r.intersects_segment(a, b) {
                    let mut g = f.clone();
                    g.rects.remove(i);
                    prop_assert_eq!(is_los(a, b, &g), baseline);
                }
            }
        }
    }
}
