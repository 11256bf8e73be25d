use rand::Rng;

use super::City;

/// One draw of the training-time data augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Augmentation {
    /// Multiplies positions and every drive time.
    pub space_scale: f64,
    /// Rotation about the centroid, radians.
    pub rotation: f64,
    /// Multiplies every demand entry.
    pub demand_scale: f64,
}

impl Augmentation {
    pub const IDENTITY: Augmentation = Augmentation {
        space_scale: 1.0,
        rotation: 0.0,
        demand_scale: 1.0,
    };

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Augmentation {
            space_scale: rng.gen_range(0.4..=1.6),
            rotation: rng.gen_range(0.0..std::f64::consts::TAU),
            demand_scale: rng.gen_range(0.8..=1.2),
        }
    }
}

pub fn augment<R: Rng + ?Sized>(city: &City, rng: &mut R) -> City {
    augment_with(city, Augmentation::sample(rng))
}

/// Applies a fixed augmentation. Shortest paths are unchanged by a uniform
/// scale, so the cached table is rescaled rather than recomputed.
pub fn augment_with(city: &City, aug: Augmentation) -> City {
    let n = city.len() as f64;
    let (cx, cy) = city
        .positions()
        .iter()
        .fold((0.0, 0.0), |(x, y), p| (x + p[0] / n, y + p[1] / n));
    let (sin, cos) = aug.rotation.sin_cos();
    let positions = city
        .positions()
        .iter()
        .map(|p| {
            let (dx, dy) = (p[0] - cx, p[1] - cy);
            let (rx, ry) = (dx * cos - dy * sin, dx * sin + dy * cos);
            [cx + aug.space_scale * rx, cy + aug.space_scale * ry]
        })
        .collect();
    city.with_transform(positions, aug.space_scale, aug.demand_scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::city::{generate_city, CityKind};
    use crate::rng;

    fn pairwise(c: &City) -> Vec<f64> {
        let p = c.positions();
        let mut out = Vec::new();
        for a in p {
            for b in p {
                out.push(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
            }
        }
        out
    }

    fn city() -> City {
        generate_city(CityKind::NearestNeighbor4, 15, 0.0, &mut rng::from_seed(3)).unwrap()
    }

    #[test]
    fn identity_leaves_city_unchanged() {
        let c = city();
        let a = augment_with(&c, Augmentation::IDENTITY);
        assert_eq!(a.demand_matrix(), c.demand_matrix());
        assert_eq!(a.paths().times(), c.paths().times());
        for (p, q) in a.positions().iter().zip(c.positions()) {
            assert!((p[0] - q[0]).abs() < 1e-6 && (p[1] - q[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn doubling_scale_doubles_times() {
        let c = city();
        let a = augment_with(
            &c,
            Augmentation {
                space_scale: 2.0,
                ..Augmentation::IDENTITY
            },
        );
        for (x, y) in a.paths().times().iter().zip(c.paths().times()) {
            assert_eq!(*x, 2.0 * y);
        }
    }

    #[test]
    fn distances_scale_by_space_factor() {
        let c = city();
        let mut r = rng::from_seed(11);
        for _ in 0..5 {
            let aug = Augmentation::sample(&mut r);
            assert!((0.4..=1.6).contains(&aug.space_scale));
            assert!((0.8..=1.2).contains(&aug.demand_scale));
            let a = augment_with(&c, aug);
            for (x, y) in pairwise(&a).iter().zip(pairwise(&c)) {
                assert!((x - aug.space_scale * y).abs() <= 1e-9 * y.max(1.0));
            }
        }
    }

    #[test]
    fn rotation_keeps_travel_times() {
        let c = city();
        let a = augment_with(
            &c,
            Augmentation {
                rotation: 1.234,
                ..Augmentation::IDENTITY
            },
        );
        assert_eq!(a.paths().times(), c.paths().times());
    }
}
