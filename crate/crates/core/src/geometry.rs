//! Scene layout and the BS–SP–STCM triangle.
//!
//! Angles are measured in the sensing plane (y = 0). The BS looks along +z,
//! the STCM looks back into the scene, and both angles are signed positive
//! toward +x.

use nalgebra::{Matrix2, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Smallest |alpha + xi| for which the triangle is solved.
pub const MIN_TRIANGLE_ANGLE: f64 = 1e-3;

const COINCIDENCE_TOL: f64 = 1e-9;

/// Rectangular extent of the sensing plane, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl PlaneBounds {
    pub fn contains(&self, q: &Vec3) -> bool {
        q.x >= self.x_min && q.x <= self.x_max && q.z >= self.z_min && q.z <= self.z_max
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGeometry {
    bs_center: Vec3,
    stcm_center: Vec3,
    bounds: PlaneBounds,
}

impl SceneGeometry {
    /// Both terminals must lie in the plane and the STCM must sit further
    /// along +z than the BS so that the two boresights face each other.
    pub fn new(bs_center: Vec3, stcm_center: Vec3, bounds: PlaneBounds) -> Result<Self> {
        if bs_center.y != 0.0 || stcm_center.y != 0.0 {
            return Err(Error::InvalidGeometry("terminals must lie in the y = 0 plane".into()));
        }
        if stcm_center.z <= bs_center.z {
            return Err(Error::InvalidGeometry("STCM must be placed at larger z than the BS".into()));
        }
        if !(bounds.x_min < bounds.x_max && bounds.z_min < bounds.z_max) {
            return Err(Error::InvalidGeometry("empty plane bounds".into()));
        }
        Ok(Self { bs_center, stcm_center, bounds })
    }

    /// BS at the origin, STCM 100 m away on the z-axis, 160×100 m² area.
    pub fn table_one() -> Self {
        Self::new(
            Vec3::zeros(),
            Vec3::new(0.0, 0.0, 100.0),
            PlaneBounds { x_min: -80.0, x_max: 80.0, z_min: 0.0, z_max: 100.0 },
        )
        .expect("default geometry is valid")
    }

    pub fn bs_center(&self) -> Vec3 {
        self.bs_center
    }

    pub fn stcm_center(&self) -> Vec3 {
        self.stcm_center
    }

    pub fn bounds(&self) -> PlaneBounds {
        self.bounds
    }

    /// BS–STCM separation d_S.
    pub fn baseline(&self) -> f64 {
        (self.stcm_center - self.bs_center).norm()
    }

    /// Angle of the STCM as seen from the BS.
    pub fn stcm_angle_at_bs(&self) -> f64 {
        bs_frame_angle(&self.stcm_center, &self.bs_center)
    }

    /// Angle of the BS as seen from the STCM.
    pub fn bs_angle_at_stcm(&self) -> f64 {
        stcm_frame_angle(&self.bs_center, &self.stcm_center)
    }

    /// Distances (BS→q, STCM→q).
    pub fn distances(&self, q: &Vec3) -> Result<(f64, f64)> {
        self.check_point(q)?;
        Ok(((q - self.bs_center).norm(), (q - self.stcm_center).norm()))
    }

    fn check_point(&self, q: &Vec3) -> Result<()> {
        if (q - self.bs_center).norm() < COINCIDENCE_TOL
            || (q - self.stcm_center).norm() < COINCIDENCE_TOL
        {
            return Err(Error::DegeneratePoint);
        }
        Ok(())
    }
}

fn bs_frame_angle(q: &Vec3, bs: &Vec3) -> f64 {
    (q.x - bs.x).atan2(q.z - bs.z)
}

fn stcm_frame_angle(q: &Vec3, stcm: &Vec3) -> f64 {
    (q.x - stcm.x).atan2((q.z - stcm.z).abs())
}

/// Angles of a scene point: `alpha` at the BS, `xi` at the STCM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnglePair {
    pub alpha: f64,
    pub xi: f64,
}

/// Scatter point class. The discriminant doubles as the hypothesis index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpKind {
    Absent = 0,
    HumanLike = 1,
    ObjectLike = 2,
}

impl SpKind {
    pub const ALL: [SpKind; 3] = [SpKind::Absent, SpKind::HumanLike, SpKind::ObjectLike];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            SpKind::Absent => "absent",
            SpKind::HumanLike => "human_like",
            SpKind::ObjectLike => "object_like",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterPoint {
    pub position: Vec3,
    /// Amplitude reflectivity σ_r; σ_r² is the RCS in m².
    pub rcs_sqrt: f64,
    pub kind: SpKind,
}

impl ScatterPoint {
    pub fn new(position: Vec3, rcs_sqrt: f64, kind: SpKind) -> Result<Self> {
        if position.y != 0.0 {
            return Err(Error::InvalidGeometry("scatter points must have y = 0".into()));
        }
        if !(rcs_sqrt >= 0.0) || ((rcs_sqrt == 0.0) != (kind == SpKind::Absent)) {
            return Err(Error::InvalidGeometry(format!(
                "rcs amplitude {rcs_sqrt} inconsistent with kind {kind:?}"
            )));
        }
        Ok(Self { position, rcs_sqrt, kind })
    }

    /// Builds a point from an RCS given in dB·m².
    pub fn from_rcs_db(position: Vec3, rcs_db: f64, kind: SpKind) -> Result<Self> {
        Self::new(position, crate::db_to_amplitude(rcs_db), kind)
    }

    /// Same as [`ScatterPoint::new`] plus a check against the plane bounds.
    pub fn new_in(g: &SceneGeometry, position: Vec3, rcs_sqrt: f64, kind: SpKind) -> Result<Self> {
        if !g.bounds().contains(&position) {
            return Err(Error::InvalidGeometry(format!("point {position:?} outside plane bounds")));
        }
        Self::new(position, rcs_sqrt, kind)
    }
}

pub fn angles_from_position(q: &Vec3, g: &SceneGeometry) -> Result<AnglePair> {
    g.check_point(q)?;
    Ok(AnglePair {
        alpha: bs_frame_angle(q, &g.bs_center),
        xi: stcm_frame_angle(q, &g.stcm_center),
    })
}

/// Solves the triangle by the law of sines. The interior angles are taken
/// relative to the BS–STCM baseline, so an off-axis STCM is handled too.
pub fn position_from_angles(a: &AnglePair, g: &SceneGeometry) -> Result<Vec3> {
    let at_bs = a.alpha - g.stcm_angle_at_bs();
    let at_stcm = a.xi - g.bs_angle_at_stcm();
    let sum = at_bs + at_stcm;
    if sum.abs() < MIN_TRIANGLE_ANGLE {
        return Err(Error::DegenerateTriangle { sum });
    }
    let d_r = g.baseline() * at_stcm.sin() / sum.sin();
    if !(d_r > 0.0) || !d_r.is_finite() {
        return Err(Error::DegenerateTriangle { sum });
    }
    let b = g.bs_center;
    Ok(Vec3::new(b.x + d_r * a.alpha.sin(), 0.0, b.z + d_r * a.alpha.cos()))
}

/// Rows are the gradients of alpha and xi with respect to (x, z).
pub fn jacobian_angles_to_position(q: &Vec3, g: &SceneGeometry) -> Result<Matrix2<f64>> {
    g.check_point(q)?;
    let (bx, bz) = (q.x - g.bs_center.x, q.z - g.bs_center.z);
    let r2 = bx * bx + bz * bz;
    let (sx, sz) = (q.x - g.stcm_center.x, q.z - g.stcm_center.z);
    let s2 = sx * sx + sz * sz;
    // xi uses |Δz|; its z-derivative follows the sign of Δz.
    let sign = if sz > 0.0 { 1.0 } else { -1.0 };
    Ok(Matrix2::new(
        bz / r2,
        -bx / r2,
        sz.abs() / s2,
        -sign * sx / s2,
    ))
}

/// Regular lattice over the plane bounds. Points are ordered x-major:
/// index = ix · n_z + iz.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneGrid {
    xs: Vec<f64>,
    zs: Vec<f64>,
}

impl PlaneGrid {
    pub fn new(bounds: &PlaneBounds, resolution: f64) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::OutOfRange { name: "grid resolution", value: resolution });
        }
        let axis = |lo: f64, hi: f64| -> Vec<f64> {
            let n = ((hi - lo) / resolution + 1e-9).floor() as usize;
            (0..=n).map(|i| lo + i as f64 * resolution).collect()
        };
        Ok(Self { xs: axis(bounds.x_min, bounds.x_max), zs: axis(bounds.z_min, bounds.z_max) })
    }

    pub fn from_axes(xs: Vec<f64>, zs: Vec<f64>) -> Self {
        Self { xs, zs }
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn zs(&self) -> &[f64] {
        &self.zs
    }

    pub fn len(&self) -> usize {
        self.xs.len() * self.zs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, index: usize) -> Vec3 {
        let nz = self.zs.len();
        Vec3::new(self.xs[index / nz], 0.0, self.zs[index % nz])
    }

    pub fn points(&self) -> impl Iterator<Item = Vec3> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g() -> SceneGeometry {
        SceneGeometry::table_one()
    }

    #[test]
    fn table_one_grid_has_161_by_101_points() {
        let g = PlaneGrid::new(&SceneGeometry::table_one().bounds(), 1.0).unwrap();
        assert_eq!((g.xs().len(), g.zs().len()), (161, 101));
        assert_eq!(g.point(0), Vec3::new(-80.0, 0.0, 0.0));
        assert_eq!(g.point(102), Vec3::new(-79.0, 0.0, 1.0));
        assert!(PlaneGrid::new(&SceneGeometry::table_one().bounds(), 0.0).is_err());
    }

    #[test]
    fn axis_point_has_zero_angles() {
        let a = angles_from_position(&Vec3::new(0.0, 0.0, 50.0), &g()).unwrap();
        assert_eq!(a.alpha, 0.0);
        assert_eq!(a.xi, 0.0);
    }

    #[test]
    fn diagonal_point_is_forty_five_degrees() {
        let a = angles_from_position(&Vec3::new(50.0, 0.0, 50.0), &g()).unwrap();
        assert!((a.alpha - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn angles_match_arctangent_oracle() {
        let a = angles_from_position(&Vec3::new(30.0, 0.0, 40.0), &g()).unwrap();
        assert!((a.alpha - 0.75f64.atan()).abs() < 1e-15);
        assert!((a.xi - 0.5f64.atan()).abs() < 1e-15);
        assert!((a.alpha - 0.6435).abs() < 1e-4 && (a.xi - 0.4636).abs() < 1e-4);
    }

    #[test]
    fn terminals_are_degenerate() {
        assert!(matches!(angles_from_position(&Vec3::zeros(), &g()), Err(Error::DegeneratePoint)));
        assert!(matches!(
            angles_from_position(&Vec3::new(0.0, 0.0, 100.0), &g()),
            Err(Error::DegeneratePoint)
        ));
        assert!(jacobian_angles_to_position(&Vec3::zeros(), &g()).is_err());
    }

    #[test]
    fn law_of_sines_at_forty_five_degrees() {
        let q = position_from_angles(
            &AnglePair { alpha: std::f64::consts::FRAC_PI_4, xi: std::f64::consts::FRAC_PI_4 },
            &g(),
        )
        .unwrap();
        assert!((q.norm() - 100.0 * std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        // isoceles: equal distances to both terminals
        let (dr, ds) = g().distances(&q).unwrap();
        assert!((dr - ds).abs() < 1e-12);
    }

    #[test]
    fn axis_angles_are_rejected() {
        let r = position_from_angles(&AnglePair { alpha: 0.0, xi: 0.0 }, &g());
        assert!(matches!(r, Err(Error::DegenerateTriangle { .. })));
        let r = position_from_angles(&AnglePair { alpha: 4e-4, xi: 4e-4 }, &g());
        assert!(r.is_err());
    }

    #[test]
    fn jacobian_on_axis_follows_true_derivative() {
        let t = jacobian_angles_to_position(&Vec3::new(0.0, 0.0, 50.0), &g()).unwrap();
        assert!((t[(0, 0)] - 0.02).abs() < 1e-15);
        assert_eq!(t[(0, 1)], 0.0);
        assert!((t[(1, 0)] - 0.02).abs() < 1e-15);
        assert_eq!(t[(1, 1)], 0.0);
    }

    #[test]
    fn off_axis_stcm_roundtrip() {
        let geo = SceneGeometry::new(
            Vec3::new(-5.0, 0.0, 2.0),
            Vec3::new(10.0, 0.0, 100.0),
            PlaneBounds { x_min: -80.0, x_max: 80.0, z_min: 0.0, z_max: 100.0 },
        )
        .unwrap();
        let q = Vec3::new(40.0, 0.0, 30.0);
        let a = angles_from_position(&q, &geo).unwrap();
        let back = position_from_angles(&a, &geo).unwrap();
        assert!((back - q).norm() < 1e-9);
    }

    #[test]
    fn scatter_point_invariants() {
        let p = Vec3::new(1.0, 0.0, 1.0);
        assert!(ScatterPoint::new(p, 0.0, SpKind::Absent).is_ok());
        assert!(ScatterPoint::new(p, 0.0, SpKind::HumanLike).is_err());
        assert!(ScatterPoint::new(p, 1.0, SpKind::Absent).is_err());
        assert!(ScatterPoint::new(Vec3::new(1.0, 1.0, 1.0), 1.0, SpKind::HumanLike).is_err());
        let nue = ScatterPoint::from_rcs_db(p, 1.0, SpKind::HumanLike).unwrap();
        assert!((nue.rcs_sqrt - 10f64.powf(0.05)).abs() < 1e-15);
        assert!(ScatterPoint::new_in(&g(), Vec3::new(90.0, 0.0, 1.0), 1.0, SpKind::HumanLike).is_err());
    }

    fn angles_strategy() -> impl Strategy<Value = AnglePair> {
        // same-side angles with a non-degenerate apex
        (0.01f64..1.4, 0.01f64..1.4, any::<bool>())
            .prop_filter("apex", |(a, x, _)| a + x < 3.0)
            .prop_map(|(a, x, neg)| {
                let s = if neg { -1.0 } else { 1.0 };
                AnglePair { alpha: s * a, xi: s * x }
            })
    }

    proptest! {
        #[test]
        fn angle_roundtrip(a in angles_strategy()) {
            let q = position_from_angles(&a, &g()).unwrap();
            let b = angles_from_position(&q, &g()).unwrap();
            prop_assert!((a.alpha - b.alpha).abs() < 1e-9);
            prop_assert!((a.xi - b.xi).abs() < 1e-9);
        }

        #[test]
        fn position_roundtrip(x in -80.0f64..80.0, z in 0.5f64..99.5) {
            let q = Vec3::new(x, 0.0, z);
            let a = angles_from_position(&q, &g()).unwrap();
            prop_assume!((a.alpha + a.xi).abs() > MIN_TRIANGLE_ANGLE);
            let back = position_from_angles(&a, &g()).unwrap();
            prop_assert!((back - q).norm() < 1e-9);
        }

        #[test]
        fn law_of_sines(a in angles_strategy()) {
            let q = position_from_angles(&a, &g()).unwrap();
            let (dr, ds) = g().distances(&q).unwrap();
            let zeta = std::f64::consts::PI - a.alpha.abs() - a.xi.abs();
            let k = g().baseline() / zeta.sin();
            prop_assert!((dr / a.xi.abs().sin() - k).abs() / k < 1e-12);
            prop_assert!((ds / a.alpha.abs().sin() - k).abs() / k < 1e-12);
        }

        #[test]
        fn jacobian_matches_finite_differences(x in -80.0f64..80.0, z in 0.5f64..99.5) {
            let q = Vec3::new(x, 0.0, z);
            let t = jacobian_angles_to_position(&q, &g()).unwrap();
            let h = 1e-5;
            let mut fd = Matrix2::zeros();
            for (col, e) in [Vec3::x(), Vec3::z()].iter().enumerate() {
                let p = angles_from_position(&(q + e * h), &g()).unwrap();
                let m = angles_from_position(&(q - e * h), &g()).unwrap();
                fd[(0, col)] = (p.alpha - m.alpha) / (2.0 * h);
                fd[(1, col)] = (p.xi - m.xi) / (2.0 * h);
            }
            prop_assert!((fd - t).norm() / t.norm() < 1e-6);
        }

        #[test]
        fn jacobian_scales_inversely(x in -80.0f64..80.0, z in 0.5f64..99.5, c in 0.1f64..10.0) {
            let geo = g();
            let scaled = SceneGeometry::new(
                geo.bs_center() * c,
                geo.stcm_center() * c,
                PlaneBounds { x_min: -80.0 * c, x_max: 80.0 * c, z_min: 0.0, z_max: 100.0 * c },
            ).unwrap();
            let q = Vec3::new(x, 0.0, z);
            let t = jacobian_angles_to_position(&q, &geo).unwrap();
            let ts = jacobian_angles_to_position(&(q * c), &scaled).unwrap();
            prop_assert!((ts * c - t).norm() <= 1e-12 * t.norm());
        }
    }
}
