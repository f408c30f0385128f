//! Angular geometry for distal pointing.
//!
//! Directions are unit vectors seen from the viewpoint. The forward axis is
//! `+z`, `+x` points right and `+y` points up, so azimuth/elevation pairs map
//! to `(cos el · sin az, sin el, cos el · cos az)`.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Size of the start object in the hemispherical-grid task, in degrees.
pub const START_OBJECT_SIZE_DEG: f64 = 1.0;

/// A unit direction from the viewpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct Direction3 {
    x: f64,
    y: f64,
    z: f64,
}

impl Direction3 {
    /// Normalizes `(x, y, z)`; rejects zero and non-finite vectors.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (x * x + y * y + z * z).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::ZeroDirection);
        }
        Ok(Self {
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    /// Builds a direction from components that are already unit length, keeping
    /// them bit-for-bit when they are (used by deserialization).
    pub fn from_unit(x: f64, y: f64, z: f64) -> Result<Self> {
        let n2 = x * x + y * y + z * z;
        if (n2 - 1.0).abs() <= 1e-12 {
            Ok(Self { x, y, z })
        } else {
            Self::new(x, y, z)
        }
    }

    pub fn forward() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            z: 1.0,
        }
    }

    /// Direction at the given azimuth (positive right) and elevation (positive up).
    pub fn from_az_el(az_deg: f64, el_deg: f64) -> Self {
        let (az, el) = (az_deg.to_radians(), el_deg.to_radians());
        Self {
            x: el.cos() * az.sin(),
            y: el.sin(),
            z: el.cos() * az.cos(),
        }
    }

    /// `(azimuth, elevation)` in degrees.
    pub fn az_el(&self) -> (f64, f64) {
        let el = self.y.clamp(-1.0, 1.0).asin().to_degrees();
        let az = self.x.atan2(self.z).to_degrees();
        (az, el)
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(&self, other: &Direction3) -> f64 {
        dot(self.to_array(), other.to_array())
    }

    /// Point reached by rotating `self` by `angle_deg` along the great circle
    /// toward `toward`. When the two are (anti)parallel an arbitrary
    /// perpendicular is used.
    pub fn rotated_toward(&self, toward: &Direction3, angle_deg: f64) -> Direction3 {
        let p = self.to_array();
        let mut tangent = sub(toward.to_array(), scale(p, self.dot(toward)));
        if norm(tangent) < 1e-12 {
            tangent = any_perpendicular(p);
        }
        let tangent = normalize(tangent);
        let a = angle_deg.to_radians();
        let v = add(scale(p, a.cos()), scale(tangent, a.sin()));
        Direction3::new(v[0], v[1], v[2]).expect("rotation of a unit vector is nonzero")
    }

    /// Point at angular distance `radius_deg` from `self` in the direction given
    /// by `bearing_rad`, measured in the local tangent frame (0 = local "up").
    pub fn offset(&self, radius_deg: f64, bearing_rad: f64) -> Direction3 {
        let (e1, e2) = tangent_basis(self.to_array());
        let tangent = add(scale(e2, bearing_rad.cos()), scale(e1, bearing_rad.sin()));
        let a = radius_deg.to_radians();
        let v = add(scale(self.to_array(), a.cos()), scale(tangent, a.sin()));
        Direction3::new(v[0], v[1], v[2]).expect("offset of a unit vector is nonzero")
    }

    /// Spherical linear interpolation; `s = 0` gives `self`, `s = 1` gives `to`.
    pub fn slerp(&self, to: &Direction3, s: f64) -> Direction3 {
        let total = angular_distance(self, to);
        if total < 1e-12 {
            return *self;
        }
        self.rotated_toward(to, total * s)
    }
}

impl TryFrom<[f64; 3]> for Direction3 {
    type Error = Error;

    fn try_from(v: [f64; 3]) -> Result<Self> {
        Direction3::from_unit(v[0], v[1], v[2])
    }
}

impl From<Direction3> for [f64; 3] {
    fn from(d: Direction3) -> Self {
        d.to_array()
    }
}

/// One task difficulty: angular amplitude α and angular target size ω, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConditionRepr", into = "ConditionRepr")]
pub struct AngularCondition {
    alpha_deg: f64,
    omega_deg: f64,
}

#[derive(Serialize, Deserialize)]
struct ConditionRepr {
    alpha_deg: f64,
    omega_deg: f64,
}

impl TryFrom<ConditionRepr> for AngularCondition {
    type Error = Error;

    fn try_from(r: ConditionRepr) -> Result<Self> {
        AngularCondition::new(r.alpha_deg, r.omega_deg)
    }
}

impl From<AngularCondition> for ConditionRepr {
    fn from(c: AngularCondition) -> Self {
        ConditionRepr {
            alpha_deg: c.alpha_deg,
            omega_deg: c.omega_deg,
        }
    }
}

impl AngularCondition {
    /// Requires `α > 0`, `ω > 0` and `α ≥ ω/2` so the start lies outside the target.
    pub fn new(alpha_deg: f64, omega_deg: f64) -> Result<Self> {
        if !(alpha_deg.is_finite() && alpha_deg > 0.0) {
            return Err(Error::InfeasibleGeometry(format!(
                "alpha must be positive, got {alpha_deg}"
            )));
        }
        if !(omega_deg.is_finite() && omega_deg > 0.0) {
            return Err(Error::InfeasibleGeometry(format!(
                "omega must be positive, got {omega_deg}"
            )));
        }
        if alpha_deg < omega_deg / 2.0 {
            return Err(Error::InfeasibleGeometry(format!(
                "alpha {alpha_deg} is below omega/2 = {}",
                omega_deg / 2.0
            )));
        }
        Ok(Self {
            alpha_deg,
            omega_deg,
        })
    }

    pub fn alpha_deg(&self) -> f64 {
        self.alpha_deg
    }

    pub fn omega_deg(&self) -> f64 {
        self.omega_deg
    }

    /// Total order by `(α, ω)`.
    pub fn cmp_key(&self, other: &Self) -> std::cmp::Ordering {
        self.alpha_deg
            .total_cmp(&other.alpha_deg)
            .then(self.omega_deg.total_cmp(&other.omega_deg))
    }

    pub(crate) fn key_bits(&self) -> (u64, u64) {
        (self.alpha_deg.to_bits(), self.omega_deg.to_bits())
    }
}

/// A start object and a target placed in view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacedTrial {
    pub start_center: Direction3,
    pub target_center: Direction3,
    pub start_size_deg: f64,
    pub target_size_deg: f64,
    /// Nominal condition. For ISO circles with an even target count the true
    /// movement amplitude can differ slightly; see [`PlacedTrial::movement_amplitude_deg`].
    pub condition: AngularCondition,
}

impl PlacedTrial {
    pub fn new(
        start_center: Direction3,
        target_center: Direction3,
        condition: AngularCondition,
    ) -> Self {
        Self {
            start_center,
            target_center,
            start_size_deg: START_OBJECT_SIZE_DEG,
            target_size_deg: condition.omega_deg(),
            condition,
        }
    }

    /// Actual angular distance between the start and target centers.
    pub fn movement_amplitude_deg(&self) -> f64 {
        angular_distance(&self.start_center, &self.target_center)
    }
}

/// Hit coordinates normalized to the target radius, movement along `+x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hitpoint2D {
    pub x: f64,
    pub y: f64,
}

/// Angle between two directions in degrees, in `[0, 180]`.
pub fn angular_distance(a: &Direction3, b: &Direction3) -> f64 {
    // atan2 form: same value as arccos(clamp(dot)) but accurate near 0 and 180.
    let c = cross(a.to_array(), b.to_array());
    norm(c).atan2(a.dot(b)).to_degrees()
}

/// Angle subtended by a sphere of `radius_m` seen from `distance_m`.
pub fn angular_size_of_sphere(radius_m: f64, distance_m: f64) -> Result<f64> {
    if !(distance_m.is_finite() && distance_m > 0.0) {
        return Err(Error::InfeasibleGeometry(format!(
            "distance must be positive, got {distance_m}"
        )));
    }
    if !(radius_m.is_finite() && radius_m >= 0.0) {
        return Err(Error::InfeasibleGeometry(format!(
            "radius must be nonnegative, got {radius_m}"
        )));
    }
    if radius_m >= distance_m {
        return Err(Error::InfeasibleGeometry(format!(
            "radius {radius_m} m does not fit in front of a viewer at {distance_m} m"
        )));
    }
    Ok(2.0 * (radius_m / distance_m).asin().to_degrees())
}

/// Targets of one ISO 9241-411 circle.
#[derive(Debug, Clone, PartialEq)]
pub struct IsoCircle {
    pub condition: AngularCondition,
    pub view_distance_m: f64,
    /// Target centers counterclockwise from the top, as seen by the viewer.
    pub centers: Vec<Direction3>,
}

impl IsoCircle {
    /// Radius of a spherical target of angular size ω at the viewing distance.
    pub fn target_radius_m(&self) -> f64 {
        self.view_distance_m * (self.condition.omega_deg() / 2.0).to_radians().sin()
    }

    /// Point on the layout circle diametrically opposite target `i`.
    pub fn opposite_point(&self, i: usize) -> Direction3 {
        let n = self.centers.len();
        circle_point(self.condition.alpha_deg(), i as f64 + n as f64 / 2.0, n)
    }
}

fn circle_point(alpha_deg: f64, position: f64, n: usize) -> Direction3 {
    let half = (alpha_deg / 2.0).to_radians();
    let theta = std::f64::consts::TAU * position / n as f64;
    Direction3::new(
        half.sin() * -theta.sin(),
        half.sin() * theta.cos(),
        half.cos(),
    )
    .expect("circle point is nonzero")
}

/// Places `n_targets` on a circle around the forward axis such that
/// diametrically opposite targets are `α` apart.
pub fn place_iso_circle(
    n_targets: usize,
    condition: AngularCondition,
    view_distance_m: f64,
) -> Result<IsoCircle> {
    if n_targets < 3 {
        return Err(Error::InfeasibleGeometry(format!(
            "an ISO circle needs at least 3 targets, got {n_targets}"
        )));
    }
    if condition.alpha_deg() >= 180.0 {
        return Err(Error::InfeasibleGeometry(format!(
            "alpha {} cannot be spanned by a circle in front of the viewer",
            condition.alpha_deg()
        )));
    }
    if !(view_distance_m.is_finite() && view_distance_m > 0.0) {
        return Err(Error::InfeasibleGeometry(format!(
            "view distance must be positive, got {view_distance_m}"
        )));
    }
    let centers = (0..n_targets)
        .map(|i| circle_point(condition.alpha_deg(), i as f64, n_targets))
        .collect();
    Ok(IsoCircle {
        condition,
        view_distance_m,
        centers,
    })
}

/// Visiting order for an ISO circle: each step jumps to the (nearly) opposite
/// target. Odd `n` uses a constant step of `⌈n/2⌉`; even `n` alternates
/// `n/2` and `n/2 + 1`. Counts below 3 return the identity order.
pub fn iso_order(n_targets: usize) -> Vec<usize> {
    let n = n_targets;
    if n < 3 {
        return (0..n).collect();
    }
    let mut order = Vec::with_capacity(n);
    let mut cur = 0usize;
    for i in 0..n {
        order.push(cur);
        let step = if n % 2 == 1 {
            n.div_ceil(2)
        } else if i % 2 == 0 {
            n / 2
        } else {
            n / 2 + 1
        };
        cur = (cur + step) % n;
    }
    order
}

/// One slot of the hemispherical grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSlot {
    pub az_deg: f64,
    pub el_deg: f64,
    pub direction: Direction3,
}

/// Azimuth/elevation lattice with `grid_spacing_deg` pitch, clipped to the
/// rectangular field of view (`|az| ≤ fov_h/2`, `|el| ≤ fov_v/2`).
/// Slots are ordered by elevation then azimuth, both ascending.
pub fn place_hemigrid(grid_spacing_deg: f64, fov_h_deg: f64, fov_v_deg: f64) -> Vec<GridSlot> {
    if !(grid_spacing_deg.is_finite() && grid_spacing_deg > 0.0) {
        return Vec::new();
    }
    let steps = |half: f64, cap: f64| -> Vec<f64> {
        let half = half.min(cap);
        let k = ((half + 1e-9) / grid_spacing_deg).floor().max(0.0) as i64;
        (-k..=k).map(|i| i as f64 * grid_spacing_deg).collect()
    };
    let azs = steps(fov_h_deg / 2.0, 180.0);
    let els = steps(fov_v_deg / 2.0, 90.0 - 1e-9);
    let mut slots = Vec::with_capacity(azs.len() * els.len());
    for &el in &els {
        for &az in &azs {
            slots.push(GridSlot {
                az_deg: az,
                el_deg: el,
                direction: Direction3::from_az_el(az, el),
            });
        }
    }
    slots
}

/// Which part of the target must lie inside the field of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FovFit {
    /// Start and target centers lie in the clip (always true for grid slots).
    #[default]
    CentersOnly,
    /// The whole target disk lies in the azimuth/elevation clip.
    TargetDiskInside,
}

/// Constraints for choosing start/target slot pairs on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementConfig {
    pub fov_h_deg: f64,
    pub fov_v_deg: f64,
    pub fov_fit: FovFit,
    /// Allowed mismatch between a slot pair's angular distance and α.
    pub tolerance_deg: f64,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            fov_h_deg: 104.0,
            fov_v_deg: 98.0,
            fov_fit: FovFit::CentersOnly,
            tolerance_deg: 1e-6,
        }
    }
}

impl PlacementConfig {
    fn target_fits(&self, slot: &GridSlot, omega_deg: f64) -> bool {
        match self.fov_fit {
            FovFit::CentersOnly => true,
            FovFit::TargetDiskInside => {
                let r = omega_deg / 2.0;
                slot.az_deg.abs() + r <= self.fov_h_deg / 2.0 + 1e-9
                    && slot.el_deg.abs() + r <= self.fov_v_deg / 2.0 + 1e-9
            }
        }
    }
}

/// All ordered `(start, target)` slot index pairs admissible for `condition`.
pub fn admissible_pairs(
    slots: &[GridSlot],
    condition: AngularCondition,
    config: &PlacementConfig,
) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (ti, target) in slots.iter().enumerate() {
        if !config.target_fits(target, condition.omega_deg()) {
            continue;
        }
        for (si, start) in slots.iter().enumerate() {
            if si == ti {
                continue;
            }
            let d = angular_distance(&start.direction, &target.direction);
            if (d - condition.alpha_deg()).abs() <= config.tolerance_deg {
                out.push((si, ti));
            }
        }
    }
    out
}

/// Uniformly random admissible start/target pair for `condition`.
pub fn pair_for_condition(
    slots: &[GridSlot],
    condition: AngularCondition,
    config: &PlacementConfig,
    rng_seed: u64,
) -> Result<PlacedTrial> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let pairs = admissible_pairs(slots, condition, config);
    pick_pair(slots, &pairs, condition, &mut rng)
}

pub(crate) fn pick_pair<R: rand::Rng + ?Sized>(
    slots: &[GridSlot],
    pairs: &[(usize, usize)],
    condition: AngularCondition,
    rng: &mut R,
) -> Result<PlacedTrial> {
    let &(si, ti) = pairs
        .choose(rng)
        .ok_or_else(|| Error::InfeasibleCondition {
            condition,
            reason: "no slot pair at this amplitude satisfies the field-of-view constraint".into(),
        })?;
    Ok(PlacedTrial::new(
        slots[si].direction,
        slots[ti].direction,
        condition,
    ))
}

/// Normalizes a 3D hit into the target's frame: the start projected onto the
/// target plane lies on the negative x-axis and the target disk has radius 1.
///
/// The plane is tangent to the unit sphere at the target center and points are
/// carried onto it by central (gnomonic) projection from the viewpoint.
pub fn project_hitpoint(
    start_center: &Direction3,
    target_center: &Direction3,
    target_radius_angular_deg: f64,
    hit: &Direction3,
) -> Result<Hitpoint2D> {
    if !(target_radius_angular_deg > 0.0 && target_radius_angular_deg < 90.0) {
        return Err(Error::UndefinedProjection(format!(
            "target radius {target_radius_angular_deg} must be in (0, 90) degrees"
        )));
    }
    let t = target_center.to_array();
    let on_plane = |d: &Direction3, what: &str| -> Result<[f64; 3]> {
        let c = d.dot(target_center);
        if c <= 1e-9 {
            return Err(Error::UndefinedProjection(format!(
                "{what} is at or beyond 90 degrees from the target center"
            )));
        }
        // translate the target center to the origin
        Ok(sub(scale(d.to_array(), 1.0 / c), t))
    };
    let start = on_plane(start_center, "start")?;
    let h = on_plane(hit, "hit")?;
    let start_len = norm(start);
    if start_len < 1e-12 {
        return Err(Error::UndefinedProjection(
            "start coincides with the target center".into(),
        ));
    }
    // in-plane frame: x points from the start toward the target, z is the plane normal
    let ex = scale(start, -1.0 / start_len);
    let ey = cross(t, ex);
    let radius = target_radius_angular_deg.to_radians().tan();
    Ok(Hitpoint2D {
        x: dot(h, ex) / radius,
        y: dot(h, ey) / radius,
    })
}

pub(crate) type V3 = [f64; 3];

pub(crate) fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: V3, b: V3) -> V3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn add(a: V3, b: V3) -> V3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn scale(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub(crate) fn norm(a: V3) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn normalize(a: V3) -> V3 {
    scale(a, 1.0 / norm(a))
}

fn any_perpendicular(p: V3) -> V3 {
    let axis = if p[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    normalize(cross(p, axis))
}

/// Orthonormal tangent basis `(right, up)` at `p`, using world up where possible.
fn tangent_basis(p: V3) -> (V3, V3) {
    let up = [0.0, 1.0, 0.0];
    let mut right = cross(up, p);
    if norm(right) < 1e-9 {
        right = any_perpendicular(p);
    }
    let right = normalize(right);
    let local_up = normalize(cross(p, right));
    (right, local_up)
}
