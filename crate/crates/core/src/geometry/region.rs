use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed Euclidean ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Closed axis-aligned box `lower <= x <= upper`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Planar square given by its center, edge length and counter-clockwise
/// rotation angle in radians. A diamond is a square rotated by pi/4.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotatedSquare {
    pub center: [f64; 2],
    pub edge: f64,
    pub angle: f64,
}

/// Closed half-space `normal . x <= offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

/// Measurable subset of a data space, built from closed primitives and
/// boolean combinations.
///
/// The serialized form is a recursive object with exactly one key:
/// `ball`, `box`, `rotsquare`, `halfspace`, `union`, `intersect` or `diff`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Region {
    #[serde(rename = "ball")]
    Ball(Ball),
    #[serde(rename = "box")]
    AxisBox(AxisBox),
    #[serde(rename = "rotsquare")]
    RotatedSquare(RotatedSquare),
    #[serde(rename = "halfspace")]
    HalfSpace(HalfSpace),
    #[serde(rename = "union")]
    Union(Vec<Region>),
    #[serde(rename = "intersect")]
    Intersection(Vec<Region>),
    #[serde(rename = "diff")]
    Difference(Box<Region>, Box<Region>),
}

/// Axis-aligned bounding box.
#[derive(Clone, Debug, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn intersect(&self, other: &Bounds) -> Bounds {
        Bounds {
            lower: zip_map(&self.lower, &other.lower, f64::max),
            upper: zip_map(&self.upper, &other.upper, f64::min),
        }
    }

    pub fn hull(&self, other: &Bounds) -> Bounds {
        Bounds {
            lower: zip_map(&self.lower, &other.lower, f64::min),
            upper: zip_map(&self.upper, &other.upper, f64::max),
        }
    }

    /// True when the interiors do not overlap (touching faces count as disjoint).
    pub fn disjoint(&self, other: &Bounds) -> bool {
        self.lower
            .iter()
            .zip(&self.upper)
            .zip(other.lower.iter().zip(&other.upper))
            .any(|((&al, &au), (&bl, &bu))| au <= bl || bu <= al)
    }

    pub fn inside(&self, other: &Bounds) -> bool {
        self.lower.iter().zip(&other.lower).all(|(a, b)| a >= b)
            && self.upper.iter().zip(&other.upper).all(|(a, b)| a <= b)
    }

    pub fn is_empty(&self) -> bool {
        self.lower.iter().zip(&self.upper).any(|(l, u)| l >= u)
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l).max(0.0))
            .product()
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

impl Region {
    pub fn ball(center: impl Into<Vec<f64>>, radius: f64) -> Region {
        Region::Ball(Ball {
            center: center.into(),
            radius,
        })
    }

    pub fn axis_box(lower: impl Into<Vec<f64>>, upper: impl Into<Vec<f64>>) -> Region {
        Region::AxisBox(AxisBox {
            lower: lower.into(),
            upper: upper.into(),
        })
    }

    pub fn rotated_square(center: [f64; 2], edge: f64, angle: f64) -> Region {
        Region::RotatedSquare(RotatedSquare {
            center,
            edge,
            angle,
        })
    }

    /// Diamond (square rotated by 45 degrees) whose vertices lie `half_diagonal`
    /// away from the center along the axes.
    pub fn diamond(center: [f64; 2], half_diagonal: f64) -> Region {
        Region::rotated_square(
            center,
            half_diagonal * std::f64::consts::SQRT_2,
            std::f64::consts::FRAC_PI_4,
        )
    }

    pub fn half_space(normal: impl Into<Vec<f64>>, offset: f64) -> Region {
        Region::HalfSpace(HalfSpace {
            normal: normal.into(),
            offset,
        })
    }

    pub fn union(parts: impl IntoIterator<Item = Region>) -> Region {
        Region::Union(parts.into_iter().collect())
    }

    pub fn intersection(parts: impl IntoIterator<Item = Region>) -> Region {
        Region::Intersection(parts.into_iter().collect())
    }

    pub fn difference(keep: Region, remove: Region) -> Region {
        Region::Difference(Box::new(keep), Box::new(remove))
    }

    /// Dimension of the ambient space, taken from the first primitive.
    pub fn dim(&self) -> usize {
        match self {
            Region::Ball(b) => b.center.len(),
            Region::AxisBox(b) => b.lower.len(),
            Region::RotatedSquare(_) => 2,
            Region::HalfSpace(h) => h.normal.len(),
            Region::Union(parts) | Region::Intersection(parts) => {
                parts.first().map_or(0, Region::dim)
            }
            Region::Difference(a, _) => a.dim(),
        }
    }

    /// Membership test without dimension checking.
    pub fn contains_unchecked(&self, p: &[f64]) -> bool {
        match self {
            Region::Ball(b) => {
                let d2: f64 = b
                    .center
                    .iter()
                    .zip(p)
                    .map(|(c, x)| (x - c) * (x - c))
                    .sum();
                d2 <= b.radius * b.radius
            }
            Region::AxisBox(b) => p
                .iter()
                .zip(b.lower.iter().zip(&b.upper))
                .all(|(x, (l, u))| l <= x && x <= u),
            Region::RotatedSquare(s) => {
                let (u, v) = s.local(p[0], p[1]);
                let h = 0.5 * s.edge;
                u.abs() <= h && v.abs() <= h
            }
            Region::HalfSpace(h) => {
                let dot: f64 = h.normal.iter().zip(p).map(|(n, x)| n * x).sum();
                dot <= h.offset
            }
            Region::Union(parts) => parts.iter().any(|r| r.contains_unchecked(p)),
            Region::Intersection(parts) => parts.iter().all(|r| r.contains_unchecked(p)),
            Region::Difference(a, b) => a.contains_unchecked(p) && !b.contains_unchecked(p),
        }
    }

    /// Closed-boundary membership test.
    pub fn contains(&self, p: &[f64]) -> Result<bool> {
        let dim = self.dim();
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.len(),
            });
        }
        Ok(self.contains_unchecked(p))
    }

    /// Bounding box, or `None` when the region is unbounded.
    pub fn bounds(&self) -> Option<Bounds> {
        match self {
            Region::Ball(b) => Some(Bounds {
                lower: b.center.iter().map(|c| c - b.radius).collect(),
                upper: b.center.iter().map(|c| c + b.radius).collect(),
            }),
            Region::AxisBox(b) => Some(Bounds {
                lower: b.lower.clone(),
                upper: b.upper.clone(),
            }),
            Region::RotatedSquare(s) => {
                let ext = 0.5 * s.edge * (s.angle.cos().abs() + s.angle.sin().abs());
                Some(Bounds {
                    lower: vec![s.center[0] - ext, s.center[1] - ext],
                    upper: vec![s.center[0] + ext, s.center[1] + ext],
                })
            }
            Region::HalfSpace(_) => None,
            Region::Union(parts) => {
                let mut acc: Option<Bounds> = None;
                for part in parts {
                    let b = part.bounds()?;
                    acc = Some(match acc {
                        Some(a) => a.hull(&b),
                        None => b,
                    });
                }
                acc
            }
            Region::Intersection(parts) => parts
                .iter()
                .filter_map(Region::bounds)
                .reduce(|a, b| a.intersect(&b)),
            Region::Difference(a, _) => a.bounds(),
        }
    }

    /// Bounding box clipped to the given outer box.
    pub fn bounds_within(&self, outer: &Bounds) -> Bounds {
        match self.bounds() {
            Some(b) => b.intersect(outer),
            None => outer.clone(),
        }
    }

    /// Default parameter count of the indicator of this region.
    ///
    /// A ball carries its center and radius, an axis box its two corners
    /// (or center and edge for a cube), a rotated square its center, edge and
    /// angle, a half-space only its offset (the normal is structural).
    /// Boolean combinations sum their operands.
    pub fn default_size(&self) -> u64 {
        match self {
            Region::Ball(b) => b.center.len() as u64 + 1,
            Region::AxisBox(b) => {
                let m = b.lower.len() as u64;
                let edge0 = b.upper[0] - b.lower[0];
                let cube = b
                    .lower
                    .iter()
                    .zip(&b.upper)
                    .all(|(l, u)| ((u - l) - edge0).abs() <= 1e-12 * edge0.abs().max(1.0));
                if cube {
                    m + 1
                } else {
                    2 * m
                }
            }
            Region::RotatedSquare(_) => 4,
            Region::HalfSpace(_) => 1,
            Region::Union(parts) | Region::Intersection(parts) => {
                parts.iter().map(Region::default_size).sum()
            }
            Region::Difference(a, b) => a.default_size() + b.default_size(),
        }
    }

    /// Structural validation. `path` prefixes error locations.
    pub fn validate(&self, path: &str) -> Result<()> {
        let dim = self.dim();
        if dim == 0 {
            return Err(Error::schema(path, "region has dimension zero"));
        }
        self.validate_dim(path, dim)
    }

    fn validate_dim(&self, path: &str, dim: usize) -> Result<()> {
        let finite = |xs: &[f64], p: String| -> Result<()> {
            if xs.iter().all(|x| x.is_finite()) {
                Ok(())
            } else {
                Err(Error::schema(p, "non-finite coordinate"))
            }
        };
        let check_dim = |got: usize, p: String| -> Result<()> {
            if got == dim {
                Ok(())
            } else {
                Err(Error::schema(
                    p,
                    format!("dimension {got} does not match {dim}"),
                ))
            }
        };
        match self {
            Region::Ball(b) => {
                let p = format!("{path}.ball");
                check_dim(b.center.len(), format!("{p}.center"))?;
                finite(&b.center, format!("{p}.center"))?;
                if !(b.radius.is_finite() && b.radius >= 0.0) {
                    return Err(Error::schema(
                        format!("{p}.radius"),
                        format!("radius must be a non-negative number, got {}", b.radius),
                    ));
                }
            }
            Region::AxisBox(b) => {
                let p = format!("{path}.box");
                check_dim(b.lower.len(), format!("{p}.lower"))?;
                check_dim(b.upper.len(), format!("{p}.upper"))?;
                finite(&b.lower, format!("{p}.lower"))?;
                finite(&b.upper, format!("{p}.upper"))?;
                if b.lower.iter().zip(&b.upper).any(|(l, u)| l > u) {
                    return Err(Error::schema(p, "lower corner exceeds upper corner"));
                }
            }
            Region::RotatedSquare(s) => {
                let p = format!("{path}.rotsquare");
                check_dim(2, p.clone())?;
                finite(&s.center, format!("{p}.center"))?;
                if !(s.edge.is_finite() && s.edge >= 0.0) {
                    return Err(Error::schema(
                        format!("{p}.edge"),
                        format!("edge must be a non-negative number, got {}", s.edge),
                    ));
                }
                if !s.angle.is_finite() {
                    return Err(Error::schema(format!("{p}.angle"), "non-finite angle"));
                }
            }
            Region::HalfSpace(h) => {
                let p = format!("{path}.halfspace");
                check_dim(h.normal.len(), format!("{p}.normal"))?;
                finite(&h.normal, format!("{p}.normal"))?;
                if h.normal.iter().all(|&n| n == 0.0) {
                    return Err(Error::schema(format!("{p}.normal"), "normal is zero"));
                }
                if !h.offset.is_finite() {
                    return Err(Error::schema(format!("{p}.offset"), "non-finite offset"));
                }
            }
            Region::Union(parts) | Region::Intersection(parts) => {
                let key = if matches!(self, Region::Union(_)) {
                    "union"
                } else {
                    "intersect"
                };
                if parts.is_empty() {
                    return Err(Error::schema(format!("{path}.{key}"), "needs at least one operand"));
                }
                for (i, part) in parts.iter().enumerate() {
                    part.validate_dim(&format!("{path}.{key}[{i}]"), dim)?;
                }
            }
            Region::Difference(a, b) => {
                a.validate_dim(&format!("{path}.diff[0]"), dim)?;
                b.validate_dim(&format!("{path}.diff[1]"), dim)?;
            }
        }
        Ok(())
    }

    /// Volume of a primitive, ignoring any enclosing space.
    pub(crate) fn primitive_volume(&self) -> Option<f64> {
        match self {
            Region::Ball(b) => Some(ball_volume(b.center.len(), b.radius)),
            Region::AxisBox(b) => Some(
                b.lower
                    .iter()
                    .zip(&b.upper)
                    .map(|(l, u)| u - l)
                    .product(),
            ),
            Region::RotatedSquare(s) => Some(s.edge * s.edge),
            _ => None,
        }
    }

    /// Conservative test that `inner` lies entirely inside `self`.
    /// Only convex primitives can enclose; a `false` answer means "unknown".
    pub(crate) fn encloses(&self, inner: &Region) -> bool {
        match inner {
            Region::Union(parts) => return parts.iter().all(|p| self.encloses(p)),
            Region::Intersection(parts) => return parts.iter().any(|p| self.encloses(p)),
            Region::Difference(a, _) => return self.encloses(a),
            Region::HalfSpace(_) => return false,
            _ => {}
        }
        match (self, inner) {
            (Region::Ball(outer), Region::Ball(b)) => {
                let d: f64 = outer
                    .center
                    .iter()
                    .zip(&b.center)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                d + b.radius <= outer.radius
            }
            (Region::RotatedSquare(sq), Region::Ball(b)) => {
                let (u, v) = sq.local(b.center[0], b.center[1]);
                let h = 0.5 * sq.edge;
                u.abs() + b.radius <= h && v.abs() + b.radius <= h
            }
            (Region::AxisBox(_), Region::Ball(_)) => match inner.bounds() {
                Some(ib) => ib.inside(&self.bounds().expect("box is bounded")),
                None => false,
            },
            (Region::Ball(_) | Region::AxisBox(_) | Region::RotatedSquare(_), _) => {
                match inner.corners() {
                    Some(corners) => corners.iter().all(|c| self.contains_unchecked(c)),
                    None => false,
                }
            }
            _ => false,
        }
    }

    /// Vertices of a polytope primitive (boxes up to 12 dimensions, squares).
    fn corners(&self) -> Option<Vec<Vec<f64>>> {
        match self {
            Region::AxisBox(b) if b.lower.len() <= 12 => {
                let m = b.lower.len();
                Some(
                    (0..1usize << m)
                        .map(|mask| {
                            (0..m)
                                .map(|i| if mask >> i & 1 == 1 { b.upper[i] } else { b.lower[i] })
                                .collect()
                        })
                        .collect(),
                )
            }
            Region::RotatedSquare(s) => Some(s.vertices().iter().map(|v| v.to_vec()).collect()),
            _ => None,
        }
    }
}

impl RotatedSquare {
    /// Coordinates of `(x, y)` in the square's own frame.
    pub(crate) fn local(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.angle.sin_cos();
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        (c * dx + s * dy, -s * dx + c * dy)
    }

    pub(crate) fn vertices(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.angle.sin_cos();
        let h = 0.5 * self.edge;
        let mut out = [[0.0; 2]; 4];
        for (k, (u, v)) in [(h, h), (-h, h), (-h, -h), (h, -h)].into_iter().enumerate() {
            out[k] = [
                self.center[0] + c * u - s * v,
                self.center[1] + s * u + c * v,
            ];
        }
        out
    }

    /// The four edges as half-planes `a*x + b*y <= c`.
    pub(crate) fn half_planes(&self) -> [[f64; 3]; 4] {
        let (s, c) = self.angle.sin_cos();
        let h = 0.5 * self.edge;
        let (cx, cy) = (self.center[0], self.center[1]);
        // u = c(x-cx) + s(y-cy), v = -s(x-cx) + c(y-cy)
        [
            [c, s, h + c * cx + s * cy],
            [-c, -s, h - c * cx - s * cy],
            [-s, c, h - s * cx + c * cy],
            [s, -c, h + s * cx - c * cy],
        ]
    }
}

/// Volume of the m-dimensional ball of radius `r`.
pub fn ball_volume(m: usize, r: f64) -> f64 {
    // V_0 = 1, V_1 = 2r, V_m = V_{m-2} * 2 pi r^2 / m
    let mut even = 1.0;
    let mut odd = 2.0 * r;
    if m == 0 {
        return even;
    }
    if m == 1 {
        return odd;
    }
    let step = 2.0 * std::f64::consts::PI * r * r;
    let mut k = 2;
    loop {
        if k % 2 == 0 {
            even *= step / k as f64;
        } else {
            odd *= step / k as f64;
        }
        if k == m {
            return if m % 2 == 0 { even } else { odd };
        }
        k += 1;
    }
}

/// Parses and validates a region description.
pub fn build_region(spec: &serde_json::Value) -> Result<Region> {
    let region: Region = serde_path_to_error::deserialize(spec)
        .map_err(|e| Error::schema(format!("region.{}", e.path()), e.inner().to_string()))?;
    region.validate("region")?;
    Ok(region)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::f64::consts::PI;

    #[test]
    fn ball_membership_is_closed() {
        let b = Region::ball([2.0, 2.0], 1.0);
        assert!(b.contains(&[2.0, 2.0]).unwrap());
        assert!(b.contains(&[3.0, 2.0]).unwrap());
        assert!(!b.contains(&[3.01, 2.0]).unwrap());
    }

    #[test]
    fn difference_removes_half() {
        let r = Region::difference(
            Region::ball([5.0, 2.0], 1.0),
            Region::half_space([1.0, 0.0], 5.0),
        );
        assert!(!r.contains(&[4.5, 2.0]).unwrap());
        assert!(r.contains(&[5.5, 2.0]).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let b = Region::ball([2.0, 2.0], 1.0);
        assert!(matches!(
            b.contains(&[1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn diamond_matches_line_description() {
        // x-3 <= y <= x+1 and -x+5 <= y <= -x+9
        let d = Region::diamond([4.0, 3.0], 2.0);
        let by_lines = |x: f64, y: f64| x - 3.0 <= y && y <= x + 1.0 && -x + 5.0 <= y && y <= -x + 9.0;
        for i in 0..=80 {
            for j in 0..=60 {
                let (x, y) = (i as f64 * 0.1 + 0.013, j as f64 * 0.1 + 0.007);
                assert_eq!(d.contains_unchecked(&[x, y]), by_lines(x, y), "at ({x}, {y})");
            }
        }
    }

    #[test]
    fn builds_from_json() {
        let r = build_region(&json!({"ball": {"center": [2, 2], "radius": 1}})).unwrap();
        assert_eq!(r, Region::ball([2.0, 2.0], 1.0));

        let d = build_region(&json!({"diff": [
            {"ball": {"center": [2, 2], "radius": 1}},
            {"ball": {"center": [2, 2], "radius": 0.5}}
        ]}))
        .unwrap();
        assert!(matches!(d, Region::Difference(_, _)));

        let sq = build_region(&json!({"rotsquare": {"center": [4, 3], "edge": 2.828, "angle": 0.7854}})).unwrap();
        assert!(sq.contains(&[4.0, 3.0]).unwrap());
        assert!(sq.contains(&[5.99, 3.0]).unwrap());
        assert!(!sq.contains(&[5.0, 4.2]).unwrap());
    }

    #[test]
    fn rejects_bad_descriptions() {
        let err = build_region(&json!({"ball": {"center": [2, 2], "radius": -1}})).unwrap_err();
        assert!(err.to_string().contains("region.ball.radius"), "{err}");
        assert!(build_region(&json!({"cone": {}})).is_err());
        let err = build_region(&json!({"rotsquare": {"center": [0, 0], "edge": -2, "angle": 0}})).unwrap_err();
        assert!(err.to_string().contains("edge"), "{err}");
        let err = build_region(&json!({"union": [
            {"ball": {"center": [0, 0], "radius": 1}},
            {"ball": {"center": [0, 0, 0], "radius": 1}}
        ]}))
        .unwrap_err();
        assert!(err.to_string().contains("union[1]"), "{err}");
    }

    #[test]
    fn size_accounting() {
        let ball = Region::ball([2.0, 2.0], 1.0);
        assert_eq!(ball.default_size(), 3);
        let two = Region::union([ball.clone(), Region::ball([5.0, 2.0], 1.0)]);
        assert_eq!(two.default_size(), 6);
        let half = Region::intersection([ball.clone(), Region::half_space([1.0, 0.0], 2.0)]);
        assert_eq!(half.default_size(), 4);
        let quarter = Region::intersection([
            ball,
            Region::half_space([1.0, 0.0], 2.0),
            Region::half_space([0.0, -1.0], -2.0),
        ]);
        assert_eq!(quarter.default_size(), 5);
        assert_eq!(Region::diamond([4.0, 3.0], 2.0).default_size(), 4);
        assert_eq!(Region::axis_box([0.0, 0.0], [1.0, 1.0]).default_size(), 3);
        assert_eq!(Region::axis_box([0.0, 0.0], [2.0, 1.0]).default_size(), 4);
        let diff = Region::difference(Region::diamond([6.0, 3.0], 2.0), Region::diamond([4.0, 3.0], 2.0));
        assert_eq!(diff.default_size(), 8);
    }

    #[test]
    fn ball_volumes() {
        assert!((ball_volume(2, 1.0) - PI).abs() < 1e-15);
        assert!((ball_volume(3, 2.0) - 4.0 / 3.0 * PI * 8.0).abs() < 1e-12);
        assert!((ball_volume(1, 0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn enclosure() {
        let outer = Region::ball([4.0, 4.0], 2.0);
        let inner = Region::ball([4.0, 4.0], 1.0);
        assert!(outer.encloses(&inner));
        assert!(!inner.encloses(&outer));
        let d = Region::diamond([4.0, 3.0], 2.0);
        assert!(d.encloses(&Region::ball([4.0, 3.0], 1.0)));
        assert!(!d.encloses(&Region::ball([4.0, 3.0], 1.5)));
        assert!(Region::axis_box([0.0, 0.0], [10.0, 10.0]).encloses(&d));
    }
}
